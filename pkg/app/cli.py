# app/cli.py

"""
Command-line interface for HILONet.

Subcommands:
    gen-demos  Roll out the scripted expert and write a ``.hilodemo`` file.
    train      Train HILONet (or the TSRE baseline with ``--algo tsre``) into a run directory.
    eval       Evaluate a trained run, the scripted expert or the random policy.
    ablate     Train the four ablation variants from one seed.
    verify     Value-inequality sweep and random gradient checks.
    plot       SVG learning curves and (x, y) trajectory plots.

Exit codes: 0 on success, 1 on runtime failure, 2 on usage or configuration errors.
"""

import argparse
import logging
from pathlib import Path

from app.config import DEFAULT_DEMO_COUNTS, Config
from app.demonstrations import load_demos, save_demos
from app.environments import CyclePattern, PointNav2D, generate_demonstrations, make_env, rollout
from app.exceptions import ConfigError, DivergenceError, HiloError
from app.nn import random_gradient_checks
from app.plotting import TWO_D_ENVIRONMENTS, plot_curves, plot_trajectories
from app.policy import load_checkpoint, save_checkpoint
from app.rewards import value_inequality_sweep
from app.trainer import (ABLATION_VARIANTS, FlatController, HierarchicalController, LearningCurve,
                         evaluate_controller, evaluate_expert, evaluate_random, resolve_demos,
                         run_fingerprint, train, train_tsre)
from app.utils import CHECKPOINT_NAME, CURVE_NAME, RunManifest, ensure_run_dir, list_snapshots, snapshot_path
from app.validation import ENV_NAMES, parse_overrides

GRADIENT_TOLERANCE = 1e-4
EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


def _positive_int(value):
    number = int(value)
    if number < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {value}")
    return number


def _print_point(point):
    print(f"step {point.env_steps:>8d}  return {point.mean_return:10.3f}  "
          f"success {point.success_rate:5.2f}  length {point.mean_length:7.1f}", flush=True)


def _run_overrides(args):
    overrides = parse_overrides(getattr(args, 'set', None))
    for flag, key in (('seed', 'seed'), ('algo', 'algo'), ('env', 'env_name'), ('demos', 'demo_path')):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    return overrides


def _trajectory_markers(env_name):
    if env_name == 'pointnav':
        return PointNav2D.GOAL, (PointNav2D.GOAL, PointNav2D.GOAL_RADIUS)
    if env_name == 'cyclepattern':
        return CyclePattern.WAYPOINTS, None
    return None, None


def cmd_gen_demos(env_name, n, seed, out_path):
    """
    Generate expert demonstrations and write them as ``.hilodemo``.

    Returns:
        Path: The written demo file.
    """
    if n is None:
        n = DEFAULT_DEMO_COUNTS[make_env(env_name).spec.name]
    if n < 1:
        raise ConfigError(f"--n must be positive, got {n}", errors={'n': ['must be positive']})
    env = make_env(env_name)
    demos = generate_demonstrations(env, n, seed)
    path = save_demos(demos, out_path)

    summary = demos.summary()
    print(f"{summary['env_name']}: {summary['trajectories']} trajectories, length "
          f"min {summary['length_min']} / mean {summary['length_mean']:.1f} / max {summary['length_max']}")

    run_dir = Path(path).parent
    manifest = RunManifest('gen-demos', config={'env_name': env.spec.name, 'n_demos': n, 'demo_seed': seed},
                           seeds=[seed], fingerprint=demos.fingerprint())
    manifest.add_artifact('demos', path, run_dir)
    manifest.write(run_dir)
    return path


def _checkpoint_extra(config, env_steps):
    return {'algo': config.algo, 'env_name': config.env_name, 'seed': config.seed, 'env_steps': env_steps}


def _snapshot_writer(run_dir, config, written):
    """Callback for ``train``/``train_tsre`` saving the agents at every evaluation point into ``written``."""
    def on_snapshot(env_steps, agents):
        written.append(save_checkpoint(snapshot_path(run_dir, env_steps), agents,
                                       extra=_checkpoint_extra(config, env_steps)))
    return on_snapshot


def _write_run(run_dir, config, result, demos, command, snapshots=()):
    curve_path = result.curve.write_csv(Path(run_dir) / CURVE_NAME)
    agents = {'low': result.low} if result.high is None else {'high': result.high, 'low': result.low}
    checkpoint_path = save_checkpoint(Path(run_dir) / CHECKPOINT_NAME, agents,
                                      extra=_checkpoint_extra(config, result.env_steps))
    config_path = Config.save_config(config, Path(run_dir) / 'config.yaml')

    manifest = RunManifest(command, config=config.to_dict(), seeds=[config.seed],
                           fingerprint=run_fingerprint(config, demos))
    if config.demo_path:
        manifest.add_input('demos', config.demo_path)
    manifest.add_artifact('curve', curve_path, run_dir)
    manifest.add_artifact('checkpoint', checkpoint_path, run_dir)
    for path in snapshots:
        manifest.add_artifact(Path(path).stem, path, run_dir)
    manifest.add_artifact('config', config_path, run_dir)
    manifest.write(run_dir)


def cmd_train(config_path, overrides, out_dir):
    """
    Train one run and write its curve, checkpoints, configuration and manifest.

    Besides the final ``checkpoint.npz`` the agents are saved under ``snapshots/`` at every
    evaluation point.

    Args:
        config_path (str or None): YAML configuration; defaults to ``config/config.yaml``.
        overrides (dict): Values that win over the file (``--set`` and dedicated flags).
        out_dir (str or Path): Run directory.

    Returns:
        Path: The run directory.
    """
    config = Config.load_config(config_path, overrides)
    demos = resolve_demos(config)
    run_dir = ensure_run_dir(out_dir)
    trainer = train_tsre if config.algo == 'tsre' else train
    logging.info(f"Starting {config.algo} run in {run_dir}")
    snapshots = []
    try:
        result = trainer(config, demos, on_eval=_print_point,
                         on_snapshot=_snapshot_writer(run_dir, config, snapshots))
    except DivergenceError as e:
        if e.curve is not None:
            e.curve.write_csv(run_dir / CURVE_NAME)
            logging.error(f"Partial curve with {len(e.curve)} points written to {run_dir / CURVE_NAME}")
        raise
    _write_run(run_dir, config, result, demos, 'train', snapshots)
    return run_dir


def cmd_ablate(config_path, overrides, out_dir):
    """
    Train every ablation variant into ``<out_dir>/<variant>/`` and overlay their curves.

    Returns:
        dict: Variant name -> LearningCurve.
    """
    config = Config.load_config(config_path, overrides)
    demos = resolve_demos(config)
    run_dir = ensure_run_dir(out_dir)
    base = config.with_overrides(disable_hindsight=False, disable_delay=False, double_high_buffer=False)
    manifest = RunManifest('ablate', config=base.to_dict(), seeds=[base.seed],
                           fingerprint=run_fingerprint(base, demos))
    if base.demo_path:
        manifest.add_input('demos', base.demo_path)

    curves = {}
    for name, flags in ABLATION_VARIANTS.items():
        variant = base.with_overrides(**flags)
        variant_dir = ensure_run_dir(run_dir / name)
        print(f"== {name}", flush=True)
        snapshots = []
        result = train(variant, demos, on_eval=_print_point,
                       on_snapshot=_snapshot_writer(variant_dir, variant, snapshots))
        _write_run(variant_dir, variant, result, demos, f"ablate:{name}", snapshots)
        curves[name] = result.curve
        manifest.add_artifact(name, variant_dir / CURVE_NAME, run_dir)

    for path in plot_curves(curves, run_dir, prefix='ablation'):
        manifest.add_artifact(path.stem, path, run_dir)
    manifest.write(run_dir)
    return curves


def load_run(run_dir, checkpoint=None):
    """
    Rebuild the environment and greedy controller of a trained run.

    Args:
        run_dir (str or Path): Run directory with ``config.yaml``.
        checkpoint (str or Path, optional): A snapshot to load instead of the final checkpoint.

    Returns:
        tuple: (TrainConfig, Environment, controller)
    """
    run_dir = Path(run_dir)
    config = Config.load_config(run_dir / 'config.yaml')
    agents, _ = load_checkpoint(checkpoint or run_dir / CHECKPOINT_NAME)
    env = make_env(config.env_name)
    if 'high' not in agents:
        return config, env, FlatController(agents['low'], env.spec.max_episode_steps)
    demos = resolve_demos(config)
    return config, env, HierarchicalController(agents['high'], agents['low'], demos, config.delta_t)


def cmd_eval(run_dir=None, env_name=None, episodes=10, seed=0, expert=False, random=False):
    """
    Evaluate a trained run or a reference policy and print the metrics.

    Returns:
        EvalResult
    """
    if expert or random:
        if env_name is None:
            raise ConfigError("--env is required with --expert/--random", errors={'env': ['required']})
        env = make_env(env_name)
        metrics = evaluate_expert(env, episodes, seed) if expert else evaluate_random(env, episodes, seed)
        label = 'expert' if expert else 'random'
    else:
        if run_dir is None:
            raise ConfigError("eval needs --run, --expert or --random", errors={'run': ['required']})
        config, env, controller = load_run(run_dir)
        metrics = evaluate_controller(env, controller, episodes, seed)
        label = f"{config.algo} ({run_dir})"
    print(f"{label} on {env.spec.name}: return {metrics.mean_return:.3f}  success {metrics.success_rate:.2f}  "
          f"length {metrics.mean_length:.1f}  [{episodes} episodes, seed {seed}]")
    return metrics


def cmd_verify(n_networks=20, seed=0):
    """
    Print the value-inequality table and the gradient-check summary.

    Returns:
        int: 0 iff every inequality holds and every gradient check passes.
    """
    checks = value_inequality_sweep()
    print(f"{'gamma':>6} {'T':>4} {'dt':>4} {'V_follow':>12} {'V_jump':>12}  holds")
    for c in checks:
        print(f"{c.gamma:>6} {c.horizon:>4} {c.delta_t:>4} {c.v_follow:>12.6f} {c.v_jump:>12.6f}  {c.holds}")
    value_failures = [c for c in checks if not c.holds]

    reports = random_gradient_checks(n_networks=n_networks, seed=seed)
    gradient_failures = [r for r in reports if not r['max_relative_error'] < GRADIENT_TOLERANCE]
    worst = max(r['max_relative_error'] for r in reports)
    print(f"gradient checks: {len(reports) - len(gradient_failures)}/{len(reports)} passed, "
          f"max relative error {worst:.3e} (tolerance {GRADIENT_TOLERANCE:g})")
    for r in gradient_failures:
        print(f"  FAILED network {r['layer_sizes']} ({r['output_activation']}): "
              f"relative error {r['max_relative_error']:.3e}")
    for c in value_failures:
        print(f"  FAILED inequality gamma={c.gamma} T={c.horizon} delta_t={c.delta_t}")

    if value_failures or gradient_failures:
        logging.error(f"Verification failed: {len(value_failures)} inequality and "
                      f"{len(gradient_failures)} gradient failures")
        return EXIT_FAILURE
    return EXIT_OK


def cmd_plot(run_dirs, out_dir, demo_path=None, episodes=5, seed=0):
    """
    Overlay the learning curves of ``run_dirs`` and draw (x, y) paths for 2-D tasks.

    Paths are drawn for the final checkpoint and for every training snapshot, which shows how
    the greedy behaviour changes over the course of training.

    Returns:
        list of Path: Every file written.
    """
    out = ensure_run_dir(out_dir)
    written = []
    curves = {Path(d).name: LearningCurve.read_csv(Path(d) / CURVE_NAME) for d in run_dirs}
    if curves:
        written.extend(plot_curves(curves, out))

    for d in run_dirs:
        if not (Path(d) / CHECKPOINT_NAME).exists():
            continue
        config, env, controller = load_run(d)
        if config.env_name not in TWO_D_ENVIRONMENTS:
            continue
        seeds = [seed + k for k in range(episodes)]
        markers, region = _trajectory_markers(config.env_name)
        name = Path(d).name
        paths = [rollout(env, controller, s).observations for s in seeds]
        written.append(plot_trajectories(paths, out / f"{name}_trajectories.svg",
                                         title=f"{name}: greedy rollouts", markers=markers, region=region))
        for env_steps, snapshot in list_snapshots(d):
            _, env, controller = load_run(d, snapshot)
            paths = [rollout(env, controller, s).observations for s in seeds]
            written.append(plot_trajectories(paths, out / f"{name}_step{env_steps}_trajectories.svg",
                                             title=f"{name}: greedy rollouts after {env_steps} steps",
                                             markers=markers, region=region))

    if demo_path is not None:
        demos = load_demos(demo_path)
        markers, region = _trajectory_markers(demos.env_name)
        written.append(plot_trajectories([t.observations for t in demos], out / 'demonstrations.svg',
                                         title=f"{demos.env_name}: expert demonstrations",
                                         markers=markers, region=region))
    manifest = RunManifest('plot', seeds=[seed])
    for path in written:
        manifest.add_artifact(path.stem, path, out)
    manifest.write(out)
    return written


def _add_run_arguments(parser):
    parser.add_argument('--config', default=None, help="YAML configuration (default: config/config.yaml)")
    parser.add_argument('--set', action='append', default=[], metavar='KEY=VALUE',
                        help="Override a configuration key; repeatable")
    parser.add_argument('--seed', type=int, default=None, help="Run seed")
    parser.add_argument('--env', default=None, choices=ENV_NAMES, help="Environment")
    parser.add_argument('--demos', default=None, help="Demonstration file (.hilodemo)")
    parser.add_argument('--out', required=True, help="Run directory")


def build_parser():
    parser = argparse.ArgumentParser(prog='hilonet', description="Hierarchical imitation learning from observation")
    sub = parser.add_subparsers(dest='command', required=True)

    p_gen = sub.add_parser('gen-demos', help="Generate expert demonstrations")
    p_gen.add_argument('--env', required=True, help="Environment")
    p_gen.add_argument('--n', type=_positive_int, default=None, help="Number of trajectories")
    p_gen.add_argument('--seed', type=int, default=7, help="Demonstration seed")
    p_gen.add_argument('--out', required=True, help="Output .hilodemo path")

    p_train = sub.add_parser('train', help="Train HILONet or the TSRE baseline")
    _add_run_arguments(p_train)
    p_train.add_argument('--algo', default=None, choices=['hilonet', 'tsre'], help="Algorithm")

    p_eval = sub.add_parser('eval', help="Evaluate a run or a reference policy")
    p_eval.add_argument('--run', default=None, help="Run directory with checkpoint.npz and config.yaml")
    p_eval.add_argument('--env', default=None, help="Environment (with --expert/--random)")
    p_eval.add_argument('--episodes', type=_positive_int, default=10, help="Evaluation episodes")
    p_eval.add_argument('--seed', type=int, default=0, help="Evaluation seed")
    reference = p_eval.add_mutually_exclusive_group()
    reference.add_argument('--expert', action='store_true', help="Evaluate the scripted expert")
    reference.add_argument('--random', action='store_true', help="Evaluate the uniform random policy")

    p_ablate = sub.add_parser('ablate', help="Train the ablation variants")
    _add_run_arguments(p_ablate)

    p_verify = sub.add_parser('verify', help="Value-inequality sweep and gradient checks")
    p_verify.add_argument('--networks', type=_positive_int, default=20, help="Random networks to check")
    p_verify.add_argument('--seed', type=int, default=0, help="Seed for the random networks")

    p_plot = sub.add_parser('plot', help="SVG learning curves and trajectory plots")
    p_plot.add_argument('run_dirs', nargs='*', help="Run directories containing curve.csv")
    p_plot.add_argument('--out', required=True, help="Directory for the SVG files")
    p_plot.add_argument('--demos', default=None, help="Also plot these demonstrations")
    p_plot.add_argument('--episodes', type=_positive_int, default=5, help="Rollouts per trajectory plot")
    p_plot.add_argument('--seed', type=int, default=0, help="First rollout seed")
    return parser


def main(argv=None):
    """
    Parse ``argv`` and run the subcommand.

    Returns:
        int: Process exit code.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK

    try:
        if args.command == 'gen-demos':
            cmd_gen_demos(args.env, args.n, args.seed, args.out)
        elif args.command == 'train':
            cmd_train(args.config, _run_overrides(args), args.out)
        elif args.command == 'eval':
            cmd_eval(args.run, args.env, args.episodes, args.seed, args.expert, args.random)
        elif args.command == 'ablate':
            cmd_ablate(args.config, _run_overrides(args), args.out)
        elif args.command == 'verify':
            return cmd_verify(args.networks, args.seed)
        elif args.command == 'plot':
            if not args.run_dirs and args.demos is None:
                parser.error("plot needs at least one run directory or --demos")
            cmd_plot(args.run_dirs, args.out, args.demos, args.episodes, args.seed)
    except ConfigError as e:
        logging.error(f"Configuration error: {e}")
        return EXIT_USAGE
    except (HiloError, OSError) as e:
        logging.error(f"{args.command} failed: {e}")
        return EXIT_FAILURE
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    return EXIT_OK
