# scripts/run_seeds.py

"""
Compare HILONet, the TSRE baseline and the random policy on shared seeds.

Generates one DemoSet, trains both learners for every seed and writes
``summary.csv`` with each method's final evaluation point, ``summary_stats.csv`` with
the mean and standard deviation of those points over seeds, plus the per-run
directories and an overlay of the curves.
"""

import argparse
import csv
import logging
from pathlib import Path

import numpy as np

from app.cli import cmd_gen_demos, cmd_train
from app.config import Config
from app.environments import make_env
from app.logger import setup_logging
from app.plotting import plot_curves
from app.trainer import LearningCurve, evaluate_random
from app.utils import CURVE_NAME
from app.validation import parse_overrides

SUMMARY_HEADER = ['method', 'seed', 'env_steps', 'mean_return', 'success_rate', 'mean_length']
STATS_HEADER = ['method', 'seeds', 'success_mean', 'success_std', 'return_mean', 'return_std',
                'length_mean', 'length_std']


def aggregate_summary(rows):
    """
    Mean and population standard deviation over seeds of each method's final metrics.

    Args:
        rows (list of list): Rows in ``SUMMARY_HEADER`` order.

    Returns:
        list of list: One row per method in ``STATS_HEADER`` order, methods in first-seen order.
    """
    by_method = {}
    for method, _, _, mean_return, success_rate, mean_length in rows:
        by_method.setdefault(method, []).append((success_rate, mean_return, mean_length))
    stats = []
    for method, values in by_method.items():
        values = np.asarray(values, dtype=np.float64)
        means, stds = values.mean(axis=0), values.std(axis=0)
        stats.append([method, len(values), float(means[0]), float(stds[0]), float(means[1]), float(stds[1]),
                      float(means[2]), float(stds[2])])
    return stats


def _write_csv(path, header, rows):
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(header)
        writer.writerows(rows)
    return path


def run_seeds(config_path, out_dir, seeds, overrides=None):
    """
    Train HILONet and TSRE for each seed and evaluate the random policy alongside.

    Args:
        config_path (str or None): Base configuration.
        out_dir (str or Path): Root directory for every run.
        seeds (list of int): Shared seeds.
        overrides (dict, optional): Configuration overrides applied to every run.

    Returns:
        Path: The summary CSV.
    """
    out_dir = Path(out_dir)
    overrides = dict(overrides or {})
    base = Config.load_config(config_path, overrides)
    if not base.demo_path:
        demo_path = out_dir / 'demos' / f"{base.env_name}.hilodemo"
        cmd_gen_demos(base.env_name, base.demo_count, base.demo_seed, demo_path)
        overrides['demo_path'] = str(demo_path)

    rows = []
    curves = {}
    eval_env = make_env(base.env_name)
    for seed in seeds:
        for algo in ('hilonet', 'tsre'):
            run_dir = out_dir / f"{algo}_seed{seed}"
            cmd_train(config_path, {**overrides, 'algo': algo, 'seed': seed}, run_dir)
            curve = LearningCurve.read_csv(run_dir / CURVE_NAME)
            curves[run_dir.name] = curve
            final = curve.final
            if final is not None:
                rows.append([algo, seed, final.env_steps, final.mean_return, final.success_rate, final.mean_length])
        metrics = evaluate_random(eval_env, base.eval_episodes, seed)
        rows.append(['random', seed, 0, metrics.mean_return, metrics.success_rate, metrics.mean_length])
        logging.info(f"Seed {seed} done")

    summary = _write_csv(out_dir / 'summary.csv', SUMMARY_HEADER, rows)
    stats = aggregate_summary(rows)
    _write_csv(out_dir / 'summary_stats.csv', STATS_HEADER, stats)
    for method, n, success_mean, success_std, return_mean, return_std, _, _ in stats:
        print(f"{method:>8} ({n} seeds): success {success_mean:.2f} +/- {success_std:.2f}  "
              f"return {return_mean:.2f} +/- {return_std:.2f}")
    if curves:
        plot_curves(curves, out_dir, prefix='seeds')
    logging.info(f"Summary written to {summary}")
    return summary


if __name__ == "__main__":
    setup_logging()
    parser = argparse.ArgumentParser(description="HILONet vs TSRE vs random on shared seeds")
    parser.add_argument('--config', default=None)
    parser.add_argument('--out', required=True)
    parser.add_argument('--seeds', default='0,1,2', help="Comma-separated seeds")
    parser.add_argument('--set', action='append', default=[], metavar='KEY=VALUE')
    args = parser.parse_args()
    run_seeds(args.config, args.out, [int(s) for s in args.seeds.split(',') if s.strip()],
              parse_overrides(args.set))
