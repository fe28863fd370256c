# app/utils.py

"""
Run-directory bookkeeping for HILONet.

Every command writes its artifacts under one run directory and records them in
``manifest.yaml`` together with the effective configuration, the seeds used and a
fingerprint of the inputs.
"""

import hashlib
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

MANIFEST_NAME = 'manifest.yaml'
CURVE_NAME = 'curve.csv'
CHECKPOINT_NAME = 'checkpoint.npz'
SNAPSHOT_DIR = 'snapshots'


def content_fingerprint(path):
    """
    Git-style blob hash of a file: sha1 over ``blob <size>\\0`` followed by the bytes.

    Args:
        path (str or Path): File to hash.

    Returns:
        str: Hex digest.
    """
    data = Path(path).read_bytes()
    digest = hashlib.sha1(f"blob {len(data)}\0".encode())
    digest.update(data)
    return digest.hexdigest()


def ensure_run_dir(path):
    """
    Creates the run directory if needed.

    Args:
        path (str or Path): Run directory.

    Returns:
        Path: The directory.
    """
    run_dir = Path(path)
    try:
        run_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        logging.error(f"Cannot create run directory {run_dir}: {e}")
        raise
    return run_dir



def snapshot_path(run_dir, env_steps):
    """``<run_dir>/snapshots/step_<env_steps>.npz``, zero-padded so names sort by step."""
    return Path(run_dir) / SNAPSHOT_DIR / f"step_{env_steps:08d}.npz"


def list_snapshots(run_dir):
    """
    Checkpoints saved during training, oldest first.

    Returns:
        list of tuple: (env_steps, Path) pairs.
    """
    snapshots = []
    for path in (Path(run_dir) / SNAPSHOT_DIR).glob('step_*.npz'):
        try:
            snapshots.append((int(path.stem.split('_', 1)[1]), path))
        except ValueError:
            logging.warning(f"Ignoring unexpected snapshot file {path}")
    return sorted(snapshots)

@dataclass
class RunManifest:
    """
    Record of one command's inputs and outputs.

    Attributes:
        command (str): The CLI subcommand that produced the run.
        config (dict): Effective configuration snapshot.
        seeds (list of int): Seeds used.
        fingerprint (str): Hash of the inputs (configuration and demonstrations).
        inputs (dict): Input name -> git-style content hash.
        artifacts (dict): Artifact name -> path relative to the run directory.
    """
    command: str
    config: dict = field(default_factory=dict)
    seeds: list = field(default_factory=list)
    fingerprint: str = ''
    inputs: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)

    def add_artifact(self, name, path, run_dir):
        self.artifacts[name] = Path(path).relative_to(run_dir).as_posix()

    def add_input(self, name, path):
        self.inputs[name] = content_fingerprint(path)

    def write(self, run_dir):
        path = Path(run_dir) / MANIFEST_NAME
        with open(path, 'w') as f:
            yaml.safe_dump(asdict(self), f, sort_keys=True)
        logging.info(f"Manifest written to {path}")
        return path

    @classmethod
    def load(cls, run_dir):
        path = Path(run_dir) / MANIFEST_NAME
        with open(path, 'r') as f:
            data = yaml.safe_load(f) or {}
        return cls(**data)
