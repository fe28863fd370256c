# app/demonstrations.py

"""
Observation-only expert demonstrations.

Holds the demonstration set, maps the high policy's two rates onto a
(trajectory, observation) index, answers "is this observation on an expert trajectory?"
queries, and reads/writes the ``.hilodemo`` text format::

    HILODEMO v1 <env_name> <obs_dim> <n_traj>
    <length of trajectory 0>
    <obs 0 as space-separated reals>
    ...
    <length of trajectory 1>
    ...
"""

import hashlib
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from app.exceptions import DemoParseError, ShapeError

FORMAT_MAGIC = 'HILODEMO'
FORMAT_VERSION = 'v1'


@dataclass(frozen=True, order=True)
class DemoIndex:
    trajectory_index: int
    observation_index: int


class Trajectory:
    """An immutable sequence of at least two observations of equal dimension."""

    def __init__(self, observations):
        observations = np.array(observations, dtype=np.float64)
        if observations.ndim != 2:
            raise ShapeError(f"A trajectory needs a 2-D observation array, got shape {observations.shape}")
        if observations.shape[0] < 2:
            raise ShapeError(f"A trajectory needs at least 2 observations, got {observations.shape[0]}")
        observations.setflags(write=False)
        self.observations = observations

    @property
    def length(self):
        return self.observations.shape[0]

    @property
    def observation_dim(self):
        return self.observations.shape[1]

    def __len__(self):
        return self.length

    def __getitem__(self, index):
        return self.observations[index]

    def __eq__(self, other):
        return isinstance(other, Trajectory) and np.array_equal(self.observations, other.observations)

    def __hash__(self):
        return hash(self.observations.tobytes())


class DemoSet:
    """
    The demonstration set D: an ordered, non-empty, immutable collection of trajectories.

    Args:
        trajectories (sequence of Trajectory or arrays)
        env_name (str): Environment that produced the observations.
    """

    def __init__(self, trajectories, env_name):
        trajectories = tuple(t if isinstance(t, Trajectory) else Trajectory(t) for t in trajectories)
        if not trajectories:
            raise ShapeError("A DemoSet needs at least one trajectory")
        dims = {t.observation_dim for t in trajectories}
        if len(dims) != 1:
            raise ShapeError(f"Trajectories have mixed observation dimensions: {sorted(dims)}")
        if not env_name or any(c.isspace() for c in env_name):
            raise ValueError(f"Invalid environment name '{env_name}'")
        self.trajectories = trajectories
        self.env_name = env_name
        self.observation_dim = dims.pop()
        self.clamp_events = 0

        # Flattened view in (trajectory, observation) order for vectorized matching.
        self._stacked = np.concatenate([t.observations for t in trajectories])
        self._stacked.setflags(write=False)
        self._rows = [DemoIndex(i, j) for i, t in enumerate(trajectories) for j in range(t.length)]

    @property
    def num_trajectories(self):
        return len(self.trajectories)

    @property
    def lengths(self):
        return [t.length for t in self.trajectories]

    @property
    def all_observations(self):
        return self._stacked

    def __len__(self):
        return len(self.trajectories)

    def __getitem__(self, index):
        return self.trajectories[index]

    def __iter__(self):
        return iter(self.trajectories)

    def __eq__(self, other):
        return (isinstance(other, DemoSet)
                and self.env_name == other.env_name
                and self.trajectories == other.trajectories)

    def __hash__(self):
        return hash((self.env_name, self.trajectories))

    def observation(self, index):
        return self.trajectories[index.trajectory_index][index.observation_index]

    def bounds(self):
        return self._stacked.min(axis=0), self._stacked.max(axis=0)

    def diameter(self):
        """Diagonal of the axis-aligned bounding box of every stored observation."""
        low, high = self.bounds()
        return float(np.linalg.norm(high - low))

    def summary(self):
        lengths = self.lengths
        return {
            'env_name': self.env_name,
            'trajectories': self.num_trajectories,
            'observation_dim': self.observation_dim,
            'length_min': min(lengths),
            'length_mean': float(np.mean(lengths)),
            'length_max': max(lengths),
        }

    def fingerprint(self):
        digest = hashlib.sha256(self.env_name.encode())
        for t in self.trajectories:
            digest.update(np.int64(t.length).tobytes())
            digest.update(t.observations.tobytes())
        return digest.hexdigest()


def _clamp_rate(demos, value, name):
    value = float(value)
    clamped = min(max(value, 0.0), 1.0)
    if clamped != value:
        demos.clamp_events += 1
        logging.debug(f"Sub-goal rate {name}={value} clamped to {clamped}")
    return clamped


def index_subgoal(demos, a1, a2):
    """
    Decode the high policy's rates into a demonstration observation.

    ``a1`` picks the trajectory and ``a2`` the position inside it, both by
    ``min(floor(rate * count), count - 1)``. Rates outside [0, 1] are clamped first.

    Returns:
        tuple: (DemoIndex, observation)
    """
    if demos is None or demos.num_trajectories == 0:
        raise ShapeError("Cannot index an empty DemoSet")
    a1 = _clamp_rate(demos, a1, 'a1')
    a2 = _clamp_rate(demos, a2, 'a2')
    n = demos.num_trajectories
    i = min(int(math.floor(a1 * n)), n - 1)
    length = demos[i].length
    j = min(int(math.floor(a2 * length)), length - 1)
    index = DemoIndex(i, j)
    return index, demos.observation(index)


def encode_subgoal(demos, index):
    """
    Inverse of ``index_subgoal``: the rate pair at the midpoint of the index's interval.

    Returns:
        tuple: (a1, a2) that decode back to exactly ``index``.
    """
    i, j = index.trajectory_index, index.observation_index
    if not (0 <= i < demos.num_trajectories and 0 <= j < demos[i].length):
        raise ShapeError(f"{index} is outside the DemoSet")
    return (i + 0.5) / demos.num_trajectories, (j + 0.5) / demos[i].length


def match_observation(demos, obs, eps):
    """
    Find the expert observation nearest to ``obs`` if it lies strictly within ``eps``.

    Ties resolve to the lowest (trajectory, observation) index.

    Returns:
        DemoIndex or None
    """
    obs = np.asarray(obs, dtype=np.float64).reshape(-1)
    if obs.shape[0] != demos.observation_dim:
        raise ShapeError(f"Observation of size {obs.shape[0]} does not match DemoSet dimension {demos.observation_dim}")
    distances = np.linalg.norm(demos.all_observations - obs, axis=1)
    nearest = int(np.argmin(distances))
    if distances[nearest] < eps:
        return demos._rows[nearest]
    return None


def estimate_eps(demos, fraction=0.05):
    """Achievement threshold as a fraction of the DemoSet's observation-space diameter."""
    diameter = demos.diameter()
    if diameter <= 0:
        raise ValueError("DemoSet spans a single point; cannot derive an achievement threshold")
    return fraction * diameter


def save_demos(demos, path):
    """Write ``demos`` to ``path`` in the ``.hilodemo`` text format (reals round-trip exactly)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"{FORMAT_MAGIC} {FORMAT_VERSION} {demos.env_name} {demos.observation_dim} {demos.num_trajectories}"]
    for trajectory in demos:
        lines.append(str(trajectory.length))
        for observation in trajectory.observations:
            lines.append(' '.join(repr(float(v)) for v in observation))
    path.write_text('\n'.join(lines) + '\n', encoding='utf-8')
    logging.info(f"Saved {demos.num_trajectories} demonstrations to {path}")
    return path


def _parse_int(token, line_no, what):
    try:
        value = int(token)
    except ValueError:
        raise DemoParseError(f"line {line_no}: {what} must be an integer, got '{token}'") from None
    return value


def load_demos(path):
    """
    Read a ``.hilodemo`` file.

    Raises:
        DemoParseError: On invalid UTF-8, a bad header, version mismatch, truncation, non-numeric
            or non-finite values, dimension inconsistency or trailing content. The message names
            the offending line.
    """
    path = Path(path)
    data = path.read_bytes()
    try:
        text = data.decode('utf-8')
    except UnicodeDecodeError as e:
        line = data[:e.start].count(b'\n') + 1
        raise DemoParseError(f"{path}: line {line}: not valid UTF-8 (byte offset {e.start})") from None
    lines = text.split('\n')
    if lines and lines[-1] == '':
        lines.pop()
    if not lines:
        raise DemoParseError(f"{path}: empty file")

    header = lines[0].split()
    if len(header) != 5 or header[0] != FORMAT_MAGIC:
        raise DemoParseError(f"{path}: line 1: expected '{FORMAT_MAGIC} <version> <env> <dim> <count>'")
    if header[1] != FORMAT_VERSION:
        raise DemoParseError(f"{path}: line 1: unsupported version '{header[1]}' (expected {FORMAT_VERSION})")
    env_name = header[2]
    obs_dim = _parse_int(header[3], 1, 'observation dimension')
    n_traj = _parse_int(header[4], 1, 'trajectory count')
    if obs_dim < 1 or n_traj < 1:
        raise DemoParseError(f"{path}: line 1: dimension and trajectory count must be positive")

    cursor = 1
    trajectories = []
    for k in range(n_traj):
        if cursor >= len(lines):
            raise DemoParseError(f"{path}: truncated before trajectory {k} (line {cursor + 1})")
        length = _parse_int(lines[cursor].strip(), cursor + 1, f"length of trajectory {k}")
        if length < 2:
            raise DemoParseError(f"{path}: line {cursor + 1}: trajectory {k} has length {length}, need >= 2")
        cursor += 1
        rows = []
        for j in range(length):
            if cursor >= len(lines):
                raise DemoParseError(f"{path}: truncated inside trajectory {k} at observation {j} (line {cursor + 1})")
            tokens = lines[cursor].split()
            if len(tokens) != obs_dim:
                raise DemoParseError(
                    f"{path}: line {cursor + 1}: trajectory {k} observation {j} has {len(tokens)} values, "
                    f"expected {obs_dim}")
            try:
                rows.append([float(t) for t in tokens])
            except ValueError:
                raise DemoParseError(
                    f"{path}: line {cursor + 1}: trajectory {k} observation {j} is not numeric") from None
            if not all(math.isfinite(v) for v in rows[-1]):
                raise DemoParseError(
                    f"{path}: line {cursor + 1}: trajectory {k} observation {j} has a non-finite value")
            cursor += 1
        trajectories.append(Trajectory(rows))

    if cursor != len(lines):
        raise DemoParseError(f"{path}: line {cursor + 1}: unexpected content after {n_traj} trajectories")
    return DemoSet(trajectories, env_name)
