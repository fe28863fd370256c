# app/config.py

import hashlib
import logging
import re
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Optional

import yaml
from dotenv import load_dotenv

from app.exceptions import ConfigError
from app.validation import parse_overrides, validate_config

# Load environment variables from .env file
load_dotenv()

DEFAULT_DEMO_COUNTS = {'pointnav': 20, 'hillclimb': 30, 'cyclepattern': 30}
_KEY_VALUE_LINE = re.compile(r'^\s*([A-Za-z_]\w*)\s*=(.*)$')


@dataclass(frozen=True)
class TrainConfig:
    """
    Every hyperparameter of a run, with its default.

    ``None`` marks values resolved later: ``eps`` from the DemoSet, ``n_demos`` from the
    environment, ``high_buffer_capacity`` as a tenth of the low capacity.
    """
    env_name: str = 'pointnav'
    algo: str = 'hilonet'
    demo_path: Optional[str] = None
    n_demos: Optional[int] = None
    demo_seed: int = 7
    total_env_steps: int = 50000
    delta_t: int = 5
    high_update_delay: int = 2
    gamma: float = 0.98
    tau: float = 0.005
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    batch_size: int = 128
    hidden_sizes: tuple = (64, 64)
    noise_start: float = 0.1
    noise_end: float = 0.02
    eps: Optional[float] = None
    eps_fraction: float = 0.05
    r_bonus: float = 1.0
    alpha: float = 1.0
    low_buffer_capacity: int = 100000
    high_buffer_capacity: Optional[int] = None
    warmup_steps: int = 1000
    eval_interval: int = 5000
    eval_episodes: int = 10
    seed: int = 0
    tsre_trajectory: int = 0
    disable_hindsight: bool = False
    disable_delay: bool = False
    double_high_buffer: bool = False

    def __post_init__(self):
        object.__setattr__(self, 'hidden_sizes', tuple(int(h) for h in self.hidden_sizes))

    @property
    def demo_count(self):
        return self.n_demos if self.n_demos is not None else DEFAULT_DEMO_COUNTS[self.env_name]

    @property
    def high_capacity(self):
        base = self.high_buffer_capacity
        if base is None:
            base = max(1, self.low_buffer_capacity // 10)
        return 2 * base if self.double_high_buffer else base

    @property
    def high_delay(self):
        return 1 if self.disable_delay else self.high_update_delay

    def with_overrides(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        data = asdict(self)
        data['hidden_sizes'] = list(self.hidden_sizes)
        return data

    def fingerprint(self):
        """sha256 of the canonical YAML dump of the effective configuration."""
        dump = yaml.safe_dump(self.to_dict(), sort_keys=True)
        return hashlib.sha256(dump.encode('utf-8')).hexdigest()

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})


def parse_key_values(text):
    """
    Read the flat ``key = value`` configuration style; ``#`` starts a comment.

    Returns:
        dict or None: Raw string values, or None when some line has another shape (e.g. YAML).
    """
    pairs = []
    for line in text.splitlines():
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        match = _KEY_VALUE_LINE.match(line)
        if match is None:
            return None
        pairs.append(f"{match.group(1)}={match.group(2)}")
    return parse_overrides(pairs) if pairs else None


class Config:
    """
    Loads run configurations from a file and command-line overrides.

    A file is read as flat ``key = value`` lines when every line has that shape, else as YAML.
    """

    # Path to config.yaml
    config_path = Path(__file__).parent.parent / 'config' / 'config.yaml'

    @classmethod
    def load_config(cls, path=None, overrides=None):
        """
        Loads, merges and validates a configuration.

        Args:
            path (str or Path, optional): Configuration file; defaults to ``config/config.yaml``.
                Pass ``False`` to start from the built-in defaults only.
            overrides (dict, optional): Values that win over the file.

        Returns:
            TrainConfig: Validated configuration.
        """
        document = {}
        if path is not False:
            config_file = Path(path) if path else cls.config_path
            try:
                with open(config_file, 'r') as f:
                    text = f.read()
                document = parse_key_values(text)
                if document is None:
                    document = yaml.safe_load(text) or {}
            except yaml.YAMLError as e:
                logging.error(f"Error parsing YAML configuration: {e}")
                raise ConfigError(f"Error parsing YAML configuration {config_file}: {e}") from e
            except FileNotFoundError:
                logging.error(f"Configuration file not found at path: {config_file}")
                raise
            if not isinstance(document, dict):
                raise ConfigError(f"{config_file}: expected a flat key/value mapping")

        document = {**document, **(overrides or {})}
        normalized = validate_config(document)
        config = TrainConfig.from_dict(normalized)
        logging.debug(f"Configuration loaded: {config}")
        return config

    @classmethod
    def save_config(cls, config, path):
        """
        Saves a configuration as a flat YAML mapping.

        Args:
            config (TrainConfig): Configuration to save.
            path (str or Path): Destination file.
        """
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, 'w') as f:
                yaml.safe_dump(config.to_dict(), f, sort_keys=False)
            logging.info(f"Configuration saved to {path}")
        except OSError as e:
            logging.error(f"Failed to save configuration to {path}: {e}")
            raise
        return path
