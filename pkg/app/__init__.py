# app/__init__.py

"""
HILONet: hierarchical imitation learning from observation.

A high-level policy picks sub-goal observations out of non-time-aligned expert
demonstrations; a low-level policy learns to reach them. Both are trained with DDPG.
"""

__version__ = '1.0.0'

from .config import Config, TrainConfig  # noqa: E402,F401
from .logger import setup_logging  # noqa: E402,F401
