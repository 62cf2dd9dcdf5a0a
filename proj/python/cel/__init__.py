"""Class-based expansion learning: confusion scoring, staged training and cost accounting."""

from ._core import *  # noqa: F401,F403
from ._core import CelError, DivergenceError

__all__ = [name for name in dir() if not name.startswith("_")]
