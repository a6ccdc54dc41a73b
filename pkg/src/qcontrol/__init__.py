"""Counterdiabatic driving, gradient-based optimal control and policy-gradient
reinforcement learning for small spin systems."""

from __future__ import annotations

__version__ = "0.1.0"

from . import errors, grape, models, qcore, rl, sta  # noqa: F401
