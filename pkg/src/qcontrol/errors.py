"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class QControlError(Exception):
    """Base class for every error raised by the toolkit."""


class NotHermitianError(QControlError, ValueError):
    def __init__(self, asymmetry: float):
        super().__init__(f"operator is not Hermitian: max |H - H^dagger| = {asymmetry:.3e}")
        self.asymmetry = asymmetry


class DimensionMismatchError(QControlError, ValueError):
    pass


class ImpossibleBranchError(QControlError, ValueError):
    def __init__(self, prob: float):
        super().__init__(f"projection onto a branch of probability {prob:.3e}")
        self.prob = prob


class CapExceededError(QControlError, ValueError):
    pass


class NearDegenerateError(QControlError, ValueError):
    def __init__(self, gap: float, tol: float):
        super().__init__(f"near-degenerate spectrum: gap {gap:.3e} below tolerance {tol:.3e}")
        self.gap = gap
        self.tol = tol


class OutOfPhaseError(QControlError, ValueError):
    pass


class BasisExplosionError(QControlError, RuntimeError):
    pass


class PathNotClosedError(QControlError, ValueError):
    pass


class ConfigError(QControlError, ValueError):
    """Invalid experiment configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key
