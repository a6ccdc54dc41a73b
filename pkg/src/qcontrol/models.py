"""Hamiltonian families and target states used by the worked examples."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from .qcore import SIGMA_X, SIGMA_Y, SIGMA_Z, PauliSum

Schedule = Callable[[float], float]


# ---------------------------------------------------------------------------
# Landau-Zener
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LZParams:
    delta: float
    nu_of_t: Schedule
    T: float
    nu_dot_of_t: Schedule | None = None

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")

    @classmethod
    def linear(cls, delta: float, nu_start: float, nu_end: float, T: float) -> "LZParams":
        rate = (nu_end - nu_start) / T
        return cls(delta, lambda t: nu_start + rate * t, T, lambda t: rate)

    def hamiltonian(self, t: float) -> np.ndarray:
        return lz_hamiltonian(self.delta, self.nu_of_t(t))


def lz_hamiltonian(delta: float, nu: float) -> np.ndarray:
    """H = delta*sigma_x + nu*sigma_z."""
    return delta * SIGMA_X + nu * SIGMA_Z


def lz_eigenstates(delta: float, nu: float) -> tuple[np.ndarray, np.ndarray, float, float]:
    """Ground and excited states of ``delta*sigma_x + nu*sigma_z`` in a smooth real gauge.

    With theta = atan2(delta, nu) the excited state is cos(theta/2)|0> + sin(theta/2)|1>
    and the ground state is sin(theta/2)|0> - cos(theta/2)|1>.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    theta = math.atan2(delta, nu)
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    energy = math.hypot(delta, nu)
    ground = np.array([s, -c], dtype=complex)
    excited = np.array([c, s], dtype=complex)
    return ground, excited, -energy, energy


# ---------------------------------------------------------------------------
# Ising chains
# ---------------------------------------------------------------------------

def _bonds(n_sites: int, boundary: str, double_two_site_wrap: bool) -> list[tuple[int, int]]:
    if boundary not in ("periodic", "open"):
        raise ValueError(f"unknown boundary {boundary!r}")
    bonds = [(j, j + 1) for j in range(1, n_sites)]
    # for two sites the wrap-around bond repeats the open one
    if boundary == "periodic" and (n_sites > 2 or double_two_site_wrap):
        bonds.append((n_sites, 1))
    return bonds


def ising_tf_hamiltonian(n_sites: int, g: float, boundary: str = "periodic") -> PauliSum:
    """x-coupled transverse-field chain, H = -sum_j (X_j X_{j+1} + g Z_j).

    The periodic sum runs over j = 1..N literally, so a periodic two-site chain
    carries the bond X_1 X_2 twice.
    """
    if n_sites < 2:
        raise ValueError("need at least two sites")
    terms: list[tuple[str, complex]] = []
    for a, b in _bonds(n_sites, boundary, True):
        terms += PauliSum.single(n_sites, {a: "X", b: "X"}, -1.0).terms.items()
    for j in range(1, n_sites + 1):
        terms += PauliSum.single(n_sites, {j: "Z"}, -g).terms.items()
    return PauliSum(n_sites, terms)


def ising_tf_field_derivative(n_sites: int) -> PauliSum:
    """dH/dg of the x-coupled chain, -sum_j Z_j."""
    out = PauliSum.zero(n_sites)
    for j in range(1, n_sites + 1):
        out = out + PauliSum.single(n_sites, {j: "Z"}, -1.0)
    return out


def ising_mixed_terms(n_sites: int, J: float, Z: float, X: float, boundary: str = "periodic") -> PauliSum:
    """-J sum Z_j Z_{j+1} - Z sum Z_j + X sum X_j for fixed coefficient values.

    Two sites always carry a single Z_1 Z_2 bond, whatever the boundary.
    """
    if n_sites < 2:
        raise ValueError("need at least two sites")
    out: list[tuple[str, complex]] = []
    for a, b in _bonds(n_sites, boundary, False):
        out += PauliSum.single(n_sites, {a: "Z", b: "Z"}, -J).terms.items()
    for j in range(1, n_sites + 1):
        out += PauliSum.single(n_sites, {j: "Z"}, -Z).terms.items()
        out += PauliSum.single(n_sites, {j: "X"}, X).terms.items()
    return PauliSum(n_sites, out)


@dataclass(frozen=True)
class IsingMixedParams:
    """Schedules J(lam), Z(lam), X(lam) and their lam-derivatives.

    The defaults are J = Z = 1 and X = 2*lam.
    """

    n_sites: int
    J: Schedule = lambda lam: 1.0
    Z: Schedule = lambda lam: 1.0
    X: Schedule = lambda lam: 2.0 * lam
    dJ: Schedule = lambda lam: 0.0
    dZ: Schedule = lambda lam: 0.0
    dX: Schedule = lambda lam: 2.0
    boundary: str = "periodic"

    def __post_init__(self):
        if self.n_sites < 2:
            raise ValueError("need at least two sites")


def ising_mixed_hamiltonian(p: IsingMixedParams, lam: float) -> PauliSum:
    return ising_mixed_terms(p.n_sites, p.J(lam), p.Z(lam), p.X(lam), p.boundary)


def ising_mixed_derivative(p: IsingMixedParams, lam: float) -> PauliSum:
    return ising_mixed_terms(p.n_sites, p.dJ(lam), p.dZ(lam), p.dX(lam), p.boundary)


@dataclass(frozen=True)
class MomentumMode:
    k: float
    delta_k: float
    nu_k: float

    def hamiltonian(self) -> np.ndarray:
        return self.delta_k * SIGMA_X + self.nu_k * SIGMA_Z


def ising_momentum_modes(n_sites: int, g: float) -> tuple[list[MomentumMode], float]:
    """Positive-parity modes k = (2m-1)pi/N with H_k = 2[(g - cos k) sigma_z + sin k sigma_x].

    Returns the modes and the constant energy offset that makes the summed mode
    ground energies equal the dense even-parity ground energy. For this chain and
    sector the offset is exactly zero.
    """
    if n_sites % 2:
        raise ValueError("momentum decomposition needs an even number of sites")
    modes = []
    for m in range(1, n_sites // 2 + 1):
        k = (2 * m - 1) * math.pi / n_sites
        modes.append(MomentumMode(k, 2 * math.sin(k), 2 * g - 2 * math.cos(k)))
    return modes, 0.0


# ---------------------------------------------------------------------------
# collective spins
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CollectiveSpinModel:
    n_particles: int
    Jx: np.ndarray = field(repr=False)
    Jy: np.ndarray = field(repr=False)
    Jz: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.n_particles + 1

    @property
    def spin(self) -> float:
        return self.n_particles / 2


@lru_cache(maxsize=64)
def _spin_ops(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    j = n / 2
    m = j - np.arange(n + 1)
    # raising operator: <m+1|J+|m> = sqrt(j(j+1) - m(m+1)), basis ordered m = j..-j
    jp = np.zeros((n + 1, n + 1), dtype=complex)
    for idx in range(1, n + 1):
        mm = m[idx]
        jp[idx - 1, idx] = math.sqrt(j * (j + 1) - mm * (mm + 1))
    jx = 0.5 * (jp + jp.conj().T)
    jy = -0.5j * (jp - jp.conj().T)
    jz = np.diag(m).astype(complex)
    for a in (jx, jy, jz):
        a.setflags(write=False)
    return jx, jy, jz


def collective_spin_ops(n_particles: int) -> CollectiveSpinModel:
    if n_particles < 1:
        raise ValueError("need at least one particle")
    jx, jy, jz = _spin_ops(int(n_particles))
    return CollectiveSpinModel(int(n_particles), jx, jy, jz)


def lmg_hamiltonian(n_particles: int, g: float) -> np.ndarray:
    """-(2/N) S_x^2 - 2 g S_z + 1/2 in the maximal-spin sector."""
    if n_particles < 2:
        raise ValueError("need at least two particles")
    ops = collective_spin_ops(n_particles)
    eye = np.eye(ops.dim)
    return -(2.0 / n_particles) * ops.Jx @ ops.Jx - 2.0 * g * ops.Jz + 0.5 * eye


def lmg_field_derivative(n_particles: int) -> np.ndarray:
    return -2.0 * collective_spin_ops(n_particles).Jz


def dicke_hamiltonian(n_particles: int, beta: float, omega_x: float, omega_y: float) -> np.ndarray:
    """Omega_x J_x + Omega_y J_y + (beta/N) J_z^2."""
    ops = collective_spin_ops(n_particles)
    return omega_x * ops.Jx + omega_y * ops.Jy + (beta / n_particles) * ops.Jz @ ops.Jz


def dicke_state(n_particles: int, k: int) -> np.ndarray:
    """Collective basis state with J_z = N/2 - k."""
    if not 0 <= k <= n_particles:
        raise ValueError(f"excitation number {k} outside 0..{n_particles}")
    psi = np.zeros(n_particles + 1, dtype=complex)
    psi[k] = 1.0
    return psi


# ---------------------------------------------------------------------------
# single-qubit gate model
# ---------------------------------------------------------------------------

def gate_control_hamiltonian(omega: float, alpha: float) -> np.ndarray:
    """(Omega/2)(cos(alpha) sigma_x + sin(alpha) sigma_y)."""
    return 0.5 * omega * (math.cos(alpha) * SIGMA_X + math.sin(alpha) * SIGMA_Y)


def gate_control_derivative(omega: float, alpha: float) -> np.ndarray:
    return 0.5 * omega * (-math.sin(alpha) * SIGMA_X + math.cos(alpha) * SIGMA_Y)
