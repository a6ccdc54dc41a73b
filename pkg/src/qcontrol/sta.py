"""Counterdiabatic driving: spectral, closed-form and variational gauge potentials.

Every gauge potential here is the lambda-derivative object A_lambda; the
counterdiabatic Hamiltonian is ``lambda_dot * A_lambda``. Closed-form helpers that
take a rate argument (``g_dot``, ``nu_dot``) already include it.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import BasisExplosionError, NearDegenerateError, OutOfPhaseError, PathNotClosedError
from .models import collective_spin_ops, lmg_hamiltonian, lz_hamiltonian
from .qcore import (
    SIGMA_Y,
    PauliSum,
    check_hermitian,
    expm_herm,
    herm_eig,
    pauli_commutator,
    pauli_hs_inner,
)


class SingularSystemWarning(UserWarning):
    """A linear system was singular and was solved in the least-squares sense."""


# ---------------------------------------------------------------------------
# spectral AGP
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AGPSpectral:
    operator: np.ndarray
    min_gap: float


def exact_agp(H, dH, gap_tol: float | None = None) -> AGPSpectral:
    """A = i sum_{n != m} |m><m| dH |n><n| / (E_n - E_m)."""
    H = check_hermitian(H)
    dH = check_hermitian(dH)
    if H.shape != dH.shape:
        raise ValueError("H and dH dimensions differ")
    evals, evecs = herm_eig(H)
    if gap_tol is None:
        gap_tol = 1e-9 * max(float(np.max(np.abs(evals))), 1e-300)
    d = len(evals)
    if d == 1:
        return AGPSpectral(np.zeros_like(H), math.inf)
    gaps = evals[None, :] - evals[:, None]  # gaps[m, n] = E_n - E_m
    off = ~np.eye(d, dtype=bool)
    min_gap = float(np.min(np.abs(gaps[off])))
    if min_gap < gap_tol:
        raise NearDegenerateError(min_gap, gap_tol)
    dh_eig = evecs.conj().T @ dH @ evecs
    a_eig = np.zeros_like(dh_eig)
    a_eig[off] = 1j * dh_eig[off] / gaps[off]
    A = evecs @ a_eig @ evecs.conj().T
    return AGPSpectral(0.5 * (A + A.conj().T), min_gap)


def cd_lz_coefficient(delta: float, nu: float, nu_dot: float) -> float:
    """sigma_y coefficient of the Landau-Zener counterdiabatic term."""
    return -delta * nu_dot / (2.0 * (delta**2 + nu**2))


# ---------------------------------------------------------------------------
# Ising chain (x-coupled, transverse field g)
# ---------------------------------------------------------------------------

def ising_h_coefficient(m: int, n_sites: int, g: float) -> float:
    """Range-m ground-state coefficient h_m(g) = (g^{2m} + g^N) / (8 g^{m+1} (1 + g^N))."""
    return (g ** (2 * m) + g**n_sites) / (8.0 * g ** (m + 1) * (1.0 + g**n_sites))


def ising_range_operator(n_sites: int, m: int) -> PauliSum:
    """A^[m] = sum_n (Y_n Z...Z X_{n+m} + X_n Z...Z Y_{n+m}) with periodic wrap."""
    acc: list[tuple[str, complex]] = []
    for n in range(n_sites):
        for first, last in (("Y", "X"), ("X", "Y")):
            letters = ["I"] * n_sites
            letters[n] = first
            for r in range(1, m):
                letters[(n + r) % n_sites] = "Z"
            letters[(n + m) % n_sites] = last
            acc.append(("".join(letters), 1.0))
    return PauliSum(n_sites, acc)


def ising_gs_cd(n_sites: int, g: float, g_dot: float, ranges: Sequence[int] | None = None) -> PauliSum:
    """Ground-state counterdiabatic term of the periodic x-coupled chain.

    ``ranges`` restricts the sum to the listed ranges m (all of 1..N/2 by default),
    which is how the truncated two- and three-body protocols are built.
    """
    if n_sites % 2:
        raise ValueError("the ground-state CD term needs an even number of sites")
    if g == 0:
        raise ValueError("g = 0 is singular for the range coefficients")
    half = n_sites // 2
    keep = set(range(1, half + 1)) if ranges is None else set(ranges)
    out = PauliSum.zero(n_sites)
    for m in range(1, half + 1):
        if m not in keep:
            continue
        w = ising_h_coefficient(m, n_sites, g)
        if m == half:
            w *= 0.5
        out = out + ising_range_operator(n_sites, m) * (-g_dot * w)
    return out


def ising_momentum_cd(n_sites: int, g: float, g_dot: float) -> list[np.ndarray]:
    """Per-mode 2x2 CD operators, coefficient -g_dot sin k / (2(1 + g^2 - 2 g cos k)) on sigma_y."""
    if n_sites % 2:
        raise ValueError("momentum decomposition needs an even number of sites")
    ops = []
    for m in range(1, n_sites // 2 + 1):
        k = (2 * m - 1) * math.pi / n_sites
        coeff = -g_dot * math.sin(k) / (2.0 * (1.0 + g * g - 2.0 * g * math.cos(k)))
        ops.append(coeff * SIGMA_Y)
    return ops


# ---------------------------------------------------------------------------
# LMG
# ---------------------------------------------------------------------------

def lmg_cd_operator(n_particles: int) -> np.ndarray:
    ops = collective_spin_ops(n_particles)
    return ops.Jx @ ops.Jy + ops.Jy @ ops.Jx


def lmg_gs_cd(n_particles: int, g: float, g_dot: float, squeezing_rate: bool = False) -> np.ndarray:
    """-(2g - 1) g_dot / (4 N g (g - 1)) (J_x J_y + J_y J_x), valid for g > 1.

    The coefficient follows the oscillator frequency alone. With
    ``squeezing_rate=True`` it instead follows the rate of the Bogoliubov angle,
    which drops the factor (2g - 1) and is the exact large-N limit.
    """
    if g <= 1:
        raise OutOfPhaseError(f"the harmonic approximation needs g > 1, got g = {g}")
    coeff = -(2 * g - 1) * g_dot / (4.0 * n_particles * g * (g - 1))
    if squeezing_rate:
        coeff /= 2 * g - 1
    return coeff * lmg_cd_operator(n_particles)


def lmg_ramp(t: float, T: float = 1.0, g0: float = 2.0, g_delta: float = -0.9) -> float:
    return g0 + g_delta * t / T


@dataclass(frozen=True)
class PulseScan:
    a_grid: np.ndarray
    b_grid: np.ndarray
    fidelity: np.ndarray  # shape (len(a_grid), len(b_grid))

    def best(self) -> tuple[float, float, float]:
        i, j = np.unravel_index(int(np.argmax(self.fidelity)), self.fidelity.shape)
        return float(self.a_grid[i]), float(self.b_grid[j]), float(self.fidelity[i, j])


def lmg_pulse_scan(
    n_particles: int,
    a_grid: Sequence[float],
    b_grid: Sequence[float],
    T: float = 1.0,
    g0: float = 2.0,
    g_delta: float = -0.9,
    n_steps: int = 1000,
) -> PulseScan:
    """Final ground-state fidelity of H(g(t)) + f(t)(JxJy + JyJx), f = (exp(t^a) - b)/N.

    All (a, b) pairs are propagated together with classical fourth-order
    Runge-Kutta, which is far cheaper than one exponential per pair and step.
    """
    a_arr = np.asarray(a_grid, dtype=float)
    b_arr = np.asarray(b_grid, dtype=float)
    aa, bb = np.meshgrid(a_arr, b_arr, indexing="ij")
    aa, bb = aa.ravel(), bb.ravel()
    K = lmg_cd_operator(n_particles)
    Jz = collective_spin_ops(n_particles).Jz
    H0 = lmg_hamiltonian(n_particles, 0.0)
    _, v0 = herm_eig(lmg_hamiltonian(n_particles, g0))
    psi = np.repeat(v0[:, :1], aa.size, axis=1)
    dt = T / n_steps

    def rhs(t: float, state: np.ndarray) -> np.ndarray:
        g = g0 + g_delta * t / T
        s = t / T
        f = (np.exp(s**aa) - bb) / n_particles if s > 0 else (1.0 - bb) / n_particles
        return -1j * (H0 @ state - 2.0 * g * (Jz @ state) + (K @ state) * f)

    for j in range(n_steps):
        t = j * dt
        k1 = rhs(t, psi)
        k2 = rhs(t + dt / 2, psi + dt / 2 * k1)
        k3 = rhs(t + dt / 2, psi + dt / 2 * k2)
        k4 = rhs(t + dt, psi + dt * k3)
        psi = psi + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    psi = psi / np.linalg.norm(psi, axis=0)
    _, v1 = herm_eig(lmg_hamiltonian(n_particles, g0 + g_delta))
    fid = np.abs(v1[:, 0].conj() @ psi) ** 2
    return PulseScan(a_arr, b_arr, fid.reshape(len(a_arr), len(b_arr)))


# ---------------------------------------------------------------------------
# variational AGP
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VariationalAnsatz:
    basis: tuple[PauliSum, ...]
    coeffs: np.ndarray
    action: float
    singular: bool = False
    matrix: np.ndarray = field(default=None, repr=False)
    rhs: np.ndarray = field(default=None, repr=False)

    def operator(self) -> PauliSum:
        out = PauliSum.zero(self.basis[0].n_sites)
        for c, o in zip(self.coeffs, self.basis):
            out = out + o * float(c)
        return out


def _solve_flagged(M: np.ndarray, b: np.ndarray, rcond: float = 1e-12) -> tuple[np.ndarray, bool]:
    n = M.shape[0]
    scale = max(float(np.max(np.abs(M))), 1e-300)
    if np.linalg.matrix_rank(M, tol=rcond * scale * n) < n:
        warnings.warn("singular system solved by least squares", SingularSystemWarning, stacklevel=3)
        sol, *_ = np.linalg.lstsq(M, b, rcond=rcond)
        return sol, True
    return np.linalg.solve(M, b), False


def g_operator(H: PauliSum, dH: PauliSum, A: PauliSum) -> PauliSum:
    """G = dH + i[A, H]."""
    return dH + pauli_commutator(A, H) * 1j


def action_value(H: PauliSum, dH: PauliSum, A: PauliSum) -> float:
    G = g_operator(H, dH, A)
    return float(pauli_hs_inner(G, G).real)


def variational_agp_solve(
    H: PauliSum, dH: PauliSum, basis: Sequence[PauliSum], n_sites: int | None = None
) -> VariationalAnsatz:
    """Minimize Tr[G^2] over A = sum_i alpha_i O_i; a linear solve M alpha = b."""
    if not basis:
        raise ValueError("empty ansatz basis")
    n = H.n_sites if n_sites is None else n_sites
    for o in basis:
        if o.n_sites != n or not o.is_hermitian():
            raise ValueError("basis operators must be Hermitian on the system's sites")
    C = [pauli_commutator(o, H) * 1j for o in basis]
    k = len(basis)
    M = np.empty((k, k))
    for i in range(k):
        for j in range(i, k):
            M[i, j] = M[j, i] = pauli_hs_inner(C[i], C[j], n).real
    b = np.array([-pauli_hs_inner(dH, c, n).real for c in C])
    coeffs, singular = _solve_flagged(M, b)
    G = dH
    for c, ci in zip(coeffs, C):
        G = G + ci * float(c)
    S = float(pauli_hs_inner(G, G, n).real)
    return VariationalAnsatz(tuple(basis), coeffs, S, singular, M, b)


def _translation_sum(n_sites: int, pattern: str) -> PauliSum:
    """Sum of all cyclic translations of a local pattern placed at site 1."""
    width = len(pattern)
    acc = []
    for s in range(n_sites):
        letters = ["I"] * n_sites
        for r, c in enumerate(pattern):
            letters[(s + r) % n_sites] = c
        acc.append(("".join(letters), 1.0))
    return PauliSum(n_sites, acc) if width <= n_sites else PauliSum.zero(n_sites)


def ising_mixed_ansatz(n_sites: int, order: int) -> list[PauliSum]:
    """Translation-invariant one-body (order 1) or up-to-two-body (order 2) ansatz.

    Order 2 is [sum Y, sum (XY + YX), sum (ZY + YZ)]; on two sites the bond sums
    carry a single bond.
    """
    def bond(p: str) -> PauliSum:
        if n_sites == 2:
            return PauliSum(2, {p: 1.0})
        return _translation_sum(n_sites, p)

    one = _translation_sum(n_sites, "Y")
    if order == 1:
        return [one]
    if order == 2:
        return [one, bond("XY") + bond("YX"), bond("ZY") + bond("YZ")]
    raise ValueError("order must be 1 or 2")


def vcd_ising_closed_form(
    n_sites: int, J: float, Z: float, X: float, J_dot: float, Z_dot: float, X_dot: float, order: int = 2
) -> tuple[float, ...]:
    """Closed-form variational coefficients for the mixed-field chain.

    Returns (alpha,) for order 1 or (alpha, beta, gamma) for order 2 multiplying
    the operators of :func:`ising_mixed_ansatz`. The right-hand side is
    (X Z_dot - X_dot Z, 0, X J_dot - X_dot J), which is the sign consistent with
    ``exact_agp``. The periodic system holds for N >= 4 only, because on three
    sites the three-body strings wrap onto two-body ones.
    """
    if n_sites == 3:
        raise ValueError("no closed form on three periodic sites; use variational_agp_solve")
    if n_sites < 2:
        raise ValueError("need at least two sites")
    rhs = np.array([X * Z_dot - X_dot * Z, 0.0, X * J_dot - X_dot * J])
    if n_sites == 2:
        M = np.array([
            [2 * J * J + 2 * X * X + 2 * Z * Z, 2 * J * X, 4 * J * Z],
            [2 * J * X, 2 * X * X + 8 * Z * Z, 6 * X * Z],
            [4 * J * Z, 6 * X * Z, 2 * J * J + 8 * X * X + 2 * Z * Z],
        ])
    else:
        M = np.array([
            [4 * J * J + 2 * X * X + 2 * Z * Z, 4 * J * X, 8 * J * Z],
            [J * X, 2 * J * J + X * X + 4 * Z * Z, 3 * X * Z],
            [4 * J * Z, 6 * X * Z, 8 * J * J + 8 * X * X + 2 * Z * Z],
        ])
    if order == 1:
        sol, _ = _solve_flagged(M[:1, :1], rhs[:1])
        return (float(sol[0]),)
    if order == 2:
        sol, _ = _solve_flagged(M, rhs)
        return tuple(float(v) for v in sol)
    raise ValueError("order must be 1 or 2")


def commutator_ansatz_basis(
    H: PauliSum,
    dH: PauliSum,
    max_order: int,
    n_sites: int | None = None,
    group: str = "strings",
    max_strings: int = 10_000,
) -> list[PauliSum]:
    """Hermitian generators supported by the odd nested commutators [H,[H,...[H,dH]]].

    Depths 1, 3, ..., 2*max_order - 1 are expanded. With ``group="strings"`` each
    distinct Pauli string is one generator; ``group="translation"`` merges strings
    related by a cyclic translation or a reflection of the chain. The result is
    orthogonalized by modified Gram-Schmidt under the Hilbert-Schmidt product.
    """
    if max_order < 1:
        raise ValueError("max_order must be at least 1")
    n = H.n_sites if n_sites is None else n_sites
    nested = dH
    support: dict[str, None] = {}
    for depth in range(1, 2 * max_order):
        nested = pauli_commutator(H, nested)
        if depth % 2 == 1:
            for letters in sorted(nested.terms):
                support.setdefault(letters, None)
            if len(support) > max_strings:
                raise BasisExplosionError(f"more than {max_strings} strings at depth {depth}")
        if len(nested) > max_strings:
            raise BasisExplosionError(f"nested commutator grew beyond {max_strings} strings")

    if group == "strings":
        raw = [PauliSum(n, {s: 1.0}) for s in support]
    elif group == "translation":
        seen: set[str] = set()
        raw = []
        for s in support:
            if s in seen:
                continue
            orbit = set()
            for shift in range(n):
                t = s[shift:] + s[:shift]
                orbit.add(t)
                orbit.add(t[::-1])
            seen |= orbit
            raw.append(PauliSum(n, {t: 1.0 for t in orbit}))
    else:
        raise ValueError(f"unknown grouping {group!r}")

    basis: list[PauliSum] = []
    for op in raw:
        v = op
        for q in basis:
            v = v - q * (pauli_hs_inner(q, v, n) / pauli_hs_inner(q, q, n)).real
        norm = math.sqrt(max(pauli_hs_inner(v, v, n).real, 0.0)) / math.sqrt(2.0**n)
        if norm < 1e-10:
            continue
        basis.append(v / v.max_abs_coeff())
    return basis


# ---------------------------------------------------------------------------
# time evolution
# ---------------------------------------------------------------------------

def evolve_schedule(
    H_of_t: Callable[[float], np.ndarray], psi0, T: float, n_steps: int
) -> list[np.ndarray]:
    """Midpoint piecewise-constant propagation; returns the n_steps + 1 states."""
    if n_steps < 1:
        raise ValueError("n_steps must be positive")
    dt = T / n_steps
    psi = np.asarray(psi0, dtype=complex)
    states = [psi]
    for j in range(n_steps):
        psi = expm_herm(H_of_t((j + 0.5) * dt), dt) @ psi
        psi = psi / np.linalg.norm(psi)
        states.append(psi)
    return states


def ground_state(H) -> tuple[float, np.ndarray]:
    evals, evecs = herm_eig(H)
    return float(evals[0]), evecs[:, 0]


def ground_fidelity_trajectory(
    H_of_t: Callable[[float], np.ndarray],
    drive_of_t: Callable[[float], np.ndarray],
    T: float,
    n_steps: int,
) -> np.ndarray:
    """Overlap with the instantaneous ground state of ``H_of_t`` along evolution under ``drive_of_t``."""
    _, psi0 = ground_state(H_of_t(0.0))
    states = evolve_schedule(drive_of_t, psi0, T, n_steps)
    dt = T / n_steps
    fids = np.empty(n_steps + 1)
    for j, psi in enumerate(states):
        _, gs = ground_state(H_of_t(j * dt))
        fids[j] = abs(np.vdot(gs, psi)) ** 2
    return fids


# ---------------------------------------------------------------------------
# phase ledger
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LZLoop:
    """Closed loop delta = d0 + r cos(2 pi t/T), nu = n0 + r sin(2 pi t/T)."""

    delta0: float = 0.0
    nu0: float = 0.0
    radius: float = 1.0
    T: float = 1.0

    def point(self, t: float) -> tuple[float, float]:
        w = 2 * math.pi / self.T
        return self.delta0 + self.radius * math.cos(w * t), self.nu0 + self.radius * math.sin(w * t)

    def rate(self, t: float) -> tuple[float, float]:
        w = 2 * math.pi / self.T
        return -self.radius * w * math.sin(w * t), self.radius * w * math.cos(w * t)


@dataclass(frozen=True)
class PhaseLedger:
    generator: str
    phi_d: float
    phi_g: float
    phi_total: float

    @property
    def expected(self) -> float:
        return self.phi_d + self.phi_g

    @property
    def mismatch(self) -> float:
        return abs(wrap_phase(self.phi_total - self.expected))


def wrap_phase(x: float) -> float:
    return (x + math.pi) % (2 * math.pi) - math.pi


_GENERATORS = ("H_adiabatic_limit", "H_plus_A", "A_only")


def phase_ledger(generator: str, lz_path, n_steps: int = 10_000, level: int = 0) -> PhaseLedger:
    """Dynamical, geometric and total phase of an eigenstate carried around a closed LZ loop.

    ``lz_path`` provides ``point(t) -> (delta, nu)``, ``rate(t)`` and ``T``. The
    geometric phase is the Pancharatnam product of successive eigenstate overlaps.
    For ``A_only`` the Hamiltonian never acts, so its dynamical phase is zero.
    """
    if generator not in _GENERATORS:
        raise ValueError(f"generator must be one of {_GENERATORS}")
    T = lz_path.T
    start, end = np.array(lz_path.point(0.0)), np.array(lz_path.point(T))
    if np.max(np.abs(start - end)) > 1e-9:
        raise PathNotClosedError(f"path starts at {start} and ends at {end}")

    def H(t):
        return lz_hamiltonian(*lz_path.point(t))

    def dH(t):
        dd, dn = lz_path.rate(t)
        return lz_hamiltonian(dd, dn)

    def A(t):
        return exact_agp(H(t), dH(t)).operator

    dt = T / n_steps
    # eigenstate track and phases on the grid
    evals0, evecs0 = herm_eig(H(0.0))
    n0 = evecs0[:, level]
    prev = n0
    overlap_prod = 1.0 + 0j
    phi_d = 0.0
    for j in range(1, n_steps + 1):
        t = j * dt
        _, v = herm_eig(H(t))
        cur = v[:, level]
        ov = np.vdot(prev, cur)
        overlap_prod *= ov / abs(ov)
        prev = cur
        e_mid = herm_eig(H((j - 0.5) * dt))[0][level]
        phi_d += e_mid * dt
    overlap_prod *= np.vdot(prev, n0) / abs(np.vdot(prev, n0))
    phi_g = float(np.angle(overlap_prod))

    if generator == "H_plus_A":
        drive = lambda t: H(t) + A(t)
    elif generator == "A_only":
        drive = A
        phi_d = 0.0
    else:
        drive = H
    psi = evolve_schedule(drive, n0, T, n_steps)[-1]
    phi_total = float(-np.angle(np.vdot(n0, psi)))
    return PhaseLedger(generator, float(phi_d), phi_g, phi_total)
