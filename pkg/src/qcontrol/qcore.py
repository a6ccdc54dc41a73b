"""Dense linear algebra on small Hilbert spaces and an exact Pauli-string algebra.

States are 1-D complex numpy arrays and operators are 2-D complex arrays.
Site 1 of a Pauli string is the leftmost Kronecker factor, i.e. the most
significant bit of the computational-basis index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .errors import (
    CapExceededError,
    DimensionMismatchError,
    ImpossibleBranchError,
    NotHermitianError,
)

StateVector = np.ndarray
DenseOperator = np.ndarray

HERMITIAN_TOL = 1e-12
PRUNE_TOL = 1e-14
DENSE_SITE_CAP = 12

SIGMA_I = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI_MATRICES = {"I": SIGMA_I, "X": SIGMA_X, "Y": SIGMA_Y, "Z": SIGMA_Z}


# ---------------------------------------------------------------------------
# dense operations
# ---------------------------------------------------------------------------

def _as_operator(H) -> np.ndarray:
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise DimensionMismatchError(f"expected a square matrix, got shape {H.shape}")
    return H


def hermitian_asymmetry(H) -> float:
    H = _as_operator(H)
    return float(np.max(np.abs(H - H.conj().T))) if H.size else 0.0


def check_hermitian(H, tol: float = HERMITIAN_TOL) -> np.ndarray:
    """Return ``H`` as a complex array, raising if it is not Hermitian.

    The tolerance is relative to the largest entry so that large operators
    built from rounded sums are not rejected spuriously.
    """
    H = _as_operator(H)
    asym = hermitian_asymmetry(H)
    scale = max(1.0, float(np.max(np.abs(H)))) if H.size else 1.0
    if asym > tol * scale:
        raise NotHermitianError(asym)
    return H


def herm_eig(H) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and eigenvector columns of a Hermitian matrix."""
    H = check_hermitian(H)
    Hs = 0.5 * (H + H.conj().T)
    evals, evecs = np.linalg.eigh(Hs)
    return evals, evecs


def expm_herm(H, t: float) -> np.ndarray:
    """exp(-i H t) through the spectral decomposition of ``H``."""
    evals, evecs = herm_eig(H)
    return (evecs * np.exp(-1j * evals * t)) @ evecs.conj().T


def normalize(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return psi / np.linalg.norm(psi)


def fidelity_state(a, b) -> float:
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"state shapes differ: {a.shape} vs {b.shape}")
    return float(min(1.0, abs(np.vdot(a, b)) ** 2))


def fidelity_unitary(U, V) -> float:
    """(1/d^2)|Tr(V^dagger U)|^2."""
    U = _as_operator(U)
    V = _as_operator(V)
    if U.shape != V.shape:
        raise DimensionMismatchError(f"operator shapes differ: {U.shape} vs {V.shape}")
    d = U.shape[0]
    return float(min(1.0, abs(np.vdot(V, U)) ** 2 / d**2))


def kron(*ops) -> np.ndarray:
    out = np.array([[1.0 + 0j]])
    for op in ops:
        out = np.kron(out, np.asarray(op, dtype=complex))
    return out


def project_and_renormalize(psi, P, tol: float = PRUNE_TOL) -> tuple[np.ndarray, float]:
    """Apply projector ``P`` and renormalize; returns the branch probability too."""
    psi = np.asarray(psi, dtype=complex)
    P = _as_operator(P)
    if P.shape[0] != psi.shape[0]:
        raise DimensionMismatchError("projector and state dimensions differ")
    if np.max(np.abs(P @ P - P)) > 1e-10:
        raise ValueError("operator is not a projector")
    phi = P @ psi
    prob = float(np.real(np.vdot(phi, phi)))
    if prob < tol:
        raise ImpossibleBranchError(prob)
    return phi / math.sqrt(prob), prob


# ---------------------------------------------------------------------------
# Bloch sphere
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BlochCoords:
    theta: float
    phi: float

    def vector(self) -> np.ndarray:
        st = math.sin(self.theta)
        return np.array([st * math.cos(self.phi), st * math.sin(self.phi), math.cos(self.theta)])


def bloch_from_state(psi) -> BlochCoords:
    psi = np.asarray(psi, dtype=complex)
    if psi.shape != (2,):
        raise DimensionMismatchError("Bloch coordinates need a two-level state")
    a0 = min(1.0, abs(psi[0]))
    theta = 2.0 * math.acos(a0)
    if abs(psi[0]) < 1e-15 or abs(psi[1]) < 1e-15:
        phi = 0.0
    else:
        phi = (np.angle(psi[1]) - np.angle(psi[0])) % (2 * math.pi)
    return BlochCoords(theta, float(phi))


def state_from_bloch(b: BlochCoords) -> np.ndarray:
    return np.array([math.cos(b.theta / 2), np.exp(1j * b.phi) * math.sin(b.theta / 2)], dtype=complex)


# ---------------------------------------------------------------------------
# Pauli algebra
# ---------------------------------------------------------------------------

# single-site product table: (a, b) -> (phase, letter) with sigma_a sigma_b = phase * sigma_c
_PRODUCT: dict[tuple[str, str], tuple[complex, str]] = {}
for _a in "IXYZ":
    _PRODUCT[("I", _a)] = (1, _a)
    _PRODUCT[(_a, "I")] = (1, _a)
    _PRODUCT[(_a, _a)] = (1, "I")
for _a, _b, _c in (("X", "Y", "Z"), ("Y", "Z", "X"), ("Z", "X", "Y")):
    _PRODUCT[(_a, _b)] = (1j, _c)
    _PRODUCT[(_b, _a)] = (-1j, _c)


def _mul_letters(a: str, b: str) -> tuple[complex, str]:
    phase: complex = 1
    out = []
    for x, y in zip(a, b):
        p, c = _PRODUCT[(x, y)]
        phase *= p
        out.append(c)
    return phase, "".join(out)


@dataclass(frozen=True)
class PauliString:
    coeff: complex
    letters: str

    def __post_init__(self):
        if any(c not in "IXYZ" for c in self.letters):
            raise ValueError(f"invalid Pauli letters {self.letters!r}")

    @property
    def n_sites(self) -> int:
        return len(self.letters)


def pauli_mul(a: PauliString, b: PauliString) -> PauliString:
    if a.n_sites != b.n_sites:
        raise DimensionMismatchError(f"site counts differ: {a.n_sites} vs {b.n_sites}")
    phase, letters = _mul_letters(a.letters, b.letters)
    return PauliString(complex(a.coeff * b.coeff * phase), letters)


class PauliSum:
    """Linear combination of Pauli strings on a fixed number of sites."""

    __slots__ = ("n_sites", "_terms")

    def __init__(self, n_sites: int, terms: Mapping[str, complex] | Iterable[tuple[str, complex]] = ()):
        self.n_sites = int(n_sites)
        acc: dict[str, complex] = {}
        items = terms.items() if isinstance(terms, Mapping) else terms
        for letters, c in items:
            if len(letters) != self.n_sites:
                raise DimensionMismatchError(f"string {letters!r} does not span {self.n_sites} sites")
            acc[letters] = acc.get(letters, 0) + complex(c)
        self._terms = {k: v for k, v in acc.items() if abs(v) >= PRUNE_TOL}

    # construction helpers -------------------------------------------------
    @classmethod
    def single(cls, n_sites: int, ops: Mapping[int, str], coeff: complex = 1.0) -> "PauliSum":
        """Build ``coeff * prod_j sigma^{ops[j]}_j`` with 1-based site indices."""
        letters = ["I"] * n_sites
        for site, letter in ops.items():
            if not 1 <= site <= n_sites:
                raise ValueError(f"site {site} outside 1..{n_sites}")
            letters[site - 1] = letter
        return cls(n_sites, {"".join(letters): coeff})

    @classmethod
    def identity(cls, n_sites: int, coeff: complex = 1.0) -> "PauliSum":
        return cls(n_sites, {"I" * n_sites: coeff})

    @classmethod
    def zero(cls, n_sites: int) -> "PauliSum":
        return cls(n_sites)

    @property
    def terms(self) -> dict[str, complex]:
        return dict(self._terms)

    def __len__(self) -> int:
        return len(self._terms)

    def __iter__(self):
        return iter(sorted(self._terms.items()))

    def coeff(self, letters: str) -> complex:
        return self._terms.get(letters, 0j)

    def strings(self) -> list[PauliString]:
        return [PauliString(c, k) for k, c in sorted(self._terms.items())]

    # arithmetic -----------------------------------------------------------
    def _check(self, other: "PauliSum") -> None:
        if self.n_sites != other.n_sites:
            raise DimensionMismatchError(f"site counts differ: {self.n_sites} vs {other.n_sites}")

    def __add__(self, other: "PauliSum") -> "PauliSum":
        self._check(other)
        return PauliSum(self.n_sites, list(self._terms.items()) + list(other._terms.items()))

    def __sub__(self, other: "PauliSum") -> "PauliSum":
        return self + (-1.0) * other

    def __neg__(self) -> "PauliSum":
        return (-1.0) * self

    def __mul__(self, scalar) -> "PauliSum":
        if isinstance(scalar, PauliSum):
            return self @ scalar
        return PauliSum(self.n_sites, {k: v * scalar for k, v in self._terms.items()})

    __rmul__ = __mul__

    def __truediv__(self, scalar) -> "PauliSum":
        return self * (1.0 / scalar)

    def __matmul__(self, other: "PauliSum") -> "PauliSum":
        self._check(other)
        acc: dict[str, complex] = {}
        for ka, ca in self._terms.items():
            for kb, cb in other._terms.items():
                phase, k = _mul_letters(ka, kb)
                acc[k] = acc.get(k, 0) + ca * cb * phase
        return PauliSum(self.n_sites, acc)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PauliSum):
            return NotImplemented
        return self.n_sites == other.n_sites and (self - other).is_zero()

    def __repr__(self) -> str:
        if not self._terms:
            return f"PauliSum({self.n_sites}, 0)"
        body = " + ".join(f"({c:.6g}){k}" for k, c in sorted(self._terms.items()))
        return f"PauliSum({self.n_sites}, {body})"

    def is_zero(self, tol: float = PRUNE_TOL) -> bool:
        return all(abs(v) < tol for v in self._terms.values())

    def dagger(self) -> "PauliSum":
        return PauliSum(self.n_sites, {k: np.conj(v) for k, v in self._terms.items()})

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return all(abs(v.imag) <= tol for v in self._terms.values())

    def max_abs_coeff(self) -> float:
        return max((abs(v) for v in self._terms.values()), default=0.0)

    def to_dense(self) -> np.ndarray:
        return pauli_to_dense(self, self.n_sites)


def pauli_commutator(a: PauliSum, b: PauliSum) -> PauliSum:
    """[a, b] computed symbolically; only anticommuting string pairs contribute."""
    a._check(b)
    acc: dict[str, complex] = {}
    for ka, ca in a._terms.items():
        for kb, cb in b._terms.items():
            phase, k = _mul_letters(ka, kb)
            phase_rev, _ = _mul_letters(kb, ka)
            if phase != phase_rev:
                acc[k] = acc.get(k, 0) + ca * cb * (phase - phase_rev)
    return PauliSum(a.n_sites, acc)


def pauli_hs_inner(a: PauliSum, b: PauliSum, n_sites: int | None = None) -> complex:
    """Hilbert-Schmidt inner product Tr(a^dagger b) = 2^N sum conj(a_s) b_s."""
    a._check(b)
    n = a.n_sites if n_sites is None else n_sites
    small, large = (a._terms, b._terms) if len(a._terms) <= len(b._terms) else (b._terms, a._terms)
    total = 0j
    for k in small:
        if k in large:
            total += np.conj(a._terms[k]) * b._terms[k]
    return complex(2.0**n * total)


def _string_dense(letters: str) -> np.ndarray:
    n = len(letters)
    d = 1 << n
    flip = 0
    zmask = 0
    n_y = 0
    for pos, c in enumerate(letters):
        bit = 1 << (n - 1 - pos)
        if c in "XY":
            flip |= bit
        if c in "ZY":
            zmask |= bit
        if c == "Y":
            n_y += 1
    cols = np.arange(d)
    parity = np.zeros(d, dtype=np.int64)
    masked = cols & zmask
    while np.any(masked):
        parity ^= masked & 1
        masked >>= 1
    vals = (1j**n_y) * np.where(parity == 1, -1.0, 1.0)
    out = np.zeros((d, d), dtype=complex)
    out[cols ^ flip, cols] = vals
    return out


def pauli_to_dense(s: PauliSum, n_sites: int | None = None, cap: int = DENSE_SITE_CAP) -> np.ndarray:
    n = s.n_sites if n_sites is None else n_sites
    if n != s.n_sites:
        raise DimensionMismatchError(f"sum spans {s.n_sites} sites, requested {n}")
    if n > cap:
        raise CapExceededError(f"{n} sites exceeds the dense cap of {cap}")
    d = 1 << n
    out = np.zeros((d, d), dtype=complex)
    for letters, c in s._terms.items():
        out += c * _string_dense(letters)
    return out
