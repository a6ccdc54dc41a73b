"""GRAPE: piecewise-constant controls with exact spectral gradients.

The cost is J = 1 - |z|^2 with z = <psi*|U(T)|psi0> for state transfer or
z = Tr(U*^dagger U(T))/d for gates. Gradients come from the closed-form
derivative of each step propagator in the eigenbasis of the step Hamiltonian
combined with cached forward and backward products.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

from .models import (
    dicke_hamiltonian,
    dicke_state,
    collective_spin_ops,
    gate_control_derivative,
    gate_control_hamiltonian,
    lz_eigenstates,
    lz_hamiltonian,
)
from .qcore import SIGMA_X, SIGMA_Z, expm_herm, herm_eig

DEGENERATE_BRANCH_TOL = 1e-8


# ---------------------------------------------------------------------------
# data types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PiecewiseControl:
    """K fields by M steps of length dt with per-field box bounds."""

    values: np.ndarray
    dt: float
    bounds: tuple[tuple[float, float], ...]

    def __post_init__(self):
        vals = np.atleast_2d(np.asarray(self.values, dtype=float))
        object.__setattr__(self, "values", vals)
        if len(self.bounds) != vals.shape[0]:
            raise ValueError("one (lo, hi) bound pair is needed per field")
        for k, (lo, hi) in enumerate(self.bounds):
            if np.any(vals[k] < lo - 1e-12) or np.any(vals[k] > hi + 1e-12):
                raise ValueError(f"field {k} violates its bounds [{lo}, {hi}]")

    @property
    def n_fields(self) -> int:
        return self.values.shape[0]

    @property
    def n_steps(self) -> int:
        return self.values.shape[1]

    @property
    def T(self) -> float:
        return self.dt * self.n_steps

    def with_values(self, values) -> "PiecewiseControl":
        return replace(self, values=np.asarray(values, dtype=float).reshape(self.values.shape))

    def flat_bounds(self) -> list[tuple[float, float]]:
        return [b for b in self.bounds for _ in range(self.n_steps)]


@dataclass(frozen=True)
class ControlProblem:
    """Controlled Hamiltonian H(alpha) with per-field derivatives dH/dalpha_k.

    ``hamiltonian`` and ``derivatives`` receive the K control values of one step.
    ``initial`` is psi0 for the state kind and is ignored for the unitary kind.
    """

    kind: str
    hamiltonian: Callable[[np.ndarray], np.ndarray]
    derivatives: Callable[[np.ndarray], Sequence[np.ndarray]]
    target: np.ndarray
    initial: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        if self.kind not in ("state", "unitary"):
            raise ValueError("kind must be 'state' or 'unitary'")
        tgt = np.asarray(self.target, dtype=complex)
        if self.kind == "state":
            if self.initial is None:
                raise ValueError("state problems need an initial state")
            if abs(np.linalg.norm(tgt) - 1) > 1e-10:
                raise ValueError("target state is not normalized")
        elif np.max(np.abs(tgt.conj().T @ tgt - np.eye(tgt.shape[0]))) > 1e-10:
            raise ValueError("target operator is not unitary")

    @property
    def dim(self) -> int:
        return np.asarray(self.target).shape[0]


@dataclass
class OptimReport:
    final_cost: float
    iterations: int
    gradient_norm: float
    cost_history: list[float]
    seed_id: int | str
    controls: PiecewiseControl
    message: str = ""
    extra: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# propagation and gradients
# ---------------------------------------------------------------------------

def _step_eig(problem: ControlProblem, controls: PiecewiseControl):
    out = []
    for j in range(controls.n_steps):
        alpha = controls.values[:, j]
        evals, evecs = herm_eig(problem.hamiltonian(alpha))
        out.append((evals, evecs, alpha))
    return out


def _unitary_from_eig(evals, evecs, dt):
    return (evecs * np.exp(-1j * evals * dt)) @ evecs.conj().T


def propagate(problem: ControlProblem, controls: PiecewiseControl):
    """Final state (or propagator) and the cached step unitaries U_1..U_M."""
    steps = [_unitary_from_eig(e, v, controls.dt) for e, v, _ in _step_eig(problem, controls)]
    if problem.kind == "state":
        out = np.asarray(problem.initial, dtype=complex)
    else:
        out = np.eye(problem.dim, dtype=complex)
    for U in steps:
        out = U @ out
    return out, steps


def overlap_z(problem: ControlProblem, controls: PiecewiseControl) -> complex:
    final, _ = propagate(problem, controls)
    return _overlap(problem, final)


def _overlap(problem: ControlProblem, final) -> complex:
    tgt = np.asarray(problem.target, dtype=complex)
    if problem.kind == "state":
        return complex(np.vdot(tgt, final))
    return complex(np.vdot(tgt, final) / problem.dim)


def cost(problem: ControlProblem, controls: PiecewiseControl) -> float:
    return max(0.0, 1.0 - abs(overlap_z(problem, controls)) ** 2)


def _du_from_eig(evals, evecs, dH, dt):
    el = evals[:, None]
    em = evals[None, :]
    diff = el - em
    ph_l = np.exp(-1j * el * dt)
    ph_m = np.exp(-1j * em * dt)
    near = np.abs(diff) * dt < DEGENERATE_BRANCH_TOL
    safe = np.where(near, 1.0, diff)
    factor = np.where(near, -1j * dt * ph_m * np.ones_like(diff), (ph_l - ph_m) / safe)
    dh_eig = evecs.conj().T @ dH @ evecs
    return evecs @ (factor * dh_eig) @ evecs.conj().T


def du_dalpha(H, dH, dt: float) -> np.ndarray:
    """Exact derivative of exp(-i H dt) along dH, evaluated in the eigenbasis of H."""
    evals, evecs = herm_eig(H)
    return _du_from_eig(evals, evecs, np.asarray(dH, dtype=complex), dt)


def cost_and_grad(problem: ControlProblem, controls: PiecewiseControl) -> tuple[float, np.ndarray]:
    """J and dJ/dalpha (shape K x M) from forward/backward cached products."""
    dt = controls.dt
    eig = _step_eig(problem, controls)
    Us = [_unitary_from_eig(e, v, dt) for e, v, _ in eig]
    M = len(Us)
    tgt = np.asarray(problem.target, dtype=complex)
    if problem.kind == "state":
        fwd = [np.asarray(problem.initial, dtype=complex)]
        for U in Us:
            fwd.append(U @ fwd[-1])
        bwd = [None] * (M + 1)
        bwd[M] = tgt.conj()
        for j in range(M - 1, -1, -1):
            bwd[j] = bwd[j + 1] @ Us[j]
        z = complex(bwd[M] @ fwd[M])
    else:
        d = problem.dim
        fwd = [np.eye(d, dtype=complex)]
        for U in Us:
            fwd.append(U @ fwd[-1])
        bwd = [None] * (M + 1)
        bwd[M] = tgt.conj().T / d
        for j in range(M - 1, -1, -1):
            bwd[j] = bwd[j + 1] @ Us[j]
        z = complex(np.trace(bwd[M] @ fwd[M]))
    grad = np.zeros_like(controls.values)
    for j, (evals, evecs, alpha) in enumerate(eig):
        for k, dH in enumerate(problem.derivatives(alpha)):
            dU = _du_from_eig(evals, evecs, np.asarray(dH, dtype=complex), dt)
            if problem.kind == "state":
                dz = bwd[j + 1] @ dU @ fwd[j]
            else:
                dz = np.sum((fwd[j] @ bwd[j + 1]).T * dU)
            grad[k, j] = -2.0 * (np.conj(z) * dz).real
    return max(0.0, 1.0 - abs(z) ** 2), grad


# ---------------------------------------------------------------------------
# optimization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OptimSettings:
    max_iters: int = 500
    grad_tol: float = 1e-12
    cost_tol: float = 1e-14


def optimize(
    problem: ControlProblem,
    seed: PiecewiseControl,
    settings: OptimSettings = OptimSettings(),
    seed_id: int | str = 0,
) -> OptimReport:
    """Bounded limited-memory quasi-Newton descent (L-BFGS-B) on J with the exact gradient."""
    shape = seed.values.shape
    lo = np.array([b[0] for b in seed.flat_bounds()])
    hi = np.array([b[1] for b in seed.flat_bounds()])
    x0 = np.clip(seed.values.ravel(), lo, hi)
    J0, g0 = cost_and_grad(problem, seed.with_values(x0))
    history = [J0]
    best = {"x": x0.copy(), "J": J0, "g": g0.ravel()}
    if J0 <= settings.cost_tol:
        return OptimReport(J0, 0, float(np.linalg.norm(g0)), history, seed_id, seed.with_values(x0), "seed already converged")

    def fun(x):
        J, g = cost_and_grad(problem, seed.with_values(x))
        if J < best["J"]:
            best.update(x=x.copy(), J=J, g=g.ravel())
        return J, g.ravel()

    def callback(intermediate_result):
        J = float(intermediate_result.fun)
        history.append(min(J, history[-1]))
        if J <= settings.cost_tol:
            raise StopIteration

    res = minimize(
        fun,
        x0,
        jac=True,
        method="L-BFGS-B",
        bounds=list(zip(lo, hi)),
        callback=callback,
        options={"maxiter": settings.max_iters, "gtol": settings.grad_tol, "ftol": 1e-300, "maxcor": 20},
    )
    x = np.clip(best["x"], lo, hi)
    return OptimReport(
        float(best["J"]),
        int(res.nit),
        float(np.linalg.norm(best["g"])),
        history,
        seed_id,
        seed.with_values(x),
        str(res.message),
    )


def random_seed_controls(template: PiecewiseControl, rng: np.random.Generator) -> PiecewiseControl:
    vals = np.empty_like(template.values)
    for k, (lo, hi) in enumerate(template.bounds):
        vals[k] = rng.uniform(lo, hi, size=template.n_steps)
    return template.with_values(vals)


def multi_start(
    problem: ControlProblem,
    template: PiecewiseControl,
    n_seeds: int = 10,
    rng_seed: int = 0,
    include_zero: bool = True,
    settings: OptimSettings = OptimSettings(),
    extra_seeds: Sequence[PiecewiseControl] = (),
) -> OptimReport:
    """Best of ``n_seeds`` uniform random seeds, the all-zero seed and any extra seeds."""
    rng = np.random.default_rng(rng_seed)
    seeds: list[tuple[int | str, PiecewiseControl]] = []
    for i in range(n_seeds):
        seeds.append((i, random_seed_controls(template, rng)))
    if include_zero:
        zero = np.zeros_like(template.values)
        for k, (lo, hi) in enumerate(template.bounds):
            zero[k] = np.clip(0.0, lo, hi)
        seeds.append(("zero", template.with_values(zero)))
    for i, s in enumerate(extra_seeds):
        seeds.append((f"extra{i}", s))
    best: OptimReport | None = None
    for sid, s in seeds:
        rep = optimize(problem, s, settings, sid)
        if best is None or rep.final_cost < best.final_cost:
            best = rep
        if best.final_cost <= settings.cost_tol:
            break
    assert best is not None
    return best


@dataclass
class QSLResult:
    T_star: float | None
    T_values: list[float]
    costs: list[float]
    reports: list[OptimReport]


def qsl_sweep(
    family: Callable[[float], tuple[ControlProblem, PiecewiseControl]],
    T_list: Sequence[float],
    threshold: float = 1e-4,
    n_seeds: int = 10,
    rng_seed: int = 0,
    settings: OptimSettings = OptimSettings(),
    restarts_per_T: int = 0,
) -> QSLResult:
    """Warm-started sweep over descending T.

    ``family(T)`` returns the problem and a control template at duration T. The
    largest T is solved by multi-start; each later T starts from the previous
    optimum with dt rescaled (same M), plus ``restarts_per_T`` random seeds.
    T_star is the smallest T whose optimized cost is at most ``threshold``.
    """
    Ts = sorted((float(t) for t in T_list), reverse=True)
    reports: list[OptimReport] = []
    prev: OptimReport | None = None
    for i, T in enumerate(Ts):
        problem, template = family(T)
        if prev is None:
            rep = multi_start(problem, template, n_seeds, rng_seed, True, settings)
        else:
            warm = template.with_values(_regrid(prev.controls.values, template.n_steps))
            rep = optimize(problem, _clip_to(warm), settings, "warm")
            if restarts_per_T:
                alt = multi_start(problem, template, restarts_per_T, rng_seed + i, False, settings)
                if alt.final_cost < rep.final_cost:
                    rep = alt
        reports.append(rep)
        prev = rep
    costs = [r.final_cost for r in reports]
    ok = [T for T, c in zip(Ts, costs) if c <= threshold]
    return QSLResult(min(ok) if ok else None, Ts, costs, reports)


def _regrid(values: np.ndarray, n_steps: int) -> np.ndarray:
    """Nearest-step copy onto a grid with ``n_steps`` steps over the same duration."""
    m_old = values.shape[1]
    if m_old == n_steps:
        return values.copy()
    idx = np.minimum((np.arange(n_steps) + 0.5) * m_old // n_steps, m_old - 1).astype(int)
    return values[:, idx]


def _clip_to(ctrl: PiecewiseControl) -> PiecewiseControl:
    vals = ctrl.values.copy()
    for k, (lo, hi) in enumerate(ctrl.bounds):
        vals[k] = np.clip(vals[k], lo, hi)
    return ctrl.with_values(vals)


def mandelstam_tamm_bound(problem: ControlProblem, controls: PiecewiseControl) -> float:
    """arccos|<psi*|psi0>| divided by the time-averaged energy spread along the trajectory.

    The spread of H_j is conserved while H_j acts, so one evaluation per step is exact.
    """
    if problem.kind != "state":
        raise ValueError("the bound is defined for state transfer")
    psi = np.asarray(problem.initial, dtype=complex)
    angle = math.acos(min(1.0, abs(np.vdot(problem.target, psi))))
    if angle == 0.0:
        return 0.0
    spread = 0.0
    for j in range(controls.n_steps):
        H = problem.hamiltonian(controls.values[:, j])
        e1 = np.vdot(psi, H @ psi).real
        e2 = np.vdot(H @ psi, H @ psi).real
        spread += math.sqrt(max(e2 - e1 * e1, 0.0))
        psi = expm_herm(H, controls.dt) @ psi
    mean_spread = spread / controls.n_steps
    return angle / mean_spread if mean_spread > 0 else math.inf


# ---------------------------------------------------------------------------
# problem builders
# ---------------------------------------------------------------------------

def lz_problem(delta: float = 1.0, nu0: float = 1.0) -> ControlProblem:
    """Transfer the ground state at nu = -nu0 to the ground state at nu = +nu0; the control is nu."""
    psi0 = lz_eigenstates(delta, -nu0)[0]
    target = lz_eigenstates(delta, nu0)[0]
    return ControlProblem(
        "state",
        lambda a: lz_hamiltonian(delta, a[0]),
        lambda a: [SIGMA_Z],
        target,
        psi0,
        f"lz(delta={delta}, nu0={nu0})",
    )


def lz_template(delta: float, T: float, n_steps: int = 10, bound: float | None = None) -> PiecewiseControl:
    b = 2.0 * delta if bound is None else bound
    return PiecewiseControl(np.zeros((1, n_steps)), T / n_steps, ((-b, b),))


def gate_target(axis: str, phi: float) -> np.ndarray:
    sigma = {"x": SIGMA_X, "z": SIGMA_Z}[axis]
    return expm_herm(sigma, phi / 2.0)


def gate_problem(axis: str = "x", phi: float = math.pi / 2, omega: float = 1.0) -> ControlProblem:
    """Phase control alpha(t) of (Omega/2)(cos alpha sigma_x + sin alpha sigma_y) for U_axis(phi)."""
    return ControlProblem(
        "unitary",
        lambda a: gate_control_hamiltonian(omega, a[0]),
        lambda a: [gate_control_derivative(omega, a[0])],
        gate_target(axis, phi),
        None,
        f"gate(U_{axis}({phi:.6g}), omega={omega})",
    )


def gate_template(T: float, n_steps: int = 10, bound: float = 2 * math.pi) -> PiecewiseControl:
    return PiecewiseControl(np.zeros((1, n_steps)), T / n_steps, ((-bound, bound),))


def dicke_problem(n_particles: int, k: int, beta: float = 1.0) -> ControlProblem:
    ops = collective_spin_ops(n_particles)
    return ControlProblem(
        "state",
        lambda a: dicke_hamiltonian(n_particles, beta, a[0], a[1]),
        lambda a: [ops.Jx, ops.Jy],
        dicke_state(n_particles, k),
        dicke_state(n_particles, 0),
        f"dicke(N={n_particles}, k={k}, beta={beta})",
    )


def dicke_template(T: float, n_steps: int = 15, omega_max: float = 3.0) -> PiecewiseControl:
    return PiecewiseControl(np.zeros((2, n_steps)), T / n_steps, ((-omega_max, omega_max),) * 2)


def dicke_prep(
    n_particles: int,
    k: int,
    T: float,
    n_steps: int = 15,
    beta: float = 1.0,
    omega_max_factor: float = 3.0,
    n_seeds: int = 10,
    rng_seed: int = 0,
    settings: OptimSettings = OptimSettings(),
) -> OptimReport:
    """Two-field GRAPE from the top Dicke state to the k-excitation one, |Omega| <= 3 beta."""
    if not 0 <= k <= n_particles:
        raise ValueError("k outside 0..N")
    problem = dicke_problem(n_particles, k, beta)
    template = dicke_template(T, n_steps, omega_max_factor * beta)
    return multi_start(problem, template, n_seeds, rng_seed, True, settings)
