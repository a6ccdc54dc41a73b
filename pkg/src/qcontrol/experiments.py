"""Named experiments: each maps a parameter dict to columns and scalar results.

The CLI validates parameters against ``EXPERIMENTS[name].defaults`` before calling
``run``; the runners themselves assume complete, well-typed parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from . import grape, rl, sta
from .models import (
    IsingMixedParams,
    ising_mixed_derivative,
    ising_mixed_hamiltonian,
    ising_momentum_modes,
    ising_tf_field_derivative,
    ising_tf_hamiltonian,
    lmg_field_derivative,
    lmg_hamiltonian,
    lz_hamiltonian,
)
from .qcore import expm_herm


@dataclass
class ResultTable:
    columns: dict[str, list]
    scalars: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) > 1:
            raise ValueError(f"columns have unequal lengths {sorted(lengths)}")

    @property
    def n_rows(self) -> int:
        return len(next(iter(self.columns.values()))) if self.columns else 0


@dataclass(frozen=True)
class Experiment:
    name: str
    doc: str
    defaults: dict[str, Any]
    run: Callable[[dict, int], ResultTable]


# ---------------------------------------------------------------------------
# counterdiabatic driving
# ---------------------------------------------------------------------------

def lz_cd_run(p: dict, seed: int) -> ResultTable:
    delta, T, n = p["delta"], p["T"], p["n_steps"]
    rate = (p["nu_end"] - p["nu_start"]) / T

    def H(t):
        return lz_hamiltonian(delta, p["nu_start"] + rate * t)

    def H_cd(t):
        nu = p["nu_start"] + rate * t
        return H(t) + sta.cd_lz_coefficient(delta, nu, rate) * np.array([[0, -1j], [1j, 0]])

    bare = sta.ground_fidelity_trajectory(H, H, T, n)
    cd = sta.ground_fidelity_trajectory(H, H_cd, T, n)
    t = np.linspace(0.0, T, n + 1)
    return ResultTable(
        {"t": t.tolist(), "fidelity_bare": bare.tolist(), "fidelity_cd": cd.tolist()},
        {"final_fidelity_bare": float(bare[-1]), "min_fidelity_cd": float(cd.min())},
    )


class IsingDense:
    """Dense x-coupled chain H(g) = H(0) + g dH and range-resolved CD terms, built once."""

    def __init__(self, n_sites: int):
        self.n = n_sites
        self.H0 = ising_tf_hamiltonian(n_sites, 0.0).to_dense()
        self.dH = ising_tf_field_derivative(n_sites).to_dense()
        self.ranges = list(range(1, n_sites // 2 + 1))
        self._unit = {m: sta.ising_gs_cd(n_sites, 1.0, 1.0, [m]).to_dense() for m in self.ranges}

    def hamiltonian(self, g: float) -> np.ndarray:
        return self.H0 + g * self.dH

    def cd(self, g: float, g_dot: float, ranges=None) -> np.ndarray:
        out = np.zeros_like(self.H0)
        for m in self.ranges if ranges is None else ranges:
            scale = sta.ising_h_coefficient(m, self.n, g) / sta.ising_h_coefficient(m, self.n, 1.0)
            out = out + (g_dot * scale) * self._unit[m]
        return out


def ising_cd_run(p: dict, seed: int) -> ResultTable:
    N, T, n = p["n_sites"], p["T"], p["n_steps"]
    g0, g1 = p["g_start"], p["g_end"]
    g_dot = (g1 - g0) / T
    model = IsingDense(N)

    def g(t):
        return g0 + g_dot * t

    def H(t):
        return model.hamiltonian(g(t))

    protocols = {
        "fidelity_bare": H,
        "fidelity_full": lambda t: H(t) + model.cd(g(t), g_dot),
        "fidelity_2body": lambda t: H(t) + model.cd(g(t), g_dot, [1]),
        "fidelity_3body": lambda t: H(t) + model.cd(g(t), g_dot, [2]),
    }
    cols = {"t": np.linspace(0.0, T, n + 1).tolist()}
    scalars = {}
    for name, drive in protocols.items():
        f = sta.ground_fidelity_trajectory(H, drive, T, n)
        cols[name] = f.tolist()
        scalars["final_" + name] = float(f[-1])
    return ResultTable(cols, scalars)


def ising_momentum_cd_run(p: dict, seed: int) -> ResultTable:
    N, T, n = p["n_sites"], p["T"], p["n_steps"]
    g0, g1 = p["g_start"], p["g_end"]
    g_dot = (g1 - g0) / T
    model = IsingDense(N)

    def g(t):
        return g0 + g_dot * t

    def H(t):
        return model.hamiltonian(g(t))

    cols = {"t": np.linspace(0.0, T, n + 1).tolist()}
    for label, use_cd in (("bare", False), ("cd", True)):
        drive = (lambda t: H(t) + model.cd(g(t), g_dot)) if use_cd else H
        spin = sta.ground_fidelity_trajectory(H, drive, T, n)
        mom = np.ones(n + 1)
        for m in range(N // 2):
            def Hk(t, m=m):
                return ising_momentum_modes(N, g(t))[0][m].hamiltonian()

            def drive_k(t, m=m, use_cd=use_cd):
                out = Hk(t)
                return out + sta.ising_momentum_cd(N, g(t), g_dot)[m] if use_cd else out

            mom = mom * sta.ground_fidelity_trajectory(Hk, drive_k, T, n)
        cols[f"fidelity_spin_{label}"] = spin.tolist()
        cols[f"fidelity_momentum_{label}"] = mom.tolist()
    diff = max(
        float(np.max(np.abs(np.array(cols[f"fidelity_spin_{k}"]) - np.array(cols[f"fidelity_momentum_{k}"]))))
        for k in ("bare", "cd")
    )
    return ResultTable(cols, {"max_abs_difference": diff})


def lmg_final_fidelities(N: int, T: float, g0: float, g_delta: float, n_steps: int) -> dict[str, float]:
    g_dot = g_delta / T
    dH = lmg_field_derivative(N)

    def g(t):
        return sta.lmg_ramp(t, T, g0, g_delta)

    def H(t):
        return lmg_hamiltonian(N, g(t))

    drives = {
        "fidelity_bare": H,
        "fidelity_approx": lambda t: H(t) + sta.lmg_gs_cd(N, g(t), g_dot),
        "fidelity_approx_squeezing": lambda t: H(t) + sta.lmg_gs_cd(N, g(t), g_dot, squeezing_rate=True),
        "fidelity_exact": lambda t: H(t) + g_dot * sta.exact_agp(H(t), dH).operator,
    }
    return {k: float(sta.ground_fidelity_trajectory(H, d, T, n_steps)[-1]) for k, d in drives.items()}


def lmg_cd_run(p: dict, seed: int) -> ResultTable:
    cols: dict[str, list] = {"n_particles": []}
    for N in p["n_particles"]:
        res = lmg_final_fidelities(int(N), p["T"], p["g_start"], p["g_delta"], p["n_steps"])
        cols["n_particles"].append(int(N))
        for k, v in res.items():
            cols.setdefault(k, []).append(v)
    return ResultTable(cols)


def lmg_pulse_scan_run(p: dict, seed: int) -> ResultTable:
    a = np.linspace(p["a_min"], p["a_max"], p["n_a"])
    b = np.linspace(p["b_min"], p["b_max"], p["n_b"])
    scan = sta.lmg_pulse_scan(p["n_particles"], a, b, p["T"], p["g_start"], p["g_delta"], p["n_steps"])
    aa, bb = np.meshgrid(a, b, indexing="ij")
    best_a, best_b, best_f = scan.best()
    return ResultTable(
        {"a": aa.ravel().tolist(), "b": bb.ravel().tolist(), "fidelity": scan.fidelity.ravel().tolist()},
        {"best_a": best_a, "best_b": best_b, "best_fidelity": best_f},
    )


def mixed_ising_sweep(N: int, Ts, n_steps: int) -> dict[str, list[float]]:
    """Final ground-state fidelities of bare, one-body and two-body variational CD for each T.

    With lam = t/T the drive is H(lam) + A(lam)/T and A depends on lam alone, so the
    variational solves on the midpoint grid are shared by every duration.
    """
    params = IsingMixedParams(N)
    lam_mid = (np.arange(n_steps) + 0.5) / n_steps
    H_mid = [ising_mixed_hamiltonian(params, lam) for lam in lam_mid]
    dH_mid = [ising_mixed_derivative(params, lam) for lam in lam_mid]
    A_mid = {0: [np.zeros((2**N, 2**N), dtype=complex)] * n_steps}
    for order in (1, 2):
        basis = sta.ising_mixed_ansatz(N, order)
        A_mid[order] = [sta.variational_agp_solve(H, dH, basis).operator().to_dense() for H, dH in zip(H_mid, dH_mid)]
    H_dense = [H.to_dense() for H in H_mid]
    _, psi0 = sta.ground_state(ising_mixed_hamiltonian(params, 0.0).to_dense())
    _, target = sta.ground_state(ising_mixed_hamiltonian(params, 1.0).to_dense())
    out: dict[str, list[float]] = {"fidelity_bare": [], "fidelity_1body": [], "fidelity_2body": []}
    for T in Ts:
        dt = T / n_steps
        for order, key in ((0, "fidelity_bare"), (1, "fidelity_1body"), (2, "fidelity_2body")):
            psi = psi0
            for Hj, Aj in zip(H_dense, A_mid[order]):
                psi = expm_herm(Hj + Aj / T, dt) @ psi
            out[key].append(float(abs(np.vdot(target, psi)) ** 2))
    return out


def vagp_solve_run(p: dict, seed: int) -> ResultTable:
    Ts = np.logspace(math.log10(p["T_min"]), math.log10(p["T_max"]), p["n_T"])
    cols: dict[str, list] = {"T": Ts.tolist()}
    cols.update(mixed_ising_sweep(p["n_sites"], Ts, p["n_steps"]))
    return ResultTable(cols)


def phase_ledger_run(p: dict, seed: int) -> ResultTable:
    cols: dict[str, list] = {k: [] for k in ("generator", "T", "phi_d", "phi_g", "phi_total", "mismatch")}
    for gen in ("H_plus_A", "A_only", "H_adiabatic_limit"):
        T = p["T_adiabatic"] if gen == "H_adiabatic_limit" else p["T"]
        loop = sta.LZLoop(p["delta0"], p["nu0"], p["radius"], T)
        led = sta.phase_ledger(gen, loop, p["n_steps"])
        for k, v in (("generator", gen), ("T", T), ("phi_d", led.phi_d), ("phi_g", led.phi_g), ("phi_total", led.phi_total), ("mismatch", led.mismatch)):
            cols[k].append(v)
    return ResultTable(cols)


# ---------------------------------------------------------------------------
# optimal control
# ---------------------------------------------------------------------------

def _settings(p: dict) -> grape.OptimSettings:
    return grape.OptimSettings(p["max_iters"], p["grad_tol"], p["cost_tol"])


def _control_table(rep: grape.OptimReport, names: list[str], extra: dict | None = None) -> ResultTable:
    c = rep.controls
    cols: dict[str, list] = {"step": list(range(1, c.n_steps + 1)), "t_start": (np.arange(c.n_steps) * c.dt).tolist()}
    for k, name in enumerate(names):
        cols[name] = c.values[k].tolist()
    scalars = {
        "J_opt": rep.final_cost,
        "iterations": rep.iterations,
        "gradient_norm": rep.gradient_norm,
        "seed_id": str(rep.seed_id),
        "cost_history": rep.cost_history,
    }
    scalars.update(extra or {})
    return ResultTable(cols, scalars)


def grape_state_run(p: dict, seed: int) -> ResultTable:
    T = p["T"] if p["T"] is not None else p["T_over_T0"] * math.pi / (2 * p["delta"])
    problem = grape.lz_problem(p["delta"], p["nu0"])
    template = grape.lz_template(p["delta"], T, p["n_steps"], p["bound_over_delta"] * p["delta"])
    rep = grape.multi_start(problem, template, p["n_seeds"], seed, True, _settings(p))
    return _control_table(rep, ["alpha"], {"T": T, "tau_qsl": grape.mandelstam_tamm_bound(problem, rep.controls)})


def grape_gate_run(p: dict, seed: int) -> ResultTable:
    T = p["T"] if p["T"] is not None else 2 * math.pi / p["omega"]
    problem = grape.gate_problem(p["axis"], p["phi"], p["omega"])
    template = grape.gate_template(T, p["n_steps"], p["bound"])
    rep = grape.multi_start(problem, template, p["n_seeds"], seed, True, _settings(p))
    return _control_table(rep, ["alpha"], {"T": T})


def grape_dicke_run(p: dict, seed: int) -> ResultTable:
    T = p["T"] if p["T"] is not None else 2 * (2 * math.pi / p["beta"])
    rep = grape.dicke_prep(
        p["n_particles"], p["k"], T, p["n_steps"], p["beta"], p["omega_max_over_beta"], p["n_seeds"], seed, _settings(p)
    )
    return _control_table(rep, ["omega_x", "omega_y"], {"T": T})


def qsl_family(p: dict) -> Callable[[float], tuple[grape.ControlProblem, grape.PiecewiseControl]]:
    fam, M = p["family"], p["n_steps"]
    if fam == "gate":
        axis = {"Ux": "x", "Uz": "z"}[p["gate"]]
        problem = grape.gate_problem(axis, p["phi"], p["omega"])
        return lambda T: (problem, grape.gate_template(T, M))
    if fam == "lz":
        problem = grape.lz_problem(p["delta"], p["nu0"])
        return lambda T: (problem, grape.lz_template(p["delta"], T, M))
    problem = grape.dicke_problem(p["n_particles"], p["k"], p["beta"])
    return lambda T: (problem, grape.dicke_template(T, M, p["omega_max_over_beta"] * p["beta"]))


def qsl_sweep_run(p: dict, seed: int) -> ResultTable:
    Ts = np.linspace(p["T_max"], p["T_min"], p["n_T"])
    res = grape.qsl_sweep(qsl_family(p), Ts, p["threshold"], p["n_seeds"], seed, _settings(p), p["restarts_per_T"])
    return ResultTable({"T": res.T_values, "J_opt": res.costs}, {"T_star": res.T_star})


# ---------------------------------------------------------------------------
# reinforcement learning
# ---------------------------------------------------------------------------

CANONICAL_QUBIT_STATES = {
    "+x": np.array([1, 1], dtype=complex) / math.sqrt(2),
    "-x": np.array([1, -1], dtype=complex) / math.sqrt(2),
    "+y": np.array([1, 1j], dtype=complex) / math.sqrt(2),
    "-y": np.array([1, -1j], dtype=complex) / math.sqrt(2),
}


def _train_config(p: dict, seed: int) -> rl.TrainConfig:
    return rl.TrainConfig(p["batch_size"], p["iterations"], p["learning_rate"], seed, p["optimizer"], p["baseline"])


def _curve_table(curve: rl.TrainingCurve, prefix: str) -> dict[str, list]:
    cols = {
        "iteration": list(range(1, len(curve.mean) + 1)),
        f"mean_{prefix}": curve.mean,
        f"min_{prefix}": curve.minimum,
        f"max_{prefix}": curve.maximum,
    }
    return cols


def rl_qubit_prep_run(p: dict, seed: int) -> ResultTable:
    env = rl.QubitPrepEnv(p["dt"], p["n_steps"], p["observation"])
    init_rng, roll_rng = rl.make_rngs(seed)
    policy = rl.Policy.categorical([env.obs_dim, *p["hidden"], 7], init_rng)
    policy, curve = rl.train(env, policy, _train_config(p, seed), roll_rng)
    greedy = {}
    for name, psi in CANONICAL_QUBIT_STATES.items():
        greedy[f"greedy_fidelity_{name}"] = rl.greedy_eval(policy, env, initial=psi[None, :]).mean
    return ResultTable(_curve_table(curve, "reward"), {**greedy, "policy": rl.policy_to_dict(policy)})


def rl_cd_protocol_run(p: dict, seed: int) -> ResultTable:
    env = rl.CDProtocolEnv(p["delta"], p["T"], p["n_steps"], p["n"], p["dg"], p["reward_cap"])
    init_rng, roll_rng = rl.make_rngs(seed)
    policy = rl.Policy.categorical([env.obs_dim, *p["hidden"], env.n_actions], init_rng)
    policy, curve = rl.train(env, policy, _train_config(p, seed), roll_rng)
    greedy = rl.greedy_eval(policy, env, 1)
    batch = rl.rollout(env, policy, 1, np.random.default_rng(0), greedy=True)
    g_protocol = (env.g_initial + np.cumsum((batch.actions[0] - env.n) * env.dg)).tolist()
    return ResultTable(
        _curve_table(curve, "reward"),
        {
            "dg": env.dg,
            "greedy_reward": float(rl.log_fidelity_reward(greedy.mean, env.reward_cap)),
            "cd_baseline_reward": env.cd_baseline_reward(),
            "cd_sampled_reward": env.cd_sampled_reward(),
            "greedy_protocol_g": g_protocol,
            "cd_protocol_g": [env.cd_value(j * env.dt) for j in range(env.n_steps)],
            "policy": rl.policy_to_dict(policy),
        },
    )


def rl_feedback_run(p: dict, seed: int) -> ResultTable:
    noise_seed = seed if p["noise_seed"] is None else p["noise_seed"]
    env = rl.FeedbackEnv(p["p_emit"], p["p_ent"], p["n_steps"], p["theta"], p["phi"], noise_seed)
    init_rng, roll_rng = rl.make_rngs(seed)
    policy = rl.Policy.gaussian([env.obs_dim, *p["hidden"], 3], init_rng, p["initial_std"])
    policy, curve = rl.train(env, policy, _train_config(p, seed), roll_rng)
    cols = _curve_table(curve, "fid")
    cols["true_fid"] = curve.diagnostic
    tail = max(1, min(10, len(curve.mean)))
    return ResultTable(
        cols,
        {
            "noise_angles": list(env.noise_angles),
            "final_mean_fid": float(np.mean(curve.mean[-tail:])) if curve.mean else None,
            "policy": rl.policy_to_dict(policy),
        },
    )


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------

_GRAPE_SETTINGS = {"max_iters": 500, "grad_tol": 1e-12, "cost_tol": 1e-14}
_RL_COMMON = {"optimizer": "adam", "baseline": True}

EXPERIMENTS: dict[str, Experiment] = {
    e.name: e
    for e in [
        Experiment("lz-cd", "Landau-Zener sweep, bare vs exact counterdiabatic ground-state fidelity",
                   {"delta": 1.0, "nu_start": -5.0, "nu_end": 5.0, "T": 0.01, "n_steps": 10000}, lz_cd_run),
        Experiment("ising-cd", "Transverse-field chain, full and range-truncated CD vs bare",
                   {"n_sites": 4, "g_start": 0.1, "g_end": 2.0, "T": 1.0, "n_steps": 2000}, ising_cd_run),
        Experiment("ising-momentum-cd", "Chain CD in momentum modes vs spin basis",
                   {"n_sites": 4, "g_start": 0.1, "g_end": 2.0, "T": 1.0, "n_steps": 400}, ising_momentum_cd_run),
        Experiment("lmg-cd", "All-to-all model: bare, approximate and exact CD final fidelities vs N",
                   {"n_particles": [10, 20, 50], "g_start": 2.0, "g_delta": -0.9, "T": 1.0, "n_steps": 1000}, lmg_cd_run),
        Experiment("lmg-pulse-scan", "All-to-all model: fidelity landscape of the (exp(t^a) - b)/N pulse",
                   {"n_particles": 50, "a_min": 0.5, "a_max": 3.0, "n_a": 50, "b_min": 0.0, "b_max": 2.0, "n_b": 50,
                    "g_start": 2.0, "g_delta": -0.9, "T": 1.0, "n_steps": 1000}, lmg_pulse_scan_run),
        Experiment("vagp-solve", "Mixed-field chain: bare, one-body and two-body variational CD vs T",
                   {"n_sites": 2, "T_min": 0.01, "T_max": 10.0, "n_T": 13, "n_steps": 1000}, vagp_solve_run),
        Experiment("phase-ledger", "Dynamical and geometric phases around a closed Landau-Zener loop",
                   {"delta0": 0.0, "nu0": 0.0, "radius": 1.0, "T": 1.0, "T_adiabatic": 200.0, "n_steps": 10000}, phase_ledger_run),
        Experiment("grape-state", "GRAPE state transfer for the Landau-Zener model",
                   {"delta": 1.0, "nu0": 1.0, "T": None, "T_over_T0": 2.0, "n_steps": 10, "bound_over_delta": 2.0,
                    "n_seeds": 10, **_GRAPE_SETTINGS}, grape_state_run),
        Experiment("grape-gate", "GRAPE single-qubit gate with phase control",
                   {"axis": "z", "phi": math.pi / 2, "omega": 1.0, "T": None, "n_steps": 10, "bound": 2 * math.pi,
                    "n_seeds": 10, **_GRAPE_SETTINGS}, grape_gate_run),
        Experiment("grape-dicke", "GRAPE Dicke-state preparation with two bounded fields",
                   {"n_particles": 6, "k": 1, "beta": 1.0, "T": None, "n_steps": 15, "omega_max_over_beta": 3.0,
                    "n_seeds": 10, **_GRAPE_SETTINGS}, grape_dicke_run),
        Experiment("qsl-sweep", "Warm-started GRAPE cost vs duration and the critical time T_star",
                   {"family": "gate", "gate": "Ux", "phi": math.pi / 2, "omega": 1.0, "delta": 1.0, "nu0": 50.0,
                    "n_particles": 6, "k": 1, "beta": 1.0, "omega_max_over_beta": 3.0, "n_steps": 10,
                    "T_max": 3.0, "T_min": 0.75, "n_T": 31, "threshold": 1e-4, "n_seeds": 10, "restarts_per_T": 0,
                    **_GRAPE_SETTINGS}, qsl_sweep_run),
        Experiment("rl-qubit-prep", "REINFORCE agent preparing |0> from any qubit state with seven gates",
                   {"hidden": [64, 64], "batch_size": 256, "iterations": 400, "learning_rate": 0.003,
                    "dt": math.pi / 15, "n_steps": 15, "observation": "bloch", **_RL_COMMON}, rl_qubit_prep_run),
        Experiment("rl-cd-protocol", "REINFORCE agent building a CD-like protocol vs discretized CD",
                   {"hidden": [64, 64], "batch_size": 256, "iterations": 1200, "learning_rate": 0.003,
                    "delta": 1.0, "T": 1.0, "n_steps": 50, "n": 4, "dg": None, "reward_cap": 12.0, **_RL_COMMON}, rl_cd_protocol_run),
        Experiment("rl-feedback", "REINFORCE agent with ancilla read-out, emission and entangling noise",
                   {"hidden": [8], "batch_size": 2048, "iterations": 200, "learning_rate": 0.01, "initial_std": 0.5,
                    "p_emit": 0.0, "p_ent": 0.0, "n_steps": 5, "theta": math.pi / 4, "phi": math.pi / 3,
                    "noise_seed": None, **_RL_COMMON}, rl_feedback_run),
    ]
}

# parameters that may be null; the value gives the type accepted otherwise
NULLABLE = {("grape-state", "T"): float, ("grape-gate", "T"): float, ("grape-dicke", "T"): float,
            ("rl-cd-protocol", "dg"): float, ("rl-feedback", "noise_seed"): int}

CHOICES = {
    ("grape-gate", "axis"): ("x", "z"),
    ("qsl-sweep", "family"): ("gate", "lz", "dicke"),
    ("qsl-sweep", "gate"): ("Ux", "Uz"),
    ("rl-qubit-prep", "observation"): ("bloch", "angles"),
    ("rl-qubit-prep", "optimizer"): ("adam", "sgd"),
    ("rl-cd-protocol", "optimizer"): ("adam", "sgd"),
    ("rl-feedback", "optimizer"): ("adam", "sgd"),
}
