"""Acceptance criteria 1-17, one test (or test group) per criterion.

Each check is recorded through ``conftest.record`` and a PASS/FAIL line per
criterion is printed in the terminal summary. Checks that cannot be met are
kept as strict expected failures so that they still run and still report FAIL.
"""

from __future__ import annotations

import math
import time

import numpy as np
import pytest

from conftest import record
from qcontrol import cli, grape, rl, sta
from qcontrol.experiments import EXPERIMENTS, mixed_ising_sweep
from qcontrol.models import (
    ising_mixed_terms,
    ising_tf_field_derivative,
    ising_tf_hamiltonian,
    lz_hamiltonian,
)
from qcontrol.qcore import SIGMA_Y, SIGMA_Z, PauliSum


def params(name: str, **overrides) -> dict:
    return cli.resolve_config({"experiment": name, "parameters": overrides})["parameters"]


def run(name: str, seed: int = 0, **overrides):
    return EXPERIMENTS[name].run(params(name, **overrides), seed)


# ---------------------------------------------------------------------------
# counterdiabatic driving
# ---------------------------------------------------------------------------

def test_c01_lz_exact_cd():
    t0 = time.perf_counter()
    worst = {}
    for T in (0.01, 0.1, 1.0):
        rate = 10.0 / T
        H = lambda t, rate=rate: lz_hamiltonian(1.0, -5.0 + rate * t)
        drive = lambda t, rate=rate: H(t) + sta.cd_lz_coefficient(1.0, -5.0 + rate * t, rate) * SIGMA_Y
        worst[T] = float(sta.ground_fidelity_trajectory(H, drive, T, 10_000).min())
    bare = run("lz-cd").scalars["final_fidelity_bare"]
    wall = time.perf_counter() - t0
    ok_cd = record(1, "CD fidelity >= 1-1e-6 at every step", min(worst.values()) >= 1 - 1e-6,
                   f"min over T of min_t F = {min(worst.values()):.15f}")
    ok_bare = record(1, "bare final fidelity < 0.9 at T=0.01", bare < 0.9, f"F_bare = {bare:.4f}")
    record(1, "runtime", True, f"{wall:.1f} s (target 5 s)")
    assert ok_cd and ok_bare


def test_c02_agp_oracles():
    rng = np.random.default_rng(2)
    err_lz = 0.0
    for _ in range(20):
        delta, nu, nu_dot = rng.uniform(0.2, 3), rng.uniform(-5, 5), rng.normal(scale=5)
        A = sta.exact_agp(lz_hamiltonian(delta, nu), nu_dot * SIGMA_Z).operator
        coeff = np.trace(A @ SIGMA_Y).real / 2
        err_lz = max(err_lz, abs(coeff - sta.cd_lz_coefficient(delta, nu, nu_dot)), float(np.max(np.abs(A - coeff * SIGMA_Y))))
    err_is = 0.0
    for g in np.linspace(0.1, 3.0, 12):
        g_dot = 0.7
        A = sta.exact_agp(ising_tf_hamiltonian(2, g).to_dense(), g_dot * ising_tf_field_derivative(2).to_dense()).operator
        ref = -g_dot / (4 * (1 + g * g)) * PauliSum(2, {"YX": 1.0, "XY": 1.0}).to_dense()
        err_is = max(err_is, float(np.max(np.abs(A - ref))))
    a = record(2, "LZ exact AGP vs closed form", err_lz < 1e-12, f"max error {err_lz:.2e}")
    b = record(2, "N=2 Ising exact AGP vs closed form", err_is < 1e-10, f"max error {err_is:.2e}")
    assert a and b


def test_c03_ising_ranges():
    t0 = time.perf_counter()
    s = run("ising-cd").scalars
    wall = time.perf_counter() - t0
    f = {k: s[f"final_fidelity_{k}"] for k in ("bare", "3body", "2body", "full")}
    a = record(3, "full CD final infidelity < 1e-6", 1 - f["full"] < 1e-6, f"1-F = {1 - f['full']:.2e}")
    b = record(3, "F_bare < F_3body < F_2body < F_full", f["bare"] < f["3body"] < f["2body"] < f["full"],
               " < ".join(f"{k} {v:.4f}" for k, v in f.items()) + f" ({wall:.1f} s)")
    assert a and b


@pytest.mark.parametrize("N", [4, 6])
def test_c04_momentum_equivalence(N):
    diff = run("ising-momentum-cd", n_sites=N).scalars["max_abs_difference"]
    assert record(4, f"N={N} momentum vs spin trajectories", diff < 1e-6, f"max |dF| = {diff:.2e}")


# ---------------------------------------------------------------------------
# variational CD
# ---------------------------------------------------------------------------

def _printed_n2_matrix(J, Z, X):
    return np.array([
        [2 * J * J + 2 * X * X + 2 * Z * Z, 2 * J * X, 4 * J * Z],
        [2 * J * X, 2 * X * X + 4 * Z * Z, 6 * X * Z],
        [4 * J * Z, 6 * X * Z, 2 * J * J + 8 * X * X + 2 * Z * Z],
    ])


def _printed_periodic_matrix(J, Z, X):
    return np.array([
        [4 * J * J + 2 * X * X + 2 * Z * Z, 4 * J * X, 8 * J * Z],
        [J * X, 2 * J * J + X * X + 4 * Z * Z, 3 * X * Z],
        [4 * J * Z, 6 * X * Z, 8 * J * J + 8 * X * X + 2 * Z * Z],
    ])


def _printed_rhs(J, Z, X, Jd, Zd, Xd):
    return np.array([Xd * Z - X * Zd, 0.0, Xd * J - X * Jd])


def _printed_system_error(N, matrix, n_points=10):
    """Max |generic solve - printed solution| over random points.

    The printed right-hand side uses the opposite overall sign to the AGP
    convention of ``exact_agp``, so the printed solution is compared with
    minus the generic coefficients.
    """
    rng = np.random.default_rng(5)
    err = 0.0
    for _ in range(n_points):
        J, Z, X = rng.uniform(0.3, 2.0, 3)
        Jd, Zd, Xd = rng.normal(size=3)
        H = ising_mixed_terms(N, J, Z, X)
        dH = ising_mixed_terms(N, Jd, Zd, Xd)
        generic = sta.variational_agp_solve(H, dH, sta.ising_mixed_ansatz(N, 2)).coeffs
        printed = np.linalg.solve(matrix(J, Z, X), _printed_rhs(J, Z, X, Jd, Zd, Xd))
        err = max(err, float(np.max(np.abs(generic + printed))))
    return err


def test_c05_variational_two_site():
    t0 = time.perf_counter()
    Ts = np.logspace(-2, 1, 13)
    res = mixed_ising_sweep(2, Ts, 1000)
    wall = time.perf_counter() - t0
    inf2 = max(1 - f for f in res["fidelity_2body"])
    f1 = res["fidelity_1body"]
    a = record(5, "two-body ansatz infidelity < 1e-7 for T in [0.01, 10]", inf2 < 1e-7, f"max 1-F = {inf2:.2e} ({wall:.1f} s)")
    b = record(5, "one-body final fidelity in [0.8, 1)", all(0.8 <= f < 1.0 for f in f1), f"range [{min(f1):.4f}, {max(f1):.6f}]")
    err_p = _printed_system_error(4, _printed_periodic_matrix)
    c = record(5, "periodic printed system reproduced (N=4)", err_p < 1e-10, f"max error {err_p:.2e}")
    corrected = lambda J, Z, X: _printed_n2_matrix(J, Z, X) + np.diag([0, 4 * Z * Z, 0])
    err_c = _printed_system_error(2, corrected)
    d = record(5, "N=2 system with M22 = 2X^2 + 8Z^2 reproduced", err_c < 1e-10, f"max error {err_c:.2e}")
    assert a and b and c and d


@pytest.mark.xfail(strict=True, reason="printed N=2 entry M22 = 2X^2 + 4Z^2 disagrees with the trace algebra (8Z^2)")
def test_c05_printed_two_site_system_literal():
    err = _printed_system_error(2, _printed_n2_matrix)
    assert record(5, "N=2 printed system reproduced literally", err < 1e-10, f"max error {err:.2e}")


@pytest.mark.parametrize("N", [3, 4])
def test_c06_variational_hierarchy(N):
    r = mixed_ising_sweep(N, [0.01], 1000)
    f0, f1, f2 = r["fidelity_bare"][0], r["fidelity_1body"][0], r["fidelity_2body"][0]
    assert record(6, f"N={N} F_bare < F_1body < F_2body", f0 < f1 < f2, f"{f0:.4f} < {f1:.4f} < {f2:.4f}")


# ---------------------------------------------------------------------------
# LMG and phases
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def lmg_table():
    t0 = time.perf_counter()
    table = run("lmg-cd")
    return table, time.perf_counter() - t0


def test_c07_lmg(lmg_table):
    table, wall = lmg_table
    c = table.columns
    ex, ap = c["fidelity_exact"], c["fidelity_approx"]
    a = record(7, "F_exact > 1-1e-6", min(ex) > 1 - 1e-6, f"min F_exact = {min(ex):.15f} ({wall:.1f} s)")
    b = record(7, "F_approx < F_exact", all(x < y for x, y in zip(ap, ex)), "approx " + ", ".join(f"{v:.4f}" for v in ap))
    d = record(7, "F_approx increases with N", all(x < y for x, y in zip(ap, ap[1:])), f"N = {c['n_particles']}")
    assert a and b and d


@pytest.mark.xfail(strict=True, reason="the oscillator-frequency CD coefficient overshoots and falls below bare evolution")
def test_c07_lmg_bare_below_approx(lmg_table):
    c = lmg_table[0].columns
    bare, ap = c["fidelity_bare"], c["fidelity_approx"]
    ok = all(x < y for x, y in zip(bare, ap))
    assert record(7, "F_bare < F_approx", ok, "bare " + ", ".join(f"{v:.4f}" for v in bare))


def test_c08_phase_ledger():
    loop = sta.LZLoop(0.0, 0.0, 1.0, 1.0)
    hpa = sta.phase_ledger("H_plus_A", loop, 10_000)
    a_only = sta.phase_ledger("A_only", loop, 10_000)
    geo = abs(sta.wrap_phase(a_only.phi_total - a_only.phi_g))
    a = record(8, "H+A total = phi_d + phi_g", hpa.mismatch < 1e-4, f"mismatch {hpa.mismatch:.1e}, phi_d = {hpa.phi_d:.6f}")
    b = record(8, "A-only total = phi_g, no phi_d", geo < 1e-4 and a_only.phi_d == 0.0, f"mismatch {geo:.1e}")
    assert a and b


# ---------------------------------------------------------------------------
# optimal control
# ---------------------------------------------------------------------------

def _fd_rel_error(problem, controls, eps=1e-5):
    _, g = grape.cost_and_grad(problem, controls)
    fd = np.zeros_like(controls.values)
    for idx in np.ndindex(*controls.values.shape):
        up, dn = controls.values.copy(), controls.values.copy()
        up[idx] += eps
        dn[idx] -= eps
        fd[idx] = (grape.cost(problem, controls.with_values(up)) - grape.cost(problem, controls.with_values(dn))) / (2 * eps)
    return float(np.max(np.abs(g - fd)) / np.max(np.abs(fd)))


def test_c09_grape_gradient():
    rng = np.random.default_rng(9)
    cases = {
        "LZ M=10": (grape.lz_problem(1.0, 1.0), grape.lz_template(1.0, math.pi, 10)),
        "gate M=10": (grape.gate_problem("z", math.pi / 2), grape.gate_template(2 * math.pi, 10)),
        "Dicke N=6 M=15": (grape.dicke_problem(6, 1), grape.dicke_template(4 * math.pi, 15, 3.0)),
    }
    ok = True
    for name, (p, template) in cases.items():
        err = _fd_rel_error(p, grape.random_seed_controls(template, rng))
        ok &= record(9, f"{name} finite differences", err < 1e-6, f"max rel error {err:.1e}")
    assert ok


@pytest.mark.parametrize("nu0", [1.0, 5.0])
def test_c10_grape_convergence(nu0):
    s = run("grape-state", nu0=nu0).scalars
    assert record(10, f"LZ nu0={nu0:g} best-of-10 J_opt < 1e-10", s["J_opt"] < 1e-10, f"J_opt = {s['J_opt']:.1e} (seed {s['seed_id']})")


def _sweep(family, gate, phi, T_max, T_min, n_T, **extra):
    p = params("qsl-sweep", family=family, gate=gate, phi=phi, T_max=T_max, T_min=T_min, n_T=n_T, **extra)
    table = EXPERIMENTS["qsl-sweep"].run(p, 0)
    return table.scalars["T_star"], table.columns["T"], table.columns["J_opt"]


@pytest.fixture(scope="module")
def qsl_results():
    t0 = time.perf_counter()
    out = {
        "Ux_half": _sweep("gate", "Ux", math.pi / 2, 3.0, 0.75, 31),
        "Ux_pi": _sweep("gate", "Ux", math.pi, 4.5, 2.0, 51),
        "Uz_half": _sweep("gate", "Uz", math.pi / 2, 6.0, 2.0, 41),
        "lz50": _sweep("lz", "Ux", math.pi / 2, 2.5, 1.0, 31, nu0=50.0),
    }
    return out, time.perf_counter() - t0


@pytest.mark.slow
def test_c11_qsl(qsl_results):
    res, wall = qsl_results
    t_half, t_pi, t_lz = res["Ux_half"][0], res["Ux_pi"][0], res["lz50"][0]
    a = record(11, "U_x(pi/2) T* within 5% of pi/2", abs(t_half - math.pi / 2) <= 0.05 * math.pi / 2, f"T* = {t_half:.4f} ({wall:.0f} s)")
    b = record(11, "U_x(pi) T* within 5% of pi", abs(t_pi - math.pi) <= 0.05 * math.pi, f"T* = {t_pi:.4f}")
    c = record(11, "LZ nu0=50 T* within 10% of pi/2", abs(t_lz - math.pi / 2) <= 0.1 * math.pi / 2, f"T* = {t_lz:.4f}")
    t_z, Ts, J = res["Uz_half"]
    i = Ts.index(t_z)
    below = J[i + 1] if i + 1 < len(J) else float("nan")
    drop = math.log10(below / max(J[i], 1e-16))
    d = record(11, "U_z(pi/2) cost cliff >= 6 decades", drop >= 6, f"J({Ts[i + 1]:.2f}) = {below:.1e}, J({t_z:.2f}) = {J[i]:.1e}")
    assert a and b and c and d


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="the bound T*(U_x(pi/2)) sqrt(2) + 10% lies below the analytic minimum time of U_z(pi/2)")
def test_c11_qsl_uz_bound(qsl_results):
    res, _ = qsl_results
    t_z, t_x = res["Uz_half"][0], res["Ux_half"][0]
    limit = t_x * math.sqrt(2) * 1.1
    assert record(11, "U_z(pi/2) T* < T*(U_x) sqrt(2) + 10%", t_z < limit, f"T* = {t_z:.3f}, limit {limit:.3f}")


def _dicke_family(k):
    return lambda T: (grape.dicke_problem(6, k, 1.0), grape.dicke_template(T, 15, 3.0))


@pytest.fixture(scope="module")
def dicke_sweeps():
    Ts = np.round(np.arange(9.0, 4.49, -0.25), 6)
    out = {}
    for k in (1, 3):
        t0 = time.perf_counter()
        res = grape.qsl_sweep(_dicke_family(k), Ts, 1e-4, 10, 0, grape.OptimSettings(), restarts_per_T=4)
        out[k] = (res.T_star, time.perf_counter() - t0)
    return out


@pytest.mark.slow
@pytest.mark.parametrize("k", [1, 2, 3])
def test_c12_dicke_prep(k):
    rep = grape.dicke_prep(6, k, 4 * math.pi, 15, 1.0, 3.0, 10, 0)
    assert record(12, f"k={k} multi-start J_opt < 1e-4 at T = 4 pi", rep.final_cost < 1e-4, f"J_opt = {rep.final_cost:.1e}")


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="T* grows with k: about 6 for k=1 against about 8 for k=3")
def test_c12_dicke_tstar_independent_of_k(dicke_sweeps):
    (t1, w1), (t3, w3) = dicke_sweeps[1], dicke_sweeps[3]
    ratio = max(t1, t3) / min(t1, t3)
    assert record(12, "T*(k=1) and T*(k=3) within 25%", ratio <= 1.25,
                  f"T*(1) = {t1:.2f}, T*(3) = {t3:.2f}, ratio {ratio:.3f} ({w1 + w3:.0f} s)")


# ---------------------------------------------------------------------------
# reinforcement learning
# ---------------------------------------------------------------------------

def _flat(params):
    return np.concatenate([np.ravel(p) for p in params])


def test_c13_reinforce():
    rng = np.random.default_rng(13)

    def bandit(pol, n, rewards=(0.0, 1.0)):
        obs = np.ones((n, 1))
        acts, logp = rl.policy_sample(pol, obs, rng)
        r = np.asarray(rewards)[acts]
        return rl.TrajectoryBatch(obs[:, None, :], acts[:, None], logp[:, None], r[:, None])

    pol = rl.Policy(rl.Mlp.zeros([1, 2]), rl.CategoricalHead(2))
    p_start = rl.action_probabilities(pol, np.ones((1, 1)))[0, 1]
    probs = [p_start]
    for _ in range(100):
        pol = rl.reinforce_update(pol, bandit(pol, 16), 0.1)
        probs.append(rl.action_probabilities(pol, np.ones((1, 1)))[0, 1])
    a = record(13, "bandit: better arm probability increases", probs[-1] > p_start and all(y >= x for x, y in zip(probs, probs[1:])),
               f"{p_start:.3f} -> {probs[-1]:.3f}")

    pol = rl.Policy(rl.Mlp.zeros([1, 2]), rl.CategoricalHead(2)).with_params([np.zeros((2, 1)), np.array([0.2, -0.1])])
    gb, gn = [], []
    for _ in range(10_000):
        batch = bandit(pol, 8, (0.2, 1.0))
        gb.append(_flat(rl.policy_gradient(pol, batch, True)))
        gn.append(_flat(rl.policy_gradient(pol, batch, False)))
    gb, gn = np.array(gb), np.array(gn)
    z = np.max(np.abs(gb.mean(0) - gn.mean(0)) / np.sqrt(gb.var(0) / len(gb) + gn.var(0) / len(gn)))
    b = record(13, "baseline leaves the expected gradient unchanged", z <= 3, f"max |diff| / SE = {z:.2f}")

    net = rl.Mlp.init([3, 6, 5, 2], rng, output_scale=1.0)
    x, up = rng.normal(size=(4, 3)), rng.normal(size=(4, 2))
    analytic = _flat(rl.mlp_backward(net, x, up))
    base = _flat(net.params())
    shapes = [p.shape for p in net.params()]

    def f(v):
        parts, i = [], 0
        for s in shapes:
            n = int(np.prod(s))
            parts.append(v[i:i + n].reshape(s))
            i += n
        return float(np.sum(up * rl.mlp_forward(net.with_params(parts), x)))

    eps = 1e-6
    fd = np.array([(f(base + eps * e) - f(base - eps * e)) / (2 * eps) for e in np.eye(base.size)])
    err = float(np.max(np.abs(fd - analytic)) / np.max(np.abs(fd)))
    c = record(13, "MLP finite differences < 1e-5", err < 1e-5, f"max rel error {err:.1e}")
    assert a and b and c


# Seed-0 CSVs from criteria 14-16, kept for the reproducibility check.
_CSV: dict[str, str] = {}


def _rl_run(name, seed, **overrides):
    config = cli.resolve_config({"experiment": name, "rng_seed": seed, "parameters": overrides})
    table = EXPERIMENTS[name].run(config["parameters"], seed)
    key = f"{name}:{seed}:{sorted(overrides.items())}"
    _CSV.setdefault(key, cli.table_to_csv(table))
    return table, config


@pytest.mark.slow
def test_c14_rl_qubit_prep():
    t0 = time.perf_counter()
    good = 0
    for seed in range(3):
        table, _ = _rl_run("rl-qubit-prep", seed)
        curve = table.columns["mean_reward"]
        first = next((i + 1 for i, v in enumerate(curve) if v > 0.95), None)
        greedy = {k[len("greedy_fidelity_"):]: v for k, v in table.scalars.items() if k.startswith("greedy_fidelity_")}
        worst = 1 - min(greedy.values())
        ok = first is not None and worst < 0.01
        good += ok
        record(14, f"seed {seed}", ok, f"batch mean > 0.95 at iteration {first}; worst greedy 1-F = {worst:.4f}")
    assert record(14, "at least 2 of 3 seeds", good >= 2, f"{good}/3 ({time.perf_counter() - t0:.0f} s)")


@pytest.mark.slow
def test_c15_rl_cd_protocol():
    t0 = time.perf_counter()
    good = 0
    for seed in range(3):
        table, _ = _rl_run("rl-cd-protocol", seed)
        s = table.scalars
        ok = s["greedy_reward"] >= s["cd_baseline_reward"]
        good += ok
        record(15, f"seed {seed}", ok, f"agent {s['greedy_reward']:.3f} vs discretized CD {s['cd_baseline_reward']:.3f}")
    assert record(15, "at least 2 of 3 seeds", good >= 2, f"{good}/3 ({time.perf_counter() - t0:.0f} s)")


FEEDBACK_CASES = {
    "clean": ({}, 0.9),
    "emission 0.05": ({"p_emit": 0.05}, 0.7),
    "emission 0.05 + entangling 0.05": ({"p_emit": 0.05, "p_ent": 0.05}, 0.65),
}


@pytest.mark.slow
@pytest.mark.parametrize("case", list(FEEDBACK_CASES))
def test_c16_rl_feedback(case):
    overrides, threshold = FEEDBACK_CASES[case]
    good = 0
    values = []
    for seed in range(3):
        table, _ = _rl_run("rl-feedback", seed, **overrides)
        v = table.scalars["final_mean_fid"]
        values.append(v)
        good += v >= threshold
    assert record(16, f"{case}: fidelity >= {threshold} on 2 of 3 seeds", good >= 2,
                  "last-10 mean (r+1)/2 = " + ", ".join(f"{v:.3f}" for v in values))


@pytest.mark.slow
def test_c17_reproducibility(tmp_path):
    runs = [("rl-qubit-prep", {}), ("rl-cd-protocol", {}), ("rl-feedback", {}), ("rl-feedback", {"p_emit": 0.05, "p_ent": 0.05})]
    ok = True
    for name, overrides in runs:
        key = f"{name}:0:{sorted(overrides.items())}"
        if key not in _CSV:
            _rl_run(name, 0, **overrides)
        config = cli.resolve_config({"experiment": name, "rng_seed": 0, "output_dir": str(tmp_path), "parameters": overrides})
        csv_path, _, _ = cli.run_config(config)
        same = csv_path.read_bytes() == _CSV[key].encode()
        ok &= record(17, f"{name} {overrides or 'defaults'} CSV identical on repeat", same, csv_path.name)
    assert ok
