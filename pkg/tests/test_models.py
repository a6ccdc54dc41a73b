from __future__ import annotations

import math

import numpy as np
import pytest

from qcontrol.models import (
    IsingMixedParams,
    collective_spin_ops,
    dicke_state,
    gate_control_hamiltonian,
    ising_mixed_derivative,
    ising_mixed_hamiltonian,
    ising_momentum_modes,
    ising_tf_hamiltonian,
    lmg_hamiltonian,
    lz_eigenstates,
    lz_hamiltonian,
)
from qcontrol.qcore import SIGMA_X, SIGMA_Y, PauliSum, herm_eig


def test_lz_symmetric_point():
    ground, excited, eg, ee = lz_eigenstates(1.0, 0.0)
    assert abs(eg + 1) < 1e-15 and abs(ee - 1) < 1e-15
    H = lz_hamiltonian(1.0, 0.0)
    np.testing.assert_allclose(H @ ground, eg * ground, atol=1e-14)
    np.testing.assert_allclose(H @ excited, ee * excited, atol=1e-14)


def test_lz_ground_energy_and_limit():
    ground, _, eg, _ = lz_eigenstates(1.0, 2.0)
    assert abs(eg + math.sqrt(5)) < 1e-14
    np.testing.assert_allclose(lz_hamiltonian(1.0, 2.0) @ ground, eg * ground, atol=1e-13)
    # the ground state tends to |1> at large positive nu and |0> at large negative nu
    assert abs(lz_eigenstates(1.0, 1e6)[0][1]) > 1 - 1e-9
    assert abs(lz_eigenstates(1.0, -1e6)[0][0]) > 1 - 1e-9


def test_ising_two_site_open():
    H = ising_tf_hamiltonian(2, 0.7, boundary="open")
    expected = PauliSum(2, {"XX": -1.0, "ZI": -0.7, "IZ": -0.7})
    assert H == expected


def test_ising_three_site_term_count():
    assert len(ising_tf_hamiltonian(3, 0.5)) == 6


def test_ising_paramagnetic_limit():
    g = 1e3
    e0 = herm_eig(ising_tf_hamiltonian(4, g).to_dense())[0][0]
    assert abs(e0 + g * 4) < 10 / g


def test_mixed_ising_examples():
    p = IsingMixedParams(2)
    H0 = ising_mixed_hamiltonian(p, 0.0).to_dense()
    assert np.allclose(H0, np.diag(np.diag(H0)))
    assert int(np.argmin(np.diag(H0).real)) == 0
    H = ising_mixed_hamiltonian(p, 0.5)
    assert H.coeff("XI") == 1.0 and H.coeff("IX") == 1.0
    dH = ising_mixed_derivative(p, 0.3)
    assert dH == PauliSum(2, {"XI": 2.0, "IX": 2.0})


def test_momentum_modes_n4():
    modes, offset = ising_momentum_modes(4, 1.0)
    np.testing.assert_allclose([m.k for m in modes], [math.pi / 4, 3 * math.pi / 4])
    assert offset == 0.0


def test_momentum_gap_small_k():
    N = 400
    modes, _ = ising_momentum_modes(N, 1.0)
    k = modes[0].k
    gap = 2 * math.hypot(modes[0].delta_k, modes[0].nu_k)
    assert abs(gap - 4 * k) < 1e-3 * k


def _even_parity_ground(N, g):
    H = ising_tf_hamiltonian(N, g).to_dense()
    parity = PauliSum(N, {"Z" * N: 1.0}).to_dense()
    even = np.where(np.isclose(np.diag(parity).real, 1.0))[0]
    return herm_eig(H[np.ix_(even, even)])[0][0]


@pytest.mark.parametrize("N", [4, 6])
@pytest.mark.parametrize("g", [0.5, 1.0, 2.0])
def test_momentum_energy_equivalence(N, g):
    modes, offset = ising_momentum_modes(N, g)
    e_modes = sum(-math.hypot(m.delta_k, m.nu_k) for m in modes) + offset
    assert abs(e_modes - _even_parity_ground(N, g)) < 1e-9


def test_spin_one_jz():
    np.testing.assert_array_equal(collective_spin_ops(2).Jz.real, np.diag([1.0, 0.0, -1.0]))


@pytest.mark.parametrize("N", [1, 2, 7, 50])
def test_collective_commutators(N):
    s = collective_spin_ops(N)
    j = N / 2
    np.testing.assert_allclose(s.Jx @ s.Jy - s.Jy @ s.Jx, 1j * s.Jz, atol=1e-10)
    np.testing.assert_allclose(s.Jy @ s.Jz - s.Jz @ s.Jy, 1j * s.Jx, atol=1e-10)
    casimir = s.Jx @ s.Jx + s.Jy @ s.Jy + s.Jz @ s.Jz
    np.testing.assert_allclose(casimir, j * (j + 1) * np.eye(N + 1), atol=1e-9)


def test_lmg_large_field_limit():
    v = herm_eig(lmg_hamiltonian(10, 1e4))[1][:, 0]
    assert abs(v[0]) ** 2 > 1 - 1e-6


def test_lmg_oscillator_gap():
    g = 2.0
    e = herm_eig(lmg_hamiltonian(50, g))[0]
    assert abs((e[1] - e[0]) - 2 * math.sqrt(g * (g - 1))) < 0.05 * 2 * math.sqrt(2)


def test_gate_hamiltonian():
    np.testing.assert_allclose(gate_control_hamiltonian(2.0, 0.0), SIGMA_X)
    np.testing.assert_allclose(gate_control_hamiltonian(2.0, math.pi / 2), SIGMA_Y, atol=1e-15)
    for a in np.linspace(-3, 3, 7):
        np.testing.assert_allclose(herm_eig(gate_control_hamiltonian(1.5, a))[0], [-0.75, 0.75])


def test_dicke_states():
    s = collective_spin_ops(4)
    d1 = dicke_state(4, 1)
    np.testing.assert_allclose(s.Jz @ d1, 1.0 * d1)
    assert dicke_state(4, 0)[0] == 1
    assert np.vdot(dicke_state(4, 2), d1) == 0
    with pytest.raises(ValueError):
        dicke_state(4, 5)


def test_schedules_hermitian():
    p = IsingMixedParams(3)
    for lam in np.linspace(0, 1, 5):
        assert ising_mixed_hamiltonian(p, lam).is_hermitian()
        H = lmg_hamiltonian(8, 1 + lam)
        assert np.allclose(H, H.conj().T)
