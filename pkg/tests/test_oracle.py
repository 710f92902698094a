import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dtfim import SystemParams
from dtfim.errors import TooLarge
from dtfim.oracle import (
    SM,
    SX,
    SZ,
    DensityMatrix,
    build_hamiltonian,
    build_liouvillian,
    collective_hamiltonian,
    collective_moments,
    compare,
    convergence_study,
    exact_squeezing,
    exact_steady_state,
    fit_exponent,
    ground_state,
    moment_rhs_check,
    random_density_matrix,
    steady_state,
    swap_operator,
    sym,
)

from conftest import WEAK, bloch_closed_form

I2 = np.eye(2)


def single_atom_state(delta, omega, gamma=1.0):
    m, v = bloch_closed_form(delta, omega, gamma)
    # <sigma_-> = tr(rho |down><up|) = rho[up, down]
    return np.array([[(1 + m) / 2, v], [v.conjugate(), (1 - m) / 2]])


def test_hamiltonian_single_atom():
    h = build_hamiltonian(SystemParams(1.5, 0.8, 0.0), 1)
    assert np.allclose(h, -0.75 * SZ + 0.4 * SX, atol=1e-15)
    h = build_hamiltonian(SystemParams(1.5, 0.8, 2.0), 1)
    assert np.allclose(h, (-0.75 + 0.5) * SZ + 0.4 * SX + 0.25 * I2, atol=1e-15)


def test_hamiltonian_two_atoms_by_hand():
    h = build_hamiltonian(SystemParams(0, 0, 8), 2)
    # (V/4) Jz + (V/16) Jz^2 with Jz = +2, 0, 0, -2 on |uu>, |ud>, |du>, |dd>
    assert np.allclose(h, np.diag([6.0, 0.0, 0.0, -2.0]), atol=1e-15)


@given(st.floats(-5, 5), st.floats(0, 5), st.floats(-10, 10))
@settings(max_examples=15)
def test_site_and_collective_forms_agree(delta, omega, vint):
    p = SystemParams(delta, omega, vint)
    assert np.max(np.abs(build_hamiltonian(p, 3) - collective_hamiltonian(p, 3))) <= 1e-13


def test_hamiltonian_hermitian_and_symmetric():
    p = SystemParams(0.3, 1.7, 4.0)
    for n in (2, 3, 4):
        h = build_hamiltonian(p, n)
        assert np.max(np.abs(h - h.conj().T)) <= 1e-15
        for i in range(n):
            for j in range(i + 1, n):
                s = swap_operator(n, i, j)
                assert np.max(np.abs(s @ h - h @ s)) <= 1e-13


def test_size_guard():
    with pytest.raises(TooLarge):
        build_hamiltonian(SystemParams(0, 1, 1), 8)
    with pytest.raises(TooLarge):
        build_liouvillian(SystemParams(0, 1, 1), 4, n_max=3)


def test_superoperator_matches_matrix_form(rng):
    liou = build_liouvillian(SystemParams(0.4, 1.1, 2.5, gamma=0.8), 3)
    rho = random_density_matrix(3, rng).matrix
    vec = liou.superoperator @ rho.reshape(-1)
    assert np.allclose(vec.reshape(8, 8), liou.apply(rho), atol=1e-13)


def test_trace_preservation(rng):
    liou = build_liouvillian(SystemParams(1.0, 2.0, 3.0), 3)
    for _ in range(20):
        g = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
        rho = g + g.conj().T
        out = liou.apply(rho)
        assert abs(np.trace(out)) <= 1e-12
        assert np.max(np.abs(out - out.conj().T)) <= 1e-12


def test_single_atom_decay():
    liou = build_liouvillian(SystemParams(0.7, 0.0, 0.0, gamma=1.3), 1)
    excited = np.array([[1, 0], [0, 0]], dtype=complex)
    out = liou.apply(excited)
    assert out[0, 0] == pytest.approx(-1.3)
    assert out[1, 1] == pytest.approx(1.3)


def test_single_atom_steady_state_is_bloch():
    rho = exact_steady_state(SystemParams(2.0, 2.0, 0.0), 1)
    assert rho.expect(SZ).real == pytest.approx(-0.68, abs=1e-12)
    assert rho.expect(SM) == pytest.approx(0.32 - 0.08j, abs=1e-12)


@pytest.mark.parametrize("n", [1, 3, 6])
def test_undriven_steady_state_is_ground(n):
    rho = exact_steady_state(SystemParams(0.5, 0.0, 3.0), n)
    assert np.allclose(rho.matrix, ground_state(n).matrix, atol=1e-10)


@pytest.mark.parametrize("delta", [0.0, 2.0])
def test_noninteracting_steady_state_is_product(delta):
    single = single_atom_state(delta, 2.0)
    prod = single
    for _ in range(3):
        prod = np.kron(prod, single)
    rho = exact_steady_state(SystemParams(delta, 2.0, 0.0), 4)
    assert np.linalg.norm(rho.matrix - prod) <= 1e-8


def test_steady_state_validity_and_permutation_symmetry():
    p = SystemParams(0.0, **WEAK)
    for n in (2, 3, 4):
        rho = exact_steady_state(p, n)
        assert abs(np.trace(rho.matrix) - 1) <= 1e-12
        assert rho.hermiticity_defect() <= 1e-12
        assert rho.min_eigenvalue() >= -1e-10
        for i in range(n):
            for j in range(i + 1, n):
                s = swap_operator(n, i, j)
                assert np.max(np.abs(s @ rho.matrix @ s.T - rho.matrix)) <= 1e-10


def test_svd_and_relaxation_solvers_agree():
    liou = build_liouvillian(SystemParams(0.5, 1.5, 2.0), 3)
    a = steady_state(liou, "svd").matrix
    b = steady_state(liou, "relax").matrix
    assert np.max(np.abs(a - b)) <= 1e-9


def test_sym_averages_orderings():
    a, b = SX, SZ
    assert np.allclose(sym(a, b), 0.5 * (a @ b + b @ a))
    assert np.allclose(sym(a, a, b), (a @ a @ b + a @ b @ a + b @ a @ a) / 3)


@pytest.mark.parametrize("n", [1, 2, 5])
def test_ground_state_moments(n):
    mom = collective_moments(ground_state(n))
    assert np.allclose(mom.mean, [0, 0, -1], atol=1e-15)
    assert np.allclose(mom.cov, np.diag([1 / n, 1 / n, 0]), atol=1e-15)
    assert exact_squeezing(ground_state(n)).xi2 == pytest.approx(1, abs=1e-12)


def test_maximally_mixed_single_atom():
    mom = collective_moments(DensityMatrix(np.eye(2) / 2, 1))
    assert np.allclose(mom.mean, 0, atol=1e-15)
    assert np.allclose(mom.cov, np.eye(3), atol=1e-15)


def test_noninteracting_moments_are_additive():
    m, v = bloch_closed_form(2.0, 2.0)
    s = np.array([2 * v.real, -2 * v.imag, m])
    rho = exact_steady_state(SystemParams(2.0, 2.0, 0.0), 4)
    mom = collective_moments(rho)
    assert np.allclose(mom.mean, s, atol=1e-10)
    assert np.allclose(4 * mom.cov, np.eye(3) - np.outer(s, s), atol=1e-10)
    assert exact_squeezing(rho).xi2 == pytest.approx(1, abs=1e-10)


def test_moment_equation_pure_decay():
    n = 3
    excited = np.zeros((8, 8), dtype=complex)
    excited[0, 0] = 1
    res = moment_rhs_check(DensityMatrix(excited, n), SystemParams(0, 0, 0))
    assert max(res.values()) <= 1e-12
    liou = build_liouvillian(SystemParams(0, 0, 0), n)
    jz = sum(np.kron(np.kron(np.eye(2**k), SZ), np.eye(2 ** (n - k - 1))) for k in range(n))
    assert np.trace(jz @ liou.apply(excited)).real == pytest.approx(-2 * n)


def test_moment_equations_on_random_states(rng):
    for _ in range(20):
        p = SystemParams(*rng.uniform(-3, 3, 3), gamma=rng.uniform(0.3, 2))
        res = moment_rhs_check(random_density_matrix(3, rng), p)
        assert set(res) == {"J", "Jz", "J^2", "Jz^2", "J+J-", "JJz"}
        assert max(res.values()) <= 1e-10, res


@pytest.mark.parametrize("delta", [0.0, 2.0])
def test_noninteracting_oracle_matches_linear_theory(delta):
    cmp = compare(SystemParams(delta, 2.0, 0.0), 4)
    assert cmp.mean_deviation <= 1e-8
    assert cmp.cov_deviation <= 1e-8
    assert cmp.xi2_deviation <= 1e-8


def test_compare_flags_bistable_points():
    cmp = compare(SystemParams(6.0, 2.0, 20.0), 2)
    assert "bistable" in cmp.flags and math.isnan(cmp.analytic_xi2)


def test_fit_exponent_recovers_power():
    ns = np.array([3, 4, 5, 6])
    assert fit_exponent(ns, 0.2 * ns**-1.3) == pytest.approx(1.3)
    assert math.isnan(fit_exponent([3], [0.1]))


def test_convergence_trend_small():
    study = convergence_study(SystemParams(0.0, **WEAK), [3, 4, 5])
    devs = [r.xi2_deviation for r in study.rows]
    assert devs[0] > devs[1] > devs[2] > 0
    assert 0.5 <= study.exponent <= 1.5


def test_convergence_undriven_is_exact():
    study = convergence_study(SystemParams(0.0, 0.0, 1.0), [1, 2, 3])
    for r in study.rows:
        assert r.exact_xi2 == pytest.approx(1, abs=1e-12)
        assert r.analytic_xi2 == pytest.approx(1, abs=1e-12)
