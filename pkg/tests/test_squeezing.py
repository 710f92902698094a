import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dtfim import Sweep, SystemParams
from dtfim.errors import ZeroBlochVector
from dtfim.fluctuations import SpinMoments
from dtfim.meanfield import critical_points
from dtfim.squeezing import (
    analytic_squeezing,
    analyze_point,
    bloch_angles,
    squeezing_from_frame,
    squeezing_map,
    squeezing_parameter,
    squeezing_scan,
    tangent_frame,
)

from conftest import BISTABLE, WEAK

unit = st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1)).filter(
    lambda t: 1e-3 < math.sqrt(sum(c * c for c in t)) <= 1
)


@pytest.mark.parametrize(
    "mean, expected",
    [((0, 0, -1), (math.pi, 0.0)), ((1, 0, 0), (math.pi / 2, 0.0)), ((0, 1, 0), (math.pi / 2, math.pi / 2))],
)
def test_bloch_angles_examples(mean, expected):
    assert bloch_angles(mean) == pytest.approx(expected, abs=1e-15)


def test_bloch_angles_zero_vector():
    with pytest.raises(ZeroBlochVector):
        bloch_angles((0, 0, 0))


def test_azimuth_range():
    assert bloch_angles((-1, -0.0, 0))[1] == pytest.approx(math.pi)


@given(unit)
def test_frame_is_orthonormal_and_transverse(mean):
    theta, phi = bloch_angles(mean)
    n1, n2 = tangent_frame(theta, phi)
    s = np.asarray(mean) / np.linalg.norm(mean)
    for a, b in [(n1, n2), (n1, s), (n2, s)]:
        assert abs(a @ b) <= 1e-12
    assert np.linalg.norm(n1) == pytest.approx(1, abs=1e-12)
    assert np.linalg.norm(n2) == pytest.approx(1, abs=1e-12)


def test_isotropic_transverse_noise_is_unsqueezed():
    n = 37
    res = squeezing_parameter(SpinMoments([0.3, -0.2, -0.5], np.eye(3) / n), n)
    assert res.xi2 == pytest.approx(1, abs=1e-14)


@given(st.floats(1e-4, 1), st.floats(1e-4, 1), st.integers(1, 1000))
def test_diagonal_transverse_noise(a, b, n):
    # mean along z: n1 = y, n2 = x (theta = 0, phi = 0)
    cov = np.diag([b, a, 0.4])
    res = squeezing_parameter(SpinMoments([0, 0, 0.5], cov), n)
    assert res.xi2 == pytest.approx(n * min(a, b), rel=1e-12)
    direction = np.array([0, 1, 0]) if a < b else np.array([1, 0, 0])
    if abs(a - b) > 1e-6:
        assert abs(res.direction @ direction) == pytest.approx(1, abs=1e-9)


@given(unit, st.floats(0, 2 * math.pi), st.integers(0, 2**31))
def test_rotation_invariance_in_tangent_plane(mean, angle, seed):
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(3, 3))
    cov = g @ g.T
    n1, n2 = tangent_frame(*bloch_angles(mean))
    c, s = math.cos(angle), math.sin(angle)
    xi_a, _ = squeezing_from_frame(cov, n1, n2, 10)
    xi_b, _ = squeezing_from_frame(cov, c * n1 + s * n2, -s * n1 + c * n2, 10)
    assert abs(xi_a - xi_b) <= 1e-12 * max(1.0, abs(xi_a))


@given(unit, st.integers(0, 2**31))
def test_xi2_bounded_by_projected_eigenvalues(mean, seed):
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(3, 3))
    cov = g @ g.T
    res = squeezing_parameter(SpinMoments(mean, cov), 5)
    proj = np.array([res.n1, res.n2])
    lo, hi = np.linalg.eigvalsh(proj @ cov @ proj.T)
    assert res.xi2 >= 0
    assert res.xi2 == pytest.approx(5 * lo, rel=1e-9, abs=1e-12)
    assert res.xi2 <= 5 * hi + 1e-12
    assert res.direction @ cov @ res.direction == pytest.approx(lo, rel=1e-9, abs=1e-12)


def test_zero_bloch_vector_uses_xy_frame():
    res = squeezing_parameter(SpinMoments([0, 0, 0], np.diag([0.1, 0.2, 0.3])), 10)
    assert "zero_bloch_vector" in res.flags
    assert res.xi2 == pytest.approx(1.0)


def test_lower_branch_near_critical_point():
    p = SystemParams(0, **BISTABLE)
    lo = critical_points(p, "delta")[0]
    xi2 = analytic_squeezing(p.with_value("delta", lo + 1e-3), "lower")
    assert abs(xi2 - 0.52) <= 0.03


def test_bistable_point_reports_stable_branches_only():
    rows = squeezing_scan(SystemParams(0, **BISTABLE), Sweep("delta", 6, 6.5, 2))
    assert [r.branch for r in rows] == ["lower", "upper"] * 2
    assert all(0.5 < r.xi2 < 1 for r in rows)
    records = analyze_point(SystemParams(6, **BISTABLE))
    assert records[1].flags == ("unstable",) and math.isnan(records[1].xi2)


@pytest.mark.parametrize("delta", [-50.0, 50.0])
def test_far_detuned_atoms_are_nearly_coherent(delta):
    xi2 = analytic_squeezing(SystemParams(delta, **BISTABLE))
    assert 0.98 <= xi2 < 1


def test_noninteracting_sweep_is_unsqueezed():
    rows = squeezing_scan(SystemParams(0, 2, 0), Sweep("delta", -10, 10, 41))
    assert all(abs(r.xi2 - 1) <= 1e-12 for r in rows)


def test_squeezing_independent_of_n():
    rows = squeezing_scan(SystemParams(0, **BISTABLE), Sweep("delta", 0, 12, 25))
    assert rows and not any("n_dependent" in r.flags for r in rows)
    a = analytic_squeezing(SystemParams(1.0, **WEAK, natoms=100))
    b = analytic_squeezing(SystemParams(1.0, **WEAK, natoms=1000))
    assert abs(a - b) <= 1e-12


def test_map_edges_and_interior():
    smap = squeezing_map(SystemParams(0, 2, 1), (0, 20), (0, 10), (6, 6))
    assert np.all(np.abs(smap.xi2[0, :] - 1) <= 1e-10)
    assert np.all(np.abs(smap.xi2[:, 0] - 1) <= 1e-10)
    assert np.all(smap.xi2[1:, 1:] < 1)
    assert not any("bistable" in f for f in smap.flags.values())
    assert len(list(smap.rows())) == 36


def test_large_drive_returns_toward_unity():
    values = [analytic_squeezing(SystemParams(0, w, 5)) for w in [5, 10, 20, 50, 100, 1000]]
    assert np.all(np.diff(values) > 0)
    assert values[-1] == pytest.approx(1, abs=1e-6)


def test_map_flags_bistable_points():
    smap = squeezing_map(SystemParams(6, 2, 20), (19, 21), (1.5, 2.5), (2, 2))
    assert all("bistable" in smap.flags[(i, j)] for i in range(2) for j in range(2))
    assert np.all(np.isfinite(smap.xi2))
