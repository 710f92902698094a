"""Kitagawa-Ueda spin squeezing from collective-spin moments.

With ``J = sum_n sigma_n`` and ``Jbar = J / N`` the coherent-state level of
the transverse variance is ``1/N``, so ``xi2 = N * lambda_min`` where
``lambda_min`` is the smaller eigenvalue of the covariance projected onto
the plane orthogonal to the mean spin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from dtfim.errors import NoPhysicalRoot, DegenerateDenominator, ZeroBlochVector
from dtfim.fluctuations import SpinMoments, branch_correlations, build_model, covariances_xyz
from dtfim.meanfield import steady_states
from dtfim.params import SystemParams, Sweep, pmap

SQUEEZING_FLOOR = 0.5
ZERO_BLOCH = 1e-14


@dataclass(frozen=True)
class SqueezingResult:
    xi2: float
    theta: float
    phi: float
    n1: np.ndarray
    n2: np.ndarray
    minimizing_angle: float
    flags: tuple = ()

    @property
    def direction(self) -> np.ndarray:
        """Unit vector of minimal transverse variance."""
        return math.cos(self.minimizing_angle) * self.n1 + math.sin(self.minimizing_angle) * self.n2


def bloch_angles(mean) -> tuple:
    """Polar and azimuthal angle ``(theta, phi)`` of the mean spin vector."""
    x, y, z = (float(c) for c in mean)
    r = math.sqrt(x * x + y * y + z * z)
    if r < ZERO_BLOCH:
        raise ZeroBlochVector(f"mean spin vector has norm {r:.3e}")
    # atan2 keeps full precision near the poles, where acos(z / r) does not
    theta = math.atan2(math.hypot(x, y), z)
    phi = math.atan2(y, x) if (x != 0 or y != 0) else 0.0
    if phi == -math.pi:
        phi = math.pi
    return theta, phi


def tangent_frame(theta: float, phi: float) -> tuple:
    n1 = np.array([-math.sin(phi), math.cos(phi), 0.0])
    n2 = np.array([math.cos(theta) * math.cos(phi), math.cos(theta) * math.sin(phi), -math.sin(theta)])
    return n1, n2


def squeezing_from_frame(cov: np.ndarray, n1: np.ndarray, n2: np.ndarray, natoms: int) -> tuple:
    """``xi2`` and the minimizing in-plane angle for a given tangent frame."""
    a = n1 @ cov @ n1
    b = n2 @ cov @ n2
    c = n1 @ cov @ n2
    xi2 = 0.5 * natoms * ((a + b) - math.sqrt((a - b) ** 2 + 4 * c * c))
    # principal axis of the smaller eigenvalue of [[a, c], [c, b]]
    angle = 0.5 * math.atan2(2 * c, a - b) + 0.5 * math.pi
    return xi2, math.remainder(angle, math.pi)


def squeezing_parameter(moments: SpinMoments, natoms: int) -> SqueezingResult:
    try:
        theta, phi = bloch_angles(moments.mean)
        flags = ()
    except ZeroBlochVector:
        # saturated limit: any transverse pair will do, take x and y
        theta, phi = 0.0, 0.0
        flags = ("zero_bloch_vector",)
        n1, n2 = np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])
    else:
        n1, n2 = tangent_frame(theta, phi)
    xi2, angle = squeezing_from_frame(moments.cov, n1, n2, natoms)
    return SqueezingResult(xi2, theta, phi, n1, n2, angle, flags)


@dataclass(frozen=True)
class BranchRecord:
    """Everything reported about one fixed point of one parameter point."""

    branch: str
    m: float
    v: complex
    stable: bool
    eigenvalues: np.ndarray
    n_var_jz: float = math.nan
    n_cov_jpjm: float = math.nan
    xi2: float = math.nan
    flags: tuple = field(default=())


def analyze_point(params: SystemParams) -> list:
    """Fixed points plus correlations and squeezing on the stable ones."""
    records = []
    branches = steady_states(params)
    for fp in branches:
        st = fp.state
        base = dict(branch=fp.branch_label, m=st.m, v=st.v, stable=fp.stable, eigenvalues=fp.eigenvalues)
        if not fp.stable:
            flags = ("unstable", "marginal") if fp.marginal else ("unstable",)
            records.append(BranchRecord(**base, flags=flags))
            continue
        model = build_model(params, fp)
        if not model.ok:
            records.append(BranchRecord(**base, flags=model.flags))
            continue
        jz, jpjm = branch_correlations(model)
        result = squeezing_parameter(covariances_xyz(model), params.natoms)
        flags = model.flags + result.flags
        if result.xi2 < SQUEEZING_FLOOR:
            flags += ("below_floor",)
        records.append(BranchRecord(**base, n_var_jz=jz, n_cov_jpjm=jpjm, xi2=result.xi2, flags=flags))
    if not branches.stable_points:
        records = [
            BranchRecord(**{**r.__dict__, "flags": r.flags + ("no_stable_root",)}) for r in records
        ]
    return records


def analytic_squeezing(params: SystemParams, branch: str | None = None) -> float:
    """``xi2`` of the linearized theory on one branch (default: the only one)."""
    branches = steady_states(params)
    if branch is None:
        if len(branches) != 1:
            raise ValueError(f"{len(branches)} fixed points at {params}; choose a branch")
        fp = branches.fixed_points[0]
    else:
        fp = branches.branch(branch)
    model = build_model(params, fp)
    return squeezing_parameter(covariances_xyz(model), params.natoms).xi2


@dataclass(frozen=True)
class SqueezingRow:
    value: float
    branch: str
    xi2: float
    flags: tuple = ()


def _squeeze_point(params, axis, check_factor, value):
    p = params.with_value(axis, value)
    try:
        records = analyze_point(p)
    except (NoPhysicalRoot, DegenerateDenominator) as exc:
        return [SqueezingRow(float(value), "", math.nan, ("error", type(exc).__name__))]
    check = {}
    if check_factor:
        for r in analyze_point(p.with_natoms(p.natoms * check_factor)):
            check[r.branch] = r.xi2
    rows = []
    for r in records:
        if not r.stable:
            continue
        flags = r.flags
        if check and math.isfinite(r.xi2) and abs(check.get(r.branch, math.nan) - r.xi2) > 1e-10:
            flags += ("n_dependent",)
        rows.append(SqueezingRow(float(value), r.branch, r.xi2, flags))
    if not rows:
        rows.append(SqueezingRow(float(value), "", math.nan, ("no_stable_root",)))
    return rows


def squeezing_scan(params: SystemParams, sweep: Sweep, workers: int = 1, check_factor: int = 10) -> list:
    """``xi2`` on every stable branch along a sweep.

    Each point is also evaluated at ``check_factor * N`` atoms; rows whose
    ``xi2`` moves by more than 1e-10 are flagged ``n_dependent``.
    """
    fn = partial(_squeeze_point, params, sweep.axis, check_factor)
    return [row for rows in pmap(fn, sweep.values(), workers) for row in rows]


@dataclass(frozen=True)
class SqueezingMap:
    vint: np.ndarray
    omega: np.ndarray
    xi2: np.ndarray  # indexed [i_vint, j_omega]
    flags: dict

    def rows(self):
        for i, v in enumerate(self.vint):
            for j, w in enumerate(self.omega):
                yield v, w, self.xi2[i, j], self.flags.get((i, j), ())


def _map_point(params, vw):
    v, w = vw
    p = SystemParams(params.delta, w, v, params.gamma, params.natoms)
    try:
        records = analyze_point(p)
    except (NoPhysicalRoot, DegenerateDenominator) as exc:
        return math.nan, ("error", type(exc).__name__)
    flags = ()
    if len(records) != 1:
        flags += ("bistable",)
    stable = [r for r in records if r.stable]
    if not stable:
        return math.nan, flags + ("no_stable_root",)
    return stable[0].xi2, flags + stable[0].flags


def squeezing_map(params: SystemParams, v_range, omega_range, grid, workers: int = 1) -> SqueezingMap:
    """``xi2`` over a ``(vint, omega)`` grid at the detuning of ``params``.

    ``grid`` is ``(n_vint, n_omega)``.  Points with more than one fixed point
    use the lowest stable branch and carry a ``bistable`` flag.
    """
    nv, nw = grid
    if nv < 2 or nw < 2:
        raise ValueError("grid must be at least 2x2")
    vs = np.linspace(*v_range, nv)
    ws = np.linspace(*omega_range, nw)
    pts = [(v, w) for v in vs for w in ws]
    out = pmap(partial(_map_point, params), pts, workers)
    xi2 = np.array([o[0] for o in out]).reshape(nv, nw)
    flags = {(k // nw, k % nw): o[1] for k, o in enumerate(out) if o[1]}
    return SqueezingMap(vs, ws, xi2, flags)
