"""Linearized Gaussian fluctuations around a mean-field fixed point.

Fluctuations live in the complex coordinates ``(v~, v~*, m~)``.  The drift
matrix ``A`` is the mean-field Jacobian, ``D`` the diffusion matrix, and the
stationary covariance ``C`` solves ``A C + C A^T = -D`` (plain transpose).
Every entry of ``C`` scales as ``1/N``.

The real coordinates ``x = v~ + v~*``, ``y = -i (v~ - v~*)``, ``m~`` are the
fluctuations of ``(Jx, Jy, Jz) / N``; they are where ``D`` is a genuine
(positive semidefinite) diffusion matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from dtfim.errors import ImaginaryLeak, NotPSD, SingularLyapunov
from dtfim.meanfield import FixedPoint, jacobian, scan_bifurcation
from dtfim.params import SystemParams, Sweep

# (v, v*, m) -> (x, y, m)
TO_REAL = np.array([[1, 1, 0], [-1j, 1j, 0], [0, 0, 1]], dtype=complex)
FROM_REAL = np.linalg.inv(TO_REAL)
SWAP = np.array([[0, 1, 0], [1, 0, 0], [0, 0, 1]], dtype=complex)

NEAR_CRITICAL_DET = 1e-8
IMAG_LEAK_TOL = 1e-10


@dataclass(frozen=True)
class SpinMoments:
    """Means and symmetric-ordered central second moments of ``(Jx, Jy, Jz) / N``."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float))
        object.__setattr__(self, "cov", np.asarray(self.cov, dtype=float))


@dataclass(frozen=True)
class FluctuationModel:
    a_matrix: np.ndarray
    d_matrix: np.ndarray
    c_matrix: np.ndarray | None
    fixed_point: FixedPoint
    natoms: int
    flags: tuple = field(default=())
    residual: float = math.nan

    @property
    def ok(self) -> bool:
        return self.c_matrix is not None


def to_real_basis(mat: np.ndarray) -> np.ndarray:
    """Transform a covariance-type (bilinear) matrix to ``(x, y, m)``."""
    return TO_REAL @ mat @ TO_REAL.T


def drift_to_real_basis(a: np.ndarray) -> np.ndarray:
    return (TO_REAL @ a @ FROM_REAL).real


def from_real_basis(mat: np.ndarray) -> np.ndarray:
    return FROM_REAL @ mat @ FROM_REAL.T


def conjugation_defect(mat: np.ndarray) -> float:
    """``max |conj(M) - S M S|`` with ``S`` swapping the first two indices."""
    return float(np.max(np.abs(mat.conj() - SWAP @ mat @ SWAP)))


def diffusion_matrix(params: SystemParams, fp: FixedPoint) -> np.ndarray:
    g = params.gamma
    v, m = fp.state.v, fp.state.m
    vc = v.conjugate()
    return np.array(
        [
            [0, g / 2, g * v],
            [g / 2, 0, g * vc],
            [g * v, g * vc, 2 * g * (m + 1)],
        ],
        dtype=complex,
    ) / params.natoms


def lyapunov_residual(a, c, d) -> float:
    """``max|A C + C A^T + D| / max|D|``."""
    res = a @ c + c @ a.T + d
    return float(np.max(np.abs(res)) / np.max(np.abs(d)))


def solve_lyapunov(a: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Solve ``A C + C A^T = -D`` by 9x9 vectorization.

    Row-major ``vec`` turns ``A C`` into ``(A kron I) vec C`` and ``C A^T``
    into ``(I kron A) vec C``.
    """
    a = np.asarray(a, dtype=complex)
    d = np.asarray(d, dtype=complex)
    n = a.shape[0]
    eye = np.eye(n)
    big = np.kron(a, eye) + np.kron(eye, a)
    if np.linalg.cond(big) > 1 / np.finfo(float).eps:
        raise SingularLyapunov("Lyapunov operator is singular (eigenvalue pair sums to zero)")
    c = np.linalg.solve(big, -d.reshape(-1)).reshape(n, n)
    return c


def build_model(params: SystemParams, fp: FixedPoint) -> FluctuationModel:
    """Drift, diffusion and stationary covariance at one fixed point.

    Within ``|det A| < 1e-8 gamma^3`` of a saddle node the linear theory is
    not trusted: the covariance is left as None and the model is flagged.
    """
    a = jacobian(params, fp.state)
    d = diffusion_matrix(params, fp)
    flags = []
    if not fp.stable:
        flags.append("unstable")
    if abs(np.linalg.det(a)) < NEAR_CRITICAL_DET * params.gamma**3:
        flags.append("near_critical")
        return FluctuationModel(a, d, None, fp, params.natoms, tuple(flags))
    try:
        c = solve_lyapunov(a, d)
    except SingularLyapunov:
        flags.append("singular")
        return FluctuationModel(a, d, None, fp, params.natoms, tuple(flags))
    # project onto the exact symmetries of the solution
    c = 0.5 * (c + c.T)
    c = 0.5 * (c + SWAP @ c.conj() @ SWAP)
    return FluctuationModel(a, d, c, fp, params.natoms, tuple(flags), lyapunov_residual(a, c, d))


def _real(value, name):
    if abs(value.imag) > IMAG_LEAK_TOL:
        raise ImaginaryLeak(f"{name} has imaginary part {value.imag:.3e}")
    return value.real


def covariances_xyz(model: FluctuationModel) -> SpinMoments:
    """Collective-spin means and covariances from the ``(v, v*, m)`` covariance.

    Rows of ``C`` correspond to ``J-``, ``J+``, ``Jz``.
    """
    if model.c_matrix is None:
        raise SingularLyapunov(f"no covariance available (flags: {model.flags})")
    c = model.c_matrix
    state = model.fixed_point.state
    c11, c12, c13 = c[0, 0], c[0, 1], c[0, 2]
    c22, c23, c33 = c[1, 1], c[1, 2], c[2, 2]
    xx = _real(c22 + c11 + 2 * c12, "<Jx^2>")
    yy = _real(-c22 - c11 + 2 * c12, "<Jy^2>")
    xy = _real(-1j * (c22 - c11), "<JxJy>_S")
    xz = _real(c23 + c13, "<JxJz>_S")
    yz = _real(-1j * (c23 - c13), "<JyJz>_S")
    zz = _real(c33, "<Jz^2>")
    mean = np.array(
        [
            _real(state.vstar + state.v, "<Jx>"),
            _real(-1j * (state.vstar - state.v), "<Jy>"),
            state.m,
        ]
    )
    cov = np.array([[xx, xy, xz], [xy, yy, yz], [xz, yz, zz]])
    return SpinMoments(mean, cov)


@dataclass(frozen=True)
class OUSample:
    """Sampled stationary covariance in the real ``(x, y, m)`` basis."""

    cov: np.ndarray
    stderr: np.ndarray
    n_paths: int
    t_final: float
    dt: float

    def complex_cov(self) -> np.ndarray:
        return from_real_basis(self.cov)


def noise_factor(d: np.ndarray) -> np.ndarray:
    """Real ``B`` with ``B B^T`` equal to the real-basis diffusion matrix."""
    dr = to_real_basis(d)
    if np.max(np.abs(dr.imag)) > 1e-12 * max(1.0, np.max(np.abs(dr))):
        raise NotPSD("diffusion matrix is not real in the (x, y, m) basis")
    dr = 0.5 * (dr.real + dr.real.T)
    w, u = np.linalg.eigh(dr)
    clipped = -np.sum(w[w < 0])
    if clipped > 1e-10 * max(np.trace(dr), np.finfo(float).tiny):
        raise NotPSD(f"diffusion matrix has negative eigenvalues {w}")
    return u * np.sqrt(np.clip(w, 0, None))


def _ou_chunk(m, b, n, nsteps, increments, seed):
    rng = np.random.default_rng(seed)
    x = np.zeros((3, n))
    y = np.empty_like(x)
    w = np.empty_like(x)
    nbytes = (3 * n + 7) // 8
    z = np.empty((3, n))
    for _ in range(nsteps):
        if increments == "gaussian":
            rng.standard_normal(out=z)
        else:
            bits = np.unpackbits(rng.integers(0, 256, size=nbytes, dtype=np.uint8))[: 3 * n]
            z[...] = bits.reshape(3, n)
            z *= 2
            z -= 1
        np.matmul(m, x, out=y)
        np.matmul(b, z, out=w)
        np.add(y, w, out=x)
    prods = np.einsum("in,jn->ijn", x, x)
    return x.sum(axis=1), prods.sum(axis=2), (prods**2).sum(axis=2)


def sample_ou(
    a: np.ndarray,
    d: np.ndarray,
    n_paths: int,
    dt: float = 1e-3,
    t_final: float | None = None,
    seed: int = 0,
    increments: str = "two-point",
    chunk: int = 4096,
) -> OUSample:
    """Euler-Maruyama ensemble for ``dX = A X dt + B dW`` started at 0.

    Runs in the real ``(x, y, m)`` basis.  ``t_final`` defaults to ten
    relaxation times ``1 / |max Re eig(A)|``.  With ``increments="two-point"``
    each Wiener increment is ``+-sqrt(dt)`` with equal probability (the
    simplified weak Euler scheme, same weak order as Gaussian increments).
    Chunks of paths get independent child seeds, so results depend only on
    ``seed`` and ``chunk``.
    """
    if increments not in ("two-point", "gaussian"):
        raise ValueError(f"unknown increments {increments!r}")
    a = np.asarray(a, dtype=complex)
    rate = -np.max(np.linalg.eigvals(a).real)
    if not rate > 0:
        raise ValueError("drift matrix is not Hurwitz")
    if t_final is None:
        t_final = 10.0 / rate
    nsteps = int(math.ceil(t_final / dt))
    step = np.eye(3) + dt * drift_to_real_basis(a)
    b = math.sqrt(dt) * noise_factor(d)

    sizes = [chunk] * (n_paths // chunk) + ([n_paths % chunk] if n_paths % chunk else [])
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))
    s1 = np.zeros(3)
    s2 = np.zeros((3, 3))
    s4 = np.zeros((3, 3))
    for n, ss in zip(sizes, seeds):
        r1, r2, r4 = _ou_chunk(step, b, n, nsteps, increments, ss)
        s1 += r1
        s2 += r2
        s4 += r4
    mean = s1 / n_paths
    second = s2 / n_paths
    cov = second - np.outer(mean, mean)
    var_prod = np.clip(s4 / n_paths - second**2, 0, None)
    return OUSample(cov, np.sqrt(var_prod / n_paths), n_paths, nsteps * dt, dt)


@dataclass(frozen=True)
class CorrelationRow:
    value: float
    branch: str
    n_var_jz: float
    n_cov_jpjm: float
    flags: tuple = ()


def branch_correlations(model: FluctuationModel) -> tuple:
    """``N Var(Jz/N)`` and ``N (<J+ J->_S - <J+><J->) / N^2``."""
    c = model.c_matrix
    n = model.natoms
    return n * _real(c[2, 2], "C33"), n * _real(c[0, 1], "C12")


def _correlation_point(params, point):
    rows = []
    if point.branches is None:
        return [CorrelationRow(point.value, "", math.nan, math.nan, ("error",))]
    sub = point.branches.params
    for fp in point.branches.stable_points:
        model = build_model(sub, fp)
        if model.ok:
            rows.append(CorrelationRow(point.value, fp.branch_label, *branch_correlations(model), model.flags))
        else:
            rows.append(CorrelationRow(point.value, fp.branch_label, math.nan, math.nan, model.flags))
    if not rows:
        rows.append(CorrelationRow(point.value, "", math.nan, math.nan, ("no_stable_root",)))
    return rows


def correlation_scan(params: SystemParams, sweep: Sweep, workers: int = 1) -> list:
    """N-scaled ``Jz`` variance and ``J+ J-`` correlation on each stable branch."""
    scan = scan_bifurcation(params, sweep, workers)
    rows = []
    for point in scan.points:
        rows.extend(_correlation_point(params, point))
    return rows
