"""Mean-field steady states of the driven, interacting two-level ensemble.

The per-atom Bloch variables are ``v = <sigma_->`` (complex) and
``m = <sigma_z>`` (real).  Steady-state inversions are the real roots of a
cubic; the coherence follows in closed form.  Stability comes from the
eigenvalues of the 3x3 Jacobian in the ``(v, v*, m)`` coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from dtfim.errors import DegenerateDenominator, InvalidParams, NonFinite, NoPhysicalRoot
from dtfim.params import AXES, SystemParams, Sweep, pmap

BLOCH_TOL = 1e-9
IMAG_TOL = 1e-8
RANGE_TOL = 1e-8
STABILITY_TOL = 1e-12
BRANCH_LABELS = {1: ("lower",), 2: ("lower", "upper"), 3: ("lower", "middle", "upper")}


@dataclass(frozen=True)
class MeanFieldState:
    v: complex
    m: float

    def __post_init__(self):
        object.__setattr__(self, "v", complex(self.v))
        object.__setattr__(self, "m", float(self.m))
        if not (math.isfinite(self.v.real) and math.isfinite(self.v.imag) and math.isfinite(self.m)):
            raise NonFinite(f"non-finite mean-field state v={self.v}, m={self.m}")
        if not -1 - BLOCH_TOL <= self.m <= 1 + BLOCH_TOL:
            raise InvalidParams(f"inversion m={self.m} outside [-1, 1]")
        if self.bloch_norm2 > 1 + BLOCH_TOL:
            raise InvalidParams(f"state outside the Bloch ball: 4|v|^2 + m^2 = {self.bloch_norm2}")

    @property
    def vstar(self) -> complex:
        return self.v.conjugate()

    @property
    def bloch_norm2(self) -> float:
        return 4 * abs(self.v) ** 2 + self.m**2

    @property
    def bloch_vector(self) -> np.ndarray:
        """Per-atom ``(<sigma_x>, <sigma_y>, <sigma_z>)``."""
        return np.array([2 * self.v.real, -2 * self.v.imag, self.m])


@dataclass(frozen=True)
class FixedPoint:
    state: MeanFieldState
    eigenvalues: np.ndarray
    stable: bool
    branch_label: str

    @property
    def max_real_eigenvalue(self) -> float:
        return float(np.max(self.eigenvalues.real))

    @property
    def marginal(self) -> bool:
        return abs(self.max_real_eigenvalue) <= STABILITY_TOL


@dataclass(frozen=True)
class BranchSet:
    params: SystemParams
    fixed_points: list = field(default_factory=list)

    def __len__(self):
        return len(self.fixed_points)

    def __iter__(self):
        return iter(self.fixed_points)

    @property
    def bistable(self) -> bool:
        return len(self.fixed_points) == 3

    @property
    def stable_points(self) -> list:
        return [fp for fp in self.fixed_points if fp.stable]

    def branch(self, label: str) -> FixedPoint:
        for fp in self.fixed_points:
            if fp.branch_label == label:
                return fp
        raise KeyError(label)


def cubic_coefficients(params: SystemParams) -> tuple:
    """Coefficients ``(c3, c2, c1, c0)`` of the steady-state cubic in ``m``."""
    d, w, v, g = params.delta, params.omega, params.vint, params.gamma
    return (
        v * v,
        v * (3 * v - 4 * d),
        4 * d * d + g * g - 8 * d * v + 3 * v * v + 2 * w * w,
        g * g + (v - 2 * d) ** 2,
    )


def cubic_discriminant(coeffs) -> float:
    a, b, c, d = coeffs
    return 18 * a * b * c * d - 4 * b**3 * d + b * b * c * c - 4 * a * c**3 - 27 * a * a * d * d


def _trim(coeffs):
    coeffs = list(coeffs)
    while coeffs and coeffs[0] == 0:
        coeffs.pop(0)
    return coeffs


def companion_roots(coeffs) -> np.ndarray:
    """Roots of a polynomial (descending coefficients) from its companion matrix."""
    coeffs = _trim(coeffs)
    big = max((abs(c) for c in coeffs), default=0.0)
    # a negligible leading coefficient only adds a root near infinity
    while coeffs and abs(coeffs[0]) <= 1e-14 * big:
        coeffs.pop(0)
    deg = len(coeffs) - 1
    if deg < 1:
        return np.array([], dtype=complex)
    lead = coeffs[0]
    comp = np.zeros((deg, deg))
    comp[0, :] = -np.asarray(coeffs[1:], dtype=float) / lead
    comp[1:, :-1] = np.eye(deg - 1)
    return np.linalg.eigvals(comp).astype(complex)


def _poly(coeffs, x):
    value, deriv, scale = 0.0, 0.0, 0.0
    for c in coeffs:
        deriv = deriv * x + value
        value = value * x + c
        scale = scale * abs(x) + abs(c)
    return value, deriv, scale


def relative_residual(coeffs, x: float) -> float:
    value, _, scale = _poly(_trim(coeffs), x)
    return abs(value) / scale if scale > 0 else abs(value)


def newton_polish(coeffs, x: float, max_iter: int = 8) -> float:
    """Refine a real root; stops once the residual stops improving."""
    coeffs = _trim(coeffs)
    value, deriv, _ = _poly(coeffs, x)
    for _ in range(max_iter):
        if value == 0 or deriv == 0:
            break
        trial = x - value / deriv
        tv, td, _ = _poly(coeffs, trial)
        if abs(tv) >= abs(value):
            break
        x, value, deriv = trial, tv, td
    return x


def physical_roots(params: SystemParams) -> np.ndarray:
    """Sorted, polished real roots of the cubic lying in ``[-1, 0]``."""
    if params.omega == 0:
        # the cubic factors as (m + 1)(V^2 (m + 1 - 2 delta / V)^2 + gamma^2):
        # without drive the ground state is the only real root
        return np.array([-1.0])
    coeffs = cubic_coefficients(params)
    trimmed = _trim(coeffs)
    raw = companion_roots(trimmed)
    candidates = [r for r in raw if abs(r.imag) <= IMAG_TOL]
    if len(trimmed) == 4 and len(candidates) < 3 and cubic_discriminant(trimmed) > 0:
        # near a double root the eigensolver leaves imaginary dust above
        # IMAG_TOL; a positive discriminant still means three real roots
        candidates = list(raw)
    roots = []
    for r in candidates:
        if not -1 - 1e-6 <= r.real <= 1e-6:
            # never let Newton carry a far-away root into the physical range
            continue
        x = newton_polish(trimmed, float(r.real))
        if -1 - RANGE_TOL <= x <= RANGE_TOL:
            roots.append(min(0.0, max(-1.0, x)))
    if not roots:
        raise NoPhysicalRoot(f"no real root in [-1, 0] for {params}", roots=raw)
    return np.sort(np.array(roots))


def coherence(params: SystemParams, m: float) -> complex:
    """Steady-state ``v`` for a given steady-state inversion ``m``."""
    denom = 1j * (2 * params.delta - params.vint * (m + 1)) - params.gamma
    if abs(denom) < 1e-14:
        raise DegenerateDenominator(f"vanishing denominator at m={m} for {params}")
    return -1j * params.omega * m / denom


def jacobian(params: SystemParams, state: MeanFieldState) -> np.ndarray:
    """Drift matrix of the linearized flow in ``(v, v*, m)`` coordinates."""
    d, w, vi, g = params.delta, params.omega, params.vint, params.gamma
    v, m = state.v, state.m
    eff = d - 0.5 * vi * (m + 1)
    return np.array(
        [
            [1j * eff - g / 2, 0, 0.5j * (w - vi * v)],
            [0, -1j * eff - g / 2, -0.5j * (w - vi * v.conjugate())],
            [1j * w, -1j * w, -g],
        ],
        dtype=complex,
    )


def _fixed_point(params, m, label):
    state = MeanFieldState(coherence(params, m), m)
    eig = np.linalg.eigvals(jacobian(params, state))
    return FixedPoint(state, eig, bool(np.max(eig.real) < -STABILITY_TOL), label)


def steady_states(params: SystemParams) -> BranchSet:
    """All physical mean-field fixed points, labelled by ascending inversion.

    A lone root is labelled ``lower``.
    """
    roots = physical_roots(params)
    # polishing can merge two of the three roots right at a saddle node
    roots = np.unique(roots)
    labels = BRANCH_LABELS[len(roots)]
    return BranchSet(params, [_fixed_point(params, m, lab) for m, lab in zip(roots, labels)])


def drift(params: SystemParams, v: complex, m: float):
    """Time derivatives ``(dv/dt, dm/dt)`` of the mean-field equations."""
    eff = params.delta - 0.5 * params.vint * (m + 1)
    dv = 1j * eff * v + 0.5j * params.omega * m - 0.5 * params.gamma * v
    dm = (1j * params.omega * (v - v.conjugate())).real - params.gamma * (m + 1)
    return dv, dm


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    v: np.ndarray
    m: np.ndarray

    @property
    def vstar(self) -> np.ndarray:
        return self.v.conj()

    @property
    def final(self) -> MeanFieldState:
        return MeanFieldState(self.v[-1], self.m[-1])

    def bloch_norm2(self) -> np.ndarray:
        return 4 * np.abs(self.v) ** 2 + self.m**2


def integrate_meanfield(
    params: SystemParams, init: MeanFieldState, t_final: float, dt: float = 1e-3, record_every: int = 1
) -> Trajectory:
    """Fixed-step RK4 integration of the mean-field equations.

    Only ``v`` and ``m`` are integrated; ``v*`` is always ``conj(v)``.
    """
    if not dt > 0 or not t_final >= dt:
        raise InvalidParams("need dt > 0 and t_final >= dt")
    nsteps = int(round(t_final / dt))
    v, m = complex(init.v), float(init.m)
    times, vs, ms = [0.0], [v], [m]
    f = partial(drift, params)
    for k in range(1, nsteps + 1):
        k1v, k1m = f(v, m)
        k2v, k2m = f(v + 0.5 * dt * k1v, m + 0.5 * dt * k1m)
        k3v, k3m = f(v + 0.5 * dt * k2v, m + 0.5 * dt * k2m)
        k4v, k4m = f(v + dt * k3v, m + dt * k3m)
        v += dt / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
        m += dt / 6 * (k1m + 2 * k2m + 2 * k3m + k4m)
        if not (math.isfinite(m) and math.isfinite(v.real) and math.isfinite(v.imag)):
            raise NonFinite(f"mean-field state diverged at t={k * dt}")
        if k % record_every == 0 or k == nsteps:
            times.append(k * dt)
            vs.append(v)
            ms.append(m)
    return Trajectory(np.array(times), np.array(vs, dtype=complex), np.array(ms))


@dataclass(frozen=True)
class ScanPoint:
    value: float
    branches: BranchSet | None
    error: str | None = None

    @property
    def flags(self) -> tuple:
        if self.branches is None:
            return ("error",)
        if not self.branches.stable_points:
            return ("no_stable_root",)
        return ()


@dataclass(frozen=True)
class BifurcationScan:
    axis: str
    points: list
    window: tuple | None


def _scan_one(params, axis, value):
    try:
        return ScanPoint(float(value), steady_states(params.with_value(axis, value)))
    except (NoPhysicalRoot, DegenerateDenominator) as exc:
        return ScanPoint(float(value), None, f"{type(exc).__name__}: {exc}")


def scan_bifurcation(params: SystemParams, sweep: Sweep, workers: int = 1) -> BifurcationScan:
    """Fixed points along a parameter sweep.

    ``window`` is the ``(first, last)`` sweep value of the contiguous run of
    three-root points (the longest run, if several), or None.
    """
    points = pmap(partial(_scan_one, params, sweep.axis), sweep.values(), workers)
    best, run = None, []
    for p in points + [None]:
        if p is not None and p.branches is not None and p.branches.bistable:
            run.append(p.value)
            continue
        if run and (best is None or len(run) > len(best)):
            best = run
        run = []
    window = (best[0], best[-1]) if best else None
    return BifurcationScan(sweep.axis, points, window)


def _default_range(params: SystemParams, axis: str):
    d, w, v, g = abs(params.delta), abs(params.omega), abs(params.vint), params.gamma
    if axis == "delta":
        b = 2 * (v + w + g)
        return -b, b
    if axis == "omega":
        return 0.0, 2 * (v + d + g)
    b = 20 * (d + w + g)
    return -b, b


def critical_points(
    params: SystemParams, sweep_axis: str, lo: float | None = None, hi: float | None = None, samples: int = 4001
) -> list:
    """Saddle-node locations along ``sweep_axis``.

    The cubic discriminant is sampled on ``[lo, hi]`` and every sign change
    is bisected down to ``1e-10 * gamma``.
    """
    if sweep_axis not in AXES:
        raise InvalidParams(f"unknown sweep axis {sweep_axis!r}")
    if lo is None or hi is None:
        dlo, dhi = _default_range(params, sweep_axis)
        lo = dlo if lo is None else lo
        hi = dhi if hi is None else hi

    def disc(x):
        coeffs = cubic_coefficients(params.with_value(sweep_axis, x))
        if coeffs[0] == 0:
            return -1.0
        return cubic_discriminant(coeffs)

    xs = np.linspace(lo, hi, samples)
    signs = np.sign([disc(x) for x in xs])
    found = []
    for i in range(samples - 1):
        if signs[i] == 0:
            continue
        if signs[i] * signs[i + 1] < 0:
            a, b, sa = xs[i], xs[i + 1], signs[i]
            while b - a > 1e-10 * params.gamma:
                mid = 0.5 * (a + b)
                sm = np.sign(disc(mid))
                if sm == 0:
                    a = b = mid
                    break
                if sm == sa:
                    a = mid
                else:
                    b = mid
            found.append(0.5 * (a + b))
    return found


def critical_state(params: SystemParams) -> MeanFieldState:
    """The merging (double) root of the cubic at a saddle node.

    Taken as the zero of the cubic's derivative with the smallest residual.
    """
    coeffs = cubic_coefficients(params)
    c3, c2, c1, _ = coeffs
    crit = [r.real for r in companion_roots([3 * c3, 2 * c2, c1]) if abs(r.imag) < 1e-6]
    crit = [min(0.0, max(-1.0, r)) for r in crit if -1 - 1e-6 <= r <= 1e-6]
    if not crit:
        raise NoPhysicalRoot(f"no double root in [-1, 0] for {params}")
    m = min(crit, key=lambda r: relative_residual(coeffs, r))
    return MeanFieldState(coherence(params, m), m)


def p_drift_steady_state(params: SystemParams, natoms: int | None = None, branch: str = "lower") -> float:
    """Steady inversion of the normal-ordered (P) drift.

    The P drift renormalizes the detuning with ``m + 1/N + 1`` in place of
    ``m + 1``, i.e. it is the Wigner drift at ``delta - vint / (2N)``.  The
    root nearest the chosen Wigner branch is returned.
    """
    n = params.natoms if natoms is None else natoms
    if n < 1:
        raise InvalidParams("natoms must be >= 1")
    wigner = steady_states(params).branch(branch).state.m
    if params.vint == 0:
        return wigner
    shifted = params.with_value("delta", params.delta - params.vint / (2.0 * n))
    roots = physical_roots(shifted)
    return float(roots[np.argmin(np.abs(roots - wigner))])
