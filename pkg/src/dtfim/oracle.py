"""Exact finite-N master-equation solver used as ground truth.

Single-atom basis is ``(|up>, |down>)`` so ``sigma_z = diag(1, -1)`` and
``sigma_- = |down><up|``.  Superoperators act on row-major ``vec(rho)``,
for which ``vec(A rho B) = (A kron B^T) vec(rho)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from dtfim.errors import DegenerateSteadyState, ModelError, TooLarge
from dtfim.fluctuations import SpinMoments, build_model, covariances_xyz
from dtfim.meanfield import steady_states
from dtfim.params import SystemParams
from dtfim.squeezing import SqueezingResult, squeezing_parameter

N_MAX = 7
SVD_MAX_ATOMS = 5

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
SM = np.array([[0, 0], [1, 0]], dtype=complex)


def _check_size(natoms, n_max):
    if natoms < 1:
        raise ValueError("natoms must be >= 1")
    if natoms > n_max:
        raise TooLarge(f"N={natoms} exceeds the oracle limit N_max={n_max}")


def site_operator(op, site: int, natoms: int) -> sp.csr_matrix:
    left = sp.identity(2**site, format="csr")
    right = sp.identity(2 ** (natoms - site - 1), format="csr")
    return sp.kron(sp.kron(left, sp.csr_matrix(op)), right, format="csr")


@lru_cache(maxsize=16)
def collective_operators(natoms: int) -> tuple:
    """Dense ``(Jx, Jy, Jz)`` with ``J_a = sum_n sigma_{n a}``."""
    return tuple(
        sum(site_operator(op, n, natoms) for n in range(natoms)).toarray() for op in (SX, SY, SZ)
    )


def ladder_operators(natoms: int) -> tuple:
    """``(J+, J-)`` with ``J+- = (Jx +- i Jy) / 2``."""
    jx, jy, _ = collective_operators(natoms)
    return 0.5 * (jx + 1j * jy), 0.5 * (jx - 1j * jy)


def build_hamiltonian(params: SystemParams, natoms: int | None = None, n_max: int = N_MAX) -> np.ndarray:
    """Site-resolved Ising Hamiltonian; the ``m == n`` terms of the double sum are kept."""
    n = params.natoms if natoms is None else natoms
    _check_size(n, n_max)
    zs = [site_operator(SZ, k, n) for k in range(n)]
    field = (-params.delta / 2 + params.vint / 4) * sum(zs)
    drive = (params.omega / 2) * sum(site_operator(SX, k, n) for k in range(n))
    coupling = sum(zs[a] @ zs[b] for a in range(n) for b in range(n))
    return (field + drive + params.vint / (8 * n) * coupling).toarray()


def collective_hamiltonian(params: SystemParams, natoms: int | None = None) -> np.ndarray:
    n = params.natoms if natoms is None else natoms
    jx, _, jz = collective_operators(n)
    return (-params.delta / 2 + params.vint / 4) * jz + params.omega / 2 * jx + params.vint / (8 * n) * jz @ jz


@dataclass(frozen=True)
class Liouvillian:
    superoperator: sp.csr_matrix
    params: SystemParams
    natoms: int
    hamiltonian: np.ndarray
    jumps: tuple

    @property
    def dim(self) -> int:
        return 2**self.natoms

    def apply(self, rho: np.ndarray) -> np.ndarray:
        """``L[rho]`` in matrix form."""
        h = self.hamiltonian
        out = -1j * (h @ rho - rho @ h)
        g = self.params.gamma
        for c in self.jumps:
            cd = c.conj().T
            cdc = cd @ c
            out += g * (c @ rho @ cd - 0.5 * (cdc @ rho + rho @ cdc))
        return out

    def dense(self) -> np.ndarray:
        return self.superoperator.toarray()


def build_liouvillian(params: SystemParams, natoms: int | None = None, n_max: int = N_MAX) -> Liouvillian:
    n = params.natoms if natoms is None else natoms
    h = build_hamiltonian(params, n, n_max)
    d = 2**n
    eye = sp.identity(d, format="csr")
    hs = sp.csr_matrix(h)
    sup = -1j * (sp.kron(hs, eye) - sp.kron(eye, hs.T))
    jumps = []
    for k in range(n):
        c = site_operator(SM, k, n)
        cdc = c.conj().T @ c
        sup = sup + params.gamma * (
            sp.kron(c, c.conj()) - 0.5 * sp.kron(cdc, eye) - 0.5 * sp.kron(eye, cdc.T)
        )
        jumps.append(c.toarray())
    return Liouvillian(sup.tocsr(), params, n, h, tuple(jumps))


@dataclass(frozen=True)
class DensityMatrix:
    matrix: np.ndarray
    natoms: int
    flags: tuple = ()

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def hermiticity_defect(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.conj().T))[0])

    def expect(self, op: np.ndarray) -> complex:
        return complex(np.trace(self.matrix @ op))


def ground_state(natoms: int) -> DensityMatrix:
    d = 2**natoms
    rho = np.zeros((d, d), dtype=complex)
    rho[-1, -1] = 1.0
    return DensityMatrix(rho, natoms)


def random_density_matrix(natoms: int, rng: np.random.Generator) -> DensityMatrix:
    d = 2**natoms
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    rho = g @ g.conj().T
    return DensityMatrix(rho / np.trace(rho), natoms)


def memory_estimate(natoms: int) -> int:
    """Rough peak bytes needed by :func:`steady_state` at ``natoms``."""
    d2 = 4**natoms
    if natoms <= SVD_MAX_ATOMS:
        return 3 * d2 * d2 * 16
    # sparse superoperator (~(4N + 4) entries per row) plus Krylov workspace
    return d2 * (4 * natoms + 4) * 28 + 40 * d2 * 16


def _normalize(vec, d):
    rho = vec.reshape(d, d)
    return rho / np.trace(rho)


def _steady_svd(liou: Liouvillian) -> np.ndarray:
    d = liou.dim
    _, s, vh = np.linalg.svd(liou.dense())
    nullity = int(np.sum(s < 1e-10 * s[0]))
    if nullity > 1:
        if liou.params.omega == 0:
            return ground_state(liou.natoms).matrix
        raise DegenerateSteadyState(f"null space of dimension {nullity}")
    return _normalize(vh[-1].conj(), d)


def _relax(sup, rho0, chunk_time, tol, max_time):
    x = rho0.reshape(-1).astype(complex)
    d = rho0.shape[0]
    diag = np.arange(d) * (d + 1)
    step = (chunk_time * sup).tocsr()
    t = 0.0
    while t < max_time:
        x = expm_multiply(step, x)
        x /= x[diag].sum()
        t += chunk_time
        if np.max(np.abs(sup @ x)) <= tol:
            return x
    raise ModelError(f"steady state not reached after t={max_time}")


def _steady_relax(liou: Liouvillian, tol=1e-12, chunk_time=None, max_time=None) -> np.ndarray:
    g = liou.params.gamma
    chunk_time = 20.0 / g if chunk_time is None else chunk_time
    max_time = 4000.0 / g if max_time is None else max_time
    d = liou.dim
    ground = ground_state(liou.natoms).matrix
    mixed = np.eye(d, dtype=complex) / d
    a = _relax(liou.superoperator, ground, chunk_time, tol, max_time)
    b = _relax(liou.superoperator, mixed, chunk_time, tol, max_time)
    if np.max(np.abs(a - b)) > 1e-8:
        if liou.params.omega == 0:
            return ground
        raise DegenerateSteadyState("relaxation from different initial states gives different limits")
    return _normalize(a, d)


def steady_state(liou: Liouvillian, method: str = "auto") -> DensityMatrix:
    """Unit-trace null vector of the Liouvillian.

    ``method="svd"`` takes the right singular vector of the dense
    superoperator and counts singular values below ``1e-10 * s_max`` to
    check uniqueness.  ``method="relax"`` propagates with the sparse
    superoperator from two different initial states until ``|L rho|`` is
    below 1e-12 and checks that both land on the same state.  ``auto`` uses
    SVD up to ``SVD_MAX_ATOMS`` atoms.
    """
    if method == "auto":
        method = "svd" if liou.natoms <= SVD_MAX_ATOMS else "relax"
    if method == "svd":
        rho = _steady_svd(liou)
    elif method == "relax":
        rho = _steady_relax(liou)
    else:
        raise ValueError(f"unknown method {method!r}")
    defect = np.max(np.abs(rho - rho.conj().T))
    if defect > 1e-10:
        raise ModelError(f"steady state not Hermitian (defect {defect:.2e})")
    return DensityMatrix(0.5 * (rho + rho.conj().T), liou.natoms)


def sym(*ops) -> np.ndarray:
    """Symmetrized product: average over all orderings of the factors."""
    perms = list(itertools.permutations(range(len(ops))))
    out = np.zeros_like(ops[0], dtype=complex)
    for p in perms:
        prod = ops[p[0]]
        for k in p[1:]:
            prod = prod @ ops[k]
        out += prod
    return out / len(perms)


def collective_moments(rho: DensityMatrix, natoms: int | None = None) -> SpinMoments:
    """Means and symmetric-ordered central covariances of ``J / N``."""
    n = rho.natoms if natoms is None else natoms
    ops = [j / n for j in collective_operators(n)]
    mean = np.array([rho.expect(j).real for j in ops])
    second = np.array([[rho.expect(sym(a, b)).real for b in ops] for a in ops])
    return SpinMoments(mean, second - np.outer(mean, mean))


def exact_squeezing(rho: DensityMatrix, natoms: int | None = None) -> SqueezingResult:
    n = rho.natoms if natoms is None else natoms
    return squeezing_parameter(collective_moments(rho, n), n)


def moment_equations(rho: DensityMatrix, params: SystemParams) -> dict:
    """Right-hand sides of the closed-form moment equations at ``rho``.

    Keys name the moment whose time derivative is given; ``+``/``-`` pick
    ``J+`` or ``J-``.  Third-order symmetric products use the three-term
    average, e.g. ``<A^2 B>_S = <A^2 B + A B A + B A^2> / 3``.
    """
    n = rho.natoms
    d, w, v, g = params.delta, params.omega, params.vint, params.gamma
    jp, jm = ladder_operators(n)
    _, _, jz = collective_operators(n)
    e = rho.expect
    out = {}
    out["Jz"] = -1j * w * (e(jp) - e(jm)) - g * e(jz) - g * n
    out["Jz^2"] = -2j * w * (e(sym(jp, jz)) - e(sym(jm, jz))) - 2 * g * e(jz @ jz) - 2 * g * (n - 1) * e(jz) + 2 * g * n
    out["J+J-"] = 0.5j * w * (e(sym(jp, jz)) - e(sym(jz, jm))) - g * e(sym(jp, jm)) + g * n / 2
    for s, j in ((1, jp), (-1, jm)):
        tag = "+" if s > 0 else "-"
        a2b = (j @ j @ jz + j @ jz @ j + jz @ j @ j) / 3
        jzz = (jz @ jz @ j + jz @ j @ jz + j @ jz @ jz) / 3
        out[f"J{tag}"] = (
            -s * 1j * ((d - v / 2) * e(j) + w / 2 * e(jz) - v / (2 * n) * e(sym(j, jz))) - g / 2 * e(j)
        )
        out[f"J{tag}^2"] = (
            -s * 1j * ((2 * d - v) * e(j @ j) + w * e(sym(j, jz)) - v / n * e(a2b)) - g * e(j @ j)
        )
        out[f"J{tag}Jz"] = (
            -s
            * 1j
            * (
                (d - v / 2) * e(sym(j, jz))
                + w / 2 * (2 * e(j @ j) + e(jz @ jz) - 2 * e(sym(jp, jm)))
                - v / (2 * n) * (e(jzz) - e(j) / 3)
            )
            - 1.5 * g * e(sym(j, jz))
            - g * (n - 1) * e(j)
        )
    return out


MOMENT_OPERATORS = {
    "J+": lambda jp, jm, jz: jp,
    "J-": lambda jp, jm, jz: jm,
    "Jz": lambda jp, jm, jz: jz,
    "J+^2": lambda jp, jm, jz: jp @ jp,
    "J-^2": lambda jp, jm, jz: jm @ jm,
    "Jz^2": lambda jp, jm, jz: jz @ jz,
    "J+J-": lambda jp, jm, jz: sym(jp, jm),
    "J+Jz": lambda jp, jm, jz: sym(jp, jz),
    "J-Jz": lambda jp, jm, jz: sym(jm, jz),
}

# groups reported together: J+- equations share one residual
EQUATION_GROUPS = {
    "J": ("J+", "J-"),
    "Jz": ("Jz",),
    "J^2": ("J+^2", "J-^2"),
    "Jz^2": ("Jz^2",),
    "J+J-": ("J+J-",),
    "JJz": ("J+Jz", "J-Jz"),
}


def moment_rhs_check(rho: DensityMatrix, params: SystemParams, natoms: int | None = None) -> dict:
    """Max mismatch between ``tr(O L[rho])`` and the closed-form right-hand sides.

    Returns one residual per equation group (see ``EQUATION_GROUPS``).
    """
    n = rho.natoms if natoms is None else natoms
    liou = build_liouvillian(params, n)
    lrho = liou.apply(rho.matrix)
    jp, jm = ladder_operators(n)
    jz = collective_operators(n)[2]
    rhs = moment_equations(rho, params)
    exact = {k: complex(np.trace(f(jp, jm, jz) @ lrho)) for k, f in MOMENT_OPERATORS.items()}
    return {g: max(abs(exact[k] - rhs[k]) for k in keys) for g, keys in EQUATION_GROUPS.items()}


def exact_steady_state(params: SystemParams, natoms: int | None = None, n_max: int = N_MAX) -> DensityMatrix:
    return steady_state(build_liouvillian(params, natoms, n_max))


@dataclass(frozen=True)
class Comparison:
    """Exact vs linearized quantities at one atom number."""

    natoms: int
    exact_mean: np.ndarray
    analytic_mean: np.ndarray
    exact_ncov: np.ndarray
    analytic_ncov: np.ndarray
    exact_xi2: float
    analytic_xi2: float
    flags: tuple = ()

    @property
    def xi2_deviation(self) -> float:
        return abs(self.exact_xi2 - self.analytic_xi2)

    @property
    def cov_deviation(self) -> float:
        return float(np.max(np.abs(self.exact_ncov - self.analytic_ncov)))

    @property
    def mean_deviation(self) -> float:
        return float(np.max(np.abs(self.exact_mean - self.analytic_mean)))


def compare(params: SystemParams, natoms: int | None = None, n_max: int = N_MAX) -> Comparison:
    """Exact oracle against mean field + Lyapunov at a single-branch point.

    Covariances are reported N-scaled.  At bistable points the analytic
    side is left as NaN and the comparison is flagged.
    """
    n = params.natoms if natoms is None else natoms
    rho = exact_steady_state(params, n, n_max)
    exact = collective_moments(rho)
    exact_xi2 = squeezing_parameter(exact, n)
    p = params.with_natoms(n)
    branches = steady_states(p)
    nan3 = np.full(3, math.nan)
    if len(branches) != 1 or not branches.fixed_points[0].stable:
        return Comparison(n, exact.mean, nan3, n * exact.cov, np.full((3, 3), math.nan),
                          exact_xi2.xi2, math.nan, ("bistable",))
    model = build_model(p, branches.fixed_points[0])
    analytic = covariances_xyz(model)
    analytic_xi2 = squeezing_parameter(analytic, n)
    return Comparison(
        n, exact.mean, analytic.mean, n * exact.cov, n * analytic.cov,
        exact_xi2.xi2, analytic_xi2.xi2, exact_xi2.flags + analytic_xi2.flags,
    )


@dataclass(frozen=True)
class ConvergenceStudy:
    params: SystemParams
    rows: list
    exponent: float


def fit_exponent(ns, deviations) -> float:
    """Power ``p`` in ``deviation ~ N^-p`` (log-log least squares)."""
    pts = [(n, dv) for n, dv in zip(ns, deviations) if dv > 1e-12 and math.isfinite(dv)]
    if len(pts) < 2:
        return math.nan
    x = np.log([p[0] for p in pts])
    y = np.log([p[1] for p in pts])
    slope = np.polyfit(x, y, 1)[0]
    return float(-slope)


def convergence_study(params: SystemParams, n_list, n_max: int = N_MAX) -> ConvergenceStudy:
    for n in n_list:
        _check_size(n, n_max)
    rows = [compare(params, n, n_max) for n in n_list]
    exponent = fit_exponent([r.natoms for r in rows], [r.xi2_deviation for r in rows])
    return ConvergenceStudy(params, rows, exponent)


def swap_operator(natoms: int, i: int, j: int) -> np.ndarray:
    """Permutation matrix exchanging atoms ``i`` and ``j``."""
    d = 2**natoms
    perm = np.empty(d, dtype=int)
    for idx in range(d):
        bits = [(idx >> (natoms - 1 - k)) & 1 for k in range(natoms)]
        bits[i], bits[j] = bits[j], bits[i]
        perm[idx] = sum(b << (natoms - 1 - k) for k, b in enumerate(bits))
    out = np.zeros((d, d))
    out[perm, np.arange(d)] = 1
    return out
