"""Command-line front end.

Subcommands write CSV (default) or JSON tables.  Every CSV starts with a
comment line holding the tool version and the full run configuration.
Exit codes: 0 success, 1 configuration error, 2 no stable fixed point,
3 resource guard refusal.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import sys
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from dtfim import __version__
from dtfim.errors import InvalidParams, ModelError, TooLarge
from dtfim.fluctuations import build_model, sample_ou, to_real_basis
from dtfim.meanfield import steady_states
from dtfim.oracle import N_MAX, compare, convergence_study, memory_estimate
from dtfim.params import SystemParams, Sweep, pmap
from dtfim.squeezing import analyze_point, squeezing_map

EXIT_OK, EXIT_CONFIG, EXIT_NO_STABLE, EXIT_RESOURCE = 0, 1, 2, 3
MEMORY_BUDGET = 3 * 2**30
SUBCOMMANDS = ("fixed-points", "scan", "squeeze-map", "oracle", "converge")

DEFAULTS = {
    "delta": 0.0,
    "omega": 2.0,
    "vint": 20.0,
    "gamma": 1.0,
    "natoms": 100,
    "sweep": None,
    "grid": None,
    "n_list": "3,4,5,6,7",
    "n_paths": 0,
    "seed": 0,
    "out": None,
    "format": "csv",
    "workers": 1,
    "force": False,
}


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    subcommand: str
    params: SystemParams
    sweep: Sweep | None = None
    grid: tuple | None = None
    n_list: tuple = ()
    n_paths: int = 0
    seed: int = 0
    out: str | None = None
    format: str = "csv"
    workers: int = 1
    force: bool = False
    raw: dict = field(default_factory=dict)


def parse_grid(text: str):
    """``vmin:vmax:steps,omin:omax:steps`` -> ((vmin, vmax, n), (omin, omax, n))."""
    try:
        parts = [p.split(":") for p in text.split(",")]
        (v0, v1, nv), (o0, o1, no) = parts
        grid = ((float(v0), float(v1), int(nv)), (float(o0), float(o1), int(no)))
    except ValueError:
        raise ConfigError(f"grid must look like vmin:vmax:steps,omin:omax:steps, got {text!r}") from None
    for lo, hi, n in grid:
        if n < 2 or lo == hi or not (math.isfinite(lo) and math.isfinite(hi)):
            raise ConfigError(f"bad grid {text!r}: ranges must be nonempty with >= 2 steps")
    return grid


def read_config_file(path: str) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in DEFAULTS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            out[key] = value
    return out


def _coerce(key, value):
    default = DEFAULTS[key]
    if value is None:
        return None
    if isinstance(default, bool):
        return value if isinstance(value, bool) else str(value).lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    return str(value)


def build_config(ns: argparse.Namespace) -> RunConfig:
    merged = dict(DEFAULTS)
    if ns.config:
        try:
            merged.update(read_config_file(ns.config))
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
    for key in DEFAULTS:
        value = getattr(ns, key, None)
        if value is not None and value is not False:
            merged[key] = value
    try:
        merged = {k: _coerce(k, v) for k, v in merged.items()}
    except ValueError as exc:
        raise ConfigError(f"bad value: {exc}") from None
    if merged["format"] not in ("csv", "json"):
        raise ConfigError("format must be csv or json")
    if merged["workers"] < 1 or merged["n_paths"] < 0:
        raise ConfigError("workers must be >= 1 and n-paths >= 0")
    try:
        params = SystemParams(merged["delta"], merged["omega"], merged["vint"], merged["gamma"], merged["natoms"])
        sweep = Sweep.parse(merged["sweep"]) if merged["sweep"] else None
    except InvalidParams as exc:
        raise ConfigError(str(exc)) from None
    grid = parse_grid(merged["grid"]) if merged["grid"] else None
    try:
        n_list = tuple(int(s) for s in merged["n_list"].split(",") if s.strip())
    except ValueError:
        raise ConfigError(f"bad n-list {merged['n_list']!r}") from None
    if not n_list or min(n_list) < 1:
        raise ConfigError("n-list must hold positive integers")
    return RunConfig(
        ns.subcommand, params, sweep, grid, n_list, merged["n_paths"], merged["seed"],
        merged["out"], merged["format"], merged["workers"], merged["force"], merged,
    )


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    if isinstance(x, (tuple, list)):
        return ";".join(str(s) for s in x)
    return str(x)


def _jsonable(x):
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, tuple):
        return list(x)
    return x


def render(cfg: RunConfig, columns, rows, footer=None) -> str:
    meta = {k: v for k, v in cfg.raw.items() if k not in ("out", "format", "workers")}
    if cfg.format == "json":
        doc = {
            "tool": f"dtfim {__version__}",
            "subcommand": cfg.subcommand,
            "config": meta,
            "columns": list(columns),
            "rows": [[_jsonable(v) for v in row] for row in rows],
        }
        if footer:
            doc["summary"] = {k: _jsonable(v) for k, v in footer.items()}
        return json.dumps(doc, indent=1, sort_keys=False) + "\n"
    buf = io.StringIO()
    buf.write(f"# dtfim {__version__} {cfg.subcommand} " + " ".join(f"{k}={meta[k]}" for k in sorted(meta)) + "\n")
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(fmt(v) for v in row) + "\n")
    if footer:
        buf.write("# " + " ".join(f"{k}={fmt(v)}" for k, v in footer.items()) + "\n")
    return buf.getvalue()


def emit(cfg: RunConfig, text: str, stdout):
    if cfg.out:
        with open(cfg.out, "w", newline="") as fh:
            fh.write(text)
    else:
        stdout.write(text)


def cmd_fixed_points(cfg: RunConfig, stdout) -> int:
    branches = steady_states(cfg.params)
    columns = ["branch", "m", "re_v", "im_v", "stable"]
    columns += [f"{p}_eig{k}" for k in range(1, 4) for p in ("re", "im")]
    with_ou = cfg.n_paths > 0
    if with_ou:
        columns += ["ou_entry", "ou_cov", "ou_stderr", "lyapunov_cov"]
    rows = []
    for fp in branches:
        eig = sorted(fp.eigenvalues, key=lambda z: (-z.real, z.imag))
        base = [fp.branch_label, fp.state.m, fp.state.v.real, fp.state.v.imag, fp.stable]
        base += [c for z in eig for c in (z.real, z.imag)]
        model = build_model(cfg.params, fp) if with_ou and fp.stable else None
        if model is None or not model.ok:
            rows.append(base + ([""] * 4 if with_ou else []))
            continue
        sample = sample_ou(model.a_matrix, model.d_matrix, cfg.n_paths, seed=cfg.seed)
        exact = to_real_basis(model.c_matrix).real
        names = ("x", "y", "m")
        for i in range(3):
            for j in range(i, 3):
                rows.append(base + [names[i] + names[j], sample.cov[i, j], sample.stderr[i, j], exact[i, j]])
    emit(cfg, render(cfg, columns, rows), stdout)
    return EXIT_OK if branches.stable_points else EXIT_NO_STABLE


SCAN_COLUMNS = ["sweep_value", "branch", "m", "re_v", "im_v", "stable", "n_var_jz", "n_cov_jpjm", "xi2", "flags"]


def _scan_rows(params, axis, value):
    p = params.with_value(axis, value)
    try:
        records = analyze_point(p)
    except ModelError as exc:
        return [[value, "", math.nan, math.nan, math.nan, False, math.nan, math.nan, math.nan, ("error", type(exc).__name__)]]
    return [
        [value, r.branch, r.m, r.v.real, r.v.imag, r.stable, r.n_var_jz, r.n_cov_jpjm, r.xi2, r.flags]
        for r in records
    ]


def cmd_scan(cfg: RunConfig, stdout) -> int:
    if cfg.sweep is None:
        raise ConfigError("scan needs --sweep axis:min:max:steps")
    chunks = pmap(partial(_scan_rows, cfg.params, cfg.sweep.axis), list(cfg.sweep.values()), cfg.workers)
    rows = [row for chunk in chunks for row in chunk]
    emit(cfg, render(cfg, SCAN_COLUMNS, rows), stdout)
    return EXIT_OK


def cmd_squeeze_map(cfg: RunConfig, stdout) -> int:
    if cfg.grid is None:
        raise ConfigError("squeeze-map needs --grid vmin:vmax:steps,omin:omax:steps")
    (v0, v1, nv), (o0, o1, no) = cfg.grid
    smap = squeezing_map(cfg.params, (v0, v1), (o0, o1), (nv, no), cfg.workers)
    rows = [[v, w, x, f] for v, w, x, f in smap.rows()]
    emit(cfg, render(cfg, ["v", "omega", "xi2", "flags"], rows), stdout)
    return EXIT_OK


def _guard(cfg: RunConfig, natoms: int, stderr) -> None:
    est = memory_estimate(natoms)
    if natoms >= 6:
        stderr.write(f"dtfim: N={natoms} needs about {est / 2**20:.0f} MiB\n")
    if not cfg.force and (natoms > N_MAX or est > MEMORY_BUDGET):
        raise TooLarge(f"N={natoms} refused (limit N={N_MAX}, budget {MEMORY_BUDGET / 2**30:.0f} GiB); use --force")


def cmd_oracle(cfg: RunConfig, stdout, stderr) -> int:
    n = cfg.params.natoms
    _guard(cfg, n, stderr)
    cmp = compare(cfg.params, n, n_max=max(N_MAX, n))
    rows = []
    for k, name in enumerate("xyz"):
        rows.append([f"mean_{name}", cmp.exact_mean[k], cmp.analytic_mean[k]])
    for i, j in ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)):
        rows.append([f"n_cov_{'xyz'[i]}{'xyz'[j]}", cmp.exact_ncov[i, j], cmp.analytic_ncov[i, j]])
    rows.append(["xi2", cmp.exact_xi2, cmp.analytic_xi2])
    rows = [r + [abs(r[1] - r[2])] for r in rows]
    emit(cfg, render(cfg, ["quantity", "exact", "analytic", "deviation"], rows, {"natoms": n, "flags": cmp.flags}), stdout)
    return EXIT_OK


CONVERGE_COLUMNS = [
    "natoms", "xi2_exact", "xi2_analytic", "xi2_deviation", "cov_deviation", "mean_deviation",
    "n_var_jz_exact", "n_var_jz_analytic", "flags",
]


def cmd_converge(cfg: RunConfig, stdout, stderr) -> int:
    for n in cfg.n_list:
        _guard(cfg, n, stderr)
    study = convergence_study(cfg.params, cfg.n_list, n_max=max(N_MAX, *cfg.n_list))
    rows = [
        [r.natoms, r.exact_xi2, r.analytic_xi2, r.xi2_deviation, r.cov_deviation, r.mean_deviation,
         r.exact_ncov[2, 2], r.analytic_ncov[2, 2], r.flags]
        for r in study.rows
    ]
    emit(cfg, render(cfg, CONVERGE_COLUMNS, rows, {"fit_exponent": study.exponent}), stdout)
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dtfim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"dtfim {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--delta", type=float, help="detuning (units of gamma)")
    common.add_argument("--omega", type=float, help="Rabi frequency")
    common.add_argument("--vint", type=float, help="interaction strength V")
    common.add_argument("--gamma", type=float, help="decay rate (default 1)")
    common.add_argument("--natoms", type=int, help="atom number N")
    common.add_argument("--sweep", help="axis:min:max:steps with axis in delta, omega, vint")
    common.add_argument("--grid", help="vmin:vmax:steps,omin:omax:steps")
    common.add_argument("--n-list", dest="n_list", help="comma separated atom numbers (converge)")
    common.add_argument("--n-paths", dest="n_paths", type=int, help="OU sample paths (fixed-points)")
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int, help="worker processes for scans and maps")
    common.add_argument("--out", help="output path (default stdout)")
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("--config", help="key = value file; command-line flags win")
    common.add_argument("--force", action="store_true", help="override the oracle resource guard")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = make_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        cfg = build_config(ns)
        if cfg.subcommand == "fixed-points":
            return cmd_fixed_points(cfg, stdout)
        if cfg.subcommand == "scan":
            return cmd_scan(cfg, stdout)
        if cfg.subcommand == "squeeze-map":
            return cmd_squeeze_map(cfg, stdout)
        if cfg.subcommand == "oracle":
            return cmd_oracle(cfg, stdout, stderr)
        return cmd_converge(cfg, stdout, stderr)
    except ConfigError as exc:
        stderr.write(f"dtfim: {exc}\n")
        return EXIT_CONFIG
    except TooLarge as exc:
        stderr.write(f"dtfim: {exc}\n")
        return EXIT_RESOURCE
    except (ModelError, ValueError) as exc:
        stderr.write(f"dtfim: {type(exc).__name__}: {exc}\n")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
