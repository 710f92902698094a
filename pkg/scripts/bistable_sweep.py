"""Detuning sweep at Omega=2, V=20: branches, correlations and squeezing.

Writes the branch-resolved table plus the two saddle-node detunings and the
lower-branch squeezing approaching its endpoint.
"""

import argparse
from pathlib import Path

from dtfim import SystemParams
from dtfim.cli import main
from dtfim.meanfield import critical_points
from dtfim.squeezing import analytic_squeezing


def run(out: Path, steps: int, workers: int):
    out.mkdir(parents=True, exist_ok=True)
    main(["scan", "--omega", "2", "--vint", "20", "--sweep", f"delta:0:12:{steps}",
          "--workers", str(workers), "--out", str(out / "bistable_scan.csv")])
    p = SystemParams(0.0, 2.0, 20.0)
    lo, hi = critical_points(p, "delta")
    with open(out / "bistable_critical.csv", "w") as fh:
        fh.write(f"# saddle nodes at delta={lo:.10f} and delta={hi:.10f}\n")
        fh.write("distance,xi2_lower\n")
        for k in range(1, 9):
            eps = 10.0**-k
            fh.write(f"{eps:.1e},{analytic_squeezing(p.with_value('delta', lo + eps), 'lower'):.10f}\n")
    print(f"window [{lo:.6f}, {hi:.6f}]; tables in {out}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("results"))
    ap.add_argument("--steps", type=int, default=601)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    run(args.out, args.steps, args.workers)
