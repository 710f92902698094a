"""Squeezing parameter over the (V, Omega) plane at zero detuning."""

import argparse
from pathlib import Path

import numpy as np

from dtfim import SystemParams
from dtfim.squeezing import squeezing_map

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("results"))
    ap.add_argument("--grid", type=int, default=101)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    smap = squeezing_map(SystemParams(0.0, 1.0, 1.0), (0, 20), (0, 10), (args.grid, args.grid), args.workers)
    with open(args.out / "squeezing_map.csv", "w") as fh:
        fh.write("v,omega,xi2,flags\n")
        for v, w, x, flags in smap.rows():
            fh.write(f"{v:.17g},{w:.17g},{x:.17g},{';'.join(flags)}\n")
    i, j = np.unravel_index(np.nanargmin(smap.xi2), smap.xi2.shape)
    print(f"min xi2 = {smap.xi2[i, j]:.4f} at V={smap.vint[i]:.3f}, Omega={smap.omega[j]:.3f}")
