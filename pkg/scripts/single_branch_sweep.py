"""Detuning sweep at Omega=2, V=1, where only one branch exists."""

import argparse
from pathlib import Path

from dtfim.cli import main

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("results"))
    ap.add_argument("--steps", type=int, default=401)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    raise SystemExit(main(["scan", "--omega", "2", "--vint", "1", "--sweep", f"delta:-5:5:{args.steps}",
                           "--out", str(args.out / "single_branch_scan.csv")]))
