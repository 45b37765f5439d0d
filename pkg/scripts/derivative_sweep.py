"""Second-derivative error of centered FD and HDAF operators versus grid refinement.

Writes ``results/derivative_sweep.csv`` and prints the crossover summary.
"""

import argparse
from pathlib import Path

import numpy as np

from qtt_hdaf import bench


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", type=Path, default=Path("results"))
    parser.add_argument("--n-max", type=int, default=18)
    args = parser.parse_args()

    rows = bench.cmd_derivative_sweep((8, 20, 40), range(4, args.n_max + 1))
    bench.write_table(args.out_dir / "derivative_sweep.csv", rows)
    for label in sorted({r["method"] for r in rows}):
        direct = [r for r in rows if r["method"] == label and not r["mitigated"]]
        errors = np.array([r["error"] for r in direct])
        best = direct[int(np.nanargmin(errors))]
        print(f"{label:>8}: best error {best['error']:.2e} at n={best['n']}")


if __name__ == "__main__":
    main()
