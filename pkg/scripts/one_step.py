"""Single-step error against step size for every stepper, with both kinetic operators.

Writes one CSV per kinetic choice (plus fit sidecars) and prints the fitted orders.
"""

import argparse
import time
from pathlib import Path

from qtt_hdaf import bench


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", type=Path, default=Path("results"))
    parser.add_argument("--n", type=int, default=14)
    parser.add_argument("--repeat", type=int, default=1)
    args = parser.parse_args()

    for kinetic, methods in (("hdaf", bench.ONE_STEP_METHODS), ("fd", bench.FD_METHODS)):
        start = time.perf_counter()
        records, fits = bench.cmd_one_step(methods, n=args.n, kinetic=kinetic, repeat=args.repeat)
        bench.write_records(args.out_dir / f"one_step_{kinetic}.csv", records, fits)
        print(f"{kinetic} kinetic ({time.perf_counter() - start:.0f}s)")
        for name, fit in fits.items():
            flag = " flagged" if fit.flagged else ""
            print(f"  {name:>15}: m={fit.m:.2f} C={fit.C:.2e} points={fit.n_points}{flag}")


if __name__ == "__main__":
    main()
