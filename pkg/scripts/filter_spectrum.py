"""Fourier spectra of the reconstruction kernel for a range of orders."""

import argparse
from pathlib import Path

from qtt_hdaf import bench


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", type=Path, default=Path("results"))
    args = parser.parse_args()

    rows, markers = bench.cmd_filter_spectrum()
    bench.write_table(args.out_dir / "filter_spectrum.csv", rows, extras={"markers": markers})
    for m in markers:
        print(f"M={m['M']:>3} sigma/dx={m['sigma_dx']:.3f} k*dx={m['k_star_dx']:.3f} "
              f"value={m['value_at_k_star']:.3f}")


if __name__ == "__main__":
    main()
