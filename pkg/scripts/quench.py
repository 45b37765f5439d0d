"""Harmonic quench with the MPS split-step and the FFT reference for several step sizes.

Records every step to ``results/quench_<backend>_dt<dt>.csv`` and prints the
error and run-time exponents.
"""

import argparse
from pathlib import Path

from qtt_hdaf import bench
from qtt_hdaf.loading import QuenchParams


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", type=Path, default=Path("results"))
    parser.add_argument("--n", type=int, default=14)
    parser.add_argument("--dts", type=float, nargs="+", default=[0.01, 0.1, 1.0])
    parser.add_argument("--periods", type=float, default=0.5,
                        help="final time in units of pi/omegaH")
    args = parser.parse_args()

    params = QuenchParams()
    for dt in args.dts:
        t_final = bench.quench_final_time(params, dt, args.periods)
        for backend in ("mps", "vector"):
            path = args.out_dir / f"quench_{backend}_dt{dt:g}.csv"
            writer = bench.RecordWriter(path)
            records, fits = bench.cmd_quench(params, args.n, dt, t_final, backend, writer=writer)
            writer.close({"fits": bench.fits_to_dict(fits)})
            eps, wall = fits["epsilon"], fits["wall_ms"]
            print(f"{backend:>6} dt={dt:<5g} eps(t_f)={records[-1].epsilon:.3e} "
                  f"eps~t^{eps.m:.2f} time~t^{wall.m:.2f} "
                  f"chi_max={max(r.chi_max for r in records)}")


if __name__ == "__main__":
    main()
