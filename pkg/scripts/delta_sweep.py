"""Sweep the super-log-concavity parameter of a smoothed Gaussian.

For rho = N(0, 1/alpha) smoothed by a Gaussian of variance sigma, the
admissible parameter is delta_max = alpha / (1 + alpha sigma).  The script
prints, for a grid of delta / delta_max ratios, the certified verdict of the
bound next to the numeric weighted-midpoint margin.

    python scripts/delta_sweep.py --alpha 1 --sigma 1
"""
import argparse

import numpy as np

from logconcave.checks import check_slc, gaussian_smooth, slc_delta_bound
from logconcave.grid import BoxDomain, grid_from_function


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--alpha", type=float, default=1.0)
    ap.add_argument("--sigma", type=float, default=1.0)
    ap.add_argument("--half-width", type=float, default=20.0)
    ap.add_argument("--res", type=int, default=801)
    args = ap.parse_args()

    a, s = args.alpha, args.sigma
    dom = BoxDomain((-args.half_width,), (args.half_width,))
    rho = grid_from_function(lambda P: np.exp(-a * P[..., 0] ** 2 / 2), dom, args.res)
    smoothed = gaussian_smooth(rho, s) if s > 0 else rho
    bound = slc_delta_bound(a, s)
    print(f"alpha={a} sigma={s} delta_max={bound.delta_max:.6f}")
    print(f"{'ratio':>7} {'delta':>10} {'certified':>10} {'numeric':>8} {'margin':>11}")
    for ratio in (0.5, 0.8, 0.9, 0.95, 0.99, 1.0, 1.01, 1.05, 1.1, 1.5):
        d = ratio * bound.delta_max
        cert = check_slc(smoothed, d)
        print(f"{ratio:7.2f} {d:10.6f} {str(bound.admits(d)):>10} {str(cert.valid):>8} {cert.margin:11.3e}")


if __name__ == "__main__":
    main()
