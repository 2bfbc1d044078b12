"""Lipschitz constants of 1D Brenier maps from N(0, 1/alpha) onto
log-concave perturbations q * N(0, 1/alpha).

    python scripts/caffarelli_table.py
"""
import numpy as np

from logconcave.grid import BoxDomain, GridDensity, grid_from_function
from logconcave.transport import lipschitz_estimate, monge_map

LINE = BoxDomain((-8.0,), (8.0,))
TARGETS = [
    (1.0, "exp(-x^4)", lambda x: np.exp(-x ** 4)),
    (1.0, "exp(x)", lambda x: np.exp(x)),
    (2.0, "1[-0.5, 1.5]", lambda x: ((x >= -0.5) & (x <= 1.5)).astype(float)),
    (0.5, "exp(-|x-1|)", lambda x: np.exp(-np.abs(x - 1))),
    (4.0, "exp(-sqrt(1+x^2) - 0.3x)", lambda x: np.exp(-np.sqrt(1 + x * x) - 0.3 * x)),
    (1.0, "1 (identity)", lambda x: np.ones_like(x)),
]


def _grid(f, res=1601):
    return grid_from_function(lambda P: f(P[..., 0]), LINE, res)


def main():
    print(f"{'alpha':>6}  {'q':<26} {'Lip(T) 5-95%':>13} {'Lip(T) 1-99%':>13} {'push err':>9}")
    for alpha, name, q in TARGETS:
        src = _grid(lambda x: np.exp(-alpha * x * x / 2))
        tgt = GridDensity(LINE, np.asarray(_grid(q).values) * np.asarray(src.values))
        T = monge_map(src, tgt)
        print(f"{alpha:6.2f}  {name:<26} {lipschitz_estimate(T, (0.05, 0.95)):13.5f} "
              f"{lipschitz_estimate(T, (0.01, 0.99)):13.5f} {T.pushforward_error:9.1e}")


if __name__ == "__main__":
    main()
