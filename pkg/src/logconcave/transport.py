"""One-dimensional transport by monotone rearrangement, contraction
estimates, the transport Jacobian identity and a quadrature log-Sobolev
verifier."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicHermiteSpline, CubicSpline

from .checks import check_slc
from .expr import DiffConfig, Expr, grad
from .gaussian import ShiftMap, lambda_jacobian, _func
from .grid import (
    BoxDomain, GridDensity, GridFunction, LEBESGUE, MeasureSpec, discretize, grid_from_function,
)
from .report import CheckReport, FAIL

# ---------------------------------------------------------------------------
# Distribution functions
# ---------------------------------------------------------------------------


def _limited_slopes(x, F, dF):
    """Fritsch-Carlson limiting so the Hermite interpolant stays monotone."""
    d = np.array(dF, dtype=float)
    h = np.diff(x)
    delta = np.diff(F) / h
    for k in range(len(h)):
        if delta[k] == 0:
            d[k] = d[k + 1] = 0.0
            continue
        a, b = d[k] / delta[k], d[k + 1] / delta[k]
        r = a * a + b * b
        if r > 9:
            tau = 3 / math.sqrt(r)
            d[k], d[k + 1] = tau * a * delta[k], tau * b * delta[k]
    return d


@dataclass(frozen=True, eq=False)
class Cdf1D:
    """Normalised distribution function on a strictly increasing grid.

    ``F`` holds node values; between nodes the CDF is the monotone cubic
    Hermite interpolant whose slopes are the (normalised) density.
    """

    x: np.ndarray
    F: np.ndarray
    density: np.ndarray

    def __post_init__(self):
        x, F = np.asarray(self.x, float), np.asarray(self.F, float)
        if np.any(np.diff(x) <= 0):
            raise ValueError("x must be strictly increasing")
        if np.any(np.diff(F) < 0):
            raise ValueError("F must be nondecreasing")
        if abs(F[0]) > 1e-9 or abs(F[-1] - 1) > 1e-9:
            raise ValueError("F must run from 0 to 1")
        slopes = _limited_slopes(x, F, np.asarray(self.density, float))
        object.__setattr__(self, "_spline", CubicHermiteSpline(x, F, slopes, extrapolate=False))

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = self._spline(np.clip(t, self.x[0], self.x[-1]))
        out = np.where(t <= self.x[0], 0.0, np.where(t >= self.x[-1], 1.0, out))
        return np.clip(out, 0.0, 1.0)


def cdf(rho: GridFunction) -> Cdf1D:
    """Cumulative integrals of a 1D grid density (fourth-order cell rule),
    renormalised to end at 1."""
    if rho.dim != 1:
        raise ValueError("cdf needs a one-dimensional density")
    v = np.asarray(rho.values)
    if np.any(v < 0):
        raise ValueError("density takes negative values")
    cells = np.maximum(rho.cell_integrals(), 0.0)
    total = float(cells.sum())
    if not total > 0:
        raise ValueError("density has zero total mass")
    F = np.minimum(np.concatenate([[0.0], np.cumsum(cells)]) / total, 1.0)
    F[-1] = 1.0
    return Cdf1D(rho.axes[0], F, v / total)


def quantile(F: Cdf1D, p) -> np.ndarray | float:
    """Inverse of ``F``.

    The bracketing node interval comes from the node values; inside it the
    monotone cubic is inverted by bisection.  A flat run of ``F`` at level
    ``p`` (equal to ``p`` up to a relative ``1e-12``, so that rounding in
    the cumulative sums does not hide it) maps to its midpoint.
    """
    P = np.asarray(p, dtype=float)
    if np.any((P <= 0) | (P >= 1)):
        raise ValueError("p must lie in (0, 1)")
    flat = P.ravel()
    x, Fx = F.x, F.F
    tol = 1e-12 * np.minimum(flat, 1 - flat)
    lo_i = np.searchsorted(Fx, flat - tol, side="left")     # first F >= p - tol
    hi_i = np.searchsorted(Fx, flat + tol, side="right") - 1  # last F <= p + tol
    out = np.empty(len(flat))
    on_run = hi_i > lo_i
    out[on_run] = 0.5 * (x[lo_i[on_run]] + x[hi_i[on_run]])
    rest = ~on_run
    k = np.clip(np.searchsorted(Fx, flat[rest], side="left") - 1, 0, len(x) - 2)
    a, b = x[k].copy(), x[k + 1].copy()
    target = flat[rest]
    for _ in range(60):
        mid = 0.5 * (a + b)
        below = F._spline(mid) < target
        a = np.where(below, mid, a)
        b = np.where(below, b, mid)
    out[rest] = 0.5 * (a + b)
    return float(out[0]) if P.ndim == 0 else out.reshape(P.shape)


# ---------------------------------------------------------------------------
# Monotone rearrangement
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TransportMap1D:
    """Monotone map sampled on the source grid.

    ``dT`` are central differences of ``T``; ``p`` the source CDF at the
    nodes (used for quantile windows).
    """

    x: np.ndarray
    T: np.ndarray
    dT: np.ndarray
    p: np.ndarray
    notes: list = field(default_factory=list)
    pushforward_error: float = math.nan

    def __post_init__(self):
        if np.any(np.diff(self.T) < 0):
            raise ValueError("transport map must be nondecreasing")

    def window(self, p_lo: float = 0.05, p_hi: float = 0.95) -> np.ndarray:
        return (self.p >= p_lo) & (self.p <= p_hi)

    def __call__(self, t) -> np.ndarray:
        return self.spline()(np.asarray(t, dtype=float))

    def spline(self) -> CubicSpline:
        return CubicSpline(self.x, self.T)

    def as_shift(self, cfg: DiffConfig = DiffConfig()) -> ShiftMap:
        """``U = I + u`` with ``u = T - I`` (cubic-spline interpolant)."""
        sp = self.spline()
        return ShiftMap(lambda X: sp(X) - X, 1, cfg, name="T - I")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "T"])
        for a, b in zip(self.x, self.T):
            w.writerow([repr(float(a)), repr(float(b))])
        return buf.getvalue()


def _disconnected(v: np.ndarray) -> bool:
    pos = np.flatnonzero(v > 0)
    return len(pos) > 0 and bool(np.any(v[pos[0]:pos[-1] + 1] <= 0))


def monge_map(source: GridFunction, target: GridFunction, p_floor: float = 1e-14) -> TransportMap1D:
    """``T = F_target^{-1} o F_source`` on the source nodes.

    Source nodes whose CDF level lies outside ``[p_floor, 1 - p_floor]``
    are clamped to that range.  The pushforward error
    ``sup |F_target(T(x)) - F_source(x)|`` over the 98% window is recorded.
    """
    Fs, Ft = cdf(source), cdf(target)
    notes = []
    if _disconnected(np.asarray(target.values)):
        notes.append("target support is disconnected: quantile ambiguous on flat runs (midpoint used)")
    p = Fs.F
    T = quantile(Ft, np.clip(p, p_floor, 1 - p_floor))
    T = np.maximum.accumulate(T)
    x = Fs.x
    dT = np.gradient(T, x, edge_order=2)
    inner = (p >= 0.01) & (p <= 0.99)
    err = float(np.max(np.abs(Ft(T[inner]) - p[inner]))) if inner.any() else math.nan
    return TransportMap1D(x, T, np.maximum(dT, 0.0), p, notes, err)


def lipschitz_estimate(T: TransportMap1D, quantile_window=(0.05, 0.95)) -> float:
    """Largest forward-difference slope of ``T`` between consecutive nodes
    inside the quantile window."""
    p_lo, p_hi = quantile_window
    if not 0 < p_lo < p_hi < 1:
        raise ValueError("window must satisfy 0 < p_lo < p_hi < 1")
    idx = np.flatnonzero(T.window(p_lo, p_hi))
    if len(idx) < 10:
        raise ValueError("quantile window holds fewer than 10 grid points")
    idx = idx[np.concatenate([np.diff(idx) == 1, [False]])]
    slopes = (T.T[idx + 1] - T.T[idx]) / (T.x[idx + 1] - T.x[idx])
    return float(np.max(slopes))


def gaussian_transport(L, dom: BoxDomain = BoxDomain((-8.0,), (8.0,)), res: int = 1601) -> TransportMap1D:
    """Monotone map from the standard Gaussian onto ``L d mu`` (``L`` need
    not be normalised)."""
    phi = lambda P: np.exp(-0.5 * P[..., 0] ** 2) / math.sqrt(2 * math.pi)
    src = grid_from_function(phi, dom, res)
    Lf = _func(L)
    tgt = grid_from_function(lambda P: np.asarray(Lf(P), dtype=float) * phi(P), dom, res)
    return monge_map(src, tgt)


def relative_density_normalizer(L, dom: BoxDomain = BoxDomain((-8.0,), (8.0,)), res: int = 1601) -> float:
    """``E_mu[L]`` by grid quadrature."""
    Lf = _func(L)
    g = grid_from_function(lambda P: np.asarray(Lf(P), dtype=float)
                           * np.exp(-0.5 * P[..., 0] ** 2) / math.sqrt(2 * math.pi), dom, res)
    return g.integral()


def transport_jacobian_identity(L, T: TransportMap1D, tol: float = 1e-4, window: float = 0.9,
                                normalize: bool = True) -> CheckReport:
    """``sup |L(T(x)) Lambda(T)(x) - 1|`` over the central quantile window.

    ``Lambda(T)`` comes from :func:`lambda_jacobian` with ``u = T - I``; in
    one dimension it equals ``T' exp(-(T^2 - x^2) / 2)``.  With
    ``normalize`` the relative density is first divided by ``E_mu[L]``.
    """
    Lf = _func(L)
    z = relative_density_normalizer(L) if normalize else 1.0
    lo = (1 - window) / 2
    mask = T.window(lo, 1 - lo)
    x = T.x[mask]
    ev = lambda_jacobian(T.as_shift(), x[:, None])
    lam = ev.Lambda
    if np.any(lam <= 0):
        k = int(np.argmax(lam <= 0))
        return CheckReport(FAIL, -math.inf, tol, len(x), {"point": [x[k]]},
                           ["Lambda(T) is not positive in the window"], precondition_failed=True)
    prod = np.asarray(Lf(T.T[mask][:, None]), dtype=float) / z * lam
    dev = np.abs(prod - 1)
    k = int(np.argmax(dev))
    rep = CheckReport.from_margin(-dev[k], tol, len(x), {"point": [x[k]]}, details={
        "window": window, "normalizer": z, "sup_deviation": float(dev[k]),
        "trimmed_points": int((~mask).sum())})
    if rep.passed:
        rep.witness = None
    return rep


# ---------------------------------------------------------------------------
# Logarithmic Sobolev inequality
# ---------------------------------------------------------------------------

def _entropy_integrand(g2: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(g2 > 0, g2 * np.log(np.where(g2 > 0, g2, 1.0)), 0.0)


def lsi_sides(rho: GridDensity, f: Expr, alpha: float, cfg: DiffConfig | None = None) -> dict:
    """Both sides of ``rho(f^2 log f^2) <= (2 / alpha) rho(|grad f|^2)``
    after normalising ``rho`` to a probability and ``f`` to ``rho(f^2) = 1``."""
    P = rho.points()
    w = np.asarray(rho.values) / rho.mass
    fv = np.broadcast_to(np.asarray(f(P), dtype=float), w.shape)
    g = np.broadcast_to(grad(f, P, cfg), P.shape)
    norm2 = GridFunction(rho.domain, fv * fv * w).integral()
    if not norm2 > 0:
        raise ValueError("f vanishes on the support of rho")
    g2 = fv * fv / norm2
    lhs = GridFunction(rho.domain, _entropy_integrand(g2) * w).integral()
    energy = GridFunction(rho.domain, np.sum(g * g, axis=-1) / norm2 * w).integral()
    return {"lhs": lhs, "rhs": 2 / alpha * energy, "constant": 2 / alpha, "energy": energy, "norm2": norm2}


def verify_lsi(rho: MeasureSpec | GridDensity, fs, alpha: float | None = None, dom: BoxDomain | None = None,
               res=801, tol: float = 1e-6, certify: bool = True, seed: int = 0) -> list:
    """One report per test function: ``margin = RHS - LHS``.

    ``alpha`` defaults to the measure's declared value.  With ``certify``
    the measure is first certified ``alpha``-s.l.c. (Hessian bound for
    Lebesgue potentials, weighted midpoint test otherwise); a failed
    certificate marks every report as a precondition failure.
    """
    if isinstance(rho, MeasureSpec):
        alpha = rho.declared_alpha if alpha is None else alpha
        if dom is None:
            raise ValueError("a domain is required to discretise the measure")
        grid = discretize(rho, dom, res)
    else:
        grid = rho
    if alpha is None or not alpha > 0:
        raise ValueError("verify_lsi needs alpha > 0")
    cert = None
    if certify:
        if isinstance(rho, MeasureSpec) and isinstance(rho.source, Expr) and rho.kind == "potential" \
                and rho.reference == LEBESGUE:
            cert = check_slc(rho.source, alpha, grid.domain, seed=seed)
        else:
            cert = check_slc(grid, alpha, seed=seed)
    reports = []
    for f in fs:
        if cert is not None and not cert.valid:
            rep = CheckReport(FAIL, cert.margin, tol, cert.samples, {"point": cert.witness},
                              [f"measure is not certified {alpha}-s.l.c. ({cert.method})"],
                              precondition_failed=True)
            reports.append(rep)
            continue
        sides = lsi_sides(grid, f, alpha)
        rep = CheckReport.from_margin(sides["rhs"] - sides["lhs"], tol, int(np.prod(grid.resolution)),
                                      details={**sides, "f": getattr(f, "text", str(f)), "alpha": alpha})
        if cert is not None:
            rep.details["certificate"] = cert.method
        if rep.failed:
            rep.witness = {"f": getattr(f, "text", str(f))}
        reports.append(rep)
    return reports
