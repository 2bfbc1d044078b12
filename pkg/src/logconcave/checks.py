"""Log-concavity certificates and Prekopa-Leindler / Brunn-Minkowski
verifiers on tensor grids, plus the closure operations they are tested on
(convolution, marginals, Gaussian smoothing).

All verifiers are pure and return a :class:`~logconcave.report.CheckReport`.
Margins of midpoint tests are measured in log-density units.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy.signal import convolve as _sig_convolve

from .expr import DiffConfig, Expr, hess
from .grid import (
    BoxDomain, GridDensity, GridFunction, _node_volumes, apply_along,
)
from .report import CheckReport, FAIL, INCONCLUSIVE, PASS

# ---------------------------------------------------------------------------
# Masks
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GridMask:
    """Boolean indicator over the nodes of a grid (a set ``A``).

    As a set it is the union of the closed grid cells whose corners are all
    marked; this is what :func:`mask_measure` integrates over.
    """

    domain: BoxDomain
    mask: np.ndarray

    def __post_init__(self):
        m = np.array(self.mask, dtype=bool)
        if m.ndim != self.domain.dim:
            raise ValueError("mask shape does not match the domain dimension")
        m.flags.writeable = False
        object.__setattr__(self, "mask", m)

    @property
    def resolution(self) -> tuple:
        return self.mask.shape

    @property
    def dim(self) -> int:
        return self.domain.dim

    def like(self) -> GridFunction:
        return GridFunction(self.domain, self.mask.astype(float))

    def to_density(self) -> GridDensity:
        return GridDensity(self.domain, self.mask.astype(float))

    @classmethod
    def from_boxes(cls, grid: GridFunction, boxes) -> "GridMask":
        """Mark nodes inside any of ``boxes`` (each a list of ``[lo, hi]`` per axis)."""
        P = grid.points()
        slack = 1e-9 * float(np.min(grid.spacing))
        m = np.zeros(grid.resolution, dtype=bool)
        for box in boxes:
            box = np.asarray(box, dtype=float).reshape(grid.dim, 2)
            m |= np.all((P >= box[:, 0] - slack) & (P <= box[:, 1] + slack), axis=-1)
        return cls(grid.domain, m)

    @classmethod
    def from_predicate(cls, grid: GridFunction, pred: Expr) -> "GridMask":
        """Mark nodes where ``pred >= 0``."""
        return cls(grid.domain, pred(grid.points()) >= 0)


def _geometry(obj):
    return obj.domain, tuple(obj.resolution)


def _check_same(*objs):
    g0 = _geometry(objs[0])
    for o in objs[1:]:
        if _geometry(o) != g0:
            raise ValueError("inputs must share the same grid geometry")


def mask_measure(rho: GridFunction, A: GridMask) -> float:
    """``rho(A)``: fourth-order cell integrals of ``rho`` summed over the
    cells of ``A``."""
    _check_same(rho, A)
    full = A.mask
    for axis in range(A.dim):
        n = full.shape[axis]
        full = np.take(full, range(n - 1), axis=axis) & np.take(full, range(1, n), axis=axis)
    cells = rho.cell_integrals()
    return float(np.sum(cells[full]))


# ---------------------------------------------------------------------------
# Midpoint log-concavity
# ---------------------------------------------------------------------------

def _logs(values: np.ndarray) -> np.ndarray:
    # subnormal values carry too few digits for a meaningful logarithm
    pos = values >= np.finfo(float).tiny
    with np.errstate(divide="ignore"):
        return np.where(pos, np.log(np.where(pos, values, 1.0)), -np.inf)


def _midpoint_scan(L: np.ndarray, pairs: int, seed: int):
    """Worst ``L(mid) - (L(x) + L(y)) / 2`` over axis-adjacent triples and
    random node pairs with an exact node midpoint.  Pairs with a zero
    endpoint are skipped."""
    worst = math.inf
    where = None
    count = 0
    shape = np.asarray(L.shape)
    for axis in range(L.ndim):
        n = L.shape[axis]
        a = np.take(L, range(0, n - 2), axis=axis)
        m = np.take(L, range(1, n - 1), axis=axis)
        b = np.take(L, range(2, n), axis=axis)
        ok = np.isfinite(a) & np.isfinite(b)
        count += int(ok.sum())
        if not ok.any():
            continue
        with np.errstate(invalid="ignore"):
            marg = np.where(ok, m - 0.5 * (a + b), np.inf)
        k = np.unravel_index(np.argmin(marg), marg.shape)
        if marg[k] < worst:
            worst = float(marg[k])
            mid = np.array(k)
            mid[axis] += 1
            lo, hi = mid.copy(), mid.copy()
            lo[axis] -= 1
            hi[axis] += 1
            where = (mid, lo, hi)
    if pairs > 0:
        rng = np.random.default_rng(seed)
        i = rng.integers(0, shape, size=(pairs, L.ndim))
        j = rng.integers(0, shape, size=(pairs, L.ndim))
        odd = (i + j) % 2 == 1
        j = np.where(odd, np.where(j < shape - 1, j + 1, j - 1), j)
        distinct = np.any(i != j, axis=1)
        i, j = i[distinct], j[distinct]
        mid = (i + j) // 2
        Li, Lj, Lm = L[tuple(i.T)], L[tuple(j.T)], L[tuple(mid.T)]
        ok = np.isfinite(Li) & np.isfinite(Lj)
        count += int(ok.sum())
        if ok.any():
            with np.errstate(invalid="ignore"):
                marg = np.where(ok, Lm - 0.5 * (Li + Lj), np.inf)
            k = int(np.argmin(marg))
            if marg[k] < worst:
                worst = float(marg[k])
                where = (mid[k], i[k], j[k])
    return worst, where, count


def check_logconcave(f: GridFunction, tol: float = 1e-6, pairs: int = 1000, seed: int = 0) -> CheckReport:
    """Midpoint test ``log f(mid) >= (log f(x) + log f(y)) / 2 - tol``.

    Covers every axis-adjacent node triple plus ``pairs`` random node pairs
    (the second node nudged by one cell where needed so that the midpoint
    is itself a node).  ``log 0 = -inf``; a pair with a zero endpoint is
    vacuous.
    """
    v = np.asarray(f.values)
    if np.any(v < 0):
        raise ValueError("log-concavity test needs a nonnegative grid")
    if not np.any(v > 0):
        return CheckReport.inconclusive(tol, note="density vanishes on the whole grid")
    worst, where, count = _midpoint_scan(_logs(v), pairs, seed)
    if where is None:
        return CheckReport(PASS, math.inf, tol, count, notes=["no pair with positive endpoints"])
    mid, x, y = where
    witness = {"point": f.node(mid), "endpoints": [f.node(x), f.node(y)]}
    rep = CheckReport.from_margin(worst, tol, count, witness)
    if rep.verdict == PASS:
        rep.witness = None
        rep.details["tightest_point"] = f.node(mid)
    return rep


# ---------------------------------------------------------------------------
# Super log-concavity
# ---------------------------------------------------------------------------

@dataclass
class SlcCertificate:
    """Claim that a measure is ``alpha``-super-log-concave."""

    alpha: float
    method: str
    margin: float
    valid: bool
    tolerance: float
    samples: int
    witness: list | None = None
    notes: list = field(default_factory=list)

    def to_report(self) -> CheckReport:
        rep = CheckReport.from_margin(self.margin, self.tolerance, self.samples,
                                      None if self.valid else {"point": self.witness},
                                      notes=list(self.notes))
        rep.details.update(alpha=self.alpha, method=self.method)
        return rep


def weighted_by_gaussian(rho: GridFunction, alpha: float) -> GridFunction:
    """``c * exp(alpha |x|^2 / 2) * rho`` on the same grid.

    Formed in log space and scaled to maximum 1, so wide boxes do not
    overflow; the constant ``c`` does not affect log-concavity.
    """
    P = rho.points()
    v = np.asarray(rho.values)
    pos = v >= np.finfo(float).tiny
    L = np.full(v.shape, -np.inf)
    L[pos] = np.log(v[pos]) + 0.5 * alpha * np.sum(P * P, axis=-1)[pos]
    if pos.any():
        L -= L[pos].max()
    return rho.replace(np.exp(L))


def check_slc(V, alpha: float, dom: BoxDomain | None = None, samples: int = 256,
              tol: float = 1e-6, seed: int = 0, cfg: DiffConfig | None = None,
              pairs: int = 1000) -> SlcCertificate:
    """Certify ``alpha``-super-log-concavity.

    For a potential expression ``V`` (density ``exp(-V)``) the margin is the
    smallest ``lambda_min(hess V) - alpha`` over ``samples`` seeded uniform
    points of ``dom`` plus its centre and corners.  For a grid density the
    midpoint test runs on ``exp(alpha |x|^2 / 2) * density``.
    """
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    if isinstance(V, GridFunction):
        rep = check_logconcave(weighted_by_gaussian(V, alpha), tol, pairs, seed)
        if rep.verdict == INCONCLUSIVE:
            return SlcCertificate(alpha, "weighted-midpoint", math.nan, False, tol, rep.samples,
                                  notes=rep.notes)
        return SlcCertificate(alpha, "weighted-midpoint", rep.worst_margin, rep.passed, tol, rep.samples,
                              witness=None if rep.witness is None else list(rep.witness["point"]))
    if dom is None:
        raise ValueError("a domain is required for expression potentials")
    rng = np.random.default_rng(seed)
    lo, hi = np.asarray(dom.lo), np.asarray(dom.hi)
    corners = np.array([[h if c else l for c, l, h in zip(bits, lo, hi)]
                        for bits in product((0, 1), repeat=dom.dim)])
    # pull corners inward so the difference stencil stays in the box
    inset = lo + 0.999 * (corners - lo) + 0.0005 * (hi - lo)
    P = np.vstack([lo + rng.random((samples, dom.dim)) * (hi - lo), (lo + hi) / 2, inset])
    H = hess(V, P, cfg)
    lam = np.linalg.eigvalsh(H)[:, 0]
    k = int(np.argmin(lam))
    margin = float(lam[k] - alpha)
    valid = margin >= -tol
    return SlcCertificate(alpha, "hessian-bound", margin, valid, tol, len(P),
                          witness=None if valid else P[k].tolist())


# ---------------------------------------------------------------------------
# Sup-convolution and Prekopa-Leindler
# ---------------------------------------------------------------------------

def _sup_sweep(node_fn: GridFunction, interp_fn: GridFunction, a: float, X: np.ndarray) -> np.ndarray:
    """``max_u node_fn(u)^a interp_fn((x - a u) / (1 - a))^(1 - a)`` over the
    nodes ``u`` of ``node_fn``, in log form (``-inf`` where nothing is found)."""
    b = 1 - a
    fu = np.asarray(node_fn.values).ravel()
    live = fu > 0
    U, logf = node_fn.points().reshape(-1, node_fn.dim)[live], np.log(fu[live])
    out = np.full(len(X), -np.inf)
    if not len(U):
        return out
    chunk = max(1, 2_000_000 // len(U))
    for start in range(0, len(X), chunk):
        x = X[start:start + chunk]
        gv = interp_fn.sample((x[:, None, :] - a * U[None, :, :]) / b)
        with np.errstate(divide="ignore"):
            val = a * logf[None, :] + b * np.where(gv > 0, np.log(np.where(gv > 0, gv, 1.0)), -np.inf)
        out[start:start + chunk] = val.max(axis=1)
    return out


def sup_convolution(f: GridFunction, g: GridFunction, s: float) -> GridDensity:
    """``k(x) = max f(u)^s g(v)^t`` over decompositions ``x = s u + t v``.

    Two sweeps are combined: ``u`` on the nodes with ``g(v)`` multilinearly
    interpolated, and ``v`` on the nodes with ``f(u)`` interpolated (zero off
    the grid).  With a single sweep the interpolated variable jumps by
    ``s/t`` cells per node and misses narrow supports when ``t`` is small.
    """
    if not 0 <= s <= 1:
        raise ValueError("s must lie in [0, 1]")
    _check_same(f, g)
    if s == 1:
        return GridDensity(f.domain, np.asarray(f.values))
    if s == 0:
        return GridDensity(g.domain, np.asarray(g.values))
    X = f.points().reshape(-1, f.dim)
    best = np.maximum(_sup_sweep(f, g, s, X), _sup_sweep(g, f, 1 - s, X))
    out = np.where(np.isfinite(best), np.exp(best), 0.0)
    return GridDensity(f.domain, out.reshape(f.resolution))


def _measure_of(rho: GridFunction, a) -> float:
    if isinstance(a, GridMask):
        return mask_measure(rho, a)
    _check_same(rho, a)
    return GridFunction(rho.domain, np.asarray(rho.values) * np.asarray(a.values)).integral()


def _lookup(obj, points, mode):
    grid = obj.like() if isinstance(obj, GridMask) else obj
    return grid.sample(points, mode=mode)


def _hypothesis_scan(a, b, c, s: float, pairs: int, seed: int, tol: float):
    """Spot-check ``a(s x + t y) >= b(x)^s c(y)^t`` on node pairs drawn from
    the supports of ``b`` and ``c``; ``a`` is read as the max over the
    enclosing cell's corners (grid-resolution slack)."""
    t = 1 - s
    gb = b.like() if isinstance(b, GridMask) else b
    gc = c.like() if isinstance(c, GridMask) else c
    Pb = gb.points()[np.asarray(gb.values) > 0]
    Pc = gc.points()[np.asarray(gc.values) > 0]
    if len(Pb) == 0 or len(Pc) == 0:
        return math.inf, None, 0
    rng = np.random.default_rng(seed)
    x = Pb[rng.integers(0, len(Pb), pairs)]
    y = Pc[rng.integers(0, len(Pc), pairs)]
    z = s * x + t * y
    lhs = _logs(_lookup(a, z, "upper"))
    rhs = s * _logs(gb.sample(x)) + t * _logs(gc.sample(y))
    with np.errstate(invalid="ignore"):
        marg = np.where(np.isfinite(rhs), lhs - rhs, np.inf)
    k = int(np.argmin(marg))
    return float(marg[k]), (x[k], y[k], z[k]), pairs


def verify_prekopa_leindler(rho: GridFunction, b, c, a="auto", s: float = 0.5,
                            tol: float = 1e-6, pairs: int = 2000, seed: int = 0) -> CheckReport:
    """Check ``rho(a) >= rho(b)^s rho(c)^t``.

    ``a="auto"`` uses the sup-convolution of ``b`` and ``c`` (the Minkowski
    combination for masks), which satisfies the hypothesis by
    construction.  A supplied ``a`` is first spot-checked against the
    hypothesis; a violation there is reported as a precondition failure.
    ``b``, ``c``, ``a`` may be grid densities or masks.
    """
    if not 0 <= s <= 1:
        raise ValueError("s must lie in [0, 1]")
    t = 1 - s
    notes = []
    if isinstance(a, str):
        if a != "auto":
            raise ValueError("a must be a grid, a mask or 'auto'")
        if isinstance(b, GridMask) and isinstance(c, GridMask):
            a = minkowski_combine(b, c, s)
        else:
            gb = b.to_density() if isinstance(b, GridMask) else b
            gc = c.to_density() if isinstance(c, GridMask) else c
            a = sup_convolution(gb, gc, s)
        notes.append("a = sup-convolution of b and c (hypothesis holds by construction)")
    else:
        hm, where, n = _hypothesis_scan(a, b, c, s, pairs, seed, tol)
        if hm < -tol:
            x, y, z = where
            rep = CheckReport(FAIL, hm, tol, n,
                              {"x": x, "y": y, "midpoint": z},
                              ["hypothesis a(sx+ty) >= b(x)^s c(y)^t violated"],
                              precondition_failed=True)
            return rep
        notes.append(f"hypothesis spot-checked on {n} pairs (worst log-margin {hm:.3g})")
    ra, rb, rc = _measure_of(rho, a), _measure_of(rho, b), _measure_of(rho, c)
    margin = ra - rb ** s * rc ** t
    rep = CheckReport.from_margin(margin, tol, 3, notes=notes,
                                  details={"rho_a": ra, "rho_b": rb, "rho_c": rc, "s": s})
    if rep.failed:
        rep.witness = _locate(rho)
    return rep


def _locate(rho: GridFunction) -> dict:
    """Where ``rho`` fails the pointwise midpoint test (localised witness)."""
    if np.all(np.asarray(rho.values) >= 0):
        lc = check_logconcave(rho, tol=0.0, pairs=4000, seed=0)
        if lc.witness is not None:
            return {"point": lc.witness["point"], "endpoints": lc.witness["endpoints"],
                    "log_margin": lc.worst_margin}
    return {"point": None}


# ---------------------------------------------------------------------------
# Minkowski combinations and Brunn-Minkowski
# ---------------------------------------------------------------------------

def _bbox(mask: np.ndarray):
    idx = np.argwhere(mask)
    lo, hi = idx.min(axis=0), idx.max(axis=0)
    box = np.zeros_like(mask)
    box[tuple(slice(a, b + 1) for a, b in zip(lo, hi))] = True
    return lo, hi, bool(np.array_equal(box, mask))


def minkowski_combine(A: GridMask, B: GridMask, s: float) -> GridMask:
    """Grid version of ``sA + tB``.

    Node ``k`` is marked when some ``s u + t v`` (``u`` in ``A``, ``v`` in
    ``B``, in index coordinates) lies within half a cell of ``k`` on every
    axis.  Boxes are combined axis by axis; other sets by a chunked sweep
    over node pairs.
    """
    if not 0 <= s <= 1:
        raise ValueError("s must lie in [0, 1]")
    _check_same(A, B)
    if s == 1:
        return A
    if s == 0:
        return B
    t = 1 - s
    out = np.zeros(A.resolution, dtype=bool)
    if not A.mask.any() or not B.mask.any():
        warnings.warn("Minkowski combination of an empty set is empty")
        return GridMask(A.domain, out)
    res = np.asarray(A.resolution)
    alo, ahi, abox = _bbox(A.mask)
    blo, bhi, bbox = _bbox(B.mask)
    eps = 1e-9
    if abox and bbox:
        lo = np.ceil(s * alo + t * blo - 0.5 - eps).astype(int)
        hi = np.floor(s * ahi + t * bhi + 0.5 + eps).astype(int)
        lo, hi = np.clip(lo, 0, res - 1), np.clip(hi, 0, res - 1)
        out[tuple(slice(a, b + 1) for a, b in zip(lo, hi))] = True
        return GridMask(A.domain, out)
    IA = np.argwhere(A.mask)
    IB = np.argwhere(B.mask)
    chunk = max(1, 1_000_000 // len(IB))
    for start in range(0, len(IA), chunk):
        P = (s * IA[start:start + chunk, None, :] + t * IB[None, :, :]).reshape(-1, A.dim)
        P = np.unique(np.round(P, 9), axis=0)
        kl = np.ceil(P - 0.5 - eps).astype(int)
        kh = np.floor(P + 0.5 + eps).astype(int)
        for pick in product((0, 1), repeat=A.dim):
            K = np.where(np.asarray(pick) == 1, kh, kl)
            ok = np.all((K >= 0) & (K < res), axis=1)
            out[tuple(K[ok].T)] = True
    return GridMask(A.domain, out)


def verify_brunn_minkowski(rho: GridFunction, A: GridMask, B: GridMask, s: float = 0.5,
                           tol: float = 1e-6) -> CheckReport:
    """Check ``rho(sA + tB) >= rho(A)^s rho(B)^t``.

    The grid combination can enlarge ``sA + tB`` by up to one cell; the
    report carries that geometric uncertainty as ``cell_slack``.
    """
    t = 1 - s
    C = minkowski_combine(A, B, s)
    rA, rB, rC = mask_measure(rho, A), mask_measure(rho, B), mask_measure(rho, C)
    margin = rC - rA ** s * rB ** t
    rep = CheckReport.from_margin(margin, tol, 3, details={
        "rho_A": rA, "rho_B": rB, "rho_sA_tB": rC, "s": s,
        "cell_slack": np.asarray(rho.spacing).tolist(),
    })
    if rep.failed:
        rep.witness = _locate(rho)
    return rep


# ---------------------------------------------------------------------------
# Convolution, marginals, smoothing
# ---------------------------------------------------------------------------

def _full_convolution(f: GridFunction, g: GridFunction) -> GridDensity:
    if not np.allclose(f.spacing, g.spacing, rtol=1e-12, atol=0):
        raise ValueError("convolution needs equal grid spacing")
    h = f.spacing
    gw = np.asarray(g.values) * _node_volumes(g.resolution, h)
    full = _sig_convolve(np.asarray(f.values), gw, mode="full", method="direct")
    full = np.maximum(full, 0.0)
    lo = np.asarray(f.domain.lo) + np.asarray(g.domain.lo)
    hi = lo + (np.asarray(full.shape) - 1) * h
    return GridDensity(BoxDomain(tuple(lo), tuple(hi)), full)


def convolve(f: GridFunction, g: GridFunction, c: float = 1.0,
             out_domain: BoxDomain | None = None, out_res=None) -> GridDensity:
    """``x -> integral f(c x - y) g(y) dy`` on ``out_domain`` (default: the
    box of ``f``).

    The discrete convolution of the node sequences (trapezoid weights, direct
    summation, so tails keep their relative accuracy) is resampled at
    ``c x`` by interpolation in log-values, which keeps sampled
    log-concave functions log-concave.
    """
    full = _full_convolution(f, g)
    dom = out_domain or f.domain
    res = tuple(np.broadcast_to(out_res if out_res is not None else f.resolution, (dom.dim,)))
    axes = [np.linspace(a, b, n) for a, b, n in zip(dom.lo, dom.hi, res)]
    P = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    vals = full.sample(c * P, mode="log")
    out = GridDensity(dom, vals)
    total = full.mass
    kept = out.mass * abs(c) ** dom.dim if c != 0 else total
    clipped = max(0.0, total - kept) / total if total > 0 else 0.0
    out.meta["clipped_mass"] = clipped
    if clipped > 1e-3:
        warnings.warn(f"convolution output box clips {clipped:.3g} of the mass")
    return out


def marginalize(f: GridFunction, keep, rule: str = "trapezoid") -> GridFunction:
    """Integrate out every axis not in ``keep`` (0-based).

    The default trapezoid rule is exact for piecewise-linear kinks at nodes
    and spectrally accurate for smooth integrands that decay at the box
    edges.  ``rule="simpson"`` is available, but its alternating weights
    make the marginal of a kinked or indicator-like density oscillate
    between even and odd nodes, which breaks the midpoint test.
    """
    keep = sorted(set(int(k) for k in np.atleast_1d(keep)))
    if not keep or len(keep) >= f.dim or min(keep) < 0 or max(keep) >= f.dim:
        raise ValueError("keep must be a nonempty proper subset of the axes")
    if rule == "trapezoid":
        W = f.trapezoid_weights()
    elif rule == "simpson":
        W = f.simpson_weights()
    else:
        raise ValueError("rule must be 'trapezoid' or 'simpson'")
    mats = [None if k in keep else W[k][None, :] for k in range(f.dim)]
    vals = apply_along(np.asarray(f.values), mats)
    vals = vals.reshape([f.resolution[k] for k in keep])
    dom = BoxDomain(tuple(f.domain.lo[k] for k in keep), tuple(f.domain.hi[k] for k in keep))
    return type(f)(dom, vals)


def gaussian_kernel(h, sigma: float) -> GridDensity:
    """Centred Gaussian of variance ``sigma`` sampled with spacing ``h``,
    normalised to unit discrete (trapezoid) mass."""
    h = np.atleast_1d(np.asarray(h, dtype=float))
    K = [max(4, int(math.ceil(9 * math.sqrt(sigma) / hk))) for hk in h]
    dom = BoxDomain(tuple(-k * hk for k, hk in zip(K, h)), tuple(k * hk for k, hk in zip(K, h)))
    axes = [np.arange(-k, k + 1) * hk for k, hk in zip(K, h)]
    P = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    vals = np.exp(-np.sum(P * P, axis=-1) / (2 * sigma))
    vals = vals / np.sum(vals * _node_volumes(vals.shape, h))
    return GridDensity(dom, vals)


def gaussian_smooth(rho: GridFunction, sigma: float) -> GridDensity:
    """Convolve with the normalised Gaussian kernel of variance ``sigma``.

    Normalising the kernel only rescales the density, which leaves every
    super-log-concavity statement unchanged.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    kern = gaussian_kernel(rho.spacing, sigma)
    # centre the kernel box on the origin exactly so the output nodes align
    return convolve(rho, kern)


@dataclass(frozen=True)
class DeltaBound:
    """Admissible super-log-concavity after Gaussian smoothing.

    Every ``delta < delta_max`` is certified (the bound itself is open);
    numerically ``certified_max = delta_max * (1 - 1e-9)``.
    """

    alpha: float
    sigma: float
    delta_max: float
    strict: bool = True

    @property
    def certified_max(self) -> float:
        return self.delta_max * (1 - 1e-9)

    def admits(self, delta: float) -> bool:
        return 0 < delta <= self.certified_max


def slc_delta_bound(alpha: float, sigma: float) -> DeltaBound:
    """``rho * p_sigma`` is ``delta``-s.l.c. for every ``delta`` with
    ``1/delta - 1/alpha > sigma``, i.e. ``delta < alpha / (1 + alpha sigma)``."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    return DeltaBound(alpha, sigma, alpha / (1 + alpha * sigma))


def box_average(f: GridFunction, z, eps: float) -> float:
    """Mean of ``f`` over the cube ``z + eps [-1/2, 1/2]^d``."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if eps < 2 * float(np.max(f.spacing)) * (1 - 1e-12):
        raise ValueError("eps must span at least two grid cells")
    lo, hi = z - eps / 2, z + eps / 2
    if not (np.all(lo >= np.asarray(f.domain.lo) - 1e-12) and np.all(hi <= np.asarray(f.domain.hi) + 1e-12)):
        raise ValueError("averaging cube leaves the grid domain")
    return f.integrate_box(lo, hi) / eps ** f.dim
