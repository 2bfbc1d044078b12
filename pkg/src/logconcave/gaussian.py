"""Finite-dimensional Gaussian calculus.

The standard Gaussian on R^d (d <= 4) stands in for an abstract Wiener
space whose Cameron-Martin space is R^d with the Euclidean inner product.
Expectations use tensor Gauss-Hermite quadrature.  Shifts ``U = I + u`` are
vector fields; their Gaussian Jacobian is

    Lambda(U) = det2(I + grad u) * exp(-delta u - |u|^2 / 2),

with ``det2(I + A) = det(I + A) exp(-tr A)`` and the divergence
``delta u(x) = <u(x), x> - tr grad u(x)``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from .checks import sup_convolution, mask_measure, GridMask, _logs
from .expr import DiffConfig, DomainError, Expr, parse, vector_fd
from .grid import MAX_DIM, BoxDomain, GridDensity, GridFunction, apply_along, trapezoid_weights
from .report import CheckReport, FAIL

# ---------------------------------------------------------------------------
# Gaussian space
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianSpace:
    """Standard Gaussian on R^dim with an ``order``-point Gauss-Hermite rule
    per axis (exact for polynomials of degree ``2 * order - 1``)."""

    dim: int = 1
    order: int = 64

    def __post_init__(self):
        if not 1 <= self.dim <= MAX_DIM:
            raise ValueError(f"dimension must be between 1 and {MAX_DIM}")
        if self.order < 2:
            raise ValueError("quadrature order must be >= 2")
        x, w = self.rule
        for k, exact in ((0, 1.0), (2, 1.0), (4, 3.0)):
            if 2 * self.order - 1 >= k and abs(np.sum(w * x ** k) - exact) > 1e-10 * exact:
                raise ValueError(f"Gauss-Hermite rule fails moment {k}")

    @cached_property
    def rule(self) -> tuple:
        """1D nodes and probability weights."""
        x, w = hermegauss(self.order)
        return x, w / math.sqrt(2 * math.pi)

    @cached_property
    def nodes(self) -> np.ndarray:
        x, _ = self.rule
        return np.stack(np.meshgrid(*([x] * self.dim), indexing="ij"), axis=-1).reshape(-1, self.dim)

    @cached_property
    def weights(self) -> np.ndarray:
        _, w = self.rule
        W = w
        for _ in range(self.dim - 1):
            W = np.multiply.outer(W, w)
        return W.ravel()

    @property
    def hull(self) -> float:
        """Largest node coordinate."""
        return float(np.max(np.abs(self.rule[0])))

    def expect(self, f: Callable) -> float:
        """``E[f]`` for a vectorised ``f: (..., d) -> (...)``."""
        return float(np.dot(self.weights, np.asarray(f(self.nodes), dtype=float)))

    def sample(self, n: int, seed: int) -> np.ndarray:
        return np.random.default_rng(seed).standard_normal((n, self.dim))


def gaussian_density(P) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    d = P.shape[-1]
    return np.exp(-0.5 * np.sum(P * P, axis=-1)) / (2 * np.pi) ** (d / 2)


def _func(f, dim: int | None = None) -> Callable:
    """Vectorised callable view of an Expr, grid or callable."""
    if isinstance(f, Expr):
        return lambda X: f(X)
    if isinstance(f, GridFunction):
        return lambda X: f.sample(X, mode="linear")
    if isinstance(f, GridMask):
        g = f.like()
        return lambda X: g.sample(X, mode="linear")
    if isinstance(f, (int, float)):
        c = float(f)
        return lambda X: np.full(np.asarray(X).shape[:-1], c)
    if callable(f):
        return f
    raise TypeError(f"cannot evaluate object of type {type(f).__name__}")


def _dim_of(f, default: int | None = None) -> int:
    for obj in (f,):
        if isinstance(obj, (Expr, GridFunction, GridMask)):
            return obj.dim
    if default is None:
        raise ValueError("dimension cannot be inferred; pass a GaussianSpace")
    return default


def _grid_points(dom: BoxDomain, res) -> tuple:
    res = tuple(int(n) for n in np.broadcast_to(res, (dom.dim,)))
    axes = [np.linspace(a, b, n) for a, b, n in zip(dom.lo, dom.hi, res)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1), res


# ---------------------------------------------------------------------------
# Shifts and Jacobians
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ShiftMap:
    """Vector field ``u`` of a shift ``U = I + u``.

    ``field`` maps ``(..., d)`` to ``(..., d)``.  ``exprs`` keeps the
    component expressions when the shift came from text.
    """

    field: Callable
    dim: int
    cfg: DiffConfig = DiffConfig()
    exprs: tuple = ()
    name: str = ""

    def __call__(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return np.broadcast_to(self.field(X), X.shape).astype(float)

    def jacobian(self, X) -> np.ndarray:
        """``J[..., i, j] = d u_i / d x_j`` by central differences."""
        X = np.asarray(X, dtype=float)
        rows = [vector_fd(lambda Y, i=i: self(Y)[..., i], X, self.cfg) for i in range(self.dim)]
        return np.stack(rows, axis=-2)

    @classmethod
    def from_exprs(cls, comps: Sequence, dim: int | None = None, cfg: DiffConfig = DiffConfig()) -> "ShiftMap":
        dim = dim or len(comps)
        exprs = tuple(c if isinstance(c, Expr) else parse(str(c), dim) for c in comps)
        if len(exprs) != dim:
            raise ValueError(f"a shift on R^{dim} needs {dim} components, got {len(exprs)}")

        def u(X):
            return np.stack([np.broadcast_to(e(X), X.shape[:-1]) for e in exprs], axis=-1)
        return cls(u, dim, cfg, exprs, ", ".join(e.text for e in exprs))

    @classmethod
    def gradient(cls, phi: Expr, cfg: DiffConfig = DiffConfig()) -> "ShiftMap":
        """``u = grad phi`` so that ``U = I + grad phi``."""
        return cls(lambda X: vector_fd(phi, X, cfg), phi.dim, cfg, (), f"grad({phi.text})")

    @classmethod
    def linear(cls, M) -> "ShiftMap":
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return cls(lambda X: X @ M.T, M.shape[0], name=f"linear({M.tolist()})")

    @classmethod
    def constant(cls, h) -> "ShiftMap":
        h = np.atleast_1d(np.asarray(h, dtype=float))
        return cls(lambda X: np.broadcast_to(h, X.shape), len(h), name=f"constant({h.tolist()})")

    @classmethod
    def zero(cls, dim: int) -> "ShiftMap":
        return cls(lambda X: np.zeros(X.shape), dim, name="zero")

    @staticmethod
    def combine(a: float, U1: "ShiftMap", U2: "ShiftMap") -> "ShiftMap":
        """Shift part of ``a U1 + (1 - a) U2``."""
        if U1.dim != U2.dim:
            raise ValueError("shifts must have the same dimension")
        b = 1 - a
        return ShiftMap(lambda X: a * U1(X) + b * U2(X), U1.dim, U1.cfg,
                        name=f"{a}*({U1.name}) + {b}*({U2.name})")


def det2(A) -> np.ndarray | float:
    """Carleman-Fredholm determinant ``det(I + A) exp(-tr A)`` (batched)."""
    A = np.asarray(A, dtype=float)
    d = A.shape[-1]
    out = np.linalg.det(np.eye(d) + A) * np.exp(-np.trace(A, axis1=-2, axis2=-1))
    return float(out) if out.ndim == 0 else out


def divergence(U: ShiftMap, X, J: np.ndarray | None = None) -> np.ndarray:
    """Gaussian divergence ``<u(x), x> - tr grad u(x)``."""
    X = np.asarray(X, dtype=float)
    if J is None:
        J = U.jacobian(X)
    return np.sum(U(X) * X, axis=-1) - np.trace(J, axis1=-2, axis2=-1)


@dataclass
class JacobianEval:
    """All factors of ``Lambda(U)`` at a batch of points."""

    point: np.ndarray
    Lambda: np.ndarray
    det2: np.ndarray
    divergence: np.ndarray
    half_norm_sq: np.ndarray


def lambda_jacobian(U: ShiftMap, X) -> JacobianEval:
    X = np.asarray(X, dtype=float)
    if X.ndim == 0:
        X = X.reshape(1, 1)
    elif U.dim == 1 and X.shape[-1] != 1:
        X = X[..., None]
    elif X.ndim == 1:
        X = X[None, :]
    J = U.jacobian(X)
    u = U(X)
    d2 = np.asarray(det2(J))
    div = np.sum(u * X, axis=-1) - np.trace(J, axis1=-2, axis2=-1)
    half = 0.5 * np.sum(u * u, axis=-1)
    return JacobianEval(X, d2 * np.exp(-div - half), d2, div, half)


def jacobian_trace_csv(ev: JacobianEval) -> str:
    """CSV columns ``x1..xd, Lambda, det2, divergence, half_norm_sq``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    d = ev.point.shape[-1]
    w.writerow([f"x{i + 1}" for i in range(d)] + ["Lambda", "det2", "divergence", "half_norm_sq"])
    P = ev.point.reshape(-1, d)
    for row in zip(P, ev.Lambda.ravel(), ev.det2.ravel(), ev.divergence.ravel(), ev.half_norm_sq.ravel()):
        w.writerow([repr(float(v)) for v in row[0]] + [repr(float(v)) for v in row[1:]])
    return buf.getvalue()


def _directions(dim: int, n: int, rng) -> np.ndarray:
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    D = rng.standard_normal((n, dim))
    D = np.vstack([np.eye(dim), -np.eye(dim), D])
    return D / np.linalg.norm(D, axis=1, keepdims=True)


def check_monotone(U: ShiftMap, sample_w: int = 64, sample_h: int = 16, tol: float = 1e-8,
                   seed: int = 0, radii: Sequence[float] = (1e-2, 0.1, 0.5, 1.0, 2.0, 4.0)) -> CheckReport:
    """Monotonicity of ``U = I + u`` in increment form.

    For Gaussian ``w`` and ``h`` on a radius/direction grid, checks
    ``<h + u(w + h) - u(w), h> >= 0``; the reported margin is that form
    divided by ``|h|^2``, so ``u = c x`` gives ``1 + c`` everywhere.
    """
    if sample_w < 1 or sample_h < 1:
        raise ValueError("sample counts must be >= 1")
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((sample_w, U.dim))
    H = (np.asarray(radii, dtype=float)[:, None, None] * _directions(U.dim, sample_h, rng)[None]).reshape(-1, U.dim)
    Wb = np.repeat(W, len(H), axis=0)
    Hb = np.tile(H, (sample_w, 1))
    form = np.sum((Hb + U(Wb + Hb) - U(Wb)) * Hb, axis=-1) / np.sum(Hb * Hb, axis=-1)
    k = int(np.argmin(form))
    rep = CheckReport.from_margin(form[k], tol, len(form),
                                  {"w": Wb[k], "h": Hb[k]}, notes=["margin = <h + u(w+h) - u(w), h> / |h|^2"])
    if rep.passed:
        rep.witness = None
    return rep


def verify_change_of_variables(U: ShiftMap, f, space: GaussianSpace, tol: float = 1e-8,
                               monotone_seed: int = 0) -> CheckReport:
    """``E[f o U Lambda(U)] <= E[f]`` by Gauss-Hermite quadrature.

    ``margin = E[f] - E[f o U Lambda(U)]``; ``details["equality"]`` flags
    ``|margin| <= tol``.  ``f = 1`` gives ``E[Lambda(U)] <= 1``.
    """
    if space.dim != U.dim:
        raise ValueError("space and shift dimensions differ")
    fn = _func(f)
    X = space.nodes
    u = U(X)
    if not np.all(np.isfinite(u)):
        k = int(np.argmax(~np.all(np.isfinite(u), axis=-1)))
        raise DomainError("shift is not finite on the quadrature hull", X[k])
    mono = check_monotone(U, seed=monotone_seed)
    if mono.failed:
        mono.precondition_failed = True
        mono.notes.append("shift is not monotone")
        return mono
    fx, fU = np.asarray(fn(X), dtype=float), np.asarray(fn(X + u), dtype=float)
    neg = np.concatenate([fx, fU]) < 0
    if neg.any():
        pts = np.concatenate([X, X + u])
        return CheckReport(FAIL, float(np.min(np.concatenate([fx, fU]))), tol, len(X),
                           {"point": pts[int(np.argmax(neg))]}, ["f takes negative values"],
                           precondition_failed=True)
    lam = lambda_jacobian(U, X).Lambda
    lhs = float(np.dot(space.weights, fU * lam))
    rhs = float(np.dot(space.weights, fx))
    margin = rhs - lhs
    rep = CheckReport.from_margin(margin, tol, len(X), details={
        "E_f": rhs, "E_fU_Lambda": lhs, "equality": abs(margin) <= tol, "order": space.order})
    if rep.failed:
        rep.witness = {"point": X[int(np.argmax(space.weights * (fU * lam - fx)))]}
    return rep


# ---------------------------------------------------------------------------
# Ornstein-Uhlenbeck semigroup and conditional expectations
# ---------------------------------------------------------------------------

def ou_operator(f, tau: float, space: GaussianSpace) -> Callable:
    """``P_tau f`` as a vectorised callable (Mehler formula):
    ``P_tau f(x) = E[f(e^{-tau} x + sqrt(1 - e^{-2 tau}) Y)]``."""
    if tau < 0:
        raise ValueError("tau must be >= 0")
    fn = _func(f)
    if tau == 0:
        return fn
    a, b = math.exp(-tau), math.sqrt(-math.expm1(-2 * tau))
    Y, w = space.nodes, space.weights

    def Pf(X):
        X = np.asarray(X, dtype=float)
        flat = X.reshape(-1, X.shape[-1])
        chunk = max(1, 2_000_000 // len(Y))
        parts = []
        for i in range(0, len(flat), chunk):
            Z = a * flat[i:i + chunk, None, :] + b * Y[None, :, :]
            # vector-valued f (shift fields) keep their trailing axis
            parts.append(np.tensordot(np.asarray(fn(Z), dtype=float), w, axes=([1], [0])))
        out = np.concatenate(parts)
        return out.reshape(X.shape[:-1] + out.shape[1:])
    return Pf


def _ou_grid(f: GridFunction, tau: float) -> GridFunction:
    """Kernel quadrature over the grid nodes (trapezoid weights), each row
    renormalised so constants are reproduced exactly."""
    a, var = math.exp(-tau), -math.expm1(-2 * tau)
    mats = []
    for x, n, h in zip(f.axes, f.resolution, f.spacing):
        K = np.exp(-(x[None, :] - a * x[:, None]) ** 2 / (2 * var)) * trapezoid_weights(n, h)[None, :]
        mats.append(K / K.sum(axis=1, keepdims=True))
    return GridFunction(f.domain, apply_along(np.asarray(f.values), mats), {"tau": tau})


def ou_apply(f, tau: float, space: GaussianSpace, dom: BoxDomain | None = None, res=81) -> GridFunction:
    """Tabulate ``P_tau f``.

    Expressions and callables go through the Mehler formula (exact for
    polynomials up to the quadrature degree) on ``dom`` (default
    ``[-4, 4]^d``); grids are smoothed on their own nodes.
    """
    if tau < 0:
        raise ValueError("tau must be >= 0")
    if isinstance(f, GridFunction):
        return GridFunction(f.domain, np.asarray(f.values)) if tau == 0 else _ou_grid(f, tau)
    dom = dom or BoxDomain.cube(-4.0, 4.0, space.dim)
    P, res = _grid_points(dom, res)
    return GridFunction(dom, ou_operator(f, tau, space)(P), {"tau": tau})


def _check_keep(keep, dim: int) -> list:
    keep = sorted(set(int(k) for k in np.atleast_1d(keep)))
    if not keep or len(keep) >= dim or keep[0] < 0 or keep[-1] >= dim:
        raise ValueError("keep must be a nonempty proper subset of the axes")
    return keep


def conditional_operator(f, keep, space: GaussianSpace) -> Callable:
    """``x_keep -> E[f(x_keep, Y)]`` with ``Y`` standard Gaussian on the
    dropped axes, as a callable of the kept coordinates."""
    keep = _check_keep(keep, space.dim)
    drop = [k for k in range(space.dim) if k not in keep]
    fn = _func(f)
    sub = GaussianSpace(len(drop), space.order)
    Y, w = sub.nodes, sub.weights

    def Ef(X):
        X = np.asarray(X, dtype=float)
        flat = X.reshape(-1, len(keep))
        out = np.empty(len(flat))
        chunk = max(1, 2_000_000 // len(Y))
        for i in range(0, len(flat), chunk):
            x = flat[i:i + chunk]
            Z = np.empty((len(x), len(Y), space.dim))
            Z[..., keep] = x[:, None, :]
            Z[..., drop] = Y[None, :, :]
            out[i:i + chunk] = np.asarray(fn(Z), dtype=float) @ w
        return out.reshape(X.shape[:-1])
    return Ef


def lift(g: Callable, keep, dim: int) -> Callable:
    """View a function of the kept coordinates as a function on R^dim."""
    keep = list(keep)
    return lambda X: g(np.asarray(X)[..., keep])


def conditional_expectation(f, keep, space: GaussianSpace, dom: BoxDomain | None = None, res=81) -> GridFunction:
    """``E[f | x_keep]`` tabulated on the kept axes (0-based ``keep``).

    Grids integrate the dropped axes against the Gaussian restricted to the
    box (renormalised); other inputs use Gauss-Hermite.
    """
    keep = _check_keep(keep, space.dim)
    if isinstance(f, GridFunction):
        if f.dim != space.dim:
            raise ValueError("grid and space dimensions differ")
        mats = []
        for k, (x, w) in enumerate(zip(f.axes, f.simpson_weights())):
            if k in keep:
                mats.append(None)
            else:
                g = w * np.exp(-0.5 * x * x)
                mats.append((g / g.sum())[None, :])
        vals = apply_along(np.asarray(f.values), mats).reshape([f.resolution[k] for k in keep])
        dom = BoxDomain(tuple(f.domain.lo[k] for k in keep), tuple(f.domain.hi[k] for k in keep))
        return GridFunction(dom, vals)
    dom = dom or BoxDomain.cube(-4.0, 4.0, len(keep))
    P, res = _grid_points(dom, res)
    return GridFunction(dom, conditional_operator(f, keep, space)(P))


# ---------------------------------------------------------------------------
# 1-log-concavity
# ---------------------------------------------------------------------------

def _lattice_pairs(dim, radius, n_axis, budget, rng, step=None):
    if step is not None:
        m = max(1, int(math.floor(radius / step + 1e-9)))
        ticks = np.arange(-m, m + 1) * step
    else:
        ticks = np.linspace(-radius, radius, n_axis)
    L = np.stack(np.meshgrid(*([ticks] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    n = len(L)
    if n * n <= budget:
        i, j = np.divmod(np.arange(n * n), n)
    else:
        i, j = rng.integers(0, n, budget), rng.integers(0, n, budget)
    keep = i != j
    return L[i[keep]], L[j[keep]]


def check_one_logconcave(f, space: GaussianSpace | None = None, s: float = 0.5, hk_samples: int = 4096,
                         tol: float = 1e-6, seed: int = 0, w_samples: int = 16,
                         dom: BoxDomain | None = None, lattice: int = 17) -> CheckReport:
    """Test ``F(w, s h + t h') >= s F(w, h) + t F(w, h') - tol`` where
    ``F(w, h) = log f(w + h) - |h|^2 / 2``.

    ``w`` is the origin plus ``w_samples`` seeded Gaussian points; ``h, h'``
    range over a lattice of radius a quarter of the box width (all pairs, or
    ``hk_samples`` random pairs when there are more).  For grids with
    ``s = 1/2`` everything is node aligned.  Triples leaving the box are
    skipped and counted; pairs with a zero endpoint are vacuous.
    """
    if not 0 <= s <= 1:
        raise ValueError("s must lie in [0, 1]")
    t = 1 - s
    dim = _dim_of(f, space.dim if space else None)
    if isinstance(f, (GridFunction, GridMask)):
        dom = f.domain
    dom = dom or BoxDomain.cube(-4.0, 4.0, dim)
    fn = _func(f)
    rng = np.random.default_rng(seed)
    lo, hi = np.asarray(dom.lo), np.asarray(dom.hi)
    radius = float(np.min(hi - lo)) / 4
    W = np.vstack([np.zeros(dim), rng.standard_normal((w_samples, dim))])
    step = None
    if isinstance(f, (GridFunction, GridMask)) and s == 0.5:
        sp = f.like().spacing if isinstance(f, GridMask) else f.spacing
        if np.allclose(sp, sp[0]):
            cells = max(1, int(round((2 * radius / (lattice - 1)) / sp[0])))
            step = cells * sp[0]
            W = lo + np.round((W - lo) / sp) * sp
    Hs, Ks = _lattice_pairs(dim, radius, lattice, hk_samples, rng, step)
    if step is not None:
        # keep h + h' an even number of cells so the midpoint is a node
        odd = np.round((Hs + Ks) / sp).astype(int) % 2 == 1
        Ks = np.where(odd, Ks + sp, Ks)
    w = np.repeat(W, len(Hs), axis=0)
    h = np.tile(Hs, (len(W), 1))
    k = np.tile(Ks, (len(W), 1))
    m = s * h + t * k
    slack = 1e-9 * float(np.max(hi - lo))
    inside = dom.contains(w + h, slack) & dom.contains(w + k, slack) & dom.contains(w + m, slack)
    skipped = int((~inside).sum())
    w, h, k, m = w[inside], h[inside], k[inside], m[inside]
    fh, fk, fm = (np.asarray(fn(w + v), dtype=float) for v in (h, k, m))
    if np.any(np.concatenate([fh, fk, fm]) < 0):
        raise ValueError("1-log-concavity needs a nonnegative function")
    ok = (fh > 0) & (fk > 0)
    if not ok.any():
        return CheckReport.inconclusive(tol, int(ok.size), "no admissible triple with positive endpoints",
                                        details={"skipped": skipped})
    sq = lambda v: 0.5 * np.sum(v * v, axis=-1)
    lhs = _logs(fm) - sq(m)
    rhs = s * (_logs(fh) - sq(h)) + t * (_logs(fk) - sq(k))
    with np.errstate(invalid="ignore"):
        marg = np.where(ok, lhs - rhs, np.inf)
    j = int(np.argmin(marg))
    rep = CheckReport.from_margin(marg[j], tol, int(ok.sum()),
                                  {"w": w[j], "h": h[j], "h_prime": k[j], "s": s},
                                  details={"skipped": skipped, "radius": radius})
    if rep.passed:
        rep.witness = None
    return rep


def verify_preservation(f, mode: str, space: GaussianSpace, s: float = 0.5, tol: float = 1e-6,
                        keep=None, tau: float | None = None, seed: int = 0, **check_kw) -> CheckReport:
    """Apply ``E[. | x_keep]`` (``mode="conditional"``) or ``P_tau``
    (``mode="ou"``) to a 1-log-concave ``f`` and re-check the output.

    Expressions and callables stay exact functions (quadrature on demand);
    grids are transformed on their nodes.
    """
    pre = check_one_logconcave(f, space, s, tol=tol, seed=seed, **check_kw)
    if not pre.passed:
        pre.precondition_failed = True
        pre.notes.append("input is not 1-log-concave")
        return pre
    if mode == "ou":
        if tau is None:
            raise ValueError("ou mode needs tau")
        g = ou_apply(f, tau, space) if isinstance(f, GridFunction) else ou_operator(f, tau, space)
        out_dim = space.dim
        label = f"P_{tau}"
    elif mode == "conditional":
        if keep is None:
            raise ValueError("conditional mode needs keep")
        keep = _check_keep(keep, space.dim)
        g = conditional_expectation(f, keep, space) if isinstance(f, GridFunction) \
            else conditional_operator(f, keep, space)
        out_dim = len(keep)
        label = f"E[.|x{[k + 1 for k in keep]}]"
    else:
        raise ValueError(f"unknown preservation mode {mode!r}")
    out_space = GaussianSpace(out_dim, space.order)
    if isinstance(g, GridFunction):
        g = GridFunction(g.domain, np.maximum(np.asarray(g.values), 0.0))
    rep = check_one_logconcave(g, out_space, s, tol=tol, seed=seed, **check_kw)
    rep.notes.append(f"re-checked {label} f")
    rep.details["input_margin"] = pre.worst_margin
    return rep


# ---------------------------------------------------------------------------
# Gaussian Prekopa-Leindler
# ---------------------------------------------------------------------------

def gaussian_sup_convolution(b, c, s: float, dom: BoxDomain, res) -> GridDensity:
    """Smallest ``a`` with ``a(w + s h + t k) e^{-|sh+tk|^2/2} >=
    (b(w+h) e^{-|h|^2/2})^s (c(w+k) e^{-|k|^2/2})^t``:
    ``a = e^{|x|^2/2} * supconv(b e^{-|x|^2/2}, c e^{-|x|^2/2})``."""
    P, res = _grid_points(dom, res)
    g = np.exp(-0.5 * np.sum(P * P, axis=-1))
    B = GridDensity(dom, np.asarray(_func(b)(P), dtype=float) * g)
    C = GridDensity(dom, np.asarray(_func(c)(P), dtype=float) * g)
    k = sup_convolution(B, C, s)
    return GridDensity(dom, np.asarray(k.values) / g)


def _geometry_of(*objs):
    for o in objs:
        if isinstance(o, GridMask):
            return o.domain, o.resolution
        if isinstance(o, GridFunction):
            return o.domain, o.resolution
    return None


def _nu_grid(obj, weight: np.ndarray, dom: BoxDomain, res) -> float:
    nu = GridFunction(dom, weight)
    if isinstance(obj, GridMask):
        return mask_measure(nu, obj)
    if isinstance(obj, GridFunction):
        return GridFunction(dom, np.asarray(obj.values) * weight).integral()
    P = nu.points()
    return GridFunction(dom, np.asarray(_func(obj)(P), dtype=float) * weight).integral()


def _as_grid_values(obj, P):
    if isinstance(obj, GridMask):
        return obj.like()
    if isinstance(obj, GridFunction):
        return obj
    return None


def verify_gaussian_pl(a, b, c, q=None, s: float = 0.5, space: GaussianSpace | None = None,
                       tol: float = 1e-6, seed: int = 0, pairs: int = 4000,
                       check_q: bool = True) -> CheckReport:
    """``nu(a) >= nu(b)^s nu(c)^t`` for ``d nu = q d mu``.

    The hypothesis is spot-checked on ``pairs`` seeded triples with
    ``w + h`` in the support of ``b`` and ``w + k`` in that of ``c``;
    ``a`` is read with the cell-maximum rule when it is a grid.  When any of
    ``a, b, c`` is a grid or mask every integral is taken on that grid
    (masks as unions of cells); otherwise Gauss-Hermite is used.
    """
    if not 0 <= s <= 1:
        raise ValueError("s must lie in [0, 1]")
    t = 1 - s
    dim = next((o.dim for o in (a, b, c) if isinstance(o, (Expr, GridFunction, GridMask))),
               space.dim if space else None)
    if dim is None:
        raise ValueError("dimension cannot be inferred; pass a GaussianSpace")
    space = space or GaussianSpace(dim)
    notes = []
    qfn = None if q is None else _func(q)
    if q is not None and check_q:
        qrep = check_one_logconcave(q, space, tol=tol, seed=seed)
        if qrep.failed:
            qrep.precondition_failed = True
            qrep.notes.append("q is not 1-log-concave")
            return qrep
    geo = _geometry_of(a, b, c)
    rng = np.random.default_rng(seed)
    # hypothesis spot-check
    if geo is not None:
        dom, res = geo
        P, _ = _grid_points(dom, res)
        Pflat = P.reshape(-1, dim)

        def support(o):
            v = np.asarray(_func(o)(Pflat), dtype=float)
            return Pflat[v > 0]
        Sb, Sc = support(b), support(c)
    else:
        Y = space.sample(pairs, seed) * 1.5
        Sb = Y[np.asarray(_func(b)(Y)) > 0]
        Sc = Y[np.asarray(_func(c)(Y)) > 0]
    hyp_margin, n_hyp = math.inf, 0
    if len(Sb) and len(Sc):
        x = Sb[rng.integers(0, len(Sb), pairs)]
        y = Sc[rng.integers(0, len(Sc), pairs)]
        w = rng.standard_normal((pairs, dim))
        h, k = x - w, y - w
        m = s * h + t * k
        ga = _as_grid_values(a, None)
        av = ga.sample(w + m, mode="upper") if ga is not None else np.asarray(_func(a)(w + m), dtype=float)
        sq = lambda v: 0.5 * np.sum(v * v, axis=-1)
        lhs = _logs(av) - sq(m)
        rhs = s * (_logs(np.asarray(_func(b)(x), dtype=float)) - sq(h)) \
            + t * (_logs(np.asarray(_func(c)(y), dtype=float)) - sq(k))
        with np.errstate(invalid="ignore"):
            marg = np.where(np.isfinite(rhs), lhs - rhs, np.inf)
        j = int(np.argmin(marg))
        hyp_margin, n_hyp = float(marg[j]), pairs
        if hyp_margin < -tol:
            return CheckReport(FAIL, hyp_margin, tol, n_hyp,
                               {"w": w[j], "h": h[j], "k": k[j]},
                               ["hypothesis a(w+sh+tk)e^{-|sh+tk|^2/2} >= ... violated"],
                               precondition_failed=True)
        notes.append(f"hypothesis spot-checked on {n_hyp} triples (worst log-margin {hyp_margin:.3g})")
    # conclusion
    if geo is not None:
        dom, res = geo
        P, _ = _grid_points(dom, res)
        weight = np.exp(-0.5 * np.sum(P * P, axis=-1)) / (2 * np.pi) ** (dim / 2)
        if qfn is not None:
            weight = weight * np.asarray(qfn(P), dtype=float)
        na, nb, nc = (_nu_grid(o, weight, dom, res) for o in (a, b, c))
        method = "grid"
    else:
        qq = qfn or (lambda X: 1.0)
        na, nb, nc = (space.expect(lambda X, o=o: np.asarray(_func(o)(X)) * qq(X)) for o in (a, b, c))
        method = "gauss-hermite"
    margin = na - nb ** s * nc ** t
    rep = CheckReport.from_margin(margin, tol, n_hyp, notes=notes,
                                  details={"nu_a": na, "nu_b": nb, "nu_c": nc, "s": s, "method": method})
    if rep.failed:
        rep.witness = {"point": None}
    return rep


# ---------------------------------------------------------------------------
# Mixtures of shifts and smoothing sequences
# ---------------------------------------------------------------------------

def mixture_lambda(T1: ShiftMap, T2: ShiftMap, a: float, points=None, n: int = 200, seed: int = 0,
                   tol: float = 1e-8) -> CheckReport:
    """``log Lambda(a T1 + b T2) - a log Lambda(T1) - b log Lambda(T2)`` at
    seeded Gaussian points (or the given ``points``)."""
    if not 0 <= a <= 1:
        raise ValueError("a must lie in [0, 1]")
    if points is None:
        points = np.random.default_rng(seed).standard_normal((n, T1.dim))
    X = np.asarray(points, dtype=float).reshape(-1, T1.dim)
    M = ShiftMap.combine(a, T1, T2)
    l1, l2, lm = (lambda_jacobian(T, X).Lambda for T in (T1, T2, M))
    good = (l1 > 0) & (l2 > 0) & (lm > 0)
    if not good.any():
        return CheckReport.inconclusive(tol, len(X), "Lambda <= 0 at every point")
    with np.errstate(divide="ignore", invalid="ignore"):
        marg = np.where(good, np.log(np.where(good, lm, 1)) - a * np.log(np.where(good, l1, 1))
                        - (1 - a) * np.log(np.where(good, l2, 1)), np.inf)
    j = int(np.argmin(marg))
    rep = CheckReport.from_margin(marg[j], tol, int(good.sum()), {"point": X[j]},
                                  details={"inconclusive_points": int((~good).sum()), "a": a})
    if rep.passed:
        rep.witness = None
    if (~good).any():
        rep.notes.append(f"{int((~good).sum())} points with Lambda <= 0 skipped")
    return rep


@dataclass
class SmoothingTrace:
    """Jacobians of ``U_n = I + P_{1/n} u`` on a grid.

    ``liminf`` is the pointwise minimum over the last ``tail`` members of
    the sequence, an approximation of the liminf.
    """

    n_list: list
    grids: list
    liminf: GridFunction
    tail: int
    increments: list = field(default_factory=list)
    reference_gap: float | None = None

    def table(self) -> list:
        rows = []
        for i, n in enumerate(self.n_list):
            rows.append({"n": n, "sup_increment": self.increments[i] if i < len(self.increments) else None})
        return rows


def smoothing_sequence_lambda(U: ShiftMap, n_list: Sequence[int], space: GaussianSpace,
                              dom: BoxDomain | None = None, res=41, tail: int = 2,
                              reference: bool = True) -> SmoothingTrace:
    """Evaluate ``Lambda(U_n)`` with ``u_n = P_{1/n} u`` componentwise.

    ``increments[i]`` is ``sup |Lambda(U_{n_i}) - Lambda(U_{n_{i-1}})|``
    (convergence diagnostic); with ``reference=True`` the sup distance
    between the liminf approximation and ``Lambda(U)`` itself is reported.
    """
    n_list = [int(n) for n in n_list]
    if not n_list or min(n_list) < 1:
        raise ValueError("n_list must hold positive integers")
    tail = max(1, min(tail, len(n_list)))
    dom = dom or BoxDomain.cube(-2.0, 2.0, U.dim)
    P, res = _grid_points(dom, res)
    grids = []
    for n in n_list:
        Pn = ou_operator(U, 1.0 / n, space)
        Un = ShiftMap(Pn, U.dim, U.cfg, name=f"P_1/{n} u")
        grids.append(GridFunction(dom, lambda_jacobian(Un, P.reshape(-1, U.dim)).Lambda.reshape(res)))
    liminf = GridFunction(dom, np.min([np.asarray(g.values) for g in grids[-tail:]], axis=0))
    incs = [math.nan] + [float(np.max(np.abs(np.asarray(b.values) - np.asarray(a.values))))
                         for a, b in zip(grids, grids[1:])]
    gap = None
    if reference:
        exact = lambda_jacobian(U, P.reshape(-1, U.dim)).Lambda.reshape(res)
        gap = float(np.max(np.abs(np.asarray(liminf.values) - exact)))
    return SmoothingTrace(n_list, grids, liminf, tail, incs, gap)
