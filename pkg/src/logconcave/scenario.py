"""Scenario files: loading, validation, dispatch to the verifiers and report
emission.

A scenario is a JSON object with a ``version``, a list of ``measures`` and a
list of ``checks``; see ``docs/formats.md``.  Axis indices in scenario
files are 1-based.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .checks import (
    GridMask, check_logconcave, check_slc, convolve, gaussian_smooth, marginalize, slc_delta_bound,
    verify_brunn_minkowski, verify_prekopa_leindler,
)
from .expr import DomainError, Expr, ParseError, parse
from .gaussian import (
    GaussianSpace, ShiftMap, check_monotone, check_one_logconcave, mixture_lambda, verify_change_of_variables,
    verify_gaussian_pl, verify_preservation,
)
from .grid import (
    GAUSSIAN, LEBESGUE, BoxDomain, GridDensity, GridFunction, MeasureSpec, discretize, linear_pushforward,
    product_measure, weight_by_convex,
)
from .report import CheckReport, FAIL, INCONCLUSIVE, PASS, _plain
from .transport import gaussian_transport, lipschitz_estimate, monge_map, transport_jacobian_identity, verify_lsi

SCENARIO_VERSION = "1"


class ScenarioError(ValueError):
    """Invalid scenario input; ``pointer`` is a JSON pointer into the file."""

    def __init__(self, message: str, pointer: str = ""):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer or "/"
        self.message = message


# ---------------------------------------------------------------------------
# Schema
# ---------------------------------------------------------------------------

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_UNIT = {"type": "number", "minimum": 0, "maximum": 1}
_INT1 = {"type": "integer", "minimum": 1}
_LABEL = {"type": "string", "minLength": 1}
_EXPR = {"type": "string", "minLength": 1}
_DOMAIN = {"type": "array", "minItems": 1, "maxItems": 4,
           "items": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}}
_RES = {"oneOf": [{"type": "integer", "minimum": 8},
                  {"type": "array", "items": {"type": "integer", "minimum": 8}, "minItems": 1, "maxItems": 4}]}
_AXES = {"type": "array", "items": _INT1, "minItems": 1}
_BOXES = {"type": "array", "minItems": 1, "items": _DOMAIN}
_FUNC = {"oneOf": [
    _EXPR,
    {"type": "number"},
    {"type": "object", "required": ["expr"], "properties": {"expr": _EXPR}, "additionalProperties": False},
    {"type": "object", "required": ["measure"], "properties": {"measure": _LABEL}, "additionalProperties": False},
    {"type": "object", "required": ["boxes"], "properties": {"boxes": _BOXES}, "additionalProperties": False},
    {"type": "object", "required": ["predicate"], "properties": {"predicate": _EXPR},
     "additionalProperties": False},
]}
_MASK = {"oneOf": [_FUNC["oneOf"][4], _FUNC["oneOf"][5]]}
_SHIFT = {"type": "array", "items": _EXPR, "minItems": 1, "maxItems": 4}

MEASURE_SCHEMA = {
    "type": "object",
    "required": ["label", "domain", "resolution"],
    "properties": {
        "label": _LABEL,
        "reference": {"enum": [LEBESGUE, GAUSSIAN]},
        "density": _EXPR,
        "potential": _EXPR,
        "grid_file": {"type": "string", "minLength": 1},
        "sha256": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
        "domain": _DOMAIN,
        "resolution": _RES,
        "alpha": {"type": "number", "minimum": 0},
    },
    "oneOf": [{"required": ["density"]}, {"required": ["potential"]}, {"required": ["grid_file", "sha256"]}],
    "additionalProperties": False,
}


def _params(required, props):
    return {"type": "object", "required": list(required), "properties": props, "additionalProperties": False}


# kind -> (sampled, measure-label params, params schema)
KINDS = {
    "logconcave": (True, ["measure"], _params(["measure"], {"measure": _LABEL, "pairs": _INT1})),
    "slc": (True, ["measure"], _params(["measure", "alpha"], {
        "measure": _LABEL, "alpha": {"type": "number", "minimum": 0}, "samples": _INT1, "pairs": _INT1})),
    "prekopa_leindler": (True, ["measure"], _params(["measure", "b", "c"], {
        "measure": _LABEL, "b": _FUNC, "c": _FUNC, "a": {"anyOf": [{"const": "auto"}, _FUNC]},
        "s": _UNIT, "pairs": _INT1})),
    "brunn_minkowski": (False, ["measure"], _params(["measure", "A", "B"], {
        "measure": _LABEL, "A": _MASK, "B": _MASK, "s": _UNIT})),
    "convolution": (True, ["f", "g"], _params(["f", "g"], {
        "f": _LABEL, "g": _LABEL, "c": _NUM, "pairs": _INT1})),
    "marginal": (True, ["measure"], _params(["measure", "keep"], {
        "measure": _LABEL, "keep": _AXES, "oracle": _EXPR, "window": _DOMAIN, "rtol": _POS, "pairs": _INT1})),
    "weight": (True, ["measure"], _params(["measure", "F"], {"measure": _LABEL, "F": _EXPR, "pairs": _INT1})),
    "product": (True, ["measures"], _params(["measures"], {
        "measures": {"type": "array", "items": _LABEL, "minItems": 2, "maxItems": 2}, "pairs": _INT1})),
    "pushforward": (True, ["measure"], _params(["measure", "matrix", "out_domain"], {
        "measure": _LABEL, "matrix": {"type": "array", "items": {"type": "array", "items": _NUM}, "minItems": 1},
        "out_domain": _DOMAIN, "out_resolution": _RES, "method": {"enum": ["auto", "multilinear", "kernel"]},
        "pairs": _INT1})),
    "smoothing_bound": (True, ["measure"], _params(["measure", "sigma", "delta"], {
        "measure": _LABEL, "sigma": _POS, "delta": _POS, "alpha": _POS, "pairs": _INT1})),
    "lsi": (True, ["measure"], _params(["measure", "functions"], {
        "measure": _LABEL, "functions": {"type": "array", "items": _EXPR, "minItems": 1}, "alpha": _POS})),
    "caffarelli": (False, ["target"], _params(["target"], {
        "target": _LABEL, "alpha": _POS, "window": {"type": "array", "items": _UNIT, "minItems": 2, "maxItems": 2},
        "bound": _POS})),
    "transport_identity": (False, [], _params(["L"], {
        "L": _EXPR, "window": _UNIT, "domain": _DOMAIN, "resolution": {"type": "integer", "minimum": 8}})),
    "monotone": (True, [], _params(["shift"], {"shift": _SHIFT, "sample_w": _INT1, "sample_h": _INT1})),
    "change_of_variables": (False, [], _params(["shift", "f"], {"shift": _SHIFT, "f": _EXPR, "order": _INT1})),
    "one_logconcave": (True, [], _params(["f"], {
        "f": _FUNC, "dim": _INT1, "s": _UNIT, "domain": _DOMAIN, "resolution": _RES, "hk_samples": _INT1,
        "w_samples": _INT1})),
    "preservation": (True, [], _params(["f", "mode"], {
        "f": _FUNC, "dim": _INT1, "mode": {"enum": ["ou", "conditional"]}, "tau": {"type": "number", "minimum": 0},
        "keep": _AXES, "s": _UNIT, "order": _INT1})),
    "gaussian_pl": (True, [], _params(["a", "b", "c"], {
        "a": _FUNC, "b": _FUNC, "c": _FUNC, "q": _EXPR, "s": _UNIT, "dim": _INT1, "domain": _DOMAIN,
        "resolution": _RES, "pairs": _INT1})),
    "mixture_lambda": (True, [], _params(["T1", "T2"], {
        "T1": _SHIFT, "T2": _SHIFT, "a": _UNIT, "points": _INT1})),
}

CHECK_SCHEMA = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": sorted(KINDS)},
        "label": {"type": "string"},
        "params": {"type": "object"},
        "tol": {"type": "number", "minimum": 0},
        "seed": {"type": "integer", "minimum": 0},
    },
    "additionalProperties": False,
}

SCENARIO_SCHEMA = {
    "type": "object",
    "required": ["version", "measures", "checks"],
    "properties": {
        "version": {"const": SCENARIO_VERSION},
        "description": {"type": "string"},
        "measures": {"type": "array", "items": MEASURE_SCHEMA},
        "checks": {"type": "array", "items": CHECK_SCHEMA},
        "output": {"type": "object", "properties": {"format": {"enum": ["json", "csv", "summary"]}},
                   "additionalProperties": False},
    },
    "additionalProperties": False,
}


def _pointer(path) -> str:
    return "".join(f"/{p}" for p in path)


def _first_error(validator, instance, prefix=()) -> ScenarioError | None:
    err = jsonschema.exceptions.best_match(validator.iter_errors(instance))
    if err is None:
        return None
    return ScenarioError(err.message, _pointer(list(prefix) + list(err.absolute_path)))


# ---------------------------------------------------------------------------
# Scenario objects
# ---------------------------------------------------------------------------

@dataclass
class Scenario:
    """Validated scenario; ``raw`` is the parsed JSON, ``text`` the file
    bytes used for the digest."""

    raw: dict
    text: bytes
    base: Path
    source: str = ""

    @property
    def version(self) -> str:
        return self.raw["version"]

    @property
    def measures(self) -> list:
        return self.raw["measures"]

    @property
    def checks(self) -> list:
        return self.raw["checks"]

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.text).hexdigest()


def bundled_scenarios() -> list:
    root = resources.files("logconcave") / "scenarios"
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".json"))


def resolve_path(path) -> Path:
    """Existing file path, else a bundled scenario of that name."""
    p = Path(path)
    if p.exists():
        return p
    name = p.name if p.name.endswith(".json") else p.name + ".json"
    cand = resources.files("logconcave") / "scenarios" / name
    if cand.is_file():
        return Path(str(cand))
    raise ScenarioError(f"scenario file not found: {path}")


def _parse_expr(text, dim, pointer):
    try:
        return parse(str(text), dim)
    except ParseError as e:
        raise ScenarioError(f"bad expression {text!r}: {e}", pointer) from None


def validate(obj: dict) -> None:
    """Schema plus semantic validation; raises :class:`ScenarioError`."""
    err = _first_error(jsonschema.Draft202012Validator(SCENARIO_SCHEMA), obj)
    if err:
        raise err
    labels = {}
    for i, m in enumerate(obj["measures"]):
        if m["label"] in labels:
            raise ScenarioError(f"duplicate measure label {m['label']!r}", f"/measures/{i}/label")
        labels[m["label"]] = m
        dim = len(m["domain"])
        if isinstance(m["resolution"], list) and len(m["resolution"]) != dim:
            raise ScenarioError("resolution length differs from the domain dimension", f"/measures/{i}/resolution")
        for j, (a, b) in enumerate(m["domain"]):
            if not a < b:
                raise ScenarioError("domain axis needs lo < hi", f"/measures/{i}/domain/{j}")
        for key in ("density", "potential"):
            if key in m:
                _parse_expr(m[key], dim, f"/measures/{i}/{key}")
    for i, c in enumerate(obj["checks"]):
        sampled, label_params, schema = KINDS[c["kind"]]
        params = c.get("params", {})
        err = _first_error(jsonschema.Draft202012Validator(schema), params, ("checks", i, "params"))
        if err:
            raise err
        for key in label_params:
            vals = params.get(key)
            for j, v in enumerate(vals if isinstance(vals, list) else [vals]):
                if v is not None and v not in labels:
                    ptr = f"/checks/{i}/params/{key}" + (f"/{j}" if isinstance(vals, list) else "")
                    raise ScenarioError(f"undefined measure label {v!r}", ptr)
        for key, v in params.items():
            if isinstance(v, dict) and "measure" in v and v["measure"] not in labels:
                raise ScenarioError(f"undefined measure label {v['measure']!r}", f"/checks/{i}/params/{key}/measure")
        if sampled and "seed" not in c:
            raise ScenarioError(f"seed required for sampled check kind {c['kind']!r}", f"/checks/{i}")


def load_scenario(path) -> Scenario:
    p = resolve_path(path)
    text = p.read_bytes()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"invalid JSON: {e.msg} (line {e.lineno}, column {e.colno})") from None
    validate(obj)
    return Scenario(obj, text, p.parent, str(p))


def normalized_text(sc: Scenario) -> str:
    return json.dumps(sc.raw, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------

def _domain(spec) -> BoxDomain:
    return BoxDomain(tuple(a for a, _ in spec), tuple(b for _, b in spec))


def _res(spec, dim):
    return tuple(int(n) for n in np.broadcast_to(spec, (dim,)))


class _Context:
    """Measures of a scenario, discretised once before dispatch."""

    def __init__(self, sc: Scenario):
        self.sc = sc
        self.specs, self.grids = {}, {}
        for i, m in enumerate(sc.measures):
            dom = _domain(m["domain"])
            ref = m.get("reference", LEBESGUE)
            ptr = f"/measures/{i}"
            if "grid_file" in m:
                src = self._grid_file(m, ptr)
                spec = MeasureSpec(src, ref, "density", m.get("alpha"), m["label"])
            else:
                kind = "potential" if "potential" in m else "density"
                spec = MeasureSpec(parse(m[kind], dom.dim), ref, kind, m.get("alpha"), m["label"])
            try:
                grid = discretize(spec, dom, _res(m["resolution"], dom.dim))
            except (DomainError, ValueError) as e:
                raise ScenarioError(f"cannot discretise measure {m['label']!r}: {e}", ptr) from None
            self.specs[m["label"]] = spec
            self.grids[m["label"]] = grid

    def _grid_file(self, m, ptr):
        path = self.sc.base / m["grid_file"]
        if not path.is_file():
            raise ScenarioError(f"grid file not found: {m['grid_file']}", ptr + "/grid_file")
        data = path.read_bytes()
        if hashlib.sha256(data).hexdigest() != m["sha256"]:
            raise ScenarioError("grid file content hash mismatch", ptr + "/sha256")
        try:
            if path.suffix == ".json":
                g = GridFunction.from_json(data.decode())
            else:
                g = GridFunction.from_bytes(data)
            return GridDensity(g.domain, g.values)
        except (ValueError, KeyError) as e:
            raise ScenarioError(f"bad grid file: {e}", ptr + "/grid_file") from None

    def potential_expr(self, label):
        """Total potential (with respect to Lebesgue) as an expression, if any."""
        spec = self.specs[label]
        if not isinstance(spec.source, Expr) or spec.kind != "potential":
            return None
        if spec.reference == GAUSSIAN:
            return parse(f"({spec.source.text})+0.5*normsq(x)", spec.dim)
        return spec.source

    def function(self, spec, dim, geometry=None):
        """Expr, grid or mask from a function spec."""
        if isinstance(spec, (int, float)):
            return float(spec)
        if isinstance(spec, str):
            return parse(spec, dim)
        if "expr" in spec:
            return parse(spec["expr"], dim)
        if "measure" in spec:
            return self.grids[spec["measure"]]
        if geometry is None:
            raise ValueError("masks need a grid geometry")
        if "boxes" in spec:
            return GridMask.from_boxes(geometry, spec["boxes"])
        return GridMask.from_predicate(geometry, parse(spec["predicate"], geometry.dim))


def _grid_for(f, dom, res):
    """Tabulate an Expr as a nonnegative grid density (masks/grids pass through)."""
    if isinstance(f, (GridMask, GridFunction)):
        return f
    P = np.stack(np.meshgrid(*[np.linspace(a, b, n) for a, b, n in zip(dom.lo, dom.hi, res)],
                             indexing="ij"), axis=-1)
    if isinstance(f, float):
        return GridDensity(dom, np.full(res, f))
    return GridDensity(dom, f(P))


def _with_logconcave(out: GridFunction, tol, pairs, seed, details=None) -> CheckReport:
    rep = check_logconcave(out, tol, pairs, seed)
    if details:
        rep.details.update(details)
    return rep


def _run_logconcave(ctx, p, tol, seed):
    return check_logconcave(ctx.grids[p["measure"]], tol, p.get("pairs", 1000), seed)


def _run_slc(ctx, p, tol, seed):
    V = ctx.potential_expr(p["measure"])
    g = ctx.grids[p["measure"]]
    if V is not None:
        cert = check_slc(V, p["alpha"], g.domain, p.get("samples", 256), tol, seed)
    else:
        cert = check_slc(g, p["alpha"], tol=tol, seed=seed, pairs=p.get("pairs", 1000))
    return cert.to_report()


def _run_pl(ctx, p, tol, seed):
    rho = ctx.grids[p["measure"]]
    b = ctx.function(p["b"], rho.dim, rho)
    c = ctx.function(p["c"], rho.dim, rho)
    a = p.get("a", "auto")
    if a != "auto":
        a = _grid_for(ctx.function(a, rho.dim, rho), rho.domain, rho.resolution)
    b = _grid_for(b, rho.domain, rho.resolution)
    c = _grid_for(c, rho.domain, rho.resolution)
    return verify_prekopa_leindler(rho, b, c, a, p.get("s", 0.5), tol, p.get("pairs", 2000), seed)


def _run_bm(ctx, p, tol, seed):
    rho = ctx.grids[p["measure"]]
    A = ctx.function(p["A"], rho.dim, rho)
    B = ctx.function(p["B"], rho.dim, rho)
    return verify_brunn_minkowski(rho, A, B, p.get("s", 0.5), tol)


def _run_convolution(ctx, p, tol, seed):
    f, g = ctx.grids[p["f"]], ctx.grids[p["g"]]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        out = convolve(f, g, p.get("c", 1.0))
    rep = _with_logconcave(out, tol, p.get("pairs", 1000), seed, {"clipped_mass": out.meta.get("clipped_mass")})
    rep.notes.extend(str(w.message) for w in caught)
    return rep


def _run_marginal(ctx, p, tol, seed):
    f = ctx.grids[p["measure"]]
    keep = [k - 1 for k in p["keep"]]
    out = marginalize(f, keep)
    rep = _with_logconcave(out, tol, p.get("pairs", 1000), seed)
    if "oracle" in p:
        ref = parse(p["oracle"], out.dim)
        P = out.points()
        inside = np.ones(out.resolution, dtype=bool)
        if "window" in p:
            inside = _domain(p["window"]).contains(P, 1e-12)
        err = float(np.max(np.abs(out.values[inside] / ref(P)[inside] - 1)))
        rtol = p.get("rtol", 1e-4)
        rep.details.update(oracle_rel_error=err, oracle_rtol=rtol)
        if err > rtol:
            rep.verdict = FAIL
            rep.worst_margin = min(rep.worst_margin, rtol - err) if rep.worst_margin is not None else rtol - err
            rep.notes.append("marginal differs from the oracle")
            rep.witness = rep.witness or {"point": None}
    return rep


def _run_weight(ctx, p, tol, seed):
    rho = ctx.grids[p["measure"]]
    return _with_logconcave(weight_by_convex(rho, parse(p["F"], rho.dim)), tol, p.get("pairs", 1000), seed)


def _run_product(ctx, p, tol, seed):
    a, b = (ctx.grids[k] for k in p["measures"])
    return _with_logconcave(product_measure(a, b), tol, p.get("pairs", 1000), seed)


def _run_pushforward(ctx, p, tol, seed):
    rho = ctx.grids[p["measure"]]
    dom = _domain(p["out_domain"])
    res = _res(p.get("out_resolution", rho.resolution[0]), dom.dim)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        out = linear_pushforward(rho, p["matrix"], dom, res, method=p.get("method", "auto"))
    details = {k: out.meta[k] for k in ("lost_mass", "source_mass", "method", "kernel_variance") if k in out.meta}
    rep = _with_logconcave(out, tol, p.get("pairs", 1000), seed, details)
    rep.notes.extend(str(w.message) for w in caught)
    return rep


def _run_smoothing(ctx, p, tol, seed):
    rho = ctx.grids[p["measure"]]
    alpha = p.get("alpha", ctx.specs[p["measure"]].declared_alpha)
    if alpha is None:
        raise ValueError("smoothing_bound needs alpha (parameter or declared on the measure)")
    bound = slc_delta_bound(alpha, p["sigma"])
    out = gaussian_smooth(rho, p["sigma"])
    rep = check_slc(out, p["delta"], tol=tol, seed=seed, pairs=p.get("pairs", 1000)).to_report()
    rep.details.update(delta=p["delta"], delta_max=bound.delta_max, certified_by_bound=bound.admits(p["delta"]),
                       sigma=p["sigma"], alpha=alpha)
    rep.notes.append("kernel normalised; s.l.c. is invariant under positive scaling")
    return rep


def _run_lsi(ctx, p, tol, seed):
    spec = ctx.specs[p["measure"]]
    g = ctx.grids[p["measure"]]
    fs = [parse(f, g.dim) for f in p["functions"]]
    alpha = p.get("alpha", spec.declared_alpha)
    V = ctx.potential_expr(p["measure"])
    if V is not None:
        spec = MeasureSpec(V, LEBESGUE, "potential", alpha, spec.label)
        reps = verify_lsi(spec, fs, alpha, g.domain, g.resolution, tol, seed=seed)
    else:
        reps = verify_lsi(g, fs, alpha, tol=tol, seed=seed)
    worst = min(reps, key=lambda r: (r.verdict != FAIL, r.worst_margin if r.worst_margin is not None else math.inf))
    out = CheckReport(worst.verdict, worst.worst_margin, tol, sum(r.samples for r in reps), worst.witness,
                      ["worst over test functions"], precondition_failed=worst.precondition_failed)
    out.details["per_function"] = [r.to_dict() for r in reps]
    return out


def _run_caffarelli(ctx, p, tol, seed):
    tgt = ctx.grids[p["target"]]
    if tgt.dim != 1:
        raise ValueError("caffarelli needs a one-dimensional target")
    alpha = p.get("alpha", ctx.specs[p["target"]].declared_alpha or 1.0)
    x = tgt.axes[0]
    src = GridDensity(tgt.domain, np.exp(-0.5 * alpha * x * x))
    T = monge_map(src, tgt)
    lip = lipschitz_estimate(T, tuple(p.get("window", (0.05, 0.95))))
    bound = p.get("bound", 1.01)
    rep = CheckReport.from_margin(bound - lip, tol, len(x), details={
        "lipschitz": lip, "bound": bound, "alpha": alpha, "pushforward_error": T.pushforward_error})
    rep.notes.extend(T.notes)
    if rep.failed:
        rep.witness = {"lipschitz": lip}
    return rep


def _run_transport_identity(ctx, p, tol, seed):
    L = parse(p["L"], 1)
    dom = _domain(p.get("domain", [[-8, 8]]))
    T = gaussian_transport(L, dom, p.get("resolution", 1601))
    return transport_jacobian_identity(L, T, tol, p.get("window", 0.9))


def _shift(comps):
    return ShiftMap.from_exprs(comps, len(comps))


def _run_monotone(ctx, p, tol, seed):
    return check_monotone(_shift(p["shift"]), p.get("sample_w", 64), p.get("sample_h", 16), tol, seed)


def _run_cov(ctx, p, tol, seed):
    U = _shift(p["shift"])
    return verify_change_of_variables(U, parse(p["f"], U.dim), GaussianSpace(U.dim, p.get("order", 64)), tol,
                                      seed or 0)


def _fdim(ctx, p, key="f"):
    f = p[key]
    if isinstance(f, dict) and "measure" in f:
        return ctx.grids[f["measure"]].dim
    return p.get("dim", 1)


def _geometry(p, dim):
    if "domain" not in p:
        return None
    dom = _domain(p["domain"])
    res = _res(p.get("resolution", 161), dom.dim)
    return GridFunction(dom, np.zeros(res))


def _run_one_lc(ctx, p, tol, seed):
    dim = _fdim(ctx, p)
    geo = _geometry(p, dim)
    f = ctx.function(p["f"], dim, geo)
    kw = {}
    if geo is not None and not isinstance(f, (GridFunction, GridMask)):
        kw["dom"] = geo.domain
    return check_one_logconcave(f, GaussianSpace(dim, 32), p.get("s", 0.5), p.get("hk_samples", 4096), tol, seed,
                                p.get("w_samples", 16), **kw)


def _run_preservation(ctx, p, tol, seed):
    dim = _fdim(ctx, p)
    f = ctx.function(p["f"], dim)
    space = GaussianSpace(dim, p.get("order", 48))
    keep = [k - 1 for k in p["keep"]] if "keep" in p else None
    return verify_preservation(f, p["mode"], space, p.get("s", 0.5), tol, keep=keep, tau=p.get("tau"), seed=seed)


def _run_gaussian_pl(ctx, p, tol, seed):
    dim = p.get("dim", 1)
    geo = _geometry(p, dim)
    a, b, c = (ctx.function(p[k], dim, geo) for k in ("a", "b", "c"))
    q = parse(p["q"], dim) if "q" in p else None
    return verify_gaussian_pl(a, b, c, q, p.get("s", 0.5), GaussianSpace(dim), tol, seed, p.get("pairs", 4000))


def _run_mixture(ctx, p, tol, seed):
    return mixture_lambda(_shift(p["T1"]), _shift(p["T2"]), p.get("a", 0.5), n=p.get("points", 200), seed=seed,
                          tol=tol)


RUNNERS = {
    "logconcave": _run_logconcave, "slc": _run_slc, "prekopa_leindler": _run_pl, "brunn_minkowski": _run_bm,
    "convolution": _run_convolution, "marginal": _run_marginal, "weight": _run_weight, "product": _run_product,
    "pushforward": _run_pushforward, "smoothing_bound": _run_smoothing, "lsi": _run_lsi,
    "caffarelli": _run_caffarelli, "transport_identity": _run_transport_identity, "monotone": _run_monotone,
    "change_of_variables": _run_cov, "one_logconcave": _run_one_lc, "preservation": _run_preservation,
    "gaussian_pl": _run_gaussian_pl, "mixture_lambda": _run_mixture,
}

DEFAULT_TOL = 1e-6


# ---------------------------------------------------------------------------
# Run reports
# ---------------------------------------------------------------------------

@dataclass
class RunReport:
    digest: str
    version: str
    checks: list
    timings: dict
    overall: str
    notes: list = field(default_factory=list)

    def to_dict(self, timings: bool = True) -> dict:
        out = {"scenario_digest": self.digest, "toolkit_version": self.version, "overall": self.overall,
               "checks": self.checks, "notes": self.notes}
        if timings:
            out["timings"] = self.timings
        return _plain(out)


def _run_one(ctx, i, c, seed_override):
    kind = c["kind"]
    tol = c.get("tol", DEFAULT_TOL)
    seed = c.get("seed")
    if seed_override is not None and seed is not None:
        seed = seed_override
    t0 = time.perf_counter()
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rep = RUNNERS[kind](ctx, c.get("params", {}), tol, seed)
    except Exception as e:  # captured per check
        rep = CheckReport.inconclusive(tol, note=f"error: {type(e).__name__}: {e}")
    elapsed = time.perf_counter() - t0
    entry = {"index": i, "label": c.get("label", f"{kind}-{i}"), "kind": kind, "seed": seed, **rep.to_dict()}
    return entry, elapsed


def overall_verdict(verdicts) -> str:
    verdicts = list(verdicts)
    if any(v == FAIL for v in verdicts):
        return FAIL
    if any(v == INCONCLUSIVE for v in verdicts):
        return INCONCLUSIVE
    return PASS


def run(sc: Scenario, jobs: int = 1, seed_override: int | None = None) -> RunReport:
    """Execute every check; reports keep declaration order."""
    t0 = time.perf_counter()
    ctx = _Context(sc)
    setup = time.perf_counter() - t0
    checks = sc.checks
    notes = []
    if not checks:
        notes.append("scenario declares no checks")
        warnings.warn("scenario declares no checks")
    if jobs > 1 and len(checks) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda ic: _run_one(ctx, ic[0], ic[1], seed_override), enumerate(checks)))
    else:
        results = [_run_one(ctx, i, c, seed_override) for i, c in enumerate(checks)]
    entries = [r[0] for r in results]
    timings = {"setup_seconds": setup, "checks_seconds": [r[1] for r in results],
               "total_seconds": time.perf_counter() - t0}
    return RunReport(sc.digest, __version__, entries, timings, overall_verdict(e["verdict"] for e in entries), notes)


# ---------------------------------------------------------------------------
# Emission
# ---------------------------------------------------------------------------

def emit(report: RunReport, fmt: str = "json") -> str:
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "label", "kind", "verdict", "worst_margin", "tolerance", "samples", "witness"])
        for e in report.to_dict()["checks"]:
            w.writerow([e["index"], e["label"], e["kind"], e["verdict"], e["worst_margin"], e["tolerance"],
                        e["samples"], json.dumps(e["witness"], sort_keys=True) if e["witness"] else ""])
        return buf.getvalue()
    if fmt == "summary":
        rows = [("#", "label", "kind", "verdict", "margin", "tol")]
        for e in report.to_dict()["checks"]:
            m = e["worst_margin"]
            rows.append((str(e["index"]), e["label"], e["kind"], e["verdict"].upper(),
                         f"{m:.3e}" if isinstance(m, float) else str(m), f"{e['tolerance']:.0e}"))
        widths = [max(len(r[k]) for r in rows) for k in range(len(rows[0]))]
        lines = ["  ".join(s.ljust(w) for s, w in zip(r, widths)).rstrip() for r in rows]
        lines.append(f"overall: {report.overall.upper()} ({len(report.checks)} checks, digest {report.digest[:12]})")
        lines.extend(f"note: {n}" for n in report.notes)
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown format {fmt!r}")
