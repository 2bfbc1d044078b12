import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import LINE, normal_pdf, tabulate
from logconcave.checks import check_logconcave
from logconcave.expr import DomainError, parse
from logconcave.grid import (
    GAUSSIAN, BoxDomain, GridDensity, GridFunction, MeasureSpec, discretize, grid_from_function,
    interval_weights, linear_pushforward, product_measure, quadrature_integral, simpson_coefficients,
    weight_by_convex,
)

SQUARE = BoxDomain((-8.0, -8.0), (8.0, 8.0))


def test_box_domain_validation():
    with pytest.raises(ValueError):
        BoxDomain((0.0,), (0.0,))
    with pytest.raises(ValueError):
        BoxDomain((0.0,) * 5, (1.0,) * 5)
    assert BoxDomain.cube(-1, 1, 3).dim == 3


def test_grid_invariants():
    with pytest.raises(ValueError):
        GridDensity(LINE, np.ones(7))
    with pytest.raises(ValueError):
        GridDensity(LINE, -np.ones(16))
    with pytest.raises(ValueError):
        GridDensity(LINE, np.full(16, np.nan))
    g = GridDensity(LINE, np.ones(16))
    assert abs(g.mass - quadrature_integral(g)) <= 1e-12 * g.mass
    with pytest.raises(ValueError):
        g.values[0] = 2.0


def test_quadrature_examples():
    g = tabulate(lambda P: np.exp(-P[..., 0] ** 2 / 2), res=512)
    assert abs(quadrature_integral(g) - math.sqrt(2 * math.pi)) < 1e-6
    one = GridDensity(BoxDomain((0.0,), (1.0,)), np.ones(9))
    assert quadrature_integral(one) == 1.0
    g2 = grid_from_function(lambda P: np.exp(-np.sum(P * P, -1) / 2), SQUARE, 161)
    assert abs(quadrature_integral(g2) - 2 * math.pi) < 1e-5


@pytest.mark.parametrize("n", [8, 9, 10, 11, 64, 65])
def test_simpson_exact_for_cubics(n):
    c = simpson_coefficients(n)
    x = np.linspace(0, 1, n)
    w = c / 24 / (n - 1)
    for k in range(4):
        assert abs(w @ x ** k - 1 / (k + 1)) < 1e-14


def test_interval_weights_exact_for_cubics():
    w = interval_weights(0.0, 0.1, 21, 0.37, 1.81)
    x = np.linspace(0, 2, 21)
    for k in range(4):
        exact = (1.81 ** (k + 1) - 0.37 ** (k + 1)) / (k + 1)
        assert abs(w @ x ** k - exact) < 1e-12


def test_discretize_examples():
    g = discretize(MeasureSpec(parse("x1^2/2", 1), kind="potential"), LINE, 512)
    assert abs(g.mass - math.sqrt(2 * math.pi)) < 1e-6
    q = discretize(MeasureSpec(parse("1", 1), reference=GAUSSIAN), LINE, 321)
    assert abs(q.mass - 1) < 1e-8
    sq = discretize(MeasureSpec(parse("normsq(x)", 2), kind="potential"), BoxDomain.cube(-6, 6, 2), 161)
    assert abs(sq.mass - math.pi) < 1e-5
    assert g.meta["truncated_mass_estimate"] < 1e-10


def test_discretize_reports_domain_error_location():
    with pytest.raises(DomainError) as info:
        discretize(MeasureSpec(parse("log(x1)", 1)), BoxDomain((-1.0,), (1.0,)), 9)
    assert info.value.point is not None


def test_richardson_ratio_of_discretisation():
    errs = []
    for n in (33, 65, 129):
        g = discretize(MeasureSpec(parse("exp(0-x1^2)*(2+x1)", 1)), BoxDomain((-1.0,), (1.5,)), n)
        errs.append(g.mass)
    from scipy.integrate import quad
    exact = quad(lambda x: math.exp(-x * x) * (2 + x), -1, 1.5, epsabs=1e-14)[0]
    e = [abs(m - exact) for m in errs]
    assert e[0] / e[1] >= 3 and e[1] / e[2] >= 3


def test_weight_by_convex_examples(std_normal):
    out = weight_by_convex(std_normal, parse("x1^2/2", 1))
    x = out.points()[..., 0]
    np.testing.assert_allclose(out.values, np.exp(-x * x) / math.sqrt(2 * math.pi), rtol=1e-12)
    assert check_logconcave(out).passed
    same = weight_by_convex(std_normal, parse("0", 1))
    np.testing.assert_array_equal(same.values, std_normal.values)
    assert check_logconcave(weight_by_convex(std_normal, parse("abs(x1)", 1))).passed


@pytest.mark.parametrize("rho,F", [
    ("exp(0-x1^2/2)", "x1^2"),
    ("exp(0-abs(x1))", "exp(x1)"),
    ("exp(0-x1^4)", "max(x1, 0)"),
    ("exp(0-normsq(x)/2)", "abs(x1 - x2)"),
    ("exp(0-abs(x1)-abs(x2))", "normsq(x) + x1"),
    ("exp(0-sqrt(1+normsq(x)))", "exp(x2)/4"),
])
def test_weight_preserves_logconcavity(rho, F):
    dim = 2 if "x2" in rho + F or "normsq" in rho else 1
    dom = BoxDomain.cube(-5, 5, dim)
    g = discretize(MeasureSpec(parse(rho, dim)), dom, 101 if dim == 1 else 61)
    assert check_logconcave(g).passed
    assert check_logconcave(weight_by_convex(g, parse(F, dim))).passed


def test_weight_overflow_is_signalled(std_normal):
    with pytest.raises(DomainError):
        weight_by_convex(std_normal, parse("0-exp(x1^2)", 1))


def test_product_measure(std_normal):
    p = product_measure(std_normal, std_normal)
    assert p.dim == 2 and abs(p.mass - 1) < 1e-8
    assert abs(p.mass - std_normal.mass ** 2) <= 1e-10 * p.mass
    unit = GridDensity(BoxDomain((0.0,), (1.0,)), np.ones(11))
    sq = product_measure(unit, unit)
    np.testing.assert_array_equal(sq.values, np.ones((11, 11)))
    assert check_logconcave(p).passed
    with pytest.raises(ValueError):
        product_measure(p, product_measure(std_normal, p))


def _gauss2(res=129, dom=SQUARE):
    return grid_from_function(lambda P: np.exp(-np.sum(P * P, -1) / 2) / (2 * math.pi), dom, res)


def test_pushforward_rotation():
    g = _gauss2(97)
    th = 0.4
    R = [[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]]
    out = linear_pushforward(g, R, SQUARE)
    assert abs(out.mass / g.mass - 1) < 1e-6
    # the splat smooths by about one cell; compare within a two-cell smoothing tolerance
    h = float(g.spacing[0])
    assert np.max(np.abs(out.values - g.values)) < 2 * h * h * g.values.max()


def test_pushforward_projection_and_sum():
    g = _gauss2(161)
    proj = linear_pushforward(g, [[1.0, 0.0]], LINE, 161)
    x = proj.points()[..., 0]
    assert np.max(np.abs(proj.values - normal_pdf(x))) < 1e-3
    s = linear_pushforward(g, [[1.0, 1.0]], BoxDomain((-16.0,), (16.0,)), 321)
    y = s.points()[..., 0]
    assert np.max(np.abs(s.values - normal_pdf(y, var=2.0))) < 1e-3
    assert check_logconcave(s).passed


def test_pushforward_errors_and_mass_warning():
    g = _gauss2(33)
    with pytest.raises(ValueError):
        linear_pushforward(g, [[1.0, 1.0], [2.0, 2.0]], SQUARE)
    with pytest.warns(UserWarning):
        linear_pushforward(g, [[1.0, 0.0]], BoxDomain((0.0,), (8.0,)))


def _trapezoid_mass(g):
    out = g.values
    for w in reversed(g.trapezoid_weights()):
        out = out @ w
    return float(out)


@pytest.mark.parametrize("method", ["multilinear", "kernel"])
@given(a=st.floats(-1.5, 1.5), b=st.floats(0.3, 2.0), c=st.floats(-1.0, 1.0))
def test_pushforward_conserves_mass(method, a, b, c):
    # splatting conserves the node-volume (trapezoid) mass exactly
    g = _gauss2(41, BoxDomain.cube(-6, 6, 2))
    out = linear_pushforward(g, [[b, a], [0.0, 1.0 + abs(c)]], BoxDomain.cube(-40, 40, 2), 81, method=method)
    assert abs(out.meta["lost_mass"]) <= 1e-12
    assert abs(_trapezoid_mass(out) - out.meta["source_mass"]) <= 1e-12
    assert abs(out.meta["source_mass"] - g.mass) <= 1e-6 * g.mass


ROT = [[math.cos(0.4), -math.sin(0.4)], [math.sin(0.4), math.cos(0.4)]]
LC_SOURCES = {
    "gauss": lambda P: np.exp(-np.sum(P * P, -1) / 2),
    "uniform": lambda P: (np.abs(P).max(-1) <= 2).astype(float),
    "laplace": lambda P: np.exp(-np.abs(P).sum(-1)),
    "quartic": lambda P: np.exp(-(P[..., 0] ** 4 / 4 + P[..., 0] ** 2 / 2 + P[..., 1] ** 2 / 2
                                  + np.abs(P[..., 1] - 0.5) + P[..., 0] * P[..., 1] / 3)),
}
INCOMMENSURATE = [
    ([[1.0, 1.0]], BoxDomain((-12.0,), (12.0,)), 301),
    ([[0.7, 0.3]], BoxDomain((-6.0,), (6.0,)), 241),
    (ROT, BoxDomain.cube(-6, 6, 2), 121),
    ([[1.0, 2.0], [0.0, 1.0]], BoxDomain((-15.0, -6.0), (15.0, 6.0)), (151, 61)),
]


@pytest.mark.parametrize("name", sorted(LC_SOURCES))
@pytest.mark.parametrize("case", range(len(INCOMMENSURATE)))
def test_kernel_pushforward_stays_logconcave(name, case):
    g = grid_from_function(LC_SOURCES[name], BoxDomain.cube(-6, 6, 2), 97)
    assert check_logconcave(g).passed
    F, dom, res = INCOMMENSURATE[case]
    out = linear_pushforward(g, F, dom, res)
    assert out.meta["method"] == "kernel"
    rep = check_logconcave(out, tol=1e-6)
    assert rep.passed, rep.witness


def test_multilinear_splat_aliases_on_incommensurate_grid():
    # the reason the kernel deposit exists: percent-level ripple
    g = _gauss2(97)
    F, dom = [[1.0, 1.0]], BoxDomain((-16.0,), (16.0,))
    lin = linear_pushforward(g, F, dom, 321, method="multilinear")
    y = lin.points()[..., 0]
    ripple = np.max(np.abs(lin.values / normal_pdf(y, var=2.0) - 1)[np.abs(y) < 2])
    assert ripple > 1e-2
    assert not check_logconcave(lin, tol=1e-6).passed
    ker = linear_pushforward(g, F, dom, 321)
    v = 2.0 + ker.meta["kernel_variance"][0]
    assert np.max(np.abs(ker.values - normal_pdf(y, var=v))) < 1e-8
    with pytest.raises(ValueError):
        linear_pushforward(g, F, dom, 321, method="nearest")


def test_pushforward_simpson_mass_on_resolved_grid():
    g = _gauss2(65, BoxDomain.cube(-7, 7, 2))
    out = linear_pushforward(g, [[1.2, 0.5], [0.0, 0.8]], BoxDomain.cube(-14, 14, 2), 129)
    assert abs(out.mass - g.mass) <= 1e-6 * g.mass


def test_serialisation_round_trip():
    g = _gauss2(17)
    for back in (GridFunction.from_bytes(g.to_bytes()), GridFunction.from_json(g.to_json())):
        assert back.domain == g.domain
        np.testing.assert_array_equal(back.values, g.values)
    blob = g.to_bytes()
    assert int.from_bytes(blob[:8], "little") == 2
    with pytest.raises(ValueError):
        GridFunction.from_bytes(blob[:-8])


def test_sample_modes():
    g = GridDensity(BoxDomain((0.0,), (7.0,)), np.exp(-np.arange(8.0)))
    assert abs(g.sample([[2.5]])[0] - (math.exp(-2) + math.exp(-3)) / 2) < 1e-15
    assert abs(g.sample([[2.5]], mode="log")[0] - math.exp(-2.5)) < 1e-15
    assert g.sample([[2.5]], mode="upper")[0] == math.exp(-2)
    assert g.sample([[2.5]], mode="lower")[0] == math.exp(-3)
    assert g.sample([[9.0]])[0] == 0.0
