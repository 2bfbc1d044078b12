import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import ndtr

from conftest import normal_pdf, tabulate
from logconcave.checks import check_logconcave
from logconcave.expr import parse
from logconcave.grid import BoxDomain, GridDensity, MeasureSpec, grid_from_function, product_measure
from logconcave.transport import (
    cdf, gaussian_transport, lipschitz_estimate, lsi_sides, monge_map, quantile,
    transport_jacobian_identity, verify_lsi,
)

LINE = BoxDomain((-8.0,), (8.0,))
UNIT = BoxDomain((0.0,), (1.0,))


def test_cdf_examples(std_normal):
    F = cdf(std_normal)
    assert abs(F(0.0) - 0.5) < 1e-6
    assert abs(F(1.0) - 0.841345) < 1e-5
    assert abs(F(1.0) - ndtr(1.0)) < 1e-6
    U = cdf(tabulate(lambda P: np.ones(P.shape[:-1]), UNIT, 101))
    x = np.linspace(0, 1, 37)
    assert np.max(np.abs(U(x) - x)) < 1e-8
    with pytest.raises(ValueError):
        cdf(tabulate(lambda P: 0 * P[..., 0]))


def test_quantile_examples(std_normal):
    F = cdf(std_normal)
    assert abs(quantile(F, 0.5)) < 1e-6
    assert abs(quantile(F, 0.841345) - 1.0) < 1e-4
    U = cdf(tabulate(lambda P: np.ones(P.shape[:-1]), UNIT, 101))
    assert abs(quantile(U, 0.25) - 0.25) < 1e-8
    for p in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            quantile(F, p)


def test_quantile_flat_run_midpoint():
    g = tabulate(lambda P: ((np.abs(P[..., 0]) >= 1) & (np.abs(P[..., 0]) <= 2)).astype(float), LINE, 321)
    assert abs(quantile(cdf(g), 0.5)) < 1e-9


@given(st.floats(1e-4, 1 - 1e-4))
def test_quantile_inverts_cdf(p):
    F = cdf(tabulate(lambda P: normal_pdf(P[..., 0], 0.7, 2.0)))
    assert abs(F(quantile(F, p)) - p) < 1e-9


def _normal(m=0.0, var=1.0, dom=LINE, res=1601):
    return tabulate(lambda P: normal_pdf(P[..., 0], m, var), dom, res)


def test_monge_map_examples():
    src = _normal()
    T = monge_map(src, _normal(0.8))
    w = T.window(0.01, 0.99)
    assert np.max(np.abs(T.T[w] - (T.x[w] + 0.8))) < 1e-5
    T = monge_map(src, _normal(0, 0.36))
    assert np.max(np.abs(T.T[w] - 0.6 * T.x[w])) < 1e-4
    dom = BoxDomain((0.0,), (12.0,))
    u = tabulate(lambda P: np.ones(P.shape[:-1]), UNIT, 1001)
    e = tabulate(lambda P: np.exp(-P[..., 0]), dom, 4801)
    T = monge_map(u, e)
    w = T.window(0.01, 0.99)
    exact = -np.log1p(-T.x[w] * (1 - math.exp(-12)))
    assert np.max(np.abs(T.T[w] - exact)) < 1e-3


TARGETS = [
    lambda x: normal_pdf(x, 1.3, 0.5),
    lambda x: np.exp(-np.abs(x - 0.5)),
    lambda x: np.exp(-x ** 2 / 2 - x ** 4),
    lambda x: ((x >= -1) & (x <= 2.5)).astype(float),
    lambda x: np.exp(-np.maximum(x, -3 * x)),
]


@pytest.mark.parametrize("k", range(len(TARGETS)))
def test_monge_map_pushforward_and_monotone(k):
    T = monge_map(_normal(), tabulate(lambda P: TARGETS[k](P[..., 0]), LINE, 1601))
    assert T.pushforward_error < 1e-5
    assert np.all(np.diff(T.T) >= 0) and np.all(T.dT >= 0)


def test_disconnected_target_is_flagged():
    g = tabulate(lambda P: ((np.abs(P[..., 0]) >= 1) & (np.abs(P[..., 0]) <= 2)).astype(float), LINE, 321)
    T = monge_map(_normal(res=321), g)
    assert any("disconnected" in n for n in T.notes)


def test_transport_csv():
    T = monge_map(_normal(res=33), _normal(res=33))
    lines = T.to_csv().splitlines()
    assert lines[0] == "x,T" and len(lines) == 34


def test_lipschitz_examples():
    src = _normal()
    assert abs(lipschitz_estimate(monge_map(src, _normal(0, 0.36))) - 0.6) < 0.01
    assert abs(lipschitz_estimate(monge_map(src, src)) - 1.0) < 1e-6
    quartic = tabulate(lambda P: np.exp(-P[..., 0] ** 2 / 2 - P[..., 0] ** 4), LINE, 1601)
    assert lipschitz_estimate(monge_map(src, quartic)) <= 1.01
    with pytest.raises(ValueError):
        lipschitz_estimate(monge_map(src, src), (0.5, 0.5001))


# relative densities q (log-concave) with respect to mu_alpha = N(0, 1/alpha)
CAFFARELLI = [
    (1.0, lambda x: np.exp(-x ** 4)),
    (1.0, lambda x: np.exp(x)),
    (2.0, lambda x: ((x >= -0.5) & (x <= 1.5)).astype(float)),
    (0.5, lambda x: np.exp(-np.abs(x - 1))),
    (4.0, lambda x: np.exp(-np.sqrt(1 + x * x) - 0.3 * x)),
]


@pytest.mark.parametrize("k", range(len(CAFFARELLI)))
def test_caffarelli_contraction(k):
    alpha, q = CAFFARELLI[k]
    src = _normal(0, 1 / alpha)
    qg = tabulate(lambda P: q(P[..., 0]), LINE, 1601)
    assert check_logconcave(qg).passed
    tgt = GridDensity(LINE, np.asarray(qg.values) * np.asarray(src.values))
    assert lipschitz_estimate(monge_map(src, tgt), (0.05, 0.95)) <= 1.01


def test_jacobian_identity_examples():
    one = gaussian_transport(parse("1", 1))
    assert np.max(np.abs(one.T - one.x)[one.window(0.01, 0.99)]) < 1e-6
    assert transport_jacobian_identity(parse("1", 1), one).passed
    ratio = parse("exp(0-x1^2/(2*0.36) + x1^2/2)/0.6", 1)
    rep = transport_jacobian_identity(ratio, gaussian_transport(ratio), tol=1e-4)
    assert rep.passed and rep.details["sup_deviation"] < 1e-4
    quartic = parse("exp(0-x1^4)", 1)
    rep = transport_jacobian_identity(quartic, gaussian_transport(quartic), tol=1e-3)
    assert rep.passed


def test_jacobian_identity_detects_wrong_map():
    quartic = parse("exp(0-x1^4)", 1)
    wrong = gaussian_transport(parse("exp(0-x1^2)", 1))
    assert transport_jacobian_identity(quartic, wrong, tol=1e-3).failed


# ---------------------------------------------------------------------------
# log-Sobolev
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("t", [0.4, 0.8, 1.2])
def test_lsi_gaussian_equality(t):
    rho = MeasureSpec(parse("x1^2/2", 1), kind="potential", declared_alpha=1.0)
    f = parse(f"exp({t}*x1/2)", 1)
    rep = verify_lsi(rho, [f], dom=LINE)[0]
    assert abs(rep.details["lhs"] - t * t / 2) < 1e-4
    assert abs(rep.details["rhs"] - t * t / 2) < 1e-4
    assert rep.passed


def test_lsi_constant_and_capped_bump():
    rho = MeasureSpec(parse("x1^2/2", 1), kind="potential", declared_alpha=1.0)
    rep = verify_lsi(rho, [parse("3", 1)], dom=LINE)[0]
    assert abs(rep.details["lhs"]) < 1e-12 and abs(rep.details["rhs"]) < 1e-12
    half = MeasureSpec(parse("x1^2", 1), kind="potential", declared_alpha=2.0)
    bump = parse("1 + 0.3*max(0-1, min(1, x1 - x1^3/8))", 1)
    rep = verify_lsi(half, [bump], dom=LINE)[0]
    assert rep.passed and rep.worst_margin >= 0


LSI_MEASURES = [
    ("x1^2/2", 1.0), ("x1^2", 2.0), ("x1^2/2 + x1^4", 1.0),
    ("x1^2 + sqrt(1 + x1^2)", 2.0), ("3*x1^2/2 + exp(x1)/10", 3.0),
]
LSI_FUNCTIONS = [
    "1 + 0.3*x1", "x1", "exp(0.5*x1)", "1 + x1^2", "sqrt(1 + x1^2)",
    "x1 - x1^3/8", "exp(0-x1^2)", "2 + x1/sqrt(1 + x1^2)", "abs(x1) + 1", "exp(x1/3)*(1 + x1^2)",
]


@pytest.mark.parametrize("V,alpha", LSI_MEASURES)
def test_lsi_family(V, alpha):
    rho = MeasureSpec(parse(V, 1), kind="potential", declared_alpha=alpha)
    reps = verify_lsi(rho, [parse(f, 1) for f in LSI_FUNCTIONS], dom=LINE)
    assert len(reps) == 10
    for f, rep in zip(LSI_FUNCTIONS, reps):
        assert rep.worst_margin >= -1e-6, f


def test_lsi_rejects_uncertified_alpha():
    rho = MeasureSpec(parse("x1^2/2", 1), kind="potential", declared_alpha=1.5)
    rep = verify_lsi(rho, [parse("x1", 1)], dom=LINE)[0]
    assert rep.failed and rep.precondition_failed


@given(st.floats(0.01, 100))
def test_lsi_is_scale_invariant(c):
    rho = tabulate(lambda P: normal_pdf(P[..., 0], 0, 0.5), LINE, 801)
    f = parse("1 + x1 + x1^2/3", 1)
    g = parse(f"{c!r}*(1 + x1 + x1^2/3)", 1)
    a, b = lsi_sides(rho, f, 2.0), lsi_sides(rho, g, 2.0)
    assert abs((a["rhs"] - a["lhs"]) - (b["rhs"] - b["lhs"])) < 1e-10


def test_lsi_tensorizes():
    d1 = grid_from_function(lambda P: normal_pdf(P[..., 0]), BoxDomain((-7.0,), (7.0,)), 141)
    d2 = grid_from_function(lambda P: normal_pdf(P[..., 0], 0, 0.5) * np.exp(-P[..., 0] ** 4 / 4),
                            BoxDomain((-7.0,), (7.0,)), 141)
    rho = product_measure(d1, d2)
    fs = [parse("exp(0.4*x1)", 2), parse("1 + x2 - x2^3/8", 2), parse("sqrt(1 + x1^2)", 2)]
    for rep in verify_lsi(rho, fs, alpha=min(1.0, 2.0)):
        assert rep.passed and not rep.precondition_failed
