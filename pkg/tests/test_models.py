import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphscale.errors import DomainError
from graphscale.models import (
    ParamSet,
    ScalingForm,
    eval_basic_error,
    eval_combined_error,
    eval_combined_score,
    eval_shifted_error,
    eval_shifted_score,
    evaluate,
    grad_params,
)

from oracles import mp_central_diff, mp_model

S = ScalingForm


# -- evaluation examples ----------------------------------------------------


def test_basic_error_zero_amplitude():
    p = ParamSet.relaxed(S.BASIC_ERROR, a=0.0, b=1.0, eps_inf=0.1)
    assert eval_basic_error(123.0, p) == pytest.approx(0.1, abs=1e-15)


def test_basic_error_arithmetic():
    p = ParamSet.of(S.BASIC_ERROR, a=1.0, b=0.5, eps_inf=0.1)
    assert eval_basic_error(4.0, p) == pytest.approx(0.6, rel=1e-14)


def test_basic_error_asymptote():
    p = ParamSet.of(S.BASIC_ERROR, a=2.0, b=0.35, eps_inf=0.05)
    assert abs(eval_basic_error(1e12, p) - 0.05) < 1e-3


@pytest.mark.parametrize("x", [0.0, -1.0])
def test_basic_error_rejects_nonpositive(x):
    p = ParamSet.of(S.BASIC_ERROR, a=1.0, b=0.5, eps_inf=0.1)
    with pytest.raises(DomainError):
        eval_basic_error(x, p)


def test_shifted_error_examples():
    assert eval_shifted_error(0.0, ParamSet.of(S.SHIFTED_ERROR, a=1, b=1, c=1, eps_inf=0)) == 1.0
    p = ParamSet.of(S.SHIFTED_ERROR, a=2.0, b=0.5, c=2.0, eps_inf=0.1)
    assert eval_shifted_error(14.0, p) == pytest.approx(0.6, rel=1e-14)
    assert abs(eval_shifted_error(1e12, p) - 0.1) < 1e-3


def test_shifted_error_rejects_negative_input():
    with pytest.raises(DomainError):
        eval_shifted_error(-0.5, ParamSet.of(S.SHIFTED_ERROR, a=1, b=1, c=1, eps_inf=0))


def test_shifted_score_examples():
    p = ParamSet.of(S.SHIFTED_SCORE, a=0.5, b=1.0, c=1.0, s_inf=1.0)
    assert eval_shifted_score(0.0, p) == pytest.approx(0.5, rel=1e-15)
    p = ParamSet.of(S.SHIFTED_SCORE, a=0.5, b=0.35, c=5.0, s_inf=0.9)
    assert abs(eval_shifted_score(1e12, p) - 0.9) < 1e-3


def test_combined_error_examples():
    p = ParamSet.of(S.COMBINED_ERROR, a1=1, b1=1, a2=1, b2=1, eps_inf=0.1)
    assert eval_combined_error(1.0, 1.0, p) == pytest.approx(2.1, rel=1e-15)
    p = ParamSet.of(S.COMBINED_ERROR, a1=2, b1=0.5, a2=3, b2=0.5, eps_inf=0.0)
    assert eval_combined_error(4.0, 9.0, p) == pytest.approx(2.0, rel=1e-15)
    p = ParamSet.of(S.COMBINED_ERROR, a1=2, b1=0.5, a2=3, b2=0.5, eps_inf=0.07)
    assert abs(eval_combined_error(1e30, 1e30, p) - 0.07) < 1e-12


def test_combined_error_rejects_zero():
    p = ParamSet.of(S.COMBINED_ERROR, a1=1, b1=1, a2=1, b2=1, eps_inf=0.1)
    with pytest.raises(DomainError):
        eval_combined_error(0.0, 1.0, p)
    with pytest.raises(DomainError):
        eval_combined_error(1.0, 0.0, p)


def test_combined_score_examples():
    p = ParamSet.of(S.COMBINED_SCORE, a1=0.2, b1=1, c1=1, a2=0.3, b2=1, c2=1, s_inf=1.0)
    assert eval_combined_score(0.0, 0.0, p) == pytest.approx(0.5, rel=1e-15)
    p = ParamSet.of(S.COMBINED_SCORE, a1=0.2, b1=0.5, c1=1, a2=0.3, b2=0.5, c2=1, s_inf=0.8)
    assert abs(eval_combined_score(1e30, 1e30, p) - 0.8) < 1e-12


def test_combined_score_vectorised_grid():
    p = ParamSet.of(S.COMBINED_SCORE, a1=0.2, b1=1, c1=1, a2=0.3, b2=1, c2=1, s_inf=1.0)
    d, n = np.meshgrid([0.0, 1.0, 3.0], [0.0, 4.0])
    out = eval_combined_score(d, n, p)
    expected = 1 - 0.2 / (d.ravel() + 1) - 0.3 / (n.ravel() + 1)
    np.testing.assert_allclose(out, expected, rtol=1e-14)


# -- parameter sets -----------------------------------------------------------


@pytest.mark.parametrize(
    "form,params",
    [
        (S.BASIC_ERROR, dict(a=0.0, b=1.0, eps_inf=0.1)),
        (S.BASIC_ERROR, dict(a=1.0, b=0.0, eps_inf=0.1)),
        (S.BASIC_ERROR, dict(a=1.0, b=1.0, eps_inf=-0.1)),
        (S.SHIFTED_ERROR, dict(a=1.0, b=1.0, c=0.0, eps_inf=0.1)),
        (S.SHIFTED_SCORE, dict(a=1.0, b=1.0, c=1.0, s_inf=1.01)),
        (S.SHIFTED_SCORE, dict(a=1.0, b=1.0, c=1.0, s_inf=0.0)),
        (S.COMBINED_SCORE, dict(a1=1, b1=1, c1=1, a2=1, b2=1, c2=-1, s_inf=0.5)),
        (S.SHIFTED_ERROR, dict(a=float("nan"), b=1.0, c=1.0, eps_inf=0.1)),
    ],
)
def test_constructor_rejects_domain_violations(form, params):
    with pytest.raises(DomainError):
        ParamSet.of(form, **params)


def test_relaxed_constructor_still_rejects_negative():
    ParamSet.relaxed(S.BASIC_ERROR, a=0.0, b=0.0, eps_inf=0.0)
    with pytest.raises(DomainError):
        ParamSet.relaxed(S.BASIC_ERROR, a=-1.0, b=0.0, eps_inf=0.0)


def test_paramset_named_access():
    p = ParamSet.of(S.SHIFTED_SCORE, a=0.5, b=0.3, c=2.0, s_inf=0.9)
    assert p.names == ("a", "b", "c", "s_inf")
    assert p.c == 2.0 and p["s_inf"] == 0.9
    assert p.as_dict() == {"a": 0.5, "b": 0.3, "c": 2.0, "s_inf": 0.9}
    assert p.replace(c=3.0).c == 3.0
    with pytest.raises(DomainError):
        ParamSet(S.SHIFTED_SCORE, (1.0, 2.0))


def test_form_metadata():
    assert [f.n_params for f in S] == [3, 4, 4, 5, 7]
    assert [f.n_inputs for f in S] == [1, 1, 1, 2, 2]
    assert S.parse("shifted_score") is S.SHIFTED_SCORE
    assert S.COMBINED_SCORE.metric_kind == "score"
    assert S.COMBINED_ERROR.metric_kind == "error"


# -- gradients ---------------------------------------------------------------


def test_gradient_examples():
    p = ParamSet.of(S.SHIFTED_ERROR, a=1, b=1, c=1, eps_inf=0)
    g = grad_params(S.SHIFTED_ERROR, 0.0, p)
    assert g[3] == 1.0
    assert g[0] == pytest.approx(1.0, rel=1e-15)
    g = grad_params(S.SHIFTED_ERROR, [0.0, 10.0, 1e6], p)
    assert np.all(g[:, 3] == 1.0)


def _random_point(form, rng):
    names = form.param_names
    theta = []
    for n in names:
        if n.startswith("a"):
            theta.append(rng.uniform(0.05, 5.0))
        elif n.startswith("b"):
            theta.append(rng.uniform(0.05, 1.5))
        elif n.startswith("c"):
            theta.append(10 ** rng.uniform(-1, 3))
        elif n == "eps_inf":
            theta.append(rng.uniform(0.0, 0.5))
        else:
            theta.append(rng.uniform(0.5, 1.0))
    lo = -2 if form.allows_zero_input else -1
    if form.is_combined:
        x = [10 ** rng.uniform(lo, 6), 10 ** rng.uniform(lo, 6)]
    else:
        x = 10 ** rng.uniform(lo, 6)
    return theta, x


@pytest.mark.parametrize("form", list(S))
def test_gradient_matches_finite_differences(form):
    rng = np.random.default_rng(1234 + list(S).index(form))
    for _ in range(200):
        theta, x = _random_point(form, rng)
        g = grad_params(form, x, theta)
        for i in range(form.n_params):
            fd = mp_central_diff(form, x, theta, i)
            assert abs(g[i] - fd) <= 1e-5 * abs(fd), (form, theta, x, i, g[i], fd)


@pytest.mark.parametrize("form", list(S))
def test_values_match_extended_precision(form):
    rng = np.random.default_rng(99 + list(S).index(form))
    for _ in range(200):
        theta, x = _random_point(form, rng)
        assert evaluate(form, x, theta) == pytest.approx(float(mp_model(form, x, theta)), rel=1e-13)


# -- invariants --------------------------------------------------------------

positive = st.floats(0.05, 5.0)
exponent = st.floats(0.05, 2.0)
shift = st.floats(0.1, 1e3)


@settings(max_examples=200, deadline=None)
@given(a=positive, b=exponent, c=shift, eps=st.floats(0.0, 0.5), xs=st.lists(st.floats(0.0, 1e8), min_size=2, max_size=20))
def test_shifted_monotone_bounded_and_dual(a, b, c, eps, xs):
    x = np.unique(np.array(xs))
    err = eval_shifted_error(x, ParamSet.of(S.SHIFTED_ERROR, a=a, b=b, c=c, eps_inf=eps))
    score = eval_shifted_score(x, ParamSet.of(S.SHIFTED_SCORE, a=a, b=b, c=c, s_inf=1 - eps))
    assert np.all(err >= eps)
    assert np.all(score <= 1 - eps)
    assert np.all(np.diff(err) <= 0)
    assert np.all(np.diff(score) >= 0)
    np.testing.assert_allclose(err + score, 1.0, rtol=0, atol=1e-12)


def test_strict_monotonicity_on_sorted_grid():
    rng = np.random.default_rng(7)
    x = np.geomspace(1.0, 1e4, 50)
    for _ in range(100):
        a, b, c = rng.uniform(0.1, 2), rng.uniform(0.1, 1.0), rng.uniform(0.5, 10)
        e = eval_basic_error(x, ParamSet.of(S.BASIC_ERROR, a=a, b=b, eps_inf=0.1))
        s = eval_shifted_score(x, ParamSet.of(S.SHIFTED_SCORE, a=a, b=b, c=c, s_inf=0.9))
        assert np.all(np.diff(e) < 0) and np.all(np.diff(s) > 0)


def test_combined_monotone_in_each_argument():
    p = ParamSet.of(S.COMBINED_ERROR, a1=1.0, b1=0.5, a2=0.8, b2=0.4, eps_inf=0.1)
    q = ParamSet.of(S.COMBINED_SCORE, a1=0.2, b1=0.7, c1=2, a2=0.3, b2=0.4, c2=1, s_inf=0.9)
    grid = np.geomspace(1, 1e5, 30)
    for fixed in (1.0, 100.0, 1e4):
        assert np.all(np.diff(eval_combined_error(grid, fixed, p)) < 0)
        assert np.all(np.diff(eval_combined_error(fixed, grid, p)) < 0)
        assert np.all(np.diff(eval_combined_score(grid, fixed, q)) > 0)
        assert np.all(np.diff(eval_combined_score(fixed, grid, q)) > 0)
        assert np.all(eval_combined_score(grid, fixed, q) <= 0.9)
        assert np.all(eval_combined_error(grid, fixed, p) >= 0.1)


@settings(max_examples=100, deadline=None)
@given(a=positive, b=exponent, c=shift, s=st.floats(0.1, 1.0), d=st.floats(0.0, 1e6), n=st.floats(0.0, 1e6))
def test_degenerate_reduction(a, b, c, s, d, n):
    cs = ParamSet.relaxed(S.COMBINED_SCORE, a1=a, b1=b, c1=c, a2=0.0, b2=0.5, c2=1.0, s_inf=s)
    ss = ParamSet.of(S.SHIFTED_SCORE, a=a, b=b, c=c, s_inf=s)
    assert eval_combined_score(d, n, cs) == eval_shifted_score(d, ss)
    ce = ParamSet.relaxed(S.COMBINED_ERROR, a1=a, b1=b, a2=0.0, b2=0.5, eps_inf=1 - s)
    be = ParamSet.of(S.BASIC_ERROR, a=a, b=b, eps_inf=1 - s)
    assert eval_combined_error(d + 1, n + 1, ce) == eval_basic_error(d + 1, be)


def test_power_term_uses_exp_log():
    # a * exp(-b * log(x + c)) reproduced bit for bit
    p = ParamSet.of(S.SHIFTED_ERROR, a=2.0, b=0.35, c=5.0, eps_inf=0.05)
    x = 12345.678
    assert eval_shifted_error(x, p) == 2.0 * math.exp(-0.35 * math.log(x + 5.0)) + 0.05
