import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sscsr import losses
from sscsr.errors import ConfigError, DegenerateInputError, ShapeError
from sscsr.losses import Form, LossParams

LN2 = math.log(2)


def _ref_scaled_ce(t, p, alpha):
    # plain-Python oracle, term by term
    total = 0.0
    for tk, pk in zip(t, p):
        pk = min(max(pk, losses.EPS), 1.0)
        total -= (1.0 - tk) ** alpha * tk * math.log(pk)
    return total


@st.composite
def simplex(draw, c=None):
    c = c or draw(st.integers(2, 12))
    w = draw(arrays(np.float64, c, elements=st.floats(0.0, 10.0)))
    if w.sum() == 0:
        w[0] = 1.0
    return w / w.sum()


@st.composite
def simplex_pair(draw):
    c = draw(st.integers(2, 12))
    return draw(simplex(c)), draw(simplex(c))


# reference values ----------------------------------------------------------


def test_cross_entropy_values():
    assert losses.cross_entropy([1, 0], [1, 0]) == 0
    assert losses.cross_entropy([0.5, 0.5], [0.5, 0.5]) == pytest.approx(LN2, abs=1e-12)
    assert losses.cross_entropy([1, 0], [0.5, 0.5]) == pytest.approx(LN2, abs=1e-12)


def test_kl_values():
    p = np.array([0.3, 0.2, 0.5])
    assert losses.kl_div(p, p) == pytest.approx(0, abs=1e-15)
    assert losses.kl_div([1, 0], [0.5, 0.5]) == pytest.approx(LN2, abs=1e-12)
    a = losses.kl_div([0.9, 0.1], [0.5, 0.5])
    b = losses.kl_div([0.5, 0.5], [0.9, 0.1])
    assert a == pytest.approx(0.9 * math.log(1.8) + 0.1 * math.log(0.2), abs=1e-12)
    assert abs(a - b) > 0.1


def test_mse_values():
    assert losses.mse_consistency([0.3, 0.7], [0.3, 0.7]) == 0
    assert losses.mse_consistency([1, 0], [0, 1]) == pytest.approx(2)
    assert losses.mse_consistency([0.75, 0.25], [0.25, 0.75]) == pytest.approx(0.5)


def test_scaled_cross_entropy_values():
    u = [0.5, 0.5]
    assert losses.scaled_cross_entropy(u, u, 1.0) == pytest.approx(0.5 * LN2, abs=1e-12)
    assert losses.scaled_cross_entropy([0, 1, 0], [0.2, 0.3, 0.5], 2.0) == 0
    p, q = np.array([0.6, 0.3, 0.1]), np.array([0.2, 0.5, 0.3])
    for a in (0.0, 0.5, 1.0, 3.0):
        assert losses.scaled_cross_entropy(p, q, a) == pytest.approx(_ref_scaled_ce(p, q, a), abs=1e-12)


def test_scaled_cross_entropy_rejects_negative_alpha():
    with pytest.raises(ConfigError):
        losses.scaled_cross_entropy([0.5, 0.5], [0.5, 0.5], -0.1)


def test_swapped_values():
    u = [0.5, 0.5]
    assert losses.swapped_prediction_loss(u, u, 0) == pytest.approx(LN2, abs=1e-12)
    assert losses.swapped_prediction_loss([0, 1], [0, 1], 0) == 0
    p, q = [0.7, 0.2, 0.1], [0.1, 0.1, 0.8]
    expected = (_ref_scaled_ce(p, q, 2) + _ref_scaled_ce(q, p, 2)) / 2
    assert losses.swapped_prediction_loss(p, q, 2) == pytest.approx(expected, abs=1e-12)


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        losses.cross_entropy([0.5, 0.5], [0.2, 0.3, 0.5])
    with pytest.raises(ShapeError):
        losses.mse_consistency([1, 0], [1, 0, 0])


def test_clamp_keeps_log_finite():
    assert np.isfinite(losses.cross_entropy([1, 0], [0, 1]))
    assert losses.cross_entropy([1, 0], [0, 1]) == pytest.approx(-math.log(losses.EPS))


# pseudo labels ------------------------------------------------------------


@pytest.mark.parametrize(
    "p, tau, expected",
    [([0.96, 0.04], 0.95, 0), ([0.7, 0.3], 0.95, None), ([0.5, 0.5], 0.5, 0), ([0.01, 0.99], 0.95, 1)],
)
def test_pseudo_label(p, tau, expected):
    assert losses.pseudo_label(p, tau) == expected


def test_pseudo_labels_batch_matches_single():
    rng = np.random.default_rng(3)
    P = rng.dirichlet(np.full(4, 0.2), size=200)
    batch = losses.pseudo_labels(P, 0.9)
    single = [losses.pseudo_label(p, 0.9) for p in P]
    assert [None if b < 0 else int(b) for b in batch] == single


# batch losses -------------------------------------------------------------


def test_supervised_loss():
    assert losses.supervised_loss(np.eye(3), [0, 1, 2]) == 0
    assert losses.supervised_loss(np.full((1, 4), 0.25), [2]) == pytest.approx(math.log(4))
    P = np.array([[0.7, 0.3], [0.4, 0.6], [0.5, 0.5]])
    y = [0, 0, 1]
    per = [-math.log(0.7), -math.log(0.4), -math.log(0.5)]
    assert losses.supervised_loss(P, y) == pytest.approx(np.mean(per), abs=1e-12)
    with pytest.raises(DegenerateInputError):
        losses.supervised_loss(np.zeros((0, 3)), [])


@pytest.mark.parametrize("form", list(Form))
def test_consistent_one_hot_is_zero(form):
    P = np.eye(4)[[0, 3, 1]]
    assert losses.unsupervised_loss(P, P, form) == pytest.approx(0, abs=1e-12)


def test_pseudo_form_nothing_retained():
    P = np.full((5, 4), 0.25)
    loss, dp, dq, kept = losses.unsupervised_loss_grad(P, P, Form.CE_PSEUDO)
    assert (loss, kept) == (0.0, 0)
    assert not dp.any() and not dq.any()


def test_pseudo_form_mean_over_retained_rows():
    p = np.array([[0.97, 0.03], [0.6, 0.4], [0.02, 0.98]])
    q = np.array([[0.5, 0.5], [0.9, 0.1], [0.25, 0.75]])
    loss, _, _, kept = losses.unsupervised_loss_grad(p, q, Form.CE_PSEUDO, LossParams(tau=0.95))
    assert kept == 2
    assert loss == pytest.approx((math.log(2) - math.log(0.75)) / 2, abs=1e-12)


def test_mse_form_is_lambda_scaled_mean():
    p = np.array([[1.0, 0.0], [0.75, 0.25]])
    q = np.array([[0.0, 1.0], [0.25, 0.75]])
    assert losses.unsupervised_loss(p, q, Form.MSE) == pytest.approx((2 + 0.5) / 2)
    assert losses.unsupervised_loss(p, q, Form.MSE, LossParams(lam=4.0)) == pytest.approx(5.0)


def test_unknown_form():
    with pytest.raises(ConfigError):
        losses.unsupervised_loss(np.eye(2), np.eye(2), "JS")
    assert losses.as_form("swapped") is Form.SWAPPED
    assert losses.as_form(Form.KL) is Form.KL


# properties ---------------------------------------------------------------


@settings(max_examples=300, deadline=None)
@given(simplex_pair())
def test_entropy_decomposition(pq):
    p, q = pq
    assert losses.cross_entropy(p, q) == pytest.approx(losses.entropy(p) + losses.kl_div(p, q), abs=1e-9)


@settings(max_examples=300, deadline=None)
@given(simplex_pair(), st.floats(0, 6))
def test_swapped_symmetry_bit_exact(pq, alpha):
    p, q = pq
    assert losses.swapped_prediction_loss(p, q, alpha) == losses.swapped_prediction_loss(q, p, alpha)


@settings(max_examples=300, deadline=None)
@given(simplex_pair(), st.floats(0, 6))
def test_non_negative(pq, alpha):
    p, q = pq
    for v in (
        losses.cross_entropy(p, q),
        losses.kl_div(p, q),
        losses.mse_consistency(p, q),
        losses.scaled_cross_entropy(p, q, alpha),
        losses.swapped_prediction_loss(p, q, alpha),
    ):
        assert v >= -1e-12


@settings(max_examples=200, deadline=None)
@given(simplex_pair())
def test_alpha_zero_is_cross_entropy(pq):
    p, q = pq
    assert losses.scaled_cross_entropy(p, q, 0.0) == pytest.approx(losses.cross_entropy(p, q), abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(simplex(), st.floats(0, 4), st.floats(0.01, 3))
def test_scaled_ce_decreases_with_alpha(p, a, da):
    assert losses.scaled_cross_entropy(p, p, a + da) <= losses.scaled_cross_entropy(p, p, a) + 1e-12


# gradients ----------------------------------------------------------------


def _central(f, x, h=1e-6):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        g[idx] = (f(xp) - f(xm)) / (2 * h)
    return g


def _interior_pair(rng, b=3, c=5):
    # stay away from the clamp and from the simplex edges
    p = rng.dirichlet(np.ones(c), size=b) * 0.9 + 0.1 / c
    q = rng.dirichlet(np.ones(c), size=b) * 0.9 + 0.1 / c
    return p, q


def _rel_err(a, b):
    return np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8))


@pytest.mark.parametrize("form", [Form.SWAPPED, Form.CE, Form.KL, Form.MSE])
@pytest.mark.parametrize("alpha", [0.0, 2.0])
def test_consistency_grads_match_finite_differences(form, alpha):
    rng = np.random.default_rng(11)
    p, q = _interior_pair(rng)
    params = LossParams(alpha=alpha, lam=0.7, stop_grad_target=False)
    _, dp, dq, _ = losses.unsupervised_loss_grad(p, q, form, params)
    np.testing.assert_array_less(_rel_err(dq, _central(lambda x: losses.unsupervised_loss(p, x, form, params), q)), 1e-4)
    np.testing.assert_array_less(_rel_err(dp, _central(lambda x: losses.unsupervised_loss(x, q, form, params), p)), 1e-4)


def test_pseudo_grad_matches_finite_differences():
    rng = np.random.default_rng(5)
    _, q = _interior_pair(rng, b=4)
    p = np.array([[0.97, 0.01, 0.01, 0.005, 0.005], [0.3, 0.3, 0.2, 0.1, 0.1]] * 2)
    _, _, dq, kept = losses.unsupervised_loss_grad(p, q, Form.CE_PSEUDO)
    assert kept == 2
    num = _central(lambda x: losses.unsupervised_loss(p, x, Form.CE_PSEUDO), q)
    np.testing.assert_array_less(_rel_err(dq, num), 1e-4)


def test_stop_gradient_defaults():
    rng = np.random.default_rng(0)
    p, q = _interior_pair(rng)
    for form, frozen in ((Form.CE, True), (Form.CE_PSEUDO, True), (Form.SWAPPED, False), (Form.KL, False)):
        _, dp, _, _ = losses.unsupervised_loss_grad(p, q, form)
        assert (not dp.any()) == frozen, form


def test_supervised_grad_matches_finite_differences():
    rng = np.random.default_rng(2)
    P, _ = _interior_pair(rng, b=4)
    y = np.array([0, 2, 4, 1])
    _, g = losses.supervised_loss_grad(P, y)
    num = _central(lambda x: losses.supervised_loss(x, y), P)
    np.testing.assert_array_less(_rel_err(g, num), 1e-4)
