import numpy as np
import pytest

from arco_bci import arco
from arco_bci.core import make_order, prefix_encoding
from arco_bci.errors import EmptyRemainingError, WeightMismatchError
from arco_bci.order_marginal import importance_weights


def test_logits_zero_network_returns_zero():
    params = arco.zero_params(3)
    enc = prefix_encoding(make_order([2, 0, 1]), 2)
    np.testing.assert_array_equal(arco.logits(params, enc), np.zeros(3))


def test_logits_bias_only_network():
    params = arco.zero_params(3)
    bias = np.array([0.5, -1.0, 2.0])
    params = arco.ArcoParams(w1=params.w1, b1=params.b1, w2=params.w2, b2=bias)
    for k in (1, 2, 3):
        enc = prefix_encoding(make_order([2, 0, 1]), k)
        np.testing.assert_array_equal(arco.logits(params, enc), bias)


def test_logits_deterministic():
    rng = np.random.default_rng(0)
    params = arco.init_params(4, rng)
    enc = prefix_encoding(make_order([3, 1, 0, 2]), 3)
    np.testing.assert_array_equal(arco.logits(params, enc), arco.logits(params, enc))


def test_normalize_logits_uniform():
    out = arco.normalize_logits(np.zeros(3), {0, 1, 2})
    np.testing.assert_allclose(out, np.log(np.ones(3) / 3.0))


def test_normalize_logits_single_choice():
    out = arco.normalize_logits(np.array([5.0, -2.0, 7.0]), {2})
    assert out[0] == -np.inf and out[1] == -np.inf
    assert abs(out[2]) < 1e-15


def test_normalize_logits_analytic():
    out = arco.normalize_logits(np.array([np.log(2.0), 0.0]), {0, 1})
    np.testing.assert_allclose(out, [np.log(2.0 / 3.0), np.log(1.0 / 3.0)], atol=1e-12)


def test_normalize_logits_logsumexp_zero():
    rng = np.random.default_rng(1)
    raw = rng.normal(size=6) * 10
    out = arco.normalize_logits(raw, {1, 3, 4})
    assert abs(np.log(np.exp(out[[1, 3, 4]]).sum())) < 1e-12


def test_normalize_logits_empty_remaining():
    with pytest.raises(EmptyRemainingError):
        arco.normalize_logits(np.zeros(3), set())


def test_sample_order_d1():
    params = arco.zero_params(1)
    order = arco.sample_order(params, np.random.default_rng(0))
    assert order.sequence == (0,)


def test_sample_orders_uniform_frequencies():
    # zero network induces the uniform distribution over all 6 orders
    params = arco.zero_params(3)
    rng = np.random.default_rng(123)
    orders = arco.sample_orders(params, 60_000, rng)
    counts: dict = {}
    for o in orders:
        counts[o.sequence] = counts.get(o.sequence, 0) + 1
    assert len(counts) == 6
    se = np.sqrt((1 / 6) * (5 / 6) / 60_000)
    for seq, c in counts.items():
        assert abs(c / 60_000 - 1 / 6) < 3 * se, (seq, c)


def test_sample_orders_dominant_logit():
    # +20 logit gap puts X2 first with probability 1 - 2e^-20/(1+2e^-20) > 0.999
    params = arco.zero_params(3)
    params = arco.ArcoParams(
        w1=params.w1, b1=params.b1, w2=params.w2, b2=np.array([0.0, 0.0, 20.0])
    )
    orders = arco.sample_orders(params, 5000, np.random.default_rng(7))
    first = np.array([o.sequence[0] for o in orders])
    assert (first == 2).mean() >= 0.999


def test_seed_determinism():
    params = arco.init_params(5, np.random.default_rng(3))
    a = arco.sample_orders(params, 50, np.random.default_rng(11))
    b = arco.sample_orders(params, 50, np.random.default_rng(11))
    assert [o.sequence for o in a] == [o.sequence for o in b]


def test_log_prob_d1_is_zero():
    params = arco.zero_params(1)
    assert arco.log_prob(params, make_order([0])) == 0.0


def test_log_prob_zero_network_uniform():
    params = arco.zero_params(3)
    for order in arco.enumerate_orders(3):
        assert abs(arco.log_prob(params, order) - np.log(1 / 6)) < 1e-12


@pytest.mark.parametrize("d", [2, 3, 4])
def test_log_prob_normalises(d):
    rng = np.random.default_rng(d)
    params = arco.init_params(d, rng)
    params = arco.ArcoParams(
        w1=params.w1 * 5, b1=params.b1 * 5, w2=params.w2 * 5, b2=params.b2 * 5
    )
    lps = arco.log_prob_many(params, arco.enumerate_orders(d))
    assert (lps <= 1e-12).all()
    assert abs(np.exp(lps).sum() - 1.0) < 1e-10


def test_grad_log_prob_d1_zero():
    params = arco.zero_params(1)
    grads = arco.grad_log_prob(params, make_order([0]))
    for g in grads.values():
        np.testing.assert_array_equal(g, np.zeros_like(g))


def test_grad_log_prob_matches_finite_differences():
    rng = np.random.default_rng(42)
    params = arco.init_params(3, rng)
    order = make_order([2, 0, 1])
    grads = arco.grad_log_prob(params, order)
    h = 1e-5
    for name in ("w1", "b1", "w2", "b2"):
        tensor = getattr(params, name)
        analytic = grads[name]
        it = np.nditer(tensor, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            bumped = {k: getattr(params, k).copy() for k in ("w1", "b1", "w2", "b2")}
            bumped[name][idx] += h
            plus = arco.log_prob(arco.ArcoParams(**bumped), order)
            bumped[name][idx] -= 2 * h
            minus = arco.log_prob(arco.ArcoParams(**bumped), order)
            fd = (plus - minus) / (2 * h)
            denom = max(abs(fd), abs(analytic[idx]), 1e-8)
            assert abs(fd - analytic[idx]) / denom < 1e-4, (name, idx)


def test_score_identity_exhaustive():
    # E_L[grad log p(L)] = 0 for any parameters
    rng = np.random.default_rng(9)
    for d in (2, 3):
        params = arco.init_params(d, rng)
        orders = arco.enumerate_orders(d)
        probs = np.exp(arco.log_prob_many(params, orders))
        total = arco.weighted_grad_log_prob(params, orders, probs)
        for g in total.values():
            assert np.abs(g).max() < 1e-8


def test_sampling_matches_log_prob_frequencies():
    rng = np.random.default_rng(17)
    params = arco.init_params(3, rng)
    n = 100_000
    orders = arco.sample_orders(params, n, np.random.default_rng(23))
    counts: dict = {}
    for o in orders:
        counts[o.sequence] = counts.get(o.sequence, 0) + 1
    for order in arco.enumerate_orders(3):
        p = np.exp(arco.log_prob(params, order))
        freq = counts.get(order.sequence, 0) / n
        se = np.sqrt(p * (1 - p) / n)
        assert abs(freq - p) < 4 * se + 1e-12, order.sequence


def test_update_gradient_prior_only_for_zero_weights():
    rng = np.random.default_rng(5)
    params = arco.init_params(3, rng)
    state = arco.ArcoTrainState(params=params)
    orders = arco.sample_orders(params, 4, rng)
    grads = arco.update_gradient(state, orders, np.zeros(4))
    for name, tensor in params.tensors().items():
        np.testing.assert_allclose(grads[name], -tensor / params.prior_std**2)


def test_arco_update_weight_validation():
    rng = np.random.default_rng(6)
    params = arco.init_params(3, rng)
    state = arco.ArcoTrainState(params=params)
    orders = arco.sample_orders(params, 3, rng)
    with pytest.raises(WeightMismatchError):
        arco.arco_update(state, orders, np.array([0.5, 0.5]))
    with pytest.raises(WeightMismatchError):
        arco.arco_update(state, orders, np.array([0.5, 0.2, 0.2]))


def test_single_order_ascent():
    # repeated updates on one order increase its log-probability until the
    # moving-average baseline anneals the data coefficient away
    state = arco.ArcoTrainState(params=arco.init_params(3, np.random.default_rng(0)))
    order = make_order([1, 2, 0])
    lps = [arco.log_prob(state.params, order)]
    for _ in range(35):
        state = arco.arco_update(state, [order], np.array([1.0]))
        lps.append(arco.log_prob(state.params, order))
    diffs = np.diff(lps)
    assert (diffs > 0).all()
    assert lps[-1] > lps[0] + 1.0


def test_bimodal_representability():
    # reversed orders with equal weight: training keeps both modes alive
    rng = np.random.default_rng(0)
    state = arco.ArcoTrainState(params=arco.init_params(3, rng))
    forward = make_order([0, 1, 2])
    backward = make_order([2, 1, 0])
    for _ in range(400):
        state = arco.arco_update(state, [forward, backward], np.array([0.5, 0.5]))
    p_fwd = np.exp(arco.log_prob(state.params, forward))
    p_bwd = np.exp(arco.log_prob(state.params, backward))
    assert p_fwd >= 0.4 and p_bwd >= 0.4


def test_params_json_round_trip():
    params = arco.init_params(4, np.random.default_rng(8))
    again = arco.ArcoParams.from_json(params.to_json())
    for name, tensor in params.tensors().items():
        np.testing.assert_array_equal(getattr(again, name), tensor)
    assert again.prior_std == params.prior_std


def test_importance_weight_interface_roundtrip():
    # weights produced by the softmax are accepted by arco_update
    state = arco.ArcoTrainState(params=arco.init_params(3, np.random.default_rng(10)))
    orders = arco.sample_orders(state.params, 8, np.random.default_rng(1))
    weights = importance_weights(np.random.default_rng(2).normal(size=8))
    next_state = arco.arco_update(state, orders, weights)
    assert next_state.step == 1
    assert np.isfinite(next_state.baseline)
