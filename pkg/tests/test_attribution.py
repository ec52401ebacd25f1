import numpy as np
import pytest

from oracles import ig_riemann_oracle, ig_riemann_oracle_batched

from hindsight_attrib.attribution import (
    PredictionPower,
    correlate,
    correlation_histogram,
    drl_feature_weights,
    feature_attribution,
    feature_indices,
    ig_along_path,
    net_grad_fn,
    prediction_power,
    upper_tail_z,
    z_from_stats,
    zero_feature_baseline,
)
from hindsight_attrib.errors import (
    DimensionMismatch,
    NoOverlap,
    TooFewSamples,
    ZeroVariance,
)
from hindsight_attrib.hindsight import FeatureWeightSeries
from hindsight_attrib.neural import DenseNet


def scalar_net(rng, in_dim):
    hidden = int(rng.integers(2, 8))
    return DenseNet([in_dim, hidden, 1], ["tanh", "identity"], seed=int(rng.integers(10_000)))


def test_ig_is_exact_for_linear_functions_with_one_step():
    rng = np.random.default_rng(500)
    for _ in range(50):
        d = int(rng.integers(2, 12))
        w = rng.normal(0, 1, d)

        def grad_fn(pts):
            return np.tile(w, (len(pts), 1))

        x = rng.normal(0, 2, d)
        baseline = rng.normal(0, 2, d)
        attr = ig_along_path(grad_fn, x, baseline, steps=1)
        np.testing.assert_allclose(attr, (x - baseline) * w, rtol=0, atol=1e-10)
        # attributions sum to the function difference exactly for linear f
        assert abs(attr.sum() - (w @ x - w @ baseline)) <= 1e-10


def test_ig_completeness_on_smooth_nets():
    rng = np.random.default_rng(501)
    for _ in range(20):
        net = scalar_net(rng, 6)
        x = rng.normal(0, 1, 6)
        baseline = np.zeros(6)
        attr = ig_along_path(net_grad_fn(net), x, baseline, steps=64)
        diff = float(net.forward(x)[0] - net.forward(baseline)[0])
        assert abs(attr.sum() - diff) <= 1e-3


def test_ig_converges_monotonically_to_dense_riemann_sum():
    rng = np.random.default_rng(502)
    for _ in range(20):
        net = scalar_net(rng, 5)
        x = rng.normal(0, 1.5, 5)
        baseline = rng.normal(0, 0.5, 5)
        dense = ig_riemann_oracle_batched(net.input_gradient, x, baseline, steps=100_000)
        errs = []
        for m in (8, 64, 512):
            attr = ig_along_path(net_grad_fn(net), x, baseline, steps=m)
            errs.append(np.abs(attr - dense).max())
        assert errs[0] >= errs[1] >= errs[2]
        assert errs[0] > errs[2]
        assert errs[1] <= 1e-4


def test_ig_matches_oracle_at_same_step_count():
    rng = np.random.default_rng(503)
    net = scalar_net(rng, 4)
    x = rng.normal(0, 1, 4)
    baseline = np.zeros(4)
    got = ig_along_path(net_grad_fn(net), x, baseline, steps=17)
    want = ig_riemann_oracle(net.input_gradient, x, baseline, steps=17)
    np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)
    batched = ig_riemann_oracle_batched(net.input_gradient, x, baseline, steps=17, chunk=5)
    np.testing.assert_allclose(batched, want, rtol=0, atol=1e-12)


def test_ig_input_guards():
    def grad_fn(pts):
        return np.ones_like(pts)

    with pytest.raises(DimensionMismatch):
        ig_along_path(grad_fn, np.ones(3), np.zeros(2))
    with pytest.raises(ValueError):
        ig_along_path(grad_fn, np.ones(3), np.zeros(3), steps=0)


def test_feature_indices_row_major_layout():
    idx = feature_indices(n_assets=3, n_features=4, k=2)
    np.testing.assert_array_equal(idx, [2, 9, 16])
    state = np.arange(3 * 7, dtype=float)
    np.testing.assert_array_equal(state[idx], [2.0, 9.0, 16.0])
    with pytest.raises(IndexError):
        feature_indices(3, 4, 4)


def test_zero_feature_baseline_only_touches_one_column():
    rng = np.random.default_rng(504)
    n, k = 4, 3
    x = rng.normal(0, 1, n * (n + k))
    out = zero_feature_baseline(x, n, k, k=1)
    idx = feature_indices(n, k, 1)
    assert np.all(out[idx] == 0.0)
    mask = np.ones(x.size, dtype=bool)
    mask[idx] = False
    np.testing.assert_array_equal(out[mask], x[mask])
    allzero = zero_feature_baseline(x, n, k)
    for j in range(k):
        assert np.all(allzero[feature_indices(n, k, j)] == 0.0)


def test_feature_attribution_recovers_linear_critic_weights():
    # critic value = sum_k c_k * sum_i feature_k(i): attribution of feature k
    # must equal c_k times its cross-sectional sum, exactly at one step
    rng = np.random.default_rng(505)
    n, k = 5, 4
    width = n + k
    c = rng.normal(0, 1, k)
    wvec = np.zeros(n * width)
    for j in range(k):
        wvec[feature_indices(n, k, j)] = c[j]
    net = DenseNet([n * width, 1], ["identity"], seed=0)
    net.weights[0][:, 0] = wvec
    net.biases[0][:] = 0.3
    x = rng.normal(0, 1, n * width)
    for j in range(k):
        got = feature_attribution(net.input_gradient, x, n, k, j, steps=1)
        want = c[j] * x[feature_indices(n, k, j)].sum()
        assert abs(got - want) <= 1e-10


def test_drl_feature_weights_series_layout():
    rng = np.random.default_rng(506)
    n, k = 3, 4
    net = DenseNet([n * (n + k), 4, 1], ["tanh", "identity"], seed=2)
    states = {t: rng.normal(0, 1, n * (n + k)) for t in (7, 9, 11)}
    series = drl_feature_weights(net, states.__getitem__, [7, 9, 11], n, ["a", "b", "c", "d"])
    assert series.values.shape == (3, 4)
    np.testing.assert_array_equal(series.slots, [7, 9, 11])
    want = feature_attribution(net.input_gradient, states[9], n, k, 2, steps=64)
    assert series.values[1, 2] == want
    with pytest.raises(DimensionMismatch):
        net_grad_fn(DenseNet([4, 2], ["identity"], seed=0))
    with pytest.raises(NoOverlap):
        drl_feature_weights(net, states.__getitem__, [], n, ["a", "b", "c", "d"])


def test_correlate_identities():
    rng = np.random.default_rng(507)
    for _ in range(100):
        u = rng.normal(0, 1, 4)
        a = float(rng.uniform(0.1, 3))
        b = float(rng.normal())
        assert abs(correlate(u, a * u + b) - 1.0) <= 1e-12
        assert abs(correlate(u, -a * u + b) + 1.0) <= 1e-12
    assert np.isnan(correlate(np.ones(4), rng.normal(0, 1, 4)))
    with pytest.raises(TooFewSamples):
        correlate(np.ones(1), np.ones(1))
    with pytest.raises(DimensionMismatch):
        correlate(np.ones(3), np.ones(4))


def test_correlate_matches_numpy():
    rng = np.random.default_rng(508)
    for _ in range(50):
        u = rng.normal(0, 1, 6)
        v = rng.normal(0, 1, 6)
        assert abs(correlate(u, v) - np.corrcoef(u, v)[0, 1]) <= 1e-12


def test_correlate_never_leaves_unit_interval():
    # this pair makes the raw quotient round to -1 - 2**-52
    u = np.array([1.0039615758421696, -0.6179070447076008, 1.8220113633283233, -1.3204309700132935])
    v = -0.6615280218152191 * u + 0.9350499881140221
    assert correlate(u, v) == -1.0
    rng = np.random.default_rng(509)
    for _ in range(2000):
        u = rng.standard_normal(4)
        a, b = rng.standard_normal(2)
        assert abs(correlate(u, a * u + b)) <= 1.0


def series(slots, values, names=("a", "b", "c", "d")):
    return FeatureWeightSeries(
        names=list(names), slots=np.asarray(slots), values=np.asarray(values, dtype=float)
    )


def test_prediction_power_alignment_and_w1_equality():
    rng = np.random.default_rng(509)
    ref_vals = rng.normal(0, 1, (6, 4))
    ref = series(range(10, 16), ref_vals)
    exp = series(range(12, 20), rng.normal(0, 1, (8, 4)))
    pp = prediction_power(exp, ref, ref)  # w=1 smoothing: same series twice
    np.testing.assert_array_equal(pp.slots, [12, 13, 14, 15])
    np.testing.assert_array_equal(pp.rho_single, pp.rho_multi)
    for i, t in enumerate(pp.slots):
        want = correlate(exp.values[t - 12], ref_vals[t - 10])
        assert pp.rho_single[i] == want


def test_prediction_power_guards():
    a = series([1, 2], np.zeros((2, 4)))
    b = series([3, 4], np.zeros((2, 4)))
    with pytest.raises(NoOverlap):
        prediction_power(a, b, b)
    renamed = series([1, 2], np.zeros((2, 4)), names=["d", "c", "b", "a"])
    with pytest.raises(DimensionMismatch):
        prediction_power(a, renamed, renamed)


def test_prediction_power_undefined_slots_are_nan_not_dropped():
    ref = series([1, 2], [[1.0, 2.0, 3.0, 4.0], [1.0, 1.0, 1.0, 1.0]])
    exp = series([1, 2], [[4.0, 3.0, 2.0, 1.0], [2.0, 0.0, 1.0, 5.0]])
    pp = prediction_power(exp, ref, ref)
    assert np.isfinite(pp.rho_single[0])
    assert np.isnan(pp.rho_single[1])  # constant reference row
    assert pp.n_undefined("single") == 1
    assert pp.defined("single").size == 1


def test_z_from_stats_documented_case():
    res = z_from_stats(0.2, 1.0, 100)
    assert res.z == pytest.approx(2.0, abs=1e-12)
    assert res.stars == "***"


def test_z_star_boundaries():
    # z = mean * 10 for std=1, n=100
    assert z_from_stats(0.12816, 1.0, 100).stars == ""  # exactly at 10% line: not above
    assert z_from_stats(0.13, 1.0, 100).stars == "**"
    assert z_from_stats(0.16449, 1.0, 100).stars == "**"  # exactly at 5% line
    assert z_from_stats(0.17, 1.0, 100).stars == "***"
    assert z_from_stats(-0.5, 1.0, 100).stars == ""
    with pytest.raises(TooFewSamples):
        z_from_stats(0.1, 1.0, 1)
    with pytest.raises(ZeroVariance):
        z_from_stats(0.1, 0.0, 10)


def test_upper_tail_z_drops_nans_and_uses_sample_std():
    vals = np.array([0.5, 0.1, np.nan, 0.3, 0.7, np.nan])
    res = upper_tail_z(vals)
    finite = np.array([0.5, 0.1, 0.3, 0.7])
    want = finite.mean() / (finite.std(ddof=1) / np.sqrt(4))
    assert res.z == pytest.approx(want, abs=1e-12)
    assert res.n == 4
    with pytest.raises(TooFewSamples):
        upper_tail_z(np.array([0.5, np.nan]))


def test_correlation_histogram_bins():
    vals = np.array([-0.99, -0.5, 0.0, 0.5, 0.99, np.nan])
    counts, edges = correlation_histogram(vals, bins=4)
    assert counts.sum() == 5
    np.testing.assert_allclose(edges, [-1.0, -0.5, 0.0, 0.5, 1.0], atol=0)


def test_prediction_power_defined_helper():
    pp = PredictionPower(
        slots=np.array([1, 2, 3]),
        rho_single=np.array([0.5, np.nan, 0.25]),
        rho_multi=np.array([np.nan, np.nan, 0.1]),
    )
    np.testing.assert_array_equal(pp.defined("single"), [0.5, 0.25])
    assert pp.n_undefined("multi") == 2
