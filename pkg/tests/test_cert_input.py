import dataclasses
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import TOY_X, ball_point, toy_net, random_net
from sllcert.cert_input import (
    ScaleCache,
    certify,
    certify_at,
    certify_many,
    compose,
    greedy_sparsity,
    layer_radius,
    layer_scale,
    monotone_check,
    security_curve,
)
from sllcert.data import Dataset
from sllcert.network import Network, forward, reduce, representation

seeds = st.integers(0, 2**32 - 1)


def small_net(seed, bias=True):
    rng = np.random.default_rng(seed)
    K = int(rng.integers(1, 3))
    dims = (int(rng.integers(2, 7)),) + tuple(int(rng.integers(2, 7)) for _ in range(K)) + (int(rng.integers(2, 4)),)
    return random_net(rng, dims, bias=bias), rng


def all_vectors(net):
    ranges = [range(d + 1) for d in net.dims[1:-1]]
    for tail in itertools.product(*ranges):
        yield (0,) + tail


def brute_best(net, x):
    tr = forward(net, x)
    return max(certify_at(net, x, s, trace=tr) for s in all_vectors(net))


# --- worked examples on the toy net ---


def test_layer_radius_toy():
    tr = forward(toy_net(), TOY_X)
    I, r = layer_radius(tr, 1, 1)
    np.testing.assert_array_equal(I, [0])
    assert r == pytest.approx(0.8, abs=1e-15)
    I, r = layer_radius(tr, 1, 0)
    assert I.size == 0 and r == math.inf


def test_layer_radius_boundary_neuron():
    tr = forward(toy_net(), np.array([1.0, 0.0]))
    np.testing.assert_allclose(tr.q[0], [0.6, 0.0])
    I, r = layer_radius(tr, 1, 1)
    np.testing.assert_array_equal(I, [1])
    assert r == 0.0


def test_layer_radius_errors_and_infeasible():
    tr = forward(toy_net(), TOY_X)
    with pytest.raises(ValueError):
        layer_radius(tr, 1, 3)
    assert layer_radius(tr, 1, 2)[1] == 0.0


def test_layer_scale_toy():
    net = toy_net()
    assert layer_scale(net, np.array([0, 1]), np.array([1]), 1) == pytest.approx(5.0, abs=1e-12)
    assert layer_scale(net, np.array([0, 1]), np.array([0, 1]), 1) == pytest.approx(math.sqrt(45), abs=1e-10)
    assert layer_scale(net, np.array([0, 1]), np.array([], dtype=int), 1) == 0.0


def test_compose_toy():
    net = toy_net()
    tr = forward(net, TOY_X)
    c = compose(net, tr, (0, 1))
    assert c.r_cum == pytest.approx(0.8) and c.l_cum == pytest.approx(5.0)
    np.testing.assert_array_equal(c.sets[1], [1])
    g = compose(net, tr, (0, 0))
    assert g.r_cum == math.inf and g.l_cum == pytest.approx(math.sqrt(45))
    bad = compose(net, tr, (0, 2))
    assert bad.r_cum == 0.0 and not bad.feasible


def test_compose_global_is_product_of_norms():
    rng = np.random.default_rng(7)
    net = random_net(rng, (5, 4, 6, 3, 2))
    tr = forward(net, ball_point(rng, 5))
    c = compose(net, tr, (0, 0, 0, 0))
    assert c.r_cum == math.inf
    expect = np.prod([np.linalg.svd(W, compute_uv=False)[0] for W in net.weights()])
    assert c.l_cum == pytest.approx(expect, rel=1e-9)


def test_certify_at_toy():
    net = toy_net()
    assert certify_at(net, TOY_X, (0, 1)) == pytest.approx(0.5, abs=1e-12)
    assert certify_at(net, TOY_X, (0, 0)) == pytest.approx(5 / (2 * math.sqrt(45)), abs=1e-10)
    assert 5 / (2 * math.sqrt(45)) == pytest.approx(0.3727, abs=1e-4)
    with pytest.raises(ValueError):
        certify_at(net, TOY_X, (1, 0))


def test_margin_zero_gives_zero():
    net = Network.from_weights([np.eye(2)], np.ones((2, 2)))
    x = np.array([0.3, 0.4])
    for s in ((0, 0), (0, 1), (0, 2)):
        assert certify_at(net, x, s) == 0.0
    assert certify(net, x).r_sparse == 0.0


def test_greedy_toy():
    net = toy_net()
    tr = forward(net, TOY_X)
    assert greedy_sparsity(net, tr, 0.6) == (0, 1)
    assert greedy_sparsity(net, tr, 0.9) == (0, 0)
    assert greedy_sparsity(net, tr, 0.0) == (0, 1)
    with pytest.raises(ValueError):
        greedy_sparsity(net, tr, -1.0)


def test_greedy_zero_energy_is_full_inactive_set():
    net, rng = small_net(11)
    tr = forward(net, ball_point(rng, net.dims[0]))
    s = greedy_sparsity(net, tr, 0.0)
    assert s[1:] == tuple(I.shape[0] for I in tr.inactive)


def test_certify_toy():
    c = certify(toy_net(), TOY_X, tol=1e-6)
    assert abs(c.r_sparse - 0.5) <= 1e-6
    assert c.r_global == pytest.approx(0.37268, abs=1e-5)
    assert c.s_hat == (0, 1)
    assert c.margin == 5.0 and c.classifier_norm == pytest.approx(1.0)
    assert c.classifier_norm_reduced == pytest.approx(1.0)


def test_reduced_classifier_norm_is_informational():
    rng = np.random.default_rng(3)
    net = random_net(rng, (4, 9, 7, 3))
    for _ in range(20):
        x = ball_point(rng, 4)
        c = certify(net, x)
        J = compose(net, forward(net, x), c.s_hat).sets[-1]
        expected = np.linalg.svd(net.classifier[:, J], compute_uv=False)[0] if J.size else 0.0
        assert c.classifier_norm_reduced == pytest.approx(expected, rel=1e-9, abs=1e-12)
        assert c.classifier_norm_reduced <= c.classifier_norm + 1e-12


def test_certify_zero_input():
    rng = np.random.default_rng(0)
    net = random_net(rng, (3, 4, 2), bias=False)
    c = certify(net, np.zeros(3))
    assert c.r_sparse == 0.0 and c.r_global == 0.0


def test_certify_bad_tol():
    with pytest.raises(ValueError):
        certify(toy_net(), TOY_X, tol=0)


def test_certify_many_threads_match():
    rng = np.random.default_rng(5)
    net = random_net(rng, (6, 8, 8, 3))
    X = np.array([ball_point(rng, 6) for _ in range(12)])
    one = certify_many(net, X, threads=1)
    four = certify_many(net, X, threads=4)
    assert one == four


# --- security curve -------------------------------------------------------------


def test_security_curve_counts():
    net = toy_net()
    base = certify(net, TOY_X)
    certs = [dataclasses.replace(base, r_sparse=0.5, r_global=0.1), dataclasses.replace(base, r_sparse=0.2, r_global=0.1)]
    data = Dataset(np.array([TOY_X, TOY_X]), np.array([1, 1]), 2)
    rows = security_curve(net, data, [0.3], certs=certs)
    assert rows == [(0.3, 0.5, 0.0, 1.0)]


def test_security_curve_shape():
    rng = np.random.default_rng(3)
    net = random_net(rng, (4, 6, 6, 3), bias=False)
    X = np.array([ball_point(rng, 4) for _ in range(30)])
    y = rng.integers(0, 3, 30)
    data = Dataset(X, y, 3)
    grid = [0.0, 0.01, 0.05, 0.1, 0.5, 1.0 + 1e-9]
    rows = security_curve(net, data, grid)
    assert rows[0][1] == rows[0][2] == rows[0][3]
    assert rows[-1][1] == rows[-1][2] == 0.0
    for col in (1, 2):
        vals = [r[col] for r in rows]
        assert all(a >= b for a, b in zip(vals, vals[1:]))
    assert all(r[1] >= r[2] for r in rows)


def test_security_curve_errors():
    net = toy_net()
    with pytest.raises(ValueError):
        security_curve(net, Dataset(np.zeros((0, 2)), np.zeros(0), 2), [0.1])
    with pytest.raises(ValueError):
        security_curve(net, Dataset(np.array([TOY_X]), np.array([1]), 2), [0.2, 0.1])


# --- properties -----------------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_dominance_and_soundness_by_sampling(seed):
    net, rng = small_net(seed)
    x = ball_point(rng, net.dims[0])
    c = certify(net, x)
    assert c.r_sparse >= c.r_global - c.tol
    tr = forward(net, x)
    for _ in range(50):
        d = rng.standard_normal(x.shape[0])
        d *= 0.999 * c.r_sparse * rng.uniform() ** 0.2 / np.linalg.norm(d)
        assert forward(net, x + d).label == tr.label


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_sparse_radius_within_input_norm_for_zero_bias(seed):
    net, rng = small_net(seed, bias=False)
    x = ball_point(rng, net.dims[0])
    assert certify(net, x).r_sparse <= np.linalg.norm(x) + 1e-6


@settings(max_examples=60, deadline=None)
@given(seeds, st.floats(0.0, 2.0))
def test_greedy_correct_and_maximal(seed, nu_scale):
    net, rng = small_net(seed)
    x = ball_point(rng, net.dims[0])
    tr = forward(net, x)
    cache = ScaleCache(net)
    nu = nu_scale * float(np.max(np.abs(tr.q[0][np.isfinite(tr.q[0])]), initial=0.0))
    s_hat = greedy_sparsity(net, tr, nu, cache)
    comp = compose(net, tr, s_hat, cache)
    if comp.feasible:
        assert comp.r_cum >= nu
    for s in all_vectors(net):
        if s != s_hat and all(a >= b for a, b in zip(s, s_hat)):
            assert compose(net, tr, s, cache).r_cum < nu or (nu == 0 and not compose(net, tr, s, cache).feasible)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_binary_search_matches_enumeration(seed):
    net, rng = small_net(seed)
    x = ball_point(rng, net.dims[0])
    assert abs(certify(net, x, tol=1e-6).r_sparse - brute_best(net, x)) <= 2e-6


@settings(max_examples=60, deadline=None)
@given(seeds, st.floats(0.0, 1.0))
def test_reduced_model_equivalence(seed, frac):
    net, rng = small_net(seed)
    x = ball_point(rng, net.dims[0])
    tr = forward(net, x)
    nu = frac * certify(net, x).r_sparse + 1e-3 * frac
    s = greedy_sparsity(net, tr, nu)
    comp = compose(net, tr, s)
    red = reduce(net, comp.sets)
    radius = min(nu, comp.r_cum)
    for _ in range(20):
        d = rng.standard_normal(x.shape[0])
        d *= radius * rng.uniform() / np.linalg.norm(d)
        full = representation(net, x + d)
        np.testing.assert_allclose(red.embed(red.representation(x + d)), full, rtol=1e-6, atol=1e-12)


def test_monotone_toy():
    net = toy_net()
    for x in (TOY_X, np.array([1.0, 0.0]), np.array([-0.6, 0.8])):
        assert monotone_check(net, forward(net, x)).ok


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_monotone_random_three_layers(seed):
    rng = np.random.default_rng(seed)
    dims = (int(rng.integers(2, 7)), *(int(v) for v in rng.integers(2, 7, 3)), 2)
    net = random_net(rng, dims)
    x = ball_point(rng, dims[0])
    x[rng.random(dims[0]) < 0.3] = 0.0
    rep = monotone_check(net, forward(net, x))
    assert rep.ok, rep.violations
    assert rep.checked > 0


def test_monotone_detects_mutation():
    net = toy_net()
    tr = forward(net, TOY_X)

    def growing_radius(trace, k, s_in, s_out):
        return float(s_out)

    def growing_scale(net, trace, k, s_in, s_out):
        return 1.0 + s_in

    rep = monotone_check(net, tr, radius_fn=growing_radius)
    assert not rep.ok and "radius grows" in rep.violations[0]
    rep = monotone_check(net, forward(net, np.array([0.6, -0.8])), scale_fn=growing_scale)
    assert rep.ok  # x has no zero coordinates, so there is a single input level
    rep = monotone_check(net, forward(net, np.array([0.0, 0.0])), scale_fn=growing_scale)
    assert not rep.ok
