import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ippal.mapping import (
    LOGODDS_CLAMP,
    MultiLayerMap,
    Observation,
    StoredImage,
    logit,
    recompute_priors,
    sigmoid,
)
from ippal.terrain import Footprint, OutOfBoundsError


def obs_at(fp, probs_vec=None, u=0.0, r=0.0, K=4, train=True):
    if probs_vec is None:
        probs_vec = np.full(K, 1.0 / K)
    probs = np.broadcast_to(np.asarray(probs_vec, float)[:, None, None], (len(probs_vec), fp.rows, fp.cols)).copy()
    return Observation(fp, probs, np.full((fp.rows, fp.cols), float(u)), np.full((fp.rows, fp.cols), float(r)), train)


def test_prior_measurement_leaves_logodds_unchanged():
    m = MultiLayerMap((8, 8), 4)
    before = m.logodds.copy()
    m.fuse(obs_at(Footprint(0, 0, 4, 4)))
    assert np.allclose(m.logodds, before, atol=1e-12)


def test_two_measurements_hand_values():
    m = MultiLayerMap((4, 4), 4)
    fp = Footprint(0, 0, 1, 1)
    m.fuse(obs_at(fp, [0.6, 0.2, 0.1, 0.1]))
    assert sigmoid(m.logodds[0, 0, 0]) == pytest.approx(0.6, abs=1e-9)
    m.fuse(obs_at(fp, [0.6, 0.2, 0.1, 0.1]))
    expected = math.log(0.6 / 0.4) * 2 - math.log(0.25 / 0.75)
    assert m.logodds[0, 0, 0] == pytest.approx(expected, abs=1e-9)
    assert m.logodds[0, 0, 0] == pytest.approx(1.9096, abs=1e-4)
    assert sigmoid(m.logodds[0, 0, 0]) == pytest.approx(0.871, abs=1e-3)


def test_running_mean_example():
    m = MultiLayerMap((4, 4), 4)
    fp = Footprint(1, 1, 1, 1)
    for u in (0.2, 0.4, 0.6):
        m.fuse(obs_at(fp, u=u))
    assert m.mu_u[1, 1] == pytest.approx(0.4, abs=1e-12)
    assert m.hits[1, 1] == 3
    assert m.mu_u[0, 0] == pytest.approx(math.log(4))


def test_semantic_posterior():
    m = MultiLayerMap((4, 4), 4)
    assert np.allclose(m.semantic_posterior((0, 0)), 0.25)
    m.fuse(obs_at(Footprint(0, 0, 1, 1), [0.97, 0.01, 0.01, 0.01]))
    p = m.semantic_posterior((0, 0))
    assert p.argmax() == 0 and p.sum() == pytest.approx(1.0, abs=1e-9)
    assert np.allclose(m.semantic_posterior_map().sum(axis=0), 1.0, atol=1e-9)


def test_frontier_cells():
    m = MultiLayerMap((12, 12), 3)
    assert m.frontier_cells() == set()
    fp = Footprint(3, 4, 5, 4)
    m.fuse(obs_at(fp, K=3))
    rect = {(r, c) for r in range(3, 8) for c in range(4, 8)}
    perimeter = {(r, c) for (r, c) in rect if r in (3, 7) or c in (4, 7)}
    assert m.frontier_cells() == perimeter
    m.fuse(obs_at(Footprint(0, 0, 12, 12), K=3))
    assert m.frontier_cells() == set()


def test_region_sums():
    m = MultiLayerMap((16, 16), 4)
    u, r, t = m.region_sums(Footprint(0, 0, 8, 8))
    assert u == pytest.approx(64 * math.log(4), abs=1e-9)
    assert u == pytest.approx(88.72, abs=1e-2)
    assert r == pytest.approx(64.0) and t == 0
    a, b = Footprint(0, 0, 8, 8), Footprint(8, 0, 8, 8)
    m.fuse(obs_at(a, u=0.3, r=0.2))
    whole = m.region_sums(Footprint(0, 0, 16, 8))
    parts = [m.region_sums(a), m.region_sums(b)]
    for i in range(3):
        assert whole[i] == pytest.approx(parts[0][i] + parts[1][i])


def test_out_of_bounds_and_train_flag():
    m = MultiLayerMap((8, 8), 4)
    with pytest.raises(OutOfBoundsError):
        m.fuse(obs_at(Footprint(6, 6, 4, 4)))
    with pytest.raises(OutOfBoundsError):
        m.region_sums(Footprint(-1, 0, 4, 4))
    m.fuse(obs_at(Footprint(0, 0, 4, 4), train=False))
    assert m.hits.sum() == 16 and m.train_counts.sum() == 0


def random_observations(rng, n, shape=(10, 10), K=4, fov=4):
    out = []
    for _ in range(n):
        r0 = int(rng.integers(0, shape[0] - fov + 1))
        c0 = int(rng.integers(0, shape[1] - fov + 1))
        fp = Footprint(r0, c0, fov, fov)
        p = rng.uniform(0.2, 0.8, size=(K, fov, fov))
        p /= p.sum(axis=0, keepdims=True)
        out.append(Observation(fp, p, rng.uniform(0, math.log(K), (fov, fov)), rng.uniform(0, 1, (fov, fov)), bool(rng.integers(2))))
    return out


def batch_means(obs, shape):
    s = np.zeros(shape)
    n = np.zeros(shape)
    for o in obs:
        rs, cs = o.footprint.slices()
        s[rs, cs] += o.uncertainty
        n[rs, cs] += 1
    return s, n


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 100_000), n=st.integers(1, 12))
def test_fusion_order_invariance_and_batch_mean(seed, n):
    rng = np.random.default_rng(seed)
    obs = random_observations(rng, n)
    a = MultiLayerMap((10, 10), 4)
    for o in obs:
        a.fuse(o)
    b = MultiLayerMap((10, 10), 4)
    for i in rng.permutation(n):
        b.fuse(obs[i])
    assert np.max(np.abs(a.logodds - b.logodds)) <= 1e-9
    s, cnt = batch_means(obs, (10, 10))
    seen = cnt > 0
    assert np.max(np.abs(a.mu_u[seen] - s[seen] / cnt[seen]), initial=0.0) <= 1e-12
    assert a.hits.sum() == sum(o.footprint.area for o in obs)
    assert np.all(a.hits >= a.train_counts) and np.all(a.train_counts >= 0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_logodds_clamped(seed):
    rng = np.random.default_rng(seed)
    m = MultiLayerMap((4, 4), 3)
    fp = Footprint(0, 0, 4, 4)
    for _ in range(40):
        p = np.where(rng.random((3, 4, 4)) < 0.5, 1.0 - 1e-12, 1e-12)
        p /= p.sum(axis=0, keepdims=True)
        m.fuse(Observation(fp, p, np.zeros((4, 4)), np.zeros((4, 4))))
        assert np.all(np.abs(m.logodds) <= LOGODDS_CLAMP)


def test_logit_sigmoid_inverse():
    p = np.linspace(0.01, 0.99, 50)
    assert np.allclose(sigmoid(logit(p)), p)


def test_recompute_priors():
    shape = (12, 12)
    factory = lambda: MultiLayerMap(shape, 4)  # noqa: E731
    assert np.array_equal(recompute_priors(factory, [], None).logodds, factory().logodds)

    rng = np.random.default_rng(0)
    hist = [StoredImage(Footprint(int(rng.integers(0, 8)), int(rng.integers(0, 8)), 4, 4), rng.normal(size=(2, 4, 4)), bool(i % 2)) for i in range(6)]

    def observe(rec):
        p = np.full((4, 4, 4), 0.1)
        p[0] = 0.7
        return Observation(rec.footprint, p, np.abs(rec.features[0]), np.abs(rec.features[1]) / 3, True)

    one = recompute_priors(factory, hist[:1], observe)
    ref = factory()
    o = observe(hist[0])
    o.is_training_sample = hist[0].is_training_sample
    ref.fuse(o)
    assert np.array_equal(one.logodds, ref.logodds) and np.array_equal(one.train_counts, ref.train_counts)

    old = factory()
    for rec in hist:
        old.fuse(Observation(rec.footprint, np.full((4, 4, 4), 0.25), np.zeros((4, 4)), np.zeros((4, 4)), rec.is_training_sample))
    new = recompute_priors(factory, hist, observe)
    assert np.array_equal(new.hits, old.hits)
    assert np.array_equal(new.train_counts, old.train_counts)


def test_recompute_priors_shape_drift():
    def observe(rec):
        return Observation(rec.footprint, np.full((4, 2, 2), 0.25), np.zeros((2, 2)), np.zeros((2, 2)))

    with pytest.raises(ValueError):
        recompute_priors(lambda: MultiLayerMap((8, 8), 4), [StoredImage(Footprint(0, 0, 4, 4), np.zeros((1, 4, 4)), True)], observe)
