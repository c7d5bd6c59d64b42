import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ippal import acquire
from ippal import model as mdl


def col(*v):
    """A single-pixel probability tensor of shape (K, 1, 1)."""
    return np.array(v, dtype=float).reshape(-1, 1, 1)


def brute_knn(db_vectors, q, k):
    """Exhaustive scan: sort by (cosine distance, insertion index)."""
    dists = []
    for i, v in enumerate(db_vectors):
        nv, nq = np.linalg.norm(v), np.linalg.norm(q)
        d = 1.0 if nv == 0 or nq == 0 else min(max(1.0 - abs(float(v @ q)) / (nv * nq), 0.0), 1.0)
        dists.append((round(d, 12), i, d))
    dists.sort()
    return [i for _, i, _ in dists[:k]], [d for _, _, d in dists[:k]]


def test_posterior_mean_examples():
    post = acquire.posterior_mean([col(1, 0), col(0, 1)])
    assert np.allclose(post.mean[:, 0, 0], [0.5, 0.5])
    one = acquire.posterior_mean([col(0.3, 0.7)])
    assert np.array_equal(one.mean, col(0.3, 0.7))
    with pytest.raises(ValueError):
        acquire.posterior_mean([])


def test_mutual_information_examples():
    mi = acquire.mutual_information(acquire.posterior_mean([col(1, 0), col(0, 1)]))
    assert abs(mi.values[0, 0] - math.log(2)) < 1e-6
    assert mi.kind == "mutual_information"
    same = acquire.mutual_information(acquire.posterior_mean([col(0.2, 0.8)] * 3))
    assert same.values[0, 0] == 0.0
    uni = acquire.mutual_information(acquire.posterior_mean([col(0.25, 0.25, 0.25, 0.25)] * 4))
    assert abs(uni.values[0, 0]) < 1e-12


def test_entropy_examples():
    assert acquire.entropy(col(1, 0, 0)).values[0, 0] == 0.0
    assert abs(acquire.entropy(col(0.25, 0.25, 0.25, 0.25)).values[0, 0] - math.log(4)) < 1e-6
    assert abs(acquire.entropy(col(0.7, 0.3)).values[0, 0] - 0.6109) < 1e-4
    expected = -(0.7 * math.log(0.7) + 0.3 * math.log(0.3))
    assert abs(acquire.entropy(col(0.7, 0.3)).values[0, 0] - expected) < 1e-6


def test_novelty_examples():
    db = acquire.LatentDatabase(k=1)
    db.insert(np.array([[1.0, 0.0]]))
    assert acquire.patch_novelty(db, np.array([[[1.0, 0.0]]]))[0, 0] == pytest.approx(0.0, abs=1e-12)
    assert acquire.patch_novelty(db, np.array([[[-1.0, 0.0]]]))[0, 0] == pytest.approx(0.0, abs=1e-12)
    db2 = acquire.LatentDatabase(k=2)
    db2.insert(np.array([[1.0, 0.0], [0.0, 1.0]]))
    assert acquire.patch_novelty(db2, np.array([[[1.0, 0.0]]]))[0, 0] == pytest.approx(0.5, abs=1e-6)


def test_novelty_empty_db_prior_and_zero_vectors():
    db = acquire.LatentDatabase(k=3)
    s = acquire.novelty(db, np.ones((2, 2, 4)), patch=8)
    assert s.values.shape == (16, 16) and np.all(s.values == 1.0) and s.prior
    db.insert(np.array([[1.0, 0.0, 0.0, 0.0]]))
    z = acquire.patch_novelty(db, np.zeros((1, 1, 4)))
    assert z[0, 0] == 1.0


def test_novelty_upsamples_nearest_and_does_not_mutate():
    db = acquire.LatentDatabase(k=1)
    db.insert(np.array([[1.0, 0.0], [0.0, 1.0]]))
    lat = np.array([[[1.0, 0.0], [1.0, 1.0]], [[0.0, 1.0], [0.0, -1.0]]])
    before = db.vectors.copy()
    s = acquire.novelty(db, lat, patch=2)
    assert s.values.shape == (4, 4)
    patch = acquire.patch_novelty(db, lat)
    assert np.array_equal(s.values[::2, ::2], patch)
    assert np.array_equal(s.values, np.repeat(np.repeat(patch, 2, 0), 2, 1))
    assert np.array_equal(db.vectors, before)


def test_db_insert_and_self_query():
    params = mdl.init_params(8, 4, mdl.ModelConfig(), 0)
    z = np.random.default_rng(0).normal(size=(8, 16, 16))
    lat = mdl.encode(params, z)
    db = acquire.LatentDatabase(k=1)
    acquire.db_insert_image(db, lat)
    assert len(db) == 4
    assert np.allclose(acquire.novelty(db, lat, 8).values, 0.0, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 200), k=st.integers(1, 15), seed=st.integers(0, 10_000))
def test_knn_matches_brute_force(n, k, seed):
    rng = np.random.default_rng(seed)
    # a coarse grid of values makes exact distance ties common
    vecs = rng.integers(-2, 3, size=(n, 3)).astype(float)
    q = rng.integers(-2, 3, size=3).astype(float)
    db = acquire.LatentDatabase(k=k)
    db.insert(vecs)
    idx = acquire.knn_indices(db, q)
    want, dists = brute_knn(vecs, q, k)
    assert list(idx) == want
    nov = acquire.patch_novelty(db, q.reshape(1, 1, 3))[0, 0]
    assert nov == pytest.approx(np.mean(dists), abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_novelty_invariant_to_insertion_order(seed):
    rng = np.random.default_rng(seed)
    vecs = rng.normal(size=(30, 4))
    q = rng.normal(size=(2, 2, 4))
    a = acquire.LatentDatabase(k=5)
    a.insert(vecs)
    b = acquire.LatentDatabase(k=5)
    b.insert(vecs[rng.permutation(30)])
    assert np.allclose(acquire.patch_novelty(a, q), acquire.patch_novelty(b, q), atol=1e-12)


def prob_tensors(T, K):
    return arrays(np.float64, (T, K, 2, 2), elements=st.floats(0.0, 1.0, allow_nan=False)).map(
        lambda a: (a + 1e-3) / (a + 1e-3).sum(axis=1, keepdims=True)
    )


@settings(max_examples=60, deadline=None)
@given(data=st.data(), T=st.integers(1, 5), K=st.integers(2, 6))
def test_mi_bounds(data, T, K):
    members = data.draw(prob_tensors(T, K))
    post = acquire.posterior_mean(list(members))
    assert np.allclose(post.mean.sum(axis=0), 1.0, atol=1e-9)
    mi = acquire.mutual_information(post).values
    h = acquire.entropy(post.mean).values
    assert np.all(mi >= 0)
    assert np.all(mi <= h + 1e-12)
    assert np.all(h <= math.log(K) + 1e-12)
    equal = np.all(np.abs(members - members[0]) < 1e-12, axis=(0, 1))
    assert np.all(mi[equal] < 1e-9)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), k=st.integers(1, 8))
def test_novelty_range_and_self_insert(seed, k):
    rng = np.random.default_rng(seed)
    db = acquire.LatentDatabase(k=k)
    db.insert(rng.normal(size=(12, 5)))
    q = rng.normal(size=(1, 1, 5))
    v = acquire.patch_novelty(db, q)[0, 0]
    assert 0.0 <= v <= 1.0
    one = acquire.LatentDatabase(k=1)
    one.insert(db.vectors)
    one.insert(q.reshape(1, 5))
    assert acquire.patch_novelty(one, q)[0, 0] == pytest.approx(0.0, abs=1e-12)


def test_rebuild_db_order_and_repeatability():
    cfg = mdl.ModelConfig()
    params = mdl.init_params(8, 4, cfg, 0)
    rng = np.random.default_rng(0)
    ts = mdl.TrainingSet()
    for _ in range(3):
        ts.add(rng.normal(size=(8, 16, 16)), np.zeros((16, 16), int))
    a = acquire.rebuild_db(params, ts, k=4)
    b = acquire.rebuild_db(params, ts, k=4)
    assert len(a) == 12 and np.array_equal(a.vectors, b.vectors)
    assert np.allclose(a.vectors[:4], mdl.encode(params, ts.images[0]).reshape(-1, 16))
    assert len(acquire.rebuild_db(params, mdl.TrainingSet(), k=4)) == 0
