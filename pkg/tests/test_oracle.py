import numpy as np
import pytest

from samplefilter.features import FeatureRecords, KernelParams, embed_k1, embed_k2
from samplefilter.oracle import brute_filter, brute_transfer, relative_l1


def _records(rng, n, d=None):
    return FeatureRecords(rng.uniform(0, 255, (n, 3)), rng.uniform(0, 40, n), rng.random(n),
                          rng.dirichlet(np.ones(6), n), rng.random(n) if d is None else np.full(n, d))


def test_single_source_exact():
    p = np.array([[0.3, 1.2]])
    assert brute_filter(p, np.array([[2.0, 5.0]]), p)[0].tolist() == [2.0, 5.0]


def test_equidistant_sources():
    out = brute_filter(np.array([[-1.0, 0.0], [1.0, 0.0]]), np.eye(2), np.zeros((1, 2)))
    assert out[0, 0] == out[0, 1]


def test_accumulation_order_independent():
    rng = np.random.default_rng(0)
    pts, vals, qs = rng.standard_normal((500, 4)), rng.random((500, 3)), rng.standard_normal((40, 4))
    perm = rng.permutation(500)
    a = brute_filter(pts, vals, qs, chunk=7)
    b = brute_filter(pts[perm], vals[perm], qs, chunk=64)
    assert np.allclose(a, b, rtol=1e-9, atol=0)


def test_brute_transfer_equals_embedded_composition():
    rng = np.random.default_rng(1)
    kp = KernelParams(w1=0.3, w2=0.9)
    s, q = _records(rng, 50), _records(rng, 10, 0.0)
    vals = np.eye(4)[rng.integers(0, 4, 50)]
    direct = brute_transfer(s, vals, q, kp)
    composed = kp.w1 * brute_filter(embed_k1(s, kp), vals, embed_k1(q, kp)) \
        + kp.w2 * brute_filter(embed_k2(s, kp), vals, embed_k2(q, kp))
    assert np.allclose(direct, composed, rtol=1e-9, atol=1e-300)


def test_doubling_lambda_doubles_channel():
    rng = np.random.default_rng(2)
    s, q = _records(rng, 30), _records(rng, 5, 0.0)
    vals = np.eye(3)[rng.integers(0, 3, 30)]
    base = brute_transfer(s, vals, q, KernelParams())
    vals2 = vals.copy()
    vals2[:, 1] *= 2
    out = brute_transfer(s, vals2, q, KernelParams())
    assert np.allclose(out[:, 1], 2 * base[:, 1], rtol=1e-12)
    assert np.array_equal(out[:, [0, 2]], base[:, [0, 2]])


def test_relative_l1_zero_rows():
    assert relative_l1(np.zeros((1, 2)), np.zeros((1, 2)))[0] == 0
    assert relative_l1(np.ones((1, 2)), np.zeros((1, 2)))[0] == np.inf
    assert relative_l1(np.array([[1.0, 1.0]]), np.array([[2.0, 0.0]]))[0] == pytest.approx(1.0)
