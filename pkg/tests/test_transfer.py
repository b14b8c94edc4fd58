import csv
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from samplefilter import oracle
from samplefilter.features import FeatureRecords, KernelParams
from samplefilter.sampler import SampleSet
from samplefilter.transfer import (
    EPS_FLOOR, LabelScores, dump_scores, finalize, label_vectors, normalize, transfer, unary,
)

FIXTURE = Path(__file__).parent / "fixtures" / "transfer_50x10.npz"


def make_sample(features, labels, num_classes):
    labels = np.asarray(labels, np.int32)
    n = labels.size
    counts = np.bincount(labels, minlength=num_classes)
    return SampleSet(np.zeros(n, np.int32), np.arange(n, dtype=np.int32), labels, features.d.copy(),
                     np.ones(n), counts, int(counts.max()), num_classes, features)


def random_records(rng, n, d=None):
    return FeatureRecords(rng.uniform(0, 255, (n, 3)), rng.uniform(0, 40, n), rng.random(n),
                          rng.dirichlet(np.ones(6), n), rng.random(n) if d is None else np.full(n, d))


def load_fixture():
    z = np.load(FIXTURE)
    rec = lambda p: FeatureRecords(z[f"{p}_c"], z[f"{p}_s"], z[f"{p}_t"], z[f"{p}_h"], z[f"{p}_d"])
    return rec("train"), z["labels"], rec("query"), z["q"]


def test_label_vectors_examples():
    f = random_records(np.random.default_rng(0), 5)
    s = make_sample(f, [2, 0, 1, 3, 2], 4)
    lv = label_vectors(s)
    assert lv[0].tolist() == [0, 0, 1, 0]  # class 2 is the most sampled, so lambda = 1
    assert lv[1].tolist() == [2, 0, 0, 0]
    balanced = make_sample(f.take([0, 1, 2, 3]), [0, 1, 2, 3], 4)
    assert np.array_equal(label_vectors(balanced), np.eye(4))


def test_label_vectors_rare_weight():
    f = random_records(np.random.default_rng(1), 5)
    s = make_sample(f, [0, 0, 0, 0, 1], 3)
    assert label_vectors(s)[4].tolist() == [0, 4, 0]


def test_single_matching_source():
    f = random_records(np.random.default_rng(2), 1)
    s = make_sample(f, [1], 3)
    q = transfer(s, f.with_d(f.d), KernelParams()).q[0]
    assert q[0] == 0 and q[2] == 0 and q[1] > 0


def test_w2_zero_equals_k1_only():
    rng = np.random.default_rng(3)
    f = random_records(rng, 60)
    s = make_sample(f, rng.integers(0, 3, 60), 3)
    qf = random_records(rng, 10, 0.0)
    kp = KernelParams(w1=1.0, w2=0.0)
    from samplefilter.transfer import filter_scores
    from samplefilter import lattice
    from samplefilter.features import embed_k1
    direct = np.maximum(lattice.filter(embed_k1(f, kp), label_vectors(s), embed_k1(qf, kp)), 0)
    assert np.array_equal(transfer(s, qf, kp).q, direct)


def test_frozen_fixture_oracle_regression():
    train, labels, queries, q = load_fixture()
    from fixtures.make_transfer_fixture import label_values
    again = oracle.brute_transfer(train, label_values(labels), queries, KernelParams())
    assert np.allclose(again, q, rtol=1e-9, atol=0)


def test_frozen_fixture_lattice_fidelity():
    train, labels, queries, q = load_fixture()
    got = transfer(make_sample(train, labels, 4), queries, KernelParams()).q
    err = oracle.relative_l1(normalize(got), normalize(q))
    assert np.median(err) <= 0.12


def test_argmax_agreement_small_instances():
    from fixtures.make_transfer_fixture import build, label_values
    agree = total = 0
    for seed in range(20):
        train, labels, queries = build(seed, n_s=200, n_q=100)
        got = transfer(make_sample(train, labels, 4), queries, KernelParams()).q
        exact = oracle.brute_transfer(train, label_values(labels), queries, KernelParams())
        agree += int(np.sum(got.argmax(1) == exact.argmax(1)))
        total += len(queries)
    assert agree / total >= 0.95


def test_empty_sample_rejected():
    f = random_records(np.random.default_rng(4), 0)
    s = SampleSet(*(np.zeros(0, np.int32),) * 3, np.zeros(0), np.zeros(0), np.zeros(2, np.int64), 5, 2, f)
    with pytest.raises(ValueError):
        transfer(s, random_records(np.random.default_rng(4), 2), KernelParams())


def test_normalize_examples():
    assert normalize(np.array([[1.0, 3.0]]))[0].tolist() == pytest.approx([0.25, 0.75])
    assert normalize(np.zeros((1, 3)))[0].tolist() == pytest.approx([1 / 3] * 3)
    with pytest.raises(ValueError):
        normalize(np.array([[-1.0, 1.0]]))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1e6), min_size=2, max_size=8), st.floats(1e-3, 1e3))
def test_normalize_floor_and_sum(q, alpha):
    q = np.array([q])
    qt = normalize(q)
    assert qt.sum() == pytest.approx(1.0)
    assert np.all(qt > 0)
    assert np.argmax(normalize(alpha * q)) == np.argmax(qt)


def test_scale_cancellation_seven():
    q = np.random.default_rng(5).random((4, 5)) * 10
    assert np.allclose(normalize(q), normalize(7 * q), rtol=1e-7)


def test_unary_examples():
    assert unary(np.array([0.5, 0.5])).tolist() == pytest.approx([np.log(2)] * 2)
    u = unary(normalize(np.array([[1.0, 0.0]])))[0]
    assert u[0] == pytest.approx(0, abs=1e-7) and u[1] == pytest.approx(-np.log(EPS_FLOOR), rel=1e-6)


def test_finalize_argmin_equals_argmax():
    q = np.random.default_rng(6).random((50, 4))
    s = finalize(LabelScores(q))
    assert np.array_equal(s.u.argmin(1), s.q_tilde.argmax(1))
    assert np.all(np.isfinite(s.u))


def test_dump_scores(tmp_path):
    dump_scores(finalize(LabelScores(np.array([[1.0, 3.0]]))), tmp_path / "q.csv")
    rows = list(csv.reader(open(tmp_path / "q.csv")))
    assert rows[0] == ["query_id", "argmax", "q0", "q1"] and rows[1][1] == "1"
