"""Label transfer by two-kernel lattice filtering, normalization and unaries."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import lattice
from .features import FeatureRecords, KernelParams, embed_k1, embed_k2
from .sampler import SampleSet, rare_class_weights

EPS_FLOOR = 1e-8


@dataclass(frozen=True)
class LabelScores:
    q: np.ndarray  # (N_q, L) raw filtered scores
    q_tilde: np.ndarray | None = None
    u: np.ndarray | None = None

    @property
    def argmax(self) -> np.ndarray:
        src = self.q_tilde if self.q_tilde is not None else self.q
        return np.argmax(src, axis=1)


def label_vectors(sample: SampleSet, weights: np.ndarray | None = None) -> np.ndarray:
    """One row per sample with ``lambda(label)`` at the label's column."""
    if len(sample) == 0:
        raise ValueError("sample is empty")
    lam = rare_class_weights(sample) if weights is None else np.asarray(weights, dtype=np.float64)
    out = np.zeros((len(sample), sample.num_classes))
    out[np.arange(len(sample)), sample.labels] = lam[sample.labels]
    return out


def filter_scores(train: FeatureRecords, values: np.ndarray, queries: FeatureRecords,
                  kp: KernelParams, dtype=np.float32) -> np.ndarray:
    """``w1 * k1-filter + w2 * k2-filter`` of ``values``, clamped at zero."""
    q = np.zeros((len(queries), values.shape[1]))
    for w, embed in ((kp.w1, embed_k1), (kp.w2, embed_k2)):
        if w == 0:
            continue
        q += w * lattice.filter(embed(train, kp), values, embed(queries, kp), dtype=dtype)
    return np.maximum(q, 0.0)


def transfer(sample: SampleSet, query_features: FeatureRecords, kp: KernelParams = KernelParams(),
             weights: np.ndarray | None = None, dtype=np.float32) -> LabelScores:
    if len(sample) == 0:
        raise ValueError("cannot transfer labels from an empty sample")
    if sample.features is None:
        raise ValueError("sample has no features attached")
    q = filter_scores(sample.features, label_vectors(sample, weights), query_features.with_d(0.0), kp, dtype)
    return LabelScores(q)


def normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    if np.any(q < 0):
        raise ValueError("scores must be non-negative")
    out = q + EPS_FLOOR
    out /= out.sum(axis=-1, keepdims=True)
    return out


def unary(q_tilde: np.ndarray) -> np.ndarray:
    return -np.log(q_tilde)


def finalize(scores: LabelScores) -> LabelScores:
    qt = normalize(scores.q)
    return LabelScores(scores.q, qt, unary(qt))


def dump_scores(scores: LabelScores, path) -> None:
    qt = scores.q_tilde if scores.q_tilde is not None else normalize(scores.q)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["query_id", "argmax", *(f"q{l}" for l in range(qt.shape[1]))])
        for i, row in enumerate(qt):
            wr.writerow([i, int(row.argmax()), *(f"{v:.6g}" for v in row)])
