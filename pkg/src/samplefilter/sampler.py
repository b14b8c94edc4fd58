"""Rank-based sampling scores, class-balanced weighted sampling and class weights."""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .dataset import VOID, Dataset
from .descriptors import Ranking
from .features import FeatureRecords


@dataclass(frozen=True)
class SamplingScores:
    image_ids: np.ndarray  # training image per superpixel
    sp_ids: np.ndarray  # superpixel index within its image
    labels: np.ndarray  # class per superpixel
    d: np.ndarray  # dissimilarity in (0, 1]
    p: np.ndarray | None = None  # sampling score exp(-d^2 / sigma)

    def __len__(self) -> int:
        return self.d.shape[0]


@dataclass(frozen=True)
class SampleSet:
    image_ids: np.ndarray
    sp_ids: np.ndarray
    labels: np.ndarray
    d: np.ndarray
    p: np.ndarray
    counts: np.ndarray  # N(l) per class
    cap: int
    num_classes: int
    features: FeatureRecords | None = None

    def __len__(self) -> int:
        return self.labels.shape[0]

    def with_features(self, features: FeatureRecords) -> "SampleSet":
        if len(features) != len(self):
            raise ValueError(f"expected {len(self)} feature records, got {len(features)}")
        return replace(self, features=features)

    @property
    def n_max(self) -> int:
        return int(self.counts.max()) if self.counts.size else 0

    @property
    def weights(self) -> np.ndarray:
        return rare_class_weights(self)


def assign_dissimilarity(ranking: Ranking, train: Dataset) -> SamplingScores:
    """Give every usable training superpixel the dissimilarity of its image.

    Superpixels whose pixels are all VOID are left out.
    """
    if len(ranking.per_image_d) != len(train):
        raise ValueError("ranking does not cover the training set")
    img, sp, lab, d = [], [], [], []
    for i, entry in enumerate(train.entries):
        keep = np.flatnonzero(entry.sp_labels != VOID)
        img.append(np.full(keep.size, i, dtype=np.int32))
        sp.append(keep.astype(np.int32))
        lab.append(entry.sp_labels[keep].astype(np.int32))
        d.append(np.full(keep.size, ranking.per_image_d[i]))
    return SamplingScores(*(np.concatenate(a) for a in (img, sp, lab, d)))


def scores(d, sigma_d_sample: float = 0.5) -> np.ndarray:
    if sigma_d_sample <= 0:
        raise ValueError("sigma_d_sample must be positive")
    d = np.asarray(d, dtype=np.float64)
    return np.exp(-d * d / sigma_d_sample)


def with_scores(s: SamplingScores, sigma_d_sample: float = 0.5) -> SamplingScores:
    return SamplingScores(s.image_ids, s.sp_ids, s.labels, s.d, scores(s.d, sigma_d_sample))


def weighted_sample(p: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``k`` indices without replacement, sequentially proportional to ``p``.

    Each item gets the key ``-ln(u) / p`` (an exponential variate with rate
    ``p``); the ``k`` smallest keys are distributed as successive draws with
    probability ``p_j / sum(remaining p)``.
    """
    n = p.shape[0]
    if k >= n:
        return np.arange(n)
    keys = rng.standard_exponential(n) / p
    idx = np.argpartition(keys, k - 1)[:k]
    return idx[np.argsort(keys[idx], kind="stable")]


def sample_balanced(s: SamplingScores, cap: int, rng_seed: int = 0,
                    num_classes: int | None = None) -> SampleSet:
    """Sample up to ``cap`` superpixels per class.

    Each class uses its own stream seeded from ``(rng_seed, class)``, so the
    draw for one class does not depend on any other.
    """
    if cap < 1:
        raise ValueError("cap must be >= 1")
    if s.p is None:
        raise ValueError("scores have no p values; call with_scores() first")
    if num_classes is None:
        num_classes = int(s.labels.max()) + 1 if len(s) else 0
    chosen = []
    counts = np.zeros(num_classes, dtype=np.int64)
    for label in range(num_classes):
        members = np.flatnonzero(s.labels == label)
        if members.size == 0:
            continue
        rng = np.random.default_rng([rng_seed, label])
        pick = members[weighted_sample(s.p[members], cap, rng)]
        counts[label] = pick.size
        chosen.append(pick)
    idx = np.concatenate(chosen) if chosen else np.zeros(0, dtype=np.int64)
    return SampleSet(s.image_ids[idx], s.sp_ids[idx], s.labels[idx], s.d[idx], s.p[idx],
                     counts, cap, num_classes)


def rare_class_weights(sample: SampleSet) -> np.ndarray:
    """``N_max / N(l)`` per class; 0 for classes that were not sampled."""
    counts = sample.counts
    if not np.any(counts > 0):
        raise ValueError("sample contains no class with samples")
    lam = np.zeros(counts.shape, dtype=np.float64)
    present = counts > 0
    lam[present] = counts.max() / counts[present]
    return lam


def dump_sample(sample: SampleSet, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["image_id", "superpixel_id", "class", "d", "p"])
        for row in zip(sample.image_ids, sample.sp_ids, sample.labels, sample.d, sample.p):
            wr.writerow([int(row[0]), int(row[1]), int(row[2]), f"{row[3]:.6g}", f"{row[4]:.6g}"])
