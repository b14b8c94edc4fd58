"""Location prior and fully-connected pixel CRF with mean-field inference.

Pairwise messages are Gaussian-weighted averages of the neighbours' current
marginals, computed with the permutohedral lattice.  Each pixel's own
contribution is removed exactly (see ``PermutohedralLattice.self_weights``)
from both the filtered marginals and the normalizing mass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import VOID, Dataset, ImageRGB, LabelMap, SuperpixelPartition
from .descriptors import Ranking
from .lattice import PermutohedralLattice


@dataclass(frozen=True)
class CRFParams:
    iterations: int = 10
    sigma_alpha: float = 60.0
    sigma_beta: float = 10.0
    w_app: float = 5.0
    sigma_gamma: float = 3.0
    w_smooth: float = 3.0
    w_loc: float = 0.5
    prior_k: int = 15

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("crf.iterations must be >= 1")
        for name in ("sigma_alpha", "sigma_beta", "sigma_gamma"):
            if not getattr(self, name) > 0:
                raise ValueError(f"crf.{name} must be positive")
        for name in ("w_app", "w_smooth", "w_loc"):
            if getattr(self, name) < 0:
                raise ValueError(f"crf.{name} must be non-negative")
        if self.prior_k < 1:
            raise ValueError("crf.prior_k must be >= 1")


def _nearest_resize(labels: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    h, w = labels.shape
    rows = np.minimum((np.arange(shape[0]) * h) // shape[0], h - 1)
    cols = np.minimum((np.arange(shape[1]) * w) // shape[1], w - 1)
    return labels[rows[:, None], cols[None, :]]


def location_prior(ranking: Ranking, train: Dataset, query_size: tuple[int, int], k: int = 15) -> np.ndarray:
    """Per-pixel class frequencies over the top ``k`` ranked label maps.

    Returns an (H, W, L) array; each pixel histogram gets one extra count per
    class before normalization.
    """
    L = train.num_classes
    counts = np.ones((*query_size, L))
    rows, cols = np.indices(query_size)
    for idx in ranking.ordered[:k]:
        lab = _nearest_resize(train[int(idx)].labels.labels, query_size)
        ok = lab != VOID
        np.add.at(counts, (rows[ok], cols[ok], lab[ok].astype(np.int64)), 1.0)
    return counts / counts.sum(axis=-1, keepdims=True)


def pixel_unary(u_superpixel: np.ndarray, part: SuperpixelPartition, prior: np.ndarray | None,
                w_loc: float = 0.5) -> np.ndarray:
    cost = u_superpixel[part.assignment]
    if prior is not None and w_loc:
        if prior.shape != cost.shape:
            raise ValueError(f"prior shape {prior.shape} does not match costs {cost.shape}")
        cost = cost - w_loc * np.log(prior)
    return cost


def softmax_neg(cost: np.ndarray) -> np.ndarray:
    z = -cost
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class _NeighbourAverage:
    """Self-excluding normalized Gaussian filter over a fixed pixel set."""

    def __init__(self, feats: np.ndarray):
        self.lattice = PermutohedralLattice(feats, dtype=np.float64)
        self.self_w = self.lattice.self_weights()
        total = self.lattice.splat(np.ones(feats.shape[0])).blur().slice()[:, 0]
        den = total - self.self_w
        self.valid = den > 1e-9 * np.maximum(total, 1e-300)
        self.inv = np.where(self.valid, 1.0 / np.where(self.valid, den, 1.0), 0.0)

    def __call__(self, q: np.ndarray) -> np.ndarray:
        f = self.lattice.splat(q).blur().slice()
        return (f - self.self_w[:, None] * q) * self.inv[:, None]


def meanfield(costs: np.ndarray, image: ImageRGB, params: CRFParams = CRFParams()) -> tuple[np.ndarray, LabelMap]:
    """Potts dense-CRF mean field; returns (H, W, L) marginals and the argmax map."""
    costs = np.asarray(costs, dtype=np.float64)
    if not np.all(np.isfinite(costs)):
        raise ValueError("costs contain non-finite values")
    h, w, L = costs.shape
    if (h, w) != (image.height, image.width):
        raise ValueError("costs and image sizes differ")
    flat = costs.reshape(-1, L)
    q = softmax_neg(flat)

    ys, xs = np.indices((h, w))
    xy = np.column_stack([xs.ravel(), ys.ravel()]).astype(np.float64)
    kernels = []
    if params.w_app > 0:
        rgb = image.pixels.reshape(-1, 3).astype(np.float64)
        kernels.append((params.w_app, _NeighbourAverage(
            np.column_stack([xy / params.sigma_alpha, rgb / params.sigma_beta]))))
    if params.w_smooth > 0:
        kernels.append((params.w_smooth, _NeighbourAverage(xy / params.sigma_gamma)))

    if kernels:
        for _ in range(params.iterations):
            msg = sum(wk * k(q) for wk, k in kernels)
            # Potts: the penalty for l is the message mass on every other label,
            # which is a per-pixel constant minus msg[:, l]
            q = softmax_neg(flat - msg)
    q = q.reshape(h, w, L)
    return q, LabelMap(np.argmax(q, axis=-1).astype(np.int32), L)
