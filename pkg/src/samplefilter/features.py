"""Per-superpixel features and their embeddings into the two kernel spaces.

Embeddings scale every feature by ``sqrt(2) / sigma`` so that the lattice's
native ``exp(-|a - b|^2 / 2)`` equals ``exp(-sum (delta / sigma)^2)``, which
is the form both transfer kernels take.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .dataset import ImageRGB, SuperpixelPartition
from .descriptors import gradients, orientation_bins

HOG_BINS = 6
_SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class FeatureRecords:
    """Column-oriented features for a batch of superpixels."""

    c: np.ndarray  # (N, 3) mean RGB in [0, 255]
    s: np.ndarray  # (N,) population std of gray levels
    t: np.ndarray  # (N,) top row / image height
    h: np.ndarray  # (N, 6) orientation histogram, sums to 1
    d: np.ndarray  # (N,) dissimilarity; 0 for query superpixels

    def __len__(self) -> int:
        return self.s.shape[0]

    def take(self, idx) -> "FeatureRecords":
        return FeatureRecords(*(getattr(self, f.name)[idx] for f in fields(self)))

    def with_d(self, d) -> "FeatureRecords":
        return FeatureRecords(self.c, self.s, self.t, self.h, np.broadcast_to(np.asarray(d, float), self.s.shape).copy())

    @staticmethod
    def concat(items: list["FeatureRecords"]) -> "FeatureRecords":
        return FeatureRecords(*(np.concatenate([getattr(r, f.name) for r in items]) for f in fields(FeatureRecords)))


@dataclass(frozen=True)
class KernelParams:
    sigma_c: float = 20.0
    sigma_t: float = 0.2
    sigma_s: float = 15.0
    sigma_d: float = 0.5
    sigma_h: float = 0.3
    w1: float = 0.5
    w2: float = 0.5

    def __post_init__(self):
        for name in ("sigma_c", "sigma_t", "sigma_s", "sigma_d", "sigma_h"):
            if not getattr(self, name) > 0:
                raise ValueError(f"kernel.{name} must be positive")
        if self.w1 < 0 or self.w2 < 0 or self.w1 + self.w2 <= 0:
            raise ValueError("kernel weights must be non-negative with a positive sum")


def superpixel_features(image: ImageRGB, part: SuperpixelPartition, d_image: float = 0.0) -> FeatureRecords:
    if part.assignment.shape != (image.height, image.width):
        raise ValueError("partition does not match image size")
    sp = part.assignment.ravel()
    n = part.count
    size = np.bincount(sp, minlength=n).astype(np.float64)

    px = image.pixels.reshape(-1, 3).astype(np.float64)
    c = np.stack([np.bincount(sp, weights=px[:, k], minlength=n) for k in range(3)], axis=1) / size[:, None]

    gray = image.gray()
    g = gray.ravel()
    mean = np.bincount(sp, weights=g, minlength=n) / size
    var = np.bincount(sp, weights=(g - mean[sp]) ** 2, minlength=n) / size
    s = np.sqrt(var)

    rows = np.broadcast_to(np.arange(image.height)[:, None], gray.shape).ravel()
    top = np.full(n, image.height, dtype=np.int64)
    np.minimum.at(top, sp, rows)
    t = top / image.height

    bins, mag = orientation_bins(*gradients(gray), HOG_BINS)
    hist = np.bincount(sp * HOG_BINS + bins.ravel(), weights=mag.ravel(), minlength=n * HOG_BINS)
    hist = hist.reshape(n, HOG_BINS)
    tot = hist.sum(axis=1, keepdims=True)
    flat = tot[:, 0] < 1e-12
    hist[~flat] /= tot[~flat]
    hist[flat] = 1.0 / HOG_BINS

    return FeatureRecords(c, s, t, hist, np.full(n, float(d_image)))


def embed_k1(f: FeatureRecords, kp: KernelParams) -> np.ndarray:
    """Colour kernel space: (R, G, B, t, s, d), 6 dimensions."""
    return _SQRT2 * np.column_stack([
        f.c / kp.sigma_c, f.t / kp.sigma_t, f.s / kp.sigma_s, f.d / kp.sigma_d,
    ])


def embed_k2(f: FeatureRecords, kp: KernelParams) -> np.ndarray:
    """Gradient kernel space: (h[0..5], t, s, d), 9 dimensions."""
    return _SQRT2 * np.column_stack([
        f.h / kp.sigma_h, f.t / kp.sigma_t, f.s / kp.sigma_s, f.d / kp.sigma_d,
    ])
