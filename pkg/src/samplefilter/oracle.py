"""Exact O(N_s * N_q) reference computations for checking the lattice path."""

from __future__ import annotations

import numpy as np

from .features import FeatureRecords, KernelParams


def brute_filter(points, values, queries, chunk: int = 256) -> np.ndarray:
    """``out[i] = sum_j exp(-|q_i - p_j|^2 / 2) * v_j`` in double precision."""
    points = np.asarray(points, dtype=np.float64)
    queries = np.asarray(queries, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    out = np.empty((queries.shape[0], values.shape[1]))
    for a in range(0, queries.shape[0], chunk):
        q = queries[a:a + chunk]
        d2 = np.sum((q[:, None, :] - points[None, :, :]) ** 2, axis=-1)
        out[a:a + chunk] = np.exp(-0.5 * d2) @ values
    return out


def kernel_k1(a: FeatureRecords, b: FeatureRecords, kp: KernelParams) -> np.ndarray:
    """Colour kernel between every pair, computed from the raw features."""
    e = (np.sum((a.c[:, None, :] - b.c[None, :, :]) ** 2, axis=-1) / kp.sigma_c ** 2
         + (a.t[:, None] - b.t[None, :]) ** 2 / kp.sigma_t ** 2
         + (a.s[:, None] - b.s[None, :]) ** 2 / kp.sigma_s ** 2
         + (a.d[:, None] - b.d[None, :]) ** 2 / kp.sigma_d ** 2)
    return np.exp(-e)


def kernel_k2(a: FeatureRecords, b: FeatureRecords, kp: KernelParams) -> np.ndarray:
    """Gradient kernel between every pair, computed from the raw features."""
    e = (np.sum((a.h[:, None, :] - b.h[None, :, :]) ** 2, axis=-1) / kp.sigma_h ** 2
         + (a.t[:, None] - b.t[None, :]) ** 2 / kp.sigma_t ** 2
         + (a.s[:, None] - b.s[None, :]) ** 2 / kp.sigma_s ** 2
         + (a.d[:, None] - b.d[None, :]) ** 2 / kp.sigma_d ** 2)
    return np.exp(-e)


def brute_transfer(sample_features: FeatureRecords, label_vectors, query_features: FeatureRecords,
                   kp: KernelParams) -> np.ndarray:
    """Exact ``q_i = sum_j (w1 k1 + w2 k2)(x_i, x_j) q'_j``."""
    k = kp.w1 * kernel_k1(query_features, sample_features, kp) + kp.w2 * kernel_k2(query_features, sample_features, kp)
    return k @ np.asarray(label_vectors, dtype=np.float64)


def relative_l1(approx, exact) -> np.ndarray:
    """Per-row ``|approx - exact|_1 / |exact|_1`` (rows with zero mass count as 0 if matched)."""
    approx = np.asarray(approx, dtype=np.float64)
    exact = np.asarray(exact, dtype=np.float64)
    num = np.abs(approx - exact).sum(axis=1)
    den = np.abs(exact).sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(den > 0, num / den, np.where(num > 0, np.inf, 0.0))
    return rel
