"""Global image descriptors, chi-squared distances and training-image ranking."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .dataset import Dataset, ImageRGB, LabelMap

CHI2_EPS = 1e-12
_NORM_EPS = 1e-12

KINDS = ("color-pyramid", "gist-like", "hog-global", "gt-class-hist")


@dataclass(frozen=True)
class Descriptor:
    values: np.ndarray
    kind: str

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class Ranking:
    ordered: np.ndarray  # training indices, most similar first
    per_image_d: np.ndarray  # dissimilarity indexed by training index

    def rank_of(self, index: int) -> int:
        """1-based rank of a training image."""
        return int(np.flatnonzero(self.ordered == index)[0]) + 1


@dataclass(frozen=True)
class DescriptorParams:
    pyramid_levels: int = 2
    color_bins: int = 4
    gist_grid: int = 4
    gist_orientations: int = 8
    hog_orientations: int = 12


def _l1(h: np.ndarray) -> np.ndarray:
    s = h.sum()
    if s < _NORM_EPS:
        return np.full(h.shape, 1.0 / h.size)
    return h / s


def gradients(gray: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Central differences with replicated borders."""
    p = np.pad(gray, 1, mode="edge")
    gx = 0.5 * (p[1:-1, 2:] - p[1:-1, :-2])
    gy = 0.5 * (p[2:, 1:-1] - p[:-2, 1:-1])
    return gx, gy


def orientation_bins(gx: np.ndarray, gy: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Unsigned orientation bin (centred on k*pi/n) and magnitude per pixel."""
    # fold to a canonical sign so that g and -g give bit-identical angles
    flip = (gx < 0) | ((gx == 0) & (gy < 0))
    fx = np.where(flip, -gx, gx)
    fy = np.where(flip, -gy, gy)
    theta = np.arctan2(fy, fx) % np.pi
    bins = np.floor(theta / np.pi * n + 0.5).astype(np.int64) % n
    return bins, np.hypot(gx, gy)


def color_pyramid(image: ImageRGB, levels: int = 2, bins_per_channel: int = 4) -> Descriptor:
    if levels < 1 or bins_per_channel < 2:
        raise ValueError("levels must be >= 1 and bins_per_channel >= 2")
    b = bins_per_channel
    q = (image.pixels.astype(np.int64) * b) // 256
    code = (q[..., 0] * b + q[..., 1]) * b + q[..., 2]
    h, w = code.shape
    parts = []
    for level in range(levels):
        n = 2 ** level
        ys = np.linspace(0, h, n + 1).astype(int)
        xs = np.linspace(0, w, n + 1).astype(int)
        for i in range(n):
            for j in range(n):
                cell = code[ys[i]:ys[i + 1], xs[j]:xs[j + 1]]
                parts.append(np.bincount(cell.ravel(), minlength=b ** 3))
    return Descriptor(_l1(np.concatenate(parts).astype(np.float64)), "color-pyramid")


def gist_like(image: ImageRGB, grid: int = 4, orientations: int = 8) -> Descriptor:
    """Tiled magnitude-weighted orientation histograms (a GIST stand-in)."""
    if grid < 1 or orientations < 2:
        raise ValueError("grid must be >= 1 and orientations >= 2")
    bins, mag = orientation_bins(*gradients(image.gray()), orientations)
    h, w = bins.shape
    cy = np.minimum(np.arange(h) * grid // h, grid - 1)
    cx = np.minimum(np.arange(w) * grid // w, grid - 1)
    cell = cy[:, None] * grid + cx[None, :]
    idx = (cell * orientations + bins).ravel()
    hist = np.bincount(idx, weights=mag.ravel(), minlength=grid * grid * orientations)
    return Descriptor(_l1(hist), "gist-like")


def hog_global(image: ImageRGB, orientations: int = 12) -> Descriptor:
    if orientations < 2:
        raise ValueError("orientations must be >= 2")
    bins, mag = orientation_bins(*gradients(image.gray()), orientations)
    hist = np.bincount(bins.ravel(), weights=mag.ravel(), minlength=orientations)
    return Descriptor(_l1(hist), "hog-global")


def class_histogram(labels: LabelMap) -> Descriptor:
    if labels.fully_void:
        raise ValueError("label map is entirely VOID")
    return Descriptor(_l1(labels.histogram()), "gt-class-hist")


def chi2(a: Descriptor, b: Descriptor) -> float:
    if a.kind != b.kind:
        raise ValueError(f"descriptor kinds differ: {a.kind} vs {b.kind}")
    if len(a) != len(b):
        raise ValueError(f"descriptor lengths differ: {len(a)} vs {len(b)}")
    x, y = a.values, b.values
    return float(0.5 * np.sum((x - y) ** 2 / (x + y + CHI2_EPS)))


def chi2_many(query: np.ndarray, train: np.ndarray) -> np.ndarray:
    """chi2 from one descriptor vector to each row of ``train``."""
    diff = train - query[None, :]
    return 0.5 * np.sum(diff * diff / (train + query[None, :] + CHI2_EPS), axis=1)


def describe(image: ImageRGB, params: DescriptorParams = DescriptorParams()) -> list[Descriptor]:
    return [
        color_pyramid(image, params.pyramid_levels, params.color_bins),
        gist_like(image, params.gist_grid, params.gist_orientations),
        hog_global(image, params.hog_orientations),
    ]


def ranking_from_order(order: np.ndarray) -> Ranking:
    m = len(order)
    d = np.empty(m)
    d[order] = np.arange(1, m + 1) / m
    return Ranking(np.asarray(order, dtype=np.int64), d)


def fuse_rankings(distances: list[np.ndarray]) -> Ranking:
    """Average the per-descriptor rank positions and sort by the average.

    Ties (in a distance or in the average rank) go to the lower training index.
    """
    m = len(distances[0])
    ranks = np.zeros(m)
    for dist in distances:
        order = np.argsort(dist, kind="stable")
        pos = np.empty(m)
        pos[order] = np.arange(1, m + 1)
        ranks += pos
    return ranking_from_order(np.argsort(ranks / len(distances), kind="stable"))


class TrainingIndex:
    """Precomputed training descriptors so several queries can be ranked cheaply."""

    def __init__(self, train: Dataset, params: DescriptorParams = DescriptorParams(),
                 image_descriptors: bool = True):
        if len(train) == 0:
            raise ValueError("training set is empty")
        self.params = params
        self.matrices = None
        if image_descriptors:
            descs = [describe(e.image, params) for e in train.entries]
            self.matrices = [np.stack([d[k].values for d in descs]) for k in range(3)]
        self._class_hists = None
        self._train = train

    def rank(self, query: ImageRGB) -> Ranking:
        if self.matrices is None:
            raise ValueError("index was built without image descriptors")
        qd = describe(query, self.params)
        return fuse_rankings([chi2_many(q.values, m) for q, m in zip(qd, self.matrices)])

    def rank_ideal(self, query_labels: LabelMap) -> Ranking:
        q = class_histogram(query_labels).values
        if self._class_hists is None:
            self._class_hists = np.stack([
                _l1(e.labels.histogram()) if e.labels is not None else np.full(q.shape, 1.0 / q.size)
                for e in self._train.entries
            ])
        dist = chi2_many(q, self._class_hists)
        return ranking_from_order(np.argsort(dist, kind="stable"))


def rank_images(query: ImageRGB, train: Dataset, params: DescriptorParams = DescriptorParams()) -> Ranking:
    return TrainingIndex(train, params).rank(query)


def rank_images_ideal(query_labels: LabelMap, train: Dataset) -> Ranking:
    q = class_histogram(query_labels).values
    hists = np.stack([_l1(e.labels.histogram()) for e in train.entries])
    return ranking_from_order(np.argsort(chi2_many(q, hists), kind="stable"))


_MAGIC = b"SFDC"


def save_descriptor(desc: Descriptor, path) -> None:
    """Binary cache: magic, kind index, length, then little-endian float32 values."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC + struct.pack("<II", KINDS.index(desc.kind), len(desc)))
        fh.write(desc.values.astype("<f4").tobytes())


def load_descriptor(path) -> Descriptor:
    with open(path, "rb") as fh:
        head = fh.read(12)
        if len(head) != 12 or head[:4] != _MAGIC:
            raise ValueError(f"{path}: not a descriptor cache file")
        kind, n = struct.unpack("<II", head[4:])
        if kind >= len(KINDS):
            raise ValueError(f"{path}: unknown descriptor kind {kind}")
        data = np.frombuffer(fh.read(4 * n), dtype="<f4")
        if data.size != n:
            raise ValueError(f"{path}: truncated (expected {n} values, got {data.size})")
    return Descriptor(data.astype(np.float64), KINDS[kind])
