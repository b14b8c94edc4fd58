"""Seeded synthetic scene corpora with exact label maps.

Scenes are laid out on a coarse block grid: class 0 fills a top band, class
L-1 a bottom band, and the middle rows are filled with runs of the remaining
classes.  Every class has its own colour, noise level and stripe texture, so
colour, gray-level spread and gradient orientation all carry signal.
Distractor scenes copy the layout of one query scene (freshly rendered, so
pixels differ) but carry an unrelated annotation dominated by a single class:
appearance-based retrieval ranks them highly while their class histograms
are atypical.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import ImageRGB, LabelMap, Palette, save_image, save_labelmap, save_palette

_BASE_COLORS = np.array([
    [110, 160, 230],  # sky-ish
    [60, 140, 60],
    [170, 90, 60],
    [120, 110, 100],
    [220, 200, 80],
    [150, 60, 160],
    [60, 170, 170],
    [200, 120, 150],
], dtype=np.float64)

_NAMES = ["sky", "tree", "building", "road", "sand", "flower", "water", "car"]


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 0
    num_train: int = 60
    num_query: int = 10
    size: int = 128
    num_classes: int = 4
    block: int = 16
    num_distractors: int = 0
    rare_class: int | None = None  # class restricted to about rare_fraction of each image
    rare_fraction: float = 0.02
    color_jitter: float = 8.0  # per-image, per-class colour shift (std, 0-255 units)
    noise: float = 6.0  # pixel noise std on top of the class-specific level


def class_colors(num_classes: int) -> np.ndarray:
    if num_classes <= len(_BASE_COLORS):
        return _BASE_COLORS[:num_classes].copy()
    rng = np.random.default_rng(7)
    extra = rng.uniform(30, 230, (num_classes - len(_BASE_COLORS), 3))
    return np.vstack([_BASE_COLORS, extra])


def palette(num_classes: int) -> Palette:
    names = [_NAMES[i] if i < len(_NAMES) else f"class{i}" for i in range(num_classes)]
    return Palette(names, class_colors(num_classes).astype(np.uint8))


def _layout(rng: np.random.Generator, spec: SynthSpec, distractor: bool) -> np.ndarray:
    L, nb = spec.num_classes, spec.size // spec.block
    grid = np.empty((nb, nb), dtype=np.int64)
    if distractor:
        main = rng.integers(L)
        grid[:] = main
        others = rng.random((nb, nb)) < 0.25
        grid[others] = rng.integers(0, L, others.sum())
    elif L == 2:
        cut = rng.integers(2, nb - 1)
        grid[:cut], grid[cut:] = 0, 1
    else:
        top = rng.integers(1, max(2, nb // 3) + 1)
        bottom = rng.integers(1, max(2, nb // 3) + 1)
        grid[:top] = 0
        grid[nb - bottom:] = L - 1
        middle = list(range(1, L - 1))
        for r in range(top, nb - bottom):
            c = 0
            while c < nb:
                run = rng.integers(2, nb + 1)
                grid[r, c:c + run] = middle[rng.integers(len(middle))]
                c += run
    if spec.rare_class is not None and not distractor:
        grid[grid == spec.rare_class] = (spec.rare_class + 1) % L
        n_rare = max(1, round(spec.rare_fraction * nb * nb))
        cells = rng.choice(nb * nb, n_rare, replace=False)
        grid.flat[cells] = spec.rare_class
    return np.kron(grid, np.ones((spec.block, spec.block), dtype=np.int64))


def _render(rng: np.random.Generator, labels: np.ndarray, colors: np.ndarray,
            jitter_std: float, noise_std: float) -> np.ndarray:
    h, w = labels.shape
    L = colors.shape[0]
    ys, xs = np.indices((h, w))
    out = np.empty((h, w, 3))
    jitter = rng.normal(0, jitter_std, (L, 3))
    for c in range(L):
        m = labels == c
        if not m.any():
            continue
        angle = np.pi * c / L
        period = 4 + 2 * (c % 3)
        stripes = np.sin(2 * np.pi * (xs * np.cos(angle) + ys * np.sin(angle)) / period)
        amp = 6 + 4 * (c % 2)
        noise = rng.normal(0, noise_std + 2 * (c % 3), (h, w))
        val = colors[c] + jitter[c] + (amp * stripes + noise)[..., None]
        out[m] = val[m]
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def make_scene(spec: SynthSpec, role: int, index: int) -> tuple[ImageRGB, LabelMap]:
    """One scene; ``role`` 0 = train, 1 = query, 2 = distractor."""
    rng = np.random.default_rng([spec.seed, role, index])
    if role == 2 and spec.num_query > 0:
        # same layout stream as the mimicked query, fresh rendering noise
        layout = _layout(np.random.default_rng([spec.seed, 1, index % spec.num_query]), spec, distractor=False)
    else:
        layout = _layout(rng, spec, distractor=False)
    image = _render(rng, layout, class_colors(spec.num_classes), spec.color_jitter, spec.noise)
    labels = _layout(rng, spec, distractor=True) if role == 2 else layout
    return ImageRGB(image), LabelMap(labels.astype(np.uint8), spec.num_classes)


def make_synthetic(spec: SynthSpec, out_dir) -> dict[str, Path]:
    """Write images, label maps, manifests and palette under ``out_dir``.

    Returns the paths of ``train.txt``, ``query.txt`` and ``palette.csv``.
    """
    if spec.num_classes < 2:
        raise ValueError("num_classes must be >= 2")
    if spec.size % spec.block:
        raise ValueError("size must be a multiple of block")
    out = Path(out_dir)
    for sub in ("images", "labels"):
        (out / sub).mkdir(parents=True, exist_ok=True)

    def emit(role, index, prefix):
        image, labels = make_scene(spec, role, index)
        name = f"{prefix}{index:04d}"
        save_image(image, out / "images" / f"{name}.png")
        save_labelmap(labels, out / "labels" / f"{name}.png")
        return f"images/{name}.png\tlabels/{name}.png\n"

    train_lines = [emit(0, i, "train") for i in range(spec.num_train)]
    train_lines += [emit(2, i, "distractor") for i in range(spec.num_distractors)]
    query_lines = [emit(1, i, "query") for i in range(spec.num_query)]
    paths = {"train": out / "train.txt", "query": out / "query.txt", "palette": out / "palette.csv"}
    paths["train"].write_text("".join(train_lines))
    paths["query"].write_text("".join(query_lines))
    save_palette(palette(spec.num_classes), paths["palette"])
    return paths
