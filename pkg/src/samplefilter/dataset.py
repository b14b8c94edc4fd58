"""Images, label maps, grid superpixels and the training corpus."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

log = logging.getLogger(__name__)

VOID = 255


class DatasetError(Exception):
    """Raised for unreadable, malformed or inconsistent inputs."""


@dataclass(frozen=True)
class ImageRGB:
    pixels: np.ndarray  # (H, W, 3) uint8

    def __post_init__(self):
        p = self.pixels
        if p.ndim != 3 or p.shape[2] != 3 or p.shape[0] < 1 or p.shape[1] < 1:
            raise ValueError(f"expected a non-empty (H, W, 3) array, got {p.shape}")
        if p.dtype != np.uint8:
            raise ValueError(f"expected uint8 pixels, got {p.dtype}")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def gray(self) -> np.ndarray:
        p = self.pixels.astype(np.float64)
        return 0.299 * p[..., 0] + 0.587 * p[..., 1] + 0.114 * p[..., 2]


@dataclass(frozen=True)
class LabelMap:
    labels: np.ndarray  # (H, W) integer, VOID for unlabeled pixels
    num_classes: int

    def __post_init__(self):
        if self.labels.ndim != 2:
            raise ValueError(f"label map must be 2-D, got {self.labels.shape}")
        if not 1 <= self.num_classes < VOID:
            raise ValueError(f"num_classes must be in [1, {VOID - 1}], got {self.num_classes}")
        bad = (self.labels != VOID) & ((self.labels < 0) | (self.labels >= self.num_classes))
        if bad.any():
            y, x = np.argwhere(bad)[0]
            raise DatasetError(
                f"label value {int(self.labels[y, x])} at pixel (x={x}, y={y}) "
                f"is outside [0, {self.num_classes}) and is not VOID"
            )

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def fully_void(self) -> bool:
        return bool(np.all(self.labels == VOID))

    def histogram(self) -> np.ndarray:
        valid = self.labels[self.labels != VOID]
        return np.bincount(valid.ravel(), minlength=self.num_classes).astype(np.float64)


@dataclass(frozen=True)
class SuperpixelPartition:
    assignment: np.ndarray  # (H, W) int32, dense ids 0..count-1
    count: int
    extents: np.ndarray  # (count, 4) as (row0, col0, row1, col1), end-exclusive

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment.ravel(), minlength=self.count)


def grid_superpixels(image: ImageRGB | tuple[int, int], cell: int = 16) -> SuperpixelPartition:
    """Tile the image into ``cell`` x ``cell`` blocks numbered in row-major order.

    Border blocks are clipped to the image.  ``image`` may also be a
    ``(height, width)`` tuple.
    """
    if cell < 1:
        raise ValueError(f"cell must be >= 1, got {cell}")
    h, w = (image.height, image.width) if isinstance(image, ImageRGB) else image
    ny, nx = -(-h // cell), -(-w // cell)
    rows = np.arange(h) // cell
    cols = np.arange(w) // cell
    assignment = (rows[:, None] * nx + cols[None, :]).astype(np.int32)
    gy, gx = np.divmod(np.arange(ny * nx), nx)
    extents = np.stack(
        [gy * cell, gx * cell, np.minimum((gy + 1) * cell, h), np.minimum((gx + 1) * cell, w)],
        axis=1,
    )
    return SuperpixelPartition(assignment, ny * nx, extents)


def majority_labels(labels: LabelMap, part: SuperpixelPartition) -> np.ndarray:
    """Mode of the non-VOID labels in each superpixel; VOID if there are none.

    Ties go to the smaller class index.
    """
    lab = labels.labels.ravel()
    sp = part.assignment.ravel()
    keep = lab != VOID
    counts = np.zeros((part.count, labels.num_classes), dtype=np.int64)
    np.add.at(counts, (sp[keep], lab[keep].astype(np.int64)), 1)
    out = counts.argmax(axis=1).astype(np.int32)  # argmax picks the first maximum
    out[counts.sum(axis=1) == 0] = VOID
    return out


def _open_raster(path) -> Image.Image:
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"{path}: file not found")
    try:
        img = Image.open(path)
        img.load()
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise DatasetError(f"{path}: unsupported or corrupt raster ({exc})") from exc
    if img.format not in ("PNG", "PPM"):
        raise DatasetError(f"{path}: unsupported format {img.format!r} (expected PNG or PPM/PGM)")
    return img


def load_image(path) -> ImageRGB:
    img = _open_raster(path)
    if img.mode in ("I", "I;16", "F"):
        raise DatasetError(f"{path}: unsupported image mode {img.mode}")
    return ImageRGB(np.array(img.convert("RGB"), dtype=np.uint8))


def load_labelmap(path, num_classes: int) -> LabelMap:
    img = _open_raster(path)
    if img.mode not in ("L", "P"):
        raise DatasetError(f"{path}: label map must be single-channel, got mode {img.mode}")
    labels = np.array(img, dtype=np.uint8)
    try:
        return LabelMap(labels, num_classes)
    except DatasetError as exc:
        raise DatasetError(f"{path}: {exc}") from None


def save_image(image: ImageRGB, path) -> None:
    path = Path(path)
    fmt = "PPM" if path.suffix.lower() == ".ppm" else "PNG"
    Image.fromarray(image.pixels, mode="RGB").save(path, format=fmt)


def save_labelmap(labels: LabelMap, path) -> None:
    """Write raw class indices as PGM (``.pgm``) or grayscale PNG."""
    path = Path(path)
    fmt = "PPM" if path.suffix.lower() == ".pgm" else "PNG"
    Image.fromarray(labels.labels.astype(np.uint8), mode="L").save(path, format=fmt)


@dataclass(frozen=True)
class Palette:
    names: list[str]
    colors: np.ndarray  # (L, 3) uint8

    def __len__(self) -> int:
        return len(self.names)

    def inverse(self, image: ImageRGB) -> LabelMap:
        """Map a rendered image back to class indices; black becomes VOID."""
        px = image.pixels.reshape(-1, 3).astype(np.int64)
        code = (px[:, 0] << 16) | (px[:, 1] << 8) | px[:, 2]
        c = self.colors.astype(np.int64)
        table = dict(zip(((c[:, 0] << 16) | (c[:, 1] << 8) | c[:, 2]).tolist(), range(len(self))))
        table.setdefault(0, VOID)
        try:
            out = np.array([table[v] for v in code.tolist()], dtype=np.int32)
        except KeyError as exc:
            raise DatasetError(f"color {exc.args[0]:06x} is not in the palette") from None
        return LabelMap(out.reshape(image.height, image.width), len(self))

    @classmethod
    def default(cls, num_classes: int) -> "Palette":
        rng = np.random.default_rng(12345)
        colors = rng.integers(40, 256, size=(num_classes, 3)).astype(np.uint8)
        return cls([f"class{i}" for i in range(num_classes)], colors)


def load_palette(path) -> Palette:
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or row[0].startswith("#") or row[0] == "index":
                continue
            try:
                idx, name, r, g, b = row
                rows.append((int(idx), name, (int(r), int(g), int(b))))
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: expected index,name,r,g,b") from None
    rows.sort()
    if [r[0] for r in rows] != list(range(len(rows))):
        raise DatasetError(f"{path}: palette indices must be 0..L-1 without gaps")
    return Palette([r[1] for r in rows], np.array([r[2] for r in rows], dtype=np.uint8))


def save_palette(palette: Palette, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["index", "name", "r", "g", "b"])
        for i, (name, c) in enumerate(zip(palette.names, palette.colors)):
            wr.writerow([i, name, *map(int, c)])


@dataclass(frozen=True)
class Entry:
    image: ImageRGB
    labels: LabelMap | None
    partition: SuperpixelPartition
    sp_labels: np.ndarray | None  # majority label per superpixel, VOID if unusable
    name: str = ""


@dataclass(frozen=True)
class Dataset:
    entries: list[Entry]
    num_classes: int
    palette: Palette = field(default=None)

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, i) -> Entry:
        return self.entries[i]


def make_entry(image: ImageRGB, labels: LabelMap | None, cell: int, name: str = "") -> Entry:
    if labels is not None and (labels.height, labels.width) != (image.height, image.width):
        raise DatasetError(
            f"label map is {labels.width}x{labels.height} but image is {image.width}x{image.height}"
        )
    part = grid_superpixels(image, cell)
    sp = majority_labels(labels, part) if labels is not None else None
    return Entry(image, labels, part, sp, name)


def read_manifest(path) -> list[tuple[int, Path, Path | None]]:
    """Parse ``image<TAB>label`` lines; the label column is optional."""
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"{path}: file not found")
    base = path.parent
    out = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) > 2:
            raise DatasetError(f"{path}:{lineno}: expected image_path<TAB>label_path")
        img = base / cols[0].strip()
        lab = base / cols[1].strip() if len(cols) == 2 and cols[1].strip() else None
        out.append((lineno, img, lab))
    return out


def load_dataset(manifest, cell: int = 16, num_classes: int | None = None,
                 palette: Palette | None = None, require_labels: bool = True) -> Dataset:
    """Load every manifest entry, computing grid partitions and majority labels.

    ``num_classes`` defaults to the palette size.  Any failing entry aborts the
    load with its line number.
    """
    if num_classes is None:
        if palette is None:
            raise ValueError("either num_classes or palette is required")
        num_classes = len(palette)
    entries = []
    for lineno, img_path, lab_path in read_manifest(manifest):
        try:
            image = load_image(img_path)
            if lab_path is None and require_labels:
                raise DatasetError("missing label path")
            labels = load_labelmap(lab_path, num_classes) if lab_path is not None else None
            entries.append(make_entry(image, labels, cell, name=img_path.stem))
        except DatasetError as exc:
            raise DatasetError(f"{manifest}:{lineno}: {exc}") from None
    log.debug("loaded %d entries from %s", len(entries), manifest)
    return Dataset(entries, num_classes, palette or Palette.default(num_classes))
