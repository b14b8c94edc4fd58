import numpy as np
import pytest

from samplefilter.dataset import Dataset, ImageRGB, LabelMap, Palette, make_entry, load_dataset, load_palette
from samplefilter.synth import SynthSpec, make_synthetic

# PASS/FAIL lines appended by test_acceptance.py
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)


def solid(h, w, rgb):
    px = np.empty((h, w, 3), dtype=np.uint8)
    px[:] = rgb
    return ImageRGB(px)


def random_image(rng, h=32, w=32):
    return ImageRGB(rng.integers(0, 256, (h, w, 3)).astype(np.uint8))


def tiny_dataset(images, label_maps, cell=8, num_classes=None):
    L = num_classes or max(int(m.num_classes) for m in label_maps)
    entries = [make_entry(im, lm, cell, name=f"e{i}") for i, (im, lm) in enumerate(zip(images, label_maps))]
    return Dataset(entries, L, Palette.default(L))


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    """The default seeded synthetic corpus, loaded once per session."""
    root = tmp_path_factory.mktemp("corpus")
    paths = make_synthetic(SynthSpec(seed=0), root)
    pal = load_palette(paths["palette"])
    train = load_dataset(paths["train"], 16, palette=pal)
    queries = load_dataset(paths["query"], 16, palette=pal)
    return paths, train, queries
