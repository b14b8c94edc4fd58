import hashlib

import numpy as np
import pytest

from samplefilter.dataset import load_dataset, load_palette
from samplefilter.synth import SynthSpec, make_scene, make_synthetic


def _digest(root):
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(p.relative_to(root).as_posix().encode())
            h.update(p.read_bytes())
    return h.hexdigest()


def test_byte_identical_rerun(tmp_path):
    spec = SynthSpec(seed=3, num_train=4, num_query=2, num_distractors=1)
    make_synthetic(spec, tmp_path / "a")
    make_synthetic(spec, tmp_path / "b")
    assert _digest(tmp_path / "a") == _digest(tmp_path / "b")


def test_default_corpus_shape(corpus):
    paths, train, queries = corpus
    assert len(train) == 60 and len(queries) == 10 and train.num_classes == 4
    assert train[0].image.pixels.shape == (128, 128, 3)
    assert len(load_palette(paths["palette"])) == 4
    assert set(np.unique(np.concatenate([e.sp_labels for e in train.entries]))) == {0, 1, 2, 3}


def test_rare_class_option():
    spec = SynthSpec(rare_class=2)
    fracs = [np.mean(make_scene(spec, 0, i)[1].labels == 2) for i in range(10)]
    assert np.mean(fracs) == pytest.approx(0.02, abs=0.01)


def test_distractors_dominated_by_one_class():
    _, lab = make_scene(SynthSpec(), 2, 0)
    assert np.bincount(lab.labels.ravel(), minlength=4).max() / lab.labels.size >= 0.6


def test_bad_spec(tmp_path):
    with pytest.raises(ValueError):
        make_synthetic(SynthSpec(num_classes=1), tmp_path)


def test_distractor_mimics_query_appearance():
    spec = SynthSpec(num_query=3)
    q_img, q_lab = make_scene(spec, 1, 1)
    d_img, d_lab = make_scene(spec, 2, 4)  # 4 % 3 == 1
    assert not np.array_equal(q_img.pixels, d_img.pixels)
    # per-block mean colour follows the query's layout, not the distractor's labels
    blocks = lambda px: px.reshape(8, 16, 8, 16, 3).mean(axis=(1, 3))
    assert np.abs(blocks(q_img.pixels.astype(float)) - blocks(d_img.pixels.astype(float))).max() < 40
    assert not np.array_equal(q_lab.labels, d_lab.labels)
