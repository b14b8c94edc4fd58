"""End-to-end parsing of query images, evaluation and rendering."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import crf, sampler, transfer
from .config import RunConfig
from .dataset import VOID, Dataset, Entry, ImageRGB, LabelMap, Palette, save_image, save_labelmap
from .descriptors import Ranking, TrainingIndex
from .features import FeatureRecords, superpixel_features

log = logging.getLogger(__name__)

STAGES = ("rank", "sample", "features", "transfer", "crf", "write")


@dataclass
class EvalReport:
    confusion: np.ndarray  # (L, L) counts, rows = ground truth
    excluded: int = 0  # queries whose ground truth is entirely VOID
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def class_recall(self) -> np.ndarray:
        gt = self.confusion.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(gt > 0, np.diag(self.confusion) / np.maximum(gt, 1), np.nan)

    @property
    def per_pixel(self) -> float:
        total = self.confusion.sum()
        return float(np.trace(self.confusion) / total) if total else float("nan")

    @property
    def per_class(self) -> float:
        r = self.class_recall
        present = ~np.isnan(r)
        return float(r[present].mean()) if present.any() else float("nan")

    def __add__(self, other: "EvalReport") -> "EvalReport":
        t = dict(self.timings)
        for k, v in other.timings.items():
            t[k] = t.get(k, 0.0) + v
        return EvalReport(self.confusion + other.confusion, self.excluded + other.excluded, t)

    def to_dict(self, timings: bool = False) -> dict:
        out = {
            "per_pixel": self.per_pixel,
            "per_class": self.per_class,
            "class_recall": [None if np.isnan(v) else float(v) for v in self.class_recall],
            "excluded": self.excluded,
        }
        if timings:
            out["timings"] = {k: round(v, 6) for k, v in self.timings.items()}
        return out


def evaluate(pred: LabelMap, gt: LabelMap, num_classes: int | None = None) -> EvalReport:
    """Tally a prediction against ground truth, skipping VOID pixels."""
    if pred.labels.shape != gt.labels.shape:
        raise ValueError(f"prediction is {pred.labels.shape} but ground truth is {gt.labels.shape}")
    L = num_classes or max(pred.num_classes, gt.num_classes)
    g = gt.labels.ravel().astype(np.int64)
    p = pred.labels.ravel().astype(np.int64)
    keep = g != VOID
    if not keep.any():
        return EvalReport(np.zeros((L, L), dtype=np.int64), excluded=1)
    g, p = g[keep], p[keep]
    # a VOID prediction on a labelled pixel counts as wrong but has no column
    ok = p < L
    conf = np.bincount(g[ok] * L + p[ok], minlength=L * L).reshape(L, L)
    miss = np.bincount(g[~ok], minlength=L)
    conf = conf.astype(np.int64)
    # park unrendered misses off the diagonal so recall stays correct
    for c in np.flatnonzero(miss):
        conf[c, (c + 1) % L] += miss[c]
    return EvalReport(conf)


def render_labelmap(labels: LabelMap, palette: Palette) -> ImageRGB:
    lab = labels.labels
    used = np.unique(lab[lab != VOID])
    if used.size and used.max() >= len(palette):
        raise ValueError(f"label {int(used.max())} has no palette entry (palette has {len(palette)})")
    table = np.zeros((256, 3), dtype=np.uint8)
    table[:len(palette)] = palette.colors
    table[VOID] = 0
    return ImageRGB(table[lab.astype(np.int64)])


@dataclass
class QueryResult:
    name: str
    prediction: LabelMap
    scores: transfer.LabelScores
    ranking: Ranking
    sample: sampler.SampleSet
    timings: dict[str, float]
    marginals: np.ndarray | None = None


class Parser:
    """Holds the training set and everything precomputed from it."""

    def __init__(self, train: Dataset, config: RunConfig = RunConfig()):
        if len(train) == 0:
            raise ValueError("training set is empty")
        if any(e.sp_labels is None for e in train.entries):
            raise ValueError("every training image needs a label map")
        self.train = train
        self.config = config
        self.index = TrainingIndex(train, config.descriptors, image_descriptors=not config.pipeline.ideal_ranking)
        self.features = FeatureRecords.concat([superpixel_features(e.image, e.partition) for e in train.entries])
        self.offsets = np.cumsum([0] + [e.partition.count for e in train.entries])
        self.dtype = np.dtype(config.pipeline.precision)

    def rank(self, entry: Entry) -> Ranking:
        if self.config.pipeline.ideal_ranking:
            if entry.labels is None:
                raise ValueError("ideal ranking needs the query's ground truth")
            return self.index.rank_ideal(entry.labels)
        return self.index.rank(entry.image)

    def parse(self, entry: Entry) -> QueryResult:
        cfg = self.config
        timings = {}
        t0 = time.perf_counter()
        ranking = self.rank(entry)
        t1 = time.perf_counter()
        s = sampler.with_scores(sampler.assign_dissimilarity(ranking, self.train), cfg.sampler.sigma_d_sample)
        sample = sampler.sample_balanced(s, cfg.sampler.cap, cfg.sampler.seed, self.train.num_classes)
        t2 = time.perf_counter()
        rows = self.offsets[sample.image_ids] + sample.sp_ids
        sample = sample.with_features(self.features.take(rows).with_d(sample.d))
        qf = superpixel_features(entry.image, entry.partition)
        t3 = time.perf_counter()
        scores = transfer.finalize(transfer.transfer(sample, qf, cfg.kernel, dtype=self.dtype))
        t4 = time.perf_counter()
        marginals = None
        if cfg.pipeline.no_crf:
            pred = LabelMap(scores.argmax[entry.partition.assignment].astype(np.int32), self.train.num_classes)
        else:
            size = (entry.image.height, entry.image.width)
            prior = crf.location_prior(ranking, self.train, size, cfg.crf.prior_k) if cfg.crf.w_loc else None
            costs = crf.pixel_unary(scores.u, entry.partition, prior, cfg.crf.w_loc)
            marginals, pred = crf.meanfield(costs, entry.image, cfg.crf)
        t5 = time.perf_counter()
        timings.update(rank=t1 - t0, sample=t2 - t1, features=t3 - t2, transfer=t4 - t3, crf=t5 - t4)
        return QueryResult(entry.name, pred, scores, ranking, sample, timings, marginals)


def write_result(result: QueryResult, out_dir, palette: Palette) -> None:
    out = Path(out_dir)
    save_labelmap(result.prediction, out / f"{result.name}.pgm")
    save_image(render_labelmap(result.prediction, palette), out / f"{result.name}.png")


def run(train: Dataset, queries: Dataset, config: RunConfig, out_dir=None) -> tuple[EvalReport | None, list[str]]:
    """Parse every query in manifest order.

    Returns the aggregate report (None without ground truth) and the names of
    queries that failed.  Failures are logged and skipped.
    """
    parser = Parser(train, config)
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
    total = None
    failed = []
    per_query = []
    timing_rows = []
    for entry in queries.entries:
        try:
            res = parser.parse(entry)
            t = time.perf_counter()
            if out_dir is not None:
                write_result(res, out_dir, train.palette)
            res.timings["write"] = time.perf_counter() - t
            timing_rows.append({"name": entry.name, "t": res.timings})
        except Exception as exc:  # noqa: BLE001 - one bad query must not stop the batch
            log.error("query %s failed: %s", entry.name, exc)
            failed.append(entry.name)
            continue
        if entry.labels is not None:
            rep = evaluate(res.prediction, entry.labels, train.num_classes)
            rep.timings = dict(res.timings)
            per_query.append({"name": entry.name, **rep.to_dict()})
            total = rep if total is None else total + rep
        log.info("parsed %s in %.3f s", entry.name, sum(res.timings.values()))
    if out_dir is not None:
        # timings live in their own file so report.json is reproducible
        doc = {"queries": per_query, "failed": failed,
               "aggregate": total.to_dict() if total is not None else None}
        (Path(out_dir) / "report.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        lines = ["query," + ",".join(STAGES)]
        lines += [q["name"] + "," + ",".join(f"{q['t'].get(k, 0.0):.6f}" for k in STAGES) for q in timing_rows]
        (Path(out_dir) / "timings.csv").write_text("\n".join(lines) + "\n")
    return total, failed
