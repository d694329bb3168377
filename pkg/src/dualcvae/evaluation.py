"""Best-of-K sampling, minADE/minFDE, the linear baseline and the pattern census."""
from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .batch import SceneBatch
from .data import SceneWindow
from .model import SocialDualCVAE, Streams
from .rng import substream


@dataclass
class PredictionSet:
    samples: np.ndarray  # K x N x T x 2
    ground_truth: np.ndarray  # N x T x 2
    window_id: str = ""

    def __post_init__(self):
        if self.samples.ndim != 4 or self.samples.shape[0] < 1:
            raise ValueError(f"samples must be K x N x T x 2 with K >= 1, got {self.samples.shape}")
        if self.samples.shape[1:] != self.ground_truth.shape:
            raise ValueError(f"sample shape {self.samples.shape[1:]} != ground truth {self.ground_truth.shape}")

    @property
    def k(self) -> int:
        return self.samples.shape[0]


@dataclass
class MetricReport:
    min_ade: float
    min_fde: float
    k: int
    per_scene: dict[str, dict[str, float]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"K": self.k, "min_ade": self.min_ade, "min_fde": self.min_fde, "per_scene": self.per_scene}


def _errors(pred: PredictionSet) -> np.ndarray:
    return np.linalg.norm(pred.samples - pred.ground_truth[None], axis=-1)  # K x N x T


def min_ade(pred: PredictionSet, per_pedestrian: bool = False) -> float:
    """Best-of-K average displacement error.

    By default one sample index is chosen for the whole scene (the mean over
    pedestrians sits inside the min); ``per_pedestrian`` picks the best sample
    for each pedestrian separately.
    """
    ade = _errors(pred).mean(axis=2)  # K x N
    if per_pedestrian:
        return float(ade.min(axis=0).mean())
    return float(ade.mean(axis=1).min())


def min_fde(pred: PredictionSet, per_pedestrian: bool = False) -> float:
    fde = _errors(pred)[:, :, -1]
    if per_pedestrian:
        return float(fde.min(axis=0).mean())
    return float(fde.mean(axis=1).min())


def sample_k_predictions(window: SceneWindow, k: int, model: SocialDualCVAE, seed: int,
                         window_index: int = 0) -> PredictionSet:
    """K prior-path samples with dropout off; sample ``i`` uses the stream ``(seed, window_index, i)``."""
    if k < 1:
        raise ValueError("K must be at least 1")
    was_training = model.training
    model.eval()
    try:
        batch = SceneBatch.from_windows([window])
        t_pred = window.future.shape[1]

        def streams_for(i: int) -> Streams:
            return Streams(substream(seed, "eval-gumbel", window_index, i),
                           substream(seed, "eval-epsilon", window_index, i))

        samples = model.sample(batch, k, t_pred, streams_for)
    finally:
        model.train(was_training)
    return PredictionSet(samples, window.future, window.window_id)


def linear_predict(window: SceneWindow) -> np.ndarray:
    """Least-squares straight-line fit to each observed track, extrapolated forward."""
    t_obs, t_pred = window.observed.shape[1], window.future.shape[1]
    t = np.arange(t_obs)
    design = np.stack([np.ones(t_obs), t], axis=1)
    coef, *_ = np.linalg.lstsq(design, window.observed.transpose(1, 0, 2).reshape(t_obs, -1), rcond=None)
    future_t = np.stack([np.ones(t_pred), np.arange(t_obs, t_obs + t_pred)], axis=1)
    out = future_t @ coef
    return out.reshape(t_pred, window.num_peds, 2).transpose(1, 0, 2)


def _report(per_window: dict[str, list[tuple[float, float]]], k: int) -> MetricReport:
    per_scene = {}
    for scene in sorted(per_window):
        vals = np.array(per_window[scene])
        per_scene[scene] = {"min_ade": float(vals[:, 0].mean()), "min_fde": float(vals[:, 1].mean()),
                            "windows": int(len(vals))}
    if not per_scene:
        return MetricReport(float("nan"), float("nan"), k, {})
    ade = float(np.mean([v["min_ade"] for v in per_scene.values()]))
    fde = float(np.mean([v["min_fde"] for v in per_scene.values()]))
    return MetricReport(ade, fde, k, per_scene)


def evaluate(windows: list[SceneWindow], model: SocialDualCVAE, k: int = 20, seed: int = 0,
             per_pedestrian: bool = False) -> MetricReport:
    """Mean over windows within each scene; the overall figure averages the scenes."""
    per_window: dict[str, list[tuple[float, float]]] = defaultdict(list)
    for idx, w in enumerate(windows):
        pred = sample_k_predictions(w, k, model, seed, idx)
        per_window[w.scene].append((min_ade(pred, per_pedestrian), min_fde(pred, per_pedestrian)))
    return _report(per_window, k)


def evaluate_linear(windows: list[SceneWindow]) -> MetricReport:
    per_window: dict[str, list[tuple[float, float]]] = defaultdict(list)
    for w in windows:
        pred = PredictionSet(linear_predict(w)[None], w.future, w.window_id)
        per_window[w.scene].append((min_ade(pred), min_fde(pred)))
    return _report(per_window, 1)


def write_sample_dump(path: str | Path, predictions: list[PredictionSet],
                      windows: list[SceneWindow]) -> None:
    """One row per (window, pedestrian, k, t) with the predicted position."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["window_id", "pedestrian_id", "k", "t", "x", "y"])
        for pred, w in zip(predictions, windows):
            for k in range(pred.k):
                for n, ped in enumerate(w.pedestrian_ids):
                    for t in range(pred.samples.shape[2]):
                        x, y = pred.samples[k, n, t]
                        out.writerow([pred.window_id, ped, k, t, repr(float(x)), repr(float(y))])


def pattern_census(windows: list[SceneWindow], model: SocialDualCVAE,
                   exemplars_per_class: int = 5) -> dict:
    """Hard-argmax prior class of every ordered pair; ties resolve to the lowest class index."""
    num = model.cfg.patterns.num_patterns
    counts = np.zeros(num, dtype=np.int64)
    exemplars: dict[int, list[dict]] = {c: [] for c in range(num)}
    was_training = model.training
    model.eval()
    try:
        for w in windows:
            if w.num_peds < 2:
                continue
            batch = SceneBatch.from_windows([w])
            classes = model.pattern_logits(batch).argmax(axis=-1)
            counts += np.bincount(classes, minlength=num)
            for cls, i, j in zip(classes, batch.pairs.src, batch.pairs.dst):
                if len(exemplars[int(cls)]) < exemplars_per_class:
                    exemplars[int(cls)].append({"window_id": w.window_id,
                                                "i": int(w.pedestrian_ids[i]),
                                                "j": int(w.pedestrian_ids[j])})
    finally:
        model.train(was_training)
    return {"num_patterns": num, "total_pairs": int(counts.sum()),
            "counts": [int(c) for c in counts],
            "exemplars": {str(c): exemplars[c] for c in range(num)}}
