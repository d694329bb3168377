"""ETH/UCY annotation parsing, scene windowing and leave-one-scene-out splits."""
from __future__ import annotations

import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, TextIO

import numpy as np

log = logging.getLogger(__name__)

SCENES = ("ETH", "HOTEL", "UNIV", "ZARA1", "ZARA2")
T_OBS = 8
T_PRED = 12


class ParseError(ValueError):
    pass


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RawAnnotation:
    frame_id: int
    pedestrian_id: int
    x: float
    y: float


@dataclass
class Trajectory:
    pedestrian_id: int
    frames: list[int]
    positions: np.ndarray  # T x 2


@dataclass
class SceneWindow:
    observed: np.ndarray  # N x T_obs x 2
    future: np.ndarray  # N x T_pred x 2
    pedestrian_ids: list[int]
    scene: str = ""
    start_frame: int = 0

    @property
    def num_peds(self) -> int:
        return self.observed.shape[0]

    @property
    def positions(self) -> np.ndarray:
        return np.concatenate([self.observed, self.future], axis=1)

    @property
    def window_id(self) -> str:
        return f"{self.scene}:{self.start_frame}"


@dataclass
class DatasetSplit:
    train: list[SceneWindow]
    validation: list[SceneWindow]
    test: list[SceneWindow]
    held_out_scene: str
    counts: dict[str, int] = field(default_factory=dict)


def _parse_int(token: str, lineno: int) -> int:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"line {lineno}: non-numeric field {token!r}") from None
    if value != int(value) or value < 0:
        raise ParseError(f"line {lineno}: expected a nonnegative integer id, got {token!r}")
    return int(value)


def parse_annotations(text: str | TextIO | Iterable[str]) -> list[RawAnnotation]:
    """Parse ``frame_id pedestrian_id x y`` lines; blank lines are skipped."""
    lines = text.splitlines() if isinstance(text, str) else text
    records = []
    seen = set()
    for lineno, line in enumerate(lines, start=1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 4:
            raise ParseError(f"line {lineno}: expected 4 fields, got {len(parts)}")
        frame, ped = _parse_int(parts[0], lineno), _parse_int(parts[1], lineno)
        try:
            x, y = float(parts[2]), float(parts[3])
        except ValueError:
            raise ParseError(f"line {lineno}: non-numeric coordinate in {line.strip()!r}") from None
        if not (np.isfinite(x) and np.isfinite(y)):
            raise ParseError(f"line {lineno}: non-finite coordinate")
        if (frame, ped) in seen:
            raise ParseError(f"line {lineno}: duplicate (frame {frame}, pedestrian {ped})")
        seen.add((frame, ped))
        records.append(RawAnnotation(frame, ped, x, y))
    return records


def serialize_annotations(records: Iterable[RawAnnotation]) -> str:
    # repr keeps floats round-trippable
    return "".join(f"{r.frame_id} {r.pedestrian_id} {r.x!r} {r.y!r}\n" for r in records)


def load_annotation_file(path: str | Path) -> list[RawAnnotation]:
    with open(path) as fh:
        return parse_annotations(fh)


def infer_frame_step(frames: Iterable[int]) -> int:
    """Most common gap between consecutive distinct frames (1 if undetermined)."""
    uniq = np.unique(np.fromiter(frames, dtype=np.int64))
    if uniq.size < 2:
        return 1
    diffs = Counter(np.diff(uniq).tolist())
    return min(diffs, key=lambda d: (-diffs[d], d))


def trajectories(records: list[RawAnnotation], frame_step: int | None = None) -> list[Trajectory]:
    """Per-pedestrian tracks, split wherever consecutive frames skip a step."""
    step = frame_step or infer_frame_step(r.frame_id for r in records)
    by_ped: dict[int, list[RawAnnotation]] = defaultdict(list)
    for r in records:
        by_ped[r.pedestrian_id].append(r)
    out = []
    for ped in sorted(by_ped):
        rows = sorted(by_ped[ped], key=lambda r: r.frame_id)
        start = 0
        for k in range(1, len(rows) + 1):
            if k == len(rows) or rows[k].frame_id - rows[k - 1].frame_id != step:
                chunk = rows[start:k]
                out.append(Trajectory(ped, [r.frame_id for r in chunk],
                                      np.array([[r.x, r.y] for r in chunk])))
                start = k
    return out


def build_windows(records: list[RawAnnotation], t_obs: int = T_OBS, t_pred: int = T_PRED,
                  stride: int = 1, scene: str = "", frame_step: int | None = None) -> list[SceneWindow]:
    """Slide a ``t_obs + t_pred`` span over the frame axis.

    Distinct frames are mapped to consecutive timesteps in ascending order.
    A span is skipped when two of its neighbouring frames are further apart
    than the inferred frame step (a hole in the annotation timeline).
    Pedestrians must be present at every timestep of a span to be kept.
    """
    length = t_obs + t_pred
    if not records:
        return []
    frames = sorted({r.frame_id for r in records})
    step = frame_step or infer_frame_step(frames)
    index = {f: k for k, f in enumerate(frames)}
    pos: dict[int, dict[int, tuple[float, float]]] = defaultdict(dict)
    for r in records:
        pos[r.pedestrian_id][index[r.frame_id]] = (r.x, r.y)
    gaps = np.diff(frames) != step if len(frames) > 1 else np.zeros(0, bool)
    peds = sorted(pos)
    windows = []
    for s in range(0, len(frames) - length + 1, stride):
        if gaps[s:s + length - 1].any():
            continue
        span = range(s, s + length)
        present = [p for p in peds if all(t in pos[p] for t in span)]
        if not present:
            continue
        arr = np.array([[pos[p][t] for t in span] for p in present], dtype=np.float64)
        windows.append(SceneWindow(arr[:, :t_obs].copy(), arr[:, t_obs:].copy(), present,
                                   scene=scene, start_frame=frames[s]))
    return windows


def compute_displacements(positions: np.ndarray) -> np.ndarray:
    """Per-step displacement along the time axis (axis -2); the first step is zero."""
    positions = np.asarray(positions, dtype=np.float64)
    out = np.zeros_like(positions)
    out[..., 1:, :] = positions[..., 1:, :] - positions[..., :-1, :]
    return out


def load_scene(directory: str | Path, t_obs: int = T_OBS, t_pred: int = T_PRED,
               stride: int = 1) -> list[SceneWindow]:
    """Windows from every ``*.txt`` annotation file in a scene directory."""
    directory = Path(directory)
    files = sorted(directory.glob("*.txt"))
    if not files:
        raise FileNotFoundError(f"no annotation files in {directory}")
    windows = []
    for path in files:
        windows.extend(build_windows(load_annotation_file(path), t_obs, t_pred, stride,
                                     scene=directory.name))
    log.info("%s: %d windows from %d files", directory.name, len(windows), len(files))
    return windows


def load_scenes(data_root: str | Path, t_obs: int = T_OBS, t_pred: int = T_PRED,
                stride: int = 1, scenes: Iterable[str] = SCENES) -> dict[str, list[SceneWindow]]:
    root = Path(data_root)
    missing = [s for s in scenes if not (root / s).is_dir()]
    if missing:
        raise FileNotFoundError(f"missing scene directories under {root}: {missing}")
    return {s: load_scene(root / s, t_obs, t_pred, stride) for s in scenes}


def leave_one_out_split(scenes: dict[str, list[SceneWindow]], held_out: str,
                        validation_fraction: float = 0.0, seed: int = 0,
                        rng: np.random.Generator | None = None) -> DatasetSplit:
    if held_out not in scenes:
        raise ConfigError(f"unknown scene {held_out!r}; known: {sorted(scenes)}")
    if not 0.0 <= validation_fraction < 1.0:
        raise ConfigError(f"validation_fraction must be in [0, 1), got {validation_fraction}")
    pool = [w for name in sorted(scenes) if name != held_out for w in scenes[name]]
    rng = rng or np.random.default_rng(seed)
    order = rng.permutation(len(pool))
    n_val = int(round(validation_fraction * len(pool)))
    validation = [pool[i] for i in order[:n_val]]
    train = [pool[i] for i in order[n_val:]]
    counts = {name: len(w) for name, w in scenes.items()}
    return DatasetSplit(train, validation, list(scenes[held_out]), held_out, counts)
