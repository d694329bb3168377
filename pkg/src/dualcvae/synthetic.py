"""Scripted constant-velocity scenes for overfitting checks and CLI demos."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .data import SCENES, RawAnnotation, SceneWindow, serialize_annotations


def scripted_window(rng: np.random.Generator, num_peds: int, kind: str = "linear",
                    t_obs: int = 8, t_pred: int = 12, speed: float = 0.4) -> SceneWindow:
    """One window of straight-line walkers.

    ``linear`` sends everyone roughly the same way side by side; ``crossing``
    aims alternating pedestrians at a shared point from opposite sides.
    """
    steps = t_obs + t_pred
    t = np.arange(steps, dtype=float)[None, :, None]
    if kind == "linear":
        heading = rng.uniform(0, 2 * np.pi)
        angles = heading + rng.normal(0, 0.1, num_peds)
        starts = rng.normal(0, 1.5, (num_peds, 2))
    elif kind == "crossing":
        heading = rng.uniform(0, 2 * np.pi)
        angles = heading + np.pi * (np.arange(num_peds) % 2) + rng.normal(0, 0.3, num_peds)
        meet = rng.normal(0, 0.5, 2)
        speeds0 = speed * rng.uniform(0.8, 1.2, num_peds)
        vel0 = speeds0[:, None] * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        starts = meet - vel0 * (steps / 2)
    else:
        raise ValueError(f"unknown motion kind {kind!r}")
    speeds = speed * rng.uniform(0.8, 1.2, num_peds) if kind == "linear" else speeds0
    vel = speeds[:, None] * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    pos = starts[:, None, :] + vel[:, None, :] * t
    return SceneWindow(pos[:, :t_obs].copy(), pos[:, t_obs:].copy(), list(range(num_peds)),
                       scene="SYNTH", start_frame=0)


def overfit_windows(seed: int = 0, count: int = 8) -> list[SceneWindow]:
    """Mix of linear and crossing windows with 2 to 4 pedestrians each."""
    rng = np.random.default_rng(seed)
    windows = []
    for i in range(count):
        w = scripted_window(rng, int(rng.integers(2, 5)), "linear" if i % 2 == 0 else "crossing")
        w.start_frame = i
        windows.append(w)
    return windows


def scene_annotations(rng: np.random.Generator, num_frames: int = 60, num_peds: int = 6,
                      frame_step: int = 10, speed: float = 0.4) -> list[RawAnnotation]:
    """A scene of pedestrians entering at random frames and walking straight for 20-40 steps."""
    records = []
    for ped in range(num_peds):
        length = int(rng.integers(20, 41))
        first = int(rng.integers(0, max(num_frames - length, 0) + 1))
        angle = rng.uniform(0, 2 * np.pi)
        start = rng.uniform(-5, 5, 2)
        vel = speed * np.array([np.cos(angle), np.sin(angle)])
        for k in range(min(length, num_frames - first)):
            x, y = start + vel * k
            records.append(RawAnnotation((first + k) * frame_step, ped, round(float(x), 4), round(float(y), 4)))
    records.sort(key=lambda r: (r.frame_id, r.pedestrian_id))
    return records


def write_scene_tree(root: str | Path, seed: int = 0, **kwargs) -> Path:
    """Create ``root/<SCENE>/annotations.txt`` for all five benchmark scene names."""
    root = Path(root)
    rng = np.random.default_rng(seed)
    for scene in SCENES:
        (root / scene).mkdir(parents=True, exist_ok=True)
        (root / scene / "annotations.txt").write_text(serialize_annotations(scene_annotations(rng, **kwargs)))
    return root
