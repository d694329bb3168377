"""Packing several scene windows into one padding-free batch.

Pedestrians of all windows are stacked along one axis; ordered neighbour
pairs ``(i, j)``, ``i != j``, are only formed inside a window.  Pairs are
listed window by window, ``i``-major, so the rows for pedestrian ``i`` are
contiguous and in ascending ``j`` order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import SceneWindow, compute_displacements


@dataclass
class PairIndex:
    src: np.ndarray  # P, pedestrian i
    dst: np.ndarray  # P, neighbour j
    ped_group: np.ndarray  # M, window index of each pedestrian
    pair_group: np.ndarray  # P, window index of each pair
    num_peds: int
    num_groups: int

    @property
    def num_pairs(self) -> int:
        return self.src.size

    @classmethod
    def from_sizes(cls, sizes: list[int]) -> PairIndex:
        src, dst, ped_group, pair_group = [], [], [], []
        offset = 0
        for g, n in enumerate(sizes):
            ids = np.arange(offset, offset + n)
            ii, jj = np.meshgrid(ids, ids, indexing="ij")
            keep = ii != jj
            src.append(ii[keep])
            dst.append(jj[keep])
            pair_group.append(np.full(n * (n - 1), g))
            ped_group.append(np.full(n, g))
            offset += n
        cat = lambda xs: np.concatenate(xs).astype(np.intp) if xs else np.zeros(0, np.intp)
        return cls(cat(src), cat(dst), cat(ped_group), cat(pair_group), offset, len(sizes))

    @classmethod
    def single(cls, n: int) -> PairIndex:
        return cls.from_sizes([n])

    def ped_weights(self) -> np.ndarray:
        """Per-pedestrian weight so that summing gives the mean over groups of per-group means."""
        counts = np.bincount(self.ped_group, minlength=self.num_groups)
        return 1.0 / (counts[self.ped_group] * self.num_groups)

    def pair_weights(self) -> np.ndarray:
        """Same as :meth:`ped_weights` for pair rows; groups without pairs contribute nothing."""
        counts = np.bincount(self.pair_group, minlength=self.num_groups)
        return 1.0 / (counts[self.pair_group] * self.num_groups)


@dataclass
class SceneBatch:
    observed: np.ndarray  # M x T_obs x 2
    future: np.ndarray  # M x T_pred x 2
    pairs: PairIndex
    windows: list[SceneWindow]

    @classmethod
    def from_windows(cls, windows: list[SceneWindow]) -> SceneBatch:
        if not windows:
            raise ValueError("cannot batch zero windows")
        obs = np.concatenate([w.observed for w in windows], axis=0)
        fut = np.concatenate([w.future for w in windows], axis=0)
        return cls(obs, fut, PairIndex.from_sizes([w.num_peds for w in windows]), list(windows))

    @property
    def num_peds(self) -> int:
        return self.observed.shape[0]

    @property
    def last_observed(self) -> np.ndarray:
        return self.observed[:, -1]

    @property
    def last_displacement(self) -> np.ndarray:
        return compute_displacements(self.observed)[:, -1]

    @property
    def full(self) -> np.ndarray:
        return np.concatenate([self.observed, self.future], axis=1)


def chunk_windows(windows: list[SceneWindow], max_pairs: int = 4096) -> list[list[SceneWindow]]:
    """Split a window list into consecutive chunks holding at most ``max_pairs`` pair rows."""
    chunks, current, load = [], [], 0
    for w in windows:
        cost = max(w.num_peds * (w.num_peds - 1), 1)
        if current and load + cost > max_pairs:
            chunks.append(current)
            current, load = [], 0
        current.append(w)
        load += cost
    if current:
        chunks.append(current)
    return chunks
