"""Episode-level search metrics: SR, APL, ASPPL, SPL and DTS.

Every function is a pure fold over a list of episode results and does not
depend on the order of that list.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .agent import EpisodeResult
from .simulator import Scene, free_space_distances


@dataclass(frozen=True)
class MetricSummary:
    n: int
    sr: float
    apl: Optional[float]
    asppl_mean: Optional[float]
    asppl_std: Optional[float]
    spl: float
    dts_mean: Optional[float]
    runtime_per_step_mean: float


def _require(results: Sequence[EpisodeResult]) -> None:
    if not results:
        raise ValueError("metric needs at least one episode")


def compute_sr(results: Sequence[EpisodeResult]) -> float:
    _require(results)
    return sum(1 for r in results if r.success) / len(results)


def compute_apl(results: Sequence[EpisodeResult]) -> Optional[float]:
    """Mean steps over successful episodes; None when there are none."""
    steps = [r.steps_taken for r in results if r.success]
    return float(np.mean(steps)) if steps else None


def _ratio(r: EpisodeResult) -> float:
    if r.steps_taken == 0:
        return 1.0
    return r.shortest_path_len / r.steps_taken


def compute_asppl(results: Sequence[EpisodeResult]) -> Optional[tuple[float, float]]:
    """(mean, population std) of shortest/taken over successful episodes."""
    ratios = [_ratio(r) for r in results if r.success and r.shortest_path_len is not None]
    if not ratios:
        return None
    return float(np.mean(ratios)), float(np.std(ratios))


def compute_spl(results: Sequence[EpisodeResult]) -> float:
    _require(results)
    total = 0.0
    for r in results:
        if not r.success or r.shortest_path_len is None:
            continue
        denom = max(r.steps_taken, r.shortest_path_len)
        total += 1.0 if denom == 0 else r.shortest_path_len / denom
    return total / len(results)


def distance_to_object(scene: Scene, x: int, y: int, *, geodesic: bool = True) -> float:
    """Metres from cell (x, y) to the target; geodesic over free cells by default."""
    ox, oy = scene.object_xy
    if not geodesic:
        return math.hypot(ox - x, oy - y) * scene.resolution
    d = free_space_distances(scene, (x, y)).get((ox, oy))
    return math.inf if d is None else d * scene.resolution


def dts_term(result: EpisodeResult, scene: Scene, d_s: float, *, geodesic: bool = True) -> float:
    if result.success:
        return 0.0
    p = result.final_pose
    return max(distance_to_object(scene, p.x, p.y, geodesic=geodesic) - d_s, 0.0)


def compute_dts(
    results: Sequence[EpisodeResult],
    scenes: Sequence[Scene],
    d_s: float,
    *,
    geodesic: bool = True,
) -> float:
    """Mean of max(dist(final cell, object) - d_s, 0); ``scenes[i]`` pairs with ``results[i]``."""
    _require(results)
    if len(scenes) != len(results):
        raise ValueError("need one scene per episode result")
    return float(np.mean([dts_term(r, s, d_s, geodesic=geodesic) for r, s in zip(results, scenes)]))


def summarize(
    results: Sequence[EpisodeResult],
    scenes: Sequence[Scene],
    d_s: float,
    *,
    geodesic: bool = True,
) -> MetricSummary:
    asppl = compute_asppl(results)
    return MetricSummary(
        n=len(results),
        sr=compute_sr(results),
        apl=compute_apl(results),
        asppl_mean=None if asppl is None else asppl[0],
        asppl_std=None if asppl is None else asppl[1],
        spl=compute_spl(results),
        dts_mean=compute_dts(results, scenes, d_s, geodesic=geodesic),
        runtime_per_step_mean=float(np.mean([r.wall_time_per_step for r in results])),
    )
