"""Particle belief over candidate object cells and its reinvigoration rules."""
from __future__ import annotations

import math
import random
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .motion import Action
from .pomdp_model import Observation


@dataclass(frozen=True)
class SimRecord:
    """What one planning simulation did with the particle it drew.

    ``particle_index`` identifies the particle instance within the belief the
    planner sampled from. Records built without it refer to every instance
    on ``initial_particle``. ``first_action`` lets reinvigoration look only at
    simulations that started with the action actually executed.
    """

    initial_particle: int
    first_sim_observation: bool
    particle_index: Optional[int] = None
    first_action: Optional[Action] = None


class Belief:
    """An immutable multiset of object-cell hypotheses."""

    __slots__ = ("_particles",)

    def __init__(self, particles: Iterable[int] = ()):
        self._particles = tuple(int(p) for p in particles)

    @classmethod
    def uniform(cls, cells: Iterable[int], count: int, rng: random.Random) -> "Belief":
        cells = sorted(cells)
        if not cells:
            return cls()
        return cls(cells[rng.randrange(len(cells))] for _ in range(count))

    @property
    def particles(self) -> tuple[int, ...]:
        return self._particles

    def __len__(self) -> int:
        return len(self._particles)

    def __bool__(self) -> bool:
        return bool(self._particles)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Belief):
            return NotImplemented
        return self._particles == other._particles

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"Belief({dict(sorted(self.histogram().items()))})"

    def histogram(self) -> Counter:
        return Counter(self._particles)

    def support(self) -> set[int]:
        return set(self._particles)

    def same_multiset(self, other: "Belief") -> bool:
        return self.histogram() == other.histogram()


def sample(belief: Belief, rng: random.Random) -> int:
    if not belief:
        raise ValueError("cannot sample from an empty belief")
    return belief.particles[rng.randrange(len(belief))]


def _relevant(records: Sequence[SimRecord], action: Optional[Action]) -> list[SimRecord]:
    if action is None:
        return list(records)
    return [r for r in records if r.first_action is None or r.first_action == action]


def _fallback(candidates: Iterable[int], count: int, rng: random.Random) -> Belief:
    return Belief.uniform(candidates, max(1, count), rng)


def reinvigorate_two_step(
    belief: Belief,
    records: Sequence[SimRecord],
    real_obs: Observation,
    removed_candidates: Iterable[int],
    new_candidates: Iterable[int],
    new_fraction: float,
    rng: random.Random,
    *,
    action: Optional[Action] = None,
    candidates: Optional[Iterable[int]] = None,
    target_count: Optional[int] = None,
) -> Belief:
    """Keep every particle unless a simulation contradicted it, then seed the
    newly discovered candidate cells.

    Step 1 carries all particles over and deletes only the instances drawn by
    simulations whose first simulated observation differs from ``real_obs``,
    plus every particle on ``removed_candidates``. Step 2 adds
    ``ceil(new_fraction * survivors)`` particles drawn uniformly from
    ``new_candidates``. An empty result falls back to a uniform belief over
    ``candidates`` (defaults to the new candidate cells).

    When ``action`` is given, only simulations that began with it count.
    ``target_count`` rescales the result to that many particles, keeping
    cell proportions in expectation (see :func:`rescale`).
    """
    if not 0.0 <= new_fraction <= 1.0:
        raise ValueError(f"new_fraction must be in [0, 1], got {new_fraction}")
    removed = set(removed_candidates)
    new = sorted(set(new_candidates))
    drop_index: set[int] = set()
    drop_cell: set[int] = set()
    for rec in _relevant(records, action):
        if rec.first_sim_observation != real_obs.detected:
            if rec.particle_index is None:
                drop_cell.add(rec.initial_particle)
            else:
                drop_index.add(rec.particle_index)
    survivors = [
        p
        for i, p in enumerate(belief.particles)
        if i not in drop_index and p not in drop_cell and p not in removed
    ]
    if new:
        n_new = math.ceil(new_fraction * len(survivors))
        survivors.extend(new[rng.randrange(len(new))] for _ in range(n_new))
    if not survivors:
        pool = set(candidates) if candidates is not None else set(new)
        return _fallback(pool, target_count or len(belief), rng)
    out = Belief(survivors)
    return out if target_count is None else rescale(out, target_count, rng)


def rescale(belief: Belief, count: int, rng: random.Random) -> Belief:
    """Resize to ``count`` particles without dropping support when growing.

    Shrinking subsamples without replacement; growing keeps every particle
    and draws the extra ones uniformly from the multiset.
    """
    parts = list(belief.particles)
    if count < 1 or not parts or len(parts) == count:
        return belief
    if len(parts) > count:
        return Belief(rng.sample(parts, count))
    n = len(parts)
    parts.extend(parts[rng.randrange(n)] for _ in range(count - n))
    return Belief(parts)


def reinvigorate_original(
    belief: Belief,
    records: Sequence[SimRecord],
    real_obs: Observation,
    rng: random.Random,
    *,
    action: Optional[Action] = None,
    candidates: Optional[Iterable[int]] = None,
) -> Belief:
    """Standard POMCP update: only particles that seeded a simulation whose
    first observation matched reality survive; the belief is then refilled to
    its original size by resampling the survivors."""
    keep: list[int] = []
    seen_index: set[int] = set()
    for rec in _relevant(records, action):
        if rec.first_sim_observation != real_obs.detected:
            continue
        if rec.particle_index is None:
            keep.append(rec.initial_particle)
        elif rec.particle_index not in seen_index:
            seen_index.add(rec.particle_index)
            keep.append(belief.particles[rec.particle_index])
    target = max(1, len(belief))
    if not keep:
        return _fallback(candidates if candidates is not None else (), target, rng)
    if len(keep) > target:
        keep = rng.sample(keep, target)
    refill = [keep[rng.randrange(len(keep))] for _ in range(target - len(keep))]
    return Belief(keep + refill)


def prune_to_candidates(belief: Belief, candidates: Iterable[int], rng: random.Random) -> Belief:
    cand = set(candidates)
    kept = [p for p in belief.particles if p in cand]
    if len(kept) == len(belief):
        return belief
    if not kept:
        return _fallback(cand, len(belief), rng)
    return Belief(kept)
