"""Search episodes: the POMCP exploration loop, the approach phase and the
random-walk and greedy-frontier baselines.

Every agent shares the same sensing, detection, approach and success
machinery; they differ only in how the next exploration action is chosen.
"""
from __future__ import annotations

import json
import math
import random
import time
from dataclasses import asdict, dataclass, field, fields, replace
from enum import Enum
from typing import Any, Optional

import numpy as np

from . import belief as bel
from .grid_map import (
    FrustumSpec,
    GridMap,
    candidates,
    map_update,
    visibility,
    visible_cells,
)
from .motion import Action, MotionModel, Pose
from .pomcp import PlannerConfig, plan
from .pomdp_model import AvsModel, Observation, RewardSpec
from .pose_graph import PoseGraph, expand, path_to
from .simulator import DetectorModel, Scene, detect, object_visible, sense

LOG_SCHEMA_VERSION = 1


class Reinvigoration(str, Enum):
    TWO_STEP = "two_step"
    ORIGINAL = "original"


class Termination(str, Enum):
    REACHED = "Reached"
    BUDGET = "Budget"
    FALSE_ALARM_EXHAUSTED = "FalseAlarmExhausted"


@dataclass(frozen=True)
class EpisodeConfig:
    max_episode_steps: int = 125
    success_distance: float = 1.0
    frustum: FrustumSpec = FrustumSpec()
    planner: PlannerConfig = PlannerConfig()
    rewards: RewardSpec = RewardSpec()
    motion: MotionModel = MotionModel()
    reinvigoration: Reinvigoration = Reinvigoration.TWO_STEP
    new_fraction: float = 0.2
    num_particles: int = 1200
    detector: DetectorModel = DetectorModel()
    false_alarm_patience: int = 3
    seed: int = 0
    record_timing: bool = True

    def __post_init__(self) -> None:
        if self.max_episode_steps < 1:
            raise ValueError("max_episode_steps must be >= 1")
        if not self.success_distance > 0:
            raise ValueError("success_distance must be > 0")
        if not 0.0 <= self.new_fraction <= 1.0:
            raise ValueError("new_fraction must be in [0, 1]")
        if self.num_particles < 1:
            raise ValueError("num_particles must be >= 1")
        if self.frustum.num_headings != self.motion.num_headings:
            raise ValueError("frustum.num_headings must equal motion.num_headings")
        object.__setattr__(self, "reinvigoration", Reinvigoration(self.reinvigoration))

    @property
    def model(self) -> AvsModel:
        return AvsModel(self.rewards, self.frustum, self.motion)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["reinvigoration"] = self.reinvigoration.value
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "EpisodeConfig":
        nested = {
            "frustum": FrustumSpec,
            "planner": PlannerConfig,
            "rewards": RewardSpec,
            "motion": MotionModel,
            "detector": DetectorModel,
        }
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kw = {}
        for k, v in d.items():
            kw[k] = nested[k](**v) if k in nested and isinstance(v, dict) else v
        return cls(**kw)


@dataclass
class EpisodeResult:
    success: bool
    steps_taken: int
    path: list[Pose]
    shortest_path_len: Optional[int]
    wall_time_per_step: float
    termination_reason: Termination
    false_alarms: int = 0
    log: dict = field(default_factory=dict, repr=False)

    @property
    def final_pose(self) -> Pose:
        return self.path[-1]

    def summary(self) -> dict[str, Any]:
        return {
            "success": self.success,
            "steps_taken": self.steps_taken,
            "shortest_path_len": self.shortest_path_len,
            "wall_time_per_step": self.wall_time_per_step,
            "termination_reason": self.termination_reason.value,
            "false_alarms": self.false_alarms,
            "path": [list(p) for p in self.path],
        }


# ---------------------------------------------------------------- evaluation


def within_distance(scene: Scene, pose: Pose, cell: int, d_s: float) -> bool:
    x, y = cell % scene.width, cell // scene.width
    return math.hypot(x - pose.x, y - pose.y) * scene.resolution <= d_s + 1e-9


def is_success_pose(scene: Scene, pose: Pose, cfg: EpisodeConfig) -> bool:
    """Evaluator's criterion: within ``d_s`` metres of the target, which is
    in view (ground-truth geometry, detector noise ignored)."""
    if not within_distance(scene, pose, scene.object_cell, cfg.success_distance):
        return False
    return object_visible(scene, pose, cfg.frustum, replace(cfg.detector, true_positive_rate=1.0, false_positive_rate=0.0))


def ground_truth_graph(scene: Scene, motion: MotionModel) -> PoseGraph:
    """All poses on free cells, closed under the motion model."""
    start = scene.start_pose
    free_map = GridMap(
        scene.width,
        scene.height,
        scene.resolution,
        np.where(scene.occupancy, 3, 1).astype(np.uint8),
    )
    return expand(PoseGraph([start]), free_map, motion)


def optimal_path_length(scene: Scene, cfg: EpisodeConfig, graph: Optional[PoseGraph] = None) -> Optional[int]:
    """Fewest actions from the start pose to any success-qualifying pose."""
    graph = graph or ground_truth_graph(scene, cfg.motion)
    path = path_to(graph, scene.start_pose, lambda p: is_success_pose(scene, p, cfg))
    return None if path is None else len(path)


# ---------------------------------------------------------------- episode state


class _Outcome(str, Enum):
    REACHED = "reached"
    BUDGET = "budget"
    FALSE_ALARM = "false_alarm"
    UNREACHABLE = "unreachable"


class Episode:
    """Mutable bookkeeping for one run; the agent loop drives it."""

    def __init__(self, scene: Scene, cfg: EpisodeConfig, agent: str):
        self.scene = scene
        self.cfg = cfg
        self.agent = agent
        ss = np.random.SeedSequence([cfg.seed, 0x50D])
        s_plan, s_det, s_bel, s_pol = ss.generate_state(4).tolist()
        self.plan_rng = random.Random(s_plan)
        self.detect_rng = random.Random(s_det)
        self.belief_rng = random.Random(s_bel)
        self.policy_rng = random.Random(s_pol)
        self.map = scene.blank_map()
        self.pose = scene.start_pose
        self.graph = PoseGraph([self.pose])
        self.path = [self.pose]
        self.steps_log: list[dict] = []
        self.plan_times: list[float] = []
        self.false_alarms = 0
        self.detected = False
        self.last_delta = 0

    @property
    def steps(self) -> int:
        return len(self.path) - 1

    @property
    def budget_left(self) -> bool:
        return self.steps < self.cfg.max_episode_steps

    def sense(self) -> None:
        """Map update at the current pose, then graph expansion."""
        rec = sense(self.scene, self.pose, self.cfg.frustum)
        before = self.map
        self.map = map_update(self.map, self.pose, rec, self.cfg.frustum)
        n0, e0 = len(self.graph), self.graph.edge_count
        self.graph = expand(self.graph, self.map, self.cfg.motion)
        changed = int(np.count_nonzero(before.cells != self.map.cells))
        self.last_delta = changed + (len(self.graph) - n0) + (self.graph.edge_count - e0)

    def detect(self) -> bool:
        self.detected = detect(self.scene, self.pose, self.cfg.frustum, self.cfg.detector, self.detect_rng)
        return self.detected

    def act(self, action: Action, phase: str, info: Optional[dict] = None) -> None:
        nxt = self.graph.successor(self.pose, action)
        if nxt is not None:
            if not self.scene.free(nxt.x, nxt.y):
                raise AssertionError(f"graph edge into occupied cell {nxt}")
            self.pose = nxt
        self.path.append(self.pose)
        self.detect()
        self.sense()
        rec = {
            "step": self.steps,
            "phase": phase,
            "pose": list(self.pose),
            "action": action.name,
            "real_observation": self.detected,
            "candidate_count": len(candidates(self.map)),
            "delta": self.last_delta,
        }
        rec.update(info or {})
        self.steps_log.append(rec)

    def legal_actions(self) -> list[Action]:
        have = {a for a, _ in self.graph.edges[self.pose]}
        return [a for a in self.cfg.motion.move_actions if a in have]

    # ---------------------------------------------------------- approach

    def estimate_target(self, belief: Optional[bel.Belief]) -> Optional[int]:
        """Where the detector says the object is.

        A true detection localises the target itself. A false alarm points at
        the belief's modal candidate among cells visible from the current pose
        (ties: nearest, then row-major), else a random cell in view.
        """
        if object_visible(self.scene, self.pose, self.cfg.frustum, self.cfg.detector):
            return self.scene.object_cell
        view = visible_cells(self.map, self.pose, self.cfg.frustum)
        if belief:
            hist = belief.histogram()
            cands = [c for c in hist if c in view]
            if cands:
                def key(c: int):
                    x, y = c % self.map.width, c // self.map.width
                    return (-hist[c], math.hypot(x - self.pose.x, y - self.pose.y), c)
                return min(cands, key=key)
        view = sorted(view)
        return view[self.detect_rng.randrange(len(view))] if view else None

    def approach(self, target: int) -> _Outcome:
        return approach_target(self, target)


def approach_target(ep: Episode, target: int) -> _Outcome:
    """Walk the pose graph toward ``target``, re-sensing and re-detecting at
    every step.

    Stops once the robot is within the success distance of the target, sees
    it on the map and the detector fires. ``false_alarm_patience``
    consecutive non-detections abort the approach.
    """
    cfg = ep.cfg
    tx, ty = target % ep.map.width, target // ep.map.width
    misses = 0

    def near_and_visible(p: Pose) -> bool:
        return within_distance(ep.scene, p, target, cfg.success_distance) and (
            visibility(ep.map, p, target, cfg.frustum) == 1
        )

    while True:
        if ep.detected and near_and_visible(ep.pose):
            return _Outcome.REACHED
        if not ep.budget_left:
            return _Outcome.BUDGET
        path = path_to(ep.graph, ep.pose, near_and_visible)
        if path == []:
            path = path_to(ep.graph, ep.pose, lambda p: (p.x, p.y) == (tx, ty))
            if path == []:
                path = [Action.TURN_LEFT]
        if path is None:
            return _Outcome.UNREACHABLE
        ep.act(path[0], "approach", {"target": target})
        misses = 0 if ep.detected else misses + 1
        if misses >= cfg.false_alarm_patience:
            return _Outcome.FALSE_ALARM


# ---------------------------------------------------------------- policies


class _PompPolicy:
    """Belief maintenance and POMCP action selection."""

    def __init__(self, ep: Episode):
        self.ep = ep
        self.belief: Optional[bel.Belief] = None
        self.prev_candidates: set[int] = set()
        self.records: list = []
        self.last_action: Optional[Action] = None

    def reset_records(self) -> None:
        self.records = []
        self.last_action = None

    def update_belief(self) -> None:
        ep, cfg = self.ep, self.ep.cfg
        rng = ep.belief_rng
        cands = candidates(ep.map)
        in_view = {c for c in cands if visibility(ep.map, ep.pose, c, cfg.frustum)} if not ep.detected else set()
        live = (cands - in_view) or cands
        if self.belief is None:
            self.belief = bel.Belief.uniform(live, cfg.num_particles, rng)
        else:
            removed = (self.prev_candidates - cands) | in_view
            new = cands - self.prev_candidates - in_view
            obs = Observation(ep.detected)
            if cfg.reinvigoration is Reinvigoration.TWO_STEP:
                self.belief = bel.reinvigorate_two_step(
                    self.belief, self.records, obs, removed, new, cfg.new_fraction, rng,
                    action=self.last_action, candidates=live, target_count=cfg.num_particles,
                )
            else:
                self.belief = bel.reinvigorate_original(
                    self.belief, self.records, obs, rng, action=self.last_action, candidates=live,
                )
            self.belief = bel.prune_to_candidates(self.belief, live, rng)
        self.prev_candidates = cands

    def choose(self) -> tuple[Action, dict]:
        ep, cfg = self.ep, self.ep.cfg
        self.update_belief()
        hist = {str(k): v for k, v in sorted(self.belief.histogram().items())}
        if not self.belief:
            # nothing left to search: wander
            legal = ep.legal_actions()
            a = legal[ep.policy_rng.randrange(len(legal))] if legal else Action.TURN_LEFT
            self.reset_records()
            return a, {"belief_histogram": hist, "plan_wall_time": 0.0, "sim_count": 0}
        res = plan(self.belief, ep.pose, ep.map, ep.graph, cfg.model, cfg.planner, ep.plan_rng)
        self.records = res.records
        action = res.chosen_action
        wall = res.counters["wall_time"]
        ep.plan_times.append(wall)
        info = {
            "belief_histogram": hist,
            "plan_wall_time": wall if cfg.record_timing else 0.0,
            "sim_count": res.counters["simulations"],
            "nodes_created": res.counters["nodes_created"],
        }
        if res.counters["detecting_simulations"] == 0:
            # Every hypothesis lies beyond the search horizon, so all root
            # values tie. Head for the nearest pose that views the belief.
            step = _step_toward_views(ep, self.belief.support())
            if step is not None:
                action = step
                info["horizon_fallback"] = True
        self.last_action = action
        return action, info


def _step_toward_views(ep: Episode, cells) -> Optional[Action]:
    """First action of a shortest pose-graph path to any pose that sees one
    of ``cells`` on the current map (None if no such pose is reachable)."""
    from .grid_map import observers_of

    cfg = ep.cfg
    ids = ep.graph.pose_ids(ep.map.width, ep.map.height, cfg.motion.num_headings)
    goal_ids: set[int] = set()
    for c in sorted(cells):
        goal_ids.update(observers_of(ep.map, c, cfg.frustum, ids).tolist())
    goal_ids.discard(ep.graph.node_id(ep.pose))
    if not goal_ids:
        return None
    path = path_to(ep.graph, ep.pose, lambda p: ep.graph.node_id(p) in goal_ids)
    return path[0] if path else None


class _RandomPolicy:
    def __init__(self, ep: Episode):
        self.ep = ep
        self.belief = None

    def reset_records(self) -> None:
        pass

    def choose(self) -> tuple[Action, dict]:
        legal = self.ep.legal_actions()
        return legal[self.ep.policy_rng.randrange(len(legal))], {}


class _FrontierPolicy:
    """Go to the nearest pose that views a not-yet-dismissed candidate cell."""

    def __init__(self, ep: Episode):
        self.ep = ep
        self.belief = None
        self.dismissed: set[int] = set()

    def reset_records(self) -> None:
        pass

    def choose(self) -> tuple[Action, dict]:
        ep, cfg = self.ep, self.ep.cfg
        cands = candidates(ep.map)
        if not ep.detected:
            self.dismissed |= {c for c in cands if visibility(ep.map, ep.pose, c, cfg.frustum)}
        targets = cands - self.dismissed
        step = _step_toward_views(ep, targets)
        if step is None:
            return Action.TURN_LEFT, {"frontier_target": None}
        return step, {"frontier_targets": len(targets)}


_POLICIES = {"pomp++": _PompPolicy, "random": _RandomPolicy, "frontier": _FrontierPolicy}


def _run(scene: Scene, cfg: EpisodeConfig, agent: str) -> EpisodeResult:
    ep = Episode(scene, cfg, agent)
    policy = _POLICIES[agent](ep)
    ep.sense()
    ep.detect()
    reached = False
    while True:
        if ep.detected:
            target = ep.estimate_target(getattr(policy, "belief", None))
            outcome = approach_target(ep, target) if target is not None else _Outcome.UNREACHABLE
            if outcome is _Outcome.REACHED:
                reached = True
                break
            if outcome is _Outcome.BUDGET:
                break
            if outcome is _Outcome.FALSE_ALARM:
                ep.false_alarms += 1
            ep.detected = False
            policy.reset_records()
        if not ep.budget_left:
            break
        t0 = time.perf_counter()
        action, info = policy.choose()
        if agent != "pomp++":
            ep.plan_times.append(time.perf_counter() - t0)
        ep.act(action, "explore", info)

    if reached:
        reason = Termination.REACHED
    elif ep.false_alarms:
        reason = Termination.FALSE_ALARM_EXHAUSTED
    else:
        reason = Termination.BUDGET
    success = is_success_pose(scene, ep.pose, cfg)
    wall = float(np.mean(ep.plan_times)) if ep.plan_times and cfg.record_timing else 0.0
    result = EpisodeResult(
        success=success,
        steps_taken=ep.steps,
        path=list(ep.path),
        shortest_path_len=optimal_path_length(scene, cfg),
        wall_time_per_step=wall,
        termination_reason=reason,
        false_alarms=ep.false_alarms,
    )
    result.log = {
        "schema_version": LOG_SCHEMA_VERSION,
        "header": {
            "agent": agent,
            "config": cfg.to_dict(),
            "scene": {
                "width": scene.width,
                "height": scene.height,
                "resolution": scene.resolution,
                "object": list(scene.object_xy),
                "start": list(scene.start_pose),
                "occupancy": ["".join("#" if v else "." for v in row) for row in scene.occupancy],
            },
        },
        "steps": ep.steps_log,
        "footer": {
            **result.summary(),
            "graph_nodes": len(ep.graph),
            "graph_edges": ep.graph.edge_count,
        },
    }
    return result


def run_episode(scene: Scene, cfg: EpisodeConfig) -> EpisodeResult:
    """Active search with POMCP planning and belief reinvigoration."""
    return _run(scene, cfg, "pomp++")


def run_random_walk(scene: Scene, cfg: EpisodeConfig) -> EpisodeResult:
    return _run(scene, cfg, "random")


def run_greedy_frontier(scene: Scene, cfg: EpisodeConfig) -> EpisodeResult:
    return _run(scene, cfg, "frontier")


AGENTS = {
    "pomp++": run_episode,
    "random": run_random_walk,
    "frontier": run_greedy_frontier,
}


def log_to_json(result: EpisodeResult) -> str:
    return json.dumps(result.log, sort_keys=True)
