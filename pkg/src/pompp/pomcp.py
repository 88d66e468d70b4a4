"""Online POMCP planning over the current map and pose graph.

A fresh search tree is built at every real step. Each simulation draws one
particle (an object-cell hypothesis), descends the tree with UCB1, expands at
most one new history node and finishes with a uniform random rollout. The map
and graph stay frozen during planning.
"""
from __future__ import annotations

import math
import random
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .belief import Belief, SimRecord
from .grid_map import GridMap, observers_of
from .motion import Action, Pose
from .pomdp_model import AvsModel, AvsState
from .pose_graph import PoseGraph


@dataclass(frozen=True)
class PlannerConfig:
    num_simulations: int = 1000
    max_sim_depth: int = 30
    ucb_c: float = 1000.0
    gamma: Optional[float] = None  # None: use the reward spec's discount
    rollout_policy: str = "uniform_random"
    workers: int = 1

    def __post_init__(self) -> None:
        if self.num_simulations < 1:
            raise ValueError("num_simulations must be >= 1")
        if self.max_sim_depth < 1:
            raise ValueError("max_sim_depth must be >= 1")
        if self.ucb_c < 0:
            raise ValueError("ucb_c must be >= 0")
        if self.rollout_policy != "uniform_random":
            raise ValueError(f"unknown rollout policy {self.rollout_policy!r}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


class Node:
    """History node: visit counts, action values and the particles that
    reached it."""

    __slots__ = ("n", "tried", "na", "q", "children", "particles")

    def __init__(self, num_actions: int):
        self.n = 0
        self.tried = 0
        self.na = [0] * num_actions
        self.q = [0.0] * num_actions
        self.children: dict[tuple[int, bool], Node] = {}
        self.particles: list[int] = []

    def child(self, action: int, detected: bool) -> Optional["Node"]:
        return self.children.get((action, detected))


@dataclass
class PlanResult:
    chosen_action: Action
    records: list[SimRecord]
    root_values: dict[Action, tuple[float, int]]
    counters: dict = field(default_factory=dict)


class SearchContext:
    """Frozen planning problem: compact pose ids, a transition table and
    lazily computed visibility sets per object cell."""

    def __init__(self, grid: GridMap, graph: PoseGraph, model: AvsModel, cfg: PlannerConfig):
        self.grid = grid
        self.graph = graph
        self.model = model
        self.cfg = cfg
        rw = model.rewards
        self.gamma = rw.gamma if cfg.gamma is None else cfg.gamma
        self.r_detect = rw.r_detect
        self.r_step = rw.r_step
        self.stop_value = rw.stop_value
        self.actions = [int(a) for a in model.motion.actions]
        self.table = graph.table()
        moves = [int(a) for a in model.motion.move_actions]
        self.legal_next = [
            [row[a] for a in moves if row[a] != i or a in (Action.TURN_LEFT, Action.TURN_RIGHT)]
            for i, row in enumerate(self.table)
        ]
        self._pose_ids: Optional[np.ndarray] = None
        self._vis: dict[int, bytearray] = {}
        self.visibility_evals = 0
        self.rollout_hits = 0
        self.tree_hits = 0

    def visible_from(self, cell: int) -> bytearray:
        """``v[pose_id]`` is 1 when ``cell`` is visible from that pose."""
        vis = self._vis.get(cell)
        if vis is None:
            if self._pose_ids is None:
                m = self.model.motion
                self._pose_ids = self.graph.pose_ids(self.grid.width, self.grid.height, m.num_headings)
            vis = bytearray(len(self.table))
            for pid in observers_of(self.grid, cell, self.model.frustum, self._pose_ids).tolist():
                vis[pid] = 1
            self._vis[cell] = vis
            self.visibility_evals += 1
        return vis

    def step(self, pose_id: int, action: int, vis: bytearray) -> tuple[int, float, bool, bool]:
        """(next pose, reward, detected, terminal)."""
        if action == Action.STOP:
            return pose_id, self.stop_value, False, True
        nxt = self.table[pose_id][action]
        if vis[nxt]:
            return nxt, self.r_detect, True, True
        return nxt, self.r_step, False, False

    def rollout(self, state: AvsState, depth: int, rng: random.Random) -> float:
        """Discounted return of uniform random moves for steps ``depth..mu``.

        A start pose that already sees the object scores ``r_detect`` at once.
        """
        if depth > self.cfg.max_sim_depth:
            return 0.0
        vis = self.visible_from(state.object_cell)
        pose = self.graph.node_id(state.robot)
        if vis[pose]:
            return self.r_detect
        return self._rollout(pose, depth, vis, rng.random)

    def _rollout(self, pose: int, depth: int, vis: bytearray, rnd) -> float:
        legal = self.legal_next
        r_step, g = self.r_step, self.gamma
        ret, disc = 0.0, 1.0
        for _ in range(depth, self.cfg.max_sim_depth + 1):
            nexts = legal[pose]
            pose = nexts[int(rnd() * len(nexts))]
            if vis[pose]:
                self.rollout_hits += 1
                return ret + disc * self.r_detect
            ret += disc * r_step
            disc *= g
        return ret

    def select(self, node: Node) -> int:
        acts = self.actions
        if node.tried < len(acts):
            a = acts[node.tried]
            node.tried += 1
            return a
        logn = math.log(node.n)
        c = self.cfg.ucb_c
        best_a, best_v = acts[0], -math.inf
        na, q = node.na, node.q
        for a in acts:
            v = q[a] + c * math.sqrt(logn / na[a])
            if v > best_v:
                best_a, best_v = a, v
        return best_a

    def simulate(self, state: AvsState, node: Node, depth: int, rng: random.Random) -> float:
        """One tree simulation from ``node`` at step ``depth`` (1-based)."""
        vis = self.visible_from(state.object_cell)
        ret, _, _, _ = self._simulate(self.graph.node_id(state.robot), state.object_cell, vis, node, depth, rng.random)
        return ret

    def _simulate(self, pose: int, cell: int, vis: bytearray, node: Node, depth: int, rnd):
        """Iterative descent + backup. Returns (return, first action,
        first observation, nodes created)."""
        path = []
        mu = self.cfg.max_sim_depth
        created = 0
        tail = 0.0
        first_det = None
        while True:
            a = self.select(node)
            pose, r, det, term = self.step(pose, a, vis)
            path.append((node, a, r))
            if first_det is None:
                first_det = det
            if det:
                self.tree_hits += 1
            if term or depth >= mu:
                break
            child = node.children.get((a, det))
            if child is None:
                child = Node(len(self.table[0]))
                node.children[(a, det)] = child
                child.particles.append(cell)
                created += 1
                tail = self._rollout(pose, depth + 1, vis, rnd)
                break
            child.particles.append(cell)
            node = child
            depth += 1
        g = self.gamma
        ret = tail
        for nd, a, r in reversed(path):
            ret = r + g * ret
            nd.n += 1
            nd.na[a] += 1
            nd.q[a] += (ret - nd.q[a]) / nd.na[a]
        return ret, path[0][1], first_det, created


def _search(ctx: SearchContext, belief: Belief, root_pose: Pose, n_sims: int, seed: int):
    rng = random.Random(seed)
    rnd = rng.random
    root = Node(len(ctx.table[0]))
    root_id = ctx.graph.node_id(root_pose)
    particles = belief.particles
    n = len(particles)
    records = []
    created = 1
    for _ in range(n_sims):
        idx = int(rnd() * n)
        cell = particles[idx]
        vis = ctx.visible_from(cell)
        _, a, det, c = ctx._simulate(root_id, cell, vis, root, 1, rnd)
        created += c
        records.append(SimRecord(cell, det, idx, Action(a)))
    return root, records, created


def _search_chunk(args):
    grid, graph, model, cfg, belief, pose, n_sims, seed = args
    ctx = SearchContext(grid, graph, model, cfg)
    root, records, created = _search(ctx, belief, pose, n_sims, seed)
    return root.na, root.q, records, created, ctx.visibility_evals, ctx.tree_hits + ctx.rollout_hits


def _argmax(q: list[float], na: list[int], actions: list[int]) -> int:
    best, best_q = None, -math.inf
    for a in actions:
        if na[a] > 0 and q[a] > best_q:
            best, best_q = a, q[a]
    return actions[0] if best is None else best


def plan(
    belief: Belief,
    current_pose: Pose,
    grid: GridMap,
    graph: PoseGraph,
    model: AvsModel,
    cfg: PlannerConfig,
    rng: random.Random,
) -> PlanResult:
    """Run exactly ``cfg.num_simulations`` simulations and pick the action
    with the highest root value (ties: Forward, Backward, Turn_Left,
    Turn_Right, Stop)."""
    if not belief:
        raise ValueError("cannot plan with an empty belief")
    if current_pose not in graph:
        raise ValueError(f"current pose {current_pose} is not in the pose graph")
    t0 = time.perf_counter()
    seed = rng.getrandbits(63)
    actions = [int(a) for a in model.motion.actions]
    if cfg.workers == 1:
        ctx = SearchContext(grid, graph, model, cfg)
        root, records, created = _search(ctx, belief, current_pose, cfg.num_simulations, seed)
        na, q, vis_evals = root.na, root.q, ctx.visibility_evals
        hits = ctx.tree_hits + ctx.rollout_hits
    else:
        na, q, records, created, vis_evals, hits = _parallel(grid, graph, model, cfg, belief, current_pose, seed)
    chosen = Action(_argmax(q, na, actions))
    wall = time.perf_counter() - t0
    return PlanResult(
        chosen_action=chosen,
        records=records,
        root_values={Action(a): (q[a], na[a]) for a in actions},
        counters={
            "simulations": len(records),
            "nodes_created": created,
            "visibility_evals": vis_evals,
            "detecting_simulations": hits,
            "wall_time": wall,
        },
    )


def _parallel(grid, graph, model, cfg, belief, pose, seed):
    # Root parallelisation: independent trees merged by visit-weighted means.
    k = min(cfg.workers, cfg.num_simulations)
    seeds = np.random.SeedSequence(seed).generate_state(k).tolist()
    sizes = [cfg.num_simulations // k + (i < cfg.num_simulations % k) for i in range(k)]
    jobs = [(grid, graph, model, cfg, belief, pose, sizes[i], seeds[i]) for i in range(k)]
    with ProcessPoolExecutor(max_workers=k) as pool:
        parts = list(pool.map(_search_chunk, jobs))
    num_actions = len(parts[0][0])
    na = [0] * num_actions
    tot = [0.0] * num_actions
    records: list[SimRecord] = []
    created = vis_evals = hits = 0
    for p_na, p_q, p_rec, p_created, p_vis, p_hits in parts:
        for a in range(num_actions):
            na[a] += p_na[a]
            tot[a] += p_na[a] * p_q[a]
        records.extend(p_rec)
        created += p_created
        vis_evals += p_vis
        hits += p_hits
    q = [tot[a] / na[a] if na[a] else 0.0 for a in range(num_actions)]
    return na, q, records, created, vis_evals, hits
