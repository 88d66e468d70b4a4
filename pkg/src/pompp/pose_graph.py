"""Reachability graph over discovered robot poses."""
from __future__ import annotations

from collections import deque
from typing import Iterable, Mapping, Optional

import numpy as np

from .grid_map import CellState, GridMap
from .motion import ACTION_ORDER, Action, MotionModel, Pose

__all__ = ["PoseGraph", "expand", "shortest_path", "PATH_ACTION_ORDER"]

PATH_ACTION_ORDER = (Action.FORWARD, Action.BACKWARD, Action.TURN_LEFT, Action.TURN_RIGHT)


class PoseGraph:
    """Nodes are poses; ``edges[p]`` lists ``(action, successor)`` pairs.

    Treated as an immutable value. Node ids follow insertion order, so a graph
    grown by :func:`expand` keeps the ids of the graph it grew from.
    """

    __slots__ = ("_order", "_ids", "edges", "_table")

    def __init__(self, nodes: Iterable[Pose] = (), edges: Optional[Mapping[Pose, tuple]] = None):
        order: list[Pose] = []
        ids: dict[Pose, int] = {}
        for p in nodes:
            if p not in ids:
                ids[p] = len(order)
                order.append(p)
        self._order = tuple(order)
        self._ids = ids
        self.edges: dict[Pose, tuple[tuple[Action, Pose], ...]] = {
            p: tuple(sorted((edges or {}).get(p, ()), key=lambda e: e[0])) for p in order
        }
        for p, out in self.edges.items():
            for _, q in out:
                if q not in ids:
                    raise ValueError(f"edge {p} -> {q} leaves the node set")
        self._table = None

    @property
    def nodes(self) -> frozenset[Pose]:
        return frozenset(self._order)

    @property
    def order(self) -> tuple[Pose, ...]:
        return self._order

    def __len__(self) -> int:
        return len(self._order)

    def __contains__(self, pose: object) -> bool:
        return pose in self._ids

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PoseGraph):
            return NotImplemented
        return self.nodes == other.nodes and all(
            set(self.edges[p]) == set(other.edges[p]) for p in self._order
        )

    __hash__ = None  # type: ignore[assignment]

    def node_id(self, pose: Pose) -> int:
        return self._ids[pose]

    @property
    def edge_count(self) -> int:
        return sum(len(v) for v in self.edges.values())

    def successor(self, pose: Pose, action: Action) -> Optional[Pose]:
        for a, q in self.edges.get(pose, ()):
            if a == action:
                return q
        return None

    def table(self) -> list[list[int]]:
        """``table[i][a]`` is the id reached from node ``i`` by action ``a``;
        a missing edge (and Stop) maps to ``i`` itself."""
        if self._table is None:
            tab = []
            for i, p in enumerate(self._order):
                row = [i] * len(ACTION_ORDER)
                for a, q in self.edges[p]:
                    row[a] = self._ids[q]
                tab.append(row)
            self._table = tab
        return self._table

    def pose_ids(self, width: int, height: int, num_headings: int) -> np.ndarray:
        ids = np.full((num_headings, height, width), -1, dtype=np.intp)
        for i, p in enumerate(self._order):
            ids[p.theta, p.y, p.x] = i
        return ids


def _edge_target(pose: Pose, action: Action, grid: GridMap, motion: MotionModel) -> Optional[Pose]:
    q = motion.apply(pose, action)
    if action is Action.TURN_LEFT or action is Action.TURN_RIGHT:
        return q
    if q == pose or not grid.in_bounds(q.x, q.y):
        return None
    if grid.cells[q.y, q.x] != CellState.SEEN:
        return None
    return q


def expand(graph: PoseGraph, grid: GridMap, motion: MotionModel) -> PoseGraph:
    """Close the graph under the motion model on the current map.

    Rotations are always valid; a translation edge exists when it lands on a
    Seen cell. The result is a superset of ``graph``.
    """
    order = list(graph.order)
    ids = set(order)
    edges = {p: list(graph.edges[p]) for p in order}
    moves = [a for a in motion.move_actions]
    queue = deque(order)
    while queue:
        p = queue.popleft()
        have = {a for a, _ in edges[p]}
        for a in moves:
            if a in have:
                continue
            q = _edge_target(p, a, grid, motion)
            if q is None:
                continue
            edges[p].append((a, q))
            if q not in ids:
                ids.add(q)
                order.append(q)
                edges[q] = []
                queue.append(q)
    return PoseGraph(order, {p: tuple(v) for p, v in edges.items()})


def shortest_path(graph: PoseGraph, start: Pose, to_cell: tuple[int, int]) -> Optional[list[Action]]:
    """Fewest actions from ``start`` to any pose on cell ``to_cell`` = (x, y).

    Breadth-first over unit-cost edges, expanding actions in the fixed order
    Forward, Backward, Turn_Left, Turn_Right. Returns None if unreachable.
    """
    if start not in graph:
        raise ValueError(f"start pose {start} is not in the graph")
    return path_to(graph, start, lambda p: (p.x, p.y) == tuple(to_cell))


def path_to(graph: PoseGraph, start: Pose, goal) -> Optional[list[Action]]:
    """Breadth-first path to the first pose satisfying ``goal(pose)``."""
    if goal(start):
        return []
    parent: dict[Pose, tuple[Pose, Action]] = {start: (start, Action.STOP)}
    queue = deque([start])
    while queue:
        p = queue.popleft()
        for a, q in graph.edges[p]:
            if q in parent:
                continue
            parent[q] = (p, a)
            if goal(q):
                actions = []
                while q != start:
                    q, act = parent[q]
                    actions.append(act)
                return actions[::-1]
            queue.append(q)
    return None
