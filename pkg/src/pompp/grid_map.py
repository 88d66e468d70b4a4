"""The robot's knowledge map: four-valued cells, frustum sensing and visibility.

Cells are addressed by flat row-major index ``y * width + x``. Maps are
immutable; :func:`map_update` returns a new map.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from functools import lru_cache
from typing import Iterable, Optional

import numpy as np

from .motion import Pose, heading_degrees

RANGE_EPS = 1e-9
ANGLE_EPS = 1e-9


class CellState(IntEnum):
    UNKNOWN = 0
    SEEN = 1
    CANDIDATE = 2
    OCCLUDER = 3


_GLYPHS = {
    CellState.OCCLUDER: "#",
    CellState.SEEN: ".",
    CellState.CANDIDATE: "F",
    CellState.UNKNOWN: "?",
}
_FROM_GLYPH = {v: k for k, v in _GLYPHS.items()}


@dataclass(frozen=True)
class FrustumSpec:
    """Camera field of view. ``num_headings`` maps a pose's theta to an angle."""

    fov_degrees: float = 90.0
    range_cells: float = 10.0
    num_headings: int = 4

    def __post_init__(self) -> None:
        if not 0 < self.fov_degrees <= 360:
            raise ValueError(f"fov_degrees must be in (0, 360], got {self.fov_degrees}")
        if self.range_cells < 1:
            raise ValueError(f"range_cells must be >= 1, got {self.range_cells}")
        if self.num_headings < 1:
            raise ValueError("num_headings must be >= 1")


@dataclass(frozen=True)
class Reconstruction:
    """Occupancy of the cells inside one frustum: ``(cell index, occupied)``."""

    observed: tuple[tuple[int, bool], ...] = ()


@dataclass(frozen=True, eq=False)
class GridMap:
    width: int
    height: int
    resolution: float
    cells: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError("map dimensions must be >= 1")
        if not self.resolution > 0:
            raise ValueError("resolution must be > 0")
        if self.cells.shape != (self.height, self.width):
            raise ValueError("cells array does not match map shape")
        self.cells.setflags(write=False)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GridMap):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and self.resolution == other.resolution
            and np.array_equal(self.cells, other.cells)
        )

    __hash__ = None  # type: ignore[assignment]

    @property
    def size(self) -> int:
        return self.width * self.height

    def index(self, x: int, y: int) -> int:
        return y * self.width + x

    def xy(self, cell: int) -> tuple[int, int]:
        return cell % self.width, cell // self.width

    def in_bounds(self, x: int, y: int) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height

    def state(self, cell: int) -> CellState:
        x, y = self.xy(cell)
        return CellState(int(self.cells[y, x]))

    def cells_in(self, state: CellState) -> set[int]:
        return set(np.flatnonzero(self.cells.ravel() == state).tolist())

    @classmethod
    def from_states(cls, states: np.ndarray, resolution: float = 0.3) -> "GridMap":
        arr = np.array(states, dtype=np.uint8)
        return cls(arr.shape[1], arr.shape[0], resolution, arr)

    def to_ascii(self) -> str:
        return "\n".join(
            "".join(_GLYPHS[CellState(int(v))] for v in row) for row in self.cells
        )

    @classmethod
    def from_ascii(cls, text: str, resolution: float = 0.3) -> "GridMap":
        rows = [r for r in text.strip("\n").split("\n")]
        arr = np.array([[_FROM_GLYPH[ch] for ch in r] for r in rows], dtype=np.uint8)
        return cls(arr.shape[1], arr.shape[0], resolution, arr)


def new_unknown(width: int, height: int, resolution: float) -> GridMap:
    if width < 1 or height < 1:
        raise ValueError(f"map dimensions must be >= 1, got {width}x{height}")
    return GridMap(width, height, resolution, np.zeros((height, width), dtype=np.uint8))


# --------------------------------------------------------------------- geometry


def line_between(x0: int, y0: int, x1: int, y1: int) -> tuple[tuple[int, int], ...]:
    """Cells strictly between two cells on the Bresenham segment.

    The walk always starts from the row-major smaller endpoint, so the result
    does not depend on argument order.
    """
    if (y1, x1) < (y0, x0):
        x0, y0, x1, y1 = x1, y1, x0, y0
    dx, dy = abs(x1 - x0), abs(y1 - y0)
    sx = 1 if x1 > x0 else -1
    sy = 1 if y1 > y0 else -1
    err = dx - dy
    x, y = x0, y0
    out = []
    while (x, y) != (x1, y1):
        e2 = 2 * err
        if e2 > -dy:
            err -= dy
            x += sx
        if e2 < dx:
            err += dx
            y += sy
        if (x, y) != (x1, y1):
            out.append((x, y))
    return tuple(out)


def bearing_degrees(dx: int, dy: int) -> float:
    return math.degrees(math.atan2(-dy, dx))


def in_fov(dx: int, dy: int, theta: int, spec: FrustumSpec) -> bool:
    if dx == 0 and dy == 0 or spec.fov_degrees >= 360:
        return True
    diff = bearing_degrees(dx, dy) - heading_degrees(theta, spec.num_headings)
    diff = (diff + 180.0) % 360.0 - 180.0
    return abs(diff) <= spec.fov_degrees / 2 + ANGLE_EPS


def in_range(dx: int, dy: int, spec: FrustumSpec) -> bool:
    return math.hypot(dx, dy) <= spec.range_cells + RANGE_EPS


class _RayTable:
    """Every displacement within range, with the cells between its endpoints."""

    def __init__(self, spec: FrustumSpec):
        r = int(math.floor(spec.range_cells + RANGE_EPS))
        disp = [
            (dx, dy)
            for dy in range(-r, r + 1)
            for dx in range(-r, r + 1)
            if in_range(dx, dy, spec)
        ]
        between = [line_between(0, 0, dx, dy) for dx, dy in disp]
        width = max(1, max(len(b) for b in between))
        k = len(disp)
        self.pad = r
        self.dx = np.array([d[0] for d in disp], dtype=np.intp)
        self.dy = np.array([d[1] for d in disp], dtype=np.intp)
        self.bx = np.zeros((k, width), dtype=np.intp)
        self.by = np.zeros((k, width), dtype=np.intp)
        self.valid = np.zeros((k, width), dtype=bool)
        for i, cells in enumerate(between):
            for j, (cx, cy) in enumerate(cells):
                self.bx[i, j] = cx
                self.by[i, j] = cy
                self.valid[i, j] = True
        self.fov = np.array(
            [[in_fov(dx, dy, t, spec) for t in range(spec.num_headings)] for dx, dy in disp],
            dtype=bool,
        ).reshape(k, spec.num_headings)


@lru_cache(maxsize=32)
def _ray_table(spec: FrustumSpec) -> _RayTable:
    return _RayTable(spec)


def _padded(blocked: np.ndarray, pad: int) -> np.ndarray:
    return np.pad(blocked, pad, mode="constant", constant_values=False)


def _check_pose(grid: GridMap, pose: Pose, spec: FrustumSpec) -> None:
    if not grid.in_bounds(pose.x, pose.y):
        raise ValueError(f"pose {pose} outside {grid.width}x{grid.height} map")
    if not 0 <= pose.theta < spec.num_headings:
        raise ValueError(f"pose heading {pose.theta} outside [0, {spec.num_headings})")


def frustum_cells(
    pose: Pose,
    spec: FrustumSpec,
    grid: GridMap,
    occupancy: Optional[np.ndarray] = None,
) -> set[int]:
    """Cells sensed from ``pose``.

    Rays are blocked by map Occluders and, when given, by the ground-truth
    ``occupancy`` (bool array, True = occupied). A blocking cell is itself
    sensed; cells behind it are not.
    """
    _check_pose(grid, pose, spec)
    blocked = grid.cells == CellState.OCCLUDER
    if occupancy is not None:
        blocked = blocked | occupancy
    return _frustum_from_blocked(pose, spec, blocked)


def _frustum_from_blocked(pose: Pose, spec: FrustumSpec, blocked: np.ndarray) -> set[int]:
    tab = _ray_table(spec)
    h, w = blocked.shape
    tx = pose.x + tab.dx
    ty = pose.y + tab.dy
    ok = (tx >= 0) & (tx < w) & (ty >= 0) & (ty < h) & tab.fov[:, pose.theta]
    pb = _padded(blocked, tab.pad)
    hit = pb[pose.y + tab.by + tab.pad, pose.x + tab.bx + tab.pad] & tab.valid
    ok &= ~hit.any(axis=1)
    return set((ty[ok] * w + tx[ok]).tolist())


def visibility(grid: GridMap, pose: Pose, cell: int, spec: FrustumSpec) -> int:
    """1 if ``cell`` is within range and fov of ``pose`` and no Occluder lies
    strictly between them; Unknown, Candidate and Seen cells never block."""
    _check_pose(grid, pose, spec)
    if not 0 <= cell < grid.size:
        raise ValueError(f"cell {cell} outside map")
    cx, cy = grid.xy(cell)
    dx, dy = cx - pose.x, cy - pose.y
    if not in_range(dx, dy, spec) or not in_fov(dx, dy, pose.theta, spec):
        return 0
    return int(line_of_sight(grid, pose.x, pose.y, cx, cy))


def line_of_sight(grid: GridMap, x0: int, y0: int, x1: int, y1: int) -> bool:
    cells = grid.cells
    occ = CellState.OCCLUDER
    return all(cells[y, x] != occ for x, y in line_between(x0, y0, x1, y1))


def visible_cells(grid: GridMap, pose: Pose, spec: FrustumSpec) -> set[int]:
    """All cells ``c`` with ``visibility(grid, pose, c, spec) == 1``."""
    return frustum_cells(pose, spec, grid)


def observers_of(
    grid: GridMap, cell: int, spec: FrustumSpec, pose_ids: np.ndarray
) -> np.ndarray:
    """Ids of every pose that sees ``cell``.

    ``pose_ids`` has shape ``(num_headings, height, width)`` and holds a pose
    id or -1 where no pose exists.
    """
    tab = _ray_table(spec)
    h, w = grid.height, grid.width
    cx, cy = grid.xy(cell)
    sx = cx - tab.dx
    sy = cy - tab.dy
    inb = (sx >= 0) & (sx < w) & (sy >= 0) & (sy < h)
    pb = _padded(grid.cells == CellState.OCCLUDER, tab.pad)
    hit = pb[sy[:, None] + tab.by + tab.pad, sx[:, None] + tab.bx + tab.pad] & tab.valid
    clear = inb & ~hit.any(axis=1)
    out = []
    for theta in range(spec.num_headings):
        ok = clear & tab.fov[:, theta]
        ids = pose_ids[theta, sy[ok], sx[ok]]
        out.append(ids[ids >= 0])
    return np.concatenate(out) if out else np.empty(0, dtype=np.intp)


# --------------------------------------------------------------------- updates


def _frontier(cells: np.ndarray) -> np.ndarray:
    seen = cells == CellState.SEEN
    known = seen | (cells == CellState.OCCLUDER)
    adj = np.zeros_like(seen)
    adj[1:, :] |= seen[:-1, :]
    adj[:-1, :] |= seen[1:, :]
    adj[:, 1:] |= seen[:, :-1]
    adj[:, :-1] |= seen[:, 1:]
    return adj & ~known


def map_update(
    grid: GridMap,
    pose: Pose,
    rec: Reconstruction,
    spec: FrustumSpec = FrustumSpec(),
) -> GridMap:
    """Apply one sensing step.

    Unknown/Candidate cells reported free become Seen, reported occupied
    become Occluder; already-known cells keep their state. The Candidate set
    is then recomputed from scratch as every non-known cell 4-adjacent to a
    Seen cell.
    """
    _check_pose(grid, pose, spec)
    cells = grid.cells.copy()
    for cell, occupied in rec.observed:
        if not 0 <= cell < grid.size:
            raise ValueError(f"reconstruction cell {cell} outside map")
        x, y = grid.xy(cell)
        dx, dy = x - pose.x, y - pose.y
        if not (in_range(dx, dy, spec) and in_fov(dx, dy, pose.theta, spec)):
            raise ValueError(f"reconstruction cell {(x, y)} outside the frustum of {pose}")
        if cells[y, x] in (CellState.SEEN, CellState.OCCLUDER):
            continue
        cells[y, x] = CellState.OCCLUDER if occupied else CellState.SEEN
    return _with_frontier(grid, cells)


def _with_frontier(grid: GridMap, cells: np.ndarray) -> GridMap:
    cells[cells == CellState.CANDIDATE] = CellState.UNKNOWN
    cells[_frontier(cells)] = CellState.CANDIDATE
    return GridMap(grid.width, grid.height, grid.resolution, cells)


def with_states(grid: GridMap, updates: Iterable[tuple[int, CellState]]) -> GridMap:
    """Force cell states and recompute the frontier. Used to build fixtures."""
    cells = grid.cells.copy()
    for cell, state in updates:
        x, y = grid.xy(cell)
        cells[y, x] = state
    return _with_frontier(grid, cells)


def candidates(grid: GridMap) -> set[int]:
    return grid.cells_in(CellState.CANDIDATE)
