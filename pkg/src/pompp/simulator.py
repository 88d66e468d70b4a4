"""Ground-truth world: hidden occupancy, the target, sensing and detection,
plus a seeded rooms-and-corridors scene generator."""
from __future__ import annotations

import math
import random
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .grid_map import FrustumSpec, GridMap, Reconstruction, _frustum_from_blocked, new_unknown
from .motion import Pose


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Scene:
    width: int
    height: int
    occupancy: np.ndarray = field(repr=False)
    object_cell: int
    start_pose: Pose
    resolution: float = 0.3

    def __post_init__(self) -> None:
        if self.occupancy.shape != (self.height, self.width):
            raise ValueError("occupancy does not match scene shape")
        self.occupancy.setflags(write=False)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Scene):
            return NotImplemented
        return (
            (self.width, self.height, self.object_cell, self.start_pose, self.resolution)
            == (other.width, other.height, other.object_cell, other.start_pose, other.resolution)
            and np.array_equal(self.occupancy, other.occupancy)
        )

    __hash__ = None  # type: ignore[assignment]

    @property
    def object_xy(self) -> tuple[int, int]:
        return self.object_cell % self.width, self.object_cell // self.width

    def free(self, x: int, y: int) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height and not self.occupancy[y, x]

    def blank_map(self) -> GridMap:
        return new_unknown(self.width, self.height, self.resolution)

    def validate(self) -> None:
        ox, oy = self.object_xy
        sx, sy = self.start_pose.x, self.start_pose.y
        if not self.free(ox, oy):
            raise ValueError("object cell is occupied")
        if not self.free(sx, sy):
            raise ValueError("start cell is occupied")
        if free_space_distances(self, (sx, sy)).get((ox, oy)) is None:
            raise ValueError("object is not 4-connected to the start")


@dataclass(frozen=True)
class DetectorModel:
    true_positive_rate: float = 1.0
    false_positive_rate: float = 0.0
    max_detect_range: Optional[float] = None  # None: the frustum range

    def __post_init__(self) -> None:
        for r in (self.true_positive_rate, self.false_positive_rate):
            if not 0.0 <= r <= 1.0:
                raise ValueError(f"detector rates must be in [0, 1], got {r}")

    @property
    def perfect(self) -> bool:
        return self.true_positive_rate == 1.0 and self.false_positive_rate == 0.0


# ------------------------------------------------------------------ sensing


def sense(scene: Scene, pose: Pose, spec: FrustumSpec) -> Reconstruction:
    if not scene.free(pose.x, pose.y):
        raise ValueError(f"cannot sense from occupied or out-of-bounds pose {pose}")
    occ = scene.occupancy
    cells = _frustum_from_blocked(pose, spec, occ)
    flat = occ.ravel()
    return Reconstruction(tuple((c, bool(flat[c])) for c in sorted(cells)))


def object_visible(scene: Scene, pose: Pose, spec: FrustumSpec, det: Optional[DetectorModel] = None) -> bool:
    """Ground-truth check: target in the unblocked frustum and detector range."""
    ox, oy = scene.object_xy
    dist = math.hypot(ox - pose.x, oy - pose.y)
    limit = spec.range_cells if det is None or det.max_detect_range is None else det.max_detect_range
    if dist > limit + 1e-9:
        return False
    return scene.object_cell in _frustum_from_blocked(pose, spec, scene.occupancy)


def detect(scene: Scene, pose: Pose, spec: FrustumSpec, det: DetectorModel, rng: random.Random) -> bool:
    visible = object_visible(scene, pose, spec, det)
    if det.perfect:
        return visible
    p = det.true_positive_rate if visible else det.false_positive_rate
    return rng.random() < p


# ------------------------------------------------------------------ ground truth


def free_space_distances(scene: Scene, source: tuple[int, int]) -> dict[tuple[int, int], int]:
    """4-connected BFS distances (cells) over free space."""
    dist = {source: 0}
    queue = deque([source])
    while queue:
        x, y = queue.popleft()
        d = dist[(x, y)] + 1
        for nx, ny in ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)):
            if (nx, ny) not in dist and scene.free(nx, ny):
                dist[(nx, ny)] = d
                queue.append((nx, ny))
    return dist


# ------------------------------------------------------------------ file format


def dump_scene(scene: Scene) -> str:
    ox, oy = scene.object_xy
    s = scene.start_pose
    lines = [
        f"{scene.width} {scene.height} {scene.resolution!r}",
        f"start {s.x} {s.y} {s.theta}",
        f"object {ox} {oy}",
    ]
    lines += ["".join("#" if v else "." for v in row) for row in scene.occupancy]
    return "\n".join(lines) + "\n"


def parse_scene(text: str) -> Scene:
    lines = text.splitlines()
    try:
        w, h, res = lines[0].split()
        tag, sx, sy, st = lines[1].split()
        otag, ox, oy = lines[2].split()
    except (IndexError, ValueError) as exc:
        raise ValueError("malformed scene header") from exc
    if tag != "start" or otag != "object":
        raise ValueError("malformed scene header")
    w, h = int(w), int(h)
    rows = lines[3 : 3 + h]
    if len(rows) != h or any(len(r) != w for r in rows):
        raise ValueError("scene grid does not match header dimensions")
    occ = np.array([[ch == "#" for ch in r] for r in rows], dtype=bool)
    if any(ch not in "#." for r in rows for ch in r):
        raise ValueError("scene grid may only contain '#' and '.'")
    return Scene(w, h, occ, int(oy) * w + int(ox), Pose(int(sx), int(sy), int(st)), float(res))


def save_scene(scene: Scene, path: Path) -> None:
    Path(path).write_text(dump_scene(scene))


def load_scene(path: Path) -> Scene:
    return parse_scene(Path(path).read_text())


# ------------------------------------------------------------------ generator


@dataclass(frozen=True)
class SceneParams:
    width: int = 40
    height: int = 40
    num_rooms: int = 8
    corridor_width: int = 2
    seed: int = 0
    min_room: int = 6
    max_room: int = 12
    min_object_distance: int = 12
    num_headings: int = 4
    resolution: float = 0.3
    max_retries: int = 200


def generate_scene(params: SceneParams) -> Scene:
    """Rectangular rooms joined by L-shaped corridors inside a walled border.

    Rooms are placed by rejection sampling and chained in a random order so
    the free space is connected. The object goes in a uniformly chosen free
    cell at least ``min_object_distance`` BFS steps from the start.
    """
    p = params
    if p.width < 8 or p.height < 8:
        raise GenerationError("scene dimensions must be >= 8")
    if p.num_rooms < 1 or p.corridor_width < 1 or p.min_room < 2 or p.max_room < p.min_room:
        raise GenerationError(f"infeasible generator parameters {p}")
    rng = random.Random(p.seed)
    for _ in range(p.max_retries):
        scene = _try_generate(p, rng)
        if scene is not None:
            return scene
    raise GenerationError(f"no valid scene after {p.max_retries} attempts for {p}")


def _try_generate(p: SceneParams, rng: random.Random) -> Optional[Scene]:
    occ = np.ones((p.height, p.width), dtype=bool)
    rooms: list[tuple[int, int, int, int]] = []
    for _ in range(p.num_rooms * 30):
        if len(rooms) == p.num_rooms:
            break
        rw = rng.randint(p.min_room, min(p.max_room, p.width - 2))
        rh = rng.randint(p.min_room, min(p.max_room, p.height - 2))
        x0 = rng.randint(1, p.width - 1 - rw)
        y0 = rng.randint(1, p.height - 1 - rh)
        # one wall cell must separate rooms
        if any(
            x0 - 1 < ax + aw and ax - 1 < x0 + rw and y0 - 1 < ay + ah and ay - 1 < y0 + rh
            for ax, ay, aw, ah in rooms
        ):
            continue
        rooms.append((x0, y0, rw, rh))
    if not rooms:
        return None
    for x0, y0, rw, rh in rooms:
        occ[y0 : y0 + rh, x0 : x0 + rw] = False
    order = rooms[:]
    rng.shuffle(order)
    cw = p.corridor_width
    for a, b in zip(order, order[1:]):
        ax, ay = a[0] + rng.randrange(a[2]), a[1] + rng.randrange(a[3])
        bx, by = b[0] + rng.randrange(b[2]), b[1] + rng.randrange(b[3])
        _carve_corridor(occ, ax, ay, bx, by, cw, rng.random() < 0.5)
    occ[0, :] = occ[-1, :] = True
    occ[:, 0] = occ[:, -1] = True

    free = [(x, y) for y in range(p.height) for x in range(p.width) if not occ[y, x]]
    if len(free) < 2:
        return None
    sx, sy = free[rng.randrange(len(free))]
    start = Pose(sx, sy, rng.randrange(p.num_headings))
    probe = Scene(p.width, p.height, occ, sy * p.width + sx, start, p.resolution)
    dist = free_space_distances(probe, (sx, sy))
    if len(dist) != len(free):
        return None
    far = sorted(c for c, d in dist.items() if d >= p.min_object_distance)
    if not far:
        return None
    ox, oy = far[rng.randrange(len(far))]
    return Scene(p.width, p.height, occ.copy(), oy * p.width + ox, start, p.resolution)


def _carve_corridor(occ: np.ndarray, ax: int, ay: int, bx: int, by: int, cw: int, x_first: bool) -> None:
    h, w = occ.shape

    def carve(x: int, y: int) -> None:
        occ[max(1, y) : min(h - 1, y + cw), max(1, x) : min(w - 1, x + cw)] = False

    if x_first:
        for x in range(min(ax, bx), max(ax, bx) + 1):
            carve(x, ay)
        for y in range(min(ay, by), max(ay, by) + 1):
            carve(bx, y)
    else:
        for y in range(min(ay, by), max(ay, by) + 1):
            carve(ax, y)
        for x in range(min(ax, bx), max(ax, bx) + 1):
            carve(x, by)
