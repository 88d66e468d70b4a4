"""Robot poses, the discrete action set and the deterministic motion model."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import NamedTuple


class Action(IntEnum):
    """Robot actions. The integer value is the fixed tie-break order."""

    FORWARD = 0
    BACKWARD = 1
    TURN_LEFT = 2
    TURN_RIGHT = 3
    STOP = 4


ACTION_ORDER = tuple(Action)


class Pose(NamedTuple):
    x: int
    y: int
    theta: int


def heading_degrees(theta: int, num_headings: int) -> float:
    return theta * 360.0 / num_headings


def heading_step(theta: int, num_headings: int) -> tuple[int, int]:
    """Cell offset of one translation along ``theta``.

    Heading 0 points east (+x); headings increase counter-clockwise as seen
    on a map whose rows grow downward, so heading 90 degrees points to -y.
    """
    a = math.radians(heading_degrees(theta, num_headings))
    dx = _round_half_away(math.cos(a))
    dy = _round_half_away(-math.sin(a))
    return dx, dy


def _round_half_away(v: float) -> int:
    v = round(v, 9)
    return int(math.floor(abs(v) + 0.5)) * (1 if v >= 0 else -1)


@dataclass(frozen=True)
class MotionModel:
    """4 headings by default; ``num_headings=12`` gives 30 degree turns."""

    num_headings: int = 4
    allow_backward: bool = True

    def __post_init__(self) -> None:
        if self.num_headings < 1:
            raise ValueError("num_headings must be >= 1")

    @property
    def actions(self) -> tuple[Action, ...]:
        if self.allow_backward:
            return ACTION_ORDER
        return tuple(a for a in ACTION_ORDER if a is not Action.BACKWARD)

    @property
    def move_actions(self) -> tuple[Action, ...]:
        return tuple(a for a in self.actions if a is not Action.STOP)

    def apply(self, pose: Pose, action: Action) -> Pose:
        """Raw kinematics, ignoring map validity."""
        x, y, t = pose
        if action is Action.TURN_LEFT:
            return Pose(x, y, (t + 1) % self.num_headings)
        if action is Action.TURN_RIGHT:
            return Pose(x, y, (t - 1) % self.num_headings)
        if action is Action.FORWARD or action is Action.BACKWARD:
            if action is Action.BACKWARD and not self.allow_backward:
                return pose
            dx, dy = heading_step(t, self.num_headings)
            sign = 1 if action is Action.FORWARD else -1
            return Pose(x + sign * dx, y + sign * dy, t)
        return pose
