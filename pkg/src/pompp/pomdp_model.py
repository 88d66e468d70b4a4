"""The active-search POMDP: states, observations, dynamics and rewards.

The robot pose evolves deterministically along pose-graph edges, the target
is static, and the observation is a single detection bit given by the
visibility function of the current map.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .grid_map import FrustumSpec, GridMap, visibility
from .motion import Action, MotionModel, Pose
from .pose_graph import PoseGraph


@dataclass(frozen=True)
class AvsState:
    robot: Pose
    object_cell: int


@dataclass(frozen=True)
class Observation:
    detected: bool


@dataclass(frozen=True)
class RewardSpec:
    r_detect: float = 1000.0
    r_step: float = -1.0
    gamma: float = 0.95

    def __post_init__(self) -> None:
        if not 0 <= self.gamma < 1:
            raise ValueError(f"gamma must be in [0, 1), got {self.gamma}")
        if not self.r_detect > 0 > self.r_step:
            raise ValueError("rewards must satisfy r_detect > 0 > r_step")

    @property
    def floor(self) -> float:
        """Value of never detecting: the infinite discounted step-penalty stream."""
        return self.r_step / (1.0 - self.gamma)

    @property
    def stop_value(self) -> float:
        # Stopping inside a simulation forfeits every future detection.
        return self.floor

    def scaled(self, k: float) -> "RewardSpec":
        return RewardSpec(self.r_detect * k, self.r_step * k, self.gamma)


@dataclass(frozen=True)
class AvsModel:
    """Everything the planner needs besides the map, graph and belief."""

    rewards: RewardSpec = RewardSpec()
    frustum: FrustumSpec = FrustumSpec()
    motion: MotionModel = MotionModel()

    def __post_init__(self) -> None:
        if self.frustum.num_headings != self.motion.num_headings:
            raise ValueError("frustum and motion model disagree on num_headings")


def transition(state: AvsState, action: Action, graph: PoseGraph) -> AvsState:
    nxt = graph.successor(state.robot, action)
    if nxt is None:
        return state
    return AvsState(nxt, state.object_cell)


def observe(state: AvsState, grid: GridMap, spec: FrustumSpec) -> Observation:
    return Observation(visibility(grid, state.robot, state.object_cell, spec) == 1)


def reward(prev: AvsState, action: Action, obs: Observation, spec: RewardSpec) -> float:
    return spec.r_detect if obs.detected else spec.r_step


def discounted_return(rewards: Sequence[float], gamma: float) -> float:
    total, disc = 0.0, 1.0
    for r in rewards:
        total += disc * r
        disc *= gamma
    return total
