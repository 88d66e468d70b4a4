import random

import numpy as np
import pytest

import oracles
from micro import micro_instance
from pompp.belief import Belief
from pompp.grid_map import FrustumSpec, GridMap, with_states
from pompp.motion import Action, MotionModel, Pose
from pompp.pomcp import Node, PlannerConfig, SearchContext, plan
from pompp.pomdp_model import AvsModel, AvsState, RewardSpec
from pompp.pose_graph import PoseGraph, expand

MODEL = AvsModel()


def setup(ascii_map, pose):
    grid = with_states(GridMap.from_ascii(ascii_map), [])
    graph = expand(PoseGraph([pose]), grid, MotionModel())
    return grid, graph


def exact(grid, graph, pose, weights, mu):
    return oracles.expectimax_values(
        np.asarray(grid.cells), {p: list(graph.edges[p]) for p in graph.order}, pose, weights, mu
    )


def optimal_set(values):
    best = max(values.values())
    return {Action(a) for a, v in values.items() if v >= best - 1e-9}


# An L-shaped sealed corridor; the candidate sits round the corner, hidden
# from the west end by the wall.
CORNER = "\n".join(["#######", "#....##", "####.##", "####?##", "#######"])
TARGET = (4, 3)
# A 3-cell corridor whose end cell sees the candidate below it.
SHORT = "\n".join(["#####", "#...#", "###?#", "#####"])


def test_forward_when_one_step_reveals_the_target():
    grid, graph = setup("#####\n#..?#\n#####", Pose(1, 1, 0))
    cell = grid.index(3, 1)
    # with range 1 the start does not see it, one Forward does
    model = AvsModel(frustum=FrustumSpec(90, 1))
    res = plan(Belief([cell]), Pose(1, 1, 0), grid, graph, model, PlannerConfig(500, 5), random.Random(0))
    values = oracles.expectimax_values(
        np.asarray(grid.cells), {p: list(graph.edges[p]) for p in graph.order}, Pose(1, 1, 0), {cell: 1}, 5, rng=1
    )
    assert optimal_set(values) == {Action.FORWARD}
    assert res.chosen_action is Action.FORWARD


def test_target_behind_robot():
    grid, graph = setup(CORNER, Pose(2, 1, 0))
    cell = grid.index(*TARGET)
    res = plan(Belief([cell] * 3), Pose(2, 1, 0), grid, graph, MODEL, PlannerConfig(2000, 5), random.Random(1))
    opt = optimal_set(exact(grid, graph, Pose(2, 1, 0), {cell: 1}, 5))
    assert opt <= {Action.BACKWARD, Action.TURN_LEFT, Action.TURN_RIGHT, Action.FORWARD}
    assert res.chosen_action in opt


def test_single_simulation_budget():
    grid, graph = setup(CORNER, Pose(1, 1, 0))
    res = plan(Belief([grid.index(*TARGET)]), Pose(1, 1, 0), grid, graph, MODEL, PlannerConfig(1, 5), random.Random(0))
    assert len(res.records) == 1
    assert res.chosen_action is Action.FORWARD
    assert sum(n for _, n in res.root_values.values()) == 1


def test_budget_exact_and_values_bounded():
    grid, graph, pose, _, parts = micro_instance(3)
    res = plan(Belief(parts), pose, grid, graph, MODEL, PlannerConfig(777, 5), random.Random(2))
    assert len(res.records) == res.counters["simulations"] == 777
    floor, top = MODEL.rewards.floor, MODEL.rewards.r_detect
    for q, n in res.root_values.values():
        if n:
            assert floor - 1e-9 <= q <= top + 1e-9


def test_plan_rejects_empty_belief_and_unknown_pose():
    grid, graph = setup(CORNER, Pose(1, 1, 0))
    with pytest.raises(ValueError):
        plan(Belief(), Pose(1, 1, 0), grid, graph, MODEL, PlannerConfig(), random.Random(0))
    with pytest.raises(ValueError):
        plan(Belief([7]), Pose(0, 0, 0), grid, graph, MODEL, PlannerConfig(), random.Random(0))


@pytest.mark.parametrize("kw", [{"num_simulations": 0}, {"max_sim_depth": 0}, {"ucb_c": -1}, {"rollout_policy": "greedy"}])
def test_planner_config_validation(kw):
    with pytest.raises(ValueError):
        PlannerConfig(**kw)


def test_deterministic_root_values():
    grid, graph, pose, _, parts = micro_instance(8)
    a = plan(Belief(parts), pose, grid, graph, MODEL, PlannerConfig(3000, 5), random.Random(4))
    b = plan(Belief(parts), pose, grid, graph, MODEL, PlannerConfig(3000, 5), random.Random(4))
    assert a.root_values == b.root_values
    assert a.records == b.records


def test_reward_scaling_keeps_choice():
    for seed in range(5):
        grid, graph, pose, _, parts = micro_instance(seed)
        base = plan(Belief(parts), pose, grid, graph, MODEL, PlannerConfig(2000, 5), random.Random(seed))
        for k in (2.0, 4.0):
            model = AvsModel(rewards=RewardSpec().scaled(k))
            cfg = PlannerConfig(2000, 5, ucb_c=1000.0 * k)
            res = plan(Belief(parts), pose, grid, graph, model, cfg, random.Random(seed))
            assert res.chosen_action is base.chosen_action


def test_parallel_mode_is_well_formed():
    grid, graph, pose, _, parts = micro_instance(1)
    res = plan(Belief(parts), pose, grid, graph, MODEL, PlannerConfig(400, 5, workers=2), random.Random(0))
    assert len(res.records) == 400
    assert sum(n for _, n in res.root_values.values()) == 400


# ------------------------------------------------------------ simulate


def test_simulate_at_depth_cap_returns_immediate_reward():
    grid, graph = setup(CORNER, Pose(1, 1, 0))
    ctx = SearchContext(grid, graph, MODEL, PlannerConfig(10, 5))
    node = Node(5)
    ret = ctx.simulate(AvsState(Pose(1, 1, 0), grid.index(*TARGET)), node, 5, random.Random(0))
    assert ret == MODEL.rewards.r_step
    assert node.n == 1 and not node.children


def test_simulate_detection_on_first_step():
    grid, graph = setup(CORNER, Pose(4, 1, 0))
    ctx = SearchContext(grid, graph, MODEL, PlannerConfig(10, 5))
    node = Node(5)
    # facing east at the corner: a right turn faces south onto the target;
    # mark the first three actions as tried so Turn_Right comes next
    node.tried = 3
    ret = ctx.simulate(AvsState(Pose(4, 1, 0), grid.index(*TARGET)), node, 1, random.Random(0))
    assert ret == MODEL.rewards.r_detect
    assert node.n == 1 and node.na[Action.TURN_RIGHT] == 1


# ------------------------------------------------------------ rollout


def test_rollout_visible_from_start():
    grid, graph = setup(CORNER, Pose(4, 1, 3))
    ctx = SearchContext(grid, graph, MODEL, PlannerConfig(10, 5))
    rng = random.Random(0)
    state = AvsState(Pose(4, 1, 3), grid.index(*TARGET))
    assert all(ctx.rollout(state, 1, rng) == MODEL.rewards.r_detect for _ in range(20))


def test_rollout_past_depth_cap_is_zero():
    grid, graph = setup(CORNER, Pose(1, 1, 0))
    ctx = SearchContext(grid, graph, MODEL, PlannerConfig(10, 3))
    assert ctx.rollout(AvsState(Pose(1, 1, 0), grid.index(*TARGET)), 4, random.Random(0)) == 0.0


def test_rollout_mean_matches_random_walk_expectation():
    grid, graph = setup(SHORT, Pose(1, 1, 2))
    cfg = PlannerConfig(10, 8)
    ctx = SearchContext(grid, graph, MODEL, cfg)
    cell = grid.index(3, 2)
    st = np.asarray(grid.cells)
    vis = {p for p in graph.order if oracles.visible(st, p, cell)}
    legal = {}
    for p in graph.order:
        nexts = []
        for a, q in graph.edges[p]:
            if a is not Action.STOP and (q != p or a in (Action.TURN_LEFT, Action.TURN_RIGHT)):
                nexts.append(q)
        legal[p] = tuple(nexts)
    start = Pose(1, 1, 2)
    assert start not in vis
    rw = MODEL.rewards
    want = oracles.random_walk_value(legal, frozenset(vis), start, 1, cfg.max_sim_depth, rw.r_detect, rw.r_step, rw.gamma)
    rng = random.Random(12)
    state = AvsState(start, cell)
    n = 100_000
    got = sum(ctx.rollout(state, 1, rng) for _ in range(n)) / n
    assert abs(got - want) <= 0.01 * abs(want)



def test_blocked_move_keeps_pose_and_can_be_chosen():
    # facing the east wall: Forward has no edge and means "stay and look
    # again"; with one simulation it is the only tried action, so it wins
    grid, graph = setup("#####\n#...#\n#####", Pose(3, 1, 0))
    assert graph.successor(Pose(3, 1, 0), Action.FORWARD) is None
    res = plan(Belief([grid.index(1, 1)]), Pose(3, 1, 0), grid, graph, MODEL, PlannerConfig(1, 5), random.Random(0))
    assert res.root_values[Action.FORWARD][1] == 1
    assert res.chosen_action is Action.FORWARD
