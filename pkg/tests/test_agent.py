import json
from dataclasses import replace

import numpy as np
import pytest

from pompp.agent import (
    Episode,
    EpisodeConfig,
    Termination,
    _Outcome,
    approach_target,
    is_success_pose,
    log_to_json,
    optimal_path_length,
    run_episode,
    run_greedy_frontier,
    run_random_walk,
)
from pompp.motion import Action, Pose
from pompp.pomcp import PlannerConfig
from pompp.simulator import DetectorModel, Scene, parse_scene

FAST = EpisodeConfig(planner=PlannerConfig(num_simulations=200), record_timing=False)


def scene_from(rows, start, obj):
    occ = np.array([[ch == "#" for ch in r] for r in rows], dtype=bool)
    h, w = occ.shape
    return Scene(w, h, occ, obj[1] * w + obj[0], Pose(*start))


def open_room(w, h, start, obj):
    rows = ["#" * w] + ["#" + "." * (w - 2) + "#" for _ in range(h - 2)] + ["#" * w]
    return scene_from(rows, start, obj)


# 30-cell corridor between x=1 and x=30, object at the west end.
CORRIDOR = scene_from(["#" * 32, "#" + "." * 30 + "#", "#" * 32], (15, 1, 0), (1, 1))


def test_object_in_start_view_is_approached():
    sc = open_room(12, 5, (1, 2, 0), (8, 2))
    res = run_episode(sc, FAST)
    # 7 cells = 2.1 m away; the first pose within 1 m (3.33 cells) is x = 5
    assert res.success and res.termination_reason is Termination.REACHED
    assert res.steps_taken == 4 == res.shortest_path_len
    assert [a["action"] for a in res.log["steps"]] == ["FORWARD"] * 4


def test_sealed_object_exhausts_budget():
    rows = ["#########", "#....#.##", "#....####", "#########"]
    sc = scene_from(rows, (1, 1, 0), (6, 1))
    res = run_episode(sc, replace(FAST, max_episode_steps=15))
    assert not res.success
    assert res.termination_reason is Termination.BUDGET
    assert res.steps_taken == 15 == len(res.path) - 1
    assert res.shortest_path_len is None


def test_episode_is_deterministic():
    sc = parse_scene(
        "10 6 0.3\nstart 1 1 0\nobject 8 4\n"
        "##########\n#....#...#\n#....#...#\n#........#\n#....#...#\n##########\n"
    )
    logs = {log_to_json(run_episode(sc, FAST)) for _ in range(3)}
    assert len(logs) == 1


def test_approach_three_moves():
    sc = open_room(12, 3, (1, 1, 0), (7, 1))
    ep = Episode(sc, FAST, "pomp++")
    ep.sense()
    assert ep.detect()
    assert approach_target(ep, sc.object_cell) is _Outcome.REACHED
    assert ep.steps == 3
    assert is_success_pose(sc, ep.pose, FAST)


def test_approach_false_alarm_gives_up_after_patience():
    sc = open_room(14, 3, (1, 1, 0), (12, 1))
    cfg = replace(FAST, frustum=replace(FAST.frustum, range_cells=4))
    ep = Episode(sc, cfg, "pomp++")
    ep.sense()
    ep.detected = True  # pretend the detector fired on an empty cell
    assert approach_target(ep, sc.width + 5) is _Outcome.FALSE_ALARM
    assert ep.steps == cfg.false_alarm_patience


def test_approach_unreachable_target():
    rows = ["#######", "#..#..#", "#######"]
    sc = scene_from(rows, (1, 1, 0), (5, 1))
    ep = Episode(sc, FAST, "pomp++")
    ep.sense()
    ep.detected = True
    assert approach_target(ep, sc.object_cell) is _Outcome.UNREACHABLE
    assert ep.steps == 0


def test_false_alarms_are_counted():
    sc = CORRIDOR
    cfg = replace(FAST, detector=DetectorModel(1.0, 0.3), max_episode_steps=40)
    counts = [run_episode(sc, replace(cfg, seed=s)).false_alarms for s in range(3)]
    assert max(counts) >= 1


def test_random_walk_adjacent_object():
    sc = open_room(7, 7, (2, 3, 0), (3, 3))
    wins = sum(run_random_walk(sc, replace(FAST, seed=s)).success for s in range(100))
    assert wins >= 90


def test_frontier_corridor_leg_sum():
    res = run_greedy_frontier(CORRIDOR, FAST)
    # legs: 6 Forward east until the far wall is seen (x 15 -> 21), 2 turns to
    # face west, 10 Forward until the object at x=1 enters the 10-cell range
    # (x 21 -> 11), then 7 Forward of approach to within 1 m (x 11 -> 4)
    acts = [s["action"] for s in res.log["steps"]]
    assert acts[:6] == ["FORWARD"] * 6
    assert set(acts[6:8]) <= {"TURN_LEFT", "TURN_RIGHT"}
    assert res.success
    assert res.steps_taken == 6 + 2 + 10 + 7


def test_frontier_budget_when_nothing_left():
    rows = ["#########", "#....#.##", "#....####", "#########"]
    sc = scene_from(rows, (1, 1, 0), (6, 1))
    res = run_greedy_frontier(sc, replace(FAST, max_episode_steps=30))
    assert res.termination_reason is Termination.BUDGET and not res.success


@pytest.mark.parametrize("runner", [run_episode, run_random_walk, run_greedy_frontier])
def test_episode_invariants(runner):
    sc = parse_scene(
        "10 6 0.3\nstart 1 1 0\nobject 8 4\n"
        "##########\n#....#...#\n#....#...#\n#........#\n#....#...#\n##########\n"
    )
    cfg = replace(FAST, max_episode_steps=40)
    res = runner(sc, cfg)
    assert res.steps_taken == len(res.path) - 1 <= cfg.max_episode_steps
    assert all(sc.free(p.x, p.y) for p in res.path)
    if res.success:
        assert is_success_pose(sc, res.final_pose, cfg)


def test_log_schema():
    sc = open_room(12, 5, (1, 2, 0), (8, 2))
    log = json.loads(log_to_json(run_episode(sc, FAST)))
    assert log["schema_version"] == 1
    assert set(log) == {"schema_version", "header", "steps", "footer"}
    assert log["header"]["agent"] == "pomp++"
    assert EpisodeConfig.from_dict(log["header"]["config"]) == FAST
    for rec in log["steps"]:
        assert {"step", "pose", "action", "real_observation", "candidate_count"} <= set(rec)
    assert log["footer"]["success"] is True


def test_planning_steps_log_belief_and_counters():
    res = run_episode(CORRIDOR, replace(FAST, max_episode_steps=5))
    explore = [s for s in res.log["steps"] if s["phase"] == "explore"]
    assert explore
    for rec in explore:
        assert {"belief_histogram", "plan_wall_time", "sim_count"} <= set(rec)
        assert rec["sim_count"] == 200
        assert sum(rec["belief_histogram"].values()) == FAST.num_particles


def test_optimal_path_length_open_room():
    sc = open_room(12, 5, (1, 2, 0), (8, 2))
    assert optimal_path_length(sc, FAST) == 4


@pytest.mark.parametrize(
    "kw", [{"max_episode_steps": 0}, {"success_distance": 0}, {"new_fraction": 2}, {"num_particles": 0}]
)
def test_config_validation(kw):
    with pytest.raises(ValueError):
        EpisodeConfig(**kw)


def test_config_rejects_unknown_keys():
    with pytest.raises(ValueError):
        EpisodeConfig.from_dict({"bogus": 1})
