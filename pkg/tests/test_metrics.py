import numpy as np
import pytest

import oracles
from pompp.agent import EpisodeConfig, EpisodeResult, Termination, optimal_path_length
from pompp.metrics import (
    compute_apl,
    compute_asppl,
    compute_dts,
    compute_spl,
    compute_sr,
    distance_to_object,
    summarize,
)
from pompp.motion import Pose
from pompp.simulator import Scene, SceneParams, generate_scene


def ep(success, steps, shortest=None, final=Pose(0, 0, 0)):
    reason = Termination.REACHED if success else Termination.BUDGET
    return EpisodeResult(success, steps, [final], shortest, 0.01, reason)


def corridor(length=40, res=0.25):
    # one straight row: object at x=length-2, so geodesic and Euclidean agree
    occ = np.ones((3, length), bool)
    occ[1, 1:-1] = False
    return Scene(length, 3, occ, 1 * length + length - 2, Pose(1, 1, 0), res)


def test_sr_examples():
    assert compute_sr([ep(1, 3), ep(0, 9), ep(1, 3), ep(0, 9)]) == 0.5
    assert compute_sr([ep(1, 1)] * 3) == 1.0
    assert compute_sr([ep(0, 1)] * 3) == 0.0


def test_sr_empty_raises():
    with pytest.raises(ValueError):
        compute_sr([])
    with pytest.raises(ValueError):
        compute_spl([])


def test_apl_examples():
    assert compute_apl([ep(1, 10), ep(1, 20), ep(0, 125)]) == 15
    assert compute_apl([ep(1, 7)]) == 7
    assert compute_apl([ep(0, 7)]) is None


def test_asppl_examples():
    assert compute_asppl([ep(1, 16, 8)]) == (0.5, 0.0)
    assert compute_asppl([ep(1, 9, 9)]) == (1.0, 0.0)
    assert compute_asppl([ep(1, 4, 4), ep(1, 8, 4)]) == (0.75, 0.25)
    assert compute_asppl([ep(0, 4, 4)]) is None


def test_spl_examples():
    assert compute_spl([ep(1, 8, 4), ep(0, 125, 4)]) == 0.25
    assert compute_spl([ep(1, 5, 5), ep(1, 2, 2)]) == 1.0
    # a lucky path shorter than the recorded optimum is capped at 1
    assert compute_spl([ep(1, 3, 5)]) == 1.0


def test_dts_examples():
    sc = corridor()
    # object at x=38, 0.25 m cells: finishing at x=18 is 20 cells = 5.0 m away
    far = ep(0, 125, final=Pose(18, 1, 0))
    assert compute_dts([far], [sc], 1.0) == pytest.approx(4.0)
    near = ep(0, 125, final=Pose(35, 1, 0))
    assert compute_dts([near], [sc], 1.0) == 0.0
    assert compute_dts([ep(1, 4, final=Pose(1, 1, 0))], [sc], 1.0) == 0.0
    assert compute_dts([far, near], [sc, sc], 1.0) == pytest.approx(2.0)


def test_dts_geodesic_versus_euclidean():
    # U-shaped room: the wall forces a detour
    rows = ["#####", "#...#", "#.#.#", "#.#.#", "#####"]
    occ = np.array([[c == "#" for c in r] for r in rows])
    sc = Scene(5, 5, occ, 3 * 5 + 3, Pose(1, 3, 0), 1.0)
    assert distance_to_object(sc, 1, 3) == 6.0
    assert distance_to_object(sc, 1, 3, geodesic=False) == 2.0
    res = [ep(0, 10, final=Pose(1, 3, 0))]
    assert compute_dts(res, [sc], 1.0) == 5.0
    assert compute_dts(res, [sc], 1.0, geodesic=False) == 1.0


def test_dts_requires_matching_scenes():
    with pytest.raises(ValueError):
        compute_dts([ep(0, 1)], [], 1.0)


def test_summarize_fields():
    sc = corridor()
    res = [ep(1, 8, 4), ep(0, 125, 4, Pose(18, 1, 0))]
    m = summarize(res, [sc, sc], 1.0)
    assert (m.n, m.sr, m.apl, m.spl) == (2, 0.5, 8.0, 0.25)
    assert (m.asppl_mean, m.asppl_std) == (0.5, 0.0)
    assert m.dts_mean == pytest.approx(2.0)
    assert m.runtime_per_step_mean == pytest.approx(0.01)


@pytest.mark.parametrize("seed", range(6))
def test_shortest_path_matches_oracle(seed):
    params = SceneParams(24, 24, num_rooms=3, min_room=5, max_room=9, min_object_distance=6, seed=seed)
    sc = generate_scene(params)
    cfg = EpisodeConfig()
    want = oracles.shortest_success_steps(
        sc.occupancy, sc.start_pose, sc.object_xy, sc.resolution, cfg.success_distance,
        cfg.frustum.fov_degrees, cfg.frustum.range_cells,
    )
    assert want is not None
    assert optimal_path_length(sc, cfg) == want
