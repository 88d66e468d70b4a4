import pytest

from pompp.motion import Action, MotionModel, Pose, heading_step


@pytest.mark.parametrize("theta,step", [(0, (1, 0)), (1, (0, -1)), (2, (-1, 0)), (3, (0, 1))])
def test_four_heading_steps(theta, step):
    assert heading_step(theta, 4) == step


def test_action_order_is_tie_break_order():
    assert [a.name for a in Action] == ["FORWARD", "BACKWARD", "TURN_LEFT", "TURN_RIGHT", "STOP"]


def test_apply_turns_wrap():
    m = MotionModel()
    assert m.apply(Pose(0, 0, 3), Action.TURN_LEFT) == Pose(0, 0, 0)
    assert m.apply(Pose(0, 0, 0), Action.TURN_RIGHT) == Pose(0, 0, 3)


def test_apply_translations():
    m = MotionModel()
    assert m.apply(Pose(2, 2, 1), Action.FORWARD) == Pose(2, 1, 1)
    assert m.apply(Pose(2, 2, 1), Action.BACKWARD) == Pose(2, 3, 1)
    assert m.apply(Pose(2, 2, 1), Action.STOP) == Pose(2, 2, 1)


def test_backward_can_be_disabled():
    m = MotionModel(allow_backward=False)
    assert Action.BACKWARD not in m.actions
    assert m.move_actions == (Action.FORWARD, Action.TURN_LEFT, Action.TURN_RIGHT)
