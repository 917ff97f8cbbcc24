import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from popr.core import (
    ActionSpace,
    ConstantPolicy,
    ExpertDataset,
    FunctionPolicy,
    Step,
    Trajectory,
    replay_actions,
    seed_sequence,
)
from popr.errors import ActionSpaceError, DimensionMismatchError, ValidationError


def test_action_space_validation():
    with pytest.raises(ValidationError):
        ActionSpace.discrete(1)
    with pytest.raises(ValidationError):
        ActionSpace.continuous(0)
    with pytest.raises(ValidationError):
        ActionSpace("box", 2)
    space = ActionSpace.discrete(3)
    assert ActionSpace.from_dict(space.to_dict()) == space


def test_discrete_actions_out_of_range():
    with pytest.raises(ActionSpaceError, match="step 2"):
        ActionSpace.discrete(2).validate_actions(np.array([0, 1, 2]))


def test_continuous_actions_shape():
    space = ActionSpace.continuous(1)
    assert space.validate_actions(np.array([0.5, 1.0])).shape == (2, 1)
    with pytest.raises(ActionSpaceError):
        ActionSpace.continuous(2).validate_actions(np.zeros((3, 3)))


def test_trajectory_from_steps_and_back():
    steps = [Step(np.array([float(i)]), i % 2, float(i), np.array([float(i + 1)])) for i in range(4)]
    traj = Trajectory.from_steps(steps)
    assert len(traj) == 4
    assert traj.total_reward() == 6.0
    back = traj.steps
    assert [s.action for s in back] == [0, 1, 0, 1]
    assert Trajectory.from_steps(back) == traj


def test_trajectory_arrays_are_read_only():
    traj = Trajectory(np.zeros((3, 1)), np.zeros(3, dtype=int))
    with pytest.raises(ValueError):
        traj.states[0, 0] = 1.0


def test_trajectory_shape_errors():
    with pytest.raises(DimensionMismatchError):
        Trajectory(np.zeros((3, 1)), np.zeros(2, dtype=int))
    with pytest.raises(DimensionMismatchError):
        Trajectory(np.zeros((3, 1)), np.zeros(3, dtype=int), rewards=np.zeros(4))


def test_dataset_rejects_mixed_state_dims():
    a = Trajectory(np.zeros((2, 1)), [0, 1])
    b = Trajectory(np.zeros((2, 2)), [0, 1])
    with pytest.raises(DimensionMismatchError):
        ExpertDataset([a, b], ActionSpace.discrete(2))
    with pytest.raises(ValidationError):
        ExpertDataset([], ActionSpace.discrete(2))


def test_dataset_reports_bad_action_with_trajectory_index():
    good = Trajectory(np.zeros((2, 1)), [0, 1])
    bad = Trajectory(np.zeros((2, 1)), [0, 5])
    with pytest.raises(ActionSpaceError, match="trajectory 1"):
        ExpertDataset([good, bad], ActionSpace.discrete(2))


def test_constant_policy_replay():
    traj = Trajectory(np.zeros((3, 1)), [1, 1, 0])
    pol = ConstantPolicy(0, ActionSpace.discrete(2))
    assert replay_actions(pol, traj).tolist() == [0, 0, 0]
    assert pol.act_dist(np.zeros(1)).tolist() == [1.0, 0.0]


def test_policy_state_dim_checked():
    traj = Trajectory(np.zeros((3, 2)), [1, 1, 0])
    pol = ConstantPolicy(0, ActionSpace.discrete(2), state_dim=3)
    with pytest.raises(DimensionMismatchError):
        replay_actions(pol, traj)


def test_function_policy_batch():
    pol = FunctionPolicy(lambda s: int(s[0] > 0), ActionSpace.discrete(2), "sign")
    states = np.array([[-1.0], [2.0], [0.5]])
    assert pol.act_batch(states).tolist() == [0, 1, 1]


def test_seed_sequence_keys():
    a = np.random.default_rng(seed_sequence(1, "chain", "p")).random()
    b = np.random.default_rng(seed_sequence(1, "chain", "p")).random()
    c = np.random.default_rng(seed_sequence(1, "chain", "q")).random()
    assert a == b != c


@given(st.lists(st.integers(0, 3), min_size=1, max_size=30))
def test_discrete_validation_roundtrip(actions):
    out = ActionSpace.discrete(4).validate_actions(np.array(actions))
    assert out.dtype == np.int64 and out.tolist() == actions
