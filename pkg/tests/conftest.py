import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

from popr.core import ActionSpace, ExpertDataset, Trajectory  # noqa: E402
from popr.toyenv import ToyEnvConfig, expert_policy, generate_dataset  # noqa: E402

settings.register_profile("popr", deadline=None, max_examples=200)
settings.load_profile("popr")


@pytest.fixture(scope="session")
def toy_data():
    return generate_dataset(ToyEnvConfig(seed=11), expert_policy(10), episodes=20)


@pytest.fixture(scope="session")
def small_toy_data():
    return generate_dataset(ToyEnvConfig(episode_length=30, seed=5), expert_policy(10), episodes=4)


@pytest.fixture
def continuous_data():
    rng = np.random.default_rng(3)
    trajs = []
    for _ in range(3):
        states = rng.normal(size=(12, 2))
        trajs.append(Trajectory(states, np.tanh(states), rewards=np.ones(12)))
    return ExpertDataset(trajs, ActionSpace.continuous(2))
