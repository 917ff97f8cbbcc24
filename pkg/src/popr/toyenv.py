"""Ring toy environment with a scripted expert and epsilon-degraded experts.

``n_states`` states sit on a ring. Action 0 (``FORWARD``) moves to ``s + 1``,
action 1 (``BACKWARD``) to ``s - 1`` (mod n). With probability ``slip_prob``
the agent instead lands on one of the other ``n - 1`` states uniformly. The
reward of a step is the index of the state it lands in. Episodes start in
state 0 and last ``episode_length`` steps. Policies observe the 1-d state
vector ``[s]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .core import ActionSpace, ConstantPolicy, ExpertDataset, Policy, Trajectory
from .errors import ValidationError

FORWARD = kernels.FORWARD
BACKWARD = kernels.BACKWARD
ACTION_SPACE = ActionSpace.discrete(2)


@dataclass(frozen=True)
class ToyEnvConfig:
    n_states: int = 10
    slip_prob: float = 0.1
    episode_length: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.n_states < 3:
            raise ValidationError(f"n_states must be >= 3, got {self.n_states}")
        if not 0.0 <= self.slip_prob <= 1.0:
            raise ValidationError(f"slip_prob must lie in [0, 1], got {self.slip_prob}")
        if self.episode_length < 1:
            raise ValidationError(f"episode_length must be positive, got {self.episode_length}")


@dataclass(frozen=True)
class MixturePolicySpec:
    epsilon: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValidationError(f"epsilon must lie in [0, 1], got {self.epsilon}")


def toy_step(config: ToyEnvConfig, state: int, action: int, rng: np.random.Generator) -> tuple[int, float]:
    n = config.n_states
    if not 0 <= state < n:
        raise ValidationError(f"state {state} outside [0, {n})")
    if action not in (FORWARD, BACKWARD):
        raise ValidationError(f"action must be FORWARD (0) or BACKWARD (1), got {action}")
    if rng.random() < config.slip_prob:
        other = int(rng.integers(n - 1))
        nxt = other if other < state else other + 1
    elif action == FORWARD:
        nxt = (state + 1) % n
    else:
        nxt = (state - 1) % n
    return nxt, float(nxt)


def _state_index(state, n_states: int) -> int:
    s = int(round(float(np.asarray(state).reshape(-1)[0])))
    if not 0 <= s < n_states:
        raise ValidationError(f"state {s} outside [0, {n_states})")
    return s


class MixturePolicy(Policy):
    """Acts like the expert with probability ``1 - epsilon``, uniformly at random otherwise."""

    def __init__(self, spec: MixturePolicySpec, n_states: int, policy_id: str | None = None):
        if n_states < 3:
            raise ValidationError(f"n_states must be >= 3, got {n_states}")
        self.spec = spec
        self.epsilon = float(spec.epsilon)
        self.seed = int(spec.seed)
        self.n_states = int(n_states)
        self.action_space = ACTION_SPACE
        self.state_dim = 1
        self.policy_id = policy_id or f"mixture:{self.epsilon:g}"

    def _expert_action(self, s: int) -> int:
        return BACKWARD if s == self.n_states - 1 else FORWARD

    def act(self, state, rng=None):
        if rng is None:
            rng = np.random.default_rng(self.seed)
        s = _state_index(state, self.n_states)
        u_eps, u_coin = rng.random(2)
        if u_eps < self.epsilon:
            return min(int(u_coin * 2.0), 1)
        return self._expert_action(s)

    def act_batch(self, states, rng=None):
        if rng is None:
            rng = np.random.default_rng(self.seed)
        idx = np.rint(np.asarray(states, dtype=float).reshape(len(states), -1)[:, 0]).astype(np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= self.n_states):
            raise ValidationError(f"state outside [0, {self.n_states})")
        if self.epsilon == 0.0:
            return np.where(idx == self.n_states - 1, BACKWARD, FORWARD).astype(np.int64)
        u_eps = rng.random(idx.size)
        u_coin = rng.random(idx.size)
        return kernels.mixture_actions(idx, self.n_states, self.epsilon, u_eps, u_coin)

    def act_dist(self, state):
        s = _state_index(state, self.n_states)
        p = np.full(2, self.epsilon / 2.0)
        p[self._expert_action(s)] += 1.0 - self.epsilon
        return p


def expert_policy(n_states: int, policy_id: str = "expert") -> MixturePolicy:
    """Deterministic expert: BACKWARD in the top state, FORWARD everywhere else."""
    return MixturePolicy(MixturePolicySpec(0.0), n_states, policy_id=policy_id)


def mixture_policy(spec: MixturePolicySpec, n_states: int, policy_id: str | None = None) -> MixturePolicy:
    return MixturePolicy(spec, n_states, policy_id=policy_id)


def _episode_rng(config: ToyEnvConfig, episode: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(episode,)))


def _kernel_params(policy: Policy, n_states: int) -> tuple[float, int] | None:
    """(epsilon, constant action) when the ring kernel can roll ``policy`` out directly."""
    if isinstance(policy, MixturePolicy) and policy.n_states == n_states:
        return policy.epsilon, -1
    if isinstance(policy, ConstantPolicy) and policy.action_space == ACTION_SPACE:
        return 0.0, int(policy.action)
    return None


def _rollout(config: ToyEnvConfig, policy: Policy, rng: np.random.Generator):
    n, length = config.n_states, config.episode_length
    params = _kernel_params(policy, n)
    if params is not None:
        u = rng.random((4, length))
        return kernels.ring_rollout(n, 0, config.slip_prob, params[0], params[1], u[0], u[1], u[2], u[3])
    # generic policies: environment and policy randomness come from separate streams
    env_rng, pol_rng = rng.spawn(2)
    states = np.empty(length, dtype=np.int64)
    actions = np.empty(length, dtype=np.int64)
    nexts = np.empty(length, dtype=np.int64)
    s = 0
    for t in range(length):
        a = int(policy.act(np.array([float(s)]), pol_rng))
        nxt, _ = toy_step(config, s, a, env_rng)
        states[t], actions[t], nexts[t] = s, a, nxt
        s = nxt
    return states, actions, nexts


def generate_dataset(config: ToyEnvConfig, policy: Policy, episodes: int = 20) -> ExpertDataset:
    """Roll ``policy`` out for ``episodes`` episodes; rewards are recorded.

    Episode ``i`` uses a random stream derived from ``(config.seed, i)`` so the
    result does not depend on generation order.
    """
    if episodes < 1:
        raise ValidationError(f"episodes must be >= 1, got {episodes}")
    trajs = []
    for ep in range(episodes):
        states, actions, nexts = _rollout(config, policy, _episode_rng(config, ep))
        trajs.append(
            Trajectory(
                states=states.astype(float)[:, None],
                actions=actions,
                next_states=nexts.astype(float)[:, None],
                rewards=nexts.astype(float),
            )
        )
    meta = {"env": "toy-ring", "n_states": config.n_states, "slip_prob": config.slip_prob,
            "episode_length": config.episode_length, "seed": config.seed, "policy": policy.policy_id}
    return ExpertDataset(trajs, ACTION_SPACE, meta)


def episode_returns(config: ToyEnvConfig, policy: Policy, episodes: int = 1000) -> np.ndarray:
    """Undiscounted return of each of ``episodes`` seeded rollouts."""
    out = np.empty(episodes)
    for ep in range(episodes):
        _, _, nexts = _rollout(config, policy, _episode_rng(config, ep))
        out[ep] = nexts.sum()
    return out


def ground_truth_ordering(config: ToyEnvConfig, policies: Sequence[Policy], episodes: int = 1000) -> list[str]:
    """Policy ids sorted best-first by mean return over seeded rollouts (ties by id)."""
    means = {p.policy_id: float(episode_returns(config, p, episodes).mean()) for p in policies}
    return sorted(means, key=lambda pid: (-means[pid], pid))

