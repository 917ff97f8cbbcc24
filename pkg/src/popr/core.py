"""Trajectories, datasets, action spaces and the policy abstraction."""

from __future__ import annotations

import abc
import zlib
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Sequence, Union

import numpy as np

from .errors import ActionSpaceError, DimensionMismatchError, ValidationError

Action = Union[int, np.ndarray]

DISCRETE = "discrete"
CONTINUOUS = "continuous"


@dataclass(frozen=True)
class ActionSpace:
    """Either ``Discrete(n)`` (``n >= 2`` actions) or ``Continuous(n)`` (``n >= 1`` dims)."""

    kind: str
    n: int

    def __post_init__(self):
        if self.kind not in (DISCRETE, CONTINUOUS):
            raise ValidationError(f"unknown action space kind {self.kind!r}")
        if self.kind == DISCRETE and self.n < 2:
            raise ValidationError(f"discrete action space needs at least 2 actions, got {self.n}")
        if self.kind == CONTINUOUS and self.n < 1:
            raise ValidationError(f"continuous action space needs dimension >= 1, got {self.n}")

    @classmethod
    def discrete(cls, n: int) -> "ActionSpace":
        return cls(DISCRETE, int(n))

    @classmethod
    def continuous(cls, dim: int) -> "ActionSpace":
        return cls(CONTINUOUS, int(dim))

    @property
    def is_discrete(self) -> bool:
        return self.kind == DISCRETE

    def validate_actions(self, actions: np.ndarray) -> np.ndarray:
        """Check and normalise a batch of actions (shape ``(L,)`` or ``(L, n)``)."""
        if self.is_discrete:
            arr = np.asarray(actions)
            if arr.ndim != 1:
                raise ActionSpaceError(f"discrete actions must be a 1-d index array, got shape {arr.shape}")
            if arr.size and not np.issubdtype(arr.dtype, np.integer):
                if not np.all(np.equal(np.mod(arr, 1), 0)):
                    raise ActionSpaceError("discrete actions must be integer indices")
            arr = arr.astype(np.int64)
            bad = np.flatnonzero((arr < 0) | (arr >= self.n))
            if bad.size:
                raise ActionSpaceError(
                    f"action index {arr[bad[0]]} at step {bad[0]} outside [0, {self.n})"
                )
            return arr
        arr = np.asarray(actions, dtype=float)
        if arr.ndim == 1 and self.n == 1:
            arr = arr[:, None]
        if arr.ndim != 2 or arr.shape[1] != self.n:
            raise ActionSpaceError(f"continuous actions must have shape (L, {self.n}), got {arr.shape}")
        return arr

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n": self.n}

    @classmethod
    def from_dict(cls, d: dict) -> "ActionSpace":
        return cls(str(d["kind"]), int(d["n"]))


@dataclass(frozen=True)
class Step:
    state: np.ndarray
    action: Action
    reward: float | None
    next_state: np.ndarray


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


class Trajectory:
    """An ordered sequence of steps stored column-wise.

    ``states`` and ``next_states`` have shape ``(L, d)``; ``actions`` is ``(L,)``
    of int64 for discrete spaces or ``(L, k)`` floats for continuous ones;
    ``rewards`` is ``(L,)`` or ``None`` when the data carries no rewards.
    All arrays are read-only.
    """

    __slots__ = ("states", "actions", "rewards", "next_states", "meta")

    def __init__(self, states, actions, next_states=None, rewards=None, meta: dict | None = None):
        states = np.asarray(states, dtype=float)
        if states.ndim == 1:
            states = states[:, None]
        if states.ndim != 2 or states.shape[0] < 1:
            raise ValidationError(f"trajectory needs at least one step with vector states, got shape {states.shape}")
        if next_states is None:
            next_states = np.vstack([states[1:], states[-1:]])
        next_states = np.asarray(next_states, dtype=float)
        if next_states.ndim == 1:
            next_states = next_states[:, None]
        if next_states.shape != states.shape:
            raise DimensionMismatchError(
                f"next_states shape {next_states.shape} does not match states shape {states.shape}"
            )
        actions = np.asarray(actions)
        if actions.shape[0] != states.shape[0]:
            raise DimensionMismatchError(f"{actions.shape[0]} actions for {states.shape[0]} states")
        if rewards is not None:
            rewards = np.asarray(rewards, dtype=float)
            if rewards.shape != (states.shape[0],):
                raise DimensionMismatchError(f"rewards shape {rewards.shape} for {states.shape[0]} steps")
            rewards = _frozen(rewards)
        self.states = _frozen(states)
        self.actions = _frozen(actions)
        self.next_states = _frozen(next_states)
        self.rewards = rewards
        self.meta = dict(meta or {})

    @classmethod
    def from_steps(cls, steps: Sequence[Step], meta: dict | None = None) -> "Trajectory":
        if not steps:
            raise ValidationError("trajectory needs at least one step")
        rewards = [s.reward for s in steps]
        has = [r is not None for r in rewards]
        if any(has) and not all(has):
            raise ValidationError("rewards must be present on every step or on none")
        return cls(
            states=np.array([np.atleast_1d(s.state) for s in steps], dtype=float),
            actions=np.array([s.action for s in steps]),
            next_states=np.array([np.atleast_1d(s.next_state) for s in steps], dtype=float),
            rewards=np.array(rewards, dtype=float) if all(has) else None,
            meta=meta,
        )

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def state_dim(self) -> int:
        return self.states.shape[1]

    @property
    def has_rewards(self) -> bool:
        return self.rewards is not None

    @property
    def steps(self) -> list[Step]:
        acts = self.actions
        out = []
        for t in range(len(self)):
            a = int(acts[t]) if acts.ndim == 1 and np.issubdtype(acts.dtype, np.integer) else acts[t]
            r = None if self.rewards is None else float(self.rewards[t])
            out.append(Step(self.states[t], a, r, self.next_states[t]))
        return out

    def total_reward(self) -> float:
        if self.rewards is None:
            raise ValidationError("trajectory carries no rewards")
        return float(self.rewards.sum())

    def __eq__(self, other) -> bool:
        if not isinstance(other, Trajectory):
            return NotImplemented
        same_rewards = (self.rewards is None and other.rewards is None) or (
            self.rewards is not None and other.rewards is not None and np.array_equal(self.rewards, other.rewards)
        )
        return (
            same_rewards
            and np.array_equal(self.states, other.states)
            and np.array_equal(self.actions, other.actions)
            and np.array_equal(self.next_states, other.next_states)
            and self.meta == other.meta
        )

    def __repr__(self) -> str:
        return f"Trajectory(L={len(self)}, state_dim={self.state_dim}, rewards={self.has_rewards})"


class ExpertDataset:
    """The evidence: a non-empty list of trajectories over one action space."""

    def __init__(self, trajectories: Iterable[Trajectory], action_space: ActionSpace, meta: dict | None = None):
        trajs = tuple(trajectories)
        if not trajs:
            raise ValidationError("dataset needs at least one trajectory")
        dim = trajs[0].state_dim
        checked = []
        for i, tr in enumerate(trajs):
            if tr.state_dim != dim:
                raise DimensionMismatchError(f"trajectory {i} has state dim {tr.state_dim}, expected {dim}")
            try:
                acts = action_space.validate_actions(tr.actions)
            except ActionSpaceError as exc:
                raise ActionSpaceError(f"trajectory {i}: {exc}") from None
            if acts.dtype != tr.actions.dtype or acts.shape != tr.actions.shape:
                tr = Trajectory(tr.states, acts, tr.next_states, tr.rewards, tr.meta)
            checked.append(tr)
        self.trajectories = tuple(checked)
        self.action_space = action_space
        self.meta = dict(meta or {})

    def __len__(self) -> int:
        return len(self.trajectories)

    def __iter__(self) -> Iterator[Trajectory]:
        return iter(self.trajectories)

    def __getitem__(self, i):
        return self.trajectories[i]

    @property
    def state_dim(self) -> int:
        return self.trajectories[0].state_dim

    @property
    def has_rewards(self) -> bool:
        return all(t.has_rewards for t in self.trajectories)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ExpertDataset):
            return NotImplemented
        return (
            self.action_space == other.action_space
            and self.trajectories == other.trajectories
            and self.meta == other.meta
        )

    def __repr__(self) -> str:
        lengths = [len(t) for t in self.trajectories]
        return f"ExpertDataset(N={len(self)}, lengths={min(lengths)}..{max(lengths)}, action_space={self.action_space})"


class Policy(abc.ABC):
    """A candidate (or expert) policy mapping state vectors to actions.

    Subclasses implement :meth:`act`. Stochastic policies draw from the ``rng``
    they are given; when called without one they fall back to a generator
    seeded from their own ``seed`` so that repeated calls are reproducible.
    """

    policy_id: str
    action_space: ActionSpace
    state_dim: int | None = None
    seed: int = 0

    @abc.abstractmethod
    def act(self, state: np.ndarray, rng: np.random.Generator | None = None) -> Action:
        ...

    def act_dist(self, state: np.ndarray) -> np.ndarray | None:
        """Action probabilities (discrete spaces only); ``None`` if unavailable."""
        return None

    def act_batch(self, states: np.ndarray, rng: np.random.Generator | None = None) -> np.ndarray:
        if rng is None:
            rng = np.random.default_rng(self.seed)
        acts = [self.act(s, rng) for s in states]
        return self.action_space.validate_actions(np.asarray(acts))

    def check_state_dim(self, dim: int) -> None:
        if self.state_dim is not None and self.state_dim != dim:
            raise DimensionMismatchError(
                f"policy {self.policy_id!r} expects {self.state_dim}-d states, trajectory has {dim}-d states"
            )

    def clone(self) -> "Policy":
        """A copy safe to use from another worker. Stateless policies return ``self``."""
        return self

    def close(self) -> None:
        pass

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.policy_id!r})"


class ConstantPolicy(Policy):
    def __init__(self, action, action_space: ActionSpace, policy_id: str | None = None, state_dim: int | None = None):
        if action_space.is_discrete:
            action = int(action)
            action_space.validate_actions(np.array([action]))
        else:
            action = np.asarray(action, dtype=float).reshape(action_space.n)
        self.action = action
        self.action_space = action_space
        self.policy_id = policy_id or f"constant:{action}"
        self.state_dim = state_dim

    def act(self, state, rng=None):
        return self.action

    def act_batch(self, states, rng=None):
        n = len(states)
        if self.action_space.is_discrete:
            return np.full(n, self.action, dtype=np.int64)
        return np.tile(self.action, (n, 1))

    def act_dist(self, state):
        if not self.action_space.is_discrete:
            return None
        p = np.zeros(self.action_space.n)
        p[self.action] = 1.0
        return p


class FunctionPolicy(Policy):
    """Wraps a plain deterministic callable ``state -> action``."""

    def __init__(self, fn: Callable[[np.ndarray], Action], action_space: ActionSpace, policy_id: str,
                 state_dim: int | None = None):
        self.fn = fn
        self.action_space = action_space
        self.policy_id = policy_id
        self.state_dim = state_dim

    def act(self, state, rng=None):
        return self.fn(np.asarray(state))


def replay_actions(policy: Policy, trajectory: Trajectory, rng: np.random.Generator | None = None) -> np.ndarray:
    """Query ``policy`` on every logged state of ``trajectory``, in order.

    Returns one candidate action per step (int64 array for discrete spaces,
    ``(L, k)`` floats for continuous ones). Without ``rng`` the policy's own
    seed is used, so repeated calls return identical actions.
    """
    policy.check_state_dim(trajectory.state_dim)
    actions = policy.act_batch(trajectory.states, rng)
    if len(actions) != len(trajectory):
        raise DimensionMismatchError(
            f"policy {policy.policy_id!r} returned {len(actions)} actions for {len(trajectory)} states"
        )
    return actions


def seed_sequence(seed: int, *keys) -> np.random.SeedSequence:
    """A child seed sequence keyed by ``keys`` (ints or strings), independent of call order."""
    spawn_key = tuple(k if isinstance(k, int) else zlib.crc32(str(k).encode("utf-8")) for k in keys)
    return np.random.SeedSequence(int(seed), spawn_key=spawn_key)
