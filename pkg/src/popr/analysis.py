"""Post-processing of posterior samples: rankings, tail analysis, pairwise probabilities."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .core import ExpertDataset, Policy, replay_actions, seed_sequence
from .errors import ValidationError
from .sampler import PosteriorSamples

MEAN = "mean"
WORST = "worst"
BEST = "best"


@dataclass
class RankingReport:
    """Best-first ordering with the score of each policy.

    ``spread`` holds the posterior standard deviation of each policy when the
    scores come from posterior samples; point-estimate baselines leave it empty.
    """

    ordering: list[str]
    scores: dict[str, float]
    mode: str = MEAN
    fraction: float = 1.0
    spread: dict[str, float] = field(default_factory=dict)
    tail_sizes: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "ordering": list(self.ordering),
            "scores": {k: float(v) for k, v in self.scores.items()},
            "mode": self.mode,
            "fraction": self.fraction,
            "spread": {k: float(v) for k, v in self.spread.items()},
            "tail_sizes": {k: int(v) for k, v in self.tail_sizes.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RankingReport":
        return cls(
            ordering=list(d["ordering"]),
            scores={k: float(v) for k, v in d["scores"].items()},
            mode=d.get("mode", MEAN),
            fraction=float(d.get("fraction", 1.0)),
            spread={k: float(v) for k, v in d.get("spread", {}).items()},
            tail_sizes={k: int(v) for k, v in d.get("tail_sizes", {}).items()},
        )


@dataclass
class PairwiseMatrix:
    """``probabilities[k, l]`` estimates p(theta_k > theta_l | data)."""

    policy_ids: list[str]
    probabilities: np.ndarray

    def __getitem__(self, pair: tuple[str, str]) -> float:
        k, l = pair
        return float(self.probabilities[self.policy_ids.index(k), self.policy_ids.index(l)])

    def to_dict(self) -> dict:
        return {"policy_ids": list(self.policy_ids), "probabilities": self.probabilities.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "PairwiseMatrix":
        return cls(list(d["policy_ids"]), np.asarray(d["probabilities"], dtype=float))


def order_by_score(scores: dict[str, float]) -> list[str]:
    """Descending score, ties broken by policy id."""
    return sorted(scores, key=lambda pid: (-scores[pid], pid))


def _check(samples: Sequence[PosteriorSamples]) -> None:
    if not samples:
        raise ValidationError("no posterior samples given")
    ids = [s.policy_id for s in samples]
    if len(set(ids)) != len(ids):
        raise ValidationError(f"duplicate policy ids: {ids}")
    for s in samples:
        if len(s) == 0:
            raise ValidationError(f"policy {s.policy_id!r} has no posterior samples")


def _spread(samples: Sequence[PosteriorSamples]) -> dict[str, float]:
    return {s.policy_id: s.std for s in samples}


def rank_mean(samples: Sequence[PosteriorSamples]) -> RankingReport:
    _check(samples)
    scores = {s.policy_id: float(np.mean(s.samples)) for s in samples}
    return RankingReport(order_by_score(scores), scores, MEAN, 1.0, _spread(samples),
                         {s.policy_id: len(s) for s in samples})


def tail_size(n: int, fraction: float) -> int:
    return int(math.ceil(fraction * n - 1e-12))


def rank_tail(samples: Sequence[PosteriorSamples], mode: str = WORST, fraction: float = 0.05) -> RankingReport:
    """Rank on the mean of the lowest (``worst``) or highest (``best``) ``ceil(fraction |S|)`` samples."""
    if mode not in (WORST, BEST):
        raise ValidationError(f"tail mode must be 'worst' or 'best', got {mode!r}")
    if not 0.0 < fraction <= 1.0:
        raise ValidationError(f"tail fraction must lie in (0, 1], got {fraction}")
    _check(samples)
    scores, sizes = {}, {}
    for s in samples:
        k = tail_size(len(s), fraction)
        if k < 1:
            raise ValidationError(f"fraction {fraction} leaves an empty tail for {s.policy_id!r}")
        ordered = np.sort(s.samples)
        tail = ordered[:k] if mode == WORST else ordered[-k:]
        scores[s.policy_id] = float(tail.mean())
        sizes[s.policy_id] = k
    return RankingReport(order_by_score(scores), scores, mode, fraction, _spread(samples), sizes)


def pairwise(samples: Sequence[PosteriorSamples], paired: bool = True) -> PairwiseMatrix:
    """Probability that each policy's theta exceeds each other's.

    ``paired=True`` compares draws index by index (requires equal lengths);
    ``paired=False`` averages the indicator over all cross pairs.
    """
    _check(samples)
    ids = [s.policy_id for s in samples]
    if paired:
        lengths = {len(s) for s in samples}
        if len(lengths) != 1:
            raise ValidationError(f"paired comparison needs equal-length samples, got lengths {sorted(lengths)}")
        mat = np.ascontiguousarray(np.vstack([s.samples for s in samples]))
        return PairwiseMatrix(ids, np.asarray(kernels.pairwise_greater(mat)))
    k = len(samples)
    probs = np.zeros((k, k))
    for a in range(k):
        for b in range(k):
            if a != b:
                probs[a, b] = float((samples[a].samples[:, None] > samples[b].samples[None, :]).mean())
    return PairwiseMatrix(ids, probs)


def _trajectory_key(traj) -> str:
    h = hashlib.sha1(np.ascontiguousarray(traj.states).tobytes())
    h.update(np.ascontiguousarray(traj.actions).tobytes())
    return h.hexdigest()


def agree_rank(dataset: ExpertDataset, policies: Sequence[Policy]) -> RankingReport:
    """Non-probabilistic baseline: raw agreement with the logged actions.

    Discrete spaces score the fraction of matching actions; continuous spaces
    score the negative mean Euclidean distance. Stochastic policies draw from a
    stream keyed by trajectory content, so the score does not depend on the
    order of trajectories in the dataset.
    """
    if not policies:
        raise ValidationError("agree_rank needs at least one policy")
    scores = {}
    for policy in policies:
        if policy.action_space != dataset.action_space:
            raise ValidationError(
                f"policy {policy.policy_id!r} acts in {policy.action_space}, dataset uses {dataset.action_space}"
            )
        total, count = 0.0, 0
        for traj in dataset:
            rng = np.random.default_rng(seed_sequence(policy.seed, "agree", policy.policy_id, _trajectory_key(traj)))
            cand = replay_actions(policy, traj, rng)
            if dataset.action_space.is_discrete:
                total += float(np.sum(cand == traj.actions))
            else:
                total -= float(np.linalg.norm(cand - traj.actions, axis=1).sum())
            count += len(traj)
        scores[policy.policy_id] = total / count
    return RankingReport(order_by_score(scores), scores, "agree", 1.0)


def multi_expert_aggregate(per_expert: Sequence[Sequence[PosteriorSamples]], top_r: int = 3) -> list[PosteriorSamples]:
    """Pool, for each policy, the samples of the ``top_r`` experts that rate it highest.

    ``per_expert[m][k]`` holds the samples of policy ``k`` under expert dataset
    ``m``. Experts are ranked per policy by posterior mean (ties by expert index).
    """
    n_experts = len(per_expert)
    if n_experts == 0:
        raise ValidationError("no expert results given")
    if not 1 <= top_r <= n_experts:
        raise ValidationError(f"top_r must lie in [1, {n_experts}], got {top_r}")
    n_policies = len(per_expert[0])
    for m, row in enumerate(per_expert):
        if len(row) != n_policies:
            raise ValidationError(f"expert {m} has {len(row)} policies, expected {n_policies}")
    lengths = {len(s) for row in per_expert for s in row}
    if len(lengths) != 1:
        raise ValidationError(f"all sample sets must share one length, got {sorted(lengths)}")
    out = []
    for k in range(n_policies):
        cells = [per_expert[m][k] for m in range(n_experts)]
        pid = cells[0].policy_id
        if any(c.policy_id != pid for c in cells):
            raise ValidationError(f"policy order differs between experts at position {k}")
        chosen = sorted(range(n_experts), key=lambda m: (-cells[m].mean, m))[:top_r]
        out.append(
            PosteriorSamples(
                policy_id=pid,
                samples=np.concatenate([cells[m].samples for m in chosen]),
                acceptance_rate=float(np.mean([cells[m].acceptance_rate for m in chosen])),
                config_fingerprint=cells[chosen[0]].config_fingerprint,
            )
        )
    return out


def reward_posterior(dataset: ExpertDataset, samples: PosteriorSamples) -> np.ndarray:
    """Posterior draws of the candidate's return: theta times the mean expert return."""
    if not dataset.has_rewards:
        raise ValidationError("expected reward needs rewards on every step")
    mean_return = float(np.mean([t.total_reward() for t in dataset]))
    return samples.samples * mean_return


def expected_reward(dataset: ExpertDataset, samples: PosteriorSamples) -> float:
    return float(reward_posterior(dataset, samples).mean())
