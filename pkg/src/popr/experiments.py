"""End-to-end ranking runs on the ring environment, shared by the CLI sweeps and the acceptance suite."""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Sequence

import numpy as np

from . import analysis, metrics, sampler, toyenv
from .config import RunConfig
from .core import ConstantPolicy, ExpertDataset, Policy, seed_sequence
from .energy import DiscrepancyKind
from .errors import ValidationError


def derived_seed(base: int, *keys) -> int:
    return int(seed_sequence(base, *keys).generate_state(1)[0])


def epsilon_family(epsilons: Sequence[float], n_states: int, seed: int = 0, include_constant: bool = False,
                   constant_action: int = toyenv.FORWARD) -> list[Policy]:
    pols: list[Policy] = [
        toyenv.mixture_policy(toyenv.MixturePolicySpec(float(e), derived_seed(seed, "eps", i)), n_states,
                              policy_id=f"eps={float(e):.2f}")
        for i, e in enumerate(epsilons)
    ]
    if include_constant:
        pols.append(ConstantPolicy(constant_action, toyenv.ACTION_SPACE, policy_id=f"constant={constant_action}",
                                   state_dim=1))
    return pols


@lru_cache(maxsize=64)
def _truth_cached(n_states: int, slip: float, length: int, epsilons: tuple, include_constant: bool,
                  constant_action: int, episodes: int, seed: int) -> tuple[str, ...]:
    cfg = toyenv.ToyEnvConfig(n_states, slip, length, seed)
    pols = epsilon_family(epsilons, n_states, 0, include_constant, constant_action)
    return tuple(toyenv.ground_truth_ordering(cfg, pols, episodes))


def ground_truth(run: RunConfig) -> list[str]:
    """Best-first ordering of the candidate set by mean return over seeded rollouts."""
    t, e = run.toy, run.experiment
    return list(_truth_cached(t.n_states, t.slip_prob, t.episode_length, tuple(e.epsilons), e.include_constant,
                              e.constant_action, e.ground_truth_episodes, 10_000_019))


def candidates(run: RunConfig) -> list[Policy]:
    e = run.experiment
    return epsilon_family(e.epsilons, run.toy.n_states, run.sampler.seed, e.include_constant, e.constant_action)


def mix_datasets(expert: ExpertDataset, noise: ExpertDataset, fraction: float, seed: int = 0) -> ExpertDataset:
    """Keep ``round(fraction N)`` expert trajectories and fill up to ``N`` with noise trajectories.

    ``N`` is the size of the expert dataset. Trajectories are chosen without
    replacement by a seeded permutation; ``fraction=1`` returns the expert
    trajectories unchanged.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValidationError(f"fraction must lie in [0, 1], got {fraction}")
    if expert.action_space != noise.action_space:
        raise ValidationError("expert and noise datasets use different action spaces")
    total = len(expert)
    n_exp = int(round(fraction * total))
    n_noise = total - n_exp
    if n_noise > len(noise):
        raise ValidationError(f"need {n_noise} noise trajectories, only {len(noise)} available")
    rng = np.random.default_rng(seed_sequence(seed, "mix"))
    exp_idx = np.sort(rng.permutation(total)[:n_exp]) if n_exp < total else np.arange(total)
    noise_idx = np.sort(rng.permutation(len(noise))[:n_noise])
    trajs = [expert[int(i)] for i in exp_idx] + [noise[int(i)] for i in noise_idx]
    meta = dict(expert.meta)
    meta.update({"expert_fraction": fraction, "n_expert": n_exp, "n_noise": n_noise})
    return ExpertDataset(trajs, expert.action_space, meta)


@dataclass
class RankOutcome:
    report: analysis.RankingReport
    samples: list[sampler.PosteriorSamples]
    pairwise: analysis.PairwiseMatrix


def rank_policies(dataset: ExpertDataset, policies: Sequence[Policy], config: sampler.SamplerConfig,
                  mode: str = analysis.MEAN, tail: float = 0.05, workers: int | None = None) -> RankOutcome:
    samples = sampler.run_all(dataset, policies, config, workers=workers)
    if mode == analysis.MEAN:
        report = analysis.rank_mean(samples)
    else:
        report = analysis.rank_tail(samples, mode, tail)
    return RankOutcome(report, samples, analysis.pairwise(samples))


def toy_dataset(run: RunConfig, seed: int, episodes: int | None = None, fraction: float = 1.0) -> ExpertDataset:
    episodes = episodes or run.experiment.episodes
    cfg = replace(run.toy, seed=derived_seed(seed, "expert-data"))
    data = toyenv.generate_dataset(cfg, toyenv.expert_policy(run.toy.n_states), episodes)
    if fraction >= 1.0:
        return data
    noise_pol = toyenv.mixture_policy(toyenv.MixturePolicySpec(run.experiment.noise_epsilon, seed), run.toy.n_states,
                                      policy_id="noise")
    noise = toyenv.generate_dataset(replace(run.toy, seed=derived_seed(seed, "noise-data")), noise_pol, episodes)
    return mix_datasets(data, noise, fraction, seed)


def toy_cell(run: RunConfig, rep: int, *, episodes: int | None = None, fraction: float = 1.0,
             n_iterations: int | None = None, discrepancy: str | None = None) -> dict:
    """One seeded repetition of the ring ranking experiment, scored against the rollout ground truth."""
    seed = derived_seed(run.sampler.seed, "rep", rep)
    scfg = replace(run.sampler, seed=seed)
    if n_iterations is not None:
        scfg = replace(scfg, n_iterations=int(n_iterations), thin=min(scfg.thin, int(n_iterations)))
    if discrepancy is not None:
        scfg = replace(scfg, discrepancy=DiscrepancyKind.parse(discrepancy))
    data = toy_dataset(run, seed, episodes, fraction)
    outcome = rank_policies(data, candidates(run), scfg)
    truth = ground_truth(run)
    return {
        "rep": rep,
        "seed": seed,
        "ordering": outcome.report.ordering,
        "truth": truth,
        "scores": outcome.report.scores,
        "ndcg": metrics.ndcg(outcome.report.ordering, truth),
        "srcc": metrics.srcc(outcome.report.ordering, truth),
        "outcome": outcome,
    }


def multi_expert_cell(run: RunConfig, rep: int, n_experts: int = 5, top_r: int | None = None) -> dict:
    """Rank the candidates with ``n_experts`` independently seeded expert datasets and top-r pooling."""
    seed = derived_seed(run.sampler.seed, "rep", rep)
    scfg = replace(run.sampler, seed=seed)
    pols = candidates(run)
    per_expert = []
    for m in range(n_experts):
        data = toy_dataset(run, derived_seed(seed, "expert", m))
        per_expert.append(sampler.run_all(data, pols, scfg))
    pooled = analysis.multi_expert_aggregate(per_expert, top_r or min(run.experiment.top_r, n_experts))
    report = analysis.rank_mean(pooled)
    truth = ground_truth(run)
    return {
        "rep": rep,
        "ordering": report.ordering,
        "truth": truth,
        "ndcg": metrics.ndcg(report.ordering, truth),
        "srcc": metrics.srcc(report.ordering, truth),
        "samples": pooled,
    }


SWEEP_AXES = ("datasize", "quality", "iterations", "discrepancy")


def sweep_values(run: RunConfig, axis: str) -> list:
    e = run.experiment
    if axis == "datasize":
        return list(e.datasizes)
    if axis == "quality":
        return list(e.fractions)
    if axis == "iterations":
        return list(e.iterations)
    if axis == "discrepancy":
        return list(e.discrepancies)
    raise ValidationError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")


def sweep_cell(run: RunConfig, axis: str, value, rep: int) -> dict:
    kwargs = {
        "datasize": {"episodes": value},
        "quality": {"fraction": value},
        "iterations": {"n_iterations": value},
        "discrepancy": {"discrepancy": value},
    }[axis]
    return toy_cell(run, rep, **kwargs)
