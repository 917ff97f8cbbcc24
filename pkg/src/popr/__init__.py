"""Probabilistic offline policy ranking with energy-based approximate Bayesian computation."""

__version__ = "0.1.0"

from .core import ActionSpace, ConstantPolicy, ExpertDataset, FunctionPolicy, Policy, Step, Trajectory
from .energy import DiscrepancyKind, EnergySample, bootstrap_energies, energy, js_divergence, kl_divergence, mmd
from .errors import (
    ActionSpaceError,
    DatasetFormatError,
    DimensionMismatchError,
    ExternalPolicyError,
    PolicyEvaluationError,
    PoprError,
    ValidationError,
)
from .sampler import BetaParams, PosteriorSamples, Prior, Proposal, SamplerConfig, fit_beta_moments, run_all, run_chain
from .analysis import PairwiseMatrix, RankingReport, agree_rank, multi_expert_aggregate, pairwise, rank_mean, rank_tail
from .metrics import ndcg, srcc

__all__ = [
    "ActionSpace", "ConstantPolicy", "ExpertDataset", "FunctionPolicy", "Policy", "Step", "Trajectory",
    "DiscrepancyKind", "EnergySample", "bootstrap_energies", "energy", "js_divergence", "kl_divergence", "mmd",
    "ActionSpaceError", "DatasetFormatError", "DimensionMismatchError", "ExternalPolicyError",
    "PolicyEvaluationError", "PoprError", "ValidationError",
    "BetaParams", "PosteriorSamples", "Prior", "Proposal", "SamplerConfig", "fit_beta_moments", "run_all",
    "run_chain", "PairwiseMatrix", "RankingReport", "agree_rank", "multi_expert_aggregate", "pairwise",
    "rank_mean", "rank_tail", "ndcg", "srcc",
]
