"""Energy-based ABC posterior sampler.

Each Metropolis-Hastings iteration bootstraps ``M`` expert trajectories,
scores the candidate policy on them, fits a Beta density to the energies by
the method of moments and uses that density as the likelihood of the
agreement probability ``theta``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import ExpertDataset, Policy, seed_sequence
from .energy import DEFAULT_SMOOTHING, DiscrepancyKind, EnergySample, bootstrap_energies, dataset_action_scale
from .errors import PolicyEvaluationError, ValidationError

log = logging.getLogger(__name__)

MEAN_CLAMP = 1e-6
VARIANCE_FLOOR = 1e-8
SHRINK = 0.99
THETA_EPS = 1e-12


@dataclass(frozen=True)
class BetaParams:
    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0) or not (math.isfinite(self.alpha) and math.isfinite(self.beta)):
            raise ValidationError(f"Beta parameters must be positive and finite, got ({self.alpha}, {self.beta})")

    @property
    def mean(self) -> float:
        return self.alpha / (self.alpha + self.beta)

    @property
    def variance(self) -> float:
        s = self.alpha + self.beta
        return self.alpha * self.beta / (s * s * (s + 1.0))

    def logpdf(self, theta: float) -> float:
        return log_beta_pdf(theta, self.alpha, self.beta)


def log_beta_pdf(theta: float, a: float, b: float) -> float:
    """Log Beta(a, b) density; ``theta`` is clamped into the open unit interval."""
    t = min(max(theta, THETA_EPS), 1.0 - THETA_EPS)
    return (
        (a - 1.0) * math.log(t)
        + (b - 1.0) * math.log1p(-t)
        + math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
    )


def fit_beta_moments(sample: EnergySample | tuple[float, float], variance_floor: float = VARIANCE_FLOOR) -> BetaParams:
    """Method-of-moments Beta fit to the mean and variance of bootstrapped energies.

    The mean is clamped to ``[1e-6, 1 - 1e-6]`` and the variance floored at
    ``variance_floor``. When the variance is too large for any Beta with that
    mean (``var >= mean (1 - mean)``) it is shrunk to ``0.99 mean (1 - mean)``.
    """
    if isinstance(sample, EnergySample):
        mu, var = sample.mean, sample.variance
    else:
        mu, var = sample
    mu = min(max(float(mu), MEAN_CLAMP), 1.0 - MEAN_CLAMP)
    var = max(float(var), variance_floor)
    bound = mu * (1.0 - mu)
    if bound <= var:
        log.debug("energy variance %.3g >= mean*(1-mean)=%.3g; shrinking", var, bound)
        var = SHRINK * bound
    kappa = bound / var - 1.0
    return BetaParams(mu * kappa, (1.0 - mu) * kappa)


def pseudo_likelihood(theta: float, params: BetaParams) -> float:
    """Beta(alpha, beta) density at ``theta``."""
    return math.exp(params.logpdf(theta))


# --------------------------------------------------------------------------
# priors and proposals


def _norm_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


@dataclass(frozen=True)
class Prior:
    """``kind="beta"``: Beta(a, b). ``kind="normal"``: Normal(a, b) truncated to [0, 1]."""

    kind: str = "beta"
    a: float = 0.5
    b: float = 0.5

    def __post_init__(self):
        if self.kind not in ("beta", "normal", "uniform"):
            raise ValidationError(f"unknown prior {self.kind!r}")
        if self.kind == "beta" and not (self.a > 0 and self.b > 0):
            raise ValidationError(f"invalid beta prior parameters ({self.a}, {self.b})")
        if self.kind == "normal" and not self.b > 0:
            raise ValidationError(f"normal prior needs sigma > 0, got {self.b}")

    @classmethod
    def normal(cls, mu: float = 0.4, sigma: float = 0.4) -> "Prior":
        return cls("normal", mu, sigma)

    @classmethod
    def uniform(cls) -> "Prior":
        return cls("uniform", 1.0, 1.0)

    def logpdf(self, theta: float) -> float:
        if self.kind == "uniform":
            return 0.0
        if self.kind == "beta":
            return log_beta_pdf(theta, self.a, self.b)
        mu, sigma = self.a, self.b
        z = _norm_cdf((1.0 - mu) / sigma) - _norm_cdf(-mu / sigma)
        return -0.5 * ((theta - mu) / sigma) ** 2 - math.log(sigma * math.sqrt(2.0 * math.pi) * z)


@dataclass(frozen=True)
class Proposal:
    """Proposal distribution for theta.

    ``kind="logit-normal"`` (default) is a random walk
    ``logit(theta*) = logit(theta) + step * z``. ``kind="beta"`` is an
    independence sampler drawing from Beta(alpha, beta); with the default
    Beta(4, 1e-3) almost every draw rounds to 1.0, so chains barely move.
    """

    kind: str = "logit-normal"
    alpha: float = 4.0
    beta: float = 1e-3
    step: float = 1.0

    def __post_init__(self):
        if self.kind not in ("beta", "logit-normal"):
            raise ValidationError(f"unknown proposal {self.kind!r}")
        if self.kind == "beta" and not (self.alpha > 0 and self.beta > 0):
            raise ValidationError(f"invalid proposal parameters ({self.alpha}, {self.beta})")
        if self.kind == "logit-normal" and not self.step > 0:
            raise ValidationError(f"proposal step must be positive, got {self.step}")

    def sample(self, current: float, rng: np.random.Generator) -> float:
        if self.kind == "beta":
            x = float(rng.beta(self.alpha, self.beta))
        else:
            c = min(max(current, THETA_EPS), 1.0 - THETA_EPS)
            logit = math.log(c) - math.log1p(-c) + self.step * float(rng.standard_normal())
            x = 1.0 / (1.0 + math.exp(-logit)) if logit > -700 else 0.0
        return min(max(x, THETA_EPS), 1.0 - THETA_EPS)

    def log_ratio(self, current: float, proposed: float) -> float:
        """``log q(current | proposed) - log q(proposed | current)``."""
        if self.kind == "beta":
            return log_beta_pdf(current, self.alpha, self.beta) - log_beta_pdf(proposed, self.alpha, self.beta)
        return math.log(proposed) + math.log1p(-proposed) - math.log(current) - math.log1p(-current)


# --------------------------------------------------------------------------
# configuration and results


@dataclass(frozen=True)
class SamplerConfig:
    n_iterations: int = 500
    bootstrap_m: int = 5
    burnin: int = 10
    thin: int = 10
    prior: Prior = field(default_factory=Prior)
    proposal: Proposal = field(default_factory=Proposal)
    seed: int = 0
    discrepancy: DiscrepancyKind = field(default_factory=DiscrepancyKind.js)
    smoothing: float = DEFAULT_SMOOTHING
    variance_floor: float = VARIANCE_FLOOR

    def validate(self) -> "SamplerConfig":
        if self.n_iterations < 1:
            raise ValidationError(f"n_iterations must be >= 1, got {self.n_iterations}")
        if self.bootstrap_m < 2:
            raise ValidationError(f"bootstrap_m must be >= 2, got {self.bootstrap_m}")
        if self.burnin < 0:
            raise ValidationError(f"burnin must be >= 0, got {self.burnin}")
        if self.thin < 1:
            raise ValidationError(f"thin must be >= 1, got {self.thin}")
        if self.thin > self.n_iterations:
            raise ValidationError(f"thin ({self.thin}) exceeds n_iterations ({self.n_iterations}); no samples kept")
        if not self.smoothing >= 0:
            raise ValidationError(f"smoothing must be >= 0, got {self.smoothing}")
        if not self.variance_floor > 0:
            raise ValidationError(f"variance_floor must be > 0, got {self.variance_floor}")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["discrepancy"] = str(self.discrepancy)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SamplerConfig":
        d = dict(d)
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ValidationError(f"unknown sampler config keys: {sorted(unknown)}")
        if "prior" in d and isinstance(d["prior"], dict):
            d["prior"] = Prior(**d["prior"])
        if "proposal" in d and isinstance(d["proposal"], dict):
            d["proposal"] = Proposal(**d["proposal"])
        if "discrepancy" in d and not isinstance(d["discrepancy"], DiscrepancyKind):
            d["discrepancy"] = DiscrepancyKind.parse(d["discrepancy"])
        return cls(**d)

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


@dataclass
class PosteriorSamples:
    """Retained draws of theta for one policy, plus chain diagnostics."""

    policy_id: str
    samples: np.ndarray
    acceptance_rate: float
    config_fingerprint: str = ""
    trace: np.ndarray | None = None
    accepted: np.ndarray | None = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 1:
            raise ValidationError("samples must be 1-d")
        if np.any((self.samples < 0.0) | (self.samples > 1.0)):
            raise ValidationError(f"samples of {self.policy_id!r} outside [0, 1]")
        if not 0.0 <= self.acceptance_rate <= 1.0:
            raise ValidationError(f"acceptance rate {self.acceptance_rate} outside [0, 1]")

    def __len__(self) -> int:
        return self.samples.size

    @property
    def mean(self) -> float:
        return float(self.samples.mean())

    @property
    def std(self) -> float:
        return float(self.samples.std(ddof=1)) if self.samples.size > 1 else 0.0


# --------------------------------------------------------------------------
# Metropolis-Hastings


def mh_transition(theta: float, params: BetaParams, prior: Prior, proposal: Proposal,
                  rng: np.random.Generator) -> tuple[float, bool]:
    """One accept/reject decision against the pseudo-likelihood ``params``."""
    proposed = proposal.sample(theta, rng)
    num = params.logpdf(proposed) + prior.logpdf(proposed)
    den = params.logpdf(theta) + prior.logpdf(theta)
    log_tau = num - den + proposal.log_ratio(theta, proposed)
    u = rng.random()
    if math.isnan(log_tau):
        log_tau = -math.inf if math.isinf(num) and num < 0 else 0.0
    if log_tau >= 0.0 or u < math.exp(log_tau):
        return proposed, True
    return theta, False


def mh_step(theta: float, dataset: ExpertDataset, policy: Policy, config: SamplerConfig,
            rng: np.random.Generator, scale: float | None = None) -> tuple[float, bool]:
    """Fresh bootstrap energies, Beta fit, then one MH transition."""
    energies = bootstrap_energies(
        dataset, policy, config.bootstrap_m, config.discrepancy, rng, config.smoothing, scale
    )
    params = fit_beta_moments(energies, config.variance_floor)
    return mh_transition(theta, params, config.prior, config.proposal, rng)


ParamsSource = Callable[[np.random.Generator], BetaParams]


def sample_chain(params_source: ParamsSource, config: SamplerConfig, rng: np.random.Generator,
                 policy_id: str = "") -> PosteriorSamples:
    """Run burn-in plus ``n_iterations`` MH iterations, keeping every ``thin``-th state.

    ``params_source`` supplies the pseudo-likelihood for each iteration; the
    energy-based sampler refits it from fresh bootstraps every time.
    """
    config.validate()
    theta = max(float(rng.random()), THETA_EPS)
    total = config.burnin + config.n_iterations
    trace = np.empty(total)
    accepted = np.zeros(total, dtype=bool)
    for i in range(total):
        params = params_source(rng)
        theta, accepted[i] = mh_transition(theta, params, config.prior, config.proposal, rng)
        trace[i] = theta
    kept = trace[config.burnin + config.thin - 1::config.thin]
    return PosteriorSamples(
        policy_id=policy_id,
        samples=kept,
        acceptance_rate=float(accepted[config.burnin:].mean()),
        config_fingerprint=config.fingerprint(),
        trace=trace,
        accepted=accepted,
    )


def chain_rng(config: SamplerConfig, policy_id: str) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(config.seed, "chain", policy_id))


def run_chain(dataset: ExpertDataset, policy: Policy, config: SamplerConfig | None = None) -> PosteriorSamples:
    """Sample the posterior of ``policy``'s agreement with the expert data.

    The random stream is keyed by ``(config.seed, policy.policy_id)``.
    """
    config = (config or SamplerConfig()).validate()
    if policy.action_space != dataset.action_space:
        raise ValidationError(
            f"policy {policy.policy_id!r} acts in {policy.action_space}, dataset uses {dataset.action_space}"
        )
    policy.check_state_dim(dataset.state_dim)
    scale = dataset_action_scale(dataset)

    def source(rng):
        energies = bootstrap_energies(
            dataset, policy, config.bootstrap_m, config.discrepancy, rng, config.smoothing, scale
        )
        return fit_beta_moments(energies, config.variance_floor)

    return sample_chain(source, config, chain_rng(config, policy.policy_id), policy.policy_id)


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("POPR_THREADS", "1")))
    except ValueError:
        return 1


def run_all(dataset: ExpertDataset, policies: Sequence[Policy], config: SamplerConfig | None = None,
            workers: int | None = None) -> list[PosteriorSamples]:
    """One independent chain per policy, output in input order."""
    config = (config or SamplerConfig()).validate()
    if not policies:
        raise ValidationError("run_all needs at least one policy")
    ids = [p.policy_id for p in policies]
    if len(set(ids)) != len(ids):
        raise ValidationError(f"policy ids must be unique, got {ids}")
    workers = workers or default_workers()

    def one(policy):
        try:
            return run_chain(dataset, policy, config)
        except PolicyEvaluationError:
            raise
        except Exception as exc:
            raise PolicyEvaluationError(policy.policy_id, exc) from exc

    if workers <= 1 or len(policies) == 1:
        return [one(p) for p in policies]
    clones = [p.clone() for p in policies]
    try:
        with ThreadPoolExecutor(max_workers=min(workers, len(clones))) as pool:
            return list(pool.map(one, clones))
    finally:
        for orig, c in zip(policies, clones):
            if c is not orig:
                c.close()
