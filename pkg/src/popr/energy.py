"""Discrepancy measures and the normalised energy between expert and candidate actions.

The energy of a candidate on one expert trajectory is ``1 - mean_t rho_t``
where ``rho_t`` compares the logged action at step ``t`` with the action the
candidate takes in the same logged state. For discrete spaces each action is a
one-hot vector smoothed by ``eps`` so that every divergence stays finite. For
continuous spaces the JS/KL kinds fall back to a normalised Euclidean distance
and the MMD kinds compare the pooled action sets of the trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import ActionSpace, ExpertDataset, Policy, replay_actions
from .errors import ValidationError

DEFAULT_SMOOTHING = 1e-6
DEFAULT_RBF_BANDWIDTH = 1.0
DEFAULT_MULTISCALE_BANDWIDTHS = (0.2, 0.5, 0.9, 1.3)

JS = "js"
KL = "kl"
MMD_RBF = "mmd-rbf"
MMD_MULTISCALE = "mmd-multiscale"


@dataclass(frozen=True)
class DiscrepancyKind:
    name: str = JS
    bandwidths: tuple[float, ...] = ()

    def __post_init__(self):
        if self.name not in (JS, KL, MMD_RBF, MMD_MULTISCALE):
            raise ValidationError(f"unknown discrepancy {self.name!r}")
        if self.name in (MMD_RBF, MMD_MULTISCALE):
            if not self.bandwidths or any(h <= 0 for h in self.bandwidths):
                raise ValidationError(f"{self.name} needs positive bandwidths, got {self.bandwidths}")
            if self.name == MMD_RBF and len(self.bandwidths) != 1:
                raise ValidationError("mmd-rbf takes exactly one bandwidth")
        elif self.bandwidths:
            raise ValidationError(f"{self.name} takes no bandwidths")

    @classmethod
    def js(cls) -> "DiscrepancyKind":
        return cls(JS)

    @classmethod
    def kl(cls) -> "DiscrepancyKind":
        return cls(KL)

    @classmethod
    def mmd_rbf(cls, bandwidth: float = DEFAULT_RBF_BANDWIDTH) -> "DiscrepancyKind":
        return cls(MMD_RBF, (float(bandwidth),))

    @classmethod
    def mmd_multiscale(cls, bandwidths=DEFAULT_MULTISCALE_BANDWIDTHS) -> "DiscrepancyKind":
        return cls(MMD_MULTISCALE, tuple(float(h) for h in bandwidths))

    @classmethod
    def parse(cls, text: str) -> "DiscrepancyKind":
        """Parse ``js``, ``kl``, ``mmd-rbf[:h]`` or ``mmd-multiscale[:h1,h2,...]``."""
        name, _, args = str(text).strip().lower().partition(":")
        try:
            if name == JS and not args:
                return cls.js()
            if name == KL and not args:
                return cls.kl()
            if name == MMD_RBF:
                return cls.mmd_rbf(float(args)) if args else cls.mmd_rbf()
            if name == MMD_MULTISCALE:
                return cls.mmd_multiscale([float(h) for h in args.split(",")]) if args else cls.mmd_multiscale()
        except ValueError as exc:
            raise ValidationError(f"bad discrepancy {text!r}: {exc}") from None
        raise ValidationError(f"unknown discrepancy {text!r}")

    @property
    def is_mmd(self) -> bool:
        return self.name in (MMD_RBF, MMD_MULTISCALE)

    def __str__(self) -> str:
        if self.is_mmd:
            return f"{self.name}:{','.join(f'{h:g}' for h in self.bandwidths)}"
        return self.name


@dataclass(frozen=True)
class EnergySample:
    """M bootstrapped energies with their mean and unbiased variance."""

    values: tuple[float, ...]
    mean: float = field(init=False)
    variance: float = field(init=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.size < 2:
            raise ValidationError("an energy sample needs at least two values")
        if np.any((vals < 0.0) | (vals > 1.0)) or not np.all(np.isfinite(vals)):
            raise ValidationError("energy values must lie in [0, 1]")
        object.__setattr__(self, "values", tuple(float(v) for v in vals))
        object.__setattr__(self, "mean", float(vals.mean()))
        object.__setattr__(self, "variance", float(vals.var(ddof=1)))

    def __len__(self) -> int:
        return len(self.values)


def _check_distribution(p, name: str) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValidationError(f"{name} must be a non-empty 1-d probability vector")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ValidationError(f"{name} has negative or non-finite entries")
    if abs(p.sum() - 1.0) > 1e-9:
        raise ValidationError(f"{name} sums to {p.sum()!r}, not 1")
    return p


def smooth(p, eps: float = DEFAULT_SMOOTHING) -> np.ndarray:
    """Additive smoothing ``(p_i + eps) / (1 + n eps)``."""
    p = np.asarray(p, dtype=float)
    return (p + eps) / (1.0 + p.size * eps)


def _xlog2(a: np.ndarray, b: np.ndarray) -> float:
    mask = a > 0
    return float(np.sum(a[mask] * np.log2(a[mask] / b[mask])))


def js_divergence(p, q) -> float:
    """Jensen-Shannon divergence in bits; symmetric and bounded by 1."""
    p = _check_distribution(p, "p")
    q = _check_distribution(q, "q")
    if p.shape != q.shape:
        raise ValidationError(f"length mismatch: {p.size} vs {q.size}")
    # p log(p / m) written as p log(2p / (p + q)): halving a subnormal entry underflows to 0
    s = p + q
    val = 0.25 * (_xlog2(2.0 * p, s) + _xlog2(2.0 * q, s))
    return min(max(val, 0.0), 1.0)


def kl_divergence(p, q, smoothing: float = DEFAULT_SMOOTHING) -> float:
    """KL(p || q) in bits after smoothing both arguments (``0 log 0 = 0``)."""
    p = _check_distribution(p, "p")
    q = _check_distribution(q, "q")
    if p.shape != q.shape:
        raise ValidationError(f"length mismatch: {p.size} vs {q.size}")
    if smoothing > 0:
        p = smooth(p, smoothing)
        q = smooth(q, smoothing)
    elif np.any((q == 0) & (p > 0)):
        return float("inf")
    return max(_xlog2(p, q), 0.0)


def _as_samples(x, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValidationError(f"{name} must be a non-empty set of vectors")
    return x


def mmd(x, y, kernel: str = "rbf", bandwidths=None) -> float:
    """Biased (V-statistic) estimate of squared MMD, clamped at zero.

    ``kernel="rbf"`` uses one Gaussian kernel ``exp(-|x-y|^2 / (2 h^2))``;
    ``"multiscale"`` sums Gaussians over all ``bandwidths``.
    """
    x = _as_samples(x, "x")
    y = _as_samples(y, "y")
    if x.shape[1] != y.shape[1]:
        raise ValidationError(f"dimension mismatch: {x.shape[1]} vs {y.shape[1]}")
    if bandwidths is None:
        bandwidths = (DEFAULT_RBF_BANDWIDTH,) if kernel == "rbf" else DEFAULT_MULTISCALE_BANDWIDTHS
    elif np.isscalar(bandwidths):
        bandwidths = (float(bandwidths),)
    if kernel not in ("rbf", "multiscale"):
        raise ValidationError(f"unknown kernel {kernel!r}")
    if kernel == "rbf" and len(bandwidths) != 1:
        raise ValidationError("rbf kernel takes a single bandwidth")
    bw = np.asarray(bandwidths, dtype=float)
    return max(float(kernels.mmd2(np.ascontiguousarray(x), np.ascontiguousarray(y), bw)), 0.0)


def _one_hot(actions: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros((actions.size, n))
    out[np.arange(actions.size), actions] = 1.0
    return out


def energy(expert_actions, candidate_actions, kind: DiscrepancyKind | None = None,
           action_space: ActionSpace | None = None, smoothing: float = DEFAULT_SMOOTHING,
           scale: float | None = None) -> float:
    """Normalised energy in [0, 1] between two aligned action sequences.

    ``scale`` normalises Euclidean distances for continuous actions; it defaults
    to the 95th percentile of pairwise distances among the expert actions.
    """
    kind = kind or DiscrepancyKind.js()
    exp = np.asarray(expert_actions)
    cand = np.asarray(candidate_actions)
    if exp.shape[0] != cand.shape[0]:
        raise ValidationError(f"length mismatch: {exp.shape[0]} expert vs {cand.shape[0]} candidate actions")
    if exp.shape[0] == 0:
        raise ValidationError("energy needs at least one aligned step")
    if action_space is None:
        if exp.ndim == 1 and np.issubdtype(exp.dtype, np.integer):
            action_space = ActionSpace.discrete(max(2, int(max(exp.max(), cand.max())) + 1))
        else:
            action_space = ActionSpace.continuous(1 if exp.ndim == 1 else exp.shape[1])
    exp = action_space.validate_actions(exp)
    cand = action_space.validate_actions(cand)

    if action_space.is_discrete:
        if kind.is_mmd:
            x = _one_hot(exp, action_space.n)
            y = _one_hot(cand, action_space.n)
            rho = mmd(x, y, "rbf" if kind.name == MMD_RBF else "multiscale", kind.bandwidths)
            return _clamp01(1.0 - rho / (2.0 * len(kind.bandwidths)))
        fn = kernels.js_per_step if kind.name == JS else kernels.kl_per_step
        rho = fn(exp, cand, action_space.n, float(smoothing))
        return _clamp01(1.0 - float(rho.mean()))

    if kind.is_mmd:
        rho = mmd(exp, cand, "rbf" if kind.name == MMD_RBF else "multiscale", kind.bandwidths)
        return _clamp01(1.0 - rho / (2.0 * len(kind.bandwidths)))
    if scale is None:
        scale = action_scale(exp)
    rho = kernels.distance_per_step(np.ascontiguousarray(exp), np.ascontiguousarray(cand), float(scale))
    return _clamp01(1.0 - float(rho.mean()))


def _clamp01(x: float) -> float:
    return min(max(x, 0.0), 1.0)


def action_scale(actions, max_points: int = 2000) -> float:
    """95th percentile of pairwise distances between continuous actions (1.0 if degenerate)."""
    a = np.asarray(actions, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.shape[0] > max_points:
        a = a[np.linspace(0, a.shape[0] - 1, max_points).astype(int)]
    if a.shape[0] < 2:
        return 1.0
    d = np.sqrt(((a[:, None, :] - a[None, :, :]) ** 2).sum(axis=-1))
    iu = np.triu_indices(a.shape[0], k=1)
    c = float(np.percentile(d[iu], 95))
    return c if c > 0 else 1.0


def dataset_action_scale(dataset: ExpertDataset) -> float | None:
    if dataset.action_space.is_discrete:
        return None
    return action_scale(np.vstack([t.actions for t in dataset]))


def bootstrap_energies(dataset: ExpertDataset, policy: Policy, m: int = 5,
                       kind: DiscrepancyKind | None = None, rng: np.random.Generator | None = None,
                       smoothing: float = DEFAULT_SMOOTHING, scale: float | None = None) -> EnergySample:
    """Energies of ``policy`` on ``m`` trajectories drawn with replacement from ``dataset``."""
    if m < 2:
        raise ValidationError(f"bootstrap size M must be >= 2, got {m}")
    if policy.action_space != dataset.action_space:
        raise ValidationError(
            f"policy {policy.policy_id!r} acts in {policy.action_space}, dataset uses {dataset.action_space}"
        )
    rng = rng if rng is not None else np.random.default_rng()
    if scale is None:
        scale = dataset_action_scale(dataset)
    idx = rng.integers(len(dataset), size=m)
    values = []
    for i in idx:
        traj = dataset[int(i)]
        cand = replay_actions(policy, traj, rng)
        values.append(energy(traj.actions, cand, kind, dataset.action_space, smoothing, scale))
    return EnergySample(tuple(values))
