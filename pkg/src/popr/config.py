"""File-based run configuration with every default filled in."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .errors import ValidationError
from .sampler import SamplerConfig
from .toyenv import ToyEnvConfig

DEFAULT_EPSILONS = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
DEFAULT_DATASIZES = (2, 10, 20, 50, 70, 100)
DEFAULT_FRACTIONS = tuple(round(0.1 * i, 1) for i in range(11))
DEFAULT_ITERATIONS = (10, 50, 100, 200, 500, 1000)
DEFAULT_DISCREPANCIES = ("js", "kl", "mmd-rbf", "mmd-multiscale")


@dataclass(frozen=True)
class ExperimentConfig:
    episodes: int = 20
    epsilons: tuple[float, ...] = DEFAULT_EPSILONS
    include_constant: bool = False
    constant_action: int = 0
    noise_epsilon: float = 1.0
    ground_truth_episodes: int = 1000
    repetitions: int = 5
    top_r: int = 3
    datasizes: tuple[int, ...] = DEFAULT_DATASIZES
    fractions: tuple[float, ...] = DEFAULT_FRACTIONS
    iterations: tuple[int, ...] = DEFAULT_ITERATIONS
    discrepancies: tuple[str, ...] = DEFAULT_DISCREPANCIES

    def __post_init__(self):
        for name in ("epsilons", "datasizes", "fractions", "iterations", "discrepancies"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.episodes < 1:
            raise ValidationError(f"episodes must be >= 1, got {self.episodes}")
        if self.repetitions < 1:
            raise ValidationError(f"repetitions must be >= 1, got {self.repetitions}")
        if self.ground_truth_episodes < 1:
            raise ValidationError("ground_truth_episodes must be >= 1")
        if not self.epsilons:
            raise ValidationError("need at least one epsilon")


@dataclass(frozen=True)
class RunConfig:
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    toy: ToyEnvConfig = field(default_factory=ToyEnvConfig)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)

    def to_dict(self) -> dict:
        return {
            "sampler": self.sampler.to_dict(),
            "toy": asdict(self.toy),
            "experiment": {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self.experiment).items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        unknown = set(d) - {"sampler", "toy", "experiment"}
        if unknown:
            raise ValidationError(f"unknown config sections: {sorted(unknown)}")
        try:
            sampler = SamplerConfig.from_dict(d.get("sampler", {})).validate()
            toy = _build(ToyEnvConfig, d.get("toy", {}), "toy")
            experiment = _build(ExperimentConfig, d.get("experiment", {}), "experiment")
        except TypeError as exc:
            raise ValidationError(f"bad config: {exc}") from None
        return cls(sampler, toy, experiment)

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, sampler=replace(self.sampler, seed=seed), toy=replace(self.toy, seed=seed))


def _build(cls, d: dict, section: str):
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ValidationError(f"unknown keys in [{section}]: {sorted(unknown)}")
    return cls(**d)


def load_run_config(path=None) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config {path} is not valid JSON: {exc.msg} (line {exc.lineno})") from None
    if not isinstance(data, dict):
        raise ValidationError(f"config {path} must be a JSON object")
    return RunConfig.from_dict(data)
