"""Declarative pipeline configuration with a JSON round-trip."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigurationError
from .neural.training import TrainConfig
from .synthcohort import CohortSpec

PAIRINGS = {"mazilu": "random_forest", "spectral_sequence": "fog_transformer"}


@dataclass
class PreprocessingConfig:
    overlap: int = 75
    n_prev: int = 3
    zero_phase: bool = False

    def validate(self):
        if self.overlap not in (50, 75):
            raise ConfigurationError("overlap must be 50 or 75")
        if self.n_prev not in (1, 2, 3):
            raise ConfigurationError("n_prev must be 1, 2 or 3")


@dataclass
class EvaluationConfig:
    repeats: int = 6

    def validate(self):
        if not isinstance(self.repeats, int) or self.repeats < 1:
            raise ConfigurationError("repeats must be a positive integer")


@dataclass
class PostprocessingConfig:
    threshold_strategy: str = "eer"
    sweep_lo: float = 0.2
    sweep_hi: float = 0.8
    sweep_step: float = 0.01
    max_len: int = 3

    def validate(self):
        if self.threshold_strategy not in ("eer", "fmax"):
            raise ConfigurationError("threshold_strategy must be 'eer' or 'fmax'")
        if not (0.0 <= self.sweep_lo < self.sweep_hi <= 1.0 and self.sweep_step > 0):
            raise ConfigurationError("invalid threshold sweep range")
        if self.max_len not in (1, 2, 3):
            raise ConfigurationError("max_len must be 1, 2 or 3")


def _build(cls, data, name):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigurationError(f"'{name}' must be an object")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigurationError(f"unknown fields in '{name}': {sorted(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigurationError(f"bad '{name}' section: {exc}") from exc


@dataclass
class PipelineConfig:
    generator: CohortSpec = field(default_factory=CohortSpec)
    preprocessing: PreprocessingConfig = field(default_factory=PreprocessingConfig)
    representation: str = "spectral_sequence"
    model: str = "fog_transformer"
    training: TrainConfig = field(default_factory=TrainConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    postprocessing: PostprocessingConfig = field(default_factory=PostprocessingConfig)
    output_dir: str = "runs/default"
    seed: int = 0

    def validate(self) -> "PipelineConfig":
        self.generator.validate()
        self.preprocessing.validate()
        self.training.validate()
        self.evaluation.validate()
        self.postprocessing.validate()
        if self.representation not in PAIRINGS:
            raise ConfigurationError(f"unknown representation {self.representation!r}")
        if PAIRINGS[self.representation] != self.model:
            raise ConfigurationError(
                f"representation {self.representation!r} pairs with model "
                f"{PAIRINGS[self.representation]!r}, not {self.model!r}")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2 ** 63:
            raise ConfigurationError("seed must be a non-negative 63-bit integer")
        if not self.output_dir:
            raise ConfigurationError("output_dir must be non-empty")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        if not isinstance(d, dict):
            raise ConfigurationError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown config fields: {sorted(unknown)}")
        gen = d.get("generator")
        generator = CohortSpec() if gen is None else CohortSpec.from_dict(gen)
        cfg = cls(
            generator=generator,
            preprocessing=_build(PreprocessingConfig, d.get("preprocessing"), "preprocessing"),
            representation=d.get("representation", "spectral_sequence"),
            model=d.get("model", "fog_transformer"),
            training=_build(TrainConfig, d.get("training"), "training"),
            evaluation=_build(EvaluationConfig, d.get("evaluation"), "evaluation"),
            postprocessing=_build(PostprocessingConfig, d.get("postprocessing"), "postprocessing"),
            output_dir=d.get("output_dir", "runs/default"),
            seed=d.get("seed", 0),
        )
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "PipelineConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        return cls.from_json(Path(path).read_text())

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())
