"""Experiment configuration: YAML text validated into typed models."""

from __future__ import annotations

import hashlib
import json
import re
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .classical import KickHamiltonian, MapSpec, SymplecticMatrix
from .partitions import PartitionSpec

ExperimentKind = Literal["spectrum", "egorov", "eup", "dispersive", "entropy-bound", "classical-entropy"]


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", strict=True, frozen=True)


class KickConfig(_Strict):
    amplitude: float = 0.0
    form: Literal["position", "momentum", "general"] = "position"
    # explicit Fourier table "m,n" -> real coefficient; overrides amplitude
    coefficients: dict[str, float] | None = None


class MapConfig(_Strict):
    matrix: list[list[int]] = Field(default_factory=lambda: [[2, 1], [3, 2]])
    kick: KickConfig | None = None

    def build(self) -> MapSpec:
        S = SymplecticMatrix.from_rows(self.matrix)
        if self.kick is None:
            return MapSpec(S)
        if self.kick.coefficients is not None:
            table = {}
            for key, value in self.kick.coefficients.items():
                m, n = (int(v) for v in key.split(","))
                table[(m, n)] = value
            return MapSpec(S, KickHamiltonian(table, self.kick.form))
        if self.kick.amplitude == 0.0:
            return MapSpec(S)
        return MapSpec(S, KickHamiltonian.cosine(self.kick.amplitude, self.kick.form))


class PartitionConfig(_Strict):
    kind: Literal["halves", "grid", "strips"] = "halves"
    nx: int = 2
    nxi: int = 1
    edges: list[float] | None = None
    mode: Literal["sharp", "smooth"] = "sharp"
    width: float = 0.05

    def build(self) -> PartitionSpec:
        if self.kind == "halves":
            return PartitionSpec.halves()
        if self.kind == "grid":
            return PartitionSpec.grid(self.nx, self.nxi)
        if self.edges is None:
            raise ConfigError("partition.edges: required for kind 'strips'")
        return PartitionSpec.vertical_strips(self.edges)


class ClockConfig(_Strict):
    epsilon: float = 0.1
    n_max: int = 64
    log_scale: Literal["logN", "log2piN"] = "logN"


class SeedConfig(_Strict):
    lyapunov: int = 0
    sampling: int = 0
    states: int = 0


class ParamsConfig(_Strict):
    # egorov
    t_list: list[int] = Field(default_factory=lambda: [1, 2, 3, 4, 5])
    frequency_cutoff: int = 5
    # eup
    random_states: int = 1000
    # dispersive
    n_list: list[int] | None = None
    max_words: int = 256
    # entropy-bound / symbolic measures
    prune: float = 1e-12
    # classical-entropy
    samples: int = 1_000_000
    depth: int = 8
    measure: Literal["lebesgue", "periodic"] = "lebesgue"
    period: int = 2


class ExperimentConfig(_Strict):
    experiment: ExperimentKind
    map: MapConfig = Field(default_factory=MapConfig)
    N: list[int] = Field(default_factory=lambda: [64])
    partition: PartitionConfig = Field(default_factory=PartitionConfig)
    clock: ClockConfig = Field(default_factory=ClockConfig)
    seeds: SeedConfig = Field(default_factory=SeedConfig)
    params: ParamsConfig = Field(default_factory=ParamsConfig)
    output: str = "out"

    @field_validator("N")
    @classmethod
    def _positive(cls, v: list[int]) -> list[int]:
        if not v or any(n < 1 for n in v):
            raise ValueError("N must be a nonempty list of positive integers")
        return v

    @model_validator(mode="after")
    def _semantic(self):
        try:
            self.map.build()
            self.partition.build()
        except ConfigError:
            raise
        except ValueError as exc:
            raise ValueError(f"map/partition: {exc}") from exc
        return self

    def resolved(self) -> dict:
        """All fields with defaults materialized."""
        return self.model_dump(mode="json")

    def digest(self) -> str:
        text = json.dumps(self.resolved(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads ``1e-12`` (no dot) as a float."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(
        r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
        |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
        |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
        |[-+]?\.(?:inf|Inf|INF)
        |\.(?:nan|NaN|NAN))$""",
        re.X,
    ),
    list("-+0123456789."),
)


def _format_errors(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        if err["type"] == "extra_forbidden":
            lines.append(f"{loc}: unknown key")
        else:
            lines.append(f"{loc}: {err['msg']} (got {err.get('input')!r})")
    return "; ".join(lines)


def parse_config(text: str) -> ExperimentConfig:
    try:
        data = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("<root>: expected a mapping")
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read())
