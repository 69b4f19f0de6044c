"""Run configuration: YAML files validated with pydantic.

Example::

    problem:
      generator: heat2d        # heat2d | stochastic_heat | advection | fem1d | mass_matrix
      nx: 5
      gain: false
    scheme:
      composition: F1F2
      kind: strang
      n_steps: 64
    study:
      reference: oracle        # oracle | self-16x
      h_grid: [0.03125, 0.015625, 0.0078125]
    output:
      directory: out

Generator parameters sit next to ``generator`` and are checked against the
generator's signature. Unknown keys anywhere are rejected.
"""
from __future__ import annotations

import hashlib
import inspect
import json
import os
from typing import List, Literal, Optional, Tuple

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .exceptions import ConfigurationError
from .problems import GENERATORS, problem_from_recipe
from .schemes import COMPOSITIONS, SchemeSpec


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ProblemSection(BaseModel):
    model_config = ConfigDict(extra="allow", frozen=True)

    generator: str

    @model_validator(mode="after")
    def _known_params(self):
        if self.generator not in GENERATORS:
            raise ValueError(f"unknown generator {self.generator!r}; choose from {sorted(GENERATORS)}")
        sig = inspect.signature(GENERATORS[self.generator])
        extra = dict(self.model_extra or {})
        unknown = sorted(set(extra) - set(sig.parameters))
        if unknown:
            raise ValueError(f"unknown parameter(s) {unknown} for generator {self.generator!r}")
        missing = [name for name, p in sig.parameters.items()
                   if p.default is inspect.Parameter.empty and name not in extra]
        if missing:
            raise ValueError(f"generator {self.generator!r} needs {missing}")
        return self

    @property
    def params(self):
        return dict(self.model_extra or {})

    def recipe(self):
        return dict(generator=self.generator, **self.params)


class SchemeSection(_Strict):
    composition: Literal[COMPOSITIONS] = "F1F2"
    kind: Literal["strang", "lie"] = "strang"
    n_steps: int = Field(100, ge=1)
    compression_tol: float = Field(1e-16, ge=0)
    leja_tol: float = Field(1e-16, gt=0)
    quad_nodes: int = Field(14, ge=2)

    @field_validator("kind", mode="before")
    @classmethod
    def _lower(cls, v):
        return v.lower() if isinstance(v, str) else v

    def spec(self):
        return SchemeSpec(**self.model_dump())


class StudySection(_Strict):
    h_grid: Optional[List[float]] = None
    reference: Literal["oracle", "self-16x"] = "oracle"
    schemes: Optional[List[SchemeSection]] = None
    threads: List[int] = [1]
    sizes: List[Tuple[int, int]] = [(22500, 30)]
    repetitions: int = Field(5, ge=5)
    warmup: int = Field(1, ge=1)
    instrumented_solve: bool = True

    @field_validator("h_grid")
    @classmethod
    def _grid(cls, v):
        if v is not None:
            if len(v) < 3:
                raise ValueError("h_grid needs at least 3 entries")
            if any(not h > 0 for h in v):
                raise ValueError("h_grid entries must be positive")
        return v

    @field_validator("threads")
    @classmethod
    def _threads(cls, v):
        if not v or any(t < 1 for t in v):
            raise ValueError("threads must be a nonempty list of positive integers")
        return v

    @field_validator("sizes")
    @classmethod
    def _sizes(cls, v):
        if any(n < 2 or r < 0 for n, r in v):
            raise ValueError("sizes are (n >= 2, rank >= 0) pairs")
        return v


class OutputSection(_Strict):
    directory: str = "out"
    formats: List[Literal["csv"]] = ["csv"]


class VerifySection(_Strict):
    """Overrides for the acceptance suite (used for negative controls)."""

    only: Optional[List[str]] = None
    compression_tol: float = Field(1e-16, ge=0)
    leja_tol: float = Field(1e-16, gt=0)
    quad_nodes: int = Field(14, ge=2)


class RunConfig(_Strict):
    problem: Optional[ProblemSection] = None
    scheme: SchemeSection = SchemeSection()
    study: StudySection = StudySection()
    output: OutputSection = OutputSection()
    verify: VerifySection = VerifySection()

    def schemes(self):
        """Scheme specs of a study, defaulting to the ``scheme`` section."""
        sections = self.study.schemes or [self.scheme]
        return [s.spec() for s in sections]

    def build_problem(self):
        if self.problem is None:
            raise ConfigurationError("config has no 'problem' section")
        return problem_from_recipe(self.problem.recipe())

    def canonical(self):
        """Compact JSON of everything that affects results (``output`` excluded)."""
        data = self.model_dump(mode="json", exclude={"output"})
        return json.dumps(data, sort_keys=True, separators=(",", ":"))

    def digest(self):
        """SHA-256 of :meth:`canonical`; configs differing only in output share it."""
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def with_overrides(self, seed=None, out=None):
        data = self.model_dump()
        if seed is not None:
            if self.problem is None:
                raise ConfigurationError("--seed needs a 'problem' section")
            if "seed" not in inspect.signature(GENERATORS[self.problem.generator]).parameters:
                raise ConfigurationError(f"generator {self.problem.generator!r} takes no seed")
            data["problem"]["seed"] = seed
        if out is not None:
            data["output"]["directory"] = os.fspath(out)
        return parse_config(data)


def _format_errors(err):
    lines = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{loc}: {e['msg']}")
    return "; ".join(lines)


def parse_config(data, source="<config>"):
    """Validate a mapping into a :class:`RunConfig`."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigurationError(f"{source}: top level must be a mapping")
    try:
        return RunConfig.model_validate(data)
    except ValidationError as err:
        raise ConfigurationError(f"{source}: {_format_errors(err)}") from None


def load_config(path):
    path = os.fspath(path)
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as err:
        raise ConfigurationError(f"{path}: cannot read config ({err.strerror})") from err
    except yaml.YAMLError as err:
        raise ConfigurationError(f"{path}: invalid YAML ({err})") from err
    return parse_config(data, path)


def dump_config(config, path=None):
    """YAML text of ``config``; written to ``path`` if given."""
    text = yaml.safe_dump(config.model_dump(mode="json", exclude_none=True), sort_keys=False)
    if path is not None:
        with open(os.fspath(path), "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


def config_for_problem(problem, scheme=None, **sections):
    """Config whose problem section rebuilds ``problem`` from its recipe."""
    if not problem.recipe:
        raise ConfigurationError("problem has no generator recipe and cannot be serialized")
    data = dict(problem=dict(problem.recipe), **sections)
    if scheme is not None:
        data["scheme"] = dict(composition=scheme.composition, kind=scheme.kind,
                              n_steps=scheme.n_steps, compression_tol=scheme.compression_tol,
                              leja_tol=scheme.leja_tol, quad_nodes=scheme.quad_nodes)
    return parse_config(data)
