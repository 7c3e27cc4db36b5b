"""Run configuration: one JSON document describing model, priors, sampler and paths.

Unknown keys are rejected everywhere. All randomness is derived from ``seed``
through named child streams (``generate``, ``model``, ``fit``/``chain``/j).
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .domain import Domain, GammaWeightPrior, RngStream
from .gibbs import AnnealSchedule, SamplerConfig
from .models import (
    BackgroundModel,
    DocumentModel,
    DocumentModelConfig,
    GaussianModel,
    GaussianModelConfig,
    SequenceModel,
    SequenceModelConfig,
)


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class DomainSpec(_Strict):
    lower: list[float] = Field(default_factory=lambda: [0.0, 0.0])
    upper: list[float] = Field(default_factory=lambda: [1.0, 1.0])

    @model_validator(mode="after")
    def _check(self):
        Domain(self.lower, self.upper)
        return self

    def build(self) -> Domain:
        return Domain(self.lower, self.upper)


class PriorSpec(_Strict):
    alpha: float = Field(gt=0)
    beta: float = Field(gt=0)
    nu_bar: float = Field(ge=0)

    def build(self) -> GammaWeightPrior:
        return GammaWeightPrior(self.alpha, self.beta, self.nu_bar)


class GaussianSpec(_Strict):
    iw_dof: float = 10.0
    iw_scale: list[list[float]] = Field(default_factory=lambda: [[0.014, 0.0], [0.0, 0.014]])
    location: Literal["uniform", "niw"] = "uniform"
    # niw only; None picks kappa0 so the location prior matches a uniform on the window
    niw_kappa: Optional[float] = Field(default=None, gt=0)


class SequenceSpec(_Strict):
    n_neurons: int = Field(ge=1)
    n_types: int = Field(default=1, ge=1)
    warp_values: Optional[list[float]] = None
    offset_spread: float = Field(default=1.0, ge=0)
    width: float = Field(default=0.1, gt=0)
    type_conc: float = Field(default=1.0, gt=0)
    neuron_conc: float = Field(default=1.0, gt=0)
    offset_kappa: float = Field(default=1.0, gt=0)
    width_shape: float = Field(default=2.0, gt=0)
    width_scale: float = Field(default=1.0, gt=0)


class DocumentSpec(_Strict):
    n_authors: int = Field(ge=1)
    vocab_size: int = Field(ge=1)
    time_width: float = Field(gt=0)
    author_conc: float = Field(default=1.0, gt=0)
    word_shape: float = Field(default=1.0, gt=0)
    word_rate: float = Field(default=1.0, gt=0)
    bg_word_shape: float = Field(default=1.0, gt=0)
    bg_word_rate: float = Field(default=1.0, gt=0)
    bg_author_conc: float = Field(default=1.0, gt=0)


class BackgroundSpec(_Strict):
    rate: float = Field(default=0.0, ge=0)
    rate_prior: tuple[float, float] = (1.0, 1.0)
    fixed_rate: bool = True

    @field_validator("rate_prior")
    @classmethod
    def _positive(cls, v):
        if not (v[0] > 0 and v[1] > 0):
            raise ValueError("rate_prior needs positive shape and rate")
        return v


class AnnealSpec(_Strict):
    stages: int = Field(default=20, ge=0)
    sweeps_per_stage: int = Field(default=100, ge=0)
    initial_temperature: float = Field(default=500.0, ge=1.0)

    def build(self) -> AnnealSchedule:
        return AnnealSchedule(self.stages, self.sweeps_per_stage, self.initial_temperature)


class SamplerSpec(_Strict):
    mode: Literal["nsp", "dpmm-limit"] = "nsp"
    dpmm_gamma: float = Field(default=1.0, gt=0)
    random_scan: bool = False
    resample_background: bool = True
    resample_latents: bool = True
    resample_hyper: bool = True
    resample_globals: bool = True
    nu_prior: Optional[tuple[float, float]] = None
    beta_prior: Optional[tuple[float, float]] = None
    warmup_fraction: float = Field(default=0.5, ge=0.0, lt=1.0)
    audit_every: int = Field(default=100, ge=0)
    record_latents: bool = True
    rescale_lbar: bool = False


class RunConfig(_Strict):
    model: Literal["gaussian2d", "sequence", "document"] = "gaussian2d"
    domain: DomainSpec = Field(default_factory=DomainSpec)
    prior: PriorSpec
    gaussian: GaussianSpec = Field(default_factory=GaussianSpec)
    sequence: Optional[SequenceSpec] = None
    document: Optional[DocumentSpec] = None
    background: BackgroundSpec = Field(default_factory=BackgroundSpec)
    anneal: AnnealSpec = Field(default_factory=AnnealSpec)
    sampler: SamplerSpec = Field(default_factory=SamplerSpec)
    construction: Literal["v1", "v2", "v3", "v4", "v5"] = "v1"
    truncate: bool = True
    shards: int = Field(default=1, ge=1)
    shard_axis: int = Field(default=0, ge=0)
    chains: int = Field(default=3, ge=1)
    samples: int = Field(default=1000, ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)
    data: Optional[str] = None
    mask: Optional[str] = None
    out: Optional[str] = None

    @model_validator(mode="after")
    def _check(self):
        dim = len(self.domain.lower)
        if self.model == "gaussian2d":
            if np.shape(self.gaussian.iw_scale) != (dim, dim):
                raise ValueError(f"gaussian.iw_scale must be {dim}x{dim} to match the domain")
        else:
            if dim != 1:
                raise ValueError(f"{self.model} data live on a 1-d time window")
            if getattr(self, self.model) is None:
                raise ValueError(f"model '{self.model}' needs a '{self.model}' section")
        if self.shard_axis >= dim:
            raise ValueError("shard_axis exceeds the domain dimension")
        return self

    # -- builders ------------------------------------------------------------
    def rng(self) -> RngStream:
        return RngStream(self.seed)

    def build_domain(self) -> Domain:
        return self.domain.build()

    def build_prior(self) -> GammaWeightPrior:
        return self.prior.build()

    def build_model(self):
        domain = self.build_domain()
        if self.model == "gaussian2d":
            g = self.gaussian
            if g.location == "niw" and g.niw_kappa is None:
                cfg = GaussianModelConfig.matched_to_domain(domain, g.iw_dof, g.iw_scale, "niw")
            else:
                cfg = GaussianModelConfig(g.iw_dof, np.asarray(g.iw_scale), g.niw_kappa or 0.01,
                                          domain.center, g.location)
            return GaussianModel(cfg, domain)
        if self.model == "sequence":
            s = self.sequence
            cfg = SequenceModelConfig.random(
                s.n_neurons, s.n_types, self.rng().child("model").gen, warp_values=s.warp_values,
                offset_spread=s.offset_spread, width=s.width, type_conc=s.type_conc,
                neuron_conc=s.neuron_conc, offset_kappa=s.offset_kappa, width_shape=s.width_shape,
                width_scale=s.width_scale)
            return SequenceModel(cfg, domain)
        return DocumentModel(DocumentModelConfig(**self.document.model_dump()), domain)

    def build_background(self, model) -> BackgroundModel:
        b = self.background
        return BackgroundModel(b.rate, tuple(b.rate_prior), model.default_background_marks(), b.fixed_rate)

    def build_schedule(self) -> AnnealSchedule:
        return self.anneal.build()

    def build_sampler(self, masked_measure: float = 0.0) -> SamplerConfig:
        s = self.sampler
        return SamplerConfig(
            mode=s.mode, dpmm_gamma=s.dpmm_gamma, random_scan=s.random_scan,
            resample_background=s.resample_background, resample_latents=s.resample_latents,
            resample_hyper=s.resample_hyper, resample_globals=s.resample_globals,
            nu_prior=s.nu_prior, beta_prior=s.beta_prior, warmup_fraction=s.warmup_fraction,
            audit_every=s.audit_every, masked_measure=masked_measure, record_latents=s.record_latents)


class ConfigError(ValueError):
    """Schema violation, with one ``location: message`` line per problem."""


def format_validation_error(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(v) for v in err["loc"]) or "<root>"
        lines.append(f"{loc}: {err['msg']}")
    return "\n".join(lines)


def parse_config(obj: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(obj)
    except ValidationError as exc:
        raise ConfigError(format_validation_error(exc)) from None


def load_config(path) -> RunConfig:
    text = Path(path).read_text()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise ConfigError("<root>: config must be a JSON object")
    return parse_config(obj)
