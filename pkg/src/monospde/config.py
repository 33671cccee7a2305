"""Run configuration: TOML files validated against a strict schema."""

from __future__ import annotations

import dataclasses
from importlib import resources
from pathlib import Path
from typing import Literal

import tomli
import tomli_w
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .coefficients import (
    AlmostAutomorphic,
    Additive,
    Constant,
    Coupling,
    LinearMultiplicative,
    Periodic,
    PorousMedia,
    QuasiPeriodic,
    ReactionDiffusion,
    TimeModulation,
    modulation_from_dict,
)
from .errors import ConfigurationError
from .gelfand import make_grid
from .recurrence import KINDS, ExperimentPlan
from .sde import IntegratorConfig, NewtonBacktracking, PicardRelaxation

PRESETS = ("reaction-diffusion", "porous-media")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class Modulation(_Strict):
    kind: Literal["Constant", "Periodic", "QuasiPeriodic", "AlmostAutomorphic"] = "Constant"
    value: float | None = None
    period_length: float | None = None
    mean: float | None = None
    cos_coeffs: list[float] | None = None
    sin_coeffs: list[float] | None = None
    frequencies: list[float] | None = None
    amplitudes: list[float] | None = None
    phases: list[float] | None = None
    offset: float | None = None
    beta: float | None = None
    shift: float = 0.0

    def build(self) -> TimeModulation:
        d = {k: v for k, v in self.model_dump().items() if v is not None}
        return modulation_from_dict(d)


class RunBlock(_Strict):
    command: Literal["probe", "simulate", "experiment"] = "experiment"
    experiment: str = "Stability"
    seed: int = Field(0, ge=0, lt=2**64)
    out: str = "monospde-out"
    formats: list[Literal["json", "csv"]] = ["json", "csv"]
    threads: int = Field(1, ge=1)

    @field_validator("experiment")
    @classmethod
    def _known(cls, v):
        if v not in KINDS:
            raise ValueError(f"unknown experiment {v!r}; expected one of {', '.join(KINDS)}")
        return v


class GridBlock(_Strict):
    length: float = Field(1.0, gt=0)
    num_modes: int = Field(32, gt=0)
    num_points: int | None = Field(None, gt=0)


class DriftBlock(_Strict):
    kind: Literal["ReactionDiffusion", "PorousMedia"] = "ReactionDiffusion"
    p: float = 4.0
    a: float = Field(1.0, gt=0)
    phi: Modulation = Modulation()


class CouplingBlock(_Strict):
    phi: Modulation
    direction: list[float]


class DiffusionBlock(_Strict):
    amplitudes: list[float | Modulation] | None = None
    scale: float = 0.1
    decay: float = 2.0
    num_noise: int = Field(16, gt=0)
    modulation: Modulation | None = None
    couplings: list[CouplingBlock] = []


class IntegratorBlock(_Strict):
    dt: float = Field(1e-3, gt=0)
    solver: Literal["NewtonBacktracking", "PicardRelaxation"] = "NewtonBacktracking"
    max_iter: int | None = Field(None, gt=0)
    residual_tol: float = Field(1e-10, gt=0)
    damping: float = Field(1.0, gt=0, le=1)
    scheme: Literal["FullyImplicit", "SemiImplicit"] = "FullyImplicit"
    max_halvings: int = Field(4, ge=0)


class EnsembleBlock(_Strict):
    n_paths: int = Field(256, gt=0)
    path_offset: int = Field(0, ge=0)


class ExperimentBlock(_Strict):
    t_start: float = 0.0
    t_end: float = 1.0
    n_outputs: int = Field(21, ge=2)
    output_times: list[float] | None = None
    tolerance: float = Field(1.3, ge=1)
    init_norm: float = Field(1.0, ge=0)
    lam: float | None = None
    r: float | None = None
    eta: float | None = None
    M1: float | None = None
    burn_in: float | None = None
    burn_in_start: float = Field(1.0, gt=0)
    burn_in_max: float = Field(64.0, gt=0)
    n_list: list[int] = [0, 1, 2, 3, 4, 5, 6]
    perturbation: Literal["reaction", "shift"] = "reaction"
    n_sequence: list[int] = [1, 2, 4, 8, 16, 32, 64]
    period: float | None = None
    require_mismatch: bool | None = None
    n_times: int = Field(5, ge=2)
    time_spacing: float = Field(0.5, gt=0)
    d_proj: int | None = Field(None, ge=1)
    n_null: int = Field(200, ge=10)
    taus: list[float] = []


class ProbeBlock(_Strict):
    n_samples: int = Field(10000, ge=2)
    h5_orders: list[float] = [1.0, 10.0, 100.0]
    claimed: dict[str, float] = {}


class RunConfig(_Strict):
    run: RunBlock = RunBlock()
    grid: GridBlock = GridBlock()
    drift: DriftBlock = DriftBlock()
    diffusion: DiffusionBlock = DiffusionBlock()
    integrator: IntegratorBlock = IntegratorBlock()
    ensemble: EnsembleBlock = EnsembleBlock()
    experiment: ExperimentBlock = ExperimentBlock()
    probe: ProbeBlock = ProbeBlock()

    @model_validator(mode="after")
    def _consistent(self):
        if self.grid.num_points is not None and self.grid.num_points < 2 * self.grid.num_modes:
            raise ValueError("grid.num_points must be at least 2 * grid.num_modes")
        n_noise = len(self.diffusion.amplitudes) if self.diffusion.amplitudes else self.diffusion.num_noise
        if n_noise > self.grid.num_modes:
            raise ValueError("more noise modes than spectral modes")
        if self.diffusion.couplings and self.drift.kind != "ReactionDiffusion":
            raise ValueError("multiplicative noise is supported for the reaction-diffusion drift only")
        for c in self.diffusion.couplings:
            if len(c.direction) != n_noise:
                raise ValueError("coupling direction length must equal the number of noise modes")
        return self

    # ------------------------------------------------------------------
    def build_grid(self):
        return make_grid(self.grid.length, self.grid.num_modes, self.grid.num_points)

    def build_drift(self, grid=None):
        grid = grid or self.build_grid()
        phi = self.drift.phi.build()
        if self.drift.kind == "ReactionDiffusion":
            return ReactionDiffusion(grid, self.drift.p, phi, a=self.drift.a)
        return PorousMedia(grid, self.drift.p, phi)

    def build_diffusion(self, drift):
        grid = drift.grid
        d = self.diffusion
        if d.amplitudes is not None:
            amps = tuple(a.build() if isinstance(a, Modulation) else float(a) for a in d.amplitudes)
        else:
            base = [d.scale * k ** (-d.decay) for k in range(1, d.num_noise + 1)]
            if d.modulation is None:
                amps = tuple(base)
            else:
                m = d.modulation.build()
                amps = tuple(scale_modulation(m, b) for b in base)
        add = Additive(grid, amps, drift.pivot)
        if not d.couplings:
            return add
        cps = tuple(Coupling(c.phi.build(), c.direction) for c in d.couplings)
        return LinearMultiplicative(add, cps)

    def build_integrator(self) -> IntegratorConfig:
        i = self.integrator
        if i.solver == "NewtonBacktracking":
            solver = NewtonBacktracking(max_iter=i.max_iter or 50, residual_tol=i.residual_tol)
        else:
            solver = PicardRelaxation(damping=i.damping, max_iter=i.max_iter or 500, residual_tol=i.residual_tol)
        return IntegratorConfig(i.dt, solver, i.scheme, i.max_halvings)

    def build_plan(self, kind: str | None = None) -> ExperimentPlan:
        drift = self.build_drift()
        diff = self.build_diffusion(drift)
        e = self.experiment
        fields = e.model_dump()
        for key in ("n_list", "n_sequence", "taus"):
            fields[key] = tuple(fields[key])
        if fields["output_times"] is not None:
            fields["output_times"] = tuple(fields["output_times"])
        return ExperimentPlan(
            kind=kind or self.run.experiment,
            drift=drift,
            diff=diff,
            cfg=self.build_integrator(),
            n_paths=self.ensemble.n_paths,
            path_offset=self.ensemble.path_offset,
            seed=self.run.seed,
            threads=self.run.threads,
            **fields,
        )

    def to_toml(self) -> str:
        return tomli_w.dumps(self.model_dump(exclude_none=True))


def scale_modulation(m: TimeModulation, c: float) -> TimeModulation:
    """``c * m(t)`` for the modulation kinds that are linear in their parameters."""
    if isinstance(m, Constant):
        return Constant(c * m.value, m.shift)
    if isinstance(m, Periodic):
        return dataclasses.replace(m, mean=c * m.mean, cos_coeffs=tuple(c * x for x in m.cos_coeffs),
                                   sin_coeffs=tuple(c * x for x in m.sin_coeffs))
    if isinstance(m, QuasiPeriodic):
        return dataclasses.replace(m, offset=c * m.offset, amplitudes=tuple(c * x for x in m.amplitudes))
    if isinstance(m, AlmostAutomorphic):
        return dataclasses.replace(m, offset=c * m.offset, beta=c * m.beta)
    raise ConfigurationError(f"cannot scale modulation {type(m).__name__}")


def _format_error(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(x) for x in err["loc"])
        lines.append(f"{loc}: {err['msg']}")
    return "; ".join(lines)


def parse_config(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigurationError(f"invalid configuration: {_format_error(exc)}") from None


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise ConfigurationError(f"unknown preset {name!r}; expected one of {', '.join(PRESETS)}")
    return resources.files("monospde.presets").joinpath(f"{name}.toml").read_text()


def load_config(path=None, preset: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Load a preset and/or a TOML file; keys in the file override the preset."""
    data: dict = {}
    try:
        if preset is not None:
            data = tomli.loads(preset_text(preset))
        if path is not None:
            data = _merge(data, tomli.loads(Path(path).read_text()))
    except tomli.TOMLDecodeError as exc:
        raise ConfigurationError(f"malformed TOML: {exc}") from None
    except OSError as exc:
        raise ConfigurationError(f"cannot read configuration: {exc}") from None
    if overrides:
        data = _merge(data, overrides)
    return parse_config(data)


def _merge(base: dict, new: dict) -> dict:
    out = dict(base)
    for k, v in new.items():
        old = out.get(k)
        if isinstance(v, dict) and isinstance(old, dict) and v.get("kind", old.get("kind")) == old.get("kind"):
            out[k] = _merge(old, v)
        else:
            out[k] = v
    return out
