"""Run configuration (single JSON document), validated before any computation."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Dict, List, Literal, Optional, Union

from pydantic import (BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, ValidationError,
                      field_validator, model_validator)

from .errors import ConfigError


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GridConfig(_Strict):
    d: Literal[2, 3] = 2
    n: int = 64

    @field_validator("n")
    @classmethod
    def _pow2(cls, n):
        if n < 8 or n & (n - 1):
            raise ValueError("n must be a power of two >= 8")
        return n


class TimeConfig(_Strict):
    T: PositiveFloat = 1.0
    n_t: int = 33

    @field_validator("n_t")
    @classmethod
    def _odd(cls, n_t):
        if n_t < 3 or n_t % 2 == 0:
            raise ValueError("n_t must be odd and >= 3")
        return n_t


class PowerH(_Strict):
    direction: List[float]
    exponent: float = 1.0


class ModelConfig(_Strict):
    family: Literal["power", "singular", "custom-table"] = "power"
    gamma: PositiveFloat = 2.0
    rho_bar: Optional[PositiveFloat] = None
    margin: PositiveFloat = 1e-3
    h: Union[Literal["zero"], List[float], PowerH] = "zero"
    table: Optional[str] = None

    @model_validator(mode="after")
    def _family_fields(self):
        if self.family == "singular" and self.rho_bar is None:
            raise ValueError("family 'singular' needs rho_bar")
        if self.family == "custom-table" and self.table is None:
            raise ValueError("family 'custom-table' needs a table path")
        return self

    def as_model_dict(self) -> dict:
        out = self.model_dump()
        if isinstance(self.h, PowerH):
            out["h"] = self.h.model_dump()
        return out


class DataConfig(_Strict):
    scenario: Optional[Literal["static-admissible", "two-mode-transfer", "incompatible-demo"]] = None
    rho0: Optional[str] = None
    u0: Optional[str] = None
    rhoT: Optional[str] = None
    uT: Optional[str] = None

    @model_validator(mode="after")
    def _one_source(self):
        files = [self.rho0, self.u0, self.rhoT, self.uT]
        if self.scenario is None and any(f is None for f in files):
            raise ValueError("give a scenario or all four field files rho0, u0, rhoT, uT")
        if self.scenario is not None and any(f is not None for f in files):
            raise ValueError("scenario and field files are mutually exclusive")
        return self


class ShapesConfig(_Strict):
    delta0: Optional[PositiveFloat] = None
    s0: Optional[PositiveFloat] = None
    sT: Optional[PositiveFloat] = None
    theta: float = Field(0.05, gt=0.0, lt=1.0)


class ScheduleConfig(_Strict):
    mode: Literal["theorem1", "admissible"] = "theorem1"
    eta: PositiveFloat = 1.0
    lambda0: Optional[PositiveFloat] = None
    tau: float = Field(0.0, ge=0.0)
    substeps: PositiveInt = 8
    lag: int = Field(1, ge=0)


class Tolerances(_Strict):
    mass: PositiveFloat = 1e-10
    momentum: PositiveFloat = 1e-8
    drift: PositiveFloat = 1e-8
    continuity: PositiveFloat = 1e-10
    flux: PositiveFloat = 1e-9
    weak: PositiveFloat = 1e-9
    solenoidal: PositiveFloat = 1e-12
    trace: PositiveFloat = 1e-12
    certificate: PositiveFloat = 1e-10
    energy_mono: PositiveFloat = 1e-10
    identity: PositiveFloat = 1e-8


class Check1DConfig(_Strict):
    n: int = 256
    amplitude: PositiveFloat = 0.3
    defects: List[float] = [1e-6, 2e-6, 4e-6]
    viscous_n: int = 64


class RunConfig(_Strict):
    grid: GridConfig = GridConfig()
    time: TimeConfig = TimeConfig()
    model: ModelConfig = ModelConfig()
    data: DataConfig = DataConfig(scenario="two-mode-transfer")
    shapes: ShapesConfig = ShapesConfig()
    schedule: ScheduleConfig = ScheduleConfig()
    tolerances: Tolerances = Tolerances()
    check1d: Check1DConfig = Check1DConfig()
    output: Optional[str] = None

    @model_validator(mode="after")
    def _windows(self):
        s0, sT, T = self.shapes.s0, self.shapes.sT, self.time.T
        a = s0 if s0 is not None else 0.25 * T
        b = sT if sT is not None else 0.75 * T
        if not (0 < a < b < T):
            raise ValueError("need 0 < s0 < sT < T, got s0=%g sT=%g T=%g" % (a, b, T))
        if self.schedule.tau >= T:
            raise ValueError("membership window start tau must be < T")
        return self


def _flatten_errors(exc: ValidationError) -> str:
    return "; ".join("%s: %s" % (".".join(str(p) for p in e["loc"]) or "<root>", e["msg"])
                     for e in exc.errors())


def parse_config(doc: Dict, base: Path = None) -> RunConfig:
    try:
        cfg = RunConfig.model_validate(doc)
    except ValidationError as exc:
        raise ConfigError("invalid configuration: " + _flatten_errors(exc)) from None
    if base is not None:
        for name in ("rho0", "u0", "rhoT", "uT"):
            p = getattr(cfg.data, name)
            if p is not None and not Path(p).is_absolute():
                setattr(cfg.data, name, str(base / p))
        if cfg.model.table is not None and not Path(cfg.model.table).is_absolute():
            cfg.model.table = str(base / cfg.model.table)
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError("cannot read config %s: %s" % (path, exc)) from None
    except json.JSONDecodeError as exc:
        raise ConfigError("config %s is not valid JSON at byte %d: %s" % (path, exc.pos, exc.msg)) from None
    if not isinstance(doc, dict):
        raise ConfigError("config %s must hold a JSON object" % path)
    return parse_config(doc, path.parent)
