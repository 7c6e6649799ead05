"""Validated experiment configuration shared by the CLI and ``run CONFIG``."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator
from pydantic import ValidationError as PydanticValidationError

from .errors import ConfigurationError


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class IntensityBlock(_Strict):
    family: Literal["ratio", "logratio", "exponential"] = "ratio"
    kappa: float = Field(1.0, gt=0)
    beta: Optional[float] = Field(None, gt=0)

    @model_validator(mode="after")
    def _beta(self):
        if self.family == "exponential" and self.beta is None:
            raise ValueError("exponential family needs beta")
        return self


class MarketBlock(_Strict):
    kind: Literal["constant", "goals", "spread"] = "constant"
    p: list[float] = [0.5, 0.5]
    exclusive: bool = True
    horizon: float = Field(1.0, gt=0)
    # goals model
    rate: float = Field(2.5, gt=0)
    goals: list[int] = [1, 2, 3]
    at_least: bool = True
    # spread model
    mu: float = 2.33
    sigma: float = Field(10.0, gt=0)
    thresholds: list[float] = [0.0, 3.0]


class PolicyBlock(_Strict):
    kind: Literal["sqrt", "logratio", "static"] = "sqrt"
    u: Optional[list[float]] = None

    @model_validator(mode="after")
    def _u(self):
        if self.kind == "static" and not self.u:
            raise ValueError("static policy needs u")
        return self


class UtilityBlock(_Strict):
    kind: Literal["identity", "exponential"] = "exponential"
    gamma: float = Field(2.0, gt=0)


class PriceParams(_Strict):
    p: list[float] = [0.25, 0.5, 0.75]
    intensity: IntensityBlock = IntensityBlock()


class SimulateParams(_Strict):
    market: MarketBlock = MarketBlock()
    intensity: IntensityBlock = IntensityBlock()
    policy: PolicyBlock = PolicyBlock()
    arrival: Literal["poisson", "continuous"] = "poisson"


class CoinParams(_Strict):
    p: float = Field(0.5, gt=0.0, lt=1.0)
    horizons: list[float] = [1.0, 2.0, 5.0, 10.0]
    monte_carlo: bool = False

    @model_validator(mode="after")
    def _h(self):
        if not self.horizons or any(h <= 0 for h in self.horizons):
            raise ValueError("horizons must be positive")
        return self


class NbaParams(_Strict):
    mu: float = 2.33
    sigma: float = Field(10.0, gt=0)
    T: float = Field(1.0, gt=0)
    kappa: float = Field(10_000.0, gt=0)
    thresholds: list[float] = [0.0, 3.0]


class ExpStaticParams(_Strict):
    structure: Literal["independent", "partition"] = "partition"
    p: list[float] = [0.5, 1 / 3, 1 / 6]
    q: Optional[list[float]] = None
    tau: float = Field(1.0, gt=0)
    kappa: float = Field(1.0, gt=0)
    utility: UtilityBlock = UtilityBlock()


class ExpDynParams(_Strict):
    p: list[float] = [0.6, 0.4]
    q: list[int] = [0, 0]
    tau: float = Field(1.0, gt=0)
    beta: float = Field(10.0, gt=0)
    kappa: float = Field(1.0, gt=0)
    utility: UtilityBlock = UtilityBlock()
    caps: Optional[list[int]] = None
    x: float = 0.0


class FiguresParams(_Strict):
    only: Optional[list[str]] = None


PARAMS = {"price": PriceParams, "simulate": SimulateParams, "coin": CoinParams, "nba": NbaParams,
          "expstatic": ExpStaticParams, "expdyn": ExpDynParams, "figures": FiguresParams}


class ExperimentConfig(_Strict):
    experiment: Literal["price", "simulate", "coin", "nba", "expstatic", "expdyn", "figures"]
    seed: int = Field(0, ge=0, lt=2**64)
    paths: int = Field(1000, ge=1)
    dt: Optional[float] = Field(None, gt=0)
    threads: int = Field(1, ge=1)
    output: Optional[str] = None
    params: dict = {}


def _flatten(err: PydanticValidationError, prefix=()) -> str:
    return "; ".join(f"{'.'.join(str(x) for x in prefix + tuple(e['loc'])) or 'config'}: {e['msg']}"
                     for e in err.errors())


def parse_config(data: dict):
    """Validate a config mapping; returns ``(config, typed_params)``."""
    try:
        cfg = ExperimentConfig.model_validate(data)
    except PydanticValidationError as e:
        raise ConfigurationError(_flatten(e)) from None
    try:
        params = PARAMS[cfg.experiment].model_validate(cfg.params)
    except PydanticValidationError as e:
        raise ConfigurationError(_flatten(e, ("params",))) from None
    return cfg, params


def load_config(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigurationError(f"cannot read config {path}: {e.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"config {path} is not valid JSON: {e.msg} at line {e.lineno}") from None
    if not isinstance(data, dict):
        raise ConfigurationError("config must be a JSON object")
    return parse_config(data)
