"""Rate/intensity families for bet arrivals, their inverses, the revenue
function ``f(x) = x * lambda^{-1}(x)`` and its concave envelope."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError, ValidationError
from .numerics import ENVELOPE_POINTS, PiecewiseLinear, upper_concave_envelope

FAMILIES = ("ratio", "logratio", "exponential")


def _check_p(p):
    p_arr = np.asarray(p, dtype=float)
    if np.any(~(p_arr > 0)) or np.any(~(p_arr < 1)):
        raise DomainError("probability must lie in the open interval (0, 1)")
    return p_arr


def _check_u(u):
    u_arr = np.asarray(u, dtype=float)
    if np.any(~(u_arr >= 0)) or np.any(~(u_arr <= 1)):
        raise DomainError("price must lie in [0, 1]")
    return u_arr


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


@dataclass(frozen=True)
class IntensityModel:
    """One of the three families, scaled by ``kappa``.

    ratio:       kappa * p/(1-p) * (1-u)/u
    logratio:    kappa * log(u) / log(p)
    exponential: kappa * exp(-beta (u - p))
    """

    family: str = "ratio"
    kappa: float = 1.0
    beta: Optional[float] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValidationError(f"unknown intensity family {self.family!r}")
        if not self.kappa > 0:
            raise ValidationError("kappa must be positive")
        if self.family == "exponential":
            if self.beta is None or not self.beta > 0:
                raise ValidationError("exponential family needs beta > 0")
        elif self.beta is not None:
            raise ValidationError(f"{self.family} family takes no beta")

    @classmethod
    def from_dict(cls, data: dict) -> "IntensityModel":
        return cls(data.get("family", "ratio"), float(data.get("kappa", 1.0)),
                   None if data.get("beta") is None else float(data["beta"]))

    def to_dict(self) -> dict:
        d = {"family": self.family, "kappa": self.kappa}
        if self.beta is not None:
            d["beta"] = self.beta
        return d

    @property
    def concave_revenue(self) -> bool:
        """Whether ``f`` is concave for every ``p`` (envelope equals ``f``)."""
        return self.family in ("ratio", "exponential")

    def rate(self, p, u):
        p = _check_p(p)
        u = _check_u(u)
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.family == "ratio":
                out = self.kappa * (p / (1 - p)) * (1 - u) / u
                out = np.where(u == 0, np.inf, out)
            elif self.family == "logratio":
                out = self.kappa * np.log(u) / np.log(p)
                out = np.where(u == 0, np.inf, out)
            else:
                out = self.kappa * np.exp(-self.beta * (u - p))
        return _out(out)

    def rate_du(self, p, u):
        """Partial derivative of the rate in the price."""
        p = _check_p(p)
        u = np.asarray(u, dtype=float)
        if self.family == "ratio":
            out = -self.kappa * (p / (1 - p)) / u**2
        elif self.family == "logratio":
            out = self.kappa / (u * np.log(p))
        else:
            out = -self.beta * self.kappa * np.exp(-self.beta * (u - p))
        return _out(out)

    def rate_range(self, p):
        """Closed range ``(lambda(p, 1), lambda(p, 0))`` of attainable rates."""
        if self.family == "exponential":
            return (self.kappa * np.exp(-self.beta * (1 - p)), self.kappa * np.exp(self.beta * p))
        return (0.0, np.inf)

    def inverse_rate(self, p, x):
        p = _check_p(p)
        x = np.asarray(x, dtype=float)
        lo, hi = self.rate_range(p)
        tol = 1e-12
        if np.any(x < np.asarray(lo) * (1 - tol)) or np.any(x > np.asarray(hi) * (1 + tol)):
            raise DomainError(f"rate {x} outside the range of the {self.family} family")
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.family == "ratio":
                out = self.kappa * p / (self.kappa * p + x * (1 - p))
            elif self.family == "logratio":
                out = p ** (x / self.kappa)
            else:
                out = np.clip(p - np.log(x / self.kappa) / self.beta, 0.0, 1.0)
        return _out(out)

    def revenue(self, p, x):
        x_arr = np.asarray(x, dtype=float)
        out = x_arr * np.asarray(self.inverse_rate(p, x_arr))
        return _out(out)

    def revenue_d2(self, p, x):
        """Second derivative of the revenue function in ``x``."""
        p = _check_p(p)
        x = np.asarray(x, dtype=float)
        if self.family == "ratio":
            a, b = self.kappa * p, 1 - p
            out = -2 * a * a * b / (a + b * x) ** 3
        elif self.family == "logratio":
            lp = np.log(p) / self.kappa
            out = p ** (x / self.kappa) * lp * (2 + x * lp)
        else:
            out = -1.0 / (self.beta * x)
        return _out(out)

    def default_xmax(self, p) -> float:
        """Upper end of the working range for envelope grids."""
        if self.family == "logratio":
            return 50.0 * self.kappa / -np.log(p)
        if self.family == "ratio":
            return 50.0 * float(self.rate(p, max(float(p), 1e-3) ** 2 if p > 1e-3 else 1e-6))
        return float(self.rate_range(p)[1])


def rate(model: IntensityModel, p, u):
    return model.rate(p, u)


def inverse_rate(model: IntensityModel, p, x):
    return model.inverse_rate(p, x)


def revenue(model: IntensityModel, p, x):
    return model.revenue(p, x)


def concave_envelope(model: IntensityModel, p: float, x_grid=None) -> PiecewiseLinear:
    """Piecewise-linear least concave majorant of ``f`` sampled on ``x_grid``.

    Accuracy is limited by the grid: ``f`` is only known at the grid points.
    """
    if x_grid is None:
        lo, _ = model.rate_range(p)
        x_grid = np.linspace(lo, model.default_xmax(p), ENVELOPE_POINTS)
    x_grid = np.asarray(x_grid, dtype=float)
    if x_grid.ndim != 1 or x_grid.size < 3:
        raise ValidationError("envelope grid needs at least 3 points")
    if np.any(np.diff(x_grid) <= 0):
        raise ValidationError("envelope grid must be strictly increasing")
    return upper_concave_envelope(x_grid, np.asarray(model.revenue(p, x_grid)))
