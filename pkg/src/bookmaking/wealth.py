"""Risk-neutral (expected-wealth) pricing: closed-form prices, the
pointwise maximiser, the closed-form value function, and pricing policies
shared with the simulators."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import BracketError, DomainError, NumericalError, PolicyError, ValidationError
from .intensity import IntensityModel, _check_p
from .numerics import find_root, golden_max

DELTA = 1e-9
E_INV = math.exp(-1.0)
_P_HI = np.nextafter(1.0, 0.0)


# -- policies -----------------------------------------------------------------

class PricingPolicy:
    """Maps ``(t, p, q)`` to a price vector; arrays broadcast over paths.

    ``rate_bound(intensity)`` returns a uniform bound on the induced
    intensity when one is known, else ``None``.
    """

    name = "policy"

    def __call__(self, t, p, q):
        raise NotImplementedError

    def rates(self, intensity: IntensityModel, t, p, q):
        u = np.asarray(self(t, p, q), dtype=float)
        p = np.asarray(p, dtype=float)
        if np.any(u <= 0) and intensity.family != "exponential":
            raise PolicyError("price 0 gives an infinite arrival rate")
        pc = np.clip(p, 1e-300, _P_HI)
        return np.asarray(intensity.rate(pc, np.clip(u, 0.0, 1.0)))

    def rate_bound(self, intensity: IntensityModel) -> Optional[float]:
        return None

    def to_dict(self) -> dict:
        return {"kind": self.name}


@dataclass(frozen=True)
class StaticPolicy(PricingPolicy):
    u: np.ndarray
    name = "static"

    def __post_init__(self):
        u = np.atleast_1d(np.asarray(self.u, dtype=float))
        if np.any(u < 0) or np.any(u > 1):
            raise ValidationError("static prices must lie in [0, 1]")
        object.__setattr__(self, "u", u)

    def __call__(self, t, p, q):
        return np.broadcast_to(self.u, np.shape(p)).copy()

    def rate_bound(self, intensity):
        if intensity.family == "exponential":
            return float(intensity.kappa * np.exp(intensity.beta * (1 - self.u.min())))
        return None

    def to_dict(self):
        return {"kind": self.name, "u": self.u.tolist()}


@dataclass(frozen=True)
class SqrtFeedback(PricingPolicy):
    """``u = sqrt(p)``, optimal for the ratio family."""

    name = "sqrt"

    def __call__(self, t, p, q):
        return np.sqrt(np.asarray(p, dtype=float))

    def rates(self, intensity, t, p, q):
        if intensity.family != "ratio":
            return super().rates(intensity, t, p, q)
        s = np.sqrt(np.asarray(p, dtype=float))
        # kappa p/(1-p) (1-s)/s simplified; finite on all of [0, 1]
        return intensity.kappa * s / (1.0 + s)

    def rate_bound(self, intensity):
        return 0.5 * intensity.kappa if intensity.family == "ratio" else None


@dataclass(frozen=True)
class LogRatioRootFeedback(PricingPolicy):
    """``u = r(p)`` with ``r (1 + log r) = p``, optimal for the log-ratio family."""

    name = "logratio_root"

    def __call__(self, t, p, q):
        p = np.asarray(p, dtype=float)
        inner = np.clip(p, 1e-300, _P_HI)
        out = optimal_price_logratio(inner)
        return np.where(p >= 1, 1.0, np.where(p <= 0, E_INV, out))

    def rates(self, intensity, t, p, q):
        if intensity.family != "logratio":
            return super().rates(intensity, t, p, q)
        p = np.asarray(p, dtype=float)
        inner = np.clip(p, 1e-300, _P_HI)
        r = np.asarray(optimal_price_logratio(inner))
        lam = intensity.kappa * np.log(r) / np.log(inner)
        return np.where(p >= 1, 0.5 * intensity.kappa, np.where(p <= 0, 0.0, lam))

    def rate_bound(self, intensity):
        return 0.5 * intensity.kappa if intensity.family == "logratio" else None


@dataclass(frozen=True)
class TwoPiece(PricingPolicy):
    """Charge ``v_i`` on ``[t0, t0 + rho_i tau)`` and ``w_i`` afterwards."""

    v: np.ndarray
    w: np.ndarray
    rho: np.ndarray
    tau: float
    t0: float = 0.0
    name = "two_piece"

    def __post_init__(self):
        v, w, rho = (np.atleast_1d(np.asarray(a, dtype=float)) for a in (self.v, self.w, self.rho))
        if not (v.shape == w.shape == rho.shape):
            raise ValidationError("v, w and rho must have equal length")
        for a in (v, w):
            if np.any(a < 0) or np.any(a > 1):
                raise ValidationError("two-piece prices must lie in [0, 1]")
        if np.any(rho < 0) or np.any(rho > 1):
            raise ValidationError("rho must lie in [0, 1]")
        if not self.tau > 0:
            raise ValidationError("tau must be positive")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "rho", rho)

    @property
    def is_static(self) -> bool:
        return bool(np.all((self.rho == 1) | (self.v == self.w)))

    def __call__(self, t, p, q):
        t = np.asarray(t, dtype=float)[..., None] if np.ndim(t) else t
        first = (t - self.t0) < self.rho * self.tau
        out = np.where(first, self.v, self.w)
        return np.broadcast_to(out, np.broadcast_shapes(np.shape(out), np.shape(p))).copy()

    def to_dict(self):
        return {"kind": self.name, "v": self.v.tolist(), "w": self.w.tolist(),
                "rho": self.rho.tolist(), "tau": self.tau, "t0": self.t0}


# -- closed forms ---------------------------------------------------------------

def optimal_price_ratio(p):
    """``u* = sqrt(p)`` for the ratio family."""
    p = _check_p(p)
    out = np.sqrt(p)
    return float(out) if out.ndim == 0 else out


def optimal_price_logratio(p, tol: float = 1e-13, maxiter: int = 100):
    """Root ``r`` in ``(1/e, 1)`` of ``r (1 + log r) = p``.

    ``g(r) = r(1 + log r) - p`` is increasing and convex on ``(1/e, 1)``,
    so Newton started at ``r = 1`` decreases monotonically to the root and
    never leaves the bracket ``[root, 1]``.
    """
    p = _check_p(p)
    r = np.ones_like(p)
    for _ in range(maxiter):
        g = r * (1.0 + np.log(r)) - p
        if np.all(np.abs(g) <= tol):
            break
        r = np.maximum(r - g / (2.0 + np.log(r)), E_INV)
    else:
        raise NumericalError("optimal_price_logratio", "Newton did not converge",
                             residual=float(np.max(np.abs(g))))
    return float(r) if r.ndim == 0 else r


def _margin(intensity: IntensityModel, p: float):
    return lambda u: float(intensity.rate(p, u)) * (u - p)


def _margin_du(intensity: IntensityModel, p: float):
    return lambda u: float(intensity.rate_du(p, u)) * (u - p) + float(intensity.rate(p, u))


def _pointwise_scalar(intensity: IntensityModel, p: float) -> float:
    f = _margin(intensity, p)
    u = golden_max(f, DELTA, 1.0 - DELTA)
    # golden search resolves u only to ~sqrt(eps); polish on the first-order condition
    g = _margin_du(intensity, p)
    for width in (1e-6, 1e-4, 1e-2):
        lo, hi = max(DELTA, u - width), min(1.0 - DELTA, u + width)
        if g(lo) > 0 > g(hi):
            try:
                return find_root(g, (lo, hi), tol=1e-15)
            except (BracketError, NumericalError):
                break
    return u


def pointwise_optimize(intensity: IntensityModel, p):
    """Coordinatewise maximiser of ``sum_i lambda_i(p_i, u_i)(u_i - p_i)`` on ``[delta, 1-delta]``."""
    p = _check_p(p)
    flat = np.array([_pointwise_scalar(intensity, float(pi)) for pi in p.ravel()])
    out = flat.reshape(p.shape)
    return float(out) if out.ndim == 0 else out


def wealth_value_constantp(t, x, p, q, T, kappa: float = 1.0):
    """Value under the ratio family with constant probabilities:
    ``x - p.q + kappa (T-t) sum_i p_i (1 - sqrt p_i)^2 / (1 - p_i)``."""
    if t > T:
        raise DomainError(f"t={t} exceeds horizon {T}")
    p = np.atleast_1d(_check_p(p))
    q = np.atleast_1d(np.asarray(q, dtype=float))
    if q.shape != p.shape:
        raise ValidationError("p and q must have equal length")
    rate = np.sum(p * (1 - np.sqrt(p)) ** 2 / (1 - p))
    return float(x - p @ q + kappa * (T - t) * rate)


@dataclass(frozen=True)
class Method3Result:
    rate: np.ndarray  # Lambda*
    price: np.ndarray  # u-hat*


def _logratio_lambda(p: float) -> float:
    """Unit-scale root ``s`` of ``p^s (1 + s log p) = p`` on ``(0, -1/log p)``."""
    lp = math.log(p)
    phi = lambda s: p**s * (1.0 + s * lp) - p
    dphi = lambda s: p**s * lp * (2.0 + s * lp)
    return find_root(phi, (0.0, -1.0 / lp), tol=1e-15, fprime=dphi)


def method3_consistency(p, intensity: Optional[IntensityModel] = None) -> Method3Result:
    """Optimal rates ``Lambda*`` from maximising ``f(L) - p L`` and the prices they imply."""
    intensity = intensity or IntensityModel("ratio")
    p = np.atleast_1d(_check_p(p))
    k = intensity.kappa
    if intensity.family == "ratio":
        lam = k * (p / (1 - p)) * (1 / np.sqrt(p) - 1)
    elif intensity.family == "logratio":
        lam = k * np.array([_logratio_lambda(float(pi)) for pi in p])
    else:
        # f(L) - pL is maximised where f'(L) = p, i.e. u - 1/beta = p
        lam = np.full_like(p, k / math.e)
    price = np.asarray(intensity.inverse_rate(p, lam), dtype=float)
    return Method3Result(np.atleast_1d(lam), np.atleast_1d(price))
