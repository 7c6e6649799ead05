"""Shared numerical kernels: bracketed roots, 1-D maximisation, the normal
CDF, upper concave envelopes and series tail bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import gammainc, gammaln, ndtr

from .errors import BracketError, NumericalError, ValidationError

ROOT_TOL = 1e-12
ENVELOPE_POINTS = 512
MAX_ROOT_ITER = 200

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class Bracket:
    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ValidationError("bracket endpoints must be finite")
        if not self.lo < self.hi:
            raise ValidationError(f"bracket requires lo < hi, got [{self.lo}, {self.hi}]")


def find_root(
    f: Callable[[float], float],
    bracket,
    tol: float = ROOT_TOL,
    fprime: Optional[Callable[[float], float]] = None,
    maxiter: int = MAX_ROOT_ITER,
) -> float:
    """Root of ``f`` inside ``bracket`` by safeguarded Newton/bisection.

    Every iterate stays inside the current bracket, and the bracket shrinks
    monotonically.  Stops once ``|f(x)| <= tol`` or the bracket has
    collapsed to neighbouring floats; in the latter case the endpoint with
    the smaller residual is returned.
    """
    if not isinstance(bracket, Bracket):
        bracket = Bracket(*bracket)
    lo, hi = bracket.lo, bracket.hi
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if math.isnan(flo) or math.isnan(fhi) or flo * fhi > 0:
        raise BracketError("find_root", f"no sign change on [{lo}, {hi}]")

    x = 0.5 * (lo + hi)
    for _ in range(maxiter):
        fx = f(x)
        if abs(fx) <= tol:
            return x
        if (fx < 0) == (flo < 0):
            lo, flo = x, fx
        else:
            hi, fhi = x, fx
        if hi - lo <= 2.0 * math.ulp(max(abs(lo), abs(hi))):
            return lo if abs(flo) < abs(fhi) else hi
        x_new = None
        if fprime is not None:
            d = fprime(x)
            if d != 0.0 and math.isfinite(d):
                cand = x - fx / d
                if lo < cand < hi:
                    x_new = cand
        if x_new is None or abs(x_new - x) > 0.5 * (hi - lo):
            x_new = 0.5 * (lo + hi)
        x = x_new
    raise NumericalError("find_root", f"no convergence after {maxiter} iterations",
                         residual=abs(f(x)))


def golden_max(f: Callable[[float], float], lo: float, hi: float,
               xtol: float = 1e-12, maxiter: int = 500) -> float:
    """Maximiser of a unimodal ``f`` on ``[lo, hi]`` by golden-section search.

    Ties go to the larger abscissa.
    """
    a, b = lo, hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(maxiter):
        if b - a <= xtol:
            break
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    candidates = [(f(a), a), (fc, c), (fd, d), (f(b), b)]
    best = max(v for v, _ in candidates)
    return max(x for v, x in candidates if v == best)


def normal_cdf(z):
    """Standard normal CDF, absolute error below 1e-15 (erfc based)."""
    if np.ndim(z) == 0:
        return 0.5 * math.erfc(-float(z) / math.sqrt(2.0))
    return ndtr(np.asarray(z, dtype=float))


class PiecewiseLinear:
    """Continuous piecewise-linear function through sorted knots."""

    def __init__(self, x, y):
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)

    @property
    def domain(self):
        return float(self.x[0]), float(self.x[-1])

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        lo, hi = self.domain
        if np.any(t_arr < lo - 1e-12 * max(1.0, abs(lo))) or np.any(
            t_arr > hi + 1e-12 * max(1.0, abs(hi))
        ):
            raise ValidationError(f"evaluation point outside envelope domain [{lo}, {hi}]")
        out = np.interp(t_arr, self.x, self.y)
        return float(out) if out.ndim == 0 else out

    def segment(self, t: float):
        """Knot indices ``(k, k+1)`` of the segment containing ``t``."""
        k = int(np.searchsorted(self.x, t, side="right")) - 1
        k = min(max(k, 0), len(self.x) - 2)
        return k, k + 1


def upper_concave_envelope(x, y) -> PiecewiseLinear:
    """Least concave majorant of the points ``(x, y)`` (upper hull, monotone chain)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 1 or x.shape != y.shape:
        raise ValidationError("x and y must be 1-D arrays of equal length")
    if len(x) < 3:
        raise ValidationError("envelope needs at least 3 points")
    dx = np.diff(x)
    if np.any(dx == 0):
        raise ValidationError("duplicate abscissae")
    if np.any(dx < 0):
        raise ValidationError("abscissae must be strictly increasing")

    hull: list[int] = []
    for i in range(len(x)):
        while len(hull) >= 2:
            o, a = hull[-2], hull[-1]
            cross = (x[a] - x[o]) * (y[i] - y[o]) - (y[a] - y[o]) * (x[i] - x[o])
            if cross >= 0:  # a lies on or below chord o-i
                hull.pop()
            else:
                break
        hull.append(i)
    return PiecewiseLinear(x[hull], y[hull])


def series_tail_bound(n: int, b: float, K: int, tau: float) -> float:
    """Majorant of ``sum_{k>K} (n*b*tau)**k / k!``.

    This bounds the remainder of any power series whose k-th coefficient is
    dominated by ``sum_{|j|=k} prod_i b**j_i / j_i! = (n*b)**k / k!``.  The
    remainder equals ``e^lam P(K+1, lam)`` (regularised incomplete gamma);
    it is padded by a relative ``1e-10`` for rounding, and replaced by a
    geometric majorant where the incomplete gamma underflows.
    """
    if b < 0 or tau < 0:
        raise ValidationError("b and tau must be nonnegative")
    if K < 0:
        raise ValidationError("K must be nonnegative")
    lam = n * b * tau
    if lam == 0.0:
        return 0.0
    P = float(gammainc(K + 1, lam))
    if P > 1e-290:
        return math.exp(lam + math.log(P)) * (1.0 + 1e-10)
    ratio = lam / (K + 2)
    log_first = (K + 1) * math.log(lam) - gammaln(K + 2)
    return math.exp(log_first) / (1.0 - ratio)
