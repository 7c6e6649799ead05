"""Exponential-utility dynamic pricing with Poisson bet arrivals and the
exponential intensity family.

With ``c = beta/gamma`` the value function is ``-exp(-gamma x) H(t, q)``
where ``H = G^{-1/c}`` and ``G`` solves the linear system
``dG/dt + sum_i h_i G(t, q + e_i) = 0``, ``G(T, q) = d(q) = a(q)^{-c}``.
Its power series in ``tau = T - t`` has coefficients

    alpha_k(q) = sum_{|j| = k} prod_i (h_i^{j_i} / j_i!) d(q + j),

which satisfy ``sum_i h_i alpha_k(q + e_i) = (k + 1) alpha_{k+1}(q)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import DomainError, NumericalError, ValidationError
from .market import OutcomeStructure, log_exp_payout_moment
from .numerics import series_tail_bound

K_MAX = 10_000


@lru_cache(maxsize=4096)
def compositions(k: int, n: int) -> np.ndarray:
    """All ``j`` in N^n with ``|j| = k``, shape ``(C(k+n-1, n-1), n)``."""
    if n == 1:
        return np.array([[k]], dtype=np.int64)
    rows = []
    # stars and bars: choose the n-1 bar positions among k+n-1 slots
    for bars in itertools.combinations(range(k + n - 1), n - 1):
        prev, row = -1, []
        for b in bars:
            row.append(b - prev - 1)
            prev = b
        row.append(k + n - 1 - prev - 1)
        rows.append(row)
    out = np.array(rows, dtype=np.int64)
    out.setflags(write=False)
    return out


def log_alpha(log_d: Callable[[np.ndarray], np.ndarray], h, q, k: int, caps=None) -> float:
    """``log alpha_k(q)`` for an arbitrary positive ``h`` and log-coefficient function.

    Returns ``-inf`` when the (capped) index set is empty.
    """
    h = np.asarray(h, dtype=float)
    q = np.asarray(q, dtype=np.int64)
    J = compositions(int(k), h.size)
    if caps is not None:
        J = J[np.all(q + J <= np.asarray(caps), axis=1)]
        if len(J) == 0:
            return -np.inf
    logw = J @ np.log(h) - gammaln(J + 1).sum(axis=1)
    return float(logsumexp(logw + log_d(q + J)))


@dataclass(frozen=True)
class SeriesValue:
    value: float
    K: int
    tail_bound: float
    coefficients: np.ndarray  # alpha_0(q) .. alpha_K(q)

    @property
    def log_value(self) -> float:
        return math.log(self.value)


@dataclass(frozen=True)
class Quote:
    u: np.ndarray  # nan where no quote is offered (capped outcome)
    clamped: np.ndarray  # True where the formula exceeded 1


@dataclass(frozen=True, eq=False)
class ExpDynamicModel:
    structure: OutcomeStructure
    gamma: float
    beta: float
    kappa: float = 1.0
    T: float = 1.0
    caps: Optional[np.ndarray] = None
    _cache: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        if not (self.gamma > 0 and self.beta > 0 and self.kappa > 0 and self.T > 0):
            raise ValidationError("gamma, beta, kappa and T must be positive")
        if self.caps is not None:
            caps = np.atleast_1d(np.asarray(self.caps))
            if caps.shape != (self.n,) or np.any(caps < 0) or np.any(caps != np.round(caps)):
                raise ValidationError("caps must be nonnegative integers, one per outcome")
            object.__setattr__(self, "caps", caps.astype(np.int64))

    @property
    def n(self) -> int:
        return self.structure.n

    @property
    def p(self) -> np.ndarray:
        return self.structure.marginals

    @property
    def c(self) -> float:
        return self.beta / self.gamma

    @property
    def b(self) -> np.ndarray:
        g, be = self.gamma, self.beta
        return self.kappa * np.exp(be * self.p) * (g / (be + g)) * (be / (be + g)) ** (be / g)

    @property
    def h(self) -> np.ndarray:
        return self.c * self.b

    @property
    def r(self) -> float:
        """``h_i exp(-beta p_i)``, the same for every outcome."""
        return float(self.h[0] * math.exp(-self.beta * self.p[0]))

    @property
    def u_min(self) -> float:
        """Lower bound of every feedback quote, ``log(1 + gamma/beta) / gamma``."""
        return math.log1p(self.gamma / self.beta) / self.gamma

    def rate(self, u):
        return self.kappa * np.exp(-self.beta * (np.asarray(u) - self.p))

    def _check_q(self, q):
        q = np.asarray(q)
        if q.shape[-1] != self.n:
            raise ValidationError(f"book must have {self.n} entries")
        if np.any(q < 0) or np.any(q != np.round(q)):
            raise ValidationError("book entries must be nonnegative integers")
        if self.caps is not None and np.any(q > self.caps):
            raise DomainError(f"book {q.tolist()} exceeds caps {self.caps.tolist()}")
        return q.astype(np.int64)

    def _check_t(self, t):
        if not 0.0 <= t <= self.T:
            raise DomainError(f"t={t} outside [0, {self.T}]")

    def log_d(self, q):
        """``log d(q) = -c log a(q)``; broadcasts over leading axes."""
        return -self.c * log_exp_payout_moment(self.structure, np.asarray(q, dtype=float), self.gamma)

    def d(self, q):
        out = np.exp(self.log_d(self._check_q(q)))
        return float(out) if np.ndim(out) == 0 else out

    def a(self, q):
        out = np.exp(log_exp_payout_moment(self.structure, self._check_q(q).astype(float), self.gamma))
        return float(out) if np.ndim(out) == 0 else out

    def log_alpha(self, q, k: int, capped: bool = False) -> float:
        q = self._check_q(q)
        return log_alpha(self.log_d, self.h, q, k, self.caps if capped else None)

    def alpha(self, q, k: int, capped: bool = False) -> float:
        return math.exp(self.log_alpha(q, k, capped))

    def _coefficients(self, q: tuple, K: int) -> np.ndarray:
        """Uncapped ``alpha_0..alpha_K`` at ``q``, memoised per book."""
        have = self._cache.get(q)
        if have is not None and len(have) > K:
            return have[: K + 1]
        start = 0 if have is None else len(have)
        new = [math.exp(log_alpha(self.log_d, self.h, np.array(q), k)) for k in range(start, K + 1)]
        coef = np.array(new) if have is None else np.concatenate([have, new])
        self._cache[q] = coef  # last write wins; values are deterministic
        return coef

    def tail_bound(self, q, K: int, tau: float) -> float:
        """Certified bound on ``sum_{k>K} alpha_k(q) tau^k``.

        By Jensen ``d(q) <= exp(-beta p.q)``, so
        ``alpha_k(q) <= exp(-beta p.q) (n r)^k / k!`` with ``r = h_i exp(-beta p_i)``.
        """
        scale = math.exp(-self.beta * float(self.p @ np.asarray(q, dtype=float)))
        return scale * series_tail_bound(self.n, self.r, K, tau)

    def G(self, t: float, q, tol: float = 1e-13, K: Optional[int] = None) -> SeriesValue:
        """Series value ``G(t, q)``, truncated where the certified tail is below
        ``tol`` relative to the partial sum (or at order ``K`` if given)."""
        self._check_t(t)
        q = tuple(int(v) for v in self._check_q(q))
        tau = self.T - t
        if tau == 0.0 and K is None:
            d0 = float(np.exp(self.log_d(np.array(q, dtype=float))))
            return SeriesValue(d0, 0, 0.0, np.array([d0]))
        if K is None:
            # terms of the majorant peak near k = n r tau; start the search there
            K = max(4, int(self.n * self.r * tau))
            while True:
                coef = self._coefficients(q, K)
                total = float(np.polyval(coef[::-1], tau))
                bound = self.tail_bound(q, K, tau)
                if bound <= tol * total:
                    break
                if K >= K_MAX:
                    raise NumericalError("G", f"tail bound above tolerance at K={K}", residual=bound)
                K = min(K_MAX, int(K * 1.5) + 1)
        coef = self._coefficients(q, K)
        total = float(np.polyval(coef[::-1], tau))
        return SeriesValue(total, K, self.tail_bound(q, K, tau), coef.copy())

    def G_capped(self, t: float, q) -> SeriesValue:
        """Exact polynomial value when outcome ``i`` accepts at most ``caps_i`` bets."""
        if self.caps is None:
            raise ValidationError("model has no caps")
        self._check_t(t)
        q = self._check_q(q)
        K = int(self.caps.sum() - q.sum())
        coef = np.array([math.exp(v) if np.isfinite(v) else 0.0
                         for v in (log_alpha(self.log_d, self.h, q, k, self.caps) for k in range(K + 1))])
        tau = self.T - t
        return SeriesValue(float(np.polyval(coef[::-1], tau)), K, 0.0, coef)

    def _logG(self, t, q, capped):
        return math.log((self.G_capped(t, q) if capped else self.G(t, q)).value)

    def H(self, t: float, q, capped: Optional[bool] = None) -> float:
        capped = self.caps is not None if capped is None else capped
        return math.exp(-self._logG(t, q, capped) / self.c)

    def value(self, t: float, x: float, q, capped: Optional[bool] = None) -> float:
        """``V(t, x, q) = -exp(-gamma x) H(t, q)``."""
        return -math.exp(-self.gamma * x) * self.H(t, q, capped)

    def optimal_quote(self, t: float, q, capped: Optional[bool] = None) -> Quote:
        """Feedback prices ``(1/gamma) log(1 + gamma/beta) - (log G(q+e_i) - log G(q)) / beta``.

        Capped outcomes that are full get no quote (``nan``).  Values above 1
        are clamped and flagged.
        """
        capped = self.caps is not None if capped is None else capped
        self._check_t(t)
        if t >= self.T:
            raise DomainError("no quote at the terminal time")
        q = self._check_q(q)
        base = self._logG(t, q, capped)
        u = np.full(self.n, np.nan)
        for i in range(self.n):
            qi = q.copy()
            qi[i] += 1
            if capped and qi[i] > self.caps[i]:
                continue
            u[i] = self.u_min - (self._logG(t, qi, capped) - base) / self.beta
        clamped = np.nan_to_num(u, nan=0.0) > 1.0
        return Quote(np.where(clamped, 1.0, u), clamped)

    def ode_residual(self, t: float, q, capped: Optional[bool] = None, K: Optional[int] = None):
        """``(residual, bound, scale)`` for ``dG/dt + sum_i h_i G(t, q + e_i)``.

        The truncated series are differentiated term by term with a common
        order ``K``; ``bound`` covers the truncation remainder
        ``(K+1) alpha_{K+1}(q) tau^K``.  ``scale`` is the sum of magnitudes of
        the two parts, for relative comparisons.
        """
        capped = self.caps is not None if capped is None else capped
        self._check_t(t)
        q = self._check_q(q)
        tau = self.T - t
        if capped:
            series = self.G_capped(t, q)
        else:
            # at t = T the value needs no terms but the derivative needs alpha_1
            K = max(K or 0, 1) if tau == 0.0 else K
            series = self.G(t, q) if K is None else self.G(t, q, K=K)
        K = series.K
        coef = series.coefficients
        dGdt = -sum(k * coef[k] * tau ** (k - 1) for k in range(1, len(coef)))
        flow = 0.0
        for i in range(self.n):
            qi = q.copy()
            qi[i] += 1
            if capped:
                if qi[i] > self.caps[i]:
                    continue
                flow += self.h[i] * self.G_capped(t, qi).value
            else:
                ci = self.G(t, qi, K=K).coefficients
                flow += self.h[i] * float(np.polyval(ci[::-1], tau))
        residual = dGdt + flow
        if capped:
            bound = 0.0
        else:
            scale_q = math.exp(-self.beta * float(self.p @ q))
            R = self.n * self.r
            bound = scale_q * R * math.exp(K * math.log(R * tau) - math.lgamma(K + 1)) if tau > 0 else 0.0
        return residual, bound, abs(dGdt) + abs(flow)


# -- Monte Carlo evaluation ---------------------------------------------------------

class _QuoteTable:
    """Quotes of a capped model as polynomials in ``tau``, one per reachable book."""

    def __init__(self, model: ExpDynamicModel):
        self.model = model
        caps = model.caps
        self.shape = tuple(int(c) + 1 for c in caps)
        deg = int(caps.sum())
        self.coef = np.zeros(self.shape + (deg + 1,))
        for q in itertools.product(*(range(s) for s in self.shape)):
            c = model.G_capped(0.0, np.array(q)).coefficients
            self.coef[q + (slice(0, len(c)),)] = c

    def log_G(self, tau, Q):
        idx = tuple(Q[:, i] for i in range(Q.shape[1]))
        c = self.coef[idx]  # (paths, deg+1)
        powers = tau[:, None] ** np.arange(c.shape[1])
        return np.log(np.sum(c * powers, axis=1))

    def quotes(self, tau, Q):
        m = self.model
        base = self.log_G(tau, Q)
        u = np.full(Q.shape, np.nan)
        for i in range(m.n):
            ok = Q[:, i] < m.caps[i]
            Qi = Q.copy()
            Qi[:, i] = np.minimum(Qi[:, i] + 1, m.caps[i])
            u[:, i] = np.where(ok, m.u_min - (self.log_G(tau, Qi) - base) / m.beta, np.nan)
        return np.minimum(u, 1.0)

    def build_floor(self, T: float, points: int = 4001):
        """Running minimum over ``[0, tau]`` of every quote, on a grid in ``tau``,
        lowered by twice the largest grid increment to cover the gaps."""
        m = self.model
        self.tau_grid = np.linspace(0.0, T, points)
        self.floor = np.full(self.shape + (m.n, points), np.nan)
        for q in itertools.product(*(range(s) for s in self.shape)):
            u = self.quotes(self.tau_grid, np.tile(np.array(q), (points, 1)))
            step = np.nan_to_num(np.abs(np.diff(u, axis=0)), nan=0.0).max(axis=0)
            self.floor[q] = (np.fmin.accumulate(u, axis=0) - 2.0 * step).T

    def min_price(self, tau, Q):
        """Lower bound of each quote over the remaining time ``[0, tau]``."""
        k = np.minimum(np.searchsorted(self.tau_grid, tau, side="left"), len(self.tau_grid) - 1)
        idx = tuple(Q[:, i] for i in range(Q.shape[1]))
        return np.maximum(self.floor[idx + (slice(None), k)], self.model.u_min)


def simulate_exp_policy(model: ExpDynamicModel, rng: np.random.Generator, n_paths: int,
                        x0: float = 0.0, q0=None, const_u=None, t0: float = 0.0):
    """Terminal wealth under the feedback policy (``const_u=None``) or a
    constant price vector, with caps enforced.  Returns ``(Y, Q_T, outcome)``.

    Events are generated by thinning.  Until the book changes, the rate of
    outcome ``i`` is bounded using the smallest quote of the current book
    over the remaining time (tabulated; never below ``u_min``, the global
    floor implied by ``G`` decreasing in ``q``).  A violated bound raises.
    """
    if model.caps is None:
        raise ValidationError("Monte Carlo evaluation requires a capped model")
    n = model.n
    q0 = np.zeros(n, dtype=np.int64) if q0 is None else model._check_q(q0)
    Q = np.tile(q0, (n_paths, 1))
    X = np.full(n_paths, float(x0))
    t = np.full(n_paths, float(t0))
    if const_u is None:
        table = _QuoteTable(model)
        table.build_floor(model.T)

        def price(tt, QQ):
            return table.quotes(model.T - tt, QQ)

        def bound(tt, QQ):
            u_lo = np.nan_to_num(table.min_price(model.T - tt, QQ), nan=1.0)
            return np.where(QQ < model.caps, model.rate(u_lo), 0.0)
    else:
        const_u = np.asarray(const_u, dtype=float)
        lam_c = model.rate(const_u)

        def price(tt, QQ):
            return np.broadcast_to(const_u, QQ.shape)

        def bound(tt, QQ):
            return np.where(QQ < model.caps, lam_c, 0.0)

    active = np.ones(n_paths, dtype=bool)
    B = bound(t, Q)
    while active.any():
        idx = np.flatnonzero(active)
        Bi = B[idx]
        total = Bi.sum(axis=1)
        done = total <= 0
        active[idx[done]] = False
        idx, Bi, total = idx[~done], Bi[~done], total[~done]
        if idx.size == 0:
            break
        t[idx] += rng.exponential(1.0, idx.size) / total
        cum = np.cumsum(Bi, axis=1) / total[:, None]
        pick = np.minimum((rng.random(idx.size)[:, None] > cum).sum(axis=1), n - 1)
        accept_draw = rng.random(idx.size)
        alive = t[idx] < model.T
        active[idx[~alive]] = False
        idx, pick, accept_draw, Bi = idx[alive], pick[alive], accept_draw[alive], Bi[alive]
        if idx.size == 0:
            break
        rows = np.arange(idx.size)
        Qa = Q[idx]
        u = price(t[idx], Qa)
        lam = np.where(Qa < model.caps, model.rate(np.nan_to_num(u, nan=1.0)), 0.0)
        lam_pick, b_pick = lam[rows, pick], Bi[rows, pick]
        if np.any(lam_pick > b_pick * (1 + 1e-9)):
            raise AssertionError("thinning majorant violated")
        hit = accept_draw * b_pick < lam_pick
        Q[idx[hit], pick[hit]] += 1
        X[idx[hit]] += u[rows, pick][hit]
        B[idx] = bound(t[idx], Q[idx])
    outcome = model.structure.sample(rng, n_paths)
    Y = X - np.sum(Q * outcome, axis=1)
    return Y, Q, outcome


def expected_utility(Y, gamma: float):
    """Sample mean and standard error of ``-exp(-gamma Y)``."""
    U = -np.exp(-gamma * np.asarray(Y))
    return float(U.mean()), float(U.std(ddof=1) / math.sqrt(U.size))
