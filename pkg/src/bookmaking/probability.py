"""Conditional-probability processes for in-play events.

Each model is driven by an underlying Levy state (goal count, point
differential, or nothing) and evaluates ``P_t^i = P(A_i | state_t)`` in
closed form, so simulated probability paths are martingales by
construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaln, ndtr, pdtr

from .errors import DomainError, ValidationError
from .market import Atoms, Independent, OutcomeStructure, Partition


def _check_time(t, horizon):
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr > horizon * (1 + 1e-14)) or np.any(t_arr < 0):
        raise DomainError(f"time outside [0, {horizon}]")
    return np.minimum(t_arr, horizon)


@dataclass(frozen=True)
class ConstantProbability:
    p: np.ndarray
    horizon: float = 1.0
    exclusive: bool = False

    def __post_init__(self):
        p = np.atleast_1d(np.asarray(self.p, dtype=float))
        if np.any(p <= 0) or np.any(p >= 1):
            raise ValidationError("constant probabilities must lie in (0, 1)")
        if self.exclusive and abs(p.sum() - 1) > 1e-12:
            raise ValidationError("exclusive constant probabilities must sum to 1")
        object.__setattr__(self, "p", p)

    @property
    def n(self):
        return self.p.size

    initial_state = 0.0

    def conditional_prob(self, state, t):
        state = np.asarray(state, dtype=float)
        _check_time(t, self.horizon)
        return np.broadcast_to(self.p, state.shape + (self.n,)).copy()

    def increment(self, dt, rng):
        return np.zeros(np.shape(dt))

    def structure(self) -> OutcomeStructure:
        return Partition(self.p) if self.exclusive else Independent(self.p)

    def terminal_outcome(self, state, rng):
        """Realised memberships; constant models carry no outcome information."""
        size = np.size(state)
        return self.structure().sample(rng, size)


@dataclass(frozen=True)
class PoissonGoalModel:
    """Goals arrive as a Poisson process with rate ``mu``.

    ``goals`` lists the bet thresholds; with ``at_least`` the events are
    ``{N_T >= i}``, otherwise ``{N_T == i}``.
    """

    mu: float
    horizon: float
    goals: tuple = (1,)
    at_least: bool = True

    def __post_init__(self):
        if not self.mu > 0:
            raise ValidationError("goal intensity must be positive")
        if self.horizon <= 0:
            raise ValidationError("horizon must be positive")
        goals = tuple(int(g) for g in np.atleast_1d(self.goals))
        if any(g < 0 for g in goals):
            raise ValidationError("goal thresholds must be nonnegative integers")
        object.__setattr__(self, "goals", goals)

    @property
    def n(self):
        return len(self.goals)

    initial_state = 0.0

    def conditional_prob(self, state, t):
        t = _check_time(t, self.horizon)
        count = np.asarray(state, dtype=float)[..., None]
        m = self.mu * np.asarray(self.horizon - t)[..., None]
        need = np.asarray(self.goals, dtype=float) - count
        if self.at_least:
            # P(N_rem >= need) = 1 - P(N_rem <= need - 1)
            tail = 1.0 - pdtr(np.maximum(need - 1, 0), m)
            out = np.where(need <= 0, 1.0, tail)
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                logpmf = need * np.log(m) - m - gammaln(np.maximum(need, 0) + 1)
                pmf = np.where(need == 0, np.exp(-m), np.exp(logpmf))
            out = np.where(need < 0, 0.0, pmf)
        return out

    def increment(self, dt, rng):
        return np.asarray(rng.poisson(self.mu * np.asarray(dt, dtype=float)), dtype=float)

    def structure(self) -> OutcomeStructure:
        p0 = self.conditional_prob(self.initial_state, 0.0)
        if self.at_least:
            # nested events {N >= g}: atoms indexed by where N_T falls
            g = np.asarray(self.goals)
            cuts = np.unique(np.concatenate([[0], g]))
            probs, members = [], []
            for lo, hi in zip(cuts, list(cuts[1:]) + [None]):
                surv_lo = 1.0 - pdtr(lo - 1, self.mu * self.horizon) if lo > 0 else 1.0
                surv_hi = 0.0 if hi is None else 1.0 - pdtr(hi - 1, self.mu * self.horizon)
                probs.append(surv_lo - surv_hi)
                members.append((g <= lo).astype(int))
            return Atoms(probs, members)
        return Atoms.from_disjoint(p0)

    def terminal_outcome(self, state, rng):
        return self.conditional_prob(state, self.horizon).round().astype(np.int64)


@dataclass(frozen=True)
class BrownianSpreadModel:
    """Point differential ``D_t = mu t + sigma W_t``.

    With ``bands`` the outcomes are the intervals cut by the thresholds,
    listed from the highest band down (for thresholds ``(0, 3)``: win by 3
    or more, win by less than 3, lose).  Otherwise the outcomes are the
    exceedance events ``{D_T >= threshold}``.
    """

    mu: float
    sigma: float
    horizon: float
    thresholds: tuple = (0.0,)
    bands: bool = False

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValidationError("sigma must be positive")
        if self.horizon <= 0:
            raise ValidationError("horizon must be positive")
        thr = tuple(float(v) for v in np.atleast_1d(self.thresholds))
        if any(b <= a for a, b in zip(thr, thr[1:])):
            raise ValidationError("thresholds must be strictly increasing")
        object.__setattr__(self, "thresholds", thr)

    @property
    def n(self):
        return len(self.thresholds) + 1 if self.bands else len(self.thresholds)

    initial_state = 0.0

    def exceedance(self, state, t):
        """``P(D_T >= threshold_j | D_t = state)`` for each threshold (last axis)."""
        t = _check_time(t, self.horizon)
        d = np.asarray(state, dtype=float)[..., None]
        tau = np.asarray(self.horizon - t, dtype=float)[..., None]
        thr = np.asarray(self.thresholds)
        mean = d + self.mu * tau
        with np.errstate(divide="ignore", invalid="ignore"):
            z = (mean - thr) / (self.sigma * np.sqrt(tau))
        at_end = np.broadcast_to(tau <= 0, z.shape)
        return np.where(at_end, (mean >= thr).astype(float), ndtr(np.where(at_end, 0.0, z)))

    def conditional_prob(self, state, t):
        exc = self.exceedance(state, t)
        if not self.bands:
            return exc
        # bands top-down: [thr_k, inf), [thr_{k-1}, thr_k), ..., (-inf, thr_0)
        rev = exc[..., ::-1]
        upper = np.concatenate([np.zeros(rev.shape[:-1] + (1,)), rev], axis=-1)
        lower = np.concatenate([rev, np.ones(rev.shape[:-1] + (1,))], axis=-1)
        return np.clip(lower - upper, 0.0, 1.0)

    def increment(self, dt, rng):
        dt = np.asarray(dt, dtype=float)
        return self.mu * dt + self.sigma * np.sqrt(dt) * rng.standard_normal(dt.shape)

    def structure(self) -> OutcomeStructure:
        p0 = self.conditional_prob(self.initial_state, 0.0)
        if self.bands:
            return Partition(p0 / p0.sum())
        exc = p0
        # nested exceedance events
        probs = np.append(exc[-1], np.diff(exc[::-1]))
        probs = np.append(probs, 1.0 - exc[0])
        k = len(exc)
        members = [[1 if j <= k - 1 - r else 0 for j in range(k)] for r in range(k)]
        members.append([0] * k)
        return Atoms(probs, members)

    def terminal_outcome(self, state, rng):
        return self.conditional_prob(state, self.horizon).round().astype(np.int64)


ProbabilityModel = (ConstantProbability, PoissonGoalModel, BrownianSpreadModel)


def conditional_prob(model, state, t):
    """``P_t`` for the given underlying state; the last axis indexes outcomes."""
    return model.conditional_prob(state, t)


def step(model, state, dt, rng: np.random.Generator):
    """Advance the underlying state by ``dt`` with exact increments."""
    if np.any(np.asarray(dt) <= 0):
        raise ValidationError("dt must be positive")
    return np.asarray(state, dtype=float) + model.increment(np.broadcast_to(dt, np.shape(state)), rng)


def simulate_path(model, n_steps: int, rng: np.random.Generator, state0=None):
    """Underlying states and probabilities on a uniform grid of ``n_steps`` steps."""
    dt = model.horizon / n_steps
    times = np.linspace(0.0, model.horizon, n_steps + 1)
    incr = model.increment(np.full(n_steps, dt), rng)
    s0 = model.initial_state if state0 is None else state0
    states = s0 + np.concatenate([[0.0], np.cumsum(incr)])
    probs = model.conditional_prob(states, times)
    return times, states, probs


def spread_model_from_thresholds(mu: float, sigma: float, horizon: float,
                                 thresholds: Sequence[float], bands=True):
    return BrownianSpreadModel(mu, sigma, horizon, tuple(thresholds), bands)
