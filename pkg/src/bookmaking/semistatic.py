"""Static reduction of the constant-probability problem: the static
objective, its optimisers, the exponential-utility first-order systems and
the two-piece epsilon-policy."""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigurationError, NumericalError, ValidationError
from .intensity import IntensityModel, concave_envelope
from .market import OutcomeStructure, Partition, log_exp_payout_moment
from .numerics import ENVELOPE_POINTS, PiecewiseLinear, find_root, golden_max
from .wealth import TwoPiece

U_LO, U_HI = 1e-6, 1.0 - 1e-6
UTILITIES = ("identity", "exponential")


def exact_envelope(model: IntensityModel, p: float, x):
    """Concave envelope of the revenue function on the whole rate range.

    Ratio and exponential revenues are concave already.  The log-ratio
    revenue rises concavely to its peak at ``-kappa/log p`` and the envelope
    stays flat beyond it.
    """
    x = np.asarray(x, dtype=float)
    if model.family == "logratio":
        peak = -model.kappa / math.log(p)
        out = np.asarray(model.revenue(p, np.minimum(x, peak)))
    else:
        out = np.asarray(model.revenue(p, x))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SemiStaticProblem:
    structure: OutcomeStructure
    intensity: Union[IntensityModel, Sequence[IntensityModel]]
    tau: float
    x: float = 0.0
    q: Optional[np.ndarray] = None
    utility: str = "identity"
    gamma: Optional[float] = None
    envelope: str = "exact"  # "exact", "grid" or "none"

    def __post_init__(self):
        n = self.structure.n
        models = self.intensity
        if isinstance(models, IntensityModel):
            models = (models,) * n
        models = tuple(models)
        if len(models) != n:
            raise ValidationError(f"need {n} intensity models, got {len(models)}")
        object.__setattr__(self, "intensity", models)
        q = np.zeros(n) if self.q is None else np.atleast_1d(np.asarray(self.q, dtype=float))
        if q.shape != (n,) or np.any(q < 0):
            raise ValidationError("q must be a nonnegative vector of length n")
        object.__setattr__(self, "q", q)
        if self.tau < 0:
            raise ValidationError("remaining horizon must be nonnegative")
        if self.utility not in UTILITIES:
            raise ValidationError(f"utility must be one of {UTILITIES}")
        if self.utility == "exponential" and not (self.gamma and self.gamma > 0):
            raise ValidationError("exponential utility needs gamma > 0")
        if self.envelope not in ("exact", "grid", "none"):
            raise ValidationError("envelope must be 'exact', 'grid' or 'none'")
        grids = None
        if self.envelope == "grid":
            grids = tuple(
                None if m.concave_revenue else concave_envelope(m, float(p))
                for m, p in zip(models, self.structure.marginals)
            )
        object.__setattr__(self, "_grids", grids)

    @property
    def n(self):
        return self.structure.n

    @property
    def p(self):
        return self.structure.marginals

    def rates(self, u):
        u = np.asarray(u, dtype=float)
        return np.stack(
            [np.asarray(m.rate(pi, u[..., i])) for i, (m, pi) in enumerate(zip(self.intensity, self.p))],
            axis=-1,
        )

    def envelope_revenue(self, lam):
        """``f-hat_i(lam_i)`` for each coordinate (last axis)."""
        cols = []
        for i, (m, pi) in enumerate(zip(self.intensity, self.p)):
            li = lam[..., i]
            if m.concave_revenue:
                cols.append(np.asarray(m.revenue(pi, li)))
            elif self.envelope == "exact":
                cols.append(np.asarray(exact_envelope(m, pi, li)))
            elif self.envelope == "grid":
                cols.append(np.asarray(self._grids[i](li)))
            else:
                raise ConfigurationError(
                    f"outcome {i}: {m.family} revenue is not concave and no envelope was built"
                )
        return np.stack(cols, axis=-1)

    def static_wealth(self, u):
        """``(revenue, liabilities)``: terminal wealth is ``revenue - liabilities . 1_A``."""
        u = np.asarray(u, dtype=float)
        lam = self.rates(u)
        revenue = self.x + self.tau * self.envelope_revenue(lam).sum(axis=-1)
        return revenue, self.q + self.tau * lam

    def wealth_by_atom(self, u):
        """Static terminal wealth for every atom of the outcome structure."""
        probs, members = self.structure.atoms()
        revenue, liab = self.static_wealth(u)
        return probs, np.asarray(revenue)[..., None] - liab @ members.T


def _score(problem: SemiStaticProblem, u):
    """Monotone transform of expected utility: expected wealth or certainty equivalent."""
    revenue, liab = problem.static_wealth(u)
    if problem.utility == "identity":
        return revenue - liab @ problem.p
    return revenue - log_exp_payout_moment(problem.structure, liab, problem.gamma) / problem.gamma


def vhat_objective(problem: SemiStaticProblem, u):
    """Expected utility of the static terminal wealth; broadcasts over leading axes of ``u``."""
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != problem.n:
        raise ValidationError(f"price vector must have length {problem.n}")
    if np.any(u <= 0) or np.any(u >= 1):
        raise ValidationError("static prices must lie in (0, 1)")
    s = _score(problem, u)
    with np.errstate(over="ignore"):  # -inf utility where the score diverges
        out = s if problem.utility == "identity" else -np.exp(-problem.gamma * s)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class SemiStaticResult:
    u: np.ndarray
    value: float
    residual: float
    converged: bool
    unique: bool
    sweeps: int


def _coordinate_ascent(problem, u0, xtol=1e-10, max_sweeps=200):
    u = np.array(u0, dtype=float)
    best = float(_score(problem, u))
    for sweep in range(1, max_sweeps + 1):
        old = u.copy()
        for i in range(problem.n):
            def f(v, i=i):
                w = u.copy()
                w[i] = v
                return float(_score(problem, w))
            u[i] = golden_max(f, U_LO, U_HI, xtol=xtol)
        val = float(_score(problem, u))
        # golden search resolves a smooth maximum only to ~sqrt(eps) in u,
        # so also stop once the objective no longer improves
        if np.max(np.abs(u - old)) <= 1e-9 or val - best <= 1e-15 * (1.0 + abs(best)):
            return u, sweep, True
        best = max(best, val)
    return u, max_sweeps, False


def _gradient_residual(problem, u, h=1e-6):
    g = np.zeros(problem.n)
    for i in range(problem.n):
        up, dn = u.copy(), u.copy()
        up[i] = min(u[i] + h, U_HI)
        dn[i] = max(u[i] - h, U_LO)
        gi = (_score(problem, up) - _score(problem, dn)) / (up[i] - dn[i])
        # at an active bound only an inward-pointing gradient is a violation
        if (u[i] >= U_HI - h and gi > 0) or (u[i] <= U_LO + h and gi < 0):
            gi = 0.0
        g[i] = gi
    return float(np.max(np.abs(g)))


def optimize_semistatic(problem: SemiStaticProblem, starts=None) -> SemiStaticResult:
    """Maximise the static objective by multi-start coordinate golden search."""
    n = problem.n
    if starts is None:
        levels = (0.25, 0.5, 0.75) if n <= 2 else (0.3, 0.7) if n == 3 else (0.5,)
        starts = [np.sqrt(problem.p)] + [np.array(s) for s in itertools.product(levels, repeat=n)]
    runs = []
    for s in starts:
        u, sweeps, ok = _coordinate_ascent(problem, np.clip(s, U_LO, U_HI))
        runs.append((float(_score(problem, u)), tuple(u), sweeps, ok))
    # deterministic reduction: best value, then lexicographically smallest u
    runs.sort(key=lambda r: (-r[0], r[1]))
    best_val, best_u, sweeps, ok = runs[0]
    best_u = np.array(best_u)
    unique = all(abs(r[0] - best_val) <= 1e-9 or r[0] < best_val - 1e-9 for r in runs)
    limits = [np.array(r[1]) for r in runs if abs(r[0] - best_val) <= 1e-9]
    unique = unique and all(np.max(np.abs(l - best_u)) <= 1e-5 for l in limits)
    residual = _gradient_residual(problem, best_u)
    converged = ok and residual <= 1e-5
    if not converged:
        warnings.warn(f"semi-static search did not converge (residual {residual:.3g})")
    return SemiStaticResult(best_u, float(vhat_objective(problem, best_u)), residual,
                            converged, unique, sweeps)


# -- exponential utility, ratio family ---------------------------------------------

def _indep_log_residual(p, gamma, tau, q, kappa):
    k = p / (1.0 - p)
    c = gamma * tau * kappa * k
    base = math.log(p) + gamma * q - math.log1p(-p)

    def F(u):
        return base + math.log1p(-u) + math.log1p(u) - 2.0 * math.log(u) + c * (1.0 / u - 1.0)

    def dF(u):
        return -2.0 / (u * (1.0 - u * u)) - c / (u * u)

    return F, dF


def exp_independent_residual(u, p, gamma, tau, q=0.0, kappa=1.0):
    """``p (1/u^2 - 1) exp(gamma q + gamma tau kappa p/(1-p) (1/u - 1)) - (1 - p)``."""
    k = p / (1 - p)
    return p * (1 / u**2 - 1) * np.exp(gamma * q + gamma * tau * kappa * k * (1 / u - 1)) - (1 - p)


def solve_exp_independent(p, gamma: float, tau: float, q=0.0, kappa: float = 1.0):
    """Optimal static price for independent events, ratio family, exponential utility.

    Solved in log form; the log residual is strictly decreasing in ``u``
    from ``+inf`` at 0 to ``-inf`` at 1.
    """
    if not (gamma > 0 and tau >= 0):
        raise ValidationError("need gamma > 0 and tau >= 0")
    p_arr = np.atleast_1d(np.asarray(p, dtype=float))
    if np.any(p_arr <= 0) or np.any(p_arr >= 1):
        raise ValidationError("p must lie in (0, 1)")
    q_arr = np.broadcast_to(np.asarray(q, dtype=float), p_arr.shape)
    out = np.empty_like(p_arr)
    for idx, (pi, qi) in enumerate(zip(p_arr, q_arr)):
        F, dF = _indep_log_residual(float(pi), gamma, tau, float(qi), kappa)
        lo, hi = 1e-300, np.nextafter(1.0, 0.0)
        if F(hi) > 0:
            raise NumericalError("solve_exp_independent", "root lies above the largest float below 1",
                                 residual=F(hi))
        out[idx] = find_root(F, (lo, hi), tol=1e-14, fprime=dF)
    return float(out[0]) if np.ndim(p) == 0 else out


@dataclass(frozen=True)
class PartitionSolution:
    u: np.ndarray
    residual: float
    iterations: int
    converged: bool
    unique: bool
    limits: tuple


def _partition_terms(u, p, q, gamma, tau, kappa):
    k = kappa * p / (1 - p)
    z = np.log(p) + gamma * (q + tau * k * (1 / u - 1))
    lse = logsumexp(z)
    w = np.exp(z - lse)
    L = -gamma * tau * np.sum(k * (1 - u)) + lse
    return k, w, L


def exp_partition_residual(u, p, q, gamma, tau, kappa=1.0):
    """Relative residual ``p_i (1/u_i^2 - 1) g_i / sum_{j != i} p_j g_j - 1`` per outcome."""
    u = np.asarray(u, dtype=float)
    _, w, _ = _partition_terms(u, np.asarray(p, float), np.asarray(q, float), gamma, tau, kappa)
    return w * (1 / u**2 - 1) / (1 - w) - 1


def _newton_partition(u0, p, q, gamma, tau, kappa, maxiter=100):
    u = np.array(u0, dtype=float)
    k, w, L = _partition_terms(u, p, q, gamma, tau, kappa)
    res = np.max(np.abs(w / u**2 - 1))
    for it in range(1, maxiter + 1):
        if res <= 1e-14:
            return u, it, True
        a = -gamma * tau * k / u**2
        da = 2 * gamma * tau * k / u**3
        grad = gamma * tau * k + w * a
        wa = w * a
        hess = np.diag(w * a * a + w * da) - np.outer(wa, wa)
        try:
            step = np.linalg.solve(hess, -grad)
        except np.linalg.LinAlgError:
            break
        alpha = 1.0
        while np.any(u + alpha * step <= 0):
            alpha *= 0.5
        slope = float(grad @ step)
        # near the optimum L is flat to rounding, so a drop in the
        # first-order residual also accepts the step
        for _ in range(60):
            cand = u + alpha * step
            _, w_c, L_c = _partition_terms(cand, p, q, gamma, tau, kappa)
            res_c = np.max(np.abs(w_c / cand**2 - 1))
            flat = L_c <= L + 1e-13 * max(1.0, abs(L))
            if L_c <= L + 1e-4 * alpha * slope or (flat and res_c < res):
                break
            alpha *= 0.5
        else:
            break  # no acceptable step
        if res_c >= res and np.max(np.abs(cand - u)) <= 1e-15:
            break
        u, w, L, res = cand, w_c, L_c, res_c
    return u, it, res <= 1e-10


def solve_exp_partition(p, q, gamma: float, tau: float, kappa: float = 1.0) -> PartitionSolution:
    """Optimal static prices for a partition, ratio family, exponential utility.

    The prices minimise the strictly convex function
    ``-gamma tau sum k_i (1 - u_i) + log sum_j p_j g_j(u_j)``, so the
    first-order system has a single solution; it is found by Newton's
    method with an analytic Hessian and a backtracking line search.
    """
    p = Partition(p).p
    q = np.atleast_1d(np.asarray(q, dtype=float))
    if q.shape != p.shape or np.any(q < 0):
        raise ValidationError("q must be a nonnegative vector matching p")
    if not (gamma > 0 and tau > 0):
        raise ValidationError("need gamma > 0 and tau > 0")
    starts = [np.sqrt(p), np.full_like(p, 0.5),
              np.atleast_1d(solve_exp_independent(p, gamma, tau, q, kappa))]
    limits, iters, oks = [], 0, []
    for s in starts:
        u, it, ok = _newton_partition(s, p, q, gamma, tau, kappa)
        limits.append(u)
        iters = max(iters, it)
        oks.append(ok)
    with np.errstate(divide="ignore", invalid="ignore"):
        resid = [float(np.max(np.abs(exp_partition_residual(u, p, q, gamma, tau, kappa)))) for u in limits]
    resid = [r if np.isfinite(r) else np.inf for r in resid]
    best = int(np.argmin(resid))
    u = limits[best]
    # strict convexity makes the stationary point unique; check that every
    # start that reached one agrees
    unique = all(np.max(np.abs(l - u)) <= 1e-9 for l, r in zip(limits, resid) if r <= 1e-8)
    return PartitionSolution(u, resid[best], iters, resid[best] <= 1e-8, unique,
                             tuple(tuple(l) for l in limits))


def worst_case_wealth(problem: SemiStaticProblem, u) -> float:
    """Smallest static terminal wealth over atoms of positive probability."""
    probs, wealth = problem.wealth_by_atom(u)
    return float(np.min(wealth[..., probs > 0], axis=-1))


# -- epsilon policy --------------------------------------------------------------------

@dataclass(frozen=True)
class EpsilonPolicy:
    policy: TwoPiece
    envelope_gap: np.ndarray  # f-hat(lam) - mixture revenue, per outcome
    refinements: int


def _chord(model: IntensityModel, p: float, target: float, xmax: float, points: int):
    lo, _ = model.rate_range(p)
    base = min(model.default_xmax(p), xmax)
    grid = np.linspace(lo, base, points)
    if xmax > base:
        # far chord endpoints need range, the hull near the peak needs resolution
        grid = np.unique(np.concatenate([grid, np.geomspace(base, xmax, points)]))
    env: PiecewiseLinear = concave_envelope(model, p, grid)
    a_idx, b_idx = env.segment(target)
    a, b = env.x[a_idx], env.x[b_idx]
    rho = (b - target) / (b - a)
    mix = rho * env.y[a_idx] + (1 - rho) * env.y[b_idx]
    return a, b, float(np.clip(rho, 0.0, 1.0)), float(mix)


def epsilon_policy(u_hat, delta: float, intensity, p, tau: float, t0: float = 0.0,
                   max_refinements: int = 3) -> EpsilonPolicy:
    """Two-piece prices whose rates average to ``lambda(u_hat)`` with revenue
    within ``delta / (n tau)`` of the envelope in every coordinate."""
    u_hat = np.atleast_1d(np.asarray(u_hat, dtype=float))
    p = np.atleast_1d(np.asarray(p, dtype=float))
    n = u_hat.size
    models = (intensity,) * n if isinstance(intensity, IntensityModel) else tuple(intensity)
    if not delta > 0:
        raise ValidationError("delta must be positive")
    if not tau > 0:
        raise ValidationError("tau must be positive")
    slack = delta / (n * tau)
    v, w, rho, gap = u_hat.copy(), u_hat.copy(), np.ones(n), np.zeros(n)
    worst_ref = 0
    for i, (m, pi, ui) in enumerate(zip(models, p, u_hat)):
        target = float(m.rate(pi, ui))
        f_env = float(exact_envelope(m, pi, target))
        f_own = float(m.revenue(pi, target))
        if f_env - f_own < slack:
            gap[i] = f_env - f_own
            continue
        xmax = max(m.default_xmax(pi), 2 * target)
        if m.family == "logratio":
            peak = -m.kappa / math.log(pi)
            if target > peak:
                # the chord to a far point recovers the flat envelope
                xmax = max(xmax, peak + 2 * (target - peak) * f_env / slack)
        points = ENVELOPE_POINTS
        for ref in range(max_refinements + 1):
            a, b, r, mix = _chord(m, float(pi), target, xmax, points)
            if f_env - mix < slack:
                break
            points *= 4
            xmax *= 2
        else:
            raise NumericalError("epsilon_policy", f"chord for outcome {i} not found after "
                                 f"{max_refinements} refinements", residual=f_env - mix)
        worst_ref = max(worst_ref, ref)
        v[i], w[i], rho[i] = m.inverse_rate(pi, a), m.inverse_rate(pi, b), r
        if not (v[i] > 0 and w[i] > 0):
            raise NumericalError("epsilon_policy", "chord endpoint price underflows to 0")
        gap[i] = f_env - mix
    return EpsilonPolicy(TwoPiece(v, w, rho, tau, t0), gap, worst_ref)


def two_piece_static_wealth(policy: TwoPiece, intensity, p, x: float, q):
    """``(revenue, liabilities)`` accumulated by a two-piece policy with constant ``p``."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    models = (intensity,) * p.size if isinstance(intensity, IntensityModel) else tuple(intensity)
    lam_v = np.array([m.rate(pi, vi) for m, pi, vi in zip(models, p, policy.v)])
    lam_w = np.array([m.rate(pi, wi) for m, pi, wi in zip(models, p, policy.w)])
    tau, rho = policy.tau, policy.rho
    revenue = x + tau * np.sum(rho * lam_v * policy.v + (1 - rho) * lam_w * policy.w)
    liab = np.asarray(q, dtype=float) + tau * (rho * lam_v + (1 - rho) * lam_w)
    return float(revenue), liab
