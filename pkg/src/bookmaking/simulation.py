"""Monte Carlo simulation of the controlled betting market under continuous
and Poisson arrivals, plus the closed-form coin analytics.

Paths are processed in fixed-size chunks.  Chunk ``c`` draws from its own
generator spawned from ``SeedSequence(seed)``, so results do not depend on
the number of worker threads.
"""

from __future__ import annotations

import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import pdtr
from scipy.stats import poisson

from .errors import ValidationError
from .intensity import IntensityModel
from .probability import BrownianSpreadModel, ConstantProbability
from .wealth import (LogRatioRootFeedback, PricingPolicy, SqrtFeedback, StaticPolicy,
                     TwoPiece)

CHUNK = 1000
SAFETY = 1.5
ARRIVALS = ("continuous", "poisson")


@dataclass
class SimulationConfig:
    model: object  # ConstantProbability, PoissonGoalModel or BrownianSpreadModel
    intensity: Union[IntensityModel, Sequence[IntensityModel]]
    policy: PricingPolicy
    arrival: str = "poisson"
    dt: Optional[float] = None
    n_paths: int = 1000
    seed: int = 0
    x0: float = 0.0
    q0: Optional[np.ndarray] = None
    threads: int = 1
    chunk: int = CHUNK
    majorant: str = "auto"  # "auto" uses the policy's analytic bound when it has one

    def __post_init__(self):
        n = self.model.n
        if isinstance(self.intensity, IntensityModel):
            self.intensity = (self.intensity,) * n
        self.intensity = tuple(self.intensity)
        if len(self.intensity) != n:
            raise ValidationError(f"need {n} intensity models")
        if self.arrival not in ARRIVALS:
            raise ValidationError(f"arrival must be one of {ARRIVALS}")
        if self.dt is None:
            self.dt = self.horizon / 500 if self.horizon > 0 else 1.0
        if not self.dt > 0:
            raise ValidationError("dt must be positive")
        if self.n_paths < 1 or self.chunk < 1 or self.threads < 1:
            raise ValidationError("n_paths, chunk and threads must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must be a 64-bit unsigned integer")
        self.q0 = np.zeros(n) if self.q0 is None else np.asarray(self.q0, dtype=float)
        if self.q0.shape != (n,) or np.any(self.q0 < 0):
            raise ValidationError("q0 must be a nonnegative vector of length n")
        if self.majorant not in ("auto", "step"):
            raise ValidationError("majorant must be 'auto' or 'step'")

    @property
    def horizon(self) -> float:
        return float(self.model.horizon)

    @property
    def n(self) -> int:
        return self.model.n


@dataclass
class SimulationSummary:
    Y: np.ndarray
    counts: np.ndarray  # (N, n) final bet counts
    outcome: np.ndarray  # (N, n) realised memberships
    revenue: np.ndarray = field(default=None)

    @property
    def n_paths(self):
        return self.Y.size

    def stats(self) -> dict:
        Y = self.Y
        q25, q50, q75 = np.quantile(Y, [0.25, 0.5, 0.75])  # linear interpolation
        sd = float(Y.std(ddof=1)) if Y.size > 1 else 0.0
        win = float(np.mean(Y > 0))
        return {
            "n": int(Y.size), "mean": float(Y.mean()), "sd": sd, "min": float(Y.min()),
            "q25": float(q25), "median": float(q50), "q75": float(q75), "max": float(Y.max()),
            "win_prob": win, "win_prob_se": math.sqrt(win * (1 - win) / Y.size),
        }

    def winners(self):
        return [";".join(str(i) for i in np.flatnonzero(row)) for row in self.outcome]

    def to_csv(self, params: dict) -> str:
        """One row per path: ``path_id, Y_T, count_i..., winner``."""
        n = self.counts.shape[1]
        buf = io.StringIO(newline="")
        buf.write(f"# params: {json.dumps(params, sort_keys=True)}\n")
        buf.write(",".join(["path_id", "Y_T"] + [f"count_{i}" for i in range(n)] + ["winner"]) + "\n")
        for k, (y, c, w) in enumerate(zip(self.Y, self.counts, self.winners())):
            buf.write(",".join([str(k), repr(float(y))] + [repr(float(v)) for v in c] + [w]) + "\n")
        return buf.getvalue()


# -- helpers ----------------------------------------------------------------------

def _rates(cfg: SimulationConfig, t, p, q=None):
    """Intensity matrix ``(m, n)`` under the configured policy."""
    models = cfg.intensity
    if all(m == models[0] for m in models):
        return np.asarray(cfg.policy.rates(models[0], t, p, q), dtype=float)
    cols = [np.asarray(cfg.policy.rates(m, t, p, q), dtype=float)[..., i] for i, m in enumerate(models)]
    return np.stack(cols, axis=-1)


def _prices(cfg, t, p, q=None):
    return np.asarray(cfg.policy(t, p, q), dtype=float)


def _global_bound(cfg: SimulationConfig):
    if cfg.majorant != "auto":
        return None
    bounds = [cfg.policy.rate_bound(m) for m in cfg.intensity]
    if any(b is None for b in bounds):
        return None
    return np.array(bounds, dtype=float)


def _group_states(model, start, path_of, times, t_start, rng):
    """Underlying state at sorted candidate times, advancing each path from
    ``(t_start, start[path])`` by exact independent increments."""
    m = times.size
    first = np.ones(m, dtype=bool)
    first[1:] = path_of[1:] != path_of[:-1]
    prev_t = np.empty(m)
    prev_t[first] = np.broadcast_to(t_start, start.shape)[path_of[first]]
    prev_t[~first] = times[:-1][~first[1:]]
    incr = model.increment(np.maximum(times - prev_t, 0.0), rng)
    csum = np.cumsum(incr)
    # subtract the running sum at each group's start to restart the cumsum per path
    group_start = np.maximum.accumulate(np.where(first, np.arange(m), 0))
    offset = csum[group_start] - incr[group_start]
    return start[path_of] + csum - offset


def _scatter_candidates(rng, paths, counts, t0, t1):
    """Sorted candidate times for each path: ``counts[k]`` uniform points on ``[t0, t1)``."""
    path_of = np.repeat(paths, counts)
    t0 = np.broadcast_to(t0, paths.shape)
    t1 = np.broadcast_to(t1, paths.shape)
    lo, hi = np.repeat(t0, counts), np.repeat(t1, counts)
    times = lo + (hi - lo) * rng.random(path_of.size)
    order = np.lexsort((times, path_of))
    return path_of[order], times[order]


def _accept(cfg, rng, path_of, times, states, bound, n_paths, counts, revenue):
    """Thinning step; ``bound`` is ``(n,)`` or per-candidate ``(m, n)``."""
    if path_of.size == 0:
        return
    p = cfg.model.conditional_prob(states, times)
    lam = _rates(cfg, times, p)
    u = _prices(cfg, times, p)
    bound = np.broadcast_to(bound, lam.shape)
    tot = bound.sum(axis=1)
    # candidate outcome proportional to its bound, accepted with prob lam/bound
    cum = np.cumsum(bound, axis=1) / tot[:, None]
    pick = np.minimum((rng.random(path_of.size)[:, None] > cum).sum(axis=1), cfg.n - 1)
    rows = np.arange(path_of.size)
    lam_pick, bnd_pick = lam[rows, pick], bound[rows, pick]
    if np.any(lam_pick > bnd_pick * (1 + 1e-12)):
        raise AssertionError("thinning majorant violated")
    hit = rng.random(path_of.size) * bnd_pick < lam_pick
    np.add.at(counts, (path_of[hit], pick[hit]), 1.0)
    revenue += np.bincount(path_of[hit], weights=u[rows, pick][hit], minlength=n_paths)


def _poisson_chunk(cfg: SimulationConfig, rng: np.random.Generator, n_paths: int):
    model, T, n = cfg.model, cfg.horizon, cfg.n
    counts = np.zeros((n_paths, n))
    revenue = np.zeros(n_paths)
    paths = np.arange(n_paths)
    state = np.full(n_paths, float(model.initial_state))
    policy = cfg.policy

    if isinstance(model, ConstantProbability) and isinstance(
        policy, (StaticPolicy, SqrtFeedback, LogRatioRootFeedback, TwoPiece)
    ):
        # piecewise-constant rates in time: draw the counts directly
        p = model.p[None, :]
        pieces = [(0.0, T)]
        if isinstance(policy, TwoPiece):
            cut = policy.t0 + policy.rho * policy.tau
            edges = np.unique(np.clip(np.concatenate([[0.0, T], cut]), 0.0, T))
            pieces = list(zip(edges[:-1], edges[1:]))
        for a, b in pieces:
            if b <= a:
                continue
            mid = np.array([0.5 * (a + b)])
            lam = _rates(cfg, mid, p)[0]
            u = _prices(cfg, mid, p)[0]
            k = rng.poisson(lam * (b - a), size=(n_paths, n)).astype(float)
            counts += k
            revenue += k @ u
        outcome = model.terminal_outcome(state, rng)
        return revenue, counts, outcome

    bound = _global_bound(cfg)
    if bound is not None:
        m = rng.poisson(bound.sum() * T, size=n_paths)
        path_of, times = _scatter_candidates(rng, paths, m, 0.0, T)
        states = _group_states(model, state, path_of, times, 0.0, rng)
        _accept(cfg, rng, path_of, times, states, bound, n_paths, counts, revenue)
        # advance each path from its last candidate to T
        last_t = np.zeros(n_paths)
        if path_of.size:
            ends = np.flatnonzero(np.r_[path_of[1:] != path_of[:-1], True])
            last_t[path_of[ends]] = times[ends]
            state[path_of[ends]] = states[ends]
        state = state + model.increment(T - last_t, rng)
    else:
        n_steps = max(1, int(round(T / cfg.dt)))
        grid = np.linspace(0.0, T, n_steps + 1)
        for s in range(n_steps):
            t0, t1 = grid[s], grid[s + 1]
            p0 = model.conditional_prob(state, np.full(n_paths, t0))
            lam_bar = SAFETY * _rates(cfg, np.full(n_paths, t0), p0)
            m = rng.poisson(lam_bar.sum(axis=1) * (t1 - t0))
            path_of, times = _scatter_candidates(rng, paths, m, t0, t1)
            states = _group_states(model, state, path_of, times, t0, rng)
            _accept(cfg, rng, path_of, times, states, lam_bar[path_of], n_paths, counts, revenue)
            last_t = np.full(n_paths, t0)
            if path_of.size:
                ends = np.flatnonzero(np.r_[path_of[1:] != path_of[:-1], True])
                last_t[path_of[ends]] = times[ends]
                state[path_of[ends]] = states[ends]
            state = state + model.increment(t1 - last_t, rng)
    outcome = model.terminal_outcome(state, rng)
    return revenue, counts, outcome


def _continuous_chunk(cfg: SimulationConfig, rng: np.random.Generator, n_paths: int):
    model, T, n = cfg.model, cfg.horizon, cfg.n
    counts = np.zeros((n_paths, n))
    revenue = np.zeros(n_paths)
    state = np.full(n_paths, float(model.initial_state))
    n_steps = int(round(T / cfg.dt)) if T > 0 else 0
    grid = np.linspace(0.0, T, n_steps + 1)
    for s in range(n_steps):
        t0, h = grid[s], grid[s + 1] - grid[s]
        tt = np.full(n_paths, t0)
        p = model.conditional_prob(state, tt)
        lam = _rates(cfg, tt, p)
        u = _prices(cfg, tt, p)
        # left-endpoint quadrature of dQ = lam dt and dX = u lam dt
        counts += lam * h
        revenue += np.sum(u * lam, axis=1) * h
        state = state + model.increment(np.full(n_paths, h), rng)
    outcome = model.terminal_outcome(state, rng)
    return revenue, counts, outcome


def _run(cfg: SimulationConfig, worker) -> SimulationSummary:
    sizes = [min(cfg.chunk, cfg.n_paths - s) for s in range(0, cfg.n_paths, cfg.chunk)]
    seqs = np.random.SeedSequence(cfg.seed).spawn(len(sizes))

    def job(k):
        return worker(cfg, np.random.default_rng(seqs[k]), sizes[k])

    if cfg.threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            parts = list(pool.map(job, range(len(sizes))))
    else:
        parts = [job(k) for k in range(len(sizes))]
    revenue = np.concatenate([r for r, _, _ in parts])
    counts = np.vstack([c for _, c, _ in parts]) + cfg.q0
    outcome = np.vstack([o for _, _, o in parts]).astype(np.int64)
    X = cfg.x0 + revenue
    Y = X - np.sum(counts * outcome, axis=1)
    return SimulationSummary(Y, counts, outcome, X)


def run_poisson(cfg: SimulationConfig) -> SimulationSummary:
    """Poisson arrivals generated by thinning; the underlying state is
    sampled exactly at every candidate time."""
    return _run(cfg, _poisson_chunk)


def run_continuous(cfg: SimulationConfig) -> SimulationSummary:
    """Continuous arrivals integrated by left-endpoint quadrature on the ``dt`` grid."""
    return _run(cfg, _continuous_chunk)


def run(cfg: SimulationConfig) -> SimulationSummary:
    return run_poisson(cfg) if cfg.arrival == "poisson" else run_continuous(cfg)


# -- coin analytics --------------------------------------------------------------------

def psi1(p):
    """Deterministic profit rate when heads occurs under ``u = sqrt(p)``, continuous arrivals."""
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0) or np.any(p >= 1):
        raise ValidationError("p must lie in (0, 1)")
    out = (p / (1 - p)) * (2 - np.sqrt(p) - 1 / np.sqrt(p)) + ((1 - p) / p) * (1 - np.sqrt(1 - p))
    return float(out) if out.ndim == 0 else out


def coin_rates(p: float):
    """Optimal intensities ``sqrt(p_i)(1 - sqrt(p_i))/(1 - p_i)`` for heads and tails."""
    s1, s2 = math.sqrt(p), math.sqrt(1 - p)
    return s1 / (1 + s1), s2 / (1 + s2)


def _strictly_below(x):
    """Largest integer strictly less than ``x``."""
    return np.ceil(x).astype(np.int64) - 1


def coin_profit_prob_exact(p: float, T: float, tail: float = 1e-12) -> float:
    """``P(Y_T > 0)`` for the coin under Poisson arrivals and ``u = sqrt(p)``."""
    if not 0 < p < 1:
        raise ValidationError("p must lie in (0, 1)")
    if not T > 0:
        raise ValidationError("T must be positive")
    l1, l2 = coin_rates(p)
    m1, m2 = l1 * T, l2 * T
    r1 = math.sqrt(1 - p) / (1 - math.sqrt(p))
    r2 = math.sqrt(p) / (1 - math.sqrt(1 - p))

    def side(m_outer, m_inner, ratio):
        kmax = int(poisson.isf(tail, m_outer)) + 2
        k = np.arange(1, kmax + 1)
        w = poisson.pmf(k, m_outer)
        cap = _strictly_below(ratio * k)
        inner = np.where(cap >= 0, pdtr(np.maximum(cap, 0), m_inner), 0.0)
        return float(np.sum(w * inner))

    return p * side(m2, m1, r1) + (1 - p) * side(m1, m2, r2)


def coin_config(p: float, T: float, arrival: str = "poisson", **kw) -> SimulationConfig:
    model = ConstantProbability([p, 1 - p], horizon=T, exclusive=True)
    return SimulationConfig(model, IntensityModel("ratio"), SqrtFeedback(), arrival=arrival, **kw)


# -- spread experiment ------------------------------------------------------------------

NBA_PARAMS = {"mu": 2.33, "sigma": 10.0, "T": 1.0, "kappa": 10_000.0, "thresholds": [0.0, 3.0]}


def nba_config(n_paths: int = 1000, seed: int = 0, mu=2.33, sigma=10.0, T=1.0,
               kappa=10_000.0, thresholds=(0.0, 3.0), **kw) -> SimulationConfig:
    model = BrownianSpreadModel(mu, sigma, T, tuple(thresholds), bands=True)
    kw.setdefault("chunk", 50)  # about 15000 candidate events per path
    return SimulationConfig(model, IntensityModel("ratio", kappa), SqrtFeedback(),
                            arrival="poisson", n_paths=n_paths, seed=seed, **kw)


def nba_experiment(n_paths: int = 1000, seed: int = 0, **kw) -> SimulationSummary:
    """Spread betting on three bands (win by 3+, win by under 3, lose) with
    ``u = sqrt(P_t)`` and Poisson arrivals."""
    return run_poisson(nba_config(n_paths, seed, **kw))


def nba_path(seed: int = 0, n_steps: int = 500, mu=2.33, sigma=10.0, T=1.0, thresholds=(0.0, 3.0)):
    """One path of the point differential and band probabilities on a uniform grid."""
    from .probability import simulate_path

    model = BrownianSpreadModel(mu, sigma, T, tuple(thresholds), bands=True)
    return simulate_path(model, n_steps, np.random.default_rng(seed))

