"""Outcome space, market state and settlement accounting."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import ValidationError

PROB_TOL = 1e-12
MAX_ENUMERATED_INDEPENDENT = 20


def _as_prob_vector(p, name="p") -> np.ndarray:
    arr = np.atleast_1d(np.asarray(p, dtype=float))
    if arr.ndim != 1 or arr.size == 0:
        raise ValidationError(f"{name} must be a non-empty 1-D vector")
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise ValidationError(f"every entry of {name} must lie in (0, 1), got {arr.tolist()}")
    return arr


class OutcomeStructure:
    """Joint law of the indicator vector ``(1_{A_1}, ..., 1_{A_n})``.

    Subclasses differ only in how the law is specified; every structure can
    be reduced to a finite list of atoms via :meth:`atoms`.
    """

    kind: str = ""

    @property
    def n(self) -> int:
        return len(self.marginals)

    @property
    def marginals(self) -> np.ndarray:
        raise NotImplementedError

    def atoms(self):
        """``(probs, members)`` with ``members`` an ``(m, n)`` 0/1 matrix."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw ``size`` realised membership vectors, shape ``(size, n)``."""
        probs, members = self.atoms()
        idx = rng.choice(len(probs), size=size, p=probs)
        return members[idx]


@dataclass(frozen=True, eq=False)
class Partition(OutcomeStructure):
    """Mutually exclusive, exhaustive outcomes."""

    p: np.ndarray
    kind: str = field(default="partition", init=False)

    def __post_init__(self):
        arr = _as_prob_vector(self.p)
        if abs(arr.sum() - 1.0) > PROB_TOL:
            raise ValidationError(f"partition probabilities sum to {arr.sum()!r}, not 1")
        object.__setattr__(self, "p", arr)

    @property
    def marginals(self):
        return self.p

    def atoms(self):
        return self.p.copy(), np.eye(self.n, dtype=np.int64)

    def to_dict(self):
        return {"kind": "partition", "p": self.p.tolist()}


@dataclass(frozen=True, eq=False)
class Independent(OutcomeStructure):
    """Mutually independent events with the given marginals."""

    p: np.ndarray
    kind: str = field(default="independent", init=False)

    def __post_init__(self):
        object.__setattr__(self, "p", _as_prob_vector(self.p))

    @property
    def marginals(self):
        return self.p

    def atoms(self):
        n = self.n
        if n > MAX_ENUMERATED_INDEPENDENT:
            raise ValidationError(
                f"refusing to enumerate 2**{n} atoms; use the factorised formulas instead"
            )
        members = ((np.arange(2**n)[:, None] >> np.arange(n)[::-1]) & 1).astype(np.int64)
        members = members[::-1]  # all-ones atom first
        probs = np.prod(np.where(members == 1, self.p, 1.0 - self.p), axis=1)
        return probs, members

    def sample(self, rng, size):
        return (rng.random((size, self.n)) < self.p).astype(np.int64)

    def to_dict(self):
        return {"kind": "independent", "p": self.p.tolist()}


@dataclass(frozen=True, eq=False)
class Atoms(OutcomeStructure):
    """Explicit finite joint law; an all-zero membership row is a residual atom."""

    probs: np.ndarray
    members: np.ndarray
    kind: str = field(default="atoms", init=False)

    def __post_init__(self):
        probs = np.atleast_1d(np.asarray(self.probs, dtype=float))
        members = np.atleast_2d(np.asarray(self.members))
        if probs.ndim != 1 or members.shape[0] != probs.size or members.shape[1] == 0:
            raise ValidationError("need one membership row per atom and n >= 1")
        if not np.all(np.isin(members, (0, 1))):
            raise ValidationError("membership entries must be 0 or 1")
        if np.any(probs < 0) or not np.all(np.isfinite(probs)):
            raise ValidationError("atom probabilities must be nonnegative")
        if abs(probs.sum() - 1.0) > PROB_TOL:
            raise ValidationError(f"atom probabilities sum to {probs.sum()!r}, not 1")
        members = members.astype(np.int64)
        marg = probs @ members
        if np.any(marg <= 0) or np.any(marg >= 1):
            raise ValidationError(f"every event needs probability in (0, 1), got {marg.tolist()}")
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "members", members)

    @classmethod
    def from_disjoint(cls, p: Sequence[float]) -> "Atoms":
        """Mutually exclusive events, with a residual atom if ``sum(p) < 1``."""
        arr = _as_prob_vector(p)
        rest = 1.0 - arr.sum()
        if rest < -PROB_TOL:
            raise ValidationError("disjoint probabilities exceed 1")
        members = np.eye(arr.size, dtype=np.int64)
        if rest > PROB_TOL:
            arr = np.append(arr, rest)
            members = np.vstack([members, np.zeros(members.shape[1], dtype=np.int64)])
        return cls(arr / arr.sum(), members)

    @property
    def marginals(self):
        return self.probs @ self.members

    def atoms(self):
        return self.probs.copy(), self.members.copy()

    def to_dict(self):
        return {"kind": "atoms", "probs": self.probs.tolist(), "members": self.members.tolist()}


def structure_from_dict(data: dict) -> OutcomeStructure:
    kind = data.get("kind")
    if kind == "partition":
        return Partition(data["p"])
    if kind == "independent":
        return Independent(data["p"])
    if kind == "atoms":
        return Atoms(data["probs"], data["members"])
    raise ValidationError(f"unknown outcome structure kind {kind!r}")


def atom_distribution(structure: OutcomeStructure):
    """Canonical atom list ``[(prob, membership tuple), ...]``."""
    probs, members = structure.atoms()
    return [(float(pr), tuple(int(v) for v in row)) for pr, row in zip(probs, members)]


def log_exp_payout_moment(structure: OutcomeStructure, q, gamma: float):
    """``log E exp(gamma * sum_i q_i 1_{A_i})``; broadcasts over leading axes of ``q``."""
    if gamma <= 0:
        raise ValidationError("risk aversion gamma must be positive")
    q = np.asarray(q, dtype=float)
    if q.shape[-1] != structure.n:
        raise ValidationError(f"book has {q.shape[-1]} entries, structure has {structure.n}")
    if np.any(q < 0):
        raise ValidationError("book entries must be nonnegative")
    if isinstance(structure, Independent):
        p = structure.p
        # log(p e^{g q} + 1 - p) written to stay finite for large q
        z = gamma * q
        terms = z + np.log(p + (1.0 - p) * np.exp(-z))
        return terms.sum(axis=-1)
    probs, members = structure.atoms()
    expo = gamma * (q @ members.T)  # (..., m)
    return logsumexp(expo, b=probs, axis=-1)


def exp_payout_moment(structure: OutcomeStructure, q, gamma: float):
    """``a(q) = E exp(gamma * sum_i q_i 1_{A_i})``."""
    out = np.exp(log_exp_payout_moment(structure, q, gamma))
    return float(out) if np.ndim(out) == 0 else out


def settle(revenue, book, outcome):
    """Terminal wealth after paying one unit per winning bet held."""
    book = np.asarray(book, dtype=float)
    outcome = np.asarray(outcome, dtype=float)
    if np.any(book < 0):
        raise ValidationError("book entries must be nonnegative")
    if not (np.all(np.isfinite(book)) and np.all(np.isfinite(revenue))):
        raise ValidationError("settlement inputs must be finite")
    out = np.asarray(revenue, dtype=float) - np.sum(book * outcome, axis=-1)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class MarketState:
    t: float
    x: float
    p: np.ndarray
    q: np.ndarray
    horizon: float = 1.0

    def __post_init__(self):
        p = np.atleast_1d(np.asarray(self.p, dtype=float))
        q = np.atleast_1d(np.asarray(self.q, dtype=float))
        if p.shape != q.shape:
            raise ValidationError("p and q must have the same length")
        if not 0.0 <= self.t <= self.horizon:
            raise ValidationError(f"t={self.t} outside [0, {self.horizon}]")
        if np.any(p < 0) or np.any(p > 1):
            raise ValidationError("conditional probabilities must lie in [0, 1]")
        if np.any(q < 0):
            raise ValidationError("book entries must be nonnegative")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)


@dataclass(frozen=True)
class BetLedger:
    """Cumulative revenue and per-outcome bet counts."""

    revenue: float
    counts: np.ndarray

    @classmethod
    def empty(cls, n: int, revenue: float = 0.0, counts=None) -> "BetLedger":
        c = np.zeros(n) if counts is None else np.asarray(counts, dtype=float)
        return cls(float(revenue), c)

    def record(self, outcome: int, price: float, amount: float = 1.0) -> "BetLedger":
        if amount < 0 or price < 0:
            raise ValidationError("bets only add nonnegative stake and revenue")
        counts = self.counts.copy()
        counts[outcome] += amount
        return BetLedger(self.revenue + price * amount, counts)

    def settle(self, outcome) -> float:
        return settle(self.revenue, self.counts, outcome)
