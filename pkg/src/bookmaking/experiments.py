"""Plot-ready data for the figures and tables, as small CSV tables."""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np

from .expdyn import ExpDynamicModel
from .intensity import IntensityModel
from .market import Partition
from .semistatic import SemiStaticProblem, solve_exp_independent, solve_exp_partition, worst_case_wealth
from .simulation import coin_config, coin_profit_prob_exact, nba_experiment, nba_path, run_poisson

BASE_EXP = {"p": 0.6, "q": [0, 0], "tau": 1.0, "beta": 10.0, "kappa": 1.0, "gamma": 2.0}
PARA_PARTITION = {"p": [0.5, 1 / 3, 1 / 6], "gamma": 2.0, "tau": 1.0}


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return repr(float(v))


@dataclass
class Table:
    name: str
    columns: list
    rows: list = field(default_factory=list)
    params: dict = field(default_factory=dict)

    def column(self, key):
        j = self.columns.index(key)
        return np.array([r[j] for r in self.rows], dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO(newline="")
        buf.write(f"# params: {json.dumps(self.params, sort_keys=True)}\n")
        buf.write(",".join(self.columns) + "\n")
        for r in self.rows:
            buf.write(",".join(fmt(v) for v in r) + "\n")
        return buf.getvalue()


def coin_model(p: float, gamma: float, beta: float, kappa: float, tau: float, caps=None):
    return ExpDynamicModel(Partition([p, 1 - p]), gamma, beta, kappa, tau, caps)


def exp_quote(p=0.6, q=(0, 0), tau=1.0, beta=10.0, kappa=1.0, gamma=2.0):
    """Feedback prices at time 0 with ``tau`` remaining, for the two-outcome coin."""
    m = coin_model(p, gamma, beta, kappa, tau)
    return m.optimal_quote(0.0, list(q)).u, m


# -- semi-static figures -------------------------------------------------------------

def fig1_data(gamma=2.0, tau=1.0, p_grid=None) -> Table:
    p_grid = np.round(np.arange(1, 100) / 100, 2) if p_grid is None else np.asarray(p_grid)
    u = solve_exp_independent(p_grid, gamma, tau)
    return Table("fig1", ["p", "u_hat"], [[p, v] for p, v in zip(p_grid, u)],
                 {"gamma": gamma, "tau": tau})


def fig2_data(gamma=2.0, tau=5.0, step=0.02) -> Table:
    grid = np.round(np.arange(step, 0.5, step), 10)
    rows = []
    for p1 in grid:
        for p2 in grid:
            p = [p1, p2, 1 - p1 - p2]
            sol = solve_exp_partition(p, [0, 0, 0], gamma, tau)
            rows.append([p1, p2, p[2], *sol.u, sol.residual])
    return Table("fig2", ["p1", "p2", "p3", "u1", "u2", "u3", "residual"], rows,
                 {"gamma": gamma, "tau": tau, "q": [0, 0, 0]})


def fig3_data(q1_grid=None, p=None, gamma=2.0, tau=1.0, x=0.0) -> Table:
    p = PARA_PARTITION["p"] if p is None else p
    q1_grid = np.round(np.linspace(0, 2, 21), 10) if q1_grid is None else np.asarray(q1_grid)
    rows = []
    for q1 in q1_grid:
        q = [q1, 0.0, 0.0]
        sol = solve_exp_partition(p, q, gamma, tau)
        prob = SemiStaticProblem(Partition(p), IntensityModel("ratio"), tau, x, q, "exponential", gamma)
        rows.append([q1, *sol.u, worst_case_wealth(prob, sol.u), sol.residual])
    return Table("fig3", ["q1", "u1", "u2", "u3", "worst_case_wealth", "residual"], rows,
                 {"p": list(p), "gamma": gamma, "tau": tau, "x": x})


# -- wealth maximisation ---------------------------------------------------------------

def coin_table(p=0.5, horizons=(1, 2, 5, 10), paths=0, seed=0, threads=1) -> Table:
    cols = ["T", "prob_exact"] + (["prob_mc", "prob_mc_se"] if paths else [])
    rows = []
    for T in horizons:
        row = [float(T), coin_profit_prob_exact(p, float(T))]
        if paths:
            st = run_poisson(coin_config(p, float(T), n_paths=paths, seed=seed, threads=threads)).stats()
            row += [st["win_prob"], st["win_prob_se"]]
        rows.append(row)
    params = {"p": p, "horizons": [float(h) for h in horizons]}
    if paths:
        params.update(paths=paths, seed=seed)
    return Table("coin", cols, rows, params)


def fig4_data(seed=0, n_steps=500) -> Table:
    times, states, probs = nba_path(seed, n_steps)
    rows = [[t, s, *pr] for t, s, pr in zip(times, states, probs)]
    return Table("fig4", ["t", "delta", "P1", "P2", "P3"], rows, {"seed": seed, "n_steps": n_steps})


TABLE1_COLUMNS = ["n", "mean", "sd", "min", "q25", "median", "q75", "max", "win_prob", "win_prob_se"]


def table1_data(paths=1000, seed=0, threads=1):
    summary = nba_experiment(paths, seed, threads=threads)
    st = summary.stats()
    tab = Table("table1", TABLE1_COLUMNS, [[st[c] for c in TABLE1_COLUMNS]],
                {"paths": paths, "seed": seed, "mu": 2.33, "sigma": 10.0, "T": 1.0, "kappa": 10000.0})
    return tab, summary


# -- exponential dynamic sensitivity ----------------------------------------------------

def _sweep(name, key, values, extra_cols=(), **base):
    params = dict(BASE_EXP, **base)
    rows = []
    for v in values:
        kw = dict(params, **{key: v})
        u, m = exp_quote(**kw)
        row = [v, *u]
        for col in extra_cols:
            if col == "H":
                row.append(m.H(0.0, kw["q"]))
            elif col == "V":
                row.append(m.value(0.0, kw.get("x", 1.0), kw["q"]))
        rows.append(row)
    params.pop(key)
    return Table(name, [key, "u1", "u2", *extra_cols], rows, params)


def fig5_beta(values=None) -> Table:
    values = np.linspace(5, 20, 11) if values is None else values
    return _sweep("fig5_beta", "beta", values, ("H",))


def fig5_tau(values=None) -> Table:
    values = np.linspace(0.1, 10, 100) if values is None else values
    return _sweep("fig5_tau", "tau", values)


def fig6_gamma(values=None, x=1.0) -> Table:
    values = np.linspace(1, 4, 11) if values is None else values
    params = dict(BASE_EXP)
    rows = []
    for g in values:
        u, m = exp_quote(**dict(params, gamma=g))
        rows.append([g, *u, m.value(0.0, x, params["q"])])
    params.pop("gamma")
    params["x"] = x
    return Table("fig6_gamma", ["gamma", "u1", "u2", "V"], rows, params)


def fig7_p(values=None) -> Table:
    values = np.linspace(0.3, 0.7, 11) if values is None else values
    return _sweep("fig7_p", "p", values)


def fig7_q(values=None, q2=5) -> Table:
    values = np.arange(0, 11) if values is None else values
    params = dict(BASE_EXP)
    rows = []
    for q1 in values:
        u, _ = exp_quote(**dict(params, q=(int(q1), q2)))
        rows.append([int(q1), *u])
    params["q2"] = q2
    params.pop("q")
    return Table("fig7_q", ["q1", "u1", "u2"], rows, params)


def all_figures(seed=0, paths=1000, threads=1):
    tables = [fig1_data(), fig2_data(), fig3_data(), fig4_data(seed), fig5_beta(), fig5_tau(),
              fig6_gamma(), fig7_p(), fig7_q(), coin_table()]
    tables.append(table1_data(paths, seed, threads)[0])
    return tables
