"""Command-line entry point: ``bookmaking <command> [options]``.

Exit codes: 0 success, 2 invalid input or configuration, 3 numerical failure.
Every command prints its main table and writes CSV files to the output
directory (``--out``, else ``$BOOKMAKING_OUTPUT_DIR``, else ``.``).  Files are
written only after the whole computation succeeds.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import experiments as ex
from .config import load_config, parse_config
from .errors import BookmakingError, NumericalError
from .expdyn import ExpDynamicModel
from .intensity import IntensityModel
from .market import Independent, Partition
from .probability import BrownianSpreadModel, ConstantProbability, PoissonGoalModel
from .semistatic import SemiStaticProblem, optimize_semistatic, solve_exp_independent, solve_exp_partition
from .simulation import SimulationConfig, nba_config, run
from .wealth import LogRatioRootFeedback, SqrtFeedback, StaticPolicy, method3_consistency, pointwise_optimize

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3
ENV_OUT = "BOOKMAKING_OUTPUT_DIR"
FIGURES = {
    "fig1": ex.fig1_data, "fig2": ex.fig2_data, "fig3": ex.fig3_data, "fig4": None,
    "fig5_beta": ex.fig5_beta, "fig5_tau": ex.fig5_tau, "fig6_gamma": ex.fig6_gamma,
    "fig7_p": ex.fig7_p, "fig7_q": ex.fig7_q, "coin": ex.coin_table, "table1": None,
}


# -- execution --------------------------------------------------------------------------

def _intensity(block) -> IntensityModel:
    return IntensityModel(block.family, block.kappa, block.beta)


def _price(cfg, prm):
    model = _intensity(prm.intensity)
    p = np.asarray(prm.p, dtype=float)
    u = np.atleast_1d(pointwise_optimize(model, p))
    m3 = method3_consistency(p, model)
    rates = model.rate(p, u)
    rows = [[pi, ui, li, li * (ui - pi), ri, vi]
            for pi, ui, li, ri, vi in zip(p, u, rates, np.atleast_1d(m3.rate), np.atleast_1d(m3.price))]
    tab = ex.Table("price", ["p", "u", "rate", "margin_rate", "rate_method3", "u_method3"], rows,
                   {"intensity": model.to_dict()})
    return [tab]


def _market(block):
    if block.kind == "constant":
        return ConstantProbability(block.p, block.horizon, block.exclusive)
    if block.kind == "goals":
        return PoissonGoalModel(block.rate, block.horizon, tuple(block.goals), block.at_least)
    return BrownianSpreadModel(block.mu, block.sigma, block.horizon, tuple(block.thresholds), bands=True)


def _policy(block):
    if block.kind == "sqrt":
        return SqrtFeedback()
    if block.kind == "logratio":
        return LogRatioRootFeedback()
    return StaticPolicy(block.u)


def _simulate(cfg, prm):
    sim = SimulationConfig(_market(prm.market), _intensity(prm.intensity), _policy(prm.policy),
                           arrival=prm.arrival, dt=cfg.dt, n_paths=cfg.paths, seed=cfg.seed,
                           threads=cfg.threads)
    summary = run(sim)
    params = {"seed": cfg.seed, "paths": cfg.paths, "dt": sim.dt, **prm.model_dump()}
    return _summary_tables("simulate", summary, params)


def _summary_tables(name, summary, params):
    st = summary.stats()
    tab = ex.Table(f"{name}_summary", ex.TABLE1_COLUMNS, [[st[c] for c in ex.TABLE1_COLUMNS]], params)
    return [tab, (f"{name}_paths", summary.to_csv(params))]


def _coin(cfg, prm):
    paths = cfg.paths if prm.monte_carlo else 0
    return [ex.coin_table(prm.p, prm.horizons, paths, cfg.seed, cfg.threads)]


def _nba(cfg, prm):
    kw = prm.model_dump()
    sim = nba_config(cfg.paths, cfg.seed, threads=cfg.threads, dt=cfg.dt, **kw)
    summary = run(sim)
    params = {"seed": cfg.seed, "paths": cfg.paths, "dt": sim.dt, **kw}
    tab, paths = _summary_tables("nba", summary, params)
    tab.name = "table1"
    return [tab, paths]


def _expstatic(cfg, prm):
    p = np.asarray(prm.p, dtype=float)
    q = np.zeros_like(p) if prm.q is None else np.asarray(prm.q, dtype=float)
    gamma, util = prm.utility.gamma, prm.utility.kind
    residual = 0.0
    if util == "exponential" and prm.structure == "independent":
        u = np.atleast_1d(solve_exp_independent(p, gamma, prm.tau, q, prm.kappa))
    elif util == "exponential":
        sol = solve_exp_partition(p, q, gamma, prm.tau, prm.kappa)
        u, residual = sol.u, sol.residual
    else:
        structure = Independent(p) if prm.structure == "independent" else Partition(p)
        res = optimize_semistatic(SemiStaticProblem(structure, IntensityModel("ratio", prm.kappa),
                                                    prm.tau, 0.0, q, util, None))
        u, residual = res.u, res.residual
    rows = [[i, pi, qi, ui] for i, (pi, qi, ui) in enumerate(zip(p, q, u))]
    params = dict(prm.model_dump(), residual=float(residual))
    return [ex.Table("expstatic", ["outcome", "p", "q", "u"], rows, params)]


def _expdyn(cfg, prm):
    gamma = prm.utility.gamma
    if prm.utility.kind != "exponential":
        raise BookmakingError("expdyn needs exponential utility")
    model = ExpDynamicModel(Partition(prm.p), gamma, prm.beta, prm.kappa, prm.tau, prm.caps)
    quote = model.optimal_quote(0.0, prm.q)
    series = model.G_capped(0.0, prm.q) if prm.caps else model.G(0.0, prm.q)
    rows = [[i, pi, qi, ui, bool(ci)] for i, (pi, qi, ui, ci)
            in enumerate(zip(model.p, prm.q, quote.u, quote.clamped))]
    params = prm.model_dump()
    quotes = ex.Table("expdyn_quotes", ["outcome", "p", "q", "u", "clamped"], rows, params)
    value = ex.Table("expdyn_value", ["G", "H", "V", "K", "tail_bound"],
                     [[series.value, model.H(0.0, prm.q), model.value(0.0, prm.x, prm.q),
                       int(series.K), series.tail_bound]], params)
    return [quotes, value]


def _figures(cfg, prm):
    names = list(FIGURES) if not prm.only else prm.only
    unknown = sorted(set(names) - set(FIGURES))
    if unknown:
        raise BookmakingError(f"unknown figure(s) {unknown}; choose from {sorted(FIGURES)}")
    out = []
    for name in names:
        if name == "fig4":
            out.append(ex.fig4_data(cfg.seed))
        elif name == "table1":
            out.append(ex.table1_data(cfg.paths, cfg.seed, cfg.threads)[0])
        else:
            out.append(FIGURES[name]())
    return out


RUNNERS = {"price": _price, "simulate": _simulate, "coin": _coin, "nba": _nba,
           "expstatic": _expstatic, "expdyn": _expdyn, "figures": _figures}


def execute(cfg, params) -> dict:
    """Run one experiment; returns ``{filename: csv_text}`` in a fixed order."""
    files = {}
    for item in RUNNERS[cfg.experiment](cfg, params):
        name, text = (item.name, item.to_csv()) if isinstance(item, ex.Table) else item
        files[f"{name}.csv"] = text
    return files


def write_outputs(files: dict, out_dir) -> list:
    """Write each file through a temporary sibling and an atomic rename."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    staged = []
    try:
        for name, text in files.items():
            fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=out)
            with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
            staged.append((tmp, out / name))
    except BaseException:
        for tmp, _ in staged:
            os.unlink(tmp)
        raise
    for tmp, final in staged:
        os.replace(tmp, final)
    return [final for _, final in staged]


# -- argument parsing -------------------------------------------------------------------

def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _common() -> argparse.ArgumentParser:
    c = argparse.ArgumentParser(add_help=False)
    S = argparse.SUPPRESS
    c.add_argument("--seed", type=int, default=S, help="RNG seed (default 0)")
    c.add_argument("--paths", type=int, default=S, help="Monte Carlo paths (default 1000)")
    c.add_argument("--dt", type=float, default=S, help="time step (default horizon/500)")
    c.add_argument("--threads", type=int, default=S, help="worker threads (default 1)")
    c.add_argument("--out", default=S, help=f"output directory (default ${ENV_OUT} or .)")
    return c


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    ap = argparse.ArgumentParser(prog="bookmaking", parents=[common],
                                 description="Bookmaker pricing solvers and market simulation.")
    sub = ap.add_subparsers(dest="command", required=True)

    def cmd(name, help_):
        return sub.add_parser(name, parents=[common], help=help_)

    def add_intensity(sp):
        sp.add_argument("--family", choices=["ratio", "logratio", "exponential"], default="ratio")
        sp.add_argument("--kappa", type=float, default=1.0)
        sp.add_argument("--beta", type=float, default=None)

    def add_gamma(sp):
        sp.add_argument("--gamma", type=float, default=2.0, help="risk aversion")
        sp.add_argument("--utility", choices=["exponential", "identity"], default="exponential")

    sp = cmd("price", "risk-neutral optimal prices")
    sp.add_argument("--p", type=_floats, default=[0.25, 0.5, 0.75])
    add_intensity(sp)

    sp = cmd("simulate", "simulate a market under a pricing policy")
    sp.add_argument("--market", choices=["constant", "goals", "spread"], default="constant")
    sp.add_argument("--p", type=_floats, default=[0.5, 0.5])
    sp.add_argument("--independent", action="store_true", help="constant events are not exclusive")
    sp.add_argument("--horizon", type=float, default=1.0)
    sp.add_argument("--rate", type=float, default=2.5, help="goal rate")
    sp.add_argument("--goals", type=_ints, default=[1, 2, 3])
    sp.add_argument("--exact-goals", action="store_true", help="events {N=g} instead of {N>=g}")
    sp.add_argument("--mu", type=float, default=2.33)
    sp.add_argument("--sigma", type=float, default=10.0)
    sp.add_argument("--thresholds", type=_floats, default=[0.0, 3.0])
    add_intensity(sp)
    sp.add_argument("--policy", choices=["sqrt", "logratio", "static"], default="sqrt")
    sp.add_argument("--u", type=_floats, default=None, help="static prices")
    sp.add_argument("--arrival", choices=["poisson", "continuous"], default="poisson")

    sp = cmd("coin", "profit probability for the fair-coin market")
    sp.add_argument("--p", type=float, default=0.5)
    sp.add_argument("--horizons", type=_floats, default=[1.0, 2.0, 5.0, 10.0])
    sp.add_argument("--mc", action="store_true", help="add a Monte Carlo estimate")

    sp = cmd("nba", "three-band spread betting experiment")
    sp.add_argument("--mu", type=float, default=2.33)
    sp.add_argument("--sigma", type=float, default=10.0)
    sp.add_argument("--T", type=float, default=1.0)
    sp.add_argument("--kappa", type=float, default=10_000.0)
    sp.add_argument("--thresholds", type=_floats, default=[0.0, 3.0])

    sp = cmd("expstatic", "optimal static prices")
    sp.add_argument("--structure", choices=["independent", "partition"], default="partition")
    sp.add_argument("--p", type=_floats, default=[0.5, 1 / 3, 1 / 6])
    sp.add_argument("--q", type=_floats, default=None)
    sp.add_argument("--tau", type=float, default=1.0)
    sp.add_argument("--kappa", type=float, default=1.0)
    add_gamma(sp)

    sp = cmd("expdyn", "feedback prices under exponential utility and exponential intensity")
    sp.add_argument("--p", type=_floats, default=[0.6, 0.4])
    sp.add_argument("--q", type=_ints, default=[0, 0])
    sp.add_argument("--tau", type=float, default=1.0)
    sp.add_argument("--beta", type=float, default=10.0)
    sp.add_argument("--kappa", type=float, default=1.0)
    sp.add_argument("--caps", type=_ints, default=None)
    sp.add_argument("--x", type=float, default=0.0)
    add_gamma(sp)

    sp = cmd("figures", "write plot data for all figures and tables")
    sp.add_argument("--only", type=lambda s: [v for v in s.split(",") if v], default=None,
                    help=f"comma-separated subset of {','.join(FIGURES)}")

    sp = cmd("run", "run an experiment from a JSON config")
    sp.add_argument("config")
    return ap


def _config_from_args(a) -> dict:
    cmd = a.command
    if cmd == "price":
        params = {"p": a.p, "intensity": {"family": a.family, "kappa": a.kappa, "beta": a.beta}}
    elif cmd == "simulate":
        params = {"market": {"kind": a.market, "p": a.p, "exclusive": not a.independent,
                             "horizon": a.horizon, "rate": a.rate, "goals": a.goals,
                             "at_least": not a.exact_goals, "mu": a.mu, "sigma": a.sigma,
                             "thresholds": a.thresholds},
                  "intensity": {"family": a.family, "kappa": a.kappa, "beta": a.beta},
                  "policy": {"kind": a.policy, "u": a.u}, "arrival": a.arrival}
    elif cmd == "coin":
        params = {"p": a.p, "horizons": a.horizons, "monte_carlo": a.mc}
    elif cmd == "nba":
        params = {"mu": a.mu, "sigma": a.sigma, "T": a.T, "kappa": a.kappa, "thresholds": a.thresholds}
    elif cmd == "expstatic":
        params = {"structure": a.structure, "p": a.p, "q": a.q, "tau": a.tau, "kappa": a.kappa,
                  "utility": {"kind": a.utility, "gamma": a.gamma}}
    elif cmd == "expdyn":
        params = {"p": a.p, "q": a.q, "tau": a.tau, "beta": a.beta, "kappa": a.kappa, "caps": a.caps,
                  "x": a.x, "utility": {"kind": a.utility, "gamma": a.gamma}}
    else:
        params = {"only": a.only}
    return {"experiment": cmd, "params": params}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    flags = {k: getattr(args, k) for k in ("seed", "paths", "dt", "threads") if hasattr(args, k)}
    try:
        if args.command == "run":
            cfg, params = load_config(args.config)
            if flags:
                cfg = cfg.model_copy(update=flags)
                cfg, params = parse_config(cfg.model_dump())
        else:
            cfg, params = parse_config({**_config_from_args(args), **flags})
        out_dir = getattr(args, "out", None) or cfg.output or os.environ.get(ENV_OUT) or "."
        files = execute(cfg, params)
        written = write_outputs(files, out_dir)
    except NumericalError as e:
        print(f"error: numerical failure in {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (BookmakingError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    first = next(iter(files.values()))
    sys.stdout.write(first)
    for path in written:
        print(f"# wrote {path}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
