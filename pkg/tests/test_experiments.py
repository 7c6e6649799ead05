import math

import numpy as np
import pytest

from bookmaking import experiments as ex
from bookmaking.semistatic import solve_exp_independent


def test_fmt():
    assert [ex.fmt(True), ex.fmt(np.int64(3)), ex.fmt("a"), ex.fmt(0.1)] == ["true", "3", "a", "0.1"]


def test_table_csv_round_trip():
    tab = ex.Table("t", ["x", "y"], [[1, 0.5], [2, 0.25]], {"z": 1})
    lines = tab.to_csv().splitlines()
    assert lines == ['# params: {"z": 1}', "x,y", "1,0.5", "2,0.25"]
    np.testing.assert_array_equal(tab.column("y"), [0.5, 0.25])
    back = [[float(v) for v in line.split(",")] for line in lines[2:]]
    assert back == [[1.0, 0.5], [2.0, 0.25]]


def test_fig1_is_independent_solver():
    tab = ex.fig1_data(p_grid=[0.2, 0.5])
    np.testing.assert_allclose(tab.column("u_hat"), solve_exp_independent(np.array([0.2, 0.5]), 2.0, 1.0))


def test_fig2_small_grid_has_valid_prices():
    tab = ex.fig2_data(step=0.1)
    assert len(tab.rows) == 16
    u = np.array([[r[3], r[4], r[5]] for r in tab.rows])
    assert np.all((u > 0) & (u < 1))
    assert tab.column("residual").max() < 1e-10


def test_fig3_zero_book_has_positive_worst_case():
    tab = ex.fig3_data(q1_grid=[0.0])
    assert tab.column("worst_case_wealth")[0] > 0


def test_coin_table_with_monte_carlo():
    tab = ex.coin_table(horizons=(1,), paths=2000, seed=3)
    row = tab.rows[0]
    assert tab.columns == ["T", "prob_exact", "prob_mc", "prob_mc_se"]
    assert abs(row[2] - row[1]) < 4 * row[3]


def test_fig4_probabilities_sum_to_one():
    tab = ex.fig4_data(seed=2, n_steps=50)
    P = np.array([r[2:] for r in tab.rows])
    assert P.shape == (51, 3)
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)


def test_sweeps_shape_and_extra_columns():
    tab = ex.fig5_beta(values=[5.0, 10.0])
    assert tab.columns == ["beta", "u1", "u2", "H"] and "beta" not in tab.params
    g = ex.fig6_gamma(values=[2.0])
    u, m = ex.exp_quote(gamma=2.0)
    assert g.rows[0][3] == pytest.approx(m.value(0.0, 1.0, [0, 0]))
    np.testing.assert_allclose(g.rows[0][1:3], u)
    q = ex.fig7_q(values=[0, 1])
    assert q.params["q2"] == 5 and q.columns == ["q1", "u1", "u2"]


def test_fig5_tau_prices_decrease_and_flatten():
    tab = ex.fig5_tau(values=[1.0, 2.0, 5.0, 10.0])
    for col in ("u1", "u2"):
        d = np.diff(tab.column(col))
        assert np.all(d < 0) and np.all(np.abs(np.diff(d)) > 0) and abs(d[-1]) < abs(d[0])
    assert tab.column("u1")[0] == pytest.approx(0.772885, abs=1e-6)
    assert math.isclose(tab.params["beta"], 10.0)
