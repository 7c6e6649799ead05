import json

import pytest

from bookmaking import cli
from bookmaking.errors import NumericalError


def run(argv, capsys):
    code = cli.main(argv)
    return code, capsys.readouterr()


def test_coin_command(tmp_path, capsys):
    code, out = run(["coin", "--out", str(tmp_path)], capsys)
    assert code == 0
    text = (tmp_path / "coin.csv").read_text()
    lines = text.splitlines()
    assert lines[0].startswith("# params: ")
    assert json.loads(lines[0][len("# params: "):])["p"] == 0.5
    rows = [line.split(",") for line in lines[2:]]
    assert [float(r[1]) for r in rows] == pytest.approx([0.3367, 0.5443, 0.7682, 0.8649], abs=5e-4)
    assert text in out.out


def test_price_command(tmp_path, capsys):
    code, _ = run(["price", "--p", "0.25", "--out", str(tmp_path)], capsys)
    assert code == 0
    row = (tmp_path / "price.csv").read_text().splitlines()[2].split(",")
    assert float(row[1]) == pytest.approx(0.5)


def test_invalid_value_exits_2_and_writes_nothing(tmp_path, capsys):
    code, out = run(["coin", "--p", "1.5", "--out", str(tmp_path)], capsys)
    assert code == 2 and "params.p" in out.err
    assert list(tmp_path.iterdir()) == []


def test_unparseable_flag_exits_2(capsys):
    with pytest.raises(SystemExit) as e:
        cli.main(["coin", "--p", "abc"])
    assert e.value.code == 2


def test_numerical_failure_exits_3_and_writes_nothing(tmp_path, capsys, monkeypatch):
    def boom(cfg, prm):
        raise NumericalError("price", "root did not converge")
    monkeypatch.setitem(cli.RUNNERS, "price", boom)
    code, out = run(["price", "--out", str(tmp_path)], capsys)
    assert code == 3 and "numerical failure" in out.err
    assert list(tmp_path.iterdir()) == []


def test_failure_after_first_table_leaves_no_partial_output(tmp_path, capsys, monkeypatch):
    def half(cfg, prm):
        yield cli.ex.Table("first", ["a"], [[1]], {})
        raise NumericalError("nba", "second table")
    monkeypatch.setitem(cli.RUNNERS, "nba", half)
    code, _ = run(["nba", "--out", str(tmp_path)], capsys)
    assert code == 3 and list(tmp_path.iterdir()) == []


def test_reruns_are_byte_identical_across_threads(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    base = ["simulate", "--market", "goals", "--paths", "300", "--seed", "12"]
    assert run(base + ["--threads", "1", "--out", str(a)], capsys)[0] == 0
    assert run(base + ["--threads", "3", "--out", str(b)], capsys)[0] == 0
    for name in ("simulate_summary.csv", "simulate_paths.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_output_dir_from_environment(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv(cli.ENV_OUT, str(tmp_path / "env"))
    assert run(["expdyn", "--caps", "3,3"], capsys)[0] == 0
    assert (tmp_path / "env" / "expdyn_quotes.csv").exists()
    assert (tmp_path / "env" / "expdyn_value.csv").exists()


def test_run_config_with_flag_override(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"experiment": "expstatic", "output": str(tmp_path / "o"),
                               "params": {"q": [1.0, 0.0, 0.0]}}))
    assert run(["run", str(cfg)], capsys)[0] == 0
    lines = (tmp_path / "o" / "expstatic.csv").read_text().splitlines()
    assert lines[1] == "outcome,p,q,u"
    assert len(lines) == 5
    assert run(["run", str(cfg), "--seed", "-3"], capsys)[0] == 2


def test_run_bad_config_exits_2(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"experiment": "coin", "params": {"p": 2}}))
    code, out = run(["run", str(cfg), "--out", str(tmp_path / "o")], capsys)
    assert code == 2 and not (tmp_path / "o").exists()


def test_figures_unknown_name(tmp_path, capsys):
    code, out = run(["figures", "--only", "fig99", "--out", str(tmp_path)], capsys)
    assert code == 2 and "fig99" in out.err


def test_figures_subset(tmp_path, capsys):
    assert run(["figures", "--only", "fig1,fig7_p", "--out", str(tmp_path)], capsys)[0] == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == ["fig1.csv", "fig7_p.csv"]
