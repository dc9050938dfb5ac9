import csv
import io
import json

import numpy as np
import pytest

from tcbo.cli import main, max_relative_gap
from tcbo.model import DiscreteModel, load_model, save_model
from tcbo.oracle import brute_force
from tcbo.solvers import read_trace_csv


@pytest.fixture
def sg10(tmp_path):
    path = tmp_path / "sg.model"
    assert main(["gen", "--rows", "10", "--cols", "10", "--coupling", "9", "--field", "1",
                 "--seed", "42", "-o", str(path)]) == 0
    return path


def test_gen_10x10(sg10, capsys):
    m = load_model(sg10)
    assert m.var_count == 100 and len(m.factors) == 280


def test_gen_1x1(tmp_path, capsys):
    path = tmp_path / "one.model"
    assert main(["gen", "--rows", "1", "--cols", "1", "-o", str(path)]) == 0
    assert "vars=1 factors=1" in capsys.readouterr().out
    m = load_model(path)
    assert m.var_count == 1 and len(m.factors) == 1


def test_gen_is_byte_identical(tmp_path):
    a, b = tmp_path / "a.model", tmp_path / "b.model"
    for p in (a, b):
        main(["gen", "--rows", "3", "--cols", "4", "--seed", "5", "-o", str(p)])
    assert a.read_bytes() == b.read_bytes()


@pytest.mark.parametrize("args", [["--rows", "0", "--cols", "2"], ["--rows", "2"],
                                  ["--rows", "2", "--cols", "2", "--coupling", "-1"]])
def test_gen_usage_errors(tmp_path, args, capsys):
    with pytest.raises(SystemExit) as exit_:
        code = main(["gen", *args, "-o", str(tmp_path / "x.model")])
        raise SystemExit(code)
    assert exit_.value.code == 2


def test_solve_1x2_trws_sum_exact(tmp_path):
    model = tmp_path / "pair.model"
    main(["gen", "--rows", "1", "--cols", "2", "--seed", "3", "-o", str(model)])
    out = tmp_path / "t.csv"
    assert main(["solve", str(model), "--alg", "trws", "--mode", "sum", "--chains", "grid",
                 "-o", str(out)]) == 0
    records = read_trace_csv(out.read_text())
    assert records[1].bound == pytest.approx(brute_force(load_model(model)).log_partition, abs=1e-9)


def test_solve_mplp_10x10_monotone_csv(sg10, tmp_path, capsys):
    out = tmp_path / "m.csv"
    assert main(["solve", str(sg10), "--alg", "mplp", "--mode", "max", "-o", str(out)]) == 0
    records = read_trace_csv(out.read_text())
    bounds = np.array([r.bound for r in records])
    assert np.all(np.diff(bounds) <= 1e-9)
    summary = capsys.readouterr().out
    assert "final_bound=" in summary and "termination=" in summary and "assignment_energy=" in summary


def test_solve_json_carries_run_spec(sg10, tmp_path):
    out = tmp_path / "m.json"
    assert main(["solve", str(sg10), "--alg", "heskes", "--structure", "pair_singleton",
                 "--max-iters", "5", "--seed", "9", "--format", "json", "-o", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["run_spec"]["algorithm"] == "heskes"
    assert data["run_spec"]["seed"] == 9 and data["run_spec"]["c_singleton"] == 0.0
    assert data["columns"][0] == "sweep" and len(data["records"]) <= 6


def test_trace_csv_round_trip(sg10, tmp_path):
    from tcbo.estimators import MPLP
    trace = MPLP(max_iters=10).fit(load_model(sg10)).trace_
    out = tmp_path / "t.csv"
    main(["solve", str(sg10), "--alg", "mplp", "--max-iters", "10", "-o", str(out)])
    cli_records = read_trace_csv(out.read_text())
    assert [r[:4] for r in cli_records] == [r[:4] for r in trace.records]


def test_non_grid_model_exit_3(tmp_path, capsys):
    m = DiscreteModel((2, 2, 2), [((0, 1), np.ones((2, 2))), ((1, 2), np.ones((2, 2))),
                                  ((0, 2), np.ones((2, 2)))])
    path = tmp_path / "tri.model"
    save_model(m, path)
    assert main(["solve", str(path), "--alg", "trws", "--mode", "sum", "--chains", "grid"]) == 3
    assert "unsupported-structure" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["--alg", "msd", "--structure", "star_edge"],
    ["--alg", "trws", "--structure", "star_edge"],
    ["--alg", "mplp", "--max-iters", "0"],
    ["--alg", "mplp", "--bound-tol", "0"],
])
def test_invalid_combinations_exit_2(sg10, argv, capsys):
    assert main(["solve", str(sg10), *argv]) == 2


def test_unknown_alg_exit_2(sg10):
    with pytest.raises(SystemExit) as exit_:
        main(["solve", str(sg10), "--alg", "bp"])
    assert exit_.value.code == 2


def test_missing_model_exit_2(tmp_path):
    assert main(["solve", str(tmp_path / "nope.model"), "--alg", "mplp"]) == 2


def test_compare_max_solvers_agree(sg10, tmp_path, capsys):
    out = tmp_path / "w.csv"
    assert main(["compare", str(sg10), "--algs", "msd,mplp,heskes", "--mode", "max",
                 "--max-iters", "2000", "-o", str(out)]) == 0
    text = capsys.readouterr().out
    gap = float(text.split("max_relative_gap=")[1].split()[0])
    assert gap <= 1e-3
    assert text.count("verdict=monotone") == 3
    rows = list(csv.reader(io.StringIO(out.read_text())))
    assert rows[0] == ["sweep", "bound_msd", "bound_mplp", "bound_heskes"]


def test_compare_trw_schedules(sg10, capsys):
    assert main(["compare", str(sg10), "--algs", "trws,trw-forward", "--mode", "sum",
                 "--max-iters", "60"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert "verdict=monotone" in lines[0]
    assert "verdict=non-monotone" in lines[1] and "at sweeps" in lines[1]


def test_compare_self_zero_gap(sg10, capsys):
    assert main(["compare", str(sg10), "--algs", "mplp,mplp", "--max-iters", "20"]) == 0
    assert "max_relative_gap=0.0" in capsys.readouterr().out


def test_compare_needs_two(sg10):
    assert main(["compare", str(sg10), "--algs", "mplp"]) == 2
    assert main(["compare", str(sg10), "--algs", "mplp,foo"]) == 2


def test_compare_threads(sg10, monkeypatch, capsys):
    monkeypatch.setenv("TCBO_THREADS", "2")
    assert main(["compare", str(sg10), "--algs", "msd,mplp", "--max-iters", "20"]) == 0
    monkeypatch.setenv("TCBO_THREADS", "zero")
    assert main(["compare", str(sg10), "--algs", "msd,mplp", "--max-iters", "20"]) == 2


def test_max_relative_gap():
    assert max_relative_gap([1.0, 1.0]) == 0.0
    assert max_relative_gap([100.0, 101.0]) == pytest.approx(1 / 101)
