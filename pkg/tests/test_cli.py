import csv
import json

import numpy as np
import pytest

from hyflexa.cli import AGGREGATE_COLUMNS, RUN_COLUMNS, TRACE_COLUMNS, main
from hyflexa.io import load_instance, read_vector
from hyflexa.oracle import check_coordinatewise_stationarity


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def gen(out, m=200, n=1000, s_sol=1, s_a=30, seed=7):
    argv = ["generate", "--m", str(m), "--n", str(n), "--s-sol", str(s_sol), "--s-a", str(s_a),
            "--seed", str(seed), "--out", str(out)]
    assert main(argv) == 0
    return out


@pytest.fixture(scope="module")
def small_instance(tmp_path_factory):
    return gen(tmp_path_factory.mktemp("inst") / "small", m=60, n=40, s_sol=10, s_a=50, seed=1)


def test_generate_writes_certified_instance(tmp_path):
    d = gen(tmp_path / "inst")
    for name in ("A.mtx", "b.txt", "xstar.txt", "meta.txt"):
        assert (d / name).is_file()
    assert "V_star=" in (d / "meta.txt").read_text()
    P = load_instance(d)
    assert check_coordinatewise_stationarity(P, P.known_optimum[0], 1e-8).passed


def test_generate_is_byte_deterministic(tmp_path):
    gen(tmp_path / "a", m=30, n=80, seed=3)
    gen(tmp_path / "b", m=30, n=80, seed=3)
    for name in ("A.mtx", "b.txt", "xstar.txt", "meta.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_generate_zero_solution(tmp_path):
    gen(tmp_path / "z", m=30, n=80, s_sol=0)
    assert not np.any(read_vector(tmp_path / "z" / "xstar.txt"))


def test_generate_bad_parameters(tmp_path, capsys):
    assert main(["generate", "--m", "0", "--n", "5", "--s-sol", "1", "--s-a", "10", "--out", str(tmp_path)]) == 1
    assert "error" in capsys.readouterr().err


def test_solve_reaches_certified_optimum(tmp_path, capsys):
    d = gen(tmp_path / "inst")
    out = tmp_path / "trace.csv"
    code = main(["solve", str(d), "--sampling", "nice", "--tau", "4", "--sigma", "0.1", "--tol", "1e-9",
                 "--theta", "1e-4", "--seed", "7", "--max-iters", "50000", "--out", str(out)])
    assert code == 0
    printed = capsys.readouterr().out
    assert "final rel_error=" in printed and "setup_s=" in printed
    rows = read_csv(out)
    assert tuple(rows[0].keys()) == TRACE_COLUMNS
    assert float(rows[-1]["rel_error"]) <= 1e-6
    # rel_error nonincreasing once below one
    re = np.array([float(r["rel_error"]) for r in rows])
    start = int(np.argmax(re < 1.0))
    assert np.all(np.diff(re[start:]) <= 1e-9)


def test_solve_workers_do_not_change_trace(small_instance, tmp_path):
    outs = []
    for w in (1, 8):
        out = tmp_path / f"w{w}.csv"
        main(["solve", str(small_instance), "--sampling", "nice", "--tau", "8", "--sigma", "0.2", "--seed", "7",
              "--workers", str(w), "--max-iters", "300", "--out", str(out)])
        outs.append([{k: v for k, v in r.items() if k != "elapsed_s"} for r in read_csv(out)])
    assert outs[0] == outs[1]


def test_full_sampling_without_greedy_updates_everything(small_instance, tmp_path):
    out = tmp_path / "full.csv"
    assert main(["solve", str(small_instance), "--sampling", "full", "--sigma", "0", "--tol", "1e-9",
                 "--max-iters", "500", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert all(r["updated"] == "40" and r["sampled"] == "40" for r in rows[:-1])


def test_nonconvergence_writes_partial_trace(small_instance, tmp_path):
    out = tmp_path / "short.csv"
    assert main(["solve", str(small_instance), "--sampling", "nice", "--tau", "2", "--max-iters", "3",
                 "--tol", "0", "--out", str(out)]) == 2
    assert len(read_csv(out)) == 3


def test_divergence_exit_code(tmp_path):
    d = gen(tmp_path / "wide", m=30, n=60, s_sol=10, s_a=50, seed=5)
    out = tmp_path / "div.csv"
    assert main(["solve", str(d), "--sampling", "full", "--sigma", "0", "--max-iters", "1000",
                 "--out", str(out)]) == 3
    assert len(read_csv(out)) > 0


def test_target_stop_counts_as_success(small_instance, tmp_path, capsys):
    out = tmp_path / "target.csv"
    assert main(["solve", str(small_instance), "--sampling", "nice", "--tau", "8", "--target-re", "1e-2",
                 "--tol", "0", "--max-iters", "5000", "--out", str(out)]) == 0
    assert "status=target" in capsys.readouterr().out


def test_usage_errors(small_instance, tmp_path):
    assert main(["solve", str(small_instance), "--sigma", "2", "--out", str(tmp_path / "x.csv")]) == 1
    assert main(["solve", str(tmp_path / "missing"), "--out", str(tmp_path / "x.csv")]) == 1
    for argv in (["solve"], ["frobnicate"], ["solve", str(small_instance), "--tau", "x"]):
        with pytest.raises(SystemExit) as info:
            main(argv)
        assert info.value.code == 1


def test_config_file_and_flag_override(small_instance, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"sampling.rule": "nice", "sampling.tau": 4, "run.max_iters": 5, "run.tol": 0}))
    out = tmp_path / "c.csv"
    assert main(["solve", str(small_instance), "--config", str(cfg), "--out", str(out)]) == 2
    assert len(read_csv(out)) == 5
    assert main(["solve", str(small_instance), "--config", str(cfg), "--max-iters", "7", "--out", str(out)]) == 2
    rows = read_csv(out)
    assert len(rows) == 7 and all(r["sampled"] == "4" for r in rows)


def test_workers_environment_default(small_instance, tmp_path, monkeypatch):
    monkeypatch.setenv("HYFLEXA_WORKERS", "nope")
    assert main(["solve", str(small_instance), "--out", str(tmp_path / "e.csv")]) == 1
    monkeypatch.setenv("HYFLEXA_WORKERS", "4")
    assert main(["solve", str(small_instance), "--max-iters", "3", "--tol", "0",
                 "--out", str(tmp_path / "e.csv")]) == 2


def write_experiment(tmp_path, reps, configs, name="exp.json"):
    exp = {"instance": {"m": 60, "n": 40, "s_A": 50, "s_sol": 10, "seed": 1},
           "repetitions": reps, "configs": configs, "output": str(tmp_path / "agg.csv")}
    p = tmp_path / name
    p.write_text(json.dumps(exp))
    return p


def test_bench_single_rep_equals_single_run(tmp_path, small_instance):
    cfg = {"sampling.rule": "nice", "sampling.tau": 8, "greedy.sigma": 0.1, "run.max_iters": 200,
           "run.tol": 1e-9, "seed": 7}
    exp = write_experiment(tmp_path, 1, {"hyb": cfg})
    assert main(["bench", str(exp)]) == 0
    agg = read_csv(tmp_path / "agg.csv")
    assert tuple(agg[0].keys()) == AGGREGATE_COLUMNS
    main(["solve", str(small_instance), "--sampling", "nice", "--tau", "8", "--sigma", "0.1", "--max-iters", "200",
          "--tol", "1e-9", "--seed", "7", "--out", str(tmp_path / "single.csv")])
    single = read_csv(tmp_path / "single.csv")
    assert [r["mean_rel_error"] for r in agg] == [r["rel_error"] for r in single]
    assert all(r["n_runs"] == "1" for r in agg)
    runs = read_csv(tmp_path / "agg_runs.csv")
    assert tuple(runs[0].keys()) == RUN_COLUMNS and len(runs) == 1


def test_bench_two_configs_reproducible(tmp_path):
    configs = {"pure": {"sampling.rule": "nice", "sampling.tau": 8, "greedy.sigma": 0.0, "run.max_iters": 50,
                        "run.tol": 0},
               "hybrid": {"sampling.rule": "nice", "sampling.tau": 8, "greedy.sigma": 0.1, "run.max_iters": 50,
                          "run.tol": 0}}
    exp = write_experiment(tmp_path, 3, configs)
    tables = []
    for _ in range(2):
        assert main(["bench", str(exp)]) == 0
        tables.append([(r["config"], r["k"], r["mean_rel_error"], r["n_runs"]) for r in read_csv(tmp_path / "agg.csv")])
    assert tables[0] == tables[1]
    assert {row[0] for row in tables[0]} == {"pure", "hybrid"}
    assert all(row[3] == "3" for row in tables[0])
    runs = read_csv(tmp_path / "agg_runs.csv")
    assert [r["seed"] for r in runs if r["config"] == "pure"] == ["0", "1", "2"]


def test_bench_records_failed_runs(tmp_path):
    configs = {"ok": {"sampling.rule": "nice", "sampling.tau": 4, "run.max_iters": 5, "run.tol": 0},
               "bad": {"sampling.rule": "full", "run.max_iters": 2000}}
    exp = {"instance": {"m": 30, "n": 60, "s_A": 50, "s_sol": 10, "seed": 5}, "repetitions": 1,
           "configs": configs}
    p = tmp_path / "exp.json"
    p.write_text(json.dumps(exp))
    assert main(["bench", str(p), "--out", str(tmp_path / "b.csv")]) == 0
    runs = {r["config"]: r for r in read_csv(tmp_path / "b_runs.csv")}
    assert runs["bad"]["status"] == "failed" and runs["bad"]["error"]
    assert {r["config"] for r in read_csv(tmp_path / "b.csv")} == {"ok"}


def test_bench_validation(tmp_path):
    p = tmp_path / "e.json"
    p.write_text(json.dumps({"instance": {"m": 5, "n": 5, "s_A": 50, "s_sol": 10}, "repetitions": 0,
                             "configs": {"a": {}}}))
    assert main(["bench", str(p)]) == 1
    p.write_text(json.dumps({"instance": {"m": 5}, "configs": {"a": {}}}))
    assert main(["bench", str(p)]) == 1
    p.write_text("[1, 2")
    assert main(["bench", str(p)]) == 1
