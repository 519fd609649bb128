import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import pomcmc
from pomcmc import ArcPosteriorMatrix, ExperimentConfig, build_score_table, load_dataset, resolve_defaults
from pomcmc.cli import main
from pomcmc.data import write_dataset
from pomcmc.errors import ConfigError
from pomcmc.mcmc import read_trace
from pomcmc.reports import (
    auto_bucket_size,
    bench_iteration_time,
    read_bench,
    read_deviation_report,
    read_summary,
    write_bench,
)
from pomcmc.scores import random_score_table, read_score_cache

from oracles import dag_sums, random_dataset

ASIA = str(Path(pomcmc.__file__).parent / "networks" / "asia.json")


def cfg(**kw):
    kw.setdefault("mode", "mcmc")
    kw.setdefault("data", "unused.csv")
    return ExperimentConfig(**kw)


# Defaults


def test_auto_bucket_examples():
    assert resolve_defaults(cfg(k=5), 22).b == 13
    assert resolve_defaults(cfg(k=4), 37).b == 10
    assert resolve_defaults(cfg(k=2, b="auto"), 37).b == 1
    assert auto_bucket_size(1000, 9) == 20


def test_default_schedule_and_parts():
    c = resolve_defaults(cfg(k=3), 8)
    assert (c.r, c.burn_in, c.thinning, c.samples, c.iters) == (1, 10_000, 100, 100, 20_000)
    c = resolve_defaults(cfg(k=3, iters=5000, burn_in=1000, thinning=40), 8)
    assert c.samples == 100 and c.iters == 5000
    c = resolve_defaults(cfg(k=3, b=4, samples=3, burn_in=0, thinning=2), 8)
    assert (c.b, c.iters) == (4, 6)


def test_contradictions():
    with pytest.raises(ConfigError):
        resolve_defaults(cfg(iters=100, burn_in=50, thinning=10, samples=10), 8)
    with pytest.raises(ConfigError):
        resolve_defaults(cfg(iters=100, burn_in=200), 8)
    with pytest.raises(ConfigError):
        resolve_defaults(cfg(b=9), 8)
    with pytest.raises(ConfigError):
        cfg(b="big")
    with pytest.raises(ConfigError):
        ExperimentConfig(mode="mcmc")
    with pytest.raises(ConfigError):
        ExperimentConfig(mode="gen", network=ASIA)
    with pytest.raises(ConfigError):
        cfg(network=ASIA, rows=10)


@given(st.integers(1, 200), st.integers(0, 12))
def test_resolve_defaults_is_total(n, k):
    a = resolve_defaults(cfg(k=k), n)
    assert 1 <= a.b <= min(n, 20)
    assert a == resolve_defaults(cfg(k=k), n)


# Report helpers


def test_bench_rows_and_round_trip(tmp_path):
    scores = random_score_table(12, 2, seed=1)
    rows = bench_iteration_time(scores, [1, 3], iterations=5, seed=4)
    again = bench_iteration_time(scores, [1, 3], iterations=5, seed=4)
    assert [r["accepted"] for r in rows] == [r["accepted"] for r in again]
    assert [r["ideals"] for r in rows] == [13, 4 * 2**3 - 4 + 1]
    write_bench(rows, tmp_path / "b.tsv")
    back = read_bench(tmp_path / "b.tsv")
    assert [r["b"] for r in back] == [1, 3] and all(r["mean_seconds"] > 0 for r in back)
    with pytest.raises(ConfigError):
        bench_iteration_time(scores, [12])


# CLI end to end


def run(*args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def five_node_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "five.csv"
    write_dataset(random_dataset(5, 50, np.random.default_rng(31)), path)
    return path


def test_gen_writes_rows(tmp_path):
    assert run("gen", "--network", ASIA, "--rows", 10_000, "--data-seed", 3, "--out", tmp_path) == 0
    lines = (tmp_path / "data.csv").read_text().splitlines()
    assert len(lines) == 10_001 and lines[0].split(",")[0] == "asia"


def test_scores_mode_round_trip(tmp_path, five_node_csv):
    assert run("scores", "--data", five_node_csv, "-k", 2, "--out", tmp_path) == 0
    table = read_score_cache(tmp_path / "scores.txt")
    direct = build_score_table(load_dataset(five_node_csv), 2)
    assert np.array_equal(table.log_weights, direct.log_weights)
    assert table.digest == direct.digest


def test_exact_mode_matches_oracle(tmp_path, five_node_csv):
    assert run("exact", "--data", five_node_csv, "-k", 4, "--out", tmp_path) == 0
    scores = build_score_table(load_dataset(five_node_csv), 4)
    total, arcs, _ = dag_sums(scores, pomcmc.ParallelBucketOrder.single_bucket(5))
    evidence = float((tmp_path / "evidence.txt").read_text().split()[1])
    assert evidence == pytest.approx(total, rel=1e-9)
    mat = ArcPosteriorMatrix.from_csv(tmp_path / "exact_arcs.csv")
    off = ~np.eye(5, dtype=bool)
    assert np.allclose(mat.probs[off], np.exp(arcs[off] - total), atol=5e-7)
    assert mat.mode == "exact"


def _mcmc(out, data, *extra):
    return run("mcmc", "--data", data, "-k", 2, "-b", 2, "--burnin", 20, "--thin", 5, "--samples", 4,
               "--chains", 8, "--seed", 7, "--out", out, *extra)


def test_mcmc_mode_files(tmp_path, five_node_csv):
    assert _mcmc(tmp_path, five_node_csv, "--compare-exact") == 0
    names = {p.name for p in tmp_path.iterdir()}
    for c in range(8):
        assert {f"chain{c}_trace.tsv", f"chain{c}_samples.tsv", f"chain{c}_estimate.csv",
                f"scoretrace_chain{c}.tsv"} <= names
    assert len([n for n in names if n.endswith("_trace.tsv")]) == 8
    assert len([n for n in names if n.endswith("_estimate.csv")]) == 8
    assert {"estimate.csv", "deviation.tsv", "summary.tsv", "config.json", "errors.tsv",
            "exact_arcs.csv"} <= names

    config = json.loads((tmp_path / "config.json").read_text())
    assert config["b"] == 2 and config["total_iterations"] == 40

    estimates = [ArcPosteriorMatrix.from_csv(tmp_path / f"chain{c}_estimate.csv") for c in range(8)]
    assert [e.meta["chain"] for e in estimates] == [str(c) for c in range(8)]
    worst, rows = read_deviation_report(tmp_path / "deviation.tsv")
    assert len(rows) == 20
    assert worst == pytest.approx(max(r[3] for r in rows), abs=1e-6)
    assert worst == pytest.approx(pomcmc.max_arc_deviation(estimates)[0], abs=1e-5)

    summary = read_summary(tmp_path / "summary.tsv")
    assert len(summary) == 8
    for row in summary:
        assert 0.0 <= float(row["acceptance_ratio"]) <= 1.0
        assert int(row["burn_in"]) == 20
    meta, it, sc, _ = read_trace(tmp_path / "chain3_trace.tsv")
    assert it[-1] == 40 and float(summary[3]["final_log_score"]) == sc[-1]
    trace_lines = (tmp_path / "scoretrace_chain3.tsv").read_text().splitlines()
    assert trace_lines[0] == "# burn_in=20" and len(trace_lines) == 2 + 41


def test_mcmc_is_reproducible(tmp_path, five_node_csv):
    a, b = tmp_path / "a", tmp_path / "b"
    assert _mcmc(a, five_node_csv) == 0 and _mcmc(b, five_node_csv, "--threads", 3) == 0
    for p in sorted(a.iterdir()):
        assert p.read_bytes() == (b / p.name).read_bytes(), p.name


def test_aggregate_mode(tmp_path, five_node_csv):
    assert _mcmc(tmp_path, five_node_csv) == 0
    first = (tmp_path / "estimate.csv").read_text().splitlines()[2:]
    assert run("exact", "--data", five_node_csv, "-k", 2, "--out", tmp_path / "ex") == 0
    assert run("aggregate", "--out", tmp_path, "--exact", tmp_path / "ex" / "exact_arcs.csv") == 0
    pooled = (tmp_path / "estimate.csv").read_text().splitlines()[2:]
    assert len(pooled) == len(first) == 5
    errors = (tmp_path / "errors.tsv").read_text().splitlines()
    assert errors[0] == "chain\tlargest_absolute_error" and len(errors) == 9


def test_single_bucket_request_runs_exact(tmp_path, five_node_csv):
    assert run("mcmc", "--data", five_node_csv, "-k", 2, "-b", 5, "--out", tmp_path) == 0
    assert (tmp_path / "exact_arcs.csv").exists() and not (tmp_path / "chain0_trace.tsv").exists()


def test_bench_mode(tmp_path):
    assert run("bench", "--synthetic-nodes", 10, "-k", 2, "-b", "1,2", "--iters", 3, "--out", tmp_path) == 0
    assert [r["b"] for r in read_bench(tmp_path / "bench.tsv")] == [1, 2]


def test_network_source_with_subsample(tmp_path):
    assert run("exact", "--network", ASIA, "--rows", 300, "--subsample", 100, "-k", 1, "--out", tmp_path) == 0
    assert ArcPosteriorMatrix.from_csv(tmp_path / "exact_arcs.csv").labels[0] == "asia"


def test_exit_codes(tmp_path, five_node_csv, capsys):
    assert run("mcmc", "--out", tmp_path) == 2
    assert run("mcmc", "--data", five_node_csv, "--iters", 10, "--burnin", 50, "--out", tmp_path) == 2
    assert run("exact", "--data", five_node_csv, "--exact-cap", 4, "--out", tmp_path) == 3
    assert run("exact", "--data", tmp_path / "nope.csv", "--out", tmp_path) == 4
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,?\n")
    assert run("scores", "--data", bad, "--out", tmp_path) == 2
    assert "error" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        run("mcmc", "--bucket-size", "huge")
    assert exc.value.code == 2


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "pomcmc.cli", "gen", "--network", ASIA, "--rows", "5",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert len((tmp_path / "data.csv").read_text().splitlines()) == 6
