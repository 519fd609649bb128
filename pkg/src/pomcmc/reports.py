"""Experiment configuration, defaults, benchmarking and report files."""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset, load_dataset, load_network, sample_network_data, write_dataset
from .dp import ArcPosteriorMatrix, Engine, exact_posteriors
from .errors import ConfigError
from .mcmc import ChainTrace, McmcConfig, initial_state, max_arc_deviation, mh_step, run_chains, write_trace
from .mcmc import largest_absolute_error
from .posets import count_ideals, make_order
from .scores import ScoreTable, build_score_table, random_score_table, read_score_cache, write_score_cache

log = logging.getLogger(__name__)

MODES = ("exact", "mcmc", "bench", "gen", "scores", "aggregate")
AUTO_B_CEILING = 20

# Schedule used when none is given: 10 000 burn-in steps, 100 samples 100 steps apart.
DEFAULT_SCHEDULE = {"burn_in": 10_000, "thinning": 100, "samples": 100}


def auto_bucket_size(n: int, k: int) -> int:
    """round((k - 2) * log2 n), clamped to [1, min(n, 20)]."""
    raw = (k - 2) * math.log2(n) if n >= 1 else 0.0
    return int(min(max(math.floor(raw + 0.5), 1), min(n, AUTO_B_CEILING)))


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str
    out: str = "."
    data: str | None = None
    network: str | None = None
    scores: str | None = None
    rows: int | None = None
    data_seed: int = 0
    subsample: int | None = None
    has_header: bool = True
    missing: str = "?"
    drop_columns: tuple[int, ...] = ()
    k: int = 3
    b: int | str | None = None
    r: int | None = None
    iters: int | None = None
    burn_in: int | None = None
    thinning: int | None = None
    samples: int | None = None
    chains: int = 1
    seed: int = 0
    threads: int = 1
    exact_cap: int = 24
    exact_reference: str | None = None
    compare_exact: bool = False
    bench_b: tuple[int, ...] = ()
    bench_iters: int = 20
    synthetic_nodes: int | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.data and self.network:
            raise ConfigError("--data and --network are mutually exclusive")
        if self.mode == "gen" and not (self.network and self.rows):
            raise ConfigError("gen needs --network and --rows")
        if self.mode in ("scores", "exact", "mcmc") and not (self.data or self.network or self.scores):
            raise ConfigError(f"{self.mode} needs --data, --network or --scores")
        if self.network and self.mode != "gen" and not self.rows and not self.scores:
            raise ConfigError("--network needs --rows")
        if self.mode == "bench" and not (self.data or self.network or self.scores or self.synthetic_nodes):
            raise ConfigError("bench needs a dataset, a score cache or --synthetic-nodes")
        if isinstance(self.b, str) and self.b != "auto":
            raise ConfigError(f"bucket size must be an integer or 'auto', got {self.b!r}")
        if self.k < 0 or self.chains < 1 or self.threads < 1:
            raise ConfigError("k must be >= 0, chains and threads >= 1")


def resolve_defaults(config: ExperimentConfig, n: int) -> ExperimentConfig:
    """Fill in bucket size, part count and schedule for a problem with ``n`` nodes."""
    b = config.b
    if b is None or b == "auto":
        b = auto_bucket_size(n, config.k)
    if not 1 <= int(b) <= n:
        raise ConfigError(f"bucket size {b} out of range for n={n}")
    r = 1 if config.r is None else config.r
    burn_in = DEFAULT_SCHEDULE["burn_in"] if config.burn_in is None else config.burn_in
    thinning = DEFAULT_SCHEDULE["thinning"] if config.thinning is None else config.thinning
    samples = config.samples
    if samples is None:
        if config.iters is not None:
            samples = (config.iters - burn_in) // thinning
            if samples < 1:
                raise ConfigError(f"--iters {config.iters} leaves no samples after burn-in {burn_in}")
        else:
            samples = DEFAULT_SCHEDULE["samples"]
    iters = burn_in + samples * thinning if config.iters is None else config.iters
    if iters < burn_in + samples * thinning:
        raise ConfigError(
            f"--iters {iters} is smaller than burn-in + samples*thin = {burn_in + samples * thinning}"
        )
    return dataclasses.replace(
        config, b=int(b), r=r, burn_in=burn_in, thinning=thinning, samples=samples, iters=iters
    )


def mcmc_config(config: ExperimentConfig) -> McmcConfig:
    return McmcConfig(
        k=config.k, b=config.b, r=config.r, burn_in=config.burn_in, thinning=config.thinning,
        samples=config.samples, chains=config.chains, base_seed=config.seed, total_iterations=config.iters,
    )


def bench_iteration_time(scores: ScoreTable, b_values, iterations: int = 20, seed: int = 0, r: int = 1,
                         warmup: int = 2) -> list[dict]:
    """Mean wall-clock seconds per MCMC iteration for each bucket size."""
    rows = []
    for b in b_values:
        cfg = McmcConfig(k=scores.k, b=int(b), r=r, burn_in=0, thinning=1, samples=1, base_seed=seed)
        P = make_order(scores.n, cfg.b, r)
        if not P.has_moves():
            raise ConfigError(f"bucket size {b} leaves a single bucket; nothing to benchmark")
        engine = Engine(scores, cache_size=0)
        state = initial_state(scores, cfg, 0, engine)
        for _ in range(warmup):
            mh_step(state, engine)
        accepted = 0
        t0 = time.perf_counter()
        for _ in range(iterations):
            _, acc = mh_step(state, engine)
            accepted += acc
        elapsed = time.perf_counter() - t0
        rows.append({
            "b": int(b), "ideals": count_ideals(P), "iterations": iterations,
            "accepted": accepted, "mean_seconds": elapsed / iterations,
        })
    return rows


def write_bench(rows, path) -> None:
    with open(path, "w") as fh:
        fh.write("b\tideals\titerations\taccepted\tmean_seconds\n")
        for r in rows:
            fh.write(f"{r['b']}\t{r['ideals']}\t{r['iterations']}\t{r['accepted']}\t{r['mean_seconds']:.6e}\n")


def read_bench(path) -> list[dict]:
    lines = Path(path).read_text().splitlines()
    keys = lines[0].split("\t")
    out = []
    for line in lines[1:]:
        vals = line.split("\t")
        out.append({k: (float(v) if k == "mean_seconds" else int(v)) for k, v in zip(keys, vals)})
    return out


def emit_convergence_report(traces: list[ChainTrace], out_dir) -> list[Path]:
    """Per-chain score traces plus ``summary.tsv``.

    Scores are log unnormalized state probabilities; runs with different
    bucket sizes cover different numbers of linear orders, so their scores
    are not comparable with each other.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for tr in traces:
        p = out_dir / f"scoretrace_chain{tr.chain_index}.tsv"
        with open(p, "w") as fh:
            fh.write(f"# burn_in={tr.config.burn_in}\n")
            fh.write("iteration\tlog_score\n")
            fh.write(f"0\t{float(tr.initial_log_score)!r}\n")
            for t, s in enumerate(tr.log_scores, start=1):
                fh.write(f"{t}\t{float(s)!r}\n")
        paths.append(p)
    summary = out_dir / "summary.tsv"
    with open(summary, "w") as fh:
        fh.write("chain\tacceptance_ratio\tacceptance_ratio_after_burn_in\tfinal_log_score\tmax_log_score\tburn_in\n")
        for tr in traces:
            fh.write(
                f"{tr.chain_index}\t{tr.acceptance_ratio:.6f}\t{tr.acceptance_ratio_after_burn_in:.6f}\t"
                f"{float(tr.log_scores[-1])!r}\t{float(tr.log_scores.max())!r}\t{tr.config.burn_in}\n"
            )
    paths.append(summary)
    return paths


def read_summary(path) -> list[dict]:
    lines = Path(path).read_text().splitlines()
    keys = lines[0].split("\t")
    return [dict(zip(keys, line.split("\t"))) for line in lines[1:] if line]


def write_deviation_report(estimates: list[ArcPosteriorMatrix], path) -> float:
    """Per-arc mean and standard deviation across runs; returns the maximum deviation."""
    worst, dev = max_arc_deviation(estimates)
    mean = np.mean([e.probs for e in estimates], axis=0)
    labels = estimates[0].labels
    with open(path, "w") as fh:
        fh.write(f"# runs={len(estimates)} max_arc_deviation={worst:.6f}\n")
        fh.write("tail\thead\tmean\tstd\n")
        for u in range(len(labels)):
            for v in range(len(labels)):
                if u != v:
                    fh.write(f"{labels[u]}\t{labels[v]}\t{mean[u, v]:.6f}\t{dev[u, v]:.6f}\n")
    return worst


def read_deviation_report(path) -> tuple[float, list[tuple[str, str, float, float]]]:
    lines = Path(path).read_text().splitlines()
    meta = dict(tok.split("=", 1) for tok in lines[0][1:].split())
    rows = [ln.split("\t") for ln in lines[2:] if ln]
    return float(meta["max_arc_deviation"]), [(a, b, float(c), float(d)) for a, b, c, d in rows]


def _dataset(config: ExperimentConfig) -> Dataset:
    if config.data:
        data = load_dataset(config.data, has_header=config.has_header, missing=config.missing,
                            drop_columns=config.drop_columns)
    else:
        data = sample_network_data(load_network(config.network), config.rows, config.data_seed)
    if config.subsample:
        if config.subsample > data.m:
            raise ConfigError(f"--subsample {config.subsample} exceeds the {data.m} available rows")
        data = data.subsample(config.subsample, config.data_seed)
    return data


def _scores(config: ExperimentConfig) -> ScoreTable:
    if config.scores:
        table = read_score_cache(config.scores)
        if table.k != config.k:
            log.warning("score cache has k=%d; using it instead of --max-indegree %d", table.k, config.k)
        return table
    if config.synthetic_nodes and not (config.data or config.network):
        return random_score_table(config.synthetic_nodes, config.k, config.seed)
    return build_score_table(_dataset(config), config.k)


def _write_exact(scores: ScoreTable, config: ExperimentConfig, out: Path) -> ArcPosteriorMatrix:
    evidence, mat = exact_posteriors(scores, cap=config.exact_cap)
    mat.to_csv(out / "exact_arcs.csv")
    (out / "evidence.txt").write_text(f"log_evidence\t{evidence!r}\n")
    return mat


def _chain_estimates(out: Path) -> list[ArcPosteriorMatrix]:
    paths = sorted(out.glob("chain*_estimate.csv"), key=lambda p: int(p.name[5:].split("_")[0]))
    return [ArcPosteriorMatrix.from_csv(p) for p in paths]


def _write_errors(estimates, exact: ArcPosteriorMatrix, path) -> list[float]:
    errors = [largest_absolute_error(e, exact) for e in estimates]
    with open(path, "w") as fh:
        fh.write("chain\tlargest_absolute_error\n")
        for e, err in zip(estimates, errors):
            fh.write(f"{e.meta.get('chain', '?')}\t{err:.6f}\n")
    return errors


def run_experiment(config: ExperimentConfig) -> int:
    """Run one mode and write its files under ``config.out``; returns 0 on success."""
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    mode = config.mode

    if mode == "gen":
        data = sample_network_data(load_network(config.network), config.rows, config.data_seed)
        write_dataset(data, out / "data.csv")
        return 0

    if mode == "aggregate":
        estimates = _chain_estimates(out)
        if not estimates:
            raise ConfigError(f"no chain*_estimate.csv files in {out}")
        pooled = ArcPosteriorMatrix(np.mean([e.probs for e in estimates], axis=0), estimates[0].labels,
                                    "mcmc", {"chains": len(estimates)})
        pooled.to_csv(out / "estimate.csv")
        if len(estimates) >= 2:
            write_deviation_report(estimates, out / "deviation.tsv")
        if config.exact_reference:
            _write_errors(estimates, ArcPosteriorMatrix.from_csv(config.exact_reference), out / "errors.tsv")
        return 0

    scores = _scores(config)

    if mode == "scores":
        write_score_cache(scores, out / "scores.txt")
        return 0

    if mode == "exact":
        _write_exact(scores, config, out)
        return 0

    if mode == "bench":
        b_values = config.bench_b or (resolve_defaults(config, scores.n).b,)
        rows = bench_iteration_time(scores, b_values, config.bench_iters, config.seed)
        write_bench(rows, out / "bench.tsv")
        return 0

    cfg = resolve_defaults(config, scores.n)
    if not make_order(scores.n, cfg.b, cfg.r).has_moves():
        log.warning("bucket size %d gives a single bucket; running exact mode instead", cfg.b)
        _write_exact(scores, cfg, out)
        return 0
    mc = mcmc_config(cfg)
    (out / "config.json").write_text(json.dumps(dataclasses.asdict(mc), indent=2) + "\n")
    traces = run_chains(scores, mc, workers=cfg.threads)
    estimates = []
    for tr in traces:
        write_trace(tr, out)
        est = tr.estimate()
        est.to_csv(out / f"chain{tr.chain_index}_estimate.csv")
        estimates.append(est)
    pooled = ArcPosteriorMatrix(np.mean([e.probs for e in estimates], axis=0), scores.labels, "mcmc",
                                {"k": mc.k, "b": mc.b, "chains": len(estimates)})
    pooled.to_csv(out / "estimate.csv")
    if len(estimates) >= 2:
        write_deviation_report(estimates, out / "deviation.tsv")
    emit_convergence_report(traces, out)
    if cfg.compare_exact or cfg.exact_reference:
        exact = (ArcPosteriorMatrix.from_csv(cfg.exact_reference) if cfg.exact_reference
                 else _write_exact(scores, cfg, out))
        _write_errors(estimates, exact, out / "errors.tsv")
    return 0
