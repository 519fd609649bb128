"""Metropolis-Hastings over reorderings of a parallel bucket order."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .dp import ArcPosteriorMatrix, Engine
from .errors import ConfigError, DataFormatError
from .posets import ParallelBucketOrder, apply_flip, make_order, random_reordering
from .scores import ScoreTable


@dataclass(frozen=True)
class McmcConfig:
    """Sampler settings.

    A chain runs ``burn_in`` steps, then keeps ``samples`` states spaced
    ``thinning`` steps apart. ``total_iterations`` defaults to exactly that
    budget; a larger value appends unrecorded-sample steps at the end.
    """

    k: int
    b: int
    r: int = 1
    burn_in: int = 10_000
    thinning: int = 100
    samples: int = 100
    chains: int = 1
    base_seed: int = 0
    total_iterations: int | None = None
    # Keep the general Hastings ratio in the acceptance rule (flips are symmetric).
    hastings: bool = False

    def __post_init__(self):
        if self.thinning < 1 or self.samples < 1 or self.burn_in < 0 or self.chains < 1:
            raise ConfigError("need thinning >= 1, samples >= 1, burn_in >= 0, chains >= 1")
        needed = self.burn_in + self.samples * self.thinning
        if self.total_iterations is None:
            object.__setattr__(self, "total_iterations", needed)
        elif self.total_iterations < needed:
            raise ConfigError(
                f"total_iterations={self.total_iterations} < burn_in + samples*thinning = {needed}"
            )


@dataclass
class ChainState:
    order: ParallelBucketOrder
    log_joint: float
    rng: np.random.Generator
    iteration: int = 0
    last_move: tuple[int, int, int] | None = None


@dataclass
class RetainedSample:
    iteration: int
    order: str
    probs: np.ndarray


@dataclass
class ChainTrace:
    chain_index: int
    config: McmcConfig
    labels: tuple[str, ...]
    initial_log_score: float
    log_scores: np.ndarray
    accepted: np.ndarray
    moves: np.ndarray
    samples: list[RetainedSample] = field(default_factory=list)

    @property
    def acceptance_ratio(self) -> float:
        return float(self.accepted.mean()) if self.accepted.size else 0.0

    @property
    def acceptance_ratio_after_burn_in(self) -> float:
        tail = self.accepted[self.config.burn_in :]
        return float(tail.mean()) if tail.size else 0.0

    def estimate(self) -> ArcPosteriorMatrix:
        if not self.samples:
            raise ValueError("trace holds no retained samples")
        mean = np.mean([s.probs for s in self.samples], axis=0)
        return ArcPosteriorMatrix(
            mean, self.labels, "mcmc",
            {"k": self.config.k, "b": self.config.b, "samples": len(self.samples), "chain": self.chain_index},
        )


@lru_cache(maxsize=64)
def _move_table(signature) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Slot pairs (x, y) with x in an earlier bucket than y, and the part of each."""
    parts, xs, ys = [], [], []
    slot = 0
    for p, sizes in enumerate(signature):
        starts = np.cumsum((0,) + sizes)[:-1] + slot
        for i in range(len(sizes)):
            for j in range(i + 1, len(sizes)):
                for a in range(sizes[i]):
                    for b in range(sizes[j]):
                        parts.append(p)
                        xs.append(starts[i] + a)
                        ys.append(starts[j] + b)
        slot += sum(sizes)
    return np.array(parts, dtype=np.int64), np.array(xs, dtype=np.int64), np.array(ys, dtype=np.int64)


def n_moves(P: ParallelBucketOrder) -> int:
    return _move_table(P.type_signature)[0].size


def propose_flip(P: ParallelBucketOrder, rng: np.random.Generator):
    """Uniform flip of two nodes from distinct buckets of one part.

    Returns ``(candidate, (part, u, v))`` with ``u`` from the earlier bucket.
    """
    parts, xs, ys = _move_table(P.type_signature)
    if parts.size == 0:
        raise ConfigError("order has a single bucket in every part; no flip exists (use exact mode)")
    idx = int(rng.integers(parts.size))
    part, u, v = int(parts[idx]), P.flat[xs[idx]], P.flat[ys[idx]]
    return apply_flip(P, part, u, v), (part, u, v)


def mh_step(state: ChainState, engine: Engine, rng: np.random.Generator | None = None, hastings: bool = False):
    """One Metropolis-Hastings iteration; updates ``state`` in place.

    Returns ``(state, accepted)``.
    """
    rng = state.rng if rng is None else rng
    candidate, move = propose_flip(state.order, rng)
    cand_lj = engine.log_joint(candidate)
    delta = cand_lj - state.log_joint
    if hastings:
        delta += math.log(n_moves(state.order)) - math.log(n_moves(candidate))
    accepted = delta >= 0.0 or math.log(rng.random()) < delta
    if accepted:
        state.order = candidate
        state.log_joint = cand_lj
    state.iteration += 1
    state.last_move = move
    return state, accepted


def chain_rng(base_seed: int, chain_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([base_seed, chain_index]))


def initial_state(scores: ScoreTable, config: McmcConfig, chain_index: int, engine: Engine) -> ChainState:
    rng = chain_rng(config.base_seed, chain_index)
    P = random_reordering(make_order(scores.n, config.b, config.r), rng)
    if not P.has_moves():
        raise ConfigError("the order has no flips (a single bucket per part); use exact mode")
    return ChainState(P, engine.log_joint(P), rng)


def run_chain(
    scores: ScoreTable, config: McmcConfig, chain_index: int = 0, engine: Engine | None = None
) -> ChainTrace:
    """Run one chain from a random reordering and collect conditional arc posteriors."""
    engine = engine or Engine(scores)
    state = initial_state(scores, config, chain_index, engine)
    total = config.total_iterations
    log_scores = np.empty(total)
    accepted = np.zeros(total, dtype=bool)
    moves = np.empty((total, 3), dtype=np.int64)
    trace = ChainTrace(chain_index, config, scores.labels, state.log_joint, log_scores, accepted, moves)
    for t in range(1, total + 1):
        _, acc = mh_step(state, engine, hastings=config.hastings)
        log_scores[t - 1] = state.log_joint
        accepted[t - 1] = acc
        moves[t - 1] = state.last_move
        after = t - config.burn_in
        if after > 0 and after % config.thinning == 0 and len(trace.samples) < config.samples:
            probs = engine.arc_posteriors(state.order).probs
            trace.samples.append(RetainedSample(t, state.order.descriptor(), probs))
    return trace


def _run_one(args):
    scores, config, index = args
    return run_chain(scores, config, index)


def run_chains(scores: ScoreTable, config: McmcConfig, workers: int = 1) -> list[ChainTrace]:
    """Independent chains ``0..config.chains-1``; each is reproducible on its own."""
    jobs = [(scores, config, c) for c in range(config.chains)]
    if workers <= 1 or config.chains == 1:
        engine = Engine(scores)
        return [run_chain(scores, config, c, engine) for c in range(config.chains)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, jobs))


def estimate_arc_posteriors(traces) -> ArcPosteriorMatrix:
    """Mean of the retained conditional matrices; for several chains, mean of chain means."""
    if isinstance(traces, ChainTrace):
        return traces.estimate()
    traces = list(traces)
    if not traces:
        raise ValueError("no traces given")
    if len(traces) == 1:
        return traces[0].estimate()
    per_chain = [t.estimate() for t in traces]
    first = traces[0]
    return ArcPosteriorMatrix(
        np.mean([m.probs for m in per_chain], axis=0), first.labels, "mcmc",
        {"k": first.config.k, "b": first.config.b, "chains": len(traces)},
    )


def _as_array(m) -> np.ndarray:
    return m.probs if isinstance(m, ArcPosteriorMatrix) else np.asarray(m, dtype=float)


def max_arc_deviation(estimates) -> tuple[float, np.ndarray]:
    """Largest per-arc standard deviation (population form) across runs."""
    mats = [_as_array(m) for m in estimates]
    if len(mats) < 2:
        raise ValueError("need at least two runs")
    dev = np.std(np.stack(mats), axis=0)
    np.fill_diagonal(dev, 0.0)
    return float(dev.max()), dev


def largest_absolute_error(estimate, exact) -> float:
    a, b = _as_array(estimate), _as_array(exact)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    diff = np.abs(a - b)
    np.fill_diagonal(diff, 0.0)
    return float(diff.max())


def write_trace(trace: ChainTrace, out_dir) -> tuple[Path, Path]:
    """Write ``chain<c>_trace.tsv`` and the retained-sample sidecar ``chain<c>_samples.tsv``."""
    out_dir = Path(out_dir)
    c = trace.chain_index
    tpath = out_dir / f"chain{c}_trace.tsv"
    spath = out_dir / f"chain{c}_samples.tsv"
    cfg = trace.config
    with open(tpath, "w") as fh:
        fh.write(
            f"# chain={c} burn_in={cfg.burn_in} thinning={cfg.thinning} "
            f"initial_log_score={float(trace.initial_log_score)!r}\n"
        )
        fh.write("iteration\tlog_score\taccepted\n")
        for t, (s, a) in enumerate(zip(trace.log_scores, trace.accepted), start=1):
            fh.write(f"{t}\t{float(s)!r}\t{int(a)}\n")
    with open(spath, "w") as fh:
        fh.write("iteration\torder\n")
        for smp in trace.samples:
            fh.write(f"{smp.iteration}\t{smp.order}\n")
    return tpath, spath


def read_trace(path) -> tuple[dict, np.ndarray, np.ndarray, np.ndarray]:
    """Parse a trace file into (header fields, iterations, log scores, accepted flags)."""
    meta: dict = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                meta.update(tok.split("=", 1) for tok in line[1:].split() if "=" in tok)
            elif line and not line.startswith("iteration"):
                rows.append(line.split("\t"))
    if any(len(r) != 3 for r in rows):
        raise DataFormatError(f"{path}: malformed trace row")
    it = np.array([int(r[0]) for r in rows], dtype=np.int64)
    sc = np.array([float(r[1]) for r in rows])
    acc = np.array([r[2] == "1" for r in rows])
    return meta, it, sc, acc


def read_samples(path) -> list[tuple[int, str]]:
    with open(path) as fh:
        lines = fh.read().splitlines()[1:]
    return [(int(a), b) for a, b in (ln.split("\t") for ln in lines if ln)]
