"""Categorical datasets and data-generating networks."""

from __future__ import annotations

import csv
import graphlib
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataFormatError


@dataclass(frozen=True, eq=False)
class Dataset:
    """Categorical data matrix with per-column arities.

    ``values[row, v]`` is a dense category index in ``[0, arity[v])``;
    ``categories[v][c]`` is the original token for index ``c``.
    """

    values: np.ndarray
    arity: tuple[int, ...]
    labels: tuple[str, ...]
    categories: tuple[tuple[str, ...], ...] = field(default=())

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.int64)
        if values.ndim != 2:
            raise DataFormatError("values must be a 2-d array")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "arity", tuple(int(a) for a in self.arity))
        if not self.categories:
            cats = tuple(tuple(str(c) for c in range(a)) for a in self.arity)
            object.__setattr__(self, "categories", cats)
        if len(self.arity) != values.shape[1] or len(self.labels) != values.shape[1]:
            raise DataFormatError("arity/labels do not match the column count")
        for v, a in enumerate(self.arity):
            if a < 1 or len(self.categories[v]) != a:
                raise DataFormatError(f"column {v}: arity {a} does not match its categories")
        if values.size and (values.min() < 0 or np.any(values.max(axis=0) >= np.array(self.arity))):
            raise DataFormatError("category index out of range")

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def m(self) -> int:
        return self.values.shape[0]

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.asarray(self.arity, dtype=np.int64).tobytes())
        h.update(self.values.tobytes())
        return h.hexdigest()[:16]

    def subsample(self, rows: int, seed: int) -> "Dataset":
        """Uniform sample of ``rows`` rows without replacement, original row order kept."""
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(self.m, size=rows, replace=False))
        return Dataset(self.values[idx], self.arity, self.labels, self.categories)

    def permute_columns(self, perm) -> "Dataset":
        perm = list(perm)
        return Dataset(
            self.values[:, perm],
            [self.arity[p] for p in perm],
            [self.labels[p] for p in perm],
            [self.categories[p] for p in perm],
        )


def load_dataset(
    path, has_header: bool = True, missing: str = "?", delimiter: str | None = None, drop_columns=()
) -> Dataset:
    """Read a comma- or tab-separated file of categorical tokens.

    Categories are numbered in order of first appearance. Empty fields and
    the ``missing`` token are rejected. ``drop_columns`` (0-based positions)
    are removed before any checks.
    """
    path = Path(path)
    text = path.read_text()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DataFormatError(f"{path}: empty file")
    if delimiter is None:
        delimiter = "\t" if "\t" in lines[0] else ","
    rows = [[tok.strip() for tok in row] for row in csv.reader(lines, delimiter=delimiter)]
    if drop_columns:
        drop = set(drop_columns)
        rows = [[tok for j, tok in enumerate(row) if j not in drop] for row in rows]
    if has_header:
        header, rows = rows[0], rows[1:]
    else:
        header = [f"X{j}" for j in range(len(rows[0]))]
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    n = len(header)
    mappings: list[dict[str, int]] = [{} for _ in range(n)]
    values = np.empty((len(rows), n), dtype=np.int64)
    for i, row in enumerate(rows):
        if len(row) != n:
            raise DataFormatError(f"{path}: row {i + 1} has {len(row)} fields, expected {n}")
        for j, tok in enumerate(row):
            if tok == "" or tok == missing:
                raise DataFormatError(f"{path}: missing value at row {i + 1}, column {header[j]!r}")
            values[i, j] = mappings[j].setdefault(tok, len(mappings[j]))
    categories = tuple(tuple(mp) for mp in mappings)
    return Dataset(values, [len(mp) for mp in mappings], tuple(header), categories)


def write_dataset(data: Dataset, path, delimiter: str = ",") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow(data.labels)
        cats = data.categories
        for row in data.values:
            w.writerow([cats[v][c] for v, c in enumerate(row)])


@dataclass(frozen=True, eq=False)
class NetworkSpec:
    """A discrete Bayesian network used to generate synthetic data.

    ``cpt[v]`` has one row per parent configuration. Configurations are
    enumerated in mixed-radix order over ``parents[v]`` with the first parent
    most significant (the order of ``itertools.product``).
    """

    nodes: tuple[str, ...]
    arity: tuple[int, ...]
    parents: tuple[tuple[int, ...], ...]
    cpt: tuple[np.ndarray, ...]

    def __post_init__(self):
        n = len(self.nodes)
        object.__setattr__(self, "arity", tuple(int(a) for a in self.arity))
        object.__setattr__(self, "parents", tuple(tuple(int(u) for u in ps) for ps in self.parents))
        object.__setattr__(self, "cpt", tuple(np.asarray(t, dtype=float) for t in self.cpt))
        if not (len(self.arity) == len(self.parents) == len(self.cpt) == n):
            raise DataFormatError("network fields have inconsistent lengths")
        for v in range(n):
            ps = self.parents[v]
            if any(u < 0 or u >= n or u == v for u in ps) or len(set(ps)) != len(ps):
                raise DataFormatError(f"node {self.nodes[v]!r}: invalid parent list {ps}")
            rows = int(np.prod([self.arity[u] for u in ps], dtype=np.int64))
            table = self.cpt[v]
            if table.shape != (rows, self.arity[v]):
                raise DataFormatError(
                    f"node {self.nodes[v]!r}: cpt shape {table.shape}, expected {(rows, self.arity[v])}"
                )
            if np.any(table < 0) or np.any(np.abs(table.sum(axis=1) - 1.0) > 1e-9):
                raise DataFormatError(f"node {self.nodes[v]!r}: cpt rows must be distributions")
        try:
            self.topological_order()
        except graphlib.CycleError as exc:
            raise DataFormatError(f"parent graph has a cycle: {exc.args[1]}") from None

    @property
    def n(self) -> int:
        return len(self.nodes)

    def topological_order(self) -> list[int]:
        ts = graphlib.TopologicalSorter({v: self.parents[v] for v in range(len(self.nodes))})
        return list(ts.static_order())

    def arcs(self) -> set[tuple[int, int]]:
        return {(u, v) for v, ps in enumerate(self.parents) for u in ps}

    def to_json(self) -> dict:
        return {
            "nodes": list(self.nodes),
            "arities": list(self.arity),
            "parents": [[self.nodes[u] for u in ps] for ps in self.parents],
            "cpt": [t.tolist() for t in self.cpt],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "NetworkSpec":
        try:
            nodes = [str(x) for x in obj["nodes"]]
            index = {name: i for i, name in enumerate(nodes)}
            parents = [[u if isinstance(u, int) else index[u] for u in ps] for ps in obj["parents"]]
            return cls(tuple(nodes), obj["arities"], parents, obj["cpt"])
        except (KeyError, TypeError) as exc:
            raise DataFormatError(f"malformed network description: {exc!r}") from None


def load_network(path) -> NetworkSpec:
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path}: {exc}") from None
    return NetworkSpec.from_json(obj)


def builtin_network(name: str) -> NetworkSpec:
    """Load a network shipped with the package (currently ``"asia"``)."""
    return load_network(Path(__file__).parent / "networks" / f"{name}.json")


def sample_network_data(spec: NetworkSpec, m: int, seed: int) -> Dataset:
    """Draw ``m`` i.i.d. rows by ancestral sampling."""
    rng = np.random.default_rng(seed)
    values = np.zeros((m, spec.n), dtype=np.int64)
    for v in spec.topological_order():
        config = np.zeros(m, dtype=np.int64)
        for u in spec.parents[v]:
            config = config * spec.arity[u] + values[:, u]
        cum = np.cumsum(spec.cpt[v], axis=1)
        u01 = rng.random(m)
        x = (u01[:, None] >= cum[config]).sum(axis=1)
        values[:, v] = np.minimum(x, spec.arity[v] - 1)
    return Dataset(values, spec.arity, spec.nodes)
