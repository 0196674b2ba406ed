"""Core domain types: causal orders, permutation encodings, parent sets, DAGs and datasets.

All types are immutable after construction and safe to share across threads.
Variable indexing is 0-based throughout.
"""

from __future__ import annotations

import graphlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DuplicateIndexError, IndexOutOfRangeError


@dataclass(frozen=True)
class CausalOrder:
    """A permutation of variable indices, first element sampled first.

    ``position_of[v]`` is the 0-based slot of variable ``v`` in the order,
    i.e. the inverse permutation of ``sequence``.
    """

    sequence: tuple[int, ...]
    position_of: tuple[int, ...] = field(compare=False)

    @property
    def d(self) -> int:
        return len(self.sequence)

    def prefix(self, k: int) -> tuple[int, ...]:
        """The first ``k - 1`` elements (1-based step convention)."""
        return self.sequence[: k - 1]


def make_order(indices: Sequence[int]) -> CausalOrder:
    """Validate a sequence of variable indices and build a CausalOrder.

    Raises DuplicateIndexError / IndexOutOfRangeError on malformed input.
    """
    seq = tuple(int(i) for i in indices)
    d = len(seq)
    if d < 1:
        raise IndexOutOfRangeError("an order needs at least one variable")
    seen = set()
    for i in seq:
        if i < 0 or i >= d:
            raise IndexOutOfRangeError(f"variable index {i} not in 0..{d - 1}")
        if i in seen:
            raise DuplicateIndexError(f"variable index {i} appears twice")
        seen.add(i)
    pos = [0] * d
    for k, v in enumerate(seq):
        pos[v] = k
    return CausalOrder(sequence=seq, position_of=tuple(pos))


def permutation_matrix(order: CausalOrder) -> np.ndarray:
    """d x d binary matrix with entry (i, j) = 1 iff variable i sits at slot j."""
    d = order.d
    q = np.zeros((d, d))
    q[np.arange(d), order.position_of] = 1.0
    return q


def prefix_encoding(order: CausalOrder, k: int) -> np.ndarray:
    """Permutation matrix of the first k-1 elements; rows of unassigned variables are zero.

    ``k`` ranges over 1..d+1; k=1 yields the all-zero matrix, k=d+1 the full
    permutation matrix.
    """
    d = order.d
    if k < 1 or k > d + 1:
        raise IndexOutOfRangeError(f"prefix step {k} not in 1..{d + 1}")
    q = np.zeros((d, d))
    for slot, v in enumerate(order.sequence[: k - 1]):
        q[v, slot] = 1.0
    return q


@dataclass(frozen=True, order=True)
class ParentSet:
    """A node together with its (canonically sorted) parent indices."""

    node: int
    parents: tuple[int, ...]

    def __post_init__(self):
        if self.node in self.parents:
            raise IndexOutOfRangeError(f"node {self.node} cannot be its own parent")
        if tuple(sorted(self.parents)) != self.parents:
            object.__setattr__(self, "parents", tuple(sorted(self.parents)))

    @property
    def key(self) -> tuple[int, tuple[int, ...]]:
        return (self.node, self.parents)


def make_parent_set(node: int, parents: Iterable[int], d: int | None = None) -> ParentSet:
    parents = tuple(sorted(int(p) for p in parents))
    if len(set(parents)) != len(parents):
        raise DuplicateIndexError(f"duplicate parent in {parents}")
    if d is not None:
        for p in (node, *parents):
            if p < 0 or p >= d:
                raise IndexOutOfRangeError(f"index {p} not in 0..{d - 1}")
    return ParentSet(node=int(node), parents=parents)


@dataclass(frozen=True)
class Dag:
    """Directed acyclic graph given as one parent set per node (index i = node i)."""

    parent_sets: tuple[ParentSet, ...]

    def __post_init__(self):
        for i, ps in enumerate(self.parent_sets):
            if ps.node != i:
                raise IndexOutOfRangeError(f"parent set at slot {i} belongs to node {ps.node}")
        self.topological_order()  # raises on cycles

    @property
    def d(self) -> int:
        return len(self.parent_sets)

    def edges(self) -> list[tuple[int, int]]:
        """All (parent, child) pairs, sorted."""
        out = []
        for ps in self.parent_sets:
            out.extend((p, ps.node) for p in ps.parents)
        return sorted(out)

    def adjacency(self) -> np.ndarray:
        """Binary matrix with entry (i, j) = 1 iff i -> j."""
        a = np.zeros((self.d, self.d))
        for p, c in self.edges():
            a[p, c] = 1.0
        return a

    def topological_order(self) -> list[int]:
        ts = graphlib.TopologicalSorter(
            {ps.node: set(ps.parents) for ps in self.parent_sets}
        )
        return list(ts.static_order())

    def to_json(self) -> str:
        return json.dumps({"d": self.d, "edges": [list(e) for e in self.edges()]})

    @staticmethod
    def from_json(text: str) -> "Dag":
        obj = json.loads(text)
        return dag_from_edges(obj["d"], [tuple(e) for e in obj["edges"]])


def dag_from_edges(d: int, edges: Iterable[tuple[int, int]]) -> Dag:
    parents: list[list[int]] = [[] for _ in range(d)]
    for p, c in edges:
        if not (0 <= p < d and 0 <= c < d):
            raise IndexOutOfRangeError(f"edge ({p}, {c}) out of range for d={d}")
        parents[c].append(p)
    return Dag(tuple(make_parent_set(i, ps, d) for i, ps in enumerate(parents)))


@dataclass(frozen=True)
class Dataset:
    """N x d matrix of observations plus the standardisation used to produce it.

    ``mean``/``std`` are None for raw data. ``constant_columns`` flags columns
    whose sample standard deviation was zero when standardising; those are
    centered and left with std set to 1.
    """

    values: np.ndarray
    mean: np.ndarray | None = None
    std: np.ndarray | None = None
    constant_columns: tuple[int, ...] = ()

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise IndexOutOfRangeError("dataset values must be a 2-d array")
        object.__setattr__(self, "values", v)
        v.setflags(write=False)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @property
    def is_standardized(self) -> bool:
        return self.mean is not None

    def to_standardized_units(self, column: int, raw_value: float) -> float:
        if self.mean is None:
            return float(raw_value)
        return float((raw_value - self.mean[column]) / self.std[column])

    def to_raw_units(self, standardized: np.ndarray) -> np.ndarray:
        if self.mean is None:
            return np.asarray(standardized, dtype=float)
        return np.asarray(standardized, dtype=float) * self.std + self.mean


def standardize(data: Dataset) -> Dataset:
    """Z-score each column with the population (1/N) standard deviation.

    Constant columns are centered and flagged instead of raising so that
    degenerate simulated roots do not abort runs. The (mean, std) pair is
    stored so interventional values and outputs can be mapped between raw
    and standardised scales.
    """
    v = data.values
    if data.n < 2:
        raise IndexOutOfRangeError("standardisation needs at least two rows")
    mean = v.mean(axis=0)
    std = v.std(axis=0)
    constant = tuple(int(j) for j in np.nonzero(std == 0.0)[0])
    safe_std = np.where(std == 0.0, 1.0, std)
    return Dataset(
        values=(v - mean) / safe_std,
        mean=mean,
        std=safe_std,
        constant_columns=constant,
    )


def csv_header(d: int) -> str:
    return ",".join(f"X{j}" for j in range(d))


def save_csv(data: Dataset, path: str | Path) -> None:
    """Write `X0,...,X{d-1}` header plus one observation per line (round-trip floats)."""
    lines = [csv_header(data.d)]
    for row in data.values:
        lines.append(",".join(repr(float(x)) for x in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_csv(path: str | Path) -> Dataset:
    text = Path(path).read_text().strip().splitlines()
    header = text[0].split(",")
    d = len(header)
    if header != [f"X{j}" for j in range(d)]:
        raise IndexOutOfRangeError(f"unexpected CSV header {header[:4]}...")
    rows = [[float(x) for x in line.split(",")] for line in text[1:]]
    values = np.array(rows, dtype=float).reshape(len(rows), d)
    return Dataset(values=values)
