"""Interaction patterns: storage, generators, boundary statistics and the
total mixing gap."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from pathlib import Path

import numpy as np

from . import _kernels

EXACT_GAP_MAX_NODES = 14


class EmptyGraphSample(ValueError):
    """An Erdos-Renyi draw produced no links. Callers decide whether to resample."""


@dataclass(frozen=True, eq=False)
class Graph:
    """Directed graph on nodes ``0..n-1`` stored as an ordered edge list.

    Undirected graphs carry both orientations of every link. Instances are
    immutable; adjacency arrays are derived lazily and cached.
    """

    n: int
    edges: np.ndarray = field(repr=False)

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if self.n < 1:
            raise ValueError(f"node count must be >= 1, got {self.n}")
        if edges.size and (edges.min() < 0 or edges.max() >= self.n):
            raise ValueError("edge endpoint out of range [0, n)")
        if np.any(edges[:, 0] == edges[:, 1]):
            raise ValueError("self-loops are not allowed")
        keys = edges[:, 0] * self.n + edges[:, 1]
        if np.unique(keys).size != keys.size:
            raise ValueError("duplicate links")
        edges.setflags(write=False)
        object.__setattr__(self, "edges", edges)

    @property
    def m(self) -> int:
        return int(self.edges.shape[0])

    @property
    def tails(self) -> np.ndarray:
        return self.edges[:, 0]

    @property
    def heads(self) -> np.ndarray:
        return self.edges[:, 1]

    @cached_property
    def is_complete(self) -> bool:
        return self.m == self.n * (self.n - 1)

    @cached_property
    def is_symmetric(self) -> bool:
        fwd = set(map(tuple, self.edges.tolist()))
        return all((v, u) in fwd for u, v in fwd)

    @cached_property
    def _csr(self):
        def build(src, dst):
            order = np.argsort(src, kind="stable")
            ptr = np.zeros(self.n + 1, dtype=np.int64)
            np.cumsum(np.bincount(src, minlength=self.n), out=ptr[1:])
            return ptr, np.ascontiguousarray(dst[order])

        out_ptr, out_idx = build(self.tails, self.heads)
        in_ptr, in_idx = build(self.heads, self.tails)
        return out_ptr, out_idx, in_ptr, in_idx

    def adjacency(self):
        """Return ``(out_ptr, out_idx, in_ptr, in_idx)`` CSR arrays."""
        return self._csr

    def out_degree(self) -> np.ndarray:
        return np.diff(self._csr[0])

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.edges, other.edges)

    __hash__ = None

    def require_nonempty(self):
        if self.m == 0:
            raise ValueError("graph has no links; a nonempty interaction pattern is required")

    # -- file format: "n m" header, then one "tail head" line per link --------

    def to_text(self) -> str:
        lines = [f"{self.n} {self.m}"]
        lines.extend(f"{u} {v}" for u, v in self.edges.tolist())
        return "\n".join(lines) + "\n"

    def write(self, path):
        Path(path).write_text(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "Graph":
        rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        if not rows or len(rows[0]) != 2:
            raise ValueError("graph header must be 'n m'")
        n, m = int(rows[0][0]), int(rows[0][1])
        body = rows[1:]
        if len(body) != m:
            raise ValueError(f"header declares {m} links but {len(body)} were given")
        edges = np.array([[int(a), int(b)] for a, b in body], dtype=np.int64).reshape(-1, 2)
        return cls(n, edges)

    @classmethod
    def read(cls, path) -> "Graph":
        return cls.from_text(Path(path).read_text())


def _check_order(n):
    if int(n) != n or n < 2:
        raise ValueError(f"n must be an integer >= 2, got {n}")


def _undirected(n, pairs) -> Graph:
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    edges = np.empty((2 * len(pairs), 2), dtype=np.int64)
    edges[0::2] = pairs
    edges[1::2] = pairs[:, ::-1]
    return Graph(n, edges)


def generate_complete(n: int) -> Graph:
    _check_order(n)
    u, v = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    mask = u != v
    return Graph(n, np.column_stack([u[mask], v[mask]]))


def generate_star(n: int) -> Graph:
    """Hub node 0 linked both ways to every other node."""
    _check_order(n)
    leaves = np.arange(1, n)
    return _undirected(n, np.column_stack([np.zeros_like(leaves), leaves]))


def generate_single_link(n: int) -> Graph:
    _check_order(n)
    return Graph(n, [[0, 1]])


def generate_erdos_renyi(n: int, p: float, seed: int) -> Graph:
    """Undirected G(n, p): each unordered pair kept independently with
    probability ``p``; pairs are visited in lexicographic order and each
    consumes one uniform from ``Philox(seed)``.

    Raises EmptyGraphSample when no pair is kept.
    """
    _check_order(n)
    if not 0 < p <= 1:
        raise ValueError(f"p must lie in (0, 1], got {p}")
    rng = np.random.Generator(np.random.Philox(seed))
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.size) < p
    if not keep.any():
        raise EmptyGraphSample(f"G({n}, {p}) with seed {seed} has no links")
    return _undirected(n, np.column_stack([iu[keep], ju[keep]]))


# -- boundary --------------------------------------------------------------

def _states_of(x):
    return np.asarray(getattr(x, "states", x), dtype=np.int64)


def boundary_counts(g: Graph, x, alphabet_size: int) -> np.ndarray:
    """Integer matrix whose (i, j) entry counts links (u, v) with x_u=i, x_v=j."""
    states = _states_of(x)
    if states.shape != (g.n,):
        raise ValueError(f"configuration has length {states.shape[0]}, graph has {g.n} nodes")
    flat = states[g.tails] * alphabet_size + states[g.heads]
    return np.bincount(flat, minlength=alphabet_size**2).reshape(alphabet_size, alphabet_size)


def boundary(g: Graph, x, alphabet_size: int | None = None) -> np.ndarray:
    """Empirical frequency of state pairs across links, ``xi(x)``."""
    g.require_nonempty()
    if alphabet_size is None:
        alphabet_size = len(getattr(x, "type_counts", ())) or int(_states_of(x).max()) + 1
    return boundary_counts(g, x, alphabet_size) / g.m


def boundary_complete_formula(theta, n: int, exact: bool = False):
    """Boundary of any configuration with type ``theta`` on the complete graph.

    ``n * theta`` must be integral. With ``exact=True`` the result is a
    matrix of ``Fraction`` objects.
    """
    _check_order(n)
    theta = np.asarray(theta, dtype=float)
    counts = np.rint(theta * n)
    if not np.allclose(counts, theta * n, atol=1e-9):
        raise ValueError("n * theta must be integer-valued")
    counts = counts.astype(np.int64)
    if counts.sum() != n:
        raise ValueError("theta does not sum to one")
    if exact:
        k = counts.size
        denom = n * (n - 1)
        return np.array([[Fraction(int(counts[i] * (counts[j] - (i == j))), denom)
                          for j in range(k)] for i in range(k)], dtype=object)
    th = counts / n
    return np.outer(th, th) + (th[:, None] * (th[None, :] - np.eye(th.size))) / (n - 1)


# -- total mixing gap ------------------------------------------------------

@dataclass(frozen=True)
class MixingGapResult:
    value: float
    witness_S: tuple
    witness_U: tuple
    exact: bool
    numerator: int = 0
    denominator: int = 1

    def as_fraction(self) -> Fraction:
        return Fraction(self.numerator, self.denominator)

    def to_dict(self) -> dict:
        return {"value": self.value, "exact": self.exact,
                "witness_S": list(self.witness_S), "witness_U": list(self.witness_U),
                "numerator": self.numerator, "denominator": self.denominator}


def gap_objective(g: Graph, S, U) -> float:
    """|E_SU|/m - |S||U|/(n(n-1)) in absolute value for disjoint S, U."""
    return float(_gap_fraction(g, S, U))


def _gap_fraction(g: Graph, S, U) -> Fraction:
    g.require_nonempty()
    S, U = set(int(s) for s in S), set(int(u) for u in U)
    if S & U:
        raise ValueError("S and U must be disjoint")
    in_s = np.zeros(g.n, bool)
    in_u = np.zeros(g.n, bool)
    in_s[list(S)] = True
    in_u[list(U)] = True
    e_su = int(np.count_nonzero(in_s[g.tails] & in_u[g.heads]))
    return abs(Fraction(e_su, g.m) - Fraction(len(S) * len(U), g.n * (g.n - 1)))


def _result(g: Graph, numerator, labels, exact) -> MixingGapResult:
    denom = g.m * g.n * (g.n - 1)
    frac = Fraction(int(numerator), denom)
    labels = np.asarray(labels)
    return MixingGapResult(
        value=float(frac),
        witness_S=tuple(int(i) for i in np.flatnonzero(labels == _kernels.IN_S)),
        witness_U=tuple(int(i) for i in np.flatnonzero(labels == _kernels.IN_U)),
        exact=exact,
        numerator=frac.numerator,
        denominator=frac.denominator,
    )


def mixing_gap_exact(g: Graph, max_nodes: int = EXACT_GAP_MAX_NODES) -> MixingGapResult:
    """Exhaustive total mixing gap over all 3**n labelings (S, U, neither)."""
    g.require_nonempty()
    if g.n > max_nodes:
        raise ValueError(
            f"exact mixing gap is limited to n <= {max_nodes} (got n={g.n}); "
            "use mixing_gap_local_search for a certified lower bound")
    best, labels = _kernels.exact_gap_search(g.n, g.m, *g.adjacency())
    return _result(g, best, labels, exact=True)


def _hub_starts(g: Graph, count: int):
    """Labelings that put a high-degree node on one side and its
    neighbors on the other."""
    out_ptr, out_idx, in_ptr, in_idx = g.adjacency()
    starts = []
    for ptr, idx, hub_label, nb_label in ((out_ptr, out_idx, _kernels.IN_S, _kernels.IN_U),
                                          (in_ptr, in_idx, _kernels.IN_U, _kernels.IN_S)):
        deg = np.diff(ptr)
        for v in np.argsort(-deg, kind="stable")[:count]:
            lab = np.full(g.n, _kernels.NEITHER, dtype=np.int64)
            lab[idx[ptr[v]:ptr[v + 1]]] = nb_label
            lab[v] = hub_label
            starts.append(lab)
    return starts


def mixing_gap_local_search(g: Graph, restarts: int = 20, seed: int = 0,
                            hub_starts: int = 3) -> MixingGapResult:
    """Hill climbing over labelings from random starts plus ``hub_starts``
    starts around the highest out- and in-degree nodes.

    The returned value is attained by the returned witnesses, hence a lower
    bound on the total mixing gap; ``exact`` is always False.
    """
    g.require_nonempty()
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    rng = np.random.Generator(np.random.Philox(seed))
    adj = g.adjacency()
    best, best_labels = -1, None
    starts = [rng.integers(0, 3, size=g.n).astype(np.int64) for _ in range(restarts)]
    for labels in starts + _hub_starts(g, hub_starts):
        val = _kernels.local_gap_search(labels, g.n, g.m, *adj)
        if val > best:
            best, best_labels = val, labels.copy()
    return _result(g, best, best_labels, exact=False)


def er_tail_log_bound(n: int, p: float, eta: float) -> float:
    """Natural log of 3**(n+2) * exp(-n**2 p eta**3 / 32), capped at 0."""
    _check_order(n)
    if not 0 < p <= 1:
        raise ValueError(f"p must lie in (0, 1], got {p}")
    if not 0 < eta <= 1:
        raise ValueError(f"eta must lie in (0, 1], got {eta}")
    return min(0.0, (n + 2) * math.log(3.0) - n * n * p * eta**3 / 32.0)


def er_tail_bound(n: int, p: float, eta: float) -> float:
    """Upper bound on P(W >= eta) for G(n, p)."""
    return math.exp(er_tail_log_bound(n, p, eta))
