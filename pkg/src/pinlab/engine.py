"""Simulation of the discrete-time chain and time-average estimation of
stationary statistics of the type process.

Randomness
----------
Every activation consumes exactly three uniforms from a
``numpy.random.Philox`` stream, in this order: the interaction coin
(interaction iff ``u0 < rho``), the node or link index
(``floor(u1 * n)`` or ``floor(u1 * m)``) and the inverse-CDF row sample
(``u2``). Bulk runs draw the same stream in blocks, so a trajectory built
with repeated :func:`step` calls matches :func:`run_stationary` bitwise.

Replica seeds are derived from a master seed with
``SeedSequence(master, spawn_key=key)``; see :func:`derive_seed`.
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .graph import Graph, boundary_counts
from .model import PinParams

BLOCK_STEPS = 1 << 16


def make_rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def derive_seed(master: int, *key: int) -> int:
    """Deterministic 64-bit child seed for task ``key`` under ``master``."""
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass
class Configuration:
    """Agent states with cached integer type counts and boundary counts."""

    states: np.ndarray
    type_counts: np.ndarray
    boundary_counts: np.ndarray
    m: int

    @property
    def n(self) -> int:
        return int(self.states.shape[0])

    @property
    def alphabet_size(self) -> int:
        return int(self.type_counts.shape[0])

    @property
    def theta(self) -> np.ndarray:
        return self.type_counts / self.n

    @property
    def xi(self) -> np.ndarray:
        if self.m == 0:
            raise ValueError("boundary undefined on a graph without links")
        return self.boundary_counts / self.m

    def copy(self) -> "Configuration":
        return Configuration(self.states.copy(), self.type_counts.copy(),
                             self.boundary_counts.copy(), self.m)


def recount(g: Graph, x, alphabet_size: int | None = None) -> Configuration:
    """Configuration with caches rebuilt from scratch."""
    states = np.array(getattr(x, "states", x), dtype=np.int64)
    if alphabet_size is None:
        alphabet_size = getattr(x, "alphabet_size", None) or int(states.max()) + 1
    if states.shape != (g.n,):
        raise ValueError(f"configuration has length {states.shape[0]}, graph has {g.n} nodes")
    if states.min() < 0 or states.max() >= alphabet_size:
        raise ValueError("state outside the alphabet")
    types = np.bincount(states, minlength=alphabet_size).astype(np.int64)
    bnd = boundary_counts(g, states, alphabet_size).astype(np.int64)
    return Configuration(states, types, bnd, g.m)


def random_configuration(g: Graph, alphabet_size: int, seed: int, theta=None) -> Configuration:
    """Uniform random states, or states with exact counts ``round(n * theta)``
    placed in random order."""
    rng = make_rng(seed)
    if theta is None:
        states = rng.integers(0, alphabet_size, size=g.n)
    else:
        counts = np.floor(np.asarray(theta, float) * g.n).astype(int)
        counts[np.argmax(theta)] += g.n - counts.sum()
        states = rng.permutation(np.repeat(np.arange(alphabet_size), counts))
    return recount(g, states, alphabet_size)


def _check_run(g: Graph, params: PinParams, x: Configuration):
    if x.n != g.n:
        raise ValueError(f"configuration has {x.n} nodes, graph has {g.n}")
    if x.alphabet_size != params.k:
        raise ValueError("configuration alphabet does not match the model")
    if params.rho > 0 and g.m == 0:
        raise ValueError("rho > 0 requires a graph with at least one link")


class _Tables:
    """Per-(graph, params) arrays handed to the kernels."""

    def __init__(self, g: Graph, params: PinParams):
        self.cum_p, self.cum_phi = params.cumulative_rows()
        self.tails = np.ascontiguousarray(g.tails)
        self.heads = np.ascontiguousarray(g.heads)
        self.adj = g.adjacency()
        self.complete = g.is_complete
        self.rho = float(params.rho)


def step(g: Graph, params: PinParams, x: Configuration, rng: np.random.Generator,
         tables: _Tables | None = None) -> Configuration:
    """Advance ``x`` by one activation, in place. Returns ``x``."""
    _check_run(g, params, x)
    t = tables or _Tables(g, params)
    u0, u1, u2 = rng.random(3)
    w, new = _kernels.step_once(u0, u1, u2, t.rho, g.n, t.tails, t.heads,
                                t.cum_p, t.cum_phi, x.states)
    if new != x.states[w]:
        _kernels.apply_change(w, new, x.states, x.type_counts, x.boundary_counts,
                              *t.adj, t.complete, True)
    return x


@dataclass
class TrajectoryStats:
    """Time-average summary of one trajectory after burn-in.

    ``theta_samples`` holds the recorded types (one row per sample);
    ``boundary_samples`` the recorded boundary counts when requested.
    """

    burn_in: int
    samples: int
    thinning: int
    seed: int
    theta_time_average: np.ndarray
    event_mass: dict
    theta_histogram: dict
    theta_samples: np.ndarray = field(repr=False)
    boundary_samples: np.ndarray | None = field(default=None, repr=False)
    final: Configuration | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "burn_in": self.burn_in,
            "samples": self.samples,
            "thinning": self.thinning,
            "seed": self.seed,
            "theta_time_average": [float(v) for v in self.theta_time_average],
            "event_mass": {k: float(v) for k, v in sorted(self.event_mass.items())},
            "theta_histogram": {k: int(v) for k, v in sorted(self.theta_histogram.items())},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def trajectory_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        k = self.theta_samples.shape[1]
        w.writerow(["t"] + [f"theta_{i}" for i in range(k)])
        for r, th in enumerate(self.theta_samples):
            w.writerow([self.burn_in + (r + 1) * self.thinning] + [repr(float(v)) for v in th])
        return buf.getvalue()


def _evaluate_predicates(predicates, thetas):
    if not predicates:
        return {}
    items = predicates.items() if isinstance(predicates, dict) else predicates
    out = {}
    for name, pred in items:
        # vectorized predicates take the (samples, k) array; fall back to rows
        try:
            hits = np.asarray(pred(thetas))
        except Exception:
            hits = None
        if hits is None or hits.shape != (len(thetas),):
            hits = np.array([bool(pred(th)) for th in thetas])
        out[name] = float(np.count_nonzero(hits)) / len(thetas)
    return out


def run_stationary(g: Graph, params: PinParams, x0: Configuration, *, samples: int,
                   seed: int, burn_in: int | None = None, thinning: int | None = None,
                   predicates=None, record_boundary: bool = False,
                   track_boundary: bool = True) -> TrajectoryStats:
    """Run ``burn_in + samples * thinning`` activations from a copy of ``x0``.

    The state is recorded after every ``thinning``-th activation past the
    burn-in. ``predicates`` maps names to callables on type vectors (either
    batched over rows of a 2-D array or on a single vector); their
    empirical frequencies over the recorded samples go to ``event_mass``.
    Defaults: ``burn_in = 100 n``, ``thinning = n``.
    """
    _check_run(g, params, x0)
    if samples < 1:
        raise ValueError("samples must be >= 1")
    burn_in = 100 * g.n if burn_in is None else int(burn_in)
    thinning = g.n if thinning is None else int(thinning)
    if burn_in < 0 or thinning < 1:
        raise ValueError("burn_in must be >= 0 and thinning >= 1")
    if record_boundary and not track_boundary:
        raise ValueError("record_boundary needs track_boundary")

    x = x0.copy()
    t = _Tables(g, params)
    k = params.k
    rec_types = np.zeros((samples, k), dtype=np.int64)
    rec_bnd = np.zeros((samples if record_boundary else 0, k, k), dtype=np.int64)
    rng = make_rng(seed)
    total = burn_in + samples * thinning
    done, pos = 0, 0
    while done < total:
        block = min(BLOCK_STEPS, total - done)
        u = rng.random((block, 3))
        pos = _kernels.advance(u, done, burn_in, thinning, t.rho, t.tails, t.heads,
                               t.cum_p, t.cum_phi, x.states, x.type_counts,
                               x.boundary_counts, *t.adj, t.complete, track_boundary,
                               rec_types, rec_bnd, pos)
        done += block
    if not track_boundary:
        x = recount(g, x.states, k)

    thetas = rec_types / g.n
    cells, counts = np.unique(rec_types, axis=0, return_counts=True)
    hist = {",".join(map(str, c.tolist())): int(v) for c, v in zip(cells, counts)}
    return TrajectoryStats(
        burn_in=burn_in, samples=samples, thinning=thinning, seed=int(seed),
        theta_time_average=thetas.mean(axis=0),
        event_mass=_evaluate_predicates(predicates, thetas),
        theta_histogram=hist,
        theta_samples=thetas,
        boundary_samples=rec_bnd if record_boundary else None,
        final=x,
    )


def run_replicas(g: Graph, params: PinParams, *, replicas: int, master_seed: int,
                 samples: int, burn_in: int | None = None, thinning: int | None = None,
                 x0: Configuration | None = None, predicates=None,
                 record_boundary: bool = False, threads: int = 1) -> list[TrajectoryStats]:
    """Independent trajectories with seeds ``derive_seed(master_seed, r, j)``.

    Replica ``r`` uses ``j = 0`` for its initial configuration (when ``x0``
    is not given) and ``j = 1`` for the chain.
    """
    def one(r):
        start = x0 if x0 is not None else random_configuration(
            g, params.k, derive_seed(master_seed, r, 0))
        return run_stationary(g, params, start, samples=samples, burn_in=burn_in,
                              thinning=thinning, seed=derive_seed(master_seed, r, 1),
                              predicates=predicates, record_boundary=record_boundary)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(one, range(replicas)))
    return [one(r) for r in range(replicas)]


def merge_stats(stats: list[TrajectoryStats]) -> dict:
    """Sample-weighted averages across replicas plus across-replica standard errors."""
    w = np.array([s.samples for s in stats], dtype=float)
    avg = np.stack([s.theta_time_average for s in stats])
    out = {
        "replicas": len(stats),
        "samples": int(w.sum()),
        "theta_time_average": (w[:, None] * avg).sum(0) / w.sum(),
        "theta_se": avg.std(axis=0, ddof=1) / np.sqrt(len(stats)) if len(stats) > 1
        else np.full(avg.shape[1], np.nan),
        "event_mass": {},
        "event_mass_se": {},
    }
    for name in stats[0].event_mass:
        vals = np.array([s.event_mass[name] for s in stats])
        out["event_mass"][name] = float((w * vals).sum() / w.sum())
        out["event_mass_se"][name] = float(vals.std(ddof=1) / np.sqrt(len(vals))) \
            if len(vals) > 1 else float("nan")
    return out


def mutation_irreducible(params: PinParams) -> bool:
    from .lyapunov import is_irreducible
    return is_irreducible(params.P)


def is_ergodic_sufficient(params: PinParams) -> bool:
    """True when 1 - rho > 0 and P is irreducible (a sufficient condition)."""
    return params.rho < 1 and mutation_irreducible(params)
