"""Finite-n concentration bound, empirical stationary masses and sweeps.

Seeds
-----
Sweep grid point ``i`` (index over n, or over (alpha, n) pairs) under
master seed ``master`` draws its graph from
``derive_seed(derive_seed(master, i, 0), attempt)`` (``attempt`` grows only
when an Erdos-Renyi draw is empty), runs its replicas under master
``derive_seed(master, i, 1)`` and seeds the mixing-gap local search with
``derive_seed(master, i, 2)``.

CSV columns
-----------
``label, family, seed, n, m, alpha, delta, zeta, W, W_exact, C, bound,
mass, se, drift_mass, drift_se, replicas, samples, theta_avg``.
``mass`` is the estimated event, ``drift_mass`` the drift event the
bound refers to (equal when no custom event is given), ``theta_avg`` the
replica-averaged time average with entries joined by ``;``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .engine import derive_seed, is_ergodic_sufficient, merge_stats, run_replicas
from .graph import (EXACT_GAP_MAX_NODES, EmptyGraphSample, Graph, generate_complete,
                    generate_erdos_renyi, generate_star, mixing_gap_exact,
                    mixing_gap_local_search)
from .lyapunov import LyapunovCertificate, certificate_for
from .model import PinParams, with_alpha

CSV_COLUMNS = ("label", "family", "seed", "n", "m", "alpha", "delta", "zeta", "W", "W_exact", "C",
               "bound", "mass", "se", "drift_mass", "drift_se", "replicas", "samples", "theta_avg")


class BoundHypothesisError(ValueError):
    """The threshold does not exceed the certificate slack (need delta > zeta)."""


@dataclass
class ConcentrationReport:
    delta: float
    zeta: float
    n: int
    m: int
    W: float
    W_exact: bool
    C: float
    theoretical_lower_bound: float
    empirical_mass: float
    se: float
    samples: int
    replicas: int
    drift_event_mass: float = float("nan")
    drift_event_se: float = float("nan")
    theta_avg: list = field(default_factory=list)
    label: str = ""
    family: str = ""
    alpha: float | None = None
    seed: int | None = None

    @property
    def consistent(self) -> bool:
        """Drift-event mass within 4 standard errors above the bound."""
        return self.drift_event_mass + 4 * self.drift_event_se >= self.theoretical_lower_bound

    def to_row(self) -> dict:
        return {
            "label": self.label, "family": self.family, "seed": "" if self.seed is None else self.seed,
            "n": self.n, "m": self.m,
            "alpha": "" if self.alpha is None else self.alpha,
            "delta": self.delta, "zeta": self.zeta, "W": self.W, "W_exact": self.W_exact,
            "C": self.C, "bound": self.theoretical_lower_bound, "mass": self.empirical_mass,
            "se": self.se, "drift_mass": self.drift_event_mass,
            "drift_se": self.drift_event_se, "replicas": self.replicas, "samples": self.samples,
            "theta_avg": ";".join(repr(float(v)) for v in self.theta_avg),
        }

    def to_dict(self) -> dict:
        return asdict(self)


def concentration_lower_bound(cert: LyapunovCertificate, n: int, W: float, delta: float,
                              C: float | None = None) -> float:
    """``1 - C/(n delta) - 2 k^2 ||grad V||_inf W / delta - zeta/delta``, floored at 0.

    ``C`` defaults to the certificate constant ``K + 8 ||grad V||_inf``.
    """
    zeta = float(cert.zeta)
    if not delta > zeta:
        raise BoundHypothesisError(
            f"delta = {delta} must exceed the certificate slack zeta = {zeta} "
            "(the bound only holds for delta > zeta)")
    if n < 1 or W < 0:
        raise ValueError("need n >= 1 and W >= 0")
    C = cert.C if C is None else float(C)
    k = cert.alphabet_size
    val = 1.0 - C / (n * delta) - 2.0 * k * k * cert.grad_inf_norm * W / delta - zeta / delta
    return max(0.0, val)


def drift_event(cert: LyapunovCertificate, params: PinParams, delta: float):
    """Batched predicate ``grad V(theta) . Dbar(theta) > -(delta - zeta)``."""
    thr = -(delta - cert.zeta)

    def pred(theta):
        return cert.lie_derivative(params, theta) > thr

    return pred


def mixing_gap_for(g: Graph, seed: int = 0, restarts: int = 20):
    """``(W, exact)``: zero for complete graphs, enumeration for small graphs,
    local search (a lower bound) otherwise."""
    if g.is_complete:
        return 0.0, True
    if g.n <= EXACT_GAP_MAX_NODES:
        return mixing_gap_exact(g).value, True
    return mixing_gap_local_search(g, restarts=restarts, seed=seed).value, False


def estimate_event_mass(g: Graph, params: PinParams, cert: LyapunovCertificate, delta: float,
                        *, samples: int, master_seed: int, replicas: int = 5,
                        burn_in: int | None = None, thinning: int | None = None,
                        W: float | None = None, W_exact: bool | None = None, event=None,
                        C: float | None = None, allow_nonergodic: bool = False,
                        threads: int = 1, gap_seed: int = 0, label: str = "",
                        family: str = "") -> ConcentrationReport:
    """Replica-averaged stationary mass of ``event`` against the finite-n bound.

    ``event`` is a batched predicate on type vectors; by default the drift
    event ``grad V . Dbar > -(delta - zeta)``. With a custom event and
    ``delta <= zeta`` the bound is reported as NaN. ``samples`` is the number of
    recorded states per replica. Standard errors come from the spread
    across replicas.
    """
    if replicas < 2:
        raise ValueError("need at least 2 replicas for a standard error")
    if not allow_nonergodic and not is_ergodic_sufficient(params):
        raise ValueError("chain is not known to be ergodic (need rho < 1 and irreducible P); "
                         "pass allow_nonergodic=True to override")
    if event is None or delta > cert.zeta:
        # fail fast on delta <= zeta before any simulation
        concentration_lower_bound(cert, g.n, 0.0, delta, C)
    if W is None:
        W, W_exact = mixing_gap_for(g, seed=gap_seed)
    elif W_exact is None:
        W_exact = False
    bound = concentration_lower_bound(cert, g.n, W, delta, C) if delta > cert.zeta \
        else float("nan")
    drift_pred = drift_event(cert, params, delta)
    preds = {"event": event if event is not None else drift_pred, "drift": drift_pred}
    stats = run_replicas(g, params, replicas=replicas, master_seed=master_seed,
                         samples=samples, burn_in=burn_in, thinning=thinning,
                         predicates=preds, threads=threads)
    merged = merge_stats(stats)
    return ConcentrationReport(
        delta=float(delta), zeta=float(cert.zeta), n=g.n, m=g.m, W=float(W),
        W_exact=bool(W_exact), C=float(cert.C if C is None else C),
        theoretical_lower_bound=bound,
        empirical_mass=merged["event_mass"]["event"],
        se=merged["event_mass_se"]["event"],
        drift_event_mass=merged["event_mass"]["drift"],
        drift_event_se=merged["event_mass_se"]["drift"],
        samples=merged["samples"], replicas=len(stats),
        theta_avg=[float(v) for v in merged["theta_time_average"]],
        label=label, family=family,
    )


# -- sweeps ----------------------------------------------------------------

def er_probability(expr, n: int) -> float:
    """Edge probability for ``n``: a number, a callable, or an expression in
    ``n`` using ``log``/``sqrt`` (e.g. ``"10*log(n)/n"``)."""
    if callable(expr):
        return float(expr(n))
    if isinstance(expr, str):
        env = {"n": n, "log": math.log, "sqrt": math.sqrt, "__builtins__": {}}
        return float(eval(expr, env))  # noqa: S307 -- restricted namespace
    return float(expr)


def make_family_graph(family: str, n: int, seed: int, p=None) -> Graph:
    if family == "complete":
        return generate_complete(n)
    if family == "star":
        return generate_star(n)
    if family == "er":
        prob = min(1.0, er_probability(p, n))
        for attempt in range(100):
            try:
                return generate_erdos_renyi(n, prob, derive_seed(seed, attempt))
            except EmptyGraphSample:
                continue
        raise RuntimeError(f"100 empty draws of G({n}, {prob})")
    raise ValueError(f"unknown graph family {family!r}; choose complete, er or star")


def _run_points(points, threads):
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(lambda f: f(), points))
    return [f() for f in points]


def _seed_list(master_seed, seeds):
    if seeds is None:
        if master_seed is None:
            raise ValueError("give master_seed or seeds")
        return [int(master_seed)]
    seeds = [int(v) for v in seeds]
    if not seeds:
        raise ValueError("seeds must not be empty")
    return seeds


def _per_n(value, n):
    return value(n) if callable(value) else value


def atm_sweep(params: PinParams, family: str, ns, delta: float, *, samples: int,
              master_seed: int | None = None, seeds=None, replicas: int = 5, burn_in=None,
              thinning=None, p=None, cert: LyapunovCertificate | None = None,
              threads: int = 1) -> list[ConcentrationReport]:
    """Drift-event mass and finite-n bound along a graph family, one report
    per (n, seed).

    ``seeds`` lists master seeds (default ``[master_seed]``); rows are
    ordered by n, then seed. ``burn_in``/``thinning`` may be callables of
    ``n``. Star graphs serve as a negative control: their rows are reported
    without any expectation.
    """
    cert = cert or certificate_for(params)
    seeds = _seed_list(master_seed, seeds)

    def point(i, n, seed):
        def run():
            g = make_family_graph(family, n, derive_seed(seed, i, 0), p)
            rep = estimate_event_mass(
                g, params, cert, delta, samples=samples, replicas=replicas,
                master_seed=derive_seed(seed, i, 1), burn_in=_per_n(burn_in, n),
                thinning=_per_n(thinning, n), gap_seed=derive_seed(seed, i, 2),
                label="atm", family=family)
            rep.seed = seed
            return rep
        return run

    return _run_points([point(i, n, s) for i, n in enumerate(ns) for s in seeds], threads)


def nondecreasing_within(reports, slack: float = 2.0) -> bool:
    """Masses nondecreasing in order, up to ``slack`` combined standard errors."""
    for a, b in zip(reports, reports[1:]):
        if b.empirical_mass + slack * math.hypot(a.se, b.se) < a.empirical_mass:
            return False
    return True


def vanishing_alpha_sweep(params: PinParams, alphas, ns, delta: float, *, samples: int,
                          master_seed: int | None = None, seeds=None, family: str = "er",
                          p=None, replicas: int = 5, burn_in=None, thinning=None,
                          threads: int = 1) -> list[ConcentrationReport]:
    """Mass of ``{h < delta}`` (SIRS) or ``{|theta_1 - z*(alpha)| < delta}``
    (SIS) over an (alpha, n, seed) grid, in that nesting order.

    The bound column is the finite-n bound of the drift event for the same
    certificate, or NaN when ``delta`` does not exceed its slack.
    """
    if params.kind not in ("sis", "sirs"):
        raise ValueError("vanishing-alpha sweep needs an SIS or SIRS model")
    alphas = [float(a) for a in alphas]
    if any(a <= 0 for a in alphas):
        raise ValueError("alpha values must be positive")
    seeds = _seed_list(master_seed, seeds)
    grid = [(a, n) for a in alphas for n in ns]

    def point(i, alpha, n, seed):
        def run():
            model = with_alpha(params, alpha)
            cert = certificate_for(model)
            if model.kind == "sirs":
                def event(theta):
                    return cert.deficit(theta) < delta
            else:
                z = cert.z_star

                def event(theta):
                    return np.abs(np.asarray(theta)[..., 1] - z) < delta
            g = make_family_graph(family, n, derive_seed(seed, i, 0), p)
            W, W_exact = mixing_gap_for(g, seed=derive_seed(seed, i, 2))
            rep = estimate_event_mass(
                g, model, cert, delta, samples=samples, replicas=replicas,
                master_seed=derive_seed(seed, i, 1), burn_in=_per_n(burn_in, n),
                thinning=_per_n(thinning, n), W=W, W_exact=W_exact, event=event,
                label="vanishing-alpha", family=family)
            rep.alpha = alpha
            rep.seed = seed
            return rep
        return run

    return _run_points([point(i, a, n, s) for i, (a, n) in enumerate(grid) for s in seeds],
                       threads)


def double_limit_trend(reports) -> list[dict]:
    """For each alpha (in the given order) the mass at the largest n."""
    best = {}
    for r in reports:
        if r.alpha not in best or r.n > best[r.alpha].n:
            best[r.alpha] = r
    return [{"alpha": a, "n": r.n, "mass": r.empirical_mass, "se": r.se}
            for a, r in best.items()]


# -- output ----------------------------------------------------------------

def reports_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in reports:
        row = r.to_row()
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def reports_json(reports, config: dict | None = None) -> str:
    body = {"reports": [r.to_dict() for r in reports]}
    if config is not None:
        body["config"] = config
    return json.dumps(body, indent=2, sort_keys=True, allow_nan=True) + "\n"
