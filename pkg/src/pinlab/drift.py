"""Mean drift, limit drift, drift discrepancy bounds and the mean-field ODE."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .graph import Graph, boundary
from .model import PinParams


def q_operator(params: PinParams, xi) -> np.ndarray:
    """Interaction part of the drift for a boundary matrix ``xi``.

    ``Q(xi)_i = sum_{l,j} xi[j, l] phi[l, j, i] - sum_l xi[i, l]``;
    leading batch dimensions of ``xi`` are broadcast.
    """
    xi = np.asarray(xi, dtype=float)
    k = params.k
    if xi.shape[-2:] != (k, k):
        raise ValueError(f"boundary must be {k}x{k}, got {xi.shape[-2:]}")
    return np.einsum("...jl,lji->...i", xi, params.phi) - xi.sum(axis=-1)


def limit_drift(params: PinParams, theta) -> np.ndarray:
    """``((1 - rho) P^T + rho sum_l theta_l phi(l)^T - I) theta``, batched over
    leading dimensions of ``theta``."""
    theta = np.asarray(theta, dtype=float)
    mut = theta @ params.P - theta
    inter = np.einsum("...l,...j,lji->...i", theta, theta, params.phi) - theta
    return (1.0 - params.rho) * mut + params.rho * inter


def drift_from_stats(params: PinParams, theta, xi) -> np.ndarray:
    """Mean drift written in terms of type and boundary."""
    theta = np.asarray(theta, dtype=float)
    return (1.0 - params.rho) * (theta @ params.P - theta) + params.rho * q_operator(params, xi)


def mean_drift(g: Graph, params: PinParams, x) -> np.ndarray:
    """``n E[theta(X(t+1)) - theta(X(t)) | X(t) = x]``.

    ``x`` may be a Configuration (its caches are used) or a state vector.
    """
    if params.rho > 0:
        g.require_nonempty()
    if hasattr(x, "type_counts"):
        theta = x.theta
        xi = x.xi if g.m else np.zeros((params.k, params.k))
    else:
        states = np.asarray(x, dtype=np.int64)
        if states.shape != (g.n,):
            raise ValueError(f"configuration has length {states.shape[0]}, graph has {g.n} nodes")
        theta = np.bincount(states, minlength=params.k) / g.n
        xi = boundary(g, states, params.k) if g.m else np.zeros((params.k, params.k))
    return drift_from_stats(params, theta, xi)


@dataclass(frozen=True)
class DiscrepancyReport:
    """Gap between mean and limit drift at one configuration, with the
    two upper bounds on it."""

    discrepancy: float
    pairwise_bound: float
    mixing_bound: float
    W: float
    W_exact: bool

    @property
    def holds(self) -> bool:
        """Whether the chain discrepancy <= pairwise <= mixing bound holds.

        The second link is only claimed for an exact W.
        """
        tol = 1e-12
        ok = self.discrepancy <= self.pairwise_bound + tol
        if self.W_exact:
            ok = ok and self.pairwise_bound <= self.mixing_bound + tol
        return ok

    def to_row(self) -> dict:
        return {"discrepancy": self.discrepancy, "pairwise_bound": self.pairwise_bound,
                "mixing_bound": self.mixing_bound, "W": self.W, "W_exact": self.W_exact}


def discrepancy_bounds(g: Graph, params: PinParams, x, W: float,
                       W_exact: bool = True) -> DiscrepancyReport:
    """``||D(x) - Dbar(theta(x))||_1`` together with
    ``2 rho ||xi - theta theta^T||_1`` and ``2 rho k^2 W + 4 rho / (n - 1)``.
    """
    g.require_nonempty()
    states = np.asarray(getattr(x, "states", x), dtype=np.int64)
    theta = np.bincount(states, minlength=params.k) / g.n
    xi = boundary(g, states, params.k)
    d = drift_from_stats(params, theta, xi)
    dbar = limit_drift(params, theta)
    rho = params.rho
    return DiscrepancyReport(
        discrepancy=float(np.abs(d - dbar).sum()),
        pairwise_bound=float(2 * rho * np.abs(xi - np.outer(theta, theta)).sum()),
        mixing_bound=float(2 * rho * params.k**2 * W + 4 * rho / (g.n - 1)),
        W=float(W),
        W_exact=bool(W_exact),
    )


def drift_rows(g: Graph, params: PinParams, configs, W: float, W_exact: bool) -> list[dict]:
    """One flat row per configuration: theta, D, Dbar and both bounds."""
    rows = []
    for x in configs:
        states = np.asarray(getattr(x, "states", x))
        theta = np.bincount(states, minlength=params.k) / g.n
        d = mean_drift(g, params, states)
        dbar = limit_drift(params, theta)
        rep = discrepancy_bounds(g, params, states, W, W_exact)
        row = {f"theta_{i}": theta[i] for i in range(params.k)}
        row.update({f"D_{i}": d[i] for i in range(params.k)})
        row.update({f"Dbar_{i}": dbar[i] for i in range(params.k)})
        row.update(rep.to_row())
        rows.append(row)
    return rows


class StepSizeError(RuntimeError):
    pass


def integrate_mean_field(params: PinParams, theta0, t_end: float, dt: float = 1e-2):
    """Classical fourth-order Runge-Kutta for ``dtheta/dt = Dbar(theta)``.

    Fixed step; after each step negative entries are clipped and the vector
    renormalized. Returns ``(times, thetas)`` sampled every ``dt``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    theta = np.asarray(theta0, dtype=float)
    if np.any(theta < -1e-12) or abs(theta.sum() - 1) > 1e-9:
        raise ValueError("theta0 must lie on the probability simplex")
    n_steps = int(np.ceil(t_end / dt - 1e-9))
    times = np.arange(n_steps + 1) * dt
    out = np.empty((n_steps + 1, theta.size))
    out[0] = theta

    def f(th):
        return limit_drift(params, th)

    for s in range(n_steps):
        k1 = f(theta)
        k2 = f(theta + 0.5 * dt * k1)
        k3 = f(theta + 0.5 * dt * k2)
        k4 = f(theta + dt * k3)
        nxt = theta + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if nxt.min() < -1e-6:
            raise StepSizeError(
                f"step {s} left the simplex (min entry {nxt.min():.3g}); reduce dt below {dt}")
        nxt = np.clip(nxt, 0.0, None)
        theta = nxt / nxt.sum()
        out[s + 1] = theta
    return times, out


def trajectory_csv(times, thetas) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t"] + [f"theta_{i}" for i in range(thetas.shape[1])])
    for t, th in zip(times, thetas):
        w.writerow([repr(float(t))] + [repr(float(v)) for v in th])
    return buf.getvalue()
