"""Lyapunov certificates for the limit drift.

Three constructions are provided: a quadratic form around the invariant
vector of a forgetful model, a cubic in the share of state 1 for binary
models, and a family with logarithmic barrier for the SIRS model with
spontaneous infection. Each certificate exposes value, gradient and
Hessian on the ambient space ``R^k`` plus the constants used by the
concentration bound (sup-norm of the gradient over the simplex and the
sup of the Hessian spectral norm).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .drift import limit_drift
from .model import PinParams, compound_rates, forgetful_S, is_forgetful

GRID_SAFETY = 1.1


# -- linear algebra helpers ------------------------------------------------

def is_irreducible(M) -> bool:
    """Strong connectivity of the positive-entry digraph (transitive closure)."""
    M = np.asarray(M)
    k = M.shape[0]
    reach = (M > 0) | np.eye(k, dtype=bool)
    while True:
        nxt = (reach.astype(np.int64) @ reach.astype(np.int64)) > 0
        if np.array_equal(nxt, reach):
            break
        reach = nxt
    return bool(reach.all())


def perron_vector(S, tol: float = 1e-14, max_iter: int = 10**6) -> np.ndarray:
    """Invariant probability vector ``pi = S^T pi`` of an irreducible
    row-stochastic matrix.

    Power iteration on the lazy chain ``(I + S) / 2`` (same invariant vector,
    aperiodic), started from the uniform vector.
    """
    S = np.asarray(S, dtype=float)
    k = S.shape[0]
    if S.shape != (k, k) or np.any(S < 0) or np.any(np.abs(S.sum(1) - 1) > 1e-9):
        raise ValueError("S must be a square row-stochastic matrix")
    if not is_irreducible(S):
        raise ValueError("S is reducible; the invariant vector is not unique")
    lazy = 0.5 * (np.eye(k) + S)
    # squaring phase: lazy^(2^j) rows converge to pi
    M = lazy.copy()
    for _ in range(64):
        M2 = M @ M
        M2 /= M2.sum(axis=1, keepdims=True)
        if np.abs(M2 - M).max() < tol:
            M = M2
            break
        M = M2
    pi = M.mean(axis=0)
    pi /= pi.sum()
    for it in range(max_iter):
        nxt = pi @ lazy
        nxt /= nxt.sum()
        if np.abs(nxt - pi).sum() < tol:
            return nxt
        pi = nxt
    raise RuntimeError(f"power iteration did not converge in {max_iter} iterations")


def solve_lyapunov(A) -> np.ndarray:
    """Solve ``Pi A + A^T Pi = I`` through the Kronecker-vectorized system."""
    A = np.asarray(A, dtype=float)
    k = A.shape[0]
    eye = np.eye(k)
    # column-stacking vec: vec(Pi A) = (A^T kron I) vec(Pi), vec(A^T Pi) = (I kron A^T) vec(Pi)
    M = np.kron(A.T, eye) + np.kron(eye, A.T)
    try:
        vec = np.linalg.solve(M, eye.reshape(-1, order="F"))
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"Lyapunov equation is singular: {exc}") from None
    return vec.reshape(k, k, order="F")


def simplex_grid(k: int, steps: int) -> np.ndarray:
    """All points of the simplex in R^k whose coordinates are multiples of 1/steps."""
    if k == 1:
        return np.ones((1, 1))
    parts = np.arange(steps + 1)[:, None]
    for _ in range(k - 2):
        rem = steps - parts.sum(axis=1)
        reps = rem + 1
        idx = np.repeat(np.arange(len(parts)), reps)
        offsets = np.cumsum(reps) - reps
        nxt = np.arange(idx.size) - offsets[idx]
        parts = np.column_stack([parts[idx], nxt])
    last = steps - parts.sum(axis=1)
    return np.column_stack([parts, last]) / steps


def _iter_grid(k: int, steps: int):
    """Simplex grid in chunks (one chunk per value of the first coordinate)."""
    if k <= 2:
        yield simplex_grid(k, steps)
        return
    for first in range(steps + 1):
        rest = simplex_grid(k - 1, steps - first) * ((steps - first) / steps) \
            if first < steps else np.zeros((1, k - 1))
        yield np.column_stack([np.full(len(rest), first / steps), rest])


def random_simplex_points(k: int, size: int, rng, interior: bool = False) -> np.ndarray:
    pts = rng.dirichlet(np.ones(k), size=size)
    if interior:
        pts = 0.9 * pts + 0.1 / k
    return pts


# -- certificates ----------------------------------------------------------

class LyapunovCertificate:
    """Differentiable function on the simplex with the constants the
    concentration bound needs.

    Subclasses implement ``value``, ``grad``, ``hessian`` (batched over
    leading axes) and ``deficit``, the nonnegative function ``h`` with
    ``grad V . Dbar <= -h + zeta``.
    """

    kind = "user"
    zeta = 0.0

    def __init__(self, alphabet_size: int):
        self.alphabet_size = alphabet_size

    def value(self, theta):
        raise NotImplementedError

    def grad(self, theta):
        raise NotImplementedError

    def hessian(self, theta):
        raise NotImplementedError

    def deficit(self, theta):
        raise NotImplementedError

    def lie_derivative(self, params: PinParams, theta):
        """``grad V(theta) . Dbar(theta)``."""
        theta = np.asarray(theta, dtype=float)
        return np.einsum("...i,...i->...", self.grad(theta), limit_drift(params, theta))

    @cached_property
    def grad_inf_norm(self) -> float:
        return GRID_SAFETY * max(float(np.abs(self.grad(c)).max())
                                 for c in _iter_grid(self.alphabet_size, 200))

    @cached_property
    def hessian_norm_bound(self) -> float:
        return _grid_hessian_sup(self, 1e-3) * GRID_SAFETY

    @property
    def C(self) -> float:
        """Constant ``K + 8 ||grad V||_inf`` with ``K`` the Hessian norm bound."""
        return self.hessian_norm_bound + 8.0 * self.grad_inf_norm

    def data(self) -> dict:
        return {}

    def summary(self) -> dict:
        return {
            "kind": self.kind,
            "alphabet_size": self.alphabet_size,
            "zeta": float(self.zeta),
            "grad_inf_norm": float(self.grad_inf_norm),
            "hessian_norm_bound": float(self.hessian_norm_bound),
            "C": float(self.C),
            "data": self.data(),
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True) + "\n"


def _grid_hessian_sup(cert: LyapunovCertificate, resolution: float) -> float:
    steps = int(round(1.0 / resolution))
    best = 0.0
    for chunk in _iter_grid(cert.alphabet_size, steps):
        H = np.asarray(cert.hessian(chunk))
        diag = np.diagonal(H, axis1=-2, axis2=-1)
        if np.count_nonzero(H) == np.count_nonzero(diag):
            norms = np.abs(diag).max(axis=-1)
        else:
            # symmetric: spectral norm is the largest |eigenvalue|
            norms = np.abs(np.linalg.eigvalsh(0.5 * (H + np.swapaxes(H, -1, -2)))).max(axis=-1)
        best = max(best, float(norms.max()))
    return best


class QuadraticCertificate(LyapunovCertificate):
    """``V(theta) = (theta - pi)^T Pi (theta - pi)``."""

    kind = "quadratic-forgetful"

    def __init__(self, Pi, pi, A=None):
        Pi = np.asarray(Pi, dtype=float)
        super().__init__(Pi.shape[0])
        self.Pi = Pi
        self.pi = np.asarray(pi, dtype=float)
        self.A = None if A is None else np.asarray(A, dtype=float)
        self._sym = Pi + Pi.T

    def value(self, theta):
        d = np.asarray(theta, float) - self.pi
        return np.einsum("...i,ij,...j->...", d, self.Pi, d)

    def grad(self, theta):
        return (np.asarray(theta, float) - self.pi) @ self._sym.T

    def hessian(self, theta):
        theta = np.asarray(theta, float)
        return np.broadcast_to(self._sym, theta.shape[:-1] + self._sym.shape)

    def deficit(self, theta):
        d = np.asarray(theta, float) - self.pi
        return np.einsum("...i,...i->...", d, d)

    @cached_property
    def grad_inf_norm(self) -> float:
        # convex in theta, so the sup over the simplex sits at a vertex
        return float(np.abs(self.grad(np.eye(self.alphabet_size))).max())

    @cached_property
    def hessian_norm_bound(self) -> float:
        return float(np.linalg.norm(self._sym, 2))

    def residual(self) -> float:
        if self.A is None:
            raise ValueError("certificate carries no A matrix")
        R = self.Pi @ self.A + self.A.T @ self.Pi - np.eye(self.alphabet_size)
        return float(np.abs(R).max())

    def data(self) -> dict:
        return {"pi": self.pi.tolist(), "Pi": self.Pi.tolist()}


class BinaryCertificate(LyapunovCertificate):
    """``V(theta) = -(a0 z + a1 z^2 / 2 + a2 z^3 / 3)`` with ``z = theta_1``."""

    kind = "binary-cubic"

    def __init__(self, a0, a1, a2, z_star):
        super().__init__(2)
        self.coeffs = (float(a0), float(a1), float(a2))
        self.z_star = float(z_star)

    def poly(self, z):
        a0, a1, a2 = self.coeffs
        return a0 + a1 * z + a2 * z * z

    def value(self, theta):
        a0, a1, a2 = self.coeffs
        z = np.asarray(theta, float)[..., 1]
        return -(a0 * z + a1 * z**2 / 2 + a2 * z**3 / 3)

    def grad(self, theta):
        theta = np.asarray(theta, float)
        g = np.zeros_like(theta)
        g[..., 1] = -self.poly(theta[..., 1])
        return g

    def hessian(self, theta):
        _, a1, a2 = self.coeffs
        theta = np.asarray(theta, float)
        H = np.zeros(theta.shape[:-1] + (2, 2))
        H[..., 1, 1] = -(a1 + 2 * a2 * theta[..., 1])
        return H

    def deficit(self, theta):
        return self.poly(np.asarray(theta, float)[..., 1]) ** 2

    @cached_property
    def grad_inf_norm(self) -> float:
        _, a1, a2 = self.coeffs
        cands = [0.0, 1.0]
        if a2 != 0 and 0 < -a1 / (2 * a2) < 1:
            cands.append(-a1 / (2 * a2))
        return float(max(abs(self.poly(z)) for z in cands))

    @cached_property
    def hessian_norm_bound(self) -> float:
        _, a1, a2 = self.coeffs
        return float(max(abs(a1), abs(a1 + 2 * a2)))

    def data(self) -> dict:
        a0, a1, a2 = self.coeffs
        return {"a0": a0, "a1": a1, "a2": a2, "z_star": self.z_star}


class SIRSCertificate(LyapunovCertificate):
    """``V(theta) = theta_1 - (z1 + a) ln(theta_1 + a) + b/(2c) (theta_2 - z2)^2``
    with ``a = alpha / b``; slack ``zeta = alpha c / b``."""

    kind = "sirs-approx"

    def __init__(self, b, c, d, alpha, hessian_resolution: float = 1e-3):
        super().__init__(3)
        if not (alpha > 0 and b > c > 0 and d > 0):
            raise ValueError(f"need alpha > 0, b > c > 0, d > 0 (got b={b}, c={c}, d={d}, alpha={alpha})")
        self.b, self.c, self.d, self.alpha = float(b), float(c), float(d), float(alpha)
        self.z1, self.z2 = sirs_equilibrium(b, c, d)
        self.shift = alpha / b
        self.zeta = alpha * c / b
        self.hessian_resolution = hessian_resolution

    def value(self, theta):
        t = np.asarray(theta, float)
        return (t[..., 1] - (self.z1 + self.shift) * np.log(t[..., 1] + self.shift)
                + self.b / (2 * self.c) * (t[..., 2] - self.z2) ** 2)

    def grad(self, theta):
        t = np.asarray(theta, float)
        g = np.zeros_like(t)
        g[..., 1] = (t[..., 1] - self.z1) / (t[..., 1] + self.shift)
        g[..., 2] = self.b / self.c * (t[..., 2] - self.z2)
        return g

    def hessian(self, theta):
        t = np.asarray(theta, float)
        H = np.zeros(t.shape[:-1] + (3, 3))
        H[..., 1, 1] = (self.z1 + self.shift) / (t[..., 1] + self.shift) ** 2
        H[..., 2, 2] = self.b / self.c
        return H

    def deficit(self, theta):
        t = np.asarray(theta, float)
        return (self.b * (t[..., 1] - self.z1) ** 2
                + self.b * self.d / self.c * (t[..., 2] - self.z2) ** 2)

    @cached_property
    def grad_inf_norm(self) -> float:
        # d/dtheta_1 is increasing in theta_1; d/dtheta_2 is affine
        g1 = max(abs(self.z1 / self.shift), abs((1 - self.z1) / (1 + self.shift)))
        g2 = self.b / self.c * max(self.z2, 1 - self.z2)
        return float(max(g1, g2))

    @cached_property
    def hessian_norm_bound(self) -> float:
        return _grid_hessian_sup(self, self.hessian_resolution) * GRID_SAFETY

    def data(self) -> dict:
        return {"b": self.b, "c": self.c, "d": self.d, "alpha": self.alpha,
                "z1_star": self.z1, "z2_star": self.z2}


class UserCertificate(LyapunovCertificate):
    """Wrap user callables. Constants default to grid estimates with a
    safety factor; pass them explicitly when known."""

    def __init__(self, alphabet_size, value, grad, hessian, deficit=None, zeta=0.0,
                 grad_inf_norm=None, hessian_norm_bound=None):
        super().__init__(alphabet_size)
        self._value, self._grad, self._hess, self._deficit = value, grad, hessian, deficit
        self.zeta = float(zeta)
        if grad_inf_norm is not None:
            self.__dict__["grad_inf_norm"] = float(grad_inf_norm)
        if hessian_norm_bound is not None:
            self.__dict__["hessian_norm_bound"] = float(hessian_norm_bound)

    def value(self, theta):
        return self._value(theta)

    def grad(self, theta):
        return self._grad(theta)

    def hessian(self, theta):
        return self._hess(theta)

    def deficit(self, theta):
        if self._deficit is None:
            raise ValueError("user certificate has no deficit function")
        return self._deficit(theta)


def hessian_norm_bound(cert: LyapunovCertificate) -> float:
    """Upper bound on ``sup_theta ||Hess V(theta)||_2`` over the simplex."""
    return cert.hessian_norm_bound


# -- constructions ---------------------------------------------------------

def build_quadratic(params: PinParams, residual_tol: float = 1e-8) -> QuadraticCertificate:
    """Quadratic certificate of a forgetful model with irreducible S."""
    S = forgetful_S(params)
    pi = perron_vector(S)
    k = params.k
    A = np.eye(k) - S.T + np.outer(pi, np.ones(k))
    Pi = solve_lyapunov(A)
    Pi = 0.5 * (Pi + Pi.T)
    if np.linalg.eigvalsh(Pi).min() <= 0:
        raise ValueError("Lyapunov solution is not positive definite")
    cert = QuadraticCertificate(Pi, pi, A)
    if cert.residual() > residual_tol:
        raise ValueError(f"Lyapunov residual {cert.residual():.3g} exceeds {residual_tol}")
    return cert


def binary_coefficients(params: PinParams):
    """Coefficients (a0, a1, a2) with ``Dbar_1(theta) = a0 + a1 z + a2 z^2``."""
    if params.k != 2:
        raise ValueError(f"binary certificate needs a 2-state alphabet, got {params.k}")
    rho, P, phi = params.rho, params.P, params.phi
    f01_0, f01_1 = phi[0, 0, 1], phi[1, 0, 1]
    f10_0, f10_1 = phi[0, 1, 0], phi[1, 1, 0]
    a0 = (1 - rho) * P[0, 1] + rho * f01_0
    a1 = -(1 - rho) * (P[0, 1] + P[1, 0]) + rho * (-2 * f01_0 + f01_1 - f10_0)
    a2 = rho * (f01_0 - f01_1 + f10_0 - f10_1)
    return float(a0), float(a1), float(a2)


def _roots_in_unit_interval(a0, a1, a2, tol=1e-12):
    if a2 == 0 and a1 == 0:
        return None if a0 == 0 else []
    if a2 == 0:
        r = [-a0 / a1]
    else:
        disc = a1 * a1 - 4 * a2 * a0
        if disc < 0:
            return []
        sq = np.sqrt(disc)
        r = [(-a1 - sq) / (2 * a2), (-a1 + sq) / (2 * a2)]
    inside = sorted({min(max(x, 0.0), 1.0) for x in r if -tol <= x <= 1 + tol})
    merged = []
    for x in inside:
        if not merged or abs(x - merged[-1]) > tol:
            merged.append(x)
    return merged


def _bisect(f, lo, hi, tol=1e-14):
    flo = f(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def build_binary(params: PinParams) -> BinaryCertificate:
    """Cubic certificate; requires a unique zero of the drift polynomial in [0, 1]."""
    a0, a1, a2 = binary_coefficients(params)
    roots = _roots_in_unit_interval(a0, a1, a2)
    if roots is None:
        raise ValueError("drift polynomial vanishes identically; no unique concentration point")
    if len(roots) != 1:
        raise ValueError(f"drift polynomial has {len(roots)} zeros in [0, 1] ({roots}); "
                         "a unique zero is required")

    def p(z):
        return a0 + a1 * z + a2 * z * z

    p0, p1 = p(0.0), p(1.0)
    if p0 > 0 > p1:
        z = _bisect(p, 0.0, 1.0)
    else:
        z = roots[0]
    return BinaryCertificate(a0, a1, a2, z)


def sirs_equilibrium(b, c, d):
    """Endemic infected and recovered shares of the SIRS mean-field limit."""
    z1 = d * (b - c) / (b * (d + c))
    z2 = c * (b - c) / (b * (d + c))
    return z1, z2


def build_sirs(params: PinParams, hessian_resolution: float = 1e-3) -> SIRSCertificate:
    r = compound_rates(params)
    if params.kind != "sirs":
        raise ValueError("SIRS certificate needs parameters built by make_sirs")
    return SIRSCertificate(r["b"], r["c"], r["d"], r["alpha"], hessian_resolution)


def certificate_for(params: PinParams, kind: str | None = None) -> LyapunovCertificate:
    """Pick the construction matching the model (or ``kind`` when given)."""
    if kind is None:
        if params.kind == "sirs":
            kind = "sirs"
        elif params.kind in ("sis", "voter", "antivoter"):
            kind = "binary"
        elif is_forgetful(params):
            kind = "quadratic"
        elif params.k == 2:
            kind = "binary"
        else:
            raise ValueError(f"no known certificate for model kind {params.kind!r} "
                             f"with {params.k} states; supply one explicitly")
    builders = {"quadratic": build_quadratic, "binary": build_binary, "sirs": build_sirs}
    if kind not in builders:
        raise ValueError(f"unknown certificate kind {kind!r}; choose from {sorted(builders)}")
    return builders[kind](params)


# -- verification ----------------------------------------------------------

@dataclass
class LyapunovCheck:
    """Outcome of evaluating ``grad V . Dbar`` on a simplex grid."""

    n_points: int
    max_value: float
    max_slack: float
    violations: np.ndarray = field(repr=False)
    zeta: float = 0.0

    @property
    def ok(self) -> bool:
        return self.violations.shape[0] == 0

    def to_dict(self) -> dict:
        return {"n_points": self.n_points, "max_value": self.max_value,
                "max_slack": self.max_slack, "zeta": self.zeta,
                "n_violations": int(self.violations.shape[0]),
                "violations": self.violations[:20].tolist()}


def verify_mean_field_lyapunov(cert: LyapunovCertificate, params: PinParams,
                               grid_resolution: float = 1e-2, tol: float = 1e-10) -> LyapunovCheck:
    """Evaluate ``grad V . Dbar`` on a simplex grid.

    A violation is a point where the value exceeds ``zeta + tol``.
    ``max_slack`` is the largest ``grad V . Dbar + h - zeta`` when the
    certificate defines ``h``, which should be ``<= 0``.
    """
    steps = int(round(1.0 / grid_resolution))
    max_val, max_slack = -np.inf, -np.inf
    bad = []
    n_points = 0
    for chunk in _iter_grid(cert.alphabet_size, steps):
        n_points += len(chunk)
        vals = cert.lie_derivative(params, chunk)
        max_val = max(max_val, float(vals.max()))
        bad.append(chunk[vals > cert.zeta + tol])
        try:
            slack = vals + cert.deficit(chunk) - cert.zeta
            max_slack = max(max_slack, float(slack.max()))
        except ValueError:
            max_slack = float("nan")
    violations = np.concatenate(bad) if bad else np.zeros((0, cert.alphabet_size))
    return LyapunovCheck(n_points, max_val, max_slack, violations, float(cert.zeta))
