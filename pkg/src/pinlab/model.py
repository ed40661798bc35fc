"""Model parameters (alphabet, interaction probability, mutation matrix,
interaction tensor) and the built-in model constructors."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

ROW_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class PinParams:
    """Parameters of a pairwise interaction network model.

    Attributes
    ----------
    alphabet_size : int
        Number of agent states ``k``.
    rho : float
        Probability that an activation is a pairwise interaction.
    P : ndarray, shape (k, k)
        Row-stochastic mutation matrix.
    phi : ndarray, shape (k, k, k)
        ``phi[l]`` is the row-stochastic matrix used by an agent whose
        activated neighbor is in state ``l``; ``phi[l, i, j]`` is the
        probability of moving from ``i`` to ``j``.
    kind : str
        Name of the constructor that produced the parameters.
    rates : dict
        Compound rates passed to the constructor (``b``, ``c``, ...).
    """

    alphabet_size: int
    rho: float
    P: np.ndarray = field(repr=False)
    phi: np.ndarray = field(repr=False)
    kind: str = "generic"
    rates: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return self.alphabet_size

    def interaction_matrix(self, ell: int) -> np.ndarray:
        return self.phi[ell]

    def cumulative_rows(self):
        """Inverse-CDF tables for row sampling: ``(cum_P, cum_phi)``.

        Entries from the last positive probability onward are set to 1 so a
        uniform in [0, 1) never lands on a zero-probability state.
        """
        def cum(mat):
            c = np.cumsum(mat, axis=-1)
            last = mat.shape[-1] - 1 - np.argmax(mat[..., ::-1] > 0, axis=-1)
            cols = np.arange(mat.shape[-1])
            c[cols >= last[..., None]] = 1.0
            return np.ascontiguousarray(c)

        return cum(self.P), cum(self.phi)

    def to_dict(self) -> dict:
        return {
            "alphabet": self.alphabet_size,
            "rho": self.rho,
            "P": self.P.tolist(),
            "phi": {str(l): self.phi[l].tolist() for l in range(self.alphabet_size)},
            "kind": self.kind,
            "rates": dict(self.rates),
        }


def _check_stochastic(name, mat, tol=ROW_TOL):
    if np.any(~np.isfinite(mat)):
        raise ValueError(f"{name} has non-finite entries")
    if np.any(mat < 0):
        bad = np.argwhere(mat < 0)[0].tolist()
        raise ValueError(f"{name} has a negative entry at {bad}: {mat[tuple(bad)]}")
    sums = mat.sum(axis=-1)
    off = np.abs(sums - 1.0)
    if np.any(off > tol):
        bad = np.argwhere(off > tol)[0].tolist()
        raise ValueError(f"{name} row {bad} sums to {sums[tuple(bad)]!r}, not 1")
    return mat / sums[..., None]


def validate(params: PinParams) -> PinParams:
    """Check every structural constraint and return a renormalized copy."""
    k = int(params.alphabet_size)
    if k < 2:
        raise ValueError(f"alphabet size must be >= 2, got {k}")
    rho = float(params.rho)
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    P = np.array(params.P, dtype=float)
    phi = np.array(params.phi, dtype=float)
    if P.shape != (k, k):
        raise ValueError(f"P must have shape {(k, k)}, got {P.shape}")
    if phi.shape != (k, k, k):
        raise ValueError(f"phi must have shape {(k, k, k)}, got {phi.shape}")
    P = _check_stochastic("P", P)
    phi = _check_stochastic("phi", phi)
    P.setflags(write=False)
    phi.setflags(write=False)
    return PinParams(k, rho, P, phi, params.kind, dict(params.rates))


def make_params(alphabet_size, rho, P, phi, kind="generic", rates=None) -> PinParams:
    phi = np.asarray(phi, dtype=float)
    return validate(PinParams(int(alphabet_size), float(rho), np.asarray(P, float), phi,
                              kind, dict(rates or {})))


def _fill_diagonal(mat):
    """Set diagonals so that rows sum to one."""
    mat = np.array(mat, dtype=float)
    idx = np.arange(mat.shape[-1])
    mat[..., idx, idx] = 0.0
    mat[..., idx, idx] = 1.0 - mat.sum(axis=-1)
    return mat


def _split(rate, rho, name, part):
    """Divide a compound rate by rho (interaction) or 1 - rho (mutation)."""
    share = rho if part == "interaction" else 1.0 - rho
    if rate < 0:
        raise ValueError(f"{name} must be >= 0, got {rate}")
    if rate == 0:
        return 0.0
    if rate > share + 1e-15:
        side = "rho" if part == "interaction" else "1 - rho"
        raise ValueError(f"{name} = {rate} exceeds {side} = {share}; need {name} <= {side}")
    return min(rate / share, 1.0)


def make_sis(b: float, c: float, alpha: float = 0.0, rho: float | None = None) -> PinParams:
    """SIS epidemic: state 0 susceptible, 1 infected.

    ``b`` is the contagion probability per activation, ``c`` the recovery
    probability and ``alpha`` the spontaneous infection probability. When
    ``rho`` is omitted it defaults to ``b`` (contact always transmits).
    """
    if rho is None:
        rho = b
    phi = np.zeros((2, 2, 2))
    phi[1, 0, 1] = _split(b, rho, "b", "interaction")
    P = np.zeros((2, 2))
    P[0, 1] = _split(alpha, rho, "alpha", "mutation")
    P[1, 0] = _split(c, rho, "c", "mutation")
    return make_params(2, rho, _fill_diagonal(P), _fill_diagonal(phi), "sis",
                       {"b": b, "c": c, "alpha": alpha})


def make_sirs(b: float, c: float, d: float, alpha: float = 0.0, rho: float | None = None,
              require_regime: bool = False) -> PinParams:
    """SIRS epidemic on states 0 (S), 1 (I), 2 (R).

    Off-diagonal mutations are S->I (``alpha``), I->R (``c``) and R->S
    (``d``); the only interaction is contagion S->I with compound rate
    ``b``. ``require_regime`` additionally enforces b > c > 0, d > 0.
    """
    if require_regime and not (b > c > 0 and d > 0 and alpha >= 0):
        raise ValueError(f"need b > c > 0, d > 0, alpha >= 0 (got b={b}, c={c}, d={d}, alpha={alpha})")
    if rho is None:
        rho = b
    phi = np.zeros((3, 3, 3))
    phi[1, 0, 1] = _split(b, rho, "b", "interaction")
    P = np.zeros((3, 3))
    P[0, 1] = _split(alpha, rho, "alpha", "mutation")
    P[1, 2] = _split(c, rho, "c", "mutation")
    P[2, 0] = _split(d, rho, "d", "mutation")
    return make_params(3, rho, _fill_diagonal(P), _fill_diagonal(phi), "sirs",
                       {"b": b, "c": c, "d": d, "alpha": alpha})


def make_voter(rho: float = 0.5) -> PinParams:
    """Noisy voter model: copy the neighbor on interaction, flip on mutation."""
    if not 0 <= rho <= 1:
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    if rho == 1:
        warnings.warn("voter model with rho = 1 has no mutation term and is not ergodic",
                      stacklevel=2)
    phi = np.zeros((2, 2, 2))
    phi[1, 0, 1] = 1.0
    phi[0, 1, 0] = 1.0
    P = np.array([[0.0, 1.0], [1.0, 0.0]])
    return make_params(2, rho, P, _fill_diagonal(phi), "voter", {"rho": rho})


def make_antivoter() -> PinParams:
    """Anti-voter model: always interact, adopt the opposite of the neighbor."""
    phi = np.zeros((2, 2, 2))
    phi[0, 0, 1] = 1.0
    phi[1, 1, 0] = 1.0
    return make_params(2, 1.0, np.eye(2), _fill_diagonal(phi), "antivoter", {})


def make_forgetful(rho: float, P, R) -> PinParams:
    """Interaction outcome depends only on the neighbor: phi[l, i, :] = R[l, :]."""
    P = np.asarray(P, dtype=float)
    R = _check_stochastic("R", np.asarray(R, dtype=float))
    k = R.shape[0]
    if R.shape != (k, k):
        raise ValueError("R must be square")
    phi = np.repeat(R[:, None, :], k, axis=1)
    return make_params(k, rho, P, phi, "forgetful", {"R": R.tolist()})


def best_response_matrix(U, tol: float = 1e-12) -> np.ndarray:
    """R[l, j] = 1/|B(l)| for j in the best-response set B(l) = argmax_k U[k, l]."""
    U = np.asarray(U, dtype=float)
    best = U.max(axis=0)
    mask = U >= best[None, :] - tol
    R = mask.T.astype(float)
    return R / R.sum(axis=1, keepdims=True)


def make_best_response(U, rho: float, P=None) -> PinParams:
    R = best_response_matrix(U)
    if P is None:
        k = R.shape[0]
        P = np.full((k, k), 1.0 / k)
    params = make_forgetful(rho, P, R)
    return PinParams(params.k, params.rho, params.P, params.phi, "forgetful",
                     {"R": R.tolist(), "U": np.asarray(U, float).tolist()})


def forgetful_S(params: PinParams) -> np.ndarray:
    """``(1 - rho) P + rho R`` for a forgetful model."""
    return (1.0 - params.rho) * params.P + params.rho * forgetful_R(params)


def is_forgetful(params: PinParams, tol: float = 1e-12) -> bool:
    phi = params.phi
    return bool(np.all(np.abs(phi - phi[:, :1, :]) <= tol))


def forgetful_R(params: PinParams) -> np.ndarray:
    if not is_forgetful(params):
        raise ValueError("interaction tensor depends on the agent's own state; model is not forgetful")
    return params.phi[:, 0, :].copy()


def compound_rates(params: PinParams) -> dict:
    """Recover the compound rates of an SIS or SIRS model from (rho, P, phi)."""
    rho = params.rho
    out = {"b": rho * params.phi[1, 0, 1]}
    if params.kind == "sis":
        out.update(c=(1 - rho) * params.P[1, 0], alpha=(1 - rho) * params.P[0, 1])
    elif params.kind == "sirs":
        out.update(c=(1 - rho) * params.P[1, 2], d=(1 - rho) * params.P[2, 0],
                   alpha=(1 - rho) * params.P[0, 1])
    else:
        raise ValueError(f"no compound rates for model kind {params.kind!r}")
    return out


def with_alpha(params: PinParams, alpha: float) -> PinParams:
    """Same SIS/SIRS model with a different spontaneous infection rate."""
    r = dict(params.rates)
    if params.kind == "sis":
        return make_sis(r["b"], r["c"], alpha, params.rho)
    if params.kind == "sirs":
        return make_sirs(r["b"], r["c"], r["d"], alpha, params.rho)
    raise ValueError(f"model kind {params.kind!r} has no alpha parameter")


# -- config loading --------------------------------------------------------

_SHORTHAND = {
    "sis": lambda blk: make_sis(blk["b"], blk["c"], blk.get("alpha", 0.0), blk.get("rho")),
    "sirs": lambda blk: make_sirs(blk["b"], blk["c"], blk["d"], blk.get("alpha", 0.0),
                                  blk.get("rho"), blk.get("require_regime", False)),
    "voter": lambda blk: make_voter(blk.get("rho", 0.5)),
    "antivoter": lambda blk: make_antivoter(),
    "forgetful": lambda blk: make_forgetful(blk["rho"], blk["P"], blk["R"]),
    "best_response": lambda blk: make_best_response(blk["U"], blk["rho"], blk.get("P")),
}


def from_config(block: dict) -> PinParams:
    """Build parameters from a model config block.

    Either a generic block ``{"alphabet", "rho", "P", "phi": {"0": ...}}``
    or exactly one shorthand key among sis, sirs, voter, antivoter,
    forgetful, best_response.
    """
    keys = [k for k in _SHORTHAND if k in block]
    if len(keys) > 1:
        raise ValueError(f"model block names several models: {keys}")
    if keys:
        return _SHORTHAND[keys[0]](block[keys[0]] or {})
    missing = [f for f in ("alphabet", "rho", "P", "phi") if f not in block]
    if missing:
        raise ValueError(f"model block is missing field(s) {missing}")
    k = int(block["alphabet"])
    phi_block = block["phi"]
    if isinstance(phi_block, dict):
        try:
            phi = np.array([phi_block[str(l)] for l in range(k)], dtype=float)
        except KeyError as exc:
            raise ValueError(f"model.phi is missing the matrix for neighbor state {exc}") from None
    else:
        phi = np.asarray(phi_block, dtype=float)
    return make_params(k, block["rho"], block["P"], phi, block.get("kind", "generic"))
