"""
Quantum Fisher information module for ECS Metrology.

Computes the quantum Fisher information (QFI) of pure and mixed probe states,
the closed forms for the ideal, asymptotic (bound-state) and Markovian cases,
the Cramer-Rao precision and the benchmark limits it is compared with.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg, optimize, special

import fockstate
from spectral import DomainError

logger = logging.getLogger(__name__)

EPS_RANK = 1e-10
NEGATIVE_EIGENVALUE_LIMIT = -1e-8
NORM_TOLERANCE = 1e-8
CONSISTENCY_TOLERANCE = 1e-8
LAMBERT_TOLERANCE = 1e-15
LAMBERT_MAX_ITERATIONS = 50


class InvalidStateError(ValueError):
    """Raised for states that are not normalized or not positive semidefinite."""


class InconsistentInputError(ValueError):
    """Raised when alpha and N do not describe the same ECS."""


def _as_vector(state):
    if isinstance(state, fockstate.FockVector):
        return state.flat
    return np.asarray(state).reshape(-1)


def qfi_pure(psi, dpsi):
    """F = 4 [<psi'|psi'> - |<psi'|psi>|^2] for a normalized pure state."""
    v = _as_vector(psi)
    dv = _as_vector(dpsi)
    if v.shape != dv.shape:
        raise InvalidStateError("state and derivative live on different cutoffs")
    norm = np.linalg.norm(v)
    if abs(norm - 1.0) > NORM_TOLERANCE:
        raise InvalidStateError(f"state is not normalized (norm {norm:.12g})")
    return float(4.0 * (np.vdot(dv, dv).real - abs(np.vdot(dv, v)) ** 2))


def _mixed_from_matrices(rho, d_rho, eps_rank):
    eigenvalues, eigenvectors = linalg.eigh(rho)
    if eigenvalues[0] < NEGATIVE_EIGENVALUE_LIMIT:
        raise InvalidStateError(f"density matrix has eigenvalue {eigenvalues[0]:.3g}")
    elements = eigenvectors.conj().T @ d_rho @ eigenvectors
    sums = eigenvalues[:, None] + eigenvalues[None, :]
    mask = sums > eps_rank
    return float(np.sum(2.0 * np.abs(elements[mask]) ** 2 / sums[mask]))


def qfi_mixed(rho, eps_rank=EPS_RANK, dense=False):
    """
    F = sum over pairs with lambda_i + lambda_j > eps_rank of 2 |<i|rho'|j>|^2 / (lambda_i + lambda_j).

    rho must carry its gamma derivative. The compact path works in the span of
    the branch states, outside of which rho and rho' both vanish; dense=True
    diagonalizes the full product-basis matrix instead.
    """
    if rho.d_core is None:
        raise InvalidStateError("density matrix carries no gamma derivative")
    if dense:
        return _mixed_from_matrices(rho.matrix, rho.d_gamma, eps_rank)
    return _mixed_from_matrices(rho.core, rho.d_core, eps_rank)


def lambert_w(x):
    """
    Principal branch of Lambert W for x >= 0.

    Starts from scipy.special.lambertw and polishes with Halley steps until
    w e^w = x holds to machine precision.
    """
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr < 0):
        raise DomainError("lambert_w is defined here for x >= 0 only")
    w = np.real(special.lambertw(x_arr)).astype(float)
    for _ in range(LAMBERT_MAX_ITERATIONS):
        ew = np.exp(w)
        f = w * ew - x_arr
        denominator = ew * (w + 1.0) - (w + 2.0) * f / (2.0 * w + 2.0)
        step = np.where(x_arr == 0, 0.0, f / denominator)
        w = w - step
        if np.all(np.abs(step) <= LAMBERT_TOLERANCE * (1.0 + np.abs(w))):
            break
    return float(w) if np.ndim(w) == 0 else w


def qfi_ideal(n_avg, t):
    """F = 2 N t^2 (1 + W(N e^{-N})) + N^2 t^2."""
    if n_avg < 0 or t < 0:
        raise DomainError("qfi_ideal needs N >= 0 and t >= 0")
    w = lambert_w(n_avg * math.exp(-n_avg))
    return 2.0 * n_avg * t * t * (1.0 + w) + n_avg ** 2 * t * t


def _check_consistency(n_avg, alpha):
    implied = fockstate.n_of_alpha(alpha)
    if abs(implied - n_avg) > CONSISTENCY_TOLERANCE * max(1.0, n_avg):
        raise InconsistentInputError(f"alpha = {alpha} gives N = {implied:.12g}, not {n_avg}")


def _check_residue(z):
    if not 0 < z <= 1:
        raise DomainError(f"residue Z must lie in (0, 1], got {z}")


def qfi_asymptotic(n_avg, alpha, t, z):
    """
    Long-time closed form with a bound state:

    F = 2 t^2 Z^4 N + 2 t^2 Z^6 N W(N e^{-N}) + e^{-|alpha|^2 (1 - Z^2)} t^2 Z^6 N^2.

    This drops terms proportional to e^{-|alpha|^2 (1 + Z^2)}; qfi_asymptotic_exact keeps them.
    """
    _check_residue(z)
    _check_consistency(n_avg, alpha)
    w = lambert_w(n_avg * math.exp(-n_avg))
    a = abs(alpha) ** 2
    t2 = t * t
    return 2 * t2 * z ** 4 * n_avg + 2 * t2 * z ** 6 * n_avg * w + math.exp(-a * (1 - z * z)) * t2 * z ** 6 * n_avg ** 2


def qfi_asymptotic_exact(n_avg, alpha, t, z):
    """
    Exact QFI of the rank-2 long-time state with c = Z e^{-i varpi_b t}.

    F = 4 N_a^2 t^2 [a Z^4 + a^2 Z^6 - a^2 Z^6 N_a^2 (2 - s^2 - X^2)/(1 - s^2)]
    with a = |alpha|^2, N_a^2 = 1/(2(1 + e^{-a})), s^2 = e^{-a(1+Z^2)}, X^2 = e^{-a(1-Z^2)}.
    """
    _check_residue(z)
    _check_consistency(n_avg, alpha)
    a = abs(alpha) ** 2
    if a == 0:
        return 0.0
    norm2 = fockstate.ecs_normalization(alpha)
    # (2 - s^2 - X^2)/(1 - s^2) = 1 + (1 - X^2)/(1 - s^2)
    ratio = 1.0 + (-math.expm1(-a * (1 - z * z))) / (-math.expm1(-a * (1 + z * z)))
    bracket = a * z ** 4 + a * a * z ** 6 - a * a * z ** 6 * norm2 * ratio
    return 4.0 * norm2 * t * t * bracket


def qfi_markovian(n_avg, t, kappa):
    """F = 2 N t^2 e^{-2 kappa t}."""
    if kappa <= 0:
        raise DomainError(f"kappa must be > 0, got {kappa}")
    return 2.0 * n_avg * t * t * math.exp(-2.0 * kappa * t)


def markovian_optimum(n_avg, kappa, method="closed"):
    """
    Best Markovian precision and the time it is reached.

    Returns (t_opt, min_dgamma) = (1/kappa, e kappa / sqrt(2N)). method="golden"
    locates the optimum numerically by golden-section search instead.
    """
    if kappa <= 0:
        raise DomainError(f"kappa must be > 0, got {kappa}")
    if n_avg <= 0:
        raise DomainError(f"N must be > 0, got {n_avg}")
    if method == "closed":
        return 1.0 / kappa, math.e * kappa / math.sqrt(2.0 * n_avg)
    if method != "golden":
        raise ValueError(f"Unknown optimum method: {method}")

    result = optimize.minimize_scalar(
        lambda t: -qfi_markovian(n_avg, t, kappa),
        bracket=(0.1 / kappa, 1.0 / kappa * 0.9, 10.0 / kappa),
        method="golden",
        tol=1e-12,
    )
    t_opt = float(result.x)
    return t_opt, precision(qfi_markovian(n_avg, t_opt, kappa))


def precision(f_q, mu=1):
    """Cramer-Rao bound 1/sqrt(mu F); F = 0 gives infinity."""
    if int(mu) != mu or mu < 1:
        raise DomainError(f"mu must be a positive integer, got {mu}")
    f_arr = np.asarray(f_q, dtype=float)
    if np.any(f_arr < 0):
        raise DomainError("QFI must be nonnegative")
    with np.errstate(divide="ignore"):
        value = np.where(f_arr > 0, 1.0 / np.sqrt(mu * np.where(f_arr > 0, f_arr, 1.0)), np.inf)
    return float(value) if np.ndim(value) == 0 else value


def benchmark_limits(n_avg, t):
    """(SNL, weak HL) = (1/(sqrt(N) t), 1/(N t))."""
    if n_avg <= 0 or t <= 0:
        return math.inf, math.inf
    return 1.0 / (math.sqrt(n_avg) * t), 1.0 / (n_avg * t)


def zeno_limit(n_avg, t):
    """1/(N^{3/4} t)."""
    if n_avg <= 0 or t <= 0:
        return math.inf
    return 1.0 / (n_avg ** 0.75 * t)


@dataclass
class PrecisionSeries:
    """QFI and precision along a sweep variable, with benchmark curves."""

    variable: str
    values: np.ndarray
    f_q: np.ndarray
    mu: int = 1
    delta_gamma: np.ndarray = field(default=None)
    snl: np.ndarray = field(default=None)
    weak_hl: np.ndarray = field(default=None)
    zeno: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.f_q = np.asarray(self.f_q, dtype=float)
        if self.values.shape != self.f_q.shape:
            raise ValueError("sweep values and QFI must have the same length")
        if self.delta_gamma is None:
            self.delta_gamma = precision(self.f_q, self.mu)

    def to_rows(self):
        rows = []
        for i, value in enumerate(self.values):
            row = {
                self.variable: float(value),
                "f_q": float(self.f_q[i]),
                "delta_gamma": float(self.delta_gamma[i]),
                "snl": float(self.snl[i]) if self.snl is not None else math.nan,
                "weak_hl": float(self.weak_hl[i]) if self.weak_hl is not None else math.nan,
            }
            if self.zeno is not None:
                row["zeno"] = float(self.zeno[i])
            rows.append(row)
        return rows


def precision_series(variable, values, f_q, n_avg, t, mu=1, with_zeno=False):
    """
    Build a PrecisionSeries with benchmarks evaluated at each point.

    n_avg and t may be scalars or arrays matching `values`.
    """
    values = np.asarray(values, dtype=float)
    n_arr = np.broadcast_to(np.asarray(n_avg, dtype=float), values.shape)
    t_arr = np.broadcast_to(np.asarray(t, dtype=float), values.shape)
    limits = [benchmark_limits(n, tt) for n, tt in zip(n_arr, t_arr)]
    return PrecisionSeries(
        variable=variable,
        values=values,
        f_q=f_q,
        mu=mu,
        snl=np.array([limit[0] for limit in limits]),
        weak_hl=np.array([limit[1] for limit in limits]),
        zeno=np.array([zeno_limit(n, tt) for n, tt in zip(n_arr, t_arr)]) if with_zeno else None,
    )
