"""
Fock-space module for ECS Metrology.

Truncated two-mode Fock-space algebra: coherent states, the entangled coherent
state (ECS) input, the dissipative density matrix rho(t) and its gamma
derivative, and photon-number observables.

rho(t) is a mixture of two non-orthogonal pure branches, |A> = |alpha e^{-i omega0 t}, 0>
and |B> = |0, c alpha>, so rho and d rho/d gamma live in span{|A>, |B>, d|B>/d gamma}.
TwoModeDensity keeps an orthonormal basis of that span with small core matrices;
the dense (n1, n2) product-basis matrices are available through `.matrix` and
`.d_gamma`.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg, optimize, special

logger = logging.getLogger(__name__)

TRACE_TOLERANCE = 1e-6
NORM_TOLERANCE = 1e-8
SPAN_TOLERANCE = 1e-12
C_TOLERANCE = 1e-9


class CutoffError(ValueError):
    """Raised when the photon-number cutoff cannot hold the requested state."""


class AssemblyError(RuntimeError):
    """Raised when an assembled density matrix fails its trace check."""


def required_cutoff(alpha):
    """n_max = ceil(|alpha|^2 + 10|alpha| + 20) per mode."""
    r = abs(alpha)
    return int(math.ceil(r * r + 10.0 * r + 20.0))


def _resolve_cutoff(alpha, cutoff):
    needed = required_cutoff(alpha)
    if cutoff is None:
        return needed
    if cutoff < needed:
        raise CutoffError(f"cutoff {cutoff} too small for |alpha| = {abs(alpha):.6g}; use at least {needed}")
    return int(cutoff)


@dataclass
class FockVector:
    """State vector on one mode (shape (n+1,)) or two modes (shape (n+1, n+1))."""

    amplitudes: np.ndarray
    cutoff: int

    @property
    def modes(self):
        return self.amplitudes.ndim

    @property
    def flat(self):
        return self.amplitudes.reshape(-1)

    def norm(self):
        return float(np.linalg.norm(self.flat))

    def inner(self, other):
        """<self|other>."""
        if other.amplitudes.shape != self.amplitudes.shape:
            raise ValueError("inner product of vectors with different shapes")
        return complex(np.vdot(self.flat, other.flat))

    def __add__(self, other):
        return FockVector(self.amplitudes + other.amplitudes, self.cutoff)

    def __mul__(self, scalar):
        return FockVector(self.amplitudes * scalar, self.cutoff)

    __rmul__ = __mul__


def coherent_amplitudes(beta, cutoff):
    """Fock amplitudes of |beta> for n = 0..cutoff, evaluated in log space."""
    n = np.arange(cutoff + 1)
    if beta == 0:
        amplitudes = np.zeros(cutoff + 1, dtype=complex)
        amplitudes[0] = 1.0
        return amplitudes
    r = abs(beta)
    log_magnitude = -0.5 * r * r + n * math.log(r) - 0.5 * special.gammaln(n + 1)
    return np.exp(log_magnitude) * np.exp(1j * n * np.angle(beta))


def coherent_vector(alpha, cutoff=None):
    """Single-mode coherent state |alpha> truncated at `cutoff`."""
    cutoff = _resolve_cutoff(alpha, cutoff)
    return FockVector(coherent_amplitudes(complex(alpha), cutoff), cutoff)


def vacuum_amplitudes(cutoff):
    vacuum = np.zeros(cutoff + 1, dtype=complex)
    vacuum[0] = 1.0
    return vacuum


def raise_mode(amplitudes):
    """a^dagger applied to single-mode amplitudes (the top level is truncated)."""
    raised = np.zeros_like(amplitudes)
    n = np.arange(1, len(amplitudes))
    raised[1:] = np.sqrt(n) * amplitudes[:-1]
    return raised


def coherent_derivative(beta, dbeta, cutoff):
    """d|beta> for a variation dbeta: (dbeta a^dagger - Re(beta* dbeta)) |beta>."""
    ket = coherent_amplitudes(complex(beta), cutoff)
    return dbeta * raise_mode(ket) - (np.conj(beta) * dbeta).real * ket


def ecs_normalization(alpha):
    """N_alpha^2 = 1 / (2 (1 + e^{-|alpha|^2}))."""
    return 1.0 / (2.0 * (1.0 + math.exp(-abs(alpha) ** 2)))


def ecs_input(alpha, cutoff=None):
    """N_alpha (|alpha, 0> + |0, alpha>)."""
    cutoff = _resolve_cutoff(alpha, cutoff)
    ket = coherent_amplitudes(complex(alpha), cutoff)
    vacuum = vacuum_amplitudes(cutoff)
    state = math.sqrt(ecs_normalization(alpha)) * (np.outer(ket, vacuum) + np.outer(vacuum, ket))
    return FockVector(state, cutoff)


def n_of_alpha(alpha):
    """Mean photon number of the ECS: N = |alpha|^2 / (1 + e^{-|alpha|^2})."""
    a = abs(alpha) ** 2
    return a / (1.0 + math.exp(-a))


def alpha_of_n(n_avg, tol=1e-12):
    """Inverse of n_of_alpha by bracketed root finding (alpha > 0)."""
    if n_avg < 0:
        raise ValueError(f"mean photon number must be >= 0, got {n_avg}")
    if n_avg == 0:
        return 0.0
    # N < |alpha|^2 < 2N + 1
    hi = math.sqrt(2.0 * n_avg + 1.0)
    return optimize.brentq(lambda r: n_of_alpha(r) - n_avg, 0.0, hi, xtol=tol * 1e-2, rtol=4 * np.finfo(float).eps)


def _product(mode1, mode2):
    return np.outer(mode1, mode2).reshape(-1)


def number_diagonal(cutoff):
    """n1 + n2 on the flattened product basis."""
    n = np.arange(cutoff + 1)
    return (n[:, None] + n[None, :]).reshape(-1).astype(float)


@dataclass
class TwoModeDensity:
    """
    Density matrix rho = U core U^dagger on the flattened (n1, n2) product basis.

    `basis` has orthonormal columns; `d_core` (optional) holds d rho/d gamma in
    the same basis.
    """

    basis: np.ndarray
    core: np.ndarray
    cutoff: int
    d_core: Optional[np.ndarray] = None

    @property
    def dimension(self):
        return (self.cutoff + 1) ** 2

    @property
    def matrix(self):
        return self.basis @ self.core @ self.basis.conj().T

    @property
    def d_gamma(self):
        if self.d_core is None:
            return None
        return self.basis @ self.d_core @ self.basis.conj().T

    def trace(self):
        return float(np.trace(self.core).real)

    def purity(self):
        return float(np.trace(self.core @ self.core).real)

    def eigenvalues(self):
        """Nonzero part of the spectrum, descending (the rest is exactly zero)."""
        return np.sort(linalg.eigvalsh(self.core))[::-1]

    def photon_number(self):
        projected = self.basis.conj().T @ (number_diagonal(self.cutoff)[:, None] * self.basis)
        return float(np.trace(self.core @ projected).real)


def _orthonormal_span(vectors):
    u, singular, _ = linalg.svd(vectors, full_matrices=False)
    keep = singular > SPAN_TOLERANCE * max(1.0, singular[0])
    return u[:, keep]


def rho_of_t(alpha, c_value, omega0_t=0.0, cutoff=None, dc_dgamma=None):
    """
    Assemble rho(t) for the ECS probe after dissipation of mode 2.

    rho = N^2 { |A><A| + X (|A><B| + h.c.) + |B><B| }, X = e^{-|alpha|^2 (1 - |c|^2)/2},
    with |A> = |alpha e^{-i omega0 t}, 0> and |B> = |0, c alpha>. When dc_dgamma is
    given the gamma derivative is assembled in the same basis.
    """
    if abs(c_value) > 1.0 + C_TOLERANCE:
        raise ValueError(f"|c| must not exceed 1, got {abs(c_value)}")
    cutoff = _resolve_cutoff(alpha, cutoff)
    a = abs(alpha) ** 2
    norm2 = ecs_normalization(alpha)
    coherence = math.exp(-0.5 * a * (1.0 - abs(c_value) ** 2))

    beta = complex(c_value) * alpha
    vacuum = vacuum_amplitudes(cutoff)
    ket_a = _product(coherent_amplitudes(alpha * complex(math.cos(omega0_t), -math.sin(omega0_t)), cutoff), vacuum)
    ket_b = _product(vacuum, coherent_amplitudes(beta, cutoff))
    columns = [ket_a, ket_b]
    if dc_dgamma is not None:
        columns.append(_product(vacuum, coherent_derivative(beta, complex(dc_dgamma) * alpha, cutoff)))
    vectors = np.column_stack(columns)

    basis = _orthonormal_span(vectors)
    coeffs = basis.conj().T @ vectors
    va, vb = coeffs[:, 0], coeffs[:, 1]
    core = norm2 * (np.outer(va, va.conj()) + coherence * (np.outer(va, vb.conj()) + np.outer(vb, va.conj()))
                    + np.outer(vb, vb.conj()))

    trace = float(np.trace(core).real)
    if abs(trace - 1.0) > TRACE_TOLERANCE:
        raise AssemblyError(f"trace of rho is {trace:.12g}; check the cutoff ({cutoff}) or the coherence factor")

    d_core = None
    if dc_dgamma is not None:
        vd = coeffs[:, 2]
        d_coherence = coherence * a * (np.conj(c_value) * dc_dgamma).real
        d_core = norm2 * (
            d_coherence * (np.outer(va, vb.conj()) + np.outer(vb, va.conj()))
            + coherence * (np.outer(va, vd.conj()) + np.outer(vd, va.conj()))
            + np.outer(vd, vb.conj()) + np.outer(vb, vd.conj())
        )

    return TwoModeDensity(basis=basis, core=core, cutoff=cutoff, d_core=d_core)


def rho_derivative(alpha, c_value, dc_dgamma, cutoff=None, omega0_t=0.0):
    """Dense d rho/d gamma on the product basis."""
    return rho_of_t(alpha, c_value, omega0_t, cutoff, dc_dgamma=dc_dgamma).d_gamma


def branch_purity(alpha, c_value, omega0_t=0.0):
    """
    Tr rho^2 from the 2x2 Gram matrix of the two branches.

    With G the Gram matrix of (|A>, |B>) and K the coefficient matrix
    N^2 [[1, X], [X, 1]], Tr rho^2 = Tr (K G K G).
    """
    a = abs(alpha) ** 2
    norm2 = ecs_normalization(alpha)
    coherence = math.exp(-0.5 * a * (1.0 - abs(c_value) ** 2))
    # <A|B> = <alpha e^{-i omega0 t}|0> <0|c alpha>
    overlap = math.exp(-0.5 * a) * math.exp(-0.5 * a * abs(c_value) ** 2)
    gram = np.array([[1.0, overlap], [overlap, 1.0]])
    coefficients = norm2 * np.array([[1.0, coherence], [coherence, 1.0]])
    product = coefficients @ gram
    return float(np.trace(product @ product).real)
