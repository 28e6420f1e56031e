"""
Bound-state analysis module for ECS Metrology.

Finds the isolated single-excitation eigenfrequency varpi_b below the band
edge, its residue Z, and diagonalizes the discretized single-excitation
Hamiltonian for energy-spectrum output.
"""

import csv
import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy import linalg, optimize, sparse

import spectral

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-12
EDGE_EPSILON = 1e-12
MAX_BRACKET_DOUBLINGS = 200
MONOTONE_SAMPLES = 16
DEFAULT_BAND_LOW = 1e-4
DEFAULT_BAND_HIGH_FACTOR = 12.0


class NoBoundStateError(ValueError):
    """Raised when a bound state is requested where none exists."""


@dataclass(frozen=True)
class BoundState:
    """Isolated eigenfrequency varpi_b < 0 with residue Z in (0, 1]."""

    varpi_b: float
    z: float
    residual: float = 0.0

    def __post_init__(self):
        if not self.varpi_b < 0:
            raise ValueError(f"bound-state frequency must be negative, got {self.varpi_b}")
        if not 0 < self.z <= 1:
            raise ValueError(f"residue must lie in (0, 1], got {self.z}")


@dataclass
class SpectrumSlice:
    """Eigenfrequencies of the discretized single-excitation Hamiltonian."""

    omega_c: float
    eigenfrequencies: np.ndarray
    discretization_count: int
    band: Tuple[float, float] = field(default=(0.0, 0.0))

    @property
    def ground_frequency(self):
        return float(self.eigenfrequencies[0])

    @property
    def has_bound_state(self):
        return self.ground_frequency < 0

    def to_rows(self):
        return [{"index": i, "eigenfrequency": float(e)} for i, e in enumerate(self.eigenfrequencies)]

    def write_csv(self, path):
        """Write the spectrum as (index, eigenfrequency) rows. Returns (success, error)."""
        try:
            with open(path, "w", newline="", encoding="utf-8") as f:
                writer = csv.writer(f)
                writer.writerow(["index", "eigenfrequency"])
                for i, e in enumerate(self.eigenfrequencies):
                    writer.writerow([i, format(float(e), ".17g")])
            return True, None
        except Exception as e:
            return False, str(e)


def pole_function(sd, probe, varpi):
    """g(varpi) = omega0 + gamma - D(varpi) - varpi; strictly decreasing on varpi < 0."""
    return probe.transition_frequency - spectral.dispersion_integral(sd, varpi) - varpi


def band_edge_value(sd, probe):
    """y(0) = omega0 + gamma - int J/omega."""
    return probe.transition_frequency - spectral.bound_state_integral(sd)


def bound_state_exists(sd, probe):
    """True iff y(0) <= 0."""
    return band_edge_value(sd, probe) <= 0


def _bracket(sd, probe):
    g = lambda v: pole_function(sd, probe, v)
    hi = -EDGE_EPSILON * probe.omega0
    if g(hi) >= 0:
        raise NoBoundStateError(f"no sign change below the band edge (y(0) = {band_edge_value(sd, probe):.6g})")

    lo = -probe.omega0
    for _ in range(MAX_BRACKET_DOUBLINGS):
        if g(lo) > 0:
            break
        lo *= 2.0
    else:
        raise NoBoundStateError("could not bracket the bound-state root")

    _check_monotone(g, lo, hi)
    return lo, hi


def _check_monotone(g, lo, hi):
    samples = np.linspace(lo, hi, MONOTONE_SAMPLES)
    values = np.array([g(v) for v in samples])
    if np.any(np.diff(values) > 0):
        raise ArithmeticError(f"pole function not monotone on [{lo:.6g}, {hi:.6g}]")


def find_bound_state(sd, probe, tol=DEFAULT_TOL):
    """
    Locate varpi_b as the unique root of g(varpi) below the band edge.

    Needs y(0) < 0. At y(0) = 0 the pole merges with the band edge
    (varpi_b -> 0-, Z -> 0) and NoBoundStateError is raised even though
    bound_state_exists reports True.

    Args:
        sd: SpectralDensity of the bath
        probe: ProbeConfig
        tol: Residual tolerance in omega0 units

    Returns:
        BoundState with varpi_b, Z = 1/(1 + R(varpi_b)) and the root residual
    """
    edge = band_edge_value(sd, probe)
    if edge > 0:
        raise NoBoundStateError(f"no bound state: omega0 + gamma - int J/omega = {edge:.6g} > 0")
    if edge == 0:
        raise NoBoundStateError("bound state merges with the band edge (y(0) = 0, Z = 0)")

    lo, hi = _bracket(sd, probe)
    g = lambda v: pole_function(sd, probe, v)
    varpi_b = optimize.brentq(g, lo, hi, xtol=tol * probe.omega0 * 1e-2, rtol=4 * np.finfo(float).eps, maxiter=500)

    # Newton polish: g'(varpi) = -(1 + dD/dvarpi)
    slope = 1.0 + spectral.dispersion_derivative(sd, varpi_b)
    polished = varpi_b + g(varpi_b) / slope
    if polished < 0 and abs(g(polished)) < abs(g(varpi_b)):
        varpi_b = polished
        slope = 1.0 + spectral.dispersion_derivative(sd, varpi_b)

    residual = abs(g(varpi_b))
    if residual > tol * probe.omega0 * max(1.0, abs(varpi_b)):
        logger.warning("bound-state residual %.3g exceeds tolerance %.3g", residual, tol)

    z = 1.0 / slope
    logger.debug("bound state at varpi_b=%.15g with Z=%.15g", varpi_b, z)
    return BoundState(varpi_b=varpi_b, z=z, residual=residual)


def ohmic_residue_closed_form(sd, probe, varpi_b):
    """Z = [(w - eta omega_c)/varpi_b + (varpi_b - w)/omega_c]^{-1}, valid for s = 1 at the root."""
    if not sd.is_ohmic:
        raise spectral.DomainError("closed-form residue exists for s = 1 only")
    w = probe.transition_frequency
    return 1.0 / ((w - sd.eta * sd.omega_c) / varpi_b + (varpi_b - w) / sd.omega_c)


def dz_dgamma_check(sd, probe, bs=None, delta=1e-4):
    """Central difference of varpi_b over gamma; equals Z when the pole equation holds."""
    step = delta * probe.omega0
    if probe.gamma - step < 0:
        raise spectral.DomainError("finite-difference stencil leaves gamma >= 0")
    try:
        upper = find_bound_state(sd, probe.with_gamma(probe.gamma + step))
        lower = find_bound_state(sd, probe.with_gamma(probe.gamma - step))
    except NoBoundStateError as e:
        raise NoBoundStateError(f"bound state lost inside the stencil: {e}") from e
    derivative = (upper.varpi_b - lower.varpi_b) / (2.0 * step)
    if bs is not None:
        logger.debug("d varpi_b/d gamma = %.12g vs Z = %.12g", derivative, bs.z)
    return derivative


def bath_grid(sd, probe, m, band=None):
    """Midpoint grid of m bath modes and couplings g_k = sqrt(J(omega_k) d omega)."""
    if m < 2:
        raise ValueError(f"need at least 2 bath modes, got {m}")
    lo, hi = band if band is not None else (DEFAULT_BAND_LOW * probe.omega0, DEFAULT_BAND_HIGH_FACTOR * sd.omega_c)
    if not 0 < lo < hi:
        raise spectral.DomainError(f"band must satisfy 0 < low < high, got ({lo}, {hi})")
    d_omega = (hi - lo) / m
    omegas = lo + (np.arange(m) + 0.5) * d_omega
    couplings = np.sqrt(spectral.evaluate_j(sd, omegas) * d_omega)
    return omegas, couplings


def single_excitation_hamiltonian(sd, probe, m, band=None, as_sparse=False):
    """
    Arrowhead Hamiltonian of the probe mode coupled to m discrete bath modes.

    Index 0 is the probe (frequency omega0 + gamma); indices 1..m are bath modes.
    """
    omegas, couplings = bath_grid(sd, probe, m, band)
    diagonal = np.concatenate(([probe.transition_frequency], omegas))
    if as_sparse:
        rows = np.concatenate((np.arange(m + 1), np.zeros(m, dtype=int), np.arange(1, m + 1)))
        cols = np.concatenate((np.arange(m + 1), np.arange(1, m + 1), np.zeros(m, dtype=int)))
        data = np.concatenate((diagonal, couplings, couplings))
        return sparse.csr_matrix((data, (rows, cols)), shape=(m + 1, m + 1)), omegas, couplings

    hamiltonian = np.diag(diagonal)
    hamiltonian[0, 1:] = couplings
    hamiltonian[1:, 0] = couplings
    return hamiltonian, omegas, couplings


def discretized_spectrum(sd, probe, m, band=None):
    """Sorted eigenfrequencies of the discretized single-excitation Hamiltonian."""
    hamiltonian, omegas, _ = single_excitation_hamiltonian(sd, probe, m, band)
    eigenfrequencies = linalg.eigh(hamiltonian, eigvals_only=True)
    used_band = (float(omegas[0] - 0.5 * (omegas[1] - omegas[0])), float(omegas[-1] + 0.5 * (omegas[1] - omegas[0])))
    return SpectrumSlice(
        omega_c=sd.omega_c,
        eigenfrequencies=np.sort(eigenfrequencies),
        discretization_count=m,
        band=used_band,
    )


def residue_or_none(sd, probe) -> Optional[BoundState]:
    """BoundState when one with Z > 0 exists, None otherwise."""
    if not band_edge_value(sd, probe) < 0:
        return None
    return find_bound_state(sd, probe)
