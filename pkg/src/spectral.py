"""
Spectral density module for ECS Metrology.

This module represents the Ohmic-family bath

    J(omega) = eta * omega * (omega / omega_c)**(s - 1) * exp(-omega / omega_c)

and evaluates every bath integral the dynamics and bound-state analysis need:
the correlation function f(t), the dispersion integral D(varpi) below the band,
the residue integral, the Markovian rate and shift, and the integral of J/omega
that decides whether a bound state forms.

All frequencies are in units of omega0 = 1 and all times in units of 1/omega0.
Every function is pure; SpectralDensity and ProbeConfig are frozen.
"""

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import integrate, special

logger = logging.getLogger(__name__)

# Quadrature settings (omega0 units)
QUAD_ABS_TOL = 1e-10
QUAD_REL_TOL = 1e-12
QUAD_LIMIT = 1000
WINDOW_FACTOR = 50.0

# Beyond this argument e^x E1(x) is evaluated from its asymptotic series
SCALED_EXP1_SWITCH = 50.0
SCALED_EXP1_TERMS = 20


class DomainError(ValueError):
    """Raised when a bath integral is requested outside its domain."""


@dataclass(frozen=True)
class SpectralDensity:
    """Ohmic-family spectral density J(omega) with exponential cutoff."""

    s: float = 1.0
    eta: float = 0.02
    omega_c: float = 100.0

    def __post_init__(self):
        for name in ("s", "eta", "omega_c"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise DomainError(f"{name} must be finite, got {value}")
        if self.s <= 0:
            raise DomainError(f"Ohmicity s must be > 0, got {self.s}")
        if self.eta < 0:
            raise DomainError(f"Coupling eta must be >= 0, got {self.eta}")
        if self.omega_c <= 0:
            raise DomainError(f"Cutoff omega_c must be > 0, got {self.omega_c}")

    def __call__(self, omega):
        return evaluate_j(self, omega)

    @property
    def is_ohmic(self):
        return self.s == 1.0

    @property
    def peak_frequency(self):
        """Frequency of the single interior maximum of J."""
        return self.s * self.omega_c

    def with_cutoff(self, omega_c, eta=None):
        return replace(self, omega_c=omega_c, eta=self.eta if eta is None else eta)


@dataclass(frozen=True)
class ProbeConfig:
    """Probe frequency omega0 and the estimated parameter gamma (order k = 1)."""

    omega0: float = 1.0
    gamma: float = math.pi

    def __post_init__(self):
        if not (math.isfinite(self.omega0) and self.omega0 > 0):
            raise DomainError(f"Probe frequency omega0 must be > 0, got {self.omega0}")
        if not math.isfinite(self.gamma):
            raise DomainError(f"gamma must be finite, got {self.gamma}")
        if self.gamma < 0:
            raise DomainError(f"gamma must be >= 0, got {self.gamma}")

    @property
    def transition_frequency(self):
        """omega0 + gamma, the bare frequency of the encoding arm."""
        return self.omega0 + self.gamma

    def with_gamma(self, gamma):
        return replace(self, gamma=gamma)


def evaluate_j(sd, omega):
    """
    Evaluate J(omega) for a scalar or an array of frequencies.

    Raises DomainError for negative frequencies.
    """
    omega_arr = np.asarray(omega, dtype=float)
    if np.any(omega_arr < 0):
        raise DomainError("J(omega) is defined for omega >= 0 only")
    x = omega_arr / sd.omega_c
    # eta * omega_c * x**s * exp(-x) keeps J(0) = 0 for every s > 0
    value = sd.eta * sd.omega_c * np.power(x, sd.s) * np.exp(-x)
    if np.ndim(value) == 0:
        return float(value)
    return value


def integration_window(sd, probe=None):
    """Upper limit W of the finite quadrature range."""
    top = WINDOW_FACTOR * sd.omega_c
    if probe is not None:
        top = max(top, WINDOW_FACTOR * probe.transition_frequency)
    return top


def tail_bound(sd, upper):
    """
    Analytic bound on the integral of J beyond `upper`.

    Every integrand used here is J times a factor bounded by one (or by
    1/(omega - varpi) <= 1/upper), so eta*omega_c^2*Gamma(s+1, upper/omega_c)
    bounds the neglected tail.
    """
    x = upper / sd.omega_c
    return sd.eta * sd.omega_c ** 2 * special.gamma(sd.s + 1.0) * special.gammaincc(sd.s + 1.0, x)


def _quad(func, lower, upper, **kwargs):
    options = {"epsabs": QUAD_ABS_TOL, "epsrel": QUAD_REL_TOL, "limit": QUAD_LIMIT}
    options.update(kwargs)
    value, error = integrate.quad(func, lower, upper, **options)
    logger.debug("quad [%g, %g] -> %.17g (est. error %.3g)", lower, upper, value, error)
    return value


def _check_tail(sd, upper, what):
    bound = tail_bound(sd, upper)
    if bound > QUAD_ABS_TOL:
        logger.warning("%s: neglected tail beyond W=%g may reach %.3g", what, upper, bound)


def scaled_exp1(x):
    """e^x * E1(x) for x > 0, stable for large x."""
    if x <= 0:
        raise DomainError(f"E1 is evaluated for positive arguments only, got {x}")
    if x <= SCALED_EXP1_SWITCH:
        return float(math.exp(x) * special.exp1(x))
    # e^x E1(x) ~ sum_n (-1)^n n! / x^(n+1)
    total = 0.0
    term = 1.0 / x
    for n in range(SCALED_EXP1_TERMS):
        total += term
        term *= -(n + 1) / x
    return total


def exp1(x):
    """Exponential integral E1(x) for x > 0."""
    if x <= 0:
        raise DomainError(f"E1 is evaluated for positive arguments only, got {x}")
    return float(special.exp1(x))


def correlation_f(sd, t, method="closed"):
    """
    Environmental correlation function f(t) = int_0^inf J(omega) e^{-i omega t} d omega.

    method="closed" uses eta*Gamma(s+1)*omega_c^2*(1 + i omega_c t)^{-(s+1)} and
    accepts arrays; method="quad" evaluates the Fourier integral with an
    oscillatory-weight adaptive quadrature for a single time.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise DomainError("correlation_f is evaluated for t >= 0 only")

    if method == "closed":
        prefactor = sd.eta * special.gamma(sd.s + 1.0) * sd.omega_c ** 2
        value = prefactor * np.power(1.0 + 1j * sd.omega_c * t_arr, -(sd.s + 1.0))
        if np.ndim(value) == 0:
            return complex(value)
        return value

    if method != "quad":
        raise ValueError(f"Unknown correlation method: {method}")
    if t_arr.ndim != 0:
        return np.array([correlation_f(sd, float(tt), method="quad") for tt in t_arr.ravel()]).reshape(t_arr.shape)

    t_val = float(t_arr)
    upper = integration_window(sd)
    _check_tail(sd, upper, "correlation_f")
    j = lambda w: evaluate_j(sd, w)
    if t_val == 0.0:
        return complex(_quad(j, 0.0, upper))
    oscillatory = {"epsabs": 0.0, "maxp1": 200}
    real = _quad(j, 0.0, upper, weight="cos", wvar=t_val, **oscillatory)
    imag = _quad(j, 0.0, upper, weight="sin", wvar=t_val, **oscillatory)
    return complex(real, -imag)


def bound_state_integral(sd, method="closed"):
    """
    int_0^inf J(omega)/omega d omega, equal to eta*omega_c*Gamma(s) for the Ohmic family.

    Bound-state criterion: omega0 + gamma minus this integral <= 0.
    """
    if method == "closed":
        return sd.eta * sd.omega_c * special.gamma(sd.s)
    upper = integration_window(sd)
    integrand = lambda w: sd.eta * np.power(w / sd.omega_c, sd.s - 1.0) * np.exp(-w / sd.omega_c)
    # s < 1 has an integrable singularity at omega = 0
    return _quad(integrand, 0.0, upper, points=[sd.omega_c])


def eta_for_ratio(s, omega_c, probe, ratio=3.0):
    """
    Coupling that makes int J/omega equal ratio * (omega0 + gamma).

    ratio = 3 gives the rule eta = 3(omega0 + gamma)/[omega_c Gamma(s)] used
    by the cutoff scans.
    """
    if omega_c <= 0:
        raise DomainError(f"Cutoff omega_c must be > 0, got {omega_c}")
    return ratio * probe.transition_frequency / (omega_c * special.gamma(s))


def _require_below_band(varpi, name):
    if not varpi < 0:
        raise DomainError(f"{name} requires varpi < 0 (below the band edge), got {varpi}")


def dispersion_integral(sd, varpi, method="auto"):
    """
    D(varpi) = int_0^inf J(omega)/(omega - varpi) d omega for varpi < 0.

    D is positive and strictly decreasing in |varpi|. For s = 1 the closed form
    eta*[omega_c + varpi e^{-varpi/omega_c} E1(-varpi/omega_c)] is used unless
    method="quad" is requested.
    """
    _require_below_band(varpi, "dispersion_integral")
    if sd.eta == 0:
        return 0.0
    if method == "auto":
        method = "closed" if sd.is_ohmic else "quad"

    if method == "closed":
        if not sd.is_ohmic:
            raise DomainError("closed-form dispersion integral exists for s = 1 only")
        x = -varpi / sd.omega_c
        return sd.eta * (sd.omega_c + varpi * scaled_exp1(x))

    upper = integration_window(sd)
    _check_tail(sd, upper, "dispersion_integral")
    integrand = lambda w: evaluate_j(sd, w) / (w - varpi)
    return _quad(integrand, 0.0, upper, points=[min(-varpi, upper / 2), sd.peak_frequency])


def residue_integral(sd, varpi, method="auto"):
    """
    R(varpi) = int_0^inf J(omega)/(varpi - omega)^2 d omega for varpi < 0.

    R is the derivative of D with respect to varpi (equivalently minus its
    derivative with respect to |varpi|). For s = 1:
    R = eta*[(1 + x) e^x E1(x) - 1] with x = -varpi/omega_c.
    """
    _require_below_band(varpi, "residue_integral")
    if sd.eta == 0:
        return 0.0
    if method == "auto":
        method = "closed" if sd.is_ohmic else "quad"

    if method == "closed":
        if not sd.is_ohmic:
            raise DomainError("closed-form residue integral exists for s = 1 only")
        x = -varpi / sd.omega_c
        return sd.eta * ((1.0 + x) * scaled_exp1(x) - 1.0)

    upper = integration_window(sd)
    _check_tail(sd, upper, "residue_integral")
    integrand = lambda w: evaluate_j(sd, w) / (varpi - w) ** 2
    return _quad(integrand, 0.0, upper, points=[min(-varpi, upper / 2), sd.peak_frequency])


def dispersion_derivative(sd, varpi):
    """dD/dvarpi; identical to residue_integral. Slope of the pole function in find_bound_state."""
    return residue_integral(sd, varpi)


def principal_value_shift(sd, frequency):
    """
    P int_0^inf J(omega)/(omega - frequency) d omega for frequency > 0.

    The Cauchy-weighted adaptive quadrature handles the pole on [0, W]; the
    smooth remainder beyond W is bounded analytically.
    """
    if frequency <= 0:
        raise DomainError(f"principal value needs a positive frequency, got {frequency}")
    if sd.eta == 0:
        return 0.0
    upper = max(integration_window(sd), 2.0 * frequency)
    _check_tail(sd, upper, "principal_value_shift")
    j = lambda w: evaluate_j(sd, w)
    return _quad(j, 0.0, upper, weight="cauchy", wvar=frequency)


def markov_rates(sd, probe):
    """
    Markovian decay rate and shift.

    Returns (kappa, delta) with kappa = pi*J(omega0 + gamma) and
    delta = P int J(omega)/(omega - omega0 - gamma) d omega. The pole of the
    amplitude sits at frequency omega0 + gamma - delta (see dynamics.markovian_c).
    """
    frequency = probe.transition_frequency
    kappa = math.pi * evaluate_j(sd, frequency)
    delta = principal_value_shift(sd, frequency)
    logger.debug("markov rates: kappa=%.6g delta=%.6g", kappa, delta)
    return kappa, delta


def ohmic_shift_closed_form(sd, frequency):
    """s = 1 closed form of the principal-value shift: eta*[omega_c - w e^{-w/omega_c} Ei(w/omega_c)]."""
    if not sd.is_ohmic:
        raise DomainError("closed-form shift exists for s = 1 only")
    x = frequency / sd.omega_c
    return sd.eta * (sd.omega_c - frequency * math.exp(-x) * special.expi(x))
