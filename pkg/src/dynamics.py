"""
Amplitude dynamics module for ECS Metrology.

Solves the memory-kernel equation

    dc/dt = -i(omega0 + gamma) c(t) - int_0^t f(t - tau) c(tau) d tau,  c(0) = 1

together with its gamma-sensitivity d = dc/dgamma, which obeys the same
equation with the forcing -i c(t) and d(0) = 0. Also provides the Markovian
and asymptotic (bound-state) closed forms, the transmission rate, the
master-equation coefficients and a discretized-bath unitary oracle.

The stepper is a product-integration trapezoid rule: the kernel is integrated
exactly against piecewise-linear c over every step (16-point Gauss-Legendre
moments of the closed-form f), and the history sum is split into a near part
(direct dot product) and a far part (blocked FFT convolution).
"""

import csv
import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import signal
from scipy.sparse.linalg import expm_multiply

import boundstate
import spectral

logger = logging.getLogger(__name__)

GAUSS_ORDER = 16
MAX_STEPS = 10 ** 7
MOMENT_CHUNK = 65536
MIN_BLOCK = 64
INSTABILITY_BOUND = 1e-6
DT_PHASE_FACTOR = 0.02
DT_KERNEL_FACTOR = 0.5


class InstabilityError(RuntimeError):
    """Raised when the amplitude leaves the unit disk; the step is too large."""


class GridMismatchError(ValueError):
    """Raised when a trajectory does not match the requested parameters or grid."""


@dataclass
class AmplitudeTrajectory:
    """Uniform time grid with c(t), optionally dc/dgamma(t), and the memory term."""

    times: np.ndarray
    c: np.ndarray
    dc_dgamma: Optional[np.ndarray] = None
    method: str = "exact"
    parameters: Optional[Tuple[float, float, float, float, float]] = None
    memory: Optional[np.ndarray] = None

    @property
    def dt(self):
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    @property
    def t_end(self):
        return float(self.times[-1])

    def index_of(self, t):
        """Index of the grid point nearest to t."""
        if t < 0 or t > self.t_end * (1 + 1e-12):
            raise GridMismatchError(f"time {t} outside the trajectory [0, {self.t_end}]")
        if self.dt == 0:
            return 0
        return int(min(len(self.times) - 1, round(t / self.dt)))

    def at(self, t):
        """(grid time, c, dc/dgamma) at the grid point nearest to t."""
        i = self.index_of(t)
        dc = None if self.dc_dgamma is None else complex(self.dc_dgamma[i])
        return float(self.times[i]), complex(self.c[i]), dc

    def to_rows(self, stride=1):
        """Rows of (t, Re c, Im c, |c|, Re dc, Im dc)."""
        rows = []
        for i in range(0, len(self.times), stride):
            dc = self.dc_dgamma[i] if self.dc_dgamma is not None else complex("nan")
            rows.append({
                "t": float(self.times[i]),
                "re_c": float(self.c[i].real),
                "im_c": float(self.c[i].imag),
                "abs_c": float(abs(self.c[i])),
                "re_dc_dgamma": float(np.real(dc)),
                "im_dc_dgamma": float(np.imag(dc)),
            })
        return rows

    def write_csv(self, path, stride=1):
        """Write the trajectory rows to CSV. Returns (success, error)."""
        try:
            rows = self.to_rows(stride)
            with open(path, "w", newline="", encoding="utf-8") as f:
                writer = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
                writer.writeheader()
                for row in rows:
                    writer.writerow({k: format(v, ".17g") for k, v in row.items()})
            return True, None
        except Exception as e:
            return False, str(e)


def _parameters(sd, probe):
    return (sd.s, sd.eta, sd.omega_c, probe.omega0, probe.gamma)


def default_dt(sd, probe):
    """min(0.02/(omega0 + gamma), 0.5/omega_c)."""
    return min(DT_PHASE_FACTOR / probe.transition_frequency, DT_KERNEL_FACTOR / sd.omega_c)


def time_grid(t_end, dt):
    """Uniform grid from 0 to t_end whose step does not exceed dt."""
    if t_end <= 0 or dt <= 0:
        raise ValueError(f"t_end and dt must be positive, got t_end={t_end}, dt={dt}")
    n_steps = int(math.ceil(t_end / dt - 1e-9))
    if n_steps > MAX_STEPS:
        raise ValueError(f"t_end/dt = {n_steps} exceeds the limit of {MAX_STEPS} steps")
    n_steps = max(n_steps, 1)
    return np.linspace(0.0, t_end, n_steps + 1), t_end / n_steps


def kernel_moments(sd, dt, n_steps):
    """
    Zeroth and first moments of f over every step.

    F0[m] = int_{m dt}^{(m+1) dt} f(u) du,
    F1[m] = int_{m dt}^{(m+1) dt} (u/dt - m) f(u) du.
    """
    nodes, weights = np.polynomial.legendre.leggauss(GAUSS_ORDER)
    frac = 0.5 * (nodes + 1.0)
    f0 = np.empty(n_steps, dtype=complex)
    f1 = np.empty(n_steps, dtype=complex)
    for start in range(0, n_steps, MOMENT_CHUNK):
        stop = min(start + MOMENT_CHUNK, n_steps)
        u = (np.arange(start, stop)[:, None] + frac[None, :]) * dt
        values = spectral.correlation_f(sd, u)
        f0[start:stop] = 0.5 * dt * (values @ weights)
        f1[start:stop] = 0.5 * dt * (values @ (weights * frac))
    return f0, f1


def history_weights(f0, f1):
    """Lag weights w[d] of the product trapezoid rule; c_0 additionally carries F1[n-1]."""
    w = np.empty_like(f0)
    w[0] = f0[0] - f1[0]
    w[1:] = f1[:-1] + f0[1:] - f1[1:]
    return w


def _block_size(n_steps):
    return max(MIN_BLOCK, int(math.sqrt(n_steps * max(1.0, math.log2(max(n_steps, 2))))))


def _far_history(x, w, block_start, block):
    """sum_{k=1}^{block_start-1} w[n-k] x[k] for n in [block_start, block_start + block)."""
    if block_start <= 1:
        return np.zeros(block, dtype=complex)
    lags = w[:min(len(w), block_start + block - 1)]
    conv = signal.fftconvolve(x[1:block_start], lags)
    far = np.zeros(block, dtype=complex)
    piece = conv[block_start - 1:block_start - 1 + block]
    far[:len(piece)] = piece
    return far


def _march(w, f1_end, omega, dt, x0, forcing=None, check_bound=True):
    """
    Trapezoid march of x' = -i omega x - M[x] - forcing.

    M_n = w[0] x_n + sum_{k=1}^{n-1} w[n-k] x_k + F1[n-1] x_0.
    Returns (x, M).
    """
    n_steps = len(w)
    x = np.zeros(n_steps + 1, dtype=complex)
    memory = np.zeros(n_steps + 1, dtype=complex)
    x[0] = x0
    a = 0.5j * omega * dt
    h = 0.5 * dt
    denominator = 1.0 + a + h * w[0]
    w_rev = w[::-1].copy()
    block = _block_size(n_steps)
    far = None
    block_start = 1

    for n in range(1, n_steps + 1):
        if far is None or n >= block_start + block:
            block_start = n
            far = _far_history(x, w, block_start, block)

        history = far[n - block_start] + f1_end[n - 1] * x[0]
        if n > block_start:
            history += np.dot(w_rev[n_steps - 1 - n + block_start:n_steps - 1], x[block_start:n])

        rhs = x[n - 1] * (1.0 - a) - h * (memory[n - 1] + history)
        if forcing is not None:
            rhs -= h * (forcing[n - 1] + forcing[n])
        x[n] = rhs / denominator
        memory[n] = w[0] * x[n] + history

        if check_bound and abs(x[n]) > 1.0 + INSTABILITY_BOUND:
            raise InstabilityError(
                f"|c| = {abs(x[n]):.9f} exceeds 1 at t = {n * dt:.6g}; reduce dt (currently {dt:.3g})"
            )
    return x, memory


def solve_c(sd, probe, t_end, dt=None, with_sensitivity=False):
    """
    Solve the memory-kernel equation for c(t) on a uniform grid.

    Args:
        sd: SpectralDensity
        probe: ProbeConfig
        t_end: Final time
        dt: Step (default_dt when None); adjusted down so t_end is a grid point
        with_sensitivity: Also integrate dc/dgamma

    Returns:
        AmplitudeTrajectory tagged "exact"
    """
    times, step = time_grid(t_end, dt if dt is not None else default_dt(sd, probe))
    n_steps = len(times) - 1
    logger.debug("solve_c: %d steps of %.4g up to t=%.4g", n_steps, step, t_end)

    if sd.eta == 0:
        return _free_rotation(sd, probe, times, with_sensitivity)

    f0, f1 = kernel_moments(sd, step, n_steps)
    w = history_weights(f0, f1)
    c, memory = _march(w, f1, probe.transition_frequency, step, 1.0 + 0j)

    trajectory = AmplitudeTrajectory(
        times=times, c=c, method="exact", parameters=_parameters(sd, probe), memory=memory
    )
    if with_sensitivity:
        trajectory.dc_dgamma = _sensitivity(w, f1, probe, step, c)
    return trajectory


def _free_rotation(sd, probe, times, with_sensitivity):
    # f vanishes identically: c = e^{-i(omega0 + gamma)t}, dc/dgamma = -it c
    c = np.exp(-1j * probe.transition_frequency * times)
    return AmplitudeTrajectory(
        times=times, c=c, dc_dgamma=-1j * times * c if with_sensitivity else None,
        method="exact", parameters=_parameters(sd, probe), memory=np.zeros_like(c),
    )


def _sensitivity(w, f1, probe, dt, c):
    d, _ = _march(w, f1, probe.transition_frequency, dt, 0j, forcing=1j * c, check_bound=False)
    return d


def solve_sensitivity(sd, probe, trajectory):
    """
    Integrate dc/dgamma along an existing exact trajectory.

    The discrete derivative of the stepper is reproduced exactly, so finite
    differences of solve_c over gamma converge to this result.
    """
    if trajectory.method != "exact":
        raise GridMismatchError(f"sensitivity needs an exact trajectory, got '{trajectory.method}'")
    if trajectory.parameters != _parameters(sd, probe):
        raise GridMismatchError("trajectory was solved with different bath or probe parameters")
    steps = np.diff(trajectory.times)
    if len(steps) == 0 or np.max(np.abs(steps - steps[0])) > 1e-12 * max(1.0, trajectory.t_end):
        raise GridMismatchError("trajectory grid is not uniform")

    dt = trajectory.dt
    if sd.eta == 0:
        trajectory.dc_dgamma = -1j * trajectory.times * trajectory.c
        return trajectory
    f0, f1 = kernel_moments(sd, dt, len(steps))
    w = history_weights(f0, f1)
    trajectory.dc_dgamma = _sensitivity(w, f1, probe, dt, trajectory.c)
    return trajectory


def markovian_c(sd, probe, t):
    """exp{-[kappa + i(omega0 + gamma - delta)] t}."""
    kappa, delta = spectral.markov_rates(sd, probe)
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("markovian_c is evaluated for t >= 0 only")
    value = np.exp(-(kappa + 1j * (probe.transition_frequency - delta)) * t_arr)
    return complex(value) if np.ndim(value) == 0 else value


def asymptotic_c(bs, t):
    """Z e^{-i varpi_b t}."""
    t_arr = np.asarray(t, dtype=float)
    value = bs.z * np.exp(-1j * bs.varpi_b * t_arr)
    return complex(value) if np.ndim(value) == 0 else value


def asymptotic_dc_dgamma(bs, t, dz_dgamma=0.0):
    """(dZ/dgamma - i Z^2 t) e^{-i varpi_b t}, using d varpi_b/d gamma = Z."""
    t_arr = np.asarray(t, dtype=float)
    value = (dz_dgamma - 1j * bs.z ** 2 * t_arr) * np.exp(-1j * bs.varpi_b * t_arr)
    return complex(value) if np.ndim(value) == 0 else value


def transmission(c_value):
    """Photon transmission rate N(t)/N = (1 + |c|^2)/2."""
    magnitude = np.abs(c_value)
    if np.any(magnitude > 1.0 + 1e-9):
        raise ValueError(f"|c| must not exceed 1, got {np.max(magnitude)}")
    value = 0.5 * (1.0 + magnitude ** 2)
    return float(value) if np.ndim(value) == 0 else value


def master_coefficients(trajectory, probe, floor=1e-12):
    """
    Decay rate Gamma(t) and renormalized frequency Omega(t) with Gamma + i Omega = -dc/dt / c.

    dc/dt is taken from the equation itself, -i(omega0 + gamma) c - M, so no
    differencing is involved. Points with |c| below `floor` are NaN.
    """
    if trajectory.memory is None:
        raise GridMismatchError("master coefficients need the memory term of an exact trajectory")
    c = trajectory.c
    rate = np.full(len(c), np.nan, dtype=complex)
    mask = np.abs(c) > floor
    rate[mask] = 1j * probe.transition_frequency + trajectory.memory[mask] / c[mask]
    return rate.real, rate.imag


def discretized_c(sd, probe, m, times, band=None):
    """
    Probe amplitude of the discretized single-excitation model evolved unitarily.

    `times` must be a uniform grid starting at 0.
    """
    times = np.asarray(times, dtype=float)
    if times[0] != 0.0:
        raise GridMismatchError("discretized evolution starts at t = 0")
    if len(times) > 2:
        steps = np.diff(times)
        if np.max(np.abs(steps - steps[0])) > 1e-9 * times[-1]:
            raise GridMismatchError("discretized evolution needs a uniform time grid")

    hamiltonian, _, _ = boundstate.single_excitation_hamiltonian(sd, probe, m, band, as_sparse=True)
    initial = np.zeros(m + 1, dtype=complex)
    initial[0] = 1.0
    states = expm_multiply(
        -1j * hamiltonian.astype(complex), initial,
        start=0.0, stop=float(times[-1]), num=len(times), endpoint=True,
    )
    return AmplitudeTrajectory(
        times=times, c=np.asarray(states)[:, 0].copy(), method="discretized", parameters=_parameters(sd, probe)
    )
