"""
Unit tests for the qfi module.
"""

import math

import numpy as np
import pytest

import dynamics
import fockstate
import qfi
import spectral


def _ideal_rho(alpha, t, omega=1.0 + math.pi):
    c = np.exp(-1j * omega * t)
    return fockstate.rho_of_t(alpha, c, omega0_t=t, dc_dgamma=-1j * t * c)


def _asymptotic_rho(alpha, t, z, varpi_b=-2.0):
    phase = np.exp(-1j * varpi_b * t)
    return fockstate.rho_of_t(alpha, z * phase, omega0_t=t, dc_dgamma=-1j * z * z * t * phase)


def _has_interior_minimum(values):
    inner = values[1:-1]
    return bool(np.any((inner < values[:-2]) & (inner < values[2:])))


def _log_slope(x, y):
    return (math.log(y[1]) - math.log(y[0])) / (math.log(x[1]) - math.log(x[0]))


def test_lambert_w_values():
    """Test W at reference points and on arrays."""
    assert qfi.lambert_w(0.0) == 0.0, "W(0) = 0"
    assert qfi.lambert_w(math.e) == pytest.approx(1.0, rel=1e-14), "W(e) = 1"
    assert qfi.lambert_w(1.0) == pytest.approx(0.5671432904097838, rel=1e-14), "Omega constant mismatch"

    x = np.array([0.1, 1.0, 10.0])
    w = qfi.lambert_w(x)
    np.testing.assert_allclose(w * np.exp(w), x, rtol=1e-14, err_msg="W e^W should reproduce the argument")
    with pytest.raises(spectral.DomainError):
        qfi.lambert_w(-0.1)


def test_pure_qfi_of_ideal_ecs():
    """Test the pure-state QFI of the lossless ECS equals the closed form."""
    alpha, t = 1.3, 2.0
    cutoff = fockstate.required_cutoff(alpha)
    beta = alpha * np.exp(-1j * (1 + math.pi) * t)
    vacuum = fockstate.vacuum_amplitudes(cutoff)
    norm = math.sqrt(fockstate.ecs_normalization(alpha))
    first = fockstate.coherent_amplitudes(alpha * np.exp(-1j * t), cutoff)
    psi = norm * (np.outer(first, vacuum) + np.outer(vacuum, fockstate.coherent_amplitudes(beta, cutoff)))
    dpsi = norm * np.outer(vacuum, fockstate.coherent_derivative(beta, -1j * t * beta, cutoff))

    expected = qfi.qfi_ideal(fockstate.n_of_alpha(alpha), t)
    psi, dpsi = fockstate.FockVector(psi, cutoff), fockstate.FockVector(dpsi, cutoff)
    assert qfi.qfi_pure(psi, dpsi) == pytest.approx(expected, rel=1e-10), "Pure QFI disagrees with the ideal form"


def test_pure_qfi_rejects_bad_input():
    """Test qfi_pure checks normalization and shapes."""
    with pytest.raises(qfi.InvalidStateError):
        qfi.qfi_pure(np.array([1.0, 1.0]), np.array([0.0, 1.0]))
    with pytest.raises(qfi.InvalidStateError):
        qfi.qfi_pure(np.array([1.0, 0.0]), np.array([0.0, 1.0, 0.0]))


def test_mixed_qfi_reduces_to_pure_for_rank_one():
    """Test the mixed-state formula on lossless states against the ideal closed form."""
    rng = np.random.default_rng(7)
    for _ in range(20):
        alpha = rng.uniform(0.3, 2.0)
        t = rng.uniform(0.1, 5.0)
        rho = _ideal_rho(alpha, t)
        expected = qfi.qfi_ideal(fockstate.n_of_alpha(alpha), t)
        assert qfi.qfi_mixed(rho) == pytest.approx(expected, rel=1e-8), f"Rank-one QFI mismatch at alpha={alpha}, t={t}"


def test_mixed_qfi_dense_matches_compact():
    """Test the compact and full product-basis eigendecompositions agree."""
    rho = _asymptotic_rho(1.0, 2.0, 0.8)
    assert qfi.qfi_mixed(rho, dense=True) == pytest.approx(qfi.qfi_mixed(rho), rel=1e-9), \
        "Dense and compact QFI differ"


def test_mixed_qfi_rank_threshold_robust():
    """Test eps_rank between 1e-14 and 1e-8 leaves the QFI unchanged."""
    rho = _asymptotic_rho(1.6, 3.0, 0.9)
    values = [qfi.qfi_mixed(rho, eps_rank=eps) for eps in (1e-14, 1e-12, 1e-10, 1e-8)]
    assert max(values) - min(values) <= 1e-10 * max(values), f"QFI depends on eps_rank: {values}"


def test_mixed_qfi_requires_derivative():
    """Test a density matrix without d rho/d gamma is refused."""
    with pytest.raises(qfi.InvalidStateError):
        qfi.qfi_mixed(fockstate.rho_of_t(1.0, 0.5))


def test_ideal_limit_beats_benchmarks():
    """Test the eta = 0 pipeline reproduces the ideal QFI and beats the SNL and weak HL."""
    probe = spectral.ProbeConfig()
    sd = spectral.SpectralDensity(eta=0.0, omega_c=100.0)
    t = 5.0
    trajectory = dynamics.solve_c(sd, probe, t, with_sensitivity=True)
    grid_t, c, dc = trajectory.at(t)

    for n_avg in (0.5, 2.0, 8.0):
        alpha = fockstate.alpha_of_n(n_avg)
        rho = fockstate.rho_of_t(alpha, c, omega0_t=probe.omega0 * grid_t, dc_dgamma=dc)
        f_q = qfi.qfi_mixed(rho)
        assert f_q == pytest.approx(qfi.qfi_ideal(n_avg, grid_t), rel=1e-6), f"Ideal pipeline mismatch at N={n_avg}"

        snl, weak_hl = qfi.benchmark_limits(n_avg, grid_t)
        assert qfi.precision(f_q) < min(snl, weak_hl), f"Ideal precision must beat both benchmarks at N={n_avg}"


def test_asymptotic_exact_matches_mixed_state():
    """Test the exact long-time closed form against the full mixed-state QFI."""
    for n_avg in (0.5, 2.0, 5.0):
        alpha = fockstate.alpha_of_n(n_avg)
        for z in (0.5, 0.9, 0.97):
            rho = _asymptotic_rho(alpha, 3.0, z)
            assert qfi.qfi_asymptotic_exact(n_avg, alpha, 3.0, z) == pytest.approx(qfi.qfi_mixed(rho), rel=1e-8), \
                f"Exact asymptotic QFI mismatch at N={n_avg}, Z={z}"


def test_asymptotic_closed_form_for_large_n():
    """Test the compact long-time form is within 1e-3 of the exact one once N >= 5."""
    for n_avg in (5.0, 10.0, 50.0):
        alpha = fockstate.alpha_of_n(n_avg)
        for z in (0.9, 0.95, 0.99):
            exact = qfi.qfi_asymptotic_exact(n_avg, alpha, 2.0, z)
            compact = qfi.qfi_asymptotic(n_avg, alpha, 2.0, z)
            assert compact == pytest.approx(exact, rel=1e-3), f"Compact form off at N={n_avg}, Z={z}"


def test_asymptotic_forms_difference():
    """Test the gap between the two long-time forms is Z^6 t^2 N^2 s^2 (X^2 - 1)/(1 - s^2)."""
    n_avg, z, t = 1.0, 0.7, 2.0
    alpha = fockstate.alpha_of_n(n_avg)
    a = alpha ** 2
    s2 = math.exp(-a * (1 + z * z))
    x2 = math.exp(-a * (1 - z * z))
    gap = qfi.qfi_asymptotic_exact(n_avg, alpha, t, z) - qfi.qfi_asymptotic(n_avg, alpha, t, z)
    expected = z ** 6 * t * t * n_avg ** 2 * s2 * (x2 - 1) / (1 - s2)
    assert gap == pytest.approx(expected, rel=1e-9), "Gap between long-time forms mismatch"


def test_asymptotic_full_trapping_is_ideal():
    """Test Z = 1 recovers the ideal QFI for both long-time forms."""
    for n_avg in (0.3, 3.0, 30.0):
        alpha = fockstate.alpha_of_n(n_avg)
        ideal = qfi.qfi_ideal(n_avg, 4.0)
        assert qfi.qfi_asymptotic(n_avg, alpha, 4.0, 1.0) == pytest.approx(ideal, rel=1e-12), "Compact form at Z=1"
        assert qfi.qfi_asymptotic_exact(n_avg, alpha, 4.0, 1.0) == pytest.approx(ideal, rel=1e-10), "Exact form at Z=1"


def test_asymptotic_input_checks():
    """Test inconsistent alpha/N and out-of-range Z are refused."""
    with pytest.raises(qfi.InconsistentInputError):
        qfi.qfi_asymptotic(2.0, 1.0, 1.0, 0.9)
    with pytest.raises(spectral.DomainError):
        qfi.qfi_asymptotic_exact(2.0, fockstate.alpha_of_n(2.0), 1.0, 1.2)
    with pytest.raises(spectral.DomainError):
        qfi.qfi_asymptotic(2.0, fockstate.alpha_of_n(2.0), 1.0, 0.0)


def test_markovian_optimum():
    """Test the golden-section optimum against t = 1/kappa and e kappa/sqrt(2N)."""
    kappa, n_avg = 0.25, 4.0
    t_closed, best_closed = qfi.markovian_optimum(n_avg, kappa)
    t_golden, best_golden = qfi.markovian_optimum(n_avg, kappa, method="golden")

    assert t_closed == 4.0, "Optimal Markovian time is 1/kappa"
    assert best_closed == pytest.approx(math.e * kappa / math.sqrt(2 * n_avg), rel=1e-15), "Closed-form optimum"
    assert t_golden == pytest.approx(t_closed, rel=1e-5), f"Golden search found t={t_golden}"
    assert best_golden == pytest.approx(best_closed, rel=1e-10), "Golden optimum precision mismatch"
    with pytest.raises(spectral.DomainError):
        qfi.markovian_optimum(n_avg, 0.0)
    with pytest.raises(ValueError):
        qfi.markovian_optimum(n_avg, kappa, method="newton")


def test_markovian_qfi():
    """Test F = 2 N t^2 e^{-2 kappa t}."""
    assert qfi.qfi_markovian(3.0, 2.0, 0.1) == pytest.approx(24.0 * math.exp(-0.4), rel=1e-15), "Markovian QFI"
    with pytest.raises(spectral.DomainError):
        qfi.qfi_markovian(3.0, 2.0, 0.0)


def test_precision_and_benchmarks():
    """Test the Cramer-Rao bound and the reference limits."""
    assert qfi.precision(4.0) == 0.5, "1/sqrt(4) = 0.5"
    assert qfi.precision(1.0, mu=4) == 0.5, "Repetitions divide the bound by sqrt(mu)"
    assert qfi.precision(0.0) == math.inf, "Zero information gives infinite uncertainty"
    np.testing.assert_allclose(qfi.precision(np.array([1.0, 16.0])), [1.0, 0.25], err_msg="Vectorized precision")
    with pytest.raises(spectral.DomainError):
        qfi.precision(1.0, mu=0)
    with pytest.raises(spectral.DomainError):
        qfi.precision(-1.0)

    assert qfi.benchmark_limits(4.0, 2.0) == (0.25, 0.125), "SNL and weak HL mismatch"
    assert qfi.benchmark_limits(0.0, 2.0) == (math.inf, math.inf), "No photons gives no benchmark"
    assert qfi.zeno_limit(16.0, 1.0) == pytest.approx(0.125, rel=1e-15), "Zeno limit mismatch"


def test_precision_series_rows():
    """Test the precision series carries benchmarks per point."""
    series = qfi.precision_series("N", [1.0, 4.0], [2.0, 8.0], n_avg=np.array([1.0, 4.0]), t=1.0, with_zeno=True)
    rows = series.to_rows()

    assert len(rows) == 2, "One row per sweep value"
    assert rows[1]["N"] == 4.0, "Sweep variable is used as the key"
    assert rows[1]["delta_gamma"] == pytest.approx(1 / math.sqrt(8.0)), "delta gamma from F"
    assert rows[1]["snl"] == 0.5, "SNL at N=4, t=1"
    assert rows[1]["zeno"] == pytest.approx(4.0 ** -0.75), "Zeno limit at N=4, t=1"
    with pytest.raises(ValueError):
        qfi.PrecisionSeries("N", [1.0], [1.0, 2.0])


def test_trapped_scaling_slopes():
    """Test delta gamma ~ N^-0.93 for moderate N and N^-1/2 for large N when Z = 0.999."""
    def delta(n_avg):
        return qfi.precision(qfi.qfi_asymptotic(n_avg, fockstate.alpha_of_n(n_avg), 1.0, 0.999))

    moderate = _log_slope((10.0, 100.0), (delta(10.0), delta(100.0)))
    large = _log_slope((1e4, 1e5), (delta(1e4), delta(1e5)))
    assert moderate == pytest.approx(-0.93, abs=0.02), f"Moderate-N slope should be about -0.93, got {moderate}"
    assert large == pytest.approx(-0.5, abs=0.01), f"Large-N slope should be -1/2, got {large}"


def test_local_minimum_above_critical_residue():
    """Test delta gamma(N) develops a local minimum for Z above about 0.9625."""
    n_values = np.logspace(-1, 3, 400)

    def curve(z):
        return np.array([qfi.precision(qfi.qfi_asymptotic(n, fockstate.alpha_of_n(n), 1.0, z)) for n in n_values])

    assert _has_interior_minimum(curve(0.97)), "Z=0.97 should show a local minimum in N"
    assert not _has_interior_minimum(curve(0.95)), "Z=0.95 should decrease monotonically in N"


@pytest.mark.slow
def test_precision_degrades_without_bound_state():
    """Test delta gamma grows steadily at late times when no bound state exists."""
    probe = spectral.ProbeConfig()
    sd = spectral.SpectralDensity(eta=0.005, omega_c=10.0)
    trajectory = dynamics.solve_c(sd, probe, 160.0, with_sensitivity=True)
    alpha = fockstate.alpha_of_n(2.0)

    deltas = []
    for tau in np.arange(116.0, 161.0, 4.0):
        grid_t, c, dc = trajectory.at(tau)
        rho = fockstate.rho_of_t(alpha, c, omega0_t=probe.omega0 * grid_t, dc_dgamma=dc)
        deltas.append(qfi.precision(qfi.qfi_mixed(rho)))
    assert np.all(np.diff(deltas) > 0), f"delta gamma should increase monotonically: {deltas}"
