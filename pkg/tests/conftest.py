"""
Pytest configuration and fixtures for ECS Metrology tests.
"""

import math
import os
import shutil
import sys

import pytest

# Add the src directory to the path so we can import modules
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..", "src")))

import spectral  # noqa: E402

# Constants
TEMP_DIR = os.path.join(os.path.dirname(__file__), "temp")
THRESHOLD_OMEGA_C = (1.0 + math.pi) / 0.02


@pytest.fixture(scope="session", autouse=True)
def setup_test_environment():
    """Set up test environment once per test session."""
    os.makedirs(TEMP_DIR, exist_ok=True)

    yield

    # Clean up after tests
    if os.path.exists(TEMP_DIR):
        shutil.rmtree(TEMP_DIR)


@pytest.fixture
def probe():
    """Probe used throughout the figures: omega0 = 1, gamma = pi."""
    return spectral.ProbeConfig(omega0=1.0, gamma=math.pi)


@pytest.fixture
def bath_factory():
    """Ohmic bath with eta = 0.02 at a chosen cutoff."""
    def make(omega_c, eta=0.02, s=1.0):
        return spectral.SpectralDensity(s=s, eta=eta, omega_c=omega_c)
    return make


@pytest.fixture
def below_threshold(bath_factory):
    """Bath without a bound state (omega_c below 207.08)."""
    return bath_factory(150.0)


@pytest.fixture
def above_threshold(bath_factory):
    """Bath with a bound state (omega_c above 207.08)."""
    return bath_factory(400.0)


@pytest.fixture
def output_file():
    """Create a temporary output file path."""
    file_path = os.path.join(TEMP_DIR, "output.csv")

    yield file_path

    # Clean up
    if os.path.exists(file_path):
        os.remove(file_path)


@pytest.fixture
def config_file():
    """Create a temporary config file path."""
    file_path = os.path.join(TEMP_DIR, "experiment.json")

    yield file_path

    if os.path.exists(file_path):
        os.remove(file_path)
