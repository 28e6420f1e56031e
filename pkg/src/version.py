import platform

VERSION = "1.0.0"

# Oldest releases providing scipy.special.lambertw, scipy.signal.fftconvolve
# with complex input and expm_multiply with start/stop/num
MINIMUM_VERSIONS = {
    "numpy": "1.20",
    "scipy": "1.7",
}


def solver_versions():
    """Versions of the numerical stack, recorded in every result header."""
    # Imported here so setup.py can read VERSION before dependencies exist
    import numpy
    import scipy

    return {
        "ecs-metrology": VERSION,
        "python": platform.python_version(),
        "numpy": numpy.__version__,
        "scipy": scipy.__version__,
    }


def outdated_dependencies():
    """Names of numerical packages older than MINIMUM_VERSIONS."""
    from packaging.version import Version

    installed = solver_versions()
    outdated = []
    for name, minimum in MINIMUM_VERSIONS.items():
        try:
            if Version(installed[name]) < Version(minimum):
                outdated.append(name)
        except Exception:
            # Unparseable development builds are not reported
            continue
    return outdated
