"""
Unit tests for the version module.
"""

from packaging.version import Version

import version


def test_version_is_parseable():
    """Test VERSION is a valid release string."""
    assert Version(version.VERSION) >= Version("1.0.0"), "VERSION should parse as a release"


def test_solver_versions():
    """Test the provenance record lists the numerical stack."""
    versions = version.solver_versions()
    assert set(versions) == {"ecs-metrology", "python", "numpy", "scipy"}, "Unexpected provenance keys"
    assert versions["ecs-metrology"] == version.VERSION, "Package version mismatch"


def test_outdated_dependencies(monkeypatch):
    """Test packages below the minimum are reported."""
    assert version.outdated_dependencies() == [], "Test environment should meet the minimum versions"

    monkeypatch.setitem(version.MINIMUM_VERSIONS, "scipy", "999.0")
    assert version.outdated_dependencies() == ["scipy"], "A too-old scipy should be reported"
