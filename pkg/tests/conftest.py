"""Session-wide upper-bound harness.

Every certificate built anywhere in the suite is recorded; at the end of the
session each one with regret within tolerance must respect
principal_revenue <= truncated_welfare + 1e-9.
"""
import pytest

from bundleduel import equilibrium

_SEEN = []
_SUMMARY = []


@pytest.fixture(scope="session", autouse=True)
def welfare_bound_harness():
    original = equilibrium._certificate

    def recording(*args, **kwargs):
        cert = original(*args, **kwargs)
        _SEEN.append(cert)
        return cert

    equilibrium._certificate = recording
    yield _SEEN
    equilibrium._certificate = original
    certified = [c for c in _SEEN if c.is_equilibrium()]
    bad = [c for c in certified if not c.within_welfare_bound]
    _SUMMARY.append(f"welfare bound harness: {len(certified)} certified equilibria, {len(bad)} violations")
    assert not bad, [(c.menu.describe(), c.principal_revenue, c.truncated_welfare) for c in bad[:5]]


def pytest_terminal_summary(terminalreporter):
    for line in _SUMMARY:
        terminalreporter.write_line(line)
