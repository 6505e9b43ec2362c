"""Acceptance checks: one test per named verification suite.

Each test runs a suite from :mod:`cutfsi.verification` at its stated
tolerance and prints a single pass/fail line with the measured numbers.
Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines as
they complete, or use the ``cutfsi verify`` command-line entry point.

The last two suites share one cached 500-step flap trajectory, so their
combined cost is a single coupled run (a few minutes).
"""

from cutfsi.verification import run_suite


def _check(name: str) -> None:
    result = run_suite(name)
    print(result.line())
    assert result.passed, result.line()


def test_01_geometry():
    _check("geometry")


def test_02_jump_average():
    _check("jump-average")


def test_03_solid_statics():
    _check("solid-statics")


def test_04_solid_dynamics():
    _check("solid-dynamics")


def test_05_fitted_flow():
    _check("fitted-flow")


def test_06_embedded_channel():
    _check("embedded-channel")


def test_07_conditioning():
    _check("conditioning")


def test_08_projection():
    _check("projection")


def test_09_overlap():
    _check("overlap")


def test_10_jacobian_newton():
    _check("jacobian-newton")


def test_11_flap_run():
    _check("flap-run")


def test_12_force_balance():
    _check("force-balance")
