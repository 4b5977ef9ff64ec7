import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from logdiff import Grid1D

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def gaussian(grid: Grid1D, amplitude=1.0, width=1.0, center=0.0):
    return grid.sample(lambda x: amplitude * np.exp(-(((x - center) / width) ** 2)))


def smooth_random(grid: Grid1D, rng, modes=8, zero_mean=False, positive=False):
    """Band-limited random field with an envelope; optionally zero-mean or nonnegative."""
    x = grid.x
    k = np.arange(1, modes + 1) * np.pi / grid.L * 4
    a, b = rng.normal(size=(2, modes)) / np.arange(1, modes + 1)
    v = a @ np.cos(np.outer(k, x)) + b @ np.sin(np.outer(k, x))
    v = v * np.exp(-(x / (grid.L / 6)) ** 2)  # below 1e-15 at the boundary
    if positive:
        v = v**2
    if zero_mean:
        v = v - v.mean()
    return grid.zeros().with_values(v)


AMPLITUDE_FAMILY = (5.0, 10.0, 20.0, 40.0)
CALIBRATION_AMPLITUDE = 15.0


def family_run(amplitude, grid=None, t_end=20.0):
    from logdiff import RunConfig, evolve

    grid = grid or Grid1D(1024, 100.0)
    return evolve(RunConfig(grid, gaussian(grid, amplitude), t_end, 0.01, dt_growth=1.02, dt_max=0.2))


@pytest.fixture(scope="session")
def amplitude_family():
    """``(calibration run, {name: run})``: Gaussians on a domain wide enough that wrap-around is negligible."""
    runs = {f"A{a:g}": family_run(a) for a in AMPLITUDE_FAMILY}
    return family_run(CALIBRATION_AMPLITUDE), runs


ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
