from __future__ import annotations

import math

import numpy as np
import pytest

from mvortex.geometry import Link, circle_curve, disk_mesh
from mvortex.grid import GridSpec
from mvortex.wavefunction import GaussianEnvelope, PhysicalConstants, build_initial_state


@pytest.fixture(scope="session")
def natural():
    return PhysicalConstants()


@pytest.fixture(scope="session")
def small_spec():
    return GridSpec.centered(32, 16.0)


@pytest.fixture(scope="session")
def ring_setup():
    """Unit-quantum ring on a 64^3 grid, lifted half a cell off the grid planes."""
    spec = GridSpec.centered(64, 12.0)
    h = spec.spacing[0]
    curve = circle_curve(1.5, center=(0.0, 0.0, h / 2), samples=128)
    link = Link((curve,), 2.0 * math.pi)
    mesh = disk_mesh(curve)
    return spec, link, mesh


@pytest.fixture(scope="session")
def ring_state(ring_setup, natural):
    spec, link, mesh = ring_setup
    return build_initial_state(spec, link, mesh, 2, natural, GaussianEnvelope(width=1.0))


def rel_err(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
