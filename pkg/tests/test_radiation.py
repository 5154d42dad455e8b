from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from mvortex.errors import MaskFractionError
from mvortex.evolution import EvolveConfig, evolve_nonlinear, stability_bound
from mvortex.exact import FreeGaussian, HarmonicCoherentState
from mvortex.grid import ComplexGrid3, GridSpec, RealGrid3
from mvortex.radiation import (
    acceleration_moments,
    ab_energy_loss,
    bec_power,
    bec_power_nonlinear,
    circulation_sweep,
    classical_larmor,
    cumulative_trapezoid,
    nonlinear_power,
    power_series,
    quantum_larmor,
    read_power_csv,
    write_power_csv,
)
from mvortex.wavefunction import PhysicalConstants

C = PhysicalConstants()
SPEC = GridSpec.centered(48, 20.0)


def packet_amplitude(spec=SPEC, t=0.3):
    return RealGrid3(spec, FreeGaussian(1.0, (0.2, 0.0, -0.1), (0.3, 0.0, 0.0), C).fields(spec, t)[0])


# ------------------------------------------------------------ classical
def test_classical_larmor_values():
    assert classical_larmor(1.0, [0.0, 0.0, 0.0], 1.0) == 0.0
    assert_allclose(classical_larmor(1.0, [0.0, 1.0, 0.0], 1.0), 2.0 / 3.0, rtol=1e-15)
    a = np.array([0.3, -0.4, 1.2])
    assert_allclose(classical_larmor(2.0, 2 * a, 3.0), 4 * classical_larmor(2.0, a, 3.0), rtol=1e-15)


# ------------------------------------------------------------ quantum Larmor
def test_quantum_larmor_constant_potential():
    rho = RealGrid3(SPEC, packet_amplitude().values ** 2)
    # the one-sided edge stencil leaves only rounding in the gradient of a constant
    assert_allclose(quantum_larmor(rho, np.full(SPEC.dims, 3.7), C), 0.0, atol=1e-30)


@pytest.mark.parametrize("omega", [0.7, 1.0, 1.6])
def test_quantum_larmor_harmonic_ground_state(omega):
    sol = HarmonicCoherentState(omega, constants=C)
    R, _ = sol.fields(SPEC, 0.0)
    P = quantum_larmor(RealGrid3(SPEC, R * R), sol.potential(SPEC), C)
    exact = C.charge ** 2 * C.hbar * omega ** 3 / (C.mass * C.c ** 3)
    assert abs(P / exact - 1.0) < 1e-6


def test_quantum_larmor_general_constants():
    c = PhysicalConstants(hbar=1.3, mass=0.8, charge=0.5, c=2.0)
    sol = HarmonicCoherentState(1.1, constants=c)
    R, _ = sol.fields(SPEC, 0.0)
    P = quantum_larmor(RealGrid3(SPEC, R * R), sol.potential(SPEC), c)
    assert_allclose(P, c.charge ** 2 * c.hbar * 1.1 ** 3 / (c.mass * c.c ** 3), rtol=1e-6)


def test_quantum_larmor_translation_uniform_force():
    X, Y, Z = SPEC.mesh()
    U = 0.4 * X - 0.2 * Y + 0.1 * Z
    g = lambda c: RealGrid3(SPEC, np.exp(-((X - c) ** 2 + Y ** 2 + Z ** 2)) / math.pi ** 1.5)  # noqa: E731
    p0 = quantum_larmor(g(0.0), U, C)
    assert_allclose(quantum_larmor(g(1.5), U, C), p0, rtol=1e-12)
    assert_allclose(p0, (2.0 / 3.0) * (0.16 + 0.04 + 0.01), rtol=1e-10)


def test_quantum_larmor_gradient_routes():
    sol = HarmonicCoherentState(1.0, constants=C)
    R, _ = sol.fields(SPEC, 0.0)
    rho = RealGrid3(SPEC, R * R)
    a = quantum_larmor(rho, sol.potential(SPEC), C, gradient="fd")
    # the quadratic potential is not periodic, so the spectral gradient is only
    # accurate where the density lives
    b = quantum_larmor(rho, sol.potential(SPEC), C, gradient="spectral")
    assert abs(b / a - 1.0) < 1e-2
    with pytest.raises(ValueError):
        quantum_larmor(rho, sol.potential(SPEC), C, gradient="bogus")


# ------------------------------------------------------------ nonlinear power
@pytest.mark.parametrize("nu", [1.0, -1.0])
def test_nonlinear_power_zero_at_unit_nu(nu):
    assert nonlinear_power(packet_amplitude(), nu, C).power == 0.0


def test_nonlinear_power_positive():
    assert nonlinear_power(packet_amplitude(), 1.5, C).power > 0.0


def test_nonlinear_power_scaling_exact():
    R = packet_amplitude()
    ratio = nonlinear_power(R, 2.0, C).power / nonlinear_power(R, math.sqrt(2.0), C).power
    assert abs(ratio / 9.0 - 1.0) < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 4.0), st.floats(0.05, 4.0))
def test_nonlinear_power_scaling_law(nu, nu2):
    if min(abs(nu - 1.0), abs(nu2 - 1.0)) < 1e-3:
        return
    R = packet_amplitude()
    a = nonlinear_power(R, nu, C).power
    b = nonlinear_power(R, nu2, C).power
    assert a >= 0.0 and b >= 0.0
    assert_allclose(a / b, ((nu * nu - 1) / (nu2 * nu2 - 1)) ** 2, rtol=1e-12)


def test_nonlinear_power_accepts_wavefunction():
    R = packet_amplitude()
    psi = ComplexGrid3(SPEC, R.values * np.exp(0.3j))
    assert_allclose(nonlinear_power(psi, 2.0, C).power, nonlinear_power(R, 2.0, C).power, rtol=1e-14)


def test_nonlinear_power_mask_abort():
    R = np.ones(SPEC.dims)
    R[10:38, 10:38, 10:38] = 0.0
    with pytest.raises(MaskFractionError):
        nonlinear_power(RealGrid3(SPEC, R), 2.0, C)


def test_circulation_sweep_vanishes_at_quantum():
    R = packet_amplitude()
    gammas = 2.0 * math.pi * np.array([0.5, 0.8, 0.95, 0.99, 1.0])
    sweep = circulation_sweep(R, gammas, C)
    assert_allclose(sweep.nus, gammas / (2.0 * math.pi), rtol=1e-15)
    assert sweep.power[-1] == 0.0
    assert np.all(np.diff(sweep.power) < 0.0)
    # with M = 2 the power vanishes at twice the circulation
    assert circulation_sweep(R, [4.0 * math.pi], C, m_index=2).power[0] == 0.0


# ------------------------------------------------------------ coherent term
def test_coherent_acceleration_vanishes():
    mom = acceleration_moments(packet_amplitude(), C)
    assert np.linalg.norm(mom.mean) < 1e-6 * mom.mean_abs
    assert mom.mean_sq > 0.0


def test_bec_examples():
    a = np.array([0.2, 0.0, 0.0])
    single = bec_power([0, 0, 0], 0.5, 1, C)
    assert_allclose(single, (2.0 / 3.0) * 0.5, rtol=1e-15)
    assert_allclose(bec_power([0, 0, 0], 0.5, 10, C), 10 * single, rtol=1e-15)
    big = bec_power(a, 0.5, 1e6, C)
    assert_allclose(big / (1e12 * (2.0 / 3.0) * 0.04), 1.0, rtol=1e-4)
    with pytest.raises(ValueError):
        bec_power(a, 0.5, 0.5, C)


def test_bec_nonlinear_linear_in_n():
    R = packet_amplitude()
    p1 = bec_power_nonlinear(R, 2.0, 1, C)
    p100 = bec_power_nonlinear(R, 2.0, 100, C)
    assert_allclose(p100 / p1, 100.0, rtol=1e-6)
    assert_allclose(p1, nonlinear_power(R, 2.0, C).power, rtol=1e-12)


# ------------------------------------------------------------ series
@pytest.fixture(scope="module")
def nu_two_run():
    sol = FreeGaussian(1.0, (0.0, 0.0, 0.0), (0.5, 0.0, 0.0), C)
    spec = GridSpec.centered(32, 16.0)
    R0, th0 = sol.fields(spec, 0.0)
    nu = 2.0
    dt = 0.5 * stability_bound(spec, C, nu)
    cfg = EvolveConfig(dt=dt, steps=40, nu=nu, snapshot_stride=1)
    res = evolve_nonlinear(ComplexGrid3(spec, R0 * np.exp(1j * th0 / nu)), cfg, C)
    return res, dt


def test_series_monotone(nu_two_run):
    res, dt = nu_two_run
    frames = [s.psi for s in res.snapshots]
    total, series = ab_energy_loss(frames, 2.0, C, dt)
    assert total > 0.0
    assert np.all(series.power > 0.0)
    assert np.all(np.diff(series.emitted) > 0.0)
    short, _ = ab_energy_loss(frames[:20], 2.0, C, dt)
    assert short < total


def test_series_zero_at_unit_nu(nu_two_run):
    res, dt = nu_two_run
    total, series = ab_energy_loss([s.psi for s in res.snapshots], 1.0, C, dt)
    assert total == 0.0 and np.all(series.power == 0.0)


def test_richardson_spacing(nu_two_run):
    res, dt = nu_two_run
    frames = [s.psi for s in res.snapshots]
    fine, _ = ab_energy_loss(frames, 2.0, C, dt)
    coarse, _ = ab_energy_loss(frames[::2], 2.0, C, 2 * dt)
    assert abs(coarse / fine - 1.0) < 1e-2


def test_trapezoid_and_csv_roundtrip(tmp_path, nu_two_run):
    res, dt = nu_two_run
    frames = [s.psi for s in res.snapshots]
    times = dt * np.arange(len(frames))
    series = power_series(frames, times, 2.0, C)
    assert_allclose(series.emitted[-1], np.trapezoid(series.power, times), rtol=1e-12)
    path = write_power_csv(series, tmp_path / "p.csv")
    assert path.read_text().splitlines()[0] == "t,P,emitted,mask_fraction"
    back = read_power_csv(path)
    for a, b in zip((series.times, series.power, series.emitted, series.mask_fraction),
                    (back.times, back.power, back.emitted, back.mask_fraction)):
        assert np.array_equal(a, b)


def test_series_length_mismatch():
    with pytest.raises(ValueError):
        power_series([packet_amplitude()], [0.0, 1.0], 2.0, C)


def test_cumulative_trapezoid_edge_cases():
    assert_allclose(cumulative_trapezoid(np.array([0.0]), np.array([3.0])), [0.0])
    assert_allclose(cumulative_trapezoid(np.array([0.0, 1.0, 3.0]), np.array([1.0, 1.0, 1.0])), [0.0, 1.0, 3.0])
