"""Closed-form solutions of the Schrodinger equation used as oracles.

Each solution returns the amplitude ``R`` and the unwrapped phase
``theta = S / hbar`` on a grid at time ``t``, so residual checks can form both
``R exp(i theta)`` and ``R exp(i theta / nu)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .grid import ComplexGrid3, GridSpec
from .wavefunction import PhysicalConstants


def _axes_mesh(spec: GridSpec):
    return spec.mesh()


@dataclass(frozen=True)
class FreeGaussian:
    """Free Gaussian packet of initial width ``sigma0`` (of ``|psi|^2``) and wavevector ``k0``."""

    sigma0: float
    x0: tuple[float, float, float] = (0.0, 0.0, 0.0)
    k0: tuple[float, float, float] = (0.0, 0.0, 0.0)
    constants: PhysicalConstants = PhysicalConstants()

    def tau(self, t: float) -> float:
        c = self.constants
        return c.hbar * t / (2.0 * c.mass * self.sigma0 ** 2)

    def width(self, t: float) -> float:
        """Standard deviation of ``|psi|^2`` along each axis."""
        return self.sigma0 * np.sqrt(1.0 + self.tau(t) ** 2)

    def fields(self, spec: GridSpec, t: float) -> tuple[NDArray, NDArray]:
        c = self.constants
        s0 = self.sigma0
        tau = self.tau(t)
        R = np.ones(spec.dims)
        theta = np.zeros(spec.dims)
        for a, x in enumerate(_axes_mesh(spec)):
            k = self.k0[a]
            v = c.hbar * k / c.mass
            xi = x - self.x0[a] - v * t
            R = R * (2.0 * np.pi * s0 ** 2 * (1.0 + tau ** 2)) ** -0.25 * np.exp(
                -(xi ** 2) / (4.0 * s0 ** 2 * (1.0 + tau ** 2))
            )
            theta = theta + (
                xi ** 2 * tau / (4.0 * s0 ** 2 * (1.0 + tau ** 2))
                + k * (x - self.x0[a])
                - k * k * c.hbar * t / (2.0 * c.mass)
                - 0.5 * np.arctan(tau)
            )
        return R, theta

    def psi(self, spec: GridSpec, t: float) -> ComplexGrid3:
        R, th = self.fields(spec, t)
        return ComplexGrid3(spec, R * np.exp(1j * th))

    def potential(self, spec: GridSpec) -> NDArray:
        return np.zeros(spec.dims)


@dataclass(frozen=True)
class HarmonicCoherentState:
    """Displaced ground state of the isotropic oscillator ``V = m omega^2 |x|^2 / 2``.

    The packet center follows ``amplitude * cos(omega t)`` per axis and the
    shape never changes; ``amplitude = 0`` gives the stationary ground state
    with energy ``3 hbar omega / 2``.
    """

    omega: float
    amplitude: tuple[float, float, float] = (0.0, 0.0, 0.0)
    constants: PhysicalConstants = PhysicalConstants()

    @property
    def energy(self) -> float:
        c = self.constants
        a2 = float(np.dot(self.amplitude, self.amplitude))
        return 1.5 * c.hbar * self.omega + 0.5 * c.mass * self.omega ** 2 * a2

    def center(self, t: float) -> NDArray:
        return np.asarray(self.amplitude, dtype=float) * np.cos(self.omega * t)

    def fields(self, spec: GridSpec, t: float) -> tuple[NDArray, NDArray]:
        c = self.constants
        mw = c.mass * self.omega / c.hbar
        R = np.ones(spec.dims)
        theta = np.full(spec.dims, -1.5 * self.omega * t)
        for a, x in enumerate(_axes_mesh(spec)):
            A = self.amplitude[a]
            xc = A * np.cos(self.omega * t)
            pc = -c.mass * self.omega * A * np.sin(self.omega * t)
            R = R * (mw / np.pi) ** 0.25 * np.exp(-0.5 * mw * (x - xc) ** 2)
            theta = theta + pc * (x - 0.5 * xc) / c.hbar
        return R, theta

    def psi(self, spec: GridSpec, t: float) -> ComplexGrid3:
        R, th = self.fields(spec, t)
        return ComplexGrid3(spec, R * np.exp(1j * th))

    def potential(self, spec: GridSpec) -> NDArray:
        X, Y, Z = spec.mesh()
        return 0.5 * self.constants.mass * self.omega ** 2 * (X * X + Y * Y + Z * Z)


@dataclass(frozen=True)
class GaugeShifted:
    """A zero-field solution carried to a uniform vector potential ``A``.

    With ``H = (-i hbar grad + q A)^2 / 2m + V`` and constant ``A``, the
    shifted solution is ``psi_0 exp(-i q A.x / hbar)``.
    """

    base: FreeGaussian | HarmonicCoherentState
    A: tuple[float, float, float]

    @property
    def constants(self) -> PhysicalConstants:
        return self.base.constants

    def fields(self, spec: GridSpec, t: float) -> tuple[NDArray, NDArray]:
        R, theta = self.base.fields(spec, t)
        c = self.constants
        X, Y, Z = spec.mesh()
        shift = c.charge * (self.A[0] * X + self.A[1] * Y + self.A[2] * Z) / c.hbar
        return R, theta - shift

    def vector_potential(self, spec: GridSpec) -> NDArray:
        return np.broadcast_to(np.asarray(self.A, dtype=float)[:, None, None, None], (3, *spec.dims)).copy()

    def potential(self, spec: GridSpec) -> NDArray:
        return self.base.potential(spec)
