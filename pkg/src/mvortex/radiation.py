"""Radiated-power diagnostics.

All formulas carry the Coulomb prefactor ``k`` from :class:`PhysicalConstants`
(1 in Gaussian and natural units), so ``P = (2/3) k q^2 a^2 / c^3``.
Everything here is passive: no function modifies a wavefunction.
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import MaskFractionError
from .grid import ComplexGrid3, GridSpec, RealGrid3, grad_array
from .madelung import MASK_REL, bohm_force_density, grad_q_squared_density, node_mask
from .wavefunction import PhysicalConstants, select_nu

MAX_MASK_FRACTION = 0.1


def _prefactor(constants: PhysicalConstants) -> float:
    return (2.0 / 3.0) * constants.coulomb * constants.charge ** 2 / constants.c ** 3


def classical_larmor(q: float, a, c: float, coulomb: float = 1.0) -> float:
    """``(2/3) k q^2 |a|^2 / c^3``."""
    a = np.asarray(a, dtype=float)
    return float((2.0 / 3.0) * coulomb * q * q * np.dot(a, a) / c ** 3)


def quantum_larmor(rho: RealGrid3, U: RealGrid3 | NDArray, constants: PhysicalConstants, gradient: str = "fd") -> float:
    """``(2/3) k q^2 / c^3 * int rho |grad U / m|^2``.

    ``gradient="fd"`` uses second-order one-sided/central differences
    (exact for linear and quadratic ``U``, no periodicity assumed);
    ``"spectral"`` uses the periodic spectral gradient.
    """
    spec = rho.spec
    u = U.values if isinstance(U, RealGrid3) else np.asarray(U, dtype=float)
    if gradient == "fd":
        g = np.stack(np.gradient(u, *spec.spacing, edge_order=2))
    elif gradient == "spectral":
        g = grad_array(u, spec)
    else:
        raise ValueError(f"unknown gradient method {gradient!r}")
    a2 = np.sum(g * g, axis=0) / constants.mass ** 2
    return float(_prefactor(constants) * np.sum(rho.values * a2) * spec.cell_volume)


@dataclass(frozen=True)
class PowerResult:
    power: float
    mask_fraction: float
    excluded_volume: float


def _amplitude(R) -> tuple[NDArray, GridSpec]:
    if isinstance(R, ComplexGrid3):
        return np.abs(R.values), R.spec
    return np.asarray(R.values, dtype=float), R.spec


def nonlinear_power(
    R: RealGrid3 | ComplexGrid3,
    nu: float,
    constants: PhysicalConstants,
    mask_rel: float = MASK_REL,
    max_mask_fraction: float = MAX_MASK_FRACTION,
) -> PowerResult:
    """``(2/3) k q^2/c^3 (nu^2-1)^2 int rho |grad Q_B / m|^2``.

    Exactly zero when ``nu^2 == 1``.  Low-amplitude points are excluded from
    the quadrature; their volume is reported.

    Raises
    ------
    MaskFractionError
        If interior nodes cover more than ``max_mask_fraction`` of the grid.
    """
    vals, spec = _amplitude(R)
    mask = node_mask(vals, mask_rel)
    excluded = float(mask.excluded.sum() * spec.cell_volume)
    if mask.node_fraction > max_mask_fraction:
        raise MaskFractionError(f"node mask covers {mask.node_fraction:.1%} of the grid (limit {max_mask_fraction:.0%})")
    factor = (nu * nu - 1.0) ** 2
    if factor == 0.0:
        return PowerResult(0.0, mask.node_fraction, excluded)
    dens = grad_q_squared_density(vals, spec, constants, mask.excluded)
    integral = float(np.sum(dens)) * spec.cell_volume / constants.mass ** 2
    return PowerResult(_prefactor(constants) * factor * integral, mask.node_fraction, excluded)


@dataclass(frozen=True)
class AccelerationMoments:
    """``<a>``, ``<|a|>`` and ``<|a|^2>`` for ``a = -coef grad Q_B / m``."""

    mean: NDArray[np.float64]
    mean_abs: float
    mean_sq: float


def acceleration_moments(R: RealGrid3 | ComplexGrid3, constants: PhysicalConstants, coef: float = 1.0,
                         mask_rel: float = MASK_REL) -> AccelerationMoments:
    vals, spec = _amplitude(R)
    mask = node_mask(vals, mask_rel)
    f = bohm_force_density(vals, spec, constants)  # rho grad Q_B
    f = np.where(mask.nodes[None], 0.0, f)
    dv = spec.cell_volume
    m = constants.mass
    mean = -coef * f.sum(axis=(1, 2, 3)) * dv / m
    mean_abs = abs(coef) * float(np.sum(np.sqrt(np.sum(f * f, axis=0)))) * dv / m
    mean_sq = coef * coef * float(np.sum(grad_q_squared_density(vals, spec, constants, mask.excluded))) * dv / m ** 2
    return AccelerationMoments(mean, mean_abs, mean_sq)


def bec_power(expect_a, expect_a2: float, n_particles: float, constants: PhysicalConstants) -> float:
    """Coherent ``N^2 |<a>|^2`` plus incoherent ``N <a^2>`` Larmor terms."""
    if n_particles < 1:
        raise ValueError("particle number must be >= 1")
    a = np.asarray(expect_a, dtype=float)
    pre = _prefactor(constants)
    return float(n_particles ** 2 * pre * np.dot(a, a) + n_particles * pre * expect_a2)


def bec_power_nonlinear(R, nu: float, n_particles: float, constants: PhysicalConstants) -> float:
    """Two-term power with the acceleration of the nonlinear force ``(nu^2-1) grad Q_B / m``."""
    mom = acceleration_moments(R, constants, coef=nu * nu - 1.0)
    return bec_power(mom.mean, mom.mean_sq, n_particles, constants)


@dataclass(frozen=True)
class CirculationSweep:
    gammas: NDArray[np.float64]
    nus: NDArray[np.float64]
    power: NDArray[np.float64]


def circulation_sweep(R: RealGrid3 | ComplexGrid3, gammas: Sequence[float], constants: PhysicalConstants,
                      m_index: int = 1, mask_rel: float = MASK_REL) -> CirculationSweep:
    """Nonlinear power of a fixed amplitude as the circulation is varied.

    Each ``gamma`` is mapped to ``nu`` by :func:`select_nu`; the power vanishes
    as ``m gamma`` approaches ``2 pi M hbar``.  This is a static scan over
    parameters and implies no dynamical law for how ``gamma`` would change.
    """
    g = np.asarray(gammas, dtype=float)
    nus = np.array([select_nu(x, constants, m_index).nu for x in g])
    P = np.array([nonlinear_power(R, nu, constants, mask_rel).power for nu in nus])
    return CirculationSweep(g, nus, P)


# ------------------------------------------------------------ series
@dataclass(frozen=True)
class PowerSeries:
    times: NDArray[np.float64]
    power: NDArray[np.float64]
    emitted: NDArray[np.float64]
    mask_fraction: NDArray[np.float64]

    @property
    def total(self) -> float:
        return float(self.emitted[-1]) if len(self.emitted) else 0.0


def cumulative_trapezoid(times: NDArray, values: NDArray) -> NDArray:
    out = np.zeros(len(values))
    if len(values) > 1:
        out[1:] = np.cumsum(0.5 * (values[1:] + values[:-1]) * np.diff(times))
    return out


def power_series(frames: Sequence, times: Sequence[float], nu: float, constants: PhysicalConstants,
                 mask_rel: float = MASK_REL) -> PowerSeries:
    """``P(t_i)`` for each frame (amplitude or wavefunction grid) with trapezoidal emitted energy."""
    times = np.asarray(times, dtype=float)
    if len(frames) != len(times):
        raise ValueError("one time per frame required")
    res = [nonlinear_power(f, nu, constants, mask_rel) for f in frames]
    P = np.array([r.power for r in res])
    mf = np.array([r.mask_fraction for r in res])
    return PowerSeries(times, P, cumulative_trapezoid(times, P), mf)


def ab_energy_loss(psi_series: Sequence[ComplexGrid3], nu: float, constants: PhysicalConstants, dt: float,
                   mask_rel: float = MASK_REL) -> tuple[float, PowerSeries]:
    """Energy radiated along an evolution: trapezoid of ``P`` over frames spaced by ``dt``."""
    times = dt * np.arange(len(psi_series))
    series = power_series(list(psi_series), times, nu, constants, mask_rel)
    return series.total, series


def write_power_csv(series: PowerSeries, path: str | os.PathLike) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "P", "emitted", "mask_fraction"])
        for row in zip(series.times.tolist(), series.power.tolist(), series.emitted.tolist(), series.mask_fraction.tolist()):
            w.writerow([repr(float(v)) for v in row])
    return path


def read_power_csv(path: str | os.PathLike) -> PowerSeries:
    with Path(path).open() as fh:
        rows = list(csv.DictReader(fh))
    col = lambda k: np.array([float(r[k]) for r in rows])  # noqa: E731
    return PowerSeries(col("t"), col("P"), col("emitted"), col("mask_fraction"))
