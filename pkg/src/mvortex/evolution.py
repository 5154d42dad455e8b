"""Strang split-step evolution of the linear and nu-transformed equations.

Both equations share one integrator with effective Planck constant
``hbar_e = nu hbar``:

    i hbar_e d_t psi = [-(hbar_e^2 / 2m) Lap + W] psi,
    W = V + (hbar^2 / 2m)(nu^2 - 1) Lap(R) / R,

where the nonlinear part of ``W`` is skipped when ``nu^2 == 1`` so that the
linear case follows exactly the same arithmetic.  Consecutive half kinetic
steps are merged between snapshots; each snapshot interval starts and ends
with a half step, so restarting from any snapshot reproduces the
uninterrupted run bit for bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.fft as sfft
from numpy.typing import NDArray

from .errors import FixedPointError, MaskFractionError, NormDriftError, StabilityError
from .grid import ComplexGrid3, GridSpec, fft_workers, laplacian_array
from .madelung import MASK_REL, node_mask
from .wavefunction import PhysicalConstants

NORM_TOL = 1e-6
MAX_MASK_FRACTION = 0.1


@dataclass(frozen=True)
class EvolveConfig:
    """Time-stepping parameters.

    ``potential`` is a real array on the grid (``None`` for ``V = 0``).
    """

    dt: float
    steps: int
    potential: NDArray | None = None
    nu: float = 1.0
    snapshot_stride: int = 1
    max_iterations: int = 5
    fixed_point_tol: float = 1e-10
    mask_rel: float = MASK_REL
    max_mask_fraction: float = MAX_MASK_FRACTION
    norm_tol: float = NORM_TOL
    check_stability: bool = True

    def __post_init__(self):
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ValueError("dt must be positive")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError("steps must be a positive integer")
        if self.nu == 0 or not np.isfinite(self.nu):
            raise ValueError("nu must be finite and non-zero")
        if int(self.snapshot_stride) != self.snapshot_stride or self.snapshot_stride < 1:
            raise ValueError("snapshot_stride must be a positive integer")
        if self.potential is not None:
            v = np.asarray(self.potential)
            if np.iscomplexobj(v) or not np.all(np.isfinite(v)):
                raise ValueError("potential must be real and finite")


def stability_bound(spec: GridSpec, constants: PhysicalConstants, nu: float) -> float:
    """``0.5 m h^2 / (pi hbar |nu|)`` for the finest spacing ``h``."""
    h = min(spec.spacing)
    return 0.5 * constants.mass * h * h / (math.pi * constants.hbar * abs(nu))


@dataclass(frozen=True)
class Snapshot:
    step: int
    time: float
    psi: ComplexGrid3


@dataclass(frozen=True)
class MonitorRecord:
    step: int
    time: float
    norm: float
    energy: float
    mask_fraction: float

    def as_row(self) -> list:
        return [self.step, self.time, self.norm, self.energy, self.mask_fraction]


@dataclass
class EvolutionResult:
    snapshots: list[Snapshot] = field(default_factory=list)
    monitors: list[MonitorRecord] = field(default_factory=list)
    iterations: list[int] = field(default_factory=list)

    @property
    def final(self) -> ComplexGrid3:
        return self.snapshots[-1].psi


class SplitStepper:
    """Strang integrator for one grid, potential and ``nu``."""

    def __init__(self, spec: GridSpec, config: EvolveConfig, constants: PhysicalConstants, direction: int = 1):
        self.spec = spec
        self.config = config
        self.constants = constants
        self.nu = float(config.nu)
        self.hbar_e = self.nu * constants.hbar
        self.dt = direction * config.dt
        self.V = None if config.potential is None else np.asarray(config.potential, dtype=float)
        if self.V is not None and self.V.shape != spec.dims:
            raise ValueError("potential grid does not match the wavefunction grid")
        k2 = spec._k_cache.k2
        m = constants.mass
        self.half_kin = np.exp(-1j * self.hbar_e * k2 * self.dt / (4.0 * m))
        self.full_kin = np.exp(-1j * self.hbar_e * k2 * self.dt / (2.0 * m))
        self.nl_coef = constants.hbar ** 2 / (2.0 * m) * (self.nu * self.nu - 1.0)

    def _kinetic(self, psi: NDArray, factor: NDArray) -> NDArray:
        w = fft_workers()
        return sfft.ifftn(factor * sfft.fftn(psi, workers=w), workers=w)

    def effective_potential(self, psi: NDArray) -> tuple[NDArray | None, float]:
        """``W`` for the current amplitude and the node-mask fraction."""
        W = self.V
        if self.nl_coef == 0.0:
            return W, 0.0
        R = np.abs(psi)
        mask = node_mask(R, self.config.mask_rel)
        if mask.node_fraction > self.config.max_mask_fraction:
            raise MaskFractionError(
                f"node mask covers {mask.node_fraction:.1%} of the grid "
                f"(limit {self.config.max_mask_fraction:.0%})"
            )
        lap = laplacian_array(R, self.spec)
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(mask.excluded, 0.0, lap / np.where(mask.excluded, 1.0, R))
        nl = self.nl_coef * q
        return (nl if W is None else W + nl), mask.node_fraction

    def _potential_step(self, psi: NDArray) -> tuple[NDArray, int]:
        W, _ = self.effective_potential(psi)
        if W is None:
            return psi, 0
        out = psi * np.exp(-1j * W * (self.dt / self.hbar_e))
        if self.nl_coef == 0.0:
            return out, 1
        # W depends on R only, and the potential substep leaves R unchanged,
        # so the fixed point is reached once R stops changing.
        R_ref = np.abs(psi)
        for it in range(1, self.config.max_iterations + 1):
            R_new = np.abs(out)
            change = float(np.max(np.abs(R_new - R_ref)) / max(np.max(R_ref), 1e-300))
            if change <= self.config.fixed_point_tol:
                return out, it
            W, _ = self.effective_potential(out)
            R_ref = R_new
            out = psi * np.exp(-1j * W * (self.dt / self.hbar_e))
        raise FixedPointError(
            f"self-consistent potential did not converge in {self.config.max_iterations} iterations"
        )

    def advance(self, psi: NDArray, nsteps: int, iterations: list[int] | None = None) -> NDArray:
        """Advance ``nsteps`` full steps with merged interior half steps."""
        psi = self._kinetic(psi, self.half_kin)
        for k in range(nsteps):
            psi, it = self._potential_step(psi)
            if iterations is not None:
                iterations.append(it)
            psi = self._kinetic(psi, self.full_kin if k < nsteps - 1 else self.half_kin)
        return psi


def energy(psi: NDArray, spec: GridSpec, constants: PhysicalConstants, nu: float = 1.0, V: NDArray | None = None, mask_rel: float = MASK_REL) -> float:
    """``<psi|H|psi>`` for the equation with Planck constant ``nu hbar``.

    The nonlinear term contributes ``(hbar^2/2m)(nu^2-1) int R Lap(R)``; for
    ``psi_nu`` built from a linear solution this equals the linear energy.
    """
    m = constants.mass
    he = nu * constants.hbar
    dv = spec.cell_volume
    lap = laplacian_array(psi, spec)
    e = float(np.real(np.vdot(psi, -(he * he / (2.0 * m)) * lap))) * dv
    if V is not None:
        e += float(np.sum(V * np.abs(psi) ** 2)) * dv
    if nu * nu != 1.0:
        R = np.abs(psi)
        e += constants.hbar ** 2 / (2.0 * m) * (nu * nu - 1.0) * float(np.sum(R * laplacian_array(R, spec))) * dv
    return e


def monitor_state(step: int, t: float, psi: NDArray, spec: GridSpec, constants: PhysicalConstants, config: EvolveConfig) -> MonitorRecord:
    norm = float(np.sum(np.abs(psi) ** 2)) * spec.cell_volume
    mask = node_mask(np.abs(psi), config.mask_rel)
    return MonitorRecord(step, t, norm, energy(psi, spec, constants, config.nu, config.potential, config.mask_rel), mask.node_fraction)


def monitor(series, constants: PhysicalConstants, config: EvolveConfig) -> list[MonitorRecord]:
    """Norm, energy and node-mask fraction for each snapshot of ``series``."""
    snaps = series.snapshots if isinstance(series, EvolutionResult) else list(series)
    return [monitor_state(s.step, s.time, s.psi.values, s.psi.spec, constants, config) for s in snaps]


def _run(psi0: ComplexGrid3, config: EvolveConfig, constants: PhysicalConstants,
         start_step: int = 0, keep_snapshots: bool = True,
         on_snapshot: Callable[[Snapshot, MonitorRecord], None] | None = None,
         direction: int = 1) -> EvolutionResult:
    spec = psi0.spec
    if config.check_stability:
        bound = stability_bound(spec, constants, config.nu)
        if config.dt > bound:
            raise StabilityError(
                f"unstable time step: dt = {config.dt:.6g} exceeds the bound 0.5 m h^2/(pi hbar nu) = {bound:.6g}; "
                "norm drift cannot be controlled beyond it"
            )
    stepper = SplitStepper(spec, config, constants, direction)
    result = EvolutionResult()
    psi = np.array(psi0.values, dtype=np.complex128)
    t0 = start_step * config.dt * direction
    rec0 = monitor_state(start_step, t0, psi, spec, constants, config)
    norm0 = rec0.norm
    snap0 = Snapshot(start_step, t0, ComplexGrid3(spec, psi.copy()))
    if keep_snapshots:
        result.snapshots.append(snap0)
    result.monitors.append(rec0)
    if on_snapshot is not None:
        on_snapshot(snap0, rec0)
    step = start_step
    end = start_step + config.steps
    while step < end:
        n = min(config.snapshot_stride, end - step)
        psi = stepper.advance(psi, n, result.iterations)
        step += n
        if not np.all(np.isfinite(psi)):
            raise NormDriftError(f"norm drift: non-finite values at step {step}")
        t = step * config.dt * direction
        rec = monitor_state(step, t, psi, spec, constants, config)
        drift = abs(rec.norm - norm0) / norm0
        if drift > config.norm_tol:
            raise NormDriftError(f"norm drift {drift:.3e} exceeds {config.norm_tol:.1e} at step {step}")
        snap = Snapshot(step, t, ComplexGrid3(spec, psi.copy()))
        if keep_snapshots:
            result.snapshots.append(snap)
        result.monitors.append(rec)
        if on_snapshot is not None:
            on_snapshot(snap, rec)
    return result


def evolve_linear(psi0: ComplexGrid3, config: EvolveConfig, constants: PhysicalConstants, **kw) -> EvolutionResult:
    """Evolve the linear equation; ``config.nu`` must be 1."""
    if config.nu != 1.0:
        raise ValueError("evolve_linear needs nu = 1; use evolve_nonlinear otherwise")
    return _run(psi0, config, constants, **kw)


def evolve_nonlinear(psi_nu0: ComplexGrid3, config: EvolveConfig, constants: PhysicalConstants, **kw) -> EvolutionResult:
    """Evolve the single-valued nu-transformed equation starting from ``psi_nu0``.

    With ``nu = 1`` this is the linear evolution, computed identically.

    Raises
    ------
    FixedPointError, MaskFractionError, NormDriftError, StabilityError
    """
    return _run(psi_nu0, config, constants, **kw)


def evolve(psi0: ComplexGrid3, config: EvolveConfig, constants: PhysicalConstants, **kw) -> EvolutionResult:
    return _run(psi0, config, constants, **kw)


@dataclass
class SuperpositionEvolution:
    """Independent evolutions of the components of a superposition."""

    components: list[EvolutionResult]
    nus: tuple[float, ...]
    max_overlap: float
    overlap_caveat: bool


def evolve_superposition(superposed, config: EvolveConfig, constants: PhysicalConstants, overlap_tol: float = 1e-3, **kw) -> SuperpositionEvolution:
    """Evolve each component's own transformed equation (``nu_j``) independently.

    Components that overlap (``|<psi_i|psi_j>| > overlap_tol``) raise the
    ``overlap_caveat`` flag: the decoupled treatment is then unjustified.
    """
    results = []
    for state, nu in zip(superposed.components, superposed.nus):
        cfg = EvolveConfig(**{**config.__dict__, "nu": nu})
        psi = state.psi_nu(nu) if hasattr(state, "psi_nu") else state
        results.append(_run(psi, cfg, constants, **kw))
    ov = superposed.max_offdiagonal_overlap()
    return SuperpositionEvolution(results, tuple(superposed.nus), ov, ov > overlap_tol)
