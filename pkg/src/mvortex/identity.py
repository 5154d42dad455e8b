"""Residual checks of the nonlinear nu-identity and solenoid field constructors.

For ``psi = R exp(i theta)`` (``theta = S / hbar``) solving

    [-(hbar^2/2m) Lap + V] psi = i hbar d_t psi,

the transformed ``psi_nu = R exp(i theta / nu)`` solves

    [-((nu hbar)^2/2m) Lap + V + (hbar^2/2m)(nu^2 - 1) Lap(R)/R] psi_nu = i nu hbar d_t psi_nu.

With a vector potential the kinetic operator becomes
``(-i hbar_e grad + q A)^2 / 2m`` with ``hbar_e = hbar`` or ``nu hbar``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import GaugeViolationError, MaskFractionError
from .geometry import _perp_basis
from .grid import GridSpec, VectorGrid3, divergence_array, grad_array, laplacian_array
from .madelung import MASK_REL, node_mask
from .wavefunction import PhysicalConstants, quantization_check, sheet_phase

MAX_MASK_FRACTION = 0.1
GAUGE_TOL = 1e-8


@dataclass(frozen=True)
class IdentityResult:
    nu: float
    res1: float
    res2: float
    mask_fraction: float

    def to_dict(self) -> dict:
        return {"nu": self.nu, "res1": self.res1, "res2": self.res2, "mask_fraction": self.mask_fraction}


def _values(g):
    return g.values if hasattr(g, "values") else np.asarray(g)


def _residual(R3, th3, V, nu, constants, dt, spec, keep, A=None, divA=None, form="exact"):
    """Relative L2 residual of the nu-equation on the middle slice."""
    hb = constants.hbar
    he = nu * hb
    m = constants.mass
    psis = [R * np.exp(1j * th / nu) for R, th in zip(R3, th3)]
    psi = psis[1]
    R = R3[1]
    lhs = -(he * he / (2.0 * m)) * laplacian_array(psi, spec)
    if A is not None:
        q = constants.charge
        g = grad_array(psi, spec)
        coupling = (
            -2j * he * q * np.sum(A * g, axis=0)
            - 1j * he * q * divA * psi
            + q * q * np.sum(A * A, axis=0) * psi
        ) / (2.0 * m)
        lhs = lhs + coupling
    lhs = lhs + V * psi
    if nu * nu - 1.0 != 0.0:
        lapR = laplacian_array(R, spec)
        phase = np.exp(1j * th3[1] / nu)
        lhs = lhs + (hb * hb / (2.0 * m)) * (nu * nu - 1.0) * lapR * phase
        if A is not None and form == "literal":
            gR = grad_array(R, spec)
            lhs = lhs + 1j * (nu - 1.0) * hb * constants.charge / m * np.sum(A * gR, axis=0) * phase
    rhs = 1j * he * (psis[2] - psis[0]) / (2.0 * dt)
    num = np.sqrt(np.sum(np.abs(lhs - rhs)[keep] ** 2))
    den = np.sqrt(np.sum(np.abs(rhs)[keep] ** 2))
    if den == 0.0:
        return 0.0 if num == 0.0 else float("inf")
    return float(num / den)


def _prepare(R_slices, theta_slices, V, mask_rel):
    if len(R_slices) != 3 or len(theta_slices) != 3:
        raise ValueError("need exactly three consecutive time slices (t - dt, t, t + dt)")
    R3 = [np.asarray(_values(r), dtype=float) for r in R_slices]
    th3 = [np.asarray(_values(t), dtype=float) for t in theta_slices]
    V = np.zeros(R3[1].shape) if V is None else np.asarray(_values(V), dtype=float)
    mask = node_mask(R3[1], mask_rel)
    if mask.node_fraction > MAX_MASK_FRACTION:
        raise MaskFractionError(f"node mask covers {mask.node_fraction:.1%} of the grid (limit 10%)")
    return R3, th3, V, mask


def identity_residual(
    spec: GridSpec,
    R_slices: Sequence,
    theta_slices: Sequence,
    V,
    nu: float,
    constants: PhysicalConstants,
    dt: float,
    mask_rel: float = MASK_REL,
) -> IdentityResult:
    """Residuals of the original (``res1``) and transformed (``res2``) equations.

    Parameters
    ----------
    R_slices, theta_slices : three arrays each
        Amplitude and unwrapped phase ``S / hbar`` at ``t - dt``, ``t``, ``t + dt``.
    V : array or None
        Real potential (zero if ``None``).

    Each residual is ``||LHS - RHS|| / ||RHS||`` over grid points outside the
    low-amplitude mask; space derivatives are spectral and the time
    derivative is a central difference.
    """
    R3, th3, V, mask = _prepare(R_slices, theta_slices, V, mask_rel)
    keep = ~mask.excluded
    res1 = _residual(R3, th3, V, 1.0, constants, dt, spec, keep)
    res2 = _residual(R3, th3, V, float(nu), constants, dt, spec, keep)
    return IdentityResult(float(nu), res1, res2, mask.node_fraction)


def gauge_violation(A: NDArray, spec: GridSpec, support: NDArray[np.bool_] | None = None) -> float:
    """``||div A|| / ||grad A||`` over ``support`` (whole grid by default), spectral derivatives."""
    div = divergence_array(A, spec)
    grads = np.stack([grad_array(A[a], spec) for a in range(3)])
    if support is None:
        support = np.ones(spec.dims, dtype=bool)
    num = np.sqrt(np.sum(div[support] ** 2))
    den = np.sqrt(np.sum(grads[:, :, support] ** 2))
    if den == 0.0:
        return 0.0 if num == 0.0 else np.inf
    return float(num / den)


def identity_residual_em(
    spec: GridSpec,
    R_slices: Sequence,
    theta_slices: Sequence,
    V,
    A: VectorGrid3 | NDArray,
    nu: float,
    constants: PhysicalConstants,
    dt: float,
    mask_rel: float = MASK_REL,
    form: str = "exact",
    gauge_tol: float = GAUGE_TOL,
) -> IdentityResult:
    """Residuals with minimal coupling to a transverse vector potential ``A``.

    ``form="exact"`` adds only ``(hbar^2/2m)(nu^2-1) Lap(R)/R`` to the
    transformed equation.  ``form="literal"`` uses the full bracket
    ``-[(-i nu hbar grad + qA)^2 - (-i hbar grad + qA)^2] R / (2m R)``, whose
    extra imaginary part ``i (nu-1) hbar q A.grad(R) / (m R)`` vanishes only
    when ``A`` is orthogonal to ``grad R``.

    Raises
    ------
    GaugeViolationError
        If ``gauge_violation(A)`` on the unmasked support exceeds ``gauge_tol``.
    """
    if form not in ("exact", "literal"):
        raise ValueError(f"unknown form {form!r}")
    A = np.asarray(_values(A), dtype=float)
    if A.shape != (3, *spec.dims):
        raise ValueError("A must have shape (3, nx, ny, nz)")
    R3, th3, V, mask = _prepare(R_slices, theta_slices, V, mask_rel)
    keep = ~mask.excluded
    gv = gauge_violation(A, spec, keep)
    if gv > gauge_tol:
        raise GaugeViolationError(f"vector potential is not transverse: |div A|/|grad A| = {gv:.3e} > {gauge_tol:.1e}")
    divA = divergence_array(A, spec)
    res1 = _residual(R3, th3, V, 1.0, constants, dt, spec, keep, A, divA, form)
    res2 = _residual(R3, th3, V, float(nu), constants, dt, spec, keep, A, divA, form)
    return IdentityResult(float(nu), res1, res2, mask.node_fraction)


# ------------------------------------------------------------ solenoid
@dataclass(frozen=True)
class SolenoidSpec:
    """Ideal infinite solenoid: axis through ``point`` along ``direction``."""

    point: tuple[float, float, float]
    direction: tuple[float, float, float]
    radius: float
    flux: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("solenoid radius must be positive")
        d = np.asarray(self.direction, dtype=float)
        if not np.linalg.norm(d) > 0:
            raise ValueError("solenoid direction must be non-zero")


def solenoid_vector_potential(spec: SolenoidSpec, x) -> NDArray:
    """Azimuthal ``A``: ``F/(2 pi rho)`` outside, ``F rho/(2 pi a^2)`` inside.

    The azimuthal direction is ``d x rho_hat``, so the enclosed flux is
    positive along ``direction``.  Divergence-free by construction.
    """
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    d = np.asarray(spec.direction, dtype=float)
    d = d / np.linalg.norm(d)
    r = pts - np.asarray(spec.point, dtype=float)
    rperp = r - np.outer(r @ d, d)
    rho = np.linalg.norm(rperp, axis=1)
    phi_dir = np.cross(d, rperp)  # magnitude rho
    a = spec.radius
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = np.where(rho > a, spec.flux / (2.0 * np.pi * rho * rho), spec.flux / (2.0 * np.pi * a * a))
    out = coef[:, None] * phi_dir
    return out[0] if np.ndim(x) == 1 else out


def solenoid_grid(
    spec: SolenoidSpec, grid: GridSpec, core: str = "sharp", window: float | None = None, window_power: int = 6
) -> VectorGrid3:
    """Sample the solenoid potential on ``grid``.

    ``core="smooth"`` replaces the enclosed-flux step by
    ``F (1 - exp(-rho^2/a^2))``, and ``window`` (a cylinder radius) multiplies
    by ``exp(-(rho/window)^window_power)``.  Both modifications keep ``A`` exactly
    azimuthal and hence divergence-free while making it smooth and
    periodic enough for spectral derivatives.
    """
    pts = grid.points()
    d = np.asarray(spec.direction, dtype=float)
    d = d / np.linalg.norm(d)
    r = pts - np.asarray(spec.point, dtype=float)
    rperp = r - np.outer(r @ d, d)
    rho2 = np.einsum("pk,pk->p", rperp, rperp)
    if core == "sharp":
        A = solenoid_vector_potential(spec, pts)
    elif core == "smooth":
        a2 = spec.radius ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            enclosed = np.where(rho2 > 1e-8 * a2, -np.expm1(-rho2 / a2) / rho2, 1.0 / a2)
        A = (spec.flux / (2.0 * np.pi)) * enclosed[:, None] * np.cross(d, rperp)
    else:
        raise ValueError(f"unknown core model {core!r}")
    if window is not None:
        A = A * np.exp(-((rho2 / window ** 2) ** (0.5 * window_power)))[:, None]
    return VectorGrid3(grid, A.T.reshape(3, *grid.dims))


@dataclass(frozen=True)
class AharonovBohmVorticity:
    gamma_eff: float
    phase: float
    sheet_phase: complex
    k_nearest: int
    single_valued: bool

    def to_dict(self) -> dict:
        return {
            "gamma_eff": self.gamma_eff,
            "phase": self.phase,
            "sheet_phase": [self.sheet_phase.real, self.sheet_phase.imag],
            "k_nearest": self.k_nearest,
            "single_valued": self.single_valued,
        }


def ab_effective_vorticity(spec: SolenoidSpec, constants: PhysicalConstants, units: str = "hbar") -> AharonovBohmVorticity:
    """Circulation whose sheet phase equals the solenoid phase.

    ``units="hbar"`` uses the phase ``q F / hbar``; ``units="gaussian"`` uses
    ``q F / (hbar c)``.  Then ``gamma_eff = q F / (m c_factor)``.
    """
    if units == "hbar":
        cf = 1.0
    elif units == "gaussian":
        cf = constants.c
    else:
        raise ValueError(f"unknown units flag {units!r}")
    gamma = constants.charge * spec.flux / (constants.mass * cf)
    phase = constants.charge * spec.flux / (constants.hbar * cf)
    q = quantization_check(gamma, constants)
    return AharonovBohmVorticity(float(gamma), float(phase), sheet_phase(gamma, 1, constants), q.k_nearest, q.single_valued)


def loop_line_integral(field_fn, center, normal, radius: float, samples: int = 512) -> float:
    """``oint A . dx`` around a circle by the trapezoidal rule."""
    e1, e2 = _perp_basis(normal)
    t = 2.0 * np.pi * np.arange(samples) / samples
    pts = np.asarray(center, float) + radius * (np.cos(t)[:, None] * e1 + np.sin(t)[:, None] * e2)
    tang = radius * (-np.sin(t)[:, None] * e1 + np.cos(t)[:, None] * e2)
    return float(np.sum(np.einsum("pk,pk->p", field_fn(pts), tang)) * 2.0 * np.pi / samples)


def curl_fd(field_fn, x, h: float = 1e-4) -> NDArray:
    """Central-difference curl of a point function at ``x`` (shape (3,))."""
    x = np.asarray(x, dtype=float)
    J = np.empty((3, 3))
    for b in range(3):
        e = np.zeros(3)
        e[b] = h
        J[:, b] = (np.asarray(field_fn(x + e)) - np.asarray(field_fn(x - e))) / (2 * h)
    return np.array([J[2, 1] - J[1, 2], J[0, 2] - J[2, 0], J[1, 0] - J[0, 1]])


def residual_report(result: IdentityResult) -> dict:
    return result.to_dict()
