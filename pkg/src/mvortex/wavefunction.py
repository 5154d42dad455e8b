"""Multi-valued vortex states on a reference sheet.

A state is stored as a non-negative amplitude ``R`` and the reference-sheet
velocity potential ``phi = phi_f + phi_w`` (so ``S = m * phi``), which jumps by
``gamma`` across the cut surface.  The linear wavefunction is
``R exp(i m phi / hbar)``; the nu-transformed one is
``R exp(i m phi / (nu hbar))`` and is continuous whenever
``nu = m gamma / (2 pi M hbar)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.constants as sc
from numpy.typing import NDArray

from .errors import NoVortexError, StateConstructionError
from .geometry import Link, SeifertMesh
from .grid import ComplexGrid3, GridSpec, RealGrid3
from .kernels import line_scalar_potential, nodal_regularizer, scalar_potential, solid_angle_and_cut

DEFAULT_QUANT_TOL = 1e-9


@dataclass(frozen=True)
class PhysicalConstants:
    """``hbar``, ``mass``, ``charge`` and ``c``; ``coulomb`` is the Coulomb
    prefactor of the Larmor formula (1 in Gaussian/natural units,
    ``1/(4 pi eps0)`` in SI)."""

    hbar: float = 1.0
    mass: float = 1.0
    charge: float = 1.0
    c: float = 1.0
    coulomb: float = 1.0

    def __post_init__(self):
        for name in ("hbar", "mass", "c", "coulomb"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v}")
        if not np.isfinite(self.charge):
            raise ValueError("charge must be finite")

    @classmethod
    def natural(cls, charge: float = 1.0) -> PhysicalConstants:
        return cls(1.0, 1.0, charge, 1.0)

    @classmethod
    def natural_alpha(cls) -> PhysicalConstants:
        """hbar = m = c = 1 with ``q = sqrt(alpha)``."""
        return cls(1.0, 1.0, math.sqrt(sc.fine_structure), 1.0)

    @classmethod
    def gaussian_electron(cls) -> PhysicalConstants:
        """Electron in Gaussian cgs units."""
        e_esu = sc.e * sc.c * 10.0  # statcoulomb
        return cls(sc.hbar * 1e7, sc.m_e * 1e3, -e_esu, sc.c * 100.0)

    @classmethod
    def si_electron(cls) -> PhysicalConstants:
        return cls(sc.hbar, sc.m_e, -sc.e, sc.c, 1.0 / (4.0 * np.pi * sc.epsilon_0))

    @classmethod
    def preset(cls, name: str) -> PhysicalConstants:
        table = {
            "natural": cls.natural,
            "natural_alpha": cls.natural_alpha,
            "gaussian_electron": cls.gaussian_electron,
            "si_electron": cls.si_electron,
        }
        if name not in table:
            raise ValueError(f"unknown constants preset {name!r}; choose from {sorted(table)}")
        return table[name]()

    def to_dict(self) -> dict:
        return {"hbar": self.hbar, "mass": self.mass, "charge": self.charge, "c": self.c, "coulomb": self.coulomb}


# ------------------------------------------------------------ quantization
@dataclass(frozen=True)
class QuantizationReport:
    gamma: float
    k_nearest: int
    residual: float
    single_valued: bool
    tolerance: float = DEFAULT_QUANT_TOL

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "k_nearest": self.k_nearest,
            "residual": self.residual,
            "single_valued": self.single_valued,
            "tolerance": self.tolerance,
        }


def _winding_ratio(gamma: float, constants: PhysicalConstants) -> float:
    return constants.mass * gamma / (2.0 * np.pi * constants.hbar)


def quantization_check(gamma: float, constants: PhysicalConstants, tol: float = DEFAULT_QUANT_TOL) -> QuantizationReport:
    """Nearest integer ``K`` to ``m gamma / (2 pi hbar)`` and the distance to it.

    Ties round to even, so ``1.5`` reports ``K = 2``.
    """
    x = _winding_ratio(gamma, constants)
    k = int(round(x))
    residual = abs(x - k)
    return QuantizationReport(float(gamma), k, float(residual), bool(residual < tol), tol)


def sheet_phase(gamma: float, n_w: int, constants: PhysicalConstants) -> complex:
    """Constant factor ``exp(i m gamma N_w / hbar)`` relating sheet ``N_w`` to the reference sheet.

    The exponent is reduced modulo ``2 pi`` before exponentiating, so integer
    multiples of ``2 pi`` give exactly 1.
    """
    x = _winding_ratio(gamma, constants) * int(n_w)
    frac = x - round(x)
    if frac == 0.0:
        return 1.0 + 0.0j
    return complex(np.exp(2j * np.pi * frac))


@dataclass(frozen=True)
class NuSelection:
    nu: float
    m_index: int
    linear: bool

    def to_dict(self) -> dict:
        return {"nu": self.nu, "M": self.m_index, "linear": self.linear}


def select_nu(gamma: float, constants: PhysicalConstants, m_index: int = 1) -> NuSelection:
    """``nu = m gamma / (2 pi M hbar)``; ``linear`` flags ``nu == 1``.

    Raises
    ------
    NoVortexError
        For ``gamma == 0``: every ``nu`` then gives a single-valued state.
    """
    if int(m_index) != m_index or m_index < 1:
        raise ValueError(f"M must be a positive integer, got {m_index}")
    if gamma == 0.0:
        raise NoVortexError("gamma = 0: there is no vortex and nu is not determined")
    nu = constants.mass * gamma / (2.0 * np.pi * int(m_index) * constants.hbar)
    return NuSelection(float(nu), int(m_index), bool(nu == 1.0))


# ------------------------------------------------------------ envelopes
@dataclass(frozen=True)
class GaussianEnvelope:
    """Nodeless envelope ``exp(-|x - center|^2 / (2 width^2) + i k.x)``.

    ``center=None`` places it on the centroid of the filaments.
    """

    width: float = 1.0
    center: tuple[float, float, float] | None = None
    momentum: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not self.width > 0:
            raise StateConstructionError("envelope width must be positive")

    def resolved_center(self, link: Link | None) -> NDArray:
        if self.center is not None:
            return np.asarray(self.center, dtype=float)
        if link is None:
            return np.zeros(3)
        closed = [c for c in link.curves if c.closed]
        pts = np.concatenate([c.points for c in (closed or link.curves)])
        return pts.mean(axis=0)

    def amplitude(self, points: NDArray, link: Link | None) -> NDArray:
        r = points - self.resolved_center(link)
        return np.exp(-np.einsum("pk,pk->p", r, r) / (2.0 * self.width ** 2))

    def phase(self, points: NDArray) -> NDArray:
        return points @ np.asarray(self.momentum, dtype=float)


# ------------------------------------------------------------ states
@dataclass(frozen=True, eq=False)
class MultiValuedState:
    """Reference-sheet representation of a multi-valued vortex state.

    Attributes
    ----------
    amplitude : RealGrid3
        ``R = |Phi| / I_n``, normalized so that ``int R^2 = 1``.
    potential : RealGrid3
        Reference-sheet velocity potential ``phi_f + phi_w`` (``S / m``),
        discontinuous by ``gamma`` across the cut.
    carrier : RealGrid3
        Single-valued envelope phase in radians (a packet momentum ``k.x``),
        part of ``S / hbar`` on the reference sheet.
    """

    amplitude: RealGrid3
    potential: RealGrid3
    carrier: RealGrid3
    link: Link | None
    mesh: SeifertMesh | None
    constants: PhysicalConstants
    n: int
    sheet: int = 0
    m_index: int = 1
    envelope: GaussianEnvelope = field(default_factory=GaussianEnvelope)
    norm_factor: float = 1.0

    @property
    def spec(self) -> GridSpec:
        return self.amplitude.spec

    @property
    def gamma(self) -> float:
        return 0.0 if self.link is None else self.link.gamma

    @property
    def nu(self) -> float:
        """Selected nu; 1 when there is no vortex."""
        if self.gamma == 0.0:
            return 1.0
        return select_nu(self.gamma, self.constants, self.m_index).nu

    def sheet_phase(self, n_w: int | None = None) -> complex:
        return sheet_phase(self.gamma, self.sheet if n_w is None else n_w, self.constants)

    def quantization(self) -> QuantizationReport:
        return quantization_check(self.gamma, self.constants)

    @property
    def envelope_grid(self) -> ComplexGrid3:
        """Single-valued factor ``Phi / I_n`` (normalized), without the vortex phase."""
        return ComplexGrid3(self.spec, self.amplitude.values * np.exp(1j * self.carrier.values))

    def phase_grid(self, nu: float = 1.0) -> NDArray:
        c = self.constants
        return (c.mass * self.potential.values / c.hbar + self.carrier.values) / nu

    def psi(self) -> ComplexGrid3:
        """Linear wavefunction on sheet ``self.sheet``."""
        vals = self.amplitude.values * np.exp(1j * self.phase_grid(1.0))
        return ComplexGrid3(self.spec, vals * self.sheet_phase())

    def psi_nu(self, nu: float | None = None) -> ComplexGrid3:
        """Transformed wavefunction ``R exp(i S / (nu hbar))``."""
        nu = self.nu if nu is None else nu
        if nu == 0:
            raise ValueError("nu must be non-zero")
        return ComplexGrid3(self.spec, self.amplitude.values * np.exp(1j * self.phase_grid(nu)))

    def amplitude_at(self, points) -> NDArray:
        """Evaluate ``R`` off-grid from its closed form (exactly 0 on filaments)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        phi = self.envelope.amplitude(pts, self.link)
        if self.link is None:
            return phi / self.norm_factor
        with np.errstate(divide="ignore"):
            inv = 1.0 / nodal_regularizer(self.link, self.n, pts)
        return phi * inv / self.norm_factor

    def nodal_ratio(self) -> float:
        """``max |psi|`` over filament samples divided by ``max |psi|`` on the grid."""
        if self.link is None:
            return 0.0
        pts = np.concatenate([c.points for c in self.link.curves])
        inside = self.spec.contains(pts)
        if not inside.any():
            return 0.0
        return float(np.max(self.amplitude_at(pts[inside])) / np.max(self.amplitude.values))

    def metadata(self) -> dict:
        q = self.quantization()
        meta = {
            "gamma": self.gamma,
            "n": self.n,
            "constants": self.constants.to_dict(),
            "nu": self.nu,
            "M": self.m_index,
            "sheet": self.sheet,
            "quantization": q.to_dict(),
            "grid": {"dims": list(self.spec.dims), "origin": list(self.spec.origin), "spacing": list(self.spec.spacing)},
        }
        return meta


def _reference_potential(spec: GridSpec, link: Link, mesh: SeifertMesh | None, pts: NDArray) -> NDArray:
    if link.gamma == 0.0:
        return np.zeros(pts.shape[0])
    if link.all_closed:
        if mesh is None:
            raise StateConstructionError("mesh required for multi-valued potential of closed filaments")
        omega, flags = solid_angle_and_cut(mesh, pts)
        pot = -link.gamma / (4.0 * np.pi) * omega
        if flags.any():
            # nudge on-surface grid points to the side the surface normals point to
            nrm = mesh.normals.sum(axis=0)
            nrm /= np.linalg.norm(nrm)
            shift = 1e-9 * mesh.scale * nrm
            pot[flags] = scalar_potential(link, mesh, pts[flags] + shift, check_cut=False)
        return pot
    if any(c.closed for c in link.curves):
        raise StateConstructionError("links mixing open and closed filaments are not supported")
    return line_scalar_potential(link, pts)


def build_initial_state(
    spec: GridSpec,
    link: Link | None,
    mesh: SeifertMesh | None,
    n: int,
    constants: PhysicalConstants,
    envelope: GaussianEnvelope | None = None,
    phi_w: NDArray | RealGrid3 | None = None,
    sheet: int = 0,
    m_index: int = 1,
) -> MultiValuedState:
    """Sample ``Phi(x) exp(i m phi_f / hbar) / I_n(x)`` on ``spec``.

    Parameters
    ----------
    spec : GridSpec
        Target grid; closed filaments must lie inside it.
    link : Link or None
        Filaments and circulation.  ``None`` (or ``gamma == 0`` with no
        filaments needed) builds the bare envelope.
    mesh : SeifertMesh or None
        Cut surface for closed filaments (required when ``gamma != 0``).
        Straight open filaments use the azimuthal potential instead.
    n : int
        Regularizer exponent, at least 2 so that ``psi`` vanishes on the
        filament.
    phi_w : array, optional
        Extra single-valued velocity potential added to ``phi_f``.

    Raises
    ------
    StateConstructionError
        For ``n < 2``, closed filaments outside the box, a missing mesh, or
        an envelope that vanishes on the grid.
    """
    if int(n) != n or n < 2:
        raise StateConstructionError(f"nodal exponent n must be an integer >= 2, got {n}")
    n = int(n)
    envelope = envelope or GaussianEnvelope()
    if link is not None:
        for ci, c in enumerate(link.curves):
            if c.closed and not spec.contains(c.points).all():
                raise StateConstructionError(f"closed filament {ci} leaves the grid box")
        if mesh is not None:
            mesh.validate(link)
    pts = spec.points()
    phi_env = envelope.amplitude(pts, link)
    if link is not None:
        with np.errstate(divide="ignore"):
            amp = phi_env / nodal_regularizer(link, n, pts)
        pot = _reference_potential(spec, link, mesh, pts)
    else:
        amp = phi_env
        pot = np.zeros(pts.shape[0])
    if phi_w is not None:
        pw = phi_w.values if isinstance(phi_w, RealGrid3) else np.asarray(phi_w, dtype=float)
        if pw.shape != spec.dims:
            raise StateConstructionError("phi_w grid does not match the target grid")
        pot = pot + pw.ravel()
    norm = math.sqrt(float(np.sum(amp * amp)) * spec.cell_volume)
    if not norm > 0:
        raise StateConstructionError("envelope vanishes on the grid")
    R = (amp / norm).reshape(spec.dims)
    carrier = envelope.phase(pts).reshape(spec.dims)
    return MultiValuedState(
        amplitude=RealGrid3(spec, R),
        potential=RealGrid3(spec, pot.reshape(spec.dims)),
        carrier=RealGrid3(spec, carrier),
        link=link,
        mesh=mesh,
        constants=constants,
        n=n,
        sheet=int(sheet),
        m_index=int(m_index),
        envelope=envelope,
        norm_factor=norm,
    )


# ------------------------------------------------------------ superposition
@dataclass(frozen=True, eq=False)
class SuperposedState:
    """Normalized weighted sum of reference-sheet components."""

    psi: ComplexGrid3
    gammas: tuple[float, ...]
    nus: tuple[float, ...]
    weights: tuple[complex, ...]
    populations: tuple[float, ...]
    overlap: NDArray[np.complex128]
    components: tuple = ()

    def max_offdiagonal_overlap(self) -> float:
        o = np.abs(self.overlap - np.diag(np.diag(self.overlap)))
        return float(o.max()) if o.size else 0.0


def _component_nu(gamma: float, constants: PhysicalConstants) -> float:
    return 1.0 if gamma == 0.0 else select_nu(gamma, constants, 1).nu


def superpose(states: Sequence[MultiValuedState], weights: Sequence[complex]) -> SuperposedState:
    """Normalized ``sum_j w_j psi_j`` with per-component ``(gamma_j, nu_j)``.

    ``populations[j] = |<psi_j | psi>|^2`` for normalized components;
    ``overlap[i, j] = <psi_i | psi_j>``.
    """
    states = list(states)
    if not states or len(states) != len(weights):
        raise ValueError("need one weight per state and at least one state")
    spec = states[0].spec
    consts = states[0].constants
    for s in states[1:]:
        if s.spec != spec:
            raise ValueError("all components must share one grid")
        if s.constants != consts:
            raise ValueError("all components must share one set of constants")
    dv = spec.cell_volume
    psis = [s.psi().values for s in states]
    total = sum(complex(w) * p for w, p in zip(weights, psis))
    norm = math.sqrt(float(np.sum(np.abs(total) ** 2)) * dv)
    if not norm > 0:
        raise StateConstructionError("superposition vanishes")
    total = total / norm
    k = len(psis)
    overlap = np.empty((k, k), dtype=np.complex128)
    for i in range(k):
        for j in range(k):
            overlap[i, j] = np.vdot(psis[i], psis[j]) * dv
    pops = tuple(float(abs(np.vdot(p, total) * dv) ** 2) for p in psis)
    gammas = tuple(s.gamma for s in states)
    return SuperposedState(
        psi=ComplexGrid3(spec, total),
        gammas=gammas,
        nus=tuple(_component_nu(g, consts) for g in gammas),
        weights=tuple(complex(w) for w in weights),
        populations=pops,
        overlap=overlap,
        components=tuple(states),
    )
