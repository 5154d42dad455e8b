"""Hydrodynamic (Madelung) view of a wavefunction grid.

Density, guidance velocity, quantum potential and its force, nodal-line
extraction and guidance-equation trajectories.  The phase ``S`` is never
unwrapped globally: the velocity comes from the probability current.
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.typing import NDArray
from scipy import ndimage

from .grid import ComplexGrid3, GridSpec, RealGrid3, VectorGrid3, grad_array, laplacian_array, spectral_interpolate
from .kernels import ProbeLoop
from .wavefunction import PhysicalConstants

MASK_REL = 1e-6


# ------------------------------------------------------------------- masks
@dataclass(frozen=True)
class NodeMask:
    """Points excluded from quadratures.

    ``excluded`` holds every point with ``|psi| < rel * max|psi|``.  The
    ``nodes`` subset keeps only the connected low-amplitude regions that do
    not touch the box faces, i.e. interior nodes rather than the decayed
    tails of the packet.
    """

    excluded: NDArray[np.bool_]
    nodes: NDArray[np.bool_]
    rel: float

    @property
    def node_fraction(self) -> float:
        return float(self.nodes.mean())

    @property
    def excluded_fraction(self) -> float:
        return float(self.excluded.mean())


def node_mask(amplitude: NDArray, rel: float = MASK_REL) -> NodeMask:
    amp = np.abs(amplitude)
    excluded = amp < rel * amp.max()
    if not excluded.any():
        return NodeMask(excluded, excluded.copy(), rel)
    labels, count = ndimage.label(excluded)
    faces = [labels[0], labels[-1], labels[:, 0], labels[:, -1], labels[:, :, 0], labels[:, :, -1]]
    touching = np.unique(np.concatenate([f.ravel() for f in faces]))
    keep = np.ones(count + 1, dtype=bool)
    keep[touching] = False
    keep[0] = False
    return NodeMask(excluded, keep[labels], rel)


# -------------------------------------------------------------- decompose
@dataclass(frozen=True, eq=False)
class MadelungFields:
    """``rho = R^2``, ``u = grad S / m`` and ``R``; ``u`` is zero on excluded points."""

    density: RealGrid3
    velocity: VectorGrid3
    amplitude: RealGrid3
    mask: NodeMask

    @property
    def spec(self) -> GridSpec:
        return self.density.spec

    @property
    def mask_fraction(self) -> float:
        return self.mask.node_fraction

    @property
    def excluded_volume(self) -> float:
        return float(self.mask.excluded.sum() * self.spec.cell_volume)


def probability_velocity(psi: NDArray, spec: GridSpec, constants: PhysicalConstants, mask: NDArray[np.bool_]) -> NDArray:
    """``(hbar/m) Im(psi* grad psi) / |psi|^2``, zero where ``mask``.

    The current is assembled from real transforms of ``Re psi`` and
    ``Im psi``, so a real wavefunction gives exactly zero velocity.
    """
    re, im = np.real(psi), np.imag(psi)
    num = re[None] * grad_array(im, spec) - im[None] * grad_array(re, spec)
    den = np.abs(psi) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(mask[None], 0.0, num / np.where(mask, 1.0, den)[None])
    return (constants.hbar / constants.mass) * u


def decompose(psi: ComplexGrid3, constants: PhysicalConstants, mask_rel: float = MASK_REL) -> MadelungFields:
    """Split ``psi`` into density, guidance velocity and amplitude."""
    R = np.abs(psi.values)
    m = node_mask(R, mask_rel)
    u = probability_velocity(psi.values, psi.spec, constants, m.excluded)
    return MadelungFields(
        density=RealGrid3(psi.spec, R * R, mask=m.excluded),
        velocity=VectorGrid3(psi.spec, u),
        amplitude=RealGrid3(psi.spec, R, mask=m.excluded),
        mask=m,
    )


def velocity_at(psi: ComplexGrid3, constants: PhysicalConstants, points) -> NDArray:
    """Guidance velocity at off-grid points from the spectral interpolants of ``psi`` and ``grad psi``.

    Interpolating the smooth factors instead of ``u`` itself keeps accuracy
    near nodes, where ``u`` grows like the inverse distance.
    """
    g = grad_array(psi.values, psi.spec)
    p = spectral_interpolate(psi.values, psi.spec, points)
    G = np.stack([spectral_interpolate(g[a], psi.spec, points) for a in range(3)], axis=1)
    return (constants.hbar / constants.mass) * np.imag(np.conj(p)[:, None] * G) / (np.abs(p) ** 2)[:, None]


def loop_circulation(psi: ComplexGrid3, constants: PhysicalConstants, loop: ProbeLoop) -> float:
    """``oint u . dx`` of the guidance velocity along ``loop`` (trapezoidal rule)."""
    u = velocity_at(psi, constants, loop.points)
    n = loop.points.shape[0]
    return float(np.sum(np.einsum("pk,pk->p", u, loop.tangents)) * (2.0 * np.pi / n))


# ------------------------------------------------------ quantum potential
def _R_values(R) -> tuple[NDArray, GridSpec]:
    if isinstance(R, MadelungFields):
        return R.amplitude.values, R.spec
    return R.values, R.spec


def quantum_potential(R: RealGrid3 | MadelungFields, constants: PhysicalConstants, mask_rel: float = MASK_REL) -> RealGrid3:
    """``Q_B = -(hbar^2 / 2m) Lap(R) / R`` with a spectral Laplacian; zero on the mask."""
    vals, spec = _R_values(R)
    lap = laplacian_array(vals, spec)
    m = node_mask(vals, mask_rel)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(m.excluded, 0.0, lap / np.where(m.excluded, 1.0, vals))
    return RealGrid3(spec, -(constants.hbar ** 2 / (2.0 * constants.mass)) * q, mask=m.excluded)


def _fd_grad(f: NDArray, spec: GridSpec) -> NDArray:
    return np.stack(np.gradient(f, *spec.spacing, edge_order=2))


def _fd_laplacian(f: NDArray, spec: GridSpec) -> NDArray:
    out = np.zeros_like(f)
    for a, h in enumerate(spec.spacing):
        out += np.gradient(np.gradient(f, h, axis=a, edge_order=2), h, axis=a, edge_order=2)
    return out


def bohm_force_density(R: NDArray, spec: GridSpec, constants: PhysicalConstants, derivatives: str = "spectral") -> NDArray:
    """``rho grad Q_B = -(hbar^2/2m) (R grad Lap R - Lap R grad R)``, regular at nodes.

    ``derivatives="spectral"`` treats the box as periodic; ``"fd"`` uses
    second-order differences (one-sided at the faces) and no periodicity.
    """
    if derivatives == "spectral":
        lap = laplacian_array(R, spec)
        g_lap = grad_array(lap, spec)
        g_R = grad_array(R, spec)
    elif derivatives == "fd":
        lap = _fd_laplacian(R, spec)
        g_lap = _fd_grad(lap, spec)
        g_R = _fd_grad(R, spec)
    else:
        raise ValueError(f"unknown derivative method {derivatives!r}")
    return -(constants.hbar ** 2 / (2.0 * constants.mass)) * (R[None] * g_lap - lap[None] * g_R)


def grad_q_squared_density(R: NDArray, spec: GridSpec, constants: PhysicalConstants, excluded: NDArray[np.bool_]) -> NDArray:
    """``rho |grad Q_B|^2`` (zero on ``excluded``)."""
    f = bohm_force_density(R, spec, constants)
    num = np.sum(f * f, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(excluded, 0.0, num / np.where(excluded, 1.0, R * R))


@dataclass(frozen=True)
class BohmForceResult:
    """``vector = int rho grad Q_B``; ``scale = int rho |grad Q_B|`` for relative checks."""

    vector: NDArray[np.float64]
    scale: float
    boundary_contaminated: bool
    excluded_volume: float

    @property
    def relative(self) -> float:
        return float(np.linalg.norm(self.vector) / self.scale) if self.scale > 0 else 0.0


def boundary_level(R: NDArray) -> float:
    """Largest ``|R|`` on the box faces relative to the global maximum."""
    a = np.abs(R)
    faces = [a[0], a[-1], a[:, 0], a[:, -1], a[:, :, 0], a[:, :, -1]]
    return float(max(f.max() for f in faces) / a.max())


def bohm_force_integral(
    fields: MadelungFields | RealGrid3,
    constants: PhysicalConstants,
    mask_rel: float = MASK_REL,
    boundary_tol: float = 1e-6,
    derivatives: str = "spectral",
) -> BohmForceResult:
    """``int rho grad Q_B d^3x``; vanishes for amplitudes that decay inside the box.

    Interior node regions are excluded from the sum.  The result is flagged
    ``boundary_contaminated`` when ``R`` on the box faces exceeds
    ``boundary_tol`` times its maximum, since the vanishing relies on decay.

    With periodic spectral derivatives the grid sum is zero for any real
    ``R`` (the box has no boundary), so a truncated support only shows up in
    the flag.  ``derivatives="fd"`` integrates over the box as a bounded
    region, where a truncated support leaves a nonzero surface contribution.
    """
    R, spec = _R_values(fields)
    m = node_mask(R, mask_rel)
    f = bohm_force_density(R, spec, constants, derivatives)
    f = np.where(m.nodes[None], 0.0, f)
    vec = f.sum(axis=(1, 2, 3)) * spec.cell_volume
    scale = float(np.sum(np.sqrt(np.sum(f * f, axis=0))) * spec.cell_volume)
    return BohmForceResult(
        vector=vec,
        scale=scale,
        boundary_contaminated=boundary_level(R) > boundary_tol,
        excluded_volume=float(m.nodes.sum() * spec.cell_volume),
    )


# ---------------------------------------------------------- nodal lines
@dataclass(frozen=True)
class NodalLine:
    points: NDArray[np.float64]
    closed: bool


def _face_windings(psi: NDArray, axis: int) -> NDArray[np.int64]:
    """Phase winding around the unit plaquette normal to ``axis`` at each lower corner."""
    b, c = (axis + 1) % 3, (axis + 2) % 3
    db = np.angle(np.roll(psi, -1, b) * np.conj(psi))
    dc = np.angle(np.roll(psi, -1, c) * np.conj(psi))
    circ = db + np.roll(dc, -1, b) - np.roll(db, -1, c) - dc
    return np.rint(circ / (2.0 * np.pi)).astype(np.int64)


def _bilinear_zero(f00, f10, f01, f11):
    """Zero of the complex bilinear interpolant on the unit square, or the center."""
    a = f00
    b = f10 - f00
    c = f01 - f00
    d = f11 - f10 - f01 + f00
    # t = -(a + b s)/(c + d s) must be real: Im[(a + b s) conj(c + d s)] = 0
    q2 = np.imag(b * np.conj(d))
    q1 = np.imag(a * np.conj(d) + b * np.conj(c))
    q0 = np.imag(a * np.conj(c))
    if abs(q2) > 1e-14 * (abs(q1) + abs(q0) + 1e-300):
        disc = q1 * q1 - 4 * q2 * q0
        roots = [] if disc < 0 else [(-q1 + sgn * np.sqrt(disc)) / (2 * q2) for sgn in (1.0, -1.0)]
    elif q1 != 0.0:
        roots = [-q0 / q1]
    else:
        roots = []
    for s in roots:
        if -1e-9 <= s <= 1 + 1e-9:
            den = c + d * s
            if den == 0:
                continue
            t = -(a + b * s) / den
            if -1e-9 <= t.real <= 1 + 1e-9:
                return float(np.clip(s, 0, 1)), float(np.clip(t.real, 0, 1))
    return 0.5, 0.5


def extract_nodal_lines(psi: ComplexGrid3, mask_rel: float = MASK_REL, min_points: int = 3) -> list[NodalLine]:
    """Chain the phase singularities of ``psi`` into polylines.

    A plaquette is pierced when the phase winds around it; plaquettes whose
    corners all lie below ``mask_rel * max|psi|`` are ignored.  Pierce points
    are the zero of the bilinear interpolant of ``(Re psi, Im psi)``.  Each
    pierced plaquette links the two grid cells it separates, and the lines
    follow these links through cells.  Lines closing through the periodic
    boundary are reported as closed.
    """
    vals = psi.values
    spec = psi.spec
    dims = np.asarray(spec.dims)
    amp = np.abs(vals)
    low = amp < mask_rel * amp.max()
    origin = np.asarray(spec.origin)
    h = np.asarray(spec.spacing)

    edges = []  # (src_cell, dst_cell, point)
    for axis in range(3):
        w = _face_windings(vals, axis)
        b, c = (axis + 1) % 3, (axis + 2) % 3
        corner_low = low & np.roll(low, -1, b) & np.roll(low, -1, c) & np.roll(np.roll(low, -1, b), -1, c)
        w[corner_low] = 0
        for idx in np.argwhere(w != 0):
            i = tuple(idx)
            eb = np.zeros(3, int)
            eb[b] = 1
            ec = np.zeros(3, int)
            ec[c] = 1
            p00 = idx
            p10 = (idx + eb) % dims
            p01 = (idx + ec) % dims
            p11 = (idx + eb + ec) % dims
            s, t = _bilinear_zero(vals[tuple(p00)], vals[tuple(p10)], vals[tuple(p01)], vals[tuple(p11)])
            point = origin + h * (idx + s * eb + t * ec)
            ea = np.zeros(3, int)
            ea[axis] = 1
            below = tuple((idx - ea) % dims)
            above = i
            n = int(w[i])
            src, dst = (below, above) if n > 0 else (above, below)
            for _ in range(abs(n)):
                edges.append((src, dst, point))

    out_edges: dict[tuple, list[int]] = {}
    in_count: dict[tuple, int] = {}
    for k, (src, dst, _) in enumerate(edges):
        out_edges.setdefault(src, []).append(k)
        in_count[dst] = in_count.get(dst, 0) + 1
    used = np.zeros(len(edges), dtype=bool)

    def walk(start_edge):
        chain = [start_edge]
        used[start_edge] = True
        cur = edges[start_edge][1]
        while True:
            nxt = [k for k in out_edges.get(cur, []) if not used[k]]
            if not nxt:
                return chain
            k = nxt[0]
            used[k] = True
            chain.append(k)
            cur = edges[k][1]

    lines = []
    # open chains start in cells with more exits than entries
    for cell in sorted(out_edges):
        surplus = len(out_edges[cell]) - in_count.get(cell, 0)
        for _ in range(max(0, surplus)):
            free = [k for k in out_edges[cell] if not used[k]]
            if free:
                chain = walk(free[0])
                lines.append((chain, False))
    for k in range(len(edges)):
        if not used[k]:
            chain = walk(k)
            closed = edges[chain[-1]][1] == edges[chain[0]][0]
            lines.append((chain, closed))
    result = []
    for chain, closed in lines:
        if len(chain) < min_points:
            continue
        result.append(NodalLine(np.array([edges[k][2] for k in chain]), closed))
    return result


# ------------------------------------------------------------ trajectories
@dataclass(frozen=True)
class Trajectory:
    times: NDArray[np.float64]
    points: NDArray[np.float64]
    truncated: bool
    reason: str = ""


class _VelocitySeries:
    def __init__(self, frames: Sequence[ComplexGrid3], dt: float, constants: PhysicalConstants, mask_rel: float):
        self.spec = frames[0].spec
        self.dt = dt
        self.u = []
        self.m = []
        for f in frames:
            fld = decompose(f, constants, mask_rel)
            self.u.append(fld.velocity.values)
            self.m.append(fld.mask.excluded.astype(float))
        self.t_end = dt * (len(frames) - 1)

    def _coords(self, x):
        return ((np.asarray(x) - np.asarray(self.spec.origin)) / np.asarray(self.spec.spacing))[:, None]

    def _at_frame(self, k, coords):
        u = np.array(
            [ndimage.map_coordinates(self.u[k][a], coords, order=1, mode="grid-wrap")[0] for a in range(3)]
        )
        masked = ndimage.map_coordinates(self.m[k], coords, order=1, mode="grid-wrap")[0] > 0
        return u, masked

    def __call__(self, t, x):
        coords = self._coords(x)
        if len(self.u) == 1:
            return self._at_frame(0, coords)
        s = min(max(t / self.dt, 0.0), len(self.u) - 1)
        k = min(int(np.floor(s)), len(self.u) - 2)
        frac = s - k
        u0, m0 = self._at_frame(k, coords)
        if frac == 0.0:
            return u0, m0
        u1, m1 = self._at_frame(k + 1, coords)
        return (1 - frac) * u0 + frac * u1, m0 or m1


def advect_trajectory(
    psi_series: Sequence[ComplexGrid3],
    x0,
    dt: float,
    constants: PhysicalConstants,
    substeps: int = 1,
    duration: float | None = None,
    mask_rel: float = MASK_REL,
) -> Trajectory:
    """Integrate ``dX/dt = u(X, t)`` with RK4.

    ``psi_series`` are frames spaced by ``dt``; velocities are interpolated
    trilinearly in space and linearly in time.  With a single frame the field
    is held fixed and ``duration`` (default ``dt``) sets the end time.  The
    path stops early, flagged ``truncated``, when a stage touches a cell with a
    masked corner.
    """
    if dt <= 0 or substeps < 1:
        raise ValueError("dt must be positive and substeps >= 1")
    field = _VelocitySeries(list(psi_series), dt, constants, mask_rel)
    t_end = field.t_end if duration is None and len(psi_series) > 1 else (duration if duration is not None else dt)
    h = dt / substeps
    nsteps = int(round(t_end / h))
    x = np.asarray(x0, dtype=float).copy()
    times = [0.0]
    pts = [x.copy()]
    for step in range(nsteps):
        t = step * h
        k1, m1 = field(t, x)
        k2, m2 = field(t + h / 2, x + h / 2 * k1)
        k3, m3 = field(t + h / 2, x + h / 2 * k2)
        k4, m4 = field(t + h, x + h * k3)
        if m1 or m2 or m3 or m4:
            return Trajectory(np.array(times), np.array(pts), True, "entered node mask")
        x = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        times.append((step + 1) * h)
        pts.append(x.copy())
    return Trajectory(np.array(times), np.array(pts), False)


def write_trajectory_csv(traj: Trajectory, path: str | os.PathLike) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "x", "y", "z"])
        for t, p in zip(traj.times.tolist(), traj.points.tolist()):
            w.writerow([repr(t), repr(p[0]), repr(p[1]), repr(p[2])])
    return path
