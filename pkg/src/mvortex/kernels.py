"""Potential-theory kernels for vortex filaments.

Biot-Savart velocity, circulation and winding numbers along probe loops, the
solid angle subtended by an oriented triangulated cut surface (and the scalar
potential built from it), and the nodal regularizer integrals ``I_n``.

Point-parallel loops are compiled with numba; every point is independent, so
results do not depend on the thread count.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from functools import cached_property

import numba as nb
import numpy as np

if os.environ.get("NUMBA_THREADING_LAYER") is None:
    # avoid probing an outdated TBB; OpenMP/workqueue give the same results
    nb.config.THREADING_LAYER = "workqueue"
import scipy.fft as sfft
from numpy.typing import NDArray
from scipy import special

from .errors import CoreProximityError, GeometryError, IllConditionedProbeError, OnCutError
from .geometry import FilamentCurve, Link, SeifertMesh, _perp_basis, _unit

CORE_FACTOR = 3.0
WINDING_TOL = 0.05


def _as_points(x):
    p = np.asarray(x, dtype=np.float64)
    single = p.ndim == 1
    p = np.ascontiguousarray(np.atleast_2d(p))
    if p.shape[1] != 3:
        raise ValueError("evaluation points must have shape (3,) or (P, 3)")
    return p, single


# ------------------------------------------------------------ numba kernels
@nb.njit(cache=True, fastmath=False)
def _seg_distance(px, py, pz, ax, ay, az, bx, by, bz):
    dx, dy, dz = bx - ax, by - ay, bz - az
    rx, ry, rz = px - ax, py - ay, pz - az
    ll = dx * dx + dy * dy + dz * dz
    t = (rx * dx + ry * dy + rz * dz) / ll
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    qx, qy, qz = rx - t * dx, ry - t * dy, rz - t * dz
    return np.sqrt(qx * qx + qy * qy + qz * qz)


@nb.njit(cache=True)
def _segment_velocity(px, py, pz, ax, ay, az, bx, by, bz):
    """Exact velocity of a straight unit-circulation segment A->B, times 4*pi."""
    r1x, r1y, r1z = px - ax, py - ay, pz - az
    r2x, r2y, r2z = px - bx, py - by, pz - bz
    cx = r1y * r2z - r1z * r2y
    cy = r1z * r2x - r1x * r2z
    cz = r1x * r2y - r1y * r2x
    c2 = cx * cx + cy * cy + cz * cz
    n1 = np.sqrt(r1x * r1x + r1y * r1y + r1z * r1z)
    n2 = np.sqrt(r2x * r2x + r2y * r2y + r2z * r2z)
    if c2 <= 1e-30 * (n1 * n2) ** 2 or n1 == 0.0 or n2 == 0.0:
        return 0.0, 0.0, 0.0
    r0x, r0y, r0z = bx - ax, by - ay, bz - az
    k = (r0x * (r1x / n1 - r2x / n2) + r0y * (r1y / n1 - r2y / n2) + r0z * (r1z / n1 - r2z / n2)) / c2
    return k * cx, k * cy, k * cz


@nb.njit(cache=True)
def _segment_velocity_midpoint(px, py, pz, ax, ay, az, bx, by, bz, pieces):
    ux = uy = uz = 0.0
    dx, dy, dz = (bx - ax) / pieces, (by - ay) / pieces, (bz - az) / pieces
    for j in range(pieces):
        mx = ax + (j + 0.5) * dx
        my = ay + (j + 0.5) * dy
        mz = az + (j + 0.5) * dz
        rx, ry, rz = px - mx, py - my, pz - mz
        r = np.sqrt(rx * rx + ry * ry + rz * rz)
        if r == 0.0:
            continue
        inv = 1.0 / (r * r * r)
        ux += (dy * rz - dz * ry) * inv
        uy += (dz * rx - dx * rz) * inv
        uz += (dx * ry - dy * rx) * inv
    return ux, uy, uz


@nb.njit(cache=True, parallel=True)
def _biot_savart_kernel(pts, a, b, core, midpoint):
    n = pts.shape[0]
    out = np.zeros((n, 3))
    bad = np.zeros(n, dtype=np.bool_)
    for i in nb.prange(n):
        px, py, pz = pts[i, 0], pts[i, 1], pts[i, 2]
        ux = uy = uz = 0.0
        dmin = np.inf
        cmin = 0.0
        for s in range(a.shape[0]):
            ax, ay, az = a[s, 0], a[s, 1], a[s, 2]
            bx, by, bz = b[s, 0], b[s, 1], b[s, 2]
            d = _seg_distance(px, py, pz, ax, ay, az, bx, by, bz)
            if d < dmin:
                dmin = d
                cmin = core[s]
            if midpoint:
                seg = np.sqrt((bx - ax) ** 2 + (by - ay) ** 2 + (bz - az) ** 2)
                pieces = 1
                if d < 5.0 * seg:
                    pieces = int(5.0 * seg / max(d, 1e-300)) + 1
                    if pieces > 4096:
                        pieces = 4096
                vx, vy, vz = _segment_velocity_midpoint(px, py, pz, ax, ay, az, bx, by, bz, pieces)
            else:
                vx, vy, vz = _segment_velocity(px, py, pz, ax, ay, az, bx, by, bz)
            ux += vx
            uy += vy
            uz += vz
        bad[i] = dmin < cmin
        out[i, 0] = ux
        out[i, 1] = uy
        out[i, 2] = uz
    return out, bad


@nb.njit(cache=True, parallel=True)
def _solid_angle_kernel(pts, v0, v1, v2, area2, tol):
    """Signed solid angle of an oriented triangle set; also flags on-surface points."""
    n = pts.shape[0]
    out = np.zeros(n)
    on = np.zeros(n, dtype=np.bool_)
    for i in nb.prange(n):
        px, py, pz = pts[i, 0], pts[i, 1], pts[i, 2]
        acc = 0.0
        for t in range(v0.shape[0]):
            ax, ay, az = v0[t, 0] - px, v0[t, 1] - py, v0[t, 2] - pz
            bx, by, bz = v1[t, 0] - px, v1[t, 1] - py, v1[t, 2] - pz
            cx, cy, cz = v2[t, 0] - px, v2[t, 1] - py, v2[t, 2] - pz
            la = np.sqrt(ax * ax + ay * ay + az * az)
            lb = np.sqrt(bx * bx + by * by + bz * bz)
            lc = np.sqrt(cx * cx + cy * cy + cz * cz)
            num = ax * (by * cz - bz * cy) + ay * (bz * cx - bx * cz) + az * (bx * cy - by * cx)
            den = (
                la * lb * lc
                + (ax * bx + ay * by + az * bz) * lc
                + (ax * cx + ay * cy + az * cz) * lb
                + (bx * cx + by * cy + bz * cz) * la
            )
            if abs(num) <= area2[t] * tol and den <= 0.0:
                on[i] = True
            acc += np.arctan2(num, den)
        out[i] = -2.0 * acc
    return out, on


@nb.njit(cache=True)
def _log_ratio_same_sign(u0, u1, d):
    # integral of 1/sqrt(u^2+d^2) over [u0, u1] with 0 <= u0 < u1
    s0 = np.sqrt(u0 * u0 + d * d)
    s1 = np.sqrt(u1 * u1 + d * d)
    return np.log((u1 + s1) / (u0 + s0))


@nb.njit(cache=True)
def _segment_In(u0, u1, d, n):
    """Exact integral of (u^2+d^2)^(-n/2) over [u0, u1] for n in {1, 2, 3}."""
    straddle = u0 < 0.0 < u1
    if d == 0.0:
        if straddle or u0 == 0.0 or u1 == 0.0:
            return np.inf
        if u1 < 0.0:
            u0, u1 = -u1, -u0
        if n == 1:
            return np.log(u1 / u0)
        if n == 2:
            return 1.0 / u0 - 1.0 / u1
        return 0.5 * (u1 * u1 - u0 * u0) / (u0 * u0 * u1 * u1)
    if n == 1:
        if straddle:
            return _log_ratio_same_sign(0.0, u1, d) + _log_ratio_same_sign(0.0, -u0, d)
        if u1 <= 0.0:
            return _log_ratio_same_sign(-u1, -u0, d)
        return _log_ratio_same_sign(u0, u1, d)
    if n == 2:
        return np.arctan2(d * (u1 - u0), d * d + u0 * u1) / d
    s0 = np.sqrt(u0 * u0 + d * d)
    s1 = np.sqrt(u1 * u1 + d * d)
    if straddle:
        return (u1 / s1 - u0 / s0) / (d * d)
    return (u1 * u1 - u0 * u0) / (s0 * s1 * (u1 * s0 + u0 * s1))


@nb.njit(cache=True, parallel=True)
def _regularizer_kernel(pts, a, b, n):
    npts = pts.shape[0]
    out = np.zeros(npts)
    for i in nb.prange(npts):
        acc = 0.0
        for s in range(a.shape[0]):
            tx, ty, tz = b[s, 0] - a[s, 0], b[s, 1] - a[s, 1], b[s, 2] - a[s, 2]
            length = np.sqrt(tx * tx + ty * ty + tz * tz)
            tx, ty, tz = tx / length, ty / length, tz / length
            rx, ry, rz = pts[i, 0] - a[s, 0], pts[i, 1] - a[s, 1], pts[i, 2] - a[s, 2]
            s0 = rx * tx + ry * ty + rz * tz
            qx, qy, qz = rx - s0 * tx, ry - s0 * ty, rz - s0 * tz
            d = np.sqrt(qx * qx + qy * qy + qz * qz)
            acc += _segment_In(-s0, length - s0, d, n)
        out[i] = acc
    return out


# ------------------------------------------------------------ Biot-Savart
def _core_radii(link: Link, eps_core: float | None) -> NDArray:
    lengths = np.concatenate([c.segment_lengths for c in link.curves])
    if eps_core is None:
        return CORE_FACTOR * lengths
    return np.full(lengths.shape, float(eps_core))


def biot_savart_velocity(link: Link, x, eps_core: float | None = None, rule: str = "exact") -> NDArray:
    """Velocity ``u_f(x)`` induced by every component of ``link``.

    Parameters
    ----------
    link : Link
        Filaments and their shared circulation ``gamma``.
    x : array_like, shape (3,) or (P, 3)
        Evaluation points.
    eps_core : float, optional
        Core radius.  By default the tube radius is three times the length of
        the segment nearest to the point (the local sample spacing).
    rule : {"exact", "midpoint"}
        ``"exact"`` integrates each straight segment in closed form;
        ``"midpoint"`` applies the midpoint rule, subdividing segments closer
        than five segment lengths to the point.

    Raises
    ------
    CoreProximityError
        If any point lies inside a core tube.
    """
    if rule not in ("exact", "midpoint"):
        raise ValueError(f"unknown quadrature rule {rule!r}")
    pts, single = _as_points(x)
    a, b = link.segment_arrays()
    u, bad = _biot_savart_kernel(pts, a, b, _core_radii(link, eps_core), rule == "midpoint")
    if bad.any():
        i = int(np.argmax(bad))
        raise CoreProximityError(f"point {pts[i].tolist()} lies inside a filament core tube")
    u *= link.gamma / (4.0 * np.pi)
    return u[0] if single else u


# ------------------------------------------------------------ probe loops
@dataclass(frozen=True, eq=False)
class ProbeLoop:
    """Closed, smoothly parametrized loop ``C`` sampled at uniform parameter steps."""

    points: NDArray[np.float64]

    def __post_init__(self):
        p = np.array(self.points, dtype=np.float64)
        if p.ndim != 2 or p.shape[1] != 3 or p.shape[0] < 16:
            raise GeometryError("a probe loop needs >= 16 points of shape (N, 3)")
        if not np.all(np.isfinite(p)):
            raise GeometryError("probe loop points must be finite")
        p.setflags(write=False)
        object.__setattr__(self, "points", p)

    @classmethod
    def circle(cls, center, normal, radius: float, samples: int = 256, turns: int = 1) -> ProbeLoop:
        """Circle right-handed about ``normal``; ``turns`` > 1 traverses it repeatedly."""
        e1, e2 = _perp_basis(normal)
        t = 2.0 * np.pi * turns * np.arange(samples * turns) / (samples * turns)
        pts = np.asarray(center, float) + radius * (np.cos(t)[:, None] * e1 + np.sin(t)[:, None] * e2)
        return cls(pts)

    @cached_property
    def tangents(self) -> NDArray:
        """Derivative with respect to a parameter running over [0, 2*pi)."""
        n = self.points.shape[0]
        k = sfft.fftfreq(n, d=1.0 / n)
        if n % 2 == 0:
            k[n // 2] = 0.0
        return np.real(sfft.ifft(1j * k[:, None] * sfft.fft(self.points, axis=0), axis=0))

    def min_distance(self, curve: FilamentCurve) -> NDArray:
        """Per-segment minimum distance from the loop samples."""
        a, b = curve.seg_start, curve.seg_end
        ab = b - a
        r = self.points[:, None, :] - a[None]
        t = np.clip(np.einsum("psk,sk->ps", r, ab) / np.einsum("sk,sk->s", ab, ab), 0.0, 1.0)
        return np.min(np.linalg.norm(r - t[..., None] * ab[None], axis=2), axis=0)

    def validate(self, link: Link) -> None:
        """Reject loops closer than three local sample spacings to a filament."""
        for ci, c in enumerate(link.curves):
            gap = self.min_distance(c)
            j = int(np.argmin(gap))
            if gap[j] <= CORE_FACTOR * c.segment_lengths[j]:
                raise CoreProximityError(
                    f"probe loop passes within {gap[j]:.3e} of filament {ci} "
                    f"(needs > {CORE_FACTOR} local sample spacings)"
                )


def circulation(link: Link, loop: ProbeLoop) -> float:
    """``oint_C u . dx`` by the trapezoidal rule in the loop parameter.

    For smooth periodic loops the trapezoidal rule converges spectrally.
    """
    loop.validate(link)
    u = biot_savart_velocity(link, loop.points)
    n = loop.points.shape[0]
    return float(np.sum(np.einsum("pk,pk->p", u, loop.tangents)) * (2.0 * np.pi / n))


def winding_number(link: Link, loop: ProbeLoop, tol: float = WINDING_TOL) -> int:
    """Nearest integer to ``circulation / gamma``.

    Raises
    ------
    IllConditionedProbeError
        If the ratio is farther than ``tol`` from an integer or ``gamma == 0``.
    """
    if link.gamma == 0.0:
        raise IllConditionedProbeError("winding number is undefined for gamma = 0")
    ratio = circulation(link, loop) / link.gamma
    w = int(np.rint(ratio))
    if abs(ratio - w) > tol:
        raise IllConditionedProbeError(f"circulation/gamma = {ratio:.6f} is not within {tol} of an integer")
    return w


def random_probe_loops(link: Link, count: int, rng: np.random.Generator, radius: tuple[float, float],
                       max_tilt: float = 0.5, wobble: float = 0.2, samples: int = 256,
                       unlinked_fraction: float = 0.25, max_tries: int = 1000) -> list[tuple[ProbeLoop, int]]:
    """Random valid probe loops with their expected winding numbers.

    Linked loops are wobbly circles centered on a random filament sample with
    normal tilted from the local tangent by at most ``max_tilt`` radians; a
    loop traversed right-handedly about the tangent has winding ``+1`` and is
    reversed at random (winding ``-1``).  About ``unlinked_fraction`` of the
    loops sit beside a filament without encircling it (winding ``0``).
    ``radius`` must be small compared with the distance between strands.
    """
    out: list[tuple[ProbeLoop, int]] = []
    tries = 0
    while len(out) < count:
        tries += 1
        if tries > max_tries:
            raise GeometryError("could not place valid probe loops; reduce the radius range")
        curve = link.curves[int(rng.integers(len(link.curves)))]
        lengths = curve.segment_lengths
        # open filaments: stay on the finely sampled middle part
        candidates = np.arange(lengths.size) if curve.closed else np.flatnonzero(lengths <= 1.01 * lengths.min())
        j = int(rng.choice(candidates))
        center = 0.5 * (curve.seg_start[j] + curve.seg_end[j])
        tangent = curve.tangents[j]
        e1, e2 = _perp_basis(tangent)
        r0 = rng.uniform(*radius)
        linked = rng.uniform() >= unlinked_fraction
        az = rng.uniform(0.0, 2.0 * np.pi)
        side = np.cos(az) * e1 + np.sin(az) * e2
        if linked:
            tilt = rng.uniform(0.0, max_tilt)
            normal = np.cos(tilt) * tangent + np.sin(tilt) * side
        else:
            # beside the filament: the spanning disk stays clear of it
            center = center + 3.0 * r0 * side
            normal = _unit(rng.normal(size=3))
        sign = 1 if rng.uniform() < 0.5 else -1
        n1, n2 = _perp_basis(normal)
        t = 2.0 * np.pi * np.arange(samples) / samples
        k = int(rng.integers(2, 4))
        r = r0 * (1.0 + wobble * np.sin(k * t + rng.uniform(0.0, 2.0 * np.pi)))
        loop_pts = center + r[:, None] * (np.cos(t)[:, None] * n1 + np.sin(t)[:, None] * n2)
        if sign < 0:
            loop_pts = loop_pts[::-1]
        loop = ProbeLoop(loop_pts)
        try:
            loop.validate(link)
        except CoreProximityError:
            continue
        out.append((loop, sign if linked else 0))
    return out


# ------------------------------------------------------------ solid angle
def solid_angle(mesh: SeifertMesh, x, tol: float | None = None, check_cut: bool = True) -> NDArray | float:
    """Oriented solid angle ``Omega(x)`` of ``mesh`` seen from ``x``.

    The sign convention makes ``Omega`` positive on the side the triangle
    normals point to; crossing the surface along its normal lowers
    ``Omega`` by ``4*pi``.

    Parameters
    ----------
    tol : float, optional
        Points within ``tol`` of a triangle (default ``1e-12`` times the mesh
        extent) count as on the surface.
    check_cut : bool
        Raise :class:`OnCutError` for on-surface points.  With ``False`` their
        value is whatever the closed form returns there.
    """
    pts, single = _as_points(x)
    tol = 1e-12 * mesh.scale if tol is None else float(tol)
    v = mesh.vertices
    tri = mesh.triangles
    area2 = np.linalg.norm(mesh.normals, axis=1)
    # |r1.(r2 x r3)| = 2*area*height, so comparing with 2*area*tol tests height <= tol
    omega, on = _solid_angle_kernel(
        pts,
        np.ascontiguousarray(v[tri[:, 0]]),
        np.ascontiguousarray(v[tri[:, 1]]),
        np.ascontiguousarray(v[tri[:, 2]]),
        area2,
        tol,
    )
    if check_cut and on.any():
        i = int(np.argmax(on))
        raise OnCutError(f"point {pts[i].tolist()} lies on the cut surface")
    return float(omega[0]) if single else omega


def solid_angle_and_cut(mesh: SeifertMesh, x, tol: float | None = None) -> tuple[NDArray, NDArray[np.bool_]]:
    """Solid angle and on-surface flag for many points in one pass."""
    pts, _ = _as_points(x)
    tol = 1e-12 * mesh.scale if tol is None else float(tol)
    v, tri = mesh.vertices, mesh.triangles
    return _solid_angle_kernel(
        pts,
        np.ascontiguousarray(v[tri[:, 0]]),
        np.ascontiguousarray(v[tri[:, 1]]),
        np.ascontiguousarray(v[tri[:, 2]]),
        np.linalg.norm(mesh.normals, axis=1),
        tol,
    )


def on_cut(mesh: SeifertMesh, x, tol: float | None = None) -> NDArray[np.bool_]:
    """Boolean flag per point: lies on the cut surface within ``tol``."""
    return solid_angle_and_cut(mesh, x, tol)[1]


def scalar_potential(link: Link, mesh: SeifertMesh, x, tol: float | None = None, check_cut: bool = True):
    """Velocity potential ``phi_f = -gamma * Omega / (4 pi)``, cut at ``mesh``."""
    return -link.gamma / (4.0 * np.pi) * solid_angle(mesh, x, tol=tol, check_cut=check_cut)


def line_scalar_potential(link: Link, x, point=None, direction=None):
    """Potential of straight open filaments: ``gamma/(2 pi)`` times the azimuth.

    The cut is the half-plane where the azimuth wraps from ``+pi`` to ``-pi``
    (behind the axis along ``-e1``).  Each component of ``link`` must be a
    straight open line; its first and last points fix the axis.
    """
    pts, single = _as_points(x)
    total = np.zeros(pts.shape[0])
    for c in link.curves:
        if c.closed:
            raise GeometryError("line_scalar_potential needs open straight filaments")
        p0, p1 = c.points[0], c.points[-1]
        d = (p1 - p0) / np.linalg.norm(p1 - p0)
        e1, e2 = _perp_basis(d)
        r = pts - p0
        total += np.arctan2(r @ e2, r @ e1)
    out = link.gamma / (2.0 * np.pi) * total
    return float(out[0]) if single else out


# ------------------------------------------------------------ regularizer
def _In_beta(pts, a, b, n):
    # general n >= 4: integral of (u^2+d^2)^(-n/2) via the regularized incomplete beta
    seg = b - a
    length = np.linalg.norm(seg, axis=1)
    t = seg / length[:, None]
    out = np.zeros(pts.shape[0])
    alpha, beta = 0.5, 0.5 * (n - 1)
    scale = 0.5 * special.beta(alpha, beta)
    for i0 in range(0, pts.shape[0], 4096):
        p = pts[i0:i0 + 4096]
        r = p[:, None, :] - a[None]
        s0 = np.einsum("psk,sk->ps", r, t)
        d = np.linalg.norm(r - s0[..., None] * t[None], axis=2)
        u0, u1 = -s0, length[None] - s0
        with np.errstate(divide="ignore", invalid="ignore"):
            # tail(u) = integral from |u| to infinity, computed with the complementary beta
            def tail(u):
                x = d * d / (u * u + d * d)
                return scale * special.betainc(beta, alpha, x) / d ** (n - 1)

            full = 2.0 * scale / d ** (n - 1)
            straddle = (u0 < 0) & (u1 > 0)
            pos = u0 >= 0
            val = np.where(
                straddle,
                full - tail(u0) - tail(u1),
                np.where(pos, tail(u0) - tail(u1), tail(u1) - tail(u0)),
            )
            # d = 0 off the segment: power law
            au0, au1 = np.minimum(np.abs(u0), np.abs(u1)), np.maximum(np.abs(u0), np.abs(u1))
            plaw = (au0 ** (1 - n) - au1 ** (1 - n)) / (n - 1)
            val = np.where(d == 0.0, np.where(straddle | (au0 == 0.0), np.inf, plaw), val)
        out[i0:i0 + 4096] = val.sum(axis=1)
    return out


def nodal_regularizer(curve: FilamentCurve | Link, n: int, x) -> NDArray | float:
    """``I_n(x) = int dsigma / |x - R_f(sigma)|^n`` along the polyline, exactly per segment.

    Passing a :class:`Link` sums over all components.  Points on the filament
    return ``+inf``, so ``1 / I_n`` is exactly zero there.
    """
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    n = int(n)
    pts, single = _as_points(x)
    if isinstance(curve, Link):
        a, b = curve.segment_arrays()
    else:
        a, b = np.ascontiguousarray(curve.seg_start), np.ascontiguousarray(curve.seg_end)
    if n <= 3:
        out = _regularizer_kernel(pts, a, b, n)
    else:
        out = _In_beta(pts, a, b, n)
    return float(out[0]) if single else out
