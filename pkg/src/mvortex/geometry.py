"""Filament curves, links and Seifert-surface meshes.

Curves are sampled polylines; closed curves join the last point back to the
first.  The tangent direction is the circulation direction (right-hand rule).
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.interpolate import CubicSpline

from .errors import (
    BoundaryMismatchError,
    GeometryError,
    MeshFormatError,
    NonPlanarError,
    OrientationError,
)

MIN_CURVE_POINTS = 8


def _unit(v, name="vector"):
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if not np.isfinite(n) or n == 0.0:
        raise GeometryError(f"{name} must be a non-zero finite 3-vector")
    return v / n


def _perp_basis(normal):
    """Orthonormal (e1, e2) with e1 x e2 = n.

    ``e1`` is identical for ``n`` and ``-n``, so flipping the normal flips ``e2``
    and therefore the traversal direction of anything built on the basis.
    """
    n = _unit(normal, "normal")
    helper = np.zeros(3)
    helper[np.argmin(np.abs(n))] = 1.0
    e1 = helper - np.dot(helper, n) * n
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    return e1, e2


@dataclass(frozen=True, eq=False)
class FilamentCurve:
    """Oriented polyline ``R_f(sigma_i)``."""

    points: NDArray[np.float64]
    closed: bool = True

    def __post_init__(self):
        p = np.array(self.points, dtype=np.float64)
        if p.ndim != 2 or p.shape[1] != 3:
            raise GeometryError("curve points must have shape (N, 3)")
        if p.shape[0] < MIN_CURVE_POINTS:
            raise GeometryError(f"a filament needs >= {MIN_CURVE_POINTS} points, got {p.shape[0]}")
        if not np.all(np.isfinite(p)):
            raise GeometryError("curve points must be finite")
        seg = self._segments_of(p, self.closed)
        if np.any(np.linalg.norm(seg, axis=1) == 0.0):
            raise GeometryError("consecutive curve points must be distinct")
        p.setflags(write=False)
        object.__setattr__(self, "points", p)

    @staticmethod
    def _segments_of(p, closed):
        if closed:
            return np.roll(p, -1, axis=0) - p
        return p[1:] - p[:-1]

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @cached_property
    def seg_start(self) -> NDArray:
        return self.points if self.closed else self.points[:-1]

    @cached_property
    def seg_end(self) -> NDArray:
        return np.roll(self.points, -1, axis=0) if self.closed else self.points[1:]

    @cached_property
    def segments(self) -> NDArray:
        return self._segments_of(self.points, self.closed)

    @cached_property
    def segment_lengths(self) -> NDArray:
        return np.linalg.norm(self.segments, axis=1)

    @cached_property
    def tangents(self) -> NDArray:
        """Unit tangent of each segment."""
        return self.segments / self.segment_lengths[:, None]

    @cached_property
    def length(self) -> float:
        return float(np.sum(self.segment_lengths))

    @property
    def sample_spacing(self) -> float:
        return float(np.max(self.segment_lengths))

    @property
    def centroid(self) -> NDArray:
        return self.points.mean(axis=0)

    def reversed(self) -> FilamentCurve:
        return FilamentCurve(self.points[::-1].copy(), self.closed)

    def translated(self, offset) -> FilamentCurve:
        return FilamentCurve(self.points + np.asarray(offset, dtype=float), self.closed)


@dataclass(frozen=True, eq=False)
class Link:
    """One or more filaments sharing the circulation constant ``gamma``."""

    curves: tuple[FilamentCurve, ...]
    gamma: float

    def __post_init__(self):
        curves = tuple(self.curves) if not isinstance(self.curves, FilamentCurve) else (self.curves,)
        if not curves:
            raise GeometryError("a link needs at least one curve")
        if not np.isfinite(self.gamma):
            raise GeometryError("gamma must be finite")
        object.__setattr__(self, "curves", curves)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def all_closed(self) -> bool:
        return all(c.closed for c in self.curves)

    def segment_arrays(self):
        """Concatenated ``(start, end)`` segment endpoints of every component."""
        a = np.concatenate([c.seg_start for c in self.curves])
        b = np.concatenate([c.seg_end for c in self.curves])
        return np.ascontiguousarray(a), np.ascontiguousarray(b)

    @property
    def sample_spacing(self) -> float:
        return max(c.sample_spacing for c in self.curves)

    def with_gamma(self, gamma: float) -> Link:
        return Link(self.curves, gamma)


# ------------------------------------------------------------------ builders
def trefoil_curve(samples: int = 256) -> FilamentCurve:
    """Trefoil ``(sin t + 2 sin 2t, cos t - 2 cos 2t, -sin 3t)``, ``t`` uniform on [0, 2pi)."""
    if samples < 64:
        raise GeometryError(f"trefoil needs >= 64 samples, got {samples}")
    t = 2.0 * np.pi * np.arange(samples) / samples
    pts = np.stack(
        [np.sin(t) + 2.0 * np.sin(2.0 * t), np.cos(t) - 2.0 * np.cos(2.0 * t), -np.sin(3.0 * t)],
        axis=1,
    )
    return FilamentCurve(pts, closed=True)


def circle_curve(radius: float, center=(0.0, 0.0, 0.0), normal=(0.0, 0.0, 1.0), samples: int = 128) -> FilamentCurve:
    """Planar circle traversed right-handedly about ``normal``."""
    if not radius > 0:
        raise GeometryError("radius must be positive")
    e1, e2 = _perp_basis(normal)
    t = 2.0 * np.pi * np.arange(samples) / samples
    pts = np.asarray(center, dtype=float) + radius * (np.cos(t)[:, None] * e1 + np.sin(t)[:, None] * e2)
    return FilamentCurve(pts, closed=True)


def line_filament(direction=(0.0, 0.0, 1.0), point=(0.0, 0.0, 0.0), half_length: float = 1.0e4,
                  samples: int = 257, inner: float | None = None) -> FilamentCurve:
    """Open straight filament from ``point - L d`` to ``point + L d``.

    Samples are uniform within ``|s| <= inner`` (default ``min(L, 10)``) and
    grow geometrically beyond it, so the local spacing stays small where
    probes are placed.  Truncation error of the velocity at distance ``rho``
    is ``O((rho / L)^2)`` relative.
    """
    d = _unit(direction, "direction")
    if not half_length > 0:
        raise GeometryError("half_length must be positive")
    if samples < MIN_CURVE_POINTS:
        raise GeometryError(f"a filament needs >= {MIN_CURVE_POINTS} points")
    inner = min(half_length, 10.0) if inner is None else min(inner, half_length)
    if inner >= half_length:
        s = np.linspace(-half_length, half_length, samples)
    else:
        n_out = max(2, samples // 8)
        n_in = samples - 2 * n_out
        core = np.linspace(-inner, inner, n_in)
        h = core[1] - core[0]
        # geometric growth from spacing h reaching half_length in n_out steps
        ratio = _growth_ratio(h, half_length - inner, n_out)
        steps = h * ratio ** np.arange(1, n_out + 1)
        outer = inner + np.cumsum(steps)
        outer[-1] = half_length
        s = np.concatenate([-outer[::-1], core, outer])
    pts = np.asarray(point, dtype=float) + s[:, None] * d
    return FilamentCurve(pts, closed=False)


def _growth_ratio(h, span, n):
    # solve h * sum_{k=1..n} r^k = span for r > 1 by bisection
    lo, hi = 1.0, 2.0
    while h * sum(hi ** k for k in range(1, n + 1)) < span:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if h * sum(mid ** k for k in range(1, n + 1)) < span:
            lo = mid
        else:
            hi = mid
    return hi


_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


def reparametrize_arclength(curve: FilamentCurve, samples: int | None = None) -> FilamentCurve:
    """Resample ``curve`` at equal arclength along a cubic-spline interpolant.

    The spline passes through the input points (parametrized by cumulative
    chord length; periodic for closed curves).  Output spacing is uniform in
    the spline's arclength, computed by 8-point Gauss-Legendre per interval.
    """
    samples = curve.n_points if samples is None else int(samples)
    p = curve.points
    seg = curve.segment_lengths
    tau = np.concatenate([[0.0], np.cumsum(seg)])
    if curve.closed:
        spline = CubicSpline(tau, np.vstack([p, p[:1]]), bc_type="periodic")
    else:
        spline = CubicSpline(tau, p)
    dspline = spline.derivative()

    def arc(a, b):
        mid = 0.5 * (a + b)
        half = 0.5 * (b - a)
        speed = np.linalg.norm(dspline(mid[:, None] + half[:, None] * _GL_X), axis=-1)
        return np.sum(half[:, None] * _GL_W * speed, axis=1)

    a, b = tau[:-1], tau[1:]
    cum = np.concatenate([[0.0], np.cumsum(arc(a, b))])
    total = cum[-1]
    if curve.closed:
        targets = total * np.arange(samples) / samples
    else:
        targets = total * np.arange(samples) / (samples - 1)
    idx = np.clip(np.searchsorted(cum, targets, side="right") - 1, 0, len(a) - 1)
    x = a[idx] + (targets - cum[idx]) / (cum[idx + 1] - cum[idx]) * (b[idx] - a[idx])
    for _ in range(8):
        resid = cum[idx] + arc(a[idx], x) - targets
        x = x - resid / np.linalg.norm(dspline(x), axis=1)
    x = np.clip(x, a[idx], b[idx])
    return FilamentCurve(spline(x), closed=curve.closed)


# ------------------------------------------------------------------- meshes
@dataclass(frozen=True, eq=False)
class SeifertMesh:
    """Oriented triangulated spanning surface used as the branch cut."""

    vertices: NDArray[np.float64]
    triangles: NDArray[np.int64]

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64)
        t = np.array(self.triangles, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3 or t.ndim != 2 or t.shape[1] != 3:
            raise MeshFormatError("vertices must be (V, 3) and triangles (F, 3)")
        if t.size and (t.min() < 0 or t.max() >= v.shape[0]):
            raise MeshFormatError("triangle index out of range")
        if not np.all(np.isfinite(v)):
            raise MeshFormatError("mesh vertices must be finite")
        v.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    @cached_property
    def normals(self) -> NDArray:
        """Unnormalized area-weighted normals (length = 2 * area)."""
        a, b, c = (self.vertices[self.triangles[:, k]] for k in range(3))
        return np.cross(b - a, c - a)

    @property
    def area(self) -> float:
        return float(0.5 * np.sum(np.linalg.norm(self.normals, axis=1)))

    @property
    def scale(self) -> float:
        return float(np.ptp(self.vertices, axis=0).max())

    def _directed_edges(self):
        t = self.triangles
        return np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])

    def orientation_defects(self) -> list[tuple[int, int]]:
        """Undirected edges that break consistent orientation.

        An edge is defective when two triangles traverse it in the same
        direction or when more than two triangles share it.
        """
        counts: dict[tuple[int, int], list[int]] = {}
        for i, j in self._directed_edges().tolist():
            key = (min(i, j), max(i, j))
            counts.setdefault(key, []).append(1 if i < j else -1)
        bad = []
        for key, dirs in counts.items():
            if len(dirs) > 2 or (len(dirs) == 2 and dirs[0] == dirs[1]):
                bad.append(key)
        return bad

    def boundary_edges(self) -> NDArray[np.int64]:
        """Directed edges used by exactly one triangle, in triangle order."""
        edges = self._directed_edges()
        und = np.sort(edges, axis=1)
        _, inv, cnt = np.unique(und, axis=0, return_inverse=True, return_counts=True)
        return edges[cnt[inv.ravel()] == 1]

    def boundary_loops(self) -> list[NDArray[np.int64]]:
        """Boundary edges chained into vertex cycles following edge direction."""
        nxt: dict[int, int] = {}
        for i, j in self.boundary_edges().tolist():
            if i in nxt:
                raise OrientationError(f"boundary vertex {i} starts two boundary edges")
            nxt[i] = j
        loops = []
        while nxt:
            start = next(iter(nxt))
            loop = [start]
            cur = nxt.pop(start)
            while cur != start:
                if cur not in nxt:
                    raise OrientationError("boundary edges do not form closed cycles")
                loop.append(cur)
                cur = nxt.pop(cur)
            loops.append(np.asarray(loop, dtype=np.int64))
        return loops

    def flipped_triangle(self, index: int = 0) -> SeifertMesh:
        t = self.triangles.copy()
        t[index] = t[index][::-1]
        return SeifertMesh(self.vertices, t)

    def validate(self, link: Link | None = None, tol: float | None = None) -> None:
        """Raise on inconsistent orientation or a boundary that misses ``link``.

        ``tol`` defaults to ``1e-6`` times the mesh extent.  Boundary edges must
        run in the same direction as the matching filament.
        """
        bad = self.orientation_defects()
        if bad:
            raise OrientationError(f"inconsistent triangle orientation on {len(bad)} edge(s), e.g. {bad[0]}")
        if link is None:
            return
        tol = 1e-6 * self.scale if tol is None else tol
        loops = self.boundary_loops()
        bverts = np.concatenate(loops) if loops else np.zeros(0, dtype=np.int64)
        if bverts.size == 0:
            raise BoundaryMismatchError("mesh has no boundary")
        bpts = self.vertices[bverts]
        for ci, curve in enumerate(link.curves):
            d = np.linalg.norm(curve.points[:, None, :] - bpts[None, :, :], axis=2)
            nearest = np.argmin(d, axis=1)
            miss = d[np.arange(len(nearest)), nearest]
            if miss.max() > tol:
                raise BoundaryMismatchError(
                    f"filament {ci} misses the mesh boundary by {miss.max():.3e} > tol {tol:.3e}"
                )
            # traversal direction: successive curve points map to successive boundary vertices
            vid = bverts[nearest]
            edge_set = {tuple(e) for e in self.boundary_edges().tolist()}
            fwd = sum((int(vid[k]), int(vid[(k + 1) % len(vid)])) in edge_set for k in range(len(vid)))
            rev = sum((int(vid[(k + 1) % len(vid)]), int(vid[k])) in edge_set for k in range(len(vid)))
            if rev > fwd:
                raise OrientationError(
                    f"mesh boundary runs against filament {ci}; surface normal violates the right-hand rule"
                )
        covered = np.zeros(len(bpts), dtype=bool)
        for curve in link.curves:
            d = _point_polyline_distance(bpts, curve)
            covered |= d <= tol
        if not covered.all():
            raise BoundaryMismatchError(f"{(~covered).sum()} mesh boundary vertices lie off the filaments")


def _point_polyline_distance(pts, curve: FilamentCurve):
    a, b = curve.seg_start, curve.seg_end
    ab = b - a
    t = np.einsum("psk,sk->ps", pts[:, None, :] - a[None], ab) / np.einsum("sk,sk->s", ab, ab)
    t = np.clip(t, 0.0, 1.0)
    proj = a[None] + t[..., None] * ab[None]
    return np.min(np.linalg.norm(pts[:, None, :] - proj, axis=2), axis=1)


def disk_mesh(circle: FilamentCurve, rings: int = 1, planarity_tol: float = 1e-9) -> SeifertMesh:
    """Flat spanning disk for a planar closed curve.

    Vertex 0 is the centroid; ring ``k`` (1..rings) is the boundary scaled by
    ``k / rings`` about it, the last ring being the input points themselves.
    Triangles are ordered so their normals follow the curve's right-hand rule.
    """
    if not circle.closed:
        raise GeometryError("disk_mesh needs a closed curve")
    if rings < 1:
        raise GeometryError("rings must be >= 1")
    p = circle.points
    c = p.mean(axis=0)
    q = p - c
    _, sv, vt = np.linalg.svd(q, full_matrices=False)
    scale = np.abs(q).max()
    if sv[-1] / np.sqrt(len(p)) > planarity_tol * scale:
        raise NonPlanarError(f"curve is not planar (rms out-of-plane {sv[-1] / np.sqrt(len(p)):.3e})")
    n = len(p)
    verts = [c[None, :]]
    for k in range(1, rings):
        verts.append(c + q * (k / rings))
    verts.append(p)
    V = np.vstack(verts)

    def ring(k, i):
        return 1 + (k - 1) * n + (i % n)

    tris = [(0, ring(1, i), ring(1, i + 1)) for i in range(n)]
    for k in range(1, rings):
        for i in range(n):
            a0, a1 = ring(k, i), ring(k, i + 1)
            b0, b1 = ring(k + 1, i), ring(k + 1, i + 1)
            tris.append((a0, b0, b1))
            tris.append((a0, b1, a1))
    return SeifertMesh(V, np.asarray(tris, dtype=np.int64))


# ---------------------------------------------------------------------- OFF
def write_off(mesh: SeifertMesh, path: str | os.PathLike) -> Path:
    path = Path(path)
    lines = ["OFF", f"{len(mesh.vertices)} {len(mesh.triangles)} 0"]
    lines += [f"{x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    lines += [f"3 {i} {j} {k}" for i, j, k in mesh.triangles.tolist()]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_off(path: str | os.PathLike) -> SeifertMesh:
    raw = Path(path).read_text().splitlines()
    tokens = []
    for line in raw:
        line = line.split("#", 1)[0].strip()
        if line:
            tokens.append(line)
    if not tokens or tokens[0] != "OFF":
        raise MeshFormatError("OFF file must start with an 'OFF' header line")
    try:
        nv, nf, _ = (int(x) for x in tokens[1].split()[:3])
        verts = np.array([[float(x) for x in tokens[2 + i].split()[:3]] for i in range(nv)])
        faces = []
        for i in range(nf):
            parts = [int(x) for x in tokens[2 + nv + i].split()]
            if parts[0] != 3:
                raise MeshFormatError("only triangular faces are supported")
            faces.append(parts[1:4])
    except (IndexError, ValueError) as exc:
        raise MeshFormatError(f"malformed OFF file: {exc}") from exc
    return SeifertMesh(verts.reshape(-1, 3), np.asarray(faces, dtype=np.int64).reshape(-1, 3))


def load_seifert_mesh(path: str | os.PathLike, link: Link | None = None, tol: float | None = None) -> SeifertMesh:
    """Read an OFF mesh and validate orientation (and boundary, given ``link``)."""
    mesh = read_off(path)
    mesh.validate(link, tol)
    return mesh


def link_from_curves(curves: Sequence[FilamentCurve] | FilamentCurve, gamma: float) -> Link:
    if isinstance(curves, FilamentCurve):
        curves = (curves,)
    return Link(tuple(curves), gamma)
