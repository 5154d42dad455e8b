"""Uniform periodic 3D grids and spectral operators.

Arrays are indexed ``[ix, iy, iz]``; the on-disk layout (x fastest) is handled
by :mod:`mvortex.qvg`.  All arithmetic is float64/complex128.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft
from numpy.typing import NDArray

_FFT_WORKERS = 1


def set_threads(n: int) -> None:
    """Set the worker count used by every FFT in the package."""
    global _FFT_WORKERS
    if n < 1:
        raise ValueError("thread count must be >= 1")
    _FFT_WORKERS = int(n)


def fft_workers() -> int:
    return _FFT_WORKERS


def _triple(value, kind, name):
    arr = tuple(kind(v) for v in np.broadcast_to(np.asarray(value), (3,)))
    if len(arr) != 3:
        raise ValueError(f"{name} must have three entries")
    return arr


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic box: ``dims`` points per axis starting at ``origin``."""

    dims: tuple[int, int, int]
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        dims = _triple(self.dims, int, "dims")
        origin = _triple(self.origin, float, "origin")
        spacing = _triple(self.spacing, float, "spacing")
        if any(d < 4 for d in dims):
            raise ValueError(f"every grid dimension must be >= 4, got {dims}")
        if not all(np.isfinite(origin)):
            raise ValueError("origin must be finite")
        if not all(np.isfinite(s) and s > 0 for s in spacing):
            raise ValueError(f"spacing must be positive and finite, got {spacing}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "spacing", spacing)

    @classmethod
    def centered(cls, dims, lengths, center=(0.0, 0.0, 0.0)) -> GridSpec:
        """Box of periodic side ``lengths`` whose midpoint sits at ``center``.

        With even ``dims`` the center is itself a grid point.
        """
        dims = np.broadcast_to(np.asarray(dims, dtype=int), (3,))
        lengths = np.broadcast_to(np.asarray(lengths, dtype=float), (3,))
        center = np.broadcast_to(np.asarray(center, dtype=float), (3,))
        spacing = lengths / dims
        origin = center - spacing * (dims // 2)
        return cls(tuple(dims), tuple(origin), tuple(spacing))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.dims

    @property
    def n_points(self) -> int:
        return self.dims[0] * self.dims[1] * self.dims[2]

    @property
    def cell_volume(self) -> float:
        return self.spacing[0] * self.spacing[1] * self.spacing[2]

    @property
    def lengths(self) -> NDArray[np.float64]:
        """Periodic box lengths ``n * h``."""
        return np.asarray(self.dims) * np.asarray(self.spacing)

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    def axes(self) -> list[NDArray[np.float64]]:
        return [self.origin[a] + self.spacing[a] * np.arange(self.dims[a]) for a in range(3)]

    def mesh(self) -> tuple[NDArray, NDArray, NDArray]:
        return tuple(np.meshgrid(*self.axes(), indexing="ij"))

    def points(self) -> NDArray[np.float64]:
        """All grid points as an ``(nx*ny*nz, 3)`` array in C order of ``[ix, iy, iz]``."""
        X, Y, Z = self.mesh()
        return np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)

    def wavenumbers(self) -> list[NDArray[np.float64]]:
        return [2.0 * np.pi * sfft.fftfreq(self.dims[a], d=self.spacing[a]) for a in range(3)]

    def bounds(self) -> tuple[NDArray, NDArray]:
        lo = np.asarray(self.origin)
        hi = lo + np.asarray(self.spacing) * (np.asarray(self.dims) - 1)
        return lo, hi

    def contains(self, points, margin: float = 0.0) -> NDArray[np.bool_]:
        lo, hi = self.bounds()
        p = np.atleast_2d(points)
        return np.all((p >= lo + margin) & (p <= hi - margin), axis=1)

    @cached_property
    def _k_cache(self):
        return _Wavenumbers(self)


class _Wavenumbers:
    """Broadcastable wavenumber arrays, first-derivative versions with Nyquist zeroed."""

    def __init__(self, spec: GridSpec):
        ks = spec.wavenumbers()
        self.k = [k.reshape([-1 if a == b else 1 for b in range(3)]) for a, k in enumerate(ks)]
        odd = []
        for a, k in enumerate(ks):
            k = k.copy()
            if spec.dims[a] % 2 == 0:
                k[spec.dims[a] // 2] = 0.0
            odd.append(k.reshape([-1 if a == b else 1 for b in range(3)]))
        self.k_odd = odd
        self.k2 = self.k[0] ** 2 + self.k[1] ** 2 + self.k[2] ** 2
        # rfft variants along the last axis
        nz = spec.dims[2]
        kz_r = 2.0 * np.pi * sfft.rfftfreq(nz, d=spec.spacing[2])
        kz_r_odd = kz_r.copy()
        if nz % 2 == 0:
            kz_r_odd[-1] = 0.0
        self.kr = [self.k[0], self.k[1], kz_r.reshape(1, 1, -1)]
        self.kr_odd = [self.k_odd[0], self.k_odd[1], kz_r_odd.reshape(1, 1, -1)]
        self.k2r = self.kr[0] ** 2 + self.kr[1] ** 2 + self.kr[2] ** 2


def _check_finite(arr, what="field"):
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contains non-finite values")


@dataclass(frozen=True, eq=False)
class ComplexGrid3:
    """Complex scalar field sampled on a :class:`GridSpec`."""

    spec: GridSpec
    values: NDArray[np.complex128]

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.complex128)
        if v.shape != self.spec.dims:
            raise ValueError(f"values shape {v.shape} does not match grid dims {self.spec.dims}")
        _check_finite(v)
        object.__setattr__(self, "values", v)

    def with_values(self, values) -> ComplexGrid3:
        return ComplexGrid3(self.spec, values)

    def norm2(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2) * self.spec.cell_volume)


@dataclass(frozen=True, eq=False)
class RealGrid3:
    """Real scalar field; ``mask`` marks points excluded from quadratures."""

    spec: GridSpec
    values: NDArray[np.float64]
    mask: NDArray[np.bool_] | None = field(default=None)

    def __post_init__(self):
        v = np.asarray(self.values)
        if np.iscomplexobj(v):
            raise TypeError("RealGrid3 values must be real")
        v = v.astype(np.float64, copy=False)
        if v.shape != self.spec.dims:
            raise ValueError(f"values shape {v.shape} does not match grid dims {self.spec.dims}")
        _check_finite(v)
        object.__setattr__(self, "values", v)
        if self.mask is not None:
            m = np.asarray(self.mask, dtype=bool)
            if m.shape != self.spec.dims:
                raise ValueError("mask shape does not match grid dims")
            object.__setattr__(self, "mask", m)


@dataclass(frozen=True, eq=False)
class VectorGrid3:
    """Three-component field, ``values`` shaped ``(3, nx, ny, nz)``.

    Components are real for physical vector fields (u, A); the gradient of a
    complex field keeps complex components.
    """

    spec: GridSpec
    values: NDArray

    def __post_init__(self):
        v = np.asarray(self.values)
        if not np.iscomplexobj(v):
            v = v.astype(np.float64, copy=False)
        if v.shape != (3, *self.spec.dims):
            raise ValueError(f"vector values must have shape (3, {self.spec.dims}), got {v.shape}")
        _check_finite(v)
        object.__setattr__(self, "values", v)

    def magnitude(self) -> NDArray[np.float64]:
        return np.sqrt(np.sum(np.abs(self.values) ** 2, axis=0))


Grid = ComplexGrid3 | RealGrid3


# ---------------------------------------------------------------- array level
def grad_array(arr: NDArray, spec: GridSpec) -> NDArray:
    """Spectral gradient of a periodic array; returns shape ``(3, *dims)``."""
    kc = spec._k_cache
    w = _FFT_WORKERS
    if np.iscomplexobj(arr):
        f = sfft.fftn(arr, workers=w)
        return np.stack([sfft.ifftn(1j * kc.k_odd[a] * f, workers=w) for a in range(3)])
    f = sfft.rfftn(arr, workers=w)
    return np.stack(
        [sfft.irfftn(1j * kc.kr_odd[a] * f, s=arr.shape, workers=w) for a in range(3)]
    )


def laplacian_array(arr: NDArray, spec: GridSpec) -> NDArray:
    kc = spec._k_cache
    w = _FFT_WORKERS
    if np.iscomplexobj(arr):
        return sfft.ifftn(-kc.k2 * sfft.fftn(arr, workers=w), workers=w)
    return sfft.irfftn(-kc.k2r * sfft.rfftn(arr, workers=w), s=arr.shape, workers=w)


def divergence_array(vec: NDArray, spec: GridSpec) -> NDArray:
    kc = spec._k_cache
    w = _FFT_WORKERS
    if np.iscomplexobj(vec):
        acc = sum(1j * kc.k_odd[a] * sfft.fftn(vec[a], workers=w) for a in range(3))
        return sfft.ifftn(acc, workers=w)
    acc = sum(1j * kc.kr_odd[a] * sfft.rfftn(vec[a], workers=w) for a in range(3))
    return sfft.irfftn(acc, s=vec.shape[1:], workers=w)


def curl_array(vec: NDArray, spec: GridSpec) -> NDArray:
    g = [grad_array(vec[a], spec) for a in range(3)]  # g[a][b] = d_b v_a
    return np.stack([g[2][1] - g[1][2], g[0][2] - g[2][0], g[1][0] - g[0][1]])


# ---------------------------------------------------------------- grid level
def spectral_gradient(g: Grid) -> VectorGrid3:
    """Gradient by multiplication with ``ik`` per axis (Nyquist mode dropped)."""
    _check_finite(g.values)
    return VectorGrid3(g.spec, grad_array(g.values, g.spec))


def spectral_laplacian(g: Grid) -> Grid:
    """Laplacian by multiplication with ``-|k|^2``."""
    _check_finite(g.values)
    out = laplacian_array(g.values, g.spec)
    if isinstance(g, ComplexGrid3):
        return ComplexGrid3(g.spec, out)
    return RealGrid3(g.spec, out)


def spectral_divergence(v: VectorGrid3) -> Grid:
    out = divergence_array(v.values, v.spec)
    if np.iscomplexobj(out):
        return ComplexGrid3(v.spec, out)
    return RealGrid3(v.spec, out)


def spectral_curl(v: VectorGrid3) -> VectorGrid3:
    return VectorGrid3(v.spec, curl_array(v.values, v.spec))


def integrate(g: Grid, mask: NDArray[np.bool_] | None = None):
    """Riemann sum times cell volume; points where ``mask`` is True are skipped.

    Returns a Python complex for complex grids and a float for real grids.
    """
    vals = g.values
    if mask is None and isinstance(g, RealGrid3):
        mask = g.mask
    if mask is not None:
        vals = np.where(mask, 0.0, vals)
    total = np.sum(vals) * g.spec.cell_volume
    return complex(total) if np.iscomplexobj(vals) else float(total)


def parseval_sums(arr: NDArray) -> tuple[float, float]:
    """``(sum |v|^2, sum |fft v|^2 / N)``; equal up to rounding."""
    spec_vals = sfft.fftn(arr, workers=_FFT_WORKERS)
    return float(np.sum(np.abs(arr) ** 2)), float(np.sum(np.abs(spec_vals) ** 2) / arr.size)


def spectral_interpolate(arr: NDArray, spec: GridSpec, points) -> NDArray:
    """Evaluate the trigonometric interpolant of a periodic array at off-grid points.

    Cost is ``O(P * N)`` for ``P`` points and ``N`` grid points; meant for
    probe loops and filament samples, not whole grids.  The Nyquist mode is
    split symmetrically so real arrays interpolate to real values.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    coef = sfft.fftn(arr, workers=_FFT_WORKERS) / arr.size
    phases = []
    for a in range(3):
        n = spec.dims[a]
        k = 2.0 * np.pi * sfft.fftfreq(n, d=spec.spacing[a])
        x = pts[:, a] - spec.origin[a]
        e = np.exp(1j * np.outer(x, k))
        if n % 2 == 0:
            e[:, n // 2] = np.cos(k[n // 2] * x)
        phases.append(e)
    t = np.einsum("ijk,pk->pij", coef, phases[2])
    t = np.einsum("pij,pj->pi", t, phases[1])
    out = np.einsum("pi,pi->p", t, phases[0])
    return out if np.iscomplexobj(arr) else out.real
