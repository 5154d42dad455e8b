"""Self-check suite: identities and invariants on a small grid.

:func:`run_suite` returns a JSON-ready report whose layout (schema tag,
check names and fields) is fixed; only values change with the inputs.
Timings are deliberately left out so that reports are reproducible.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .evolution import EvolveConfig, evolve_linear, stability_bound
from .exact import FreeGaussian, HarmonicCoherentState
from .geometry import Link, SeifertMesh, circle_curve, disk_mesh, line_filament, trefoil_curve
from .grid import ComplexGrid3, GridSpec, RealGrid3, laplacian_array
from .identity import identity_residual, identity_residual_em
from .kernels import biot_savart_velocity, circulation, random_probe_loops, scalar_potential
from .madelung import bohm_force_integral, decompose
from .qvg import decode_grid, encode_grid
from .radiation import acceleration_moments, nonlinear_power, quantum_larmor
from .wavefunction import GaussianEnvelope, PhysicalConstants, build_initial_state, quantization_check, sheet_phase

SCHEMA = "mvortex.verify/1"


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: float | None
    tolerance: float | None
    detail: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "value": self.value, "tolerance": self.tolerance, "detail": self.detail}


def _ring(radius: float = 1.5, samples: int = 128, center=(0.0, 0.0, 0.0)):
    curve = circle_curve(radius, center=center, samples=samples)
    return curve, Link((curve,), 2.0 * math.pi), disk_mesh(curve)


def _flip_first(mesh: SeifertMesh) -> SeifertMesh:
    return mesh.flipped_triangle(0)


class _Suite:
    def __init__(self, dims: int, seed: int, fault: str | None):
        self.dims = dims
        self.seed = seed
        self.fault = fault
        self.c = PhysicalConstants()
        self.spec = GridSpec.centered(dims, 16.0)

    # each check returns (value, tolerance, detail); value <= tolerance passes
    def qvg_roundtrip(self):
        rng = np.random.default_rng(self.seed)
        vals = rng.normal(size=self.spec.dims) + 1j * rng.normal(size=self.spec.dims)
        g = ComplexGrid3(self.spec, vals)
        back = decode_grid(encode_grid(g))
        same = back.spec == g.spec and back.values.tobytes() == g.values.tobytes()
        return (0.0 if same else 1.0), 0.0, ""

    def spectral_laplacian(self):
        X, Y, Z = self.spec.mesh()
        k = 2.0 * math.pi / 16.0 * np.array([1.0, 2.0, 3.0])
        f = np.exp(1j * (k[0] * X + k[1] * Y + k[2] * Z))
        err = np.max(np.abs(laplacian_array(f, self.spec) + np.dot(k, k) * f))
        return float(err / np.dot(k, k)), 1e-12, ""

    def mesh_orientation(self):
        _, link, mesh = _ring()
        if self.fault == "flip_triangle":
            mesh = _flip_first(mesh)
        mesh.validate(link)
        return 0.0, 0.0, ""

    def circulation_quantization(self):
        rng = np.random.default_rng(self.seed)
        worst = 0.0
        for curve, rad in (
            (circle_curve(1.5, samples=128), (0.25, 0.5)),
            (line_filament(), (0.3, 1.0)),
            (trefoil_curve(512), (0.15, 0.3)),
        ):
            link = Link((curve,), 2.0 * math.pi)
            for loop, w in random_probe_loops(link, 5, rng, rad):
                worst = max(worst, abs(circulation(link, loop) / link.gamma - w))
        return worst, 1e-3, ""

    def gradient_potential(self):
        _, link, mesh = _ring()
        rng = np.random.default_rng(self.seed)
        pts = rng.uniform(-1.2, 1.2, size=(20, 3))
        pts[:, 2] = np.where(np.abs(pts[:, 2]) < 0.2, 0.2 * np.sign(pts[:, 2] + 1e-300), pts[:, 2])
        h = 1e-4
        u = biot_savart_velocity(link, pts)
        g = np.empty_like(u)
        for a in range(3):
            e = np.zeros(3)
            e[a] = h
            g[:, a] = (scalar_potential(link, mesh, pts + e) - scalar_potential(link, mesh, pts - e)) / (2 * h)
        rel = np.linalg.norm(g - u, axis=1) / np.linalg.norm(u, axis=1)
        return float(rel.max()), 1e-5, ""

    def cut_jump(self):
        _, link, mesh = _ring()
        rng = np.random.default_rng(self.seed)
        r = 1.2 * np.sqrt(rng.uniform(0.01, 1.0, 5))
        a = rng.uniform(0, 2 * math.pi, 5)
        pts = np.stack([r * np.cos(a), r * np.sin(a), np.zeros(5)], axis=1)
        d = np.array([0.0, 0.0, 1e-8])
        jumps = scalar_potential(link, mesh, pts + d) - scalar_potential(link, mesh, pts - d)
        return float(np.max(np.abs(np.abs(jumps) - link.gamma))), 1e-6, ""

    def nodal_construction(self):
        h = self.spec.spacing[0]
        _, link, mesh = _ring(2.0, 256, center=(0.0, 0.0, h / 2))
        worst = 0.0
        for n in (2, 3):
            st = build_initial_state(self.spec, link, mesh, n, self.c, GaussianEnvelope(2.0))
            worst = max(worst, st.nodal_ratio())
        return worst, 1e-8, ""

    def quantization_gate(self):
        bad = 0
        for k in (0.5, 1.0, 2.0, 3.0, 4.0):
            g = k * math.pi * self.c.hbar / self.c.mass
            sv = quantization_check(g, self.c).single_valued
            unit = abs(sheet_phase(g, 1, self.c) - 1.0) <= 1e-12
            bad += sv != unit
        return float(bad), 0.0, ""

    def identity_equivalence(self):
        sol = FreeGaussian(1.0, (0.3, -0.2, 0.1), (0.5, 0.2, -0.3), self.c)
        dt, t = 1e-5, 0.7
        sl = [sol.fields(self.spec, t + k * dt) for k in (-1, 0, 1)]
        worst = 0.0
        for nu in (0.5, 1.0, 1.5, 2.0):
            r = identity_residual(self.spec, [s[0] for s in sl], [s[1] for s in sl], None, nu, self.c, dt)
            if nu == 1.0 and r.res1 != r.res2:
                return math.inf, 1e-6, "res2 differs from res1 at nu = 1"
            if r.res1 < 1e-8:
                worst = max(worst, r.res2)
        return worst, 1e-6, ""

    def identity_em_reduction(self):
        sol = FreeGaussian(1.0, constants=self.c)
        dt = 1e-5
        sl = [sol.fields(self.spec, 0.5 + k * dt) for k in (-1, 0, 1)]
        R, th = [s[0] for s in sl], [s[1] for s in sl]
        A = np.zeros((3, *self.spec.dims))
        diff = 0.0
        for nu in (0.5, 2.0):
            a = identity_residual(self.spec, R, th, None, nu, self.c, dt)
            b = identity_residual_em(self.spec, R, th, None, A, nu, self.c, dt)
            diff = max(diff, abs(a.res1 - b.res1), abs(a.res2 - b.res2))
        return diff, 0.0, ""

    def bohm_force_zero(self):
        h = self.spec.spacing[0]
        _, link, mesh = _ring(2.0, 256, center=(0.0, 0.0, h / 2))
        st = build_initial_state(self.spec, link, mesh, 2, self.c, GaussianEnvelope(1.5))
        res = bohm_force_integral(decompose(st.psi(), self.c), self.c)
        return res.relative, 1e-6, ""

    def solver_width_law(self):
        sol = FreeGaussian(1.0, constants=self.c)
        T = 2.0 * self.c.mass / self.c.hbar
        steps = max(40, math.ceil(T / (0.9 * stability_bound(self.spec, self.c, 1.0))))
        cfg = EvolveConfig(dt=T / steps, steps=steps, snapshot_stride=steps)
        res = evolve_linear(sol.psi(self.spec, 0.0), cfg, self.c)
        rho = np.abs(res.final.values) ** 2
        X = self.spec.mesh()[0]
        dv = self.spec.cell_volume
        norm = rho.sum() * dv
        var = float((rho * X * X).sum() * dv / norm - ((rho * X).sum() * dv / norm) ** 2)
        return abs(math.sqrt(var) / sol.width(T) - 1.0), 1e-6, ""

    def norm_conservation(self):
        sol = HarmonicCoherentState(1.0, (1.0, 0.0, 0.0), self.c)
        V = sol.potential(self.spec)
        cfg = EvolveConfig(dt=0.02, steps=50, potential=V, snapshot_stride=10)
        res = evolve_linear(sol.psi(self.spec, 0.0), cfg, self.c)
        n0 = res.monitors[0].norm
        return max(abs(m.norm - n0) / n0 for m in res.monitors), 1e-10, ""

    def radiation_unit_nu(self):
        R = RealGrid3(self.spec, FreeGaussian(1.0, constants=self.c).fields(self.spec, 0.3)[0])
        p = [nonlinear_power(R, nu, self.c).power for nu in (1.0, -1.0)]
        return float(max(abs(v) for v in p)), 0.0, ""

    def radiation_scaling(self):
        R = RealGrid3(self.spec, FreeGaussian(1.0, constants=self.c).fields(self.spec, 0.3)[0])
        ratio = nonlinear_power(R, 2.0, self.c).power / nonlinear_power(R, math.sqrt(2.0), self.c).power
        target = ((2.0 ** 2 - 1.0) / (math.sqrt(2.0) ** 2 - 1.0)) ** 2
        return abs(ratio / target - 1.0), 1e-12, ""

    def coherent_term_kill(self):
        R = RealGrid3(self.spec, FreeGaussian(1.0, constants=self.c).fields(self.spec, 0.3)[0])
        mom = acceleration_moments(R, self.c)
        return float(np.linalg.norm(mom.mean) / mom.mean_abs), 1e-6, ""

    def quantum_larmor_harmonic(self):
        w = 1.0
        sol = HarmonicCoherentState(w, constants=self.c)
        R, _ = sol.fields(self.spec, 0.0)
        P = quantum_larmor(RealGrid3(self.spec, R * R), sol.potential(self.spec), self.c)
        c = self.c
        exact = c.coulomb * c.charge ** 2 * c.hbar * w ** 3 / (c.mass * c.c ** 3)
        return abs(P / exact - 1.0), 1e-6, ""


CHECKS: tuple[str, ...] = (
    "qvg_roundtrip",
    "spectral_laplacian",
    "mesh_orientation",
    "circulation_quantization",
    "gradient_potential",
    "cut_jump",
    "nodal_construction",
    "quantization_gate",
    "identity_equivalence",
    "identity_em_reduction",
    "bohm_force_zero",
    "solver_width_law",
    "norm_conservation",
    "radiation_unit_nu",
    "radiation_scaling",
    "coherent_term_kill",
    "quantum_larmor_harmonic",
)


def _run_check(name: str, fn: Callable[[], tuple[float, float, str]]) -> Check:
    try:
        value, tol, detail = fn()
    except Exception as exc:  # every failure is reported, never raised
        return Check(name, False, None, None, f"{type(exc).__name__}: {exc}")
    value = float(value)
    if not math.isfinite(value):
        return Check(name, False, None, float(tol), detail or "non-finite value")
    return Check(name, bool(value <= tol), value, float(tol), detail)


def run_suite(dims: int = 32, seed: int = 0, fault: str | None = None) -> dict:
    """Run every check and return the report dict."""
    if fault not in (None, "flip_triangle"):
        raise ValueError(f"unknown fault {fault!r}")
    suite = _Suite(dims, seed, fault)
    checks = [_run_check(name, getattr(suite, name)) for name in CHECKS]
    return {
        "schema": SCHEMA,
        "grid": [dims, dims, dims],
        "seed": seed,
        "fault": fault,
        "passed": all(c.passed for c in checks),
        "checks": [c.to_dict() for c in checks],
    }
