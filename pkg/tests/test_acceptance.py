"""Acceptance suite: one test per headline criterion.

Each test checks its tolerances and its runtime budget and records one
``PASS``/``FAIL`` line, printed in the terminal summary (see conftest).
"""
from __future__ import annotations

import contextlib
import csv
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from mvortex.cli import EXIT_OK, main
from mvortex.evolution import EvolveConfig, evolve_linear, evolve_nonlinear, stability_bound
from mvortex.exact import FreeGaussian, HarmonicCoherentState
from mvortex.geometry import Link, circle_curve, disk_mesh, line_filament, trefoil_curve
from mvortex.grid import GridSpec, RealGrid3
from mvortex.identity import identity_residual, identity_residual_em
from mvortex.kernels import biot_savart_velocity, circulation, random_probe_loops, scalar_potential
from mvortex.madelung import bohm_force_integral, decompose
from mvortex.qvg import decode_grid, encode_grid, read_grid
from mvortex.radiation import acceleration_moments, nonlinear_power, quantum_larmor
from mvortex.wavefunction import GaussianEnvelope, PhysicalConstants, build_initial_state, quantization_check, sheet_phase

C = PhysicalConstants()
CONFIGS = Path(__file__).resolve().parents[1] / "configs"
RESULTS: list[str] = []
pytestmark = pytest.mark.acceptance


@contextlib.contextmanager
def criterion(number: int, title: str, budget: float):
    t0 = time.perf_counter()
    status = "FAIL"
    detail = ""
    try:
        yield
        elapsed = time.perf_counter() - t0
        detail = f"{elapsed:.1f} s of {budget:.0f} s"
        assert elapsed < budget, f"runtime {elapsed:.1f} s exceeds {budget} s"
        status = "PASS"
    except BaseException as exc:
        detail = detail or f"{type(exc).__name__}: {exc}".splitlines()[0]
        raise
    finally:
        line = f"{status} [{number:2d}] {title} ({detail})"
        RESULTS.append(line)
        print(line)


def fd_gradient(fn, pts, h):
    g = np.zeros_like(pts)
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        g[:, k] = (fn(pts + e) - fn(pts - e)) / (2 * h)
    return g


def test_01_circulation_quantization():
    with criterion(1, "circulation quantization", 10.0):
        rng = np.random.default_rng(2024)
        for curve, radii in (
            (circle_curve(1.5, samples=256), (0.2, 0.5)),
            (line_filament(), (0.3, 1.0)),
            (trefoil_curve(1024), (0.15, 0.3)),
        ):
            link = Link((curve,), 2.0 * math.pi)
            loops = random_probe_loops(link, 20, rng, radii)
            assert len(loops) == 20
            for loop, w in loops:
                ratio = circulation(link, loop) / link.gamma
                assert abs(ratio - round(ratio)) < 1e-3
                assert round(ratio) == w


def test_02_gradient_potential_consistency():
    with criterion(2, "gradient of potential equals Biot-Savart velocity", 30.0):
        curve = circle_curve(1.0, samples=256)
        link = Link((curve,), 2.0 * math.pi)
        mesh = disk_mesh(curve)
        rng = np.random.default_rng(7)
        pts = rng.uniform(-1.6, 1.6, size=(100, 3))
        # keep every stencil off the cut disk and away from the filament core
        pts[:, 2] = np.sign(pts[:, 2]) * (0.15 + np.abs(pts[:, 2]))
        g = fd_gradient(lambda p: scalar_potential(link, mesh, p), pts, 1e-4)
        u = biot_savart_velocity(link, pts)
        rel = np.linalg.norm(g - u, axis=1) / np.linalg.norm(u, axis=1)
        assert rel.max() < 1e-5


def test_03_cut_jump():
    with criterion(3, "potential jump across the cut surface", 10.0):
        curve = circle_curve(1.0, samples=256)
        link = Link((curve,), 2.0 * math.pi)
        mesh = disk_mesh(curve)
        rng = np.random.default_rng(11)
        r = 0.9 * np.sqrt(rng.uniform(0.0, 1.0, 10))
        a = rng.uniform(0.0, 2.0 * math.pi, 10)
        pts = np.stack([r * np.cos(a), r * np.sin(a), np.zeros(10)], axis=1)
        d = np.array([0.0, 0.0, 1e-9])
        jumps = scalar_potential(link, mesh, pts + d) - scalar_potential(link, mesh, pts - d)
        assert np.max(np.abs(np.abs(jumps) - link.gamma)) < 1e-6
        assert np.ptp(jumps) < 1e-6


def test_04_nodal_construction():
    with criterion(4, "nodal construction at 64^3", 20.0):
        spec = GridSpec.centered(64, 16.0)
        h = spec.spacing[0]
        curve = circle_curve(2.0, center=(0.0, 0.0, h / 2), samples=256)
        link = Link((curve,), 2.0 * math.pi)
        mesh = disk_mesh(curve)
        for n in (2, 3):
            st = build_initial_state(spec, link, mesh, n, C, GaussianEnvelope(2.0))
            assert st.nodal_ratio() < 1e-8


def test_05_quantization_gate():
    with criterion(5, "quantization gate and sheet phase agree", 1.0):
        for k in (0.5, 1.0, 2.0, 3.0, 4.0):
            gamma = k * math.pi * C.hbar / C.mass
            sv = quantization_check(gamma, C).single_valued
            assert sv == (abs(sheet_phase(gamma, 1, C) - 1.0) <= 1e-12)
            assert sv == (k in (2.0, 4.0))


def test_06_identity_equivalence():
    with criterion(6, "nonlinear identity equivalence at 64^3", 60.0):
        spec = GridSpec.centered(64, 24.0)
        cases = [
            (FreeGaussian(1.0, (0.3, -0.2, 0.1), (0.5, 0.2, -0.3), C), None, 0.7, 1e-5),
            (HarmonicCoherentState(1.0, constants=C), HarmonicCoherentState(1.0, constants=C).potential(spec), 0.3, 2e-5),
        ]
        for sol, V, t, dt in cases:
            sl = [sol.fields(spec, t + k * dt) for k in (-1, 0, 1)]
            R, th = [s[0] for s in sl], [s[1] for s in sl]
            for nu in (0.5, 1.0, 1.5, 2.0):
                r = identity_residual(spec, R, th, V, nu, C, dt)
                assert r.res1 < 1e-8
                assert r.res2 < 1e-6
                if nu == 1.0:
                    assert r.res2 == r.res1
                e = identity_residual_em(spec, R, th, V, np.zeros((3, *spec.dims)), nu, C, dt)
                assert (e.res1, e.res2) == (r.res1, r.res2)


def test_07_solver_validation():
    with criterion(7, "solver width law, norm drift and Strang order at 64^3", 120.0):
        spec = GridSpec.centered(64, 24.0)
        sigma0 = 1.0
        sol = FreeGaussian(sigma0, constants=C)
        T = 2.0 * C.mass * sigma0 ** 2 / C.hbar
        steps = math.ceil(T / (0.9 * stability_bound(spec, C, 1.0)))
        res = evolve_linear(sol.psi(spec, 0.0), EvolveConfig(dt=T / steps, steps=steps, snapshot_stride=10), C)
        rho = np.abs(res.final.values) ** 2
        X = spec.mesh()[0]
        dv = spec.cell_volume
        norm = rho.sum() * dv
        var = (rho * X * X).sum() * dv / norm - ((rho * X).sum() * dv / norm) ** 2
        assert abs(math.sqrt(var) / (math.sqrt(2.0) * sigma0) - 1.0) < 1e-6
        n0 = res.monitors[0].norm
        assert max(abs(m.norm - n0) / n0 for m in res.monitors) < 1e-10
        # splitting error needs a potential that does not commute with the kinetic term
        ho = HarmonicCoherentState(1.0, (1.0, 0.0, 0.0), C)
        hspec = GridSpec.centered(64, 14.0)
        V = ho.potential(hspec)
        exact = ho.psi(hspec, 1.0).values
        errs = []
        for n in (160, 320, 640):
            out = evolve_linear(ho.psi(hspec, 0.0), EvolveConfig(dt=1.0 / n, steps=n, potential=V, snapshot_stride=n), C)
            errs.append(np.sqrt(np.sum(np.abs(out.final.values - exact) ** 2) * hspec.cell_volume))
        orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
        assert all(abs(p - 2.0) < 0.1 for p in orders), orders


def test_08_radiation_laws():
    with criterion(8, "radiation laws", 30.0):
        spec = GridSpec.centered(48, 20.0)
        R = RealGrid3(spec, FreeGaussian(1.0, (0.2, 0.0, -0.1), (0.3, 0.0, 0.0), C).fields(spec, 0.3)[0])
        assert nonlinear_power(R, 1.0, C).power == 0.0
        assert nonlinear_power(R, -1.0, C).power == 0.0
        ratio = nonlinear_power(R, 2.0, C).power / nonlinear_power(R, math.sqrt(2.0), C).power
        assert abs(ratio / 9.0 - 1.0) < 1e-12
        mom = acceleration_moments(R, C)
        assert np.linalg.norm(mom.mean) < 1e-6 * mom.mean_abs
        assert bohm_force_integral(decompose(R, C), C).relative < 1e-6
        ho = HarmonicCoherentState(1.0, constants=C)
        Rh, _ = ho.fields(spec, 0.0)
        P = quantum_larmor(RealGrid3(spec, Rh * Rh), ho.potential(spec), C)
        assert abs(P / (C.charge ** 2 * C.hbar / (C.mass * C.c ** 3)) - 1.0) < 1e-6


def _pipeline(config: Path, out: Path) -> dict:
    for cmd in ("build", "evolve", "radiate"):
        assert main([cmd, "--config", str(config), "--out", str(out)]) == EXIT_OK
    return json.loads((out / "radiation.json").read_text()) | {"state": json.loads((out / "state.json").read_text())}


def test_09_aharonov_bohm_pipeline(tmp_path):
    with criterion(9, "Aharonov-Bohm radiation prediction through the CLI at 64^3", 300.0):
        pi = _pipeline(CONFIGS / "ab_pi.json", tmp_path / "pi")
        assert pi["state"]["solenoid"]["sheet_phase"] == [-1.0, pytest.approx(0.0, abs=1e-15)]
        assert pi["nu"] == 0.5
        assert pi["delta_E"] > 0.0
        for name in ("ab_zero.json", "ab_2pi.json"):
            res = _pipeline(CONFIGS / name, tmp_path / name)
            assert res["nu"] == 1.0
            assert res["delta_E"] == 0.0


def test_10_determinism_and_format(tmp_path):
    with criterion(10, "determinism and QVG1 round trip", 10.0):
        data = json.loads((CONFIGS / "ring.json").read_text())
        data["grid"] = {"dims": [32, 32, 32], "lengths": [12.0, 12.0, 12.0]}
        data["geometry"]["center"] = [0.0, 0.0, 0.1875]
        data["state"]["nu"] = 1.5
        data["evolve"] = {"dt": 0.01, "steps": 10, "snapshot_stride": 5}
        cfg = tmp_path / "ring.json"
        cfg.write_text(json.dumps(data))
        outs = [tmp_path / "a", tmp_path / "b"]
        for out in outs:
            _pipeline(cfg, out)
        files = [{p.relative_to(o): p.read_bytes() for p in sorted(o.rglob("*")) if p.is_file()} for o in outs]
        assert files[0] == files[1]
        assert any(str(k).endswith(".qvg") for k in files[0]) and any(str(k).endswith(".csv") for k in files[0])
        with (outs[0] / "power.csv").open() as fh:
            assert len(list(csv.DictReader(fh))) == 3
        for path in sorted(outs[0].rglob("*.qvg")):
            raw = path.read_bytes()
            assert encode_grid(decode_grid(raw)) == raw
            assert read_grid(path).values.tobytes() == decode_grid(raw).values.tobytes()
