"""Command-line front end: ``mvortex {build,evolve,radiate,verify}``.

Every subcommand reads a JSON run config (see :mod:`mvortex.config`) and
writes plain data files into the output directory:

``build``
    ``state.qvg`` (reference-sheet wavefunction), ``state_nu.qvg``
    (single-valued transformed wavefunction) and ``state.json``.
``evolve``
    ``snapshots/snap_NNNNNN.qvg``, ``monitors.csv`` and ``manifest.json``.
``radiate``
    ``power.csv`` (``t,P,emitted,mask_fraction``) and ``radiation.json``.
``verify``
    ``verify.json`` (also printed to stdout).

Outputs depend only on the config, so identical configs give byte-identical
files.  Exit codes: 0 success, 1 config error, 2 numerical abort or failed
verification, 3 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

import numba
import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .errors import (
    ConfigError,
    CoreProximityError,
    GaugeViolationError,
    GeometryError,
    GridFormatError,
    NoVortexError,
    NumericalAbort,
    OnCutError,
    StateConstructionError,
)
from .evolution import EvolveConfig, MonitorRecord, Snapshot, evolve_nonlinear
from .geometry import FilamentCurve, Link, circle_curve, disk_mesh, line_filament, load_seifert_mesh, trefoil_curve
from .grid import set_threads
from .identity import SolenoidSpec, ab_effective_vorticity
from .qvg import read_grid, write_grid
from .radiation import PowerSeries, cumulative_trapezoid, nonlinear_power, write_power_csv
from .verify import run_suite
from .wavefunction import GaussianEnvelope, build_initial_state

log = logging.getLogger("mvortex")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_IO = 3

STATE_FORMAT = "mvortex.state/1"
EVOLVE_FORMAT = "mvortex.evolve/1"
RADIATE_FORMAT = "mvortex.radiate/1"

_CONFIG_ERRORS = (ConfigError, GeometryError, StateConstructionError, NoVortexError, CoreProximityError,
                  OnCutError, GaugeViolationError)


# ------------------------------------------------------------ helpers
def write_json(obj, path: Path) -> Path:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n")
    return path


def read_json(path: Path) -> dict:
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise OSError(f"{path} is not valid JSON: {exc}") from exc


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _complex(z: complex) -> list[float]:
    return [float(z.real), float(z.imag)]


class _Context:
    def __init__(self, cfg: RunConfig, out: Path, base_dir: Path):
        self.cfg = cfg
        self.out = out
        self.base_dir = base_dir
        self.constants = cfg.constants.build()
        self.spec = cfg.grid.build()


def _geometry(ctx: _Context):
    """Link, mesh and (for the solenoid) the effective-vorticity record."""
    g = ctx.cfg.geometry
    extra = {}
    if g.kind == "none":
        return None, None, extra
    if g.kind == "solenoid":
        sol = SolenoidSpec(g.point, g.direction, g.radius, g.flux)
        ab = ab_effective_vorticity(sol, ctx.constants, units=g.flux_units)
        extra["solenoid"] = {"flux": g.flux, "radius": g.radius, **ab.to_dict()}
        curve = line_filament(g.direction, g.point, g.half_length, samples=max(g.samples, 64))
        return Link((curve,), ab.gamma_eff), None, extra
    if g.kind == "line":
        curve = line_filament(g.direction, g.point, g.half_length, samples=max(g.samples, 64))
        return Link((curve,), g.gamma), None, extra
    if g.kind == "ring":
        curve = circle_curve(g.radius, g.center, g.normal, g.samples)
    else:
        base = trefoil_curve(g.samples)
        curve = FilamentCurve(base.points * g.scale + np.asarray(g.center), closed=True)
    link = Link((curve,), g.gamma)
    if g.mesh_path is not None:
        path = Path(g.mesh_path)
        if not path.is_absolute():
            path = ctx.base_dir / path
        mesh = load_seifert_mesh(path, link)
    elif g.kind == "ring":
        mesh = disk_mesh(curve, g.mesh_rings)
    else:
        mesh = None
    return link, mesh, extra


# ------------------------------------------------------------ build
def cmd_build(ctx: _Context) -> int:
    cfg = ctx.cfg
    link, mesh, extra = _geometry(ctx)
    env = GaussianEnvelope(cfg.envelope.width, cfg.envelope.center, cfg.envelope.momentum)
    state = build_initial_state(ctx.spec, link, mesh, cfg.state.n, ctx.constants, env,
                                sheet=cfg.state.sheet, m_index=cfg.state.m_index)
    nu = state.nu if cfg.state.nu is None else cfg.state.nu
    ctx.out.mkdir(parents=True, exist_ok=True)
    f_state = write_grid(state.psi(), ctx.out / "state.qvg")
    f_nu = write_grid(state.psi_nu(nu), ctx.out / "state_nu.qvg")
    meta = state.metadata()
    q = meta["quantization"]
    meta.update(extra)
    meta.update(
        {
            "format": STATE_FORMAT,
            "geometry": cfg.geometry.kind,
            "nu": nu,
            "single_valued": q["single_valued"],
            "K": q["k_nearest"],
            "sheet_phase": _complex(state.sheet_phase(1)),
            "nodal_ratio": state.nodal_ratio(),
            "files": {"state": f_state.name, "state_nu": f_nu.name},
            "sha256": {f_state.name: _sha256(f_state), f_nu.name: _sha256(f_nu)},
            "config": cfg.model_dump(mode="json", exclude={"output", "threads"}),
        }
    )
    write_json(meta, ctx.out / "state.json")
    log.info("built state: gamma=%r nu=%r single_valued=%s", meta["gamma"], nu, q["single_valued"])
    return EXIT_OK


# ------------------------------------------------------------ evolve
_MONITOR_COLUMNS = ["step", "t", "norm", "energy", "mask_fraction"]


def _snap_name(step: int) -> str:
    return f"snap_{step:06d}.qvg"


def _write_monitors(rows: list[list], path: Path) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_MONITOR_COLUMNS + ["norm_drift"])
        norm0 = float(rows[0][2]) if rows else 1.0
        for r in rows:
            w.writerow([str(int(r[0]))] + [repr(float(v)) for v in r[1:]] + [repr(abs(float(r[2]) - norm0) / norm0)])


def _read_monitors(path: Path) -> list[list]:
    with path.open() as fh:
        return [[int(r["step"])] + [float(r[k]) for k in _MONITOR_COLUMNS[1:]] for r in csv.DictReader(fh)]


def cmd_evolve(ctx: _Context, resume: bool = False) -> int:
    cfg = ctx.cfg
    state_json = ctx.out / "state.json"
    if not state_json.exists():
        raise FileNotFoundError(f"{state_json} not found; run 'mvortex build' first")
    meta = read_json(state_json)
    nu = float(meta["nu"])
    snap_dir = ctx.out / "snapshots"
    manifest_path = ctx.out / "manifest.json"
    ev = cfg.evolve
    total = ev.steps
    start_step = 0
    rows: list[list] = []
    entries: list[dict] = []
    if resume and manifest_path.exists():
        man = read_json(manifest_path)
        for key, val in (("dt", ev.dt), ("nu", nu), ("snapshot_stride", ev.snapshot_stride)):
            if man[key] != val:
                raise ConfigError(f"cannot resume: {key} differs from the interrupted run ({man[key]!r} != {val!r})")
        entries = man["snapshots"]
        if not entries:
            raise FileNotFoundError("cannot resume: the manifest lists no snapshots")
        last = entries[-1]
        psi0 = read_grid(snap_dir / last["file"])
        start_step = int(last["step"])
        rows = [r for r in _read_monitors(ctx.out / "monitors.csv") if r[0] <= start_step]
        entries = entries[:-1]
        rows = rows[:-1]
    else:
        psi0 = read_grid(ctx.out / meta["files"]["state_nu"])
        snap_dir.mkdir(parents=True, exist_ok=True)
        for stale in snap_dir.glob("snap_[0-9][0-9][0-9][0-9][0-9][0-9].qvg"):
            stale.unlink()
    spec = psi0.spec
    V = ev.potential.build(spec, ctx.constants)
    remaining = total - start_step
    manifest = {
        "format": EVOLVE_FORMAT,
        "nu": nu,
        "dt": ev.dt,
        "steps": total,
        "snapshot_stride": ev.snapshot_stride,
        "potential": ev.potential.model_dump(mode="json"),
        "grid": {"dims": list(spec.dims), "origin": list(spec.origin), "spacing": list(spec.spacing)},
        "state_sha256": meta["sha256"][meta["files"]["state_nu"]],
        "snapshots": entries,
        "status": "running",
    }

    def on_snapshot(snap: Snapshot, rec: MonitorRecord) -> None:
        name = _snap_name(snap.step)
        write_grid(snap.psi, snap_dir / name)
        entries.append({"step": snap.step, "t": snap.time, "file": name})
        rows.append(rec.as_row())
        _write_monitors(rows, ctx.out / "monitors.csv")
        write_json(manifest, manifest_path)

    if remaining > 0:
        econf = EvolveConfig(
            dt=ev.dt,
            steps=remaining,
            potential=V,
            nu=nu,
            snapshot_stride=ev.snapshot_stride,
            max_iterations=ev.max_iterations,
            fixed_point_tol=ev.fixed_point_tol,
            mask_rel=ev.mask_rel,
            norm_tol=ev.norm_tol,
        )
        try:
            evolve_nonlinear(psi0, econf, ctx.constants, start_step=start_step, keep_snapshots=False, on_snapshot=on_snapshot)
        except NumericalAbort as exc:
            manifest["status"] = f"aborted: {exc}"
            if entries:
                write_json(manifest, manifest_path)
            raise
    manifest["status"] = "complete"
    write_json(manifest, manifest_path)
    log.info("evolved %d steps (nu=%r), %d snapshots", total, nu, len(entries))
    return EXIT_OK


# ------------------------------------------------------------ radiate
def cmd_radiate(ctx: _Context) -> int:
    manifest_path = ctx.out / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"missing snapshots: {manifest_path} not found; run 'mvortex evolve' first")
    man = read_json(manifest_path)
    entries = man["snapshots"]
    if len(entries) < 2:
        raise FileNotFoundError("missing snapshots: at least two are needed for an energy integral")
    nu = float(man["nu"])
    times, power, mask_frac, excluded = [], [], [], []
    for e in entries:
        path = ctx.out / "snapshots" / e["file"]
        if not path.exists():
            raise FileNotFoundError(f"missing snapshot {path}")
        res = nonlinear_power(read_grid(path), nu, ctx.constants, ctx.cfg.radiate.mask_rel)
        times.append(float(e["t"]))
        power.append(res.power)
        mask_frac.append(res.mask_fraction)
        excluded.append(res.excluded_volume)
    t = np.array(times)
    P = np.array(power)
    series = PowerSeries(t, P, cumulative_trapezoid(t, P), np.array(mask_frac))
    write_power_csv(series, ctx.out / "power.csv")
    summary = {
        "format": RADIATE_FORMAT,
        "nu": nu,
        "delta_E": series.total,
        "frames": len(entries),
        "peak_power": float(P.max()),
        "max_mask_fraction": float(max(mask_frac)),
        "max_excluded_volume": float(max(excluded)),
    }
    write_json(summary, ctx.out / "radiation.json")
    log.info("radiated energy %r over %d frames (nu=%r)", series.total, len(entries), nu)
    return EXIT_OK


# ------------------------------------------------------------ verify
def cmd_verify(cfg: RunConfig, out: Path | None, seed: int) -> int:
    report = run_suite(cfg.verify.dims, seed, cfg.verify.fault)
    text = json.dumps(report, sort_keys=True, indent=2, allow_nan=False)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "verify.json").write_text(text + "\n")
    print(text)
    for c in report["checks"]:
        if not c["passed"]:
            log.error("check %s failed: %s", c["name"], c["detail"] or c["value"])
    return EXIT_OK if report["passed"] else EXIT_NUMERICAL


# ------------------------------------------------------------ entry point
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mvortex", description="Multi-valued vortex wavefunctions: build, evolve, radiate, verify.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("build", "build the initial state"),
        ("evolve", "evolve the built state"),
        ("radiate", "radiated power along an evolution"),
        ("verify", "run the self-check suite"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", type=Path, required=name != "verify", help="JSON run config")
        p.add_argument("--out", type=Path, default=None, help="output directory (overrides the config)")
        p.add_argument("--seed", type=int, default=None, help="random seed (overrides the config)")
        p.add_argument("--threads", type=int, default=None, help="worker threads for FFTs and kernels")
        p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
        if name == "evolve":
            p.add_argument("--resume", action="store_true", help="continue from the last snapshot")
    return parser


def _apply_threads(n: int | None) -> None:
    if n is None:
        return
    if n < 1:
        raise ConfigError("--threads must be >= 1")
    set_threads(n)
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        if args.config is not None:
            cfg = load_config(args.config)
            base_dir = args.config.resolve().parent
        else:
            cfg = RunConfig()
            base_dir = Path.cwd()
        seed = cfg.seed if args.seed is None else args.seed
        _apply_threads(args.threads if args.threads is not None else cfg.threads)
        out = args.out if args.out is not None else (Path(cfg.output) if cfg.output else None)
        if args.command == "verify":
            return cmd_verify(cfg, out, seed)
        if out is None:
            raise ConfigError("no output directory: pass --out or set 'output' in the config")
        ctx = _Context(cfg, out, base_dir)
        if args.command == "build":
            return cmd_build(ctx)
        if args.command == "evolve":
            return cmd_evolve(ctx, resume=args.resume)
        return cmd_radiate(ctx)
    except _CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalAbort as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, GridFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
