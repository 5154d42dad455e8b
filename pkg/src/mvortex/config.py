"""Run configuration schema for the command-line front end.

Configs are JSON documents validated before any computation; unknown keys
are rejected.  Validation failures are reported as ``ConfigError`` with the
JSON path (and line/column for syntax errors).
"""
from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError
from .grid import GridSpec
from .wavefunction import PhysicalConstants

Vec3 = tuple[float, float, float]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ConstantsConfig(_Strict):
    """A named preset with optional per-field overrides."""

    preset: Literal["natural", "natural_alpha", "gaussian_electron", "si_electron"] = "natural"
    hbar: Optional[float] = Field(default=None, gt=0)
    mass: Optional[float] = Field(default=None, gt=0)
    charge: Optional[float] = None
    c: Optional[float] = Field(default=None, gt=0)
    coulomb: Optional[float] = Field(default=None, gt=0)

    def build(self) -> PhysicalConstants:
        base = PhysicalConstants.preset(self.preset).to_dict()
        for k in ("hbar", "mass", "charge", "c", "coulomb"):
            v = getattr(self, k)
            if v is not None:
                base[k] = v
        return PhysicalConstants(**base)


class GridConfig(_Strict):
    dims: tuple[int, int, int] = (64, 64, 64)
    lengths: Vec3 = (24.0, 24.0, 24.0)
    center: Vec3 = (0.0, 0.0, 0.0)

    @field_validator("dims")
    @classmethod
    def _dims(cls, v):
        if any(d < 4 for d in v):
            raise ValueError("every grid dimension must be >= 4")
        return v

    @field_validator("lengths")
    @classmethod
    def _lengths(cls, v):
        if any(not (x > 0) for x in v):
            raise ValueError("box lengths must be positive")
        return v

    def build(self) -> GridSpec:
        return GridSpec.centered(self.dims, self.lengths, self.center)


class GeometryConfig(_Strict):
    """Filament geometry.

    ``ring``: circle of ``radius`` about ``normal`` through ``center``; the
    disk mesh is generated unless ``mesh_path`` is given.
    ``trefoil``: standard trefoil scaled by ``scale`` and shifted to
    ``center``; a ``mesh_path`` (OFF file) is required when ``gamma != 0``.
    ``line``: straight filament through ``point`` along ``direction``.
    ``solenoid``: Aharonov-Bohm flux tube; its effective circulation is
    derived from ``flux`` and placed on a line filament along the axis.
    ``none``: bare envelope.
    """

    kind: Literal["ring", "trefoil", "line", "solenoid", "none"] = "ring"
    radius: float = Field(default=2.0, gt=0)
    center: Vec3 = (0.0, 0.0, 0.0)
    normal: Vec3 = (0.0, 0.0, 1.0)
    direction: Vec3 = (0.0, 0.0, 1.0)
    point: Vec3 = (0.0, 0.0, 0.0)
    scale: float = Field(default=1.0, gt=0)
    samples: int = Field(default=256, ge=8)
    half_length: float = Field(default=1.0e4, gt=0)
    mesh_path: Optional[str] = None
    mesh_rings: int = Field(default=1, ge=1)
    gamma: float = 0.0
    flux: Optional[float] = None
    flux_units: Literal["hbar", "gaussian"] = "hbar"

    @model_validator(mode="after")
    def _check(self):
        if self.kind == "solenoid" and self.flux is None:
            raise ValueError("solenoid geometry needs a flux")
        if self.kind == "solenoid" and self.gamma != 0.0:
            raise ValueError("the solenoid circulation follows from its flux; leave gamma unset")
        if self.kind == "none" and self.gamma != 0.0:
            raise ValueError("gamma needs a filament geometry")
        if self.kind != "solenoid" and self.flux is not None:
            raise ValueError("flux is only meaningful for the solenoid geometry")
        for name in ("normal", "direction"):
            if not np.linalg.norm(getattr(self, name)) > 0:
                raise ValueError(f"{name} must be non-zero")
        return self


class EnvelopeConfig(_Strict):
    width: float = Field(default=2.0, gt=0)
    center: Optional[Vec3] = None
    momentum: Vec3 = (0.0, 0.0, 0.0)


class StateConfig(_Strict):
    n: int = Field(default=2, ge=2)
    m_index: int = Field(default=1, ge=1)
    sheet: int = 0
    nu: Optional[float] = None

    @field_validator("nu")
    @classmethod
    def _nu(cls, v):
        if v is not None and (v == 0 or not np.isfinite(v)):
            raise ValueError("nu must be finite and non-zero")
        return v


class PotentialConfig(_Strict):
    kind: Literal["none", "harmonic"] = "none"
    omega: float = Field(default=1.0, gt=0)

    def build(self, spec: GridSpec, constants: PhysicalConstants):
        if self.kind == "none":
            return None
        X, Y, Z = spec.mesh()
        return 0.5 * constants.mass * self.omega ** 2 * (X * X + Y * Y + Z * Z)


class EvolveSection(_Strict):
    dt: float = Field(default=0.01, gt=0)
    steps: int = Field(default=100, ge=1)
    snapshot_stride: int = Field(default=10, ge=1)
    potential: PotentialConfig = PotentialConfig()
    max_iterations: int = Field(default=5, ge=1)
    fixed_point_tol: float = Field(default=1e-10, gt=0)
    mask_rel: float = Field(default=1e-6, gt=0, lt=1)
    norm_tol: float = Field(default=1e-6, gt=0)


class RadiateSection(_Strict):
    mask_rel: float = Field(default=1e-6, gt=0, lt=1)


class VerifySection(_Strict):
    dims: int = Field(default=32, ge=16)
    fault: Optional[Literal["flip_triangle"]] = None


class RunConfig(_Strict):
    constants: ConstantsConfig = ConstantsConfig()
    grid: GridConfig = GridConfig()
    geometry: GeometryConfig = GeometryConfig()
    envelope: EnvelopeConfig = EnvelopeConfig()
    state: StateConfig = StateConfig()
    evolve: EvolveSection = EvolveSection()
    radiate: RadiateSection = RadiateSection()
    verify: VerifySection = VerifySection()
    output: Optional[str] = None
    seed: int = 0
    threads: Optional[int] = Field(default=None, ge=1)


def _format_validation(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{loc}: {e['msg']}")
    return "invalid config:\n  " + "\n  ".join(lines)


def parse_config(data: dict | str) -> RunConfig:
    """Validate a config given as a dict or JSON text."""
    if isinstance(data, str):
        try:
            data = json.loads(data)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_validation(exc)) from exc


def load_config(path: str | os.PathLike) -> RunConfig:
    """Read and validate a JSON config file; ``OSError`` propagates."""
    text = Path(path).read_text()
    try:
        return parse_config(text)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
