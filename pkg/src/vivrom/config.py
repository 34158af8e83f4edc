"""Case configuration: an INI file (``case.cfg``) mapped onto dataclasses."""

from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

from .linsolve import SolverControls
from .mesh import OGridSpec
from .meshmotion import MeshMotionConfig
from .pimple import FlowCase, PimpleControls
from .structure import Oscillator


class ConfigError(ValueError):
    pass


@dataclass
class GeometryConfig:
    diameter: float = 1.0
    x_min: float = -8.0
    x_max: float = 20.0
    half_height: float = 8.0
    n_theta: int = 80
    n_radial: int = 40
    blend_start: float = 0.65
    refinement: int = 1

    def spec(self) -> OGridSpec:
        return OGridSpec(self.diameter, self.x_min, self.x_max, self.half_height,
                         self.n_theta, self.n_radial, self.blend_start, self.refinement)


@dataclass
class PhysicsConfig:
    nu: float = 0.005
    rho: float = 1.0
    U_in: float = 1.0
    re: float = 0.0  # optional consistency check, 0 disables


@dataclass
class StructureConfig:
    m: float = 0.1
    k: float = 0.135114884
    zeta: float = 0.4
    fixed: bool = False
    added_mass_coeff: float = 1.0


@dataclass
class ControlsConfig:
    dt: float = 0.02
    end_time: float = 60.0
    n_outer: int = 3
    n_correctors: int = 1
    n_nonorth: int = 1
    alpha_u: float = 0.7
    alpha_p: float = 0.3
    adaptive_dt: bool = False
    max_cfl: float = 0.9
    write_interval: float = 0.1
    momentum_solver: str = "gauss-seidel"
    momentum_tolerance: float = 1e-8
    pressure_solver: str = "direct"
    pressure_tolerance: float = 1e-8


@dataclass
class MotionConfig:
    method: str = "rbf"
    basis: str = "tps"
    coarsen: int = 1


@dataclass
class PodConfig:
    modes_u: int = 30
    modes_p: int = 30
    modes_d: int = 1
    energy: float = 0.999
    start_time: float = 0.0


@dataclass
class RomConfig:
    surrogate_basis: str = "gaussian"
    end_time: float = 0.0  # 0 means the FOM end time


@dataclass
class InitConfig:
    perturbation: float = 0.5


@dataclass
class CaseConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    structure: StructureConfig = field(default_factory=StructureConfig)
    controls: ControlsConfig = field(default_factory=ControlsConfig)
    motion: MotionConfig = field(default_factory=MotionConfig)
    pod: PodConfig = field(default_factory=PodConfig)
    rom: RomConfig = field(default_factory=RomConfig)
    init: InitConfig = field(default_factory=InitConfig)

    @property
    def reynolds(self) -> float:
        return self.physics.U_in * self.geometry.diameter / self.physics.nu

    def validate(self) -> None:
        g, ph, st, c = self.geometry, self.physics, self.structure, self.controls
        try:
            g.spec().check()
            PimpleControls(c.n_outer, c.n_correctors, c.n_nonorth, c.alpha_u, c.alpha_p,
                           c.dt, c.end_time, c.adaptive_dt, c.max_cfl,
                           write_interval=c.write_interval)
            if not st.fixed:
                Oscillator(st.m, st.k, st.zeta)
            MeshMotionConfig(self.motion.method, self.motion.basis, self.motion.coarsen)
            SolverControls(c.momentum_tolerance, method=c.momentum_solver)
            SolverControls(c.pressure_tolerance, method=c.pressure_solver)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if ph.nu <= 0 or ph.rho <= 0:
            raise ConfigError("nu and rho must be positive")
        if ph.re and not math.isclose(ph.re, self.reynolds, rel_tol=1e-6):
            raise ConfigError(f"re = {ph.re} is inconsistent with U_in*D/nu = {self.reynolds:.6g}")
        if not 0 < self.pod.energy <= 1:
            raise ConfigError("pod energy must lie in (0, 1]")
        if min(self.pod.modes_u, self.pod.modes_p) < 0 or self.pod.modes_d < 0:
            raise ConfigError("mode counts must be nonnegative")
        if c.end_time <= 0:
            raise ConfigError("end_time must be positive")

    # ----------------------------------------------------------------------

    def flow_case(self, mesh) -> FlowCase:
        st = self.structure
        osc = None if st.fixed else Oscillator(st.m, st.k, st.zeta)
        return FlowCase(mesh, self.physics.nu, self.physics.rho, self.physics.U_in,
                        self.geometry.diameter, osc, st.added_mass_coeff,
                        motion=MeshMotionConfig(self.motion.method, self.motion.basis,
                                                self.motion.coarsen),
                        perturbation=self.init.perturbation)

    def pimple_controls(self, end_time: float | None = None) -> PimpleControls:
        c = self.controls
        return PimpleControls(
            c.n_outer, c.n_correctors, c.n_nonorth, c.alpha_u, c.alpha_p, c.dt,
            c.end_time if end_time is None else end_time, c.adaptive_dt, c.max_cfl,
            write_interval=c.write_interval,
            momentum_solver=SolverControls(c.momentum_tolerance, 1000, method=c.momentum_solver),
            pressure_solver=SolverControls(c.pressure_tolerance, 5000, method=c.pressure_solver))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _convert(raw: str, typ, key: str):
    try:
        if typ is bool or typ == "bool":
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ is int or typ == "int":
            return int(raw)
        if typ is float or typ == "float":
            return float(raw)
        return raw.strip()
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for {key}") from None


def load_config(path) -> CaseConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    parser = configparser.ConfigParser()
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    cfg = CaseConfig()
    sections = {f.name: f for f in fields(CaseConfig)}
    for sec in parser.sections():
        if sec not in sections:
            raise ConfigError(f"unknown section [{sec}]")
        obj = getattr(cfg, sec)
        known = {f.name.lower(): f for f in fields(obj)}
        for key, raw in parser.items(sec):
            if key not in known:
                raise ConfigError(f"unknown key {key!r} in [{sec}]")
            f = known[key]
            setattr(obj, f.name, _convert(raw, f.type, f"{sec}.{key}"))
    cfg.validate()
    return cfg


def write_config(cfg: CaseConfig, path) -> None:
    parser = configparser.ConfigParser()
    for name, values in cfg.to_dict().items():
        parser[name] = {k: repr(v) if isinstance(v, float) else str(v) for k, v in values.items()}
    with open(path, "w") as fh:
        parser.write(fh)
