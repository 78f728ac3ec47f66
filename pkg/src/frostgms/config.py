"""Simulation configuration: ``key = value`` lines grouped under ``[section]`` headers.

Recognised sections and keys (all optional; defaults reproduce the reference
ground-freezing setup)::

    [geometry]   nx ny Lx Ly Nx Ny pipe_centers r_p stripes layer_ids
    [materials]  T_star delta epsilon layer1 layer2 layer3 ...
    [time]       t_max_days n_steps
    [boundary]   test T_p T_0 Q F pressure_left pressure_right pressure_top pressure_bottom
    [multiscale] offline online period accumulate_online velocity_sign
                 use_lagged_pressure strong_dirichlet
    [output]     snapshot_layers directory

``pipe_centers`` is ``x y; x y; ...``; ``stripes`` and ``layer_ids`` are comma
lists; ``layerN`` is ``k_plus, k_minus, c_rho_plus, c_rho_minus, rhoL, mobility``.
Explicit ``pressure_<side>`` keys replace the sides implied by ``test``.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import geometry
from .errors import ConfigurationError
from .fine import FreezingProblem, TimeConfig
from .materials import PAPER_LAYERS, LayerProperties, PhaseParams

OUTPUT_ENV = "FROSTGMS_OUTPUT_DIR"

TEST_PRESSURE_BC = {
    1: {"left": 1.0, "right": 0.0},
    2: {"top": 1.0, "bottom": 0.0},
}


@dataclass
class GeometryConfig:
    nx: int = 120
    ny: int = 120
    Lx: float = 12.0
    Ly: float = 6.0
    Nx: int = 24
    Ny: int = 12
    pipe_centers: list | None = None
    r_p: float | None = None
    stripes: list | None = None
    layer_ids: list | None = None


@dataclass
class MaterialsConfig:
    layers: tuple = PAPER_LAYERS
    T_star: float = 0.0
    delta: float = 0.5
    epsilon: float = 1e-3


@dataclass
class TimeSettings:
    t_max_days: float = 25.0
    n_steps: int = 80


@dataclass
class BoundaryConfig:
    test: int = 1
    T_p: float = -30.0
    T_0: float = 2.0
    Q: float = 0.0
    F: float = 0.0
    pressure: dict | None = None  # explicit side -> value

    def pressure_bc(self) -> dict:
        if self.pressure:
            return dict(self.pressure)
        return dict(TEST_PRESSURE_BC[self.test])


@dataclass
class MultiscaleConfig:
    offline: int = 4
    online: int = 1
    period: int = 5
    accumulate_online: bool = False
    velocity_sign: float = -1.0
    use_lagged_pressure: bool = False
    strong_dirichlet: bool = True


@dataclass
class OutputConfig:
    snapshot_layers: list = field(default_factory=lambda: [5, 30, 80])
    directory: str = "output"

    def resolved_directory(self) -> Path:
        return Path(os.environ.get(OUTPUT_ENV) or self.directory)


@dataclass
class SimulationConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    materials: MaterialsConfig = field(default_factory=MaterialsConfig)
    time: TimeSettings = field(default_factory=TimeSettings)
    boundary: BoundaryConfig = field(default_factory=BoundaryConfig)
    multiscale: MultiscaleConfig = field(default_factory=MultiscaleConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def with_test(self, test: int) -> "SimulationConfig":
        cfg = replace(self, boundary=replace(self.boundary, test=test, pressure=None))
        validate(cfg)
        return cfg


def _parse_bool(key, text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigurationError(f"{key}: expected a boolean, got {text!r}")


def _parse_floats(key, text):
    try:
        return [float(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise ConfigurationError(f"{key}: expected a list of numbers, got {text!r}") from None


def _parse_points(key, text):
    pts = []
    for chunk in text.split(";"):
        if not chunk.strip():
            continue
        xy = _parse_floats(key, chunk)
        if len(xy) != 2:
            raise ConfigurationError(f"{key}: each point needs two coordinates, got {chunk!r}")
        pts.append(tuple(xy))
    return pts


def _scalar(key, text, typ):
    try:
        if typ is int:
            return int(text)
        return float(text)
    except ValueError:
        raise ConfigurationError(f"{key}: expected {typ.__name__}, got {text!r}") from None


_SCALARS = {
    "geometry": {"nx": int, "ny": int, "Lx": float, "Ly": float, "Nx": int, "Ny": int, "r_p": float},
    "materials": {"T_star": float, "delta": float, "epsilon": float},
    "time": {"t_max_days": float, "n_steps": int},
    "boundary": {"test": int, "T_p": float, "T_0": float, "Q": float, "F": float},
    "multiscale": {"offline": int, "online": int, "period": int, "velocity_sign": float},
}
_BOOLS = {"multiscale": {"accumulate_online", "use_lagged_pressure", "strong_dirichlet"}}


def parse_config_text(text: str) -> SimulationConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";;"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed configuration: {exc}") from None

    cfg = SimulationConfig()
    sections = {
        "geometry": cfg.geometry,
        "materials": cfg.materials,
        "time": cfg.time,
        "boundary": cfg.boundary,
        "multiscale": cfg.multiscale,
        "output": cfg.output,
    }
    layers = list(cfg.materials.layers)
    pressure = {}
    for name in parser.sections():
        if name not in sections:
            raise ConfigurationError(f"unknown section [{name}]")
        target = sections[name]
        for key, raw in parser.items(name):
            full = f"{name}.{key}"
            if key in _SCALARS.get(name, {}):
                setattr(target, key, _scalar(full, raw, _SCALARS[name][key]))
            elif key in _BOOLS.get(name, set()):
                setattr(target, key, _parse_bool(full, raw))
            elif name == "geometry" and key == "pipe_centers":
                target.pipe_centers = _parse_points(full, raw)
            elif name == "geometry" and key == "stripes":
                target.stripes = _parse_floats(full, raw)
            elif name == "geometry" and key == "layer_ids":
                target.layer_ids = [int(v) for v in _parse_floats(full, raw)]
            elif name == "materials" and key.startswith("layer") and key[5:].isdigit():
                idx = int(key[5:]) - 1
                vals = _parse_floats(full, raw)
                if len(vals) != 6 or idx < 0:
                    raise ConfigurationError(
                        f"{full}: expected k_plus, k_minus, c_rho_plus, c_rho_minus, rhoL, mobility"
                    )
                while len(layers) <= idx:
                    layers.append(None)
                layers[idx] = LayerProperties(*vals)
            elif name == "boundary" and key.startswith("pressure_"):
                pressure[key[len("pressure_"):]] = _scalar(full, raw, float)
            elif name == "output" and key == "snapshot_layers":
                target.snapshot_layers = [int(v) for v in _parse_floats(full, raw)]
            elif name == "output" and key == "directory":
                target.directory = raw.strip()
            else:
                raise ConfigurationError(f"unknown key {full}")
    if any(l is None for l in layers):
        raise ConfigurationError("materials: layer definitions must be contiguous from layer1")
    cfg.materials.layers = tuple(layers)
    if pressure:
        cfg.boundary.pressure = pressure
    validate(cfg)
    return cfg


def parse_config(path) -> SimulationConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"configuration file {path} does not exist")
    return parse_config_text(path.read_text())


def validate(cfg: SimulationConfig) -> None:
    g = cfg.geometry
    if g.nx < 1 or g.ny < 1 or g.Nx < 1 or g.Ny < 1:
        raise ConfigurationError("geometry: cell counts must be >= 1")
    if not (g.Lx > 0 and g.Ly > 0):
        raise ConfigurationError("geometry: Lx and Ly must be positive")
    if g.nx % g.Nx or g.ny % g.Ny:
        raise ConfigurationError(
            f"geometry: coarse grid {g.Nx}x{g.Ny} must nest in fine grid {g.nx}x{g.ny}"
        )
    if g.r_p is not None and not g.r_p > 0:
        raise ConfigurationError("geometry.r_p must be positive")
    for x, y in g.pipe_centers or []:
        if not (0 <= x <= g.Lx and 0 <= y <= g.Ly):
            raise ConfigurationError(f"geometry.pipe_centers: ({x}, {y}) lies outside the domain")
    # re-run the dataclass checks so edited fields are validated too
    PhaseParams(cfg.materials.T_star, cfg.materials.delta, cfg.materials.epsilon)
    for layer in cfg.materials.layers:
        LayerProperties(**{f.name: getattr(layer, f.name) for f in fields(LayerProperties)})
    n_layers = len(cfg.materials.layers)
    if g.layer_ids is not None and any(not 0 <= i < n_layers for i in g.layer_ids):
        raise ConfigurationError(f"geometry.layer_ids must lie in [0, {n_layers})")
    if g.layer_ids is None:
        n_stripes = 3 if g.stripes is None else len(g.stripes) + 1
        if n_stripes > n_layers:
            raise ConfigurationError(f"{n_stripes} stripes need explicit geometry.layer_ids")
    if not cfg.time.t_max_days > 0:
        raise ConfigurationError("time.t_max_days must be positive")
    if cfg.time.n_steps < 0:
        raise ConfigurationError("time.n_steps must be >= 0")
    b = cfg.boundary
    if b.pressure is None and b.test not in TEST_PRESSURE_BC:
        raise ConfigurationError(f"boundary.test must be 1 or 2, got {b.test}")
    if b.pressure:
        bad = set(b.pressure) - {"left", "right", "top", "bottom"}
        if bad:
            raise ConfigurationError(f"boundary: unknown pressure sides {sorted(bad)}")
    m = cfg.multiscale
    if m.offline < 1:
        raise ConfigurationError("multiscale.offline must be >= 1")
    if m.online < 0:
        raise ConfigurationError("multiscale.online must be >= 0")
    if m.period < 1:
        raise ConfigurationError("multiscale.period must be >= 1")
    if m.velocity_sign not in (-1.0, 1.0):
        raise ConfigurationError("multiscale.velocity_sign must be -1 or 1")


@dataclass
class Setup:
    config: SimulationConfig
    mesh: geometry.Mesh
    coarse: geometry.CoarseGrid
    hoods: list
    pipes: geometry.PipeLayout
    problem: FreezingProblem


def build_setup(cfg: SimulationConfig) -> Setup:
    validate(cfg)
    g, mat = cfg.geometry, cfg.materials
    mesh = geometry.build_fine_mesh(g.nx, g.ny, g.Lx, g.Ly)
    coarse = geometry.build_coarse_grid(mesh, g.Nx, g.Ny)
    centers = g.pipe_centers if g.pipe_centers is not None else geometry.default_pipe_centers(g.Lx, g.Ly)
    pipes = geometry.locate_pipe_nodes(mesh, centers, g.r_p) if len(centers) else geometry.PipeLayout(
        np.zeros((0, 2)), 0.0, np.zeros(0, dtype=np.int64), []
    )
    hoods = geometry.mark_pipe_neighborhoods(geometry.build_neighborhoods(mesh, coarse), pipes)
    layer_ids = geometry.layer_raster(mesh, g.stripes, g.layer_ids)
    b, ms = cfg.boundary, cfg.multiscale
    problem = FreezingProblem(
        mesh=mesh,
        layer_ids=layer_ids,
        layers=mat.layers,
        phase=PhaseParams(mat.T_star, mat.delta, mat.epsilon),
        pipe_nodes=pipes.pipe_nodes,
        T_p=b.T_p,
        T_0=b.T_0,
        pressure_bc=b.pressure_bc(),
        time=TimeConfig.from_days(cfg.time.t_max_days, cfg.time.n_steps),
        Q=b.Q,
        F=b.F,
        velocity_sign=ms.velocity_sign,
        use_lagged_pressure=ms.use_lagged_pressure,
    )
    return Setup(cfg, mesh, coarse, hoods, pipes, problem)
