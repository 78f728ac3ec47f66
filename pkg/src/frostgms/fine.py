"""Fine-grid reference solver: fictitious-domain pressure + through-counting heat.

Each layer first solves the pressure with the mobility frozen at ``T^n``, then
the linearized implicit temperature step with capacity and conductivity from
``T^n`` and the convection term treated explicitly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import fem
from .errors import ConfigurationError, SolverError
from .materials import PhaseParams, cell_coefficients

log = logging.getLogger(__name__)

SECONDS_PER_DAY = 86400.0


@dataclass(frozen=True)
class TimeConfig:
    t_max: float  # seconds
    n_steps: int

    def __post_init__(self):
        if self.n_steps < 0:
            raise ConfigurationError(f"n_steps must be >= 0, got {self.n_steps}")
        if not self.t_max > 0:
            raise ConfigurationError(f"t_max must be positive, got {self.t_max}")

    @property
    def tau(self) -> float:
        return self.t_max / max(self.n_steps, 1)

    @classmethod
    def from_days(cls, days: float, n_steps: int) -> "TimeConfig":
        return cls(days * SECONDS_PER_DAY, n_steps)


@dataclass
class FreezingProblem:
    """Everything a layer update needs, independent of the solution space."""

    mesh: object
    layer_ids: np.ndarray
    layers: tuple
    phase: PhaseParams
    pipe_nodes: np.ndarray
    T_p: float
    T_0: float
    pressure_bc: dict  # side name -> prescribed value
    time: TimeConfig
    Q: float = 0.0
    F: float = 0.0
    velocity_sign: float = -1.0
    use_lagged_pressure: bool = False

    def __post_init__(self):
        self.pipe_nodes = np.asarray(self.pipe_nodes, dtype=np.int64)
        self.layer_ids = np.asarray(self.layer_ids, dtype=np.int64)
        if self.layer_ids.shape != (self.mesh.n_cells,):
            raise ConfigurationError("layer_ids must hold one entry per fine cell")
        if self.layer_ids.min() < 0 or self.layer_ids.max() >= len(self.layers):
            raise ConfigurationError("layer id out of range of the layer table")
        unknown = set(self.pressure_bc) - set(self.mesh.boundary_nodes)
        if unknown:
            raise ConfigurationError(f"unknown boundary sides {sorted(unknown)}")

    def temperature_constraints(self):
        vals = np.full(self.pipe_nodes.size, float(self.T_p))
        return self.pipe_nodes, vals

    def pressure_constraints(self):
        pairs = [
            (n, float(v))
            for side, v in self.pressure_bc.items()
            for n in self.mesh.boundary_nodes[side].tolist()
        ]
        return fem.constraint_arrays(pairs, self.mesh.n_nodes)

    def coefficients(self, T):
        return cell_coefficients(T, self.mesh.triangles, self.layer_ids, self.layers, self.phase)

    def initial_temperature(self) -> np.ndarray:
        T = np.full(self.mesh.n_nodes, float(self.T_0))
        T[self.pipe_nodes] = self.T_p
        return T


@dataclass
class SystemState:
    t_index: int
    T: np.ndarray
    p: np.ndarray
    u: np.ndarray


@dataclass
class Trajectory:
    T: list = field(default_factory=list)
    p: list = field(default_factory=list)
    snapshots: dict = field(default_factory=dict)

    def append(self, state: SystemState):
        self.T.append(state.T.copy())
        self.p.append(state.p.copy())

    @property
    def n_layers(self) -> int:
        return len(self.T)

    def arrays(self):
        return np.array(self.T), np.array(self.p)


def pressure_system(problem: FreezingProblem, T: np.ndarray):
    """Eliminated pressure system ``A_p p = G_p`` with mobility from ``T``."""
    coef = problem.coefficients(T)
    A = fem.assemble_stiffness(problem.mesh, coef["mobility"])
    G = fem.cell_load(problem.mesh, np.full(problem.mesh.n_cells, problem.F))
    nodes, vals = problem.pressure_constraints()
    return fem.eliminate(A, G, nodes, vals)


def velocity(problem: FreezingProblem, T: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Per-cell Darcy velocity ``sign * mobility_eps(T) * grad p``."""
    mob = problem.coefficients(T)["mobility"]
    return problem.velocity_sign * mob[:, None] * fem.cell_gradients(problem.mesh, p)


def temperature_system(problem: FreezingProblem, T_n: np.ndarray, u: np.ndarray):
    """Eliminated linearized temperature system for one implicit step from ``T_n``."""
    mesh, tau = problem.mesh, problem.time.tau
    coef = problem.coefficients(T_n)
    S = fem.assemble_weighted_mass(mesh, coef["capacity"])
    A = fem.assemble_stiffness(mesh, coef["conductivity"])
    rhs = S @ T_n / tau - fem.assemble_convection_rhs(mesh, coef["capacity"], u, T_n)
    if problem.Q:
        rhs += fem.cell_load(mesh, np.full(mesh.n_cells, problem.Q))
    nodes, vals = problem.temperature_constraints()
    return fem.eliminate(S / tau + A, rhs, nodes, vals)


def heat_step(mesh, capacity, conductivity, T_old, tau, constraints=(), load=None):
    """One implicit Euler step of ``c dT/dt - div(k grad T) = f`` (no convection)."""
    S = fem.assemble_weighted_mass(mesh, capacity)
    K = S / tau + fem.assemble_stiffness(mesh, conductivity)
    rhs = S @ T_old / tau
    if load is not None:
        rhs = rhs + load
    nodes, vals = fem.constraint_arrays(list(constraints), mesh.n_nodes)
    A, b = fem.eliminate(K, rhs, nodes, vals)
    return fem.solve_spd(A, b)


def pressure_step(state: SystemState, problem: FreezingProblem) -> np.ndarray:
    A, G = pressure_system(problem, state.T)
    return fem.solve_spd(A, G)


def temperature_step(state: SystemState, problem: FreezingProblem, p_conv=None) -> np.ndarray:
    """Advance ``state.T`` by one layer; velocity from ``p_conv`` (default ``state.p``)."""
    p = state.p if p_conv is None else p_conv
    u = velocity(problem, state.T, p)
    K, b = temperature_system(problem, state.T, u)
    return fem.solve_spd(K, b)


def initial_state(problem: FreezingProblem) -> SystemState:
    T0 = problem.initial_temperature()
    state = SystemState(0, T0, np.zeros_like(T0), np.zeros((problem.mesh.n_cells, 2)))
    state.p = pressure_step(state, problem)
    state.u = velocity(problem, T0, state.p)
    return state


def run_fine(problem: FreezingProblem, snapshot_layers=(), on_layer=None) -> Trajectory:
    """Run all layers; records T and p at every layer (layer 0 included)."""
    state = initial_state(problem)
    traj = Trajectory()
    traj.append(state)
    if 0 in snapshot_layers:
        traj.snapshots[0] = state
    for n in range(problem.time.n_steps):
        try:
            p_new = pressure_step(state, problem)
            p_conv = state.p if problem.use_lagged_pressure else p_new
            T_new = temperature_step(state, problem, p_conv)
        except SolverError as exc:
            raise SolverError(f"fine solve failed at layer {n + 1}: {exc}") from exc
        state = SystemState(n + 1, T_new, p_new, velocity(problem, T_new, p_new))
        traj.append(state)
        if state.t_index in snapshot_layers:
            traj.snapshots[state.t_index] = state
        if on_layer is not None:
            on_layer(state)
        log.debug("fine layer %d: min T %.3f max T %.3f", n + 1, T_new.min(), T_new.max())
    return traj


def frozen_area(problem: FreezingProblem, T: np.ndarray) -> float:
    frozen = problem.coefficients(T)["frozen"]
    return float(problem.mesh.areas()[frozen].sum())
