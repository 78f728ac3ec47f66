import numpy as np
import pytest

from frostgms import geometry
from frostgms.config import SimulationConfig, build_setup
from frostgms.fine import FreezingProblem, TimeConfig
from frostgms.materials import LayerProperties, PhaseParams

# Filled by test_acceptance.py; printed once at the end of the session.
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


def small_config(nx=60, ny=30, Nx=12, Ny=6, n_steps=10, test=1, pipes=None, **time):
    cfg = SimulationConfig()
    cfg.geometry.nx, cfg.geometry.ny = nx, ny
    cfg.geometry.Nx, cfg.geometry.Ny = Nx, Ny
    cfg.geometry.pipe_centers = pipes
    cfg.time.n_steps = n_steps
    for k, v in time.items():
        setattr(cfg.time, k, v)
    return cfg.with_test(test)


@pytest.fixture(scope="session")
def desk_setup():
    """60x30 fine / 12x6 coarse instance of the reference problem, 10 layers."""
    return build_setup(small_config())


@pytest.fixture
def unit_mesh():
    return geometry.build_fine_mesh(8, 8, 1.0, 1.0)


def homogeneous_problem(mesh, pipe_nodes=(), T_p=-5.0, T_0=2.0, n_steps=4, days=1.0,
                        pressure_bc=None, layer=None, phase=None):
    layer = layer or LayerProperties(2.0, 2.5, 2.0e6, 1.8e6, 60e6, 1e-12)
    return FreezingProblem(
        mesh=mesh,
        layer_ids=np.zeros(mesh.n_cells, dtype=np.int64),
        layers=(layer,),
        phase=phase or PhaseParams(),
        pipe_nodes=np.asarray(pipe_nodes, dtype=np.int64),
        T_p=T_p,
        T_0=T_0,
        pressure_bc=pressure_bc if pressure_bc is not None else {"left": 1.0, "right": 0.0},
        time=TimeConfig.from_days(days, n_steps),
    )
