import numpy as np
import pytest

from frostgms import analysis, geometry, io
from frostgms.cli import build_space
from frostgms.config import OUTPUT_ENV, SimulationConfig, build_setup, parse_config, parse_config_text
from frostgms.errors import CacheError, ConfigurationError
from frostgms.materials import PAPER_LAYERS


def test_empty_file_gives_reference_defaults(tmp_path):
    path = tmp_path / "empty.ini"
    path.write_text("")
    cfg = parse_config(path)
    g = cfg.geometry
    assert (g.nx, g.ny, g.Lx, g.Ly, g.Nx, g.Ny) == (120, 120, 12.0, 6.0, 24, 12)
    assert (cfg.time.t_max_days, cfg.time.n_steps) == (25.0, 80)
    m = cfg.materials
    assert (m.epsilon, m.delta, m.T_star) == (1e-3, 0.5, 0.0)
    assert m.layers == PAPER_LAYERS
    b = cfg.boundary
    assert (b.T_p, b.T_0, b.Q, b.F) == (-30.0, 2.0, 0.0, 0.0)
    assert b.pressure_bc() == {"left": 1.0, "right": 0.0}


def test_missing_file():
    with pytest.raises(ConfigurationError, match="does not exist"):
        parse_config("/nonexistent/frost.ini")


@pytest.mark.parametrize("text, key", [
    ("[materials]\nepsilon = 0", "epsilon"),
    ("[geometry]\nNx = 7", "nest"),
    ("[geometry]\npipe_centers = 13 1", "outside"),
    ("[geometry]\nbogus = 1", "geometry.bogus"),
    ("[weird]\nx = 1", "weird"),
    ("[time]\nn_steps = many", "time.n_steps"),
    ("[materials]\nlayer2 = 1, 2, 3", "materials.layer2"),
    ("[materials]\nlayer1 = -1, 1, 1, 1, 1, 1", "k_plus"),
    ("[boundary]\ntest = 3", "test"),
    ("[multiscale]\nperiod = 0", "period"),
])
def test_validation_errors_name_the_problem(text, key):
    with pytest.raises(ConfigurationError, match=key):
        parse_config_text(text)


def test_test_two_and_explicit_sides():
    cfg = parse_config_text("[boundary]\ntest = 2\n")
    assert cfg.boundary.pressure_bc() == {"top": 1.0, "bottom": 0.0}
    cfg = parse_config_text("[boundary]\npressure_left = 2.5\npressure_top = 0\n")
    assert cfg.boundary.pressure_bc() == {"left": 2.5, "top": 0.0}


def test_full_grammar_round():
    cfg = parse_config_text("""
[geometry]
nx = 40
ny = 20
Nx = 8
Ny = 4
pipe_centers = 3 3; 9 3
r_p = 0.4
stripes = 3.0
layer_ids = 1, 0
[materials]
layer1 = 1, 2, 3, 4, 5, 6
[multiscale]
accumulate_online = yes
strong_dirichlet = off
[output]
snapshot_layers = 1, 2
directory = results
""")
    assert cfg.geometry.pipe_centers == [(3.0, 3.0), (9.0, 3.0)]
    assert cfg.materials.layers[0].mobility == 6.0
    assert cfg.multiscale.accumulate_online and not cfg.multiscale.strong_dirichlet
    setup = build_setup(cfg)
    assert len(setup.pipes.per_pipe) == 2
    assert set(np.unique(setup.problem.layer_ids)) == {0, 1}


def test_output_directory_env_override(monkeypatch):
    cfg = SimulationConfig()
    monkeypatch.delenv(OUTPUT_ENV, raising=False)
    assert str(cfg.output.resolved_directory()) == "output"
    monkeypatch.setenv(OUTPUT_ENV, "/tmp/elsewhere")
    assert str(cfg.output.resolved_directory()) == "/tmp/elsewhere"


def _read_vtk(path):
    lines = path.read_text().splitlines()
    out = {}
    i = 0
    while i < len(lines):
        parts = lines[i].split()
        if parts and parts[0] in ("POINTS", "CELLS", "CELL_TYPES", "POINT_DATA", "CELL_DATA"):
            out[parts[0]] = int(parts[1])
        if parts and parts[0] == "SCALARS":
            name, count = parts[1], out["CELL_DATA" if "CELL_DATA" in out else "POINT_DATA"]
            out[name] = [float(v) for v in lines[i + 2:i + 2 + count]]
            i += 1 + count
        i += 1
    return out


def test_vtk_small_mesh(tmp_path):
    mesh = geometry.build_fine_mesh(1, 1, 1.0, 1.0)
    T = np.array([-1.0, 2.0, -3.0, 4.0])
    frozen = T[mesh.triangles].mean(axis=1) <= 0.0
    path = tmp_path / "f.vtk"
    io.write_fields_vtk(path, mesh, T, np.zeros(4), np.array([0, 1]), frozen)
    data = _read_vtk(path)
    assert data["POINTS"] == 4 and data["CELLS"] == 2 and data["CELL_TYPES"] == 2
    assert data["T"] == T.tolist() and len(data["p"]) == 4
    assert data["frozen"] == frozen.astype(float).tolist()
    with pytest.raises(ValueError):
        io.write_fields_vtk(path, mesh, T[:3], np.zeros(4))


def _report(M_values=(2, 4, 6, 8)):
    rng = np.random.default_rng(7)
    rows = [analysis.RunErrors(M, L, 5, 100 + M, {k: list(rng.uniform(0, 20, 4)) for k in
                                                  ("l2_T", "h1_T", "l2_p", "h1_p")})
            for M in M_values for L in (0, 1)]
    return analysis.ErrorReport(rows)


def test_error_csv_round_trip(tmp_path):
    report = _report()
    io.write_error_csv(report, tmp_path / "t.csv", tmp_path / "s.csv")
    back = io.read_error_csv(tmp_path / "t.csv", tmp_path / "s.csv")
    for row in report.rows:
        other = back.get(row.M, row.L)
        assert other.dof_c == row.dof_c
        assert other.series == row.series  # full precision series
    table_only = io.read_error_csv(tmp_path / "t.csv")
    assert len([r for r in table_only.rows if r.L == 0]) == 4
    assert table_only.get(4, 1).final("l2_p") == round(report.get(4, 1).final("l2_p"), 3)
    io.write_error_csv(table_only, tmp_path / "t2.csv")
    assert (tmp_path / "t2.csv").read_bytes() == (tmp_path / "t.csv").read_bytes()
    with pytest.raises(ValueError):
        io.write_error_csv(analysis.ErrorReport([]), tmp_path / "x.csv")


def test_trajectory_round_trip(tmp_path):
    T, p = np.random.default_rng(2).normal(size=(2, 3, 5))
    io.save_trajectory(tmp_path / "run", T, p, M=4, dof_T=[1, 2, 3])
    T2, p2, meta = io.load_trajectory(tmp_path / "run")
    assert np.array_equal(T, T2) and np.array_equal(p, p2)
    assert meta["M"] == "4" and meta["dof_T"] == "1,2,3"


@pytest.fixture(scope="module")
def cached(tmp_path_factory, desk_setup):
    space, _ = build_space(desk_setup, 2)
    path = tmp_path_factory.mktemp("cache") / "basis.fgb"
    io.save_basis_cache(space, desk_setup.mesh, path)
    return space, path


def test_basis_cache_exact_round_trip(cached, desk_setup):
    space, path = cached
    loaded = io.load_basis_cache(path, desk_setup.mesh)
    for a, b in ((space.R_T, loaded.R_T), (space.R_p, loaded.R_p)):
        assert a.shape == b.shape
        assert np.array_equal(a.toarray(), b.toarray())
    assert loaded.M == 2 and np.array_equal(loaded.pipe_omegas, space.pipe_omegas)


def test_basis_cache_rejects_other_grid(cached):
    _, path = cached
    with pytest.raises(CacheError, match="checksum"):
        io.load_basis_cache(path, geometry.build_fine_mesh(61, 30, 12.0, 6.0))


def test_basis_cache_rejects_truncation_and_version(cached, desk_setup, tmp_path):
    _, path = cached
    blob = path.read_bytes()
    cut = tmp_path / "cut.fgb"
    cut.write_bytes(blob[:-100])
    with pytest.raises(CacheError, match="corrupt"):
        io.load_basis_cache(cut, desk_setup.mesh)
    old = tmp_path / "old.fgb"
    old.write_bytes(blob[:8] + (99).to_bytes(4, "little") + blob[12:])
    with pytest.raises(CacheError, match="version"):
        io.load_basis_cache(old, desk_setup.mesh)
    junk = tmp_path / "junk.fgb"
    junk.write_bytes(b"hello")
    with pytest.raises(CacheError):
        io.load_basis_cache(junk, desk_setup.mesh)
