"""Structured fine/coarse grids, coarse neighborhoods and freezing-pipe nodes.

Node numbering on the fine grid is row-major: node ``j * (nx + 1) + i`` sits at
``(i * hx, j * hy)``. Every rectangle ``q = j * nx + i`` is split along its
lower-left to upper-right diagonal into triangles ``2q`` and ``2q + 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True, eq=False)
class Mesh:
    nx: int
    ny: int
    Lx: float
    Ly: float
    nodes: np.ndarray
    triangles: np.ndarray
    boundary_nodes: dict = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_cells(self) -> int:
        return self.triangles.shape[0]

    @property
    def hx(self) -> float:
        return self.Lx / self.nx

    @property
    def hy(self) -> float:
        return self.Ly / self.ny

    def areas(self) -> np.ndarray:
        """Signed triangle areas."""
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def centroids(self) -> np.ndarray:
        return self.nodes[self.triangles].mean(axis=1)

    def all_boundary_nodes(self) -> np.ndarray:
        return np.unique(np.concatenate(list(self.boundary_nodes.values())))

    def checksum(self) -> str:
        import hashlib

        h = hashlib.sha256()
        h.update(np.array([self.nx, self.ny], dtype=np.int64).tobytes())
        h.update(np.array([self.Lx, self.Ly], dtype=np.float64).tobytes())
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class CoarseGrid:
    Nx: int
    Ny: int
    vertices: np.ndarray
    cells: list  # fine triangle indices per coarse rectangle
    rx: int  # fine cells per coarse cell along x
    ry: int

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_cells(self) -> int:
        return len(self.cells)


@dataclass(frozen=True)
class Neighborhood:
    """Coarse neighborhood of one coarse vertex.

    ``nodes`` is sorted; ``interior`` and ``boundary`` partition it.
    ``outer_boundary`` is the part of ``boundary`` that does not lie on the
    domain boundary (where local problems get homogeneous Dirichlet data).
    """

    index: int
    vertex: int
    coarse_cells: tuple
    nodes: np.ndarray
    interior: np.ndarray
    boundary: np.ndarray
    outer_boundary: np.ndarray
    cells: np.ndarray
    has_pipe: bool = False


@dataclass(frozen=True)
class PipeLayout:
    centers: np.ndarray
    radius: float
    pipe_nodes: np.ndarray
    per_pipe: list


def build_fine_mesh(nx: int, ny: int, Lx: float, Ly: float) -> Mesh:
    if nx < 1 or ny < 1:
        raise ValueError(f"cell counts must be >= 1, got nx={nx}, ny={ny}")
    if not (Lx > 0 and Ly > 0):
        raise ValueError(f"domain extents must be positive, got Lx={Lx}, Ly={Ly}")
    xs = np.linspace(0.0, Lx, nx + 1)
    ys = np.linspace(0.0, Ly, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    j, i = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    a = (j * (nx + 1) + i).ravel()
    b = a + 1
    c = a + nx + 2
    d = a + nx + 1
    tris = np.empty((2 * nx * ny, 3), dtype=np.int64)
    tris[0::2] = np.column_stack([a, b, c])
    tris[1::2] = np.column_stack([a, c, d])

    ids = np.arange(nodes.shape[0]).reshape(ny + 1, nx + 1)
    boundary = {
        "left": ids[:, 0].copy(),
        "right": ids[:, -1].copy(),
        "bottom": ids[0, :].copy(),
        "top": ids[-1, :].copy(),
    }
    return Mesh(nx, ny, float(Lx), float(Ly), nodes, tris, boundary)


def build_coarse_grid(mesh: Mesh, Nx: int, Ny: int) -> CoarseGrid:
    if Nx < 1 or Ny < 1:
        raise ValueError(f"coarse cell counts must be >= 1, got Nx={Nx}, Ny={Ny}")
    if mesh.nx % Nx or mesh.ny % Ny:
        raise ValueError(
            f"coarse grid {Nx}x{Ny} does not nest in fine grid {mesh.nx}x{mesh.ny}"
        )
    rx, ry = mesh.nx // Nx, mesh.ny // Ny
    xs = np.linspace(0.0, mesh.Lx, Nx + 1)
    ys = np.linspace(0.0, mesh.Ly, Ny + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    cells = []
    for J in range(Ny):
        for I in range(Nx):
            jj, ii = np.meshgrid(
                np.arange(J * ry, (J + 1) * ry), np.arange(I * rx, (I + 1) * rx),
                indexing="ij",
            )
            quads = (jj * mesh.nx + ii).ravel()
            cells.append(np.sort(np.concatenate([2 * quads, 2 * quads + 1])))
    return CoarseGrid(Nx, Ny, vertices, cells, rx, ry)


def build_neighborhoods(mesh: Mesh, coarse: CoarseGrid) -> list[Neighborhood]:
    """One neighborhood per coarse vertex, in coarse-vertex order."""
    Nx, Ny, rx, ry = coarse.Nx, coarse.Ny, coarse.rx, coarse.ry
    nxp = mesh.nx + 1
    on_domain_boundary = np.zeros(mesh.n_nodes, dtype=bool)
    on_domain_boundary[mesh.all_boundary_nodes()] = True

    hoods = []
    for J in range(Ny + 1):
        for I in range(Nx + 1):
            k = J * (Nx + 1) + I
            I0, I1 = max(I - 1, 0), min(I + 1, Nx)
            J0, J1 = max(J - 1, 0), min(J + 1, Ny)
            ccells = tuple(
                jj * Nx + ii for jj in range(J0, J1) for ii in range(I0, I1)
            )
            i0, i1 = I0 * rx, I1 * rx
            j0, j1 = J0 * ry, J1 * ry
            jj, ii = np.meshgrid(
                np.arange(j0, j1 + 1), np.arange(i0, i1 + 1), indexing="ij"
            )
            nodes = (jj * nxp + ii).ravel()
            on_edge = ((ii == i0) | (ii == i1) | (jj == j0) | (jj == j1)).ravel()
            boundary = nodes[on_edge]
            interior = nodes[~on_edge]
            outer = boundary[~on_domain_boundary[boundary]]
            cells = np.concatenate([coarse.cells[c] for c in ccells])
            hoods.append(
                Neighborhood(
                    index=k,
                    vertex=k,
                    coarse_cells=ccells,
                    nodes=nodes,
                    interior=interior,
                    boundary=boundary,
                    outer_boundary=outer,
                    cells=np.sort(cells),
                )
            )
    return hoods


def mark_pipe_neighborhoods(hoods: list[Neighborhood], pipes: PipeLayout) -> list[Neighborhood]:
    pipe_set = set(pipes.pipe_nodes.tolist())
    out = []
    for w in hoods:
        has = any(n in pipe_set for n in w.nodes.tolist())
        out.append(Neighborhood(**{**w.__dict__, "has_pipe": has}))
    return out


def default_pipe_centers(Lx: float = 12.0, Ly: float = 6.0) -> np.ndarray:
    """Two horizontal rows of ten pipes at 40% and 60% of the height."""
    xs = np.linspace(0.1 * Lx, 0.9 * Lx, 10)
    rows = [0.4 * Ly, 0.6 * Ly]
    return np.array([(x, y) for y in rows for x in xs])


def locate_pipe_nodes(mesh: Mesh, centers, r_p: float | None = None) -> PipeLayout:
    """Resolve pipe centers to fine-node sets.

    ``r_p`` defaults to one fine-cell diagonal.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    if r_p is None:
        r_p = float(np.hypot(mesh.hx, mesh.hy))
    if r_p <= 0:
        raise ConfigurationError(f"pipe radius must be positive, got {r_p}")
    tol = 1e-12 * max(mesh.Lx, mesh.Ly)
    per_pipe = []
    claimed = np.zeros(mesh.n_nodes, dtype=bool)
    for k, (cx, cy) in enumerate(centers):
        if not (-tol <= cx <= mesh.Lx + tol and -tol <= cy <= mesh.Ly + tol):
            raise ConfigurationError(f"pipe {k} center ({cx}, {cy}) lies outside the domain")
        dist = np.hypot(mesh.nodes[:, 0] - cx, mesh.nodes[:, 1] - cy)
        idx = np.flatnonzero(dist <= r_p + tol)
        if idx.size == 0:
            raise ConfigurationError(
                f"pipe {k} at ({cx}, {cy}) captures no fine node; radius {r_p} "
                "is below grid resolution"
            )
        if claimed[idx].any():
            raise ConfigurationError(f"pipe {k} overlaps the node set of another pipe")
        claimed[idx] = True
        per_pipe.append(idx)
    nodes = np.flatnonzero(claimed)
    return PipeLayout(centers, float(r_p), nodes, per_pipe)


def layer_raster(mesh: Mesh, stripes=None, layer_ids=None) -> np.ndarray:
    """Per-cell layer index (0-based) from horizontal stripes.

    ``stripes`` are the interior y-coordinates separating consecutive layers,
    listed bottom to top; ``layer_ids`` gives the layer of each stripe.
    Cells are assigned by centroid.
    """
    if stripes is None:
        stripes = [mesh.Ly / 3.0, 2.0 * mesh.Ly / 3.0]
    stripes = np.asarray(stripes, dtype=float)
    if layer_ids is None:
        layer_ids = list(range(len(stripes) + 1))[::-1]
    layer_ids = np.asarray(layer_ids, dtype=np.int64)
    if layer_ids.size != stripes.size + 1:
        raise ConfigurationError(
            f"{stripes.size} stripe boundaries need {stripes.size + 1} layer ids, "
            f"got {layer_ids.size}"
        )
    if np.any(np.diff(stripes) <= 0):
        raise ConfigurationError("stripe boundaries must be strictly increasing")
    yc = mesh.centroids()[:, 1]
    return layer_ids[np.searchsorted(stripes, yc, side="right")]
