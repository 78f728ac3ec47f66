"""Offline multiscale spaces: snapshots, local spectral bases, pipe bases.

Local vectors are stored on the sorted node list of their neighborhood; the
projection matrices zero-extend them to the whole fine grid.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from . import fem
from .errors import DecompositionError

log = logging.getLogger(__name__)


@dataclass
class SnapshotSpace:
    index: int
    nodes: np.ndarray  # global ids of the neighborhood nodes (sorted)
    vectors: np.ndarray  # (J, n_local); one row per boundary node
    boundary_local: np.ndarray


@dataclass
class PartitionOfUnity:
    values: sp.csr_matrix  # (N_c, n_nodes)

    def local(self, i: int, nodes: np.ndarray) -> np.ndarray:
        return self.values[i].toarray().ravel()[nodes]


@dataclass
class MultiscaleSpace:
    """Offline blocks plus zero or more online generations for both fields.

    Row order of ``R_T``: neighborhood-major offline bases, then pipe bases,
    then online generations in creation order (one row per neighborhood each).
    """

    n_nodes: int
    M: int
    n_neighborhoods: int
    offline_T: sp.csr_matrix
    offline_p: sp.csr_matrix
    pipe_T: sp.csr_matrix
    pipe_omegas: np.ndarray
    online_T: list = field(default_factory=list)
    online_p: list = field(default_factory=list)
    eigenvalues_T: np.ndarray | None = None
    eigenvalues_p: np.ndarray | None = None

    @property
    def n_pipe(self) -> int:
        return self.pipe_T.shape[0]

    @property
    def R_T(self) -> sp.csr_matrix:
        return sp.vstack([self.offline_T, self.pipe_T, *self.online_T], format="csr")

    @property
    def R_p(self) -> sp.csr_matrix:
        return sp.vstack([self.offline_p, *self.online_p], format="csr")

    @property
    def dof_T(self) -> int:
        return self.R_T.shape[0]

    @property
    def dof_p(self) -> int:
        return self.R_p.shape[0]

    def block_labels(self, field_name: str) -> list[str]:
        """Human-readable block name for every row of ``R_T`` / ``R_p``."""
        labels = [
            f"offline(omega={i}, j={j})"
            for i in range(self.n_neighborhoods)
            for j in range(self.M)
        ]
        if field_name == "T":
            labels += [f"pipe(omega={i})" for i in self.pipe_omegas.tolist()]
            gens = self.online_T
        else:
            gens = self.online_p
        for g, block in enumerate(gens):
            labels += [f"online(gen={g + 1}, omega={i})" for i in range(block.shape[0])]
        return labels

    def offline_only(self) -> "MultiscaleSpace":
        return replace(self, online_T=[], online_p=[])


def local_matrices(mesh, hood, coeff):
    """Stiffness and mass on a neighborhood, restricted to its own cells."""
    A = fem.assemble_stiffness(mesh, coeff, cells=hood.cells)
    S = fem.assemble_weighted_mass(mesh, coeff, cells=hood.cells)
    idx = hood.nodes
    return A[idx][:, idx].toarray(), S[idx][:, idx].toarray()


def _local_positions(hood, global_ids):
    pos = np.searchsorted(hood.nodes, global_ids)
    return pos


def compute_snapshots(mesh, hood, coeff, A_local=None) -> SnapshotSpace:
    """Harmonic extensions of discrete deltas on the neighborhood boundary."""
    if hood.interior.size == 0:
        raise ValueError(f"neighborhood {hood.index} has no interior nodes")
    if A_local is None:
        A_local, _ = local_matrices(mesh, hood, coeff)
    I = _local_positions(hood, hood.interior)
    B = _local_positions(hood, hood.boundary)
    try:
        fac = scipy.linalg.cho_factor(A_local[np.ix_(I, I)])
    except np.linalg.LinAlgError as exc:
        raise fem.SolverError(f"singular local system on neighborhood {hood.index}") from exc
    interior_vals = -scipy.linalg.cho_solve(fac, A_local[np.ix_(I, B)])  # (nI, J)
    vectors = np.zeros((B.size, hood.nodes.size))
    vectors[np.arange(B.size), B] = 1.0
    vectors[:, I] = interior_vals.T
    return SnapshotSpace(hood.index, hood.nodes, vectors, B)


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    """Make the first significant entry of every column positive."""
    out = vecs.copy()
    for k in range(out.shape[1]):
        col = out[:, k]
        tol = 1e-10 * np.abs(col).max() if col.size else 0.0
        nz = np.flatnonzero(np.abs(col) > tol)
        if nz.size and col[nz[0]] < 0:
            out[:, k] = -col
    return out


def solve_spectral(snapshots: SnapshotSpace, A_local, S_local, M: int):
    """Lowest ``M`` modes of the snapshot-projected pencil, lifted to the fine grid.

    Returns ``(eigenvalues, vectors)`` with vectors of shape ``(n_local, M)``.
    """
    Rs = snapshots.vectors
    if M > Rs.shape[0]:
        raise ValueError(f"M={M} exceeds snapshot count {Rs.shape[0]} on neighborhood {snapshots.index}")
    At = Rs @ A_local @ Rs.T
    St = Rs @ S_local @ Rs.T
    At = 0.5 * (At + At.T)
    St = 0.5 * (St + St.T)
    try:
        vals, vecs = fem.solve_dense_generalized_eig(At, St, M)
    except DecompositionError:
        shift = 1e-12 * np.trace(St) / St.shape[0]
        log.warning("regularizing snapshot mass matrix on neighborhood %d (shift %.3e)",
                    snapshots.index, shift)
        vals, vecs = fem.solve_dense_generalized_eig(At, St + shift * np.eye(St.shape[0]), M)
    return vals, _fix_signs(Rs.T @ vecs)


def build_pou(coarse, mesh) -> PartitionOfUnity:
    """Bilinear coarse-grid hat functions sampled at the fine nodes."""
    Hx = mesh.Lx / coarse.Nx
    Hy = mesh.Ly / coarse.Ny
    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    rows, cols, vals = [], [], []
    for k, (vx, vy) in enumerate(coarse.vertices):
        wx = np.clip(1.0 - np.abs(x - vx) / Hx, 0.0, None)
        wy = np.clip(1.0 - np.abs(y - vy) / Hy, 0.0, None)
        w = wx * wy
        nz = np.flatnonzero(w > 0)
        rows.append(np.full(nz.size, k))
        cols.append(nz)
        vals.append(w[nz])
    values = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(coarse.n_vertices, mesh.n_nodes),
    )
    return PartitionOfUnity(values)


def build_offline_basis(eigvecs: np.ndarray, chi_local: np.ndarray) -> np.ndarray:
    return eigvecs * chi_local[:, None]


def build_pipe_basis(mesh, hood, coeff, pipe_nodes, T_p, chi_local=None, A_local=None):
    """Local k-harmonic lift of the pipe temperature, times the hat function.

    Zero on the part of the neighborhood boundary inside the domain, ``T_p`` on
    pipe nodes, natural conditions on the domain boundary. Returns
    ``(pre_pou, basis)``; ``basis`` is None when ``chi_local`` is None.
    """
    here = np.intersect1d(hood.nodes, pipe_nodes)
    if here.size == 0:
        raise ValueError(f"neighborhood {hood.index} contains no pipe nodes")
    if A_local is None:
        A_local, _ = local_matrices(mesh, hood, coeff)
    n = hood.nodes.size
    fixed_zero = np.setdiff1d(hood.outer_boundary, here)
    c_nodes = np.concatenate([_local_positions(hood, fixed_zero), _local_positions(hood, here)])
    c_vals = np.concatenate([np.zeros(fixed_zero.size), np.full(here.size, float(T_p))])
    A, b = fem.eliminate(sp.csr_matrix(A_local), np.zeros(n), c_nodes, c_vals)
    psi = fem.solve_spd(A, b) if np.any(b) else np.zeros(n)
    psi[c_nodes] = c_vals
    if chi_local is None:
        return psi, None
    return psi, psi * chi_local


def _block_to_csr(local_blocks, node_lists, n_nodes):
    rows, cols, vals = [], [], []
    r = 0
    for block, nodes in zip(local_blocks, node_lists):
        for col in np.atleast_2d(block.T) if block.ndim == 2 else [block]:
            nz = np.flatnonzero(col)
            rows.append(np.full(nz.size, r))
            cols.append(nodes[nz])
            vals.append(col[nz])
            r += 1
    if r == 0:
        return sp.csr_matrix((0, n_nodes))
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(r, n_nodes)
    )


def assemble_projection(space: MultiscaleSpace):
    """Stacked projection operators ``(R_T, R_p)``."""
    R_T, R_p = space.R_T, space.R_p
    if R_T.shape[1] != space.n_nodes or R_p.shape[1] != space.n_nodes:
        raise ValueError("basis blocks do not match the fine-grid dimension")
    return R_T, R_p


def build_multiscale_space(mesh, coarse, hoods, k_plus, lam, M, pipe_nodes=(), T_p=0.0):
    """Full offline stage on every neighborhood.

    ``k_plus`` and ``lam`` are per-cell thawed conductivity and unfrozen
    mobility.
    """
    pou = build_pou(coarse, mesh)
    pipe_nodes = np.asarray(pipe_nodes, dtype=np.int64)
    pipe_set = np.zeros(mesh.n_nodes, dtype=bool)
    pipe_set[pipe_nodes] = True
    blocks_T, blocks_p, nodes = [], [], []
    pipe_blocks, pipe_nodes_list, pipe_omegas = [], [], []
    eig_T, eig_p = [], []
    for hood in hoods:
        chi = pou.local(hood.vertex, hood.nodes)
        for coeff, blocks, eigs in ((k_plus, blocks_T, eig_T), (lam, blocks_p, eig_p)):
            A_loc, S_loc = local_matrices(mesh, hood, coeff)
            snaps = compute_snapshots(mesh, hood, coeff, A_local=A_loc)
            vals, vecs = solve_spectral(snaps, A_loc, S_loc, M)
            blocks.append(build_offline_basis(vecs, chi))
            eigs.append(vals)
            if coeff is k_plus and pipe_set[hood.nodes].any():
                _, basis = build_pipe_basis(mesh, hood, coeff, pipe_nodes, T_p, chi, A_local=A_loc)
                pipe_blocks.append(basis)
                pipe_nodes_list.append(hood.nodes)
                pipe_omegas.append(hood.index)
        nodes.append(hood.nodes)
    return MultiscaleSpace(
        n_nodes=mesh.n_nodes,
        M=M,
        n_neighborhoods=len(hoods),
        offline_T=_block_to_csr(blocks_T, nodes, mesh.n_nodes),
        offline_p=_block_to_csr(blocks_p, nodes, mesh.n_nodes),
        pipe_T=_block_to_csr(pipe_blocks, pipe_nodes_list, mesh.n_nodes),
        pipe_omegas=np.asarray(pipe_omegas, dtype=np.int64),
        eigenvalues_T=np.array(eig_T),
        eigenvalues_p=np.array(eig_p),
    ), pou
