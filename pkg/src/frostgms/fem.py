"""P1 assembly on triangles, Dirichlet elimination and linear solves."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import AssemblyError, ConstraintConflictError, DecompositionError, SolverError

_REF_GRAD = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


def element_geometry(nodes: np.ndarray, triangles: np.ndarray):
    """Areas and basis-function gradients, shape ``(n_cells, 3, 2)``."""
    p = nodes[triangles]
    B = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # columns are edges
    det = B[:, 0, 0] * B[:, 1, 1] - B[:, 0, 1] * B[:, 1, 0]
    scale = np.abs(p).max() if p.size else 1.0
    if np.any(det <= 1e-14 * max(scale, 1.0) ** 2):
        bad = int(np.argmax(det <= 1e-14 * max(scale, 1.0) ** 2))
        raise AssemblyError(f"degenerate or inverted triangle {bad} (2*area = {det[bad]:.3e})")
    inv = np.empty_like(B)
    inv[:, 0, 0] = B[:, 1, 1] / det
    inv[:, 1, 1] = B[:, 0, 0] / det
    inv[:, 0, 1] = -B[:, 0, 1] / det
    inv[:, 1, 0] = -B[:, 1, 0] / det
    grads = np.einsum("ak,ckd->cad", _REF_GRAD, inv)
    return 0.5 * det, grads


def _as_mesh_arrays(mesh):
    return mesh.nodes, mesh.triangles


def mesh_geometry(mesh):
    """Cached :func:`element_geometry` for a whole mesh."""
    geom = mesh.__dict__.get("_geometry")
    if geom is None:
        geom = element_geometry(mesh.nodes, mesh.triangles)
        object.__setattr__(mesh, "_geometry", geom)
    return geom


def _cell_field(coeff, n_cells):
    coeff = np.asarray(coeff, dtype=float)
    if coeff.ndim == 0:
        coeff = np.full(n_cells, float(coeff))
    if coeff.shape != (n_cells,):
        raise AssemblyError(f"coefficient has shape {coeff.shape}, expected ({n_cells},)")
    return coeff


def _scatter(triangles, local, n):
    rows = np.repeat(triangles, 3, axis=1).ravel()
    cols = np.tile(triangles, (1, 3)).ravel()
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def assemble_stiffness(mesh, coeff, cells=None) -> sp.csr_matrix:
    """Coefficient-weighted stiffness matrix, one-point quadrature per cell.

    ``cells`` restricts assembly to a subset of triangles (coefficient still
    indexed over all cells).
    """
    nodes, tris = _as_mesh_arrays(mesh)
    coeff = _cell_field(coeff, tris.shape[0])
    area, g = mesh_geometry(mesh)
    if cells is not None:
        tris, coeff, area, g = tris[cells], coeff[cells], area[cells], g[cells]
    local = (coeff * area)[:, None, None] * np.einsum("cad,cbd->cab", g, g)
    return _scatter(tris, local, nodes.shape[0])


_MASS_REF = (np.ones((3, 3)) + np.eye(3)) / 12.0


def assemble_weighted_mass(mesh, coeff, cells=None) -> sp.csr_matrix:
    """Consistent mass matrix weighted by a per-cell constant coefficient."""
    nodes, tris = _as_mesh_arrays(mesh)
    coeff = _cell_field(coeff, tris.shape[0])
    area, _ = mesh_geometry(mesh)
    if cells is not None:
        tris, coeff, area = tris[cells], coeff[cells], area[cells]
    local = (coeff * area)[:, None, None] * _MASS_REF[None]
    return _scatter(tris, local, nodes.shape[0])


def cell_gradients(mesh, u: np.ndarray) -> np.ndarray:
    """Constant P1 gradient of a nodal field on every cell, shape ``(n_cells, 2)``."""
    _, g = mesh_geometry(mesh)
    return np.einsum("cad,ca->cd", g, u[mesh.triangles])


def cell_load(mesh, values: np.ndarray) -> np.ndarray:
    """Load vector of a per-cell constant source (area / 3 per vertex)."""
    area, _ = mesh_geometry(mesh)
    contrib = np.repeat((values * area / 3.0)[:, None], 3, axis=1)
    return np.bincount(mesh.triangles.ravel(), weights=contrib.ravel(), minlength=mesh.nodes.shape[0])


def assemble_convection_rhs(mesh, capacity, velocity, T_old) -> np.ndarray:
    """Explicit convection load ``capacity * (u . grad T_old)`` tested with each hat."""
    capacity = _cell_field(capacity, mesh.triangles.shape[0])
    velocity = np.asarray(velocity, dtype=float).reshape(mesh.triangles.shape[0], 2)
    grad = cell_gradients(mesh, np.asarray(T_old, dtype=float))
    return cell_load(mesh, capacity * np.einsum("cd,cd->c", velocity, grad))


@dataclass
class LinearSystem:
    matrix: sp.spmatrix
    rhs: np.ndarray
    constrained: list = field(default_factory=list)  # (node, value) pairs


def constraint_arrays(constrained, n):
    """Validate ``(node, value)`` pairs; return sorted nodes and values."""
    if len(constrained) == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    nodes = np.asarray([c[0] for c in constrained], dtype=np.int64)
    vals = np.asarray([c[1] for c in constrained], dtype=float)
    if nodes.min() < 0 or nodes.max() >= n:
        raise IndexError(f"constrained node index out of range [0, {n})")
    order = np.argsort(nodes, kind="stable")
    nodes, vals = nodes[order], vals[order]
    dup = np.flatnonzero(np.diff(nodes) == 0)
    if dup.size:
        clash = dup[vals[dup] != vals[dup + 1]]
        if clash.size:
            k = clash[0]
            raise ConstraintConflictError(
                f"node {nodes[k]} constrained to both {vals[k]} and {vals[k + 1]}"
            )
        keep = np.ones(nodes.size, dtype=bool)
        keep[dup + 1] = False
        nodes, vals = nodes[keep], vals[keep]
    return nodes, vals


def eliminate(matrix, rhs, nodes, values):
    """Symmetric elimination of Dirichlet nodes; returns ``(A, b)``."""
    A = sp.csr_matrix(matrix)
    n = A.shape[0]
    b = np.array(rhs, dtype=float, copy=True)
    if nodes.size == 0:
        return A, b
    x = np.zeros(n)
    x[nodes] = values
    b -= A @ x
    keep = np.ones(n)
    keep[nodes] = 0.0
    D = sp.diags(keep)
    fix = np.zeros(n)
    fix[nodes] = 1.0
    A = (D @ A @ D + sp.diags(fix)).tocsr()
    A.eliminate_zeros()
    b[nodes] = values
    return A, b


def apply_dirichlet(system: LinearSystem) -> LinearSystem:
    """Return the system with constrained rows/columns replaced by identity."""
    n = system.matrix.shape[0]
    nodes, vals = constraint_arrays(system.constrained, n)
    A, b = eliminate(system.matrix, system.rhs, nodes, vals)
    return LinearSystem(A, b, list(zip(nodes.tolist(), vals.tolist())))


def solve_spd(matrix, rhs, rtol: float = 1e-10) -> np.ndarray:
    """Direct sparse solve with a residual check and one refinement step."""
    b = np.asarray(rhs, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b)
    if sp.issparse(matrix):
        A = sp.csc_matrix(matrix)
        try:
            lu = spla.splu(A)
        except RuntimeError as exc:
            raise SolverError(f"sparse factorization failed: {exc}") from exc
        solve = lu.solve
    else:
        A = np.asarray(matrix, dtype=float)
        try:
            fac = scipy.linalg.cho_factor(A)
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"matrix is not positive definite: {exc}") from exc
        solve = lambda r: scipy.linalg.cho_solve(fac, r)  # noqa: E731
    x = solve(b)
    r = b - A @ x
    res = np.linalg.norm(r) / bnorm
    if not np.isfinite(res):
        raise SolverError("linear solve produced non-finite values", res)
    if res > rtol:
        x = x + solve(r)
        res = np.linalg.norm(b - A @ x) / bnorm
        if res > rtol:
            raise SolverError("linear solve did not reach tolerance", res)
    return x


def solve_dense_generalized_eig(A, S, m: int):
    """Lowest ``m`` eigenpairs of ``A x = lam S x`` with S-orthonormal vectors."""
    A = np.asarray(A, dtype=float)
    S = np.asarray(S, dtype=float)
    n = A.shape[0]
    if not 1 <= m <= n:
        raise ValueError(f"requested {m} eigenpairs of a {n}x{n} pencil")
    try:
        vals, vecs = scipy.linalg.eigh(A, S, subset_by_index=[0, m - 1])
    except np.linalg.LinAlgError as exc:
        raise DecompositionError(f"mass matrix is not positive definite: {exc}") from exc
    return vals, vecs
