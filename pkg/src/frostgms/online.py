"""Coarse projected solves and residual-driven online enrichment.

Dirichlet data (pipe temperature, pressure boundary values) is imposed
strongly: the constrained columns of ``R`` are zeroed and the prescribed
values are added back as a lift, so ``x_ms = R0^T x_c + g``. Rows of ``R0``
that vanish entirely are skipped in the coarse solve.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import fem
from .errors import ConfigurationError, RankDeficiencyError, SolverError
from .fine import FreezingProblem, SystemState, Trajectory, pressure_system, temperature_system, velocity
from .offline import MultiscaleSpace, PartitionOfUnity

log = logging.getLogger(__name__)

PIVOT_FLOOR = 1e-13


@dataclass(frozen=True)
class EnrichmentSchedule:
    period: int = 5
    L: int = 1

    def __post_init__(self):
        if self.period < 1:
            raise ConfigurationError(f"enrichment period must be >= 1, got {self.period}")
        if self.L < 0:
            raise ConfigurationError(f"online iterations must be >= 0, got {self.L}")

    def enriches(self, layer: int) -> bool:
        return self.L > 0 and layer % self.period == 0


@dataclass
class CoarseSystem:
    matrix: sp.csc_matrix  # R0 K R0^T over the active rows
    rhs: np.ndarray
    active: np.ndarray  # rows of R that took part in the solve
    coeffs: np.ndarray  # full-length coarse vector (zeros on inactive rows)
    x_ms: np.ndarray


def _mask_columns(R: sp.csr_matrix, nodes: np.ndarray) -> sp.csr_matrix:
    if nodes.size == 0:
        return R
    keep = np.ones(R.shape[1])
    keep[nodes] = 0.0
    R0 = (R @ sp.diags(keep)).tocsr()
    R0.eliminate_zeros()
    return R0


def solve_projected(R, K, b, nodes=np.zeros(0, dtype=np.int64), values=np.zeros(0), labels=None,
                    strong=False):
    """Galerkin solve of the eliminated fine system ``K x = b`` in ``span(R)``.

    With ``strong`` the constrained columns of ``R`` are zeroed and the
    prescribed values lifted back in; otherwise ``x = R^T x_c``.
    """
    R = sp.csr_matrix(R)
    R0 = _mask_columns(R, nodes) if strong else R
    active = np.flatnonzero(np.diff(R0.indptr) > 0)
    Ra = R0[active]
    Kc = (Ra @ K @ Ra.T).tocsc()
    Kc = 0.5 * (Kc + Kc.T)
    bc = Ra @ b
    d = np.sqrt(np.abs(Kc.diagonal()))
    d[d == 0] = 1.0
    Dinv = sp.diags(1.0 / d)
    Ks = (Dinv @ Kc @ Dinv).tocsc()
    y = None
    try:
        lu = spla.splu(Ks, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options={"SymmetricMode": True})
        ys = lu.solve(bc / d)
        # Jacobi scaling puts healthy pivots at O(1); a vanishing one means a dependent basis
        ok = np.all(np.isfinite(ys)) and np.all(lu.U.diagonal() > PIVOT_FLOOR)
        if ok and np.linalg.norm(Ks @ ys - bc / d) <= 1e-8 * max(np.linalg.norm(bc / d), 1e-300):
            y = ys / d
    except RuntimeError:
        pass
    if y is None:
        w, v = np.linalg.eigh(Ks.toarray())
        worst = active[int(np.argmax(np.abs(v[:, 0])))]
        name = labels[worst] if labels is not None else f"row {worst}"
        raise RankDeficiencyError(
            f"coarse matrix ({Ks.shape[0]}x{Ks.shape[0]}) is not positive definite; "
            f"smallest scaled eigenvalue {w[0]:.3e} is dominated by basis {name}"
        )
    coeffs = np.zeros(R.shape[0])
    coeffs[active] = y
    x = Ra.T @ y
    if strong:
        x[nodes] = values
    return CoarseSystem(Kc, bc, active, coeffs, x)


def global_residual(K, b, x, nodes=np.zeros(0, dtype=np.int64)):
    r = b - K @ x
    r[nodes] = 0.0
    return r


def local_free_nodes(hood, constrained_mask: np.ndarray) -> np.ndarray:
    """Neighborhood nodes carrying a local test function.

    Excludes the part of the neighborhood boundary inside the domain and any
    globally constrained node; domain-boundary nodes with natural conditions
    stay free.
    """
    nodes = np.setdiff1d(hood.nodes, hood.outer_boundary)
    return nodes[~constrained_mask[nodes]]


def local_residual(hood, K, b, x, constrained_mask):
    """Residual of ``K x = b`` tested against the local functions of ``hood``."""
    free = local_free_nodes(hood, constrained_mask)
    return free, b[free] - K[free] @ x


def solve_online_basis(hood, free, residual, K, chi: np.ndarray):
    """Local correction ``Phi`` (zero outside ``free``) and PoU-weighted basis.

    ``chi`` is a fine-nodal vector; both outputs are fine-nodal vectors.
    """
    n = K.shape[0]
    phi = np.zeros(n)
    if free.size and np.any(residual):
        Kl = K[free][:, free]
        phi[free] = fem.solve_spd(Kl, residual)
    return phi, phi * chi


def _normalized_rows(vectors, n):
    """Stack vectors as sparse rows scaled to unit max-norm (zero rows kept)."""
    data, indices, indptr = [], [], [0]
    for v in vectors:
        nz = np.flatnonzero(v)
        vals = v[nz]
        if nz.size:
            vals = vals / np.abs(vals).max()
        data.append(vals)
        indices.append(nz)
        indptr.append(indptr[-1] + nz.size)
    if len(indptr) == 1:
        return sp.csr_matrix((0, n))
    return sp.csr_matrix((np.concatenate(data), np.concatenate(indices), np.array(indptr)),
                         shape=(len(vectors), n))


def enrich(space: MultiscaleSpace, online_T, online_p) -> MultiscaleSpace:
    """Append one generation of online bases (one row per neighborhood and field)."""
    n = space.n_nodes
    T_block = _normalized_rows(online_T, n)
    p_block = _normalized_rows(online_p, n)
    new = space.offline_only()
    new.online_T = [*space.online_T, T_block]
    new.online_p = [*space.online_p, p_block]
    return new


@dataclass
class LayerSolution:
    p: CoarseSystem
    T: CoarseSystem
    systems: dict


def project_and_solve_coarse(problem: FreezingProblem, space: MultiscaleSpace, T_n, p_n,
                             strong_dirichlet=True):
    """One multiscale layer: projected pressure solve, then projected heat solve.

    The heat right-hand side is assembled from the fine reconstruction ``T_n``;
    testing it with ``R`` equals using the mass-weighted projection of ``T_n``
    as the previous coarse state.
    """
    p_nodes, p_vals = problem.pressure_constraints()
    T_nodes, T_vals = problem.temperature_constraints()
    A_p, G_p = pressure_system(problem, T_n)
    p_sol = solve_projected(space.R_p, A_p, G_p, p_nodes, p_vals, space.block_labels("p"),
                            strong=strong_dirichlet)
    p_conv = p_n if problem.use_lagged_pressure else p_sol.x_ms
    u = velocity(problem, T_n, p_conv)
    K_T, b_T = temperature_system(problem, T_n, u)
    T_sol = solve_projected(space.R_T, K_T, b_T, T_nodes, T_vals, space.block_labels("T"),
                            strong=strong_dirichlet)
    if not strong_dirichlet:
        p_nodes = T_nodes = np.zeros(0, dtype=np.int64)
    systems = {"p": (A_p, G_p, p_nodes), "T": (K_T, b_T, T_nodes)}
    return LayerSolution(p_sol, T_sol, systems)


@dataclass
class MultiscaleRun:
    trajectory: Trajectory
    dof_T: list = field(default_factory=list)
    dof_p: list = field(default_factory=list)
    residuals: dict = field(default_factory=dict)  # layer -> {"T": [...], "p": [...]}
    energy_residuals: dict = field(default_factory=dict)
    pre_enrichment: dict = field(default_factory=dict)  # layer -> (T, p)
    space: MultiscaleSpace | None = None


def _dual_norm(K, r):
    """``sqrt(r^T K^{-1} r)`` on the unconstrained rows."""
    return float(np.sqrt(max(r @ fem.solve_spd(K, r), 0.0))) if np.any(r) else 0.0


def run_multiscale(problem: FreezingProblem, space: MultiscaleSpace, hoods, pou: PartitionOfUnity,
                   schedule: EnrichmentSchedule = EnrichmentSchedule(),
                   accumulate_online: bool = False, energy_residuals: bool = False,
                   strong_dirichlet: bool = True, T_initial=None) -> MultiscaleRun:
    """Online GMsFEM time loop.

    At every layer divisible by ``schedule.period`` the current space is reset
    to its offline part (unless ``accumulate_online``), solved, and enriched
    ``schedule.L`` times; the enriched space is kept until the next event.
    """
    n = problem.mesh.n_nodes
    chis = [pou.values[h.vertex].toarray().ravel() for h in hoods] if schedule.L else []
    T_mask = np.zeros(n, dtype=bool)
    p_mask = np.zeros(n, dtype=bool)
    if strong_dirichlet:
        T_mask[problem.temperature_constraints()[0]] = True
        p_mask[problem.pressure_constraints()[0]] = True

    T = problem.initial_temperature() if T_initial is None else np.asarray(T_initial, float).copy()
    p_nodes, p_vals = problem.pressure_constraints()
    A_p, G_p = pressure_system(problem, T)
    p = solve_projected(space.R_p, A_p, G_p, p_nodes, p_vals, strong=strong_dirichlet).x_ms

    traj = Trajectory()
    traj.append(SystemState(0, T, p, velocity(problem, T, p)))
    run = MultiscaleRun(traj)
    run.dof_T.append(space.dof_T)
    run.dof_p.append(space.dof_p)

    current = space
    for layer in range(1, problem.time.n_steps + 1):
        enrich_now = schedule.enriches(layer)
        if enrich_now and not accumulate_online:
            current = current.offline_only()
        try:
            sol = project_and_solve_coarse(problem, current, T, p, strong_dirichlet)
            if enrich_now:
                run.pre_enrichment[layer] = (sol.T.x_ms.copy(), sol.p.x_ms.copy())
                hist = {"T": [], "p": []}
                ehist = {"T": [], "p": []}
                for it in range(schedule.L + 1):
                    new_T, new_p = [], []
                    for key, mask, out in (("T", T_mask, new_T), ("p", p_mask, new_p)):
                        K, b, cnodes = sol.systems[key]
                        x = getattr(sol, key).x_ms
                        r = global_residual(K, b, x, cnodes)
                        hist[key].append(float(np.linalg.norm(r)))
                        if energy_residuals:
                            ehist[key].append(_dual_norm(K, r))
                        if it == schedule.L:
                            continue
                        rnorm = np.linalg.norm(r)
                        for hood, chi in zip(hoods, chis):
                            free = local_free_nodes(hood, mask)
                            r_loc = r[free]
                            if np.linalg.norm(r_loc) <= 1e-12 * rnorm:
                                r_loc = np.zeros_like(r_loc)
                            _, theta = solve_online_basis(hood, free, r_loc, K, chi)
                            out.append(theta)
                    if it == schedule.L:
                        break
                    current = enrich(current, new_T, new_p)
                    sol = project_and_solve_coarse(problem, current, T, p, strong_dirichlet)
                run.residuals[layer] = hist
                if energy_residuals:
                    run.energy_residuals[layer] = ehist
        except SolverError as exc:
            raise SolverError(f"multiscale solve failed at layer {layer}: {exc}") from exc
        T, p = sol.T.x_ms, sol.p.x_ms
        traj.append(SystemState(layer, T, p, velocity(problem, T, p)))
        run.dof_T.append(current.dof_T)
        run.dof_p.append(current.dof_p)
        log.debug("ms layer %d: dof_T %d dof_p %d", layer, current.dof_T, current.dof_p)
    run.space = current
    return run
