"""Relative error norms and table-style summaries of multiscale runs."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fem
from .errors import ComparisonError, UndefinedNormError


def _unit_matrices(mesh):
    cache = mesh.__dict__.get("_unit_matrices")
    if cache is None:
        cache = (fem.assemble_weighted_mass(mesh, 1.0), fem.assemble_stiffness(mesh, 1.0))
        object.__setattr__(mesh, "_unit_matrices", cache)
    return cache


def _quotient(G, u_f, u_ms, what):
    u_f = np.asarray(u_f, dtype=float)
    d = u_f - np.asarray(u_ms, dtype=float)
    den = float(u_f @ (G @ u_f))
    if den <= 0.0:
        raise UndefinedNormError(f"reference {what} norm is zero")
    return 100.0 * np.sqrt(max(float(d @ (G @ d)), 0.0) / den)


def relative_l2(u_f, u_ms, mesh) -> float:
    """Relative L2 error in percent."""
    return _quotient(_unit_matrices(mesh)[0], u_f, u_ms, "L2")


def relative_h1(u_f, u_ms, mesh) -> float:
    """Relative H1-seminorm error in percent."""
    return _quotient(_unit_matrices(mesh)[1], u_f, u_ms, "H1")


@dataclass
class RunErrors:
    M: int
    L: int
    period: int
    dof_c: int
    series: dict = field(default_factory=dict)  # "l2_T" etc -> per-layer list

    def final(self, key: str) -> float:
        return self.series[key][-1]


def layer_errors(mesh, fine_T, fine_p, ms_T, ms_p, skip_first=True) -> dict:
    """Per-layer relative errors; layer 0 is excluded by default."""
    fine_T, fine_p = np.asarray(fine_T), np.asarray(fine_p)
    ms_T, ms_p = np.asarray(ms_T), np.asarray(ms_p)
    if fine_T.shape != ms_T.shape or fine_p.shape != ms_p.shape:
        raise ComparisonError(
            f"trajectory shapes differ: fine {fine_T.shape} vs multiscale {ms_T.shape}"
        )
    if fine_T.shape[1] != mesh.n_nodes:
        raise ComparisonError("trajectories do not live on this mesh")
    start = 1 if skip_first and fine_T.shape[0] > 1 else 0
    out = {"l2_T": [], "h1_T": [], "l2_p": [], "h1_p": []}
    for k in range(start, fine_T.shape[0]):
        out["l2_T"].append(relative_l2(fine_T[k], ms_T[k], mesh))
        out["h1_T"].append(relative_h1(fine_T[k], ms_T[k], mesh))
        out["l2_p"].append(relative_l2(fine_p[k], ms_p[k], mesh))
        out["h1_p"].append(relative_h1(fine_p[k], ms_p[k], mesh))
    return out


@dataclass
class ErrorReport:
    rows: list  # RunErrors, any order

    def get(self, M: int, L: int) -> RunErrors:
        for r in self.rows:
            if r.M == M and r.L == L:
                return r
        raise KeyError((M, L))

    @property
    def offline_counts(self):
        return sorted({r.M for r in self.rows})

    @property
    def online_counts(self):
        return sorted({r.L for r in self.rows})

    def format_table(self, field_name: str = "T") -> str:
        """Text table in the layout offline | 1 online | 2 online, 3 decimals."""
        Ls = self.online_counts
        head = ["M"] + [f"{h}[L={L}]" for L in Ls for h in ("DOF_c", f"eL2_{field_name}", f"eH1_{field_name}")]
        lines = ["  ".join(f"{h:>12}" for h in head)]
        for M in self.offline_counts:
            cells = [f"{M:>12d}"]
            for L in Ls:
                try:
                    r = self.get(M, L)
                except KeyError:
                    cells += [f"{'-':>12}"] * 3
                    continue
                cells += [
                    f"{r.dof_c:>12d}",
                    f"{r.final('l2_' + field_name):>12.3f}",
                    f"{r.final('h1_' + field_name):>12.3f}",
                ]
            lines.append("  ".join(cells))
        return "\n".join(lines)


def build_error_table(mesh, fine, runs) -> ErrorReport:
    """Compare each multiscale run to the fine trajectory.

    ``fine`` is ``(T, p)`` arrays of shape ``(layers, nodes)``; ``runs`` is an
    iterable of ``(M, L, period, dof_c, T, p)`` tuples.
    """
    fT, fp = fine
    rows = []
    for M, L, period, dof_c, T, p in runs:
        rows.append(RunErrors(M, L, period, dof_c, layer_errors(mesh, fT, fp, T, p)))
    return ErrorReport(rows)
