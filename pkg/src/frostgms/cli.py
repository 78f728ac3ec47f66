"""Command-line entry point: ``frostgms <subcommand> [flags]``.

Subcommands::

    run-fine     fine reference trajectory            -> fine_test<k>.{bin,txt}
    build-bases  offline stage                        -> basis_M<M>.fgb
    run-ms       Online GMsFEM (--offline --online --period)
                                                      -> ms_test<k>_M<M>_L<L>.{bin,txt}
    compare      error table from stored trajectories -> errors.csv, errors_series.csv
    sweep        fine run plus every (M, L) combination, printed as tables

Outputs go to ``--out``, else ``$FROSTGMS_OUTPUT_DIR``, else ``[output] directory``.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from . import analysis, io
from .config import SimulationConfig, Setup, build_setup, parse_config
from .errors import FrostGMsError
from .fine import run_fine
from .materials import thawed_fields
from .offline import build_multiscale_space, build_pou
from .online import EnrichmentSchedule, run_multiscale

log = logging.getLogger("frostgms")

SWEEP_M = (2, 4, 6, 8)
SWEEP_L = (0, 1, 2)


def build_space(setup: Setup, M: int):
    """Offline stage for ``setup``; returns ``(space, pou)``."""
    k_plus, lam = thawed_fields(setup.problem.layer_ids, setup.problem.layers)
    return build_multiscale_space(
        setup.mesh, setup.coarse, setup.hoods, k_plus, lam, M,
        pipe_nodes=setup.pipes.pipe_nodes, T_p=setup.problem.T_p,
    )


def run_ms(setup: Setup, space, pou, L: int, period: int, **kwargs):
    ms = setup.config.multiscale
    kwargs.setdefault("accumulate_online", ms.accumulate_online)
    kwargs.setdefault("strong_dirichlet", ms.strong_dirichlet)
    return run_multiscale(setup.problem, space, setup.hoods, pou,
                          EnrichmentSchedule(period=period, L=L), **kwargs)


def sweep(setup: Setup, Ms=SWEEP_M, Ls=SWEEP_L, period=None, fine=None, on_run=None):
    """Fine run plus every ``(M, L)`` combination.

    Returns ``(report, fine_T, fine_p)``. ``on_run(M, L, run)`` sees each
    multiscale run before it is discarded.
    """
    period = period or setup.config.multiscale.period
    if fine is None:
        fine = run_fine(setup.problem).arrays()
    fT, fp = fine
    rows = []
    for M in Ms:
        space, pou = build_space(setup, M)
        for L in Ls:
            t0 = time.perf_counter()
            run = run_ms(setup, space, pou, L, period)
            T, p = run.trajectory.arrays()
            errs = analysis.layer_errors(setup.mesh, fT, fp, T, p)
            rows.append(analysis.RunErrors(M, L, period, run.dof_T[-1], errs))
            log.info("M=%d L=%d: eL2_T %.3f eL2_p %.3f (%.1f s)", M, L,
                     errs["l2_T"][-1], errs["l2_p"][-1], time.perf_counter() - t0)
            if on_run is not None:
                on_run(M, L, run)
    return analysis.ErrorReport(rows), fT, fp


def _load_config(args) -> SimulationConfig:
    cfg = parse_config(args.config) if args.config else SimulationConfig()
    if getattr(args, "test", None) is not None:
        cfg = cfg.with_test(args.test)
    return cfg


def _outdir(args, cfg) -> Path:
    out = Path(args.out) if args.out else cfg.output.resolved_directory()
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_snapshots(out, prefix, setup, T, p, layers):
    for k in layers:
        if 0 <= k < len(T):
            frozen = setup.problem.coefficients(T[k])["frozen"]
            io.write_fields_vtk(out / f"{prefix}_layer{k:03d}.vtk", setup.mesh, T[k], p[k],
                                setup.problem.layer_ids, frozen)


def cmd_run_fine(args):
    cfg = _load_config(args)
    setup = build_setup(cfg)
    out = _outdir(args, cfg)
    T, p = run_fine(setup.problem).arrays()
    stem = out / f"fine_test{cfg.boundary.test}"
    io.save_trajectory(stem, T, p, kind="fine", checksum=setup.mesh.checksum())
    _write_snapshots(out, stem.name, setup, T, p, cfg.output.snapshot_layers)
    print(f"wrote {stem}.bin ({T.shape[0]} layers, {T.shape[1]} nodes)")


def cmd_build_bases(args):
    cfg = _load_config(args)
    setup = build_setup(cfg)
    out = _outdir(args, cfg)
    M = args.offline or cfg.multiscale.offline
    space, _ = build_space(setup, M)
    path = out / f"basis_M{M}.fgb"
    io.save_basis_cache(space, setup.mesh, path)
    print(f"wrote {path} (dof_T {space.dof_T}, dof_p {space.dof_p})")


def cmd_run_ms(args):
    cfg = _load_config(args)
    setup = build_setup(cfg)
    out = _outdir(args, cfg)
    ms = cfg.multiscale
    M = args.offline if args.offline is not None else ms.offline
    L = args.online if args.online is not None else ms.online
    period = args.period if args.period is not None else ms.period
    if args.cache:
        space = io.load_basis_cache(args.cache, setup.mesh)
        if space.M != M or space.n_neighborhoods != len(setup.hoods):
            raise FrostGMsError(
                f"cache {args.cache} holds M={space.M} on {space.n_neighborhoods} neighborhoods; "
                f"run needs M={M} on {len(setup.hoods)}"
            )
        pou = build_pou(setup.coarse, setup.mesh)
    else:
        space, pou = build_space(setup, M)
    run = run_ms(setup, space, pou, L, period)
    T, p = run.trajectory.arrays()
    stem = out / f"ms_test{cfg.boundary.test}_M{M}_L{L}"
    io.save_trajectory(stem, T, p, kind="multiscale", M=M, L=L, period=period,
                       dof_T=run.dof_T, dof_p=run.dof_p, checksum=setup.mesh.checksum())
    _write_snapshots(out, stem.name, setup, T, p, cfg.output.snapshot_layers)
    print(f"wrote {stem}.bin (final dof_T {run.dof_T[-1]}, dof_p {run.dof_p[-1]})")


def cmd_compare(args):
    cfg = _load_config(args)
    setup = build_setup(cfg)
    out = _outdir(args, cfg)
    fT, fp, _ = io.load_trajectory(args.fine)
    runs = []
    for stem in args.ms:
        T, p, meta = io.load_trajectory(stem)
        dof = int(meta["dof_T"].split(",")[-1]) if "dof_T" in meta else 0
        runs.append((int(meta.get("M", 0)), int(meta.get("L", 0)), int(meta.get("period", 0)), dof, T, p))
    report = analysis.build_error_table(setup.mesh, (fT, fp), runs)
    io.write_error_csv(report, out / "errors.csv", out / "errors_series.csv")
    _print_report(report)


def cmd_sweep(args):
    cfg = _load_config(args)
    setup = build_setup(cfg)
    out = _outdir(args, cfg)
    Ms = tuple(args.offline_list) if args.offline_list else SWEEP_M
    report, *_ = sweep(setup, Ms=Ms, period=args.period)
    k = cfg.boundary.test
    io.write_error_csv(report, out / f"sweep_test{k}.csv", out / f"sweep_test{k}_series.csv")
    _print_report(report)


def _print_report(report):
    for name in ("T", "p"):
        print(f"relative errors (%) for {name}")
        print(report.format_table(name))


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="frostgms", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, metavar="subcommand")

    def common(p):
        p.add_argument("--config", help="configuration file (defaults if omitted)")
        p.add_argument("--test", type=int, choices=(1, 2), help="pressure boundary case")
        p.add_argument("--out", help="output directory")
        return p

    common(sub.add_parser("run-fine", help="fine reference run")).set_defaults(func=cmd_run_fine)
    p = common(sub.add_parser("build-bases", help="offline stage, writes a basis cache"))
    p.add_argument("--offline", type=int)
    p.set_defaults(func=cmd_build_bases)
    p = common(sub.add_parser("run-ms", help="Online GMsFEM run"))
    p.add_argument("--offline", type=int)
    p.add_argument("--online", type=int)
    p.add_argument("--period", type=int)
    p.add_argument("--cache", help="basis cache from build-bases")
    p.set_defaults(func=cmd_run_ms)
    p = common(sub.add_parser("compare", help="error table from stored trajectories"))
    p.add_argument("--fine", required=True, help="fine trajectory stem")
    p.add_argument("--ms", nargs="+", required=True, help="multiscale trajectory stems")
    p.set_defaults(func=cmd_compare)
    p = common(sub.add_parser("sweep", help="full M x L error matrix"))
    p.add_argument("--period", type=int)
    p.add_argument("--offline-list", type=int, nargs="+")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (FrostGMsError, ValueError, OSError) as exc:
        print(f"frostgms {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
