import argparse
import logging
import os
import sys

import numpy as np
import pandas as pd

from tdnnsplate import miscellaneous
from tdnnsplate.assembly import assemble, build_plate_spaces
from tdnnsplate.cases import BaseCase, RunConfig, SOLVERS, get_case
from tdnnsplate.material import derive_tensors
from tdnnsplate.mesh import MeshFormatError, plate_with_hole_mesh, save_mesh, unit_square_mesh
from tdnnsplate.postprocess import (FLOAT_FORMAT, convergence_rate, export_vtk, l2_difference,
                                    l2_error)
from tdnnsplate.solver import SolverError, solve

logger = logging.getLogger(__name__)

CSV_COLUMNS = ["level", "h", "ndof_total", "ndof_condensed", "err_w_l2", "rate_w",
               "err_theta_l2", "rate_theta"]


def _add_run_arguments(parser, levels):
    cases = sorted(cls.name for cls in BaseCase.get_subclasses(BaseCase) if cls.name)
    parser.add_argument("--case", choices=cases, default=None,
                        help="benchmark case (custom when only --mesh is given)")
    parser.add_argument("--order", type=int, default=1, help="polynomial order k in 1..4")
    parser.add_argument("--thickness", type=float, default=None, help="plate thickness t")
    parser.add_argument("--levels", type=int, default=levels, help="number of mesh levels")
    parser.add_argument("--mesh", default=None, help="mesh file of the custom case")
    parser.add_argument("--segments", type=int, default=16, help="hole segments (at least 8)")
    parser.add_argument("--graded-levels", type=int, default=0, dest="graded_levels")
    parser.add_argument("--traction", type=float, default=0.1,
                        help="edge shear slope on the right edge of the hole plate")
    parser.add_argument("--load", type=float, default=None, help="constant transverse load")
    parser.add_argument("--solver", choices=SOLVERS, default="direct")
    parser.add_argument("--tol", type=float, default=1e-10)
    hybrid = parser.add_mutually_exclusive_group()
    hybrid.add_argument("--hybrid", dest="hybrid", action="store_true", default=True,
                        help="condensed hybrid solve (default)")
    hybrid.add_argument("--monolithic", dest="hybrid", action="store_false",
                        help="dense solve of the full indefinite system")
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--log-dir", dest="log_dir", default=".")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="tdnnsplate",
        description="Mixed finite elements for Reissner-Mindlin plates with tangential "
                    "rotations and normal-normal moments.")
    commands = parser.add_subparsers(dest="command")
    commands.required = True

    mesh = commands.add_parser("mesh", help="write a generated mesh")
    mesh.add_argument("kind", choices=["square", "hole"])
    mesh.add_argument("--n", type=int, default=4, help="subdivisions of the unit square")
    mesh.add_argument("--segments", type=int, default=32, help="hole segments (at least 8)")
    mesh.add_argument("--graded-levels", type=int, default=0, dest="graded_levels")
    mesh.add_argument("--output", required=True, help="mesh file to write")
    mesh.add_argument("--log-dir", dest="log_dir", default=".")

    solve_ = commands.add_parser("solve", help="solve once and export the fields")
    _add_run_arguments(solve_, levels=1)
    solve_.add_argument("--n", type=int, default=4, dest="n0",
                        help="subdivisions of the unit square")
    solve_.add_argument("--export", default=None, help="VTK file to write")

    study = commands.add_parser("convergence", help="errors and rates over refined meshes")
    _add_run_arguments(study, levels=4)
    study.add_argument("--n0", type=int, default=4, help="coarsest subdivision of the square")
    study.add_argument("--csv", default=None, help="CSV file to write (stdout if omitted)")
    return parser


def config_from_args(args):
    """RunConfig of parsed ``solve`` or ``convergence`` arguments."""
    case = args.case
    if case is None:
        case = "custom" if args.mesh else "clamped-square"
    custom_params = {
        "case": case, "order": args.order, "thickness": args.thickness, "levels": args.levels,
        "n0": args.n0, "mesh": args.mesh, "segments": args.segments,
        "graded_levels": args.graded_levels, "traction": args.traction, "load": args.load,
        "solver": args.solver, "tol": args.tol, "hybrid": args.hybrid, "threads": args.threads,
        "csv": getattr(args, "csv", None), "export": getattr(args, "export", None),
    }
    return RunConfig(custom_params)


def solve_case(case, mesh, config):
    """
    Assembles and solves ``case`` on ``mesh``.

    Returns
    -------
    system : BlockSystem
    fields : SolutionFields
    """
    tensors = derive_tensors(case.material())
    bc = case.bc(mesh)
    spaces = build_plate_spaces(mesh, config["order"], bc, hybrid=config["hybrid"])
    system = assemble(mesh, spaces, tensors, case.load(), bc, hybrid=config["hybrid"],
                      n_jobs=config["threads"])
    fields = solve(system, method=config["solver"], tol=config["tol"], n_jobs=config["threads"])
    return system, fields


def _write(document, path):
    miscellaneous.create_output_folder(os.path.dirname(path))
    with open(path, "w") as handle:
        handle.write(document)


def cmd_mesh(args):
    if args.kind == "square":
        mesh = unit_square_mesh(args.n)
    else:
        mesh = plate_with_hole_mesh(segments=args.segments, graded_levels=args.graded_levels)
    miscellaneous.create_output_folder(os.path.dirname(args.output))
    save_mesh(mesh, args.output)
    logger.info("Wrote {} to {}".format(mesh, args.output))
    print("{} vertices, {} triangles written to {}".format(mesh.nvertices, mesh.ntriangles,
                                                           args.output))
    return 0


def cmd_solve(config):
    """
    Solves the configured case once on its finest mesh level.

    Prints a summary line and writes the VTK export when configured.
    """
    case = get_case(config)
    mesh = case.meshes()[-1]
    system, fields = solve_case(case, mesh, config)
    w = fields.deflection[:mesh.nvertices]
    stats = fields.stats
    solver_stats = ", ".join("{}={}".format(k, v) for k, v in sorted(stats.items()))
    print("case={} k={} t={} ndof={} free={} [{}] min_w={} max_w={}".format(
        case.name, config["order"], case.thickness, system.ndof_total, system.ndof_free,
        solver_stats, FLOAT_FORMAT % w.min(), FLOAT_FORMAT % w.max()))
    if config["export"]:
        _write(export_vtk(mesh, fields, title="tdnnsplate {} k={}".format(case.name, config["order"])),
               config["export"])
        logger.info("Exported solution to {}".format(config["export"]))
    return 0


def convergence_table(config, callback=None):
    """
    Errors and observed rates of the configured case over its mesh hierarchy.

    Cases with an exact solution are measured against it; otherwise every level is
    compared with the finest solution, whose row carries no error.

    Parameters
    ----------
    config : RunConfig
    callback : callable, optional (default=None)
        Called as ``callback(level, system, fields)`` after every solve

    Returns
    -------
    table : pandas.DataFrame
        Columns of ``CSV_COLUMNS``
    """
    case = get_case(config)
    exact = case.exact()
    meshes = case.meshes()
    rows, solutions = [], []
    for level, mesh in enumerate(meshes):
        system, fields = solve_case(case, mesh, config)
        if callback is not None:
            callback(level, system, fields)
        row = {"level": level, "h": mesh.h, "ndof_total": system.ndof_total,
               "ndof_condensed": int(fields.stats.get("condensed_size", system.ndof_free))}
        if exact is not None:
            row["err_w_l2"] = l2_error(fields.spaces["deflection"], fields.deflection, exact.w)
            row["err_theta_l2"] = l2_error(fields.spaces["rotation"], fields.rotation, exact.theta)
            logger.info("Level {}: h={} err_w={} err_theta={}".format(
                level, mesh.h, row["err_w_l2"], row["err_theta_l2"]))
        else:
            solutions.append(fields)
        rows.append(row)

    if exact is None:
        finest = solutions[-1]
        for level, fields in enumerate(solutions):
            if fields is finest:
                rows[level]["err_w_l2"] = rows[level]["err_theta_l2"] = np.nan
                continue
            generations = len(solutions) - 1 - level
            rows[level]["err_w_l2"] = l2_difference(
                fields.spaces["deflection"], fields.deflection,
                finest.spaces["deflection"], finest.deflection, generations)
            rows[level]["err_theta_l2"] = l2_difference(
                fields.spaces["rotation"], fields.rotation,
                finest.spaces["rotation"], finest.rotation, generations)

    table = pd.DataFrame(rows)
    for name in ("w", "theta"):
        table["rate_{}".format(name)] = np.nan
        measured = table[np.isfinite(table["err_{}_l2".format(name)])]
        if len(measured) >= 2:
            rates = convergence_rate(list(zip(measured["h"], measured["err_{}_l2".format(name)])))
            table.loc[measured.index[1:], "rate_{}".format(name)] = rates
    return table[CSV_COLUMNS]


def cmd_convergence(config):
    table = convergence_table(config)
    document = table.to_csv(index=False, float_format=FLOAT_FORMAT)
    if config["csv"]:
        _write(document, config["csv"])
        logger.info("Wrote convergence table to {}".format(config["csv"]))
    else:
        print(document, end="")
    return 0


def main(argv=None):
    """
    Command line entry point.

    Returns
    -------
    status : int
        0 on success, 1 on runtime failures, 2 on usage errors
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    run_logger, _ = miscellaneous.init_logger("tdnnsplate.log",
                                              miscellaneous.create_output_folder(args.log_dir))
    run_logger.info("Command: {}".format(" ".join(sys.argv[1:] if argv is None else argv)))
    if args.command == "mesh":
        config = None
    else:
        try:
            config = config_from_args(args)
        except ValueError as err:
            run_logger.error("Invalid configuration: {}".format(err))
            try:
                parser.error(str(err))
            except SystemExit as exc:
                return int(exc.code)
    try:
        if args.command == "mesh":
            return cmd_mesh(args)
        if args.command == "solve":
            return cmd_solve(config)
        return cmd_convergence(config)
    except (SolverError, MeshFormatError, ValueError, OSError) as err:
        run_logger.error("{} failed: {}".format(args.command, err))
        print("error: {}".format(err), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
