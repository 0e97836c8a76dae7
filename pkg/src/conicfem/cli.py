"""Command-line interface: solve built-in problems, validate/refine meshes,
inspect spaces, and export plot data.

Verbs:
  solve         run the Newton-Galerkin solver and write a convergence table
  mesh validate check a mesh file against the structural conditions
  mesh refine   uniformly refine a mesh file
  space info    print determining-set dimension and category counts
  export plot   sample a saved solution on a lattice for contour plotting
"""

import argparse
import json
import sys

import numpy as np

from . import assembly as asm
from . import solver as sol
from .geometry import GeometryError, load_domain
from .mesh import MeshError, load_mesh, mesh_to_dict, refine_uniform
from .problems import PROBLEM_IDS, builtin_domain, disk_exact_solution, problem_g
from .space import SpaceError, build_space, load_spline, save_spline

_CONFIG_KEYS = (
    "problem", "mesh", "g_expr", "levels", "tol", "max_iter", "quad_degree",
    "pie_order", "output", "plot_data", "plot_grid", "save_solution",
    "dump_matrix", "deterministic_assembly",
)


def _fmt(x):
    return "" if x is None else f"{x:.6e}"


def _fmt_rate(x):
    return "" if x is None else f"{x:.2f}"


def convergence_rows(reports, use_exact):
    """Table rows (dicts) in the layout of the convergence tables."""
    rows = []
    init = reports[0]
    rows.append({
        "level": "init",
        "L2": init.init_errors[0] if init.init_errors else None,
        "H1": init.init_errors[1] if init.init_errors else None,
        "H2": init.init_errors[2] if init.init_errors else None,
        "L2_rate": None, "H1_rate": None, "H2_rate": None,
        "R": init.init_residual, "R_rate": None, "m": None,
    })
    prev = {}
    for rep in reports:
        errs = rep.errors if use_exact else rep.eps_errors
        row = {
            "level": rep.level,
            "L2": errs[0] if errs else None,
            "H1": errs[1] if errs else None,
            "H2": errs[2] if errs else None,
            "R": rep.residual,
            "m": rep.iterations,
        }
        for key in ("L2", "H1", "H2", "R"):
            a, b = prev.get(key), row.get(key)
            row[f"{key}_rate"] = (
                float(np.log2(a / b)) if a and b and a > 0 and b > 0 else None
            )
        prev = {k: row[k] for k in ("L2", "H1", "H2", "R")}
        rows.append(row)
    return rows


def write_csv(rows, path):
    cols = ("level", "L2", "L2_rate", "H1", "H1_rate", "H2", "H2_rate",
            "R", "R_rate", "m")
    lines = [",".join(cols)]
    for row in rows:
        cells = []
        for c in cols:
            v = row.get(c)
            if v is None:
                cells.append("")
            elif c == "level" or c == "m":
                cells.append(str(v))
            elif c.endswith("_rate"):
                cells.append(_fmt_rate(v))
            else:
                cells.append(_fmt(v))
        lines.append(",".join(cells))
    text = "\n".join(lines) + "\n"
    if path:
        with open(path, "w") as f:
            f.write(text)
    return text


def print_table(rows, stream=None):
    stream = stream if stream is not None else sys.stdout
    cols = ("level", "L2", "L2_rate", "H1", "H1_rate", "H2", "H2_rate",
            "R", "R_rate", "m")
    widths = {c: max(len(c), 12 if not c.endswith("rate") and c != "level"
                     and c != "m" else 7) for c in cols}
    head = " ".join(c.rjust(widths[c]) for c in cols)
    print(head, file=stream)
    print("-" * len(head), file=stream)
    for row in rows:
        cells = []
        for c in cols:
            v = row.get(c)
            if v is None:
                s = ""
            elif c in ("level", "m"):
                s = str(v)
            elif c.endswith("_rate"):
                s = _fmt_rate(v)
            else:
                s = _fmt(v)
            cells.append(s.rjust(widths[c]))
        print(" ".join(cells), file=stream)


def _custom_g(expr):
    """Compile a g(x1, x2) expression over a restricted numpy namespace."""
    allowed = {name: getattr(np, name) for name in
               ("exp", "sin", "cos", "tan", "sqrt", "abs", "log", "pi", "e",
                "cosh", "sinh", "tanh", "arctan", "minimum", "maximum")}
    code = compile(expr, "<g-expr>", "eval")
    for name in code.co_names:
        if name not in allowed and name not in ("x1", "x2"):
            raise ValueError(f"name {name!r} not allowed in --g-expr")

    def g(pts):
        pts = np.asarray(pts, dtype=float)
        env = dict(allowed, x1=pts[..., 0], x2=pts[..., 1])
        vals = eval(code, {"__builtins__": {}}, env)
        return np.broadcast_to(np.asarray(vals, dtype=float),
                               pts.shape[:-1]).copy()

    return g


def cmd_solve(args):
    if args.problem == "custom":
        if not args.mesh or not args.g_expr:
            raise ValueError("--problem custom requires --mesh and --g-expr")
        mesh = load_mesh(args.mesh)
        prob = sol.MongeAmpereProblem(mesh.domain, mesh, _custom_g(args.g_expr),
                                      name="custom")
        exact = None
    else:
        domain, mesh = builtin_domain(args.problem)
        exact = disk_exact_solution() if args.problem == "disk" else None
        prob = sol.MongeAmpereProblem(domain, mesh, problem_g(args.problem),
                                      exact=exact, name=args.problem)
    reports, u = sol.multilevel_run(
        prob, args.levels, tol=args.tol, max_iter=args.max_iter,
        quad_degree=args.quad_degree, pie_order=args.pie_order,
        verbose=args.verbose,
    )
    rows = convergence_rows(reports, use_exact=exact is not None)
    print_table(rows)
    if args.output:
        write_csv(rows, args.output)
        print(f"wrote {args.output}")
    if args.save_solution:
        save_spline(u, args.save_solution)
        print(f"wrote {args.save_solution}")
    if args.plot_data:
        _write_plot(u, args.plot_grid, args.plot_data)
        print(f"wrote {args.plot_data}")
    if args.dump_matrix:
        ctx = sol.LevelContext(u.space.mesh, quad_degree=args.quad_degree,
                               pie_order=args.pie_order)
        problem, _ = sol.linearize_ma(u, prob.g, ctx.quad)
        system = asm.assemble(problem, u.space, ctx.quad)
        from scipy.io import mmwrite
        mmwrite(args.dump_matrix, system.matrix)
        print(f"wrote {args.dump_matrix}")
    if any(r.diverged for r in reports):
        print("warning: Newton iteration hit the cap on some level",
              file=sys.stderr)
        return 2
    return 0


def _write_plot(u, n, path):
    verts = u.space.mesh.vertices
    lo = verts.min(axis=0)
    hi = verts.max(axis=0)
    lines = ["x,y,value"]
    for y in np.linspace(lo[1], hi[1], n):
        for x in np.linspace(lo[0], hi[0], n):
            try:
                t = u.locate(np.array([x, y]))
            except ValueError:
                continue
            v = u.eval_on_triangle(t, np.array([x, y]), 0)
            lines.append(f"{x:.8e},{y:.8e},{v:.8e}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def cmd_mesh_validate(args):
    domain = load_domain(args.domain) if args.domain else None
    mesh = load_mesh(args.path, domain=domain)
    kinds = {k: len(mesh.triangles_of_kind(k)) for k in ("ordinary", "buffer", "pie")}
    print(f"OK: {mesh.n_vertices} vertices, {mesh.n_triangles} triangles "
          f"({kinds['ordinary']} ordinary, {kinds['buffer']} buffer, "
          f"{kinds['pie']} pie), level {mesh.level}")
    return 0


def cmd_mesh_refine(args):
    domain = load_domain(args.domain) if args.domain else None
    mesh = load_mesh(args.path, domain=domain)
    for _ in range(args.levels):
        mesh = refine_uniform(mesh)
    with open(args.output, "w") as f:
        json.dump(mesh_to_dict(mesh), f)
    print(f"wrote {args.output} ({mesh.n_triangles} triangles)")
    return 0


def cmd_space_info(args):
    if args.problem:
        _, mesh = builtin_domain(args.problem)
    elif args.path:
        domain = load_domain(args.domain) if args.domain else None
        mesh = load_mesh(args.path, domain=domain)
    else:
        raise ValueError("space info needs a mesh file or --problem")
    for _ in range(args.levels - 1):
        mesh = refine_uniform(mesh)
    space = build_space(mesh)
    print(f"dimension: {space.dimension}")
    for cat, n in space.mds.counts.items():
        print(f"  {cat}: {n}")
    print(f"propagation fill defect: {space.fill_defect:.3e}")
    return 0


def cmd_export_plot(args):
    u = load_spline(args.solution)
    _write_plot(u, args.grid, args.output)
    print(f"wrote {args.output}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="conicfem", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("solve", help="run a built-in or custom problem")
    ps.add_argument("--problem", default="disk",
                    choices=tuple(PROBLEM_IDS) + ("custom",))
    ps.add_argument("--mesh", help="mesh file with embedded domain "
                                   "(--problem custom)")
    ps.add_argument("--g-expr", help="expression in x1, x2 for the datum g "
                                     "(--problem custom)")
    ps.add_argument("--levels", type=int, default=3)
    ps.add_argument("--tol", type=float, default=1e-15)
    ps.add_argument("--max-iter", type=int, default=20)
    ps.add_argument("--quad-degree", type=int, default=16)
    ps.add_argument("--pie-order", type=int, default=12)
    ps.add_argument("--output", help="CSV output path")
    ps.add_argument("--plot-data", help="lattice sample output path")
    ps.add_argument("--plot-grid", type=int, default=81)
    ps.add_argument("--save-solution", help="save final-level spline (JSON)")
    ps.add_argument("--dump-matrix", help="Matrix Market dump of the final "
                                          "linearized system")
    ps.add_argument("--deterministic-assembly", action="store_true",
                    help="reserved; assembly is always deterministic")
    ps.add_argument("--verbose", action="store_true")
    ps.add_argument("--config", help="JSON file with defaults for the flags")
    ps.set_defaults(fn=cmd_solve)

    pm = sub.add_parser("mesh", help="mesh utilities")
    msub = pm.add_subparsers(dest="mesh_command", required=True)
    pv = msub.add_parser("validate")
    pv.add_argument("path")
    pv.add_argument("--domain", help="domain JSON (if not embedded)")
    pv.set_defaults(fn=cmd_mesh_validate)
    pr = msub.add_parser("refine")
    pr.add_argument("path")
    pr.add_argument("--levels", type=int, default=1)
    pr.add_argument("--domain")
    pr.add_argument("--output", required=True)
    pr.set_defaults(fn=cmd_mesh_refine)

    pi = sub.add_parser("space", help="space utilities")
    ssub = pi.add_subparsers(dest="space_command", required=True)
    si = ssub.add_parser("info")
    si.add_argument("path", nargs="?")
    si.add_argument("--problem", choices=PROBLEM_IDS)
    si.add_argument("--domain")
    si.add_argument("--levels", type=int, default=1)
    si.set_defaults(fn=cmd_space_info)

    pe = sub.add_parser("export", help="export utilities")
    esub = pe.add_subparsers(dest="export_command", required=True)
    ep = esub.add_parser("plot")
    ep.add_argument("--solution", required=True)
    ep.add_argument("--grid", type=int, default=81)
    ep.add_argument("--output", required=True)
    ep.set_defaults(fn=cmd_export_plot)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        with open(args.config) as f:
            conf = json.load(f)
        passed = {a.lstrip("-").replace("-", "_").split("=")[0]
                  for a in (argv if argv is not None else sys.argv[1:])
                  if a.startswith("--")}
        for key, val in conf.items():
            k = key.replace("-", "_")
            if k in _CONFIG_KEYS and k not in passed:
                setattr(args, k, val)
    if hasattr(args, "levels") and hasattr(args, "tol"):
        if args.levels < 1 or args.tol <= 0:
            parser.error("levels must be >= 1 and tol > 0")
    try:
        return args.fn(args)
    except (MeshError, GeometryError, SpaceError, asm.AssemblyError,
            asm.SolverError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
