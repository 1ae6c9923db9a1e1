"""``treedp`` command-line interface.

Exit status: 0 on success, 1 when the problem itself has no answer
(infeasible, empty or unbounded sets, solver breakdown), 2 on bad input.
Every command writes deterministic files; wall-clock timings go to a
separate ``runtimes.json`` so the remaining outputs are byte-reproducible.
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import os
import sys
import time
from pathlib import Path

DEFAULT_SEED = 42


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="treedp", description="Tree-structured approximate dynamic programming with feasible dispatch.",
                                epilog="exit status: 0 success, 1 infeasible/empty/numerical failure, 2 bad input")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--seed", type=int, default=DEFAULT_SEED, help="rng seed (default: 42)")
    common.add_argument("--tol", type=float, default=1e-6,
                        help="feasibility tolerance for reports (default: 1e-6)")
    common.add_argument("--threads", type=int, default=1,
                        help="cap on BLAS worker threads (default: 1)")
    common.add_argument("--verbose", "-v", action="count", default=0,
                        help="log progress to stderr (repeat for debug)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", parents=[common], help="backward and forward sweep on a problem file")
    s.add_argument("--in", dest="inp", required=True, help="problem JSON")
    s.add_argument("--variant", default="exact", choices=["exact", "box", "ellipsoid", "ball"],
                   help="coupling-set approximation (default: exact)")
    s.add_argument("--value", default="zero", choices=["zero", "quadratic", "pwl"],
                   help="value-function approximation (default: zero)")
    s.add_argument("--root", type=int, default=None, help="root subsystem id (default: first)")

    s = sub.add_parser("project", parents=[common], help="project a polyhedron file")
    s.add_argument("--in", dest="inp", required=True, help="polyhedron JSON")
    s.add_argument("--keep", required=True, help="comma-separated 1-based coordinates to keep")

    s = sub.add_parser("center", parents=[common], help="inscribe a shape in a polyhedron")
    s.add_argument("--in", dest="inp", required=True, help="polyhedron JSON")
    s.add_argument("--variant", default="ellipsoid", choices=["ellipsoid", "box", "ball"],
                   help="shape (default: ellipsoid)")

    s = sub.add_parser("sample", parents=[common], help="sample a coupling region")
    s.add_argument("--in", dest="inp", default=None,
                   help="polyhedron JSON (optional 'keep' list) or grid JSON; "
                        "default: the shipped feeder")
    s.add_argument("--n", type=int, default=1000, help="decision samples for grids (default: 1000)")
    s.add_argument("--grid", type=int, default=19, help="gridding slices (default: 19)")
    s.add_argument("--v", type=float, default=1.0, help="fixed coupling-bus voltage (default: 1.0)")

    s = sub.add_parser("ocp-demo", parents=[common], help="constrained LQ control example")
    s.add_argument("--variant", default="exact", choices=["exact", "ellipsoid"])
    s.add_argument("--value", default="zero", choices=["zero", "terminal_quadratic"])

    s = sub.add_parser("opf-demo", parents=[common], help="feeder flexibility example")
    s.add_argument("--model", default="DC", type=str.upper, choices=["AC", "DC"])
    s.add_argument("--in", dest="inp", default=None, help="grid JSON (default: shipped feeder)")
    s.add_argument("--n", type=int, default=1000, help="AC decision samples (default: 1000)")
    s.add_argument("--v", type=float, default=1.0, help="AC coupling-bus voltage (default: 1.0)")

    s = sub.add_parser("value-fn", parents=[common], help="tabulate a subtree value function")
    s.add_argument("--in", dest="inp", required=True, help="problem JSON")
    s.add_argument("--subsystem", type=int, required=True, help="subsystem id")
    s.add_argument("--points", type=int, default=21,
                   help="grid points per coupling coordinate (default: 21)")
    s.add_argument("--root", type=int, default=None, help="root subsystem id (default: first)")
    return p


def _setup_logging(verbose: int):
    env = os.environ.get("TREEDP_LOG")
    level = logging.WARNING
    if env:
        level = getattr(logging, env.upper(), None)
        if not isinstance(level, int):
            raise SystemExit(f"treedp: invalid TREEDP_LOG level {env!r}")
    if verbose:
        level = logging.DEBUG if verbose > 1 else logging.INFO
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------
def _cmd_solve(a, out: Path):
    from .dp import FPADP, SweepConfig
    from .io import dump_json
    from .model import TreeProblem

    problem = TreeProblem.load(a.inp)
    solver = FPADP(problem, root=a.root,
                   config=SweepConfig(set_variant=a.variant, value_fn=a.value, seed=a.seed))
    res = solver.solve()
    dump_json({"x": res.x, "cost": res.cost, "feasible": res.report.max_violation <= a.tol,
               "max_violation": res.report.max_violation, "seed": a.seed,
               "subsystem_costs": {str(k): v for k, v in res.subsystem_costs.items()}},
              out / "solution.json")
    dump_json(solver.trace(), out / "trace.json")


def _cmd_project(a, out: Path):
    from .errors import InputError
    from .io import dump_json, load_json
    from .polyhedra import HPolyhedron, fourier_motzkin_project

    P = HPolyhedron.from_dict(load_json(a.inp))
    try:
        keep = [int(k) - 1 for k in a.keep.split(",") if k.strip()]
    except ValueError as exc:
        raise InputError(f"--keep expects integers: {exc}") from exc
    if not keep or min(keep) < 0 or max(keep) >= P.dim:
        raise InputError(f"--keep must list coordinates in 1..{P.dim}")
    dump_json(fourier_motzkin_project(P, keep).to_dict(), out / "projection.json")


def _cmd_center(a, out: Path):
    from .centering import (box_row_certificate, ellipsoid_row_certificate, inscribed_ball,
                            inscribed_box, max_volume_inscribed_ellipsoid)
    from .io import dump_json, load_json
    from .polyhedra import HPolyhedron

    P = HPolyhedron.from_dict(load_json(a.inp))
    if a.variant == "box":
        B = inscribed_box(P)
        dump_json({"variant": "box", **B.to_dict(), "certificate": box_row_certificate(B, P)},
                  out / "box.json")
        return
    E = max_volume_inscribed_ellipsoid(P) if a.variant == "ellipsoid" else inscribed_ball(P)
    dump_json({"variant": a.variant, **E.to_dict(),
               "certificate": ellipsoid_row_certificate(E, P)}, out / f"{a.variant}.json")


def _cmd_sample(a, out: Path):
    from .io import dump_json, load_json
    from .polyhedra import HPolyhedron
    from .sampling import (ConvexSetSpec, gridding_refinement, hull_of_samples,
                           optimization_based_sampling)

    data = load_json(a.inp) if a.inp else None
    if data is None or "buses" in data:
        from .opf import ac_feasible_region, load_grid

        grid, part = load_grid(a.inp)
        region = ac_feasible_region(grid, part, a.v, n_samples=a.n, n_grid=a.grid, seed=a.seed)
        samples, hull = region.all_samples, region.hull
    else:
        keep = data.pop("keep", None)
        P = HPolyhedron.from_dict(data)
        spec = ConvexSetSpec(P, None if keep is None else [int(k) - 1 for k in keep])
        samples = optimization_based_sampling(spec)
        if spec.n_z >= 2 and a.grid > 0:
            samples = samples.merged(gridding_refinement(spec, samples, 0, a.grid))
        hull = hull_of_samples(samples)
    samples.to_csv(out / "samples.csv")
    dump_json(hull.to_dict(), out / "hull.json")


def _trajectory_rows(spec, x):
    from .ocp import trajectory

    Zs, Us = trajectory(spec, x)
    rows = []
    for t in range(spec.T + 1):
        u = Us[t] if t < spec.T else [None] * spec.m
        rows.append([t, *Zs[t], *u])
    return rows


def _cmd_ocp_demo(a, out: Path):
    from .io import dump_json, write_csv
    from .ocp import LtiOcpSpec, run_ocp_demo

    spec = LtiOcpSpec.demo_instance()
    rep = run_ocp_demo(a.variant, a.value, spec)
    for t, P in rep.stage_sets.items():
        dump_json(P.to_dict(), out / "stage_sets" / f"P_{t}.json")
    dump_json(spec.Z_T.to_dict(), out / "stage_sets" / f"Z_{spec.T}.json")
    if rep.ellipsoid is not None:
        dump_json(rep.ellipsoid.to_dict(), out / "ellipsoid.json")
    header = ["t"] + [f"z{k + 1}" for k in range(spec.n)] + [f"u{k + 1}" for k in range(spec.m)]
    write_csv(out / "trajectory_monolithic.csv", header, _trajectory_rows(spec, rep.x_monolithic))
    write_csv(out / "trajectory_fpadp.csv", header, _trajectory_rows(spec, rep.fpadp.x))
    report = rep.to_dict()
    report["feasible"] = bool(rep.fpadp.report.max_violation <= a.tol)
    report["seed"] = a.seed
    dump_json(report, out / "report.json")
    return rep.runtimes


def _cmd_opf_demo(a, out: Path):
    from .io import dump_json, write_csv
    from .opf import load_grid, run_opf_demo

    grid, part = load_grid(a.inp)
    rep = run_opf_demo(a.model, grid, part, seed=a.seed, n_samples=a.n, v_fixed=a.v)
    d = dict(rep.data)
    if a.model == "DC":
        write_csv(out / "value_function.csv", ["p", "value"], d.pop("value_table"))
    else:
        write_csv(out / "value_function.csv", ["p", "q", "value"], d.pop("value_table"))
        dump_json(d.pop("hull"), out / "hull.json")
        region = rep.extra["region"]
        region.all_samples.to_csv(out / "region.csv")
    d["seed"] = a.seed
    dump_json(d, out / "report.json")
    return rep.runtimes


def _cmd_value_fn(a, out: Path):
    import numpy as np

    from .dp import SweepConfig, backward_sweep, evaluate_value_function
    from .errors import InputError
    from .io import write_csv
    from .model import TreeProblem, verify_tree

    problem = TreeProblem.load(a.inp)
    topo = verify_tree(problem, root=a.root)
    if a.subsystem not in problem.ids or a.subsystem == topo.root:
        raise InputError(f"--subsystem must be a non-root subsystem id, got {a.subsystem}")
    art = backward_sweep(problem, topo, SweepConfig(seed=a.seed))
    lo, hi = art.sets[a.subsystem].exact.bounding_box()
    axes = [np.linspace(l, h, a.points) for l, h in zip(lo, hi)]
    grid = np.array(np.meshgrid(*axes, indexing="ij")).reshape(len(axes), -1).T
    table = evaluate_value_function(problem, topo, a.subsystem, grid)
    names = [f"x{g}" for g in topo.coupling[a.subsystem]]
    write_csv(out / "value_function.csv", names + ["value"],
              [[*map(float, z), None if v is None else float(v)] for z, v, _ in table])


COMMANDS = {"solve": _cmd_solve, "project": _cmd_project, "center": _cmd_center,
            "sample": _cmd_sample, "ocp-demo": _cmd_ocp_demo, "opf-demo": _cmd_opf_demo,
            "value-fn": _cmd_value_fn}


def main(argv=None) -> int:
    parser = _parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with status 2
        return int(exc.code or 0)
    if a.threads < 1:
        print("treedp: --threads must be positive", file=sys.stderr)
        return 2
    _setup_logging(a.verbose)
    try:  # optional: caps BLAS pools that are already loaded
        from threadpoolctl import threadpool_limits
        limiter = threadpool_limits(a.threads)
    except ImportError:
        limiter = contextlib.nullcontext()

    from .errors import DomainError, InputError, NumericalFailure
    from .io import dump_json

    out = Path(a.out)
    t0 = time.perf_counter()
    try:
        out.mkdir(parents=True, exist_ok=True)
        with limiter:
            timings = COMMANDS[a.command](a, out) or {}
    except InputError as exc:
        print(f"treedp: input error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except (DomainError, NumericalFailure) as exc:
        print(f"treedp: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError) as exc:
        print(f"treedp: input error: {exc}", file=sys.stderr)
        return 2
    dump_json({"total": time.perf_counter() - t0, **timings}, out / "runtimes.json")
    return 0


if __name__ == "__main__":
    sys.exit(main())
