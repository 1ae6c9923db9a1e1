"""Acceptance criteria 1-8; each test records one PASS/FAIL line.

The lines are printed as they are produced and again in the pytest terminal
summary (see conftest.py). Run directly with ``python3 tests/test_acceptance.py``.
"""

import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from randtree import random_lq_path, random_tree_problem  # noqa: E402

from treedp.centering import (ellipsoid_row_certificate,  # noqa: E402
                              max_volume_inscribed_ellipsoid)
from treedp.cli import main as cli_main  # noqa: E402
from treedp.dp import (SweepConfig, backward_sweep, classic_dp, evaluate_value_function,  # noqa: E402
                       forward_sweep, solve_monolithic)
from treedp.errors import DomainError  # noqa: E402
from treedp.model import verify_tree  # noqa: E402
from treedp.ocp import run_ocp_demo  # noqa: E402
from treedp.opf import (ac_feasible_region, certified_fraction, dc_projection,  # noqa: E402
                        feeder18, midpoint_convexity_gap, opf_to_tree, slice_extremes)
from treedp.polyhedra import (HPolyhedron, fourier_motzkin_project,  # noqa: E402
                              membership_oracle_batch)

RESULTS: dict[int, str] = {}


def record(n: int, ok: bool, detail: str):
    line = f"ACCEPTANCE {n}: {'PASS' if ok else 'FAIL'} | {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


def test_criterion_1_ocp_demo():
    parts, ok = [], True
    for variant in ("exact", "ellipsoid"):
        t = time.perf_counter()
        rep = run_ocp_demo(variant)
        dt = time.perf_counter() - t
        r = rep.residuals
        good = (rep.feasible and r["dynamics"] <= 1e-8 and r["u_max_abs"] <= 1 + 1e-9
                and r["z_T_inf_norm"] <= 0.19 + 1e-8
                and rep.cost_fpadp >= rep.cost_monolithic - 1e-6 and dt < 1.0)
        ok &= good
        parts.append(f"{variant}: dyn={r['dynamics']:.1e} |u|={r['u_max_abs']:.10f} "
                     f"|zT|={r['z_T_inf_norm']:.10f} cost={rep.cost_fpadp:.6f}"
                     f">={rep.cost_monolithic:.6f} t={dt:.3f}s")
    record(1, ok, "; ".join(parts))


def test_criterion_2_classic_dp():
    rng = np.random.default_rng(2024)
    t = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        p = random_lq_path(rng)
        _, res = classic_dp(p)
        _, ref = solve_monolithic(p)
        worst = max(worst, abs(res.cost - ref) / max(1.0, abs(ref)))
    dt = time.perf_counter() - t
    record(2, worst <= 1e-6 and dt < 5.0, f"50 paths, worst rel gap {worst:.2e}, t={dt:.2f}s")


def test_criterion_3_fm_vs_oracle():
    rng = np.random.default_rng(5)
    t = time.perf_counter()
    bad = points = 0
    for _ in range(30):
        n = int(rng.integers(2, 7))
        m = int(rng.integers(n + 1, 21))
        A = rng.standard_normal((m, n))
        x0 = rng.standard_normal(n)
        b = A @ x0 + rng.uniform(0.1, 1, m)
        Ain = np.vstack([A, np.eye(n), -np.eye(n)])[:20]
        bin_ = np.concatenate([b, x0 + 2, -(x0 - 2)])[:20]
        P = HPolyhedron.from_inequalities(Ain, bin_)
        keep = sorted(rng.choice(n, int(rng.integers(1, n)), replace=False).tolist())
        R = fourier_motzkin_project(P, keep)
        Z = x0[keep] - 4 + 8 * rng.random((1000, len(keep)))
        bad += int(np.sum(R.contains_many(Z) != membership_oracle_batch(P, keep, Z)))
        points += len(Z)
    dt = time.perf_counter() - t
    record(3, bad == 0 and dt < 10.0,
           f"30 polyhedra, {points} points, {bad} disagreements, t={dt:.2f}s")


def test_criterion_4_mvie():
    E = max_volume_inscribed_ellipsoid(HPolyhedron.box([-1, -1], [1, 1]))
    box_err = max(np.abs(E.A - np.eye(2)).max(), np.abs(E.c).max())
    rng = np.random.default_rng(4)
    worst_cert, outside = -np.inf, 0
    for _ in range(20):
        n = int(rng.integers(2, 5))
        A = rng.standard_normal((int(rng.integers(n + 1, 12)), n))
        b = rng.uniform(0.2, 1.0, A.shape[0])
        P = HPolyhedron.from_inequalities(np.vstack([A, np.eye(n), -np.eye(n)]),
                                          np.concatenate([b, np.full(2 * n, 3.0)]))
        F = max_volume_inscribed_ellipsoid(P)
        worst_cert = max(worst_cert, ellipsoid_row_certificate(F, P))
        outside += int((~P.contains_many(F.boundary_points(10_000), 1e-7)).sum())
    ok = box_err <= 1e-6 and worst_cert <= 1e-7 and outside == 0
    record(4, ok, f"box error {box_err:.1e}; 20 polytopes, worst certificate "
                  f"{worst_cert:.1e}, boundary points outside {outside}")


def test_criterion_5_random_trees():
    rng = np.random.default_rng(0)
    t = time.perf_counter()
    parts, ok = [], True
    for variant in ("exact", "box", "ellipsoid"):
        good = skipped = bad = 0
        for _ in range(100):
            problem, _ = random_tree_problem(rng)
            topo = verify_tree(problem)
            try:
                art = backward_sweep(problem, topo, SweepConfig(set_variant=variant))
            except DomainError:
                skipped += 1
                continue
            try:
                res = forward_sweep(problem, topo, art)
                feasible = res.report.max_violation <= 1e-6
            except DomainError:
                feasible = False
            good += feasible
            bad += not feasible
        ok &= bad == 0
        parts.append(f"{variant}: {good} feasible, {bad} infeasible, {skipped} backward-empty")
    dt = time.perf_counter() - t
    record(5, ok and dt < 30.0, "; ".join(parts) + f"; t={dt:.1f}s")


def test_criterion_6_dc_opf():
    grid, part = feeder18()
    tree = opf_to_tree(grid, part, "DC")
    proj = dc_projection(tree, 2)
    lo, hi = proj.interval
    table = evaluate_value_function(tree.problem, tree.topology, 2,
                                    np.linspace(lo, hi, 50)[:, None])
    vals = [np.inf if v is None else v for _, v, _ in table]
    gap = midpoint_convexity_gap(vals)
    ok = proj.mismatch <= 1e-6 and gap <= 1e-7
    record(6, ok, f"FM [{lo:.6f}, {hi:.6f}] vs LP [{proj.lp_interval[0]:.6f}, "
                  f"{proj.lp_interval[1]:.6f}] mismatch {proj.mismatch:.1e}; "
                  f"midpoint gap {gap:.2e}")


def test_criterion_7_ac_region():
    grid, part = feeder18()
    t = time.perf_counter()
    region = ac_feasible_region(grid, part, 1.0, n_grid=19)
    dt = time.perf_counter() - t
    allpts = region.all_samples
    frac = certified_fraction(allpts, region.spec, 1e-8)
    slices = slice_extremes(region.grid_p)
    witnessed = sum(s["count"] >= 2 for s in slices)
    ok = len(allpts) >= 200 and frac == 1.0 and len(slices) == 19 and witnessed == 19 and dt < 60
    record(7, ok, f"{len(allpts)} samples, certified {100 * frac:.1f}%, "
                  f"{witnessed}/19 p-slices with min/max q witnesses, t={dt:.1f}s")


def _snapshot(root: Path) -> dict:
    return {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file() and p.name != "runtimes.json"}


def test_criterion_8_determinism(tmp_path):
    runs = [["ocp-demo", "--variant", "exact"], ["ocp-demo", "--variant", "ellipsoid"],
            ["opf-demo", "--model", "DC"], ["opf-demo", "--model", "AC"]]
    differing = []
    n_files = 0
    for k, args in enumerate(runs):
        snaps = []
        for rep in ("a", "b"):
            out = tmp_path / f"{k}{rep}"
            assert cli_main(args + ["--out", str(out)]) == 0
            snaps.append(_snapshot(out))
        n_files += len(snaps[0])
        if snaps[0] != snaps[1]:
            differing.append(" ".join(args))
    record(8, not differing,
           f"{n_files} output files compared over {len(runs)} commands; "
           f"differing: {differing or 'none'}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
