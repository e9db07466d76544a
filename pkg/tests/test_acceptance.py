"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

The lines are also collected into an "acceptance criteria" section at the end
of the pytest run.  Criteria that the implementation cannot meet are left to
fail; the analysis is kept in the project notes.
"""
from __future__ import annotations

import hashlib
import math
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from acceptance_log import record
from oracles import grid_minimum
from riesz_condenser.balayage import sweep_in_domain
from riesz_condenser.config import get_resolution
from riesz_condenser.disc_chain import DEFAULT_SCHEDULE, build_F, compute_psi, homogeneity_check, psi
from riesz_condenser.energy import energy_weak
from riesz_condenser.geometry import (BallExterior, DiscreteMeasure, HalfSpace, KernelParams, make_ball_cloud,
                                      make_condenser, make_disc_cloud)
from riesz_condenser.identities import check_case, standard_cases
from riesz_condenser.kernels import green_halfspace_matrix, potential
from riesz_condenser.solver import (ConstraintSpec, ExternalFieldSpec, capacity, condenser_measure,
                                    green_equilibrium, perturb_solution, signed_potential, solve_condenser,
                                    solve_gauss, solve_gauss_matrix, support_analysis, unsolvability_demo)
from riesz_condenser.thinness import Profile, wiener_test

P = KernelParams()
D = HalfSpace()
RES = "medium"


def _finish(number, title, checks: dict, detail: str, t0: float, limit: float | None = None):
    seconds = time.perf_counter() - t0
    if limit is not None:
        checks = {**checks, f"runtime < {limit:g} s": seconds < limit}
    ok = all(bool(v) for v in checks.values())
    failed = [k for k, v in checks.items() if not v]
    record(number, title, ok, detail + (f"; failed: {', '.join(failed)}" if failed else ""), seconds)
    assert ok, failed


def _atoms(rng, m):
    pts = np.column_stack([rng.uniform(0.3, 2.0, m), rng.uniform(-1.0, 1.0, m), rng.uniform(-1.0, 1.0, m)])
    return DiscreteMeasure.atoms(pts, rng.uniform(0.5, 1.5, m))


def test_c01_disc_capacity():
    t0 = time.perf_counter()
    target = 2.0 / math.pi**2
    errs = {}
    for n in (500, 2000):
        errs[n] = abs(capacity(make_disc_cloud(1.0, (0.0, 0.0, 0.0), n)).value - target) / target
    c2000 = target * (1 + errs[2000])
    _finish(1, "disc capacity vs 2/pi^2",
            {"error at 2000 nodes <= 5%": errs[2000] <= 0.05, "error shrinks 500 -> 2000": errs[2000] < errs[500]},
            f"c = {c2000:.5f} at 2000 nodes, relative errors {errs[500]:.3f} (500) and {errs[2000]:.3f} (2000); "
            f"2/pi = {2 / math.pi:.5f}", t0, 60.0)


def test_c02_balayage_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst_pot, worst_mass = 0.0, 0.0
    for m in (1, 5, 10):
        mu = _atoms(rng, m)
        r = sweep_in_domain(mu, D, P, RES)
        X = np.column_stack([rng.uniform(0.1, 3.0, 50), rng.uniform(-3.0, 3.0, 50), rng.uniform(-3.0, 3.0, 50)])
        ref = potential(mu.cloud, mu.weights, D.reflect(X), P, cells=False)
        got = potential(r.swept.cloud, r.swept.weights, X, P)
        worst_pot = max(worst_pot, float(np.max(np.abs(got - ref) / ref)))
        worst_mass = max(worst_mass, abs(r.mass_out / r.mass_in - 1.0))
    _finish(2, "balayage vs reflected atoms",
            {"potential within 2%": worst_pot <= 0.02, "mass within 3%": worst_mass <= 0.03},
            f"max potential error {worst_pot:.4f}, max mass deviation {worst_mass:.4f}", t0, 120.0)


def test_c03_energy_identities():
    t0 = time.perf_counter()
    checks, parts = {}, []
    for case in standard_cases(RES):
        r = check_case(case, P, RES)
        for k, v in r.passed().items():
            checks[f"{case.name} {k}"] = v
        parts.append(f"{case.name} {r.green_norm_error:.4f}/{r.green_weak_error:.4f}/{r.standard_weak_error:.4f}")
    _finish(3, "energy identities (green-norm / green-weak / standard-weak)", checks, ", ".join(parts), t0)


def _certified_solves():
    A1 = make_disc_cloud(1.0, (0.5, 0.0, 0.0), get_resolution(RES).disc_nodes)
    G = green_halfspace_matrix(A1)
    rng = np.random.default_rng(8)
    xi = ConstraintSpec.from_density(A1, 1.5 / math.pi)
    f1 = ExternalFieldSpec("case1", values=rng.uniform(0.0, 0.5, len(A1)))
    return {
        "f=0, xi=inf": solve_gauss(A1, domain=D, G=G),
        "f=0, xi bounded": solve_gauss(A1, constraint=xi, domain=D, G=G),
        "f>=0, xi bounded": solve_gauss(A1, f1, xi, domain=D, G=G),
        "f>=0, xi=inf": solve_gauss(A1, f1, domain=D, G=G),
    }


def test_c04_frostman_certificates():
    t0 = time.perf_counter()
    checks, parts = {}, []
    for name, s in _certified_solves().items():
        c = s.cert
        v = max(c.lower_violation, c.upper_violation)
        pc = perturb_solution(s).cert
        pv = max(pc.lower_violation, pc.upper_violation)
        checks[f"{name} converged"] = s.converged
        checks[f"{name} violations <= 1e-6"] = v <= 1e-6
        checks[f"{name} perturbation detected"] = pv >= 10 * c.tolerance
        est = [c.w_slack, c.w_mass]
        agree = max([abs(e - c.w_primary) / abs(c.w_primary) for e in est if math.isfinite(e)], default=0.0)
        checks[f"{name} estimators agree"] = agree <= 1e-4
        if name == "f=0, xi bounded":
            checks["bound active"] = bool(np.any(s.lam.weights >= s.upper * (1 - 1e-9)))
            checks["slack estimator available"] = math.isfinite(c.w_slack)
        if name == "f=0, xi=inf":
            checks["mass estimator available"] = math.isfinite(c.w_mass)
        parts.append(f"{name}: viol {v:.1e}, perturbed {pv:.1e}, estimator spread {agree:.1e}")
    _finish(4, "Frostman certificates", checks, "; ".join(parts), t0)


def test_c05_condenser_value_three_ways():
    t0 = time.perf_counter()
    res = get_resolution(RES)
    plates = {"disc": make_disc_cloud(1.0, (0.5, 0.0, 0.0), res.disc_nodes),
              "ball": make_ball_cloud(0.5, (1.0, 0.0, 0.0), res.ball_nodes)}
    checks, parts = {}, []
    for name, A1 in plates.items():
        C = make_condenser(D, A1, RES, P)
        s = solve_condenser(C, p=P, resolution=RES)
        cg = green_equilibrium(A1, D, P, RES)[1]
        e1 = abs(s.gauss.w * cg - 1.0)
        e2 = abs(s.alpha_objective_weak * cg - 1.0)
        checks[f"{name} w vs 1/c_g"] = e1 <= 0.05
        checks[f"{name} weak energy vs 1/c_g"] = e2 <= 0.05
        parts.append(f"{name}: w {s.gauss.w:.5f}, 1/c_g {1 / cg:.5f}, weak {s.alpha_objective_weak:.5f}")
    _finish(5, "w = 1/c_g = weak energy of lam - lam'", checks, "; ".join(parts), t0)


def test_c06_condenser_measure_potential():
    t0 = time.perf_counter()
    A1 = make_disc_cloud(1.0, (0.5, 0.0, 0.0), get_resolution(RES).disc_nodes)
    C = make_condenser(D, A1, RES, P)
    m = condenser_measure(C, P, RES)
    edge = A1.edge_mask()
    on1 = signed_potential(m.theta, A1.points[~edge], P)
    on2 = signed_potential(m.theta, C.A2.points, P)
    rng = np.random.default_rng(6)
    X = rng.uniform(-3.0, 3.0, (200, 3))
    v = signed_potential(m.theta, X, P)
    e1, e2 = float(np.max(np.abs(on1 - 1.0))), float(np.max(np.abs(on2)))
    _finish(6, "condenser measure potential",
            {"probes in [-0.03, 1.03]": v.min() >= -0.03 and v.max() <= 1.03,
             "= 1 on A1 (edge excluded)": e1 <= 0.03, "= 0 on A2": e2 <= 0.03},
            f"probe range [{v.min():.4f}, {v.max():.4f}], |k theta - 1| on A1 {e1:.4f} "
            f"({int(edge.sum())} edge nodes excluded), |k theta| on A2 {e2:.4f}", t0)


def test_c07_support_dichotomy():
    t0 = time.perf_counter()
    checks, parts = {}, []
    for alpha in (2.0, 1.5):
        p = KernelParams(3, alpha)
        A1 = make_ball_cloud(1.0, (3.0, 0.0, 0.0), get_resolution(RES).ball_nodes)
        C = make_condenser(BallExterior((0.0, 0.0, 0.0), 1.0), A1, RES, p)
        s = solve_condenser(C, p=p, resolution=RES, weak=False)
        rep = support_analysis(s.gauss, C, p, s.sweep.swept)
        if alpha == 2.0:
            checks["alpha=2 lam on the plate surface"] = rep.plate_boundary_fraction >= 0.99
            checks["alpha=2 nu- on dD"] = rep.minus_boundary_fraction >= 0.99
        else:
            checks["alpha=1.5 interior mass >= 10%"] = rep.plate_interior_fraction >= 0.10
        parts.append(f"alpha={alpha}: surface {rep.plate_boundary_fraction:.4f}, "
                     f"interior {rep.plate_interior_fraction:.4f}, nu- on dD {rep.minus_boundary_fraction:.4f}")
    _finish(7, "support dichotomy", checks, "; ".join(parts), t0)


def test_c08_brute_force():
    t0 = time.perf_counter()
    rng = np.random.default_rng(88)
    worst = 0.0
    for n in (2, 3, 3, 4):
        A = rng.normal(size=(n, n))
        G = A @ A.T + 0.3 * np.eye(n)
        f = rng.normal(size=n) * 0.3
        upper = rng.uniform(0.3, 0.9, n)
        if upper.sum() <= 1.0:
            upper *= 1.3 / upper.sum()
        sol = solve_gauss_matrix(G, f, upper)
        best, _ = grid_minimum(G, f, upper, step=1e-3)
        worst = max(worst, abs(sol.objective - best))
    _finish(8, "brute-force grid equivalence", {"objective gap <= 1e-6": worst <= 1e-6},
            f"max |solver - grid| = {worst:.2e} over n = 2, 3, 3, 4", t0)


def test_c09_disc_chain():
    t0 = time.perf_counter()
    curve = compute_psi(DEFAULT_SCHEDULE, RES)
    homog = max([homogeneity_check(r, e, RES) for r, e in ((0.5, 0.1), (2.0, 0.4))]
                + [e for _, e in curve.identity_errors])
    rep = build_F(6, 4.0, RES, psi_curve=curve)
    js = [rt.j for rt in rep.roots if rt.relative_error <= 0.02]
    run = max((len(list(g)) for g in _consecutive_runs(js)), default=0)
    cg, en, lb = rep.partial_sums
    gmin = min(r.g_gamma_min for r in rep.records)
    c = rep.checks()
    _finish(9, "disc chain with finite capacity and unbounded energy",
            {"homogeneity within 2%": homog <= 0.02,
             "psi increasing over 5 points": len(curve.samples) == 5 and curve.increasing_as_delta_decreases,
             ">= 3 consecutive j": run >= 3,
             "min g gamma_j >= 0.47": gmin >= 0.47,
             "cross terms bounded": c["cross_terms_bounded"],
             "c_g <= 2 gamma(F_j)": c["c_g_at_most_twice_gamma"],
             "energy sum >= sum 1/(8j)": bool(np.all(en >= lb))},
            f"homogeneity {homog:.1e}, j = {js}, min g gamma {gmin:.4f}, "
            f"sum E_2 {en[-1]:.4f} >= {lb[-1]:.4f}, sum c_g {cg[-1]:.4f}", t0, 600.0)


def _consecutive_runs(js):
    run = []
    for j in js:
        if run and j != run[-1] + 1:
            yield run
            run = []
        run.append(j)
    if run:
        yield run


def test_c10_thinness():
    t0 = time.perf_counter()
    want = {Profile("power", 1.0): "not-thin", Profile("exp", 1.0): "thin-infinite-capacity",
            Profile("exp", 2.0): "finite-capacity"}
    checks, parts = {}, []
    for prof, label in want.items():
        r = wiener_test(prof, K_max=6)
        checks[f"{prof.kind} {prof.s:g}"] = r.classification == label
        parts.append(f"{prof.kind}(s={prof.s:g}) {r.classification}, rates t {r.t_rate:.3f}+-{r.t_rate_se:.3f} "
                     f"c {r.c_rate:.3f}+-{r.c_rate_se:.3f}")
    _finish(10, "thinness classification", checks, "; ".join(parts), t0)


def test_c11_unsolvability():
    t0 = time.perf_counter()
    tr = unsolvability_demo()
    _finish(11, "unsolvable Gauss problem trace",
            {"strictly decreasing": tr.strictly_decreasing, "reaches < 0.05": tr.objectives[-1] < 0.05,
             "positive throughout": all(tr.positive)},
            "objectives " + ", ".join(f"{v:.4f}" for v in tr.objectives), t0)


# ---------------------------------------------------------------------------
# determinism
# ---------------------------------------------------------------------------


def determinism_digest() -> str:
    """Hash of the raw output arrays of a reduced run of every pipeline."""
    h = hashlib.sha256()

    def add(a):
        h.update(np.ascontiguousarray(np.asarray(a, float)).tobytes())

    rng = np.random.default_rng(12)
    add(capacity(make_disc_cloud(1.0, (0.0, 0.0, 0.0), 500)).measure.weights)
    add(sweep_in_domain(_atoms(rng, 6), D, P, "coarse").swept.weights)
    A1 = make_disc_cloud(1.0, (0.5, 0.0, 0.0), 400)
    G = green_halfspace_matrix(A1)
    xi = ConstraintSpec.from_density(A1, 1.5 / math.pi)
    s = solve_gauss(A1, ExternalFieldSpec("case1", values=rng.uniform(0, 0.5, len(A1))), xi, D, G=G)
    add(s.lam.weights)
    add([s.w, s.cert.lower_violation, s.cert.upper_violation])
    C = make_condenser(D, make_disc_cloud(1.0, (0.5, 0.0, 0.0), 500), "coarse", P)
    m = condenser_measure(C, P, "coarse")
    add(m.theta.plus.weights)
    add(m.theta.minus.weights)
    add(energy_weak(m.theta, P, "coarse"))
    A = rng.normal(size=(4, 4))
    add(solve_gauss_matrix(A @ A.T + 0.3 * np.eye(4), rng.normal(size=4), np.full(4, 0.5)).lam.weights)
    add([psi(0.2, 1200)])
    r = wiener_test(Profile("exp", 1.0))
    add([x for row in r.shells for x in row] + [r.t_rate, r.c_rate])
    add(unsolvability_demo(node_count=600, deltas=(1.5, 0.6)).objectives)
    ic = check_case(standard_cases("coarse")[0], P, "coarse", weak=False)
    add([ic.green_norm, ic.norm_difference])
    return h.hexdigest()


def test_c12_determinism():
    t0 = time.perf_counter()
    here = Path(__file__).resolve().parent
    code = ("import sys; sys.path.insert(0, sys.argv[1]); "
            "import test_acceptance as t; print(t.determinism_digest())")
    env = {**os.environ, "RC_THREADS": "1", "OMP_NUM_THREADS": "1", "OPENBLAS_NUM_THREADS": "1",
           "MKL_NUM_THREADS": "1"}
    digests = []
    for _ in range(2):
        out = subprocess.run([sys.executable, "-c", code, str(here)], capture_output=True, text=True, env=env,
                             check=True)
        digests.append(out.stdout.strip().splitlines()[-1])
    in_process = determinism_digest()
    _finish(12, "bitwise determinism (single thread)",
            {"two single-thread runs identical": digests[0] == digests[1],
             "matches this process": digests[0] == in_process},
            f"sha256 {digests[0][:16]}.. / {digests[1][:16]}.. / {in_process[:16]}..", t0)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-s"]))
