from __future__ import annotations

import math

import numpy as np
import pytest

from oracles import grid_minimum
from riesz_condenser.disc_chain import psi
from riesz_condenser.geometry import (DiscreteMeasure, HalfSpace, KernelParams, SignedDiscreteMeasure,
                                      make_condenser, make_disc_cloud, make_sphere_cloud)
from riesz_condenser.kernels import green_halfspace, green_halfspace_matrix, riesz_matrix
from riesz_condenser.solver import (ConstraintSpec, ExternalFieldSpec, InfeasibleConstraint, capacity,
                                    condenser_measure, green_equilibrium, perturb_solution, signed_potential,
                                    solve_gauss, solve_gauss_matrix, solver_determinism_check,
                                    unsolvability_demo, verify_frostman)

P = KernelParams()
D = HalfSpace()


@pytest.fixture(scope="module")
def disc():
    return make_disc_cloud(1.0, (0.5, 0.0, 0.0), 400)


@pytest.fixture(scope="module")
def G(disc):
    return green_halfspace_matrix(disc)


def test_sphere_capacity():
    assert abs(capacity(make_sphere_cloud(1.0, (0, 0, 0), 1600)).value - 1.0) <= 0.03


def test_disc_capacity_converges_to_two_over_pi():
    """Newtonian capacity of the unit disc with kernel 1/|x - y| is 2/pi."""
    vals = [capacity(make_disc_cloud(1.0, (0, 0, 0), n)).value for n in (300, 1200)]
    assert abs(vals[1] - 2 / math.pi) < abs(vals[0] - 2 / math.pi)
    assert abs(vals[1] - 2 / math.pi) <= 0.01 * 2 / math.pi


@pytest.mark.parametrize("r", [0.5, 3.0])
def test_capacity_scaling(r):
    c = make_disc_cloud(1.0, (0, 0, 0), 300)
    for alpha in (2.0, 1.5):
        p = KernelParams(3, alpha)
        a = capacity(c, p=p).value
        b = capacity(c.scaled(r), p=p).value
        assert abs(b / a - r ** (3 - alpha)) <= 0.01 * r ** (3 - alpha)


def test_capacity_monotone_under_subsets():
    c = make_disc_cloud(1.0, (0, 0, 0), 300)
    sub = c.subset(np.linalg.norm(c.points, axis=1) < 0.7)
    assert capacity(sub).value < capacity(c).value


def test_capacity_empty_cloud():
    c = make_disc_cloud(1.0, (0, 0, 0), 100)
    with pytest.raises(ValueError):
        capacity(c.subset(np.zeros(len(c), bool)))


def test_green_equilibrium(disc, G):
    gamma, cg = green_equilibrium(disc, D, P, G=G)
    pot = G @ gamma.weights
    inner = ~disc.edge_mask()
    assert np.max(np.abs(pot[inner] - 1.0)) <= 1e-6
    assert cg >= capacity(disc).value
    rng = np.random.default_rng(0)
    X = np.column_stack([rng.uniform(0.05, 3, 200), rng.uniform(-3, 3, 200), rng.uniform(-3, 3, 200)])
    far = np.min(np.linalg.norm(X[:, None, :] - disc.points[None], axis=2), axis=1) > 2 * disc.spacing.max()
    vals = np.array([gamma.weights @ green_halfspace(disc.points, x) for x in X[far]])
    assert vals.max() <= 1.0 + 0.01


def test_unconstrained_w_is_inverse_capacity(disc, G):
    sol = solve_gauss(disc, G=G)
    cg = 1.0 / sol.objective
    assert sol.converged and sol.cert.passed
    assert math.isclose(sol.w, 1.0 / cg, rel_tol=1e-9)
    assert abs(sol.cert.w_mass - sol.w) <= 1e-4 * sol.w
    assert math.isnan(sol.cert.w_slack)


@pytest.mark.parametrize("seed", range(6))
def test_brute_force_small_instances(seed):
    rng = np.random.default_rng(seed)
    n = 3 if seed % 2 else 4
    A = rng.normal(size=(n, n))
    G = A @ A.T + 0.3 * np.eye(n)
    f = 0.5 * rng.normal(size=n)
    upper = rng.uniform(0.35, 0.9, n)
    if upper.sum() <= 1.0:
        upper *= 1.2 / upper.sum()
    sol = solve_gauss_matrix(G, f, upper)
    best, _ = grid_minimum(G, f, upper, step=1e-2 if n == 4 else 1e-3)
    assert sol.cert.passed
    assert sol.objective <= best + 1e-6


def test_case_two_half_capacitary_field(disc, G):
    """f = g zeta with zeta = -mu/2 leaves the capacitary measure mu optimal."""
    mu = solve_gauss(disc, G=G).lam
    zeta = SignedDiscreteMeasure(DiscreteMeasure.zero(disc), mu.scaled(0.5))
    sol = solve_gauss(disc, ExternalFieldSpec("case2", zeta=zeta), G=G)
    assert np.max(np.abs(sol.lam.weights - mu.weights)) <= 1e-8
    # lower bound -||zeta||_g^2 on the objective
    assert sol.objective >= -0.25 * float(mu.weights @ G @ mu.weights)


def test_case_two_external_charge_lowers_nearby_mass(disc, G):
    zeta = SignedDiscreteMeasure.positive(DiscreteMeasure.atoms([(1.0, 0, 0)], [1.0]))
    sol = solve_gauss(disc, ExternalFieldSpec("case2", zeta=zeta), domain=D, G=G)
    base = solve_gauss(disc, G=G)
    near = np.linalg.norm(disc.points[:, 1:], axis=1) < 0.3
    assert sol.lam.weights[near].sum() < base.lam.weights[near].sum()
    assert sol.cert.passed


def test_case_one_validation():
    with pytest.raises(ValueError):
        ExternalFieldSpec("case1", values=np.array([1.0, -0.1]))
    with pytest.raises(ValueError):
        ExternalFieldSpec("case2")
    with pytest.raises(ValueError):
        ExternalFieldSpec("other")


def test_infeasible_and_saturated_constraints(disc, G):
    with pytest.raises(InfeasibleConstraint):
        solve_gauss(disc, constraint=ConstraintSpec.from_density(disc, 0.9 / math.pi), G=G)
    sol = solve_gauss(disc, constraint=ConstraintSpec.from_density(disc, 1.0 / math.pi), G=G)
    assert sol.saturated and np.allclose(sol.lam.weights, disc.quad_weight / math.pi)
    with pytest.raises(ValueError):
        ConstraintSpec(np.array([1.0, 0.0]))


def test_bounded_constraint_certificate_and_estimators(disc, G):
    xi = ConstraintSpec.from_density(disc, 1.5 / math.pi)
    sol = solve_gauss(disc, constraint=xi, G=G)
    active = sol.lam.weights >= xi.upper * (1 - 1e-9)
    assert sol.converged and sol.cert.passed and np.any(active)
    assert np.all(sol.lam.weights <= xi.upper * (1 + 1e-12))
    assert math.isclose(sol.lam.total_mass, 1.0, rel_tol=1e-12)
    assert abs(sol.cert.w_slack - sol.cert.w_primary) <= 1e-4 * abs(sol.cert.w_primary)
    assert sol.cert.gap <= 1e-8


@pytest.mark.parametrize("bounded", [False, True])
def test_perturbation_detected(disc, G, bounded):
    xi = ConstraintSpec.from_density(disc, 1.5 / math.pi) if bounded else ConstraintSpec()
    sol = solve_gauss(disc, constraint=xi, G=G)
    bad = perturb_solution(sol, 0.01)
    v = max(bad.cert.lower_violation, bad.cert.upper_violation)
    assert not bad.cert.passed and v >= 10 * sol.cert.tolerance
    assert bad.objective > sol.objective


def test_verify_frostman_recomputes(disc, G):
    sol = solve_gauss(disc, G=G)
    rep = verify_frostman(sol)
    assert rep.passed and rep.lower_violation == sol.cert.lower_violation


def test_determinism(disc, G):
    rep = solver_determinism_check(G)
    assert rep.conclusive and rep.max_weight_discrepancy <= 1e-6
    xi = 1.5 * disc.quad_weight / math.pi
    rep = solver_determinism_check(G, None, xi)
    assert rep.conclusive and rep.max_weight_discrepancy <= 1e-6
    same = solver_determinism_check(G, None, xi, inits=("uniform", "uniform"))
    assert same.bitwise_identical


def test_green_capacity_trend_for_lower_discs():
    vals = [psi(d, 2000) for d in (0.5, 0.1, 0.05)]
    energies = [1.0 / v for v in vals]
    assert all(b < a for a, b in zip(energies, energies[1:]))


def test_unsolvability_trace():
    tr = unsolvability_demo(node_count=1500, deltas=(1.5, 0.6, 0.3))
    assert tr.strictly_decreasing and all(tr.positive)
    with pytest.raises(ValueError, match="leaves the plate"):
        unsolvability_demo(deltas=(3.0,), node_count=200)


@pytest.fixture(scope="module")
def theta_pair():
    A1 = make_disc_cloud(1.0, (0.5, 0, 0), 500)
    a = condenser_measure(make_condenser(D, A1, "coarse"), P, "coarse")
    b = condenser_measure(make_condenser(D, A1.scaled(2.0), "coarse"), P, "coarse")
    return A1, a, b


def test_condenser_measure_masses(theta_pair):
    _, a, _ = theta_pair
    assert math.isclose(a.theta.plus.total_mass, a.c_g, rel_tol=1e-12)
    assert abs(a.theta.minus.total_mass - a.c_g) <= 0.03 * a.c_g


def test_condenser_measure_scaling(theta_pair):
    _, a, b = theta_pair
    assert math.isclose(b.c_g, 2.0 * a.c_g, rel_tol=1e-9)
    assert abs(b.theta.minus.total_mass - 2.0 * a.theta.minus.total_mass) <= 0.03 * b.theta.minus.total_mass


def test_condenser_potential_on_plate(theta_pair):
    A1, a, _ = theta_pair
    v = signed_potential(a.theta, A1.points[~A1.edge_mask()], P)
    assert np.max(np.abs(v - 1.0)) <= 0.03
