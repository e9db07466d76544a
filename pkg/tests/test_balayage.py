from __future__ import annotations

import math

import numpy as np
import pytest

from riesz_condenser.balayage import (complement_for, green_potential, mass_loss_probe, projection_objective,
                                      sweep, sweep_in_domain, sweep_signed, sweep_superposition_check)
from riesz_condenser.geometry import (BallExterior, DiscreteMeasure, HalfSpace, KernelParams,
                                      SignedDiscreteMeasure, make_disc_cloud)
from riesz_condenser.kernels import potential

P = KernelParams()
D = HalfSpace()


def unit_atom(x=(1.0, 0.0, 0.0)):
    return DiscreteMeasure.atoms([x], [1.0])


@pytest.fixture(scope="module")
def atom_sweep():
    return sweep_in_domain(unit_atom(), D, P, "medium")


def test_unit_atom_reflection(atom_sweep, rng):
    X = np.column_stack([rng.uniform(0.05, 3, 50), rng.uniform(-3, 3, 50), rng.uniform(-3, 3, 50)])
    got = potential(atom_sweep.swept.cloud, atom_sweep.swept.weights, X, P)
    ref = 1.0 / np.linalg.norm(X - [-1.0, 0, 0], axis=1)
    assert np.max(np.abs(got / ref - 1)) <= 0.02


def test_unit_atom_mass_and_residual(atom_sweep):
    assert abs(atom_sweep.mass_out - 1.0) <= 0.03
    assert atom_sweep.potential_residual <= 0.02
    assert np.all(atom_sweep.swept.weights >= 0)
    assert atom_sweep.swept.cloud.points[:, 0].max() == 0.0


def test_measure_on_carrier_is_fixed():
    A2 = complement_for(unit_atom(), D, P, "coarse")
    rng = np.random.default_rng(0)
    w = np.zeros(len(A2))
    w[rng.choice(len(A2), 20, replace=False)] = rng.uniform(0.1, 1.0, 20)
    res = sweep(DiscreteMeasure(A2, w), A2, P)
    assert np.allclose(res.swept.weights, w, atol=1e-10 * w.max())


def test_idempotent(atom_sweep):
    again = sweep(atom_sweep.swept, atom_sweep.swept.cloud, P)
    w = atom_sweep.swept.weights
    assert np.max(np.abs(again.swept.weights - w)) <= 1e-8 * w.max()


def test_linearity():
    mu = DiscreteMeasure.atoms([(1.0, 0.2, 0), (0.5, -0.3, 0.4)], [0.7, 0.3])
    A2 = complement_for(mu, D, P, "coarse")
    a = sweep(mu, A2, P, D).swept.weights
    b = sweep(mu.scaled(3.5), A2, P, D).swept.weights
    assert np.allclose(b, 3.5 * a, rtol=1e-8, atol=1e-12)


def test_signed_sweep_equal_masses():
    plus = DiscreteMeasure.atoms([(1.0, 0, 0)], [1.0])
    minus = DiscreteMeasure.atoms([(2.0, 0.5, 0)], [1.0])
    nu = SignedDiscreteMeasure(plus, minus)
    A2 = complement_for(DiscreteMeasure.atoms([(1.0, 0, 0), (2.0, 0.5, 0)], [1, 1]), D, P, "medium")
    sp, sm = sweep_signed(nu, A2, P, D)
    assert abs(sp.mass_out - sm.mass_out) <= 0.02


@pytest.mark.parametrize("k,tol", [(1, 1e-12), (2, 0.01), (5, 0.02)])
def test_superposition(k, tol):
    rng = np.random.default_rng(k)
    X = np.column_stack([rng.uniform(0.3, 1.5, k), rng.uniform(-1, 1, k), rng.uniform(-1, 1, k)])
    mu = DiscreteMeasure.atoms(X, rng.uniform(0.5, 1.5, k))
    A2 = complement_for(mu, D, P, "coarse")
    rep = sweep_superposition_check(mu, A2, P, D)
    assert rep.max_weight_discrepancy <= tol
    assert rep.atoms == k


def test_projection_optimality():
    mu = DiscreteMeasure.atoms([(0.8, 0.1, 0.0)], [1.0])
    A2 = complement_for(mu, D, P, "coarse")
    theta = sweep(mu, A2, P, D).swept.weights
    best = projection_objective(mu, theta, A2, P)
    rng = np.random.default_rng(4)
    for _ in range(20):
        t = np.maximum(theta + 0.01 * theta.max() * rng.normal(size=len(theta)), 0.0)
        assert projection_objective(mu, t, A2, P) >= best - 1e-12 * abs(best)


def test_green_potential_probe(atom_sweep):
    r = green_potential(unit_atom(), [[1.0, 1.0, 0.0], [0.5, -0.5, 0.2]], D, P, "medium")
    assert abs(r.values[0] - 0.5528) <= 0.02 * 0.5528
    assert r.max_relative_difference <= 0.02
    kappa = potential(unit_atom().cloud, [1.0], [[1.0, 1.0, 0.0], [0.5, -0.5, 0.2]], P, cells=False)
    assert np.all(r.values <= kappa)


def test_green_potential_near_boundary():
    r = green_potential(unit_atom(), [[1e-3, 0.3, 0.0]], D, P, "medium")
    assert abs(r.values[0]) <= 0.01


def test_green_potential_rejects_outside_probe():
    with pytest.raises(ValueError, match="must lie in D"):
        green_potential(unit_atom(), [[-0.5, 0, 0]], D, P, "coarse")


def test_sweep_rejects_measure_outside_domain():
    mu = DiscreteMeasure.atoms([(-1.0, 0, 0)], [1.0])
    A2 = complement_for(unit_atom(), D, P, "coarse")
    with pytest.raises(ValueError, match="carried by D"):
        sweep(mu, A2, P, D)


def test_zero_measure_mass_probe():
    empty = DiscreteMeasure.zero(make_disc_cloud(1.0, (1, 0, 0), 20))
    r = mass_loss_probe(D, empty, P, "coarse")
    assert (r.mass_in, r.mass_out) == (0.0, 0.0)


def test_halfspace_mass_deficit_shrinks_with_radius():
    mu = DiscreteMeasure.atoms([(1.0, 0, 0)], [1.0])
    deficits = [mass_loss_probe(D, mu, P, "coarse", R).deficit for R in (12.5, 25.0, 50.0, 100.0)]
    assert all(b < a for a, b in zip(deficits, deficits[1:]))
    assert abs(deficits[-1]) <= 0.03


@pytest.mark.parametrize("t", [1.5, 3.0, 6.0])
def test_ball_complement_mass_matches_kelvin(t):
    """Sweeping a unit atom at distance t onto a ball of radius 1 leaves mass 1/t."""
    dom = BallExterior((0, 0, 0), 1.0)
    mu = DiscreteMeasure.atoms([(t, 0.0, 0.0)], [1.0])
    r = mass_loss_probe(dom, mu, P, "medium")
    assert abs(r.mass_out - 1.0 / t) <= 0.02 / t
    assert r.deficit > 0


def test_ball_complement_fractional_deficit():
    dom = BallExterior((0, 0, 0), 1.0)
    p = KernelParams(3, 1.5)
    d = [mass_loss_probe(dom, DiscreteMeasure.atoms([(t, 0, 0)], [1.0]), p, "coarse").deficit for t in (2.0, 4.0)]
    assert 0 < d[0] < d[1]
