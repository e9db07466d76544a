from __future__ import annotations

import math

import numpy as np
import pytest

from riesz_condenser.disc_chain import (TWO_OVER_PI2, ResolutionTooCoarse, build_F, compute_psi, disc_spacing,
                                        find_delta_j, homogeneity_check, offset_disc, psi)

COARSE_SCHEDULE = (0.4, 0.2, 0.1, 0.07)


@pytest.fixture(scope="module")
def coarse_curve():
    return compute_psi(COARSE_SCHEDULE, "coarse")


@pytest.fixture(scope="module")
def coarse_chain(coarse_curve):
    return build_F(6, 4.0, "coarse", psi_curve=coarse_curve)


def test_psi_above_lower_bound_and_increasing(coarse_curve):
    assert np.all(coarse_curve.values >= TWO_OVER_PI2)
    assert coarse_curve.increasing_as_delta_decreases
    assert all(e <= 0.02 for _, e in coarse_curve.identity_errors)


@pytest.mark.parametrize("r,eps", [(1.0, 0.2), (0.5, 0.1), (2.0, 0.4), (0.5, 0.2)])
def test_homogeneity(r, eps):
    assert homogeneity_check(r, eps, "coarse") <= 0.02


def test_height_below_spacing_is_rejected():
    h = disc_spacing(1.0, 1200)
    with pytest.raises(ResolutionTooCoarse):
        offset_disc(1.0, 0.9 * h, 1200)
    with pytest.raises(ResolutionTooCoarse):
        compute_psi((0.4, 0.05), "coarse", cross_check=False)


def test_offset_disc_geometry():
    cl = offset_disc(0.25, 0.1, 500, shift=3.0)
    assert np.allclose(cl.points[:, 0], 0.1)
    assert np.all(np.hypot(cl.points[:, 1] - 3.0, cl.points[:, 2]) <= 0.25 + 1e-12)


def test_find_delta_j_rejections(coarse_curve):
    with pytest.raises(ValueError, match="lower bound"):
        find_delta_j(1, (0.1, 0.4), 1200, coarse_curve.b_hat)
    with pytest.raises(ValueError, match="straddle"):
        find_delta_j(3, (0.2, 0.4), 1200, coarse_curve.b_hat)


def test_find_delta_j_root(coarse_curve):
    rt = find_delta_j(3, (0.07, 0.2), 1200, coarse_curve.b_hat)
    assert rt.relative_error <= 2e-3
    (d_hi, p_hi), (d_lo, p_lo) = rt.bracket
    assert d_lo <= rt.delta <= d_hi and p_hi < 3 < p_lo
    assert math.isclose(psi(rt.delta, 1200), rt.psi, rel_tol=1e-12)


def test_chain_checks(coarse_chain):
    rep = coarse_chain
    assert all(rep.checks().values()), rep.checks()
    ds = [r.delta for r in rep.records]
    assert all(b < a for a, b in zip(ds, ds[1:]))
    assert [r.j for r in rep.records] == [3, 4, 5]
    assert rep.skipped == [6]
    assert rep.joint_converged


def test_chain_energies_grow_while_capacities_converge(coarse_chain):
    cg, en, lb = coarse_chain.partial_sums
    assert cg[-1] <= sum(j**-2.0 for j in (3, 4, 5)) * 1.05
    assert np.all(np.diff(en) > 0) and np.all(en >= lb)
    for r in coarse_chain.records:
        assert r.energy >= r.energy_bound


def test_build_F_validation(coarse_curve):
    with pytest.raises(ValueError):
        build_F(2, 4.0, "coarse", psi_curve=coarse_curve)
    with pytest.raises(ValueError):
        build_F(6, 3.0, "coarse", psi_curve=coarse_curve)
    with pytest.raises(ResolutionTooCoarse):
        build_F(6, 4.0, 300, psi_curve=compute_psi((0.4, 0.2), 300, cross_check=False), j_min=30)
