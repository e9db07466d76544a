from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from riesz_condenser.geometry import (BallExterior, BallInterior, BallShape, DiscShape, DiscreteMeasure,
                                      HalfSpace, HalfSpaceShape, KernelParams, PointCloud, RotationBodyShape,
                                      SignedDiscreteMeasure, discretize_complement, make_ball_cloud,
                                      make_condenser, make_disc_cloud, make_sphere_cloud, reduced_kernel)


def test_disc_area():
    c = make_disc_cloud(1.0, (0.0, 0.0, 0.0), 1000)
    assert abs(c.total_measure - math.pi) <= 0.005 * math.pi
    h = math.sqrt(math.pi / 1000)
    # spacing is the radius of the equal-area disc, a fixed multiple of sqrt(area/N)
    assert np.allclose(c.spacing, h / math.sqrt(math.pi))


@given(st.floats(0.1, 10.0))
def test_disc_homothety(r):
    a = make_disc_cloud(1.0, (0.0, 0.0, 0.0), 200)
    b = make_disc_cloud(r, (0.0, 0.0, 0.0), 200)
    assert np.allclose(b.points, r * a.points)
    assert np.allclose(b.quad_weight, r * r * a.quad_weight)


def test_disc_offset_translates_first_coordinate():
    c = make_disc_cloud(0.7, (0.25, 0.0, 0.0), 300)
    assert np.all(c.points[:, 0] == 0.25)


def test_disc_too_few_nodes():
    with pytest.raises(ValueError, match="too small"):
        make_disc_cloud(1.0, (0, 0, 0), 10)
    with pytest.raises(ValueError):
        make_disc_cloud(0.0, (0, 0, 0), 100)


@pytest.mark.parametrize("r", [1.0, 0.5])
def test_ball_volume(r):
    b = make_ball_cloud(r, (0.0, 0.0, 0.0), 2000)
    vol = 4.0 / 3.0 * math.pi * r**3
    assert abs(b.total_measure - vol) <= 0.01 * vol
    assert np.all(np.linalg.norm(b.points, axis=1) <= r)


def test_ball_degenerate_radius():
    with pytest.raises(ValueError):
        make_ball_cloud(0.0, (0, 0, 0), 100)


def test_sphere_area():
    s = make_sphere_cloud(2.0, (1.0, 0.0, 0.0), 500)
    assert math.isclose(s.total_measure, 16 * math.pi, rel_tol=1e-12)
    assert np.allclose(np.linalg.norm(s.points - [1, 0, 0], axis=1), 2.0)


def test_halfspace_complement_plane():
    A2 = discretize_complement(HalfSpace(), "coarse", R=10.0)
    assert np.all(A2.points[:, 0] == 0.0)
    assert np.all(np.linalg.norm(A2.points, axis=1) <= 10.0)
    assert abs(A2.total_measure - 100 * math.pi) <= 0.01 * 100 * math.pi


def test_complement_radius_below_plate_extent():
    plate = make_disc_cloud(3.0, (1.0, 0.0, 0.0), 200)
    with pytest.raises(ValueError, match="extent"):
        discretize_complement(HalfSpace(), "coarse", R=2.0, plate=plate)


def test_complement_inconsistent_resolution():
    with pytest.raises(ValueError, match="inconsistent"):
        discretize_complement(HalfSpace(), "coarse", R=0.2)


def test_ball_complements():
    A2 = discretize_complement(BallExterior((0, 0, 0), 1.0), "coarse", p=KernelParams(3, 1.5))
    assert np.all(np.linalg.norm(A2.points, axis=1) <= 1.0)
    A2 = discretize_complement(BallInterior((0, 0, 0), 1.0, 5.0), "coarse")
    assert np.allclose(np.linalg.norm(A2.points, axis=1), 1.0)


def test_reduced_kernel_primitives():
    ball = BallShape((0, 0, 0), 1.0)
    assert reduced_kernel(ball).kind == "self" and reduced_kernel(ball).shape is ball
    assert reduced_kernel(HalfSpaceShape()).kind == "self"
    disc = DiscShape((1, 0, 0), 1.0)
    assert reduced_kernel(disc, KernelParams(3, 1.5)).kind == "self"
    assert reduced_kernel(disc, KernelParams(3, 1.0)).kind == "empty"
    assert reduced_kernel(RotationBodyShape("power", 1.0)).kind == "self"
    assert reduced_kernel(("union", ball, disc)).kind == "unknown"


def test_condenser_separation_and_touching():
    D = HalfSpace()
    far = make_condenser(D, make_disc_cloud(1.0, (0.5, 0, 0), 200), "coarse")
    assert far.separation == 0.5 and not far.touching
    near = make_condenser(D, make_ball_cloud(0.5, (0.505, 0, 0), 300), "coarse")
    assert near.touching


def test_condenser_rejects_plate_outside_domain():
    with pytest.raises(ValueError, match="outside D"):
        make_condenser(HalfSpace(), make_disc_cloud(1.0, (-0.1, 0, 0), 100), "coarse")


@given(st.floats(0.2, 5.0))
def test_separation_homothety(r):
    D = HalfSpace()
    c = make_disc_cloud(1.0, (0.5, 0, 0), 100)
    A2 = discretize_complement(D, "coarse", R=100.0)
    a = make_condenser(D, c, A2=A2)
    b = make_condenser(D, c.scaled(r), A2=A2)
    assert math.isclose(b.separation, r * a.separation, rel_tol=1e-12)


def test_cloud_validation():
    with pytest.raises(ValueError, match="distinct"):
        PointCloud(np.zeros((2, 3)), np.ones(2), np.ones(2))
    with pytest.raises(ValueError, match="positive"):
        PointCloud(np.eye(3), np.ones(3), -np.ones(3))
    with pytest.raises(ValueError, match="normals"):
        PointCloud(np.eye(3), np.ones(3), np.ones(3), dim=2)


def test_measures():
    c = make_disc_cloud(1.0, (1, 0, 0), 100)
    mu = DiscreteMeasure.from_density(c, 1.0 / math.pi)
    assert math.isclose(mu.total_mass, 1.0, rel_tol=1e-12)
    other = DiscreteMeasure.from_density(c.translated((1.0, 0, 0)), 0.5 / math.pi)
    nu = SignedDiscreteMeasure(mu, other)
    assert math.isclose(nu.net_mass, 0.5, rel_tol=1e-12)
    assert math.isclose(nu.total_variation, 1.5, rel_tol=1e-12)
    with pytest.raises(ValueError):
        DiscreteMeasure(c, -np.ones(len(c)))
    with pytest.raises(ValueError, match="share a node"):
        SignedDiscreteMeasure(mu, mu.scaled(0.5))
