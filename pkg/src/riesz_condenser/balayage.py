"""Numerical Riesz balayage of measures from D onto its complement.

The swept measure is the energy-norm projection of mu onto nonnegative
measures carried by the complement carrier A2:

    min_{theta >= 0}  theta' K22 theta - 2 theta' (K21 mu)

The Cholesky factor of K22 is cached per carrier, so sweeping many sources
(Green matrices, superposition checks) costs one factorization.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor
from scipy.spatial import cKDTree

from .config import get_resolution
from .geometry import (BallExterior, BallInterior, DiscreteMeasure, HalfSpace, KernelParams, PointCloud,
                       SignedDiscreteMeasure, default_carrier, discretize_complement, fibonacci_sphere,
                       GOLDEN_ANGLE)
from .kernels import check_memory, cross_matrix, green_halfspace, potential, riesz_matrix
from .qp import solve_nonneg_batch

TAIL_FRACTION = 0.1


class SweepDidNotConverge(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(f"{message} (final residual {residual:.3e})")
        self.residual = residual


@dataclass(eq=False)
class SweepResult:
    swept: DiscreteMeasure
    potential_residual: float
    mass_in: float
    mass_out: float
    R: float = math.nan
    tail_bound: float = math.nan
    iterations: int = 0
    converged: bool = True
    probes: Optional[np.ndarray] = field(default=None, repr=False)


# ---------------------------------------------------------------------------
# cached projection operator
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class SweepOperator:
    A2: PointCloud
    p: KernelParams
    K: np.ndarray
    chol: tuple

    def rhs(self, mu: DiscreteMeasure) -> np.ndarray:
        return cross_matrix(self.A2, mu.cloud, self.p) @ mu.weights

    def solve(self, B):
        return solve_nonneg_batch(self.K, B, self.chol)


@lru_cache(maxsize=4)
def sweep_operator(A2: PointCloud, p: KernelParams) -> SweepOperator:
    check_memory(len(A2), len(A2), 2)
    K = riesz_matrix(A2, p, "cell")
    return SweepOperator(A2, p, K, cho_factor(K, check_finite=False))


# ---------------------------------------------------------------------------
# probes
# ---------------------------------------------------------------------------


def _fine_region(A2: PointCloud):
    """Centre and radius of the finest part of a graded carrier."""
    fine = A2.spacing <= 1.5 * float(np.min(A2.spacing))
    c = A2.points[fine].mean(axis=0)
    r = float(np.max(np.linalg.norm(A2.points[fine] - c, axis=1)))
    return c, r


def complement_probes(domain, A2: PointCloud, count: int = 64) -> np.ndarray:
    """Deterministic points of D^c away from the solve nodes.

    The pattern is a rotated sunflower (plane) or Fibonacci sphere with a
    phase that differs from the carrier's, then filtered so every probe sits
    at least 0.3 local spacings from every node.
    """
    volume = A2.dim == 3
    if isinstance(domain, HalfSpace):
        c, r = _fine_region(A2)
        r = max(min(r, 0.5 * domain.truncation_radius), 1e-3)
        depths = (0.0, 0.25 * r, 0.6 * r) if volume else (0.0,)
        per = max(8, count // len(depths))
        k = np.arange(per)
        rad = r * np.sqrt((k + 0.5) / per)
        t = k * GOLDEN_ANGLE + 1.234
        P = []
        for d in depths:
            Q = np.zeros((per, 3))
            Q[:, 0] = -d
            Q[:, 1] = c[1] + rad * np.cos(t)
            Q[:, 2] = c[2] + rad * np.sin(t)
            P.append(Q)
        P = np.vstack(P)
    elif isinstance(domain, (BallInterior, BallExterior)):
        a = domain.radius
        if isinstance(domain, BallInterior):
            radii = (a, 1.3 * a, 2.0 * a) if volume else (a,)
        else:
            radii = (a, 0.6 * a, 0.25 * a) if volume else (a,)
        per = max(8, count // len(radii))
        P = np.vstack([np.asarray(domain.center) + s * fibonacci_sphere(per, rotation=0.77 + 0.31 * i)
                       for i, s in enumerate(radii)])
    else:
        raise TypeError(f"unsupported domain {domain!r}")
    d, j = cKDTree(A2.points).query(P)
    keep = d >= 0.3 * A2.spacing[j]
    return P[keep]


def _midpoint_probes(A2: PointCloud, count: int = 64) -> np.ndarray:
    step = max(1, len(A2) // count)
    idx = np.arange(0, len(A2), step)[:count]
    _, nb = cKDTree(A2.points).query(A2.points[idx], k=2)
    return 0.5 * (A2.points[idx] + A2.points[nb[:, 1]])


def _mu_potential(mu: DiscreteMeasure, X, p: KernelParams) -> np.ndarray:
    return potential(mu.cloud, mu.weights, X, p, cells=not mu.atomic)


def _tail_bound(mu: DiscreteMeasure, A2: PointCloud, probes, ref, p: KernelParams) -> tuple:
    """Relative bound on the potential of swept mass lying beyond the carrier."""
    if len(probes) == 0 or mu.total_mass == 0.0:
        return math.nan, 0.0
    c = A2.points.mean(axis=0)
    R = float(np.max(np.linalg.norm(A2.points - c, axis=1)))
    rp = float(np.max(np.linalg.norm(probes - c, axis=1)))
    if R <= rp:
        return R, math.inf
    scale = float(np.min(np.abs(ref)))
    return R, mu.total_mass * (R - rp) ** p.exponent / max(scale, 1e-300)


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------


def _finish(mu, A2, theta, p, probes, its, conv, compact: bool) -> SweepResult:
    swept = DiscreteMeasure(A2, np.maximum(theta, 0.0))
    if len(probes):
        ref = _mu_potential(mu, probes, p)
        got = potential(A2, swept.weights, probes, p)
        nz = np.abs(ref) > 0
        resid = float(np.max(np.abs(got[nz] - ref[nz]) / np.abs(ref[nz]))) if np.any(nz) else 0.0
        R, tail = (math.nan, 0.0) if compact else _tail_bound(mu, A2, probes, ref, p)
    else:
        resid, R, tail = 0.0, math.nan, 0.0
    return SweepResult(swept, resid, mu.total_mass, swept.total_mass, R, tail, int(its), bool(conv), probes)


def sweep(mu: DiscreteMeasure, A2: PointCloud, p: KernelParams = KernelParams(), domain=None,
          probes=None, strict: bool = False) -> SweepResult:
    """Project ``mu`` onto nonnegative measures on the carrier ``A2``.

    The residual is measured at probe points of D^c distinct from the solve
    nodes: generated from ``domain`` when given, else midpoints between
    neighbouring carrier nodes.
    """
    if mu.total_mass == 0.0:
        return SweepResult(DiscreteMeasure.zero(A2), 0.0, 0.0, 0.0)
    if domain is not None and np.any(~domain.contains(mu.cloud.points[mu.weights > 0])):
        raise ValueError("the measure to sweep must be carried by D")
    op = sweep_operator(A2, p)
    X, its, conv = op.solve(op.rhs(mu))
    if probes is None:
        probes = complement_probes(domain, A2) if domain is not None else _midpoint_probes(A2)
    compact = domain is not None and domain.complement_compact
    res = _finish(mu, A2, X[:, 0], p, np.asarray(probes, float).reshape(-1, 3), its[0], conv[0], compact)
    if strict and not res.converged:
        raise SweepDidNotConverge("balayage projection hit its iteration budget", res.potential_residual)
    return res


def complement_for(mu: DiscreteMeasure, domain, p: KernelParams = KernelParams(), resolution="medium",
                   carrier: Optional[str] = None, R: Optional[float] = None):
    """Complement carrier focused on the support of ``mu``."""
    carrier = carrier or default_carrier(domain, p)
    focus, frad = (0.0, 0.0), 1.5
    if isinstance(domain, HalfSpace):
        pts = mu.cloud.points[mu.weights > 0]
        c = pts.mean(axis=0)
        focus = (float(c[1]), float(c[2]))
        reach = float(np.max(np.linalg.norm(pts[:, 1:] - c[1:], axis=1)))
        frad = reach + max(1.0, float(np.max(pts[:, 0])))
    return discretize_complement(domain, resolution, R, p, carrier, focus, frad)


def sweep_in_domain(mu: DiscreteMeasure, domain, p: KernelParams = KernelParams(), resolution="medium",
                    residual_target: float = 0.02, R: Optional[float] = None, R_max: float = 1.0e5,
                    carrier: Optional[str] = None) -> SweepResult:
    """Sweep with the carrier radius doubled until the tail bound is small.

    The bound (total mass times (R - r_probe)^(alpha - n), relative to the
    smallest probed potential) must fall below 10% of ``residual_target``.
    """
    if R is None:
        R = getattr(domain, "truncation_radius", math.inf)
    while True:
        A2 = complement_for(mu, domain, p, resolution, carrier, R if math.isfinite(R) else None)
        res = sweep(mu, A2, p, domain)
        if domain.complement_compact or not res.tail_bound > TAIL_FRACTION * residual_target:
            return res
        if 2.0 * R > R_max:
            return res
        R *= 2.0


def sweep_signed(nu: SignedDiscreteMeasure, A2: PointCloud, p: KernelParams = KernelParams(),
                 domain=None):
    """Component-wise sweep; returns (sweep of nu+, sweep of nu-)."""
    return sweep(nu.plus, A2, p, domain), sweep(nu.minus, A2, p, domain)


def projection_objective(mu: DiscreteMeasure, theta, A2: PointCloud, p: KernelParams = KernelParams()) -> float:
    """||mu - theta||^2 up to the (mu-only) constant ||mu||^2."""
    op = sweep_operator(A2, p)
    theta = np.asarray(theta, float)
    return float(theta @ (op.K @ theta) - 2.0 * theta @ op.rhs(mu))


@dataclass
class SuperpositionReport:
    max_weight_discrepancy: float
    joint_mass: float
    summed_mass: float
    atoms: int


def sweep_superposition_check(mu: DiscreteMeasure, A2: PointCloud, p: KernelParams = KernelParams(),
                              domain=None) -> SuperpositionReport:
    """Joint sweep against the mass-weighted sum of single-atom sweeps."""
    joint = sweep(mu, A2, p, domain).swept.weights
    op = sweep_operator(A2, p)
    idx = np.flatnonzero(mu.weights > 0)
    cols = cross_matrix(A2, mu.cloud.subset(np.isin(np.arange(len(mu.cloud)), idx)), p)
    X, _, _ = op.solve(cols)
    summed = X @ mu.weights[idx]
    disc = float(np.max(np.abs(joint - summed)) / max(np.max(np.abs(joint)), 1e-300))
    return SuperpositionReport(disc, float(joint.sum()), float(summed.sum()), len(idx))


@dataclass
class GreenPotentialReport:
    values: np.ndarray
    analytic: Optional[np.ndarray]
    max_relative_difference: float
    sweep: SweepResult


def green_potential(mu: DiscreteMeasure, probes, domain, p: KernelParams = KernelParams(),
                    resolution="medium", A2: Optional[PointCloud] = None) -> GreenPotentialReport:
    """g mu = kappa mu - kappa mu' at probes in D, plus the mirror-image value when available."""
    X = np.atleast_2d(np.asarray(probes, float))
    if np.any(~domain.contains(X)):
        raise ValueError("Green potential probes must lie in D")
    res = sweep(mu, A2, p, domain) if A2 is not None else sweep_in_domain(mu, domain, p, resolution)
    vals = _mu_potential(mu, X, p) - potential(res.swept.cloud, res.swept.weights, X, p)
    ana, diff = None, math.nan
    if isinstance(domain, HalfSpace) and p.newtonian:
        ana = np.zeros(len(X))
        for y, m in zip(mu.cloud.points, mu.weights):
            if m > 0:
                ana += m * green_halfspace(X, y)
        diff = float(np.max(np.abs(vals - ana) / np.maximum(np.abs(ana), 1e-300)))
    return GreenPotentialReport(vals, ana, diff, res)


@dataclass
class MassLossReport:
    mass_in: float
    mass_out: float
    deficit: float
    R: float


def mass_loss_probe(domain, mu: DiscreteMeasure, p: KernelParams = KernelParams(), resolution="medium",
                    R: Optional[float] = None) -> MassLossReport:
    """Total masses before and after sweeping, with the truncation radius used."""
    if mu.total_mass == 0.0:
        return MassLossReport(0.0, 0.0, 0.0, math.nan if R is None else R)
    if R is None:
        R = getattr(domain, "truncation_radius", math.inf)
    A2 = complement_for(mu, domain, p, resolution, None, R if math.isfinite(R) else None)
    res = sweep(mu, A2, p, domain)
    return MassLossReport(res.mass_in, res.mass_out, res.mass_in - res.mass_out, R)


# ---------------------------------------------------------------------------
# Green kernel support
# ---------------------------------------------------------------------------


@lru_cache(maxsize=64)
def swept_dirac(y: tuple, domain, p: KernelParams = KernelParams(), resolution="medium") -> SweepResult:
    """Sweep of the unit Dirac at y (cached per point, domain and resolution)."""
    mu = DiscreteMeasure.atoms([y], [1.0])
    return sweep_in_domain(mu, domain, p, get_resolution(resolution))


def green_matrix_numeric(cloud: PointCloud, domain, p: KernelParams = KernelParams(), resolution="medium",
                         A2: Optional[PointCloud] = None) -> np.ndarray:
    """G_ij = kappa(x_i, x_j) - kappa eps'_{x_j}(x_i), with one batched sweep for all columns."""
    if A2 is None:
        mu = DiscreteMeasure(cloud, cloud.quad_weight)
        A2 = complement_for(mu, domain, p, resolution)
    op = sweep_operator(A2, p)
    K21 = cross_matrix(A2, cloud, p)
    theta, _, conv = op.solve(K21)
    if not np.all(conv):
        raise SweepDidNotConverge(f"{int(np.sum(~conv))} Green columns did not converge", math.nan)
    G = riesz_matrix(cloud, p, "cell") - K21.T @ theta
    return 0.5 * (G + G.T)
