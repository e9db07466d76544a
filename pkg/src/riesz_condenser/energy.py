"""Standard, Green and weak Riesz energies.

The weak energy of a signed density nu is

    (1 / c(n, alpha)) * integral over R^n of (kappa_{alpha/2} nu)^2 dm

where c(n, alpha) is the constant in kappa_{alpha/2} * kappa_{alpha/2} =
c(n, alpha) kappa_alpha, so that it agrees with the standard energy
whenever the latter is finite.  The integral is evaluated by an adaptive
octree quadrature; leaves cut by an axis-aligned source sheet are split at
the sheet and use a graded rule towards it (the half-potential of a sheet
charge is logarithmically singular there).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .config import get_resolution
from .geometry import DiscreteMeasure, KernelParams, PointCloud, SignedDiscreteMeasure
from .kernels import (cell_potential, composition_constant, green_matrix, kernel_matrix,
                      riesz_matrix)

SQRT3 = math.sqrt(3.0)
# exact cell means within this many source spacings; the point-kernel error beyond decays like (h/r)^2
WEAK_NEAR_FACTOR = 4.0


@dataclass
class EnergyReport:
    e_standard: float
    e_green: float
    e_weak: float
    tail_bound: float
    undefined_in_limit: bool = False


# ---------------------------------------------------------------------------
# standard and Green energies
# ---------------------------------------------------------------------------


def _self_matrix(mu: DiscreteMeasure, p: KernelParams) -> np.ndarray:
    return riesz_matrix(mu.cloud, p, "atomic" if mu.atomic else "cell")


def mutual_energy(mu: DiscreteMeasure, nu: DiscreteMeasure, p: KernelParams = KernelParams()) -> float:
    """<mu, nu>_alpha; a shared cloud uses the cell-corrected diagonal."""
    if mu.cloud is nu.cloud:
        return float(mu.weights @ _self_matrix(mu, p) @ nu.weights)
    a = mu.weights > 0
    b = nu.weights > 0
    if not np.any(a) or not np.any(b):
        return 0.0
    K = kernel_matrix(mu.cloud.points[a], nu.cloud.points[b], p.exponent)
    return float(mu.weights[a] @ K @ nu.weights[b])


def energy_standard(nu, p: KernelParams = KernelParams()) -> float:
    """E_alpha of a positive or signed measure (sign-expanded quadratic form)."""
    if isinstance(nu, DiscreteMeasure):
        return mutual_energy(nu, nu, p)
    ep = mutual_energy(nu.plus, nu.plus, p)
    em = mutual_energy(nu.minus, nu.minus, p)
    if nu.plus.total_mass == 0.0 or nu.minus.total_mass == 0.0:
        return ep + em
    return ep + em - 2.0 * mutual_energy(nu.plus, nu.minus, p)


def energy_green(mu: DiscreteMeasure, domain, p: KernelParams = KernelParams(), resolution="medium",
                 G: Optional[np.ndarray] = None) -> float:
    """Green energy, from the closed-form or swept Green matrix over the measure's cloud."""
    if np.any(~domain.contains(mu.cloud.points[mu.weights > 0])):
        raise ValueError("the Green energy needs a measure carried by D")
    if G is None:
        G = green_matrix(mu.cloud, domain, p, resolution)
    return float(mu.weights @ G @ mu.weights)


def undefined_in_limit_flag(e_plus: Sequence[float], e_minus: Sequence[float], e_weak: Sequence[float],
                            growth: float = 0.1, stable: float = 0.05) -> bool:
    """Trend flag over refinement levels: both self energies keep growing while the weak energy settles."""
    if min(len(e_plus), len(e_minus), len(e_weak)) < 3:
        return False
    grow = all(b > (1.0 + growth) * a for s in (e_plus, e_minus) for a, b in zip(s, s[1:]))
    settle = abs(e_weak[-1] - e_weak[-2]) <= stable * abs(e_weak[-1])
    return bool(grow and settle)


# ---------------------------------------------------------------------------
# weak energy quadrature
# ---------------------------------------------------------------------------


def _parts(nu) -> list:
    if isinstance(nu, DiscreteMeasure):
        nu = SignedDiscreteMeasure.positive(nu)
    parts = []
    for sign, m in ((1.0, nu.plus), (-1.0, nu.minus)):
        if m.total_mass == 0.0:
            continue
        if m.atomic:
            raise ValueError("weak energy of point charges is infinite: the squared half-potential of an atom "
                             "is not integrable; pass a density (cell) representation")
        keep = m.weights > 0
        parts.append((m.cloud.subset(keep), sign * m.weights[keep]))
    return parts


def _sheets(parts) -> list:
    """(axis, coordinate) of every axis-aligned source sheet."""
    out = []
    for cloud, _ in parts:
        if cloud.dim != 2:
            continue
        ax = cloud.normal_axis
        if ax is None:
            continue
        for val in np.unique(np.round(cloud.points[:, ax], 12)):
            if (ax, val) not in out:
                out.append((ax, float(val)))
    return out


def _gauss(m: int):
    x, w = np.polynomial.legendre.leggauss(m)
    return 0.5 * (x + 1.0), 0.5 * w


def _box_rule(lo, hi, m: int, graded_axis: Optional[int] = None, toward_lo: bool = True):
    """Tensor Gauss rule on boxes; along ``graded_axis`` the variable is t = v^2 measured from one face."""
    t, w = _gauss(m)
    nb = len(lo)
    pts, wts = [], []
    axes_t, axes_w = [], []
    for ax in range(3):
        L = hi[:, ax] - lo[:, ax]
        if ax == graded_axis:
            tt = t**2
            ww = 2.0 * t * w
            if toward_lo:
                x = lo[:, ax, None] + L[:, None] * tt[None, :]
            else:
                x = hi[:, ax, None] - L[:, None] * tt[None, :]
            axes_t.append(x)
            axes_w.append(L[:, None] * ww[None, :])
        else:
            axes_t.append(lo[:, ax, None] + L[:, None] * t[None, :])
            axes_w.append(L[:, None] * w[None, :])
    X = np.empty((nb, m, m, m, 3))
    X[..., 0] = axes_t[0][:, :, None, None]
    X[..., 1] = axes_t[1][:, None, :, None]
    X[..., 2] = axes_t[2][:, None, None, :]
    W = axes_w[0][:, :, None, None] * axes_w[1][:, None, :, None] * axes_w[2][:, None, None, :]
    pts.append(X.reshape(-1, 3))
    wts.append(W.reshape(-1))
    return pts[0], wts[0]


@dataclass
class WeakQuadrature:
    points: np.ndarray
    weights: np.ndarray
    R: float
    leaves: int


def weak_quadrature(parts, eta: float = 0.6, floor: float = 0.7, R: Optional[float] = None, m: int = 3,
                    max_points: int = 3_000_000) -> WeakQuadrature:
    """Octree over a cube around the sources, graded by distance to the nearest source node."""
    allpts = np.vstack([c.points for c, _ in parts])
    allh = np.concatenate([c.spacing for c, _ in parts])
    center = 0.5 * (allpts.min(axis=0) + allpts.max(axis=0))
    reach = float(np.max(np.linalg.norm(allpts - center, axis=1)))
    if R is None:
        R = 64.0 * reach + 10.0
    tree = cKDTree(allpts)
    sheets = _sheets(parts)
    cen = center[None, :].copy()
    half = np.array([R])
    leaf_c, leaf_h = [], []
    while len(cen):
        d, j = tree.query(cen)
        gap = np.maximum(d - SQRT3 * half, 0.0)
        refine = (half > eta * gap) & (half > floor * allh[j])
        leaf_c.append(cen[~refine])
        leaf_h.append(half[~refine])
        c, h = cen[refine], half[refine] / 2.0
        if len(c) == 0:
            break
        off = np.array([[i, k, l] for i in (-1, 1) for k in (-1, 1) for l in (-1, 1)], dtype=float)
        cen = (c[:, None, :] + h[:, None, None] * off[None, :, :]).reshape(-1, 3)
        half = np.repeat(h, 8)
        if len(cen) * m**3 > max_points:
            raise MemoryError("weak-energy octree exceeds its point budget; coarsen the quadrature")
    C = np.vstack(leaf_c)
    H = np.concatenate(leaf_h)
    lo = C - H[:, None]
    hi = C + H[:, None]
    P, W = [], []
    cut = np.zeros(len(C), bool)
    for ax, val in sheets:
        tol = 1e-9 * H
        hit = (lo[:, ax] < val - tol) & (hi[:, ax] > val + tol) & ~cut
        if not np.any(hit):
            continue
        cut |= hit
        l1, h1 = lo[hit].copy(), hi[hit].copy()
        h1[:, ax] = val
        x, w = _box_rule(l1, h1, m, ax, toward_lo=False)
        P.append(x)
        W.append(w)
        l2, h2 = lo[hit].copy(), hi[hit].copy()
        l2[:, ax] = val
        x, w = _box_rule(l2, h2, m, ax, toward_lo=True)
        P.append(x)
        W.append(w)
    # leaves with a face on a sheet: grade toward that face
    for ax, val in sheets:
        for face, toward_lo in ((lo, True), (hi, False)):
            on = ~cut & (np.abs(face[:, ax] - val) <= 1e-9 * H)
            if np.any(on):
                cut |= on
                x, w = _box_rule(lo[on], hi[on], m, ax, toward_lo)
                P.append(x)
                W.append(w)
    x, w = _box_rule(lo[~cut], hi[~cut], m)
    P.append(x)
    W.append(w)
    return WeakQuadrature(np.vstack(P), np.concatenate(W), R, len(C))


def half_potential(parts, X, p: KernelParams, near_factor: float = WEAK_NEAR_FACTOR) -> np.ndarray:
    beta = p.n - p.alpha / 2.0
    U = np.zeros(len(X))
    for cloud, w in parts:
        U += cell_potential(cloud, w, X, beta, near_factor)
    return U


def weak_tail_bound(parts, R: float, center, p: KernelParams) -> float:
    """Bound on the neglected integral beyond the inscribed ball of the quadrature cube.

    |kappa_{alpha/2} nu(x)| <= |nu| (|x| - r0)^(alpha/2 - n) for sources within r0
    of the centre, which integrates to the closed form below.
    """
    tv = sum(float(np.sum(np.abs(w))) for _, w in parts)
    allpts = np.vstack([c.points for c, _ in parts])
    r0 = float(np.max(np.linalg.norm(allpts - center, axis=1)))
    if R <= r0:
        return math.inf
    n, a = p.n, p.alpha
    s_n = 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)
    geom = (R / (R - r0)) ** (n - 1)
    return tv**2 * s_n * geom * (R - r0) ** (a - n) / (n - a) / composition_constant(n, a)


def energy_weak(nu, p: KernelParams = KernelParams(), resolution="medium", R: Optional[float] = None,
                m: int = 3, tail_target: float = 0.01):
    """(weak energy, tail bound) of a density-represented measure.

    The quadrature cube grows (R doubled) until the tail bound is below
    ``tail_target`` times the computed value.
    """
    parts = _parts(nu)
    if not parts:
        return 0.0, 0.0
    res = get_resolution(resolution)
    c = composition_constant(p.n, p.alpha)
    while True:
        q = weak_quadrature(parts, res.weak_eta, res.weak_floor, R, m)
        U = half_potential(parts, q.points, p)
        val = math.fsum(q.weights * U * U) / c
        allpts = np.vstack([cl.points for cl, _ in parts])
        center = 0.5 * (allpts.min(axis=0) + allpts.max(axis=0))
        tail = weak_tail_bound(parts, q.R, center, p)
        if tail <= tail_target * val or q.R > 1e7:
            return val, tail
        R = 2.0 * q.R


def energy_report(nu: SignedDiscreteMeasure, domain=None, p: KernelParams = KernelParams(),
                  resolution="medium", G=None) -> EnergyReport:
    e_std = energy_standard(nu, p)
    e_g = math.nan
    if domain is not None and nu.minus.total_mass == 0.0:
        e_g = energy_green(nu.plus, domain, p, resolution, G)
    e_w, tail = energy_weak(nu, p, resolution)
    return EnergyReport(e_std, e_g, e_w, tail)


# ---------------------------------------------------------------------------
# checks
# ---------------------------------------------------------------------------


@dataclass
class SeparationReport:
    e_plus: float
    e_minus: float
    mutual: float
    mutual_bound: float
    e_standard: float
    e_weak: float
    tail_bound: float

    @property
    def relative_difference(self) -> float:
        return abs(self.e_standard - self.e_weak) / max(abs(self.e_weak), 1e-300)


def separation_equivalence_check(nu: SignedDiscreteMeasure, condenser, p: KernelParams = KernelParams(),
                                 resolution="medium", weak: bool = True) -> SeparationReport:
    """Finite part energies, the mutual-energy bound by the plate gap, and standard vs weak energy."""
    if not condenser.separation > 0:
        raise ValueError("the check needs plates at positive distance")
    ep = energy_standard(nu.plus, p)
    em = energy_standard(nu.minus, p)
    mut = mutual_energy(nu.plus, nu.minus, p)
    gap = float(np.min(cross_dist(nu.plus.cloud, nu.minus.cloud)))
    bound = gap**p.exponent * nu.plus.total_mass * nu.minus.total_mass
    ew, tail = energy_weak(nu, p, resolution) if weak else (math.nan, math.nan)
    return SeparationReport(ep, em, mut, bound, ep + em - 2.0 * mut, ew, tail)


def cross_dist(a: PointCloud, b: PointCloud) -> np.ndarray:
    d, _ = cKDTree(b.points).query(a.points)
    return d


@dataclass
class TruncationReport:
    windows: list
    green_norms: list
    masses: list

    @property
    def decreasing(self) -> bool:
        return all(b <= a * (1.0 + 1e-12) + 1e-15 for a, b in zip(self.green_norms, self.green_norms[1:]))

    @property
    def masses_increasing(self) -> bool:
        return all(b >= a - 1e-15 for a, b in zip(self.masses, self.masses[1:]))


def truncation_convergence_check(mu: DiscreteMeasure, domain, windows: Sequence[float],
                                 p: KernelParams = KernelParams(), resolution="medium",
                                 G=None) -> TruncationReport:
    """||mu_j - mu||_g and mu_j mass for mu_j = mu restricted to {dist to the boundary of D >= t_j}.

    ``windows`` lists the distances t_j (decreasing, so the windows grow).
    """
    if G is None:
        G = green_matrix(mu.cloud, domain, p, resolution)
    dist = domain.distance_to_boundary(mu.cloud.points)
    norms, masses = [], []
    for t in windows:
        outside = np.where(dist >= t, 0.0, mu.weights)
        norms.append(math.sqrt(max(float(outside @ G @ outside), 0.0)))
        masses.append(float(math.fsum(np.where(dist >= t, mu.weights, 0.0))))
    return TruncationReport(list(windows), norms, masses)


__all__ = [
    "EnergyReport", "mutual_energy", "energy_standard", "energy_green", "energy_weak", "energy_report",
    "separation_equivalence_check", "truncation_convergence_check", "undefined_in_limit_flag",
    "weak_quadrature", "half_potential", "weak_tail_bound",
]
