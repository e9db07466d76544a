"""Riesz kernels, the half-space Green kernel and dense kernel matrices.

A quadrature node is treated as a small cell (a disc or a ball of radius
``h_i``).  Off-diagonal matrix entries are plain point evaluations; the
diagonal is the mean of the kernel over the node's own cell, which for a
d-dimensional cell and kernel r^-beta equals d/(d - beta) h^-beta.

Near-field potentials at arbitrary points are averaged over the source cells
(:func:`cell_potential`), which keeps evaluations next to a carrier finite.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist
from scipy.special import gamma

from .geometry import BallExterior, BallInterior, HalfSpace, KernelParams, PointCloud

MEMORY_LIMIT_BYTES = 2.5e9
_CHUNK = 4096


class SingularEvaluation(ValueError):
    """Raised when a kernel is evaluated on the diagonal x = y."""


def _distance(x, y) -> np.ndarray:
    d = np.linalg.norm(np.asarray(x, float) - np.asarray(y, float), axis=-1)
    if np.any(d == 0.0):
        raise SingularEvaluation("kernel evaluated at x = y; use the diagonal policy")
    return d


def riesz_kernel(x, y, p: KernelParams = KernelParams()):
    """|x - y|^(alpha - n); broadcasts over leading axes."""
    return _distance(x, y) ** p.exponent


def half_kernel(x, y, p: KernelParams = KernelParams()):
    """|x - y|^(alpha/2 - n), the kernel of order alpha/2."""
    return _distance(x, y) ** p.half_exponent


def green_halfspace(x, y):
    """Newtonian Green kernel of {x_1 > 0}: 1/|x - y| - 1/|x - y*| with y* the mirror image."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if np.any(x[..., 0] <= 0.0) or np.any(y[..., 0] <= 0.0):
        raise ValueError("both arguments must lie in the open half-space x_1 > 0")
    yr = y.copy()
    yr[..., 0] *= -1.0
    return 1.0 / _distance(x, y) - 1.0 / np.linalg.norm(x - yr, axis=-1)


def composition_constant(n: int, alpha: float) -> float:
    """c with  int |x-y|^(a/2-n) |x-z|^(a/2-n) dx = c |y-z|^(a-n)  (Riesz composition)."""
    a = alpha / 2.0
    return (math.pi ** (n / 2.0) * gamma(a / 2.0) ** 2 * gamma((n - alpha) / 2.0)
            / (gamma((n - a) / 2.0) ** 2 * gamma(alpha / 2.0)))


def self_term(h, dim: int, beta: float):
    """Mean of r^-beta over a ``dim``-ball of radius h about its centre."""
    if dim - beta <= 0:
        raise ValueError(f"kernel r^-{beta} is not integrable over a {dim}-dimensional cell")
    return dim / (dim - beta) * np.asarray(h, float) ** (-beta)


# ---------------------------------------------------------------------------
# cell means for the near field
# ---------------------------------------------------------------------------


_TABLE_GRADING = 6


@lru_cache(maxsize=16)
def _ball_mean_table(beta: float):
    """Splines of P(u) = mean over the unit ball of |u e - y|^-beta.

    P has a cusp like |1 - u|^(3 - beta) at the cell boundary, so the splines
    are built in graded variables v with |1 - u| = v^6 (inside) and
    u - 1 = 7 v^6 (outside), where the cusp becomes smooth.
    """
    def integrand(s, u):
        if u == 0.0:
            return 2.0 * s ** (2.0 - beta)
        if abs(beta - 2.0) < 1e-12:
            return s / u * math.log((u + s) / abs(u - s)) if s != u else 0.0
        gap = abs(u - s) ** (2.0 - beta) if s != u else 0.0
        return s * ((u + s) ** (2.0 - beta) - gap) / ((2.0 - beta) * u)

    def P(u):
        pts = [u] if 0.0 < u < 1.0 else None
        val, _ = quad(integrand, 0.0, 1.0, args=(u,), points=pts, limit=400, epsabs=1e-14, epsrel=1e-12)
        return 1.5 * val

    v = np.linspace(0.0, 1.0, 241)
    m = _TABLE_GRADING
    inner = CubicSpline(v, [P(1.0 - t**m) for t in v])
    outer = CubicSpline(v, [P(1.0 + 7.0 * t**m) for t in v])
    return inner, outer


def ball_cell_mean(beta: float, t, h):
    """Mean of |x - y|^-beta over a ball of radius h whose centre is at distance t from x."""
    t = np.asarray(t, float)
    h = np.broadcast_to(np.asarray(h, float), t.shape)
    u = t / h
    out = np.empty_like(t)
    if beta == 1.0:
        inside = u < 1.0
        out[inside] = (3.0 * h[inside] ** 2 - t[inside] ** 2) / (2.0 * h[inside] ** 3)
        out[~inside] = 1.0 / t[~inside]
        return out
    far = u >= 8.0
    uf = u[far]
    c1 = beta * (beta - 1.0) / 10.0
    c2 = beta * (beta - 1.0) * (beta + 1.0) * (beta + 2.0) / 280.0
    out[far] = t[far] ** (-beta) * (1.0 + c1 / uf**2 + c2 / uf**4)
    near = ~far
    if np.any(near):
        if beta == 2.0:
            un = u[near]
            with np.errstate(divide="ignore", invalid="ignore"):
                val = 1.5 / un * (un + 0.5 * (1.0 - un**2) * np.log((un + 1.0) / np.abs(un - 1.0)))
            val = np.where(un < 1e-6, 3.0, val)
            val = np.where(np.abs(un - 1.0) < 1e-12, 1.5, val)
        else:
            s1, s2 = _ball_mean_table(float(beta))
            un = u[near]
            m = _TABLE_GRADING
            vin = np.clip(1.0 - un, 0.0, 1.0) ** (1.0 / m)
            vout = np.clip((un - 1.0) / 7.0, 0.0, 1.0) ** (1.0 / m)
            val = np.where(un <= 1.0, s1(vin), s2(vout))
        out[near] = val * h[near] ** (-beta)
    return out


_GL32 = np.polynomial.legendre.leggauss(32)
_TRAP = 64


def _radial_antiderivative(beta: float, d2, s):
    if beta == 2.0:
        return 0.5 * np.log(d2 + s * s)
    return (d2 + s * s) ** (1.0 - beta / 2.0) / (2.0 - beta)


def disc_cell_mean(beta: float, d, rho0, h):
    """Mean of |x - y|^-beta over a flat disc of radius h.

    ``d`` is the distance from x to the disc's plane and ``rho0`` the in-plane
    distance from the foot of x to the disc centre.  The radial integral is
    done in closed form around the foot point; the angular one by periodic
    trapezoid (foot inside) or Gauss-Legendre over the tangent cone.
    """
    d = np.abs(np.asarray(d, float))
    rho0 = np.asarray(rho0, float)
    h = np.broadcast_to(np.asarray(h, float), d.shape).astype(float)
    out = np.empty_like(d)
    if beta == 2.0:
        d2 = d * d
        b = d2 - rho0**2
        c = d2 + rho0**2
        S = np.sqrt(h**4 + 2.0 * b * h**2 + c * c)
        with np.errstate(divide="ignore", invalid="ignore"):
            inner = np.log((h**2 + b + S) / (2.0 * d2))
            outer = np.log(2.0 * rho0**2 / (S - h**2 - b))
        val = np.where(rho0 > h, outer, inner)
        return val / h**2
    inside = rho0 <= h
    if np.any(inside):
        phi = 2.0 * np.pi * np.arange(_TRAP) / _TRAP
        r0 = rho0[inside][:, None]
        hh = h[inside][:, None]
        s2 = r0 * np.cos(phi) + np.sqrt(np.maximum(hh**2 - (r0 * np.sin(phi)) ** 2, 0.0))
        dd = (d[inside] ** 2)[:, None]
        with np.errstate(divide="ignore"):
            F = _radial_antiderivative(beta, dd, s2) - _radial_antiderivative(beta, dd, 0.0)
        out[inside] = F.mean(axis=1) * 2.0 * np.pi / (np.pi * h[inside] ** 2)
    if np.any(~inside):
        x, w = _GL32
        r0 = rho0[~inside][:, None]
        hh = h[~inside][:, None]
        pm = np.arcsin(hh / r0)
        th = 0.5 * np.pi * x[None, :]
        phi = pm * np.sin(th)
        jac = pm * np.cos(th) * 0.5 * np.pi
        root = np.sqrt(np.maximum(hh**2 - (r0 * np.sin(phi)) ** 2, 0.0))
        s1 = r0 * np.cos(phi) - root
        s2 = r0 * np.cos(phi) + root
        dd = (d[~inside] ** 2)[:, None]
        F = _radial_antiderivative(beta, dd, s2) - _radial_antiderivative(beta, dd, s1)
        out[~inside] = (F * jac * w[None, :]).sum(axis=1) / (np.pi * h[~inside] ** 2)
    return out


def _cell_mean_pairs(cloud: PointCloud, j: np.ndarray, X: np.ndarray, beta: float) -> np.ndarray:
    """Cell mean of r^-beta for source cells ``j`` seen from points ``X`` (paired)."""
    diff = X - cloud.points[j]
    h = cloud.spacing[j]
    if cloud.dim == 3:
        return ball_cell_mean(beta, np.linalg.norm(diff, axis=1), h)
    nrm = cloud.normals[j]
    dn = np.einsum("ij,ij->i", diff, nrm)
    rho0 = np.linalg.norm(diff - dn[:, None] * nrm, axis=1)
    return disc_cell_mean(beta, dn, rho0, h)


def cell_potential(cloud: PointCloud, weights, X, beta: float, near_factor: float = 6.0,
                   point_only: bool = False) -> np.ndarray:
    """sum_j w_j * mean over cell j of |x - y|^-beta at each row of X.

    Pairs closer than ``near_factor * h_j`` use the exact cell mean; the rest
    use the point kernel (the cell-mean correction there is below 1%
    of the near-field scale and decays like (h/r)^2).
    """
    X = np.atleast_2d(np.asarray(X, float))
    w = np.asarray(weights, float)
    nz = w != 0.0
    Y = cloud.points[nz]
    wn = w[nz]
    out = np.zeros(len(X))
    if len(Y) == 0:
        return out
    for s in range(0, len(X), _CHUNK):
        K = cdist(X[s:s + _CHUNK], Y, "sqeuclidean")
        zero = K == 0.0
        K[zero] = 1.0
        if beta == 2.0:
            np.reciprocal(K, out=K)
        elif beta == 1.0:
            np.sqrt(K, out=K)
            np.reciprocal(K, out=K)
        else:
            np.power(K, -beta / 2.0, out=K)
        K[zero] = 0.0
        out[s:s + _CHUNK] = K @ wn
    if point_only:
        return out
    idx_nz = np.flatnonzero(nz)
    tree = cKDTree(X)
    lists = tree.query_ball_point(cloud.points[idx_nz], near_factor * cloud.spacing[idx_nz])
    counts = np.fromiter((len(l) for l in lists), dtype=np.int64, count=len(lists))
    if counts.sum() == 0:
        return out
    src = np.repeat(idx_nz, counts)
    tgt = np.concatenate([np.asarray(l, dtype=np.int64) for l in lists if len(l)])
    dist = np.linalg.norm(X[tgt] - cloud.points[src], axis=1)
    with np.errstate(divide="ignore"):
        point = np.where(dist > 0.0, dist ** (-beta), 0.0)
    mean = np.empty_like(dist)
    step = 200000
    for s in range(0, len(src), step):
        mean[s:s + step] = _cell_mean_pairs(cloud, src[s:s + step], X[tgt[s:s + step]], beta)
    out += np.bincount(tgt, weights=w[src] * (mean - point), minlength=len(X))
    return out


# ---------------------------------------------------------------------------
# matrices
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class KernelMatrixSet:
    """Dense kernel matrices over one node set."""

    K_alpha: np.ndarray
    K_green: Optional[np.ndarray] = None
    diag_policy: dict = field(default_factory=dict)


def check_memory(n_rows: int, n_cols: int, copies: int = 1, limit: float = MEMORY_LIMIT_BYTES):
    need = 8.0 * n_rows * n_cols * copies
    if need > limit:
        raise MemoryError(f"dense {n_rows}x{n_cols} kernel matrices need {need / 1e9:.2f} GB "
                          f"(limit {limit / 1e9:.2f} GB)")


def kernel_matrix(X, Y, exponent: float) -> np.ndarray:
    """|x_i - y_j|^exponent; coincident pairs raise."""
    X = np.atleast_2d(np.asarray(X, float))
    Y = np.atleast_2d(np.asarray(Y, float))
    check_memory(len(X), len(Y))
    D = cdist(X, Y)
    if np.any(D == 0.0):
        raise SingularEvaluation("coincident nodes in an off-diagonal block")
    if exponent == -1.0:
        return 1.0 / D
    return D**exponent


def riesz_matrix(cloud: PointCloud, p: KernelParams, mode: str = "cell") -> np.ndarray:
    """Symmetric kappa_alpha matrix; ``mode='atomic'`` zeroes the diagonal."""
    n = len(cloud)
    check_memory(n, n)
    D = cdist(cloud.points, cloud.points)
    np.fill_diagonal(D, 1.0)
    K = 1.0 / D if p.exponent == -1.0 else D**p.exponent
    if mode == "cell":
        np.fill_diagonal(K, self_term(cloud.spacing, cloud.dim, -p.exponent))
    elif mode == "atomic":
        np.fill_diagonal(K, 0.0)
    else:
        raise ValueError("mode must be 'cell' or 'atomic'")
    return K


def cross_matrix(targets: PointCloud, sources: PointCloud, p: KernelParams) -> np.ndarray:
    """kappa_alpha between two clouds; a target coinciding with a source gets the source's self term."""
    X, Y = targets.points, sources.points
    check_memory(len(X), len(Y))
    D = cdist(X, Y)
    zero = D == 0.0
    D[zero] = 1.0
    K = 1.0 / D if p.exponent == -1.0 else D**p.exponent
    if np.any(zero):
        ii, jj = np.nonzero(zero)
        K[ii, jj] = self_term(sources.spacing[jj], sources.dim, -p.exponent)
    return K


def _image_cell_mean(cloud: PointCloud) -> np.ndarray:
    """Mean of 1/|x_i - y| over the mirror image of cell i (mirror in x_1 = 0)."""
    X = cloud.points
    Xr = X.copy()
    Xr[:, 0] *= -1.0
    t = np.abs(2.0 * X[:, 0])
    if cloud.dim == 3:
        return ball_cell_mean(1.0, t, cloud.spacing)
    nr = cloud.normals.copy()
    nr[:, 0] *= -1.0
    diff = X - Xr
    dn = np.einsum("ij,ij->i", diff, nr)
    rho0 = np.linalg.norm(diff - dn[:, None] * nr, axis=1)
    return disc_cell_mean(1.0, dn, rho0, cloud.spacing)


def green_halfspace_matrix(cloud: PointCloud, mode: str = "cell") -> np.ndarray:
    """Analytic Newtonian Green matrix of {x_1 > 0} over a cloud inside it."""
    if np.any(cloud.points[:, 0] <= 0.0):
        raise ValueError("Green matrix nodes must lie in x_1 > 0")
    p = KernelParams(3, 2.0)
    K = riesz_matrix(cloud, p, mode)
    Xr = cloud.points.copy()
    Xr[:, 0] *= -1.0
    img = 1.0 / cdist(cloud.points, Xr)
    if mode == "cell":
        np.fill_diagonal(img, _image_cell_mean(cloud))
    else:
        np.fill_diagonal(img, 0.0)
    G = K - img
    return 0.5 * (G + G.T)


def green_ball_matrix(cloud: PointCloud, domain) -> np.ndarray:
    """Newtonian Green matrix of a ball interior or exterior by the Kelvin image.

    g(x, y) = 1/|x - y| - (a/|y - c|) / |x - y*| with y* the inversion of y in
    the sphere.  Plates must keep a positive distance from the sphere; the
    image term is smooth there and is evaluated pointwise.
    """
    if not isinstance(domain, (BallInterior, BallExterior)):
        raise TypeError("the Kelvin image needs a ball domain")
    if np.any(~domain.contains(cloud.points)):
        raise ValueError("Green matrix nodes must lie in D")
    c = np.asarray(domain.center, float)
    a = domain.radius
    Y = cloud.points - c
    ry = np.linalg.norm(Y, axis=1)
    ok = ry > 0
    img = np.full((len(Y), len(Y)), 1.0 / a)   # the centre's image sits at infinity
    Ys = (a * a / ry[ok] ** 2)[:, None] * Y[ok]
    img[:, ok] = (a / ry[ok])[None, :] / cdist(Y, Ys)
    G = riesz_matrix(cloud, KernelParams(3, 2.0)) - img
    return 0.5 * (G + G.T)


def green_matrix(cloud: PointCloud, domain, p: KernelParams, resolution="medium", A2=None,
                 force_numeric: bool = False) -> np.ndarray:
    """Green matrix over ``cloud``: analytic for the Newtonian half-space, else by balayage."""
    if isinstance(domain, HalfSpace) and p.newtonian and not force_numeric:
        return green_halfspace_matrix(cloud)
    from .balayage import green_matrix_numeric

    return green_matrix_numeric(cloud, domain, p, resolution, A2)


def assemble_matrices(nodes: PointCloud, p: KernelParams = KernelParams(), domain=None,
                      mode: str = "cell", resolution="medium") -> KernelMatrixSet:
    """Kernel (and, given a domain, Green) matrices over one node set."""
    n = len(nodes)
    check_memory(n, n, 2 if domain is not None else 1)
    K = riesz_matrix(nodes, p, mode)
    policy = {
        "mode": mode,
        "self_term": "mean of kernel over the node's own cell" if mode == "cell" else "zero (atoms)",
        "formula": "d/(d + alpha - n) * h^(alpha - n)" if mode == "cell" else "0",
        "carrier_dim": nodes.dim,
    }
    G = None
    if domain is not None:
        if np.any(~domain.contains(nodes.points)):
            raise ValueError("Green matrix requested for nodes outside D")
        if mode == "atomic":
            if not (isinstance(domain, HalfSpace) and p.newtonian):
                raise ValueError("atomic Green matrices are only available in closed form")
            G = green_halfspace_matrix(nodes, "atomic")
        else:
            G = green_matrix(nodes, domain, p, resolution)
        policy["green"] = ("closed form (mirror image) with image cell mean on the diagonal"
                           if isinstance(domain, HalfSpace) and p.newtonian else "kernel minus swept potential")
    return KernelMatrixSet(K, G, policy)


def green_numeric(x, y, domain, p: KernelParams = KernelParams(), resolution="medium"):
    """g(x, y) = kappa(x, y) - kappa eps_y'(x) with the Dirac at y swept numerically."""
    from .balayage import swept_dirac

    x = np.atleast_2d(np.asarray(x, float))
    if np.any(~domain.contains(x)) or not domain.contains(np.asarray(y, float)):
        raise ValueError("both arguments of the Green kernel must lie in D")
    res = swept_dirac(tuple(float(v) for v in np.asarray(y, float)), domain, p, resolution)
    beta = -p.exponent
    pot = cell_potential(res.swept.cloud, res.swept.weights, x, beta)
    val = riesz_kernel(x, np.asarray(y, float)[None, :], p) - pot
    return val if val.size > 1 else float(val[0])


def potential(cloud: PointCloud, weights, X, p: KernelParams, cells: bool = True) -> np.ndarray:
    """kappa_alpha potential of a discrete measure at arbitrary points."""
    return cell_potential(cloud, weights, X, -p.exponent, point_only=not cells)
