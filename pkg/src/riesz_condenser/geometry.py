"""Point-cloud carriers for measures, the domains D and their complements.

Every carrier is a :class:`PointCloud`: nodes with a quadrature weight ``q_i``
(area or volume of the node's cell) and a local spacing ``h_i``, the radius of
a ``dim``-dimensional ball of measure ``q_i``.  The kernel module uses ``h_i``
for its singular self-interaction term, so the two must stay consistent.

All constructors are deterministic (golden-angle / Fibonacci layouts); no
random numbers are drawn anywhere in this module.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.spatial import cKDTree

from .config import Resolution, get_resolution

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


def unit_ball_measure(d: int) -> float:
    """Lebesgue measure of the unit ball in R^d."""
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


@dataclass(frozen=True)
class KernelParams:
    """Space dimension ``n`` and Riesz order ``alpha`` with 0 < alpha <= 2 < n."""

    n: int = 3
    alpha: float = 2.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 3:
            raise ValueError(f"n must be an integer >= 3, got {self.n}")
        if not (0.0 < float(self.alpha) <= 2.0):
            raise ValueError(f"alpha must lie in (0, 2], got {self.alpha}")

    @property
    def newtonian(self) -> bool:
        return self.n == 3 and self.alpha == 2.0

    @property
    def exponent(self) -> float:
        """Power of |x - y| in the alpha-Riesz kernel (negative)."""
        return self.alpha - self.n

    @property
    def half_exponent(self) -> float:
        return self.alpha / 2.0 - self.n


# ---------------------------------------------------------------------------
# clouds and measures
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Quadrature carrier.

    ``dim`` is the dimension of the carrier (3 for volume cells, 2 for flat or
    spherical surface cells).  Surface clouds carry unit ``normals``.
    ``boundary_distance`` is the distance of each node to the relative boundary
    of the plate it discretizes (disc rim, sphere of a solid ball); it is used
    to exclude edge-adjacent nodes from pointwise potential assertions.
    """

    points: np.ndarray
    spacing: np.ndarray
    quad_weight: np.ndarray
    dim: int = 3
    normals: Optional[np.ndarray] = None
    boundary_distance: Optional[np.ndarray] = None
    label: str = ""

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError("points must have shape (N, 3)")
        h = np.ascontiguousarray(self.spacing, dtype=float).reshape(-1)
        q = np.ascontiguousarray(self.quad_weight, dtype=float).reshape(-1)
        if len(h) != len(pts) or len(q) != len(pts):
            raise ValueError("spacing and quad_weight must match the node count")
        if not np.all(np.isfinite(pts)):
            raise ValueError("non-finite node coordinates")
        if np.any(h <= 0) or np.any(q <= 0):
            raise ValueError("spacing and quadrature weights must be positive")
        if self.dim not in (2, 3):
            raise ValueError("carrier dimension must be 2 or 3")
        if self.dim == 2:
            if self.normals is None:
                raise ValueError("surface clouds need normals")
            nrm = np.ascontiguousarray(self.normals, dtype=float).reshape(len(pts), 3)
            nrm = nrm / np.linalg.norm(nrm, axis=1, keepdims=True)
            object.__setattr__(self, "normals", nrm)
        if len(pts) > 1:
            d, _ = cKDTree(pts).query(pts, k=2)
            if np.min(d[:, 1]) <= 0.0:
                raise ValueError("cloud nodes must be pairwise distinct")
        if self.boundary_distance is not None:
            bd = np.asarray(self.boundary_distance, dtype=float).reshape(-1)
            object.__setattr__(self, "boundary_distance", bd)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "spacing", h)
        object.__setattr__(self, "quad_weight", q)

    @classmethod
    def from_weights(cls, points, quad_weight, dim=3, normals=None, boundary_distance=None, label=""):
        """Build a cloud whose spacing is the radius of the equal-measure ``dim``-ball."""
        q = np.asarray(quad_weight, dtype=float)
        h = (q / unit_ball_measure(dim)) ** (1.0 / dim)
        return cls(np.asarray(points, float), h, q, dim, normals, boundary_distance, label)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def total_measure(self) -> float:
        return float(np.sum(self.quad_weight))

    @property
    def normal_axis(self) -> Optional[int]:
        """Coordinate axis shared by all normals, or None (volume / curved)."""
        if self.dim != 2:
            return None
        ax = np.argmax(np.abs(self.normals), axis=1)
        if np.all(ax == ax[0]) and np.allclose(np.abs(self.normals[:, ax[0]]), 1.0):
            return int(ax[0])
        return None

    def scaled(self, r: float, about=(0.0, 0.0, 0.0)) -> "PointCloud":
        """Homothety x -> about + r (x - about)."""
        c = np.asarray(about, float)
        bd = None if self.boundary_distance is None else self.boundary_distance * r
        return PointCloud(c + r * (self.points - c), self.spacing * r, self.quad_weight * r**self.dim,
                          self.dim, self.normals, bd, self.label)

    def translated(self, v) -> "PointCloud":
        return PointCloud(self.points + np.asarray(v, float), self.spacing, self.quad_weight,
                          self.dim, self.normals, self.boundary_distance, self.label)

    def subset(self, mask) -> "PointCloud":
        m = np.asarray(mask)
        return PointCloud(self.points[m], self.spacing[m], self.quad_weight[m], self.dim,
                          None if self.normals is None else self.normals[m],
                          None if self.boundary_distance is None else self.boundary_distance[m],
                          self.label)

    def edge_mask(self, factor: float = 1.0) -> np.ndarray:
        """Nodes within ``factor`` local spacings of the plate's relative boundary."""
        if self.boundary_distance is None:
            return np.zeros(len(self), dtype=bool)
        return self.boundary_distance < factor * self.spacing


def concat_clouds(clouds: Sequence[PointCloud], label: str = "") -> PointCloud:
    """Union of clouds of the same carrier dimension."""
    dims = {c.dim for c in clouds}
    if len(dims) != 1:
        raise ValueError("cannot concatenate clouds of different carrier dimensions")
    dim = dims.pop()
    normals = np.vstack([c.normals for c in clouds]) if dim == 2 else None
    if all(c.boundary_distance is not None for c in clouds):
        bd = np.concatenate([c.boundary_distance for c in clouds])
    else:
        bd = None
    return PointCloud(np.vstack([c.points for c in clouds]),
                      np.concatenate([c.spacing for c in clouds]),
                      np.concatenate([c.quad_weight for c in clouds]), dim, normals, bd, label)


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Nonnegative weights on the nodes of a cloud.

    ``atomic=True`` marks genuine point charges (not quadrature cells); such
    measures have no finite weak energy and are rejected there.
    """

    cloud: PointCloud
    weights: np.ndarray
    atomic: bool = False

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=float).reshape(-1)
        if len(w) != len(self.cloud):
            raise ValueError("one weight per node is required")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        if np.any(w < 0):
            raise ValueError("weights of a positive measure must be >= 0")
        object.__setattr__(self, "weights", w)

    @property
    def total_mass(self) -> float:
        return float(math.fsum(self.weights))

    def scaled(self, a: float) -> "DiscreteMeasure":
        return DiscreteMeasure(self.cloud, a * self.weights, self.atomic)

    @classmethod
    def from_density(cls, cloud: PointCloud, density) -> "DiscreteMeasure":
        dens = np.broadcast_to(np.asarray(density, float), (len(cloud),))
        return cls(cloud, dens * cloud.quad_weight)

    @classmethod
    def atoms(cls, points, masses) -> "DiscreteMeasure":
        """Point charges; spacing is a nominal placeholder never used as a cell."""
        pts = np.atleast_2d(np.asarray(points, float))
        tiny = np.full(len(pts), 1e-12)
        cloud = PointCloud(pts, tiny, tiny, 3, label="atoms")
        return cls(cloud, masses, atomic=True)

    @classmethod
    def zero(cls, cloud: PointCloud) -> "DiscreteMeasure":
        return cls(cloud, np.zeros(len(cloud)))


@dataclass(frozen=True, eq=False)
class SignedDiscreteMeasure:
    """Hahn-Jordan pair ``plus - minus``; the two node sets must be disjoint."""

    plus: DiscreteMeasure
    minus: DiscreteMeasure

    def __post_init__(self):
        if len(self.plus.cloud) and len(self.minus.cloud):
            pp = self.plus.cloud.points[self.plus.weights > 0]
            mp = self.minus.cloud.points[self.minus.weights > 0]
            if len(pp) and len(mp):
                d, _ = cKDTree(mp).query(pp, k=1)
                if np.min(d) == 0.0:
                    raise ValueError("positive and negative parts share a node")

    @property
    def atomic(self) -> bool:
        return self.plus.atomic or self.minus.atomic

    @property
    def net_mass(self) -> float:
        return self.plus.total_mass - self.minus.total_mass

    @property
    def total_variation(self) -> float:
        return self.plus.total_mass + self.minus.total_mass

    def stacked(self):
        """(points, spacing, signed weights) over both parts."""
        parts = [self.plus, self.minus]
        pts = np.vstack([p.cloud.points for p in parts])
        h = np.concatenate([p.cloud.spacing for p in parts])
        w = np.concatenate([self.plus.weights, -self.minus.weights])
        return pts, h, w

    def scaled(self, a: float) -> "SignedDiscreteMeasure":
        if a >= 0:
            return SignedDiscreteMeasure(self.plus.scaled(a), self.minus.scaled(a))
        return SignedDiscreteMeasure(self.minus.scaled(-a), self.plus.scaled(-a))

    def negated(self) -> "SignedDiscreteMeasure":
        return SignedDiscreteMeasure(self.minus, self.plus)

    @classmethod
    def positive(cls, mu: DiscreteMeasure) -> "SignedDiscreteMeasure":
        empty = DiscreteMeasure(mu.cloud, np.zeros(len(mu.cloud)), mu.atomic)
        return cls(mu, empty)


# ---------------------------------------------------------------------------
# domains
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HalfSpace:
    """D = {x_1 > 0} in R^3; D^c is truncated to |x| <= truncation_radius."""

    truncation_radius: float = 100.0
    name: str = field(default="half-space", init=False)

    def contains(self, x) -> np.ndarray:
        return np.asarray(x, float)[..., 0] > 0.0

    def distance_to_boundary(self, x) -> np.ndarray:
        return np.abs(np.asarray(x, float)[..., 0])

    def reflect(self, x) -> np.ndarray:
        y = np.array(x, dtype=float, copy=True)
        y[..., 0] *= -1.0
        return y

    @property
    def complement_compact(self) -> bool:
        return False

    def key(self):
        return ("half-space", float(self.truncation_radius))


@dataclass(frozen=True)
class BallInterior:
    """D = open ball; D^c is the closed exterior, truncated at the given radius."""

    center: tuple = (0.0, 0.0, 0.0)
    radius: float = 1.0
    truncation_radius: float = 20.0
    name: str = field(default="ball-interior", init=False)

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("ball radius must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    def contains(self, x) -> np.ndarray:
        return np.linalg.norm(np.asarray(x, float) - np.asarray(self.center), axis=-1) < self.radius

    def distance_to_boundary(self, x) -> np.ndarray:
        return np.abs(np.linalg.norm(np.asarray(x, float) - np.asarray(self.center), axis=-1) - self.radius)

    @property
    def complement_compact(self) -> bool:
        return False

    def key(self):
        return ("ball-interior", self.center, float(self.radius), float(self.truncation_radius))


@dataclass(frozen=True)
class BallExterior:
    """D = complement of a closed ball, so D^c is compact (thin at infinity)."""

    center: tuple = (0.0, 0.0, 0.0)
    radius: float = 1.0
    truncation_radius: float = math.inf
    name: str = field(default="ball-exterior", init=False)

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("ball radius must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    def contains(self, x) -> np.ndarray:
        return np.linalg.norm(np.asarray(x, float) - np.asarray(self.center), axis=-1) > self.radius

    def distance_to_boundary(self, x) -> np.ndarray:
        return np.abs(np.linalg.norm(np.asarray(x, float) - np.asarray(self.center), axis=-1) - self.radius)

    @property
    def complement_compact(self) -> bool:
        return True

    def key(self):
        return ("ball-exterior", self.center, float(self.radius))


Domain = Union[HalfSpace, BallInterior, BallExterior]


# ---------------------------------------------------------------------------
# shape descriptors and reduced kernels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiscShape:
    center: tuple
    radius: float
    normal_axis: int = 0


@dataclass(frozen=True)
class BallShape:
    center: tuple
    radius: float


@dataclass(frozen=True)
class HalfSpaceShape:
    """The closed half-space {x_1 <= 0}."""


@dataclass(frozen=True)
class RotationBodyShape:
    """{x : x_1 >= x0, |(x_2, x_3)| <= profile(x_1)}; profile given by name and exponent."""

    profile: str
    s: float
    x0: float = 1.0


@dataclass(frozen=True)
class ReducedKernel:
    """Outcome of :func:`reduced_kernel`: ``kind`` is 'self', 'empty' or 'unknown'."""

    kind: str
    shape: object = None
    reason: str = ""


def reduced_kernel(shape, p: KernelParams = KernelParams()) -> ReducedKernel:
    """Points of ``shape`` every neighbourhood of which meets it in positive capacity.

    Resolved symbolically for the named primitives only.  A flat disc in R^3
    has positive alpha-capacity exactly when its dimension 2 exceeds
    n - alpha, i.e. alpha > 1.
    """
    if isinstance(shape, (BallShape, HalfSpaceShape, RotationBodyShape)):
        return ReducedKernel("self", shape, "solid body: every point is a density point")
    if isinstance(shape, DiscShape):
        if 2 > p.n - p.alpha:
            return ReducedKernel("self", shape, "flat disc of dimension 2 > n - alpha")
        return ReducedKernel("empty", None, "flat disc has zero alpha-capacity when alpha <= n - 2")
    return ReducedKernel("unknown", None, f"no rule for {type(shape).__name__}")


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------

MIN_NODES = 16


def _plane_frame(normal_axis: int):
    if normal_axis not in (0, 1, 2):
        raise ValueError("normal_axis must be 0, 1 or 2")
    return (normal_axis + 1) % 3, (normal_axis + 2) % 3


def make_disc_cloud(radius: float, offset=(0.0, 0.0, 0.0), node_count: int = 1000,
                    normal_axis: int = 0, rotation: float = 0.0) -> PointCloud:
    """Sunflower discretization of a closed disc with equal-area cells.

    The disc is centred at ``offset`` and lies in the plane orthogonal to the
    coordinate axis ``normal_axis`` (axis 0 gives discs parallel to the
    boundary of the half-space).
    """
    if not radius > 0:
        raise ValueError(f"disc radius must be positive, got {radius}")
    if node_count < MIN_NODES:
        raise ValueError(f"node_count={node_count} is too small to mesh a disc (need >= {MIN_NODES})")
    n = int(node_count)
    i = np.arange(n)
    r = radius * np.sqrt((i + 0.5) / n)
    t = i * GOLDEN_ANGLE + rotation
    a, b = _plane_frame(normal_axis)
    pts = np.zeros((n, 3))
    pts[:, a] = r * np.cos(t)
    pts[:, b] = r * np.sin(t)
    pts += np.asarray(offset, float)
    q = np.full(n, math.pi * radius**2 / n)
    normals = np.zeros((n, 3))
    normals[:, normal_axis] = 1.0
    return PointCloud.from_weights(pts, q, 2, normals, radius - r, "disc")


def fibonacci_sphere(n: int, rotation: float = 0.0) -> np.ndarray:
    """``n`` near-uniform unit vectors."""
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    rho = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    t = np.arange(n) * GOLDEN_ANGLE + rotation
    return np.column_stack([z, rho * np.cos(t), rho * np.sin(t)])


def make_sphere_cloud(radius: float, center=(0.0, 0.0, 0.0), node_count: int = 1000) -> PointCloud:
    """Equal-area Fibonacci discretization of a sphere (surface carrier)."""
    if not radius > 0:
        raise ValueError("sphere radius must be positive")
    if node_count < MIN_NODES:
        raise ValueError(f"node_count={node_count} is too small to mesh a sphere")
    u = fibonacci_sphere(int(node_count))
    q = np.full(len(u), 4.0 * math.pi * radius**2 / len(u))
    return PointCloud.from_weights(np.asarray(center, float) + radius * u, q, 2, u, None, "sphere")


def make_ball_cloud(radius: float, center=(0.0, 0.0, 0.0), node_count: int = 2000) -> PointCloud:
    """Solid ball as concentric Fibonacci layers of equal-volume cells.

    Layer ``k`` covers radii ``[(k-1) R/L, k R/L]`` with ``L`` chosen so the
    shell thickness matches the cell width; nodes sit at the volume-median
    radius of their shell, so the outer layer lies within one spacing of the
    sphere.
    """
    if not radius > 0:
        raise ValueError(f"ball radius must be positive, got {radius}")
    if node_count < MIN_NODES:
        raise ValueError(f"node_count={node_count} is too small to mesh a ball (need >= {MIN_NODES})")
    L = max(2, int(round((node_count / unit_ball_measure(3)) ** (1.0 / 3.0))))
    edges = radius * np.arange(L + 1) / L
    pts, q = [], []
    for k in range(1, L + 1):
        frac = (k**3 - (k - 1) ** 3) / L**3
        nk = max(1, int(round(node_count * frac)))
        vol = unit_ball_measure(3) * (edges[k] ** 3 - edges[k - 1] ** 3)
        if nk == 1:
            pts.append(np.zeros((1, 3)))
        else:
            rk = ((edges[k] ** 3 + edges[k - 1] ** 3) / 2.0) ** (1.0 / 3.0)
            pts.append(rk * fibonacci_sphere(nk, rotation=0.7 * k))
        q.append(np.full(nk, vol / nk))
    P = np.vstack(pts) + np.asarray(center, float)
    Q = np.concatenate(q)
    bd = radius - np.linalg.norm(P - np.asarray(center, float), axis=1)
    return PointCloud.from_weights(P, Q, 3, None, bd, "ball")


def _graded_radii(R: float, h0: float, grading: float, r1: float):
    """Radii of a sunflower whose local spacing is max(h0, grading (r - r1))."""
    rr = np.linspace(0.0, R, 200001)
    h = np.maximum(h0, grading * (rr - r1))
    ncum = cumulative_trapezoid(2.0 * rr / h**2, rr, initial=0.0)
    n = max(MIN_NODES, int(round(ncum[-1])))
    ncum *= n / ncum[-1]
    r = np.interp(np.arange(n) + 0.5, ncum, rr)
    return r, np.maximum(h0, grading * (r - r1))


def graded_plane_cloud(R: float, h0: float, grading: float, r1: float, center=(0.0, 0.0),
                       height: float = 0.0) -> PointCloud:
    """Disc of radius R in the plane x_1 = height, fine (spacing h0) inside radius r1.

    The in-plane spacing grows linearly beyond ``r1``; cell areas are
    proportional to the local spacing squared and rescaled so they sum to
    pi R^2 exactly.
    """
    r, h = _graded_radii(R, h0, grading, r1)
    t = np.arange(len(r)) * GOLDEN_ANGLE
    pts = np.zeros((len(r), 3))
    pts[:, 0] = height
    pts[:, 1] = center[0] + r * np.cos(t)
    pts[:, 2] = center[1] + r * np.sin(t)
    q = math.pi * h**2
    q *= math.pi * R**2 / q.sum()
    normals = np.zeros_like(pts)
    normals[:, 0] = 1.0
    return PointCloud.from_weights(pts, q, 2, normals, None, "plane")


def layered_halfspace_cloud(R: float, h0: float, grading: float, r1: float,
                            center=(0.0, 0.0)) -> PointCloud:
    """Volume cells filling {x_1 <= 0, |x - c| <= R}, c = (0, center).

    Inside the half-ball of radius ``r1`` the cells sit in slabs parallel to
    the boundary, starting at thickness ``h0`` (the boundary layer where swept
    densities are singular) and growing geometrically, with in-plane spacing
    equal to the slab thickness.  Outside it, hemispherical shells of
    geometrically growing thickness.  Cells stay roughly isotropic, which
    the ball-mean self term needs: flat cells stacked closer than their
    width make the kernel matrix indefinite.
    """
    c = np.array([0.0, center[0], center[1]])
    pts, q = [], []
    top, k, nominal = 0.0, 0, h0
    while top < r1:
        nominal = h0 * (1.0 + grading) ** k
        # a short remainder is merged into the last layer instead of making a thin one
        dz = r1 - top if r1 - top < 1.5 * nominal else nominal
        mid = top + dz / 2.0
        rad = math.sqrt(max(r1 * r1 - mid * mid, 0.0))
        if rad <= dz:
            break
        r, h = _graded_radii(rad, dz, 0.0, rad)
        t = np.arange(len(r)) * GOLDEN_ANGLE + 0.9 * k
        P = np.zeros((len(r), 3))
        P[:, 0] = -mid
        P[:, 1] = r * np.cos(t)
        P[:, 2] = r * np.sin(t)
        pts.append(P + c)
        q.append(np.full(len(r), math.pi * rad**2 * dz / len(r)))
        top += dz
        k += 1
    # slab volume inside the half-ball is rescaled to the exact half-ball volume
    slab = np.concatenate(q)
    slab *= (2.0 / 3.0 * math.pi * r1**3) / slab.sum()
    q = [slab]
    r0, dr, k = r1, nominal, 0
    while r0 < R:
        dr = dr * (1.0 + grading)
        if R - r0 < 1.5 * dr:
            dr = R - r0
        rm = r0 + dr / 2.0
        nk = max(8, int(round(2.0 * math.pi * rm**2 / dr**2)))
        u = fibonacci_sphere(2 * nk, rotation=0.5 * k)
        u = u[u[:, 0] < 0.0]
        pts.append(c + rm * u)
        vol = 2.0 / 3.0 * math.pi * ((r0 + dr) ** 3 - r0**3)
        q.append(np.full(len(u), vol / len(u)))
        r0 += dr
        k += 1
    return PointCloud.from_weights(np.vstack(pts), np.concatenate(q), 3, None, None, "half-space-volume")


def shell_volume_cloud(a: float, R: float, h0: float, grading: float, center=(0.0, 0.0, 0.0)) -> PointCloud:
    """Volume cells filling a <= |x - center| <= R in graded spherical layers."""
    pts, q = [], []
    r0, k = a, 0
    while r0 < R:
        dr = min(h0 * (1.0 + grading) ** k, R - r0)
        rm = r0 + dr / 2.0
        vol = 4.0 / 3.0 * math.pi * ((r0 + dr) ** 3 - r0**3)
        nk = max(8, int(round(4.0 * math.pi * rm**2 / dr**2)))
        pts.append(np.asarray(center, float) + rm * fibonacci_sphere(nk, rotation=0.5 * k))
        q.append(np.full(nk, vol / nk))
        r0 += dr
        k += 1
    return PointCloud.from_weights(np.vstack(pts), np.concatenate(q), 3, None, None, "shell-volume")


def default_carrier(domain: Domain, p: KernelParams) -> str:
    """'surface' when swept measures live on the boundary (alpha = 2), else 'volume'."""
    return "surface" if p.alpha == 2.0 else "volume"


def discretize_complement(domain: Domain, resolution: "str | Resolution" = "medium",
                          R: Optional[float] = None, p: KernelParams = KernelParams(),
                          carrier: Optional[str] = None, focus=(0.0, 0.0), focus_radius: float = 1.5,
                          plate: Optional[PointCloud] = None) -> PointCloud:
    """Carrier for the negative plate D^c (truncated at radius R where unbounded).

    Half-space with a surface carrier: graded sunflower on the plane x_1 = 0,
    finest inside ``focus_radius`` of ``focus`` (the foot of the plate).
    Volume carriers are used for alpha < 2, where swept measures charge all
    of D^c.
    """
    res = get_resolution(resolution)
    carrier = carrier or default_carrier(domain, p)
    if carrier not in ("surface", "volume"):
        raise ValueError("carrier must be 'surface' or 'volume'")
    if R is None:
        R = domain.truncation_radius
    if not R > 0:
        raise ValueError("truncation radius must be positive")
    if plate is not None and not domain.complement_compact:
        extent = float(np.max(np.linalg.norm(plate.points - _domain_origin(domain), axis=1)))
        if R <= extent:
            raise ValueError(f"truncation radius {R} does not exceed the plate extent {extent:.4g}")
    if isinstance(domain, HalfSpace):
        h0 = res.plane_h0 if carrier == "surface" else res.volume_h0
        if R < 4.0 * h0:
            raise ValueError(f"R={R} is inconsistent with resolution spacing {h0}")
        if carrier == "surface":
            return graded_plane_cloud(R, h0, res.plane_grading, focus_radius, focus)
        return layered_halfspace_cloud(R, h0, res.volume_grading, focus_radius, focus)
    if isinstance(domain, BallInterior):
        if R <= domain.radius:
            raise ValueError("truncation radius must exceed the ball radius")
        if carrier == "surface":
            return make_sphere_cloud(domain.radius, domain.center, res.sphere_nodes)
        return shell_volume_cloud(domain.radius, R, res.volume_h0 * domain.radius, res.volume_grading,
                                  domain.center)
    if isinstance(domain, BallExterior):
        if carrier == "surface":
            return make_sphere_cloud(domain.radius, domain.center, res.sphere_nodes)
        return make_ball_cloud(domain.radius, domain.center, res.ball_nodes)
    raise TypeError(f"unsupported domain {domain!r}")


def _domain_origin(domain: Domain) -> np.ndarray:
    if isinstance(domain, HalfSpace):
        return np.zeros(3)
    return np.asarray(domain.center, float)


# ---------------------------------------------------------------------------
# condensers
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CondenserSpec:
    """Generalized condenser (A1, D^c) in discrete form."""

    domain: Domain
    A1: PointCloud
    A2: PointCloud
    separation: float

    @property
    def touching(self) -> bool:
        d = self.domain.distance_to_boundary(self.A1.points)
        return bool(np.any(d < self.A1.spacing))


def make_condenser(domain: Domain, A1: PointCloud, resolution="medium", p: KernelParams = KernelParams(),
                   R: Optional[float] = None, carrier: Optional[str] = None,
                   A2: Optional[PointCloud] = None) -> CondenserSpec:
    """Validate the plate against the domain and attach a complement carrier."""
    inside = domain.contains(A1.points)
    if not np.all(inside):
        raise ValueError(f"{int(np.sum(~inside))} plate nodes lie outside D")
    if A2 is None:
        focus, frad = (0.0, 0.0), 1.5
        if isinstance(domain, HalfSpace):
            c = A1.points.mean(axis=0)
            focus = (float(c[1]), float(c[2]))
            frad = float(np.max(np.linalg.norm(A1.points[:, 1:] - c[1:], axis=1))) + 1.0
        A2 = discretize_complement(domain, resolution, R, p, carrier, focus, frad, plate=A1)
    scale = float(np.max(np.abs(A2.points))) + 1.0
    strictly_inside = domain.contains(A2.points) & (domain.distance_to_boundary(A2.points) > 1e-9 * scale)
    if np.any(strictly_inside):
        raise ValueError("complement carrier has nodes inside D")
    sep = float(np.min(domain.distance_to_boundary(A1.points)))
    return CondenserSpec(domain, A1, A2, sep)
