"""Green equilibrium measure of a chain of small discs with infinite Newtonian energy.

D = {x_1 > 0}, K_r^eps is the disc of radius r parallel to dD at height eps,
and psi(delta) = c_g(K_1^delta).  The chain F = union of F_j, with
F_j = K_r^eps shifted by s_j = a j along x_2, uses r_j = j^-3 and
eps_j = r_j delta_j where psi(delta_j) = j.  Then sum c_g(F_j) = sum j^-2 is
finite while the Newtonian energies of the pieces gamma_j of the joint
Green equilibrium measure dominate sum 1/(8j).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor
from scipy.spatial.distance import cdist

from .geometry import HalfSpace, KernelParams, PointCloud, make_disc_cloud
from .kernels import green_halfspace_matrix, riesz_matrix
from .qp import solve_nonneg_batch
from .solver import green_equilibrium

NEWTON = KernelParams(3, 2.0)
DISC_NODES = {"coarse": 1200, "medium": 2000, "fine": 3200}
DEFAULT_SCHEDULE = (0.4, 0.2, 0.1, 0.07, 0.05)
TWO_OVER_PI2 = 2.0 / math.pi**2


class ResolutionTooCoarse(ValueError):
    pass


def _nodes(resolution) -> int:
    if isinstance(resolution, int):
        return resolution
    name = getattr(resolution, "name", resolution)
    try:
        return DISC_NODES[name]
    except KeyError:
        raise ValueError(f"unknown resolution {resolution!r}") from None


def disc_spacing(radius: float, nodes: int) -> float:
    return radius * math.sqrt(math.pi / nodes)


def offset_disc(radius: float, eps: float, nodes: int, shift: float = 0.0, rotation: float = 0.0) -> PointCloud:
    """K_r^eps translated by (0, shift, 0); rejects heights the nodes cannot resolve."""
    if not (radius > 0 and eps > 0):
        raise ValueError("disc radius and height must be positive")
    h = disc_spacing(radius, nodes)
    if eps < h:
        raise ResolutionTooCoarse(f"height {eps:.3g} is below the node spacing {h:.3g}; refine the disc")
    return make_disc_cloud(radius, (eps, shift, 0.0), nodes, 0, rotation)


def green_disc_capacity(radius: float, eps: float, nodes: int, rotation: float = 0.0) -> float:
    cloud = offset_disc(radius, eps, nodes, rotation=rotation)
    return green_equilibrium(cloud, HalfSpace(), NEWTON, G=green_halfspace_matrix(cloud))[1]


# ---------------------------------------------------------------------------
# psi and the homogeneity identities
# ---------------------------------------------------------------------------


@dataclass
class PsiCurve:
    samples: list               # (delta, psi)
    nodes: int
    identity_errors: list = field(default_factory=list)   # (delta, relative error of the scaled-disc identity)

    @property
    def deltas(self):
        return np.array([d for d, _ in self.samples])

    @property
    def values(self):
        return np.array([v for _, v in self.samples])

    @property
    def b_hat(self) -> float:
        return float(np.min(self.values))

    @property
    def increasing_as_delta_decreases(self) -> bool:
        order = np.argsort(-self.deltas)
        return bool(np.all(np.diff(self.values[order]) > 0))

    def rows(self):
        err = dict(self.identity_errors)
        return [(d, v, err.get(d, math.nan)) for d, v in self.samples]


def psi(delta: float, nodes: int, rotation: float = 0.0) -> float:
    return green_disc_capacity(1.0, delta, nodes, rotation)


def compute_psi(deltas=DEFAULT_SCHEDULE, resolution="medium", cross_check: bool = True) -> PsiCurve:
    """psi on a schedule, each value cross-checked against delta c_g(K^1_{1/delta}).

    The cross-check uses the disc of radius 1/delta at height 1 meshed with a
    different node count and a rotated pattern, so the two sides share no
    matrix.
    """
    n = _nodes(resolution)
    samples, errs = [], []
    for d in deltas:
        if not d > 0:
            raise ValueError("delta must be positive")
        v = psi(d, n)
        samples.append((float(d), v))
        if cross_check:
            other = delta_scaled_psi(d, int(round(1.25 * n)))
            errs.append((float(d), abs(other - v) / v))
    return PsiCurve(samples, n, errs)


def delta_scaled_psi(delta: float, nodes: int) -> float:
    """delta * c_g(K^1_{1/delta}): the right-hand side of the scaled-disc identity."""
    return delta * green_disc_capacity(1.0 / delta, 1.0, nodes, rotation=0.5)


def homogeneity_check(r: float, eps: float, resolution="medium") -> float:
    """|c_g(K_r^eps) - r psi(eps / r)| / (r psi(eps / r)), both sides meshed independently."""
    if not (r > 0 and eps > 0):
        raise ValueError("r and eps must be positive")
    n = _nodes(resolution)
    lhs = green_disc_capacity(r, eps, int(round(1.25 * n)), rotation=0.5)
    rhs = r * psi(eps / r, n)
    return abs(lhs - rhs) / rhs


# ---------------------------------------------------------------------------
# delta_j
# ---------------------------------------------------------------------------


@dataclass
class DeltaRoot:
    j: int
    delta: float
    psi: float
    bracket: tuple          # ((delta_hi, psi(delta_hi)), (delta_lo, psi(delta_lo))) with psi_hi < j < psi_lo
    evaluations: int

    @property
    def relative_error(self) -> float:
        return abs(self.psi - self.j) / self.j


def find_delta_j(j: int, bracket, nodes: int, b_hat: float, rtol: float = 2e-3, maxiter: int = 40) -> DeltaRoot:
    """delta with psi(delta) = j by bracketed regula falsi on (log delta, log psi).

    ``bracket`` = (delta_small, delta_large); psi is evaluated on both ends and
    must straddle j.  Each step keeps a certified bracket.
    """
    if not j > b_hat:
        raise ValueError(f"j={j} does not exceed the computed lower bound {b_hat:.4g}")
    lo, hi = sorted(float(x) for x in bracket)
    plo, phi = psi(lo, nodes), psi(hi, nodes)
    evals = 2
    if not (phi < j < plo):
        raise ValueError(f"bracket [{lo:.4g}, {hi:.4g}] gives psi in [{phi:.4g}, {plo:.4g}], which does not straddle {j}")
    # (delta, evaluated psi) at both ends; the Illinois step rescales the
    # working values fa, fb only
    ends = {"hi": (hi, phi), "lo": (lo, plo)}
    fa, fb = math.log(plo / j), math.log(phi / j)
    side = 0
    best = min(ends.values(), key=lambda e: abs(e[1] - j))
    for _ in range(maxiter):
        if abs(best[1] - j) <= rtol * j:
            break
        a, b = math.log(ends["lo"][0]), math.log(ends["hi"][0])
        x = b - fb * (b - a) / (fb - fa)
        if not (a < x < b) or (b - a) < 1e-12:
            x = 0.5 * (a + b)
        d = math.exp(x)
        v = psi(d, nodes)
        evals += 1
        if abs(v - j) < abs(best[1] - j):
            best = (d, v)
        if v > j:
            ends["lo"] = (d, v)
            fa = math.log(v / j)
            if side == -1:
                fb *= 0.5
            side = -1
        else:
            ends["hi"] = (d, v)
            fb = math.log(v / j)
            if side == 1:
                fa *= 0.5
            side = 1
    return DeltaRoot(j, best[0], best[1], (ends["hi"], ends["lo"]), evals)


# ---------------------------------------------------------------------------
# the chain F and its joint equilibrium
# ---------------------------------------------------------------------------


@dataclass
class ChainRecord:
    j: int
    delta: float
    eps: float
    r: float
    s: float
    c_g: float               # capacity of F_j alone
    target_c_g: float        # j^-2
    gamma_mass: float        # gamma(F_j) for the joint equilibrium
    g_gamma_min: float       # min over F_j nodes of g gamma_j
    g_gamma_max: float
    cross_max: float         # max over F_j nodes of sum_{k != j} g gamma_k
    energy: float            # Newtonian energy E_2(gamma_j)
    energy_bound: float      # gamma(F_j)^2 / (2 r_j)
    diameter: float


@dataclass
class ChainReport:
    a: float
    nodes: int
    psi_curve: PsiCurve
    roots: list
    records: list
    gauss_seidel_sweeps: int
    joint_converged: bool
    min_separation: float
    skipped: list            # j values not resolvable at this resolution

    @property
    def gamma_F(self) -> float:
        return float(sum(r.gamma_mass for r in self.records))

    @property
    def partial_sums(self):
        cg = np.cumsum([r.c_g for r in self.records])
        en = np.cumsum([r.energy for r in self.records])
        lb = np.cumsum([1.0 / (8 * r.j) for r in self.records])
        return cg, en, lb

    @property
    def cross_bound(self) -> float:
        return self.gamma_F / (self.a / 2.0)

    def checks(self) -> dict:
        cg, en, lb = self.partial_sums
        js = np.array([r.j for r in self.records], float)
        return {
            "capacity_matches_j^-2": all(abs(r.c_g - r.target_c_g) <= 0.05 * r.target_c_g for r in self.records),
            "capacity_sum_bounded": bool(cg[-1] <= np.sum(js**-2.0) * 1.05),
            "g_gamma_in_[1/2,1]": all(r.g_gamma_min >= 0.5 - 0.03 and r.g_gamma_max <= 1.0 + 1e-6 for r in self.records),
            "cross_terms_bounded": all(r.cross_max <= self.cross_bound for r in self.records) and self.cross_bound <= 0.5,
            "c_g_at_most_twice_gamma": all(r.c_g <= 2.0 * r.gamma_mass for r in self.records),
            "energy_dominates_1/(8j)": bool(np.all(en >= lb)),
            "separation_at_least_a-2": self.min_separation >= self.a - 2.0,
            "diameter_at_most_2r": all(r.diameter <= 2.0 * r.r * (1 + 1e-12) for r in self.records),
        }

    def rows(self):
        cg, en, lb = self.partial_sums
        return [(r.j, r.delta, r.eps, r.r, r.s, r.c_g, r.gamma_mass, r.g_gamma_min, r.g_gamma_max, r.energy,
                 r.energy_bound, c, e, l) for r, c, e, l in zip(self.records, cg, en, lb)]


def _cross_green(X, Y):
    Yr = Y.copy()
    Yr[:, 0] *= -1.0
    return 1.0 / cdist(X, Y) - 1.0 / cdist(X, Yr)


def joint_equilibrium(clouds, maxiter: int = 200, tol: float = 1e-13):
    """Green equilibrium of a union of well separated pieces by block Gauss-Seidel.

    Each block solves min x'G_jj x - 2 (1 - sum_k G_jk x_k)'x over x >= 0,
    which is block coordinate descent on the capacity QP of the union.
    Returns (masses per block, self blocks, cross blocks, sweeps, converged).
    """
    m = len(clouds)
    Gd = [green_halfspace_matrix(c) for c in clouds]
    ch = [cho_factor(G, check_finite=False) for G in Gd]
    C = {(i, k): _cross_green(clouds[i].points, clouds[k].points) for i in range(m) for k in range(m) if i != k}
    x = [np.zeros(len(c)) for c in clouds]
    conv = False
    sweeps = 0
    for sweeps in range(1, maxiter + 1):
        change = 0.0
        for i in range(m):
            rhs = np.ones(len(clouds[i]))
            for k in range(m):
                if k != i:
                    rhs -= C[(i, k)] @ x[k]
            new = solve_nonneg_batch(Gd[i], rhs, ch[i])[0][:, 0]
            change = max(change, float(np.max(np.abs(new - x[i]))) / max(float(np.max(new)), 1e-300))
            x[i] = new
        if change <= tol:
            conv = True
            break
    return x, Gd, C, sweeps, conv


def build_F(J: int = 6, a: float = 4.0, resolution="medium", psi_curve: PsiCurve | None = None,
            j_min: int | None = None) -> ChainReport:
    if J < 3:
        raise ValueError("J must be at least 3")
    if a < 4:
        raise ValueError("the spacing constant a must be at least 4")
    n = _nodes(resolution)
    if psi_curve is None:
        psi_curve = compute_psi(DEFAULT_SCHEDULE, n)
    b_hat = psi_curve.b_hat
    start = max(int(math.floor(b_hat)) + 1, 3 if j_min is None else j_min)
    h = disc_spacing(1.0, n)
    roots, skipped = [], []
    d_s, p_s = psi_curve.deltas, psi_curve.values
    for j in range(start, J + 1):
        above = d_s[p_s > j]
        below = d_s[p_s < j]
        lo = float(np.max(above)) if len(above) else h
        hi = float(np.min(below)) if len(below) else float(np.max(d_s))
        try:
            roots.append(find_delta_j(j, (max(lo, h), hi), n, b_hat))
        except ValueError:
            skipped.append(j)
    if len(roots) < 1:
        raise ResolutionTooCoarse("no delta_j is resolvable at this resolution")

    def assemble(a_val):
        clouds = [offset_disc(rt.j ** -3.0, rt.j ** -3.0 * rt.delta, n, shift=a_val * rt.j) for rt in roots]
        return clouds, joint_equilibrium(clouds)

    clouds, (x, Gd, C, sweeps, conv) = assemble(a)
    if sum(float(v.sum()) for v in x) > a:
        # the spacing must dominate gamma(F); gamma(F) does not grow with a
        a = sum(float(v.sum()) for v in x)
        clouds, (x, Gd, C, sweeps, conv) = assemble(a)
    if not conv:
        x = [green_equilibrium(c, HalfSpace(), NEWTON, G=G)[0].weights for c, G in zip(clouds, Gd)]
    records = []
    sep = math.inf
    for i, (rt, cl) in enumerate(zip(roots, clouds)):
        r = rt.j ** -3.0
        own = Gd[i] @ x[i]
        cross = sum(C[(i, k)] @ x[k] for k in range(len(clouds)) if k != i) if len(clouds) > 1 else np.zeros(len(cl))
        c_alone = green_equilibrium(cl, HalfSpace(), NEWTON, G=Gd[i])[1]
        K = riesz_matrix(cl, NEWTON)
        energy = float(x[i] @ K @ x[i])
        pts = cl.points
        diam = float(np.max(cdist(pts, pts)))
        for k in range(i + 1, len(clouds)):
            sep = min(sep, float(np.min(cdist(pts, clouds[k].points))))
        gm = float(x[i].sum())
        records.append(ChainRecord(rt.j, rt.delta, r * rt.delta, r, a * rt.j, c_alone, rt.j ** -2.0, gm,
                                   float(own.min()), float(own.max()), float(np.max(cross)), energy,
                                   gm**2 / (2.0 * r), diam))
    return ChainReport(a, n, psi_curve, roots, records, sweeps, conv, sep, skipped)


def refinement_change(coarse: ChainReport, fine: ChainReport) -> dict:
    """Largest relative change of the per-j quantities between two resolutions."""
    a = {r.j: r for r in coarse.records}
    out = {}
    for r in fine.records:
        if r.j in a:
            q = a[r.j]
            out[r.j] = max(abs(r.delta - q.delta) / r.delta, abs(r.gamma_mass - q.gamma_mass) / r.gamma_mass,
                           abs(r.energy - q.energy) / r.energy)
    return out
