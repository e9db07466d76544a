"""Constrained Gauss problems, equilibrium measures, condensers and their certificates.

All problems reduce to

    min  lam' G lam + 2 f' lam   over   {0 <= lam <= xi, sum lam = 1}

with G a kernel matrix (Riesz or Green) over the plate nodes.  A solution is
certified by the Frostman inequalities on the weighted potential
W = G lam + f:  W >= w where lam < xi,  W <= w where lam > 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_factor

from .balayage import SweepResult, sweep
from .geometry import (CondenserSpec, DiscreteMeasure, HalfSpace, KernelParams, PointCloud,
                       SignedDiscreteMeasure, make_disc_cloud)
from .kernels import green_halfspace, green_matrix, potential, riesz_matrix
from .qp import project_capped_simplex, solve_capped_simplex

CERT_TOL = 1e-6
SUPPORT_TAU = 1e-3


# ---------------------------------------------------------------------------
# problem data
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ExternalFieldSpec:
    """External field on the plate.

    ``case1``: nonnegative values at the plate nodes (zero on D^c).
    ``case2``: f = g zeta on D for a signed measure zeta in D.
    ``none``: f = 0.
    """

    kind: str = "none"
    values: Optional[np.ndarray] = None
    zeta: Optional[SignedDiscreteMeasure] = None

    def __post_init__(self):
        if self.kind not in ("none", "case1", "case2"):
            raise ValueError("field kind must be 'none', 'case1' or 'case2'")
        if self.kind == "case1":
            v = np.asarray(self.values, float)
            if v.ndim != 1 or not np.all(np.isfinite(v)) or np.any(v < 0):
                raise ValueError("case1 field values must be finite and >= 0")
            object.__setattr__(self, "values", v)
        if self.kind == "case2" and self.zeta is None:
            raise ValueError("case2 field needs a signed measure zeta")

    @classmethod
    def zero(cls) -> "ExternalFieldSpec":
        return cls("none")

    def on_nodes(self, A1: PointCloud, G: Optional[np.ndarray] = None, domain=None,
                 p: KernelParams = KernelParams(), resolution="medium") -> np.ndarray:
        n = len(A1)
        if self.kind == "none":
            return np.zeros(n)
        if self.kind == "case1":
            if len(self.values) != n:
                raise ValueError("one field value per plate node is required")
            return self.values
        return green_potential_of(self.zeta, A1, G, domain, p, resolution)


def green_potential_of(zeta: SignedDiscreteMeasure, A1: PointCloud, G=None, domain=None,
                       p: KernelParams = KernelParams(), resolution="medium") -> np.ndarray:
    """g zeta at the nodes of A1 (zeta on A1 itself reuses the Green matrix)."""
    out = np.zeros(len(A1))
    for sign, part in ((1.0, zeta.plus), (-1.0, zeta.minus)):
        if part.total_mass == 0.0:
            continue
        if part.cloud is A1 and G is not None:
            out += sign * (G @ part.weights)
        elif isinstance(domain, HalfSpace) and p.newtonian:
            for y, m in zip(part.cloud.points, part.weights):
                if m > 0:
                    out += sign * m * green_halfspace(A1.points, y)
        else:
            from .balayage import sweep_in_domain

            sw = sweep_in_domain(part, domain, p, resolution)
            val = potential(part.cloud, part.weights, A1.points, p, cells=not part.atomic)
            out += sign * (val - potential(sw.swept.cloud, sw.swept.weights, A1.points, p))
    return out


@dataclass(frozen=True, eq=False)
class ConstraintSpec:
    """Per-node upper bounds xi_i on the masses (None means xi = infinity)."""

    upper: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.upper is not None:
            u = np.asarray(self.upper, float)
            if np.any(~(u > 0)):
                raise ValueError("constraint bounds must be positive (use inf for none)")
            object.__setattr__(self, "upper", u)

    @classmethod
    def unbounded(cls) -> "ConstraintSpec":
        return cls(None)

    @classmethod
    def from_density(cls, A1: PointCloud, density) -> "ConstraintSpec":
        return cls(np.broadcast_to(np.asarray(density, float), (len(A1),)) * A1.quad_weight)

    @property
    def bounded(self) -> bool:
        return self.upper is not None and bool(np.any(np.isfinite(self.upper)))

    @property
    def total_mass(self) -> float:
        return math.inf if self.upper is None else float(math.fsum(self.upper))

    def bounds(self, n: int) -> np.ndarray:
        if self.upper is None:
            return np.full(n, np.inf)
        if len(self.upper) != n:
            raise ValueError("one constraint bound per plate node is required")
        return self.upper


@dataclass
class CertificateReport:
    lower_violation: float
    upper_violation: float
    w_primary: float
    w_slack: float
    w_mass: float
    gap: float
    tolerance: float = CERT_TOL

    @property
    def passed(self) -> bool:
        return max(self.lower_violation, self.upper_violation) <= self.tolerance


@dataclass(eq=False)
class GaussSolution:
    lam: DiscreteMeasure
    w: float
    objective: float
    cert: Optional[CertificateReport]
    iterations: int
    converged: bool
    saturated: bool = False
    polished: bool = True
    G: np.ndarray = field(default=None, repr=False)
    f: np.ndarray = field(default=None, repr=False)
    upper: np.ndarray = field(default=None, repr=False)


class InfeasibleConstraint(ValueError):
    pass


# ---------------------------------------------------------------------------
# Gauss problem
# ---------------------------------------------------------------------------


def _initial(n: int, init, upper) -> np.ndarray:
    if isinstance(init, str):
        if init == "uniform":
            x0 = np.full(n, 1.0 / n)
        elif init == "vertex":
            x0 = np.zeros(n)
            x0[0] = 1.0
        else:
            raise ValueError("init must be 'uniform', 'vertex' or an array")
    else:
        x0 = np.asarray(init, float)
    return project_capped_simplex(x0, upper)


def solve_gauss_matrix(G, f=None, upper=None, cloud: Optional[PointCloud] = None, init="uniform",
                       method: str = "auto", maxiter: int = 50000) -> GaussSolution:
    """Gauss problem for an explicit (symmetric positive definite) matrix."""
    G = np.asarray(G, float)
    n = G.shape[0]
    f = np.zeros(n) if f is None else np.asarray(f, float)
    upper = np.full(n, np.inf) if upper is None else np.broadcast_to(np.asarray(upper, float), (n,)).copy()
    if cloud is None:
        pts = np.column_stack([np.arange(n, dtype=float), np.zeros(n), np.zeros(n)])
        cloud = PointCloud(pts, np.full(n, 0.1), np.full(n, 1.0), 3, label="abstract")
    if not np.all(np.isfinite(f)):
        raise ValueError("the external field must be finite at every node")
    total = math.fsum(upper) if np.all(np.isfinite(upper)) else math.inf
    if total < 1.0 - 1e-12:
        raise InfeasibleConstraint(f"sum of constraint bounds {total:.6g} < 1: no unit-mass measure is admissible")
    if total <= 1.0 + 1e-12:
        lam = upper / total
        W = G @ lam + f
        sol = GaussSolution(DiscreteMeasure(cloud, lam), float(W @ lam), float(lam @ G @ lam + 2 * f @ lam),
                            None, 0, True, True, False, G, f, upper)
        sol.cert = verify_frostman(sol)
        return sol
    x0 = _initial(n, init, upper)
    res = solve_capped_simplex(G, f, upper, x0, method=method, maxiter=maxiter)
    sol = GaussSolution(DiscreteMeasure(cloud, res.x), res.multiplier, res.objective, None, res.iterations,
                        res.converged, False, res.polished, G, f, upper)
    sol.cert = verify_frostman(sol)
    sol.converged = bool(res.converged and sol.cert.passed)
    return sol


def solve_gauss(A1: PointCloud, field_spec: ExternalFieldSpec = ExternalFieldSpec(),
                constraint: ConstraintSpec = ConstraintSpec(), domain=None, p: KernelParams = KernelParams(),
                resolution="medium", G=None, init="uniform", method: str = "auto") -> GaussSolution:
    """Minimize ||lam||_g^2 + 2<f, lam> over unit-mass lam on A1 with lam <= xi.

    Without a domain the Riesz kernel itself is used (the condenser reduces
    to a single plate).
    """
    if G is None:
        G = green_matrix(A1, domain, p, resolution) if domain is not None else riesz_matrix(A1, p)
    f = field_spec.on_nodes(A1, G, domain, p, resolution)
    return solve_gauss_matrix(G, f, constraint.bounds(len(A1)), A1, init, method)


def _frank_wolfe_gap(W, lam, upper) -> float:
    """Upper bound on objective suboptimality: 2 <W, lam - s>, s the best vertex-like point."""
    order = np.argsort(W, kind="stable")
    s = np.zeros_like(lam)
    left = 1.0
    for i in order:
        take = min(upper[i], left)
        s[i] = take
        left -= take
        if left <= 0:
            break
    return float(max(2.0 * (W @ lam - W @ s), 0.0))


def verify_frostman(sol: GaussSolution, constraint: Optional[ConstraintSpec] = None,
                    field_spec: Optional[ExternalFieldSpec] = None, tol: float = CERT_TOL) -> CertificateReport:
    """Frostman inequalities for ``sol`` (constraint and field are taken from the solution)."""
    lam = sol.lam.weights
    upper = sol.upper if constraint is None else constraint.bounds(len(lam))
    W = sol.G @ lam + sol.f
    below = lam < upper * (1.0 - 1e-12)
    carried = lam > 0.0
    if sol.polished and math.isfinite(sol.w):
        w = sol.w
    else:
        a = float(np.max(W[carried])) if np.any(carried) else -math.inf
        b = float(np.min(W[below])) if np.any(below) else math.inf
        w = 0.5 * (a + b) if math.isfinite(a) and math.isfinite(b) else (a if math.isfinite(a) else b)
    scale = max(abs(w), 1e-300)
    lower = float(np.max(np.maximum(w - W[below], 0.0))) / scale if np.any(below) else 0.0
    upper_v = float(np.max(np.maximum(W[carried] - w, 0.0))) / scale if np.any(carried) else 0.0
    bounded = bool(np.any(np.isfinite(upper)))
    w_sl = w_ms = math.nan
    if bounded and not np.any(sol.f):
        # W = w wherever the constraint is slack, but only without an external field
        slack = np.where(np.isfinite(upper), upper - lam, 0.0)
        w_sl = float(W @ slack / slack.sum()) if slack.sum() > 0 else math.nan
    elif not bounded:
        w_ms = float(W @ lam)
    gap = _frank_wolfe_gap(W, lam, upper)
    return CertificateReport(lower, upper_v, float(w), w_sl, w_ms, gap, tol)


def perturb_solution(sol: GaussSolution, fraction: float = 0.01) -> GaussSolution:
    """Move ``fraction`` of the mass from the heaviest nodes to the nodes of largest W with room."""
    lam = sol.lam.weights.copy()
    W = sol.G @ lam + sol.f
    left = fraction
    for i in np.argsort(-lam, kind="stable"):
        take = min(lam[i], left)
        lam[i] -= take
        left -= take
        if left <= 0:
            break
    src = lam < sol.lam.weights
    left = fraction - left
    for i in np.argsort(-W, kind="stable"):
        if src[i]:
            continue
        put = min(sol.upper[i] - lam[i], left)
        lam[i] += put
        left -= put
        if left <= 0:
            break
    new = replace(sol, lam=DiscreteMeasure(sol.lam.cloud, lam), w=math.nan, polished=False,
                  objective=float(lam @ sol.G @ lam + 2 * sol.f @ lam))
    new.cert = verify_frostman(new)
    return new


# ---------------------------------------------------------------------------
# capacities and equilibria
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class CapacityResult:
    value: float
    measure: DiscreteMeasure
    solution: GaussSolution


def capacity(cloud: PointCloud, kernel: str = "riesz", p: KernelParams = KernelParams(), domain=None,
             resolution="medium", G=None) -> CapacityResult:
    """Capacity 1/min E over unit-mass measures on the cloud, with the capacitary measure."""
    if len(cloud) == 0:
        raise ValueError("capacity of an empty cloud")
    if G is None:
        if kernel == "riesz":
            G = riesz_matrix(cloud, p)
        elif kernel == "green":
            if domain is None:
                raise ValueError("the Green kernel needs a domain")
            G = green_matrix(cloud, domain, p, resolution)
        else:
            raise ValueError("kernel must be 'riesz' or 'green'")
    sol = solve_gauss_matrix(G, None, None, cloud)
    if not sol.converged:
        raise RuntimeError(f"capacity solve did not converge (violations {sol.cert.lower_violation:.2e}, "
                           f"{sol.cert.upper_violation:.2e})")
    return CapacityResult(1.0 / sol.objective, sol.lam, sol)


def green_equilibrium(F: PointCloud, domain, p: KernelParams = KernelParams(), resolution="medium", G=None):
    """(gamma, c_g): gamma = c_g times the Green capacitary measure, so g gamma = 1 on F."""
    res = capacity(F, "green", p, domain, resolution, G)
    return res.measure.scaled(res.value), res.value


# ---------------------------------------------------------------------------
# condensers
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class CondenserSolution:
    nu: SignedDiscreteMeasure
    gauss: GaussSolution
    sweep: SweepResult
    green_objective: float
    field_term: float
    alpha_objective_standard: float
    alpha_objective_weak: float
    weak_tail_bound: float


def _condenser_green(condenser: CondenserSpec, p: KernelParams, resolution):
    from .balayage import green_matrix_numeric

    if isinstance(condenser.domain, HalfSpace) and p.newtonian:
        return green_matrix(condenser.A1, condenser.domain, p, resolution)
    return green_matrix_numeric(condenser.A1, condenser.domain, p, resolution, condenser.A2)


def solve_condenser(condenser: CondenserSpec, field_spec: ExternalFieldSpec = ExternalFieldSpec(),
                    constraint: ConstraintSpec = ConstraintSpec(), p: KernelParams = KernelParams(),
                    resolution="medium", weak: bool = True, G=None) -> CondenserSolution:
    """nu = lam - lam' with lam the Green-side solution; both optimal values reported."""
    from .energy import energy_standard, energy_weak

    if G is None:
        G = _condenser_green(condenser, p, resolution)
    sol = solve_gauss(condenser.A1, field_spec, constraint, condenser.domain, p, resolution, G=G)
    sw = sweep(sol.lam, condenser.A2, p, condenser.domain)
    nu = SignedDiscreteMeasure(sol.lam, sw.swept)
    fterm = 2.0 * float(sol.f @ sol.lam.weights)
    green_obj = sol.objective
    std = math.nan
    if condenser.separation > 0:
        std = energy_standard(nu, p) + fterm
    weak_val, tail = math.nan, math.nan
    if weak:
        weak_val, tail = energy_weak(nu, p, resolution=resolution)
        weak_val += fterm
    return CondenserSolution(nu, sol, sw, green_obj, fterm, std, weak_val, tail)


@dataclass(eq=False)
class CondenserMeasureResult:
    theta: SignedDiscreteMeasure
    c_g: float
    sweep: SweepResult


def condenser_measure(condenser: CondenserSpec, p: KernelParams = KernelParams(), resolution="medium",
                      G=None) -> CondenserMeasureResult:
    """theta = gamma - gamma' with gamma the Green equilibrium measure of A1."""
    if G is None:
        G = _condenser_green(condenser, p, resolution)
    gamma, cg = green_equilibrium(condenser.A1, condenser.domain, p, resolution, G)
    sw = sweep(gamma, condenser.A2, p, condenser.domain)
    return CondenserMeasureResult(SignedDiscreteMeasure(gamma, sw.swept), cg, sw)


def signed_potential(nu: SignedDiscreteMeasure, X, p: KernelParams = KernelParams()) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, float))
    out = np.zeros(len(X))
    for sign, part in ((1.0, nu.plus), (-1.0, nu.minus)):
        if part.total_mass > 0:
            out += sign * potential(part.cloud, part.weights, X, p, cells=not part.atomic)
    return out


@dataclass
class SupportReport:
    support_nodes: int
    plate_boundary_fraction: float
    plate_interior_fraction: float
    minus_boundary_fraction: float
    strict_gap: float
    w: float


def support_analysis(sol: GaussSolution, condenser: CondenserSpec, p: KernelParams = KernelParams(),
                     swept: Optional[DiscreteMeasure] = None, probes=None) -> SupportReport:
    """Where lam and its sweep live, and the gap of kappa nu below w' off the plate.

    ``plate_boundary_fraction`` is the mass within one local spacing of the
    plate boundary; ``minus_boundary_fraction`` the swept mass within one
    local spacing of the boundary of D.
    """
    lam = sol.lam
    A1 = lam.cloud
    wts = lam.weights
    tot = wts.sum()
    supp = wts > SUPPORT_TAU * wts.max()
    if A1.boundary_distance is None:
        raise ValueError("support analysis needs plate clouds with boundary distances")
    near = A1.boundary_distance <= A1.spacing
    bfrac = float(wts[near].sum() / tot)
    ifrac = float(wts[~near].sum() / tot)
    if swept is None:
        swept = sweep(lam, condenser.A2, p, condenser.domain).swept
    dmin = condenser.domain.distance_to_boundary(swept.cloud.points)
    on_bd = dmin <= swept.cloud.spacing
    mfrac = float(swept.weights[on_bd].sum() / max(swept.weights.sum(), 1e-300))
    gap = math.nan
    if probes is not None and len(probes):
        nu = SignedDiscreteMeasure(lam, swept)
        gap = float(np.min(sol.w - signed_potential(nu, probes, p)))
    return SupportReport(int(np.sum(supp)), bfrac, ifrac, mfrac, gap, sol.w)


# ---------------------------------------------------------------------------
# unsolvability and determinism
# ---------------------------------------------------------------------------


@dataclass
class UnsolvabilityTrace:
    deltas: list
    objectives: list
    positive: list
    node_counts: list

    @property
    def strictly_decreasing(self) -> bool:
        return all(b < a for a, b in zip(self.objectives, self.objectives[1:]))


def unsolvability_demo(domain=HalfSpace(), p: KernelParams = KernelParams(), plate_radius: float = 4.0,
                       disc_radius: float = 3.0, deltas=(1.5, 0.6, 0.3, 0.15, 0.1), node_count: int = 2800,
                       threshold: float = 0.05) -> UnsolvabilityTrace:
    """Unit-mass measures in a half-ball plate tangent to the boundary whose Green energy tends to 0.

    Each measure is the Green capacitary measure of a disc of radius
    ``disc_radius`` parallel to the boundary at height delta; it lies inside
    the half-ball of radius ``plate_radius`` and its energy is 1/c_g(disc).
    """
    if not (isinstance(domain, HalfSpace) and p.newtonian):
        raise ValueError("the demonstration uses the closed-form half-space Green kernel (alpha = 2)")
    tr = UnsolvabilityTrace([], [], [], [])
    for d in deltas:
        if math.hypot(d, disc_radius) >= plate_radius:
            raise ValueError(f"disc at height {d} leaves the plate")
        cloud = make_disc_cloud(disc_radius, (d, 0.0, 0.0), node_count)
        G = green_matrix(cloud, domain, p)
        try:
            cho_factor(G, check_finite=False)
            pd = True
        except LinAlgError:
            pd = False
        sol = solve_gauss_matrix(G, None, None, cloud)
        tr.deltas.append(float(d))
        tr.objectives.append(float(sol.objective))
        tr.positive.append(bool(pd and sol.objective > 0))
        tr.node_counts.append(len(cloud))
        if sol.objective < threshold:
            break
    return tr


@dataclass
class DeterminismReport:
    max_weight_discrepancy: float
    bitwise_identical: bool
    conclusive: bool


def solver_determinism_check(G, f=None, upper=None, inits=("uniform", "vertex"),
                             method: str = "spg") -> DeterminismReport:
    """Solve twice from different starting points and compare the weights."""
    a = solve_gauss_matrix(G, f, upper, init=inits[0], method=method)
    b = solve_gauss_matrix(G, f, upper, init=inits[1], method=method)
    disc = float(np.max(np.abs(a.lam.weights - b.lam.weights)))
    same = bool(np.array_equal(a.lam.weights, b.lam.weights))
    return DeterminismReport(disc, same, bool(a.converged and b.converged))
