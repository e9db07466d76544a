"""Scenario-driven command line front end.

Usage::

    riesz-condenser <command> [--scenario FILE] [--resolution coarse|medium|fine] [--out DIR]
    riesz-condenser selftest [--out DIR]

Scenario files are flat ``key = value`` lines; ``#`` starts a comment.  Every
key is validated against the command's schema before anything is computed,
and unknown keys are rejected with the offending line number.

Outputs (only written when the whole run completed):

* ``summary.txt``     human readable, including every default in force
* ``records.jsonl``   one JSON object per reported number
* ``<table>.csv``     plot data, comma separated, header row, UTF-8, LF

Exit status: 0 when every check passed, 1 when a check failed, 2 for a
scenario or usage error, 3 when a computation raised.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

EXIT_OK, EXIT_CHECK_FAILED, EXIT_SCENARIO, EXIT_COMPUTE = 0, 1, 2, 3
RESOLUTION_NAMES = ("coarse", "medium", "fine")


# ---------------------------------------------------------------------------
# records
# ---------------------------------------------------------------------------


@dataclass
class Record:
    """One reported number with the check it belongs to.

    ``passed`` is None for informational values that carry no tolerance.
    """

    check: str
    quantity: str
    value: float
    target: Optional[float] = None
    tolerance: Optional[float] = None
    tolerance_kind: str = ""          # "relative", "absolute", "lower-bound", "upper-bound", "interval"
    passed: Optional[bool] = None
    provenance: str = ""
    note: str = ""

    def to_json(self) -> str:
        d = asdict(self)
        for k in ("value", "target", "tolerance"):
            v = d[k]
            if isinstance(v, float) and not math.isfinite(v):
                d[k] = repr(v)         # JSON has no inf/nan literals
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "Record":
        d = json.loads(line)
        for k in ("value", "target", "tolerance"):
            if isinstance(d[k], str):
                d[k] = float(d[k])
        return cls(**d)


def _f(x) -> Optional[float]:
    return None if x is None else float(x)


def rel_record(check, quantity, value, target, tol, provenance, note="") -> Record:
    value, target = float(value), float(target)
    ok = abs(value - target) <= tol * abs(target)
    return Record(check, quantity, value, target, float(tol), "relative", bool(ok), provenance, note)


def abs_record(check, quantity, value, target, tol, provenance, note="") -> Record:
    value, target = float(value), float(target)
    return Record(check, quantity, value, target, float(tol), "absolute", bool(abs(value - target) <= tol),
                  provenance, note)


def bound_record(check, quantity, value, bound, kind, provenance, note="") -> Record:
    value, bound = float(value), float(bound)
    ok = value >= bound if kind == "lower-bound" else value <= bound
    return Record(check, quantity, value, bound, None, kind, bool(ok), provenance, note)


def flag_record(check, quantity, ok, provenance, note="") -> Record:
    return Record(check, quantity, float(bool(ok)), 1.0, None, "flag", bool(ok), provenance, note)


def info_record(check, quantity, value, provenance="", note="") -> Record:
    return Record(check, quantity, float(value), None, None, "", None, provenance, note)


@dataclass
class Table:
    name: str
    header: list
    rows: list

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        for r in self.rows:
            w.writerow([_csv_cell(v) for v in r])
        return buf.getvalue()


def _csv_cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


@dataclass
class RunResult:
    records: list = field(default_factory=list)
    tables: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def all_passed(self) -> bool:
        return all(r.passed is not False for r in self.records)


# ---------------------------------------------------------------------------
# scenarios
# ---------------------------------------------------------------------------


class ScenarioError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None, key: Optional[str] = None):
        self.line, self.key = line, key
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"field '{key}'")
        super().__init__((", ".join(where) + ": " if where else "") + message)


@dataclass(frozen=True)
class Key:
    kind: Callable
    default: Any
    help: str
    choices: tuple = ()
    check: Optional[Callable[[Any], bool]] = None
    check_msg: str = ""


def _float(s: str) -> float:
    v = float(s)
    if math.isnan(v):
        raise ValueError("nan is not allowed")
    return v


def _int(s: str) -> int:
    return int(s, 10)


def _str(s: str) -> str:
    return s


_positive = (lambda v: v > 0, "must be positive")
_alpha = (lambda v: 0 < v <= 2, "must lie in (0, 2]")

COMMON = {
    "command": Key(_str, None, "optional; must match the command given on the command line"),
    "alpha": Key(_float, 2.0, "Riesz parameter alpha in (0, 2] (n = 3 throughout)", (), *_alpha),
    "resolution": Key(_str, "medium", "resolution ladder level", RESOLUTION_NAMES),
}

SCHEMAS = {
    "capacity": {
        "shape": Key(_str, "disc", "plate shape", ("disc", "sphere", "ball")),
        "radius_length": Key(_float, 1.0, "plate radius", (), *_positive),
        "nodes": Key(_int, 2000, "plate node count", (), lambda v: v >= 16, "must be at least 16"),
        "kernel": Key(_str, "riesz", "kernel: riesz (whole space) or green (half-space x_1 > 0)", ("riesz", "green")),
        "height_length": Key(_float, 1.0, "distance of the plate centre from the plane x_1 = 0 (green kernel)",
                             (), *_positive),
    },
    "equilibrium": {
        "radius_length": Key(_float, 1.0, "disc radius", (), *_positive),
        "height_length": Key(_float, 0.1, "disc height above the plane x_1 = 0", (), *_positive),
    },
    "balayage": {
        "atoms": Key(_int, 8, "number of random point charges in x_1 > 0", (), lambda v: 1 <= v <= 10,
                     "must lie in 1..10"),
        "seed": Key(_int, 1, "random seed"),
        "probes": Key(_int, 50, "number of probe points in D", (), lambda v: v >= 1, "must be >= 1"),
    },
    "condenser": {
        "plate": Key(_str, "disc", "positive plate shape in the half-space", ("disc", "ball")),
        "radius_length": Key(_float, 1.0, "plate radius", (), *_positive),
        "height_length": Key(_float, 0.5, "distance of the plate centre from the plane x_1 = 0", (), *_positive),
        "probes": Key(_int, 200, "probe points for the condenser potential", (), lambda v: v >= 1, "must be >= 1"),
        "weak_energy": Key(_str, "yes", "also compute the weak energy of lam - lam'", ("yes", "no")),
    },
    "gauss": {
        "radius_length": Key(_float, 1.0, "disc plate radius", (), *_positive),
        "height_length": Key(_float, 0.5, "plate height above the plane x_1 = 0", (), *_positive),
        "field": Key(_str, "none", "external field: none, case1 (nonnegative values), case2 (Green potential)",
                     ("none", "case1", "case2")),
        "field_strength": Key(_float, 1.0, "field scale (case1: f = s |x - c|^2, case2: charge s at height + 0.5)",
                              (), lambda v: v >= 0, "must be >= 0"),
        "constraint_density": Key(_float, math.inf, "upper density of admissible measures (inf: none)", (),
                                  *_positive),
        "nodes": Key(_int, 800, "plate node count", (), lambda v: v >= 16, "must be at least 16"),
    },
    "thinness": {
        "profile": Key(_str, "power", "profile: power (x^-s) or exp (exp(-x^s))", ("power", "exp")),
        "s": Key(_float, 1.0, "profile exponent", (), lambda v: v >= 0, "must be >= 0"),
        "q": Key(_float, 2.0, "shell ratio", (), lambda v: v > 1, "must exceed 1"),
        "k_max": Key(_int, 6, "number of shells", (), lambda v: 4 <= v <= 8, "must lie in 4..8"),
    },
    "example10": {
        "j_max": Key(_int, 6, "largest index j of the disc chain", (), lambda v: v >= 3, "must be >= 3"),
        "a": Key(_float, 4.0, "spacing constant", (), lambda v: v >= 4, "must be >= 4"),
    },
    "identities": {
        "weak_energy": Key(_str, "yes", "include the weak-energy identities", ("yes", "no")),
    },
}


@dataclass
class Scenario:
    command: str
    values: dict
    explicit: set

    def __getitem__(self, k):
        return self.values[k]


def parse_scenario(text: str, command: str) -> Scenario:
    if command not in SCHEMAS:
        raise ScenarioError(f"unknown command {command!r}")
    schema = {**COMMON, **SCHEMAS[command]}
    values, explicit, seen = {}, set(), {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ScenarioError("expected 'key = value'", lineno)
        key, val = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ScenarioError("empty key", lineno)
        if key not in schema:
            raise ScenarioError(f"unknown key for command '{command}'", lineno, key)
        if key in seen:
            raise ScenarioError(f"duplicate key (first set on line {seen[key]})", lineno, key)
        seen[key] = lineno
        spec = schema[key]
        try:
            v = spec.kind(val)
        except ValueError as e:
            raise ScenarioError(f"cannot parse {val!r}: {e}", lineno, key) from None
        if spec.choices and v not in spec.choices:
            raise ScenarioError(f"{val!r} is not one of {', '.join(spec.choices)}", lineno, key)
        if spec.check is not None and not spec.check(v):
            raise ScenarioError(f"{val!r} {spec.check_msg}", lineno, key)
        values[key] = v
        explicit.add(key)
    if "command" in values and values["command"] != command:
        raise ScenarioError(f"scenario is for '{values['command']}', not '{command}'", seen["command"], "command")
    for k, spec in schema.items():
        values.setdefault(k, spec.default)
    values["command"] = command
    return Scenario(command, values, explicit)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _params(sc: Scenario):
    from .geometry import KernelParams

    return KernelParams(3, sc["alpha"])


def _need_newtonian(sc: Scenario, what: str):
    if sc["alpha"] != 2.0:
        raise ScenarioError(f"{what} uses the closed-form Newtonian half-space kernel; set alpha = 2", key="alpha")


def run_capacity(sc: Scenario) -> RunResult:
    from .geometry import HalfSpace, make_ball_cloud, make_disc_cloud, make_sphere_cloud
    from .solver import capacity

    p = _params(sc)
    out = RunResult()
    r, n = sc["radius_length"], sc["nodes"]
    if sc["kernel"] == "green":
        _need_newtonian(sc, "the green kernel")
        centre = (sc["height_length"], 0.0, 0.0)
        if sc["shape"] != "disc" and sc["height_length"] <= r:
            raise ScenarioError("the plate must lie inside x_1 > 0 (height must exceed the radius)",
                                key="height_length")
    else:
        centre = (0.0, 0.0, 0.0)
    cloud = {"disc": lambda: make_disc_cloud(r, centre, n),
             "sphere": lambda: make_sphere_cloud(r, centre, n),
             "ball": lambda: make_ball_cloud(r, centre, n)}[sc["shape"]]()
    domain = HalfSpace() if sc["kernel"] == "green" else None
    res = capacity(cloud, sc["kernel"], p, domain, sc["resolution"])
    chk = f"{sc['kernel']}-capacity-{sc['shape']}"
    cert = res.solution.cert
    out.records.append(info_record(chk, "capacity", res.value, "minimum energy over unit-mass measures"))
    out.records.append(bound_record(chk, "certificate_violation", max(cert.lower_violation, cert.upper_violation),
                                    cert.tolerance, "upper-bound", "equilibrium-potential-inequalities"))
    if sc["kernel"] == "riesz" and p.newtonian:
        if sc["shape"] == "disc":
            out.records.append(rel_record(chk, "capacity_vs_2/pi^2", res.value, 2.0 / math.pi**2 * r, 0.05,
                                          "disc-capacity-closed-form",
                                          "kernel 1/|x-y|; see 2/pi below for the same normalization"))
            out.records.append(info_record(chk, "reference_2/pi", 2.0 / math.pi * r, "disc-capacity-1/|x-y|",
                                           "closed form for the kernel 1/|x-y| without 4 pi"))
        elif sc["shape"] == "sphere":
            out.records.append(rel_record(chk, "capacity_vs_radius", res.value, r, 0.05,
                                          "ball-capacity-closed-form"))
        else:
            out.records.append(info_record(chk, "reference_radius", r, "ball-capacity-closed-form",
                                           "volume clouds converge slowly to the surface charge"))
    elif sc["kernel"] == "green" and sc["shape"] == "disc":
        out.records.append(bound_record(chk, "green_capacity_vs_2/pi^2", res.value, 2.0 / math.pi**2 * r,
                                        "lower-bound", "green-kernel-below-riesz-kernel"))
    lam = res.measure
    out.tables.append(Table("capacity_measure", ["x1", "x2", "x3", "mass"],
                            [(*pt, m) for pt, m in zip(lam.cloud.points, lam.weights)]))
    return out


def run_equilibrium(sc: Scenario) -> RunResult:
    from . import disc_chain as dc

    _need_newtonian(sc, "the disc equilibrium")
    out = RunResult()
    r, eps = sc["radius_length"], sc["height_length"]
    n = dc._nodes(sc["resolution"])
    cg = dc.green_disc_capacity(r, eps, n)
    out.records.append(info_record("green-equilibrium-disc", "c_g", cg, "green-equilibrium-mass"))
    err = dc.homogeneity_check(r, eps, sc["resolution"])
    out.records.append(bound_record("green-equilibrium-disc", "scaling_identity_relative_error", err, 0.02,
                                    "upper-bound", "green-capacity-homogeneity"))
    out.records.append(bound_record("green-equilibrium-disc", "psi_lower_bound", cg / r, dc.TWO_OVER_PI2,
                                    "lower-bound", "green-kernel-below-riesz-kernel"))
    return out


def run_balayage(sc: Scenario) -> RunResult:
    from .balayage import sweep_in_domain
    from .geometry import DiscreteMeasure, HalfSpace
    from .kernels import potential

    _need_newtonian(sc, "the reflection oracle")
    p = _params(sc)
    out = RunResult()
    rng = np.random.default_rng(sc["seed"])
    k = sc["atoms"]
    P = np.column_stack([rng.uniform(0.3, 2.0, k), rng.uniform(-1, 1, k), rng.uniform(-1, 1, k)])
    m = rng.uniform(0.5, 1.5, k)
    mu = DiscreteMeasure.atoms(P, m)
    D = HalfSpace()
    r = sweep_in_domain(mu, D, p, sc["resolution"])
    X = np.column_stack([rng.uniform(0.1, 3, sc["probes"]), rng.uniform(-3, 3, sc["probes"]),
                         rng.uniform(-3, 3, sc["probes"])])
    ref = potential(mu.cloud, m, D.reflect(X), p, cells=False)
    got = potential(r.swept.cloud, r.swept.weights, X, p)
    err = float(np.max(np.abs(got - ref) / ref))
    out.records.append(bound_record("balayage-half-space", "potential_relative_error", err, 0.02, "upper-bound",
                                    "sweep-equals-reflection"))
    out.records.append(rel_record("balayage-half-space", "mass_ratio", r.mass_out / r.mass_in, 1.0, 0.03,
                                  "mass-preserved-when-complement-not-thin"))
    out.records.append(info_record("balayage-half-space", "truncation_radius", r.R))
    out.records.append(info_record("balayage-half-space", "tail_bound", r.tail_bound))
    out.tables.append(Table("balayage_probes", ["x1", "x2", "x3", "swept_potential", "reflected_potential"],
                            [(*x, g, f) for x, g, f in zip(X, got, ref)]))
    return out


def _halfspace_plate(sc: Scenario, res):
    from .geometry import make_ball_cloud, make_disc_cloud

    r, h = sc["radius_length"], sc["height_length"]
    if sc.values.get("plate", "disc") == "ball":
        if h <= r:
            raise ScenarioError("a ball plate needs height > radius to stay in x_1 > 0", key="height_length")
        return make_ball_cloud(r, (h, 0.0, 0.0), res.ball_nodes)
    return make_disc_cloud(r, (h, 0.0, 0.0), res.disc_nodes)


def run_condenser(sc: Scenario) -> RunResult:
    from .config import get_resolution
    from .geometry import HalfSpace, make_condenser
    from .solver import condenser_measure, signed_potential, solve_condenser

    _need_newtonian(sc, "the half-space condenser")
    p = _params(sc)
    res = get_resolution(sc["resolution"])
    out = RunResult()
    D = HalfSpace()
    A1 = _halfspace_plate(sc, res)
    C = make_condenser(D, A1, res, p)
    sol = solve_condenser(C, p=p, resolution=res, weak=sc["weak_energy"] == "yes")
    cm = condenser_measure(C, p, res)
    chk = f"condenser-{sc['plate']}"
    w = sol.gauss.w
    out.records.append(rel_record(chk, "w_vs_inverse_green_capacity", w, 1.0 / cm.c_g, 1e-6,
                                  "minimal-energy-equals-inverse-capacity"))
    if sc["weak_energy"] == "yes":
        out.records.append(rel_record(chk, "weak_energy_of_difference_vs_w", sol.alpha_objective_weak, w, 0.05,
                                      "weak-energy-equals-inverse-green-capacity"))
        out.records.append(info_record(chk, "weak_energy_tail_bound", sol.weak_tail_bound))
    if C.separation > 0:
        out.records.append(info_record(chk, "standard_energy_of_difference", sol.alpha_objective_standard))
    cert = sol.gauss.cert
    out.records.append(bound_record(chk, "certificate_violation", max(cert.lower_violation, cert.upper_violation),
                                    cert.tolerance, "upper-bound", "frostman-inequalities"))
    # condenser measure
    edge = A1.edge_mask()
    v1 = signed_potential(cm.theta, A1.points[~edge], p)
    v2 = signed_potential(cm.theta, C.A2.points, p)
    rng = np.random.default_rng(0)
    k = sc["probes"]
    ext = float(np.max(np.abs(A1.points))) + 2.0
    X = rng.uniform(-ext, ext, (k, 3))
    v3 = signed_potential(cm.theta, X, p)
    out.records.append(abs_record(chk, "theta_potential_on_plate_max_deviation", float(np.max(np.abs(v1 - 1.0))),
                                  0.0, 0.03, "condenser-measure-potential-one-on-plate"))
    out.records.append(abs_record(chk, "theta_potential_on_complement_max", float(np.max(np.abs(v2))), 0.0, 0.03,
                                  "condenser-measure-potential-zero-off-domain"))
    out.records.append(bound_record(chk, "theta_potential_probe_min", float(v3.min()), -0.03, "lower-bound",
                                    "condenser-measure-potential-between-0-and-1"))
    out.records.append(bound_record(chk, "theta_potential_probe_max", float(v3.max()), 1.03, "upper-bound",
                                    "condenser-measure-potential-between-0-and-1"))
    out.tables.append(Table("condenser_probes", ["x1", "x2", "x3", "theta_potential"],
                            [(*x, v) for x, v in zip(X, v3)]))
    return out


def run_gauss(sc: Scenario) -> RunResult:
    from .geometry import DiscreteMeasure, HalfSpace, SignedDiscreteMeasure, make_disc_cloud
    from .solver import ConstraintSpec, ExternalFieldSpec, perturb_solution, solve_gauss

    _need_newtonian(sc, "the half-space Gauss problem")
    p = _params(sc)
    out = RunResult()
    r, h = sc["radius_length"], sc["height_length"]
    A1 = make_disc_cloud(r, (h, 0.0, 0.0), sc["nodes"])
    s = sc["field_strength"]
    if sc["field"] == "case1":
        fs = ExternalFieldSpec("case1", s * np.sum((A1.points - A1.points.mean(axis=0)) ** 2, axis=1))
    elif sc["field"] == "case2":
        z = DiscreteMeasure.atoms([[h + 0.5, 0.0, 0.0]], [s])
        fs = ExternalFieldSpec("case2", zeta=SignedDiscreteMeasure.positive(z))
    else:
        fs = ExternalFieldSpec()
    dens = sc["constraint_density"]
    cons = ConstraintSpec.unbounded() if math.isinf(dens) else ConstraintSpec.from_density(A1, dens)
    if cons.total_mass < 1.0:
        raise ScenarioError(f"constraint total mass {cons.total_mass:.4g} < 1: no admissible measure",
                            key="constraint_density")
    sol = solve_gauss(A1, fs, cons, HalfSpace(), p, sc["resolution"])
    c = sol.cert
    chk = f"gauss-{sc['field']}"
    out.records.append(info_record(chk, "objective", sol.objective))
    out.records.append(info_record(chk, "w", sol.w))
    out.records.append(bound_record(chk, "lower_violation", c.lower_violation, c.tolerance, "upper-bound",
                                    "frostman-inequalities"))
    out.records.append(bound_record(chk, "upper_violation", c.upper_violation, c.tolerance, "upper-bound",
                                    "frostman-inequalities"))
    tol_w = 1e-4 * max(1.0, abs(c.w_primary))
    if math.isfinite(c.w_slack):
        out.records.append(abs_record(chk, "w_slack_average", c.w_slack, c.w_primary, tol_w,
                                      "w-as-average-over-constraint-slack"))
    if math.isfinite(c.w_mass):
        out.records.append(abs_record(chk, "w_mass_average", c.w_mass, c.w_primary, tol_w,
                                      "w-as-average-over-minimizer"))
    if not sol.saturated:
        pert = perturb_solution(sol, 0.01)
        v = max(pert.cert.lower_violation, pert.cert.upper_violation)
        out.records.append(bound_record(chk, "perturbed_violation", v, 10 * c.tolerance, "lower-bound",
                                        "frostman-inequalities-detect-non-minimizers"))
    else:
        out.notes.append("constraint saturated: the unique admissible measure was returned")
    out.tables.append(Table("gauss_measure", ["x1", "x2", "x3", "mass", "weighted_potential"],
                            [(*pt, m, W) for pt, m, W in zip(A1.points, sol.lam.weights,
                                                             sol.G @ sol.lam.weights + sol.f)]))
    return out


def run_thinness(sc: Scenario) -> RunResult:
    from .thinness import Profile, wiener_test

    _need_newtonian(sc, "shell capacities")
    p = _params(sc)
    out = RunResult()
    prof = Profile(sc["profile"], sc["s"])
    rep = wiener_test(prof, p, sc["q"], sc["k_max"])
    chk = f"thinness-{prof.kind}-s{prof.s:g}"
    out.records.append(Record(chk, "classification_matches_profile_family", float(rep.classification == prof.expected),
                              1.0, None, "flag", rep.classification == prof.expected, "rotation-body-thinness",
                              f"computed {rep.classification}, expected {prof.expected}"))
    out.records.append(info_record(chk, "t_k_log_rate", rep.t_rate, "wiener-series-fit", f"+/- {rep.t_rate_se:.3g}"))
    out.records.append(info_record(chk, "c_k_log_rate", rep.c_rate, "capacity-series-fit", f"+/- {rep.c_rate_se:.3g}"))
    for k, c, t in rep.shells:
        out.records.append(info_record(chk, f"c_{k}", c, "shell-capacity"))
    out.tables.append(Table("thinness", ["k", "c_k", "t_k", "partial_sum_t", "partial_sum_c", "method"],
                            [(*row, m) for row, m in zip(rep.rows(), rep.methods)]))
    out.notes.append("classification is extrapolated from finitely many shells")
    return out


def run_example10(sc: Scenario) -> RunResult:
    from . import disc_chain as dc

    _need_newtonian(sc, "the disc chain")
    out = RunResult()
    res = sc["resolution"]
    h = dc.disc_spacing(1.0, dc.DISC_NODES[res])
    schedule = [d for d in dc.DEFAULT_SCHEDULE if d >= h]
    chk = "disc-chain"
    if len(schedule) < len(dc.DEFAULT_SCHEDULE):
        dropped = [d for d in dc.DEFAULT_SCHEDULE if d < h]
        out.notes.append(f"heights {dropped} are below the node spacing {h:.3g} and were dropped")
    out.records.append(bound_record(chk, "psi_schedule_points", len(schedule), 5, "lower-bound",
                                    "psi-diverges-at-zero-height"))
    pc = dc.compute_psi(schedule, res)
    out.records.append(flag_record(chk, "psi_increasing_as_delta_decreases", pc.increasing_as_delta_decreases,
                                   "psi-diverges-at-zero-height"))
    out.records.append(bound_record(chk, "psi_min", float(pc.values.min()), dc.TWO_OVER_PI2, "lower-bound",
                                    "green-kernel-below-riesz-kernel"))
    for d, e in pc.identity_errors:
        out.records.append(bound_record(chk, f"scaled_disc_identity_error_delta={d:g}", e, 0.02, "upper-bound",
                                        "green-capacity-homogeneity"))
    for r, eps in ((0.5, 0.1), (2.0, 0.4)):
        out.records.append(bound_record(chk, f"homogeneity_error_r={r:g}_eps={eps:g}",
                                        dc.homogeneity_check(r, eps, res), 0.02, "upper-bound",
                                        "green-capacity-homogeneity"))
    rep = dc.build_F(sc["j_max"], sc["a"], res, pc)
    for rt in rep.roots:
        out.records.append(rel_record(chk, f"psi(delta_{rt.j})", rt.psi, rt.j, 0.02, "height-with-psi-equal-j"))
    out.records.append(bound_record(chk, "consecutive_j_found", len(rep.roots), 3, "lower-bound",
                                    "height-with-psi-equal-j"))
    checks = rep.checks()
    prov = {
        "capacity_matches_j^-2": "piece-capacity-j^-2",
        "capacity_sum_bounded": "piece-capacities-summable",
        "g_gamma_in_[1/2,1]": "piece-potential-between-half-and-one",
        "cross_terms_bounded": "cross-potential-bound",
        "c_g_at_most_twice_gamma": "capacity-at-most-twice-piece-mass",
        "energy_dominates_1/(8j)": "newtonian-energy-lower-bound",
        "separation_at_least_a-2": "piece-separation",
        "diameter_at_most_2r": "piece-diameter",
    }
    for name, ok in checks.items():
        out.records.append(flag_record(chk, name, ok, prov[name]))
    for rec in rep.records:
        out.records.append(bound_record(chk, f"min_g_gamma_{rec.j}", rec.g_gamma_min, 0.47, "lower-bound",
                                        "piece-potential-between-half-and-one"))
    cg, en, lb = rep.partial_sums
    out.records.append(bound_record(chk, "energy_partial_sum", float(en[-1]), float(lb[-1]), "lower-bound",
                                    "newtonian-energy-lower-bound"))
    out.records.append(info_record(chk, "a", rep.a))
    out.records.append(info_record(chk, "gamma_F", rep.gamma_F))
    if rep.skipped:
        out.notes.append(f"indices {rep.skipped} are not resolvable at this resolution")
    out.tables.append(Table("psi", ["delta", "psi", "scaled_identity_error"], pc.rows()))
    out.tables.append(Table("disc_chain", ["j", "delta_j", "eps_j", "r_j", "s_j", "c_g", "gamma_mass",
                                           "min_g_gamma", "max_g_gamma", "energy", "energy_bound",
                                           "partial_sum_c_g", "partial_sum_energy", "partial_sum_1/(8j)"],
                            rep.rows()))
    return out


def run_identities(sc: Scenario) -> RunResult:
    from .identities import GREEN_NORM_TOL, GREEN_WEAK_TOL, STANDARD_WEAK_TOL, check_case, standard_cases

    _need_newtonian(sc, "the identity cases")
    out = RunResult()
    weak = sc["weak_energy"] == "yes"
    for case in standard_cases(sc["resolution"]):
        r = check_case(case, _params(sc), sc["resolution"], weak)
        chk = f"identities-{r.case}"
        out.records.append(rel_record(chk, "green_norm_vs_difference_of_norms", r.norm_difference, r.green_norm,
                                      GREEN_NORM_TOL, "green-norm-equals-difference-of-norms"))
        if weak:
            out.records.append(rel_record(chk, "green_energy_vs_weak_energy_of_difference", r.weak_of_difference,
                                          r.green_norm, GREEN_WEAK_TOL, "green-energy-equals-weak-energy"))
            out.records.append(rel_record(chk, "standard_vs_weak_energy", r.weak, r.standard, STANDARD_WEAK_TOL,
                                          "standard-energy-equals-weak-energy"))
    return out


COMMANDS = {
    "capacity": run_capacity,
    "equilibrium": run_equilibrium,
    "balayage": run_balayage,
    "condenser": run_condenser,
    "gauss": run_gauss,
    "thinness": run_thinness,
    "example10": run_example10,
    "identities": run_identities,
}


# ---------------------------------------------------------------------------
# selftest
# ---------------------------------------------------------------------------


def _selftest_checks():
    """Fast checks: (name, callable returning (passed, detail))."""
    from .balayage import sweep_in_domain
    from .energy import energy_standard
    from .geometry import DiscreteMeasure, HalfSpace, KernelParams, make_disc_cloud, make_sphere_cloud
    from .identities import check_case, standard_cases
    from .kernels import potential
    from .solver import capacity, perturb_solution, solve_gauss_matrix, unsolvability_demo
    from .thinness import Profile, wiener_test

    p = KernelParams()

    def energy_positive():
        rng = np.random.default_rng(3)
        c = make_disc_cloud(1.0, (0.0, 0.0, 0.0), 300)
        mu = DiscreteMeasure(c, rng.uniform(0.0, 1.0, len(c)))
        e = energy_standard(mu, p)
        return e > 0, f"E = {e:.6g}"

    def sphere_capacity():
        v = capacity(make_sphere_cloud(1.0, (0.0, 0.0, 0.0), 800)).value
        return abs(v - 1.0) <= 0.05, f"c = {v:.6g} (target 1)"

    def sweep_reflection():
        rng = np.random.default_rng(1)
        P = np.column_stack([rng.uniform(0.3, 2, 6), rng.uniform(-1, 1, 6), rng.uniform(-1, 1, 6)])
        m = rng.uniform(0.5, 1.5, 6)
        mu = DiscreteMeasure.atoms(P, m)
        D = HalfSpace()
        r = sweep_in_domain(mu, D, p, "coarse")
        X = np.column_stack([rng.uniform(0.1, 3, 50), rng.uniform(-3, 3, 50), rng.uniform(-3, 3, 50)])
        ref = potential(mu.cloud, m, D.reflect(X), p, cells=False)
        got = potential(r.swept.cloud, r.swept.weights, X, p)
        err = float(np.max(np.abs(got - ref) / ref))
        mr = r.mass_out / r.mass_in
        return err <= 0.02 and abs(mr - 1) <= 0.03, f"potential error {err:.3g}, mass ratio {mr:.5f}"

    def certificates():
        rng = np.random.default_rng(5)
        c = make_disc_cloud(1.0, (0.5, 0.0, 0.0), 300)
        from .kernels import green_halfspace_matrix

        G = green_halfspace_matrix(c)
        f = rng.uniform(0.0, 0.5, len(c))
        xi = 2.0 * c.quad_weight / math.pi
        s = solve_gauss_matrix(G, f, xi, c)
        pert = perturb_solution(s)
        v = max(pert.cert.lower_violation, pert.cert.upper_violation)
        return s.cert.passed and v >= 10 * s.cert.tolerance, \
            f"violations {max(s.cert.lower_violation, s.cert.upper_violation):.2e}, perturbed {v:.2e}"

    def brute_force():
        from itertools import product

        rng = np.random.default_rng(7)
        A = rng.normal(size=(3, 3))
        G = A @ A.T + 0.5 * np.eye(3)
        f = rng.normal(size=3) * 0.3
        xi = np.array([0.7, 0.6, 0.5])
        s = solve_gauss_matrix(G, f, xi)
        best = math.inf
        step = 1e-3
        for a, b in product(np.arange(0, 0.7 + step / 2, step), repeat=2):
            c3 = 1 - a - b
            if b <= 0.6 and 0 <= c3 <= 0.5:
                x = np.array([a, b, c3])
                best = min(best, float(x @ G @ x + 2 * f @ x))
        return s.objective <= best + 1e-9, f"solver {s.objective:.9f}, grid {best:.9f}"

    def thinness():
        got = [wiener_test(Profile(k, s)).classification for k, s in (("power", 1.0), ("exp", 1.0), ("exp", 2.0))]
        want = ["not-thin", "thin-infinite-capacity", "finite-capacity"]
        return got == want, ", ".join(got)

    def identities():
        case = standard_cases("coarse")[0]
        r = check_case(case, p, "coarse", weak=False)
        return r.green_norm_error <= 0.02, f"relative error {r.green_norm_error:.3g}"

    def unsolvable():
        tr = unsolvability_demo(node_count=1500, deltas=(1.5, 0.6, 0.3))
        return tr.strictly_decreasing and all(tr.positive), \
            "objectives " + ", ".join(f"{v:.4f}" for v in tr.objectives)

    def determinism():
        c = make_disc_cloud(1.0, (0.5, 0.0, 0.0), 300)
        from .kernels import green_halfspace_matrix

        G = green_halfspace_matrix(c)
        xi = 1.5 * c.quad_weight / math.pi
        a = solve_gauss_matrix(G, None, xi, c).lam.weights
        b = solve_gauss_matrix(G, None, xi, c).lam.weights
        return bool(np.array_equal(a, b)), "bitwise identical" if np.array_equal(a, b) else "differs"

    return [
        ("energy-positivity", energy_positive),
        ("sphere-capacity", sphere_capacity),
        ("sweep-equals-reflection", sweep_reflection),
        ("frostman-certificates", certificates),
        ("brute-force-gauss", brute_force),
        ("rotation-body-thinness", thinness),
        ("green-norm-identity", identities),
        ("unsolvability-trace", unsolvable),
        ("determinism", determinism),
    ]


def selftest() -> RunResult:
    out = RunResult()
    for name, fn in _selftest_checks():
        try:
            ok, detail = fn()
        except Exception as e:          # a crashing check is a failing check
            ok, detail = False, f"{type(e).__name__}: {e}"
        out.records.append(flag_record("selftest", name, ok, name, detail))
    return out


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def summary_text(command: str, sc: Optional[Scenario], result: RunResult, seconds: float) -> str:
    lines = [f"riesz-condenser {command}", ""]
    if sc is not None:
        lines.append("parameters (* = set in the scenario, others are defaults):")
        for k in sorted(sc.values):
            if k == "command":
                continue
            mark = "*" if k in sc.explicit else " "
            lines.append(f"  {mark} {k} = {sc.values[k]}")
        lines.append("")
    width = max([len(r.check) + len(r.quantity) + 1 for r in result.records] + [10])
    for r in result.records:
        status = "info" if r.passed is None else ("PASS" if r.passed else "FAIL")
        tgt = "" if r.target is None else f"  target {r.target:.6g}"
        tol = "" if r.tolerance is None else f" ({r.tolerance_kind} tol {r.tolerance:.3g})"
        if r.tolerance is None and r.tolerance_kind:
            tol = f" ({r.tolerance_kind})"
        note = f"  [{r.note}]" if r.note else ""
        lines.append(f"{status:4}  {(r.check + ' ' + r.quantity):{width}}  {r.value:.6g}{tgt}{tol}{note}")
    for n in result.notes:
        lines.append(f"note: {n}")
    n_fail = sum(r.passed is False for r in result.records)
    n_pass = sum(r.passed is True for r in result.records)
    lines += ["", f"{n_pass} passed, {n_fail} failed, {seconds:.1f} s"]
    return "\n".join(lines) + "\n"


def write_outputs(out_dir: Path, summary: str, result: RunResult):
    """Write everything into a fresh staging directory, then move files into place."""
    out_dir.mkdir(parents=True, exist_ok=True)
    staged = {"summary.txt": summary,
              "records.jsonl": "".join(r.to_json() + "\n" for r in result.records)}
    for t in result.tables:
        staged[f"{t.name}.csv"] = t.to_csv()
    tmp = []
    for name, text in staged.items():
        path = out_dir / (name + ".partial")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        tmp.append((path, out_dir / name))
    for src, dst in tmp:
        os.replace(src, dst)


def _threads_from_env() -> Optional[int]:
    v = os.environ.get("RC_THREADS")
    if v is None:
        return None
    try:
        n = int(v)
    except ValueError:
        n = 0
    if n < 1:
        raise ScenarioError(f"RC_THREADS must be a positive integer, got {v!r}")
    return n


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="riesz-condenser",
                                 description="Minimum Riesz and Green energy problems for condensers.")
    ap.add_argument("command", choices=sorted(COMMANDS) + ["selftest"])
    ap.add_argument("--scenario", type=Path, help="flat key = value scenario file")
    ap.add_argument("--resolution", choices=RESOLUTION_NAMES, help="overrides the scenario's resolution")
    ap.add_argument("--out", type=Path, help="directory for summary.txt, records.jsonl and CSV tables")
    ap.add_argument("--list-keys", action="store_true", help="print the scenario keys of the command and exit")
    return ap


def _list_keys(command: str) -> str:
    schema = {**COMMON, **SCHEMAS.get(command, {})}
    lines = []
    for k, spec in schema.items():
        ch = f" [{'|'.join(spec.choices)}]" if spec.choices else ""
        lines.append(f"{k} = {spec.default}{ch}    # {spec.help}")
    return "\n".join(lines) + "\n"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _threads_from_env()
        if args.list_keys:
            sys.stdout.write(_list_keys(args.command))
            return EXIT_OK
        sc = None
        if args.command != "selftest":
            text = ""
            if args.scenario is not None:
                try:
                    text = args.scenario.read_text(encoding="utf-8")
                except OSError as e:
                    raise ScenarioError(f"cannot read scenario: {e}") from None
            sc = parse_scenario(text, args.command)
            if args.resolution:
                sc.values["resolution"] = args.resolution
        elif args.scenario is not None:
            raise ScenarioError("selftest takes no scenario")
    except ScenarioError as e:
        print(f"scenario error: {e}", file=sys.stderr)
        return EXIT_SCENARIO
    t0 = time.perf_counter()
    try:
        result = selftest() if sc is None else COMMANDS[args.command](sc)
    except ScenarioError as e:
        print(f"scenario error: {e}", file=sys.stderr)
        return EXIT_SCENARIO
    except Exception as e:
        mod = type(e).__module__
        print(f"computation failed ({mod}.{type(e).__name__}): {e}", file=sys.stderr)
        return EXIT_COMPUTE
    text = summary_text(args.command, sc, result, time.perf_counter() - t0)
    sys.stdout.write(text)
    if args.out is not None:
        write_outputs(args.out, text, result)
    return EXIT_OK if result.all_passed else EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
