"""Batch runs of the validity presets, their ordinal checks, and oracle validation."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from dhocbf.barrier import LinearConstraintRow
from dhocbf.geometry import PlacedShape, ShapeSpec, rect_corners, shape_min_distance
from dhocbf.metrics import ade, trace_positions
from dhocbf.safety_filter import brute_force_qp, solve_qp2
from dhocbf.simulator import (
    Scenario,
    TraceRecord,
    build_preset,
    perturbation_switch_time,
    reference_positions,
    run_scenario,
)

MODES = ("hocbf", "dhocbf")
STATIC_EQUIVALENCE_TOL = 1e-9
DISTANCE_TIE_TOL = 1e-6


@dataclass
class RunResult:
    scenario: Scenario
    mode: str
    label: str
    trace: List[TraceRecord]
    ade_ref: float

    @property
    def min_distance(self) -> float:
        return min(r.min_distance for r in self.trace)

    def count(self, status: str) -> int:
        return sum(1 for r in self.trace if r.status == status)


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class PresetResult:
    name: str
    runs: List[RunResult] = field(default_factory=list)

    def by_mode(self, mode: str) -> List[RunResult]:
        return [r for r in self.runs if r.mode == mode]

    def get(self, label: str, mode: str) -> RunResult:
        for r in self.runs:
            if r.label == label and r.mode == mode:
                return r
        raise KeyError((label, mode))


def run_one(s: Scenario, label: str = "") -> RunResult:
    trace = run_scenario(s)
    times = [r.t for r in trace]
    ref = reference_positions(s, times)
    ade_ref = ade(trace_positions(trace), ref) if ref is not None else math.nan
    return RunResult(s, s.filter.mode, label or s.name, trace, ade_ref)


def _label(s: Scenario, preset: str) -> str:
    # "<preset>_<label>_<mode>" -> "<label>"
    return s.name[len(preset) + 1 : s.name.rindex("_")]


def run_preset(name: str, modes: Sequence[str] = MODES, overrides: Optional[dict] = None, jobs: int = 1) -> PresetResult:
    scenarios = [s for mode in modes for s in build_preset(name, mode, overrides)]
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        runs = list(pool.map(lambda s: run_one(s, _label(s, name)), scenarios))
    return PresetResult(name, runs)


def forward_invariance_violations(trace: Sequence[TraceRecord]) -> int:
    """Optimal-status steps where some obstacle has distance <= 0 or h < 0."""
    return sum(1 for r in trace if r.status == "optimal" and (r.min_distance <= 0 or r.min_h < 0))


def static_equivalence_gap(hocbf: RunResult, dhocbf: RunResult, switch_time: float) -> float:
    gap = 0.0
    for a, b in zip(hocbf.trace, dhocbf.trace):
        if a.t >= switch_time:
            break
        gap = max(gap, abs(a.u_applied.ux - b.u_applied.ux), abs(a.u_applied.uy - b.u_applied.uy))
    return gap


def post_switch_min_distance(run: RunResult, switch_time: float) -> float:
    return min(r.min_distance for r in run.trace if r.t >= switch_time)


def preset_checks(result: PresetResult) -> List[Check]:
    """Ordinal comparisons between the two barrier modes for one preset."""
    checks = []
    for run in result.runs:
        n = forward_invariance_violations(run.trace)
        if run.mode == "dhocbf":
            checks.append(Check(f"forward_invariance[{run.label}]", n == 0, f"violating optimal steps: {n}"))
    modes = {r.mode for r in result.runs}
    if modes != set(MODES):
        return checks
    if result.name == "perturbation":
        h, d = result.get("switch", "hocbf"), result.get("switch", "dhocbf")
        T = perturbation_switch_time(h.scenario.t_end)
        gap = static_equivalence_gap(h, d, T)
        checks.append(Check("static_equivalence", gap <= STATIC_EQUIVALENCE_TOL, f"max control gap before T: {gap:.3g}"))
        dh, dd = post_switch_min_distance(h, T), post_switch_min_distance(d, T)
        checks.append(
            Check("dynamic_adaptation", dd >= dh - DISTANCE_TIE_TOL, f"min distance after T: dhocbf {dd:.6g}, hocbf {dh:.6g}")
        )
    if result.name == "speed_sweep":
        labels = [r.label for r in result.by_mode("hocbf")]
        gaps = [result.get(l, "hocbf").ade_ref - result.get(l, "dhocbf").ade_ref for l in labels]
        fastest = labels[-1]
        less = result.get(fastest, "dhocbf").ade_ref < result.get(fastest, "hocbf").ade_ref
        monotone = all(b >= a for a, b in zip(gaps, gaps[1:]))
        detail = "ADE gaps (hocbf - dhocbf): " + ", ".join(f"{l}={g:.4g}" for l, g in zip(labels, gaps))
        checks.append(Check("reduced_conservatism", less and monotone, detail))
    return checks


# --- randomized oracle validation -------------------------------------------

VALIDATION_BOX = ((-3.0, -3.0), (3.0, 3.0))
GEOMETRY_TOL = 1e-3
PERIMETER_SAMPLES = 10_000


def random_qp_instance(rng: np.random.Generator, max_rows: int = 6):
    n = int(rng.integers(0, max_rows + 1))
    rows = []
    for i in range(n):
        a = rng.normal(size=2)
        b = float(rng.uniform(-2.0, 6.0))
        rows.append(LinearConstraintRow((float(a[0]), float(a[1])), b, f"r{i}"))
    u_ref = tuple(float(v) for v in rng.uniform(-5.0, 5.0, size=2))
    return u_ref, rows


def qp_gradient_bound(u_star, u_ref, resolution: float) -> float:
    dist = math.hypot(u_star[0] - u_ref[0], u_star[1] - u_ref[1])
    return 2.0 * (dist + resolution)


def check_qp_instance(u_ref, rows, box=VALIDATION_BOX, resolution: float = 1e-3) -> Tuple[bool, float, str]:
    """Compare :func:`solve_qp2` with the grid oracle on one instance.

    Returns ``(ok, deviation, message)``; deviation is the exact objective
    minus the oracle objective (non-positive when the solver is at least as
    good as the best grid point).
    """
    exact = solve_qp2(u_ref, rows, box)
    grid = brute_force_qp(u_ref, rows, box, resolution)
    if grid.status == "infeasible":
        return True, 0.0, "oracle infeasible"
    if exact.status == "infeasible":
        return False, math.inf, "solver infeasible where the grid has a feasible point"
    j_exact = (exact.u_star.ux - u_ref[0]) ** 2 + (exact.u_star.uy - u_ref[1]) ** 2
    j_grid = (grid.u_star.ux - u_ref[0]) ** 2 + (grid.u_star.uy - u_ref[1]) ** 2
    bound = 2.0 * resolution * qp_gradient_bound(tuple(exact.u_star), u_ref, resolution)
    dev = j_exact - j_grid
    return dev <= bound, dev, f"objective exact {j_exact:.9g} vs grid {j_grid:.9g} (bound {bound:.3g})"


def random_rect_pair(rng: np.random.Generator):
    def rect():
        w, l = rng.uniform(0.5, 3.0, size=2)
        c = rng.uniform(-4.0, 4.0, size=2)
        return PlacedShape(ShapeSpec.rectangle(float(w), float(l)), (float(c[0]), float(c[1])), float(rng.uniform(-math.pi, math.pi)))

    return rect(), rect()


def sample_perimeter(p: PlacedShape, n: int = PERIMETER_SAMPLES) -> np.ndarray:
    """``n`` points evenly spaced along a rectangle boundary, corners included."""
    corners = rect_corners(p.box())
    edges = np.roll(corners, -1, axis=0) - corners
    lengths = np.hypot(edges[:, 0], edges[:, 1])
    counts = np.maximum(1, np.round(n * lengths / lengths.sum()).astype(int))
    pts = [corners[i] + np.outer(np.arange(counts[i]) / counts[i], edges[i]) for i in range(4)]
    return np.vstack(pts)


def _inside(points: np.ndarray, p: PlacedShape) -> np.ndarray:
    c, s = math.cos(p.heading), math.sin(p.heading)
    d = points - np.asarray(p.center)
    lx = c * d[:, 0] + s * d[:, 1]
    ly = -s * d[:, 0] + c * d[:, 1]
    return (np.abs(lx) <= 0.5 * p.shape.length) & (np.abs(ly) <= 0.5 * p.shape.width)


def _points_to_boundary(points: np.ndarray, p: PlacedShape) -> np.ndarray:
    corners = rect_corners(p.box())
    best = np.full(len(points), np.inf)
    for i in range(4):
        a1, a2 = corners[i], corners[(i + 1) % 4]
        e = a2 - a1
        r = np.clip((points - a1) @ e / (e @ e), 0.0, 1.0)
        foot = a1 + r[:, None] * e
        best = np.minimum(best, np.hypot(*(points - foot).T))
    return best


def sampled_rect_distance(a: PlacedShape, b: PlacedShape, n: int = PERIMETER_SAMPLES) -> float:
    """Surface distance from dense boundary samples of each rectangle to the other's edges.

    0 when a sample of one rectangle lies inside the other.
    """
    pa, pb = sample_perimeter(a, n), sample_perimeter(b, n)
    if _inside(pa, b).any() or _inside(pb, a).any():
        return 0.0
    return float(min(_points_to_boundary(pa, b).min(), _points_to_boundary(pb, a).min()))


def check_rect_pair(a: PlacedShape, b: PlacedShape, tol: float = GEOMETRY_TOL) -> Tuple[bool, float, str]:
    ab = shape_min_distance(a, b)
    ba = shape_min_distance(b, a)
    oracle = sampled_rect_distance(a, b)
    dev = abs(ab.distance - oracle)
    symmetric = ab.distance == ba.distance and ab.penetration == ba.penetration
    ok = dev <= tol and symmetric
    msg = f"distance {ab.distance:.9g} vs sampled {oracle:.9g}" + ("" if symmetric else " (asymmetric)")
    return ok, dev, msg


@dataclass
class ValidationReport:
    qp_instances: int = 0
    qp_failures: int = 0
    qp_max_deviation: float = -math.inf
    qp_oracle_infeasible: int = 0
    geometry_pairs: int = 0
    geometry_failures: int = 0
    geometry_max_deviation: float = 0.0
    failures: List[Dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.qp_failures == 0 and self.geometry_failures == 0


def run_validation(samples: int = 1000, seed: int = 0, resolution: float = 1e-3, geometry_pairs: Optional[int] = None) -> ValidationReport:
    rng = np.random.default_rng(seed)
    report = ValidationReport()
    for i in range(samples):
        u_ref, rows = random_qp_instance(rng)
        ok, dev, msg = check_qp_instance(u_ref, rows, VALIDATION_BOX, resolution)
        report.qp_instances += 1
        if msg == "oracle infeasible":
            report.qp_oracle_infeasible += 1
        else:
            report.qp_max_deviation = max(report.qp_max_deviation, dev)
        if not ok:
            report.qp_failures += 1
            report.failures.append(
                {
                    "kind": "qp",
                    "index": i,
                    "message": msg,
                    "u_ref": list(u_ref),
                    "rows": [{"a": list(r.a), "b": r.b} for r in rows],
                    "box": [list(VALIDATION_BOX[0]), list(VALIDATION_BOX[1])],
                    "resolution": resolution,
                }
            )
    n_geo = samples // 2 if geometry_pairs is None else geometry_pairs
    for i in range(n_geo):
        a, b = random_rect_pair(rng)
        ok, dev, msg = check_rect_pair(a, b)
        report.geometry_pairs += 1
        report.geometry_max_deviation = max(report.geometry_max_deviation, dev)
        if not ok:
            report.geometry_failures += 1
            report.failures.append(
                {
                    "kind": "geometry",
                    "index": i,
                    "message": msg,
                    "a": {"center": list(a.center), "width": a.shape.width, "length": a.shape.length, "heading": a.heading},
                    "b": {"center": list(b.center), "width": b.shape.width, "length": b.shape.length, "heading": b.heading},
                }
            )
    return report
