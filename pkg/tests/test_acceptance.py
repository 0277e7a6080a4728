"""Acceptance criteria, one test each.

Every test records a PASS/FAIL line that is repeated in the terminal summary.
"""

import time
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest

from dhocbf.barrier import BarrierParams, lie_derivatives
from dhocbf.cli import main
from dhocbf.dynamics import ControlInput, EgoState, obstacle_state_at
from dhocbf.experiments import (
    check_rect_pair,
    forward_invariance_violations,
    post_switch_min_distance,
    random_rect_pair,
    run_preset,
    run_validation,
    static_equivalence_gap,
)
from dhocbf.metrics import ade, fde, success_rate
from dhocbf.planner import IDMParams, idm_acceleration
from dhocbf.simulator import PRESETS, ObstacleRecord, TraceRecord, build_preset, perturbation_switch_time, run_scenario

MATCHED = {"beta1": 1.0, "beta2": 1.0, "dt": 0.1}


def test_01_forward_invariance(report):
    start = time.perf_counter()
    results = [run_preset(name, ("dhocbf",), MATCHED) for name in PRESETS]
    elapsed = time.perf_counter() - start
    bad = {}
    for res in results:
        for run in res.runs:
            n = forward_invariance_violations(run.trace)
            if n:
                bad[run.scenario.name] = n
    optimal = sum(run.count("optimal") for res in results for run in res.runs)
    passed = not bad and elapsed < 5.0
    report(1, "forward invariance", passed, f"{optimal} optimal steps, violations {bad or 0}, runtime {elapsed:.2f} s")
    assert not bad
    assert elapsed < 5.0


@pytest.fixture(scope="module")
def perturbation():
    return run_preset("perturbation", ("hocbf", "dhocbf"), MATCHED)


def test_02_static_equivalence(report, perturbation):
    h, d = perturbation.get("switch", "hocbf"), perturbation.get("switch", "dhocbf")
    T = perturbation_switch_time(h.scenario.t_end)
    gap = static_equivalence_gap(h, d, T)
    steps = sum(1 for r in h.trace if r.t < T)
    report(2, "static equivalence", gap <= 1e-9, f"max |u_hocbf - u_dhocbf| over {steps} steps before T={T:g} s: {gap:.3g}")
    assert steps > 0
    assert gap <= 1e-9


def test_03_dynamic_adaptation(report, perturbation):
    h, d = perturbation.get("switch", "hocbf"), perturbation.get("switch", "dhocbf")
    T = perturbation_switch_time(h.scenario.t_end)
    dh, dd = post_switch_min_distance(h, T), post_switch_min_distance(d, T)
    passed = dd >= dh - 1e-6
    report(3, "dynamic adaptation", passed, f"min distance after T: dhocbf {dd:.6g} m, hocbf {dh:.6g} m")
    assert passed


def test_04_reduced_conservatism(report):
    res = run_preset("speed_sweep", ("hocbf", "dhocbf"), dict(MATCHED, variant="exact_relative"))
    labels = [r.label for r in res.by_mode("hocbf")]
    speeds = [r.scenario.obstacles[0].segments[0][1][0] for r in res.by_mode("hocbf")]
    assert speeds == [0.0, 1.0, 3.0]
    ades = {(l, m): res.get(l, m).ade_ref for l in labels for m in ("hocbf", "dhocbf")}
    gaps = [ades[(l, "hocbf")] - ades[(l, "dhocbf")] for l in labels]
    fastest = labels[-1]
    less = ades[(fastest, "dhocbf")] < ades[(fastest, "hocbf")]
    monotone = all(b >= a for a, b in zip(gaps, gaps[1:]))
    detail = (
        f"ADE at 3 m/s: dhocbf {ades[(fastest, 'dhocbf')]:.4g} m, hocbf {ades[(fastest, 'hocbf')]:.4g} m; "
        f"gaps over speeds 0,1,3: {', '.join(f'{g:.4g}' for g in gaps)}"
    )
    report(4, "reduced conservatism", less and monotone, detail)
    assert less
    assert monotone


def test_05_qp_exactness(report, tmp_path, capsys):
    start = time.perf_counter()
    code = main(["validate", "--samples", "1000", "--seed", "0", "--resolution", "1e-3", "-o", str(tmp_path)])
    elapsed = time.perf_counter() - start
    out = capsys.readouterr().out
    rep = run_validation(1000, 0, 1e-3, geometry_pairs=0)
    misclassified = [f for f in rep.failures if "infeasible" in f.get("message", "")]
    passed = code == 0 and rep.qp_failures == 0 and not misclassified and elapsed < 10.0
    report(
        5,
        "QP exactness",
        passed,
        f"{rep.qp_instances} instances ({rep.qp_oracle_infeasible} grid-infeasible), failures {rep.qp_failures}, "
        f"max objective deviation {rep.qp_max_deviation:.3g}, validate runtime {elapsed:.2f} s",
    )
    print(out)
    assert code == 0
    assert rep.qp_failures == 0 and not misclassified
    assert elapsed < 10.0


def _difference_errors(dt):
    """Max first- and second-difference errors of h along the fastest speed_sweep run."""
    s = replace(build_preset("speed_sweep", "dhocbf", dict(MATCHED, dt=dt))[-1], dt=dt)
    trace = run_scenario(s)
    profile = s.obstacles[0]
    p = BarrierParams(1.0, 1.0, "exact_relative")
    e1 = e2 = 0.0
    for k in range(1, len(trace) - 1):
        r = trace[k]
        ev = lie_derivatives(r.ego, obstacle_state_at(profile, r.t), r.obstacles[0].d_safe, p)
        h_prev, h0, h_next = (trace[j].obstacles[0].h for j in (k - 1, k, k + 1))
        e1 = max(e1, abs((h_next - h0) / dt - (ev.lf_h + ev.lfobs_h)))
        hdd = ev.second_order_drift + ev.lglf_h[0] * r.u_applied.ux + ev.lglf_h[1] * r.u_applied.uy
        e2 = max(e2, abs((h_next - 2 * h0 + h_prev) / dt**2 - hdd))
    return e1, e2


def test_06_derivative_consistency(report):
    dts = (0.1, 0.05, 0.025)
    errs = [_difference_errors(dt) for dt in dts]
    c1 = [e[0] / dt for e, dt in zip(errs, dts)]
    c2 = [e[1] / dt for e, dt in zip(errs, dts)]

    def stable(cs):
        return all(0.8 <= b / a <= 1.25 for a, b in zip(cs, cs[1:]))

    passed = stable(c1) and stable(c2)
    detail = (
        "fitted C (first difference) " + ", ".join(f"{c:.4g}" for c in c1)
        + "; (second difference) " + ", ".join(f"{c:.4g}" for c in c2)
        + f" at dt = {', '.join(f'{d:g}' for d in dts)}"
    )
    report(6, "derivative consistency", passed, detail)
    assert stable(c1)
    assert stable(c2)


def test_07_geometry_oracle(report):
    rng = np.random.default_rng(0)
    worst, failures, asymmetric = 0.0, 0, 0
    for _ in range(500):
        a, b = random_rect_pair(rng)
        ok, dev, _ = check_rect_pair(a, b)
        worst = max(worst, dev)
        failures += not ok
        asymmetric += check_rect_pair(b, a)[1] != dev
    passed = failures == 0 and asymmetric == 0 and worst <= 1e-3
    report(7, "geometry oracle", passed, f"500 pairs, max |distance - sampled| {worst:.3g}, failures {failures}")
    assert failures == 0 and asymmetric == 0
    assert worst <= 1e-3


def test_08_idm_closed_form(report):
    p = IDMParams(v0=9.63, s0=2.5, T_hw=1.6, a_max=2.0, b_comf=3.0)
    # v=5 at gap s* = 2.5 + 5*1.6: only the free-road term survives
    expected = float(2 * (-(Fraction(5) / Fraction("9.63")) ** 4))
    got = (idm_acceleration(0.0, None, 0.0, p), idm_acceleration(9.63, None, 0.0, p), idm_acceleration(5.0, 10.5, 0.0, p))
    want = (2.0, 0.0, expected)
    errs = [abs(g - w) for g, w in zip(got, want)]
    # exact value -0.1453466; the rounded figure -0.1454 holds to 1e-4
    near_quoted = abs(expected + 0.1454) < 1e-4
    passed = max(errs) <= 1e-6 and near_quoted
    report(8, "IDM closed form", passed, f"a = {got[0]:.7g}, {got[1]:.7g}, {got[2]:.7g}; max error {max(errs):.2g}")
    assert near_quoted
    assert max(errs) <= 1e-6


def _trace(distances):
    zero = ControlInput(0.0, 0.0)
    return [
        TraceRecord(0.1 * i, EgoState(float(i), 0.0, 0.0, 0.0), zero, zero, (ObstacleRecord(d, 1.0, 0.0, 0.0),), "optimal")
        for i, d in enumerate(distances)
    ]


def test_09_metric_definitions(report):
    a = [(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]
    shifted = [(x + 1.0, y) for x, y in a]
    ten = [(float(i), 0.0) for i in range(10)]
    eight = [(float(i), 2.0) for i in range(8)]
    pinned = [(0.0, 0.0), (1.0, 3.0), (2.0, 0.0)]
    checks = {
        "ade identical": ade(a, a) == 0.0,
        "ade offset": ade(a, shifted) == 1.0,
        "ade truncation": ade(ten, eight) == 2.0,
        "fde identical": fde(a, a) == 0.0,
        "fde 3-4-5": fde(a, [(0.0, 0.0), (1.0, 0.0), (5.0, 4.0)]) == 5.0,
        "fde goal pinned": fde(a, pinned) == 0.0 and fde(a, pinned, penultimate=True) == 3.0,
        "sr 2 of 3": success_rate([_trace([2, 1, 3]), _trace([4, 0.5]), _trace([1, 0.0, 2])]) == 2 / 3,
        "sr all clean": success_rate([_trace([2, 1]), _trace([3])]) == 1.0,
        "sr margin": success_rate([_trace([2, 1]), _trace([3])], collision_margin=1.5) == 0.5,
    }
    failed = [k for k, v in checks.items() if not v]
    report(9, "metric definitions", not failed, f"{len(checks) - len(failed)}/{len(checks)} examples exact")
    assert not failed


def test_10_determinism(report, tmp_path):
    differing = []
    count = 0
    for name in PRESETS:
        a, b = tmp_path / f"{name}_a", tmp_path / f"{name}_b"
        assert main(["preset", name, "--no-figures", "-o", str(a)]) == 0
        assert main(["preset", name, "--no-figures", "--jobs", "4", "-o", str(b)]) == 0
        for f in sorted(a.glob("*.csv")):
            count += 1
            if f.read_bytes() != (b / f.name).read_bytes():
                differing.append(f.name)
    report(10, "determinism", not differing, f"{count} CSV files compared byte-for-byte, differing {len(differing)}")
    assert count > 0
    assert not differing
