"""Trajectory metrics: displacement errors, success rate and distance summaries."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from dhocbf.errors import ValidationError


def _as_xy(traj, name) -> np.ndarray:
    arr = np.asarray(traj, dtype=float)
    if arr.size == 0:
        raise ValidationError(f"{name} is empty")
    return arr.reshape(-1, 2)


def displacement(traj_a, traj_b) -> np.ndarray:
    """Per-step Euclidean displacement over the common prefix of two position sequences."""
    a = _as_xy(traj_a, "traj_a")
    b = _as_xy(traj_b, "traj_b")
    n = min(len(a), len(b))
    return np.hypot(a[:n, 0] - b[:n, 0], a[:n, 1] - b[:n, 1])


def ade(traj_a, traj_b) -> float:
    return float(np.mean(displacement(traj_a, traj_b)))


def fde(traj_a, traj_b, penultimate: bool = False) -> float:
    """Final displacement error.

    With ``penultimate=True`` the second-to-last aligned step is used, for
    planners that pin their last position to the goal.
    """
    d = displacement(traj_a, traj_b)
    if penultimate:
        if len(d) < 2:
            raise ValidationError("penultimate FDE needs at least two aligned steps")
        return float(d[-2])
    return float(d[-1])


def min_distance_series(trace):
    """``(t, min surface distance)`` per step; ``inf`` when there are no obstacles."""
    if not trace:
        raise ValidationError("trace is empty")
    return [(r.t, r.min_distance) for r in trace]


def trace_min_distance(trace) -> float:
    return min(d for _, d in min_distance_series(trace))


def success_rate(traces: Sequence, collision_margin: float = 0.0) -> float:
    """Fraction of traces whose surface distance stays above ``collision_margin`` at every step."""
    if not traces:
        raise ValidationError("no traces")
    clean = sum(1 for tr in traces if trace_min_distance(tr) > collision_margin)
    return clean / len(traces)


@dataclass(frozen=True)
class MetricReport:
    ade: float
    fde: float
    fde_penultimate: float
    sr: float
    min_distance: float
    var_ade: float = 0.0
    var_fde: float = 0.0
    n_runs: int = 1


def trace_positions(trace) -> np.ndarray:
    return np.array([(r.ego.x, r.ego.y) for r in trace])


def metric_report(traces: Sequence, references: Sequence, collision_margin: float = 0.0) -> MetricReport:
    """Aggregate metrics over rollouts (for example one per seed).

    ``references[i]`` holds the reference positions for ``traces[i]``.
    Variances are population variances across rollouts.
    """
    if len(traces) != len(references) or not traces:
        raise ValidationError("need one reference per trace")
    ades, fdes, fpens = [], [], []
    for tr, ref in zip(traces, references):
        pos = trace_positions(tr)
        ades.append(ade(pos, ref))
        fdes.append(fde(pos, ref))
        fpens.append(fde(pos, ref, penultimate=True) if min(len(pos), len(ref)) >= 2 else math.nan)
    return MetricReport(
        ade=float(np.mean(ades)),
        fde=float(np.mean(fdes)),
        fde_penultimate=float(np.mean(fpens)),
        sr=success_rate(traces, collision_margin),
        min_distance=min(trace_min_distance(tr) for tr in traces),
        var_ade=float(np.var(ades)),
        var_fde=float(np.var(fdes)),
        n_runs=len(traces),
    )
