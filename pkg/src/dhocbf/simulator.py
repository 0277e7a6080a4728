"""Closed-loop scenario execution and the validity-experiment presets."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from dhocbf.barrier import BarrierParams
from dhocbf.dynamics import (
    DEFAULT_DT,
    ControlInput,
    EgoState,
    ObstacleProfile,
    obstacle_state_at,
    step_ego,
)
from dhocbf.errors import InfeasibleError, ValidationError
from dhocbf.geometry import ShapeSpec
from dhocbf.planner import (
    DEFAULT_KD,
    DEFAULT_KP,
    IDMParams,
    IdmReference,
    ReferenceTrajectory,
    TrackingReference,
)
from dhocbf.safety_filter import FilterConfig, diagnose, filter_control

REFERENCE_KINDS = ("scripted", "replay", "idm")


@dataclass(frozen=True)
class ReferenceSpec:
    """Where the reference control comes from.

    ``scripted`` tracks ``waypoints`` at ``speed``; ``replay`` tracks the
    trajectory stored in the CSV at ``path``; ``idm`` follows ``waypoints``
    with the Intelligent Driver Model.
    """

    kind: str = "scripted"
    waypoints: Tuple[Tuple[float, float], ...] = ()
    speed: float = 6.0
    path: str = ""
    gains: Tuple[float, float] = (DEFAULT_KP, DEFAULT_KD)
    idm: IDMParams = field(default_factory=IDMParams)

    def __post_init__(self):
        if self.kind not in REFERENCE_KINDS:
            raise ValidationError(f"unknown reference kind {self.kind!r}")
        if self.kind in ("scripted", "idm") and len(self.waypoints) < 2:
            raise ValidationError(f"{self.kind} reference needs at least two waypoints")
        if self.kind == "replay" and not self.path:
            raise ValidationError("replay reference needs a path")
        object.__setattr__(self, "waypoints", tuple((float(x), float(y)) for x, y in self.waypoints))
        object.__setattr__(self, "gains", (float(self.gains[0]), float(self.gains[1])))


@dataclass(frozen=True)
class Scenario:
    ego_init: EgoState
    reference: ReferenceSpec
    obstacles: Tuple[ObstacleProfile, ...] = ()
    filter: FilterConfig = field(default_factory=FilterConfig)
    ego_shape: ShapeSpec = field(default_factory=ShapeSpec.point)
    dt: float = DEFAULT_DT
    t_end: float = 10.0
    seed: int = 0
    ego_init_jitter: float = 0.0
    name: str = "scenario"
    base_dir: str = ""

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValidationError("dt must be positive")
        if not (self.t_end > 0 and math.isfinite(self.t_end)):
            raise ValidationError("t_end must be positive")
        if self.ego_init_jitter < 0:
            raise ValidationError("ego_init_jitter must be non-negative")
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        ids = [o.id for o in self.obstacles]
        if len(set(ids)) != len(ids):
            raise ValidationError("obstacle ids must be unique")

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.t_end / self.dt - 1e-9))


@dataclass(frozen=True)
class ObstacleRecord:
    distance: float
    d_safe: float
    h: float
    residual: float


@dataclass(frozen=True)
class TraceRecord:
    t: float
    ego: EgoState
    u_ref: ControlInput
    u_applied: ControlInput
    obstacles: Tuple[ObstacleRecord, ...]
    status: str
    slack: float = 0.0
    active_set: Tuple[str, ...] = ()

    @property
    def min_distance(self) -> float:
        return min((o.distance for o in self.obstacles), default=math.inf)

    @property
    def min_h(self) -> float:
        return min((o.h for o in self.obstacles), default=math.inf)


def make_reference(spec: ReferenceSpec, ego_shape: ShapeSpec = None, base_dir=""):
    if spec.kind == "scripted":
        return TrackingReference(ReferenceTrajectory.from_waypoints(spec.waypoints, spec.speed), spec.gains)
    if spec.kind == "replay":
        path = Path(spec.path)
        if not path.is_absolute() and base_dir:
            path = Path(base_dir) / path
        return TrackingReference(ReferenceTrajectory.from_csv(path), spec.gains)
    path = ReferenceTrajectory.from_waypoints(spec.waypoints, spec.idm.v0)
    return IdmReference(path, spec.idm, spec.gains, ego_shape or ShapeSpec.point())


def initial_state(s: Scenario) -> EgoState:
    if s.ego_init_jitter == 0:
        return s.ego_init
    rng = np.random.default_rng(s.seed)
    dx, dy = rng.normal(0.0, s.ego_init_jitter, size=2)
    return replace(s.ego_init, x=s.ego_init.x + float(dx), y=s.ego_init.y + float(dy))


def run_scenario(s: Scenario, reference=None) -> List[TraceRecord]:
    """Simulate the closed loop for ``ceil(t_end / dt)`` steps.

    Each step senses the obstacles, asks the reference source for ``u_ref``,
    filters it through the safety QP and integrates the ego exactly. Records
    hold the state at the start of the step and the control applied over it.

    Raises:
        InfeasibleError: with ``step`` set, when the QP is infeasible under
            ``policy='error'``.
    """
    source = reference if reference is not None else make_reference(s.reference, s.ego_shape, s.base_dir)
    cfg = s.filter
    ego = initial_state(s)
    heading = math.atan2(ego.vy, ego.vx) if (ego.vx or ego.vy) else 0.0
    records = []
    for k in range(s.n_steps):
        t = k * s.dt
        obs = [obstacle_state_at(p, t) for p in s.obstacles]
        u_ref = source.control(ego, t, obs)
        diags = [diagnose(ego, o, cfg, s.ego_shape, heading) for o in obs]
        sensed = [d for d in diags if d.distance <= cfg.sensory_radius]
        try:
            u, qp = filter_control(u_ref, ego, (), cfg, rows=[d.row for d in sensed])
        except InfeasibleError as exc:
            raise InfeasibleError(f"{s.name}: safety QP infeasible at step {k} (t={t:.3f}s)", step=k) from exc
        records.append(
            TraceRecord(
                t,
                ego,
                u_ref,
                u,
                tuple(ObstacleRecord(d.distance, d.d_safe, d.h, d.row.residual(u)) for d in diags),
                qp.status,
                qp.slack,
                qp.active_set,
            )
        )
        ego = step_ego(ego, u, s.dt)
        if ego.vx or ego.vy:
            heading = math.atan2(ego.vy, ego.vx)
    return records


def reference_positions(s: Scenario, times) -> Optional[np.ndarray]:
    return make_reference(s.reference, s.ego_shape, s.base_dir).positions_at(times)


# --- validity-experiment presets -------------------------------------------

PRESETS = ("speed_sweep", "radius_sweep", "perturbation", "multi_obstacle")

# Geometry constants for the presets. The ego is a point that starts on a
# straight +x reference driven at REF_SPEED; obstacles are circles placed
# slightly off the reference line so the filtered path has a side to pass on.
PRESET_DEFAULTS: Dict[str, float] = {
    "ref_speed": 6.0,
    "t_end": 10.0,
    "dt": DEFAULT_DT,
    "obstacle_x": 20.0,
    "obstacle_y": 0.5,
    "obstacle_radius": 1.0,
    # Wide enough that every obstacle is sensed from the first step; at 8 m
    # an obstacle enters range with the first-order barrier term already
    # negative and the box-bounded QP turns infeasible.
    "sensory_radius": 100.0,
    "beta1": 1.0,
    "beta2": 1.0,
    "margin": 0.0,
    "rho": 1e6,
}
# Per-preset replacements of PRESET_DEFAULTS.
PRESET_GEOMETRY: Dict[str, Dict[str, float]] = {
    # The ego reaches x = ref_speed * T at the switch time T = t_end / 2.
    "perturbation": {"obstacle_x": 45.0},
}
SPEED_SWEEP_SPEEDS = (0.0, 1.0, 3.0)
RADIUS_SWEEP_RADII = (0.5, 1.0, 1.5, 2.0)
RADIUS_SWEEP_SPEED = 2.0
PERTURBATION_SPEED = -1.0


def _circle(oid, x, y, radius, segments):
    return ObstacleProfile(oid, ShapeSpec.circle(radius), (x, y), tuple(segments))


def build_preset(name: str, mode: str = "dhocbf", overrides: Optional[dict] = None) -> List[Scenario]:
    """Scenarios for one validity experiment.

    ``overrides`` may replace any key of :data:`PRESET_DEFAULTS` as well as
    ``variant`` and ``policy``.
    """
    if name not in PRESETS:
        raise ValidationError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    o = dict(PRESET_DEFAULTS)
    o.update(PRESET_GEOMETRY.get(name, {}))
    o.update({"variant": "exact_relative", "policy": "slack"})
    for key, value in (overrides or {}).items():
        if key not in o:
            raise ValidationError(f"unknown preset override {key!r}")
        o[key] = value
    cfg = FilterConfig(
        params=BarrierParams(float(o["beta1"]), float(o["beta2"]), o["variant"]),
        mode=mode,
        margin=float(o["margin"]),
        sensory_radius=float(o["sensory_radius"]),
        policy=o["policy"],
        rho=float(o["rho"]),
    )
    speed, t_end, dt = float(o["ref_speed"]), float(o["t_end"]), float(o["dt"])
    reference = ReferenceSpec("scripted", ((0.0, 0.0), (speed * t_end + 50.0, 0.0)), speed)
    ego = EgoState(0.0, 0.0, speed, 0.0)
    ox, oy, radius = float(o["obstacle_x"]), float(o["obstacle_y"]), float(o["obstacle_radius"])

    def scenario(label, obstacles):
        return Scenario(ego, reference, tuple(obstacles), cfg, ShapeSpec.point(), dt, t_end, name=f"{name}_{label}_{mode}")

    if name == "speed_sweep":
        return [
            scenario(f"v{v:g}", [_circle("obs0", ox, oy, radius, [(0.0, (v, 0.0))])])
            for v in SPEED_SWEEP_SPEEDS
        ]
    if name == "radius_sweep":
        return [
            scenario(f"r{r:g}", [_circle("obs0", ox, oy, r, [(0.0, (RADIUS_SWEEP_SPEED, 0.0))])])
            for r in RADIUS_SWEEP_RADII
        ]
    if name == "perturbation":
        switch = perturbation_switch_time(t_end)
        return [scenario("switch", [_circle("obs0", ox, oy, radius, [(0.0, (0.0, 0.0)), (switch, (PERTURBATION_SPEED, 0.0))])])]
    return [
        scenario(
            "three",
            [
                _circle("obs0", ox - 6.0, 0.6, radius, [(0.0, (1.0, 0.0))]),
                _circle("obs1", ox + 12.0, -0.7, 1.2 * radius, [(0.0, (0.0, 0.0))]),
                _circle("obs2", ox + 30.0, 0.4, 0.8 * radius, [(0.0, (-1.0, 0.0))]),
            ],
        )
    ]


def perturbation_switch_time(t_end: float) -> float:
    return 0.5 * t_end
