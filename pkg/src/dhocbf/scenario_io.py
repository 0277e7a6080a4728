"""Scenario files (YAML) and trace CSV files.

Scenario keys carry their units in the name (``dt_s``, ``vx_mps``,
``radius_m``...). Unknown keys are rejected, and errors report the file,
line and field path. A minimal file only needs ``ego``; everything else has
a default, including a straight scripted reference along the ego's initial
velocity.
"""

from __future__ import annotations

import csv
import math
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Sequence

import yaml

from dhocbf.barrier import BarrierParams
from dhocbf.dynamics import ControlInput, EgoState, ObstacleProfile
from dhocbf.errors import ValidationError
from dhocbf.geometry import ShapeSpec
from dhocbf.planner import DEFAULT_KD, DEFAULT_KP, IDMParams
from dhocbf.safety_filter import FilterConfig
from dhocbf.simulator import ObstacleRecord, ReferenceSpec, Scenario, TraceRecord

DEFAULT_REFERENCE_SPEED = 6.0
REFERENCE_TAIL = 50.0


class ScenarioError(ValidationError):
    """A scenario file failed to parse or validate."""


class _Ctx:
    """Resolves field paths to line numbers for error messages."""

    def __init__(self, source: str, lines: Dict[str, int]):
        self.source = source
        self.lines = lines

    def fail(self, path: str, msg: str):
        probe = path
        line = self.lines.get(probe)
        while line is None and probe:
            probe = probe.rsplit(".", 1)[0] if "." in probe else ""
            line = self.lines.get(probe)
        loc = f"{self.source}:{line}" if line else self.source
        raise ScenarioError(f"{loc}: {path or '<root>'}: {msg}")


def _index_lines(node, path, out):
    out[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = f"{path}.{k.value}" if path else str(k.value)
            _index_lines(v, key, out)
            out[key] = k.start_mark.line + 1
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _index_lines(v, f"{path}[{i}]", out)


def _mapping(ctx, d, path, allowed):
    if not isinstance(d, dict):
        ctx.fail(path, "expected a mapping")
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        ctx.fail(f"{path}.{unknown[0]}" if path else unknown[0], f"unknown key(s) {unknown}")
    return d


def _num(ctx, d, key, path, default=None, positive=False, nonneg=False):
    full = f"{path}.{key}" if path else key
    if key not in d:
        if default is None:
            ctx.fail(full, "required field missing")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        # YAML 1.1 reads "1e6" as a string
        try:
            v = float(v)
        except (TypeError, ValueError):
            ctx.fail(full, f"expected a number, got {d[key]!r}")
    v = float(v)
    if not math.isfinite(v):
        ctx.fail(full, "must be finite")
    if positive and not v > 0:
        ctx.fail(full, f"must be positive, got {v}")
    if nonneg and v < 0:
        ctx.fail(full, f"must be non-negative, got {v}")
    return v


def _pair(ctx, d, key, path, default=None):
    full = f"{path}.{key}" if path else key
    if key not in d:
        if default is None:
            ctx.fail(full, "required field missing")
        return default
    v = d[key]
    if not isinstance(v, (list, tuple)) or len(v) != 2:
        ctx.fail(full, "expected a two-element list")
    tmp = {"0": v[0], "1": v[1]}
    return (_num(ctx, tmp, "0", full), _num(ctx, tmp, "1", full))


def _choice(ctx, d, key, path, choices, default):
    full = f"{path}.{key}" if path else key
    v = d.get(key, default)
    if v not in choices:
        ctx.fail(full, f"expected one of {list(choices)}, got {v!r}")
    return v


def _shape(ctx, d, path):
    if d is None:
        return ShapeSpec.point()
    _mapping(ctx, d, path, ("kind", "radius_m", "width_m", "length_m"))
    kind = _choice(ctx, d, "kind", path, ("point", "circle", "rectangle"), "point")
    if kind == "point":
        return ShapeSpec.point()
    if kind == "circle":
        return ShapeSpec.circle(_num(ctx, d, "radius_m", path, nonneg=True))
    return ShapeSpec.rectangle(_num(ctx, d, "width_m", path, positive=True), _num(ctx, d, "length_m", path, positive=True))


def _shape_dict(s: ShapeSpec):
    if s.kind == "point":
        return {"kind": "point"}
    if s.kind == "circle":
        return {"kind": "circle", "radius_m": s.radius}
    return {"kind": "rectangle", "width_m": s.width, "length_m": s.length}


_IDM_KEYS = {
    "v0_mps": "v0",
    "s0_m": "s0",
    "headway_s": "T_hw",
    "a_max_mps2": "a_max",
    "b_comf_mps2": "b_comf",
    "delta": "delta",
    "k_clamp": "k_clamp",
}


def scenario_from_dict(data, source="<scenario>", lines=None, base_dir="") -> Scenario:
    ctx = _Ctx(source, lines or {})
    top = _mapping(ctx, data, "", ("name", "dt_s", "t_end_s", "seed", "ego", "reference", "filter", "obstacles"))
    dt = _num(ctx, top, "dt_s", "", 0.1, positive=True)
    t_end = _num(ctx, top, "t_end_s", "", 10.0, positive=True)
    seed = top.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        ctx.fail("seed", "expected an integer")
    name = str(top.get("name", Path(source).stem if source != "<scenario>" else "scenario"))

    if "ego" not in top:
        ctx.fail("ego", "required section missing")
    e = _mapping(ctx, top["ego"], "ego", ("x_m", "y_m", "vx_mps", "vy_mps", "jitter_m", "shape"))
    ego = EgoState(
        _num(ctx, e, "x_m", "ego", 0.0),
        _num(ctx, e, "y_m", "ego", 0.0),
        _num(ctx, e, "vx_mps", "ego", 0.0),
        _num(ctx, e, "vy_mps", "ego", 0.0),
    )
    jitter = _num(ctx, e, "jitter_m", "ego", 0.0, nonneg=True)
    ego_shape = _shape(ctx, e.get("shape"), "ego.shape")

    reference = _reference(ctx, top.get("reference"), ego, t_end)
    filt = _filter(ctx, top.get("filter") or {})

    obstacles = []
    raw_obs = top.get("obstacles") or []
    if not isinstance(raw_obs, list):
        ctx.fail("obstacles", "expected a list")
    for i, od in enumerate(raw_obs):
        obstacles.append(_obstacle(ctx, od, f"obstacles[{i}]", i))
    try:
        return Scenario(ego, reference, tuple(obstacles), filt, ego_shape, dt, t_end, seed, jitter, name, base_dir)
    except ValidationError as exc:
        ctx.fail("", str(exc))


def _reference(ctx, d, ego: EgoState, t_end: float) -> ReferenceSpec:
    path = "reference"
    if d is None:
        speed = math.hypot(ego.vx, ego.vy)
        if speed > 0:
            ux, uy = ego.vx / speed, ego.vy / speed
        else:
            speed, ux, uy = DEFAULT_REFERENCE_SPEED, 1.0, 0.0
        length = speed * t_end + REFERENCE_TAIL
        return ReferenceSpec("scripted", ((ego.x, ego.y), (ego.x + length * ux, ego.y + length * uy)), speed)
    allowed = ("kind", "waypoints_m", "speed_mps", "path", "kp_per_s2", "kd_per_s") + tuple(_IDM_KEYS)
    _mapping(ctx, d, path, allowed)
    kind = _choice(ctx, d, "kind", path, ("scripted", "replay", "idm"), "scripted")
    gains = (_num(ctx, d, "kp_per_s2", path, DEFAULT_KP), _num(ctx, d, "kd_per_s", path, DEFAULT_KD))
    waypoints = ()
    if kind in ("scripted", "idm"):
        raw = d.get("waypoints_m")
        if not isinstance(raw, list) or len(raw) < 2:
            ctx.fail(f"{path}.waypoints_m", "expected a list of at least two [x, y] points")
        waypoints = tuple(_pair(ctx, {"p": p}, "p", f"{path}.waypoints_m[{i}]") for i, p in enumerate(raw))
    idm_kwargs = {}
    for key, field_name in _IDM_KEYS.items():
        if key in d:
            idm_kwargs[field_name] = _num(ctx, d, key, path, positive=True)
    if idm_kwargs and kind != "idm":
        ctx.fail(path, "IDM parameters given for a non-IDM reference")
    if kind == "replay":
        if not isinstance(d.get("path"), str):
            ctx.fail(f"{path}.path", "replay reference needs a CSV path")
    elif "path" in d:
        ctx.fail(f"{path}.path", "only replay references take a path")
    speed = _num(ctx, d, "speed_mps", path, DEFAULT_REFERENCE_SPEED, positive=True)
    try:
        return ReferenceSpec(kind, waypoints, speed, d.get("path", ""), gains, IDMParams(**idm_kwargs))
    except ValidationError as exc:
        ctx.fail(path, str(exc))


def _filter(ctx, d) -> FilterConfig:
    path = "filter"
    allowed = (
        "mode", "variant", "beta1_per_s", "beta2_per_s", "u_min_mps2", "u_max_mps2",
        "margin_m", "sensory_radius_m", "policy", "rho",
    )
    _mapping(ctx, d, path, allowed)
    default = FilterConfig()
    mode = _choice(ctx, d, "mode", path, ("hocbf", "dhocbf"), default.mode)
    variant = _choice(ctx, d, "variant", path, ("exact_relative", "paper_literal"), default.params.variant)
    policy = _choice(ctx, d, "policy", path, ("slack", "error", "max_brake"), default.policy)
    lo = _pair(ctx, d, "u_min_mps2", path, default.box[0])
    hi = _pair(ctx, d, "u_max_mps2", path, default.box[1])
    if not (lo[0] <= hi[0] and lo[1] <= hi[1]):
        ctx.fail(f"{path}.u_min_mps2", "lower control bound exceeds upper bound")
    params = BarrierParams(
        _num(ctx, d, "beta1_per_s", path, default.params.beta1, positive=True),
        _num(ctx, d, "beta2_per_s", path, default.params.beta2, positive=True),
        variant,
    )
    return FilterConfig(
        params,
        mode,
        (lo, hi),
        _num(ctx, d, "margin_m", path, default.margin, nonneg=True),
        _num(ctx, d, "sensory_radius_m", path, default.sensory_radius, positive=True),
        policy,
        _num(ctx, d, "rho", path, default.rho, positive=True),
    )


def _obstacle(ctx, d, path, index) -> ObstacleProfile:
    _mapping(ctx, d, path, ("id", "shape", "position_m", "heading_rad", "segments"))
    oid = str(d.get("id", f"obs{index}"))
    shape = _shape(ctx, d.get("shape"), f"{path}.shape")
    pos = _pair(ctx, d, "position_m", path)
    heading = _num(ctx, d, "heading_rad", path, 0.0)
    raw = d.get("segments")
    if raw is None:
        segments = ((0.0, (0.0, 0.0)),)
    else:
        if not isinstance(raw, list) or not raw:
            ctx.fail(f"{path}.segments", "expected a non-empty list")
        segs = []
        for i, sd in enumerate(raw):
            sp = f"{path}.segments[{i}]"
            _mapping(ctx, sd, sp, ("start_s", "velocity_mps"))
            segs.append((_num(ctx, sd, "start_s", sp, nonneg=True), _pair(ctx, sd, "velocity_mps", sp)))
        segments = tuple(segs)
    try:
        return ObstacleProfile(oid, shape, pos, segments, heading)
    except ValidationError as exc:
        ctx.fail(f"{path}.segments", str(exc))


def parse_scenario_text(text: str, source="<scenario>", base_dir="") -> Scenario:
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        loc = f"{source}:{mark.line + 1}" if mark is not None else source
        raise ScenarioError(f"{loc}: malformed scenario file: {getattr(exc, 'problem', exc)}") from None
    lines = {}
    if node is not None:
        _index_lines(node, "", lines)
    if data is None:
        raise ScenarioError(f"{source}: empty scenario file")
    return scenario_from_dict(data, source, lines, base_dir)


def parse_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"{path}: cannot read scenario: {exc.strerror}") from None
    return parse_scenario_text(text, str(path), str(path.parent))


def scenario_to_dict(s: Scenario) -> dict:
    ref = s.reference
    rd = {"kind": ref.kind}
    if ref.kind in ("scripted", "idm"):
        rd["waypoints_m"] = [list(p) for p in ref.waypoints]
    if ref.kind == "replay":
        rd["path"] = ref.path
    rd["speed_mps"] = ref.speed
    rd["kp_per_s2"], rd["kd_per_s"] = ref.gains
    if ref.kind == "idm":
        for key, field_name in _IDM_KEYS.items():
            rd[key] = getattr(ref.idm, field_name)
    f = s.filter
    return {
        "name": s.name,
        "dt_s": s.dt,
        "t_end_s": s.t_end,
        "seed": s.seed,
        "ego": {
            "x_m": s.ego_init.x,
            "y_m": s.ego_init.y,
            "vx_mps": s.ego_init.vx,
            "vy_mps": s.ego_init.vy,
            "jitter_m": s.ego_init_jitter,
            "shape": _shape_dict(s.ego_shape),
        },
        "reference": rd,
        "filter": {
            "mode": f.mode,
            "variant": f.params.variant,
            "beta1_per_s": f.params.beta1,
            "beta2_per_s": f.params.beta2,
            "u_min_mps2": list(f.box[0]),
            "u_max_mps2": list(f.box[1]),
            "margin_m": f.margin,
            "sensory_radius_m": f.sensory_radius,
            "policy": f.policy,
            "rho": f.rho,
        },
        "obstacles": [
            {
                "id": o.id,
                "shape": _shape_dict(o.shape),
                "position_m": list(o.initial_position),
                "heading_rad": o.heading,
                "segments": [{"start_s": t0, "velocity_mps": list(v)} for t0, v in o.segments],
            }
            for o in s.obstacles
        ],
    }


def serialize_scenario(s: Scenario) -> str:
    return yaml.safe_dump(scenario_to_dict(s), sort_keys=False)


def apply_overrides(s: Scenario, **overrides) -> Scenario:
    """Replace scenario fields from CLI-style overrides; ``None`` values are ignored.

    Recognized keys: beta1, beta2, variant, mode, dt, t_end, margin, policy,
    seed, sensory_radius, rho.
    """
    o = {k: v for k, v in overrides.items() if v is not None}
    unknown = set(o) - {"beta1", "beta2", "variant", "mode", "dt", "t_end", "margin", "policy", "seed", "sensory_radius", "rho"}
    if unknown:
        raise ValidationError(f"unknown overrides {sorted(unknown)}")
    f = s.filter
    params = BarrierParams(o.get("beta1", f.params.beta1), o.get("beta2", f.params.beta2), o.get("variant", f.params.variant))
    f = replace(
        f,
        params=params,
        mode=o.get("mode", f.mode),
        margin=o.get("margin", f.margin),
        policy=o.get("policy", f.policy),
        sensory_radius=o.get("sensory_radius", f.sensory_radius),
        rho=o.get("rho", f.rho),
    )
    return replace(s, filter=f, dt=o.get("dt", s.dt), t_end=o.get("t_end", s.t_end), seed=o.get("seed", s.seed))


# --- trace CSV ---------------------------------------------------------------

BASE_COLUMNS = ("t", "x", "y", "vx", "vy", "ux_ref", "uy_ref", "ux", "uy")
OBSTACLE_FIELDS = ("dist", "dsafe", "h", "residual")


def fmt(v: float) -> str:
    return f"{v:.9g}"


def trace_header(n_obstacles: int) -> List[str]:
    cols = list(BASE_COLUMNS)
    for i in range(n_obstacles):
        cols += [f"{f}_{i}" for f in OBSTACLE_FIELDS]
    return cols + ["qp_status", "slack"]


def write_trace_csv(path, trace: Sequence[TraceRecord], n_obstacles: int = None) -> None:
    if n_obstacles is None:
        n_obstacles = len(trace[0].obstacles) if trace else 0
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(trace_header(n_obstacles))
        for r in trace:
            row = [r.t, r.ego.x, r.ego.y, r.ego.vx, r.ego.vy, r.u_ref.ux, r.u_ref.uy, r.u_applied.ux, r.u_applied.uy]
            for o in r.obstacles:
                row += [o.distance, o.d_safe, o.h, o.residual]
            w.writerow([fmt(v) for v in row] + [r.status, fmt(r.slack)])


def read_trace_csv(path) -> List[TraceRecord]:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty trace file") from None
        if tuple(header[: len(BASE_COLUMNS)]) != BASE_COLUMNS or header[-2:] != ["qp_status", "slack"]:
            raise ValidationError(f"{path}: not a trace CSV")
        n_obs = (len(header) - len(BASE_COLUMNS) - 2) // len(OBSTACLE_FIELDS)
        records = []
        for lineno, row in enumerate(reader, start=2):
            try:
                vals = [float(v) for v in row[:-2]]
                slack = float(row[-1])
            except ValueError as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from None
            t, x, y, vx, vy, uxr, uyr, ux, uy = vals[:9]
            obs = tuple(
                ObstacleRecord(*vals[9 + 4 * i : 13 + 4 * i]) for i in range(n_obs)
            )
            records.append(
                TraceRecord(t, EgoState(x, y, vx, vy), ControlInput(uxr, uyr), ControlInput(ux, uy), obs, row[-2], slack)
            )
    return records
