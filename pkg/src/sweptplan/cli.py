"""Command-line pipeline: scenario files in, staged runs, artifacts out.

Stages: plan (route search + two-stage spline optimization), sweep (swept
field of the planned trajectory), track (closed-loop MPC simulation), metrics
(driven-pose sweep + tracking statistics). Later stages load earlier stages'
artifacts from the output directory when they are not run in the same
invocation.

All artifacts are deterministic: floats are serialized with shortest
round-trip repr, JSON keys are sorted, and CSV layouts are fixed. Wall-clock
measurements live only in timings.json, which is a diagnostic sidecar and is
expected to differ between runs.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time

import numpy as np

from .geometry import VehicleParams
from .minco import MincoTrajectory
from .mpc import MpcConfig
from .planner import PlanOptions, PlannerWeights, optimize_stage1, optimize_stage2
from .render import render_scene
from .sim import SimConfig, SimTrace, compute_metrics, driven_path, run_closed_loop
from .sweptfield import SweptField, auto_region, compute_swept_field, excess_area
from .worldmodel import (
    Box,
    Disc,
    GridMap,
    astar_plan,
    estimate_headings,
    rasterize_obstacles,
)

SCHEMA_VERSION = 1


class ParseError(ValueError):
    """Scenario file is not valid JSON or contains unknown keys."""


class ValidationError(ValueError):
    """Scenario file is missing required content or violates an invariant."""


class MissingArtifact(RuntimeError):
    """A stage dependency was neither run nor found on disk."""


# ---------------------------------------------------------------------------
# scenario parsing


def _as_number(v, ctx: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValidationError(f"{ctx} must be a number, got {type(v).__name__}")
    return float(v)


def _as_int(v, ctx: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ValidationError(f"{ctx} must be an integer, got {type(v).__name__}")
    return v


def _as_vector(v, n: int, ctx: str) -> np.ndarray:
    if not isinstance(v, list) or len(v) != n:
        raise ValidationError(f"{ctx} must be a list of {n} numbers")
    return np.array([_as_number(x, f"{ctx}[{i}]") for i, x in enumerate(v)])


def _check_keys(block: dict, allowed: set, ctx: str) -> None:
    for key in block:
        if key not in allowed:
            raise ParseError(f"unknown key '{key}' in {ctx}")


def _get_block(doc: dict, name: str) -> dict:
    block = doc.get(name, {})
    if not isinstance(block, dict):
        raise ValidationError(f"'{name}' must be an object")
    return block


class Scenario:
    """Fully resolved run configuration; `echo` holds every value after defaults."""

    def __init__(
        self,
        name: str,
        veh: VehicleParams,
        bounds: tuple,
        resolution: float,
        clearance: float,
        obstacles: list,
        start: np.ndarray,
        goal: np.ndarray,
        weights: PlannerWeights,
        plan_opts: PlanOptions,
        waypoint_spacing: float,
        mpc: MpcConfig,
        sim: SimConfig,
        sweep_resolution: float,
        sweep_margin: float,
        echo: dict,
    ):
        self.name = name
        self.veh = veh
        self.bounds = bounds
        self.resolution = resolution
        self.clearance = clearance
        self.obstacles = obstacles
        self.start = start
        self.goal = goal
        self.weights = weights
        self.plan_opts = plan_opts
        self.waypoint_spacing = waypoint_spacing
        self.mpc = mpc
        self.sim = sim
        self.sweep_resolution = sweep_resolution
        self.sweep_margin = sweep_margin
        self.echo = echo


def _parse_vehicle(doc: dict) -> VehicleParams:
    if "vehicle" not in doc:
        raise ValidationError("missing required block 'vehicle'")
    block = _get_block(doc, "vehicle")
    allowed = {"length", "width", "axle_count", "wheel_positions", "v_max", "omega_max"}
    _check_keys(block, allowed, "vehicle")
    for key in ("length", "width", "axle_count"):
        if key not in block:
            raise ValidationError(f"vehicle: missing required key '{key}'")
    length = _as_number(block["length"], "vehicle.length")
    width = _as_number(block["width"], "vehicle.width")
    axle_count = _as_int(block["axle_count"], "vehicle.axle_count")
    if "wheel_positions" in block:
        raw = block["wheel_positions"]
        if not isinstance(raw, list) or not raw:
            raise ValidationError("vehicle.wheel_positions must be a nonempty list of [x, y]")
        wheels = np.array([_as_vector(w, 2, f"vehicle.wheel_positions[{i}]") for i, w in enumerate(raw)])
    else:
        # Default layout: axles at pitch L/n symmetric about the center,
        # one wheel on each side at the footprint edge.
        pitch = length / axle_count
        xs = (np.arange(axle_count) - (axle_count - 1) / 2.0) * pitch
        wheels = np.array([[x, sgn * width / 2.0] for x in xs for sgn in (1.0, -1.0)])
    v_max = _as_number(block.get("v_max", 2.0), "vehicle.v_max")
    omega_max = _as_number(block.get("omega_max", 1.0), "vehicle.omega_max")
    try:
        return VehicleParams(
            length=length,
            width=width,
            axle_count=axle_count,
            wheel_positions=wheels,
            v_max=v_max,
            omega_max=omega_max,
        )
    except ValueError as exc:
        raise ValidationError(f"vehicle: {exc}") from exc


def _parse_obstacles(raw, ctx: str) -> list:
    if not isinstance(raw, list):
        raise ValidationError(f"{ctx} must be a list")
    shapes = []
    for i, item in enumerate(raw):
        ictx = f"{ctx}[{i}]"
        if not isinstance(item, dict) or "type" not in item:
            raise ValidationError(f"{ictx} must be an object with a 'type' key")
        kind = item["type"]
        if kind == "box":
            _check_keys(item, {"type", "min", "max"}, ictx)
            for key in ("min", "max"):
                if key not in item:
                    raise ValidationError(f"{ictx}: box needs '{key}'")
            lo = _as_vector(item["min"], 2, f"{ictx}.min")
            hi = _as_vector(item["max"], 2, f"{ictx}.max")
            if not np.all(hi > lo):
                raise ValidationError(f"{ictx}: box max must exceed min componentwise")
            shapes.append(Box(xmin=lo[0], ymin=lo[1], xmax=hi[0], ymax=hi[1]))
        elif kind == "disc":
            _check_keys(item, {"type", "center", "radius"}, ictx)
            for key in ("center", "radius"):
                if key not in item:
                    raise ValidationError(f"{ictx}: disc needs '{key}'")
            center = _as_vector(item["center"], 2, f"{ictx}.center")
            radius = _as_number(item["radius"], f"{ictx}.radius")
            if radius <= 0:
                raise ValidationError(f"{ictx}: disc radius must be positive")
            shapes.append(Disc(cx=center[0], cy=center[1], radius=radius))
        else:
            raise ValidationError(f"{ictx}: unknown obstacle type '{kind}'")
    return shapes


def parse_scenario(path: str) -> Scenario:
    """Strict scenario load: unknown keys and invariant violations are errors."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ParseError("scenario document must be a JSON object")
    top_allowed = {"schema", "name", "vehicle", "world", "start", "goal", "planner", "mpc", "sim", "sweep"}
    _check_keys(doc, top_allowed, "scenario")
    if "schema" not in doc:
        raise ValidationError("missing required key 'schema'")
    if doc["schema"] != SCHEMA_VERSION:
        raise ValidationError(f"unsupported schema {doc['schema']!r}; this tool reads schema {SCHEMA_VERSION}")

    veh = _parse_vehicle(doc)

    if "world" not in doc:
        raise ValidationError("missing required block 'world'")
    world = _get_block(doc, "world")
    _check_keys(world, {"bounds", "resolution", "obstacles", "clearance"}, "world")
    if "bounds" not in world:
        raise ValidationError("world: missing required key 'bounds'")
    bounds = tuple(_as_vector(world["bounds"], 4, "world.bounds"))
    if not (bounds[2] > bounds[0] and bounds[3] > bounds[1]):
        raise ValidationError("world.bounds must satisfy xmin < xmax and ymin < ymax")
    resolution = _as_number(world.get("resolution", 0.1), "world.resolution")
    if resolution <= 0:
        raise ValidationError("world.resolution must be positive")
    clearance = _as_number(world.get("clearance", veh.width / 2.0), "world.clearance")
    obstacles = _parse_obstacles(world.get("obstacles", []), "world.obstacles")

    for key in ("start", "goal"):
        if key not in doc:
            raise ValidationError(f"missing required key '{key}'")
    start = _as_vector(doc["start"], 3, "start")
    goal = _as_vector(doc["goal"], 3, "goal")
    for label, pose in (("start", start), ("goal", goal)):
        if not (bounds[0] <= pose[0] <= bounds[2] and bounds[1] <= pose[1] <= bounds[3]):
            raise ValidationError(f"{label} position {pose[:2].tolist()} lies outside world.bounds")

    planner = _get_block(doc, "planner")
    _check_keys(
        planner,
        {
            "energy",
            "time",
            "deviation",
            "obstacle",
            "sweep",
            "safety_margin",
            "max_iterations",
            "grad_tol",
            "cost_tol",
            "init_speed",
            "waypoint_spacing",
        },
        "planner",
    )
    weights = PlannerWeights(
        energy=_as_number(planner.get("energy", 1.0), "planner.energy"),
        time=_as_number(planner.get("time", 20.0), "planner.time"),
        deviation=_as_number(planner.get("deviation", 100.0), "planner.deviation"),
        obstacle=_as_number(planner.get("obstacle", 1000.0), "planner.obstacle"),
        sweep=_as_number(planner.get("sweep", 300.0), "planner.sweep"),
        safety_margin=_as_number(planner.get("safety_margin", 0.3), "planner.safety_margin"),
    )
    for label, value in (("energy", weights.energy), ("time", weights.time), ("deviation", weights.deviation), ("obstacle", weights.obstacle), ("sweep", weights.sweep)):
        if value < 0:
            raise ValidationError(f"planner.{label} must be nonnegative")
    if weights.safety_margin <= 0:
        raise ValidationError("planner.safety_margin must be positive")
    plan_opts = PlanOptions(
        max_iterations=_as_int(planner.get("max_iterations", 500), "planner.max_iterations"),
        grad_tol=_as_number(planner.get("grad_tol", 1e-6), "planner.grad_tol"),
        cost_tol=_as_number(planner.get("cost_tol", 1e-8), "planner.cost_tol"),
        init_speed=_as_number(planner.get("init_speed", 1.0), "planner.init_speed"),
    )
    waypoint_spacing = _as_number(planner.get("waypoint_spacing", 1.0), "planner.waypoint_spacing")
    if waypoint_spacing <= 0:
        raise ValidationError("planner.waypoint_spacing must be positive")

    mpc_block = _get_block(doc, "mpc")
    _check_keys(
        mpc_block,
        {"dt", "horizon", "control_horizon", "state_weight", "input_weight", "u_min", "u_max", "du_max"},
        "mpc",
    )
    u_default = np.array([veh.v_max, veh.v_max, veh.omega_max])
    du_max = mpc_block.get("du_max")
    try:
        mpc = MpcConfig(
            dt=_as_number(mpc_block.get("dt", 0.05), "mpc.dt"),
            horizon=_as_int(mpc_block.get("horizon", 20), "mpc.horizon"),
            control_horizon=_as_int(mpc_block.get("control_horizon", 10), "mpc.control_horizon"),
            state_weight=np.diag(_as_vector(mpc_block.get("state_weight", [10.0, 10.0, 10.0]), 3, "mpc.state_weight")),
            input_weight=np.diag(_as_vector(mpc_block.get("input_weight", [0.05, 0.05, 0.05]), 3, "mpc.input_weight")),
            u_min=(_as_vector(mpc_block["u_min"], 3, "mpc.u_min") if "u_min" in mpc_block else -u_default),
            u_max=(_as_vector(mpc_block["u_max"], 3, "mpc.u_max") if "u_max" in mpc_block else u_default),
            du_min=(-_as_vector(du_max, 3, "mpc.du_max") if du_max is not None else np.full(3, -np.inf)),
            du_max=(_as_vector(du_max, 3, "mpc.du_max") if du_max is not None else np.full(3, np.inf)),
        )
    except ValueError as exc:
        raise ValidationError(f"mpc: {exc}") from exc

    sim_block = _get_block(doc, "sim")
    _check_keys(sim_block, {"settle_time", "input_lag_tau"}, "sim")
    sim = SimConfig(
        settle_time=_as_number(sim_block.get("settle_time", 2.0), "sim.settle_time"),
        input_lag_tau=_as_number(sim_block.get("input_lag_tau", 0.0), "sim.input_lag_tau"),
    )
    if sim.settle_time < 0:
        raise ValidationError("sim.settle_time must be nonnegative")

    sweep_block = _get_block(doc, "sweep")
    _check_keys(sweep_block, {"resolution", "margin"}, "sweep")
    sweep_resolution = _as_number(sweep_block.get("resolution", 0.05), "sweep.resolution")
    sweep_margin = _as_number(sweep_block.get("margin", 0.3), "sweep.margin")
    if sweep_resolution <= 0:
        raise ValidationError("sweep.resolution must be positive")

    name = doc.get("name", os.path.splitext(os.path.basename(path))[0])
    if not isinstance(name, str):
        raise ValidationError("name must be a string")

    echo = {
        "name": name,
        "vehicle": {
            "length": veh.length,
            "width": veh.width,
            "axle_count": veh.axle_count,
            "wheel_positions": np.atleast_2d(veh.wheel_positions).tolist(),
            "v_max": veh.v_max,
            "omega_max": veh.omega_max,
        },
        "world": {
            "bounds": list(bounds),
            "resolution": resolution,
            "clearance": clearance,
            "obstacles": [
                (
                    {"type": "box", "min": [s.xmin, s.ymin], "max": [s.xmax, s.ymax]}
                    if isinstance(s, Box)
                    else {"type": "disc", "center": [s.cx, s.cy], "radius": s.radius}
                )
                for s in obstacles
            ],
        },
        "start": start.tolist(),
        "goal": goal.tolist(),
        "planner": {
            "energy": weights.energy,
            "time": weights.time,
            "deviation": weights.deviation,
            "obstacle": weights.obstacle,
            "sweep": weights.sweep,
            "safety_margin": weights.safety_margin,
            "max_iterations": plan_opts.max_iterations,
            "grad_tol": plan_opts.grad_tol,
            "cost_tol": plan_opts.cost_tol,
            "init_speed": plan_opts.init_speed,
            "waypoint_spacing": waypoint_spacing,
        },
        "mpc": {
            "dt": mpc.dt,
            "horizon": mpc.horizon,
            "control_horizon": mpc.control_horizon,
            "state_weight": np.diag(mpc.state_weight).tolist(),
            "input_weight": np.diag(mpc.input_weight).tolist(),
            "u_min": mpc.u_min.tolist(),
            "u_max": mpc.u_max.tolist(),
            "du_max": (mpc.du_max.tolist() if np.all(np.isfinite(mpc.du_max)) else None),
        },
        "sim": {"settle_time": sim.settle_time, "input_lag_tau": sim.input_lag_tau},
        "sweep": {"resolution": sweep_resolution, "margin": sweep_margin},
    }
    return Scenario(
        name=name,
        veh=veh,
        bounds=bounds,
        resolution=resolution,
        clearance=clearance,
        obstacles=obstacles,
        start=start,
        goal=goal,
        weights=weights,
        plan_opts=plan_opts,
        waypoint_spacing=waypoint_spacing,
        mpc=mpc,
        sim=sim,
        sweep_resolution=sweep_resolution,
        sweep_margin=sweep_margin,
        echo=echo,
    )


# ---------------------------------------------------------------------------
# artifact serialization


def _write_json(path: str, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: str, header: list, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def write_field_csv(path: str, field: SweptField) -> None:
    """Rows in fixed (ix outer, iy inner) order so files compare bytewise."""
    cx = field.origin[0] + (np.arange(field.width) + 0.5) * field.resolution
    cy = field.origin[1] + (np.arange(field.height) + 0.5) * field.resolution
    xs = np.repeat(cx, field.height)
    ys = np.tile(cy, field.width)
    rows = np.column_stack([xs, ys, field.f_star.ravel(), field.t_star.ravel()])
    _write_csv(path, ["x", "y", "f_star", "t_star"], rows)


def load_field_csv(path: str) -> SweptField:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    xs, ys = data[:, 0], data[:, 1]
    height = int(np.argmax(xs != xs[0])) or data.shape[0]
    if data.shape[0] % height != 0:
        raise MissingArtifact(f"{path} has a ragged grid layout")
    width = data.shape[0] // height
    resolution = float(ys[1] - ys[0]) if height > 1 else float(xs[height] - xs[0])
    origin = np.array([xs[0] - resolution / 2.0, ys[0] - resolution / 2.0])
    return SweptField(
        origin=origin,
        resolution=resolution,
        width=width,
        height=height,
        f_star=data[:, 2].reshape(width, height),
        t_star=data[:, 3].reshape(width, height),
    )


def write_trace_csv(path: str, trace: SimTrace) -> None:
    n_w = trace.wheel_gamma.shape[1]
    header = ["t", "x", "y", "phi", "ref_x", "ref_y", "ref_phi", "vx", "vy", "omega", "e_y", "e_phi"]
    header += [f"gamma_{i + 1}" for i in range(n_w)] + [f"speed_{i + 1}" for i in range(n_w)]
    rows = np.column_stack(
        [
            trace.t,
            trace.pose,
            trace.ref,
            trace.u,
            trace.e_y,
            trace.e_phi,
            trace.wheel_gamma,
            trace.wheel_speed,
        ]
    )
    _write_csv(path, header, rows)


def load_trace_csv(path: str) -> SimTrace:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    n_w = sum(1 for h in header if h.startswith("gamma_"))
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[0] < 2:
        raise MissingArtifact(f"{path} holds fewer than two samples")
    return SimTrace(
        t=data[:, 0],
        pose=data[:, 1:4],
        ref=data[:, 4:7],
        u=data[:, 7:10],
        e_y=data[:, 10],
        e_phi=data[:, 11],
        wheel_gamma=data[:, 12 : 12 + n_w],
        wheel_speed=data[:, 12 + n_w : 12 + 2 * n_w],
        dt=float(data[1, 0] - data[0, 0]),
    )


def _merge_timings(out_dir: str, updates: dict) -> None:
    path = os.path.join(out_dir, "timings.json")
    current = {}
    if os.path.exists(path):
        try:
            with open(path, "r", encoding="utf-8") as fh:
                current = json.load(fh)
        except (json.JSONDecodeError, OSError):
            current = {}
    current.update(updates)
    _write_json(path, current)


# ---------------------------------------------------------------------------
# pipeline


def _build_grid(sc: Scenario) -> GridMap:
    return rasterize_obstacles(sc.obstacles, sc.bounds, sc.resolution)


def _plan_init(sc: Scenario, grid: GridMap):
    route = astar_plan(grid, sc.start[:2], sc.goal[:2], clearance=sc.clearance)
    route = np.vstack([sc.start[:2], route, sc.goal[:2]])
    init = estimate_headings(route, spacing=sc.waypoint_spacing)
    poses = init.poses
    # Pin the commanded endpoint headings, then restore unwrapped continuity.
    poses[0, 2] = sc.start[2]
    for j in range(1, poses.shape[0]):
        d = math.remainder(poses[j, 2] - poses[j - 1, 2], 2.0 * math.pi)
        poses[j, 2] = poses[j - 1, 2] + d
    d_end = math.remainder(sc.goal[2] - poses[-2, 2], 2.0 * math.pi)
    poses[-1, 2] = poses[-2, 2] + d_end
    return init


def _stage_plan(sc: Scenario, out_dir: str, seed) -> tuple:
    grid = _build_grid(sc)
    t0 = time.perf_counter()
    init = _plan_init(sc, grid)
    report1 = optimize_stage1(init, sc.weights, sc.plan_opts)
    report2 = optimize_stage2(report1.trajectory, grid, sc.veh, sc.weights, sc.plan_opts)
    plan_time = time.perf_counter() - t0
    traj = report2.trajectory

    _write_json(os.path.join(out_dir, "trajectory.json"), traj.to_dict())
    doc = {
        "schema": SCHEMA_VERSION,
        "scenario": sc.echo,
        "seed": seed,
        "stage1": {
            "converged": report1.converged,
            "reason": report1.reason,
            "iterations": len(report1.cost_trace),
            "final_cost": report1.cost_trace[-1],
        },
        "stage2": {
            "converged": report2.converged,
            "reason": report2.reason,
            "iterations": len(report2.cost_trace),
            "final_cost": report2.cost_trace[-1],
            "feasible": report2.feasible,
            "min_clearance": (
                report2.min_clearance
                if report2.min_clearance is not None and math.isfinite(report2.min_clearance)
                else None
            ),
        },
        "total_time_s": traj.total_time,
    }
    _write_json(os.path.join(out_dir, "plan_report.json"), doc)
    rows = [(0.0, float(i), c) for i, c in enumerate(report1.cost_trace)]
    rows += [(1.0, float(i), c) for i, c in enumerate(report2.cost_trace)]
    _write_csv(os.path.join(out_dir, "cost_trace.csv"), ["stage", "iteration", "cost"], rows)
    _merge_timings(out_dir, {"plan_s": plan_time})
    if not report2.feasible:
        raise RuntimeError(
            "planned trajectory violates the hard clearance check "
            f"(min footprint distance {report2.min_clearance:.4f} m)"
        )
    return traj, grid, plan_time


def _load_traj(out_dir: str) -> MincoTrajectory:
    path = os.path.join(out_dir, "trajectory.json")
    if not os.path.exists(path):
        raise MissingArtifact("stage needs trajectory.json; run the plan stage first")
    with open(path, "r", encoding="utf-8") as fh:
        return MincoTrajectory.from_dict(json.load(fh))


def _stage_sweep(sc: Scenario, out_dir: str, traj, grid, field_res: float) -> SweptField:
    t0 = time.perf_counter()
    region = auto_region(traj, sc.veh, margin=sc.sweep_margin)
    field = compute_swept_field(traj, sc.veh, region=region, resolution=field_res)
    sweep_time = time.perf_counter() - t0
    write_field_csv(os.path.join(out_dir, "field.csv"), field)
    report = excess_area(field, traj, sc.veh, baseline_mode="ribbon")
    _write_json(
        os.path.join(out_dir, "area.json"),
        {
            "swept_area": report.swept_area,
            "baseline_area": report.baseline_area,
            "excess_area": report.excess_area,
        },
    )
    render_scene(
        os.path.join(out_dir, "scene.svg"),
        sc.veh,
        traj=traj,
        grid=grid,
        field=field,
        bounds=sc.bounds,
    )
    _merge_timings(out_dir, {"sweep_s": sweep_time})
    return field


def _stage_track(sc: Scenario, out_dir: str, traj) -> SimTrace:
    t0 = time.perf_counter()
    trace = run_closed_loop(traj, sc.veh, sc.mpc, sc.sim)
    track_time = time.perf_counter() - t0
    write_trace_csv(os.path.join(out_dir, "trace.csv"), trace)
    _merge_timings(out_dir, {"track_s": track_time})
    if trace.aborted is not None:
        raise RuntimeError(f"controller aborted mid-run: {trace.aborted}")
    return trace


def _stage_metrics(sc: Scenario, out_dir: str, traj, trace, field: SweptField, plan_time) -> dict:
    t0 = time.perf_counter()
    region = (
        float(field.origin[0]),
        float(field.origin[1]),
        float(field.origin[0] + field.width * field.resolution),
        float(field.origin[1] + field.height * field.resolution),
    )
    driven_field = compute_swept_field(
        driven_path(trace), sc.veh, region=region, resolution=field.resolution
    )
    if plan_time is None:
        plan_time = 0.0
        timings_path = os.path.join(out_dir, "timings.json")
        if os.path.exists(timings_path):
            with open(timings_path, "r", encoding="utf-8") as fh:
                plan_time = json.load(fh).get("plan_s", 0.0)
    report = compute_metrics(trace, traj, sc.veh, driven_field, planning_time=plan_time)
    planned = excess_area(field, traj, sc.veh, baseline_mode="ribbon")
    driven = excess_area(driven_field, driven_path(trace), sc.veh, baseline_mode="ribbon")
    doc = {
        "excess_swept_area": report.excess_swept_area,
        "swept_area": driven.swept_area,
        "baseline_area": driven.baseline_area,
        "planned_swept_area": planned.swept_area,
        "planned_excess_area": planned.excess_area,
        "max_abs_e_y": report.max_abs_e_y,
        "mean_abs_e_y": report.mean_abs_e_y,
        "max_abs_e_phi_deg": report.max_abs_e_phi_deg,
        "mean_abs_e_phi_deg": report.mean_abs_e_phi_deg,
    }
    _write_json(os.path.join(out_dir, "metrics.json"), doc)
    _merge_timings(out_dir, {"metrics_s": time.perf_counter() - t0, "planning_time_s": float(plan_time)})
    return doc


_STAGE_ORDER = ("plan", "sweep", "track", "metrics")


def run_pipeline(
    sc: Scenario,
    stages,
    out_dir: str,
    field_res: float | None = None,
    seed: int | None = None,
) -> int:
    """Execute the requested stages, writing artifacts into out_dir.

    Missing dependencies are loaded from previous artifacts in out_dir.
    Returns 0 on success; on failure writes error.json naming the stage and
    exception and returns 1.
    """
    os.makedirs(out_dir, exist_ok=True)
    todo = [s for s in _STAGE_ORDER if s in stages]
    if not todo:
        raise ValueError("no stages requested")
    res = field_res if field_res is not None else sc.sweep_resolution

    traj = None
    grid = None
    field = None
    trace = None
    plan_time = None
    stage = todo[0]
    try:
        for stage in todo:
            if stage == "plan":
                traj, grid, plan_time = _stage_plan(sc, out_dir, seed)
            elif stage == "sweep":
                traj = traj if traj is not None else _load_traj(out_dir)
                grid = grid if grid is not None else _build_grid(sc)
                field = _stage_sweep(sc, out_dir, traj, grid, res)
            elif stage == "track":
                traj = traj if traj is not None else _load_traj(out_dir)
                trace = _stage_track(sc, out_dir, traj)
            elif stage == "metrics":
                traj = traj if traj is not None else _load_traj(out_dir)
                if trace is None:
                    trace_path = os.path.join(out_dir, "trace.csv")
                    if not os.path.exists(trace_path):
                        raise MissingArtifact("metrics needs trace.csv; run the track stage first")
                    trace = load_trace_csv(trace_path)
                if field is None:
                    field_path = os.path.join(out_dir, "field.csv")
                    if not os.path.exists(field_path):
                        raise MissingArtifact("metrics needs field.csv; run the sweep stage first")
                    field = load_field_csv(field_path)
                _stage_metrics(sc, out_dir, traj, trace, field, plan_time)
    except Exception as exc:  # noqa: BLE001 - every failure becomes a machine-readable report
        _write_json(
            os.path.join(out_dir, "error.json"),
            {"stage": stage, "error": type(exc).__name__, "message": str(exc)},
        )
        print(f"error in stage '{stage}': {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    err_path = os.path.join(out_dir, "error.json")
    if os.path.exists(err_path):
        os.remove(err_path)
    return 0


def _run_ablation(sc: Scenario, stages, out_dir: str, field_res, seed) -> int:
    """Run the pipeline twice: as configured, and with the sweep weight zeroed."""
    os.makedirs(out_dir, exist_ok=True)
    results = {}
    for label, sweep_w in (("sv_on", sc.weights.sweep), ("sv_off", 0.0)):
        sub = os.path.join(out_dir, label)
        sc.weights.sweep = sweep_w
        sc.echo["planner"]["sweep"] = sweep_w
        code = run_pipeline(sc, stages, sub, field_res=field_res, seed=seed)
        if code != 0:
            return code
        metrics_path = os.path.join(sub, "metrics.json")
        if os.path.exists(metrics_path):
            with open(metrics_path, "r", encoding="utf-8") as fh:
                results[label] = json.load(fh)
    if "sv_on" in results and "sv_off" in results:
        _write_json(
            os.path.join(out_dir, "ablation.json"),
            {
                "sv_on_excess": results["sv_on"]["excess_swept_area"],
                "sv_off_excess": results["sv_off"]["excess_swept_area"],
                "improvement": results["sv_off"]["excess_swept_area"]
                - results["sv_on"]["excess_swept_area"],
            },
        )
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sweptplan",
        description="Plan, sweep-analyze, track, and score swerve-drive trajectories.",
    )
    parser.add_argument(
        "stages",
        choices=["plan", "sweep", "track", "metrics", "all"],
        help="pipeline stage to run ('all' runs plan, sweep, track, metrics in order)",
    )
    parser.add_argument("--config", required=True, help="scenario JSON file (schema 1)")
    parser.add_argument("--out", default="out", help="artifact output directory (default: ./out)")
    parser.add_argument(
        "--grid-res",
        type=float,
        default=None,
        help="override the swept-field grid resolution in meters",
    )
    parser.add_argument(
        "--ablate-sv",
        action="store_true",
        help="run twice (sv_on/, sv_off/ subdirectories) and compare excess swept areas",
    )
    parser.add_argument("--seed", type=int, default=None, help="echoed into reports; the pipeline is deterministic")
    parser.add_argument(
        "--compat-paper-wheel-matrix",
        action="store_true",
        help="use the legacy wheel-velocity matrix (+omega*Y_w) in the tracking log",
    )
    args = parser.parse_args(argv)

    try:
        sc = parse_scenario(args.config)
    except FileNotFoundError:
        print(f"error: scenario file not found: {args.config}", file=sys.stderr)
        return 2
    except (ParseError, ValidationError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    if args.compat_paper_wheel_matrix:
        sc.sim.paper_wheel_matrix = True
    stages = list(_STAGE_ORDER) if args.stages == "all" else [args.stages]
    if args.ablate_sv:
        return _run_ablation(sc, stages, args.out, args.grid_res, args.seed)
    return run_pipeline(sc, stages, args.out, field_res=args.grid_res, seed=args.seed)


if __name__ == "__main__":
    sys.exit(main())
