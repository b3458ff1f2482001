"""Swept-volume field: per-point minimum footprint distance over a trajectory.

For a query point p and a pose path P(t), g(t) = F_SDF(p, P(t)) is the
footprint distance at time t. Its minimum over the trajectory duration,
f*(p) = min_t g(t), is negative exactly where the vehicle body passes, so the
f* <= 0 sublevel set is the swept area. Each grid cell runs an independent
K-sample coarse scan whose local minima seed Armijo-backtracked gradient
descent on g; cells are pure functions of the inputs, so chunks may execute
in parallel without changing the output.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .geometry import VehicleParams, footprint_sdf_batch, footprint_sdf_values

THREADS_ENV = "SWEPTPLAN_THREADS"


class RegionTooSmall(Exception):
    """Raised when the requested field region does not contain the swept footprint."""


@dataclass
class FieldOptions:
    # 64 samples keep basins narrower than the between-sample spacing from
    # hiding: at vehicle-scale speeds a body passage spans several samples
    coarse_samples: int = 64
    armijo_c: float = 1e-4
    shrink: float = 0.5
    time_tol: float = 1e-4  # seconds; refinement stops below this step size
    max_refine_iters: int = 60


@dataclass
class SweptField:
    """Sampled f*(p) and arg-min times on a uniform grid, indexed [ix, iy]."""

    origin: np.ndarray
    resolution: float
    width: int
    height: int
    f_star: np.ndarray
    t_star: np.ndarray

    def cell_centers(self) -> np.ndarray:
        ix, iy = np.meshgrid(np.arange(self.width), np.arange(self.height), indexing="ij")
        return self.origin + (np.stack([ix.ravel(), iy.ravel()], axis=1) + 0.5) * self.resolution


@dataclass
class AreaReport:
    swept_area: float
    baseline_area: float
    excess_area: float


class LinearPosePath:
    """Piecewise-linear pose path over given sample times; heading must be unwrapped.

    Provides the same sample()/total_time/arc_length surface as a spline
    trajectory so swept fields can be computed for driven pose logs.
    """

    def __init__(self, times: np.ndarray, poses: np.ndarray):
        self.times = np.asarray(times, dtype=float)
        self.poses = np.asarray(poses, dtype=float).reshape(-1, 3)
        if self.times.ndim != 1 or self.times.shape[0] != self.poses.shape[0]:
            raise ValueError("times and poses must have matching lengths")
        if self.times.shape[0] < 1:
            raise ValueError("need at least one sample")
        if np.any(np.diff(self.times) <= 0.0):
            raise ValueError("times must be strictly increasing")

    @property
    def total_time(self) -> float:
        return float(self.times[-1])

    def sample(self, ts: np.ndarray, order: int = 0) -> np.ndarray:
        ts = np.clip(np.asarray(ts, dtype=float), self.times[0], self.times[-1])
        if order == 0:
            out = np.empty(ts.shape + (3,))
            for c in range(3):
                out[..., c] = np.interp(ts, self.times, self.poses[:, c])
            return out
        if order == 1:
            if self.times.shape[0] < 2:
                return np.zeros(ts.shape + (3,))
            seg = np.clip(np.searchsorted(self.times, ts, side="right") - 1, 0, self.times.shape[0] - 2)
            dt = np.diff(self.times)[seg]
            return (self.poses[seg + 1] - self.poses[seg]) / dt[..., None]
        return np.zeros(ts.shape + (3,))

    def arc_length(self) -> float:
        d = np.diff(self.poses[:, :2], axis=0)
        return float(np.hypot(d[:, 0], d[:, 1]).sum()) if d.size else 0.0


def _g_values(path, veh: VehicleParams, points: np.ndarray, ts: np.ndarray) -> np.ndarray:
    """g(t_i) for each (point_i, t_i) pair; points (m,2), ts (m,)."""
    poses = path.sample(ts, 0)
    d = points - poses[:, :2]
    c = np.cos(poses[:, 2])
    s = np.sin(poses[:, 2])
    body = np.stack([c * d[:, 0] + s * d[:, 1], -s * d[:, 0] + c * d[:, 1]], axis=-1)
    return footprint_sdf_values(body, veh.length, veh.width)


def _g_and_slope(path, veh: VehicleParams, points: np.ndarray, ts: np.ndarray):
    """g(t) and dg/dt for per-point times. The slope chains the body-frame SDF
    gradient through the rigid transform rate: u' = R^T (J (p - c) w - c')."""
    poses = path.sample(ts, 0)
    twists = path.sample(ts, 1)
    d = points - poses[:, :2]
    c = np.cos(poses[:, 2])
    s = np.sin(poses[:, 2])
    body = np.stack([c * d[:, 0] + s * d[:, 1], -s * d[:, 0] + c * d[:, 1]], axis=-1)
    val, grad = footprint_sdf_batch(body, veh.length, veh.width)
    w = twists[:, 2]
    # J (p - c) with J = [[0, 1], [-1, 0]]
    jx = d[:, 1]
    jy = -d[:, 0]
    ax = jx * w - twists[:, 0]
    ay = jy * w - twists[:, 1]
    ux = c * ax + s * ay
    uy = -s * ax + c * ay
    slope = grad[:, 0] * ux + grad[:, 1] * uy
    return val, slope


def min_time_distance(
    p: np.ndarray,
    path,
    veh: VehicleParams,
    t_min: float = 0.0,
    t_max: float | None = None,
    opts: FieldOptions | None = None,
) -> tuple[float, float]:
    """Globalized search for min_t F_SDF(p, t) over [t_min, t_max].

    Returns (t_star, f_star). A K-sample coarse scan collects candidate
    basins (its local minima), Armijo-backtracked descent on g(t) refines
    the best few of them, and the deepest refined minimizer wins; interval
    endpoints are admissible.
    """
    pts = np.asarray(p, dtype=float).reshape(1, 2)
    t_hi = path.total_time if t_max is None else float(t_max)
    t, f = _min_time_batch(pts, path, veh, float(t_min), t_hi, opts or FieldOptions())
    return float(t[0]), float(f[0])


def _min_time_batch(
    points: np.ndarray,
    path,
    veh: VehicleParams,
    t_min: float,
    t_max: float,
    opts: FieldOptions,
):
    m = points.shape[0]
    if t_max <= t_min:
        ts = np.full(m, t_min)
        return ts, _g_values(path, veh, points, ts)
    k = max(2, int(opts.coarse_samples))
    grid_ts = np.linspace(t_min, t_max, k)
    vals = np.empty((k, m))
    for j, ti in enumerate(grid_ts):
        vals[j] = _g_values(path, veh, points, np.full(m, ti))

    # Every sampled local minimum is a candidate basin; the sample ordering by
    # value can differ from the ordering of the true basin depths, so the best
    # few candidates are refined independently per point and the deepest wins.
    is_min = np.ones((k, m), dtype=bool)
    is_min[1:] &= vals[1:] <= vals[:-1]
    is_min[:-1] &= vals[:-1] <= vals[1:]
    masked = np.where(is_min, vals, np.inf)
    order = np.argsort(masked, axis=0, kind="stable")
    cols = np.arange(m)

    step0 = (t_max - t_min) / (k - 1)
    best_t, best_f = _refine_times(
        points, grid_ts[order[0]], path, veh, t_min, t_max, step0, opts
    )
    for r in range(1, min(4, k)):
        has = np.isfinite(masked[order[r], cols])
        if not has.any():
            break
        sub = np.nonzero(has)[0]
        tr, fr = _refine_times(
            points[sub], grid_ts[order[r][sub]], path, veh, t_min, t_max, step0, opts
        )
        better = fr < best_f[sub]
        best_f[sub[better]] = fr[better]
        best_t[sub[better]] = tr[better]
    return best_t, best_f


def _refine_times(
    points: np.ndarray,
    t0: np.ndarray,
    path,
    veh: VehicleParams,
    t_min: float,
    t_max: float,
    step0: float,
    opts: FieldOptions,
):
    """Armijo-backtracked descent on g(t) from per-point starts; mutates t0.

    All points iterate in lockstep under masks, each touching only its own
    state, so results do not depend on how points are batched.
    """
    m = points.shape[0]
    t = t0
    f = _g_values(path, veh, points, t)
    alpha = np.full(m, step0)
    active = np.ones(m, dtype=bool)
    for _ in range(opts.max_refine_iters):
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        g_val, slope = _g_and_slope(path, veh, points[idx], t[idx])
        f[idx] = g_val
        d = np.where(slope > 0.0, -1.0, 1.0)
        # Stationary or pressed against the boundary: done.
        flat = np.abs(slope) < 1e-12
        at_lo = (t[idx] <= t_min + 1e-15) & (d < 0.0)
        at_hi = (t[idx] >= t_max - 1e-15) & (d > 0.0)
        done = flat | at_lo | at_hi
        if done.any():
            active[idx[done]] = False
            idx = idx[~done]
            if idx.size == 0:
                continue
            g_val = g_val[~done]
            slope = slope[~done]
            d = d[~done]
        a = alpha[idx].copy()
        accepted = np.zeros(idx.size, dtype=bool)
        t_new = t[idx].copy()
        f_new = g_val.copy()
        for _ in range(40):
            trying = ~accepted & (a > 1e-12)
            if not trying.any():
                break
            tt = np.clip(t[idx[trying]] + a[trying] * d[trying], t_min, t_max)
            ft = _g_values(path, veh, points[idx[trying]], tt)
            ok = ft <= g_val[trying] - opts.armijo_c * a[trying] * np.abs(slope[trying])
            sel = np.nonzero(trying)[0]
            acc = sel[ok]
            t_new[acc] = tt[ok]
            f_new[acc] = ft[ok]
            accepted[acc] = True
            a[sel[~ok]] *= opts.shrink
        moved = np.abs(t_new - t[idx])
        t[idx] = t_new
        f[idx] = f_new
        alpha[idx] = np.maximum(a * 2.0, 1e-9)
        settle = ~accepted | (moved < opts.time_tol)
        active[idx[settle]] = False
    # Final consistent evaluation at the refined times.
    f = _g_values(path, veh, points, t)
    return t, f


def auto_region(path, veh: VehicleParams, margin: float = 0.3, samples: int = 512):
    """Trajectory footprint bounding box inflated by vehicle length + margin."""
    ts = np.linspace(0.0, path.total_time, max(2, samples))
    poses = path.sample(ts, 0)
    r = veh.half_diagonal
    xmin = float(poses[:, 0].min()) - r
    xmax = float(poses[:, 0].max()) + r
    ymin = float(poses[:, 1].min()) - r
    ymax = float(poses[:, 1].max()) + r
    pad = veh.length + margin
    return (xmin - pad, ymin - pad, xmax + pad, ymax + pad)


def _resolve_threads(threads: int | None) -> int:
    if threads is None:
        raw = os.environ.get(THREADS_ENV, "0")
        try:
            threads = int(raw)
        except ValueError:
            threads = 0
    if threads <= 0:
        threads = os.cpu_count() or 1
    return max(1, threads)


def compute_swept_field(
    path,
    veh: VehicleParams,
    region=None,
    resolution: float = 0.05,
    opts: FieldOptions | None = None,
    threads: int | None = None,
) -> SweptField:
    """Evaluate f* and t* on a uniform grid covering `region`.

    region is (xmin, ymin, xmax, ymax) or None for an auto-sized box. Cells
    are distributed over worker threads in fixed row chunks writing disjoint
    output slices, so the result is bit-identical at any parallelism level
    (set via the `threads` argument or the SWEPTPLAN_THREADS env var, 0 = auto).
    """
    opts = opts or FieldOptions()
    if region is None:
        region = auto_region(path, veh)
    xmin, ymin, xmax, ymax = (float(v) for v in region)
    if not (xmax > xmin and ymax > ymin):
        raise RegionTooSmall(f"degenerate region {region!r}")
    # The region must contain every footprint corner along the trajectory.
    ts = np.linspace(0.0, path.total_time, 512)
    poses = path.sample(ts, 0)
    r = veh.half_diagonal
    if (
        poses[:, 0].min() - r < xmin
        or poses[:, 0].max() + r > xmax
        or poses[:, 1].min() - r < ymin
        or poses[:, 1].max() + r > ymax
    ):
        raise RegionTooSmall("trajectory footprint leaves the requested region")

    width = int(math.ceil((xmax - xmin) / resolution))
    height = int(math.ceil((ymax - ymin) / resolution))
    origin = np.array([xmin, ymin])
    f_star = np.empty((width, height))
    t_star = np.empty((width, height))

    iy = np.arange(height)
    n_threads = _resolve_threads(threads)
    chunk = max(1, math.ceil(width / (n_threads * 4)))

    def work(ix0: int) -> None:
        ix1 = min(ix0 + chunk, width)
        nx = ix1 - ix0
        xs = origin[0] + (np.arange(ix0, ix1) + 0.5) * resolution
        ys = origin[1] + (iy + 0.5) * resolution
        pts = np.empty((nx * height, 2))
        pts[:, 0] = np.repeat(xs, height)
        pts[:, 1] = np.tile(ys, nx)
        t, f = _min_time_batch(pts, path, veh, 0.0, path.total_time, opts)
        f_star[ix0:ix1] = f.reshape(nx, height)
        t_star[ix0:ix1] = t.reshape(nx, height)

    starts = list(range(0, width, chunk))
    if n_threads == 1 or len(starts) == 1:
        for s in starts:
            work(s)
    else:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            list(pool.map(work, starts))
    return SweptField(
        origin=origin,
        resolution=resolution,
        width=width,
        height=height,
        f_star=f_star,
        t_star=t_star,
    )


def swept_area(field: SweptField) -> float:
    """Area of the f* <= 0 sublevel set, counted by cell centers."""
    return float(np.count_nonzero(field.f_star <= 0.0)) * field.resolution**2


def excess_area(
    field: SweptField,
    path,
    veh: VehicleParams,
    baseline_mode: str = "ribbon",
    custom_baseline: float | None = None,
) -> AreaReport:
    """Swept area minus an ideal-coverage baseline.

    "ribbon" baselines with width * center-path arc length + one footprint
    (the minimum any rigid translation along the path must cover); "custom"
    uses the caller-supplied value.
    """
    area = swept_area(field)
    if baseline_mode == "ribbon":
        baseline = veh.width * path.arc_length() + veh.length * veh.width
    elif baseline_mode == "custom":
        if custom_baseline is None:
            raise ValueError("custom baseline mode needs custom_baseline")
        baseline = float(custom_baseline)
    else:
        raise ValueError(f"unknown baseline mode {baseline_mode!r}")
    return AreaReport(swept_area=area, baseline_area=baseline, excess_area=area - baseline)
