"""Independent reference computations the test suite checks the package against.

Everything here is written the slow, obvious way (dense sampling, exhaustive
enumeration, textbook graph search) so agreement with the fast library code
is evidence, not tautology. Nothing in this module imports from the planner,
field, or QP internals beyond plain data containers.
"""

from __future__ import annotations

import heapq
import itertools
import math

import numpy as np


def rect_boundary_points(length: float, width: float, n: int) -> np.ndarray:
    """Points spread along the rectangle boundary, roughly n of them."""
    hl, hw = length / 2.0, width / 2.0
    per_edge = max(2, n // 4)
    xs = np.linspace(-hl, hl, per_edge)
    ys = np.linspace(-hw, hw, per_edge)
    bottom = np.column_stack([xs, np.full(per_edge, -hw)])
    top = np.column_stack([xs, np.full(per_edge, hw)])
    left = np.column_stack([np.full(per_edge, -hl), ys])
    right = np.column_stack([np.full(per_edge, hl), ys])
    return np.vstack([bottom, top, left, right])


def boundary_distance(p: np.ndarray, boundary_pts: np.ndarray) -> float:
    d = boundary_pts - np.asarray(p, dtype=float)
    return float(np.sqrt((d * d).sum(axis=1)).min())


def fd_cost_grads(fn, q: np.ndarray, T: np.ndarray, step: float = 1e-6):
    """Central finite differences of fn(q, T) -> scalar over every entry."""
    q = np.asarray(q, dtype=float)
    T = np.asarray(T, dtype=float)
    gq = np.zeros_like(q)
    for idx in np.ndindex(q.shape):
        qp = q.copy()
        qm = q.copy()
        qp[idx] += step
        qm[idx] -= step
        gq[idx] = (fn(qp, T) - fn(qm, T)) / (2.0 * step)
    gT = np.zeros_like(T)
    for j in range(T.size):
        Tp = T.copy()
        Tm = T.copy()
        Tp[j] += step
        Tm[j] -= step
        gT[j] = (fn(q, Tp) - fn(q, Tm)) / (2.0 * step)
    return gq, gT


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    """Relative disagreement between two gradient stacks, scaled by their size."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def dijkstra_cost(free: np.ndarray, start_cell, goal_cell, resolution: float) -> float:
    """Shortest 8-connected path cost over a free-cell mask, euclidean edges.

    free is indexed [ix, iy]; returns math.inf when the goal is unreachable.
    """
    w, h = free.shape
    moves = [
        (1, 0, 1.0), (-1, 0, 1.0), (0, 1, 1.0), (0, -1, 1.0),
        (1, 1, math.sqrt(2.0)), (1, -1, math.sqrt(2.0)),
        (-1, 1, math.sqrt(2.0)), (-1, -1, math.sqrt(2.0)),
    ]
    dist = {start_cell: 0.0}
    pq = [(0.0, start_cell)]
    while pq:
        d, c = heapq.heappop(pq)
        if c == goal_cell:
            return d * resolution
        if d > dist.get(c, math.inf):
            continue
        cx, cy = c
        for dx, dy, cost in moves:
            nx, ny = cx + dx, cy + dy
            if 0 <= nx < w and 0 <= ny < h and free[nx, ny]:
                nd = d + cost
                nc = (nx, ny)
                if nd < dist.get(nc, math.inf) - 1e-15:
                    dist[nc] = nd
                    heapq.heappush(pq, (nd, nc))
    return math.inf


def sdf_values_brute(points_body: np.ndarray, length: float, width: float) -> np.ndarray:
    """Rectangle SDF written straight from its definition, no shared code."""
    p = np.atleast_2d(np.asarray(points_body, dtype=float))
    dx = np.abs(p[:, 0]) - length / 2.0
    dy = np.abs(p[:, 1]) - width / 2.0
    corner = (dx > 0.0) & (dy > 0.0)
    out = np.where(corner, np.hypot(dx, dy), np.maximum(dx, dy))
    return out


def min_time_scan(points: np.ndarray, path, length: float, width: float, t_step: float = 1e-3):
    """Dense time-grid minimum of the pose-relative SDF for each query point.

    path only needs .total_time and .sample(ts, 0); returns (t_star, f_star)
    arrays aligned with the query points.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    total = path.total_time
    n = int(math.floor(total / t_step)) + 1
    ts = np.minimum(np.arange(n + 1) * t_step, total)
    poses = path.sample(ts, 0)
    c = np.cos(poses[:, 2])
    s = np.sin(poses[:, 2])
    best_f = np.full(pts.shape[0], np.inf)
    best_t = np.zeros(pts.shape[0])
    for k in range(ts.size):
        d = pts - poses[k, :2]
        body = np.column_stack([c[k] * d[:, 0] + s[k] * d[:, 1], -s[k] * d[:, 0] + c[k] * d[:, 1]])
        f = sdf_values_brute(body, length, width)
        better = f < best_f
        best_f[better] = f[better]
        best_t[better] = ts[k]
    return best_t, best_f


def _constraint_rows(n: int, nu: int, lb, ub, u_prev, du_lb, du_ub):
    """All box and step-to-step rate constraints as rows of A x <= b."""
    rows = []
    rhs = []
    eye = np.eye(n)
    for i in range(n):
        rows.append(eye[i])
        rhs.append(ub[i])
        rows.append(-eye[i])
        rhs.append(-lb[i])
    for i in range(n):
        d = eye[i].copy()
        base = 0.0
        if i >= nu:
            d = d - eye[i - nu]
        else:
            base = u_prev[i]
        rows.append(d)
        rhs.append(du_ub[i % nu] + base)
        rows.append(-d)
        rhs.append(-(du_lb[i % nu] + base))
    return np.asarray(rows), np.asarray(rhs)


def qp_enumerate(H, g, lb, ub, u_prev, du_lb, du_ub, nu: int, box_only_subsets: bool = False):
    """Global box/rate QP minimum by trying every candidate active set.

    For each subset of constraint rows (at most n of them), the equality-
    constrained stationary point is computed and kept when it satisfies every
    constraint; the feasible candidate with the lowest objective is the exact
    optimum because the true solution's own active set appears among the
    subsets. box_only_subsets restricts enumeration to the box rows and is
    only valid when the rate bounds are slack enough never to activate.
    """
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    n = g.size
    A, b = _constraint_rows(n, nu, lb, ub, u_prev, du_lb, du_ub)
    if box_only_subsets:
        candidates = range(2 * n)
    else:
        candidates = range(A.shape[0])
    best_x = None
    best_obj = np.inf
    for k in range(n + 1):
        for subset in itertools.combinations(candidates, k):
            idx = list(subset)
            kkt = np.zeros((n + k, n + k))
            kkt[:n, :n] = H
            if k:
                kkt[:n, n:] = A[idx].T
                kkt[n:, :n] = A[idx]
            rhs = np.concatenate([-g, b[idx]])
            try:
                sol = np.linalg.solve(kkt, rhs)
            except np.linalg.LinAlgError:
                continue
            x = sol[:n]
            if np.all(A @ x <= b + 1e-9):
                obj = 0.5 * x @ H @ x + g @ x
                if obj < best_obj - 1e-15:
                    best_obj = obj
                    best_x = x
    return best_x, best_obj


def disc_cell_count(bounds, resolution: float, cx: float, cy: float, r: float) -> int:
    """Exact number of grid-cell centers inside the disc."""
    xmin, ymin, xmax, ymax = bounds
    nx = int(round((xmax - xmin) / resolution))
    ny = int(round((ymax - ymin) / resolution))
    xs = xmin + (np.arange(nx) + 0.5) * resolution
    ys = ymin + (np.arange(ny) + 0.5) * resolution
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    return int(((gx - cx) ** 2 + (gy - cy) ** 2 <= r * r).sum())


def trapezoid(y: np.ndarray, x: np.ndarray) -> float:
    fn = getattr(np, "trapezoid", None) or np.trapz
    return float(fn(y, x))
