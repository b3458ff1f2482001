"""Box-constrained linear MPC for trajectory tracking.

The tracked plant is a kinematic integrator in (x, y, phi): state plus dt
times the commanded twist. Stacking Np predicted states over an Nc-step
input sequence gives a dense least-squares tracking objective; bounds on the
inputs and their first differences make it a box/rate-constrained strictly
convex QP, solved by a primal active-set method with deterministic
tie-breaking and optional warm starts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose2, wrap_angle

NU = 3  # inputs per step: Vx, Vy, omega


class Infeasible(Exception):
    """Raised when the box and rate constraints admit no input sequence."""


class HeadingWrapMismatch(Exception):
    """Raised when a reference heading sequence jumps by more than pi per step."""


@dataclass
class MpcConfig:
    dt: float = 0.05
    horizon: int = 20  # Np, prediction steps
    control_horizon: int = 10  # Nc <= Np, free input steps; later inputs are zero
    state_weight: np.ndarray = field(default_factory=lambda: np.diag([10.0, 10.0, 10.0]))
    input_weight: np.ndarray = field(default_factory=lambda: np.diag([0.05, 0.05, 0.05]))
    u_min: np.ndarray = field(default_factory=lambda: np.array([-2.0, -2.0, -1.0]))
    u_max: np.ndarray = field(default_factory=lambda: np.array([2.0, 2.0, 1.0]))
    du_min: np.ndarray = field(default_factory=lambda: np.full(NU, -np.inf))
    du_max: np.ndarray = field(default_factory=lambda: np.full(NU, np.inf))
    input_hold_beyond_nc: bool = False  # reserved alternative tail model

    def __post_init__(self) -> None:
        self.state_weight = np.asarray(self.state_weight, dtype=float).reshape(NU, NU)
        self.input_weight = np.asarray(self.input_weight, dtype=float).reshape(NU, NU)
        for name in ("u_min", "u_max", "du_min", "du_max"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float).reshape(NU))
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if not 1 <= self.control_horizon <= self.horizon:
            raise ValueError("need 1 <= control_horizon <= horizon")
        for m, name in ((self.state_weight, "state_weight"), (self.input_weight, "input_weight")):
            if not np.allclose(m, m.T, atol=1e-12):
                raise ValueError(f"{name} must be symmetric")
            if np.linalg.eigvalsh(m).min() < -1e-10:
                raise ValueError(f"{name} must be positive semidefinite")
        if np.any(self.u_min >= self.u_max):
            raise ValueError("u_min must be below u_max componentwise")
        if self.input_hold_beyond_nc:
            raise NotImplementedError("hold-last-input tail model is not implemented")


@dataclass
class MpcProblem:
    H: np.ndarray
    g: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    du_lb: np.ndarray
    du_ub: np.ndarray
    u_prev: np.ndarray
    nc: int


def build_prediction(cfg: MpcConfig) -> tuple[np.ndarray, np.ndarray]:
    """Stacked prediction operators: X_pred = Psi x0 + Theta U.

    With identity state dynamics and input matrix dt*I, Psi stacks Np
    identities and Theta has block (r, c) = dt*I for r >= c, c < Nc (inputs
    beyond the control horizon are zero).
    """
    np_, nc = cfg.horizon, cfg.control_horizon
    psi = np.tile(np.eye(NU), (np_, 1))
    theta = np.zeros((NU * np_, NU * nc))
    for r in range(np_):
        for c in range(min(r + 1, nc)):
            theta[NU * r : NU * r + NU, NU * c : NU * c + NU] = cfg.dt * np.eye(NU)
    return psi, theta


def build_qp(state: Pose2, ref: np.ndarray, u_prev: np.ndarray, cfg: MpcConfig) -> MpcProblem:
    """Assemble the tracking QP for a stacked reference Y_t (3*Np,).

    Reference headings must already be unwrapped relative to state.phi; a
    per-step jump above pi raises HeadingWrapMismatch.
    """
    ref = np.asarray(ref, dtype=float).ravel()
    np_, nc = cfg.horizon, cfg.control_horizon
    if ref.shape[0] != NU * np_:
        raise ValueError(f"reference must have length {NU * np_}")
    u_prev = np.asarray(u_prev, dtype=float).reshape(NU)
    phis = np.concatenate([[state.phi], ref.reshape(np_, NU)[:, 2]])
    if np.any(np.abs(np.diff(phis)) > math.pi + 1e-9):
        raise HeadingWrapMismatch("reference heading jumps by more than pi per step")

    psi, theta = build_prediction(cfg)
    qbar = np.kron(np.eye(np_), cfg.state_weight)
    rbar = np.kron(np.eye(nc), cfg.input_weight)
    h = theta.T @ qbar @ theta + rbar
    h = 0.5 * (h + h.T)
    # Regularize only if the assembled Hessian is not already positive definite.
    try:
        np.linalg.cholesky(h)
    except np.linalg.LinAlgError:
        h = h + 1e-9 * np.eye(h.shape[0])
    x0 = state.as_array()
    g = theta.T @ qbar @ (psi @ x0 - ref)
    return MpcProblem(
        H=h,
        g=g,
        lb=np.tile(cfg.u_min, nc),
        ub=np.tile(cfg.u_max, nc),
        du_lb=cfg.du_min.copy(),
        du_ub=cfg.du_max.copy(),
        u_prev=u_prev,
        nc=nc,
    )


def _feasible_start(prob: MpcProblem) -> np.ndarray:
    """Deterministic strictly feasible point via per-component interval propagation."""
    nc = prob.nc
    u0 = np.empty(NU * nc)
    for comp in range(NU):
        lo = prob.lb[comp::NU]
        hi = prob.ub[comp::NU]
        dl, du = prob.du_lb[comp], prob.du_ub[comp]
        # Forward reachable intervals from u_prev.
        fwd = []
        a, b = prob.u_prev[comp] + dl, prob.u_prev[comp] + du
        for i in range(nc):
            a, b = max(a, lo[i]), min(b, hi[i])
            if a > b + 1e-12:
                raise Infeasible(
                    f"box and rate constraints conflict for input component {comp} at step {i}"
                )
            fwd.append((a, b))
            a, b = a + dl, b + du
        # Backward prune so any in-interval choice can still finish the chain.
        back_lo, back_hi = -np.inf, np.inf
        for i in range(nc - 1, -1, -1):
            a = max(fwd[i][0], back_lo)
            b = min(fwd[i][1], back_hi)
            if a > b + 1e-12:
                raise Infeasible(
                    f"box and rate constraints conflict for input component {comp} at step {i}"
                )
            fwd[i] = (a, b)
            back_lo, back_hi = a - du, b - dl
        prev = prob.u_prev[comp]
        for i in range(nc):
            a = max(fwd[i][0], prev + dl)
            b = min(fwd[i][1], prev + du)
            v = min(max(0.0, a), b)  # prefer zero, else nearest feasible
            u0[NU * i + comp] = v
            prev = v
    return u0


def _constraint_rows(prob: MpcProblem):
    """Inequalities as a^T u <= b. Order: box upper, box lower, rate upper, rate lower."""
    n = NU * prob.nc
    rows: list[np.ndarray] = []
    rhs: list[float] = []
    for i in range(n):
        if np.isfinite(prob.ub[i]):
            e = np.zeros(n)
            e[i] = 1.0
            rows.append(e)
            rhs.append(prob.ub[i])
    for i in range(n):
        if np.isfinite(prob.lb[i]):
            e = np.zeros(n)
            e[i] = -1.0
            rows.append(e)
            rhs.append(-prob.lb[i])
    for i in range(n):
        comp = i % NU
        if np.isfinite(prob.du_ub[comp]):
            e = np.zeros(n)
            e[i] = 1.0
            off = prob.du_ub[comp]
            if i >= NU:
                e[i - NU] = -1.0
            else:
                off += prob.u_prev[comp]
            rows.append(e)
            rhs.append(off)
    for i in range(n):
        comp = i % NU
        if np.isfinite(prob.du_lb[comp]):
            e = np.zeros(n)
            e[i] = -1.0
            off = -prob.du_lb[comp]
            if i >= NU:
                e[i - NU] = 1.0
            else:
                off -= prob.u_prev[comp]
            rows.append(e)
            rhs.append(off)
    if rows:
        return np.array(rows), np.array(rhs)
    return np.zeros((0, n)), np.zeros(0)


def solve_qp(prob: MpcProblem, initial_active=None, full_output: bool = False):
    """Primal active-set solve of min 1/2 u^T H u + g^T u under box/rate constraints.

    Returns the stacked input vector; with full_output=True also a dict with
    iterations, the final active set, KKT residual, and a status of "optimal"
    or "max_iterations" (best feasible iterate). Ties break on the lowest
    constraint index so identical problems reproduce identical paths.
    """
    n = NU * prob.nc
    a_mat, b_vec = _constraint_rows(prob)
    m = a_mat.shape[0]
    x = _feasible_start(prob)
    work: list[int] = []
    if initial_active:
        for idx in initial_active:
            if 0 <= idx < m and abs(a_mat[idx] @ x - b_vec[idx]) < 1e-10:
                work.append(idx)
    max_iter = 50 * max(n, 1)
    status = "max_iterations"
    lam_full = np.zeros(m)
    for it in range(max_iter):
        # Equality-constrained step on the working set.
        k = len(work)
        kkt = np.zeros((n + k, n + k))
        kkt[:n, :n] = prob.H
        rhs = np.zeros(n + k)
        rhs[:n] = -(prob.H @ x + prob.g)
        if k:
            aw = a_mat[work]
            kkt[:n, n:] = aw.T
            kkt[n:, :n] = aw
        sol = np.linalg.solve(kkt, rhs)
        p = sol[:n]
        lam = sol[n:]
        if float(np.abs(p).max(initial=0.0)) <= 1e-11:
            if k == 0 or lam.min() >= -1e-9:
                status = "optimal"
                lam_full = np.zeros(m)
                lam_full[work] = lam
                break
            drop = int(np.argmin(lam))
            work.pop(drop)
            continue
        # Step length to the nearest violated constraint not in the working set.
        alpha = 1.0
        blocker = -1
        for i in range(m):
            if i in work:
                continue
            ap = float(a_mat[i] @ p)
            if ap > 1e-12:
                ratio = (b_vec[i] - float(a_mat[i] @ x)) / ap
                if ratio < alpha - 1e-12:
                    alpha = max(ratio, 0.0)
                    blocker = i
        x = x + alpha * p
        if blocker >= 0:
            work.append(blocker)
            work.sort()
    else:
        it = max_iter
    kkt_residual = float(np.abs(prob.H @ x + prob.g + a_mat.T @ lam_full).max(initial=0.0)) if status == "optimal" else math.inf
    if full_output:
        info = {
            "status": status,
            "iterations": it + 1 if status == "optimal" else max_iter,
            "active_set": tuple(sorted(work)),
            "kkt_residual": kkt_residual,
        }
        return x, info
    return x


def mpc_step(
    state: Pose2,
    traj,
    t_now: float,
    u_prev: np.ndarray,
    cfg: MpcConfig,
    initial_active=None,
    full_output: bool = False,
):
    """One receding-horizon update: returns the first commanded twist (world frame).

    The reference is the trajectory sampled at the next Np steps (clamped to
    its final pose past the end) with headings unwrapped relative to the
    current state so the QP never sees a branch jump.
    """
    np_ = cfg.horizon
    ts = t_now + cfg.dt * np.arange(1, np_ + 1)
    ref = traj.sample(np.clip(ts, 0.0, traj.total_time), 0).copy()
    prev_phi = state.phi
    for i in range(np_):
        ref[i, 2] = prev_phi + wrap_angle(ref[i, 2] - prev_phi)
        prev_phi = ref[i, 2]
    prob = build_qp(state, ref.ravel(), u_prev, cfg)
    if full_output:
        u, info = solve_qp(prob, initial_active=initial_active, full_output=True)
        return u[:NU], info
    u = solve_qp(prob, initial_active=initial_active)
    return u[:NU]
