"""Per-wheel steering and speed allocation for a swerve drivetrain.

Each wheel's linear velocity follows from the body twist by rigid-body
kinematics; the steering angle is folded into (-pi/2, pi/2] with a signed
wheel speed so modules never swing more than a quarter turn. The inverse map
(least squares over all wheels) reconstructs the body twist for verification.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class RankDeficient(Exception):
    """Raised when the wheel layout cannot determine a unique twist."""


@dataclass
class WheelCommand:
    """Steering angle (radians, in (-pi/2, pi/2]) and signed drive speed (m/s)."""

    gamma: float
    speed: float


def wheel_velocity(u_body: np.ndarray, wheel_xy: np.ndarray, paper_matrix: bool = False) -> np.ndarray:
    """Linear velocity of a wheel mount point under body twist (Vx, Vy, omega).

    The rigid-body form is (Vx - omega*Yw, Vy + omega*Xw); paper_matrix=True
    selects the published sign variant (Vx + omega*Yw, Vy + omega*Xw) for
    comparison runs.
    """
    vx, vy, w = (float(v) for v in u_body)
    xw, yw = float(wheel_xy[0]), float(wheel_xy[1])
    if paper_matrix:
        return np.array([vx + w * yw, vy + w * xw])
    return np.array([vx - w * yw, vy + w * xw])


def fold_steering(v: np.ndarray) -> WheelCommand:
    """Fold a wheel velocity vector into a (-pi/2, pi/2] steering angle and signed speed."""
    speed = math.hypot(float(v[0]), float(v[1]))
    if speed == 0.0:
        return WheelCommand(gamma=0.0, speed=0.0)
    gamma = math.atan2(float(v[1]), float(v[0]))
    if gamma > math.pi / 2.0:
        return WheelCommand(gamma=gamma - math.pi, speed=-speed)
    if gamma <= -math.pi / 2.0:
        return WheelCommand(gamma=gamma + math.pi, speed=-speed)
    return WheelCommand(gamma=gamma, speed=speed)


def allocate(u_body: np.ndarray, veh, paper_matrix: bool = False) -> list[WheelCommand]:
    """Steering/speed commands for every wheel under the body twist."""
    return [
        fold_steering(wheel_velocity(u_body, w, paper_matrix=paper_matrix))
        for w in np.atleast_2d(np.asarray(veh.wheel_positions, dtype=float))
    ]


def reconstruct_twist(
    commands: list[WheelCommand],
    veh,
    paper_matrix: bool = False,
    return_residual: bool = False,
):
    """Least-squares body twist from wheel commands; inverse of allocate.

    Raises RankDeficient when the stacked wheel jacobian has rank below 3
    (all wheels collinear or coincident). With return_residual=True also
    returns the stacked velocity residual norm, nonzero for inconsistent
    command sets.
    """
    wheels = np.atleast_2d(np.asarray(veh.wheel_positions, dtype=float))
    if len(commands) != wheels.shape[0]:
        raise ValueError("command count does not match wheel count")
    n = wheels.shape[0]
    a = np.zeros((2 * n, 3))
    b = np.zeros(2 * n)
    for i, (cmd, (xw, yw)) in enumerate(zip(commands, wheels)):
        a[2 * i, 0] = 1.0
        a[2 * i, 2] = yw if paper_matrix else -yw
        a[2 * i + 1, 1] = 1.0
        a[2 * i + 1, 2] = xw
        b[2 * i] = cmd.speed * math.cos(cmd.gamma)
        b[2 * i + 1] = cmd.speed * math.sin(cmd.gamma)
    u, residuals, rank, _ = np.linalg.lstsq(a, b, rcond=None)
    if rank < 3:
        raise RankDeficient(f"wheel jacobian rank {rank} < 3; layout is degenerate")
    if return_residual:
        res = float(np.linalg.norm(a @ u - b))
        return u, res
    return u
