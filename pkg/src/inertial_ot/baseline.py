"""
Conventional fusion dead reckoning: complementary-filter heading from gyro and
magnetometer, then trapezoidal double integration of in-plane acceleration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sim import IMU_RATE, SEQUENCE_SECONDS, Dataset, wrap_angle


@dataclass
class FusionState:
    heading: float = 0.0
    velocity: np.ndarray = None
    position: np.ndarray = None
    complementary_gain: float = 0.02

    def __post_init__(self):
        self.heading = float(wrap_angle(self.heading))
        self.velocity = np.zeros(2) if self.velocity is None else np.asarray(self.velocity, float)
        self.position = np.zeros(2) if self.position is None else np.asarray(self.position, float)
        if not 0.0 <= self.complementary_gain <= 1.0:
            raise ValueError("complementary_gain must be in [0, 1]")


def mag_heading(mag) -> np.ndarray:
    """Heading implied by a body-frame reading of a field pointing along world +x."""
    mag = np.asarray(mag, dtype=float)
    return np.arctan2(-mag[:, 1], mag[:, 0])


def estimate_heading(t, gyro_z, mag, gain=0.02, initial_heading=None) -> np.ndarray:
    """Complementary filter.

    theta_{k+1} = pred + gain * wrap(psi_{k+1} - pred), pred = theta_k + gyro_z * dt,
    which equals the convex blend (1 - gain) * pred + gain * psi away from the
    +-pi seam. ``initial_heading`` defaults to the first magnetometer heading.
    """
    t = np.asarray(t, dtype=float)
    gz = np.asarray(gyro_z, dtype=float)
    if not 0.0 <= gain <= 1.0:
        raise ValueError("gain must be in [0, 1]")
    psi = mag_heading(mag)
    theta = np.empty(len(t))
    theta[0] = psi[0] if initial_heading is None else float(wrap_angle(initial_heading))
    if gain == 1.0:
        theta[0] = psi[0]
    dt = np.diff(t)
    for k in range(len(t) - 1):
        pred = theta[k] + gz[k] * dt[k]
        theta[k + 1] = wrap_angle(pred + gain * wrap_angle(psi[k + 1] - pred))
    return theta


def unwrapped_heading(t, gyro_z, initial_heading=0.0) -> np.ndarray:
    """Pure gyro integration without wrapping (for drift analysis)."""
    dt = np.diff(np.asarray(t, dtype=float))
    return initial_heading + np.concatenate([[0.0], np.cumsum(np.asarray(gyro_z)[:-1] * dt)])


def double_integrate(t, accel_xy, headings, initial_velocity=(0.0, 0.0),
                     initial_position=(0.0, 0.0)) -> np.ndarray:
    """Rotate body accel to the world frame and integrate twice (trapezoidal).

    Returns an (N, 3) array of x, y and the supplied heading.
    """
    t = np.asarray(t, dtype=float)
    a = np.asarray(accel_xy, dtype=float)[:, :2]
    th = np.asarray(headings, dtype=float)
    if not (len(t) == len(a) == len(th)):
        raise ValueError("time, acceleration and heading lengths differ")
    c, s = np.cos(th), np.sin(th)
    aw = np.column_stack([c * a[:, 0] - s * a[:, 1], s * a[:, 0] + c * a[:, 1]])
    dt = np.diff(t)[:, None]
    v = np.empty_like(aw)
    p = np.empty_like(aw)
    v[0] = initial_velocity
    v[1:] = v[0] + np.cumsum(0.5 * (aw[1:] + aw[:-1]) * dt, axis=0)
    p[0] = initial_position
    p[1:] = p[0] + np.cumsum(0.5 * (v[1:] + v[:-1]) * dt, axis=0)
    return np.column_stack([p, wrap_angle(th)])


def fusion_sequence(dataset: Dataset, domain: int, seq_id: int, gain=0.02):
    """Dead-reckon one 20 s sequence from its groundtruth start pose and velocity.

    Returns ``(trajectory, groundtruth)`` sampled at the IMU rate.
    """
    session = dataset.session(domain)
    n = int(round(SEQUENCE_SECONDS * IMU_RATE))
    sl = slice(seq_id * n, (seq_id + 1) * n)
    t = session.imu.t[sl]
    gt = session.pose_at(t)
    theta = estimate_heading(t, session.imu.gyro[sl, 2], session.imu.mag[sl], gain)
    h = 1.0 / IMU_RATE
    v0 = (session.pose_at([t[0] + h])[0, :2] - gt[0, :2]) / h
    traj = double_integrate(t, session.imu.accel[sl], theta, v0, gt[0, :2])
    return traj, gt
