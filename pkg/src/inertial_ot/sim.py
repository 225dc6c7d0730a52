"""
Synthetic position-indexed IMU domains for a planar wheeled robot.

A single differential-drive trajectory is shared by every domain; each domain
mounts the IMU at a different offset along the body x-axis, so the only
difference between domains is the rigid-body lever arm (centripetal and
tangential acceleration, and the displacement of the sensor point itself).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

IMU_RATE = 70.0
GT_RATE = 5.0
SEQUENCE_SECONDS = 20.0
N_DOMAINS = 8
GRAVITY = 9.81


class ConfigurationError(ValueError):
    """Raised for invalid simulation parameters."""


def wrap_angle(a):
    """Wrap angles to (-pi, pi]."""
    a = np.asarray(a, dtype=float)
    w = np.mod(a + np.pi, 2.0 * np.pi) - np.pi
    w = np.where(w == -np.pi, np.pi, w)
    return w if w.ndim else float(w)


def domain_offset_cm(index: int) -> float:
    if not 0 <= index < N_DOMAINS:
        raise ConfigurationError(f"domain index {index} outside 0..{N_DOMAINS - 1}")
    return -0.4 + 1.0 * index


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    phi: float

    def __post_init__(self):
        object.__setattr__(self, "phi", float(wrap_angle(self.phi)))


@dataclass(frozen=True)
class RigidBodyOffset:
    """Sensor position in the body frame, origin at the centre of mass."""

    x_imu: float
    y_imu: float = 0.0

    @property
    def r_imu(self) -> float:
        return math.hypot(self.x_imu, self.y_imu)

    @property
    def phi_imu(self) -> float:
        return math.atan2(self.y_imu, self.x_imu)

    @classmethod
    def for_domain(cls, index: int) -> "RigidBodyOffset":
        return cls(domain_offset_cm(index) / 100.0, 0.0)


@dataclass(frozen=True)
class DomainIndex:
    index: int

    def __post_init__(self):
        if not 0 <= int(self.index) < N_DOMAINS:
            raise ConfigurationError(f"domain index {self.index} outside 0..{N_DOMAINS - 1}")

    @property
    def offset_cm(self) -> float:
        return domain_offset_cm(self.index)


@dataclass(frozen=True)
class NoiseModel:
    accel_sigma: float = 0.05
    gyro_sigma: float = 0.005
    mag_sigma: float = 0.01
    accel_bias_range: float = 0.05
    gyro_bias_range: float = 0.002

    def __post_init__(self):
        for name in ("accel_sigma", "gyro_sigma", "mag_sigma",
                     "accel_bias_range", "gyro_bias_range"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0")

    @classmethod
    def noiseless(cls) -> "NoiseModel":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0)

    def draw_biases(self, rng: np.random.Generator):
        """Per-session biases on the in-plane accelerometer axes and the yaw
        gyro; the remaining components are zero."""
        accel_bias = np.zeros(3)
        gyro_bias = np.zeros(3)
        accel_bias[:2] = rng.uniform(-1.0, 1.0, 2) * self.accel_bias_range
        gyro_bias[2] = rng.uniform(-1.0, 1.0) * self.gyro_bias_range
        return accel_bias, gyro_bias


@dataclass(frozen=True)
class Arena:
    xmin: float = 0.0
    xmax: float = 6.0
    ymin: float = 0.0
    ymax: float = 4.0

    def __post_init__(self):
        if not (np.isfinite([self.xmin, self.xmax, self.ymin, self.ymax]).all()
                and self.xmax > self.xmin and self.ymax > self.ymin):
            raise ConfigurationError(f"degenerate arena {self}")

    @property
    def centre(self):
        return 0.5 * (self.xmin + self.xmax), 0.5 * (self.ymin + self.ymax)


@dataclass
class Trajectory:
    """Dense planar pose stream of the robot centre of mass."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    phi: np.ndarray

    def __len__(self):
        return len(self.t)

    @property
    def poses(self) -> np.ndarray:
        return np.column_stack([self.x, self.y, self.phi])


@dataclass
class ImuStream:
    t: np.ndarray
    accel: np.ndarray
    gyro: np.ndarray
    mag: np.ndarray
    accel_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gyro_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __len__(self):
        return len(self.t)

    @property
    def channels(self) -> np.ndarray:
        """(N, 9) array ordered accel, gyro, mag."""
        return np.hstack([self.accel, self.gyro, self.mag])


def generate_trajectory(duration, arena=None, seed=0, max_waypoints=None,
                        v_max=0.35, w_max=1.4, lin_accel=0.6, ang_accel=4.0,
                        spin_prob=0.35, rate=IMU_RATE) -> Trajectory:
    """Differential-drive waypoint follower with occasional in-place spins.

    Speed and yaw-rate commands are slew-limited so that the pose stream is
    smooth enough to differentiate twice. ``max_waypoints=0`` leaves the robot
    parked at the arena centre.
    """
    arena = Arena() if arena is None else arena
    if duration <= 0:
        raise ConfigurationError("duration must be positive")
    if v_max > 0.4 or w_max > 1.5:
        raise ConfigurationError("speed limits exceed 0.4 m/s / 1.5 rad/s")
    n = int(round(duration * rate))
    dt = 1.0 / rate
    rng = np.random.default_rng(seed)

    margin = min(0.5, 0.2 * (arena.xmax - arena.xmin), 0.2 * (arena.ymax - arena.ymin))
    lo = np.array([arena.xmin + margin, arena.ymin + margin])
    hi = np.array([arena.xmax - margin, arena.ymax - margin])

    x, y = arena.centre
    phi = rng.uniform(-np.pi, np.pi)
    v = w = 0.0
    out = np.empty((n, 3))

    used = 0
    mode = None
    target = None
    spin_left = 0.0
    spin_rate = 0.0
    speed_scale = 1.0
    gain = 2.5

    for k in range(n):
        out[k] = (x, y, phi)
        if mode is None and (max_waypoints is None or used < max_waypoints):
            used += 1
            if rng.random() < spin_prob:
                mode = "spin"
                spin_left = rng.choice([-1.0, 1.0]) * rng.uniform(0.5 * np.pi, 2.0 * np.pi)
                spin_rate = rng.uniform(0.6, 1.0) * w_max
            else:
                mode = "goto"
                target = rng.uniform(lo, hi)
                speed_scale = rng.uniform(0.4, 1.0)
                gain = rng.uniform(1.5, 4.0)

        if mode == "goto":
            dx, dy = target[0] - x, target[1] - y
            dist = math.hypot(dx, dy)
            err = float(wrap_angle(math.atan2(dy, dx) - phi))
            w_cmd = float(np.clip(gain * err, -w_max, w_max))
            v_cmd = v_max * speed_scale * max(math.cos(err), 0.0) ** 2 * min(1.0, dist / 0.4)
            if dist < 0.08:
                mode = None
                v_cmd = w_cmd = 0.0
        elif mode == "spin":
            w_cmd = math.copysign(min(spin_rate, 2.0 * abs(spin_left) + 0.05), spin_left)
            v_cmd = 0.0
            if abs(spin_left) < 0.02:
                mode = None
                w_cmd = 0.0
        else:
            v_cmd = w_cmd = 0.0

        v += float(np.clip(v_cmd - v, -lin_accel * dt, lin_accel * dt))
        w += float(np.clip(w_cmd - w, -ang_accel * dt, ang_accel * dt))
        if mode == "spin":
            spin_left -= w * dt
        mid = phi + 0.5 * w * dt
        x += v * math.cos(mid) * dt
        y += v * math.sin(mid) * dt
        phi = float(wrap_angle(phi + w * dt))

    t = np.arange(n) * dt
    return Trajectory(t, out[:, 0], out[:, 1], out[:, 2])


def _second_difference(a, h):
    d = np.empty_like(a)
    d[1:-1] = (a[2:] - 2.0 * a[1:-1] + a[:-2]) / h ** 2
    d[0], d[-1] = d[1], d[-2]
    return d


def _central_difference(a, h):
    d = np.empty_like(a)
    d[1:-1] = (a[2:] - a[:-2]) / (2.0 * h)
    d[0], d[-1] = d[1], d[-2]
    return d


def _rotate(phi, vx, vy):
    c, s = np.cos(phi), np.sin(phi)
    return c * vx - s * vy, s * vx + c * vy


def imu_from_trajectory(traj: Trajectory, offset: RigidBodyOffset, noise=None,
                        gravity=GRAVITY, seed=0) -> ImuStream:
    """Body-frame accelerometer, gyroscope and magnetometer for a planar rigid body.

    Angular rate, angular acceleration and centre acceleration are taken from
    three-point central differences of the pose stream. The specific force at
    the sensor is the centre acceleration plus the tangential (alpha x r) and
    centripetal (-omega^2 r) terms; z carries gravity.
    """
    noise = NoiseModel() if noise is None else noise
    n = len(traj)
    if n < 3:
        raise ConfigurationError("need at least 3 poses to differentiate")
    h = float(traj.t[1] - traj.t[0])
    phi_u = np.unwrap(traj.phi)
    omega = _central_difference(phi_u, h)
    alpha = _second_difference(phi_u, h)
    ax_w = _second_difference(traj.x, h)
    ay_w = _second_difference(traj.y, h)
    # rotate world -> body (R(phi)^T)
    ax_b, ay_b = _rotate(-traj.phi, ax_w, ay_w)
    rx, ry = offset.x_imu, offset.y_imu
    ax = ax_b - alpha * ry - omega ** 2 * rx
    ay = ay_b + alpha * rx - omega ** 2 * ry

    rng = np.random.default_rng(seed)
    accel_bias, gyro_bias = noise.draw_biases(rng)
    accel = np.column_stack([ax, ay, np.full(n, gravity)])
    accel = accel + accel_bias + rng.standard_normal((n, 3)) * noise.accel_sigma
    gyro = np.column_stack([np.zeros(n), np.zeros(n), omega])
    gyro = gyro + gyro_bias + rng.standard_normal((n, 3)) * noise.gyro_sigma
    mx, my = _rotate(-traj.phi, np.ones(n), np.zeros(n))
    mag = np.column_stack([mx, my, np.zeros(n)])
    mag = mag + rng.standard_normal((n, 3)) * noise.mag_sigma
    return ImuStream(traj.t.copy(), accel, gyro, mag, accel_bias, gyro_bias)


def translate_slam_to_imu(slam, offset: RigidBodyOffset):
    """Map a centre-of-mass pose (or arrays of x, y, phi) to the sensor position.

    The sensor sits at ``r * exp(j(phi_slam + phi_imu))`` from the reference
    point; real and imaginary parts give the x and y shift.
    """
    if isinstance(slam, Pose2D):
        x, y, phi = slam.x, slam.y, slam.phi
    else:
        x, y, phi = slam
    z = offset.r_imu * np.exp(1j * (np.asarray(phi) + offset.phi_imu))
    xi, yi = x + z.real, y + z.imag
    if np.ndim(xi) == 0:
        return float(xi), float(yi)
    return xi, yi


@dataclass
class Session:
    """One domain's recording: dense IMU stream plus 5 Hz sensor-point groundtruth."""

    domain: DomainIndex
    imu: ImuStream
    gt_t: np.ndarray
    gt_pose: np.ndarray  # (M, 3) x, y, phi of the IMU point
    seed: int
    noise: NoiseModel = field(default_factory=NoiseModel)

    @property
    def n_sequences(self) -> int:
        return len(self.imu) // int(round(SEQUENCE_SECONDS * IMU_RATE))

    def pose_at(self, t) -> np.ndarray:
        """Linear interpolation of groundtruth (heading unwrapped) at times t."""
        t = np.asarray(t, dtype=float)
        x = np.interp(t, self.gt_t, self.gt_pose[:, 0])
        y = np.interp(t, self.gt_t, self.gt_pose[:, 1])
        phi = wrap_angle(np.interp(t, self.gt_t, np.unwrap(self.gt_pose[:, 2])))
        return np.stack([x, y, phi], axis=-1)


@dataclass(frozen=True)
class DatasetConfig:
    seqs_per_domain: int = 100
    n_domains: int = N_DOMAINS
    train_fraction: float = 0.8
    arena: Arena = field(default_factory=Arena)
    noise: NoiseModel = field(default_factory=NoiseModel)
    gravity: float = GRAVITY
    gt_jitter: float = 0.0

    def __post_init__(self):
        if self.seqs_per_domain < 1:
            raise ConfigurationError("seqs_per_domain must be >= 1")
        if not 1 <= self.n_domains <= N_DOMAINS:
            raise ConfigurationError("n_domains must be in 1..8")
        if not 0.0 < self.train_fraction <= 1.0:
            raise ConfigurationError("train_fraction must be in (0, 1]")


@dataclass
class Dataset:
    config: DatasetConfig
    seed: int
    sessions: list
    train_ids: np.ndarray
    test_ids: np.ndarray

    def session(self, domain: int) -> Session:
        return self.sessions[domain]

    def split_ids(self, split: str) -> np.ndarray:
        if split == "train":
            return self.train_ids
        if split == "test":
            return self.test_ids
        if split == "all":
            return np.arange(self.config.seqs_per_domain)
        raise ValueError(f"unknown split {split!r}")


def noise_seed(seed: int, domain: int) -> int:
    return int(seed) * 100 + int(domain) + 1


def split_sequences(n_seq: int, train_fraction: float, seed: int):
    order = np.random.default_rng([int(seed), 7919]).permutation(n_seq)
    n_train = int(round(train_fraction * n_seq))
    return np.sort(order[:n_train]), np.sort(order[n_train:])


def make_session(traj: Trajectory, domain: int, config: DatasetConfig, seed: int) -> Session:
    offset = RigidBodyOffset.for_domain(domain)
    nseed = noise_seed(seed, domain)
    imu = imu_from_trajectory(traj, offset, config.noise, config.gravity, seed=nseed)

    step = int(round(IMU_RATE / GT_RATE))
    seq_len = int(round(SEQUENCE_SECONDS * IMU_RATE))
    idx = set(range(0, len(traj), step))
    # last sample of every sequence so labels never extrapolate
    idx.update(range(seq_len - 1, len(traj), seq_len))
    idx = np.array(sorted(idx))
    xi, yi = translate_slam_to_imu((traj.x[idx], traj.y[idx], traj.phi[idx]), offset)
    gt = np.column_stack([xi, yi, traj.phi[idx]])
    if config.gt_jitter > 0:
        jrng = np.random.default_rng([nseed, 31])
        gt[:, :2] += jrng.standard_normal((len(idx), 2)) * config.gt_jitter
    return Session(DomainIndex(domain), imu, traj.t[idx].copy(), gt, nseed, config.noise)


def build_dataset(config: DatasetConfig | None = None, seed: int = 0) -> Dataset:
    """One session per domain over a shared trajectory, with a shared 80/20 split."""
    config = DatasetConfig() if config is None else config
    duration = config.seqs_per_domain * SEQUENCE_SECONDS
    traj = generate_trajectory(duration, config.arena, seed=seed)
    sessions = [make_session(traj, k, config, seed) for k in range(config.n_domains)]
    train_ids, test_ids = split_sequences(config.seqs_per_domain, config.train_fraction, seed)
    return Dataset(config, seed, sessions, train_ids, test_ids)


def noiseless_config(config: DatasetConfig | None = None) -> DatasetConfig:
    config = DatasetConfig() if config is None else config
    return replace(config, noise=NoiseModel.noiseless())
