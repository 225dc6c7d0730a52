"""
Deep inertial tracker: CNN -> stacked LSTM -> FC encoder with a feedback
regressor, written directly in numpy with hand-derived reverse-mode gradients.

Shapes
------
inputs     (B, S, W, C)   B sequences of S windows of W samples, C channels
latents    (B, S, D)
estimates  (B, S, 2)      Cartesian (dx, dy) or Polar (dd, dphi)
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .sim import IMU_RATE, SEQUENCE_SECONDS, Dataset, wrap_angle

CARTESIAN = "cartesian"
POLAR = "polar"
CHECKPOINT_VERSION = 1


class TrainingError(RuntimeError):
    """Non-finite loss or gradient; ``diagnostics`` holds the offending terms."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class TrackerConfig:
    window: int = 35
    n_windows: int = 40
    use_mag: bool = True
    conv_channels: tuple = (16, 32)
    kernel: int = 5
    stride: int = 2
    hidden: int = 64
    lstm_layers: int = 2
    latent: int = 32
    reg_hidden: int = 32
    head: str = CARTESIAN
    leak: float = 0.01

    def __post_init__(self):
        if self.head not in (CARTESIAN, POLAR):
            raise ValueError(f"unknown head {self.head!r}")
        object.__setattr__(self, "conv_channels", tuple(self.conv_channels))
        if self.conv_lengths[-1] < 1:
            raise ValueError("window too short for the conv stack")

    @property
    def channels(self) -> int:
        return 9 if self.use_mag else 6

    @property
    def conv_lengths(self):
        lengths, n = [], self.window
        for _ in self.conv_channels:
            n = (n - self.kernel) // self.stride + 1
            lengths.append(n)
        return lengths

    @property
    def flat_features(self) -> int:
        return self.conv_lengths[-1] * self.conv_channels[-1]


@dataclass
class TrackerParams:
    config: TrackerConfig
    weights: dict
    input_mean: np.ndarray = None
    input_std: np.ndarray = None

    def __post_init__(self):
        c = self.config.channels
        if self.input_mean is None:
            self.input_mean = np.zeros(c)
        if self.input_std is None:
            self.input_std = np.ones(c)

    @property
    def head(self) -> str:
        return self.config.head

    def copy(self) -> "TrackerParams":
        return TrackerParams(self.config, {k: v.copy() for k, v in self.weights.items()},
                             self.input_mean.copy(), self.input_std.copy())

    def n_params(self) -> int:
        return sum(v.size for v in self.weights.values())

    def to_dict(self) -> dict:
        return {
            "version": CHECKPOINT_VERSION,
            "head": self.head,
            "config": asdict(self.config),
            "input_mean": self.input_mean.tolist(),
            "input_std": self.input_std.tolist(),
            "weights": {k: {"shape": list(v.shape), "data": v.ravel().tolist()}
                        for k, v in self.weights.items()},
        }

    @classmethod
    def from_dict(cls, d) -> "TrackerParams":
        if d.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {d.get('version')!r}")
        cfg = dict(d["config"])
        cfg["conv_channels"] = tuple(cfg["conv_channels"])
        config = TrackerConfig(**cfg)
        weights = {k: np.array(v["data"], dtype=float).reshape(v["shape"])
                   for k, v in d["weights"].items()}
        return cls(config, weights, np.array(d["input_mean"], dtype=float),
                   np.array(d["input_std"], dtype=float))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "TrackerParams":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def init_params(config: TrackerConfig | None = None, seed=0) -> TrackerParams:
    config = TrackerConfig() if config is None else config
    rng = np.random.default_rng(seed)

    def dense(fan_in, fan_out, scale=1.0):
        return rng.standard_normal((fan_in, fan_out)) * scale / np.sqrt(fan_in)

    w = {}
    c_in = config.channels
    for i, c_out in enumerate(config.conv_channels, 1):
        w[f"conv{i}_w"] = dense(config.kernel * c_in, c_out, np.sqrt(2.0))
        w[f"conv{i}_b"] = np.zeros(c_out)
        c_in = c_out
    n_in, h = config.flat_features, config.hidden
    for layer in range(1, config.lstm_layers + 1):
        w[f"lstm{layer}_wx"] = dense(n_in, 4 * h)
        w[f"lstm{layer}_wh"] = dense(h, 4 * h)
        b = np.zeros(4 * h)
        b[h:2 * h] = 1.0  # forget gate
        w[f"lstm{layer}_b"] = b
        n_in = h
    w["latent_w"] = dense(h, config.latent)
    w["latent_b"] = np.zeros(config.latent)
    w["reg1_w"] = dense(config.latent + 2, config.reg_hidden)
    w["reg1_b"] = np.zeros(config.reg_hidden)
    w["reg2_w"] = dense(config.reg_hidden, 2, 0.1)
    w["reg2_b"] = np.zeros(2)
    return TrackerParams(config, w)


def fit_normalization(params: TrackerParams, inputs) -> None:
    """Set per-channel input standardisation from training windows (in place)."""
    x = _select_channels(params.config, np.asarray(inputs, dtype=float))
    flat = x.reshape(-1, x.shape[-1])
    params.input_mean = flat.mean(0)
    std = flat.std(0)
    params.input_std = np.where(std > 1e-8, std, 1.0)


def _select_channels(config, x):
    return x if config.use_mag else x[..., :6]


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _window_index(length, kernel, stride):
    n_out = (length - kernel) // stride + 1
    return np.arange(n_out)[:, None] * stride + np.arange(kernel)[None, :]


# --------------------------------------------------------------------------
# encoder

def _encode_forward(params: TrackerParams, inputs):
    cfg = params.config
    x = _select_channels(cfg, np.asarray(inputs, dtype=float))
    if x.ndim != 4 or x.shape[2] != cfg.window or x.shape[3] != cfg.channels:
        raise ValueError(f"input shape {x.shape} does not match (B, S, {cfg.window}, {cfg.channels})")
    B, S = x.shape[:2]
    w = params.weights
    a = ((x - params.input_mean) / params.input_std).reshape(B * S, cfg.window, -1)

    conv = []
    for i, _ in enumerate(cfg.conv_channels, 1):
        idx = _window_index(a.shape[1], cfg.kernel, cfg.stride)
        cols = a[:, idx, :]  # (N, L, K, Cin)
        N, L = cols.shape[:2]
        z = cols.reshape(N * L, -1) @ w[f"conv{i}_w"] + w[f"conv{i}_b"]
        z = z.reshape(N, L, -1)
        a_next = np.where(z > 0, z, cfg.leak * z)
        conv.append((cols, z, a.shape))
        a = a_next
    seq = a.reshape(B, S, -1)

    lstm = []
    H = cfg.hidden
    for layer in range(1, cfg.lstm_layers + 1):
        wx, wh, b = w[f"lstm{layer}_wx"], w[f"lstm{layer}_wh"], w[f"lstm{layer}_b"]
        xp = seq @ wx + b
        h = np.zeros((B, H))
        c = np.zeros((B, H))
        hs = np.empty((B, S, H))
        steps = []
        for s in range(S):
            gates = xp[:, s] + h @ wh
            gi = _sigmoid(gates[:, :H])
            gf = _sigmoid(gates[:, H:2 * H])
            gg = np.tanh(gates[:, 2 * H:3 * H])
            go = _sigmoid(gates[:, 3 * H:])
            c_prev, h_prev = c, h
            c = gf * c_prev + gi * gg
            tc = np.tanh(c)
            h = go * tc
            hs[:, s] = h
            steps.append((gi, gf, gg, go, c_prev, h_prev, tc))
        lstm.append((seq, steps))
        seq = hs

    latents = seq @ w["latent_w"] + w["latent_b"]
    cache = {"conv": conv, "lstm": lstm, "top": seq, "shape": (B, S)}
    return latents, cache


def encode(params: TrackerParams, inputs) -> np.ndarray:
    """Latent vectors (B, S, D); strictly causal along the window axis."""
    return _encode_forward(params, inputs)[0]


# --------------------------------------------------------------------------
# regressor

def _regress_forward(params: TrackerParams, latents):
    w = params.weights
    polar = params.head == POLAR
    B, S, _ = latents.shape
    prev = np.zeros((B, 2))
    est = np.empty((B, S, 2))
    steps = []
    for s in range(S):
        u = np.concatenate([latents[:, s], prev], axis=1)
        q = np.tanh(u @ w["reg1_w"] + w["reg1_b"])
        o = q @ w["reg2_w"] + w["reg2_b"]
        if polar:
            t = np.tanh(o[:, 1])
            y = np.column_stack([o[:, 0], np.pi * t])
        else:
            t = None
            y = o
        est[:, s] = y
        steps.append((u, q, t))
        prev = y
    return est, steps


def regress(params: TrackerParams, latents) -> np.ndarray:
    """Per-window estimates; each window also sees the previous window's estimate
    (zeros for window 0). Polar heads squash the heading change to [-pi, pi]."""
    return _regress_forward(params, np.asarray(latents, dtype=float))[0]


def regress_step(params: TrackerParams, latent, prev_estimate) -> np.ndarray:
    """Single-window regressor map for a given previous estimate."""
    latent = np.atleast_2d(np.asarray(latent, dtype=float))
    prev = np.atleast_2d(np.asarray(prev_estimate, dtype=float))
    w = params.weights
    q = np.tanh(np.concatenate([latent, prev], axis=1) @ w["reg1_w"] + w["reg1_b"])
    o = q @ w["reg2_w"] + w["reg2_b"]
    if params.head == POLAR:
        o = np.column_stack([o[:, 0], np.pi * np.tanh(o[:, 1])])
    return o


def forward(params: TrackerParams, inputs):
    """Returns (latents, estimates, cache); the cache feeds :func:`backward`."""
    latents, enc = _encode_forward(params, inputs)
    est, reg = _regress_forward(params, latents)
    return latents, est, {"enc": enc, "reg": reg}


def predict(params: TrackerParams, inputs, batch_size=64):
    """Forward in chunks without keeping caches."""
    inputs = np.asarray(inputs)
    lat, est = [], []
    for i in range(0, len(inputs), batch_size):
        l, _ = _encode_forward(params, inputs[i:i + batch_size])
        lat.append(l)
        est.append(regress(params, l))
    return np.concatenate(lat), np.concatenate(est)


# --------------------------------------------------------------------------
# reverse mode

def backward(params: TrackerParams, cache, d_latents=None, d_estimates=None) -> dict:
    """Gradients of a scalar loss w.r.t. every weight, given its gradients with
    respect to the latents and estimates produced by :func:`forward`."""
    cfg = params.config
    w = params.weights
    B, S = cache["enc"]["shape"]
    grads = {k: np.zeros_like(v) for k, v in w.items()}
    d_lat = np.zeros((B, S, cfg.latent)) if d_latents is None else np.array(d_latents, dtype=float)
    d_est = np.zeros((B, S, 2)) if d_estimates is None else np.asarray(d_estimates, dtype=float)

    # regressor, unrolled over the estimate feedback
    polar = params.head == POLAR
    d_prev = np.zeros((B, 2))
    D = cfg.latent
    for s in range(S - 1, -1, -1):
        u, q, t = cache["reg"][s]
        dy = d_est[:, s] + d_prev
        if polar:
            do = np.column_stack([dy[:, 0], dy[:, 1] * np.pi * (1.0 - t * t)])
        else:
            do = dy
        grads["reg2_w"] += q.T @ do
        grads["reg2_b"] += do.sum(0)
        dz = (do @ w["reg2_w"].T) * (1.0 - q * q)
        grads["reg1_w"] += u.T @ dz
        grads["reg1_b"] += dz.sum(0)
        du = dz @ w["reg1_w"].T
        d_lat[:, s] += du[:, :D]
        d_prev = du[:, D:]

    enc = cache["enc"]
    top = enc["top"]
    grads["latent_w"] += top.reshape(B * S, -1).T @ d_lat.reshape(B * S, -1)
    grads["latent_b"] += d_lat.sum((0, 1))
    d_seq = d_lat @ w["latent_w"].T

    H = cfg.hidden
    for layer in range(cfg.lstm_layers, 0, -1):
        x_in, steps = enc["lstm"][layer - 1]
        wh = w[f"lstm{layer}_wh"]
        dA = np.empty((B, S, 4 * H))
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        dwh = grads[f"lstm{layer}_wh"]
        for s in range(S - 1, -1, -1):
            gi, gf, gg, go, c_prev, h_prev, tc = steps[s]
            dh = d_seq[:, s] + dh_next
            dgo = dh * tc
            dc = dh * go * (1.0 - tc * tc) + dc_next
            da = dA[:, s]
            da[:, :H] = dc * gg * gi * (1.0 - gi)
            da[:, H:2 * H] = dc * c_prev * gf * (1.0 - gf)
            da[:, 2 * H:3 * H] = dc * gi * (1.0 - gg * gg)
            da[:, 3 * H:] = dgo * go * (1.0 - go)
            dc_next = dc * gf
            dwh += h_prev.T @ da
            dh_next = da @ wh.T
        flat_x = x_in.reshape(B * S, -1)
        flat_dA = dA.reshape(B * S, -1)
        grads[f"lstm{layer}_wx"] += flat_x.T @ flat_dA
        grads[f"lstm{layer}_b"] += flat_dA.sum(0)
        d_seq = dA @ w[f"lstm{layer}_wx"].T

    n_conv = len(cfg.conv_channels)
    d_a = d_seq.reshape(B * S, cfg.conv_lengths[-1], cfg.conv_channels[-1])
    for i in range(n_conv, 0, -1):
        cols, z, in_shape = enc["conv"][i - 1]
        dz = d_a * np.where(z > 0, 1.0, cfg.leak)
        N, L = z.shape[:2]
        dz2 = dz.reshape(N * L, -1)
        grads[f"conv{i}_w"] += cols.reshape(N * L, -1).T @ dz2
        grads[f"conv{i}_b"] += dz2.sum(0)
        if i == 1:
            break
        dcols = (dz2 @ w[f"conv{i}_w"].T).reshape(N, L, cfg.kernel, -1)
        d_in = np.zeros(in_shape)
        span = cfg.stride * (L - 1) + 1
        for k in range(cfg.kernel):
            d_in[:, k:k + span:cfg.stride, :] += dcols[:, :, k, :]
        d_a = d_in
    return grads


def loss_mse(y, y_hat) -> float:
    """(1/N) sum ||y_n - yhat_n||^2 over the leading (window) axes."""
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y.shape != y_hat.shape:
        raise ValueError(f"shape mismatch {y.shape} vs {y_hat.shape}")
    if y.ndim == 1:
        y, y_hat = y[None], y_hat[None]
    n = int(np.prod(y.shape[:-1]))
    if n == 0:
        raise ValueError("loss_mse needs at least one sample")
    return float(np.sum((y - y_hat) ** 2) / n)


def check_finite(loss, grads=None, **terms):
    bad = not np.isfinite(loss)
    if grads is not None and not bad:
        bad = not all(np.all(np.isfinite(g)) for g in grads.values())
    if bad:
        diag = {"loss": float(loss), **{k: float(v) for k, v in terms.items()}}
        if grads is not None:
            diag["nonfinite_grads"] = [k for k, g in grads.items() if not np.all(np.isfinite(g))]
        raise TrainingError("non-finite loss or gradient", diag)


def supervised_loss_and_grad(params: TrackerParams, inputs, labels, scale=1.0):
    """MSE over all windows and its gradient (optionally scaled)."""
    _, est, cache = forward(params, inputs)
    n = int(np.prod(est.shape[:2]))
    loss = loss_mse(labels, est)
    d_est = scale * 2.0 * (est - labels) / n
    grads = backward(params, cache, d_estimates=d_est)
    check_finite(loss, grads)
    return scale * loss, grads


# --------------------------------------------------------------------------
# data windows and dead reckoning from estimates

@dataclass
class WindowBatch:
    inputs: np.ndarray      # (B, S, W, 9)
    labels: np.ndarray      # (B, S, 2)
    boundaries: np.ndarray  # (B, S + 1, 3) groundtruth pose at window edges
    domain_tags: np.ndarray
    sequence_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def __len__(self):
        return len(self.inputs)

    def subset(self, idx) -> "WindowBatch":
        return WindowBatch(self.inputs[idx], self.labels[idx], self.boundaries[idx],
                           self.domain_tags[idx], self.sequence_ids[idx])

    @staticmethod
    def concat(batches) -> "WindowBatch":
        return WindowBatch(*(np.concatenate([getattr(b, f) for b in batches])
                             for f in ("inputs", "labels", "boundaries", "domain_tags", "sequence_ids")))


def labels_from_boundaries(boundaries, head=CARTESIAN) -> np.ndarray:
    """World-frame (dx, dy) or (distance, heading change) per window."""
    d = np.diff(boundaries, axis=-2)
    if head == CARTESIAN:
        return d[..., :2].copy()
    dist = np.hypot(d[..., 0], d[..., 1])
    return np.stack([dist, wrap_angle(d[..., 2])], axis=-1)


def window_batch(dataset: Dataset, domain: int, split="train", head=CARTESIAN,
                 window=35, n_windows=40) -> WindowBatch:
    session = dataset.session(domain)
    seq_len = int(round(SEQUENCE_SECONDS * IMU_RATE))
    if window * n_windows != seq_len:
        raise ValueError(f"{n_windows} windows of {window} do not tile {seq_len} samples")
    ids = dataset.split_ids(split)
    chans = session.imu.channels
    t = session.imu.t
    inputs = np.stack([chans[i * seq_len:(i + 1) * seq_len] for i in ids])
    inputs = inputs.reshape(len(ids), n_windows, window, chans.shape[1])
    edge = np.arange(n_windows + 1) * window
    edge[-1] = seq_len - 1
    times = np.stack([t[i * seq_len + edge] for i in ids])
    bounds = session.pose_at(times)
    labels = labels_from_boundaries(bounds, head)
    return WindowBatch(inputs, labels, bounds, np.full(len(ids), domain), np.asarray(ids))


def integrate_estimates(estimates, head=CARTESIAN, initial_pose=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Chain per-window estimates into poses (S + 1, 3); heading is NaN for Cartesian."""
    est = np.asarray(estimates, dtype=float)
    x0, y0, th0 = (float(v) for v in initial_pose)
    n = len(est)
    out = np.empty((n + 1, 3))
    out[0] = (x0, y0, th0 if head == POLAR else np.nan)
    if head == CARTESIAN:
        out[1:, 0] = x0 + np.cumsum(est[:, 0])
        out[1:, 1] = y0 + np.cumsum(est[:, 1])
        out[1:, 2] = np.nan
        return out
    if head != POLAR:
        raise ValueError(f"unknown head {head!r}")
    x, y, th = x0, y0, th0
    for k, (dd, dphi) in enumerate(est, 1):
        th = float(wrap_angle(th + dphi))
        x += dd * np.cos(th)
        y += dd * np.sin(th)
        out[k] = (x, y, th)
    return out


def with_head(config: TrackerConfig, head: str) -> TrackerConfig:
    return replace(config, head=head)
