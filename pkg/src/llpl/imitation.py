"""Knowledge-tuple extraction from driving logs and imitation learning.

A knowledge tuple pairs the vehicle's motion state with the transition it
realized over one horizon window and the steering that produced it. Training
the steering regressor on realized transitions inverts the plant: imperfect,
non-tracking demonstrations still yield correct labels because the tracking
target is replaced by what the vehicle actually did.

Canonical feature order everywhere: (vx, vy, yaw_rate, dy_body, dpsi).
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .mlp import MlpModel, NonFiniteLoss, Normalizer, sgd_step
from .sim import (SimConfig, VehicleParams, VehicleState, _lateral_coeffs,
                  _rk4_step, lookahead_target, step_dynamics, wrap_angle)

log = logging.getLogger(__name__)

FEATURE_NAMES = ("vx", "vy", "yaw_rate", "dy_body", "dpsi")
N_FEATURES = len(FEATURE_NAMES)


class LogTooShort(ValueError):
    pass


class EmptyDataset(ValueError):
    pass


@dataclass(frozen=True)
class Sample:
    """One knowledge tuple: motion state, realized window transition, steering."""

    vx: float        # m/s
    vy: float        # m/s
    yaw_rate: float  # rad/s
    dy_body: float   # m, window displacement, body frame at window start, left +
    dpsi: float      # rad, wrapped heading change over the window
    steer: float     # rad, command at window start

    @property
    def features(self) -> np.ndarray:
        return np.array([self.vx, self.vy, self.yaw_rate, self.dy_body, self.dpsi])

    @property
    def effort(self) -> float:
        """Knowledge quality score; lower is better."""
        return self.steer * self.steer


class Dataset:
    """Column store of Samples: features (n, 5) and steer labels (n,)."""

    def __init__(self, features, steers, provenance: str = ""):
        self.features = np.asarray(features, dtype=float).reshape(-1, N_FEATURES)
        self.steers = np.asarray(steers, dtype=float).reshape(-1)
        if len(self.features) != len(self.steers):
            raise ValueError("features and steers disagree in length")
        if not (np.isfinite(self.features).all() and np.isfinite(self.steers).all()):
            raise ValueError("non-finite dataset entries")
        self.provenance = provenance

    def __len__(self):
        return len(self.steers)

    @property
    def efforts(self) -> np.ndarray:
        return self.steers ** 2

    def subset(self, idx) -> "Dataset":
        return Dataset(self.features[idx], self.steers[idx], self.provenance)

    def sample_at(self, i: int) -> Sample:
        f = self.features[i]
        return Sample(f[0], f[1], f[2], f[3], f[4], float(self.steers[i]))

    def samples(self):
        return [self.sample_at(i) for i in range(len(self))]

    @classmethod
    def from_samples(cls, samples, provenance: str = "") -> "Dataset":
        feats = np.array([s.features for s in samples]).reshape(-1, N_FEATURES)
        return cls(feats, np.array([s.steer for s in samples]), provenance)

    @classmethod
    def concat(cls, datasets, provenance: str = "") -> "Dataset":
        datasets = [d for d in datasets if len(d)]
        if not datasets:
            return cls(np.empty((0, N_FEATURES)), np.empty(0), provenance)
        return cls(np.vstack([d.features for d in datasets]),
                   np.concatenate([d.steers for d in datasets]), provenance)

    def to_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(list(FEATURE_NAMES) + ["steer"])
            for feat, steer in zip(self.features, self.steers):
                w.writerow([f"{v:.17g}" for v in feat] + [f"{steer:.17g}"])

    @classmethod
    def from_csv(cls, path, provenance: str = "") -> "Dataset":
        rows = np.genfromtxt(path, delimiter=",", skip_header=1, ndmin=2)
        if rows.size == 0:
            return cls(np.empty((0, N_FEATURES)), np.empty(0), provenance)
        return cls(rows[:, :N_FEATURES], rows[:, N_FEATURES], provenance)


@dataclass
class DrivingLog:
    """Time-ordered (state, steer) rows at a uniform control period."""

    dt: float
    states: np.ndarray    # (n, 6): pos_x, pos_y, yaw, vx, vy, yaw_rate
    steers: np.ndarray    # (n,)
    sections: np.ndarray  # (n,) int tags (episode/speed segment ids)

    def __len__(self):
        return len(self.steers)


def extract_samples(log_: DrivingLog, window_steps: int,
                    steer_filter_tol: float = 0.05,
                    filter_nonconstant: bool = True) -> Dataset:
    """Build knowledge tuples from a log by inverting realized transitions.

    For each index k, the transition is the pose of row k+W expressed in the
    body frame of row k; the label is the steering applied at k. Windows where
    the command moves more than steer_filter_tol away from its start value are
    dropped (the transition is only attributable to a near-constant command),
    as are windows that cross section boundaries.
    """
    w = int(window_steps)
    n = len(log_)
    if n <= w:
        raise LogTooShort(f"log of {n} rows cannot host a {w}-step window")
    st = log_.states
    k = np.arange(n - w)
    yaw0 = st[k, 2]
    dx = st[k + w, 0] - st[k, 0]
    dy = st[k + w, 1] - st[k, 1]
    dy_body = -np.sin(yaw0) * dx + np.cos(yaw0) * dy
    dpsi = wrap_angle(st[k + w, 2] - yaw0)
    feats = np.column_stack([st[k, 3], st[k, 4], st[k, 5], dy_body, dpsi])
    steers = log_.steers[k]
    keep = log_.sections[k] == log_.sections[k + w]
    if filter_nonconstant:
        dev = np.zeros(n - w)
        for j in range(1, w):
            dev = np.maximum(dev, np.abs(log_.steers[k + j] - steers))
        keep &= dev <= steer_filter_tol
    return Dataset(feats[keep], steers[keep], provenance="log")


def generate_demonstration(params: VehicleParams, sim_cfg: SimConfig,
                           speeds=(5.0, 10.0, 15.0, 20.0),
                           duration_per_speed: float = 150.0,
                           seed: int = 0,
                           sine_amp_range=(0.02, 0.30),
                           sine_freq_range=(0.05, 0.50),
                           noise_sigma_frac: float = 0.02,
                           hold_windows: int = 2) -> DrivingLog:
    """Synthetic imperfect demonstrator: seeded sinusoid-plus-noise steering.

    At each cruise speed the vehicle drives open loop for duration_per_speed
    seconds under the clipped, rate-limited sum of three seeded sinusoids plus
    band-limited noise (first-order low-pass at 1 Hz). The sinusoid part is
    sampled with a zero-order hold of hold_windows horizon windows so that
    extraction windows see a near-constant command (the premise of the
    inverse-dynamics labels); the noise keeps varying every step, which
    spreads the realized transitions off the constant-command manifold and
    pins down how the learned inverse extends around it. The excitation never
    tracks any path; its only job is to cover the state/steer envelope.
    """
    if not speeds:
        raise ValueError("need at least one speed")
    t_ctrl = sim_cfg.control_period
    n_rows = int(round(duration_per_speed / t_ctrl))
    hold_steps = max(1, hold_windows * sim_cfg.window_steps)
    lp_alpha = math.exp(-2.0 * math.pi * 1.0 * t_ctrl)  # 1 Hz low-pass
    streams = np.random.SeedSequence(seed).spawn(len(speeds))
    states, steers, sections = [], [], []
    for si, (speed, ss) in enumerate(zip(speeds, streams)):
        rng = np.random.default_rng(ss)
        freqs = rng.uniform(*sine_freq_range, size=3)
        amps = rng.uniform(*sine_amp_range, size=3) * params.steer_limit
        phases = rng.uniform(0.0, 2.0 * math.pi, size=3)
        white = rng.normal(0.0, noise_sigma_frac * params.steer_limit, size=n_rows)
        state = VehicleState(0.0, 0.0, 0.0, float(speed), 0.0, 0.0)
        prev = 0.0
        lp = 0.0
        held = 0.0
        dmax = params.steer_rate_limit * t_ctrl
        for i in range(n_rows):
            lp = lp_alpha * lp + (1.0 - lp_alpha) * white[i]
            if i % hold_steps == 0:
                t = i * t_ctrl
                held = float(np.sum(amps * np.sin(2.0 * math.pi * freqs * t + phases)))
            cmd = min(params.steer_limit, max(-params.steer_limit, held + lp))
            cmd = min(prev + dmax, max(prev - dmax, cmd))
            states.append(state.as_array())
            steers.append(cmd)
            sections.append(si)
            for _ in range(sim_cfg.substeps):
                state = step_dynamics(state, cmd, params, sim_cfg.integration_substep)
            prev = cmd
    return DrivingLog(t_ctrl, np.array(states), np.array(steers),
                      np.array(sections, dtype=int))


def simulate_transition(params: VehicleParams, sim_cfg: SimConfig, vx: float,
                        vy0: float, r0: float, steer: float) -> tuple[float, float]:
    """Window transition (dy_body, dpsi) realized under a constant command.

    Drives the plant from pose (0, 0, 0) for one horizon window; the forward
    direction of the inverse-dynamics relation that the policy learns.
    """
    coeffs = _lateral_coeffs(params, vx)
    x = y = yaw = 0.0
    vy, r = vy0, r0
    h = sim_cfg.integration_substep
    n = sim_cfg.substeps * sim_cfg.window_steps
    for _ in range(n):
        x, y, yaw, vy, r = _rk4_step(x, y, yaw, vy, r, vx, steer, coeffs, h)
    return float(y), float(wrap_angle(yaw))


@dataclass
class TrainReport:
    epoch_losses: list = field(default_factory=list)

    @property
    def initial_loss(self) -> float:
        return self.epoch_losses[0]

    @property
    def final_loss(self) -> float:
        return self.epoch_losses[-1]


def train_il(model: MlpModel, data: Dataset, normalizer: Normalizer,
             epochs: int = 150, batch_size: int = 64, lr: float = 1e-2,
             seed: int = 0, input_jitter: float = 0.15) -> TrainReport:
    """Minibatch SGD on the mean-squared steering error.

    input_jitter adds Gaussian noise (in normalized units) to the features of
    every batch. The realized window transitions are collinear given the
    motion state (the plant responds to one scalar command), and the jitter
    acts as a ridge penalty that pins the regressor to the minimal-norm,
    stabilizing inverse instead of an arbitrary split across the collinear
    features. Aborts on a non-finite loss, restoring the parameters from the
    end of the last finished epoch.
    """
    if len(data) == 0:
        raise EmptyDataset("cannot train on an empty dataset")
    rng = np.random.default_rng(seed)
    x = normalizer.transform(data.features)
    y = data.steers[:, None]
    report = TrainReport()
    checkpoint = model.flatten()
    for _ in range(epochs):
        perm = rng.permutation(len(data))
        epoch_loss = 0.0
        try:
            for lo in range(0, len(data), batch_size):
                idx = perm[lo:lo + batch_size]
                xb = x[idx]
                if input_jitter > 0.0:
                    xb = xb + rng.normal(0.0, input_jitter, xb.shape)
                loss, grad = model.backward_mse(xb, y[idx])
                sgd_step(model, grad, lr)
                epoch_loss += loss * len(idx)
        except NonFiniteLoss:
            log.warning("non-finite loss; restoring last epoch checkpoint")
            model.load_flat(checkpoint)
            raise
        checkpoint = model.flatten()
        report.epoch_losses.append(epoch_loss / len(data))
    return report


@dataclass
class Policy:
    """Steering policy: network + shared normalizer + actuator limits."""

    model: MlpModel
    normalizer: Normalizer
    steer_limit: float
    steer_rate_limit: float
    window: float  # s, lookahead horizon

    def features_for(self, state: VehicleState, path, station=None) -> np.ndarray:
        dy_body, dpsi = lookahead_target(state, path, self.window, station)
        return np.array([state.vx, state.vy, state.yaw_rate, dy_body, dpsi])

    def act(self, state: VehicleState, path, station: float | None = None,
            prev_steer: float | None = None, dt: float | None = None) -> float:
        """Steering command toward the lookahead target, clipped and rate-limited."""
        raw = float(self.model.forward(self.normalizer.transform(self.features_for(state, path, station)))[0])
        steer = min(self.steer_limit, max(-self.steer_limit, raw))
        if prev_steer is not None and dt is not None:
            dmax = self.steer_rate_limit * dt
            steer = min(prev_steer + dmax, max(prev_steer - dmax, steer))
        return steer

    def steer_for_features(self, features) -> float:
        raw = float(self.model.forward(self.normalizer.transform(features))[0])
        return min(self.steer_limit, max(-self.steer_limit, raw))

    def clone(self) -> "Policy":
        return Policy(self.model.clone(), self.normalizer, self.steer_limit,
                      self.steer_rate_limit, self.window)

    def save(self, stem):
        self.model.save(f"{stem}.txt")
        self.normalizer.save(f"{stem}.norm")

    @classmethod
    def load(cls, stem, params: VehicleParams, sim_cfg: SimConfig) -> "Policy":
        return cls(MlpModel.load(f"{stem}.txt"), Normalizer.load(f"{stem}.norm"),
                   params.steer_limit, params.steer_rate_limit, sim_cfg.horizon_window)


def act(policy: Policy, state: VehicleState, path, station=None,
        prev_steer=None, dt=None) -> float:
    """Module-level alias of Policy.act."""
    return policy.act(state, path, station, prev_steer, dt)
