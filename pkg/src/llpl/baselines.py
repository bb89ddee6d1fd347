"""Comparison controllers and learners: linearized MPC, actor-critic RL
fine-tuning from demonstrations, offline IL retraining, and plain lifelong
learning without knowledge evaluation.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from . import sim
from .imitation import (Dataset, DrivingLog, N_FEATURES, Policy, extract_samples,
                        train_il)
from .lifelong import (EpisodicMemory, EvalConfig, LoopResult, Schedule,
                       make_policy_controller, run_llpl_loop)
from .mlp import MlpModel, NonFiniteLoss, Normalizer, sgd_step, soft_update

log = logging.getLogger(__name__)


class SpeedTooLow(ValueError):
    pass


# ---------------------------------------------------------------------------
# Linearized MPC
# ---------------------------------------------------------------------------


@dataclass
class MpcConfig:
    horizon_steps: int = 50           # predictive horizon N_p
    period: float = 0.1               # s
    weight_state: tuple = (10.0, 1.0, 10.0, 1.0)  # diag of the state weight
    weight_control: float = 50.0
    steer_bounds: float = 0.5         # rad, symmetric

    def __post_init__(self):
        if any(w <= 0.0 for w in self.weight_state) or self.weight_control <= 0.0:
            raise ValueError("weights must be positive definite")


@dataclass(frozen=True)
class ErrorState:
    """Lateral tracking error state [e_y, e_y_dot, e_psi, e_psi_dot]."""

    e_y: float
    e_y_dot: float
    e_psi: float
    e_psi_dot: float

    def as_array(self) -> np.ndarray:
        return np.array([self.e_y, self.e_y_dot, self.e_psi, self.e_psi_dot])


def linearize_error_dynamics(params: sim.VehicleParams, vx: float,
                             period: float):
    """Discrete error dynamics (A, B) of the single-track model about the path.

    Continuous-time lateral-error state space with curvature treated as a
    zero disturbance, discretized exactly via the matrix exponential of the
    augmented system.
    """
    if vx <= 0.5:
        raise SpeedTooLow(f"error model singular near vx=0 (got {vx})")
    cf, cr = params.cornering_stiffness_front, params.cornering_stiffness_rear
    lf, lr = params.dist_front_axle, params.dist_rear_axle
    m, iz = params.mass, params.yaw_inertia
    a = np.array([
        [0.0, 1.0, 0.0, 0.0],
        [0.0, -(cf + cr) / (m * vx), (cf + cr) / m, (lr * cr - lf * cf) / (m * vx)],
        [0.0, 0.0, 0.0, 1.0],
        [0.0, (lr * cr - lf * cf) / (iz * vx), (lf * cf - lr * cr) / iz,
         -(lf * lf * cf + lr * lr * cr) / (iz * vx)],
    ])
    b = np.array([[0.0], [cf / m], [0.0], [lf * cf / iz]])
    aug = np.zeros((5, 5))
    aug[:4, :4] = a
    aug[:4, 4:] = b
    m_d = expm(aug * period)
    return m_d[:4, :4], m_d[:4, 4:]


def _condensed_gain(a: np.ndarray, b: np.ndarray, cfg: MpcConfig):
    """Stacked prediction matrices (F, G) and the quadratic-cost blocks."""
    n = cfg.horizon_steps
    f = np.empty((4 * n, 4))
    g = np.zeros((4 * n, n))
    a_pow = np.eye(4)
    pows = [a_pow]
    for i in range(n):
        a_pow = a_pow @ a
        pows.append(a_pow)
        f[4 * i:4 * i + 4] = a_pow
    for i in range(n):
        for j in range(i + 1):
            g[4 * i:4 * i + 4, j:j + 1] = pows[i - j] @ b
    return f, g


def mpc_control(xi: ErrorState, cfg: MpcConfig, a: np.ndarray, b: np.ndarray) -> float:
    """First control of the finite-horizon quadratic tracking problem.

    Solved as condensed unconstrained least squares (stage cost on states
    1..N_p plus control cost), then clipped to the steering bounds.
    """
    f, g = _condensed_gain(a, b, cfg)
    q = np.tile(np.asarray(cfg.weight_state, dtype=float), cfg.horizon_steps)
    h = g.T @ (q[:, None] * g) + cfg.weight_control * np.eye(cfg.horizon_steps)
    rhs = -g.T @ (q * (f @ xi.as_array()))
    try:
        u = np.linalg.solve(h, rhs)
    except np.linalg.LinAlgError:
        log.warning("ill-conditioned MPC normal equations; regularizing")
        u = np.linalg.solve(h + 1e-9 * np.eye(len(h)), rhs)
    return float(np.clip(u[0], -cfg.steer_bounds, cfg.steer_bounds))


class MpcController:
    """Closed-loop MPC with per-speed cached gains and curvature feedforward.

    The unconstrained condensed solution is linear in the error state, so the
    first control reduces to a per-speed gain row; the feedforward steer
    L*kappa + K_us*vx^2*kappa makes the zero-error state an equilibrium on
    constant-curvature references.
    """

    def __init__(self, params: sim.VehicleParams, cfg: MpcConfig, path: sim.ReferencePath):
        self.params = params
        self.cfg = cfg
        self.path = path
        self._gains: dict[float, np.ndarray] = {}

    def _gain(self, vx: float) -> np.ndarray:
        if vx not in self._gains:
            a, b = linearize_error_dynamics(self.params, vx, self.cfg.period)
            f, g = _condensed_gain(a, b, self.cfg)
            q = np.tile(np.asarray(self.cfg.weight_state, dtype=float), self.cfg.horizon_steps)
            h = g.T @ (q[:, None] * g) + self.cfg.weight_control * np.eye(self.cfg.horizon_steps)
            k_all = np.linalg.solve(h, g.T @ (q[:, None] * f))
            self._gains[vx] = -k_all[0]
        return self._gains[vx]

    def __call__(self, state: sim.VehicleState, err: sim.TrackingError) -> float:
        kappa = float(self.path.curvature(err.station))
        xi = np.array([err.lateral,
                       state.vy + state.vx * err.heading,
                       err.heading,
                       state.yaw_rate - state.vx * kappa])
        p = self.params
        ff = (p.wheelbase + p.understeer_gradient * state.vx ** 2) * kappa
        steer = float(self._gain(state.vx) @ xi) + ff
        return float(np.clip(steer, -self.cfg.steer_bounds, self.cfg.steer_bounds))


# ---------------------------------------------------------------------------
# Offline IL retraining and plain lifelong learning
# ---------------------------------------------------------------------------


@dataclass
class RetrainResult:
    episodes: list = field(default_factory=list)
    wall_times: list = field(default_factory=list)   # s per retraining
    train_sizes: list = field(default_factory=list)  # dataset rows per retraining


def run_il_retrain_baseline(policy: Policy, env: sim.Environment, epochs: int,
                            demo_data: Dataset, il_epochs: int, batch_size: int,
                            lr: float, init_seed: int, seed: int = 0) -> RetrainResult:
    """Execute-then-retrain loop: after each pass the policy is retrained from
    the initial seed parameters on demonstration plus all execution data."""
    result = RetrainResult()
    collected: list[Dataset] = []
    w = env.sim_cfg.window_steps
    current = policy
    for e in range(epochs):
        episode, _, _, _ = sim.drive(env, make_policy_controller(current, env))
        result.episodes.append(episode)
        if episode.aborted:
            log.warning("retrain epoch %d aborted (%s); no retraining on its data",
                        e, episode.abort_reason)
            result.wall_times.append(0.0)
            result.train_sizes.append(0)
            continue
        log_ = DrivingLog(episode.dt, episode.states, episode.steers, episode.sections)
        collected.append(extract_samples(log_, w))
        union = Dataset.concat([demo_data] + collected)
        t0 = time.perf_counter()
        model = MlpModel(current.model.layer_sizes, current.model.activation, seed=init_seed)
        train_il(model, union, current.normalizer, epochs=il_epochs,
                 batch_size=batch_size, lr=lr, seed=seed + e)
        result.wall_times.append(time.perf_counter() - t0)
        result.train_sizes.append(len(union))
        current = Policy(model, current.normalizer, current.steer_limit,
                         current.steer_rate_limit, current.window)
    return result


def run_lll_baseline(policy: Policy, memory: EpisodicMemory, env: sim.Environment,
                     schedule: Schedule, cfg: EvalConfig, seed: int = 0,
                     sample_ratio: float = 0.10) -> LoopResult:
    """Plain lifelong learning: no knowledge evaluation, memory grows by a
    uniform random sample of each execution's data."""
    return run_llpl_loop(policy, memory, env, schedule, cfg, seed,
                         knowledge_eval=False, lll_sample_ratio=sample_ratio)


def random_memory_from(data: Dataset, ratio: float, eta_m: float,
                       normalizer: Normalizer, seed: int) -> EpisodicMemory:
    """Uniform random subset of a dataset as an (unevaluated) episodic memory."""
    rng = np.random.default_rng(seed)
    n = int(np.ceil(ratio * len(data)))
    idx = np.sort(rng.choice(len(data), size=n, replace=False))
    return EpisodicMemory(data.features[idx], data.steers[idx], eta_m, normalizer)


# ---------------------------------------------------------------------------
# Actor-critic RL fine-tuning from demonstrations
# ---------------------------------------------------------------------------


@dataclass
class RlConfig:
    gamma: float = 0.99
    lambda_pg: float = 0.05        # policy-gradient weight after warm-up
    tau_target: float = 0.005      # target-network soft update
    noise_frac: float = 0.10       # exploration noise, fraction of steer limit
    warmup_sections: int = 2       # triggers trained with behavior cloning only
    critic_layers: tuple = (128, 128, 128)
    lr_actor: float = 1e-3
    lr_critic: float = 1e-3
    batch_size: int = 64
    updates_per_trigger: int = 500

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.lambda_pg < 0.0:
            raise ValueError("lambda_pg must be non-negative")


class Transitions:
    """Flat replay store of (s, steer, reward, s_next) rows."""

    def __init__(self):
        self.s = np.empty((0, N_FEATURES))
        self.a = np.empty(0)
        self.r = np.empty(0)
        self.s2 = np.empty((0, N_FEATURES))

    def __len__(self):
        return len(self.a)

    def extend(self, s, a, r, s2):
        self.s = np.vstack([self.s, s])
        self.a = np.concatenate([self.a, a])
        self.r = np.concatenate([self.r, r])
        self.s2 = np.vstack([self.s2, s2])

    def sample(self, rng, n):
        idx = rng.integers(0, len(self), size=min(n, len(self)))
        return self.s[idx], self.a[idx], self.r[idx], self.s2[idx]


def _critic_input(norm: Normalizer, steer_limit: float, s, a):
    return np.column_stack([norm.transform(s), np.asarray(a).reshape(-1) / steer_limit])


def rl_critic_update(critic: MlpModel, critic_target: MlpModel,
                     actor_target: MlpModel, norm: Normalizer, steer_limit: float,
                     batch, gamma: float, lr: float, tau: float) -> float:
    """One temporal-difference step on the squared Bellman residual."""
    s, a, r, s2 = batch
    a2 = np.clip(actor_target.forward(norm.transform(s2)).reshape(-1) * 1.0,
                 -steer_limit, steer_limit)
    q2 = critic_target.forward(_critic_input(norm, steer_limit, s2, a2)).reshape(-1)
    y = r + gamma * q2
    try:
        loss, grad = critic.backward_mse(_critic_input(norm, steer_limit, s, a), y[:, None])
    except NonFiniteLoss:
        log.warning("non-finite critic loss; step skipped")
        return float("nan")
    sgd_step(critic, grad, lr)
    soft_update(critic_target, critic, tau)
    return loss


def rl_actor_update(actor: MlpModel, actor_target: MlpModel, critic: MlpModel,
                    norm: Normalizer, steer_limit: float, batch,
                    lambda_pg: float, lr: float, tau: float) -> tuple[float, float, float]:
    """One step on the combined behavior-cloning + policy-gradient loss.

    L = mean||pi(s) - steer||^2 - lambda * mean Q(s, pi(s)); the value term
    backpropagates through the frozen critic's action input.
    """
    s, a = batch
    sn = norm.transform(s)
    n = len(s)
    out = actor.forward(sn).reshape(-1, 1)
    res = out - np.asarray(a).reshape(-1, 1)
    l_bc = float((res * res).sum() / n)
    d_out = 2.0 * res / n
    l_pg = 0.0
    if lambda_pg > 0.0:
        u = np.column_stack([sn, out.reshape(-1) / steer_limit])
        q = critic.forward(u)
        l_pg = float(-q.sum() / n)
        _, d_in = critic.backward(u, np.full((n, 1), -1.0 / n))
        d_out = d_out + lambda_pg * d_in[:, -1:] / steer_limit
    loss = l_bc + lambda_pg * l_pg
    if not np.isfinite(loss):
        log.warning("non-finite actor loss; step skipped")
        return float("nan"), l_bc, l_pg
    grad, _ = actor.backward(sn, d_out)
    sgd_step(actor, grad, lr)
    soft_update(actor_target, actor, tau)
    return loss, l_bc, l_pg


@dataclass
class RlResult:
    episodes: list = field(default_factory=list)
    critic_losses: list = field(default_factory=list)  # mean per trigger
    actor_losses: list = field(default_factory=list)
    saw_nan: bool = False


def _episode_transitions(episode: sim.Episode, env: sim.Environment):
    """Rebuild (s, a, r, s') rows from a logged episode.

    State features are the execution-time inputs (lookahead target at each
    step); the reward is -e_lat^2 - e_head^2 - steer^2.
    """
    rows = []
    window = env.sim_cfg.horizon_window
    for i in range(len(episode)):
        st = episode.states[i]
        state = sim.VehicleState(*st)
        try:
            dy, dpsi = sim.lookahead_target(state, env.path, window, episode.stations[i])
        except sim.PathExhausted:
            break
        rows.append([st[3], st[4], st[5], dy, dpsi])
    feats = np.array(rows).reshape(-1, N_FEATURES)
    n = len(feats) - 1
    if n < 1:
        return None
    r = -(episode.e_lat[:n] ** 2) - (episode.e_head[:n] ** 2) - (episode.steers[:n] ** 2)
    return feats[:n], episode.steers[:n], r, feats[1:n + 1]


def run_rl_baseline(policy_init: Policy, env: sim.Environment, rl_cfg: RlConfig,
                    demo_data: Dataset, seed: int = 0) -> RlResult:
    """Demonstration-initialized actor-critic fine-tuning over the section protocol.

    The actor starts as a copy of the IL policy and explores with Gaussian
    steering noise; after each section both networks train on replayed
    transitions (critic) and demonstration-plus-execution pairs (actor, with
    behavior cloning only during the warm-up sections).
    """
    rng = np.random.default_rng(seed)
    noise_rng = np.random.default_rng(seed + 13)
    norm = policy_init.normalizer
    lim = policy_init.steer_limit
    actor = policy_init.model.clone()
    actor_target = actor.clone()
    critic = MlpModel((N_FEATURES + 1,) + tuple(rl_cfg.critic_layers) + (1,),
                      activation="tanh", seed=seed + 1)
    critic_target = critic.clone()
    replay = Transitions()
    bc_feats = [demo_data.features]
    bc_steers = [demo_data.steers]
    result = RlResult()
    policy = Policy(actor, norm, lim, policy_init.steer_rate_limit, policy_init.window)
    sigma = rl_cfg.noise_frac * lim

    def controller_factory(prev):
        box = {"prev": prev}

        def controller(state, err):
            cmd = policy.act(state, env.path, err.station, box["prev"],
                             env.sim_cfg.control_period)
            cmd = float(np.clip(cmd + noise_rng.normal(0.0, sigma), -lim, lim))
            box["prev"] = cmd
            return cmd

        return controller

    bounds = env.path.section_boundaries
    state = sim.initial_state(env)
    station = None
    prev_steer = 0.0
    for k, bound in enumerate(bounds):
        episode, state, station, prev_steer = sim.drive(
            env, controller_factory(None if station is None else prev_steer),
            start_state=state, start_station=station, stop_station=float(bound),
            start_prev_steer=prev_steer)
        result.episodes.append(episode)
        if episode.aborted:
            log.warning("RL section %d aborted (%s); run stops", k, episode.abort_reason)
            break
        trans = _episode_transitions(episode, env)
        if trans is not None:
            replay.extend(*trans)
            bc_feats.append(trans[0])
            bc_steers.append(trans[1])
        if k >= len(bounds) - 1 or len(replay) == 0:
            continue
        lam = 0.0 if k < rl_cfg.warmup_sections else rl_cfg.lambda_pg
        bc_x = np.vstack(bc_feats)
        bc_y = np.concatenate(bc_steers)
        c_losses, a_losses = [], []
        for _ in range(rl_cfg.updates_per_trigger):
            c_loss = rl_critic_update(critic, critic_target, actor_target, norm, lim,
                                      replay.sample(rng, rl_cfg.batch_size),
                                      rl_cfg.gamma, rl_cfg.lr_critic, rl_cfg.tau_target)
            idx = rng.integers(0, len(bc_y), size=min(rl_cfg.batch_size, len(bc_y)))
            a_loss, _, _ = rl_actor_update(actor, actor_target, critic, norm, lim,
                                           (bc_x[idx], bc_y[idx]), lam,
                                           rl_cfg.lr_actor, rl_cfg.tau_target)
            if not (np.isfinite(c_loss) and np.isfinite(a_loss)):
                result.saw_nan = True
            c_losses.append(c_loss)
            a_losses.append(a_loss)
        result.critic_losses.append(float(np.nanmean(c_losses)))
        result.actor_losses.append(float(np.nanmean(a_losses)))
    return result
