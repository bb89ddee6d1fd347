"""Lifelong policy learning: gradient projection, knowledge evaluation, memory.

The online update never trains unconstrained: every SGD step projects the
incremental-data gradient so it cannot point against the gradient of a batch
sampled from episodic memory, which is what protects previously learned
behavior. Incoming knowledge is screened before training (redundant or
higher-effort samples are dropped) and the memory keeps exactly one
lowest-effort representative per feature neighborhood.

Similarity is a squared Euclidean distance over the 5 normalized input
features (steering excluded); larger means more dissimilar.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import sim
from .imitation import (Dataset, EmptyDataset, FEATURE_NAMES, N_FEATURES,
                        Sample, extract_samples)
from .mlp import MlpModel, NonFiniteLoss, Normalizer, sgd_step

log = logging.getLogger(__name__)


class EmptyMemory(ValueError):
    pass


@dataclass
class EvalConfig:
    """Knowledge-evaluation and update hyperparameters."""

    eta_d: float = 0.05        # screening threshold (squared normalized distance)
    eta_m: float = 0.05        # memory dedup threshold
    ref_batch_size: int = 256  # memory batch for the reference gradient
    update_epochs: int = 200   # epochs over the screened incremental data
    lr: float = 1e-3
    batch_size: int = 64
    input_jitter: float = 0.15  # feature noise on the data gradient (ridge-like)
    min_update_samples: int = 16  # skip triggers with fewer accepted samples

    def __post_init__(self):
        if self.eta_d <= 0.0 or self.eta_m <= 0.0:
            raise ValueError("similarity thresholds must be positive")


def similarity(a, b, normalizer: Normalizer) -> float:
    """Squared Euclidean distance between two samples' normalized features."""
    fa = a.features if isinstance(a, Sample) else np.asarray(a, dtype=float)
    fb = b.features if isinstance(b, Sample) else np.asarray(b, dtype=float)
    d = normalizer.transform(fa) - normalizer.transform(fb)
    return float(d @ d)


def _sim_matrix(feats_a, feats_b, normalizer: Normalizer, chunk: int = 256) -> np.ndarray:
    """(len(a), len(b)) squared normalized distances, direct differences."""
    a = normalizer.transform(np.asarray(feats_a, dtype=float).reshape(-1, N_FEATURES))
    b = normalizer.transform(np.asarray(feats_b, dtype=float).reshape(-1, N_FEATURES))
    out = np.empty((len(a), len(b)))
    for lo in range(0, len(a), chunk):
        d = a[lo:lo + chunk, None, :] - b[None, :, :]
        out[lo:lo + chunk] = np.einsum("ijk,ijk->ij", d, d)
    return out


class EpisodicMemory:
    """Curated store of knowledge tuples with one winner per neighborhood."""

    def __init__(self, features, steers, eta_m: float, normalizer: Normalizer,
                 capacity: int | None = None):
        self.features = np.asarray(features, dtype=float).reshape(-1, N_FEATURES)
        self.steers = np.asarray(steers, dtype=float).reshape(-1)
        self.eta_m = float(eta_m)
        self.normalizer = normalizer
        self.capacity = capacity

    def __len__(self):
        return len(self.steers)

    @property
    def efforts(self) -> np.ndarray:
        return self.steers ** 2

    def samples(self):
        return Dataset(self.features, self.steers).samples()

    def sample_batch(self, rng: np.random.Generator, n: int):
        """Random memory batch (without replacement) as (features, steers)."""
        if len(self) == 0:
            raise EmptyMemory("cannot sample from an empty memory")
        idx = rng.choice(len(self), size=min(n, len(self)), replace=False)
        return self.features[idx], self.steers[idx]

    def copy(self) -> "EpisodicMemory":
        return EpisodicMemory(self.features.copy(), self.steers.copy(),
                              self.eta_m, self.normalizer, self.capacity)

    def to_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(list(FEATURE_NAMES) + ["steer", "effort"])
            for feat, steer in zip(self.features, self.steers):
                w.writerow([f"{v:.17g}" for v in feat] + [f"{steer:.17g}", f"{steer * steer:.17g}"])

    @classmethod
    def from_csv(cls, path, eta_m: float, normalizer: Normalizer) -> "EpisodicMemory":
        rows = np.genfromtxt(path, delimiter=",", skip_header=1, ndmin=2)
        if rows.size == 0:
            return cls(np.empty((0, N_FEATURES)), np.empty(0), eta_m, normalizer)
        return cls(rows[:, :N_FEATURES], rows[:, N_FEATURES], eta_m, normalizer)


def screen_incremental(data: Dataset, memory: EpisodicMemory, eta_d: float) -> Dataset:
    """Keep incremental samples that are new in distribution or lower in effort.

    A sample passes if every memory entry is at least eta_d away, or if it
    beats (effort-wise, ties allowed) every memory entry within eta_d. Order
    is preserved; nothing is compared against other incoming samples.
    """
    if len(memory) == 0 or len(data) == 0:
        return data.subset(np.arange(len(data)))
    d2 = _sim_matrix(data.features, memory.features, memory.normalizer)
    similar = d2 <= eta_d
    dissimilar_to_all = d2.min(axis=1) >= eta_d
    min_similar_effort = np.where(similar, memory.efforts[None, :], np.inf).min(axis=1)
    beats_similar = similar.any(axis=1) & (data.efforts <= min_similar_effort)
    return data.subset(np.where(dissimilar_to_all | beats_similar)[0])


def agem_project(g: np.ndarray, g_ref: np.ndarray) -> np.ndarray:
    """Project the training gradient so it cannot oppose the memory gradient.

    Returns g unchanged when g.g_ref >= 0; otherwise removes the conflicting
    component: g - (g.g_ref / g_ref.g_ref) * g_ref, which is the closest
    vector to g (in L2) satisfying the non-conflict constraint.
    """
    g = np.asarray(g, dtype=float)
    g_ref = np.asarray(g_ref, dtype=float)
    if g.shape != g_ref.shape:
        raise ValueError("gradient shapes differ")
    dot = float(g @ g_ref)
    if dot >= 0.0:
        return g
    ref_sq = float(g_ref @ g_ref)
    if ref_sq < 1e-24:  # |g_ref| < 1e-12: projection undefined
        log.warning("zero reference gradient; returning g unchanged")
        return g
    return g - (dot / ref_sq) * g_ref


@dataclass
class UpdateReport:
    """Outcome of one lifelong-update trigger."""

    trigger_id: int = 0
    n_incremental: int = 0
    n_screened: int = 0
    n_mem_before: int = 0
    n_mem_after: int = 0
    loss_data_pre: float = float("nan")
    loss_data_post: float = float("nan")
    loss_mem_pre: float = float("nan")
    loss_mem_post: float = float("nan")
    proj_rate: float = 0.0
    update_wall_s: float = 0.0
    rolled_back: bool = False


def lifelong_update(model: MlpModel, data: Dataset, memory: EpisodicMemory,
                    cfg: EvalConfig, seed: int = 0) -> UpdateReport:
    """Projected-SGD fine-tune of the policy on screened incremental data.

    Every optimizer step recomputes the reference gradient on a fresh random
    memory batch and projects the data gradient against it. On a non-finite
    loss the parameters roll back to their pre-update values.
    """
    if len(data) == 0:
        raise ValueError("caller must skip updates on empty screened data")
    if len(memory) == 0:
        raise EmptyMemory("lifelong update requires a non-empty memory")
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    norm = memory.normalizer
    x = norm.transform(data.features)
    y = data.steers[:, None]
    held_x, held_y = memory.sample_batch(rng, cfg.ref_batch_size)
    held_x = norm.transform(held_x)
    held_y = held_y[:, None]
    snapshot = model.flatten()
    rep = UpdateReport(n_screened=len(data), n_mem_before=len(memory),
                       n_mem_after=len(memory))
    rep.loss_data_pre, _ = model.backward_mse(x, y)
    rep.loss_mem_pre, _ = model.backward_mse(held_x, held_y)
    n_proj = n_steps = 0
    try:
        for _ in range(cfg.update_epochs):
            perm = rng.permutation(len(data))
            for lo in range(0, len(data), cfg.batch_size):
                idx = perm[lo:lo + cfg.batch_size]
                xb = x[idx]
                if cfg.input_jitter > 0.0:
                    xb = xb + rng.normal(0.0, cfg.input_jitter, xb.shape)
                _, g = model.backward_mse(xb, y[idx])
                rx, ry = memory.sample_batch(rng, cfg.ref_batch_size)
                rxn = norm.transform(rx)
                if cfg.input_jitter > 0.0:
                    rxn = rxn + rng.normal(0.0, cfg.input_jitter, rxn.shape)
                _, g_ref = model.backward_mse(rxn, ry[:, None])
                if float(g @ g_ref) < 0.0:
                    n_proj += 1
                g = agem_project(g, g_ref)
                sgd_step(model, g, cfg.lr)
                n_steps += 1
        rep.loss_data_post, _ = model.backward_mse(x, y)
        rep.loss_mem_post, _ = model.backward_mse(held_x, held_y)
    except NonFiniteLoss:
        model.load_flat(snapshot)
        rep.rolled_back = True
        log.warning("non-finite loss during lifelong update; parameters rolled back")
    rep.proj_rate = n_proj / max(1, n_steps)
    rep.update_wall_s = time.perf_counter() - t0
    if rep.loss_mem_post > rep.loss_mem_pre * 1.05:
        log.info("memory loss grew beyond 5%% slack: %.3e -> %.3e",
                 rep.loss_mem_pre, rep.loss_mem_post)
    return rep


def update_memory(memory: EpisodicMemory, screened: Dataset,
                  eta_m: float | None = None) -> EpisodicMemory:
    """Fold screened samples into memory, one lowest-effort winner per neighborhood.

    Samples are processed in input order. A sample with no memory entry within
    eta_m is appended. Otherwise the winner among the sample and its similar
    entries is the one with minimal effort (ties keep the incumbent; among
    incumbents the earliest stored wins); the winner replaces the whole
    similar set, an incumbent winner keeping its original position.
    """
    eta = memory.eta_m if eta_m is None else float(eta_m)
    norm = memory.normalizer
    n_max = len(memory) + len(screened)
    buf_f = np.empty((n_max, N_FEATURES))
    buf_s = np.empty(n_max)
    buf_nf = np.empty((n_max, N_FEATURES))
    top = len(memory)
    alive = np.zeros(n_max, dtype=bool)
    if top:
        buf_f[:top] = memory.features
        buf_s[:top] = memory.steers
        buf_nf[:top] = norm.transform(memory.features)
        alive[:top] = True
    n_alive = top
    skipped_capacity = 0
    new_nf = norm.transform(screened.features) if len(screened) else np.empty((0, N_FEATURES))
    for i in range(len(screened)):
        nf = new_nf[i]
        steer = float(screened.steers[i])
        if top:
            diff = buf_nf[:top] - nf
            d2 = np.einsum("ij,ij->i", diff, diff)
            sim_idx = np.where(alive[:top] & (d2 <= eta))[0]
        else:
            sim_idx = np.empty(0, dtype=int)
        if len(sim_idx) == 0:
            if memory.capacity is not None and n_alive >= memory.capacity:
                skipped_capacity += 1
                continue
            buf_f[top] = screened.features[i]
            buf_s[top] = steer
            buf_nf[top] = nf
            alive[top] = True
            top += 1
            n_alive += 1
            continue
        inc_eff = buf_s[sim_idx] ** 2
        if steer * steer < inc_eff.min():
            # newcomer wins: the whole similar set is replaced by it
            alive[sim_idx] = False
            buf_f[top] = screened.features[i]
            buf_s[top] = steer
            buf_nf[top] = nf
            alive[top] = True
            top += 1
            n_alive += 1 - len(sim_idx)
        else:
            # incumbent wins (earliest on ties) and keeps its slot
            best = sim_idx[int(np.argmin(inc_eff))]
            alive[sim_idx] = False
            alive[best] = True
            n_alive -= len(sim_idx) - 1
    if skipped_capacity:
        log.info("memory at capacity; %d new-neighborhood samples skipped", skipped_capacity)
    keep = alive[:top]
    return EpisodicMemory(buf_f[:top][keep], buf_s[:top][keep],
                          memory.eta_m, norm, memory.capacity)


def init_memory(demonstration: Dataset, eta_m: float, normalizer: Normalizer,
                seed: int = 0, capacity: int | None = None) -> EpisodicMemory:
    """Shuffle the demonstration and fold it into an empty memory."""
    if len(demonstration) == 0:
        raise EmptyDataset("cannot initialize memory from an empty dataset")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(demonstration))
    empty = EpisodicMemory(np.empty((0, N_FEATURES)), np.empty(0), eta_m,
                           normalizer, capacity)
    return update_memory(empty, demonstration.subset(perm))


# ---------------------------------------------------------------------------
# Online loop
# ---------------------------------------------------------------------------


@dataclass
class Schedule:
    """Update triggers for the online loop.

    mode "episodes": repeated full traversals with an update after each one.
    mode "sections": one continuous traversal, updates at section boundaries
    (after every section except the last).
    """

    mode: str = "episodes"
    episodes: int = 1

    def __post_init__(self):
        if self.mode not in ("episodes", "sections"):
            raise ValueError("mode must be 'episodes' or 'sections'")


@dataclass
class SensorNoise:
    """Gaussian corruption applied to logged training data, not to the plant."""

    sigma_vy: float = 0.0         # m/s
    sigma_yaw_rate: float = 0.0   # rad/s
    sigma_steer_log: float = 0.0  # rad


@dataclass
class LoopResult:
    episodes: list = field(default_factory=list)       # one sim.Episode per epoch/section
    update_reports: list = field(default_factory=list)
    screened_counts: list = field(default_factory=list)
    mem_sizes: list = field(default_factory=list)      # after each trigger
    checkpoints: list = field(default_factory=list)    # flat params after each trigger
    final_memory: EpisodicMemory | None = None


def _episode_to_log(episode: sim.Episode, noise: SensorNoise | None,
                    rng: np.random.Generator | None):
    from .imitation import DrivingLog
    states = episode.states.copy()
    steers = episode.steers.copy()
    if noise is not None and rng is not None:
        n = len(steers)
        states[:, 4] += rng.normal(0.0, 1.0, n) * noise.sigma_vy
        states[:, 5] += rng.normal(0.0, 1.0, n) * noise.sigma_yaw_rate
        steers = steers + rng.normal(0.0, 1.0, n) * noise.sigma_steer_log
    return DrivingLog(episode.dt, states, steers, episode.sections)


def make_policy_controller(policy, env: sim.Environment, prev_steer: float | None = None):
    """Stateful controller closure: tracks its previous command for rate limiting."""
    box = {"prev": prev_steer}

    def controller(state, err):
        cmd = policy.act(state, env.path, err.station, box["prev"],
                         env.sim_cfg.control_period)
        box["prev"] = cmd
        return cmd

    return controller


def run_llpl_loop(policy, memory: EpisodicMemory, env: sim.Environment,
                  schedule: Schedule, cfg: EvalConfig, seed: int = 0,
                  knowledge_eval: bool = True, lll_sample_ratio: float = 0.10,
                  noise: SensorNoise | None = None,
                  noise_seed: int | None = None) -> LoopResult:
    """Act, collect, screen, update — the full online learning loop.

    With knowledge_eval=False the loop degrades to plain projected-gradient
    lifelong learning: no screening, and the memory grows by a uniform random
    sample (lll_sample_ratio) of each execution's data instead of evaluated
    winners.
    """
    rng = np.random.default_rng(seed)
    noise_rng = np.random.default_rng(noise_seed if noise_seed is not None else seed + 7)
    result = LoopResult()
    w = env.sim_cfg.window_steps
    memory_box = [memory]

    def skip_trigger(trigger_id: int):
        result.update_reports.append(UpdateReport(trigger_id=trigger_id,
                                                  n_mem_before=len(memory_box[0]),
                                                  n_mem_after=len(memory_box[0])))
        result.screened_counts.append(0)
        result.mem_sizes.append(len(memory_box[0]))
        result.checkpoints.append(policy.model.flatten())

    def do_update(trigger_id: int, episode: sim.Episode):
        log_ = _episode_to_log(episode, noise, noise_rng)
        try:
            data = extract_samples(log_, w)
        except Exception:
            data = Dataset(np.empty((0, N_FEATURES)), np.empty(0))
        keep_idx = np.empty(0, dtype=int)
        if knowledge_eval:
            screened = screen_incremental(data, memory_box[0], cfg.eta_d)
            increment_count = len(screened)
        else:
            n_keep = int(np.ceil(lll_sample_ratio * len(data)))
            if n_keep:
                keep_idx = np.sort(rng.choice(len(data), size=n_keep, replace=False))
            screened = data
            increment_count = n_keep
        rep = UpdateReport(trigger_id=trigger_id, n_incremental=len(data),
                           n_screened=len(screened), n_mem_before=len(memory_box[0]),
                           n_mem_after=len(memory_box[0]))
        if len(screened) >= max(1, cfg.min_update_samples):
            try:
                rep = lifelong_update(policy.model, screened, memory_box[0], cfg,
                                      seed=int(rng.integers(2 ** 31)))
                rep.trigger_id, rep.n_incremental = trigger_id, len(data)
            except NonFiniteLoss:
                rep.rolled_back = True
            if not rep.rolled_back:
                if knowledge_eval:
                    memory_box[0] = update_memory(memory_box[0], screened)
                else:
                    mem = memory_box[0]
                    add = data.subset(keep_idx)
                    memory_box[0] = EpisodicMemory(
                        np.vstack([mem.features, add.features]),
                        np.concatenate([mem.steers, add.steers]),
                        mem.eta_m, mem.normalizer, mem.capacity)
        else:
            log.info("trigger %d: screening kept nothing; update skipped", trigger_id)
        rep.n_mem_after = len(memory_box[0])
        result.update_reports.append(rep)
        result.screened_counts.append(increment_count)
        result.mem_sizes.append(len(memory_box[0]))
        result.checkpoints.append(policy.model.flatten())

    if schedule.mode == "episodes":
        for e in range(schedule.episodes):
            episode, _, _, _ = sim.drive(env, make_policy_controller(policy, env))
            result.episodes.append(episode)
            if episode.aborted:
                log.warning("epoch %d aborted (%s); no update from its data",
                            e, episode.abort_reason)
                skip_trigger(e)
                continue
            do_update(e, episode)
    else:
        bounds = env.path.section_boundaries
        state = sim.initial_state(env)
        station = None
        prev_steer = 0.0
        for k, bound in enumerate(bounds):
            controller = make_policy_controller(policy, env,
                                                None if station is None else prev_steer)
            episode, state, station, prev_steer = sim.drive(
                env, controller, start_state=state, start_station=station,
                stop_station=float(bound), start_prev_steer=prev_steer)
            result.episodes.append(episode)
            if episode.aborted:
                log.warning("section %d aborted (%s); run stops", k, episode.abort_reason)
                break
            if k < len(bounds) - 1:
                do_update(k, episode)
    result.final_memory = memory_box[0]
    return result
