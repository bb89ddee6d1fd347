"""Experiment orchestration: strict configs, seeded protocols, CSV outputs.

Every command is a pure function of (config, seed): child seeds for the
demonstration, IL training, the online loop, memory initialization, sensor
noise, and RL are derived from the experiment seed in a fixed order, so
re-runs are diff-identical (wall-time columns excepted) and a zero-sigma
noise replay reproduces the clean run bit for bit.
"""

from __future__ import annotations

import configparser
import csv
import logging
import math
import os
from dataclasses import dataclass, field, fields

import numpy as np

from . import baselines, lifelong, sim
from .imitation import (Dataset, DrivingLog, EmptyDataset, N_FEATURES, Policy,
                        extract_samples, generate_demonstration, train_il)
from .lifelong import (EpisodicMemory, EvalConfig, Schedule, SensorNoise,
                       init_memory, run_llpl_loop)
from .mlp import MlpModel, Normalizer

log = logging.getLogger(__name__)

METHODS = ("il", "llpl", "lll", "il_retrain", "rl", "mpc")
SCENARIOS = ("double_lane_change", "curved_road", "from_waypoints")

TRAJ_HEADER = ["t_s", "pos_x", "pos_y", "yaw", "vx", "vy", "yaw_rate",
               "steer", "e_lat", "e_head", "section"]
SUMMARY_HEADER = ["epoch", "rmse_e_lat", "rmse_e_head", "mean_abs_e_lat",
                  "control_effort", "steer_rate_rms", "mem_size", "mem_increment",
                  "screened_count", "update_wall_s", "aborted"]
REPORT_HEADER = ["trigger_id", "n_incremental", "n_screened", "n_mem_before",
                 "n_mem_after", "loss_data_pre", "loss_data_post", "loss_mem_pre",
                 "loss_mem_post", "proj_rate", "update_wall_s"]
COMPARE_HEADER = ["method", "epoch", "rmse_e_lat", "rmse_e_head", "effort",
                  "mem_size", "pct_vs_baseline"]


class ConfigError(ValueError):
    pass


class MissingArtifact(FileNotFoundError):
    pass


class MissingRun(FileNotFoundError):
    pass


@dataclass
class ExperimentConfig:
    # [experiment]
    method: str = "llpl"
    scenario: str = "double_lane_change"
    seed: int = 0
    output_dir: str = "runs/default"
    epochs: int = 3                  # passes for episode protocols
    waypoints_csv: str = ""
    # [sim]
    control_period: float = 0.1
    integration_substep: float = 0.01
    horizon_window: float = 0.5
    off_path_limit: float = 10.0
    # [vehicle]
    mass: float = 1500.0
    yaw_inertia: float = 2500.0
    dist_front_axle: float = 1.2
    dist_rear_axle: float = 1.6
    cornering_stiffness_front: float = 80000.0
    cornering_stiffness_rear: float = 80000.0
    steer_limit: float = 0.5
    steer_rate_limit: float = 1.0
    # [speeds]
    speed_default: float = 12.0
    speeds_per_section: tuple = ()
    # [demo]
    demo_speeds: tuple = (5.0, 10.0, 15.0, 20.0)
    demo_duration_per_speed: float = 150.0
    steer_filter_tol: float = 0.05
    filter_nonconstant: bool = True
    # [il]
    il_epochs: int = 60
    il_batch_size: int = 64
    il_lr: float = 1e-2
    # [eval]
    eta_d: float = 0.05
    eta_m: float = 0.05
    ref_batch_size: int = 256
    update_epochs: int = 200
    update_lr: float = 1e-3
    update_batch_size: int = 64
    lll_sample_ratio: float = 0.10
    # [mpc]
    mpc_horizon_steps: int = 50
    mpc_weight_state: tuple = (10.0, 1.0, 10.0, 1.0)
    mpc_weight_control: float = 50.0
    # [rl]
    rl_gamma: float = 0.99
    rl_lambda_pg: float = 0.05
    rl_tau_target: float = 0.005
    rl_noise_frac: float = 0.10
    rl_warmup_sections: int = 2
    rl_critic_layers: tuple = (128, 128, 128)
    rl_lr_actor: float = 1e-3
    rl_lr_critic: float = 1e-3
    rl_batch_size: int = 64
    rl_updates_per_trigger: int = 500
    # [noise]
    sigma_vy: float = 0.0
    sigma_yaw_rate: float = 0.0
    sigma_steer_log: float = 0.0


# INI section -> {ini key: (attribute, type)}
_SCHEMA = {
    "experiment": {"method": ("method", str), "scenario": ("scenario", str),
                   "seed": ("seed", int), "output_dir": ("output_dir", str),
                   "epochs": ("epochs", int), "waypoints_csv": ("waypoints_csv", str)},
    "sim": {"control_period": ("control_period", float),
            "integration_substep": ("integration_substep", float),
            "horizon_window": ("horizon_window", float),
            "off_path_limit": ("off_path_limit", float)},
    "vehicle": {k: (k, float) for k in
                ("mass", "yaw_inertia", "dist_front_axle", "dist_rear_axle",
                 "cornering_stiffness_front", "cornering_stiffness_rear",
                 "steer_limit", "steer_rate_limit")},
    "speeds": {"default": ("speed_default", float),
               "per_section": ("speeds_per_section", "floats")},
    "demo": {"speeds": ("demo_speeds", "floats"),
             "duration_per_speed": ("demo_duration_per_speed", float),
             "steer_filter_tol": ("steer_filter_tol", float),
             "filter_nonconstant": ("filter_nonconstant", bool)},
    "il": {"epochs": ("il_epochs", int), "batch_size": ("il_batch_size", int),
           "lr": ("il_lr", float)},
    "eval": {"eta_d": ("eta_d", float), "eta_m": ("eta_m", float),
             "ref_batch_size": ("ref_batch_size", int),
             "update_epochs": ("update_epochs", int), "lr": ("update_lr", float),
             "batch_size": ("update_batch_size", int),
             "lll_sample_ratio": ("lll_sample_ratio", float)},
    "mpc": {"horizon_steps": ("mpc_horizon_steps", int),
            "weight_state": ("mpc_weight_state", "floats"),
            "weight_control": ("mpc_weight_control", float)},
    "rl": {"gamma": ("rl_gamma", float), "lambda_pg": ("rl_lambda_pg", float),
           "tau_target": ("rl_tau_target", float), "noise_frac": ("rl_noise_frac", float),
           "warmup_sections": ("rl_warmup_sections", int),
           "critic_layers": ("rl_critic_layers", "ints"),
           "lr_actor": ("rl_lr_actor", float), "lr_critic": ("rl_lr_critic", float),
           "batch_size": ("rl_batch_size", int),
           "updates_per_trigger": ("rl_updates_per_trigger", int)},
    "noise": {"sigma_vy": ("sigma_vy", float),
              "sigma_yaw_rate": ("sigma_yaw_rate", float),
              "sigma_steer_log": ("sigma_steer_log", float)},
}


def _parse_value(raw: str, kind):
    raw = raw.strip()
    if kind is bool:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if kind == "floats":
        return tuple(float(v) for v in raw.split(",") if v.strip())
    if kind == "ints":
        return tuple(int(v) for v in raw.split(",") if v.strip())
    return kind(raw)


def load_config(path) -> ExperimentConfig:
    """Parse a key = value config file; unknown sections or keys are rejected."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read(path)
    except configparser.Error as e:
        raise ConfigError(f"malformed config: {e}") from e
    cfg = ExperimentConfig()
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            attr, kind = _SCHEMA[section][key]
            try:
                setattr(cfg, attr, _parse_value(raw, kind))
            except ValueError as e:
                raise ConfigError(f"bad value for [{section}] {key}: {e}") from e
    validate_config(cfg)
    return cfg


def validate_config(cfg: ExperimentConfig):
    if cfg.method not in METHODS:
        raise ConfigError(f"method must be one of {METHODS}, got {cfg.method!r}")
    if cfg.scenario not in SCENARIOS:
        raise ConfigError(f"scenario must be one of {SCENARIOS}, got {cfg.scenario!r}")
    if cfg.epochs < 1:
        raise ConfigError("epochs must be >= 1")
    try:
        sim.SimConfig(cfg.control_period, cfg.integration_substep,
                      cfg.horizon_window, cfg.seed)
        vehicle_params(cfg)
    except ValueError as e:
        raise ConfigError(str(e)) from e


def save_config(cfg: ExperimentConfig, path):
    """Write the fully resolved configuration next to the outputs."""
    parser = configparser.ConfigParser()
    for section, keys in _SCHEMA.items():
        parser[section] = {}
        for key, (attr, kind) in keys.items():
            v = getattr(cfg, attr)
            if isinstance(v, tuple):
                parser[section][key] = ",".join(repr(x) for x in v)
            else:
                parser[section][key] = repr(v) if not isinstance(v, str) else v
    with open(path, "w") as f:
        parser.write(f)


def vehicle_params(cfg: ExperimentConfig) -> sim.VehicleParams:
    return sim.VehicleParams(cfg.mass, cfg.yaw_inertia, cfg.dist_front_axle,
                             cfg.dist_rear_axle, cfg.cornering_stiffness_front,
                             cfg.cornering_stiffness_rear, cfg.steer_limit,
                             cfg.steer_rate_limit)


def sim_config(cfg: ExperimentConfig) -> sim.SimConfig:
    return sim.SimConfig(cfg.control_period, cfg.integration_substep,
                         cfg.horizon_window, cfg.seed)


def section_speeds(cfg: ExperimentConfig) -> tuple:
    if cfg.speeds_per_section:
        return tuple(cfg.speeds_per_section)
    if cfg.scenario == "curved_road":
        return (12.0, 12.0, 12.0, 20.0, 20.0, 20.0, 20.0)
    return (cfg.speed_default,)


def build_environment(cfg: ExperimentConfig) -> sim.Environment:
    scen_params = {}
    if cfg.scenario == "from_waypoints":
        if not cfg.waypoints_csv:
            raise ConfigError("from_waypoints needs waypoints_csv")
        scen_params["csv_path"] = cfg.waypoints_csv
    path = sim.build_scenario(cfg.scenario, scen_params)
    return sim.Environment(path, vehicle_params(cfg), sim_config(cfg),
                           section_speeds(cfg), cfg.off_path_limit)


def child_seeds(seed: int) -> dict:
    """Fixed-order derivation of per-purpose integer seeds."""
    children = np.random.SeedSequence(seed).spawn(6)
    names = ("demo", "il", "loop", "mem", "noise", "rl")
    return {n: int(c.generate_state(1)[0]) for n, c in zip(names, children)}


def eval_config(cfg: ExperimentConfig) -> EvalConfig:
    return EvalConfig(cfg.eta_d, cfg.eta_m, cfg.ref_batch_size,
                      cfg.update_epochs, cfg.update_lr, cfg.update_batch_size)


POLICY_LAYERS = (N_FEATURES, 64, 64, 1)


# ---------------------------------------------------------------------------
# CSV helpers
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def write_trajectory_csv(path, episode: sim.Episode):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(TRAJ_HEADER)
        for i in range(len(episode)):
            st = episode.states[i]
            w.writerow([_fmt(v) for v in
                        (episode.times[i], st[0], st[1], st[2], st[3], st[4], st[5],
                         episode.steers[i], episode.e_lat[i], episode.e_head[i])]
                       + [str(int(episode.sections[i]))])


def read_trajectory_csv(path) -> dict:
    rows = np.genfromtxt(path, delimiter=",", skip_header=1, ndmin=2)
    return {name: rows[:, i] for i, name in enumerate(TRAJ_HEADER)}


def write_driving_log_csv(path, log_: DrivingLog):
    ep = sim.Episode(log_.dt, np.arange(len(log_)) * log_.dt, log_.states,
                     log_.steers, np.zeros(len(log_)), np.zeros(len(log_)),
                     np.zeros(len(log_)), log_.sections)
    write_trajectory_csv(path, ep)


@dataclass
class SummaryRow:
    epoch: int
    rmse_e_lat: float
    rmse_e_head: float
    mean_abs_e_lat: float
    control_effort: float
    steer_rate_rms: float
    mem_size: int = 0
    mem_increment: int = 0
    screened_count: int = 0
    update_wall_s: float = 0.0
    aborted: bool = False


def summarize_episode(epoch: int, episode: sim.Episode) -> SummaryRow:
    if len(episode) == 0:
        return SummaryRow(epoch, float("nan"), float("nan"), float("nan"),
                          0.0, 0.0, aborted=episode.aborted)
    rate = np.diff(episode.steers) / episode.dt
    return SummaryRow(
        epoch,
        float(np.sqrt(np.mean(episode.e_lat ** 2))),
        float(np.sqrt(np.mean(episode.e_head ** 2))),
        float(np.mean(np.abs(episode.e_lat))),
        float(np.sum(episode.steers ** 2) * episode.dt),
        float(np.sqrt(np.mean(rate ** 2))) if len(rate) else 0.0,
        aborted=episode.aborted,
    )


def write_summary_csv(path, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(SUMMARY_HEADER)
        for r in rows:
            w.writerow([_fmt(getattr(r, k)) for k in SUMMARY_HEADER])


def read_summary_csv(path):
    rows = []
    with open(path, newline="") as f:
        for rec in csv.DictReader(f):
            rows.append(SummaryRow(
                int(rec["epoch"]), float(rec["rmse_e_lat"]), float(rec["rmse_e_head"]),
                float(rec["mean_abs_e_lat"]), float(rec["control_effort"]),
                float(rec["steer_rate_rms"]), int(rec["mem_size"]),
                int(rec["mem_increment"]), int(rec["screened_count"]),
                float(rec["update_wall_s"]), rec["aborted"] == "1"))
    return rows


def write_update_reports_csv(path, reports):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(REPORT_HEADER)
        for r in reports:
            w.writerow([_fmt(getattr(r, k)) for k in REPORT_HEADER])


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _artifact(cfg: ExperimentConfig, name: str) -> str:
    return os.path.join(cfg.output_dir, name)


def _require(path: str) -> str:
    if not os.path.exists(path):
        raise MissingArtifact(f"missing artifact: {path} (run the producing command first)")
    return path


def _prepare_dir(cfg: ExperimentConfig):
    os.makedirs(cfg.output_dir, exist_ok=True)
    save_config(cfg, _artifact(cfg, "resolved_config.ini"))


def _demo_pipeline(cfg: ExperimentConfig, noise: SensorNoise | None = None,
                   noise_seed: int | None = None):
    """Demonstration log -> (optionally corrupted) dataset + fitted normalizer."""
    seeds = child_seeds(cfg.seed)
    log_ = generate_demonstration(vehicle_params(cfg), sim_config(cfg),
                                  cfg.demo_speeds, cfg.demo_duration_per_speed,
                                  seed=seeds["demo"])
    if noise is not None:
        rng = np.random.default_rng(noise_seed)
        states = log_.states.copy()
        steers = log_.steers.copy()
        n = len(steers)
        states[:, 4] += rng.normal(0.0, 1.0, n) * noise.sigma_vy
        states[:, 5] += rng.normal(0.0, 1.0, n) * noise.sigma_yaw_rate
        steers = steers + rng.normal(0.0, 1.0, n) * noise.sigma_steer_log
        log_ = DrivingLog(log_.dt, states, steers, log_.sections)
    data = extract_samples(log_, sim_config(cfg).window_steps,
                           cfg.steer_filter_tol, cfg.filter_nonconstant)
    norm = Normalizer.fit(data.features)
    return log_, data, norm


def cmd_demo_gen(cfg: ExperimentConfig) -> dict:
    """Generate the synthetic demonstration: log, dataset, and normalizer files."""
    _prepare_dir(cfg)
    log_, data, norm = _demo_pipeline(cfg)
    paths = {"log": _artifact(cfg, "demo_log.csv"),
             "dataset": _artifact(cfg, "demo_dataset.csv"),
             "normalizer": _artifact(cfg, "normalizer.txt")}
    write_driving_log_csv(paths["log"], log_)
    data.to_csv(paths["dataset"])
    norm.save(paths["normalizer"])
    log.info("demonstration: %d log rows, %d samples", len(log_), len(data))
    return paths


def _train_il_from(cfg: ExperimentConfig, data: Dataset, norm: Normalizer):
    seeds = child_seeds(cfg.seed)
    model = MlpModel(POLICY_LAYERS, activation="tanh", seed=seeds["il"])
    report = train_il(model, data, norm, cfg.il_epochs, cfg.il_batch_size,
                      cfg.il_lr, seed=seeds["il"])
    policy = Policy(model, norm, cfg.steer_limit, cfg.steer_rate_limit,
                    cfg.horizon_window)
    return policy, report


def cmd_train_il(cfg: ExperimentConfig) -> dict:
    """Train the initial steering policy on the demonstration dataset."""
    _prepare_dir(cfg)
    data = Dataset.from_csv(_require(_artifact(cfg, "demo_dataset.csv")))
    norm = Normalizer.load(_require(_artifact(cfg, "normalizer.txt")))
    if len(data) == 0:
        raise EmptyDataset("demonstration dataset is empty")
    policy, report = _train_il_from(cfg, data, norm)
    stem = _artifact(cfg, "policy_il")
    policy.save(stem)
    with open(_artifact(cfg, "il_report.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "loss"])
        for i, loss in enumerate(report.epoch_losses, start=1):
            w.writerow([i, _fmt(loss)])
    log.info("IL training: loss %.3e -> %.3e", report.initial_loss, report.final_loss)
    return {"policy": stem + ".txt", "report": _artifact(cfg, "il_report.csv")}


def _load_policy(cfg: ExperimentConfig) -> Policy:
    stem = _artifact(cfg, "policy_il")
    _require(stem + ".txt")
    _require(stem + ".norm")
    return Policy.load(stem, vehicle_params(cfg), sim_config(cfg))


def _protocol_mode(env: sim.Environment) -> str:
    return "sections" if len(env.path.section_boundaries) > 1 else "episodes"


def _frozen_rows(env, policy_controller_factory, epochs, mode):
    """Run a frozen controller over the protocol; returns (rows, episodes)."""
    rows, episodes = [], []
    if mode == "episodes":
        for e in range(epochs):
            episode, _, _, _ = sim.drive(env, policy_controller_factory())
            episodes.append(episode)
            rows.append(summarize_episode(e + 1, episode))
    else:
        state, station, prev = sim.initial_state(env), None, 0.0
        for k, bound in enumerate(env.path.section_boundaries):
            episode, state, station, prev = sim.drive(
                env, policy_controller_factory(), start_state=state,
                start_station=station, stop_station=float(bound), start_prev_steer=prev)
            episodes.append(episode)
            rows.append(summarize_episode(k + 1, episode))
            if episode.aborted:
                break
    return rows, episodes


def _merge_loop_rows(result) -> list:
    rows = []
    for i, episode in enumerate(result.episodes):
        row = summarize_episode(i + 1, episode)
        if i < len(result.update_reports):
            rep = result.update_reports[i]
            row.mem_size = rep.n_mem_after
            row.mem_increment = rep.n_mem_after - rep.n_mem_before
            row.screened_count = result.screened_counts[i]
            row.update_wall_s = rep.update_wall_s
        elif result.mem_sizes:
            row.mem_size = result.mem_sizes[-1]
        rows.append(row)
    return rows


def cmd_run(cfg: ExperimentConfig, noise: SensorNoise | None = None) -> dict:
    """Execute the configured method over the scenario protocol."""
    _prepare_dir(cfg)
    env = build_environment(cfg)
    mode = _protocol_mode(env)
    seeds = child_seeds(cfg.seed)
    out = {"summary": _artifact(cfg, "summary.csv"), "aborted": False}
    episodes, rows = [], []

    if cfg.method == "mpc":
        mpc_cfg = baselines.MpcConfig(cfg.mpc_horizon_steps, cfg.control_period,
                                      cfg.mpc_weight_state, cfg.mpc_weight_control,
                                      cfg.steer_limit)
        controller = baselines.MpcController(vehicle_params(cfg), mpc_cfg, env.path)
        rows, episodes = _frozen_rows(env, lambda: controller, cfg.epochs, mode)

    elif cfg.method == "il":
        policy = _load_policy(cfg)
        rows, episodes = _frozen_rows(
            env, lambda: lifelong.make_policy_controller(policy, env), cfg.epochs, mode)

    elif cfg.method in ("llpl", "lll"):
        policy = _load_policy(cfg)
        demo = Dataset.from_csv(_require(_artifact(cfg, "demo_dataset.csv")))
        ecfg = eval_config(cfg)
        schedule = Schedule(mode, cfg.epochs)
        if cfg.method == "llpl":
            memory = init_memory(demo, cfg.eta_m, policy.normalizer, seeds["mem"])
            result = run_llpl_loop(policy, memory, env, schedule, ecfg,
                                   seed=seeds["loop"], noise=noise,
                                   noise_seed=seeds["noise"])
        else:
            memory = baselines.random_memory_from(demo, cfg.lll_sample_ratio,
                                                  cfg.eta_m, policy.normalizer,
                                                  seeds["mem"])
            result = run_llpl_loop(policy, memory, env, schedule, ecfg,
                                   seed=seeds["loop"], knowledge_eval=False,
                                   lll_sample_ratio=cfg.lll_sample_ratio,
                                   noise=noise, noise_seed=seeds["noise"])
        episodes = result.episodes
        rows = _merge_loop_rows(result)
        result.final_memory.to_csv(_artifact(cfg, "memory.csv"))
        write_update_reports_csv(_artifact(cfg, "update_reports.csv"),
                                 result.update_reports)
        for i, params in enumerate(result.checkpoints, start=1):
            m = MlpModel(policy.model.layer_sizes, policy.model.activation, seed=0)
            m.load_flat(params)
            m.save(_artifact(cfg, f"policy_after_trigger{i}.txt"))
        policy.save(_artifact(cfg, "policy_final"))

    elif cfg.method == "il_retrain":
        if mode != "episodes":
            raise ConfigError("il_retrain supports episode protocols only")
        policy = _load_policy(cfg)
        demo = Dataset.from_csv(_require(_artifact(cfg, "demo_dataset.csv")))
        result = baselines.run_il_retrain_baseline(
            policy, env, cfg.epochs, demo, cfg.il_epochs, cfg.il_batch_size,
            cfg.il_lr, init_seed=seeds["il"], seed=seeds["loop"])
        episodes = result.episodes
        rows = [summarize_episode(i + 1, ep) for i, ep in enumerate(result.episodes)]
        for row, wall in zip(rows, result.wall_times):
            row.update_wall_s = wall
        with open(_artifact(cfg, "retrain_sizes.csv"), "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["epoch", "train_rows", "wall_s"])
            for i, (n, t) in enumerate(zip(result.train_sizes, result.wall_times), 1):
                w.writerow([i, n, _fmt(t)])

    elif cfg.method == "rl":
        policy = _load_policy(cfg)
        demo = Dataset.from_csv(_require(_artifact(cfg, "demo_dataset.csv")))
        rl_cfg = baselines.RlConfig(cfg.rl_gamma, cfg.rl_lambda_pg, cfg.rl_tau_target,
                                    cfg.rl_noise_frac, cfg.rl_warmup_sections,
                                    cfg.rl_critic_layers, cfg.rl_lr_actor,
                                    cfg.rl_lr_critic, cfg.rl_batch_size,
                                    cfg.rl_updates_per_trigger)
        if mode != "sections":
            raise ConfigError("rl supports the section protocol only")
        result = baselines.run_rl_baseline(policy, env, rl_cfg, demo, seed=seeds["rl"])
        episodes = result.episodes
        rows = [summarize_episode(i + 1, ep) for i, ep in enumerate(result.episodes)]
        out["saw_nan"] = result.saw_nan

    prefix = "trajectory_epoch" if mode == "episodes" else "trajectory_s"
    for i, episode in enumerate(episodes, start=1):
        write_trajectory_csv(_artifact(cfg, f"{prefix}{i}.csv"), episode)
    write_summary_csv(out["summary"], rows)
    out["aborted"] = any(r.aborted for r in rows)
    out["rows"] = rows
    return out


def cmd_compare(cfg_paths, out_path) -> list:
    """Join run summaries across methods into one comparison table.

    The first config is the baseline for the percentage column (relative
    reduction of rmse_e_lat, positive when a method beats the baseline).
    """
    runs = []
    for p in cfg_paths:
        cfg = load_config(p)
        summary = _artifact(cfg, "summary.csv")
        if not os.path.exists(summary):
            raise MissingRun(f"no summary for {cfg.method} at {summary}")
        runs.append((cfg.method, read_summary_csv(summary)))
    base = {r.epoch: r for r in runs[0][1]}
    table = []
    for method, rows in runs:
        for r in rows:
            b = base.get(r.epoch)
            pct = float("nan")
            if b is not None and b.rmse_e_lat > 0.0:
                pct = 100.0 * (b.rmse_e_lat - r.rmse_e_lat) / b.rmse_e_lat
            table.append([method, r.epoch, r.rmse_e_lat, r.rmse_e_head,
                          r.control_effort, r.mem_size, pct])
    with open(out_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(COMPARE_HEADER)
        for row in table:
            w.writerow([row[0], str(row[1])] + [_fmt(v) for v in row[2:]])
    return table


def cmd_noise_replay(cfg: ExperimentConfig) -> dict:
    """LLPL with sensor-corrupted training data, evaluated on the clean plant.

    The demonstration and every execution log are corrupted before sample
    extraction; the simulator itself stays clean. A frozen policy trained on
    the same noisy demonstration is run alongside as the degradation
    reference. With all sigmas zero this reproduces cmd_run(llpl) bit for bit.
    """
    _prepare_dir(cfg)
    seeds = child_seeds(cfg.seed)
    noise = SensorNoise(cfg.sigma_vy, cfg.sigma_yaw_rate, cfg.sigma_steer_log)
    _, data, norm = _demo_pipeline(cfg, noise=noise, noise_seed=seeds["noise"] + 1)
    data.to_csv(_artifact(cfg, "demo_dataset.csv"))
    norm.save(_artifact(cfg, "normalizer.txt"))
    policy, _ = _train_il_from(cfg, data, norm)
    policy.save(_artifact(cfg, "policy_il"))

    env = build_environment(cfg)
    mode = _protocol_mode(env)
    frozen = policy.clone()
    il_rows, il_eps = _frozen_rows(
        env, lambda: lifelong.make_policy_controller(frozen, env), cfg.epochs, mode)
    for i, episode in enumerate(il_eps, start=1):
        write_trajectory_csv(_artifact(cfg, f"il_trajectory_{i}.csv"), episode)
    write_summary_csv(_artifact(cfg, "il_summary.csv"), il_rows)

    memory = init_memory(data, cfg.eta_m, norm, seeds["mem"])
    result = run_llpl_loop(policy, memory, env, Schedule(mode, cfg.epochs),
                           eval_config(cfg), seed=seeds["loop"], noise=noise,
                           noise_seed=seeds["noise"])
    episodes = result.episodes
    rows = _merge_loop_rows(result)
    prefix = "trajectory_epoch" if mode == "episodes" else "trajectory_s"
    for i, episode in enumerate(episodes, start=1):
        write_trajectory_csv(_artifact(cfg, f"{prefix}{i}.csv"), episode)
    write_summary_csv(_artifact(cfg, "summary.csv"), rows)
    result.final_memory.to_csv(_artifact(cfg, "memory.csv"))
    write_update_reports_csv(_artifact(cfg, "update_reports.csv"), result.update_reports)

    final_llpl = rows[-1].rmse_e_lat if rows else float("nan")
    final_il = il_rows[-1].rmse_e_lat if il_rows else float("nan")
    with open(_artifact(cfg, "noise_report.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["final_rmse_llpl", "final_rmse_frozen_il", "pct_improvement"])
        pct = 100.0 * (final_il - final_llpl) / final_il if final_il > 0 else float("nan")
        w.writerow([_fmt(final_llpl), _fmt(final_il), _fmt(pct)])
    return {"summary": _artifact(cfg, "summary.csv"),
            "il_summary": _artifact(cfg, "il_summary.csv"),
            "final_rmse_llpl": final_llpl, "final_rmse_frozen_il": final_il,
            "aborted": any(r.aborted for r in rows)}
