"""Lifelong policy learning for vehicle path tracking.

A deterministic laboratory that learns a steering policy from imperfect
demonstrations by inverting realized state transitions, then keeps improving
it online with memory-projected gradient updates gated by knowledge
evaluation, next to MPC, retrained-IL, plain lifelong-learning, and RL
baselines inside a linear-tire bicycle-model simulator.
"""

from .sim import (BadWaypoints, Environment, Episode, NonFiniteState,
                  PathExhausted, ReferencePath, SimConfig, TrackingError,
                  VehicleParams, VehicleState, build_scenario, drive,
                  initial_state, lookahead_target, step_dynamics,
                  tracking_error, wrap_angle)
from .mlp import (MlpModel, NonFiniteLoss, Normalizer, ShapeMismatch, sgd_step,
                  soft_update)
from .imitation import (Dataset, DrivingLog, EmptyDataset, LogTooShort, Policy,
                        Sample, act, extract_samples, generate_demonstration,
                        simulate_transition, train_il)
from .lifelong import (EmptyMemory, EpisodicMemory, EvalConfig, Schedule,
                       SensorNoise, UpdateReport, agem_project, init_memory,
                       lifelong_update, run_llpl_loop, screen_incremental,
                       similarity, update_memory)
from .baselines import (ErrorState, MpcConfig, MpcController, RlConfig,
                        SpeedTooLow, linearize_error_dynamics, mpc_control,
                        rl_actor_update, rl_critic_update,
                        run_il_retrain_baseline, run_lll_baseline,
                        run_rl_baseline)

__version__ = "0.1.0"
