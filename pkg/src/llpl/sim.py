"""Vehicle dynamics simulation, reference-path geometry, and driving scenarios.

Conventions used throughout the package:
  * world frame: x east, y north, yaw counter-clockwise from +x, wrapped to (-pi, pi]
  * body frame: x forward, y to the LEFT
  * lateral tracking error is positive when the vehicle is left of the path
  * steering angle is positive for a left turn
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import CubicSpline

log = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi


class NonFiniteState(RuntimeError):
    """A simulated state contains NaN or Inf."""


class PathExhausted(RuntimeError):
    """The requested station lies beyond the end of the reference path."""


class BadWaypoints(ValueError):
    """Waypoint input is unusable (too few points or duplicate stations)."""


def wrap_angle(a):
    """Wrap an angle (scalar or array) to (-pi, pi]."""
    return math.pi - (math.pi - a) % TWO_PI


@dataclass(frozen=True)
class VehicleParams:
    """Single-track vehicle parameters (linear tires)."""

    mass: float = 1500.0                      # kg
    yaw_inertia: float = 2500.0               # kg m^2
    dist_front_axle: float = 1.2              # m, CoG to front axle (l_f)
    dist_rear_axle: float = 1.6               # m, CoG to rear axle (l_r)
    cornering_stiffness_front: float = 80000.0  # N/rad, per axle (C_f)
    cornering_stiffness_rear: float = 80000.0   # N/rad, per axle (C_r)
    steer_limit: float = 0.5                  # rad
    steer_rate_limit: float = 1.0             # rad/s

    def __post_init__(self):
        for name in ("mass", "yaw_inertia", "dist_front_axle", "dist_rear_axle",
                     "cornering_stiffness_front", "cornering_stiffness_rear",
                     "steer_limit", "steer_rate_limit"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.steer_limit < math.pi / 2:
            raise ValueError("steer_limit must lie in (0, pi/2)")

    @property
    def wheelbase(self) -> float:
        return self.dist_front_axle + self.dist_rear_axle

    @property
    def understeer_gradient(self) -> float:
        """K_us = m (l_r C_r - l_f C_f) / (C_f C_r L)."""
        cf, cr = self.cornering_stiffness_front, self.cornering_stiffness_rear
        num = self.mass * (self.dist_rear_axle * cr - self.dist_front_axle * cf)
        return num / (cf * cr * self.wheelbase)


@dataclass(frozen=True)
class VehicleState:
    """Full kinematic + dynamic state of the simulated vehicle."""

    pos_x: float = 0.0      # m, world
    pos_y: float = 0.0      # m, world
    yaw: float = 0.0        # rad, world, in (-pi, pi]
    vx: float = 10.0        # m/s, body longitudinal (cruise setpoint, > 0)
    vy: float = 0.0         # m/s, body lateral
    yaw_rate: float = 0.0   # rad/s

    def as_array(self) -> np.ndarray:
        return np.array([self.pos_x, self.pos_y, self.yaw, self.vx, self.vy, self.yaw_rate])

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in
                   (self.pos_x, self.pos_y, self.yaw, self.vx, self.vy, self.yaw_rate))


@dataclass(frozen=True)
class SimConfig:
    """Timing configuration of the control loop."""

    control_period: float = 0.1        # s, steering decision period T
    integration_substep: float = 0.01  # s, RK4 substep, divides control_period
    horizon_window: float = 0.5        # s, lookahead/transition window (W * T)
    rng_seed: int = 0

    def __post_init__(self):
        w = self.horizon_window / self.control_period
        if abs(w - round(w)) > 1e-9 or round(w) < 1:
            raise ValueError("horizon_window must be a positive integer multiple of control_period")
        n = self.control_period / self.integration_substep
        if abs(n - round(n)) > 1e-9 or round(n) < 1:
            raise ValueError("integration_substep must divide control_period")

    @property
    def window_steps(self) -> int:
        """W = horizon_window / control_period."""
        return int(round(self.horizon_window / self.control_period))

    @property
    def substeps(self) -> int:
        return int(round(self.control_period / self.integration_substep))


def _lateral_coeffs(p: VehicleParams, vx: float):
    """Coefficients of the linear-tire single-track lateral dynamics at speed vx."""
    cf, cr = p.cornering_stiffness_front, p.cornering_stiffness_rear
    lf, lr = p.dist_front_axle, p.dist_rear_axle
    m, iz = p.mass, p.yaw_inertia
    a11 = -(cf + cr) / (m * vx)
    a12 = (lr * cr - lf * cf) / (m * vx) - vx
    a21 = (lr * cr - lf * cf) / (iz * vx)
    a22 = -(lf * lf * cf + lr * lr * cr) / (iz * vx)
    b1 = cf / m
    b2 = lf * cf / iz
    return a11, a12, a21, a22, b1, b2


def _rk4_step(x, y, yaw, vy, r, vx, steer, coeffs, dt):
    """One RK4 step of (x, y, yaw, vy, r) with vx and steer held constant."""
    a11, a12, a21, a22, b1, b2 = coeffs

    def deriv(yaw_, vy_, r_):
        cy, sy = math.cos(yaw_), math.sin(yaw_)
        return (vx * cy - vy_ * sy,
                vx * sy + vy_ * cy,
                r_,
                a11 * vy_ + a12 * r_ + b1 * steer,
                a21 * vy_ + a22 * r_ + b2 * steer)

    k1 = deriv(yaw, vy, r)
    k2 = deriv(yaw + 0.5 * dt * k1[2], vy + 0.5 * dt * k1[3], r + 0.5 * dt * k1[4])
    k3 = deriv(yaw + 0.5 * dt * k2[2], vy + 0.5 * dt * k2[3], r + 0.5 * dt * k2[4])
    k4 = deriv(yaw + dt * k3[2], vy + dt * k3[3], r + dt * k3[4])
    s = dt / 6.0
    return (x + s * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]),
            y + s * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]),
            yaw + s * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2]),
            vy + s * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3]),
            r + s * (k1[4] + 2 * k2[4] + 2 * k3[4] + k4[4]))


def step_dynamics(state: VehicleState, steer: float, params: VehicleParams,
                  dt: float) -> VehicleState:
    """Advance the state by dt under a fixed steering angle.

    Dynamic bicycle model with linear tires; vx is held constant during the
    step (speed is an exogenous cruise setpoint). Steering is clipped to
    +-steer_limit internally; yaw is wrapped to (-pi, pi] afterwards.
    """
    if not 0.0 < dt <= 0.05:
        raise ValueError(f"dt must lie in (0, 0.05], got {dt}")
    if abs(steer) > params.steer_limit:
        log.debug("steer %.4f clipped to limit %.4f", steer, params.steer_limit)
        steer = math.copysign(params.steer_limit, steer)
    coeffs = _lateral_coeffs(params, state.vx)
    x, y, yaw, vy, r = _rk4_step(state.pos_x, state.pos_y, state.yaw,
                                 state.vy, state.yaw_rate, state.vx, steer, coeffs, dt)
    out = VehicleState(x, y, wrap_angle(yaw), state.vx, vy, r)
    if not out.is_finite():
        raise NonFiniteState(f"non-finite state after step: {out}")
    return out


# ---------------------------------------------------------------------------
# Reference paths
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrackingError:
    """Signed tracking error relative to the reference path."""

    lateral: float   # m, left-of-path positive
    heading: float   # rad, wrapped to (-pi, pi]
    station: float   # m, arclength of the foot point


class ReferencePath:
    """Arc-length parameterized path sampled on a dense station grid.

    Construction goes through a chord-length cubic spline for waypoint input
    or direct curvature integration for procedural scenarios; either way the
    object stores dense (x, y, heading, curvature) tables. Headings are kept
    unwrapped (winding allowed) so interpolation never crosses a 2*pi seam.
    """

    def __init__(self, xs, ys, stations, headings, curvatures,
                 section_boundaries=(), waypoints=None):
        self.xs = np.asarray(xs, dtype=float)
        self.ys = np.asarray(ys, dtype=float)
        self.stations = np.asarray(stations, dtype=float)
        self.headings = np.asarray(headings, dtype=float)   # unwrapped
        self.curvatures = np.asarray(curvatures, dtype=float)
        self.section_boundaries = np.asarray(section_boundaries, dtype=float)
        self.waypoints = None if waypoints is None else np.asarray(waypoints, dtype=float)
        if np.any(np.diff(self.stations) <= 0.0):
            raise BadWaypoints("arclength table must be strictly increasing")

    @property
    def length(self) -> float:
        return float(self.stations[-1])

    @property
    def n_sections(self) -> int:
        return max(1, len(self.section_boundaries))

    @classmethod
    def from_waypoints(cls, waypoints, ds: float = 0.25, section_boundaries=()) -> "ReferencePath":
        """Cubic spline through waypoints, resampled every ds meters of arclength."""
        pts = np.asarray(waypoints, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 4:
            raise BadWaypoints("need at least 4 waypoints of shape (n, 2)")
        chords = np.hypot(*np.diff(pts, axis=0).T)
        if np.any(chords <= 1e-9):
            raise BadWaypoints("duplicate consecutive waypoints (zero chord)")
        t = np.concatenate(([0.0], np.cumsum(chords)))
        sx = CubicSpline(t, pts[:, 0], bc_type="natural")
        sy = CubicSpline(t, pts[:, 1], bc_type="natural")
        # fine parameter grid, then re-sample uniformly in arclength
        tf = np.linspace(0.0, t[-1], max(16, int(t[-1] / (0.2 * ds))) + 1)
        xf, yf = sx(tf), sy(tf)
        sf = np.concatenate(([0.0], np.cumsum(np.hypot(np.diff(xf), np.diff(yf)))))
        s = np.arange(0.0, sf[-1], ds)
        s = np.append(s, sf[-1])
        tq = np.interp(s, sf, tf)
        x, y = sx(tq), sy(tq)
        dx, dy = sx(tq, 1), sy(tq, 1)
        ddx, ddy = sx(tq, 2), sy(tq, 2)
        headings = np.unwrap(np.arctan2(dy, dx))
        curv = (dx * ddy - dy * ddx) / np.power(dx * dx + dy * dy, 1.5)
        return cls(x, y, s, headings, curv, section_boundaries, waypoints=pts)

    @classmethod
    def from_curvature_profile(cls, stations, curvatures, section_boundaries=()) -> "ReferencePath":
        """Integrate a curvature profile kappa(s) into a planar path (trapezoid rule)."""
        s = np.asarray(stations, dtype=float)
        k = np.asarray(curvatures, dtype=float)
        ds = np.diff(s)
        headings = np.concatenate(([0.0], np.cumsum(0.5 * (k[1:] + k[:-1]) * ds)))
        cx = np.cos(headings)
        sx = np.sin(headings)
        x = np.concatenate(([0.0], np.cumsum(0.5 * (cx[1:] + cx[:-1]) * ds)))
        y = np.concatenate(([0.0], np.cumsum(0.5 * (sx[1:] + sx[:-1]) * ds)))
        return cls(x, y, s, headings, k, section_boundaries)

    # -- interpolation ------------------------------------------------------

    def position(self, s):
        return (np.interp(s, self.stations, self.xs),
                np.interp(s, self.stations, self.ys))

    def heading(self, s):
        """Unwrapped tangent heading at station s."""
        return np.interp(s, self.stations, self.headings)

    def curvature(self, s):
        return np.interp(s, self.stations, self.curvatures)

    def section_of(self, s) -> int:
        """Index of the section containing station s (0-based; tail maps to the last)."""
        if len(self.section_boundaries) == 0:
            return 0
        i = int(np.searchsorted(self.section_boundaries, s, side="right"))
        return min(i, len(self.section_boundaries) - 1)

    # -- foot point ---------------------------------------------------------

    def foot_point(self, x: float, y: float, prev_station: float | None = None,
                   back_window: float = 1.0, fwd_window: float = 30.0) -> float:
        """Station of the nearest path point.

        The search is restricted to [prev_station - back_window,
        prev_station + fwd_window] when a previous station is given
        (monotone progression on self-near paths); otherwise it is global.
        """
        s = self.stations
        if prev_station is None:
            lo, hi = 0, len(s) - 1
        else:
            lo = int(np.searchsorted(s, prev_station - back_window, side="left"))
            hi = int(np.searchsorted(s, prev_station + fwd_window, side="right"))
            lo, hi = max(0, lo - 1), min(len(s) - 1, hi)
        px = self.xs[lo:hi + 1]
        py = self.ys[lo:hi + 1]
        i = int(np.argmin((px - x) ** 2 + (py - y) ** 2)) + lo
        # project onto the better of the two segments adjacent to sample i
        best_s, best_d2 = s[i], (self.xs[i] - x) ** 2 + (self.ys[i] - y) ** 2
        for j in (i - 1, i):
            if j < 0 or j + 1 >= len(s):
                continue
            ax, ay = self.xs[j], self.ys[j]
            bx, by = self.xs[j + 1], self.ys[j + 1]
            ux, uy = bx - ax, by - ay
            seg2 = ux * ux + uy * uy
            t = ((x - ax) * ux + (y - ay) * uy) / seg2
            t = min(1.0, max(0.0, t))
            qx, qy = ax + t * ux, ay + t * uy
            d2 = (qx - x) ** 2 + (qy - y) ** 2
            if d2 < best_d2:
                best_d2 = d2
                best_s = s[j] + t * (s[j + 1] - s[j])
        if prev_station is not None:
            best_s = max(best_s, prev_station - back_window)
        return float(best_s)


def tracking_error(state: VehicleState, path: ReferencePath,
                   prev_station: float | None = None) -> TrackingError:
    """Signed lateral/heading error and foot-point station.

    Raises PathExhausted once the foot point reaches the end of the path.
    """
    s = path.foot_point(state.pos_x, state.pos_y, prev_station)
    if s >= path.length - 1e-9:
        raise PathExhausted(f"foot point {s:.2f} m at end of {path.length:.2f} m path")
    px, py = path.position(s)
    psi = path.heading(s)
    dx, dy = state.pos_x - px, state.pos_y - py
    lateral = -math.sin(psi) * dx + math.cos(psi) * dy
    heading = wrap_angle(state.yaw - psi)
    return TrackingError(float(lateral), float(heading), s)


def lookahead_target(state: VehicleState, path: ReferencePath, window: float,
                     station: float | None = None) -> tuple[float, float]:
    """Body-frame displacement to the path point one horizon window ahead.

    Returns (dy_body, dpsi): lateral offset of the target in the current body
    frame (left positive) and the wrapped heading change to the target
    tangent. The target sits at station + vx * window along the path.
    """
    if station is None:
        station = path.foot_point(state.pos_x, state.pos_y, None)
    s_t = station + state.vx * window
    if s_t > path.length:
        raise PathExhausted(f"lookahead {s_t:.2f} m beyond {path.length:.2f} m path")
    tx, ty = path.position(s_t)
    dx, dy = tx - state.pos_x, ty - state.pos_y
    dy_body = -math.sin(state.yaw) * dx + math.cos(state.yaw) * dy
    dpsi = wrap_angle(path.heading(s_t) - state.yaw)
    return float(dy_body), float(dpsi)


# ---------------------------------------------------------------------------
# Scenarios
# ---------------------------------------------------------------------------

# curved road: per-section arc peak curvatures (1/m), sign alternating within
# each section; sharp sections up to 0.02 1/m, gentle sections <= 0.007 1/m
_CURVED_SECTION_ARCS = (
    (0.016, -0.020, 0.013),
    (-0.018, 0.015, -0.020),
    (0.020, -0.014, 0.017),
    (-0.006, 0.007),
    (0.0055, -0.0065),
    (-0.007, 0.005),
    (0.006, -0.0045),
)
_SECTION_LEN = 1000.0  # m


def _dlc_offset(x: np.ndarray) -> np.ndarray:
    """Lateral offset profile of the double lane change (cosine blends)."""
    y = np.zeros_like(x)
    up = (x >= 50.0) & (x < 80.0)
    y[up] = 3.5 * 0.5 * (1.0 - np.cos(math.pi * (x[up] - 50.0) / 30.0))
    hold = (x >= 80.0) & (x < 105.0)
    y[hold] = 3.5
    down = (x >= 105.0) & (x < 135.0)
    y[down] = 3.5 * 0.5 * (1.0 + np.cos(math.pi * (x[down] - 105.0) / 30.0))
    return y


def _curved_road_profile(ds: float = 0.25):
    """Piecewise-linear curvature profile: clothoid-blended alternating arcs."""
    segs = []  # (length, kappa_start, kappa_end)
    for arcs in _CURVED_SECTION_ARCS:
        sharp = max(abs(a) for a in arcs) > 0.008
        ramp = 60.0 if sharp else 80.0
        hold = 90.0 if sharp else 120.0
        arc_len = 2 * ramp + hold
        gap = (_SECTION_LEN - len(arcs) * arc_len) / (len(arcs) + 1)
        for kappa in arcs:
            segs.append((gap, 0.0, 0.0))
            segs.append((ramp, 0.0, kappa))
            segs.append((hold, kappa, kappa))
            segs.append((ramp, kappa, 0.0))
        segs.append((gap, 0.0, 0.0))
    segs.append((100.0, 0.0, 0.0))  # straight tail so lookahead survives S7
    total = sum(l for l, _, _ in segs)
    s = np.arange(0.0, total + 0.5 * ds, ds)
    k = np.zeros_like(s)
    s0 = 0.0
    for length, k0, k1 in segs:
        m = (s >= s0) & (s <= s0 + length)
        k[m] = k0 + (k1 - k0) * (s[m] - s0) / length
        s0 += length
    return s, k


def build_scenario(name: str, params: dict | None = None) -> ReferencePath:
    """Construct a named reference path.

    Supported names: "double_lane_change" (ISO-3888-style, 185 m),
    "curved_road" (seven 1 km sections of alternating arcs plus a straight
    tail), and "from_waypoints" (cubic spline through params["waypoints"] or
    a CSV at params["csv_path"] with header x_m,y_m).
    """
    params = dict(params or {})
    if name == "double_lane_change":
        x = np.arange(0.0, 185.0 + 1e-9, 2.5)
        pts = np.column_stack([x, _dlc_offset(x)])
        return ReferencePath.from_waypoints(pts, ds=params.get("ds", 0.25))
    if name == "curved_road":
        s, k = _curved_road_profile(ds=params.get("ds", 0.25))
        bounds = _SECTION_LEN * np.arange(1, len(_CURVED_SECTION_ARCS) + 1)
        return ReferencePath.from_curvature_profile(s, k, section_boundaries=bounds)
    if name == "from_waypoints":
        if "waypoints" in params:
            pts = np.asarray(params["waypoints"], dtype=float)
        elif "csv_path" in params:
            pts = load_waypoint_csv(params["csv_path"])
        else:
            raise BadWaypoints("from_waypoints needs 'waypoints' or 'csv_path'")
        return ReferencePath.from_waypoints(pts, ds=params.get("ds", 0.25),
                                            section_boundaries=params.get("section_boundaries", ()))
    raise ValueError(f"unknown scenario {name!r}")


def load_waypoint_csv(path) -> np.ndarray:
    """Read a waypoint CSV with header x_m,y_m."""
    pts = np.genfromtxt(path, delimiter=",", names=True)
    if pts.dtype.names is None or set(pts.dtype.names) != {"x_m", "y_m"}:
        raise BadWaypoints("waypoint CSV must have header x_m,y_m")
    return np.column_stack([pts["x_m"], pts["y_m"]])


# ---------------------------------------------------------------------------
# Closed-loop execution
# ---------------------------------------------------------------------------


@dataclass
class Environment:
    """Execution environment: path, plant, timing, and speed schedule."""

    path: ReferencePath
    params: VehicleParams
    sim_cfg: SimConfig
    section_speeds: tuple = (12.0,)  # m/s cruise setpoint per section
    off_path_limit: float = 10.0     # m, abort threshold on |lateral error|

    def speed_at(self, station: float) -> float:
        i = min(self.path.section_of(station), len(self.section_speeds) - 1)
        return float(self.section_speeds[i])


@dataclass
class Episode:
    """Time series of one (partial) closed-loop traversal."""

    dt: float
    times: np.ndarray
    states: np.ndarray       # (n, 6): pos_x, pos_y, yaw, vx, vy, yaw_rate
    steers: np.ndarray       # (n,) applied commands
    e_lat: np.ndarray        # (n,) m
    e_head: np.ndarray       # (n,) rad
    stations: np.ndarray     # (n,) m
    sections: np.ndarray     # (n,) int
    aborted: bool = False
    abort_reason: str = ""

    def __len__(self):
        return len(self.times)

    def section_slice(self, section: int) -> "Episode":
        m = self.sections == section
        return Episode(self.dt, self.times[m], self.states[m], self.steers[m],
                       self.e_lat[m], self.e_head[m], self.stations[m],
                       self.sections[m], self.aborted, self.abort_reason)


def initial_state(env: Environment, station: float = 0.0) -> VehicleState:
    """Vehicle placed exactly on the path with the path heading."""
    x, y = env.path.position(station)
    return VehicleState(float(x), float(y), wrap_angle(env.path.heading(station)),
                        env.speed_at(station), 0.0, 0.0)


def drive(env: Environment, controller, start_state: VehicleState | None = None,
          start_station: float | None = None, stop_station: float | None = None,
          max_steps: int | None = None, start_prev_steer: float = 0.0):
    """Run the control loop until the path (or stop_station) is reached.

    controller(state, err) returns a raw steering command; the loop clips it
    to the steer limit and rate-limits it against the previously applied
    command before integrating. Returns (episode, final_state, final_station,
    last_applied_steer) so a caller can pause at a station and resume.
    """
    p, cfg, path = env.params, env.sim_cfg, env.path
    state = initial_state(env) if start_state is None else start_state
    station = start_station
    if max_steps is None:
        max_steps = int(4 * path.length / (min(env.section_speeds) * cfg.control_period)) + 100
    coeff_speed = None
    coeffs = None
    rows = {k: [] for k in ("t", "state", "steer", "e_lat", "e_head", "s", "sec")}
    prev_steer = start_prev_steer
    aborted, reason = False, ""
    t = 0.0
    for _ in range(max_steps):
        try:
            err = tracking_error(state, path, station)
        except PathExhausted:
            break
        station = err.station
        if stop_station is not None and station >= stop_station:
            break
        if abs(err.lateral) > env.off_path_limit:
            aborted, reason = True, f"off path: |e_lat|={abs(err.lateral):.2f} m at s={station:.1f} m"
            break
        vx = env.speed_at(station)
        if vx != state.vx:
            state = replace(state, vx=vx)
        try:
            cmd = controller(state, err)
        except PathExhausted:
            break
        steer = min(p.steer_limit, max(-p.steer_limit, cmd))
        dmax = p.steer_rate_limit * cfg.control_period
        steer = min(prev_steer + dmax, max(prev_steer - dmax, steer))
        rows["t"].append(t)
        rows["state"].append(state.as_array())
        rows["steer"].append(steer)
        rows["e_lat"].append(err.lateral)
        rows["e_head"].append(err.heading)
        rows["s"].append(station)
        rows["sec"].append(path.section_of(station))
        cs = _lateral_coeffs(p, state.vx) if state.vx != coeff_speed else coeffs
        coeff_speed, coeffs = state.vx, cs
        x, y, yaw, vy, r = (state.pos_x, state.pos_y, state.yaw, state.vy, state.yaw_rate)
        h = cfg.integration_substep
        for _ in range(cfg.substeps):
            x, y, yaw, vy, r = _rk4_step(x, y, yaw, vy, r, state.vx, steer, cs, h)
            yaw = wrap_angle(yaw)
        state = VehicleState(x, y, yaw, state.vx, vy, r)
        if not state.is_finite():
            aborted, reason = True, "non-finite state"
            break
        prev_steer = steer
        t += cfg.control_period
    ep = Episode(cfg.control_period, np.array(rows["t"]),
                 np.array(rows["state"]).reshape(-1, 6), np.array(rows["steer"]),
                 np.array(rows["e_lat"]), np.array(rows["e_head"]),
                 np.array(rows["s"]), np.array(rows["sec"], dtype=int),
                 aborted, reason)
    return ep, state, (station if station is not None else 0.0), prev_steer
