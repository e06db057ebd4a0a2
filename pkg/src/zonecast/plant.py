"""Synthetic building plant: RC thermal model, weather generator, forecast
distorter and gap injection.

Real building telemetry is rarely shareable, so the plant provides
reproducible ground truth: a two-state (zone air / thermal mass) linear
RC network driven by heating/cooling power, ambient temperature and a
solar proxy.  Default parameter sets give a fast zone time constant
around an hour and a slow mass constant of roughly a day, one heavy
high-inertia variant and one light variant with larger solar gains.

All generators are pure functions of (parameters, seed).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import expm

from . import accel
from .errors import ConfigError, ShapeError
from .series import Channel, Schema, SeriesSet

DT_DEFAULT = 900.0
STEPS_PER_DAY = 96


def standard_schema(p_heat_max: float = 6000.0, p_cool_max: float = 6000.0,
                    solar_hi: float = 1200.0) -> Schema:
    """The canonical five-channel layout every scenario emits."""
    return Schema([
        Channel("P_heat", "u", "W", -1.0, p_heat_max),
        Channel("P_cool", "u", "W", -1.0, p_cool_max),
        Channel("T_amb", "w", "degC", -30.0, 45.0),
        Channel("I_sol", "w", "W/m2", -1.0, solar_hi),
        Channel("T_zone", "y", "degC", 5.0, 40.0),
    ])


@dataclass(frozen=True)
class RcParams:
    """Two-state RC network parameters (SI units)."""

    c_zone: float = 6.0e6       # J/K, zone air + light furnishing
    c_mass: float = 6.5e6       # J/K, walls/floor storage
    r_zone_mass: float = 1.0e-3  # K/W
    r_zone_amb: float = 1.0e-2   # K/W
    solar_aperture: float = 2.0  # m2-equivalent collecting area into the zone
    heater_eff: float = 1.0
    cooler_eff: float = 1.0
    process_sigma: float = 0.0   # K per step, zone state
    measurement_sigma: float = 0.0  # K on the reported zone temperature
    quantize: float = 0.0        # optional output resolution, 0 disables

    def __post_init__(self):
        if min(self.c_zone, self.c_mass, self.r_zone_mass, self.r_zone_amb) <= 0:
            raise ConfigError("capacitances and resistances must be positive")
        if self.process_sigma < 0 or self.measurement_sigma < 0:
            raise ConfigError("noise levels must be non-negative")


def heavy_plant(**overrides) -> RcParams:
    """High-inertia building: big mass, small windows."""
    return replace(RcParams(c_mass=9.5e6, solar_aperture=1.5), **overrides)


def light_plant(**overrides) -> RcParams:
    """Light construction: smaller mass, larger solar aperture."""
    base = RcParams(c_mass=5.0e6, solar_aperture=5.0, r_zone_amb=8.0e-3)
    return replace(base, **overrides)


def continuous_matrices(params: RcParams):
    """(A, B) of dx/dt = A x + B u for x = [T_zone, T_mass],
    u = [P_heat, P_cool, T_amb, I_sol]."""
    cz, cm = params.c_zone, params.c_mass
    g_zm = 1.0 / params.r_zone_mass
    g_za = 1.0 / params.r_zone_amb
    a = np.array([
        [-(g_zm + g_za) / cz, g_zm / cz],
        [g_zm / cm, -g_zm / cm],
    ])
    b = np.array([
        [params.heater_eff / cz, -params.cooler_eff / cz, g_za / cz,
         params.solar_aperture / cz],
        [0.0, 0.0, 0.0, 0.0],
    ])
    return a, b


def discretize(a: np.ndarray, b: np.ndarray, dt: float):
    """Exact zero-order-hold discretization via the block matrix exponential."""
    n, m = b.shape
    block = np.zeros((n + m, n + m))
    block[:n, :n] = a
    block[:n, n:] = b
    phi = expm(block * dt)
    return phi[:n, :n], phi[:n, n:]


def _interp_params(p0: RcParams, p1: RcParams, frac: float) -> RcParams:
    fields = ("c_zone", "c_mass", "r_zone_mass", "r_zone_amb",
              "solar_aperture", "heater_eff", "cooler_eff")
    vals = {f: (1 - frac) * getattr(p0, f) + frac * getattr(p1, f) for f in fields}
    return replace(p0, **vals)


def _transition_sequence(params: RcParams, steps: int, dt: float,
                         params_end: RcParams | None):
    """Per-step (A_d, B_d); with drift, parameters interpolate daily."""
    if params_end is None:
        ad, bd = discretize(*continuous_matrices(params), dt)
        a_seq = np.broadcast_to(ad, (steps, 2, 2)).copy()
        b_seq = np.broadcast_to(bd, (steps, 2, 4)).copy()
        return a_seq, b_seq
    a_seq = np.empty((steps, 2, 2))
    b_seq = np.empty((steps, 2, 4))
    n_days = max(1, int(np.ceil(steps / STEPS_PER_DAY)))
    for day in range(n_days):
        frac = day / max(1, n_days - 1)
        ad, bd = discretize(*continuous_matrices(_interp_params(params, params_end, frac)), dt)
        lo = day * STEPS_PER_DAY
        hi = min(steps, lo + STEPS_PER_DAY)
        a_seq[lo:hi] = ad
        b_seq[lo:hi] = bd
    return a_seq, b_seq


def simulate_rc(params: RcParams, weather, u_schedule, dt: float = DT_DEFAULT,
                steps: int | None = None, seed: int = 0, t0: float = 0.0,
                x0=None, params_end: RcParams | None = None) -> SeriesSet:
    """Simulate the plant open loop and emit the standard five-channel record.

    weather = (t_amb, i_sol) and u_schedule = (p_heat, p_cool) must cover
    `steps` samples.  Discretization is the exact matrix exponential per
    step; process noise (zone state) and measurement noise are Gaussian
    with the configured sigmas.  params_end, when given, drifts the
    physical parameters linearly (per day) over the simulated span.
    """
    t_amb = np.asarray(weather[0], dtype=float)
    i_sol = np.asarray(weather[1], dtype=float)
    p_heat = np.asarray(u_schedule[0], dtype=float)
    p_cool = np.asarray(u_schedule[1], dtype=float)
    if steps is None:
        steps = len(t_amb)
    for name, arr in (("t_amb", t_amb), ("i_sol", i_sol),
                      ("p_heat", p_heat), ("p_cool", p_cool)):
        if len(arr) < steps:
            raise ShapeError(f"{name} covers {len(arr)} steps, need {steps}")
        if not np.isfinite(arr[:steps]).all():
            raise ShapeError(f"{name} contains non-finite values")
    t_amb, i_sol = t_amb[:steps], i_sol[:steps]
    p_heat, p_cool = p_heat[:steps], p_cool[:steps]

    a_seq, b_seq = _transition_sequence(params, steps, dt, params_end)
    rng = np.random.default_rng(seed)
    w_noise = np.zeros((steps, 2))
    if params.process_sigma > 0:
        w_noise[:, 0] = rng.normal(0.0, params.process_sigma, steps)
    if x0 is None:
        x0 = np.array([t_amb[0] + 8.0, t_amb[0] + 8.0])
    x0 = np.asarray(x0, dtype=float)

    u_mat = np.column_stack([p_heat, p_cool, t_amb, i_sol])
    states = np.empty((steps, 2))
    accel.plant_loop(a_seq, b_seq, u_mat, x0, w_noise, states)

    y = states[:, 0].copy()
    if params.measurement_sigma > 0:
        y += rng.normal(0.0, params.measurement_sigma, steps)
    if params.quantize > 0:
        y = np.round(y / params.quantize) * params.quantize

    values = np.vstack([p_heat, p_cool, t_amb, i_sol, y])
    schema = standard_schema(
        p_heat_max=max(6000.0, float(p_heat.max()) * 2 + 1),
        p_cool_max=max(6000.0, float(p_cool.max()) * 2 + 1),
        solar_hi=max(1200.0, float(i_sol.max()) * 2 + 1),
    )
    return SeriesSet(schema, t0, dt, values)


@dataclass(frozen=True)
class WeatherParams:
    mean_temp: float = 11.0
    annual_amp: float = 9.0
    diurnal_amp: float = 4.0
    noise_sigma: float = 0.5
    noise_phi: float = 0.97
    solar_peak_summer: float = 550.0
    solar_peak_winter: float = 180.0
    cloud_phi: float = 0.995
    cloud_sigma: float = 0.05


def gen_weather(days: float, params: WeatherParams = WeatherParams(),
                seed: int = 0, dt: float = DT_DEFAULT):
    """Seasonal + diurnal weather with AR(1) temperature noise and a
    cloud-modulated clear-sky solar curve.  Deterministic per seed."""
    if days < 1:
        raise ConfigError("need at least one day")
    steps = int(round(days * 86400.0 / dt))
    rng = np.random.default_rng(seed)
    t = np.arange(steps) * dt
    day_frac = t / 86400.0
    hour = (day_frac % 1.0) * 24.0

    annual = params.annual_amp * np.sin(2 * np.pi * (day_frac - 105.0) / 365.0)
    diurnal = params.diurnal_amp * np.sin(2 * np.pi * (hour - 9.0) / 24.0)
    ar = np.empty(steps)
    eps = rng.normal(0.0, params.noise_sigma, steps)
    acc = 0.0
    scale = np.sqrt(1 - params.noise_phi ** 2)
    for k in range(steps):
        acc = params.noise_phi * acc + scale * eps[k]
        ar[k] = acc
    t_amb = params.mean_temp + annual + diurnal + ar

    season = 0.5 * (1 - np.cos(2 * np.pi * (day_frac - 15.0) / 365.0))
    peak = params.solar_peak_winter + (params.solar_peak_summer
                                       - params.solar_peak_winter) * season
    daylen = 8.0 + 8.0 * season
    sunrise = 12.0 - daylen / 2
    elev = np.sin(np.pi * np.clip((hour - sunrise) / daylen, 0.0, 1.0))
    cloud_ar = np.empty(steps)
    ceps = rng.normal(0.0, params.cloud_sigma, steps)
    acc = 0.0
    cscale = np.sqrt(1 - params.cloud_phi ** 2)
    for k in range(steps):
        acc = params.cloud_phi * acc + cscale * ceps[k]
        cloud_ar[k] = acc
    cloud = np.clip(0.7 + 3.0 * cloud_ar, 0.0, 1.0)
    i_sol = np.maximum(0.0, peak * elev * cloud)
    return t_amb, i_sol


@dataclass(frozen=True)
class DistortionParams:
    """Randomized-sine forecast distortion, ramping over a 24 h horizon."""

    temp_amplitude: float = 4.0   # K, additive cap
    solar_amplitude: float = 0.15  # relative, multiplicative cap
    freq_lo: float = 0.5 * np.pi / 12.0  # rad per hour
    freq_hi: float = 1.5 * np.pi / 12.0


def distort_forecast(t_amb: np.ndarray, i_sol: np.ndarray, seed,
                     params: DistortionParams = DistortionParams(),
                     dt: float = DT_DEFAULT):
    """Apply the ramped randomized-sine distortion to a 24 h forecast.

    The temperature channel gets an additive term growing linearly from 0
    to at most +-4 K across the horizon; the solar channel is scaled by
    1 + 0.15 (t/24) sin(a t + b).  (a, b) are drawn independently per
    channel from U(0.5 pi/12, 1.5 pi/12) x U(-pi, pi); t is the hour
    since the forecast start, so the first step is undistorted.
    """
    t_amb = np.asarray(t_amb, dtype=float)
    i_sol = np.asarray(i_sol, dtype=float)
    horizon = len(t_amb)
    if len(i_sol) != horizon:
        raise ShapeError("weather channels disagree on horizon length")
    if horizon * dt > 86400.0 + 1e-6:
        raise ConfigError("distortion is defined for horizons up to 24 h")
    rng = np.random.default_rng(seed)
    t_hours = np.arange(horizon) * dt / 3600.0
    ramp = t_hours / 24.0

    a_t = rng.uniform(params.freq_lo, params.freq_hi)
    b_t = rng.uniform(-np.pi, np.pi)
    a_s = rng.uniform(params.freq_lo, params.freq_hi)
    b_s = rng.uniform(-np.pi, np.pi)

    temp_out = t_amb + params.temp_amplitude * ramp * np.sin(a_t * t_hours + b_t)
    scale = 1.0 + params.solar_amplitude * ramp * np.sin(a_s * t_hours + b_s)
    return temp_out, i_sol * scale


@dataclass(frozen=True)
class ScenarioConfig:
    """Closed-loop data-generation scenario.

    A thermostat (proportional heating below a scheduled setpoint,
    proportional cooling above a fixed one) drives the plant through
    generated weather; the record therefore contains no artificial
    excitation, only regular operation.  ``drift`` scales a slow linear
    change of envelope parameters across the span (for time-varying-plant
    studies); ``missing_fraction`` injects whole-step gap bursts.
    """

    days: float = 365.0
    dt: float = DT_DEFAULT
    plant: str = "heavy"  # "heavy" or "light"
    weather: WeatherParams = WeatherParams()
    process_sigma: float = 0.02
    measurement_sigma: float = 0.05
    quantize: float = 0.0
    control: str = "thermostat"  # or "heating_curve" (no room feedback)
    cooling: bool = True
    heat_setpoint_day: float = 21.0
    heat_setpoint_night: float = 19.0
    cool_setpoint: float = 26.0
    heat_gain: float = 1000.0  # W per K of setpoint shortfall
    cool_gain: float = 1000.0
    curve_base: float = 21.0   # heating-curve mode: P = gain*(base - T_amb_avg)
    curve_gain: float = 100.0  # W/K, sized to the envelope loss coefficient
    p_heat_max: float = 6000.0
    p_cool_max: float = 5000.0
    missing_fraction: float = 0.0
    mean_gap_len: float = 8.0
    drift: float = 0.0
    start_day_of_year: float = 0.0  # phase of the weather seasons at t0
    t0: float = 1577836800.0  # 2020-01-01T00:00Z

    def __post_init__(self):
        if self.control not in ("thermostat", "heating_curve"):
            raise ConfigError(f"unknown control mode {self.control!r}")
        if self.control == "heating_curve" and self.cooling:
            raise ConfigError(
                "heating_curve control is heating-only; set cooling=False"
            )

    def plant_params(self) -> RcParams:
        base = heavy_plant() if self.plant == "heavy" else light_plant()
        if self.plant not in ("heavy", "light"):
            raise ConfigError(f"unknown plant variant {self.plant!r}")
        return replace(base, process_sigma=self.process_sigma,
                       measurement_sigma=self.measurement_sigma,
                       quantize=self.quantize)

    def drifted_params(self, params: RcParams) -> RcParams | None:
        if self.drift == 0.0:
            return None
        return replace(
            params,
            r_zone_amb=params.r_zone_amb * (1.0 - self.drift),
            c_mass=params.c_mass * (1.0 + self.drift),
            solar_aperture=params.solar_aperture * (1.0 + self.drift),
        )

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        out["weather"] = {k: getattr(self.weather, k)
                          for k in self.weather.__dataclass_fields__}
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        if "weather" in d and isinstance(d["weather"], dict):
            d["weather"] = WeatherParams(**d["weather"])
        return cls(**d)


def build_scenario(cfg: ScenarioConfig, seed: int = 0):
    """Generate one synthetic record; returns (SeriesSet, sidecar dict).

    Weather, noise, thermostat action and gap placement all derive from
    the single seed, so reruns are bitwise identical.
    """
    steps = int(round(cfg.days * 86400.0 / cfg.dt))
    rng_root = np.random.default_rng([seed, 2024])
    weather_seed, noise_seed, gap_seed = rng_root.integers(0, 2**31, 3)

    wp = cfg.weather
    if cfg.start_day_of_year:
        # rotate the seasonal phase so the record can start anywhere in the year
        shift = int(round(cfg.start_day_of_year * 86400.0 / cfg.dt))
        year = int(round(365 * 86400.0 / cfg.dt))
        full_t, full_s = gen_weather(cfg.days + 365.0, wp, seed=int(weather_seed), dt=cfg.dt)
        t_amb = full_t[shift % year:][:steps]
        i_sol = full_s[shift % year:][:steps]
    else:
        t_amb, i_sol = gen_weather(cfg.days, wp, seed=int(weather_seed), dt=cfg.dt)

    params = cfg.plant_params()
    params_end = cfg.drifted_params(params)
    a_seq, b_seq = _transition_sequence(params, steps, cfg.dt, params_end)

    rng = np.random.default_rng(int(noise_seed))
    w_noise = np.zeros((steps, 2))
    if params.process_sigma > 0:
        w_noise[:, 0] = rng.normal(0.0, params.process_sigma, steps)
    v_noise = (rng.normal(0.0, params.measurement_sigma, steps)
               if params.measurement_sigma > 0 else np.zeros(steps))

    x0 = np.array([cfg.heat_setpoint_day, cfg.heat_setpoint_day])
    states = np.empty((steps, 2))
    if cfg.control == "thermostat":
        hours = (np.arange(steps) * cfg.dt / 3600.0) % 24.0
        daytime = (hours >= 6.0) & (hours < 22.0)
        heat_set = np.where(daytime, cfg.heat_setpoint_day, cfg.heat_setpoint_night)
        cool_set = np.full(steps, cfg.cool_setpoint if cfg.cooling else 1e9)
        u_out = np.empty((steps, 2))
        accel.thermostat_loop(
            a_seq, b_seq, x0, t_amb, i_sol, w_noise, v_noise,
            heat_set, cool_set, cfg.heat_gain,
            cfg.cool_gain if cfg.cooling else 0.0,
            cfg.p_heat_max, cfg.p_cool_max, states, u_out,
        )
    elif cfg.control == "heating_curve":
        # weather-compensated feedforward heating, no room feedback:
        # P = gain * (base - 6 h averaged ambient), clipped to the actuator
        span = max(1, int(round(6 * 3600.0 / cfg.dt)))
        kernel = np.ones(span) / span
        padded = np.concatenate([np.full(span - 1, t_amb[0]), t_amb])
        t_avg = np.convolve(padded, kernel, mode="valid")
        p_heat = np.clip(cfg.curve_gain * (cfg.curve_base - t_avg),
                         0.0, cfg.p_heat_max)
        u_out = np.column_stack([p_heat, np.zeros(steps)])
        u_mat = np.column_stack([p_heat, np.zeros(steps), t_amb, i_sol])
        accel.plant_loop(a_seq, b_seq, u_mat, x0, w_noise, states)
    else:
        raise ConfigError(f"unknown control mode {cfg.control!r}")
    y = states[:, 0] + v_noise
    if params.quantize > 0:
        y = np.round(y / params.quantize) * params.quantize

    if cfg.cooling:
        schema = standard_schema(cfg.p_heat_max + 1, cfg.p_cool_max + 1,
                                 max(1200.0, float(i_sol.max()) + 1))
        values = np.vstack([u_out[:, 0], u_out[:, 1], t_amb, i_sol, y])
    else:
        schema = Schema([
            Channel("P_heat", "u", "W", -1.0, cfg.p_heat_max + 1),
            Channel("T_amb", "w", "degC", -30.0, 45.0),
            Channel("I_sol", "w", "W/m2", -1.0, max(1200.0, float(i_sol.max()) + 1)),
            Channel("T_zone", "y", "degC", 5.0, 40.0),
        ])
        values = np.vstack([u_out[:, 0], t_amb, i_sol, y])

    series = SeriesSet(schema, cfg.t0, cfg.dt, values)
    if cfg.missing_fraction > 0:
        series = inject_gaps(series, cfg.missing_fraction, cfg.mean_gap_len,
                             seed=int(gap_seed))
    sidecar = {
        "scenario": cfg.to_dict(),
        "seed": seed,
        "steps": steps,
        "gap_fraction": series.gap_fraction(),
    }
    return series, sidecar


def inject_gaps(series: SeriesSet, missing_fraction: float,
                mean_gap_len: float = 8.0, seed: int = 0) -> SeriesSet:
    """Blank whole time steps in geometric-length bursts until the target
    missing share is reached (exactly, the last burst is trimmed)."""
    if not 0 <= missing_fraction < 1:
        raise ConfigError("missing fraction must lie in [0, 1)")
    if missing_fraction == 0:
        return series
    if mean_gap_len < 1:
        raise ConfigError("mean gap length must be at least 1")
    n = series.n_steps
    target = int(round(missing_fraction * n))
    rng = np.random.default_rng(seed)
    gapped = np.zeros(n, dtype=bool)
    count = 0
    while count < target:
        start = int(rng.integers(0, n))
        length = int(rng.geometric(1.0 / mean_gap_len))
        stop = min(n, start + length)
        burst = np.flatnonzero(~gapped[start:stop])
        take = burst[:target - count]
        gapped[start + take] = True
        count += len(take)
    values = series.values.copy()
    values[:, gapped] = np.nan
    return series.replace_values(values)
