//! Per-station controller: the control-signal/probability mapping, the error
//! signal with its punishment term, the saturating PI update and gain tuning.
//!
//! Control signals and errors are in mini-slots.

use crate::analytic::ACCESS_OVERHEAD;
use crate::error::{Error, Result};

/// Largest access probability the controller may command.
pub const MAX_PROBABILITY: f64 = 0.999;

/// Access probability used when a controller starts (or a station joins).
pub const INITIAL_PROBABILITY: f64 = 0.5;

/// Ziegler–Nichols fraction of the ultimate gain.
const ZN_PROPORTIONAL: f64 = 0.4;
/// Ziegler–Nichols integral divisor.
const ZN_INTEGRAL: f64 = 0.85;
/// Oscillation period at the ultimate gain, in intervals.
const ULTIMATE_PERIOD: f64 = 2.0;

/// `p = P / (T + (e - 1) tau + P)`.
pub fn control_to_probability(control: f64, hold_time: f64) -> f64 {
    let control = control.max(0.0);
    control / (hold_time + ACCESS_OVERHEAD + control)
}

/// `P = p / (1 - p) (T + (e - 1) tau)`.
pub fn probability_to_control(p: f64, hold_time: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidParams(format!(
            "access probability must lie in [0, 1), got {p}"
        )));
    }
    Ok(p / (1.0 - p) * (hold_time + ACCESS_OVERHEAD))
}

/// What a station needs to evaluate its punishment term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PunishmentParams {
    pub stations: usize,
    /// `t* = T_total / N`.
    pub optimal_time: f64,
    /// This station's component of the deficit-minimizing probabilities.
    pub p_min: f64,
    /// Deficit at `p_min` (non-positive).
    pub delta: f64,
}

/// `D = N t* - sum_j t_j`.
pub fn deficit(times: &[f64], params: &PunishmentParams) -> f64 {
    params.stations as f64 * params.optimal_time - times.iter().sum::<f64>()
}

pub fn punishment(times: &[f64], p: f64, params: &PunishmentParams) -> f64 {
    let n = params.stations as f64;
    let d = deficit(times, params);
    let steep = (n - 1.0) * d;
    if p > params.p_min {
        steep.min(d / n)
    } else {
        steep.min(-d / n).min((n - 1.0) * params.delta)
    }
}

/// Error signal and the punishment term it includes, `(E_i, F_i)`.
pub fn error_signal(times: &[f64], own: usize, p: f64, params: &PunishmentParams) -> (f64, f64) {
    let mine = times[own];
    let spread: f64 = times
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != own)
        .map(|(_, t)| t - mine)
        .sum();
    let f = punishment(times, p, params);
    (spread - f, f)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gains {
    pub kp: f64,
    pub ki: f64,
}

impl Gains {
    pub fn scaled(self, factor: f64) -> Self {
        Self {
            kp: self.kp * factor,
            ki: self.ki * factor,
        }
    }
}

/// Ziegler–Nichols gains for the linearized network gain `K_H`.
pub fn tune_gains(stations: usize, kh: f64) -> Gains {
    let ultimate = 1.0 / (2.0 * stations as f64 * kh);
    let kp = ZN_PROPORTIONAL * ultimate;
    Gains {
        kp,
        ki: kp / (ZN_INTEGRAL * ULTIMATE_PERIOD),
    }
}

/// Sufficient stability region of the linearized closed loop.
pub fn stability_check(kp: f64, ki: f64, stations: usize, kh: f64) -> bool {
    let margin = 1.0 / (stations as f64 * kh);
    ki < kp + margin && ki > 2.0 * kp - margin
}

/// `K_H = T_total / sum_j P_j`.
pub fn estimate_kh(control_sum: f64, interval: f64) -> f64 {
    interval / control_sum
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerState {
    pub kp: f64,
    pub ki: f64,
    /// Accumulated error, mini-slots.
    pub error_sum: f64,
    pub control: f64,
    pub initial: f64,
    pub max: f64,
}

impl ControllerState {
    pub fn new(gains: Gains, initial: f64, max: f64) -> Result<Self> {
        if !(gains.kp > 0.0 && gains.ki > 0.0) {
            return Err(Error::InvalidParams(format!(
                "controller gains must be positive, got {gains:?}"
            )));
        }
        if !(0.0..=max).contains(&initial) {
            return Err(Error::InvalidParams(format!(
                "initial control {initial} outside [0, {max}]"
            )));
        }
        Ok(Self {
            kp: gains.kp,
            ki: gains.ki,
            error_sum: 0.0,
            control: initial,
            initial,
            max,
        })
    }

    /// Replaces the gains, rescaling the accumulated error so the integral
    /// contribution `ki * error_sum` is unchanged.
    pub fn retune(&mut self, gains: Gains) {
        if self.ki > 0.0 && gains.ki > 0.0 {
            self.error_sum *= self.ki / gains.ki;
        }
        self.kp = gains.kp;
        self.ki = gains.ki;
    }

    pub fn update(&mut self, error: f64) {
        *self = pi_update(self, error);
    }
}

/// Position-form PI step with output clamping and conditional integration.
pub fn pi_update(state: &ControllerState, error: f64) -> ControllerState {
    let advanced = state.error_sum + error;
    let raw = state.initial + state.kp * error + state.ki * advanced;
    let deepens = (raw > state.max && error > 0.0) || (raw < 0.0 && error < 0.0);
    let error_sum = if deepens { state.error_sum } else { advanced };
    let control = (state.initial + state.kp * error + state.ki * error_sum).clamp(0.0, state.max);
    ControllerState {
        error_sum,
        control,
        ..*state
    }
}
