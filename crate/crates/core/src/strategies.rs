//! Station policies: the honest controller and the selfish families.

use crate::control::{
    control_to_probability, error_signal, probability_to_control, ControllerState, Gains,
    PunishmentParams, MAX_PROBABILITY,
};
use crate::error::{Error, Result};

/// Default upper hysteresis fraction of the adaptive attackers.
pub const DEFAULT_HYSTERESIS_LOW: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StrategyKind {
    Doc,
    Fixed,
    AdaptiveP,
    AdaptiveThreshold,
    AdaptiveBoth,
}

impl StrategyKind {
    pub fn is_adaptive(self) -> bool {
        matches!(
            self,
            StrategyKind::AdaptiveP | StrategyKind::AdaptiveThreshold | StrategyKind::AdaptiveBoth
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Doc => "doc",
            StrategyKind::Fixed => "fixed",
            StrategyKind::AdaptiveP => "adaptive-p",
            StrategyKind::AdaptiveThreshold => "adaptive-threshold",
            StrategyKind::AdaptiveBoth => "adaptive-both",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        [
            StrategyKind::Doc,
            StrategyKind::Fixed,
            StrategyKind::AdaptiveP,
            StrategyKind::AdaptiveThreshold,
            StrategyKind::AdaptiveBoth,
        ]
        .into_iter()
        .find(|k| k.name() == name)
    }
}

/// A station's policy with every reference value resolved to absolute units.
#[derive(Debug, Clone, PartialEq)]
pub struct Strategy {
    pub kind: StrategyKind,
    pub fixed_p: f64,
    /// Bits/s.
    pub fixed_threshold: f64,
    /// All-honest throughput `r*` of this station, bits/s (adaptive kinds).
    pub reference_rate: f64,
    pub hysteresis_low: f64,
    /// The station runs the honest controller before this interval.
    pub from_interval: u64,
}

impl Strategy {
    pub fn doc() -> Self {
        Self {
            kind: StrategyKind::Doc,
            fixed_p: 0.0,
            fixed_threshold: 0.0,
            reference_rate: 0.0,
            hysteresis_low: DEFAULT_HYSTERESIS_LOW,
            from_interval: 0,
        }
    }

    pub fn fixed(p: f64, threshold: f64) -> Self {
        Self {
            kind: StrategyKind::Fixed,
            fixed_p: p,
            fixed_threshold: threshold,
            ..Self::doc()
        }
    }

    pub fn adaptive(kind: StrategyKind, reference_rate: f64) -> Self {
        Self {
            kind,
            reference_rate,
            ..Self::doc()
        }
    }

    pub fn starting_at(mut self, interval: u64) -> Self {
        self.from_interval = interval;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == StrategyKind::Fixed {
            if !(0.0..=1.0).contains(&self.fixed_p) {
                return Err(Error::InvalidParams(format!(
                    "fixed access probability {} outside [0, 1]",
                    self.fixed_p
                )));
            }
            if !(self.fixed_threshold >= 0.0) {
                return Err(Error::InvalidParams("fixed threshold must be non-negative".into()));
            }
        }
        if self.kind.is_adaptive() {
            if !(self.reference_rate > 0.0 && self.reference_rate.is_finite()) {
                return Err(Error::InvalidParams(format!(
                    "{} needs a positive reference rate",
                    self.kind.name()
                )));
            }
            if !(self.hysteresis_low > 0.0 && self.hysteresis_low <= 1.0) {
                return Err(Error::InvalidParams(format!(
                    "hysteresis fraction {} outside (0, 1]",
                    self.hysteresis_low
                )));
            }
        }
        Ok(())
    }
}

/// Honest configuration `(p*, R̄*)` of a station.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HonestConfig {
    pub p: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdaptivePhase {
    Selfish,
    Honest,
}

/// Two-state attacker: selfish while it pays, honest once throughput falls
/// below the reference, selfish again above `hysteresis_low` of it.
pub fn next_phase(strategy: &Strategy, phase: AdaptivePhase, last_throughput: f64) -> AdaptivePhase {
    let r = strategy.reference_rate;
    match phase {
        AdaptivePhase::Selfish if last_throughput < r => AdaptivePhase::Honest,
        AdaptivePhase::Honest if last_throughput > strategy.hysteresis_low * r => {
            AdaptivePhase::Selfish
        }
        other => other,
    }
}

/// Configuration `(p, R̄)` played in a phase.
pub fn phase_config(kind: StrategyKind, phase: AdaptivePhase, honest: HonestConfig) -> (f64, f64) {
    match (phase, kind) {
        (AdaptivePhase::Honest, _) => (honest.p, honest.threshold),
        (AdaptivePhase::Selfish, StrategyKind::AdaptiveP) => (1.0, honest.threshold),
        (AdaptivePhase::Selfish, StrategyKind::AdaptiveThreshold) => (honest.p, 0.0),
        (AdaptivePhase::Selfish, _) => (1.0, 0.0),
    }
}

/// One step of the adaptive attacker: the new phase and its `(p, R̄)`.
pub fn adaptive_selfish_policy(
    strategy: &Strategy,
    phase: AdaptivePhase,
    last_throughput: f64,
    honest: HonestConfig,
) -> (AdaptivePhase, f64, f64) {
    let phase = next_phase(strategy, phase, last_throughput);
    let (p, x) = phase_config(strategy.kind, phase, honest);
    (phase, p, x)
}

/// Result of one honest controller step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DocStep {
    pub p: f64,
    pub error: f64,
    pub punishment: f64,
}

/// Honest station state: its PI controller and fixed threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct DocPolicy {
    pub controller: ControllerState,
    pub threshold: f64,
    pub p: f64,
    /// Multiplies the punishment term; 1 is the designed controller.
    pub punishment_scale: f64,
}

impl DocPolicy {
    /// Starts at access probability `p0` given the station's hold time.
    pub fn new(threshold: f64, hold_time: f64, gains: Gains, p0: f64) -> Result<Self> {
        let max = probability_to_control(MAX_PROBABILITY, hold_time)?;
        let initial = probability_to_control(p0.min(MAX_PROBABILITY), hold_time)?;
        Ok(Self {
            controller: ControllerState::new(gains, initial, max)?,
            threshold,
            p: p0.min(MAX_PROBABILITY),
            punishment_scale: 1.0,
        })
    }

    pub fn step(
        &mut self,
        times: &[f64],
        own: usize,
        punish: &PunishmentParams,
        gains: Gains,
        hold_time: f64,
    ) -> DocStep {
        let step = doc_policy(
            times,
            own,
            &mut self.controller,
            self.p,
            punish,
            gains,
            hold_time,
            self.punishment_scale,
        );
        self.p = step.p;
        step
    }
}

/// Measured channel times → error signal → retuned PI step → new access probability.
#[allow(clippy::too_many_arguments)]
pub fn doc_policy(
    times: &[f64],
    own: usize,
    state: &mut ControllerState,
    p: f64,
    punish: &PunishmentParams,
    gains: Gains,
    hold_time: f64,
    punishment_scale: f64,
) -> DocStep {
    let (unscaled, full) = error_signal(times, own, p, punish);
    let punishment = full * punishment_scale;
    let error = unscaled + full - punishment;
    state.retune(gains);
    state.update(error);
    DocStep {
        p: control_to_probability(state.control, hold_time).min(MAX_PROBABILITY),
        error,
        punishment,
    }
}

/// Cartesian product of fixed strategies, duplicates removed.
pub fn fixed_attack_grid(p_grid: &[f64], threshold_grid: &[f64]) -> Result<Vec<Strategy>> {
    if p_grid.is_empty() || threshold_grid.is_empty() {
        return Err(Error::InvalidParams("attack grids must be nonempty".into()));
    }
    let ps = sorted_unique(p_grid);
    let xs = sorted_unique(threshold_grid);
    let mut out = Vec::with_capacity(ps.len() * xs.len());
    for &p in &ps {
        for &x in &xs {
            let s = Strategy::fixed(p, x);
            s.validate()?;
            out.push(s);
        }
    }
    Ok(out)
}

fn sorted_unique(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// `{0.05, 0.10, ..., 1.0}`.
pub fn default_p_grid() -> Vec<f64> {
    (1..=20).map(|k| k as f64 * 0.05).collect()
}

/// `{0, 0.25, ..., 2.0}` as multiples of the honest threshold.
pub fn default_threshold_scales() -> Vec<f64> {
    (0..=8).map(|k| k as f64 * 0.25).collect()
}

/// The default 180-point grid for an attacker with honest threshold `threshold`.
pub fn default_attack_grid(threshold: f64) -> Vec<Strategy> {
    let xs: Vec<f64> = default_threshold_scales().iter().map(|s| s * threshold).collect();
    fixed_attack_grid(&default_p_grid(), &xs).expect("default grids are valid")
}
