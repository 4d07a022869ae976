//! Per-station channel models: instantaneous rate sampling and the analytic
//! tail functionals used by the configuration solvers.
//!
//! Rates are in bits/s. Time is measured in mini-slots.

use std::f64::consts::{LN_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::quad;

/// Oscillator count of the sum-of-sinusoids fading synthesizer.
pub const JAKES_OSCILLATORS: usize = 16;

/// Rates allowed in the discrete-rate experiments, in Mbps.
pub const DEFAULT_RATE_TABLE_MBPS: [f64; 7] = [1.0, 2.0, 5.5, 12.0, 24.0, 48.0, 54.0];

const QUAD_REL_TOL: f64 = 1e-8;
// Integration window in the fading-power variable; the integrand decays like e^-g.
const GAIN_WINDOW: f64 = 40.0;

#[derive(Debug, Clone, PartialEq)]
pub enum RateKind {
    /// Independent Rayleigh draws per observation, Shannon rate.
    IidRayleigh,
    /// Time-correlated Rayleigh fading; `doppler` in radians per mini-slot.
    JakesRayleigh { doppler: f64 },
    /// Shannon rate of i.i.d. Rayleigh floored to the largest table entry strictly below it.
    DiscreteMapped { table: Vec<f64> },
    /// Deterministic channel, mostly useful as a closed-form reference.
    Constant { rate: f64 },
}

/// Immutable description of a station's rate distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct RateModel {
    kind: RateKind,
    bandwidth: f64,
    rho: f64,
}

impl RateModel {
    pub fn iid_rayleigh(bandwidth: f64, rho: f64) -> Result<Self> {
        Self::check_link(bandwidth, rho)?;
        Ok(Self {
            kind: RateKind::IidRayleigh,
            bandwidth,
            rho,
        })
    }

    pub fn jakes_rayleigh(bandwidth: f64, rho: f64, doppler: f64) -> Result<Self> {
        Self::check_link(bandwidth, rho)?;
        if !(doppler.is_finite() && doppler > 0.0) {
            return Err(Error::InvalidModel(format!(
                "doppler must be positive, got {doppler}"
            )));
        }
        Ok(Self {
            kind: RateKind::JakesRayleigh { doppler },
            bandwidth,
            rho,
        })
    }

    pub fn discrete_mapped(bandwidth: f64, rho: f64, table: Vec<f64>) -> Result<Self> {
        Self::check_link(bandwidth, rho)?;
        if table.is_empty() {
            return Err(Error::InvalidModel("rate table is empty".into()));
        }
        if table[0] <= 0.0 || !table.iter().all(|r| r.is_finite()) {
            return Err(Error::InvalidModel("rate table entries must be positive".into()));
        }
        if table.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidModel(
                "rate table must be strictly ascending".into(),
            ));
        }
        Ok(Self {
            kind: RateKind::DiscreteMapped { table },
            bandwidth,
            rho,
        })
    }

    pub fn constant(rate: f64) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::InvalidModel(format!(
                "constant rate must be positive, got {rate}"
            )));
        }
        Ok(Self {
            kind: RateKind::Constant { rate },
            bandwidth: rate,
            rho: 1.0,
        })
    }

    fn check_link(bandwidth: f64, rho: f64) -> Result<()> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(Error::InvalidModel(format!(
                "bandwidth must be positive, got {bandwidth}"
            )));
        }
        if !(rho.is_finite() && rho > 0.0) {
            return Err(Error::InvalidModel(format!(
                "mean SNR must be positive, got {rho}"
            )));
        }
        Ok(())
    }

    pub fn kind(&self) -> &RateKind {
        &self.kind
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// `W log2(1 + rho |h|^2)`.
    pub fn shannon_rate(&self, power_gain: f64) -> f64 {
        self.bandwidth * (self.rho * power_gain).ln_1p() / LN_2
    }

    /// Floors a Shannon rate onto the rate table; identity for continuous models.
    pub fn quantize(&self, rate: f64) -> f64 {
        match &self.kind {
            RateKind::DiscreteMapped { table } => {
                let below = table.partition_point(|&r| r < rate);
                if below == 0 {
                    0.0
                } else {
                    table[below - 1]
                }
            }
            _ => rate,
        }
    }

    /// `P(S > x)` for the underlying Shannon rate S.
    fn shannon_tail(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        (-(x * LN_2 / self.bandwidth).exp_m1() / self.rho).exp()
    }

    /// Fading power at which the Shannon rate equals `x`.
    fn gain_at(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            (x * LN_2 / self.bandwidth).exp_m1() / self.rho
        }
    }

    /// `E[S 1{S >= x}]` for the continuous Shannon rate, by substituting
    /// `S = W log2(1 + rho g)` with `g ~ Exp(1)`.
    fn shannon_censored_mean(&self, x: f64) -> f64 {
        let g0 = self.gain_at(x);
        let weight = (-g0).exp();
        if weight == 0.0 {
            return 0.0;
        }
        let f = |u: f64| self.shannon_rate(g0 + u) * (-u).exp();
        let mut total = 0.0;
        // Break points keep the first Kronrod pass from stepping over the mass.
        let cuts = [0.0, 0.25, 1.0, 4.0, 12.0, GAIN_WINDOW];
        for w in cuts.windows(2) {
            total += quad::integrate(f, w[0], w[1], QUAD_REL_TOL);
        }
        // Tail beyond the window is bounded by e^-40 * S(g0 + 41); include it as a one-term estimate.
        total += (-GAIN_WINDOW).exp() * self.shannon_rate(g0 + GAIN_WINDOW + 1.0);
        weight * total
    }

    /// Probability mass of each discrete table entry (and of the zero rate).
    pub fn bin_masses(&self) -> Option<(f64, Vec<f64>)> {
        let RateKind::DiscreteMapped { table } = &self.kind else {
            return None;
        };
        let upper: Vec<f64> = table.iter().map(|&r| self.shannon_tail(r)).collect();
        let masses = (0..table.len())
            .map(|k| upper[k] - upper.get(k + 1).copied().unwrap_or(0.0))
            .collect();
        Some((1.0 - upper[0], masses))
    }

    /// `P(R >= threshold)` under the stationary distribution.
    pub fn tail_prob(&self, threshold: f64) -> f64 {
        if threshold <= 0.0 {
            return 1.0;
        }
        match &self.kind {
            RateKind::IidRayleigh | RateKind::JakesRayleigh { .. } => self.shannon_tail(threshold),
            RateKind::DiscreteMapped { table } => {
                let (_, masses) = self.bin_masses().expect("discrete model");
                let first = table.partition_point(|&r| r < threshold);
                masses[first..].iter().sum()
            }
            RateKind::Constant { rate } => {
                if *rate >= threshold {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `E[R 1{R >= threshold}]` in bits/s.
    pub fn censored_mean(&self, threshold: f64) -> f64 {
        let threshold = threshold.max(0.0);
        match &self.kind {
            RateKind::IidRayleigh | RateKind::JakesRayleigh { .. } => {
                self.shannon_censored_mean(threshold)
            }
            RateKind::DiscreteMapped { table } => {
                let (_, masses) = self.bin_masses().expect("discrete model");
                let first = table.partition_point(|&r| r < threshold);
                table[first..]
                    .iter()
                    .zip(&masses[first..])
                    .map(|(r, m)| r * m)
                    .sum()
            }
            RateKind::Constant { rate } => {
                if *rate >= threshold {
                    *rate
                } else {
                    0.0
                }
            }
        }
    }

    /// `E[(R - threshold)^+]`.
    pub fn excess_mean(&self, threshold: f64) -> f64 {
        let threshold = threshold.max(0.0);
        match &self.kind {
            RateKind::Constant { rate } => (rate - threshold).max(0.0),
            _ => {
                let v = self.censored_mean(threshold) - threshold * self.tail_prob(threshold);
                v.max(0.0)
            }
        }
    }

    pub fn mean_rate(&self) -> f64 {
        self.censored_mean(0.0)
    }
}

/// Sum-of-sinusoids Rayleigh fading process for one station.
#[derive(Debug, Clone)]
pub struct JakesProcess {
    doppler: f64,
    cos_aoa: [f64; JAKES_OSCILLATORS],
    phase: [f64; JAKES_OSCILLATORS],
}

impl JakesProcess {
    pub fn new<R: Rng>(doppler: f64, rng: &mut R) -> Self {
        let offset: f64 = rng.random::<f64>() * 2.0 * PI;
        let mut cos_aoa = [0.0; JAKES_OSCILLATORS];
        let mut phase = [0.0; JAKES_OSCILLATORS];
        for n in 0..JAKES_OSCILLATORS {
            let aoa = (2.0 * PI * n as f64 + offset) / JAKES_OSCILLATORS as f64;
            cos_aoa[n] = aoa.cos();
            phase[n] = rng.random::<f64>() * 2.0 * PI;
        }
        Self {
            doppler,
            cos_aoa,
            phase,
        }
    }

    /// Complex gain `h(t)` with `E|h|^2 = 1`.
    pub fn gain(&self, t: f64) -> (f64, f64) {
        let (mut re, mut im) = (0.0, 0.0);
        for n in 0..JAKES_OSCILLATORS {
            let (s, c) = (self.doppler * t * self.cos_aoa[n] + self.phase[n]).sin_cos();
            re += c;
            im += s;
        }
        let norm = (JAKES_OSCILLATORS as f64).sqrt().recip();
        (re * norm, im * norm)
    }

    pub fn power_gain(&self, t: f64) -> f64 {
        let (re, im) = self.gain(t);
        re * re + im * im
    }
}

/// Mutable sampling state for one station in one simulation.
#[derive(Debug, Clone)]
pub struct ChannelContext {
    rng: ChaCha8Rng,
    jakes: Option<JakesProcess>,
}

impl ChannelContext {
    /// Seeds an independent stream `stream` of the generator keyed by `seed`.
    pub fn new(model: &RateModel, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let jakes = match model.kind() {
            RateKind::JakesRayleigh { doppler } => Some(JakesProcess::new(*doppler, &mut rng)),
            _ => None,
        };
        Self { rng, jakes }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Draws the instantaneous rate observed at mini-slot `now`.
    pub fn sample_rate(&mut self, model: &RateModel, now: u64) -> f64 {
        match model.kind() {
            RateKind::Constant { rate } => *rate,
            RateKind::JakesRayleigh { .. } => {
                let g = self
                    .jakes
                    .as_ref()
                    .expect("jakes context built for a jakes model")
                    .power_gain(now as f64);
                model.shannon_rate(g)
            }
            RateKind::IidRayleigh => {
                let g: f64 = Exp1.sample(&mut self.rng);
                model.shannon_rate(g)
            }
            RateKind::DiscreteMapped { .. } => {
                let g: f64 = Exp1.sample(&mut self.rng);
                model.quantize(model.shannon_rate(g))
            }
        }
    }
}
