//! Closed-form throughput model and the solvers for the proportionally fair
//! configuration: per-station rate thresholds and access probabilities.
//!
//! Durations are in mini-slots (`TAU == 1`), rates in bits/s.

use std::f64::consts::E;

use crate::channel::RateModel;
use crate::error::{Error, Result};

/// Mini-slot duration; every duration in the crate is a multiple of it.
pub const TAU: f64 = 1.0;

/// Per-access overhead `(e - 1) tau` charged in channel time.
pub const ACCESS_OVERHEAD: f64 = (E - 1.0) * TAU;

/// Target total success probability of the slotted contention.
pub const TARGET_SUCCESS: f64 = 1.0 / E;

/// Which duration multiplies the instantaneous rate to give data per used
/// transmission opportunity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataDuration {
    /// Data portion only (`𝒯`).
    Transmission,
    /// Expected channel hold time of the station.
    Hold,
}

pub const DATA_DURATION: DataDuration = DataDuration::Transmission;

const BISECTION_STEPS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    /// Data transmission length `𝒯` in mini-slots.
    pub tx_slots: u32,
    /// Controller interval `T_total` in mini-slots.
    pub interval_slots: u64,
    pub models: Vec<RateModel>,
}

impl NetworkParams {
    pub fn new(tx_slots: u32, interval_slots: u64, models: Vec<RateModel>) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::InvalidParams("need at least one station".into()));
        }
        if tx_slots == 0 {
            return Err(Error::InvalidParams("transmission length must be positive".into()));
        }
        if interval_slots <= u64::from(tx_slots) {
            return Err(Error::InvalidParams(format!(
                "interval ({interval_slots}) must be much longer than a transmission ({tx_slots})"
            )));
        }
        Ok(Self {
            tx_slots,
            interval_slots,
            models,
        })
    }

    pub fn stations(&self) -> usize {
        self.models.len()
    }

    pub fn tx_duration(&self) -> f64 {
        f64::from(self.tx_slots) * TAU
    }

    pub fn interval(&self) -> f64 {
        self.interval_slots as f64
    }

    /// Equal channel-time share `T_total / N`.
    pub fn optimal_channel_time(&self) -> f64 {
        self.interval() / self.stations() as f64
    }

    /// `tau e / 𝒯`, the right-hand slope of the threshold fixed point.
    pub fn contention_overhead(&self) -> f64 {
        TAU * E / self.tx_duration()
    }
}

/// Per-success statistics induced by a threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationStats {
    /// Expected channel hold per successful contention, in mini-slots.
    pub hold_time: f64,
    /// Expected rate × data duration per successful contention (bits/s · mini-slots).
    pub data_per_success: f64,
    /// Rate threshold in bits/s.
    pub threshold: f64,
}

impl StationStats {
    /// `T_i + (e - 1) tau`: channel time charged per success.
    pub fn access_cost(&self) -> f64 {
        self.hold_time + ACCESS_OVERHEAD
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub p: Vec<f64>,
    /// Throughput per station in bits/s.
    pub rates: Vec<f64>,
    pub success_each: Vec<f64>,
    pub success: f64,
}

pub fn station_stats(model: &RateModel, threshold: f64, params: &NetworkParams) -> StationStats {
    let threshold = threshold.max(0.0);
    let q = model.tail_prob(threshold);
    let tx = params.tx_duration();
    let hold_time = (1.0 - q) * TAU + q * (tx + TAU);
    let duration = match DATA_DURATION {
        DataDuration::Transmission => tx,
        DataDuration::Hold => hold_time,
    };
    StationStats {
        hold_time,
        data_per_success: model.censored_mean(threshold) * duration,
        threshold,
    }
}

/// Per-station success probabilities `p_i prod_{j != i} (1 - p_j)` and their sum.
pub fn success_probabilities(p: &[f64]) -> (Vec<f64>, f64) {
    let n = p.len();
    let mut prefix = vec![1.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] * (1.0 - p[i]);
    }
    let mut suffix = 1.0;
    let mut each = vec![0.0; n];
    for i in (0..n).rev() {
        each[i] = p[i] * prefix[i] * suffix;
        suffix *= 1.0 - p[i];
    }
    let total = each.iter().sum();
    (each, total)
}

/// Mean mini-slot duration for the given success probabilities: the
/// denominator shared by all per-station throughputs.
fn mean_slot_time(success_each: &[f64], success: f64, stats: &[StationStats]) -> f64 {
    success_each
        .iter()
        .zip(stats)
        .map(|(ps, s)| ps * s.hold_time)
        .sum::<f64>()
        + (1.0 - success) * TAU
}

pub fn throughput(p: &[f64], stats: &[StationStats]) -> Allocation {
    assert_eq!(p.len(), stats.len(), "one probability per station");
    let (success_each, success) = success_probabilities(p);
    let denom = mean_slot_time(&success_each, success, stats);
    let rates = success_each
        .iter()
        .zip(stats)
        .map(|(ps, s)| ps * s.data_per_success / denom)
        .collect();
    Allocation {
        p: p.to_vec(),
        rates,
        success_each,
        success,
    }
}

/// Throughput of a station alone on the channel contending with `p = 1/e`:
/// `l / (T + (e - 1) tau)`.
pub fn single_station_throughput(model: &RateModel, threshold: f64, params: &NetworkParams) -> f64 {
    let s = station_stats(model, threshold, params);
    s.data_per_success / s.access_cost()
}

/// Optimal threshold: root of `E(R - x)^+ = x tau e / 𝒯`.
pub fn solve_threshold(model: &RateModel, params: &NetworkParams) -> Result<f64> {
    solve_threshold_with_overhead(model, params.contention_overhead())
}

/// Root of `E(R - x)^+ = overhead * x`.
pub fn solve_threshold_with_overhead(model: &RateModel, overhead: f64) -> Result<f64> {
    let mean = model.mean_rate();
    if !(mean.is_finite() && mean > 0.0) {
        return Err(Error::NoConvergence(format!(
            "threshold: mean rate must be finite and positive, got {mean}"
        )));
    }
    if !(overhead > 0.0) {
        return Err(Error::InvalidParams("overhead ratio must be positive".into()));
    }
    let g = |x: f64| model.excess_mean(x) - overhead * x;
    let mut hi = mean;
    while g(hi) > 0.0 {
        hi *= 2.0;
        if hi > 60.0 * mean {
            return Err(Error::NoConvergence(format!(
                "threshold: no sign change below 60 E[R] = {}",
                60.0 * mean
            )));
        }
    }
    let root = bisect(g, 0.0, hi, mean * 1e-15);
    Ok(root)
}

/// Bisection for a function positive at `lo` and non-positive at `hi`.
fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, x_tol: f64) -> f64 {
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= x_tol {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Access probability reached by a common control signal `s`: `s / (C_i + s)`.
pub fn probabilities_at_control(stats: &[StationStats], control: f64) -> Vec<f64> {
    stats
        .iter()
        .map(|s| control / (s.access_cost() + control))
        .collect()
}

fn success_at_control(stats: &[StationStats], control: f64) -> f64 {
    success_probabilities(&probabilities_at_control(stats, control)).1
}

/// Common control value maximizing the total success probability among
/// configurations with equal channel time. Stationarity reduces to
/// `sum_i p_i = 1`.
fn peak_control(stats: &[StationStats]) -> f64 {
    let g = |s: f64| 1.0 - probabilities_at_control(stats, s).iter().sum::<f64>();
    let mut hi = stats.iter().map(StationStats::access_cost).fold(0.0, f64::max);
    while g(hi) > 0.0 {
        hi *= 2.0;
    }
    bisect(g, 0.0, hi, hi * 1e-16)
}

/// Both solutions of the access-probability system. Every solution gives
/// all stations the same control signal, so each is a root of the total
/// success probability along that one-dimensional family.
#[derive(Debug, Clone, PartialEq)]
pub struct AccessRoots {
    pub larger: Vec<f64>,
    pub smaller: Vec<f64>,
    pub control_larger: f64,
    pub control_smaller: f64,
}

pub fn access_roots(stats: &[StationStats]) -> Result<AccessRoots> {
    if stats.len() < 2 {
        return Err(Error::InvalidParams(
            "two access-probability roots exist only for N >= 2".into(),
        ));
    }
    let peak = peak_control(stats);
    let excess = |s: f64| success_at_control(stats, s) - TARGET_SUCCESS;
    if excess(peak) <= 0.0 {
        return Err(Error::NoConvergence(format!(
            "peak success probability {} does not reach 1/e",
            success_at_control(stats, peak)
        )));
    }
    let mut hi = 2.0 * peak;
    while excess(hi) > 0.0 {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::NoConvergence("access probabilities: no upper bracket".into()));
        }
    }
    let control_larger = bisect(excess, peak, hi, peak * 1e-16);
    let control_smaller = bisect(|s| -excess(s), 0.0, peak, peak * 1e-16);
    Ok(AccessRoots {
        larger: probabilities_at_control(stats, control_larger),
        smaller: probabilities_at_control(stats, control_smaller),
        control_larger,
        control_smaller,
    })
}

/// Optimal access probabilities (the larger solution).
pub fn solve_optimal_p(stats: &[StationStats]) -> Result<Vec<f64>> {
    match stats.len() {
        0 => Err(Error::InvalidParams("no stations".into())),
        1 => Ok(vec![TARGET_SUCCESS]),
        _ => Ok(access_roots(stats)?.larger),
    }
}

/// `sum_i ln r_i`; negative infinity if any station gets nothing.
pub fn proportional_fairness(rates: &[f64]) -> f64 {
    if rates.iter().any(|&r| r <= 0.0) {
        return f64::NEG_INFINITY;
    }
    rates.iter().map(|r| r.ln()).sum()
}

/// Central finite-difference slope of `r_i` in `p_i` for each station.
pub fn access_monotonicity_probe(p: &[f64], stats: &[StationStats]) -> Vec<f64> {
    (0..p.len())
        .map(|i| {
            let h = 1e-6 * p[i].max(1e-3);
            let mut up = p.to_vec();
            let mut down = p.to_vec();
            up[i] = (p[i] + h).min(1.0);
            down[i] = (p[i] - h).max(0.0);
            let slope = throughput(&up, stats).rates[i] - throughput(&down, stats).rates[i];
            slope / (up[i] - down[i])
        })
        .collect()
}

/// Expected channel-time deficit `N t* - sum_j t_j` over one interval.
pub fn analytic_deficit(p: &[f64], stats: &[StationStats], params: &NetworkParams) -> f64 {
    let (each, success) = success_probabilities(p);
    let held: f64 = each.iter().zip(stats).map(|(ps, s)| ps * s.hold_time).sum();
    let total = params.interval();
    let n = p.len() as f64;
    let optimal = total / n;
    n * optimal - total * (held + success * ACCESS_OVERHEAD) / (held + (1.0 - success) * TAU)
}

/// Access probabilities minimizing the deficit under equal channel times,
/// and the deficit there.
pub fn solve_pmin(stats: &[StationStats], params: &NetworkParams) -> Result<(Vec<f64>, f64)> {
    if stats.len() < 2 {
        return Err(Error::InvalidParams("p_min needs at least two stations".into()));
    }
    let s = peak_control(stats);
    let p = probabilities_at_control(stats, s);
    let delta = analytic_deficit(&p, stats, params);
    Ok((p, delta))
}

/// The full optimal operating point of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalConfig {
    pub thresholds: Vec<f64>,
    pub stats: Vec<StationStats>,
    pub p: Vec<f64>,
    /// Common control signal at the optimum.
    pub control: f64,
    pub rates: Vec<f64>,
    pub p_min: Vec<f64>,
    pub delta: f64,
}

pub fn optimal_config(params: &NetworkParams) -> Result<OptimalConfig> {
    let thresholds = params
        .models
        .iter()
        .map(|m| solve_threshold(m, params))
        .collect::<Result<Vec<_>>>()?;
    let stats: Vec<StationStats> = params
        .models
        .iter()
        .zip(&thresholds)
        .map(|(m, &x)| station_stats(m, x, params))
        .collect();
    let p = solve_optimal_p(&stats)?;
    let control = p[0] / (1.0 - p[0]) * stats[0].access_cost();
    let rates = throughput(&p, &stats).rates;
    let (p_min, delta) = if stats.len() >= 2 {
        solve_pmin(&stats, params)?
    } else {
        (vec![TARGET_SUCCESS], 0.0)
    };
    Ok(OptimalConfig {
        thresholds,
        stats,
        p,
        control,
        rates,
        p_min,
        delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const W: f64 = 1e7;

    fn params(n: usize, rho: f64) -> NetworkParams {
        let models = (0..n).map(|_| RateModel::iid_rayleigh(W, rho).unwrap()).collect();
        NetworkParams::new(10, 100_000, models).unwrap()
    }

    fn flat_stats(n: usize, hold: f64) -> Vec<StationStats> {
        vec![
            StationStats {
                hold_time: hold,
                data_per_success: 1.0,
                threshold: 0.0,
            };
            n
        ]
    }

    #[test]
    fn stats_extremes() {
        let p = params(1, 1.0);
        let m = &p.models[0];
        let s = station_stats(m, 0.0, &p);
        assert_eq!(s.hold_time, 11.0);
        assert!((s.data_per_success - m.mean_rate() * 10.0).abs() < 1e-6);
        let s = station_stats(m, 1e3 * W, &p);
        assert_eq!(s.hold_time, 1.0);
        assert_eq!(s.data_per_success, 0.0);
    }

    #[test]
    fn hold_time_at_bandwidth_threshold() {
        let p = params(1, 1.0);
        let s = station_stats(&p.models[0], W, &p);
        assert!((s.hold_time - (1.0 + 10.0 * (-1.0f64).exp())).abs() < 1e-12);
        assert!((s.hold_time - 4.679).abs() < 1e-3);
    }

    #[test]
    fn saturated_single_station() {
        let c = 3.0e6;
        let m = RateModel::constant(c).unwrap();
        let p = NetworkParams::new(10, 100_000, vec![m.clone()]).unwrap();
        let s = station_stats(&m, 0.0, &p);
        let a = throughput(&[1.0], &[s]);
        assert!((a.rates[0] - c * 10.0 / 11.0).abs() < 1e-6);
    }

    #[test]
    fn permanent_collision_gives_nothing() {
        let a = throughput(&[1.0, 1.0], &flat_stats(2, 5.0));
        assert_eq!(a.success, 0.0);
        assert_eq!(a.rates, vec![0.0, 0.0]);
    }

    #[test]
    fn all_silent_is_well_defined() {
        let a = throughput(&[0.0, 0.0, 0.0], &flat_stats(3, 5.0));
        assert_eq!(a.rates, vec![0.0; 3]);
    }

    #[test]
    fn homogeneous_two_station_root() {
        let p = solve_optimal_p(&flat_stats(2, 4.0)).unwrap();
        let expected = 0.5 * (1.0 + (1.0 - 2.0 / E).sqrt());
        assert!((p[0] - expected).abs() < 1e-12);
        assert!((p[1] - expected).abs() < 1e-12);
    }

    #[test]
    fn homogeneous_ten_station_root_by_scalar_bisection() {
        let p = solve_optimal_p(&flat_stats(10, 4.679)).unwrap();
        // independent scalar bisection of 10 q (1-q)^9 = 1/e on [0.1, 1]
        let f = |q: f64| 10.0 * q * (1.0 - q).powi(9) - 1.0 / E;
        let (mut lo, mut hi) = (0.1, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        assert!((p[0] - lo).abs() < 1e-12);
        assert!((p[0] - 0.133).abs() < 5e-4);
    }

    #[test]
    fn single_station_uses_one_over_e() {
        assert_eq!(solve_optimal_p(&flat_stats(1, 3.0)).unwrap(), vec![1.0 / E]);
        assert!(solve_pmin(&flat_stats(1, 3.0), &params(1, 1.0)).is_err());
    }

    #[test]
    fn equal_holds_give_equal_probabilities() {
        let mut stats = flat_stats(4, 6.0);
        stats[2].hold_time = 2.0;
        stats[3].hold_time = 9.0;
        let p = solve_optimal_p(&stats).unwrap();
        assert_eq!(p[0], p[1]);
    }

    #[test]
    fn fairness_values() {
        assert_eq!(proportional_fairness(&[1.0, 1.0, 1.0]), 0.0);
        assert!((proportional_fairness(&[E, E]) - 2.0).abs() < 1e-15);
        assert_eq!(proportional_fairness(&[1.0, 0.0]), f64::NEG_INFINITY);
    }

    #[test]
    fn threshold_of_constant_channel() {
        let c = 4.0e6;
        let m = RateModel::constant(c).unwrap();
        let p = NetworkParams::new(10, 100_000, vec![m.clone()]).unwrap();
        let x = solve_threshold(&m, &p).unwrap();
        let expected = c / (1.0 + E / 10.0);
        assert!((x - expected).abs() <= 1e-9 * c);
    }

    #[test]
    fn threshold_vanishes_with_short_transmissions() {
        let m = RateModel::iid_rayleigh(W, 1.0).unwrap();
        let mean = m.mean_rate();
        let x1 = solve_threshold_with_overhead(&m, E / 1e-3).unwrap();
        let x2 = solve_threshold_with_overhead(&m, E / 1e-6).unwrap();
        assert!(x2 < x1 && x1 < 1e-2 * mean);
    }

    #[test]
    fn threshold_residual() {
        let p = params(1, 1.0);
        let m = &p.models[0];
        let x = solve_threshold(m, &p).unwrap();
        let resid = m.excess_mean(x) - x * p.contention_overhead();
        assert!(resid.abs() <= 1e-9 * m.mean_rate());
    }

    #[test]
    fn monotonicity_probe_examples() {
        let stats = flat_stats(2, 5.0);
        assert!(access_monotonicity_probe(&[0.3, 0.3], &stats).iter().all(|&d| d > 0.0));
        assert!(access_monotonicity_probe(&[0.5], &flat_stats(1, 5.0))[0] > 0.0);
        let stats = flat_stats(10, 4.679);
        let p = solve_optimal_p(&stats).unwrap();
        assert!(access_monotonicity_probe(&p, &stats).iter().all(|&d| d > 0.0));
    }

    #[test]
    fn deficit_examples() {
        let pr = params(10, 1.0);
        let stats = flat_stats(10, 4.679);
        assert_eq!(analytic_deficit(&[0.0; 10], &stats, &pr), 1e5);
        let p = solve_optimal_p(&stats).unwrap();
        assert!(analytic_deficit(&p, &stats, &pr).abs() < 0.01 * 1e5);
        let (pmin, delta) = solve_pmin(&stats, &pr).unwrap();
        assert!((pmin[0] - 0.1).abs() < 1e-12);
        assert!(delta < 0.0);
        assert!((analytic_deficit(&pmin, &stats, &pr) - delta).abs() < 1e-9);
    }

    #[test]
    fn two_station_pmin() {
        let pr = params(2, 1.0);
        let stats = flat_stats(2, 3.0);
        let (pmin, delta) = solve_pmin(&stats, &pr).unwrap();
        assert!((pmin[0] - 0.5).abs() < 1e-12 && (pmin[1] - 0.5).abs() < 1e-12);
        assert!((success_probabilities(&pmin).1 - 0.5).abs() < 1e-12);
        assert!(delta < 0.0);
    }
}
