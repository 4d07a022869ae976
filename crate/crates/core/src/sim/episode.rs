//! Multi-interval episodes: intervals alternate with per-station policy updates.

use std::collections::VecDeque;

use crate::analytic::{
    self, station_stats, NetworkParams, OptimalConfig, StationStats, TARGET_SUCCESS,
};
use crate::control::{
    estimate_kh, probability_to_control, tune_gains, Gains, PunishmentParams, INITIAL_PROBABILITY,
};
use crate::error::{Error, Result};
use crate::strategies::{
    adaptive_selfish_policy, phase_config, AdaptivePhase, DocPolicy, HonestConfig, Strategy, StrategyKind,
};

use super::{run_interval, IntervalReport, Medium, Sampling};

/// Intervals in the trailing hold-time estimate.
const HOLD_WINDOW: usize = 20;
/// Intervals in the adaptive attackers' trailing throughput estimate.
const THROUGHPUT_WINDOW: usize = 5;
/// Smallest access probability used when deriving `K_H` from a station's own signal.
const KH_FLOOR_PROBABILITY: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GainMode {
    ZieglerNichols,
    Manual(Gains),
}

/// Where the network gain `K_H` used for tuning comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GainSchedule {
    /// `T_total / (N P_own)`, refreshed every interval.
    Refreshed,
    /// `T_total / sum_j P_j*` at the equilibrium implied by the measured hold times.
    Equilibrium,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialControl {
    Probability(f64),
    /// Start each honest station at its optimal access probability.
    Optimal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerConfig {
    pub gains: GainMode,
    pub gain_scale: f64,
    pub punishment_scale: f64,
    pub initial: InitialControl,
    pub schedule: GainSchedule,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            gains: GainMode::ZieglerNichols,
            gain_scale: 1.0,
            punishment_scale: 1.0,
            initial: InitialControl::Probability(INITIAL_PROBABILITY),
            schedule: GainSchedule::Refreshed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MembershipEvent {
    /// Applied before this interval runs.
    pub interval: u64,
    pub station: usize,
    pub join: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Membership {
    /// Stations absent at the start; empty means everyone is present.
    pub initially_absent: Vec<usize>,
    pub events: Vec<MembershipEvent>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSetup {
    pub params: NetworkParams,
    pub strategies: Vec<Strategy>,
    pub controller: ControllerConfig,
    pub membership: Membership,
    pub sampling: Sampling,
    /// Honest operating point; computed from `params` when absent.
    pub reference: Option<OptimalConfig>,
}

impl EpisodeSetup {
    pub fn all_honest(params: NetworkParams) -> Self {
        let n = params.stations();
        Self {
            params,
            strategies: vec![Strategy::doc(); n],
            controller: ControllerConfig::default(),
            membership: Membership::default(),
            sampling: Sampling::default(),
            reference: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.params.stations();
        if self.strategies.len() != n {
            return Err(Error::InvalidScenario(format!(
                "{} strategies for {n} stations",
                self.strategies.len()
            )));
        }
        for s in &self.strategies {
            s.validate()?;
        }
        if !(self.controller.gain_scale > 0.0 && self.controller.gain_scale.is_finite()) {
            return Err(Error::InvalidScenario("gain_scale must be positive".into()));
        }
        if !(self.controller.punishment_scale > 0.0 && self.controller.punishment_scale.is_finite()) {
            return Err(Error::InvalidScenario("punishment_scale must be positive".into()));
        }
        if let GainMode::Manual(g) = self.controller.gains {
            if !(g.kp > 0.0 && g.ki > 0.0) {
                return Err(Error::InvalidScenario("manual gains must be positive".into()));
            }
        }
        if let InitialControl::Probability(p) = self.controller.initial {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::InvalidScenario(format!("initial p {p} outside [0, 1)")));
            }
        }
        let bad_station = self
            .membership
            .initially_absent
            .iter()
            .chain(self.membership.events.iter().map(|e| &e.station))
            .find(|&&s| s >= n);
        if let Some(s) = bad_station {
            return Err(Error::InvalidScenario(format!("membership names station {s} of {n}")));
        }
        Ok(())
    }
}

/// Per-interval, per-station trace entry. Controller fields are absent for
/// stations not running the honest controller.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub interval: u64,
    pub station: usize,
    pub p: f64,
    pub threshold: f64,
    pub control: Option<f64>,
    pub error: Option<f64>,
    pub punishment: Option<f64>,
    pub channel_time: f64,
    /// Bits/s · mini-slots delivered.
    pub data: f64,
    pub successes: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeTrace {
    pub stations: usize,
    /// Rows of active stations, ordered by interval then station.
    pub rows: Vec<TraceRow>,
    /// Elapsed mini-slots per interval.
    pub elapsed: Vec<u64>,
}

impl EpisodeTrace {
    pub fn intervals(&self) -> usize {
        self.elapsed.len()
    }

    pub fn station_rows(&self, station: usize) -> impl Iterator<Item = &TraceRow> {
        self.rows.iter().filter(move |r| r.station == station)
    }

    /// Long-run throughput of a station over `[from, to)`, bits/s.
    pub fn throughput(&self, station: usize, from: usize, to: usize) -> f64 {
        let to = to.min(self.intervals());
        if from >= to {
            return 0.0;
        }
        let data: f64 = self
            .station_rows(station)
            .filter(|r| (from..to).contains(&(r.interval as usize)))
            .map(|r| r.data)
            .sum();
        let elapsed: u64 = self.elapsed[from..to].iter().sum();
        data / elapsed as f64
    }

    /// Per-interval throughput series of a station (0 while absent).
    pub fn throughput_series(&self, station: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.intervals()];
        for r in self.station_rows(station) {
            out[r.interval as usize] = r.data / self.elapsed[r.interval as usize] as f64;
        }
        out
    }

    /// Mean channel time of a station over `[from, to)`.
    pub fn mean_channel_time(&self, station: usize, from: usize, to: usize) -> f64 {
        let rows: Vec<f64> = self
            .station_rows(station)
            .filter(|r| (from..to).contains(&(r.interval as usize)))
            .map(|r| r.channel_time)
            .collect();
        rows.iter().sum::<f64>() / rows.len().max(1) as f64
    }

    pub fn p_series(&self, station: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.intervals()];
        for r in self.station_rows(station) {
            out[r.interval as usize] = r.p;
        }
        out
    }
}

/// Sliding sums over the last few intervals.
#[derive(Debug, Clone)]
struct Window {
    len: usize,
    items: VecDeque<(f64, f64)>,
}

impl Window {
    fn new(len: usize) -> Self {
        Self {
            len,
            items: VecDeque::with_capacity(len),
        }
    }

    fn push(&mut self, num: f64, den: f64) {
        if self.items.len() == self.len {
            self.items.pop_front();
        }
        self.items.push_back((num, den));
    }

    fn ratio(&self) -> Option<f64> {
        let (n, d) = self
            .items
            .iter()
            .fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
        (d > 0.0).then(|| n / d)
    }

    fn clear(&mut self) {
        self.items.clear();
    }
}

#[derive(Debug, Clone)]
enum Policy {
    Doc(DocPolicy),
    Fixed { p: f64, threshold: f64 },
    Adaptive { phase: AdaptivePhase, p: f64, threshold: f64 },
}

impl Policy {
    fn config(&self) -> (f64, f64) {
        match self {
            Policy::Doc(d) => (d.p, d.threshold),
            Policy::Fixed { p, threshold } | Policy::Adaptive { p, threshold, .. } => {
                (*p, *threshold)
            }
        }
    }
}

struct Station {
    active: bool,
    policy: Policy,
    /// Observed hold time per success.
    hold: Window,
    hold_estimate: f64,
    throughput: Window,
}

struct Runner<'a> {
    setup: &'a EpisodeSetup,
    reference: OptimalConfig,
    stations: Vec<Station>,
}

impl<'a> Runner<'a> {
    fn new(setup: &'a EpisodeSetup) -> Result<Self> {
        let reference = match &setup.reference {
            Some(r) => r.clone(),
            None => analytic::optimal_config(&setup.params)?,
        };
        let mut runner = Self {
            setup,
            reference,
            stations: Vec::new(),
        };
        let n = setup.params.stations();
        for i in 0..n {
            let active = !setup.membership.initially_absent.contains(&i);
            let hold_estimate = runner.reference.stats[i].hold_time;
            let strategy = &setup.strategies[i];
            let policy = if strategy.kind != StrategyKind::Doc && strategy.from_interval == 0 {
                selfish_start(strategy, runner.honest(i))
            } else {
                runner.fresh_doc(i, active_count(&setup.membership, n), true)?
            };
            runner.stations.push(Station {
                active,
                policy,
                hold: Window::new(HOLD_WINDOW),
                hold_estimate,
                throughput: Window::new(THROUGHPUT_WINDOW),
            });
        }
        Ok(runner)
    }

    fn honest(&self, i: usize) -> HonestConfig {
        HonestConfig {
            p: self.reference.p[i],
            threshold: self.reference.thresholds[i],
        }
    }

    fn gains(&self, n_active: usize, control: f64, hold_time: f64, holds: &[StationStats]) -> Gains {
        let cfg = &self.setup.controller;
        let base = match cfg.gains {
            GainMode::Manual(g) => g,
            GainMode::ZieglerNichols => {
                let total = self.setup.params.interval();
                let kh = match cfg.schedule {
                    GainSchedule::Refreshed => {
                        let floor = probability_to_control(KH_FLOOR_PROBABILITY, hold_time)
                            .expect("floor probability is below one");
                        estimate_kh(n_active as f64 * control.max(floor), total)
                    }
                    GainSchedule::Equilibrium => {
                        estimate_kh(n_active as f64 * equilibrium_control(holds), total)
                    }
                };
                tune_gains(n_active, kh)
            }
        };
        base.scaled(cfg.gain_scale)
    }

    /// Honest controller for station `i` at its startup point.
    fn fresh_doc(&self, i: usize, n_active: usize, at_start: bool) -> Result<Policy> {
        let hold = self.reference.stats[i].hold_time;
        let p0 = match (self.setup.controller.initial, at_start) {
            (InitialControl::Optimal, true) => self.reference.p[i],
            (InitialControl::Probability(p), true) => p,
            (_, false) => INITIAL_PROBABILITY,
        };
        let control = probability_to_control(p0, hold)?;
        let gains = self.gains(n_active.max(1), control, hold, &self.reference.stats);
        let mut doc = DocPolicy::new(self.reference.thresholds[i], hold, gains, p0)?;
        doc.punishment_scale = self.setup.controller.punishment_scale;
        Ok(Policy::Doc(doc))
    }

    fn apply_membership(&mut self, interval: u64) -> Result<()> {
        let events: Vec<MembershipEvent> = self
            .setup
            .membership
            .events
            .iter()
            .filter(|e| e.interval == interval)
            .copied()
            .collect();
        for e in events {
            let st = &mut self.stations[e.station];
            if e.join && !st.active {
                st.active = true;
                st.hold.clear();
                st.hold_estimate = self.reference.stats[e.station].hold_time;
                st.throughput.clear();
                let n = self.stations.iter().filter(|s| s.active).count();
                self.stations[e.station].policy = self.fresh_doc(e.station, n, false)?;
            } else if !e.join {
                st.active = false;
            }
        }
        Ok(())
    }

    fn update(&mut self, interval: u64, report: &IntervalReport, trace: &mut EpisodeTrace) {
        let active: Vec<usize> = (0..self.stations.len())
            .filter(|&i| self.stations[i].active)
            .collect();
        for &i in &active {
            let st = &mut self.stations[i];
            st.hold
                .push(report.hold_slots[i] as f64, report.successes[i] as f64);
            if let Some(h) = st.hold.ratio() {
                st.hold_estimate = h;
            }
            st.throughput.push(report.data[i], report.elapsed as f64);
        }
        let n = active.len();
        let times: Vec<f64> = active.iter().map(|&i| report.channel_time[i]).collect();
        let holds: Vec<StationStats> = active
            .iter()
            .map(|&i| StationStats {
                hold_time: self.stations[i].hold_estimate,
                data_per_success: 0.0,
                threshold: 0.0,
            })
            .collect();
        let (p_min, delta) = if n >= 2 {
            analytic::solve_pmin(&holds, &self.setup.params)
                .expect("p_min is defined for two or more stations")
        } else {
            (vec![TARGET_SUCCESS; n], 0.0)
        };
        let optimal_time = self.setup.params.interval() / n.max(1) as f64;

        for (k, &i) in active.iter().enumerate() {
            let strategy = &self.setup.strategies[i];
            let selfish_now = strategy.kind != StrategyKind::Doc && interval + 1 >= strategy.from_interval;
            let honest = self.honest(i);
            let hold_time = self.stations[i].hold_estimate;
            let own_control = match &self.stations[i].policy {
                Policy::Doc(d) => d.controller.control,
                _ => 0.0,
            };
            let gains = self.gains(n, own_control, hold_time, &holds);
            let punish = PunishmentParams {
                stations: n,
                optimal_time,
                p_min: p_min[k],
                delta,
            };
            let st = &mut self.stations[i];
            let (p_played, x_played) = st.policy.config();
            let mut row = TraceRow {
                interval,
                station: i,
                p: p_played,
                threshold: x_played,
                control: None,
                error: None,
                punishment: None,
                channel_time: report.channel_time[i],
                data: report.data[i],
                successes: report.successes[i],
            };
            if let Policy::Doc(doc) = &mut st.policy {
                row.control = Some(doc.controller.control);
                let step = doc.step(&times, k, &punish, gains, hold_time);
                row.error = Some(step.error);
                row.punishment = Some(step.punishment);
            }
            if selfish_now {
                st.policy = match (&st.policy, strategy.kind) {
                    (_, StrategyKind::Fixed) => Policy::Fixed {
                        p: strategy.fixed_p,
                        threshold: strategy.fixed_threshold,
                    },
                    (Policy::Adaptive { phase, .. }, _) => {
                        let r = st.throughput.ratio().unwrap_or(0.0);
                        let (phase, p, threshold) =
                            adaptive_selfish_policy(strategy, *phase, r, honest);
                        Policy::Adaptive { phase, p, threshold }
                    }
                    _ => selfish_start(strategy, honest),
                };
            }
            trace.rows.push(row);
        }
    }
}

/// Policy of a selfish station on its first selfish interval.
fn selfish_start(strategy: &Strategy, honest: HonestConfig) -> Policy {
    match strategy.kind {
        StrategyKind::Fixed => Policy::Fixed {
            p: strategy.fixed_p,
            threshold: strategy.fixed_threshold,
        },
        kind => {
            let (p, threshold) = phase_config(kind, AdaptivePhase::Selfish, honest);
            Policy::Adaptive {
                phase: AdaptivePhase::Selfish,
                p,
                threshold,
            }
        }
    }
}

fn active_count(m: &Membership, n: usize) -> usize {
    (0..n).filter(|i| !m.initially_absent.contains(i)).count()
}

/// Common control signal of the optimal configuration for the given hold times.
fn equilibrium_control(holds: &[StationStats]) -> f64 {
    match holds.len() {
        0 => 1.0,
        1 => TARGET_SUCCESS / (1.0 - TARGET_SUCCESS) * holds[0].access_cost(),
        _ => analytic::access_roots(holds)
            .map(|r| r.control_larger)
            .unwrap_or_else(|_| holds.iter().map(StationStats::access_cost).sum()),
    }
}

/// Runs `intervals` controller intervals of replication `replication`.
pub fn run_episode(
    setup: &EpisodeSetup,
    intervals: u64,
    seed: u64,
    replication: u64,
) -> Result<EpisodeTrace> {
    setup.validate()?;
    let mut runner = Runner::new(setup)?;
    let mut medium = Medium::new(&setup.params, seed, replication);
    let n = setup.params.stations();
    let mut trace = EpisodeTrace {
        stations: n,
        rows: Vec::with_capacity(n * intervals as usize),
        elapsed: Vec::with_capacity(intervals as usize),
    };
    let mut now = 0u64;
    let mut p = vec![0.0; n];
    let mut x = vec![0.0; n];
    for interval in 0..intervals {
        runner.apply_membership(interval)?;
        for (i, st) in runner.stations.iter().enumerate() {
            let (pi, xi) = if st.active {
                st.policy.config()
            } else {
                (0.0, f64::INFINITY)
            };
            p[i] = pi;
            x[i] = xi;
        }
        let report = run_interval(
            &p,
            &x,
            &mut medium,
            setup.params.interval_slots,
            now,
            setup.sampling,
        );
        now += report.elapsed;
        trace.elapsed.push(report.elapsed);
        runner.update(interval, &report, &mut trace);
    }
    Ok(trace)
}

/// Throughput at a pinned configuration with no controller.
pub fn run_static(
    params: &NetworkParams,
    p: &[f64],
    thresholds: &[f64],
    intervals: u64,
    seed: u64,
    replication: u64,
    sampling: Sampling,
) -> Vec<f64> {
    let mut medium = Medium::new(params, seed, replication);
    let n = params.stations();
    let mut data = vec![0.0; n];
    let mut now = 0;
    for _ in 0..intervals {
        let r = run_interval(p, thresholds, &mut medium, params.interval_slots, now, sampling);
        now += r.elapsed;
        for i in 0..n {
            data[i] += r.data[i];
        }
    }
    data.iter().map(|d| d / now.max(1) as f64).collect()
}

/// Honest statistics for thresholds `x` (hold time and data per success).
pub fn stats_for(params: &NetworkParams, x: &[f64]) -> Vec<StationStats> {
    params
        .models
        .iter()
        .zip(x)
        .map(|(m, &xi)| station_stats(m, xi, params))
        .collect()
}
