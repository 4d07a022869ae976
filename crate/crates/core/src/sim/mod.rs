//! Mini-slot-exact simulation of the contention/transmission process.

mod episode;
mod measure;

pub use episode::{
    run_episode, ControllerConfig, EpisodeSetup, EpisodeTrace, GainMode, GainSchedule,
    InitialControl, Membership, MembershipEvent, TraceRow, run_static, stats_for,
};
pub use measure::{measure_throughput, ThroughputEstimate};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analytic::{NetworkParams, ACCESS_OVERHEAD};
use crate::channel::{ChannelContext, RateModel};

// Stream layout: each replication owns a block of streams; stream 0 of the
// block drives contention, stream 1 + i drives station i.
const STREAMS_PER_REPLICATION: u64 = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotKind {
    Idle,
    Collision,
    Success,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotOutcome {
    pub kind: SlotKind,
    pub winner: Option<usize>,
    pub transmitted: bool,
    /// Observed rate in bits/s (successes only, 0 otherwise).
    pub rate: f64,
    /// Mini-slots consumed.
    pub duration: u64,
}

/// How the contenders of a mini-slot are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sampling {
    /// One Bernoulli draw per station per slot from the station's own stream.
    PerStation,
    /// One categorical draw per slot over {idle, success of i, collision};
    /// same distribution, N times fewer draws.
    #[default]
    Aggregate,
}

/// The shared medium of one simulation: per-station channels and the
/// contention stream.
#[derive(Debug, Clone)]
pub struct Medium {
    models: Vec<RateModel>,
    channels: Vec<ChannelContext>,
    contention: ChaCha8Rng,
    tx_slots: u64,
}

impl Medium {
    pub fn new(params: &NetworkParams, seed: u64, replication: u64) -> Self {
        let base = replication.wrapping_mul(STREAMS_PER_REPLICATION);
        let channels = params
            .models
            .iter()
            .enumerate()
            .map(|(i, m)| ChannelContext::new(m, seed, base + 1 + i as u64))
            .collect();
        let mut contention = ChaCha8Rng::seed_from_u64(seed);
        contention.set_stream(base);
        Self {
            models: params.models.clone(),
            channels,
            contention,
            tx_slots: u64::from(params.tx_slots),
        }
    }

    pub fn stations(&self) -> usize {
        self.models.len()
    }

    fn resolve_success(&mut self, winner: usize, threshold: f64, now: u64) -> SlotOutcome {
        let rate = self.channels[winner].sample_rate(&self.models[winner], now);
        let transmitted = rate >= threshold;
        SlotOutcome {
            kind: SlotKind::Success,
            winner: Some(winner),
            transmitted,
            rate,
            duration: if transmitted { 1 + self.tx_slots } else { 1 },
        }
    }
}

fn empty_slot(kind: SlotKind) -> SlotOutcome {
    SlotOutcome {
        kind,
        winner: None,
        transmitted: false,
        rate: 0.0,
        duration: 1,
    }
}

/// One mini-slot: every station contends independently with its own probability.
pub fn run_slot(p: &[f64], thresholds: &[f64], medium: &mut Medium, now: u64) -> SlotOutcome {
    let mut winner = None;
    let mut contenders = 0usize;
    for (i, &pi) in p.iter().enumerate() {
        if medium.channels[i].rng().random::<f64>() < pi {
            contenders += 1;
            winner = Some(i);
        }
    }
    match (contenders, winner) {
        (0, _) => empty_slot(SlotKind::Idle),
        (1, Some(w)) => medium.resolve_success(w, thresholds[w], now),
        _ => empty_slot(SlotKind::Collision),
    }
}

/// Cumulative outcome probabilities for the aggregate sampler.
struct OutcomeTable {
    idle: f64,
    cumulative: Vec<f64>,
}

impl OutcomeTable {
    fn new(p: &[f64]) -> Self {
        let (each, _) = crate::analytic::success_probabilities(p);
        let idle: f64 = p.iter().map(|q| 1.0 - q).product();
        let mut acc = idle;
        let cumulative = each
            .iter()
            .map(|s| {
                acc += s;
                acc
            })
            .collect();
        Self { idle, cumulative }
    }

    fn draw(&self, u: f64) -> (SlotKind, Option<usize>) {
        if u < self.idle {
            return (SlotKind::Idle, None);
        }
        match self.cumulative.iter().position(|&c| u < c) {
            Some(i) => (SlotKind::Success, Some(i)),
            None => (SlotKind::Collision, None),
        }
    }
}

/// Observables accumulated over one controller interval.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalReport {
    /// Channel time `sum (hold + (e - 1) tau)` per station, mini-slots.
    pub channel_time: Vec<f64>,
    pub successes: Vec<u64>,
    pub transmissions: Vec<u64>,
    /// Mini-slots held after successful contentions.
    pub hold_slots: Vec<u64>,
    /// Delivered data, bits/s · mini-slots (bits once multiplied by tau in seconds).
    pub data: Vec<f64>,
    pub idle_slots: u64,
    pub collision_slots: u64,
    pub success_slots: u64,
    pub elapsed: u64,
}

impl IntervalReport {
    fn new(n: usize) -> Self {
        Self {
            channel_time: vec![0.0; n],
            successes: vec![0; n],
            transmissions: vec![0; n],
            hold_slots: vec![0; n],
            data: vec![0.0; n],
            idle_slots: 0,
            collision_slots: 0,
            success_slots: 0,
            elapsed: 0,
        }
    }

    fn record(&mut self, o: &SlotOutcome, tx_slots: u64) {
        match o.kind {
            SlotKind::Idle => self.idle_slots += 1,
            SlotKind::Collision => self.collision_slots += 1,
            SlotKind::Success => {
                let w = o.winner.expect("success has a winner");
                self.success_slots += 1;
                self.successes[w] += 1;
                self.hold_slots[w] += o.duration;
                if o.transmitted {
                    self.transmissions[w] += 1;
                    self.data[w] += o.rate * tx_slots as f64;
                }
            }
        }
        self.elapsed += o.duration;
    }

    fn finish(&mut self) {
        for i in 0..self.channel_time.len() {
            self.channel_time[i] =
                self.hold_slots[i] as f64 + ACCESS_OVERHEAD * self.successes[i] as f64;
        }
    }

    /// Throughput of station `i` over this interval, bits/s.
    pub fn throughput(&self, i: usize) -> f64 {
        self.data[i] / self.elapsed as f64
    }

    pub fn stations(&self) -> usize {
        self.data.len()
    }
}

/// Runs slots from `start` until at least `interval_slots` have elapsed.
pub fn run_interval(
    p: &[f64],
    thresholds: &[f64],
    medium: &mut Medium,
    interval_slots: u64,
    start: u64,
    sampling: Sampling,
) -> IntervalReport {
    let n = medium.stations();
    assert!(p.len() == n && thresholds.len() == n, "one entry per station");
    let mut report = IntervalReport::new(n);
    let tx_slots = medium.tx_slots;
    match sampling {
        Sampling::PerStation => {
            while report.elapsed < interval_slots {
                let o = run_slot(p, thresholds, medium, start + report.elapsed);
                report.record(&o, tx_slots);
            }
        }
        Sampling::Aggregate => {
            let table = OutcomeTable::new(p);
            while report.elapsed < interval_slots {
                let u: f64 = medium.contention.random();
                let o = match table.draw(u) {
                    (SlotKind::Success, Some(w)) => {
                        medium.resolve_success(w, thresholds[w], start + report.elapsed)
                    }
                    (kind, _) => empty_slot(kind),
                };
                report.record(&o, tx_slots);
            }
        }
    }
    report.finish();
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{self, station_stats};

    fn params(n: usize) -> NetworkParams {
        let models = (0..n)
            .map(|_| RateModel::iid_rayleigh(1e7, 1.0).unwrap())
            .collect();
        NetworkParams::new(10, 100_000, models).unwrap()
    }

    #[test]
    fn silent_slot_is_idle() {
        let pr = params(3);
        let mut m = Medium::new(&pr, 1, 0);
        let o = run_slot(&[0.0; 3], &[0.0; 3], &mut m, 0);
        assert_eq!(o.kind, SlotKind::Idle);
        assert_eq!(o.duration, 1);
    }

    #[test]
    fn lone_saturated_station_always_transmits() {
        let pr = params(1);
        let mut m = Medium::new(&pr, 1, 0);
        for t in 0..100 {
            let o = run_slot(&[1.0], &[0.0], &mut m, t);
            assert!(o.kind == SlotKind::Success && o.transmitted);
            assert_eq!(o.duration, 11);
        }
    }

    #[test]
    fn saturated_pair_always_collides() {
        let pr = params(2);
        let mut m = Medium::new(&pr, 1, 0);
        for t in 0..100 {
            assert_eq!(run_slot(&[1.0, 1.0], &[0.0; 2], &mut m, t).kind, SlotKind::Collision);
        }
    }

    #[test]
    fn deterministic_schedule() {
        let c = 2.5e6;
        let pr = NetworkParams::new(10, 100_000, vec![RateModel::constant(c).unwrap()]).unwrap();
        for sampling in [Sampling::PerStation, Sampling::Aggregate] {
            let mut m = Medium::new(&pr, 9, 0);
            let r = run_interval(&[1.0], &[0.0], &mut m, 100_000, 0, sampling);
            let successes = 100_000u64.div_ceil(11);
            assert_eq!(r.successes[0], successes);
            assert_eq!(r.data[0], c * 10.0 * successes as f64);
            assert_eq!(r.elapsed, 11 * successes);
        }
    }

    #[test]
    fn time_is_conserved() {
        let pr = params(4);
        let mut m = Medium::new(&pr, 3, 2);
        let p = [0.1, 0.2, 0.05, 0.3];
        let x = [0.0, 5e6, 1e7, 2e7];
        for sampling in [Sampling::PerStation, Sampling::Aggregate] {
            let r = run_interval(&p, &x, &mut m, 100_000, 0, sampling);
            let held: u64 = r.hold_slots.iter().sum();
            assert_eq!(held + r.idle_slots + r.collision_slots, r.elapsed);
            assert!(r.elapsed >= 100_000 && r.elapsed < 100_011);
            assert_eq!(r.success_slots, r.successes.iter().sum::<u64>());
        }
    }

    #[test]
    fn seeded_runs_repeat_exactly() {
        let pr = params(5);
        let p = [0.15; 5];
        let x = [8e6; 5];
        let run = || {
            let mut m = Medium::new(&pr, 42, 7);
            run_interval(&p, &x, &mut m, 100_000, 0, Sampling::Aggregate)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn empirical_success_probability_matches_model() {
        let pr = params(5);
        let p = [0.05, 0.1, 0.15, 0.2, 0.25];
        let (each, ps) = analytic::success_probabilities(&p);
        for sampling in [Sampling::PerStation, Sampling::Aggregate] {
            let mut m = Medium::new(&pr, 17, 1);
            // every contention gives up so each slot lasts exactly one mini-slot
            let r = run_interval(&p, &[f64::INFINITY; 5], &mut m, 400_000, 0, sampling);
            let slots = r.elapsed as f64;
            let se = (ps * (1.0 - ps) / slots).sqrt();
            assert!((r.success_slots as f64 / slots - ps).abs() < 3.0 * se);
            for i in 0..5 {
                let se = (each[i] * (1.0 - each[i]) / slots).sqrt();
                assert!((r.successes[i] as f64 / slots - each[i]).abs() < 3.0 * se);
            }
        }
    }

    #[test]
    fn hold_and_data_per_success_match_model() {
        let pr = params(2);
        let x = 1e7;
        let stats = station_stats(&pr.models[0], x, &pr);
        let mut m = Medium::new(&pr, 23, 0);
        // batch means over intervals
        let (mut holds, mut datas) = (Vec::new(), Vec::new());
        let mut start = 0;
        for _ in 0..40 {
            let r = run_interval(&[0.5, 0.0], &[x, 0.0], &mut m, 100_000, start, Sampling::Aggregate);
            start += r.elapsed;
            let n = r.successes[0] as f64;
            holds.push(r.hold_slots[0] as f64 / n);
            datas.push(r.data[0] / n);
        }
        for (xs, want) in [(holds, stats.hold_time), (datas, stats.data_per_success)] {
            let k = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / k;
            let var = xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
            assert!((mean - want).abs() < 4.0 * (var / k).sqrt(), "{mean} vs {want}");
        }
    }
}
