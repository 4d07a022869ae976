//! Scenario execution: baselines, attack sweeps, episodes and result tables.

mod output;
pub mod scenario;

pub use output::{write_results, SUMMARY_HEADER, TRACE_HEADER};
pub use scenario::{
    load_scenario, parse_override, parse_scenario, valid_keys, ExperimentKind, Scenario,
};

use crate::analytic::{self, optimal_config, station_stats, NetworkParams, OptimalConfig};
use crate::error::Result;
use crate::par;
use crate::sim::{
    measure_throughput, run_episode, run_static, EpisodeSetup, EpisodeTrace, ThroughputEstimate,
};
use crate::strategies::{fixed_attack_grid, Strategy, StrategyKind};

/// Streams reserved per sweep point; replications of every variant at a point
/// share streams so comparisons use common random numbers.
const STREAMS_PER_POINT: u64 = 1 << 12;

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub param: String,
    /// Station index or `total`.
    pub station: String,
    pub throughput: f64,
    pub half_width: Option<f64>,
}

/// One row of `metrics.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub param: String,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ScenarioResults {
    pub name: String,
    pub tau_s: f64,
    pub summary: Vec<SummaryRow>,
    pub metrics: Vec<MetricRow>,
    /// Labeled episode traces, one per replication.
    pub traces: Vec<(String, EpisodeTrace)>,
}

/// A scenario point with its honest operating point solved.
#[derive(Debug, Clone)]
pub struct PointContext {
    pub scenario: Scenario,
    pub params: NetworkParams,
    pub optimal: OptimalConfig,
    /// Index of the point within its sweep, used to pick random streams.
    pub index: u64,
    pub seed: u64,
}

impl PointContext {
    pub fn new(scenario: Scenario, index: u64, seed: u64) -> Result<Self> {
        scenario.validate()?;
        let params = scenario.network_params()?;
        let optimal = optimal_config(&params)?;
        Ok(Self {
            scenario,
            params,
            optimal,
            index,
            seed,
        })
    }

    fn stream(&self, replication: u32) -> u64 {
        self.index * STREAMS_PER_POINT + u64::from(replication)
    }

    fn window(&self) -> (usize, usize) {
        (self.scenario.warmup as usize, self.scenario.intervals as usize)
    }

    /// Episode setup with the scenario's own strategies; adaptive kinds use `reference`.
    pub fn setup(&self, reference: Option<&[f64]>) -> Result<EpisodeSetup> {
        let strategies = self
            .scenario
            .expanded()
            .iter()
            .enumerate()
            .map(|(i, (_, s))| s.resolve(i, &self.optimal, reference.map_or(0.0, |r| r[i])))
            .collect::<Result<Vec<_>>>()?;
        self.setup_with(strategies)
    }

    /// All stations honest, otherwise as configured.
    pub fn honest_setup(&self) -> Result<EpisodeSetup> {
        self.setup_with(vec![Strategy::doc(); self.params.stations()])
    }

    fn setup_with(&self, strategies: Vec<Strategy>) -> Result<EpisodeSetup> {
        Ok(EpisodeSetup {
            params: self.params.clone(),
            strategies,
            controller: self.scenario.controller.config()?,
            membership: self.scenario.membership.membership(),
            sampling: self.scenario.sampling(),
            reference: Some(self.optimal.clone()),
        })
    }
}

/// Per-replication measurements of one episode configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunStats {
    /// Throughput per station over the measurement window, bits/s.
    pub throughput: Vec<f64>,
    /// Mean channel time per interval over the window, mini-slots.
    pub channel_time: Vec<f64>,
}

/// Replication-averaged measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct RunEstimate {
    /// Per station then the total as the last entry.
    pub throughput: ThroughputEstimate,
    pub channel_time: Vec<f64>,
}

impl RunEstimate {
    pub fn rate(&self, station: usize) -> f64 {
        self.throughput.mean[station]
    }

    pub fn total(&self) -> f64 {
        *self.throughput.mean.last().expect("total entry")
    }

    fn from_runs(runs: &[RunStats]) -> Result<Self> {
        let with_total: Vec<Vec<f64>> = runs
            .iter()
            .map(|r| {
                let mut v = r.throughput.clone();
                v.push(r.throughput.iter().sum());
                v
            })
            .collect();
        let n = runs[0].channel_time.len();
        let channel_time = (0..n)
            .map(|i| runs.iter().map(|r| r.channel_time[i]).sum::<f64>() / runs.len() as f64)
            .collect();
        Ok(Self {
            throughput: measure_throughput(&with_total)?,
            channel_time,
        })
    }
}

fn episode_stats(trace: &EpisodeTrace, from: usize, to: usize) -> RunStats {
    let n = trace.stations;
    RunStats {
        throughput: (0..n).map(|i| trace.throughput(i, from, to)).collect(),
        channel_time: (0..n).map(|i| trace.mean_channel_time(i, from, to)).collect(),
    }
}

/// Runs every (setup, replication) job in parallel and folds replications per setup.
fn run_setups(ctx: &PointContext, setups: &[EpisodeSetup]) -> Result<Vec<RunEstimate>> {
    let reps = ctx.scenario.replications;
    let jobs: Vec<(usize, u32)> = (0..setups.len())
        .flat_map(|k| (0..reps).map(move |r| (k, r)))
        .collect();
    let (from, to) = ctx.window();
    let runs = par::map(&jobs, |&(k, r)| {
        run_episode(&setups[k], ctx.scenario.intervals, ctx.seed, ctx.stream(r))
            .map(|t| episode_stats(&t, from, to))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    runs.chunks(reps as usize).map(RunEstimate::from_runs).collect()
}

/// All-honest episodes: the calibration reference `r*` of every station.
pub fn run_doc(ctx: &PointContext) -> Result<RunEstimate> {
    Ok(run_setups(ctx, &[ctx.honest_setup()?])?.remove(0))
}

fn run_pinned(ctx: &PointContext, p: &[f64], thresholds: &[f64]) -> Result<RunEstimate> {
    let (from, to) = ctx.window();
    let intervals = (to - from) as u64;
    let reps: Vec<u32> = (0..ctx.scenario.replications).collect();
    let runs: Vec<RunStats> = par::map(&reps, |&r| {
        let throughput = run_static(
            &ctx.params,
            p,
            thresholds,
            intervals,
            ctx.seed,
            ctx.stream(r),
            ctx.scenario.sampling(),
        );
        RunStats {
            channel_time: vec![f64::NAN; throughput.len()],
            throughput,
        }
    });
    RunEstimate::from_runs(&runs)
}

/// Simulated throughput with `p` and thresholds pinned at the analytic optimum.
pub fn baseline_static(ctx: &PointContext) -> Result<RunEstimate> {
    run_pinned(ctx, &ctx.optimal.p, &ctx.optimal.thresholds)
}

/// Zero thresholds and the access probabilities optimal for them.
pub fn nonopportunistic_config(params: &NetworkParams) -> Result<(Vec<f64>, Vec<f64>)> {
    let zeros = vec![0.0; params.stations()];
    let stats: Vec<_> = params
        .models
        .iter()
        .map(|m| station_stats(m, 0.0, params))
        .collect();
    Ok((analytic::solve_optimal_p(&stats)?, zeros))
}

pub fn baseline_nonopportunistic(ctx: &PointContext) -> Result<RunEstimate> {
    let (p, x) = nonopportunistic_config(&ctx.params)?;
    run_pinned(ctx, &p, &x)
}

/// Fixed-strategy sweep for one attacker; every other station plays as configured.
pub fn attack_grid(
    ctx: &PointContext,
    attacker: usize,
    strategies: &[Strategy],
) -> Result<Vec<RunEstimate>> {
    let base = ctx.honest_setup()?;
    let setups: Vec<EpisodeSetup> = strategies
        .iter()
        .map(|s| {
            let mut setup = base.clone();
            setup.strategies[attacker] = s.clone();
            setup
        })
        .collect();
    run_setups(ctx, &setups)
}

/// The attack grid of the scenario for its attacker.
pub fn scenario_grid(ctx: &PointContext, attacker: usize) -> Result<Vec<Strategy>> {
    let e = &ctx.scenario.experiment;
    let x = ctx.optimal.thresholds[attacker];
    let xs: Vec<f64> = e.threshold_scales.iter().map(|s| s * x).collect();
    fixed_attack_grid(&e.p_grid, &xs)
}

/// Each adaptive kind for one attacker, with `r*` from `reference`.
pub fn adaptive_attacks(
    ctx: &PointContext,
    attacker: usize,
    kinds: &[StrategyKind],
    reference: &RunEstimate,
) -> Result<Vec<RunEstimate>> {
    let strategies: Vec<Strategy> = kinds
        .iter()
        .map(|&k| Strategy::adaptive(k, reference.rate(attacker)))
        .collect();
    attack_grid(ctx, attacker, &strategies)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoalitionPair {
    pub a: Strategy,
    pub b: Strategy,
    pub estimate: RunEstimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoalitionResult {
    pub attackers: (usize, usize),
    /// All-honest run: `(r_k*, r_l*)` are its rates at the attackers.
    pub reference: RunEstimate,
    pub pairs: Vec<CoalitionPair>,
}

/// Every pair `(a, b)` of strategies for two attackers.
pub fn coalition_sweep(
    ctx: &PointContext,
    attackers: (usize, usize),
    strategies_a: &[Strategy],
    strategies_b: &[Strategy],
) -> Result<CoalitionResult> {
    let base = ctx.honest_setup()?;
    let mut pairs = Vec::with_capacity(strategies_a.len() * strategies_b.len());
    let mut setups = vec![base.clone()];
    for a in strategies_a {
        for b in strategies_b {
            let mut s = base.clone();
            s.strategies[attackers.0] = a.clone();
            s.strategies[attackers.1] = b.clone();
            setups.push(s);
            pairs.push((a.clone(), b.clone()));
        }
    }
    let mut estimates = run_setups(ctx, &setups)?;
    let reference = estimates.remove(0);
    Ok(CoalitionResult {
        attackers,
        reference,
        pairs: pairs
            .into_iter()
            .zip(estimates)
            .map(|((a, b), estimate)| CoalitionPair { a, b, estimate })
            .collect(),
    })
}

/// Fairness, spread and CI metrics of one allocation. Zero throughputs are
/// flagged and fairness omitted.
pub fn fairness_and_tables(param: &str, estimate: &RunEstimate) -> Vec<MetricRow> {
    let n = estimate.throughput.mean.len() - 1;
    let rates = &estimate.throughput.mean[..n];
    let metric = |name: &str, value: f64| MetricRow {
        param: param.to_string(),
        metric: name.to_string(),
        value,
    };
    let mut out = Vec::new();
    let zeros = rates.iter().filter(|&&r| r <= 0.0).count();
    if zeros > 0 {
        out.push(metric("zero_throughput_stations", zeros as f64));
    } else {
        out.push(metric("fairness", analytic::proportional_fairness(rates)));
    }
    let sum: f64 = rates.iter().sum();
    let sq: f64 = rates.iter().map(|r| r * r).sum();
    if sq > 0.0 {
        out.push(metric("jain_index", sum * sum / (n as f64 * sq)));
    }
    out.push(metric("total_throughput", sum));
    if let Some(hw) = &estimate.throughput.half_width {
        let rel = hw[..n]
            .iter()
            .zip(rates)
            .filter(|(_, &r)| r > 0.0)
            .map(|(h, r)| h / r)
            .fold(0.0, f64::max);
        out.push(metric("max_relative_halfwidth", rel));
    }
    out
}

fn summary_rows(param: &str, estimate: &RunEstimate, stations: Option<&[usize]>) -> Vec<SummaryRow> {
    let t = &estimate.throughput;
    let n = t.mean.len() - 1;
    let chosen: Vec<usize> = match stations {
        Some(s) => s.to_vec(),
        None => (0..=n).collect(),
    };
    chosen
        .into_iter()
        .map(|i| SummaryRow {
            param: param.to_string(),
            station: if i == n { "total".into() } else { i.to_string() },
            throughput: t.mean[i],
            half_width: t.half_width.as_ref().map(|h| h[i]),
        })
        .collect()
}

fn label(point: &str, variant: &str) -> String {
    if point == "base" {
        variant.to_string()
    } else {
        format!("{point}|{variant}")
    }
}

/// Coefficient of variation of a series.
/// `None` for a series with zero mean.
pub fn coefficient_of_variation(xs: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if mean <= 0.0 {
        return None;
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some(var.sqrt() / mean)
}

/// First interval at or after `from` whose throughput is at most `reference`.
pub fn reaction_interval(series: &[f64], from: usize, reference: f64) -> Option<usize> {
    (from..series.len()).find(|&k| series[k] <= reference)
}

fn run_point(ctx: &PointContext, point: &str, results: &mut ScenarioResults) -> Result<()> {
    let exp = &ctx.scenario.experiment;
    match exp.kind {
        ExperimentKind::Fairness => {
            let doc = run_doc(ctx)?;
            let stat = baseline_static(ctx)?;
            let nonopp = baseline_nonopportunistic(ctx)?;
            for (name, est) in [("doc", &doc), ("static", &stat), ("non-opportunistic", &nonopp)] {
                let param = label(point, name);
                results.summary.extend(summary_rows(&param, est, None));
                results.metrics.extend(fairness_and_tables(&param, est));
            }
            results.metrics.push(MetricRow {
                param: label(point, "analytic"),
                metric: "fairness".into(),
                value: analytic::proportional_fairness(&ctx.optimal.rates),
            });
        }
        ExperimentKind::AttackGrid => {
            let k = exp.attackers[0];
            let doc = run_doc(ctx)?;
            let grid = scenario_grid(ctx, k)?;
            let runs = attack_grid(ctx, k, &grid)?;
            let n = ctx.params.stations();
            results.summary.extend(summary_rows(&label(point, "doc"), &doc, Some(&[k, n])));
            let mut best = 0.0f64;
            for (s, est) in grid.iter().zip(&runs) {
                let param = label(
                    point,
                    &format!(
                        "p={};threshold_scale={}",
                        s.fixed_p,
                        s.fixed_threshold / ctx.optimal.thresholds[k]
                    ),
                );
                results.summary.extend(summary_rows(&param, est, Some(&[k, n])));
                best = best.max(est.rate(k));
            }
            results.metrics.push(MetricRow {
                param: label(point, "grid"),
                metric: "max_attacker_gain".into(),
                value: best / doc.rate(k) - 1.0,
            });
        }
        ExperimentKind::Adaptive => {
            let k = exp.attackers[0];
            let doc = run_doc(ctx)?;
            let kinds: Vec<StrategyKind> = exp.adaptive.iter().map(|&k| k.into()).collect();
            let runs = adaptive_attacks(ctx, k, &kinds, &doc)?;
            results.summary.extend(summary_rows(&label(point, "doc"), &doc, Some(&[k])));
            for (kind, est) in kinds.iter().zip(&runs) {
                let param = label(point, kind.name());
                results.summary.extend(summary_rows(&param, est, Some(&[k])));
                results.metrics.push(MetricRow {
                    param,
                    metric: "attacker_gain".into(),
                    value: est.rate(k) / doc.rate(k) - 1.0,
                });
            }
        }
        ExperimentKind::Coalition => {
            let (k, l) = (exp.attackers[0], exp.attackers[1]);
            let ga = scenario_grid(ctx, k)?;
            let gb = scenario_grid(ctx, l)?;
            let res = coalition_sweep(ctx, (k, l), &ga, &gb)?;
            results
                .summary
                .extend(summary_rows(&label(point, "doc"), &res.reference, Some(&[k, l])));
            let t_star = ctx.params.optimal_channel_time();
            let (mut joint, mut time_ratio) = (f64::NEG_INFINITY, 0.0f64);
            for pair in &res.pairs {
                let param = label(
                    point,
                    &format!(
                        "a.p={};a.threshold_scale={};b.p={};b.threshold_scale={}",
                        pair.a.fixed_p,
                        pair.a.fixed_threshold / ctx.optimal.thresholds[k],
                        pair.b.fixed_p,
                        pair.b.fixed_threshold / ctx.optimal.thresholds[l]
                    ),
                );
                results.summary.extend(summary_rows(&param, &pair.estimate, Some(&[k, l])));
                let gk = pair.estimate.rate(k) / res.reference.rate(k) - 1.0;
                let gl = pair.estimate.rate(l) / res.reference.rate(l) - 1.0;
                joint = joint.max(gk.min(gl));
                let ct = &pair.estimate.channel_time;
                time_ratio = time_ratio.max((ct[k] + ct[l]) / (2.0 * t_star));
            }
            let m = |metric: &str, value| MetricRow {
                param: label(point, "sweep"),
                metric: metric.into(),
                value,
            };
            results.metrics.push(m("max_joint_gain", joint));
            results.metrics.push(m("max_pair_time_ratio", time_ratio));
        }
        ExperimentKind::Episode => run_episode_point(ctx, point, results)?,
    }
    Ok(())
}

fn run_episode_point(ctx: &PointContext, point: &str, results: &mut ScenarioResults) -> Result<()> {
    let selfish: Vec<usize> = ctx
        .scenario
        .expanded()
        .iter()
        .enumerate()
        .filter(|(_, (_, s))| StrategyKind::from(s.kind) != StrategyKind::Doc)
        .map(|(i, _)| i)
        .collect();
    let reference = if selfish.is_empty() {
        None
    } else {
        Some(run_doc(ctx)?)
    };
    let setup = ctx.setup(reference.as_ref().map(|r| &r.throughput.mean[..]))?;
    let reps: Vec<u32> = (0..ctx.scenario.replications).collect();
    let traces = par::map(&reps, |&r| {
        run_episode(&setup, ctx.scenario.intervals, ctx.seed, ctx.stream(r))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let (from, to) = ctx.window();
    let runs: Vec<RunStats> = traces.iter().map(|t| episode_stats(t, from, to)).collect();
    let est = RunEstimate::from_runs(&runs)?;
    let param = label(point, "episode");
    results.summary.extend(summary_rows(&param, &est, None));
    results.metrics.extend(fairness_and_tables(&param, &est));
    let n = ctx.params.stations();
    // stations starved for the whole window carry no variation
    let cvs: Vec<f64> = traces
        .iter()
        .flat_map(|t| (0..n).filter_map(move |i| coefficient_of_variation(&t.throughput_series(i)[from..to])))
        .collect();
    let cv = cvs.iter().sum::<f64>() / cvs.len() as f64;
    results.metrics.push(MetricRow {
        param: param.clone(),
        metric: "mean_throughput_cv".into(),
        value: cv,
    });
    if let Some(reference) = &reference {
        for &k in &selfish {
            let start = setup.strategies[k].from_interval as usize;
            for (r, t) in traces.iter().enumerate() {
                let value = reaction_interval(&t.throughput_series(k), start, reference.rate(k))
                    .map_or(f64::INFINITY, |i| (i - start) as f64);
                results.metrics.push(MetricRow {
                    param: param.clone(),
                    metric: format!("reaction_intervals.station{k}.rep{r}"),
                    value,
                });
            }
        }
    }
    for (r, t) in traces.into_iter().enumerate() {
        results.traces.push((format!("{}_rep{r}", label(point, "episode")), t));
    }
    Ok(())
}

/// Runs every sweep point of a scenario with master seed `seed`.
pub fn run_scenario(scenario: &Scenario, seed: u64) -> Result<ScenarioResults> {
    scenario.validate()?;
    let mut results = ScenarioResults {
        name: scenario.name.clone(),
        tau_s: scenario.tau_s,
        ..Default::default()
    };
    for (index, (point, s)) in scenario.sweep_points()?.into_iter().enumerate() {
        let ctx = PointContext::new(s, index as u64, seed)?;
        run_point(&ctx, &point, &mut results)?;
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(kind: &str) -> Scenario {
        let attackers = if kind == "coalition" { "[2, 3]" } else { "[3]" };
        let text = format!(
            r#"{{
                "name": "small",
                "interval_slots": 20000,
                "intervals": 30,
                "warmup": 10,
                "replications": 2,
                "controller": {{"start_at_optimum": true}},
                "stations": [{{"count": 3, "channel": {{"rho": 1}}}}, {{"count": 1, "channel": {{"rho": 4}}}}],
                "experiment": {{"kind": "{kind}", "attackers": {attackers}, "p_grid": [0.5], "threshold_scales": [0, 1]}}
            }}"#
        );
        parse_scenario(&text, &[]).unwrap()
    }

    #[test]
    fn fairness_metrics() {
        let est = RunEstimate::from_runs(&[RunStats {
            throughput: vec![1.0; 4],
            channel_time: vec![0.0; 4],
        }])
        .unwrap();
        let m = fairness_and_tables("x", &est);
        assert_eq!(m[0].metric, "fairness");
        assert_eq!(m[0].value, 0.0);
        assert_eq!(m[1].value, 1.0);
        let zero = RunEstimate::from_runs(&[RunStats {
            throughput: vec![1.0, 0.0],
            channel_time: vec![0.0; 2],
        }])
        .unwrap();
        let m = fairness_and_tables("x", &zero);
        assert_eq!(m[0].metric, "zero_throughput_stations");
        assert!(m.iter().all(|r| r.metric != "fairness"));
    }

    #[test]
    fn nonopportunistic_probabilities_are_equal() {
        let s = small("fairness");
        let (p, x) = nonopportunistic_config(&s.network_params().unwrap()).unwrap();
        assert!(p.iter().all(|&q| (q - p[0]).abs() < 1e-12));
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reaction_and_cv_helpers() {
        assert_eq!(reaction_interval(&[3.0, 2.0, 0.5, 2.0], 1, 1.0), Some(2));
        assert_eq!(reaction_interval(&[3.0, 2.0], 0, 1.0), None);
        assert_eq!(coefficient_of_variation(&[2.0, 2.0, 2.0]), Some(0.0));
        assert_eq!(coefficient_of_variation(&[0.0, 0.0]), None);
    }

    #[test]
    fn every_kind_runs_and_repeats() {
        for kind in ["fairness", "attack-grid", "adaptive", "coalition", "episode"] {
            let s = small(kind);
            let a = run_scenario(&s, 5).unwrap();
            let b = run_scenario(&s, 5).unwrap();
            assert!(!a.summary.is_empty(), "{kind}");
            assert_eq!(a.summary, b.summary, "{kind}");
        }
    }
}
