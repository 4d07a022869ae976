//! JSON scenario description, dotted-path overrides and validation.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::analytic::{NetworkParams, OptimalConfig};
use crate::channel::{RateModel, DEFAULT_RATE_TABLE_MBPS};
use crate::control::{Gains, INITIAL_PROBABILITY};
use crate::error::{Error, Result};
use crate::sim::{
    ControllerConfig, GainMode, GainSchedule, InitialControl, Membership, MembershipEvent,
    Sampling,
};
use crate::strategies::{
    default_p_grid, default_threshold_scales, Strategy, StrategyKind, DEFAULT_HYSTERESIS_LOW,
};

fn default_tx_slots() -> u32 {
    10
}
fn default_interval_slots() -> u64 {
    100_000
}
fn default_tau_s() -> f64 {
    1e-5
}
fn default_intervals() -> u64 {
    500
}
fn default_warmup() -> u64 {
    200
}
fn default_replications() -> u32 {
    4
}
fn default_seed() -> u64 {
    1
}
fn default_bandwidth() -> f64 {
    1e7
}
fn one() -> f64 {
    1.0
}
fn default_count() -> usize {
    1
}
fn default_hysteresis() -> f64 {
    DEFAULT_HYSTERESIS_LOW
}
fn default_initial_p() -> f64 {
    INITIAL_PROBABILITY
}
fn default_adaptive() -> Vec<StrategyKindSpec> {
    vec![
        StrategyKindSpec::AdaptiveP,
        StrategyKindSpec::AdaptiveThreshold,
        StrategyKindSpec::AdaptiveBoth,
    ]
}

/// Doppler used by the Jakes channel when none is given: `2 pi / 100` per mini-slot.
pub const DEFAULT_DOPPLER: f64 = 2.0 * PI / 100.0;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Transmission length in mini-slots.
    #[serde(default = "default_tx_slots")]
    pub tx_slots: u32,
    /// Controller interval in mini-slots.
    #[serde(default = "default_interval_slots")]
    pub interval_slots: u64,
    /// Mini-slot length in seconds; only scales the `bits` trace column.
    #[serde(default = "default_tau_s")]
    pub tau_s: f64,
    #[serde(default = "default_intervals")]
    pub intervals: u64,
    /// Intervals excluded from throughput estimates.
    #[serde(default = "default_warmup")]
    pub warmup: u64,
    #[serde(default = "default_replications")]
    pub replications: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub sampling: SamplingSpec,
    pub stations: Vec<StationGroup>,
    #[serde(default)]
    pub controller: ControllerSpec,
    #[serde(default)]
    pub membership: MembershipSpec,
    #[serde(default)]
    pub sweep: Vec<SweepPoint>,
    #[serde(default)]
    pub experiment: ExperimentSpec,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingSpec {
    #[default]
    Aggregate,
    PerStation,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StationGroup {
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default)]
    pub channel: ChannelSpec,
    #[serde(default)]
    pub strategy: StrategySpec,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelKind {
    #[default]
    IidRayleigh,
    Jakes,
    Discrete,
    Constant,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    #[serde(default)]
    pub kind: ChannelKind,
    /// Bandwidth in Hz.
    #[serde(rename = "W", default = "default_bandwidth")]
    pub w: f64,
    #[serde(default = "one")]
    pub rho: f64,
    /// Radians per mini-slot (Jakes).
    #[serde(default)]
    pub doppler: Option<f64>,
    /// Allowed rates in Mbps (discrete).
    #[serde(default)]
    pub rates_mbps: Option<Vec<f64>>,
    /// Rate in bits/s (constant).
    #[serde(default)]
    pub rate_bps: Option<f64>,
}

impl Default for ChannelSpec {
    fn default() -> Self {
        Self {
            kind: ChannelKind::IidRayleigh,
            w: default_bandwidth(),
            rho: 1.0,
            doppler: None,
            rates_mbps: None,
            rate_bps: None,
        }
    }
}

impl ChannelSpec {
    pub fn model(&self) -> Result<RateModel> {
        match self.kind {
            ChannelKind::IidRayleigh => RateModel::iid_rayleigh(self.w, self.rho),
            ChannelKind::Jakes => {
                RateModel::jakes_rayleigh(self.w, self.rho, self.doppler.unwrap_or(DEFAULT_DOPPLER))
            }
            ChannelKind::Discrete => {
                let table = self
                    .rates_mbps
                    .clone()
                    .unwrap_or_else(|| DEFAULT_RATE_TABLE_MBPS.to_vec())
                    .iter()
                    .map(|r| r * 1e6)
                    .collect();
                RateModel::discrete_mapped(self.w, self.rho, table)
            }
            ChannelKind::Constant => {
                let rate = self.rate_bps.ok_or_else(|| {
                    Error::InvalidScenario("constant channel needs rate_bps".into())
                })?;
                RateModel::constant(rate)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKindSpec {
    #[default]
    Doc,
    Fixed,
    AdaptiveP,
    AdaptiveThreshold,
    AdaptiveBoth,
}

impl From<StrategyKindSpec> for StrategyKind {
    fn from(k: StrategyKindSpec) -> Self {
        match k {
            StrategyKindSpec::Doc => StrategyKind::Doc,
            StrategyKindSpec::Fixed => StrategyKind::Fixed,
            StrategyKindSpec::AdaptiveP => StrategyKind::AdaptiveP,
            StrategyKindSpec::AdaptiveThreshold => StrategyKind::AdaptiveThreshold,
            StrategyKindSpec::AdaptiveBoth => StrategyKind::AdaptiveBoth,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StrategySpec {
    #[serde(default)]
    pub kind: StrategyKindSpec,
    /// Absolute access probability (fixed).
    #[serde(default)]
    pub p: Option<f64>,
    /// Access probability as a multiple of the honest one (fixed, when `p` is absent).
    #[serde(default)]
    pub p_scale: Option<f64>,
    /// Threshold as a multiple of the honest one (fixed).
    #[serde(default = "one")]
    pub threshold_scale: f64,
    #[serde(default = "default_hysteresis")]
    pub hysteresis_low: f64,
    /// Runs the honest controller before this interval.
    #[serde(default)]
    pub from_interval: u64,
}

impl Default for StrategySpec {
    fn default() -> Self {
        Self {
            kind: StrategyKindSpec::Doc,
            p: None,
            p_scale: None,
            threshold_scale: 1.0,
            hysteresis_low: DEFAULT_HYSTERESIS_LOW,
            from_interval: 0,
        }
    }
}

impl StrategySpec {
    /// Absolute strategy for station `i` given the honest operating point and,
    /// for adaptive kinds, the calibrated reference throughput.
    pub fn resolve(&self, i: usize, honest: &OptimalConfig, reference_rate: f64) -> Result<Strategy> {
        let kind: StrategyKind = self.kind.into();
        let mut s = match kind {
            StrategyKind::Doc => Strategy::doc(),
            StrategyKind::Fixed => {
                let p = match (self.p, self.p_scale) {
                    (Some(p), _) => p,
                    (None, Some(scale)) => (scale * honest.p[i]).min(1.0),
                    (None, None) => {
                        return Err(Error::InvalidScenario(
                            "fixed strategy needs `p` or `p_scale`".into(),
                        ))
                    }
                };
                Strategy::fixed(p, self.threshold_scale * honest.thresholds[i])
            }
            k => Strategy::adaptive(k, reference_rate),
        };
        s.hysteresis_low = self.hysteresis_low;
        s.from_interval = self.from_interval;
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GainModeSpec {
    #[default]
    ZieglerNichols,
    Manual,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GainScheduleSpec {
    #[default]
    Refreshed,
    Equilibrium,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ControllerSpec {
    #[serde(default)]
    pub gain_mode: GainModeSpec,
    #[serde(rename = "Kp", default)]
    pub kp: Option<f64>,
    #[serde(rename = "Ki", default)]
    pub ki: Option<f64>,
    #[serde(default = "one")]
    pub gain_scale: f64,
    /// Multiplies the punishment term of the error signal.
    #[serde(default = "one")]
    pub punishment_scale: f64,
    #[serde(default = "default_initial_p")]
    pub initial_p: f64,
    /// Start honest stations at their optimal access probability instead of `initial_p`.
    #[serde(default)]
    pub start_at_optimum: bool,
    #[serde(default)]
    pub gain_schedule: GainScheduleSpec,
}

impl Default for ControllerSpec {
    fn default() -> Self {
        Self {
            gain_mode: GainModeSpec::ZieglerNichols,
            kp: None,
            ki: None,
            gain_scale: 1.0,
            punishment_scale: 1.0,
            initial_p: INITIAL_PROBABILITY,
            start_at_optimum: false,
            gain_schedule: GainScheduleSpec::Refreshed,
        }
    }
}

impl ControllerSpec {
    pub fn config(&self) -> Result<ControllerConfig> {
        let gains = match self.gain_mode {
            GainModeSpec::ZieglerNichols => GainMode::ZieglerNichols,
            GainModeSpec::Manual => match (self.kp, self.ki) {
                (Some(kp), Some(ki)) => GainMode::Manual(Gains { kp, ki }),
                _ => {
                    return Err(Error::InvalidScenario(
                        "manual gain mode needs both Kp and Ki".into(),
                    ))
                }
            },
        };
        Ok(ControllerConfig {
            gains,
            gain_scale: self.gain_scale,
            punishment_scale: self.punishment_scale,
            initial: if self.start_at_optimum {
                InitialControl::Optimal
            } else {
                InitialControl::Probability(self.initial_p)
            },
            schedule: match self.gain_schedule {
                GainScheduleSpec::Refreshed => GainSchedule::Refreshed,
                GainScheduleSpec::Equilibrium => GainSchedule::Equilibrium,
            },
        })
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum MembershipAction {
    Join,
    Leave,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct EventSpec {
    pub interval: u64,
    pub station: usize,
    pub action: MembershipAction,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(deny_unknown_fields)]
pub struct MembershipSpec {
    #[serde(default)]
    pub initially_absent: Vec<usize>,
    #[serde(default)]
    pub events: Vec<EventSpec>,
}

impl MembershipSpec {
    pub fn membership(&self) -> Membership {
        Membership {
            initially_absent: self.initially_absent.clone(),
            events: self
                .events
                .iter()
                .map(|e| MembershipEvent {
                    interval: e.interval,
                    station: e.station,
                    join: e.action == MembershipAction::Join,
                })
                .collect(),
        }
    }
}

/// One point of a sweep: overrides applied on top of the base scenario.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SweepPoint {
    pub label: String,
    pub set: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Run the configured strategies; traces plus stability and reaction metrics.
    #[default]
    Episode,
    /// DOC against the static-optimal and non-opportunistic baselines.
    Fairness,
    /// One fixed strategy per grid point for the attacker stations.
    AttackGrid,
    /// Each adaptive strategy for the attacker stations.
    Adaptive,
    /// Every pair of grid strategies for two attackers.
    Coalition,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub kind: ExperimentKind,
    #[serde(default)]
    pub attackers: Vec<usize>,
    #[serde(default = "default_p_grid")]
    pub p_grid: Vec<f64>,
    #[serde(default = "default_threshold_scales")]
    pub threshold_scales: Vec<f64>,
    #[serde(default = "default_adaptive")]
    pub adaptive: Vec<StrategyKindSpec>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::Episode,
            attackers: Vec::new(),
            p_grid: default_p_grid(),
            threshold_scales: default_threshold_scales(),
            adaptive: default_adaptive(),
        }
    }
}

impl Scenario {
    pub fn station_count(&self) -> usize {
        self.stations.iter().map(|g| g.count).sum()
    }

    /// Per-station (channel, strategy) after expanding groups.
    pub fn expanded(&self) -> Vec<(&ChannelSpec, &StrategySpec)> {
        self.stations
            .iter()
            .flat_map(|g| std::iter::repeat_n((&g.channel, &g.strategy), g.count))
            .collect()
    }

    pub fn network_params(&self) -> Result<NetworkParams> {
        let models = self
            .expanded()
            .iter()
            .map(|(c, _)| c.model())
            .collect::<Result<Vec<_>>>()?;
        NetworkParams::new(self.tx_slots, self.interval_slots, models)
    }

    pub fn sampling(&self) -> Sampling {
        match self.sampling {
            SamplingSpec::Aggregate => Sampling::Aggregate,
            SamplingSpec::PerStation => Sampling::PerStation,
        }
    }

    /// Checks everything that can be checked without running a slot.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScenario(m));
        if self.name.is_empty() || !is_plain_label(&self.name) {
            return bad(format!("scenario name `{}` must be a plain identifier", self.name));
        }
        if self.stations.is_empty() || self.station_count() == 0 {
            return bad("scenario needs at least one station".into());
        }
        if self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        if self.warmup >= self.intervals && self.intervals > 0 {
            return bad(format!(
                "warmup ({}) must be shorter than the episode ({} intervals)",
                self.warmup, self.intervals
            ));
        }
        if !(self.tau_s > 0.0 && self.tau_s.is_finite()) {
            return bad("tau_s must be positive".into());
        }
        let params = self.network_params()?;
        self.controller.config()?;
        let n = params.stations();
        for (_, s) in self.expanded() {
            if s.kind == StrategyKindSpec::Fixed && s.p.is_none() && s.p_scale.is_none() {
                return bad("fixed strategy needs `p` or `p_scale`".into());
            }
            if let Some(p) = s.p {
                if !(0.0..=1.0).contains(&p) {
                    return bad(format!("strategy p {p} outside [0, 1]"));
                }
            }
        }
        let members = self.membership.membership();
        if let Some(s) = members
            .initially_absent
            .iter()
            .chain(members.events.iter().map(|e| &e.station))
            .find(|&&s| s >= n)
        {
            return bad(format!("membership names station {s}, but there are {n}"));
        }
        let exp = &self.experiment;
        if let Some(&a) = exp.attackers.iter().find(|&&a| a >= n) {
            return bad(format!("attacker {a} out of range for {n} stations"));
        }
        let needed = match exp.kind {
            ExperimentKind::AttackGrid | ExperimentKind::Adaptive => Some(1),
            ExperimentKind::Coalition => Some(2),
            _ => None,
        };
        if let Some(k) = needed {
            if exp.attackers.len() != k {
                return bad(format!(
                    "{:?} experiment needs exactly {k} attacker(s), got {}",
                    exp.kind,
                    exp.attackers.len()
                ));
            }
            if n < 2 {
                return bad("attack experiments need at least two stations".into());
            }
        }
        if matches!(exp.kind, ExperimentKind::AttackGrid | ExperimentKind::Coalition)
            && (exp.p_grid.is_empty() || exp.threshold_scales.is_empty())
        {
            return bad("attack grids must be nonempty".into());
        }
        if exp.p_grid.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return bad("p_grid entries must lie in [0, 1]".into());
        }
        if exp.threshold_scales.iter().any(|x| !(*x >= 0.0)) {
            return bad("threshold_scales must be non-negative".into());
        }
        if exp.kind == ExperimentKind::Adaptive
            && exp.adaptive.iter().any(|k| !StrategyKind::from(*k).is_adaptive())
        {
            return bad("`adaptive` lists only adaptive strategy kinds".into());
        }
        let base = serde_json::to_value(self).expect("scenario serializes");
        let keys = valid_keys(&base);
        for point in &self.sweep {
            if !is_plain_label(&point.label) {
                return bad(format!("sweep label `{}` must not contain , \" or newlines", point.label));
            }
            for key in point.set.keys() {
                if !keys.contains(key) {
                    return Err(unknown_key(key, &keys));
                }
            }
        }
        Ok(())
    }

    /// The scenario at each sweep point with its label; one unlabeled point
    /// when there is no sweep.
    pub fn sweep_points(&self) -> Result<Vec<(String, Scenario)>> {
        if self.sweep.is_empty() {
            return Ok(vec![("base".to_string(), self.clone())]);
        }
        self.sweep
            .iter()
            .map(|point| {
                let mut value = serde_json::to_value(self).expect("scenario serializes");
                for (k, v) in &point.set {
                    set_path(&mut value, k, v.clone())?;
                }
                let mut s: Scenario = from_value(value)?;
                s.sweep.clear();
                s.validate()?;
                Ok((point.label.clone(), s))
            })
            .collect()
    }
}

fn is_plain_label(s: &str) -> bool {
    !s.chars().any(|c| matches!(c, ',' | '"' | '\n' | '\r' | '/' | '\\'))
}

fn from_value(value: Value) -> Result<Scenario> {
    serde_json::from_value(value).map_err(|e| Error::InvalidScenario(e.to_string()))
}

/// Dotted leaf paths of a scenario value. Arrays of scalars, maps with free
/// keys and nulls count as leaves.
pub fn valid_keys(value: &Value) -> Vec<String> {
    fn walk(v: &Value, prefix: &str, out: &mut Vec<String>) {
        let join = |k: &str| {
            if prefix.is_empty() {
                k.to_string()
            } else {
                format!("{prefix}.{k}")
            }
        };
        match v {
            Value::Object(map) if prefix != "sweep" => {
                for (k, child) in map {
                    if k == "sweep" {
                        out.push(join(k));
                    } else {
                        walk(child, &join(k), out);
                    }
                }
            }
            Value::Array(items) if items.iter().any(Value::is_object) => {
                for (i, child) in items.iter().enumerate() {
                    walk(child, &join(&i.to_string()), out);
                }
            }
            _ => out.push(prefix.to_string()),
        }
    }
    let mut out = Vec::new();
    walk(value, "", &mut out);
    out.sort();
    out
}

fn unknown_key(key: &str, keys: &[String]) -> Error {
    Error::UnknownOverride {
        key: key.to_string(),
        valid: keys.join(", "),
    }
}

/// Replaces the value at `path`, which must name an existing leaf or a
/// node above one (`membership.events` replaces the whole list).
pub fn set_path(root: &mut Value, path: &str, new: Value) -> Result<()> {
    let keys = valid_keys(root);
    let known = keys
        .iter()
        .any(|k| k == path || k.strip_prefix(path).is_some_and(|rest| rest.starts_with('.')));
    if !known {
        return Err(unknown_key(path, &keys));
    }
    let mut cur = root;
    for seg in path.split('.') {
        cur = match cur {
            Value::Object(map) => map.get_mut(seg),
            Value::Array(items) => seg.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| unknown_key(path, &keys))?;
    }
    *cur = new;
    Ok(())
}

/// `key=value`, the value read as JSON when it parses and as a string otherwise.
pub fn parse_override(spec: &str) -> Result<(String, Value)> {
    let (k, v) = spec.split_once('=').ok_or_else(|| {
        Error::InvalidScenario(format!("override `{spec}` is not of the form key=value"))
    })?;
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.trim().to_string(), value))
}

/// Parses scenario text and applies overrides.
pub fn parse_scenario(text: &str, overrides: &[(String, Value)]) -> Result<Scenario> {
    let scenario: Scenario = serde_json::from_str(text)?;
    if overrides.is_empty() {
        scenario.validate()?;
        return Ok(scenario);
    }
    let mut value = serde_json::to_value(&scenario).expect("scenario serializes");
    for (k, v) in overrides {
        set_path(&mut value, k, v.clone())?;
    }
    let scenario = from_value(value)?;
    scenario.validate()?;
    Ok(scenario)
}

pub fn load_scenario(path: &Path, overrides: &[(String, Value)]) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scenario(&text, overrides)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "name": "t",
        "intervals": 20,
        "warmup": 5,
        "stations": [
            {"count": 2, "channel": {"rho": 1}},
            {"count": 3, "channel": {"kind": "jakes", "rho": 4}, "strategy": {"kind": "fixed", "p": 0.3}}
        ]
    }"#;

    #[test]
    fn defaults_fill_in() {
        let s = parse_scenario(BASE, &[]).unwrap();
        assert_eq!(s.station_count(), 5);
        assert_eq!(s.tx_slots, 10);
        assert_eq!(s.controller.gain_scale, 1.0);
        assert_eq!(s.experiment.p_grid.len(), 20);
        let p = s.network_params().unwrap();
        assert_eq!(p.models[4].rho(), 4.0);
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = parse_scenario("{\n  \"name\": \"x\",\n  oops\n}", &[]).unwrap_err();
        match err {
            Error::Parse { line, column, .. } => assert_eq!((line, column), (3, 3)),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = BASE.replace("\"warmup\"", "\"warm_up\"");
        assert!(matches!(parse_scenario(&text, &[]), Err(Error::Parse { .. })));
    }

    #[test]
    fn overrides_use_dotted_paths() {
        let o = vec![
            parse_override("controller.gain_scale=10").unwrap(),
            parse_override("stations.1.channel.rho=7").unwrap(),
            parse_override("experiment.p_grid=[0.5]").unwrap(),
        ];
        let s = parse_scenario(BASE, &o).unwrap();
        assert_eq!(s.controller.gain_scale, 10.0);
        assert_eq!(s.stations[1].channel.rho, 7.0);
        assert_eq!(s.experiment.p_grid, vec![0.5]);
    }

    #[test]
    fn overrides_can_replace_whole_nodes() {
        let o = vec![parse_override(r#"stations.1.channel={"kind":"constant","rate_bps":1e6}"#).unwrap()];
        let s = parse_scenario(BASE, &o).unwrap();
        assert_eq!(s.stations[1].channel.kind, ChannelKind::Constant);
        let bad = vec![parse_override("stations.1.chan={}").unwrap()];
        assert!(matches!(parse_scenario(BASE, &bad), Err(Error::UnknownOverride { .. })));
    }

    #[test]
    fn unknown_override_lists_keys() {
        let o = vec![parse_override("controller.gain=10").unwrap()];
        match parse_scenario(BASE, &o).unwrap_err() {
            Error::UnknownOverride { key, valid } => {
                assert_eq!(key, "controller.gain");
                assert!(valid.contains("controller.gain_scale"));
                assert!(valid.contains("stations.0.channel.W"));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn sweep_points_apply_sets() {
        let mut s = parse_scenario(BASE, &[]).unwrap();
        s.sweep = vec![
            SweepPoint {
                label: "rho=2".into(),
                set: [("stations.0.channel.rho".to_string(), Value::from(2.0))].into(),
            },
            SweepPoint {
                label: "rho=3".into(),
                set: [("stations.0.channel.rho".to_string(), Value::from(3.0))].into(),
            },
        ];
        s.validate().unwrap();
        let pts = s.sweep_points().unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[1].1.stations[0].channel.rho, 3.0);
        assert!(pts[1].1.sweep.is_empty());
        s.sweep[0].set.insert("nope".into(), Value::from(1));
        assert!(s.validate().is_err());
    }

    #[test]
    fn empty_sweep_is_one_point() {
        let s = parse_scenario(BASE, &[]).unwrap();
        assert_eq!(s.sweep_points().unwrap().len(), 1);
    }

    #[test]
    fn validation_failures() {
        let text = BASE.replace("\"count\": 2", "\"count\": 0").replace("\"count\": 3", "\"count\": 0");
        assert!(parse_scenario(&text, &[]).is_err());
        let o = vec![parse_override("replications=0").unwrap()];
        assert!(parse_scenario(BASE, &o).is_err());
        let o = vec![parse_override("membership.initially_absent=[9]").unwrap()];
        assert!(parse_scenario(BASE, &o).is_err());
        let o = vec![parse_override("experiment.kind=\"coalition\"").unwrap()];
        assert!(parse_scenario(BASE, &o).is_err());
    }
}
