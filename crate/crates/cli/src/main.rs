use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use doc_core::analytic::optimal_config;
use doc_core::control::{estimate_kh, stability_check, tune_gains};
use doc_core::experiments::{
    self, parse_override, run_scenario, write_results, Scenario, ScenarioResults,
};
use doc_core::experiments::scenario::SweepPoint;

/// Simulator and solver for distributed opportunistic scheduling with PI-controlled access.
#[derive(Parser)]
#[command(name = "docsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the optimal configuration and tuned gains; write config.json.
    Solve(Common),
    /// Run a scenario and write its result tables.
    Run(Common),
    /// Run a scenario over an ad hoc parameter axis.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Dotted key to sweep.
        #[arg(long)]
        param: String,
        /// Comma-separated values for the key.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Parse and check a scenario without running or writing anything.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    /// Master seed; defaults to the scenario's own.
    #[arg(long)]
    seed: Option<u64>,
    /// Results root; output goes to <out>/<scenario>/<timestamp>/.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Dotted-path override, e.g. controller.gain_scale=10.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn load(&self) -> Result<Scenario> {
        if !self.scenario.exists() {
            bail!("scenario file {} does not exist", self.scenario.display());
        }
        let overrides = self
            .set
            .iter()
            .map(|s| parse_override(s))
            .collect::<doc_core::Result<Vec<_>>>()?;
        Ok(experiments::load_scenario(&self.scenario, &overrides)?)
    }
}

fn output_dir(root: &Path, name: &str) -> Result<PathBuf> {
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ").to_string();
    let base = root.join(name);
    let mut dir = base.join(&stamp);
    let mut k = 1;
    while dir.exists() {
        dir = base.join(format!("{stamp}-{k}"));
        k += 1;
    }
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn solve(common: &Common) -> Result<()> {
    let scenario = common.load()?;
    let params = scenario.network_params()?;
    let opt = optimal_config(&params)?;
    let n = params.stations();
    let controls: f64 = opt.control * n as f64;
    let kh = estimate_kh(controls, params.interval());
    let gains = tune_gains(n, kh);
    println!(
        "{:>4} {:>8} {:>14} {:>10} {:>12} {:>14} {:>10}",
        "i", "rho", "threshold_bps", "p", "P", "rate_bps", "p_min"
    );
    let mut stations = Vec::new();
    for i in 0..n {
        println!(
            "{:>4} {:>8.3} {:>14.1} {:>10.6} {:>12.4} {:>14.1} {:>10.6}",
            i,
            params.models[i].rho(),
            opt.thresholds[i],
            opt.p[i],
            opt.control,
            opt.rates[i],
            opt.p_min[i]
        );
        stations.push(json!({
            "station": i,
            "rho": params.models[i].rho(),
            "threshold_bps": opt.thresholds[i],
            "p": opt.p[i],
            "P": opt.control,
            "rate_bps": opt.rates[i],
            "p_min": opt.p_min[i],
        }));
    }
    let stable = stability_check(gains.kp, gains.ki, n, kh);
    println!("Delta = {}", opt.delta);
    println!("K_H = {kh}  Kp = {}  Ki = {}  stable = {stable}", gains.kp, gains.ki);
    let config = json!({
        "scenario": scenario.name,
        "stations": stations,
        "delta": opt.delta,
        "K_H": kh,
        "Kp": gains.kp,
        "Ki": gains.ki,
        "stable": stable,
    });
    let dir = output_dir(&common.out, &scenario.name)?;
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn print_summary(results: &ScenarioResults) {
    println!("{:<48} {:>8} {:>16} {:>14}", "param", "station", "throughput_bps", "ci_halfwidth");
    for r in &results.summary {
        let hw = r.half_width.map(|h| format!("{h:.1}")).unwrap_or_else(|| "-".into());
        println!("{:<48} {:>8} {:>16.1} {:>14}", r.param, r.station, r.throughput, hw);
    }
    for m in &results.metrics {
        println!("{} {} = {}", m.param, m.metric, m.value);
    }
}

fn run(common: &Common, scenario: Scenario) -> Result<()> {
    let seed = common.seed.unwrap_or(scenario.seed);
    let results = run_scenario(&scenario, seed)?;
    let dir = output_dir(&common.out, &scenario.name)?;
    write_results(&results, &dir)?;
    print_summary(&results);
    println!("wrote {}", dir.display());
    Ok(())
}

fn with_sweep(mut scenario: Scenario, param: &str, values: &[String]) -> Result<Scenario> {
    scenario.sweep = values
        .iter()
        .map(|v| {
            let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.clone()));
            SweepPoint {
                label: format!("{param}={v}"),
                set: [(param.to_string(), value)].into(),
            }
        })
        .collect();
    scenario.validate()?;
    Ok(scenario)
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("DOC_SIM_THREADS") {
        let threads: usize = v
            .parse()
            .with_context(|| format!("DOC_SIM_THREADS must be a positive integer, got `{v}`"))?;
        doc_core::par::set_threads(threads);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = configure_threads().and_then(|_| match &cli.command {
        Command::Solve(c) => solve(c),
        Command::Run(c) => c.load().and_then(|s| run(c, s)),
        Command::Sweep { common, param, values } => common
            .load()
            .and_then(|s| with_sweep(s, param, values))
            .and_then(|s| run(common, s)),
        Command::Validate(c) => c.load().map(|s| {
            println!(
                "{}: ok ({} stations, {} sweep point(s), {:?} experiment)",
                s.name,
                s.station_count(),
                s.sweep.len().max(1),
                s.experiment.kind
            );
        }),
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_dirs_never_collide() {
        let root = tempfile::tempdir().unwrap();
        let a = output_dir(root.path(), "s").unwrap();
        let b = output_dir(root.path(), "s").unwrap();
        assert_ne!(a, b);
        assert!(a.is_dir() && b.is_dir());
        assert_eq!(a.parent(), Some(root.path().join("s").as_path()));
    }

    #[test]
    fn sweep_values_parse_as_json() {
        let base = r#"{"name": "x", "stations": [{"count": 2}]}"#;
        let s = doc_core::experiments::scenario::parse_scenario(base, &[]).unwrap();
        let s = with_sweep(s, "stations.0.channel.rho", &["2".into(), "7.5".into()]).unwrap();
        assert_eq!(s.sweep.len(), 2);
        assert_eq!(s.sweep[1].label, "stations.0.channel.rho=7.5");
        assert_eq!(s.sweep[1].set["stations.0.channel.rho"], serde_json::json!(7.5));
    }
}
