//! CSV emission. Floats use the shortest representation that round-trips.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::ScenarioResults;
use crate::error::{Error, Result};
use crate::sim::EpisodeTrace;

pub const SUMMARY_HEADER: &str = "param,station,throughput_bps,ci_halfwidth";
pub const METRICS_HEADER: &str = "param,metric,value";
pub const TRACE_HEADER: &str = "interval,station,p,P,E,F,t,bits,successes";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn summary_csv(results: &ScenarioResults) -> String {
    let mut s = String::from(SUMMARY_HEADER);
    s.push('\n');
    for r in &results.summary {
        let _ = writeln!(s, "{},{},{},{}", r.param, r.station, r.throughput, opt(r.half_width));
    }
    s
}

pub fn metrics_csv(results: &ScenarioResults) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for r in &results.metrics {
        let _ = writeln!(s, "{},{},{}", r.param, r.metric, r.value);
    }
    s
}

/// `bits` is the delivered data with mini-slots of `tau_s` seconds.
pub fn trace_csv(trace: &EpisodeTrace, tau_s: f64) -> String {
    let mut s = String::from(TRACE_HEADER);
    s.push('\n');
    for r in &trace.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.interval,
            r.station,
            r.p,
            opt(r.control),
            opt(r.error),
            opt(r.punishment),
            r.channel_time,
            r.data * tau_s,
            r.successes
        );
    }
    s
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `summary.csv`, `metrics.csv` and `traces/*.csv` under `dir`.
pub fn write_results(results: &ScenarioResults, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(&dir.join("summary.csv"), &summary_csv(results))?;
    write(&dir.join("metrics.csv"), &metrics_csv(results))?;
    if !results.traces.is_empty() {
        let traces = dir.join("traces");
        fs::create_dir_all(&traces).map_err(|e| Error::io(&traces, e))?;
        for (name, t) in &results.traces {
            let file = name.replace(['|', ';', '='], "_");
            write(&traces.join(format!("{file}.csv")), &trace_csv(t, results.tau_s))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::SummaryRow;
    use crate::sim::TraceRow;

    #[test]
    fn headers_and_rows() {
        let results = ScenarioResults {
            name: "x".into(),
            tau_s: 1e-5,
            summary: vec![SummaryRow {
                param: "doc".into(),
                station: "0".into(),
                throughput: 1.5e6,
                half_width: None,
            }],
            ..Default::default()
        };
        assert_eq!(summary_csv(&results), format!("{SUMMARY_HEADER}\ndoc,0,1500000,\n"));
        let trace = EpisodeTrace {
            stations: 1,
            rows: vec![TraceRow {
                interval: 0,
                station: 0,
                p: 0.5,
                threshold: 0.0,
                control: Some(2.0),
                error: None,
                punishment: None,
                channel_time: 11.0,
                data: 1e8,
                successes: 1,
            }],
            elapsed: vec![100],
        };
        assert_eq!(trace_csv(&trace, 0.5), format!("{TRACE_HEADER}\n0,0,0.5,2,,,11,50000000,1\n"));
    }

    #[test]
    fn writes_files() {
        let dir = tempfile::tempdir().unwrap();
        let results = ScenarioResults {
            name: "x".into(),
            tau_s: 1e-5,
            traces: vec![("a|b".into(), EpisodeTrace::default())],
            ..Default::default()
        };
        write_results(&results, dir.path()).unwrap();
        assert!(dir.path().join("summary.csv").exists());
        assert!(dir.path().join("traces/a_b.csv").exists());
    }
}
