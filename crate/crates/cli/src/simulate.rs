//! Churn simulation: the synthetic log as NDJSON plus a JSON report.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use poolea_core::churn::{run_simulation, ChurnProfile, SimulationReport};
use poolea_core::{wire, EaParams, TrapSpec};

use crate::config::SimulateConfig;

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SimulateOutput<'a> {
    pub profile: &'a ChurnProfile,
    pub spec: TrapSpec,
    pub params: &'a EaParams,
    /// Path of the synthetic log, as given.
    pub log: &'a Path,
    #[serde(flatten)]
    pub report: &'a SimulationReport,
}

pub fn run(config: &SimulateConfig) -> Result<SimulationReport> {
    let report = run_simulation(&config.profile, &config.params, &config.spec)?;

    let file =
        File::create(&config.log).with_context(|| format!("creating {}", config.log.display()))?;
    let mut log = BufWriter::new(file);
    for event in &report.synthetic_log {
        writeln!(log, "{}", wire::encode_log_line(event))?;
    }
    log.flush()?;

    let output = SimulateOutput {
        profile: &config.profile,
        spec: config.spec,
        params: &config.params,
        log: &config.log,
        report: &report,
    };
    let text = serde_json::to_string_pretty(&output)? + "\n";
    std::fs::write(&config.report, text)
        .with_context(|| format!("writing {}", config.report.display()))?;
    Ok(report)
}
