//! Statistics and CSV export for a log file or a live `/log` endpoint.

use std::fs;
use std::time::Duration;

use anyhow::{bail, Context, Result};

use poolea_core::analyze::{compute_stats, export_csv, parse_log, Summary};

use crate::config::AnalyzeConfig;

pub fn read_input(input: &str) -> Result<Vec<u8>> {
    if input.starts_with("http://") || input.starts_with("https://") {
        let response = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()?
            .get(input)
            .send()
            .with_context(|| format!("fetching {input}"))?;
        if !response.status().is_success() {
            bail!("fetching {input}: HTTP {}", response.status());
        }
        Ok(response.bytes()?.to_vec())
    } else {
        fs::read(input).with_context(|| format!("reading {input}"))
    }
}

pub fn run(config: &AnalyzeConfig) -> Result<Summary> {
    let raw = read_input(&config.input)?;
    let parsed = parse_log(&raw).with_context(|| format!("parsing {}", config.input))?;
    if parsed.skipped > 0 {
        eprintln!("skipped {} malformed line(s)", parsed.skipped);
    }
    let stats = compute_stats(&parsed.events);
    export_csv(&stats, &config.out_dir)
        .with_context(|| format!("writing to {}", config.out_dir.display()))?;
    Ok(Summary::from(&stats))
}
