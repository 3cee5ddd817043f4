//! Statistics over a pool log: who contributed, for how long, how often.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pool::{LogEvent, Op};

/// Histogram bin width in decades.
pub const BIN_WIDTH: f64 = 0.5;

/// More malformed lines than this fraction means the file is not a log.
pub const MAX_MALFORMED_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedLog {
    pub events: Vec<LogEvent>,
    pub skipped: usize,
}

/// Parses a log as served by `/log` (one JSON array) or as persisted
/// (one event per line). Malformed lines are skipped and counted.
pub fn parse_log(raw: &[u8]) -> Result<ParsedLog> {
    let text = String::from_utf8_lossy(raw);
    let trimmed = text.trim_start();
    if trimmed.is_empty() {
        return Ok(ParsedLog::default());
    }
    if trimmed.starts_with('[') {
        return match serde_json::from_str::<Vec<serde_json::Value>>(trimmed) {
            Ok(values) => {
                let total = values.len();
                let events: Vec<LogEvent> = values
                    .into_iter()
                    .filter_map(|v| serde_json::from_value(v).ok())
                    .collect();
                check_malformed(events, total)
            }
            Err(_) => Err(Error::MalformedLog {
                malformed: 1,
                total: 1,
            }),
        };
    }
    let mut events = Vec::new();
    let mut total = 0;
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        total += 1;
        if let Ok(e) = serde_json::from_str::<LogEvent>(line) {
            events.push(e);
        }
    }
    check_malformed(events, total)
}

fn check_malformed(events: Vec<LogEvent>, total: usize) -> Result<ParsedLog> {
    let skipped = total - events.len();
    if skipped as f64 > MAX_MALFORMED_FRACTION * total as f64 {
        return Err(Error::MalformedLog {
            malformed: skipped,
            total,
        });
    }
    Ok(ParsedLog { events, skipped })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub slope: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ExperimentStats {
    pub distinct_clients: usize,
    /// PUTs per client, most first; equal counts ordered by client id.
    pub ranked_put_counts: Vec<(String, u64)>,
    pub duration_seconds: f64,
    /// `(lower edge in log10 seconds, count)`, contiguous from 0.0.
    pub interval_histogram: Vec<(f64, u64)>,
    pub median_interval_seconds: Option<f64>,
    pub power_law: Option<PowerLawFit>,
    /// Seconds between consecutive PUTs of the same client, sorted.
    #[serde(skip)]
    intervals: Vec<f64>,
}

impl ExperimentStats {
    pub fn intervals(&self) -> &[f64] {
        &self.intervals
    }

    pub fn total_puts(&self) -> u64 {
        self.ranked_put_counts.iter().map(|(_, c)| c).sum()
    }

    /// Fraction of intervals strictly shorter than `seconds`; 0 when there
    /// are none.
    pub fn fraction_under(&self, seconds: f64) -> f64 {
        if self.intervals.is_empty() {
            return 0.0;
        }
        let below = self.intervals.partition_point(|&x| x < seconds);
        below as f64 / self.intervals.len() as f64
    }
}

/// Histogram bin of an interval: the first bin also takes everything
/// below one second.
pub fn bin_index(seconds: f64) -> usize {
    if seconds <= 1.0 {
        return 0;
    }
    (seconds.log10() / BIN_WIDTH).floor() as usize
}

pub fn compute_stats(events: &[LogEvent]) -> ExperimentStats {
    let mut distinct: HashMap<&str, ()> = HashMap::new();
    let mut counts: HashMap<&str, u64> = HashMap::new();
    let mut last_put: HashMap<&str, u64> = HashMap::new();
    let mut intervals = Vec::new();
    let mut first = None;
    let mut last = None;
    for e in events {
        distinct.insert(&e.client_id, ());
        if e.op != Op::Put {
            continue;
        }
        *counts.entry(&e.client_id).or_default() += 1;
        first.get_or_insert(e.timestamp_ms);
        last = Some(e.timestamp_ms);
        if let Some(prev) = last_put.insert(&e.client_id, e.timestamp_ms) {
            intervals.push(e.timestamp_ms.saturating_sub(prev) as f64 / 1000.0);
        }
    }

    let mut ranked: Vec<(String, u64)> =
        counts.into_iter().map(|(k, v)| (k.to_owned(), v)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

    intervals.sort_by(f64::total_cmp);
    let mut histogram = Vec::new();
    for &x in &intervals {
        let bin = bin_index(x);
        if histogram.len() <= bin {
            histogram.resize(bin + 1, 0);
        }
        histogram[bin] += 1;
    }
    let median = match intervals.len() {
        0 => None,
        n if n % 2 == 1 => Some(intervals[n / 2]),
        n => Some((intervals[n / 2 - 1] + intervals[n / 2]) / 2.0),
    };
    let only_counts: Vec<u64> = ranked.iter().map(|(_, c)| *c).collect();

    ExperimentStats {
        distinct_clients: distinct.len(),
        duration_seconds: match (first, last) {
            (Some(a), Some(b)) => b.saturating_sub(a) as f64 / 1000.0,
            _ => 0.0,
        },
        interval_histogram: histogram
            .into_iter()
            .enumerate()
            .map(|(i, c)| (i as f64 * BIN_WIDTH, c))
            .collect(),
        median_interval_seconds: median,
        power_law: fit_power_law(&only_counts).ok(),
        ranked_put_counts: ranked,
        intervals,
    }
}

/// Least squares of log10(count) on log10(rank) over the ranks whose
/// count exceeds one. Needs at least three such ranks.
pub fn fit_power_law(ranked_counts: &[u64]) -> Result<PowerLawFit> {
    let points: Vec<(f64, f64)> = ranked_counts
        .iter()
        .enumerate()
        .filter(|&(_, &c)| c > 1)
        .map(|(i, &c)| (((i + 1) as f64).log10(), (c as f64).log10()))
        .collect();
    let n = points.len();
    if n < 3 {
        return Err(Error::UndefinedFit(n));
    }
    let nf = n as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    Ok(PowerLawFit {
        slope,
        stderr: (rss / (nf - 2.0) / sxx).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Summary {
    pub distinct_clients: usize,
    pub total_puts: u64,
    pub duration_seconds: f64,
    pub interval_count: usize,
    pub median_interval_seconds: Option<f64>,
    pub fraction_under_4s: f64,
    pub power_law_slope: Option<f64>,
    pub power_law_stderr: Option<f64>,
}

impl From<&ExperimentStats> for Summary {
    fn from(s: &ExperimentStats) -> Self {
        Self {
            distinct_clients: s.distinct_clients,
            total_puts: s.total_puts(),
            duration_seconds: s.duration_seconds,
            interval_count: s.intervals.len(),
            median_interval_seconds: s.median_interval_seconds,
            fraction_under_4s: s.fraction_under(4.0),
            power_law_slope: s.power_law.map(|f| f.slope),
            power_law_stderr: s.power_law.map(|f| f.stderr),
        }
    }
}

pub const RANKED_PUTS_CSV: &str = "ranked_puts.csv";
pub const INTERVALS_CSV: &str = "intervals.csv";
pub const SUMMARY_CSV: &str = "summary.csv";

/// Writes `ranked_puts.csv`, `intervals.csv` and `summary.csv` into `dir`,
/// creating it if needed.
pub fn export_csv(stats: &ExperimentStats, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;

    let mut w = csv::Writer::from_path(dir.join(RANKED_PUTS_CSV))?;
    w.write_record(["rank", "clientId", "count"])?;
    for (i, (client, count)) in stats.ranked_put_counts.iter().enumerate() {
        w.write_record([(i + 1).to_string(), client.clone(), count.to_string()])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join(INTERVALS_CSV))?;
    w.write_record(["log10BinLow", "count"])?;
    for (low, count) in &stats.interval_histogram {
        w.write_record([format!("{low:.1}"), count.to_string()])?;
    }
    w.flush()?;

    // serde cannot infer a header for an empty sequence, so write it by hand.
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(dir.join(SUMMARY_CSV))?;
    w.write_record([
        "distinctClients",
        "totalPuts",
        "durationSeconds",
        "intervalCount",
        "medianIntervalSeconds",
        "fractionUnder4s",
        "powerLawSlope",
        "powerLawStderr",
    ])?;
    w.serialize(Summary::from(stats))?;
    w.flush()?;
    Ok(())
}

pub fn read_summary(path: &Path) -> Result<Summary> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .next()
        .ok_or_else(|| Error::Csv("summary has no data row".into()))?
        .map_err(Error::from)
}
