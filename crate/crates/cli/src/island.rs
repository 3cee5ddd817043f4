//! A native island migrating through a pool server over HTTP.

use std::fs;
use std::net::IpAddr;
use std::time::Duration;

use anyhow::{Context, Result};
use reqwest::blocking::Client;
use reqwest::header::CONTENT_TYPE;
use reqwest::StatusCode;
use serde::Serialize;

use poolea_core::island::BackgroundTransport;
use poolea_core::{
    run_island, wire, Chromosome, EaParams, IslandReport, MigrationTransport, NoopTransport,
    TrapSpec,
};

use crate::config::IslandConfig;

/// Blocking client for `/one` and `/random`. Every failure, including a
/// timeout, is swallowed: the caller only ever sees "nothing arrived".
pub struct HttpTransport {
    client: Client,
    one_url: String,
    random_url: String,
    malformed: u64,
}

impl HttpTransport {
    pub fn new(base_url: &str, bind: Option<IpAddr>, timeout: Duration) -> Result<Self> {
        let base = base_url.trim_end_matches('/');
        let client = Client::builder()
            .timeout(timeout)
            .connect_timeout(timeout)
            .local_address(bind)
            .build()
            .context("building HTTP client")?;
        Ok(Self {
            client,
            one_url: format!("{base}/one"),
            random_url: format!("{base}/random"),
            malformed: 0,
        })
    }
}

impl MigrationTransport for HttpTransport {
    fn send_one(&mut self, c: &Chromosome) {
        let _ = self
            .client
            .put(&self.one_url)
            .header(CONTENT_TYPE, "application/json")
            .body(wire::encode_chromosome_body(c))
            .send();
    }

    fn fetch_random(&mut self) -> Option<Chromosome> {
        let response = self.client.get(&self.random_url).send().ok()?;
        if response.status() != StatusCode::OK {
            return None;
        }
        let body = response.bytes().ok()?;
        match wire::decode_chromosome(&body) {
            Ok(c) => Some(c),
            Err(_) => {
                self.malformed += 1;
                None
            }
        }
    }

    fn malformed_replies(&self) -> u64 {
        self.malformed
    }
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct IslandOutput {
    pub seed: u64,
    pub server: Option<String>,
    pub spec: TrapSpec,
    pub params: EaParams,
    pub report: IslandReport,
}

pub fn run(config: IslandConfig) -> Result<IslandOutput> {
    let seed = config.seed.unwrap_or_else(rand::random);
    let report = match &config.server {
        Some(url) => {
            let http = HttpTransport::new(url, config.bind, config.timeout)?;
            let mut transport = BackgroundTransport::spawn(http);
            let report = run_island(&config.params, &config.spec, &mut transport, seed);
            // Give queued requests one time budget to go out.
            transport.close(config.timeout);
            report
        }
        None => run_island(&config.params, &config.spec, &mut NoopTransport, seed),
    };
    Ok(IslandOutput {
        seed,
        server: config.server,
        spec: config.spec,
        params: config.params,
        report,
    })
}

pub fn write_output(output: &IslandOutput, config: &IslandConfig) -> Result<()> {
    let text = serde_json::to_string_pretty(output)?;
    match &config.report {
        Some(path) => {
            fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
        }
        None => crate::print_stdout(&text),
    }
}
