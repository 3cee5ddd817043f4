//! Command line, environment and config file.
//!
//! Every setting can come from a flag, a `POOLEA_*` environment variable or
//! the matching section of the JSON file named by `--config`, in that order
//! of precedence. Settings left unset everywhere take their defaults. The
//! file sections mirror the flags in camelCase, for example:
//!
//! ```json
//! {
//!   "serve": { "listen": "0.0.0.0:8080", "spec": { "traps": 40 }, "logPath": "pool.ndjson" },
//!   "island": { "server": "http://127.0.0.1:8080", "ea": { "migrationPeriod": 50 } },
//!   "simulate": { "zipfExponent": 1.2, "seed": 7 },
//!   "analyze": { "input": "pool.ndjson", "outDir": "analysis" }
//! }
//! ```

use std::fs;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use poolea_core::churn::{self, ChurnProfile, IntervalModel, ParticipantRange};
use poolea_core::{EaParams, ExperimentConfig, TrapSpec};

pub const DEFAULT_LISTEN: SocketAddr = SocketAddr::new(IpAddr::V4(Ipv4Addr::LOCALHOST), 8080);
pub const DEFAULT_TIMEOUT_MS: u64 = 2000;

#[derive(Debug, Parser)]
#[command(
    name = "poolea",
    version,
    about = "Pool-based island GA on deceptive traps"
)]
pub struct Cli {
    /// JSON config file; flags and environment variables take precedence.
    #[arg(long, global = true, env = "POOLEA_CONFIG", value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Serve the migration pool over HTTP.
    Serve(ServeArgs),
    /// Run one native island, migrating through a pool server.
    Island(IslandArgs),
    /// Simulate a volunteer crowd in virtual time; writes a log and a report.
    Simulate(SimulateArgs),
    /// Recompute experiment statistics from a pool log and export CSV.
    Analyze(AnalyzeArgs),
}

/// Fills the fields still unset in `self` from `lower`.
macro_rules! layered {
    ($ty:ident { $($field:ident),* $(,)? }) => {
        impl $ty {
            pub fn or(self, lower: Self) -> Self {
                Self { $($field: self.$field.or(lower.$field)),* }
            }
        }
    };
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, rename_all = "camelCase", deny_unknown_fields)]
pub struct SpecArgs {
    /// Bits per trap.
    #[arg(long, env = "POOLEA_TRAP_LENGTH")]
    pub trap_length: Option<usize>,
    /// Number of concatenated traps.
    #[arg(long, env = "POOLEA_TRAPS")]
    pub traps: Option<usize>,
}

layered!(SpecArgs { trap_length, traps });

impl SpecArgs {
    pub fn resolve(&self, default: TrapSpec) -> Result<TrapSpec> {
        Ok(TrapSpec::new(
            self.trap_length.unwrap_or(default.trap_length()),
            self.traps.unwrap_or(default.trap_count()),
        )?)
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, rename_all = "camelCase", deny_unknown_fields)]
pub struct EaArgs {
    #[arg(long = "population", env = "POOLEA_POPULATION")]
    pub population_size: Option<usize>,
    #[arg(long = "elite", env = "POOLEA_ELITE")]
    pub elite_size: Option<usize>,
    #[arg(long = "tournament", env = "POOLEA_TOURNAMENT")]
    pub tournament_size: Option<usize>,
    #[arg(long, env = "POOLEA_CROSSOVER_RATE")]
    pub crossover_rate: Option<f64>,
    /// Per-bit flip probability [default: 1 / chromosome length].
    #[arg(long = "mutation-rate", env = "POOLEA_MUTATION_RATE")]
    pub mutation_rate_per_bit: Option<f64>,
    /// Generations between migrations.
    #[arg(long, env = "POOLEA_MIGRATION_PERIOD")]
    pub migration_period: Option<u64>,
    #[arg(long, env = "POOLEA_MAX_GENERATIONS")]
    pub max_generations: Option<u64>,
}

layered!(EaArgs {
    population_size,
    elite_size,
    tournament_size,
    crossover_rate,
    mutation_rate_per_bit,
    migration_period,
    max_generations,
});

impl EaArgs {
    pub fn resolve(&self) -> Result<EaParams> {
        let d = EaParams::default();
        let params = EaParams {
            population_size: self.population_size.unwrap_or(d.population_size),
            elite_size: self.elite_size.unwrap_or(d.elite_size),
            tournament_size: self.tournament_size.unwrap_or(d.tournament_size),
            crossover_rate: self.crossover_rate.unwrap_or(d.crossover_rate),
            mutation_rate_per_bit: self.mutation_rate_per_bit.or(d.mutation_rate_per_bit),
            migration_period: self.migration_period.unwrap_or(d.migration_period),
            max_generations: self.max_generations.or(d.max_generations),
        };
        params.validate()?;
        Ok(params)
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, rename_all = "camelCase", deny_unknown_fields)]
pub struct ServeArgs {
    /// Address to listen on [default: 127.0.0.1:8080].
    #[arg(long, env = "POOLEA_LISTEN")]
    pub listen: Option<SocketAddr>,
    /// Overrides the port of the listen address.
    #[arg(long, env = "POOLEA_PORT")]
    pub port: Option<u16>,
    #[command(flatten)]
    pub spec: SpecArgs,
    /// Random chromosomes placed in the pool at experiment start.
    #[arg(long, env = "POOLEA_SEED_COUNT")]
    pub seed_count: Option<usize>,
    /// Pool capacity; the oldest entry is evicted first [default: unbounded].
    #[arg(long, env = "POOLEA_CAPACITY")]
    pub capacity: Option<usize>,
    /// Seed for pool seeding and GET sampling.
    #[arg(long, env = "POOLEA_SEED")]
    pub seed: Option<u64>,
    /// Event log, one JSON object per line [default: poolea-log.ndjson].
    #[arg(long, env = "POOLEA_LOG_PATH")]
    pub log_path: Option<PathBuf>,
    /// Directory served for any path other than the API routes.
    #[arg(long, env = "POOLEA_STATIC_DIR")]
    pub static_dir: Option<PathBuf>,
    /// Enable POST /admin/reset, accepted from loopback clients only.
    #[arg(long, env = "POOLEA_ADMIN", num_args = 0..=1, default_missing_value = "true")]
    pub admin: Option<bool>,
    /// Take the client address from X-Forwarded-For (behind a proxy).
    #[arg(long, env = "POOLEA_TRUST_FORWARDED_FOR", num_args = 0..=1, default_missing_value = "true")]
    pub trust_forwarded_for: Option<bool>,
    /// Fixed key for client anonymisation [default: random per start].
    #[arg(long, env = "POOLEA_ANONYMIZER_SEED")]
    pub anonymizer_seed: Option<u64>,
}

layered!(ServeArgs {
    listen,
    port,
    spec,
    seed_count,
    capacity,
    seed,
    log_path,
    static_dir,
    admin,
    trust_forwarded_for,
    anonymizer_seed,
});

#[derive(Debug, Clone, PartialEq)]
pub struct ServeConfig {
    pub listen: SocketAddr,
    pub experiment: ExperimentConfig,
    pub log_path: PathBuf,
    pub static_dir: Option<PathBuf>,
    pub admin: bool,
    pub trust_forwarded_for: bool,
    pub anonymizer_seed: Option<u64>,
}

impl ServeArgs {
    pub fn resolve(self) -> Result<ServeConfig> {
        let mut listen = self.listen.unwrap_or(DEFAULT_LISTEN);
        if let Some(port) = self.port {
            listen.set_port(port);
        }
        let d = ExperimentConfig::default();
        let experiment = ExperimentConfig {
            spec: self.spec.resolve(d.spec)?,
            seed_count: self.seed_count.unwrap_or(d.seed_count),
            capacity: self.capacity.or(d.capacity),
            seed: self.seed.unwrap_or(d.seed),
        };
        experiment.validate()?;
        Ok(ServeConfig {
            listen,
            experiment,
            log_path: self.log_path.unwrap_or_else(|| "poolea-log.ndjson".into()),
            static_dir: self.static_dir,
            admin: self.admin.unwrap_or(false),
            trust_forwarded_for: self.trust_forwarded_for.unwrap_or(false),
            anonymizer_seed: self.anonymizer_seed,
        })
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, rename_all = "camelCase", deny_unknown_fields)]
pub struct IslandArgs {
    /// Pool server base URL; without one the island runs alone.
    #[arg(long, env = "POOLEA_SERVER")]
    pub server: Option<String>,
    /// Local address to connect from.
    #[arg(long, env = "POOLEA_BIND")]
    pub bind: Option<IpAddr>,
    /// Time budget per request in milliseconds [default: 2000].
    #[arg(long, env = "POOLEA_TIMEOUT_MS")]
    pub timeout_ms: Option<u64>,
    #[command(flatten)]
    pub spec: SpecArgs,
    #[command(flatten)]
    pub ea: EaArgs,
    /// GA seed [default: drawn from the OS and recorded in the report].
    #[arg(long, env = "POOLEA_SEED")]
    pub seed: Option<u64>,
    /// Report file [default: stdout].
    #[arg(long, env = "POOLEA_REPORT")]
    pub report: Option<PathBuf>,
}

layered!(IslandArgs {
    server,
    bind,
    timeout_ms,
    spec,
    ea,
    seed,
    report,
});

#[derive(Debug, Clone, PartialEq)]
pub struct IslandConfig {
    pub server: Option<String>,
    pub bind: Option<IpAddr>,
    pub timeout: Duration,
    pub spec: TrapSpec,
    pub params: EaParams,
    pub seed: Option<u64>,
    pub report: Option<PathBuf>,
}

impl IslandArgs {
    pub fn resolve(self) -> Result<IslandConfig> {
        let timeout_ms = self.timeout_ms.unwrap_or(DEFAULT_TIMEOUT_MS);
        if timeout_ms == 0 {
            bail!("timeout must be positive");
        }
        if let Some(server) = &self.server {
            if !server.starts_with("http://") {
                bail!("server URL must start with http://, got {server:?}");
            }
        }
        Ok(IslandConfig {
            server: self.server.map(|s| s.trim_end_matches('/').to_owned()),
            bind: self.bind,
            timeout: Duration::from_millis(timeout_ms),
            spec: self.spec.resolve(TrapSpec::default())?,
            params: self.ea.resolve()?,
            seed: self.seed,
            report: self.report,
        })
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, rename_all = "camelCase", deny_unknown_fields)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    #[command(flatten)]
    pub ea: EaArgs,
    /// Simulation seed [default: 0].
    #[arg(long, env = "POOLEA_SEED")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub participant_min: Option<u32>,
    #[arg(long)]
    pub participant_max: Option<u32>,
    #[arg(long)]
    pub zipf_exponent: Option<f64>,
    /// Migration cycles contributed by the top participant.
    #[arg(long)]
    pub top_quota: Option<u32>,
    /// Log-normal location of seconds per cycle.
    #[arg(long)]
    pub interval_mu: Option<f64>,
    /// Log-normal scale of seconds per cycle.
    #[arg(long)]
    pub interval_sigma: Option<f64>,
    /// Seconds over which participants join.
    #[arg(long)]
    pub join_spread: Option<f64>,
    /// Synthetic log output [default: simulation-log.ndjson].
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Report output [default: simulation-report.json].
    #[arg(long)]
    pub report: Option<PathBuf>,
}

layered!(SimulateArgs {
    spec,
    ea,
    seed,
    participant_min,
    participant_max,
    zipf_exponent,
    top_quota,
    interval_mu,
    interval_sigma,
    join_spread,
    log,
    report,
});

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateConfig {
    pub profile: ChurnProfile,
    pub spec: TrapSpec,
    pub params: EaParams,
    pub log: PathBuf,
    pub report: PathBuf,
}

impl SimulateArgs {
    pub fn resolve(self) -> Result<SimulateConfig> {
        let d = ChurnProfile::default();
        let profile = ChurnProfile {
            participant_range: ParticipantRange {
                min: self.participant_min.unwrap_or(d.participant_range.min),
                max: self.participant_max.unwrap_or(d.participant_range.max),
            },
            zipf_exponent: self.zipf_exponent.unwrap_or(d.zipf_exponent),
            top_quota: self.top_quota.unwrap_or(d.top_quota),
            interval_model: IntervalModel {
                mu: self.interval_mu.unwrap_or(d.interval_model.mu),
                sigma: self.interval_sigma.unwrap_or(d.interval_model.sigma),
            },
            join_spread: self.join_spread.unwrap_or(d.join_spread),
            seed: self.seed.unwrap_or(d.seed),
        };
        profile.validate()?;
        Ok(SimulateConfig {
            profile,
            spec: self.spec.resolve(churn::default_simulation_spec())?,
            params: self.ea.resolve()?,
            log: self.log.unwrap_or_else(|| "simulation-log.ndjson".into()),
            report: self
                .report
                .unwrap_or_else(|| "simulation-report.json".into()),
        })
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, rename_all = "camelCase", deny_unknown_fields)]
pub struct AnalyzeArgs {
    /// Log file, or the http:// URL of a live /log endpoint.
    #[arg(long, env = "POOLEA_INPUT")]
    pub input: Option<String>,
    /// Directory for the CSV files [default: analysis].
    #[arg(long, env = "POOLEA_OUT_DIR")]
    pub out_dir: Option<PathBuf>,
}

layered!(AnalyzeArgs { input, out_dir });

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeConfig {
    pub input: String,
    pub out_dir: PathBuf,
}

impl AnalyzeArgs {
    pub fn resolve(self) -> Result<AnalyzeConfig> {
        let Some(input) = self.input else {
            bail!("no input log given (--input)");
        };
        Ok(AnalyzeConfig {
            input,
            out_dir: self.out_dir.unwrap_or_else(|| "analysis".into()),
        })
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub serve: ServeArgs,
    pub island: IslandArgs,
    pub simulate: SimulateArgs,
    pub analyze: AnalyzeArgs,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("poolea").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn defaults() {
        let Command::Serve(args) = parse(&["serve"]).command else {
            panic!()
        };
        let config = args.resolve().unwrap();
        assert_eq!(config.listen, DEFAULT_LISTEN);
        assert_eq!(config.experiment, ExperimentConfig::default());
        assert!(!config.admin);

        let Command::Simulate(args) = parse(&["simulate"]).command else {
            panic!()
        };
        let config = args.resolve().unwrap();
        assert_eq!(config.profile, ChurnProfile::default());
        assert_eq!(config.spec, churn::default_simulation_spec());
        assert_eq!(config.params, EaParams::default());
    }

    #[test]
    fn flags_override_file() {
        let file = ConfigFile::parse(
            r#"{"island": {"server": "http://file:1", "seed": 5, "spec": {"traps": 12}, "ea": {"migrationPeriod": 50}}}"#,
        )
        .unwrap();
        let Command::Island(args) = parse(&["island", "--seed", "9", "--trap-length", "5"]).command
        else {
            panic!()
        };
        let config = args.or(file.island).resolve().unwrap();
        assert_eq!(config.seed, Some(9));
        assert_eq!(config.server.as_deref(), Some("http://file:1"));
        assert_eq!(config.spec, TrapSpec::new(5, 12).unwrap());
        assert_eq!(config.params.migration_period, 50);
        assert_eq!(config.timeout, Duration::from_millis(DEFAULT_TIMEOUT_MS));
    }

    #[test]
    fn unknown_file_keys_rejected() {
        assert!(ConfigFile::parse(r#"{"serve": {"lisen": "1.2.3.4:5"}}"#).is_err());
        assert!(ConfigFile::parse(r#"{"server": {}}"#).is_err());
        assert!(ConfigFile::parse(r#"{"island": {"ea": {"pop": 3}}}"#).is_err());
    }

    #[test]
    fn boolean_flags() {
        let Command::Serve(args) = parse(&["serve", "--admin", "--port", "9000"]).command else {
            panic!()
        };
        let config = args.resolve().unwrap();
        assert!(config.admin);
        assert_eq!(config.listen.port(), 9000);
        let Command::Serve(args) = parse(&["serve", "--admin", "false"]).command else {
            panic!()
        };
        assert!(!args.resolve().unwrap().admin);
    }

    #[test]
    fn validation() {
        let Command::Island(args) = parse(&["island", "--elite", "300"]).command else {
            panic!()
        };
        assert!(args.resolve().is_err());
        let Command::Island(args) = parse(&["island", "--server", "ftp://x"]).command else {
            panic!()
        };
        assert!(args.resolve().is_err());
        let Command::Serve(args) = parse(&["serve", "--capacity", "0"]).command else {
            panic!()
        };
        assert!(args.resolve().is_err());
        let Command::Simulate(args) = parse(&[
            "simulate",
            "--participant-min",
            "9",
            "--participant-max",
            "3",
        ])
        .command
        else {
            panic!()
        };
        assert!(args.resolve().is_err());
        let Command::Analyze(args) = parse(&["analyze"]).command else {
            panic!()
        };
        assert!(args.resolve().is_err());
    }

    #[test]
    fn usage_errors() {
        let err = Cli::try_parse_from(["poolea", "frobnicate"]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let err = Cli::try_parse_from(["poolea", "serve", "--no-such-flag"]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
