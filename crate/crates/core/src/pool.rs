//! Server-side experiment state: the migration pool, the anonymised event
//! log and the three request handlers. Transport-agnostic; the HTTP server
//! and the churn simulator both drive this type.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chromosome::Chromosome;
use crate::error::{Error, Result};
use crate::trap::TrapSpec;
use crate::wire;

/// Append-only array of chromosomes, optionally capped with FIFO eviction.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Pool {
    entries: VecDeque<Chromosome>,
    capacity: Option<usize>,
}

impl Pool {
    pub fn new(capacity: Option<usize>) -> Self {
        Self {
            entries: VecDeque::new(),
            capacity,
        }
    }

    /// Appends `c`, evicting and returning the oldest entry when full.
    pub fn push(&mut self, c: Chromosome) -> Option<Chromosome> {
        let evicted = match self.capacity {
            Some(cap) if self.entries.len() >= cap => self.entries.pop_front(),
            _ => None,
        };
        if self.capacity != Some(0) {
            self.entries.push_back(c);
        }
        evicted
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<&Chromosome> {
        if self.entries.is_empty() {
            return None;
        }
        self.entries.get(rng.random_range(0..self.entries.len()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> Option<usize> {
        self.capacity
    }

    pub fn contains(&self, c: &Chromosome) -> bool {
        self.entries.contains(c)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Chromosome> {
        self.entries.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Op {
    #[serde(rename = "PUT")]
    Put,
    #[serde(rename = "GET")]
    GetRandom,
}

/// One line of the experiment log. Field names are the wire names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogEvent {
    /// Milliseconds since the Unix epoch (or since simulation start).
    #[serde(rename = "t")]
    pub timestamp_ms: u64,
    #[serde(rename = "ip")]
    pub client_id: String,
    pub op: Op,
    #[serde(default)]
    pub fitness: Option<f64>,
}

/// Maps network addresses to `10.A.B.C` ids through a keyed hash.
///
/// Distinct addresses always get distinct ids within one experiment: a
/// colliding hash is re-drawn with an incremented probe counter.
#[derive(Debug, Clone)]
pub struct Anonymizer {
    key: [u8; 32],
    assigned: HashMap<String, String>,
    taken: HashSet<[u8; 3]>,
}

impl Anonymizer {
    pub fn new(key: [u8; 32]) -> Self {
        Self {
            key,
            assigned: HashMap::new(),
            taken: HashSet::new(),
        }
    }

    pub fn from_seed(seed: u64) -> Self {
        let mut key = [0u8; 32];
        Xoshiro256PlusPlus::seed_from_u64(seed).fill(&mut key);
        Self::new(key)
    }

    pub fn client_id(&mut self, address: &str) -> String {
        if let Some(id) = self.assigned.get(address) {
            return id.clone();
        }
        let mut probe = 0u32;
        let octets = loop {
            let mut hasher = Sha256::new();
            hasher.update(self.key);
            hasher.update(address.as_bytes());
            hasher.update(probe.to_le_bytes());
            let digest = hasher.finalize();
            let octets = [digest[0], digest[1], digest[2]];
            if self.taken.insert(octets) {
                break octets;
            }
            probe += 1;
        };
        let id = format!("10.{}.{}.{}", octets[0], octets[1], octets[2]);
        self.assigned.insert(address.to_owned(), id.clone());
        id
    }

    pub fn clear(&mut self) {
        self.assigned.clear();
        self.taken.clear();
    }
}

/// Durable destination for log events.
pub trait LogSink: Send {
    fn append(&mut self, event: &LogEvent) -> io::Result<()>;
    /// Called on experiment reset, before the first event of the new run.
    fn start_experiment(&mut self) -> io::Result<()>;
}

/// Newline-delimited JSON file, one [`LogEvent`] per line. On reset the
/// current file is renamed to `<path>.<n>` with the first unused `n`.
pub struct NdjsonLogFile {
    path: PathBuf,
    writer: BufWriter<File>,
}

impl NdjsonLogFile {
    pub fn open(path: impl Into<PathBuf>) -> io::Result<Self> {
        let path = path.into();
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self {
            path,
            writer: BufWriter::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn archive_path(&self) -> PathBuf {
        let mut n = 1;
        loop {
            let mut candidate = self.path.clone().into_os_string();
            candidate.push(format!(".{n}"));
            let candidate = PathBuf::from(candidate);
            if !candidate.exists() {
                return candidate;
            }
            n += 1;
        }
    }
}

impl LogSink for NdjsonLogFile {
    fn append(&mut self, event: &LogEvent) -> io::Result<()> {
        serde_json::to_writer(&mut self.writer, event)?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()
    }

    fn start_experiment(&mut self) -> io::Result<()> {
        self.writer.flush()?;
        if fs::metadata(&self.path)
            .map(|m| m.len() > 0)
            .unwrap_or(false)
        {
            fs::rename(&self.path, self.archive_path())?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)?;
        self.writer = BufWriter::new(file);
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct ExperimentConfig {
    pub spec: TrapSpec,
    /// Random chromosomes placed in the pool at experiment start.
    pub seed_count: usize,
    pub capacity: Option<usize>,
    /// Seeds the pool's sampling and initial contents.
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(cap) = self.capacity {
            if cap == 0 {
                return Err(Error::InvalidParams(
                    "pool capacity must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

/// The single experiment a server holds. Every mutation goes through
/// `&mut self`, so callers serialise requests by owning or locking it.
pub struct ExperimentState {
    config: ExperimentConfig,
    pool: Pool,
    log: Vec<LogEvent>,
    started_at: u64,
    last_timestamp: u64,
    rng: Xoshiro256PlusPlus,
    anonymizer: Anonymizer,
    malformed_requests: u64,
    sink_errors: u64,
    sink: Option<Box<dyn LogSink>>,
}

impl std::fmt::Debug for ExperimentState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExperimentState")
            .field("config", &self.config)
            .field("pool_size", &self.pool.len())
            .field("log_len", &self.log.len())
            .field("started_at", &self.started_at)
            .finish_non_exhaustive()
    }
}

impl ExperimentState {
    pub fn new(config: ExperimentConfig, anonymizer: Anonymizer, now_ms: u64) -> Self {
        let mut state = Self {
            pool: Pool::new(config.capacity),
            rng: Xoshiro256PlusPlus::seed_from_u64(config.seed),
            config,
            log: Vec::new(),
            started_at: now_ms,
            last_timestamp: now_ms,
            anonymizer,
            malformed_requests: 0,
            sink_errors: 0,
            sink: None,
        };
        state.seed_pool();
        state
    }

    pub fn with_sink(mut self, sink: Box<dyn LogSink>) -> Self {
        self.sink = Some(sink);
        self
    }

    fn seed_pool(&mut self) {
        let len = self.config.spec.chromosome_len();
        for _ in 0..self.config.seed_count {
            let c = Chromosome::random(len, &mut self.rng);
            self.pool.push(c);
        }
    }

    pub fn spec(&self) -> TrapSpec {
        self.config.spec
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn pool(&self) -> &Pool {
        &self.pool
    }

    pub fn log(&self) -> &[LogEvent] {
        &self.log
    }

    pub fn started_at(&self) -> u64 {
        self.started_at
    }

    pub fn malformed_requests(&self) -> u64 {
        self.malformed_requests
    }

    pub fn sink_errors(&self) -> u64 {
        self.sink_errors
    }

    /// The anonymised id of `address`, assigned now if it has none yet.
    pub fn client_id(&mut self, address: &str) -> String {
        self.anonymizer.client_id(address)
    }

    /// GET /random: a uniformly sampled pool member, left in the pool.
    /// An empty pool answers `None` and still logs the request.
    pub fn handle_get_random(&mut self, address: &str, now_ms: u64) -> Option<Chromosome> {
        let picked = self.pool.sample(&mut self.rng).cloned();
        let fitness = picked.as_ref().map(|c| {
            self.config
                .spec
                .evaluate(c)
                .expect("pool holds valid chromosomes")
        });
        self.record(address, Op::GetRandom, fitness, now_ms);
        picked
    }

    /// PUT /one with an already-decoded chromosome. Returns the pool size.
    pub fn handle_put_one(&mut self, address: &str, c: Chromosome, now_ms: u64) -> Result<usize> {
        let fitness = match self.config.spec.evaluate(&c) {
            Ok(f) => f,
            Err(e) => {
                self.malformed_requests += 1;
                return Err(e);
            }
        };
        self.pool.push(c);
        self.record(address, Op::Put, Some(fitness), now_ms);
        Ok(self.pool.len())
    }

    /// PUT /one from the raw request body.
    pub fn handle_put_body(&mut self, address: &str, body: &[u8], now_ms: u64) -> Result<usize> {
        match wire::decode_chromosome_body(body, self.config.spec.chromosome_len()) {
            Ok(c) => self.handle_put_one(address, c, now_ms),
            Err(e) => {
                self.malformed_requests += 1;
                Err(e)
            }
        }
    }

    /// Starts a fresh experiment and returns the log of the finished one.
    pub fn reset(&mut self, config: ExperimentConfig, now_ms: u64) -> Vec<LogEvent> {
        if let Some(sink) = self.sink.as_mut() {
            if sink.start_experiment().is_err() {
                self.sink_errors += 1;
            }
        }
        let previous = std::mem::take(&mut self.log);
        self.pool = Pool::new(config.capacity);
        self.rng = Xoshiro256PlusPlus::seed_from_u64(config.seed);
        self.config = config;
        self.anonymizer.clear();
        self.started_at = now_ms.max(self.last_timestamp);
        self.last_timestamp = self.started_at;
        self.malformed_requests = 0;
        self.seed_pool();
        previous
    }

    fn record(&mut self, address: &str, op: Op, fitness: Option<f64>, now_ms: u64) {
        let timestamp_ms = now_ms.max(self.last_timestamp);
        self.last_timestamp = timestamp_ms;
        let event = LogEvent {
            timestamp_ms,
            client_id: self.anonymizer.client_id(address),
            op,
            fitness,
        };
        if let Some(sink) = self.sink.as_mut() {
            if sink.append(&event).is_err() {
                self.sink_errors += 1;
            }
        }
        self.log.push(event);
    }
}
