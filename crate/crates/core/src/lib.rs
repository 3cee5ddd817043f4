//! Pool-based island-model genetic algorithm.
//!
//! Islands run a canonical GA on concatenated deceptive traps and exchange
//! single individuals through a stateless pool server. A virtual-time churn
//! simulator generates volunteer-style experiment logs, and the analyzer
//! recomputes participation statistics from any such log.

pub mod analyze;
pub mod chromosome;
pub mod churn;
pub mod ea;
pub mod error;
pub mod island;
pub mod pool;
pub mod trap;
pub mod wire;

pub use chromosome::Chromosome;
pub use ea::{EaParams, Individual, Population};
pub use error::{Error, Result};
pub use island::{run_island, IslandReport, MigrationTransport, NoopTransport};
pub use pool::{ExperimentConfig, ExperimentState, LogEvent, Op};
pub use trap::{Problem, TrapSpec};
