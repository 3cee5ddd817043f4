//! Concatenated deceptive trap functions.
//!
//! A block of `l` bits with `u` ones scores `l` when `u == l` and `l - 1 - u`
//! otherwise: the all-zeros block is a local optimum one below the global
//! one, and every step towards the global optimum lowers fitness.

use serde::{Deserialize, Serialize};

use crate::chromosome::Chromosome;
use crate::error::{Error, Result};

pub const DEFAULT_TRAP_LENGTH: usize = 4;
pub const DEFAULT_TRAP_COUNT: usize = 40;

/// Anything an island can optimise. Fitness is recomputed on every call;
/// implementations must not memoise across chromosomes.
pub trait Problem {
    fn chromosome_len(&self) -> usize;
    /// Caller guarantees `c.len() == self.chromosome_len()`.
    fn fitness(&self, c: &Chromosome) -> f64;
    fn is_solution(&self, c: &Chromosome) -> bool;
    /// Fitness reached exactly by solutions, when it singles them out.
    fn optimum_fitness(&self) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", try_from = "RawTrapSpec")]
pub struct TrapSpec {
    trap_length: usize,
    trap_count: usize,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct RawTrapSpec {
    trap_length: usize,
    trap_count: usize,
}

impl TryFrom<RawTrapSpec> for TrapSpec {
    type Error = Error;

    fn try_from(raw: RawTrapSpec) -> Result<Self> {
        TrapSpec::new(raw.trap_length, raw.trap_count)
    }
}

impl Default for TrapSpec {
    fn default() -> Self {
        Self {
            trap_length: DEFAULT_TRAP_LENGTH,
            trap_count: DEFAULT_TRAP_COUNT,
        }
    }
}

impl TrapSpec {
    pub fn new(trap_length: usize, trap_count: usize) -> Result<Self> {
        if trap_length < 2 {
            return Err(Error::InvalidSpec(format!(
                "trap length must be at least 2, got {trap_length}"
            )));
        }
        if trap_count < 1 {
            return Err(Error::InvalidSpec("trap count must be at least 1".into()));
        }
        trap_length
            .checked_mul(trap_count)
            .ok_or_else(|| Error::InvalidSpec("chromosome length overflows".into()))?;
        Ok(Self {
            trap_length,
            trap_count,
        })
    }

    pub fn trap_length(&self) -> usize {
        self.trap_length
    }

    pub fn trap_count(&self) -> usize {
        self.trap_count
    }

    pub fn chromosome_len(&self) -> usize {
        self.trap_length * self.trap_count
    }

    pub fn optimum(&self) -> f64 {
        self.chromosome_len() as f64
    }

    /// Fitness of one block given as a bit slice.
    pub fn block_fitness(&self, block: &[bool]) -> Result<f64> {
        if block.len() != self.trap_length {
            return Err(Error::LengthMismatch {
                expected: self.trap_length,
                actual: block.len(),
            });
        }
        let ones = block.iter().filter(|&&b| b).count();
        Ok(trap_value(ones, self.trap_length))
    }

    /// Sum of block fitnesses over the consecutive, non-overlapping blocks.
    pub fn evaluate(&self, c: &Chromosome) -> Result<f64> {
        self.check_len(c)?;
        Ok(self.evaluate_unchecked(c))
    }

    pub fn check_len(&self, c: &Chromosome) -> Result<()> {
        if c.len() != self.chromosome_len() {
            return Err(Error::LengthMismatch {
                expected: self.chromosome_len(),
                actual: c.len(),
            });
        }
        Ok(())
    }

    fn evaluate_unchecked(&self, c: &Chromosome) -> f64 {
        #[cfg(target_arch = "x86_64")]
        if std::arch::is_x86_feature_detected!("popcnt") {
            // SAFETY: the CPU supports popcnt.
            return unsafe { self.evaluate_popcnt(c) };
        }
        self.evaluate_portable(c)
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "popcnt")]
    unsafe fn evaluate_popcnt(&self, c: &Chromosome) -> f64 {
        self.evaluate_portable(c)
    }

    #[inline(always)]
    fn evaluate_portable(&self, c: &Chromosome) -> f64 {
        let l = self.trap_length;
        // Each block scores (l - 1) - ones, plus (l + 1) when full.
        let (ones, full) = c.ones_and_full_blocks(l);
        let total = (l - 1) * self.trap_count + (l + 1) * full - ones;
        total as f64
    }
}

const fn trap_score(ones: usize, l: usize) -> usize {
    if ones == l {
        l
    } else {
        l - 1 - ones
    }
}

/// Trap value for a block of length `l` holding `ones` set bits.
pub fn trap_value(ones: usize, l: usize) -> f64 {
    assert!(ones <= l, "{ones} ones in a block of {l}");
    trap_score(ones, l) as f64
}

/// True iff every bit is set.
pub fn is_solution(c: &Chromosome) -> bool {
    c.is_all_ones()
}

impl Problem for TrapSpec {
    fn chromosome_len(&self) -> usize {
        TrapSpec::chromosome_len(self)
    }

    fn fitness(&self, c: &Chromosome) -> f64 {
        debug_assert_eq!(c.len(), TrapSpec::chromosome_len(self));
        self.evaluate_unchecked(c)
    }

    fn is_solution(&self, c: &Chromosome) -> bool {
        is_solution(c)
    }

    fn optimum_fitness(&self) -> Option<f64> {
        Some(self.optimum())
    }
}
