//! Canonical generational GA: elitism, k-tournament selection, two-point
//! crossover, per-bit mutation.

use rand::Rng;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::chromosome::Chromosome;
use crate::error::{Error, Result};
use crate::trap::Problem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct EaParams {
    pub population_size: usize,
    pub elite_size: usize,
    pub tournament_size: usize,
    pub crossover_rate: f64,
    /// `None` means `1 / chromosome length`.
    pub mutation_rate_per_bit: Option<f64>,
    pub migration_period: u64,
    /// `None` runs until solved.
    pub max_generations: Option<u64>,
}

impl Default for EaParams {
    fn default() -> Self {
        Self {
            population_size: 256,
            elite_size: 2,
            tournament_size: 2,
            crossover_rate: 0.9,
            mutation_rate_per_bit: None,
            migration_period: 100,
            max_generations: None,
        }
    }
}

fn is_probability(p: f64) -> bool {
    (0.0..=1.0).contains(&p)
}

impl EaParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidParams(msg));
        if self.population_size == 0 {
            return fail("population size must be positive".into());
        }
        if self.elite_size >= self.population_size {
            return fail(format!(
                "elite size {} must be smaller than population size {}",
                self.elite_size, self.population_size
            ));
        }
        if self.tournament_size == 0 || self.tournament_size > self.population_size {
            return fail(format!(
                "tournament size {} must be in 1..={}",
                self.tournament_size, self.population_size
            ));
        }
        if !is_probability(self.crossover_rate) {
            return fail(format!(
                "crossover rate {} not in [0, 1]",
                self.crossover_rate
            ));
        }
        if let Some(p) = self.mutation_rate_per_bit {
            if !is_probability(p) {
                return fail(format!("mutation rate {p} not in [0, 1]"));
            }
        }
        if self.migration_period == 0 {
            return fail("migration period must be positive".into());
        }
        if self.max_generations == Some(0) {
            return fail("max generations must be positive".into());
        }
        Ok(())
    }

    pub fn mutation_rate(&self, chromosome_len: usize) -> f64 {
        self.mutation_rate_per_bit
            .unwrap_or(1.0 / chromosome_len.max(1) as f64)
    }
}

/// A chromosome with its fitness, computed once when the individual is built.
#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    chromosome: Chromosome,
    fitness: f64,
}

impl Individual {
    pub fn evaluate<P: Problem + ?Sized>(chromosome: Chromosome, problem: &P) -> Self {
        let fitness = problem.fitness(&chromosome);
        Self {
            chromosome,
            fitness,
        }
    }

    pub fn chromosome(&self) -> &Chromosome {
        &self.chromosome
    }

    pub fn fitness(&self) -> f64 {
        self.fitness
    }

    pub fn into_chromosome(self) -> Chromosome {
        self.chromosome
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    members: Vec<Individual>,
    generation: u64,
}

impl Population {
    pub fn from_members(members: Vec<Individual>, generation: u64) -> Self {
        Self {
            members,
            generation,
        }
    }

    pub fn members(&self) -> &[Individual] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    /// Index of the fittest member; the lowest index wins ties.
    pub fn best_index(&self) -> usize {
        let mut best = 0;
        for (i, m) in self.members.iter().enumerate().skip(1) {
            if m.fitness > self.members[best].fitness {
                best = i;
            }
        }
        best
    }

    pub fn best(&self) -> &Individual {
        &self.members[self.best_index()]
    }

    pub fn best_fitness(&self) -> f64 {
        self.best().fitness
    }

    pub fn has_solution<P: Problem + ?Sized>(&self, problem: &P) -> bool {
        match problem.optimum_fitness() {
            Some(optimum) => self.members.iter().any(|m| m.fitness >= optimum),
            None => self
                .members
                .iter()
                .any(|m| problem.is_solution(&m.chromosome)),
        }
    }

    /// Member indices ordered best first; equal fitness keeps index order.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.members.len()).collect();
        idx.sort_by(|&a, &b| self.members[b].fitness.total_cmp(&self.members[a].fitness));
        idx
    }

    /// The `k` best indices, equivalent to `ranking()[..k]` without a full sort.
    pub fn top_indices(&self, k: usize) -> Vec<usize> {
        let k = k.min(self.members.len());
        let mut top: Vec<usize> = Vec::with_capacity(k + 1);
        for (i, m) in self.members.iter().enumerate() {
            if top.len() == k
                && top
                    .last()
                    .is_none_or(|&j| self.members[j].fitness >= m.fitness)
            {
                continue;
            }
            let pos = top.partition_point(|&j| self.members[j].fitness >= m.fitness);
            if pos < k {
                top.insert(pos, i);
                top.truncate(k);
            }
        }
        top
    }

    pub fn replace(&mut self, index: usize, individual: Individual) {
        self.members[index] = individual;
    }
}

pub fn new_random_population<P, R>(params: &EaParams, problem: &P, rng: &mut R) -> Population
where
    P: Problem + ?Sized,
    R: Rng + ?Sized,
{
    let len = problem.chromosome_len();
    let members = (0..params.population_size)
        .map(|_| Individual::evaluate(Chromosome::random(len, rng), problem))
        .collect();
    Population::from_members(members, 0)
}

/// Draws `k` members uniformly with replacement and returns the fittest;
/// the earliest draw wins ties.
pub fn tournament_select<'a, R: Rng + ?Sized>(
    pop: &'a Population,
    k: usize,
    rng: &mut R,
) -> &'a Individual {
    assert!(k >= 1 && k <= pop.len(), "tournament size {k} out of range");
    let n = pop.len();
    let mut best = &pop.members[rng.random_range(0..n)];
    for _ in 1..k {
        let challenger = &pop.members[rng.random_range(0..n)];
        if challenger.fitness > best.fitness {
            best = challenger;
        }
    }
    best
}

/// Swaps `[lo, hi)` between the two parents.
pub fn crossover_at(
    a: &Chromosome,
    b: &Chromosome,
    lo: usize,
    hi: usize,
) -> Result<(Chromosome, Chromosome)> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(Chromosome::crossed(a, b, lo, hi))
}

/// Two-point crossover applied with probability `rate`. Cut points are two
/// distinct positions in `0..=len`.
pub fn crossover<R: Rng + ?Sized>(
    a: &Chromosome,
    b: &Chromosome,
    rate: f64,
    rng: &mut R,
) -> Result<(Chromosome, Chromosome)> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    if rng.random::<f64>() >= rate {
        return Ok((a.clone(), b.clone()));
    }
    let len = a.len();
    let first = rng.random_range(0..=len);
    let mut second = rng.random_range(0..len);
    if second >= first {
        second += 1;
    }
    crossover_at(a, b, first.min(second), first.max(second))
}

/// Flips each bit independently with probability `rate`.
pub fn mutate<R: Rng + ?Sized>(c: &Chromosome, rate: f64, rng: &mut R) -> Chromosome {
    let mut out = c.clone();
    BitFlipMutation::new(c.len(), rate).apply(&mut out, rng);
    out
}

/// Independent per-bit flips, sampled as a binomial flip count followed by a
/// uniform choice of which positions flip. Same distribution as one coin per
/// bit, without one random draw per bit.
#[derive(Debug, Clone)]
pub struct BitFlipMutation {
    len: usize,
    rate: f64,
    /// `cdf[k] = P(flips <= k)`; empty when the table would underflow.
    cdf: Vec<f64>,
}

impl BitFlipMutation {
    pub fn new(len: usize, rate: f64) -> Self {
        let mut cdf = Vec::new();
        if rate > 0.0 && rate < 1.0 {
            let keep = 1.0 - rate;
            let mut pmf = keep.powi(len.min(i32::MAX as usize) as i32);
            if pmf > 0.0 {
                let odds = rate / keep;
                let mut total = pmf;
                cdf.push(total);
                let mut k = 0;
                while k < len && total < 1.0 - 1e-12 {
                    pmf *= (len - k) as f64 / (k + 1) as f64 * odds;
                    total += pmf;
                    cdf.push(total);
                    k += 1;
                }
            }
        }
        Self { len, rate, cdf }
    }

    pub fn apply<R: Rng + ?Sized>(&self, c: &mut Chromosome, rng: &mut R) {
        debug_assert_eq!(c.len(), self.len);
        if self.rate <= 0.0 || self.len == 0 {
            return;
        }
        if self.rate >= 1.0 {
            *c = c.complement();
            return;
        }
        if self.cdf.is_empty() {
            return self.apply_geometric(c, rng);
        }
        let u: f64 = rng.random();
        // Linear scan: almost all mass sits on the first few counts.
        let flips = self
            .cdf
            .iter()
            .take_while(|&&p| p <= u)
            .count()
            .min(self.len);
        if flips == 0 {
            return;
        }
        if flips == 1 {
            c.flip(rng.random_range(0..self.len));
            return;
        }
        // Floyd's algorithm: a uniform `flips`-subset of positions.
        let mut chosen: SmallVec<[usize; 8]> = SmallVec::new();
        for j in (self.len - flips)..self.len {
            let t = rng.random_range(0..=j);
            chosen.push(if chosen.contains(&t) { j } else { t });
        }
        for &i in &chosen {
            c.flip(i);
        }
    }

    // Geometric gaps between flips; used when the binomial table underflows.
    fn apply_geometric<R: Rng + ?Sized>(&self, c: &mut Chromosome, rng: &mut R) {
        let log_keep = (1.0 - self.rate).ln();
        let mut pos = 0usize;
        while pos < self.len {
            let u: f64 = rng.random();
            let skip = ((1.0 - u).ln() / log_keep).floor();
            if skip >= (self.len - pos) as f64 {
                break;
            }
            pos += skip as usize;
            c.flip(pos);
            pos += 1;
        }
    }
}

/// One generation: copy the elite, then fill the rest with
/// tournament → crossover → mutation offspring.
pub fn step_generation<P, R>(
    pop: &Population,
    params: &EaParams,
    problem: &P,
    rng: &mut R,
) -> Population
where
    P: Problem + ?Sized,
    R: Rng + ?Sized,
{
    let n = pop.len();
    let mutation = BitFlipMutation::new(
        problem.chromosome_len(),
        params.mutation_rate(problem.chromosome_len()),
    );
    let mut next = Vec::with_capacity(n);
    for i in pop.top_indices(params.elite_size) {
        next.push(pop.members[i].clone());
    }
    while next.len() < n {
        let a = tournament_select(pop, params.tournament_size, rng).chromosome();
        let b = tournament_select(pop, params.tournament_size, rng).chromosome();
        let (mut x, mut y) =
            crossover(a, b, params.crossover_rate, rng).expect("population shares one length");
        mutation.apply(&mut x, rng);
        next.push(Individual::evaluate(x, problem));
        if next.len() < n {
            mutation.apply(&mut y, rng);
            next.push(Individual::evaluate(y, problem));
        }
    }
    Population::from_members(next, pop.generation + 1)
}
