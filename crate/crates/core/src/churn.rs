//! Virtual-time simulation of a volunteer crowd.
//!
//! Each participant joins at a random moment, runs a real island, and
//! needs a log-normally distributed wall time per migration cycle. How many
//! cycles a participant contributes before leaving follows a Zipf law over
//! participants. Migrations go through an in-process [`ExperimentState`],
//! so the resulting log is exactly what the pool server would have written.
//!
//! Transcendental functions on the sampling path come from `libm`, so a
//! seed yields the same log on every platform.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::ea::EaParams;
use crate::error::{Error, Result};
use crate::island::{Island, IslandReport, LocalPoolTransport};
use crate::pool::{Anonymizer, ExperimentConfig, ExperimentState, LogEvent, Op};
use crate::trap::TrapSpec;

/// 0.75 quantile of the standard normal distribution.
const NORMAL_Q75: f64 = 0.674_489_750_196_081_7;

/// Instance simulated by default: the server's chromosome length, but in
/// 8-bit traps. Crowds solve 4-bit instances of this size long before
/// contributors run out of quota, which would cut every run short.
pub fn default_simulation_spec() -> TrapSpec {
    TrapSpec::new(8, 20).expect("valid spec")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParticipantRange {
    pub min: u32,
    pub max: u32,
}

/// Log-normal distribution of seconds per migration cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalModel {
    pub mu: f64,
    pub sigma: f64,
}

impl IntervalModel {
    /// The model with spread `sigma` whose upper quartile is `seconds`.
    pub fn with_q75(seconds: f64, sigma: f64) -> Self {
        Self {
            mu: libm::log(seconds) - NORMAL_Q75 * sigma,
            sigma,
        }
    }

    /// P(interval < seconds).
    pub fn cdf(&self, seconds: f64) -> f64 {
        if seconds <= 0.0 {
            return 0.0;
        }
        let z = (seconds.ln() - self.mu) / self.sigma;
        0.5 * erfc(-z / std::f64::consts::SQRT_2)
    }
}

impl Default for IntervalModel {
    /// Three quarters of cycles finish in under four seconds.
    fn default() -> Self {
        Self::with_q75(4.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct ChurnProfile {
    pub participant_range: ParticipantRange,
    pub zipf_exponent: f64,
    /// Cycles contributed by the rank-1 participant.
    pub top_quota: u32,
    pub interval_model: IntervalModel,
    /// Participants join uniformly over this many seconds.
    pub join_spread: f64,
    pub seed: u64,
}

impl Default for ChurnProfile {
    fn default() -> Self {
        Self {
            participant_range: ParticipantRange { min: 6, max: 28 },
            zipf_exponent: 0.5,
            top_quota: 100,
            interval_model: IntervalModel::default(),
            join_spread: 600.0,
            seed: 0,
        }
    }
}

impl ChurnProfile {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidProfile(msg));
        let ParticipantRange { min, max } = self.participant_range;
        if min < 1 || max < min {
            return fail(format!(
                "participant range [{min}, {max}] is empty or starts at 0"
            ));
        }
        if !(self.zipf_exponent > 0.0 && self.zipf_exponent.is_finite()) {
            return fail(format!(
                "zipf exponent {} must be positive",
                self.zipf_exponent
            ));
        }
        if self.top_quota < 1 {
            return fail("top quota must be at least 1".into());
        }
        let IntervalModel { mu, sigma } = self.interval_model;
        if !(sigma > 0.0 && sigma.is_finite() && mu.is_finite()) {
            return fail(format!(
                "interval model needs finite mu and sigma > 0, got ({mu}, {sigma})"
            ));
        }
        if !(self.join_spread >= 0.0 && self.join_spread.is_finite()) {
            return fail(format!(
                "join spread {} must be non-negative",
                self.join_spread
            ));
        }
        Ok(())
    }
}

pub fn sample_participant_count<R: Rng + ?Sized>(profile: &ChurnProfile, rng: &mut R) -> u32 {
    let ParticipantRange { min, max } = profile.participant_range;
    rng.random_range(min..=max)
}

/// Cycle quotas by rank: `top * r^-exponent`, rounded, at least 1.
pub fn contribution_quotas(n: usize, exponent: f64, top: u32) -> Vec<u32> {
    (1..=n)
        .map(|rank| {
            let q = f64::from(top) * libm::pow(rank as f64, -exponent);
            (q.round() as u32).max(1)
        })
        .collect()
}

pub fn sample_cycle_interval<R: Rng + ?Sized>(model: &IntervalModel, rng: &mut R) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    libm::exp(model.mu + model.sigma * z)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ParticipantReport {
    pub client_id: String,
    pub island_seed: u64,
    /// Seconds since simulation start.
    pub joined_at: f64,
    pub quota: u32,
    pub cycles: u32,
    pub island: IslandReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SimulationReport {
    /// Written separately as NDJSON.
    #[serde(skip)]
    pub synthetic_log: Vec<LogEvent>,
    /// Clients with at least one PUT.
    pub per_client_puts: BTreeMap<String, u64>,
    pub solved_at_virtual_time: Option<f64>,
    pub total_virtual_duration: f64,
    pub participant_count: u32,
    /// Seed and config of the in-process pool, for replaying one island.
    pub pool: ExperimentConfig,
    pub participants: Vec<ParticipantReport>,
}

/// Synthetic network address of participant `i`.
pub fn participant_address(i: usize) -> String {
    format!("volunteer-{i}")
}

fn secs_to_ms(secs: f64) -> u64 {
    (secs * 1000.0).round() as u64
}

/// Runs the crowd until some island finds the all-ones string or every
/// participant has used up its quota.
pub fn run_simulation(
    profile: &ChurnProfile,
    params: &EaParams,
    spec: &TrapSpec,
) -> Result<SimulationReport> {
    profile.validate()?;
    params.validate()?;

    let mut rng = Xoshiro256PlusPlus::seed_from_u64(profile.seed);
    let n = sample_participant_count(profile, &mut rng) as usize;
    let by_rank = contribution_quotas(n, profile.zipf_exponent, profile.top_quota);
    let mut quotas = by_rank;
    quotas.shuffle(&mut rng);
    let joins: Vec<u64> = (0..n)
        .map(|_| secs_to_ms(rng.random::<f64>() * profile.join_spread))
        .collect();
    let island_seeds: Vec<u64> = (0..n).map(|_| rng.next_u64()).collect();
    let pool_config = ExperimentConfig {
        spec: *spec,
        seed_count: 0,
        capacity: None,
        seed: rng.next_u64(),
    };
    let anonymizer = Anonymizer::from_seed(rng.next_u64());
    let mut state = ExperimentState::new(pool_config.clone(), anonymizer, 0);

    let mut islands: Vec<Option<Island<'_, TrapSpec>>> = (0..n).map(|_| None).collect();
    let mut finished: Vec<Option<IslandReport>> = vec![None; n];
    let mut cycles = vec![0u32; n];
    let mut last_active = joins.clone();

    // (time, insertion order, participant): ties resolve by insertion.
    let mut queue = BinaryHeap::new();
    let mut order = 0u64;
    for (i, &join) in joins.iter().enumerate() {
        let first = join + secs_to_ms(sample_cycle_interval(&profile.interval_model, &mut rng));
        queue.push(Reverse((first, order, i)));
        order += 1;
    }

    let mut clock = 0u64;
    let mut solved_at = None;
    while let Some(Reverse((t, _, i))) = queue.pop() {
        debug_assert!(t >= clock);
        clock = t;
        last_active[i] = t;
        let island =
            islands[i].get_or_insert_with(|| Island::new(params.clone(), spec, island_seeds[i]));
        let mut transport = LocalPoolTransport {
            state: &mut state,
            address: participant_address(i),
            now_ms: t,
        };
        if island.run_cycle(&mut transport) {
            cycles[i] += 1;
        }
        if island.is_solved() {
            solved_at = Some(t as f64 / 1000.0);
            break;
        }
        if cycles[i] < quotas[i] && !island.is_finished() {
            let next = t + secs_to_ms(sample_cycle_interval(&profile.interval_model, &mut rng));
            queue.push(Reverse((next, order, i)));
            order += 1;
        } else if let Some(done) = islands[i].take() {
            finished[i] = Some(done.report((t - joins[i]) as f64 / 1000.0, 0));
        }
    }

    let active_secs = |i: usize| (last_active[i] - joins[i]) as f64 / 1000.0;
    let mut participants = Vec::with_capacity(n);
    for i in 0..n {
        let island = match (finished[i].take(), islands[i].as_ref()) {
            (Some(report), _) => Some(report),
            (None, Some(running)) => Some(running.report(active_secs(i), 0)),
            (None, None) => None,
        };
        // Participants whose first cycle never came contributed nothing.
        let Some(island) = island else { continue };
        participants.push(ParticipantReport {
            client_id: state.client_id(&participant_address(i)),
            island_seed: island_seeds[i],
            joined_at: joins[i] as f64 / 1000.0,
            quota: quotas[i],
            cycles: cycles[i],
            island,
        });
    }

    let log = state.log().to_vec();
    let mut per_client_puts = BTreeMap::new();
    for e in log.iter().filter(|e| e.op == Op::Put) {
        *per_client_puts.entry(e.client_id.clone()).or_insert(0) += 1;
    }
    Ok(SimulationReport {
        synthetic_log: log,
        per_client_puts,
        solved_at_virtual_time: solved_at,
        total_virtual_duration: clock as f64 / 1000.0,
        participant_count: n as u32,
        pool: pool_config,
        participants,
    })
}

/// Complementary error function, Numerical Recipes `erfcc` (|error| < 1.2e-7).
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let poly = -z * z - 1.265_512_23
        + t * (1.000_023_68
            + t * (0.374_091_96
                + t * (0.096_784_18
                    + t * (-0.186_288_06
                        + t * (0.278_868_07
                            + t * (-1.135_203_98
                                + t * (1.488_515_87 + t * (-0.822_152_23 + t * 0.170_872_77))))))));
    let r = t * poly.exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::island::run_island;

    #[test]
    fn default_profile_hits_quartile() {
        let m = IntervalModel::default();
        assert!((m.mu - 0.712).abs() < 1e-3);
        assert!((m.cdf(4.0) - 0.75).abs() < 1e-6);
    }

    #[test]
    fn profile_validation() {
        assert!(ChurnProfile::default().validate().is_ok());
        let bad = [
            ChurnProfile {
                participant_range: ParticipantRange { min: 0, max: 3 },
                ..Default::default()
            },
            ChurnProfile {
                participant_range: ParticipantRange { min: 5, max: 3 },
                ..Default::default()
            },
            ChurnProfile {
                zipf_exponent: 0.0,
                ..Default::default()
            },
            ChurnProfile {
                interval_model: IntervalModel {
                    mu: 0.0,
                    sigma: 0.0,
                },
                ..Default::default()
            },
            ChurnProfile {
                join_spread: -1.0,
                ..Default::default()
            },
        ];
        for p in bad {
            assert!(p.validate().is_err(), "{p:?}");
        }
    }

    #[test]
    fn participant_counts() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(1);
        let fixed = ChurnProfile {
            participant_range: ParticipantRange { min: 6, max: 6 },
            ..Default::default()
        };
        assert_eq!(sample_participant_count(&fixed, &mut rng), 6);

        let profile = ChurnProfile::default();
        let draws: Vec<u32> = (0..10_000)
            .map(|_| sample_participant_count(&profile, &mut rng))
            .collect();
        assert!(draws.iter().all(|&d| (6..=28).contains(&d)));
        assert!(draws.contains(&6) && draws.contains(&28));
        let mean = draws.iter().map(|&d| f64::from(d)).sum::<f64>() / draws.len() as f64;
        assert!((mean - 17.0).abs() < 0.5, "{mean}");
    }

    #[test]
    fn quotas_follow_zipf() {
        assert_eq!(contribution_quotas(1, 1.2, 100), vec![100]);
        assert_eq!(contribution_quotas(3, 1.0, 600), vec![600, 300, 200]);

        // Least-squares slope of log(count) on log(rank), computed here
        // independently of the analyzer.
        for e in [0.5, 1.0, 1.5] {
            let q = contribution_quotas(20, e, 100);
            let pts: Vec<(f64, f64)> = q
                .iter()
                .enumerate()
                .map(|(i, &c)| (((i + 1) as f64).ln(), f64::from(c).ln()))
                .collect();
            let mx = pts.iter().map(|p| p.0).sum::<f64>() / 20.0;
            let my = pts.iter().map(|p| p.1).sum::<f64>() / 20.0;
            let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
            let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
            assert!(
                (sxy / sxx + e).abs() < 0.15,
                "exponent {e}: slope {}",
                sxy / sxx
            );
        }
        assert!(contribution_quotas(500, 2.0, 100).iter().all(|&q| q >= 1));
    }

    #[test]
    fn degenerate_interval() {
        let model = IntervalModel {
            mu: 2f64.ln(),
            sigma: 1e-12,
        };
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(3);
        for _ in 0..100 {
            assert!((sample_cycle_interval(&model, &mut rng) - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn interval_quartile_and_tail() {
        let model = IntervalModel::default();
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(4);
        let mut draws: Vec<f64> = (0..100_000)
            .map(|_| sample_cycle_interval(&model, &mut rng))
            .collect();
        draws.sort_by(f64::total_cmp);
        let q75 = draws[75_000];
        assert!((q75 - 4.0).abs() < 0.1, "q75 = {q75}");
        assert!(draws.iter().any(|&d| d > 100.0));
    }

    fn single(seed: u64) -> ChurnProfile {
        ChurnProfile {
            participant_range: ParticipantRange { min: 1, max: 1 },
            top_quota: 1_000_000,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn single_participant_solves_and_replays() {
        let spec = TrapSpec::new(4, 10).unwrap();
        let params = EaParams::default();
        for seed in 0..4 {
            let report = run_simulation(&single(seed), &params, &spec).unwrap();
            assert!(report.solved_at_virtual_time.is_some());
            assert_eq!(report.participants.len(), 1);
            let p = &report.participants[0];
            let puts = report
                .synthetic_log
                .iter()
                .filter(|e| e.op == Op::Put)
                .count() as u64;
            assert_eq!(puts, p.island.migrations_sent);
            assert_eq!(u64::from(p.cycles), p.island.migrations_sent);

            // Replay the island standalone against an identical pool.
            let mut state = ExperimentState::new(report.pool.clone(), Anonymizer::from_seed(0), 0);
            let mut transport = LocalPoolTransport {
                state: &mut state,
                address: "x".into(),
                now_ms: 0,
            };
            let alone = run_island(&params, &spec, &mut transport, p.island_seed);
            assert_eq!(alone.best_fitness_trace, p.island.best_fitness_trace);
            assert_eq!(alone.generations, p.island.generations);
        }
    }

    #[test]
    fn small_crowd_is_deterministic_and_consistent() {
        let spec = TrapSpec::new(4, 20).unwrap();
        let profile = ChurnProfile {
            participant_range: ParticipantRange { min: 3, max: 5 },
            top_quota: 8,
            seed: 11,
            ..Default::default()
        };
        let params = EaParams {
            population_size: 64,
            ..Default::default()
        };
        let a = run_simulation(&profile, &params, &spec).unwrap();
        let b = run_simulation(&profile, &params, &spec).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );

        let ts: Vec<u64> = a.synthetic_log.iter().map(|e| e.timestamp_ms).collect();
        assert!(ts.windows(2).all(|w| w[0] <= w[1]));
        let puts = a.synthetic_log.iter().filter(|e| e.op == Op::Put).count() as u64;
        let expected: u64 = a
            .participants
            .iter()
            .map(|p| u64::from(p.quota.min(p.cycles)))
            .sum();
        assert_eq!(puts, expected);
        for p in &a.participants {
            assert!(p.cycles <= p.quota);
            if p.cycles > 0 {
                assert_eq!(a.per_client_puts[&p.client_id], u64::from(p.cycles));
            }
        }
    }
}
