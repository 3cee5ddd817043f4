//! Islands sharing one in-process pool, interleaved migration by migration.

use std::collections::HashSet;

use poolea_core::island::{Island, LocalPoolTransport};
use poolea_core::pool::Anonymizer;
use poolea_core::{Chromosome, EaParams, ExperimentConfig, ExperimentState, Op, TrapSpec};

fn ten_traps() -> TrapSpec {
    TrapSpec::new(4, 10).unwrap()
}

#[test]
fn two_islands_solve_through_a_shared_pool() {
    let spec = ten_traps();
    let params = EaParams {
        migration_period: 10,
        max_generations: Some(20_000),
        ..EaParams::default()
    };
    for seed in 0..20u64 {
        let config = ExperimentConfig {
            spec,
            seed_count: 2,
            capacity: None,
            seed,
        };
        let mut state = ExperimentState::new(config, Anonymizer::from_seed(seed), 0);
        let mut islands = [
            Island::new(params.clone(), &spec, 2 * seed),
            Island::new(params.clone(), &spec, 2 * seed + 1),
        ];
        let mut now = 0;
        while !islands.iter().all(Island::is_finished) {
            for (i, island) in islands.iter_mut().enumerate() {
                now += 1;
                let mut transport = LocalPoolTransport {
                    state: &mut state,
                    address: format!("192.0.2.{i}"),
                    now_ms: now,
                };
                island.run_cycle(&mut transport);
            }
        }
        for island in &islands {
            assert!(
                island.is_solved(),
                "seed {seed} generation {}",
                island.generation()
            );
        }

        let log = state.log();
        let ids: HashSet<&str> = log.iter().map(|e| e.client_id.as_str()).collect();
        assert_eq!(ids.len(), 2);
        assert!(ids.iter().all(|id| id.starts_with("10.")));
        let puts = log.iter().filter(|e| e.op == Op::Put).count();
        assert_eq!(state.pool().len(), 2 + puts);
        assert!(log
            .windows(2)
            .all(|w| w[0].timestamp_ms <= w[1].timestamp_ms));
    }
}

#[test]
fn gets_only_return_pool_members() {
    let spec = ten_traps();
    let mut state = ExperimentState::new(
        ExperimentConfig {
            spec,
            seed_count: 3,
            capacity: Some(4),
            seed: 9,
        },
        Anonymizer::from_seed(9),
        0,
    );
    for t in 0..200u64 {
        if t % 3 == 0 {
            let c = Chromosome::from_bits(
                &(0..40)
                    .map(|i| (i as u64 * t).is_multiple_of(5))
                    .collect::<Vec<_>>(),
            );
            let size = state.handle_put_one("198.51.100.1", c, t).unwrap();
            assert!(size <= 4);
        } else {
            let got = state.handle_get_random("198.51.100.2", t).unwrap();
            assert!(state.pool().contains(&got));
        }
    }
    assert_eq!(state.pool().len(), 4);
}
