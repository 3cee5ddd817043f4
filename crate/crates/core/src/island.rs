//! A single island: the GA loop plus periodic fire-and-forget migration.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, SyncSender, TryRecvError};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::chromosome::Chromosome;
use crate::ea::{self, EaParams, Individual, Population};
use crate::pool::ExperimentState;
use crate::trap::Problem;

/// Where emigrants go and immigrants come from.
///
/// Implementations must never panic into the GA loop and must bound the
/// time each call takes; every failure is reported as "nothing happened".
pub trait MigrationTransport {
    fn send_one(&mut self, c: &Chromosome);
    fn fetch_random(&mut self) -> Option<Chromosome>;
    /// Sends the solution once the run is over. May wait for queued work,
    /// since the GA loop has already stopped.
    fn announce(&mut self, c: &Chromosome) {
        self.send_one(c)
    }
    /// Replies that arrived but could not be decoded.
    fn malformed_replies(&self) -> u64 {
        0
    }
}

impl<T: MigrationTransport + ?Sized> MigrationTransport for &mut T {
    fn send_one(&mut self, c: &Chromosome) {
        (**self).send_one(c)
    }

    fn fetch_random(&mut self) -> Option<Chromosome> {
        (**self).fetch_random()
    }

    fn announce(&mut self, c: &Chromosome) {
        (**self).announce(c)
    }

    fn malformed_replies(&self) -> u64 {
        (**self).malformed_replies()
    }
}

impl<T: MigrationTransport + ?Sized> MigrationTransport for Box<T> {
    fn send_one(&mut self, c: &Chromosome) {
        (**self).send_one(c)
    }

    fn fetch_random(&mut self) -> Option<Chromosome> {
        (**self).fetch_random()
    }

    fn malformed_replies(&self) -> u64 {
        (**self).malformed_replies()
    }
}

/// Runs the island alone.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoopTransport;

impl MigrationTransport for NoopTransport {
    fn send_one(&mut self, _: &Chromosome) {}

    fn fetch_random(&mut self) -> Option<Chromosome> {
        None
    }
}

/// Talks to an in-process [`ExperimentState`] with a fixed client address
/// and a caller-controlled clock.
pub struct LocalPoolTransport<'a> {
    pub state: &'a mut ExperimentState,
    pub address: String,
    pub now_ms: u64,
}

impl MigrationTransport for LocalPoolTransport<'_> {
    fn send_one(&mut self, c: &Chromosome) {
        let _ = self
            .state
            .handle_put_one(&self.address, c.clone(), self.now_ms);
    }

    fn fetch_random(&mut self) -> Option<Chromosome> {
        self.state.handle_get_random(&self.address, self.now_ms)
    }
}

enum Request {
    Send(Chromosome),
    Fetch,
}

/// Moves a blocking transport onto a worker thread so the GA loop never
/// waits on the network.
///
/// Sends are queued (and dropped when the queue is full). `fetch_random`
/// returns whatever answer to the previous fetch has arrived, then asks for
/// a new one; at most one fetch is ever outstanding.
pub struct BackgroundTransport {
    requests: SyncSender<Request>,
    replies: Receiver<Option<Chromosome>>,
    fetch_pending: bool,
    malformed: Arc<AtomicU64>,
    done: Receiver<()>,
}

impl BackgroundTransport {
    pub fn spawn<T>(mut inner: T) -> Self
    where
        T: MigrationTransport + Send + 'static,
    {
        let (requests, inbox) = mpsc::sync_channel::<Request>(2);
        let (outbox, replies) = mpsc::channel();
        let malformed = Arc::new(AtomicU64::new(0));
        let counter = malformed.clone();
        let (finished, done) = mpsc::channel();
        thread::spawn(move || {
            while let Ok(req) = inbox.recv() {
                match req {
                    Request::Send(c) => inner.send_one(&c),
                    Request::Fetch => {
                        // Nobody listening after close; keep draining sends.
                        let _ = outbox.send(inner.fetch_random());
                    }
                }
                counter.store(inner.malformed_replies(), Ordering::Relaxed);
            }
            let _ = finished.send(());
        });
        Self {
            requests,
            replies,
            fetch_pending: false,
            malformed,
            done,
        }
    }

    /// Stops taking requests and waits up to `grace` for the queued ones to
    /// go out. Returns false if the worker was still busy at the deadline.
    pub fn close(self, grace: Duration) -> bool {
        let Self {
            requests,
            replies,
            done,
            ..
        } = self;
        drop(requests);
        drop(replies);
        !matches!(done.recv_timeout(grace), Err(RecvTimeoutError::Timeout))
    }
}

impl MigrationTransport for BackgroundTransport {
    fn send_one(&mut self, c: &Chromosome) {
        // Full queue or dead worker: the emigrant is dropped.
        let _ = self.requests.try_send(Request::Send(c.clone()));
    }

    fn announce(&mut self, c: &Chromosome) {
        let _ = self.requests.send(Request::Send(c.clone()));
    }

    fn fetch_random(&mut self) -> Option<Chromosome> {
        let mut arrived = None;
        if self.fetch_pending {
            match self.replies.try_recv() {
                Ok(reply) => {
                    self.fetch_pending = false;
                    arrived = reply;
                }
                Err(TryRecvError::Empty) => return None,
                Err(TryRecvError::Disconnected) => {
                    self.fetch_pending = false;
                    return None;
                }
            }
        }
        if self.requests.try_send(Request::Fetch).is_ok() {
            self.fetch_pending = true;
        }
        arrived
    }

    fn malformed_replies(&self) -> u64 {
        self.malformed.load(Ordering::Relaxed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IslandReport {
    pub solved: bool,
    pub generations: u64,
    pub evaluations: u64,
    pub migrations_sent: u64,
    pub migrations_received: u64,
    /// Immigrants discarded for having the wrong length, plus undecodable
    /// replies counted by the transport.
    pub malformed_received: u64,
    pub wall_clock: f64,
    pub best_fitness: f64,
    /// `(generation, best fitness)` at generation 0 and whenever the best
    /// fitness changes, plus the final generation.
    pub best_fitness_trace: Vec<(u64, f64)>,
}

/// What happened during one migration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExchangeOutcome {
    Nothing,
    Incorporated { slot: usize },
    Discarded,
}

/// Sends the current best and swaps a fetched immigrant, if any, into a
/// uniformly chosen non-elite slot. Elite here means the `elite_size`
/// fittest members of `pop` right now.
pub fn migrate_exchange<P, T, R>(
    pop: &mut Population,
    elite_size: usize,
    problem: &P,
    transport: &mut T,
    rng: &mut R,
) -> ExchangeOutcome
where
    P: Problem + ?Sized,
    T: MigrationTransport + ?Sized,
    R: Rng + ?Sized,
{
    transport.send_one(pop.best().chromosome());
    let Some(immigrant) = transport.fetch_random() else {
        return ExchangeOutcome::Nothing;
    };
    if immigrant.len() != problem.chromosome_len() {
        return ExchangeOutcome::Discarded;
    }
    let protected = pop.top_indices(elite_size);
    let open = pop.len() - protected.len();
    if open == 0 {
        return ExchangeOutcome::Discarded;
    }
    let mut pick = rng.random_range(0..open);
    let mut slot = 0;
    // Walk to the pick-th unprotected index.
    for i in 0..pop.len() {
        if protected.contains(&i) {
            continue;
        }
        if pick == 0 {
            slot = i;
            break;
        }
        pick -= 1;
    }
    pop.replace(slot, Individual::evaluate(immigrant, problem));
    ExchangeOutcome::Incorporated { slot }
}

/// Island state that can be advanced piecewise, as the simulator does.
pub struct Island<'p, P: Problem + ?Sized> {
    params: EaParams,
    problem: &'p P,
    rng: Xoshiro256PlusPlus,
    pop: Population,
    evaluations: u64,
    migrations_sent: u64,
    migrations_received: u64,
    discarded: u64,
    trace: Vec<(u64, f64)>,
    solved: bool,
}

impl<'p, P: Problem + ?Sized> Island<'p, P> {
    pub fn new(params: EaParams, problem: &'p P, seed: u64) -> Self {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let pop = ea::new_random_population(&params, problem, &mut rng);
        let solved = pop.has_solution(problem);
        let evaluations = pop.len() as u64;
        let trace = vec![(0, pop.best_fitness())];
        Self {
            params,
            problem,
            rng,
            pop,
            evaluations,
            migrations_sent: 0,
            migrations_received: 0,
            discarded: 0,
            trace,
            solved,
        }
    }

    pub fn population(&self) -> &Population {
        &self.pop
    }

    pub fn generation(&self) -> u64 {
        self.pop.generation()
    }

    pub fn is_solved(&self) -> bool {
        self.solved
    }

    /// Solved, or out of generations.
    pub fn is_finished(&self) -> bool {
        self.solved
            || self
                .params
                .max_generations
                .is_some_and(|max| self.pop.generation() >= max)
    }

    fn note_best(&mut self) {
        let best = self.pop.best_fitness();
        if self.trace.last().map(|&(_, f)| f) != Some(best) {
            self.trace.push((self.pop.generation(), best));
        }
    }

    /// One generation, then a migration when the generation count hits a
    /// multiple of the migration period. Returns true if a migration ran.
    pub fn step<T: MigrationTransport + ?Sized>(&mut self, transport: &mut T) -> bool {
        self.pop = ea::step_generation(&self.pop, &self.params, self.problem, &mut self.rng);
        self.evaluations += (self.pop.len() - self.params.elite_size.min(self.pop.len())) as u64;
        let migrated = self
            .pop
            .generation()
            .is_multiple_of(self.params.migration_period);
        if migrated {
            self.migrate(transport);
        }
        self.note_best();
        self.solved = self.pop.has_solution(self.problem);
        migrated
    }

    fn migrate<T: MigrationTransport + ?Sized>(&mut self, transport: &mut T) {
        self.migrations_sent += 1;
        let outcome = migrate_exchange(
            &mut self.pop,
            self.params.elite_size,
            self.problem,
            transport,
            &mut self.rng,
        );
        match outcome {
            // Immigrant fitness is bookkeeping, not search effort; not counted.
            ExchangeOutcome::Incorporated { .. } => self.migrations_received += 1,
            ExchangeOutcome::Discarded => self.discarded += 1,
            ExchangeOutcome::Nothing => {}
        }
    }

    /// Steps until the next migration has happened or the island finishes.
    /// Returns true if the cycle ended with a migration.
    pub fn run_cycle<T: MigrationTransport + ?Sized>(&mut self, transport: &mut T) -> bool {
        while !self.is_finished() {
            if self.step(transport) {
                return true;
            }
        }
        false
    }

    pub fn report(&self, wall_clock: f64, malformed_replies: u64) -> IslandReport {
        let mut trace = self.trace.clone();
        let last = (self.pop.generation(), self.pop.best_fitness());
        if trace.last() != Some(&last) {
            trace.push(last);
        }
        IslandReport {
            solved: self.solved,
            generations: self.pop.generation(),
            evaluations: self.evaluations,
            migrations_sent: self.migrations_sent,
            migrations_received: self.migrations_received,
            malformed_received: self.discarded + malformed_replies,
            wall_clock,
            best_fitness: self.pop.best_fitness(),
            best_fitness_trace: trace,
        }
    }
}

/// Runs one island to completion: until some member is all ones or
/// `max_generations` is reached. A solved island sends its solution once
/// more, outside the migration count, so the pool log records it.
pub fn run_island<P, T>(
    params: &EaParams,
    problem: &P,
    transport: &mut T,
    seed: u64,
) -> IslandReport
where
    P: Problem + ?Sized,
    T: MigrationTransport + ?Sized,
{
    let started = Instant::now();
    let mut island = Island::new(params.clone(), problem, seed);
    while !island.is_finished() {
        island.step(transport);
    }
    if island.is_solved() {
        transport.announce(island.population().best().chromosome());
    }
    island.report(
        started.elapsed().as_secs_f64(),
        transport.malformed_replies(),
    )
}
