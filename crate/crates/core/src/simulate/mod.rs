//! Move-to-front stochastic ranking process.
//!
//! Particle `i` jumps at Poisson rate `w_i`; a jumping particle moves to rank 1
//! and everything that was ahead of it drops back by one. Events are drawn from
//! the superposed process: one exponential clock at rate `Σ w_i`, then a
//! categorical pick by weight.
//!
//! Ranks live in an order-statistic structure over slots: each particle owns a
//! slot, the rank is the number of occupied slots up to and including its own,
//! and a jump claims a fresh slot in front of the current head. When the spare
//! slots run out the layout is compacted. Both rank queries and updates are
//! `O(log n)`.
//!
//! Particle ids are 0-based indices into the rate vector; ranks are 1-based.
//!
//! Random streams: replica `r` of a run with seed `s` uses
//! `ChaCha8Rng::seed_from_u64(s)` with `set_stream(r)`.

mod fenwick;
mod track;

pub use track::{
    empirical_front, relative_curves, track, track_ensemble, track_with_events, EmpiricalFront,
    RankSample, Segment, TrackedTrajectory,
};

use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use fenwick::{CountTree, WeightTree};

/// Description written into event-log headers.
pub const GENERATOR: &str = "ChaCha8Rng::seed_from_u64(seed), set_stream(replica)";

const EMPTY: u32 = u32::MAX;

/// The generator for one replica of a seeded run.
pub fn replica_rng(seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialOrder {
    /// Uniformly random permutation.
    #[default]
    UniformRandom,
    /// Fastest particle at rank 1, ties by id.
    ByRate,
}

impl FromStr for InitialOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform-random" => Ok(InitialOrder::UniformRandom),
            "by-rate" => Ok(InitialOrder::ByRate),
            other => Err(Error::invalid(format!(
                "unknown initial order '{other}' (expected uniform-random or by-rate)"
            ))),
        }
    }
}

/// Parameters shared by [`run`] and [`track`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub horizon: f64,
    pub seed: u64,
    pub replica: u64,
    pub order: InitialOrder,
}

impl SimConfig {
    pub fn new(horizon: f64, seed: u64) -> Self {
        SimConfig {
            horizon,
            seed,
            replica: 0,
            order: InitialOrder::UniformRandom,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.horizon > 0.0 && self.horizon.is_finite() {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "horizon T = {} must be positive and finite",
                self.horizon
            )))
        }
    }
}

/// One jump: time, particle id and the rank it left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub t: f64,
    pub particle: usize,
    pub old_rank: usize,
}

#[derive(Debug, Clone)]
pub struct RankingState {
    rates: Vec<f64>,
    weights: WeightTree,
    exp: Exp<f64>,
    slots: CountTree,
    slot_of: Vec<usize>,
    occupant: Vec<u32>,
    head: usize,
    reserve: usize,
    clock: f64,
    events: u64,
}

impl RankingState {
    /// Places the particles in the initial order drawn from `rng`.
    pub fn new<R: Rng>(rates: &[f64], order: InitialOrder, rng: &mut R) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::invalid("simulation needs at least one particle"));
        }
        if rates.len() >= EMPTY as usize {
            return Err(Error::invalid("too many particles"));
        }
        for (i, &w) in rates.iter().enumerate() {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::invalid(format!(
                    "particle {i}: rate {w} must be finite and >= 0"
                )));
            }
        }
        let weights = WeightTree::new(rates);
        let exp = Exp::new(weights.total())
            .ok()
            .filter(|_| weights.total() > 0.0)
            .ok_or_else(|| Error::invalid("at least one rate must be positive"))?;

        let mut ranked: Vec<usize> = (0..rates.len()).collect();
        match order {
            InitialOrder::UniformRandom => ranked.shuffle(rng),
            InitialOrder::ByRate => {
                ranked.sort_by(|&i, &j| rates[j].total_cmp(&rates[i]).then(i.cmp(&j)))
            }
        }
        let n = rates.len();
        let reserve = n.max(16);
        let mut state = RankingState {
            rates: rates.to_vec(),
            weights,
            exp,
            slots: CountTree::from_occupancy(&[]),
            slot_of: vec![0; n],
            occupant: Vec::new(),
            head: 0,
            reserve,
            clock: 0.0,
            events: 0,
        };
        state.layout(&ranked);
        Ok(state)
    }

    fn layout(&mut self, ranked: &[usize]) {
        let cap = self.reserve + ranked.len();
        self.occupant.clear();
        self.occupant.resize(cap, EMPTY);
        for (r, &p) in ranked.iter().enumerate() {
            let slot = self.reserve + r;
            self.occupant[slot] = p as u32;
            self.slot_of[p] = slot;
        }
        let occupied: Vec<bool> = self.occupant.iter().map(|&p| p != EMPTY).collect();
        self.slots = CountTree::from_occupancy(&occupied);
        self.head = self.reserve;
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn event_count(&self) -> u64 {
        self.events
    }

    /// Current rank of `particle` (1 = front).
    pub fn rank(&self, particle: usize) -> usize {
        self.slots.prefix(self.slot_of[particle])
    }

    /// Particle currently holding `rank`.
    pub fn particle_at(&self, rank: usize) -> usize {
        assert!((1..=self.len()).contains(&rank), "rank {rank} out of range");
        self.occupant[self.slots.select(rank)] as usize
    }

    /// Particles listed by rank, front first.
    pub fn order(&self) -> Vec<usize> {
        self.occupant[self.head..]
            .iter()
            .filter(|&&p| p != EMPTY)
            .map(|&p| p as usize)
            .collect()
    }

    /// True if the order is a bijection consistent with the slot index.
    pub fn check_permutation(&self) -> bool {
        let order = self.order();
        if order.len() != self.len() {
            return false;
        }
        let mut seen = vec![false; self.len()];
        for (r, &p) in order.iter().enumerate() {
            if seen[p] || self.rank(p) != r + 1 {
                return false;
            }
            seen[p] = true;
        }
        true
    }

    fn move_to_front(&mut self, particle: usize) {
        let old = self.slot_of[particle];
        if old == self.head {
            return;
        }
        if self.head == 0 {
            let ranked = self.order();
            self.layout(&ranked);
            if self.slot_of[particle] == self.head {
                return;
            }
        }
        let old = self.slot_of[particle];
        self.slots.add(old, -1);
        self.occupant[old] = EMPTY;
        self.head -= 1;
        self.occupant[self.head] = particle as u32;
        self.slot_of[particle] = self.head;
        self.slots.add(self.head, 1);
    }

    fn pick<R: Rng>(&self, rng: &mut R) -> usize {
        loop {
            let u = rng.random::<f64>() * self.weights.total();
            let i = self.weights.find(u);
            if i < self.len() && self.rates[i] > 0.0 {
                return i;
            }
        }
    }

    /// Time of the next event, or `None` if it would fall after `horizon`, in
    /// which case the clock is advanced to `horizon`.
    fn next_time<R: Rng>(&mut self, rng: &mut R, horizon: f64) -> Option<f64> {
        let t = self.clock + self.exp.sample(rng);
        if t > horizon {
            self.clock = horizon;
            None
        } else {
            Some(t)
        }
    }

    fn jump_at<R: Rng>(&mut self, rng: &mut R, t: f64) -> JumpEvent {
        let particle = self.pick(rng);
        let old_rank = self.rank(particle);
        self.move_to_front(particle);
        self.clock = t;
        self.events += 1;
        debug_assert!(self.len() > 64 || self.check_permutation());
        JumpEvent {
            t,
            particle,
            old_rank,
        }
    }

    /// Performs the next jump if it happens no later than `horizon`.
    pub fn step<R: Rng>(&mut self, rng: &mut R, horizon: f64) -> Option<JumpEvent> {
        let t = self.next_time(rng, horizon)?;
        Some(self.jump_at(rng, t))
    }

    /// Performs exactly `count` jumps regardless of the clock.
    pub fn advance_events<R: Rng>(&mut self, rng: &mut R, count: u64) {
        for _ in 0..count {
            let t = self.clock + self.exp.sample(rng);
            self.jump_at(rng, t);
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub state: RankingState,
    pub events: Vec<JumpEvent>,
}

/// Simulates up to `config.horizon` and returns the final state and every jump.
pub fn run(rates: &[f64], config: &SimConfig) -> Result<RunOutput> {
    config.validate()?;
    let mut rng = replica_rng(config.seed, config.replica);
    let mut state = RankingState::new(rates, config.order, &mut rng)?;
    let mut events = Vec::new();
    while let Some(e) = state.step(&mut rng, config.horizon) {
        events.push(e);
    }
    Ok(RunOutput { state, events })
}

/// Runs `replicas` independent copies of `job` (replica indices `0..replicas`)
/// in parallel; results come back in replica order.
pub fn ensemble<T, F>(replicas: u64, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    if replicas == 0 {
        return Err(Error::invalid("ensemble size must be at least 1"));
    }
    (0..replicas).into_par_iter().map(&job).collect()
}

/// Writes `t,particle,old_rank` rows after a `# generator:` comment line.
pub fn write_event_log<W: Write>(out: W, events: &[JumpEvent], config: &SimConfig) -> Result<()> {
    let mut out = out;
    writeln!(
        out,
        "# generator: {GENERATOR}; seed = {}, replica = {}",
        config.seed, config.replica
    )?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "particle", "old_rank"])?;
    for e in events {
        w.write_record([e.t.to_string(), e.particle.to_string(), e.old_rank.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
