//! Sampling the ranks of chosen particles on a regular grid after each jump.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::Serialize;

use super::{ensemble, replica_rng, JumpEvent, RankingState, SimConfig};
use crate::error::{Error, Result};
use crate::io::{Observation, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankSample {
    /// Time since the start of the segment.
    pub t: f64,
    pub rank: usize,
}

/// Stretch between two jumps of a tracked particle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Segment {
    /// Absolute start time: the jump time, or 0 for the initial stretch.
    pub start: f64,
    /// False only for the stretch before the first jump.
    pub from_jump: bool,
    pub samples: Vec<RankSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackedTrajectory {
    pub particle: usize,
    pub segments: Vec<Segment>,
}

impl TrackedTrajectory {
    /// One [`Trajectory`] per segment, in absolute time, labelled
    /// `p<particle>s<segment>`; jump segments carry their jump time as marker.
    pub fn to_trajectories(&self) -> Vec<Trajectory> {
        self.segments
            .iter()
            .enumerate()
            .map(|(k, seg)| Trajectory {
                label: format!("p{}s{}", self.particle, k),
                observations: seg
                    .samples
                    .iter()
                    .map(|s| Observation {
                        t: seg.start + s.t,
                        rank: s.rank as f64,
                    })
                    .collect(),
                jump: seg.from_jump.then_some(seg.start),
                offset_unknown: false,
            })
            .collect()
    }
}

struct Pending {
    time: f64,
    slot: usize,
    generation: u64,
    k: u64,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    // Reversed so the max-heap pops the earliest sample first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.slot.cmp(&self.slot))
    }
}

/// Records the rank of each particle in `particles` at every multiple of
/// `interval` after each of its jumps (time re-zeroed at the jump) until its
/// next jump or the horizon. The stretch before the first jump is kept as a
/// segment starting at `t = 0` with `from_jump = false`.
pub fn track(
    rates: &[f64],
    config: &SimConfig,
    interval: f64,
    particles: &[usize],
) -> Result<Vec<TrackedTrajectory>> {
    track_inner(rates, config, interval, particles, None)
}

/// [`track`] that also returns the full event log; the events match those of
/// [`super::run`] with the same configuration.
pub fn track_with_events(
    rates: &[f64],
    config: &SimConfig,
    interval: f64,
    particles: &[usize],
) -> Result<(Vec<TrackedTrajectory>, Vec<JumpEvent>)> {
    let mut events = Vec::new();
    let tracked = track_inner(rates, config, interval, particles, Some(&mut events))?;
    Ok((tracked, events))
}

fn track_inner(
    rates: &[f64],
    config: &SimConfig,
    interval: f64,
    particles: &[usize],
    mut log: Option<&mut Vec<JumpEvent>>,
) -> Result<Vec<TrackedTrajectory>> {
    config.validate()?;
    if !(interval > 0.0 && interval.is_finite()) {
        return Err(Error::invalid(format!(
            "sampling interval {interval} must be positive"
        )));
    }
    let mut slot_of = vec![usize::MAX; rates.len()];
    for (slot, &p) in particles.iter().enumerate() {
        if p >= rates.len() {
            return Err(Error::invalid(format!(
                "tracked particle {p} out of range (n = {})",
                rates.len()
            )));
        }
        if slot_of[p] != usize::MAX {
            return Err(Error::invalid(format!("particle {p} tracked twice")));
        }
        slot_of[p] = slot;
    }

    let mut rng = replica_rng(config.seed, config.replica);
    let mut state = RankingState::new(rates, config.order, &mut rng)?;
    let horizon = config.horizon;

    let mut out: Vec<TrackedTrajectory> = particles
        .iter()
        .map(|&p| TrackedTrajectory {
            particle: p,
            segments: vec![Segment {
                start: 0.0,
                from_jump: false,
                samples: vec![RankSample {
                    t: 0.0,
                    rank: state.rank(p),
                }],
            }],
        })
        .collect();
    let mut generation = vec![0u64; particles.len()];
    let mut heap: BinaryHeap<Pending> = (0..particles.len())
        .map(|slot| Pending {
            time: interval,
            slot,
            generation: 0,
            k: 1,
        })
        .collect();

    // Samples strictly before `until` (or up to and including it at the end)
    // see the state left by the last event.
    let flush = |heap: &mut BinaryHeap<Pending>,
                 out: &mut Vec<TrackedTrajectory>,
                 generation: &[u64],
                 state: &RankingState,
                 until: f64,
                 inclusive: bool| {
        while let Some(top) = heap.peek() {
            let due = if inclusive { top.time <= until } else { top.time < until };
            if !due {
                break;
            }
            let top = heap.pop().expect("peeked");
            if top.generation != generation[top.slot] {
                continue;
            }
            let traj = &mut out[top.slot];
            let seg = traj.segments.last_mut().expect("segment");
            seg.samples.push(RankSample {
                t: top.time - seg.start,
                rank: state.rank(traj.particle),
            });
            let k = top.k + 1;
            heap.push(Pending {
                time: seg.start + k as f64 * interval,
                k,
                ..top
            });
        }
    };

    loop {
        match state.next_time(&mut rng, horizon) {
            None => {
                flush(&mut heap, &mut out, &generation, &state, horizon, true);
                break;
            }
            Some(t) => {
                flush(&mut heap, &mut out, &generation, &state, t, false);
                let e = state.jump_at(&mut rng, t);
                if let Some(log) = log.as_deref_mut() {
                    log.push(e);
                }
                let slot = slot_of[e.particle];
                if slot != usize::MAX {
                    generation[slot] += 1;
                    out[slot].segments.push(Segment {
                        start: t,
                        from_jump: true,
                        samples: vec![RankSample { t: 0.0, rank: 1 }],
                    });
                    heap.push(Pending {
                        time: t + interval,
                        slot,
                        generation: generation[slot],
                        k: 1,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// [`track`] over replicas `0..replicas`, run in parallel.
pub fn track_ensemble(
    rates: &[f64],
    config: &SimConfig,
    interval: f64,
    particles: &[usize],
    replicas: u64,
) -> Result<Vec<Vec<TrackedTrajectory>>> {
    ensemble(replicas, |replica| {
        track(rates, &SimConfig { replica, ..*config }, interval, particles)
    })
}

/// Relative-rank curves `(t, (rank - 1)/n)` of every jump segment whose
/// samples reach at least `min_samples` points.
pub fn relative_curves(
    trajectories: &[TrackedTrajectory],
    n: usize,
    min_samples: usize,
) -> Vec<Vec<(f64, f64)>> {
    trajectories
        .iter()
        .flat_map(|tr| tr.segments.iter())
        .filter(|seg| seg.from_jump && seg.samples.len() >= min_samples.max(1))
        .map(|seg| {
            seg.samples
                .iter()
                .map(|s| (s.t, (s.rank - 1) as f64 / n as f64))
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalFront {
    pub t: Vec<f64>,
    pub mean: Vec<f64>,
    /// Standard error of the mean; 0 where only one curve contributes.
    pub se: Vec<f64>,
    pub count: Vec<usize>,
}

/// Pointwise mean and standard error over curves sampled on a common grid.
/// Curves may stop early; each grid point averages the curves that reach it.
pub fn empirical_front(curves: &[Vec<(f64, f64)>]) -> Result<EmpiricalFront> {
    if curves.is_empty() {
        return Err(Error::invalid("empirical front needs at least one curve"));
    }
    let grid: Vec<f64> = curves
        .iter()
        .max_by_key(|c| c.len())
        .expect("non-empty")
        .iter()
        .map(|p| p.0)
        .collect();
    for (ci, c) in curves.iter().enumerate() {
        for (k, &(t, _)) in c.iter().enumerate() {
            if (t - grid[k]).abs() > 1e-9 * grid[k].abs().max(1.0) {
                return Err(Error::invalid(format!(
                    "curve {ci} is sampled at t = {t} where the grid has {}",
                    grid[k]
                )));
            }
        }
    }
    let mut mean = Vec::with_capacity(grid.len());
    let mut se = Vec::with_capacity(grid.len());
    let mut count = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let values: Vec<f64> = curves.iter().filter_map(|c| c.get(k).map(|p| p.1)).collect();
        let m = values.len() as f64;
        let mu = values.iter().sum::<f64>() / m;
        let s = if values.len() > 1 {
            let var = values.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (m - 1.0);
            (var / m).sqrt()
        } else {
            0.0
        };
        mean.push(mu);
        se.push(s);
        count.push(values.len());
    }
    Ok(EmpiricalFront {
        t: grid,
        mean,
        se,
        count,
    })
}
