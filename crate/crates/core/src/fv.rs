//! Event-driven simulation of the N-particle Fleming-Viot process.
//!
//! Each particle carries an independent exponential clock with its current
//! exit rate. When a clock fires the particle jumps inside `E`; a jump to the
//! cemetery becomes a resampling event: a donor is drawn uniformly from the
//! other N−1 particles and the killed particle adopts the donor's current
//! state. Only the killed particle's clock is redrawn (memorylessness makes
//! the local redraw exact). For a finite driving chain the event sequence
//! never accumulates, so runs always reach the horizon.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ctmc::{exp_sample, jump_destination};
use crate::model::{Distribution, FiniteChainModel, Path, StateId};
use crate::seeds;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FvError {
    #[error("InvalidInitialState: particle {particle} starts at {state}")]
    InvalidInitialState { particle: usize, state: StateId },
    #[error("need at least two particles, got {0}")]
    TooFewParticles(usize),
    #[error("horizon must be positive, got {0}")]
    NonPositiveHorizon(f64),
    #[error("TimeOutOfRange: t = {t}, horizon = {horizon}")]
    TimeOutOfRange { t: f64, horizon: f64 },
}

/// One kill-and-adopt event. `k` is 1-based and event times are strictly
/// increasing; `killed` and `target` are 0-based particle indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResampleEvent {
    pub k: usize,
    pub tau: f64,
    pub killed: usize,
    pub target: usize,
    pub adopted_state: StateId,
}

/// Root seed of a run; substreams are derived per the layout in [`crate::seeds`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub root: u64,
}

/// Full record of one N-particle simulation: per-particle trajectories on
/// `[0, horizon]` (killed segments replaced by post-adoption states, so no
/// trajectory ever enters the cemetery) plus the ordered resampling log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FvRun {
    pub model: FiniteChainModel,
    pub n_particles: usize,
    pub horizon: f64,
    pub initial_states: Vec<StateId>,
    pub trajectories: Vec<Path>,
    pub events: Vec<ResampleEvent>,
    pub rng_seed: SeedRecord,
}

impl FvRun {
    /// Event time of 1-based event index `k`; `k = 0` is time zero.
    #[inline]
    pub fn event_time(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.events[k - 1].tau
        }
    }

    /// State of a particle at time `t ∈ [0, horizon]`.
    pub fn state_of(&self, particle: usize, t: f64) -> StateId {
        self.trajectories[particle]
            .state_at(t)
            .expect("time inside run horizon")
    }
}

struct Clock {
    time: f64,
    particle: usize,
}

impl PartialEq for Clock {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.particle == other.particle
    }
}
impl Eq for Clock {}
impl PartialOrd for Clock {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Clock {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap by time, particle index as deterministic tie-break.
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.particle.cmp(&self.particle))
    }
}

/// Exact simulation of the Fleming-Viot system.
pub fn simulate_fv(
    model: &FiniteChainModel,
    initial_states: &[StateId],
    horizon: f64,
    seed: u64,
) -> Result<FvRun, FvError> {
    let n = initial_states.len();
    if n < 2 {
        return Err(FvError::TooFewParticles(n));
    }
    if horizon.is_nan() || horizon <= 0.0 {
        return Err(FvError::NonPositiveHorizon(horizon));
    }
    for (i, &x) in initial_states.iter().enumerate() {
        if x < 1 || x > model.n_interior() {
            return Err(FvError::InvalidInitialState { particle: i, state: x });
        }
    }

    let mut particle_rngs: Vec<_> = (0..n)
        .map(|i| seeds::stream(seed, &[seeds::ROLE_PARTICLE, i as u64]))
        .collect();
    let mut donor_rng = seeds::stream(seed, &[seeds::ROLE_DONOR]);

    let mut state: Vec<StateId> = initial_states.to_vec();
    let mut segments: Vec<Vec<(f64, StateId)>> =
        initial_states.iter().map(|&x| vec![(0.0, x)]).collect();
    let mut events: Vec<ResampleEvent> = Vec::new();

    let mut heap = BinaryHeap::with_capacity(n);
    for i in 0..n {
        let t = exp_sample(&mut particle_rngs[i], model.exit_rate(state[i]));
        heap.push(Clock { time: t, particle: i });
    }

    let mut last_tau = 0.0;
    while let Some(Clock { time, particle }) = heap.pop() {
        if time > horizon {
            break;
        }
        let dest = jump_destination(model, state[particle], &mut particle_rngs[particle]);
        if dest != 0 {
            state[particle] = dest;
            segments[particle].push((time, dest));
            let next = time + exp_sample(&mut particle_rngs[particle], model.exit_rate(dest));
            heap.push(Clock { time: next, particle });
            continue;
        }
        // Kill-and-adopt. Event times must be strictly increasing; on an exact
        // float collision redraw this particle's clock (probability-zero event).
        if !events.is_empty() && time <= last_tau {
            let next = time + exp_sample(&mut particle_rngs[particle], model.exit_rate(state[particle]));
            heap.push(Clock { time: next, particle });
            continue;
        }
        let donor = loop {
            let j = donor_rng.gen_range(0..n);
            if j != particle {
                break j;
            }
        };
        let adopted = state[donor];
        last_tau = time;
        events.push(ResampleEvent {
            k: events.len() + 1,
            tau: time,
            killed: particle,
            target: donor,
            adopted_state: adopted,
        });
        state[particle] = adopted;
        segments[particle].push((time, adopted));
        let next = time + exp_sample(&mut particle_rngs[particle], model.exit_rate(adopted));
        heap.push(Clock { time: next, particle });
    }

    Ok(FvRun {
        model: model.clone(),
        n_particles: n,
        horizon,
        initial_states: initial_states.to_vec(),
        trajectories: segments
            .into_iter()
            .map(|s| Path::new(0.0, horizon, s))
            .collect(),
        events,
        rng_seed: SeedRecord { root: seed },
    })
}

use rand::Rng as _;

/// Normalized state histogram of the N particles at time `t`, over `F`.
pub fn empirical_measure(run: &FvRun, t: f64) -> Result<Distribution, FvError> {
    if t < 0.0 || t > run.horizon {
        return Err(FvError::TimeOutOfRange { t, horizon: run.horizon });
    }
    let n_int = run.model.n_interior();
    let mut counts = vec![0.0; n_int];
    for p in 0..run.n_particles {
        let x = run.state_of(p, t);
        counts[x - 1] += 1.0;
    }
    Ok(Distribution::normalized(counts).expect("particles occupy interior states"))
}

/// Number of resampling events up to time `t` whose donor is particle `m`.
pub fn branch_counts(run: &FvRun, m: usize, t: f64) -> usize {
    run.events
        .iter()
        .take_while(|e| e.tau <= t)
        .filter(|e| e.target == m)
        .count()
}
