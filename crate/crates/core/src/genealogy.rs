//! Label algebra, dynamical historical paths, MRCA and spine extraction.
//!
//! Every particle carries a label: a sequence of `(particle, event)` pairs.
//! Before the first event particle `i` is labeled `((i, 0))`. At event `k`
//! (killed `i_k`, donor `u`) both involved particles get the donor's old
//! label extended by one pair: the donor's becomes `α + (u, k)` and the
//! killed one's becomes `α + (i_k, k)`. Labels therefore form a binary tree:
//! a node's two children are created at the single event where its holder
//! acted as donor, and a node dies childless when its holder is killed.
//!
//! The dynamical historical path of particle `n` at time `t` decodes `n`'s
//! label `((a_1,b_1), …, (a_k,b_k))`: between the events `b_m` and `b_{m+1}`
//! it follows particle `a_m`'s trajectory, and it is continuous across each
//! switch because a killed particle adopts the donor's state. The spine is
//! the path decoded from the longest common prefix of all current labels;
//! its window ends at the event where that prefix branches (the MRCA time).

use serde::Serialize;
use thiserror::Error;

use crate::fv::FvRun;
use crate::model::{Path, StateId};

const NONE: u32 = u32::MAX;

/// Genealogical address of a particle: `(particle, event)` pairs with
/// strictly increasing event components starting at 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Label {
    pub pairs: Vec<(usize, usize)>,
}

impl Label {
    pub fn is_prefix_of(&self, other: &Label) -> bool {
        self.pairs.len() <= other.pairs.len()
            && self.pairs.iter().zip(&other.pairs).all(|(a, b)| a == b)
    }

    /// Event components must satisfy `0 = b_1 < b_2 < …`.
    pub fn events_strictly_increase(&self) -> bool {
        self.pairs.first().is_none_or(|p| p.1 == 0)
            && self.pairs.windows(2).all(|w| w[0].1 < w[1].1)
    }
}

/// A decoded dynamical historical path: the backward-in-time path through
/// the branching structure ending at `particle` at `eval_time`.
#[derive(Debug, Clone, PartialEq)]
pub struct DhpRecord {
    pub particle: usize,
    pub eval_time: f64,
    pub path: Path,
    /// Breakpoints of the index map: `(switch_time, particle)`; the particle
    /// applies on `[switch_time, next_switch_time)`.
    pub chi: Vec<(f64, usize)>,
}

impl DhpRecord {
    /// Which particle's trajectory the path follows at time `s`.
    pub fn chi_at(&self, s: f64) -> usize {
        let idx = self.chi.partition_point(|&(t, _)| t <= s);
        self.chi[idx.saturating_sub(1)].1
    }
}

/// The common-prefix path of all current labels, up to the MRCA time.
#[derive(Debug, Clone, PartialEq)]
pub struct SpineRecord {
    pub mrca_time: f64,
    pub path: Path,
    pub label: Label,
    /// Times of events along the spine window at which the spine particle
    /// was involved (it branched as donor, or the window ends).
    pub branch_times: Vec<f64>,
}

impl SpineRecord {
    /// Spine particle index at time `s ∈ [0, mrca_time]`, or `None` for the
    /// degenerate empty spine.
    pub fn particle_at(&self, run: &FvRun, s: f64) -> Option<usize> {
        if self.label.pairs.is_empty() || s > self.mrca_time {
            return None;
        }
        let idx = self
            .label
            .pairs
            .partition_point(|&(_, b)| run.event_time(b) <= s);
        Some(self.label.pairs[idx.saturating_sub(1)].0)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenealogyError {
    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },
}

/// Default burn-in discarded from the front of a spine window.
pub fn default_burn_in(mrca_time: f64) -> f64 {
    1.0_f64.min(mrca_time / 4.0)
}

#[derive(Debug, Clone)]
struct GNode {
    particle: u32,
    event: u32,
    parent: u32,
    depth: u32,
    children: [u32; 2],
    /// Event at which the holder left this label (branched or was killed);
    /// `NONE` while still held at the horizon.
    end_event: u32,
}

/// The label tree of one run, with per-particle label histories. Built once,
/// then queried for labels, DHPs, the MRCA and the spine.
pub struct Genealogy<'a> {
    run: &'a FvRun,
    nodes: Vec<GNode>,
    /// Per particle: `(acquisition_time, node)`, in chronological order.
    history: Vec<Vec<(f64, u32)>>,
}

impl<'a> Genealogy<'a> {
    pub fn new(run: &'a FvRun) -> Self {
        let n = run.n_particles;
        let mut nodes: Vec<GNode> = (0..n)
            .map(|i| GNode {
                particle: i as u32,
                event: 0,
                parent: NONE,
                depth: 1,
                children: [NONE, NONE],
                end_event: NONE,
            })
            .collect();
        let mut history: Vec<Vec<(f64, u32)>> = (0..n).map(|i| vec![(0.0, i as u32)]).collect();
        let mut current: Vec<u32> = (0..n as u32).collect();
        for e in &run.events {
            let k = e.k as u32;
            let donor_node = current[e.target];
            // The killed particle abandons its old label; the donor's label
            // branches into the two extensions.
            nodes[current[e.killed] as usize].end_event = k;
            nodes[donor_node as usize].end_event = k;
            let depth = nodes[donor_node as usize].depth + 1;
            let donor_child = nodes.len() as u32;
            nodes.push(GNode {
                particle: e.target as u32,
                event: k,
                parent: donor_node,
                depth,
                children: [NONE, NONE],
                end_event: NONE,
            });
            let killed_child = nodes.len() as u32;
            nodes.push(GNode {
                particle: e.killed as u32,
                event: k,
                parent: donor_node,
                depth,
                children: [NONE, NONE],
                end_event: NONE,
            });
            nodes[donor_node as usize].children = [donor_child, killed_child];
            current[e.target] = donor_child;
            current[e.killed] = killed_child;
            history[e.target].push((e.tau, donor_child));
            history[e.killed].push((e.tau, killed_child));
        }
        Self { run, nodes, history }
    }

    pub fn run(&self) -> &FvRun {
        self.run
    }

    fn node_at(&self, particle: usize, s: f64) -> u32 {
        let h = &self.history[particle];
        let idx = h.partition_point(|&(t, _)| t <= s);
        h[idx - 1].1
    }

    fn decode(&self, mut node: u32) -> Label {
        let mut pairs = Vec::with_capacity(self.nodes[node as usize].depth as usize);
        while node != NONE {
            let n = &self.nodes[node as usize];
            pairs.push((n.particle as usize, n.event as usize));
            node = n.parent;
        }
        pairs.reverse();
        Label { pairs }
    }

    /// Label of particle `i` at time `s`.
    pub fn label_of(&self, i: usize, s: f64) -> Result<Label, GenealogyError> {
        self.check_time(s)?;
        Ok(self.decode(self.node_at(i, s)))
    }

    fn check_time(&self, t: f64) -> Result<(), GenealogyError> {
        if t < 0.0 || t > self.run.horizon {
            return Err(GenealogyError::TimeOutOfRange { t, horizon: self.run.horizon });
        }
        Ok(())
    }

    /// Dynamical historical path of particle `n` at time `t`.
    pub fn dhp(&self, n: usize, t: f64) -> Result<DhpRecord, GenealogyError> {
        self.check_time(t)?;
        let label = self.decode(self.node_at(n, t));
        let chi: Vec<(f64, usize)> = label
            .pairs
            .iter()
            .map(|&(a, b)| (self.run.event_time(b), a))
            .collect();
        let path = self.stitch(&chi, t);
        Ok(DhpRecord { particle: n, eval_time: t, path, chi })
    }

    /// Concatenate trajectory slices of the given `(from_time, particle)`
    /// windows into one cadlag path ending at `end`.
    fn stitch(&self, breakpoints: &[(f64, usize)], end: f64) -> Path {
        let Some(&(start, _)) = breakpoints.first() else {
            return Path::empty();
        };
        let mut segments: Vec<(f64, StateId)> = Vec::new();
        for (m, &(from, particle)) in breakpoints.iter().enumerate() {
            let to = breakpoints.get(m + 1).map_or(end, |b| b.0);
            let traj = &self.run.trajectories[particle];
            let state = traj.state_at(from).expect("window start inside run");
            segments.push((from, state));
            let mut idx = traj.segment_index_at(from).expect("window start inside run") + 1;
            let segs = traj.segments();
            while idx < segs.len() && segs[idx].0 < to {
                segments.push(segs[idx]);
                idx += 1;
            }
        }
        Path::new(start, end, segments)
    }

    /// Node ids of all current labels at time `t`.
    fn frontier(&self, t: f64) -> Vec<u32> {
        (0..self.run.n_particles)
            .map(|i| self.node_at(i, t))
            .collect()
    }

    /// Deepest common ancestor of the current labels, or `None` when the
    /// labels do not share even their first pair.
    fn common_ancestor(&self, t: f64) -> Option<u32> {
        let mut set = self.frontier(t);
        let min_depth = set
            .iter()
            .map(|&v| self.nodes[v as usize].depth)
            .min()
            .unwrap();
        for v in &mut set {
            while self.nodes[*v as usize].depth > min_depth {
                *v = self.nodes[*v as usize].parent;
            }
        }
        loop {
            set.sort_unstable();
            set.dedup();
            if set.len() == 1 {
                return Some(set[0]);
            }
            for v in &mut set {
                let p = self.nodes[*v as usize].parent;
                if p == NONE {
                    return None;
                }
                *v = p;
            }
        }
    }

    /// Largest time up to which the index maps of all N historical paths at
    /// time `t` agree: the time of the event at which the common label
    /// prefix branches. Zero when there is no common prefix.
    pub fn mrca_time(&self, t: f64) -> Result<f64, GenealogyError> {
        self.check_time(t)?;
        Ok(match self.common_ancestor(t) {
            None => 0.0,
            Some(lca) => self.run.event_time(self.branch_event_of(lca) as usize),
        })
    }

    /// Event at which a branched node's two children were created.
    fn branch_event_of(&self, node: u32) -> u32 {
        let n = &self.nodes[node as usize];
        debug_assert!(n.children[0] != NONE, "common ancestor must have branched");
        self.nodes[n.children[0] as usize].event
    }

    /// The spine at time `t`: the path decoded from the common label prefix
    /// on `[0, mrca_time]`, with the times of its branching events.
    pub fn extract_spine(&self, t: f64) -> Result<SpineRecord, GenealogyError> {
        self.check_time(t)?;
        let Some(lca) = self.common_ancestor(t) else {
            return Ok(SpineRecord {
                mrca_time: 0.0,
                path: Path::empty(),
                label: Label { pairs: Vec::new() },
                branch_times: Vec::new(),
            });
        };
        let label = self.decode(lca);
        let mrca_time = self.run.event_time(self.branch_event_of(lca) as usize);
        let chi: Vec<(f64, usize)> = label
            .pairs
            .iter()
            .map(|&(a, b)| (self.run.event_time(b), a))
            .collect();
        let path = self.stitch(&chi, mrca_time);
        // The spine particle is involved exactly at the prefix-growth events
        // and at the terminal event that ends the window.
        let mut branch_times: Vec<f64> = label.pairs[1..]
            .iter()
            .map(|&(_, b)| self.run.event_time(b))
            .collect();
        branch_times.push(mrca_time);
        Ok(SpineRecord { mrca_time, path, label, branch_times })
    }

    /// Spine branching times up to `min(t, mrca_time)`, extracting the spine
    /// at the run horizon.
    pub fn spine_branch_count(&self, t: f64) -> Result<Vec<f64>, GenealogyError> {
        self.check_time(t)?;
        let spine = self.extract_spine(self.run.horizon)?;
        Ok(spine
            .branch_times
            .iter()
            .copied()
            .filter(|&u| u <= t)
            .collect())
    }

    /// Label-tree node of particle `i` acquired exactly at event `k`, if any.
    pub(crate) fn node_acquired_at(&self, i: usize, k: usize) -> Option<u32> {
        self.history[i]
            .iter()
            .rev()
            .find(|&&(_, v)| self.nodes[v as usize].event as usize <= k)
            .and_then(|&(_, v)| (self.nodes[v as usize].event as usize == k).then_some(v))
    }

    pub(crate) fn node(&self, id: u32) -> (usize, usize, [u32; 2], Option<usize>) {
        let n = &self.nodes[id as usize];
        let children = n.children;
        let end = (n.end_event != NONE).then_some(n.end_event as usize);
        (n.particle as usize, n.event as usize, children, end)
    }

    pub(crate) fn trajectory_slice(&self, particle: usize, from: f64, to: f64) -> Path {
        self.stitch(&[(from, particle)], to)
    }
}
