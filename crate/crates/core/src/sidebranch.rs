//! The limiting side-branch branching process and extraction of empirical
//! side-branch trees from a run.
//!
//! An individual of the limiting process runs the driving chain from its
//! birth state and dies at the earlier of absorption and an independent
//! clock with hazard `lambda_t`; if the clock wins it leaves two offspring
//! at its final state. Empirical side-branch trees are the label-subtrees
//! hanging off the spine at its branching events, with individuals mapped to
//! binary indices by a canonical parenthood-preserving map.

use std::collections::BTreeMap;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::ctmc::{self, exp_sample, jump_destination, CtmcError};
use crate::genealogy::{Genealogy, SpineRecord};
use crate::model::{Distribution, FiniteChainModel, Path, StateId};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SidebranchError {
    #[error("NodeCapExceeded: tree still alive after creating {0} nodes")]
    NodeCapExceeded(usize),
    #[error("NotABranchTime: {0} is not an interior spine branch time")]
    NotABranchTime(f64),
    #[error("SpineSideRequested: particle {particle} continues the spine at {time}")]
    SpineSideRequested { particle: usize, time: f64 },
    #[error("particle {particle} is not involved in the event at {time}")]
    AnchorNotInvolved { particle: usize, time: f64 },
    #[error(transparent)]
    Ctmc(#[from] CtmcError),
}

/// One individual of a branching tree: its lifetime `[birth_time,
/// death_time)`, the path it traced, and whether it branched (left two
/// offspring) or died as a leaf. `truncated` marks individuals still alive
/// at the observation horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreeNode {
    pub birth_time: f64,
    pub death_time: f64,
    pub path: Path,
    pub branched: bool,
    pub truncated: bool,
}

/// A binary-indexed branching tree. Nodes are keyed by index strings
/// ("0", "00", "01", …); the children of `β` are `β0` and `β1` and exist
/// exactly when `β` branched.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchingTree {
    pub nodes: BTreeMap<String, TreeNode>,
    pub truncated: bool,
}

impl BranchingTree {
    pub fn size(&self) -> usize {
        self.nodes.len()
    }

    pub fn root(&self) -> &TreeNode {
        &self.nodes["0"]
    }

    /// Lifetime: latest death minus the root's birth.
    pub fn lifetime(&self) -> f64 {
        let birth = self.root().birth_time;
        self.nodes
            .values()
            .map(|n| n.death_time)
            .fold(birth, f64::max)
            - birth
    }

    /// Number of individuals alive at time `t`.
    pub fn population_at(&self, t: f64) -> usize {
        self.nodes
            .values()
            .filter(|n| n.birth_time <= t && (t < n.death_time || (n.truncated && t <= n.death_time)))
            .count()
    }
}

/// Summary statistics of a tree.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreeStats {
    pub size: usize,
    pub lifetime: f64,
    /// Occupation time per state of `E`; only interior entries are nonzero.
    pub occupancy: Vec<f64>,
}

pub fn tree_statistics(tree: &BranchingTree, n_states: usize) -> TreeStats {
    let mut occupancy = vec![0.0; n_states];
    for node in tree.nodes.values() {
        for (i, &v) in node.path.occupancy(n_states).iter().enumerate() {
            occupancy[i] += v;
        }
    }
    TreeStats { size: tree.size(), lifetime: tree.lifetime(), occupancy }
}

/// Branching-rate profile for the limiting process.
#[derive(Debug, Clone)]
pub enum LambdaProfile {
    /// Constant rate (the quasi-stationary value, or zero).
    Constant(f64),
    /// The time-dependent killing rate of the survival-conditioned chain
    /// started from `mu0`.
    Conditioned { mu0: Distribution },
}

impl LambdaProfile {
    fn eval(&self, model: &FiniteChainModel, t: f64) -> Result<f64, CtmcError> {
        match self {
            LambdaProfile::Constant(l) => Ok(*l),
            LambdaProfile::Conditioned { mu0 } => ctmc::lambda_t(model, mu0, t),
        }
    }

    /// A constant envelope of the profile, valid for all times: the
    /// conditioned rate is a convex combination of the kill rates, so the
    /// largest kill rate dominates it everywhere.
    fn envelope(&self, model: &FiniteChainModel) -> f64 {
        match self {
            LambdaProfile::Constant(l) => *l,
            LambdaProfile::Conditioned { .. } => (1..=model.n_interior())
                .map(|x| model.kill_rate(x))
                .fold(0.0, f64::max),
        }
    }
}

enum Fate {
    Absorbed,
    Branched(StateId),
    Truncated,
}

fn simulate_individual<R: Rng>(
    model: &FiniteChainModel,
    profile: &LambdaProfile,
    envelope: f64,
    birth: f64,
    x0: StateId,
    horizon: f64,
    rng: &mut R,
) -> Result<(Path, f64, Fate), SidebranchError> {
    let mut t = birth;
    let mut x = x0;
    let mut segments = vec![(birth, x0)];
    loop {
        let jump_rate = model.exit_rate(x);
        let dt_jump = if jump_rate > 0.0 { exp_sample(rng, jump_rate) } else { f64::INFINITY };
        let dt_cand = if envelope > 0.0 { exp_sample(rng, envelope) } else { f64::INFINITY };
        if t + dt_jump.min(dt_cand) > horizon {
            let path = Path::new(birth, horizon, segments);
            return Ok((path, horizon, Fate::Truncated));
        }
        if dt_jump < dt_cand {
            t += dt_jump;
            let dest = jump_destination(model, x, rng);
            if dest == 0 {
                return Ok((Path::new(birth, t, segments), t, Fate::Absorbed));
            }
            x = dest;
            segments.push((t, x));
        } else {
            t += dt_cand;
            // Thin the candidate against the actual profile.
            let lambda = profile.eval(model, t)?;
            if rng.gen::<f64>() * envelope < lambda {
                return Ok((Path::new(birth, t, segments), t, Fate::Branched(x)));
            }
        }
    }
}

/// Simulate the limiting side-branch tree rooted at `(t1, x1)`.
///
/// Individuals alive at `horizon` are flagged truncated (use
/// `f64::INFINITY` to simulate to extinction). The simulation aborts with
/// `NodeCapExceeded` if the tree is still alive after `node_cap` individuals
/// have been created.
pub fn simulate_v_tree<R: Rng>(
    model: &FiniteChainModel,
    profile: &LambdaProfile,
    t1: f64,
    x1: StateId,
    horizon: f64,
    node_cap: usize,
    rng: &mut R,
) -> Result<BranchingTree, SidebranchError> {
    assert!(node_cap >= 1);
    assert!(x1 >= 1 && x1 <= model.n_interior());
    let envelope = profile.envelope(model);
    let mut nodes = BTreeMap::new();
    let mut queue = std::collections::VecDeque::new();
    queue.push_back(("0".to_string(), t1, x1));
    let mut created = 0usize;
    let mut any_truncated = false;
    while let Some((index, birth, state)) = queue.pop_front() {
        created += 1;
        if created > node_cap {
            return Err(SidebranchError::NodeCapExceeded(node_cap));
        }
        let (path, death, fate) =
            simulate_individual(model, profile, envelope, birth, state, horizon, rng)?;
        let (branched, truncated) = match fate {
            Fate::Branched(x) => {
                queue.push_back((format!("{index}0"), death, x));
                queue.push_back((format!("{index}1"), death, x));
                (true, false)
            }
            Fate::Absorbed => (false, false),
            Fate::Truncated => {
                any_truncated = true;
                (false, true)
            }
        };
        nodes.insert(index, TreeNode { birth_time: birth, death_time: death, path, branched, truncated });
    }
    Ok(BranchingTree { nodes, truncated: any_truncated })
}

/// Extract the empirical side-branch tree hanging off the spine at one of
/// its interior branching events.
///
/// `anchor` is `(j2, u_k)`: `u_k` must be a spine branch time strictly
/// before the MRCA time and `j2` the off-spine continuation there (the
/// involved particle whose label does not continue the spine prefix). The
/// returned tree collects every label descending from `j2`'s label at `u_k`;
/// individuals still alive at the run horizon are flagged truncated.
pub fn extract_z_tree(
    genealogy: &Genealogy<'_>,
    spine: &SpineRecord,
    anchor: (usize, f64),
    node_cap: usize,
) -> Result<BranchingTree, SidebranchError> {
    let (j2, u) = anchor;
    let run = genealogy.run();
    // Interior spine branch times only: the terminal event at the MRCA has
    // no identified off-spine side at a finite horizon.
    if u >= spine.mrca_time || !spine.branch_times.contains(&u) {
        return Err(SidebranchError::NotABranchTime(u));
    }
    let k = run
        .events
        .binary_search_by(|e| e.tau.total_cmp(&u))
        .map(|i| i + 1)
        .map_err(|_| SidebranchError::NotABranchTime(u))?;
    let event = &run.events[k - 1];
    // The spine continuation at this event is the prefix pair with b = k.
    let continuation = spine
        .label
        .pairs
        .iter()
        .find(|&&(_, b)| b == k)
        .map(|&(a, _)| a)
        .expect("interior branch time lies in the prefix");
    if j2 == continuation {
        return Err(SidebranchError::SpineSideRequested { particle: j2, time: u });
    }
    if j2 != event.killed && j2 != event.target {
        return Err(SidebranchError::AnchorNotInvolved { particle: j2, time: u });
    }
    let root = genealogy
        .node_acquired_at(j2, k)
        .expect("involved particle acquired a label at the event");

    let mut nodes = BTreeMap::new();
    let mut any_truncated = false;
    let mut queue = std::collections::VecDeque::new();
    queue.push_back(("0".to_string(), root));
    let mut created = 0usize;
    while let Some((index, id)) = queue.pop_front() {
        created += 1;
        if created > node_cap {
            return Err(SidebranchError::NodeCapExceeded(node_cap));
        }
        let (holder, born_event, children, end_event) = genealogy.node(id);
        let birth = run.event_time(born_event);
        let (death, branched, truncated) = match end_event {
            Some(e) => {
                let death = run.event_time(e);
                (death, children[0] != u32::MAX, false)
            }
            None => {
                any_truncated = true;
                (run.horizon, false, true)
            }
        };
        if branched {
            // Canonical binary indexing: the child held by the smaller
            // particle index at its birth gets suffix 0.
            let (p0, _, _, _) = genealogy.node(children[0]);
            let (p1, _, _, _) = genealogy.node(children[1]);
            let (first, second) = if p0 < p1 {
                (children[0], children[1])
            } else {
                (children[1], children[0])
            };
            queue.push_back((format!("{index}0"), first));
            queue.push_back((format!("{index}1"), second));
        }
        let path = genealogy.trajectory_slice(holder, birth, death);
        nodes.insert(index, TreeNode { birth_time: birth, death_time: death, path, branched, truncated });
    }
    Ok(BranchingTree { nodes, truncated: any_truncated })
}
