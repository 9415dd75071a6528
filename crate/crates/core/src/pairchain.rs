//! Exact analysis of the two-particle Fleming-Viot system.
//!
//! For N = 2 the particle pair is itself a CTMC on `F × F`: the driver moves
//! each coordinate, and a kill turns into an adoption of the other
//! coordinate. Everything of interest (stationary law, the race-harmonic
//! function, the exact spine marginal) reduces to small linear solves.

use serde::Serialize;
use thiserror::Error;

use crate::ctmc::{self, CtmcError};
use crate::linalg::{self, LinalgError, Mat};
use crate::model::{Distribution, FiniteChainModel, StateId};
use crate::policy::NumericPolicy;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PairError {
    #[error("SingularSystem: {0}")]
    SingularSystem(#[from] LinalgError),
    #[error(transparent)]
    Ctmc(#[from] CtmcError),
}

/// The pair generator over `F × F`, with its flat index map: pair `(x, y)`
/// sits at `(x-1)·n + (y-1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairModel {
    pub base: FiniteChainModel,
    pub generator: Mat,
}

impl PairModel {
    #[inline]
    pub fn flat_index(&self, x: StateId, y: StateId) -> usize {
        (x - 1) * self.base.n_interior() + (y - 1)
    }

    #[inline]
    pub fn pair_of(&self, flat: usize) -> (StateId, StateId) {
        let n = self.base.n_interior();
        (flat / n + 1, flat % n + 1)
    }
}

/// Rates of the N=2 system on `F × F`: driver moves within `F` plus
/// kill-and-adopt jumps `(x,y) → (y,y)` at rate `q_{x0}` (and symmetrically).
/// A kill at a diagonal pair state is an invisible self-adoption.
pub fn product_generator(model: &FiniteChainModel) -> PairModel {
    let n = model.n_interior();
    let mut gen = Mat::zeros(n * n, n * n);
    let idx = |x: StateId, y: StateId| (x - 1) * n + (y - 1);
    for x in 1..=n {
        for y in 1..=n {
            let row = idx(x, y);
            for x2 in 1..=n {
                if x2 != x {
                    gen[(row, idx(x2, y))] += model.rate(x, x2);
                }
            }
            for y2 in 1..=n {
                if y2 != y {
                    gen[(row, idx(x, y2))] += model.rate(y, y2);
                }
            }
            if x != y {
                gen[(row, idx(y, y))] += model.kill_rate(x);
                gen[(row, idx(x, x))] += model.kill_rate(y);
            }
            let off: f64 = (0..n * n)
                .filter(|&c| c != row)
                .map(|c| gen[(row, c)])
                .sum();
            gen[(row, row)] = -off;
        }
    }
    PairModel { base: model.clone(), generator: gen }
}

/// Stationary distribution of an irreducible rate matrix (`pi A = 0`,
/// `sum pi = 1`) by dense LU with the normalization row replacing one balance
/// equation.
pub fn stationary(rate_matrix: &Mat) -> Result<Distribution, PairError> {
    stationary_with(rate_matrix, &NumericPolicy::default())
}

pub fn stationary_with(rate_matrix: &Mat, policy: &NumericPolicy) -> Result<Distribution, PairError> {
    let pi = linalg::stationary_of_generator(rate_matrix, policy.linear_residual)?;
    Ok(Distribution::normalized(pi).expect("stationary law"))
}

/// The race function `f(x, y)`: probability that the second coordinate of an
/// independent pair reaches the cemetery strictly before the first, from
/// `(x, y) ∈ F × F`. Harmonic for the independent-pair generator with
/// boundary values `f(x, 0) = 1`, `f(0, y) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RaceSolution {
    n: usize,
    f: Vec<f64>,
}

impl RaceSolution {
    #[inline]
    pub fn prob_second_dies_first(&self, x: StateId, y: StateId) -> f64 {
        self.f[(x - 1) * self.n + (y - 1)]
    }
}

pub fn race_harmonic(model: &FiniteChainModel) -> Result<RaceSolution, PairError> {
    race_harmonic_with(model, &NumericPolicy::default())
}

pub fn race_harmonic_with(
    model: &FiniteChainModel,
    policy: &NumericPolicy,
) -> Result<RaceSolution, PairError> {
    let n = model.n_interior();
    let m = n * n;
    let idx = |x: StateId, y: StateId| (x - 1) * n + (y - 1);
    // (|q_xx| + |q_yy|) f(x,y) - sum_{x'≠x} q_{xx'} f(x',y) - sum_{y'≠y} q_{yy'} f(x,y') = q_{y0}
    let mut sys = Mat::zeros(m, m);
    let mut rhs = vec![0.0; m];
    for x in 1..=n {
        for y in 1..=n {
            let row = idx(x, y);
            sys[(row, row)] = model.exit_rate(x) + model.exit_rate(y);
            for x2 in 1..=n {
                if x2 != x {
                    sys[(row, idx(x2, y))] -= model.rate(x, x2);
                }
            }
            for y2 in 1..=n {
                if y2 != y {
                    sys[(row, idx(x, y2))] -= model.rate(y, y2);
                }
            }
            rhs[row] = model.kill_rate(y);
        }
    }
    let f = linalg::lu_solve(&sys, &rhs)?;
    // Residual and maximum-principle checks.
    let residual = sys
        .vecmul_right(&f)
        .iter()
        .zip(&rhs)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if residual > policy.linear_residual {
        return Err(PairError::SingularSystem(LinalgError::SingularSystem {
            col: 0,
            pivot: residual,
        }));
    }
    debug_assert!(f.iter().all(|&v| (-1e-12..=1.0 + 1e-12).contains(&v)));
    Ok(RaceSolution { n, f })
}

/// Exact law of the spine state in the stationary two-particle regime:
/// `P(J = z) = sum_{(x,y)} pi(x,y) [ f(x,y) 1{x=z} + (1-f(x,y)) 1{y=z} ]`.
pub fn spine_marginal(model: &FiniteChainModel) -> Result<Distribution, PairError> {
    let pair = product_generator(model);
    let pi = stationary(&pair.generator)?;
    let race = race_harmonic(model)?;
    let n = model.n_interior();
    let mut mass = vec![0.0; n];
    for flat in 0..pi.len() {
        let (x, y) = pair.pair_of(flat);
        let f = race.prob_second_dies_first(x, y);
        mass[x - 1] += pi.get(flat) * f;
        mass[y - 1] += pi.get(flat) * (1.0 - f);
    }
    Ok(Distribution::normalized(mass).expect("spine marginal"))
}

/// The three stationary laws the two-particle system distinguishes, with
/// their pairwise total-variation gaps: the exact N=2 spine marginal, the
/// quasi-stationary distribution (long-time survival-conditioned law), and
/// the Q-process stationary law.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapReport {
    pub spine_marginal: Vec<f64>,
    pub qsd: Vec<f64>,
    pub qprocess_stationary: Vec<f64>,
    pub gap_spine_vs_qsd: f64,
    pub gap_spine_vs_qprocess: f64,
    pub gap_qsd_vs_qprocess: f64,
}

fn tv(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

pub fn fixed_n_gap_report(model: &FiniteChainModel) -> Result<GapReport, PairError> {
    let spine = spine_marginal(model)?;
    let nu = ctmc::qsd(model)?.nu;
    let qp = ctmc::qprocess_generator(model)?.stationary;
    Ok(GapReport {
        gap_spine_vs_qsd: tv(spine.weights(), nu.weights()),
        gap_spine_vs_qprocess: tv(spine.weights(), qp.weights()),
        gap_qsd_vs_qprocess: tv(nu.weights(), qp.weights()),
        spine_marginal: spine.weights().to_vec(),
        qsd: nu.weights().to_vec(),
        qprocess_stationary: qp.weights().to_vec(),
    })
}
