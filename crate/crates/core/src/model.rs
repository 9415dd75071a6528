//! The driving-chain model and the shared domain types.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Mat;
use crate::policy::NumericPolicy;

/// A state of the driving chain; 0 is the absorbing cemetery, interior states
/// are `1..=n`.
pub type StateId = usize;

/// A single defect found while validating a rate matrix.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelIssue {
    #[error("rate matrix is not square ({rows} rows, row {row} has {cols} entries)")]
    NotSquare { rows: usize, row: usize, cols: usize },
    #[error("rate matrix must be at least 2x2 (cemetery plus one interior state)")]
    TooSmall,
    #[error("NonZeroRowSum: row {row} sums to {sum:e}")]
    NonZeroRowSum { row: usize, sum: f64 },
    #[error("NegativeOffDiagonal: entry ({row},{col}) = {value}")]
    NegativeOffDiagonal { row: usize, col: usize, value: f64 },
    #[error("CemeteryNotAbsorbing: row 0 entry {col} = {value}")]
    CemeteryNotAbsorbing { col: usize, value: f64 },
    #[error("InteriorNotCommunicating: state {from} does not reach state {to} inside F")]
    InteriorNotCommunicating { from: StateId, to: StateId },
    #[error("CemeteryUnreachable: state {state} cannot reach the cemetery")]
    CemeteryUnreachable { state: StateId },
}

/// All defects of a rejected rate matrix.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid chain model: {}", .issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; "))]
pub struct ValidationErrors {
    pub issues: Vec<ModelIssue>,
}

/// A cemetery-augmented rate matrix over `E = {0, …, n}`.
///
/// Row 0 is identically zero (the cemetery is absorbing), interior rows sum
/// to zero, the interior `F = {1, …, n}` is a communicating class and every
/// interior state reaches the cemetery with positive probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteChainModel {
    n: usize,
    q: Vec<Vec<f64>>,
}

impl FiniteChainModel {
    /// Validate a raw rate matrix with default tolerances.
    pub fn validate(q: Vec<Vec<f64>>) -> Result<Self, ValidationErrors> {
        Self::validate_with(q, &NumericPolicy::default())
    }

    /// Validate a raw rate matrix.
    pub fn validate_with(q: Vec<Vec<f64>>, policy: &NumericPolicy) -> Result<Self, ValidationErrors> {
        let mut issues = Vec::new();
        let rows = q.len();
        for (i, row) in q.iter().enumerate() {
            if row.len() != rows {
                issues.push(ModelIssue::NotSquare { rows, row: i, cols: row.len() });
            }
        }
        if !issues.is_empty() {
            return Err(ValidationErrors { issues });
        }
        if rows < 2 {
            return Err(ValidationErrors { issues: vec![ModelIssue::TooSmall] });
        }
        let n = rows - 1;
        for (j, &v) in q[0].iter().enumerate() {
            if v.abs() > policy.row_sum_tol {
                issues.push(ModelIssue::CemeteryNotAbsorbing { col: j, value: v });
            }
        }
        for i in 1..rows {
            let sum: f64 = q[i].iter().sum();
            if sum.abs() > policy.row_sum_tol {
                issues.push(ModelIssue::NonZeroRowSum { row: i, sum });
            }
            for j in 0..rows {
                if i != j && q[i][j] < 0.0 {
                    issues.push(ModelIssue::NegativeOffDiagonal { row: i, col: j, value: q[i][j] });
                }
            }
        }
        if issues.is_empty() {
            // Reachability on the support graph of positive rates.
            let reach = |from: usize| -> Vec<bool> {
                let mut seen = vec![false; rows];
                let mut stack = vec![from];
                seen[from] = true;
                while let Some(x) = stack.pop() {
                    for y in 0..rows {
                        if !seen[y] && q[x][y] > 0.0 {
                            seen[y] = true;
                            stack.push(y);
                        }
                    }
                }
                seen
            };
            for x in 1..rows {
                let seen = reach(x);
                if !seen[0] {
                    issues.push(ModelIssue::CemeteryUnreachable { state: x });
                }
                for y in 1..rows {
                    if !seen[y] {
                        issues.push(ModelIssue::InteriorNotCommunicating { from: x, to: y });
                    }
                }
            }
        }
        if issues.is_empty() {
            Ok(Self { n, q })
        } else {
            Err(ValidationErrors { issues })
        }
    }

    /// Number of interior states.
    pub fn n_interior(&self) -> usize {
        self.n
    }

    /// Number of states including the cemetery.
    pub fn n_states(&self) -> usize {
        self.n + 1
    }

    #[inline]
    pub fn rate(&self, x: StateId, y: StateId) -> f64 {
        self.q[x][y]
    }

    /// Total jump rate out of `x`.
    #[inline]
    pub fn exit_rate(&self, x: StateId) -> f64 {
        -self.q[x][x]
    }

    /// Rate from `x` straight into the cemetery.
    #[inline]
    pub fn kill_rate(&self, x: StateId) -> f64 {
        self.q[x][0]
    }

    pub fn q_rows(&self) -> &[Vec<f64>] {
        &self.q
    }

    /// Full generator as a matrix over `E`.
    pub fn full_generator(&self) -> Mat {
        Mat::from_rows(&self.q)
    }

    /// Sub-generator over `F` (rows and columns `1..=n`).
    pub fn sub_generator(&self) -> Mat {
        let mut m = Mat::zeros(self.n, self.n);
        for x in 1..=self.n {
            for y in 1..=self.n {
                m[(x - 1, y - 1)] = self.q[x][y];
            }
        }
        m
    }
}

/// A probability vector. The support (over `F` or over `E`, or over pair
/// states) is documented by each operation; entries over `F` are indexed so
/// that entry `i` is the mass of state `i + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    w: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistributionError {
    #[error("negative weight {value} at index {index}")]
    NegativeWeight { index: usize, value: f64 },
    #[error("weights sum to {sum}, not 1")]
    NotNormalized { sum: f64 },
    #[error("empty weight vector")]
    Empty,
}

impl Distribution {
    pub fn new(w: Vec<f64>) -> Result<Self, DistributionError> {
        Self::new_with(w, NumericPolicy::default().distribution_tol)
    }

    pub fn new_with(w: Vec<f64>, tol: f64) -> Result<Self, DistributionError> {
        if w.is_empty() {
            return Err(DistributionError::Empty);
        }
        if let Some((i, &v)) = w.iter().enumerate().find(|(_, &v)| v < 0.0) {
            return Err(DistributionError::NegativeWeight { index: i, value: v });
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > tol {
            return Err(DistributionError::NotNormalized { sum });
        }
        Ok(Self { w })
    }

    /// Point mass at `index` on a support of size `len`.
    pub fn delta(index: usize, len: usize) -> Self {
        assert!(index < len);
        let mut w = vec![0.0; len];
        w[index] = 1.0;
        Self { w }
    }

    /// Normalize arbitrary nonnegative weights.
    pub fn normalized(mut w: Vec<f64>) -> Result<Self, DistributionError> {
        let sum: f64 = w.iter().sum();
        if w.is_empty() {
            return Err(DistributionError::Empty);
        }
        if sum <= 0.0 {
            return Err(DistributionError::NotNormalized { sum });
        }
        for v in &mut w {
            *v /= sum;
        }
        Self::new(w)
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    #[inline]
    pub fn get(&self, index: usize) -> f64 {
        self.w[index]
    }

    /// Mass of interior state `x` for a distribution over `F`.
    #[inline]
    pub fn state_mass(&self, x: StateId) -> f64 {
        self.w[x - 1]
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    /// Sample an index from this distribution.
    pub fn sample<R: rand::Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut cum = 0.0;
        for (i, &p) in self.w.iter().enumerate() {
            cum += p;
            if u < cum {
                return i;
            }
        }
        self.w.len() - 1
    }
}

/// A cadlag trajectory: the state holds on `[entry_time, next_entry_time)`
/// and on `[last_entry_time, end_time]` for the final segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    start_time: f64,
    end_time: f64,
    segments: Vec<(f64, StateId)>,
}

impl Path {
    pub fn new(start_time: f64, end_time: f64, segments: Vec<(f64, StateId)>) -> Self {
        debug_assert!(end_time >= start_time);
        debug_assert!(segments.first().is_none_or(|s| s.0 == start_time));
        debug_assert!(segments.windows(2).all(|w| w[0].0 < w[1].0));
        Self { start_time, end_time, segments }
    }

    /// A path with no segments (used for the degenerate spine with an empty
    /// common prefix).
    pub fn empty() -> Self {
        Self { start_time: 0.0, end_time: 0.0, segments: Vec::new() }
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    pub fn end_time(&self) -> f64 {
        self.end_time
    }

    pub fn duration(&self) -> f64 {
        self.end_time - self.start_time
    }

    pub fn segments(&self) -> &[(f64, StateId)] {
        &self.segments
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// State at time `t`, or `None` outside `[start_time, end_time]`.
    pub fn state_at(&self, t: f64) -> Option<StateId> {
        if self.segments.is_empty() || t < self.start_time || t > self.end_time {
            return None;
        }
        let idx = self.segments.partition_point(|&(entry, _)| entry <= t);
        Some(self.segments[idx - 1].1)
    }

    /// Index of the last segment with entry time ≤ `t`.
    pub fn segment_index_at(&self, t: f64) -> Option<usize> {
        if self.segments.is_empty() || t < self.start_time {
            return None;
        }
        Some(self.segments.partition_point(|&(entry, _)| entry <= t) - 1)
    }

    /// Occupation time per state, over states `0..n_states`.
    pub fn occupancy(&self, n_states: usize) -> Vec<f64> {
        let mut occ = vec![0.0; n_states];
        for (i, &(entry, state)) in self.segments.iter().enumerate() {
            let exit = self.segments.get(i + 1).map_or(self.end_time, |s| s.0);
            occ[state] += exit - entry;
        }
        occ
    }
}
