//! Small dense linear algebra: just enough for finite-chain work.
//!
//! State spaces here are tiny (a handful of states, at most a few hundred for
//! pair chains), so a plain row-major `Vec<f64>` matrix with partially
//! pivoted LU and a uniformized matrix exponential covers everything without
//! pulling in a linear-algebra dependency.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("singular system (pivot {pivot:e} at column {col})")]
    SingularSystem { col: usize, pivot: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    a: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, a: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Self { rows: r, cols: c, a: rows.concat() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.a[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul shape");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let v = self[(i, k)];
                if v == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += v * other[(k, j)];
                }
            }
        }
        out
    }

    /// Row vector times matrix.
    pub fn vecmul_left(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.rows, "vecmul shape");
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for j in 0..self.cols {
                out[j] += vi * self[(i, j)];
            }
        }
        out
    }

    /// Matrix times column vector.
    pub fn vecmul_right(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols, "vecmul shape");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Mat {
        Mat { rows: self.rows, cols: self.cols, a: self.a.iter().map(|x| x * s).collect() }
    }

    pub fn max_abs_diff(&self, other: &Mat) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.a
            .iter()
            .zip(&other.a)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.a[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.a[i * self.cols + j]
    }
}

/// Solve `A x = b` by LU with partial pivoting.
pub fn lu_solve(a: &Mat, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let n = a.rows();
    if a.cols() != n || b.len() != n {
        return Err(LinalgError::DimensionMismatch(format!(
            "{}x{} with rhs of length {}",
            a.rows(),
            a.cols(),
            b.len()
        )));
    }
    let mut m = a.clone();
    let mut x = b.to_vec();
    for col in 0..n {
        let (piv, pval) = (col..n)
            .map(|r| (r, m[(r, col)].abs()))
            .max_by(|l, r| l.1.total_cmp(&r.1))
            .unwrap();
        if pval < 1e-14 {
            return Err(LinalgError::SingularSystem { col, pivot: pval });
        }
        if piv != col {
            for j in 0..n {
                let tmp = m[(col, j)];
                m[(col, j)] = m[(piv, j)];
                m[(piv, j)] = tmp;
            }
            x.swap(col, piv);
        }
        for r in col + 1..n {
            let f = m[(r, col)] / m[(col, col)];
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                m[(r, j)] -= f * m[(col, j)];
            }
            x[r] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        let mut s = x[col];
        for j in col + 1..n {
            s -= m[(col, j)] * x[j];
        }
        x[col] = s / m[(col, col)];
    }
    Ok(x)
}

/// `e^{tQ}` for a (sub-)generator `Q` (nonnegative off-diagonals, row sums ≤ 0)
/// by uniformization: the Poisson-weighted series of `K = Q/Λ + I`, truncated
/// when the cumulative Poisson tail drops below `tol`. All terms are
/// nonnegative, so the evaluation is sign-stable. Large `tΛ` is handled by
/// computing `e^{(t/2^s)Q}` and squaring `s` times.
pub fn expm_generator(q: &Mat, t: f64, tol: f64) -> Mat {
    assert_eq!(q.rows(), q.cols(), "expm needs a square matrix");
    assert!(t >= 0.0, "expm needs t >= 0");
    let n = q.rows();
    let rate = (0..n).map(|i| -q[(i, i)]).fold(0.0, f64::max);
    if rate == 0.0 || t == 0.0 {
        return Mat::identity(n);
    }
    // Keep the Poisson mean per factor moderate; square back up.
    let mut squarings = 0u32;
    let mut tt = t;
    while rate * tt > 64.0 {
        tt *= 0.5;
        squarings += 1;
    }
    let lam = rate * tt;
    let mut k = q.scale(1.0 / rate);
    for i in 0..n {
        k[(i, i)] += 1.0;
    }
    let mut weight = (-lam).exp();
    let mut cum = weight;
    let mut term = Mat::identity(n); // K^j, j = 0
    let mut acc = term.scale(weight);
    let mut j = 0u32;
    while 1.0 - cum > tol {
        j += 1;
        term = term.matmul(&k);
        weight *= lam / f64::from(j);
        cum += weight;
        for idx in 0..acc.a.len() {
            acc.a[idx] += weight * term.a[idx];
        }
        if j > 10_000 {
            break; // unreachable for lam <= 64, defensive cap
        }
    }
    for _ in 0..squarings {
        acc = acc.matmul(&acc);
    }
    acc
}

/// Stationary law of an irreducible conservative generator: solve `pi A = 0`,
/// `sum pi = 1`, replacing the last balance equation by the normalization.
pub fn stationary_of_generator(a: &Mat, residual_tol: f64) -> Result<Vec<f64>, LinalgError> {
    let n = a.rows();
    assert_eq!(a.cols(), n);
    if n == 1 {
        return Ok(vec![1.0]);
    }
    // System rows: columns of A (balance per state), last replaced by ones.
    let mut sys = a.transpose();
    let mut rhs = vec![0.0; n];
    for j in 0..n {
        sys[(n - 1, j)] = 1.0;
    }
    rhs[n - 1] = 1.0;
    let pi = lu_solve(&sys, &rhs)?;
    let residual = a
        .vecmul_left(&pi)
        .iter()
        .map(|x| x.abs())
        .fold(0.0, f64::max);
    if residual > residual_tol || pi.iter().any(|&p| p < -residual_tol) {
        return Err(LinalgError::SingularSystem { col: 0, pivot: residual });
    }
    Ok(pi)
}
