//! The driving chain: exact simulation, matrix exponentials, conditioned
//! laws, the quasi-stationary distribution and the Q-process.

use rand::Rng;
use thiserror::Error;

use crate::linalg::{self, Mat};
use crate::model::{Distribution, FiniteChainModel, Path, StateId};
use crate::policy::NumericPolicy;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CtmcError {
    #[error("NegativeTime: t = {0}")]
    NegativeTime(f64),
    #[error("VanishingSurvivalProbability: survival mass {0:e}")]
    VanishingSurvivalProbability(f64),
    #[error("NoConvergence: power iteration did not converge in {0} iterations")]
    NoConvergence(usize),
    #[error("distribution has wrong support size {got}, expected {expected}")]
    WrongSupport { got: usize, expected: usize },
    #[error(transparent)]
    Linalg(#[from] linalg::LinalgError),
}

/// Left/right Perron data of the sub-generator `Q_F`.
///
/// `nu` is the quasi-stationary distribution (sums to one), `phi` the right
/// eigenvector normalized to maximum entry one, and `lambda_inf` the decay
/// rate: `nu Q_F = -lambda_inf nu` and `Q_F phi = -lambda_inf phi`.
#[derive(Debug, Clone, PartialEq)]
pub struct QsdResult {
    pub nu: Distribution,
    pub lambda_inf: f64,
    pub phi: Vec<f64>,
}

/// The Q-process: generator over `F` of the chain conditioned never to be
/// absorbed, plus its stationary distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct QProcess {
    pub generator: Mat,
    pub stationary: Distribution,
}

/// `e^{tQ}` over `E`, by uniformization. Rows sum to one.
pub fn transition_matrix(model: &FiniteChainModel, t: f64) -> Result<Mat, CtmcError> {
    transition_matrix_with(model, t, &NumericPolicy::default())
}

pub fn transition_matrix_with(
    model: &FiniteChainModel,
    t: f64,
    policy: &NumericPolicy,
) -> Result<Mat, CtmcError> {
    if t < 0.0 {
        return Err(CtmcError::NegativeTime(t));
    }
    Ok(linalg::expm_generator(&model.full_generator(), t, policy.expm_truncation))
}

/// Exact jump-hold simulation of the driving chain from `x0`, stopped at
/// absorption or at `horizon`, whichever comes first.
pub fn simulate_path<R: Rng>(
    model: &FiniteChainModel,
    x0: StateId,
    horizon: f64,
    rng: &mut R,
) -> Path {
    assert!(
        x0 >= 1 && x0 <= model.n_interior(),
        "x0 must be an interior state"
    );
    assert!(horizon >= 0.0);
    let mut segments = vec![(0.0, x0)];
    let mut t = 0.0;
    let mut x = x0;
    loop {
        let rate = model.exit_rate(x);
        if rate <= 0.0 {
            return Path::new(0.0, horizon, segments);
        }
        t += exp_sample(rng, rate);
        if t > horizon {
            return Path::new(0.0, horizon, segments);
        }
        x = jump_destination(model, x, rng);
        segments.push((t, x));
        if x == 0 {
            return Path::new(0.0, t, segments);
        }
    }
}

/// Exponential holding time; guards against a zero draw so entry times stay
/// strictly increasing.
#[inline]
pub(crate) fn exp_sample<R: Rng>(rng: &mut R, rate: f64) -> f64 {
    loop {
        let u: f64 = rng.gen();
        let dt = -(-u).ln_1p() / rate; // -ln(1-u)/rate
        if dt > 0.0 {
            return dt;
        }
    }
}

/// Jump destination from `x` drawn proportionally to the off-diagonal rates.
#[inline]
pub(crate) fn jump_destination<R: Rng>(
    model: &FiniteChainModel,
    x: StateId,
    rng: &mut R,
) -> StateId {
    let total = model.exit_rate(x);
    let mut u: f64 = rng.gen::<f64>() * total;
    let mut last = 0;
    for y in 0..model.n_states() {
        if y == x {
            continue;
        }
        let r = model.rate(x, y);
        if r <= 0.0 {
            continue;
        }
        last = y;
        if u < r {
            return y;
        }
        u -= r;
    }
    last
}

/// Law of `Y_t` conditioned on survival (`Y_t ∈ F`), over `F`.
pub fn survival_conditioned_dist(
    model: &FiniteChainModel,
    mu0: &Distribution,
    t: f64,
) -> Result<Distribution, CtmcError> {
    survival_conditioned_dist_with(model, mu0, t, &NumericPolicy::default())
}

pub fn survival_conditioned_dist_with(
    model: &FiniteChainModel,
    mu0: &Distribution,
    t: f64,
    policy: &NumericPolicy,
) -> Result<Distribution, CtmcError> {
    let n = model.n_interior();
    if mu0.len() != n {
        return Err(CtmcError::WrongSupport { got: mu0.len(), expected: n });
    }
    if t < 0.0 {
        return Err(CtmcError::NegativeTime(t));
    }
    // Work on the sub-generator directly: mu e^{t Q_F}, renormalized.
    let sub = linalg::expm_generator(&model.sub_generator(), t, policy.expm_truncation);
    let masses = sub.vecmul_left(mu0.weights());
    let survival: f64 = masses.iter().sum();
    if survival < policy.survival_floor {
        return Err(CtmcError::VanishingSurvivalProbability(survival));
    }
    Ok(Distribution::normalized(masses).expect("renormalization of positive mass"))
}

/// Quasi-stationary distribution and Perron pair of `Q_F` by power iteration
/// on the short-time exponential `e^{δ Q_F}` with `δ = 1/(2 max|Q_F(x,x)|)`.
pub fn qsd(model: &FiniteChainModel) -> Result<QsdResult, CtmcError> {
    qsd_with(model, &NumericPolicy::default())
}

pub fn qsd_with(model: &FiniteChainModel, policy: &NumericPolicy) -> Result<QsdResult, CtmcError> {
    let n = model.n_interior();
    let qf = model.sub_generator();
    let max_diag = (0..n).map(|i| -qf[(i, i)]).fold(0.0, f64::max);
    if max_diag == 0.0 {
        // Single interior state with zero kill rate cannot validate; guarded anyway.
        return Err(CtmcError::NoConvergence(0));
    }
    let delta = 1.0 / (2.0 * max_diag);
    let step = linalg::expm_generator(&qf, delta, policy.expm_truncation);
    let step_t = step.transpose();

    let normalize_l1 = |v: &mut [f64]| {
        let s: f64 = v.iter().sum();
        for x in v.iter_mut() {
            *x /= s;
        }
    };

    let mut nu = vec![1.0 / n as f64; n];
    let mut phi = vec![1.0 / n as f64; n];
    let mut converged = false;
    for _ in 0..policy.qsd_max_iters {
        let mut nu_next = step.vecmul_left(&nu);
        normalize_l1(&mut nu_next);
        let mut phi_next = step_t.vecmul_left(&phi);
        normalize_l1(&mut phi_next);
        let diff = nu
            .iter()
            .zip(&nu_next)
            .chain(phi.iter().zip(&phi_next))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        nu = nu_next;
        phi = phi_next;
        if diff < policy.qsd_convergence {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(CtmcError::NoConvergence(policy.qsd_max_iters));
    }
    // lambda_inf = -(nu Q_F) 1 = sum_y nu(y) q_{y0}.
    let lambda_inf = -qf.vecmul_left(&nu).iter().sum::<f64>();
    let phi_max = phi.iter().fold(0.0_f64, |a, &b| a.max(b));
    for v in &mut phi {
        *v /= phi_max;
    }
    Ok(QsdResult {
        nu: Distribution::normalized(nu).expect("positive Perron vector"),
        lambda_inf,
        phi,
    })
}

/// Instantaneous killing rate of the survival-conditioned chain:
/// `lambda_t = sum_y P(Y_t = y | survival) q_{y0}`.
pub fn lambda_t(model: &FiniteChainModel, mu0: &Distribution, t: f64) -> Result<f64, CtmcError> {
    let cond = survival_conditioned_dist(model, mu0, t)?;
    Ok((1..=model.n_interior())
        .map(|y| cond.state_mass(y) * model.kill_rate(y))
        .sum())
}

/// Doob transform by the right Perron eigenvector: the generator of the chain
/// conditioned never to leave `F`, with its stationary distribution.
pub fn qprocess_generator(model: &FiniteChainModel) -> Result<QProcess, CtmcError> {
    qprocess_generator_with(model, &NumericPolicy::default())
}

pub fn qprocess_generator_with(
    model: &FiniteChainModel,
    policy: &NumericPolicy,
) -> Result<QProcess, CtmcError> {
    let n = model.n_interior();
    let QsdResult { phi, .. } = qsd_with(model, policy)?;
    let qf = model.sub_generator();
    let mut gen = Mat::zeros(n, n);
    for x in 0..n {
        let mut row_sum = 0.0;
        for y in 0..n {
            if x != y {
                let v = qf[(x, y)] * phi[y] / phi[x];
                gen[(x, y)] = v;
                row_sum += v;
            }
        }
        gen[(x, x)] = -row_sum;
    }
    let pi = linalg::stationary_of_generator(&gen, policy.linear_residual)?;
    Ok(QProcess {
        generator: gen,
        stationary: Distribution::normalized(pi).expect("stationary law"),
    })
}

/// Jump-hold simulation of the Q-process (never absorbed). States are
/// interior labels `1..=n`.
pub fn simulate_qprocess<R: Rng>(
    qprocess: &QProcess,
    x0: StateId,
    horizon: f64,
    rng: &mut R,
) -> Path {
    let n = qprocess.generator.rows();
    assert!(x0 >= 1 && x0 <= n, "x0 must be an interior state");
    let mut segments = vec![(0.0, x0)];
    let mut t = 0.0;
    let mut x = x0;
    loop {
        let rate = -qprocess.generator[(x - 1, x - 1)];
        if rate <= 0.0 {
            return Path::new(0.0, horizon, segments);
        }
        t += exp_sample(rng, rate);
        if t > horizon {
            return Path::new(0.0, horizon, segments);
        }
        // Draw destination among interior states proportional to rates.
        let mut u: f64 = rng.gen::<f64>() * rate;
        let mut dest = x;
        for y in 1..=n {
            if y == x {
                continue;
            }
            let r = qprocess.generator[(x - 1, y - 1)];
            if r <= 0.0 {
                continue;
            }
            dest = y;
            if u < r {
                break;
            }
            u -= r;
        }
        x = dest;
        segments.push((t, x));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds;

    pub(crate) fn three_state_model() -> FiniteChainModel {
        FiniteChainModel::validate(vec![
            vec![0.0, 0.0, 0.0],
            vec![4.0, -6.0, 2.0],
            vec![1.0, 6.0, -7.0],
        ])
        .unwrap()
    }

    /// Closed-form transition matrix of the three-state example.
    fn closed_form(t: f64) -> Mat {
        let e3 = (-3.0 * t).exp();
        let e10 = (-10.0 * t).exp();
        Mat::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![
                1.0 - 6.0 / 7.0 * e3 - 1.0 / 7.0 * e10,
                4.0 / 7.0 * e3 + 3.0 / 7.0 * e10,
                2.0 / 7.0 * e3 - 2.0 / 7.0 * e10,
            ],
            vec![
                1.0 - 9.0 / 7.0 * e3 + 2.0 / 7.0 * e10,
                6.0 / 7.0 * e3 - 6.0 / 7.0 * e10,
                3.0 / 7.0 * e3 + 4.0 / 7.0 * e10,
            ],
        ])
    }

    #[test]
    fn transition_matrix_matches_closed_form() {
        let m = three_state_model();
        for &t in &[0.1, 0.5, 1.0, 5.0, 20.0] {
            let p = transition_matrix(&m, t).unwrap();
            assert!(p.max_abs_diff(&closed_form(t)) < 1e-12, "t = {t}");
            for i in 0..3 {
                let s: f64 = p.row(i).iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
        // Spot value at t = 1.
        let p = transition_matrix(&m, 1.0).unwrap();
        let expect = 4.0 / 7.0 * (-3.0_f64).exp() + 3.0 / 7.0 * (-10.0_f64).exp();
        assert!((p[(1, 1)] - expect).abs() < 1e-9);
    }

    #[test]
    fn transition_matrix_at_zero_is_identity() {
        let m = three_state_model();
        assert_eq!(transition_matrix(&m, 0.0).unwrap(), Mat::identity(3));
        assert!(matches!(
            transition_matrix(&m, -1.0),
            Err(CtmcError::NegativeTime(_))
        ));
    }

    /// Independent oracle: plain scaling-and-squaring Taylor series.
    fn taylor_expm(q: &Mat, t: f64) -> Mat {
        let n = q.rows();
        let norm: f64 = (0..n)
            .map(|i| q.row(i).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let s = ((norm * t).log2().ceil().max(0.0)) as u32 + 4;
        let a = q.scale(t / 2f64.powi(s as i32));
        let mut acc = Mat::identity(n);
        let mut term = Mat::identity(n);
        for j in 1..=30 {
            term = term.matmul(&a).scale(1.0 / j as f64);
            for idx in 0..n {
                for jdx in 0..n {
                    acc[(idx, jdx)] += term[(idx, jdx)];
                }
            }
        }
        let mut out = acc;
        for _ in 0..s {
            out = out.matmul(&out);
        }
        out
    }

    #[test]
    fn transition_matrix_cross_checks_taylor_oracle() {
        let m = three_state_model();
        let p = transition_matrix(&m, 0.3).unwrap();
        let oracle = taylor_expm(&m.full_generator(), 0.3);
        assert!(p.max_abs_diff(&oracle) < 1e-9);
    }

    #[test]
    fn semigroup_property() {
        let m = three_state_model();
        let p_s = transition_matrix(&m, 0.7).unwrap();
        let p_t = transition_matrix(&m, 1.6).unwrap();
        let p_st = transition_matrix(&m, 2.3).unwrap();
        assert!(p_s.matmul(&p_t).max_abs_diff(&p_st) < 1e-9);
    }

    #[test]
    fn holding_time_mean_at_state_one() {
        // Row 1 has total rate 6; mean holding 1/6 over 1e5 visits.
        let m = three_state_model();
        let mut rng = seeds::stream(11, &[seeds::ROLE_PARTICLE, 0]);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            sum += exp_sample(&mut rng, m.exit_rate(1));
        }
        let mean = sum / n as f64;
        let se = (1.0 / 6.0) / (n as f64).sqrt();
        assert!(
            (mean - 1.0 / 6.0).abs() < 3.0 * se,
            "mean holding {mean}, want 1/6 ± {}",
            3.0 * se
        );
    }

    #[test]
    fn zero_horizon_path_is_degenerate() {
        let m = three_state_model();
        let mut rng = seeds::stream(1, &[]);
        let p = simulate_path(&m, 1, 0.0, &mut rng);
        assert_eq!(p.segments(), &[(0.0, 1)]);
        assert_eq!(p.end_time(), 0.0);
    }

    #[test]
    fn absorption_probability_by_t1() {
        // P(absorbed by 1 | x0 = 1) = 1 - (6/7)e^{-3} - (1/7)e^{-10}.
        let m = three_state_model();
        let expect = 1.0 - 6.0 / 7.0 * (-3.0_f64).exp() - 1.0 / 7.0 * (-10.0_f64).exp();
        let mut rng = seeds::stream(23, &[]);
        let n = 100_000;
        let mut absorbed = 0;
        for _ in 0..n {
            let p = simulate_path(&m, 1, 1.0, &mut rng);
            if p.state_at(p.end_time()) == Some(0) {
                absorbed += 1;
            }
        }
        let freq = absorbed as f64 / n as f64;
        let se = (expect * (1.0 - expect) / n as f64).sqrt();
        assert!(
            (freq - expect).abs() < 3.0 * se,
            "absorption freq {freq}, want {expect} ± {}",
            3.0 * se
        );
    }

    #[test]
    fn absorption_times_match_survival_function() {
        // Kolmogorov-Smirnov at the 1% level against the exact absorption law.
        let m = three_state_model();
        let mut rng = seeds::stream(37, &[]);
        let n = 100_000;
        let mut times: Vec<f64> = (0..n)
            .map(|_| {
                let p = simulate_path(&m, 1, f64::INFINITY, &mut rng);
                p.end_time()
            })
            .collect();
        times.sort_by(f64::total_cmp);
        let cdf = |t: f64| 1.0 - 6.0 / 7.0 * (-3.0 * t).exp() - 1.0 / 7.0 * (-10.0 * t).exp();
        let mut d: f64 = 0.0;
        for (i, &t) in times.iter().enumerate() {
            let f = cdf(t);
            d = d.max((f - i as f64 / n as f64).abs());
            d = d.max(((i + 1) as f64 / n as f64 - f).abs());
        }
        let crit = 1.628 / (n as f64).sqrt(); // 1% asymptotic critical value
        assert!(d < crit, "KS statistic {d} over critical {crit}");
    }

    #[test]
    fn conditioned_law_examples() {
        let m = three_state_model();
        let delta1 = Distribution::delta(0, 2);
        // t = 0 returns mu0.
        let d0 = survival_conditioned_dist(&m, &delta1, 0.0).unwrap();
        assert!((d0.state_mass(1) - 1.0).abs() < 1e-12);
        // t = 0.5 exact value from e^{tQ}: (4+3e^{-3.5})/(6+e^{-3.5})... via the
        // two-exponential closed form.
        let t = 0.5_f64;
        let num = 4.0 / 7.0 * (-3.0 * t).exp() + 3.0 / 7.0 * (-10.0 * t).exp();
        let den = 6.0 / 7.0 * (-3.0 * t).exp() + 1.0 / 7.0 * (-10.0 * t).exp();
        let d = survival_conditioned_dist(&m, &delta1, t).unwrap();
        assert!((d.state_mass(1) - num / den).abs() < 1e-9);
        // Long-time limit 2/3 regardless of start.
        let d5 = survival_conditioned_dist(&m, &delta1, 5.0).unwrap();
        assert!((d5.state_mass(1) - 2.0 / 3.0).abs() < 1e-6);
        let delta2 = Distribution::delta(1, 2);
        let d5b = survival_conditioned_dist(&m, &delta2, 5.0).unwrap();
        assert!((d5b.state_mass(1) - 2.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn conditioned_law_contracts_toward_qsd() {
        let m = three_state_model();
        let delta1 = Distribution::delta(0, 2);
        let nu = qsd(&m).unwrap().nu;
        let tv = |d: &Distribution| {
            0.5 * d
                .weights()
                .iter()
                .zip(nu.weights())
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
        };
        let d1 = survival_conditioned_dist(&m, &delta1, 1.0).unwrap();
        let d10 = survival_conditioned_dist(&m, &delta1, 10.0).unwrap();
        assert!(tv(&d10) < tv(&d1));
    }

    #[test]
    fn qsd_of_three_state_model() {
        let m = three_state_model();
        let r = qsd(&m).unwrap();
        assert!((r.nu.state_mass(1) - 2.0 / 3.0).abs() < 1e-10);
        assert!((r.nu.state_mass(2) - 1.0 / 3.0).abs() < 1e-10);
        assert!((r.lambda_inf - 3.0).abs() < 1e-10);
        // phi max-normalized; (Q_F + 3I) phi = 0 gives phi = (2/3, 1).
        assert!((r.phi[0] - 2.0 / 3.0).abs() < 1e-10);
        assert!((r.phi[1] - 1.0).abs() < 1e-10);
        // Residuals of the eigen relations.
        let qf = m.sub_generator();
        let left = qf.vecmul_left(r.nu.weights());
        for (i, &v) in left.iter().enumerate() {
            assert!((v + r.lambda_inf * r.nu.get(i)).abs() < 1e-10);
        }
        let right = qf.vecmul_right(&r.phi);
        for (i, &v) in right.iter().enumerate() {
            assert!((v + r.lambda_inf * r.phi[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn qsd_of_single_interior_state() {
        let m = FiniteChainModel::validate(vec![vec![0.0, 0.0], vec![2.5, -2.5]]).unwrap();
        let r = qsd(&m).unwrap();
        assert!((r.nu.state_mass(1) - 1.0).abs() < 1e-12);
        assert!((r.lambda_inf - 2.5).abs() < 1e-10);
        assert!((r.phi[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lambda_t_examples() {
        let m = three_state_model();
        let nu = qsd(&m).unwrap().nu;
        // At the QSD the killing rate is constant: (2/3)·4 + (1/3)·1 = 3.
        for &t in &[0.0, 0.3, 1.0, 4.0, 10.0] {
            assert!((lambda_t(&m, &nu, t).unwrap() - 3.0).abs() < 1e-8, "t = {t}");
        }
        let delta1 = Distribution::delta(0, 2);
        assert!((lambda_t(&m, &delta1, 0.0).unwrap() - 4.0).abs() < 1e-12);
        assert!((lambda_t(&m, &delta1, 5.0).unwrap() - 3.0).abs() < 1e-5);
    }

    #[test]
    fn qprocess_of_three_state_model() {
        let m = three_state_model();
        let qp = qprocess_generator(&m).unwrap();
        let expect = Mat::from_rows(&[vec![-3.0, 3.0], vec![4.0, -4.0]]);
        assert!(qp.generator.max_abs_diff(&expect) < 1e-9);
        assert!((qp.stationary.state_mass(1) - 4.0 / 7.0).abs() < 1e-10);
        assert!((qp.stationary.state_mass(2) - 3.0 / 7.0).abs() < 1e-10);
        // Row sums zero, off-diagonals nonnegative.
        for x in 0..2 {
            let s: f64 = qp.generator.row(x).iter().sum();
            assert!(s.abs() < 1e-12);
            for y in 0..2 {
                if x != y {
                    assert!(qp.generator[(x, y)] >= 0.0);
                }
            }
        }
    }

    #[test]
    fn uniform_killing_shifts_the_diagonal_only() {
        // Conservative interior dynamics plus uniform killing rate c: the
        // Doob transform leaves the interior rates untouched.
        let c = 0.8;
        let m = FiniteChainModel::validate(vec![
            vec![0.0, 0.0, 0.0],
            vec![c, -c - 2.0, 2.0],
            vec![c, 5.0, -c - 5.0],
        ])
        .unwrap();
        let qp = qprocess_generator(&m).unwrap();
        let expect = Mat::from_rows(&[vec![-2.0, 2.0], vec![5.0, -5.0]]);
        assert!(qp.generator.max_abs_diff(&expect) < 1e-9);
        let r = qsd(&m).unwrap();
        assert!((r.lambda_inf - c).abs() < 1e-10);
        assert!((r.phi[0] - 1.0).abs() < 1e-9);
        assert!((r.phi[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn qprocess_zero_horizon_is_a_single_segment() {
        let m = three_state_model();
        let qp = qprocess_generator(&m).unwrap();
        let mut rng = seeds::stream(2, &[]);
        let p = simulate_qprocess(&qp, 1, 0.0, &mut rng);
        assert_eq!(p.segments(), &[(0.0, 1)]);
        assert_eq!(p.end_time(), 0.0);
    }

    #[test]
    fn qprocess_occupancy_matches_stationary_law() {
        let m = three_state_model();
        let qp = qprocess_generator(&m).unwrap();
        let reps = 60;
        let horizon = 1_000.0;
        let mut fractions = Vec::with_capacity(reps);
        for r in 0..reps {
            let mut rng = seeds::stream(1009, &[seeds::ROLE_REPLICATE, r as u64]);
            let path = simulate_qprocess(&qp, 2, horizon, &mut rng);
            let occ = path.occupancy(3);
            fractions.push(occ[1] / horizon);
        }
        let mean: f64 = fractions.iter().sum::<f64>() / reps as f64;
        let var: f64 =
            fractions.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        let se = (var / reps as f64).sqrt();
        assert!(
            (mean - 4.0 / 7.0).abs() < 3.0 * se,
            "occupancy {mean}, want 4/7 ± {}",
            3.0 * se
        );
    }

    #[test]
    fn qprocess_marginal_matches_exponential_oracle() {
        // P(state 1 at t = 0.4 | start 2) against e^{0.4 Q∞}.
        let m = three_state_model();
        let qp = qprocess_generator(&m).unwrap();
        let expect = linalg::expm_generator(&qp.generator, 0.4, 1e-13)[(1, 0)];
        let n = 100_000;
        let mut rng = seeds::stream(77, &[]);
        let mut hits = 0;
        for _ in 0..n {
            let path = simulate_qprocess(&qp, 2, 0.4, &mut rng);
            if path.state_at(0.4) == Some(1) {
                hits += 1;
            }
        }
        let freq = hits as f64 / n as f64;
        let se = (expect * (1.0 - expect) / n as f64).sqrt();
        assert!(
            (freq - expect).abs() < 3.0 * se,
            "marginal {freq}, want {expect} ± {}",
            3.0 * se
        );
    }
}
