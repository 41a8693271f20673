//! Model-based ground truth for the learners: exact zero-order-hold
//! discretization, a fixed-point discrete Riccati solver, the sampled-data
//! Q-function kernel, and a batch least-squares Bellman solve.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{expm, rank_from_singular_values};
use crate::error::{Error, Result};
use crate::learner::{kernel_dim, KernelMatrix};

/// Sampled-data counterpart of a continuous LTI pair with first-order stage costs.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteModel {
    pub a_d: DMatrix<f64>,
    pub b_d: DMatrix<f64>,
    pub q_bar: DMatrix<f64>,
    pub r_bar: DMatrix<f64>,
    pub delta: f64,
}

impl DiscreteModel {
    pub fn new(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>, delta: f64) -> Result<Self> {
        let (a_d, b_d) = zoh_discretize(a, b, delta)?;
        let (q_bar, r_bar) = stage_cost(q, r, delta)?;
        Ok(Self {
            a_d,
            b_d,
            q_bar,
            r_bar,
            delta,
        })
    }
}

/// `A_d = e^{Aδ}`, `B_d = ∫₀^δ e^{Aτ} dτ B`, both read off the exponential of
/// the augmented matrix `[[A, B], [0, 0]] δ`.
pub fn zoh_discretize(a: &DMatrix<f64>, b: &DMatrix<f64>, delta: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::Domain(format!("sampling interval must be positive, got {delta}")));
    }
    let n = a.nrows();
    if !a.is_square() || b.nrows() != n {
        return Err(Error::dims("(A, B) pair", format!("{n}x{n} and {n}xm"), format!("{:?}, {:?}", a.shape(), b.shape())));
    }
    let m = b.ncols();
    let mut aug = DMatrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&(a * delta));
    aug.view_mut((0, n), (n, m)).copy_from(&(b * delta));
    let e = expm(&aug)?;
    Ok((e.view((0, 0), (n, n)).into_owned(), e.view((0, n), (n, m)).into_owned()))
}

/// `Q̄ = ½ Q δ`, `R̄ = ½ R δ`.
pub fn stage_cost(q: &DMatrix<f64>, r: &DMatrix<f64>, delta: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if !(delta > 0.0) {
        return Err(Error::Domain(format!("sampling interval must be positive, got {delta}")));
    }
    Ok((q * (0.5 * delta), r * (0.5 * delta)))
}

/// Converged Riccati solution.
#[derive(Debug, Clone, PartialEq)]
pub struct DareSolution {
    pub p: DMatrix<f64>,
    pub iterations: usize,
    /// Frobenius norm of the last fixed-point step.
    pub residual: f64,
    /// Frobenius norms of every step, in order.
    pub steps: Vec<f64>,
}

/// One Riccati map evaluation.
pub fn riccati_map(a_d: &DMatrix<f64>, b_d: &DMatrix<f64>, q_bar: &DMatrix<f64>, r_bar: &DMatrix<f64>, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let atp = a_d.transpose() * p;
    let btp = b_d.transpose() * p;
    let g = r_bar + &btp * b_d;
    let k = g
        .lu()
        .solve(&(&btp * a_d))
        .ok_or_else(|| Error::Numeric("R̄ + BᵀPB is singular".into()))?;
    let next = q_bar + &atp * a_d - (&atp * b_d) * k;
    Ok((&next + next.transpose()) * 0.5)
}

/// Iterates `P ← Q̄ + AᵀPA − AᵀPB (R̄ + BᵀPB)⁻¹ BᵀPA` from `P₀ = Q̄` until the
/// step falls below `tol`.
pub fn solve_dare(
    a_d: &DMatrix<f64>,
    b_d: &DMatrix<f64>,
    q_bar: &DMatrix<f64>,
    r_bar: &DMatrix<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<DareSolution> {
    let mut p = q_bar.clone();
    let mut steps = Vec::new();
    for it in 1..=max_iter {
        let next = riccati_map(a_d, b_d, q_bar, r_bar, &p)?;
        let step = (&next - &p).norm();
        if !step.is_finite() {
            return Err(Error::NoConvergence { iterations: it, residual: step });
        }
        steps.push(step);
        p = next;
        if step < tol {
            return Ok(DareSolution {
                p,
                iterations: it,
                residual: step,
                steps,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: steps.last().copied().unwrap_or(f64::NAN),
    })
}

/// `‖P − Ric(P)‖_F`.
pub fn dare_residual(model: &DiscreteModel, p: &DMatrix<f64>) -> Result<f64> {
    Ok((riccati_map(&model.a_d, &model.b_d, &model.q_bar, &model.r_bar, p)? - p).norm())
}

/// `S* = [[Q̄ + AᵀPA, AᵀPB], [BᵀPA, R̄ + BᵀPB]]`.
pub fn qfun_kernel(p: &DMatrix<f64>, model: &DiscreteModel) -> Result<KernelMatrix> {
    let (n, m) = model.b_d.shape();
    let atp = model.a_d.transpose() * p;
    let btp = model.b_d.transpose() * p;
    let mut s = DMatrix::zeros(n + m, n + m);
    s.view_mut((0, 0), (n, n)).copy_from(&(&model.q_bar + &atp * &model.a_d));
    s.view_mut((0, n), (n, m)).copy_from(&(&atp * &model.b_d));
    s.view_mut((n, 0), (m, n)).copy_from(&(&btp * &model.a_d));
    s.view_mut((n, n), (m, m)).copy_from(&(&model.r_bar + &btp * &model.b_d));
    KernelMatrix::new(s, n)
}

/// Textbook discrete LQR gain `−(R̄ + BᵀPB)⁻¹ BᵀPA` (so that `u = K x`).
pub fn lqr_gain(p: &DMatrix<f64>, model: &DiscreteModel) -> Result<DMatrix<f64>> {
    let btp = model.b_d.transpose() * p;
    let g = &model.r_bar + &btp * &model.b_d;
    g.lu()
        .solve(&(&btp * &model.a_d))
        .map(|k| -k)
        .ok_or_else(|| Error::Numeric("R̄ + BᵀPB is singular".into()))
}

/// Least-squares critic parameters and diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchSolution {
    pub theta: DVector<f64>,
    pub rank: usize,
    pub required: usize,
    /// `‖Z̃ Θ − Φ‖ / ‖Φ‖`.
    pub relative_residual: f64,
    pub singular_values: Vec<f64>,
}

/// Stacks the `(z̃, Φ)` pairs into `(Z̃, Φ)`.
pub fn stack_dataset(dataset: &[(DVector<f64>, f64)]) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let cols = dataset.first().map_or(0, |(z, _)| z.len());
    if cols == 0 {
        return Err(Error::UnderExcited { rank: 0, required: 1 });
    }
    let mut zm = DMatrix::zeros(dataset.len(), cols);
    let mut phi = DVector::zeros(dataset.len());
    for (k, (z, p)) in dataset.iter().enumerate() {
        if z.len() != cols {
            return Err(Error::dims("regressor", cols, z.len()));
        }
        zm.row_mut(k).copy_from(&z.transpose());
        phi[k] = *p;
    }
    Ok((zm, phi))
}

/// `‖Z̃ Θ − Φ‖ / ‖Φ‖` for a given parameter vector.
pub fn relative_bellman_residual(dataset: &[(DVector<f64>, f64)], theta: &DVector<f64>) -> Result<f64> {
    let (zm, phi) = stack_dataset(dataset)?;
    if theta.len() != zm.ncols() {
        return Err(Error::dims("theta vector", zm.ncols(), theta.len()));
    }
    let scale = phi.norm();
    let res = (&zm * theta - &phi).norm();
    Ok(if scale > 0.0 { res / scale } else { res })
}

/// Minimum-norm least-squares `Θ` for `Z̃ Θ = Φ` via SVD, refusing
/// rank-deficient data.
pub fn batch_bellman_solve(dataset: &[(DVector<f64>, f64)]) -> Result<BatchSolution> {
    let (zm, phi) = stack_dataset(dataset)?;
    let required = zm.ncols();
    if kernel_dim(required).is_none() {
        return Err(Error::dims("regressor", "a triangular length d(d+1)/2", required));
    }
    let svd = zm.clone().svd(true, true);
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    let rank = rank_from_singular_values(&sv, zm.nrows().max(zm.ncols()));
    if rank < required {
        return Err(Error::UnderExcited { rank, required });
    }
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let eps = zm.nrows().max(zm.ncols()) as f64 * f64::EPSILON * smax;
    let theta = svd.solve(&phi, eps).map_err(|e| Error::Numeric(e.to_string()))?;
    let scale = phi.norm();
    let res = (&zm * &theta - &phi).norm();
    Ok(BatchSolution {
        theta,
        rank,
        required,
        relative_residual: if scale > 0.0 { res / scale } else { res },
        singular_values: sv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{spectral_abscissa, spectral_radius, step_lti, ProcessModel, StateVector};
    use crate::learner::{bellman_regressor, critic_update, policy_from_kernel, s_to_theta};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn m(r: usize, c: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(r, c, v)
    }

    fn benchmark_discrete() -> DiscreteModel {
        let pm = ProcessModel::benchmark();
        DiscreteModel::new(
            &pm.a_hat,
            &pm.b_hat,
            &(DMatrix::identity(3, 3) * 0.05),
            &m(1, 1, &[0.01]),
            0.01,
        )
        .unwrap()
    }

    #[test]
    fn zoh_zero_dynamics() {
        let b = m(2, 1, &[1.0, 2.0]);
        let (ad, bd) = zoh_discretize(&DMatrix::zeros(2, 2), &b, 0.01).unwrap();
        assert_relative_eq!(ad, DMatrix::identity(2, 2), epsilon = 1e-15);
        assert_relative_eq!(bd, &b * 0.01, epsilon = 1e-15);
    }

    #[test]
    fn zoh_scalar() {
        let (ad, bd) = zoh_discretize(&m(1, 1, &[-1.0]), &m(1, 1, &[1.0]), 0.01).unwrap();
        assert_relative_eq!(ad[(0, 0)], (-0.01f64).exp(), epsilon = 1e-14);
        assert_relative_eq!(bd[(0, 0)], 1.0 - (-0.01f64).exp(), epsilon = 1e-14);
        assert!((ad[(0, 0)] - 0.9900498).abs() < 1e-7);
        assert!((bd[(0, 0)] - 0.0099502).abs() < 1e-7);
    }

    #[test]
    fn zoh_double_integrator_is_exact() {
        let d = 0.01;
        let (ad, bd) = zoh_discretize(&m(2, 2, &[0.0, 1.0, 0.0, 0.0]), &m(2, 1, &[0.0, 1.0]), d).unwrap();
        assert_relative_eq!(ad, m(2, 2, &[1.0, d, 0.0, 1.0]), epsilon = 1e-15);
        assert_relative_eq!(bd, m(2, 1, &[0.5 * d * d, d]), epsilon = 1e-15);
        assert!(zoh_discretize(&ad, &bd, 0.0).is_err());
    }

    #[test]
    fn zoh_matches_fine_rk4() {
        let pm = ProcessModel::benchmark();
        let d = 0.01;
        let (ad, bd) = zoh_discretize(&pm.a, &pm.b, d).unwrap();
        let x0 = DVector::from_vec(vec![0.3, -1.0, 2.0]);
        let u = DVector::from_element(1, 0.7);
        let mut s = StateVector::new(x0.clone(), 0.0);
        for _ in 0..100 {
            s = step_lti(&pm.a, &pm.b, &s, &u, d / 100.0).unwrap();
        }
        assert!((s.x - (&ad * x0 + &bd * u)).amax() < 1e-9);
    }

    #[test]
    fn stage_cost_values() {
        let (qb, rb) = stage_cost(&(DMatrix::identity(3, 3) * 0.05), &m(1, 1, &[0.01]), 0.01).unwrap();
        assert_relative_eq!(qb, DMatrix::identity(3, 3) * 2.5e-4, epsilon = 1e-18);
        assert_relative_eq!(rb[(0, 0)], 5e-5, epsilon = 1e-18);
        let (qb, _) = stage_cost(&DMatrix::identity(3, 3), &m(1, 1, &[1.0]), 1e-300).unwrap();
        assert!(qb.amax() < 1e-299);
    }

    #[test]
    fn dare_trivial_cases() {
        let q = DMatrix::identity(2, 2) * 3.0;
        let r = m(1, 1, &[1.0]);
        let sol = solve_dare(&DMatrix::zeros(2, 2), &m(2, 1, &[1.0, 0.0]), &q, &r, 1e-14, 10).unwrap();
        assert_eq!(sol.p, q);
        assert_eq!(sol.iterations, 1);

        let sol = solve_dare(&m(1, 1, &[0.5]), &m(1, 1, &[0.0]), &m(1, 1, &[1.0]), &r, 1e-14, 1000).unwrap();
        assert_relative_eq!(sol.p[(0, 0)], 4.0 / 3.0, epsilon = 1e-13);
    }

    #[test]
    fn dare_fails_on_unstabilizable_pair() {
        let err = solve_dare(&m(1, 1, &[1.5]), &m(1, 1, &[0.0]), &m(1, 1, &[1.0]), &m(1, 1, &[1.0]), 1e-12, 200);
        assert!(matches!(err, Err(Error::NoConvergence { .. })));
    }

    #[test]
    fn benchmark_oracle_is_consistent() {
        let dm = benchmark_discrete();
        let sol = solve_dare(&dm.a_d, &dm.b_d, &dm.q_bar, &dm.r_bar, 1e-13, 200_000).unwrap();
        let p = &sol.p;
        assert!((p - p.transpose()).amax() < 1e-15);
        assert!(p.clone().cholesky().is_some());
        assert!(dare_residual(&dm, p).unwrap() < 1e-12);

        let kernel = qfun_kernel(p, &dm).unwrap();
        assert!((kernel.matrix() - kernel.matrix().transpose()).amax() <= 1e-12);
        let from_kernel = policy_from_kernel(&kernel, 1e-12).unwrap();
        let textbook = lqr_gain(p, &dm).unwrap();
        assert!((&from_kernel - &textbook).amax() < 1e-10);

        let pm = ProcessModel::benchmark();
        assert!(spectral_abscissa(&(&pm.a_hat + &pm.b_hat * &textbook)).unwrap() < 0.0);
        assert!(spectral_radius(&(&dm.a_d + &dm.b_d * &textbook)).unwrap() < 1.0);

        // Non-increasing steps once the iteration has settled.
        let tail = &sol.steps[sol.steps.len() / 2..];
        assert!(tail.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9)));
    }

    #[test]
    fn zero_cost_to_go_kernel_is_block_diagonal() {
        let dm = benchmark_discrete();
        let k = qfun_kernel(&DMatrix::zeros(3, 3), &dm).unwrap();
        let mut expected = DMatrix::zeros(4, 4);
        expected.view_mut((0, 0), (3, 3)).copy_from(&dm.q_bar);
        expected[(3, 3)] = dm.r_bar[(0, 0)];
        assert_eq!(k.matrix(), &expected);
    }

    fn synthetic(n: usize, seed: u64) -> (DVector<f64>, Vec<(DVector<f64>, f64)>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
        let s = &a * a.transpose();
        let theta = s_to_theta(&s);
        let data = (0..n)
            .map(|_| {
                let zt = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
                let zn = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
                let r = bellman_regressor(&zt, &zn).unwrap();
                let phi = theta.dot(&r);
                (r, phi)
            })
            .collect();
        (theta, data)
    }

    #[test]
    fn batch_recovers_known_kernel() {
        let (theta, data) = synthetic(30, 3);
        let sol = batch_bellman_solve(&data).unwrap();
        assert_eq!(sol.rank, 10);
        assert!((&sol.theta - &theta).amax() < 1e-8);
        assert!(sol.relative_residual < 1e-12);
    }

    #[test]
    fn batch_rejects_single_sample() {
        let (_, data) = synthetic(1, 4);
        assert!(matches!(
            batch_bellman_solve(&data),
            Err(Error::UnderExcited { rank: 1, required: 10 })
        ));
    }

    #[test]
    fn cycled_projection_reaches_batch_solution() {
        let (_, data) = synthetic(30, 5);
        let batch = batch_bellman_solve(&data).unwrap();
        let mut theta = DVector::zeros(10);
        for _ in 0..20_000 {
            for (z, phi) in &data {
                theta = critic_update(&theta, z, *phi, 1.0, 1.8);
            }
        }
        assert!((&theta - &batch.theta).amax() < 1e-4);
    }
}
