//! Continuous-time LTI plant and desired/observed model, fixed-step RK4
//! propagation, and the small amount of dense linear algebra the rest of
//! the crate leans on (spectra, matrix exponential, rank tests).

#![allow(non_snake_case)]

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

/// The process `(A, B, C)` together with the desired or approximated
/// dynamics `(A_hat, B_hat)` that share the output map `C`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub a_hat: DMatrix<f64>,
    pub b_hat: DMatrix<f64>,
}

impl ProcessModel {
    /// Builds a model after checking dimensions, observability of
    /// `(A_hat, C)` and stabilizability of `(A_hat, B_hat)`.
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        a_hat: DMatrix<f64>,
        b_hat: DMatrix<f64>,
    ) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || !a.is_square() {
            return Err(Error::dims("A", "non-empty square", format!("{}x{}", a.nrows(), a.ncols())));
        }
        let m = b.ncols();
        if b.nrows() != n || m == 0 {
            return Err(Error::dims("B", format!("{n}xm"), format!("{}x{}", b.nrows(), b.ncols())));
        }
        if c.ncols() != n || c.nrows() == 0 {
            return Err(Error::dims("C", format!("px{n}"), format!("{}x{}", c.nrows(), c.ncols())));
        }
        if a_hat.shape() != (n, n) {
            return Err(Error::dims("A_hat", format!("{n}x{n}"), format!("{:?}", a_hat.shape())));
        }
        if b_hat.shape() != (n, m) {
            return Err(Error::dims("B_hat", format!("{n}x{m}"), format!("{:?}", b_hat.shape())));
        }
        for (name, mat) in [("A", &a), ("B", &b), ("C", &c), ("A_hat", &a_hat), ("B_hat", &b_hat)] {
            if mat.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!("matrix {name} has non-finite entries")));
            }
        }

        let rank = observability_rank(&a_hat, &c);
        if rank < n {
            return Err(Error::NotObservable { rank, n });
        }
        if let Some(mode) = uncontrollable_unstable_mode(&a_hat, &b_hat)? {
            return Err(Error::NotStabilizable {
                mode: format!("{:.6}{:+.6}i", mode.re, mode.im),
            });
        }

        Ok(Self { a, b, c, a_hat, b_hat })
    }

    /// Third-order benchmark process and its identified approximation.
    pub fn benchmark() -> Self {
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, -5.0, 10.0, 0.0, -1.0, -5.0]);
        let b = DMatrix::from_row_slice(3, 1, &[0.0, 0.0, 1.0]);
        let c = DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 0.0]);
        let a_hat = DMatrix::from_row_slice(
            3,
            3,
            &[
                0.0132, 1.0085, -0.0055, //
                0.0132, -5.0286, 9.9132, //
                -0.0526, -1.0155, -4.9374,
            ],
        );
        let b_hat = DMatrix::from_row_slice(3, 1, &[-0.0072, -0.0547, 1.0527]);
        Self::new(a, b, c, a_hat, b_hat).expect("benchmark model is valid")
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn p(&self) -> usize {
        self.c.nrows()
    }
}

/// Plant or model state at a point in time.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub x: DVector<f64>,
    pub t: f64,
}

impl StateVector {
    pub fn new(x: DVector<f64>, t: f64) -> Self {
        Self { x, t }
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(DVector::zeros(n), 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().all(|v| v.is_finite())
    }
}

/// One classical RK4 step of `x' = A x + B u` with `u` held over `[t, t + h]`.
pub fn step_lti(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    state: &StateVector,
    u: &DVector<f64>,
    h: f64,
) -> Result<StateVector> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Domain(format!("integration step must be positive, got {h}")));
    }
    if u.len() != b.ncols() {
        return Err(Error::dims("input u", b.ncols(), u.len()));
    }
    if state.x.len() != a.nrows() {
        return Err(Error::dims("state x", a.nrows(), state.x.len()));
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::IntegrationDiverged { t: state.t });
    }

    let forcing = b * u;
    let f = |x: &DVector<f64>| a * x + &forcing;
    let x = &state.x;
    let k1 = f(x);
    let k2 = f(&(x + &k1 * (h / 2.0)));
    let k3 = f(&(x + &k2 * (h / 2.0)));
    let k4 = f(&(x + &k3 * h));
    let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);

    let t = state.t + h;
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::IntegrationDiverged { t });
    }
    Ok(StateVector::new(next, t))
}

/// `Y = C x`.
pub fn output(c: &DMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
    c * x
}

/// Eigenvalues sorted by real part, then imaginary part. Complex pairs are
/// made exactly conjugate.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    if !m.is_square() {
        return Err(Error::dims("eigenvalues", "square matrix", format!("{:?}", m.shape())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("matrix has non-finite entries".into()));
    }
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numeric("Schur iteration did not converge".into()))?;
    let mut eig: Vec<Complex<f64>> = schur.complex_eigenvalues().iter().copied().collect();

    // pair up conjugates and symmetrize them
    let scale = m.norm().max(1.0);
    let tol = 1e-9 * scale;
    let mut used = vec![false; eig.len()];
    for i in 0..eig.len() {
        if used[i] || eig[i].im <= tol {
            continue;
        }
        let partner = (0..eig.len())
            .filter(|&j| j != i && !used[j] && eig[j].im < -tol)
            .min_by(|&j, &k| {
                let dj = (eig[j] - eig[i].conj()).norm();
                let dk = (eig[k] - eig[i].conj()).norm();
                dj.total_cmp(&dk)
            });
        if let Some(j) = partner {
            let re = 0.5 * (eig[i].re + eig[j].re);
            let im = 0.5 * (eig[i].im - eig[j].im);
            eig[i] = Complex::new(re, im);
            eig[j] = Complex::new(re, -im);
            used[i] = true;
            used[j] = true;
        }
    }
    for z in eig.iter_mut() {
        if z.im.abs() <= tol {
            z.im = 0.0;
        }
    }
    eig.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    Ok(eig)
}

/// Largest real part of the spectrum.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> Result<f64> {
    Ok(eigenvalues(m)?
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    Ok(eigenvalues(m)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Matrix exponential by scaling and squaring with a diagonal [6/6] Padé
/// approximant.
pub fn expm(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::dims("expm", "square matrix", format!("{:?}", m.shape())));
    }
    let n = m.nrows();
    let norm1 = (0..n)
        .map(|j| m.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    if !norm1.is_finite() {
        return Err(Error::Numeric("expm of non-finite matrix".into()));
    }
    // scale until ||M / 2^s||_1 <= 1/2
    let squarings = if norm1 > 0.5 {
        (norm1 / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scaled = m * 2f64.powi(-squarings);

    const Q: usize = 6;
    let id = DMatrix::<f64>::identity(n, n);
    let mut c = 0.5;
    let mut x = scaled.clone();
    let mut num = &id + &scaled * c;
    let mut den = &id - &scaled * c;
    for k in 2..=Q {
        c *= (Q - k + 1) as f64 / (k * (2 * Q - k + 1)) as f64;
        x = &scaled * &x;
        num += &x * c;
        if k % 2 == 0 {
            den += &x * c;
        } else {
            den -= &x * c;
        }
    }
    let mut e = den
        .lu()
        .solve(&num)
        .ok_or_else(|| Error::Numeric("Padé denominator is singular".into()))?;
    for _ in 0..squarings {
        e = &e * &e;
    }
    Ok(e)
}

/// Numerical rank from singular values with the usual `max(r, c) * eps * s_max` cut-off.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    rank_from_singular_values(sv.as_slice(), m.nrows().max(m.ncols()))
}

pub(crate) fn rank_from_singular_values(sv: &[f64], dim: usize) -> usize {
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    let tol = dim as f64 * f64::EPSILON * smax;
    sv.iter().filter(|&&s| s > tol).count()
}

/// Rank of `[C; C A; ...; C A^(n-1)]`.
pub fn observability_rank(a: &DMatrix<f64>, c: &DMatrix<f64>) -> usize {
    let n = a.nrows();
    let p = c.nrows();
    let mut obs = DMatrix::<f64>::zeros(n * p, n);
    let mut block = c.clone();
    for k in 0..n {
        obs.view_mut((k * p, 0), (p, n)).copy_from(&block);
        block = &block * a;
    }
    numerical_rank(&obs)
}

pub fn is_observable(a: &DMatrix<f64>, c: &DMatrix<f64>) -> bool {
    observability_rank(a, c) == a.nrows()
}

/// PBH test on every mode with non-negative real part.
pub fn is_stabilizable(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<bool> {
    Ok(uncontrollable_unstable_mode(a, b)?.is_none())
}

fn uncontrollable_unstable_mode(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Option<Complex<f64>>> {
    let n = a.nrows();
    let m = b.ncols();
    for lambda in eigenvalues(a)? {
        if lambda.re < 0.0 {
            continue;
        }
        let pbh = DMatrix::<Complex<f64>>::from_fn(n, n + m, |i, j| {
            if j < n {
                let diag = if i == j { lambda } else { Complex::new(0.0, 0.0) };
                diag - Complex::new(a[(i, j)], 0.0)
            } else {
                Complex::new(b[(i, j - n)], 0.0)
            }
        });
        let sv = pbh.svd(false, false).singular_values;
        if rank_from_singular_values(sv.as_slice(), n + m) < n {
            return Ok(Some(lambda));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn benchmark_a() -> DMatrix<f64> {
        ProcessModel::benchmark().a
    }

    #[test]
    fn pure_integrator_step_is_exact() {
        let a = DMatrix::zeros(3, 3);
        let b = DMatrix::identity(3, 3);
        let u = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let next = step_lti(&a, &b, &StateVector::zeros(3), &u, 0.01).unwrap();
        assert_relative_eq!(next.x, DVector::from_vec(vec![0.01, 0.02, 0.03]), epsilon = 1e-15);
        assert_relative_eq!(next.t, 0.01);
    }

    #[test]
    fn scalar_decay_matches_closed_form() {
        let a = DMatrix::from_element(1, 1, -1.0);
        let b = DMatrix::zeros(1, 1);
        let s = StateVector::new(DVector::from_element(1, 1.0), 0.0);
        let next = step_lti(&a, &b, &s, &DVector::zeros(1), 0.01).unwrap();
        assert!((next.x[0] - (-0.01f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn rk4_matches_matrix_exponential_on_benchmark() {
        let a = benchmark_a();
        let b = ProcessModel::benchmark().b;
        let x0 = StateVector::new(DVector::from_vec(vec![0.0, 1.0, 0.0]), 0.0);
        let h = 0.001;
        let next = step_lti(&a, &b, &x0, &DVector::zeros(1), h).unwrap();
        let exact = expm(&(&a * h)).unwrap() * &x0.x;
        assert!((next.x - exact).norm() < 1e-10);
    }

    #[test]
    fn rk4_is_fourth_order() {
        let model = ProcessModel::benchmark();
        let x0 = StateVector::new(DVector::from_vec(vec![0.3, 1.0, -0.5]), 0.0);
        let u = DVector::zeros(1);
        let err = |h: f64| {
            let next = step_lti(&model.a, &model.b, &x0, &u, h).unwrap();
            (next.x - expm(&(&model.a * h)).unwrap() * &x0.x).norm()
        };
        for h in [1e-2, 5e-3, 2e-3] {
            let ratio = err(h) / err(h / 2.0);
            // local error is O(h^5); demand at least 16 * 0.9
            assert!(ratio >= 16.0 * 0.9, "h = {h}: ratio {ratio}");
        }
    }

    #[test]
    fn step_rejects_bad_inputs() {
        let a = benchmark_a();
        let b = ProcessModel::benchmark().b;
        let s = StateVector::zeros(3);
        assert!(matches!(
            step_lti(&a, &b, &s, &DVector::zeros(1), 0.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            step_lti(&a, &b, &s, &DVector::zeros(2), 0.01),
            Err(Error::DimensionMismatch { .. })
        ));
        let blown = StateVector::new(DVector::from_vec(vec![f64::MAX, 0.0, 0.0]), 3.5);
        let big = DMatrix::from_element(3, 3, 1e300);
        match step_lti(&big, &b, &blown, &DVector::zeros(1), 0.01) {
            Err(Error::IntegrationDiverged { t }) => assert!((t - 3.51).abs() < 1e-12),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn output_selects_rows() {
        let c = DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 0.0]);
        let x = DVector::from_vec(vec![7.0, -2.0, 5.0]);
        assert_eq!(output(&c, &x)[0], -2.0);
        let id = DMatrix::identity(3, 3);
        assert_eq!(output(&id, &x), x);
        let benchmark = ProcessModel::benchmark();
        assert_eq!(output(&benchmark.c, &DVector::from_vec(vec![0.0, 1.0, 0.0]))[0], 1.0);
    }

    #[test]
    fn benchmark_spectrum() {
        let eig = eigenvalues(&benchmark_a()).unwrap();
        let expected = [(-5.0, -3.1623), (-5.0, 3.1623), (0.0, 0.0)];
        for (z, (re, im)) in eig.iter().zip(expected) {
            assert!((z.re - re).abs() < 1e-3 && (z.im - im).abs() < 1e-3, "{z}");
        }
        // conjugate pair is exact
        assert_eq!(eig[0].re, eig[1].re);
        assert_eq!(eig[0].im, -eig[1].im);
    }

    #[test]
    fn identity_spectrum() {
        let eig = eigenvalues(&DMatrix::identity(3, 3)).unwrap();
        assert!(eig.iter().all(|z| (z.re - 1.0).abs() < 1e-14 && z.im == 0.0));
    }

    #[test]
    fn expm_known_cases() {
        let nil = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let e = expm(&(&nil * 0.25)).unwrap();
        assert_relative_eq!(e, DMatrix::from_row_slice(2, 2, &[1.0, 0.25, 0.0, 1.0]), epsilon = 1e-15);

        let rot = DMatrix::from_row_slice(2, 2, &[0.0, -3.0, 3.0, 0.0]);
        let e = expm(&rot).unwrap();
        let (s, c) = 3f64.sin_cos();
        assert_relative_eq!(e, DMatrix::from_row_slice(2, 2, &[c, -s, s, c]), epsilon = 1e-13);

        let diag = DMatrix::from_diagonal(&DVector::from_vec(vec![-20.0, 0.5]));
        let e = expm(&diag).unwrap();
        assert_relative_eq!(e[(0, 0)], (-20f64).exp(), max_relative = 1e-10);
        assert_relative_eq!(e[(1, 1)], 0.5f64.exp(), max_relative = 1e-13);
    }

    #[test]
    fn observability_and_stabilizability() {
        let m = ProcessModel::benchmark();
        assert!(is_observable(&m.a_hat, &m.c));
        assert!(!is_observable(&m.a_hat, &DMatrix::zeros(1, 3)));
        assert!(is_stabilizable(&m.a_hat, &m.b_hat).unwrap());
        // the exact plant's integrator state never reaches the output
        assert!(!is_observable(&m.a, &m.c));

        let unstable = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        assert!(!is_stabilizable(&unstable, &b).unwrap());
    }

    #[test]
    fn model_construction_checks() {
        let m = ProcessModel::benchmark();
        let err = ProcessModel::new(
            m.a.clone(),
            m.b.clone(),
            DMatrix::zeros(1, 3),
            m.a_hat.clone(),
            m.b_hat.clone(),
        );
        assert!(matches!(err, Err(Error::NotObservable { .. })));

        let err = ProcessModel::new(
            m.a.clone(),
            DMatrix::zeros(2, 1),
            m.c.clone(),
            m.a_hat.clone(),
            m.b_hat.clone(),
        );
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));

        let err = ProcessModel::new(
            m.a.clone(),
            m.b.clone(),
            DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]),
            DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0, -2.0]),
            DMatrix::from_row_slice(3, 1, &[0.0, 0.0, 1.0]),
        );
        assert!(matches!(err, Err(Error::NotStabilizable { .. })), "{err:?}");
    }
}
