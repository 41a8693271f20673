//! Quadratic value kernels, integral Bellman regressors and the normalized
//! projection critic/actor updates.
//!
//! The value of the joint vector `Z = [F; μ]` is `V(Z) = ½ Zᵀ S Z`. The critic
//! stores `S` as the upper-triangular vector `Θ` (row-major, `i <= j`), and the
//! regressor `q(Z)` carries `½ Zᵢ²` on diagonal slots and `Zᵢ Zⱼ` on
//! off-diagonal slots, so `Θᵀ q(Z) = V(Z)` with no extra scaling.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Symmetric value kernel over `Z = [F; μ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    s: DMatrix<f64>,
    f_dim: usize,
}

impl KernelMatrix {
    /// Wraps `s`, checking it is square, at least `f_dim + 1` wide and
    /// symmetric to `1e-10`. The stored matrix is exactly symmetrized.
    pub fn new(s: DMatrix<f64>, f_dim: usize) -> Result<Self> {
        if !s.is_square() || s.nrows() <= f_dim {
            return Err(Error::dims(
                "kernel matrix",
                format!("square with more than {f_dim} rows"),
                format!("{}x{}", s.nrows(), s.ncols()),
            ));
        }
        let asym = (&s - s.transpose()).amax();
        if asym > 1e-10 * s.amax().max(1.0) {
            return Err(Error::Domain(format!("kernel matrix is not symmetric (max |S - Sᵀ| = {asym:e})")));
        }
        Ok(Self::symmetrized(s, f_dim))
    }

    fn symmetrized(s: DMatrix<f64>, f_dim: usize) -> Self {
        let s = (&s + s.transpose()) * 0.5;
        Self { s, f_dim }
    }

    pub fn identity(f_dim: usize, m: usize) -> Self {
        Self {
            s: DMatrix::identity(f_dim + m, f_dim + m),
            f_dim,
        }
    }

    /// Positive definite kernel whose extracted policy is `gain`:
    /// `scale · [[I + πᵀπ, −πᵀ], [−π, I]]`. With a zero gain this is `scale · I`.
    pub fn consistent_with(gain: &DMatrix<f64>, scale: f64) -> Self {
        let (m, f) = gain.shape();
        let mut s = DMatrix::identity(f + m, f + m);
        let ff = DMatrix::identity(f, f) + gain.transpose() * gain;
        s.view_mut((0, 0), (f, f)).copy_from(&ff);
        s.view_mut((f, 0), (m, f)).copy_from(&(-gain));
        s.view_mut((0, f), (f, m)).copy_from(&(-gain.transpose()));
        Self { s: s * scale, f_dim: f }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn dim(&self) -> usize {
        self.s.nrows()
    }

    pub fn f_dim(&self) -> usize {
        self.f_dim
    }

    pub fn m(&self) -> usize {
        self.s.nrows() - self.f_dim
    }

    pub fn s_ff(&self) -> DMatrix<f64> {
        self.s.view((0, 0), (self.f_dim, self.f_dim)).into_owned()
    }

    pub fn s_fu(&self) -> DMatrix<f64> {
        self.s.view((0, self.f_dim), (self.f_dim, self.m())).into_owned()
    }

    pub fn s_uf(&self) -> DMatrix<f64> {
        self.s.view((self.f_dim, 0), (self.m(), self.f_dim)).into_owned()
    }

    pub fn s_uu(&self) -> DMatrix<f64> {
        self.s.view((self.f_dim, self.f_dim), (self.m(), self.m())).into_owned()
    }

    pub fn is_positive_definite(&self) -> bool {
        self.s.clone().cholesky().is_some()
    }

    pub fn to_theta(&self) -> DVector<f64> {
        s_to_theta(&self.s)
    }

    pub fn from_theta(theta: &DVector<f64>, f_dim: usize) -> Result<Self> {
        let s = theta_to_s(theta)?;
        if s.nrows() <= f_dim {
            return Err(Error::dims("theta vector", format!("kernel wider than {f_dim}"), s.nrows()));
        }
        Ok(Self { s, f_dim })
    }
}

/// Length of the upper-triangular parameter vector for a `d × d` kernel.
pub fn theta_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Recovers `d` from `d(d+1)/2`, if the length is triangular.
pub fn kernel_dim(theta_len: usize) -> Option<usize> {
    let d = ((((8 * theta_len + 1) as f64).sqrt() - 1.0) / 2.0).round() as usize;
    (d * (d + 1) / 2 == theta_len).then_some(d)
}

/// Upper-triangular row-major flattening; off-diagonal entries appear once.
pub fn s_to_theta(s: &DMatrix<f64>) -> DVector<f64> {
    let d = s.nrows();
    let mut theta = DVector::zeros(theta_len(d));
    let mut k = 0;
    for i in 0..d {
        for j in i..d {
            theta[k] = s[(i, j)];
            k += 1;
        }
    }
    theta
}

/// Inverse of [`s_to_theta`]; the result is symmetric by construction.
pub fn theta_to_s(theta: &DVector<f64>) -> Result<DMatrix<f64>> {
    let d = kernel_dim(theta.len())
        .ok_or_else(|| Error::dims("theta vector", "a triangular number d(d+1)/2", theta.len()))?;
    let mut s = DMatrix::zeros(d, d);
    let mut k = 0;
    for i in 0..d {
        for j in i..d {
            s[(i, j)] = theta[k];
            s[(j, i)] = theta[k];
            k += 1;
        }
    }
    Ok(s)
}

/// Quadratic monomials of `z` matching the `Θ` layout.
pub fn quadratic_features(z: &DVector<f64>) -> DVector<f64> {
    let d = z.len();
    let mut q = DVector::zeros(theta_len(d));
    let mut k = 0;
    for i in 0..d {
        for j in i..d {
            q[k] = if i == j { 0.5 * z[i] * z[i] } else { z[i] * z[j] };
            k += 1;
        }
    }
    q
}

/// Stage cost `½(Fᵀ Q F + μᵀ R μ)`.
pub fn utility(f: &DVector<f64>, mu: &DVector<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> f64 {
    0.5 * (f.dot(&(q * f)) + mu.dot(&(r * mu)))
}

/// Composite trapezoidal integral of `(t, U)` samples.
pub fn integrate_utility(samples: &[(f64, f64)]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::dims("utility samples", "at least 2", samples.len()));
    }
    let mut acc = 0.0;
    for (k, w) in samples.windows(2).enumerate() {
        let (t0, u0) = w[0];
        let (t1, u1) = w[1];
        if !(t1 > t0) {
            return Err(Error::UnorderedSamples { index: k + 1 });
        }
        acc += 0.5 * (t1 - t0) * (u0 + u1);
    }
    Ok(acc)
}

/// Trapezoid over uniformly spaced samples with step `h`.
pub(crate) fn trapezoid_uniform(values: &[f64], h: f64) -> f64 {
    match values {
        [] | [_] => 0.0,
        [first, inner @ .., last] => h * (0.5 * (first + last) + inner.iter().sum::<f64>()),
    }
}

/// `V(Z) = ½ Zᵀ S Z`.
pub fn quadratic_value(s: &KernelMatrix, z: &DVector<f64>) -> Result<f64> {
    if z.len() != s.dim() {
        return Err(Error::dims("joint vector Z", s.dim(), z.len()));
    }
    Ok(0.5 * z.dot(&(s.matrix() * z)))
}

/// `z̃ = q(Z_t) − q(Z_next)`, so that `Θᵀ z̃ = V(Z_t) − V(Z_next)`.
pub fn bellman_regressor(z_t: &DVector<f64>, z_next: &DVector<f64>) -> Result<DVector<f64>> {
    if z_t.len() != z_next.len() {
        return Err(Error::dims("Bellman pair", z_t.len(), z_next.len()));
    }
    Ok(quadratic_features(z_t) - quadratic_features(z_next))
}

/// Greedy policy `−S_μμ⁻¹ S_μF`, guarded by `|det S_μμ| >= eps_sing`.
pub fn policy_from_kernel(s: &KernelMatrix, eps_sing: f64) -> Result<DMatrix<f64>> {
    let s_uu = s.s_uu();
    let det = s_uu.determinant();
    if !(det.abs() >= eps_sing) {
        return Err(Error::SingularKernel { det, eps: eps_sing });
    }
    let lu = s_uu.lu();
    let sol = lu
        .solve(&s.s_uf())
        .ok_or(Error::SingularKernel { det, eps: eps_sing })?;
    Ok(-sol)
}

/// Normalized projection step for the critic:
/// `Θ⁺ = Θ − σ z̃ (Θᵀz̃ − Φ) / (α + z̃ᵀz̃)`.
pub fn critic_update(theta: &DVector<f64>, z_tilde: &DVector<f64>, phi: f64, sigma_c: f64, alpha_c: f64) -> DVector<f64> {
    let residual = theta.dot(z_tilde) - phi;
    let gain = sigma_c * residual / (alpha_c + z_tilde.norm_squared());
    theta - z_tilde * gain
}

/// Normalized projection step for the actor:
/// `π⁺ = π − σ (πF − φ) Fᵀ / (α + FᵀF)`.
pub fn actor_update(
    pi: &DMatrix<f64>,
    f: &DVector<f64>,
    phi_target: &DVector<f64>,
    sigma_a: f64,
    alpha_a: f64,
) -> DMatrix<f64> {
    let residual = pi * f - phi_target;
    let scale = sigma_a / (alpha_a + f.norm_squared());
    pi - residual * f.transpose() * scale
}

pub fn kernel_converged(s_prev: &KernelMatrix, s_next: &KernelMatrix, tol_conv: f64) -> bool {
    (s_prev.matrix() - s_next.matrix()).norm() < tol_conv
}

/// Paces, weights and guards for one strategy's learner.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerParams {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub sigma_c: f64,
    pub alpha_c: f64,
    pub sigma_a: f64,
    pub alpha_a: f64,
    pub eps_sing: f64,
    /// When false the kernel and gain stay at their initial values.
    pub adapt: bool,
}

/// What happened during one learning cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleReport {
    /// Integral Bellman residual `Θᵀz̃ − Φ` before the critic step.
    pub residual: f64,
    /// `‖S⁺ − S‖_F`.
    pub kernel_step: f64,
    /// Set when `S_μμ` was too close to singular to extract a policy.
    pub singular: bool,
}

/// Critic/actor pair for one strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct Learner {
    params: LearnerParams,
    kernel: KernelMatrix,
    theta: DVector<f64>,
    pi: DMatrix<f64>,
}

impl Learner {
    /// Starts from `kernel`, with the actor set to the kernel's greedy policy.
    pub fn new(params: LearnerParams, kernel: KernelMatrix) -> Result<Self> {
        let (f, m) = (kernel.f_dim(), kernel.m());
        if params.q.shape() != (f, f) {
            return Err(Error::dims("feature weight Q", format!("{f}x{f}"), format!("{:?}", params.q.shape())));
        }
        if params.r.shape() != (m, m) {
            return Err(Error::dims("effort weight R", format!("{m}x{m}"), format!("{:?}", params.r.shape())));
        }
        let pi = policy_from_kernel(&kernel, params.eps_sing)?;
        let theta = kernel.to_theta();
        Ok(Self { params, kernel, theta, pi })
    }

    pub fn params(&self) -> &LearnerParams {
        &self.params
    }

    pub fn kernel(&self) -> &KernelMatrix {
        &self.kernel
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn gain(&self) -> &DMatrix<f64> {
        &self.pi
    }

    pub fn f_dim(&self) -> usize {
        self.kernel.f_dim()
    }

    pub fn m(&self) -> usize {
        self.kernel.m()
    }

    pub fn set_adapt(&mut self, adapt: bool) {
        self.params.adapt = adapt;
    }

    /// `μ = π F`.
    pub fn act(&self, f: &DVector<f64>) -> DVector<f64> {
        &self.pi * f
    }

    pub fn utility(&self, f: &DVector<f64>, mu: &DVector<f64>) -> f64 {
        utility(f, mu, &self.params.q, &self.params.r)
    }

    /// Joint vector `[F; μ]`.
    pub fn joint(f: &DVector<f64>, mu: &DVector<f64>) -> DVector<f64> {
        let mut z = DVector::zeros(f.len() + mu.len());
        z.rows_mut(0, f.len()).copy_from(f);
        z.rows_mut(f.len(), mu.len()).copy_from(mu);
        z
    }

    /// Regressor for the window `[t, t+δ]`: `Z_t = [F_t; μ_t]` with the
    /// applied increment, `Z_next = [F_{t+δ}; π F_{t+δ}]` under the current actor.
    pub fn regressor(&self, f_t: &DVector<f64>, mu_t: &DVector<f64>, f_next: &DVector<f64>) -> Result<DVector<f64>> {
        if f_t.len() != self.f_dim() || f_next.len() != self.f_dim() {
            return Err(Error::dims("feature vector", self.f_dim(), f_t.len().max(f_next.len())));
        }
        if mu_t.len() != self.m() {
            return Err(Error::dims("control increment", self.m(), mu_t.len()));
        }
        let z_t = Self::joint(f_t, mu_t);
        let z_next = Self::joint(f_next, &self.act(f_next));
        bellman_regressor(&z_t, &z_next)
    }

    /// One cycle: critic step on `(z̃, Φ)`, symmetrized kernel rebuild, then an
    /// actor step towards the greedy target at `f_next`.
    pub fn cycle(&mut self, z_tilde: &DVector<f64>, phi: f64, f_next: &DVector<f64>) -> Result<CycleReport> {
        let residual = self.theta.dot(z_tilde) - phi;
        if !self.params.adapt {
            return Ok(CycleReport {
                residual,
                kernel_step: 0.0,
                singular: false,
            });
        }
        let p = &self.params;
        let theta = critic_update(&self.theta, z_tilde, phi, p.sigma_c, p.alpha_c);
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("critic weights became non-finite".into()));
        }
        let kernel = KernelMatrix::from_theta(&theta, self.f_dim())?;
        let kernel_step = (kernel.matrix() - self.kernel.matrix()).norm();
        self.kernel = kernel;
        self.theta = theta;

        let singular = match policy_from_kernel(&self.kernel, p.eps_sing) {
            Ok(target_gain) => {
                let target = &target_gain * f_next;
                self.pi = actor_update(&self.pi, f_next, &target, p.sigma_a, p.alpha_a);
                false
            }
            Err(Error::SingularKernel { .. }) => true,
            Err(e) => return Err(e),
        };
        Ok(CycleReport {
            residual,
            kernel_step,
            singular,
        })
    }
}
