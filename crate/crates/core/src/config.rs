//! Run configuration: model, reference, learning parameters and run options.
//!
//! Every section and key is optional; omitted values fall back to the
//! third-order benchmark model and the default learning parameters
//! (`Q = 0.05 I`, `R = 0.01`, `δ = 0.01 s`, `σ = 0.5`, `α = 1.8`).

use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::ProcessModel;
use crate::error::{Error, Result};
use crate::learner::{KernelMatrix, LearnerParams};
use crate::probe::ProbeConfig;
use crate::reference::ReferenceSpec;

/// The three learned strategies, in probe-channel order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    ClosedLoop,
    Observer,
    ModelFollowing,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::ClosedLoop, Strategy::Observer, Strategy::ModelFollowing];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Short tag used in CSV headers and summary keys.
    pub fn tag(self) -> &'static str {
        match self {
            Strategy::ClosedLoop => "cl",
            Strategy::Observer => "ob",
            Strategy::ModelFollowing => "mf",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::ClosedLoop => "closed-loop",
            Strategy::Observer => "observer",
            Strategy::ModelFollowing => "model-following",
        })
    }
}

/// A weighting matrix given either as a scalar multiple of the identity or
/// as explicit rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Weight {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

impl Weight {
    pub fn to_matrix(&self, dim: usize, key: &str) -> Result<DMatrix<f64>> {
        match self {
            Weight::Scalar(v) => Ok(DMatrix::identity(dim, dim) * *v),
            Weight::Matrix(rows) => {
                let m = matrix_from_rows(rows, key)?;
                if m.shape() != (dim, dim) {
                    return Err(Error::config(key, format!("expected a {dim}x{dim} matrix, got {}x{}", m.nrows(), m.ncols())));
                }
                Ok(m)
            }
        }
    }
}

/// Per-strategy overrides of the shared learning parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyConfig {
    pub q: Option<Weight>,
    pub r: Option<Weight>,
    pub sigma_c: Option<f64>,
    pub alpha_c: Option<f64>,
    pub sigma_a: Option<f64>,
    pub alpha_a: Option<f64>,
    /// Row-major `m × dim(F)` starting gain; the initial kernel is built to
    /// be positive definite and consistent with it. Defaults to zero.
    pub initial_gain: Option<Vec<f64>>,
    /// Multiplies the initial kernel (identity for a zero gain).
    pub kernel_scale: f64,
    /// When false the strategy keeps its initial kernel and gain.
    pub adapt: bool,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            q: None,
            r: None,
            sigma_c: None,
            alpha_c: None,
            sigma_a: None,
            alpha_a: None,
            initial_gain: None,
            kernel_scale: 1.0,
            adapt: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningConfig {
    pub q: Weight,
    pub r: Weight,
    /// Learning interval δ in seconds.
    pub delta: f64,
    pub sigma_c: f64,
    pub alpha_c: f64,
    pub sigma_a: f64,
    pub alpha_a: f64,
    /// Minimum `|det S_μμ|` for policy extraction.
    pub eps_sing: f64,
    /// Frobenius tolerance on successive kernels.
    pub tol_conv: f64,
    /// How long, in seconds, kernel steps must stay below `tol_conv` after
    /// the probe has ended before a strategy counts as converged.
    pub settle_time: f64,
    /// Stop adapting a strategy once it has converged.
    pub freeze_on_convergence: bool,
    /// Integration substeps per learning interval.
    pub substeps: usize,
    /// Error samples per stacked feature.
    pub stack_depth: usize,
    pub probe: ProbeConfig,
    pub closed_loop: StrategyConfig,
    pub observer: StrategyConfig,
    pub model_following: StrategyConfig,
}

impl Default for LearningConfig {
    fn default() -> Self {
        Self {
            q: Weight::Scalar(0.05),
            r: Weight::Scalar(0.01),
            delta: 0.01,
            sigma_c: 0.5,
            alpha_c: 1.8,
            sigma_a: 0.5,
            alpha_a: 1.8,
            eps_sing: 1e-8,
            tol_conv: 1e-4,
            settle_time: 1.0,
            freeze_on_convergence: true,
            substeps: 10,
            stack_depth: 3,
            probe: ProbeConfig::default(),
            closed_loop: StrategyConfig::default(),
            observer: StrategyConfig::default(),
            model_following: StrategyConfig::default(),
        }
    }
}

fn check_pace(key: &str, sigma: f64, alpha: f64, alpha_key: &str) -> Result<()> {
    let short = |k: &str| k.rsplit('.').next().unwrap_or(k).to_string();
    if !(sigma > 0.0 && sigma < 2.0) {
        return Err(Error::config(key, format!("got {sigma}; the update only contracts for 0 < {} < 2", short(key))));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::config(alpha_key, format!("got {alpha}; need {} > 0", short(alpha_key))));
    }
    Ok(())
}

fn check_weights(q: &DMatrix<f64>, r: &DMatrix<f64>, prefix: &str) -> Result<()> {
    let sym = |m: &DMatrix<f64>| (m - m.transpose()).amax() <= 1e-12 * m.amax().max(1.0);
    if !sym(q) || !sym(r) {
        return Err(Error::config(format!("{prefix}q/r"), "weights must be symmetric"));
    }
    let q_min = q.clone().symmetric_eigenvalues().min();
    if q_min < -1e-12 {
        return Err(Error::config(format!("{prefix}q"), "must be positive semidefinite"));
    }
    if r.clone().cholesky().is_none() {
        return Err(Error::config(format!("{prefix}r"), "must be positive definite"));
    }
    Ok(())
}

impl LearningConfig {
    pub fn strategy(&self, s: Strategy) -> &StrategyConfig {
        match s {
            Strategy::ClosedLoop => &self.closed_loop,
            Strategy::Observer => &self.observer,
            Strategy::ModelFollowing => &self.model_following,
        }
    }

    pub fn strategy_mut(&mut self, s: Strategy) -> &mut StrategyConfig {
        match s {
            Strategy::ClosedLoop => &mut self.closed_loop,
            Strategy::Observer => &mut self.observer,
            Strategy::ModelFollowing => &mut self.model_following,
        }
    }

    /// Fine integration step `h = δ / substeps`.
    pub fn substep(&self) -> f64 {
        self.delta / self.substeps as f64
    }

    /// Feature length for a strategy given state size `n` and output size `p`.
    pub fn feature_dim(&self, s: Strategy, n: usize, p: usize) -> usize {
        match s {
            Strategy::ClosedLoop => n,
            Strategy::Observer | Strategy::ModelFollowing => self.stack_depth * p,
        }
    }

    /// Resolved parameters for one strategy.
    pub fn learner_params(&self, s: Strategy, f_dim: usize, m: usize) -> Result<LearnerParams> {
        let sc = self.strategy(s);
        let prefix = format!("learning.{}.", strategy_key(s));
        let q = sc.q.as_ref().unwrap_or(&self.q).to_matrix(f_dim, &format!("{prefix}q"))?;
        let r = sc.r.as_ref().unwrap_or(&self.r).to_matrix(m, &format!("{prefix}r"))?;
        check_weights(&q, &r, &prefix)?;
        let params = LearnerParams {
            q,
            r,
            sigma_c: sc.sigma_c.unwrap_or(self.sigma_c),
            alpha_c: sc.alpha_c.unwrap_or(self.alpha_c),
            sigma_a: sc.sigma_a.unwrap_or(self.sigma_a),
            alpha_a: sc.alpha_a.unwrap_or(self.alpha_a),
            eps_sing: self.eps_sing,
            adapt: sc.adapt,
        };
        check_pace(&format!("{prefix}sigma_c"), params.sigma_c, params.alpha_c, &format!("{prefix}alpha_c"))?;
        check_pace(&format!("{prefix}sigma_a"), params.sigma_a, params.alpha_a, &format!("{prefix}alpha_a"))?;
        Ok(params)
    }

    /// Initial kernel for one strategy.
    pub fn initial_kernel(&self, s: Strategy, f_dim: usize, m: usize) -> Result<KernelMatrix> {
        let sc = self.strategy(s);
        let key = format!("learning.{}.initial_gain", strategy_key(s));
        let gain = match &sc.initial_gain {
            None => DMatrix::zeros(m, f_dim),
            Some(v) if v.len() == m * f_dim => DMatrix::from_row_slice(m, f_dim, v),
            Some(v) => return Err(Error::config(key, format!("expected {} entries, got {}", m * f_dim, v.len()))),
        };
        if gain.iter().any(|g| !g.is_finite()) {
            return Err(Error::config(key, "entries must be finite"));
        }
        let scale = sc.kernel_scale;
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::config(format!("learning.{}.kernel_scale", strategy_key(s)), "must be > 0"));
        }
        Ok(KernelMatrix::consistent_with(&gain, scale))
    }

    /// Checks every invariant that does not depend on model dimensions.
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::config("learning.delta", format!("got {}; need delta > 0", self.delta)));
        }
        check_pace("learning.sigma_c", self.sigma_c, self.alpha_c, "learning.alpha_c")?;
        check_pace("learning.sigma_a", self.sigma_a, self.alpha_a, "learning.alpha_a")?;
        if !(self.eps_sing > 0.0) {
            return Err(Error::config("learning.eps_sing", "must be > 0"));
        }
        if !(self.tol_conv > 0.0) {
            return Err(Error::config("learning.tol_conv", "must be > 0"));
        }
        if !(self.settle_time >= 0.0) {
            return Err(Error::config("learning.settle_time", "must be >= 0"));
        }
        if self.substeps == 0 {
            return Err(Error::config("learning.substeps", "must be >= 1"));
        }
        if self.stack_depth == 0 {
            return Err(Error::config("learning.stack_depth", "must be >= 1"));
        }
        self.probe.validate()
    }

    /// Full check against concrete dimensions.
    pub fn validate_for(&self, n: usize, m: usize, p: usize) -> Result<()> {
        self.validate()?;
        for s in Strategy::ALL {
            let f = self.feature_dim(s, n, p);
            self.learner_params(s, f, m)?;
            self.initial_kernel(s, f, m)?;
        }
        Ok(())
    }
}

fn strategy_key(s: Strategy) -> &'static str {
    match s {
        Strategy::ClosedLoop => "closed_loop",
        Strategy::Observer => "observer",
        Strategy::ModelFollowing => "model_following",
    }
}

fn matrix_from_rows(rows: &[Vec<f64>], key: &str) -> Result<DMatrix<f64>> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, Vec::len);
    if nr == 0 || nc == 0 || rows.iter().any(|r| r.len() != nc) {
        return Err(Error::config(key, "matrix rows must be non-empty and of equal length"));
    }
    Ok(DMatrix::from_fn(nr, nc, |i, j| rows[i][j]))
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Plant and desired-model matrices as row lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub a_hat: Vec<Vec<f64>>,
    pub b_hat: Vec<Vec<f64>>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::from_model(&ProcessModel::benchmark())
    }
}

impl ModelConfig {
    pub fn from_model(pm: &ProcessModel) -> Self {
        Self {
            a: rows_of(&pm.a),
            b: rows_of(&pm.b),
            c: rows_of(&pm.c),
            a_hat: rows_of(&pm.a_hat),
            b_hat: rows_of(&pm.b_hat),
        }
    }

    pub fn build(&self) -> Result<ProcessModel> {
        ProcessModel::new(
            matrix_from_rows(&self.a, "model.a")?,
            matrix_from_rows(&self.b, "model.b")?,
            matrix_from_rows(&self.c, "model.c")?,
            matrix_from_rows(&self.a_hat, "model.a_hat")?,
            matrix_from_rows(&self.b_hat, "model.b_hat")?,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunOptions {
    /// Episode length in seconds; zero yields only the initial record.
    pub horizon: f64,
    /// Zero keeps the canonical probe phases; other values randomize them.
    pub seed: u64,
    pub initial_state: Option<Vec<f64>>,
    pub initial_observer_state: Option<Vec<f64>>,
    /// Directory for `trajectory.csv`, `weights.csv` and `summary.json`.
    pub output_dir: Option<String>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            horizon: 20.0,
            seed: 0,
            initial_state: None,
            initial_observer_state: None,
            output_dir: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub reference: ReferenceSpec,
    pub learning: LearningConfig,
    pub run: RunOptions,
}

impl RunConfig {
    /// Builds and validates everything the episode needs.
    pub fn validate(&self) -> Result<ProcessModel> {
        let pm = self.model.build()?;
        self.reference.validate()?;
        if self.reference.dim() != pm.p() {
            return Err(Error::config(
                "reference",
                format!("reference has {} outputs but C selects {}", self.reference.dim(), pm.p()),
            ));
        }
        self.learning.validate_for(pm.n(), pm.m(), pm.p())?;
        let r = &self.run;
        if !(r.horizon >= 0.0 && r.horizon.is_finite()) {
            return Err(Error::config("run.horizon", format!("got {}; need horizon >= 0", r.horizon)));
        }
        for (key, v) in [("run.initial_state", &r.initial_state), ("run.initial_observer_state", &r.initial_observer_state)] {
            if let Some(v) = v {
                if v.len() != pm.n() || v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::config(key, format!("need {} finite entries", pm.n())));
                }
            }
        }
        Ok(pm)
    }

    pub fn initial_states(&self, n: usize) -> (DVector<f64>, DVector<f64>) {
        let pick = |v: &Option<Vec<f64>>| v.as_ref().map_or_else(|| DVector::zeros(n), |v| DVector::from_column_slice(v));
        (pick(&self.run.initial_state), pick(&self.run.initial_observer_state))
    }

    /// Number of learning intervals in the horizon.
    pub fn ticks(&self) -> usize {
        (self.run.horizon / self.learning.delta + 1e-9).floor() as usize
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("config", e.to_string()))
    }
}

/// Parses and validates a TOML run configuration.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}
