//! Serialization of episode logs (trajectory and weight CSVs, JSON summary)
//! and the oracle cross-check report.
//!
//! Every number is written as `{:.16e}`, i.e. 17 significant digits, which
//! round-trips `f64` exactly.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, Strategy};
use crate::control_loop::EpisodeLog;
use crate::dynamics::{eigenvalues, numerical_rank, spectral_abscissa, spectral_radius, ProcessModel};
use crate::error::Result;
use crate::learner::{policy_from_kernel, KernelMatrix};
use crate::oracle::{
    batch_bellman_solve, dare_residual, lqr_gain, qfun_kernel, relative_bellman_residual, solve_dare, stack_dataset,
    DiscreteModel,
};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const WEIGHTS_FILE: &str = "weights.csv";
pub const SUMMARY_FILE: &str = "summary.json";

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn names(base: &str, len: usize, always_index: bool) -> Vec<String> {
    if len == 1 && !always_index {
        vec![base.to_string()]
    } else {
        (1..=len).map(|i| format!("{base}{i}")).collect()
    }
}

/// Header for the trajectory CSV. Vector signals of length one keep their
/// bare name (`y`, `u_total`, ...); states are always indexed.
pub fn trajectory_header(n: usize, p: usize, m: usize) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend(names("x", n, true));
    cols.extend(names("xhat", n, true));
    for base in ["y", "yhat", "yref", "e_ob", "e_mf"] {
        cols.extend(names(base, p, false));
    }
    for base in ["u_total", "mu_cl", "u_ob", "u_mf"] {
        cols.extend(names(base, m, false));
    }
    cols.join(",")
}

fn push_all(out: &mut Vec<String>, v: &DVector<f64>) {
    out.extend(v.iter().map(|x| num(*x)));
}

pub fn write_trajectory_csv<W: Write>(log: &EpisodeLog, mut w: W) -> Result<()> {
    let Some(first) = log.rows.first() else {
        return Ok(());
    };
    writeln!(w, "{}", trajectory_header(first.x.len(), first.y.len(), first.u_total.len()))?;
    for r in &log.rows {
        let mut cells = vec![num(r.t)];
        for v in [&r.x, &r.xhat, &r.y, &r.yhat, &r.yref, &r.e_ob, &r.e_mf, &r.u_total, &r.mu_cl, &r.u_ob, &r.u_mf] {
            push_all(&mut cells, v);
        }
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Header for the weights CSV: `t`, then `theta_<tag>_<k>` and
/// `pi_<tag>_<k>` (row-major) for each strategy.
pub fn weights_header(log: &EpisodeLog) -> String {
    let mut cols = vec!["t".to_string()];
    if let Some(w) = log.weights.first() {
        for s in Strategy::ALL {
            let i = s.index();
            cols.extend((0..w.theta[i].len()).map(|k| format!("theta_{}_{k}", s.tag())));
            cols.extend((0..w.gain[i].len()).map(|k| format!("pi_{}_{k}", s.tag())));
        }
    }
    cols.join(",")
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().iter().copied().collect()
}

pub fn write_weights_csv<W: Write>(log: &EpisodeLog, mut w: W) -> Result<()> {
    writeln!(w, "{}", weights_header(log))?;
    for row in &log.weights {
        let mut cells = vec![num(row.t)];
        for s in Strategy::ALL {
            push_all(&mut cells, &row.theta[s.index()]);
            cells.extend(row_major(&row.gain[s.index()]).into_iter().map(num));
        }
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

/// `[re, im]` pairs.
pub type Spectrum = Vec<[f64; 2]>;

fn spectrum(m: &DMatrix<f64>) -> Result<Spectrum> {
    Ok(eigenvalues(m)?.iter().map(|z: &Complex<f64>| [z.re, z.im]).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumPair {
    /// Spectrum involving the true plant `(A, B)`.
    pub plant: Spectrum,
    /// Spectrum involving the desired model `(Â, B̂)`.
    pub desired: Spectrum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerStrategy<T> {
    pub closed_loop: T,
    pub observer: T,
    pub model_following: T,
}

impl<T> PerStrategy<T> {
    pub fn from_fn(mut f: impl FnMut(Strategy) -> T) -> Self {
        Self {
            closed_loop: f(Strategy::ClosedLoop),
            observer: f(Strategy::Observer),
            model_following: f(Strategy::ModelFollowing),
        }
    }
}

/// Summary document written next to the CSVs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub open_loop_eigenvalues: SpectrumPair,
    /// Spectra of `A + B π_cl` and `Â + B̂ π_cl` for the final gain.
    pub closed_loop_eigenvalues: SpectrumPair,
    pub closed_loop_stable: bool,
    pub pi_cl: Vec<f64>,
    pub pi_ob: Vec<f64>,
    pub pi_mf: Vec<f64>,
    /// `|e_mf|` on the last record.
    pub terminal_e_mf: f64,
    pub terminal_e_ob: f64,
    /// Largest `|e_mf|`, `|e_ob|` over the final two seconds.
    pub max_abs_e_mf_final_2s: f64,
    pub max_abs_e_ob_final_2s: f64,
    pub convergence_time_s: PerStrategy<Option<f64>>,
    /// Frobenius norms of the final kernels.
    pub kernel_norms: PerStrategy<f64>,
    pub singular_events: PerStrategy<usize>,
    pub final_time_s: f64,
    pub aborted: Option<String>,
}

pub fn build_summary(model: &ProcessModel, log: &EpisodeLog) -> Result<Summary> {
    let pi_cl = log.final_gain(Strategy::ClosedLoop);
    let closed_plant = &model.a + &model.b * pi_cl;
    let closed_desired = &model.a_hat + &model.b_hat * pi_cl;
    let last = log.rows.last().expect("log always holds the initial record");
    let t_end = last.t;
    let window = |pick: fn(&crate::control_loop::TrajectoryRow) -> &DVector<f64>| {
        log.max_abs_over((t_end - 2.0).max(0.0), t_end, pick).unwrap_or(0.0)
    };
    Ok(Summary {
        open_loop_eigenvalues: SpectrumPair {
            plant: spectrum(&model.a)?,
            desired: spectrum(&model.a_hat)?,
        },
        closed_loop_eigenvalues: SpectrumPair {
            plant: spectrum(&closed_plant)?,
            desired: spectrum(&closed_desired)?,
        },
        closed_loop_stable: spectral_abscissa(&closed_plant)? < 0.0,
        pi_cl: row_major(pi_cl),
        pi_ob: row_major(log.final_gain(Strategy::Observer)),
        pi_mf: row_major(log.final_gain(Strategy::ModelFollowing)),
        terminal_e_mf: last.e_mf.amax(),
        terminal_e_ob: last.e_ob.amax(),
        max_abs_e_mf_final_2s: window(|r| &r.e_mf),
        max_abs_e_ob_final_2s: window(|r| &r.e_ob),
        convergence_time_s: PerStrategy::from_fn(|s| log.trace(s).converged_at),
        kernel_norms: PerStrategy::from_fn(|s| log.final_kernel(s).matrix().norm()),
        singular_events: PerStrategy::from_fn(|s| log.trace(s).singular_events),
        final_time_s: t_end,
        aborted: log.aborted.clone(),
    })
}

/// Paths of the files written by [`write_artifacts`].
#[derive(Debug, Clone, PartialEq)]
pub struct ArtifactPaths {
    pub trajectory: PathBuf,
    pub weights: PathBuf,
    pub summary: PathBuf,
}

pub fn write_artifacts(dir: &Path, log: &EpisodeLog, summary: &Summary) -> Result<ArtifactPaths> {
    fs::create_dir_all(dir)?;
    let paths = ArtifactPaths {
        trajectory: dir.join(TRAJECTORY_FILE),
        weights: dir.join(WEIGHTS_FILE),
        summary: dir.join(SUMMARY_FILE),
    };
    write_trajectory_csv(log, std::io::BufWriter::new(fs::File::create(&paths.trajectory)?))?;
    write_weights_csv(log, std::io::BufWriter::new(fs::File::create(&paths.weights)?))?;
    fs::write(&paths.summary, serde_json::to_string_pretty(summary)? + "\n")?;
    Ok(paths)
}

/// A learned (or reference) gain and kernel, for side-by-side comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSnapshot {
    /// Row-major gain.
    pub gain: Vec<f64>,
    /// Row-major kernel.
    pub kernel: Vec<f64>,
}

impl LearnerSnapshot {
    pub fn new(gain: &DMatrix<f64>, kernel: &DMatrix<f64>) -> Self {
        Self {
            gain: row_major(gain),
            kernel: row_major(kernel),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnapshotDelta {
    /// Largest absolute gain difference.
    pub gain: f64,
    /// Frobenius norm of the kernel difference.
    pub kernel: f64,
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn snapshot_delta(a: &LearnerSnapshot, b: &LearnerSnapshot) -> SnapshotDelta {
    let kernel = if a.kernel.len() == b.kernel.len() {
        a.kernel.iter().zip(&b.kernel).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    } else {
        f64::INFINITY
    };
    SnapshotDelta {
        gain: max_abs_diff(&a.gain, &b.gain),
        kernel,
    }
}

/// Model-based cross-check of the closed-loop learner on `(Â, B̂)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub delta: f64,
    pub dare_iterations: usize,
    pub dare_residual: f64,
    /// Gain read off the oracle kernel.
    pub oracle_gain: Vec<f64>,
    /// `max |policy_from_kernel(S*) − textbook LQR gain|`.
    pub gain_formula_mismatch: f64,
    /// Spectrum of `Â + B̂ K*`.
    pub oracle_closed_loop: Spectrum,
    /// Spectral radius of `A_d + B_d K*`.
    pub oracle_discrete_radius: f64,
    /// The learned value is `½ Zᵀ S Z` while the oracle's Q-function is
    /// `Zᵀ S* Z`, so the learner is compared against `2 S*`.
    pub oracle: LearnerSnapshot,
    pub learned: LearnerSnapshot,
    pub delta_learned: SnapshotDelta,
    /// `‖S_learned − 2S*‖_F / ‖2S*‖_F`.
    pub kernel_relative_delta: f64,
    pub learned_closed_loop: Spectrum,
    pub learned_spectral_abscissa: f64,
    /// Rank of the logged regressor matrix and the number of unknowns.
    pub regressor_rank: usize,
    pub regressor_required: usize,
    pub regressor_rows: usize,
    /// `‖Z̃ Θ_learned − Φ‖ / ‖Φ‖` on the logged closed-loop data.
    pub learned_relative_residual: f64,
    /// `‖Z̃ Θ_batch − Φ‖ / ‖Φ‖`, when the data has full rank.
    pub batch_relative_residual: Option<f64>,
    /// Closed-loop spectrum on `(Â, B̂)` of the batch kernel's greedy gain.
    pub batch_gain: Option<Vec<f64>>,
    pub oracle_on_learned_data_residual: f64,
}

/// Oracle for the closed-loop strategy with the configured weights.
pub fn closed_loop_oracle(config: &RunConfig, model: &ProcessModel) -> Result<(DiscreteModel, crate::oracle::DareSolution, KernelMatrix)> {
    let lc = &config.learning;
    let params = lc.learner_params(Strategy::ClosedLoop, model.n(), model.m())?;
    let dm = DiscreteModel::new(&model.a_hat, &model.b_hat, &params.q, &params.r, lc.delta)?;
    let sol = solve_dare(&dm.a_d, &dm.b_d, &dm.q_bar, &dm.r_bar, 1e-14, 1_000_000)?;
    let kernel = qfun_kernel(&sol.p, &dm)?;
    Ok((dm, sol, kernel))
}

pub fn oracle_check(config: &RunConfig, model: &ProcessModel, log: &EpisodeLog) -> Result<OracleReport> {
    let (dm, sol, s_star) = closed_loop_oracle(config, model)?;
    let eps = config.learning.eps_sing.min(1e-12);
    let k_kernel = policy_from_kernel(&s_star, eps)?;
    let k_formula = lqr_gain(&sol.p, &dm)?;
    let target = s_star.matrix() * 2.0;
    let oracle = LearnerSnapshot::new(&k_kernel, &target);

    let learned_gain = log.final_gain(Strategy::ClosedLoop);
    let learned_kernel = log.final_kernel(Strategy::ClosedLoop);
    let learned = LearnerSnapshot::new(learned_gain, learned_kernel.matrix());
    let data = &log.trace(Strategy::ClosedLoop).dataset;

    let (rank, rows, required) = if data.is_empty() {
        (0, 0, learned_kernel.to_theta().len())
    } else {
        let (zm, _) = stack_dataset(data)?;
        (numerical_rank(&zm), zm.nrows(), zm.ncols())
    };
    let learned_relative_residual = if data.is_empty() {
        f64::NAN
    } else {
        relative_bellman_residual(data, &learned_kernel.to_theta())?
    };
    let oracle_on_learned_data_residual = if data.is_empty() {
        f64::NAN
    } else {
        relative_bellman_residual(data, &crate::learner::s_to_theta(&target))?
    };
    let (batch_relative_residual, batch_gain) = match batch_bellman_solve(data) {
        Ok(b) => {
            let gain = KernelMatrix::from_theta(&b.theta, model.n())
                .and_then(|k| policy_from_kernel(&k, eps))
                .ok()
                .map(|g| row_major(&g));
            (Some(b.relative_residual), gain)
        }
        Err(_) => (None, None),
    };
    let learned_cl = &model.a_hat + &model.b_hat * learned_gain;

    Ok(OracleReport {
        delta: dm.delta,
        dare_iterations: sol.iterations,
        dare_residual: dare_residual(&dm, &sol.p)?,
        oracle_gain: row_major(&k_kernel),
        gain_formula_mismatch: (&k_kernel - &k_formula).amax(),
        oracle_closed_loop: spectrum(&(&model.a_hat + &model.b_hat * &k_kernel))?,
        oracle_discrete_radius: spectral_radius(&(&dm.a_d + &dm.b_d * &k_kernel))?,
        delta_learned: snapshot_delta(&learned, &oracle),
        kernel_relative_delta: (learned_kernel.matrix() - &target).norm() / target.norm(),
        oracle,
        learned,
        learned_closed_loop: spectrum(&learned_cl)?,
        learned_spectral_abscissa: spectral_abscissa(&learned_cl)?,
        regressor_rank: rank,
        regressor_required: required,
        regressor_rows: rows,
        learned_relative_residual,
        batch_relative_residual,
        batch_gain,
        oracle_on_learned_data_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control_loop::run_episode;

    #[test]
    fn benchmark_header_matches_schema() {
        assert_eq!(
            trajectory_header(3, 1, 1),
            "t,x1,x2,x3,xhat1,xhat2,xhat3,y,yhat,yref,e_ob,e_mf,u_total,mu_cl,u_ob,u_mf"
        );
    }

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, 0.0] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn csv_row_counts() {
        let mut cfg = RunConfig::default();
        cfg.run.horizon = 0.25;
        let log = run_episode(&cfg).unwrap();
        let mut traj = Vec::new();
        write_trajectory_csv(&log, &mut traj).unwrap();
        let text = String::from_utf8(traj).unwrap();
        assert_eq!(text.lines().count(), 1 + 26);
        let mut w = Vec::new();
        write_weights_csv(&log, &mut w).unwrap();
        let text = String::from_utf8(w).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(header.split(',').count(), 1 + 3 * (10 + 3));
        assert_eq!(text.lines().count(), 27);
    }

    #[test]
    fn identical_snapshots_have_zero_delta() {
        let s = LearnerSnapshot::new(&DMatrix::from_row_slice(1, 2, &[1.0, 2.0]), &DMatrix::identity(3, 3));
        assert_eq!(snapshot_delta(&s, &s), SnapshotDelta { gain: 0.0, kernel: 0.0 });
    }

    #[test]
    fn summary_reports_open_loop_spectrum() {
        let mut cfg = RunConfig::default();
        cfg.run.horizon = 0.1;
        let pm = cfg.validate().unwrap();
        let log = run_episode(&cfg).unwrap();
        let s = build_summary(&pm, &log).unwrap();
        let ol = &s.open_loop_eigenvalues.plant;
        assert!((ol[0][0] + 5.0).abs() < 1e-3 && (ol[0][1] + 3.1623).abs() < 1e-3);
        assert!((ol[2][0]).abs() < 1e-3 && ol[2][1] == 0.0);
        let json = serde_json::to_value(&s).unwrap();
        for key in ["open_loop_eigenvalues", "closed_loop_eigenvalues", "pi_cl", "pi_ob", "pi_mf", "terminal_e_mf", "convergence_time_s"] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }
}
