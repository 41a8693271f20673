//! One simulated episode: plant, desired model, reference, the observer,
//! closed-loop and model-following learners, and the composed control law
//! `u = μ_cl + u_mf`.
//!
//! Per learning interval `[t, t + δ]`:
//! 1. the plant integrates `u_total` and the desired model integrates
//!    `u_ob + u_total`, both held over `substeps` RK4 steps;
//! 2. the observer error `Y − Ŷ` and model-following error `Y_ref − Y` are
//!    sampled at every substep and stacked;
//! 3. each strategy integrates its stage cost over the interval, takes a
//!    critic and then an actor step;
//! 4. the incremental laws `u_ob += μ_ob`, `u_mf += μ_mf` and the direct law
//!    `μ_cl = π_cl X̂` produce the controls for the next interval.

use nalgebra::{DMatrix, DVector};

use crate::config::{RunConfig, Strategy};
use crate::dynamics::{output, step_lti, ProcessModel, StateVector};
use crate::error::{Error, Result};
use crate::error_stack::ErrorStack;
use crate::learner::{trapezoid_uniform, KernelMatrix, Learner};
use crate::probe::Probe;
use crate::reference::ReferenceSpec;

/// Control signals held over the current learning interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlState {
    /// Accumulated observer signal, fed to the desired model only.
    pub u_ob: DVector<f64>,
    /// Accumulated model-following signal.
    pub u_mf: DVector<f64>,
    /// Direct closed-loop feedback `π_cl X̂` (plus probe).
    pub mu_cl: DVector<f64>,
    /// Increments that produced the current `u_ob`, `u_mf`.
    pub mu_ob: DVector<f64>,
    pub mu_mf: DVector<f64>,
    /// `mu_cl + u_mf`, applied to the plant.
    pub u_total: DVector<f64>,
}

impl ControlState {
    pub fn zeros(m: usize) -> Self {
        let z = DVector::zeros(m);
        Self {
            u_ob: z.clone(),
            u_mf: z.clone(),
            mu_cl: z.clone(),
            mu_ob: z.clone(),
            mu_mf: z.clone(),
            u_total: z,
        }
    }
}

/// `u = μ_cl + u_mf`.
pub fn compose_control(mu_cl: &DVector<f64>, u_mf: &DVector<f64>) -> DVector<f64> {
    mu_cl + u_mf
}

/// Input seen by the desired model: `u_ob + u`.
pub fn observer_input(u_ob: &DVector<f64>, u_total: &DVector<f64>) -> DVector<f64> {
    u_ob + u_total
}

/// Signals recorded at the end of every learning interval.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub x: DVector<f64>,
    pub xhat: DVector<f64>,
    pub y: DVector<f64>,
    pub yhat: DVector<f64>,
    pub yref: DVector<f64>,
    pub e_ob: DVector<f64>,
    pub e_mf: DVector<f64>,
    pub u_total: DVector<f64>,
    pub mu_cl: DVector<f64>,
    pub u_ob: DVector<f64>,
    pub u_mf: DVector<f64>,
}

/// Learner parameters recorded alongside each trajectory row, indexed by
/// [`Strategy::index`].
#[derive(Debug, Clone, PartialEq)]
pub struct WeightRow {
    pub t: f64,
    pub theta: [DVector<f64>; 3],
    pub gain: [DMatrix<f64>; 3],
}

/// Per-strategy learning history.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StrategyTrace {
    /// `(z̃, Φ)` for every completed cycle.
    pub dataset: Vec<(DVector<f64>, f64)>,
    /// Integral Bellman residual before each critic step.
    pub residuals: Vec<f64>,
    /// `‖S⁺ − S‖_F` per cycle.
    pub kernel_steps: Vec<f64>,
    /// Cycles skipped for a near-singular `S_μμ`.
    pub singular_events: usize,
    /// Time at which the kernel was declared converged.
    pub converged_at: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub delta: f64,
    pub rows: Vec<TrajectoryRow>,
    pub weights: Vec<WeightRow>,
    pub traces: [StrategyTrace; 3],
    pub final_kernels: [KernelMatrix; 3],
    /// Set when the episode stopped early; the log holds everything up to it.
    pub aborted: Option<String>,
}

impl EpisodeLog {
    pub fn trace(&self, s: Strategy) -> &StrategyTrace {
        &self.traces[s.index()]
    }

    pub fn final_gain(&self, s: Strategy) -> &DMatrix<f64> {
        &self.weights.last().expect("log always holds the initial record").gain[s.index()]
    }

    pub fn final_kernel(&self, s: Strategy) -> &KernelMatrix {
        &self.final_kernels[s.index()]
    }

    /// Largest `|e|` over rows with `t` in `[t0, t1]` for the chosen signal.
    pub fn max_abs_over(&self, t0: f64, t1: f64, pick: impl Fn(&TrajectoryRow) -> &DVector<f64>) -> Option<f64> {
        self.rows
            .iter()
            .filter(|r| r.t >= t0 - 1e-9 && r.t <= t1 + 1e-9)
            .map(|r| pick(r).amax())
            .reduce(f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct ConvergenceTracker {
    streak: usize,
    converged_at: Option<f64>,
}

/// Stepwise episode runner.
#[derive(Debug, Clone)]
pub struct Episode {
    model: ProcessModel,
    reference: ReferenceSpec,
    probe: Probe,
    delta: f64,
    substeps: usize,
    tol_conv: f64,
    settle_ticks: usize,
    freeze_on_convergence: bool,
    ticks: usize,
    k: usize,
    plant: StateVector,
    observer: StateVector,
    state: ControlState,
    learners: [Learner; 3],
    hist_ob: ErrorStack,
    hist_mf: ErrorStack,
    f_cl: DVector<f64>,
    f_ob: Option<DVector<f64>>,
    f_mf: Option<DVector<f64>>,
    trackers: [ConvergenceTracker; 3],
    /// Probe total already injected into each incremental law.
    probe_applied: [f64; 3],
    log: EpisodeLog,
}

impl Episode {
    pub fn new(config: &RunConfig) -> Result<Self> {
        let model = config.validate()?;
        let lc = &config.learning;
        let (n, m, p) = (model.n(), model.m(), model.p());
        let build = |s: Strategy| -> Result<Learner> {
            let f = lc.feature_dim(s, n, p);
            Learner::new(lc.learner_params(s, f, m)?, lc.initial_kernel(s, f, m)?)
        };
        let learners = [build(Strategy::ClosedLoop)?, build(Strategy::Observer)?, build(Strategy::ModelFollowing)?];
        let (x0, xhat0) = config.initial_states(n);
        let probe = lc.probe.build(config.run.seed);
        let depth = (lc.stack_depth - 1) * lc.substeps + 1;

        let mut ep = Self {
            reference: config.reference.clone(),
            probe,
            delta: lc.delta,
            substeps: lc.substeps,
            tol_conv: lc.tol_conv,
            settle_ticks: (lc.settle_time / lc.delta - 1e-9).ceil().max(1.0) as usize,
            freeze_on_convergence: lc.freeze_on_convergence,
            ticks: config.ticks(),
            k: 0,
            plant: StateVector::new(x0, 0.0),
            observer: StateVector::new(xhat0.clone(), 0.0),
            state: ControlState::zeros(m),
            hist_ob: ErrorStack::new(depth, p),
            hist_mf: ErrorStack::new(depth, p),
            f_cl: xhat0,
            f_ob: None,
            f_mf: None,
            trackers: [ConvergenceTracker::default(); 3],
            probe_applied: [0.0; 3],
            log: EpisodeLog {
                delta: lc.delta,
                rows: Vec::new(),
                weights: Vec::new(),
                traces: Default::default(),
                final_kernels: [
                    learners[0].kernel().clone(),
                    learners[1].kernel().clone(),
                    learners[2].kernel().clone(),
                ],
                aborted: None,
            },
            learners,
            model,
        };
        ep.push_errors(0.0)?;
        ep.state.mu_cl = ep.closed_loop_law(0.0);
        ep.state.u_total = compose_control(&ep.state.mu_cl, &ep.state.u_mf);
        ep.record(0.0)?;
        Ok(ep)
    }

    pub fn model(&self) -> &ProcessModel {
        &self.model
    }

    pub fn state(&self) -> &ControlState {
        &self.state
    }

    pub fn learner(&self, s: Strategy) -> &Learner {
        &self.learners[s.index()]
    }

    pub fn log(&self) -> &EpisodeLog {
        &self.log
    }

    pub fn time(&self) -> f64 {
        self.k as f64 * self.delta
    }

    pub fn is_done(&self) -> bool {
        self.k >= self.ticks
    }

    fn errors(&self, t: f64) -> Result<(DVector<f64>, DVector<f64>)> {
        let y = output(&self.model.c, &self.plant.x);
        let yhat = output(&self.model.c, &self.observer.x);
        let yref = self.reference.eval(t)?;
        Ok((&y - yhat, yref - y))
    }

    fn push_errors(&mut self, t: f64) -> Result<()> {
        let (e_ob, e_mf) = self.errors(t)?;
        self.hist_ob.push(&e_ob)?;
        self.hist_mf.push(&e_mf)
    }

    fn stacked_features(&self) -> Option<(DVector<f64>, DVector<f64>)> {
        let ob = self.hist_ob.as_strided_vector(self.substeps).ok()?;
        let mf = self.hist_mf.as_strided_vector(self.substeps).ok()?;
        Some((ob, mf))
    }

    fn closed_loop_law(&self, t: f64) -> DVector<f64> {
        let probe = self.probe.value(t, Strategy::ClosedLoop.index());
        self.learners[Strategy::ClosedLoop.index()].act(&self.f_cl).add_scalar(probe)
    }

    fn record(&mut self, t: f64) -> Result<()> {
        let c = &self.model.c;
        let y = output(c, &self.plant.x);
        let yhat = output(c, &self.observer.x);
        let yref = self.reference.eval(t)?;
        self.log.rows.push(TrajectoryRow {
            t,
            e_ob: &y - &yhat,
            e_mf: &yref - &y,
            x: self.plant.x.clone(),
            xhat: self.observer.x.clone(),
            y,
            yhat,
            yref,
            u_total: self.state.u_total.clone(),
            mu_cl: self.state.mu_cl.clone(),
            u_ob: self.state.u_ob.clone(),
            u_mf: self.state.u_mf.clone(),
        });
        self.log.weights.push(WeightRow {
            t,
            theta: self.learners.clone().map(|l| l.theta().clone()),
            gain: self.learners.clone().map(|l| l.gain().clone()),
        });
        Ok(())
    }

    fn learn(&mut self, s: Strategy, f_t: &DVector<f64>, mu_t: &DVector<f64>, f_next: &DVector<f64>, phi: f64, t: f64) -> Result<()> {
        let i = s.index();
        let z = self.learners[i].regressor(f_t, mu_t, f_next)?;
        let adapting = self.learners[i].params().adapt;
        let report = self.learners[i].cycle(&z, phi, f_next)?;
        let trace = &mut self.log.traces[i];
        trace.dataset.push((z, phi));
        trace.residuals.push(report.residual);
        trace.kernel_steps.push(report.kernel_step);
        trace.singular_events += usize::from(report.singular);

        let tracker = &mut self.trackers[i];
        if !adapting || tracker.converged_at.is_some() {
            return Ok(());
        }
        let probing_done = t - self.delta >= self.probe.config().duration - 1e-9;
        if probing_done && report.kernel_step < self.tol_conv {
            tracker.streak += 1;
        } else {
            tracker.streak = 0;
        }
        if tracker.streak >= self.settle_ticks {
            tracker.converged_at = Some(t);
            trace.converged_at = Some(t);
            if self.freeze_on_convergence {
                self.learners[i].set_adapt(false);
            }
        }
        Ok(())
    }

    /// Advances one learning interval.
    pub fn tick(&mut self) -> Result<()> {
        let (delta, n_sub) = (self.delta, self.substeps);
        let h = delta / n_sub as f64;
        let t0 = self.k as f64 * delta;
        let t1 = (self.k + 1) as f64 * delta;
        let u = self.state.u_total.clone();
        let u_hat = observer_input(&self.state.u_ob, &u);
        let [cl, ob, mf] = Strategy::ALL.map(|s| s.index());

        let stacked_ready = self.f_ob.is_some();
        let mut util_cl = Vec::with_capacity(n_sub + 1);
        let mut util_ob = Vec::with_capacity(n_sub + 1);
        let mut util_mf = Vec::with_capacity(n_sub + 1);
        let sample_utilities = |ep: &Self, u_cl: &mut Vec<f64>, u_ob: &mut Vec<f64>, u_mf: &mut Vec<f64>| {
            u_cl.push(ep.learners[cl].utility(&ep.observer.x, &ep.state.mu_cl));
            if stacked_ready {
                if let Some((f_ob, f_mf)) = ep.stacked_features() {
                    u_ob.push(ep.learners[ob].utility(&f_ob, &ep.state.mu_ob));
                    u_mf.push(ep.learners[mf].utility(&f_mf, &ep.state.mu_mf));
                }
            }
        };
        sample_utilities(self, &mut util_cl, &mut util_ob, &mut util_mf);
        for j in 1..=n_sub {
            self.plant = step_lti(&self.model.a, &self.model.b, &self.plant, &u, h)?;
            self.observer = step_lti(&self.model.a_hat, &self.model.b_hat, &self.observer, &u_hat, h)?;
            let t = t0 + j as f64 * h;
            self.plant.t = t;
            self.observer.t = t;
            self.push_errors(t)?;
            sample_utilities(self, &mut util_cl, &mut util_ob, &mut util_mf);
        }
        self.plant.t = t1;
        self.observer.t = t1;

        let f_cl_next = self.observer.x.clone();
        let f_cl = self.f_cl.clone();
        let mu_cl = self.state.mu_cl.clone();
        self.learn(Strategy::ClosedLoop, &f_cl, &mu_cl, &f_cl_next, trapezoid_uniform(&util_cl, h), t1)?;

        let next = self.stacked_features();
        if let (Some(f_ob), Some(f_mf), Some((f_ob_next, f_mf_next))) = (self.f_ob.clone(), self.f_mf.clone(), next.clone()) {
            let (mu_ob, mu_mf) = (self.state.mu_ob.clone(), self.state.mu_mf.clone());
            self.learn(Strategy::Observer, &f_ob, &mu_ob, &f_ob_next, trapezoid_uniform(&util_ob, h), t1)?;
            self.learn(Strategy::ModelFollowing, &f_mf, &mu_mf, &f_mf_next, trapezoid_uniform(&util_mf, h), t1)?;
        }

        if let Some((f_ob_next, f_mf_next)) = &next {
            let probe_ob = self.probe.increment(self.probe_applied[ob], t1, ob);
            let probe_mf = self.probe.increment(self.probe_applied[mf], t1, mf);
            self.probe_applied[ob] += probe_ob;
            self.probe_applied[mf] += probe_mf;
            self.state.mu_ob = self.learners[ob].act(f_ob_next).add_scalar(probe_ob);
            self.state.mu_mf = self.learners[mf].act(f_mf_next).add_scalar(probe_mf);
            self.state.u_ob += &self.state.mu_ob;
            self.state.u_mf += &self.state.mu_mf;
        }
        self.f_ob = next.as_ref().map(|(o, _)| o.clone());
        self.f_mf = next.map(|(_, m)| m);
        self.f_cl = f_cl_next;
        self.state.mu_cl = self.closed_loop_law(t1);
        self.state.u_total = compose_control(&self.state.mu_cl, &self.state.u_mf);
        if self.state.u_total.iter().chain(self.state.u_ob.iter()).any(|v| !v.is_finite()) {
            return Err(Error::IntegrationDiverged { t: t1 });
        }

        self.k += 1;
        self.record(t1)?;
        self.log.final_kernels = self.learners.clone().map(|l| l.kernel().clone());
        Ok(())
    }

    /// Runs to the horizon. On failure the partial log is returned with the error.
    pub fn run(mut self) -> (EpisodeLog, Option<Error>) {
        while !self.is_done() {
            if let Err(e) = self.tick() {
                self.log.aborted = Some(e.to_string());
                return (self.log, Some(e));
            }
        }
        (self.log, None)
    }
}

/// Runs a full episode; any tick error aborts it.
pub fn run_episode(config: &RunConfig) -> Result<EpisodeLog> {
    let (log, err) = Episode::new(config)?.run();
    match err {
        None => Ok(log),
        Some(e) => Err(e),
    }
}
