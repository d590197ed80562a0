//! The complete feasible-direction loop: interior start, then alternate
//! two-stage directions and exact cubic steps until the direction or the step
//! vanishes.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::direction::{DirectionEngine, DirectionParams};
use crate::error::{Error, Result};
use crate::game::{JointStrategy, StochasticGame, ValueVector};
use crate::init::initial_point;
use crate::nlp::Nlp;
use crate::step::{optimal_step, StepParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub init_slack: f64,
    pub ts_alpha: f64,
    pub rho0: f64,
    /// Constant weight `w_j`.
    pub weight: f64,
    pub delta0: f64,
    pub eta: f64,
    pub nu: f64,
    pub t_cap: f64,
    pub t_min: f64,
    /// Relative threshold on `‖S‖`, scaled by `1 + ‖∇f‖`.
    pub tol_s: f64,
    pub tol_f: f64,
    pub max_iters: usize,
    /// `|g_j| ≤ act_tol` counts as active in the trace.
    pub act_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            init_slack: 0.5,
            ts_alpha: 0.5,
            rho0: 0.9,
            weight: 1.0,
            delta0: 0.9,
            eta: 0.1,
            nu: 2.0,
            t_cap: 1e6,
            t_min: 1e-14,
            tol_s: 1e-8,
            tol_f: 1e-10,
            max_iters: 10_000,
            act_tol: 1e-6,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| x > 0.0 && x < 1.0;
        let checks = [
            (self.init_slack > 0.0 && self.init_slack.is_finite(), "init_slack must be positive"),
            (unit(self.ts_alpha), "ts_alpha must lie in (0,1)"),
            (self.rho0 > 0.0 && self.rho0.is_finite(), "rho0 must be positive"),
            (self.weight > 0.0 && self.weight.is_finite(), "weight must be positive"),
            (unit(self.delta0), "delta0 must lie in (0,1)"),
            (unit(self.eta), "eta must lie in (0,1)"),
            (self.nu > 1.0, "nu must exceed 1"),
            (self.t_cap > 0.0, "t_cap must be positive"),
            (self.t_min > 0.0 && self.t_min < self.t_cap, "t_min must lie in (0, t_cap)"),
            (self.tol_s > 0.0, "tol_s must be positive"),
            (self.tol_f >= 0.0, "tol_f must be nonnegative"),
            (self.act_tol >= 0.0, "act_tol must be nonnegative"),
        ];
        match checks.iter().find(|c| !c.0) {
            Some((_, msg)) => Err(Error::Argument((*msg).into())),
            None => Ok(()),
        }
    }

    fn direction_params(&self) -> DirectionParams {
        DirectionParams { ts_alpha: self.ts_alpha, rho0: self.rho0, zero_tol: self.tol_s * 0.1 }
    }

    fn step_params(&self) -> StepParams {
        StepParams { delta0: self.delta0, eta: self.eta, nu: self.nu, t_min: self.t_min, t_cap: self.t_cap }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    ZeroDirection,
    ZeroStep,
    MaxIters,
    FBelowTol,
    NumericFailure,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::ZeroDirection => "zero-direction",
            Self::ZeroStep => "zero-step",
            Self::MaxIters => "max-iters",
            Self::FBelowTol => "f-below-tol",
            Self::NumericFailure => "numeric-failure",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub f: f64,
    #[serde(rename = "normS0")]
    pub norm_s0: f64,
    #[serde(rename = "normS")]
    pub norm_s: f64,
    pub t: f64,
    pub maxg: f64,
    pub active: usize,
}

/// Per-iteration facts about the direction and the accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationCheck {
    pub iter: usize,
    pub slope: f64,
    pub stage1_residual: f64,
    pub stage2_residual: f64,
    pub residual_scale: f64,
    pub f_before: f64,
    pub f_after: f64,
    pub maxg_after: f64,
    pub fallback: bool,
    pub proposition_violations: usize,
    pub negative_gamma0: usize,
}

impl IterationCheck {
    /// Number of violated feasible-direction properties (0 when all hold).
    pub fn violations(&self, residual_tol: f64) -> usize {
        let mut n = 0;
        n += usize::from(!(self.slope < 0.0));
        n += usize::from(!(self.stage1_residual < residual_tol * self.residual_scale));
        n += usize::from(!(self.stage2_residual < residual_tol * self.residual_scale));
        n += usize::from(!(self.maxg_after < 0.0));
        n += usize::from(!(self.f_after <= self.f_before));
        n += self.proposition_violations;
        n
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub v: ValueVector,
    pub pi: JointStrategy,
    #[serde(skip)]
    pub point: Vec<f64>,
    pub f: f64,
    pub initial_f: f64,
    pub epsilon: f64,
    pub discount: f64,
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub failure: Option<String>,
    pub fallback_steps: usize,
    pub seconds: f64,
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
    #[serde(skip)]
    pub checks: Vec<IterationCheck>,
    /// Stage-two multipliers of the last direction.
    #[serde(skip)]
    pub gamma: Vec<f64>,
}

impl SolveReport {
    pub fn point_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct P<'a> {
            v: &'a [Vec<f64>; 2],
            pi: &'a [Vec<Vec<f64>>; 2],
        }
        Ok(serde_json::to_string_pretty(&P { v: &self.v.v, pi: &self.pi.pi })?)
    }

    pub fn total_violations(&self, residual_tol: f64) -> usize {
        self.checks.iter().map(|c| c.violations(residual_tol)).sum()
    }
}

/// Runs the solver from the uniform interior starting point.
pub fn solve(game: &StochasticGame, config: &SolverConfig) -> Result<SolveReport> {
    config.validate()?;
    let z = initial_point(game, config.init_slack)?;
    solve_from(game, config, z)
}

/// Runs the solver from a given strictly feasible packed point.
pub fn solve_from(game: &StochasticGame, config: &SolverConfig, mut z: Vec<f64>) -> Result<SolveReport> {
    config.validate()?;
    let start = Instant::now();
    let nlp = Nlp::new(game);
    if z.len() != nlp.num_vars() {
        return Err(Error::Dimension(format!("point has {} entries, expected {}", z.len(), nlp.num_vars())));
    }
    let g0 = nlp.constraints(&z)?;
    if let Some(j) = g0.iter().position(|&v| !(v < 0.0)) {
        return Err(Error::Infeasible(format!("start violates constraint {j}: g = {:e}", g0[j])));
    }
    let mut engine = DirectionEngine::new(&nlp.gradient_pattern());
    let dparams = config.direction_params();
    let sparams = config.step_params();
    let w = vec![config.weight; nlp.num_constraints()];

    let mut trace = Vec::new();
    let mut checks = Vec::new();
    let mut gamma = vec![0.0; nlp.num_constraints()];
    let mut failure = None;
    let mut fallback_steps = 0;
    let mut initial_f = f64::NAN;
    let mut iter = 0;
    let stop = loop {
        let ev = match nlp.evaluate(&z) {
            Ok(ev) => ev,
            Err(e) => {
                failure = Some(e.to_string());
                break StopReason::NumericFailure;
            }
        };
        if iter == 0 {
            initial_f = ev.f;
        }
        let maxg = ev.g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let active = ev.g.iter().filter(|v| v.abs() <= config.act_tol).count();
        let mut row = TraceRow { iter, f: ev.f, norm_s0: 0.0, norm_s: 0.0, t: 0.0, maxg, active };
        if ev.f < config.tol_f {
            trace.push(row);
            break StopReason::FBelowTol;
        }
        if iter >= config.max_iters {
            trace.push(row);
            break StopReason::MaxIters;
        }
        let dir = match engine.compute(&ev.grad, &ev.gmat, &ev.g, &w, &dparams) {
            Ok(d) => d,
            Err(e) => {
                trace.push(row);
                failure = Some(e.to_string());
                break StopReason::NumericFailure;
            }
        };
        row.norm_s0 = dir.norm_s0;
        row.norm_s = dir.norm_s;
        gamma.clone_from(&dir.gamma);
        let gnorm = ev.grad.iter().map(|v| v * v).sum::<f64>().sqrt();
        if dir.zero || dir.norm_s <= config.tol_s * (1.0 + gnorm) {
            trace.push(row);
            break StopReason::ZeroDirection;
        }
        let step = match optimal_step(&nlp, &z, &dir.s, &dir.gamma, dir.slope, &sparams) {
            Ok(s) => s,
            Err(e) => {
                trace.push(row);
                failure = Some(e.to_string());
                break StopReason::NumericFailure;
            }
        };
        row.t = step.t;
        trace.push(row);
        if step.t <= config.t_min {
            break StopReason::ZeroStep;
        }
        fallback_steps += usize::from(step.fallback);
        for (zi, si) in z.iter_mut().zip(&dir.s) {
            *zi += step.t * si;
        }
        let maxg_after = nlp.max_constraint(&z)?;
        checks.push(IterationCheck {
            iter,
            slope: dir.slope,
            stage1_residual: dir.stage1_residual,
            stage2_residual: dir.stage2_residual,
            residual_scale: dir.residual_scale,
            f_before: ev.f,
            f_after: step.f_new,
            maxg_after,
            fallback: step.fallback,
            proposition_violations: step.proposition_violations,
            negative_gamma0: dir.negative_gamma0,
        });
        iter += 1;
    };

    let f = nlp.objective(&z)?;
    let (v, pi) = nlp.layout().unpack(&z);
    let beta = game.discount();
    Ok(SolveReport {
        v,
        pi,
        point: z,
        f,
        initial_f,
        epsilon: f.max(0.0) / (1.0 - beta),
        discount: beta,
        iterations: iter,
        stop_reason: stop,
        failure,
        fallback_steps,
        seconds: start.elapsed().as_secs_f64(),
        trace,
        checks,
        gamma,
    })
}

pub fn write_trace<W: std::io::Write>(rows: &[TraceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace<R: std::io::Read>(input: R) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_reader(input);
    let rows = r.deserialize().collect::<std::result::Result<Vec<TraceRow>, _>>()?;
    Ok(rows)
}

pub fn trace_export(report: &SolveReport, path: impl AsRef<Path>) -> Result<()> {
    write_trace(&report.trace, std::fs::File::create(path)?)
}

pub fn trace_import(path: impl AsRef<Path>) -> Result<Vec<TraceRow>> {
    read_trace(std::fs::File::open(path)?)
}
