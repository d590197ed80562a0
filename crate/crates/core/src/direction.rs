//! Two-stage feasible descent direction.
//!
//! Both stages share `H = GᵀG − diag(w∘g)`:
//! stage 1 solves `Hγ₀ = −Gᵀ∇f` and sets `S₀ = −(∇f + Gγ₀)`, which gives
//! `S₀ᵀ∇g_j = −w_jγ₀ⱼg_j`; stage 2 solves `Hγ = −Gᵀ∇f + ρ‖S₀‖²·1` and sets
//! `S = −(∇f + Gγ)`, so that `Sᵀ∇g_j = −(w_jγⱼg_j + ρ‖S₀‖²)`.

use crate::error::{Error, Result};
use crate::ldl::{factor_with, HAssembler, LdlSymbolic};
use crate::sparse::CscMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionParams {
    pub ts_alpha: f64,
    pub rho0: f64,
    /// `‖S₀‖ ≤ zero_tol·(1 + ‖∇f‖)` counts as a zero direction.
    pub zero_tol: f64,
}

impl Default for DirectionParams {
    fn default() -> Self {
        Self { ts_alpha: 0.5, rho0: 0.9, zero_tol: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionResult {
    pub s0: Vec<f64>,
    pub s: Vec<f64>,
    pub gamma0: Vec<f64>,
    pub gamma: Vec<f64>,
    pub rho: f64,
    pub norm_s0: f64,
    pub norm_s: f64,
    /// `Sᵀ∇f` (zero for a zero direction).
    pub slope: f64,
    pub zero: bool,
    /// `max_j |S₀ᵀ∇g_j + w_jγ₀ⱼg_j|`.
    pub stage1_residual: f64,
    /// `max_j |Sᵀ∇g_j + w_jγⱼg_j + ρ‖S₀‖²|`.
    pub stage2_residual: f64,
    /// Scale the stage residuals are measured against.
    pub residual_scale: f64,
    pub negative_gamma0: usize,
    pub factorizations: usize,
    pub solves: usize,
}

/// Reuses the `H` pattern and its symbolic factorization across calls.
#[derive(Debug, Clone)]
pub struct DirectionEngine {
    assembler: HAssembler,
    symbolic: Option<LdlSymbolic>,
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

impl DirectionEngine {
    pub fn new(gpattern: &CscMatrix) -> Self {
        Self { assembler: HAssembler::new(gpattern), symbolic: None }
    }

    pub fn compute(
        &mut self,
        grad: &[f64],
        gmat: &CscMatrix,
        g: &[f64],
        w: &[f64],
        params: &DirectionParams,
    ) -> Result<DirectionResult> {
        let n = gmat.ncols;
        if grad.len() != gmat.nrows || g.len() != n || w.len() != n {
            return Err(Error::Dimension("direction inputs disagree in size".into()));
        }
        if let Some(j) = g.iter().position(|&v| !(v < 0.0)) {
            return Err(Error::Infeasible(format!("constraint {j} has g = {:e}", g[j])));
        }
        if !(params.ts_alpha > 0.0 && params.ts_alpha < 1.0) || !(params.rho0 > 0.0) {
            return Err(Error::Argument("ts_alpha must lie in (0,1) and rho0 must be positive".into()));
        }
        let h = self.assembler.assemble(gmat, g, w)?;
        if self.symbolic.is_none() {
            self.symbolic = Some(LdlSymbolic::analyze(&h)?);
        }
        let fac = factor_with(self.symbolic.as_ref().unwrap(), &h)?;

        let gtf = gmat.tr_mul_vec(grad);
        let b0: Vec<f64> = gtf.iter().map(|v| -v).collect();
        let gamma0 = fac.solve(&b0)?;
        let s0 = direction_from(grad, gmat, &gamma0);
        let norm_s0 = norm2(&s0);
        let gnorm = norm2(grad);
        let hmax = h.max_abs();
        let gts0 = gmat.tr_mul_vec(&s0);
        let mut stage1 = 0.0f64;
        for j in 0..n {
            stage1 = stage1.max((gts0[j] + w[j] * gamma0[j] * g[j]).abs());
        }
        let negative_gamma0 = gamma0.iter().filter(|&&v| v < 0.0).count();

        if norm_s0 <= params.zero_tol * (1.0 + gnorm) {
            let scale = 1.0 + hmax * inf_norm(&gamma0) + inf_norm(&gtf);
            return Ok(DirectionResult {
                norm_s: norm_s0,
                slope: dot(&s0, grad),
                s: s0.clone(),
                s0,
                gamma: gamma0.clone(),
                gamma0,
                rho: params.rho0,
                norm_s0,
                zero: true,
                stage1_residual: stage1,
                stage2_residual: stage1,
                residual_scale: scale,
                negative_gamma0,
                factorizations: 1,
                solves: fac.solve_count(),
            });
        }

        let mut rho = params.rho0;
        let sum0: f64 = gamma0.iter().sum();
        if sum0 > 0.0 {
            let rho1 = (1.0 - params.ts_alpha) / sum0;
            if rho1 < rho {
                rho = rho1 / 2.0;
            }
        }
        let shift = rho * norm_s0 * norm_s0;
        let b1: Vec<f64> = gtf.iter().map(|v| -v + shift).collect();
        let gamma = fac.solve(&b1)?;
        let s = direction_from(grad, gmat, &gamma);
        let gts = gmat.tr_mul_vec(&s);
        let mut stage2 = 0.0f64;
        for j in 0..n {
            stage2 = stage2.max((gts[j] + w[j] * gamma[j] * g[j] + shift).abs());
        }
        let scale = 1.0 + hmax * inf_norm(&gamma0).max(inf_norm(&gamma)) + inf_norm(&gtf) + shift;
        Ok(DirectionResult {
            norm_s: norm2(&s),
            slope: dot(&s, grad),
            s,
            s0,
            gamma0,
            gamma,
            rho,
            norm_s0,
            zero: false,
            stage1_residual: stage1,
            stage2_residual: stage2,
            residual_scale: scale,
            negative_gamma0,
            factorizations: 1,
            solves: fac.solve_count(),
        })
    }
}

fn inf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn direction_from(grad: &[f64], gmat: &CscMatrix, gamma: &[f64]) -> Vec<f64> {
    let gg = gmat.mul_vec(gamma);
    grad.iter().zip(gg).map(|(a, b)| -(a + b)).collect()
}

/// One-shot direction computation (analyzes the pattern of `H` each call).
pub fn two_stage_direction(
    grad: &[f64],
    gmat: &CscMatrix,
    g: &[f64],
    w: &[f64],
    params: &DirectionParams,
) -> Result<DirectionResult> {
    DirectionEngine::new(gmat).compute(grad, gmat, g, w, params)
}
