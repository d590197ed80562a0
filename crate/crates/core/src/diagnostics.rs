//! Independent checks on a candidate point: KKT residuals, the `λ′`
//! decomposition of `∇f`, the KKT-N rank test, best-response certification
//! and a support-enumeration oracle for bimatrix games.

use faer::prelude::*;
use faer::{Mat, Side};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{bellman_q_unchecked, strategy_value, JointStrategy, StochasticGame, ValueVector};
use crate::nlp::Nlp;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KktReport {
    /// `‖∇f + Gλ‖_∞`.
    pub stationarity: f64,
    /// `max_j |λ_j g_j|`.
    pub complementarity: f64,
    /// `max_j g_j`.
    pub primal: f64,
    /// `min_j λ_j`.
    pub dual: f64,
    pub active: Vec<usize>,
    pub grad_norm: f64,
}

/// Residuals of the first-order conditions `∇f + Gλ = 0`, `λ ≥ 0`,
/// `g ≤ 0`, `λ∘g = 0`.
pub fn kkt_residual(game: &StochasticGame, point: &[f64], lambda: &[f64], act_tol: f64) -> Result<KktReport> {
    let nlp = Nlp::new(game);
    if lambda.len() != nlp.num_constraints() {
        return Err(Error::Dimension(format!(
            "{} multipliers for {} constraints",
            lambda.len(),
            nlp.num_constraints()
        )));
    }
    let ev = nlp.evaluate(point)?;
    let gl = ev.gmat.mul_vec(lambda);
    let stationarity = ev.grad.iter().zip(&gl).fold(0.0f64, |m, (a, b)| m.max((a + b).abs()));
    let complementarity = lambda.iter().zip(&ev.g).fold(0.0f64, |m, (l, g)| m.max((l * g).abs()));
    let primal = ev.g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let dual = lambda.iter().copied().fold(f64::INFINITY, f64::min);
    let active = (0..ev.g.len()).filter(|&j| ev.g[j].abs() <= act_tol).collect();
    let grad_norm = ev.grad.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(KktReport { stationarity, complementarity, primal, dual, active, grad_norm })
}

/// `λ′` with `∇f = Gλ′`.
pub fn lambda_prime(game: &StochasticGame, point: &[f64]) -> Result<Vec<f64>> {
    Nlp::new(game).lambda_prime(point)
}

/// `‖∇f − Gλ′‖_∞`.
pub fn lambda_prime_residual(game: &StochasticGame, point: &[f64]) -> Result<f64> {
    let nlp = Nlp::new(game);
    let ev = nlp.evaluate(point)?;
    let lam = nlp.lambda_prime(point)?;
    let gl = ev.gmat.mul_vec(&lam);
    Ok(ev.grad.iter().zip(&gl).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum KktnVerdict {
    KktN,
    Degenerate,
    /// Active gradients are linearly dependent, so no verdict is possible.
    DependentActive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum KktnMethod {
    Dense,
    /// Too large for a dense decomposition; only the rank bound is used.
    RankBound,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KktnReport {
    pub active: usize,
    pub inactive: usize,
    pub variables: usize,
    /// Numerical rank of `G′` (for the rank bound method, the bound itself).
    pub rank: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Smallest eigenvalue of `G′`, which should be nonnegative.
    pub min_eigenvalue: f64,
    pub lambda_k_norm: f64,
    pub verdict: KktnVerdict,
    pub method: KktnMethod,
}

/// Largest `variables × constraints` product handled densely.
pub const KKTN_DENSE_LIMIT: usize = 4_000_000;

/// Splits constraints by `|g_j| ≤ act_tol` and tests whether
/// `G′ = G_Kᵀ(I − G_I(G_IᵀG_I)⁻¹G_Iᵀ)G_K` has full rank.
pub fn kktn_check(game: &StochasticGame, point: &[f64], act_tol: f64) -> Result<KktnReport> {
    let nlp = Nlp::new(game);
    let ev = nlp.evaluate(point)?;
    let lam = nlp.lambda_prime(point)?;
    let n = ev.g.len();
    let nv = nlp.num_vars();
    let active: Vec<usize> = (0..n).filter(|&j| ev.g[j].abs() <= act_tol).collect();
    let inactive: Vec<usize> = (0..n).filter(|&j| ev.g[j].abs() > act_tol).collect();
    let lambda_k_norm = inactive.iter().map(|&j| lam[j] * lam[j]).sum::<f64>().sqrt();

    if nv * n > KKTN_DENSE_LIMIT {
        // rank(G′) ≤ N − |I| when the active gradients are independent
        let bound = nv.saturating_sub(active.len()).min(inactive.len());
        let verdict = if bound < inactive.len() { KktnVerdict::Degenerate } else { KktnVerdict::KktN };
        return Ok(KktnReport {
            active: active.len(),
            inactive: inactive.len(),
            variables: nv,
            rank: bound,
            sigma_min: f64::NAN,
            sigma_max: f64::NAN,
            min_eigenvalue: f64::NAN,
            lambda_k_norm,
            verdict,
            method: KktnMethod::RankBound,
        });
    }

    let dense = ev.gmat.to_dense();
    let gi = Mat::<f64>::from_fn(nv, active.len(), |r, c| dense[(r, active[c])]);
    let mut pk = Mat::<f64>::from_fn(nv, inactive.len(), |r, c| dense[(r, inactive[c])]);
    // rank is judged against the unprojected scale, so a G′ that projects to ~0 has rank 0
    let scale = (0..inactive.len())
        .map(|c| pk.col(c).squared_norm_l2())
        .fold(0.0, f64::max);
    let mut report = KktnReport {
        active: active.len(),
        inactive: inactive.len(),
        variables: nv,
        rank: 0,
        sigma_min: 0.0,
        sigma_max: 0.0,
        min_eigenvalue: 0.0,
        lambda_k_norm,
        verdict: KktnVerdict::Degenerate,
        method: KktnMethod::Dense,
    };
    if !active.is_empty() {
        let svd = gi.thin_svd().map_err(|e| Error::Numeric(format!("svd: {e:?}")))?;
        let s = svd.S().column_vector();
        let smax = s[0];
        let smin = s[active.len() - 1];
        if active.len() > nv || smin <= smax * 100.0 * (nv.max(active.len()) as f64) * f64::EPSILON {
            report.verdict = KktnVerdict::DependentActive;
            return Ok(report);
        }
        let u = svd.U();
        let proj = u.transpose() * &pk;
        pk -= u * proj;
    }
    if inactive.is_empty() {
        report.verdict = KktnVerdict::KktN;
        return Ok(report);
    }
    let gp = pk.transpose() * &pk;
    let eig = gp.self_adjoint_eigenvalues(Side::Lower).map_err(|e| Error::Numeric(format!("evd: {e:?}")))?;
    report.min_eigenvalue = eig[0];
    let sv = gp.singular_values().map_err(|e| Error::Numeric(format!("svd: {e:?}")))?;
    let k = inactive.len();
    report.sigma_max = sv[0];
    report.sigma_min = sv[k - 1];
    let thresh = sv[0].max(scale) * k as f64 * f64::EPSILON * 100.0;
    report.rank = sv.iter().filter(|&&s| s > thresh).count();
    report.verdict = if report.rank == k { KktnVerdict::KktN } else { KktnVerdict::Degenerate };
    Ok(report)
}

/// Optimal values of the MDP player `i` faces when the opponent plays `pi`.
pub fn best_response_value(game: &StochasticGame, pi: &JointStrategy, player: usize) -> Result<Vec<f64>> {
    if player > 1 {
        return Err(Error::Argument(format!("player index {player}")));
    }
    pi.check_dims(game)?;
    let n = game.num_states();
    let beta = game.discount();
    let opp = &pi.pi[1 - player];
    let mut v = vec![0.0; n];
    let backup = |v: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|x| {
                bellman_q_unchecked(game, v, &opp[x], player, x)
                    .into_iter()
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect()
    };
    for _ in 0..1_000_000 {
        let next = backup(&v);
        let (lo, hi) = next
            .iter()
            .zip(&v)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (a, b)| (lo.min(a - b), hi.max(a - b)));
        if hi - lo <= 1e-10 || beta == 0.0 {
            // extrapolate with the midpoint of the span bounds
            let shift = if beta < 1.0 { beta / (1.0 - beta) * 0.5 * (lo + hi) } else { 0.0 };
            return Ok(next.into_iter().map(|x| x + shift).collect());
        }
        v = next;
    }
    Err(Error::Numeric("value iteration did not converge".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsCertificate {
    /// Largest gain from a unilateral deviation, over players and states.
    pub eps_emp: f64,
    pub per_player: [f64; 2],
    /// `f(v_π, π)/(1−β)`.
    pub bound: f64,
    pub pass: bool,
}

impl EpsCertificate {
    pub fn within(&self, eps: f64, slack: f64) -> bool {
        self.eps_emp <= eps + slack
    }
}

/// Best-response gap of `pi`.
pub fn eps_nash_certify(game: &StochasticGame, pi: &JointStrategy) -> Result<EpsCertificate> {
    let v = strategy_value(game, pi)?;
    let mut per_player = [0.0; 2];
    for (i, gap) in per_player.iter_mut().enumerate() {
        let br = best_response_value(game, pi, i)?;
        *gap = br.iter().zip(&v.v[i]).fold(f64::NEG_INFINITY, |m, (b, a)| m.max(b - a));
    }
    let nlp = Nlp::new(game);
    let f = nlp.objective(&nlp.layout().pack(&v, pi))?;
    let bound = f / (1.0 - game.discount());
    let eps_emp = per_player[0].max(per_player[1]);
    Ok(EpsCertificate { eps_emp, per_player, bound, pass: eps_emp <= bound + 1e-6 })
}

/// Value vector and packed point for `pi` at its own values.
pub fn strategy_point(game: &StochasticGame, pi: &JointStrategy) -> Result<(ValueVector, Vec<f64>)> {
    let v = strategy_value(game, pi)?;
    let z = Nlp::new(game).layout().pack(&v, pi);
    Ok((v, z))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BimatrixEquilibrium {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub payoff: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupportEnumeration {
    pub equilibria: Vec<BimatrixEquilibrium>,
    /// Set when a singular support system or a tie outside the support was seen.
    pub degenerate: bool,
}

const SE_TOL: f64 = 1e-9;

/// All equilibria of the bimatrix game `(a, b)` with equal-size supports.
pub fn support_enumeration_nash(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<SupportEnumeration> {
    let m = a.len();
    let n = a.first().map_or(0, Vec::len);
    if m == 0 || n == 0 || m > 5 || n > 5 {
        return Err(Error::Argument(format!("bimatrix must be between 1x1 and 5x5, got {m}x{n}")));
    }
    if b.len() != m || a.iter().chain(b).any(|r| r.len() != n || r.iter().any(|v| !v.is_finite())) {
        return Err(Error::Dimension("payoff matrices must be finite and equally shaped".into()));
    }
    let mut out = SupportEnumeration { equilibria: Vec::new(), degenerate: false };
    for k in 1..=m.min(n) {
        for s1 in subsets(m, k) {
            for s2 in subsets(n, k) {
                // y on s2 makes player 1 indifferent over s1; x on s1 does the same for player 2
                let y = indifference(&s1, &s2, |r, c| a[r][c]);
                let x = indifference(&s2, &s1, |c, r| b[r][c]);
                let (Some((y, u1)), Some((x, u2))) = (y, x) else {
                    out.degenerate = true;
                    continue;
                };
                if y.iter().chain(&x).any(|&p| p < -SE_TOL) {
                    continue;
                }
                let mut xf = vec![0.0; m];
                let mut yf = vec![0.0; n];
                for (&r, &p) in s1.iter().zip(&x) {
                    xf[r] = p.max(0.0);
                }
                for (&c, &p) in s2.iter().zip(&y) {
                    yf[c] = p.max(0.0);
                }
                let pay1: Vec<f64> = (0..m).map(|r| (0..n).map(|c| a[r][c] * yf[c]).sum()).collect();
                let pay2: Vec<f64> = (0..n).map(|c| (0..m).map(|r| b[r][c] * xf[r]).sum()).collect();
                let scale1 = 1.0 + u1.abs();
                let scale2 = 1.0 + u2.abs();
                if pay1.iter().any(|&p| p > u1 + SE_TOL * scale1) || pay2.iter().any(|&p| p > u2 + SE_TOL * scale2) {
                    continue;
                }
                let tie1 = (0..m).any(|r| !s1.contains(&r) && (pay1[r] - u1).abs() <= SE_TOL * scale1);
                let tie2 = (0..n).any(|c| !s2.contains(&c) && (pay2[c] - u2).abs() <= SE_TOL * scale2);
                let zero = x.iter().chain(&y).any(|&p| p.abs() <= SE_TOL);
                if tie1 || tie2 || zero {
                    out.degenerate = true;
                }
                let dup = out.equilibria.iter().any(|e| {
                    e.x.iter().zip(&xf).chain(e.y.iter().zip(&yf)).all(|(p, q)| (p - q).abs() <= 1e-7)
                });
                if !dup {
                    out.equilibria.push(BimatrixEquilibrium { x: xf, y: yf, payoff: [u1, u2] });
                }
            }
        }
    }
    Ok(out)
}

/// Solves `Σ_{c∈cols} m(r,c) p_c = u` for all `r ∈ rows`, `Σ p = 1`.
fn indifference(rows: &[usize], cols: &[usize], m: impl Fn(usize, usize) -> f64) -> Option<(Vec<f64>, f64)> {
    let k = cols.len();
    let mut mat = Mat::<f64>::zeros(k + 1, k + 1);
    let mut rhs = Mat::<f64>::zeros(k + 1, 1);
    for (i, &r) in rows.iter().enumerate() {
        for (j, &c) in cols.iter().enumerate() {
            mat[(i, j)] = m(r, c);
        }
        mat[(i, k)] = -1.0;
    }
    for j in 0..k {
        mat[(k, j)] = 1.0;
    }
    rhs[(k, 0)] = 1.0;
    let sv = mat.singular_values().ok()?;
    if sv[k] <= sv[0] * 1e-12 {
        return None;
    }
    let sol = mat.full_piv_lu().solve(&rhs);
    let p: Vec<f64> = (0..k).map(|j| sol[(j, 0)]).collect();
    let u = sol[(k, 0)];
    p.iter().all(|v| v.is_finite()).then_some((p, u))
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..1 << n)
        .filter(|mask| mask.count_ones() as usize == k)
        .map(|mask| (0..n).filter(|i| mask & (1 << i) != 0).collect())
        .collect()
}
