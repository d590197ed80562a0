//! Step length along a feasible direction.
//!
//! Along `z + tS` the objective is a cubic in `t` and each value constraint a
//! quadratic, so the admissible steps form a finite union of intervals. The
//! step is chosen among the cubic's minimizer (or the admissible points
//! nearest to it) and the largest admissible step, subject to an Armijo-type
//! decrease condition, with geometric backtracking as a fallback.

use crate::error::{Error, Result};
use crate::nlp::{ConstraintKind, Nlp};

/// Sorted union of disjoint closed intervals; endpoints may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSet {
    parts: Vec<(f64, f64)>,
}

impl IntervalSet {
    pub fn empty() -> Self {
        Self { parts: Vec::new() }
    }

    pub fn real_line() -> Self {
        Self { parts: vec![(f64::NEG_INFINITY, f64::INFINITY)] }
    }

    pub fn interval(lo: f64, hi: f64) -> Self {
        if lo <= hi {
            Self { parts: vec![(lo, hi)] }
        } else {
            Self::empty()
        }
    }

    /// Canonicalizes arbitrary intervals: drops empty ones, sorts, merges overlaps.
    pub fn from_parts(mut parts: Vec<(f64, f64)>) -> Self {
        parts.retain(|p| p.0 <= p.1);
        parts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(parts.len());
        for p in parts {
            match out.last_mut() {
                Some(last) if p.0 <= last.1 => last.1 = last.1.max(p.1),
                _ => out.push(p),
            }
        }
        Self { parts: out }
    }

    pub fn parts(&self) -> &[(f64, f64)] {
        &self.parts
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn contains(&self, t: f64) -> bool {
        self.parts.iter().any(|&(a, b)| a <= t && t <= b)
    }

    pub fn max(&self) -> Option<f64> {
        self.parts.last().map(|p| p.1)
    }

    pub fn min(&self) -> Option<f64> {
        self.parts.first().map(|p| p.0)
    }

    pub fn intersect(&self, other: &Self) -> Self {
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        while i < self.parts.len() && j < other.parts.len() {
            let (a0, a1) = self.parts[i];
            let (b0, b1) = other.parts[j];
            let lo = a0.max(b0);
            let hi = a1.min(b1);
            if lo <= hi {
                out.push((lo, hi));
            }
            if a1 < b1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        Self::from_parts(out)
    }

    pub fn union(&self, other: &Self) -> Self {
        let mut parts = self.parts.clone();
        parts.extend_from_slice(&other.parts);
        Self::from_parts(parts)
    }

    /// Largest member `≤ t`, if any.
    pub fn floor(&self, t: f64) -> Option<f64> {
        self.parts.iter().rev().find(|p| p.0 <= t).map(|p| p.1.min(t))
    }

    /// Smallest member `≥ t`, if any.
    pub fn ceil(&self, t: f64) -> Option<f64> {
        self.parts.iter().find(|p| p.1 >= t).map(|p| p.0.max(t))
    }
}

/// `{x : b + c x + d x² ≤ 0}` by direct case analysis.
pub fn quadratic_feasible(b: f64, c: f64, d: f64) -> IntervalSet {
    if d == 0.0 {
        if c == 0.0 {
            return if b > 0.0 { IntervalSet::empty() } else { IntervalSet::real_line() };
        }
        return if c > 0.0 {
            IntervalSet::interval(f64::NEG_INFINITY, -b / c)
        } else {
            IntervalSet::interval(-b / c, f64::INFINITY)
        };
    }
    let disc = c * c - 4.0 * b * d;
    if disc < 0.0 {
        return if d >= 0.0 { IntervalSet::empty() } else { IntervalSet::real_line() };
    }
    let sq = disc.sqrt();
    // cancellation-free roots: x1 = (−c+√Δ)/(2d), x2 = (−c−√Δ)/(2d)
    let (x1, x2) = if c >= 0.0 {
        let q = -(c + sq) / 2.0;
        let x2 = q / d;
        (if q != 0.0 { b / q } else { x2 }, x2)
    } else {
        let q = (-c + sq) / 2.0;
        (q / d, b / q)
    };
    if d < 0.0 && x1 == x2 {
        // concave quadratic touching zero at a single point
        return IntervalSet::real_line();
    }
    if x2 <= x1 {
        IntervalSet::interval(x2, x1)
    } else {
        IntervalSet::from_parts(vec![(f64::NEG_INFINITY, x1), (x2, f64::INFINITY)])
    }
}

/// `f(z + tS) = d0 + d1 t + d2 t² + d3 t³`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicRestriction {
    pub d0: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

impl CubicRestriction {
    pub fn eval(&self, t: f64) -> f64 {
        self.d0 + t * (self.d1 + t * (self.d2 + t * self.d3))
    }

    pub fn derivative(&self, t: f64) -> f64 {
        self.d1 + t * (2.0 * self.d2 + 3.0 * self.d3 * t)
    }

    /// Positive stationary point with positive curvature, if any.
    pub fn local_minimizer(&self) -> Option<f64> {
        let (a, b, c) = (3.0 * self.d3, 2.0 * self.d2, self.d1);
        let scale = a.abs().max(b.abs()).max(c.abs());
        let roots: Vec<f64> = if a.abs() <= 1e-14 * scale {
            if b == 0.0 {
                vec![]
            } else {
                vec![-c / b]
            }
        } else {
            let disc = b * b - 4.0 * a * c;
            if disc < 0.0 {
                vec![]
            } else {
                let sgn = if b >= 0.0 { 1.0 } else { -1.0 };
                let q = -(b + sgn * disc.sqrt()) / 2.0;
                if q == 0.0 {
                    vec![0.0]
                } else {
                    vec![q / a, c / q]
                }
            }
        };
        roots
            .into_iter()
            .filter(|&t| t > 0.0 && t.is_finite() && 2.0 * self.d2 + 6.0 * self.d3 * t > 0.0)
            .fold(None, |acc: Option<f64>, t| Some(acc.map_or(t, |a| a.min(t))))
    }
}

/// Per-state products used by both the cubic and the constraint quadratics.
struct RayData {
    /// `Q^i(v₀)` and `βP·S_v^i` blocks per state: `[q0_p1, q0_p2, q1_p1, q1_p2]`.
    blocks: Vec<[Vec<f64>; 4]>,
}

fn ray_data(nlp: &Nlp<'_>, z: &[f64], s: &[f64]) -> RayData {
    let g = nlp.game();
    let ns = g.num_states();
    let beta = g.discount();
    let mut blocks = Vec::with_capacity(ns);
    for x in 0..ns {
        let [m1, m2] = g.actions(x);
        let succ = g.successors(x);
        let mut b: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; m1 * m2]);
        for a1 in 0..m1 {
            for a2 in 0..m2 {
                let k = a1 * m2 + a2;
                let r = g.reward(x, a1, a2);
                let (mut v0, mut v1, mut s0, mut s1) = (0.0, 0.0, 0.0, 0.0);
                for (&p, &y) in g.probs(x, a1, a2).iter().zip(succ) {
                    v0 += p * z[y];
                    v1 += p * z[ns + y];
                    s0 += p * s[y];
                    s1 += p * s[ns + y];
                }
                b[0][k] = r[0] + beta * v0;
                b[1][k] = r[1] + beta * v1;
                b[2][k] = beta * s0;
                b[3][k] = beta * s1;
            }
        }
        blocks.push(b);
    }
    RayData { blocks }
}

fn bilinear(p: &[f64], q: &[f64], m: &[f64], m2: usize) -> f64 {
    let mut acc = 0.0;
    for (a1, &pa) in p.iter().enumerate() {
        if pa == 0.0 {
            continue;
        }
        let row = &m[a1 * m2..(a1 + 1) * m2];
        acc += pa * row.iter().zip(q).map(|(x, y)| x * y).sum::<f64>();
    }
    acc
}

fn check_dims(nlp: &Nlp<'_>, z: &[f64], s: &[f64]) -> Result<()> {
    if z.len() != nlp.num_vars() || s.len() != nlp.num_vars() {
        return Err(Error::Dimension(format!(
            "point/direction lengths {}/{} vs {} variables",
            z.len(),
            s.len(),
            nlp.num_vars()
        )));
    }
    Ok(())
}

/// Coefficients of the objective along `z + tS`.
pub fn cubic_coeffs(nlp: &Nlp<'_>, z: &[f64], s: &[f64]) -> Result<CubicRestriction> {
    check_dims(nlp, z, s)?;
    let data = ray_data(nlp, z, s);
    Ok(cubic_from(nlp, z, s, &data))
}

fn cubic_from(nlp: &Nlp<'_>, z: &[f64], s: &[f64], data: &RayData) -> CubicRestriction {
    let l = nlp.layout();
    let ns = l.num_states();
    let mut c = CubicRestriction { d0: 0.0, d1: 0.0, d2: 0.0, d3: 0.0 };
    let (mut p1, mut p2, mut s1, mut s2) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for x in 0..ns {
        let [_, m2] = l.actions(x);
        l.full_pi(z, 0, x, &mut p1);
        l.full_pi(z, 1, x, &mut p2);
        l.full_dir(s, 0, x, &mut s1);
        l.full_dir(s, 1, x, &mut s2);
        for i in 0..2 {
            let q0 = &data.blocks[x][i];
            let q1 = &data.blocks[x][2 + i];
            c.d0 += z[i * ns + x] - bilinear(&p1, &p2, q0, m2);
            c.d1 += s[i * ns + x]
                - (bilinear(&s1, &p2, q0, m2) + bilinear(&p1, &s2, q0, m2) + bilinear(&p1, &p2, q1, m2));
            c.d2 -= bilinear(&s1, &s2, q0, m2) + bilinear(&s1, &p2, q1, m2) + bilinear(&p1, &s2, q1, m2);
            c.d3 -= bilinear(&s1, &s2, q1, m2);
        }
    }
    c
}

/// `(b, c, d)` with `g_j(z + tS) − δ g_j(z) = b + c t + d t²` for every constraint.
pub fn all_constraint_coeffs(nlp: &Nlp<'_>, z: &[f64], s: &[f64], delta: &[f64]) -> Result<Vec<(f64, f64, f64)>> {
    check_dims(nlp, z, s)?;
    if delta.len() != nlp.num_constraints() {
        return Err(Error::Dimension("delta length differs from constraint count".into()));
    }
    let data = ray_data(nlp, z, s);
    let g0 = nlp.constraints(z)?;
    Ok(coeffs_from(nlp, z, s, delta, &g0, &data))
}

/// Coefficients for a single constraint `j`.
pub fn constraint_coeffs(nlp: &Nlp<'_>, z: &[f64], s: &[f64], j: usize, delta: f64) -> Result<(f64, f64, f64)> {
    if j >= nlp.num_constraints() {
        return Err(Error::Argument(format!("constraint {j} out of range")));
    }
    let mut d = vec![1.0; nlp.num_constraints()];
    d[j] = delta;
    Ok(all_constraint_coeffs(nlp, z, s, &d)?[j])
}

fn coeffs_from(
    nlp: &Nlp<'_>,
    z: &[f64],
    s: &[f64],
    delta: &[f64],
    g0: &[f64],
    data: &RayData,
) -> Vec<(f64, f64, f64)> {
    let l = nlp.layout();
    let ns = l.num_states();
    let mut out = vec![(0.0, 0.0, 0.0); l.num_constraints()];
    let (mut p1, mut p2, mut s1, mut s2) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for x in 0..ns {
        let [m1, m2] = l.actions(x);
        l.full_pi(z, 0, x, &mut p1);
        l.full_pi(z, 1, x, &mut p2);
        l.full_dir(s, 0, x, &mut s1);
        l.full_dir(s, 1, x, &mut s2);
        let [q0a, q0b, q1a, q1b] = &data.blocks[x];
        for a1 in 0..m1 {
            let j = l.value_constraint(0, x, a1);
            let row0 = &q0a[a1 * m2..(a1 + 1) * m2];
            let row1 = &q1a[a1 * m2..(a1 + 1) * m2];
            let dot = |u: &[f64], w: &[f64]| u.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
            let c = dot(&p2, row1) + dot(&s2, row0) - s[x];
            let d = dot(&s2, row1);
            out[j] = ((1.0 - delta[j]) * g0[j], c, d);
        }
        for a2 in 0..m2 {
            let j = l.value_constraint(1, x, a2);
            let (mut c, mut d) = (0.0, 0.0);
            for a1 in 0..m1 {
                let k = a1 * m2 + a2;
                c += p1[a1] * q1b[k] + s1[a1] * q0b[k];
                d += s1[a1] * q1b[k];
            }
            out[j] = ((1.0 - delta[j]) * g0[j], c - s[ns + x], d);
        }
    }
    for j in l.value_constraints_end()..l.num_constraints() {
        let c = match l.kind(j) {
            ConstraintKind::NonNeg { player, state, action } => -s[l.pi_start(player, state) + action],
            ConstraintKind::Sum { player, state } => {
                let st = l.pi_start(player, state);
                s[st..st + l.actions(state)[player] - 1].iter().sum()
            }
            ConstraintKind::Value { .. } => unreachable!(),
        };
        out[j] = ((1.0 - delta[j]) * g0[j], c, 0.0);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepParams {
    pub delta0: f64,
    pub eta: f64,
    pub nu: f64,
    pub t_min: f64,
    pub t_cap: f64,
}

impl Default for StepParams {
    fn default() -> Self {
        Self { delta0: 0.9, eta: 0.1, nu: 2.0, t_min: 1e-14, t_cap: 1e6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    /// Accepted step; zero signals that no admissible decreasing step exists.
    pub t: f64,
    pub cubic: CubicRestriction,
    pub f_new: f64,
    pub max_feasible: f64,
    pub fallback: bool,
    /// Stationary point of the cubic with positive curvature, if any.
    pub minimizer: Option<f64>,
    /// Constraint whose admissible set ends first to the right of 0.
    pub limiting: Option<usize>,
    /// Value constraints with negative discriminant and nonnegative curvature.
    pub proposition_violations: usize,
}

/// `δ_j = δ₀` where `γ_j ≥ 0`, else 1.
pub fn deltas(gamma: &[f64], delta0: f64) -> Vec<f64> {
    gamma.iter().map(|&g| if g >= 0.0 { delta0 } else { 1.0 }).collect()
}

/// Picks the step along `s` from the strictly feasible point `z`.
pub fn optimal_step(
    nlp: &Nlp<'_>,
    z: &[f64],
    s: &[f64],
    gamma: &[f64],
    slope: f64,
    params: &StepParams,
) -> Result<StepResult> {
    check_dims(nlp, z, s)?;
    if gamma.len() != nlp.num_constraints() {
        return Err(Error::Dimension("multiplier length differs from constraint count".into()));
    }
    let g0 = nlp.constraints(z)?;
    if let Some(j) = g0.iter().position(|&v| !(v < 0.0)) {
        return Err(Error::Infeasible(format!("constraint {j} has g = {:e}", g0[j])));
    }
    let delta = deltas(gamma, params.delta0);
    let data = ray_data(nlp, z, s);
    let cubic = cubic_from(nlp, z, s, &data);
    let coeffs = coeffs_from(nlp, z, s, &delta, &g0, &data);

    let vend = nlp.layout().value_constraints_end();
    let mut proposition_violations = 0;
    let mut feasible = IntervalSet::interval(0.0, params.t_cap);
    let mut limiting = None;
    let mut first_end = f64::INFINITY;
    for (j, &(b, c, d)) in coeffs.iter().enumerate() {
        if j < vend && d != 0.0 && c * c - 4.0 * b * d < 0.0 && d >= 0.0 {
            proposition_violations += 1;
        }
        let set = quadratic_feasible(b, c, d);
        if let Some(&(_, hi)) = set.parts().iter().find(|p| p.0 <= 0.0 && 0.0 <= p.1) {
            if hi < first_end {
                first_end = hi;
                limiting = Some(j);
            }
        }
        feasible = feasible.intersect(&set);
        if feasible.is_empty() {
            break;
        }
    }
    let max_feasible = feasible.max().unwrap_or(0.0);
    let f0 = cubic.d0;
    let armijo = |t: f64, ft: f64| ft <= f0 + t * params.eta * slope;

    let mut candidates = Vec::new();
    let minimizer = cubic.local_minimizer();
    if let Some(tm) = minimizer {
        if feasible.contains(tm) {
            candidates.push(tm);
        } else {
            candidates.extend(feasible.floor(tm));
            candidates.extend(feasible.ceil(tm));
        }
    }
    candidates.extend(feasible.max());
    candidates.retain(|&t| t > params.t_min && t.is_finite());
    candidates.sort_by(|a, b| cubic.eval(*a).total_cmp(&cubic.eval(*b)));

    let mut fallback = false;
    let mut chosen = None;
    for &t in &candidates {
        if armijo(t, cubic.eval(t)) {
            if let Some(acc) = verify(nlp, z, s, t, &g0, &delta, f0, slope, params)? {
                chosen = Some(acc);
                break;
            }
        }
    }
    if chosen.is_none() {
        fallback = true;
        let mut t = 1.0;
        while t >= params.t_min {
            if feasible.contains(t) && armijo(t, cubic.eval(t)) {
                if let Some(acc) = verify(nlp, z, s, t, &g0, &delta, f0, slope, params)? {
                    chosen = Some(acc);
                    break;
                }
            }
            t /= params.nu;
        }
    }
    let (t, f_new) = chosen.unwrap_or((0.0, f0));
    Ok(StepResult { t, cubic, f_new, max_feasible, fallback, minimizer, limiting, proposition_violations })
}

/// Confirms a step on the true functions, shrinking slightly if rounding
/// breaks strict feasibility or the decrease condition.
#[allow(clippy::too_many_arguments)]
fn verify(
    nlp: &Nlp<'_>,
    z: &[f64],
    s: &[f64],
    t: f64,
    g0: &[f64],
    delta: &[f64],
    f0: f64,
    slope: f64,
    params: &StepParams,
) -> Result<Option<(f64, f64)>> {
    let mut t = t;
    for _ in 0..8 {
        if t < params.t_min {
            return Ok(None);
        }
        let zn: Vec<f64> = z.iter().zip(s).map(|(a, b)| a + t * b).collect();
        let gn = nlp.constraints(&zn)?;
        let fnew = nlp.objective(&zn)?;
        let ok_g = gn
            .iter()
            .zip(g0)
            .zip(delta)
            .all(|((&gn, &go), &dl)| gn < 0.0 && gn <= dl * go + 1e-12 * (1.0 + go.abs()));
        let ok_f = fnew <= f0 + t * params.eta * slope + 1e-13 * (1.0 + f0.abs()) && fnew <= f0;
        if ok_g && ok_f {
            return Ok(Some((t, fnew)));
        }
        t *= 0.999;
    }
    Ok(None)
}
