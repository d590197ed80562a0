//! Phase one of the revised simplex method for `A v ≤ b` with free `v`.
//!
//! The auxiliary problem is `min x₀ s.t. A v − x₀·1 ≤ b, x₀ ≥ 0`. Slack
//! variables are kept implicit: a basis is described by the set of tight rows
//! `T` (nonbasic slacks) and the basic structural columns `B`, with
//! `|T| = |B|`. The basic solution comes from the square kernel
//! `A_ext[T, B] x_B = b_T`, refactored at every pivot. Entering and leaving
//! variables follow Bland's rule, so the method cannot cycle.

use faer::prelude::*;
use faer::Mat;

use crate::error::{Error, Result};

const PRICE_TOL: f64 = 1e-11;
const RATIO_TOL: f64 = 1e-12;
const FEAS_TOL: f64 = 1e-9;

/// Inequality system `A v ≤ b` over free variables. `cost` is carried for
/// completeness but phase one ignores it.
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub num_vars: usize,
    /// Sparse rows of `A` as `(column, value)` pairs.
    pub rows: Vec<Vec<(usize, f64)>>,
    pub rhs: Vec<f64>,
    pub cost: Vec<f64>,
}

impl LpProblem {
    pub fn new(num_vars: usize) -> Self {
        Self { num_vars, rows: Vec::new(), rhs: Vec::new(), cost: vec![0.0; num_vars] }
    }

    pub fn push_row(&mut self, row: Vec<(usize, f64)>, rhs: f64) {
        self.rows.push(row);
        self.rhs.push(rhs);
    }

    /// `b_r − A_r v` for every row.
    pub fn slacks(&self, v: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .zip(&self.rhs)
            .map(|(row, &b)| b - row.iter().map(|&(j, a)| a * v[j]).sum::<f64>())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseOneResult {
    pub v: Vec<f64>,
    pub pivots: usize,
}

/// Finds a basic feasible solution of `lp` or reports infeasibility.
pub fn phase_one_simplex(lp: &LpProblem) -> Result<PhaseOneResult> {
    let n = lp.num_vars;
    let m = lp.rows.len();
    if lp.rhs.len() != m {
        return Err(Error::Dimension("row count and rhs length differ".into()));
    }
    for row in &lp.rows {
        if row.iter().any(|&(j, a)| j >= n || !a.is_finite()) {
            return Err(Error::Dimension("row entry out of range or non-finite".into()));
        }
    }
    let art = n;
    // coefficient of extended column `j` (n = artificial) in row r
    let coef = |r: usize, j: usize| -> f64 {
        if j == art {
            -1.0
        } else {
            lp.rows[r].iter().filter(|e| e.0 == j).map(|e| e.1).sum()
        }
    };

    let (worst, bmin) = lp
        .rhs
        .iter()
        .enumerate()
        .fold((usize::MAX, 0.0f64), |acc, (r, &b)| if b < acc.1 { (r, b) } else { acc });
    if worst == usize::MAX {
        return Ok(PhaseOneResult { v: vec![0.0; n], pivots: 0 });
    }

    let mut tight: Vec<usize> = vec![worst];
    let mut is_tight = vec![false; m];
    is_tight[worst] = true;
    let mut basic: Vec<usize> = vec![art];
    let mut in_basis = vec![false; n + 1];
    in_basis[art] = true;
    let mut pivots = 1;
    let scale = 1.0 + bmin.abs();
    let max_pivots = 50 * (n + m + 10);

    loop {
        let k = tight.len();
        let mut bpos = vec![usize::MAX; n + 1];
        for (p, &j) in basic.iter().enumerate() {
            bpos[j] = p;
        }
        let mut kmat = Mat::<f64>::zeros(k, k);
        for (a, &r) in tight.iter().enumerate() {
            for &(j, c) in &lp.rows[r] {
                if bpos[j] != usize::MAX {
                    kmat[(a, bpos[j])] += c;
                }
            }
            if bpos[art] != usize::MAX {
                kmat[(a, bpos[art])] = -1.0;
            }
        }
        let lu = kmat.partial_piv_lu();
        let rhs = Mat::<f64>::from_fn(k, 1, |a, _| lp.rhs[tight[a]]);
        let xb_m = lu.solve(&rhs);
        let xb: Vec<f64> = (0..k).map(|a| xb_m[(a, 0)]).collect();
        if xb.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("singular simplex kernel".into()));
        }
        let art_pos = basic.iter().position(|&j| j == art);
        let x0 = art_pos.map_or(0.0, |p| xb[p]);
        if art_pos.is_none() || x0 <= FEAS_TOL * 1e-3 * scale {
            let mut v = vec![0.0; n];
            for (p, &j) in basic.iter().enumerate() {
                if j != art {
                    v[j] = xb[p];
                }
            }
            return Ok(PhaseOneResult { v, pivots });
        }
        if pivots > max_pivots {
            return Err(Error::Numeric("phase one exceeded pivot limit".into()));
        }

        // duals: Kᵀ y = e_art
        let cb = Mat::<f64>::from_fn(k, 1, |a, _| if basic[a] == art { 1.0 } else { 0.0 });
        let ym = lu.solve_transpose(&cb);
        let y: Vec<f64> = (0..k).map(|a| ym[(a, 0)]).collect();
        let mut yta = vec![0.0; n];
        for (a, &r) in tight.iter().enumerate() {
            for &(j, c) in &lp.rows[r] {
                yta[j] += y[a] * c;
            }
        }

        // Bland: structurals first (by index), then slacks (by row)
        let mut entering: Option<Entering> = None;
        for j in 0..n {
            if in_basis[j] {
                continue;
            }
            let d = -yta[j];
            if d.abs() > PRICE_TOL {
                entering = Some(Entering::Structural { j, dir: -d.signum() });
                break;
            }
        }
        if entering.is_none() {
            let mut best: Option<(usize, usize)> = None;
            for (a, &r) in tight.iter().enumerate() {
                if y[a] > PRICE_TOL && best.is_none_or(|(_, br)| r < br) {
                    best = Some((a, r));
                }
            }
            entering = best.map(|(pos, _)| Entering::Slack { pos });
        }
        let Some(entering) = entering else {
            return Err(Error::LpInfeasible(x0));
        };

        // basic direction per unit step
        let colrhs = match entering {
            Entering::Structural { j, dir } => Mat::<f64>::from_fn(k, 1, |a, _| -dir * coef(tight[a], j)),
            Entering::Slack { pos } => Mat::<f64>::from_fn(k, 1, |a, _| if a == pos { -1.0 } else { 0.0 }),
        };
        let dxm = lu.solve(&colrhs);
        let dx: Vec<f64> = (0..k).map(|a| dxm[(a, 0)]).collect();

        // ratio test; leaving candidates ordered by Bland index
        let mut best: Option<(f64, usize, Leaving)> = None;
        let consider = |ratio: f64, idx: usize, leave: Leaving, best: &mut Option<(f64, usize, Leaving)>| {
            let better = match best {
                None => true,
                Some((br, bi, _)) => ratio < *br - RATIO_TOL || (ratio <= *br + RATIO_TOL && idx < *bi),
            };
            if better {
                *best = Some((ratio, idx, leave));
            }
        };
        if let Some(p) = art_pos {
            if dx[p] < -RATIO_TOL {
                consider((xb[p] / -dx[p]).max(0.0), art, Leaving::Artificial { pos: p }, &mut best);
            }
        }
        for r in 0..m {
            if is_tight[r] {
                continue;
            }
            let mut ax = 0.0;
            let mut dax = 0.0;
            for &(j, c) in &lp.rows[r] {
                let p = bpos[j];
                if p != usize::MAX {
                    ax += c * xb[p];
                    dax += c * dx[p];
                }
            }
            if let Some(p) = art_pos {
                ax -= xb[p];
                dax -= dx[p];
            }
            if let Entering::Structural { j, dir } = entering {
                dax += dir * coef(r, j);
            }
            let s = lp.rhs[r] - ax;
            if dax > RATIO_TOL {
                consider((s.max(0.0)) / dax, n + 1 + r, Leaving::Slack { row: r }, &mut best);
            }
        }
        let Some((_, _, leaving)) = best else {
            return Err(Error::Numeric("phase one unbounded direction".into()));
        };

        match (entering, leaving) {
            (Entering::Structural { j, .. }, Leaving::Slack { row }) => {
                basic.push(j);
                in_basis[j] = true;
                tight.push(row);
                is_tight[row] = true;
            }
            (Entering::Structural { j, .. }, Leaving::Artificial { pos }) => {
                basic[pos] = j;
                in_basis[j] = true;
                in_basis[art] = false;
            }
            (Entering::Slack { pos }, Leaving::Slack { row }) => {
                is_tight[tight[pos]] = false;
                tight[pos] = row;
                is_tight[row] = true;
            }
            (Entering::Slack { pos: tpos }, Leaving::Artificial { pos }) => {
                is_tight[tight[tpos]] = false;
                tight.remove(tpos);
                basic.remove(pos);
                in_basis[art] = false;
            }
        }
        pivots += 1;
    }
}

#[derive(Debug, Clone, Copy)]
enum Entering {
    Structural { j: usize, dir: f64 },
    Slack { pos: usize },
}

#[derive(Debug, Clone, Copy)]
enum Leaving {
    Artificial { pos: usize },
    Slack { row: usize },
}
