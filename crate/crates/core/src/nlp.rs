//! The nonlinear program whose zero-objective feasible points are the Nash
//! equilibria of a stochastic game.
//!
//! Packed variables are `v¹`, `v²` (one entry per state) followed by the
//! reduced strategy blocks of player 1 and then player 2. At each state the
//! highest-indexed action is eliminated: its probability is one minus the sum
//! of the retained entries.
//!
//! Constraints `g_j ≤ 0`, in order:
//! 1. value constraints `h₁(x,a¹)` for every state and player-1 action,
//! 2. value constraints `h₂(x,a²)`,
//! 3. per player and state with `m ≥ 2`: `-π(x,ā)` for each retained action,
//!    then `Σ_ā π(x,ā) - 1`.
//!
//! The value constraint of action `a < m-1` pairs with the non-negativity
//! constraint of `a`; the eliminated action pairs with the sum constraint.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{JointStrategy, StochasticGame, ValueVector};
use crate::sparse::CscMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    Value { player: usize, state: usize, action: usize },
    NonNeg { player: usize, state: usize, action: usize },
    Sum { player: usize, state: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemCensus {
    pub states: usize,
    pub paper_variables: usize,
    pub paper_constraints: usize,
    pub variables: usize,
    pub constraints: usize,
}

/// Index bookkeeping for the packed variable and constraint vectors.
#[derive(Debug, Clone)]
pub struct Layout {
    ns: usize,
    m: Vec<[usize; 2]>,
    pi_off: [Vec<usize>; 2],
    nvar: usize,
    val_off: [Vec<usize>; 2],
    prob_off: [Vec<usize>; 2],
    ncon: usize,
}

impl Layout {
    pub fn new(game: &StochasticGame) -> Self {
        let ns = game.num_states();
        let m: Vec<[usize; 2]> = (0..ns).map(|x| game.actions(x)).collect();
        let mut pos = 2 * ns;
        let mut pi_off = [Vec::with_capacity(ns), Vec::with_capacity(ns)];
        for i in 0..2 {
            for x in 0..ns {
                pi_off[i].push(pos);
                pos += m[x][i] - 1;
            }
        }
        let nvar = pos;
        let mut c = 0;
        let mut val_off = [Vec::with_capacity(ns), Vec::with_capacity(ns)];
        for i in 0..2 {
            for x in 0..ns {
                val_off[i].push(c);
                c += m[x][i];
            }
        }
        let mut prob_off = [Vec::with_capacity(ns), Vec::with_capacity(ns)];
        for i in 0..2 {
            for x in 0..ns {
                prob_off[i].push(c);
                if m[x][i] > 1 {
                    c += m[x][i];
                }
            }
        }
        Self { ns, m, pi_off, nvar, val_off, prob_off, ncon: c }
    }

    pub fn num_states(&self) -> usize {
        self.ns
    }

    pub fn num_vars(&self) -> usize {
        self.nvar
    }

    pub fn num_constraints(&self) -> usize {
        self.ncon
    }

    pub fn actions(&self, x: usize) -> [usize; 2] {
        self.m[x]
    }

    /// Packed index of `v^i(x)`.
    pub fn v_index(&self, player: usize, x: usize) -> usize {
        player * self.ns + x
    }

    /// Packed index of the first retained probability of player `i` at `x`.
    pub fn pi_start(&self, player: usize, x: usize) -> usize {
        self.pi_off[player][x]
    }

    /// Index of the value constraint `h_i(x,a)`.
    pub fn value_constraint(&self, player: usize, x: usize, a: usize) -> usize {
        self.val_off[player][x] + a
    }

    /// Index of the first probability constraint of `(player, x)`; the block
    /// has length `m` when `m ≥ 2` and is empty otherwise.
    pub fn prob_block(&self, player: usize, x: usize) -> usize {
        self.prob_off[player][x]
    }

    /// Probability constraint paired with the value constraint `h_i(x,a)`.
    pub fn partner(&self, player: usize, x: usize, a: usize) -> Option<usize> {
        let m = self.m[x][player];
        (m > 1).then(|| self.prob_off[player][x] + a)
    }

    pub fn value_constraints_end(&self) -> usize {
        self.prob_off[0].first().copied().unwrap_or(0)
    }

    pub fn kind(&self, j: usize) -> ConstraintKind {
        assert!(j < self.ncon);
        if j < self.value_constraints_end() {
            let player = usize::from(j >= self.val_off[1][0]);
            let x = self.val_off[player].partition_point(|&o| o <= j) - 1;
            return ConstraintKind::Value { player, state: x, action: j - self.val_off[player][x] };
        }
        let player = usize::from(self.ns > 0 && j >= self.prob_off[1][0]);
        let x = self.prob_off[player].partition_point(|&o| o <= j) - 1;
        let k = j - self.prob_off[player][x];
        if k + 1 == self.m[x][player] {
            ConstraintKind::Sum { player, state: x }
        } else {
            ConstraintKind::NonNeg { player, state: x, action: k }
        }
    }

    /// Writes the full probability vector of player `i` at `x` into `out`.
    pub fn full_pi(&self, z: &[f64], player: usize, x: usize, out: &mut Vec<f64>) {
        let m = self.m[x][player];
        let s = self.pi_off[player][x];
        out.clear();
        out.extend_from_slice(&z[s..s + m - 1]);
        let rest: f64 = out.iter().sum();
        out.push(1.0 - rest);
    }

    /// Full direction block: the eliminated entry absorbs minus the sum.
    pub fn full_dir(&self, s: &[f64], player: usize, x: usize, out: &mut Vec<f64>) {
        let m = self.m[x][player];
        let st = self.pi_off[player][x];
        out.clear();
        out.extend_from_slice(&s[st..st + m - 1]);
        let rest: f64 = out.iter().sum();
        out.push(-rest);
    }

    pub fn pack(&self, v: &ValueVector, pi: &JointStrategy) -> Vec<f64> {
        let mut z = vec![0.0; self.nvar];
        for i in 0..2 {
            z[i * self.ns..(i + 1) * self.ns].copy_from_slice(&v.v[i]);
            for x in 0..self.ns {
                let s = self.pi_off[i][x];
                let m = self.m[x][i];
                z[s..s + m - 1].copy_from_slice(&pi.pi[i][x][..m - 1]);
            }
        }
        z
    }

    pub fn unpack(&self, z: &[f64]) -> (ValueVector, JointStrategy) {
        let v = ValueVector {
            v: [z[..self.ns].to_vec(), z[self.ns..2 * self.ns].to_vec()],
        };
        let mut buf = Vec::new();
        let mut pi: [Vec<Vec<f64>>; 2] = [Vec::with_capacity(self.ns), Vec::with_capacity(self.ns)];
        for i in 0..2 {
            for x in 0..self.ns {
                self.full_pi(z, i, x, &mut buf);
                pi[i].push(buf.clone());
            }
        }
        (v, JointStrategy { pi })
    }

    pub fn census(&self) -> ProblemCensus {
        let total: usize = self.m.iter().map(|a| a[0] + a[1]).sum();
        ProblemCensus {
            states: self.ns,
            paper_variables: 2 * self.ns + total,
            paper_constraints: 2 * total,
            variables: self.nvar,
            constraints: self.ncon,
        }
    }
}

/// Census of a game under both counting conventions.
pub fn census(game: &StochasticGame) -> ProblemCensus {
    Layout::new(game).census()
}

/// The optimization problem bound to one game.
#[derive(Debug, Clone)]
pub struct Nlp<'g> {
    game: &'g StochasticGame,
    layout: Layout,
    q_off: Vec<usize>,
    vrows: Vec<Vec<usize>>,
    succ_pos: Vec<Vec<usize>>,
    self_pos: Vec<usize>,
    g_col_ptr: Vec<usize>,
    g_row_idx: Vec<usize>,
}

impl<'g> Nlp<'g> {
    pub fn new(game: &'g StochasticGame) -> Self {
        let layout = Layout::new(game);
        let ns = game.num_states();
        let mut q_off = Vec::with_capacity(ns + 1);
        let mut acc = 0;
        let mut vrows = Vec::with_capacity(ns);
        let mut succ_pos = Vec::with_capacity(ns);
        let mut self_pos = Vec::with_capacity(ns);
        for x in 0..ns {
            q_off.push(acc);
            let [m1, m2] = game.actions(x);
            acc += 2 * m1 * m2;
            let mut rows: Vec<usize> = game.successors(x).to_vec();
            rows.push(x);
            rows.sort_unstable();
            rows.dedup();
            succ_pos.push(
                game.successors(x)
                    .iter()
                    .map(|y| rows.binary_search(y).unwrap())
                    .collect::<Vec<_>>(),
            );
            self_pos.push(rows.binary_search(&x).unwrap());
            vrows.push(rows);
        }
        q_off.push(acc);

        let mut col_ptr = vec![0];
        let mut row_idx = Vec::new();
        for i in 0..2 {
            let o = 1 - i;
            for x in 0..ns {
                for _a in 0..layout.m[x][i] {
                    row_idx.extend(vrows[x].iter().map(|&y| layout.v_index(i, y)));
                    let s = layout.pi_start(o, x);
                    row_idx.extend(s..s + layout.m[x][o] - 1);
                    col_ptr.push(row_idx.len());
                }
            }
        }
        for i in 0..2 {
            for x in 0..ns {
                let m = layout.m[x][i];
                if m < 2 {
                    continue;
                }
                let s = layout.pi_start(i, x);
                for a in 0..m - 1 {
                    row_idx.push(s + a);
                    col_ptr.push(row_idx.len());
                }
                row_idx.extend(s..s + m - 1);
                col_ptr.push(row_idx.len());
            }
        }
        debug_assert_eq!(col_ptr.len(), layout.ncon + 1);
        Self { game, layout, q_off, vrows, succ_pos, self_pos, g_col_ptr: col_ptr, g_row_idx: row_idx }
    }

    pub fn game(&self) -> &'g StochasticGame {
        self.game
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn num_vars(&self) -> usize {
        self.layout.nvar
    }

    pub fn num_constraints(&self) -> usize {
        self.layout.ncon
    }

    fn check(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.layout.nvar {
            return Err(Error::Dimension(format!("point has {} entries, expected {}", z.len(), self.layout.nvar)));
        }
        Ok(())
    }

    /// `Q^i(x,a¹,a²) = r^i + β Σ_y p(y|x,a) v^i(y)` for all states, both players.
    fn q_matrices(&self, z: &[f64]) -> Vec<f64> {
        let g = self.game;
        let beta = g.discount();
        let ns = self.layout.ns;
        let mut q = vec![0.0; *self.q_off.last().unwrap()];
        for x in 0..ns {
            let [m1, m2] = g.actions(x);
            let succ = g.successors(x);
            let base = self.q_off[x];
            for a1 in 0..m1 {
                for a2 in 0..m2 {
                    let p = g.probs(x, a1, a2);
                    let r = g.reward(x, a1, a2);
                    let (mut c0, mut c1) = (0.0, 0.0);
                    for (&pk, &y) in p.iter().zip(succ) {
                        c0 += pk * z[y];
                        c1 += pk * z[ns + y];
                    }
                    let k = a1 * m2 + a2;
                    q[base + k] = r[0] + beta * c0;
                    q[base + m1 * m2 + k] = r[1] + beta * c1;
                }
            }
        }
        q
    }

    /// Objective in its defining form `Σ_i 1ᵀ[v^i − r^i(π) − βP(π)v^i]`.
    pub fn objective(&self, z: &[f64]) -> Result<f64> {
        self.check(z)?;
        let g = self.game;
        let beta = g.discount();
        let ns = self.layout.ns;
        let (mut p1, mut p2) = (Vec::new(), Vec::new());
        let mut f = 0.0;
        for x in 0..ns {
            self.layout.full_pi(z, 0, x, &mut p1);
            self.layout.full_pi(z, 1, x, &mut p2);
            let [m1, m2] = g.actions(x);
            let succ = g.successors(x);
            let (mut r0, mut r1, mut pv0, mut pv1) = (0.0, 0.0, 0.0, 0.0);
            for a1 in 0..m1 {
                for a2 in 0..m2 {
                    let w = p1[a1] * p2[a2];
                    let r = g.reward(x, a1, a2);
                    r0 += w * r[0];
                    r1 += w * r[1];
                    for (&pk, &y) in g.probs(x, a1, a2).iter().zip(succ) {
                        pv0 += w * pk * z[y];
                        pv1 += w * pk * z[ns + y];
                    }
                }
            }
            f += z[x] - r0 - beta * pv0 + z[ns + x] - r1 - beta * pv1;
        }
        Ok(f)
    }

    /// Objective as `Σ −π^i(x,a) h_i(x,a)` over all value constraints.
    pub fn objective_product_sum(&self, z: &[f64]) -> Result<f64> {
        let h = self.constraints(z)?;
        let mut buf = Vec::new();
        let mut f = 0.0;
        for i in 0..2 {
            for x in 0..self.layout.ns {
                self.layout.full_pi(z, i, x, &mut buf);
                for (a, &p) in buf.iter().enumerate() {
                    f -= p * h[self.layout.value_constraint(i, x, a)];
                }
            }
        }
        Ok(f)
    }

    /// All constraint values `g_j`.
    pub fn constraints(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check(z)?;
        let q = self.q_matrices(z);
        Ok(self.constraints_from_q(z, &q))
    }

    fn constraints_from_q(&self, z: &[f64], q: &[f64]) -> Vec<f64> {
        let l = &self.layout;
        let ns = l.ns;
        let mut out = vec![0.0; l.ncon];
        let (mut p1, mut p2) = (Vec::new(), Vec::new());
        for x in 0..ns {
            let [m1, m2] = l.m[x];
            l.full_pi(z, 0, x, &mut p1);
            l.full_pi(z, 1, x, &mut p2);
            let base = self.q_off[x];
            let (q0, q1) = (&q[base..base + m1 * m2], &q[base + m1 * m2..base + 2 * m1 * m2]);
            for a1 in 0..m1 {
                let s: f64 = (0..m2).map(|a2| p2[a2] * q0[a1 * m2 + a2]).sum();
                out[l.value_constraint(0, x, a1)] = s - z[x];
            }
            for a2 in 0..m2 {
                let s: f64 = (0..m1).map(|a1| p1[a1] * q1[a1 * m2 + a2]).sum();
                out[l.value_constraint(1, x, a2)] = s - z[ns + x];
            }
        }
        for i in 0..2 {
            for x in 0..ns {
                let m = l.m[x][i];
                if m < 2 {
                    continue;
                }
                let s = l.pi_start(i, x);
                let c = l.prob_block(i, x);
                let mut sum = 0.0;
                for a in 0..m - 1 {
                    out[c + a] = -z[s + a];
                    sum += z[s + a];
                }
                out[c + m - 1] = sum - 1.0;
            }
        }
        out
    }

    pub fn max_constraint(&self, z: &[f64]) -> Result<f64> {
        Ok(self.constraints(z)?.into_iter().fold(f64::NEG_INFINITY, f64::max))
    }

    /// Analytic `∇f` in packed coordinates.
    pub fn objective_gradient(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check(z)?;
        let q = self.q_matrices(z);
        Ok(self.objective_gradient_from_q(z, &q))
    }

    fn objective_gradient_from_q(&self, z: &[f64], q: &[f64]) -> Vec<f64> {
        let g = self.game;
        let l = &self.layout;
        let beta = g.discount();
        let ns = l.ns;
        let mut grad = vec![0.0; l.nvar];
        grad[..2 * ns].fill(1.0);
        let (mut p1, mut p2) = (Vec::new(), Vec::new());
        for x in 0..ns {
            let [m1, m2] = l.m[x];
            l.full_pi(z, 0, x, &mut p1);
            l.full_pi(z, 1, x, &mut p2);
            let succ = g.successors(x);
            for a1 in 0..m1 {
                for a2 in 0..m2 {
                    let w = beta * p1[a1] * p2[a2];
                    if w == 0.0 {
                        continue;
                    }
                    for (&pk, &y) in g.probs(x, a1, a2).iter().zip(succ) {
                        grad[y] -= w * pk;
                        grad[ns + y] -= w * pk;
                    }
                }
            }
            let base = self.q_off[x];
            let qs = |a1: usize, a2: usize| q[base + a1 * m2 + a2] + q[base + m1 * m2 + a1 * m2 + a2];
            if m1 > 1 {
                let full: Vec<f64> = (0..m1).map(|a1| -(0..m2).map(|a2| qs(a1, a2) * p2[a2]).sum::<f64>()).collect();
                let s = l.pi_start(0, x);
                for a in 0..m1 - 1 {
                    grad[s + a] = full[a] - full[m1 - 1];
                }
            }
            if m2 > 1 {
                let full: Vec<f64> = (0..m2).map(|a2| -(0..m1).map(|a1| qs(a1, a2) * p1[a1]).sum::<f64>()).collect();
                let s = l.pi_start(1, x);
                for a in 0..m2 - 1 {
                    grad[s + a] = full[a] - full[m2 - 1];
                }
            }
        }
        grad
    }

    /// Sparsity pattern of `G` with zero values; fixed by the game alone.
    pub fn gradient_pattern(&self) -> CscMatrix {
        CscMatrix {
            nrows: self.layout.nvar,
            ncols: self.layout.ncon,
            col_ptr: self.g_col_ptr.clone(),
            row_idx: self.g_row_idx.clone(),
            values: vec![0.0; self.g_row_idx.len()],
        }
    }

    /// `G` with column `j` equal to `∇g_j`.
    pub fn constraint_gradients(&self, z: &[f64]) -> Result<CscMatrix> {
        self.check(z)?;
        let q = self.q_matrices(z);
        let mut gm = self.gradient_pattern();
        self.fill_gradients(z, &q, &mut gm.values);
        Ok(gm)
    }

    fn fill_gradients(&self, z: &[f64], q: &[f64], vals: &mut [f64]) {
        let g = self.game;
        let l = &self.layout;
        let beta = g.discount();
        let ns = l.ns;
        let (mut p1, mut p2) = (Vec::new(), Vec::new());
        for x in 0..ns {
            let [m1, m2] = l.m[x];
            l.full_pi(z, 0, x, &mut p1);
            l.full_pi(z, 1, x, &mut p2);
            let nv = self.vrows[x].len();
            let base = self.q_off[x];
            for i in 0..2 {
                let (own, opp_m) = if i == 0 { (m1, m2) } else { (m2, m1) };
                let opp = if i == 0 { &p2 } else { &p1 };
                let qi = &q[base + i * m1 * m2..base + (i + 1) * m1 * m2];
                for a in 0..own {
                    let start = self.g_col_ptr[l.value_constraint(i, x, a)];
                    let col = &mut vals[start..start + nv + opp_m - 1];
                    col.fill(0.0);
                    for b in 0..opp_m {
                        let (a1, a2) = if i == 0 { (a, b) } else { (b, a) };
                        let w = beta * opp[b];
                        if w != 0.0 {
                            for (k, &pk) in g.probs(x, a1, a2).iter().enumerate() {
                                col[self.succ_pos[x][k]] += w * pk;
                            }
                        }
                    }
                    col[self.self_pos[x]] -= 1.0;
                    let qa = |b: usize| if i == 0 { qi[a * m2 + b] } else { qi[b * m2 + a] };
                    let last = qa(opp_m - 1);
                    for b in 0..opp_m - 1 {
                        col[nv + b] = qa(b) - last;
                    }
                }
            }
        }
        for i in 0..2 {
            for x in 0..ns {
                let m = l.m[x][i];
                if m < 2 {
                    continue;
                }
                let c = l.prob_block(i, x);
                for a in 0..m - 1 {
                    vals[self.g_col_ptr[c + a]] = -1.0;
                }
                let st = self.g_col_ptr[c + m - 1];
                vals[st..st + m - 1].fill(1.0);
            }
        }
    }

    /// Multipliers with `∇f = Gλ′`: `−π` at each value constraint and the
    /// paired value-constraint value `h` at its probability constraint.
    pub fn lambda_prime(&self, z: &[f64]) -> Result<Vec<f64>> {
        let g = self.constraints(z)?;
        let l = &self.layout;
        let mut lam = vec![0.0; l.ncon];
        let mut buf = Vec::new();
        for i in 0..2 {
            for x in 0..l.ns {
                l.full_pi(z, i, x, &mut buf);
                for (a, &p) in buf.iter().enumerate() {
                    let j = l.value_constraint(i, x, a);
                    lam[j] = -p;
                    if let Some(k) = l.partner(i, x, a) {
                        lam[k] = g[j];
                    }
                }
            }
        }
        Ok(lam)
    }

    /// Everything the solver needs at one point, sharing the `Q` computation.
    pub fn evaluate(&self, z: &[f64]) -> Result<Evaluation> {
        self.check(z)?;
        let q = self.q_matrices(z);
        let g = self.constraints_from_q(z, &q);
        let grad = self.objective_gradient_from_q(z, &q);
        let mut gm = self.gradient_pattern();
        self.fill_gradients(z, &q, &mut gm.values);
        let f = self.objective(z)?;
        Ok(Evaluation { f, grad, g, gmat: gm })
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub f: f64,
    pub grad: Vec<f64>,
    pub g: Vec<f64>,
    pub gmat: CscMatrix,
}
