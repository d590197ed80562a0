//! Strictly interior starting point: uniform strategies plus values from two
//! slack-padded linear feasibility problems.

use crate::error::{Error, Result};
use crate::game::{uniform_strategy, JointStrategy, StochasticGame};
use crate::nlp::Nlp;
use crate::simplex::{phase_one_simplex, LpProblem};

/// Rows `Σ_y β P̄(y|x,a) v(y) − v(x) ≤ −r̄(x,a) − α` for player `i` with the
/// opponent fixed at `pi`, one row per `(x, a^i)` in state-major order.
pub fn value_lp(game: &StochasticGame, pi: &JointStrategy, player: usize, slack: f64) -> LpProblem {
    let n = game.num_states();
    let beta = game.discount();
    let mut lp = LpProblem::new(n);
    let opp = 1 - player;
    for x in 0..n {
        let [m1, m2] = game.actions(x);
        let (own, om) = if player == 0 { (m1, m2) } else { (m2, m1) };
        let succ = game.successors(x);
        for a in 0..own {
            let mut coef = vec![0.0; succ.len()];
            let mut rbar = 0.0;
            for b in 0..om {
                let w = pi.pi[opp][x][b];
                let (a1, a2) = if player == 0 { (a, b) } else { (b, a) };
                rbar += w * game.reward(x, a1, a2)[player];
                for (k, &p) in game.probs(x, a1, a2).iter().enumerate() {
                    coef[k] += beta * w * p;
                }
            }
            let mut row: Vec<(usize, f64)> = succ.iter().copied().zip(coef).filter(|e| e.1 != 0.0).collect();
            match row.iter_mut().find(|e| e.0 == x) {
                Some(e) => e.1 -= 1.0,
                None => row.push((x, -1.0)),
            }
            lp.push_row(row, -rbar - slack);
        }
    }
    lp
}

/// Packed strictly feasible point with uniform strategies.
pub fn initial_point(game: &StochasticGame, slack: f64) -> Result<Vec<f64>> {
    if !(slack > 0.0) || !slack.is_finite() {
        return Err(Error::Argument(format!("initial slack must be positive, got {slack}")));
    }
    let pi = uniform_strategy(game);
    let mut values: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for (i, v) in values.iter_mut().enumerate() {
        let lp = value_lp(game, &pi, i, slack);
        *v = phase_one_simplex(&lp)?.v;
    }
    let nlp = Nlp::new(game);
    let z = nlp.layout().pack(&crate::game::ValueVector { v: values }, &pi);
    let gmax = nlp.max_constraint(&z)?;
    if !(gmax < 0.0) {
        return Err(Error::Numeric(format!("initial point not strictly feasible: max g = {gmax:.3e}")));
    }
    Ok(z)
}
