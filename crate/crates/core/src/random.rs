//! Random test instances.

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::game::{GameBuilder, JointStrategy, StochasticGame};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomGameSpec {
    pub states: usize,
    pub max_actions: usize,
    /// Upper bound on `|U(x)|`; each state draws between 1 and this many.
    pub max_successors: usize,
    pub discount: f64,
    /// Rewards are uniform on `[-reward_scale, reward_scale]`.
    pub reward_scale: f64,
}

impl Default for RandomGameSpec {
    fn default() -> Self {
        Self { states: 4, max_actions: 3, max_successors: 3, discount: 0.75, reward_scale: 1.0 }
    }
}

/// A game with random action counts, sparse successor sets, dense
/// transition rows over them and uniform rewards.
pub fn random_game<R: Rng + ?Sized>(rng: &mut R, spec: &RandomGameSpec) -> Result<StochasticGame> {
    if spec.states == 0 || spec.max_actions == 0 || spec.max_successors == 0 {
        return Err(Error::Argument("random game needs states, actions and successors".into()));
    }
    let n = spec.states;
    let actions: Vec<[usize; 2]> = (0..n)
        .map(|_| [rng.random_range(1..=spec.max_actions), rng.random_range(1..=spec.max_actions)])
        .collect();
    let successors: Vec<Vec<usize>> = (0..n)
        .map(|_| {
            let k = rng.random_range(1..=spec.max_successors.min(n));
            let mut s = sample(rng, n, k).into_vec();
            s.sort_unstable();
            s
        })
        .collect();
    let mut b = GameBuilder::new(spec.discount, actions.clone(), successors.clone())?;
    for x in 0..n {
        let [m1, m2] = actions[x];
        for a1 in 0..m1 {
            for a2 in 0..m2 {
                let w: Vec<f64> = (0..successors[x].len()).map(|_| rng.random::<f64>() + 0.05).collect();
                let sum: f64 = w.iter().sum();
                let p: Vec<f64> = w.iter().map(|v| v / sum).collect();
                b.transition_dense(x, a1, a2, &p)?;
                let r = [
                    spec.reward_scale * rng.random_range(-1.0..=1.0),
                    spec.reward_scale * rng.random_range(-1.0..=1.0),
                ];
                b.reward(x, a1, a2, r)?;
            }
        }
    }
    Ok(b.build())
}

/// Uniformly random interior strategies for `game`.
pub fn random_strategy<R: Rng + ?Sized>(rng: &mut R, game: &StochasticGame) -> JointStrategy {
    let draw = |rng: &mut R, m: usize| {
        let w: Vec<f64> = (0..m).map(|_| rng.random::<f64>() + 0.01).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|v| v / s).collect::<Vec<f64>>()
    };
    let mut pi: [Vec<Vec<f64>>; 2] = [Vec::new(), Vec::new()];
    for x in 0..game.num_states() {
        for (i, p) in pi.iter_mut().enumerate() {
            p.push(draw(rng, game.num_actions(x, i)));
        }
    }
    JointStrategy { pi }
}

/// Bimatrix game `(a, b)` played once in state 0, followed by a
/// zero-reward absorbing state 1.
pub fn bimatrix_game(a: &[Vec<f64>], b: &[Vec<f64>], discount: f64) -> Result<StochasticGame> {
    let m = a.len();
    let n = a.first().map_or(0, Vec::len);
    if m == 0 || n == 0 || b.len() != m || a.iter().chain(b).any(|r| r.len() != n) {
        return Err(Error::Dimension("payoff matrices must be nonempty and equally shaped".into()));
    }
    let mut g = GameBuilder::new(discount, vec![[m, n], [1, 1]], vec![vec![1], vec![1]])?;
    for a1 in 0..m {
        for a2 in 0..n {
            g.transition_dense(0, a1, a2, &[1.0])?;
            g.reward(0, a1, a2, [a[a1][a2], b[a1][a2]])?;
        }
    }
    g.transition_dense(1, 0, 0, &[1.0])?;
    Ok(g.build())
}

/// Random `m × n` payoff pair with entries uniform on `[-1, 1]`.
pub fn random_bimatrix<R: Rng + ?Sized>(rng: &mut R, m: usize, n: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut draw = || (0..m).map(|_| (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect()).collect();
    let a = draw();
    let b = draw();
    (a, b)
}
