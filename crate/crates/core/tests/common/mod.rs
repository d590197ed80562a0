//! Oracles and fixtures shared by the integration tests. Everything here is
//! deliberately written against nalgebra and plain loops so that it shares
//! no numerical code with the library.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use sgnash_core::game::{GameBuilder, JointStrategy, StochasticGame, ValueVector};
use sgnash_core::nlp::Nlp;
use sgnash_core::random::{random_game, random_strategy, RandomGameSpec};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn small_spec() -> RandomGameSpec {
    RandomGameSpec { states: 5, max_actions: 3, max_successors: 3, discount: 0.75, reward_scale: 1.0 }
}

/// Five random games with at most ten states.
pub fn test_games(seed: u64) -> Vec<StochasticGame> {
    let mut r = rng(seed);
    (0..5)
        .map(|k| {
            let spec = RandomGameSpec { states: 2 + 2 * k, discount: 0.5 + 0.08 * k as f64, ..small_spec() };
            random_game(&mut r, &spec).unwrap()
        })
        .collect()
}

pub fn dense_p(game: &StochasticGame, pi: &JointStrategy) -> DMatrix<f64> {
    let n = game.num_states();
    let mut p = DMatrix::zeros(n, n);
    for x in 0..n {
        let [m1, m2] = game.actions(x);
        for a1 in 0..m1 {
            for a2 in 0..m2 {
                for (k, &y) in game.successors(x).iter().enumerate() {
                    p[(x, y)] += pi.pi[0][x][a1] * pi.pi[1][x][a2] * game.probs(x, a1, a2)[k];
                }
            }
        }
    }
    p
}

pub fn dense_r(game: &StochasticGame, pi: &JointStrategy, player: usize) -> DVector<f64> {
    let n = game.num_states();
    DVector::from_fn(n, |x, _| {
        let [m1, m2] = game.actions(x);
        let mut s = 0.0;
        for a1 in 0..m1 {
            for a2 in 0..m2 {
                s += pi.pi[0][x][a1] * pi.pi[1][x][a2] * game.reward(x, a1, a2)[player];
            }
        }
        s
    })
}

/// Iterative policy evaluation, run until successive iterates agree to 1e-13.
pub fn policy_evaluation(game: &StochasticGame, pi: &JointStrategy) -> [Vec<f64>; 2] {
    let p = dense_p(game, pi);
    let beta = game.discount();
    let mut out = [Vec::new(), Vec::new()];
    for (i, o) in out.iter_mut().enumerate() {
        let r = dense_r(game, pi, i);
        let mut v = DVector::zeros(game.num_states());
        loop {
            let next = &r + beta * &p * &v;
            let d = (&next - &v).amax();
            v = next;
            if d < 1e-13 {
                break;
            }
        }
        *o = v.iter().copied().collect();
    }
    out
}

/// Player `i`'s MDP against a fixed opponent: per state, per own action, the
/// expected reward and the successor distribution over all states.
pub fn induced_mdp(game: &StochasticGame, pi: &JointStrategy, player: usize) -> Vec<Vec<(f64, Vec<f64>)>> {
    let n = game.num_states();
    (0..n)
        .map(|x| {
            let [m1, m2] = game.actions(x);
            let (own, other) = if player == 0 { (m1, m2) } else { (m2, m1) };
            (0..own)
                .map(|a| {
                    let mut r = 0.0;
                    let mut row = vec![0.0; n];
                    for b in 0..other {
                        let (a1, a2) = if player == 0 { (a, b) } else { (b, a) };
                        let w = pi.pi[1 - player][x][b];
                        r += w * game.reward(x, a1, a2)[player];
                        for (k, &y) in game.successors(x).iter().enumerate() {
                            row[y] += w * game.probs(x, a1, a2)[k];
                        }
                    }
                    (r, row)
                })
                .collect()
        })
        .collect()
}

/// Howard policy iteration with exact (LU) policy evaluation.
pub fn policy_iteration(game: &StochasticGame, pi: &JointStrategy, player: usize) -> Vec<f64> {
    let mdp = induced_mdp(game, pi, player);
    let n = game.num_states();
    let beta = game.discount();
    let mut policy = vec![0usize; n];
    loop {
        let a = DMatrix::from_fn(n, n, |x, y| f64::from(u8::from(x == y)) - beta * mdp[x][policy[x]].1[y]);
        let r = DVector::from_fn(n, |x, _| mdp[x][policy[x]].0);
        let v = a.lu().solve(&r).unwrap();
        let mut changed = false;
        for x in 0..n {
            let q = |a: usize| mdp[x][a].0 + beta * mdp[x][a].1.iter().zip(v.iter()).map(|(p, v)| p * v).sum::<f64>();
            let cur = q(policy[x]);
            for a in 0..mdp[x].len() {
                if q(a) > cur + 1e-12 {
                    policy[x] = a;
                    changed = true;
                    break;
                }
            }
        }
        if !changed {
            return v.iter().copied().collect();
        }
    }
}

/// Random feasible packed point: a random interior strategy with values
/// above the best-response values by a random margin.
pub fn random_feasible_point(game: &StochasticGame, r: &mut StdRng) -> Vec<f64> {
    let pi = random_strategy(r, game);
    let margin = r.random_range(0.01..1.0);
    let v = [0, 1].map(|i| policy_iteration(game, &pi, i).into_iter().map(|x| x + margin).collect());
    Nlp::new(game).layout().pack(&ValueVector { v }, &pi)
}

/// Random packed point without any feasibility guarantee.
pub fn random_point(nlp: &Nlp<'_>, r: &mut StdRng) -> Vec<f64> {
    (0..nlp.num_vars()).map(|_| r.random_range(-1.0..1.0)).collect()
}

/// Central differences of a vector-valued map, one column per coordinate.
pub fn central_jacobian(f: impl Fn(&[f64]) -> Vec<f64>, z: &[f64], h: f64) -> DMatrix<f64> {
    let m = f(z).len();
    let mut jac = DMatrix::zeros(m, z.len());
    let mut zp = z.to_vec();
    for k in 0..z.len() {
        zp[k] = z[k] + h;
        let fp = f(&zp);
        zp[k] = z[k] - h;
        let fm = f(&zp);
        zp[k] = z[k];
        for r in 0..m {
            jac[(r, k)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    jac
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Two-state chain with one action each: 0 → {0, 1}, 1 absorbing.
pub fn two_state_chain(beta: f64) -> StochasticGame {
    let mut b = GameBuilder::new(beta, vec![[1, 1], [1, 1]], vec![vec![0, 1], vec![1]]).unwrap();
    b.transition_dense(0, 0, 0, &[0.3, 0.7]).unwrap();
    b.reward(0, 0, 0, [1.0, -2.0]).unwrap();
    b.transition_dense(1, 0, 0, &[1.0]).unwrap();
    b.reward(1, 0, 0, [0.5, 0.25]).unwrap();
    b.build()
}

pub fn matching_pennies() -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    (vec![vec![1.0, -1.0], vec![-1.0, 1.0]], vec![vec![-1.0, 1.0], vec![1.0, -1.0]])
}

pub fn prisoners_dilemma() -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    // action 0 cooperates, action 1 defects
    (vec![vec![-1.0, -3.0], vec![0.0, -2.0]], vec![vec![-1.0, 0.0], vec![-3.0, -2.0]])
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Random sparse symmetric matrix as lower triplets plus its dense copy.
/// The diagonal dominates its row; with `definite` it is positive, otherwise
/// its signs are mixed.
pub fn random_sparse_symmetric(
    r: &mut StdRng,
    n: usize,
    density: f64,
    definite: bool,
) -> (Vec<(usize, usize, f64)>, DMatrix<f64>) {
    let mut a = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        for i in j + 1..n {
            if r.random::<f64>() < density {
                let v = r.random_range(-1.0..1.0);
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
    }
    for i in 0..n {
        let off: f64 = (0..n).filter(|&k| k != i).map(|k| a[(i, k)].abs()).sum();
        let d = off + r.random_range(0.5..2.0);
        a[(i, i)] = if definite || r.random::<bool>() { d } else { -d };
    }
    let mut trip = Vec::new();
    for j in 0..n {
        for i in j..n {
            if a[(i, j)] != 0.0 {
                trip.push((i, j, a[(i, j)]));
            }
        }
    }
    (trip, a)
}
