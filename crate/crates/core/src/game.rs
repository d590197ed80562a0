//! Finite two-player discounted stochastic games.
//!
//! Players are indexed 0 and 1 throughout. Transition probabilities for a
//! joint action are stored densely over the successor set `U(x)` of the state,
//! so `probs(x, a1, a2)[k]` is the probability of moving to `successors(x)[k]`.

use std::fmt;
use std::path::Path;

use faer::prelude::*;
use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ROW_SUM_TOL: f64 = 1e-12;
const VALUE_RESIDUAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct StochasticGame {
    discount: f64,
    actions: Vec<[usize; 2]>,
    successors: Vec<Vec<usize>>,
    prob_off: Vec<usize>,
    reward_off: Vec<usize>,
    probs: Vec<f64>,
    rewards: Vec<[f64; 2]>,
}

/// Incremental constructor. Unset transitions are all-zero rows and unset
/// rewards default to zero; [`validate_game`] reports the former.
#[derive(Debug, Clone)]
pub struct GameBuilder {
    game: StochasticGame,
}

impl GameBuilder {
    pub fn new(discount: f64, actions: Vec<[usize; 2]>, successors: Vec<Vec<usize>>) -> Result<Self> {
        let n = actions.len();
        if successors.len() != n {
            return Err(Error::InvalidGame(format!(
                "{} action entries but {} successor lists",
                n,
                successors.len()
            )));
        }
        let mut prob_off = Vec::with_capacity(n + 1);
        let mut reward_off = Vec::with_capacity(n + 1);
        let (mut po, mut ro) = (0, 0);
        for x in 0..n {
            let [m1, m2] = actions[x];
            for &y in &successors[x] {
                if y >= n {
                    return Err(Error::InvalidGame(format!("state {x}: successor {y} out of range")));
                }
            }
            let mut sorted = successors[x].clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != successors[x].len() {
                return Err(Error::InvalidGame(format!("state {x}: duplicate successors")));
            }
            prob_off.push(po);
            reward_off.push(ro);
            po += m1 * m2 * successors[x].len();
            ro += m1 * m2;
        }
        prob_off.push(po);
        reward_off.push(ro);
        Ok(Self {
            game: StochasticGame {
                discount,
                actions,
                successors,
                prob_off,
                reward_off,
                probs: vec![0.0; po],
                rewards: vec![[0.0; 2]; ro],
            },
        })
    }

    fn check_joint(&self, x: usize, a1: usize, a2: usize) -> Result<()> {
        let g = &self.game;
        if x >= g.num_states() {
            return Err(Error::InvalidGame(format!("state {x} out of range")));
        }
        let [m1, m2] = g.actions[x];
        if a1 >= m1 || a2 >= m2 {
            return Err(Error::InvalidGame(format!("state {x}: joint action ({a1},{a2}) out of range")));
        }
        Ok(())
    }

    /// Sets the distribution for `(x, a1, a2)` from `(successor state, p)` pairs.
    pub fn transition(&mut self, x: usize, a1: usize, a2: usize, probs: &[(usize, f64)]) -> Result<&mut Self> {
        self.check_joint(x, a1, a2)?;
        let u = self.game.successors[x].len();
        let start = self.game.joint_prob_index(x, a1, a2);
        self.game.probs[start..start + u].fill(0.0);
        for &(y, p) in probs {
            let k = self.game.successors[x].iter().position(|&s| s == y).ok_or_else(|| {
                Error::InvalidGame(format!("state {x}: transition to {y} outside successor set"))
            })?;
            self.game.probs[start + k] += p;
        }
        Ok(self)
    }

    /// Sets the distribution for `(x, a1, a2)` aligned with `successors(x)`.
    pub fn transition_dense(&mut self, x: usize, a1: usize, a2: usize, probs: &[f64]) -> Result<&mut Self> {
        self.check_joint(x, a1, a2)?;
        let u = self.game.successors[x].len();
        if probs.len() != u {
            return Err(Error::Dimension(format!("state {x}: expected {u} probabilities, got {}", probs.len())));
        }
        let start = self.game.joint_prob_index(x, a1, a2);
        self.game.probs[start..start + u].copy_from_slice(probs);
        Ok(self)
    }

    pub fn reward(&mut self, x: usize, a1: usize, a2: usize, r: [f64; 2]) -> Result<&mut Self> {
        self.check_joint(x, a1, a2)?;
        let idx = self.game.reward_off[x] + a1 * self.game.actions[x][1] + a2;
        self.game.rewards[idx] = r;
        Ok(self)
    }

    /// Finishes construction. Only structure is checked here; probabilistic
    /// invariants are the job of [`validate_game`].
    pub fn build(self) -> StochasticGame {
        self.game
    }
}

impl StochasticGame {
    pub fn num_states(&self) -> usize {
        self.actions.len()
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// `[m1(x), m2(x)]`.
    pub fn actions(&self, x: usize) -> [usize; 2] {
        self.actions[x]
    }

    pub fn num_actions(&self, x: usize, player: usize) -> usize {
        self.actions[x][player]
    }

    pub fn successors(&self, x: usize) -> &[usize] {
        &self.successors[x]
    }

    fn joint_prob_index(&self, x: usize, a1: usize, a2: usize) -> usize {
        self.prob_off[x] + (a1 * self.actions[x][1] + a2) * self.successors[x].len()
    }

    /// Distribution over `successors(x)` for the joint action.
    pub fn probs(&self, x: usize, a1: usize, a2: usize) -> &[f64] {
        let s = self.joint_prob_index(x, a1, a2);
        &self.probs[s..s + self.successors[x].len()]
    }

    pub fn reward(&self, x: usize, a1: usize, a2: usize) -> [f64; 2] {
        self.rewards[self.reward_off[x] + a1 * self.actions[x][1] + a2]
    }

    /// Sum of action counts over states for one player.
    pub fn total_actions(&self, player: usize) -> usize {
        self.actions.iter().map(|a| a[player]).sum()
    }

    /// Copy of the game with every reward multiplied by `c`.
    pub fn scaled_rewards(&self, c: f64) -> Self {
        let mut g = self.clone();
        for r in &mut g.rewards {
            r[0] *= c;
            r[1] *= c;
        }
        g
    }

    /// Copy with a different discount factor.
    pub fn with_discount(&self, discount: f64) -> Self {
        let mut g = self.clone();
        g.discount = discount;
        g
    }

    pub fn to_file(&self) -> GameFile {
        let mut transitions = Vec::new();
        let mut rewards = Vec::new();
        for x in 0..self.num_states() {
            let [m1, m2] = self.actions[x];
            for a1 in 0..m1 {
                for a2 in 0..m2 {
                    let probs = self
                        .successors[x]
                        .iter()
                        .zip(self.probs(x, a1, a2))
                        .filter(|(_, &p)| p != 0.0)
                        .map(|(&y, &p)| (y, p))
                        .collect();
                    transitions.push(TransitionEntry { x, a1, a2, probs });
                    let r = self.reward(x, a1, a2);
                    if r != [0.0, 0.0] {
                        rewards.push(RewardEntry { x, a1, a2, r });
                    }
                }
            }
        }
        GameFile {
            discount: self.discount,
            states: self.num_states(),
            actions: self.actions.clone(),
            successors: self.successors.clone(),
            transitions,
            rewards,
        }
    }

    /// Builds a game from its file representation without validating probabilities.
    pub fn from_file_unchecked(file: &GameFile) -> Result<Self> {
        if file.actions.len() != file.states || file.successors.len() != file.states {
            return Err(Error::InvalidGame(format!(
                "states = {} but {} action entries and {} successor lists",
                file.states,
                file.actions.len(),
                file.successors.len()
            )));
        }
        let mut b = GameBuilder::new(file.discount, file.actions.clone(), file.successors.clone())?;
        for t in &file.transitions {
            b.transition(t.x, t.a1, t.a2, &t.probs)?;
        }
        for r in &file.rewards {
            b.reward(r.x, r.a1, r.a2, r.r)?;
        }
        Ok(b.build())
    }

    /// Builds a game from its file representation and rejects it if any
    /// invariant is violated.
    pub fn from_file(file: &GameFile) -> Result<Self> {
        let g = Self::from_file_unchecked(file)?;
        let violations = validate_game(&g);
        if !violations.is_empty() {
            let shown: Vec<String> = violations.iter().take(5).map(|v| v.to_string()).collect();
            return Err(Error::InvalidGame(format!(
                "{} violation(s): {}",
                violations.len(),
                shown.join("; ")
            )));
        }
        Ok(g)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: GameFile = serde_json::from_str(s)?;
        Self::from_file(&file)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_file())?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }
}

/// On-disk game format.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GameFile {
    pub discount: f64,
    pub states: usize,
    pub actions: Vec<[usize; 2]>,
    pub successors: Vec<Vec<usize>>,
    pub transitions: Vec<TransitionEntry>,
    #[serde(default)]
    pub rewards: Vec<RewardEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TransitionEntry {
    pub x: usize,
    pub a1: usize,
    pub a2: usize,
    pub probs: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RewardEntry {
    pub x: usize,
    pub a1: usize,
    pub a2: usize,
    pub r: [f64; 2],
}

/// A single broken game invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Discount(f64),
    NoActions { state: usize, player: usize },
    NoSuccessors { state: usize },
    NegativeProbability { state: usize, a1: usize, a2: usize, successor: usize, p: f64 },
    RowSum { state: usize, a1: usize, a2: usize, sum: f64 },
    AbsorbingLoop { state: usize, a1: usize, a2: usize, p: f64 },
    NonFinite { state: usize, a1: usize, a2: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Violation::Discount(b) => write!(f, "discount {b} not in (0,1)"),
            Violation::NoActions { state, player } => {
                write!(f, "state {state}: player {} has no actions", player + 1)
            }
            Violation::NoSuccessors { state } => write!(f, "state {state}: empty successor set"),
            Violation::NegativeProbability { state, a1, a2, successor, p } => {
                write!(f, "state {state}, actions ({a1},{a2}): p(->{successor}) = {p} < 0")
            }
            Violation::RowSum { state, a1, a2, sum } => {
                write!(f, "state {state}, actions ({a1},{a2}): probabilities sum to {sum}")
            }
            Violation::AbsorbingLoop { state, a1, a2, p } => {
                write!(f, "absorbing state {state}, actions ({a1},{a2}): self-loop probability {p}")
            }
            Violation::NonFinite { state, a1, a2 } => {
                write!(f, "state {state}, actions ({a1},{a2}): non-finite reward or probability")
            }
        }
    }
}

/// Lists every invariant violation; empty iff the game is valid.
pub fn validate_game(game: &StochasticGame) -> Vec<Violation> {
    let mut out = Vec::new();
    let beta = game.discount();
    if !(beta > 0.0 && beta < 1.0) {
        out.push(Violation::Discount(beta));
    }
    for x in 0..game.num_states() {
        let [m1, m2] = game.actions(x);
        for (player, &m) in [m1, m2].iter().enumerate() {
            if m == 0 {
                out.push(Violation::NoActions { state: x, player });
            }
        }
        let succ = game.successors(x);
        if succ.is_empty() {
            out.push(Violation::NoSuccessors { state: x });
        }
        let absorbing = succ == [x];
        for a1 in 0..m1 {
            for a2 in 0..m2 {
                let p = game.probs(x, a1, a2);
                let r = game.reward(x, a1, a2);
                if p.iter().any(|v| !v.is_finite()) || r.iter().any(|v| !v.is_finite()) {
                    out.push(Violation::NonFinite { state: x, a1, a2 });
                    continue;
                }
                for (k, &pk) in p.iter().enumerate() {
                    if pk < 0.0 {
                        out.push(Violation::NegativeProbability { state: x, a1, a2, successor: succ[k], p: pk });
                    }
                }
                let sum: f64 = p.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    out.push(Violation::RowSum { state: x, a1, a2, sum });
                } else if absorbing && (p[0] - 1.0).abs() > ROW_SUM_TOL {
                    out.push(Violation::AbsorbingLoop { state: x, a1, a2, p: p[0] });
                }
            }
        }
    }
    out
}

/// Stationary randomized strategies for both players: `pi[i][x][a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointStrategy {
    pub pi: [Vec<Vec<f64>>; 2],
}

/// Per-player value vectors: `v[i][x]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueVector {
    pub v: [Vec<f64>; 2],
}

impl JointStrategy {
    /// Checks dimensions against the game and the probability-simplex invariant.
    pub fn check(&self, game: &StochasticGame, tol: f64) -> Result<()> {
        self.check_dims(game)?;
        for i in 0..2 {
            for (x, p) in self.pi[i].iter().enumerate() {
                if p.iter().any(|&q| !(q >= -tol) || !q.is_finite()) {
                    return Err(Error::Infeasible(format!("player {} state {x}: negative probability", i + 1)));
                }
                let s: f64 = p.iter().sum();
                if (s - 1.0).abs() > tol {
                    return Err(Error::Infeasible(format!("player {} state {x}: probabilities sum to {s}", i + 1)));
                }
            }
        }
        Ok(())
    }

    pub fn check_dims(&self, game: &StochasticGame) -> Result<()> {
        for i in 0..2 {
            if self.pi[i].len() != game.num_states() {
                return Err(Error::Dimension(format!(
                    "player {} strategy has {} states, game has {}",
                    i + 1,
                    self.pi[i].len(),
                    game.num_states()
                )));
            }
            for (x, p) in self.pi[i].iter().enumerate() {
                if p.len() != game.num_actions(x, i) {
                    return Err(Error::Dimension(format!(
                        "player {} state {x}: {} probabilities for {} actions",
                        i + 1,
                        p.len(),
                        game.num_actions(x, i)
                    )));
                }
            }
        }
        Ok(())
    }
}

impl ValueVector {
    pub fn check_dims(&self, game: &StochasticGame) -> Result<()> {
        for i in 0..2 {
            if self.v[i].len() != game.num_states() {
                return Err(Error::Dimension(format!(
                    "player {} value has {} entries, game has {} states",
                    i + 1,
                    self.v[i].len(),
                    game.num_states()
                )));
            }
        }
        Ok(())
    }
}

/// `π^i(x,a) = 1/m^i(x)`.
pub fn uniform_strategy(game: &StochasticGame) -> JointStrategy {
    let make = |i: usize| {
        (0..game.num_states())
            .map(|x| {
                let m = game.num_actions(x, i);
                vec![1.0 / m as f64; m]
            })
            .collect()
    };
    JointStrategy { pi: [make(0), make(1)] }
}

/// `r^i(π)(x) = π²(x)ᵀ r^i(x) π¹(x)`.
pub fn expected_reward(game: &StochasticGame, pi: &JointStrategy) -> Result<[Vec<f64>; 2]> {
    pi.check_dims(game)?;
    let n = game.num_states();
    let mut out = [vec![0.0; n], vec![0.0; n]];
    for x in 0..n {
        let [m1, m2] = game.actions(x);
        for a1 in 0..m1 {
            for a2 in 0..m2 {
                let w = pi.pi[0][x][a1] * pi.pi[1][x][a2];
                let r = game.reward(x, a1, a2);
                out[0][x] += w * r[0];
                out[1][x] += w * r[1];
            }
        }
    }
    Ok(out)
}

/// Dense `P(π)` with `P(x,y) = Σ π¹(a1) π²(a2) p(y|x,a1,a2)`.
pub fn transition_matrix(game: &StochasticGame, pi: &JointStrategy) -> Result<Mat<f64>> {
    pi.check_dims(game)?;
    let n = game.num_states();
    let mut p = Mat::<f64>::zeros(n, n);
    for x in 0..n {
        let [m1, m2] = game.actions(x);
        let succ = game.successors(x);
        for a1 in 0..m1 {
            for a2 in 0..m2 {
                let w = pi.pi[0][x][a1] * pi.pi[1][x][a2];
                if w == 0.0 {
                    continue;
                }
                for (k, &pk) in game.probs(x, a1, a2).iter().enumerate() {
                    p[(x, succ[k])] += w * pk;
                }
            }
        }
    }
    Ok(p)
}

/// Solves `v^i = r^i(π) + βP(π)v^i` for both players with a dense LU.
pub fn strategy_value(game: &StochasticGame, pi: &JointStrategy) -> Result<ValueVector> {
    let n = game.num_states();
    let beta = game.discount();
    let r = expected_reward(game, pi)?;
    let p = transition_matrix(game, pi)?;
    let a = Mat::<f64>::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - beta * p[(i, j)]);
    let lu = a.partial_piv_lu();
    let rhs = Mat::<f64>::from_fn(n, 2, |x, i| r[i][x]);
    let mut sol = lu.solve(&rhs);
    for _ in 0..3 {
        let res = &rhs - &a * &sol;
        if res.norm_max() < VALUE_RESIDUAL_TOL * 1e-3 {
            break;
        }
        sol += lu.solve(&res);
    }
    let res = (&rhs - &a * &sol).norm_max();
    if !(res < VALUE_RESIDUAL_TOL) {
        return Err(Error::Numeric(format!("strategy evaluation residual {res:.3e}")));
    }
    Ok(ValueVector {
        v: [(0..n).map(|x| sol[(x, 0)]).collect(), (0..n).map(|x| sol[(x, 1)]).collect()],
    })
}

/// `Q^i(x, a^i)`: player `i`'s expected one-step backup for each own action,
/// averaging over the opponent's strategy at `x`.
pub fn bellman_q(
    game: &StochasticGame,
    v: &ValueVector,
    pi: &JointStrategy,
    player: usize,
    x: usize,
) -> Result<Vec<f64>> {
    if player > 1 || x >= game.num_states() {
        return Err(Error::Argument(format!("bad player {player} or state {x}")));
    }
    pi.check_dims(game)?;
    v.check_dims(game)?;
    Ok(bellman_q_unchecked(game, &v.v[player], &pi.pi[1 - player][x], player, x))
}

pub(crate) fn bellman_q_unchecked(game: &StochasticGame, v: &[f64], opp: &[f64], player: usize, x: usize) -> Vec<f64> {
    let beta = game.discount();
    let [m1, m2] = game.actions(x);
    let succ = game.successors(x);
    let own = if player == 0 { m1 } else { m2 };
    let mut q = vec![0.0; own];
    for a1 in 0..m1 {
        for a2 in 0..m2 {
            let (a, b) = if player == 0 { (a1, a2) } else { (a2, a1) };
            let w = opp[b];
            if w == 0.0 {
                continue;
            }
            let cont: f64 = game.probs(x, a1, a2).iter().zip(succ).map(|(p, &y)| p * v[y]).sum();
            q[a] += w * (game.reward(x, a1, a2)[player] + beta * cont);
        }
    }
    q
}
