//! Two-agent terrain exploration game on a square grid.
//!
//! Agents move to any cell within L∞ distance 1 and land near the intended
//! cell with probability proportional to `2^{-d1(target, landing)}`. Landing
//! on an uncollected object collects it; once every object is collected the
//! game moves to an absorbing terminal state.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{GameBuilder, StochasticGame};

pub type Cell = (usize, usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerrainSpec {
    /// Grid points per axis; cells are `0..grid_side` in each coordinate.
    pub grid_side: usize,
    pub objects: Vec<Cell>,
    /// Informational only; the game covers every start configuration.
    pub starts: Option<[Cell; 2]>,
    pub discount: f64,
    pub collision_penalty: f64,
    pub object_reward: f64,
}

impl TerrainSpec {
    pub fn new(grid_side: usize, objects: Vec<Cell>, discount: f64) -> Self {
        Self {
            grid_side,
            objects,
            starts: None,
            discount,
            collision_penalty: -0.5,
            object_reward: 1.0,
        }
    }

    /// The 4×4 instance with objects in the two far corners of the last column.
    pub fn reference(discount: f64) -> Self {
        Self::new(4, vec![(0, 3), (3, 3)], discount)
    }

    fn validate(&self) -> Result<()> {
        if self.grid_side == 0 {
            return Err(Error::Terrain("grid_side must be positive".into()));
        }
        if self.objects.is_empty() {
            return Err(Error::Terrain("at least one object is required".into()));
        }
        if self.objects.len() > 20 {
            return Err(Error::Terrain("too many objects".into()));
        }
        for (j, &o) in self.objects.iter().enumerate() {
            if o.0 >= self.grid_side || o.1 >= self.grid_side {
                return Err(Error::Terrain(format!("object {o:?} outside the grid")));
            }
            if self.objects[..j].contains(&o) {
                return Err(Error::Terrain(format!("duplicate object at {o:?}")));
            }
        }
        if let Some(starts) = self.starts {
            for s in starts {
                if s.0 >= self.grid_side || s.1 >= self.grid_side {
                    return Err(Error::Terrain(format!("start {s:?} outside the grid")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TerrainState {
    Play { pos: [Cell; 2], collected: Vec<bool> },
    Terminal,
}

/// Cells within L∞ distance 1 of `pos`, in row-major order.
pub fn neighbourhood(pos: Cell, side: usize) -> Vec<Cell> {
    let mut out = Vec::with_capacity(9);
    for r in pos.0.saturating_sub(1)..=(pos.0 + 1).min(side - 1) {
        for c in pos.1.saturating_sub(1)..=(pos.1 + 1).min(side - 1) {
            out.push((r, c));
        }
    }
    out
}

fn l1(a: Cell, b: Cell) -> usize {
    a.0.abs_diff(b.0) + a.1.abs_diff(b.1)
}

/// Landing distribution of one agent at `pos` aiming for `target`.
pub fn agent_transition(pos: Cell, target: Cell, side: usize) -> Result<Vec<(Cell, f64)>> {
    if pos.0 >= side || pos.1 >= side || target.0 >= side || target.1 >= side {
        return Err(Error::Argument(format!("cell outside {side}x{side} grid")));
    }
    if pos.0.abs_diff(target.0) > 1 || pos.1.abs_diff(target.1) > 1 {
        return Err(Error::Argument(format!("target {target:?} not adjacent to {pos:?}")));
    }
    let cells = neighbourhood(pos, side);
    let weights: Vec<f64> = cells.iter().map(|&y| 0.5f64.powi(l1(target, y) as i32)).collect();
    let total: f64 = weights.iter().sum();
    Ok(cells.into_iter().zip(weights).map(|(y, w)| (y, w / total)).collect())
}

/// Per-agent rewards for a transition into `landing` given flags before the move.
pub fn terrain_reward(spec: &TerrainSpec, collected: &[bool], landing: [Cell; 2]) -> [f64; 2] {
    let after = collect(spec, collected, landing);
    let all = after.iter().all(|&c| c);
    let mut r = [0.0; 2];
    for i in 0..2 {
        if landing[0] == landing[1] && !all {
            r[i] += spec.collision_penalty;
        }
        if spec.objects.iter().zip(collected).any(|(&o, &c)| !c && o == landing[i]) {
            r[i] += spec.object_reward;
        }
    }
    r
}

fn collect(spec: &TerrainSpec, collected: &[bool], landing: [Cell; 2]) -> Vec<bool> {
    spec.objects
        .iter()
        .zip(collected)
        .map(|(&o, &c)| c || o == landing[0] || o == landing[1])
        .collect()
}

fn feasible(spec: &TerrainSpec, pos: [Cell; 2], collected: &[bool]) -> bool {
    if collected.iter().all(|&c| c) {
        return false;
    }
    !spec
        .objects
        .iter()
        .zip(collected)
        .any(|(&o, &c)| !c && (o == pos[0] || o == pos[1]))
}

/// Every feasible state, in generation order, followed by the terminal state.
pub fn enumerate_states(spec: &TerrainSpec) -> Vec<TerrainState> {
    let side = spec.grid_side;
    let k = spec.objects.len();
    let mut out = Vec::new();
    for p1 in 0..side * side {
        for p2 in 0..side * side {
            let pos = [(p1 / side, p1 % side), (p2 / side, p2 % side)];
            for mask in 0..(1u32 << k) {
                let collected: Vec<bool> = (0..k).map(|j| mask >> j & 1 == 1).collect();
                if feasible(spec, pos, &collected) {
                    out.push(TerrainState::Play { pos, collected });
                }
            }
        }
    }
    out.push(TerrainState::Terminal);
    out
}

/// Terrain game plus the table mapping state indices to terrain states.
#[derive(Debug, Clone)]
pub struct TerrainGame {
    pub game: StochasticGame,
    pub states: Vec<TerrainState>,
}

pub fn build_terrain_game(spec: &TerrainSpec) -> Result<TerrainGame> {
    spec.validate()?;
    let side = spec.grid_side;
    let states = enumerate_states(spec);
    if states.len() == 1 {
        return Err(Error::Terrain("no feasible non-terminal state".into()));
    }
    let terminal = states.len() - 1;
    let index: HashMap<&TerrainState, usize> = states.iter().enumerate().map(|(i, s)| (s, i)).collect();

    let mut actions = Vec::with_capacity(states.len());
    let mut successors = Vec::with_capacity(states.len());
    for s in &states {
        match s {
            TerrainState::Play { pos, collected } => {
                let n1 = neighbourhood(pos[0], side);
                let n2 = neighbourhood(pos[1], side);
                actions.push([n1.len(), n2.len()]);
                let mut succ: Vec<usize> = Vec::new();
                for &y1 in &n1 {
                    for &y2 in &n2 {
                        succ.push(next_state(spec, &index, terminal, collected, [y1, y2]));
                    }
                }
                succ.sort_unstable();
                succ.dedup();
                successors.push(succ);
            }
            TerrainState::Terminal => {
                actions.push([1, 1]);
                successors.push(vec![terminal]);
            }
        }
    }

    let mut b = GameBuilder::new(spec.discount, actions, successors.clone())?;
    for (x, s) in states.iter().enumerate() {
        let TerrainState::Play { pos, collected } = s else {
            b.transition_dense(x, 0, 0, &[1.0])?;
            continue;
        };
        let n1 = neighbourhood(pos[0], side);
        let n2 = neighbourhood(pos[1], side);
        let local: HashMap<usize, usize> = successors[x].iter().enumerate().map(|(k, &y)| (y, k)).collect();
        for (a1, &t1) in n1.iter().enumerate() {
            let d1 = agent_transition(pos[0], t1, side)?;
            for (a2, &t2) in n2.iter().enumerate() {
                let d2 = agent_transition(pos[1], t2, side)?;
                let mut probs = vec![0.0; successors[x].len()];
                let mut r = [0.0; 2];
                for &(y1, p1) in &d1 {
                    for &(y2, p2) in &d2 {
                        let p = p1 * p2;
                        let y = next_state(spec, &index, terminal, collected, [y1, y2]);
                        probs[local[&y]] += p;
                        let rb = terrain_reward(spec, collected, [y1, y2]);
                        r[0] += p * rb[0];
                        r[1] += p * rb[1];
                    }
                }
                b.transition_dense(x, a1, a2, &probs)?;
                b.reward(x, a1, a2, r)?;
            }
        }
    }
    Ok(TerrainGame { game: b.build(), states })
}

fn next_state(
    spec: &TerrainSpec,
    index: &HashMap<&TerrainState, usize>,
    terminal: usize,
    collected: &[bool],
    landing: [Cell; 2],
) -> usize {
    let after = collect(spec, collected, landing);
    if after.iter().all(|&c| c) {
        return terminal;
    }
    index[&TerrainState::Play { pos: landing, collected: after }]
}

/// Parses `"(x,y);(x,y)"` into cells.
pub fn parse_objects(s: &str) -> Result<Vec<Cell>> {
    let mut out = Vec::new();
    for part in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let inner = part
            .strip_prefix('(')
            .and_then(|p| p.strip_suffix(')'))
            .ok_or_else(|| Error::Argument(format!("expected (x,y), got {part:?}")))?;
        let mut it = inner.split(',').map(|t| t.trim().parse::<usize>());
        match (it.next(), it.next(), it.next()) {
            (Some(Ok(a)), Some(Ok(b)), None) => out.push((a, b)),
            _ => return Err(Error::Argument(format!("expected (x,y), got {part:?}"))),
        }
    }
    Ok(out)
}
