mod common;

use std::collections::HashMap;

use approx::assert_abs_diff_eq;

use sgnash_core::game::validate_game;
use sgnash_core::nlp::census;
use sgnash_core::terrain::*;

fn brute_force_count(side: usize, objects: &[Cell]) -> usize {
    let k = objects.len();
    let mut count = 0;
    for p1 in 0..side * side {
        for p2 in 0..side * side {
            let pos = [(p1 / side, p1 % side), (p2 / side, p2 % side)];
            for mask in 0..(1usize << k) {
                if mask == (1 << k) - 1 {
                    continue;
                }
                let blocked = objects.iter().enumerate().any(|(j, o)| mask >> j & 1 == 0 && pos.contains(o));
                count += usize::from(!blocked);
            }
        }
    }
    count + 1
}

#[test]
fn reference_state_count() {
    let tg = build_terrain_game(&TerrainSpec::reference(0.75)).unwrap();
    assert_eq!(tg.game.num_states(), 647);
    assert_eq!(tg.game.total_actions(0), 4169);
    assert_eq!(tg.game.total_actions(1), 4169);
    assert_eq!(tg.states.last(), Some(&TerrainState::Terminal));
    let c = census(&tg.game);
    assert_eq!((c.paper_variables, c.paper_constraints), (9632, 16676));
}

#[test]
fn state_counts_match_enumeration() {
    for (side, objects) in [(2, vec![(0, 0)]), (2, vec![(1, 1)]), (3, vec![(0, 2), (2, 2)]), (3, vec![(1, 1)])] {
        let tg = build_terrain_game(&TerrainSpec::new(side, objects.clone(), 0.75)).unwrap();
        assert_eq!(tg.game.num_states(), brute_force_count(side, &objects), "{side} {objects:?}");
    }
}

#[test]
fn degenerate_grid_rejected() {
    assert!(build_terrain_game(&TerrainSpec::new(1, vec![(0, 0)], 0.75)).is_err());
    assert!(build_terrain_game(&TerrainSpec::new(3, vec![], 0.75)).is_err());
    assert!(build_terrain_game(&TerrainSpec::new(3, vec![(3, 0)], 0.75)).is_err());
    assert!(build_terrain_game(&TerrainSpec::new(3, vec![(1, 0), (1, 0)], 0.75)).is_err());
}

#[test]
fn corner_transition() {
    let d = agent_transition((0, 0), (0, 0), 4).unwrap();
    let expect = [((0, 0), 4.0 / 9.0), ((0, 1), 2.0 / 9.0), ((1, 0), 2.0 / 9.0), ((1, 1), 1.0 / 9.0)];
    assert_eq!(d.len(), 4);
    for (cell, p) in expect {
        let got = d.iter().find(|e| e.0 == cell).unwrap().1;
        assert_abs_diff_eq!(got, p, epsilon = 1e-15);
    }
}

#[test]
fn interior_transition_mode_at_target() {
    let d = agent_transition((1, 1), (1, 1), 4).unwrap();
    assert_eq!(d.len(), 9);
    let best = d.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    assert_eq!(best.0, (1, 1));
    let d = agent_transition((1, 1), (2, 0), 4).unwrap();
    let best = d.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    assert_eq!(best.0, (2, 0));
}

#[test]
fn transitions_sum_to_one() {
    for side in 1..=4 {
        for r in 0..side {
            for c in 0..side {
                for t in neighbourhood((r, c), side) {
                    let s: f64 = agent_transition((r, c), t, side).unwrap().iter().map(|e| e.1).sum();
                    assert!((s - 1.0).abs() < 1e-15);
                }
            }
        }
    }
    assert!(agent_transition((0, 0), (2, 0), 4).is_err());
    assert!(agent_transition((0, 0), (0, 4), 4).is_err());
}

#[test]
fn reward_cases() {
    let spec = TerrainSpec::reference(0.75);
    assert_eq!(terrain_reward(&spec, &[false, false], [(1, 1), (1, 1)]), [-0.5, -0.5]);
    assert_eq!(terrain_reward(&spec, &[false, false], [(0, 3), (2, 2)]), [1.0, 0.0]);
    assert_eq!(terrain_reward(&spec, &[false, false], [(0, 0), (2, 2)]), [0.0, 0.0]);
    // collected objects pay nothing
    assert_eq!(terrain_reward(&spec, &[true, false], [(0, 3), (2, 2)]), [0.0, 0.0]);
    // the final collection is not penalized even on a shared cell
    assert_eq!(terrain_reward(&spec, &[true, false], [(3, 3), (3, 3)]), [1.0, 1.0]);
    assert_eq!(terrain_reward(&spec, &[false, false], [(3, 3), (3, 3)]), [0.5, 0.5]);
}

#[test]
fn generated_games_are_valid() {
    for (side, objects) in [(2, vec![(0, 1)]), (3, vec![(0, 2), (2, 2)]), (4, vec![(0, 3), (3, 3)])] {
        let tg = build_terrain_game(&TerrainSpec::new(side, objects, 0.75)).unwrap();
        let g = &tg.game;
        assert!(validate_game(g).is_empty());
        for x in 0..g.num_states() {
            let [m1, m2] = g.actions(x);
            for a1 in 0..m1 {
                for a2 in 0..m2 {
                    let s: f64 = g.probs(x, a1, a2).iter().sum();
                    assert!((s - 1.0).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn agent_swap_symmetry() {
    for objects in [vec![(0, 1)], vec![(1, 1)]] {
        let tg = build_terrain_game(&TerrainSpec::new(2, objects, 0.75)).unwrap();
        let g = &tg.game;
        let index: HashMap<&TerrainState, usize> = tg.states.iter().enumerate().map(|(i, s)| (s, i)).collect();
        let swap = |x: usize| match &tg.states[x] {
            TerrainState::Play { pos, collected } => {
                index[&TerrainState::Play { pos: [pos[1], pos[0]], collected: collected.clone() }]
            }
            TerrainState::Terminal => x,
        };
        for x in 0..g.num_states() {
            let sx = swap(x);
            let [m1, m2] = g.actions(x);
            assert_eq!(g.actions(sx), [m2, m1]);
            for a1 in 0..m1 {
                for a2 in 0..m2 {
                    let r = g.reward(x, a1, a2);
                    let rs = g.reward(sx, a2, a1);
                    assert_abs_diff_eq!(r[0], rs[1], epsilon = 1e-14);
                    assert_abs_diff_eq!(r[1], rs[0], epsilon = 1e-14);
                    for (k, &y) in g.successors(x).iter().enumerate() {
                        let sy = swap(y);
                        let ks = g.successors(sx).iter().position(|&s| s == sy).unwrap();
                        assert_abs_diff_eq!(g.probs(x, a1, a2)[k], g.probs(sx, a2, a1)[ks], epsilon = 1e-14);
                    }
                }
            }
        }
    }
}

#[test]
fn parse_objects_formats() {
    assert_eq!(parse_objects("(0,3);(3,3)").unwrap(), vec![(0, 3), (3, 3)]);
    assert_eq!(parse_objects(" ( 1 , 2 ) ; ").unwrap(), vec![(1, 2)]);
    assert!(parse_objects("(1,2,3)").is_err());
    assert!(parse_objects("1,2").is_err());
}
