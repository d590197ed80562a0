mod common;

use proptest::prelude::*;
use rand::Rng;

use common::*;
use sgnash_core::direction::{two_stage_direction, DirectionParams};
use sgnash_core::nlp::Nlp;
use sgnash_core::random::{random_game, RandomGameSpec};
use sgnash_core::step::*;

const INF: f64 = f64::INFINITY;

#[test]
fn quadratic_examples() {
    assert_eq!(quadratic_feasible(-1.0, 0.0, 1.0).parts(), &[(-1.0, 1.0)]);
    assert!(quadratic_feasible(1.0, 0.0, 1.0).is_empty());
    assert_eq!(quadratic_feasible(-1.0, 0.0, -1.0), IntervalSet::real_line());
    assert_eq!(quadratic_feasible(1.0, 0.0, -1.0).parts(), &[(-INF, -1.0), (1.0, INF)]);
    // (x − 2)(x − 3) ≤ 0
    assert_eq!(quadratic_feasible(6.0, -5.0, 1.0).parts(), &[(2.0, 3.0)]);
}

#[test]
fn linear_and_constant_cases() {
    assert_eq!(quadratic_feasible(1.0, 2.0, 0.0).parts(), &[(-INF, -0.5)]);
    assert_eq!(quadratic_feasible(1.0, -2.0, 0.0).parts(), &[(0.5, INF)]);
    assert_eq!(quadratic_feasible(0.0, 0.0, 0.0), IntervalSet::real_line());
    assert_eq!(quadratic_feasible(-3.0, 0.0, 0.0), IntervalSet::real_line());
    assert!(quadratic_feasible(1e-300, 0.0, 0.0).is_empty());
}

#[test]
fn interval_set_basics() {
    let a = IntervalSet::from_parts(vec![(3.0, 4.0), (0.0, 1.0), (0.5, 2.0), (5.0, 4.0)]);
    assert_eq!(a.parts(), &[(0.0, 2.0), (3.0, 4.0)]);
    assert_eq!((a.min(), a.max()), (Some(0.0), Some(4.0)));
    assert_eq!(a.floor(2.5), Some(2.0));
    assert_eq!(a.ceil(2.5), Some(3.0));
    assert_eq!(a.floor(1.5), Some(1.5));
    assert_eq!(a.floor(-1.0), None);
    assert_eq!(a.ceil(4.5), None);
    assert!(IntervalSet::interval(1.0, 0.0).is_empty());
    let b = a.intersect(&IntervalSet::interval(1.0, 3.5));
    assert_eq!(b.parts(), &[(1.0, 2.0), (3.0, 3.5)]);
    // touching intervals merge
    assert_eq!(IntervalSet::interval(0.0, 1.0).union(&IntervalSet::interval(1.0, 2.0)).parts(), &[(0.0, 2.0)]);
}

#[test]
fn cubic_minimizer_examples() {
    // t³ − t has its local minimum at 1/√3
    let c = CubicRestriction { d0: 0.0, d1: -1.0, d2: 0.0, d3: 1.0 };
    assert!((c.local_minimizer().unwrap() - 1.0 / 3f64.sqrt()).abs() < 1e-15);
    // strictly decreasing: no minimizer
    let m = CubicRestriction { d0: 1.0, d1: -1.0, d2: 0.0, d3: -1.0 };
    assert_eq!(m.local_minimizer(), None);
    // quadratic (t − 2)²
    let q = CubicRestriction { d0: 4.0, d1: -4.0, d2: 1.0, d3: 0.0 };
    assert_eq!(q.local_minimizer(), Some(2.0));
    assert_eq!(q.derivative(2.0), 0.0);
    // minimum behind the origin is ignored
    let b = CubicRestriction { d0: 0.0, d1: 4.0, d2: 1.0, d3: 0.0 };
    assert_eq!(b.local_minimizer(), None);
}

/// Random game, feasible point and two-stage direction.
fn setup(seed: u64, states: usize) -> (sgnash_core::game::StochasticGame, Vec<f64>) {
    let mut r = rng(seed);
    let g = random_game(&mut r, &RandomGameSpec { states, ..small_spec() }).unwrap();
    let z = random_feasible_point(&g, &mut r);
    (g, z)
}

fn direction(nlp: &Nlp<'_>, z: &[f64]) -> sgnash_core::direction::DirectionResult {
    let ev = nlp.evaluate(z).unwrap();
    let w = vec![1.0; ev.g.len()];
    two_stage_direction(&ev.grad, &ev.gmat, &ev.g, &w, &DirectionParams::default()).unwrap()
}

#[test]
fn coefficients_match_interpolation() {
    for seed in 0..20 {
        let (g, z) = setup(seed, 1 + seed as usize % 6);
        let nlp = Nlp::new(&g);
        let mut r = rng(1000 + seed);
        let s: Vec<f64> = (0..z.len()).map(|_| r.random_range(-1.0..1.0)).collect();
        let at = |t: f64| -> Vec<f64> { z.iter().zip(&s).map(|(a, b)| a + t * b).collect() };
        // cubic through f at t = 0, 1, 2, 3 by Newton divided differences
        let f: Vec<f64> = (0..4).map(|k| nlp.objective(&at(k as f64)).unwrap()).collect();
        let d1 = [f[1] - f[0], f[2] - f[1], f[3] - f[2]];
        let d2 = [(d1[1] - d1[0]) / 2.0, (d1[2] - d1[1]) / 2.0];
        let d3 = (d2[1] - d2[0]) / 3.0;
        // expand f0 + d1₀t + d2₀t(t−1) + d3 t(t−1)(t−2)
        let want = [f[0], d1[0] - d2[0] + 2.0 * d3, d2[0] - 3.0 * d3, d3];
        let c = cubic_coeffs(&nlp, &z, &s).unwrap();
        for (got, want) in [c.d0, c.d1, c.d2, c.d3].into_iter().zip(want) {
            assert!(rel_err(got, want) < 1e-9, "{got} vs {want}");
        }
        // constraint quadratics through t = 0, 1, 2
        let delta = 0.3;
        let g0 = nlp.constraints(&z).unwrap();
        let g1 = nlp.constraints(&at(1.0)).unwrap();
        let g2 = nlp.constraints(&at(2.0)).unwrap();
        let all = all_constraint_coeffs(&nlp, &z, &s, &vec![delta; g0.len()]).unwrap();
        for j in 0..g0.len() {
            let y = [g0[j] - delta * g0[j], g1[j] - delta * g0[j], g2[j] - delta * g0[j]];
            let dd = (y[2] - 2.0 * y[1] + y[0]) / 2.0;
            let want = (y[0], y[1] - y[0] - dd, dd);
            let got = constraint_coeffs(&nlp, &z, &s, j, delta).unwrap();
            assert_eq!(got, all[j]);
            assert!(rel_err(got.0, want.0) < 1e-12);
            assert!(rel_err(got.1, want.1) < 1e-9);
            assert!(rel_err(got.2, want.2) < 1e-9);
        }
    }
}

#[test]
fn unit_delta_and_zero_direction() {
    let (g, z) = setup(7, 4);
    let nlp = Nlp::new(&g);
    let s: Vec<f64> = (0..z.len()).map(|k| (k as f64).sin()).collect();
    let m = nlp.num_constraints();
    assert!(all_constraint_coeffs(&nlp, &z, &s, &vec![1.0; m]).unwrap().iter().all(|c| c.0 == 0.0));
    let zero = vec![0.0; z.len()];
    let c = cubic_coeffs(&nlp, &z, &zero).unwrap();
    assert_eq!((c.d1, c.d2, c.d3), (0.0, 0.0, 0.0));
    assert!(rel_err(c.d0, nlp.objective(&z).unwrap()) < 1e-12);
    for (b, c, d) in all_constraint_coeffs(&nlp, &z, &zero, &vec![0.5; m]).unwrap() {
        assert!(b < 0.0 && c == 0.0 && d == 0.0);
    }
}

#[test]
fn cubic_with_one_block_of_the_direction() {
    let (g, z) = setup(10, 5);
    let nlp = Nlp::new(&g);
    let ns = g.num_states();
    let mut r = rng(11);
    // S_π = 0: linear in t with slope Σ 1ᵀ(S_v − βP(π₀)S_v)
    let mut s = vec![0.0; z.len()];
    for k in 0..2 * ns {
        s[k] = r.random_range(-1.0..1.0);
    }
    let c = cubic_coeffs(&nlp, &z, &s).unwrap();
    assert_eq!((c.d2, c.d3), (0.0, 0.0));
    let (_, pi) = nlp.layout().unpack(&z);
    let p = dense_p(&g, &pi);
    let beta = g.discount();
    let mut want = 0.0;
    for i in 0..2 {
        let sv = nalgebra::DVector::from_column_slice(&s[i * ns..(i + 1) * ns]);
        want += (&sv - beta * &p * &sv).sum();
    }
    assert!(rel_err(c.d1, want) < 1e-12);
    // S_v = 0: no cubic term
    let mut s = vec![0.0; z.len()];
    for k in 2 * ns..z.len() {
        s[k] = r.random_range(-1.0..1.0);
    }
    assert_eq!(cubic_coeffs(&nlp, &z, &s).unwrap().d3, 0.0);
}

#[test]
fn argument_errors() {
    let (g, z) = setup(8, 3);
    let nlp = Nlp::new(&g);
    let m = nlp.num_constraints();
    assert!(cubic_coeffs(&nlp, &z, &[0.0]).is_err());
    assert!(constraint_coeffs(&nlp, &z, &z, m, 0.5).is_err());
    assert!(all_constraint_coeffs(&nlp, &z, &z, &[0.5]).is_err());
    let mut bad = z.clone();
    bad[0] = -1e6;
    assert!(optimal_step(&nlp, &bad, &z, &vec![0.0; m], -1.0, &StepParams::default()).is_err());
}

#[test]
fn deltas_follow_multiplier_sign() {
    assert_eq!(deltas(&[1.0, 0.0, -1e-9], 0.9), vec![0.9, 0.9, 1.0]);
}

#[test]
fn full_direction_sums_to_zero() {
    let (g, z) = setup(9, 6);
    let nlp = Nlp::new(&g);
    let s = direction(&nlp, &z).s;
    let mut buf = Vec::new();
    for i in 0..2 {
        for x in 0..g.num_states() {
            nlp.layout().full_dir(&s, i, x, &mut buf);
            assert!(buf.iter().sum::<f64>().abs() < 1e-14);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn intersection_laws(
        a in prop::collection::vec((-10.0f64..10.0, 0.0f64..5.0), 0..6),
        b in prop::collection::vec((-10.0f64..10.0, 0.0f64..5.0), 0..6),
        c in prop::collection::vec((-10.0f64..10.0, 0.0f64..5.0), 0..6),
        probes in prop::collection::vec(-12.0f64..16.0, 32),
    ) {
        let mk = |v: &[(f64, f64)]| IntervalSet::from_parts(v.iter().map(|&(l, w)| (l, l + w)).collect());
        let (a, b, c) = (mk(&a), mk(&b), mk(&c));
        prop_assert_eq!(a.intersect(&b), b.intersect(&a));
        prop_assert_eq!(a.intersect(&b).intersect(&c), a.intersect(&b.intersect(&c)));
        prop_assert_eq!(a.intersect(&a), a.clone());
        for s in [&a, &b, &a.intersect(&b), &a.union(&c)] {
            let p = s.parts();
            prop_assert!(p.iter().all(|q| q.0 <= q.1));
            prop_assert!(p.windows(2).all(|w| w[0].1 < w[1].0));
        }
        for t in probes {
            prop_assert_eq!(a.intersect(&b).contains(t), a.contains(t) && b.contains(t));
            prop_assert_eq!(a.union(&b).contains(t), a.contains(t) || b.contains(t));
        }
    }

    #[test]
    fn quadratic_set_matches_sign(b in -5.0f64..5.0, c in -5.0f64..5.0, d in -5.0f64..5.0, t in -20.0f64..20.0) {
        let q = b + c * t + d * t * t;
        prop_assume!(q.abs() > 1e-9 * (1.0 + t * t));
        prop_assert_eq!(quadratic_feasible(b, c, d).contains(t), q <= 0.0);
    }

    #[test]
    fn accepted_steps_are_admissible(seed in any::<u64>(), states in 1usize..=6) {
        let (g, z) = setup(seed, states);
        let nlp = Nlp::new(&g);
        let g0 = nlp.constraints(&z).unwrap();
        prop_assume!(g0.iter().all(|&v| v < 0.0));
        let d = direction(&nlp, &z);
        prop_assume!(!d.zero);
        let p = StepParams::default();
        let st = optimal_step(&nlp, &z, &d.s, &d.gamma, d.slope, &p).unwrap();
        // feasible value constraints never have a negative discriminant with d ≥ 0
        prop_assert_eq!(st.proposition_violations, 0);
        prop_assert!(st.max_feasible > 0.0);
        prop_assert!(st.t > 0.0);
        prop_assert!(st.t <= st.max_feasible);
        let zn: Vec<f64> = z.iter().zip(&d.s).map(|(a, b)| a + st.t * b).collect();
        let gn = nlp.constraints(&zn).unwrap();
        let del = deltas(&d.gamma, p.delta0);
        for j in 0..gn.len() {
            prop_assert!(gn[j] < 0.0);
            prop_assert!(gn[j] <= del[j] * g0[j] + 1e-12 * (1.0 + g0[j].abs()));
        }
        let f0 = nlp.objective(&z).unwrap();
        prop_assert!((st.f_new - nlp.objective(&zn).unwrap()).abs() < 1e-12 * (1.0 + f0));
        prop_assert!(st.f_new <= f0 + st.t * p.eta * d.slope + 1e-13 * (1.0 + f0));
        if st.minimizer.is_none() && !st.fallback {
            // a monotone cubic on the admissible set goes as far as allowed
            prop_assert!(st.t >= st.max_feasible * 0.999f64.powi(8));
        }
    }
}
