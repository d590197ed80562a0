mod common;

use common::*;
use sgnash_core::diagnostics::eps_nash_certify;
use sgnash_core::random::bimatrix_game;
use sgnash_core::solver::*;

#[test]
fn single_action_game_reaches_its_value() {
    let g = two_state_chain(0.6);
    let rep = solve(&g, &SolverConfig::default()).unwrap();
    assert!(rep.f < 1e-6, "f = {} after {:?}", rep.f, rep.stop_reason);
    let oracle = policy_evaluation(&g, &rep.pi);
    for i in 0..2 {
        assert!(max_abs_diff(&rep.v.v[i], &oracle[i]) < 1e-5);
    }
    assert!(rep.initial_f > rep.f);
}

#[test]
fn matching_pennies_mixes_evenly() {
    let (a, b) = matching_pennies();
    let g = bimatrix_game(&a, &b, 0.5).unwrap();
    let rep = solve(&g, &SolverConfig::default()).unwrap();
    for i in 0..2 {
        assert!((rep.pi.pi[i][0][0] - 0.5).abs() < 1e-3, "{:?}", rep.pi.pi[i][0]);
    }
    assert!(eps_nash_certify(&g, &rep.pi).unwrap().eps_emp < 1e-4);
    assert_eq!(rep.total_violations(1e-6), 0);
}

#[test]
fn trace_is_monotone_and_consistent() {
    for g in test_games(51).into_iter().take(3) {
        let cfg = SolverConfig { max_iters: 200, ..Default::default() };
        let rep = solve(&g, &cfg).unwrap();
        assert_eq!(rep.trace.len(), rep.iterations + 1);
        assert_eq!(rep.checks.len(), rep.iterations);
        assert!(rep.trace.windows(2).all(|w| w[1].f <= w[0].f && w[0].t > 0.0));
        assert!(rep.trace.iter().all(|r| r.maxg < 0.0));
        assert_eq!(rep.trace[0].f, rep.initial_f);
        assert!((rep.epsilon - rep.f.max(0.0) / (1.0 - g.discount())).abs() < 1e-15);
        assert_eq!(rep.total_violations(1e-6), 0);
    }
}

#[test]
fn zero_iterations_gives_one_row() {
    let g = &test_games(52)[1];
    let rep = solve(g, &SolverConfig { max_iters: 0, ..Default::default() }).unwrap();
    assert_eq!(rep.stop_reason, StopReason::MaxIters);
    assert_eq!(rep.trace.len(), 1);
    let mut buf = Vec::new();
    write_trace(&rep.trace, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), "iter,f,normS0,normS,t,maxg,active");
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn trace_round_trip() {
    let g = &test_games(53)[2];
    let rep = solve(g, &SolverConfig { max_iters: 25, ..Default::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    trace_export(&rep, &path).unwrap();
    let back = trace_import(&path).unwrap();
    assert_eq!(back, rep.trace);
}

#[test]
fn config_validation() {
    let ok = SolverConfig::default();
    assert!(ok.validate().is_ok());
    let bad = [
        SolverConfig { init_slack: 0.0, ..ok.clone() },
        SolverConfig { ts_alpha: 1.0, ..ok.clone() },
        SolverConfig { rho0: -1.0, ..ok.clone() },
        SolverConfig { weight: 0.0, ..ok.clone() },
        SolverConfig { delta0: 0.0, ..ok.clone() },
        SolverConfig { eta: 1.5, ..ok.clone() },
        SolverConfig { nu: 1.0, ..ok.clone() },
        SolverConfig { t_min: 2e6, ..ok.clone() },
        SolverConfig { tol_s: 0.0, ..ok.clone() },
    ];
    let g = two_state_chain(0.5);
    for c in bad {
        assert!(c.validate().is_err());
        assert!(solve(&g, &c).is_err());
    }
}

#[test]
fn infeasible_start_rejected() {
    let g = two_state_chain(0.5);
    assert!(solve_from(&g, &SolverConfig::default(), vec![0.0, 0.0, 0.0, 0.0]).is_err());
    assert!(solve_from(&g, &SolverConfig::default(), vec![1.0]).is_err());
}

#[test]
fn report_json_round_trip() {
    let g = &test_games(54)[0];
    let rep = solve(g, &SolverConfig { max_iters: 5, ..Default::default() }).unwrap();
    let json = serde_json::to_string(&rep).unwrap();
    let back: SolveReport = serde_json::from_str(&json).unwrap();
    assert_eq!((back.f, back.iterations, back.stop_reason), (rep.f, rep.iterations, rep.stop_reason));
    let p: serde_json::Value = serde_json::from_str(&rep.point_json().unwrap()).unwrap();
    assert_eq!(p["pi"][0].as_array().unwrap().len(), g.num_states());
}
