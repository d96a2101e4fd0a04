mod common;

use common::{
    bernstein_program_feasible, cvar_feasible, empirical_cvar, perfect_grid_oracle, saturated_bisection,
    standard_normals,
};
use nalgebra::{Matrix2, Vector2};
use vlpc::allocator::{
    solve_bernstein, solve_cvar_sca, solve_perfect, solve_scheme, worst_case_cvar, AllocError, OutageForm,
    RobustConfig, Scheme,
};
use vlpc::scenario::{power_budget, Scenario};

const RATE: f64 = 2e8;

#[test]
fn perfect_matches_grid_search() {
    for m in [3, 4] {
        let s = Scenario::builtin(m).unwrap();
        let a = solve_perfect(&s, RATE).unwrap();
        let oracle = perfect_grid_oracle(&s, RATE, 20);
        assert!(a.crlb_value <= oracle * (1.0 + 1e-6), "M={m}: {} > {oracle}", a.crlb_value);
        assert!(a.crlb_value >= oracle * 0.98, "M={m}: {} vs {oracle}", a.crlb_value);
        assert!(a.kkt_residual <= 1e-6);
    }
}

#[test]
fn robust_programs_match_one_dimensional_search() {
    let s = Scenario::builtin(3).unwrap();
    for p_out in [0.01, 0.15] {
        let cfg = RobustConfig::new(RATE, p_out);
        let b = solve_bernstein(&s, &cfg).unwrap();
        let (pc, crlb) = saturated_bisection(&s, |p, pc| bernstein_program_feasible(&s, &cfg, p, pc)).unwrap();
        assert!((b.p_c - pc).abs() <= 1e-4 * pc.max(1.0), "{} vs {pc}", b.p_c);
        assert!((b.crlb_value - crlb).abs() <= 1e-6 * crlb);

        let c = solve_cvar_sca(&s, &cfg, None).unwrap();
        let (pc, crlb) = saturated_bisection(&s, |p, pc| cvar_feasible(&s, &cfg, p, pc)).unwrap();
        assert!((c.p_c - pc).abs() <= 1e-4 * pc.max(1.0), "{} vs {pc}", c.p_c);
        assert!((c.crlb_value - crlb).abs() <= 1e-6 * crlb);
    }
}

#[test]
fn budget_identity_holds() {
    for m in [3, 4, 6] {
        let s = Scenario::builtin(m).unwrap();
        let b = power_budget(&s);
        for p_out in [0.01, 0.15] {
            let cfg = RobustConfig::new(RATE, p_out);
            for scheme in Scheme::ALL {
                let a = solve_scheme(&s, scheme, &cfg).unwrap();
                let expect = (b.total_cap - a.p_c).min(m as f64 * b.per_led_cap);
                assert!((a.sum_p_p() - expect).abs() <= 1e-4, "M={m} {scheme}: {} vs {expect}", a.sum_p_p());
                assert_eq!(a.budget_violation(&s), 0.0);
            }
        }
    }
}

#[test]
fn perfect_design_is_least_conservative() {
    for m in [3, 6] {
        let s = Scenario::builtin(m).unwrap();
        for p_out in [0.01, 0.15] {
            let cfg = RobustConfig::new(RATE, p_out);
            let p = solve_perfect(&s, RATE).unwrap();
            let b = solve_bernstein(&s, &cfg).unwrap();
            let c = solve_cvar_sca(&s, &cfg, None).unwrap();
            assert!(p.crlb_value <= b.crlb_value * (1.0 + 1e-6));
            assert!(p.crlb_value <= c.crlb_value * (1.0 + 1e-6));
            assert!(p.p_c <= b.p_c.min(c.p_c) * (1.0 + 1e-6));
        }
    }
}

#[test]
fn sca_history_does_not_increase() {
    for m in [3, 6] {
        let s = Scenario::builtin(m).unwrap();
        for p_out in [0.01, 0.15] {
            let cfg = RobustConfig::new(RATE, p_out);
            let c = solve_cvar_sca(&s, &cfg, None).unwrap();
            assert!(c.warning.is_none(), "{:?}", c.warning);
            assert!(!c.history.is_empty() && c.history.len() <= cfg.sca_max_iter);
            for w in c.history.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-5), "{:?}", c.history);
            }
            assert_eq!(*c.history.last().unwrap(), c.crlb_value);
        }
    }
}

#[test]
fn sca_from_equal_split_reaches_same_design() {
    let s = Scenario::builtin(3).unwrap();
    let cfg = RobustConfig::new(RATE, 0.15);
    let a = solve_cvar_sca(&s, &cfg, None).unwrap();
    let b = solve_cvar_sca(&s, &cfg, Some((vec![90.0; 3], 5.0))).unwrap();
    assert!((a.crlb_value - b.crlb_value).abs() <= 1e-4 * a.crlb_value);
}

#[test]
fn cvar_design_bounds_sampled_cvar() {
    for m in [3, 6] {
        let s = Scenario::builtin(m).unwrap();
        let cfg = RobustConfig::new(RATE, 0.15);
        let a = solve_cvar_sca(&s, &cfg, None).unwrap();
        let f = OutageForm::new(&s, &a.p_p, a.p_c, a.serving, RATE).unwrap();
        let worst = worst_case_cvar(&f.b_mat, &f.b_vec, f.delta_b, cfg.p_out).unwrap();
        assert!(worst <= 1e-6 * f.delta_b.abs().max(1e-3), "worst-case CVaR {worst}");
        let losses: Vec<f64> = standard_normals(200_000, 99).iter().map(|xi| f.value(xi)).collect();
        let sampled = empirical_cvar(&losses, cfg.p_out);
        assert!(sampled <= worst, "{sampled} > {worst}");
    }
}

#[test]
fn worst_case_cvar_of_constant_loss() {
    let v = worst_case_cvar(&Matrix2::zeros(), &Vector2::zeros(), 0.3, 0.1).unwrap();
    assert!((v + 0.3).abs() < 1e-6, "{v}");
    let v = worst_case_cvar(&Matrix2::identity(), &Vector2::zeros(), 0.0, 0.5).unwrap();
    assert!(v >= 2.0 - 1e-6, "{v}");
}

#[test]
fn unreachable_rate_is_infeasible() {
    let s = Scenario::builtin(3).unwrap();
    let cfg = RobustConfig::new(9e8, 0.01);
    for scheme in Scheme::ALL {
        match solve_scheme(&s, scheme, &cfg) {
            Err(AllocError::Infeasible { .. }) => {}
            other => panic!("{scheme}: {other:?}"),
        }
    }
}

#[test]
fn invalid_outage_probability_is_rejected() {
    let s = Scenario::builtin(3).unwrap();
    for p_out in [0.0, 1.0, -0.2, f64::NAN] {
        let cfg = RobustConfig::new(RATE, p_out);
        assert!(matches!(solve_bernstein(&s, &cfg), Err(AllocError::Config(_))));
    }
}
