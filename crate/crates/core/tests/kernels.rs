mod common;

use common::{bernstein_violation, crlb_of, fim_of, halving_ratios, random_quadratic};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vlpc::allocator::{serving_led, solve_bernstein, RobustConfig};
use vlpc::channel::{gain_gradient, los_gain};
use vlpc::rate::{delta_b, delta_coefficient, rate_lower_bound};
use vlpc::scenario::Scenario;

#[test]
fn gradient_matches_central_differences() {
    let s = Scenario::builtin(4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let h = 1e-5;
    let mut checked = 0;
    while checked < 50 {
        let pos = Vector3::new(rng.random_range(0.2..4.8), rng.random_range(0.2..4.8), rng.random_range(0.0..2.0));
        for led in &s.leds {
            let g = |x: f64, y: f64| los_gain(led, &Vector3::new(x, y, pos.z), &s.pd).unwrap().0;
            let stencil = [g(pos.x + h, pos.y), g(pos.x - h, pos.y), g(pos.x, pos.y + h), g(pos.x, pos.y - h)];
            if stencil.contains(&0.0) {
                continue;
            }
            let fd = nalgebra::Vector2::new((stencil[0] - stencil[1]) / (2.0 * h), (stencil[2] - stencil[3]) / (2.0 * h));
            let an = gain_gradient(led, &pos, &s.pd);
            let rel = (fd - an).norm() / an.norm().max(1e-300);
            assert!(rel < 1e-6, "{pos:?}: {rel}");
        }
        checked += 1;
    }
}

#[test]
fn fim_is_linear_in_powers() {
    let s = Scenario::builtin(6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let p: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..100.0)).collect();
        let q: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..100.0)).collect();
        let (a, b) = (rng.random_range(0.0..3.0), rng.random_range(0.0..3.0));
        let mix: Vec<f64> = p.iter().zip(&q).map(|(x, y)| a * x + b * y).collect();
        let lhs = fim_of(&s, &mix);
        let rhs = fim_of(&s, &p) * a + fim_of(&s, &q) * b;
        assert!((lhs - rhs).norm() <= 1e-12 * rhs.norm());
    }
}

#[test]
fn crlb_halves_when_powers_double() {
    let s = Scenario::builtin(3).unwrap();
    let p = [30.0, 60.0, 90.0];
    let p2: Vec<f64> = p.iter().map(|x| 2.0 * x).collect();
    assert!((crlb_of(&s, &p2) - 0.5 * crlb_of(&s, &p)).abs() < 1e-12 * crlb_of(&s, &p));
}

#[test]
fn rate_target_sits_on_the_distance_boundary() {
    for m in [3, 4, 6] {
        let s = Scenario::builtin(m).unwrap();
        let serving = serving_led(&s).unwrap();
        let led = &s.leds[serving];
        let g = los_gain(led, &s.ue_position, &s.pd).unwrap().0;
        for p_c in [0.1, 1.0, 10.0, 50.0] {
            let r = rate_lower_bound(g, 0.0, p_c, &s).bps();
            let delta = delta_coefficient(&s, serving, r);
            let db = delta_b(delta, p_c, &s.ue_position, led);
            let d2 = (s.ue_position - led.pos()).norm_squared();
            assert!(db.abs() <= 1e-9 * d2, "M={m} P_c={p_c}: δ_b = {db}");
            let above = delta_coefficient(&s, serving, r * 1.01);
            assert!(delta_b(above, p_c, &s.ue_position, led) < 0.0);
        }
    }
}

#[test]
fn linearizations_halving() {
    let s = Scenario::builtin(3).unwrap();
    let cfg = RobustConfig::new(2e8, 0.01);
    let a = solve_bernstein(&s, &cfg).unwrap();
    let dir = [-12.0, -50.0, 7.0];
    let r = halving_ratios(&s, cfg.rate_bps, &a.p_p, a.p_c, &dir, 0.1);
    assert!((r.b_matrix - 0.25).abs() <= 0.05, "{r:?}");
    assert!((r.delta_b - 0.25).abs() <= 0.05, "{r:?}");
    assert!((r.b_vector_radial - 0.25).abs() <= 0.05, "{r:?}");
    // J^{-1/2} is not differentiated exactly off the commuting direction.
    assert!((r.b_vector - 0.5).abs() <= 0.1, "{r:?}");
}

#[test]
fn bernstein_tail_bound_holds() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let n = 20_000;
    for k in 0..50 {
        let (b_mat, b_vec, eta) = random_quadratic(&mut rng);
        let (freq, allowed) = bernstein_violation(&b_mat, &b_vec, eta, n, 1000 + k);
        let margin = 3.0 * (allowed * (1.0 - allowed) / n as f64).sqrt();
        assert!(freq <= allowed + margin, "instance {k}: {freq} > {allowed}");
    }
}
