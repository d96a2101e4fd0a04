mod common;

use common::standard_normals;
use nalgebra::{Matrix2, Vector2};
use vlpc::allocator::{solve_perfect, solve_scheme, OutageForm, RobustConfig, Scheme};
use vlpc::channel::los_gain;
use vlpc::montecarlo::{
    achieved_rate, binomial_sigma, outage_probability, rate_cdf, sample_errors, sweep, ChannelKind, Cdf,
    ErrorKind, ErrorModel, McError, CDF_POINTS,
};
use vlpc::rate::rate_lower_bound;
use vlpc::scenario::Scenario;

const RATE: f64 = 2e8;

fn moments(v: &[Vector2<f64>]) -> (Vector2<f64>, Matrix2<f64>) {
    let n = v.len() as f64;
    let mean = v.iter().fold(Vector2::zeros(), |a, x| a + x) / n;
    let cov = v.iter().fold(Matrix2::zeros(), |a, x| a + (x - mean) * (x - mean).transpose()) / n;
    (mean, cov)
}

#[test]
fn sample_covariance_converges() {
    let cov = Matrix2::new(2.0, 0.6, 0.6, 1.0);
    for kind in [ErrorKind::Gaussian, ErrorKind::UniformEllipse, ErrorKind::TwoPointMixture] {
        let v = sample_errors(&ErrorModel::new(kind, cov), 1_000_000, 3).unwrap();
        assert_eq!(v.len(), 1_000_000);
        let (mean, c) = moments(&v);
        assert!(mean.norm() < 0.01, "{kind}: {mean}");
        assert!((c - cov).amax() <= 0.02 * cov.amax(), "{kind}: {c}");
    }
    let v = sample_errors(&ErrorModel::new(ErrorKind::Gaussian, Matrix2::identity()), 1_000_000, 8).unwrap();
    let (_, c) = moments(&v);
    assert!((c - Matrix2::identity()).amax() <= 0.01, "{c}");
}

#[test]
fn two_point_mixture_is_covariance_exact() {
    let cov = Matrix2::new(0.5, -0.2, -0.2, 0.3);
    for n in [4, 40, 4000] {
        let v = sample_errors(&ErrorModel::new(ErrorKind::TwoPointMixture, cov), n, 11).unwrap();
        let (mean, c) = moments(&v);
        assert!(mean.norm() < 1e-12);
        assert!((c - cov).amax() < 1e-12, "{c}");
    }
}

#[test]
fn sampling_edge_cases() {
    let model = ErrorModel::new(ErrorKind::Gaussian, Matrix2::identity());
    assert!(sample_errors(&model, 0, 1).unwrap().is_empty());
    let bad = ErrorModel::new(ErrorKind::Gaussian, Matrix2::new(1.0, 2.0, 2.0, 1.0));
    assert_eq!(sample_errors(&bad, 10, 1), Err(McError::NotSpd));
    let zero = ErrorModel::new(ErrorKind::UniformEllipse, Matrix2::zeros());
    assert!(sample_errors(&zero, 5, 1).unwrap().iter().all(|e| *e == Vector2::zeros()));
}

#[test]
fn outage_counts() {
    assert_eq!(outage_probability(&[3.0, 4.0], 2.0), Ok(0.0));
    assert_eq!(outage_probability(&[1.0, 2.0], 2.0), Ok(1.0));
    assert_eq!(outage_probability(&[1.0, 3.0, 5.0, 7.0], 4.0), Ok(0.5));
    assert_eq!(outage_probability(&[], 1.0), Err(McError::Empty));
}

#[test]
fn zero_error_gives_a_step_cdf() {
    let s = Scenario::builtin(3).unwrap();
    let a = solve_perfect(&s, RATE).unwrap();
    let model = ErrorModel::new(ErrorKind::Gaussian, Matrix2::zeros());
    let r = rate_cdf(&s, &a, &model, 1000, ChannelKind::Los, 1, 1.5e8).unwrap();
    let g = los_gain(&s.leds[a.serving], &s.ue_position, &s.pd).unwrap().0;
    let exact = rate_lower_bound(g, 0.0, a.p_c, &s).bps();
    assert!(r.rates.iter().all(|&x| x == exact));
    assert!((exact - RATE).abs() < 1e-3 * RATE, "{exact}");
    assert_eq!(r.outage, 0.0);
    assert!(r.cdf.probs.iter().all(|&p| p == 1.0));
    assert_eq!(achieved_rate(&s, &a, &Vector2::zeros(), ChannelKind::Los), exact);
}

#[test]
fn cdf_is_monotone_and_complete() {
    let s = Scenario::builtin(6).unwrap();
    let cfg = RobustConfig::new(RATE, 0.15);
    let a = solve_scheme(&s, Scheme::Bernstein, &cfg).unwrap();
    let model = ErrorModel::for_allocation(&s, &a, ErrorKind::Gaussian).unwrap();
    let r = rate_cdf(&s, &a, &model, 5000, ChannelKind::LosDiffuse, 2, RATE).unwrap();
    assert_eq!(r.cdf.values.len(), CDF_POINTS);
    assert!(r.cdf.values.windows(2).all(|w| w[0] <= w[1]));
    assert!(r.cdf.probs.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(*r.cdf.probs.last().unwrap(), 1.0);
    assert!(r.cdf.probs[0] > 0.0);
    assert_eq!(Cdf::from_samples(&[], 10), Err(McError::Empty));
}

#[test]
fn outage_matches_quadratic_form_probability() {
    let n = 10_000;
    for m in [3, 6] {
        let s = Scenario::builtin(m).unwrap();
        let a = solve_perfect(&s, RATE).unwrap();
        let model = ErrorModel::for_allocation(&s, &a, ErrorKind::Gaussian).unwrap();
        let mc = rate_cdf(&s, &a, &model, n, ChannelKind::Los, 5, RATE).unwrap().outage;
        let f = OutageForm::new(&s, &a.p_p, a.p_c, a.serving, RATE).unwrap();
        let big = standard_normals(1_000_000, 0xDEAD);
        let p = big.iter().filter(|xi| f.value(xi) >= 0.0).count() as f64 / big.len() as f64;
        assert!((mc - p).abs() <= 3.0 * binomial_sigma(p, n), "M={m}: {mc} vs {p}");
    }
}

#[test]
fn nonrobust_los_outage_near_one_half() {
    let s = Scenario::builtin(6).unwrap();
    let a = solve_perfect(&s, RATE).unwrap();
    let model = ErrorModel::for_allocation(&s, &a, ErrorKind::Gaussian).unwrap();
    let r = rate_cdf(&s, &a, &model, 10_000, ChannelKind::Los, 1, RATE).unwrap();
    assert!((r.outage - 0.5).abs() <= 0.15, "{}", r.outage);
}

#[test]
fn deterministic_across_thread_counts() {
    let s = Scenario::builtin(3).unwrap();
    let a = solve_perfect(&s, RATE).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            ErrorKind::ALL
                .iter()
                .map(|&kind| {
                    let model = ErrorModel::for_allocation(&s, &a, kind).unwrap();
                    rate_cdf(&s, &a, &model, 3001, ChannelKind::LosDiffuse, 42, RATE).unwrap()
                })
                .collect::<Vec<_>>()
        })
    };
    let one = run(1);
    let four = run(4);
    assert_eq!(one, four);
    assert_eq!(one, run(4));
}

#[test]
fn outage_stable_across_seeds() {
    let s = Scenario::builtin(3).unwrap();
    let a = solve_perfect(&s, RATE).unwrap();
    let model = ErrorModel::for_allocation(&s, &a, ErrorKind::Gaussian).unwrap();
    let n = 10_000;
    let outages: Vec<f64> = (0..10)
        .map(|seed| rate_cdf(&s, &a, &model, n, ChannelKind::Los, 100 + seed, RATE).unwrap().outage)
        .collect();
    let mean = outages.iter().sum::<f64>() / 10.0;
    let sigma = binomial_sigma(mean, n);
    for o in &outages {
        assert!((o - mean).abs() <= 3.0 * sigma, "{outages:?}");
    }
}

#[test]
fn single_point_sweep_reproduces_solve() {
    let s = Scenario::builtin(3).unwrap();
    let cfg = RobustConfig::new(RATE, 0.01);
    let rows = sweep(&s, Scheme::Bernstein, &[RATE], &cfg);
    let a = solve_scheme(&s, Scheme::Bernstein, &cfg).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].status, "ok");
    assert_eq!(rows[0].sqrt_crlb_m, a.sqrt_crlb());
    assert_eq!(rows[0].p_c_w, a.p_c);
    assert_eq!(rows[0].sum_p_p_w, a.sum_p_p());
}

#[test]
fn sweep_is_monotone_and_more_leds_help() {
    let grid: Vec<f64> = (0..10).map(|k| 1e8 + 1.2e8 * k as f64 / 9.0).collect();
    let cfg = RobustConfig::new(RATE, 0.01);
    for scheme in Scheme::ALL {
        let three = sweep(&Scenario::builtin(3).unwrap(), scheme, &grid, &cfg);
        let six = sweep(&Scenario::builtin(6).unwrap(), scheme, &grid, &cfg);
        for rows in [&three, &six] {
            assert!(rows.iter().all(|r| r.status == "ok"), "{scheme}");
            for w in rows.windows(2) {
                assert!(w[1].sqrt_crlb_m >= w[0].sqrt_crlb_m * (1.0 - 1e-6), "{scheme} {w:?}");
                assert!(w[1].p_c_w >= w[0].p_c_w * (1.0 - 1e-6), "{scheme} {w:?}");
            }
        }
        for (a, b) in six.iter().zip(&three) {
            assert!(a.sqrt_crlb_m <= b.sqrt_crlb_m);
        }
    }
}

#[test]
fn infeasible_sweep_points_are_marked() {
    let s = Scenario::builtin(3).unwrap();
    let cfg = RobustConfig::new(RATE, 0.01);
    let rows = sweep(&s, Scheme::Cvar, &[2e8, 8e8], &cfg);
    assert_eq!(rows[0].status, "ok");
    assert_eq!(rows[1].status, "infeasible");
    assert!(rows[1].sqrt_crlb_m.is_nan());
}
