#![allow(dead_code, clippy::neg_cmp_op_on_partial_ord)]

use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use vlpc::allocator::{
    bernstein_bound, serving_led, worst_case_cvar, Linearization, OutageForm, RobustConfig,
};
use vlpc::conic::{ConeBlock, ConicProblem};
use vlpc::fisher::{crlb, fim, spd_power, FisherInfo, PositioningPowers, SpdExponent};
use vlpc::rate::{delta_b, delta_coefficient};
use vlpc::scenario::{power_budget, Scenario};

pub fn random_problem(rng: &mut ChaCha8Rng, n: usize) -> ConicProblem {
    let x0 = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
    let mut blocks = Vec::new();
    for i in 0..n {
        let mut a = DVector::zeros(n);
        a[i] = 1.0;
        blocks.push(ConeBlock::Linear { a: a.clone(), b: 5.0 });
        blocks.push(ConeBlock::Linear { a: -a, b: 5.0 });
    }
    let a = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let b = a.dot(&x0) + rng.random_range(0.1..1.0);
    blocks.push(ConeBlock::Linear { a, b });

    let rows = rng.random_range(2..=3);
    let f = DMatrix::from_fn(rows, n, |_, _| rng.random_range(-1.0..1.0));
    let f0 = DVector::from_fn(rows, |_, _| rng.random_range(-1.0..1.0));
    let c = DVector::from_fn(n, |_, _| rng.random_range(-0.5..0.5));
    let d = (&f * &x0 + &f0).norm() - c.dot(&x0) + rng.random_range(0.2..1.5);
    blocks.push(ConeBlock::SecondOrder { f, f0, c, d });

    let sym = |rng: &mut ChaCha8Rng| {
        let m = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        (&m + m.transpose()) * 0.5
    };
    let mats: Vec<DMatrix<f64>> = (0..n).map(|_| sym(rng)).collect();
    let b = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-0.7..0.7));
    let mut a0 = &b * b.transpose() + DMatrix::identity(3, 3) * 0.1;
    for (ai, xi) in mats.iter().zip(x0.iter()) {
        a0 -= ai * *xi;
    }
    blocks.push(ConeBlock::Semidefinite { a0, a: mats });
    ConicProblem {
        objective: DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)),
        blocks,
    }
}

/// Central-cut ellipsoid method on the block definitions.
pub fn ellipsoid_oracle(p: &ConicProblem) -> f64 {
    let n = p.num_vars();
    let nf = n as f64;
    let mut x = DVector::zeros(n);
    let r = 5.0 * nf.sqrt() * 1.05;
    let mut pm = DMatrix::identity(n, n) * (r * r);
    let mut best = f64::INFINITY;
    for _ in 0..60_000 {
        let mut cut = None;
        let mut worst = 0.0;
        for b in &p.blocks {
            let (v, g) = match b {
                ConeBlock::Linear { a, b } => (a.dot(&x) - b, a.clone()),
                ConeBlock::SecondOrder { f, f0, c, d } => {
                    let u = f * &x + f0;
                    let nu = u.norm();
                    let g = if nu > 0.0 { f.transpose() * &u / nu - c } else { -c };
                    (nu - c.dot(&x) - d, g)
                }
                ConeBlock::Semidefinite { a0, a } => {
                    let mut m = a0.clone();
                    for (ai, xi) in a.iter().zip(x.iter()) {
                        m += ai * *xi;
                    }
                    let eig = SymmetricEigen::new(m);
                    let k = eig.eigenvalues.imin();
                    let u = eig.eigenvectors.column(k).into_owned();
                    let g = DVector::from_iterator(n, a.iter().map(|ai| -(u.transpose() * ai * &u)[0]));
                    (-eig.eigenvalues[k], g)
                }
            };
            if v > worst {
                worst = v;
                cut = Some(g);
            }
        }
        let g = match cut {
            Some(g) => g,
            None => {
                best = best.min(p.objective.dot(&x));
                p.objective.clone()
            }
        };
        let pg = &pm * &g;
        let gpg = g.dot(&pg);
        if !(gpg > 1e-300) {
            break;
        }
        let gt = &pg / gpg.sqrt();
        x -= &gt * (1.0 / (nf + 1.0));
        pm = (&pm - &gt * gt.transpose() * (2.0 / (nf + 1.0))) * (nf * nf / (nf * nf - 1.0));
        pm = (&pm + pm.transpose()) * 0.5;
    }
    best
}

pub fn fim_of(s: &Scenario, p: &[f64]) -> Matrix2<f64> {
    fim(s, &PositioningPowers(p.to_vec())).unwrap().0
}

pub fn crlb_of(s: &Scenario, p: &[f64]) -> f64 {
    crlb(&FisherInfo(fim_of(s, p))).unwrap_or(f64::INFINITY)
}

/// E(t/2)/E(t) for each first-order model, where E is the model error along `dir`.
#[derive(Debug, Clone, Copy)]
pub struct HalvingRatios {
    pub b_matrix: f64,
    /// Generic direction.
    pub b_vector: f64,
    /// Direction p₀, along which J commutes with J₀.
    pub b_vector_radial: f64,
    pub delta_b: f64,
}

pub fn halving_ratios(s: &Scenario, rate_bps: f64, p0: &[f64], pc0: f64, dir: &[f64], t: f64) -> HalvingRatios {
    let serving = serving_led(s).unwrap();
    let lin = Linearization::new(s, serving, rate_bps, p0, pc0).unwrap();
    let h = (s.ue_position - s.leds[serving].pos()).xy();
    let at = |d: &[f64], t: f64| -> Vec<f64> { p0.iter().zip(d).map(|(p, d)| p + t * d).collect() };
    let err_b = |d: &[f64], t: f64| {
        let p = at(d, t);
        (fim_of(s, &p).try_inverse().unwrap() - lin.b_matrix(&p)).norm()
    };
    let err_v = |d: &[f64], t: f64| {
        let p = at(d, t);
        let exact = spd_power(&fim_of(s, &p), SpdExponent::InverseSqrt).unwrap() * h;
        (exact - lin.b_vector(&p)).norm()
    };
    let delta = delta_coefficient(s, serving, rate_bps);
    let err_d = |t: f64| {
        let pc = pc0 * (1.0 + t);
        (delta_b(delta, pc, &s.ue_position, &s.leds[serving]) - lin.delta_b_tangent(pc)).abs()
    };
    HalvingRatios {
        b_matrix: err_b(dir, t / 2.0) / err_b(dir, t),
        b_vector: err_v(dir, t / 2.0) / err_v(dir, t),
        b_vector_radial: err_v(p0, t / 2.0) / err_v(p0, t),
        delta_b: err_d(t / 2.0) / err_d(t),
    }
}

/// Empirical frequency of ξᵀBξ + 2bᵀξ exceeding the Bernstein bound, and the allowed e^{−η}.
pub fn bernstein_violation(b_mat: &Matrix2<f64>, b_vec: &Vector2<f64>, eta: f64, n: usize, seed: u64) -> (f64, f64) {
    let bound = bernstein_bound(b_mat, b_vec, eta);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..n {
        let xi = Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        if xi.dot(&(b_mat * xi)) + 2.0 * b_vec.dot(&xi) > bound {
            hits += 1;
        }
    }
    (hits as f64 / n as f64, (-eta).exp())
}

/// Random PSD B, vector b and risk level for the tail-bound checks.
pub fn random_quadratic(rng: &mut ChaCha8Rng) -> (Matrix2<f64>, Vector2<f64>, f64) {
    let a = Matrix2::from_fn(|_, _| rng.random_range(-1.0..1.0));
    let b_mat = a * a.transpose();
    let b_vec = Vector2::from_fn(|_, _| rng.random_range(-1.0..1.0));
    let p: f64 = rng.random_range(0.01..0.2);
    (b_mat, b_vec, (1.0 / p).ln())
}

/// Exhaustive grid over pilot powers for the perfect-CSI program at the smallest feasible P_c.
pub fn perfect_grid_oracle(s: &Scenario, rate_bps: f64, steps: usize) -> f64 {
    let serving = serving_led(s).unwrap();
    let b = power_budget(s);
    let delta = delta_coefficient(s, serving, rate_bps);
    let pc_steps = 200_000;
    let p_c = (0..=pc_steps)
        .map(|k| b.per_led_cap * k as f64 / pc_steps as f64)
        .find(|&pc| delta_b(delta, pc, &s.ue_position, &s.leds[serving]) >= 0.0)
        .expect("rate unreachable");
    let n = s.num_leds();
    let levels = |cap: f64| -> Vec<f64> {
        let mut v: Vec<f64> = (0..=steps).map(|k| b.per_led_cap * k as f64 / steps as f64).filter(|&x| x <= cap).collect();
        v.push(cap);
        v
    };
    let grids: Vec<Vec<f64>> = (0..n)
        .map(|i| levels(if i == serving { b.per_led_cap - p_c } else { b.per_led_cap }))
        .collect();
    let room = b.total_cap - p_c;
    let mut best = f64::INFINITY;
    let mut idx = vec![0usize; n];
    loop {
        let p: Vec<f64> = idx.iter().enumerate().map(|(i, &k)| grids[i][k]).collect();
        if p.iter().sum::<f64>() <= room * (1.0 + 1e-12) {
            best = best.min(crlb_of(s, &p));
        }
        let mut i = 0;
        loop {
            if i == n {
                return best;
            }
            idx[i] += 1;
            if idx[i] < grids[i].len() {
                break;
            }
            idx[i] = 0;
            i += 1;
        }
    }
}

/// Smallest P_c in [0, P̄] accepted by `feasible`, with non-serving LEDs at P̄ and the
/// serving LED at P̄ − P_c. Returns (P_c, CRLB).
pub fn saturated_bisection(s: &Scenario, feasible: impl Fn(&[f64], f64) -> bool) -> Option<(f64, f64)> {
    let serving = serving_led(s).unwrap();
    let cap = power_budget(s).per_led_cap;
    let powers = |pc: f64| -> Vec<f64> {
        (0..s.num_leds()).map(|i| if i == serving { cap - pc } else { cap }).collect()
    };
    if !feasible(&powers(cap), cap) {
        return None;
    }
    let (mut lo, mut hi) = (0.0, cap);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if feasible(&powers(mid), mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some((hi, crlb_of(s, &powers(hi))))
}

/// The Bernstein program's constraint evaluated with eigenvalues.
pub fn bernstein_program_feasible(s: &Scenario, cfg: &RobustConfig, p: &[f64], p_c: f64) -> bool {
    let serving = serving_led(s).unwrap();
    let j = fim_of(s, p);
    let lmin = j.symmetric_eigenvalues().min();
    if !(lmin > 0.0) {
        return false;
    }
    let eta = cfg.eta();
    let h = (s.ue_position - s.leds[serving].pos()).xy().norm();
    let omega = 2f64.sqrt() / lmin + 2f64.sqrt() * h / lmin.sqrt();
    let lhs = crlb_of(s, p) + (2.0 * eta).sqrt() * omega + eta / lmin;
    let delta = delta_coefficient(s, serving, cfg.rate_bps);
    lhs <= delta_b(delta, p_c, &s.ue_position, &s.leds[serving])
}

pub fn cvar_feasible(s: &Scenario, cfg: &RobustConfig, p: &[f64], p_c: f64) -> bool {
    let serving = serving_led(s).unwrap();
    let f = OutageForm::new(s, p, p_c, serving, cfg.rate_bps).unwrap();
    worst_case_cvar(&f.b_mat, &f.b_vec, f.delta_b, cfg.p_out).is_ok_and(|v| v <= 0.0)
}

/// Sample CVaR at level α: the mean of the worst α-fraction of losses.
pub fn empirical_cvar(losses: &[f64], alpha: f64) -> f64 {
    let mut v = losses.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    let k = ((alpha * v.len() as f64).ceil() as usize).max(1);
    v[..k].iter().sum::<f64>() / k as f64
}

pub fn standard_normals(n: usize, seed: u64) -> Vec<Vector2<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect()
}
