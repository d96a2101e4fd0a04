//! ABG input distribution, the EPI rate lower bound and the rate-threshold geometry.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{isi_power_split, ChannelGain, DiffuseParams};
use crate::scenario::{LedParams, Scenario};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RateError {
    #[error("signal power {epsilon} outside (0, A^2] for A = {amplitude}")]
    Domain { amplitude: f64, epsilon: f64 },
    #[error("ABG solver did not converge in {0} iterations")]
    NoConvergence(usize),
}

/// Parameters of the density e^{−1−α−βs−γs²} on [−A, A].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbgParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl AbgParams {
    /// Uniform density on [−A, A], the solution for ε = A²/3.
    pub fn uniform(amplitude: f64) -> Self {
        AbgParams {
            alpha: (2.0 * amplitude).ln() - 1.0,
            beta: 0.0,
            gamma: 0.0,
        }
    }
}

/// Gauss–Legendre nodes and weights on [−1, 1].
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = vec![(0.0, 0.0); n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out[i] = (-x, w);
        out[n - 1 - i] = (x, w);
    }
    out
}

const QUAD_NODES: usize = 128;

/// ln Z and the normalised moments E[t^k], k = 1..4, of e^{−bt−gt²} on [−1, 1].
fn moments(nodes: &[(f64, f64)], b: f64, g: f64) -> (f64, [f64; 4]) {
    let expo = |t: f64| -b * t - g * t * t;
    let shift = nodes.iter().map(|(t, _)| expo(*t)).fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    let mut m = [0.0; 4];
    for (t, w) in nodes {
        let f = w * (expo(*t) - shift).exp();
        z += f;
        let mut tk = 1.0;
        for mk in m.iter_mut() {
            tk *= t;
            *mk += f * tk;
        }
    }
    for mk in m.iter_mut() {
        *mk /= z;
    }
    (z.ln() + shift, m)
}

/// Normalisation, mean and power residuals of the ABG density (scaled by 1, A and A²).
pub fn abg_residuals(p: &AbgParams, amplitude: f64, epsilon: f64) -> [f64; 3] {
    let nodes = gauss_legendre(QUAD_NODES);
    let (b, g) = (p.beta * amplitude, p.gamma * amplitude * amplitude);
    let (ln_z, m) = moments(&nodes, b, g);
    let ln_mass = ln_z + amplitude.ln() - 1.0 - p.alpha;
    [
        ln_mass.exp() - 1.0,
        m[0],
        m[1] - epsilon / (amplitude * amplitude),
    ]
}

/// Solves the ABG moment system for (α, β, γ).
pub fn abg_params(amplitude: f64, epsilon: f64) -> Result<AbgParams, RateError> {
    let a2 = amplitude * amplitude;
    if !(amplitude > 0.0 && epsilon > 0.0 && epsilon <= a2) {
        return Err(RateError::Domain { amplitude, epsilon });
    }
    let target = epsilon / a2;
    if (target - 1.0 / 3.0).abs() <= 1e-15 {
        return Ok(AbgParams::uniform(amplitude));
    }
    let nodes = gauss_legendre(QUAD_NODES);
    let resid = |x: &Vector2<f64>| {
        let (_, m) = moments(&nodes, x[0], x[1]);
        Vector2::new(m[0], m[1] - target)
    };
    let mut x = Vector2::zeros();
    let mut r = resid(&x);
    const MAX_ITER: usize = 200;
    for _ in 0..MAX_ITER {
        if r.norm() < 1e-13 {
            let (ln_z, _) = moments(&nodes, x[0], x[1]);
            return Ok(AbgParams {
                alpha: ln_z + amplitude.ln() - 1.0,
                beta: x[0] / amplitude,
                gamma: x[1] / a2,
            });
        }
        let (_, m) = moments(&nodes, x[0], x[1]);
        // Moment derivatives are covariances of (t, t²).
        let jac = Matrix2::new(
            -(m[1] - m[0] * m[0]),
            -(m[2] - m[0] * m[1]),
            -(m[2] - m[0] * m[1]),
            -(m[3] - m[1] * m[1]),
        );
        let Some(step) = jac.lu().solve(&(-r)) else {
            return Err(RateError::NoConvergence(MAX_ITER));
        };
        let mut t = 1.0;
        loop {
            let trial = x + step * t;
            let rt = resid(&trial);
            if rt.norm() < (1.0 - 1e-4 * t) * r.norm() || t < 1e-10 {
                x = trial;
                r = rt;
                break;
            }
            t *= 0.5;
        }
    }
    Err(RateError::NoConvergence(MAX_ITER))
}

/// e^{1+2(α+γε)}/(2πWσ_c²): effective SNR per unit g²P_c.
pub fn snr_factor(s: &Scenario) -> f64 {
    let abg = &s.abg;
    (1.0 + 2.0 * (abg.alpha + abg.gamma * s.signal_power)).exp()
        / (2.0 * PI * s.bandwidth * s.noise_psd_comm)
}

/// Achievable rate, bits/s.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct RateBound(pub f64);

impl RateBound {
    pub fn bps(self) -> f64 {
        self.0
    }

    pub fn mbps(self) -> f64 {
        self.0 / 1e6
    }
}

/// R_L = W log₂(1 + (ĝ+Δg)²P_c·e^{1+2(α+γε)}/(2πWσ_c²)).
pub fn rate_lower_bound(g_hat: f64, dg: f64, p_c: f64, s: &Scenario) -> RateBound {
    let g = g_hat + dg;
    RateBound(s.bandwidth * (g * g * p_c.max(0.0) * snr_factor(s)).ln_1p() / std::f64::consts::LN_2)
}

/// δ such that the rate target holds iff ‖u − v‖² ≤ δ·P_c^{1/(m+3)}.
pub fn delta_coefficient(s: &Scenario, serving: usize, rate_bps: f64) -> f64 {
    let led = &s.leds[serving];
    let mu = crate::channel::lambertian_scale(led, &s.pd);
    let dz = led.position[2] - s.ue_position.z;
    let need = (rate_bps / s.bandwidth * std::f64::consts::LN_2).exp_m1();
    (snr_factor(s) * mu * mu * dz.powf(2.0 * (led.m + 1.0)) / need).powf(1.0 / (led.m + 3.0))
}

/// δ_b = δ·P_c^{1/(m+3)} − ‖û − v‖² (3-D distance).
pub fn delta_b(delta: f64, p_c: f64, u_hat: &Vector3<f64>, serving: &LedParams) -> f64 {
    delta * p_c.max(0.0).powf(1.0 / (serving.m + 3.0)) - (u_hat - serving.pos()).norm_squared()
}

/// Rate with the diffuse tail split into useful power and ISI treated as noise.
pub fn rate_los_diffuse(
    p_c: f64,
    g_los: ChannelGain,
    diffuse: &DiffuseParams,
    s: &Scenario,
) -> RateBound {
    let (p1, p2) = isi_power_split(p_c, g_los, diffuse, s.bandwidth);
    let abg = &s.abg;
    let gain = (1.0 + 2.0 * (abg.alpha + abg.gamma * s.signal_power)).exp();
    let noise = 2.0 * PI * s.bandwidth * s.noise_psd_comm;
    let num = noise + (p1 + p2) * gain;
    let den = noise + 2.0 * PI * s.signal_power * p2;
    RateBound((s.bandwidth * (num / den).log2()).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::erf::erf;

    #[test]
    fn uniform_closed_form() {
        let p = abg_params(0.1, 0.01 / 3.0).unwrap();
        assert_eq!(p.beta, 0.0);
        assert_eq!(p.gamma, 0.0);
        assert!((p.alpha - (0.2f64.ln() - 1.0)).abs() < 1e-15);
        for r in abg_residuals(&p, 0.1, 0.01 / 3.0) {
            assert!(r.abs() < 1e-8);
        }
    }

    #[test]
    fn printed_alpha_differs() {
        // α = ln(2√0.1) − 1 does not normalise the density.
        let printed = AbgParams {
            alpha: (2.0 * 0.1f64.sqrt()).ln() - 1.0,
            beta: 0.0,
            gamma: 0.0,
        };
        let r = abg_residuals(&printed, 0.1, 0.01 / 3.0);
        assert!(r[0].abs() > 0.5);
    }

    #[test]
    fn concentrated_input_solves_system() {
        let a = 0.1;
        for frac in [0.05, 0.2, 0.3] {
            let eps = frac * a * a;
            let p = abg_params(a, eps).unwrap();
            assert!(p.gamma > 0.0);
            assert!(p.beta.abs() < 1e-9);
            for r in abg_residuals(&p, a, eps) {
                assert!(r.abs() < 1e-8, "{r}");
            }
            // erf form of the normalisation and power equations for β = 0
            let (al, g) = (p.alpha, p.gamma);
            let sg = g.sqrt();
            let eq_a = PI.sqrt() * (erf(sg * a) - erf(-sg * a)) / (2.0 * sg * (1.0 + al).exp());
            assert!((eq_a - 1.0).abs() < 1e-8);
            let eq_c = (-2.0 * g * a * (-g * a * a).exp() - 2.0 * g * a * (-g * a * a).exp())
                / (4.0 * g * g * (1.0 + al).exp())
                + 2.0 * g / (4.0 * g * g);
            assert!((eq_c - eps).abs() / eps < 1e-8);
        }
    }

    #[test]
    fn spread_input_has_negative_gamma() {
        let a = 0.1;
        let eps = 0.6 * a * a;
        let p = abg_params(a, eps).unwrap();
        assert!(p.gamma < 0.0);
        for r in abg_residuals(&p, a, eps) {
            assert!(r.abs() < 1e-8);
        }
    }

    #[test]
    fn near_uniform_is_symmetric() {
        let a = 0.1;
        let eps = a * a / 3.0 + 1e-6;
        let p = abg_params(a, eps).unwrap();
        assert!(p.beta.abs() < 1e-4);
        for r in abg_residuals(&p, a, eps) {
            assert!(r.abs() < 1e-8);
        }
    }

    #[test]
    fn domain_errors() {
        assert!(abg_params(0.1, 0.0).is_err());
        assert!(abg_params(0.1, 0.02).is_err());
    }

    fn nominal() -> Scenario {
        Scenario::builtin(3).unwrap()
    }

    #[test]
    fn rate_examples() {
        let s = nominal();
        assert_eq!(rate_lower_bound(3e-5, 0.0, 0.0, &s).0, 0.0);
        assert_eq!(rate_lower_bound(3e-5, -3e-5, 5.0, &s).0, 0.0);
        let r = rate_lower_bound(3e-5, 0.0, 50.0, &s).0;
        let direct = 2e7
            * (1.0 + 9e-10 * 50.0 * (1.0 + 2.0 * (0.2f64.ln() - 1.0)).exp() / (2.0 * PI * 2e7 * 1e-22))
                .log2();
        assert!((r - direct).abs() < 1e-6 * direct);
        assert!((r - 3.14e8).abs() < 0.01e8, "{r}");
    }

    #[test]
    fn delta_example() {
        let s = nominal();
        let d = delta_coefficient(&s, 0, 2e8);
        assert!((d.powi(4) - 1.16).abs() < 0.01, "{}", d.powi(4));
        assert!((d - 1.04).abs() < 0.01);
        let mut last = f64::INFINITY;
        for k in 1..=10 {
            let dk = delta_coefficient(&s, 0, k as f64 * 3e7);
            assert!(dk < last);
            last = dk;
        }
        assert!(delta_coefficient(&s, 0, 1e-3) > 1e3);
        assert!(delta_coefficient(&s, 0, 1e-9) > 10.0 * delta_coefficient(&s, 0, 1e-3));
    }

    #[test]
    fn delta_b_examples() {
        let s = nominal();
        let led = &s.leds[0];
        let u = s.ue_position;
        let d2 = (u - led.pos()).norm_squared();
        assert_eq!(delta_b(1.04, 0.0, &u, led), -d2);
        let p_zero = (d2 / 1.04f64).powi(4);
        assert!(delta_b(1.04, p_zero, &u, led).abs() < 1e-14);
    }

    #[test]
    fn diffuse_rate_limits() {
        let s = nominal();
        let g = ChannelGain(3.03e-5);
        let los = rate_lower_bound(g.0, 0.0, 1.3, &s).0;
        let none = rate_los_diffuse(1.3, g, &DiffuseParams::none(), &s).0;
        assert!((los - none).abs() < 1e-6 * los);
        assert_eq!(rate_los_diffuse(0.0, g, &DiffuseParams::none(), &s).0, 0.0);
        let d = DiffuseParams::from_energy_ratio(g.0, 12.0, 15e-9, 10e-9);
        assert!(rate_los_diffuse(1.3, g, &d, &s).0 < los);
    }
}
