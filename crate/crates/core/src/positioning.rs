//! RSS positioning subframe: noisy matched-filter gains and least-squares triangulation.

use nalgebra::{Matrix2, Vector2, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::channel::{gain_gradient, los_gain};
use crate::scenario::Scenario;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PositioningError {
    #[error("underdetermined: {0} usable LEDs, at least 3 non-collinear needed")]
    Underdetermined(usize),
    #[error("least squares diverged after {0} iterations")]
    Diverged(usize),
    #[error("positioning power vector has {got} entries, scenario has {expected} LEDs")]
    Length { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResidualKind {
    /// ĝᵢ − g(û, vᵢ)
    #[default]
    Gain,
    /// Received pilot power p_y,i − g(û, vᵢ)²P_p,iε.
    Power,
}

/// One positioning subframe as seen by the receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct RssMeasurement {
    /// LED indices heard in the subframe.
    pub visible: Vec<usize>,
    /// Matched-filter gain estimates, aligned with `visible`.
    pub gains: Vec<f64>,
    /// Received pilot powers ĝᵢ²P_p,iε, aligned with `visible`.
    pub powers: Vec<f64>,
    /// Pilot powers, aligned with `visible`.
    pub pilot_powers: Vec<f64>,
}

impl RssMeasurement {
    /// LED with the largest estimated gain (ties to the lower index).
    pub fn strongest(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (&i, &g) in self.visible.iter().zip(&self.gains) {
            if best.is_none_or(|(_, b)| g > b) {
                best = Some((i, g));
            }
        }
        best.map(|(i, _)| i)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionEstimate {
    pub position: Vector3<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub residual_norm: f64,
}

/// Matched-filter output variance σ_p²/(P_p ε T_p).
pub fn gain_noise_variance(s: &Scenario, p: f64) -> f64 {
    s.noise_psd_positioning / (p * s.signal_power * s.positioning_subframe)
}

/// Draws ĝᵢ = gᵢ + nᵢ at the scenario's UE position.
pub fn simulate_rss<R: Rng + ?Sized>(
    s: &Scenario,
    p_p: &[f64],
    rng: &mut R,
) -> Result<RssMeasurement, PositioningError> {
    simulate_rss_at(s, &s.ue_position, p_p, rng)
}

pub fn simulate_rss_at<R: Rng + ?Sized>(
    s: &Scenario,
    position: &Vector3<f64>,
    p_p: &[f64],
    rng: &mut R,
) -> Result<RssMeasurement, PositioningError> {
    if p_p.len() != s.num_leds() {
        return Err(PositioningError::Length {
            expected: s.num_leds(),
            got: p_p.len(),
        });
    }
    let mut m = RssMeasurement {
        visible: Vec::new(),
        gains: Vec::new(),
        powers: Vec::new(),
        pilot_powers: Vec::new(),
    };
    for (i, (led, &p)) in s.leds.iter().zip(p_p).enumerate() {
        let g = match los_gain(led, position, &s.pd) {
            Ok(g) if g.0 > 0.0 => g.0,
            _ => continue,
        };
        if !(p > 0.0) {
            continue;
        }
        let z: f64 = rng.sample(StandardNormal);
        let g_hat = g + gain_noise_variance(s, p).sqrt() * z;
        m.visible.push(i);
        m.gains.push(g_hat);
        m.powers.push(g_hat * g_hat * p * s.signal_power);
        m.pilot_powers.push(p);
    }
    Ok(m)
}

/// Euclidean positioning error.
pub fn rse(u: &Vector3<f64>, u_hat: &Vector3<f64>) -> f64 {
    (u - u_hat).norm()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsOptions {
    pub kind: ResidualKind,
    pub step_tol: f64,
    pub max_iter: usize,
    /// Consecutive cost increases tolerated before giving up.
    pub divergence_steps: usize,
}

impl Default for LsOptions {
    fn default() -> Self {
        LsOptions {
            kind: ResidualKind::Gain,
            step_tol: 1e-9,
            max_iter: 100,
            divergence_steps: 10,
        }
    }
}

/// Centroid of the LED footprints (the room centre for the symmetric layouts).
pub fn default_init(s: &Scenario) -> Vector2<f64> {
    let n = s.num_leds() as f64;
    s.leds.iter().fold(Vector2::zeros(), |a, l| a + l.pos().xy()) / n
}

fn collinear(s: &Scenario, idx: &[usize]) -> bool {
    for a in 0..idx.len() {
        for b in a + 1..idx.len() {
            for c in b + 1..idx.len() {
                let p = s.leds[idx[a]].pos().xy();
                let q = s.leds[idx[b]].pos().xy();
                let r = s.leds[idx[c]].pos().xy();
                if (q - p).perp(&(r - p)).abs() > 1e-9 {
                    return false;
                }
            }
        }
    }
    true
}

/// Weighted residuals and Jacobian at the horizontal position `xy`.
fn residuals(
    m: &RssMeasurement,
    s: &Scenario,
    xy: &Vector2<f64>,
    kind: ResidualKind,
) -> (Vec<f64>, Vec<Vector2<f64>>) {
    let pos = Vector3::new(xy.x, xy.y, s.ue_position.z);
    let mut r = Vec::with_capacity(m.visible.len());
    let mut jac = Vec::with_capacity(m.visible.len());
    for (k, &i) in m.visible.iter().enumerate() {
        let led = &s.leds[i];
        let g = los_gain(led, &pos, &s.pd).map(|g| g.0).unwrap_or(0.0);
        let grad = gain_gradient(led, &pos, &s.pd);
        let p = m.pilot_powers[k];
        let w = 1.0 / gain_noise_variance(s, p).sqrt();
        match kind {
            ResidualKind::Gain => {
                r.push(w * (m.gains[k] - g));
                jac.push(-grad * w);
            }
            ResidualKind::Power => {
                let scale = p * s.signal_power;
                let wp = w / (2.0 * g.abs().max(1e-300) * scale);
                r.push(wp * (m.powers[k] - g * g * scale));
                jac.push(-grad * (2.0 * g * scale * wp));
            }
        }
    }
    (r, jac)
}

/// Levenberg–Marquardt fit of the horizontal position; the height is the known UE height.
pub fn estimate_position(
    m: &RssMeasurement,
    s: &Scenario,
    init: &Vector2<f64>,
    opts: &LsOptions,
) -> Result<PositionEstimate, PositioningError> {
    if m.visible.len() < 3 || collinear(s, &m.visible) {
        return Err(PositioningError::Underdetermined(m.visible.len()));
    }
    let cost = |xy: &Vector2<f64>| -> f64 { residuals(m, s, xy, opts.kind).0.iter().map(|v| v * v).sum() };
    let mut xy = *init;
    let mut current = cost(&xy);
    let mut lambda = 1e-3;
    let mut worse = 0;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=opts.max_iter {
        iterations = it;
        let (r, jac) = residuals(m, s, &xy, opts.kind);
        let mut jtj = Matrix2::zeros();
        let mut jtr = Vector2::zeros();
        for (ri, ji) in r.iter().zip(&jac) {
            jtj += ji * ji.transpose();
            jtr += ji * *ri;
        }
        let mut accepted = false;
        for _ in 0..30 {
            let damped = jtj + Matrix2::from_diagonal(&jtj.diagonal()) * lambda;
            let Some(inv) = damped.try_inverse() else {
                lambda *= 10.0;
                continue;
            };
            let step = -(inv * jtr);
            let trial = xy + step;
            let c = cost(&trial);
            if c.is_finite() && c <= current {
                xy = trial;
                current = c;
                lambda = (lambda * 0.3).max(1e-12);
                accepted = true;
                worse = 0;
                if step.norm() < opts.step_tol {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
            if step.norm() < opts.step_tol {
                // No descent possible at this resolution.
                converged = true;
                break;
            }
        }
        if converged {
            break;
        }
        if !accepted {
            worse += 1;
            if worse >= opts.divergence_steps {
                return Err(PositioningError::Diverged(it));
            }
        }
    }
    Ok(PositionEstimate {
        position: Vector3::new(xy.x, xy.y, s.ue_position.z),
        converged,
        iterations,
        residual_norm: current.sqrt(),
    })
}

/// Best of several Levenberg–Marquardt runs started at the LED centroid and below
/// each heard LED.
pub fn locate(
    m: &RssMeasurement,
    s: &Scenario,
    opts: &LsOptions,
) -> Result<PositionEstimate, PositioningError> {
    let mut starts = vec![default_init(s)];
    starts.extend(m.visible.iter().map(|&i| s.leds[i].pos().xy()));
    let mut best: Option<PositionEstimate> = None;
    let mut last_err = None;
    for init in &starts {
        match estimate_position(m, s, init, opts) {
            Ok(e) => {
                if best.is_none_or(|b| e.residual_norm < b.residual_norm) {
                    best = Some(e);
                }
            }
            Err(e @ PositioningError::Underdetermined(_)) => return Err(e),
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or(PositioningError::Diverged(0)))
}
