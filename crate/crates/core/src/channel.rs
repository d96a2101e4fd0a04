//! Lambertian LOS gains, CSI errors, gain gradients and the diffuse ISI split.

use std::f64::consts::PI;

use nalgebra::{Vector2, Vector3};
use thiserror::Error;

use crate::scenario::{LedParams, PdParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("receiver coincides with the LED")]
    Coincident,
    #[error("receiver is not below the LED plane (dz = {0})")]
    NotBelow(f64),
}

/// DC channel gain; zero outside the field of view.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ChannelGain(pub f64);

impl ChannelGain {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// μ = (m+1)η_cη_ℓA_R/(2π).
pub fn lambertian_scale(led: &LedParams, pd: &PdParams) -> f64 {
    (led.m + 1.0) * led.eta_c * pd.eta_l * pd.effective_area / (2.0 * PI)
}

fn geometry(led: &LedParams, rx: &Vector3<f64>) -> Result<(f64, f64), ChannelError> {
    let diff = led.pos() - rx;
    let d = diff.norm();
    if d == 0.0 {
        return Err(ChannelError::Coincident);
    }
    if !(diff.z > 0.0) {
        return Err(ChannelError::NotBelow(diff.z));
    }
    Ok((diff.z, d))
}

fn in_fov(dz: f64, d: f64, pd: &PdParams) -> bool {
    (dz / d).min(1.0).acos() <= pd.fov_half_angle
}

pub fn los_gain(
    led: &LedParams,
    receiver_pos: &Vector3<f64>,
    pd: &PdParams,
) -> Result<ChannelGain, ChannelError> {
    let (dz, d) = geometry(led, receiver_pos)?;
    if !in_fov(dz, d, pd) {
        return Ok(ChannelGain(0.0));
    }
    let mu = lambertian_scale(led, pd);
    Ok(ChannelGain(mu * dz.powf(led.m + 1.0) / d.powf(led.m + 3.0)))
}

/// Gain predicted at an estimated position; same law as [`los_gain`].
pub fn estimated_gain(
    led: &LedParams,
    estimated_pos: &Vector3<f64>,
    pd: &PdParams,
) -> Result<ChannelGain, ChannelError> {
    los_gain(led, estimated_pos, pd)
}

/// Δg = g(û + [e_p; 0]) − g(û).
pub fn gain_error(
    led: &LedParams,
    estimated_pos: &Vector3<f64>,
    e_p: &Vector2<f64>,
    pd: &PdParams,
) -> Result<f64, ChannelError> {
    let actual = estimated_pos + Vector3::new(e_p.x, e_p.y, 0.0);
    Ok(los_gain(led, &actual, pd)?.0 - estimated_gain(led, estimated_pos, pd)?.0)
}

/// Horizontal gradient (∂g/∂x_u, ∂g/∂y_u); zero outside the field of view.
pub fn gain_gradient(led: &LedParams, pos: &Vector3<f64>, pd: &PdParams) -> Vector2<f64> {
    let Ok((dz, d)) = geometry(led, pos) else {
        return Vector2::zeros();
    };
    if !in_fov(dz, d, pd) {
        return Vector2::zeros();
    }
    let mu = lambertian_scale(led, pd);
    let k = -(led.m + 3.0) * mu * dz.powf(led.m + 1.0) / d.powf(led.m + 5.0);
    let v = led.pos();
    Vector2::new(k * (pos.x - v.x), k * (pos.y - v.y))
}

/// Exponential diffuse tail h_d(t) = (η/τ)e^{−(t−ΔT)/τ} for t ≥ ΔT.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffuseParams {
    pub power_efficiency: f64,
    pub decay_time: f64,
    pub delay: f64,
    pub los_diffuse_ratio_db: f64,
}

impl DiffuseParams {
    /// Diffuse tail whose total energy η²/(2τ) sits `ratio_db` below the LOS energy g².
    pub fn from_energy_ratio(g_los: f64, ratio_db: f64, decay_time: f64, delay: f64) -> Self {
        let ratio = 10f64.powf(ratio_db / 10.0);
        DiffuseParams {
            power_efficiency: g_los.abs() * (2.0 * decay_time / ratio).sqrt(),
            decay_time,
            delay,
            los_diffuse_ratio_db: ratio_db,
        }
    }

    /// Diffuse tail with g²/η² equal to `ratio_db`.
    pub fn from_gain_ratio(g_los: f64, ratio_db: f64, decay_time: f64, delay: f64) -> Self {
        let ratio = 10f64.powf(ratio_db / 10.0);
        DiffuseParams {
            power_efficiency: g_los.abs() / ratio.sqrt(),
            decay_time,
            delay,
            los_diffuse_ratio_db: ratio_db,
        }
    }

    pub fn none() -> Self {
        DiffuseParams {
            power_efficiency: 0.0,
            decay_time: 1.0,
            delay: 0.0,
            los_diffuse_ratio_db: f64::INFINITY,
        }
    }

    /// Total diffuse energy ∫|h_d|² = η²/(2τ).
    pub fn energy(&self) -> f64 {
        self.power_efficiency.powi(2) / (2.0 * self.decay_time)
    }

    /// h_d(t) at time `t` after the LOS arrival.
    pub fn impulse(&self, t: f64) -> f64 {
        if t < self.delay {
            0.0
        } else {
            self.power_efficiency / self.decay_time * (-(t - self.delay) / self.decay_time).exp()
        }
    }
}

/// Received power inside (P1) and beyond (P2) one symbol period 1/W.
pub fn isi_power_split(p_c: f64, g_los: ChannelGain, diffuse: &DiffuseParams, w: f64) -> (f64, f64) {
    let tail = ((2.0 * diffuse.delay * w - 2.0) / (w * diffuse.decay_time)).exp();
    let diffuse_total = diffuse.energy() * p_c;
    let p1 = g_los.0 * g_los.0 * p_c + diffuse_total * (1.0 - tail);
    let p2 = diffuse_total * tail;
    (p1, p2)
}
