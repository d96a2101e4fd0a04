//! Physical description of the room, LEDs, photodetector and noise.

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rate::{abg_params, AbgParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("invalid {field}: {reason}")]
    Invariant { field: String, reason: String },
    #[error("insufficient anchors: positioning needs at least 3 non-collinear LEDs, got {0}")]
    InsufficientAnchors(usize),
    #[error("LED {index} at {position:?} is outside the photodetector field of view")]
    OutsideFov { index: usize, position: [f64; 3] },
    #[error("unsupported LED count {0}; default layouts exist for 3, 4, 5 and 6")]
    UnsupportedLayout(usize),
    #[error("scenario file: {0}")]
    Parse(String),
}

fn violation(field: &str, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invariant {
        field: field.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedParams {
    pub position: [f64; 3],
    /// Lambertian order.
    pub m: f64,
    pub eta_c: f64,
    pub p_o_max: f64,
    pub p_e_max: f64,
    pub i_dc: f64,
}

impl LedParams {
    /// Nominal LED at `position`.
    pub fn nominal(position: [f64; 3]) -> Self {
        LedParams {
            position,
            m: 1.0,
            eta_c: 1.0,
            p_o_max: 5.0,
            p_e_max: 5.0,
            i_dc: 1.0,
        }
    }

    pub fn pos(&self) -> Vector3<f64> {
        Vector3::from(self.position)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdParams {
    /// m².
    pub effective_area: f64,
    pub eta_l: f64,
    /// Radians.
    pub fov_half_angle: f64,
}

impl Default for PdParams {
    fn default() -> Self {
        PdParams {
            effective_area: 1e-4,
            eta_l: 1.0,
            fov_half_angle: 120f64.to_radians(),
        }
    }
}

/// Ceiling-mounted room, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub width: f64,
    pub depth: f64,
    pub height: f64,
}

impl Default for Room {
    fn default() -> Self {
        Room {
            width: 5.0,
            depth: 5.0,
            height: 2.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub leds: Vec<LedParams>,
    pub pd: PdParams,
    pub ue_position: Vector3<f64>,
    pub bandwidth: f64,
    pub noise_psd_positioning: f64,
    pub noise_psd_comm: f64,
    pub positioning_subframe: f64,
    pub signal_amplitude: f64,
    pub signal_power: f64,
    pub total_power: f64,
    pub abg: AbgParams,
    pub diffuse: DiffuseConfig,
}

/// LOS-to-diffuse channel settings used by the LOS+diffuse experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffuseConfig {
    pub ratio_db: f64,
    pub decay_time_s: f64,
    pub delay_s: f64,
}

impl Default for DiffuseConfig {
    fn default() -> Self {
        DiffuseConfig {
            ratio_db: 12.0,
            decay_time_s: 15e-9,
            delay_s: 10e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerBudget {
    pub per_led_cap: f64,
    pub total_cap: f64,
}

/// Per-LED cap P̄_p from the DC-bias, electrical and optical limits.
pub fn per_led_cap(led: &LedParams, amplitude: f64, signal_power: f64) -> f64 {
    let a2 = amplitude * amplitude;
    let dc = led.i_dc * led.i_dc / a2;
    let elec = (led.p_e_max - led.i_dc * led.i_dc) / signal_power;
    let opt = (led.p_o_max - led.i_dc).powi(2) / a2;
    dc.min(elec).min(opt)
}

impl Scenario {
    /// Nominal parameters with the given LED positions and the UE at (1.1, 1.2, 1.5).
    pub fn with_layout(led_positions: &[[f64; 3]]) -> Self {
        let amplitude = 0.1;
        let signal_power = amplitude * amplitude / 3.0;
        let leds: Vec<LedParams> = led_positions.iter().map(|p| LedParams::nominal(*p)).collect();
        let cap = leds
            .iter()
            .map(|l| per_led_cap(l, amplitude, signal_power))
            .fold(f64::INFINITY, f64::min);
        Scenario {
            leds,
            pd: PdParams::default(),
            ue_position: Vector3::new(1.1, 1.2, 1.5),
            bandwidth: 2e7,
            noise_psd_positioning: 1e-22,
            noise_psd_comm: 1e-22,
            positioning_subframe: 1e-7,
            signal_amplitude: amplitude,
            signal_power,
            total_power: 3.0 * cap,
            abg: AbgParams::uniform(amplitude),
            diffuse: DiffuseConfig::default(),
        }
    }

    /// Nominal scenario on the default layout with `num_leds` LEDs.
    pub fn builtin(num_leds: usize) -> Result<Self, ScenarioError> {
        let layout = default_layout(num_leds, &Room::default())?;
        Ok(Self::with_layout(&layout))
    }

    pub fn num_leds(&self) -> usize {
        self.leds.len()
    }

    /// Pilot energy per unit positioning power over the noise PSD, εT_p/σ_p².
    pub fn pilot_snr_scale(&self) -> f64 {
        self.signal_power * self.positioning_subframe / self.noise_psd_positioning
    }

    pub fn from_json_str(text: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile =
            serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        file.into_scenario()
    }

    pub fn from_path(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScenarioError::Parse(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn to_file(&self) -> ScenarioFile {
        ScenarioFile {
            leds: self.leds.clone(),
            pd: self.pd.clone(),
            ue: UeFile {
                position: self.ue_position.into(),
            },
            signal: SignalFile {
                amplitude: self.signal_amplitude,
                epsilon: Some(self.signal_power),
            },
            noise: NoiseFile {
                sigma_p2: self.noise_psd_positioning,
                sigma_c2: self.noise_psd_comm,
            },
            bandwidth_hz: self.bandwidth,
            t_p_s: self.positioning_subframe,
            p_total_w: Some(self.total_power),
            abg: Some(self.abg),
            diffuse: Some(self.diffuse),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub leds: Vec<LedParams>,
    #[serde(default)]
    pub pd: PdParams,
    pub ue: UeFile,
    pub signal: SignalFile,
    pub noise: NoiseFile,
    pub bandwidth_hz: f64,
    pub t_p_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_total_w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abg: Option<AbgParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diffuse: Option<DiffuseConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UeFile {
    pub position: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SignalFile {
    #[serde(rename = "A")]
    pub amplitude: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseFile {
    pub sigma_p2: f64,
    pub sigma_c2: f64,
}

impl ScenarioFile {
    pub fn into_scenario(self) -> Result<Scenario, ScenarioError> {
        let amplitude = self.signal.amplitude;
        if !(amplitude > 0.0) || !amplitude.is_finite() {
            return Err(violation("signal_amplitude", format!("A = {amplitude} must be > 0")));
        }
        let signal_power = self.signal.epsilon.unwrap_or(amplitude * amplitude / 3.0);
        if !(signal_power > 0.0 && signal_power <= amplitude * amplitude) {
            return Err(violation(
                "signal_power",
                format!("epsilon = {signal_power} must lie in (0, A^2 = {}]", amplitude * amplitude),
            ));
        }
        let abg = match self.abg {
            Some(abg) => abg,
            None => abg_params(amplitude, signal_power)
                .map_err(|e| violation("abg", e.to_string()))?,
        };
        let mut scenario = Scenario {
            leds: self.leds,
            pd: self.pd,
            ue_position: Vector3::from(self.ue.position),
            bandwidth: self.bandwidth_hz,
            noise_psd_positioning: self.noise.sigma_p2,
            noise_psd_comm: self.noise.sigma_c2,
            positioning_subframe: self.t_p_s,
            signal_amplitude: amplitude,
            signal_power,
            total_power: 0.0,
            abg,
            diffuse: self.diffuse.unwrap_or_default(),
        };
        scenario.total_power = match self.p_total_w {
            Some(p) => p,
            None => {
                validate_leds(&scenario)?;
                3.0 * scenario
                    .leds
                    .iter()
                    .map(|l| per_led_cap(l, amplitude, signal_power))
                    .fold(f64::INFINITY, f64::min)
            }
        };
        validate(&scenario)?;
        Ok(scenario)
    }
}

fn validate_leds(s: &Scenario) -> Result<(), ScenarioError> {
    if s.leds.is_empty() {
        return Err(violation("leds", "at least one LED is required"));
    }
    for (i, led) in s.leds.iter().enumerate() {
        let f = |name: &str| format!("leds[{i}].{name}");
        if led.position.iter().any(|c| !c.is_finite()) {
            return Err(violation(&f("position"), "non-finite coordinate"));
        }
        if !(led.m > 0.0) {
            return Err(violation(&f("m"), format!("m = {} must be > 0", led.m)));
        }
        if !(led.eta_c > 0.0) {
            return Err(violation(&f("eta_c"), "must be > 0"));
        }
        if !(led.i_dc > 0.0) {
            return Err(violation(&f("i_dc"), "DC bias must be > 0"));
        }
        if !(led.p_o_max > led.i_dc) {
            return Err(violation(
                &f("p_o_max"),
                format!("P_o_max = {} must exceed I_DC = {}", led.p_o_max, led.i_dc),
            ));
        }
        if !(led.p_e_max > led.i_dc * led.i_dc) {
            return Err(violation(
                &f("p_e_max"),
                format!("P_e_max = {} must exceed I_DC^2 = {}", led.p_e_max, led.i_dc * led.i_dc),
            ));
        }
    }
    Ok(())
}

/// Checks every type invariant; positioning needs three non-collinear LEDs inside the FoV.
pub fn validate(s: &Scenario) -> Result<(), ScenarioError> {
    validate_leds(s)?;
    if !(s.signal_amplitude > 0.0) || !s.signal_amplitude.is_finite() {
        return Err(violation(
            "signal_amplitude",
            format!("A = {} must be > 0", s.signal_amplitude),
        ));
    }
    let a2 = s.signal_amplitude * s.signal_amplitude;
    if !(s.signal_power > 0.0 && s.signal_power <= a2) {
        return Err(violation(
            "signal_power",
            format!("epsilon = {} must lie in (0, A^2 = {a2}]", s.signal_power),
        ));
    }
    for (name, v) in [
        ("bandwidth", s.bandwidth),
        ("positioning_subframe", s.positioning_subframe),
        ("noise_psd_positioning", s.noise_psd_positioning),
        ("noise_psd_comm", s.noise_psd_comm),
        ("pd.effective_area", s.pd.effective_area),
        ("pd.eta_l", s.pd.eta_l),
        ("total_power", s.total_power),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(violation(name, format!("{v} must be finite and > 0")));
        }
    }
    let fov = s.pd.fov_half_angle;
    if !(fov > 0.0 && fov < std::f64::consts::PI) {
        return Err(violation("pd.fov_half_angle", format!("{fov} rad must lie in (0, pi)")));
    }
    if s.ue_position.iter().any(|c| !c.is_finite()) {
        return Err(violation("ue_position", "non-finite coordinate"));
    }
    for (i, led) in s.leds.iter().enumerate() {
        let d = led.pos() - s.ue_position;
        if !(d.z > 0.0) {
            return Err(violation(
                &format!("leds[{i}].position"),
                "LED must be strictly above the UE",
            ));
        }
        if (d.z / d.norm()).acos() > fov {
            return Err(ScenarioError::OutsideFov {
                index: i,
                position: led.position,
            });
        }
    }
    if !has_non_collinear_triple(&s.leds) {
        return Err(ScenarioError::InsufficientAnchors(s.leds.len()));
    }
    Ok(())
}

fn has_non_collinear_triple(leds: &[LedParams]) -> bool {
    let n = leds.len();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let a = leds[i].pos().xy();
                let b = leds[j].pos().xy();
                let c = leds[k].pos().xy();
                let area = (b - a).perp(&(c - a)).abs();
                if area > 1e-9 {
                    return true;
                }
            }
        }
    }
    false
}

pub fn power_budget(s: &Scenario) -> PowerBudget {
    let per_led_cap = s
        .leds
        .iter()
        .map(|l| per_led_cap(l, s.signal_amplitude, s.signal_power))
        .fold(f64::INFINITY, f64::min);
    PowerBudget {
        per_led_cap,
        total_cap: s.total_power,
    }
}

/// Symmetric ceiling layouts for 3 to 6 LEDs.
pub fn default_layout(num_leds: usize, room: &Room) -> Result<Vec<[f64; 3]>, ScenarioError> {
    let (w, d, h) = (room.width, room.depth, room.height);
    let (x0, x1) = (0.25 * w, 0.75 * w);
    let (y0, y1) = (0.25 * d, 0.75 * d);
    let layout = match num_leds {
        3 => {
            let side = x1 - x0;
            vec![
                [x0, y0, h],
                [x1, y0, h],
                [0.5 * w, y0 + side * 3f64.sqrt() / 2.0, h],
            ]
        }
        4 => vec![[x0, y0, h], [x0, y1, h], [x1, y0, h], [x1, y1, h]],
        5 => vec![
            [x0, y0, h],
            [x0, y1, h],
            [x1, y0, h],
            [x1, y1, h],
            [0.5 * w, 0.5 * d, h],
        ],
        6 => {
            let mut v = Vec::with_capacity(6);
            for y in [y0, 0.5 * d, y1] {
                for x in [x0, x1] {
                    v.push([x, y, h]);
                }
            }
            v
        }
        n => return Err(ScenarioError::UnsupportedLayout(n)),
    };
    Ok(layout)
}
