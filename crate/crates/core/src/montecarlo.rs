//! Monte Carlo evaluation: positioning-error sampling, rate CDFs, outage and design sweeps.
//!
//! Every trial k draws from its own ChaCha8 stream (master seed, stream k), so results do
//! not depend on the number of worker threads.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix2, Vector2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocator::{solve_scheme, AllocError, PowerAllocation, RobustConfig, Scheme};
use crate::channel::{gain_error, los_gain, ChannelGain, DiffuseParams};
use crate::fisher::{fim, PositioningPowers};
use crate::positioning::{locate, rse, simulate_rss, LsOptions};
use crate::rate::{rate_lower_bound, rate_los_diffuse};
use crate::scenario::Scenario;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum McError {
    #[error("error covariance is not symmetric positive definite")]
    NotSpd,
    #[error("no samples")]
    Empty,
    #[error(transparent)]
    Alloc(#[from] AllocError),
}

pub const CDF_POINTS: usize = 512;

/// Independent stream for trial `k` under `seed`.
pub fn trial_rng(seed: u64, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Gaussian,
    /// Uniform on the covariance ellipse.
    UniformEllipse,
    /// Four equiprobable atoms ±√2·Lⱼ, balanced within each block of four draws.
    TwoPointMixture,
}

impl ErrorKind {
    pub const ALL: [ErrorKind; 3] = [ErrorKind::Gaussian, ErrorKind::UniformEllipse, ErrorKind::TwoPointMixture];
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorKind::Gaussian => "gaussian",
            ErrorKind::UniformEllipse => "uniform_ellipse",
            ErrorKind::TwoPointMixture => "two_point_mixture",
        })
    }
}

impl FromStr for ErrorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "gaussian" | "normal" => Ok(ErrorKind::Gaussian),
            "uniform_ellipse" | "uniform" => Ok(ErrorKind::UniformEllipse),
            "two_point_mixture" | "two_point" => Ok(ErrorKind::TwoPointMixture),
            other => Err(format!("unknown error model {other:?}")),
        }
    }
}

/// Zero-mean positioning error with a given covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorModel {
    pub kind: ErrorKind,
    pub covariance: Matrix2<f64>,
}

impl ErrorModel {
    pub fn new(kind: ErrorKind, covariance: Matrix2<f64>) -> Self {
        ErrorModel { kind, covariance }
    }

    /// Covariance J⁻¹ of the allocation's pilot powers.
    pub fn for_allocation(s: &Scenario, alloc: &PowerAllocation, kind: ErrorKind) -> Result<Self, McError> {
        let j = fim(s, &PositioningPowers(alloc.p_p.clone())).map_err(AllocError::from)?;
        let cov = j.0.try_inverse().ok_or(McError::NotSpd)?;
        Ok(ErrorModel::new(kind, (cov + cov.transpose()) * 0.5))
    }

    /// Lower Cholesky factor; the zero matrix maps to itself.
    fn factor(&self) -> Result<Matrix2<f64>, McError> {
        if self.covariance == Matrix2::zeros() {
            return Ok(Matrix2::zeros());
        }
        if (self.covariance - self.covariance.transpose()).amax() > 1e-12 * self.covariance.amax() {
            return Err(McError::NotSpd);
        }
        self.covariance
            .cholesky()
            .map(|c| c.l())
            .ok_or(McError::NotSpd)
    }
}

/// n draws of the error model; deterministic in `seed`.
pub fn sample_errors(model: &ErrorModel, n: usize, seed: u64) -> Result<Vec<Vector2<f64>>, McError> {
    let l = model.factor()?;
    let out = match model.kind {
        ErrorKind::Gaussian => (0..n)
            .into_par_iter()
            .map(|k| {
                let mut rng = trial_rng(seed, k as u64);
                let z = Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
                l * z
            })
            .collect(),
        ErrorKind::UniformEllipse => (0..n)
            .into_par_iter()
            .map(|k| {
                let mut rng = trial_rng(seed, k as u64);
                let r: f64 = rng.random::<f64>().sqrt();
                let th: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                // The unit disk has covariance I/4.
                l * Vector2::new(2.0 * r * th.cos(), 2.0 * r * th.sin())
            })
            .collect(),
        ErrorKind::TwoPointMixture => {
            let c0 = l.column(0) * std::f64::consts::SQRT_2;
            let c1 = l.column(1) * std::f64::consts::SQRT_2;
            let atoms = [c0, -c0, c1, -c1];
            let blocks = n.div_ceil(4);
            let mut v: Vec<Vector2<f64>> = (0..blocks)
                .into_par_iter()
                .flat_map_iter(|b| {
                    let mut rng = trial_rng(seed, b as u64);
                    let mut a = atoms;
                    a.shuffle(&mut rng);
                    a
                })
                .collect();
            v.truncate(n);
            v
        }
    };
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    Los,
    LosDiffuse,
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChannelKind::Los => "los",
            ChannelKind::LosDiffuse => "los_diffuse",
        })
    }
}

impl FromStr for ChannelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '+'], "_").as_str() {
            "los" => Ok(ChannelKind::Los),
            "los_diffuse" | "diffuse" => Ok(ChannelKind::LosDiffuse),
            other => Err(format!("unknown channel {other:?} (los, los_diffuse)")),
        }
    }
}

/// Rate delivered when the design point is the UE position and the UE actually sits at
/// UE position + [e; 0].
pub fn achieved_rate(s: &Scenario, alloc: &PowerAllocation, e: &Vector2<f64>, channel: ChannelKind) -> f64 {
    let led = &s.leds[alloc.serving];
    let u_hat = s.ue_position;
    let g_hat = los_gain(led, &u_hat, &s.pd).map(|g| g.0).unwrap_or(0.0);
    let dg = gain_error(led, &u_hat, e, &s.pd).unwrap_or(-g_hat);
    match channel {
        ChannelKind::Los => rate_lower_bound(g_hat, dg, alloc.p_c, s).bps(),
        ChannelKind::LosDiffuse => {
            let g = g_hat + dg;
            let d = &s.diffuse;
            let diffuse = DiffuseParams::from_energy_ratio(g, d.ratio_db, d.decay_time_s, d.delay_s);
            rate_los_diffuse(alloc.p_c, ChannelGain(g), &diffuse, s).bps()
        }
    }
}

/// Fraction of samples with R ≤ r̄.
pub fn outage_probability(rates: &[f64], rate_bps: f64) -> Result<f64, McError> {
    if rates.is_empty() {
        return Err(McError::Empty);
    }
    Ok(rates.iter().filter(|&&r| r <= rate_bps).count() as f64 / rates.len() as f64)
}

/// Empirical CDF on an evenly spaced grid spanning the samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cdf {
    pub values: Vec<f64>,
    pub probs: Vec<f64>,
}

impl Cdf {
    pub fn from_samples(samples: &[f64], points: usize) -> Result<Cdf, McError> {
        if samples.is_empty() {
            return Err(McError::Empty);
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
        let points = points.max(2);
        let values: Vec<f64> = (0..points)
            .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
            .collect();
        let n = sorted.len() as f64;
        let probs = values
            .iter()
            .map(|v| sorted.partition_point(|x| x <= v) as f64 / n)
            .collect();
        Ok(Cdf { values, probs })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateCdf {
    /// Achieved rates, bit/s, in trial order.
    pub rates: Vec<f64>,
    pub rate_threshold: f64,
    pub outage: f64,
    pub cdf: Cdf,
}

/// Rates of `alloc` under `n` draws of `model`.
pub fn rate_cdf(
    s: &Scenario,
    alloc: &PowerAllocation,
    model: &ErrorModel,
    n: usize,
    channel: ChannelKind,
    seed: u64,
    rate_bps: f64,
) -> Result<RateCdf, McError> {
    let errors = sample_errors(model, n, seed)?;
    let rates: Vec<f64> = errors
        .par_iter()
        .map(|e| achieved_rate(s, alloc, e, channel))
        .collect();
    let outage = outage_probability(&rates, rate_bps)?;
    let cdf = Cdf::from_samples(&rates, CDF_POINTS)?;
    Ok(RateCdf {
        rates,
        rate_threshold: rate_bps,
        outage,
        cdf,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub rate_bps: f64,
    pub scheme: Scheme,
    pub sqrt_crlb_m: f64,
    pub p_c_w: f64,
    pub sum_p_p_w: f64,
    /// `ok`, `infeasible` or a solver message.
    pub status: String,
}

/// One allocation per rate threshold; failures become rows with status set and NaN values.
pub fn sweep(s: &Scenario, scheme: Scheme, rates_bps: &[f64], cfg: &RobustConfig) -> Vec<SweepRow> {
    rates_bps
        .par_iter()
        .map(|&r| {
            let c = RobustConfig { rate_bps: r, ..*cfg };
            match solve_scheme(s, scheme, &c) {
                Ok(a) => SweepRow {
                    rate_bps: r,
                    scheme,
                    sqrt_crlb_m: a.sqrt_crlb(),
                    p_c_w: a.p_c,
                    sum_p_p_w: a.sum_p_p(),
                    status: "ok".into(),
                },
                Err(e) => SweepRow {
                    rate_bps: r,
                    scheme,
                    sqrt_crlb_m: f64::NAN,
                    p_c_w: f64::NAN,
                    sum_p_p_w: f64::NAN,
                    status: match e {
                        AllocError::Infeasible { .. } => "infeasible".into(),
                        other => other.to_string(),
                    },
                },
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RseSamples {
    pub rse: Vec<f64>,
    /// Trials where triangulation failed.
    pub failures: usize,
}

/// Simulates `n` positioning subframes with pilot powers `p_p` and triangulates each.
pub fn rse_samples(s: &Scenario, p_p: &[f64], n: usize, seed: u64) -> RseSamples {
    let opts = LsOptions::default();
    let out: Vec<Option<f64>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let mut rng = trial_rng(seed, k as u64);
            let m = simulate_rss(s, p_p, &mut rng).ok()?;
            let est = locate(&m, s, &opts).ok()?;
            Some(rse(&s.ue_position, &est.position))
        })
        .collect();
    let failures = out.iter().filter(|v| v.is_none()).count();
    RseSamples {
        rse: out.into_iter().flatten().collect(),
        failures,
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Binomial standard deviation of an empirical frequency at probability `p` over `n` trials.
pub fn binomial_sigma(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}
