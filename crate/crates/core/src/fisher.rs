//! Fisher information of the RSS positioning subframe and the matrix functions built on it.

use nalgebra::{Matrix2, SymmetricEigen, Vector3};
use thiserror::Error;

use crate::channel::gain_gradient;
use crate::scenario::Scenario;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FisherError {
    #[error("singular Fisher information (det = {0:e}); CRLB is unbounded")]
    Singular(f64),
    #[error("matrix is not symmetric positive definite (eigenvalues {0:e}, {1:e})")]
    NotSpd(f64, f64),
    #[error("power vector has {got} entries, scenario has {expected} LEDs")]
    Length { expected: usize, got: usize },
}

/// Determinants at or below this are treated as singular.
pub const SINGULAR_DET: f64 = 1e-30;

/// 2×2 Fisher information matrix, 1/m².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherInfo(pub Matrix2<f64>);

impl FisherInfo {
    pub fn matrix(&self) -> &Matrix2<f64> {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositioningPowers(pub Vec<f64>);

impl PositioningPowers {
    pub fn uniform(num_leds: usize, p: f64) -> Self {
        PositioningPowers(vec![p; num_leds])
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// Unit-power FIM contributions (εT_p/σ_p²)∇g_i∇g_iᵀ at `pos`.
pub fn fim_terms(s: &Scenario, pos: &Vector3<f64>) -> Vec<Matrix2<f64>> {
    let k = s.pilot_snr_scale();
    s.leds
        .iter()
        .map(|led| {
            let g = gain_gradient(led, pos, &s.pd);
            g * g.transpose() * k
        })
        .collect()
}

pub fn fim_at(
    s: &Scenario,
    pos: &Vector3<f64>,
    p_p: &PositioningPowers,
) -> Result<FisherInfo, FisherError> {
    if p_p.0.len() != s.num_leds() {
        return Err(FisherError::Length {
            expected: s.num_leds(),
            got: p_p.0.len(),
        });
    }
    let j = fim_terms(s, pos)
        .iter()
        .zip(&p_p.0)
        .fold(Matrix2::zeros(), |acc, (t, p)| acc + t * *p);
    Ok(FisherInfo(j))
}

/// FIM at the scenario's UE position.
pub fn fim(s: &Scenario, p_p: &PositioningPowers) -> Result<FisherInfo, FisherError> {
    fim_at(s, &s.ue_position, p_p)
}

/// Tr(J⁻¹) through the closed-form 2×2 inverse.
pub fn crlb(j: &FisherInfo) -> Result<f64, FisherError> {
    let m = &j.0;
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    if det <= SINGULAR_DET {
        return Err(FisherError::Singular(det));
    }
    Ok((m[(0, 0)] + m[(1, 1)]) / det)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpdExponent {
    /// −1
    Inverse,
    /// −1/2
    InverseSqrt,
    /// −3/4
    NegThreeQuarters,
}

impl SpdExponent {
    pub fn value(self) -> f64 {
        match self {
            SpdExponent::Inverse => -1.0,
            SpdExponent::InverseSqrt => -0.5,
            SpdExponent::NegThreeQuarters => -0.75,
        }
    }
}

/// Eigendecomposition-based power of a 2×2 SPD matrix.
pub fn spd_power(j: &Matrix2<f64>, exponent: SpdExponent) -> Result<Matrix2<f64>, FisherError> {
    let sym = (j + j.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let (l0, l1) = (eig.eigenvalues[0], eig.eigenvalues[1]);
    if !(l0 > 0.0 && l1 > 0.0) {
        return Err(FisherError::NotSpd(l0, l1));
    }
    let e = exponent.value();
    let d = Matrix2::from_diagonal(&eig.eigenvalues.map(|l| l.powf(e)));
    let out = eig.eigenvectors * d * eig.eigenvectors.transpose();
    Ok((out + out.transpose()) * 0.5)
}
