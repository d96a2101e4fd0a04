//! Constraint evaluation straight from the block definitions.

use nalgebra::{DVector, SymmetricEigen};

use super::{ConeBlock, ConicProblem};

/// Amount by which `x` violates one block (0 when satisfied).
pub fn block_violation(block: &ConeBlock, x: &DVector<f64>) -> f64 {
    match block {
        ConeBlock::Linear { a, b } => (a.dot(x) - b).max(0.0),
        ConeBlock::SecondOrder { f, f0, c, d } => {
            let lhs = (f * x + f0).norm();
            (lhs - c.dot(x) - d).max(0.0)
        }
        ConeBlock::Semidefinite { a0, a } => {
            let mut m = a0.clone();
            for (ai, xi) in a.iter().zip(x.iter()) {
                m += ai * *xi;
            }
            let m = (&m + m.transpose()) * 0.5;
            (-SymmetricEigen::new(m).eigenvalues.min()).max(0.0)
        }
    }
}

pub fn max_violation(problem: &ConicProblem, x: &DVector<f64>) -> f64 {
    problem
        .blocks
        .iter()
        .map(|b| block_violation(b, x))
        .fold(0.0, f64::max)
}
