//! Small dense conic programs: linear, second-order cone and semidefinite blocks.
//!
//! Problems are stated as `minimize cᵀx` over blocks
//! `a·x ≤ b`, `‖F x + f‖ ≤ cᵀx + d` and `A₀ + Σ xᵢAᵢ ⪰ 0`, and solved by a
//! homogeneous self-dual interior-point method with Nesterov–Todd scaling.

mod check;
pub mod cones;
mod dump;
mod ipm;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub use check::{block_violation, max_violation};
pub use dump::{from_text, to_text};
pub use ipm::solve;

pub const MAX_VARS: usize = 64;
pub const MAX_PSD_SIDE: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConicError {
    #[error("malformed problem: {0}")]
    Malformed(String),
    #[error("problem dump line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Sparse affine expression Σ cᵢxᵢ + c₀.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Affine {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl Affine {
    pub fn var(i: usize) -> Self {
        Affine {
            terms: vec![(i, 1.0)],
            constant: 0.0,
        }
    }

    pub fn constant(c: f64) -> Self {
        Affine {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn term(i: usize, coef: f64) -> Self {
        Affine {
            terms: vec![(i, coef)],
            constant: 0.0,
        }
    }

    pub fn plus(mut self, other: &Affine) -> Self {
        self.terms.extend_from_slice(&other.terms);
        self.constant += other.constant;
        self
    }

    pub fn add_term(mut self, i: usize, coef: f64) -> Self {
        self.terms.push((i, coef));
        self
    }

    pub fn add_const(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn scale(mut self, k: f64) -> Self {
        for t in &mut self.terms {
            t.1 *= k;
        }
        self.constant *= k;
        self
    }

    pub fn dense(&self, n: usize) -> DVector<f64> {
        let mut v = DVector::zeros(n);
        for &(i, c) in &self.terms {
            v[i] += c;
        }
        v
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(i, c)| c * x[i]).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConeBlock {
    /// a·x ≤ b
    Linear { a: DVector<f64>, b: f64 },
    /// ‖F x + f‖ ≤ cᵀx + d
    SecondOrder {
        f: DMatrix<f64>,
        f0: DVector<f64>,
        c: DVector<f64>,
        d: f64,
    },
    /// A₀ + Σ xᵢAᵢ ⪰ 0
    Semidefinite {
        a0: DMatrix<f64>,
        a: Vec<DMatrix<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicProblem {
    pub objective: DVector<f64>,
    pub blocks: Vec<ConeBlock>,
}

impl ConicProblem {
    pub fn new(num_vars: usize) -> Self {
        ConicProblem {
            objective: DVector::zeros(num_vars),
            blocks: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_var(&mut self) -> usize {
        let n = self.num_vars();
        self.objective = self.objective.clone().insert_row(n, 0.0);
        for b in &mut self.blocks {
            match b {
                ConeBlock::Linear { a, .. } => *a = a.clone().insert_row(n, 0.0),
                ConeBlock::SecondOrder { f, c, .. } => {
                    *f = f.clone().insert_column(n, 0.0);
                    *c = c.clone().insert_row(n, 0.0);
                }
                ConeBlock::Semidefinite { a0, a } => {
                    a.push(DMatrix::zeros(a0.nrows(), a0.nrows()));
                }
            }
        }
        n
    }

    pub fn minimize(&mut self, objective: &Affine) {
        self.objective = objective.dense(self.num_vars());
    }

    /// lhs ≤ rhs
    pub fn le(&mut self, lhs: &Affine, rhs: &Affine) {
        let diff = lhs.clone().plus(&rhs.clone().scale(-1.0));
        self.blocks.push(ConeBlock::Linear {
            a: diff.dense(self.num_vars()),
            b: -diff.constant,
        });
    }

    /// ‖xs‖ ≤ t
    pub fn soc(&mut self, t: &Affine, xs: &[Affine]) {
        let n = self.num_vars();
        let mut f = DMatrix::zeros(xs.len(), n);
        let mut f0 = DVector::zeros(xs.len());
        for (r, e) in xs.iter().enumerate() {
            f.row_mut(r).copy_from(&e.dense(n).transpose());
            f0[r] = e.constant;
        }
        self.blocks.push(ConeBlock::SecondOrder {
            f,
            f0,
            c: t.dense(n),
            d: t.constant,
        });
    }

    /// ‖w‖² ≤ x·y with x, y ≥ 0.
    pub fn rotated_cone(&mut self, x: &Affine, y: &Affine, w: &[Affine]) {
        let mut xs: Vec<Affine> = w.iter().map(|e| e.clone().scale(2.0)).collect();
        xs.push(x.clone().plus(&y.clone().scale(-1.0)));
        self.soc(&x.clone().plus(y), &xs);
    }

    /// Symmetric matrix of affine entries ⪰ 0; only the upper triangle is read.
    pub fn psd(&mut self, entries: &[Vec<Affine>]) {
        let n = self.num_vars();
        let k = entries.len();
        let mut a0 = DMatrix::zeros(k, k);
        let mut a = vec![DMatrix::zeros(k, k); n];
        for i in 0..k {
            for j in i..k {
                let e = &entries[i][j];
                a0[(i, j)] += e.constant;
                if i != j {
                    a0[(j, i)] += e.constant;
                }
                for &(v, c) in &e.terms {
                    a[v][(i, j)] += c;
                    if i != j {
                        a[v][(j, i)] += c;
                    }
                }
            }
        }
        self.blocks.push(ConeBlock::Semidefinite { a0, a });
    }

    pub fn validate(&self) -> Result<(), ConicError> {
        let n = self.num_vars();
        if n == 0 || n > MAX_VARS {
            return Err(ConicError::Malformed(format!("{n} variables (1..={MAX_VARS} allowed)")));
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(ConicError::Malformed("non-finite objective".into()));
        }
        for (bi, b) in self.blocks.iter().enumerate() {
            let bad = |m: String| Err(ConicError::Malformed(format!("block {bi}: {m}")));
            match b {
                ConeBlock::Linear { a, b } => {
                    if a.len() != n {
                        return bad(format!("row has {} coefficients", a.len()));
                    }
                    if !b.is_finite() || a.iter().any(|v| !v.is_finite()) {
                        return bad("non-finite data".into());
                    }
                }
                ConeBlock::SecondOrder { f, f0, c, d } => {
                    if f.ncols() != n || c.len() != n || f.nrows() != f0.len() {
                        return bad("inconsistent dimensions".into());
                    }
                    if f.iter().chain(f0.iter()).chain(c.iter()).any(|v| !v.is_finite())
                        || !d.is_finite()
                    {
                        return bad("non-finite data".into());
                    }
                }
                ConeBlock::Semidefinite { a0, a } => {
                    let k = a0.nrows();
                    if k == 0 || k > MAX_PSD_SIDE || a0.ncols() != k {
                        return bad(format!("side {k} (1..={MAX_PSD_SIDE} allowed)"));
                    }
                    if a.len() != n {
                        return bad(format!("{} coefficient matrices", a.len()));
                    }
                    for m in std::iter::once(a0).chain(a.iter()) {
                        if m.nrows() != k || m.ncols() != k {
                            return bad("inconsistent dimensions".into());
                        }
                        if (m - m.transpose()).amax() > 1e-12 * (1.0 + m.amax()) {
                            return bad("matrix is not symmetric".into());
                        }
                        if m.iter().any(|v| !v.is_finite()) {
                            return bad("non-finite data".into());
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    /// Dual infeasible: the objective is unbounded below.
    Unbounded,
    MaxIterations,
    /// Search directions could not be computed or made no progress.
    NumericalFailure,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub x: DVector<f64>,
    pub objective_value: f64,
    pub kkt_residuals: KktResiduals,
    /// Normalised residual of the infeasibility certificate, when one was found.
    pub certificate_residual: Option<f64>,
    pub iterations: usize,
    /// (sᵀz + τκ)/(ν + 1) per iteration.
    pub mu_history: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub infeasibility_tol: f64,
    pub step_fraction: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-8,
            max_iter: 200,
            infeasibility_tol: 1e-9,
            step_fraction: 0.99,
        }
    }
}

/// Adds Z (three fresh variables z₁₁, z₁₂, z₂₂) with [[J, I], [I, Z]] ⪰ 0.
///
/// `j` holds the affine entries J₁₁, J₁₂, J₂₂. Returns the indices of Z and Tr(Z).
pub fn trace_inverse_epigraph(problem: &mut ConicProblem, j: [&Affine; 3]) -> ([usize; 3], Affine) {
    let z11 = problem.add_var();
    let z12 = problem.add_var();
    let z22 = problem.add_var();
    let zero = Affine::default();
    let one = Affine::constant(1.0);
    let m = vec![
        vec![j[0].clone(), j[1].clone(), one.clone(), zero.clone()],
        vec![j[1].clone(), j[2].clone(), zero.clone(), one.clone()],
        vec![one.clone(), zero.clone(), Affine::var(z11), Affine::var(z12)],
        vec![zero, one, Affine::var(z12), Affine::var(z22)],
    ];
    problem.psd(&m);
    ([z11, z12, z22], Affine::var(z11).add_term(z22, 1.0))
}

/// Constrains q ≥ 0 and q^k ≤ p for k = m + 3 a power of two; returns the helper variables.
pub fn power_root_epigraph(
    problem: &mut ConicProblem,
    p: &Affine,
    q: usize,
    root_degree: u32,
) -> Result<Vec<usize>, ConicError> {
    if root_degree < 2 || !root_degree.is_power_of_two() {
        return Err(ConicError::Malformed(format!(
            "root of degree {root_degree} has no second-order tower"
        )));
    }
    // q^(2^L) ≤ p via w_1² ≤ p, w_{k+1}² ≤ w_k, q = w_L.
    let levels = root_degree.trailing_zeros() as usize;
    let mut aux = Vec::new();
    let mut upper = p.clone();
    for level in 0..levels {
        let w = if level + 1 == levels { q } else { problem.add_var() };
        if w != q {
            aux.push(w);
        }
        problem.rotated_cone(&upper, &Affine::constant(1.0), &[Affine::var(w)]);
        upper = Affine::var(w);
    }
    problem.le(&Affine::term(q, -1.0), &Affine::constant(0.0));
    Ok(aux)
}
