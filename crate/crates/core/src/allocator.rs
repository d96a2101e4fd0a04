//! Power allocation between positioning pilots and the data stream.
//!
//! Three programs share one skeleton: powers are normalised by the per-LED cap P̄,
//! the FIM by the root determinant it reaches with every LED at P̄, and the rate target
//! becomes ‖û − v‖² ≤ δ·P_c^{1/(m+3)} with the root lifted into conic form.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{los_gain, ChannelGain};
use crate::conic::{
    power_root_epigraph, solve, trace_inverse_epigraph, Affine, ConicProblem, SolveStatus,
    SolverOptions,
};
use crate::fisher::{crlb, fim_terms, spd_power, FisherError, FisherInfo, SpdExponent};
use crate::rate::delta_coefficient;
use crate::scenario::{power_budget, validate, Scenario, ScenarioError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AllocError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Fisher(#[from] FisherError),
    #[error("no LED is inside the photodetector field of view")]
    NoServingLed,
    #[error("{scheme} program is infeasible: the rate target cannot be met within the power budgets")]
    Infeasible { scheme: Scheme },
    #[error("conic solver stopped with status {0:?}")]
    Solver(SolveStatus),
    #[error("invalid robust configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Perfect,
    Bernstein,
    Cvar,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Perfect, Scheme::Bernstein, Scheme::Cvar];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Perfect => "perfect",
            Scheme::Bernstein => "bernstein",
            Scheme::Cvar => "cvar",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "perfect" | "nonrobust" => Ok(Scheme::Perfect),
            "bernstein" | "gaussian" => Ok(Scheme::Bernstein),
            "cvar" => Ok(Scheme::Cvar),
            other => Err(format!("unknown scheme {other:?} (perfect, bernstein, cvar)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaWarning {
    /// A later subproblem was infeasible or failed; the incumbent was returned.
    NonImproving,
    /// The iteration limit was reached before the stopping rule fired.
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    /// Positioning powers, W.
    pub p_p: Vec<f64>,
    /// Communication power on the serving LED, W.
    pub p_c: f64,
    pub serving: usize,
    /// Tr(J⁻¹), m².
    pub crlb_value: f64,
    pub scheme: Scheme,
    /// CRLB after each SCA iteration (CVaR only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<ScaWarning>,
    /// Largest KKT residual of the final conic solve.
    #[serde(default)]
    pub kkt_residual: f64,
}

impl PowerAllocation {
    pub fn sum_p_p(&self) -> f64 {
        self.p_p.iter().sum()
    }

    pub fn sqrt_crlb(&self) -> f64 {
        self.crlb_value.sqrt()
    }

    /// Largest violation of the per-LED, serving-LED and total budgets, W.
    pub fn budget_violation(&self, s: &Scenario) -> f64 {
        let b = power_budget(s);
        let mut worst: f64 = -self.p_c;
        for (i, &p) in self.p_p.iter().enumerate() {
            worst = worst.max(-p);
            let load = if i == self.serving { p + self.p_c } else { p };
            worst = worst.max(load - b.per_led_cap);
        }
        worst.max(self.sum_p_p() + self.p_c - b.total_cap).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustConfig {
    /// Rate threshold r̄, bit/s.
    pub rate_bps: f64,
    pub p_out: f64,
    pub sca_tolerance: f64,
    pub sca_max_iter: usize,
}

impl RobustConfig {
    pub fn new(rate_bps: f64, p_out: f64) -> Self {
        RobustConfig {
            rate_bps,
            p_out,
            sca_tolerance: 1e-3,
            sca_max_iter: 50,
        }
    }

    pub fn validate(&self) -> Result<(), AllocError> {
        if !(self.rate_bps > 0.0 && self.rate_bps.is_finite()) {
            return Err(AllocError::Config(format!("rate {} must be positive", self.rate_bps)));
        }
        if !(self.p_out > 0.0 && self.p_out < 1.0) {
            return Err(AllocError::Config(format!("outage {} must lie in (0, 1)", self.p_out)));
        }
        if !(self.sca_tolerance > 0.0) || self.sca_max_iter == 0 {
            return Err(AllocError::Config("SCA tolerance and iteration limit must be positive".into()));
        }
        Ok(())
    }

    /// η = −ln P_out.
    pub fn eta(&self) -> f64 {
        -self.p_out.ln()
    }
}

/// Index of the strongest gain; ties within 1e-12 relative go to the lower index.
pub fn select_serving_led(gains: &[ChannelGain]) -> Result<usize, AllocError> {
    let mut best: Option<(usize, f64)> = None;
    for (i, g) in gains.iter().enumerate() {
        if !(g.0 > 0.0) {
            continue;
        }
        match best {
            Some((_, b)) if g.0 <= b * (1.0 + 1e-12) => {}
            _ => best = Some((i, g.0)),
        }
    }
    best.map(|(i, _)| i).ok_or(AllocError::NoServingLed)
}

/// Serving LED for the UE position of the scenario.
pub fn serving_led(s: &Scenario) -> Result<usize, AllocError> {
    let gains: Vec<ChannelGain> = s
        .leds
        .iter()
        .map(|l| los_gain(l, &s.ue_position, &s.pd).unwrap_or(ChannelGain(0.0)))
        .collect();
    select_serving_led(&gains)
}

/// Tr(B) + √(2η)·√(‖B‖_F² + 2‖b‖²) + η·λ⁺(B).
pub fn bernstein_bound(b_mat: &Matrix2<f64>, b_vec: &Vector2<f64>, eta: f64) -> f64 {
    let sym = (b_mat + b_mat.transpose()) * 0.5;
    let lmax = sym.symmetric_eigenvalues().max().max(0.0);
    sym.trace()
        + (2.0 * eta).sqrt() * (sym.norm_squared() + 2.0 * b_vec.norm_squared()).sqrt()
        + eta * lmax
}

/// Quadratic outage form ξᵀBξ + 2bᵀξ − δ_b for a standardised error ξ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutageForm {
    pub b_mat: Matrix2<f64>,
    pub b_vec: Vector2<f64>,
    pub delta_b: f64,
}

impl OutageForm {
    /// Exact form for positioning powers `p_p`, communication power `p_c` and the serving LED.
    pub fn new(s: &Scenario, p_p: &[f64], p_c: f64, serving: usize, rate_bps: f64) -> Result<Self, AllocError> {
        let j = fim_of(s, p_p);
        let b_mat = spd_power(&j, SpdExponent::Inverse)?;
        let h = offset_xy(s, serving);
        let b_vec = spd_power(&j, SpdExponent::InverseSqrt)? * h;
        let delta = delta_coefficient(s, serving, rate_bps);
        let delta_b = crate::rate::delta_b(delta, p_c, &s.ue_position, &s.leds[serving]);
        Ok(OutageForm {
            b_mat,
            b_vec,
            delta_b,
        })
    }

    pub fn value(&self, xi: &Vector2<f64>) -> f64 {
        xi.dot(&(self.b_mat * xi)) + 2.0 * self.b_vec.dot(xi) - self.delta_b
    }
}

fn fim_of(s: &Scenario, p_p: &[f64]) -> Matrix2<f64> {
    fim_terms(s, &s.ue_position)
        .iter()
        .zip(p_p)
        .fold(Matrix2::zeros(), |acc, (t, p)| acc + t * *p)
}

fn offset_xy(s: &Scenario, serving: usize) -> Vector2<f64> {
    let d: Vector3<f64> = s.ue_position - s.leds[serving].pos();
    d.xy()
}

/// First-order models of J⁻¹(p), J^{−1/2}(p)·h and δ_b(P_c) around (p₀, P_c0).
#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    pub j0: Matrix2<f64>,
    pub j0_inv: Matrix2<f64>,
    pub j0_inv_sqrt: Matrix2<f64>,
    pub j0_neg34: Matrix2<f64>,
    pub terms: Vec<Matrix2<f64>>,
    pub h: Vector2<f64>,
    pub delta: f64,
    pub d0_sq: f64,
    pub root_degree: f64,
    pub p_c0: f64,
}

impl Linearization {
    pub fn new(
        s: &Scenario,
        serving: usize,
        rate_bps: f64,
        p0: &[f64],
        p_c0: f64,
    ) -> Result<Self, AllocError> {
        let terms = fim_terms(s, &s.ue_position);
        if p0.len() != terms.len() {
            return Err(FisherError::Length {
                expected: terms.len(),
                got: p0.len(),
            }
            .into());
        }
        let j0 = fim_of(s, p0);
        crlb(&FisherInfo(j0))?;
        let led = &s.leds[serving];
        Ok(Linearization {
            j0,
            j0_inv: spd_power(&j0, SpdExponent::Inverse)?,
            j0_inv_sqrt: spd_power(&j0, SpdExponent::InverseSqrt)?,
            j0_neg34: spd_power(&j0, SpdExponent::NegThreeQuarters)?,
            terms,
            h: offset_xy(s, serving),
            delta: delta_coefficient(s, serving, rate_bps),
            d0_sq: (s.ue_position - led.pos()).norm_squared(),
            root_degree: led.m + 3.0,
            p_c0,
        })
    }

    fn fim(&self, p: &[f64]) -> Matrix2<f64> {
        self.terms
            .iter()
            .zip(p)
            .fold(Matrix2::zeros(), |acc, (t, x)| acc + t * *x)
    }

    /// B̃ = J₀⁻¹ − J₀⁻¹(J(p) − J₀)J₀⁻¹.
    pub fn b_matrix(&self, p: &[f64]) -> Matrix2<f64> {
        let dj = self.fim(p) - self.j0;
        self.j0_inv - self.j0_inv * dj * self.j0_inv
    }

    /// b̃ = (J₀^{−1/2} − ½J₀^{−3/4}(J(p) − J₀)J₀^{−3/4})·h.
    pub fn b_vector(&self, p: &[f64]) -> Vector2<f64> {
        let dj = self.fim(p) - self.j0;
        (self.j0_inv_sqrt - self.j0_neg34 * dj * self.j0_neg34 * 0.5) * self.h
    }

    /// δ̃_b with the root replaced by its tangent at P_c0.
    pub fn delta_b_tangent(&self, p_c: f64) -> f64 {
        let k = self.root_degree;
        let root0 = self.p_c0.powf(1.0 / k);
        let slope = self.p_c0.powf(-(k - 1.0) / k) / k;
        self.delta * (root0 + slope * (p_c - self.p_c0)) - self.d0_sq
    }

    /// B̃ as an affine map of the normalised powers x (p = x·scale).
    fn b_matrix_affine(&self, x: &[usize], scale: f64) -> [Affine; 3] {
        let c = self.j0_inv * 2.0;
        let mut out = [
            Affine::constant(c[(0, 0)]),
            Affine::constant(c[(0, 1)]),
            Affine::constant(c[(1, 1)]),
        ];
        for (t, &xi) in self.terms.iter().zip(x) {
            let m = self.j0_inv * t * self.j0_inv * (-scale);
            for (slot, (r, col)) in out.iter_mut().zip([(0, 0), (0, 1), (1, 1)]) {
                *slot = std::mem::take(slot).add_term(xi, m[(r, col)]);
            }
        }
        out
    }

    fn b_vector_affine(&self, x: &[usize], scale: f64) -> [Affine; 2] {
        let c = self.j0_inv_sqrt * self.h * 1.5;
        let mut out = [Affine::constant(c[0]), Affine::constant(c[1])];
        for (t, &xi) in self.terms.iter().zip(x) {
            let v = self.j0_neg34 * t * self.j0_neg34 * self.h * (-0.5 * scale);
            for (slot, k) in out.iter_mut().zip(0..2) {
                *slot = std::mem::take(slot).add_term(xi, v[k]);
            }
        }
        out
    }
}

/// Adds M ⪰ 0, β and the worst-case CVaR constraint for ξᵀBξ + 2bᵀξ − δ_b at level `p_out`.
///
/// Returns the indices of M (upper triangle, row-major) and β.
pub fn worst_case_cvar_blocks(
    problem: &mut ConicProblem,
    b_mat: &[Affine; 3],
    b_vec: &[Affine; 2],
    delta_b: &Affine,
    p_out: f64,
) -> ([usize; 6], usize) {
    let m: [usize; 6] = std::array::from_fn(|_| problem.add_var());
    let beta = problem.add_var();
    let v = |k: usize| Affine::var(m[k]);
    let trace = v(0).add_term(m[3], 1.0).add_term(m[5], 1.0);
    problem.le(&Affine::var(beta).plus(&trace.scale(1.0 / p_out)), &Affine::default());
    problem.psd(&[
        vec![v(0), v(1), v(2)],
        vec![v(1), v(3), v(4)],
        vec![v(2), v(4), v(5)],
    ]);
    let neg = |a: &Affine| a.clone().scale(-1.0);
    // M − [[B, b], [bᵀ, −δ_b − β]]
    let corner = v(5).plus(delta_b).add_term(beta, 1.0);
    problem.psd(&[
        vec![v(0).plus(&neg(&b_mat[0])), v(1).plus(&neg(&b_mat[1])), v(2).plus(&neg(&b_vec[0]))],
        vec![v(1).plus(&neg(&b_mat[1])), v(3).plus(&neg(&b_mat[2])), v(4).plus(&neg(&b_vec[1]))],
        vec![v(2).plus(&neg(&b_vec[0])), v(4).plus(&neg(&b_vec[1])), corner],
    ]);
    (m, beta)
}

/// Worst-case CVaR of ξᵀBξ + 2bᵀξ − δ_b over zero-mean, identity-covariance ξ.
pub fn worst_case_cvar(
    b_mat: &Matrix2<f64>,
    b_vec: &Vector2<f64>,
    delta_b: f64,
    p_out: f64,
) -> Result<f64, AllocError> {
    let mut p = ConicProblem::new(0);
    let bm = [
        Affine::constant(b_mat[(0, 0)]),
        Affine::constant(0.5 * (b_mat[(0, 1)] + b_mat[(1, 0)])),
        Affine::constant(b_mat[(1, 1)]),
    ];
    let bv = [Affine::constant(b_vec[0]), Affine::constant(b_vec[1])];
    let (m, beta) = worst_case_cvar_blocks(&mut p, &bm, &bv, &Affine::constant(delta_b), p_out);
    // The value itself is wanted, so the ≤ 0 row is dropped.
    p.blocks.remove(0);
    let obj = Affine::var(beta)
        .add_term(m[0], 1.0 / p_out)
        .add_term(m[3], 1.0 / p_out)
        .add_term(m[5], 1.0 / p_out);
    p.minimize(&obj);
    let sol = solve(&p, &solver_options());
    if sol.status != SolveStatus::Optimal {
        return Err(AllocError::Solver(sol.status));
    }
    Ok(sol.objective_value)
}

fn solver_options() -> SolverOptions {
    SolverOptions {
        tol: 1e-10,
        ..SolverOptions::default()
    }
}

/// Shared variables of the three programs.
struct Skeleton {
    problem: ConicProblem,
    x: Vec<usize>,
    y: usize,
    q: usize,
    trace_z: Affine,
    j_hat: [Affine; 3],
    /// P̄ in W.
    cap: f64,
    /// FIM normaliser √det J(P̄·1), 1/m².
    s_j: f64,
    /// λ_min of the normalised FIM at full power.
    t0: f64,
    serving: usize,
    /// Rate constraint pieces: ‖û − v‖² and δ·P̄^{1/k}.
    d0_sq: f64,
    root_gain: f64,
}

impl Skeleton {
    fn new(s: &Scenario, rate_bps: f64) -> Result<Self, AllocError> {
        validate(s)?;
        let serving = serving_led(s)?;
        let budget = power_budget(s);
        let cap = budget.per_led_cap;
        let n = s.num_leds();
        let terms = fim_terms(s, &s.ue_position);
        let full = terms.iter().fold(Matrix2::zeros(), |a, t| a + t * cap);
        crlb(&FisherInfo(full))?;
        let s_j = full.determinant().sqrt();
        let t0 = full.symmetric_eigenvalues().min() / s_j;

        let mut problem = ConicProblem::new(n + 2);
        let x: Vec<usize> = (0..n).collect();
        let y = n;
        let q = n + 1;
        let zero = Affine::default();
        let one = Affine::constant(1.0);
        for &i in &x {
            problem.le(&Affine::term(i, -1.0), &zero);
            if i == serving {
                problem.le(&Affine::var(i).add_term(y, 1.0), &one);
            } else {
                problem.le(&Affine::var(i), &one);
            }
        }
        problem.le(&Affine::term(y, -1.0), &zero);
        let total = x.iter().fold(Affine::var(y), |a, &i| a.add_term(i, 1.0));
        problem.le(&total, &Affine::constant(budget.total_cap / cap));

        let mut j_hat = [Affine::default(), Affine::default(), Affine::default()];
        for (t, &i) in terms.iter().zip(&x) {
            let m = t * (cap / s_j);
            for (slot, (r, c)) in j_hat.iter_mut().zip([(0, 0), (0, 1), (1, 1)]) {
                *slot = std::mem::take(slot).add_term(i, m[(r, c)]);
            }
        }
        let (_, trace_z) = trace_inverse_epigraph(&mut problem, [&j_hat[0], &j_hat[1], &j_hat[2]]);

        let led = &s.leds[serving];
        let k = led.m + 3.0;
        root_constraint(&mut problem, y, q, k)?;
        let delta = delta_coefficient(s, serving, rate_bps);
        let d0_sq = (s.ue_position - led.pos()).norm_squared();
        problem.minimize(&trace_z);
        Ok(Skeleton {
            problem,
            x,
            y,
            q,
            trace_z,
            j_hat,
            cap,
            s_j,
            t0,
            serving,
            d0_sq,
            root_gain: delta * cap.powf(1.0 / k),
        })
    }

    /// δ_b = δ·P̄^{1/k}·q − ‖û − v‖², m².
    fn delta_b(&self) -> Affine {
        Affine::term(self.q, self.root_gain).add_const(-self.d0_sq)
    }

    fn solve(&self, s: &Scenario, scheme: Scheme) -> Result<PowerAllocation, AllocError> {
        let mut sol = solve(&self.problem, &solver_options());
        if matches!(sol.status, SolveStatus::NumericalFailure | SolveStatus::MaxIterations) {
            sol = solve(&self.problem, &SolverOptions::default());
        }
        match sol.status {
            SolveStatus::Optimal => {}
            SolveStatus::Infeasible => return Err(AllocError::Infeasible { scheme }),
            other => return Err(AllocError::Solver(other)),
        }
        let mut p_p: Vec<f64> = self.x.iter().map(|&i| sol.x[i].max(0.0) * self.cap).collect();
        let mut p_c = sol.x[self.y].max(0.0) * self.cap;
        repair_budgets(s, self.serving, &mut p_p, &mut p_c);
        let value = crlb(&FisherInfo(fim_of(s, &p_p)))?;
        Ok(PowerAllocation {
            p_p,
            p_c,
            serving: self.serving,
            crlb_value: value,
            scheme,
            history: Vec::new(),
            warning: None,
            kkt_residual: sol.kkt_residuals.primal.max(sol.kkt_residuals.dual).max(sol.kkt_residuals.gap),
        })
    }
}

/// Pulls solver round-off back inside the budgets.
fn repair_budgets(s: &Scenario, serving: usize, p_p: &mut [f64], p_c: &mut f64) {
    let b = power_budget(s);
    *p_c = p_c.min(b.per_led_cap);
    for (i, p) in p_p.iter_mut().enumerate() {
        let cap = if i == serving { b.per_led_cap - *p_c } else { b.per_led_cap };
        *p = p.min(cap).max(0.0);
    }
    let sum: f64 = p_p.iter().sum();
    let room = b.total_cap - *p_c;
    if sum > room && sum > 0.0 {
        let k = room.max(0.0) / sum;
        for p in p_p.iter_mut() {
            *p *= k;
        }
    }
}

/// q ≤ y^{1/k} for y ∈ [0, 1]: exact tower when k is a power of two, chord inner bound otherwise.
fn root_constraint(problem: &mut ConicProblem, y: usize, q: usize, k: f64) -> Result<(), AllocError> {
    let ki = k.round();
    if (k - ki).abs() < 1e-12 && ki >= 2.0 && (ki as u32).is_power_of_two() {
        power_root_epigraph(problem, &Affine::var(y), q, ki as u32)
            .map_err(|e| AllocError::Config(e.to_string()))?;
        return Ok(());
    }
    let mut knots: Vec<f64> = (0..=20).rev().map(|j| 0.5f64.powi(j)).collect();
    knots.insert(0, 0.0);
    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (fa, fb) = (a.powf(1.0 / k), b.powf(1.0 / k));
        let slope = (fb - fa) / (b - a);
        // q ≤ fa + slope·(y − a)
        problem.le(
            &Affine::var(q).add_term(y, -slope),
            &Affine::constant(fa - slope * a),
        );
    }
    problem.le(&Affine::term(q, -1.0), &Affine::default());
    Ok(())
}

/// Minimises Tr(J⁻¹) with the rate target met at the estimated position.
pub fn solve_perfect(s: &Scenario, rate_bps: f64) -> Result<PowerAllocation, AllocError> {
    if !(rate_bps >= 0.0 && rate_bps.is_finite()) {
        return Err(AllocError::Config(format!("rate {rate_bps} must be nonnegative")));
    }
    let mut sk = Skeleton::new(s, rate_bps.max(1e-9))?;
    let db = sk.delta_b();
    sk.problem.le(&Affine::default(), &db);
    sk.solve(s, Scheme::Perfect)
}

/// Gaussian-error design through the Bernstein-type bound.
pub fn solve_bernstein(s: &Scenario, cfg: &RobustConfig) -> Result<PowerAllocation, AllocError> {
    cfg.validate()?;
    let mut sk = Skeleton::new(s, cfg.rate_bps)?;
    let eta = cfg.eta();
    let p = &mut sk.problem;
    let t = p.add_var();
    let rho = p.add_var();
    let sigma = p.add_var();
    let r = p.add_var();
    let one = Affine::constant(1.0);
    let t0 = sk.t0;
    // Ĵ − t₀·t·I ⪰ 0, so λ_min(J) ≥ s_J·t₀·t.
    p.psd(&[
        vec![sk.j_hat[0].clone().add_term(t, -t0), sk.j_hat[1].clone()],
        vec![sk.j_hat[1].clone(), sk.j_hat[2].clone().add_term(t, -t0)],
    ]);
    // ρ·t ≥ 1, σ² ≤ t, σ·r ≥ 1.
    p.rotated_cone(&Affine::var(rho), &Affine::var(t), std::slice::from_ref(&one));
    p.rotated_cone(&Affine::var(t), &one, &[Affine::var(sigma)]);
    p.rotated_cone(&Affine::var(sigma), &Affine::var(r), &[one]);
    let h = offset_xy(s, sk.serving).norm();
    let lam = sk.s_j * t0;
    let two_eta = (2.0 * eta).sqrt();
    // Tr(J⁻¹) + √(2η)·(√2/λ_min + √2‖h‖/√λ_min) + η/λ_min ≤ δ_b
    let lhs = sk
        .trace_z
        .clone()
        .scale(1.0 / sk.s_j)
        .add_term(rho, (two_eta * 2f64.sqrt() + eta) / lam)
        .add_term(r, two_eta * 2f64.sqrt() * h / lam.sqrt());
    let db = sk.delta_b();
    sk.problem.le(&lhs, &db);
    sk.solve(s, Scheme::Bernstein)
}

/// Moment-robust design by successive convex approximation of the worst-case CVaR constraint.
///
/// `init` is the first expansion point; `None` starts from the Bernstein allocation and
/// falls back to an equal split of the budget.
pub fn solve_cvar_sca(
    s: &Scenario,
    cfg: &RobustConfig,
    init: Option<(Vec<f64>, f64)>,
) -> Result<PowerAllocation, AllocError> {
    cfg.validate()?;
    let (mut p0, mut pc0) = match init {
        Some(v) => v,
        None => match solve_bernstein(s, cfg) {
            Ok(a) => (a.p_p, a.p_c),
            Err(_) => equal_split(s),
        },
    };
    let mut c_prev = f64::INFINITY;
    let mut history = Vec::new();
    let mut incumbent: Option<PowerAllocation> = None;
    let mut warning = Some(ScaWarning::IterationLimit);
    for iter in 1..=cfg.sca_max_iter {
        let step = cvar_subproblem(s, cfg, &p0, pc0, c_prev);
        let alloc = match (step, &incumbent) {
            (Ok(a), _) => a,
            (Err(e), None) => return Err(e),
            (Err(_), Some(_)) => {
                warning = Some(ScaWarning::NonImproving);
                break;
            }
        };
        let c = alloc.crlb_value;
        history.push(c);
        let done = c_prev.is_finite() && (c - c_prev).abs() / c <= cfg.sca_tolerance;
        p0 = alloc.p_p.clone();
        pc0 = alloc.p_c;
        c_prev = c;
        incumbent = Some(alloc);
        if done {
            warning = None;
            break;
        }
        if iter == cfg.sca_max_iter {
            warning = Some(ScaWarning::IterationLimit);
        }
    }
    let mut out = incumbent.ok_or(AllocError::Infeasible { scheme: Scheme::Cvar })?;
    out.history = history;
    out.warning = warning;
    Ok(out)
}

fn equal_split(s: &Scenario) -> (Vec<f64>, f64) {
    let b = power_budget(s);
    let n = s.num_leds();
    (vec![(b.total_cap / n as f64).min(b.per_led_cap); n], 0.0)
}

/// Relative slack on the CRLB trust bound so the incumbent stays strictly admissible.
const TRUST_SLACK: f64 = 1e-5;

fn cvar_subproblem(
    s: &Scenario,
    cfg: &RobustConfig,
    p0: &[f64],
    pc0: f64,
    c_prev: f64,
) -> Result<PowerAllocation, AllocError> {
    let mut sk = Skeleton::new(s, cfg.rate_bps)?;
    let lin = Linearization::new(s, sk.serving, cfg.rate_bps, p0, pc0)?;
    let b_mat = lin.b_matrix_affine(&sk.x, sk.cap);
    let b_vec = lin.b_vector_affine(&sk.x, sk.cap);
    let db = sk.delta_b();
    worst_case_cvar_blocks(&mut sk.problem, &b_mat, &b_vec, &db, cfg.p_out);
    if c_prev.is_finite() {
        let bound = Affine::constant(sk.s_j * c_prev * (1.0 + TRUST_SLACK));
        let tr = sk.trace_z.clone();
        sk.problem.le(&tr, &bound);
    }
    sk.solve(s, Scheme::Cvar)
}

/// Dispatches on `scheme`; the perfect design ignores `p_out`.
pub fn solve_scheme(s: &Scenario, scheme: Scheme, cfg: &RobustConfig) -> Result<PowerAllocation, AllocError> {
    match scheme {
        Scheme::Perfect => solve_perfect(s, cfg.rate_bps),
        Scheme::Bernstein => solve_bernstein(s, cfg),
        Scheme::Cvar => solve_cvar_sca(s, cfg, None),
    }
}

/// Builds [[B, b], [bᵀ, −δ_b]] as a 3×3 matrix.
pub fn outage_matrix(form: &OutageForm) -> Matrix3<f64> {
    let mut m = Matrix3::zeros();
    m.fixed_view_mut::<2, 2>(0, 0).copy_from(&form.b_mat);
    m[(0, 2)] = form.b_vec[0];
    m[(1, 2)] = form.b_vec[1];
    m[(2, 0)] = form.b_vec[0];
    m[(2, 1)] = form.b_vec[1];
    m[(2, 2)] = -form.delta_b;
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three() -> Scenario {
        Scenario::builtin(3).unwrap()
    }

    #[test]
    fn serving_ties_go_low() {
        let g = [ChannelGain(1.0), ChannelGain(2.0), ChannelGain(2.0)];
        assert_eq!(select_serving_led(&g).unwrap(), 1);
        assert_eq!(select_serving_led(&[ChannelGain(0.0), ChannelGain(3.0)]).unwrap(), 1);
        assert!(select_serving_led(&[ChannelGain(0.0)]).is_err());
    }

    #[test]
    fn bernstein_bound_cases() {
        assert_eq!(bernstein_bound(&Matrix2::zeros(), &Vector2::zeros(), 1.0), 0.0);
        let b = Matrix2::new(2.0, 0.5, 0.5, 1.0);
        assert!((bernstein_bound(&b, &Vector2::new(1.0, 1.0), 0.0) - 3.0).abs() < 1e-15);
        let eta = -(0.01f64).ln();
        let v = bernstein_bound(&Matrix2::identity(), &Vector2::zeros(), eta);
        assert!((v - 10.90).abs() < 5e-3, "{v}");
    }

    #[test]
    fn cvar_slack_case() {
        let v = worst_case_cvar(&Matrix2::zeros(), &Vector2::zeros(), 0.5, 0.1).unwrap();
        assert!((v + 0.5).abs() < 1e-6, "{v}");
    }

    #[test]
    fn linearization_exact_at_expansion_point() {
        let s = three();
        let k = serving_led(&s).unwrap();
        let p0 = vec![60.0, 70.0, 80.0];
        let lin = Linearization::new(&s, k, 2e8, &p0, 16.0).unwrap();
        assert!((lin.b_matrix(&p0) - lin.j0_inv).norm() < 1e-18);
        assert!((lin.b_vector(&p0) - lin.j0_inv_sqrt * lin.h).norm() < 1e-15);
        let exact = lin.delta * 2.0 - lin.d0_sq;
        assert!((lin.delta_b_tangent(16.0) - exact).abs() < 1e-12);
    }

    #[test]
    fn perfect_small_rate_saturates() {
        let s = three();
        let a = solve_perfect(&s, 1e3).unwrap();
        let b = power_budget(&s);
        assert!(a.p_c < 1e-6, "{a:?}");
        assert!((a.sum_p_p() - b.total_cap.min(3.0 * b.per_led_cap)).abs() < 1e-4);
        assert!(a.budget_violation(&s) < 1e-6);
    }

    #[test]
    fn scheme_parse() {
        assert_eq!("CVaR".parse::<Scheme>().unwrap(), Scheme::Cvar);
        assert!("x".parse::<Scheme>().is_err());
    }
}
