//! Homogeneous self-dual primal-dual path following with Mehrotra correction.
//!
//! Standard form: minimize cᵀx subject to Gx + s = h, s ∈ K.

use nalgebra::{DMatrix, DVector};

use super::cones::{Apply, Dims, Scaling};
use super::{ConeBlock, ConicProblem, ConicSolution, KktResiduals, SolveStatus, SolverOptions};

struct Standard {
    c: DVector<f64>,
    g: DMatrix<f64>,
    h: DVector<f64>,
    dims: Dims,
}

fn standard_form(p: &ConicProblem) -> Standard {
    let n = p.num_vars();
    let mut lin = Vec::new();
    let mut soc = Vec::new();
    let mut sdp = Vec::new();
    for b in &p.blocks {
        match b {
            ConeBlock::Linear { .. } => lin.push(b),
            ConeBlock::SecondOrder { .. } => soc.push(b),
            ConeBlock::Semidefinite { .. } => sdp.push(b),
        }
    }
    let mut dims = Dims {
        l: lin.len(),
        ..Dims::default()
    };
    for b in &soc {
        if let ConeBlock::SecondOrder { f, .. } = b {
            dims.q.push(f.nrows() + 1);
        }
    }
    for b in &sdp {
        if let ConeBlock::Semidefinite { a0, .. } = b {
            dims.s.push(a0.nrows());
        }
    }
    let rows = dims.len();
    let mut g = DMatrix::zeros(rows, n);
    let mut h = DVector::zeros(rows);
    let mut r = 0;
    for b in lin.iter().chain(&soc).chain(&sdp) {
        match b {
            ConeBlock::Linear { a, b } => {
                g.row_mut(r).copy_from(&a.transpose());
                h[r] = *b;
                r += 1;
            }
            ConeBlock::SecondOrder { f, f0, c, d } => {
                g.row_mut(r).copy_from(&(-c).transpose());
                h[r] = *d;
                for i in 0..f.nrows() {
                    g.row_mut(r + 1 + i).copy_from(&(-f.row(i)));
                    h[r + 1 + i] = f0[i];
                }
                r += f.nrows() + 1;
            }
            ConeBlock::Semidefinite { a0, a } => {
                let k = a0.nrows();
                for (idx, v) in a0.iter().enumerate() {
                    h[r + idx] = *v;
                }
                for (col, ai) in a.iter().enumerate() {
                    for (idx, v) in ai.iter().enumerate() {
                        g[(r + idx, col)] = -v;
                    }
                }
                r += k * k;
            }
        }
    }
    Standard {
        c: p.objective.clone(),
        g,
        h,
        dims,
    }
}

/// Factorisation of GsᵀGs with Gs = W⁻ᵀG, through a QR of Gs.
struct Kkt {
    gs: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl Kkt {
    fn new(gs: DMatrix<f64>) -> Option<Kkt> {
        let n = gs.ncols();
        let mut r = gs.clone().qr().r();
        let scale = (0..n).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
        if !(scale > 0.0) || !scale.is_finite() {
            return None;
        }
        for i in 0..n {
            if r[(i, i)].abs() < 1e-14 * scale {
                r[(i, i)] = 1e-14 * scale * if r[(i, i)] < 0.0 { -1.0 } else { 1.0 };
            }
        }
        Some(Kkt { gs, r })
    }

    fn normal_solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let y = self
            .r
            .transpose()
            .solve_lower_triangular(rhs)
            .unwrap_or_else(|| rhs.clone());
        self.r.solve_upper_triangular(&y).unwrap_or(y)
    }

    /// Solves [0 Gᵀ; G −WᵀW][ux; uz] = [bx; bz]; returns (ux, W uz).
    fn solve(
        &self,
        dims: &Dims,
        w: &Scaling,
        g: &DMatrix<f64>,
        bx: &DVector<f64>,
        bz: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>) {
        let wbz = w.apply(dims, Apply::WInvT, bz);
        let rhs = bx + self.gs.transpose() * &wbz;
        let mut ux = self.normal_solve(&rhs);
        let mut uzt = &self.gs * &ux - &wbz;
        // One step of iterative refinement on the unreduced system.
        let uz = w.apply(dims, Apply::WInv, &uzt);
        let rx = bx - g.transpose() * &uz;
        let rz = bz - (g * &ux - w.apply(dims, Apply::Wt, &uzt));
        let wrz = w.apply(dims, Apply::WInvT, &rz);
        let dx = self.normal_solve(&(rx + self.gs.transpose() * &wrz));
        uzt += &self.gs * &dx - wrz;
        ux += dx;
        (ux, uzt)
    }
}

fn residual_norms(st: &Standard, x: &DVector<f64>, s: &DVector<f64>, z: &DVector<f64>, tau: f64) -> (f64, f64) {
    let rz = &st.g * x + s - &st.h * tau;
    let rx = st.g.transpose() * z + &st.c * tau;
    (
        rz.norm() / tau / st.h.norm().max(1.0),
        rx.norm() / tau / st.c.norm().max(1.0),
    )
}

pub fn solve(problem: &ConicProblem, opts: &SolverOptions) -> ConicSolution {
    let n = problem.num_vars();
    let fail = |status: SolveStatus| ConicSolution {
        status,
        x: DVector::zeros(n),
        objective_value: f64::NAN,
        kkt_residuals: KktResiduals {
            primal: f64::INFINITY,
            dual: f64::INFINITY,
            gap: f64::INFINITY,
        },
        certificate_residual: None,
        iterations: 0,
        mu_history: Vec::new(),
    };
    if problem.validate().is_err() {
        return fail(SolveStatus::NumericalFailure);
    }
    let st = standard_form(problem);
    let dims = &st.dims;
    let m = dims.len();
    if m == 0 {
        // Unconstrained linear objective.
        let status = if st.c.norm() == 0.0 {
            SolveStatus::Optimal
        } else {
            SolveStatus::Unbounded
        };
        let mut sol = fail(status);
        if status == SolveStatus::Optimal {
            sol.objective_value = 0.0;
            sol.kkt_residuals = KktResiduals {
                primal: 0.0,
                dual: 0.0,
                gap: 0.0,
            };
        }
        return sol;
    }
    let e = dims.identity();
    let nu = dims.degree() as f64;

    // Initial point from identity scaling.
    let Some(kkt0) = Kkt::new(st.g.clone()) else {
        return fail(SolveStatus::NumericalFailure);
    };
    let x0 = kkt0.normal_solve(&(st.g.transpose() * &st.h));
    let mut x = x0.clone();
    let mut s = &st.h - &st.g * &x0;
    let xd = kkt0.normal_solve(&(-&st.c));
    let mut z = &st.g * xd;
    for v in [&mut s, &mut z] {
        let t = -dims.min_eig(v);
        if t >= -1e-8 * v.norm().max(1.0) {
            *v += &e * (1.0 + t);
        }
    }
    let mut tau = 1.0;
    let mut kappa = 1.0;

    let hnorm0 = st.h.norm().max(1.0);
    let cnorm0 = st.c.norm().max(1.0);
    let mut mu_history = Vec::new();
    let mut status = SolveStatus::MaxIterations;
    let mut certificate = None;
    let mut iterations = 0;
    let mut stalls = 0;

    for iter in 0..=opts.max_iter {
        iterations = iter;
        let hrx = -(st.g.transpose() * &z);
        let hrz = &st.g * &x + &s;
        let rx = -&hrx + &st.c * tau;
        let rz = &hrz - &st.h * tau;
        let cx = st.c.dot(&x);
        let hz = st.h.dot(&z);
        let rt = kappa + cx + hz;
        let gap = s.dot(&z);
        let mu = (gap + tau * kappa) / (nu + 1.0);
        mu_history.push(mu);

        let pres = rz.norm() / tau / hnorm0;
        let dres = rx.norm() / tau / cnorm0;
        let pcost = cx / tau;
        let ngap = gap / (tau * tau);
        if pres <= opts.tol && dres <= opts.tol && ngap <= opts.tol * (1.0 + pcost.abs()) {
            status = SolveStatus::Optimal;
            break;
        }
        if hz < 0.0 {
            let pinf = hrx.norm() / cnorm0 / (-hz);
            if pinf <= opts.infeasibility_tol {
                status = SolveStatus::Infeasible;
                certificate = Some(pinf);
                break;
            }
        }
        if cx < 0.0 {
            let dinf = hrz.norm() / hnorm0 / (-cx);
            if dinf <= opts.infeasibility_tol {
                status = SolveStatus::Unbounded;
                certificate = Some(dinf);
                break;
            }
        }
        if iter == opts.max_iter {
            break;
        }

        let Some(w) = Scaling::new(dims, &s, &z) else {
            status = SolveStatus::NumericalFailure;
            break;
        };
        let lambda = w.lambda.clone();
        let mut gs = DMatrix::zeros(m, n);
        for j in 0..n {
            let col = w.apply(dims, Apply::WInvT, &st.g.column(j).into_owned());
            gs.set_column(j, &col);
        }
        let Some(kkt) = Kkt::new(gs) else {
            status = SolveStatus::NumericalFailure;
            break;
        };
        let (x1, z1t) = kkt.solve(dims, &w, &st.g, &(-&st.c), &st.h);
        let denom = -(z1t.norm_squared() + kappa / tau);

        let lambda_sq = dims.product(&lambda, &lambda);
        let mut affine: Option<(DVector<f64>, DVector<f64>, f64, f64)> = None;
        let mut sigma = 0.0;
        let mut step = None;
        for pass in 0..2 {
            let eta = 1.0 - sigma;
            let r1 = -&rx * eta;
            let r2 = -&rz * eta;
            let r3 = -rt * eta;
            let mut cs = -&lambda_sq + &e * (sigma * mu);
            let mut ct = -tau * kappa + sigma * mu;
            if let Some((dsa, dza, dta, dka)) = &affine {
                cs -= dims.product(dsa, dza);
                ct -= dta * dka;
            }
            let r4 = dims.divide(&lambda, &cs);
            let r5 = ct;
            let wr4 = w.apply(dims, Apply::Wt, &r4);
            let (x2, z2t) = kkt.solve(dims, &w, &st.g, &r1, &(&r2 - &wr4));
            let z2 = w.apply(dims, Apply::WInv, &z2t);
            let dtau = (r3 - st.c.dot(&x2) - st.h.dot(&z2) - r5 / tau) / denom;
            let dx = &x2 + &x1 * dtau;
            let dzt = &z2t + &z1t * dtau;
            let dst = &r4 - &dzt;
            let dkappa = (r5 - kappa * dtau) / tau;

            let mut amax = dims
                .max_step(&lambda, &dst)
                .min(dims.max_step(&lambda, &dzt));
            if dtau < 0.0 {
                amax = amax.min(-tau / dtau);
            }
            if dkappa < 0.0 {
                amax = amax.min(-kappa / dkappa);
            }
            if pass == 0 {
                let a = amax.min(1.0);
                sigma = (1.0 - a).powi(3);
                affine = Some((dst, dzt, dtau, dkappa));
            } else {
                let a = (opts.step_fraction * amax).min(1.0);
                step = Some((a, dx, dst, dzt, dtau, dkappa));
            }
        }
        let Some((a, dx, dst, dzt, dtau, dkappa)) = step else {
            status = SolveStatus::NumericalFailure;
            break;
        };
        if !(a > 0.0) || !a.is_finite() {
            status = SolveStatus::NumericalFailure;
            break;
        }
        stalls = if a < 1e-10 { stalls + 1 } else { 0 };
        if stalls >= 5 {
            status = SolveStatus::NumericalFailure;
            break;
        }
        x += dx * a;
        s += w.apply(dims, Apply::Wt, &dst) * a;
        z += w.apply(dims, Apply::WInv, &dzt) * a;
        tau += dtau * a;
        kappa += dkappa * a;
    }

    let certified = matches!(status, SolveStatus::Infeasible | SolveStatus::Unbounded);
    let xs = if certified { x.clone() } else { &x / tau };
    let (primal, dual) = residual_norms(&st, &x, &s, &z, tau);
    let objective_value = match status {
        SolveStatus::Infeasible => f64::INFINITY,
        SolveStatus::Unbounded => f64::NEG_INFINITY,
        _ => st.c.dot(&xs),
    };
    ConicSolution {
        status,
        x: xs,
        objective_value,
        kkt_residuals: KktResiduals {
            primal,
            dual,
            gap: s.dot(&z).abs() / (tau * tau),
        },
        certificate_residual: certificate,
        iterations,
        mu_history,
    }
}
