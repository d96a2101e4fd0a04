//! Cone algebra for the product of a nonnegative orthant, second-order cones and PSD cones.
//!
//! PSD blocks are stored as full column-major k×k vectors so that the inner product
//! is the plain dot product.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Dims {
    pub l: usize,
    pub q: Vec<usize>,
    pub s: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
pub enum Block {
    Lp { start: usize, len: usize },
    Soc { start: usize, len: usize },
    Sdp { start: usize, side: usize },
}

impl Dims {
    pub fn len(&self) -> usize {
        self.l + self.q.iter().sum::<usize>() + self.s.iter().map(|k| k * k).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn degree(&self) -> usize {
        self.l + self.q.len() + self.s.iter().sum::<usize>()
    }

    pub fn blocks(&self) -> Vec<Block> {
        let mut out = Vec::new();
        let mut at = 0;
        if self.l > 0 {
            out.push(Block::Lp { start: 0, len: self.l });
            at = self.l;
        }
        for &len in &self.q {
            out.push(Block::Soc { start: at, len });
            at += len;
        }
        for &side in &self.s {
            out.push(Block::Sdp { start: at, side });
            at += side * side;
        }
        out
    }

    pub fn identity(&self) -> DVector<f64> {
        let mut e = DVector::zeros(self.len());
        for b in self.blocks() {
            match b {
                Block::Lp { start, len } => e.rows_mut(start, len).fill(1.0),
                Block::Soc { start, .. } => e[start] = 1.0,
                Block::Sdp { start, side } => {
                    for i in 0..side {
                        e[start + i * side + i] = 1.0;
                    }
                }
            }
        }
        e
    }

    /// Smallest "eigenvalue" of x with respect to the cone.
    pub fn min_eig(&self, x: &DVector<f64>) -> f64 {
        let mut m = f64::INFINITY;
        for b in self.blocks() {
            let v = match b {
                Block::Lp { start, len } => x.rows(start, len).min(),
                Block::Soc { start, len } => x[start] - x.rows(start + 1, len - 1).norm(),
                Block::Sdp { start, side } => {
                    let mat = sym_block(x, start, side);
                    SymmetricEigen::new(mat).eigenvalues.min()
                }
            };
            m = m.min(v);
        }
        m
    }

    /// x ∘ y.
    pub fn product(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.len());
        for b in self.blocks() {
            match b {
                Block::Lp { start, len } => {
                    for i in start..start + len {
                        out[i] = x[i] * y[i];
                    }
                }
                Block::Soc { start, len } => {
                    let x1 = x.rows(start + 1, len - 1);
                    let y1 = y.rows(start + 1, len - 1);
                    out[start] = x.rows(start, len).dot(&y.rows(start, len));
                    let tail = y1 * x[start] + x1 * y[start];
                    out.rows_mut(start + 1, len - 1).copy_from(&tail);
                }
                Block::Sdp { start, side } => {
                    let xm = mat_block(x, start, side);
                    let ym = mat_block(y, start, side);
                    let p = (&xm * &ym + &ym * &xm) * 0.5;
                    out.rows_mut(start, side * side).copy_from_slice(p.as_slice());
                }
            }
        }
        out
    }

    /// Solves λ ∘ u = y for u, where `lambda` is a scaled point (diagonal in PSD blocks).
    pub fn divide(&self, lambda: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.len());
        for b in self.blocks() {
            match b {
                Block::Lp { start, len } => {
                    for i in start..start + len {
                        out[i] = y[i] / lambda[i];
                    }
                }
                Block::Soc { start, len } => {
                    let l0 = lambda[start];
                    let l1 = lambda.rows(start + 1, len - 1);
                    let y1 = y.rows(start + 1, len - 1);
                    let det = (l0 - l1.norm()) * (l0 + l1.norm());
                    let u0 = (l0 * y[start] - l1.dot(&y1)) / det;
                    let u1 = (y1 - l1 * u0) / l0;
                    out[start] = u0;
                    out.rows_mut(start + 1, len - 1).copy_from(&u1);
                }
                Block::Sdp { start, side } => {
                    for j in 0..side {
                        for i in 0..side {
                            let li = lambda[start + i * side + i];
                            let lj = lambda[start + j * side + j];
                            out[start + j * side + i] = 2.0 * y[start + j * side + i] / (li + lj);
                        }
                    }
                }
            }
        }
        out
    }

    /// Largest α with λ + α·d in the cone (λ interior, diagonal in PSD blocks).
    pub fn max_step(&self, lambda: &DVector<f64>, d: &DVector<f64>) -> f64 {
        let mut alpha = f64::INFINITY;
        for b in self.blocks() {
            let a = match b {
                Block::Lp { start, len } => {
                    let mut a = f64::INFINITY;
                    for i in start..start + len {
                        if d[i] < 0.0 {
                            a = a.min(-lambda[i] / d[i]);
                        }
                    }
                    a
                }
                Block::Soc { start, len } => {
                    let l = lambda.rows(start, len);
                    let dv = d.rows(start, len);
                    let jdot = |u: &nalgebra::DVectorView<f64>, v: &nalgebra::DVectorView<f64>| {
                        u[0] * v[0] - u.rows(1, len - 1).dot(&v.rows(1, len - 1))
                    };
                    let qa = jdot(&dv, &dv);
                    let qb = 2.0 * jdot(&l, &dv);
                    let qc = {
                        let n1 = l.rows(1, len - 1).norm();
                        (l[0] - n1) * (l[0] + n1)
                    };
                    first_positive_root(qa, qb, qc)
                }
                Block::Sdp { start, side } => {
                    let mut m = mat_block(d, start, side);
                    for j in 0..side {
                        for i in 0..side {
                            let s = (lambda[start + i * side + i] * lambda[start + j * side + j]).sqrt();
                            m[(i, j)] /= s;
                        }
                    }
                    let m = (&m + m.transpose()) * 0.5;
                    let lo = SymmetricEigen::new(m).eigenvalues.min();
                    if lo < 0.0 {
                        -1.0 / lo
                    } else {
                        f64::INFINITY
                    }
                }
            };
            alpha = alpha.min(a);
        }
        alpha
    }
}

/// Smallest positive root of c + bα + aα² (c > 0), or ∞.
fn first_positive_root(a: f64, b: f64, c: f64) -> f64 {
    let scale = a.abs().max(b.abs()).max(c.abs());
    if scale == 0.0 {
        return f64::INFINITY;
    }
    if a.abs() <= 1e-15 * scale {
        return if b < 0.0 { -c / b } else { f64::INFINITY };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return f64::INFINITY;
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let roots = [q / a, if q != 0.0 { c / q } else { f64::INFINITY }];
    roots
        .into_iter()
        .filter(|r| *r > 0.0)
        .fold(f64::INFINITY, f64::min)
}

pub fn mat_block(x: &DVector<f64>, start: usize, side: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(side, side, x.rows(start, side * side).as_slice())
}

pub fn sym_block(x: &DVector<f64>, start: usize, side: usize) -> DMatrix<f64> {
    let m = mat_block(x, start, side);
    (&m + m.transpose()) * 0.5
}

#[derive(Debug, Clone)]
struct SocScale {
    beta: f64,
    w: DVector<f64>,
}

#[derive(Debug, Clone)]
struct SdpScale {
    r: DMatrix<f64>,
    rinv: DMatrix<f64>,
}

/// Nesterov–Todd scaling W with W z = W⁻ᵀ s = λ.
#[derive(Debug, Clone)]
pub struct Scaling {
    lp: DVector<f64>,
    soc: Vec<SocScale>,
    sdp: Vec<SdpScale>,
    pub lambda: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Apply {
    W,
    Wt,
    WInv,
    WInvT,
}

fn jform(v: &nalgebra::DVectorView<f64>) -> f64 {
    let n1 = v.rows(1, v.len() - 1).norm();
    (v[0] - n1) * (v[0] + n1)
}

impl Scaling {
    pub fn new(dims: &Dims, s: &DVector<f64>, z: &DVector<f64>) -> Option<Scaling> {
        let mut lp = DVector::zeros(dims.l);
        let mut soc = Vec::new();
        let mut sdp = Vec::new();
        for b in dims.blocks() {
            match b {
                Block::Lp { start, len } => {
                    for i in 0..len {
                        let (si, zi) = (s[start + i], z[start + i]);
                        if !(si > 0.0 && zi > 0.0) {
                            return None;
                        }
                        lp[i] = (si / zi).sqrt();
                    }
                }
                Block::Soc { start, len } => {
                    let sv = s.rows(start, len);
                    let zv = z.rows(start, len);
                    let (sj, zj) = (jform(&sv), jform(&zv));
                    if !(sj > 0.0 && zj > 0.0 && sv[0] > 0.0 && zv[0] > 0.0) {
                        return None;
                    }
                    let sbar = sv / sj.sqrt();
                    let zbar = zv / zj.sqrt();
                    let gamma = ((1.0 + sbar.dot(&zbar)) / 2.0).sqrt();
                    let mut w = sbar.clone_owned();
                    w[0] += zbar[0];
                    for i in 1..len {
                        w[i] -= zbar[i];
                    }
                    w /= 2.0 * gamma;
                    soc.push(SocScale {
                        beta: (sj / zj).powf(0.25),
                        w,
                    });
                }
                Block::Sdp { start, side } => {
                    let l1 = sym_block(s, start, side).cholesky()?.l();
                    let l2 = sym_block(z, start, side).cholesky()?.l();
                    let svd = (l2.transpose() * &l1).svd(true, true);
                    let u = svd.u?;
                    let vt = svd.v_t?;
                    let sv = &svd.singular_values;
                    if sv.iter().any(|x| !(*x > 0.0)) {
                        return None;
                    }
                    let dinv = DMatrix::from_diagonal(&sv.map(|x| 1.0 / x.sqrt()));
                    let r = &l1 * vt.transpose() * &dinv;
                    let rinv = &dinv * u.transpose() * l2.transpose();
                    sdp.push(SdpScale { r, rinv });
                }
            }
        }
        let mut scaling = Scaling {
            lp,
            soc,
            sdp,
            lambda: DVector::zeros(dims.len()),
        };
        let mut lambda = scaling.apply(dims, Apply::W, z);
        // PSD blocks of λ are diagonal by construction; clear rounding noise.
        for b in dims.blocks() {
            if let Block::Sdp { start, side } = b {
                for j in 0..side {
                    for i in 0..side {
                        if i != j {
                            lambda[start + j * side + i] = 0.0;
                        }
                    }
                }
            }
        }
        scaling.lambda = lambda;
        Some(scaling)
    }

    pub fn apply(&self, dims: &Dims, mode: Apply, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(x.len());
        let (mut qi, mut si) = (0, 0);
        for b in dims.blocks() {
            match b {
                Block::Lp { start, len } => {
                    for i in 0..len {
                        let d = self.lp[i];
                        out[start + i] = match mode {
                            Apply::W | Apply::Wt => d * x[start + i],
                            Apply::WInv | Apply::WInvT => x[start + i] / d,
                        };
                    }
                }
                Block::Soc { start, len } => {
                    let sc = &self.soc[qi];
                    qi += 1;
                    let xv = x.rows(start, len);
                    let w0 = sc.w[0];
                    let sign = match mode {
                        Apply::W | Apply::Wt => 1.0,
                        Apply::WInv | Apply::WInvT => -1.0,
                    };
                    let w1 = sc.w.rows(1, len - 1) * sign;
                    let x1 = xv.rows(1, len - 1);
                    let wx = w1.dot(&x1);
                    let mut y = DVector::zeros(len);
                    y[0] = w0 * xv[0] + wx;
                    let tail = x1 + &w1 * (xv[0] + wx / (1.0 + w0));
                    y.rows_mut(1, len - 1).copy_from(&tail);
                    let y = match mode {
                        Apply::W | Apply::Wt => y * sc.beta,
                        Apply::WInv | Apply::WInvT => y / sc.beta,
                    };
                    out.rows_mut(start, len).copy_from(&y);
                }
                Block::Sdp { start, side } => {
                    let sc = &self.sdp[si];
                    si += 1;
                    let xm = mat_block(x, start, side);
                    let y = match mode {
                        Apply::W => sc.r.transpose() * xm * &sc.r,
                        Apply::Wt => &sc.r * xm * sc.r.transpose(),
                        Apply::WInv => sc.rinv.transpose() * xm * &sc.rinv,
                        Apply::WInvT => &sc.rinv * xm * sc.rinv.transpose(),
                    };
                    out.rows_mut(start, side * side).copy_from_slice(y.as_slice());
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> Dims {
        Dims {
            l: 2,
            q: vec![3],
            s: vec![2],
        }
    }

    fn interior(dims: &Dims, seed: f64) -> DVector<f64> {
        let mut x = DVector::from_fn(dims.len(), |i, _| ((i as f64 + 1.0) * seed).sin() * 0.4);
        // make PSD block symmetric
        for b in dims.blocks() {
            if let Block::Sdp { start, side } = b {
                let m = sym_block(&x, start, side);
                x.rows_mut(start, side * side).copy_from_slice(m.as_slice());
            }
        }
        x + dims.identity() * 2.0
    }

    #[test]
    fn nt_scaling_identity() {
        let d = dims();
        let s = interior(&d, 0.7);
        let z = interior(&d, 1.3);
        let w = Scaling::new(&d, &s, &z).unwrap();
        let wz = w.apply(&d, Apply::W, &z);
        let wis = w.apply(&d, Apply::WInvT, &s);
        assert!((&wz - &wis).norm() < 1e-12, "{wz} {wis}");
        assert!((&w.lambda - &wz).norm() < 1e-12);
        let x = interior(&d, 2.1);
        let back = w.apply(&d, Apply::WInv, &w.apply(&d, Apply::W, &x));
        assert!((back - &x).norm() < 1e-12);
        let back = w.apply(&d, Apply::WInvT, &w.apply(&d, Apply::Wt, &x));
        assert!((back - &x).norm() < 1e-12);
    }

    #[test]
    fn divide_inverts_product() {
        let d = dims();
        let s = interior(&d, 0.7);
        let z = interior(&d, 1.3);
        let w = Scaling::new(&d, &s, &z).unwrap();
        let y = interior(&d, 0.4) - d.identity();
        let u = d.divide(&w.lambda, &y);
        let back = d.product(&w.lambda, &u);
        assert!((back - y).norm() < 1e-12);
    }

    #[test]
    fn step_reaches_boundary() {
        let d = dims();
        let s = interior(&d, 0.7);
        let z = interior(&d, 1.3);
        let w = Scaling::new(&d, &s, &z).unwrap();
        let dir = -d.identity() - interior(&d, 0.9) * 0.3;
        let a = d.max_step(&w.lambda, &dir);
        assert!(a.is_finite() && a > 0.0);
        let edge = &w.lambda + &dir * a;
        assert!(d.min_eig(&edge).abs() < 1e-9);
        assert!(d.min_eig(&(&w.lambda + &dir * (0.99 * a))) > 0.0);
    }
}
