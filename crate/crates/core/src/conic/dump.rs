//! Line-oriented text form of a problem, one block per line, matrices row-major.
//!
//! ```text
//! vars 2
//! objective 1 0
//! linear 3 | -1 0
//! soc 1 0.5 | 1 0 | 0 1 | 0
//! psd 2 | 1 0 0 1 | 1 0 0 0 | 0 0 0 1
//! ```
//! Records: `linear b | a`, `soc rows d | c | F | f`, `psd side | A₀ | A₁ | … | Aₙ`.

use nalgebra::{DMatrix, DVector};

use super::{ConeBlock, ConicError, ConicProblem};

fn nums(v: impl IntoIterator<Item = f64>) -> String {
    v.into_iter()
        .map(|x| format!("{x:e}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn row_major(m: &DMatrix<f64>) -> String {
    nums((0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)])))
}

pub fn to_text(p: &ConicProblem) -> String {
    let mut out = format!("vars {}\nobjective {}\n", p.num_vars(), nums(p.objective.iter().copied()));
    for b in &p.blocks {
        let line = match b {
            ConeBlock::Linear { a, b } => format!("linear {b:e} | {}", nums(a.iter().copied())),
            ConeBlock::SecondOrder { f, f0, c, d } => format!(
                "soc {} {d:e} | {} | {} | {}",
                f.nrows(),
                nums(c.iter().copied()),
                row_major(f),
                nums(f0.iter().copied())
            ),
            ConeBlock::Semidefinite { a0, a } => {
                let mut s = format!("psd {} | {}", a0.nrows(), row_major(a0));
                for ai in a {
                    s.push_str(" | ");
                    s.push_str(&row_major(ai));
                }
                s
            }
        };
        out.push_str(&line);
        out.push('\n');
    }
    out
}

fn parse_nums(s: &str, line: usize) -> Result<Vec<f64>, ConicError> {
    s.split_whitespace()
        .map(|t| {
            t.parse::<f64>().map_err(|e| ConicError::Parse {
                line,
                reason: format!("{t:?}: {e}"),
            })
        })
        .collect()
}

pub fn from_text(text: &str) -> Result<ConicProblem, ConicError> {
    let mut n = None;
    let mut problem = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let raw = raw.trim();
        if raw.is_empty() || raw.starts_with('#') {
            continue;
        }
        let err = |reason: &str| ConicError::Parse {
            line,
            reason: reason.to_string(),
        };
        let (head, rest) = raw.split_once(' ').unwrap_or((raw, ""));
        match head {
            "vars" => {
                let k: usize = rest.trim().parse().map_err(|_| err("bad variable count"))?;
                n = Some(k);
                problem = Some(ConicProblem::new(k));
            }
            "objective" => {
                let p = problem.as_mut().ok_or_else(|| err("objective before vars"))?;
                let v = parse_nums(rest, line)?;
                if v.len() != p.num_vars() {
                    return Err(err("objective length"));
                }
                p.objective = DVector::from_vec(v);
            }
            "linear" | "soc" | "psd" => {
                let nv = n.ok_or_else(|| err("block before vars"))?;
                let parts: Vec<&str> = rest.split('|').collect();
                let block = match head {
                    "linear" => {
                        if parts.len() != 2 {
                            return Err(err("linear needs 2 fields"));
                        }
                        let b = parse_nums(parts[0], line)?;
                        let a = parse_nums(parts[1], line)?;
                        if b.len() != 1 || a.len() != nv {
                            return Err(err("linear sizes"));
                        }
                        ConeBlock::Linear {
                            a: DVector::from_vec(a),
                            b: b[0],
                        }
                    }
                    "soc" => {
                        if parts.len() != 4 {
                            return Err(err("soc needs 4 fields"));
                        }
                        let hd = parse_nums(parts[0], line)?;
                        if hd.len() != 2 {
                            return Err(err("soc header"));
                        }
                        let rows = hd[0] as usize;
                        let c = parse_nums(parts[1], line)?;
                        let f = parse_nums(parts[2], line)?;
                        let f0 = parse_nums(parts[3], line)?;
                        if c.len() != nv || f.len() != rows * nv || f0.len() != rows {
                            return Err(err("soc sizes"));
                        }
                        ConeBlock::SecondOrder {
                            f: DMatrix::from_row_slice(rows, nv, &f),
                            f0: DVector::from_vec(f0),
                            c: DVector::from_vec(c),
                            d: hd[1],
                        }
                    }
                    _ => {
                        if parts.len() != nv + 2 {
                            return Err(err("psd needs side, A0 and one matrix per variable"));
                        }
                        let side: usize =
                            parts[0].trim().parse().map_err(|_| err("psd side"))?;
                        let mut mats = Vec::with_capacity(nv + 1);
                        for part in &parts[1..] {
                            let v = parse_nums(part, line)?;
                            if v.len() != side * side {
                                return Err(err("psd matrix size"));
                            }
                            mats.push(DMatrix::from_row_slice(side, side, &v));
                        }
                        let a0 = mats.remove(0);
                        ConeBlock::Semidefinite { a0, a: mats }
                    }
                };
                problem
                    .as_mut()
                    .ok_or_else(|| err("block before vars"))?
                    .blocks
                    .push(block);
            }
            other => return Err(err(&format!("unknown record {other:?}"))),
        }
    }
    problem.ok_or(ConicError::Parse {
        line: 0,
        reason: "missing vars record".into(),
    })
}
