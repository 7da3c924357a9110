//! Linear shape constraints on Bernstein–Bézier coefficients.
//!
//! A coefficient vector `β` of degree `k` on the `d`-simplex is feasible when
//! `Rβ >= r` and `0 <= β <= 1`. The rows of `R` come in three blocks:
//!
//! - **R1**, convexity: weak diagonal dominance of the matrix of second
//!   differences at every `α ∈ Γ_{k-2}`. The absolute values are expanded over
//!   all sign patterns of the cross terms, giving `p_{k-2}(d-1)2^{d-2}` rows.
//! - **R2**, vertex values: `β = 1` at the `d` vertex coefficients, written
//!   as `+β >= 1` and `-β >= -1`.
//! - **R3**, lower bound: `β >= 1 - 1/k` at the `d(d-1)` coefficients adjacent
//!   to a vertex.
//!
//! Directions follow the simplex vertices: `v_0` is the implicit last
//! coordinate and `v_i` the `i`-th free one, so
//! `Δ_{i,0}β_α = β_{α+e_i} - β_{α+e_d}` in full multi-index notation.

use std::io::Write;
use std::ops::Range;

use nalgebra::DMatrix;

use crate::bernstein::{dimension, lattice, BernsteinBasis};
use crate::error::{check_len, Error, Result};

/// One sparse constraint row `Σ coef·β_idx >= rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintRow {
    pub coefs: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl ConstraintRow {
    pub fn value(&self, beta: &[f64]) -> f64 {
        self.coefs.iter().map(|(j, c)| c * beta[*j]).sum()
    }

    pub fn slack(&self, beta: &[f64]) -> f64 {
        self.value(beta) - self.rhs
    }

    pub fn norm(&self) -> f64 {
        self.coefs.iter().map(|(_, c)| c * c).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Convexity,
    Vertex,
    LowerBound,
}

#[derive(Debug, Clone)]
pub struct ConstraintSystem {
    d: usize,
    k: usize,
    p: usize,
    rows: Vec<ConstraintRow>,
    r1: Range<usize>,
    r2: Range<usize>,
    r3: Range<usize>,
}

impl ConstraintSystem {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn degree(&self) -> usize {
        self.k
    }

    /// Number of coefficients `p_k`.
    pub fn num_coefficients(&self) -> usize {
        self.p
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[ConstraintRow] {
        &self.rows
    }

    pub fn block_span(&self, block: Block) -> Range<usize> {
        match block {
            Block::Convexity => self.r1.clone(),
            Block::Vertex => self.r2.clone(),
            Block::LowerBound => self.r3.clone(),
        }
    }

    pub fn block_of(&self, row: usize) -> Block {
        if self.r1.contains(&row) {
            Block::Convexity
        } else if self.r2.contains(&row) {
            Block::Vertex
        } else {
            Block::LowerBound
        }
    }

    /// Dense `(R, r)`.
    pub fn dense(&self) -> (DMatrix<f64>, Vec<f64>) {
        self.dense_block(0..self.rows.len())
    }

    pub fn dense_block(&self, span: Range<usize>) -> (DMatrix<f64>, Vec<f64>) {
        let rows = &self.rows[span];
        let mut m = DMatrix::zeros(rows.len(), self.p);
        for (q, row) in rows.iter().enumerate() {
            for &(j, c) in &row.coefs {
                m[(q, j)] += c;
            }
        }
        (m, rows.iter().map(|r| r.rhs).collect())
    }

    /// `Rβ - r`.
    pub fn slacks(&self, beta: &[f64]) -> Result<Vec<f64>> {
        check_len(self.p, beta.len())?;
        Ok(self.rows.iter().map(|r| r.slack(beta)).collect())
    }

    /// Writes `[R | r]` as CSV with a `block` column.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        write!(out, "block")?;
        for j in 0..self.p {
            write!(out, ",b{j}")?;
        }
        writeln!(out, ",rhs")?;
        let (dense, rhs) = self.dense();
        for q in 0..self.rows.len() {
            let tag = match self.block_of(q) {
                Block::Convexity => "R1",
                Block::Vertex => "R2",
                Block::LowerBound => "R3",
            };
            write!(out, "{tag}")?;
            for j in 0..self.p {
                write!(out, ",{}", dense[(q, j)])?;
            }
            writeln!(out, ",{}", rhs[q])?;
        }
        Ok(())
    }
}

/// Adds `c` to the coefficient of `idx`, merging duplicates.
fn accumulate(coefs: &mut Vec<(usize, f64)>, idx: usize, c: f64) {
    match coefs.iter_mut().find(|(j, _)| *j == idx) {
        Some(entry) => entry.1 += c,
        None => coefs.push((idx, c)),
    }
}

pub fn build_constraints(d: usize, k: usize) -> Result<ConstraintSystem> {
    if d < 2 {
        return Err(Error::domain(format!("dimension must be >= 2, got {d}")));
    }
    if k < 2 {
        return Err(Error::domain(format!("degree must be >= 2, got {k}")));
    }
    let basis = BernsteinBasis::new(d, k)?;
    let p = basis.len();
    let free = d - 1;
    let at = |alpha: &[u32]| basis.index_of(alpha).expect("shifted multi-index stays on the lattice");
    let mut rows = Vec::new();

    // Δ_{i,0}Δ_{j,0}β_α for free coordinates i, j; the last entry is v_0.
    let last = d - 1;
    let second_diff = |alpha: &[u32], i: usize, j: usize, scale: f64, coefs: &mut Vec<(usize, f64)>| {
        for (a, b, sign) in [(i, j, 1.0), (i, last, -1.0), (j, last, -1.0), (last, last, 1.0)] {
            let mut shifted = alpha.to_vec();
            shifted[a] += 1;
            shifted[b] += 1;
            accumulate(coefs, at(&shifted), sign * scale);
        }
    };

    for alpha in lattice(d, k - 2) {
        let a = alpha.alpha();
        for i in (0..free).rev() {
            let others: Vec<usize> = (0..free).filter(|&j| j != i).collect();
            for pattern in 0..(1usize << others.len()) {
                let mut coefs = Vec::new();
                second_diff(a, i, i, 1.0, &mut coefs);
                for (bit, &j) in others.iter().enumerate() {
                    let s = if pattern >> (others.len() - 1 - bit) & 1 == 0 {
                        1.0
                    } else {
                        -1.0
                    };
                    second_diff(a, i, j, -s, &mut coefs);
                }
                coefs.retain(|(_, c)| *c != 0.0);
                rows.push(ConstraintRow { coefs, rhs: 0.0 });
            }
        }
    }
    let r1 = 0..rows.len();

    for v in 0..d {
        let idx = if v == 0 {
            basis.vertex_index(d - 1)
        } else {
            basis.vertex_index(v - 1)
        };
        rows.push(ConstraintRow {
            coefs: vec![(idx, 1.0)],
            rhs: 1.0,
        });
        rows.push(ConstraintRow {
            coefs: vec![(idx, -1.0)],
            rhs: -1.0,
        });
    }
    let r2 = r1.end..rows.len();

    let lower = 1.0 - 1.0 / k as f64;
    let mut unit = |entries: &[(usize, u32)]| {
        let mut alpha = vec![0u32; d];
        alpha[last] = k as u32;
        for &(i, v) in entries {
            alpha[i] += v;
            alpha[last] -= v;
        }
        rows.push(ConstraintRow {
            coefs: vec![(at(&alpha), 1.0)],
            rhs: lower,
        });
    };
    let km1 = k as u32 - 1;
    for i in 0..free {
        unit(&[(i, 1)]);
    }
    for i in 0..free {
        unit(&[(i, km1)]);
    }
    for i in 0..free {
        for j in (0..free).filter(|&j| j != i) {
            unit(&[(i, km1), (j, 1)]);
        }
    }
    let r3 = r2.end..rows.len();

    debug_assert_eq!(r1.len(), dimension(d, k - 2) * free * (1 << (d - 2)));
    Ok(ConstraintSystem {
        d,
        k,
        p,
        rows,
        r1,
        r2,
        r3,
    })
}

/// Worst violation per block; zero when the block is satisfied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilityReport {
    pub satisfied: bool,
    pub convexity: f64,
    pub vertex: f64,
    pub lower_bound: f64,
    pub bounds: f64,
}

pub fn check_feasible(beta: &[f64], system: &ConstraintSystem, tol: f64) -> Result<FeasibilityReport> {
    let slacks = system.slacks(beta)?;
    let worst = |span: Range<usize>| slacks[span].iter().fold(0.0f64, |w, s| w.max(-s));
    let bounds = beta.iter().fold(0.0f64, |w, b| w.max(-b).max(b - 1.0));
    let convexity = worst(system.r1.clone());
    let vertex = worst(system.r2.clone());
    let lower_bound = worst(system.r3.clone());
    let satisfied = [convexity, vertex, lower_bound, bounds].iter().all(|v| *v <= tol);
    Ok(FeasibilityReport {
        satisfied,
        convexity,
        vertex,
        lower_bound,
        bounds,
    })
}
