//! Bernstein–Bézier polynomials on the unit simplex.
//!
//! A point of the `(d-1)`-simplex is carried as `d` barycentric coordinates.
//! Polynomials of degree `k` are expanded in the multinomial Bernstein basis
//!
//! ```text
//! b_α(w; k) = k! / (α_1! ... α_d!) · w_1^α_1 ... w_d^α_d,    |α| = k,
//! ```
//!
//! whose `p_k = C(k+d-1, d-1)` elements are indexed by the multi-index set Γ_k.
//!
//! ## Canonical ordering
//!
//! Γ_k is enumerated over the free coordinates `(α_1, ..., α_{d-1})` with
//! `α_1` varying fastest and `α_{d-1}` slowest, keeping only tuples with
//! `α_1 + ... + α_{d-1} <= k`; `α_d` is implied. For `d = 3, k = 3` this gives
//!
//! ```text
//! (0,0) (1,0) (2,0) (3,0) (0,1) (1,1) (2,1) (0,2) (1,2) (0,3)
//! ```
//!
//! which is the column order of the convexity and lower-bound constraint
//! matrices built in [`crate::constraints`]. Every coefficient vector in this
//! crate uses this order.

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{check_len, Error, Result};

/// Tolerance on the coordinate sum of a [`SimplexPoint`].
pub const SIMPLEX_TOL: f64 = 1e-12;

/// A point of the unit simplex in barycentric coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SimplexPoint {
    coords: Vec<f64>,
}

impl SimplexPoint {
    /// Validates `d >= 2` coordinates in `[0, 1]` summing to one.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::domain(format!(
                "a simplex point needs at least 2 coordinates, got {}",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite() || *c < 0.0 || *c > 1.0) {
            return Err(Error::domain(format!("coordinates outside [0,1]: {coords:?}")));
        }
        let sum: f64 = coords.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::domain(format!("coordinates sum to {sum}, not 1: {coords:?}")));
        }
        Ok(Self { coords })
    }

    /// Builds a point from its first `d-1` coordinates; the last one is
    /// `1 - Σ free`. Rounding residue below the simplex tolerance is clamped.
    pub fn from_free(free: &[f64]) -> Result<Self> {
        let last = 1.0 - free.iter().sum::<f64>();
        let last = if (-SIMPLEX_TOL..0.0).contains(&last) { 0.0 } else { last };
        let mut coords = free.to_vec();
        coords.push(last);
        Self::new(coords)
    }

    /// Rescales nonnegative weights to sum to one.
    pub fn normalized(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::domain("weights must be nonnegative with positive sum"));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn vertex(d: usize, i: usize) -> Result<Self> {
        if i >= d {
            return Err(Error::domain(format!("vertex {i} out of range for d = {d}")));
        }
        let mut coords = vec![0.0; d];
        coords[i] = 1.0;
        Self::new(coords)
    }

    pub fn barycenter(d: usize) -> Result<Self> {
        Self::new(vec![1.0 / d as f64; d])
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn max_coord(&self) -> f64 {
        self.coords.iter().copied().fold(0.0, f64::max)
    }

    pub fn midpoint(&self, other: &SimplexPoint) -> SimplexPoint {
        let coords = self
            .coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        SimplexPoint { coords }
    }
}

impl TryFrom<Vec<f64>> for SimplexPoint {
    type Error = Error;

    fn try_from(coords: Vec<f64>) -> Result<Self> {
        Self::new(coords)
    }
}

impl From<SimplexPoint> for Vec<f64> {
    fn from(p: SimplexPoint) -> Self {
        p.coords
    }
}

/// An element of Γ_k: `d` nonnegative counts summing to `k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    alpha: Vec<u32>,
}

impl MultiIndex {
    pub fn new(alpha: Vec<u32>) -> Self {
        Self { alpha }
    }

    pub fn alpha(&self) -> &[u32] {
        &self.alpha
    }

    pub fn degree(&self) -> usize {
        self.alpha.iter().map(|&a| a as usize).sum()
    }

    /// The lattice point `α / k`.
    pub fn lattice_point(&self) -> SimplexPoint {
        let k = self.degree() as f64;
        SimplexPoint {
            coords: self.alpha.iter().map(|&a| a as f64 / k).collect(),
        }
    }
}

/// Cardinality of Γ_k, `C(k+d-1, d-1)`.
pub fn dimension(d: usize, k: usize) -> usize {
    binomial(k + d - 1, d - 1) as usize
}

fn binomial(n: usize, r: usize) -> u128 {
    let r = r.min(n - r);
    (0..r).fold(1u128, |acc, i| acc * (n - i) as u128 / (i as u128 + 1))
}

fn checked_binomial(n: u32, r: u32) -> Option<u128> {
    let r = r.min(n - r);
    let mut acc: u128 = 1;
    for i in 0..r {
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

/// Multinomial coefficient `k! / (α_1! ... α_d!)` as a product of binomials,
/// in exact integer arithmetic while it fits in 128 bits.
pub fn multinomial_exact(alpha: &[u32]) -> Option<u128> {
    let mut partial = 0u32;
    let mut acc: u128 = 1;
    for &a in alpha {
        partial += a;
        acc = acc.checked_mul(checked_binomial(partial, a)?)?;
    }
    Some(acc)
}

/// Natural log of the multinomial coefficient via log-gamma.
pub fn ln_multinomial(alpha: &[u32]) -> f64 {
    let k: u32 = alpha.iter().sum();
    ln_gamma(k as f64 + 1.0) - alpha.iter().map(|&a| ln_gamma(a as f64 + 1.0)).sum::<f64>()
}

fn multinomial(alpha: &[u32]) -> f64 {
    match multinomial_exact(alpha) {
        Some(m) => m as f64,
        None => ln_multinomial(alpha).exp(),
    }
}

/// All `d`-part compositions of `k` (zeros allowed) in canonical order.
/// Accepts `k = 0`, which the second-difference constraints need.
pub(crate) fn lattice(d: usize, k: usize) -> Vec<MultiIndex> {
    let k = k as u32;
    let free = d - 1;
    let mut out = Vec::with_capacity(dimension(d, k as usize));
    let mut digits = vec![0u32; free];
    let mut sum = 0u32;
    loop {
        let mut alpha = digits.clone();
        alpha.push(k - sum);
        out.push(MultiIndex::new(alpha));
        // odometer: increment the first digit, carrying when the sum exceeds k
        let mut pos = 0;
        loop {
            if pos == free {
                return out;
            }
            if sum < k {
                digits[pos] += 1;
                sum += 1;
                break;
            }
            sum -= digits[pos];
            digits[pos] = 0;
            pos += 1;
        }
    }
}

/// Γ_k for `d >= 2`, `k >= 1`, in canonical order.
pub fn enumerate_multi_indices(d: usize, k: usize) -> Result<Vec<MultiIndex>> {
    if d < 2 {
        return Err(Error::domain(format!("dimension must be >= 2, got {d}")));
    }
    if k < 1 {
        return Err(Error::domain(format!("degree must be >= 1, got {k}")));
    }
    Ok(lattice(d, k))
}

/// The lattice `{α/m : α ∈ Γ_m}`, including the `d` vertices.
pub fn simplex_grid(d: usize, m: usize) -> Result<Vec<SimplexPoint>> {
    if d < 2 {
        return Err(Error::domain(format!("dimension must be >= 2, got {d}")));
    }
    if m < 1 {
        return Err(Error::domain(format!("grid resolution must be >= 1, got {m}")));
    }
    Ok(lattice(d, m).iter().map(MultiIndex::lattice_point).collect())
}

/// Values of all `p_k` basis polynomials at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisVector(pub Vec<f64>);

impl BasisVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, beta: &[f64]) -> f64 {
        self.0.iter().zip(beta).map(|(b, c)| b * c).sum()
    }
}

/// The degree-`k` Bernstein basis on the `(d-1)`-simplex with precomputed
/// multinomial coefficients and a multi-index lookup table.
#[derive(Debug, Clone)]
pub struct BernsteinBasis {
    d: usize,
    k: usize,
    indices: Vec<MultiIndex>,
    multinomials: Vec<f64>,
    position: HashMap<Vec<u32>, usize>,
}

impl BernsteinBasis {
    pub fn new(d: usize, k: usize) -> Result<Self> {
        let indices = enumerate_multi_indices(d, k)?;
        let multinomials = indices.iter().map(|a| multinomial(a.alpha())).collect();
        let position = indices
            .iter()
            .enumerate()
            .map(|(i, a)| (a.alpha().to_vec(), i))
            .collect();
        Ok(Self {
            d,
            k,
            indices,
            multinomials,
            position,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn degree(&self) -> usize {
        self.k
    }

    /// Number of basis polynomials, `p_k`.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn index_of(&self, alpha: &[u32]) -> Option<usize> {
        self.position.get(alpha).copied()
    }

    /// Position of the coefficient pinned at vertex `e_i`, i.e. `α = k·e_i`.
    pub fn vertex_index(&self, i: usize) -> usize {
        let mut alpha = vec![0u32; self.d];
        alpha[i] = self.k as u32;
        self.position[&alpha]
    }

    fn check_point(&self, w: &SimplexPoint) -> Result<()> {
        check_len(self.d, w.dim())
    }

    /// Writes `b_k(w)` into `out` (length `p_k`). Uses `0^0 = 1`.
    pub fn eval_into(&self, w: &SimplexPoint, out: &mut [f64]) -> Result<()> {
        self.check_point(w)?;
        check_len(self.len(), out.len())?;
        let k = self.k;
        // powers[i * (k+1) + j] = w_i^j
        let mut powers = vec![1.0; self.d * (k + 1)];
        for (i, &wi) in w.coords().iter().enumerate() {
            let row = &mut powers[i * (k + 1)..(i + 1) * (k + 1)];
            for j in 1..=k {
                row[j] = row[j - 1] * wi;
            }
        }
        for ((slot, alpha), coef) in out.iter_mut().zip(&self.indices).zip(&self.multinomials) {
            let mut v = *coef;
            for (i, &a) in alpha.alpha().iter().enumerate() {
                v *= powers[i * (k + 1) + a as usize];
            }
            *slot = v;
        }
        Ok(())
    }

    pub fn eval(&self, w: &SimplexPoint) -> Result<BasisVector> {
        let mut out = vec![0.0; self.len()];
        self.eval_into(w, &mut out)?;
        Ok(BasisVector(out))
    }

    /// `b_k(w) β`.
    pub fn evaluate(&self, beta: &[f64], w: &SimplexPoint) -> Result<f64> {
        check_len(self.len(), beta.len())?;
        Ok(self.eval(w)?.dot(beta))
    }

    /// Rows `b_k(w_q)` stacked into a `Q × p_k` matrix.
    pub fn design_matrix(&self, grid: &[SimplexPoint]) -> Result<DMatrix<f64>> {
        let p = self.len();
        let mut m = DMatrix::zeros(grid.len(), p);
        let mut row = vec![0.0; p];
        for (q, w) in grid.iter().enumerate() {
            self.eval_into(w, &mut row)?;
            for (j, v) in row.iter().enumerate() {
                m[(q, j)] = *v;
            }
        }
        Ok(m)
    }

    /// Bernstein operator: coefficients `f(α/k)`.
    pub fn operator<F>(&self, mut f: F) -> Result<Vec<f64>>
    where
        F: FnMut(&SimplexPoint) -> Result<f64>,
    {
        self.indices.iter().map(|a| f(&a.lattice_point())).collect()
    }

    /// Degree elevation `k -> k+1`:
    /// `β̃_α = Σ_h α_h / (k+1) · β_{α - e_h}` over the components with `α_h > 0`.
    pub fn raise(&self, beta: &[f64]) -> Result<(BernsteinBasis, Vec<f64>)> {
        check_len(self.len(), beta.len())?;
        let raised = BernsteinBasis::new(self.d, self.k + 1)?;
        let scale = 1.0 / (self.k + 1) as f64;
        let mut out = vec![0.0; raised.len()];
        let mut lowered = vec![0u32; self.d];
        for (slot, alpha) in out.iter_mut().zip(raised.indices()) {
            let mut acc = 0.0;
            for h in 0..self.d {
                let a = alpha.alpha()[h];
                if a == 0 {
                    continue;
                }
                lowered.copy_from_slice(alpha.alpha());
                lowered[h] -= 1;
                acc += a as f64 * beta[self.position[&lowered]];
            }
            *slot = acc * scale;
        }
        Ok((raised, out))
    }
}

/// `b_k(w)` for the dimension of `w`.
pub fn bernstein_basis(w: &SimplexPoint, k: usize) -> Result<BasisVector> {
    BernsteinBasis::new(w.dim(), k)?.eval(w)
}

pub fn evaluate_polynomial(beta: &[f64], w: &SimplexPoint, k: usize) -> Result<f64> {
    BernsteinBasis::new(w.dim(), k)?.evaluate(beta, w)
}

pub fn bernstein_operator<F>(f: F, k: usize, d: usize) -> Result<Vec<f64>>
where
    F: FnMut(&SimplexPoint) -> Result<f64>,
{
    BernsteinBasis::new(d, k)?.operator(f)
}

pub fn raise_degree(beta: &[f64], d: usize, k: usize) -> Result<Vec<f64>> {
    Ok(BernsteinBasis::new(d, k)?.raise(beta)?.1)
}
