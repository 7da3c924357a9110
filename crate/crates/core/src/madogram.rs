//! Pilot estimators of the Pickands dependence function.
//!
//! The multivariate w-madogram of a random vector with margins `F_i` is
//!
//! ```text
//! ν(w) = E[ max_i F_i(X_i)^{1/w_i} - (1/d) Σ_i F_i(X_i)^{1/w_i} ]
//! ```
//!
//! with `u^{1/0} = 0`. For an extreme-value copula it is in bijection with the
//! Pickands function: `ν = A/(1+A) - c(w)` and `A = (ν + c)/(1 - ν - c)`, where
//! `c(w) = d^{-1} Σ_i w_i/(1+w_i)`. Replacing `F_i` by the empirical margins
//! gives the rank-based madogram estimator `Â^MD`.
//!
//! The Pickands, Capéraà–Fougères–Genest and Hall–Tajvidi estimators are
//! provided for comparison. They work on `Y_{m,i} = -log F̃_{n,i}(X_{m,i})`
//! where `F̃ = n/(n+1) · F_n` keeps the logarithm finite.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bernstein::SimplexPoint;
use crate::error::{check_len, Error, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// `n` observations of a `d`-variate vector, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    n: usize,
    d: usize,
    values: Vec<f64>,
}

impl SampleMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(n * d);
        for row in rows {
            check_len(d, row.len())?;
            values.extend_from_slice(row);
        }
        Self::from_row_major(n, d, values)
    }

    pub fn from_row_major(n: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        if n < 2 || d < 2 {
            return Err(Error::domain(format!(
                "a sample needs n >= 2 rows and d >= 2 columns, got {n} x {d}"
            )));
        }
        check_len(n * d, values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("sample contains non-finite values"));
        }
        Ok(Self { n, d, values })
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let d = columns.len();
        let n = columns.first().map_or(0, Vec::len);
        let mut values = vec![0.0; n * d];
        for (i, col) in columns.iter().enumerate() {
            check_len(n, col.len())?;
            for (m, v) in col.iter().enumerate() {
                values[m * d + i] = *v;
            }
        }
        Self::from_row_major(n, d, values)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.values[m * self.d..(m + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.d)
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        self.rows().map(|r| r[i]).collect()
    }

    /// Sub-sample made of the given rows (repeats allowed).
    pub fn select_rows(&self, rows: &[usize]) -> SampleMatrix {
        let mut values = Vec::with_capacity(rows.len() * self.d);
        for &m in rows {
            values.extend_from_slice(self.row(m));
        }
        SampleMatrix {
            n: rows.len(),
            d: self.d,
            values,
        }
    }

    /// Two-column sample made of columns `i` and `j`.
    pub fn pair(&self, i: usize, j: usize) -> SampleMatrix {
        let values = self.rows().flat_map(|r| [r[i], r[j]]).collect();
        SampleMatrix {
            n: self.n,
            d: 2,
            values,
        }
    }
}

/// Empirical distribution function `n^{-1} Σ 1(X_m <= x)`.
pub fn ecdf(column: &[f64], x: f64) -> f64 {
    if column.is_empty() {
        return 0.0;
    }
    column.iter().filter(|&&v| v <= x).count() as f64 / column.len() as f64
}

/// `count{m : X_{m,i} <= X_{j,i}}` for every row `j` of one column.
fn rank_counts(column: &[f64]) -> Vec<usize> {
    let mut sorted = column.to_vec();
    sorted.sort_by(f64::total_cmp);
    column.iter().map(|x| sorted.partition_point(|v| v <= x)).collect()
}

/// Margins used to transform the sample before computing the madogram.
pub enum Margins<'a> {
    /// Empirical distribution functions of each column.
    Empirical,
    /// Known marginal distribution functions, one per column.
    Known(&'a [&'a (dyn Fn(f64) -> f64 + Sync)]),
}

/// The sample mapped through its margins, `U_{m,i} = F_i(X_{m,i})`, kept on
/// the log scale so that `U^{1/w} = exp(log U / w)`.
#[derive(Debug, Clone)]
pub struct PseudoObservations {
    n: usize,
    d: usize,
    log_u: Vec<f64>,
}

impl PseudoObservations {
    pub fn new(data: &SampleMatrix, margins: &Margins<'_>) -> Result<Self> {
        let (n, d) = (data.n(), data.d());
        let mut log_u = vec![0.0; n * d];
        match margins {
            Margins::Empirical => {
                for i in 0..d {
                    let counts = rank_counts(&data.column(i));
                    for (m, c) in counts.into_iter().enumerate() {
                        log_u[m * d + i] = (c as f64 / n as f64).ln();
                    }
                }
            }
            Margins::Known(cdfs) => {
                check_len(d, cdfs.len())?;
                for (m, row) in data.rows().enumerate() {
                    for (i, (x, cdf)) in row.iter().zip(cdfs.iter()).enumerate() {
                        let u = cdf(*x);
                        if !(0.0..=1.0).contains(&u) {
                            return Err(Error::domain(format!("marginal cdf {i} returned {u} outside [0,1]")));
                        }
                        log_u[m * d + i] = u.ln();
                    }
                }
            }
        }
        Ok(Self { n, d, log_u })
    }

    pub fn empirical(data: &SampleMatrix) -> Self {
        Self::new(data, &Margins::Empirical).expect("empirical margins are always valid")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Sample w-madogram.
    pub fn madogram(&self, w: &SimplexPoint) -> Result<MadogramValue> {
        check_len(self.d, w.dim())?;
        let inv_w: Vec<Option<f64>> = w.coords().iter().map(|&wi| (wi > 0.0).then(|| 1.0 / wi)).collect();
        let inv_d = 1.0 / self.d as f64;
        let mut total = 0.0;
        for row in self.log_u.chunks_exact(self.d) {
            let mut max = 0.0f64;
            let mut sum = 0.0;
            for (lu, iw) in row.iter().zip(&inv_w) {
                // u^{1/0} = 0 by convention
                let v = match iw {
                    Some(iw) => (lu * iw).exp(),
                    None => 0.0,
                };
                max = max.max(v);
                sum += v;
            }
            total += max - inv_d * sum;
        }
        Ok(MadogramValue {
            w: w.clone(),
            nu: total / self.n as f64,
        })
    }
}

/// A madogram value at one simplex point.
#[derive(Debug, Clone, PartialEq)]
pub struct MadogramValue {
    pub w: SimplexPoint,
    pub nu: f64,
}

/// `c(w) = d^{-1} Σ_i w_i / (1 + w_i)`.
pub fn madogram_offset(w: &SimplexPoint) -> f64 {
    w.coords().iter().map(|wi| wi / (1.0 + wi)).sum::<f64>() / w.dim() as f64
}

pub fn empirical_madogram(data: &SampleMatrix, w: &SimplexPoint, margins: &Margins<'_>) -> Result<MadogramValue> {
    PseudoObservations::new(data, margins)?.madogram(w)
}

/// `A(w) = (ν + c) / (1 - ν - c)`.
pub fn madogram_to_pickands(value: &MadogramValue) -> Result<f64> {
    let total = value.nu + madogram_offset(&value.w);
    if total >= 1.0 || !total.is_finite() {
        return Err(Error::Inversion {
            w: value.w.coords().to_vec(),
            total,
        });
    }
    Ok(total / (1.0 - total))
}

/// `ν(w) = A(w)/(1 + A(w)) - c(w)`.
pub fn theoretical_madogram<F>(pickands: F, w: &SimplexPoint) -> f64
where
    F: Fn(&SimplexPoint) -> f64,
{
    let a = pickands(w);
    a / (1.0 + a) - madogram_offset(w)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EstimatorKind {
    #[serde(rename = "MD")]
    Madogram,
    #[serde(rename = "P")]
    Pickands,
    #[serde(rename = "CFG")]
    Cfg,
    #[serde(rename = "HT")]
    HallTajvidi,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] = [
        EstimatorKind::Madogram,
        EstimatorKind::Pickands,
        EstimatorKind::Cfg,
        EstimatorKind::HallTajvidi,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            EstimatorKind::Madogram => "MD",
            EstimatorKind::Pickands => "P",
            EstimatorKind::Cfg => "CFG",
            EstimatorKind::HallTajvidi => "HT",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "MD" | "MADOGRAM" => Ok(EstimatorKind::Madogram),
            "P" | "PICKANDS" => Ok(EstimatorKind::Pickands),
            "CFG" => Ok(EstimatorKind::Cfg),
            "HT" | "HALL-TAJVIDI" => Ok(EstimatorKind::HallTajvidi),
            other => Err(Error::domain(format!("unknown estimator '{other}'"))),
        }
    }
}

/// Pilot estimate on a finite set of simplex points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotEstimate {
    pub grid: Vec<SimplexPoint>,
    pub values: Vec<f64>,
    pub kind: EstimatorKind,
    /// Lattice resolution when `grid` is a full simplex lattice.
    #[serde(default)]
    pub resolution: Option<usize>,
}

impl PilotEstimate {
    pub fn new(grid: Vec<SimplexPoint>, values: Vec<f64>, kind: EstimatorKind) -> Result<Self> {
        check_len(grid.len(), values.len())?;
        if grid.is_empty() {
            return Err(Error::domain("pilot grid is empty"));
        }
        let d = grid[0].dim();
        if grid.iter().any(|w| w.dim() != d) {
            return Err(Error::domain("pilot grid mixes dimensions"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("pilot values must be finite"));
        }
        Ok(Self {
            grid,
            values,
            kind,
            resolution: None,
        })
    }

    pub fn with_resolution(mut self, m: usize) -> Self {
        self.resolution = Some(m);
        self
    }

    pub fn dim(&self) -> usize {
        self.grid[0].dim()
    }

    /// Pilot value at the barycenter, when the grid contains it.
    pub fn center_value(&self) -> Option<f64> {
        let d = self.dim() as f64;
        self.grid
            .iter()
            .position(|w| w.coords().iter().all(|c| (c - 1.0 / d).abs() < 1e-12))
            .map(|q| self.values[q])
    }
}

fn check_grid(d: usize, grid: &[SimplexPoint]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::domain("evaluation grid is empty"));
    }
    grid.iter().try_for_each(|w| check_len(d, w.dim()))
}

/// `Â_n^MD` on `grid`.
pub fn estimate_pickands_md(data: &SampleMatrix, grid: &[SimplexPoint]) -> Result<PilotEstimate> {
    check_grid(data.d(), grid)?;
    let pseudo = PseudoObservations::empirical(data);
    let values = grid
        .par_iter()
        .map(|w| madogram_to_pickands(&pseudo.madogram(w)?))
        .collect::<Result<Vec<_>>>()?;
    PilotEstimate::new(grid.to_vec(), values, EstimatorKind::Madogram)
}

/// Unit-exponential scores `Y_{m,i} = -log(rank/(n+1))`, row-major.
fn exponential_scores(data: &SampleMatrix) -> Result<Vec<f64>> {
    let (n, d) = (data.n(), data.d());
    let mut y = vec![0.0; n * d];
    for i in 0..d {
        let col = data.column(i);
        if col.iter().all(|v| *v == col[0]) {
            return Err(Error::DegenerateColumn(i));
        }
        for (m, c) in rank_counts(&col).into_iter().enumerate() {
            y[m * d + i] = -(c as f64 / (n as f64 + 1.0)).ln();
        }
    }
    Ok(y)
}

/// `Ŷ_m(w) = min_i Y_{m,i} / w_i`, skipping coordinates with `w_i = 0`.
fn min_ratio(row: &[f64], w: &SimplexPoint) -> f64 {
    row.iter()
        .zip(w.coords())
        .filter(|(_, &wi)| wi > 0.0)
        .map(|(y, wi)| y / wi)
        .fold(f64::INFINITY, f64::min)
}

/// Pickands, CFG or Hall–Tajvidi estimate on `grid`.
///
/// - P: `n / Σ_m Ŷ_m(w)`
/// - CFG: `exp(-n^{-1} Σ_m log Ŷ_m(w) - γ)`
/// - HT: the Pickands statistic after rescaling every column of scores by
///   `A^P(e_i) = 1/Ȳ_i`, so that the estimate equals 1 at each vertex.
pub fn estimate_pickands_classical(
    data: &SampleMatrix,
    grid: &[SimplexPoint],
    kind: EstimatorKind,
) -> Result<PilotEstimate> {
    check_grid(data.d(), grid)?;
    let (n, d) = (data.n(), data.d());
    let mut y = exponential_scores(data)?;
    if kind == EstimatorKind::HallTajvidi {
        for i in 0..d {
            let mean = (0..n).map(|m| y[m * d + i]).sum::<f64>() / n as f64;
            for m in 0..n {
                y[m * d + i] /= mean;
            }
        }
    }
    let nf = n as f64;
    let values = grid
        .iter()
        .map(|w| {
            let ratios = y.chunks_exact(d).map(|row| min_ratio(row, w));
            match kind {
                EstimatorKind::Pickands | EstimatorKind::HallTajvidi => nf / ratios.sum::<f64>(),
                EstimatorKind::Cfg => (-ratios.map(f64::ln).sum::<f64>() / nf - EULER_GAMMA).exp(),
                EstimatorKind::Madogram => unreachable!("handled by estimate_pickands_md"),
            }
        })
        .collect();
    PilotEstimate::new(grid.to_vec(), values, kind)
}

/// Dispatches to the madogram or one of the classical estimators.
pub fn estimate_pickands(data: &SampleMatrix, grid: &[SimplexPoint], kind: EstimatorKind) -> Result<PilotEstimate> {
    match kind {
        EstimatorKind::Madogram => estimate_pickands_md(data, grid),
        _ => estimate_pickands_classical(data, grid, kind),
    }
}
