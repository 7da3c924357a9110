//! Nonparametric bootstrap of the projected estimator and confidence bands.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bernstein::{BernsteinBasis, SimplexPoint};
use crate::error::{check_len, Error, Result};
use crate::madogram::{estimate_pickands, EstimatorKind, SampleMatrix};
use crate::projection::{
    default_grid_resolution, midpoint_convexity, ConvexityCheck, ProjectedEstimate, Projector, ORDERING, SCHEMA_VERSION,
};

pub const DEFAULT_REPLICATES: usize = 500;

/// Bootstrap coefficient vectors, one row per successful replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientEnsemble {
    pub d: usize,
    pub k: usize,
    pub n: usize,
    pub seed: u64,
    replicates: Vec<Vec<f64>>,
    /// Replicates that needed the finer-grid retry.
    pub retried: usize,
    /// Replicates dropped after the retry also failed.
    pub skipped: usize,
}

impl CoefficientEnsemble {
    /// Ensemble from explicit coefficient rows.
    pub fn from_replicates(d: usize, k: usize, replicates: Vec<Vec<f64>>) -> Result<Self> {
        let p = BernsteinBasis::new(d, k)?.len();
        if replicates.is_empty() {
            return Err(Error::domain("an ensemble needs at least one replicate"));
        }
        for row in &replicates {
            check_len(p, row.len())?;
        }
        Ok(Self {
            d,
            k,
            n: 0,
            seed: 0,
            replicates,
            retried: 0,
            skipped: 0,
        })
    }

    pub fn r(&self) -> usize {
        self.replicates.len()
    }

    pub fn replicates(&self) -> &[Vec<f64>] {
        &self.replicates
    }

    pub fn num_coefficients(&self) -> usize {
        self.replicates[0].len()
    }

    /// Values of coefficient `j` across replicates.
    pub fn coefficient(&self, j: usize) -> Vec<f64> {
        self.replicates.iter().map(|row| row[j]).collect()
    }

    /// Replicate polynomials evaluated on `grid`, one vector per grid point.
    pub fn evaluate(&self, grid: &[SimplexPoint]) -> Result<Vec<Vec<f64>>> {
        let design = BernsteinBasis::new(self.d, self.k)?.design_matrix(grid)?;
        let betas = DMatrix::from_fn(self.num_coefficients(), self.r(), |j, b| self.replicates[b][j]);
        let values = design * betas;
        Ok((0..grid.len())
            .map(|g| values.row(g).iter().copied().collect())
            .collect())
    }
}

/// Bootstrap with the default grid for degree `k`.
pub fn bootstrap_coefficients(
    data: &SampleMatrix,
    kind: EstimatorKind,
    k: usize,
    r: usize,
    seed: u64,
) -> Result<CoefficientEnsemble> {
    let projector = Projector::new(data.d(), k, default_grid_resolution(data.d(), k))?;
    bootstrap_with_projector(data, kind, &projector, r, seed)
}

enum Outcome {
    Solved(Vec<f64>),
    Retried(Vec<f64>),
    Skipped,
}

/// Resamples the rows of `data` `r` times, re-estimates the pilot on the
/// projector's grid and projects it.
///
/// Replicate `b` draws its rows from a ChaCha8 stream `b` seeded with `seed`,
/// so the ensemble does not depend on scheduling. Each solve is warm-started
/// from the final active set of the original sample's solve. A replicate whose QP fails is
/// retried once on a lattice ten steps finer, then skipped.
pub fn bootstrap_with_projector(
    data: &SampleMatrix,
    kind: EstimatorKind,
    projector: &Projector,
    r: usize,
    seed: u64,
) -> Result<CoefficientEnsemble> {
    if r == 0 {
        return Err(Error::domain("bootstrap needs at least one replicate"));
    }
    check_len(projector.dim(), data.d())?;
    let n = data.n();
    let warm = estimate_pickands(data, projector.grid(), kind)
        .and_then(|pilot| projector.solve_with_state(&pilot.values))
        .map(|(_, state)| state)
        .ok();
    let finer: OnceLock<Option<Projector>> = OnceLock::new();
    let finer_projector = || {
        finer
            .get_or_init(|| {
                let m = projector
                    .resolution()
                    .unwrap_or_else(|| default_grid_resolution(data.d(), projector.degree()));
                Projector::new(data.d(), projector.degree(), m + 10).ok()
            })
            .as_ref()
    };

    let outcomes: Vec<Outcome> = (0..r)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            let resampled = data.select_rows(&rows);
            let first = estimate_pickands(&resampled, projector.grid(), kind).and_then(|pilot| match &warm {
                Some(state) => projector.solve_from(&pilot.values, state),
                None => projector.solve(&pilot.values, None),
            });
            if let Ok(sol) = first {
                return Outcome::Solved(clamp(sol.beta_hat));
            }
            let retry = finer_projector().map(|fine| {
                estimate_pickands(&resampled, fine.grid(), kind).and_then(|pilot| fine.solve(&pilot.values, None))
            });
            match retry {
                Some(Ok(sol)) => Outcome::Retried(clamp(sol.beta_hat)),
                _ => Outcome::Skipped,
            }
        })
        .collect();

    let mut replicates = Vec::with_capacity(r);
    let (mut retried, mut skipped) = (0, 0);
    for outcome in outcomes {
        match outcome {
            Outcome::Solved(beta) => replicates.push(beta),
            Outcome::Retried(beta) => {
                retried += 1;
                replicates.push(beta);
            }
            Outcome::Skipped => skipped += 1,
        }
    }
    if replicates.is_empty() {
        return Err(Error::Numerical(format!("all {r} bootstrap replicates failed")));
    }
    Ok(CoefficientEnsemble {
        d: data.d(),
        k: projector.degree(),
        n,
        seed,
        replicates,
        retried,
        skipped,
    })
}

fn clamp(beta: Vec<f64>) -> Vec<f64> {
    beta.into_iter().map(|b| b.clamp(0.0, 1.0)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandKind {
    Simultaneous,
    Pointwise,
}

/// Band whose limits are Bernstein polynomials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceBand {
    pub d: usize,
    pub k: usize,
    pub lower_beta: Vec<f64>,
    pub upper_beta: Vec<f64>,
    /// Nominal coverage `1 - α̃`.
    pub level: f64,
    pub kind: BandKind,
}

/// Per-point intervals on a fixed grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PointwiseBand {
    pub grid: Vec<SimplexPoint>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub level: f64,
}

/// 1-based ranks `⌈r·α̃/2⌉` and `⌈r·(1-α̃/2)⌉`, clamped to `1..=r`.
pub fn order_statistic_ranks(r: usize, alpha_tilde: f64) -> (usize, usize) {
    let rank = |q: f64| ((r as f64 * q - 1e-9).ceil() as usize).clamp(1, r);
    (rank(alpha_tilde / 2.0), rank(1.0 - alpha_tilde / 2.0))
}

/// Rejects levels outside (0, 1) and ensembles with fewer than `2/α̃` replicates.
pub fn check_level(r: usize, alpha_tilde: f64) -> Result<()> {
    if !(alpha_tilde > 0.0 && alpha_tilde < 1.0) {
        return Err(Error::domain(format!("alpha must lie in (0, 1), got {alpha_tilde}")));
    }
    if (r as f64) < 2.0 / alpha_tilde - 1e-9 {
        return Err(Error::TooFewReplicates {
            replicates: r,
            alpha: alpha_tilde,
            needed: (2.0 / alpha_tilde - 1e-9).ceil() as usize,
        });
    }
    Ok(())
}

fn order_stats(mut values: Vec<f64>, ranks: (usize, usize)) -> (f64, f64) {
    values.sort_by(f64::total_cmp);
    (values[ranks.0 - 1], values[ranks.1 - 1])
}

/// Coefficientwise order-statistic band, requiring `r >= 2/α̃`.
pub fn simultaneous_band(ensemble: &CoefficientEnsemble, alpha_tilde: f64) -> Result<ConfidenceBand> {
    check_level(ensemble.r(), alpha_tilde)?;
    order_statistic_band(ensemble, alpha_tilde)
}

/// Same construction without the replicate-count requirement; with a single
/// replicate both limits equal that replicate.
pub fn order_statistic_band(ensemble: &CoefficientEnsemble, alpha_tilde: f64) -> Result<ConfidenceBand> {
    if !(alpha_tilde > 0.0 && alpha_tilde < 1.0) {
        return Err(Error::domain(format!("alpha must lie in (0, 1), got {alpha_tilde}")));
    }
    let ranks = order_statistic_ranks(ensemble.r(), alpha_tilde);
    let (lower_beta, upper_beta) = (0..ensemble.num_coefficients())
        .map(|j| order_stats(ensemble.coefficient(j), ranks))
        .unzip();
    Ok(ConfidenceBand {
        d: ensemble.d,
        k: ensemble.k,
        lower_beta,
        upper_beta,
        level: 1.0 - alpha_tilde,
        kind: BandKind::Simultaneous,
    })
}

/// Per-point order statistics of the replicate evaluations on `grid`.
pub fn pointwise_band(
    ensemble: &CoefficientEnsemble,
    grid: &[SimplexPoint],
    alpha_tilde: f64,
) -> Result<PointwiseBand> {
    check_level(ensemble.r(), alpha_tilde)?;
    pointwise_band_unchecked(ensemble, grid, alpha_tilde)
}

pub fn pointwise_band_unchecked(
    ensemble: &CoefficientEnsemble,
    grid: &[SimplexPoint],
    alpha_tilde: f64,
) -> Result<PointwiseBand> {
    let ranks = order_statistic_ranks(ensemble.r(), alpha_tilde);
    let (lower, upper) = ensemble
        .evaluate(grid)?
        .into_iter()
        .map(|v| order_stats(v, ranks))
        .unzip();
    Ok(PointwiseBand {
        grid: grid.to_vec(),
        lower,
        upper,
        level: 1.0 - alpha_tilde,
    })
}

impl ConfidenceBand {
    pub fn lower(&self, w: &SimplexPoint) -> Result<f64> {
        crate::bernstein::evaluate_polynomial(&self.lower_beta, w, self.k)
    }

    pub fn upper(&self, w: &SimplexPoint) -> Result<f64> {
        crate::bernstein::evaluate_polynomial(&self.upper_beta, w, self.k)
    }

    pub fn width(&self, w: &SimplexPoint) -> Result<f64> {
        Ok(self.upper(w)? - self.lower(w)?)
    }

    /// Lower and upper limits on `grid`.
    pub fn evaluate_grid(&self, grid: &[SimplexPoint]) -> Result<(Vec<f64>, Vec<f64>)> {
        let design = BernsteinBasis::new(self.d, self.k)?.design_matrix(grid)?;
        let eval = |beta: &[f64]| (&design * DVector::from_column_slice(beta)).iter().copied().collect();
        Ok((eval(&self.lower_beta), eval(&self.upper_beta)))
    }

    /// Midpoint-convexity scan of both limits on the resolution-`m` lattice.
    /// The limits are not convex in general; this only reports.
    pub fn convexity_diagnostic(&self, m: usize, tol: f64) -> Result<(ConvexityCheck, ConvexityCheck)> {
        Ok((
            midpoint_convexity(&self.lower_beta, self.d, self.k, m, tol)?,
            midpoint_convexity(&self.upper_beta, self.d, self.k, m, tol)?,
        ))
    }
}

/// Whether `lower - tol <= truth <= upper + tol` at each point.
pub fn containment(lower: &[f64], upper: &[f64], truth: &[f64], tol: f64) -> Vec<bool> {
    lower
        .iter()
        .zip(upper)
        .zip(truth)
        .map(|((lo, hi), a)| *a >= lo - tol && *a <= hi + tol)
        .collect()
}

#[derive(Serialize, Deserialize)]
struct BandDocument {
    schema: u32,
    ordering: String,
    estimate: serde_json::Value,
    band: ConfidenceBand,
    replicates: usize,
    skipped: usize,
}

/// Serializes a band together with the point estimate it surrounds.
pub fn band_to_json(
    estimate: &ProjectedEstimate,
    band: &ConfidenceBand,
    ensemble: &CoefficientEnsemble,
) -> Result<String> {
    let doc = BandDocument {
        schema: SCHEMA_VERSION,
        ordering: ORDERING.to_string(),
        estimate: serde_json::from_str(&estimate.to_json()?)?,
        band: band.clone(),
        replicates: ensemble.r(),
        skipped: ensemble.skipped,
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn band_from_json(text: &str) -> Result<(ProjectedEstimate, ConfidenceBand)> {
    let doc: BandDocument = serde_json::from_str(text)?;
    if doc.schema != SCHEMA_VERSION || doc.ordering != ORDERING {
        return Err(Error::domain("unsupported band document schema or ordering"));
    }
    let estimate = ProjectedEstimate::from_json(&doc.estimate.to_string())?;
    check_len(estimate.beta.len(), doc.band.lower_beta.len())?;
    check_len(estimate.beta.len(), doc.band.upper_beta.len())?;
    Ok((estimate, doc.band))
}
