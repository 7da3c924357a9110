//! Monte-Carlo experiments: integrated squared error of the pilot and
//! projected estimators, and coverage of bootstrap bands.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bernstein::{simplex_grid, SimplexPoint};
use crate::bootstrap::{
    bootstrap_with_projector, containment, order_statistic_band, pointwise_band_unchecked, simultaneous_band,
    CoefficientEnsemble,
};
use crate::error::{Error, Result};
use crate::madogram::{estimate_pickands, EstimatorKind};
use crate::models::{derive_seed, sample, true_pickands, Family, ModelSpec};
use crate::projection::{min_grid_resolution, Projector};

/// Band containment tolerance; band limits and truth both equal 1 at the
/// vertices up to round-off.
const CONTAINMENT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub n: usize,
    pub reps: usize,
    pub estimators: Vec<EstimatorKind>,
    /// Bernstein degree of the projected estimator.
    pub k: usize,
    /// Lattice resolution of the pilot grid, also used as the quadrature
    /// lattice for integrated errors.
    pub grid_resolution: usize,
    /// Bootstrap replicates per Monte-Carlo trial (coverage only).
    pub boot_reps: usize,
    /// `α̃`; the nominal band level is `1 - α̃`.
    pub alpha_tilde: f64,
    pub seed: u64,
}

impl ExperimentConfig {
    /// Desk-scale defaults for a symmetric logistic model.
    pub fn symmetric_logistic(d: usize, alpha: f64, n: usize) -> Result<Self> {
        let model = ModelSpec::symmetric_logistic(d, alpha)?;
        let k = reference_degree(alpha).unwrap_or(if d <= 3 { 14 } else { 7 });
        Ok(Self {
            model,
            n,
            reps: 1000,
            estimators: vec![EstimatorKind::Madogram],
            k,
            grid_resolution: 50.max(min_grid_resolution(d, k)),
            boot_reps: 200,
            alpha_tilde: 0.05,
            seed: 1,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.reps < 2 {
            return Err(Error::domain(format!("need at least 2 repetitions, got {}", self.reps)));
        }
        if self.n < 2 {
            return Err(Error::domain(format!("sample size must be >= 2, got {}", self.n)));
        }
        if self.estimators.is_empty() {
            return Err(Error::domain("no estimators selected"));
        }
        if self.grid_resolution == 0 || self.k == 0 {
            return Err(Error::domain("degree and grid resolution must be positive"));
        }
        if !(self.alpha_tilde > 0.0 && self.alpha_tilde < 1.0) {
            return Err(Error::domain(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha_tilde
            )));
        }
        Ok(())
    }

    fn grid(&self) -> Result<Vec<SimplexPoint>> {
        simplex_grid(self.model.d, self.grid_resolution)
    }

    fn truth(&self, grid: &[SimplexPoint]) -> Result<Vec<f64>> {
        grid.iter().map(|w| true_pickands(&self.model, w)).collect()
    }

    fn rep_seed(&self, rep: usize) -> u64 {
        derive_seed(self.seed, rep as u64)
    }
}

/// Degrees used for the symmetric logistic benchmarks, by dependence
/// parameter: 0.3 → 23, 0.5 → 20, 0.7 → 16, 0.9 → 6, 1 → 3.
pub fn reference_degree(alpha: f64) -> Option<usize> {
    [(0.3, 23), (0.5, 20), (0.7, 16), (0.9, 6), (1.0, 3)]
        .iter()
        .find(|(a, _)| (a - alpha).abs() < 1e-9)
        .map(|&(_, k)| k)
}

fn factorial(m: usize) -> f64 {
    (1..=m).map(|i| i as f64).product()
}

/// Lattice quadrature of `∫ (f - g)²` over the simplex: the mean squared
/// difference times the simplex volume `1/(d-1)!`.
pub fn integrated_squared_error(values: &[f64], truth: &[f64], d: usize) -> f64 {
    let mean = values.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / values.len() as f64;
    mean / factorial(d - 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiseResult {
    pub estimator_kind: EstimatorKind,
    pub projected: bool,
    pub mise: f64,
    pub mc_std_error: f64,
    pub reps_used: usize,
}

impl MiseResult {
    /// `MD`, or `BP-MD` for the projected variant.
    pub fn label(&self) -> String {
        label(self.estimator_kind, self.projected)
    }
}

fn label(kind: EstimatorKind, projected: bool) -> String {
    if projected {
        format!("BP-{}", kind.tag())
    } else {
        kind.tag().to_string()
    }
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// Per-repetition integrated squared errors of the pilot estimator and,
/// when `projector` is given, of its projection. Both use the same sample.
/// Failed repetitions are `None`.
fn paired_errors(
    config: &ExperimentConfig,
    kind: EstimatorKind,
    projector: Option<&Projector>,
    grid: &[SimplexPoint],
    truth: &[f64],
) -> Vec<Option<(f64, f64)>> {
    let d = config.model.d;
    (0..config.reps)
        .into_par_iter()
        .map(|rep| {
            let data = sample(&config.model, config.n, config.rep_seed(rep)).ok()?;
            let pilot = estimate_pickands(&data, grid, kind).ok()?;
            let ise_pilot = integrated_squared_error(&pilot.values, truth, d);
            let ise_projected = match projector {
                Some(proj) => {
                    let est = proj.project_values(&pilot.values, kind).ok()?;
                    integrated_squared_error(&est.evaluate_grid(grid).ok()?, truth, d)
                }
                None => f64::NAN,
            };
            Some((ise_pilot, ise_projected))
        })
        .collect()
}

/// MISE of each pilot estimator in `config.estimators`.
pub fn run_mise(config: &ExperimentConfig) -> Result<Vec<MiseResult>> {
    config.validate()?;
    let grid = config.grid()?;
    let truth = config.truth(&grid)?;
    config
        .estimators
        .iter()
        .map(|&kind| {
            let errors: Vec<f64> = paired_errors(config, kind, None, &grid, &truth)
                .into_iter()
                .flatten()
                .map(|e| e.0)
                .collect();
            mise_result(kind, false, &errors)
        })
        .collect()
}

fn mise_result(kind: EstimatorKind, projected: bool, errors: &[f64]) -> Result<MiseResult> {
    if errors.len() < 2 {
        return Err(Error::Numerical(format!("only {} repetitions succeeded", errors.len())));
    }
    let (mise, se) = mean_se(errors);
    Ok(MiseResult {
        estimator_kind: kind,
        projected,
        mise,
        mc_std_error: se,
        reps_used: errors.len(),
    })
}

/// Pilot against projected MISE on the same samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ImprovementResult {
    pub pilot: MiseResult,
    pub projected: MiseResult,
    /// `(MISE_pilot - MISE_projected) / MISE_pilot × 100`.
    pub improvement: f64,
    /// Delta-method standard error of `improvement`.
    pub mc_std_error: f64,
}

/// Percentage improvement of the projection at degree `config.k`, with the
/// pilot on the `config.grid_resolution` lattice.
pub fn run_improvement(config: &ExperimentConfig) -> Result<Vec<ImprovementResult>> {
    config.validate()?;
    let grid = config.grid()?;
    let truth = config.truth(&grid)?;
    let projector = Projector::with_grid(config.model.d, config.k, grid.clone())?;
    config
        .estimators
        .iter()
        .map(|&kind| {
            let pairs: Vec<(f64, f64)> = paired_errors(config, kind, Some(&projector), &grid, &truth)
                .into_iter()
                .flatten()
                .collect();
            let (pilot_errors, projected_errors): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
            let pilot = mise_result(kind, false, &pilot_errors)?;
            let projected = mise_result(kind, true, &projected_errors)?;
            let ratio = projected.mise / pilot.mise;
            let linearized: Vec<f64> = pairs.iter().map(|(n, p)| p - ratio * n).collect();
            let (_, se) = mean_se(&linearized);
            Ok(ImprovementResult {
                improvement: (1.0 - ratio) * 100.0,
                mc_std_error: 100.0 * se / pilot.mise,
                pilot,
                projected,
            })
        })
        .collect()
}

/// Empirical band coverage in percent.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageResult {
    pub estimator_kind: EstimatorKind,
    /// Trials whose simultaneous band contains the truth at every grid point.
    pub simultaneous: f64,
    pub simultaneous_se: f64,
    /// Per-point containment of the pointwise band, averaged over points
    /// and trials.
    pub pointwise: f64,
    pub pointwise_se: f64,
    /// Trials whose pointwise band contains the truth at every grid point.
    pub pointwise_all: f64,
    pub reps_used: usize,
    /// Bootstrap replicates dropped across all trials.
    pub skipped_replicates: usize,
}

struct Trial {
    simultaneous: bool,
    pointwise_fraction: f64,
    pointwise_all: bool,
    skipped: usize,
}

/// Coverage of the simultaneous and pointwise bands around the projected
/// estimator of degree `config.k`, evaluated on the pilot grid. With a
/// single bootstrap replicate both bands collapse onto it.
pub fn run_coverage(config: &ExperimentConfig) -> Result<Vec<CoverageResult>> {
    config.validate()?;
    if config.boot_reps == 0 {
        return Err(Error::domain("coverage needs bootstrap replicates"));
    }
    if config.boot_reps > 1 {
        let probe =
            CoefficientEnsemble::from_replicates(config.model.d, 1, vec![vec![0.0; config.model.d]; config.boot_reps])?;
        simultaneous_band(&probe, config.alpha_tilde)?;
    }
    let grid = config.grid()?;
    let truth = config.truth(&grid)?;
    let projector = Projector::new(config.model.d, config.k, config.grid_resolution)?;
    config
        .estimators
        .iter()
        .map(|&kind| {
            let trials: Vec<Trial> = (0..config.reps)
                .into_par_iter()
                .filter_map(|rep| coverage_trial(config, kind, &projector, &grid, &truth, rep).ok())
                .collect();
            if trials.len() < 2 {
                return Err(Error::Numerical(format!(
                    "only {} coverage trials succeeded",
                    trials.len()
                )));
            }
            let pct = |f: &dyn Fn(&Trial) -> f64| -> Vec<f64> { trials.iter().map(|t| 100.0 * f(t)).collect() };
            let (simultaneous, simultaneous_se) = mean_se(&pct(&|t| f64::from(u8::from(t.simultaneous))));
            let (pointwise, pointwise_se) = mean_se(&pct(&|t| t.pointwise_fraction));
            let (pointwise_all, _) = mean_se(&pct(&|t| f64::from(u8::from(t.pointwise_all))));
            Ok(CoverageResult {
                estimator_kind: kind,
                simultaneous,
                simultaneous_se,
                pointwise,
                pointwise_se,
                pointwise_all,
                reps_used: trials.len(),
                skipped_replicates: trials.iter().map(|t| t.skipped).sum(),
            })
        })
        .collect()
}

fn coverage_trial(
    config: &ExperimentConfig,
    kind: EstimatorKind,
    projector: &Projector,
    grid: &[SimplexPoint],
    truth: &[f64],
    rep: usize,
) -> Result<Trial> {
    let seed = config.rep_seed(rep);
    let data = sample(&config.model, config.n, seed)?;
    let ensemble = bootstrap_with_projector(&data, kind, projector, config.boot_reps, derive_seed(seed, 0))?;
    let band = order_statistic_band(&ensemble, config.alpha_tilde)?;
    let (lo, hi) = band.evaluate_grid(grid)?;
    let simultaneous = containment(&lo, &hi, truth, CONTAINMENT_TOL).iter().all(|c| *c);
    let pw = pointwise_band_unchecked(&ensemble, grid, config.alpha_tilde)?;
    let inside = containment(&pw.lower, &pw.upper, truth, CONTAINMENT_TOL);
    let hits = inside.iter().filter(|c| **c).count();
    Ok(Trial {
        simultaneous,
        pointwise_fraction: hits as f64 / inside.len() as f64,
        pointwise_all: hits == inside.len(),
        skipped: ensemble.skipped,
    })
}

/// One line of a results table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub family: String,
    /// Dependence parameter for one-parameter families.
    pub alpha: Option<f64>,
    pub n: usize,
    pub estimator: String,
    pub value: f64,
    pub mc_se: f64,
}

impl TableRow {
    pub fn new(config: &ExperimentConfig, estimator: String, value: f64, mc_se: f64) -> Self {
        let alpha = match config.model.family {
            Family::SymmetricLogistic { alpha } => Some(alpha),
            #[cfg(feature = "asymmetric-logistic")]
            Family::AsymmetricLogistic { .. } => None,
        };
        Self {
            family: config.model.family_name().to_string(),
            alpha,
            n: config.n,
            estimator,
            value,
            mc_se,
        }
    }
}

pub fn mise_rows(config: &ExperimentConfig, results: &[MiseResult]) -> Vec<TableRow> {
    results
        .iter()
        .map(|r| TableRow::new(config, r.label(), r.mise, r.mc_std_error))
        .collect()
}

pub fn improvement_rows(config: &ExperimentConfig, results: &[ImprovementResult]) -> Vec<TableRow> {
    results
        .iter()
        .map(|r| TableRow::new(config, r.projected.label(), r.improvement, r.mc_std_error))
        .collect()
}

pub fn coverage_rows(config: &ExperimentConfig, results: &[CoverageResult]) -> Vec<TableRow> {
    results
        .iter()
        .flat_map(|r| {
            let name = label(r.estimator_kind, true);
            [
                TableRow::new(
                    config,
                    format!("{name} simultaneous"),
                    r.simultaneous,
                    r.simultaneous_se,
                ),
                TableRow::new(config, format!("{name} pointwise"), r.pointwise, r.pointwise_se),
            ]
        })
        .collect()
}

/// Writes `family,alpha,n,estimator,value,mc_se` with a header row.
pub fn write_table<W: Write>(rows: &[TableRow], mut out: W) -> Result<()> {
    writeln!(out, "family,alpha,n,estimator,value,mc_se")?;
    for row in rows {
        let alpha = row.alpha.map(|a| a.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{:e},{:e}",
            row.family, alpha, row.n, row.estimator, row.value, row.mc_se
        )?;
    }
    Ok(())
}
