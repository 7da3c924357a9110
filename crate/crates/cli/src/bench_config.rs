//! Benchmark settings from a TOML file merged with command-line flags.
//!
//! ```toml
//! experiment = "coverage"
//! alpha = [0.3, 0.5, 0.7]
//! n = 100
//! reps = 200
//! boot_reps = 200
//! level = 0.95
//! seed = 9
//! ```

use std::path::Path;

use anyhow::{Context, Result};
use pickands::bench::ExperimentConfig;
use pickands::projection::default_grid_resolution;
use pickands::EstimatorKind;
use serde::Deserialize;

use crate::{BenchArgs, Experiment, UsageError};

/// A scalar or a list in the TOML file.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v],
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchFile {
    pub experiment: Option<Experiment>,
    pub d: Option<usize>,
    pub alpha: Option<OneOrMany<f64>>,
    pub n: Option<OneOrMany<usize>>,
    pub reps: Option<usize>,
    pub boot_reps: Option<usize>,
    pub k: Option<usize>,
    pub grid: Option<usize>,
    pub estimators: Option<Vec<String>>,
    pub level: Option<f64>,
    pub seed: Option<u64>,
    pub full_scale: Option<bool>,
}

impl BenchFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        toml::from_str(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())).into())
    }
}

#[derive(Debug, Clone)]
pub struct BenchPlan {
    pub experiment: Experiment,
    pub configs: Vec<ExperimentConfig>,
}

/// Precedence, lowest first: built-in defaults, `--full-scale`, file, flags.
pub fn plan(args: &BenchArgs, file: BenchFile) -> Result<BenchPlan> {
    let usage = |msg: String| -> anyhow::Error { UsageError(msg).into() };
    let experiment = args.experiment.or(file.experiment).unwrap_or(Experiment::Mise);
    let full_scale = args.full_scale || file.full_scale.unwrap_or(false);
    let d = args.dim.or(file.d).unwrap_or(3);
    let alphas = pick(&args.alpha, file.alpha).unwrap_or_else(|| vec![0.5]);
    let sizes = pick(&args.n, file.n).unwrap_or_else(|| vec![100]);
    let estimators = if !args.estimator.is_empty() {
        args.estimator.clone()
    } else if let Some(names) = file.estimators {
        names
            .iter()
            .map(|s| s.parse::<EstimatorKind>().map_err(|e| usage(e.to_string())))
            .collect::<Result<_>>()?
    } else {
        vec![EstimatorKind::Madogram]
    };
    let level = args.level.or(file.level).unwrap_or(0.95);
    if !(level > 0.0 && level < 1.0) {
        return Err(usage(format!("level must lie in (0, 1), got {level}")));
    }
    let (default_reps, default_boot) = if full_scale { (1000, 500) } else { (1000, 200) };
    let reps = args.reps.or(file.reps).unwrap_or(default_reps);
    let boot_reps = args.boot_reps.or(file.boot_reps).unwrap_or(default_boot);
    let k = args.degree.or(file.k);
    let grid = args.grid.or(file.grid);
    let seed = args.seed.or(file.seed).unwrap_or(1);

    let mut configs = Vec::new();
    for &alpha in &alphas {
        for &n in &sizes {
            let mut config = ExperimentConfig::symmetric_logistic(d, alpha, n)?;
            config.reps = reps;
            config.boot_reps = boot_reps;
            config.estimators = estimators.clone();
            config.alpha_tilde = 1.0 - level;
            config.seed = seed;
            if let Some(k) = k {
                config.k = k;
                config.grid_resolution = default_grid_resolution(d, k);
            }
            if let Some(m) = grid {
                config.grid_resolution = m;
            }
            config.validate()?;
            configs.push(config);
        }
    }
    Ok(BenchPlan { experiment, configs })
}

fn pick<T: Clone>(flags: &[T], file: Option<OneOrMany<T>>) -> Option<Vec<T>> {
    if flags.is_empty() {
        file.map(OneOrMany::into_vec)
    } else {
        Some(flags.to_vec())
    }
}
