use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use pickands::bench::{self, TableRow};
use pickands::bernstein::dimension;
use pickands::bootstrap::{
    band_from_json, band_to_json, bootstrap_with_projector, check_level, pointwise_band, simultaneous_band,
};
use pickands::madogram::estimate_pickands;
use pickands::models::{sample, ModelSpec};
use pickands::projection;
use pickands::projection::{
    default_degree, default_grid_resolution, min_grid_resolution, pilot_extremal_coefficient, ProjectedEstimate,
    Projector, SCHEMA_VERSION,
};
use pickands::{PilotEstimate, SampleMatrix, SimplexPoint};
use serde::{Deserialize, Serialize};

use crate::bench_config::{self, BenchFile};
use crate::dataset::{write_csv, Dataset};
use crate::{
    BandArgs, BenchArgs, EstimateArgs, Experiment, ExtremalArgs, FamilyArg, PairwiseArgs, ProjectArgs, SimulateArgs,
    DataError, UsageError,
};

const FEASIBILITY_TOL: f64 = 1e-8;
const CONVEXITY_TOL: f64 = 1e-8;

/// JSON document written by `estimate`.
#[derive(Debug, Serialize, Deserialize)]
pub struct PilotDocument {
    pub schema: u32,
    pub source: String,
    pub rows_used: usize,
    pub rows_dropped: usize,
    pub pilot: PilotEstimate,
}

impl PilotDocument {
    pub fn read(path: &Path) -> Result<Self> {
        let doc: PilotDocument = serde_json::from_str(&read_text(path)?)
            .with_context(|| format!("{} is not a pilot estimate document", path.display()))?;
        if doc.schema != SCHEMA_VERSION {
            return Err(UsageError(format!("unsupported pilot schema version {}", doc.schema)).into());
        }
        Ok(doc)
    }
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let model = match &args.model {
        Some(path) => {
            let model: ModelSpec =
                serde_json::from_str(&read_text(path)?).map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
            model.validate()?;
            model
        }
        None => match args.family {
            FamilyArg::SymmetricLogistic => {
                ModelSpec::symmetric_logistic(args.dim, args.alpha.expect("clap requires --alpha"))?
            }
        },
    };
    let data = sample(&model, args.n, args.seed)?;
    let header: Vec<String> = (1..=data.d()).map(|i| format!("x{i}")).collect();
    let rows: Vec<Vec<f64>> = data.rows().map(<[f64]>::to_vec).collect();
    let mut buf = Vec::new();
    write_csv(&mut buf, &header, &rows)?;
    emit(args.out.as_deref(), &buf)?;
    if let Some(path) = &args.out {
        eprintln!("wrote {} x {} sample to {}", data.n(), data.d(), path.display());
    }
    Ok(())
}

pub fn estimate(args: &EstimateArgs) -> Result<()> {
    let ds = load_joint(&args.input.input, args.input.min_rows)?;
    let data = ds.sample()?;
    let m = args
        .grid
        .unwrap_or_else(|| default_grid_resolution(ds.d(), default_degree(ds.d())));
    let grid = lattice(ds.d(), m)?;
    let pilot = estimate_pickands(&data, &grid, args.estimator)?.with_resolution(m);
    if let Some(center) = pilot.center_value() {
        eprintln!("{} pilot on {} points, A(center) = {center}", pilot.kind, grid.len());
    }
    let doc = PilotDocument {
        schema: SCHEMA_VERSION,
        source: ds.source.display().to_string(),
        rows_used: ds.n(),
        rows_dropped: ds.report.dropped.len(),
        pilot,
    };
    let json = serde_json::to_string_pretty(&doc)?;
    let columns = [("pilot", doc.pilot.values.as_slice())];
    write_outputs(args.out.as_deref(), &json, &doc.pilot.grid, &columns)
}

pub fn project(args: &ProjectArgs) -> Result<()> {
    let (pilot, source) = if is_json(&args.input) {
        let doc = PilotDocument::read(&args.input)?;
        (doc.pilot, doc.source)
    } else {
        let ds = load_joint(&args.input, args.min_rows)?;
        let k = args.degree.unwrap_or_else(|| default_degree(ds.d()));
        let pilot = pilot_on_lattice(&ds.sample()?, args.estimator, k, args.grid)?;
        (pilot, ds.source.display().to_string())
    };
    let d = pilot.dim();
    let k = args.degree.unwrap_or_else(|| default_degree(d));
    check_degree(k)?;
    if pilot.grid.len() < dimension(d, k) {
        return Err(UsageError(format!(
            "pilot grid has {} points but degree {k} has {} coefficients; estimate on a finer grid",
            pilot.grid.len(),
            dimension(d, k)
        ))
        .into());
    }
    let mut estimate = projection::project(&pilot, k)?;
    let report = estimate.feasibility(FEASIBILITY_TOL)?;
    let theta = estimate.extremal_coefficient()?;
    let status = if report.satisfied { "satisfied" } else { "violated" };
    estimate.provenance.insert("source".into(), source);
    estimate.provenance.insert("feasibility".into(), status.into());
    estimate
        .provenance
        .insert("extremal_coefficient".into(), theta.to_string());
    eprintln!("degree {k}, {} coefficients, feasibility {status}", estimate.beta.len());
    eprintln!("theta = {theta}");

    let projected = estimate.evaluate_grid(&pilot.grid)?;
    let columns = [("pilot", pilot.values.as_slice()), ("projected", projected.as_slice())];
    write_outputs(args.out.as_deref(), &estimate.to_json()?, &pilot.grid, &columns)
}

pub fn pairwise(args: &PairwiseArgs) -> Result<()> {
    let ds = load(&args.input.input, args.input.min_rows)?;
    let k = args.degree.unwrap_or_else(|| default_degree(2));
    check_degree(k)?;
    let m = resolution(2, k, args.grid);
    let projector = Projector::new(2, k, m)?;
    let constant = ds.constant_columns();
    for &c in &constant {
        eprintln!("warning: column '{}' is constant; skipping its pairs", ds.names[c]);
    }

    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["first", "second", "theta_pilot", "theta"])?;
    let mut pairs = 0;
    for i in 0..ds.d() {
        for j in i + 1..ds.d() {
            if constant.contains(&i) || constant.contains(&j) {
                continue;
            }
            let data = SampleMatrix::from_columns(&[ds.columns[i].clone(), ds.columns[j].clone()])?;
            let pilot = estimate_pickands(&data, projector.grid(), pickands::EstimatorKind::Madogram)?;
            let theta = projector
                .project(&pilot)
                .and_then(|e| e.extremal_coefficient())
                .with_context(|| format!("pair ({}, {})", ds.names[i], ds.names[j]))?;
            let pilot_theta = pilot_extremal_coefficient(&pilot)
                .map(|t| t.to_string())
                .unwrap_or_default();
            wtr.write_record([
                ds.names[i].as_str(),
                ds.names[j].as_str(),
                &pilot_theta,
                &theta.to_string(),
            ])?;
            pairs += 1;
        }
    }
    eprintln!("{pairs} pairs");
    emit(args.out.as_deref(), &wtr.into_inner()?)
}

pub fn band(args: &BandArgs) -> Result<()> {
    let alpha_tilde = 1.0 - args.level;
    check_level(args.boot_reps, alpha_tilde)?;
    let ds = load_joint(&args.input.input, args.input.min_rows)?;
    let data = ds.sample()?;
    let d = ds.d();
    let k = args.degree.unwrap_or_else(|| default_degree(d));
    check_degree(k)?;
    let projector = Projector::new(d, k, resolution(d, k, args.grid))?;
    let pilot = estimate_pickands(&data, projector.grid(), args.estimator)?;
    let estimate = projector.project(&pilot)?;
    let ensemble = bootstrap_with_projector(&data, args.estimator, &projector, args.boot_reps, args.seed)?;
    let band = simultaneous_band(&ensemble, alpha_tilde)?;
    let pointwise = pointwise_band(&ensemble, projector.grid(), alpha_tilde)?;

    let grid = projector.grid();
    let center = estimate.evaluate_grid(grid)?;
    let (lower, upper) = band.evaluate_grid(grid)?;
    let widest = lower.iter().zip(&upper).map(|(l, u)| u - l).fold(0.0, f64::max);
    eprintln!(
        "{} replicates ({} retried, {} skipped), level {}, max width {widest}",
        ensemble.r(),
        ensemble.retried,
        ensemble.skipped,
        args.level
    );
    let (lo_check, hi_check) = band.convexity_diagnostic(2 * k, CONVEXITY_TOL)?;
    for (name, check) in [("lower", lo_check), ("upper", hi_check)] {
        if !check.passed() {
            eprintln!(
                "warning: {name} band limit fails midpoint convexity on {} of {} pairs (worst {:e})",
                check.violations, check.pairs, check.worst
            );
        }
    }
    let columns = [
        ("estimate", center.as_slice()),
        ("lower", lower.as_slice()),
        ("upper", upper.as_slice()),
        ("pointwise_lower", pointwise.lower.as_slice()),
        ("pointwise_upper", pointwise.upper.as_slice()),
    ];
    write_outputs(
        args.out.as_deref(),
        &band_to_json(&estimate, &band, &ensemble)?,
        grid,
        &columns,
    )
}

pub fn bench(args: &BenchArgs) -> Result<()> {
    let file = match &args.config {
        Some(path) => BenchFile::read(path)?,
        None => BenchFile::default(),
    };
    let plan = bench_config::plan(args, file)?;
    let mut rows: Vec<TableRow> = Vec::new();
    for config in &plan.configs {
        if matches!(plan.experiment, Experiment::Mise | Experiment::All) {
            rows.extend(bench::mise_rows(config, &bench::run_mise(config)?));
        }
        if matches!(plan.experiment, Experiment::Improvement | Experiment::All) {
            rows.extend(bench::improvement_rows(config, &bench::run_improvement(config)?));
        }
        if matches!(plan.experiment, Experiment::Coverage | Experiment::All) {
            rows.extend(bench::coverage_rows(config, &bench::run_coverage(config)?));
        }
    }
    for row in &rows {
        let alpha = row.alpha.map(|a| a.to_string()).unwrap_or_else(|| "-".into());
        eprintln!(
            "{:<20} alpha={:<5} n={:<6} {:<22} {:>12.5e} (se {:.2e})",
            row.family, alpha, row.n, row.estimator, row.value, row.mc_se
        );
    }
    let mut buf = Vec::new();
    bench::write_table(&rows, &mut buf)?;
    emit(args.out.as_deref(), &buf)
}

pub fn extremal(args: &ExtremalArgs) -> Result<()> {
    let estimate = if is_json(&args.input) {
        let text = read_text(&args.input)?;
        match ProjectedEstimate::from_json(&text) {
            Ok(e) => e,
            Err(_) => band_from_json(&text)
                .map(|(e, _)| e)
                .map_err(|_| UsageError(format!("{} is not an estimate or band document", args.input.display())))?,
        }
    } else {
        let ds = load_joint(&args.input, args.min_rows)?;
        let k = args.degree.unwrap_or_else(|| default_degree(ds.d()));
        check_degree(k)?;
        let pilot = pilot_on_lattice(&ds.sample()?, args.estimator, k, args.grid)?;
        if let Ok(theta) = pilot_extremal_coefficient(&pilot) {
            eprintln!("pilot theta = {theta}");
        }
        projection::project(&pilot, k)?
    };
    println!("{}", estimate.extremal_coefficient()?);
    Ok(())
}

fn pilot_on_lattice(
    data: &SampleMatrix,
    kind: pickands::EstimatorKind,
    k: usize,
    grid: Option<usize>,
) -> Result<PilotEstimate> {
    check_degree(k)?;
    let m = resolution(data.d(), k, grid);
    Ok(estimate_pickands(data, &lattice(data.d(), m)?, kind)?.with_resolution(m))
}

/// Requested resolution, raised to the smallest admissible one if needed.
fn resolution(d: usize, k: usize, requested: Option<usize>) -> usize {
    let min = min_grid_resolution(d, k);
    match requested {
        Some(m) if m < min => {
            eprintln!("warning: grid resolution {m} too coarse for degree {k}; using {min}");
            min
        }
        Some(m) => m,
        None => default_grid_resolution(d, k),
    }
}

fn check_degree(k: usize) -> Result<()> {
    if k < 2 {
        return Err(UsageError(format!("degree must be at least 2, got {k}")).into());
    }
    Ok(())
}

fn lattice(d: usize, m: usize) -> Result<Vec<SimplexPoint>> {
    if m == 0 {
        return Err(UsageError("grid resolution must be positive".into()).into());
    }
    Ok(pickands::bernstein::simplex_grid(d, m)?)
}

fn load(path: &Path, min_rows: usize) -> Result<Dataset> {
    let ds = Dataset::read(path, min_rows)?;
    if !ds.report.dropped.is_empty() {
        eprintln!("warning: {}: {}", path.display(), ds.report);
    }
    Ok(ds)
}

/// `load` for commands that use every column jointly.
fn load_joint(path: &Path, min_rows: usize) -> Result<Dataset> {
    let ds = load(path, min_rows)?;
    if let Some(&c) = ds.constant_columns().first() {
        return Err(DataError(format!("{}: column '{}' is constant", path.display(), ds.names[c])).into());
    }
    Ok(ds)
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

/// Writes to `path`, or to stdout when no path is given.
fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(path) => std::fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
            Ok(())
        }
    }
}

/// Companion grid CSV of a JSON output: same path with a `.csv` extension.
pub fn grid_csv_path(json: &Path) -> PathBuf {
    json.with_extension("csv")
}

/// JSON to `out` (or stdout); with an `out` path, also the grid CSV
/// `w1..wd` followed by the named value columns.
fn write_outputs(out: Option<&Path>, json: &str, grid: &[SimplexPoint], columns: &[(&str, &[f64])]) -> Result<()> {
    let mut text = json.to_string();
    text.push('\n');
    emit(out, text.as_bytes())?;
    let Some(out) = out else { return Ok(()) };
    let d = grid.first().map_or(0, SimplexPoint::dim);
    let header: Vec<String> = (1..=d)
        .map(|i| format!("w{i}"))
        .chain(columns.iter().map(|(name, _)| name.to_string()))
        .collect();
    let rows: Vec<Vec<f64>> = grid
        .iter()
        .enumerate()
        .map(|(q, w)| {
            w.coords()
                .iter()
                .copied()
                .chain(columns.iter().map(|(_, v)| v[q]))
                .collect()
        })
        .collect();
    let path = grid_csv_path(out);
    let file = std::fs::File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
    write_csv(std::io::BufWriter::new(file), &header, &rows)
}
