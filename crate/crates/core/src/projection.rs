//! Projection of a pilot estimate onto shape-constrained Bernstein–Bézier
//! polynomials.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bernstein::{dimension, enumerate_multi_indices, simplex_grid, BernsteinBasis, SimplexPoint};
use crate::constraints::{build_constraints, check_feasible, ConstraintSystem, FeasibilityReport};
use crate::error::{check_len, Error, Result};
use crate::madogram::{EstimatorKind, PilotEstimate};
use crate::qp::{solve_from, solve_with_factor, solve_with_state, QpFactor, QpSolution, WarmStart};

/// Tag stored in serialized estimates for the coefficient ordering: free
/// coordinates with the first varying fastest.
pub const ORDERING: &str = "colex";
pub const SCHEMA_VERSION: u32 = 1;

/// Smallest lattice resolution `m` whose grid has at least `2·p_k` points.
pub fn min_grid_resolution(d: usize, k: usize) -> usize {
    let p = dimension(d, k);
    (1..)
        .find(|&m| dimension(d, m) >= 2 * p)
        .expect("grid size grows without bound")
}

/// Resolution 50 for `d <= 3`, otherwise the smallest admissible one.
pub fn default_grid_resolution(d: usize, k: usize) -> usize {
    let min = min_grid_resolution(d, k);
    if d <= 3 {
        min.max(50)
    } else {
        min
    }
}

/// Degree used when none is given: 14 up to three dimensions, 7 above.
pub fn default_degree(d: usize) -> usize {
    if d <= 3 {
        14
    } else {
        7
    }
}

/// Basis, design factorization and constraints for one `(d, k, grid)`,
/// reusable across many pilots.
#[derive(Debug, Clone)]
pub struct Projector {
    basis: BernsteinBasis,
    grid: Vec<SimplexPoint>,
    resolution: Option<usize>,
    factor: QpFactor,
    constraints: ConstraintSystem,
}

impl Projector {
    /// Projector on the full lattice of resolution `m`.
    pub fn new(d: usize, k: usize, m: usize) -> Result<Self> {
        let grid = simplex_grid(d, m)?;
        let mut proj = Self::with_grid(d, k, grid)?;
        proj.resolution = Some(m);
        Ok(proj)
    }

    pub fn with_grid(d: usize, k: usize, grid: Vec<SimplexPoint>) -> Result<Self> {
        let basis = BernsteinBasis::new(d, k)?;
        let constraints = build_constraints(d, k)?;
        if grid.len() < 2 * basis.len() {
            return Err(Error::RankDeficient(format!(
                "{} grid points for {} coefficients; at least {} are required \
                 (use grid resolution >= {} or a smaller degree)",
                grid.len(),
                basis.len(),
                2 * basis.len(),
                min_grid_resolution(d, k)
            )));
        }
        let design = basis.design_matrix(&grid)?;
        let factor = QpFactor::new(&design)?;
        Ok(Self {
            basis,
            grid,
            resolution: None,
            factor,
            constraints,
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn degree(&self) -> usize {
        self.basis.degree()
    }

    pub fn grid(&self) -> &[SimplexPoint] {
        &self.grid
    }

    pub fn resolution(&self) -> Option<usize> {
        self.resolution
    }

    pub fn basis(&self) -> &BernsteinBasis {
        &self.basis
    }

    pub fn constraints(&self) -> &ConstraintSystem {
        &self.constraints
    }

    pub fn factor(&self) -> &QpFactor {
        &self.factor
    }

    /// Solves the projection QP for pilot values on this projector's grid.
    pub fn solve(&self, values: &[f64], hint: Option<&[usize]>) -> Result<QpSolution> {
        check_len(self.grid.len(), values.len())?;
        solve_with_factor(&self.factor, &self.constraints, values, hint)
    }

    /// Solves and keeps the final active-set state for [`Projector::solve_from`].
    pub fn solve_with_state(&self, values: &[f64]) -> Result<(QpSolution, WarmStart)> {
        check_len(self.grid.len(), values.len())?;
        solve_with_state(&self.factor, &self.constraints, values, None)
    }

    /// Solves starting from the state of an earlier solve on this projector.
    pub fn solve_from(&self, values: &[f64], warm: &WarmStart) -> Result<QpSolution> {
        check_len(self.grid.len(), values.len())?;
        solve_from(&self.factor, &self.constraints, values, warm)
    }

    pub fn project_values(&self, values: &[f64], kind: EstimatorKind) -> Result<ProjectedEstimate> {
        let sol = self.solve(values, None)?;
        Ok(self.estimate_from(sol, kind))
    }

    pub fn project(&self, pilot: &PilotEstimate) -> Result<ProjectedEstimate> {
        if pilot.grid != self.grid {
            return Err(Error::domain("pilot grid differs from the projector grid"));
        }
        self.project_values(&pilot.values, pilot.kind)
    }

    pub(crate) fn estimate_from(&self, sol: QpSolution, kind: EstimatorKind) -> ProjectedEstimate {
        // round-off can leave coefficients a hair outside [0, 1]
        let beta = sol.beta_hat.iter().map(|b| b.clamp(0.0, 1.0)).collect();
        let mut provenance = BTreeMap::new();
        provenance.insert("crate".to_string(), format!("pickands {}", env!("CARGO_PKG_VERSION")));
        provenance.insert("qp_iterations".to_string(), sol.iterations.to_string());
        provenance.insert("regularized".to_string(), sol.regularized.to_string());
        ProjectedEstimate {
            d: self.dim(),
            k: self.degree(),
            beta,
            pilot_kind: kind,
            grid_resolution: self.resolution,
            provenance,
        }
    }
}

/// Projects `pilot` at degree `k`, building a projector for its grid.
pub fn project(pilot: &PilotEstimate, k: usize) -> Result<ProjectedEstimate> {
    let d = pilot.dim();
    let mut projector = Projector::with_grid(d, k, pilot.grid.clone())?;
    projector.resolution = pilot.resolution;
    projector.project(pilot)
}

/// A shape-constrained estimate `Ã(w) = b_k(w)ᵀβ̂`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedEstimate {
    pub d: usize,
    pub k: usize,
    pub beta: Vec<f64>,
    pub pilot_kind: EstimatorKind,
    pub grid_resolution: Option<usize>,
    pub provenance: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct EstimateDocument {
    schema: u32,
    d: usize,
    k: usize,
    ordering: String,
    beta: Vec<f64>,
    pilot_kind: EstimatorKind,
    grid_resolution: Option<usize>,
    #[serde(default)]
    provenance: BTreeMap<String, String>,
}

impl ProjectedEstimate {
    pub fn basis(&self) -> Result<BernsteinBasis> {
        BernsteinBasis::new(self.d, self.k)
    }

    pub fn evaluate(&self, w: &SimplexPoint) -> Result<f64> {
        crate::bernstein::evaluate_polynomial(&self.beta, w, self.k)
    }

    pub fn evaluate_grid(&self, grid: &[SimplexPoint]) -> Result<Vec<f64>> {
        let basis = self.basis()?;
        grid.iter().map(|w| basis.evaluate(&self.beta, w)).collect()
    }

    pub fn feasibility(&self, tol: f64) -> Result<FeasibilityReport> {
        check_feasible(&self.beta, &build_constraints(self.d, self.k)?, tol)
    }

    pub fn extremal_coefficient(&self) -> Result<f64> {
        extremal_coefficient(self)
    }

    pub fn midpoint_convexity(&self, m: usize, tol: f64) -> Result<ConvexityCheck> {
        midpoint_convexity(&self.beta, self.d, self.k, m, tol)
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = EstimateDocument {
            schema: SCHEMA_VERSION,
            d: self.d,
            k: self.k,
            ordering: ORDERING.to_string(),
            beta: self.beta.clone(),
            pilot_kind: self.pilot_kind,
            grid_resolution: self.grid_resolution,
            provenance: self.provenance.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: EstimateDocument = serde_json::from_str(text)?;
        if doc.schema != SCHEMA_VERSION {
            return Err(Error::domain(format!("unsupported schema version {}", doc.schema)));
        }
        if doc.ordering != ORDERING {
            return Err(Error::domain(format!(
                "unsupported coefficient ordering '{}'",
                doc.ordering
            )));
        }
        check_len(dimension(doc.d, doc.k), doc.beta.len())?;
        Ok(Self {
            d: doc.d,
            k: doc.k,
            beta: doc.beta,
            pilot_kind: doc.pilot_kind,
            grid_resolution: doc.grid_resolution,
            provenance: doc.provenance,
        })
    }
}

/// `θ = d·Ã(1/d, …, 1/d)`.
pub fn extremal_coefficient(estimate: &ProjectedEstimate) -> Result<f64> {
    let center = SimplexPoint::barycenter(estimate.d)?;
    Ok(estimate.d as f64 * estimate.evaluate(&center)?)
}

/// `θ` from a pilot whose grid contains the barycenter.
pub fn pilot_extremal_coefficient(pilot: &PilotEstimate) -> Result<f64> {
    pilot
        .center_value()
        .map(|a| pilot.dim() as f64 * a)
        .ok_or_else(|| Error::domain("pilot grid does not contain the barycenter"))
}

/// Outcome of a midpoint-convexity scan over lattice pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvexityCheck {
    pub pairs: usize,
    pub violations: usize,
    /// Largest `f((a+b)/2) - (f(a)+f(b))/2` seen, or 0.
    pub worst: f64,
}

impl ConvexityCheck {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Checks `f((a+b)/2) <= (f(a)+f(b))/2 + tol` for every pair of points of
/// the resolution-`m` lattice, where `f` is the degree-`k` polynomial with
/// coefficients `beta`. Midpoints lie on the resolution-`2m` lattice, so `f`
/// is evaluated once per lattice point.
pub fn midpoint_convexity(beta: &[f64], d: usize, k: usize, m: usize, tol: f64) -> Result<ConvexityCheck> {
    let basis = BernsteinBasis::new(d, k)?;
    check_len(basis.len(), beta.len())?;
    if m == 0 {
        return Err(Error::domain("lattice resolution must be positive"));
    }
    let radix = 2 * m as u64 + 1;
    let key = |alpha: &mut dyn Iterator<Item = u64>| alpha.fold(0u64, |acc, a| acc * radix + a);
    let mut values = std::collections::HashMap::new();
    for idx in enumerate_multi_indices(d, 2 * m)? {
        let v = basis.evaluate(beta, &idx.lattice_point())?;
        values.insert(key(&mut idx.alpha().iter().map(|&a| a as u64)), v);
    }
    let coarse: Vec<(Vec<u32>, f64)> = enumerate_multi_indices(d, m)?
        .into_iter()
        .map(|idx| {
            let doubled: Vec<u32> = idx.alpha().iter().map(|a| 2 * a).collect();
            let v = values[&key(&mut doubled.iter().map(|&a| a as u64))];
            (idx.alpha().to_vec(), v)
        })
        .collect();
    let mut check = ConvexityCheck {
        pairs: 0,
        violations: 0,
        worst: 0.0,
    };
    for (i, (a, fa)) in coarse.iter().enumerate() {
        for (b, fb) in &coarse[i + 1..] {
            let mid = values[&key(&mut a.iter().zip(b).map(|(x, y)| (x + y) as u64))];
            let excess = mid - 0.5 * (fa + fb);
            check.pairs += 1;
            check.worst = check.worst.max(excess);
            if excess > tol {
                check.violations += 1;
            }
        }
    }
    Ok(check)
}

/// Discretized L2 distance between the projection and the pilot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegreeFit {
    pub k: usize,
    pub l2: f64,
}

/// Projects at increasing degrees and stops once the L2 distance to the pilot
/// improves by less than 1%. Degrees that need a finer grid are skipped.
pub fn degree_sweep(pilot: &PilotEstimate, degrees: &[usize]) -> Result<Vec<DegreeFit>> {
    let mut fits: Vec<DegreeFit> = Vec::new();
    for &k in degrees {
        if pilot.grid.len() < 2 * dimension(pilot.dim(), k) {
            break;
        }
        let est = project(pilot, k)?;
        let fitted = est.evaluate_grid(&pilot.grid)?;
        let l2 = (fitted
            .iter()
            .zip(&pilot.values)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / fitted.len() as f64)
            .sqrt();
        let stop = fits.last().is_some_and(|prev| prev.l2 - l2 < 0.01 * prev.l2);
        fits.push(DegreeFit { k, l2 });
        if stop {
            break;
        }
    }
    Ok(fits)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pilot(d: usize, m: usize, f: impl Fn(&SimplexPoint) -> f64) -> PilotEstimate {
        let grid = simplex_grid(d, m).unwrap();
        let values = grid.iter().map(&f).collect();
        PilotEstimate::new(grid, values, EstimatorKind::Madogram)
            .unwrap()
            .with_resolution(m)
    }

    #[test]
    fn independence_is_preserved() {
        let est = project(&pilot(3, 12, |_| 1.0), 4).unwrap();
        assert!(est.beta.iter().all(|b| (b - 1.0).abs() < 1e-10));
        assert!((extremal_coefficient(&est).unwrap() - 3.0).abs() < 1e-9);
    }

    #[test]
    fn too_coarse_grid_is_rejected() {
        assert!(matches!(
            project(&pilot(3, 5, |_| 1.0), 6),
            Err(Error::RankDeficient(_))
        ));
        assert_eq!(min_grid_resolution(3, 20), 29);
        assert_eq!(default_grid_resolution(3, 14), 50);
    }

    #[test]
    fn midpoint_scan_detects_concavity() {
        let basis = BernsteinBasis::new(2, 4).unwrap();
        let convex = basis.operator(|w| Ok(w.max_coord())).unwrap();
        let check = midpoint_convexity(&convex, 2, 4, 10, 1e-12).unwrap();
        assert!(check.passed());
        assert_eq!(check.pairs, 55);
        let concave: Vec<f64> = convex.iter().map(|b| -b).collect();
        assert!(midpoint_convexity(&concave, 2, 4, 10, 1e-12).unwrap().violations > 0);
    }

    #[test]
    fn json_round_trip() {
        let est = project(&pilot(2, 20, |w| w.max_coord().max(0.8)), 5).unwrap();
        let back = ProjectedEstimate::from_json(&est.to_json().unwrap()).unwrap();
        assert_eq!(back, est);
        let w = SimplexPoint::new(vec![0.3, 0.7]).unwrap();
        assert!((back.evaluate(&w).unwrap() - est.evaluate(&w).unwrap()).abs() < 1e-14);
        assert!(est.to_json().unwrap().contains("\"schema\": 1"));
    }

    #[test]
    fn sweep_stops_on_small_improvement() {
        let p = pilot(2, 60, |w| (w.coords()[0].powi(3) + w.coords()[1].powi(3)).cbrt());
        let fits = degree_sweep(&p, &[2, 4, 8, 16, 24]).unwrap();
        assert!(fits.len() >= 2);
        assert!(fits.windows(2).all(|f| f[1].l2 <= f[0].l2 + 1e-12));
    }
}
