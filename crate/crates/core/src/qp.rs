//! Constrained least squares by the Goldfarb–Idnani dual active-set method.
//!
//! The problem is
//!
//! ```text
//! min_β  Q^{-1} ||Bβ - y||²   s.t.  Rβ >= r,  0 <= β <= 1
//! ```
//!
//! written internally as `min ½βᵀGβ - aᵀβ` with `G = BᵀB/Q`, `a = Bᵀy/Q`.
//! The solver starts from the unconstrained minimizer and adds violated
//! constraints one at a time, keeping `J = L^{-T}Q` and the triangular factor
//! `R` of `JᵀN` up to date: a Householder reflection per addition, Givens
//! rotations per deletion. The vertex rows of the constraint system are `±`
//! pairs and are treated as equalities.

use nalgebra::DMatrix;

use crate::constraints::{Block, ConstraintSystem};
use crate::error::{check_len, Error, Result};

/// Condition estimate of `G` above which a ridge of `RIDGE` is added.
pub const CONDITION_LIMIT: f64 = 1e12;
pub const RIDGE: f64 = 1e-10;
/// Normalized slack below which an inactive constraint counts as violated.
const VIOLATION_TOL: f64 = 1e-11;

/// Factorization of the normal matrix shared by every solve with one design.
#[derive(Debug, Clone)]
pub struct QpFactor {
    p: usize,
    q_points: usize,
    /// `Bᵀ / Q`, so that `a = scaled_bt · y`.
    scaled_bt: DMatrix<f64>,
    gram: DMatrix<f64>,
    /// `R^{-1}` for `G = RᵀR` (upper triangular).
    r_inv: DMatrix<f64>,
    condition: f64,
    regularized: bool,
}

impl QpFactor {
    pub fn new(design: &DMatrix<f64>) -> Result<Self> {
        let (q_points, p) = design.shape();
        if q_points < p {
            return Err(Error::RankDeficient(format!(
                "{q_points} grid points for {p} coefficients"
            )));
        }
        let scale = 1.0 / (q_points as f64).sqrt();
        let scaled = design * scale;
        let mut r = scaled.clone().qr().r();
        let mut condition = diag_condition(&r);
        let mut regularized = false;
        if !(condition <= CONDITION_LIMIT) {
            let mut stacked = DMatrix::zeros(q_points + p, p);
            stacked.rows_mut(0, q_points).copy_from(&scaled);
            for j in 0..p {
                stacked[(q_points + j, j)] = RIDGE.sqrt();
            }
            r = stacked.qr().r();
            condition = diag_condition(&r);
            regularized = true;
        }
        if !condition.is_finite() || r.diagonal().iter().any(|v| v.abs() < 1e-300) {
            return Err(Error::RankDeficient(format!(
                "normal matrix is singular for {p} coefficients and {q_points} grid points"
            )));
        }
        let mut r_inv = DMatrix::identity(p, p);
        if !r.solve_upper_triangular_mut(&mut r_inv) {
            return Err(Error::RankDeficient("triangular factor is singular".into()));
        }
        let gram = scaled.transpose() * &scaled;
        Ok(Self {
            p,
            q_points,
            scaled_bt: design.transpose() / q_points as f64,
            gram,
            r_inv,
            condition,
            regularized,
        })
    }

    pub fn num_coefficients(&self) -> usize {
        self.p
    }

    pub fn num_points(&self) -> usize {
        self.q_points
    }

    /// Estimate of the condition number of `G` from the diagonal of its
    /// triangular factor.
    pub fn condition_estimate(&self) -> f64 {
        self.condition
    }

    pub fn regularized(&self) -> bool {
        self.regularized
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    fn linear_term(&self, targets: &[f64]) -> Vec<f64> {
        let y = nalgebra::DVector::from_column_slice(targets);
        (&self.scaled_bt * y).iter().copied().collect()
    }

    /// `½βᵀGβ - aᵀβ`.
    fn half_objective(&self, a: &[f64], beta: &[f64]) -> f64 {
        let x = nalgebra::DVector::from_column_slice(beta);
        0.5 * x.dot(&(&self.gram * &x)) - a.iter().zip(beta).map(|(u, v)| u * v).sum::<f64>()
    }
}

fn diag_condition(r: &DMatrix<f64>) -> f64 {
    let diag = r.diagonal();
    let max = diag.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = diag.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    (max / min).powi(2)
}

/// Least-squares projection problem onto the constrained coefficient set.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub design: DMatrix<f64>,
    pub targets: Vec<f64>,
    pub constraints: ConstraintSystem,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub beta_hat: Vec<f64>,
    /// One multiplier per row of the constraint system, then `p` for the
    /// lower box bounds and `p` for the upper box bounds.
    pub multipliers: Vec<f64>,
    pub iterations: usize,
    pub kkt_residual: f64,
    /// Active constraints at the solution, as indices into `multipliers`.
    pub active_set: Vec<usize>,
    pub regularized: bool,
}

/// Internal constraint: `normal · x >= rhs`, indexed in multiplier layout.
#[derive(Debug, Clone)]
struct Row {
    coefs: Vec<(usize, f64)>,
    rhs: f64,
    norm: f64,
    id: usize,
    /// Id of the opposite row for equality pairs.
    partner: Option<usize>,
}

impl Row {
    fn dot(&self, x: &[f64]) -> f64 {
        self.coefs.iter().map(|(j, c)| c * x[*j]).sum::<f64>()
    }

    fn slack(&self, x: &[f64]) -> f64 {
        self.dot(x) - self.rhs
    }
}

/// Every constraint in multiplier layout: system rows, then lower and upper
/// bounds. Vertex rows come in `±` pairs; the first of each pair is listed
/// as an equality.
struct RowTable {
    rows: Vec<Row>,
    equalities: Vec<usize>,
    inequalities: Vec<usize>,
}

impl RowTable {
    fn new(system: &ConstraintSystem) -> Self {
        let p = system.num_coefficients();
        let q = system.num_rows();
        let vertex = system.block_span(Block::Vertex);
        let mut rows = Vec::with_capacity(q + 2 * p);
        let (mut equalities, mut inequalities) = (Vec::new(), Vec::new());
        for (id, row) in system.rows().iter().enumerate() {
            let partner = if vertex.contains(&id) {
                let first = (id - vertex.start).is_multiple_of(2);
                if first {
                    equalities.push(id);
                }
                Some(if first { id + 1 } else { id - 1 })
            } else {
                inequalities.push(id);
                None
            };
            rows.push(Row {
                coefs: row.coefs.clone(),
                rhs: row.rhs,
                norm: row.norm(),
                id,
                partner,
            });
        }
        for (offset, sign, rhs) in [(q, 1.0, 0.0), (q + p, -1.0, -1.0)] {
            for j in 0..p {
                inequalities.push(offset + j);
                rows.push(Row {
                    coefs: vec![(j, sign)],
                    rhs,
                    norm: 1.0,
                    id: offset + j,
                    partner: None,
                });
            }
        }
        Self {
            rows,
            equalities,
            inequalities,
        }
    }

    /// The side of equality pair `id` that `x` does not satisfy strictly.
    fn oriented(&self, id: usize, x: &[f64]) -> &Row {
        let row = &self.rows[id];
        match row.partner {
            Some(other) if row.slack(x) > 0.0 => &self.rows[other],
            _ => row,
        }
    }
}

/// Rotation `(c, s)` with `c·a + s·b = hypot(a, b)` and `-s·a + c·b = 0`.
fn givens(a: f64, b: f64) -> (f64, f64, f64) {
    let h = a.hypot(b);
    if h == 0.0 {
        (1.0, 0.0, 0.0)
    } else {
        (a / h, b / h, h)
    }
}

/// Applies a rotation to two equal-length columns.
fn rotate_pair(a: &mut [f64], b: &mut [f64], c: f64, s: f64) {
    for (x, y) in a.iter_mut().zip(b.iter_mut()) {
        let (u, v) = (*x, *y);
        *x = c * u + s * v;
        *y = -s * u + c * v;
    }
}

/// Active constraints with `J` and `R` stored column-major in flat buffers.
struct ActiveSet<'a> {
    p: usize,
    j: Vec<f64>,
    /// Upper-triangular factor in the leading `len × len` block.
    r: Vec<f64>,
    rows: Vec<&'a Row>,
    u: Vec<f64>,
    equality: Vec<bool>,
}

impl<'a> ActiveSet<'a> {
    fn new(j0: &DMatrix<f64>) -> Self {
        let p = j0.nrows();
        Self {
            p,
            j: j0.as_slice().to_vec(),
            r: vec![0.0; p * p],
            rows: Vec::new(),
            u: Vec::new(),
            equality: Vec::new(),
        }
    }

    fn len(&self) -> usize {
        self.rows.len()
    }

    fn col(&self, c: usize) -> &[f64] {
        &self.j[c * self.p..(c + 1) * self.p]
    }

    fn rotate_j(&mut self, a: usize, c: f64, s: f64) {
        let p = self.p;
        let (left, right) = self.j.split_at_mut((a + 1) * p);
        rotate_pair(&mut left[a * p..], &mut right[..p], c, s);
    }

    /// `d = Jᵀ n`.
    fn project(&self, row: &Row) -> Vec<f64> {
        (0..self.p)
            .map(|i| {
                let col = self.col(i);
                row.coefs.iter().map(|(k, c)| col[*k] * c).sum()
            })
            .collect()
    }

    /// Primal direction `z = J₂ d₂`, dual direction `r = R^{-1} d₁` and `||d₂||²`.
    fn directions(&self, d: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
        let q = self.len();
        let p = self.p;
        let mut z = vec![0.0; p];
        let mut d2 = 0.0;
        for col in q..p {
            let dc = d[col];
            d2 += dc * dc;
            if dc != 0.0 {
                for (zi, jc) in z.iter_mut().zip(self.col(col)) {
                    *zi += jc * dc;
                }
            }
        }
        (z, self.solve_r(&d[..q]), d2)
    }

    /// `R^{-1} v` by column-oriented back substitution.
    fn solve_r(&self, v: &[f64]) -> Vec<f64> {
        let p = self.p;
        let mut out = v.to_vec();
        for k in (0..out.len()).rev() {
            let col = &self.r[k * p..k * p + k + 1];
            out[k] /= col[k];
            let xk = out[k];
            for (o, rc) in out[..k].iter_mut().zip(col) {
                *o -= rc * xk;
            }
        }
        out
    }

    /// `R^{-T} v` by forward substitution.
    fn solve_rt(&self, v: &[f64]) -> Vec<f64> {
        let p = self.p;
        let mut out = v.to_vec();
        for k in 0..out.len() {
            let col = &self.r[k * p..k * p + k + 1];
            let acc: f64 = col[..k].iter().zip(&out[..k]).map(|(a, b)| a * b).sum();
            out[k] = (out[k] - acc) / col[k];
        }
        out
    }

    /// Appends `row`, whose projection is `d = Jᵀn`. A Householder
    /// reflection of the null-space columns maps `d₂` onto its first entry.
    fn add(&mut self, mut d: Vec<f64>, row: &'a Row, equality: bool) {
        let q = self.len();
        let p = self.p;
        if q + 1 < p {
            let mut v = d[q..].to_vec();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let alpha = if v[0] > 0.0 { -norm } else { norm };
            v[0] -= alpha;
            let vv: f64 = v.iter().map(|x| x * x).sum();
            if vv > 0.0 {
                let mut w = vec![0.0; p];
                for (c, vc) in v.iter().enumerate() {
                    if *vc != 0.0 {
                        for (wi, jc) in w.iter_mut().zip(self.col(q + c)) {
                            *wi += vc * jc;
                        }
                    }
                }
                let scale = 2.0 / vv;
                for (c, vc) in v.iter().enumerate() {
                    let f = scale * vc;
                    if f != 0.0 {
                        let col = &mut self.j[(q + c) * p..(q + c + 1) * p];
                        for (jc, wi) in col.iter_mut().zip(&w) {
                            *jc -= f * wi;
                        }
                    }
                }
                d[q] = alpha;
            }
        }
        self.r[q * p..q * p + q + 1].copy_from_slice(&d[..=q]);
        self.rows.push(row);
        self.equality.push(equality);
    }

    fn drop_at(&mut self, l: usize) {
        let q = self.len();
        let p = self.p;
        for col in l..q - 1 {
            let src = (col + 1) * p;
            self.r.copy_within(src..src + col + 2, col * p);
        }
        self.r[(q - 1) * p..(q - 1) * p + q].fill(0.0);
        for jj in l..q - 1 {
            let (a, b) = (self.r[jj * p + jj], self.r[jj * p + jj + 1]);
            if b == 0.0 {
                continue;
            }
            let (c, s, h) = givens(a, b);
            self.r[jj * p + jj] = h;
            self.r[jj * p + jj + 1] = 0.0;
            for k in jj + 1..q - 1 {
                let (x, y) = (self.r[k * p + jj], self.r[k * p + jj + 1]);
                self.r[k * p + jj] = c * x + s * y;
                self.r[k * p + jj + 1] = -s * x + c * y;
            }
            self.rotate_j(jj, c, s);
        }
        self.rows.remove(l);
        self.u.remove(l);
        self.equality.remove(l);
    }

    /// Minimizer and multipliers of the problem with every active constraint
    /// held as an equality: `x = J₁R^{-T}b + J₂J₂ᵀa`, `u = R^{-1}(R^{-T}b - J₁ᵀa)`.
    fn equality_solution(&mut self, a: &[f64]) -> Vec<f64> {
        let q = self.len();
        let b: Vec<f64> = self.rows.iter().map(|r| r.rhs).collect();
        let y1 = self.solve_rt(&b);
        let mut x = vec![0.0; self.p];
        let mut resid = Vec::with_capacity(q);
        for col in 0..self.p {
            let jc = self.col(col);
            let jta: f64 = jc.iter().zip(a).map(|(u, v)| u * v).sum();
            let coef = if col < q {
                resid.push(y1[col] - jta);
                y1[col]
            } else {
                jta
            };
            for (xi, v) in x.iter_mut().zip(jc) {
                *xi += coef * v;
            }
        }
        self.u = self.solve_r(&resid);
        x
    }
}

impl ActiveSet<'_> {
    /// Moves `x` by the smallest `G`-norm correction that makes every active
    /// constraint exactly tight.
    fn refine(&self, x: &mut [f64]) {
        let resid: Vec<f64> = self.rows.iter().map(|r| -r.slack(x)).collect();
        let y = self.solve_rt(&resid);
        for (col, yc) in y.iter().enumerate() {
            for (xi, v) in x.iter_mut().zip(self.col(col)) {
                *xi += yc * v;
            }
        }
    }
}

/// State at the end of a solve: the factorized active set with its primal and
/// dual values. A solve with the same factor and constraints but different
/// targets can start from it.
#[derive(Debug, Clone)]
pub struct WarmStart {
    x: Vec<f64>,
    u: Vec<f64>,
    j: Vec<f64>,
    r: Vec<f64>,
    active: Vec<(usize, bool)>,
}

impl WarmStart {
    pub fn active_len(&self) -> usize {
        self.active.len()
    }
}

struct Solver<'t> {
    table: &'t RowTable,
    set: ActiveSet<'t>,
    x: Vec<f64>,
    is_active: Vec<bool>,
    iterations: usize,
    max_iter: usize,
}

impl<'t> Solver<'t> {
    fn new(factor: &QpFactor, table: &'t RowTable, set: ActiveSet<'t>, x: Vec<f64>) -> Self {
        let mut is_active = vec![false; table.rows.len()];
        for row in &set.rows {
            is_active[row.id] = true;
        }
        Self {
            table,
            set,
            x,
            is_active,
            iterations: 0,
            max_iter: 10 * table.rows.len().max(factor.p),
        }
    }

    fn tick(&mut self) -> Result<()> {
        self.iterations += 1;
        if self.iterations > self.max_iter {
            return Err(Error::Numerical(format!(
                "active-set iteration cap {} exceeded with {} active constraints",
                self.max_iter,
                self.set.len()
            )));
        }
        Ok(())
    }

    fn drop_at(&mut self, l: usize) {
        self.is_active[self.set.rows[l].id] = false;
        self.set.drop_at(l);
    }

    /// Dual step that makes `row` active, releasing blocking constraints on
    /// the way.
    fn add_constraint(&mut self, row: &'t Row, equality: bool) -> Result<()> {
        let mut u_new = 0.0;
        loop {
            self.tick()?;
            let d = self.set.project(row);
            let (z, r, d2) = self.set.directions(&d);
            let dnorm2: f64 = d.iter().map(|v| v * v).sum();
            let slack = row.slack(&self.x);

            let mut t1 = f64::INFINITY;
            let mut l = usize::MAX;
            for (k, rk) in r.iter().enumerate() {
                if !self.set.equality[k] && *rk > 0.0 {
                    let ratio = self.set.u[k] / rk;
                    if ratio < t1 {
                        t1 = ratio;
                        l = k;
                    }
                }
            }
            let t2 = if d2 > 1e-24 * dnorm2 {
                (-slack / d2).max(0.0)
            } else {
                f64::INFINITY
            };

            if t1.is_infinite() && t2.is_infinite() {
                return Err(Error::Infeasible);
            }
            let t = t1.min(t2);
            if t2.is_finite() {
                for (xi, zi) in self.x.iter_mut().zip(&z) {
                    *xi += t * zi;
                }
            }
            for (uk, rk) in self.set.u.iter_mut().zip(&r) {
                *uk -= t * rk;
            }
            u_new += t;
            if t2 <= t1 {
                self.set.add(d, row, equality);
                self.set.u.push(u_new);
                self.is_active[row.id] = true;
                return Ok(());
            }
            self.drop_at(l);
        }
    }

    fn most_violated(&self) -> Option<&'t Row> {
        let mut best: Option<(&Row, f64)> = None;
        for &id in &self.table.inequalities {
            if self.is_active[id] {
                continue;
            }
            let row = &self.table.rows[id];
            let s = row.slack(&self.x) / row.norm;
            if s < -VIOLATION_TOL && best.is_none_or(|(_, bs)| s < bs) {
                best = Some((row, s));
            }
        }
        best.map(|(row, _)| row)
    }

    /// Adds the most violated constraint until none is left.
    fn run_dual(&mut self) -> Result<()> {
        while let Some(row) = self.most_violated() {
            self.add_constraint(row, false)?;
        }
        Ok(())
    }

    /// Adds every equality not yet active, oriented against the current point.
    fn add_equalities(&mut self) -> Result<()> {
        for &id in &self.table.equalities {
            let row = self.table.oriented(id, &self.x);
            if !self.is_active[row.id] && row.partner.is_none_or(|o| !self.is_active[o]) {
                self.add_constraint(row, true)?;
            }
        }
        Ok(())
    }

    /// Equality-constrained minimizer on the current active set, releasing
    /// the inequality with the most negative multiplier until none is left.
    fn release_negative(&mut self, a: &[f64]) -> Result<()> {
        self.x = self.set.equality_solution(a);
        loop {
            let worst = (0..self.set.len())
                .filter(|&k| !self.set.equality[k] && self.set.u[k] < 0.0)
                .min_by(|&i, &j| self.set.u[i].total_cmp(&self.set.u[j]));
            match worst {
                Some(l) => {
                    self.tick()?;
                    self.drop_at(l);
                    self.x = self.set.equality_solution(a);
                }
                None => return Ok(()),
            }
        }
    }

    fn warm_start(&self) -> WarmStart {
        WarmStart {
            x: self.x.clone(),
            u: self.set.u.clone(),
            j: self.set.j.clone(),
            r: self.set.r.clone(),
            active: self
                .set
                .rows
                .iter()
                .map(|r| r.id)
                .zip(self.set.equality.iter().copied())
                .collect(),
        }
    }
}

/// Solves the projection problem from scratch.
pub fn solve_qls(problem: &QpProblem) -> Result<QpSolution> {
    let factor = QpFactor::new(&problem.design)?;
    solve_with_factor(&factor, &problem.constraints, &problem.targets, None)
}

/// Solves with a precomputed factor.
///
/// `hint` lists constraint ids (multiplier layout) that were active in a
/// related solve. They seed the active set: the equality-constrained
/// minimizer on the hinted set is computed directly, constraints with
/// negative multipliers are released, and the dual iterations continue from
/// there. The result does not depend on the hint beyond round-off.
pub fn solve_with_factor(
    factor: &QpFactor,
    system: &ConstraintSystem,
    targets: &[f64],
    hint: Option<&[usize]>,
) -> Result<QpSolution> {
    solve_with_state(factor, system, targets, hint).map(|(sol, _)| sol)
}

fn check_shapes(factor: &QpFactor, system: &ConstraintSystem, targets: &[f64]) -> Result<()> {
    check_len(factor.p, system.num_coefficients())?;
    check_len(factor.q_points, targets.len())
}

/// As [`solve_with_factor`], also returning the final state for warm starts.
pub fn solve_with_state(
    factor: &QpFactor,
    system: &ConstraintSystem,
    targets: &[f64],
    hint: Option<&[usize]>,
) -> Result<(QpSolution, WarmStart)> {
    check_shapes(factor, system, targets)?;
    let table = RowTable::new(system);
    let a = factor.linear_term(targets);
    let j0 = &factor.r_inv;
    let x0: Vec<f64> = {
        let av = nalgebra::DVector::from_column_slice(&a);
        (j0 * (j0.transpose() * av)).iter().copied().collect()
    };
    let mut solver = Solver::new(factor, &table, ActiveSet::new(j0), x0);

    if let Some(hint) = hint {
        let n_rows = table.rows.len();
        let mut hinted = vec![false; n_rows];
        for &id in hint.iter().filter(|&&id| id < n_rows) {
            hinted[id] = true;
        }
        let seeds = table
            .equalities
            .iter()
            .map(|&id| (table.oriented(id, &solver.x), true))
            .chain(
                table
                    .inequalities
                    .iter()
                    .filter(|&&id| hinted[id])
                    .map(|&id| (&table.rows[id], false)),
            );
        let mut seeded_eq = 0;
        for (row, equality) in seeds {
            let d = solver.set.project(row);
            let dnorm2: f64 = d.iter().map(|v| v * v).sum();
            let d2: f64 = d[solver.set.len()..].iter().map(|v| v * v).sum();
            // skip rows that are (nearly) dependent on those already held
            if d2 > 1e-16 * dnorm2 {
                solver.set.add(d, row, equality);
                solver.is_active[row.id] = true;
                seeded_eq += usize::from(equality);
            }
        }
        if seeded_eq < table.equalities.len() {
            // a pin was dependent on the seeds; restart cold
            return solve_with_state(factor, system, targets, None);
        }
        solver.release_negative(&a)?;
    }

    solver.add_equalities()?;
    solver.run_dual()?;
    Ok(finish(factor, system, &a, solver))
}

/// Solves for new targets starting from the factorized active set of a
/// previous solve with the same factor and constraints. As with a hint,
/// constraints with negative multipliers at the new targets are released
/// before the dual iterations resume; the factorization is reused instead of
/// rebuilt.
pub fn solve_from(
    factor: &QpFactor,
    system: &ConstraintSystem,
    targets: &[f64],
    warm: &WarmStart,
) -> Result<QpSolution> {
    check_shapes(factor, system, targets)?;
    let table = RowTable::new(system);
    if warm.x.len() != factor.p || warm.active.iter().any(|(id, _)| *id >= table.rows.len()) {
        return Err(Error::domain("warm start does not match the problem"));
    }
    let a = factor.linear_term(targets);
    let set = ActiveSet {
        p: factor.p,
        j: warm.j.clone(),
        r: warm.r.clone(),
        rows: warm.active.iter().map(|(id, _)| &table.rows[*id]).collect(),
        u: warm.u.clone(),
        equality: warm.active.iter().map(|(_, eq)| *eq).collect(),
    };
    let mut solver = Solver::new(factor, &table, set, warm.x.clone());
    solver.release_negative(&a)?;
    solver.add_equalities()?;
    solver.run_dual()?;
    Ok(finish(factor, system, &a, solver).0)
}

fn finish(factor: &QpFactor, system: &ConstraintSystem, a: &[f64], mut solver: Solver<'_>) -> (QpSolution, WarmStart) {
    solver.set.refine(&mut solver.x);
    let warm = solver.warm_start();
    let iterations = solver.iterations;
    (assemble(factor, system, a, &solver.set, solver.x, iterations), warm)
}

fn assemble(
    factor: &QpFactor,
    system: &ConstraintSystem,
    a: &[f64],
    set: &ActiveSet<'_>,
    x: Vec<f64>,
    iterations: usize,
) -> QpSolution {
    let n_mult = system.num_rows() + 2 * factor.p;
    let mut multipliers = vec![0.0; n_mult];
    let mut active_set = Vec::with_capacity(set.len());
    for ((row, &u), &eq) in set.rows.iter().zip(&set.u).zip(&set.equality) {
        match row.partner {
            Some(other) if eq && u < 0.0 => {
                multipliers[other] += -u;
                active_set.push(other);
            }
            _ => {
                multipliers[row.id] += u.max(0.0);
                active_set.push(row.id);
            }
        }
    }
    active_set.sort_unstable();

    let mut solution = QpSolution {
        beta_hat: x,
        multipliers,
        iterations,
        kkt_residual: 0.0,
        active_set,
        regularized: factor.regularized,
    };
    solution.kkt_residual = stationarity(factor, system, a, &solution);
    solution
}

/// `Gβ - a - Nᵀu` over all constraint rows, box bounds included.
fn stationarity_vector(factor: &QpFactor, system: &ConstraintSystem, a: &[f64], sol: &QpSolution) -> Vec<f64> {
    let p = factor.p;
    let q = system.num_rows();
    let x = nalgebra::DVector::from_column_slice(&sol.beta_hat);
    let mut g: Vec<f64> = (&factor.gram * x).iter().zip(a).map(|(gx, ai)| gx - ai).collect();
    for (row, &u) in system.rows().iter().zip(&sol.multipliers) {
        if u != 0.0 {
            for &(j, c) in &row.coefs {
                g[j] -= u * c;
            }
        }
    }
    for j in 0..p {
        g[j] -= sol.multipliers[q + j];
        g[j] += sol.multipliers[q + p + j];
    }
    g
}

fn stationarity(factor: &QpFactor, system: &ConstraintSystem, a: &[f64], sol: &QpSolution) -> f64 {
    stationarity_vector(factor, system, a, sol)
        .iter()
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    pub stationarity: f64,
    pub max_primal_violation: f64,
    pub max_complementarity: f64,
    pub min_multiplier: f64,
    pub active: usize,
}

impl KktReport {
    pub fn converged(&self) -> bool {
        self.stationarity <= 1e-8
            && self.max_primal_violation <= 1e-10
            && self.max_complementarity <= 1e-8
            && self.min_multiplier >= 0.0
    }
}

/// KKT diagnostics of `solution` for `problem`.
pub fn kkt_report(solution: &QpSolution, problem: &QpProblem) -> Result<KktReport> {
    let factor = QpFactor::new(&problem.design)?;
    kkt_report_with_factor(solution, &factor, &problem.constraints, &problem.targets)
}

pub fn kkt_report_with_factor(
    solution: &QpSolution,
    factor: &QpFactor,
    system: &ConstraintSystem,
    targets: &[f64],
) -> Result<KktReport> {
    let p = factor.p;
    check_len(p, solution.beta_hat.len())?;
    check_len(system.num_rows() + 2 * p, solution.multipliers.len())?;
    let a = factor.linear_term(targets);
    let beta = &solution.beta_hat;
    let mut slacks = system.slacks(beta)?;
    slacks.extend(beta.iter().copied());
    slacks.extend(beta.iter().map(|b| 1.0 - b));
    let max_primal_violation = slacks.iter().fold(0.0f64, |m, s| m.max(-s));
    let max_complementarity = slacks
        .iter()
        .zip(&solution.multipliers)
        .fold(0.0f64, |m, (s, u)| m.max((s * u).abs()));
    Ok(KktReport {
        stationarity: stationarity(factor, system, &a, solution),
        max_primal_violation,
        max_complementarity,
        min_multiplier: solution.multipliers.iter().copied().fold(f64::INFINITY, f64::min),
        active: solution.multipliers.iter().filter(|u| **u > 0.0).count(),
    })
}

/// `Q^{-1} ||Bβ - y||²`.
pub fn objective(problem: &QpProblem, beta: &[f64]) -> f64 {
    let x = nalgebra::DVector::from_column_slice(beta);
    let fitted = &problem.design * x;
    fitted
        .iter()
        .zip(&problem.targets)
        .map(|(f, y)| (f - y).powi(2))
        .sum::<f64>()
        / problem.targets.len() as f64
}

/// Half objective up to a constant; exposed for tests comparing solutions.
pub fn half_objective(factor: &QpFactor, targets: &[f64], beta: &[f64]) -> f64 {
    factor.half_objective(&factor.linear_term(targets), beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bernstein::{simplex_grid, BernsteinBasis};
    use crate::constraints::{build_constraints, check_feasible};

    fn problem(d: usize, k: usize, m: usize, f: impl Fn(&[f64]) -> f64) -> QpProblem {
        let basis = BernsteinBasis::new(d, k).unwrap();
        let grid = simplex_grid(d, m).unwrap();
        QpProblem {
            design: basis.design_matrix(&grid).unwrap(),
            targets: grid.iter().map(|w| f(w.coords())).collect(),
            constraints: build_constraints(d, k).unwrap(),
        }
    }

    #[test]
    fn noise_free_feasible_coefficients_are_recovered() {
        let basis = BernsteinBasis::new(3, 4).unwrap();
        let star = basis
            .operator(|w| Ok((w.coords().iter().map(|c| c * c).sum::<f64>()).sqrt()))
            .unwrap();
        let sys = build_constraints(3, 4).unwrap();
        assert!(check_feasible(&star, &sys, 0.0).unwrap().satisfied);
        let grid = simplex_grid(3, 12).unwrap();
        let prob = QpProblem {
            design: basis.design_matrix(&grid).unwrap(),
            targets: grid.iter().map(|w| basis.evaluate(&star, w).unwrap()).collect(),
            constraints: sys,
        };
        let sol = solve_qls(&prob).unwrap();
        for (b, s) in sol.beta_hat.iter().zip(&star) {
            assert!((b - s).abs() < 1e-8);
        }
        let report = kkt_report(&sol, &prob).unwrap();
        assert!(report.converged(), "{report:?}");
    }

    #[test]
    fn constant_above_cap_projects_to_ones() {
        let prob = problem(3, 5, 14, |_| 1.2);
        let sol = solve_qls(&prob).unwrap();
        for b in &sol.beta_hat {
            assert!((b - 1.0).abs() < 1e-9, "{b}");
        }
        assert!(kkt_report(&sol, &prob).unwrap().converged());
    }

    #[test]
    fn interior_least_squares_has_zero_multipliers() {
        let prob = problem(2, 4, 30, |w| 1.0 - 0.3 * w[0] * w[1]);
        let sol = solve_qls(&prob).unwrap();
        assert!(sol.multipliers.iter().all(|u| u.abs() < 1e-12));
        let unconstrained = {
            let b = &prob.design;
            let y = nalgebra::DVector::from_column_slice(&prob.targets);
            (b.transpose() * b).lu().solve(&(b.transpose() * y)).unwrap()
        };
        for (x, y) in sol.beta_hat.iter().zip(unconstrained.iter()) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn determinism_and_hint() {
        let prob = problem(3, 6, 16, |w| 0.8 + 0.4 * (w[0] - 0.3).powi(2) - 0.2 * w[2]);
        let a = solve_qls(&prob).unwrap();
        let b = solve_qls(&prob).unwrap();
        assert_eq!(a.beta_hat, b.beta_hat);
        let factor = QpFactor::new(&prob.design).unwrap();
        let c = solve_with_factor(&factor, &prob.constraints, &prob.targets, Some(&a.active_set)).unwrap();
        for (x, y) in a.beta_hat.iter().zip(&c.beta_hat) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn warm_state_reproduces_cold_solution() {
        let prob = problem(3, 7, 18, |w| 0.75 + 0.5 * (w[0] - 0.4).powi(2) + 0.1 * w[1] * w[2]);
        let factor = QpFactor::new(&prob.design).unwrap();
        let (_, warm) = solve_with_state(&factor, &prob.constraints, &prob.targets, None).unwrap();
        let shifted: Vec<f64> = prob
            .targets
            .iter()
            .enumerate()
            .map(|(i, y)| y + 0.02 * ((i % 5) as f64 - 2.0))
            .collect();
        let cold = solve_with_factor(&factor, &prob.constraints, &shifted, None).unwrap();
        let hot = solve_from(&factor, &prob.constraints, &shifted, &warm).unwrap();
        for (x, y) in cold.beta_hat.iter().zip(&hot.beta_hat) {
            assert!((x - y).abs() < 1e-9);
        }
        let report = kkt_report_with_factor(&hot, &factor, &prob.constraints, &shifted).unwrap();
        assert!(report.converged(), "{report:?}");
    }

    #[test]
    fn report_flags_infeasible_point() {
        let prob = problem(2, 3, 10, |w| w[0].max(w[1]));
        let mut sol = solve_qls(&prob).unwrap();
        sol.beta_hat[0] = 0.4;
        assert!(kkt_report(&sol, &prob).unwrap().max_primal_violation > 0.5);
    }

    #[test]
    fn undersampled_design_is_rejected() {
        let basis = BernsteinBasis::new(3, 6).unwrap();
        let grid = simplex_grid(3, 3).unwrap();
        let design = basis.design_matrix(&grid).unwrap();
        assert!(matches!(QpFactor::new(&design), Err(Error::RankDeficient(_))));
    }
}
