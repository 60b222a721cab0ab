//! Strict LMI feasibility by margin maximization.
//!
//! A problem is a list of symmetric blocks affine in a decision vector `x`,
//! each with a sign sense, plus linear equalities. The solver maximizes `t`
//! subject to `S_k(x) − tI ⪰ 0` for the sign-normalized blocks `S_k`, inside
//! a ball `‖x‖ ≤ R`, using a log-det barrier path-following method with the
//! equalities eliminated up front. Whatever the barrier reports, a point is
//! only called feasible after every block has been re-checked with a dense
//! symmetric eigensolver.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SdpError {
    #[error("matrix is not symmetric (max |M − Mᵀ| = {residual:.3e})")]
    NotSymmetric { residual: f64 },
    #[error("equality constraints are linearly dependent or inconsistent (rank {rank} of {rows})")]
    IllPosed { rank: usize, rows: usize },
    #[error("block `{0}` has inconsistent dimensions")]
    DimensionMismatch(String),
}

/// Required sign of a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    /// `B ⪰ εI`
    Psd,
    /// `B ⪯ −εI`
    Nsd,
    /// `B ⪰ 0`
    PsdNonstrict,
}

impl Sense {
    fn sign(self) -> f64 {
        match self {
            Sense::Nsd => -1.0,
            _ => 1.0,
        }
    }

    /// Smallest admissible eigenvalue of the sign-normalized block.
    pub fn required(self, epsilon: f64) -> f64 {
        match self {
            Sense::PsdNonstrict => 0.0,
            _ => epsilon,
        }
    }
}

/// `B(x) = F₀ + Σᵢ xᵢ Fᵢ` with symmetric `F`'s; zero coefficients are omitted.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineSymBlock {
    pub name: String,
    pub sense: Sense,
    pub constant: DMatrix<f64>,
    pub terms: Vec<(usize, DMatrix<f64>)>,
}

impl AffineSymBlock {
    pub fn new(name: impl Into<String>, sense: Sense, constant: DMatrix<f64>) -> Self {
        AffineSymBlock { name: name.into(), sense, constant, terms: Vec::new() }
    }

    pub fn with_term(mut self, var: usize, coeff: DMatrix<f64>) -> Self {
        self.terms.push((var, coeff));
        self
    }

    /// Builds the affine representation of `f` by evaluating it at `0` and at
    /// every unit vector of a length-`num_vars` decision space.
    pub fn probe(name: impl Into<String>, sense: Sense, num_vars: usize, f: impl Fn(&[f64]) -> DMatrix<f64>) -> Self {
        let mut x = vec![0.0; num_vars];
        let constant = f(&x);
        let mut terms = Vec::new();
        for i in 0..num_vars {
            x[i] = 1.0;
            let fi = f(&x) - &constant;
            x[i] = 0.0;
            if fi.amax() > 0.0 {
                terms.push((i, fi));
            }
        }
        AffineSymBlock { name: name.into(), sense, constant, terms }
    }

    pub fn dim(&self) -> usize {
        self.constant.nrows()
    }

    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = self.constant.clone();
        for (i, f) in &self.terms {
            m += f * x[*i];
        }
        m
    }

    /// `B(x)` for `PSD` senses and `−B(x)` for `NSD`.
    pub fn eval_normalized(&self, x: &[f64]) -> DMatrix<f64> {
        self.eval(x) * self.sense.sign()
    }

    pub fn scaled(&self, k: f64) -> Self {
        AffineSymBlock {
            name: self.name.clone(),
            sense: self.sense,
            constant: &self.constant * k,
            terms: self.terms.iter().map(|(i, f)| (*i, f * k)).collect(),
        }
    }
}

/// `a·x = b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearEquality {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

/// A named contiguous range of the decision vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NamedSlice {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmiProblem {
    pub num_vars: usize,
    pub slices: Vec<NamedSlice>,
    pub blocks: Vec<AffineSymBlock>,
    pub equalities: Vec<LinearEquality>,
    pub epsilon: f64,
}

impl LmiProblem {
    pub fn new(num_vars: usize, epsilon: f64) -> Self {
        LmiProblem { num_vars, slices: Vec::new(), blocks: Vec::new(), equalities: Vec::new(), epsilon }
    }

    pub fn with_block(mut self, b: AffineSymBlock) -> Self {
        self.blocks.push(b);
        self
    }

    pub fn block(&self, name: &str) -> Option<&AffineSymBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }

    /// Every block multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        LmiProblem { blocks: self.blocks.iter().map(|b| b.scaled(k)).collect(), ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), SdpError> {
        for b in &self.blocks {
            let d = b.dim();
            let ok = b.constant.ncols() == d
                && b.terms.iter().all(|(i, f)| *i < self.num_vars && f.nrows() == d && f.ncols() == d);
            if !ok {
                return Err(SdpError::DimensionMismatch(b.name.clone()));
            }
        }
        if let Some(e) = self.equalities.iter().find(|e| e.coeffs.len() != self.num_vars) {
            let _ = e;
            return Err(SdpError::DimensionMismatch("equality".into()));
        }
        Ok(())
    }

    /// Minimum eigenvalue of every sign-normalized block at `x`.
    pub fn margins(&self, x: &[f64]) -> Vec<BlockMargin> {
        self.blocks
            .iter()
            .map(|b| {
                let m = b.eval_normalized(x);
                let min_eig = min_eig_sym(&m).unwrap_or(f64::NAN);
                let required = b.sense.required(self.epsilon);
                BlockMargin { name: b.name.clone(), sense: b.sense, min_eig, required, pass: min_eig >= required }
            })
            .collect()
    }

    pub fn equality_residual(&self, x: &[f64]) -> f64 {
        self.equalities
            .iter()
            .map(|e| (e.coeffs.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() - e.rhs).abs())
            .fold(0.0, f64::max)
    }
}

/// Independent eigenvalue check of one block.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockMargin {
    pub name: String,
    pub sense: Sense,
    /// Smallest eigenvalue of the sign-normalized block.
    pub min_eig: f64,
    pub required: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FeasibilityStatus {
    Feasible,
    CertificateNotFound,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityResult {
    pub status: FeasibilityStatus,
    pub x: DVector<f64>,
    /// Achieved margin `t*`.
    pub margin: f64,
    /// Margin after each outer iteration.
    pub margin_history: Vec<f64>,
    pub iterations: usize,
    pub newton_steps: usize,
    pub block_margins: Vec<BlockMargin>,
}

impl FeasibilityResult {
    pub fn is_feasible(&self) -> bool {
        self.status == FeasibilityStatus::Feasible
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Radius of the ball bounding the decision vector.
    pub radius: f64,
    /// Barrier weight reduction factor per outer iteration.
    pub mu: f64,
    pub newton_tol: f64,
    pub max_outer: usize,
    pub max_newton: usize,
    /// Stop once the duality gap `ν/s` is below this fraction of `t`.
    pub rel_gap: f64,
    pub stall_iters: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { radius: 1e3, mu: 0.2, newton_tol: 1e-8, max_outer: 60, max_newton: 200, rel_gap: 1e-3, stall_iters: 3 }
    }
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eig_sym(m: &DMatrix<f64>) -> Result<f64, SdpError> {
    if m.nrows() != m.ncols() {
        return Err(SdpError::DimensionMismatch("min_eig_sym".into()));
    }
    if m.nrows() == 0 {
        return Ok(f64::INFINITY);
    }
    let residual = (m - m.transpose()).amax();
    if residual > 1e-9 * m.amax().max(1.0) {
        return Err(SdpError::NotSymmetric { residual });
    }
    let s = (m + m.transpose()) * 0.5;
    Ok(SymmetricEigen::new(s).eigenvalues.min())
}

/// `x = x₀ + Z y` parametrizes the equality-feasible set.
struct Elimination {
    x0: DVector<f64>,
    z: DMatrix<f64>,
}

fn eliminate(p: &LmiProblem) -> Result<Elimination, SdpError> {
    let n = p.num_vars;
    let m = p.equalities.len();
    if m == 0 {
        return Ok(Elimination { x0: DVector::zeros(n), z: DMatrix::identity(n, n) });
    }
    let a = DMatrix::from_fn(m, n, |i, j| p.equalities[i].coeffs[j]);
    let b = DVector::from_fn(m, |i, _| p.equalities[i].rhs);
    let aat = &a * a.transpose();
    let eig = SymmetricEigen::new(aat.clone());
    let top = eig.eigenvalues.amax();
    let rank = eig.eigenvalues.iter().filter(|&&l| l > 1e-12 * top.max(f64::MIN_POSITIVE)).count();
    if rank < m || top == 0.0 {
        return Err(SdpError::IllPosed { rank, rows: m });
    }
    let x0 = a.transpose() * aat.cholesky().ok_or(SdpError::IllPosed { rank, rows: m })?.solve(&b);

    let ata = a.transpose() * &a;
    let eig = SymmetricEigen::new(ata);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]).then(i.cmp(&j)));
    let k = n - m;
    let mut z = DMatrix::zeros(n, k);
    for (c, &i) in order.iter().take(k).enumerate() {
        z.set_column(c, &eig.eigenvectors.column(i));
    }
    Ok(Elimination { x0, z })
}

/// A block in reduced coordinates, sign-normalized.
struct Reduced {
    g0: DMatrix<f64>,
    gi: Vec<DMatrix<f64>>,
}

fn reduce(p: &LmiProblem, el: &Elimination) -> Vec<Reduced> {
    let x0 = el.x0.as_slice();
    p.blocks
        .iter()
        .map(|b| {
            let sgn = b.sense.sign();
            let g0 = b.eval(x0) * sgn;
            let d = b.dim();
            let gi = (0..el.z.ncols())
                .map(|c| {
                    let mut m = DMatrix::zeros(d, d);
                    for (i, f) in &b.terms {
                        let w = el.z[(*i, c)];
                        if w != 0.0 {
                            m += f * (w * sgn);
                        }
                    }
                    m
                })
                .collect();
            Reduced { g0, gi }
        })
        .collect()
}

struct Barrier<'a> {
    blocks: &'a [Reduced],
    k: usize,
    r2: f64,
}

impl Barrier<'_> {
    fn matrix(&self, b: &Reduced, v: &DVector<f64>) -> DMatrix<f64> {
        let t = v[self.k];
        let mut g = b.g0.clone();
        for (i, gi) in b.gi.iter().enumerate() {
            if v[i] != 0.0 {
                g += gi * v[i];
            }
        }
        for i in 0..g.nrows() {
            g[(i, i)] -= t;
        }
        g
    }

    fn ball_slack(&self, v: &DVector<f64>) -> f64 {
        self.r2 - v.rows(0, self.k).norm_squared()
    }

    /// `φ = −s t − Σ log det G_k − log(R² − ‖y‖²)`, or `None` outside the domain.
    fn value(&self, v: &DVector<f64>, s: f64) -> Option<f64> {
        let slack = self.ball_slack(v);
        if slack <= 0.0 {
            return None;
        }
        let mut phi = -s * v[self.k] - slack.ln();
        for b in self.blocks {
            let ch = Cholesky::new(self.matrix(b, v))?;
            phi -= 2.0 * ch.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        }
        Some(phi)
    }

    fn grad_hess(&self, v: &DVector<f64>, s: f64) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let k = self.k;
        let p = k + 1;
        let mut g = DVector::zeros(p);
        let mut h = DMatrix::zeros(p, p);
        g[k] = -s;
        for b in self.blocks {
            let ch = Cholesky::new(self.matrix(b, v))?;
            let l = ch.l();
            let d = l.nrows();
            // columns: vec(L⁻¹ D_a L⁻ᵀ) for every direction a
            let mut cols = DMatrix::zeros(d * d, p);
            for a in 0..p {
                let da = if a < k { b.gi[a].clone() } else { -DMatrix::identity(d, d) };
                if da.amax() == 0.0 {
                    continue;
                }
                let y = l.solve_lower_triangular(&da)?;
                let w = l.solve_lower_triangular(&y.transpose())?;
                g[a] -= w.trace();
                cols.set_column(a, &DVector::from_column_slice(w.as_slice()));
            }
            h += cols.transpose() * &cols;
        }
        let slack = self.ball_slack(v);
        let y = v.rows(0, k);
        for i in 0..k {
            g[i] += 2.0 * y[i] / slack;
            h[(i, i)] += 2.0 / slack;
            for j in 0..k {
                h[(i, j)] += 4.0 * y[i] * y[j] / (slack * slack);
            }
        }
        Some((g, h))
    }

    fn newton_direction(h: DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
        let p = h.nrows();
        let mut reg = 0.0;
        for _ in 0..8 {
            let mut hr = h.clone();
            for i in 0..p {
                hr[(i, i)] += reg;
            }
            if let Some(ch) = Cholesky::<f64, Dyn>::new(hr) {
                return Some(-ch.solve(g));
            }
            reg = if reg == 0.0 { 1e-12 * h.diagonal().amax().max(1.0) } else { reg * 100.0 };
        }
        None
    }

    /// Damped Newton centering. Returns the number of steps taken.
    fn center(&self, v: &mut DVector<f64>, s: f64, opts: &SolverOptions) -> usize {
        let mut steps = 0;
        let Some(mut phi) = self.value(v, s) else { return 0 };
        while steps < opts.max_newton {
            let Some((g, h)) = self.grad_hess(v, s) else { break };
            let Some(dv) = Self::newton_direction(h, &g) else { break };
            let slope = g.dot(&dv);
            if -slope / 2.0 <= opts.newton_tol {
                break;
            }
            steps += 1;
            let mut alpha = 1.0;
            let mut accepted = false;
            while alpha > 1e-14 {
                let trial = &*v + &dv * alpha;
                if let Some(f) = self.value(&trial, s) {
                    if f <= phi + 0.25 * alpha * slope {
                        *v = trial;
                        phi = f;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        steps
    }
}

/// Maximizes the common margin `t` of all sign-normalized blocks.
pub fn solve_feasibility(problem: &LmiProblem, opts: &SolverOptions) -> Result<FeasibilityResult, SdpError> {
    problem.validate()?;
    let el = eliminate(problem)?;
    let blocks = reduce(problem, &el);
    let k = el.z.ncols();
    let r2 = (opts.radius * opts.radius - el.x0.norm_squared()).max(opts.radius * opts.radius * 1e-6);
    let bar = Barrier { blocks: &blocks, k, r2 };
    let nu: f64 = blocks.iter().map(|b| b.g0.nrows() as f64).sum::<f64>() + 1.0;

    let mut v = DVector::zeros(k + 1);
    let t0 = blocks
        .iter()
        .map(|b| min_eig_sym(&b.g0).unwrap_or(f64::NAN))
        .fold(f64::INFINITY, f64::min);
    v[k] = if t0.is_finite() { t0 - 1.0 } else { -1.0 };

    let mut s = 1.0;
    let mut history = Vec::new();
    let mut newton_steps = 0;
    let mut stalls = 0;
    let mut status = FeasibilityStatus::MaxIterations;
    let mut best = v.clone();
    for _ in 0..opts.max_outer {
        newton_steps += bar.center(&mut v, s, opts);
        let t = v[k];
        let prev = history.last().copied().unwrap_or(f64::NEG_INFINITY);
        if t >= prev {
            best.copy_from(&v);
        }
        history.push(t.max(prev));
        let gap = nu / s;
        if t < problem.epsilon {
            if t + gap < problem.epsilon {
                status = FeasibilityStatus::CertificateNotFound;
                break;
            }
            if t - prev <= 1e-9 * (1.0 + t.abs()) {
                stalls += 1;
                if stalls >= opts.stall_iters {
                    status = FeasibilityStatus::CertificateNotFound;
                    break;
                }
            } else {
                stalls = 0;
            }
        } else if gap <= opts.rel_gap * t {
            status = FeasibilityStatus::Feasible;
            break;
        }
        s /= opts.mu;
    }

    let x = &el.x0 + &el.z * best.rows(0, k);
    let margin = best[k];
    let block_margins = problem.margins(x.as_slice());
    let verified = block_margins.iter().all(|m| m.pass)
        && problem.equality_residual(x.as_slice()) <= 1e-9 * (1.0 + x.amax());
    if margin >= problem.epsilon && verified {
        status = FeasibilityStatus::Feasible;
    } else if status == FeasibilityStatus::Feasible {
        status = FeasibilityStatus::CertificateNotFound;
    }
    Ok(FeasibilityResult { status, x, margin, iterations: history.len(), margin_history: history, newton_steps, block_margins })
}
