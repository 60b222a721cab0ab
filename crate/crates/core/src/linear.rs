//! Small-angle linearization, single-axis step metrics and loop crossover.
//!
//! With `R_e ≈ I + ξ^×` and `η = ω_e` the closed loop becomes
//!
//! ```text
//! ξ̇ = η,   Jη̇ = C_K x_K + D_θ ξ + (D_ω − Γ) η,   ẋ_K = A_K x_K + B_θ ξ + B_ω η.
//! ```
//!
//! Step metrics use decoupled axes: the plant `1/(J_ii s²)` closed through
//! input column `i` and output row `i` of the compensator.

use nalgebra::{Complex, DMatrix, DVector, RowDVector};
use serde::Serialize;

use crate::compensator::CompensatorRealization;
use crate::so3::Mat3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinearError {
    #[error("inertia is not invertible")]
    SingularInertia,
    #[error("eigenvalue iteration did not converge")]
    NoConvergence,
    #[error("closed loop is not asymptotically stable (spectral abscissa {0:.3e})")]
    UnstableLoop(f64),
    #[error("loop gain never crosses unity in [{lo:.1e}, {hi:.1e}] rad/s")]
    NoCrossover { lo: f64, hi: f64 },
    #[error("axis index {0} out of range")]
    BadAxis(usize),
}

/// System matrix over `(ξ, η, x_K)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClosedLoop {
    pub a: DMatrix<f64>,
    pub n: usize,
}

fn dm3(m: &Mat3) -> DMatrix<f64> {
    DMatrix::from_column_slice(3, 3, m.as_slice())
}

pub fn linearize_closed_loop(k: &CompensatorRealization, j: &Mat3) -> Result<LinearClosedLoop, LinearError> {
    let ji = dm3(&j.try_inverse().ok_or(LinearError::SingularInertia)?);
    let n = k.n();
    let mut a = DMatrix::zeros(6 + n, 6 + n);
    a.view_mut((0, 3), (3, 3)).fill_with_identity();
    a.view_mut((3, 0), (3, 3)).copy_from(&(&ji * dm3(&k.d_theta)));
    a.view_mut((3, 3), (3, 3)).copy_from(&(&ji * dm3(&k.effective_d_omega())));
    a.view_mut((3, 6), (3, n)).copy_from(&(&ji * &k.c_k));
    a.view_mut((6, 0), (n, 3)).copy_from(&k.b_theta);
    a.view_mut((6, 3), (n, 3)).copy_from(&k.b_omega);
    a.view_mut((6, 6), (n, n)).copy_from(&k.a_k);
    Ok(LinearClosedLoop { a, n })
}

impl LinearClosedLoop {
    pub fn spectral_abscissa(&self) -> Result<f64, LinearError> {
        spectral_abscissa(&self.a)
    }
}

/// Eigenvalues of a real square matrix.
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<Complex<f64>>, LinearError> {
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    let schur = a.clone().try_schur(1e-14, 10_000).ok_or(LinearError::NoConvergence)?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Largest real part of the eigenvalues.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> Result<f64, LinearError> {
    Ok(eigenvalues(a)?.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max))
}

/// One decoupled axis: compensator restricted to states that are both driven
/// by the axis inputs and seen by the axis output.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisLoop {
    pub axis: usize,
    pub j: f64,
    pub a: DMatrix<f64>,
    pub b_theta: DVector<f64>,
    pub b_omega: DVector<f64>,
    pub c: RowDVector<f64>,
    pub d_theta: f64,
    pub d_omega: f64,
}

fn closure(adj: impl Fn(usize, usize) -> bool, n: usize, seeds: Vec<usize>) -> Vec<bool> {
    let mut seen = vec![false; n];
    let mut stack = seeds;
    while let Some(v) = stack.pop() {
        if seen[v] {
            continue;
        }
        seen[v] = true;
        stack.extend((0..n).filter(|&w| !seen[w] && adj(v, w)));
    }
    seen
}

impl AxisLoop {
    pub fn extract(k: &CompensatorRealization, j: &Mat3, axis: usize) -> Result<Self, LinearError> {
        if axis > 2 {
            return Err(LinearError::BadAxis(axis));
        }
        let n = k.n();
        let a = &k.a_k;
        // state v feeds w when A[w, v] ≠ 0
        let driven = closure(|v, w| a[(w, v)] != 0.0, n, (0..n).filter(|&s| k.b_theta[(s, axis)] != 0.0 || k.b_omega[(s, axis)] != 0.0).collect());
        let seen = closure(|v, w| a[(v, w)] != 0.0, n, (0..n).filter(|&s| k.c_k[(axis, s)] != 0.0).collect());
        let keep: Vec<usize> = (0..n).filter(|&s| driven[s] && seen[s]).collect();
        let m = keep.len();
        Ok(AxisLoop {
            axis,
            j: j[(axis, axis)],
            a: DMatrix::from_fn(m, m, |r, c| a[(keep[r], keep[c])]),
            b_theta: DVector::from_fn(m, |r, _| k.b_theta[(keep[r], axis)]),
            b_omega: DVector::from_fn(m, |r, _| k.b_omega[(keep[r], axis)]),
            c: RowDVector::from_fn(m, |_, c| k.c_k[(axis, keep[c])]),
            d_theta: k.d_theta[(axis, axis)],
            d_omega: k.effective_d_omega()[(axis, axis)],
        })
    }

    pub fn states(&self) -> usize {
        self.a.nrows()
    }

    /// Closed loop over `(θ, θ̇, x)` driven by an attitude command `r`, with
    /// the compensator seeing `ξ = θ − r`, `η = θ̇`.
    pub fn closed_loop(&self) -> (DMatrix<f64>, DVector<f64>) {
        let m = self.states();
        let mut a = DMatrix::zeros(m + 2, m + 2);
        let mut b = DVector::zeros(m + 2);
        a[(0, 1)] = 1.0;
        a[(1, 0)] = self.d_theta / self.j;
        a[(1, 1)] = self.d_omega / self.j;
        for c in 0..m {
            a[(1, 2 + c)] = self.c[c] / self.j;
            a[(2 + c, 0)] = self.b_theta[c];
            a[(2 + c, 1)] = self.b_omega[c];
        }
        a.view_mut((2, 2), (m, m)).copy_from(&self.a);
        b[1] = -self.d_theta / self.j;
        for c in 0..m {
            b[2 + c] = -self.b_theta[c];
        }
        (a, b)
    }

    /// `(G_θ(s), G_ω(s))`: compensator responses from attitude and rate error.
    pub fn compensator_response(&self, s: Complex<f64>) -> (Complex<f64>, Complex<f64>) {
        let m = self.states();
        let mut si = self.a.map(|v| Complex::new(-v, 0.0));
        for i in 0..m {
            si[(i, i)] += s;
        }
        let lu = si.lu();
        let solve = |b: &DVector<f64>| {
            let rhs = b.map(|v| Complex::new(v, 0.0));
            let x = lu.solve(&rhs).unwrap_or_else(|| DVector::from_element(m, Complex::new(f64::NAN, f64::NAN)));
            (0..m).map(|i| x[i] * self.c[i]).sum::<Complex<f64>>()
        };
        (solve(&self.b_theta) + self.d_theta, solve(&self.b_omega) + self.d_omega)
    }

    /// Loop transfer broken at the plant input, `−(G_θ + sG_ω)/(J s²)`.
    pub fn loop_gain(&self, w: f64) -> Complex<f64> {
        let s = Complex::new(0.0, w);
        let (gt, gw) = self.compensator_response(s);
        -(gt + s * gw) / (s * s * self.j)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepMetrics {
    pub rise: f64,
    pub settle: f64,
    pub overshoot_pct: f64,
    pub final_value: f64,
}

pub const STEP_DT: f64 = 1e-5;
pub const STEP_HORIZON: f64 = 1.0;

/// Unit-step response sampled exactly (zero-order hold on a constant input).
pub fn step_response(a: &DMatrix<f64>, b: &DVector<f64>, dt: f64, horizon: f64) -> Vec<f64> {
    let n = a.nrows();
    let mut aug = DMatrix::zeros(n + 1, n + 1);
    aug.view_mut((0, 0), (n, n)).copy_from(&(a * dt));
    aug.view_mut((0, n), (n, 1)).copy_from(&(b * dt));
    let e = aug.exp();
    let phi = e.view((0, 0), (n, n)).into_owned();
    let gam = e.view((0, n), (n, 1)).column(0).into_owned();
    let steps = (horizon / dt).round() as usize;
    let mut x = DVector::zeros(n);
    let mut y = Vec::with_capacity(steps + 1);
    y.push(x[0]);
    for _ in 0..steps {
        x = &phi * &x + &gam;
        y.push(x[0]);
    }
    y
}

fn crossing_time(y: &[f64], dt: f64, level: f64) -> Option<f64> {
    let i = y.iter().position(|&v| v >= level)?;
    if i == 0 {
        return Some(0.0);
    }
    Some(dt * ((i - 1) as f64 + (level - y[i - 1]) / (y[i] - y[i - 1])))
}

/// Rise (10→90 %), settling (2 % band) and overshoot of a sampled response
/// relative to `final_value`.
pub fn metrics_from_samples(y: &[f64], dt: f64, final_value: f64) -> StepMetrics {
    let rise = match (crossing_time(y, dt, 0.1 * final_value), crossing_time(y, dt, 0.9 * final_value)) {
        (Some(a), Some(b)) => b - a,
        _ => f64::INFINITY,
    };
    let band = 0.02 * final_value.abs();
    let settle = match y.iter().rposition(|v| (v - final_value).abs() > band) {
        None => 0.0,
        Some(i) if i + 1 == y.len() => f64::INFINITY,
        Some(i) => {
            let (a, b) = ((y[i] - final_value).abs() - band, (y[i + 1] - final_value).abs() - band);
            dt * (i as f64 + a / (a - b))
        }
    };
    let peak = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let overshoot_pct = ((peak - final_value) / final_value * 100.0).max(0.0);
    StepMetrics { rise, settle, overshoot_pct, final_value }
}

/// Step metrics of one decoupled axis, from an exact discretization at
/// `1e-5` s over `1` s. The final value is the analytic DC gain.
pub fn step_metrics_axis(l: &AxisLoop) -> Result<StepMetrics, LinearError> {
    let (a, b) = l.closed_loop();
    let abscissa = spectral_abscissa(&a)?;
    if abscissa >= 0.0 {
        return Err(LinearError::UnstableLoop(abscissa));
    }
    let xss = a.clone().lu().solve(&(-&b)).ok_or(LinearError::UnstableLoop(abscissa))?;
    let y = step_response(&a, &b, STEP_DT, STEP_HORIZON);
    Ok(metrics_from_samples(&y, STEP_DT, xss[0]))
}

/// First frequency in `[lo, hi]` where `|L(jω)|` falls through `1`, located on
/// a log grid and refined by bisection in `log ω`.
pub fn crossover(l: impl Fn(f64) -> Complex<f64>, lo: f64, hi: f64) -> Result<f64, LinearError> {
    let pts = 2000;
    let at = |k: usize| lo * (hi / lo).powf(k as f64 / pts as f64);
    let mut prev = (at(0), l(at(0)).norm());
    for k in 1..=pts {
        let w = at(k);
        let g = l(w).norm();
        if prev.1 >= 1.0 && g < 1.0 {
            let (mut a, mut b) = (prev.0.ln(), w.ln());
            for _ in 0..100 {
                let m = 0.5 * (a + b);
                if l(m.exp()).norm() >= 1.0 {
                    a = m;
                } else {
                    b = m;
                }
            }
            return Ok((0.5 * (a + b)).exp());
        }
        prev = (w, g);
    }
    Err(LinearError::NoCrossover { lo, hi })
}

pub fn loop_crossover(l: &AxisLoop) -> Result<f64, LinearError> {
    crossover(|w| l.loop_gain(w), 1e-3, 1e5)
}

/// Per-axis report row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxisMetrics {
    pub axis: usize,
    pub rise_ms: f64,
    pub settle_ms: f64,
    pub overshoot_pct: f64,
    pub crossover_rad_s: f64,
}

/// Step metrics and crossover for all three axes.
pub fn axis_metrics(k: &CompensatorRealization, j: &Mat3) -> Result<Vec<AxisMetrics>, LinearError> {
    (0..3)
        .map(|axis| {
            let l = AxisLoop::extract(k, j, axis)?;
            let m = step_metrics_axis(&l)?;
            Ok(AxisMetrics {
                axis,
                rise_ms: m.rise * 1e3,
                settle_ms: m.settle * 1e3,
                overshoot_pct: m.overshoot_pct,
                crossover_rad_s: loop_crossover(&l)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compensator::presets::{inertia, default_leadlag, default_pid};

    #[test]
    fn abscissa_examples() {
        assert_eq!(spectral_abscissa(&DMatrix::zeros(2, 2)).unwrap(), 0.0);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -3.0]));
        assert!((spectral_abscissa(&d).unwrap() + 1.0).abs() < 1e-14);
        // s² + 2s + 5 → −1 ± 2j
        let c = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -5.0, -2.0]);
        assert!((spectral_abscissa(&c).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_controller_is_double_integrator() {
        let z = CompensatorRealization::static_gain(Mat3::zeros(), Mat3::zeros());
        let lin = linearize_closed_loop(&z, &inertia()).unwrap();
        let mut expect = DMatrix::zeros(6, 6);
        expect.view_mut((0, 3), (3, 3)).fill_with_identity();
        assert_eq!(lin.a, expect);
        let l = AxisLoop::extract(&z, &inertia(), 0).unwrap();
        assert!(matches!(step_metrics_axis(&l), Err(LinearError::UnstableLoop(_))));
        assert!(matches!(linearize_closed_loop(&z, &Mat3::zeros()), Err(LinearError::SingularInertia)));
    }

    #[test]
    fn pid_is_stable() {
        let lin = linearize_closed_loop(&default_pid(), &inertia()).unwrap();
        assert_eq!(lin.a.nrows(), 9);
        assert!(lin.spectral_abscissa().unwrap() < 0.0);
    }

    #[test]
    fn axis_extraction_drops_other_axes() {
        let l = AxisLoop::extract(&default_leadlag(), &inertia(), 2).unwrap();
        assert_eq!(l.states(), 3);
        assert_eq!(l.j, 0.0599);
        let p = AxisLoop::extract(&default_pid(), &inertia(), 1).unwrap();
        assert_eq!(p.states(), 1);
    }

    #[test]
    fn integrator_crossover() {
        let w = crossover(|w| Complex::new(10.0, 0.0) / Complex::new(0.0, w), 1e-2, 1e4).unwrap();
        assert!((w - 10.0).abs() < 1e-9);
        let w2 = crossover(|w| Complex::new(20.0, 0.0) / Complex::new(0.0, w), 1e-2, 1e4).unwrap();
        assert!(w2 > w);
        assert!(matches!(crossover(|_| Complex::new(0.5, 0.0), 1.0, 10.0), Err(LinearError::NoCrossover { .. })));
    }

    #[test]
    fn first_order_step_metrics() {
        // ẋ = −x + u: rise ln 9, settling ln 50, no overshoot
        let a = DMatrix::from_element(1, 1, -1.0);
        let b = DVector::from_element(1, 1.0);
        let y = step_response(&a, &b, 1e-4, 6.0);
        let m = metrics_from_samples(&y, 1e-4, 1.0);
        assert!((m.rise - 9f64.ln()).abs() < 1e-6);
        assert!((m.settle - 50f64.ln()).abs() < 1e-6);
        assert_eq!(m.overshoot_pct, 0.0);
    }

    #[test]
    fn overdamped_pd_has_no_overshoot() {
        // J s² + k_ω s + k_θ with heavy damping
        let k = CompensatorRealization::static_gain(Mat3::identity() * -1.0, Mat3::identity() * -2.0);
        let l = AxisLoop::extract(&k, &Mat3::identity(), 0).unwrap();
        let m = step_metrics_axis(&l).unwrap();
        assert_eq!(m.overshoot_pct, 0.0);
        assert!((m.final_value - 1.0).abs() < 1e-12);
    }
}
