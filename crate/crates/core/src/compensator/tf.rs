//! Transfer functions and small dense state-space models.

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use super::CompensatorError;

/// Rational transfer function, coefficients in descending powers of `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferFunction {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
}

impl TransferFunction {
    /// Strips leading zeros and checks properness.
    pub fn new(num: Vec<f64>, den: Vec<f64>) -> Result<Self, CompensatorError> {
        let num = strip(num);
        let den = strip(den);
        if den.is_empty() {
            return Err(CompensatorError::ZeroDenominator);
        }
        if num.len() > den.len() {
            return Err(CompensatorError::ImproperTF { num_deg: num.len() - 1, den_deg: den.len() - 1 });
        }
        Ok(TransferFunction { num, den })
    }

    pub fn gain(k: f64) -> Self {
        TransferFunction { num: vec![k], den: vec![1.0] }
    }

    /// `k (s − z₁)…/(s − p₁)…` from real zeros and poles.
    pub fn zpk(zeros: &[f64], poles: &[f64], k: f64) -> Result<Self, CompensatorError> {
        let num = zeros.iter().fold(vec![k], |acc, z| poly_mul(&acc, &[1.0, -z]));
        let den = poles.iter().fold(vec![1.0], |acc, p| poly_mul(&acc, &[1.0, -p]));
        Self::new(num, den)
    }

    pub fn order(&self) -> usize {
        self.den.len() - 1
    }

    pub fn eval(&self, s: Complex<f64>) -> Complex<f64> {
        poly_eval(&self.num, s) / poly_eval(&self.den, s)
    }

    /// Product `self · other`.
    pub fn mul(&self, other: &TransferFunction) -> TransferFunction {
        TransferFunction { num: poly_mul(&self.num, &other.num), den: poly_mul(&self.den, &other.den) }
    }

    pub fn dc_gain(&self) -> f64 {
        self.num.last().copied().unwrap_or(0.0) / self.den.last().copied().unwrap_or(f64::NAN)
    }
}

fn strip(mut p: Vec<f64>) -> Vec<f64> {
    let lead = p.iter().take_while(|c| **c == 0.0).count();
    p.drain(..lead);
    p
}

pub(crate) fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

pub(crate) fn poly_eval(p: &[f64], s: Complex<f64>) -> Complex<f64> {
    p.iter().fold(Complex::new(0.0, 0.0), |acc, c| acc * s + c)
}

/// Dense continuous-time model `ẋ = Ax + Bu, y = Cx + Du`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

impl StateSpace {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self, CompensatorError> {
        let n = a.nrows();
        if a.ncols() != n || b.nrows() != n || c.ncols() != n || d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(CompensatorError::DimensionMismatch(format!(
                "A {}x{}, B {}x{}, C {}x{}, D {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols(),
                c.nrows(),
                c.ncols(),
                d.nrows(),
                d.ncols()
            )));
        }
        Ok(StateSpace { a, b, c, d })
    }

    pub fn gain(k: f64) -> Self {
        StateSpace {
            a: DMatrix::zeros(0, 0),
            b: DMatrix::zeros(0, 1),
            c: DMatrix::zeros(1, 0),
            d: DMatrix::from_element(1, 1, k),
        }
    }

    pub fn states(&self) -> usize {
        self.a.nrows()
    }
    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }
    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    /// Frequency response `C (sI − A)⁻¹ B + D`.
    pub fn eval(&self, s: Complex<f64>) -> DMatrix<Complex<f64>> {
        let n = self.states();
        let d = self.d.map(|x| Complex::new(x, 0.0));
        if n == 0 {
            return d;
        }
        let a = self.a.map(|x| Complex::new(x, 0.0));
        let lhs = DMatrix::<Complex<f64>>::identity(n, n) * s - a;
        let b = self.b.map(|x| Complex::new(x, 0.0));
        let x = lhs.lu().solve(&b).expect("s is an eigenvalue of A");
        self.c.map(|x| Complex::new(x, 0.0)) * x + d
    }

    /// SISO response at `s`.
    pub fn eval_siso(&self, s: Complex<f64>) -> Complex<f64> {
        self.eval(s)[(0, 0)]
    }
}

/// Controllable canonical realization of a proper SISO transfer function.
pub fn tf_to_ss(tf: &TransferFunction) -> Result<StateSpace, CompensatorError> {
    let tf = TransferFunction::new(tf.num.clone(), tf.den.clone())?;
    let n = tf.order();
    let lead = tf.den[0];
    let den: Vec<f64> = tf.den.iter().map(|c| c / lead).collect();
    let mut num = vec![0.0; n + 1 - tf.num.len()];
    num.extend(tf.num.iter().map(|c| c / lead));

    let d0 = num[0];
    let mut a = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, 1);
    let mut c = DMatrix::zeros(1, n);
    for i in 0..n {
        a[(0, i)] = -den[i + 1];
        c[(0, i)] = num[i + 1] - d0 * den[i + 1];
        if i + 1 < n {
            a[(i + 1, i)] = 1.0;
        }
    }
    if n > 0 {
        b[(0, 0)] = 1.0;
    }
    StateSpace::new(a, b, c, DMatrix::from_element(1, 1, d0))
}

/// `second ∘ first`: the output of `first` drives `second`.
pub fn series(first: &StateSpace, second: &StateSpace) -> Result<StateSpace, CompensatorError> {
    if first.outputs() != second.inputs() {
        return Err(CompensatorError::DimensionMismatch(format!(
            "series: {} outputs feed {} inputs",
            first.outputs(),
            second.inputs()
        )));
    }
    let (n1, n2) = (first.states(), second.states());
    let n = n1 + n2;
    let mut a = DMatrix::zeros(n, n);
    a.view_mut((0, 0), (n1, n1)).copy_from(&first.a);
    a.view_mut((n1, 0), (n2, n1)).copy_from(&(&second.b * &first.c));
    a.view_mut((n1, n1), (n2, n2)).copy_from(&second.a);
    let mut b = DMatrix::zeros(n, first.inputs());
    b.view_mut((0, 0), (n1, first.inputs())).copy_from(&first.b);
    b.view_mut((n1, 0), (n2, first.inputs())).copy_from(&(&second.b * &first.d));
    let mut c = DMatrix::zeros(second.outputs(), n);
    c.view_mut((0, 0), (second.outputs(), n1)).copy_from(&(&second.d * &first.c));
    c.view_mut((0, n1), (second.outputs(), n2)).copy_from(&second.c);
    let d = &second.d * &first.d;
    StateSpace::new(a, b, c, d)
}

/// Block-diagonal MIMO model from three SISO channels (one per body axis).
pub fn blockdiag_axes(axes: [&StateSpace; 3]) -> Result<StateSpace, CompensatorError> {
    for (i, g) in axes.iter().enumerate() {
        if g.inputs() != 1 || g.outputs() != 1 {
            return Err(CompensatorError::DimensionMismatch(format!(
                "axis {i} is {}x{}, expected SISO",
                g.outputs(),
                g.inputs()
            )));
        }
    }
    let n: usize = axes.iter().map(|g| g.states()).sum();
    let mut a = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, 3);
    let mut c = DMatrix::zeros(3, n);
    let mut d = DMatrix::zeros(3, 3);
    let mut off = 0;
    for (i, g) in axes.iter().enumerate() {
        let k = g.states();
        a.view_mut((off, off), (k, k)).copy_from(&g.a);
        b.view_mut((off, i), (k, 1)).copy_from(&g.b);
        c.view_mut((i, off), (1, k)).copy_from(&g.c);
        d[(i, i)] = g.d[(0, 0)];
        off += k;
    }
    StateSpace::new(a, b, c, d)
}
