//! Affine LMI form of the certification conditions.

use nalgebra::DMatrix;

pub use crate::sdp::{AffineSymBlock, LinearEquality, LmiProblem, NamedSlice, Sense};

use super::{m0_matrix, m_relaxed, p_matrix, schur_n2, schur_n3, tau_matrix, LyapCoeffs, SlackVars};
use crate::compensator::CompensatorRealization;
use crate::so3::{Mat3, Metric};

/// Block names used in certification problems and certificate files.
pub const BLOCK_P: &str = "P";
pub const BLOCK_M: &str = "M";
pub const BLOCK_SCHUR_N2: &str = "schur_N2";
pub const BLOCK_SCHUR_N3: &str = "schur_N3";
pub const BLOCK_TAU: &str = "tau";

/// Decision-vector layout:
/// `p₁₁ | P₂₁ | P₂₂ | P₃₁ | P₃₂ | P₃₃ | τ₁ | τ₂ | N₂ | N₃`.
///
/// Full matrices are stored row-major; `P₃₃`, `N₂`, `N₃` by their upper
/// triangles. `P₂₁`, `P₂₂`, `P₃₂` always appear multiplied by `J`, so their
/// decision entries are the physical entries times `tr(J)/3`.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapLayout {
    pub n: usize,
    pub j_scale: f64,
    pub slices: Vec<NamedSlice>,
}

fn tri(n: usize) -> usize {
    n * (n + 1) / 2
}

impl LyapLayout {
    pub fn new(n: usize, j: &Mat3) -> Self {
        let sizes = [
            ("p11", 1),
            ("P21", 9),
            ("P22", 9),
            ("P31", 3 * n),
            ("P32", 3 * n),
            ("P33", tri(n)),
            ("tau1", 1),
            ("tau2", 1),
            ("N2", 6),
            ("N3", tri(n)),
        ];
        let mut start = 0;
        let slices = sizes
            .iter()
            .map(|&(name, len)| {
                let s = NamedSlice { name: name.to_string(), start, len };
                start += len;
                s
            })
            .collect();
        LyapLayout { n, j_scale: j.trace() / 3.0, slices }
    }

    pub fn len(&self) -> usize {
        self.slices.last().map_or(0, |s| s.start + s.len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn slice<'a>(&self, x: &'a [f64], name: &str) -> &'a [f64] {
        let s = self.slices.iter().find(|s| s.name == name).expect("known slice");
        &x[s.start..s.start + s.len]
    }

    fn slice_mut<'a>(&self, x: &'a mut [f64], name: &str) -> &'a mut [f64] {
        let s = self.slices.iter().find(|s| s.name == name).expect("known slice");
        &mut x[s.start..s.start + s.len]
    }

    pub fn unpack(&self, x: &[f64]) -> (LyapCoeffs, SlackVars) {
        let n = self.n;
        let js = self.j_scale;
        let full = |name, r, c, k: f64| DMatrix::from_row_slice(r, c, self.slice(x, name)) / k;
        let m3 = |name, k: f64| Mat3::from_row_slice(self.slice(x, name)) / k;
        let coeffs = LyapCoeffs {
            p11: x[0],
            p21: m3("P21", js),
            p22: m3("P22", js),
            p31: full("P31", n, 3, 1.0),
            p32: full("P32", n, 3, js),
            p33: sym_from_upper(n, self.slice(x, "P33")),
        };
        let n2 = sym_from_upper(3, self.slice(x, "N2"));
        let slacks = SlackVars {
            tau1: self.slice(x, "tau1")[0],
            tau2: self.slice(x, "tau2")[0],
            n2: Mat3::from_fn(|i, j| n2[(i, j)]),
            n3: sym_from_upper(n, self.slice(x, "N3")),
        };
        (coeffs, slacks)
    }

    /// Inverse of [`unpack`](Self::unpack); symmetric blocks contribute their
    /// upper triangles only.
    pub fn pack(&self, c: &LyapCoeffs, s: &SlackVars) -> Vec<f64> {
        let mut x = vec![0.0; self.len()];
        let js = self.j_scale;
        let put_rows = |dst: &mut [f64], m: &DMatrix<f64>, k: f64| {
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    dst[i * m.ncols() + j] = m[(i, j)] * k;
                }
            }
        };
        x[0] = c.p11;
        put_rows(self.slice_mut(&mut x, "P21"), &super::dm(&c.p21), js);
        put_rows(self.slice_mut(&mut x, "P22"), &super::dm(&c.p22), js);
        put_rows(self.slice_mut(&mut x, "P31"), &c.p31, 1.0);
        put_rows(self.slice_mut(&mut x, "P32"), &c.p32, js);
        upper_into(self.slice_mut(&mut x, "P33"), &c.p33);
        self.slice_mut(&mut x, "tau1")[0] = s.tau1;
        self.slice_mut(&mut x, "tau2")[0] = s.tau2;
        upper_into(self.slice_mut(&mut x, "N2"), &super::dm(&s.n2));
        upper_into(self.slice_mut(&mut x, "N3"), &s.n3);
        x
    }
}

fn sym_from_upper(n: usize, v: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            m[(i, j)] = v[k];
            m[(j, i)] = v[k];
            k += 1;
        }
    }
    m
}

fn upper_into(dst: &mut [f64], m: &DMatrix<f64>) {
    let mut k = 0;
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            dst[k] = 0.5 * (m[(i, j)] + m[(j, i)]);
            k += 1;
        }
    }
}

/// A certification problem together with the layout needed to read its
/// solution back.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificationLmi {
    pub problem: LmiProblem,
    pub layout: LyapLayout,
    pub metric: Metric,
}

/// `𝒫` as an affine block of the layout for `n` compensator states.
pub fn assemble_p(n: usize, j: &Mat3, metric: Metric) -> (AffineSymBlock, LyapLayout) {
    let layout = LyapLayout::new(n, j);
    let block = AffineSymBlock::probe(BLOCK_P, Sense::Psd, layout.len(), |x| p_matrix(&layout.unpack(x).0, j, metric));
    (block, layout)
}

/// `𝓜₀` as an affine block.
pub fn assemble_m0(k: &CompensatorRealization, j: &Mat3) -> (AffineSymBlock, LyapLayout) {
    let layout = LyapLayout::new(k.n(), j);
    let block = AffineSymBlock::probe("M0", Sense::Nsd, layout.len(), |x| m0_matrix(&layout.unpack(x).0, k, j));
    (block, layout)
}

/// Every block of the relaxed certification conditions, evaluated at
/// concrete coefficients in problem order.
pub fn certification_blocks(c: &LyapCoeffs, s: &SlackVars, k: &CompensatorRealization, j: &Mat3, metric: Metric) -> Vec<(&'static str, Sense, DMatrix<f64>)> {
    vec![
        (BLOCK_P, Sense::Psd, p_matrix(c, j, metric)),
        (BLOCK_M, Sense::Nsd, m_relaxed(c, s, k, j)),
        (BLOCK_SCHUR_N2, Sense::PsdNonstrict, schur_n2(c, s, j, metric)),
        (BLOCK_SCHUR_N3, Sense::PsdNonstrict, schur_n3(c, s, metric)),
        (BLOCK_TAU, Sense::Psd, tau_matrix(s)),
    ]
}

/// `𝒫 ⪰ εI`, relaxed `𝓜 ⪯ −εI`, the two Schur blocks `⪰ 0`,
/// `diag(τ₁, τ₂) ⪰ εI`, and symmetry of `P₂₂J` as equalities.
pub fn assemble_certification_lmis(k: &CompensatorRealization, j: &Mat3, metric: Metric, epsilon: f64) -> CertificationLmi {
    let layout = LyapLayout::new(k.n(), j);
    let nv = layout.len();
    let eval = |x: &[f64]| {
        let (c, s) = layout.unpack(x);
        certification_blocks(&c, &s, k, j, metric)
    };
    let blocks = (0..5)
        .map(|b| {
            let at0 = eval(&vec![0.0; nv]);
            let (name, sense) = (at0[b].0, at0[b].1);
            AffineSymBlock::probe(name, sense, nv, |x| eval(x).swap_remove(b).2)
        })
        .collect();

    let asym = |x: &[f64]| {
        let c = layout.unpack(x).0;
        c.p22 * j - (c.p22 * j).transpose()
    };
    let equalities = [(0, 1), (0, 2), (1, 2)]
        .into_iter()
        .map(|(r, col)| {
            let mut e = vec![0.0; nv];
            let mut coeffs = vec![0.0; nv];
            for i in 0..nv {
                e[i] = 1.0;
                coeffs[i] = asym(&e)[(r, col)];
                e[i] = 0.0;
            }
            LinearEquality { coeffs, rhs: 0.0 }
        })
        .collect();

    CertificationLmi {
        problem: LmiProblem { num_vars: nv, slices: layout.slices.clone(), blocks, equalities, epsilon },
        layout,
        metric,
    }
}

/// `1e-6 · (1 + ‖J‖₂)`.
pub fn default_epsilon(j: &Mat3) -> f64 {
    1e-6 * (1.0 + j.singular_values().max())
}
