//! Independent verification of a candidate certificate, and its file format.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::lmi::certification_blocks;
use super::{dm, LyapCoeffs, SlackVars};
use crate::compensator::CompensatorRealization;
use crate::sdp::{min_eig_sym, BlockMargin};
use crate::so3::{Mat3, Metric};

/// Per-block eigenvalue margins plus the `P₂₂J` symmetry residual.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateReport {
    pub margins: Vec<BlockMargin>,
    pub symmetry_residual: f64,
    pub pass: bool,
}

impl CertificateReport {
    pub fn margin(&self, name: &str) -> Option<f64> {
        self.margins.iter().find(|m| m.name == name).map(|m| m.min_eig)
    }
}

/// Checks every certification block at the given point with a dense
/// symmetric eigensolver. Strict blocks need margin `ε`, the Schur blocks `0`.
pub fn verify_certificate(c: &LyapCoeffs, s: &SlackVars, k: &CompensatorRealization, j: &Mat3, metric: Metric, epsilon: f64) -> CertificateReport {
    let margins: Vec<BlockMargin> = certification_blocks(c, s, k, j, metric)
        .into_iter()
        .map(|(name, sense, m)| {
            let normalized = if sense == super::Sense::Nsd { -m } else { m };
            let min_eig = min_eig_sym(&normalized).unwrap_or(f64::NAN);
            let required = sense.required(epsilon);
            BlockMargin { name: name.to_string(), sense, min_eig, required, pass: min_eig >= required }
        })
        .collect();
    let p22j = c.p22 * j;
    let symmetry_residual = (p22j - p22j.transpose()).amax();
    let pass = margins.iter().all(|m| m.pass) && symmetry_residual <= 1e-9 * p22j.amax().max(f64::MIN_POSITIVE);
    CertificateReport { margins, symmetry_residual, pass }
}

#[derive(Debug, thiserror::Error)]
pub enum CertificateError {
    #[error("cannot access certificate: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed certificate: {0}")]
    Json(#[from] serde_json::Error),
    #[error("certificate field `{0}` has the wrong shape")]
    Shape(&'static str),
}

/// Certificate file contents. Matrices are row-major nested arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub metric: Metric,
    pub epsilon: f64,
    pub p11: f64,
    #[serde(rename = "P21")]
    pub p21: Vec<Vec<f64>>,
    #[serde(rename = "P22")]
    pub p22: Vec<Vec<f64>>,
    #[serde(rename = "P31")]
    pub p31: Vec<Vec<f64>>,
    #[serde(rename = "P32")]
    pub p32: Vec<Vec<f64>>,
    #[serde(rename = "P33")]
    pub p33: Vec<Vec<f64>>,
    pub tau1: f64,
    pub tau2: f64,
    #[serde(rename = "N2")]
    pub n2: Vec<Vec<f64>>,
    #[serde(rename = "N3")]
    pub n3: Vec<Vec<f64>>,
    pub margins: BTreeMap<String, f64>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn matrix(field: &'static str, v: &[Vec<f64>], r: usize, c: usize) -> Result<DMatrix<f64>, CertificateError> {
    if r * c == 0 && v.iter().all(Vec::is_empty) {
        return Ok(DMatrix::zeros(r, c));
    }
    if v.len() != r || v.iter().any(|row| row.len() != c) {
        return Err(CertificateError::Shape(field));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| v[i][j]))
}

impl Certificate {
    pub fn new(c: &LyapCoeffs, s: &SlackVars, metric: Metric, epsilon: f64, report: &CertificateReport) -> Self {
        Certificate {
            metric,
            epsilon,
            p11: c.p11,
            p21: rows(&dm(&c.p21)),
            p22: rows(&dm(&c.p22)),
            p31: rows(&c.p31),
            p32: rows(&c.p32),
            p33: rows(&c.p33),
            tau1: s.tau1,
            tau2: s.tau2,
            n2: rows(&dm(&s.n2)),
            n3: rows(&s.n3),
            margins: report.margins.iter().map(|m| (m.name.clone(), m.min_eig)).collect(),
        }
    }

    pub fn coeffs(&self) -> Result<(LyapCoeffs, SlackVars), CertificateError> {
        let n = self.p33.len();
        let m3 = |f, v: &[Vec<f64>]| matrix(f, v, 3, 3).map(|m| Mat3::from_fn(|i, j| m[(i, j)]));
        Ok((
            LyapCoeffs {
                p11: self.p11,
                p21: m3("P21", &self.p21)?,
                p22: m3("P22", &self.p22)?,
                p31: matrix("P31", &self.p31, n, 3)?,
                p32: matrix("P32", &self.p32, n, 3)?,
                p33: matrix("P33", &self.p33, n, n)?,
            },
            SlackVars { tau1: self.tau1, tau2: self.tau2, n2: m3("N2", &self.n2)?, n3: matrix("N3", &self.n3, n, n)? },
        ))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CertificateError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CertificateError> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CertificateError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compensator::presets::{inertia, default_pid};

    #[test]
    fn zero_coeffs_fail_on_p() {
        let r = verify_certificate(&LyapCoeffs::zeros(3), &SlackVars::zeros(3), &default_pid(), &inertia(), Metric::Chordal, 1e-6);
        assert!(!r.pass);
        assert_eq!(r.margin("P"), Some(0.0));
    }

    #[test]
    fn round_trip() {
        let mut c = LyapCoeffs::zeros(3);
        c.p11 = 1.25;
        c.p31 = DMatrix::from_fn(3, 3, |i, j| (i * 3 + j) as f64 * 0.1);
        let s = SlackVars { tau1: 0.5, tau2: 0.25, ..SlackVars::zeros(3) };
        let r = verify_certificate(&c, &s, &default_pid(), &inertia(), Metric::PsiQ, 1e-6);
        let cert = Certificate::new(&c, &s, Metric::PsiQ, 1e-6, &r);
        let back = Certificate::from_json(&cert.to_json()).unwrap();
        assert_eq!(back, cert);
        let (c2, s2) = back.coeffs().unwrap();
        assert_eq!((c2, s2), (c, s));
        assert_eq!(cert.margins.len(), 5);
    }
}
