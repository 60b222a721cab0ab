//! JSON controller spec files.
//!
//! ```json
//! {"n": 3, "A_K": [[..]], "B_theta": [[..]], "B_omega": [[..]], "C_K": [[..]],
//!  "D_theta": [[..]], "D_omega": [[..]], "Gamma": [[..]], "metric": "chordal"}
//! ```
//!
//! Matrices are row-major nested arrays. Zero-sized matrices (when `n = 0`)
//! may be written as `[]` or as rows of empty arrays.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{CompensatorError, CompensatorRealization};
use crate::so3::{Mat3, Metric};

#[derive(Debug, thiserror::Error)]
pub enum SpecFileError {
    #[error("cannot read controller spec: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed controller spec: {0}")]
    Json(#[from] serde_json::Error),
    #[error("controller spec field `{field}`: expected {rows}x{cols}, found {found}")]
    Shape { field: &'static str, rows: usize, cols: usize, found: String },
    #[error(transparent)]
    Invalid(#[from] CompensatorError),
}

#[derive(Debug, Serialize, Deserialize)]
struct RawSpec {
    n: usize,
    #[serde(rename = "A_K")]
    a_k: Vec<Vec<f64>>,
    #[serde(rename = "B_theta")]
    b_theta: Vec<Vec<f64>>,
    #[serde(rename = "B_omega")]
    b_omega: Vec<Vec<f64>>,
    #[serde(rename = "C_K")]
    c_k: Vec<Vec<f64>>,
    #[serde(rename = "D_theta")]
    d_theta: Vec<Vec<f64>>,
    #[serde(rename = "D_omega")]
    d_omega: Vec<Vec<f64>>,
    #[serde(rename = "Gamma", default, skip_serializing_if = "Option::is_none")]
    gamma: Option<Vec<Vec<f64>>>,
    metric: Metric,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    regulation_only: bool,
}

/// A realization plus the attitude error function it is meant to run with.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerSpec {
    pub realization: CompensatorRealization,
    pub metric: Metric,
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn from_rows(field: &'static str, rows: &[Vec<f64>], r: usize, c: usize) -> Result<DMatrix<f64>, SpecFileError> {
    let shape_err = || SpecFileError::Shape {
        field,
        rows: r,
        cols: c,
        found: format!("{} rows of lengths {:?}", rows.len(), rows.iter().map(Vec::len).collect::<Vec<_>>()),
    };
    if r * c == 0 && rows.iter().all(Vec::is_empty) && (rows.is_empty() || rows.len() == r) {
        return Ok(DMatrix::zeros(r, c));
    }
    if rows.len() != r || rows.iter().any(|row| row.len() != c) {
        return Err(shape_err());
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(shape_err());
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn mat3(field: &'static str, rows: &[Vec<f64>]) -> Result<Mat3, SpecFileError> {
    let m = from_rows(field, rows, 3, 3)?;
    Ok(Mat3::from_fn(|i, j| m[(i, j)]))
}

impl ControllerSpec {
    pub fn new(realization: CompensatorRealization, metric: Metric) -> Self {
        ControllerSpec { realization, metric }
    }

    pub fn from_json(text: &str) -> Result<Self, SpecFileError> {
        let raw: RawSpec = serde_json::from_str(text)?;
        let n = raw.n;
        let mut realization = CompensatorRealization::new(
            from_rows("A_K", &raw.a_k, n, n)?,
            from_rows("B_theta", &raw.b_theta, n, 3)?,
            from_rows("B_omega", &raw.b_omega, n, 3)?,
            from_rows("C_K", &raw.c_k, 3, n)?,
            mat3("D_theta", &raw.d_theta)?,
            mat3("D_omega", &raw.d_omega)?,
        )?;
        if let Some(g) = &raw.gamma {
            realization = realization.with_damping(mat3("Gamma", g)?)?;
        }
        realization.regulation_only = raw.regulation_only;
        Ok(ControllerSpec { realization, metric: raw.metric })
    }

    pub fn to_json(&self) -> String {
        let c = &self.realization;
        let m3 = |m: &Mat3| (0..3).map(|i| (0..3).map(|j| m[(i, j)]).collect()).collect();
        let raw = RawSpec {
            n: c.n(),
            a_k: to_rows(&c.a_k),
            b_theta: to_rows(&c.b_theta),
            b_omega: to_rows(&c.b_omega),
            c_k: to_rows(&c.c_k),
            d_theta: m3(&c.d_theta),
            d_omega: m3(&c.d_omega),
            gamma: c.gamma.as_ref().map(m3),
            metric: self.metric,
            regulation_only: c.regulation_only,
        };
        serde_json::to_string_pretty(&raw).expect("plain data serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SpecFileError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SpecFileError> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compensator::presets::*;

    #[test]
    fn round_trip_presets() {
        for (c, metric) in [(default_pid(), Metric::Chordal), (default_ppid(), Metric::PsiQ), (default_leadlag(), Metric::Chordal)] {
            let spec = ControllerSpec::new(c, metric);
            let back = ControllerSpec::from_json(&spec.to_json()).unwrap();
            assert_eq!(back, spec);
        }
        let damped = ControllerSpec::new(default_pid().with_damping(Mat3::identity() * 0.02).unwrap(), Metric::Chordal);
        assert_eq!(ControllerSpec::from_json(&damped.to_json()).unwrap(), damped);
    }

    #[test]
    fn static_law_accepts_empty_arrays() {
        let text = r#"{"n":0,"A_K":[],"B_theta":[],"B_omega":[],"C_K":[[],[],[]],
            "D_theta":[[-1,0,0],[0,-1,0],[0,0,-1]],"D_omega":[[-1,0,0],[0,-1,0],[0,0,-1]],"metric":"chordal"}"#;
        let spec = ControllerSpec::from_json(text).unwrap();
        assert_eq!(spec.realization.n(), 0);
    }

    #[test]
    fn rejects_bad_shapes() {
        let text = r#"{"n":1,"A_K":[[0]],"B_theta":[[1,0]],"B_omega":[[0,0,0]],"C_K":[[1],[0],[0]],
            "D_theta":[[-1,0,0],[0,-1,0],[0,0,-1]],"D_omega":[[-1,0,0],[0,-1,0],[0,0,-1]],"metric":"chordal"}"#;
        assert!(matches!(ControllerSpec::from_json(text), Err(SpecFileError::Shape { field: "B_theta", .. })));
        let bad_metric = text.replace("chordal", "geodesic");
        assert!(matches!(ControllerSpec::from_json(&bad_metric), Err(SpecFileError::Json(_))));
        let neg_gamma = r#"{"n":0,"A_K":[],"B_theta":[],"B_omega":[],"C_K":[],
            "D_theta":[[-1,0,0],[0,-1,0],[0,0,-1]],"D_omega":[[-1,0,0],[0,-1,0],[0,0,-1]],
            "Gamma":[[-1,0,0],[0,0,0],[0,0,0]],"metric":"chordal"}"#;
        assert!(matches!(ControllerSpec::from_json(neg_gamma), Err(SpecFileError::Invalid(_))));
    }
}
