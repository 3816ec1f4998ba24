//! Versioned JSON operator files.
//!
//! ```text
//! {"version":1,"n":2,"k":1,"dim_v":1,"dim_e":2,"name":"grad",
//!  "terms":[{"alpha":[1,0],"matrix":[[1.0],[0.0]]}, ...]}
//! ```
//!
//! Matrices are lists of rows. Unknown fields are rejected. A file with an
//! empty `terms` list denotes the zero operator.

use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{MultiIndex, Operator};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OperatorFile {
    version: u32,
    n: usize,
    k: usize,
    dim_v: usize,
    dim_e: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    terms: Vec<TermFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TermFile {
    alpha: Vec<u32>,
    matrix: Vec<Vec<f64>>,
}

pub fn to_json(op: &Operator) -> String {
    let file = OperatorFile {
        version: FORMAT_VERSION,
        n: op.n(),
        k: op.order(),
        dim_v: op.dim_v(),
        dim_e: op.dim_e(),
        name: op.name().map(str::to_string),
        terms: op
            .terms()
            .iter()
            .map(|(alpha, m)| TermFile {
                alpha: alpha.entries().to_vec(),
                matrix: m.row_iter().map(|r| r.iter().copied().collect()).collect(),
            })
            .collect(),
    };
    serde_json::to_string(&file).expect("operator files always serialize")
}

pub fn from_json(text: &str) -> Result<Operator> {
    let file: OperatorFile =
        serde_json::from_str(text).map_err(|e| Error::Malformed(e.to_string()))?;
    if file.version != FORMAT_VERSION {
        return Err(Error::Malformed(format!(
            "unsupported version {} (expected {FORMAT_VERSION})",
            file.version
        )));
    }
    let mut seen = BTreeSet::new();
    let mut terms = Vec::with_capacity(file.terms.len());
    for t in file.terms {
        if !seen.insert(t.alpha.clone()) {
            return Err(Error::Malformed(format!(
                "duplicate multi-index {:?}",
                t.alpha
            )));
        }
        if t.matrix.len() != file.dim_e {
            return Err(Error::Malformed(format!(
                "matrix for {:?} has {} rows, expected dim_e = {}",
                t.alpha,
                t.matrix.len(),
                file.dim_e
            )));
        }
        if let Some(row) = t.matrix.iter().find(|r| r.len() != file.dim_v) {
            return Err(Error::Malformed(format!(
                "matrix for {:?} has a row of length {}, expected dim_v = {}",
                t.alpha,
                row.len(),
                file.dim_v
            )));
        }
        let flat: Vec<f64> = t.matrix.into_iter().flatten().collect();
        terms.push((
            MultiIndex::new(t.alpha),
            DMatrix::from_row_slice(file.dim_e, file.dim_v, &flat),
        ));
    }
    if terms.is_empty() {
        if file.n == 0 || file.k == 0 || file.dim_v == 0 || file.dim_e == 0 {
            return Err(Error::Malformed("dimensions must be positive".into()));
        }
        return Ok(Operator::zero(
            file.n, file.k, file.dim_v, file.dim_e, file.name,
        ));
    }
    Operator::new(file.n, file.k, file.dim_v, file.dim_e, terms, file.name).map_err(|e| match e {
        Error::InvalidOperator(m) => Error::Malformed(m),
        other => other,
    })
}

pub fn write_operator(op: &Operator, path: impl AsRef<Path>) -> Result<()> {
    let mut text = to_json(op);
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_operator(path: impl AsRef<Path>) -> Result<Operator> {
    from_json(&std::fs::read_to_string(path)?)
}
