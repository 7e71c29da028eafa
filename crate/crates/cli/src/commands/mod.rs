pub mod certify;
pub mod construct;
pub mod experiment;
pub mod recover;

use serde::Serialize;
use wcs_core::construct::{Provenance, SenseMatrix};

#[derive(Debug, Serialize)]
pub struct MatrixSummary {
    pub rows: usize,
    pub cols: usize,
    pub real: bool,
    pub provenance: Provenance,
}

impl MatrixSummary {
    pub fn of(a: &SenseMatrix) -> Self {
        Self {
            rows: a.rows(),
            cols: a.cols(),
            real: wcs_core::linalg::is_real(a.matrix()),
            provenance: a.provenance().clone(),
        }
    }
}
