//! JSON form of an instrumental matrix:
//! `{"dim": s, "rows": [[[re, im], …], …], "weights": [t_1, …]}`.
//! Each row holds the `s` components of the bra `⟨φ_j|`.

use std::path::Path;

use lorentz_tomo::linalg::{cplx, CMatrix};
use lorentz_tomo::InstrumentalMatrix64;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolFile {
    pub dim: usize,
    pub rows: Vec<Vec<[f64; 2]>>,
    pub weights: Vec<f64>,
}

impl ProtocolFile {
    pub fn from_matrix(x: &InstrumentalMatrix64) -> Self {
        let rows = (0..x.len())
            .map(|j| x.rows().row(j).iter().map(|z| [z.re, z.im]).collect())
            .collect();
        Self {
            dim: x.dim(),
            rows,
            weights: x.weights().to_vec(),
        }
    }

    pub fn to_matrix(&self) -> Result<InstrumentalMatrix64> {
        if let Some((j, r)) = self
            .rows
            .iter()
            .enumerate()
            .find(|(_, r)| r.len() != self.dim)
        {
            return Err(CliError::Config(format!(
                "protocol row {j} has {} components, expected {}",
                r.len(),
                self.dim
            )));
        }
        let m = CMatrix::from_fn(self.rows.len(), self.dim, |j, i| {
            cplx(self.rows[j][i][0], self.rows[j][i][1])
        });
        InstrumentalMatrix64::new(m, self.weights.clone())
            .map_err(|e| CliError::Config(format!("protocol: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.to_owned(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| CliError::Json {
            path: path.to_owned(),
            source,
        })
    }
}
