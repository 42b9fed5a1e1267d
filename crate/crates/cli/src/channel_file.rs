//! JSON channel descriptions for the `dmax` subcommand.
//!
//! Complex entries are `[re, im]` pairs; matrices are lists of rows.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use num_complex::Complex64;
use pie_core::channel::{Channel, RealMatrix};
use pie_core::linalg::ComplexMatrix;
use pie_core::noise::NoiseSpec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelFile {
    Identity {
        qubits: usize,
    },
    Unitary {
        matrix: Vec<Vec<Complex64>>,
    },
    Kraus {
        operators: Vec<Vec<Vec<Complex64>>>,
    },
    Choi {
        matrix: Vec<Vec<Complex64>>,
    },
    Ptm {
        matrix: Vec<Vec<f64>>,
    },
    Depolarizing {
        qubits: usize,
        omega: f64,
    },
    /// A single-qubit noise spec as used in noise configs, tensored over `qubits`.
    Noise {
        qubits: usize,
        spec: NoiseSpec,
    },
}

fn matrix(rows: &[Vec<Complex64>]) -> Result<ComplexMatrix> {
    Ok(ComplexMatrix::from_rows(rows)?)
}

impl ChannelFile {
    pub fn to_channel(&self) -> Result<Channel> {
        Ok(match self {
            ChannelFile::Identity { qubits } => Channel::identity(*qubits),
            ChannelFile::Unitary { matrix: m } => Channel::unitary(matrix(m)?)?,
            ChannelFile::Kraus { operators } => {
                Channel::kraus(operators.iter().map(|k| matrix(k)).collect::<Result<_>>()?)?
            }
            ChannelFile::Choi { matrix: m } => Channel::choi(matrix(m)?)?,
            ChannelFile::Ptm { matrix: rows } => {
                let n = rows.len();
                if rows.iter().any(|r| r.len() != n) {
                    anyhow::bail!("PTM must be square");
                }
                Channel::ptm(RealMatrix::from_fn(n, n, |i, j| rows[i][j]))?
            }
            ChannelFile::Depolarizing { qubits, omega } => Channel::depolarizing(*qubits, *omega)?,
            ChannelFile::Noise { qubits, spec } => spec.channel_for(*qubits)?,
        })
    }

    pub fn load(path: &Path) -> Result<Channel> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let file: ChannelFile =
            serde_json::from_str(&text).with_context(|| format!("channel {}", path.display()))?;
        file.to_channel()
            .with_context(|| format!("channel {}", path.display()))
    }
}
