//! Activation matrices, column centering, and pair validation.
//!
//! Rows are examples (one pooled sentence each), columns are neurons. All
//! matrices are dense `f64` and immutable once built.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Layer activations: `m` examples by `n` neurons, every entry finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMatrix {
    data: DMatrix<f64>,
}

impl ActivationMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        let (m, n) = data.shape();
        if m < 2 {
            return Err(Error::InvalidData(format!(
                "need at least 2 examples, got {m}"
            )));
        }
        if n < 1 {
            return Err(Error::InvalidData("need at least 1 neuron".into()));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            // column-major storage
            return Err(Error::InvalidData(format!(
                "non-finite entry at row {}, column {}",
                pos % m,
                pos / m
            )));
        }
        Ok(Self { data })
    }

    /// Builds a matrix from a row-major buffer.
    pub fn from_row_slice(m: usize, n: usize, values: &[f64]) -> Result<Self> {
        if values.len() != m * n {
            return Err(Error::ShapeMismatch(format!(
                "buffer of {} values cannot hold {m}x{n}",
                values.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(m, n, values))
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let n = columns.len();
        let m = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != m) {
            return Err(Error::ShapeMismatch("columns differ in length".into()));
        }
        Self::new(DMatrix::from_fn(m, n, |i, j| columns[j][i]))
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.data.shape()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.data
    }

    /// Row-major copy of the entries.
    pub fn to_row_major(&self) -> Vec<f64> {
        let (m, n) = self.shape();
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            out.extend(self.data.row(i).iter().copied());
        }
        out
    }

    /// Keeps only the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let m = self.rows();
        if let Some(&bad) = rows.iter().find(|&&r| r >= m) {
            return Err(Error::ShapeMismatch(format!(
                "row {bad} out of range for {m} rows"
            )));
        }
        Self::new(self.data.select_rows(rows))
    }

    /// Indices of columns whose entries are all identical.
    pub fn constant_columns(&self) -> Vec<usize> {
        self.data
            .column_iter()
            .enumerate()
            .filter(|(_, c)| c.iter().all(|&v| v == c[0]))
            .map(|(j, _)| j)
            .collect()
    }
}

/// A matrix whose columns have zero mean.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredMatrix {
    data: DMatrix<f64>,
}

impl CenteredMatrix {
    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.data.shape()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// Columns with zero norm after centering.
    pub fn zero_columns(&self) -> Vec<usize> {
        self.data
            .column_iter()
            .enumerate()
            .filter(|(_, c)| c.iter().all(|&v| v == 0.0))
            .map(|(j, _)| j)
            .collect()
    }

    pub fn is_all_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    /// View the centered data as a plain activation matrix (for re-centering
    /// or transforms).
    pub fn to_activation(&self) -> ActivationMatrix {
        ActivationMatrix {
            data: self.data.clone(),
        }
    }
}

/// Subtracts each column's mean.
///
/// Uses a corrected two-pass mean, so re-centering an already centered
/// matrix moves entries only at the rounding level. Constant columns come
/// out exactly zero.
pub fn center_columns(a: &ActivationMatrix) -> CenteredMatrix {
    let (m, n) = a.shape();
    let mut data = a.data.clone();
    for j in 0..n {
        let mut col = data.column_mut(j);
        let first = col[0];
        if col.iter().all(|&v| v == first) {
            col.fill(0.0);
            continue;
        }
        let mean = col.sum() / m as f64;
        let correction = col.iter().map(|&v| v - mean).sum::<f64>() / m as f64;
        let mean = mean + correction;
        col.iter_mut().for_each(|v| *v -= mean);
    }
    CenteredMatrix { data }
}

/// Result of [`validate_pair`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairCheck {
    pub m: usize,
    pub n_x: usize,
    pub n_y: usize,
    pub zero_variance_x: Vec<usize>,
    pub zero_variance_y: Vec<usize>,
}

impl PairCheck {
    /// Neuron indices that are dead on at least one side (aligned pairs only).
    pub fn degenerate_pairs(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self
            .zero_variance_x
            .iter()
            .chain(&self.zero_variance_y)
            .copied()
            .collect();
        all.sort_unstable();
        all.dedup();
        all
    }
}

/// Checks that two matrices describe the same examples and, when
/// `require_equal_n` is set, the same neurons.
pub fn validate_pair(
    x: &ActivationMatrix,
    y: &ActivationMatrix,
    require_equal_n: bool,
) -> Result<PairCheck> {
    if x.rows() != y.rows() {
        return Err(Error::ShapeMismatch(format!(
            "example counts differ: {} vs {}",
            x.rows(),
            y.rows()
        )));
    }
    if require_equal_n && x.cols() != y.cols() {
        return Err(Error::AlignmentUnavailable {
            left: x.cols(),
            right: y.cols(),
        });
    }
    Ok(PairCheck {
        m: x.rows(),
        n_x: x.cols(),
        n_y: y.cols(),
        zero_variance_x: x.constant_columns(),
        zero_variance_y: y.constant_columns(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexKind {
    Anc,
    Cka,
    Cca,
    Svcca,
    Pwcca,
}

impl IndexKind {
    pub const ALL: [IndexKind; 5] = [
        IndexKind::Anc,
        IndexKind::Cka,
        IndexKind::Cca,
        IndexKind::Svcca,
        IndexKind::Pwcca,
    ];

    pub fn name(self) -> &'static str {
        match self {
            IndexKind::Anc => "anc",
            IndexKind::Cka => "cka",
            IndexKind::Cca => "cca",
            IndexKind::Svcca => "svcca",
            IndexKind::Pwcca => "pwcca",
        }
    }
}

impl fmt::Display for IndexKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for IndexKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        IndexKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidParam(format!("unknown index '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Warning {
    /// Fewer examples than neurons: the CCA family cannot separate the
    /// column spaces and scores saturate.
    RankDeficient,
}

/// Score of one similarity index on one pair of layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityResult {
    pub index: IndexKind,
    pub score: f64,
    /// Per-neuron |correlation| for ANC, canonical coefficients for the CCA
    /// family, `None` for CKA.
    pub components: Option<Vec<f64>>,
    /// Neuron indices skipped or zeroed because one side had no variance.
    pub degenerate: Vec<usize>,
    pub degenerate_count: usize,
    pub warnings: Vec<Warning>,
}

impl SimilarityResult {
    pub(crate) fn new(index: IndexKind, score: f64) -> Self {
        Self {
            index,
            score,
            components: None,
            degenerate: Vec::new(),
            degenerate_count: 0,
            warnings: Vec::new(),
        }
    }

    pub fn has_warning(&self, w: Warning) -> bool {
        self.warnings.contains(&w)
    }
}
