//! Parallel-sentence matching probe: for every source row, find the target
//! row with the highest cosine similarity and count it as a hit when that row
//! is the source's own translation.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activation::ActivationMatrix;
use crate::error::{Error, Result};

const BLOCK_ROWS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "src->tgt")]
    SourceToTarget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchingReport {
    /// `hits / m`.
    pub accuracy: f64,
    pub m: usize,
    pub hits: usize,
    /// Zero-norm source rows; each counts as a miss.
    pub degenerate_queries: usize,
    pub direction: Direction,
}

fn normalized_rows(a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<bool>) {
    let mut out = a.clone();
    let mut zero = vec![false; a.nrows()];
    for (i, mut row) in out.row_iter_mut().enumerate() {
        let norm = row.norm();
        if norm == 0.0 {
            zero[i] = true;
        } else {
            row /= norm;
        }
    }
    (out, zero)
}

/// Source rows are `x`, candidate targets are the rows of `y`; row `i` of
/// each is a translation pair.
///
/// A query is a hit only if its own target attains the maximum cosine and no
/// lower-indexed target ties it. Zero-norm targets are never selected.
pub fn matching_accuracy(x: &ActivationMatrix, y: &ActivationMatrix) -> Result<MatchingReport> {
    let m = x.rows();
    if y.rows() != m {
        return Err(Error::ShapeMismatch(format!(
            "example counts differ: {m} vs {}",
            y.rows()
        )));
    }
    if x.cols() != y.cols() {
        return Err(Error::ShapeMismatch(format!(
            "cosine needs equal dimensions: {} vs {}",
            x.cols(),
            y.cols()
        )));
    }
    let (xn, zero_x) = normalized_rows(x.data());
    let (yn, zero_y) = normalized_rows(y.data());
    let yt = yn.transpose();

    let starts: Vec<usize> = (0..m).step_by(BLOCK_ROWS).collect();
    let hits: usize = starts
        .par_iter()
        .map(|&start| {
            let len = BLOCK_ROWS.min(m - start);
            let sims = xn.rows(start, len) * &yt;
            (0..len)
                .filter(|&r| {
                    let query = start + r;
                    !zero_x[query] && best_target(sims.row(r).iter().copied(), &zero_y) == Some(query)
                })
                .count()
        })
        .sum();

    Ok(MatchingReport {
        accuracy: hits as f64 / m as f64,
        m,
        hits,
        degenerate_queries: zero_x.iter().filter(|&&z| z).count(),
        direction: Direction::SourceToTarget,
    })
}

/// Index of the largest similarity, lowest index on ties.
fn best_target(sims: impl Iterator<Item = f64>, skip: &[bool]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, s) in sims.enumerate() {
        if skip[j] {
            continue;
        }
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((j, s));
        }
    }
    best.map(|(j, _)| j)
}
