//! Similarity indexes over centered layer representations.
//!
//! * ANC: mean absolute Pearson correlation of one-to-one aligned neurons.
//! * Linear CKA: eigenvalue-weighted subspace overlap of the two gram
//!   matrices, available both from the gram spectra and in closed form.
//! * CCA, SVCCA, PWCCA: canonical correlations between the column spaces,
//!   obtained from orthonormal bases (thin SVD) rather than by whitening.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::activation::{CenteredMatrix, IndexKind, SimilarityResult, Warning};
use crate::error::{Error, Result};

/// Singular values below `RANK_TOLERANCE * sigma_max` count as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

// Convergence tolerance for the bidiagonal QR sweeps. nalgebra's own `svd`
// uses 5 ulp; a bare 1 ulp can stop early and return a wrong factorization on
// wide inputs without reporting failure.
const SVD_EPSILON: f64 = 5.0 * f64::EPSILON;

pub const DEFAULT_SVCCA_THRESHOLD: f64 = 0.99;

/// Eigen-decomposition of the `m x m` gram matrix `X Xᵀ`.
///
/// Eigenvectors live in example space (length `m`); they are the dominant
/// correlation directions of the layer. Only the `min(m, n)` leading pairs are
/// kept since the rest have eigenvalue zero.
#[derive(Debug, Clone)]
pub struct GramSpectrum {
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
}

impl GramSpectrum {
    /// Descending, clamped at zero.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Column `i` pairs with `eigenvalues()[i]`.
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// `Σ λ_i u_i u_iᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let scaled = &self.eigenvectors * DMatrix::from_diagonal(&DVector::from_column_slice(&self.eigenvalues));
        scaled * self.eigenvectors.transpose()
    }
}

pub(crate) struct ThinSvd {
    /// Descending.
    pub sigma: Vec<f64>,
    /// `m x p`, columns ordered like `sigma`.
    pub u: DMatrix<f64>,
}

pub(crate) fn thin_svd(x: &DMatrix<f64>) -> Result<ThinSvd> {
    let svd = x
        .clone()
        .try_svd(true, false, SVD_EPSILON, 0)
        .ok_or_else(|| Error::NumericalFailure("SVD did not converge".into()))?;
    let u = svd
        .u
        .ok_or_else(|| Error::NumericalFailure("SVD returned no left vectors".into()))?;
    let raw = svd.singular_values;
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| raw[b].total_cmp(&raw[a]).then(a.cmp(&b)));
    let sigma = order.iter().map(|&i| raw[i].max(0.0)).collect();
    let u = u.select_columns(&order);
    Ok(ThinSvd { sigma, u })
}

fn numerical_rank(sigma: &[f64]) -> usize {
    let max = sigma.first().copied().unwrap_or(0.0);
    if max <= 0.0 {
        return 0;
    }
    sigma.iter().take_while(|&&s| s > RANK_TOLERANCE * max).count()
}

pub fn gram_spectrum(x: &CenteredMatrix) -> Result<GramSpectrum> {
    let svd = thin_svd(x.data())?;
    Ok(GramSpectrum {
        eigenvalues: svd.sigma.iter().map(|s| s * s).collect(),
        eigenvectors: svd.u,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CkaMethod {
    /// Double sum over both gram spectra.
    Spectral,
    /// `‖YᵀX‖²_F / (‖XᵀX‖_F ‖YᵀY‖_F)`.
    #[default]
    Gram,
}

fn check_rows(x: &CenteredMatrix, y: &CenteredMatrix) -> Result<()> {
    if x.rows() != y.rows() {
        return Err(Error::ShapeMismatch(format!(
            "example counts differ: {} vs {}",
            x.rows(),
            y.rows()
        )));
    }
    Ok(())
}

pub fn linear_cka(x: &CenteredMatrix, y: &CenteredMatrix, method: CkaMethod) -> Result<SimilarityResult> {
    check_rows(x, y)?;
    if x.is_all_zero() || y.is_all_zero() {
        return Err(Error::DegenerateInput("CKA of an all-zero representation".into()));
    }
    let score = match method {
        CkaMethod::Spectral => cka_spectral(x, y)?,
        CkaMethod::Gram => cka_gram(x.data(), y.data()),
    };
    Ok(SimilarityResult::new(IndexKind::Cka, score))
}

fn cka_spectral(x: &CenteredMatrix, y: &CenteredMatrix) -> Result<f64> {
    let sx = gram_spectrum(x)?;
    let sy = gram_spectrum(y)?;
    let overlap = sx.eigenvectors.tr_mul(&sy.eigenvectors);
    let mut numerator = 0.0;
    for (i, lx) in sx.eigenvalues.iter().enumerate() {
        for (j, ly) in sy.eigenvalues.iter().enumerate() {
            let dot = overlap[(i, j)];
            numerator += lx * ly * dot * dot;
        }
    }
    let norm = |l: &[f64]| l.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(numerator / (norm(&sx.eigenvalues) * norm(&sy.eigenvalues)))
}

fn cka_gram(x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    let (m, nx) = x.shape();
    let ny = y.ncols();
    // Same quantities in feature space (n x n products) or example space
    // (m x m products); pick the cheaper one.
    let feature_cost = m * (nx * ny + nx * nx + ny * ny);
    let example_cost = m * m * (nx + ny) + 3 * m * m;
    if feature_cost <= example_cost {
        let cross = y.tr_mul(x).norm_squared();
        cross / (x.tr_mul(x).norm() * y.tr_mul(y).norm())
    } else {
        let kx = x * x.transpose();
        let ky = y * y.transpose();
        kx.dot(&ky) / (kx.norm() * ky.norm())
    }
}

/// Canonical correlations between two column spaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalDecomposition {
    /// Descending, in `[0, 1]`.
    pub coefficients: Vec<f64>,
    /// Projection weights (PWCCA only), summing to 1.
    pub weights: Option<Vec<f64>>,
    /// Numerical rank of the reference (X) side after truncation.
    pub rank: usize,
}

struct Canonical {
    coefficients: Vec<f64>,
    /// Orthonormal canonical variates of X, `m x k`.
    variates_x: DMatrix<f64>,
    rank_x: usize,
    warnings: Vec<Warning>,
}

/// Leading left singular vectors of `x`: all numerically nonzero ones, or
/// the fewest that retain `threshold` of the squared singular-value mass.
fn truncated_basis(x: &DMatrix<f64>, threshold: Option<f64>) -> Result<DMatrix<f64>> {
    let svd = thin_svd(x)?;
    let rank = numerical_rank(&svd.sigma);
    if rank == 0 {
        return Err(Error::DegenerateInput("representation has rank 0".into()));
    }
    let keep = match threshold {
        Some(t) if t < 1.0 => {
            let total: f64 = svd.sigma[..rank].iter().map(|s| s * s).sum();
            let mut acc = 0.0;
            let mut k = rank;
            for (i, s) in svd.sigma[..rank].iter().enumerate() {
                acc += s * s;
                if acc >= t * total {
                    k = i + 1;
                    break;
                }
            }
            k
        }
        _ => rank,
    };
    Ok(svd.u.columns(0, keep).into_owned())
}

fn canonical(x: &CenteredMatrix, y: &CenteredMatrix, threshold: Option<f64>) -> Result<Canonical> {
    check_rows(x, y)?;
    let qx = truncated_basis(x.data(), threshold)?;
    let qy = truncated_basis(y.data(), threshold)?;
    let overlap = qx.tr_mul(&qy);
    let svd = overlap
        .try_svd(true, false, SVD_EPSILON, 0)
        .ok_or_else(|| Error::NumericalFailure("SVD of basis overlap did not converge".into()))?;
    let w = svd
        .u
        .ok_or_else(|| Error::NumericalFailure("SVD returned no left vectors".into()))?;
    let raw = svd.singular_values;
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| raw[b].total_cmp(&raw[a]).then(a.cmp(&b)));
    let coefficients = order.iter().map(|&i| raw[i].clamp(0.0, 1.0)).collect();
    let variates_x = &qx * w.select_columns(&order);

    let mut warnings = Vec::new();
    if x.rows() <= x.cols().max(y.cols()) {
        warnings.push(Warning::RankDeficient);
    }
    Ok(Canonical {
        coefficients,
        variates_x,
        rank_x: qx.ncols(),
        warnings,
    })
}

fn mean_squared_index(kind: IndexKind, c: Canonical) -> SimilarityResult {
    let score = c.coefficients.iter().map(|r| r * r).sum::<f64>() / c.rank_x as f64;
    let mut result = SimilarityResult::new(kind, score);
    result.components = Some(c.coefficients);
    result.warnings = c.warnings;
    result
}

/// Sum of squared canonical correlations divided by the rank of `x`.
pub fn cca(x: &CenteredMatrix, y: &CenteredMatrix) -> Result<SimilarityResult> {
    Ok(mean_squared_index(IndexKind::Cca, canonical(x, y, None)?))
}

pub fn canonical_decomposition(x: &CenteredMatrix, y: &CenteredMatrix) -> Result<CanonicalDecomposition> {
    let c = canonical(x, y, None)?;
    Ok(CanonicalDecomposition {
        coefficients: c.coefficients,
        weights: None,
        rank: c.rank_x,
    })
}

/// CCA after reducing each side to the singular directions that retain
/// `variance_threshold` of its variance. A threshold of 1 keeps every
/// numerically nonzero direction and reproduces [`cca`].
pub fn svcca(x: &CenteredMatrix, y: &CenteredMatrix, variance_threshold: f64) -> Result<SimilarityResult> {
    if !(variance_threshold > 0.0 && variance_threshold <= 1.0) {
        return Err(Error::InvalidParam(format!(
            "variance threshold must lie in (0, 1], got {variance_threshold}"
        )));
    }
    Ok(mean_squared_index(
        IndexKind::Svcca,
        canonical(x, y, Some(variance_threshold))?,
    ))
}

/// Projection-weighted CCA. `x` is the reference side: each canonical
/// coefficient is weighted by how much of `x`'s neurons project onto the
/// corresponding canonical variate, so the index is not symmetric.
pub fn pwcca(x: &CenteredMatrix, y: &CenteredMatrix) -> Result<SimilarityResult> {
    let (result, _) = pwcca_with_weights(x, y)?;
    Ok(result)
}

pub fn pwcca_decomposition(x: &CenteredMatrix, y: &CenteredMatrix) -> Result<CanonicalDecomposition> {
    let (result, decomposition) = pwcca_with_weights(x, y)?;
    debug_assert_eq!(result.components.as_ref(), Some(&decomposition.coefficients));
    Ok(decomposition)
}

fn pwcca_with_weights(x: &CenteredMatrix, y: &CenteredMatrix) -> Result<(SimilarityResult, CanonicalDecomposition)> {
    let c = canonical(x, y, None)?;
    let projections = c.variates_x.tr_mul(x.data());
    let raw: Vec<f64> = projections
        .row_iter()
        .map(|row| row.iter().map(|v| v.abs()).sum())
        .collect();
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateInput("zero projection mass".into()));
    }
    let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let score = weights.iter().zip(&c.coefficients).map(|(w, r)| w * r).sum();

    let mut result = SimilarityResult::new(IndexKind::Pwcca, score);
    result.components = Some(c.coefficients.clone());
    result.warnings = c.warnings;
    let decomposition = CanonicalDecomposition {
        coefficients: c.coefficients,
        weights: Some(weights),
        rank: c.rank_x,
    };
    Ok((result, decomposition))
}

/// Pearson correlation of two centered vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Correlation {
    Defined(f64),
    /// One of the vectors has zero norm.
    Degenerate,
}

impl Correlation {
    pub fn value(self) -> Option<f64> {
        match self {
            Correlation::Defined(v) => Some(v),
            Correlation::Degenerate => None,
        }
    }
}

pub fn pearson(zx: &[f64], zy: &[f64]) -> Result<Correlation> {
    if zx.len() != zy.len() {
        return Err(Error::ShapeMismatch(format!(
            "vector lengths differ: {} vs {}",
            zx.len(),
            zy.len()
        )));
    }
    if zx.len() < 2 {
        return Err(Error::InvalidData("correlation needs at least 2 examples".into()));
    }
    let (mut dot, mut nx, mut ny) = (0.0, 0.0, 0.0);
    for (a, b) in zx.iter().zip(zy) {
        dot += a * b;
        nx += a * a;
        ny += b * b;
    }
    if nx == 0.0 || ny == 0.0 {
        return Ok(Correlation::Degenerate);
    }
    Ok(Correlation::Defined((dot / (nx.sqrt() * ny.sqrt())).clamp(-1.0, 1.0)))
}

/// What ANC does with neuron pairs where either side has zero variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DegeneratePolicy {
    /// Count the pair as correlation 0; the denominator stays `n`.
    #[default]
    Zero,
    /// Average only over non-degenerate pairs.
    Skip,
}

impl std::str::FromStr for DegeneratePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "zero" => Ok(DegeneratePolicy::Zero),
            "skip" => Ok(DegeneratePolicy::Skip),
            other => Err(Error::InvalidParam(format!("unknown ANC policy '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AncOptions {
    pub policy: DegeneratePolicy,
    /// Average `|corr|`. Turning this off gives the signed mean, which is
    /// only useful as a fault-injection baseline for the validation suite.
    pub absolute: bool,
}

impl Default for AncOptions {
    fn default() -> Self {
        Self {
            policy: DegeneratePolicy::Zero,
            absolute: true,
        }
    }
}

/// Average neuron-wise correlation between aligned neurons of `x` and `y`.
pub fn anc(x: &CenteredMatrix, y: &CenteredMatrix, policy: DegeneratePolicy) -> Result<SimilarityResult> {
    anc_with(x, y, AncOptions { policy, absolute: true })
}

pub fn anc_with(x: &CenteredMatrix, y: &CenteredMatrix, options: AncOptions) -> Result<SimilarityResult> {
    check_rows(x, y)?;
    let n = x.cols();
    if y.cols() != n {
        return Err(Error::AlignmentUnavailable { left: n, right: y.cols() });
    }
    let mut components = Vec::with_capacity(n);
    let mut degenerate = Vec::new();
    for (i, (zx, zy)) in x.data().column_iter().zip(y.data().column_iter()).enumerate() {
        match pearson(zx.as_slice(), zy.as_slice())? {
            Correlation::Defined(r) => components.push(if options.absolute { r.abs() } else { r }),
            Correlation::Degenerate => {
                components.push(0.0);
                degenerate.push(i);
            }
        }
    }
    if degenerate.len() == n {
        return Err(Error::DegenerateInput("every neuron pair has zero variance".into()));
    }
    let sum: f64 = components.iter().sum();
    let denominator = match options.policy {
        DegeneratePolicy::Zero => n,
        DegeneratePolicy::Skip => n - degenerate.len(),
    };
    let mut result = SimilarityResult::new(IndexKind::Anc, sum / denominator as f64);
    result.components = Some(components);
    result.degenerate_count = degenerate.len();
    result.degenerate = degenerate;
    Ok(result)
}

/// Parameters shared by every index in a batch run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexParams {
    pub svcca_threshold: f64,
    pub anc_policy: DegeneratePolicy,
    pub cka_method: CkaMethod,
}

impl Default for IndexParams {
    fn default() -> Self {
        Self {
            svcca_threshold: DEFAULT_SVCCA_THRESHOLD,
            anc_policy: DegeneratePolicy::Zero,
            cka_method: CkaMethod::Gram,
        }
    }
}

pub fn compute(kind: IndexKind, x: &CenteredMatrix, y: &CenteredMatrix, params: &IndexParams) -> Result<SimilarityResult> {
    match kind {
        IndexKind::Anc => anc(x, y, params.anc_policy),
        IndexKind::Cka => linear_cka(x, y, params.cka_method),
        IndexKind::Cca => cca(x, y),
        IndexKind::Svcca => svcca(x, y, params.svcca_threshold),
        IndexKind::Pwcca => pwcca(x, y),
    }
}
