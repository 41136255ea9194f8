//! Synthetic activations, controlled transforms, and a covariance-based CCA
//! reference used to check the indexes.
//!
//! Every generator draws from ChaCha8 seeded with `seed_from_u64(seed)`;
//! independent draws for one seed use separate ChaCha streams (see
//! [`stream`]), so results depend only on `(seed, stream)` and not on call
//! order.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::activation::{ActivationMatrix, CenteredMatrix};
use crate::error::{Error, Result};
use crate::indexes::CanonicalDecomposition;

/// Deterministic generator for one `(seed, stream)` pair.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const BASE_STREAM: u64 = 0;
const PARTNER_NOISE_STREAM: u64 = 1;
const TRANSFORM_STREAM: u64 = 2;

pub fn gaussian_matrix(rng: &mut impl Rng, m: usize, n: usize) -> DMatrix<f64> {
    // fill row by row so the draw order matches the row-major dump layout
    let values: Vec<f64> = (0..m * n).map(|_| rng.sample(StandardNormal)).collect();
    DMatrix::from_row_slice(m, n, &values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    /// i.i.d. standard normal entries.
    Gaussian,
    /// `ρ·Z + √(1-ρ²)·E`, where `Z` is the `Gaussian` matrix for the same
    /// seed. Each neuron correlates with the matching `Z` neuron at `ρ` in
    /// expectation.
    Correlated(f64),
}

pub fn random_matrix(seed: u64, m: usize, n: usize, distribution: Distribution) -> Result<ActivationMatrix> {
    if m < 2 || n < 1 {
        return Err(Error::InvalidParam(format!("need m >= 2 and n >= 1, got {m}x{n}")));
    }
    let base = gaussian_matrix(&mut stream(seed, BASE_STREAM), m, n);
    match distribution {
        Distribution::Gaussian => ActivationMatrix::new(base),
        Distribution::Correlated(rho) => {
            if !(-1.0..=1.0).contains(&rho) {
                return Err(Error::InvalidParam(format!("correlation {rho} outside [-1, 1]")));
            }
            let noise = gaussian_matrix(&mut stream(seed, PARTNER_NOISE_STREAM), m, n);
            ActivationMatrix::new(base * rho + noise * (1.0 - rho * rho).sqrt())
        }
    }
}

/// `(Gaussian, Correlated(rho))` for one seed.
pub fn correlated_pair(seed: u64, m: usize, n: usize, rho: f64) -> Result<(ActivationMatrix, ActivationMatrix)> {
    Ok((
        random_matrix(seed, m, n, Distribution::Gaussian)?,
        random_matrix(seed, m, n, Distribution::Correlated(rho))?,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Orthogonal(u64),
    /// Random invertible map with condition number at most 1e3.
    Invertible(u64),
    /// `z_i ↦ a_i·z_i + b_i`, `|a_i| ∈ [0.5, 2]` with random sign.
    PerNeuronAffine(u64),
    /// Column derangement (a single n-cycle).
    Permutation(u64),
    IsotropicScale(f64),
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with the
/// signs of `R`'s diagonal folded into `Q`).
pub fn random_orthogonal(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
    let qr = gaussian_matrix(rng, n, n).qr();
    let r = qr.r();
    let mut q = qr.q();
    for (j, mut col) in q.column_iter_mut().enumerate() {
        if r[(j, j)] < 0.0 {
            col.neg_mut();
        }
    }
    q
}

/// `U·diag(s)·Vᵀ` with `s_i = 10^(3u_i)`, so the condition number is at most 1e3.
/// Returns the matrix and its inverse.
pub fn random_invertible(rng: &mut impl Rng, n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let u = random_orthogonal(rng, n);
    let v = random_orthogonal(rng, n);
    let s: Vec<f64> = (0..n).map(|_| 10f64.powf(3.0 * rng.random::<f64>())).collect();
    let forward = &u * DMatrix::from_diagonal(&DVector::from_vec(s.clone())) * v.transpose();
    let inverse = &v * DMatrix::from_diagonal(&DVector::from_iterator(n, s.iter().map(|x| 1.0 / x))) * u.transpose();
    (forward, inverse)
}

/// Sattolo's algorithm: a uniformly random cyclic permutation, hence a
/// derangement for `n >= 2`.
pub fn random_derangement(rng: &mut impl Rng, n: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..i);
        perm.swap(i, j);
    }
    perm
}

/// Per-neuron `(scale, shift)` pairs.
pub fn random_affine(rng: &mut impl Rng, n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|_| {
            let magnitude = rng.random_range(0.5..=2.0);
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let shift: f64 = rng.sample::<f64, _>(StandardNormal) * 5.0;
            (sign * magnitude, shift)
        })
        .collect()
}

/// The right-multiplied matrix for the linear transforms, `None` for the
/// per-neuron affine map.
pub fn transform_matrix(t: Transform, n: usize) -> Result<Option<DMatrix<f64>>> {
    Ok(match t {
        Transform::Orthogonal(seed) => Some(random_orthogonal(&mut stream(seed, TRANSFORM_STREAM), n)),
        Transform::Invertible(seed) => Some(random_invertible(&mut stream(seed, TRANSFORM_STREAM), n).0),
        Transform::Permutation(seed) => {
            let perm = random_derangement(&mut stream(seed, TRANSFORM_STREAM), n);
            Some(DMatrix::from_fn(n, n, |i, j| if perm[j] == i { 1.0 } else { 0.0 }))
        }
        Transform::IsotropicScale(c) => {
            check_scale(c)?;
            Some(DMatrix::identity(n, n) * c)
        }
        Transform::PerNeuronAffine(_) => None,
    })
}

fn check_scale(c: f64) -> Result<()> {
    if c == 0.0 || !c.is_finite() {
        return Err(Error::InvalidParam(format!("isotropic scale must be finite and nonzero, got {c}")));
    }
    Ok(())
}

pub fn apply_transform(x: &ActivationMatrix, t: Transform) -> Result<ActivationMatrix> {
    let n = x.cols();
    let data = x.data();
    let out = match t {
        Transform::Permutation(seed) => {
            let perm = random_derangement(&mut stream(seed, TRANSFORM_STREAM), n);
            data.select_columns(&perm)
        }
        Transform::IsotropicScale(c) => {
            check_scale(c)?;
            data * c
        }
        Transform::PerNeuronAffine(seed) => {
            let coeffs = random_affine(&mut stream(seed, TRANSFORM_STREAM), n);
            let mut out = data.clone();
            for (mut col, (a, b)) in out.column_iter_mut().zip(coeffs) {
                col.apply(|v| *v = a * *v + b);
            }
            out
        }
        Transform::Orthogonal(_) | Transform::Invertible(_) => {
            let matrix = transform_matrix(t, n)?.expect("linear transform");
            data * matrix
        }
    };
    ActivationMatrix::new(out)
}

/// Aligned pair whose per-neuron correlation stays high while linear CKA is
/// pulled down: both sides share a Gaussian signal, and each side separately
/// gets one high-variance direction (`strength · g · wᵀ`, `g` an independent
/// Gaussian example vector, `w` a random ±1/√n neuron loading). `y` also gets
/// a per-neuron affine map.
///
/// Per neuron the extra variance is only `strength²/n`, but the added
/// direction carries eigenvalue `≈ strength²·m`, which dominates each side's
/// gram norm without appearing in the cross term.
pub fn dominant_direction_pair(seed: u64, m: usize, n: usize, strength: f64) -> Result<(ActivationMatrix, ActivationMatrix)> {
    if m < 2 || n < 1 {
        return Err(Error::InvalidParam(format!("need m >= 2 and n >= 1, got {m}x{n}")));
    }
    let shared = gaussian_matrix(&mut stream(seed, BASE_STREAM), m, n);
    let side = |s: u64| {
        let mut rng = stream(seed, s);
        let g = DVector::from_iterator(m, (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let w = DVector::from_iterator(
            n,
            (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 } / (n as f64).sqrt()),
        );
        &shared + g * w.transpose() * strength
    };
    let x = ActivationMatrix::new(side(10))?;
    let y = ActivationMatrix::new(side(11))?;
    let y = apply_transform(&y, Transform::PerNeuronAffine(seed.wrapping_add(1)))?;
    Ok((x, y))
}

/// Output of [`cca_oracle`].
#[derive(Debug, Clone, PartialEq)]
pub struct OracleCca {
    /// Coefficients plus PWCCA-style projection weights computed along the
    /// covariance route.
    pub decomposition: CanonicalDecomposition,
    /// A covariance block was singular and a 1e-10 relative ridge was added.
    pub regularized: bool,
}

pub const ORACLE_MAX_EXAMPLES: usize = 500;
pub const ORACLE_MAX_NEURONS: usize = 20;

/// Canonical correlations from the generalized eigenproblem
/// `Cxy Cyy⁻¹ Cyx a = ρ² Cxx a`, reduced with Cholesky factors of the
/// covariance blocks. Reference for tests only; it shares no code with the
/// SVD route in [`crate::indexes`].
pub fn cca_oracle(x: &CenteredMatrix, y: &CenteredMatrix) -> Result<OracleCca> {
    let (m, nx) = x.shape();
    let ny = y.cols();
    if y.rows() != m {
        return Err(Error::ShapeMismatch(format!("example counts differ: {m} vs {}", y.rows())));
    }
    if m > ORACLE_MAX_EXAMPLES || nx.max(ny) > ORACLE_MAX_NEURONS {
        return Err(Error::InvalidParam(format!(
            "oracle limited to {ORACLE_MAX_EXAMPLES} examples and {ORACLE_MAX_NEURONS} neurons"
        )));
    }
    let (xd, yd) = (x.data(), y.data());
    let cxx = xd.transpose() * xd;
    let cyy = yd.transpose() * yd;
    let cxy = xd.transpose() * yd;

    let mut regularized = false;
    let mut factor = |c: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        if let Some(ch) = c.clone().cholesky() {
            let l = ch.l();
            let diag_min = l.diagonal().min();
            if diag_min > 1e-7 * l.diagonal().max() {
                return Ok(l);
            }
        }
        regularized = true;
        let ridge = 1e-10 * (c.trace() / c.nrows() as f64).max(f64::MIN_POSITIVE);
        let shifted = c + DMatrix::identity(c.nrows(), c.nrows()) * ridge;
        shifted
            .cholesky()
            .map(|ch| ch.l())
            .ok_or_else(|| Error::NumericalFailure("covariance not positive definite after ridge".into()))
    };
    let lx = factor(&cxx)?;
    let ly = factor(&cyy)?;

    let lx_inv = lx
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::NumericalFailure("singular Cholesky factor".into()))?;
    let ly_inv = ly
        .try_inverse()
        .ok_or_else(|| Error::NumericalFailure("singular Cholesky factor".into()))?;
    let b = &lx_inv * &cxy * ly_inv.transpose();
    let s = &b * b.transpose();
    let s = (&s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::new(s);

    let mut order: Vec<usize> = (0..nx).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let k = nx.min(ny);
    order.truncate(k);
    let coefficients: Vec<f64> = order
        .iter()
        .map(|&i| eig.eigenvalues[i].max(0.0).sqrt().min(1.0))
        .collect();

    // canonical weights a = Lx⁻ᵀ w, variates h = X a
    let w = eig.eigenvectors.select_columns(&order);
    let a = lx_inv.transpose() * w;
    let variates = xd * a;
    let q = variates.qr().q();
    let projections = q.transpose() * xd;
    let raw: Vec<f64> = projections.row_iter().map(|r| r.iter().map(|v| v.abs()).sum()).collect();
    let total: f64 = raw.iter().sum();
    let weights = raw.iter().map(|v| v / total).collect();

    let cxx_eig = SymmetricEigen::new(cxx).eigenvalues;
    let top = cxx_eig.max();
    let rank = cxx_eig.iter().filter(|&&v| v > 1e-12 * top).count();

    Ok(OracleCca {
        decomposition: CanonicalDecomposition {
            coefficients,
            weights: Some(weights),
            rank,
        },
        regularized,
    })
}
