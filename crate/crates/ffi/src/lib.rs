//! C ABI over the `crossim` similarity indexes.
//!
//! Every fallible call returns a [`CrossimStatus`]; on failure the message is
//! available from [`crossim_last_error_message`] on the same thread until the
//! next failing call. Matrices are opaque handles owned by the caller and
//! released with [`crossim_matrix_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use crossim::indexes::{self, DegeneratePolicy, IndexParams};
use crossim::io::npy;
use crossim::{center_columns, ActivationMatrix, Error, IndexKind};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrossimStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidData = 2,
    ShapeMismatch = 3,
    AlignmentUnavailable = 4,
    DegenerateInput = 5,
    NumericalFailure = 6,
    InvalidParam = 7,
    Format = 8,
    MissingArtifact = 9,
    Io = 10,
    Panic = 11,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrossimIndex {
    Anc = 0,
    Cka = 1,
    Cca = 2,
    Svcca = 3,
    Pwcca = 4,
}

impl From<CrossimIndex> for IndexKind {
    fn from(i: CrossimIndex) -> Self {
        match i {
            CrossimIndex::Anc => IndexKind::Anc,
            CrossimIndex::Cka => IndexKind::Cka,
            CrossimIndex::Cca => IndexKind::Cca,
            CrossimIndex::Svcca => IndexKind::Svcca,
            CrossimIndex::Pwcca => IndexKind::Pwcca,
        }
    }
}

/// Activation matrix, examples by neurons.
pub struct CrossimMatrix {
    inner: ActivationMatrix,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(e: &Error) -> CrossimStatus {
    match e {
        Error::InvalidData(_) => CrossimStatus::InvalidData,
        Error::ShapeMismatch(_) => CrossimStatus::ShapeMismatch,
        Error::AlignmentUnavailable { .. } => CrossimStatus::AlignmentUnavailable,
        Error::DegenerateInput(_) => CrossimStatus::DegenerateInput,
        Error::NumericalFailure(_) => CrossimStatus::NumericalFailure,
        Error::InvalidParam(_) => CrossimStatus::InvalidParam,
        Error::Format(_) => CrossimStatus::Format,
        Error::MissingArtifact { .. } => CrossimStatus::MissingArtifact,
        Error::Io { .. } => CrossimStatus::Io,
    }
}

struct Failure(CrossimStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(CrossimStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CrossimStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CrossimStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            CrossimStatus::Panic
        }
    }
}

unsafe fn matrix<'a>(p: *const CrossimMatrix, what: &str) -> Result<&'a ActivationMatrix, Failure> {
    p.as_ref().map(|m| &m.inner).ok_or_else(|| null(what))
}

unsafe fn path_arg(p: *const c_char) -> Result<String, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Failure(CrossimStatus::InvalidParam, "path is not valid UTF-8".into()))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(value);
    Ok(())
}

fn into_handle(m: ActivationMatrix) -> *mut CrossimMatrix {
    Box::into_raw(Box::new(CrossimMatrix { inner: m }))
}

/// Message of the last failed call on this thread, or null if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn crossim_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn crossim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies `rows * cols` row-major doubles into a new matrix.
///
/// # Safety
/// `data` must point to `rows * cols` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn crossim_matrix_new(
    data: *const f64,
    rows: usize,
    cols: usize,
    out: *mut *mut CrossimMatrix,
) -> CrossimStatus {
    guard(|| {
        if data.is_null() {
            return Err(null("data"));
        }
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| Failure(CrossimStatus::InvalidParam, "rows * cols overflows".into()))?;
        let values = std::slice::from_raw_parts(data, len);
        let m = ActivationMatrix::from_row_slice(rows, cols, values)?;
        write_out(out, into_handle(m))
    })
}

/// Reads a `.npy` dump (2-D, float32 or float64).
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn crossim_matrix_read_npy(path: *const c_char, out: *mut *mut CrossimMatrix) -> CrossimStatus {
    guard(|| {
        let path = path_arg(path)?;
        let m = npy::read_activation_dump(path)?;
        write_out(out, into_handle(m))
    })
}

/// Writes the matrix as a float64 `.npy` file.
///
/// # Safety
/// `m` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn crossim_matrix_write_npy(m: *const CrossimMatrix, path: *const c_char) -> CrossimStatus {
    guard(|| {
        let m = matrix(m, "matrix")?;
        let path = path_arg(path)?;
        npy::write_activation_dump(path, m)?;
        Ok(())
    })
}

/// Row count, or 0 for a null handle.
///
/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn crossim_matrix_rows(m: *const CrossimMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.inner.rows())
}

/// Column count, or 0 for a null handle.
///
/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn crossim_matrix_cols(m: *const CrossimMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.inner.cols())
}

/// Copies the matrix out row-major into `buffer` (`len >= rows * cols`).
///
/// # Safety
/// `m` must be a live handle; `buffer` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn crossim_matrix_copy(m: *const CrossimMatrix, buffer: *mut f64, len: usize) -> CrossimStatus {
    guard(|| {
        let m = matrix(m, "matrix")?;
        if buffer.is_null() {
            return Err(null("buffer"));
        }
        let values = m.to_row_major();
        if len < values.len() {
            return Err(Failure(
                CrossimStatus::InvalidParam,
                format!("buffer holds {len} values, need {}", values.len()),
            ));
        }
        ptr::copy_nonoverlapping(values.as_ptr(), buffer, values.len());
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `m` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn crossim_matrix_free(m: *mut CrossimMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Scores `x` against `y` with one index. Inputs are raw activations; columns
/// are centered internally. `svcca_threshold` is only read for SVCCA and must
/// lie in (0, 1]. ANC zero-fills degenerate neurons.
///
/// # Safety
/// `x` and `y` must be live handles; `score` must be writable.
#[no_mangle]
pub unsafe extern "C" fn crossim_similarity(
    x: *const CrossimMatrix,
    y: *const CrossimMatrix,
    index: CrossimIndex,
    svcca_threshold: f64,
    score: *mut f64,
) -> CrossimStatus {
    guard(|| {
        let (x, y) = (matrix(x, "x")?, matrix(y, "y")?);
        let params = IndexParams {
            svcca_threshold,
            ..IndexParams::default()
        };
        let r = indexes::compute(index.into(), &center_columns(x), &center_columns(y), &params)?;
        write_out(score, r.score)
    })
}

/// Per-neuron |correlation| of aligned neuron pairs, written to `out`
/// (`len >= cols`). Returns the mean through `mean` (may be null) and the
/// number of zero-variance neuron pairs through `degenerate` (may be null).
///
/// # Safety
/// `x` and `y` must be live handles; `out` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn crossim_anc_components(
    x: *const CrossimMatrix,
    y: *const CrossimMatrix,
    out: *mut f64,
    len: usize,
    mean: *mut f64,
    degenerate: *mut usize,
) -> CrossimStatus {
    guard(|| {
        let (x, y) = (matrix(x, "x")?, matrix(y, "y")?);
        if out.is_null() {
            return Err(null("out"));
        }
        let r = indexes::anc(&center_columns(x), &center_columns(y), DegeneratePolicy::Zero)?;
        let components = r.components.unwrap_or_default();
        if len < components.len() {
            return Err(Failure(
                CrossimStatus::InvalidParam,
                format!("buffer holds {len} values, need {}", components.len()),
            ));
        }
        ptr::copy_nonoverlapping(components.as_ptr(), out, components.len());
        if !mean.is_null() {
            mean.write(r.score);
        }
        if !degenerate.is_null() {
            degenerate.write(r.degenerate_count);
        }
        Ok(())
    })
}

/// Fraction of rows of `x` whose cosine nearest row in `y` is the row with
/// the same index.
///
/// # Safety
/// `x` and `y` must be live handles; `accuracy` must be writable.
#[no_mangle]
pub unsafe extern "C" fn crossim_matching_accuracy(
    x: *const CrossimMatrix,
    y: *const CrossimMatrix,
    accuracy: *mut f64,
) -> CrossimStatus {
    guard(|| {
        let (x, y) = (matrix(x, "x")?, matrix(y, "y")?);
        let r = crossim::matching_accuracy(x, y)?;
        write_out(accuracy, r.accuracy)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn handle(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> *mut CrossimMatrix {
        let data: Vec<f64> = (0..rows * cols).map(|k| f(k / cols, k % cols)).collect();
        let mut out = ptr::null_mut();
        assert_eq!(unsafe { crossim_matrix_new(data.as_ptr(), rows, cols, &mut out) }, CrossimStatus::Ok);
        out
    }

    #[test]
    fn self_similarity_is_one() {
        let x = handle(20, 4, |i, j| ((i * 7 + j * 3) as f64).sin());
        for index in [CrossimIndex::Anc, CrossimIndex::Cka, CrossimIndex::Cca, CrossimIndex::Svcca, CrossimIndex::Pwcca] {
            let mut s = 0.0;
            assert_eq!(unsafe { crossim_similarity(x, x, index, 0.99, &mut s) }, CrossimStatus::Ok);
            assert!((s - 1.0).abs() < 1e-9, "{index:?}: {s}");
        }
        unsafe { crossim_matrix_free(x) };
    }

    #[test]
    fn errors_set_message() {
        let x = handle(5, 2, |i, j| (i + j * j) as f64);
        let y = handle(6, 2, |i, j| (i * j) as f64);
        let mut s = 0.0;
        assert_eq!(unsafe { crossim_similarity(x, y, CrossimIndex::Cka, 0.99, &mut s) }, CrossimStatus::ShapeMismatch);
        let msg = unsafe { CStr::from_ptr(crossim_last_error_message()) }.to_str().unwrap();
        assert!(msg.contains("5") && msg.contains("6"), "{msg}");
        assert_eq!(
            unsafe { crossim_similarity(ptr::null(), y, CrossimIndex::Cka, 0.99, &mut s) },
            CrossimStatus::NullPointer
        );
        unsafe {
            crossim_matrix_free(x);
            crossim_matrix_free(y);
        }
    }

    #[test]
    fn non_finite_input_rejected() {
        let data = [1.0, f64::NAN, 2.0, 3.0];
        let mut out = ptr::null_mut();
        assert_eq!(unsafe { crossim_matrix_new(data.as_ptr(), 2, 2, &mut out) }, CrossimStatus::InvalidData);
        assert!(out.is_null());
    }
}
