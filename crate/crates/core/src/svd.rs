//! Dense thin SVD. nalgebra's SVD loses accuracy on rank-deficient inputs
//! (exact low rank residuals are common here), so the decomposition is
//! delegated to faer.

use faer::Mat;
use nalgebra::DMatrix;

use crate::error::{MlrError, Result};

/// `a = u diag(s) v^T` with `s` non-increasing; `u` is `m x d`, `v` is
/// `n x d`, `d = min(m, n)`.
pub(crate) fn thin_svd(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    let (m, n) = a.shape();
    let d = m.min(n);
    if d == 0 {
        return Ok((DMatrix::zeros(m, 0), Vec::new(), DMatrix::zeros(n, 0)));
    }
    let f = Mat::<f64>::from_fn(m, n, |i, j| a[(i, j)]);
    let svd = f
        .thin_svd()
        .map_err(|e| MlrError::SvdFailure(format!("{m}x{n} dense SVD failed: {e:?}")))?;
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    Ok((
        DMatrix::from_fn(m, d, |i, j| u[(i, j)]),
        (0..d).map(|i| s[i]).collect(),
        DMatrix::from_fn(n, d, |i, j| v[(i, j)]),
    ))
}
