//! Exact best rank-`r` approximation in Frobenius norm: general (SVD),
//! symmetric and PSD (eigendecomposition), plus truncated spectra.
//!
//! Small problems use a full dense decomposition. When `r <= min(m, n) / 8`
//! and `min(m, n) > 128` a Lanczos method computes only the leading part.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::dense::{ensure_symmetric, DenseMatrix};
use crate::error::{MlrError, Result};
use crate::lanczos::{partial_eig, partial_svd, EigOrder, LanczosOptions};

/// Relative asymmetry tolerated by the symmetric solvers.
pub const SYMMETRY_TOL: f64 = 1e-8;

/// Leading singular triplets of a matrix.
#[derive(Clone, Debug)]
pub struct TruncatedSvd {
    /// `sigma_1 >= ... >= sigma_k >= 0`.
    pub singular_values: Vec<f64>,
    /// `m x k`, orthonormal columns.
    pub u: DMatrix<f64>,
    /// `n x k`, orthonormal columns.
    pub v: DMatrix<f64>,
    /// `sum_{i > k} sigma_i^2`.
    pub tail_energy: f64,
}

/// Leading eigenpairs of a symmetric matrix under some ordering.
#[derive(Clone, Debug)]
pub struct TruncatedEig {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
    /// Sum of squares of the eigenvalues not returned.
    pub tail_energy: f64,
}

pub use crate::lanczos::EigOrder as EigenOrder;

/// A factored approximation `left * diag(signs) * left^T`-style result:
/// `Â = left * right^T`, with `signs` filled for the symmetric solver.
#[derive(Clone, Debug)]
pub struct LowRankApprox {
    pub left: DMatrix<f64>,
    pub right: DMatrix<f64>,
    pub signs: Vec<f64>,
    /// `||A - left * right^T||_F^2`.
    pub err2: f64,
}

fn use_iterative(k: usize, m: usize, n: usize) -> bool {
    let d = m.min(n);
    d > 128 && k <= d / 8
}

pub fn truncated_svd(a: &DenseMatrix, k: usize) -> Result<TruncatedSvd> {
    truncated_svd_warm(a, k, None)
}

/// [`truncated_svd`] with optional previous right singular vectors used to
/// start the iterative method.
pub fn truncated_svd_warm(
    a: &DenseMatrix,
    k: usize,
    warm_right: Option<&DMatrix<f64>>,
) -> Result<TruncatedSvd> {
    let (m, n) = a.shape();
    let d = m.min(n);
    if k > d {
        return Err(MlrError::RankTooLarge { rank: k, max: d });
    }
    if k == 0 {
        return Ok(TruncatedSvd {
            singular_values: Vec::new(),
            u: DMatrix::zeros(m, 0),
            v: DMatrix::zeros(n, 0),
            tail_energy: a.norm_squared(),
        });
    }
    if use_iterative(k, m, n) {
        let part = partial_svd(a, k, warm_right, &LanczosOptions::default())?;
        let kept: f64 = part.values.iter().map(|s| s * s).sum();
        return Ok(TruncatedSvd {
            tail_energy: (a.norm_squared() - kept).max(0.0),
            singular_values: part.values,
            u: part.u,
            v: part.v,
        });
    }
    let (u_all, s, v_all) = crate::svd::thin_svd(a)?;
    Ok(TruncatedSvd {
        tail_energy: s[k..].iter().map(|x| x * x).sum(),
        singular_values: s[..k].to_vec(),
        u: u_all.columns(0, k).into_owned(),
        v: v_all.columns(0, k).into_owned(),
    })
}

/// The `k` largest singular values.
pub fn top_singular_values(a: &DenseMatrix, k: usize) -> Result<Vec<f64>> {
    let d = a.nrows().min(a.ncols());
    if k == 0 || k > d {
        return Err(MlrError::RankTooLarge { rank: k, max: d });
    }
    Ok(truncated_svd(a, k)?.singular_values)
}

/// `k` eigenpairs of a symmetric matrix, selected by `order`. The input is
/// symmetrized first.
pub fn truncated_eig(a: &DenseMatrix, k: usize, order: EigOrder) -> Result<TruncatedEig> {
    truncated_eig_warm(a, k, order, None)
}

pub fn truncated_eig_warm(
    a: &DenseMatrix,
    k: usize,
    order: EigOrder,
    warm: Option<&DMatrix<f64>>,
) -> Result<TruncatedEig> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(MlrError::dims(format!("{n}x{n}"), format!("{n}x{}", a.ncols())));
    }
    if k > n {
        return Err(MlrError::RankTooLarge { rank: k, max: n });
    }
    let sym = (a + a.transpose()) * 0.5;
    if k == 0 {
        return Ok(TruncatedEig {
            values: Vec::new(),
            vectors: DMatrix::zeros(n, 0),
            tail_energy: sym.norm_squared(),
        });
    }
    if use_iterative(k, n, n) {
        let part = partial_eig(&sym, k, order, warm, &LanczosOptions::default())?;
        let kept: f64 = part.values.iter().map(|v| v * v).sum();
        return Ok(TruncatedEig {
            tail_energy: (sym.norm_squared() - kept).max(0.0),
            values: part.values,
            vectors: part.vectors,
        });
    }
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 100_000)
        .ok_or_else(|| MlrError::EigenFailure(format!("{n}x{n} eigensolver did not converge")))?;
    let vals = eig.eigenvalues.as_slice();
    let mut idx: Vec<usize> = (0..n).collect();
    let key = |v: f64| match order {
        EigOrder::Magnitude => v.abs(),
        EigOrder::Largest => v,
    };
    idx.sort_by(|&x, &y| key(vals[y]).total_cmp(&key(vals[x])).then(x.cmp(&y)));
    let mut vectors = DMatrix::zeros(n, k);
    for (c, &i) in idx[..k].iter().enumerate() {
        vectors.set_column(c, &eig.eigenvectors.column(i));
    }
    Ok(TruncatedEig {
        values: idx[..k].iter().map(|&i| vals[i]).collect(),
        vectors,
        tail_energy: idx[k..].iter().map(|&i| vals[i] * vals[i]).sum(),
    })
}

/// Best rank-`r` approximation `B C^T` with `B = U_r Σ_r^{1/2}` and
/// `C = V_r Σ_r^{1/2}`.
pub fn best_rank_r(a: &DenseMatrix, r: usize) -> Result<LowRankApprox> {
    best_rank_r_warm(a, r, None)
}

pub fn best_rank_r_warm(
    a: &DenseMatrix,
    r: usize,
    warm_right: Option<&DMatrix<f64>>,
) -> Result<LowRankApprox> {
    let svd = truncated_svd_warm(a, r, warm_right)?;
    Ok(from_svd(svd))
}

pub(crate) fn from_svd(svd: TruncatedSvd) -> LowRankApprox {
    let TruncatedSvd {
        singular_values,
        mut u,
        mut v,
        tail_energy,
    } = svd;
    for (j, s) in singular_values.iter().enumerate() {
        let root = s.sqrt();
        u.column_mut(j).scale_mut(root);
        v.column_mut(j).scale_mut(root);
    }
    LowRankApprox {
        left: u,
        right: v,
        signs: Vec::new(),
        err2: tail_energy,
    }
}

/// Best symmetric rank-`r` approximation `B S B^T`, `B = Q_r |Λ_r|^{1/2}`,
/// with eigenvalues ordered by magnitude and `S = sign(Λ_r)`.
pub fn best_rank_r_symmetric(a: &DenseMatrix, r: usize) -> Result<LowRankApprox> {
    best_rank_r_symmetric_warm(a, r, None)
}

pub fn best_rank_r_symmetric_warm(
    a: &DenseMatrix,
    r: usize,
    warm: Option<&DMatrix<f64>>,
) -> Result<LowRankApprox> {
    ensure_symmetric(a, SYMMETRY_TOL)?;
    let eig = truncated_eig_warm(a, r, EigOrder::Magnitude, warm)?;
    // Off-symmetric part of A is orthogonal to every symmetric approximant.
    let skew = ((a - a.transpose()) * 0.5).norm_squared();
    let mut left = eig.vectors;
    let mut signs = Vec::with_capacity(r);
    for (j, &lambda) in eig.values.iter().enumerate() {
        left.column_mut(j).scale_mut(lambda.abs().sqrt());
        signs.push(if lambda < 0.0 { -1.0 } else { 1.0 });
    }
    let mut right = left.clone();
    for (j, s) in signs.iter().enumerate() {
        right.column_mut(j).scale_mut(*s);
    }
    Ok(LowRankApprox {
        left,
        right,
        signs,
        err2: eig.tail_energy + skew,
    })
}

/// Best PSD rank-`r` approximation `B B^T` from the `r` largest eigenvalues
/// clipped at zero.
pub fn best_rank_r_psd(a: &DenseMatrix, r: usize) -> Result<LowRankApprox> {
    best_rank_r_psd_warm(a, r, None)
}

pub fn best_rank_r_psd_warm(
    a: &DenseMatrix,
    r: usize,
    warm: Option<&DMatrix<f64>>,
) -> Result<LowRankApprox> {
    ensure_symmetric(a, SYMMETRY_TOL)?;
    let eig = truncated_eig_warm(a, r, EigOrder::Largest, warm)?;
    let skew = ((a - a.transpose()) * 0.5).norm_squared();
    let mut left = eig.vectors;
    let mut clipped = 0.0;
    for (j, &lambda) in eig.values.iter().enumerate() {
        if lambda > 0.0 {
            left.column_mut(j).scale_mut(lambda.sqrt());
        } else {
            left.column_mut(j).fill(0.0);
            clipped += lambda * lambda;
        }
    }
    Ok(LowRankApprox {
        right: left.clone(),
        left,
        signs: Vec::new(),
        err2: eig.tail_energy + clipped + skew,
    })
}

/// Singular values (general) or eigenvalue magnitudes that a rank change on
/// a block trades, listed in the order the corresponding solver keeps them:
/// singular values for general blocks, `|lambda|` by magnitude for symmetric
/// blocks, and `max(lambda, 0)` in decreasing order for PSD blocks.
pub(crate) fn leading_gains(a: &DenseMatrix, k: usize, kind: crate::mlr::Kind) -> Result<Vec<f64>> {
    use crate::mlr::Kind;
    let d = a.nrows().min(a.ncols());
    let k = k.min(d);
    if k == 0 {
        return Ok(Vec::new());
    }
    Ok(match kind {
        Kind::General => truncated_svd(a, k)?.singular_values,
        Kind::Symmetric => truncated_eig(a, k, EigOrder::Magnitude)?
            .values
            .into_iter()
            .map(f64::abs)
            .collect(),
        Kind::Psd => truncated_eig(a, k, EigOrder::Largest)?
            .values
            .into_iter()
            .map(|v| v.max(0.0))
            .collect(),
    })
}
