//! Partial singular value and eigenvalue decompositions by Lanczos
//! iterations with full reorthogonalization.
//!
//! Both routines grow a Krylov basis until the `k` wanted Ritz pairs have
//! residual at most `tol * |theta_1|`, or the basis spans the whole space (in
//! which case the Ritz pairs are exact). A breakdown (an invariant subspace
//! found early) is continued with a fresh random direction orthogonal to the
//! current basis, which keeps the Lanczos relations intact.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{MlrError, Result};

/// Relative size below which a Lanczos coefficient counts as a breakdown.
const BREAKDOWN: f64 = 1e-13;
const SEED: u64 = 0x4d4c_525f_4c41_4e43;

#[derive(Clone, Debug)]
pub struct LanczosOptions {
    pub tol: f64,
    /// Cap on Lanczos steps; `None` means `1000 * k`.
    pub max_steps: Option<usize>,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions {
            tol: 1e-10,
            max_steps: None,
        }
    }
}

/// Leading singular triplets, singular values non-increasing.
pub(crate) struct PartialSvd {
    pub values: Vec<f64>,
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
}

/// Eigenpairs ordered by the requested criterion.
pub(crate) struct PartialEig {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EigOrder {
    /// Largest `|lambda|` first.
    Magnitude,
    /// Largest `lambda` first.
    Largest,
}

struct Basis {
    vectors: Vec<DVector<f64>>,
}

impl Basis {
    fn new() -> Self {
        Basis {
            vectors: Vec::new(),
        }
    }

    /// Two passes of classical Gram-Schmidt against the basis.
    fn orthogonalize(&self, w: &mut DVector<f64>) {
        for _ in 0..2 {
            for q in &self.vectors {
                let c = q.dot(w);
                w.axpy(-c, q, 1.0);
            }
        }
    }

    fn random_orthonormal(&self, dim: usize, rng: &mut ChaCha8Rng) -> Option<DVector<f64>> {
        if self.vectors.len() >= dim {
            return None;
        }
        for _ in 0..8 {
            let mut w = DVector::from_fn(dim, |_, _| StandardNormal.sample(rng));
            self.orthogonalize(&mut w);
            let norm = w.norm();
            if norm > 1e-8 {
                return Some(w / norm);
            }
        }
        None
    }

    fn to_matrix(&self, dim: usize) -> DMatrix<f64> {
        if self.vectors.is_empty() {
            return DMatrix::zeros(dim, 0);
        }
        DMatrix::from_columns(&self.vectors)
    }
}

fn start_vector(
    dim: usize,
    warm: Option<&DMatrix<f64>>,
    rng: &mut ChaCha8Rng,
) -> DVector<f64> {
    let mut v = DVector::from_fn(dim, |_, _| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng));
    if let Some(w) = warm.filter(|w| w.nrows() == dim && w.ncols() > 0) {
        // Mostly the warm subspace, with a little noise so directions outside
        // it are still reachable.
        let mut s = DVector::zeros(dim);
        for c in w.column_iter() {
            let norm = c.norm();
            if norm > 0.0 {
                s.axpy(1.0 / norm, &c, 1.0);
            }
        }
        let sn = s.norm();
        if sn > 0.0 {
            v *= 1e-3 / v.norm();
            v.axpy(1.0 / sn, &s, 1.0);
        }
    }
    let norm = v.norm();
    v / norm
}

fn step_cap(k: usize, opts: &LanczosOptions) -> usize {
    opts.max_steps.unwrap_or(1000 * k.max(1))
}

fn sort_desc(values: &[f64], key: impl Fn(f64) -> f64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| key(values[b]).total_cmp(&key(values[a])).then(a.cmp(&b)));
    idx
}

/// Leading `k` singular triplets of `a` by Golub-Kahan-Lanczos
/// bidiagonalization.
pub(crate) fn partial_svd(
    a: &DMatrix<f64>,
    k: usize,
    warm_right: Option<&DMatrix<f64>>,
    opts: &LanczosOptions,
) -> Result<PartialSvd> {
    let (m, n) = a.shape();
    let dim = m.min(n);
    assert!(k >= 1 && k <= dim);
    let scale = a.norm();
    if scale == 0.0 {
        return Ok(PartialSvd {
            values: vec![0.0; k],
            u: unit_columns(m, k),
            v: unit_columns(n, k),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ ((m as u64) << 32) ^ n as u64);
    let cap = step_cap(k, opts);
    let mut us = Basis::new();
    let mut vs = Basis::new();
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();

    vs.vectors.push(start_vector(n, warm_right, &mut rng));
    let check_from = (k + 8).min(dim);
    loop {
        let j = alphas.len();
        let v = &vs.vectors[j];
        let mut u = a * v;
        if let Some(prev) = us.vectors.last() {
            u.axpy(-betas[j - 1], prev, 1.0);
        }
        us.orthogonalize(&mut u);
        let alpha = u.norm();
        if alpha <= BREAKDOWN * scale {
            alphas.push(0.0);
            let fresh = us
                .random_orthonormal(m, &mut rng)
                .ok_or_else(|| MlrError::ConvergenceFailure("left basis exhausted".into()))?;
            us.vectors.push(fresh);
        } else {
            alphas.push(alpha);
            us.vectors.push(u / alpha);
        }
        let steps = j + 1;

        let mut w = a.tr_mul(&us.vectors[j]);
        w.axpy(-alphas[j], &vs.vectors[j], 1.0);
        vs.orthogonalize(&mut w);
        let beta = w.norm();
        let exhausted = steps >= dim;
        let broke_down = beta <= BREAKDOWN * scale;

        if exhausted || (steps >= check_from && (steps - check_from).is_multiple_of(4)) || steps >= cap {
            let beta_eff = if exhausted || broke_down { 0.0 } else { beta };
            if let Some(result) = try_extract_svd(&us, &vs, &alphas, &betas, beta_eff, k, opts.tol, m, n)? {
                return Ok(result);
            }
            if exhausted || steps >= cap {
                return Err(MlrError::ConvergenceFailure(format!(
                    "partial SVD: {k} triplets not converged after {steps} steps"
                )));
            }
        }
        if broke_down {
            betas.push(0.0);
            let fresh = vs
                .random_orthonormal(n, &mut rng)
                .ok_or_else(|| MlrError::ConvergenceFailure("right basis exhausted".into()))?;
            vs.vectors.push(fresh);
        } else {
            betas.push(beta);
            vs.vectors.push(w / beta);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn try_extract_svd(
    us: &Basis,
    vs: &Basis,
    alphas: &[f64],
    betas: &[f64],
    beta_next: f64,
    k: usize,
    tol: f64,
    m: usize,
    n: usize,
) -> Result<Option<PartialSvd>> {
    let j = alphas.len();
    let mut bidiag = DMatrix::zeros(j, j);
    for i in 0..j {
        bidiag[(i, i)] = alphas[i];
        if i + 1 < j {
            bidiag[(i, i + 1)] = betas[i];
        }
    }
    let (x, values_all, y) = crate::svd::thin_svd(&bidiag)?;
    let top = values_all[0];
    let converged = (0..k).all(|i| beta_next * x[(j - 1, i)].abs() <= tol * top);
    if !converged {
        return Ok(None);
    }
    let umat = us.to_matrix(m);
    let vmat = vs.to_matrix(n).columns(0, j).into_owned();
    let mut u = DMatrix::zeros(m, k);
    let mut v = DMatrix::zeros(n, k);
    let mut values = Vec::with_capacity(k);
    for c in 0..k {
        values.push(values_all[c]);
        u.set_column(c, &(&umat * x.column(c)));
        v.set_column(c, &(&vmat * y.column(c)));
    }
    Ok(Some(PartialSvd { values, u, v }))
}

/// `k` eigenpairs of the symmetric matrix `a` selected by `order`, by the
/// symmetric Lanczos process.
pub(crate) fn partial_eig(
    a: &DMatrix<f64>,
    k: usize,
    order: EigOrder,
    warm: Option<&DMatrix<f64>>,
    opts: &LanczosOptions,
) -> Result<PartialEig> {
    let n = a.nrows();
    assert!(k >= 1 && k <= n);
    let scale = a.norm();
    if scale == 0.0 {
        return Ok(PartialEig {
            values: vec![0.0; k],
            vectors: unit_columns(n, k),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 0x5359_4d00 ^ n as u64);
    let cap = step_cap(k, opts);
    let mut qs = Basis::new();
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    qs.vectors.push(start_vector(n, warm, &mut rng));
    let check_from = (2 * k + 8).min(n);
    loop {
        let j = alphas.len();
        let mut w = a * &qs.vectors[j];
        let alpha = qs.vectors[j].dot(&w);
        alphas.push(alpha);
        qs.orthogonalize(&mut w);
        let beta = w.norm();
        let steps = j + 1;
        let exhausted = steps >= n;
        let broke_down = beta <= BREAKDOWN * scale;
        if exhausted || (steps >= check_from && (steps - check_from).is_multiple_of(4)) || steps >= cap {
            let beta_eff = if exhausted || broke_down { 0.0 } else { beta };
            if let Some(result) = try_extract_eig(&qs, &alphas, &betas, beta_eff, k, order, opts.tol, n)? {
                return Ok(result);
            }
            if exhausted || steps >= cap {
                return Err(MlrError::ConvergenceFailure(format!(
                    "partial eigendecomposition: {k} pairs not converged after {steps} steps"
                )));
            }
        }
        if broke_down {
            betas.push(0.0);
            let fresh = qs
                .random_orthonormal(n, &mut rng)
                .ok_or_else(|| MlrError::ConvergenceFailure("Lanczos basis exhausted".into()))?;
            qs.vectors.push(fresh);
        } else {
            betas.push(beta);
            qs.vectors.push(w / beta);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn try_extract_eig(
    qs: &Basis,
    alphas: &[f64],
    betas: &[f64],
    beta_next: f64,
    k: usize,
    order: EigOrder,
    tol: f64,
    n: usize,
) -> Result<Option<PartialEig>> {
    let j = alphas.len();
    let mut tri = DMatrix::zeros(j, j);
    for i in 0..j {
        tri[(i, i)] = alphas[i];
        if i + 1 < j {
            tri[(i, i + 1)] = betas[i];
            tri[(i + 1, i)] = betas[i];
        }
    }
    let eig = SymmetricEigen::try_new(tri, f64::EPSILON, 10_000)
        .ok_or_else(|| MlrError::EigenFailure("tridiagonal eigensolver did not converge".into()))?;
    let vals = eig.eigenvalues.as_slice();
    let idx = match order {
        EigOrder::Magnitude => sort_desc(vals, f64::abs),
        EigOrder::Largest => sort_desc(vals, |v| v),
    };
    let top = vals.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let converged = idx[..k]
        .iter()
        .all(|&i| beta_next * eig.eigenvectors[(j - 1, i)].abs() <= tol * top);
    if !converged {
        return Ok(None);
    }
    let qmat = qs.to_matrix(n).columns(0, j).into_owned();
    let mut vectors = DMatrix::zeros(n, k);
    let mut values = Vec::with_capacity(k);
    for (c, &i) in idx[..k].iter().enumerate() {
        values.push(vals[i]);
        vectors.set_column(c, &(&qmat * eig.eigenvectors.column(i)));
    }
    Ok(Some(PartialEig { values, vectors }))
}

fn unit_columns(rows: usize, k: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, k, |i, j| if i == j { 1.0 } else { 0.0 })
}
