//! Balanced two-way splits of a block's rows and columns that keep as much
//! squared residual mass as possible inside the two diagonal sub-blocks.
//!
//! For a residual `R` let `S = R ∘ R`. A dissection picks row groups
//! `I1, I2` and column groups `J1, J2` (sizes `⌊·/2⌋` and `⌈·/2⌉`) to
//! maximize `sum_{I1 x J1} S + sum_{I2 x J2} S`. Spectral relaxations give a
//! starting split; [`greedy_refine`] then improves it by pair swaps.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dense::{ensure_symmetric, DenseMatrix};
use crate::error::{MlrError, Result};
use crate::lanczos::{partial_eig, EigOrder, LanczosOptions};
use crate::lowrank::{truncated_svd, SYMMETRY_TOL};

/// Above this size the Laplacian eigenvector comes from Lanczos.
const DENSE_EIG_LIMIT: usize = 600;

/// Default cap on applied swaps in [`greedy_refine`].
pub const DEFAULT_MAX_SWAPS: usize = 5000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dissection {
    /// `[group 1, group 2]`, each sorted; group 1 has `⌊m/2⌋` rows.
    pub row_groups: [Vec<usize>; 2],
    pub col_groups: [Vec<usize>; 2],
    /// Within-group sum of `S = R ∘ R`.
    pub objective: f64,
}

impl Dissection {
    /// Build from group-1 membership flags, computing the objective.
    pub fn from_membership(s: &DMatrix<f64>, row_in_first: &[bool], col_in_first: &[bool]) -> Self {
        let split = |flags: &[bool]| {
            let mut g = [Vec::new(), Vec::new()];
            for (i, &f) in flags.iter().enumerate() {
                g[usize::from(!f)].push(i);
            }
            g
        };
        let row_groups = split(row_in_first);
        let col_groups = split(col_in_first);
        let objective = within_group_sum(s, &row_groups, &col_groups);
        Dissection {
            row_groups,
            col_groups,
            objective,
        }
    }

    /// Row indices in new order: group 1 then group 2.
    pub fn row_order(&self) -> Vec<usize> {
        self.row_groups.concat()
    }

    pub fn col_order(&self) -> Vec<usize> {
        self.col_groups.concat()
    }

    /// Group sizes are `⌊·/2⌋, ⌈·/2⌉` and the groups cover `0..m`, `0..n`.
    pub fn is_balanced(&self, m: usize, n: usize) -> bool {
        let ok = |g: &[Vec<usize>; 2], len: usize| {
            let mut all = g.concat();
            all.sort_unstable();
            g[0].len() == len / 2 && g[1].len() == len - len / 2 && all.iter().copied().eq(0..len)
        };
        ok(&self.row_groups, m) && ok(&self.col_groups, n)
    }
}

/// Elementwise square `R ∘ R`.
pub fn affinity(r: &DenseMatrix) -> DMatrix<f64> {
    r.map(|v| v * v)
}

pub fn within_group_sum(s: &DMatrix<f64>, rows: &[Vec<usize>; 2], cols: &[Vec<usize>; 2]) -> f64 {
    let mut total = 0.0;
    for g in 0..2 {
        for &j in &cols[g] {
            for &i in &rows[g] {
                total += s[(i, j)];
            }
        }
    }
    total
}

/// `S̃ = S - a 1^T - 1 b^T` with `a = (S1 - (1^T S 1 / 2m) 1) / n` and
/// `b = (S^T 1 - (1^T S 1 / 2n) 1) / m`, so that `S̃ 1 = 0` and
/// `S̃^T 1 = 0`.
pub fn centered_affinity(s: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, n) = s.shape();
    let row_sums: DVector<f64> = s.column_sum();
    let col_sums: DVector<f64> = s.row_sum().transpose();
    let total = row_sums.sum();
    let a = row_sums.map(|v| (v - total / (2.0 * m as f64)) / n as f64);
    let b = col_sums.map(|v| (v - total / (2.0 * n as f64)) / m as f64);
    DMatrix::from_fn(m, n, |i, j| s[(i, j)] - a[i] - b[j])
}

/// Indices with the `⌊len/2⌋` smallest entries of `x` (ties by index).
fn lower_half(x: &[f64]) -> Vec<bool> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
    let mut first = vec![false; x.len()];
    for &i in &idx[..x.len() / 2] {
        first[i] = true;
    }
    first
}

/// Fix the sign of a vector pair so the largest-magnitude entry of `u` is
/// positive.
fn canonical_sign(u: &mut DVector<f64>, v: Option<&mut DVector<f64>>) {
    let pivot = u.iter().enumerate().fold(0, |best, (i, x)| if x.abs() > u[best].abs() { i } else { best });
    if u[pivot] < 0.0 {
        u.neg_mut();
        if let Some(v) = v {
            v.neg_mut();
        }
    }
}

/// Symmetric spectral dissection: split by the eigenvector of the second
/// smallest eigenvalue of the Laplacian built from `S = R ∘ R`. Rows and
/// columns get the same groups.
pub fn dissect_symmetric(r: &DenseMatrix) -> Result<Dissection> {
    let n = r.nrows();
    if r.ncols() != n {
        return Err(MlrError::dims(format!("{n}x{n}"), format!("{n}x{}", r.ncols())));
    }
    if n < 2 {
        return Err(MlrError::Config("dissection needs at least 2 rows and columns".into()));
    }
    ensure_symmetric(r, SYMMETRY_TOL)?;
    let s = affinity(r);
    let s = (&s + s.transpose()) * 0.5;
    let smax = s.amax();
    if smax == 0.0 {
        return Err(MlrError::DegenerateSpectrum);
    }
    // Weights shifted up slightly so every pair is connected.
    let c = 1e-12 * smax;
    let mut lap = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { -(s[(i, j)] + c) });
    for i in 0..n {
        lap[(i, i)] = -lap.row(i).sum();
    }
    let mut fiedler = if n <= DENSE_EIG_LIMIT {
        let eig = SymmetricEigen::try_new(lap, f64::EPSILON, 100_000)
            .ok_or_else(|| MlrError::EigenFailure("Laplacian eigensolver did not converge".into()))?;
        let vals = eig.eigenvalues.as_slice();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]).then(a.cmp(&b)));
        eig.eigenvectors.column(idx[1]).clone_owned()
    } else {
        // Largest eigenvalue of -L - alpha 11^T/n is -lambda_2(L) once the
        // constant null vector is pushed far down.
        let alpha = 4.0 * lap.diagonal().max() + 1.0;
        let shifted = -lap - DMatrix::from_element(n, n, alpha / n as f64);
        partial_eig(&shifted, 1, EigOrder::Largest, None, &LanczosOptions::default())?
            .vectors
            .column(0)
            .clone_owned()
    };
    canonical_sign(&mut fiedler, None);
    let first = lower_half(fiedler.as_slice());
    Ok(Dissection::from_membership(&s, &first, &first))
}

/// Relaxed bipartite split vectors: the leading singular pair of the
/// centered affinity `S̃`, which maximizes `x^T S̃ y` over unit vectors
/// orthogonal to the constant vector.
pub fn bipartite_vectors(s: &DMatrix<f64>) -> Result<(DVector<f64>, DVector<f64>, f64)> {
    let st = centered_affinity(s);
    let svd = truncated_svd(&st, 1)?;
    let sigma = svd.singular_values[0];
    if !(sigma > 1e-12 * s.norm()) {
        return Err(MlrError::DegenerateSpectrum);
    }
    let mut u = svd.u.column(0).clone_owned();
    let mut v = svd.v.column(0).clone_owned();
    canonical_sign(&mut u, Some(&mut v));
    Ok((u, v, sigma))
}

/// Non-symmetric dissection: rows split by `u` and columns by `v` from
/// [`bipartite_vectors`], lower halves paired together.
pub fn dissect_bipartite(r: &DenseMatrix) -> Result<Dissection> {
    let (m, n) = r.shape();
    if m < 2 || n < 2 {
        return Err(MlrError::Config("dissection needs at least 2 rows and columns".into()));
    }
    let s = affinity(r);
    let (u, v, _) = bipartite_vectors(&s)?;
    Ok(Dissection::from_membership(
        &s,
        &lower_half(u.as_slice()),
        &lower_half(v.as_slice()),
    ))
}

/// Balanced split of interleaved indices, used when the spectrum carries no
/// information (for example a constant residual).
pub fn alternating_split(r: &DenseMatrix) -> Dissection {
    let first = |len: usize| (0..len).map(|i| i % 2 == 1).collect::<Vec<_>>();
    Dissection::from_membership(&affinity(r), &first(r.nrows()), &first(r.ncols()))
}

/// Spectral dissection followed by greedy refinement, falling back to
/// [`alternating_split`] on a degenerate spectrum.
pub fn dissect(r: &DenseMatrix, symmetric: bool, max_swaps: usize) -> Result<Dissection> {
    let initial = if symmetric {
        dissect_symmetric(r)
    } else {
        dissect_bipartite(r)
    };
    let d = match initial {
        Ok(d) => d,
        Err(MlrError::DegenerateSpectrum) => alternating_split(r),
        Err(e) => return Err(e),
    };
    Ok(greedy_refine(r, d, symmetric, max_swaps).0)
}

/// Improve a dissection by swapping pairs, one index from each group,
/// whenever the swap strictly increases the objective. Pairs are scanned in
/// row-major order and the scan restarts after every applied swap. For
/// non-symmetric splits row passes and column passes alternate; symmetric
/// splits move a row and its column together. Stops at a local optimum or
/// after `max_swaps` swaps, returning the refined split and the number of
/// swaps applied.
pub fn greedy_refine(r: &DenseMatrix, d: Dissection, symmetric: bool, max_swaps: usize) -> (Dissection, usize) {
    let s = affinity(r);
    let tol = 1e-12 * s.sum();
    let (m, n) = s.shape();
    let member = |g: &[Vec<usize>; 2], len: usize| {
        let mut f = vec![false; len];
        for &i in &g[0] {
            f[i] = true;
        }
        f
    };
    let mut rows = member(&d.row_groups, m);
    let mut swaps = 0;
    if symmetric {
        let s = (&s + s.transpose()) * 0.5;
        swaps = refine_symmetric(&s, &mut rows, max_swaps, tol);
        let out = Dissection::from_membership(&s, &rows, &rows);
        return (out, swaps);
    }
    let mut cols = member(&d.col_groups, n);
    loop {
        let a = refine_side(&s, &mut rows, &cols, max_swaps - swaps, tol);
        swaps += a;
        let st = s.transpose();
        let b = refine_side(&st, &mut cols, &rows, max_swaps - swaps, tol);
        swaps += b;
        if (a == 0 && b == 0) || swaps >= max_swaps {
            break;
        }
    }
    (Dissection::from_membership(&s, &rows, &cols), swaps)
}

/// Row swaps with the column groups fixed. Moving row `a` from group 1 to
/// group 2 and row `b` the other way changes the objective by
/// `S_a(J2) - S_a(J1) + S_b(J1) - S_b(J2)`.
fn refine_side(s: &DMatrix<f64>, rows: &mut [bool], cols: &[bool], budget: usize, tol: f64) -> usize {
    let m = s.nrows();
    // gain[i] = S_i(J2) - S_i(J1): benefit of row i sitting in group 2.
    let gain: Vec<f64> = (0..m)
        .map(|i| {
            s.row(i)
                .iter()
                .zip(cols)
                .map(|(v, &first)| if first { -v } else { *v })
                .sum()
        })
        .collect();
    let mut applied = 0;
    'scan: while applied < budget {
        for a in (0..m).filter(|&a| rows[a]) {
            for b in (0..m).filter(|&b| !rows[b]) {
                if gain[a] - gain[b] > tol {
                    rows[a] = false;
                    rows[b] = true;
                    applied += 1;
                    continue 'scan;
                }
            }
        }
        break;
    }
    applied
}

/// Symmetric swaps of `a` (group 1) and `b` (group 2); with
/// `D_i(G) = sum_{j in G} S_ij` the change is
/// `2 [D_a(G2) - D_a(G1) + D_b(G1) - D_b(G2) + S_aa + S_bb - 2 S_ab]`.
fn refine_symmetric(s: &DMatrix<f64>, first: &mut [bool], budget: usize, tol: f64) -> usize {
    let n = s.nrows();
    // diff[i] = D_i(G2) - D_i(G1)
    let mut diff: Vec<f64> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if first[j] { -s[(i, j)] } else { s[(i, j)] })
                .sum()
        })
        .collect();
    let mut applied = 0;
    'scan: while applied < budget {
        for a in (0..n).filter(|&a| first[a]) {
            for b in (0..n).filter(|&b| !first[b]) {
                let delta = 2.0 * (diff[a] - diff[b] + s[(a, a)] + s[(b, b)] - 2.0 * s[(a, b)]);
                if delta > tol {
                    first[a] = false;
                    first[b] = true;
                    for (i, d) in diff.iter_mut().enumerate() {
                        // a left G1 for G2, b left G2 for G1.
                        *d += 2.0 * s[(i, a)] - 2.0 * s[(i, b)];
                    }
                    applied += 1;
                    continue 'scan;
                }
            }
        }
        break;
    }
    applied
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// All balanced group-1 membership vectors of length `len`.
    fn balanced(len: usize) -> Vec<Vec<bool>> {
        (0u32..1 << len)
            .filter(|mask| mask.count_ones() as usize == len / 2)
            .map(|mask| (0..len).map(|i| mask >> i & 1 == 1).collect())
            .collect()
    }

    fn brute_force(s: &DMatrix<f64>, symmetric: bool) -> f64 {
        let (m, n) = s.shape();
        let mut best = f64::NEG_INFINITY;
        for rows in balanced(m) {
            if symmetric {
                best = best.max(Dissection::from_membership(s, &rows, &rows).objective);
            } else {
                for cols in balanced(n) {
                    best = best.max(Dissection::from_membership(s, &rows, &cols).objective);
                }
            }
        }
        best
    }

    fn noise(m: usize, n: usize, scale: f64, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(m, n, |_, _| scale * rng.random_range(-1.0..1.0))
    }

    #[test]
    fn two_by_two_blocks_recovered() {
        // Blocks {0, 2} and {1, 3}.
        let mut r = DMatrix::from_fn(4, 4, |i, j| if i % 2 == j % 2 { 1.0 } else { 0.0 });
        let e = noise(4, 4, 1e-3, 1);
        r += (&e + e.transpose()) * 0.5;
        let d = dissect_symmetric(&r).unwrap();
        let s = affinity(&r);
        assert!((d.objective - brute_force(&s, true)).abs() < 1e-12);
        let mut g = d.row_groups.clone();
        g.sort();
        assert_eq!(g, [vec![0, 2], vec![1, 3]]);
    }

    #[test]
    fn two_by_two_has_only_diagonal_mass() {
        let r = DMatrix::from_row_slice(2, 2, &[2.0, 5.0, 5.0, 3.0]);
        let d = dissect_symmetric(&r).unwrap();
        assert!((d.objective - 13.0).abs() < 1e-12);
        assert!(d.is_balanced(2, 2));
    }

    #[test]
    fn constant_matrix_any_split_is_optimal() {
        let r = DMatrix::from_element(7, 7, 2.0);
        let d = dissect(&r, true, DEFAULT_MAX_SWAPS).unwrap();
        assert!((d.objective - brute_force(&affinity(&r), true)).abs() < 1e-9);
        let d = dissect(&r, false, DEFAULT_MAX_SWAPS).unwrap();
        assert!((d.objective - brute_force(&affinity(&r), false)).abs() < 1e-9);
        assert!(matches!(dissect_bipartite(&r), Err(MlrError::DegenerateSpectrum)));
    }

    #[test]
    fn planted_bipartite_cocluster() {
        // Rows {1, 3, 4} with columns {0, 3}; rows {0, 2, 5} with columns {1, 2}.
        let rows_a = [1, 3, 4];
        let cols_a = [0, 3];
        let r = DMatrix::from_fn(6, 4, |i, j| {
            if rows_a.contains(&i) == cols_a.contains(&j) {
                1.0
            } else {
                0.0
            }
        });
        let d = dissect_bipartite(&r).unwrap();
        assert!((d.objective - brute_force(&affinity(&r), false)).abs() < 1e-12);
        assert_eq!(d.objective, 12.0);
    }

    #[test]
    fn centering_identity() {
        let s = affinity(&noise(5, 7, 1.0, 2));
        let st = centered_affinity(&s);
        let tol = 1e-10 * s.norm();
        assert!(st.column_sum().amax() <= tol);
        assert!(st.row_sum().amax() <= tol);
    }

    #[test]
    fn one_misassigned_row_fixed_by_one_swap() {
        let r = DMatrix::from_fn(6, 6, |i, j| if (i < 3) == (j < 3) { 1.0 } else { 0.1 });
        let rows = vec![true, true, false, false, true, false];
        let good = vec![true, true, true, false, false, false];
        let s = affinity(&r);
        let start = Dissection::from_membership(&s, &rows, &good);
        let (d, swaps) = greedy_refine(&r, start, false, DEFAULT_MAX_SWAPS);
        assert_eq!(swaps, 1);
        assert!((d.objective - brute_force(&s, false)).abs() < 1e-12);
    }

    #[test]
    fn refine_respects_budget_and_optimum() {
        let r = DMatrix::from_fn(6, 6, |i, j| if (i < 3) == (j < 3) { 1.0 } else { 0.1 });
        let s = affinity(&r);
        let good = vec![true, true, true, false, false, false];
        let opt = Dissection::from_membership(&s, &good, &good);
        let (d, swaps) = greedy_refine(&r, opt.clone(), true, DEFAULT_MAX_SWAPS);
        assert_eq!(swaps, 0);
        assert_eq!(d, opt);
        let bad = vec![true, false, true, false, true, false];
        let start = Dissection::from_membership(&s, &bad, &bad);
        let (d, swaps) = greedy_refine(&r, start.clone(), true, 0);
        assert_eq!(swaps, 0);
        assert_eq!(d, start);
    }

    #[test]
    fn large_symmetric_uses_iterative_path() {
        let n = 640;
        let r = DMatrix::from_fn(n, n, |i, j| if (i % 2) == (j % 2) { 1.0 } else { 0.05 });
        let d = dissect_symmetric(&r).unwrap();
        assert!(d.is_balanced(n, n));
        let mut g = d.row_groups.clone();
        g.sort();
        assert!(g[0].iter().all(|i| i % 2 == 0) || g[0].iter().all(|i| i % 2 == 1));
    }
}
