//! Rank allocation by rank exchange: move `q` units of rank from the level
//! where they are predicted to matter least to the level where they are
//! predicted to help most, refit, and keep the move only if the fit
//! improves.

use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{MlrError, Result};
use crate::fitting::{
    self, best_block, bcd_fit_contiguous, check_target, level_residuals, objective, relative, FitConfig,
    FitReport, Init, Termination,
};
use crate::lowrank::leading_gains;
use crate::mlr::{permute_to_contiguous, BlockFactors, Kind, MlrMatrix};

/// A proposed move of `units` rank from `loss_level` to `gain_level`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExchangeCandidate {
    pub gain_level: usize,
    pub loss_level: usize,
    pub units: usize,
    /// `delta_plus[gain_level] - delta_minus[loss_level]`.
    pub predicted_net: f64,
}

/// Predicted change in squared error when a level's rank moves by `q`,
/// with all other levels fixed.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelDeltas {
    /// Decrease from adding `q` to each level.
    pub plus: Vec<f64>,
    /// Increase from removing `q` from each level; `+inf` where the level
    /// has fewer than `q` units.
    pub minus: Vec<f64>,
}

/// `delta+_l = sum_k sum_{j=1..q} sigma_{r_l+j}(R_{l,k})^2` and
/// `delta-_l = sum_k sum_{j=1..q} sigma_{r_l-j+1}(R_{l,k})^2`.
///
/// `residuals[l][k]` is the level-`l` residual restricted to block `k`.
/// For symmetric kinds the eigenvalue magnitudes take the place of singular
/// values (positive eigenvalues only for PSD), matching what the block
/// solvers can capture.
pub fn level_deltas(
    residuals: &[Vec<DMatrix<f64>>],
    ranks: &[usize],
    q: usize,
    kind: Kind,
) -> Result<LevelDeltas> {
    if residuals.len() != ranks.len() {
        return Err(MlrError::dims(
            format!("{} levels", ranks.len()),
            format!("{} residual levels", residuals.len()),
        ));
    }
    if q == 0 {
        return Err(MlrError::Config("exchange units q must be at least 1".into()));
    }
    let mut plus = Vec::with_capacity(ranks.len());
    let mut minus = Vec::with_capacity(ranks.len());
    for (blocks, &r) in residuals.iter().zip(ranks) {
        let sums = blocks
            .par_iter()
            .map(|res| {
                let gains = leading_gains(res, r + q, kind)?;
                let sq = |j: usize| gains.get(j).map_or(0.0, |s| s * s);
                let p: f64 = (r..r + q).map(sq).sum();
                let m: f64 = if r >= q { (r - q..r).map(sq).sum() } else { 0.0 };
                Ok((p, m))
            })
            .collect::<Result<Vec<_>>>()?;
        plus.push(sums.iter().map(|s| s.0).sum());
        minus.push(if r >= q {
            sums.iter().map(|s| s.1).sum()
        } else {
            f64::INFINITY
        });
    }
    Ok(LevelDeltas { plus, minus })
}

/// [`level_deltas`] from the current fit of `mlr` to a contiguous target.
pub fn level_deltas_for(at: &DenseMatrix, mlr: &MlrMatrix, q: usize) -> Result<LevelDeltas> {
    let residuals: Vec<_> = (0..mlr.num_levels()).map(|l| level_residuals(at, mlr, l)).collect();
    level_deltas(&residuals, mlr.ranks().ranks(), q, mlr.kind())
}

/// All feasible `(i, j)` moves, best predicted net decrease first; ties go
/// to the lexicographically smallest `(i, j)`.
pub fn rank_candidates(deltas: &LevelDeltas, q: usize) -> Vec<ExchangeCandidate> {
    let num_levels = deltas.plus.len();
    let mut out = Vec::new();
    for i in 0..num_levels {
        for j in 0..num_levels {
            if i != j && deltas.minus[j].is_finite() {
                out.push(ExchangeCandidate {
                    gain_level: i,
                    loss_level: j,
                    units: q,
                    predicted_net: deltas.plus[i] - deltas.minus[j],
                });
            }
        }
    }
    // Stable sort keeps the (i, j) scan order among equal predictions.
    out.sort_by(|a, b| b.predicted_net.total_cmp(&a.predicted_net));
    out
}

/// Keep the `new_rank` dominant components of a block, found from a QR of
/// each factor and a small SVD (or eigendecomposition) of the core.
pub(crate) fn truncate_block(b: &BlockFactors, new_rank: usize, kind: Kind) -> Result<BlockFactors> {
    let (rows, cols) = (b.left.nrows(), b.right.nrows());
    let mut left = DMatrix::zeros(rows, new_rank);
    if b.rank() == 0 || new_rank == 0 {
        return Ok(BlockFactors::zeros(rows, cols, new_rank, kind));
    }
    let qr_l = b.left.clone().qr();
    let (ql, rl) = (qr_l.q(), qr_l.r());
    match kind {
        Kind::General => {
            let qr_r = b.right.clone().qr();
            let (qc, rc) = (qr_r.q(), qr_r.r());
            let core = &rl * rc.transpose();
            let (u, s, v) = crate::svd::thin_svd(&core)?;
            let mut right = DMatrix::zeros(cols, new_rank);
            for c in 0..new_rank.min(s.len()) {
                let root = s[c].sqrt();
                left.set_column(c, &(&ql * u.column(c) * root));
                right.set_column(c, &(&qc * v.column(c) * root));
            }
            Ok(BlockFactors {
                left,
                right,
                signs: Vec::new(),
            })
        }
        Kind::Symmetric | Kind::Psd => {
            let mut core = rl.clone();
            if kind == Kind::Symmetric {
                for (j, s) in b.signs.iter().enumerate() {
                    core.column_mut(j).scale_mut(*s);
                }
            }
            let core = &core * rl.transpose();
            let core = (&core + core.transpose()) * 0.5;
            let eig = SymmetricEigen::new(core);
            let vals = eig.eigenvalues.as_slice();
            let mut order: Vec<usize> = (0..vals.len()).collect();
            let key = |v: f64| if kind == Kind::Symmetric { v.abs() } else { v };
            order.sort_by(|&x, &y| key(vals[y]).total_cmp(&key(vals[x])).then(x.cmp(&y)));
            let mut signs = vec![1.0; new_rank];
            for (c, &i) in order.iter().take(new_rank).enumerate() {
                let lambda = if kind == Kind::Psd { vals[i].max(0.0) } else { vals[i] };
                left.set_column(c, &(&ql * eig.eigenvectors.column(i) * lambda.abs().sqrt()));
                if lambda < 0.0 {
                    signs[c] = -1.0;
                }
            }
            Ok(if kind == Kind::Symmetric {
                BlockFactors::symmetric(left, signs)
            } else {
                BlockFactors::psd(left)
            })
        }
    }
}

/// Result of one attempted exchange.
#[derive(Clone, Debug)]
pub struct ExchangeOutcome {
    pub accepted: bool,
    /// The candidate that was applied (if accepted) or the best one tried.
    pub candidate: ExchangeCandidate,
    /// Refit report of the accepted exchange, or of the last rejected try.
    pub report: FitReport,
}

/// Settings for [`allocate_ranks`] and [`rank_exchange_step`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AllocConfig {
    /// Settings for the BCD refits; `fit.init` applies to the first fit
    /// only and `fit.max_epochs` is ignored in favor of
    /// `epochs_per_exchange`.
    pub fit: FitConfig,
    /// Rank units moved per exchange.
    pub q: usize,
    pub max_exchanges: usize,
    /// BCD V-epochs after each exchange (and for the first fit).
    pub epochs_per_exchange: usize,
    /// Number of best-predicted exchanges tried before giving up.
    pub candidates: usize,
    /// Optionally stop once an accepted exchange improves the relative
    /// error by no more than this fraction.
    pub min_improvement: Option<f64>,
}

impl Default for AllocConfig {
    fn default() -> Self {
        AllocConfig {
            fit: FitConfig {
                eps_rel: 0.001,
                ..FitConfig::default()
            },
            q: 1,
            max_exchanges: 100,
            epochs_per_exchange: 2,
            candidates: 1,
            min_improvement: None,
        }
    }
}

impl AllocConfig {
    fn refit_config(&self) -> FitConfig {
        FitConfig {
            max_epochs: self.epochs_per_exchange,
            init: Init::Given,
            ..self.fit.clone()
        }
    }
}

/// Apply one exchange to a contiguous target: remove `q` units from the
/// loss level by truncation, then add `q` units to the gain level from the
/// best approximation of its residual.
pub(crate) fn apply_exchange(at: &DenseMatrix, mlr: &mut MlrMatrix, c: &ExchangeCandidate) -> Result<()> {
    let kind = mlr.kind();
    let (i, j, q) = (c.gain_level, c.loss_level, c.units);
    let rj = mlr.ranks()[j] - q;
    let shrunk = mlr
        .level_blocks(j)
        .iter()
        .map(|b| truncate_block(b, rj, kind))
        .collect::<Result<Vec<_>>>()?;
    mlr.replace_level(j, rj, shrunk);

    let ri = mlr.ranks()[i] + q;
    let grown = {
        let shared: &MlrMatrix = mlr;
        level_residuals(at, shared, i)
            .par_iter()
            .enumerate()
            .map(|(k, r)| best_block(r, ri, kind, Some(shared.block(i, k))))
            .collect::<Result<Vec<_>>>()?
    };
    mlr.replace_level(i, ri, grown);
    Ok(())
}

/// Try the best-predicted exchanges in turn (up to `cfg.candidates`),
/// refitting with warm-started BCD after each. The first one that does not
/// increase the error is kept; otherwise `mlr` is restored exactly.
pub fn rank_exchange_step(a: &DenseMatrix, mlr: &mut MlrMatrix, cfg: &AllocConfig) -> Result<ExchangeOutcome> {
    check_target(a, mlr)?;
    let at = permute_to_contiguous(a, mlr.partition())?;
    exchange_step_contiguous(&at, mlr, cfg)
}

pub(crate) fn exchange_step_contiguous(
    at: &DenseMatrix,
    mlr: &mut MlrMatrix,
    cfg: &AllocConfig,
) -> Result<ExchangeOutcome> {
    let deltas = level_deltas_for(at, mlr, cfg.q)?;
    let candidates = rank_candidates(&deltas, cfg.q);
    if candidates.is_empty() {
        return Err(MlrError::NoFeasibleExchange);
    }
    let before = objective(at, mlr);
    let snapshot = mlr.clone();
    let refit = cfg.refit_config();
    let mut last = None;
    // Traces of refits that were tried and undone.
    let mut discarded = Vec::new();
    for c in candidates.into_iter().take(cfg.candidates.max(1)) {
        apply_exchange(at, mlr, &c)?;
        let mut report = bcd_fit_contiguous(at, mlr, &refit)?;
        discarded.append(&mut report.objective_traces);
        report.objective_traces = std::mem::take(&mut discarded);
        if objective(at, mlr) <= before {
            return Ok(ExchangeOutcome {
                accepted: true,
                candidate: c,
                report,
            });
        }
        *mlr = snapshot.clone();
        discarded = std::mem::take(&mut report.objective_traces);
        last = Some((c, report));
    }
    let (candidate, mut report) = last.expect("at least one candidate was tried");
    report.objective_traces = discarded;
    Ok(ExchangeOutcome {
        accepted: false,
        candidate,
        report,
    })
}

/// Fit `mlr` to `a` with BCD, then repeat rank exchanges until one is
/// rejected, none is feasible, or the exchange budget is spent. The report
/// has one record per BCD epoch; the first epoch after each accepted
/// exchange is marked.
pub fn allocate_ranks(a: &DenseMatrix, mlr: &mut MlrMatrix, cfg: &AllocConfig) -> Result<FitReport> {
    check_target(a, mlr)?;
    let at = permute_to_contiguous(a, mlr.partition())?;
    allocate_ranks_contiguous(&at, mlr, cfg)
}

pub(crate) fn allocate_ranks_contiguous(
    at: &DenseMatrix,
    mlr: &mut MlrMatrix,
    cfg: &AllocConfig,
) -> Result<FitReport> {
    if cfg.q == 0 {
        return Err(MlrError::Config("exchange units q must be at least 1".into()));
    }
    let start = Instant::now();
    let first = FitConfig {
        max_epochs: cfg.epochs_per_exchange,
        ..cfg.fit.clone()
    };
    let mut report = bcd_fit_contiguous(at, mlr, &first)?;
    let norm2 = at.norm_squared();
    let mut current = relative(objective(at, mlr), norm2);
    report.termination = Termination::MaxExchanges;
    for _ in 0..cfg.max_exchanges {
        let outcome = match exchange_step_contiguous(at, mlr, cfg) {
            Ok(o) => o,
            Err(MlrError::NoFeasibleExchange) => {
                report.termination = Termination::NoFeasibleExchange;
                break;
            }
            Err(e) => return Err(e),
        };
        if !outcome.accepted {
            report.objective_traces.extend(outcome.report.objective_traces);
            report.termination = Termination::Rejected;
            break;
        }
        report.extend(outcome.report, true);
        let next = relative(objective(at, mlr), norm2);
        let stalled = cfg
            .min_improvement
            .is_some_and(|eps| fitting::stopping_check(current, next, eps));
        current = next;
        if stalled {
            report.termination = Termination::Converged;
            break;
        }
    }
    report.wall_time = start.elapsed().as_secs_f64();
    Ok(report)
}
