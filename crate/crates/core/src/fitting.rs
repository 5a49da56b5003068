//! Factor fitting for a fixed partition and rank allocation: block
//! coordinate descent (BCD) over levels and alternating least squares (ALS)
//! over all left / all right factors.
//!
//! Both minimize `||Ã - sum_l A^l||_F^2` where `Ã = P^T A Q` is the target
//! in contiguous form.

use std::io::Write;
use std::ops::Range;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dense::{ensure_finite, ensure_symmetric, DenseMatrix};
use crate::error::{MlrError, Result};
use crate::lowrank::{self, SYMMETRY_TOL};
use crate::mlr::{permute_to_contiguous, BlockFactors, Kind, MlrMatrix};

/// How factors are initialized before fitting.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// All factors zero.
    #[default]
    Zeros,
    /// Keep the factors already stored in the matrix (warm start).
    Given,
    /// Zeros followed by one BCD sweep over levels `1, ..., L`.
    BcdSingleSweep,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitConfig {
    /// Stop once an epoch improves the relative error by at most this
    /// fraction.
    pub eps_rel: f64,
    pub max_epochs: usize,
    /// Conjugate gradient steps per ALS half step.
    pub cg_steps: usize,
    pub init: Init,
    /// Record the objective after every block update.
    pub trace: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            eps_rel: 0.01,
            max_epochs: 100,
            cg_steps: 10,
            init: Init::Zeros,
            trace: false,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_rel > 0.0) || !self.eps_rel.is_finite() {
            return Err(MlrError::Config(format!("eps_rel must be positive, got {}", self.eps_rel)));
        }
        if self.cg_steps == 0 {
            return Err(MlrError::Config("cg_steps must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxEpochs,
    /// Rank allocation: the best exchange made the fit worse.
    Rejected,
    /// Rank allocation: the exchange budget ran out.
    MaxExchanges,
    /// Rank allocation: no pair of levels can trade rank.
    NoFeasibleExchange,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub rel_error: f64,
    pub ranks: Vec<usize>,
    /// First epoch after an accepted rank exchange.
    pub exchange: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitReport {
    /// Relative error of the initial factors.
    pub initial_rel_error: f64,
    pub epochs: Vec<EpochRecord>,
    pub termination: Termination,
    /// Seconds.
    pub wall_time: f64,
    /// One trace per fitting run (several after rank exchanges): the
    /// objective `||Ã - Â||_F^2` before the run and after every block update
    /// (BCD) or half step (ALS). Empty unless tracing was requested.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub objective_traces: Vec<Vec<f64>>,
}

impl FitReport {
    pub(crate) fn new(initial_rel_error: f64) -> Self {
        FitReport {
            initial_rel_error,
            epochs: Vec::new(),
            termination: Termination::MaxEpochs,
            wall_time: 0.0,
            objective_traces: Vec::new(),
        }
    }

    pub fn rel_errors(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.rel_error).collect()
    }

    pub fn epochs_run(&self) -> usize {
        self.epochs.len()
    }

    pub fn final_rel_error(&self) -> f64 {
        self.epochs.last().map_or(self.initial_rel_error, |e| e.rel_error)
    }

    /// Append another report's epochs, renumbering them after ours.
    pub(crate) fn extend(&mut self, other: FitReport, exchange: bool) {
        let base = self.epochs.len();
        for (i, mut e) in other.epochs.into_iter().enumerate() {
            e.epoch = base + i + 1;
            e.exchange |= exchange && i == 0;
            self.epochs.push(e);
        }
        self.objective_traces.extend(other.objective_traces);
    }

    /// CSV with header `epoch,rel_error,r_1,...,r_L,exchange`; epoch 0 is
    /// the initial state when `initial_ranks` is given.
    pub fn write_trajectory_csv<W: Write>(&self, initial_ranks: Option<&[usize]>, mut w: W) -> Result<()> {
        // Reports that span hierarchy growth have rank vectors of varying
        // length; shorter ones are padded with zeros.
        let num_levels = self
            .epochs
            .iter()
            .map(|e| e.ranks.len())
            .chain(initial_ranks.map(<[usize]>::len))
            .max()
            .unwrap_or(0);
        let mut header = vec!["epoch".to_string(), "rel_error".to_string()];
        header.extend((1..=num_levels).map(|l| format!("r_{l}")));
        header.push("exchange".into());
        writeln!(w, "{}", header.join(","))?;
        let row = |epoch: usize, err: f64, ranks: &[usize], exch: bool| {
            let mut cells = vec![epoch.to_string(), format!("{err}")];
            cells.extend((0..num_levels).map(|l| ranks.get(l).copied().unwrap_or(0).to_string()));
            cells.push(u8::from(exch).to_string());
            cells.join(",")
        };
        if let Some(r) = initial_ranks {
            writeln!(w, "{}", row(0, self.initial_rel_error, r, false))?;
        }
        for e in &self.epochs {
            writeln!(w, "{}", row(e.epoch, e.rel_error, &e.ranks, e.exchange))?;
        }
        Ok(())
    }
}

/// True iff `prev - cur <= eps_rel * prev`: the last epoch did not improve
/// the relative error by more than the fraction `eps_rel`.
pub fn stopping_check(prev_rel: f64, cur_rel: f64, eps_rel: f64) -> bool {
    prev_rel - cur_rel <= eps_rel * prev_rel
}

/// Level order of one V-epoch: `0, 1, ..., L-1, ..., 1, 0`.
pub fn v_epoch_levels(num_levels: usize) -> Vec<usize> {
    (0..num_levels).chain((0..num_levels.saturating_sub(1)).rev()).collect()
}

/// `||Ã - Â||_F^2` for a contiguous target.
pub(crate) fn objective(at: &DenseMatrix, mlr: &MlrMatrix) -> f64 {
    let mut r = at.clone();
    mlr.accumulate_region(0..at.nrows(), 0..at.ncols(), None, -1.0, &mut r);
    r.norm_squared()
}

pub(crate) fn relative(obj: f64, norm2: f64) -> f64 {
    // An all-zero target is measured in absolute terms.
    obj.max(0.0).sqrt() / if norm2 > 0.0 { norm2.sqrt() } else { 1.0 }
}

/// Shape, finiteness and (for symmetric kinds) symmetry of the target.
pub(crate) fn check_target(a: &DenseMatrix, mlr: &MlrMatrix) -> Result<()> {
    if a.shape() != (mlr.nrows(), mlr.ncols()) {
        return Err(MlrError::dims(
            format!("{}x{}", mlr.nrows(), mlr.ncols()),
            format!("{}x{}", a.nrows(), a.ncols()),
        ));
    }
    ensure_finite(a)?;
    if mlr.kind().is_symmetric() {
        ensure_symmetric(a, SYMMETRY_TOL)?;
    }
    Ok(())
}

/// `R_{l,k} = Ã - sum_{j != l} A^j` restricted to one contiguous region.
pub(crate) fn region_residual(
    at: &DenseMatrix,
    mlr: &MlrMatrix,
    skip: usize,
    rows: Range<usize>,
    cols: Range<usize>,
) -> DMatrix<f64> {
    let mut r = at.view((rows.start, cols.start), (rows.len(), cols.len())).clone_owned();
    mlr.accumulate_region(rows, cols, Some(skip), -1.0, &mut r);
    r
}

/// Residual blocks `R_{l,k}` of level `l`, one per block.
pub fn level_residuals(at: &DenseMatrix, mlr: &MlrMatrix, l: usize) -> Vec<DMatrix<f64>> {
    mlr.partition()
        .blocks(l)
        .into_par_iter()
        .map(|(rows, cols)| region_residual(at, mlr, l, rows, cols))
        .collect()
}

/// Best approximation of `r` by a block of the given kind with rank at most
/// `rank`, padded with zero columns to exactly `rank` columns.
pub(crate) fn best_block(
    r: &DMatrix<f64>,
    rank: usize,
    kind: Kind,
    warm: Option<&BlockFactors>,
) -> Result<BlockFactors> {
    let (m, n) = r.shape();
    let k = rank.min(m).min(n);
    let warm_cols = warm.filter(|w| w.rank() >= k && k > 0);
    let fit = match kind {
        Kind::General => {
            let w = warm_cols.map(|w| w.right.columns(0, k).clone_owned());
            lowrank::best_rank_r_warm(r, k, w.as_ref())?
        }
        Kind::Symmetric | Kind::Psd => {
            let sym = (r + r.transpose()) * 0.5;
            let w = warm_cols.map(|w| w.left.columns(0, k).clone_owned());
            if kind == Kind::Symmetric {
                lowrank::best_rank_r_symmetric_warm(&sym, k, w.as_ref())?
            } else {
                lowrank::best_rank_r_psd_warm(&sym, k, w.as_ref())?
            }
        }
    };
    let mut left = DMatrix::zeros(m, rank);
    left.columns_mut(0, k).copy_from(&fit.left);
    Ok(match kind {
        Kind::General => {
            let mut right = DMatrix::zeros(n, rank);
            right.columns_mut(0, k).copy_from(&fit.right);
            BlockFactors {
                left,
                right,
                signs: Vec::new(),
            }
        }
        Kind::Symmetric => {
            let mut signs = fit.signs;
            signs.resize(rank, 1.0);
            BlockFactors::symmetric(left, signs)
        }
        Kind::Psd => BlockFactors::psd(left),
    })
}

fn block_error(r: &DMatrix<f64>, b: &BlockFactors) -> f64 {
    if b.rank() == 0 {
        return r.norm_squared();
    }
    let mut d = r.clone();
    d.gemm(-1.0, &b.left, &b.right.transpose(), 1.0);
    d.norm_squared()
}

/// Running value of the objective during BCD, updated from exact per-block
/// error differences.
pub(crate) struct Tracker {
    pub objective: f64,
    pub trace: Option<Vec<f64>>,
}

impl Tracker {
    pub(crate) fn new(objective: f64, trace: bool) -> Self {
        Tracker {
            objective,
            trace: trace.then(|| vec![objective]),
        }
    }
}

/// Replace every block of level `l` by the best rank-`r_l` approximation of
/// its residual. A block is left untouched if the new factors would not
/// lower its error, so the objective never increases.
pub(crate) fn update_level(
    at: &DenseMatrix,
    mlr: &mut MlrMatrix,
    l: usize,
    tracker: &mut Tracker,
) -> Result<()> {
    let rank = mlr.ranks()[l];
    if rank == 0 {
        return Ok(());
    }
    let kind = mlr.kind();
    let regions = mlr.partition().blocks(l);
    let results: Vec<(Option<BlockFactors>, f64, f64)> = {
        let shared: &MlrMatrix = mlr;
        regions
            .par_iter()
            .enumerate()
            .map(|(k, (rows, cols))| {
                let old = shared.block(l, k);
                let r = region_residual(at, shared, l, rows.clone(), cols.clone());
                let old_err = block_error(&r, old);
                let new = best_block(&r, rank, kind, Some(old))?;
                let new_err = block_error(&r, &new);
                Ok(if new_err <= old_err {
                    (Some(new), old_err, new_err)
                } else {
                    (None, old_err, old_err)
                })
            })
            .collect::<Result<_>>()?
    };
    let whole = regions.len() == 1 && regions[0].0.len() == at.nrows() && regions[0].1.len() == at.ncols();
    let blocks = mlr.level_blocks_mut(l);
    for (k, (new, old_err, new_err)) in results.into_iter().enumerate() {
        if let Some(b) = new {
            blocks[k] = b;
        }
        tracker.objective = if whole {
            new_err
        } else {
            tracker.objective - (old_err - new_err)
        };
        if let Some(t) = tracker.trace.as_mut() {
            t.push(tracker.objective);
        }
    }
    Ok(())
}

/// Fit the factors of `mlr` to `a` by block coordinate descent over V-epochs
/// `1, ..., L, ..., 1`.
pub fn bcd_fit(a: &DenseMatrix, mlr: &mut MlrMatrix, cfg: &FitConfig) -> Result<FitReport> {
    check_target(a, mlr)?;
    let at = permute_to_contiguous(a, mlr.partition())?;
    bcd_fit_contiguous(&at, mlr, cfg)
}

/// One BCD step: refit every block of level `l` against its residual,
/// keeping all other levels fixed. Returns the new relative error.
pub fn bcd_update_level(a: &DenseMatrix, mlr: &mut MlrMatrix, l: usize) -> Result<f64> {
    check_target(a, mlr)?;
    if l >= mlr.num_levels() {
        return Err(MlrError::Config(format!(
            "level {l} out of range for {} levels",
            mlr.num_levels()
        )));
    }
    let at = permute_to_contiguous(a, mlr.partition())?;
    let mut tracker = Tracker::new(objective(&at, mlr), false);
    update_level(&at, mlr, l, &mut tracker)?;
    Ok(relative(objective(&at, mlr), at.norm_squared()))
}

/// [`bcd_fit`] for a target already in contiguous form.
pub fn bcd_fit_contiguous(at: &DenseMatrix, mlr: &mut MlrMatrix, cfg: &FitConfig) -> Result<FitReport> {
    cfg.validate()?;
    if at.shape() != (mlr.nrows(), mlr.ncols()) {
        return Err(MlrError::dims(
            format!("{}x{}", mlr.nrows(), mlr.ncols()),
            format!("{}x{}", at.nrows(), at.ncols()),
        ));
    }
    let start = Instant::now();
    let norm2 = at.norm_squared();
    let num_levels = mlr.num_levels();
    let mut tracker = match cfg.init {
        Init::Zeros => {
            mlr.clear();
            Tracker::new(norm2, cfg.trace)
        }
        Init::Given => Tracker::new(objective(at, mlr), cfg.trace),
        Init::BcdSingleSweep => {
            mlr.clear();
            let mut t = Tracker::new(norm2, false);
            for l in 0..num_levels {
                update_level(at, mlr, l, &mut t)?;
            }
            Tracker::new(objective(at, mlr), cfg.trace)
        }
    };
    let mut report = FitReport::new(relative(tracker.objective, norm2));
    let mut prev = report.initial_rel_error;
    let levels = v_epoch_levels(num_levels);
    for epoch in 1..=cfg.max_epochs {
        for (step, &l) in levels.iter().enumerate() {
            // Level 1 closed the previous epoch; visiting it again at once
            // would repeat the same update.
            if epoch > 1 && step == 0 {
                continue;
            }
            update_level(at, mlr, l, &mut tracker)?;
        }
        let cur = relative(tracker.objective, norm2);
        report.epochs.push(EpochRecord {
            epoch,
            rel_error: cur,
            ranks: mlr.ranks().ranks().to_vec(),
            exchange: false,
        });
        if stopping_check(prev, cur, cfg.eps_rel) {
            report.termination = Termination::Converged;
            break;
        }
        prev = cur;
    }
    if let Some(t) = tracker.trace {
        report.objective_traces = vec![t];
    }
    report.wall_time = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Fit a general MLR matrix by alternating least squares: all left factors
/// with the right ones fixed, then the reverse. Each half step solves the
/// row-wise normal equations approximately with `cg_steps` steps of
/// conjugate gradients, warm started at the current factors.
///
/// With `Init::Zeros` the right factors start from seeded Gaussian values,
/// since an all-zero start is a fixed point of the iteration. An epoch that
/// raises the error is undone and ends the fit.
pub fn als_fit(a: &DenseMatrix, mlr: &mut MlrMatrix, cfg: &FitConfig) -> Result<FitReport> {
    cfg.validate()?;
    if mlr.kind() != Kind::General {
        return Err(MlrError::Unsupported(
            "alternating least squares is only defined for general MLR matrices".into(),
        ));
    }
    check_target(a, mlr)?;
    let start = Instant::now();
    let at = permute_to_contiguous(a, mlr.partition())?;
    let at_t = at.transpose();
    let norm2 = at.norm_squared();
    match cfg.init {
        Init::Zeros => randomize_right(mlr),
        Init::Given => {}
        Init::BcdSingleSweep => {
            mlr.clear();
            let mut t = Tracker::new(norm2, false);
            for l in 0..mlr.num_levels() {
                update_level(&at, mlr, l, &mut t)?;
            }
        }
    }
    let obj = objective(&at, mlr);
    let mut report = FitReport::new(relative(obj, norm2));
    let mut trace = cfg.trace.then(|| vec![obj]);
    let mut prev = report.initial_rel_error;
    for epoch in 1..=cfg.max_epochs {
        let saved = mlr.clone();
        als_half_step(&at, mlr, cfg.cg_steps);
        if let Some(t) = trace.as_mut() {
            t.push(objective(&at, mlr));
        }
        let mut t = mlr.transpose();
        als_half_step(&at_t, &mut t, cfg.cg_steps);
        *mlr = t.transpose();
        let obj = objective(&at, mlr);
        if let Some(t) = trace.as_mut() {
            t.push(obj);
        }
        let cur = relative(obj, norm2);
        // Inexact CG solves can overshoot once the fit is near round-off;
        // keep the better iterate and stop.
        if cur > prev {
            *mlr = saved;
            if let Some(t) = trace.as_mut() {
                t.truncate(t.len() - 2);
            }
            report.termination = Termination::Converged;
            break;
        }
        report.epochs.push(EpochRecord {
            epoch,
            rel_error: cur,
            ranks: mlr.ranks().ranks().to_vec(),
            exchange: false,
        });
        if stopping_check(prev, cur, cfg.eps_rel) {
            report.termination = Termination::Converged;
            break;
        }
        prev = cur;
    }
    report.objective_traces.extend(trace);
    report.wall_time = start.elapsed().as_secs_f64();
    Ok(report)
}

fn randomize_right(mlr: &mut MlrMatrix) {
    mlr.clear();
    let mut rng = ChaCha8Rng::seed_from_u64(0x414c53);
    for l in 0..mlr.num_levels() {
        for b in mlr.level_blocks_mut(l).iter_mut() {
            let scale = 1.0 / (b.right.nrows().max(1) as f64).sqrt();
            b.right
                .iter_mut()
                .for_each(|v| *v = scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng));
        }
    }
}

/// The block of each level containing the contiguous row `i`.
fn containing_blocks(offsets: &[Vec<usize>], i: usize) -> Vec<usize> {
    offsets
        .iter()
        .map(|off| off.partition_point(|&o| o <= i) - 1)
        .collect()
}

/// Update all left factors with the right factors fixed. Rows in the same
/// finest row block share the design matrix `G` (`n x s`, `s = sum r_l`),
/// so the normal equations `G^T G x = G^T a_i` are formed once per block.
pub(crate) fn als_half_step(at: &DenseMatrix, mlr: &mut MlrMatrix, cg_steps: usize) {
    let num_levels = mlr.num_levels();
    let partition = mlr.partition();
    let row_offsets: Vec<Vec<usize>> = (0..num_levels).map(|l| partition.row_offsets(l)).collect();
    let ranks = mlr.ranks().ranks().to_vec();
    let s: usize = ranks.iter().sum();
    if s == 0 {
        return;
    }
    let col_offset: Vec<usize> = ranks
        .iter()
        .scan(0, |acc, r| {
            let o = *acc;
            *acc += r;
            Some(o)
        })
        .collect();
    let leaves = partition.blocks(num_levels - 1);
    let n = at.ncols();

    let shared: &MlrMatrix = mlr;
    let solved: Vec<(Range<usize>, Vec<usize>, DMatrix<f64>)> = leaves
        .par_iter()
        .map(|(rows, _)| {
            let owners = containing_blocks(&row_offsets, rows.start);
            let mut g = DMatrix::zeros(n, s);
            let mut x = DMatrix::zeros(s, rows.len());
            for l in 0..num_levels {
                if ranks[l] == 0 {
                    continue;
                }
                let k = owners[l];
                let (brows, bcols) = shared.partition().blocks(l)[k].clone();
                let f = shared.block(l, k);
                g.view_mut((bcols.start, col_offset[l]), (bcols.len(), ranks[l]))
                    .copy_from(&f.right);
                x.view_mut((col_offset[l], 0), (ranks[l], rows.len()))
                    .copy_from(&f.left.rows(rows.start - brows.start, rows.len()).transpose());
            }
            let gram = g.tr_mul(&g);
            let rhs = g.tr_mul(&at.rows(rows.start, rows.len()).transpose());
            for c in 0..rows.len() {
                let mut xc = x.column(c).clone_owned();
                conjugate_gradient(&gram, &rhs.column(c).clone_owned(), &mut xc, cg_steps);
                x.set_column(c, &xc);
            }
            (rows.clone(), owners, x)
        })
        .collect();

    let starts: Vec<Vec<usize>> = (0..num_levels).map(|l| partition.row_offsets(l)).collect();
    for (rows, owners, x) in solved {
        for l in 0..num_levels {
            if ranks[l] == 0 {
                continue;
            }
            let k = owners[l];
            let local = rows.start - starts[l][k];
            let block = &mut mlr.level_blocks_mut(l)[k];
            block
                .left
                .view_mut((local, 0), (rows.len(), ranks[l]))
                .copy_from(&x.view((col_offset[l], 0), (ranks[l], rows.len())).transpose());
        }
    }
}

/// At most `steps` CG iterations on `gram x = rhs`, starting from `x`.
/// Each step lowers the quadratic `x^T gram x / 2 - rhs^T x`.
fn conjugate_gradient(gram: &DMatrix<f64>, rhs: &DVector<f64>, x: &mut DVector<f64>, steps: usize) {
    let mut r = rhs - gram * &*x;
    let mut p = r.clone();
    let mut rs = r.norm_squared();
    let floor = f64::EPSILON * f64::EPSILON * rhs.norm_squared();
    for _ in 0..steps {
        if rs <= floor || rs == 0.0 {
            break;
        }
        let ap = gram * &p;
        let denom = p.dot(&ap);
        if denom <= 0.0 {
            break;
        }
        let alpha = rs / denom;
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        let rs_next = r.norm_squared();
        p = &r + &p * (rs_next / rs);
        rs = rs_next;
    }
}
