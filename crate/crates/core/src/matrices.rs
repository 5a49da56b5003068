//! Deterministic test matrices.
//!
//! Every generator draws from `ChaCha8Rng::seed_from_u64(seed)`, with one
//! stream per random component (`set_stream(0)` for row points or the main
//! factor, `set_stream(1)` for column points, weights or the diagonal, and
//! so on, as documented per generator), so one component never shifts the
//! draws of another. Each generator also has a `*_from_*` variant taking the
//! random ingredients explicitly.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use petgraph::algo::dijkstra;
use petgraph::graph::{NodeIndex, UnGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::dense::DenseMatrix;
use crate::error::{MlrError, Result};
use crate::hier::HierPartition;
use crate::mlr::{BlockFactors, Kind, MlrMatrix, RankAllocation};

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
}

fn config(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(MlrError::Config(msg()))
    }
}

/// `A_ij = |a_i - a_j|`.
pub fn fiedler_from_points(a: &[f64]) -> DenseMatrix {
    DenseMatrix::from_fn(a.len(), a.len(), |i, j| (a[i] - a[j]).abs())
}

/// Fiedler matrix of `n` points drawn uniformly from `[0, 1]` (stream 0).
pub fn fiedler(n: usize, seed: u64) -> Result<DenseMatrix> {
    config(n >= 1, || "fiedler needs n >= 1".into())?;
    let mut r = rng(seed, 0);
    let a: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
    Ok(fiedler_from_points(&a))
}

/// `m x d` points uniform in the unit cube.
fn cube_points(m: usize, d: usize, r: &mut ChaCha8Rng) -> DMatrix<f64> {
    // Row by row so the first points do not depend on m.
    let mut p = DMatrix::zeros(m, d);
    for i in 0..m {
        for k in 0..d {
            p[(i, k)] = r.random::<f64>();
        }
    }
    p
}

/// `m x d` points uniform on the unit sphere.
fn sphere_points(m: usize, d: usize, r: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut p = DMatrix::zeros(m, d);
    for i in 0..m {
        loop {
            for k in 0..d {
                p[(i, k)] = normal(r);
            }
            let norm = p.row(i).norm();
            if norm > 1e-12 {
                p.row_mut(i).unscale_mut(norm);
                break;
            }
        }
    }
    p
}

/// Pairwise Euclidean distances between the rows of `t` and of `s`.
pub fn pairwise_distances(t: &DMatrix<f64>, s: &DMatrix<f64>) -> DenseMatrix {
    DenseMatrix::from_fn(t.nrows(), s.nrows(), |i, j| (t.row(i) - s.row(j)).norm())
}

/// Discrete Gauss transform `A_ij = exp(-||t_i - s_j||^2 / h^2)`.
pub fn dgt_from_points(t: &DMatrix<f64>, s: &DMatrix<f64>, h: f64) -> Result<DenseMatrix> {
    config(h > 0.0, || format!("dgt needs h > 0, got {h}"))?;
    config(t.ncols() == s.ncols(), || "target and source dimensions differ".into())?;
    Ok(pairwise_distances(t, s).map(|r| (-(r * r) / (h * h)).exp()))
}

/// Targets (stream 0) and sources (stream 1) used by [`dgt`].
pub fn dgt_points(m: usize, n: usize, d: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
    (cube_points(m, d, &mut rng(seed, 0)), cube_points(n, d, &mut rng(seed, 1)))
}

/// DGT with targets (stream 0) and sources (stream 1) uniform in `[0, 1]^d`.
pub fn dgt(m: usize, n: usize, d: usize, h: f64, seed: u64) -> Result<DenseMatrix> {
    config(m >= 1 && n >= 1 && d >= 1, || "dgt needs m, n, d >= 1".into())?;
    let (t, s) = dgt_points(m, n, d, seed);
    dgt_from_points(&t, &s, h)
}

/// `A_ij = sum_{l=0}^{L_A-1} (1 + (||t_i - s_j|| / (sigma / 2^l))^2)^{-2}`.
pub fn multiscale_kernel_from_points(t: &DMatrix<f64>, s: &DMatrix<f64>, levels: usize, sigma: f64) -> Result<DenseMatrix> {
    config(levels >= 1, || "multiscale kernel needs at least one level".into())?;
    config(sigma > 0.0, || format!("sigma must be positive, got {sigma}"))?;
    config(t.ncols() == s.ncols(), || "target and source dimensions differ".into())?;
    Ok(pairwise_distances(t, s).map(|r| {
        (0..levels)
            .map(|l| {
                let x = r / (sigma / f64::from(1u32 << l));
                (1.0 + x * x).powi(-2)
            })
            .sum()
    }))
}

/// Targets (stream 0) and sources (stream 1) used by [`multiscale_kernel`].
pub fn multiscale_points(m: usize, n: usize, d: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
    (sphere_points(m, d, &mut rng(seed, 0)), sphere_points(n, d, &mut rng(seed, 1)))
}

/// Multiscale inverse polynomial kernel with targets (stream 0) and sources
/// (stream 1) uniform on the unit sphere in `R^d`.
pub fn multiscale_kernel(m: usize, n: usize, d: usize, levels: usize, sigma: f64, seed: u64) -> Result<DenseMatrix> {
    config(m >= 1 && n >= 1 && d >= 1, || "multiscale kernel needs m, n, d >= 1".into())?;
    config(levels <= 30, || "at most 30 kernel levels".into())?;
    let (t, s) = multiscale_points(m, n, d, seed);
    multiscale_kernel_from_points(&t, &s, levels, sigma)
}

/// All-pairs shortest path distances of an undirected weighted graph.
/// Fails if the graph is disconnected or a weight is not positive.
pub fn graph_distance_from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<DenseMatrix> {
    let mut g = UnGraph::<(), f64>::with_capacity(n, edges.len());
    let nodes: Vec<NodeIndex> = (0..n).map(|_| g.add_node(())).collect();
    for &(a, b, w) in edges {
        config(a < n && b < n, || format!("edge ({a}, {b}) out of range"))?;
        config(w > 0.0 && w.is_finite(), || format!("edge weight must be positive, got {w}"))?;
        g.add_edge(nodes[a], nodes[b], w);
    }
    let rows: Vec<Vec<f64>> = nodes
        .par_iter()
        .map(|&src| {
            let dist = dijkstra(&g, src, None, |e| *e.weight());
            nodes.iter().map(|v| dist.get(v).copied().unwrap_or(f64::INFINITY)).collect()
        })
        .collect();
    if rows.iter().flatten().any(|d| !d.is_finite()) {
        return Err(MlrError::Config("graph is not connected".into()));
    }
    // Symmetrize exactly; both directions are shortest paths of equal length.
    Ok(DenseMatrix::from_fn(n, n, |i, j| rows[i][j].min(rows[j][i])))
}

/// Shortest path distances on a random geometric graph: `n` points uniform
/// in the unit square (stream 0), joined when closer than a radius chosen
/// for the requested average degree, with weights uniform in `[0.5, 1.5]`
/// (stream 1, one draw per candidate pair in row-major order). The radius
/// grows by 20% until the graph is connected.
pub fn graph_distance(n: usize, avg_degree: f64, seed: u64) -> Result<DenseMatrix> {
    config(n >= 1, || "graph needs n >= 1".into())?;
    config(avg_degree > 0.0, || format!("average degree must be positive, got {avg_degree}"))?;
    let pts = cube_points(n, 2, &mut rng(seed, 0));
    let mut wr = rng(seed, 1);
    let weights: Vec<f64> = (0..n * (n.saturating_sub(1)) / 2).map(|_| wr.random_range(0.5..1.5)).collect();
    let mut radius = (avg_degree / (std::f64::consts::PI * n as f64)).sqrt();
    loop {
        let mut edges = Vec::new();
        let mut idx = 0;
        for i in 0..n {
            for j in i + 1..n {
                if (pts.row(i) - pts.row(j)).norm() <= radius {
                    edges.push((i, j, weights[idx]));
                }
                idx += 1;
            }
        }
        match graph_distance_from_edges(n, &edges) {
            Err(MlrError::Config(_)) if radius < 2.0 => radius *= 1.2,
            other => return other,
        }
    }
}

/// Factor model parts: `F` (`n x p`, standard normal, stream 0) and a
/// diagonal uniform in `[0.5, 1.5]` (stream 1).
pub fn factor_model(n: usize, p: usize, seed: u64) -> Result<(DMatrix<f64>, Vec<f64>)> {
    config(n >= 1 && p < n, || format!("factor model needs 0 <= p < n, got p={p}, n={n}"))?;
    let mut fr = rng(seed, 0);
    let mut f = DMatrix::zeros(n, p);
    for i in 0..n {
        for k in 0..p {
            f[(i, k)] = normal(&mut fr);
        }
    }
    let mut dr = rng(seed, 1);
    let d = (0..n).map(|_| dr.random_range(0.5..1.5)).collect();
    Ok((f, d))
}

/// `F F^T + diag(d)`, exactly symmetric.
pub fn factor_cov_from_parts(f: &DMatrix<f64>, d: &[f64]) -> DenseMatrix {
    let n = f.nrows();
    let mut a = f * f.transpose();
    for i in 0..n {
        for j in 0..i {
            a[(j, i)] = a[(i, j)];
        }
        a[(i, i)] += d[i];
    }
    a
}

/// Synthetic covariance `F F^T + D` from [`factor_model`].
pub fn synthetic_factor_cov(n: usize, p: usize, seed: u64) -> Result<DenseMatrix> {
    let (f, d) = factor_model(n, p, seed)?;
    Ok(factor_cov_from_parts(&f, &d))
}

/// Random MLR matrix on a given partition and its dense value. Factor
/// entries are standard normal, drawn level by level and block by block
/// (stream 0); symmetric signs are random (stream 1).
pub fn planted_mlr(partition: HierPartition, ranks: RankAllocation, kind: Kind, seed: u64) -> Result<(MlrMatrix, DenseMatrix)> {
    let mut fr = rng(seed, 0);
    let mut sr = rng(seed, 1);
    let mut blocks = Vec::with_capacity(partition.num_levels());
    for l in 0..partition.num_levels() {
        let r = ranks.ranks().get(l).copied().unwrap_or(0);
        let level = partition.level(l);
        let mut lb = Vec::with_capacity(level.num_blocks());
        for (&rows, &cols) in level.row_sizes.iter().zip(&level.col_sizes) {
            let left = DMatrix::from_fn(rows, r, |_, _| normal(&mut fr));
            lb.push(match kind {
                Kind::General => BlockFactors {
                    left,
                    right: DMatrix::from_fn(cols, r, |_, _| normal(&mut fr)),
                    signs: Vec::new(),
                },
                Kind::Symmetric => {
                    let signs = (0..r).map(|_| if sr.random::<bool>() { 1.0 } else { -1.0 }).collect();
                    BlockFactors::symmetric(left, signs)
                }
                Kind::Psd => BlockFactors::psd(left),
            });
        }
        blocks.push(lb);
    }
    let mlr = MlrMatrix::from_blocks(partition, ranks, kind, blocks)?;
    let mut dense = mlr.to_dense();
    if kind.is_symmetric() {
        let n = dense.nrows();
        for i in 0..n {
            for j in 0..i {
                dense[(j, i)] = dense[(i, j)];
            }
        }
    }
    Ok((mlr, dense))
}

/// A named generator with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum Generator {
    Fiedler { n: usize },
    Dgt { m: usize, n: usize, d: usize, h: f64 },
    MultiscaleKernel { m: usize, n: usize, d: usize, levels: usize, sigma: f64 },
    GraphDistance { n: usize, avg_degree: f64 },
    SyntheticFactorCov { n: usize, p: usize },
    /// Random general MLR on a bisection partition with uniform ranks.
    PlantedMlr { m: usize, n: usize, levels: usize, rank: usize },
}

/// A generator plus seed, written `kind:key=value,...` on the command line,
/// for example `dgt:m=500,n=700,d=3,h=0.2` or `fiedler:n=512,seed=7`.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorSpec {
    pub generator: Generator,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn new(generator: Generator, seed: u64) -> Self {
        GeneratorSpec { generator, seed }
    }

    pub fn generate(&self) -> Result<DenseMatrix> {
        let seed = self.seed;
        match self.generator {
            Generator::Fiedler { n } => fiedler(n, seed),
            Generator::Dgt { m, n, d, h } => dgt(m, n, d, h, seed),
            Generator::MultiscaleKernel { m, n, d, levels, sigma } => multiscale_kernel(m, n, d, levels, sigma, seed),
            Generator::GraphDistance { n, avg_degree } => graph_distance(n, avg_degree, seed),
            Generator::SyntheticFactorCov { n, p } => synthetic_factor_cov(n, p, seed),
            Generator::PlantedMlr { m, n, levels, rank } => {
                let p = HierPartition::bisection(m, n, levels)?;
                Ok(planted_mlr(p, RankAllocation::uniform(rank, levels), Kind::General, seed)?.1)
            }
        }
    }

    /// Whether the generated matrix is symmetric by construction.
    pub fn is_symmetric(&self) -> bool {
        matches!(
            self.generator,
            Generator::Fiedler { .. } | Generator::GraphDistance { .. } | Generator::SyntheticFactorCov { .. }
        )
    }

    /// Parse `kind:key=value,...`; a `seed` key overrides `default_seed`.
    pub fn parse(text: &str, default_seed: u64) -> Result<Self> {
        let (kind, rest) = text.split_once(':').unwrap_or((text, ""));
        let mut params = Params::parse(rest)?;
        let seed = params.take("seed")?.unwrap_or(default_seed);
        let generator = match kind.trim() {
            "fiedler" => Generator::Fiedler { n: params.req("n")? },
            "dgt" => {
                let n = params.req("n")?;
                Generator::Dgt {
                    m: params.take("m")?.unwrap_or(n),
                    n,
                    d: params.take("d")?.unwrap_or(3),
                    h: params.take("h")?.unwrap_or(0.2),
                }
            }
            "multiscale_kernel" => {
                let n = params.req("n")?;
                Generator::MultiscaleKernel {
                    m: params.take("m")?.unwrap_or(n),
                    n,
                    d: params.take("d")?.unwrap_or(3),
                    levels: params.take("levels")?.unwrap_or(3),
                    sigma: params.take("sigma")?.unwrap_or(0.9),
                }
            }
            "graph_distance" => Generator::GraphDistance {
                n: params.req("n")?,
                avg_degree: params.take("avg_degree")?.unwrap_or(6.0),
            },
            "synthetic_factor_cov" => Generator::SyntheticFactorCov {
                n: params.req("n")?,
                p: params.req("p")?,
            },
            "planted_mlr" => {
                let n = params.req("n")?;
                Generator::PlantedMlr {
                    m: params.take("m")?.unwrap_or(n),
                    n,
                    levels: params.req("levels")?,
                    rank: params.req("rank")?,
                }
            }
            other => return Err(MlrError::Config(format!("unknown generator {other:?}"))),
        };
        params.finish()?;
        Ok(GeneratorSpec { generator, seed })
    }
}

impl fmt::Display for GeneratorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.generator {
            Generator::Fiedler { n } => write!(f, "fiedler:n={n}")?,
            Generator::Dgt { m, n, d, h } => write!(f, "dgt:m={m},n={n},d={d},h={h}")?,
            Generator::MultiscaleKernel { m, n, d, levels, sigma } => {
                write!(f, "multiscale_kernel:m={m},n={n},d={d},levels={levels},sigma={sigma}")?
            }
            Generator::GraphDistance { n, avg_degree } => write!(f, "graph_distance:n={n},avg_degree={avg_degree}")?,
            Generator::SyntheticFactorCov { n, p } => write!(f, "synthetic_factor_cov:n={n},p={p}")?,
            Generator::PlantedMlr { m, n, levels, rank } => {
                write!(f, "planted_mlr:m={m},n={n},levels={levels},rank={rank}")?
            }
        }
        write!(f, ",seed={}", self.seed)
    }
}

impl FromStr for GeneratorSpec {
    type Err = MlrError;

    fn from_str(s: &str) -> Result<Self> {
        GeneratorSpec::parse(s, 0)
    }
}

struct Params(Vec<(String, String)>);

impl Params {
    fn parse(text: &str) -> Result<Self> {
        let mut out = Vec::new();
        for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| MlrError::Config(format!("expected key=value, got {item:?}")))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(Params(out))
    }

    fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        let Some(pos) = self.0.iter().position(|(k, _)| k == key) else {
            return Ok(None);
        };
        let (_, v) = self.0.remove(pos);
        v.parse()
            .map(Some)
            .map_err(|_| MlrError::Config(format!("bad value {v:?} for {key}")))
    }

    fn req<T: FromStr>(&mut self, key: &str) -> Result<T> {
        self.take(key)?
            .ok_or_else(|| MlrError::Config(format!("missing parameter {key}")))
    }

    fn finish(self) -> Result<()> {
        match self.0.first() {
            Some((k, _)) => Err(MlrError::Config(format!("unknown parameter {k:?}"))),
            None => Ok(()),
        }
    }
}
