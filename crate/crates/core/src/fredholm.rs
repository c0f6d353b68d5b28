//! Fredholm determinants `det(I - χ K χ)` for the geometric model on
//! `{n_1..n_k} x Z` and for the Brownian model on `{t_1..t_k} x R`.

use crate::continuum_kernels::{batch_stderr, ContinuumIC, ExtendedKernel, HittingConfig, IntermediateGrid};
use crate::discrete_kernels::GeometricKernel;
use crate::discrete_model::{DiscreteIC, GeomParams};
use crate::error::{invalid, Error, Result};
use crate::linalg::{log_det, LogDet};
use crate::quadrature::{composite_gauss_legendre, Rule};
use serde::{Deserialize, Serialize};

/// Thresholds of a multi-point query: `(n_i, a_i)` for the geometric model,
/// `(t_i, a_i)` for the Brownian one, with `m` the row index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiPointQuery<T> {
    pub m: u32,
    pub pairs: Vec<(T, T)>,
}

pub type DiscreteQuery = MultiPointQuery<i64>;
pub type ContinuumQuery = MultiPointQuery<f64>;

impl DiscreteQuery {
    pub fn validate(&self, horizon: usize) -> Result<()> {
        if self.pairs.is_empty() {
            return Err(invalid("query needs at least one (n, a) pair"));
        }
        if self.pairs.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(invalid("query columns must be strictly increasing"));
        }
        if self.pairs.iter().any(|p| p.0 < 1 || p.0 as usize > horizon) {
            return Err(invalid(format!("query columns must lie in 1..={horizon}")));
        }
        Ok(())
    }
}

impl ContinuumQuery {
    pub fn validate(&self) -> Result<()> {
        if self.pairs.is_empty() {
            return Err(invalid("query needs at least one (t, a) pair"));
        }
        if self.m == 0 {
            return Err(invalid("the Brownian formula needs m >= 1"));
        }
        if self.pairs.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(invalid("query times must be strictly increasing"));
        }
        if self.pairs.iter().any(|p| !(p.0 > 0.0 && p.0 <= 1.0) || !p.1.is_finite()) {
            return Err(invalid("query times must lie in (0,1] with finite thresholds"));
        }
        Ok(())
    }
}

/// Square matrix assembled from blocks, one block row/column per time slice.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockKernelMatrix {
    pub size: usize,
    /// Row-major entries.
    pub data: Vec<f64>,
    /// Start index of each slice.
    pub offsets: Vec<usize>,
}

impl BlockKernelMatrix {
    pub fn zeros(slice_sizes: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(slice_sizes.len());
        let mut size = 0;
        for &s in slice_sizes {
            offsets.push(size);
            size += s;
        }
        Self {
            size,
            data: vec![0.0; size * size],
            offsets,
        }
    }

    pub fn from_dense(size: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != size * size {
            return Err(Error::ShapeMismatch {
                expected: format!("{} entries", size * size),
                got: format!("{} entries", data.len()),
            });
        }
        Ok(Self {
            size,
            data,
            offsets: vec![0],
        })
    }

    fn slice_len(&self, i: usize) -> usize {
        self.offsets.get(i + 1).copied().unwrap_or(self.size) - self.offsets[i]
    }

    pub fn set_block(&mut self, i: usize, j: usize, block: &[f64]) {
        let (ri, cj) = (self.offsets[i], self.offsets[j]);
        let (rows, cols) = (self.slice_len(i), self.slice_len(j));
        for r in 0..rows {
            let dst = (ri + r) * self.size + cj;
            self.data[dst..dst + cols].copy_from_slice(&block[r * cols..(r + 1) * cols]);
        }
    }
}

/// `det(I - M)` in sign / log-magnitude form.
pub fn det_i_minus(matrix: &BlockKernelMatrix) -> Result<LogDet> {
    if matrix.data.iter().any(|v| !v.is_finite()) {
        return Err(invalid("kernel matrix has non-finite entries"));
    }
    let n = matrix.size;
    let mut a: Vec<f64> = matrix.data.iter().map(|v| -v).collect();
    for i in 0..n {
        a[i * n + i] += 1.0;
    }
    if n == 0 {
        return Ok(LogDet {
            sign: 1.0,
            log_abs: 0.0,
        });
    }
    Ok(log_det(a, n))
}

/// Truncation controls for the geometric determinant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    /// Initial depth of each slice below its threshold.
    pub initial_depth: i64,
    /// The window is deepened until the kernel diagonal at its bottom is below this.
    pub diagonal_cut: f64,
    pub max_depth: i64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            initial_depth: 32,
            diagonal_cut: 1e-13,
            max_depth: 1 << 14,
        }
    }
}

/// Value of a determinant with its error accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeterminantValue {
    pub value: f64,
    /// Bound on truncation effects (discrete) or the last refinement change
    /// (continuum); absent for a single fixed-grid solve.
    pub certificate: Option<f64>,
    /// Monte Carlo standard error of the value (zero for deterministic kernels).
    pub stderr: f64,
    /// Matrix dimension used.
    pub size: usize,
}

/// `P(G(m, n_i) < a_i for all i)` via `det(I - χKχ)` with `χ(n_i, z) = 1_{z <= -a_i - n_i}`.
pub fn solve_discrete(
    query: &DiscreteQuery,
    ic: &DiscreteIC,
    params: &GeomParams,
    window: &WindowConfig,
) -> Result<DeterminantValue> {
    query.validate(ic.len())?;
    let mut kernel = GeometricKernel::new(query.m, ic, *params)?;
    let slices: Vec<(usize, i64)> = query
        .pairs
        .iter()
        .map(|&(n, a)| (n as usize, -a - n))
        .collect();
    // depth of each slice, grown until the diagonal is negligible at the bottom
    let mut depths = Vec::with_capacity(slices.len());
    for &(n, thr) in &slices {
        let mut depth = window.initial_depth.max(1);
        loop {
            let bottom = thr - depth + 1;
            let probes = [bottom, bottom + 1, bottom + 2];
            let mut diag = 0.0f64;
            for z in probes {
                diag = diag.max(kernel.entry(n, z, n, z)?.value.abs());
            }
            if diag < window.diagonal_cut {
                break;
            }
            if depth >= window.max_depth {
                return Err(Error::Truncation {
                    leaked: diag,
                    tolerance: window.diagonal_cut,
                });
            }
            depth *= 2;
        }
        depths.push(depth);
    }
    let zsets: Vec<Vec<i64>> = slices
        .iter()
        .zip(&depths)
        .map(|(&(_, thr), &depth)| (thr - depth + 1..=thr).collect())
        .collect();
    let sizes: Vec<usize> = zsets.iter().map(Vec::len).collect();
    let mut matrix = BlockKernelMatrix::zeros(&sizes);
    let mut tail = 0.0f64;
    for (i, &(n1, _)) in slices.iter().enumerate() {
        for (j, &(n2, _)) in slices.iter().enumerate() {
            let (block, bound) = kernel.block(n1, &zsets[i], n2, &zsets[j])?;
            tail = tail.max(bound);
            matrix.set_block(i, j, &block);
        }
    }
    let det = det_i_minus(&matrix)?;
    let size = matrix.size;
    Ok(DeterminantValue {
        value: det.value(),
        certificate: Some(size as f64 * (tail + window.diagonal_cut)),
        stderr: 0.0,
        size,
    })
}

/// Gauss–Legendre nodes on `[a_i, a_i + L]` for each slice.
#[derive(Debug, Clone, PartialEq)]
pub struct NystromGrid {
    pub slices: Vec<Rule>,
    pub lengths: Vec<f64>,
}

impl NystromGrid {
    /// `nodes` per slice (a multiple of 16). The slice length covers the
    /// Gaussian tail of the kernel beyond both the threshold and `sup X`.
    pub fn new(query: &ContinuumQuery, ic: &ContinuumIC, nodes: usize) -> Result<Self> {
        query.validate()?;
        if nodes < 16 || !nodes.is_multiple_of(16) {
            return Err(invalid(format!("nodes per slice must be a positive multiple of 16, got {nodes}")));
        }
        let sup = ic.sup();
        let mut slices = Vec::new();
        let mut lengths = Vec::new();
        for &(t, a) in &query.pairs {
            let l = (sup - a + 9.0 * t.sqrt() + 2.0).max(10.0);
            slices.push(composite_gauss_legendre(a, a + l, nodes / 16, 16));
            lengths.push(l);
        }
        Ok(Self { slices, lengths })
    }
}

/// Symmetrised Nyström matrix `√(w_p w_q) K(t_i, x_p; t_j, y_q)` and its Monte Carlo batch copies.
pub fn assemble_continuum(
    query: &ContinuumQuery,
    kernel: &ExtendedKernel,
    grid: &NystromGrid,
) -> Result<(BlockKernelMatrix, Vec<BlockKernelMatrix>)> {
    let sizes: Vec<usize> = grid.slices.iter().map(Rule::len).collect();
    let mut matrix = BlockKernelMatrix::zeros(&sizes);
    let mut batch_mats: Vec<BlockKernelMatrix> = Vec::new();
    for (i, &(t1, _)) in query.pairs.iter().enumerate() {
        for (j, &(t2, _)) in query.pairs.iter().enumerate() {
            let (ri, rj) = (&grid.slices[i], &grid.slices[j]);
            let block = kernel.block(t1, &ri.nodes, t2, &rj.nodes)?;
            let weigh = |vals: &[f64]| -> Vec<f64> {
                let cols = rj.len();
                vals.iter()
                    .enumerate()
                    .map(|(idx, v)| (ri.weights[idx / cols] * rj.weights[idx % cols]).sqrt() * v)
                    .collect()
            };
            matrix.set_block(i, j, &weigh(&block.values));
            if batch_mats.is_empty() && !block.batches.is_empty() {
                batch_mats = vec![BlockKernelMatrix::zeros(&sizes); block.batches.len()];
            }
            for (mat, b) in batch_mats.iter_mut().zip(&block.batches) {
                mat.set_block(i, j, &weigh(b));
            }
        }
    }
    Ok((matrix, batch_mats))
}

/// Controls for the Brownian determinant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuumSolverConfig {
    pub initial_nodes: usize,
    pub max_nodes: usize,
    /// Stop refining once successive values differ by less than this.
    pub tolerance: f64,
    pub intermediate: IntermediateGrid,
    pub hitting: HittingConfig,
    pub seed: u64,
}

impl Default for ContinuumSolverConfig {
    fn default() -> Self {
        Self {
            initial_nodes: 32,
            max_nodes: 512,
            tolerance: 1e-4,
            intermediate: IntermediateGrid::default(),
            hitting: HittingConfig::default(),
            seed: 0,
        }
    }
}

/// One row of a refinement ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineRow {
    pub nodes: usize,
    pub length: f64,
    pub value: f64,
    /// Change from the previous row.
    pub delta: Option<f64>,
    pub stderr: f64,
}

fn build_kernel(query: &ContinuumQuery, ic: &ContinuumIC, cfg: &ContinuumSolverConfig) -> Result<ExtendedKernel> {
    let y_lo = query.pairs.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let t_min = query.pairs[0].0;
    let t_max = query.pairs[query.pairs.len() - 1].0;
    ExtendedKernel::new(query.m, ic, y_lo, t_min, t_max, &cfg.intermediate, &cfg.hitting, cfg.seed)
}

fn solve_on_grid(query: &ContinuumQuery, kernel: &ExtendedKernel, grid: &NystromGrid) -> Result<(f64, f64)> {
    let (matrix, batches) = assemble_continuum(query, kernel, grid)?;
    let value = det_i_minus(&matrix)?.value();
    let per: Result<Vec<f64>> = batches.iter().map(|b| Ok(det_i_minus(b)?.value())).collect();
    Ok((value, batch_stderr(&per?, value)))
}

/// `det(I - χ̄ K χ̄)` at a fixed node count per slice.
pub fn solve_continuum_fixed(
    query: &ContinuumQuery,
    ic: &ContinuumIC,
    nodes: usize,
    cfg: &ContinuumSolverConfig,
) -> Result<DeterminantValue> {
    let kernel = build_kernel(query, ic, cfg)?;
    let grid = NystromGrid::new(query, ic, nodes)?;
    let (value, stderr) = solve_on_grid(query, &kernel, &grid)?;
    Ok(DeterminantValue {
        value,
        certificate: None,
        stderr,
        size: grid.slices.iter().map(Rule::len).sum(),
    })
}

/// Nyström solve with node doubling until the change is below tolerance
/// (or below twice the Monte Carlo standard error). Returns the ladder too.
pub fn solve_continuum(
    query: &ContinuumQuery,
    ic: &ContinuumIC,
    cfg: &ContinuumSolverConfig,
) -> Result<(DeterminantValue, Vec<RefineRow>)> {
    query.validate()?;
    let kernel = build_kernel(query, ic, cfg)?;
    let mut rows: Vec<RefineRow> = Vec::new();
    let mut nodes = cfg.initial_nodes.max(16) / 16 * 16;
    loop {
        let grid = NystromGrid::new(query, ic, nodes)?;
        let (value, stderr) = solve_on_grid(query, &kernel, &grid)?;
        let delta = rows.last().map(|r| (value - r.value).abs());
        rows.push(RefineRow {
            nodes,
            length: grid.lengths.iter().copied().fold(0.0, f64::max),
            value,
            delta,
            stderr,
        });
        let budget = cfg.tolerance.max(2.0 * stderr);
        if let Some(delta) = delta.filter(|&d| d < budget) {
            return Ok((
                DeterminantValue {
                    value,
                    certificate: Some(delta),
                    stderr,
                    size: nodes * query.pairs.len(),
                },
                rows,
            ));
        }
        if nodes * 2 > cfg.max_nodes {
            let prev = rows.len().checked_sub(2).map_or(f64::NAN, |i| rows[i].value);
            return Err(Error::Convergence {
                previous: prev,
                last: value,
            });
        }
        nodes *= 2;
    }
}

/// The refinement table over an explicit node ladder.
pub fn refine_report(
    query: &ContinuumQuery,
    ic: &ContinuumIC,
    ladder: &[usize],
    cfg: &ContinuumSolverConfig,
) -> Result<Vec<RefineRow>> {
    let kernel = build_kernel(query, ic, cfg)?;
    let mut rows: Vec<RefineRow> = Vec::new();
    for &nodes in ladder {
        let grid = NystromGrid::new(query, ic, nodes)?;
        let (value, stderr) = solve_on_grid(query, &kernel, &grid)?;
        let delta = rows.last().map(|r| (value - r.value).abs());
        rows.push(RefineRow {
            nodes,
            length: grid.lengths.iter().copied().fold(0.0, f64::max),
            value,
            delta,
            stderr,
        });
    }
    Ok(rows)
}
