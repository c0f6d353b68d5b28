//! Brownian kernels: heat kernel, `S_{m,t}` on line and sector contours,
//! hypograph hitting kernels and the extended kernel.

use crate::error::{invalid, Error, Result};
use crate::quadrature::{adaptive_gk, composite_gauss_legendre, piecewise_gauss_legendre, Rule};
use crate::rng;
use crate::special::factorial;
use num_complex::Complex64;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Initial condition `X : [0,1] -> R ∪ {-∞}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContinuumIC {
    /// `X(0) = 0`, `X = -∞` elsewhere.
    NarrowWedge,
    /// `X ≡ c`.
    Flat(f64),
    /// Linear interpolation of `(t, X(t))` knots with `t` strictly increasing from 0 to 1.
    PiecewiseLinear(Vec<(f64, f64)>),
}

impl ContinuumIC {
    pub fn piecewise_linear(knots: Vec<(f64, f64)>) -> Result<Self> {
        let ic = ContinuumIC::PiecewiseLinear(knots);
        ic.validate()?;
        Ok(ic)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ContinuumIC::NarrowWedge => Ok(()),
            ContinuumIC::Flat(c) if c.is_finite() => Ok(()),
            ContinuumIC::Flat(c) => Err(invalid(format!("flat level must be finite, got {c}"))),
            ContinuumIC::PiecewiseLinear(k) => {
                if k.len() < 2 {
                    return Err(invalid("piecewise-linear data needs at least two knots"));
                }
                if k[0].0 != 0.0 || k[k.len() - 1].0 != 1.0 {
                    return Err(invalid("piecewise-linear knots must start at t=0 and end at t=1"));
                }
                if k.windows(2).any(|w| w[0].0 >= w[1].0) {
                    return Err(invalid("piecewise-linear knot times must be strictly increasing"));
                }
                if k.iter().any(|p| !p.1.is_finite()) {
                    return Err(invalid("piecewise-linear values must be finite"));
                }
                Ok(())
            }
        }
    }

    /// `X(t)`; `-∞` off the origin for the narrow wedge.
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            ContinuumIC::NarrowWedge => {
                if t == 0.0 {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            ContinuumIC::Flat(c) => *c,
            ContinuumIC::PiecewiseLinear(k) => {
                let t = t.clamp(0.0, 1.0);
                let i = k.partition_point(|p| p.0 <= t).clamp(1, k.len() - 1);
                let (t0, x0) = k[i - 1];
                let (t1, x1) = k[i];
                x0 + (x1 - x0) * (t - t0) / (t1 - t0)
            }
        }
    }

    pub fn sup(&self) -> f64 {
        match self {
            ContinuumIC::NarrowWedge => 0.0,
            ContinuumIC::Flat(c) => *c,
            ContinuumIC::PiecewiseLinear(k) => k.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// `(2πt)^{-1/2} exp(-(x-y)^2 / 2t)`.
pub fn heat_kernel(t: f64, x: f64, y: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(invalid(format!("heat kernel needs t > 0, got {t}")));
    }
    Ok(heat(t, x - y))
}

fn heat(t: f64, u: f64) -> f64 {
    (-u * u / (2.0 * t)).exp() / (2.0 * PI * t).sqrt()
}

/// Probabilists' Hermite polynomial `He_m(u)`.
pub fn hermite(m: u32, u: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, u);
    if m == 0 {
        return prev;
    }
    for k in 1..m {
        let next = u * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `S_{m,t}` for `m >= 0`, `t > 0` in closed form.
pub fn s_mt_hermite(m: i64, t: f64, x: f64, y: f64) -> Result<f64> {
    if m < 0 {
        return Err(invalid(format!("closed form needs m >= 0, got {m}")));
    }
    if !(t > 0.0) {
        return Err(invalid(format!("closed form needs t > 0, got {t}")));
    }
    Ok(hermite_form(m as u32, t, x - y))
}

fn hermite_form(m: u32, t: f64, u: f64) -> f64 {
    let sign = if m.is_multiple_of(2) { 1.0 } else { -1.0 };
    sign * t.powf(-(m as f64) / 2.0) * hermite(m, u / t.sqrt()) * heat(t, u)
}

/// `S_{-M,t}` for `t <= 0`: the residue at the origin,
/// `Σ_k (t/2)^k / k! · u^{M-1-2k} / (M-1-2k)!`. At `t = 0` it is supported on `u > 0`.
fn negative_index_polynomial(big_m: u32, t: f64, u: f64) -> f64 {
    if t == 0.0 && u <= 0.0 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut k = 0;
    while 2 * k < big_m {
        let p = big_m - 1 - 2 * k;
        total += (t / 2.0).powi(k as i32) / factorial(k) * u.powi(p as i32) / factorial(p);
        k += 1;
    }
    total
}

/// Vertical line `Re z = d` for `t > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineContour {
    /// Offset; chosen at the saddle when absent.
    pub d: Option<f64>,
    /// Half-length of the truncated line; chosen from the Gaussian decay when absent.
    pub truncation: Option<f64>,
    /// Gauss–Legendre nodes on the upper half line (a multiple of 16).
    pub nodes: usize,
}

impl Default for LineContour {
    fn default() -> Self {
        Self {
            d: None,
            truncation: None,
            nodes: 2048,
        }
    }
}

/// Boundary of the left sector with vertex `d`, for `t < 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectorContour {
    pub d: Option<f64>,
    /// Half-opening measured from the negative real axis, in `(0, π/4)`.
    pub angle: f64,
    pub truncation: Option<f64>,
    /// Gauss–Legendre nodes per ray (a multiple of 16).
    pub nodes_per_ray: usize,
}

impl Default for SectorContour {
    fn default() -> Self {
        Self {
            d: None,
            angle: PI / 8.0,
            truncation: None,
            nodes_per_ray: 2048,
        }
    }
}

/// How `S_{m,t}` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContinuumContour {
    /// Closed forms where available, the line contour otherwise.
    #[default]
    Auto,
    Line(LineContour),
    Sector(SectorContour),
}

fn log_integrand(m: i64, t: f64, u: f64, z: Complex64) -> Complex64 {
    0.5 * t * z * z + u * z + (m as f64) * z.ln()
}

fn line_integral(m: i64, t: f64, u: f64, c: &LineContour) -> Result<f64> {
    let d = match c.d {
        Some(d) => d,
        None if m >= 0 => -u / t,
        None => {
            let big_m = (-m) as f64;
            (-u + (u * u + 4.0 * t * big_m).sqrt()) / (2.0 * t)
        }
    };
    if m < 0 && !(d > 0.0) {
        return Err(invalid(format!(
            "line contour for m < 0 needs d > 0 to pass right of the pole, got {d}"
        )));
    }
    let scale = [0.0, 0.5, 1.0, 2.0]
        .iter()
        .map(|k| log_integrand(m, t, u, Complex64::new(d, k / t.sqrt())).re)
        .fold(f64::NEG_INFINITY, f64::max);
    let truncation = c.truncation.unwrap_or_else(|| {
        // Gaussian decay e^{-t y^2 / 2} against the peak at y = 0
        let mut y = (2.0 * 40.0 / t).sqrt();
        while log_integrand(m, t, u, Complex64::new(d, y)).re - scale > -36.0 {
            y *= 1.5;
        }
        y
    });
    let panels = (c.nodes / 16).max(1);
    let rule = composite_gauss_legendre(0.0, truncation, panels, 16);
    // (1/2πi)∫ g dz with dz = i dy and g(conj z) = conj g(z): (1/π)∫_0^Y Re g(d+iy) dy
    let total = rule.integrate(|y| {
        let z = Complex64::new(d, y);
        let v = log_integrand(m, t, u, z) - scale;
        v.exp().re
    });
    Ok(total * scale.exp() / PI)
}

fn sector_integral(m: i64, t: f64, u: f64, c: &SectorContour) -> Result<f64> {
    if !(c.angle > 0.0 && c.angle < PI / 4.0) {
        return Err(invalid(format!("sector angle must lie in (0, π/4), got {}", c.angle)));
    }
    let d = match c.d {
        Some(d) => d,
        None if m < 0 => ((-m) as f64 / u.abs().max(1e-3)).clamp(0.25, 4.0),
        None => 1.0,
    };
    if !(d > 0.0) {
        return Err(invalid(format!("sector vertex must satisfy d > 0, got {d}")));
    }
    let dir = Complex64::from_polar(1.0, PI - c.angle);
    let at = |s: f64| log_integrand(m, t, u, Complex64::new(d, 0.0) + dir * s);
    let scale = at(0.0).re;
    let truncation = c.truncation.unwrap_or_else(|| {
        let kappa = t.abs() * (2.0 * c.angle).cos();
        let tail = (1e-14f64).ln().abs();
        let mut s = (u.abs() + (u * u + 2.0 * kappa * tail).sqrt()) / kappa;
        while at(s).re - scale > -36.0 {
            s *= 1.5;
        }
        s
    });
    let panels = (c.nodes_per_ray / 16).max(1);
    let rule = composite_gauss_legendre(0.0, truncation, panels, 16);
    // upper ray outward, lower ray inward (its conjugate): (1/π)∫ Im(g(z) e^{iφ}) ds
    let total = rule.integrate(|s| ((at(s) - scale).exp() * dir).im);
    Ok(total * scale.exp() / PI)
}

/// `S_{m,t}(x,y) = (1/2πi)∫_Γ e^{t z^2/2 + (x-y) z} z^m dz`.
pub fn s_mt(m: i64, t: f64, x: f64, y: f64, contour: &ContinuumContour) -> Result<f64> {
    let u = x - y;
    if !t.is_finite() || !u.is_finite() {
        return Err(invalid("S_{m,t} needs finite t, x, y"));
    }
    if t == 0.0 {
        return match m {
            0 => Err(Error::Distributional(
                "S_{0,0} is the identity operator and has no pointwise value".into(),
            )),
            m if m > 0 => Ok(0.0),
            m => Ok(negative_index_polynomial((-m) as u32, 0.0, u)),
        };
    }
    match contour {
        ContinuumContour::Auto => Ok(s_mt_value(m, t, u).unwrap_or_else(|| {
            line_integral(m, t, u, &LineContour::default()).unwrap_or(f64::NAN)
        })),
        ContinuumContour::Line(c) => {
            if t < 0.0 {
                return Err(invalid("a vertical line contour diverges for t < 0; use a sector"));
            }
            line_integral(m, t, u, c)
        }
        ContinuumContour::Sector(c) => {
            if t > 0.0 {
                return Err(invalid("a sector contour diverges for t > 0; use a line"));
            }
            sector_integral(m, t, u, c)
        }
    }
}

/// Closed form when one exists: Hermite for `m >= 0, t > 0`, residues for `t < 0`.
fn s_mt_value(m: i64, t: f64, u: f64) -> Option<f64> {
    if t > 0.0 && m >= 0 {
        Some(hermite_form(m as u32, t, u))
    } else if t < 0.0 {
        Some(if m >= 0 {
            0.0
        } else {
            negative_index_polynomial((-m) as u32, t, u)
        })
    } else {
        None
    }
}

/// Hot-path `S_{m,t}` for `m >= 0`, with `S_{m,0} = 0` for `m >= 1`.
fn s_pos(m: u32, t: f64, u: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        hermite_form(m, t, u)
    }
}

/// Brownian first-passage density to a level at distance `a > 0`.
fn first_passage_density(a: f64, s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    a / (2.0 * PI * s * s * s).sqrt() * (-a * a / (2.0 * s)).exp()
}

/// `S^{hypo(X)}_{m,t}(x,y)` for the narrow wedge and flat data, where the
/// hitting time law is explicit.
pub fn s_hypo_exact(m: u32, t: f64, x: f64, y: f64, ic: &ContinuumIC) -> Result<f64> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(invalid(format!("hypograph kernel needs t in (0,1], got {t}")));
    }
    match ic {
        ContinuumIC::NarrowWedge => Ok(if x <= 0.0 { s_pos(m, t, x - y) } else { 0.0 }),
        ContinuumIC::Flat(c) => flat_hypo(m, t, x, y, *c),
        ContinuumIC::PiecewiseLinear(_) => Err(invalid(
            "piecewise-linear data needs the Monte Carlo hitting backend",
        )),
    }
}

fn flat_hypo(m: u32, t: f64, x: f64, y: f64, c: f64) -> Result<f64> {
    if x <= c {
        return Ok(s_pos(m, t, x - y));
    }
    if y == c {
        // for even m the expectation diverges but both one-sided limits agree; for
        // odd m it vanishes, the midpoint of the jump. Both equal the value below.
        return Ok(if m.is_multiple_of(2) { hermite_form(m, t, x - c) } else { 0.0 });
    }
    let a = x - c;
    // s = t - v^2 removes the endpoint singularity of S_{m, t-s}
    let f = |v: f64| 2.0 * v * first_passage_density(a, t - v * v) * s_pos(m, v * v, c - y);
    adaptive_gk(f, 0.0, t.sqrt(), 1e-13, 1e-11)
}

/// Discretisation of the hitting time for Monte Carlo backends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HittingConfig {
    pub mesh: f64,
    pub samples: usize,
    /// Per-step Brownian-bridge crossing test against the linear barrier.
    pub bridge_correction: bool,
    /// Independent batches used for standard errors.
    pub batches: usize,
}

impl Default for HittingConfig {
    fn default() -> Self {
        Self {
            mesh: 1e-3,
            samples: 100_000,
            bridge_correction: true,
            batches: 10,
        }
    }
}

impl HittingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mesh > 0.0 && self.mesh <= 0.1) {
            return Err(invalid(format!("mesh must lie in (0, 0.1], got {}", self.mesh)));
        }
        if self.batches < 2 || self.samples < self.batches {
            return Err(invalid("need at least two batches and one sample per batch"));
        }
        Ok(())
    }

    fn steps(&self, horizon: f64) -> usize {
        (horizon / self.mesh).round().max(1.0) as usize
    }
}

/// Monte Carlo law of `(τ, B(τ))` for Brownian motions started at each node
/// `w`, using common paths across nodes. `τ` is recorded at step resolution.
#[derive(Debug, Clone)]
pub struct HypoMc {
    ic: ContinuumIC,
    pub nodes: Vec<f64>,
    dt: f64,
    steps: usize,
    bridge: bool,
    batches: usize,
    per_batch: Vec<usize>,
    /// `counts[b][node][k]`: hits during step `k` in batch `b`.
    counts: Vec<Vec<Vec<u32>>>,
}

impl HypoMc {
    pub fn simulate(ic: &ContinuumIC, nodes: &[f64], horizon: f64, cfg: &HittingConfig, seed: u64) -> Result<Self> {
        ic.validate()?;
        cfg.validate()?;
        if matches!(ic, ContinuumIC::NarrowWedge) {
            return Err(invalid("the narrow wedge has an explicit hitting law"));
        }
        let steps = cfg.steps(horizon);
        let dt = horizon / steps as f64;
        let barrier: Vec<f64> = (0..=steps).map(|k| ic.eval(k as f64 * dt)).collect();
        let x0 = barrier[0];
        // nodes in the hypograph at time 0 hit at once and are handled exactly
        let mut order: Vec<usize> = (0..nodes.len()).collect();
        order.sort_by(|&a, &b| nodes[a].total_cmp(&nodes[b]));
        let per_batch: Vec<usize> = (0..cfg.batches)
            .map(|b| cfg.samples / cfg.batches + usize::from(b < cfg.samples % cfg.batches))
            .collect();
        let counts: Vec<Vec<Vec<u32>>> = per_batch
            .par_iter()
            .enumerate()
            .map(|(b, &count)| {
                let mut hist = vec![vec![0u32; steps]; nodes.len()];
                let mut stream = rng::substream(seed, b as u64);
                let mut running = vec![0.0; steps];
                for _ in 0..count {
                    // D(s) = W(s) - X(s) for a Brownian W from 0; a start w hits in
                    // step k iff w <= thr_k
                    let mut w = 0.0;
                    let mut best = f64::NEG_INFINITY;
                    for k in 0..steps {
                        let w_next = w + dt.sqrt() * stream.sample::<f64, _>(StandardNormal);
                        let d0 = w - barrier[k];
                        let d1 = w_next - barrier[k + 1];
                        let thr = if cfg.bridge_correction {
                            let e = -dt * (1.0 - stream.random::<f64>()).ln() / 2.0;
                            0.5 * (-(d0 + d1) + ((d0 - d1) * (d0 - d1) + 4.0 * e).sqrt())
                        } else {
                            -d1
                        };
                        best = best.max(thr);
                        running[k] = best;
                        w = w_next;
                    }
                    let mut k = 0;
                    for &i in &order {
                        let start = nodes[i];
                        if start <= x0 {
                            continue;
                        }
                        while k < steps && running[k] < start {
                            k += 1;
                        }
                        if k == steps {
                            break;
                        }
                        hist[i][k] += 1;
                    }
                }
                hist
            })
            .collect();
        Ok(Self {
            ic: ic.clone(),
            nodes: nodes.to_vec(),
            dt,
            steps,
            bridge: cfg.bridge_correction,
            batches: cfg.batches,
            per_batch,
            counts,
        })
    }

    /// Time and position attributed to a hit during step `k`.
    fn hit_point(&self, k: usize) -> (f64, f64) {
        let s = if self.bridge {
            (k as f64 + 0.5) * self.dt
        } else {
            (k + 1) as f64 * self.dt
        };
        (s, self.ic.eval(s))
    }

    /// `S^{hypo}_{m,t}(nodes, y)` for every node and `y`: pooled matrix and one matrix per batch.
    pub fn matrix(&self, m: u32, t: f64, ys: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let horizon = self.steps as f64 * self.dt;
        if !(t > 0.0 && t <= horizon + 1e-12) {
            return Err(invalid(format!("time {t} outside the simulated horizon {horizon}")));
        }
        let x0 = self.ic.eval(0.0);
        // f[k][j] = S_{m, t - τ_k}(X(τ_k), y_j) for hits strictly before t
        let live: Vec<usize> = (0..self.steps).filter(|&k| self.hit_point(k).0 < t - 1e-12).collect();
        let f: Vec<Vec<f64>> = live
            .iter()
            .map(|&k| {
                let (s, b) = self.hit_point(k);
                ys.iter().map(|&y| s_pos(m, t - s, b - y)).collect()
            })
            .collect();
        let cols = ys.len();
        let n_nodes = self.nodes.len();
        let mut batches = Vec::with_capacity(self.batches);
        for (b, hist) in self.counts.iter().enumerate() {
            let n = self.per_batch[b] as f64;
            let mut out = vec![0.0; n_nodes * cols];
            for (i, &w) in self.nodes.iter().enumerate() {
                let row = &mut out[i * cols..(i + 1) * cols];
                if w <= x0 {
                    for (j, &y) in ys.iter().enumerate() {
                        row[j] = s_pos(m, t, w - y);
                    }
                    continue;
                }
                for (li, &k) in live.iter().enumerate() {
                    let c = hist[i][k];
                    if c != 0 {
                        let p = c as f64 / n;
                        for j in 0..cols {
                            row[j] += p * f[li][j];
                        }
                    }
                }
            }
            batches.push(out);
        }
        let total: f64 = self.per_batch.iter().sum::<usize>() as f64;
        let mut pooled = vec![0.0; n_nodes * cols];
        for (b, mat) in batches.iter().enumerate() {
            let share = self.per_batch[b] as f64 / total;
            for (p, v) in pooled.iter_mut().zip(mat) {
                *p += share * v;
            }
        }
        Ok((pooled, batches))
    }

    pub fn samples(&self) -> usize {
        self.per_batch.iter().sum()
    }
}

/// A kernel value with its Monte Carlo standard error (zero for deterministic backends).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelValue {
    pub value: f64,
    pub stderr: f64,
}

/// Standard error of the mean of per-batch values (with pooled mean `mean`).
pub fn batch_stderr(values: &[f64], mean: f64) -> f64 {
    let b = values.len() as f64;
    if values.len() < 2 {
        return 0.0;
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (b - 1.0);
    (var / b).sqrt()
}

/// `S^{hypo(X)}_{m,t}(x,y)` with any backend; piecewise-linear data is simulated.
pub fn s_hypo(m: u32, t: f64, x: f64, y: f64, ic: &ContinuumIC, cfg: &HittingConfig, seed: u64) -> Result<KernelValue> {
    match ic {
        ContinuumIC::PiecewiseLinear(_) => {
            if !(t > 0.0 && t <= 1.0) {
                return Err(invalid(format!("hypograph kernel needs t in (0,1], got {t}")));
            }
            let mc = HypoMc::simulate(ic, &[x], t, cfg, seed)?;
            let (pooled, batches) = mc.matrix(m, t, &[y])?;
            let per: Vec<f64> = batches.iter().map(|b| b[0]).collect();
            Ok(KernelValue {
                value: pooled[0],
                stderr: batch_stderr(&per, pooled[0]),
            })
        }
        _ => Ok(KernelValue {
            value: s_hypo_exact(m, t, x, y, ic)?,
            stderr: 0.0,
        }),
    }
}

/// One factor of a composition.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    S { m: i64, t: f64 },
    /// Deterministic hypograph kernel (narrow wedge or flat data).
    Hypo { m: u32, t: f64, ic: ContinuumIC },
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Tail {
    Vanishing,
    Gaussian,
    Polynomial,
}

impl KernelSpec {
    fn eval(&self, x: f64, y: f64) -> Result<f64> {
        match self {
            KernelSpec::S { m, t } => s_mt(*m, *t, x, y, &ContinuumContour::Auto),
            KernelSpec::Hypo { m, t, ic } => s_hypo_exact(*m, *t, x, y, ic),
            KernelSpec::Zero => Ok(0.0),
        }
    }

    /// Decay of `w -> A(x, w)` (left factor) or `w -> B(w, y)` (right factor)
    /// as `w -> -∞` and `w -> +∞`.
    fn tails(&self, left_factor: bool) -> (Tail, Tail) {
        match self {
            KernelSpec::Zero => (Tail::Vanishing, Tail::Vanishing),
            KernelSpec::Hypo { .. } => (Tail::Gaussian, Tail::Gaussian),
            KernelSpec::S { m, t } => {
                if *t < 0.0 {
                    if *m >= 0 {
                        (Tail::Vanishing, Tail::Vanishing)
                    } else {
                        (Tail::Polynomial, Tail::Polynomial)
                    }
                } else if *m >= 0 {
                    (Tail::Gaussian, Tail::Gaussian)
                } else if left_factor {
                    // A(x, w) ~ (x-w)^{|m|-1} as w -> -∞
                    (Tail::Polynomial, Tail::Gaussian)
                } else {
                    (Tail::Gaussian, Tail::Polynomial)
                }
            }
        }
    }

    fn time_scale(&self) -> f64 {
        match self {
            KernelSpec::S { t, .. } | KernelSpec::Hypo { t, .. } => t.abs(),
            KernelSpec::Zero => 0.0,
        }
    }
}

/// `(A · B)(x, y) = ∫ A(x, w) B(w, y) dw` by Gauss–Legendre on a symmetric window.
#[derive(Debug, Clone)]
pub struct Composition {
    a: KernelSpec,
    b: KernelSpec,
    half_width: Option<f64>,
    nodes_per_unit: usize,
}

impl Composition {
    /// `half_width`: fixed window `[-L, L]`; by default `L = max(|x|,|y|) + 8√t + 10`.
    pub fn new(a: KernelSpec, b: KernelSpec, half_width: Option<f64>, nodes_per_unit: usize) -> Result<Self> {
        let (al, ar) = a.tails(true);
        let (bl, br) = b.tails(false);
        let decays = |p: Tail, q: Tail| p != Tail::Polynomial || q != Tail::Polynomial;
        if !decays(al, bl) || !decays(ar, br) {
            return Err(Error::NonDecaying {
                bound: f64::INFINITY,
            });
        }
        if nodes_per_unit == 0 {
            return Err(invalid("composition needs a positive node density"));
        }
        Ok(Self {
            a,
            b,
            half_width,
            nodes_per_unit,
        })
    }

    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        let t = self.a.time_scale().max(self.b.time_scale());
        let l = self
            .half_width
            .unwrap_or_else(|| x.abs().max(y.abs()) + 8.0 * t.sqrt() + 10.0);
        let mut breaks = vec![-l, l];
        if let KernelSpec::Hypo { ic, .. } = &self.b {
            let c = ic.eval(0.0);
            if c > -l && c < l {
                breaks.insert(1, c);
            }
        }
        let rule = piecewise_gauss_legendre(&breaks, 16.0 / self.nodes_per_unit as f64, 16);
        let mut total = 0.0;
        for (w, wt) in rule.nodes.iter().zip(&rule.weights) {
            let a = self.a.eval(x, *w)?;
            if a != 0.0 {
                total += wt * a * self.b.eval(*w, y)?;
            }
        }
        Ok(total)
    }
}

/// Resolution of the intermediate variable in the extended kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntermediateGrid {
    /// Maximum panel width relative to `√t_min`.
    pub width_factor: f64,
    pub order: usize,
}

impl Default for IntermediateGrid {
    fn default() -> Self {
        Self {
            width_factor: 0.25,
            order: 16,
        }
    }
}

/// Hypograph factor sampled on the intermediate grid.
#[derive(Debug, Clone)]
enum HypoSource {
    Exact,
    Mc(Box<HypoMc>),
}

/// The extended Brownian kernel
/// `K(t1, x; t2, y) = -heat(t2 - t1, x, y) 1_{t1<t2} + (S_{-m,-t1} · S^{hypo(X)}_{m,t2})(x, y)`,
/// with the intermediate integral discretised once for a range of `y`.
#[derive(Debug, Clone)]
pub struct ExtendedKernel {
    pub m: u32,
    pub ic: ContinuumIC,
    pub w_rule: Rule,
    source: HypoSource,
}

/// A kernel block with per-batch copies when the hypograph factor is simulated.
#[derive(Debug, Clone)]
pub struct KernelBlock {
    pub values: Vec<f64>,
    pub batches: Vec<Vec<f64>>,
}

impl ExtendedKernel {
    /// Kernel for `y` values in `[y_lo, ∞)` and times in `[t_min, t_max]`.
    pub fn new(
        m: u32,
        ic: &ContinuumIC,
        y_lo: f64,
        t_min: f64,
        t_max: f64,
        grid: &IntermediateGrid,
        cfg: &HittingConfig,
        seed: u64,
    ) -> Result<Self> {
        ic.validate()?;
        if m == 0 {
            return Err(invalid("the extended kernel needs m >= 1"));
        }
        if !(t_min > 0.0 && t_min <= t_max && t_max <= 1.0) {
            return Err(invalid(format!("times must satisfy 0 < t_min <= t_max <= 1, got {t_min}, {t_max}")));
        }
        let spread = 9.0 * t_max.sqrt() + 1.0;
        let x0 = ic.eval(0.0);
        let sup = ic.sup();
        let lo = y_lo - spread;
        let hi = (sup + spread).max(lo + 1.0);
        let mut breaks = vec![lo];
        if x0 > lo && x0 < hi {
            breaks.push(x0);
        }
        breaks.push(hi);
        let w_rule = piecewise_gauss_legendre(&breaks, grid.width_factor * t_min.sqrt(), grid.order);
        let source = match ic {
            ContinuumIC::PiecewiseLinear(_) => {
                HypoSource::Mc(Box::new(HypoMc::simulate(ic, &w_rule.nodes, t_max, cfg, seed)?))
            }
            _ => HypoSource::Exact,
        };
        Ok(Self {
            m,
            ic: ic.clone(),
            w_rule,
            source,
        })
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(self.source, HypoSource::Mc(_))
    }

    fn hypo_matrix(&self, t: f64, ys: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        match &self.source {
            HypoSource::Mc(mc) => mc.matrix(self.m, t, ys),
            HypoSource::Exact => {
                let rows: Result<Vec<Vec<f64>>> = self
                    .w_rule
                    .nodes
                    .par_iter()
                    .map(|&w| ys.iter().map(|&y| s_hypo_exact(self.m, t, w, y, &self.ic)).collect())
                    .collect();
                Ok((rows?.concat(), Vec::new()))
            }
        }
    }

    /// `K(t1, x_p; t2, y_q)` for all `p`, `q`, row-major.
    pub fn block(&self, t1: f64, xs: &[f64], t2: f64, ys: &[f64]) -> Result<KernelBlock> {
        let nw = self.w_rule.len();
        // left factor with weights folded in
        let mut a = vec![0.0; xs.len() * nw];
        for (p, &x) in xs.iter().enumerate() {
            for (k, (&w, &wt)) in self.w_rule.nodes.iter().zip(&self.w_rule.weights).enumerate() {
                a[p * nw + k] = wt * negative_index_polynomial(self.m, -t1, x - w);
            }
        }
        let (b, b_batches) = self.hypo_matrix(t2, ys)?;
        let product = |b: &[f64]| -> Vec<f64> {
            let cols = ys.len();
            let mut out = vec![0.0; xs.len() * cols];
            for p in 0..xs.len() {
                let row = &mut out[p * cols..(p + 1) * cols];
                for k in 0..nw {
                    let ak = a[p * nw + k];
                    if ak != 0.0 {
                        for (r, bv) in row.iter_mut().zip(&b[k * cols..(k + 1) * cols]) {
                            *r += ak * bv;
                        }
                    }
                }
                if t1 < t2 {
                    for (q, r) in row.iter_mut().enumerate() {
                        *r -= heat(t2 - t1, xs[p] - ys[q]);
                    }
                }
            }
            out
        };
        Ok(KernelBlock {
            values: product(&b),
            batches: b_batches.iter().map(|bb| product(bb)).collect(),
        })
    }
}

/// Single entry of the extended kernel, for spot checks.
pub fn k_extended(
    t1: f64,
    x: f64,
    t2: f64,
    y: f64,
    m: u32,
    ic: &ContinuumIC,
    cfg: &HittingConfig,
    seed: u64,
) -> Result<KernelValue> {
    let kernel = ExtendedKernel::new(m, ic, y.min(x), t1.min(t2), t1.max(t2), &IntermediateGrid::default(), cfg, seed)?;
    let block = kernel.block(t1, &[x], t2, &[y])?;
    let per: Vec<f64> = block.batches.iter().map(|b| b[0]).collect();
    Ok(KernelValue {
        value: block.values[0],
        stderr: batch_stderr(&per, block.values[0]),
    })
}

/// Oracle used by tests: the flat hypograph kernel by reflection.
#[doc(hidden)]
pub fn flat_hypo_reflection(m: u32, t: f64, x: f64, y: f64, c: f64) -> f64 {
    if x <= c || y < c {
        return s_pos(m, t, x - y);
    }
    let sign = if m.is_multiple_of(2) { 1.0 } else { -1.0 };
    sign * hermite_form(m, t, x + y - 2.0 * c)
}
