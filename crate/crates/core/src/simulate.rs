//! Monte Carlo ground truth: Brownian LPP on a time mesh, the rescaled
//! geometric model, GUE largest eigenvalues and empirical distribution tools.

use crate::continuum_kernels::ContinuumIC;
use crate::discrete_model::{advance_row, embed_continuum_ic, sample_geometric, BoundaryMode, DiscreteIC, EventSpec, GeomParams};
use crate::error::{invalid, Result};
use crate::rng;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// A Monte Carlo probability with its error bars.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub value: f64,
    pub samples: usize,
    /// `√(p(1-p)/n)`.
    pub stderr: f64,
    /// Half-width of the 99% Dvoretzky–Kiefer–Wolfowitz band, `√(ln(200)/2n)`.
    pub dkw_band: f64,
    pub seed: u64,
}

impl MCEstimate {
    pub fn from_counts(hits: usize, samples: usize, seed: u64) -> Result<Self> {
        if samples == 0 {
            return Err(invalid("an estimate needs at least one sample"));
        }
        let n = samples as f64;
        let p = hits as f64 / n;
        Ok(Self {
            value: p,
            samples,
            stderr: (p * (1.0 - p) / n).sqrt(),
            dkw_band: dkw_band(samples),
            seed,
        })
    }
}

pub fn dkw_band(samples: usize) -> f64 {
    ((2.0f64 / 0.01).ln() / (2.0 * samples as f64)).sqrt()
}

/// Time discretisation of the direct Brownian sampler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectConfig {
    pub mesh: f64,
    /// Add the Brownian-bridge maximum inside each step to the running max.
    pub bridge_correction: bool,
}

impl Default for DirectConfig {
    fn default() -> Self {
        Self {
            mesh: 1e-3,
            bridge_correction: true,
        }
    }
}

fn mesh_indices(times: &[f64], mesh: f64) -> Result<Vec<usize>> {
    if !(mesh > 0.0 && mesh <= 0.5) {
        return Err(invalid(format!("mesh must lie in (0, 0.5], got {mesh}")));
    }
    if times.is_empty() {
        return Err(invalid("need at least one time"));
    }
    if times.windows(2).any(|w| w[0] >= w[1]) || times.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
        return Err(invalid("times must be strictly increasing in (0, 1]"));
    }
    times
        .iter()
        .map(|&t| {
            let k = (t / mesh).round();
            if (k * mesh - t).abs() > 1e-9 {
                Err(invalid(format!("mesh {mesh} does not resolve time {t}")))
            } else {
                Ok(k as usize)
            }
        })
        .collect()
}

/// Maximum of a Brownian bridge from `a` to `b` with variance `var` over the step,
/// sampled by inverting `P(max > h) = exp(-2(h-a)(h-b)/var)`.
fn bridge_max(a: f64, b: f64, var: f64, u: f64) -> f64 {
    let e = -(1.0 - u).ln();
    0.5 * (a + b + ((a - b) * (a - b) + 2.0 * var * e).sqrt())
}

/// Samples of `BLPP(X; (t_i, m))` for each `t_i`, one row per sample.
///
/// Runs `Z_k(s) = sup_{u<=s} (Z_{k-1}(u) + B_k(s) - B_k(u))` on the mesh with
/// `Z_0 = X`. Without the bridge correction the mesh maximum sits below the
/// continuum one by `O(√mesh)`.
pub fn blpp_mc_direct(
    ic: &ContinuumIC,
    m: u32,
    times: &[f64],
    samples: usize,
    cfg: &DirectConfig,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let levels = blpp_mc_levels(ic, m, times, samples, cfg, seed)?;
    Ok(levels.into_iter().map(|mut l| l.pop().expect("level m")).collect())
}

/// Like [`blpp_mc_direct`] but keeps every level: `out[sample][k][i] = Z_k(t_i)`, `k = 0..=m`.
pub fn blpp_mc_levels(
    ic: &ContinuumIC,
    m: u32,
    times: &[f64],
    samples: usize,
    cfg: &DirectConfig,
    seed: u64,
) -> Result<Vec<Vec<Vec<f64>>>> {
    ic.validate()?;
    let idx = mesh_indices(times, cfg.mesh)?;
    let steps = *idx.last().expect("nonempty times");
    let dt = cfg.mesh;
    let sd = dt.sqrt();
    let wedge = matches!(ic, ContinuumIC::NarrowWedge);
    let x0: Vec<f64> = (0..=steps)
        .map(|j| {
            if wedge {
                if j == 0 {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            } else {
                ic.eval(j as f64 * dt)
            }
        })
        .collect();
    let chunks: Vec<Vec<Vec<Vec<f64>>>> = rng::chunks(samples)
        .into_par_iter()
        .map(|(c, count)| {
            let mut stream = rng::substream(seed, c);
            let mut prev = vec![0.0; steps + 1];
            let mut cur = vec![0.0; steps + 1];
            let mut out = Vec::with_capacity(count);
            for _ in 0..count {
                prev.copy_from_slice(&x0);
                let mut levels = Vec::with_capacity(m as usize + 1);
                levels.push(idx.iter().map(|&j| prev[j]).collect::<Vec<f64>>());
                for k in 1..=m {
                    // the lower level moves like one Brownian motion, plus X's drift at k = 1
                    let var = if k == 1 { dt } else { 2.0 * dt };
                    let mut b = 0.0;
                    cur[0] = prev[0];
                    for j in 1..=steps {
                        let db = sd * stream.sample::<f64, _>(StandardNormal);
                        let b_next = b + db;
                        let mut entry = prev[j] - b_next;
                        if cfg.bridge_correction {
                            let u: f64 = stream.random();
                            let (a0, a1) = (prev[j - 1] - b, prev[j] - b_next);
                            if a0.is_finite() && a1.is_finite() {
                                entry = entry.max(bridge_max(a0, a1, var, u));
                            }
                        }
                        cur[j] = (cur[j - 1] + db).max(entry + b_next);
                        b = b_next;
                    }
                    std::mem::swap(&mut prev, &mut cur);
                    levels.push(idx.iter().map(|&j| prev[j]).collect());
                }
                out.push(levels);
            }
            out
        })
        .collect();
    Ok(chunks.concat())
}

/// Samples of `(G(m, ⌊N t_i⌋) - c1 (N t_i + m)) / √(c2 N)` for the geometric model
/// started from the embedding of `X` at scale `N`.
pub fn blpp_mc_coupled(
    ic: &ContinuumIC,
    m: u32,
    times: &[f64],
    scale: usize,
    params: &GeomParams,
    samples: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if scale < 1 {
        return Err(invalid("embedding scale must be positive"));
    }
    if times.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
        return Err(invalid("times must lie in (0, 1]"));
    }
    let data = embed_continuum_ic(ic, scale, params)?;
    let cols: Vec<usize> = times
        .iter()
        .map(|&t| ((scale as f64 * t).floor() as usize).max(1))
        .collect();
    let (c1, spread) = (params.c1(), (params.c2() * scale as f64).sqrt());
    let rows = glpp_rows(&data, m, samples, params, seed)?;
    Ok(rows
        .into_iter()
        .map(|row| {
            cols.iter()
                .zip(times)
                .map(|(&n, &t)| (row[n - 1] as f64 - c1 * (scale as f64 * t + m as f64)) / spread)
                .collect()
        })
        .collect())
}

/// Final rows `G(m, ·)` of independent column-only recursions from `ic`.
pub fn glpp_rows(ic: &DiscreteIC, m: u32, samples: usize, params: &GeomParams, seed: u64) -> Result<Vec<Vec<i64>>> {
    GeomParams::new(params.q, params.theta)?;
    let ln_q = params.q.ln();
    let n = ic.len();
    let chunks: Vec<Vec<Vec<i64>>> = rng::chunks(samples)
        .into_par_iter()
        .map(|(c, count)| {
            let mut stream = rng::substream(seed, c);
            let mut weights = vec![0i64; n];
            (0..count)
                .map(|_| {
                    let mut row = ic.values().to_vec();
                    for _ in 0..m {
                        for w in weights.iter_mut() {
                            *w = sample_geometric(&mut stream, ln_q);
                        }
                        advance_row(&mut row, &weights, BoundaryMode::ColumnOnly);
                    }
                    row
                })
                .collect()
        })
        .collect();
    Ok(chunks.concat())
}

/// Frequency of `{G(m, n_i) < a_i for all i}`.
pub fn glpp_event_probability(
    ic: &DiscreteIC,
    m: u32,
    event: &EventSpec,
    params: &GeomParams,
    samples: usize,
    seed: u64,
) -> Result<MCEstimate> {
    if event.pairs().iter().any(|p| p.0 > ic.len()) {
        return Err(invalid("event column beyond the initial data"));
    }
    let rows = glpp_rows(ic, m, samples, params, seed)?;
    let hits = rows.iter().filter(|r| event.holds_for_g(r)).count();
    MCEstimate::from_counts(hits, samples, seed)
}

/// Ascending spectra of `m x m` GUE matrices with `N(0,1)` diagonal and complex
/// off-diagonal entries with `N(0,1/2)` real and imaginary parts.
pub fn gue_spectra(m: usize, samples: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if m == 0 {
        return Err(invalid("GUE size must be at least 1"));
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let chunks: Vec<Vec<Vec<f64>>> = rng::chunks(samples)
        .into_par_iter()
        .map(|(c, count)| {
            let mut stream = rng::substream(seed, c);
            let mut normal = || stream.sample::<f64, _>(StandardNormal);
            (0..count)
                .map(|_| {
                    if m == 1 {
                        return vec![normal()];
                    }
                    let mut a = DMatrix::<Complex64>::zeros(m, m);
                    for i in 0..m {
                        a[(i, i)] = Complex64::new(normal(), 0.0);
                        for j in i + 1..m {
                            let z = Complex64::new(h * normal(), h * normal());
                            a[(i, j)] = z;
                            a[(j, i)] = z.conj();
                        }
                    }
                    let mut ev: Vec<f64> = a.symmetric_eigenvalues().iter().copied().collect();
                    ev.sort_by(f64::total_cmp);
                    ev
                })
                .collect()
        })
        .collect();
    Ok(chunks.concat())
}

/// Largest GUE eigenvalue; with this normalisation `m = 1` is `N(0,1)` and the
/// law equals `BLPP((0,0); (1,m))`.
pub fn gue_lambda_max(m: usize, samples: usize, seed: u64) -> Result<Vec<f64>> {
    Ok(gue_spectra(m, samples, seed)?
        .into_iter()
        .map(|ev| ev[ev.len() - 1])
        .collect())
}

/// `P(sample <= a)` for each threshold.
pub fn empirical_cdf(samples: &[f64], thresholds: &[f64], seed: u64) -> Result<Vec<MCEstimate>> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    thresholds
        .iter()
        .map(|&a| MCEstimate::from_counts(sorted.partition_point(|&v| v <= a), sorted.len(), seed))
        .collect()
}

/// `P(sample_i <= a_i for all i)` for vector-valued samples.
pub fn empirical_joint(samples: &[Vec<f64>], thresholds: &[f64], seed: u64) -> Result<MCEstimate> {
    if samples.iter().any(|s| s.len() != thresholds.len()) {
        return Err(invalid("sample and threshold dimensions differ"));
    }
    let hits = samples
        .iter()
        .filter(|s| s.iter().zip(thresholds).all(|(v, a)| v <= a))
        .count();
    MCEstimate::from_counts(hits, samples.len(), seed)
}

/// One-sample Kolmogorov–Smirnov statistic `sup |F_n - F|`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic p-value of a KS statistic `d` with effective sample size `n`,
/// from the Kolmogorov series with the Stephens small-sample adjustment.
pub fn ks_pvalue(d: f64, n: f64) -> f64 {
    let s = n.sqrt();
    let lambda = (s + 0.12 + 0.11 / s) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut total = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = 2.0 * (-1.0f64).powi(k as i32 - 1) * (-2.0 * k * k * lambda * lambda).exp();
        total += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    total.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bridge_max_is_above_both_ends() {
        for u in [0.0, 0.3, 0.99] {
            let v = bridge_max(0.2, -0.1, 1e-3, u);
            assert!(v >= 0.2);
        }
        assert_eq!(bridge_max(0.5, 0.5, 1.0, 0.0), 0.5);
    }

    #[test]
    fn kolmogorov_tail() {
        // P(K > 1.36) ≈ 0.049
        let p = ks_pvalue(1.36 / 100.0, 10_000.0);
        assert!((p - 0.049).abs() < 0.003, "{p}");
        assert_eq!(ks_pvalue(0.0, 100.0), 1.0);
    }

    #[test]
    fn mesh_must_hit_times() {
        assert!(mesh_indices(&[0.5, 1.0], 1e-3).is_ok());
        assert!(mesh_indices(&[0.3337], 1e-3).is_err());
        assert!(mesh_indices(&[1.0, 0.5], 1e-3).is_err());
    }

    #[test]
    fn ks_two_sample_identical_is_zero() {
        let a = [0.1, 0.5, 0.9];
        assert_eq!(ks_two_sample(&a, &a), 0.0);
        assert_eq!(ks_two_sample(&[0.0], &[1.0]), 1.0);
    }
}
