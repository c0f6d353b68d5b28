//! Diffusive rescaling of the geometric kernels and numerical checks that they
//! approach the Brownian ones. Everything here works at `q = θ = 1/2`, where
//! `c1 = 1` and `c2 = 2`.

use crate::continuum_kernels::{heat_kernel, k_extended, s_hypo_exact, s_mt, ContinuumContour, ContinuumIC, HittingConfig};
use crate::contour::Contour;
use crate::discrete_kernels::{k_geometric, q_pow_closed, s_bar, s_epi, s_star};
use crate::discrete_model::{embed_continuum_ic, DiscreteIC, GeomParams};
use crate::error::{invalid, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// The lattice map `n = ⌊Ns⌋`, `z = ⌊-2n - x√(2N)⌋` and its continuum reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RescaleMap {
    pub scale: usize,
}

impl RescaleMap {
    pub fn new(scale: usize) -> Result<Self> {
        if scale < 2 {
            return Err(invalid(format!("scale must be at least 2, got {scale}")));
        }
        Ok(Self { scale })
    }

    /// `√(2N)`: lattice sites per unit of space.
    pub fn spread(&self) -> f64 {
        (2.0 * self.scale as f64).sqrt()
    }

    pub fn level(&self, s: f64) -> Result<usize> {
        let n = (self.scale as f64 * s).floor();
        if !(n >= 1.0 && n <= self.scale as f64) {
            return Err(invalid(format!("time {s} maps outside levels 1..={}", self.scale)));
        }
        Ok(n as usize)
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 / self.scale as f64
    }

    pub fn site(&self, n: usize, x: f64) -> i64 {
        (-2.0 * n as f64 - x * self.spread()).floor() as i64
    }

    /// Inverse of [`site`](Self::site) on the lattice.
    pub fn position(&self, n: usize, z: i64) -> f64 {
        -(z as f64 + 2.0 * n as f64) / self.spread()
    }

    /// Map for the intermediate variable of the kernel product, `z = ⌊-x√(2N)⌋`.
    pub fn intermediate_site(&self, x: f64) -> i64 {
        (-x * self.spread()).floor() as i64
    }

    pub fn intermediate_position(&self, z: i64) -> f64 {
        -(z as f64) / self.spread()
    }

    /// `(N/2)^{m/2}`.
    pub fn prefactor(&self, m: i64) -> f64 {
        (self.scale as f64 / 2.0).powf(m as f64 / 2.0)
    }
}

/// A point at which a rescaled discrete kernel is compared with its limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub m: u32,
    pub s: f64,
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

/// Spatial scaling of the starting point in the `S*` check. The form
/// `x√(Ns)` disagrees with every other map; `x√(2N)` is the consistent one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StarScaling {
    #[default]
    TwoN,
    Ns,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaOptions {
    pub star_scaling: StarScaling,
    /// Initial data for the epigraph check; needs an exact hypograph kernel.
    pub ic: ContinuumIC,
}

impl Default for LemmaOptions {
    fn default() -> Self {
        Self {
            star_scaling: StarScaling::TwoN,
            ic: ContinuumIC::Flat(0.0),
        }
    }
}

/// One comparison. `s, t, x, y` are the values the lattice actually realises.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub check: u8,
    pub scale: usize,
    pub probe: Probe,
    pub s: f64,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub discrete: f64,
    pub continuum: f64,
    pub error: f64,
}

fn half() -> GeomParams {
    GeomParams::half()
}

fn row(check: u8, scale: usize, probe: &Probe, st: (f64, f64), xy: (f64, f64), discrete: f64, continuum: f64) -> ScalingRow {
    ScalingRow {
        check,
        scale,
        probe: *probe,
        s: st.0,
        t: st.1,
        x: xy.0,
        y: xy.1,
        discrete,
        continuum,
        error: (discrete - continuum).abs(),
    }
}

/// Flat level realised by the embedding at this scale.
fn effective_ic(ic: &ContinuumIC, map: &RescaleMap) -> Result<ContinuumIC> {
    match ic {
        ContinuumIC::Flat(c) => Ok(ContinuumIC::Flat((c * map.spread()).floor() / map.spread())),
        _ => Err(invalid("the epigraph check needs flat data, the only embeddable data with an exact hypograph kernel")),
    }
}

fn lemma_row(lemma: u8, scale: usize, p: &Probe, opts: &LemmaOptions) -> Result<ScalingRow> {
    let map = RescaleMap::new(scale)?;
    let root = map.spread();
    let m = p.m as i64;
    match lemma {
        1 => {
            let (n1, n2) = (map.level(p.s)?, map.level(p.t)?);
            if n1 >= n2 {
                return Err(invalid("the heat check needs s < t on the lattice"));
            }
            let (z1, z2) = (map.site(n1, p.x), map.site(n2, p.y));
            let (s, t, x, y) = (map.time(n1), map.time(n2), map.position(n1, z1), map.position(n2, z2));
            let d = root * q_pow_closed((n2 - n1) as u32, z1, z2, 0.5);
            Ok(row(1, scale, p, (s, t), (x, y), d, heat_kernel(t - s, x, y)?))
        }
        2 => {
            let n1 = map.level(p.s)?;
            let sigma = match opts.star_scaling {
                StarScaling::TwoN => root,
                StarScaling::Ns => (n1 as f64).sqrt(),
            };
            let z1 = (-2.0 * n1 as f64 - p.x * sigma).floor() as i64;
            let z2 = map.intermediate_site(p.y);
            let (s, x, y) = (map.time(n1), -(z1 as f64 + 2.0 * n1 as f64) / sigma, map.intermediate_position(z2));
            let d = root * s_star(m, n1 as i64, z1, z2, &half(), &Contour::Auto)? / map.prefactor(m);
            let c = s_mt(-m, -s, x, y, &ContinuumContour::Auto)?;
            Ok(row(2, scale, p, (s, s), (x, y), d, c))
        }
        3 => {
            let (n1, n2) = (map.level(p.s)?, map.level(p.t)?);
            if n1 >= n2 {
                return Err(invalid("the S̄ check needs s < t on the lattice"));
            }
            let (z1, z2) = (map.site(n1, p.x), map.site(n2, p.y));
            let (s, t, x, y) = (map.time(n1), map.time(n2), map.position(n1, z1), map.position(n2, z2));
            let d = root * s_bar(m, (n2 - n1) as i64, z1, z2, &half(), &Contour::Auto)? * map.prefactor(m);
            let c = s_mt(m, t - s, x, y, &ContinuumContour::Auto)?;
            Ok(row(3, scale, p, (s, t), (x, y), d, c))
        }
        4 => {
            let ic = effective_ic(&opts.ic, &map)?;
            let data = embed_continuum_ic(&opts.ic, scale, &half())?;
            let n2 = map.level(p.t)?;
            let (z1, z2) = (map.intermediate_site(p.x), map.site(n2, p.y));
            let (t, x, y) = (map.time(n2), map.intermediate_position(z1), map.position(n2, z2));
            // S^epi is a lattice density in z2 like S̄, hence the extra √(2N)
            let d = root * s_epi(m, n2, z1, z2, &data, &half())? * map.prefactor(m);
            let c = s_hypo_exact(p.m, t, x, y, &ic)?;
            Ok(row(4, scale, p, (0.0, t), (x, y), d, c))
        }
        _ => Err(invalid(format!("unknown check {lemma}; expected 1 to 4"))),
    }
}

fn check_scales(scales: &[usize]) -> Result<()> {
    if scales.is_empty() || scales.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("scales must be nonempty and strictly increasing"));
    }
    Ok(())
}

/// Errors of one rescaled kernel against its limit, for every probe and scale.
/// Rows come out probe-major, scales ascending.
pub fn lemma_check(lemma: u8, scales: &[usize], probes: &[Probe], opts: &LemmaOptions) -> Result<Vec<ScalingRow>> {
    check_scales(scales)?;
    let jobs: Vec<(&Probe, usize)> = probes.iter().flat_map(|p| scales.iter().map(move |&n| (p, n))).collect();
    jobs.par_iter().map(|&(p, n)| lemma_row(lemma, n, p, opts)).collect()
}

/// Initial data for the product check: step data against the narrow wedge, or
/// the embedding of flat data.
fn product_data(ic: &ContinuumIC, map: &RescaleMap) -> Result<(DiscreteIC, ContinuumIC)> {
    match ic {
        ContinuumIC::NarrowWedge => Ok((DiscreteIC::step(map.scale), ContinuumIC::NarrowWedge)),
        _ => Ok((embed_continuum_ic(ic, map.scale, &half())?, effective_ic(ic, map)?)),
    }
}

fn product_row(scale: usize, p: &Probe, ic: &ContinuumIC) -> Result<ScalingRow> {
    let map = RescaleMap::new(scale)?;
    let (data, limit_ic) = product_data(ic, &map)?;
    let (n1, n2) = (map.level(p.s)?, map.level(p.t)?);
    if n1 > n2 {
        return Err(invalid("the product check needs s <= t"));
    }
    let (z1, z2) = (map.site(n1, p.x), map.site(n2, p.y));
    let (s, t, x, y) = (map.time(n1), map.time(n2), map.position(n1, z1), map.position(n2, z2));
    let d = map.spread() * k_geometric(n1, z1, n2, z2, p.m, &data, &half())?.value;
    let c = k_extended(s, x, t, y, p.m, &limit_ic, &HittingConfig::default(), 0)?.value;
    Ok(row(0, scale, p, (s, t), (x, y), d, c))
}

/// `√(2N) K_geometric` against the Brownian extended kernel at matched points.
/// Narrow wedge is matched with step data. Rows are reported with `check = 0`.
pub fn product_check(scales: &[usize], probes: &[Probe], ic: &ContinuumIC) -> Result<Vec<ScalingRow>> {
    check_scales(scales)?;
    let jobs: Vec<(&Probe, usize)> = probes.iter().flat_map(|p| scales.iter().map(move |&n| (p, n))).collect();
    jobs.par_iter().map(|&(p, n)| product_row(n, p, ic)).collect()
}

/// Per-scale worst error over probes and the fitted decay exponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSummary {
    pub check: u8,
    pub scales: Vec<usize>,
    pub max_errors: Vec<f64>,
    /// Least-squares slope of `-ln(error)` against `ln(N)`.
    pub rate: f64,
    pub decreasing: bool,
}

pub fn summarize(rows: &[ScalingRow]) -> Result<RateSummary> {
    let first = rows.first().ok_or_else(|| invalid("no rows to summarise"))?;
    let mut scales: Vec<usize> = rows.iter().map(|r| r.scale).collect();
    scales.sort_unstable();
    scales.dedup();
    let max_errors: Vec<f64> = scales
        .iter()
        .map(|&n| rows.iter().filter(|r| r.scale == n).map(|r| r.error).fold(0.0, f64::max))
        .collect();
    Ok(RateSummary {
        check: first.check,
        rate: fit_rate(&scales, &max_errors),
        decreasing: max_errors.windows(2).all(|w| w[1] < w[0]),
        scales,
        max_errors,
    })
}

/// `-slope` of the least-squares line through `(ln N, ln error)`.
pub fn fit_rate(scales: &[usize], errors: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = scales.iter().zip(errors).map(|(&n, &e)| ((n as f64).ln(), e.ln())).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    -sxy / sxx
}

fn probe(m: u32, s: f64, t: f64, x: f64, y: f64) -> Probe {
    Probe { m, s, t, x, y }
}

/// The standard probes for each check (`0` is the product check).
pub fn standard_probes(check: u8) -> Vec<Probe> {
    match check {
        1 => vec![probe(0, 0.25, 0.75, 0.0, 0.0), probe(0, 0.25, 0.75, 0.4, -0.3), probe(0, 0.5, 1.0, -0.5, 0.5)],
        2 => vec![probe(1, 0.5, 0.5, 0.3, -0.2), probe(2, 0.5, 0.5, 0.3, -0.2), probe(3, 1.0, 1.0, -0.4, 0.5)],
        3 => vec![probe(0, 0.25, 0.75, 0.0, 0.3), probe(1, 0.25, 0.75, 0.2, -0.1), probe(2, 0.5, 1.0, -0.3, 0.4)],
        4 => vec![probe(1, 0.0, 0.5, 0.5, 0.2), probe(2, 0.0, 1.0, 0.4, 0.3), probe(1, 0.0, 1.0, -0.3, -0.6)],
        _ => vec![probe(1, 0.5, 1.0, 0.2, 0.5), probe(1, 0.5, 0.5, 0.3, 0.1), probe(2, 0.5, 1.0, -0.2, 0.4)],
    }
}
