//! Kernels of the geometric model: negative binomial transitions, the
//! Johansson and Schütz-form determinants, and the walk kernels entering the
//! extended correlation kernel.
//!
//! Kernels on `Z x Z` are Toeplitz in `d = z1 - z2`. Each contour integrand is
//! assembled as a [`PowerProduct`] so that fixed circles and the residue
//! decomposition share one definition.

use crate::contour::{best_radius, evaluate, Contour, ContourValue, PowerProduct, MIN_NODES};
use crate::discrete_model::{DiscreteIC, GeomParams};
use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::special::{binomial, ln_binomial};
use num_complex::Complex64;
use std::collections::HashMap;
use std::f64::consts::PI;

/// Negative binomial law of the sum of `m` weights: `C(x+m-1, m-1) q^x (1-q)^m`.
/// `m = 0` is the point mass at zero.
pub fn w_m(x: i64, m: u32, q: f64) -> f64 {
    if x < 0 {
        return 0.0;
    }
    if m == 0 {
        return if x == 0 { 1.0 } else { 0.0 };
    }
    let m = m as i64;
    if x + m - 1 <= 60 {
        binomial(x + m - 1, m - 1) * q.powi(x as i32) * (1.0 - q).powi(m as i32)
    } else {
        (ln_binomial(x + m - 1, m - 1) + x as f64 * q.ln() + m as f64 * (1.0 - q).ln()).exp()
    }
}

/// `∇^n w_m(x)` by finite differences (`n > 0`) or iterated left sums (`n < 0`),
/// with `∇f(x) = f(x+1) - f(x)` and `∇^{-1} f(x) = Σ_{y<x} f(y)`.
pub fn nabla_w(x: i64, n: i64, m: u32, q: f64) -> f64 {
    if n >= 0 {
        (0..=n)
            .map(|j| {
                let sign = if (n - j) % 2 == 0 { 1.0 } else { -1.0 };
                sign * binomial(n, j) * w_m(x + j, m, q)
            })
            .sum()
    } else {
        // ∇^{-k} f(x) = Σ_{u<x} C(x-1-u, k-1) f(u)
        let k = -n;
        (0..x)
            .filter(|&u| x - 1 - u >= k - 1)
            .map(|u| binomial(x - 1 - u, k - 1) * w_m(u, m, q))
            .sum()
    }
}

fn check_q(q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("q must lie in (0,1), got {q}")))
    }
}

fn real_part(v: ContourValue, what: &str) -> Result<f64> {
    let floor = 1e3 * f64::EPSILON * v.log_scale.exp();
    let tol = (1e-9 * v.value.re.abs()).max(1e-12).max(floor);
    if v.value.im.abs() > tol {
        return Err(invalid(format!("{what}: imaginary residue {} too large", v.value.im)));
    }
    // each node contributes at most `scale` with relative error ε
    let roundoff = 16.0 * f64::EPSILON * v.log_scale.exp();
    if roundoff > 1e-8 * v.value.re.abs().max(1.0) {
        return Err(Error::PrecisionLoss { floor: roundoff, value: v.value.re });
    }
    Ok(v.value.re)
}

fn fixed_radius_in(contour: &Contour, lo: f64, hi: f64, what: &str) -> Result<()> {
    if let Contour::Circle(c) = contour {
        if !(c.radius > lo && c.radius < hi) {
            return Err(invalid(format!(
                "{what}: radius {} outside the admissible range ({lo}, {hi})",
                c.radius
            )));
        }
    }
    Ok(())
}

/// The discrete `H_n(x) = ∇^n w_m(x)` through its contour integral over `|z| = r`,
/// `1 < r < 1/(1-q)`.
pub fn h_discrete(x: i64, n: i64, m: u32, q: f64, contour: &Contour) -> Result<f64> {
    check_q(q)?;
    fixed_radius_in(contour, 1.0, 1.0 / (1.0 - q), "H_n")?;
    let m = m as i64;
    let sign = if (n - 1).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    let g = PowerProduct::new(sign)
        .factor(0.0, n)
        .affine(1.0, -1.0, m + x - 1)
        .affine(1.0, -1.0 / (1.0 - q), -m);
    real_part(evaluate(&g, contour, 2.0)?, "H_n")
}

/// `F_n(x) = H_{-n}(n - x)` through its own contour integral over `|w| = r > 1`.
pub fn f_discrete(x: i64, n: i64, m: u32, q: f64, contour: &Contour) -> Result<f64> {
    check_q(q)?;
    fixed_radius_in(contour, 1.0, f64::INFINITY, "F_n")?;
    let m = m as i64;
    let sign = if n.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    let g = PowerProduct::new(sign)
        .scale_log(m as f64 * (1.0 - q).ln())
        .factor(0.0, n - x - 1 + m)
        .affine(1.0, -1.0, -n)
        .factor(q, -m);
    real_part(evaluate(&g, contour, 2.0)?, "F_n")
}

fn check_same_len(x: &DiscreteIC, y: &DiscreteIC) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} entries", x.len()),
            got: format!("{} entries", y.len()),
        });
    }
    Ok(())
}

/// `P(G(m, ·) = y | G(0, ·) = x) = det[∇^{j-i} w_m(y_j - x_i)]`, entries by exact differences.
pub fn johansson_transition(x: &DiscreteIC, y: &DiscreteIC, m: u32, q: f64) -> Result<f64> {
    check_q(q)?;
    check_same_len(x, y)?;
    let n = x.len();
    let (xs, ys) = (x.values(), y.values());
    let mut a = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            a.push(nabla_w(ys[j] - xs[i], j as i64 - i as i64, m, q));
        }
    }
    Ok(linalg::det(a, n))
}

/// The same transition probability as `det[F_{i-j}(ỹ_{N+1-i} - x̃_{N+1-j})]`.
pub fn schutz_transition(
    x: &DiscreteIC,
    y: &DiscreteIC,
    m: u32,
    q: f64,
    contour: &Contour,
) -> Result<f64> {
    check_q(q)?;
    check_same_len(x, y)?;
    let n = x.len();
    let (xt, yt) = (x.tilde(), y.tilde());
    let mut a = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            a.push(f_discrete(
                yt[n - 1 - i] - xt[n - 1 - j],
                i as i64 - j as i64,
                m,
                q,
                contour,
            )?);
        }
    }
    Ok(linalg::det(a, n))
}

fn q_pow_integrand(n: i64, d: i64, theta: f64) -> PowerProduct {
    let alpha = (1.0 - theta) / theta;
    PowerProduct::new(1.0)
        .scale_log(d as f64 * theta.ln() + n as f64 * alpha.ln())
        .factor(0.0, -(d - n + 1))
        .affine(1.0, -1.0, -n)
}

/// `Q^n(z1, z2)` for the walk with `-Geom(1-θ)` steps, any integer `n`, contour radius in `(0,1)`.
pub fn q_pow(n: i64, z1: i64, z2: i64, theta: f64, contour: &Contour) -> Result<f64> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(invalid(format!("theta must lie in (0,1), got {theta}")));
    }
    fixed_radius_in(contour, 0.0, 1.0, "Q^n")?;
    let g = q_pow_integrand(n, z1 - z2, theta);
    real_part(evaluate(&g, contour, 1.0)?, "Q^n")
}

/// `Q^n(z1, z2) = θ^d α^n C(d-1, n-1)` for `n >= 1`, `d = z1 - z2 >= n`.
pub fn q_pow_closed(n: u32, z1: i64, z2: i64, theta: f64) -> f64 {
    let d = z1 - z2;
    if n == 0 {
        return if d == 0 { 1.0 } else { 0.0 };
    }
    let n = n as i64;
    if d < n {
        return 0.0;
    }
    let alpha = (1.0 - theta) / theta;
    (ln_binomial(d - 1, n - 1) + d as f64 * theta.ln() + n as f64 * alpha.ln()).exp()
}

/// `R_m(z1, z2)` for a signed `m` (use `-m` for `R_{-m}`); radius in `(q, 1)`.
pub fn r_pm(m: i64, z1: i64, z2: i64, params: &GeomParams, contour: &Contour) -> Result<f64> {
    fixed_radius_in(contour, params.q, 1.0, "R_m")?;
    let d = z1 - z2;
    let g = PowerProduct::new(1.0)
        .scale_log(d as f64 * params.theta.ln() + m as f64 * (1.0 - params.q).ln())
        .factor(0.0, m - (d + 1))
        .factor(params.q, -m);
    real_part(evaluate(&g, contour, 1.0)?, "R_m")
}

fn s_star_integrand(m: i64, n: i64, d: i64, params: &GeomParams) -> PowerProduct {
    let alpha = params.alpha();
    PowerProduct::new(1.0)
        .scale_log(
            (1 - n) as f64 * alpha.ln() + d as f64 * params.theta.ln() + m as f64 * (1.0 - params.q).ln(),
        )
        .factor(0.0, m - (d + n + 1))
        .affine(1.0, -1.0, n)
        .factor(params.q, -m)
}

/// `S*_{m,-n}(z1, z2)`; radius in `(q, 1)`. Vanishes for `z2 < z1`.
pub fn s_star(m: i64, n: i64, z1: i64, z2: i64, params: &GeomParams, contour: &Contour) -> Result<f64> {
    fixed_radius_in(contour, params.q, 1.0, "S*")?;
    if z1 > z2 {
        return Ok(0.0);
    }
    let g = s_star_integrand(m, n, z1 - z2, params);
    real_part(evaluate(&g, contour, 1.0)?, "S*")
}

fn s_bar_integrand(m: i64, n: i64, d: i64, params: &GeomParams) -> PowerProduct {
    let q = params.q;
    PowerProduct::new(1.0)
        .scale_log((n - 1) as f64 * params.alpha().ln() + d as f64 * params.theta.ln() - m as f64 * (1.0 - q).ln())
        .affine(1.0, -1.0, n - 1 - d - m)
        .factor(0.0, -n)
        .affine(1.0 - q, -1.0, m)
}

/// `S̄_{m,n}(z1, z2)`; radius `δ` in `(0, 1-q)`. Vanishes for `n <= 0`.
pub fn s_bar(m: i64, n: i64, z1: i64, z2: i64, params: &GeomParams, contour: &Contour) -> Result<f64> {
    let delta_max = 1.0 - params.q;
    fixed_radius_in(contour, 0.0, delta_max, "S̄")?;
    if n <= 0 {
        return Ok(0.0);
    }
    let g = s_bar_integrand(m, n, z1 - z2, params);
    real_part(evaluate(&g, contour, delta_max)?, "S̄")
}

const FAMILY_CHUNK: usize = 16;
const FAMILY_MAX_NODES: usize = 1 << 16;

/// `S̄_{m,n}(d)` for `d = d0, d0+1, ..., d0+count-1`, sharing trapezoid nodes
/// across chunks of consecutive offsets.
pub fn s_bar_row(m: i64, n: i64, d0: i64, count: usize, params: &GeomParams) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(count);
    if n <= 0 {
        out.resize(count, 0.0);
        return Ok(out);
    }
    let clearance = if m < 0 { 1.0 - params.q } else { 1.0 };
    let mut start = 0;
    while start < count {
        let len = FAMILY_CHUNK.min(count - start);
        let base = d0 + start as i64;
        let mid = s_bar_integrand(m, n, base + len as i64 / 2, params);
        let radius = best_radius(&mid, Complex64::new(0.0, 0.0), 0.95 * clearance);
        let g = s_bar_integrand(m, n, base, params);
        out.extend(shifted_family(&g, radius, len, |u| {
            Complex64::new(params.theta.ln(), 0.0) - (Complex64::new(1.0, 0.0) - u).ln()
        })?);
        start += len;
    }
    Ok(out)
}

/// Trapezoid values of `(1/2πi)∮ g(u) h(u)^k du` on `|u| = radius`, `k = 0..count`,
/// with `log h` supplied; node count doubled until every member settles.
fn shifted_family<H: Fn(Complex64) -> Complex64>(
    g: &PowerProduct,
    radius: f64,
    count: usize,
    log_h: H,
) -> Result<Vec<f64>> {
    let run = |nodes: usize| -> Vec<(f64, f64)> {
        let pts: Vec<(Complex64, Complex64)> = (0..nodes)
            .map(|i| {
                let u = Complex64::from_polar(radius, 2.0 * PI * i as f64 / nodes as f64);
                (g.log_eval(u) + u.ln(), log_h(u))
            })
            .collect();
        (0..count)
            .map(|k| {
                let kf = k as f64;
                let peak = pts
                    .iter()
                    .map(|(a, b)| (a + b * kf).re)
                    .filter(|v| v.is_finite())
                    .fold(f64::NEG_INFINITY, f64::max);
                if !peak.is_finite() {
                    return (0.0, f64::NEG_INFINITY);
                }
                let s: Complex64 = pts.iter().map(|(a, b)| (a + b * kf - peak).exp()).sum();
                ((s * (peak.exp() / nodes as f64)).re, peak)
            })
            .collect()
    };
    let mut nodes = MIN_NODES;
    let mut prev = run(nodes);
    loop {
        nodes *= 2;
        let cur = run(nodes);
        let settled = cur.iter().zip(&prev).all(|(c, p)| {
            let diff = (c.0 - p.0).abs();
            diff <= 1e-14 * c.0.abs() || diff <= 64.0 * f64::EPSILON * c.1.exp()
        });
        if settled {
            return Ok(cur.into_iter().map(|c| c.0).collect());
        }
        if nodes >= FAMILY_MAX_NODES {
            let worst = cur
                .iter()
                .zip(&prev)
                .max_by(|a, b| (a.0 .0 - a.1 .0).abs().total_cmp(&(b.0 .0 - b.1 .0).abs()))
                .expect("family is nonempty");
            return Err(Error::Convergence {
                previous: worst.1 .0,
                last: worst.0 .0,
            });
        }
        prev = cur;
    }
}

/// Mass of the killed walk absorbed at step `step` at positions `lo, lo+1, ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct KillBand {
    pub step: usize,
    pub lo: i64,
    pub mass: Vec<f64>,
}

const MAX_WALK_WIDTH: i64 = 20_000_000;

/// `safe_floor[j]`: a walker at or below this level at step `j` can no longer
/// enter the epigraph before step `n`.
fn safe_floor(xt: &[i64], n: usize) -> Vec<i64> {
    let mut floor = vec![i64::MAX; n];
    let mut best = i64::MAX;
    for j in (0..n).rev() {
        // min over j' >= j of xt[j'] + (j' - j), updated as j decreases
        best = best.saturating_add(1).min(xt[j]);
        floor[j] = best;
    }
    floor
}

/// Distribution of `(τ, B_τ)` on `{τ < n}` for the walk started at `z1`,
/// `τ = min{j : B_j > x̃_{j+1}}`, by exact forward propagation of the
/// surviving mass. Mass that provably cannot be absorbed is discarded.
pub fn epi_kills(z1: i64, n: usize, xt: &[i64], theta: f64) -> Result<Vec<KillBand>> {
    if n > xt.len() {
        return Err(invalid(format!("horizon {n} exceeds initial data length {}", xt.len())));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    if z1 > xt[0] {
        return Ok(vec![KillBand {
            step: 0,
            lo: z1,
            mass: vec![1.0],
        }]);
    }
    let floor = safe_floor(xt, n);
    if z1 <= floor[0] {
        return Ok(Vec::new());
    }
    let base = floor.iter().copied().min().expect("n >= 1") + 1;
    let width = z1 - base + 1;
    if width > MAX_WALK_WIDTH {
        return Err(Error::Truncation {
            leaked: 1.0,
            tolerance: 1e-10,
        });
    }
    let idx = |z: i64| (z - base) as usize;
    let mut p = vec![0.0; width as usize];
    p[idx(z1)] = 1.0;
    let mut top = z1;
    let mut bands = Vec::new();
    for j in 0..n {
        let lo = floor[j] + 1;
        if top < lo {
            break;
        }
        if top > xt[j] {
            let start = (xt[j] + 1).max(lo);
            let mut band = KillBand {
                step: j,
                lo: start,
                mass: p[idx(start)..=idx(top)].to_vec(),
            };
            let first = band.mass.iter().position(|&v| v != 0.0);
            if let Some(first) = first {
                band.mass.drain(..first);
                band.lo += first as i64;
                bands.push(band);
            }
            p[idx(start)..=idx(top)].fill(0.0);
            top = xt[j];
        }
        if j + 1 == n {
            break;
        }
        // one -Geom(1-θ) step: out(z) = (1-θ) in(z+1) + θ out(z+1)
        let next_lo = floor[j + 1] + 1;
        let mut acc = 0.0;
        let mut z = top;
        while z >= lo.min(next_lo) {
            let cur = if z >= lo { p[idx(z)] } else { 0.0 };
            p[idx(z)] = acc;
            acc = (1.0 - theta) * cur + theta * acc;
            z -= 1;
        }
        // mass landing at or below the next floor can no longer be absorbed
        for z in lo..next_lo.min(top + 1) {
            p[idx(z)] = 0.0;
        }
        top -= 1;
    }
    Ok(bands)
}

/// Evaluates `S^{epi(x)}_{m,n}` with memoised `S̄` values.
#[derive(Debug, Clone)]
pub struct EpiKernel {
    pub m: i64,
    pub n: usize,
    xt: Vec<i64>,
    params: GeomParams,
    s_bar: HashMap<(i64, i64), f64>,
}

impl EpiKernel {
    /// `xt` is the strictly decreasing data `x̃`.
    pub fn new(m: i64, n: usize, xt: Vec<i64>, params: GeomParams) -> Result<Self> {
        if xt.windows(2).any(|w| w[0] <= w[1]) {
            return Err(invalid("epigraph data must be strictly decreasing"));
        }
        if n == 0 || n > xt.len() {
            return Err(invalid(format!("horizon must lie in 1..={}, got {n}", xt.len())));
        }
        Ok(Self {
            m,
            n,
            xt,
            params,
            s_bar: HashMap::new(),
        })
    }

    pub fn kills(&self, z1: i64) -> Result<Vec<KillBand>> {
        epi_kills(z1, self.n, &self.xt, self.params.theta)
    }

    /// Make sure `S̄_{m,k}(d)` is cached for `d` in `[d_lo, d_hi]`.
    fn ensure(&mut self, k: i64, d_lo: i64, d_hi: i64) -> Result<()> {
        let mut d = d_lo;
        while d <= d_hi {
            if self.s_bar.contains_key(&(k, d)) {
                d += 1;
                continue;
            }
            let mut end = d;
            while end < d_hi && !self.s_bar.contains_key(&(k, end + 1)) {
                end += 1;
            }
            let row = s_bar_row(self.m, k, d, (end - d + 1) as usize, &self.params)?;
            for (i, v) in row.into_iter().enumerate() {
                self.s_bar.insert((k, d + i as i64), v);
            }
            d = end + 1;
        }
        Ok(())
    }

    /// `Σ_bands mass · S̄_{m, n-step}(b - z2)` for every `z2`.
    pub fn apply(&mut self, bands: &[KillBand], z2s: &[i64]) -> Result<Vec<f64>> {
        let (Some(&zmin), Some(&zmax)) = (z2s.iter().min(), z2s.iter().max()) else {
            return Ok(Vec::new());
        };
        for band in bands {
            let k = (self.n - band.step) as i64;
            let top = band.lo + band.mass.len() as i64 - 1;
            self.ensure(k, band.lo - zmax, top - zmin)?;
        }
        Ok(z2s
            .iter()
            .map(|&z2| {
                bands
                    .iter()
                    .map(|band| {
                        let k = (self.n - band.step) as i64;
                        band.mass
                            .iter()
                            .enumerate()
                            .map(|(i, &mass)| mass * self.s_bar[&(k, band.lo + i as i64 - z2)])
                            .sum::<f64>()
                    })
                    .sum()
            })
            .collect())
    }

    pub fn eval(&mut self, z1: i64, z2: i64) -> Result<f64> {
        let bands = self.kills(z1)?;
        Ok(self.apply(&bands, &[z2])?[0])
    }

    /// Lowest start with a nonzero kernel row.
    pub fn lowest_start(&self) -> i64 {
        safe_floor(&self.xt, self.n)[0] + 1
    }

    /// Highest data point `x̃_1`; above it the walk is absorbed at once.
    pub fn immediate_level(&self) -> i64 {
        self.xt[0]
    }
}

/// `S^{epi(x)}_{m,n}(z1, z2)` for initial data `ic` (column data, mapped to `x̃`).
pub fn s_epi(m: i64, n: usize, z1: i64, z2: i64, ic: &DiscreteIC, params: &GeomParams) -> Result<f64> {
    EpiKernel::new(m, n, ic.tilde(), *params)?.eval(z1, z2)
}

/// Tail tolerance for the intermediate sum of the extended kernel.
pub const SUM_TOLERANCE: f64 = 1e-10;
const MAX_SUM_TERMS: i64 = 200_000;

/// The extended kernel `K(n1, ·; n2, ·)` of the geometric model for initial data `ic`,
/// with memoised `S*` and epigraph pieces.
#[derive(Debug, Clone)]
pub struct GeometricKernel {
    pub m: u32,
    pub params: GeomParams,
    xt: Vec<i64>,
    epi: HashMap<usize, EpiKernel>,
    star: HashMap<(i64, i64), f64>,
}

/// A kernel value together with the bound on the neglected tail of the sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certified {
    pub value: f64,
    pub tail_bound: f64,
}

impl GeometricKernel {
    pub fn new(m: u32, ic: &DiscreteIC, params: GeomParams) -> Result<Self> {
        GeomParams::new(params.q, params.theta)?;
        if ic.is_empty() {
            return Err(invalid("initial data must be nonempty"));
        }
        Ok(Self {
            m,
            params,
            xt: ic.tilde(),
            epi: HashMap::new(),
            star: HashMap::new(),
        })
    }

    pub fn horizon(&self) -> usize {
        self.xt.len()
    }

    fn epi_for(&mut self, n: usize) -> Result<&mut EpiKernel> {
        if !self.epi.contains_key(&n) {
            let k = EpiKernel::new(self.m as i64, n, self.xt.clone(), self.params)?;
            self.epi.insert(n, k);
        }
        Ok(self.epi.get_mut(&n).expect("inserted above"))
    }

    fn star(&mut self, n: usize, d: i64) -> Result<f64> {
        let key = (n as i64, d);
        if let Some(&v) = self.star.get(&key) {
            return Ok(v);
        }
        let v = s_star(self.m as i64, n as i64, d, 0, &self.params, &Contour::Auto)?;
        self.star.insert(key, v);
        Ok(v)
    }

    fn check_levels(&self, n1: usize, n2: usize) -> Result<()> {
        let big_n = self.horizon();
        if n1 == 0 || n2 == 0 || n1 > big_n || n2 > big_n {
            return Err(invalid(format!("levels must lie in 1..={big_n}, got ({n1}, {n2})")));
        }
        Ok(())
    }

    /// The block `K(n1, z1; n2, z2)` for all `z1 in z1s`, `z2 in z2s`, row-major.
    pub fn block(&mut self, n1: usize, z1s: &[i64], n2: usize, z2s: &[i64]) -> Result<(Vec<f64>, f64)> {
        self.check_levels(n1, n2)?;
        let rows = z1s.len();
        let cols = z2s.len();
        let mut out = vec![0.0; rows * cols];
        let mut magnitude = vec![0.0; rows * cols];
        if rows == 0 || cols == 0 {
            return Ok((out, 0.0));
        }
        if n1 < n2 {
            for (i, &z1) in z1s.iter().enumerate() {
                for (j, &z2) in z2s.iter().enumerate() {
                    out[i * cols + j] = -q_pow_closed((n2 - n1) as u32, z1, z2, self.params.theta);
                }
            }
        }
        let zmin = *z1s.iter().min().expect("nonempty");
        let zmax = *z1s.iter().max().expect("nonempty");
        let (w_start, immediate) = {
            let epi = self.epi_for(n2)?;
            (zmin.max(epi.lowest_start()), epi.immediate_level())
        };
        // Sum over w >= w_start. Past max(z1s) and x̃_1 the terms decay
        // geometrically; stop once the envelope tail is below tolerance.
        // S̄_{m,n}(w, z2) lives around w = z2 + n/(1-θ) with spread √(nθ)/(1-θ); the
        // factors can cross zero inside that bulk, so no stopping before it is passed
        let theta = self.params.theta;
        let z2max = *z2s.iter().max().expect("nonempty");
        let bulk_end = z2max as f64 + (n2 as f64 + 8.0 * (n2 as f64 * theta).sqrt()) / (1.0 - theta);
        let mut w = w_start;
        let mut history: Vec<f64> = Vec::new();
        let tail_bound;
        loop {
            let bands = self.epi_for(n2)?.kills(w)?;
            let b_row = self.epi_for(n2)?.apply(&bands, z2s)?;
            let b_max = b_row.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let mut a_max = 0.0f64;
            for (i, &z1) in z1s.iter().enumerate() {
                if w < z1 {
                    continue;
                }
                let a = self.star(n1, z1 - w)?;
                a_max = a_max.max(a.abs());
                if a != 0.0 {
                    for (j, b) in b_row.iter().enumerate() {
                        out[i * cols + j] += a * b;
                        magnitude[i * cols + j] += (a * b).abs();
                    }
                }
            }
            history.push(a_max * b_max);
            if w > zmax && w > immediate && w as f64 > bulk_end && history.len() >= 8 {
                let h = &history[history.len() - 8..];
                let ratio = h
                    .windows(2)
                    .map(|p| if p[0] > 0.0 { p[1] / p[0] } else { 0.0 })
                    .fold(0.0f64, f64::max);
                let last = *h.last().expect("8 entries");
                if last == 0.0 && h.iter().all(|&v| v == 0.0) {
                    tail_bound = 0.0;
                    break;
                }
                if ratio < 1.0 {
                    let bound = last * ratio / (1.0 - ratio);
                    if bound < SUM_TOLERANCE * 1e-3 {
                        tail_bound = bound;
                        break;
                    }
                }
            }
            if w - w_start > MAX_SUM_TERMS {
                return Err(Error::Truncation {
                    leaked: *history.last().unwrap_or(&f64::NAN),
                    tolerance: SUM_TOLERANCE,
                });
            }
            w += 1;
        }
        // S* grows like 2^k C(n,k) away from its bulk, and for data with a deep
        // epigraph the sum then cancels beyond double precision
        for (v, mag) in out.iter().zip(&magnitude) {
            let floor = 16.0 * f64::EPSILON * mag;
            if !(floor <= 1e-8 * v.abs().max(1.0)) {
                return Err(Error::PrecisionLoss { floor, value: *v });
            }
        }
        Ok((out, tail_bound))
    }

    pub fn entry(&mut self, n1: usize, z1: i64, n2: usize, z2: i64) -> Result<Certified> {
        let (v, tail) = self.block(n1, &[z1], n2, &[z2])?;
        Ok(Certified {
            value: v[0],
            tail_bound: tail,
        })
    }
}

/// `K(n1, z1; n2, z2)` for column data `ic` after `m` steps.
pub fn k_geometric(
    n1: usize,
    z1: i64,
    n2: usize,
    z2: i64,
    m: u32,
    ic: &DiscreteIC,
    params: &GeomParams,
) -> Result<Certified> {
    GeometricKernel::new(m, ic, *params)?.entry(n1, z1, n2, z2)
}
