//! Geometric last passage percolation: weights, the column-data recursion,
//! the map to strictly decreasing configurations and initial-data embedding.

use crate::continuum_kernels::ContinuumIC;
use crate::error::{invalid, Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Parameters of the geometric environment and of the auxiliary walk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeomParams {
    /// `P(ω = k) = (1 - q) q^k`.
    pub q: f64,
    /// Parameter of the `-Geom(1 - θ)` walk used by the correlation kernel.
    pub theta: f64,
}

impl GeomParams {
    pub fn new(q: f64, theta: f64) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return Err(invalid(format!("q must lie in (0,1), got {q}")));
        }
        if !(theta > 0.0 && theta < 1.0) {
            return Err(invalid(format!("theta must lie in (0,1), got {theta}")));
        }
        Ok(Self { q, theta })
    }

    /// `q = θ = 1/2`, the choice used for the Brownian scaling limit.
    pub fn half() -> Self {
        Self { q: 0.5, theta: 0.5 }
    }

    pub fn alpha(&self) -> f64 {
        (1.0 - self.theta) / self.theta
    }

    /// `φ(w) = (1 - q) w / (w - q)`.
    pub fn phi(&self, w: Complex64) -> Complex64 {
        (1.0 - self.q) * w / (w - self.q)
    }

    /// Mean of one weight, `q / (1 - q)`.
    pub fn c1(&self) -> f64 {
        self.q / (1.0 - self.q)
    }

    /// Variance of one weight, `q / (1 - q)^2`.
    pub fn c2(&self) -> f64 {
        self.q / ((1.0 - self.q) * (1.0 - self.q))
    }
}

/// Column-zero data `x_1 <= x_2 <= ... <= x_N`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscreteIC {
    x: Vec<i64>,
}

impl DiscreteIC {
    pub fn new(x: Vec<i64>) -> Result<Self> {
        if x.is_empty() {
            return Err(invalid("initial data must have at least one entry"));
        }
        if let Some(i) = x.windows(2).position(|w| w[0] > w[1]) {
            return Err(invalid(format!(
                "initial data must be weakly increasing (x_{} = {} > x_{} = {})",
                i + 1,
                x[i],
                i + 2,
                x[i + 1]
            )));
        }
        Ok(Self { x })
    }

    /// Step data `x ≡ 0` on `n` sites.
    pub fn step(n: usize) -> Self {
        Self { x: vec![0; n] }
    }

    /// Rebuild from strictly decreasing data `x̃_j = -x_j - j`.
    pub fn from_tilde(tilde: &[i64]) -> Result<Self> {
        Self::new(map_from_x(tilde)?)
    }

    pub fn values(&self) -> &[i64] {
        &self.x
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// `x̃_j = -x_j - j`, strictly decreasing.
    pub fn tilde(&self) -> Vec<i64> {
        self.x
            .iter()
            .enumerate()
            .map(|(j, &v)| -v - (j as i64 + 1))
            .collect()
    }
}

/// i.i.d. geometric weights `ω_{i,j}`, `1 <= i <= rows`, `1 <= j <= cols`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Weights {
    rows: usize,
    cols: usize,
    data: Vec<i64>,
}

impl Weights {
    pub fn from_rows(rows: Vec<Vec<i64>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || cols == 0 {
            return Err(invalid("weight array must be at least 1x1"));
        }
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::ShapeMismatch {
                expected: format!("rows of length {cols}"),
                got: "ragged rows".into(),
            });
        }
        if rows.iter().flatten().any(|&w| w < 0) {
            return Err(invalid("weights must be nonnegative"));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// `ω_{i,j}` with 1-based indices.
    pub fn get(&self, i: usize, j: usize) -> i64 {
        assert!((1..=self.rows).contains(&i) && (1..=self.cols).contains(&j));
        self.data[(i - 1) * self.cols + (j - 1)]
    }

    pub fn row(&self, i: usize) -> &[i64] {
        &self.data[(i - 1) * self.cols..i * self.cols]
    }
}

/// One geometric draw by inversion: `⌊ln U / ln q⌋` with `U ∈ (0, 1]`.
pub fn sample_geometric<R: rand::Rng + ?Sized>(rng: &mut R, ln_q: f64) -> i64 {
    let u = 1.0 - rng.random::<f64>();
    (u.ln() / ln_q).floor() as i64
}

/// Draw an `m x n` environment of `Geom(1 - q)` weights, deterministic in `seed`.
pub fn sample_environment(params: &GeomParams, m: usize, n: usize, seed: u64) -> Result<Weights> {
    GeomParams::new(params.q, params.theta)?;
    if m == 0 || n == 0 {
        return Err(invalid("environment needs M, N >= 1"));
    }
    let mut rng = crate::rng::substream(seed, 0);
    let ln_q = params.q.ln();
    let data = (0..m * n).map(|_| sample_geometric(&mut rng, ln_q)).collect();
    Ok(Weights { rows: m, cols: n, data })
}

/// Treatment of the row `G(m, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryMode {
    /// `G(m, 0) = 0` for all `m`.
    ZeroRow,
    /// `G(m, 0) = -∞`: only the column data enters, as in the transition formula.
    #[default]
    ColumnOnly,
}

impl BoundaryMode {
    fn value(self) -> i64 {
        match self {
            BoundaryMode::ZeroRow => 0,
            BoundaryMode::ColumnOnly => i64::MIN,
        }
    }
}

/// Last passage values `G(i, j)` for `0 <= i <= rows`, `0 <= j <= cols`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LppField {
    rows: usize,
    cols: usize,
    boundary: BoundaryMode,
    data: Vec<i64>,
}

impl LppField {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// `G(i, j)`; `None` stands for `-∞` on the column-only boundary.
    pub fn get(&self, i: usize, j: usize) -> Option<i64> {
        if j == 0 {
            return match self.boundary {
                BoundaryMode::ZeroRow => Some(0),
                BoundaryMode::ColumnOnly => None,
            };
        }
        Some(self.data[i * (self.cols + 1) + j])
    }

    /// `(G(i, 1), ..., G(i, N))`.
    pub fn row(&self, i: usize) -> Vec<i64> {
        (1..=self.cols).map(|j| self.data[i * (self.cols + 1) + j]).collect()
    }
}

/// Advance one row of the recursion in place:
/// `G(m, n) = max(G(m-1, n), G(m, n-1)) + ω_{m, n}`.
pub fn advance_row(row: &mut [i64], weights: &[i64], boundary: BoundaryMode) {
    let mut left = boundary.value();
    for (g, &w) in row.iter_mut().zip(weights) {
        *g = (*g).max(left) + w;
        left = *g;
    }
}

/// Run the last passage recursion from column data `ic`.
pub fn glpp_evolve(weights: &Weights, ic: &DiscreteIC, boundary: BoundaryMode) -> Result<LppField> {
    if ic.len() != weights.cols() {
        return Err(Error::ShapeMismatch {
            expected: format!("initial data of length {}", weights.cols()),
            got: format!("length {}", ic.len()),
        });
    }
    let (m, n) = (weights.rows(), weights.cols());
    let mut data = vec![0i64; (m + 1) * (n + 1)];
    let mut row = ic.values().to_vec();
    data[1..=n].copy_from_slice(&row);
    for i in 1..=m {
        advance_row(&mut row, weights.row(i), boundary);
        data[i * (n + 1) + 1..(i + 1) * (n + 1)].copy_from_slice(&row);
    }
    Ok(LppField {
        rows: m,
        cols: n,
        boundary,
        data,
    })
}

/// `X(m, n) = -G(m, n) - n` for a weakly increasing row (1-based `n`).
pub fn map_to_x(row: &[i64]) -> Result<Vec<i64>> {
    if row.windows(2).any(|w| w[0] > w[1]) {
        return Err(invalid("row must be weakly increasing"));
    }
    Ok(row
        .iter()
        .enumerate()
        .map(|(j, &g)| -g - (j as i64 + 1))
        .collect())
}

/// Inverse of [`map_to_x`]; rejects configurations that are not strictly decreasing.
pub fn map_from_x(xs: &[i64]) -> Result<Vec<i64>> {
    if xs.windows(2).any(|w| w[0] <= w[1]) {
        return Err(invalid("configuration must be strictly decreasing"));
    }
    Ok(xs
        .iter()
        .enumerate()
        .map(|(j, &x)| -x - (j as i64 + 1))
        .collect())
}

/// Event `{G(m, n_i) < a_i for all i}` with strictly increasing `n_i >= 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventSpec {
    pairs: Vec<(usize, i64)>,
}

impl EventSpec {
    pub fn new(pairs: Vec<(usize, i64)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(invalid("event needs at least one (n, a) pair"));
        }
        if pairs.iter().any(|p| p.0 == 0) {
            return Err(invalid("event columns are 1-based"));
        }
        if pairs.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(invalid("event columns must be strictly increasing"));
        }
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> &[(usize, i64)] {
        &self.pairs
    }

    /// Truth value of the event on a row `G(m, ·)`.
    pub fn holds_for_g(&self, row: &[i64]) -> bool {
        self.pairs.iter().all(|&(n, a)| row[n - 1] < a)
    }
}

/// The equivalent event `{X(m, n_i) > -a_i - n_i}`: returns `(n_i, -a_i - n_i)`.
pub fn translate_event(spec: &EventSpec) -> Vec<(usize, i64)> {
    spec.pairs.iter().map(|&(n, a)| (n, -a - n as i64)).collect()
}

/// Truth value of the translated event on a configuration `X(m, ·)`.
pub fn x_event_holds(thresholds: &[(usize, i64)], xs: &[i64]) -> bool {
    thresholds.iter().all(|&(n, thr)| xs[n - 1] > thr)
}

/// Discretise a continuous initial condition: `x_n = ⌊c1 n + √(c2 N) X(n/N)⌋`.
pub fn embed_continuum_ic(ic: &ContinuumIC, scale: usize, params: &GeomParams) -> Result<DiscreteIC> {
    if scale == 0 {
        return Err(invalid("embedding scale must be positive"));
    }
    if matches!(ic, ContinuumIC::NarrowWedge) {
        return Err(invalid(
            "narrow wedge is not a finite function and cannot be embedded",
        ));
    }
    let spread = (params.c2() * scale as f64).sqrt();
    let x: Vec<i64> = (1..=scale)
        .map(|n| {
            let t = n as f64 / scale as f64;
            (params.c1() * n as f64 + spread * ic.eval(t)).floor() as i64
        })
        .collect();
    DiscreteIC::new(x).map_err(|e| {
        invalid(format!(
            "embedded data is not monotone at scale {scale}; increase the scale ({e})"
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_recursion_small_cases() {
        let w = Weights::from_rows(vec![vec![1, 2]]).unwrap();
        let f = glpp_evolve(&w, &DiscreteIC::new(vec![0, 0]).unwrap(), BoundaryMode::ZeroRow).unwrap();
        assert_eq!(f.get(1, 1), Some(1));
        assert_eq!(f.get(1, 2), Some(3));

        let w = Weights::from_rows(vec![vec![3]]).unwrap();
        let f = glpp_evolve(&w, &DiscreteIC::new(vec![0]).unwrap(), BoundaryMode::ColumnOnly).unwrap();
        assert_eq!(f.get(1, 1), Some(3));
        assert_eq!(f.get(1, 0), None);
    }

    #[test]
    fn boundary_modes_differ_only_for_negative_data() {
        let w = Weights::from_rows(vec![vec![0, 1], vec![2, 0]]).unwrap();
        let neg = DiscreteIC::new(vec![-3, 1]).unwrap();
        let a = glpp_evolve(&w, &neg, BoundaryMode::ZeroRow).unwrap();
        let b = glpp_evolve(&w, &neg, BoundaryMode::ColumnOnly).unwrap();
        assert_eq!(a.get(1, 1), Some(0));
        assert_eq!(b.get(1, 1), Some(-3));
        let pos = DiscreteIC::new(vec![0, 1]).unwrap();
        assert_eq!(
            glpp_evolve(&w, &pos, BoundaryMode::ZeroRow).unwrap(),
            LppField {
                boundary: BoundaryMode::ZeroRow,
                ..glpp_evolve(&w, &pos, BoundaryMode::ColumnOnly).unwrap()
            }
        );
    }

    #[test]
    fn shape_mismatch_reported() {
        let w = Weights::from_rows(vec![vec![1, 2]]).unwrap();
        assert!(matches!(
            glpp_evolve(&w, &DiscreteIC::step(3), BoundaryMode::ZeroRow),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn map_to_x_examples() {
        assert_eq!(map_to_x(&[0, 3]).unwrap()[1], -5);
        assert_eq!(DiscreteIC::step(3).tilde(), vec![-1, -2, -3]);
        assert!(map_to_x(&[2, 1]).is_err());
        assert!(map_from_x(&[-1, -1]).is_err());
        let x = vec![-2, 0, 0, 5];
        assert_eq!(map_from_x(&map_to_x(&x).unwrap()).unwrap(), x);
    }

    #[test]
    fn translate_event_thresholds() {
        let e = EventSpec::new(vec![(1, 0), (2, 5)]).unwrap();
        assert_eq!(translate_event(&e), vec![(1, -1), (2, -7)]);
        assert!(EventSpec::new(vec![]).is_err());
        assert!(EventSpec::new(vec![(2, 0), (2, 1)]).is_err());
    }

    #[test]
    fn environment_is_seeded_and_validated() {
        let p = GeomParams::half();
        let a = sample_environment(&p, 3, 4, 9).unwrap();
        assert_eq!(a, sample_environment(&p, 3, 4, 9).unwrap());
        assert!(sample_environment(&GeomParams { q: 1.2, theta: 0.5 }, 2, 2, 1).is_err());
        assert!(GeomParams::new(0.0, 0.5).is_err());
        let tiny = GeomParams::new(1e-12, 0.5).unwrap();
        let w = sample_environment(&tiny, 20, 20, 3).unwrap();
        assert!((1..=20).all(|i| w.row(i).iter().all(|&v| v == 0)));
    }

    #[test]
    fn embedding_examples() {
        let p = GeomParams::half();
        let flat = embed_continuum_ic(&ContinuumIC::Flat(0.0), 100, &p).unwrap();
        assert_eq!(flat.values(), (1..=100).collect::<Vec<i64>>().as_slice());
        let line = ContinuumIC::piecewise_linear(vec![(0.0, 0.0), (1.0, -1.0)]).unwrap();
        let e = embed_continuum_ic(&line, 100, &p).unwrap();
        for n in 1..=100i64 {
            let expected = n + (-(200f64).sqrt() * (n as f64 / 100.0)).floor() as i64;
            assert_eq!(e.values()[(n - 1) as usize], expected);
        }
        assert!(embed_continuum_ic(&ContinuumIC::NarrowWedge, 100, &p).is_err());
    }
}
