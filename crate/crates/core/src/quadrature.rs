//! Real-line quadrature: Gauss–Legendre rules and adaptive Gauss–Kronrod.

use crate::error::{Error, Result};
use std::f64::consts::PI;

/// Nodes and weights of a quadrature rule on a real interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// Concatenate rules on adjacent intervals.
    pub fn concat(parts: impl IntoIterator<Item = Rule>) -> Rule {
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for p in parts {
            nodes.extend(p.nodes);
            weights.extend(p.weights);
        }
        Rule { nodes, weights }
    }
}

/// Gauss–Legendre rule with `n` nodes on `[lo, hi]`.
///
/// Roots of P_n by Newton iteration from the Chebyshev-like initial guess.
pub fn gauss_legendre(n: usize, lo: f64, hi: f64) -> Rule {
    assert!(n >= 1, "Gauss-Legendre needs at least one node");
    let (nodes, weights) = reference_gauss_legendre(n);
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    Rule {
        nodes: nodes.iter().map(|&x| mid + half * x).collect(),
        weights: weights.iter().map(|&w| half * w).collect(),
    }
}

fn reference_gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite Gauss–Legendre: `panels` equal panels on `[lo, hi]`, `order` nodes each.
pub fn composite_gauss_legendre(lo: f64, hi: f64, panels: usize, order: usize) -> Rule {
    let panels = panels.max(1);
    let h = (hi - lo) / panels as f64;
    Rule::concat((0..panels).map(|p| {
        let a = lo + h * p as f64;
        gauss_legendre(order, a, a + h)
    }))
}

/// Composite Gauss–Legendre over consecutive breakpoints, panel width at most `max_width`.
pub fn piecewise_gauss_legendre(breaks: &[f64], max_width: f64, order: usize) -> Rule {
    Rule::concat(breaks.windows(2).filter(|w| w[1] > w[0]).map(|w| {
        let panels = ((w[1] - w[0]) / max_width).ceil().max(1.0) as usize;
        composite_gauss_legendre(w[0], w[1], panels, order)
    }))
}

// Kronrod 15-point abscissae/weights with the embedded Gauss 7-point weights.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Kronrod value, error estimate and Kronrod estimate of `∫|f|`.
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut abs = fc.abs() * WGK[7];
    for j in 0..7 {
        let dx = h * XGK[j];
        let (f1, f2) = (f(c - dx), f(c + dx));
        kron += WGK[j] * (f1 + f2);
        abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    (kron * h, ((kron - gauss) * h).abs(), abs * h.abs())
}

/// Adaptive Gauss–Kronrod (7/15) integration of `f` over `[a, b]`.
///
/// Bisects the interval with the largest error estimate until the summed
/// estimate is below `max(abs_tol, rel_tol * |I|)`, or below the roundoff
/// floor `64 ε ∫|f|` when the integrand cancels heavily.
pub fn adaptive_gk<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (v, e, r) = gk15(&f, a, b);
    let mut intervals = vec![(a, b, v, e, r)];
    let mut previous = v;
    for _ in 0..2000 {
        let total: f64 = intervals.iter().map(|i| i.2).sum();
        let err: f64 = intervals.iter().map(|i| i.3).sum();
        let roundoff = 64.0 * f64::EPSILON * intervals.iter().map(|i| i.4).sum::<f64>();
        if err <= abs_tol.max(rel_tol * total.abs()).max(roundoff) {
            return Ok(total);
        }
        let (idx, _) = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("nonempty interval list");
        let (lo, hi, _, _, _) = intervals.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Ok(total);
        }
        let (v1, e1, r1) = gk15(&f, lo, mid);
        let (v2, e2, r2) = gk15(&f, mid, hi);
        intervals.push((lo, mid, v1, e1, r1));
        intervals.push((mid, hi, v2, e2, r2));
        previous = total;
    }
    let last: f64 = intervals.iter().map(|i| i.2).sum();
    Err(Error::Convergence { previous, last })
}
