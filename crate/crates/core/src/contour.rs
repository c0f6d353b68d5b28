//! Periodic trapezoid quadrature of contour integrals over circles.
//!
//! Integrands are products of integer powers of affine factors, so they are
//! single-valued and can be handled in log space: each node value is
//! `exp(log g(w))` with the largest real part factored out before summing.

use crate::error::{invalid, Error, Result};
use num_complex::Complex64;
use std::f64::consts::PI;

/// Minimum trapezoid node count accepted for a fixed circle.
pub const MIN_NODES: usize = 64;
const MAX_NODES: usize = 1 << 17;
const PROBE_ANGLES: usize = 32;

/// A circle centred at the origin used as a fixed integration contour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleContour {
    pub radius: f64,
    /// Trapezoid node count, a power of two, at least 64.
    pub nodes: usize,
}

impl CircleContour {
    pub fn new(radius: f64, nodes: usize) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(invalid(format!("contour radius must be positive, got {radius}")));
        }
        if nodes < MIN_NODES || !nodes.is_power_of_two() {
            return Err(invalid(format!(
                "contour node count must be a power of two >= {MIN_NODES}, got {nodes}"
            )));
        }
        Ok(Self { radius, nodes })
    }
}

/// How a contour integral is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Contour {
    /// The caller's circle, evaluated as given.
    Circle(CircleContour),
    /// Residue decomposition: one small circle per enclosed pole, with the
    /// radius chosen to minimise the integrand's peak modulus and the node
    /// count doubled until the value settles.
    #[default]
    Auto,
}

/// One factor `(w - point)^exponent` of a [`PowerProduct`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Factor {
    pub point: Complex64,
    pub exponent: i64,
}

/// `g(w) = C * prod_i (w - p_i)^{e_i}` with a complex constant kept in log form.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerProduct {
    log_const: Complex64,
    factors: Vec<Factor>,
}

impl PowerProduct {
    pub fn new(constant: f64) -> Self {
        Self {
            log_const: Complex64::new(constant.abs().ln(), if constant < 0.0 { PI } else { 0.0 }),
            factors: Vec::new(),
        }
    }

    /// Multiply by `exp(log_c)` for a real `log_c`.
    pub fn scale_log(mut self, log_c: f64) -> Self {
        self.log_const += log_c;
        self
    }

    /// Multiply by `(w - point)^exponent`.
    pub fn factor(mut self, point: f64, exponent: i64) -> Self {
        if exponent != 0 {
            self.factors.push(Factor {
                point: Complex64::new(point, 0.0),
                exponent,
            });
        }
        self
    }

    /// Multiply by `(a + b w)^exponent` for real `b != 0`.
    pub fn affine(mut self, a: f64, b: f64, exponent: i64) -> Self {
        if exponent == 0 {
            return self;
        }
        self.log_const += Complex64::new(b.abs().ln(), if b < 0.0 { PI } else { 0.0 }) * exponent as f64;
        self.factor(-a / b, exponent)
    }

    pub fn log_eval(&self, w: Complex64) -> Complex64 {
        self.factors
            .iter()
            .fold(self.log_const, |acc, f| acc + (w - f.point).ln() * f.exponent as f64)
    }

    /// `log g(center + offset)`, with each `w - p` formed as `(center - p) + offset`
    /// so factors centred at `center` keep full relative precision.
    pub fn log_eval_offset(&self, center: Complex64, offset: Complex64) -> Complex64 {
        self.factors.iter().fold(self.log_const, |acc, f| {
            acc + ((center - f.point) + offset).ln() * f.exponent as f64
        })
    }

    pub fn eval(&self, w: Complex64) -> Complex64 {
        self.log_eval(w).exp()
    }

    /// Distinct points where the product has a pole.
    pub fn poles(&self) -> Vec<Complex64> {
        let mut merged: Vec<(Complex64, i64)> = Vec::new();
        for f in &self.factors {
            match merged.iter_mut().find(|(p, _)| (*p - f.point).norm() < 1e-14) {
                Some(entry) => entry.1 += f.exponent,
                None => merged.push((f.point, f.exponent)),
            }
        }
        merged.into_iter().filter(|(_, e)| *e < 0).map(|(p, _)| p).collect()
    }
}

/// Result of a contour integral `(1/2πi) ∮ g(w) dw`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourValue {
    pub value: Complex64,
    /// log of the peak node modulus; `exp(log_scale) * 1e-16` is the roundoff floor.
    pub log_scale: f64,
    pub nodes: usize,
}

impl ContourValue {
    pub fn zero() -> Self {
        Self {
            value: Complex64::new(0.0, 0.0),
            log_scale: f64::NEG_INFINITY,
            nodes: 0,
        }
    }
}

fn trapezoid(g: &PowerProduct, center: Complex64, radius: f64, nodes: usize) -> ContourValue {
    let logs: Vec<Complex64> = (0..nodes)
        .map(|k| {
            let phase = 2.0 * PI * k as f64 / nodes as f64;
            let offset = Complex64::from_polar(radius, phase);
            // dw = i * offset dphi, and (1/2πi) * i * (2π/n) = 1/n
            g.log_eval_offset(center, offset) + offset.ln()
        })
        .collect();
    let peak = logs
        .iter()
        .map(|l| l.re)
        .filter(|v| v.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if !peak.is_finite() {
        return ContourValue {
            value: Complex64::new(0.0, 0.0),
            log_scale: peak,
            nodes,
        };
    }
    let sum: Complex64 = logs.iter().map(|l| (l - peak).exp()).sum();
    ContourValue {
        value: sum * (peak.exp() / nodes as f64),
        log_scale: peak,
        nodes,
    }
}

/// Integrate over the circle `|w| = contour.radius` with a fixed node count.
pub fn integrate_circle(g: &PowerProduct, contour: &CircleContour) -> Result<ContourValue> {
    for p in g.poles() {
        if (p.norm() - contour.radius).abs() < 1e-9 * contour.radius.max(1.0) {
            return Err(Error::PoleCollision {
                point: format!("{p}"),
                radius: contour.radius,
            });
        }
    }
    Ok(trapezoid(g, Complex64::new(0.0, 0.0), contour.radius, contour.nodes))
}

fn peak_log_modulus(g: &PowerProduct, center: Complex64, radius: f64) -> f64 {
    (0..PROBE_ANGLES)
        .map(|k| {
            let phase = 2.0 * PI * k as f64 / PROBE_ANGLES as f64;
            g.log_eval_offset(center, Complex64::from_polar(radius, phase)).re
        })
        .fold(f64::NEG_INFINITY, f64::max)
        + radius.ln()
}

/// Radius in `(0, max_radius)` minimising the peak modulus of `g` on the
/// circle about `center`; golden-section search in log radius.
pub fn best_radius(g: &PowerProduct, center: Complex64, max_radius: f64) -> f64 {
    let objective = |u: f64| peak_log_modulus(g, center, u.exp());
    let mut lo = (max_radius * 1e-7).ln();
    let mut hi = max_radius.ln();
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut a = hi - ratio * (hi - lo);
    let mut b = lo + ratio * (hi - lo);
    let mut fa = objective(a);
    let mut fb = objective(b);
    for _ in 0..40 {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - ratio * (hi - lo);
            fa = objective(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + ratio * (hi - lo);
            fb = objective(b);
        }
        if hi - lo < 1e-4 {
            break;
        }
    }
    (0.5 * (lo + hi)).exp()
}

/// Node-doubling trapezoid on a circle until successive values agree to
/// `rel_tol` or to the roundoff floor.
pub fn integrate_adaptive(
    g: &PowerProduct,
    center: Complex64,
    radius: f64,
    rel_tol: f64,
) -> Result<ContourValue> {
    let mut nodes = MIN_NODES;
    let mut prev = trapezoid(g, center, radius, nodes);
    loop {
        nodes *= 2;
        let cur = trapezoid(g, center, radius, nodes);
        let diff = (cur.value - prev.value).norm();
        let floor = 64.0 * f64::EPSILON * cur.log_scale.exp();
        if diff <= rel_tol * cur.value.norm() || diff <= floor {
            return Ok(cur);
        }
        if nodes >= MAX_NODES {
            return Err(Error::Convergence {
                previous: prev.value.re,
                last: cur.value.re,
            });
        }
        prev = cur;
    }
}

/// Sum of residues of `g` at its poles inside `|w| < enclosing_radius`,
/// each evaluated on its own optimally sized circle.
pub fn residue_sum(g: &PowerProduct, enclosing_radius: f64) -> Result<ContourValue> {
    let poles = g.poles();
    let inside: Vec<Complex64> = poles
        .iter()
        .copied()
        .filter(|p| p.norm() < enclosing_radius)
        .collect();
    let mut total = ContourValue::zero();
    for &p in &inside {
        let clearance = poles
            .iter()
            .filter(|&&o| (o - p).norm() > 1e-14)
            .map(|&o| (o - p).norm())
            .fold(f64::INFINITY, f64::min);
        let max_radius = if clearance.is_finite() { 0.95 * clearance } else { 4.0 };
        let radius = best_radius(g, p, max_radius);
        let part = integrate_adaptive(g, p, radius, 1e-14)?;
        total.value += part.value;
        total.log_scale = total.log_scale.max(part.log_scale);
        total.nodes += part.nodes;
    }
    Ok(total)
}

/// Evaluate `(1/2πi)∮ g` over the nominal circle `|w| = nominal_radius`
/// either literally or through the residue decomposition.
pub fn evaluate(g: &PowerProduct, contour: &Contour, nominal_radius: f64) -> Result<ContourValue> {
    match contour {
        Contour::Circle(c) => integrate_circle(g, c),
        Contour::Auto => residue_sum(g, nominal_radius),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_pole_residue() {
        // 1/(w - 0.3) has residue 1
        let g = PowerProduct::new(1.0).factor(0.3, -1);
        let fixed = integrate_circle(&g, &CircleContour::new(0.5, 64).unwrap()).unwrap();
        assert!((fixed.value.re - 1.0).abs() < 1e-14);
        let auto = residue_sum(&g, 0.5).unwrap();
        assert!((auto.value.re - 1.0).abs() < 1e-13);
    }

    #[test]
    fn coefficient_extraction_matches_binomial() {
        // [w^5] (1 + w)^12 = C(12,5) = 792, as (1/2πi)∮ (1+w)^12 / w^6
        let g = PowerProduct::new(1.0).affine(1.0, 1.0, 12).factor(0.0, -6);
        let v = residue_sum(&g, 1.0).unwrap();
        assert!((v.value.re - 792.0).abs() < 1e-9, "{}", v.value.re);
        assert!(v.value.im.abs() < 1e-9);
    }

    #[test]
    fn pole_on_circle_rejected() {
        let g = PowerProduct::new(1.0).factor(0.5, -2);
        assert!(matches!(
            integrate_circle(&g, &CircleContour::new(0.5, 64).unwrap()),
            Err(Error::PoleCollision { .. })
        ));
        assert!(CircleContour::new(0.5, 100).is_err());
        assert!(CircleContour::new(-1.0, 128).is_err());
    }

    #[test]
    fn two_poles_sum() {
        // 1/((w-0.2)(w-0.6)) residues 1/(-0.4) + 1/0.4 = 0
        let g = PowerProduct::new(1.0).factor(0.2, -1).factor(0.6, -1);
        let v = residue_sum(&g, 1.0).unwrap();
        assert!(v.value.norm() < 1e-13);
        let only_inner = residue_sum(&g, 0.4).unwrap();
        assert!((only_inner.value.re + 2.5).abs() < 1e-12);
    }
}
