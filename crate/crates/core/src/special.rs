//! Small special-function helpers shared by the kernels.


/// Binomial coefficient C(n, k) for nonnegative integers as a float.
///
/// Exact integer arithmetic while the product fits, log-gamma otherwise.
pub fn binomial(n: i64, k: i64) -> f64 {
    if k < 0 || n < 0 || k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    if n <= 60 {
        let mut acc: u128 = 1;
        for i in 0..k {
            acc = acc * (n - i) as u128 / (i + 1) as u128;
        }
        return acc as f64;
    }
    ln_binomial(n, k).exp()
}

/// ln C(n, k) for 0 <= k <= n.
pub fn ln_binomial(n: i64, k: i64) -> f64 {
    debug_assert!(0 <= k && k <= n);
    libm::lgamma(n as f64 + 1.0) - libm::lgamma(k as f64 + 1.0) - libm::lgamma((n - k) as f64 + 1.0)
}

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Factorial as float, exact for small arguments.
pub fn factorial(n: u32) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}
