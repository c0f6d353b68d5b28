//! Dense LU with partial pivoting, used for all finite determinants.

/// Determinant in sign / log-magnitude form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogDet {
    /// -1, 0 or +1.
    pub sign: f64,
    pub log_abs: f64,
}

impl LogDet {
    /// The determinant as a float; over/underflows to ±∞ / 0 for extreme magnitudes.
    pub fn value(&self) -> f64 {
        if self.sign == 0.0 {
            0.0
        } else {
            self.sign * self.log_abs.exp()
        }
    }
}

/// Determinant of the row-major `n x n` matrix `a` (consumed as scratch).
pub fn log_det(mut a: Vec<f64>, n: usize) -> LogDet {
    assert_eq!(a.len(), n * n, "matrix is not square");
    let mut sign = 1.0;
    let mut log_abs = 0.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
            .unwrap_or(col);
        let p = a[pivot * n + col];
        if p == 0.0 || !p.is_finite() {
            return LogDet {
                sign: 0.0,
                log_abs: f64::NEG_INFINITY,
            };
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            sign = -sign;
        }
        if p < 0.0 {
            sign = -sign;
        }
        log_abs += p.abs().ln();
        for row in col + 1..n {
            let factor = a[row * n + col] / p;
            if factor != 0.0 {
                for k in col + 1..n {
                    a[row * n + k] -= factor * a[col * n + k];
                }
            }
        }
    }
    LogDet { sign, log_abs }
}

pub fn det(a: Vec<f64>, n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    log_det(a, n).value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_determinants() {
        assert_eq!(det(vec![], 0), 1.0);
        assert!((det(vec![2.0, 1.0, 1.0, 3.0], 2) - 5.0).abs() < 1e-14);
        assert!((det(vec![0.0, 1.0, 1.0, 0.0], 2) + 1.0).abs() < 1e-14);
        assert_eq!(det(vec![1.0, 2.0, 2.0, 4.0], 2), 0.0);
    }

    #[test]
    fn log_form_survives_overflow() {
        let n = 400;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = 1e10;
        }
        let d = log_det(a, n);
        assert_eq!(d.sign, 1.0);
        assert!((d.log_abs - 4000.0 * 10f64.ln()).abs() < 1e-8);
        assert!(d.value().is_infinite());
    }
}
