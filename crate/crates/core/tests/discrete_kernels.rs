use blpp_core::contour::{CircleContour, Contour};
use blpp_core::discrete_kernels::*;
use blpp_core::discrete_model::{glpp_evolve, sample_environment, BoundaryMode, DiscreteIC, GeomParams};
use blpp_core::special::binomial;
use blpp_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn circle(r: f64) -> Contour {
    Contour::Circle(CircleContour::new(r, 256).unwrap())
}

/// Generalised binomial `C(e, k)` for integer `e` of any sign.
fn gen_binom(e: i64, k: i64) -> f64 {
    (0..k).fold(1.0, |acc, r| acc * (e - r) as f64 / (r + 1) as f64)
}

/// `S̄` by explicit coefficient extraction of the polynomial part.
fn s_bar_series(m: i64, n: i64, d: i64, p: &GeomParams) -> f64 {
    if n < 1 {
        return 0.0;
    }
    let e = n - 1 - d - m;
    let mut s = 0.0;
    for i in 0..=m.min(n - 1) {
        let j = n - 1 - i;
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        s += binomial(m, i) * (-1.0 / (1.0 - p.q)).powi(i as i32) * gen_binom(e, j) * sign;
    }
    p.alpha().powi((n - 1) as i32) * p.theta.powi(d as i32) * s
}

/// `S*` by expanding `φ^m` in powers of `q/w`.
fn s_star_series(m: i64, n: i64, d: i64, p: &GeomParams) -> f64 {
    let alpha = p.alpha();
    let mut s = 0.0;
    for j in 0..=n {
        let k = j - n - d;
        if k < 0 {
            continue;
        }
        let phi = if m > 0 {
            (1.0 - p.q).powi(m as i32) * binomial(m + k - 1, k) * p.q.powi(k as i32)
        } else if k == 0 {
            1.0
        } else {
            0.0
        };
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        s += binomial(n, j) * sign * alpha.powi(-(n as i32)) * phi;
    }
    alpha * p.theta.powi(d as i32) * s
}

#[test]
fn h_discrete_equals_finite_differences() {
    for q in [0.3, 0.5, 0.7] {
        for m in 1..=3u32 {
            for n in -3..=3i64 {
                for x in -6..=12i64 {
                    let exact = nabla_w(x, n, m, q);
                    for c in [Contour::Auto, circle(1.2), circle(1.0 + 0.5 * q / (1.0 - q))] {
                        let v = h_discrete(x, n, m, q, &c).unwrap();
                        // a fixed circle close to the pole at 1 pays roundoff |1-r|^(m+x-1) ε
                        let tol = if matches!(c, Contour::Auto) { 1e-11 } else { 1e-9 };
                        assert!((v - exact).abs() < tol, "q={q} m={m} n={n} x={x}: {v} vs {exact}");
                    }
                }
            }
        }
    }
    assert!((h_discrete(0, 0, 2, 0.5, &Contour::Auto).unwrap() - w_m(0, 2, 0.5)).abs() < 1e-15);
}

#[test]
fn h_discrete_far_arguments() {
    for x in [50, 120, 200] {
        for n in [-2i64, 0, 2] {
            let exact = nabla_w(x, n, 2, 0.5);
            let v = h_discrete(x, n, 2, 0.5, &Contour::Auto).unwrap();
            assert!((v - exact).abs() < 1e-10, "x={x} n={n}: {v} vs {exact}");
            // on |z| = 1.5 the integrand reaches 2.5^x, far beyond double precision
            match h_discrete(x, n, 2, 0.5, &circle(1.5)) {
                Err(Error::PrecisionLoss { .. }) => {}
                other => panic!("fixed circle should report precision loss, got {other:?}"),
            }
        }
    }
}

#[test]
fn f_is_reflected_h() {
    for m in 1..=3u32 {
        for n in -3..=3i64 {
            for x in -10..=10i64 {
                let f = f_discrete(x, n, m, 0.5, &Contour::Auto).unwrap();
                let h = h_discrete(n - x, -n, m, 0.5, &Contour::Auto).unwrap();
                assert!((f - h).abs() < 1e-10, "m={m} n={n} x={x}");
                let fixed = f_discrete(x, n, m, 0.5, &circle(1.4)).unwrap();
                assert!((fixed - h).abs() < 1e-10);
            }
        }
    }
    let total: f64 = (-80..=0).map(|x| f_discrete(x, 0, 1, 0.5, &Contour::Auto).unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-12);
    assert!(f_discrete(0, 0, 1, 0.5, &circle(0.8)).is_err());
}

#[test]
fn transition_matches_enumeration_two_sites() {
    let q: f64 = 0.5;
    let cut = 45;
    let x = DiscreteIC::new(vec![-1, 1]).unwrap();
    let xs = x.values();
    let mut table = std::collections::HashMap::new();
    for w1 in 0..cut {
        for w2 in 0..cut {
            let g1 = xs[0] + w1;
            let g2 = xs[1].max(g1) + w2;
            let p = (1.0 - q) * q.powi(w1 as i32) * (1.0 - q) * q.powi(w2 as i32);
            *table.entry((g1, g2)).or_insert(0.0) += p;
        }
    }
    for y1 in -1..10 {
        for y2 in y1..12 {
            let y = DiscreteIC::new(vec![y1, y2]).unwrap();
            let det = johansson_transition(&x, &y, 1, q).unwrap();
            let brute = table.get(&(y1, y2)).copied().unwrap_or(0.0);
            assert!((det - brute).abs() < 1e-12, "y=({y1},{y2}): {det} vs {brute}");
        }
    }
    let single = johansson_transition(&DiscreteIC::new(vec![0]).unwrap(), &DiscreteIC::new(vec![2]).unwrap(), 1, q).unwrap();
    assert!((single - 0.125).abs() < 1e-15);
}

#[test]
fn transition_rows_sum_to_one() {
    let q = 0.5;
    for (xv, m) in [(vec![0, 0], 1u32), (vec![-2, 1], 2), (vec![0, 1, 1], 1), (vec![-1, 0, 2], 2)] {
        let x = DiscreteIC::new(xv.clone()).unwrap();
        let n = xv.len();
        let span = 38;
        let mut total = 0.0;
        let mut y = xv.clone();
        // enumerate weakly increasing y >= x with y_j <= x_j + span
        loop {
            if y.windows(2).all(|w| w[0] <= w[1]) {
                total += johansson_transition(&x, &DiscreteIC::new(y.clone()).unwrap(), m, q).unwrap();
            }
            let mut k = n;
            loop {
                if k == 0 {
                    break;
                }
                k -= 1;
                if y[k] < xv[k] + span {
                    y[k] += 1;
                    for j in k + 1..n {
                        y[j] = xv[j].max(y[k]);
                    }
                    break;
                }
                if k == 0 {
                    k = usize::MAX;
                    break;
                }
            }
            if k == usize::MAX {
                break;
            }
        }
        assert!((total - 1.0).abs() < 1e-8, "x={xv:?} m={m}: {total}");
    }
}

#[test]
fn schutz_form_equals_johansson() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..60 {
        let n = rng.random_range(1..=4);
        let m = rng.random_range(1..=3);
        let mut x: Vec<i64> = (0..n).map(|_| rng.random_range(-3..=3)).collect();
        x.sort();
        let mut y: Vec<i64> = x.iter().map(|&v| v + rng.random_range(0..=5)).collect();
        y.sort();
        let (xi, yi) = (DiscreteIC::new(x).unwrap(), DiscreteIC::new(y).unwrap());
        let j = johansson_transition(&xi, &yi, m, 0.5).unwrap();
        let s = schutz_transition(&xi, &yi, m, 0.5, &Contour::Auto).unwrap();
        assert!((j - s).abs() < 1e-10, "{j} vs {s}");
    }
    let x = DiscreteIC::new(vec![0, 2]).unwrap();
    assert_eq!(schutz_transition(&x, &x, 0, 0.5, &Contour::Auto).unwrap(), 1.0);
    let y = DiscreteIC::new(vec![1, 1]).unwrap();
    assert!(johansson_transition(&x, &y, 2, 0.5).unwrap().abs() < 1e-15);
}

#[test]
fn q_powers_agree_three_ways() {
    for theta in [0.5, 0.7] {
        for n in 0..=4u32 {
            for d in -3..=25i64 {
                let closed = q_pow_closed(n, d, 0, theta);
                for c in [Contour::Auto, circle(0.4), circle(0.8)] {
                    // fixed circles either meet the 1e-8 roundoff contract or say they cannot
                    match q_pow(n as i64, d, 0, theta, &c) {
                        Ok(v) => {
                            let tol = if matches!(c, Contour::Auto) { 1e-12 } else { 1e-8 };
                            assert!((v - closed).abs() < tol, "θ={theta} n={n} d={d}: {v} vs {closed}");
                        }
                        Err(Error::PrecisionLoss { .. }) if !matches!(c, Contour::Auto) => {}
                        Err(e) => panic!("{e}"),
                    }
                }
                if n >= 1 {
                    // convolution Q^{n} = Q^{n-1} Q
                    let conv: f64 = (1..=d.max(0)).map(|k| q_pow_closed(n - 1, d - k, 0, theta) * q_pow_closed(1, k, 0, theta)).sum();
                    assert!((conv - closed).abs() < 1e-14);
                }
            }
        }
    }
}

#[test]
fn inverse_q_powers() {
    // Q^{-n} Q^{n} = identity on finite sums
    let theta = 0.6;
    for n in 1..=3i64 {
        for d in -2..=4i64 {
            let sum: f64 = (-n..=0)
                .map(|k| q_pow(-n, k, 0, theta, &Contour::Auto).unwrap() * q_pow_closed(n as u32, d - k, 0, theta))
                .sum();
            let id = if d == 0 { 1.0 } else { 0.0 };
            assert!((sum - id).abs() < 1e-12, "n={n} d={d}: {sum}");
        }
    }
}

fn param_sets() -> Vec<GeomParams> {
    vec![GeomParams::half(), GeomParams::new(0.3, 0.6).unwrap(), GeomParams::new(0.6, 0.45).unwrap()]
}

#[test]
fn s_star_and_s_bar_match_series() {
    for p in param_sets() {
        for m in 0..=3i64 {
            for n in 0..=4i64 {
                for d in -20..=3i64 {
                    let a = s_star(m, n, d, 0, &p, &Contour::Auto).unwrap();
                    let b = s_star_series(m, n, d, &p);
                    assert!((a - b).abs() < 1e-10 * b.abs().max(1.0), "S* {p:?} m={m} n={n} d={d}: {a} vs {b}");
                    let fixed = s_star(m, n, d, 0, &p, &circle(0.5 * (1.0 + p.q))).unwrap();
                    assert!((fixed - b).abs() < 1e-9 * b.abs().max(1.0), "fixed S* {p:?} m={m} n={n} d={d}: {fixed} vs {b}");
                }
                for d in -8..=20i64 {
                    let a = s_bar(m, n, d, 0, &p, &Contour::Auto).unwrap();
                    let b = s_bar_series(m, n, d, &p);
                    assert!((a - b).abs() < 1e-10 * b.abs().max(1.0), "S̄ {p:?} m={m} n={n} d={d}: {a} vs {b}");
                    let fixed = s_bar(m, n, d, 0, &p, &circle(0.5 * (1.0 - p.q))).unwrap();
                    assert!((fixed - b).abs() < 1e-10 * b.abs().max(1.0), "fixed S̄ m={m} n={n} d={d}");
                }
            }
        }
    }
    let p = GeomParams::half();
    assert!(s_bar(1, 2, 0, 0, &p, &circle(0.6)).is_err());
    assert!(s_star(1, 2, 0, 0, &p, &circle(0.4)).is_err());
    assert_eq!(s_star(0, 0, 4, 4, &p, &Contour::Auto).unwrap(), 1.0);
}

#[test]
fn s_bar_rows_match_single_values() {
    for p in param_sets() {
        for (m, n) in [(1i64, 3i64), (2, 7), (3, 12)] {
            let row = s_bar_row(m, n, -10, 40, &p).unwrap();
            for (k, v) in row.iter().enumerate() {
                let single = s_bar(m, n, -10 + k as i64, 0, &p, &Contour::Auto).unwrap();
                assert!((v - single).abs() < 1e-11 * single.abs().max(1.0), "m={m} n={n} k={k}");
            }
        }
    }
}

#[test]
fn operator_relations_hold() {
    for p in param_sets() {
        let alpha = p.alpha();
        for m in 0..=3i64 {
            for n in 0..=3i64 {
                for d in -12..=2i64 {
                    // S*_{m,-n} = α Q^{-n} R_m, with Q^{-n} supported on [-n, 0]
                    let comp: f64 = (-n..=0)
                        .map(|k| {
                            q_pow(-n, k, 0, p.theta, &Contour::Auto).unwrap() * r_pm(m, d - k, 0, &p, &Contour::Auto).unwrap()
                        })
                        .sum();
                    let direct = s_star(m, n, d, 0, &p, &Contour::Auto).unwrap();
                    assert!((alpha * comp - direct).abs() < 1e-8, "S* relation m={m} n={n} d={d}");
                }
                for d in -6..=10i64 {
                    // S̄_{m,n} = S̄_{0,n} R_{-m}, with R_{-m} supported on [-m, 0]
                    let comp: f64 = (-m..=0)
                        .map(|k| {
                            s_bar(0, n, d - k, 0, &p, &Contour::Auto).unwrap() * r_pm(-m, k, 0, &p, &Contour::Auto).unwrap()
                        })
                        .sum();
                    let direct = s_bar(m, n, d, 0, &p, &Contour::Auto).unwrap();
                    assert!((comp - direct).abs() < 1e-8, "S̄ relation m={m} n={n} d={d}");
                }
            }
        }
        for d in -3..=3i64 {
            let id = if d == 0 { 1.0 } else { 0.0 };
            assert!((r_pm(0, d, 0, &p, &Contour::Auto).unwrap() - id).abs() < 1e-14);
        }
    }
    assert!(r_pm(1, 0, 0, &GeomParams::half(), &circle(0.3)).is_err());
}

#[test]
fn contour_radius_independence() {
    let p = GeomParams::new(0.35, 0.55).unwrap();
    for d in -6..=6i64 {
        let pairs = [
            (r_pm(2, d, 0, &p, &circle(0.5)).unwrap(), r_pm(2, d, 0, &p, &circle(0.9)).unwrap()),
            (s_star(2, 3, d, 0, &p, &circle(0.45)).unwrap(), s_star(2, 3, d, 0, &p, &circle(0.85)).unwrap()),
            (s_bar(2, 3, d, 0, &p, &circle(0.2)).unwrap(), s_bar(2, 3, d, 0, &p, &circle(0.6)).unwrap()),
            (q_pow(3, d, 0, p.theta, &circle(0.3)).unwrap(), q_pow(3, d, 0, p.theta, &circle(0.7)).unwrap()),
        ];
        for (a, b) in pairs {
            assert!((a - b).abs() < 1e-10, "d={d}: {a} vs {b}");
        }
    }
}

#[test]
fn s_star_support_and_decay() {
    let p = GeomParams::new(0.4, 0.5).unwrap();
    for d in 1..=10 {
        assert_eq!(s_star(2, 3, d, 0, &p, &Contour::Auto).unwrap(), 0.0);
    }
    // envelope (q/θ)^{|d|} times a polynomial for d -> -∞
    let r1 = s_star(2, 3, -60, 0, &p, &Contour::Auto).unwrap() / s_star(2, 3, -59, 0, &p, &Contour::Auto).unwrap();
    assert!((r1.abs() - 0.8).abs() < 0.05, "{r1}");
}

fn epi_two_steps(m: i64, z1: i64, z2: i64, xt: &[i64], p: &GeomParams) -> f64 {
    if z1 > xt[0] {
        return s_bar(m, 2, z1, z2, p, &Contour::Auto).unwrap();
    }
    let mut total = 0.0;
    for k in 1..400i64 {
        let b = z1 - k;
        let prob = (1.0 - p.theta) * p.theta.powi((k - 1) as i32);
        if b > xt[1] {
            total += prob * s_bar(m, 1, b, z2, p, &Contour::Auto).unwrap();
        }
    }
    total
}

#[test]
fn epigraph_kernel_small_cases() {
    let p = GeomParams::new(0.5, 0.6).unwrap();
    let ic = DiscreteIC::new(vec![-1, 0, 0, 2, 3]).unwrap();
    let xt = ic.tilde();
    for m in 1..=2i64 {
        for z1 in xt[0] - 4..xt[0] + 3 {
            for z2 in -12..=2 {
                let dp = s_epi(m, 2, z1, z2, &ic, &p).unwrap();
                let brute = epi_two_steps(m, z1, z2, &xt, &p);
                assert!((dp - brute).abs() < 1e-12, "m={m} z1={z1} z2={z2}: {dp} vs {brute}");
            }
        }
        // immediate absorption
        let z1 = xt[0] + 2;
        let a = s_epi(m, 4, z1, -3, &ic, &p).unwrap();
        let b = s_bar(m, 4, z1, -3, &p, &Contour::Auto).unwrap();
        assert!((a - b).abs() < 1e-12);
    }
    // far below the data the walk can never be absorbed
    assert_eq!(s_epi(2, 5, -100, -120, &ic, &p).unwrap(), 0.0);
}

#[test]
fn kill_masses_are_subprobabilities() {
    let ic = DiscreteIC::new(vec![0, 0, 1, 3, 3, 6]).unwrap();
    let xt = ic.tilde();
    for z1 in -20..0 {
        let bands = epi_kills(z1, 6, &xt, 0.5).unwrap();
        let total: f64 = bands.iter().flat_map(|b| b.mass.iter()).sum();
        assert!((0.0..=1.0 + 1e-14).contains(&total));
        for b in &bands {
            assert!(b.lo > xt[b.step]);
        }
    }
}

#[test]
fn kernel_diagonal_and_real_values() {
    let p = GeomParams::half();
    let ic = DiscreteIC::step(4);
    let k = k_geometric(2, -5, 2, -5, 2, &ic, &p).unwrap();
    assert!(k.value.is_finite() && k.tail_bound < 1e-10);
    let mut kern = GeometricKernel::new(2, &ic, p).unwrap();
    let (block, _) = kern.block(1, &[-4, -6], 3, &[-5, -7, -9]).unwrap();
    assert_eq!(block.len(), 6);
    for (i, &z1) in [-4i64, -6].iter().enumerate() {
        for (j, &z2) in [-5i64, -7, -9].iter().enumerate() {
            let single = kern.entry(1, z1, 3, z2).unwrap().value;
            assert!((single - block[i * 3 + j]).abs() < 1e-12);
        }
    }
}

#[test]
fn environment_sampling_and_dp_agree_with_transition() {
    // frequency of one final row against the transition probability
    let p = GeomParams::half();
    let x = DiscreteIC::new(vec![0, 1]).unwrap();
    let target = DiscreteIC::new(vec![1, 2]).unwrap();
    let trials = 200_000;
    let mut hits = 0usize;
    for s in 0..trials {
        let w = sample_environment(&p, 1, 2, s).unwrap();
        let f = glpp_evolve(&w, &x, BoundaryMode::ColumnOnly).unwrap();
        if f.row(1) == target.values() {
            hits += 1;
        }
    }
    let freq = hits as f64 / trials as f64;
    let exact = johansson_transition(&x, &target, 1, 0.5).unwrap();
    let se = (exact * (1.0 - exact) / trials as f64).sqrt();
    assert!((freq - exact).abs() < 4.0 * se, "{freq} vs {exact}");
}
