use blpp_core::continuum_kernels::ContinuumIC;
use blpp_core::discrete_model::*;
use proptest::prelude::*;

#[test]
fn geometric_weights_have_the_right_mean() {
    let w = sample_environment(&GeomParams::half(), 1000, 1000, 9).unwrap();
    let mean = (0..1000).flat_map(|i| w.row(i + 1).to_vec()).sum::<i64>() as f64 / 1e6;
    assert!((mean - 1.0).abs() < 0.01, "{mean}");
    let tiny = GeomParams::new(1e-9, 0.5).unwrap();
    let w = sample_environment(&tiny, 50, 50, 1).unwrap();
    assert!((1..=50).all(|i| w.row(i).iter().all(|&v| v == 0)));
    assert_eq!(sample_environment(&GeomParams::half(), 4, 6, 77).unwrap(), sample_environment(&GeomParams::half(), 4, 6, 77).unwrap());
    assert!(GeomParams::new(1.0, 0.5).is_err());
    assert!(GeomParams::new(0.5, 0.0).is_err());
    assert!(sample_environment(&GeomParams::half(), 0, 3, 0).is_err());
}

#[test]
fn hand_recursions() {
    let w = Weights::from_rows(vec![vec![1, 2]]).unwrap();
    let f = glpp_evolve(&w, &DiscreteIC::new(vec![0, 0]).unwrap(), BoundaryMode::ColumnOnly).unwrap();
    assert_eq!((f.get(1, 1), f.get(1, 2)), (Some(1), Some(3)));
    let w = Weights::from_rows(vec![vec![3]]).unwrap();
    let f = glpp_evolve(&w, &DiscreteIC::new(vec![0]).unwrap(), BoundaryMode::ZeroRow).unwrap();
    assert_eq!(f.get(1, 1), Some(3));
    assert_eq!(f.get(0, 0), Some(0));
    let f = glpp_evolve(&w, &DiscreteIC::new(vec![0]).unwrap(), BoundaryMode::ColumnOnly).unwrap();
    assert_eq!(f.get(1, 0), None);
    assert!(glpp_evolve(&w, &DiscreteIC::new(vec![0, 1]).unwrap(), BoundaryMode::ZeroRow).is_err());
}

#[test]
fn boundary_modes_differ_only_for_negative_data() {
    let p = GeomParams::half();
    for seed in 0..20 {
        let w = sample_environment(&p, 3, 5, seed).unwrap();
        let pos = DiscreteIC::new(vec![0, 1, 1, 2, 4]).unwrap();
        let a = glpp_evolve(&w, &pos, BoundaryMode::ZeroRow).unwrap();
        let b = glpp_evolve(&w, &pos, BoundaryMode::ColumnOnly).unwrap();
        assert_eq!(a.row(3), b.row(3));
    }
    let w = Weights::from_rows(vec![vec![0, 0]]).unwrap();
    let neg = DiscreteIC::new(vec![-5, -4]).unwrap();
    let a = glpp_evolve(&w, &neg, BoundaryMode::ZeroRow).unwrap();
    let b = glpp_evolve(&w, &neg, BoundaryMode::ColumnOnly).unwrap();
    assert_eq!(a.row(1), vec![0, 0]);
    assert_eq!(b.row(1), vec![-5, -4]);
}

#[test]
fn mean_growth_rate() {
    let p = GeomParams::half();
    let n = 4000;
    let mut total = 0.0;
    for seed in 0..20 {
        let w = sample_environment(&p, 1, n, seed).unwrap();
        let f = glpp_evolve(&w, &DiscreteIC::new(vec![0; n]).unwrap(), BoundaryMode::ColumnOnly).unwrap();
        total += f.get(1, n).unwrap() as f64 / n as f64;
    }
    assert!((total / 20.0 - 1.0).abs() < 0.03);
}

fn path_max(w: &Weights, x: &[i64], m: usize, n: usize) -> i64 {
    // max over n0 <= n1 <= ... <= nm = n of x_{n0} + Σ_k Σ_{j=n_{k-1}}^{n_k} ω_{k,j}
    fn rec(w: &Weights, k: usize, start: usize, n: usize, m: usize) -> i64 {
        if k > m {
            return 0;
        }
        let mut best = i64::MIN;
        let lower = if k == m { n } else { start };
        for end in lower.max(start)..=n {
            let row: i64 = (start..=end).map(|j| w.get(k, j)).sum();
            best = best.max(row + rec(w, k + 1, end, n, m));
        }
        best
    }
    (1..=n).map(|n0| x[n0 - 1] + rec(w, 1, n0, n, m)).max().unwrap()
}

#[test]
fn recursion_equals_path_enumeration() {
    let p = GeomParams::new(0.6, 0.5).unwrap();
    for seed in 0..40 {
        let (m, n) = (1 + seed as usize % 3, 1 + seed as usize % 4);
        let w = sample_environment(&p, m, n, seed).unwrap();
        let x: Vec<i64> = (0..n as i64).map(|j| j / 2 - 1).collect();
        let f = glpp_evolve(&w, &DiscreteIC::new(x.clone()).unwrap(), BoundaryMode::ColumnOnly).unwrap();
        for nn in 1..=n {
            assert_eq!(f.get(m, nn).unwrap(), path_max(&w, &x, m, nn), "seed={seed} m={m} n={nn}");
        }
    }
}

#[test]
fn x_maps_and_events() {
    assert_eq!(map_to_x(&[0, 3]).unwrap()[1], -5);
    assert_eq!(map_to_x(&[0, 0, 0]).unwrap(), vec![-1, -2, -3]);
    assert_eq!(DiscreteIC::step(3).tilde(), vec![-1, -2, -3]);
    assert!(map_to_x(&[2, 1]).is_err());
    assert!(map_from_x(&[-1, -1]).is_err());
    let spec = EventSpec::new(vec![(2, 5)]).unwrap();
    assert_eq!(translate_event(&spec), vec![(2, -7)]);
    assert_eq!(translate_event(&EventSpec::new(vec![(1, 0)]).unwrap()), vec![(1, -1)]);
    assert!(EventSpec::new(vec![]).is_err());
    assert!(EventSpec::new(vec![(2, 0), (2, 1)]).is_err());
    assert!(DiscreteIC::new(vec![1, 0]).is_err());

    let p = GeomParams::half();
    let spec = EventSpec::new(vec![(2, 4), (5, 7)]).unwrap();
    let thr = translate_event(&spec);
    for seed in 0..200 {
        let w = sample_environment(&p, 2, 5, seed).unwrap();
        let f = glpp_evolve(&w, &DiscreteIC::step(5), BoundaryMode::ColumnOnly).unwrap();
        let row = f.row(2);
        assert_eq!(spec.holds_for_g(&row), x_event_holds(&thr, &map_to_x(&row).unwrap()));
    }
}

#[test]
fn continuum_embedding() {
    let p = GeomParams::half();
    let flat = embed_continuum_ic(&ContinuumIC::Flat(0.0), 100, &p).unwrap();
    assert_eq!(flat.values(), (1..=100).collect::<Vec<i64>>().as_slice());
    let lin = ContinuumIC::piecewise_linear(vec![(0.0, 0.0), (1.0, -1.0)]).unwrap();
    let e = embed_continuum_ic(&lin, 100, &p).unwrap();
    for n in 1..=100i64 {
        let expect = n + (-(200f64).sqrt() * n as f64 / 100.0).floor() as i64;
        assert_eq!(e.values()[n as usize - 1], expect);
    }
    assert!(embed_continuum_ic(&ContinuumIC::NarrowWedge, 100, &p).is_err());

    let curved = ContinuumIC::piecewise_linear(vec![(0.0, 0.3), (0.4, -0.5), (1.0, 0.2)]).unwrap();
    let dist = |n: usize| {
        let e = embed_continuum_ic(&curved, n, &p).unwrap();
        let s = (2.0 * n as f64).sqrt();
        (1..=n)
            .map(|j| ((e.values()[j - 1] as f64 - j as f64) / s - curved.eval(j as f64 / n as f64)).abs())
            .fold(0.0, f64::max)
    };
    let (d1, d2, d3) = (dist(100), dist(400), dist(1600));
    assert!(d2 < d1 && d3 < d2);
    assert!(d1 / d2 > 1.4 && d2 / d3 > 1.4, "{d1} {d2} {d3}");
}

proptest! {
    #[test]
    fn rows_stay_weakly_increasing(seed in 0u64..10_000, m in 1usize..5, n in 1usize..8, base in -3i64..3) {
        let p = GeomParams::new(0.4, 0.5).unwrap();
        let w = sample_environment(&p, m, n, seed).unwrap();
        let x: Vec<i64> = (0..n as i64).map(|j| base + j / 3).collect();
        let f = glpp_evolve(&w, &DiscreteIC::new(x).unwrap(), BoundaryMode::ColumnOnly).unwrap();
        for i in 0..=m {
            let row = f.row(i);
            prop_assert!(row.windows(2).all(|v| v[0] <= v[1]));
            if i > 0 {
                prop_assert!(row.iter().zip(f.row(i - 1)).all(|(a, b)| *a >= b));
            }
            let xs = map_to_x(&row).unwrap();
            prop_assert_eq!(map_from_x(&xs).unwrap(), row);
        }
    }
}
