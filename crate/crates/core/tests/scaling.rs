use blpp_core::continuum_kernels::ContinuumIC;
use blpp_core::scaling::*;
use blpp_core::Error;

#[test]
fn rescale_map_round_trips() {
    for n in [100usize, 400, 1600] {
        let map = RescaleMap::new(n).unwrap();
        for (s, x) in [(0.25, 0.0), (0.5, -1.3), (1.0, 2.7)] {
            let level = map.level(s).unwrap();
            assert!((map.time(level) - s).abs() <= 1.0 / n as f64);
            let z = map.site(level, x);
            let back = map.position(level, z);
            assert!(back >= x && back - x < 1.0 / map.spread(), "{x} -> {back}");
            let w = map.intermediate_site(x);
            assert!((map.intermediate_position(w) - x).abs() < 1.0 / map.spread());
        }
        assert_eq!(map.prefactor(0), 1.0);
        assert!((map.prefactor(2) - n as f64 / 2.0).abs() < 1e-9);
    }
    assert!(RescaleMap::new(1).is_err());
    assert!(RescaleMap::new(10).unwrap().level(0.05).is_err());
}

#[test]
fn heat_check_example() {
    let p = Probe { m: 0, s: 0.25, t: 0.75, x: 0.0, y: 0.0 };
    let rows = lemma_check(1, &[100, 400, 1600], &[p], &LemmaOptions::default()).unwrap();
    assert!(rows[2].error < 0.05);
    assert!(rows[0].error > rows[1].error && rows[1].error > rows[2].error);
    // the comparison uses the lattice-realised coordinates
    for r in &rows {
        assert_eq!((r.s, r.t), (0.25, 0.75));
        assert!(r.x >= 0.0 && r.x < 1.0 / (2.0 * r.scale as f64).sqrt());
    }
}

#[test]
fn standard_grid_rates() {
    let scales = [100, 400, 1600];
    for lemma in 1..=4u8 {
        let rows = lemma_check(lemma, &scales, &standard_probes(lemma), &LemmaOptions::default()).unwrap();
        let s = summarize(&rows).unwrap();
        assert!(s.decreasing, "check {lemma}: {s:?}");
        for w in s.max_errors.windows(2) {
            let ratio = w[0] / w[1];
            assert!(ratio > 2.0 / 1.5 && ratio < 2.0 * 1.5, "check {lemma}: {s:?}");
        }
        assert!((0.3..=0.7).contains(&s.rate), "check {lemma}: {s:?}");
    }
}

#[test]
fn stated_star_scaling_does_not_converge() {
    let opts = LemmaOptions { star_scaling: StarScaling::Ns, ..LemmaOptions::default() };
    let probes = [Probe { m: 2, s: 0.5, t: 0.5, x: 0.6, y: -0.2 }];
    let stated = summarize(&lemma_check(2, &[100, 400, 1600], &probes, &opts).unwrap()).unwrap();
    let fixed = summarize(&lemma_check(2, &[100, 400, 1600], &probes, &LemmaOptions::default()).unwrap()).unwrap();
    assert!(fixed.decreasing);
    assert!(stated.max_errors[2] > 10.0 * fixed.max_errors[2], "{stated:?} {fixed:?}");
}

#[test]
fn product_check_narrow_wedge() {
    let scales = [100, 400, 1600];
    let rows = product_check(&scales, &standard_probes(0), &ContinuumIC::NarrowWedge).unwrap();
    let s = summarize(&rows).unwrap();
    assert!(s.decreasing && (0.3..=0.7).contains(&s.rate), "{s:?}");
    // the rate class does not depend on m
    for m in 1..=3u32 {
        let p = Probe { m, s: 0.5, t: 1.0, x: 0.1, y: 0.3 };
        let s = summarize(&product_check(&scales, &[p], &ContinuumIC::NarrowWedge).unwrap()).unwrap();
        assert!(s.decreasing && s.rate > 0.3, "m={m}: {s:?}");
    }
    // equal times: no heat term on either side, the product term alone converges
    let p = Probe { m: 1, s: 0.7, t: 0.7, x: 0.0, y: 0.2 };
    let s = summarize(&product_check(&scales, &[p], &ContinuumIC::NarrowWedge).unwrap()).unwrap();
    assert!(s.decreasing, "{s:?}");
}

#[test]
fn flat_product_loses_precision_instead_of_lying() {
    let p = Probe { m: 1, s: 0.5, t: 1.0, x: 0.2, y: 0.5 };
    let r = product_check(&[100], &[p], &ContinuumIC::Flat(0.0));
    assert!(matches!(r, Err(Error::PrecisionLoss { .. })), "{r:?}");
    // equal times are well conditioned
    let p = Probe { m: 1, s: 0.5, t: 0.5, x: 0.3, y: 0.1 };
    let rows = product_check(&[50, 200], &[p], &ContinuumIC::Flat(0.0)).unwrap();
    assert!(rows[1].error < rows[0].error && rows[1].error < 0.05, "{rows:?}");
}

#[test]
fn invalid_inputs() {
    let p = Probe { m: 1, s: 0.5, t: 0.25, x: 0.0, y: 0.0 };
    let o = LemmaOptions::default();
    assert!(lemma_check(1, &[100], &[p], &o).is_err());
    assert!(lemma_check(3, &[100], &[p], &o).is_err());
    assert!(lemma_check(5, &[100], &standard_probes(1), &o).is_err());
    assert!(lemma_check(1, &[400, 100], &standard_probes(1), &o).is_err());
    let wedge = LemmaOptions { ic: ContinuumIC::NarrowWedge, ..o };
    assert!(lemma_check(4, &[100], &standard_probes(4), &wedge).is_err());
    assert!(product_check(&[100], &[p], &ContinuumIC::NarrowWedge).is_err());
    assert!(summarize(&[]).is_err());
    assert!((fit_rate(&[100, 400, 1600], &[0.4, 0.2, 0.1]) - 0.5).abs() < 1e-12);
}
