use entrance_core::laws::{ContinuousLaw, IncrementLaw, LatticeLaw};
use entrance_core::measures::Orthant;
use entrance_core::target::TargetSet;
use entrance_core::verify::{
    alternation_test, clt_level_crossings, cross_oracle_test, expected_crossings, kac_mc_test, stationarity_test,
    summary_table, write_grid_csv, Comparison, CENSOR_GATE,
};

fn skew() -> IncrementLaw {
    LatticeLaw::from_integers(&[(-1, "2/3"), (2, "1/3")]).unwrap().into()
}

#[test]
fn lattice_stationarity_and_horizon_monotonicity() {
    let a = TargetSet::nonneg_orthant();
    let base = stationarity_test(&skew(), &a, 20_000, 10_000_000, 9).unwrap();
    assert_eq!(base.comparison, Comparison::AtLeast);
    assert!(base.pass, "{base:#?}");
    // pi_+' = (1/2, 1/2) on {0, 1}; the support window also holds the empty point 2
    let cells = base.details["cells"].as_array().unwrap();
    let live: Vec<_> = cells.iter().filter(|c| c["expected"].as_f64().unwrap() > 0.0).collect();
    assert_eq!(live.len(), 2);
    for c in live {
        assert!((c["observed"].as_f64().unwrap() - 0.5).abs() < 0.02);
    }
    let longer = stationarity_test(&skew(), &a, 20_000, 100_000_000, 9).unwrap();
    assert!(longer.pass);
    assert!(longer.censor_rate <= base.censor_rate);
}

#[test]
fn rademacher_alternation_lands_exactly() {
    let law: IncrementLaw = LatticeLaw::rademacher().into();
    for r in alternation_test(&law, 5_000, 10_000_000, 4).unwrap() {
        assert!(r.pass);
        assert_eq!(r.details["outside_support"], 0);
    }
}

#[test]
fn verdicts_do_not_depend_on_threads() {
    let run = || expected_crossings(&skew(), Orthant::Plus, &[0.0, 1.0, 3.0], 5_000, 10_000_000, 21).unwrap();
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(run);
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(run);
    assert_eq!(one.statistic, four.statistic);
    assert_eq!(one.details, four.details);
    assert_eq!(one.pass, four.pass);
}

#[test]
fn small_kac_reconstruction() {
    let law: IncrementLaw = LatticeLaw::rademacher().into();
    let r = kac_mc_test(&law, (-2, 2), 20_000, 10_000_000, 8).unwrap();
    assert!(r.censor_rate <= 5.0 * CENSOR_GATE);
    for p in r.details["points"].as_array().unwrap() {
        assert!((p["weight"].as_f64().unwrap() - 1.0).abs() < 0.15, "{p}");
    }
}

#[test]
fn clt_grid_and_csv() {
    let law: IncrementLaw = ContinuousLaw::laplace(1.0).unwrap().into();
    let out = clt_level_crossings(&law, 2_000, 2_000, 0.5, 3).unwrap();
    assert_eq!(out.grid.len(), 401);
    assert_eq!(out.grid[0].2, 0.0);
    assert!((out.grid[100].2 - 0.682_689_492).abs() < 1e-8);
    assert!(out.report.details["sup_distance_exact"].as_f64().unwrap() >= out.report.statistic - 1e-12);
    let mut buf = Vec::new();
    write_grid_csv(&mut buf, &out.grid).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("y,empirical_cdf,target_cdf\n0,"));
    assert_eq!(text.lines().count(), 402);
}

#[test]
fn small_cross_oracle() {
    let r = cross_oracle_test(2, 4, 20_000, 1_000_000, 5).unwrap();
    assert!(r.statistic < 0.02, "{r:#?}");
    assert!(summary_table(&[r]).ends_with("passed\n"));
}
