use hsmm_core::study::{rate_for_acf, reference_table};
use hsmm_core::{run_coverage_study, ScenarioSpec};

fn small_spec() -> ScenarioSpec {
    ScenarioSpec {
        psis: vec![0.0, 0.75],
        sizes: vec![600],
        replicates: 6,
        rates: vec![1.0, 0.3],
        iterations: 400,
        warmup: 50,
        ..ScenarioSpec::default()
    }
}

#[test]
fn table_is_reproducible_and_bounded() {
    let a = run_coverage_study(&small_spec()).unwrap();
    let b = run_coverage_study(&small_spec()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.cells.len(), 2);
    assert_eq!(a.columns, vec![(0.0, 600), (0.75, 600)]);
    assert_eq!(a.total_failures(), 0);
    assert!(a.cells.iter().flatten().all(|c| (0.0..=100.0).contains(c)));
    let mut csv = Vec::new();
    a.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(text.lines().next().unwrap(), "rate_pct,psi_0_n_600,psi_0.75_n_600");
}

#[test]
fn single_rate_gives_one_row() {
    let spec = ScenarioSpec {
        rates: vec![1.0],
        ..small_spec()
    };
    assert_eq!(run_coverage_study(&spec).unwrap().cells.len(), 1);
}

#[test]
fn changing_one_column_leaves_the_other_alone() {
    let base = run_coverage_study(&small_spec()).unwrap();
    let other = run_coverage_study(&ScenarioSpec {
        psis: vec![0.0, 0.5],
        ..small_spec()
    })
    .unwrap();
    assert_eq!(base.column(0.0, 600), other.column(0.0, 600));
}

#[test]
fn recommendations_follow_the_reference_tables() {
    let t3 = reference_table(3).unwrap();
    assert_eq!(rate_for_acf(0.75, 2500, &t3).unwrap().rate, 0.3);
    assert_eq!(rate_for_acf(0.25, 2500, &t3).unwrap().rate, 0.8);
    assert_eq!(rate_for_acf(0.01, 5000, &t3).unwrap().rate, 1.0);
    let high = rate_for_acf(0.95, 5000, &t3).unwrap();
    assert!(high.warning.is_some());
    for m in [2, 4] {
        let t = reference_table(m).unwrap();
        let strong = rate_for_acf(0.75, 2500, &t).unwrap().rate;
        let weak = rate_for_acf(0.25, 2500, &t).unwrap().rate;
        assert!(strong <= weak, "M = {m}");
    }
}
