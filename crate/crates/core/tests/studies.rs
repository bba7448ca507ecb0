use dcfair::experiments::{
    convergence_study_cdc, convergence_study_dc, reference_dc, CdcDistribution, DcDistribution, StudySpec,
};

fn spec(seed: u64) -> StudySpec {
    StudySpec {
        grid: vec![32, 128, 512],
        trials: 100,
        epsilon: 0.05,
        seed,
    }
}

#[test]
fn dcov_deviation_shrinks_with_n() {
    let rows = convergence_study_dc(DcDistribution::IndependentNormal { p: 1, q: 1 }, &spec(11), None).unwrap();
    let medians: Vec<f64> = rows.iter().map(|r| r.summary.median).collect();
    let means: Vec<f64> = rows.iter().map(|r| r.value_summary.mean).collect();
    assert!(medians[2] < medians[0], "{medians:?}");
    assert!(means.windows(2).all(|w| w[1] < w[0]), "{means:?}");
    for r in &rows {
        assert_eq!(r.values.len(), 100);
        assert!((0.0..=1.0).contains(&r.exceed_rate));
    }
}

#[test]
fn cdc_deviation_shrinks_and_dependence_stands_out() {
    let ci = convergence_study_cdc(CdcDistribution::ConditionallyIndependent, &spec(12), None).unwrap();
    let medians: Vec<f64> = ci.iter().map(|r| r.summary.median).collect();
    assert!(medians[2] < medians[0], "{medians:?}");
    let bandwidths: Vec<f64> = ci.iter().map(|r| r.bandwidth.unwrap()).collect();
    assert!(bandwidths.windows(2).all(|w| w[1] < w[0]), "{bandwidths:?}");

    let small = StudySpec { grid: vec![512], trials: 20, ..spec(13) };
    let dep = convergence_study_cdc(CdcDistribution::Dependent, &small, Some(0.0)).unwrap();
    assert!(dep[0].value_summary.mean > ci[2].value_summary.mean);
}

#[test]
fn studies_repeat_bit_for_bit() {
    let s = StudySpec { grid: vec![16, 64], trials: 10, ..spec(14) };
    let dist = DcDistribution::IndependentNormal { p: 2, q: 3 };
    let a = convergence_study_dc(dist, &s, None).unwrap();
    let b = convergence_study_dc(dist, &s, None).unwrap();
    let bits = |rows: &[dcfair::experiments::ConvergenceTrial]| -> Vec<u64> {
        rows.iter().flat_map(|r| r.values.iter().map(|v| v.to_bits())).collect()
    };
    assert_eq!(bits(&a), bits(&b));
    let c = convergence_study_dc(dist, &StudySpec { seed: 15, ..s }, None).unwrap();
    assert_ne!(bits(&a), bits(&c));
}

#[test]
fn identical_pairs_converge_to_their_reference() {
    let dist = DcDistribution::Identical { p: 1 };
    let target = reference_dc(dist, 4096, 99).unwrap();
    let s = StudySpec { grid: vec![32, 512], trials: 30, ..spec(16) };
    let rows = convergence_study_dc(dist, &s, Some(target)).unwrap();
    assert!(rows[1].summary.median < rows[0].summary.median);
    assert!(rows.iter().all(|r| r.target == target));
}
