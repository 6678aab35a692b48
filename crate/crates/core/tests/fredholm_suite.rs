use std::f64::consts::PI;

use loop_morse::fredholm::{
    acceptance_suite, evaluate, numeric_index, Coefficient, DomainKind, GapPolicy, TruncatedCROperator, Truncation,
};

#[test]
fn reference_operators_match_their_predicted_index() {
    let expected = [-1, 1, -1, 1, -1, 1, 0, 0, 0, 1, -1, 2, -2];
    let suite = acceptance_suite();
    assert_eq!(suite.len(), expected.len());
    let mut reports = Vec::new();
    for ((name, op), want) in suite.iter().zip(expected) {
        let t = std::time::Instant::now();
        let r = evaluate(name, op, GapPolicy::default()).unwrap();
        eprintln!(
            "{name}: predicted {} base ({}, {}) refined ({}, {}) angle {:?} gap {:.1e} in {:.2?}",
            r.predicted, r.base.dim_ker, r.base.dim_coker, r.refined.dim_ker, r.refined.dim_coker, r.kernel_angle,
            r.base.gap_ratio.min(r.refined.gap_ratio), t.elapsed()
        );
        assert_eq!(r.predicted, want, "{name}");
        assert!(r.passed(), "{name}");
        reports.push(r);
    }
    // On the half cylinder the cokernel at theta is the kernel at -theta.
    for pair in reports[..6].chunks(2) {
        assert_eq!(pair[0].base.dim_coker, pair[1].base.dim_ker, "{}", pair[0].name);
        assert_eq!(pair[1].base.dim_coker, pair[0].base.dim_ker, "{}", pair[1].name);
    }
    // theta * I never has kernel and cokernel at once.
    for r in reports.iter().filter(|r| matches!(r.operator.coefficient, Coefficient::Theta(_))) {
        assert!(r.base.dim_ker == 0 || r.base.dim_coker == 0, "{}", r.name);
    }
}

#[test]
fn equal_limits_stay_invertible_under_refinement() {
    let op = TruncatedCROperator::new(DomainKind::Cylinder, 1, Coefficient::Theta(PI), Truncation::default());
    let mut ratios = Vec::new();
    for o in [op.clone(), op.refined(1.5)] {
        let ni = numeric_index(&o.assemble().unwrap(), GapPolicy::default()).unwrap();
        assert_eq!((ni.dim_ker, ni.dim_coker), (0, 0));
        ratios.push(ni.sigma_kept / ni.sigma_max);
    }
    assert!(ratios.iter().all(|&r| r > 1e-3), "{ratios:?}");
}
