use super::*;

#[test]
fn all_families_pass_at_a_fixed_seed() {
    let reports = run_gradcheck(17).unwrap();
    assert_eq!(reports.len(), 12);
    for r in &reports {
        assert!(r.max_rel_err < 1e-4, "{} rel err {}", r.family, r.max_rel_err);
    }
}

#[test]
fn reports_are_deterministic_per_seed() {
    let a = run_gradcheck(3).unwrap();
    let b = run_gradcheck(3).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.family, y.family);
        assert_eq!(x.max_rel_err, y.max_rel_err);
    }
}

#[test]
fn formatting_lists_every_family() {
    let reports = run_gradcheck(1).unwrap();
    let text = format_reports(&reports);
    for r in &reports {
        assert!(text.contains(&r.family));
    }
    assert_eq!(text.lines().count(), reports.len());
}
