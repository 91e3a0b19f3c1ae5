use dsanet_core::verify::{run_suite, Fault, Group};

#[test]
fn clean_build_passes_every_check() {
    let outcomes = run_suite(None, None);
    let failed: Vec<_> = outcomes.iter().filter(|o| !o.passed).collect();
    assert!(failed.is_empty(), "{failed:#?}");
    for g in Group::ALL {
        assert!(outcomes.iter().any(|o| o.group == g), "{g:?} ran no checks");
    }
}

#[test]
fn corrupted_gelu_is_named() {
    let outcomes = run_suite(Some(Group::Gradients), Some(Fault::Gelu));
    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.passed).map(|o| o.name.as_str()).collect();
    assert_eq!(failed.first(), Some(&"gelu"));
}

#[test]
fn only_filter_restricts_groups() {
    let outcomes = run_suite(Some(Group::Metrics), None);
    assert!(!outcomes.is_empty());
    assert!(outcomes.iter().all(|o| o.group == Group::Metrics));
}
