//! End-to-end checks on the three-episode fixture in `tests/fixtures`.
//!
//! - `ep_a`: adult, MICU, 10 hours. Fever and tachycardia from hour 8,
//!   systolic BP 85 at hour 9. Infection annotated at hours 8 and 9,
//!   refractory hypotension at hour 9. Two HR readings (78, 82) in hour 3; no
//!   SBP reading in hour 5.
//! - `ep_b`: age 12, otherwise normal.
//! - `ep_c`: adult, never charted SpO2; one malformed HR row.

use std::path::PathBuf;

use sepsis_core::cohort::{Channel, ExclusionReason, InclusionVerdict};
use sepsis_core::features::build_feature_vector;
use sepsis_core::gold::{mews_score, qsofa_score, sofa_score, BandTables, Category};
use sepsis_core::pipeline::{load_cohort, PreparedCohort};

fn fixture() -> (PreparedCohort, usize, usize) {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let (cohort, vr, ar) = load_cohort(
        &dir.join("vitals.csv"),
        Some(&dir.join("annotations.csv")),
        BandTables::standard(),
    )
    .unwrap();
    (cohort, vr.errors.len(), ar.unwrap().errors.len())
}

#[test]
fn parse_and_inclusion_counts() {
    let (cohort, vitals_errors, annotation_errors) = fixture();
    assert_eq!(cohort.episodes.len(), 3);
    assert_eq!((vitals_errors, annotation_errors), (1, 0));
    let s = cohort.summary();
    assert_eq!(s.included, 1);
    assert_eq!(s.included_septic, 1);
    assert_eq!(s.excluded_age, 1);
    assert_eq!(s.excluded_missing_vital, 1);
    assert_eq!(cohort.find("ep_b").unwrap().verdict, InclusionVerdict::Excluded(ExclusionReason::Age));
    assert_eq!(
        cohort.find("ep_c").unwrap().verdict,
        InclusionVerdict::Excluded(ExclusionReason::MissingVital(Channel::Spo2))
    );
}

#[test]
fn binning_and_imputation() {
    let (cohort, _, _) = fixture();
    let g = cohort.find("ep_a").unwrap().grid.as_ref().unwrap();
    assert_eq!(g.hours(), 10);
    assert_eq!(g.get(3, Channel::HeartRate), Some(80.0));
    assert!(!g.is_observed(5, Channel::SystolicBp));
    assert_eq!(g.get(5, Channel::SystolicBp), Some(120.0));
    assert!(g.core_complete());
}

#[test]
fn labels_per_category() {
    let (cohort, _, _) = fixture();
    let l = cohort.find("ep_a").unwrap().labeling.clone().unwrap();
    let hours = |c| l.hours(c).iter().copied().collect::<Vec<_>>();
    assert_eq!(hours(Category::Sepsis), vec![8, 9]);
    assert_eq!(hours(Category::SevereSepsis), vec![9]);
    assert_eq!(hours(Category::SepticShock), vec![9]);
    assert_eq!(l.first_positive_hour(Category::Sepsis), Some(8));
}

#[test]
fn rule_scores_at_hour_nine() {
    let (cohort, _, _) = fixture();
    let g = cohort.find("ep_a").unwrap().grid.as_ref().unwrap();
    let bands = BandTables::standard();
    // MEWS: SBP 85 -> 1, HR 110 -> 1, RR 16 -> 1, temp 38.6 -> 2
    assert_eq!(mews_score(g.hour(9), bands), 5);
    assert_eq!(qsofa_score(g.hour(9), bands), 1);
    assert_eq!(sofa_score(g.hour(9), bands), 0);
    assert_eq!(mews_score(g.hour(0), bands), 1);
}

#[test]
fn feature_vector_at_onset() {
    let (cohort, _, _) = fixture();
    let g = cohort.find("ep_a").unwrap().grid.as_ref().unwrap();
    let fv = build_feature_vector(g, 9).unwrap();
    assert_eq!(&fv.values[0..5], &[110.0, 110.0, 80.0, 0.0, 30.0]);
    assert_eq!(&fv.values[15..20], &[85.0, 120.0, 120.0, -35.0, 0.0]);
}
