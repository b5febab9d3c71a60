use std::collections::BTreeSet;

use cdr_core::pipeline::{self, Encoders, Role, RunConfig, Space, Variant};
use cdr_core::synthetic::{self, SynthConfig};

fn setup(sc: SynthConfig) -> (tempfile::TempDir, RunConfig) {
    let tmp = tempfile::TempDir::new().unwrap();
    synthetic::generate(&sc).unwrap().write(tmp.path()).unwrap();
    let cfg = RunConfig::for_synthetic(tmp.path(), sc.seed);
    (tmp, cfg)
}

#[test]
fn small_extra_cancer_lands_in_novel_test_and_is_scored() {
    let sc = SynthConfig {
        novel_cancer_cells: 8,
        seed: 5,
        ..SynthConfig::default()
    };
    let (_tmp, cfg) = setup(sc);
    let out = pipeline::ingest(&cfg).unwrap();
    let b = &out.bundle;
    assert_eq!(b.splits.novel_test.len(), 8);
    let cancer_of = b.dataset.cancer_of();
    let novel_cancers: BTreeSet<&String> = b.splits.novel_test.iter().map(|c| &cancer_of[c]).collect();
    assert_eq!(novel_cancers.len(), 1);
    for fold in &b.splits.folds {
        assert!(fold.iter().all(|c| !novel_cancers.contains(&cancer_of[c])));
    }

    let variant: Variant = "f,g,lr".parse().unwrap();
    let run = pipeline::train_eval_variant(b, &Encoders::default(), &cfg, variant, false).unwrap();
    let novel = run.metrics.novel_test.expect("novel set is scored");
    assert_eq!(novel.per_cell.len(), 8);
    assert_eq!(run.metrics.cv.per_fold["P_cell@1"].len(), 5);
    for v in run.metrics.cv.mean.values() {
        assert!((0.0..=1.0).contains(v));
    }
    let ranked: BTreeSet<&str> = run.rankings.iter().map(|r| r.cell_id.as_str()).collect();
    let expected: BTreeSet<&str> = b
        .splits
        .trained_on_test
        .iter()
        .chain(&b.splits.novel_test)
        .map(String::as_str)
        .collect();
    assert_eq!(ranked, expected);
}

#[test]
fn drug_encoder_separates_planted_groups_better_than_fingerprints() {
    let (_tmp, cfg) = setup(SynthConfig {
        seed: 2,
        ..SynthConfig::default()
    });
    let bundle = pipeline::ingest(&cfg).unwrap().bundle;
    let snap = pipeline::pretrain(&bundle, &cfg, Role::Drug).unwrap();
    assert_eq!(snap.role, Role::Drug);
    let enc = Encoders::from_snapshots(&[snap]);
    let reps = pipeline::representations(&bundle, &enc, Space::Drugs).unwrap();
    let names: Vec<&str> = reps.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["f", "e_d"]);
    let report = pipeline::expressiveness_report(&reps, Space::Drugs, 10).unwrap();
    assert!(report.separability["e_d"].mean > report.separability["f"].mean);
    assert!(report.comparisons.contains_key("e_d_vs_f"));
}

#[test]
fn ingest_is_repeatable_and_seed_sensitive() {
    let (_tmp, cfg) = setup(SynthConfig::default());
    let a = pipeline::ingest(&cfg).unwrap();
    let b = pipeline::ingest(&cfg).unwrap();
    assert_eq!(a.bundle, b.bundle);
    assert_eq!(a.summary, b.summary);

    let mut reseeded = cfg.clone();
    reseeded.seed += 1;
    let c = pipeline::ingest(&reseeded).unwrap();
    assert_eq!(c.bundle.dataset, a.bundle.dataset);
    assert_ne!(c.bundle.splits, a.bundle.splits);
}
