//! Acceptance suite. Prints one PASS/FAIL line per criterion, then asserts
//! that every criterion passed except those in [`KNOWN_UNATTAINABLE`].

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use cdr_core::classifiers::{train_classifier, train_forest, ForestConfig};
use cdr_core::evaluation;
use cdr_core::expressiveness::{centroid_purity, tsne, TsneConfig};
use cdr_core::linalg::Matrix;
use cdr_core::neural::{gradient_check, Activation, Loss, MlpModel, Mode};
use cdr_core::pipeline::{self, DataPaths, Encoders, IngestBundle, Role, RunConfig, Space, Variant};
use cdr_core::scoring::{binarize, compute_ces, compute_threshold};
use cdr_core::synthetic::{self, SynthConfig};
use cdr_core::{seeded_rng, Rng};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

const GRAD_REL_TOL: f64 = 1e-4;
const GRAD_BUDGET: Duration = Duration::from_secs(5);
const CES_TOL: f64 = 1e-12;
const TAIL_TARGET: f64 = 0.1003;
const TAIL_TOL: f64 = 0.01;
const OVERALL_TOL: f64 = 5e-4;
const TTEST_TOL: f64 = 1e-6;
const SPEARMAN_P_RANGE: (f64, f64) = (0.00055, 0.00065);
const E2E_P1_MIN: f64 = 0.9;
const E2E_BUDGET: Duration = Duration::from_secs(120);
const E2E_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const SEPARABILITY_FACTOR: f64 = 2.0;
const IMPORTANCE_SUM_TOL: f64 = 1e-9;
const SIGNAL_IMPORTANCE_MIN: f64 = 0.9;
const REAL_PAIRS: usize = 67_838;
const REAL_DRUGS: usize = 1_105;
const REAL_CELLS: usize = 419;
const REAL_POOL: usize = 864;
const REAL_THRESHOLD: f64 = 7.2734;
const REAL_THRESHOLD_TOL: f64 = 0.01;

/// Published "Overall" row of the RF per-cancer P_cancer@1..5 table, and
/// its twelve cancer rows.
const OVERALL_ROW: [f64; 5] = [0.9728, 0.9589, 0.9155, 0.8744, 0.8454];
const CANCER_ROWS: [(&str, [f64; 5]); 12] = [
    ("Bladder", [1.0000, 1.0000, 1.0000, 0.9167, 0.9333]),
    ("Brain", [1.0000, 0.8750, 0.8333, 0.8125, 0.7500]),
    ("Breast", [1.0000, 1.0000, 0.7778, 0.7500, 0.8000]),
    ("Colorectal", [1.0000, 1.0000, 1.0000, 0.8750, 0.9000]),
    ("Endometrial", [1.0000, 1.0000, 1.0000, 0.9167, 0.8667]),
    ("Esophageal", [1.0000, 0.8333, 0.7778, 0.7500, 0.8000]),
    ("Head and Neck", [1.0000, 1.0000, 1.0000, 1.0000, 0.9333]),
    ("Liver", [1.0000, 1.0000, 1.0000, 1.0000, 0.9000]),
    ("Lung", [0.9231, 0.9231, 0.8974, 0.8846, 0.8615]),
    ("Ovarian", [1.0000, 1.0000, 1.0000, 0.8750, 0.8615]),
    ("Pancreatic", [0.7500, 0.8750, 0.8333, 0.8125, 0.8000]),
    ("Skin", [1.0000, 1.0000, 0.8667, 0.9000, 0.8000]),
];

/// The published P_cancer@5 column does not average to its own overall
/// value (0.8505 vs 0.8454); see the project notes.
const KNOWN_UNATTAINABLE: [&str; 1] = ["4b"];

struct Outcome {
    id: &'static str,
    name: &'static str,
    status: Status,
    detail: String,
}

#[derive(PartialEq)]
enum Status {
    Pass,
    Fail,
    Skip,
}

#[derive(Default)]
struct Report(Vec<Outcome>);

impl Report {
    fn record(&mut self, id: &'static str, name: &'static str, pass: bool, detail: String) {
        let status = if pass { Status::Pass } else { Status::Fail };
        self.push(Outcome { id, name, status, detail });
    }

    fn skip(&mut self, id: &'static str, name: &'static str, detail: String) {
        self.push(Outcome {
            id,
            name,
            status: Status::Skip,
            detail,
        });
    }

    fn push(&mut self, o: Outcome) {
        let tag = match o.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        };
        println!("{tag} [{}] {}: {}", o.id, o.name, o.detail);
        self.0.push(o);
    }
}

#[test]
fn acceptance() {
    let mut report = Report::default();
    gradient_correctness(&mut report);
    ces_oracle(&mut report);
    threshold_tail(&mut report);
    metric_oracles(&mut report);
    statistics(&mut report);
    let bundles = contrastive_end_to_end(&mut report);
    expressiveness(&mut report, &bundles);
    real_data(&mut report);
    determinism(&mut report);
    forest_sanity(&mut report);

    let failed: Vec<&str> = report
        .0
        .iter()
        .filter(|o| o.status == Status::Fail && !KNOWN_UNATTAINABLE.contains(&o.id))
        .map(|o| o.id)
        .collect();
    let passed = report.0.iter().filter(|o| o.status == Status::Pass).count();
    println!("{passed}/{} criteria passed", report.0.len());
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

// ---------------------------------------------------------------------------

fn random_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let data: Vec<Vec<f64>> = (0..rows)
        .map(|_| (0..cols).map(|_| StandardNormal.sample(rng)).collect())
        .collect();
    Matrix::from_rows(&data).unwrap()
}

/// Smallest |pre-activation| over hidden ReLU units. Central differences
/// straddle the kink when this is below the step.
fn relu_margin(model: &MlpModel, x: &Matrix) -> f64 {
    let acts = model.forward(x, Mode::Eval, None).unwrap();
    let n = acts.pre.len();
    acts.pre[..n - 1]
        .iter()
        .flat_map(|m| m.as_slice().iter())
        .fold(f64::INFINITY, |a, b| a.min(b.abs()))
}

fn gradient_correctness(report: &mut Report) {
    const KINK_MARGIN: f64 = 1e-4;
    let start = Instant::now();
    let mut rng = seeded_rng(11, 0);
    let hidden = [Activation::Relu, Activation::Sigmoid, Activation::Identity];
    let mut worst = 0.0f64;
    let mut checks = 0;
    let mut redraws = 0;
    let mut models = 0;
    while models < 50 {
        let n_layers = rng.random_range(1..=3);
        let in_dim = rng.random_range(1..=16);
        let widths: Vec<usize> = (1..n_layers).map(|_| rng.random_range(1..=16)).collect();
        let act = hidden[rng.random_range(0..hidden.len())];
        let batch = rng.random_range(1..=8);
        let x = random_matrix(batch, in_dim, &mut rng);
        let mut drawn = Vec::new();
        for loss in [Loss::Bce, Loss::Mse] {
            let (out, out_dim) = match loss {
                Loss::Bce => (Activation::Sigmoid, rng.random_range(1..=4)),
                Loss::Mse => (Activation::Identity, rng.random_range(1..=16)),
            };
            let dims: Vec<usize> = std::iter::once(in_dim).chain(widths.iter().copied()).chain([out_dim]).collect();
            let model = MlpModel::new(&dims, act, out, 0.0, &mut rng).unwrap();
            let t: Vec<Vec<f64>> = (0..batch)
                .map(|_| {
                    (0..out_dim)
                        .map(|_| match loss {
                            Loss::Bce => f64::from(rng.random_range(0..2u8)),
                            Loss::Mse => StandardNormal.sample(&mut rng),
                        })
                        .collect()
                })
                .collect();
            drawn.push((model, Matrix::from_rows(&t).unwrap(), loss));
        }
        if act == Activation::Relu && drawn.iter().any(|(m, _, _)| relu_margin(m, &x) < KINK_MARGIN) {
            redraws += 1;
            continue;
        }
        for (model, t, loss) in &drawn {
            worst = worst.max(gradient_check(model, &x, t, *loss).unwrap());
            checks += 1;
        }
        models += 1;
    }
    let elapsed = start.elapsed();
    report.record(
        "1",
        "gradient correctness",
        worst < GRAD_REL_TOL && elapsed < GRAD_BUDGET,
        format!(
            "{models} architectures x 2 losses = {checks} checks, worst relative error {worst:.2e} (< {GRAD_REL_TOL:e}); \
             {redraws} ReLU draws with a pre-activation within {KINK_MARGIN:e} of the kink redrawn; {elapsed:.2?} (< 5 s)"
        ),
    );
}

fn ces_oracle(report: &mut Report) {
    let mut rng = seeded_rng(12, 0);
    let mut worst = 0.0f64;
    let mut monotone = true;
    for _ in 0..1000 {
        let draw = |rng: &mut Rng| 10f64.powf(rng.random_range(-4.0..2.0));
        let (a, l, i) = (draw(&mut rng), draw(&mut rng), draw(&mut rng));
        let oracle = ((a + l + i) / (2.0 * a * l * i)).ln();
        let got = compute_ces(a, l, i).unwrap();
        worst = worst.max((got - oracle).abs() / oracle.abs().max(1.0));
        for k in 0..3 {
            let mut v = [a, l, i];
            v[k] *= 1.0 + rng.random_range(0.01..1.0);
            monotone &= compute_ces(v[0], v[1], v[2]).unwrap() < got;
        }
    }
    report.record(
        "2",
        "CES oracle",
        worst <= CES_TOL && monotone,
        format!("1000 triples, worst deviation {worst:.2e} (<= 1e-12); monotone decrease on 3000 perturbations: {monotone}"),
    );
}

fn threshold_tail(report: &mut Report) {
    let mut rng = seeded_rng(13, 0);
    let draws: Vec<f64> = (0..100_000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let spec = compute_threshold(&draws).unwrap();
    let frac = draws.iter().filter(|&&v| binarize(v, &spec) == 1).count() as f64 / draws.len() as f64;
    report.record(
        "3",
        "threshold tail",
        (frac - TAIL_TARGET).abs() <= TAIL_TOL,
        format!("fraction labeled 1 = {frac:.4} (target {TAIL_TARGET} +/- {TAIL_TOL})"),
    );
}

/// Top-k membership by counting the drugs strictly ahead: higher score, or
/// equal score and smaller id.
fn brute_precision(scores: &[(String, f64)], effective: &BTreeSet<String>, k: usize) -> f64 {
    let hits = scores
        .iter()
        .filter(|(d, s)| {
            let ahead = scores.iter().filter(|(e, t)| t > s || (t == s && e < d)).count();
            ahead < k && effective.contains(d)
        })
        .count();
    hits as f64 / k as f64
}

fn metric_oracles(report: &mut Report) {
    let mut rng = seeded_rng(14, 0);
    let mut mismatches = 0;
    for _ in 0..200 {
        let n_drugs = rng.random_range(1..=20);
        let n_cells = rng.random_range(1..=10);
        let n_cancers = rng.random_range(1..=3);
        let drugs: Vec<String> = (0..n_drugs).map(|i| format!("D{i:02}")).collect();
        let mut rankings = Vec::new();
        let mut effective = BTreeMap::new();
        let mut cancer_of = BTreeMap::new();
        let mut raw = BTreeMap::new();
        for c in 0..n_cells {
            let cell = format!("C{c:02}");
            // Coarse scores force ties.
            let scores: Vec<(String, f64)> = drugs.iter().map(|d| (d.clone(), f64::from(rng.random_range(0..5u8)))).collect();
            let eff: BTreeSet<String> = drugs.iter().filter(|_| rng.random_bool(0.4)).cloned().collect();
            rankings.push(evaluation::rank_drugs(&cell, &scores).unwrap());
            cancer_of.insert(cell.clone(), format!("K{}", rng.random_range(0..n_cancers)));
            effective.insert(cell.clone(), eff);
            raw.insert(cell, scores);
        }
        let ks: Vec<usize> = (1..=n_drugs).collect();
        let got = evaluation::evaluate_rankings(&rankings, &effective, &cancer_of, &ks).unwrap();
        for &k in &ks {
            let per_cell: BTreeMap<&String, f64> =
                raw.iter().map(|(c, s)| (c, brute_precision(s, &effective[c], k))).collect();
            let mut by_cancer: BTreeMap<&String, Vec<f64>> = BTreeMap::new();
            for (c, v) in &per_cell {
                if got.per_cell[*c][&k] != *v {
                    mismatches += 1;
                }
                by_cancer.entry(&cancer_of[*c]).or_default().push(*v);
            }
            let cancer_means: Vec<f64> = by_cancer.values().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect();
            for ((name, _), m) in by_cancer.iter().zip(&cancer_means) {
                if got.per_cancer[*name][&k] != *m {
                    mismatches += 1;
                }
            }
            let overall = cancer_means.iter().sum::<f64>() / cancer_means.len() as f64;
            if got.overall_cancer[&k] != overall {
                mismatches += 1;
            }
        }
    }
    report.record(
        "4a",
        "metric oracles (brute force)",
        mismatches == 0,
        format!("200 random instances, {mismatches} mismatches against set intersection"),
    );

    // Overall row recomputed through the per-cancer aggregation: one
    // pseudo-cell per cancer carrying that cancer's value.
    let cancer_of: BTreeMap<String, String> =
        CANCER_ROWS.iter().map(|(c, _)| (format!("cell-{c}"), c.to_string())).collect();
    let mut deviations = Vec::new();
    for (k, published) in OVERALL_ROW.iter().enumerate() {
        let per_cell: BTreeMap<String, f64> = CANCER_ROWS.iter().map(|(c, v)| (format!("cell-{c}"), v[k])).collect();
        let agg = evaluation::precision_cancer_at_k(&per_cell, &cancer_of).unwrap();
        deviations.push((k + 1, agg.overall, (agg.overall - published).abs()));
    }
    let off: Vec<String> = deviations
        .iter()
        .filter(|(_, _, d)| *d > OVERALL_TOL)
        .map(|(k, m, d)| format!("P@{k} mean {m:.4} vs {:.4} (off by {d:.4})", OVERALL_ROW[k - 1]))
        .collect();
    let means: Vec<String> = deviations.iter().map(|(_, m, _)| format!("{m:.4}")).collect();
    report.record(
        "4b",
        "per-cancer overall recomputation",
        off.is_empty(),
        if off.is_empty() {
            format!("means {} within {OVERALL_TOL}", means.join(" / "))
        } else {
            format!(
                "means {}; {} (published rows are inconsistent; documented)",
                means.join(" / "),
                off.join("; ")
            )
        },
    );
}

/// Two-tailed p of Student's t by quadrature of the density under
/// x = tan(theta), normalized by the same quadrature over the full line.
fn t_pvalue_by_quadrature(t: f64, df: f64) -> f64 {
    let g = |theta: f64| {
        let x = theta.tan();
        let c = theta.cos();
        (1.0 + x * x / df).powf(-(df + 1.0) / 2.0) / (c * c)
    };
    let simpson = |a: f64, b: f64, n: usize| {
        let h = (b - a) / n as f64;
        let mut s = g(a) + g(b);
        for i in 1..n {
            s += g(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    };
    let half = std::f64::consts::FRAC_PI_2;
    let edge = half - 1e-9;
    let total = simpson(0.0, edge, 200_000);
    let tail = simpson(t.abs().atan(), edge, 200_000);
    (tail / total).min(1.0)
}

fn statistics(report: &mut Report) {
    let mut rng = seeded_rng(15, 0);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let na = rng.random_range(3..=15);
        let nb = rng.random_range(3..=15);
        let shift = rng.random_range(0.0..1.5);
        let a: Vec<f64> = (0..na).map(|_| StandardNormal.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..nb).map(|_| shift + Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect();
        let got = evaluation::ttest_bonferroni(&a, &b, 1).unwrap();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let ss = |v: &[f64]| {
            let m = mean(v);
            v.iter().map(|x| (x - m) * (x - m)).sum::<f64>()
        };
        let df = (na + nb - 2) as f64;
        let sp2 = (ss(&a) + ss(&b)) / df;
        let t = (mean(&a) - mean(&b)) / (sp2 * (1.0 / na as f64 + 1.0 / nb as f64)).sqrt();
        worst = worst.max((got.p - t_pvalue_by_quadrature(t, df)).abs());
    }
    let p = evaluation::correlation_p(-0.5037, 43);
    let in_range = (SPEARMAN_P_RANGE.0..=SPEARMAN_P_RANGE.1).contains(&p);
    report.record(
        "5",
        "statistics",
        worst <= TTEST_TOL && in_range,
        format!(
            "100 t-tests, worst |p - quadrature| {worst:.2e} (<= 1e-6); rho -0.5037 with n 43 gives p {p:.6} (in [{}, {}])",
            SPEARMAN_P_RANGE.0, SPEARMAN_P_RANGE.1
        ),
    );
}

// ---------------------------------------------------------------------------

struct SeedRun {
    bundle: IngestBundle,
    encoders: Encoders,
}

/// Trains on the training cells and scores the trained-on test cells.
fn final_model_metrics(run: &SeedRun, cfg: &RunConfig, variant: Variant, ks: &[usize]) -> BTreeMap<usize, f64> {
    let b = &run.bundle;
    let tables = pipeline::feature_tables(&b.dataset.drugs, &b.dataset.cells, variant, &run.encoders).unwrap();
    let tr = pipeline::design(&b.dataset.pairs, &tables, &b.splits.training_cells()).unwrap();
    let model = train_classifier(&tr.x, &tr.y, &cfg.classifier_config(variant.classifier)).unwrap();
    let te = pipeline::design(&b.dataset.pairs, &tables, &b.splits.trained_on_test).unwrap();
    let (_, m) = pipeline::evaluate(&model, &te, &b.dataset.cancer_of(), ks).unwrap();
    m.overall_cell
}

fn contrastive_end_to_end(report: &mut Report) -> Vec<SeedRun> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let tmp = tempfile::TempDir::new().unwrap();
    let learned: Variant = "e_d,e_c,rf".parse().unwrap();
    let raw: Variant = "f,g,rf".parse().unwrap();
    let start = Instant::now();
    let mut runs = Vec::new();
    let mut p1 = Vec::new();
    let mut p5 = Vec::new();
    pool.install(|| {
        for seed in E2E_SEEDS {
            let dir = tmp.path().join(format!("seed{seed}"));
            let sc = SynthConfig {
                seed,
                ..SynthConfig::default()
            };
            synthetic::generate(&sc).unwrap().write(&dir).unwrap();
            let cfg = RunConfig::for_synthetic(&dir, seed);
            let bundle = pipeline::ingest(&cfg).unwrap().bundle;
            let snaps = [
                pipeline::pretrain(&bundle, &cfg, Role::Drug).unwrap(),
                pipeline::pretrain(&bundle, &cfg, Role::Cell).unwrap(),
            ];
            let run = SeedRun {
                bundle,
                encoders: Encoders::from_snapshots(&snaps),
            };
            let a = final_model_metrics(&run, &cfg, learned, &[1, 5]);
            let b = final_model_metrics(&run, &cfg, raw, &[5]);
            p1.push(a[&1]);
            p5.push((a[&5], b[&5]));
            runs.push(run);
        }
    });
    let elapsed = start.elapsed();
    let mean_p1 = p1.iter().sum::<f64>() / p1.len() as f64;
    let exceeds = p5.iter().all(|(a, b)| a > b);
    let shape = &runs[0].bundle.dataset;
    let planted = format!(
        "{} drugs, {} cells, {} cancers",
        shape.drugs.len(),
        shape.cells.len(),
        shape.cancer_of().values().collect::<BTreeSet<_>>().len()
    );
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ");
    report.record(
        "6",
        "contrastive end-to-end",
        mean_p1 >= E2E_P1_MIN && exceeds && elapsed < E2E_BUDGET,
        format!(
            "{planted}; e_d+e_c RF P_cell@1 per seed [{}], mean {mean_p1:.3} (>= 0.9); P_cell@5 learned vs f+g [{}]; {elapsed:.1?} on 1 thread (< 2 min)",
            fmt(&p1),
            p5.iter().map(|(a, b)| format!("{a:.3}>{b:.3}")).collect::<Vec<_>>().join(" "),
        ),
    );
    runs
}

fn expressiveness(report: &mut Report, runs: &[SeedRun]) {
    let mut ratios = Vec::new();
    for run in runs {
        let reps = pipeline::representations(&run.bundle, &run.encoders, Space::Cells).unwrap();
        let r = pipeline::expressiveness_report(&reps, Space::Cells, 15).unwrap();
        ratios.push(r.separability["e_c"].mean / r.separability["g"].mean);
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let per_seed = ratios.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ");
    report.record(
        "7a",
        "embedding separability",
        mean >= SEPARABILITY_FACTOR,
        format!("e_c / g separability per seed [{per_seed}], mean {mean:.3} (>= 2)"),
    );

    let mut all_pure = true;
    let mut all_descend = true;
    let mut worst_purity = 1.0f64;
    for seed in 0..10u64 {
        let mut rng = seeded_rng(seed, 99);
        let mut rows = Vec::new();
        let mut groups = Vec::new();
        for c in 0..3 {
            let center: Vec<f64> = (0..8).map(|j| if j % 3 == c { 10.0 } else { 0.0 }).collect();
            for _ in 0..40 {
                rows.push(center.iter().map(|m| m + Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect::<Vec<_>>());
                groups.push(format!("g{c}"));
            }
        }
        let x = Matrix::from_rows(&rows).unwrap();
        let config = TsneConfig {
            seed,
            ..TsneConfig::default()
        };
        let out = tsne(&x, &config).unwrap();
        let purity = centroid_purity(&out.coords, &groups);
        worst_purity = worst_purity.min(purity);
        all_pure &= purity == 1.0;
        all_descend &= out.final_kl < out.initial_kl;
    }
    report.record(
        "7b",
        "t-SNE on separated clusters",
        all_pure && all_descend,
        format!("seeds 0..9: minimum centroid purity {worst_purity:.3}; final KL < initial KL on all: {all_descend}"),
    );
}

fn real_data(report: &mut Report) {
    let Ok(dir) = std::env::var("CDR_PRISM_DIR") else {
        report.skip("6r", "real-data pipeline counts", "CDR_PRISM_DIR not set".into());
        return;
    };
    let cfg = RunConfig {
        data: Some(DataPaths::in_dir(Path::new(&dir))),
        ..RunConfig::default()
    };
    match pipeline::ingest(&cfg) {
        Ok(out) => {
            let s = &out.summary;
            let t = out.bundle.threshold.threshold;
            let counts = (s.n_pairs, s.n_drugs, s.n_cells, s.n_pool_cells);
            report.record(
                "6r",
                "real-data pipeline counts",
                counts == (REAL_PAIRS, REAL_DRUGS, REAL_CELLS, REAL_POOL) && (t - REAL_THRESHOLD).abs() <= REAL_THRESHOLD_TOL,
                format!(
                    "pairs/drugs/cells/pool {counts:?} (want {:?}); threshold {t:.4} (want {REAL_THRESHOLD} +/- {REAL_THRESHOLD_TOL})",
                    (REAL_PAIRS, REAL_DRUGS, REAL_CELLS, REAL_POOL)
                ),
            );
        }
        Err(e) => report.record("6r", "real-data pipeline counts", false, format!("ingest failed: {e}")),
    }
}

// ---------------------------------------------------------------------------

fn cdr<S: AsRef<std::ffi::OsStr> + std::fmt::Debug>(args: &[S]) {
    let out = Command::new(env!("CARGO_BIN_EXE_cdr"))
        .args(args)
        .env("CDR_THREADS", "1")
        .output()
        .expect("spawn cdr");
    assert!(
        out.status.success(),
        "cdr {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn workflow(root: &Path) {
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let data = root.join("data");
    let run = s(&root.join("run"));
    cdr(&["synth", "--out", &s(&data), "--seed", "3"]);
    let cfg = s(&data.join("run.json"));
    let c = ["--config", cfg.as_str(), "--out", run.as_str()];
    let with = |head: &[&'static str], tail: &[&'static str]| -> Vec<String> {
        head.iter().chain(&c).chain(tail).map(|a| a.to_string()).collect()
    };
    cdr(&with(&["ingest"], &[]));
    cdr(&with(&["pretrain"], &["--role", "drug", "--role", "cell", "--role", "ae"]));
    cdr(&with(&["train-eval"], &[]));
    cdr(&with(&["train-eval"], &["--variant", "f,g,lr"]));
    cdr(&with(&["analyze", "fda-priority"], &[]));
    cdr(&with(&["analyze", "gene-correlation"], &["--drug", "D000", "--cancer", "Breast"]));
    cdr(&with(&["analyze", "expressiveness"], &[]));
    cdr(&with(&["analyze", "expressiveness"], &["--space", "drugs"]));
    cdr(&with(&["analyze", "tsne"], &["--iterations", "300"]));
    cdr(&with(&["analyze", "feature-importance"], &[]));
}

/// Relative path and SHA-256 of every file under `root`.
fn digests(root: &Path) -> BTreeMap<String, String> {
    fn walk(base: &Path, dir: &Path, out: &mut BTreeMap<String, String>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(base, &p, out);
            } else {
                let hash = Sha256::digest(fs::read(&p).unwrap());
                let hex: String = hash.iter().map(|b| format!("{b:02x}")).collect();
                out.insert(p.strip_prefix(base).unwrap().display().to_string(), hex);
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn determinism(report: &mut Report) {
    let a = tempfile::TempDir::new().unwrap();
    let b = tempfile::TempDir::new().unwrap();
    workflow(a.path());
    workflow(b.path());
    let (da, db) = (digests(a.path()), digests(b.path()));
    let differing: Vec<&String> = da.keys().chain(db.keys()).filter(|k| da.get(*k) != db.get(*k)).collect();
    report.record(
        "8",
        "determinism",
        differing.is_empty() && da.len() > 20,
        format!(
            "{} files hashed over two full CLI workflows; differing: {:?}",
            da.len(),
            differing
        ),
    );
}

// ---------------------------------------------------------------------------

fn forest_sanity(report: &mut Report) {
    let mut rng = seeded_rng(16, 0);
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for _ in 0..200 {
        let (a, b) = (rng.random_bool(0.5), rng.random_bool(0.5));
        let jitter = |rng: &mut Rng, on: bool| if on { 0.6 } else { 0.0 } + rng.random_range(0.0..0.4);
        rows.push(vec![jitter(&mut rng, a), jitter(&mut rng, b)]);
        y.push(u8::from(a != b));
    }
    let x = Matrix::from_rows(&rows).unwrap();
    let forest = train_forest(&x, &y, &ForestConfig::default()).unwrap();
    let scores = forest.predict_scores(&x).unwrap();
    let correct = scores.iter().zip(&y).filter(|(s, t)| u8::from(**s > 0.5) == **t).count();
    let xor_acc = correct as f64 / y.len() as f64;
    let xor_sum: f64 = forest.importances.iter().sum();

    let mut rows = Vec::new();
    let mut y = Vec::new();
    for _ in 0..2000 {
        let r: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..1.0)).collect();
        y.push(u8::from(r[0] > 0.5));
        rows.push(r);
    }
    let x = Matrix::from_rows(&rows).unwrap();
    let forest = train_forest(&x, &y, &ForestConfig::default()).unwrap();
    let signal = forest.importances[0];
    let sig_sum: f64 = forest.importances.iter().sum();
    let sums_ok = (xor_sum - 1.0).abs() <= IMPORTANCE_SUM_TOL && (sig_sum - 1.0).abs() <= IMPORTANCE_SUM_TOL;
    report.record(
        "9",
        "forest sanity",
        xor_acc == 1.0 && sums_ok && signal >= SIGNAL_IMPORTANCE_MIN,
        format!(
            "XOR training accuracy {xor_acc:.3}; importance sums {:.1e} and {:.1e} from 1; signal feature importance {signal:.3} (>= 0.9)",
            (xor_sum - 1.0).abs(),
            (sig_sum - 1.0).abs()
        ),
    );
}
