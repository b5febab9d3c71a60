use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cdr_core::pipeline::{self, Encoders, IngestBundle, Meta, ModelSnapshot, Role, RunConfig, Space, Variant};
use cdr_core::synthetic::{self, SynthConfig};
use cdr_core::Error;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

/// Drug-response prioritization: ingest screening data, pretrain encoders,
/// train and evaluate classifiers, and run the analyses.
#[derive(Parser)]
#[command(name = "cdr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory.
    #[arg(long, default_value = "cdr-run")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Filter, score, label and split the raw inputs.
    Ingest(Common),
    /// Pretrain encoders on the ingested data.
    Pretrain {
        #[command(flatten)]
        common: Common,
        /// drug, cell or ae; repeatable. Defaults to drug and cell.
        #[arg(long = "role")]
        roles: Vec<String>,
    },
    /// Cross-validate, train and evaluate each variant.
    TrainEval {
        #[command(flatten)]
        common: Common,
        /// e.g. `e_d,e_c,rf`; repeatable. Defaults to the config's variants.
        #[arg(long = "variant")]
        variants: Vec<String>,
        /// Search the classifier grid before the final fit.
        #[arg(long)]
        grid: bool,
    },
    /// Post-hoc analyses.
    Analyze {
        #[command(subcommand)]
        which: Analysis,
    },
    /// Write a planted synthetic dataset and a matching run config.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Generator settings (JSON); defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum Analysis {
    /// Ranks of approved drugs per cell line and cancer.
    FdaPriority {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        variant: Option<String>,
        /// Rankings CSV to use instead of the variant's train-eval output.
        #[arg(long)]
        rankings: Option<PathBuf>,
    },
    /// Genes whose expression tracks one drug's rank within a cancer.
    GeneCorrelation {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        drug: String,
        #[arg(long)]
        cancer: String,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        variant: Option<String>,
        #[arg(long)]
        rankings: Option<PathBuf>,
    },
    /// Intra/inter-group similarity of raw and learned representations.
    Expressiveness {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "cells")]
        space: String,
        #[arg(long)]
        min_group_size: Option<usize>,
    },
    /// Two-dimensional t-SNE projection with an SVG scatter.
    Tsne {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "cells")]
        space: String,
        /// Representation name (g, e_c, e_ae, f, e_d); defaults to the
        /// learned one.
        #[arg(long)]
        repr: Option<String>,
        #[arg(long)]
        min_group_size: Option<usize>,
        #[arg(long)]
        perplexity: Option<f64>,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Per-feature importance of a trained model.
    FeatureImportance {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        variant: Option<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 1 })
        }
    }
}

fn configure_threads() -> Result<(), Error> {
    let Ok(v) = std::env::var("CDR_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::InvalidInput(format!("CDR_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidInput(format!("cannot size the worker pool: {e}")))
}

fn load(common: &Common) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn dir(base: &Path, parts: &[&str]) -> Result<PathBuf, Error> {
    let d = parts.iter().fold(base.to_path_buf(), |p, s| p.join(s));
    std::fs::create_dir_all(&d).map_err(|e| Error::Io { path: d.clone(), source: e })?;
    Ok(d)
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

fn parse_variant(v: Option<&str>, cfg: &RunConfig) -> Result<Variant, Error> {
    match v {
        Some(s) => s.parse(),
        None => Ok(cfg.variants[0]),
    }
}

fn read_bundle(out: &Path) -> Result<IngestBundle, Error> {
    IngestBundle::read(&out.join("ingest"))
}

fn rankings_path(out: &Path, variant: Variant) -> PathBuf {
    out.join("train_eval").join(variant.slug()).join("rankings.csv")
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Ingest(common) => ingest(&common),
        Command::Pretrain { common, roles } => pretrain(&common, &roles),
        Command::TrainEval { common, variants, grid } => train_eval(&common, &variants, grid),
        Command::Analyze { which } => analyze(which),
        Command::Synth { out, seed, config } => synth(&out, seed, config.as_deref()),
    }
}

fn ingest(common: &Common) -> Result<(), Error> {
    let cfg = load(common)?;
    let meta = Meta::new("ingest", &cfg);
    let out = pipeline::ingest(&cfg)?;
    let d = dir(&common.out, &["ingest"])?;
    out.bundle.write(&d, &meta)?;
    let audit_path = d.join("audit.jsonl");
    let f = std::fs::File::create(&audit_path).map_err(|e| Error::Io { path: audit_path.clone(), source: e })?;
    let mut w = std::io::BufWriter::new(f);
    out.audit.write_jsonl(&mut w)?;
    std::io::Write::flush(&mut w).map_err(|e| Error::Io { path: audit_path, source: e })?;
    pipeline::write_json(&d.join("audit_summary.json"), &meta, &out.summary)?;
    let s = &out.summary;
    println!(
        "ingest: {} pairs, {} drugs, {} cell lines, {} pretraining cell lines, threshold {:.4} -> {}",
        s.n_pairs,
        s.n_drugs,
        s.n_cells,
        s.n_pool_cells,
        out.bundle.threshold.threshold,
        d.display()
    );
    Ok(())
}

fn pretrain(common: &Common, roles: &[String]) -> Result<(), Error> {
    let cfg = load(common)?;
    let roles: Vec<Role> = if roles.is_empty() {
        vec![Role::Drug, Role::Cell]
    } else {
        roles.iter().map(|r| r.parse()).collect::<Result<_, _>>()?
    };
    let bundle = read_bundle(&common.out)?;
    let meta = Meta::new("pretrain", &cfg);
    let d = dir(&common.out, &["pretrain"])?;
    for role in roles {
        let snap = pipeline::pretrain(&bundle, &cfg, role)?;
        let path = d.join(role.file_name());
        pipeline::write_json(&path, &meta, &snap)?;
        println!(
            "pretrain {}: {} items, {} epochs (best {}, val loss {:.4}{}) -> {}",
            role.file_name().trim_end_matches(".json"),
            snap.n_items,
            snap.report.epochs_run,
            snap.report.best_epoch,
            snap.report.best_val_loss,
            if snap.report.stopped_early { ", stopped early" } else { "" },
            path.display()
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct StatsBody<'a> {
    comparisons: &'a [pipeline::StatRow],
}

fn train_eval(common: &Common, variants: &[String], grid: bool) -> Result<(), Error> {
    let cfg = load(common)?;
    let variants: Vec<Variant> = if variants.is_empty() {
        cfg.variants.clone()
    } else {
        variants.iter().map(|v| v.parse()).collect::<Result<_, _>>()?
    };
    let bundle = read_bundle(&common.out)?;
    let encoders = Encoders::read(&common.out.join("pretrain"))?;
    let meta = Meta::new("train-eval", &cfg);
    let mut summaries = Vec::new();
    for v in variants {
        let run = pipeline::train_eval_variant(&bundle, &encoders, &cfg, v, grid)?;
        let d = dir(&common.out, &["train_eval", &v.slug()])?;
        pipeline::write_json(&d.join("model.json"), &meta, &run.model)?;
        pipeline::write_json(&d.join("metrics.json"), &meta, &run.metrics)?;
        pipeline::write_rankings_csv(&d.join("rankings.csv"), &run.rankings)?;
        if let Some(g) = &run.grid {
            pipeline::write_grid_csv(&d.join("grid.csv"), g, &format!("P_cell@{}", cfg.grid_k))?;
        }
        let head = |r: &Option<cdr_core::evaluation::MetricsReport>| {
            r.as_ref()
                .and_then(|m| m.overall_cell.iter().next().map(|(k, v)| format!("P_cell@{k} {v:.3}")))
                .unwrap_or_else(|| "n/a".into())
        };
        println!(
            "train-eval {v}: trained-on test {}, novel test {} -> {}",
            head(&run.metrics.trained_on_test),
            head(&run.metrics.novel_test),
            d.display()
        );
        summaries.push((v, run.metrics.cv));
    }
    let rows = if summaries.len() >= 2 {
        let baseline = cfg.stats_baseline.filter(|b| summaries.iter().any(|(v, _)| v == b));
        pipeline::compare_variants(&summaries, baseline)?
    } else {
        Vec::new()
    };
    let d = dir(&common.out, &["train_eval"])?;
    pipeline::write_stats_csv(&d.join("stats.csv"), &rows)?;
    pipeline::write_json(&d.join("stats.json"), &meta, &StatsBody { comparisons: &rows })?;
    Ok(())
}

fn rankings_for(out: &Path, variant: Variant, explicit: Option<&Path>) -> Result<Vec<cdr_core::evaluation::Ranking>, Error> {
    match explicit {
        Some(p) => pipeline::read_rankings_csv(p),
        None => pipeline::read_rankings_csv(&rankings_path(out, variant)),
    }
}

#[derive(Serialize)]
struct TsneBody<'a> {
    space: Space,
    representation: &'a str,
    n_items: usize,
    purity: f64,
    initial_kl: f64,
    final_kl: f64,
    kl_trace: &'a [(usize, f64)],
    config: &'a cdr_core::expressiveness::TsneConfig,
}

#[derive(Serialize)]
struct ImportanceBody<'a> {
    variant: Variant,
    importance: &'a cdr_core::classifiers::FeatureImportance,
}

#[derive(Serialize)]
struct CorrelationBody<'a> {
    drug: &'a str,
    cancer: &'a str,
    rho_min: f64,
    p_max: f64,
    screen: &'a cdr_core::evaluation::CorrelationScreen,
}

fn analyze(which: Analysis) -> Result<(), Error> {
    match which {
        Analysis::FdaPriority { common, variant, rankings } => {
            let cfg = load(&common)?;
            let v = parse_variant(variant.as_deref(), &cfg)?;
            let bundle = read_bundle(&common.out)?;
            let r = rankings_for(&common.out, v, rankings.as_deref())?;
            let report = pipeline::fda_priority(&bundle, &r)?;
            let d = dir(&common.out, &["analyze", "fda_priority"])?;
            pipeline::write_priority_csvs(&d, &report)?;
            pipeline::write_json(&d.join("fda_priority.json"), &Meta::new("analyze fda-priority", &cfg), &report)?;
            println!(
                "fda-priority: {} cell lines, {} cancers -> {}",
                report.per_cell.len(),
                report.per_cancer.len(),
                d.display()
            );
        }
        Analysis::GeneCorrelation {
            common,
            drug,
            cancer,
            rho,
            p,
            variant,
            rankings,
        } => {
            let cfg = load(&common)?;
            let v = parse_variant(variant.as_deref(), &cfg)?;
            let bundle = read_bundle(&common.out)?;
            let r = rankings_for(&common.out, v, rankings.as_deref())?;
            let rho_min = rho.unwrap_or(cfg.analysis.rho_min);
            let p_max = p.unwrap_or(cfg.analysis.p_max);
            let screen = pipeline::gene_correlation(&bundle, &r, &drug, &cancer, rho_min, p_max)?;
            let d = dir(&common.out, &["analyze", "gene_correlation"])?;
            pipeline::write_correlation_csv(&d.join("gene_correlation.csv"), &screen)?;
            let body = CorrelationBody {
                drug: &drug,
                cancer: &cancer,
                rho_min,
                p_max,
                screen: &screen,
            };
            pipeline::write_json(&d.join("gene_correlation.json"), &Meta::new("analyze gene-correlation", &cfg), &body)?;
            println!("gene-correlation: {} genes pass -> {}", screen.hits.len(), d.display());
        }
        Analysis::Expressiveness {
            common,
            space,
            min_group_size,
        } => {
            let cfg = load(&common)?;
            let space: Space = space.parse()?;
            let min = min_group_size.unwrap_or(match space {
                Space::Cells => cfg.analysis.min_group_size_cells,
                Space::Drugs => cfg.analysis.min_group_size_drugs,
            });
            let bundle = read_bundle(&common.out)?;
            let encoders = Encoders::read(&common.out.join("pretrain"))?;
            let reps = pipeline::representations(&bundle, &encoders, space)?;
            let report = pipeline::expressiveness_report(&reps, space, min)?;
            let d = dir(&common.out, &["analyze", "expressiveness"])?;
            let name = match space {
                Space::Cells => "cells",
                Space::Drugs => "drugs",
            };
            let mut csv = String::from("representation,group,size,intra,inter,ratio\n");
            for (rep, sims) in &report.similarities {
                for (g, s) in &sims.groups {
                    let f = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
                    let ratio = report.separability[rep].ratios.get(g).copied();
                    csv.push_str(&format!("{rep},{g},{},{},{},{}\n", s.size, f(s.intra), f(s.inter), f(ratio)));
                }
            }
            write_text(&d.join(format!("{name}.csv")), &csv)?;
            pipeline::write_json(&d.join(format!("{name}.json")), &Meta::new("analyze expressiveness", &cfg), &report)?;
            for (rep, s) in &report.separability {
                println!("expressiveness {name} {rep}: mean separability {:.3}", s.mean);
            }
        }
        Analysis::Tsne {
            common,
            space,
            repr,
            min_group_size,
            perplexity,
            iterations,
        } => {
            let cfg = load(&common)?;
            let space: Space = space.parse()?;
            let min = min_group_size.unwrap_or(match space {
                Space::Cells => cfg.analysis.min_group_size_cells,
                Space::Drugs => cfg.analysis.min_group_size_drugs,
            });
            let bundle = read_bundle(&common.out)?;
            let encoders = Encoders::read(&common.out.join("pretrain"))?;
            let reps = pipeline::representations(&bundle, &encoders, space)?;
            let (name, set) = match &repr {
                Some(r) => reps.iter().find(|(n, _)| n == r).ok_or_else(|| {
                    let have: Vec<&str> = reps.iter().map(|(n, _)| n.as_str()).collect();
                    Error::InvalidInput(format!(
                        "representation `{r}` is unavailable; have {}; learned ones need `cdr pretrain`",
                        have.join(", ")
                    ))
                })?,
                None => reps.get(1).unwrap_or(&reps[0]),
            };
            let mut tc = cfg.analysis.tsne.clone();
            tc.seed = cfg.seed;
            if let Some(p) = perplexity {
                tc.perplexity = p;
            }
            if let Some(n) = iterations {
                tc.n_iters = n;
            }
            let out = pipeline::tsne_projection(set, min, &tc)?;
            let d = dir(&common.out, &["analyze", "tsne"])?;
            let stem = format!(
                "{}_{name}",
                match space {
                    Space::Cells => "cells",
                    Space::Drugs => "drugs",
                }
            );
            pipeline::write_tsne_csv(&d.join(format!("{stem}.csv")), &out)?;
            let title = format!("t-SNE of {name} ({} items)", out.set.len());
            write_text(
                &d.join(format!("{stem}.svg")),
                &cdr_core::expressiveness::scatter_svg(&out.result.coords, &out.set.groups, &title),
            )?;
            let body = TsneBody {
                space,
                representation: name,
                n_items: out.set.len(),
                purity: out.purity,
                initial_kl: out.result.initial_kl,
                final_kl: out.result.final_kl,
                kl_trace: &out.result.kl_trace,
                config: &tc,
            };
            pipeline::write_json(&d.join(format!("{stem}.json")), &Meta::new("analyze tsne", &cfg), &body)?;
            println!(
                "tsne {stem}: {} items, KL {:.4} -> {:.4}, centroid purity {:.3} -> {}",
                out.set.len(),
                out.result.initial_kl,
                out.result.final_kl,
                out.purity,
                d.display()
            );
        }
        Analysis::FeatureImportance { common, variant } => {
            let cfg = load(&common)?;
            let v = parse_variant(variant.as_deref(), &cfg)?;
            let bundle = read_bundle(&common.out)?;
            let encoders = Encoders::read(&common.out.join("pretrain"))?;
            let model_path = common.out.join("train_eval").join(v.slug()).join("model.json");
            if !model_path.exists() {
                return Err(Error::InvalidInput(format!(
                    "{} not found; run `cdr train-eval --variant {v}` first",
                    model_path.display()
                )));
            }
            let snapshot: ModelSnapshot = pipeline::read_json(&model_path)?;
            let imp = pipeline::model_importance(&bundle, &encoders, &snapshot, cfg.seed)?;
            let d = dir(&common.out, &["analyze", "feature_importance"])?;
            let names = pipeline::feature_names(&bundle, v, snapshot.layout);
            pipeline::write_importance_csv(&d.join(format!("{}.csv", v.slug())), &names, snapshot.layout, &imp)?;
            let body = ImportanceBody { variant: v, importance: &imp };
            pipeline::write_json(
                &d.join(format!("{}.json", v.slug())),
                &Meta::new("analyze feature-importance", &cfg),
                &body,
            )?;
            println!(
                "feature-importance {v} ({}): drug mean {:.4}, cell mean {:.4} -> {}",
                imp.method,
                imp.drug_mean,
                imp.cell_mean,
                d.display()
            );
        }
    }
    Ok(())
}

fn synth(out: &Path, seed: u64, config: Option<&Path>) -> Result<(), Error> {
    let mut sc: SynthConfig = match config {
        Some(p) => pipeline::read_json(p)?,
        None => SynthConfig::default(),
    };
    sc.seed = seed;
    let data = synthetic::generate(&sc)?;
    std::fs::create_dir_all(out).map_err(|e| Error::Io { path: out.to_path_buf(), source: e })?;
    data.write(out)?;
    let mut run = RunConfig::for_synthetic(Path::new(""), seed);
    run.data = Some(pipeline::DataPaths::in_dir(Path::new("")));
    let mut text = serde_json::to_string_pretty(&run)?;
    text.push('\n');
    write_text(&out.join("run.json"), &text)?;
    println!(
        "synth: {} drugs, {} cell lines, {} pairs -> {}",
        data.drugs.len(),
        data.cells.len(),
        data.pairs.len(),
        out.display()
    );
    Ok(())
}
