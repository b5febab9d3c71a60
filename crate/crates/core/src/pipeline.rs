//! End-to-end stages: ingest, encoder pretraining, train/evaluate, and the
//! analyses. Each stage reads and writes plain files in a run directory so
//! the command-line front end stays thin.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifiers::{
    self, coefficient_stability, drug_score_variance, feature_importance, grid_search, train_classifier, Classifier,
    ClassifierConfig, DnnConfig, FeatureImportance, FeatureLayout, ForestConfig, LogisticConfig, RankedConfig,
};
use crate::contrastive::{self, assign_cell_groups, assign_drug_groups, GroupRule, SnnConfig};
use crate::data::{
    self, cell_records, filter_and_dedup_pairs, filter_cell_lines, label_pairs, make_splits, pretraining_pool,
    score_pairs, AuditLog, CellLineRecord, Dataset, DrugRecord, GenePanel, PairRecord, RowRejection, SplitConfig,
    SplitPlan,
};
use crate::evaluation::{
    evaluate_rankings, fda_priority_analysis, priority_correlation_screen, rank_drugs, ttest_bonferroni,
    CorrelationScreen, MetricsReport, PriorityReport, Ranking, TTestResult,
};
use crate::expressiveness::{self, EmbeddingSet, SeparabilityReport, SimilarityReport, TsneConfig, TsneResult};
use crate::linalg::{Matrix, Standardizer};
use crate::neural::{self, AutoencoderConfig, MlpModel, TrainConfig, TrainReport};
use crate::scoring::{compute_threshold_with_base, LogBase, ThresholdSpec, PUBLISHED_GATE_THRESHOLD};
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataPaths {
    pub pairs: PathBuf,
    pub drugs: PathBuf,
    pub cells: PathBuf,
    pub genes: PathBuf,
}

impl DataPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            pairs: dir.join("pairs.csv"),
            drugs: dir.join("drugs.csv"),
            cells: dir.join("cells.csv"),
            genes: dir.join("genes.txt"),
        }
    }

    fn resolve(&mut self, base: &Path) {
        for p in [&mut self.pairs, &mut self.drugs, &mut self.cells, &mut self.genes] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DrugRepr {
    #[serde(rename = "f")]
    Fingerprint,
    #[serde(rename = "e_d")]
    Embedding,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CellRepr {
    #[serde(rename = "g")]
    Expression,
    #[serde(rename = "e_c")]
    Embedding,
    #[serde(rename = "e_ae")]
    Autoencoder,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    Lr,
    Rf,
    Dnn,
}

/// Drug representation, cell representation and end classifier, written
/// `f,g,lr` or `e_d,e_c,rf`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Variant {
    pub drug: DrugRepr,
    pub cell: CellRepr,
    pub classifier: ClassifierKind,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = match self.drug {
            DrugRepr::Fingerprint => "f",
            DrugRepr::Embedding => "e_d",
        };
        let c = match self.cell {
            CellRepr::Expression => "g",
            CellRepr::Embedding => "e_c",
            CellRepr::Autoencoder => "e_ae",
        };
        let k = match self.classifier {
            ClassifierKind::Lr => "lr",
            ClassifierKind::Rf => "rf",
            ClassifierKind::Dnn => "dnn",
        };
        write!(f, "{d},{c},{k}")
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let bad = || {
            Error::InvalidInput(format!(
                "variant `{s}` must be <f|e_d>,<g|e_c|e_ae>,<lr|rf|dnn>"
            ))
        };
        if parts.len() != 3 {
            return Err(bad());
        }
        let drug = match parts[0] {
            "f" => DrugRepr::Fingerprint,
            "e_d" => DrugRepr::Embedding,
            _ => return Err(bad()),
        };
        let cell = match parts[1] {
            "g" => CellRepr::Expression,
            "e_c" => CellRepr::Embedding,
            "e_ae" => CellRepr::Autoencoder,
            _ => return Err(bad()),
        };
        let classifier = match parts[2] {
            "lr" => ClassifierKind::Lr,
            "rf" => ClassifierKind::Rf,
            "dnn" => ClassifierKind::Dnn,
            _ => return Err(bad()),
        };
        Ok(Variant { drug, cell, classifier })
    }
}

impl TryFrom<String> for Variant {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Variant> for String {
    fn from(v: Variant) -> String {
        v.to_string()
    }
}

impl Variant {
    /// Directory-safe name, e.g. `e_d-e_c-rf`.
    pub fn slug(&self) -> String {
        self.to_string().replace(',', "-")
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub snn: SnnConfig,
    pub train: TrainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    pub min_group_size_cells: usize,
    pub min_group_size_drugs: usize,
    pub tsne: TsneConfig,
    pub rho_min: f64,
    pub p_max: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            min_group_size_cells: 15,
            min_group_size_drugs: 10,
            tsne: TsneConfig::default(),
            rho_min: 0.35,
            p_max: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub data: Option<DataPaths>,
    pub seed: u64,
    pub log_base: LogBase,
    pub group_rule: GroupRule,
    pub splits: SplitConfig,
    /// Pretraining pool: minimum unscreened lines per cancer.
    pub pool_min_per_cancer: usize,
    pub variants: Vec<Variant>,
    pub drug_encoder: EncoderConfig,
    pub cell_encoder: EncoderConfig,
    pub autoencoder: AutoencoderConfig,
    /// Z-score encoder inputs with statistics of the pretraining items.
    pub standardize_encoder_inputs: bool,
    pub logistic: LogisticConfig,
    pub forest: ForestConfig,
    pub dnn: DnnConfig,
    pub ks: Vec<usize>,
    /// Grid candidates are ranked by mean cross-validated P_cell at this k.
    pub grid_k: usize,
    /// Compare every other variant against this one; `None` compares all
    /// pairs.
    pub stats_baseline: Option<Variant>,
    pub analysis: AnalysisConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            seed: 0,
            log_base: LogBase::E,
            group_rule: GroupRule::Overlap,
            splits: SplitConfig::default(),
            pool_min_per_cancer: 10,
            variants: vec!["e_d,e_c,rf".parse().expect("valid variant")],
            drug_encoder: EncoderConfig::default(),
            cell_encoder: EncoderConfig::default(),
            autoencoder: AutoencoderConfig::default(),
            standardize_encoder_inputs: true,
            logistic: LogisticConfig::default(),
            forest: ForestConfig::default(),
            dnn: DnnConfig::default(),
            ks: vec![1, 2, 3, 4, 5, 10],
            grid_k: 1,
            stats_baseline: None,
            analysis: AnalysisConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parse a JSON config; relative data paths are taken relative to the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
        if let Some(d) = cfg.data.as_mut() {
            d.resolve(path.parent().unwrap_or(Path::new(".")));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Settings for the small generated datasets: the default minibatch of
    /// 512 would give one update per epoch on a few hundred pairs, a
    /// perplexity of 30 is infeasible for under 91 points, and a t-SNE step
    /// of 200 overshoots during exaggeration on so few points.
    pub fn for_synthetic(data_dir: &Path, seed: u64) -> Self {
        let mut cfg = RunConfig {
            data: Some(DataPaths::in_dir(data_dir)),
            seed,
            variants: ["e_d,e_c,rf", "f,g,rf"].iter().map(|v| v.parse().expect("valid variant")).collect(),
            ..Default::default()
        };
        for e in [&mut cfg.drug_encoder, &mut cfg.cell_encoder] {
            e.train.learning_rate = 0.2;
            e.train.batch_size = 32;
            e.train.patience = 30;
        }
        cfg.autoencoder.train.batch_size = 32;
        cfg.analysis.tsne.perplexity = 10.0;
        cfg.analysis.tsne.learning_rate = 50.0;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.ks.is_empty() || self.ks.contains(&0) {
            return Err(Error::InvalidInput("ks must be a non-empty list of positive integers".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::InvalidInput("at least one variant is required".into()));
        }
        Ok(())
    }

    pub fn data_paths(&self) -> Result<&DataPaths> {
        self.data
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("config has no `data` section with input paths".into()))
    }

    pub fn classifier_config(&self, kind: ClassifierKind) -> ClassifierConfig {
        match kind {
            ClassifierKind::Lr => ClassifierConfig::Logistic(self.logistic.clone()),
            ClassifierKind::Rf => ClassifierConfig::Forest(ForestConfig {
                seed: self.seed,
                ..self.forest.clone()
            }),
            ClassifierKind::Dnn => {
                let mut d = self.dnn.clone();
                d.train.seed = self.seed;
                ClassifierConfig::Dnn(d)
            }
        }
    }

    /// The config as echoed into artifacts: input paths reduced to file
    /// names so outputs do not depend on where the inputs live.
    pub fn echo(&self) -> serde_json::Value {
        let mut c = self.clone();
        if let Some(d) = c.data.as_mut() {
            for p in [&mut d.pairs, &mut d.drugs, &mut d.cells, &mut d.genes] {
                if let Some(name) = p.file_name() {
                    *p = PathBuf::from(name);
                }
            }
        }
        serde_json::to_value(&c).expect("config serializes")
    }
}

/// Provenance block written into every JSON artifact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
}

impl Meta {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        Self {
            tool: "cdr".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed: cfg.seed,
            config: cfg.echo(),
        }
    }
}

#[derive(Serialize)]
struct WithMeta<'a, T: Serialize> {
    meta: &'a Meta,
    #[serde(flatten)]
    body: &'a T,
}

pub fn write_json<T: Serialize>(path: &Path, meta: &Meta, body: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(&WithMeta { meta, body })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn require(path: &Path, hint: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{} not found; {hint}", path.display())))
    }
}

// ---------------------------------------------------------------------------
// Ingest
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct IngestBundle {
    pub dataset: Dataset,
    /// Unscreened lines for encoder pretraining.
    pub pool: Vec<CellLineRecord>,
    pub threshold: ThresholdSpec,
    pub splits: SplitPlan,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub n_pairs: usize,
    pub n_drugs: usize,
    pub n_cells: usize,
    pub n_pool_cells: usize,
    pub n_effective: usize,
    pub drops: BTreeMap<String, BTreeMap<String, usize>>,
    pub rejections: Vec<RowRejection>,
}

pub struct IngestOutput {
    pub bundle: IngestBundle,
    pub audit: AuditLog,
    pub summary: IngestSummary,
}

pub fn ingest(cfg: &RunConfig) -> Result<IngestOutput> {
    let paths = cfg.data_paths()?;
    let raw = data::parse_dataset(&paths.pairs, &paths.drugs, &paths.cells, &paths.genes)?;
    let (mut pairs, mut audit) = filter_and_dedup_pairs(&raw.pairs, &raw.drugs);
    score_pairs(&mut pairs, cfg.log_base)?;
    let cells = cell_records(&raw.expression, &raw.panel)?;
    let (mut dataset, cell_audit) = filter_cell_lines(pairs, &cells, &raw.drugs, &raw.panel, PUBLISHED_GATE_THRESHOLD)?;
    audit.extend(cell_audit);
    if dataset.pairs.len() < 2 {
        return Err(Error::InvalidInput("fewer than two pairs survive filtering".into()));
    }
    let ces: Vec<f64> = dataset.pairs.iter().filter_map(|p| p.ces).collect();
    let threshold = compute_threshold_with_base(&ces, cfg.log_base)?;
    label_pairs(&mut dataset.pairs, &threshold)?;
    let splits = make_splits(&dataset, &cfg.splits, cfg.seed)?;
    let screened: BTreeSet<String> = raw.pairs.iter().map(|p| p.cell_id.clone()).collect();
    let pool = pretraining_pool(&cells, &screened, cfg.pool_min_per_cancer);
    let summary = IngestSummary {
        n_pairs: dataset.pairs.len(),
        n_drugs: dataset.drugs.len(),
        n_cells: dataset.cells.len(),
        n_pool_cells: pool.len(),
        n_effective: dataset.pairs.iter().filter(|p| p.label == Some(1)).count(),
        drops: audit.counts(),
        rejections: raw.rejections,
    };
    Ok(IngestOutput {
        bundle: IngestBundle {
            dataset,
            pool,
            threshold,
            splits,
        },
        audit,
        summary,
    })
}

impl IngestBundle {
    /// Writes the filtered inputs in their original schemas (so the
    /// directory can be ingested again), plus labels, threshold and splits.
    pub fn write(&self, dir: &Path, meta: &Meta) -> Result<()> {
        create_dir(dir)?;
        let d = &self.dataset;
        data::write_pairs_csv(&dir.join("pairs.csv"), &d.pairs)?;
        data::write_labels_csv(&dir.join("labels.csv"), &d.pairs)?;
        data::write_drugs_csv(&dir.join("drugs.csv"), &d.drugs)?;
        let mut cells: Vec<CellLineRecord> = d.cells.iter().chain(&self.pool).cloned().collect();
        cells.sort_by(|a, b| a.cell_id.cmp(&b.cell_id));
        data::write_cells_csv(&dir.join("cells.csv"), &d.panel, &cells)?;
        data::write_gene_panel(&dir.join("genes.txt"), &d.panel)?;
        write_json(&dir.join("threshold.json"), meta, &self.threshold)?;
        write_json(&dir.join("splits.json"), meta, &self.splits)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        require(&dir.join("labels.csv"), "run `cdr ingest` first")?;
        let panel = GenePanel::from_file(&dir.join("genes.txt"))?;
        let (raw_pairs, rej) = data::read_pairs(&dir.join("pairs.csv"))?;
        let (drugs, rej2) = data::read_drugs(&dir.join("drugs.csv"))?;
        let (table, rej3) = data::read_expression(&dir.join("cells.csv"))?;
        if let Some(r) = rej.iter().chain(&rej2).chain(&rej3).next() {
            return Err(Error::InvalidInput(format!(
                "{}:{}: ingested bundle is corrupt: {}",
                r.file, r.line, r.reason
            )));
        }
        let (mut pairs, _) = filter_and_dedup_pairs(&raw_pairs, &drugs);
        data::read_labels_into(&dir.join("labels.csv"), &mut pairs)?;
        let all_cells = cell_records(&table, &panel)?;
        let screened: BTreeSet<&str> = pairs.iter().map(|p| p.cell_id.as_str()).collect();
        let (cells, pool): (Vec<_>, Vec<_>) = all_cells
            .into_iter()
            .partition(|c| screened.contains(c.cell_id.as_str()));
        let threshold: ThresholdSpec = read_json(&dir.join("threshold.json"))?;
        let splits: SplitPlan = read_json(&dir.join("splits.json"))?;
        Ok(Self {
            dataset: Dataset {
                drugs,
                cells,
                pairs,
                panel,
            },
            pool,
            threshold,
            splits,
        })
    }
}

// ---------------------------------------------------------------------------
// Pretraining
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Drug,
    Cell,
    Autoencoder,
}

impl Role {
    pub fn file_name(self) -> &'static str {
        match self {
            Role::Drug => "drug_encoder.json",
            Role::Cell => "cell_encoder.json",
            Role::Autoencoder => "autoencoder.json",
        }
    }
}

impl std::str::FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "drug" => Ok(Role::Drug),
            "cell" => Ok(Role::Cell),
            "ae" | "autoencoder" => Ok(Role::Autoencoder),
            other => Err(Error::InvalidInput(format!("unknown role `{other}`; use drug, cell or ae"))),
        }
    }
}

/// A trained encoder with what produced it. For the autoencoder `model` is
/// the encoder half.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderSnapshot {
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_rule: Option<GroupRule>,
    pub seed: u64,
    #[serde(flatten)]
    pub model: MlpModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_scaler: Option<Standardizer>,
    pub config: serde_json::Value,
    pub report: TrainReport,
    pub n_items: usize,
}

pub fn drug_matrix(drugs: &[DrugRecord]) -> Result<Matrix> {
    Matrix::from_rows(&drugs.iter().map(|d| d.fingerprint.to_f64()).collect::<Vec<_>>())
}

pub fn cell_matrix(cells: &[CellLineRecord]) -> Result<Matrix> {
    Matrix::from_rows(&cells.iter().map(|c| c.expression.clone()).collect::<Vec<_>>())
}

fn scaled(x: Matrix, cfg: &RunConfig) -> Result<(Matrix, Option<Standardizer>)> {
    if !cfg.standardize_encoder_inputs {
        return Ok((x, None));
    }
    let s = Standardizer::fit(&x)?;
    Ok((s.transform(&x)?, Some(s)))
}

pub fn pretrain(bundle: &IngestBundle, cfg: &RunConfig, role: Role) -> Result<EncoderSnapshot> {
    match role {
        Role::Drug => {
            let with_targets: Vec<DrugRecord> = bundle
                .dataset
                .drugs
                .iter()
                .filter(|d| !d.gene_targets.is_empty())
                .cloned()
                .collect();
            let assignment = assign_drug_groups(&with_targets, cfg.group_rule)?;
            let (x, input_scaler) = scaled(drug_matrix(&with_targets)?, cfg)?;
            let snn = SnnConfig {
                group_rule: cfg.group_rule,
                ..cfg.drug_encoder.snn.clone()
            };
            let train = TrainConfig {
                seed: cfg.seed,
                ..cfg.drug_encoder.train.clone()
            };
            let (model, report) = contrastive::pretrain_encoder(&x, &assignment, &snn, &train)?;
            Ok(EncoderSnapshot {
                role,
                group_rule: Some(cfg.group_rule),
                seed: cfg.seed,
                model,
                input_scaler,
                config: serde_json::to_value(EncoderConfig { snn, train })?,
                report,
                n_items: x.rows(),
            })
        }
        Role::Cell => {
            let assignment = assign_cell_groups(&bundle.pool)?;
            let (x, input_scaler) = scaled(cell_matrix(&bundle.pool)?, cfg)?;
            let train = TrainConfig {
                seed: cfg.seed,
                ..cfg.cell_encoder.train.clone()
            };
            let (model, report) = contrastive::pretrain_encoder(&x, &assignment, &cfg.cell_encoder.snn, &train)?;
            Ok(EncoderSnapshot {
                role,
                group_rule: None,
                seed: cfg.seed,
                model,
                input_scaler,
                config: serde_json::to_value(EncoderConfig {
                    snn: cfg.cell_encoder.snn.clone(),
                    train,
                })?,
                report,
                n_items: x.rows(),
            })
        }
        Role::Autoencoder => {
            if bundle.pool.is_empty() {
                return Err(Error::InvalidInput("the pretraining pool is empty".into()));
            }
            let (x, input_scaler) = scaled(cell_matrix(&bundle.pool)?, cfg)?;
            let mut ae = cfg.autoencoder.clone();
            ae.train.seed = cfg.seed;
            let (model, report) = neural::train_autoencoder(&x, &ae)?;
            Ok(EncoderSnapshot {
                role,
                group_rule: None,
                seed: cfg.seed,
                model: neural::encoder_half(&model)?,
                input_scaler,
                config: serde_json::to_value(&ae)?,
                report,
                n_items: x.rows(),
            })
        }
    }
}

/// A trained encoder plus the input scaling it was trained under.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    pub model: MlpModel,
    pub scaler: Option<Standardizer>,
}

impl Encoder {
    pub fn embed(&self, x: &Matrix) -> Result<Matrix> {
        match &self.scaler {
            Some(s) => contrastive::embed(&self.model, &s.transform(x)?),
            None => contrastive::embed(&self.model, x),
        }
    }
}

impl From<&EncoderSnapshot> for Encoder {
    fn from(s: &EncoderSnapshot) -> Self {
        Self {
            model: s.model.clone(),
            scaler: s.input_scaler.clone(),
        }
    }
}

/// Encoders found in a pretraining directory.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Encoders {
    pub drug: Option<Encoder>,
    pub cell: Option<Encoder>,
    pub autoencoder: Option<Encoder>,
}

impl Encoders {
    pub fn read(dir: &Path) -> Result<Self> {
        let load = |role: Role| -> Result<Option<Encoder>> {
            let p = dir.join(role.file_name());
            if !p.exists() {
                return Ok(None);
            }
            let snap: EncoderSnapshot = read_json(&p)?;
            if snap.role != role {
                return Err(Error::InvalidInput(format!("{} holds a {:?} encoder", p.display(), snap.role)));
            }
            snap.model.validate()?;
            Ok(Some(Encoder::from(&snap)))
        };
        Ok(Self {
            drug: load(Role::Drug)?,
            cell: load(Role::Cell)?,
            autoencoder: load(Role::Autoencoder)?,
        })
    }

    pub fn from_snapshots(snaps: &[EncoderSnapshot]) -> Self {
        let mut e = Encoders::default();
        for s in snaps {
            let slot = match s.role {
                Role::Drug => &mut e.drug,
                Role::Cell => &mut e.cell,
                Role::Autoencoder => &mut e.autoencoder,
            };
            *slot = Some(Encoder::from(s));
        }
        e
    }
}

// ---------------------------------------------------------------------------
// Features
// ---------------------------------------------------------------------------

/// Per-drug and per-cell feature vectors for one variant.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTables {
    pub drug: BTreeMap<String, Vec<f64>>,
    pub cell: BTreeMap<String, Vec<f64>>,
    pub layout: FeatureLayout,
}

fn missing_encoder(what: &str, role: Role) -> Error {
    let flag = match role {
        Role::Drug => "drug",
        Role::Cell => "cell",
        Role::Autoencoder => "ae",
    };
    Error::InvalidInput(format!(
        "variant needs the {what}, but no {} was found; run `cdr pretrain --role {flag}` first",
        role.file_name()
    ))
}

fn table(ids: impl Iterator<Item = String>, x: &Matrix, enc: Option<&Encoder>) -> Result<BTreeMap<String, Vec<f64>>> {
    let m = match enc {
        Some(e) => e.embed(x)?,
        None => x.clone(),
    };
    Ok(ids.zip(m.iter_rows().map(<[f64]>::to_vec)).collect())
}

/// Drug features for every drug and cell features for `cells`.
pub fn feature_tables(
    drugs: &[DrugRecord],
    cells: &[CellLineRecord],
    variant: Variant,
    encoders: &Encoders,
) -> Result<FeatureTables> {
    let dx = drug_matrix(drugs)?;
    let drug_enc = match variant.drug {
        DrugRepr::Fingerprint => None,
        DrugRepr::Embedding => Some(encoders.drug.as_ref().ok_or_else(|| missing_encoder("drug encoder", Role::Drug))?),
    };
    let cx = cell_matrix(cells)?;
    let cell_enc = match variant.cell {
        CellRepr::Expression => None,
        CellRepr::Embedding => Some(encoders.cell.as_ref().ok_or_else(|| missing_encoder("cell encoder", Role::Cell))?),
        CellRepr::Autoencoder => Some(
            encoders
                .autoencoder
                .as_ref()
                .ok_or_else(|| missing_encoder("autoencoder", Role::Autoencoder))?,
        ),
    };
    let drug = table(drugs.iter().map(|d| d.drug_id.clone()), &dx, drug_enc)?;
    let cell = table(cells.iter().map(|c| c.cell_id.clone()), &cx, cell_enc)?;
    let layout = FeatureLayout {
        drug_dim: drug.values().next().map_or(0, Vec::len),
        cell_dim: cell.values().next().map_or(0, Vec::len),
    };
    Ok(FeatureTables { drug, cell, layout })
}

/// Rows for every labeled pair whose cell line is in `cells`, in pair order.
pub struct Design {
    pub x: Matrix,
    pub y: Vec<u8>,
    pub keys: Vec<(String, String)>,
}

pub fn design(pairs: &[PairRecord], tables: &FeatureTables, cells: &BTreeSet<String>) -> Result<Design> {
    let mut data = Vec::new();
    let mut y = Vec::new();
    let mut keys = Vec::new();
    for p in pairs.iter().filter(|p| cells.contains(&p.cell_id)) {
        let d = tables
            .drug
            .get(&p.drug_id)
            .ok_or_else(|| Error::InvalidInput(format!("no features for drug {}", p.drug_id)))?;
        let c = tables
            .cell
            .get(&p.cell_id)
            .ok_or_else(|| Error::InvalidInput(format!("no features for cell line {}", p.cell_id)))?;
        data.extend_from_slice(d);
        data.extend_from_slice(c);
        y.push(
            p.label
                .ok_or_else(|| Error::InvalidInput(format!("pair {}/{} is unlabeled", p.drug_id, p.cell_id)))?,
        );
        keys.push((p.drug_id.clone(), p.cell_id.clone()));
    }
    Ok(Design {
        x: Matrix::from_vec(keys.len(), tables.layout.width(), data)?,
        y,
        keys,
    })
}

// ---------------------------------------------------------------------------
// Training and evaluation
// ---------------------------------------------------------------------------

pub fn rankings_for(model: &Classifier, d: &Design) -> Result<Vec<Ranking>> {
    let scores = model.predict_scores(&d.x)?;
    let mut by_cell: BTreeMap<&str, Vec<(String, f64)>> = BTreeMap::new();
    for ((drug, cell), s) in d.keys.iter().zip(scores) {
        by_cell.entry(cell.as_str()).or_default().push((drug.clone(), s));
    }
    by_cell.into_iter().map(|(c, s)| rank_drugs(c, &s)).collect()
}

fn effective_sets(d: &Design) -> BTreeMap<String, BTreeSet<String>> {
    let mut m: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for ((drug, cell), &y) in d.keys.iter().zip(&d.y) {
        let e = m.entry(cell.clone()).or_default();
        if y == 1 {
            e.insert(drug.clone());
        }
    }
    m
}

fn usable_ks(ks: &[usize], rankings: &[Ranking]) -> Vec<usize> {
    let min_len = rankings.iter().map(Ranking::len).min().unwrap_or(0);
    ks.iter().copied().filter(|&k| k <= min_len).collect()
}

pub fn evaluate(
    model: &Classifier,
    d: &Design,
    cancer_of: &BTreeMap<String, String>,
    ks: &[usize],
) -> Result<(Vec<Ranking>, MetricsReport)> {
    let rankings = rankings_for(model, d)?;
    let ks = usable_ks(ks, &rankings);
    if ks.is_empty() {
        return Err(Error::InvalidInput("every k exceeds the number of ranked drugs".into()));
    }
    let report = evaluate_rankings(&rankings, &effective_sets(d), cancer_of, &ks)?;
    Ok((rankings, report))
}

/// Cross-validated metric values: `metric name -> per-fold value`. Names
/// are `P_cell@k` and `P_cancer@k`.
pub type FoldMetrics = BTreeMap<String, Vec<f64>>;

pub struct CrossValidation {
    pub metrics: FoldMetrics,
    pub models: Vec<Classifier>,
}

pub fn cross_validate(
    bundle: &IngestBundle,
    tables: &FeatureTables,
    config: &ClassifierConfig,
    ks: &[usize],
) -> Result<CrossValidation> {
    let cancer_of = bundle.dataset.cancer_of();
    let mut metrics: FoldMetrics = BTreeMap::new();
    let mut models = Vec::new();
    for (i, held_out) in bundle.splits.folds.iter().enumerate() {
        if held_out.is_empty() {
            continue;
        }
        let train_cells: BTreeSet<String> = bundle
            .splits
            .folds
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .flat_map(|(_, f)| f.iter().cloned())
            .collect();
        let tr = design(&bundle.dataset.pairs, tables, &train_cells)?;
        let va = design(&bundle.dataset.pairs, tables, held_out)?;
        let model = train_classifier(&tr.x, &tr.y, &config.with_seed(fold_seed(config, i)))?;
        let (_, report) = evaluate(&model, &va, &cancer_of, ks)?;
        for (k, v) in &report.overall_cell {
            metrics.entry(format!("P_cell@{k}")).or_default().push(*v);
        }
        for (k, v) in &report.overall_cancer {
            metrics.entry(format!("P_cancer@{k}")).or_default().push(*v);
        }
        models.push(model);
    }
    if models.is_empty() {
        return Err(Error::InvalidInput("no non-empty fold to validate on".into()));
    }
    Ok(CrossValidation { metrics, models })
}

fn fold_seed(config: &ClassifierConfig, fold: usize) -> u64 {
    let base = match config {
        ClassifierConfig::Logistic(_) => 0,
        ClassifierConfig::Forest(f) => f.seed,
        ClassifierConfig::Dnn(d) => d.train.seed,
    };
    base.wrapping_add(fold as u64 + 1)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub per_fold: FoldMetrics,
    pub mean: BTreeMap<String, f64>,
}

impl From<&FoldMetrics> for CvSummary {
    fn from(m: &FoldMetrics) -> Self {
        Self {
            per_fold: m.clone(),
            mean: m.iter().map(|(k, v)| (k.clone(), mean(v))).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantMetrics {
    pub variant: Variant,
    pub classifier_config: ClassifierConfig,
    pub cv: CvSummary,
    pub trained_on_test: Option<MetricsReport>,
    pub novel_test: Option<MetricsReport>,
    /// Mean absolute coefficient and mean per-dimension variance across the
    /// fold models (logistic regression only).
    pub coefficient_stability: Option<(f64, f64)>,
    /// Mean per-drug score variance across trained-on test cell lines, over
    /// drugs scored above 0.5 somewhere.
    pub drug_score_variance: Option<f64>,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSnapshot {
    pub variant: Variant,
    pub layout: FeatureLayout,
    pub threshold: ThresholdSpec,
    pub classifier: Classifier,
}

pub struct VariantRun {
    pub metrics: VariantMetrics,
    pub model: ModelSnapshot,
    /// Rankings for the trained-on and novel test cell lines.
    pub rankings: Vec<Ranking>,
    pub grid: Option<Vec<RankedConfig<ClassifierConfig>>>,
}

fn grid_candidates(cfg: &RunConfig, kind: ClassifierKind) -> Vec<ClassifierConfig> {
    match kind {
        ClassifierKind::Lr => classifiers::logistic_grid().into_iter().map(ClassifierConfig::Logistic).collect(),
        ClassifierKind::Rf => classifiers::forest_grid(cfg.seed).into_iter().map(ClassifierConfig::Forest).collect(),
        ClassifierKind::Dnn => classifiers::dnn_grid(cfg.seed).into_iter().map(ClassifierConfig::Dnn).collect(),
    }
}

/// Cross-validate, train the final model on all folds and score both test
/// sets. With `grid`, the classifier's grid is searched first and the
/// top-ranked configuration is used.
pub fn train_eval_variant(
    bundle: &IngestBundle,
    encoders: &Encoders,
    cfg: &RunConfig,
    variant: Variant,
    grid: bool,
) -> Result<VariantRun> {
    let tables = feature_tables(&bundle.dataset.drugs, &bundle.dataset.cells, variant, encoders)?;
    let mut notes = Vec::new();
    let (config, grid_report) = if grid {
        let metric = format!("P_cell@{}", cfg.grid_k);
        let candidates = grid_candidates(cfg, variant.classifier);
        let ranked = grid_search(&candidates, |_, c| {
            let cv = cross_validate(bundle, &tables, c, &[cfg.grid_k])?;
            cv.metrics
                .get(&metric)
                .cloned()
                .ok_or_else(|| Error::InvalidInput(format!("grid metric {metric} is unavailable")))
        })?;
        (ranked[0].config.clone(), Some(ranked))
    } else {
        (cfg.classifier_config(variant.classifier), None)
    };
    let cv = cross_validate(bundle, &tables, &config, &cfg.ks)?;

    let cancer_of = bundle.dataset.cancer_of();
    let train_cells = bundle.splits.training_cells();
    let tr = design(&bundle.dataset.pairs, &tables, &train_cells)?;
    let model = train_classifier(&tr.x, &tr.y, &config)?;
    if let Classifier::Logistic(m) = &model {
        if m.single_class_warning {
            notes.push("training labels hold a single class; logistic intercept diverges".into());
        }
    }
    let mut rankings = Vec::new();
    let mut score_set = |cells: &BTreeSet<String>, name: &str| -> Result<Option<MetricsReport>> {
        if cells.is_empty() {
            notes.push(format!("{name} set is empty"));
            return Ok(None);
        }
        let d = design(&bundle.dataset.pairs, &tables, cells)?;
        let (r, report) = evaluate(&model, &d, &cancer_of, &cfg.ks)?;
        rankings.extend(r);
        Ok(Some(report))
    };
    let trained_on_test = score_set(&bundle.splits.trained_on_test, "trained-on test")?;
    let novel_test = score_set(&bundle.splits.novel_test, "novel test")?;
    rankings.sort_by(|a, b| a.cell_id.cmp(&b.cell_id));

    let coefficient_stability = match variant.classifier {
        ClassifierKind::Lr if cv.models.len() >= 2 => {
            let ms: Vec<_> = cv
                .models
                .iter()
                .filter_map(|m| match m {
                    Classifier::Logistic(l) => Some(l.clone()),
                    _ => None,
                })
                .collect();
            Some(coefficient_stability(&ms)?)
        }
        _ => None,
    };
    let drug_score_variance = if bundle.splits.trained_on_test.is_empty() {
        None
    } else {
        let d = design(&bundle.dataset.pairs, &tables, &bundle.splits.trained_on_test)?;
        let ids: Vec<String> = d.keys.iter().map(|(drug, _)| drug.clone()).collect();
        Some(drug_score_variance(&ids, &model.predict_scores(&d.x)?)?)
    };

    Ok(VariantRun {
        metrics: VariantMetrics {
            variant,
            classifier_config: config,
            cv: CvSummary::from(&cv.metrics),
            trained_on_test,
            novel_test,
            coefficient_stability,
            drug_score_variance,
            notes,
        },
        model: ModelSnapshot {
            variant,
            layout: tables.layout,
            threshold: bundle.threshold.clone(),
            classifier: model,
        },
        rankings,
        grid: grid_report,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatRow {
    pub variant_a: String,
    pub variant_b: String,
    pub metric: String,
    pub mean_a: f64,
    pub mean_b: f64,
    #[serde(flatten)]
    pub test: TTestResult,
}

/// Bonferroni-corrected t-tests on per-fold values, per metric. With a
/// baseline every other variant is compared against it; otherwise every
/// pair is compared. The correction counts comparisons per metric.
pub fn compare_variants(runs: &[(Variant, CvSummary)], baseline: Option<Variant>) -> Result<Vec<StatRow>> {
    let mut pairs = Vec::new();
    match baseline {
        Some(b) => {
            let bi = runs
                .iter()
                .position(|(v, _)| *v == b)
                .ok_or_else(|| Error::InvalidInput(format!("baseline variant {b} was not run")))?;
            for (i, _) in runs.iter().enumerate().filter(|(i, _)| *i != bi) {
                pairs.push((i, bi));
            }
        }
        None => {
            for i in 0..runs.len() {
                for j in i + 1..runs.len() {
                    pairs.push((i, j));
                }
            }
        }
    }
    let mut rows = Vec::new();
    for &(i, j) in &pairs {
        let (va, a) = &runs[i];
        let (vb, b) = &runs[j];
        for (metric, xa) in &a.per_fold {
            let Some(xb) = b.per_fold.get(metric) else { continue };
            if xa.len() < 2 || xb.len() < 2 {
                continue;
            }
            rows.push(StatRow {
                variant_a: va.to_string(),
                variant_b: vb.to_string(),
                metric: metric.clone(),
                mean_a: mean(xa),
                mean_b: mean(xb),
                test: ttest_bonferroni(xa, xb, pairs.len())?,
            });
        }
    }
    Ok(rows)
}

pub fn write_rankings_csv(path: &Path, rankings: &[Ranking]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["cell_id", "drug_id", "score", "rank"])?;
    for r in rankings {
        for (i, (drug, score)) in r.entries.iter().enumerate() {
            w.write_record([r.cell_id.as_str(), drug, &score.to_string(), &(i + 1).to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_rankings_csv(path: &Path) -> Result<Vec<Ranking>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::InvalidInput(format!("cannot read {}; run `cdr train-eval` first", path.display())),
        _ => Error::from(e),
    })?;
    let mut by_cell: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let score: f64 = rec[2].parse().map_err(|_| Error::Row {
            path: path.to_path_buf(),
            line,
            message: format!("score is not numeric: `{}`", &rec[2]),
        })?;
        by_cell.entry(rec[0].to_string()).or_default().push((rec[1].to_string(), score));
    }
    by_cell.iter().map(|(c, s)| rank_drugs(c, s)).collect()
}

pub fn write_stats_csv(path: &Path, rows: &[StatRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "variant_a", "variant_b", "metric", "mean_a", "mean_b", "t", "df", "p", "p_adj", "n_tests", "stars",
    ])?;
    for r in rows {
        w.write_record([
            r.variant_a.as_str(),
            &r.variant_b,
            &r.metric,
            &r.mean_a.to_string(),
            &r.mean_b.to_string(),
            &r.test.t_stat.to_string(),
            &r.test.df.to_string(),
            &r.test.p.to_string(),
            &r.test.p_adjusted.to_string(),
            &r.test.n_tests.to_string(),
            r.test.stars(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_grid_csv(path: &Path, ranked: &[RankedConfig<ClassifierConfig>], metric: &str) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let n_folds = ranked.iter().map(|r| r.fold_values.len()).max().unwrap_or(0);
    let mut header = vec!["rank".to_string(), "index".to_string(), "config".to_string(), format!("mean_{metric}")];
    header.extend((0..n_folds).map(|i| format!("fold{i}")));
    w.write_record(&header)?;
    for r in ranked {
        let mut rec = vec![
            r.rank.to_string(),
            r.index.to_string(),
            serde_json::to_string(&r.config)?,
            r.mean.to_string(),
        ];
        rec.extend(r.fold_values.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Analyses
// ---------------------------------------------------------------------------

pub fn fda_priority(bundle: &IngestBundle, rankings: &[Ranking]) -> Result<PriorityReport> {
    let indications: BTreeMap<String, BTreeSet<String>> = bundle
        .dataset
        .drugs
        .iter()
        .map(|d| (d.drug_id.clone(), d.indications.clone()))
        .collect();
    fda_priority_analysis(rankings, &indications, &bundle.dataset.cancer_of())
}

pub fn write_priority_csvs(dir: &Path, report: &PriorityReport) -> Result<()> {
    let p = dir.join("fda_priority.csv");
    let mut w = csv::Writer::from_path(&p)?;
    w.write_record([
        "cancer_type", "n_cells", "n_approved", "mean_rank", "best_rank", "top_drug", "top_drug_pct", "top_drug_rank_std",
    ])?;
    for c in &report.per_cancer {
        w.write_record([
            c.cancer_type.as_str(),
            &c.n_cells.to_string(),
            &c.n_approved.to_string(),
            &c.mean_mean_rank.to_string(),
            &c.mean_best_rank.to_string(),
            &c.top_drug,
            &format!("{:.1}", c.top_drug_pct),
            &c.top_drug_rank_std.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&p, e))?;
    let p = dir.join("fda_priority_cells.csv");
    let mut w = csv::Writer::from_path(&p)?;
    w.write_record(["cell_id", "cancer_type", "mean_rank", "best_rank", "top_drug", "approved_ranks"])?;
    for c in &report.per_cell {
        let ranks: Vec<String> = c.approved_ranks.iter().map(|(d, r)| format!("{d}:{r}")).collect();
        w.write_record([
            c.cell_id.as_str(),
            &c.cancer_type,
            &c.mean_rank.to_string(),
            &c.best_rank.to_string(),
            &c.top_drug,
            &ranks.join(";"),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&p, e))?;
    Ok(())
}

/// Spearman screen of expression against one drug's rank across the cell
/// lines of one cancer. `drug` matches an id or a name.
pub fn gene_correlation(
    bundle: &IngestBundle,
    rankings: &[Ranking],
    drug: &str,
    cancer: &str,
    rho_min: f64,
    p_max: f64,
) -> Result<CorrelationScreen> {
    let d = bundle
        .dataset
        .drugs
        .iter()
        .find(|d| d.drug_id == drug || d.name.eq_ignore_ascii_case(drug))
        .ok_or_else(|| Error::InvalidInput(format!("drug `{drug}` not in the dataset")))?;
    let by_id: BTreeMap<&str, &CellLineRecord> = bundle.dataset.cells.iter().map(|c| (c.cell_id.as_str(), c)).collect();
    let mut ranks = Vec::new();
    let mut rows = Vec::new();
    for r in rankings {
        let Some(cell) = by_id.get(r.cell_id.as_str()) else { continue };
        if !cell.cancer_type.eq_ignore_ascii_case(cancer) {
            continue;
        }
        if let Some(k) = r.ranks().get(d.drug_id.as_str()) {
            ranks.push(*k as f64);
            rows.push(cell.expression.clone());
        }
    }
    if ranks.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "{} ranked cell lines of {cancer} include {drug}; at least 3 are needed",
            ranks.len()
        )));
    }
    let expression = Matrix::from_rows(&rows)?;
    priority_correlation_screen(&ranks, bundle.dataset.panel.genes(), &expression, rho_min, p_max)
}

pub fn write_correlation_csv(path: &Path, screen: &CorrelationScreen) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["gene", "rho", "p"])?;
    for g in &screen.hits {
        w.write_record([g.gene.as_str(), &g.rho.to_string(), &g.p.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    Cells,
    Drugs,
}

impl std::str::FromStr for Space {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cells" | "cell" => Ok(Space::Cells),
            "drugs" | "drug" => Ok(Space::Drugs),
            other => Err(Error::InvalidInput(format!("unknown space `{other}`; use cells or drugs"))),
        }
    }
}

/// Representations of one space: `raw` first, then every available learned
/// one. Cells are grouped by cancer type, drugs by MOA (drugs without one
/// are left out).
pub fn representations(bundle: &IngestBundle, encoders: &Encoders, space: Space) -> Result<Vec<(String, EmbeddingSet)>> {
    let mut out = Vec::new();
    match space {
        Space::Cells => {
            let cells = &bundle.dataset.cells;
            let ids: Vec<String> = cells.iter().map(|c| c.cell_id.clone()).collect();
            let groups: Vec<String> = cells.iter().map(|c| c.cancer_type.clone()).collect();
            let x = cell_matrix(cells)?;
            out.push(("g".to_string(), EmbeddingSet::new(ids.clone(), groups.clone(), x.clone())?));
            if let Some(e) = &encoders.cell {
                out.push(("e_c".into(), EmbeddingSet::new(ids.clone(), groups.clone(), e.embed(&x)?)?));
            }
            if let Some(e) = &encoders.autoencoder {
                out.push(("e_ae".into(), EmbeddingSet::new(ids, groups, e.embed(&x)?)?));
            }
        }
        Space::Drugs => {
            let drugs: Vec<DrugRecord> = bundle.dataset.drugs.iter().filter(|d| d.moa.is_some()).cloned().collect();
            let ids: Vec<String> = drugs.iter().map(|d| d.drug_id.clone()).collect();
            let groups: Vec<String> = drugs.iter().map(|d| d.moa.clone().unwrap_or_default()).collect();
            let x = drug_matrix(&drugs)?;
            out.push(("f".to_string(), EmbeddingSet::new(ids.clone(), groups.clone(), x.clone())?));
            if let Some(e) = &encoders.drug {
                out.push(("e_d".into(), EmbeddingSet::new(ids, groups, e.embed(&x)?)?));
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpressivenessReport {
    pub space: Space,
    pub min_group_size: usize,
    pub similarities: BTreeMap<String, SimilarityReport>,
    pub separability: BTreeMap<String, SeparabilityReport>,
    /// Learned representation vs raw input, on per-group ratios.
    pub comparisons: BTreeMap<String, TTestResult>,
    pub test: String,
}

pub fn expressiveness_report(
    reps: &[(String, EmbeddingSet)],
    space: Space,
    min_group_size: usize,
) -> Result<ExpressivenessReport> {
    let mut similarities = BTreeMap::new();
    let mut separability = BTreeMap::new();
    for (name, set) in reps {
        let set = set.filter_min_group_size(min_group_size);
        let sims = expressiveness::group_similarities(&set)?;
        separability.insert(name.clone(), expressiveness::separability_from(&sims)?);
        similarities.insert(name.clone(), sims);
    }
    let mut comparisons = BTreeMap::new();
    if let Some((raw_name, _)) = reps.first() {
        let n_tests = reps.len().saturating_sub(1).max(1);
        for (name, _) in &reps[1..] {
            let a = &separability[name];
            let b = &separability[raw_name];
            if a.ratios.len() >= 2 && b.ratios.len() >= 2 {
                comparisons.insert(
                    format!("{name}_vs_{raw_name}"),
                    expressiveness::compare_separability(a, b, n_tests)?,
                );
            }
        }
    }
    Ok(ExpressivenessReport {
        space,
        min_group_size,
        similarities,
        separability,
        comparisons,
        test: "pooled two-sample t-test on per-group separability ratios, Bonferroni-corrected".into(),
    })
}

pub struct TsneOutput {
    pub set: EmbeddingSet,
    pub result: TsneResult,
    pub purity: f64,
}

pub fn tsne_projection(set: &EmbeddingSet, min_group_size: usize, config: &TsneConfig) -> Result<TsneOutput> {
    let set = set.filter_min_group_size(min_group_size);
    let result = expressiveness::tsne(&set.vectors, config)?;
    let purity = expressiveness::centroid_purity(&result.coords, &set.groups);
    Ok(TsneOutput { set, result, purity })
}

pub fn write_tsne_csv(path: &Path, out: &TsneOutput) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["item_id", "group", "x", "y"])?;
    for (i, (id, g)) in out.set.item_ids.iter().zip(&out.set.groups).enumerate() {
        w.write_record([
            id.as_str(),
            g,
            &out.result.coords.get(i, 0).to_string(),
            &out.result.coords.get(i, 1).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Importance for a trained model. The network path permutes columns of
/// the trained-on test design (training cells when that set is empty).
pub fn model_importance(
    bundle: &IngestBundle,
    encoders: &Encoders,
    snapshot: &ModelSnapshot,
    seed: u64,
) -> Result<FeatureImportance> {
    let tables = feature_tables(&bundle.dataset.drugs, &bundle.dataset.cells, snapshot.variant, encoders)?;
    if tables.layout != snapshot.layout {
        return Err(Error::InvalidInput(format!(
            "model expects {:?} features but the encoders produce {:?}",
            snapshot.layout, tables.layout
        )));
    }
    let cells = if bundle.splits.trained_on_test.is_empty() {
        bundle.splits.training_cells()
    } else {
        bundle.splits.trained_on_test.clone()
    };
    let d = design(&bundle.dataset.pairs, &tables, &cells)?;
    feature_importance(&snapshot.classifier, snapshot.layout, Some((&d.x, &d.y)), seed)
}

pub fn feature_names(bundle: &IngestBundle, variant: Variant, layout: FeatureLayout) -> Vec<String> {
    let mut names: Vec<String> = match variant.drug {
        DrugRepr::Fingerprint => (0..layout.drug_dim).map(|i| format!("f{i}")).collect(),
        DrugRepr::Embedding => (0..layout.drug_dim).map(|i| format!("e_d{i}")).collect(),
    };
    match variant.cell {
        CellRepr::Expression => names.extend(bundle.dataset.panel.genes().iter().cloned()),
        CellRepr::Embedding => names.extend((0..layout.cell_dim).map(|i| format!("e_c{i}"))),
        CellRepr::Autoencoder => names.extend((0..layout.cell_dim).map(|i| format!("e_ae{i}"))),
    }
    names
}

pub fn write_importance_csv(path: &Path, names: &[String], layout: FeatureLayout, imp: &FeatureImportance) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["feature", "source", "importance"])?;
    for (j, (name, v)) in names.iter().zip(&imp.values).enumerate() {
        w.write_record([name.as_str(), if layout.is_drug(j) { "drug" } else { "cell" }, &v.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
