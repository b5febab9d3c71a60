//! Planted-structure dataset generator.
//!
//! Drugs fall into groups (shared gene target, shared fingerprint motif),
//! cell lines into cancers (shared expression shift over a block of genes).
//! A cell line responds to a drug iff the drug's group is the one its cancer
//! is sensitive to, up to a small share of flipped outcomes. The raw
//! features carry the group signal only weakly per coordinate, spread over
//! many coordinates, so a learned projection has something to find.
//!
//! Besides the clean rows the generator writes a handful of rows that each
//! ingest filter must remove, so the audit log has something in every
//! bucket.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{
    write_cells_csv, write_drugs_csv, write_gene_panel, CellLineRecord, DrugRecord, Fingerprint, GenePanel, RawPair,
    FINGERPRINT_BITS, PAIRS_HEADER, PREFERRED_SCREEN,
};
use crate::{Error, Result};

pub const CANCER_NAMES: [&str; 8] = ["Breast", "Lung", "Skin", "Colon", "Liver", "Kidney", "Ovary", "Bone"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_drug_groups: usize,
    pub drugs_per_group: usize,
    pub n_cancers: usize,
    /// Screened cell lines per cancer.
    pub cells_per_cancer: usize,
    /// Screened cell lines of one extra cancer, small enough to land in the
    /// novel test set. Zero disables it.
    pub novel_cancer_cells: usize,
    /// Unscreened cell lines per cancer, used for encoder pretraining.
    pub pool_cells_per_cancer: usize,
    pub n_genes: usize,
    /// Genes shifted per cancer; blocks are disjoint.
    pub signal_genes_per_cancer: usize,
    /// Expression shift in units of the per-gene noise standard deviation.
    pub expression_shift: f64,
    /// Fingerprint bits in each group's motif; blocks are disjoint.
    pub motif_bits: usize,
    pub motif_on: f64,
    pub background_on: f64,
    pub effective_ces: f64,
    pub ineffective_ces: f64,
    pub ces_jitter: f64,
    pub label_noise: f64,
    /// Add rows that the ingest filters must drop.
    pub junk_rows: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_drug_groups: 3,
            drugs_per_group: 20,
            n_cancers: 4,
            cells_per_cancer: 20,
            novel_cancer_cells: 0,
            pool_cells_per_cancer: 30,
            n_genes: 96,
            signal_genes_per_cancer: 16,
            expression_shift: 1.0,
            motif_bits: 32,
            motif_on: 0.35,
            background_on: 0.2,
            effective_ces: 10.0,
            ineffective_ces: 0.0,
            ces_jitter: 0.1,
            label_noise: 0.05,
            junk_rows: true,
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(format!("synthetic config: {m}")));
        if self.n_drug_groups == 0 || self.drugs_per_group == 0 || self.n_cancers == 0 || self.cells_per_cancer == 0 {
            return bad("group and cancer counts must be positive".into());
        }
        if self.n_cancers + usize::from(self.novel_cancer_cells > 0) > CANCER_NAMES.len() {
            return bad(format!("at most {} cancers are supported", CANCER_NAMES.len()));
        }
        if self.signal_genes_per_cancer * (self.n_cancers + 1) > self.n_genes {
            return bad("signal gene blocks do not fit in the panel".into());
        }
        if self.motif_bits * self.n_drug_groups > FINGERPRINT_BITS {
            return bad("fingerprint motifs do not fit".into());
        }
        if !(0.0..=1.0).contains(&self.label_noise) {
            return bad("label_noise must be in [0, 1]".into());
        }
        Ok(())
    }

    pub fn cancers(&self) -> Vec<String> {
        CANCER_NAMES[..self.n_cancers].iter().map(|s| s.to_string()).collect()
    }

    pub fn novel_cancer(&self) -> Option<String> {
        (self.novel_cancer_cells > 0).then(|| CANCER_NAMES[self.n_cancers].to_string())
    }

    /// The drug group each cancer responds to.
    pub fn sensitive_group(&self, cancer_index: usize) -> usize {
        cancer_index % self.n_drug_groups
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthDataset {
    pub config: SynthConfig,
    pub panel: GenePanel,
    pub drugs: Vec<DrugRecord>,
    /// Every cell line with an expression profile: screened, pool and junk.
    pub cells: Vec<CellLineRecord>,
    pub pairs: Vec<RawPair>,
    /// Drug id to planted group.
    pub drug_group: BTreeMap<String, usize>,
    /// Screened cell line ids.
    pub screened_cells: BTreeSet<String>,
    /// Extra lines appended verbatim to the written files, after the clean
    /// rows: `(file name, line)`.
    pub raw_lines: Vec<(&'static str, String)>,
}

fn solve_ic50(auc: f64, lower_limit: f64, target_ces: f64) -> Option<f64> {
    let denom = 2.0 * auc * lower_limit * target_ces.exp() - 1.0;
    (denom > 0.0).then(|| (auc + lower_limit) / denom)
}

/// Curve summaries whose score is `target_ces`: AUC and lower limit are
/// drawn in ranges typical for the response level, IC50 is solved for.
fn measurements(target_ces: f64, effective: bool, rng: &mut crate::Rng) -> (f64, f64, f64) {
    loop {
        let (auc, ll) = if effective {
            (rng.random_range(0.3..0.6), rng.random_range(0.05..0.2))
        } else {
            (rng.random_range(0.85..1.0), rng.random_range(0.8..1.0))
        };
        if let Some(ic50) = solve_ic50(auc, ll, target_ces) {
            return (auc, ll, ic50);
        }
    }
}

pub fn generate(config: &SynthConfig) -> Result<SynthDataset> {
    config.validate()?;
    let mut rng = crate::seeded_rng(config.seed, 0x5e7);
    let genes: Vec<String> = (0..config.n_genes).map(|i| format!("SG{i:03}")).collect();
    let panel = GenePanel::new(genes)?;
    let cancers = config.cancers();

    // Drugs.
    let mut drugs = Vec::new();
    let mut drug_group = BTreeMap::new();
    for g in 0..config.n_drug_groups {
        let approved_for: BTreeSet<String> = cancers
            .iter()
            .enumerate()
            .filter(|(c, _)| config.sensitive_group(*c) == g)
            .map(|(_, name)| name.clone())
            .collect();
        for k in 0..config.drugs_per_group {
            let id = format!("D{:03}", g * config.drugs_per_group + k);
            let bits: Vec<u8> = (0..FINGERPRINT_BITS)
                .map(|b| {
                    let in_motif = b / config.motif_bits == g && b < config.motif_bits * config.n_drug_groups;
                    let p = if in_motif { config.motif_on } else { config.background_on };
                    u8::from(rng.random_bool(p))
                })
                .collect();
            let mut targets = BTreeSet::from([format!("TGT{g}")]);
            if k % 4 == 1 {
                targets.insert(format!("TGT{g}B"));
            }
            drugs.push(DrugRecord {
                drug_id: id.clone(),
                name: format!("drug-{g}-{k:02}"),
                fingerprint: Fingerprint::from_bits(bits)?,
                gene_targets: targets,
                moa: Some(format!("MOA{g}")),
                withdrawn: false,
                indications: if k < 3 { approved_for.clone() } else { BTreeSet::new() },
            });
            drug_group.insert(id, g);
        }
    }

    // Cell lines.
    let noise = Normal::new(0.0, 1.0).expect("valid parameters");
    let block = config.signal_genes_per_cancer;
    let profile = |cancer_index: usize, rng: &mut crate::Rng| -> Vec<f64> {
        (0..config.n_genes)
            .map(|j| {
                let shifted = j / block == cancer_index && j < block * (config.n_cancers + 1);
                let shift = if shifted { config.expression_shift } else { 0.0 };
                let z: f64 = noise.sample(rng);
                (5.0 + shift + z).max(0.0)
            })
            .collect()
    };
    let mut cells = Vec::new();
    let mut screened_cells = BTreeSet::new();
    let mut screened: Vec<(String, usize)> = Vec::new();
    for (c, name) in cancers.iter().enumerate() {
        for i in 0..config.cells_per_cancer {
            let id = format!("C{c}{i:03}");
            cells.push(CellLineRecord {
                cell_id: id.clone(),
                cancer_type: name.clone(),
                expression: profile(c, &mut rng),
            });
            screened.push((id, c));
        }
        for i in 0..config.pool_cells_per_cancer {
            cells.push(CellLineRecord {
                cell_id: format!("P{c}{i:03}"),
                cancer_type: name.clone(),
                expression: profile(c, &mut rng),
            });
        }
    }
    if let Some(name) = config.novel_cancer() {
        let c = config.n_cancers;
        for i in 0..config.novel_cancer_cells {
            let id = format!("N{c}{i:03}");
            cells.push(CellLineRecord {
                cell_id: id.clone(),
                cancer_type: name.clone(),
                expression: profile(c, &mut rng),
            });
            screened.push((id, c));
        }
    }

    // Screen outcomes.
    let jitter = Normal::new(0.0, config.ces_jitter / 2.0).expect("valid parameters");
    let mut pairs = Vec::new();
    for (cell_id, c) in &screened {
        screened_cells.insert(cell_id.clone());
        for d in &drugs {
            let planted = drug_group[&d.drug_id] == config.sensitive_group(*c);
            let effective = planted != rng.random_bool(config.label_noise);
            let base = if effective { config.effective_ces } else { config.ineffective_ces };
            let j: f64 = jitter.sample(&mut rng);
            let target = base + j.clamp(-config.ces_jitter, config.ces_jitter);
            let (auc, ll, ic50) = measurements(target, effective, &mut rng);
            pairs.push(RawPair {
                drug_id: d.drug_id.clone(),
                cell_id: cell_id.clone(),
                auc: Some(auc),
                lower_limit: Some(ll),
                ic50: Some(ic50),
                r_squared: Some(rng.random_range(0.75..0.99)),
                screen_id: PREFERRED_SCREEN.to_string(),
                line: 0,
            });
        }
    }

    let mut raw_lines = Vec::new();
    if config.junk_rows {
        add_junk(&mut drugs, &mut cells, &mut pairs, &mut raw_lines, &panel, &mut rng)?;
    }
    for (i, p) in pairs.iter_mut().enumerate() {
        p.line = i as u64 + 2;
    }

    Ok(SynthDataset {
        config: config.clone(),
        panel,
        drugs,
        cells,
        pairs,
        drug_group,
        screened_cells,
        raw_lines,
    })
}

/// One or more rows per ingest filter.
fn add_junk(
    drugs: &mut Vec<DrugRecord>,
    cells: &mut Vec<CellLineRecord>,
    pairs: &mut Vec<RawPair>,
    raw_lines: &mut Vec<(&'static str, String)>,
    panel: &GenePanel,
    rng: &mut crate::Rng,
) -> Result<()> {
    let template = pairs[0].clone();
    let cell = template.cell_id.clone();
    let effective_drug = pairs
        .iter()
        .find(|p| p.auc.is_some_and(|a| a < 0.7))
        .map(|p| p.drug_id.clone())
        .unwrap_or_else(|| template.drug_id.clone());

    let withdrawn_bits: Vec<u8> = (0..FINGERPRINT_BITS).map(|_| u8::from(rng.random_bool(0.2))).collect();
    drugs.push(DrugRecord {
        drug_id: "DW01".into(),
        name: "withdrawn-drug".into(),
        fingerprint: Fingerprint::from_bits(withdrawn_bits)?,
        gene_targets: BTreeSet::from(["TGT0".to_string()]),
        moa: None,
        withdrawn: true,
        indications: BTreeSet::new(),
    });

    let with = |drug: &str, cell: &str, f: &dyn Fn(&mut RawPair)| {
        let mut p = template.clone();
        p.drug_id = drug.into();
        p.cell_id = cell.into();
        f(&mut p);
        p
    };
    // Duplicate measurements of an existing pair: both must lose to the
    // preferred screen already present.
    pairs.push(with(&template.drug_id, &cell, &|p| {
        p.screen_id = "HTS002".into();
        p.r_squared = Some(0.99);
    }));
    pairs.push(with(&effective_drug, &cell, &|p| {
        p.screen_id = "HTS001".into();
        p.r_squared = Some(0.9);
    }));
    pairs.push(with(&template.drug_id, "C9LOWR2", &|p| p.r_squared = Some(0.69)));
    pairs.push(with(&template.drug_id, "C9NEGLL", &|p| p.lower_limit = Some(-0.01)));
    pairs.push(with(&template.drug_id, "C9MISS", &|p| p.ic50 = None));
    pairs.push(with("DW01", &cell, &|_| {}));
    pairs.push(with("DUNKNOWN", &cell, &|_| {}));

    // A screened line of unknown cancer type, one whose drugs are all weak,
    // and one without an expression profile.
    let zeros = vec![5.0; panel.len()];
    cells.push(CellLineRecord {
        cell_id: "X9UNK".into(),
        cancer_type: "Unknown".into(),
        expression: zeros.clone(),
    });
    cells.push(CellLineRecord {
        cell_id: "X9WEAK".into(),
        cancer_type: CANCER_NAMES[0].into(),
        expression: zeros,
    });
    let screened_drugs: Vec<String> = pairs
        .iter()
        .filter(|p| p.cell_id == cell)
        .map(|p| p.drug_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .filter(|d| d.starts_with("D0") || d.starts_with("D1"))
        .collect();
    for d in &screened_drugs {
        let source = pairs
            .iter()
            .find(|p| p.cell_id == cell && &p.drug_id == d)
            .cloned()
            .expect("screened pair");
        for (target, weak) in [("X9UNK", false), ("X9WEAK", true), ("X9NOEXPR", false)] {
            let mut p = source.clone();
            p.cell_id = target.into();
            if weak {
                p.auc = Some(0.95);
                p.lower_limit = Some(0.9);
                p.ic50 = solve_ic50(0.95, 0.9, 0.0);
            }
            pairs.push(p);
        }
    }

    raw_lines.push((
        "pairs.csv",
        format!("{},{},0.5,0.1,NA,0.9,{}", template.drug_id, cell, PREFERRED_SCREEN),
    ));
    raw_lines.push(("drugs.csv", "DBAD,bad-fingerprint,0101,TGT0,,0,".to_string()));
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl SynthDataset {
    /// Write `pairs.csv`, `drugs.csv`, `cells.csv` and `genes.txt` into
    /// `dir`. Pair rows are shuffled so the file order carries no signal.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let pairs_path = dir.join("pairs.csv");
        let mut order: Vec<usize> = (0..self.pairs.len()).collect();
        order.shuffle(&mut crate::seeded_rng(self.config.seed, 0x5e8));
        {
            let mut w = csv::Writer::from_path(&pairs_path)?;
            w.write_record(PAIRS_HEADER)?;
            for &i in &order {
                let p = &self.pairs[i];
                w.write_record([
                    p.drug_id.as_str(),
                    &p.cell_id,
                    &fmt_opt(p.auc),
                    &fmt_opt(p.lower_limit),
                    &fmt_opt(p.ic50),
                    &fmt_opt(p.r_squared),
                    &p.screen_id,
                ])?;
            }
            w.flush().map_err(|e| Error::io(&pairs_path, e))?;
        }
        write_drugs_csv(&dir.join("drugs.csv"), &self.drugs)?;
        write_cells_csv(&dir.join("cells.csv"), &self.panel, &self.cells)?;
        write_gene_panel(&dir.join("genes.txt"), &self.panel)?;
        for (file, line) in &self.raw_lines {
            let path = dir.join(file);
            let mut f = OpenOptions::new().append(true).open(&path).map_err(|e| Error::io(&path, e))?;
            writeln!(f, "{line}").map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}
