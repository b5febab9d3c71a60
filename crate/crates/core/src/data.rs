//! Screen, drug and expression tables: parsing, quality filters,
//! de-duplication, gene-panel projection and the cancer-aware split.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::scoring::{self, LogBase, ThresholdSpec};
use crate::{Error, Result};

pub const FINGERPRINT_BITS: usize = 256;
pub const PAIRS_HEADER: [&str; 7] = [
    "drug_id",
    "cell_id",
    "auc",
    "lower_limit",
    "ic50",
    "r_squared",
    "screen_id",
];
pub const DRUGS_HEADER: [&str; 7] = [
    "drug_id",
    "name",
    "fingerprint",
    "gene_targets",
    "moa",
    "withdrawn",
    "indications",
];
/// Preferred screen when the same pair was measured more than once.
pub const PREFERRED_SCREEN: &str = "MTS010";
pub const MIN_R_SQUARED: f64 = 0.7;

const DEFAULT_PANEL: &str = include_str!("../assets/cancer_gene_panel.txt");

/// Fixed-width binary molecular fingerprint.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Fingerprint(Vec<u8>);

impl Fingerprint {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.len() != FINGERPRINT_BITS {
            return Err(Error::InvalidInput(format!(
                "fingerprint must have {FINGERPRINT_BITS} characters, found {}",
                s.len()
            )));
        }
        s.bytes()
            .map(|b| match b {
                b'0' => Ok(0),
                b'1' => Ok(1),
                other => Err(Error::InvalidInput(format!(
                    "fingerprint contains `{}`; only 0 and 1 are allowed",
                    other as char
                ))),
            })
            .collect::<Result<Vec<u8>>>()
            .map(Fingerprint)
    }

    pub fn from_bits(bits: Vec<u8>) -> Result<Self> {
        if bits.len() != FINGERPRINT_BITS || bits.iter().any(|&b| b > 1) {
            return Err(Error::InvalidInput(format!(
                "fingerprint needs {FINGERPRINT_BITS} entries in {{0,1}}"
            )));
        }
        Ok(Fingerprint(bits))
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&b| f64::from(b)).collect()
    }
}

impl std::fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for b in &self.0 {
            f.write_str(if *b == 1 { "1" } else { "0" })?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DrugRecord {
    pub drug_id: String,
    pub name: String,
    pub fingerprint: Fingerprint,
    pub gene_targets: BTreeSet<String>,
    pub moa: Option<String>,
    pub withdrawn: bool,
    /// Cancer types the drug is approved for.
    pub indications: BTreeSet<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellLineRecord {
    pub cell_id: String,
    pub cancer_type: String,
    /// Expression over the gene panel, in panel order.
    pub expression: Vec<f64>,
}

/// A screen row as read from disk. Empty fields are `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct RawPair {
    pub drug_id: String,
    pub cell_id: String,
    pub auc: Option<f64>,
    pub lower_limit: Option<f64>,
    pub ic50: Option<f64>,
    pub r_squared: Option<f64>,
    pub screen_id: String,
    pub line: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub drug_id: String,
    pub cell_id: String,
    pub auc: f64,
    pub lower_limit: f64,
    pub ic50: f64,
    pub r_squared: f64,
    pub screen_id: String,
    pub ces: Option<f64>,
    pub label: Option<u8>,
}

impl From<&PairRecord> for RawPair {
    fn from(p: &PairRecord) -> Self {
        RawPair {
            drug_id: p.drug_id.clone(),
            cell_id: p.cell_id.clone(),
            auc: Some(p.auc),
            lower_limit: Some(p.lower_limit),
            ic50: Some(p.ic50),
            r_squared: Some(p.r_squared),
            screen_id: p.screen_id.clone(),
            line: 0,
        }
    }
}

/// Ordered, duplicate-free list of gene symbols. Its order is the column
/// order of every expression vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenePanel {
    genes: Vec<String>,
}

impl GenePanel {
    pub fn new(genes: Vec<String>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for g in &genes {
            if g.is_empty() {
                return Err(Error::InvalidInput("empty gene symbol in panel".into()));
            }
            if !seen.insert(g.as_str()) {
                return Err(Error::InvalidInput(format!("gene {g} listed twice in panel")));
            }
        }
        Ok(Self { genes })
    }

    /// The 463-gene cancer pathway panel shipped with the crate.
    pub fn default_panel() -> Self {
        Self::parse_text(DEFAULT_PANEL).expect("bundled panel is valid")
    }

    fn parse_text(text: &str) -> Result<Self> {
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(String::from)
                .collect(),
        )
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_text(&text)
    }

    pub fn genes(&self) -> &[String] {
        &self.genes
    }

    pub fn len(&self) -> usize {
        self.genes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.genes.is_empty()
    }
}

/// Wide expression table exactly as read from `cells.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpressionTable {
    pub genes: Vec<String>,
    pub rows: Vec<ExpressionRow>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpressionRow {
    pub cell_id: String,
    pub cancer_type: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowRejection {
    pub file: String,
    pub line: u64,
    pub reason: String,
}

#[derive(Clone, Debug)]
pub struct RawDataset {
    pub pairs: Vec<RawPair>,
    pub drugs: Vec<DrugRecord>,
    pub expression: ExpressionTable,
    pub panel: GenePanel,
    /// Rows that could not be parsed; the rest of the file is still loaded.
    pub rejections: Vec<RowRejection>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropRule {
    Unparseable,
    MissingMeasurement,
    NegativeLowerLimit,
    NonPositiveMeasurement,
    LowRSquared,
    UnknownDrug,
    WithdrawnDrug,
    Duplicate,
    LowEffectiveFraction,
    UnknownCancerType,
    MissingExpression,
}

impl DropRule {
    pub fn as_str(self) -> &'static str {
        match self {
            DropRule::Unparseable => "unparseable",
            DropRule::MissingMeasurement => "missing_measurement",
            DropRule::NegativeLowerLimit => "negative_lower_limit",
            DropRule::NonPositiveMeasurement => "non_positive_measurement",
            DropRule::LowRSquared => "low_r_squared",
            DropRule::UnknownDrug => "unknown_drug",
            DropRule::WithdrawnDrug => "withdrawn_drug",
            DropRule::Duplicate => "duplicate",
            DropRule::LowEffectiveFraction => "low_effective_fraction",
            DropRule::UnknownCancerType => "unknown_cancer_type",
            DropRule::MissingExpression => "missing_expression",
        }
    }
}

/// One dropped row. Pair-level drops carry both ids; cell-level drops only
/// `cell_id`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub rule: DropRule,
    pub table: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drug_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cell_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AuditLog {
    pub records: Vec<AuditRecord>,
}

impl AuditLog {
    fn pair(&mut self, rule: DropRule, p: &RawPair, detail: Option<String>) {
        self.records.push(AuditRecord {
            rule,
            table: "pairs".into(),
            drug_id: Some(p.drug_id.clone()),
            cell_id: Some(p.cell_id.clone()),
            line: (p.line > 0).then_some(p.line),
            detail,
        });
    }

    pub fn extend(&mut self, other: AuditLog) {
        self.records.extend(other.records);
    }

    /// Number of dropped rows per rule, split by table.
    pub fn counts(&self) -> BTreeMap<String, BTreeMap<String, usize>> {
        let mut out: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
        for r in &self.records {
            *out.entry(r.table.clone())
                .or_default()
                .entry(r.rule.as_str().to_string())
                .or_default() += 1;
        }
        out
    }

    pub fn write_jsonl(&self, w: &mut impl Write) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut *w, r)?;
            w.write_all(b"\n").map_err(|e| Error::io("<audit>", e))?;
        }
        Ok(())
    }
}

/// Filtered, labeled screen data ready for splitting and training.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// Drugs referenced by at least one retained pair, sorted by id.
    pub drugs: Vec<DrugRecord>,
    /// Cell lines with retained screen data, sorted by id.
    pub cells: Vec<CellLineRecord>,
    /// Sorted by `(cell_id, drug_id)`.
    pub pairs: Vec<PairRecord>,
    pub panel: GenePanel,
}

impl Dataset {
    pub fn cancer_of(&self) -> BTreeMap<String, String> {
        self.cells
            .iter()
            .map(|c| (c.cell_id.clone(), c.cancer_type.clone()))
            .collect()
    }

    pub fn drug(&self, id: &str) -> Option<&DrugRecord> {
        self.drugs
            .binary_search_by(|d| d.drug_id.as_str().cmp(id))
            .ok()
            .map(|i| &self.drugs[i])
    }
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

fn open_csv(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file))
}

fn check_header(path: &Path, found: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let ok = found.len() == expected.len() && found.iter().zip(expected).all(|(a, b)| a.trim() == *b);
    if ok {
        Ok(())
    } else {
        Err(Error::HeaderMismatch {
            path: path.to_path_buf(),
            expected: expected.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        })
    }
}

fn file_label(path: &Path) -> String {
    path.file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// `Ok(None)` for an empty field, an error message for anything non-numeric.
fn parse_measurement(field: &str, name: &str) -> std::result::Result<Option<f64>, String> {
    let t = field.trim();
    if t.is_empty() {
        return Ok(None);
    }
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(format!("{name} is not numeric: `{t}`")),
    }
}

fn split_set(field: &str) -> BTreeSet<String> {
    field
        .split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

pub fn read_pairs(path: &Path) -> Result<(Vec<RawPair>, Vec<RowRejection>)> {
    let mut rdr = open_csv(path)?;
    let header = rdr.headers()?.clone();
    check_header(path, &header, &PAIRS_HEADER)?;
    let file = file_label(path);
    let mut pairs = Vec::new();
    let mut rejections = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let parsed = (|| -> std::result::Result<RawPair, String> {
            if rec.len() != PAIRS_HEADER.len() {
                return Err(format!(
                    "expected {} fields, found {}",
                    PAIRS_HEADER.len(),
                    rec.len()
                ));
            }
            let drug_id = rec[0].trim().to_string();
            let cell_id = rec[1].trim().to_string();
            if drug_id.is_empty() || cell_id.is_empty() {
                return Err("empty drug_id or cell_id".into());
            }
            Ok(RawPair {
                drug_id,
                cell_id,
                auc: parse_measurement(&rec[2], "auc")?,
                lower_limit: parse_measurement(&rec[3], "lower_limit")?,
                ic50: parse_measurement(&rec[4], "ic50")?,
                r_squared: parse_measurement(&rec[5], "r_squared")?,
                screen_id: rec[6].trim().to_string(),
                line,
            })
        })();
        match parsed {
            Ok(p) => pairs.push(p),
            Err(reason) => rejections.push(RowRejection {
                file: file.clone(),
                line,
                reason,
            }),
        }
    }
    Ok((pairs, rejections))
}

pub fn read_drugs(path: &Path) -> Result<(Vec<DrugRecord>, Vec<RowRejection>)> {
    let mut rdr = open_csv(path)?;
    let header = rdr.headers()?.clone();
    check_header(path, &header, &DRUGS_HEADER)?;
    let file = file_label(path);
    let mut drugs = Vec::new();
    let mut seen = BTreeSet::new();
    let mut rejections = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let parsed = (|| -> std::result::Result<DrugRecord, String> {
            if rec.len() != DRUGS_HEADER.len() {
                return Err(format!(
                    "expected {} fields, found {}",
                    DRUGS_HEADER.len(),
                    rec.len()
                ));
            }
            let drug_id = rec[0].trim().to_string();
            if drug_id.is_empty() {
                return Err("empty drug_id".into());
            }
            if seen.contains(&drug_id) {
                return Err(format!("duplicate drug_id {drug_id}"));
            }
            let fingerprint = Fingerprint::parse(&rec[2]).map_err(|e| e.to_string())?;
            let withdrawn = match rec[5].trim() {
                "0" | "" => false,
                "1" => true,
                other => return Err(format!("withdrawn must be 0 or 1, found `{other}`")),
            };
            let moa = Some(rec[4].trim()).filter(|s| !s.is_empty()).map(String::from);
            Ok(DrugRecord {
                drug_id,
                name: rec[1].trim().to_string(),
                fingerprint,
                gene_targets: split_set(&rec[3]),
                moa,
                withdrawn,
                indications: split_set(&rec[6]),
            })
        })();
        match parsed {
            Ok(d) => {
                seen.insert(d.drug_id.clone());
                drugs.push(d);
            }
            Err(reason) => rejections.push(RowRejection {
                file: file.clone(),
                line,
                reason,
            }),
        }
    }
    Ok((drugs, rejections))
}

pub fn read_expression(path: &Path) -> Result<(ExpressionTable, Vec<RowRejection>)> {
    let mut rdr = open_csv(path)?;
    let header = rdr.headers()?.clone();
    if header.len() < 2 || header[0].trim() != "cell_id" || header[1].trim() != "cancer_type" {
        return Err(Error::HeaderMismatch {
            path: path.to_path_buf(),
            expected: "cell_id,cancer_type,<gene1>,<gene2>,...".into(),
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }
    let genes: Vec<String> = header.iter().skip(2).map(|g| g.trim().to_string()).collect();
    let mut uniq = BTreeSet::new();
    for g in &genes {
        if !uniq.insert(g) {
            return Err(Error::InvalidInput(format!(
                "{}: gene column {g} appears twice",
                path.display()
            )));
        }
    }
    let file = file_label(path);
    let mut rows = Vec::new();
    let mut seen = BTreeSet::new();
    let mut rejections = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let parsed = (|| -> std::result::Result<ExpressionRow, String> {
            if rec.len() != genes.len() + 2 {
                return Err(format!(
                    "expected {} fields, found {}",
                    genes.len() + 2,
                    rec.len()
                ));
            }
            let cell_id = rec[0].trim().to_string();
            if cell_id.is_empty() {
                return Err("empty cell_id".into());
            }
            if seen.contains(&cell_id) {
                return Err(format!("duplicate cell_id {cell_id}"));
            }
            let mut values = Vec::with_capacity(genes.len());
            for (g, field) in genes.iter().zip(rec.iter().skip(2)) {
                match parse_measurement(field, g)? {
                    Some(v) if v >= 0.0 => values.push(v),
                    Some(v) => return Err(format!("negative expression {v} for {g}")),
                    None => return Err(format!("missing expression for {g}")),
                }
            }
            Ok(ExpressionRow {
                cell_id,
                cancer_type: rec[1].trim().to_string(),
                values,
            })
        })();
        match parsed {
            Ok(r) => {
                seen.insert(r.cell_id.clone());
                rows.push(r);
            }
            Err(reason) => rejections.push(RowRejection {
                file: file.clone(),
                line,
                reason,
            }),
        }
    }
    Ok((ExpressionTable { genes, rows }, rejections))
}

/// Load all four inputs. Structural problems (missing file, wrong header)
/// are errors; malformed rows are skipped and listed in `rejections`.
/// Cross-references between tables are checked later by the filters.
pub fn parse_dataset(
    pair_path: &Path,
    drug_path: &Path,
    cell_path: &Path,
    gene_panel_path: &Path,
) -> Result<RawDataset> {
    for p in [pair_path, drug_path, cell_path, gene_panel_path] {
        if !p.exists() {
            return Err(Error::io(
                p,
                std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
            ));
        }
    }
    let panel = GenePanel::from_file(gene_panel_path)?;
    let (pairs, mut rejections) = read_pairs(pair_path)?;
    let (drugs, r) = read_drugs(drug_path)?;
    rejections.extend(r);
    let (expression, r) = read_expression(cell_path)?;
    rejections.extend(r);
    Ok(RawDataset {
        pairs,
        drugs,
        expression,
        panel,
        rejections,
    })
}

pub fn read_gene_list(path: &Path) -> Result<Vec<String>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    BufReader::new(f)
        .lines()
        .map(|l| l.map(|s| s.trim().to_string()).map_err(|e| Error::io(path, e)))
        .filter(|l| !matches!(l, Ok(s) if s.is_empty()))
        .collect()
}

// ---------------------------------------------------------------------------
// Gene panel projection
// ---------------------------------------------------------------------------

/// Project the expression table onto the panel: `cells x |panel|`, columns
/// in panel order.
pub fn select_genes(table: &ExpressionTable, panel: &GenePanel) -> Result<Matrix> {
    let index: HashMap<&str, usize> = table
        .genes
        .iter()
        .enumerate()
        .map(|(i, g)| (g.as_str(), i))
        .collect();
    let cols = panel
        .genes()
        .iter()
        .map(|g| index.get(g.as_str()).copied().ok_or_else(|| Error::MissingGene(g.clone())))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Matrix::zeros(table.rows.len(), cols.len());
    for (i, row) in table.rows.iter().enumerate() {
        for (j, &c) in cols.iter().enumerate() {
            out.set(i, j, row.values[c]);
        }
    }
    Ok(out)
}

/// Cell-line records over the panel, in table order.
pub fn cell_records(table: &ExpressionTable, panel: &GenePanel) -> Result<Vec<CellLineRecord>> {
    let m = select_genes(table, panel)?;
    Ok(table
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| CellLineRecord {
            cell_id: r.cell_id.clone(),
            cancer_type: r.cancer_type.clone(),
            expression: m.row(i).to_vec(),
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Filters
// ---------------------------------------------------------------------------

pub fn is_unknown_cancer(cancer_type: &str) -> bool {
    let t = cancer_type.trim().to_ascii_lowercase();
    t.is_empty() || t == "unknown" || t == "non-cancerous" || t == "noncancerous"
}

fn pair_drop_rule(p: &RawPair) -> Option<(DropRule, Option<String>)> {
    let (Some(auc), Some(ll), Some(ic50), Some(r2)) = (p.auc, p.lower_limit, p.ic50, p.r_squared) else {
        return Some((DropRule::MissingMeasurement, None));
    };
    if ll < 0.0 {
        return Some((DropRule::NegativeLowerLimit, Some(format!("lower_limit={ll}"))));
    }
    if auc <= 0.0 || ll <= 0.0 || ic50 <= 0.0 {
        return Some((
            DropRule::NonPositiveMeasurement,
            Some(format!("auc={auc} lower_limit={ll} ic50={ic50}")),
        ));
    }
    if r2 < MIN_R_SQUARED {
        return Some((DropRule::LowRSquared, Some(format!("r_squared={r2}"))));
    }
    None
}

/// Orders duplicate measurements of one pair: preferred screen first, then
/// highest R², then smallest screen id.
fn duplicate_preference(a: &RawPair, b: &RawPair) -> std::cmp::Ordering {
    let pa = a.screen_id == PREFERRED_SCREEN;
    let pb = b.screen_id == PREFERRED_SCREEN;
    pb.cmp(&pa)
        .then_with(|| b.r_squared.unwrap_or(f64::NEG_INFINITY).total_cmp(&a.r_squared.unwrap_or(f64::NEG_INFINITY)))
        .then_with(|| a.screen_id.cmp(&b.screen_id))
        .then_with(|| a.line.cmp(&b.line))
}

/// Quality filters and de-duplication. Each dropped row is logged under the
/// first rule it violates. Output is sorted by `(cell_id, drug_id)`.
pub fn filter_and_dedup_pairs(pairs: &[RawPair], drugs: &[DrugRecord]) -> (Vec<PairRecord>, AuditLog) {
    let mut audit = AuditLog::default();
    let by_id: HashMap<&str, &DrugRecord> = drugs.iter().map(|d| (d.drug_id.as_str(), d)).collect();

    let mut groups: BTreeMap<(String, String), Vec<&RawPair>> = BTreeMap::new();
    for p in pairs {
        if let Some((rule, detail)) = pair_drop_rule(p) {
            audit.pair(rule, p, detail);
            continue;
        }
        groups
            .entry((p.cell_id.clone(), p.drug_id.clone()))
            .or_default()
            .push(p);
    }

    let mut out = Vec::with_capacity(groups.len());
    for (_, mut dups) in groups {
        dups.sort_by(|a, b| duplicate_preference(a, b));
        let keep = dups[0];
        for d in &dups[1..] {
            audit.pair(
                DropRule::Duplicate,
                d,
                Some(format!("kept screen {} (r_squared={})", keep.screen_id, keep.r_squared.unwrap_or(f64::NAN))),
            );
        }
        match by_id.get(keep.drug_id.as_str()) {
            None => {
                audit.pair(DropRule::UnknownDrug, keep, None);
                continue;
            }
            Some(d) if d.withdrawn => {
                audit.pair(DropRule::WithdrawnDrug, keep, None);
                continue;
            }
            Some(_) => {}
        }
        out.push(PairRecord {
            drug_id: keep.drug_id.clone(),
            cell_id: keep.cell_id.clone(),
            auc: keep.auc.unwrap_or_default(),
            lower_limit: keep.lower_limit.unwrap_or_default(),
            ic50: keep.ic50.unwrap_or_default(),
            r_squared: keep.r_squared.unwrap_or_default(),
            screen_id: keep.screen_id.clone(),
            ces: None,
            label: None,
        });
    }
    (out, audit)
}

/// Fill in `ces` for every pair.
pub fn score_pairs(pairs: &mut [PairRecord], base: LogBase) -> Result<()> {
    for p in pairs.iter_mut() {
        p.ces = Some(scoring::compute_ces_with_base(p.auc, p.lower_limit, p.ic50, base)?);
    }
    Ok(())
}

/// Fill in `label` from already computed scores.
pub fn label_pairs(pairs: &mut [PairRecord], spec: &ThresholdSpec) -> Result<()> {
    for p in pairs.iter_mut() {
        let ces = p
            .ces
            .ok_or_else(|| Error::InvalidInput(format!("pair {}/{} has no score", p.drug_id, p.cell_id)))?;
        p.label = Some(scoring::binarize(ces, spec));
    }
    Ok(())
}

/// Cell-line filters: drop lines whose effective fraction (score at or above
/// `gate_threshold`) is below 1%, whose cancer type is unknown, or that have
/// no expression profile; drop their pairs with them.
pub fn filter_cell_lines(
    pairs: Vec<PairRecord>,
    cells: &[CellLineRecord],
    drugs: &[DrugRecord],
    panel: &GenePanel,
    gate_threshold: f64,
) -> Result<(Dataset, AuditLog)> {
    let mut audit = AuditLog::default();
    let cell_by_id: HashMap<&str, &CellLineRecord> = cells.iter().map(|c| (c.cell_id.as_str(), c)).collect();

    let mut screened: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for p in &pairs {
        let ces = p
            .ces
            .ok_or_else(|| Error::InvalidInput(format!("pair {}/{} has no score", p.drug_id, p.cell_id)))?;
        let e = screened.entry(p.cell_id.as_str()).or_default();
        e.0 += 1;
        if ces >= gate_threshold {
            e.1 += 1;
        }
    }

    let mut dropped: BTreeMap<String, DropRule> = BTreeMap::new();
    for (&cell_id, &(n, effective)) in &screened {
        let rule = match cell_by_id.get(cell_id) {
            None => Some(DropRule::MissingExpression),
            Some(c) if is_unknown_cancer(&c.cancer_type) => Some(DropRule::UnknownCancerType),
            // effective / n < 1%, in integers.
            Some(_) if effective * 100 < n => Some(DropRule::LowEffectiveFraction),
            Some(_) => None,
        };
        if let Some(rule) = rule {
            audit.records.push(AuditRecord {
                rule,
                table: "cells".into(),
                drug_id: None,
                cell_id: Some(cell_id.to_string()),
                line: None,
                detail: Some(format!("{effective}/{n} screened drugs effective")),
            });
            dropped.insert(cell_id.to_string(), rule);
        }
    }

    let mut kept = Vec::with_capacity(pairs.len());
    for p in pairs {
        if let Some(&rule) = dropped.get(&p.cell_id) {
            audit.records.push(AuditRecord {
                rule,
                table: "pairs".into(),
                drug_id: Some(p.drug_id.clone()),
                cell_id: Some(p.cell_id.clone()),
                line: None,
                detail: Some("cell line removed".into()),
            });
        } else {
            kept.push(p);
        }
    }
    kept.sort_by(|a, b| (&a.cell_id, &a.drug_id).cmp(&(&b.cell_id, &b.drug_id)));

    let used_cells: BTreeSet<&str> = kept.iter().map(|p| p.cell_id.as_str()).collect();
    let used_drugs: BTreeSet<&str> = kept.iter().map(|p| p.drug_id.as_str()).collect();
    let mut out_cells: Vec<CellLineRecord> = used_cells
        .iter()
        .map(|id| (*cell_by_id[id]).clone())
        .collect();
    out_cells.sort_by(|a, b| a.cell_id.cmp(&b.cell_id));
    let mut out_drugs: Vec<DrugRecord> = drugs
        .iter()
        .filter(|d| used_drugs.contains(d.drug_id.as_str()))
        .cloned()
        .collect();
    out_drugs.sort_by(|a, b| a.drug_id.cmp(&b.drug_id));

    Ok((
        Dataset {
            drugs: out_drugs,
            cells: out_cells,
            pairs: kept,
            panel: panel.clone(),
        },
        audit,
    ))
}

/// Cell lines usable for encoder pretraining: never screened, known cancer
/// type, and from a cancer with at least `min_per_cancer` such lines.
pub fn pretraining_pool(
    cells: &[CellLineRecord],
    screened_cell_ids: &BTreeSet<String>,
    min_per_cancer: usize,
) -> Vec<CellLineRecord> {
    let candidates: Vec<&CellLineRecord> = cells
        .iter()
        .filter(|c| !screened_cell_ids.contains(&c.cell_id) && !is_unknown_cancer(&c.cancer_type))
        .collect();
    let mut per_cancer: BTreeMap<&str, usize> = BTreeMap::new();
    for c in &candidates {
        *per_cancer.entry(c.cancer_type.as_str()).or_default() += 1;
    }
    let mut pool: Vec<CellLineRecord> = candidates
        .into_iter()
        .filter(|c| per_cancer[c.cancer_type.as_str()] >= min_per_cancer)
        .cloned()
        .collect();
    pool.sort_by(|a, b| a.cell_id.cmp(&b.cell_id));
    pool
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    /// Cancers with fewer screened lines than this are held out entirely.
    pub min_cancer_cells: usize,
    /// Share of each remaining cancer kept back as the trained-on test set.
    pub test_percent: usize,
    pub n_folds: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            min_cancer_cells: 15,
            test_percent: 15,
            n_folds: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub novel_test: BTreeSet<String>,
    pub trained_on_test: BTreeSet<String>,
    pub folds: Vec<BTreeSet<String>>,
    pub seed: u64,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl SplitPlan {
    pub fn training_cells(&self) -> BTreeSet<String> {
        self.folds.iter().flatten().cloned().collect()
    }

    /// Check disjointness, coverage and the per-cancer size rules.
    pub fn validate(&self, cancer_of: &BTreeMap<String, String>, config: &SplitConfig) -> Result<()> {
        let mut seen: BTreeSet<&String> = BTreeSet::new();
        let all = self
            .folds
            .iter()
            .chain([&self.novel_test, &self.trained_on_test]);
        for set in all {
            for c in set {
                if !seen.insert(c) {
                    return Err(Error::InvalidInput(format!("cell {c} assigned twice")));
                }
                if !cancer_of.contains_key(c) {
                    return Err(Error::InvalidInput(format!("cell {c} not in dataset")));
                }
            }
        }
        if seen.len() != cancer_of.len() {
            return Err(Error::InvalidInput(format!(
                "plan covers {} of {} cells",
                seen.len(),
                cancer_of.len()
            )));
        }
        let mut by_cancer: BTreeMap<&str, Vec<&String>> = BTreeMap::new();
        for (c, k) in cancer_of {
            by_cancer.entry(k.as_str()).or_default().push(c);
        }
        for (cancer, members) in by_cancer {
            let n = members.len();
            let novel = members.iter().filter(|c| self.novel_test.contains(**c)).count();
            if n < config.min_cancer_cells {
                if novel != n {
                    return Err(Error::InvalidInput(format!("small cancer {cancer} not fully novel")));
                }
                continue;
            }
            if novel != 0 {
                return Err(Error::InvalidInput(format!("trained-on cancer {cancer} has novel cells")));
            }
            let test = members.iter().filter(|c| self.trained_on_test.contains(**c)).count();
            if test != test_count(n, config.test_percent) {
                return Err(Error::InvalidInput(format!(
                    "cancer {cancer}: {test} test cells, expected {}",
                    test_count(n, config.test_percent)
                )));
            }
            let sizes: Vec<usize> = self
                .folds
                .iter()
                .map(|f| members.iter().filter(|c| f.contains(**c)).count())
                .collect();
            let (lo, hi) = (sizes.iter().min().copied().unwrap_or(0), sizes.iter().max().copied().unwrap_or(0));
            if hi - lo > 1 {
                return Err(Error::InvalidInput(format!("cancer {cancer}: fold sizes {sizes:?}")));
            }
        }
        Ok(())
    }
}

/// Round-half-up share of `n`, at least 1 when `n >= 2`, never all of `n`.
pub fn test_count(n: usize, percent: usize) -> usize {
    let rounded = (n * percent + 50) / 100;
    let at_least = if n >= 2 { rounded.max(1) } else { 0 };
    at_least.min(n.saturating_sub(1))
}

/// Cancer-aware split. Cancers below `min_cancer_cells` go to the novel test
/// set; for the rest a seeded shuffle picks the trained-on test lines and the
/// remainder is dealt round-robin into the folds.
pub fn make_splits(dataset: &Dataset, config: &SplitConfig, seed: u64) -> Result<SplitPlan> {
    if config.n_folds == 0 {
        return Err(Error::InvalidInput("n_folds must be positive".into()));
    }
    let mut by_cancer: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for c in &dataset.cells {
        by_cancer
            .entry(c.cancer_type.as_str())
            .or_default()
            .push(c.cell_id.clone());
    }
    let mut rng = crate::seeded_rng(seed, 0x5011);
    let mut plan = SplitPlan {
        novel_test: BTreeSet::new(),
        trained_on_test: BTreeSet::new(),
        folds: vec![BTreeSet::new(); config.n_folds],
        seed,
        notes: Vec::new(),
    };
    // Rotating the first fold per cancer keeps overall fold sizes level too.
    let mut next_fold = 0usize;
    for (cancer, mut members) in by_cancer {
        members.sort();
        if members.len() < config.min_cancer_cells {
            plan.novel_test.extend(members);
            continue;
        }
        members.shuffle(&mut rng);
        let n_test = test_count(members.len(), config.test_percent);
        if members.len() == 1 {
            plan.notes.push(format!(
                "cancer {cancer} has a single cell line; it is assigned to a fold and has no test line"
            ));
        }
        let (test, rest) = members.split_at(n_test);
        plan.trained_on_test.extend(test.iter().cloned());
        for (i, c) in rest.iter().enumerate() {
            plan.folds[(next_fold + i) % config.n_folds].insert(c.clone());
        }
        next_fold = (next_fold + rest.len()) % config.n_folds;
    }
    Ok(plan)
}

// ---------------------------------------------------------------------------
// Writers (input schemas, so outputs can be ingested again)
// ---------------------------------------------------------------------------

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_pairs_csv(path: &Path, pairs: &[PairRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(PAIRS_HEADER)?;
    for p in pairs {
        w.write_record([
            p.drug_id.as_str(),
            &p.cell_id,
            &p.auc.to_string(),
            &p.lower_limit.to_string(),
            &p.ic50.to_string(),
            &p.r_squared.to_string(),
            &p.screen_id,
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_labels_csv(path: &Path, pairs: &[PairRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["drug_id", "cell_id", "ces", "label"])?;
    for p in pairs {
        w.write_record([
            p.drug_id.as_str(),
            &p.cell_id,
            &fmt_opt(p.ces),
            &p.label.map(|l| l.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Read back `labels.csv` and attach scores/labels to the matching pairs.
pub fn read_labels_into(path: &Path, pairs: &mut [PairRecord]) -> Result<()> {
    let mut rdr = open_csv(path)?;
    let header = rdr.headers()?.clone();
    check_header(path, &header, &["drug_id", "cell_id", "ces", "label"])?;
    let mut map: HashMap<(String, String), (Option<f64>, Option<u8>)> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let row_err = |message: String| Error::Row {
            path: path.to_path_buf(),
            line,
            message,
        };
        let ces = parse_measurement(&rec[2], "ces").map_err(row_err)?;
        let label = match rec[3].trim() {
            "" => None,
            "0" => Some(0),
            "1" => Some(1),
            other => return Err(row_err(format!("label must be 0 or 1, found `{other}`"))),
        };
        map.insert((rec[0].to_string(), rec[1].to_string()), (ces, label));
    }
    for p in pairs.iter_mut() {
        let (ces, label) = map
            .get(&(p.drug_id.clone(), p.cell_id.clone()))
            .copied()
            .ok_or_else(|| Error::InvalidInput(format!("no label for pair {}/{}", p.drug_id, p.cell_id)))?;
        p.ces = ces;
        p.label = label;
    }
    Ok(())
}

pub fn write_drugs_csv(path: &Path, drugs: &[DrugRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(DRUGS_HEADER)?;
    for d in drugs {
        w.write_record([
            d.drug_id.as_str(),
            &d.name,
            &d.fingerprint.to_string(),
            &d.gene_targets.iter().cloned().collect::<Vec<_>>().join(";"),
            d.moa.as_deref().unwrap_or(""),
            if d.withdrawn { "1" } else { "0" },
            &d.indications.iter().cloned().collect::<Vec<_>>().join(";"),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Wide `cells.csv` with panel columns.
pub fn write_cells_csv(path: &Path, panel: &GenePanel, cells: &[CellLineRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["cell_id".to_string(), "cancer_type".to_string()];
    header.extend(panel.genes().iter().cloned());
    w.write_record(&header)?;
    for c in cells {
        let mut rec = vec![c.cell_id.clone(), c.cancer_type.clone()];
        rec.extend(c.expression.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_gene_panel(path: &Path, panel: &GenePanel) -> Result<()> {
    let mut text = panel.genes().join("\n");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(drug: &str, cell: &str, r2: f64, screen: &str) -> RawPair {
        RawPair {
            drug_id: drug.into(),
            cell_id: cell.into(),
            auc: Some(0.5),
            lower_limit: Some(0.1),
            ic50: Some(0.2),
            r_squared: Some(r2),
            screen_id: screen.into(),
            line: 0,
        }
    }

    fn drug(id: &str, withdrawn: bool) -> DrugRecord {
        DrugRecord {
            drug_id: id.into(),
            name: id.into(),
            fingerprint: Fingerprint::from_bits(vec![0; FINGERPRINT_BITS]).unwrap(),
            gene_targets: BTreeSet::new(),
            moa: None,
            withdrawn,
            indications: BTreeSet::new(),
        }
    }

    fn pair(drug: &str, cell: &str, ces: f64) -> PairRecord {
        PairRecord {
            drug_id: drug.into(),
            cell_id: cell.into(),
            auc: 1.0,
            lower_limit: 1.0,
            ic50: 1.0,
            r_squared: 0.9,
            screen_id: "S".into(),
            ces: Some(ces),
            label: None,
        }
    }

    fn cell(id: &str, cancer: &str) -> CellLineRecord {
        CellLineRecord {
            cell_id: id.into(),
            cancer_type: cancer.into(),
            expression: vec![1.0],
        }
    }

    #[test]
    fn preferred_screen_beats_higher_r_squared() {
        let pairs = vec![raw("D", "C", 0.75, "MTS010"), raw("D", "C", 0.95, "OTHER")];
        let (kept, audit) = filter_and_dedup_pairs(&pairs, &[drug("D", false)]);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].screen_id, "MTS010");
        assert_eq!(audit.records[0].rule, DropRule::Duplicate);
    }

    #[test]
    fn highest_r_squared_otherwise() {
        let pairs = vec![raw("D", "C", 0.8, "A"), raw("D", "C", 0.9, "B")];
        let (kept, _) = filter_and_dedup_pairs(&pairs, &[drug("D", false)]);
        assert_eq!(kept[0].r_squared, 0.9);
    }

    #[test]
    fn equal_r_squared_breaks_by_screen_id() {
        let pairs = vec![raw("D", "C", 0.8, "ZZ"), raw("D", "C", 0.8, "AA")];
        let (kept, _) = filter_and_dedup_pairs(&pairs, &[drug("D", false)]);
        assert_eq!(kept[0].screen_id, "AA");
    }

    #[test]
    fn r_squared_boundary() {
        let pairs = vec![raw("D", "C1", 0.69, "A"), raw("D", "C2", 0.70, "A")];
        let (kept, audit) = filter_and_dedup_pairs(&pairs, &[drug("D", false)]);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].cell_id, "C2");
        assert_eq!(audit.records[0].rule, DropRule::LowRSquared);
    }

    #[test]
    fn each_drop_has_one_rule() {
        let mut missing = raw("D", "C1", 0.9, "A");
        missing.ic50 = None;
        let mut negative = raw("D", "C2", 0.9, "A");
        negative.lower_limit = Some(-0.1);
        let mut zero = raw("D", "C3", 0.9, "A");
        zero.lower_limit = Some(0.0);
        let pairs = vec![
            missing,
            negative,
            zero,
            raw("W", "C4", 0.9, "A"),
            raw("X", "C5", 0.9, "A"),
            raw("D", "C6", 0.9, "A"),
        ];
        let (kept, audit) = filter_and_dedup_pairs(&pairs, &[drug("D", false), drug("W", true)]);
        assert_eq!(kept.len(), 1);
        let rules: Vec<DropRule> = audit.records.iter().map(|r| r.rule).collect();
        assert_eq!(
            rules,
            vec![
                DropRule::MissingMeasurement,
                DropRule::NegativeLowerLimit,
                DropRule::NonPositiveMeasurement,
                DropRule::WithdrawnDrug,
                DropRule::UnknownDrug,
            ]
        );
        assert_eq!(kept.len() + audit.records.len(), pairs.len());
    }

    #[test]
    fn effectiveness_gate_boundary() {
        let mut pairs = Vec::new();
        for i in 0..200 {
            // C1: one effective of 200, C2: two of 200.
            pairs.push(pair(&format!("D{i:03}"), "C1", if i < 1 { 9.0 } else { 1.0 }));
            pairs.push(pair(&format!("D{i:03}"), "C2", if i < 2 { 9.0 } else { 1.0 }));
        }
        let drugs: Vec<DrugRecord> = (0..200).map(|i| drug(&format!("D{i:03}"), false)).collect();
        let cells = vec![cell("C1", "Lung"), cell("C2", "Lung")];
        let panel = GenePanel::new(vec!["G".into()]).unwrap();
        let (ds, audit) = filter_cell_lines(pairs, &cells, &drugs, &panel, 7.2734).unwrap();
        assert_eq!(ds.cells.len(), 1);
        assert_eq!(ds.cells[0].cell_id, "C2");
        assert_eq!(ds.pairs.len(), 200);
        assert_eq!(audit.records[0].rule, DropRule::LowEffectiveFraction);
        assert_eq!(audit.records[0].cell_id.as_deref(), Some("C1"));
    }

    #[test]
    fn unknown_cancer_and_missing_expression_are_removed() {
        let pairs = vec![pair("D", "C1", 9.0), pair("D", "C2", 9.0), pair("D", "C3", 9.0)];
        let cells = vec![cell("C1", "Unknown"), cell("C2", "Skin")];
        let panel = GenePanel::new(vec!["G".into()]).unwrap();
        let (ds, audit) = filter_cell_lines(pairs, &cells, &[drug("D", false)], &panel, 7.2734).unwrap();
        assert_eq!(ds.cells.len(), 1);
        let cell_rules: Vec<_> = audit
            .records
            .iter()
            .filter(|r| r.table == "cells")
            .map(|r| (r.cell_id.clone().unwrap(), r.rule))
            .collect();
        assert_eq!(
            cell_rules,
            vec![
                ("C1".to_string(), DropRule::UnknownCancerType),
                ("C3".to_string(), DropRule::MissingExpression)
            ]
        );
    }

    #[test]
    fn select_genes_projects_in_panel_order() {
        let table = ExpressionTable {
            genes: ["A", "B", "C", "D", "E"].map(String::from).to_vec(),
            rows: vec![ExpressionRow {
                cell_id: "X".into(),
                cancer_type: "Lung".into(),
                values: vec![1.0, 2.0, 3.0, 4.0, 5.0],
            }],
        };
        let all = GenePanel::new(table.genes.clone()).unwrap();
        assert_eq!(select_genes(&table, &all).unwrap().row(0), &[1.0, 2.0, 3.0, 4.0, 5.0]);
        let two = GenePanel::new(vec!["D".into(), "B".into()]).unwrap();
        assert_eq!(select_genes(&table, &two).unwrap().row(0), &[4.0, 2.0]);
        let missing = GenePanel::new(vec!["Q".into()]).unwrap();
        let err = select_genes(&table, &missing).unwrap_err();
        assert_eq!(err.to_string(), "gene Q not found in expression table");
    }

    #[test]
    fn panel_rejects_duplicates_and_default_has_463() {
        assert!(GenePanel::new(vec!["A".into(), "A".into()]).is_err());
        let p = GenePanel::default_panel();
        assert_eq!(p.len(), 463);
        assert_eq!(p.genes()[0], "ABL1");
    }

    #[test]
    fn fingerprint_validation() {
        assert!(Fingerprint::parse(&"01".repeat(128)).is_ok());
        assert!(Fingerprint::parse(&"0".repeat(255)).is_err());
        assert!(Fingerprint::parse(&format!("{}2", "0".repeat(255))).is_err());
        let f = Fingerprint::parse(&"10".repeat(128)).unwrap();
        assert_eq!(f.to_string(), "10".repeat(128));
    }

    #[test]
    fn test_count_rounding() {
        assert_eq!(test_count(20, 15), 3);
        assert_eq!(test_count(15, 15), 2);
        assert_eq!(test_count(17, 15), 3); // 2.55
        assert_eq!(test_count(10, 15), 2); // 1.5 rounds up
        assert_eq!(test_count(2, 15), 1);
        assert_eq!(test_count(1, 15), 0);
    }

    fn dataset_with(cancers: &[(&str, usize)]) -> Dataset {
        let mut cells = Vec::new();
        for (cancer, n) in cancers {
            for i in 0..*n {
                cells.push(cell(&format!("{cancer}-{i:02}"), cancer));
            }
        }
        cells.sort_by(|a, b| a.cell_id.cmp(&b.cell_id));
        Dataset {
            drugs: vec![],
            cells,
            pairs: vec![],
            panel: GenePanel::new(vec!["G".into()]).unwrap(),
        }
    }

    #[test]
    fn small_cancer_is_novel_and_large_is_split() {
        let ds = dataset_with(&[("Small", 14), ("Big", 20)]);
        let cfg = SplitConfig::default();
        let plan = make_splits(&ds, &cfg, 3).unwrap();
        plan.validate(&ds.cancer_of(), &cfg).unwrap();
        assert_eq!(plan.novel_test.len(), 14);
        assert!(plan.novel_test.iter().all(|c| c.starts_with("Small")));
        assert_eq!(plan.trained_on_test.len(), 3);
        let mut sizes: Vec<usize> = plan.folds.iter().map(|f| f.len()).collect();
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        assert_eq!(sizes, vec![4, 4, 3, 3, 3]);
    }

    #[test]
    fn splits_are_deterministic() {
        let ds = dataset_with(&[("A", 30), ("B", 17), ("C", 4)]);
        let cfg = SplitConfig::default();
        let a = serde_json::to_string(&make_splits(&ds, &cfg, 11).unwrap()).unwrap();
        let b = serde_json::to_string(&make_splits(&ds, &cfg, 11).unwrap()).unwrap();
        assert_eq!(a, b);
        let c = serde_json::to_string(&make_splits(&ds, &cfg, 12).unwrap()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn single_line_cancer_goes_to_a_fold_with_note() {
        let ds = dataset_with(&[("Solo", 1), ("Pair", 2)]);
        let cfg = SplitConfig {
            min_cancer_cells: 1,
            ..SplitConfig::default()
        };
        let plan = make_splits(&ds, &cfg, 0).unwrap();
        plan.validate(&ds.cancer_of(), &cfg).unwrap();
        assert!(plan.training_cells().contains("Solo-00"));
        assert_eq!(plan.notes.len(), 1);
        assert_eq!(plan.trained_on_test.len(), 1);
    }

    fn to_raw(p: &PairRecord) -> RawPair {
        RawPair {
            drug_id: p.drug_id.clone(),
            cell_id: p.cell_id.clone(),
            auc: Some(p.auc),
            lower_limit: Some(p.lower_limit),
            ic50: Some(p.ic50),
            r_squared: Some(p.r_squared),
            screen_id: p.screen_id.clone(),
            line: 0,
        }
    }

    fn arb_raw() -> impl Strategy<Value = RawPair> {
        (0..4usize, 0..5usize, 0.0f64..1.0, prop::bool::weighted(0.1), 0..3usize).prop_map(|(d, c, r2, missing, s)| {
            let mut p = raw(&format!("D{d}"), &format!("C{c}"), r2, ["MTS005", "MTS010", "HTS002"][s]);
            if missing {
                p.auc = None;
            }
            p
        })
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn dedup_accounts_for_every_row_and_is_idempotent(rows in prop::collection::vec(arb_raw(), 0..60)) {
            let drugs = vec![drug("D0", false), drug("D1", false), drug("D2", true)];
            let (kept, audit) = filter_and_dedup_pairs(&rows, &drugs);
            prop_assert_eq!(kept.len() + audit.records.len(), rows.len());
            let keys: BTreeSet<(&str, &str)> = kept.iter().map(|p| (p.cell_id.as_str(), p.drug_id.as_str())).collect();
            prop_assert_eq!(keys.len(), kept.len());

            let again: Vec<RawPair> = kept.iter().map(to_raw).collect();
            let (kept2, audit2) = filter_and_dedup_pairs(&again, &drugs);
            prop_assert_eq!(kept2, kept);
            prop_assert!(audit2.records.is_empty());
        }

        #[test]
        fn splits_partition_every_cell(
            sizes in prop::collection::vec(1..40usize, 1..6),
            seed in any::<u64>(),
        ) {
            let names: Vec<String> = (0..sizes.len()).map(|i| format!("K{i}")).collect();
            let spec: Vec<(&str, usize)> = names.iter().map(String::as_str).zip(sizes.iter().copied()).collect();
            let ds = dataset_with(&spec);
            let cfg = SplitConfig::default();
            let plan = make_splits(&ds, &cfg, seed).unwrap();
            plan.validate(&ds.cancer_of(), &cfg).unwrap();
            let total = plan.novel_test.len() + plan.trained_on_test.len() + plan.folds.iter().map(BTreeSet::len).sum::<usize>();
            prop_assert_eq!(total, ds.cells.len());
            for (name, n) in &spec {
                let novel = plan.novel_test.iter().filter(|c| c.starts_with(&format!("{name}-"))).count();
                prop_assert_eq!(novel, if *n < cfg.min_cancer_cells { *n } else { 0 });
            }
        }
    }
}
