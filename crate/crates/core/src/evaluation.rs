//! Per-cell-line drug rankings and the metrics computed on them:
//! precision@k per cell line and per cancer, pooled two-sample t-tests with
//! Bonferroni correction, Spearman screens and approved-drug priorities.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::stats;
use crate::{Error, Result};

/// Drugs for one cell line ordered by descending score, ties by ascending
/// drug id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub cell_id: String,
    pub entries: Vec<(String, f64)>,
}

impl Ranking {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// First `k` drug ids.
    pub fn top(&self, k: usize) -> impl Iterator<Item = &str> {
        self.entries.iter().take(k).map(|(d, _)| d.as_str())
    }

    /// 1-based rank of every drug.
    pub fn ranks(&self) -> BTreeMap<&str, usize> {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, (d, _))| (d.as_str(), i + 1))
            .collect()
    }

    /// The same ordering restricted to `keep`, re-ranked from 1.
    pub fn restricted(&self, keep: impl Fn(&str) -> bool) -> Ranking {
        Ranking {
            cell_id: self.cell_id.clone(),
            entries: self.entries.iter().filter(|(d, _)| keep(d)).cloned().collect(),
        }
    }
}

pub fn rank_drugs(cell_id: &str, scores: &[(String, f64)]) -> Result<Ranking> {
    if scores.is_empty() {
        return Err(Error::InvalidInput(format!("no scored drugs for cell line {cell_id}")));
    }
    if let Some((d, _)) = scores.iter().find(|(_, s)| s.is_nan()) {
        return Err(Error::Numerical(format!("score for {d} on {cell_id} is NaN")));
    }
    let mut entries = scores.to_vec();
    entries.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(Ranking {
        cell_id: cell_id.to_string(),
        entries,
    })
}

/// Share of the top `k` drugs that are effective.
pub fn precision_cell_at_k(ranking: &Ranking, effective: &BTreeSet<String>, k: usize) -> Result<f64> {
    if k == 0 || k > ranking.len() {
        return Err(Error::InvalidInput(format!(
            "k = {k} outside 1..={} for cell line {}",
            ranking.len(),
            ranking.cell_id
        )));
    }
    let hits = ranking.top(k).filter(|d| effective.contains(*d)).count();
    Ok(hits as f64 / k as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CancerPrecision {
    pub per_cancer: BTreeMap<String, f64>,
    /// Unweighted mean over cancers.
    pub overall: f64,
}

/// Mean of the per-cell values within each cancer, and the unweighted mean
/// of those cancer means.
pub fn precision_cancer_at_k(
    per_cell: &BTreeMap<String, f64>,
    cancer_of: &BTreeMap<String, String>,
) -> Result<CancerPrecision> {
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (cell, v) in per_cell {
        let cancer = cancer_of
            .get(cell)
            .ok_or_else(|| Error::InvalidInput(format!("cell line {cell} has no cancer type")))?;
        groups.entry(cancer.clone()).or_default().push(*v);
    }
    if groups.is_empty() {
        return Err(Error::InvalidInput("no cell lines to aggregate".into()));
    }
    let per_cancer: BTreeMap<String, f64> = groups.into_iter().map(|(c, v)| (c, stats::mean(&v))).collect();
    let overall = per_cancer.values().sum::<f64>() / per_cancer.len() as f64;
    Ok(CancerPrecision { per_cancer, overall })
}

/// Precision@k tables for a set of rankings. Keys of the inner maps are `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ks: Vec<usize>,
    pub per_cell: BTreeMap<String, BTreeMap<usize, f64>>,
    pub per_cancer: BTreeMap<String, BTreeMap<usize, f64>>,
    /// Mean over cell lines.
    pub overall_cell: BTreeMap<usize, f64>,
    /// Unweighted mean over cancers.
    pub overall_cancer: BTreeMap<usize, f64>,
}

pub fn evaluate_rankings(
    rankings: &[Ranking],
    effective: &BTreeMap<String, BTreeSet<String>>,
    cancer_of: &BTreeMap<String, String>,
    ks: &[usize],
) -> Result<MetricsReport> {
    if rankings.is_empty() {
        return Err(Error::InvalidInput("no rankings to evaluate".into()));
    }
    let empty = BTreeSet::new();
    let mut per_cell: BTreeMap<String, BTreeMap<usize, f64>> = BTreeMap::new();
    for r in rankings {
        let e = effective.get(&r.cell_id).unwrap_or(&empty);
        let mut row = BTreeMap::new();
        for &k in ks {
            row.insert(k, precision_cell_at_k(r, e, k)?);
        }
        per_cell.insert(r.cell_id.clone(), row);
    }
    let mut per_cancer: BTreeMap<String, BTreeMap<usize, f64>> = BTreeMap::new();
    let mut overall_cell = BTreeMap::new();
    let mut overall_cancer = BTreeMap::new();
    for &k in ks {
        let at_k: BTreeMap<String, f64> = per_cell.iter().map(|(c, m)| (c.clone(), m[&k])).collect();
        overall_cell.insert(k, stats::mean(&at_k.values().copied().collect::<Vec<_>>()));
        let cp = precision_cancer_at_k(&at_k, cancer_of)?;
        for (cancer, v) in cp.per_cancer {
            per_cancer.entry(cancer).or_default().insert(k, v);
        }
        overall_cancer.insert(k, cp.overall);
    }
    Ok(MetricsReport {
        ks: ks.to_vec(),
        per_cell,
        per_cancer,
        overall_cell,
        overall_cancer,
    })
}

// ---------------------------------------------------------------------------
// Significance testing
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t_stat: f64,
    pub df: usize,
    pub p: f64,
    pub p_adjusted: f64,
    pub n_tests: usize,
}

impl TTestResult {
    pub fn stars(&self) -> &'static str {
        significance_stars(self.p_adjusted)
    }
}

/// `***`, `**` and `*` at adjusted p <= 0.01, 0.05 and 0.1.
pub fn significance_stars(p: f64) -> &'static str {
    if p <= 0.01 {
        "***"
    } else if p <= 0.05 {
        "**"
    } else if p <= 0.1 {
        "*"
    } else {
        ""
    }
}

pub fn bonferroni(p: f64, n_tests: usize) -> f64 {
    (p * n_tests as f64).min(1.0)
}

/// Two-tailed pooled-variance two-sample t-test, Bonferroni-adjusted for
/// `n_tests` comparisons.
pub fn ttest_bonferroni(a: &[f64], b: &[f64], n_tests: usize) -> Result<TTestResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "t-test needs at least 2 values per sample, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if n_tests == 0 {
        return Err(Error::InvalidInput("n_tests must be positive".into()));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let df = a.len() + b.len() - 2;
    let (ma, mb) = (stats::mean(a), stats::mean(b));
    let pooled = ((na - 1.0) * stats::sample_variance(a) + (nb - 1.0) * stats::sample_variance(b)) / df as f64;
    let (t, p) = if pooled == 0.0 {
        if ma == mb {
            (0.0, 1.0)
        } else {
            let t = if ma > mb { f64::INFINITY } else { f64::NEG_INFINITY };
            (t, 0.0)
        }
    } else {
        let t = (ma - mb) / (pooled * (1.0 / na + 1.0 / nb)).sqrt();
        (t, stats::student_t_two_tailed_p(t, df as f64))
    };
    Ok(TTestResult {
        t_stat: t,
        df,
        p,
        p_adjusted: bonferroni(p, n_tests),
        n_tests,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spearman {
    pub rho: f64,
    pub p: f64,
    pub n: usize,
}

/// Two-tailed p of a correlation coefficient over `n` points.
pub fn correlation_p(rho: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    if rho.abs() >= 1.0 {
        return 0.0;
    }
    let t = rho * (df / (1.0 - rho * rho)).sqrt();
    stats::student_t_two_tailed_p(t, df)
}

/// Rank correlation with midranks for ties. `Ok(None)` when either input
/// is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Option<Spearman>> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} vs {} values", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::InvalidInput("Spearman correlation needs at least 3 points".into()));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(Error::Numerical("NaN in correlation input".into()));
    }
    let rho = stats::pearson(&stats::midranks(x), &stats::midranks(y));
    Ok(rho.map(|rho| Spearman {
        rho,
        p: correlation_p(rho, x.len()),
        n: x.len(),
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneCorrelation {
    pub gene: String,
    pub rho: f64,
    pub p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationScreen {
    /// Genes passing both gates, by descending |rho| then name.
    pub hits: Vec<GeneCorrelation>,
    /// Genes with constant expression, for which rho is undefined.
    pub undefined: Vec<String>,
}

/// Spearman correlation of each gene's expression with a drug's rank across
/// cell lines; keeps genes with `|rho| > rho_min` and `p < p_max`.
pub fn priority_correlation_screen(
    ranks: &[f64],
    genes: &[String],
    expression: &Matrix,
    rho_min: f64,
    p_max: f64,
) -> Result<CorrelationScreen> {
    if expression.rows() != ranks.len() || expression.cols() != genes.len() {
        return Err(Error::Shape(format!(
            "expression is {}x{}, expected {}x{}",
            expression.rows(),
            expression.cols(),
            ranks.len(),
            genes.len()
        )));
    }
    let mut hits = Vec::new();
    let mut undefined = Vec::new();
    for (j, gene) in genes.iter().enumerate() {
        match spearman(&expression.column(j), ranks)? {
            None => undefined.push(gene.clone()),
            Some(s) if s.rho.abs() > rho_min && s.p < p_max => hits.push(GeneCorrelation {
                gene: gene.clone(),
                rho: s.rho,
                p: s.p,
            }),
            Some(_) => {}
        }
    }
    hits.sort_by(|a, b| b.rho.abs().total_cmp(&a.rho.abs()).then_with(|| a.gene.cmp(&b.gene)));
    Ok(CorrelationScreen { hits, undefined })
}

// ---------------------------------------------------------------------------
// Approved-drug priorities
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellPriority {
    pub cell_id: String,
    pub cancer_type: String,
    /// Rank of each approved drug within the approved-only ranking.
    pub approved_ranks: BTreeMap<String, usize>,
    pub mean_rank: f64,
    /// Smallest rank value, i.e. the highest priority.
    pub best_rank: usize,
    pub top_drug: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CancerPriority {
    pub cancer_type: String,
    pub n_cells: usize,
    pub n_approved: usize,
    pub mean_mean_rank: f64,
    pub mean_best_rank: f64,
    pub top_drug: String,
    /// Share of cell lines whose top approved drug is `top_drug`, in percent.
    pub top_drug_pct: f64,
    /// Population standard deviation of `top_drug`'s rank across the cells.
    pub top_drug_rank_std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorityReport {
    pub per_cell: Vec<CellPriority>,
    pub per_cancer: Vec<CancerPriority>,
    /// Mean over cancers of `top_drug_rank_std`.
    pub mean_top_drug_rank_std: f64,
    pub notes: Vec<String>,
}

/// Rankings are restricted to drugs with at least one indication; each
/// cell line is then summarized over the drugs approved for its cancer.
/// Cell lines without such a drug are left out with a note.
pub fn fda_priority_analysis(
    rankings: &[Ranking],
    indications: &BTreeMap<String, BTreeSet<String>>,
    cancer_of: &BTreeMap<String, String>,
) -> Result<PriorityReport> {
    let mut per_cell = Vec::new();
    let mut restricted_ranks: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    let mut notes = Vec::new();
    for r in rankings {
        let cancer = cancer_of
            .get(&r.cell_id)
            .ok_or_else(|| Error::InvalidInput(format!("cell line {} has no cancer type", r.cell_id)))?;
        let restricted = r.restricted(|d| indications.get(d).is_some_and(|s| !s.is_empty()));
        let ranks: BTreeMap<String, usize> = restricted
            .ranks()
            .into_iter()
            .map(|(d, k)| (d.to_string(), k))
            .collect();
        let approved: BTreeMap<String, usize> = ranks
            .iter()
            .filter(|(d, _)| indications[*d].contains(cancer))
            .map(|(d, k)| (d.clone(), *k))
            .collect();
        if approved.is_empty() {
            notes.push(format!(
                "cell line {} excluded: no candidate drug is approved for {cancer}",
                r.cell_id
            ));
            continue;
        }
        let (top_drug, best_rank) = approved
            .iter()
            .min_by_key(|(d, k)| (**k, (*d).clone()))
            .map(|(d, k)| (d.clone(), *k))
            .expect("non-empty");
        let mean_rank = approved.values().sum::<usize>() as f64 / approved.len() as f64;
        restricted_ranks.insert(r.cell_id.clone(), ranks);
        per_cell.push(CellPriority {
            cell_id: r.cell_id.clone(),
            cancer_type: cancer.clone(),
            approved_ranks: approved,
            mean_rank,
            best_rank,
            top_drug,
        });
    }

    let mut by_cancer: BTreeMap<&str, Vec<&CellPriority>> = BTreeMap::new();
    for c in &per_cell {
        by_cancer.entry(c.cancer_type.as_str()).or_default().push(c);
    }
    let mut per_cancer = Vec::new();
    for (cancer, cells) in by_cancer {
        let n = cells.len() as f64;
        let mut votes: BTreeMap<&str, usize> = BTreeMap::new();
        for c in &cells {
            *votes.entry(c.top_drug.as_str()).or_default() += 1;
        }
        // Highest count wins; the BTreeMap order settles ties by name.
        let (top, count) = votes
            .iter()
            .fold(("", 0usize), |best, (d, k)| if *k > best.1 { (*d, *k) } else { best });
        let top_ranks: Vec<f64> = cells
            .iter()
            .map(|c| restricted_ranks[&c.cell_id][top] as f64)
            .collect();
        let n_approved = indications
            .iter()
            .filter(|(_, s)| s.contains(cancer))
            .filter(|(d, _)| cells.iter().any(|c| restricted_ranks[&c.cell_id].contains_key(*d)))
            .count();
        per_cancer.push(CancerPriority {
            cancer_type: cancer.to_string(),
            n_cells: cells.len(),
            n_approved,
            mean_mean_rank: cells.iter().map(|c| c.mean_rank).sum::<f64>() / n,
            mean_best_rank: cells.iter().map(|c| c.best_rank as f64).sum::<f64>() / n,
            top_drug: top.to_string(),
            top_drug_pct: 100.0 * count as f64 / n,
            top_drug_rank_std: stats::population_variance(&top_ranks).sqrt(),
        });
    }
    let mean_top_drug_rank_std = if per_cancer.is_empty() {
        0.0
    } else {
        per_cancer.iter().map(|c| c.top_drug_rank_std).sum::<f64>() / per_cancer.len() as f64
    };
    Ok(PriorityReport {
        per_cell,
        per_cancer,
        mean_top_drug_rank_std,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scores(v: &[(&str, f64)]) -> Vec<(String, f64)> {
        v.iter().map(|(d, s)| (d.to_string(), *s)).collect()
    }

    fn set(v: &[&str]) -> BTreeSet<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn ids(r: &Ranking) -> Vec<&str> {
        r.entries.iter().map(|(d, _)| d.as_str()).collect()
    }

    #[test]
    fn ranking_order_and_ties() {
        assert_eq!(ids(&rank_drugs("c", &scores(&[("B", 0.1), ("A", 0.9)])).unwrap()), vec!["A", "B"]);
        assert_eq!(ids(&rank_drugs("c", &scores(&[("B", 0.5), ("A", 0.5)])).unwrap()), vec!["A", "B"]);
        assert!(rank_drugs("c", &scores(&[("A", f64::NAN)])).is_err());
        assert!(rank_drugs("c", &[]).is_err());
    }

    #[test]
    fn precision_hand_counts() {
        let r = rank_drugs("c", &scores(&[("A", 0.9), ("C", 0.8), ("B", 0.7), ("D", 0.1)])).unwrap();
        let e = set(&["A", "B"]);
        assert_eq!(precision_cell_at_k(&r, &e, 2).unwrap(), 0.5);
        assert!((precision_cell_at_k(&r, &e, 3).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        for k in 1..=4 {
            assert_eq!(precision_cell_at_k(&r, &BTreeSet::new(), k).unwrap(), 0.0);
        }
        assert!(precision_cell_at_k(&r, &e, 0).is_err());
        assert!(precision_cell_at_k(&r, &e, 5).is_err());
    }

    #[test]
    fn cancer_means_are_unweighted() {
        let per_cell: BTreeMap<String, f64> =
            [("a", 1.0), ("b", 0.0), ("c", 1.0), ("d", 1.0), ("e", 1.0)].map(|(c, v)| (c.to_string(), v)).into();
        let cancer_of: BTreeMap<String, String> =
            [("a", "X"), ("b", "X"), ("c", "Y"), ("d", "Y"), ("e", "Y")].map(|(c, k)| (c.to_string(), k.to_string())).into();
        let cp = precision_cancer_at_k(&per_cell, &cancer_of).unwrap();
        assert_eq!(cp.per_cancer["X"], 0.5);
        assert_eq!(cp.per_cancer["Y"], 1.0);
        assert_eq!(cp.overall, 0.75);
    }

    #[test]
    fn ttest_examples() {
        let r = ttest_bonferroni(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], 1).unwrap();
        assert!((r.t_stat + 3.0 / (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((r.t_stat + 3.674).abs() < 1e-3);
        assert!((r.p - 0.0213).abs() < 1e-4);
        assert_eq!(r.df, 4);
        let same = ttest_bonferroni(&[2.0, 2.0], &[2.0, 2.0], 3).unwrap();
        assert_eq!((same.t_stat, same.p, same.p_adjusted), (0.0, 1.0, 1.0));
        assert!((bonferroni(0.01, 4) - 0.04).abs() < 1e-15);
        assert_eq!(bonferroni(0.4, 4), 1.0);
        let swapped = ttest_bonferroni(&[4.0, 5.0, 6.0], &[1.0, 2.0, 3.0], 1).unwrap();
        assert_eq!(swapped.t_stat, -r.t_stat);
        assert_eq!(swapped.p, r.p);
    }

    #[test]
    fn stars_thresholds() {
        assert_eq!(significance_stars(0.01), "***");
        assert_eq!(significance_stars(0.05), "**");
        assert_eq!(significance_stars(0.1), "*");
        assert_eq!(significance_stars(0.11), "");
    }

    #[test]
    fn spearman_examples() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap().unwrap().rho, 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[6.0, 4.0, 2.0]).unwrap().unwrap().rho, -1.0);
        assert_eq!(spearman(&[1.0, 1.0, 1.0], &[6.0, 4.0, 2.0]).unwrap(), None);
        let p = correlation_p(-0.5037, 43);
        assert!((p - 0.0006).abs() < 5e-5, "{p}");
    }

    #[test]
    fn screen_keeps_tracking_gene_and_flags_constant() {
        let ranks = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let x = Matrix::from_rows(&[
            vec![10.0, 5.0, 1.0],
            vec![9.0, 5.0, 3.0],
            vec![8.0, 5.0, 2.0],
            vec![7.0, 5.0, 1.0],
            vec![6.0, 5.0, 3.0],
            vec![5.0, 5.0, 2.0],
        ])
        .unwrap();
        let genes = ["TRACK", "FLAT", "NOISE"].map(String::from).to_vec();
        let s = priority_correlation_screen(&ranks, &genes, &x, 0.35, 0.1).unwrap();
        assert_eq!(s.hits.len(), 1);
        assert_eq!(s.hits[0].gene, "TRACK");
        assert_eq!(s.hits[0].rho, -1.0);
        assert_eq!(s.undefined, vec!["FLAT".to_string()]);
    }

    #[test]
    fn priority_examples() {
        let r = rank_drugs("c1", &scores(&[("A", 0.9), ("B", 0.5), ("C", 0.1)])).unwrap();
        let cancer_of: BTreeMap<String, String> = [("c1".to_string(), "Lung".to_string())].into();
        let mut ind: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        ind.insert("A".into(), set(&["Skin"]));
        ind.insert("B".into(), set(&["Lung"]));
        ind.insert("C".into(), set(&["Skin"]));
        let rep = fda_priority_analysis(std::slice::from_ref(&r), &ind, &cancer_of).unwrap();
        let c = &rep.per_cell[0];
        assert_eq!((c.mean_rank, c.best_rank, c.top_drug.as_str()), (2.0, 2, "B"));
        assert_eq!(rep.per_cancer[0].top_drug_pct, 100.0);

        ind.insert("A".into(), set(&["Lung"]));
        ind.insert("B".into(), set(&["Skin"]));
        ind.insert("C".into(), set(&["Lung"]));
        let rep = fda_priority_analysis(&[r], &ind, &cancer_of).unwrap();
        let c = &rep.per_cell[0];
        assert_eq!((c.mean_rank, c.best_rank), (2.0, 1));
    }

    proptest! {
        #[test]
        fn ranking_is_input_order_free(mut v in proptest::collection::vec((0u8..20, 0u8..5), 1..15)) {
            v.sort();
            v.dedup_by_key(|p| p.0);
            let items: Vec<(String, f64)> = v.iter().map(|(d, s)| (format!("D{d:02}"), f64::from(*s))).collect();
            let mut rev = items.clone();
            rev.reverse();
            prop_assert_eq!(rank_drugs("c", &items).unwrap(), rank_drugs("c", &rev).unwrap());
        }

        #[test]
        fn hit_count_grows_with_k(n in 1usize..20, mask in proptest::collection::vec(any::<bool>(), 20), seed in 0u64..1000) {
            let items: Vec<(String, f64)> = (0..n).map(|i| (format!("D{i:02}"), ((i as u64 * 7919 + seed) % 13) as f64)).collect();
            let r = rank_drugs("c", &items).unwrap();
            let e: BTreeSet<String> = (0..n).filter(|i| mask[*i]).map(|i| format!("D{i:02}")).collect();
            let mut prev = 0.0;
            for k in 1..=n {
                let p = precision_cell_at_k(&r, &e, k).unwrap();
                prop_assert!((0.0..=1.0).contains(&p));
                let hits = p * k as f64;
                prop_assert!((hits - hits.round()).abs() < 1e-9);
                prop_assert!(hits + 1e-9 >= prev);
                prev = hits;
            }
        }

        #[test]
        fn spearman_ignores_monotone_transforms(xs in proptest::collection::vec(-100.0f64..100.0, 5..20)) {
            let ys: Vec<f64> = xs.iter().enumerate().map(|(i, x)| x.sin() + i as f64 * 0.01).collect();
            let a = spearman(&xs, &ys).unwrap();
            let xt: Vec<f64> = xs.iter().map(|x| x * x * x + 2.0 * x).collect();
            let b = spearman(&xt, &ys).unwrap();
            if let (Some(a), Some(b)) = (a, b) {
                prop_assert!((a.rho - b.rho).abs() < 1e-12);
            }
        }
    }
}
