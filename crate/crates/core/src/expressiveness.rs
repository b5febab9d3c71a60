//! How well an embedding space separates known groups: intra- and
//! inter-group cosine similarity, their ratio, and an exact t-SNE projection
//! for plotting.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::evaluation::{ttest_bonferroni, TTestResult};
use crate::linalg::{cosine, squared_distance, Matrix};
use crate::{Error, Result};

/// Vectors with an id and a group label each.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSet {
    pub item_ids: Vec<String>,
    pub groups: Vec<String>,
    pub vectors: Matrix,
}

impl EmbeddingSet {
    pub fn new(item_ids: Vec<String>, groups: Vec<String>, vectors: Matrix) -> Result<Self> {
        if item_ids.len() != vectors.rows() || groups.len() != vectors.rows() {
            return Err(Error::Shape(format!(
                "{} ids, {} groups, {} vectors",
                item_ids.len(),
                groups.len(),
                vectors.rows()
            )));
        }
        Ok(Self {
            item_ids,
            groups,
            vectors,
        })
    }

    pub fn len(&self) -> usize {
        self.item_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.item_ids.is_empty()
    }

    /// Keep only groups with at least `min_size` members.
    pub fn filter_min_group_size(&self, min_size: usize) -> EmbeddingSet {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for g in &self.groups {
            *counts.entry(g.as_str()).or_default() += 1;
        }
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| counts[self.groups[i].as_str()] >= min_size)
            .collect();
        self.subset(&keep)
    }

    fn subset(&self, keep: &[usize]) -> EmbeddingSet {
        EmbeddingSet {
            item_ids: keep.iter().map(|&i| self.item_ids[i].clone()).collect(),
            groups: keep.iter().map(|&i| self.groups[i].clone()).collect(),
            vectors: self.vectors.select_rows(keep),
        }
    }

    fn members(&self) -> BTreeMap<&str, Vec<usize>> {
        let mut m: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, g) in self.groups.iter().enumerate() {
            m.entry(g.as_str()).or_default().push(i);
        }
        m
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSimilarity {
    pub size: usize,
    /// Mean cosine over unordered member pairs; `None` for a singleton.
    pub intra: Option<f64>,
    /// Mean cosine between members and non-members; `None` when every item
    /// is in the group.
    pub inter: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub groups: BTreeMap<String, GroupSimilarity>,
    pub mean_intra: f64,
    pub mean_inter: f64,
    pub notes: Vec<String>,
}

fn cosine_matrix(set: &EmbeddingSet) -> Vec<Vec<f64>> {
    let n = set.len();
    let mut c = vec![vec![0.0; n]; n];
    for i in 0..n {
        c[i][i] = 1.0;
        for j in i + 1..n {
            let v = cosine(set.vectors.row(i), set.vectors.row(j)).expect("non-zero rows");
            c[i][j] = v;
            c[j][i] = v;
        }
    }
    c
}

/// Items with an all-zero vector have no cosine similarity; they are left
/// out and listed in the notes.
pub fn group_similarities(set: &EmbeddingSet) -> Result<SimilarityReport> {
    if set.is_empty() {
        return Err(Error::InvalidInput("empty embedding set".into()));
    }
    let mut notes = Vec::new();
    let (zero, keep): (Vec<usize>, Vec<usize>) =
        (0..set.len()).partition(|&i| set.vectors.row(i).iter().all(|v| *v == 0.0));
    let filtered;
    let set = if zero.is_empty() {
        set
    } else {
        if keep.is_empty() {
            return Err(Error::InvalidInput(
                "every item has a zero vector; cosine similarity is undefined".into(),
            ));
        }
        let ids: Vec<&str> = zero.iter().map(|&i| set.item_ids[i].as_str()).collect();
        notes.push(format!("{} zero-vector item(s) excluded: {}", ids.len(), ids.join(", ")));
        filtered = set.subset(&keep);
        &filtered
    };
    let c = cosine_matrix(set);
    let members = set.members();
    let mut groups = BTreeMap::new();
    for (g, idx) in &members {
        let mut intra_sum = 0.0;
        let mut intra_n = 0usize;
        for (a, &i) in idx.iter().enumerate() {
            for &j in &idx[a + 1..] {
                intra_sum += c[i][j];
                intra_n += 1;
            }
        }
        let mut inter_sum = 0.0;
        let mut inter_n = 0usize;
        for &i in idx {
            for (j, gj) in set.groups.iter().enumerate() {
                if gj != g {
                    inter_sum += c[i][j];
                    inter_n += 1;
                }
            }
        }
        if intra_n == 0 {
            notes.push(format!("group {g} has a single member; intra-group similarity is undefined"));
        }
        groups.insert(
            g.to_string(),
            GroupSimilarity {
                size: idx.len(),
                intra: (intra_n > 0).then(|| intra_sum / intra_n as f64),
                inter: (inter_n > 0).then(|| inter_sum / inter_n as f64),
            },
        );
    }
    let mean_of = |vals: Vec<f64>| {
        if vals.is_empty() {
            f64::NAN
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    };
    let mean_intra = mean_of(groups.values().filter_map(|g: &GroupSimilarity| g.intra).collect());
    let mean_inter = mean_of(groups.values().filter_map(|g: &GroupSimilarity| g.inter).collect());
    Ok(SimilarityReport {
        groups,
        mean_intra,
        mean_inter,
        notes,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityReport {
    /// intra / inter per group, for groups where both are defined and
    /// `|inter| >= 1e-12`.
    pub ratios: BTreeMap<String, f64>,
    pub mean: f64,
    pub notes: Vec<String>,
}

pub fn separability(set: &EmbeddingSet) -> Result<SeparabilityReport> {
    let sims = group_similarities(set)?;
    separability_from(&sims)
}

pub fn separability_from(sims: &SimilarityReport) -> Result<SeparabilityReport> {
    let mut ratios = BTreeMap::new();
    let mut notes = sims.notes.clone();
    for (g, s) in &sims.groups {
        match (s.intra, s.inter) {
            (Some(intra), Some(inter)) if inter.abs() >= 1e-12 => {
                ratios.insert(g.clone(), intra / inter);
            }
            (Some(_), Some(_)) => notes.push(format!("group {g} skipped: inter-group similarity is zero")),
            _ => notes.push(format!("group {g} skipped: ratio undefined")),
        }
    }
    if ratios.is_empty() {
        return Err(Error::InvalidInput("no group has a defined separability ratio".into()));
    }
    let mean = ratios.values().sum::<f64>() / ratios.len() as f64;
    Ok(SeparabilityReport { ratios, mean, notes })
}

/// Compare two representations of the same items by their per-group
/// ratios, using the pooled two-sample t-test.
pub fn compare_separability(a: &SeparabilityReport, b: &SeparabilityReport, n_tests: usize) -> Result<TTestResult> {
    let va: Vec<f64> = a.ratios.values().copied().collect();
    let vb: Vec<f64> = b.ratios.values().copied().collect();
    ttest_bonferroni(&va, &vb, n_tests)
}

// ---------------------------------------------------------------------------
// t-SNE
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub n_iters: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    pub momentum_switch_iter: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            n_iters: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            momentum_switch_iter: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TsneResult {
    pub coords: Matrix,
    /// KL divergence of the initial layout (without exaggeration).
    pub initial_kl: f64,
    pub final_kl: f64,
    /// KL every 50 iterations.
    pub kl_trace: Vec<(usize, f64)>,
}

const BETA_TOL: f64 = 1e-5;
const BETA_MAX_ITER: usize = 50;
const P_FLOOR: f64 = 1e-12;

/// Conditional affinity rows `p_{j|i}`, each summing to one, with the
/// Gaussian precision of row `i` found by bisection so that the row's
/// entropy is `ln(perplexity)`.
pub fn conditional_affinities(d2: &[Vec<f64>], perplexity: f64) -> Vec<Vec<f64>> {
    let n = d2.len();
    let target = perplexity.ln();
    let mut rows = vec![vec![0.0; n]; n];
    for i in 0..n {
        let mut beta = 1.0;
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        let mut row = vec![0.0; n];
        for _ in 0..BETA_MAX_ITER {
            // Shift by the smallest distance so the exponentials do not all underflow.
            let dmin = (0..n).filter(|&j| j != i).map(|j| d2[i][j]).fold(f64::INFINITY, f64::min);
            let mut sum = 0.0;
            for j in 0..n {
                row[j] = if j == i { 0.0 } else { (-(d2[i][j] - dmin) * beta).exp() };
                sum += row[j];
            }
            let mut weighted = 0.0;
            for j in 0..n {
                row[j] /= sum;
                weighted += row[j] * (d2[i][j] - dmin);
            }
            let entropy = sum.ln() + beta * weighted;
            let diff = entropy - target;
            if diff.abs() < BETA_TOL {
                break;
            }
            if diff > 0.0 {
                lo = beta;
                beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = if lo.is_finite() { (beta + lo) / 2.0 } else { beta / 2.0 };
            }
        }
        rows[i] = row;
    }
    rows
}

fn kl_divergence(p: &[Vec<f64>], y: &Matrix) -> f64 {
    let n = p.len();
    let mut num = vec![vec![0.0; n]; n];
    let mut z = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let q = 1.0 / (1.0 + squared_distance(y.row(i), y.row(j)));
                num[i][j] = q;
                z += q;
            }
        }
    }
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let q = (num[i][j] / z).max(P_FLOOR);
                kl += p[i][j] * (p[i][j] / q).ln();
            }
        }
    }
    kl
}

/// Exact t-SNE into two dimensions.
pub fn tsne(x: &Matrix, config: &TsneConfig) -> Result<TsneResult> {
    let n = x.rows();
    if n < 4 {
        return Err(Error::InvalidInput(format!("t-SNE needs at least 4 points, got {n}")));
    }
    let max_perp = (n as f64 - 1.0) / 3.0;
    if !(config.perplexity > 0.0 && config.perplexity <= max_perp) {
        return Err(Error::InvalidInput(format!(
            "perplexity {} is infeasible for {n} points (at most {max_perp:.3})",
            config.perplexity
        )));
    }
    let d2: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| squared_distance(x.row(i), x.row(j))).collect())
        .collect();
    let cond = conditional_affinities(&d2, config.perplexity);
    let mut p = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[i][j] = ((cond[i][j] + cond[j][i]) / (2.0 * n as f64)).max(P_FLOOR);
            }
        }
    }

    let mut rng = crate::seeded_rng(config.seed, 0x75e);
    let normal = Normal::new(0.0, 1e-4).expect("valid parameters");
    let mut y = Matrix::zeros(n, 2);
    for v in y.as_mut_slice() {
        *v = normal.sample(&mut rng);
    }
    let initial_kl = kl_divergence(&p, &y);
    let mut update = Matrix::zeros(n, 2);
    let mut gains = Matrix::from_vec(n, 2, vec![1.0; n * 2])?;
    let mut kl_trace = vec![(0, initial_kl)];
    let mut num = vec![vec![0.0; n]; n];

    for iter in 0..config.n_iters {
        let exaggeration = if iter < config.exaggeration_iters { config.early_exaggeration } else { 1.0 };
        let momentum = if iter < config.momentum_switch_iter {
            config.initial_momentum
        } else {
            config.final_momentum
        };
        let mut z = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let q = 1.0 / (1.0 + squared_distance(y.row(i), y.row(j)));
                num[i][j] = q;
                num[j][i] = q;
                z += 2.0 * q;
            }
        }
        for i in 0..n {
            let mut g = [0.0; 2];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let mult = (exaggeration * p[i][j] - num[i][j] / z) * num[i][j];
                g[0] += mult * (y.get(i, 0) - y.get(j, 0));
                g[1] += mult * (y.get(i, 1) - y.get(j, 1));
            }
            for (d, gd) in g.iter().enumerate() {
                let grad = 4.0 * gd;
                let u = update.get(i, d);
                let gain = if (grad > 0.0) != (u > 0.0) {
                    gains.get(i, d) + 0.2
                } else {
                    (gains.get(i, d) * 0.8).max(0.01)
                };
                gains.set(i, d, gain);
                update.set(i, d, momentum * u - config.learning_rate * gain * grad);
            }
        }
        for i in 0..n {
            for d in 0..2 {
                y.set(i, d, y.get(i, d) + update.get(i, d));
            }
        }
        // Recenter.
        for d in 0..2 {
            let m = (0..n).map(|i| y.get(i, d)).sum::<f64>() / n as f64;
            for i in 0..n {
                y.set(i, d, y.get(i, d) - m);
            }
        }
        if (iter + 1) % 50 == 0 {
            kl_trace.push((iter + 1, kl_divergence(&p, &y)));
        }
    }
    if y.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("t-SNE coordinates became non-finite".into()));
    }
    let final_kl = kl_divergence(&p, &y);
    Ok(TsneResult {
        coords: y,
        initial_kl,
        final_kl,
        kl_trace,
    })
}

/// Share of points whose nearest group centroid (in the projection) is
/// their own group's.
pub fn centroid_purity(coords: &Matrix, groups: &[String]) -> f64 {
    let mut sums: BTreeMap<&str, (Vec<f64>, usize)> = BTreeMap::new();
    for (i, g) in groups.iter().enumerate() {
        let e = sums.entry(g.as_str()).or_insert((vec![0.0; coords.cols()], 0));
        e.0.iter_mut().zip(coords.row(i)).for_each(|(a, b)| *a += b);
        e.1 += 1;
    }
    let centroids: Vec<(&str, Vec<f64>)> = sums
        .into_iter()
        .map(|(g, (s, k))| (g, s.into_iter().map(|v| v / k as f64).collect()))
        .collect();
    let correct = groups
        .iter()
        .enumerate()
        .filter(|(i, g)| {
            let nearest = centroids
                .iter()
                .min_by(|a, b| {
                    squared_distance(coords.row(*i), &a.1).total_cmp(&squared_distance(coords.row(*i), &b.1))
                })
                .map(|c| c.0);
            nearest == Some(g.as_str())
        })
        .count();
    correct as f64 / groups.len() as f64
}

/// Scatter plot with one colored marker shape per group and a legend.
pub fn scatter_svg(coords: &Matrix, groups: &[String], title: &str) -> String {
    const W: f64 = 640.0;
    const H: f64 = 480.0;
    const PAD: f64 = 40.0;
    const LEGEND: f64 = 160.0;
    const COLORS: [&str; 10] = [
        "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
    ];
    let names: Vec<&str> = {
        let mut v: Vec<&str> = groups.iter().map(String::as_str).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for r in coords.iter_rows() {
        xmin = xmin.min(r[0]);
        xmax = xmax.max(r[0]);
        ymin = ymin.min(r[1]);
        ymax = ymax.max(r[1]);
    }
    let sx = |v: f64| PAD + (v - xmin) / (xmax - xmin).max(1e-12) * (W - 2.0 * PAD);
    let sy = |v: f64| H - PAD - (v - ymin) / (ymax - ymin).max(1e-12) * (H - 2.0 * PAD);
    let marker = |k: usize, x: f64, y: f64, color: &str| -> String {
        match (k / COLORS.len()) % 3 {
            0 => format!(r#"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="{color}"/>"#),
            1 => format!(r#"<rect x="{:.2}" y="{:.2}" width="8" height="8" fill="{color}"/>"#, x - 4.0, y - 4.0),
            _ => format!(
                r#"<polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="{color}"/>"#,
                x,
                y - 5.0,
                x - 5.0,
                y + 4.0,
                x + 5.0,
                y + 4.0
            ),
        }
    };
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{H}" font-family="sans-serif" font-size="12">"#,
        W + LEGEND
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{PAD}" y="20">{}</text>"#, escape(title));
    for (i, g) in groups.iter().enumerate() {
        let k = names.binary_search(&g.as_str()).expect("name listed");
        let _ = writeln!(s, "{}", marker(k, sx(coords.get(i, 0)), sy(coords.get(i, 1)), COLORS[k % COLORS.len()]));
    }
    for (k, name) in names.iter().enumerate() {
        let y = PAD + 18.0 * k as f64;
        let _ = writeln!(s, "{}", marker(k, W + 10.0, y, COLORS[k % COLORS.len()]));
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}">{}</text>"#, W + 22.0, y + 4.0, escape(name));
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
