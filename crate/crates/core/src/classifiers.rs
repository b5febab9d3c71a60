//! End classifiers over concatenated drug and cell-line features: logistic
//! regression, random forest and a dense network, with feature importance,
//! fold-to-fold coefficient stability and a generic grid search.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{sigmoid, Matrix};
use crate::neural::{self, Activation, Loss, MlpModel, TrainConfig, TrainReport};
use crate::{Error, Result};

/// Width of the drug block and the cell block of a feature vector. Drug
/// features always come first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub drug_dim: usize,
    pub cell_dim: usize,
}

impl FeatureLayout {
    pub fn width(&self) -> usize {
        self.drug_dim + self.cell_dim
    }

    pub fn is_drug(&self, j: usize) -> bool {
        j < self.drug_dim
    }
}

fn check_xy(x: &Matrix, y: &[u8]) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::Shape(format!("{} rows but {} labels", x.rows(), y.len())));
    }
    if x.rows() == 0 {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    if y.iter().any(|&v| v > 1) {
        return Err(Error::InvalidInput("labels must be 0 or 1".into()));
    }
    Ok(())
}

fn check_width(expected: usize, x: &Matrix) -> Result<()> {
    if x.cols() != expected {
        return Err(Error::Shape(format!("input has {} columns, model expects {expected}", x.cols())));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Logistic regression
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticConfig {
    /// L2 strength on the coefficients (the intercept is not penalized).
    pub l2: f64,
    pub max_iter: usize,
    /// Convergence threshold on the gradient's largest absolute entry.
    pub tol: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            max_iter: 1000,
            tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Set when the labels hold a single class, so the unpenalized intercept
    /// has no finite optimum.
    pub single_class_warning: bool,
}

impl LogisticModel {
    pub fn predict_scores(&self, x: &Matrix) -> Result<Vec<f64>> {
        check_width(self.coefficients.len(), x)?;
        Ok(x.iter_rows()
            .map(|r| sigmoid(self.intercept + crate::linalg::dot(r, &self.coefficients)))
            .collect())
    }
}

/// Penalized mean BCE and its gradient (coefficients, then intercept).
fn logistic_objective(x: &Matrix, y: &[f64], w: &[f64], b: f64, l2: f64) -> (f64, Vec<f64>, f64) {
    let n = x.rows() as f64;
    let mut loss = 0.0;
    let mut gw = vec![0.0; w.len()];
    let mut gb = 0.0;
    for (r, &t) in x.iter_rows().zip(y) {
        let z = b + crate::linalg::dot(r, w);
        loss += crate::linalg::softplus(z) - t * z;
        let d = sigmoid(z) - t;
        gb += d;
        gw.iter_mut().zip(r).for_each(|(g, v)| *g += d * v);
    }
    loss /= n;
    gb /= n;
    for (g, wi) in gw.iter_mut().zip(w) {
        *g = *g / n + l2 * wi;
    }
    loss += 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>();
    (loss, gw, gb)
}

/// Full-batch gradient descent. A step that raises the loss is halved until
/// it does not; accepted steps grow by a quarter for the next iteration.
pub fn train_logistic(x: &Matrix, y: &[u8], config: &LogisticConfig) -> Result<LogisticModel> {
    check_xy(x, y)?;
    if !(config.l2 >= 0.0) {
        return Err(Error::InvalidInput("l2 must be non-negative".into()));
    }
    let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
    let single_class = y.iter().all(|&v| v == y[0]);
    let mut w = vec![0.0; x.cols()];
    let mut b = 0.0;
    let mut step = 1.0;
    let (mut loss, mut gw, mut gb) = logistic_objective(x, &yf, &w, b, config.l2);
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..config.max_iter {
        let gmax = gw.iter().fold(gb.abs(), |m, g| m.max(g.abs()));
        if gmax < config.tol {
            converged = true;
            iterations = it;
            break;
        }
        let mut accepted = false;
        for _ in 0..60 {
            let nw: Vec<f64> = w.iter().zip(&gw).map(|(a, g)| a - step * g).collect();
            let nb = b - step * gb;
            let (nl, ngw, ngb) = logistic_objective(x, &yf, &nw, nb, config.l2);
            if nl <= loss {
                w = nw;
                b = nb;
                loss = nl;
                gw = ngw;
                gb = ngb;
                accepted = true;
                step *= 1.25;
                break;
            }
            step *= 0.5;
        }
        iterations = it + 1;
        if !accepted {
            break;
        }
    }
    if !loss.is_finite() || w.iter().any(|v| !v.is_finite()) || !b.is_finite() {
        return Err(Error::Numerical("logistic regression diverged".into()));
    }
    Ok(LogisticModel {
        coefficients: w,
        intercept: b,
        iterations,
        converged,
        single_class_warning: single_class,
    })
}

/// Mean absolute coefficient over all folds and dimensions, and the
/// population variance of each coefficient across folds averaged over
/// dimensions.
pub fn coefficient_stability(models: &[LogisticModel]) -> Result<(f64, f64)> {
    if models.len() < 2 {
        return Err(Error::InvalidInput("coefficient stability needs at least two models".into()));
    }
    let d = models[0].coefficients.len();
    if models.iter().any(|m| m.coefficients.len() != d) || d == 0 {
        return Err(Error::Shape("fold models have different widths".into()));
    }
    let k = models.len() as f64;
    let mut abs_total = 0.0;
    let mut var_total = 0.0;
    for j in 0..d {
        let col: Vec<f64> = models.iter().map(|m| m.coefficients[j]).collect();
        abs_total += col.iter().map(|v| v.abs()).sum::<f64>();
        var_total += crate::stats::population_variance(&col);
    }
    Ok((abs_total / (k * d as f64), var_total / d as f64))
}

// ---------------------------------------------------------------------------
// Random forest
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    #[default]
    Gini,
    Entropy,
}

impl Criterion {
    /// Impurity of a node with positive fraction `p`.
    fn impurity(self, p: f64) -> f64 {
        match self {
            Criterion::Gini => 2.0 * p * (1.0 - p),
            Criterion::Entropy => {
                let h = |q: f64| if q > 0.0 { -q * q.log2() } else { 0.0 };
                h(p) + h(1.0 - p)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub criterion: Criterion,
    pub n_estimators: usize,
    pub min_samples_split: usize,
    /// Candidate features per split.
    pub max_features: MaxFeatures,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    Sqrt,
    Log2,
    All,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, n_features: usize) -> usize {
        let k = match self {
            MaxFeatures::Sqrt => (n_features as f64).sqrt() as usize,
            MaxFeatures::Log2 => (n_features as f64).log2() as usize,
            MaxFeatures::All => n_features,
            MaxFeatures::Count(k) => k,
        };
        k.clamp(1, n_features.max(1))
    }
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            criterion: Criterion::Gini,
            n_estimators: 100,
            min_samples_split: 20,
            max_features: MaxFeatures::Sqrt,
            seed: 0,
        }
    }
}

/// Tree node; children are indices into the owning tree's node list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        /// Share of positive samples (bootstrap multiplicities included).
        fraction: f64,
        n_samples: usize,
    },
    Split {
        feature: usize,
        /// Samples with `x[feature] <= threshold` go left.
        threshold: f64,
        left: usize,
        right: usize,
        n_samples: usize,
        impurity_decrease: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Root first.
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_fraction(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { fraction, .. } => return *fraction,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub criterion: Criterion,
    pub n_estimators: usize,
    pub min_samples_split: usize,
    pub max_features: MaxFeatures,
    pub seed: u64,
    pub n_features: usize,
    /// Mean decrease in impurity per feature, summing to 1 unless no tree
    /// split at all.
    pub importances: Vec<f64>,
}

impl ForestModel {
    /// Mean leaf fraction over trees. Per-row tree outputs are summed in
    /// sorted order, so the result does not depend on tree order.
    pub fn predict_scores(&self, x: &Matrix) -> Result<Vec<f64>> {
        check_width(self.n_features, x)?;
        let n = self.trees.len() as f64;
        Ok(x.iter_rows()
            .map(|r| {
                let mut v: Vec<f64> = self.trees.iter().map(|t| t.leaf_fraction(r)).collect();
                v.sort_by(f64::total_cmp);
                v.iter().sum::<f64>() / n
            })
            .collect())
    }
}

struct TreeBuilder<'a> {
    x: &'a Matrix,
    y: &'a [u8],
    weight: Vec<u32>,
    criterion: Criterion,
    min_samples_split: usize,
    max_features: usize,
    rng: crate::Rng,
    features: Vec<usize>,
    column: Vec<(f64, u32)>,
    nodes: Vec<Node>,
    importance: Vec<f64>,
    total_weight: f64,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl TreeBuilder<'_> {
    fn counts(&self, rows: &[u32]) -> (f64, f64) {
        let mut w = 0.0;
        let mut pos = 0.0;
        for &r in rows {
            let c = f64::from(self.weight[r as usize]);
            w += c;
            if self.y[r as usize] == 1 {
                pos += c;
            }
        }
        (w, pos)
    }

    /// Features are drawn without replacement until `max_features`
    /// non-constant ones have been scanned or none are left.
    fn best_split(&mut self, rows: &[u32], w: f64, pos: f64, parent: f64) -> Option<BestSplit> {
        let p = self.features.len();
        let mut best: Option<BestSplit> = None;
        let mut scanned = 0;
        let mut i = 0;
        while i < p && scanned < self.max_features {
            let pick = self.rng.random_range(i..p);
            self.features.swap(i, pick);
            let j = self.features[i];
            i += 1;
            self.column.clear();
            self.column.extend(rows.iter().map(|&r| (self.x.get(r as usize, j), r)));
            self.column.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            if self.column[0].0 == self.column[self.column.len() - 1].0 {
                continue;
            }
            scanned += 1;
            let mut wl = 0.0;
            let mut pl = 0.0;
            for k in 0..self.column.len() - 1 {
                let (a, r) = self.column[k];
                let r = r as usize;
                let c = f64::from(self.weight[r]);
                wl += c;
                if self.y[r] == 1 {
                    pl += c;
                }
                let b = self.column[k + 1].0;
                if a == b {
                    continue;
                }
                let wr = w - wl;
                let pr = pos - pl;
                let child = (wl / w) * self.criterion.impurity(pl / wl) + (wr / w) * self.criterion.impurity(pr / wr);
                let gain = parent - child;
                if best.as_ref().is_none_or(|bs| gain > bs.gain) {
                    let mid = 0.5 * (a + b);
                    let threshold = if mid < b { mid } else { a };
                    best = Some(BestSplit {
                        feature: j,
                        threshold,
                        gain,
                    });
                }
            }
        }
        best
    }

    /// Grow the subtree for `rows` (sorted, distinct) and return its node
    /// index.
    fn grow(&mut self, rows: Vec<u32>) -> usize {
        let (w, pos) = self.counts(&rows);
        let p = if w > 0.0 { pos / w } else { 0.0 };
        let parent = self.criterion.impurity(p);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            fraction: p,
            n_samples: w as usize,
        });
        if (w as usize) < self.min_samples_split || parent <= 0.0 || rows.len() < 2 {
            return id;
        }
        let Some(split) = self.best_split(&rows, w, pos, parent) else {
            return id;
        };
        let (left, right): (Vec<u32>, Vec<u32>) = rows
            .into_iter()
            .partition(|&r| self.x.get(r as usize, split.feature) <= split.threshold);
        self.importance[split.feature] += (w / self.total_weight) * split.gain.max(0.0);
        let l = self.grow(left);
        let r = self.grow(right);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: l,
            right: r,
            n_samples: w as usize,
            impurity_decrease: split.gain,
        };
        id
    }
}

fn grow_tree(x: &Matrix, y: &[u8], config: &ForestConfig, tree_index: usize) -> (Tree, Vec<f64>) {
    let n = x.rows();
    let mut rng = crate::seeded_rng(config.seed, 0xf0_0000 + tree_index as u64);
    let mut weight = vec![0u32; n];
    for _ in 0..n {
        weight[rng.random_range(0..n)] += 1;
    }
    let rows: Vec<u32> = (0..n as u32).filter(|&r| weight[r as usize] > 0).collect();
    let mut b = TreeBuilder {
        x,
        y,
        weight,
        criterion: config.criterion,
        min_samples_split: config.min_samples_split,
        max_features: config.max_features.resolve(x.cols()),
        rng,
        features: (0..x.cols()).collect(),
        column: Vec::with_capacity(rows.len()),
        nodes: Vec::new(),
        importance: vec![0.0; x.cols()],
        total_weight: n as f64,
    };
    b.grow(rows);
    let total: f64 = b.importance.iter().sum();
    if total > 0.0 {
        b.importance.iter_mut().for_each(|v| *v /= total);
    }
    (Tree { nodes: b.nodes }, b.importance)
}

/// Bagged CART trees grown in parallel; tree `i` always uses the bootstrap
/// stream `(seed, i)`, so the forest does not depend on scheduling.
pub fn train_forest(x: &Matrix, y: &[u8], config: &ForestConfig) -> Result<ForestModel> {
    check_xy(x, y)?;
    if config.n_estimators == 0 {
        return Err(Error::InvalidInput("n_estimators must be positive".into()));
    }
    if x.rows() < config.min_samples_split {
        return Err(Error::InvalidInput(format!(
            "{} rows is fewer than min_samples_split {}",
            x.rows(),
            config.min_samples_split
        )));
    }
    let grown: Vec<(Tree, Vec<f64>)> = (0..config.n_estimators)
        .into_par_iter()
        .map(|i| grow_tree(x, y, config, i))
        .collect();
    let mut importances = vec![0.0; x.cols()];
    for (_, imp) in &grown {
        importances.iter_mut().zip(imp).for_each(|(a, b)| *a += b);
    }
    let total: f64 = importances.iter().sum();
    if total > 0.0 {
        importances.iter_mut().for_each(|v| *v /= total);
    }
    Ok(ForestModel {
        trees: grown.into_iter().map(|(t, _)| t).collect(),
        criterion: config.criterion,
        n_estimators: config.n_estimators,
        min_samples_split: config.min_samples_split,
        max_features: config.max_features,
        seed: config.seed,
        n_features: x.cols(),
        importances,
    })
}

// ---------------------------------------------------------------------------
// Dense network classifier
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DnnConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub dropout_rate: f64,
    pub val_fraction: f64,
    pub train: TrainConfig,
}

impl Default for DnnConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            activation: Activation::Relu,
            dropout_rate: 0.1,
            val_fraction: 0.1,
            train: TrainConfig {
                learning_rate: 0.01,
                decay_rate: 0.99,
                decay_steps: 500,
                patience: 10,
                min_delta: 1e-4,
                batch_size: 256,
                max_epochs: 1000,
                seed: 0,
                loss: Loss::Bce,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DnnModel {
    pub network: MlpModel,
    pub report: TrainReport,
}

impl DnnModel {
    pub fn predict_scores(&self, x: &Matrix) -> Result<Vec<f64>> {
        Ok(self.network.predict(x)?.into_vec())
    }
}

/// Sigmoid-output network under BCE, early-stopped on a seeded 10% holdout
/// of the training rows.
pub fn train_dnn(x: &Matrix, y: &[u8], config: &DnnConfig) -> Result<DnnModel> {
    check_xy(x, y)?;
    let mut dims = vec![x.cols()];
    dims.extend(&config.hidden);
    dims.push(1);
    let mut rng = crate::seeded_rng(config.train.seed, 0xd11);
    let model = MlpModel::new(&dims, config.activation, Activation::Sigmoid, config.dropout_rate, &mut rng)?;
    let (tr, va) = neural::holdout_split(x.rows(), config.val_fraction, config.train.seed);
    let targets = Matrix::from_vec(y.len(), 1, y.iter().map(|&v| f64::from(v)).collect())?;
    let train_config = TrainConfig {
        loss: Loss::Bce,
        ..config.train.clone()
    };
    let (network, report) = neural::train(
        model,
        &x.select_rows(&tr),
        &targets.select_rows(&tr),
        &x.select_rows(&va),
        &targets.select_rows(&va),
        &train_config,
    )?;
    Ok(DnnModel { network, report })
}

// ---------------------------------------------------------------------------
// Common interface
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierConfig {
    Logistic(LogisticConfig),
    Forest(ForestConfig),
    Dnn(DnnConfig),
}

impl ClassifierConfig {
    pub fn short_name(&self) -> &'static str {
        match self {
            ClassifierConfig::Logistic(_) => "lr",
            ClassifierConfig::Forest(_) => "rf",
            ClassifierConfig::Dnn(_) => "dnn",
        }
    }

    /// Same configuration with its random seed replaced.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        match &mut c {
            ClassifierConfig::Logistic(_) => {}
            ClassifierConfig::Forest(f) => f.seed = seed,
            ClassifierConfig::Dnn(d) => d.train.seed = seed,
        }
        c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Classifier {
    Logistic(LogisticModel),
    Forest(ForestModel),
    Dnn(DnnModel),
}

impl Classifier {
    /// Scores in `[0, 1]`, one per row.
    pub fn predict_scores(&self, x: &Matrix) -> Result<Vec<f64>> {
        match self {
            Classifier::Logistic(m) => m.predict_scores(x),
            Classifier::Forest(m) => m.predict_scores(x),
            Classifier::Dnn(m) => m.predict_scores(x),
        }
    }
}

pub fn train_classifier(x: &Matrix, y: &[u8], config: &ClassifierConfig) -> Result<Classifier> {
    Ok(match config {
        ClassifierConfig::Logistic(c) => Classifier::Logistic(train_logistic(x, y, c)?),
        ClassifierConfig::Forest(c) => Classifier::Forest(train_forest(x, y, c)?),
        ClassifierConfig::Dnn(c) => Classifier::Dnn(train_dnn(x, y, c)?),
    })
}

// ---------------------------------------------------------------------------
// Feature importance
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub method: String,
    pub values: Vec<f64>,
    pub drug_mean: f64,
    pub cell_mean: f64,
}

impl FeatureImportance {
    fn new(method: &str, values: Vec<f64>, layout: FeatureLayout) -> Result<Self> {
        if values.len() != layout.width() {
            return Err(Error::Shape(format!(
                "{} importances for a {}-wide layout",
                values.len(),
                layout.width()
            )));
        }
        let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
        let (d, c) = values.split_at(layout.drug_dim);
        Ok(Self {
            method: method.into(),
            drug_mean: mean(d),
            cell_mean: mean(c),
            values,
        })
    }
}

fn mean_bce(scores: &[f64], y: &[u8]) -> f64 {
    const EPS: f64 = 1e-12;
    scores
        .iter()
        .zip(y)
        .map(|(&p, &t)| {
            let p = p.clamp(EPS, 1.0 - EPS);
            if t == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum::<f64>()
        / y.len() as f64
}

/// Mean increase in BCE when one column is shuffled, over `repeats` seeded
/// shuffles. A constant column scores exactly zero.
pub fn permutation_importance(model: &Classifier, x: &Matrix, y: &[u8], repeats: usize, seed: u64) -> Result<Vec<f64>> {
    check_xy(x, y)?;
    let base = mean_bce(&model.predict_scores(x)?, y);
    (0..x.cols())
        .into_par_iter()
        .map(|j| {
            let col = x.column(j);
            if col.iter().all(|v| *v == col[0]) {
                return Ok(0.0);
            }
            let mut rng = crate::seeded_rng(seed, 0x9e_0000 + j as u64);
            let mut xp = x.clone();
            let mut total = 0.0;
            for _ in 0..repeats {
                let mut perm = col.clone();
                perm.shuffle(&mut rng);
                for (i, v) in perm.iter().enumerate() {
                    xp.set(i, j, *v);
                }
                total += mean_bce(&model.predict_scores(&xp)?, y) - base;
            }
            Ok(total / repeats as f64)
        })
        .collect()
}

/// Forest: normalized impurity decrease. Logistic: absolute coefficients.
/// Network: permutation importance on `data` (required).
pub fn feature_importance(
    model: &Classifier,
    layout: FeatureLayout,
    data: Option<(&Matrix, &[u8])>,
    seed: u64,
) -> Result<FeatureImportance> {
    match model {
        Classifier::Forest(f) => FeatureImportance::new("impurity_decrease", f.importances.clone(), layout),
        Classifier::Logistic(m) => FeatureImportance::new(
            "abs_coefficient",
            m.coefficients.iter().map(|c| c.abs()).collect(),
            layout,
        ),
        Classifier::Dnn(_) => {
            let (x, y) = data.ok_or_else(|| {
                Error::InvalidInput("permutation importance for the network needs evaluation data".into())
            })?;
            FeatureImportance::new("permutation", permutation_importance(model, x, y, 10, seed)?, layout)
        }
    }
}

/// Average, over drugs whose highest score exceeds 0.5, of the population
/// variance of that drug's scores across cell lines. Zero when every drug
/// gets the same score on every cell line.
pub fn drug_score_variance(drug_ids: &[String], scores: &[f64]) -> Result<f64> {
    if drug_ids.len() != scores.len() {
        return Err(Error::Shape("one score per drug id is required".into()));
    }
    let mut by_drug: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (d, s) in drug_ids.iter().zip(scores) {
        by_drug.entry(d.as_str()).or_default().push(*s);
    }
    let vars: Vec<f64> = by_drug
        .values()
        .filter(|v| v.iter().any(|s| *s > 0.5))
        .map(|v| crate::stats::population_variance(v))
        .collect();
    Ok(if vars.is_empty() {
        0.0
    } else {
        vars.iter().sum::<f64>() / vars.len() as f64
    })
}

// ---------------------------------------------------------------------------
// Grid search
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedConfig<C> {
    pub rank: usize,
    pub index: usize,
    pub config: C,
    /// Metric per fold.
    pub fold_values: Vec<f64>,
    pub mean: f64,
}

/// Evaluate every candidate (concurrently) and rank by mean fold metric,
/// highest first, ties broken by candidate index.
pub fn grid_search<C, F>(candidates: &[C], evaluate: F) -> Result<Vec<RankedConfig<C>>>
where
    C: Clone + Sync + Send,
    F: Fn(usize, &C) -> Result<Vec<f64>> + Sync,
{
    if candidates.is_empty() {
        return Err(Error::InvalidInput("grid search over an empty space".into()));
    }
    let evaluated: Vec<Vec<f64>> = candidates
        .par_iter()
        .enumerate()
        .map(|(i, c)| evaluate(i, c))
        .collect::<Result<_>>()?;
    let mut ranked: Vec<RankedConfig<C>> = evaluated
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            let mean = if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
            RankedConfig {
                rank: 0,
                index: i,
                config: candidates[i].clone(),
                fold_values: v,
                mean,
            }
        })
        .collect();
    if ranked.iter().any(|r| r.mean.is_nan()) {
        return Err(Error::Numerical("grid candidate produced no metric".into()));
    }
    ranked.sort_by(|a, b| b.mean.total_cmp(&a.mean).then(a.index.cmp(&b.index)));
    for (k, r) in ranked.iter_mut().enumerate() {
        r.rank = k + 1;
    }
    Ok(ranked)
}

/// Forest options: criterion x estimators x minimum split size.
pub fn forest_grid(seed: u64) -> Vec<ForestConfig> {
    let mut out = Vec::new();
    for criterion in [Criterion::Gini, Criterion::Entropy] {
        for n_estimators in [10, 25, 50, 100] {
            for min_samples_split in [5, 10, 20, 25] {
                out.push(ForestConfig {
                    criterion,
                    n_estimators,
                    min_samples_split,
                    max_features: MaxFeatures::Sqrt,
                    seed,
                });
            }
        }
    }
    out
}

/// Network options: hidden shapes x activation x dropout x learning rate x
/// decay steps.
pub fn dnn_grid(seed: u64) -> Vec<DnnConfig> {
    let shapes: [&[usize]; 16] = [
        &[64, 32, 16],
        &[64, 32, 8],
        &[64, 16, 8],
        &[32, 16, 8],
        &[64, 64, 64],
        &[32, 32, 32],
        &[16, 16, 16],
        &[64, 64],
        &[32, 32],
        &[16, 16],
        &[64, 32],
        &[64, 16],
        &[32, 16],
        &[36],
        &[32],
        &[16],
    ];
    let mut out = Vec::new();
    for hidden in shapes {
        for activation in [Activation::Relu, Activation::Sigmoid] {
            for dropout_rate in [0.0, 0.1, 0.3] {
                for learning_rate in [0.01, 0.001] {
                    for decay_steps in [50, 500] {
                        let mut c = DnnConfig {
                            hidden: hidden.to_vec(),
                            activation,
                            dropout_rate,
                            ..DnnConfig::default()
                        };
                        c.train.learning_rate = learning_rate;
                        c.train.decay_steps = decay_steps;
                        c.train.seed = seed;
                        out.push(c);
                    }
                }
            }
        }
    }
    out
}

pub fn logistic_grid() -> Vec<LogisticConfig> {
    [0.0, 1e-4, 1e-2]
        .into_iter()
        .map(|l2| LogisticConfig {
            l2,
            ..LogisticConfig::default()
        })
        .collect()
}
