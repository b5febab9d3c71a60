//! Siamese pretraining of drug and cell-line encoders.
//!
//! Two inputs pass through one shared encoder; the Euclidean distance between
//! their embeddings goes through a sigmoid to give the probability that the
//! pair comes from different groups. Training minimizes binary cross-entropy
//! against same-group (0) / different-group (1) labels.

use std::collections::{BTreeSet, HashSet};

use rand::seq::{index, SliceRandom};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::data::{CellLineRecord, DrugRecord};
use crate::linalg::{sigmoid, softplus, Matrix};
use crate::neural::{self, Activation, Gradients, MlpModel, Mode, Objective, TrainConfig, TrainReport};
use crate::{Error, Result, Rng};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupRule {
    /// Same group iff the token sets are equal.
    Exact,
    /// Same group iff the token sets intersect.
    #[default]
    Overlap,
}

impl std::str::FromStr for GroupRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(GroupRule::Exact),
            "overlap" => Ok(GroupRule::Overlap),
            other => Err(Error::InvalidInput(format!("group rule must be exact or overlap, got `{other}`"))),
        }
    }
}

/// Items with the token sets that decide group membership: gene targets for
/// drugs, the cancer type for cell lines.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupAssignment {
    pub item_ids: Vec<String>,
    pub tokens: Vec<BTreeSet<String>>,
    pub rule: GroupRule,
}

impl GroupAssignment {
    pub fn new(item_ids: Vec<String>, tokens: Vec<BTreeSet<String>>, rule: GroupRule) -> Result<Self> {
        if item_ids.len() != tokens.len() {
            return Err(Error::Shape("one token set per item is required".into()));
        }
        if tokens.iter().any(BTreeSet::is_empty) {
            return Err(Error::InvalidInput("every item needs at least one group token".into()));
        }
        Ok(Self { item_ids, tokens, rule })
    }

    /// Single-token groups, e.g. cancer types.
    pub fn from_labels(item_ids: Vec<String>, labels: &[String]) -> Result<Self> {
        let tokens = labels.iter().map(|l| BTreeSet::from([l.clone()])).collect();
        Self::new(item_ids, tokens, GroupRule::Exact)
    }

    pub fn len(&self) -> usize {
        self.item_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.item_ids.is_empty()
    }

    pub fn same_group(&self, i: usize, j: usize) -> bool {
        let (a, b) = (&self.tokens[i], &self.tokens[j]);
        match self.rule {
            GroupRule::Exact => a == b,
            GroupRule::Overlap => a.intersection(b).next().is_some(),
        }
    }

    /// Group signature of an item: its tokens joined by `;`.
    pub fn group_of(&self, i: usize) -> String {
        self.tokens[i].iter().cloned().collect::<Vec<_>>().join(";")
    }
}

/// Drugs with at least one gene target, grouped by their targets.
pub fn assign_drug_groups(drugs: &[DrugRecord], rule: GroupRule) -> Result<GroupAssignment> {
    let with_targets: Vec<&DrugRecord> = drugs.iter().filter(|d| !d.gene_targets.is_empty()).collect();
    if with_targets.is_empty() {
        return Err(Error::InvalidInput("no drug has a gene target".into()));
    }
    GroupAssignment::new(
        with_targets.iter().map(|d| d.drug_id.clone()).collect(),
        with_targets.iter().map(|d| d.gene_targets.clone()).collect(),
        rule,
    )
}

/// Cell lines grouped by cancer type.
pub fn assign_cell_groups(cells: &[CellLineRecord]) -> Result<GroupAssignment> {
    if cells.is_empty() {
        return Err(Error::InvalidInput("no cell lines to group".into()));
    }
    GroupAssignment::from_labels(
        cells.iter().map(|c| c.cell_id.clone()).collect(),
        &cells.iter().map(|c| c.cancer_type.clone()).collect::<Vec<_>>(),
    )
}

/// Two item indices and whether they come from different groups (1) or the
/// same group (0).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ContrastivePair {
    pub left: usize,
    pub right: usize,
    pub label: u8,
}

/// Every unordered same-group and different-group pair, enumerated once.
#[derive(Clone, Debug)]
pub struct PairSampler {
    same: Vec<(usize, usize)>,
    different: Vec<(usize, usize)>,
}

impl PairSampler {
    pub fn new(assignment: &GroupAssignment) -> Result<Self> {
        let n = assignment.len();
        if n < 2 {
            return Err(Error::InvalidInput(format!("pair sampling needs at least 2 items, got {n}")));
        }
        let mut same = Vec::new();
        let mut different = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if assignment.same_group(i, j) {
                    same.push((i, j));
                } else {
                    different.push((i, j));
                }
            }
        }
        if same.is_empty() {
            return Err(Error::InvalidInput("no two items share a group; same-group pairs are impossible".into()));
        }
        if different.is_empty() {
            return Err(Error::InvalidInput("all items share one group; different-group pairs are impossible".into()));
        }
        Ok(Self { same, different })
    }

    pub fn n_same(&self) -> usize {
        self.same.len()
    }

    pub fn n_different(&self) -> usize {
        self.different.len()
    }

    /// `n / 2` same-group and `n - n / 2` different-group pairs, drawn
    /// without replacement; when more are requested than exist the pool is
    /// reshuffled and drawn again. Output order is shuffled.
    pub fn sample(&self, n: usize, rng: &mut Rng) -> Vec<ContrastivePair> {
        let n_same = n / 2;
        let mut out = Vec::with_capacity(n);
        for (pool, count, label) in [(&self.same, n_same, 0u8), (&self.different, n - n_same, 1u8)] {
            let mut left = count;
            while left > 0 {
                let take = left.min(pool.len());
                for k in index::sample(rng, pool.len(), take) {
                    let (a, b) = pool[k];
                    out.push(ContrastivePair { left: a, right: b, label });
                }
                left -= take;
            }
        }
        out.shuffle(rng);
        out
    }
}

pub fn sample_pairs(assignment: &GroupAssignment, n_pairs: usize, seed: u64) -> Result<Vec<ContrastivePair>> {
    let sampler = PairSampler::new(assignment)?;
    Ok(sampler.sample(n_pairs, &mut crate::seeded_rng(seed, 0x9a125)))
}

/// Probability that two inputs come from different groups:
/// `sigmoid(||Enc(left) - Enc(right)||)`.
pub fn snn_probability(encoder: &MlpModel, left: &[f64], right: &[f64]) -> Result<f64> {
    let x = Matrix::from_rows(&[left, right])?;
    let e = encoder.predict(&x)?;
    Ok(sigmoid(crate::linalg::euclidean(e.row(0), e.row(1))))
}

/// Eval-mode embeddings, one row per input row.
pub fn embed(encoder: &MlpModel, items: &Matrix) -> Result<Matrix> {
    encoder.predict(items)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SnnConfig {
    pub n_hidden: usize,
    pub units: usize,
    pub activation: Activation,
    pub dropout_rate: f64,
    /// Width of the embedding layer.
    pub embed_dim: usize,
    /// Activation of the embedding layer.
    pub output_activation: Activation,
    /// Training pairs drawn per epoch; `None` means four per item.
    pub pairs_per_epoch: Option<usize>,
    /// Share of pairs held out (once, up front) for early stopping.
    pub val_fraction: f64,
    pub group_rule: GroupRule,
}

impl Default for SnnConfig {
    fn default() -> Self {
        Self {
            n_hidden: 2,
            units: 16,
            activation: Activation::Relu,
            dropout_rate: 0.0,
            embed_dim: 16,
            output_activation: Activation::Sigmoid,
            pairs_per_epoch: None,
            val_fraction: 0.1,
            group_rule: GroupRule::Overlap,
        }
    }
}

impl SnnConfig {
    pub fn layer_dims(&self, input_dim: usize) -> Vec<usize> {
        let mut dims = vec![input_dim];
        dims.extend(std::iter::repeat_n(self.units, self.n_hidden));
        dims.push(self.embed_dim);
        dims
    }

    pub fn build_encoder(&self, input_dim: usize, rng: &mut Rng) -> Result<MlpModel> {
        MlpModel::new(
            &self.layer_dims(input_dim),
            self.activation,
            self.output_activation,
            self.dropout_rate,
            rng,
        )
    }
}

/// Mean BCE of the pair probabilities, plus gradients through both branches
/// of the shared encoder.
pub fn pair_loss_and_gradients(
    encoder: &MlpModel,
    items: &Matrix,
    pairs: &[ContrastivePair],
    rng: Option<&mut Rng>,
) -> Result<(f64, Gradients)> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("empty pair batch".into()));
    }
    let left: Vec<usize> = pairs.iter().map(|p| p.left).collect();
    let right: Vec<usize> = pairs.iter().map(|p| p.right).collect();
    let xl = items.select_rows(&left);
    let xr = items.select_rows(&right);
    let (al, ar) = match rng {
        Some(r) => (
            encoder.forward(&xl, Mode::Train, Some(r))?,
            encoder.forward(&xr, Mode::Train, Some(r))?,
        ),
        None => (
            encoder.forward(&xl, Mode::Eval, None)?,
            encoder.forward(&xr, Mode::Eval, None)?,
        ),
    };
    let (el, er) = (al.output(), ar.output());
    let k = encoder.output_dim();
    let n = pairs.len() as f64;
    let out_act = encoder.output_activation();
    let mut dl = Matrix::zeros(pairs.len(), k);
    let mut dr = Matrix::zeros(pairs.len(), k);
    let mut total = 0.0;
    for (i, p) in pairs.iter().enumerate() {
        let y = f64::from(p.label);
        let d = crate::linalg::euclidean(el.row(i), er.row(i));
        total += softplus(d) - y * d;
        if d == 0.0 {
            continue;
        }
        let coef = (sigmoid(d) - y) / (d * n);
        for j in 0..k {
            let diff = el.get(i, j) - er.get(i, j);
            dl.set(i, j, coef * diff * out_act.derivative(al.logits().get(i, j)));
            dr.set(i, j, -coef * diff * out_act.derivative(ar.logits().get(i, j)));
        }
    }
    let mut grads = encoder.backward(&al, dl);
    grads.add_assign(&encoder.backward(&ar, dr));
    Ok((total / n, grads))
}

/// Eval-mode mean BCE over `pairs`.
pub fn pair_loss(encoder: &MlpModel, items: &Matrix, pairs: &[ContrastivePair]) -> Result<f64> {
    let e = encoder.predict(items)?;
    let total: f64 = pairs
        .iter()
        .map(|p| {
            let d = crate::linalg::euclidean(e.row(p.left), e.row(p.right));
            softplus(d) - f64::from(p.label) * d
        })
        .sum();
    Ok(total / pairs.len() as f64)
}

struct PairObjective<'a> {
    items: &'a Matrix,
    sampler: PairSampler,
    per_epoch: usize,
    val: Vec<ContrastivePair>,
    val_keys: HashSet<(usize, usize)>,
    train: Vec<ContrastivePair>,
}

impl Objective for PairObjective<'_> {
    fn n_train(&self) -> usize {
        self.train.len()
    }

    fn begin_epoch(&mut self, _epoch: usize, rng: &mut Rng) -> Result<()> {
        let mut epoch_rng = crate::seeded_rng(rng.next_u64(), 0x9a125);
        let mut pairs = self.sampler.sample(self.per_epoch, &mut epoch_rng);
        pairs.retain(|p| !self.val_keys.contains(&(p.left, p.right)));
        if pairs.is_empty() {
            // Tiny item sets: every pair is also a validation pair.
            pairs = self.sampler.sample(self.per_epoch, &mut epoch_rng);
        }
        self.train = pairs;
        Ok(())
    }

    fn batch_gradients(&self, model: &MlpModel, batch: &[usize], rng: &mut Rng) -> Result<(f64, Gradients)> {
        let pairs: Vec<ContrastivePair> = batch.iter().map(|&i| self.train[i]).collect();
        pair_loss_and_gradients(model, self.items, &pairs, Some(rng))
    }

    fn val_loss(&self, model: &MlpModel) -> Result<f64> {
        pair_loss(model, self.items, &self.val)
    }
}

/// Train an encoder on balanced pairs. Training pairs are resampled every
/// epoch; a fixed validation pair set drives early stopping.
pub fn pretrain_encoder(
    items: &Matrix,
    assignment: &GroupAssignment,
    snn: &SnnConfig,
    train: &TrainConfig,
) -> Result<(MlpModel, TrainReport)> {
    if items.rows() != assignment.len() {
        return Err(Error::Shape(format!(
            "{} item rows for {} grouped items",
            items.rows(),
            assignment.len()
        )));
    }
    train.validate()?;
    let mut init_rng = crate::seeded_rng(train.seed, 0xe4c);
    let encoder = snn.build_encoder(items.cols(), &mut init_rng)?;
    pretrain_encoder_from(items, assignment, snn, train, encoder)
}

/// [`pretrain_encoder`] starting from the given encoder weights.
pub fn pretrain_encoder_from(
    items: &Matrix,
    assignment: &GroupAssignment,
    snn: &SnnConfig,
    train: &TrainConfig,
    encoder: MlpModel,
) -> Result<(MlpModel, TrainReport)> {
    let sampler = PairSampler::new(assignment)?;
    let per_epoch = snn.pairs_per_epoch.unwrap_or(4 * items.rows()).max(2);
    let n_val = ((per_epoch as f64 * snn.val_fraction).round() as usize).max(2);
    let val = sampler.sample(n_val, &mut crate::seeded_rng(train.seed, 0x7a1d));
    let val_keys = val.iter().map(|p| (p.left, p.right)).collect();
    let mut objective = PairObjective {
        items,
        sampler,
        per_epoch,
        val,
        val_keys,
        train: Vec::new(),
    };
    neural::fit(encoder, &mut objective, train)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;
    use rand_distr::{Distribution, StandardNormal};

    fn set(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    fn assignment(tokens: Vec<BTreeSet<String>>, rule: GroupRule) -> GroupAssignment {
        let ids = (0..tokens.len()).map(|i| format!("I{i}")).collect();
        GroupAssignment::new(ids, tokens, rule).unwrap()
    }

    #[test]
    fn target_overlap_predicate() {
        let a = assignment(
            vec![set(&["TOP1"]), set(&["TOP1"]), set(&["TUBB"]), set(&["TOP1", "TOP2A"]), set(&["TOP2A", "HDAC1"])],
            GroupRule::Overlap,
        );
        assert!(a.same_group(0, 1));
        assert!(!a.same_group(0, 2));
        assert!(a.same_group(3, 4));
        let exact = GroupAssignment { rule: GroupRule::Exact, ..a };
        assert!(!exact.same_group(3, 4));
        assert!(exact.same_group(0, 1));
    }

    #[test]
    fn balanced_sample_of_two_by_two() {
        let a = GroupAssignment::from_labels(
            ["a", "b", "c", "d"].map(String::from).to_vec(),
            &["X", "X", "Y", "Y"].map(String::from),
        )
        .unwrap();
        let pairs = sample_pairs(&a, 4, 1).unwrap();
        assert_eq!(pairs.iter().filter(|p| p.label == 0).count(), 2);
        assert_eq!(pairs.iter().filter(|p| p.label == 1).count(), 2);
        for p in &pairs {
            assert_ne!(p.left, p.right);
            assert_eq!(p.label == 0, a.same_group(p.left, p.right));
        }
        let mut same: Vec<_> = pairs.iter().filter(|p| p.label == 0).map(|p| (p.left, p.right)).collect();
        same.sort_unstable();
        assert_eq!(same, vec![(0, 1), (2, 3)]);
        assert_eq!(sample_pairs(&a, 4, 1).unwrap(), pairs);
    }

    #[test]
    fn degenerate_groupings_are_rejected() {
        let one = GroupAssignment::from_labels(vec!["a".into(), "b".into()], &["X".into(), "X".into()]).unwrap();
        assert!(sample_pairs(&one, 4, 0).is_err());
        let singletons = GroupAssignment::from_labels(vec!["a".into(), "b".into()], &["X".into(), "Y".into()]).unwrap();
        assert!(sample_pairs(&singletons, 4, 0).is_err());
    }

    #[test]
    fn probability_closed_forms() {
        let mut enc = MlpModel::zeros(&[2, 2], Activation::Identity, Activation::Identity, 0.0).unwrap();
        enc.weights[0] = vec![1.0, 0.0, 0.0, 1.0];
        assert_eq!(snn_probability(&enc, &[0.3, 0.1], &[0.3, 0.1]).unwrap(), 0.5);
        let p = snn_probability(&enc, &[0.0, 0.0], &[3f64.ln(), 0.0]).unwrap();
        assert!((p - 0.75).abs() < 1e-15);
        let q = snn_probability(&enc, &[3f64.ln(), 0.0], &[0.0, 0.0]).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn random_draws_respect_the_half_floor() {
        let mut rng = crate::seeded_rng(2, 0);
        let enc = SnnConfig::default().build_encoder(5, &mut rng).unwrap();
        for _ in 0..100 {
            let a: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
            let b: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
            let p = snn_probability(&enc, &a, &b).unwrap();
            assert!((0.5..1.0).contains(&p));
            assert_eq!(p, snn_probability(&enc, &b, &a).unwrap());
        }
    }

    #[test]
    fn zero_encoder_gives_ln_two() {
        let enc = MlpModel::zeros(&[3, 4, 2], Activation::Relu, Activation::Identity, 0.0).unwrap();
        let items = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![-1.0, 0.0, 4.0]]).unwrap();
        let pairs = [
            ContrastivePair { left: 0, right: 1, label: 0 },
            ContrastivePair { left: 0, right: 1, label: 1 },
        ];
        assert!((pair_loss(&enc, &items, &pairs).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!(embed(&enc, &items).unwrap().as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn batch_embedding_matches_single_rows() {
        let mut rng = crate::seeded_rng(3, 0);
        let enc = SnnConfig::default().build_encoder(3, &mut rng).unwrap();
        let items = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![-1.0, 0.0, 4.0]]).unwrap();
        let all = embed(&enc, &items).unwrap();
        for i in 0..2 {
            let one = embed(&enc, &items.select_rows(&[i])).unwrap();
            assert_eq!(one.row(0), all.row(i));
        }
    }

    #[test]
    fn pair_gradients_match_finite_differences() {
        let mut rng = crate::seeded_rng(4, 0);
        let cfg = SnnConfig {
            activation: Activation::Sigmoid,
            units: 5,
            embed_dim: 3,
            ..SnnConfig::default()
        };
        let mut enc = cfg.build_encoder(4, &mut rng).unwrap();
        let items = Matrix::from_vec(5, 4, (0..20).map(|_| StandardNormal.sample(&mut rng)).collect()).unwrap();
        let pairs = [
            ContrastivePair { left: 0, right: 1, label: 0 },
            ContrastivePair { left: 2, right: 1, label: 1 },
            ContrastivePair { left: 3, right: 4, label: 1 },
            ContrastivePair { left: 4, right: 0, label: 0 },
        ];
        let (_, g) = pair_loss_and_gradients(&enc, &items, &pairs, None).unwrap();
        let h = 1e-5;
        let mut worst = 0.0f64;
        for l in 0..enc.n_layers() {
            for k in 0..enc.weights[l].len() {
                let orig = enc.weights[l][k];
                enc.weights[l][k] = orig + h;
                let up = pair_loss(&enc, &items, &pairs).unwrap();
                enc.weights[l][k] = orig - h;
                let down = pair_loss(&enc, &items, &pairs).unwrap();
                enc.weights[l][k] = orig;
                let num = (up - down) / (2.0 * h);
                let a = g.weights[l][k];
                let scale = a.abs().max(num.abs());
                if scale > 0.0 {
                    worst = worst.max((a - num).abs() / scale);
                }
            }
        }
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn shared_weights_move_both_branches() {
        let mut rng = crate::seeded_rng(5, 0);
        let mut enc = SnnConfig::default().build_encoder(3, &mut rng).unwrap();
        let items = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![-1.0, 0.5, 4.0]]).unwrap();
        let before = embed(&enc, &items).unwrap();
        let last = enc.n_layers() - 1;
        enc.biases[last][0] += 0.25;
        let after = embed(&enc, &items).unwrap();
        assert_ne!(before.row(0), after.row(0));
        assert_ne!(before.row(1), after.row(1));
    }

    fn two_blobs(per_group: usize, rng: &mut Rng) -> (Matrix, Vec<String>) {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for g in 0..2 {
            let center = if g == 0 { 3.0 } else { -3.0 };
            for _ in 0..per_group {
                rows.push((0..6).map(|_| { let z: f64 = StandardNormal.sample(rng); center + z * 0.5 }).collect::<Vec<f64>>());
                labels.push(format!("G{g}"));
            }
        }
        (Matrix::from_rows(&rows).unwrap(), labels)
    }

    #[test]
    fn separated_groups_embed_closer_within() {
        let mut rng = crate::seeded_rng(6, 0);
        let (x, labels) = two_blobs(20, &mut rng);
        let ids = (0..40).map(|i| format!("c{i}")).collect();
        let a = GroupAssignment::from_labels(ids, &labels).unwrap();
        let snn = SnnConfig {
            units: 16,
            embed_dim: 4,
            ..SnnConfig::default()
        };
        let cfg = TrainConfig {
            learning_rate: 0.05,
            batch_size: 32,
            max_epochs: 60,
            seed: 1,
            ..TrainConfig::default()
        };
        let (enc, report) = pretrain_encoder(&x, &a, &snn, &cfg).unwrap();
        let e = embed(&enc, &x).unwrap();
        let (mut same, mut diff) = (vec![], vec![]);
        for i in 0..40 {
            for j in i + 1..40 {
                let d = crate::linalg::euclidean(e.row(i), e.row(j));
                if a.same_group(i, j) { same.push(d) } else { diff.push(d) }
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean(&same) < mean(&diff));
        let min = report.loss_curve.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
        assert_eq!(report.best_val_loss, min);
    }

    #[test]
    fn shuffled_labels_stay_near_chance() {
        let mut rng = crate::seeded_rng(7, 0);
        let (x, mut labels) = two_blobs(20, &mut rng);
        labels.shuffle(&mut rng);
        let ids = (0..40).map(|i| format!("c{i}")).collect();
        let a = GroupAssignment::from_labels(ids, &labels).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.05,
            batch_size: 32,
            max_epochs: 40,
            seed: 2,
            ..TrainConfig::default()
        };
        let (_, report) = pretrain_encoder(&x, &a, &SnnConfig::default(), &cfg).unwrap();
        let last_val = report.loss_curve.last().unwrap().1;
        assert!(last_val >= 0.9 * 2f64.ln(), "{last_val}");
    }

    #[test]
    fn drug_groups_skip_untargeted() {
        let fp = crate::data::Fingerprint::from_bits(vec![0; crate::data::FINGERPRINT_BITS]).unwrap();
        let mk = |id: &str, t: &[&str]| DrugRecord {
            drug_id: id.into(),
            name: id.into(),
            fingerprint: fp.clone(),
            gene_targets: set(t),
            moa: None,
            withdrawn: false,
            indications: BTreeSet::new(),
        };
        let a = assign_drug_groups(&[mk("A", &["X"]), mk("B", &[]), mk("C", &["X", "Y"])], GroupRule::Overlap).unwrap();
        assert_eq!(a.item_ids, vec!["A".to_string(), "C".to_string()]);
        assert_eq!(a.group_of(1), "X;Y");
        assert!(assign_drug_groups(&[mk("B", &[])], GroupRule::Overlap).is_err());
    }
}
