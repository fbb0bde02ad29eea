//! Gradient-boosted regression trees with logistic loss, built from
//! scratch: exact greedy splits on pre-sorted features, Newton leaf
//! weights, and split-gain feature importances.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;

/// Boosting hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoostConfig {
    pub rounds: usize,
    /// Maximum tree depth; a root-only tree has depth 0.
    pub depth: usize,
    pub learning_rate: f64,
    /// L2 penalty on leaf weights.
    pub lambda: f64,
    /// Splits must improve the objective by more than this.
    pub min_gain: f64,
}

impl Default for BoostConfig {
    fn default() -> Self {
        BoostConfig {
            rounds: 100,
            depth: 3,
            learning_rate: 0.1,
            lambda: 1.0,
            min_gain: 1e-12,
        }
    }
}

impl BoostConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 || self.depth == 0 {
            return Err(Error::InvalidConfig("rounds and depth must be >= 1".into()));
        }
        if self.learning_rate <= 0.0 || self.lambda < 0.0 || self.min_gain < 0.0 {
            return Err(Error::InvalidConfig(
                "learning_rate must be > 0, lambda and min_gain >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// One regression-tree node; leaf values live in log-odds space and are
/// already scaled by the learning rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "F: Serialize", deserialize = "F: DeserializeOwned"))]
enum Node<F> {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        /// Rows with `x[feature] <= threshold` go left; the threshold is the
        /// largest feature value routed left, so routing reproduces the
        /// training partition exactly.
        threshold: F,
        left: Box<Node<F>>,
        right: Box<Node<F>>,
    },
}

impl<F: Real> Node<F> {
    fn score(&self, row: &[F]) -> f64 {
        match self {
            Node::Leaf { value } => *value,
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if row[*feature] <= *threshold {
                    left.score(row)
                } else {
                    right.score(row)
                }
            }
        }
    }
}

/// A trained boosted classifier mapping a feature vector to a probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "F: Serialize", deserialize = "F: DeserializeOwned"))]
pub struct Scorer<F> {
    /// Log odds of the positive base rate.
    base: f64,
    trees: Vec<Node<F>>,
    /// Split-gain share per feature; sums to 1.
    importances: Vec<f64>,
    n_features: usize,
    /// Mean training logistic loss, index 0 before the first tree.
    pub train_loss: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl<F: Real> Scorer<F> {
    /// Probability of the positive class, strictly inside (0, 1).
    pub fn score(&self, row: &[F]) -> f64 {
        let mut z = self.base;
        for tree in &self.trees {
            z += tree.score(row);
        }
        sigmoid(z)
    }

    pub fn importances(&self) -> &[f64] {
        &self.importances
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }
}

fn mean_logistic_loss(scores: &[f64], labels: &[u8]) -> f64 {
    let total: f64 = scores
        .iter()
        .zip(labels)
        .map(|(&z, &y)| {
            let p = sigmoid(z);
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    total / scores.len() as f64
}

struct TreeBuilder<'a, F> {
    rows: &'a [Vec<F>],
    /// Row order per feature, ascending by (value, row index).
    sorted: &'a [Vec<usize>],
    grad: &'a [f64],
    hess: &'a [f64],
    cfg: &'a BoostConfig,
    gains: &'a mut [f64],
}

impl<F: Real> TreeBuilder<'_, F> {
    fn leaf(&self, sum_g: f64, sum_h: f64) -> Node<F> {
        Node::Leaf {
            value: self.cfg.learning_rate * (-sum_g / (sum_h + self.cfg.lambda)),
        }
    }

    fn build(&mut self, member: &[bool], count: usize, sum_g: f64, sum_h: f64, depth: usize) -> Node<F> {
        if depth == self.cfg.depth || count < 2 {
            return self.leaf(sum_g, sum_h);
        }
        let lambda = self.cfg.lambda;
        let parent_obj = sum_g * sum_g / (sum_h + lambda);
        let mut best_gain = self.cfg.min_gain;
        let mut best: Option<(usize, F)> = None;
        for (f, order) in self.sorted.iter().enumerate() {
            let mut gl = 0.0;
            let mut hl = 0.0;
            let mut nl = 0usize;
            let mut prev: Option<F> = None;
            for &r in order {
                if !member[r] {
                    continue;
                }
                let v = self.rows[r][f];
                if let Some(p) = prev {
                    if v > p && nl < count {
                        let gr = sum_g - gl;
                        let hr = sum_h - hl;
                        let gain =
                            0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent_obj);
                        if gain > best_gain {
                            best_gain = gain;
                            best = Some((f, p));
                        }
                    }
                }
                gl += self.grad[r];
                hl += self.hess[r];
                nl += 1;
                prev = Some(v);
            }
        }
        let Some((feature, threshold)) = best else {
            return self.leaf(sum_g, sum_h);
        };
        self.gains[feature] += best_gain;
        let mut left_member = vec![false; member.len()];
        let (mut lg, mut lh, mut lc) = (0.0, 0.0, 0usize);
        for (r, m) in member.iter().enumerate() {
            if *m && self.rows[r][feature] <= threshold {
                left_member[r] = true;
                lg += self.grad[r];
                lh += self.hess[r];
                lc += 1;
            }
        }
        let mut right_member = member.to_vec();
        for (rm, lm) in right_member.iter_mut().zip(&left_member) {
            *rm &= !*lm;
        }
        let left = self.build(&left_member, lc, lg, lh, depth + 1);
        let right = self.build(&right_member, count - lc, sum_g - lg, sum_h - lh, depth + 1);
        Node::Split {
            feature,
            threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }
}

/// Fit a boosted logistic classifier. Labels must be 0 or 1 with both
/// classes present; rows must be finite and rectangular. Training is fully
/// deterministic (no sampling).
pub fn train_classifier<F: Real>(
    rows: &[Vec<F>],
    labels: &[u8],
    cfg: &BoostConfig,
) -> Result<Scorer<F>> {
    cfg.validate()?;
    if rows.is_empty() {
        return Err(Error::InvalidConfig("empty training set".into()));
    }
    if rows.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: rows.len(),
            right: labels.len(),
        });
    }
    let n_features = rows[0].len();
    if n_features == 0 {
        return Err(Error::InvalidConfig("rows have no features".into()));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n_features {
            return Err(Error::ShapeMismatch(format!(
                "row {i} has {} features, expected {n_features}",
                row.len()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(format!("non-finite feature in row {i}")));
        }
    }
    if let Some(bad) = labels.iter().find(|&&y| y > 1) {
        return Err(Error::InvalidConfig(format!("label {bad} is not 0 or 1")));
    }
    let positives = labels.iter().filter(|&&y| y == 1).count();
    if positives == 0 || positives == labels.len() {
        return Err(Error::SingleClass);
    }

    let sorted: Vec<Vec<usize>> = (0..n_features)
        .map(|f| {
            let mut order: Vec<usize> = (0..rows.len()).collect();
            order.sort_by(|&a, &b| {
                rows[a][f]
                    .partial_cmp(&rows[b][f])
                    .expect("features are finite")
                    .then(a.cmp(&b))
            });
            order
        })
        .collect();

    let base = {
        let p = positives as f64 / labels.len() as f64;
        (p / (1.0 - p)).ln()
    };
    let mut scores = vec![base; rows.len()];
    let mut trees = Vec::with_capacity(cfg.rounds);
    let mut gains = vec![0.0; n_features];
    let mut train_loss = vec![mean_logistic_loss(&scores, labels)];

    let mut grad = vec![0.0; rows.len()];
    let mut hess = vec![0.0; rows.len()];
    for _ in 0..cfg.rounds {
        for i in 0..rows.len() {
            let p = sigmoid(scores[i]);
            grad[i] = p - labels[i] as f64;
            hess[i] = p * (1.0 - p);
        }
        let sum_g: f64 = grad.iter().sum();
        let sum_h: f64 = hess.iter().sum();
        let tree = TreeBuilder {
            rows,
            sorted: &sorted,
            grad: &grad,
            hess: &hess,
            cfg,
            gains: &mut gains,
        }
        .build(&vec![true; rows.len()], rows.len(), sum_g, sum_h, 0);
        for (s, row) in scores.iter_mut().zip(rows) {
            *s += tree.score(row);
        }
        train_loss.push(mean_logistic_loss(&scores, labels));
        trees.push(tree);
    }

    let total_gain: f64 = gains.iter().sum();
    let importances = if total_gain > 0.0 {
        gains.iter().map(|g| g / total_gain).collect()
    } else {
        vec![1.0 / n_features as f64; n_features]
    };
    Ok(Scorer {
        base,
        trees,
        importances,
        n_features,
        train_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;
    use rand::Rng;

    fn toy_set(n: usize, seed: u64, label: impl Fn(&[f64]) -> u8) -> (Vec<Vec<f64>>, Vec<u8>) {
        let mut rng = rng_for(seed, 0);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let labels = rows.iter().map(|r| label(r)).collect();
        (rows, labels)
    }

    fn accuracy(scorer: &Scorer<f64>, rows: &[Vec<f64>], labels: &[u8]) -> f64 {
        let hits = rows
            .iter()
            .zip(labels)
            .filter(|(r, &y)| (scorer.score(r) > 0.5) as u8 == y)
            .count();
        hits as f64 / rows.len() as f64
    }

    #[test]
    fn separable_threshold_is_learned() {
        let (rows, labels) = toy_set(400, 1, |r| (r[0] > 0.0) as u8);
        let scorer = train_classifier(&rows, &labels, &BoostConfig::default()).unwrap();
        assert!(accuracy(&scorer, &rows, &labels) >= 0.99);
        // the label-generating feature dominates the importance ranking
        let imp = scorer.importances();
        assert!((imp.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for f in 1..4 {
            assert!(imp[0] > imp[f], "importances {imp:?}");
        }
        for row in &rows {
            let p = scorer.score(row);
            assert!(p > 0.0 && p < 1.0);
        }
    }

    #[test]
    fn constant_features_predict_base_rate() {
        let rows = vec![vec![2.5f64, -1.0]; 40];
        let labels: Vec<u8> = (0..40).map(|i| (i < 12) as u8).collect();
        let scorer = train_classifier(&rows, &labels, &BoostConfig::default()).unwrap();
        let p = scorer.score(&rows[0]);
        assert!((p - 0.3).abs() < 1e-12, "probability {p}");
        // no splits possible, importances fall back to uniform
        assert_eq!(scorer.importances(), &[0.5, 0.5]);
    }

    #[test]
    fn depth_two_interaction_is_learned() {
        let (rows, labels) = toy_set(600, 2, |r| ((r[0] > 0.0) ^ (r[1] > 0.0)) as u8);
        let scorer = train_classifier(&rows, &labels, &BoostConfig::default()).unwrap();
        assert!(accuracy(&scorer, &rows, &labels) >= 0.95);
    }

    #[test]
    fn training_loss_never_increases() {
        let (rows, mut labels) = toy_set(300, 3, |r| (r[0] + 0.3 * r[1] > 0.0) as u8);
        // flip a tenth of the labels so the problem is noisy
        for i in (0..labels.len()).step_by(10) {
            labels[i] ^= 1;
        }
        let scorer = train_classifier(&rows, &labels, &BoostConfig::default()).unwrap();
        assert_eq!(scorer.train_loss.len(), 101);
        for w in scorer.train_loss.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "loss rose: {w:?}");
        }
    }

    #[test]
    fn training_is_deterministic() {
        let (rows, labels) = toy_set(200, 4, |r| (r[2] > 0.1) as u8);
        let a = train_classifier(&rows, &labels, &BoostConfig::default()).unwrap();
        let b = train_classifier(&rows, &labels, &BoostConfig::default()).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn routing_matches_training_partition_on_ties() {
        // two rows share the threshold value; both must route left
        let rows = vec![
            vec![1.0f64],
            vec![1.0],
            vec![2.0],
            vec![2.0],
        ];
        let labels = vec![0, 0, 1, 1];
        let scorer = train_classifier(&rows, &labels, &BoostConfig::default()).unwrap();
        assert_eq!(scorer.score(&rows[0]), scorer.score(&rows[1]));
        assert_eq!(scorer.score(&rows[2]), scorer.score(&rows[3]));
        assert!(scorer.score(&rows[0]) < 0.2);
        assert!(scorer.score(&rows[2]) > 0.8);
    }

    #[test]
    fn input_validation() {
        let cfg = BoostConfig::default();
        let rows = vec![vec![1.0f64], vec![2.0]];
        assert!(matches!(
            train_classifier(&rows, &[1, 1], &cfg),
            Err(Error::SingleClass)
        ));
        assert!(matches!(
            train_classifier(&rows, &[0, 2], &cfg),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            train_classifier(&rows, &[0], &cfg),
            Err(Error::LengthMismatch { left: 2, right: 1 })
        ));
        assert!(train_classifier(&[vec![1.0], vec![f64::NAN]], &[0, 1], &cfg).is_err());
        assert!(train_classifier(&[vec![1.0], vec![2.0, 3.0]], &[0, 1], &cfg).is_err());
        assert!(train_classifier::<f64>(&[], &[], &cfg).is_err());
        let bad = BoostConfig {
            rounds: 0,
            ..BoostConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
