//! One-vs-rest linear hinge classifier trained by seeded projected
//! subgradient descent. Deliberately small: it only has to separate the toy
//! features well enough to compare the two pooling modes.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::ToyDataset;

/// Trained one-vs-rest model. Weights include a trailing bias term.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    weights: Vec<Vec<f64>>,
    classes: usize,
    epoch_losses: Vec<f64>,
}

impl LinearModel {
    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    /// Mean regularized hinge objective after each training epoch.
    pub fn epoch_losses(&self) -> &[f64] {
        &self.epoch_losses
    }

    pub fn score(&self, class: usize, features: &[f64]) -> f64 {
        let w = &self.weights[class];
        debug_assert_eq!(w.len(), features.len() + 1);
        let mut s = w[features.len()]; // bias
        for (wi, xi) in w.iter().zip(features) {
            s += wi * xi;
        }
        s
    }

    /// Argmax class score; ties break toward the lowest class index.
    pub fn predict(&self, features: &[f64]) -> usize {
        let mut best = 0;
        let mut best_score = self.score(0, features);
        for c in 1..self.classes {
            let s = self.score(c, features);
            if s > best_score {
                best = c;
                best_score = s;
            }
        }
        best
    }
}

/// Lexicographic order on (label, feature vector), the canonical visit order.
/// Sorting by content makes training invariant to how the caller happened to
/// order the dataset: the same multiset of examples and the same seed always
/// produce identical weights.
fn canonical_order(dataset: &ToyDataset) -> Vec<usize> {
    let mut order = dataset.train_indices().to_vec();
    order.sort_by(|&a, &b| {
        let (xa, ya) = &dataset.items()[a];
        let (xb, yb) = &dataset.items()[b];
        ya.cmp(yb).then_with(|| {
            for (p, q) in xa.iter().zip(xb) {
                let ord = p.total_cmp(q);
                if ord != std::cmp::Ordering::Equal {
                    return ord;
                }
            }
            std::cmp::Ordering::Equal
        })
    });
    order
}

/// Trains `k` one-vs-rest hinge models with Pegasos-style steps
/// `eta_t = 1 / (lambda t)`, `lambda = 1 / (C n)`, projecting onto the ball
/// of radius `1 / sqrt(lambda)` after each update.
pub fn train_linear(
    dataset: &ToyDataset,
    classes: usize,
    c: f64,
    epochs: usize,
    seed: u64,
) -> Result<LinearModel> {
    if classes < 2 {
        return Err(Error::Config(format!(
            "need at least 2 classes, got {classes}"
        )));
    }
    let train = dataset.train_indices();
    if train.is_empty() {
        return Err(Error::EmptyInput("empty training split".into()));
    }
    let mut present = vec![false; classes];
    for &i in train {
        let label = dataset.items()[i].1;
        if label >= classes {
            return Err(Error::Config(format!(
                "label {label} out of range for {classes} classes"
            )));
        }
        present[label] = true;
    }
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::Config(
            "training split contains a single class".into(),
        ));
    }
    if c <= 0.0 || c.is_nan() || epochs == 0 {
        return Err(Error::Config(format!(
            "need positive C and at least one epoch, got C={c} epochs={epochs}"
        )));
    }

    let dim = dataset.items()[train[0]].0.len();
    let n = train.len() as f64;
    let lambda = 1.0 / (c * n);
    let radius = 1.0 / lambda.sqrt();

    let mut weights = vec![vec![0.0f64; dim + 1]; classes];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = canonical_order(dataset);
    let mut step = 0usize;
    let mut epoch_losses = Vec::with_capacity(epochs);

    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for &idx in &order {
            step += 1;
            let eta = 1.0 / (lambda * step as f64);
            let (x, label) = &dataset.items()[idx];
            for (cls, w) in weights.iter_mut().enumerate() {
                let y = if cls == *label { 1.0 } else { -1.0 };
                let mut score = w[dim];
                for (wi, xi) in w.iter().zip(x) {
                    score += wi * xi;
                }
                let shrink = 1.0 - eta * lambda;
                for wi in w.iter_mut() {
                    *wi *= shrink;
                }
                if y * score < 1.0 {
                    let scale = eta * y;
                    for (wi, xi) in w.iter_mut().zip(x) {
                        *wi += scale * xi;
                    }
                    w[dim] += scale;
                }
                let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > radius {
                    let proj = radius / norm;
                    for wi in w.iter_mut() {
                        *wi *= proj;
                    }
                }
            }
        }
        epoch_losses.push(objective(&weights, dataset, train, lambda));
    }

    Ok(LinearModel {
        weights,
        classes,
        epoch_losses,
    })
}

fn objective(weights: &[Vec<f64>], dataset: &ToyDataset, train: &[usize], lambda: f64) -> f64 {
    let dim = weights[0].len() - 1;
    let mut total = 0.0;
    for (cls, w) in weights.iter().enumerate() {
        let reg: f64 = w.iter().map(|v| v * v).sum();
        let mut hinge = 0.0;
        for &idx in train {
            let (x, label) = &dataset.items()[idx];
            let y = if cls == *label { 1.0 } else { -1.0 };
            let mut score = w[dim];
            for (wi, xi) in w.iter().zip(x) {
                score += wi * xi;
            }
            hinge += (1.0 - y * score).max(0.0);
        }
        total += 0.5 * lambda * reg + hinge / train.len() as f64;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset(items: Vec<(Vec<f64>, usize)>, train: Vec<usize>, test: Vec<usize>) -> ToyDataset {
        ToyDataset::new(items, train, test).unwrap()
    }

    fn separable_2d() -> ToyDataset {
        let items = vec![
            (vec![2.0, 1.0], 0),
            (vec![3.0, 0.5], 0),
            (vec![2.5, 1.5], 0),
            (vec![-2.0, -1.0], 1),
            (vec![-3.0, -0.7], 1),
            (vec![-2.2, -1.4], 1),
        ];
        dataset(items, vec![0, 1, 2, 3, 4, 5], vec![])
    }

    #[test]
    fn separable_toy_reaches_full_train_accuracy() {
        let ds = separable_2d();
        let model = train_linear(&ds, 2, 10.0, 200, 1).unwrap();
        for (x, y) in ds.items() {
            assert_eq!(model.predict(x), *y);
        }
    }

    #[test]
    fn duplicate_training_point_is_recovered() {
        let mut items = separable_2d().items().to_vec();
        items.push((vec![2.0, 1.0], 0)); // duplicate of a train point
        let ds = dataset(items, (0..6).collect(), vec![6]);
        let model = train_linear(&ds, 2, 10.0, 200, 1).unwrap();
        assert_eq!(model.predict(&ds.items()[6].0), 0);
    }

    #[test]
    fn training_is_invariant_to_input_permutation() {
        let ds = separable_2d();
        let mut permuted_items = ds.items().to_vec();
        permuted_items.reverse();
        let permuted = dataset(permuted_items, (0..6).collect(), vec![]);
        let a = train_linear(&ds, 2, 5.0, 50, 42).unwrap();
        let b = train_linear(&permuted, 2, 5.0, 50, 42).unwrap();
        assert_eq!(a.weights(), b.weights());
    }

    #[test]
    fn loss_trends_down() {
        let ds = separable_2d();
        let model = train_linear(&ds, 2, 10.0, 100, 3).unwrap();
        let losses = model.epoch_losses();
        let first: f64 = losses[..10].iter().sum::<f64>() / 10.0;
        let last: f64 = losses[losses.len() - 10..].iter().sum::<f64>() / 10.0;
        assert!(last <= first, "{last} vs {first}");
    }

    #[test]
    fn single_class_is_rejected() {
        let items = vec![(vec![1.0], 0), (vec![2.0], 0)];
        let ds = dataset(items, vec![0, 1], vec![]);
        assert_eq!(
            train_linear(&ds, 2, 1.0, 10, 0).unwrap_err().kind(),
            "configuration"
        );
    }

    #[test]
    fn tie_breaks_to_lowest_class() {
        let model = LinearModel {
            weights: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            classes: 2,
            epoch_losses: vec![],
        };
        assert_eq!(model.predict(&[1.0]), 0);
    }
}
