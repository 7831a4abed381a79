use std::collections::HashSet;
use std::hash::Hash;

use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::logreg::{accuracy, fit_l1_logreg, fit_path, FitOptions};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossvalReport {
    /// Test accuracy of each fold.
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation across folds.
    pub std: f64,
    /// Regularization strength chosen in each fold, when applicable.
    pub lambdas: Vec<f64>,
    pub duplicates_removed: usize,
}

/// Splits `0..labels.len()` into `k` folds, dealing each label's shuffled
/// members round-robin so every fold keeps the class ratio.
pub fn stratified_folds(labels: &[u8], k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for class in [0u8, 1] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        for i in members {
            folds[next % k].push(i);
            next += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    folds
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

/// Generic k-fold driver. Items with equal `keys` are collapsed to the first
/// occurrence before folding, so no key is ever on both sides of a split.
/// `eval(train, test)` returns the test accuracy and, optionally, the
/// hyperparameter it selected.
pub fn crossval<K: Hash + Eq>(
    keys: &[K],
    labels: &[u8],
    k: usize,
    seed: u64,
    mut eval: impl FnMut(&[usize], &[usize]) -> Result<(f64, Option<f64>)>,
) -> Result<CrossvalReport> {
    if keys.len() != labels.len() {
        return Err(Error::invalid("one label per item required"));
    }
    let mut seen = HashSet::new();
    let kept: Vec<usize> = (0..keys.len()).filter(|&i| seen.insert(&keys[i])).collect();
    let duplicates_removed = keys.len() - kept.len();
    if kept.len() < k.max(2) {
        return Err(Error::invalid(format!("{} distinct items cannot fill {k} folds", kept.len())));
    }
    let kept_labels: Vec<u8> = kept.iter().map(|&i| labels[i]).collect();
    let folds = stratified_folds(&kept_labels, k, seed);

    let mut accuracies = Vec::with_capacity(k);
    let mut lambdas = Vec::new();
    for (f, fold) in folds.iter().enumerate() {
        let test: Vec<usize> = fold.iter().map(|&i| kept[i]).collect();
        let train: Vec<usize> = folds.iter().enumerate().filter(|&(g, _)| g != f).flat_map(|(_, v)| v.iter().map(|&i| kept[i])).collect();
        let train_keys: HashSet<&K> = train.iter().map(|&i| &keys[i]).collect();
        if test.iter().any(|&i| train_keys.contains(&keys[i])) {
            return Err(Error::invalid(format!("fold {f} shares an item between train and test")));
        }
        let (acc, lambda) = eval(&train, &test)?;
        log::info!("fold {f}: accuracy {acc:.4}");
        accuracies.push(acc);
        lambdas.extend(lambda);
    }
    let (mean, std) = mean_std(&accuracies);
    Ok(CrossvalReport { accuracies, mean, std, lambdas, duplicates_removed })
}

/// Picks the lambda with the best mean accuracy over `inner_k` stratified
/// folds of the given data. Ties go to the larger lambda.
pub fn select_lambda(x: ArrayView2<'_, f64>, labels: &[u8], grid: &[f64], inner_k: usize, seed: u64, opts: &FitOptions) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::invalid("empty lambda grid"));
    }
    let folds = stratified_folds(labels, inner_k, seed);
    let mut scores = vec![0.0; grid.len()];
    let mut used = 0usize;
    for (f, fold) in folds.iter().enumerate() {
        if fold.is_empty() {
            continue;
        }
        let train: Vec<usize> = folds.iter().enumerate().filter(|&(g, _)| g != f).flat_map(|(_, v)| v.clone()).collect();
        let train_labels: Vec<u8> = train.iter().map(|&i| labels[i]).collect();
        if train_labels.iter().all(|&l| l == train_labels[0]) {
            continue;
        }
        let xt = x.select(Axis(0), &train);
        let xv = x.select(Axis(0), fold);
        let val_labels: Vec<u8> = fold.iter().map(|&i| labels[i]).collect();
        for (s, clf) in scores.iter_mut().zip(fit_path(xt.view(), &train_labels, grid, opts)?) {
            *s += accuracy(&clf, xv.view(), &val_labels);
        }
        used += 1;
    }
    if used == 0 {
        return Err(Error::SingleClass);
    }
    let mut best = 0;
    for i in 1..grid.len() {
        let better = scores[i] > scores[best] + 1e-12;
        let tie_larger = (scores[i] - scores[best]).abs() <= 1e-12 && grid[i] > grid[best];
        if better || tie_larger {
            best = i;
        }
    }
    Ok(grid[best])
}

/// Cross-validated accuracy of the L1 logistic-regression probe, with the
/// regularization strength chosen inside each training split.
#[allow(clippy::too_many_arguments)]
pub fn crossval_logreg<K: Hash + Eq>(
    x: ArrayView2<'_, f64>,
    keys: &[K],
    labels: &[u8],
    grid: &[f64],
    k: usize,
    inner_k: usize,
    seed: u64,
    opts: &FitOptions,
) -> Result<CrossvalReport> {
    crossval(keys, labels, k, seed, |train, test| {
        let xt = x.select(Axis(0), train);
        let yt: Vec<u8> = train.iter().map(|&i| labels[i]).collect();
        let lambda = select_lambda(xt.view(), &yt, grid, inner_k, seed, opts)?;
        let clf = fit_l1_logreg(xt.view(), &yt, lambda, opts)?;
        let xv = x.select(Axis(0), test);
        let yv: Vec<u8> = test.iter().map(|&i| labels[i]).collect();
        Ok((accuracy(&clf, xv.view(), &yv), Some(lambda)))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sentiment::logreg::default_lambda_grid;
    use ndarray::Array2;
    use rand::Rng;

    /// Two Gaussian blobs whose centres are `gap` apart along every axis.
    fn blobs(seed: u64, per_class: usize, dim: usize, gap: f64) -> (Array2<f64>, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = |rng: &mut ChaCha8Rng| {
            let (u, v): (f64, f64) = (rng.gen_range(1e-12..1.0), rng.gen());
            (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
        };
        let mut x = Array2::zeros((2 * per_class, dim));
        let mut labels = Vec::new();
        for i in 0..2 * per_class {
            let class = (i % 2) as u8;
            for j in 0..dim {
                x[[i, j]] = (class as f64 - 0.5) * gap + 0.3 * normal(&mut rng);
            }
            labels.push(class);
        }
        (x, labels)
    }

    #[test]
    fn folds_are_stratified_and_cover_everything() {
        let labels: Vec<u8> = (0..97).map(|i| u8::from(i % 3 == 0)).collect();
        let folds = stratified_folds(&labels, 10, 3);
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..97).collect::<Vec<_>>());
        for f in &folds {
            let pos = f.iter().filter(|&&i| labels[i] == 1).count();
            assert!((3..=4).contains(&pos), "{pos}");
            assert!((9..=10).contains(&f.len()));
        }
    }

    #[test]
    fn separable_blobs_score_high() {
        let (x, labels) = blobs(1, 60, 8, 2.0);
        let keys: Vec<usize> = (0..labels.len()).collect();
        let r = crossval_logreg(x.view(), &keys, &labels, &default_lambda_grid(), 10, 5, 0, &FitOptions::default()).unwrap();
        assert!(r.mean >= 0.95, "{r:?}");
        assert_eq!(r.lambdas.len(), 10);
    }

    #[test]
    fn duplicates_never_straddle_folds() {
        let keys: Vec<u32> = (0..40).map(|i| i % 25).collect();
        let labels: Vec<u8> = (0..40).map(|i| u8::from(i % 25 < 12)).collect();
        let mut calls = 0;
        let r = crossval(&keys, &labels, 5, 1, |train, test| {
            calls += 1;
            let tk: HashSet<u32> = train.iter().map(|&i| keys[i]).collect();
            assert!(test.iter().all(|&i| !tk.contains(&keys[i])));
            assert_eq!(train.len() + test.len(), 25);
            Ok((0.5, None))
        })
        .unwrap();
        assert_eq!(calls, 5);
        assert_eq!(r.duplicates_removed, 15);
        assert_eq!((r.mean, r.std), (0.5, 0.0));
    }

    #[test]
    fn ties_prefer_the_larger_lambda() {
        let (x, labels) = blobs(2, 30, 3, 4.0);
        // every lambda small enough separates perfectly, so the largest such one wins
        let grid = [1e-4, 1e-3, 1e-2];
        let l = select_lambda(x.view(), &labels, &grid, 5, 0, &FitOptions::default()).unwrap();
        assert_eq!(l, 1e-2);
    }
}
