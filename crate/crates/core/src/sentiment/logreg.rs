//! L1-regularized logistic regression fitted by accelerated proximal
//! gradient (FISTA with backtracking and adaptive restart).

use std::io::Write;

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stopping rule and iteration cap for [`fit_l1_logreg`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Sup-norm of the proximal gradient map at which the fit stops.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 100_000 }
    }
}

/// `sigmoid(w·x + b)` with a sparse-by-construction weight vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SentimentClassifier {
    pub weights: Array1<f64>,
    pub bias: f64,
    pub lambda: f64,
    /// Iterations used by the fit; 0 when loaded from disk.
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassifierFile {
    lambda: f64,
    bias: f64,
    dim: usize,
    /// `(index, weight)` for every nonzero weight.
    weights: Vec<(usize, f64)>,
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl SentimentClassifier {
    /// Probability of the positive class.
    pub fn predict(&self, features: ArrayView1<'_, f64>) -> f64 {
        sigmoid(self.weights.dot(&features) + self.bias)
    }

    pub fn predict_all(&self, features: ArrayView2<'_, f64>) -> Array1<f64> {
        (features.dot(&self.weights) + self.bias).mapv(sigmoid)
    }

    /// Nonzero weights as `(index, weight)`, by index.
    pub fn support(&self) -> Vec<(usize, f64)> {
        self.weights.iter().enumerate().filter(|(_, &w)| w != 0.0).map(|(i, &w)| (i, w)).collect()
    }

    pub fn support_indices(&self) -> Vec<usize> {
        self.support().into_iter().map(|(i, _)| i).collect()
    }

    /// `index,weight` CSV of the support.
    pub fn write_support_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "weight"])?;
        for (i, v) in self.support() {
            w.write_record([i.to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ClassifierFile { lambda: self.lambda, bias: self.bias, dim: self.weights.len(), weights: self.support() };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ClassifierFile = serde_json::from_str(text)?;
        let mut weights = Array1::zeros(file.dim);
        for (i, w) in file.weights {
            if i >= file.dim {
                return Err(Error::invalid(format!("weight index {i} outside dimension {}", file.dim)));
            }
            weights[i] = w;
        }
        Ok(Self { weights, bias: file.bias, lambda: file.lambda, iterations: 0, converged: true })
    }
}

/// Mean logistic loss and its gradient in `(w, b)`.
fn smooth_part(x: ArrayView2<'_, f64>, y: &Array1<f64>, w: &Array1<f64>, b: f64) -> (f64, Array1<f64>, f64) {
    let m = x.nrows() as f64;
    let z = x.dot(w) + b;
    let loss = z.iter().zip(y).map(|(&z, &y)| softplus(z) - y * z).sum::<f64>() / m;
    let r = z.mapv(sigmoid) - y;
    let gw = x.t().dot(&r) / m;
    let gb = r.sum() / m;
    (loss, gw, gb)
}

fn smooth_loss(x: ArrayView2<'_, f64>, y: &Array1<f64>, w: &Array1<f64>, b: f64) -> f64 {
    let z = x.dot(w) + b;
    z.iter().zip(y).map(|(&z, &y)| softplus(z) - y * z).sum::<f64>() / x.nrows() as f64
}

/// `mean logistic loss + lambda * ||w||_1`.
pub fn l1_objective(x: ArrayView2<'_, f64>, labels: &[u8], w: &Array1<f64>, b: f64, lambda: f64) -> f64 {
    let y = Array1::from_iter(labels.iter().map(|&l| l as f64));
    smooth_loss(x, &y, w, b) + lambda * w.mapv(f64::abs).sum()
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

fn check_labels(x: ArrayView2<'_, f64>, labels: &[u8]) -> Result<()> {
    if x.nrows() != labels.len() || labels.len() < 2 {
        return Err(Error::invalid("need at least two examples with one label each"));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::invalid("labels must be 0 or 1"));
    }
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(Error::SingleClass);
    }
    Ok(())
}

/// Minimizes `mean logistic loss + lambda * ||w||_1` with the bias left
/// unpenalized.
pub fn fit_l1_logreg(x: ArrayView2<'_, f64>, labels: &[u8], lambda: f64, opts: &FitOptions) -> Result<SentimentClassifier> {
    fit_from(x, labels, lambda, opts, None)
}

/// Like [`fit_l1_logreg`], starting from `warm` when given.
pub fn fit_from(
    x: ArrayView2<'_, f64>,
    labels: &[u8],
    lambda: f64,
    opts: &FitOptions,
    warm: Option<&SentimentClassifier>,
) -> Result<SentimentClassifier> {
    check_labels(x, labels)?;
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::invalid("lambda must be finite and non-negative"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { context: "classifier features".into(), tensor: "features".into() });
    }
    let y = Array1::from_iter(labels.iter().map(|&l| l as f64));
    let n = x.ncols();
    let (mut w, mut b) = match warm {
        Some(c) if c.weights.len() == n => (c.weights.clone(), c.bias),
        _ => {
            let p = y.mean().expect("nonempty");
            (Array1::zeros(n), (p / (1.0 - p)).ln())
        }
    };
    let objective = |w: &Array1<f64>, b: f64| smooth_loss(x, &y, w, b) + lambda * w.mapv(f64::abs).sum();

    let mut step_l = 1.0;
    let (mut yw, mut yb) = (w.clone(), b);
    let mut t = 1.0f64;
    let mut f_prev = objective(&w, b);
    for iter in 1..=opts.max_iter {
        let (f_y, gw, gb) = smooth_part(x, &y, &yw, yb);
        // backtracking on the quadratic upper bound
        let (nw, nb) = loop {
            let nw = Array1::from_iter(yw.iter().zip(&gw).map(|(&v, &g)| soft_threshold(v - g / step_l, lambda / step_l)));
            let nb = yb - gb / step_l;
            let dw = &nw - &yw;
            let db = nb - yb;
            let bound = f_y + gw.dot(&dw) + gb * db + 0.5 * step_l * (dw.dot(&dw) + db * db);
            if smooth_loss(x, &y, &nw, nb) <= bound + 1e-12 * bound.abs().max(1.0) {
                break (nw, nb);
            }
            step_l *= 2.0;
        };
        let gmap = (&yw - &nw).mapv(f64::abs).fold(((yb - nb) * step_l).abs(), |a, &v| a.max(v * step_l));
        let f_new = objective(&nw, nb);
        if f_new > f_prev && t > 1.0 {
            // momentum overshot: restart from the last iterate
            yw = w.clone();
            yb = b;
            t = 1.0;
            continue;
        }
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let beta = (t - 1.0) / t_next;
        yw = &nw + &((&nw - &w) * beta);
        yb = nb + beta * (nb - b);
        w = nw;
        b = nb;
        t = t_next;
        f_prev = f_new;
        step_l = (step_l / 1.5).max(1e-12);
        if gmap < opts.tol {
            return Ok(SentimentClassifier { weights: w, bias: b, lambda, iterations: iter, converged: true });
        }
    }
    log::warn!("L1 logistic regression stopped at {} iterations without reaching tolerance {}", opts.max_iter, opts.tol);
    Ok(SentimentClassifier { weights: w, bias: b, lambda, iterations: opts.max_iter, converged: false })
}

/// `count` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..count).map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64)).collect()
}

/// The default regularization grid, 1e-4 to 1 in 9 steps.
pub fn default_lambda_grid() -> Vec<f64> {
    log_grid(1e-4, 1.0, 9)
}

/// Fits every lambda of `grid`, strongest first, warm-starting each fit from
/// the previous one. Returned in the order of `grid`.
pub fn fit_path(x: ArrayView2<'_, f64>, labels: &[u8], grid: &[f64], opts: &FitOptions) -> Result<Vec<SentimentClassifier>> {
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid[b].total_cmp(&grid[a]));
    let mut out: Vec<Option<SentimentClassifier>> = vec![None; grid.len()];
    let mut warm: Option<SentimentClassifier> = None;
    for i in order {
        let fit = fit_from(x, labels, grid[i], opts, warm.as_ref())?;
        warm = Some(fit.clone());
        out[i] = Some(fit);
    }
    Ok(out.into_iter().map(|c| c.expect("every lambda fitted")).collect())
}

pub fn accuracy(clf: &SentimentClassifier, x: ArrayView2<'_, f64>, labels: &[u8]) -> f64 {
    let p = clf.predict_all(x);
    let hits = p.iter().zip(labels).filter(|(&p, &l)| (p > 0.5) == (l == 1)).count();
    hits as f64 / labels.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Cyclic coordinate descent where each one-dimensional subproblem is
    /// solved by bisection on its subdifferential; independent of the
    /// proximal-gradient code path.
    fn coordinate_descent(x: &Array2<f64>, labels: &[u8], lambda: f64, sweeps: usize) -> (Array1<f64>, f64) {
        let n = x.ncols();
        let m = x.nrows() as f64;
        let y: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
        let mut w = vec![0.0; n + 1]; // last entry is the bias
        let feature = |i: usize, j: usize| if j == n { 1.0 } else { x[[i, j]] };
        let deriv = |w: &[f64], j: usize| -> f64 {
            (0..x.nrows())
                .map(|i| {
                    let z: f64 = (0..n).map(|k| w[k] * x[[i, k]]).sum::<f64>() + w[n];
                    (1.0 / (1.0 + (-z).exp()) - y[i]) * feature(i, j)
                })
                .sum::<f64>()
                / m
        };
        for _ in 0..sweeps {
            for j in 0..=n {
                let pen = if j == n { 0.0 } else { lambda };
                let mut probe = w.clone();
                probe[j] = 0.0;
                let d0 = deriv(&probe, j);
                if j < n && d0.abs() <= pen {
                    w[j] = 0.0;
                    continue;
                }
                // the optimum sits on the side where the derivative pushes
                let sign = if d0 < 0.0 { 1.0 } else { -1.0 };
                let (mut lo, mut hi) = if sign > 0.0 { (0.0, 1.0) } else { (-1.0, 0.0) };
                let g = |v: f64, w: &mut Vec<f64>| {
                    w[j] = v;
                    deriv(w, j) + pen * sign
                };
                while g(if sign > 0.0 { hi } else { lo }, &mut probe) * sign < 0.0 {
                    if sign > 0.0 {
                        hi *= 2.0
                    } else {
                        lo *= 2.0
                    }
                }
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if g(mid, &mut probe) < 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                w[j] = 0.5 * (lo + hi);
            }
        }
        let b = w[n];
        (Array1::from(w[..n].to_vec()), b)
    }

    fn synthetic(seed: u64, m: usize, n: usize) -> (Array2<f64>, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((m, n), |_| rng.gen_range(-1.0..1.0));
        let truth: Vec<f64> = (0..n).map(|j| [1.5, -2.0, 0.0, 0.7, 0.0][j % 5]).collect();
        let labels = (0..m)
            .map(|i| {
                let z: f64 = (0..n).map(|j| truth[j] * x[[i, j]]).sum::<f64>() + 0.3;
                u8::from(rng.gen::<f64>() < sigmoid(z))
            })
            .collect();
        (x, labels)
    }

    #[test]
    fn matches_coordinate_descent_oracle() {
        for (seed, lambda) in [(1, 0.01), (2, 0.05), (3, 0.002)] {
            let (x, labels) = synthetic(seed, 20, 3);
            let clf = fit_l1_logreg(x.view(), &labels, lambda, &FitOptions::default()).unwrap();
            assert!(clf.converged);
            let (w, b) = coordinate_descent(&x, &labels, lambda, 400);
            let ours = l1_objective(x.view(), &labels, &clf.weights, clf.bias, lambda);
            let oracle = l1_objective(x.view(), &labels, &w, b, lambda);
            assert!((ours - oracle).abs() < 1e-4, "seed {seed}: {ours} vs {oracle}");
            assert!(ours <= oracle + 1e-9);
        }
    }

    #[test]
    fn huge_lambda_gives_intercept_only() {
        let (x, labels) = synthetic(4, 50, 6);
        let clf = fit_l1_logreg(x.view(), &labels, 1e6, &FitOptions::default()).unwrap();
        assert!(clf.support().is_empty());
        let p = labels.iter().filter(|&&l| l == 1).count() as f64 / 50.0;
        assert!((clf.bias - (p / (1.0 - p)).ln()).abs() < 1e-6);
        let mut buf = Vec::new();
        clf.write_support_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "index,weight\n");
    }

    #[test]
    fn separable_one_dimensional_sign() {
        let x = array![[-1.0], [1.0]];
        let clf = fit_l1_logreg(x.view(), &[0, 1], 0.01, &FitOptions::default()).unwrap();
        assert!(clf.weights[0] > 0.0);
        assert!(clf.predict(x.row(1)) > 0.5 && clf.predict(x.row(0)) < 0.5);
    }

    #[test]
    fn rejects_single_class() {
        let x = array![[0.0], [1.0]];
        assert!(matches!(fit_l1_logreg(x.view(), &[1, 1], 0.1, &FitOptions::default()), Err(Error::SingleClass)));
    }

    #[test]
    fn support_shrinks_along_the_grid() {
        let (x, labels) = synthetic(5, 120, 15);
        let grid = default_lambda_grid();
        assert_eq!(grid.len(), 9);
        assert!((grid[0] - 1e-4).abs() < 1e-18 && (grid[8] - 1.0).abs() < 1e-12);
        let path = fit_path(x.view(), &labels, &grid, &FitOptions::default()).unwrap();
        let sizes: Vec<usize> = path.iter().map(|c| c.support().len()).collect();
        assert!(sizes.windows(2).all(|w| w[1] <= w[0]), "{sizes:?}");
        assert!(sizes[0] > sizes[8]);
        assert!(sizes.iter().all(|&s| s <= 15));
    }

    #[test]
    fn scaling_features_keeps_predictions_at_zero_lambda() {
        let (x, labels) = synthetic(6, 60, 4);
        let a = fit_l1_logreg(x.view(), &labels, 0.0, &FitOptions::default()).unwrap();
        let scaled = &x * 3.5;
        let b = fit_l1_logreg(scaled.view(), &labels, 0.0, &FitOptions::default()).unwrap();
        let pa = a.predict_all(x.view());
        let pb = b.predict_all(scaled.view());
        assert!(pa.iter().zip(&pb).all(|(p, q)| (*p > 0.5) == (*q > 0.5)));
    }

    #[test]
    fn json_round_trip_keeps_sparse_weights() {
        let (x, labels) = synthetic(7, 80, 10);
        let clf = fit_l1_logreg(x.view(), &labels, 0.05, &FitOptions::default()).unwrap();
        let back = SentimentClassifier::from_json(&clf.to_json().unwrap()).unwrap();
        assert_eq!(back.weights, clf.weights);
        assert_eq!(back.bias, clf.bias);
        assert!(SentimentClassifier::from_json(r#"{"lambda":1,"bias":0,"dim":2,"weights":[[5,1.0]]}"#).is_err());
    }
}
