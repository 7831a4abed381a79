use crate::error::{Error, Result};

/// Number of points of a uniform grid over `[0, duration]` at `rate` Hz.
/// A positive duration always gets both of its endpoints.
pub fn grid_len(duration: f64, rate: f64) -> usize {
    let intervals = (duration * rate).round().max(0.0) as usize;
    if duration > 0.0 {
        intervals.max(1) + 1
    } else {
        1
    }
}

/// Times of the uniform grid, evenly spaced so the last point is `duration`.
pub fn grid_times(duration: f64, rate: f64) -> Vec<f64> {
    let n = grid_len(duration, rate);
    if n == 1 {
        return vec![0.0];
    }
    (0..n).map(|i| duration * i as f64 / (n - 1) as f64).collect()
}

/// Linear interpolation of `(time, value)` samples (strictly increasing
/// times) onto the uniform grid over `[0, duration]`. Outside the sampled
/// span the nearest end value is held.
pub fn resample(samples: &[(f64, f64)], duration: f64, rate: f64) -> Result<Vec<f64>> {
    if samples.len() < 2 {
        return Err(Error::invalid("resampling needs at least two samples"));
    }
    if !(rate > 0.0 && duration >= 0.0 && duration.is_finite()) {
        return Err(Error::invalid("rate must be positive and duration finite and non-negative"));
    }
    let mut j = 0;
    Ok(grid_times(duration, rate)
        .into_iter()
        .map(|t| {
            while j + 2 < samples.len() && samples[j + 1].0 <= t {
                j += 1;
            }
            let (t0, v0) = samples[j];
            let (t1, v1) = samples[j + 1];
            if t <= t0 {
                v0
            } else if t >= t1 {
                v1
            } else {
                v0 + (v1 - v0) * (t - t0) / (t1 - t0)
            }
        })
        .collect())
}

/// Centered moving average over `window` (odd) samples, the window shrinking
/// at both ends.
pub fn smooth(series: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::invalid("smoothing window must be odd and positive"));
    }
    let half = window / 2;
    Ok((0..series.len())
        .map(|i| {
            let span = &series[i.saturating_sub(half)..(i + half + 1).min(series.len())];
            span.iter().sum::<f64>() / span.len() as f64
        })
        .collect())
}

/// Dynamic time warping with absolute local cost and steps
/// down / right / diagonal.
pub fn dtw(a: &[f64], b: &[f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "dtw of an empty series");
    let mut prev = vec![f64::INFINITY; b.len()];
    let mut cur = vec![0.0; b.len()];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            let best = match (i, j) {
                (0, 0) => 0.0,
                (0, _) => cur[j - 1],
                (_, 0) => prev[0],
                _ => prev[j].min(cur[j - 1]).min(prev[j - 1]),
            };
            cur[j] = best + (x - y).abs();
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len() - 1]
}

/// Symmetric pairwise DTW matrix.
pub fn dtw_matrix(series: &[Vec<f64>]) -> ndarray::Array2<f64> {
    use rayon::prelude::*;
    let n = series.len();
    let rows: Vec<Vec<f64>> =
        (0..n).into_par_iter().map(|i| (0..n).map(|j| if j > i { dtw(&series[i], &series[j]) } else { 0.0 }).collect()).collect();
    let mut d = ndarray::Array2::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            d[[i, j]] = rows[i][j];
            d[[j, i]] = rows[i][j];
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Minimum over every monotone warping path, enumerated recursively.
    pub(crate) fn dtw_brute(a: &[f64], b: &[f64]) -> f64 {
        fn walk(a: &[f64], b: &[f64], i: usize, j: usize) -> f64 {
            let here = (a[i] - b[j]).abs();
            if i + 1 == a.len() && j + 1 == b.len() {
                return here;
            }
            let mut best = f64::INFINITY;
            if i + 1 < a.len() {
                best = best.min(walk(a, b, i + 1, j));
            }
            if j + 1 < b.len() {
                best = best.min(walk(a, b, i, j + 1));
            }
            if i + 1 < a.len() && j + 1 < b.len() {
                best = best.min(walk(a, b, i + 1, j + 1));
            }
            here + best
        }
        walk(a, b, 0, 0)
    }

    #[test]
    fn resample_linear_ramp() {
        let r = resample(&[(0.0, 0.0), (10.0, 1.0)], 10.0, 1.0).unwrap();
        assert_eq!(r.len(), 11);
        for (i, v) in r.iter().enumerate() {
            assert!((v - i as f64 / 10.0).abs() < 1e-12);
        }
        assert!(resample(&[(0.0, 0.3)], 10.0, 1.0).is_err());
    }

    #[test]
    fn resample_uniform_is_identity_and_holds_ends() {
        let s: Vec<(f64, f64)> = (0..6).map(|i| (i as f64, (i as f64 * 0.7).sin())).collect();
        let r = resample(&s, 5.0, 1.0).unwrap();
        assert!(r.iter().zip(&s).all(|(a, b)| (a - b.1).abs() < 1e-12));
        let late = resample(&[(2.0, 0.5), (3.0, -0.5)], 6.0, 1.0).unwrap();
        assert_eq!(late, vec![0.5, 0.5, 0.5, -0.5, -0.5, -0.5, -0.5]);
    }

    #[test]
    fn smoothing_examples() {
        let s = smooth(&[0.0, 1.0, 0.0], 3).unwrap();
        assert!((s[0] - 0.5).abs() < 1e-12 && (s[1] - 1.0 / 3.0).abs() < 1e-12 && (s[2] - 0.5).abs() < 1e-12);
        assert_eq!(smooth(&[0.2, -0.4, 0.9], 1).unwrap(), vec![0.2, -0.4, 0.9]);
        assert!(smooth(&[0.3; 9], 5).unwrap().iter().all(|v| (v - 0.3).abs() < 1e-12));
        assert!(smooth(&[1.0], 4).is_err());
    }

    #[test]
    fn dtw_examples() {
        assert_eq!(dtw(&[0.0], &[1.0]), 1.0);
        assert_eq!(dtw(&[0.0, 0.0, 1.0], &[0.0, 1.0]), 0.0);
        assert_eq!(dtw(&[0.3, -0.2, 0.9], &[0.3, -0.2, 0.9]), 0.0);
    }

    #[test]
    fn matrix_is_symmetric_with_zero_diagonal() {
        let s = vec![vec![0.0, 1.0], vec![1.0, 1.0, 0.5], vec![-1.0]];
        let d = dtw_matrix(&s);
        for i in 0..3 {
            assert_eq!(d[[i, i]], 0.0);
            for j in 0..3 {
                assert_eq!(d[[i, j]], d[[j, i]]);
                assert_eq!(d[[i, j]], if i == j { 0.0 } else { dtw(&s[i], &s[j]) });
            }
        }
    }

    proptest! {
        #[test]
        fn dtw_matches_path_enumeration(
            a in prop::collection::vec(-1i32..=1, 1..=6),
            b in prop::collection::vec(-1i32..=1, 1..=6),
        ) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            prop_assert_eq!(dtw(&a, &b), dtw_brute(&a, &b));
            prop_assert_eq!(dtw(&a, &b), dtw(&b, &a));
            prop_assert!(dtw(&a, &b) >= 0.0);
        }

        #[test]
        fn resampled_endpoints_match(vals in prop::collection::vec(-1.0f64..1.0, 2..20), rate in 0.5f64..4.0) {
            let samples: Vec<(f64, f64)> = vals.iter().enumerate().map(|(i, &v)| (i as f64 * 0.37, v)).collect();
            let duration = samples.last().unwrap().0;
            let r = resample(&samples, duration, rate).unwrap();
            prop_assert_eq!(r[0], vals[0]);
            prop_assert!((r[r.len() - 1] - vals[vals.len() - 1]).abs() < 1e-12);
        }
    }
}
