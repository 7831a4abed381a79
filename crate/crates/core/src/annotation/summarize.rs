use ndarray::Array2;
use serde::Serialize;

use super::pam::Clustering;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    /// Pointwise mean of the kept cluster's series.
    pub mean: Vec<f64>,
    pub sizes: Vec<usize>,
    pub variances: Vec<f64>,
    pub noise_cluster: usize,
    pub kept_cluster: usize,
}

fn population_variance(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    values.map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

/// Spread of a cluster: the time-average of the across-member variance.
/// A one-member cluster has no across-member spread, so its series'
/// variance over time stands in.
pub fn cluster_variance(members: &[&[f64]]) -> f64 {
    match members {
        [] => 0.0,
        [only] => population_variance(only.iter().copied()),
        _ => {
            let len = members[0].len();
            (0..len).map(|t| population_variance(members.iter().map(|m| m[t]))).sum::<f64>() / len as f64
        }
    }
}

/// Discards the highest-variance cluster, keeps the most populous of the
/// rest (ties: smaller mean distance to its medoid) and averages it.
pub fn summarize(clustering: &Clustering, series: &[Vec<f64>], dist: &Array2<f64>) -> Result<Summary> {
    let k = clustering.medoids.len();
    if k < 2 {
        return Err(Error::invalid("summarizing needs at least two clusters"));
    }
    if series.iter().any(|s| s.len() != series[0].len()) {
        return Err(Error::invalid("series must share one grid"));
    }
    let members: Vec<Vec<usize>> = (0..k).map(|c| (0..series.len()).filter(|&i| clustering.assignment[i] == c).collect()).collect();
    let sizes: Vec<usize> = members.iter().map(Vec::len).collect();
    let variances: Vec<f64> =
        members.iter().map(|m| cluster_variance(&m.iter().map(|&i| series[i].as_slice()).collect::<Vec<_>>())).collect();
    for (c, m) in members.iter().enumerate() {
        if m.len() < 2 {
            log::warn!("cluster {c} has {} member(s); using its temporal variance", m.len());
        }
    }
    let noise = (0..k).max_by(|&a, &b| variances[a].total_cmp(&variances[b])).expect("k >= 2");
    let spread = |c: usize| {
        let m = &members[c];
        m.iter().map(|&i| dist[[i, clustering.medoids[c]]]).sum::<f64>() / m.len().max(1) as f64
    };
    let kept = (0..k)
        .filter(|&c| c != noise && sizes[c] > 0)
        .min_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(spread(a).total_cmp(&spread(b))))
        .ok_or_else(|| Error::invalid("no non-noise cluster has members"))?;
    let len = series[0].len();
    let mean = (0..len).map(|t| members[kept].iter().map(|&i| series[i][t]).sum::<f64>() / sizes[kept] as f64).collect();
    Ok(Summary { mean, sizes, variances, noise_cluster: noise, kept_cluster: kept })
}
