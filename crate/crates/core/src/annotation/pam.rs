//! Partitioning around medoids over a precomputed distance matrix.

use ndarray::Array2;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Clustering {
    /// Cluster of each item, `0..k`, clusters numbered by medoid order.
    pub assignment: Vec<usize>,
    /// Item index of each cluster's medoid.
    pub medoids: Vec<usize>,
    /// Sum of distances from items to their medoids.
    pub cost: f64,
}

fn assign(dist: &Array2<f64>, medoids: &[usize]) -> (Vec<usize>, f64) {
    let mut cost = 0.0;
    let assignment = (0..dist.nrows())
        .map(|i| {
            let (c, d) = medoids.iter().enumerate().map(|(c, &m)| (c, dist[[i, m]])).fold((0, f64::INFINITY), |best, cur| {
                if cur.1 < best.1 {
                    cur
                } else {
                    best
                }
            });
            cost += d;
            c
        })
        .collect();
    (assignment, cost)
}

fn total_cost(dist: &Array2<f64>, medoids: &[usize]) -> f64 {
    (0..dist.nrows()).map(|i| medoids.iter().map(|&m| dist[[i, m]]).fold(f64::INFINITY, f64::min)).sum()
}

/// Greedy BUILD: start from the most central item, then repeatedly add the
/// item that lowers the total cost most.
fn build(dist: &Array2<f64>, k: usize) -> Vec<usize> {
    let n = dist.nrows();
    let mut medoids = Vec::with_capacity(k);
    while medoids.len() < k {
        let next = (0..n)
            .filter(|i| !medoids.contains(i))
            .map(|i| {
                let mut trial = medoids.clone();
                trial.push(i);
                (i, total_cost(dist, &trial))
            })
            .fold((usize::MAX, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
        medoids.push(next.0);
    }
    medoids
}

/// SWAP: take the best improving (medoid, non-medoid) exchange until none
/// improves.
fn swap(dist: &Array2<f64>, mut medoids: Vec<usize>) -> Vec<usize> {
    let n = dist.nrows();
    let mut cost = total_cost(dist, &medoids);
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for slot in 0..medoids.len() {
            for cand in (0..n).filter(|c| !medoids.contains(c)) {
                let mut trial = medoids.clone();
                trial[slot] = cand;
                let c = total_cost(dist, &trial);
                if c < best.map_or(cost, |b| b.2) - 1e-12 {
                    best = Some((slot, cand, c));
                }
            }
        }
        match best {
            Some((slot, cand, c)) => {
                medoids[slot] = cand;
                cost = c;
            }
            None => return medoids,
        }
    }
}

/// PAM with the deterministic BUILD start plus `restarts` seeded random
/// starts; the lowest-cost result wins (earliest on ties).
pub fn pam(dist: &Array2<f64>, k: usize, seed: u64, restarts: usize) -> Result<Clustering> {
    let n = dist.nrows();
    if k == 0 || n < k {
        return Err(Error::invalid(format!("cannot form {k} clusters from {n} series")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts = vec![build(dist, k)];
    for _ in 0..restarts {
        starts.push(sample(&mut rng, n, k).into_vec());
    }
    let mut best: Option<Clustering> = None;
    for start in starts {
        let mut medoids = swap(dist, start);
        medoids.sort_unstable();
        let (assignment, cost) = assign(dist, &medoids);
        if best.as_ref().is_none_or(|b| cost < b.cost - 1e-12) {
            best = Some(Clustering { assignment, medoids, cost });
        }
    }
    Ok(best.expect("at least one start"))
}
