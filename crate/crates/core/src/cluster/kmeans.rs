//! Lloyd's k-means with k-means++ seeding.
//!
//! Samples are passed as one flat row-major slice of `n * dim` values.
//! All arithmetic is sequential in sample order so results are reproducible
//! bit-for-bit for a given seed.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{validation, Result};

pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop once the largest centroid displacement falls below this.
    pub tol: f64,
}

impl KMeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        Self { k, seed, max_iter: DEFAULT_MAX_ITER, tol: DEFAULT_TOL }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub k: usize,
    pub dim: usize,
    /// `k * dim` values, row-major.
    pub centroids: Vec<f64>,
    /// Within-cluster sum of squared distances for the returned assignment.
    pub inertia: f64,
}

impl ClusterModel {
    pub fn centroid(&self, j: usize) -> &[f64] {
        &self.centroids[j * self.dim..(j + 1) * self.dim]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansOutput {
    pub model: ClusterModel,
    pub assignments: Vec<usize>,
    /// Set when `k` exceeded the number of distinct samples and was reduced.
    pub reduced_k: bool,
    /// Inertia after every assignment step, including the final one.
    pub inertia_history: Vec<f64>,
    /// Number of centroid updates performed.
    pub iterations: usize,
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Number of distinct sample vectors (compared bitwise, with `-0.0 == 0.0`).
pub fn distinct_count(data: &[f64], dim: usize) -> usize {
    distinct_count_up_to(data, dim, usize::MAX)
}

/// `min(distinct_count(data, dim), cap)`, stopping early once `cap` is reached.
pub fn distinct_count_up_to(data: &[f64], dim: usize, cap: usize) -> usize {
    let mut seen: HashSet<Vec<u64>> = HashSet::new();
    for row in data.chunks_exact(dim) {
        if seen.len() >= cap {
            break;
        }
        seen.insert(row.iter().map(|&v| (v + 0.0).to_bits()).collect());
    }
    seen.len()
}

fn check_input(data: &[f64], dim: usize) -> Result<usize> {
    if dim == 0 {
        return Err(validation!("k-means: sample dimension must be >= 1"));
    }
    if data.is_empty() {
        return Err(validation!("k-means: no samples"));
    }
    if !data.len().is_multiple_of(dim) {
        return Err(validation!("k-means: {} values is not a multiple of dim {dim}", data.len()));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(validation!("k-means: non-finite sample value"));
    }
    Ok(data.len() / dim)
}

/// Clusters `data` into `params.k` groups.
///
/// When fewer than `k` distinct samples exist the effective `k` becomes the
/// distinct count and [`KMeansOutput::reduced_k`] is set.
pub fn kmeans(data: &[f64], dim: usize, params: &KMeansParams) -> Result<KMeansOutput> {
    check_input(data, dim)?;
    if params.k == 0 {
        return Err(validation!("k-means: k must be >= 1"));
    }
    let k = distinct_count_up_to(data, dim, params.k);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let init = kmeans_plus_plus(data, dim, k, &mut rng)?;
    let mut out = lloyd(data, dim, init, params.max_iter, params.tol)?;
    out.reduced_k = k < params.k;
    Ok(out)
}

/// k-means++ seeding: the first centre is uniform, each further centre is drawn
/// with probability proportional to its squared distance to the nearest chosen centre.
///
/// Requires `k` to be at most the number of distinct samples.
pub fn kmeans_plus_plus<R: Rng>(data: &[f64], dim: usize, k: usize, rng: &mut R) -> Result<Vec<f64>> {
    let n = check_input(data, dim)?;
    if k == 0 || k > n {
        return Err(validation!("k-means++: cannot seed {k} centres from {n} samples"));
    }
    let row = |i: usize| &data[i * dim..(i + 1) * dim];
    let first = rng.random_range(0..n);
    let mut centroids = row(first).to_vec();
    let mut nearest: Vec<f64> = (0..n).map(|i| squared_distance(row(i), row(first))).collect();
    while centroids.len() < k * dim {
        let total: f64 = nearest.iter().sum();
        if total <= 0.0 {
            return Err(validation!("k-means++: fewer than {k} distinct samples"));
        }
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &d) in nearest.iter().enumerate() {
            if d <= 0.0 {
                continue;
            }
            acc += d;
            pick = Some(i);
            if acc > target {
                break;
            }
        }
        // pick is Some because total > 0
        let chosen = pick.expect("positive weight exists");
        centroids.extend_from_slice(row(chosen));
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(squared_distance(row(i), row(chosen)));
        }
    }
    Ok(centroids)
}

/// Nearest centroid for each sample (ties go to the lowest index) and its squared distance.
pub fn assign(data: &[f64], dim: usize, centroids: &[f64]) -> (Vec<usize>, Vec<f64>) {
    data.chunks_exact(dim)
        .map(|x| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (j, c) in centroids.chunks_exact(dim).enumerate() {
                let d = squared_distance(x, c);
                if d < best_d {
                    best = j;
                    best_d = d;
                }
            }
            (best, best_d)
        })
        .unzip()
}

/// Runs Lloyd iterations from the given initial centroids.
///
/// An empty cluster is re-seeded at the sample farthest from its assigned
/// centroid (lowest index on ties, each sample used at most once per step).
pub fn lloyd(data: &[f64], dim: usize, init: Vec<f64>, max_iter: usize, tol: f64) -> Result<KMeansOutput> {
    check_input(data, dim)?;
    if init.is_empty() || !init.len().is_multiple_of(dim) {
        return Err(validation!("k-means: initial centroids do not match dim {dim}"));
    }
    let k = init.len() / dim;
    let mut centroids = init;
    let mut history = Vec::new();
    let mut iterations = 0;

    while iterations < max_iter {
        let (labels, dists) = assign(data, dim, &centroids);
        history.push(dists.iter().sum());

        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for (x, &j) in data.chunks_exact(dim).zip(&labels) {
            counts[j] += 1;
            for (s, v) in sums[j * dim..(j + 1) * dim].iter_mut().zip(x) {
                *s += v;
            }
        }
        let mut next = vec![0.0; k * dim];
        let mut spare = dists;
        for j in 0..k {
            let dst = &mut next[j * dim..(j + 1) * dim];
            if counts[j] > 0 {
                let n = counts[j] as f64;
                for (d, s) in dst.iter_mut().zip(&sums[j * dim..(j + 1) * dim]) {
                    *d = s / n;
                }
            } else {
                let far = farthest(&spare);
                spare[far] = f64::NEG_INFINITY;
                dst.copy_from_slice(&data[far * dim..(far + 1) * dim]);
            }
        }
        let shift = centroids
            .chunks_exact(dim)
            .zip(next.chunks_exact(dim))
            .map(|(a, b)| squared_distance(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        iterations += 1;
        if shift < tol {
            break;
        }
    }

    let (assignments, dists) = assign(data, dim, &centroids);
    let inertia: f64 = dists.iter().sum();
    history.push(inertia);
    Ok(KMeansOutput {
        model: ClusterModel { k, dim, centroids, inertia },
        assignments,
        reduced_k: false,
        inertia_history: history,
        iterations,
    })
}

fn farthest(dists: &[f64]) -> usize {
    let mut best = 0;
    for (i, &d) in dists.iter().enumerate() {
        if d > dists[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_pair() {
        let out = kmeans(&[0.0, 10.0], 1, &KMeansParams::new(2, 3)).unwrap();
        let mut c = out.model.centroids.clone();
        c.sort_by(f64::total_cmp);
        assert_eq!(c, vec![0.0, 10.0]);
        assert_eq!(out.model.inertia, 0.0);
        assert!(!out.reduced_k);
    }

    /// Optimal SSE over every 2-partition of a 1-D sample.
    fn brute_force_sse(xs: &[f64]) -> f64 {
        let n = xs.len();
        let mut best = f64::INFINITY;
        for mask in 1..(1u32 << n) - 1 {
            let mut sse = 0.0;
            for side in [true, false] {
                let part: Vec<f64> = (0..n).filter(|&i| ((mask >> i) & 1 == 1) == side).map(|i| xs[i]).collect();
                let mean = part.iter().sum::<f64>() / part.len() as f64;
                sse += part.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
            }
            best = best.min(sse);
        }
        best
    }

    #[test]
    fn two_pairs_match_brute_force() {
        let xs = [0.0, 1.0, 9.0, 10.0];
        assert_eq!(brute_force_sse(&xs), 1.0);
        for seed in 0..20 {
            let out = kmeans(&xs, 1, &KMeansParams::new(2, seed)).unwrap();
            let mut c = out.model.centroids.clone();
            c.sort_by(f64::total_cmp);
            assert_eq!(c, vec![0.5, 9.5]);
            assert_eq!(out.model.inertia, 1.0);
        }
    }

    #[test]
    fn identical_samples_reduce_k() {
        let out = kmeans(&[2.0, 1.0, 2.0, 1.0, 2.0, 1.0], 2, &KMeansParams::new(2, 0)).unwrap();
        assert!(out.reduced_k);
        assert_eq!(out.model.k, 1);
        assert_eq!(out.assignments, vec![0, 0, 0]);
        assert_eq!(out.model.inertia, 0.0);
    }

    #[test]
    fn empty_cluster_is_reseeded_at_farthest_sample() {
        // centroid 1 starts far away and captures nothing
        let data = [0.0, 1.0, 2.0, 10.0];
        let out = lloyd(&data, 1, vec![1.0, 100.0], 100, 1e-9).unwrap();
        let mut c = out.model.centroids.clone();
        c.sort_by(f64::total_cmp);
        assert_eq!(c, vec![1.0, 10.0]);
        assert_eq!(out.model.inertia, 2.0);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let (labels, _) = assign(&[5.0], 1, &[4.0, 6.0]);
        assert_eq!(labels, vec![0]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(kmeans(&[], 1, &KMeansParams::new(1, 0)).is_err());
        assert!(kmeans(&[1.0], 1, &KMeansParams::new(0, 0)).is_err());
        assert!(kmeans(&[1.0, 2.0, 3.0], 2, &KMeansParams::new(1, 0)).is_err());
        assert!(kmeans(&[f64::NAN], 1, &KMeansParams::new(1, 0)).is_err());
    }

    #[test]
    fn seeding_is_deterministic() {
        let data: Vec<f64> = (0..50).map(|i| ((i * 37) % 11) as f64 * 0.7).collect();
        let a = kmeans(&data, 2, &KMeansParams::new(4, 9)).unwrap();
        let b = kmeans(&data, 2, &KMeansParams::new(4, 9)).unwrap();
        assert_eq!(a, b);
    }
}
