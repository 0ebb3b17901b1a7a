//! Reference implementations written straight from the definitions, kept
//! deliberately naive so they share no code path with the library.

#![allow(dead_code)]

use isp_core::{DistanceMatrix, PartClassifier, PixelBatch, Reduction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub struct NaiveKMeans {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    pub history: Vec<f64>,
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        let d = a[i] - b[i];
        s += d * d;
    }
    s
}

fn nearest(x: &[f64], cs: &[Vec<f64>]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in cs.iter().enumerate() {
        let d = sq(x, c);
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    (best, best_d)
}

/// Lloyd iterations from `init`, re-seeding an empty cluster at the unused
/// sample farthest from its centroid.
pub fn naive_lloyd(xs: &[Vec<f64>], init: Vec<Vec<f64>>, max_iter: usize, tol: f64) -> NaiveKMeans {
    let k = init.len();
    let dim = xs[0].len();
    let mut cs = init;
    let mut history = Vec::new();
    for _ in 0..max_iter {
        let mut labels = Vec::new();
        let mut dists = Vec::new();
        for x in xs {
            let (j, d) = nearest(x, &cs);
            labels.push(j);
            dists.push(d);
        }
        let mut total = 0.0;
        for d in &dists {
            total += d;
        }
        history.push(total);
        let mut used = vec![false; xs.len()];
        let mut next = Vec::new();
        for j in 0..k {
            let mut sum = vec![0.0; dim];
            let mut n = 0usize;
            for (i, x) in xs.iter().enumerate() {
                if labels[i] == j {
                    n += 1;
                    for t in 0..dim {
                        sum[t] += x[t];
                    }
                }
            }
            if n > 0 {
                next.push(sum.iter().map(|s| s / n as f64).collect());
            } else {
                let mut far = None::<usize>;
                for i in 0..xs.len() {
                    if used[i] {
                        continue;
                    }
                    if far.is_none_or(|f| dists[i] > dists[f]) {
                        far = Some(i);
                    }
                }
                let f = far.unwrap();
                used[f] = true;
                next.push(xs[f].clone());
            }
        }
        let mut shift: f64 = 0.0;
        for j in 0..k {
            shift = shift.max(sq(&cs[j], &next[j]).sqrt());
        }
        cs = next;
        if shift < tol {
            break;
        }
    }
    let mut assignments = Vec::new();
    let mut inertia = 0.0;
    for x in xs {
        let (j, d) = nearest(x, &cs);
        assignments.push(j);
        inertia += d;
    }
    history.push(inertia);
    NaiveKMeans { centroids: cs, assignments, inertia, history }
}

/// CMC and mAP without sorting: a gallery item's rank is one plus the number
/// of valid items ordered before it by (distance, index).
pub fn naive_cmc_map(dm: &DistanceMatrix) -> Option<(Vec<f64>, f64)> {
    let g = dm.gallery.len();
    let mut first_ranks = Vec::new();
    let mut aps = Vec::new();
    for (i, q) in dm.queries.iter().enumerate() {
        let valid: Vec<usize> = (0..g)
            .filter(|&j| !(dm.gallery[j].person_id == q.person_id && dm.gallery[j].camera_id == q.camera_id))
            .collect();
        let rank_of = |j: usize| {
            let dj = dm.get(i, j);
            1 + valid.iter().filter(|&&o| dm.get(i, o) < dj || (dm.get(i, o) == dj && o < j)).count()
        };
        let pos_ranks: Vec<usize> =
            valid.iter().filter(|&&j| dm.gallery[j].person_id == q.person_id).map(|&j| rank_of(j)).collect();
        if pos_ranks.is_empty() {
            continue;
        }
        let mut ap = 0.0;
        for &r in &pos_ranks {
            let hits = pos_ranks.iter().filter(|&&o| o <= r).count();
            ap += hits as f64 / r as f64;
        }
        aps.push(ap / pos_ranks.len() as f64);
        first_ranks.push(*pos_ranks.iter().min().unwrap());
    }
    if aps.is_empty() {
        return None;
    }
    let n = aps.len() as f64;
    let cmc = (1..=g).map(|r| first_ranks.iter().filter(|&&f| f <= r).count() as f64 / n).collect();
    Some((cmc, aps.iter().sum::<f64>() / n))
}

/// Batch-hard triplet loss by enumerating every (anchor, positive, negative) triple.
pub fn exhaustive_triplet(feats: &[Vec<f64>], ids: &[u32], margin: f64) -> Option<f64> {
    let dist = |a: usize, b: usize| sq(&feats[a], &feats[b]).sqrt();
    let n = feats.len();
    let mut total = 0.0;
    let mut anchors = 0;
    for a in 0..n {
        let mut worst: Option<f64> = None;
        for p in 0..n {
            if p == a || ids[p] != ids[a] {
                continue;
            }
            for q in 0..n {
                if ids[q] == ids[a] {
                    continue;
                }
                let v = (dist(a, p) - dist(a, q) + margin).max(0.0);
                worst = Some(worst.map_or(v, |w| w.max(v)));
            }
        }
        if let Some(w) = worst {
            total += w;
            anchors += 1;
        }
    }
    (anchors > 0).then(|| total / anchors as f64)
}

/// Central-difference gradient of the parsing loss with respect to every weight.
pub fn numeric_gradient(clf: &PartClassifier, batch: &PixelBatch, reduction: Reduction, eps: f64) -> Vec<f64> {
    let (k, c) = (clf.k(), clf.c());
    let w = clf.weights().to_vec();
    (0..w.len())
        .map(|i| {
            let mut plus = w.clone();
            plus[i] += eps;
            let mut minus = w.clone();
            minus[i] -= eps;
            let lp = PartClassifier::from_weights(k, c, plus).unwrap().loss(batch, reduction);
            let lm = PartClassifier::from_weights(k, c, minus).unwrap().loss(batch, reduction);
            (lp - lm) / (2.0 * eps)
        })
        .collect()
}

/// Largest elementwise difference relative to the largest gradient magnitude.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = analytic.iter().chain(numeric).fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    analytic.iter().zip(numeric).fold(0.0f64, |m, (a, n)| m.max((a - n).abs())) / scale
}

pub fn random_vecs(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

pub fn random_batch(rng: &mut ChaCha8Rng, n: usize, c: usize, k: usize) -> PixelBatch {
    let features = (0..n * c).map(|_| rng.random_range(-2.0..2.0)).collect();
    let labels = (0..n).map(|_| rng.random_range(0..k) as u8).collect();
    PixelBatch::new(c, features, labels).unwrap()
}

pub fn random_classifier(rng: &mut ChaCha8Rng, k: usize, c: usize) -> PartClassifier {
    PartClassifier::from_weights(k, c, (0..k * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}
