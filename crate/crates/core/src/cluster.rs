//! Lloyd k-means with k-means++ seeding.

use crate::error::{Error, Result};
use crate::rng::RngStream;

pub const DEFAULT_MAX_ITER: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub centroids: Vec<Vec<f64>>,
    /// Cluster label of every input vector, `0..k`.
    pub assignment: Vec<usize>,
    /// Mean squared distance of each cluster's members to its centroid.
    pub within_spread: Vec<f64>,
    /// Sum of squared distances to the assigned centroid after each assignment step.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
}

impl Clustering {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k()];
        for &a in &self.assignment {
            sizes[a] += 1;
        }
        sizes
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

fn seed_plus_plus(vectors: &[Vec<f64>], k: usize, rng: &mut RngStream) -> Vec<Vec<f64>> {
    let n = vectors.len();
    let mut chosen = vec![false; n];
    let first = rng.index(n);
    chosen[first] = true;
    let mut centroids = vec![vectors[first].clone()];
    let mut d2: Vec<f64> = vectors
        .iter()
        .map(|v| sq_dist(v, &vectors[first]))
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.uniform() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                if target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            // floating-point slack can land on an already chosen point
            if chosen[pick] {
                (0..n).find(|&i| !chosen[i] && d2[i] > 0.0).unwrap_or(pick)
            } else {
                pick
            }
        } else {
            // all remaining points coincide with a centroid: pick uniformly among unchosen
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.index(free.len())]
        };
        chosen[pick] = true;
        centroids.push(vectors[pick].clone());
        for (i, v) in vectors.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(v, &vectors[pick]));
        }
    }
    centroids
}

/// Clusters `vectors` into `k` groups. Iterates until the assignment stops
/// changing or `max_iter` assignment steps have run.
pub fn kmeans(
    vectors: &[Vec<f64>],
    k: usize,
    rng: &mut RngStream,
    max_iter: usize,
) -> Result<Clustering> {
    let n = vectors.len();
    if n == 0 {
        return Err(Error::invalid("k-means needs at least one vector"));
    }
    if k < 1 || k > n {
        return Err(Error::invalid(format!(
            "k-means needs 1 <= K <= N, got K={k}, N={n}"
        )));
    }
    if max_iter < 1 {
        return Err(Error::invalid("max_iter must be at least 1"));
    }
    let dim = vectors[0].len();
    if vectors.iter().any(|v| v.len() != dim) {
        return Err(Error::invalid("vectors have inconsistent dimension"));
    }

    let mut centroids = seed_plus_plus(vectors, k, rng);
    let mut assignment = vec![usize::MAX; n];
    let mut objective_history = Vec::new();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let mut changed = false;
        let mut objective = 0.0;
        for (i, v) in vectors.iter().enumerate() {
            let (c, d) = nearest(v, &centroids);
            objective += d;
            if assignment[i] != c {
                assignment[i] = c;
                changed = true;
            }
        }
        objective_history.push(objective);
        if !changed || iterations >= max_iter {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (v, &a) in vectors.iter().zip(&assignment) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(v) {
                *s += x;
            }
        }
        for c in 0..k {
            // an emptied cluster keeps its previous centroid
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }

    let mut spread = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (v, &a) in vectors.iter().zip(&assignment) {
        spread[a] += sq_dist(v, &centroids[a]);
        counts[a] += 1;
    }
    let within_spread = spread
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();

    Ok(Clustering {
        centroids,
        assignment,
        within_spread,
        objective_history,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(center: &[f64], n: usize, sd: f64, rng: &mut RngStream) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| center.iter().map(|c| c + sd * rng.normal()).collect())
            .collect()
    }

    #[test]
    fn single_cluster_centroid_is_mean() {
        let mut rng = RngStream::new(3, 0);
        let pts = cloud(&[1.0, -2.0], 50, 1.0, &mut rng);
        let c = kmeans(&pts, 1, &mut rng, DEFAULT_MAX_ITER).unwrap();
        for j in 0..2 {
            let mean = pts.iter().map(|p| p[j]).sum::<f64>() / 50.0;
            assert!((c.centroids[0][j] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn two_separated_clouds() {
        let mut rng = RngStream::new(5, 0);
        let a = cloud(&[0.0, 0.0], 40, 0.3, &mut rng);
        let b = cloud(&[20.0, 20.0], 60, 0.3, &mut rng);
        let pts: Vec<Vec<f64>> = a.iter().chain(&b).cloned().collect();
        let c = kmeans(&pts, 2, &mut rng, DEFAULT_MAX_ITER).unwrap();
        let la = c.assignment[0];
        assert!(c.assignment[..40].iter().all(|&x| x == la));
        assert!(c.assignment[40..].iter().all(|&x| x != la));
        // brute force: spread of each cloud around its own mean
        for (members, label) in [(&a, la), (&b, 1 - la)] {
            let mean: Vec<f64> = (0..2)
                .map(|j| members.iter().map(|p| p[j]).sum::<f64>() / members.len() as f64)
                .collect();
            let spread =
                members.iter().map(|p| sq_dist(p, &mean)).sum::<f64>() / members.len() as f64;
            assert!((c.within_spread[label] - spread).abs() < 1e-10);
        }
    }

    #[test]
    fn k_equals_n_gives_zero_spread() {
        let mut rng = RngStream::new(8, 0);
        let pts = cloud(&[0.0], 12, 1.0, &mut rng);
        let c = kmeans(&pts, 12, &mut rng, DEFAULT_MAX_ITER).unwrap();
        assert!(c.within_spread.iter().all(|&s| s == 0.0));
        let mut labels = c.assignment.clone();
        labels.sort_unstable();
        labels.dedup();
        assert_eq!(labels.len(), 12);
    }

    #[test]
    fn k_equals_n_with_duplicates() {
        let pts = vec![vec![1.0], vec![1.0], vec![2.0]];
        let c = kmeans(&pts, 3, &mut RngStream::new(1, 1), 10).unwrap();
        assert!(c.within_spread.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn objective_is_non_increasing() {
        let mut rng = RngStream::new(13, 0);
        let pts = cloud(&[0.0, 0.0, 0.0], 500, 1.0, &mut rng);
        for k in [2, 5, 17] {
            let c = kmeans(&pts, k, &mut rng, DEFAULT_MAX_ITER).unwrap();
            for w in c.objective_history.windows(2) {
                assert!(w[1] <= w[0] + 1e-9 * w[0].abs());
            }
        }
    }

    #[test]
    fn input_errors() {
        let mut rng = RngStream::new(0, 0);
        assert!(kmeans(&[], 1, &mut rng, 10).is_err());
        assert!(kmeans(&[vec![1.0]], 2, &mut rng, 10).is_err());
        assert!(kmeans(&[vec![1.0]], 1, &mut rng, 0).is_err());
    }
}
