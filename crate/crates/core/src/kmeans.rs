//! Seeded Lloyd k-means with k-means++ initialisation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KMeansError {
    #[error("k-means needs k >= 1")]
    ZeroClusters,
    #[error("cannot form {k} clusters from {n} points")]
    TooFewPoints { n: usize, k: usize },
    #[error("points have inconsistent dimensions")]
    RaggedPoints,
    #[error("points contain non-finite values")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop once no centroid moves further than this.
    pub tolerance: f64,
    /// Run the assignment step on the rayon pool (when built with it).
    #[serde(skip, default = "yes")]
    pub parallel: bool,
}

fn yes() -> bool {
    true
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            max_iter: 100,
            tolerance: 1e-6,
            parallel: true,
        }
    }

    pub fn sequential(mut self) -> Self {
        self.parallel = false;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared distances after each assignment step.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
}

impl KMeansResult {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn objective(&self) -> f64 {
        self.objective_history.last().copied().unwrap_or(0.0)
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == cluster)
            .collect()
    }
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid, ties to the lower cluster id.
fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, mu) in centroids.iter().enumerate() {
        let d = sq_dist(p, mu);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>], parallel: bool) -> Vec<(usize, f64)> {
    if parallel {
        par::map(points, |p| nearest(p, centroids))
    } else {
        points.iter().map(|p| nearest(p, centroids)).collect()
    }
}

fn plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let r = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, d) in d2.iter().enumerate() {
                acc += d;
                if acc > r && *d > 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            // every point coincides with a centre already
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &points[next]));
        }
    }
    chosen.into_iter().map(|i| points[i].clone()).collect()
}

/// Clusters `points` into `cfg.k` groups.
///
/// Terminates when assignments stop changing, when no centroid moves more
/// than `cfg.tolerance`, or after `cfg.max_iter` rounds. A final assignment
/// against the returned centroids makes every point's cluster its nearest
/// centroid. An empty cluster is re-seeded at the point farthest from its
/// own centroid.
pub fn kmeans(points: &[Vec<f64>], cfg: &KMeansConfig) -> Result<KMeansResult, KMeansError> {
    let n = points.len();
    if cfg.k == 0 {
        return Err(KMeansError::ZeroClusters);
    }
    if n < cfg.k {
        return Err(KMeansError::TooFewPoints { n, k: cfg.k });
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(KMeansError::RaggedPoints);
    }
    if points.iter().flatten().any(|x| !x.is_finite()) {
        return Err(KMeansError::NonFinite);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut centroids = plus_plus(points, cfg.k, &mut rng);
    let mut history = Vec::new();
    let mut previous: Option<Vec<usize>> = None;
    let mut iterations = 0;

    for _ in 0..cfg.max_iter {
        iterations += 1;
        let near = assign(points, &centroids, cfg.parallel);
        history.push(near.iter().map(|(_, d)| d).sum());
        let assignment: Vec<usize> = near.iter().map(|(c, _)| *c).collect();
        if previous.as_ref() == Some(&assignment) {
            break;
        }

        let mut sums = vec![vec![0.0; dim]; cfg.k];
        let mut counts = vec![0usize; cfg.k];
        for (p, &c) in points.iter().zip(&assignment) {
            counts[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(p) {
                *s += x;
            }
        }
        let mut taken: Vec<usize> = Vec::new();
        let mut shift: f64 = 0.0;
        for c in 0..cfg.k {
            let next = if counts[c] > 0 {
                sums[c].iter().map(|s| s / counts[c] as f64).collect()
            } else {
                let far = (0..n)
                    .filter(|i| !taken.contains(i))
                    .max_by(|&a, &b| near[a].1.total_cmp(&near[b].1).then(b.cmp(&a)))
                    .expect("n >= k leaves a free point");
                taken.push(far);
                points[far].clone()
            };
            shift = shift.max(sq_dist(&next, &centroids[c]).sqrt());
            centroids[c] = next;
        }
        previous = Some(assignment);
        if shift <= cfg.tolerance {
            break;
        }
    }

    let near = assign(points, &centroids, cfg.parallel);
    let objective: f64 = near.iter().map(|(_, d)| d).sum();
    if history.last() != Some(&objective) {
        history.push(objective);
    }
    Ok(KMeansResult {
        assignment: near.into_iter().map(|(c, _)| c).collect(),
        centroids,
        objective_history: history,
        iterations,
    })
}
