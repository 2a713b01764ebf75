//! Lloyd's K-Means over 2D points with seeded k-means++ initialisation.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::types::Point2D;

pub const MAX_ITERATIONS: usize = 100;

#[derive(Debug, Clone)]
pub struct KMeansFit {
    /// Unsorted, in cluster-index order.
    pub centroids: Vec<Point2D>,
    pub assignments: Vec<usize>,
    /// Within-cluster sum of squares after every assignment step.
    pub inertia_trace: Vec<f64>,
}

/// Cluster `points` into `n` groups. Requires `points.len() > n >= 1`.
pub fn kmeans(points: &[Point2D], n: usize, seed: u64) -> KMeansFit {
    assert!(n >= 1 && points.len() > n, "need more points than clusters");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_plus_plus(points, n, &mut rng);
    let mut assignments = vec![usize::MAX; points.len()];
    let mut inertia_trace = Vec::new();

    for _ in 0..MAX_ITERATIONS {
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
        let converged = next == assignments;
        assignments = next;
        inertia_trace.push(inertia(points, &centroids, &assignments));
        if converged {
            break;
        }
        update_centroids(points, &assignments, &mut centroids);
    }
    KMeansFit {
        centroids,
        assignments,
        inertia_trace,
    }
}

/// Centroids sorted by `(y, x)`; returns the points themselves when there are
/// no more of them than requested clusters.
pub fn kmeans_centroids(points: &[Point2D], n: usize, seed: u64) -> Vec<Point2D> {
    assert!(n >= 1, "at least one cluster");
    let mut out = if points.len() <= n {
        points.to_vec()
    } else {
        kmeans(points, n, seed).centroids
    };
    out.sort_by(|a, b| a.y.total_cmp(&b.y).then(a.x.total_cmp(&b.x)));
    out
}

/// Within-cluster sum of squared distances.
pub fn inertia(points: &[Point2D], centroids: &[Point2D], assignments: &[usize]) -> f64 {
    points
        .iter()
        .zip(assignments)
        .map(|(p, &a)| p.dist2(&centroids[a]))
        .sum()
}

fn kmeans_plus_plus<R: Rng>(points: &[Point2D], n: usize, rng: &mut R) -> Vec<Point2D> {
    let mut centroids = vec![points[rng.random_range(0..points.len())]];
    while centroids.len() < n {
        let d2: Vec<f64> = points.iter().map(|p| nearest(p, &centroids).1).collect();
        let next = match WeightedIndex::new(&d2) {
            Ok(dist) => dist.sample(rng),
            // every point coincides with a centroid
            Err(_) => rng.random_range(0..points.len()),
        };
        centroids.push(points[next]);
    }
    centroids
}

fn nearest(p: &Point2D, centroids: &[Point2D]) -> (usize, f64) {
    centroids
        .iter()
        .enumerate()
        .map(|(i, c)| (i, p.dist2(c)))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

fn update_centroids(points: &[Point2D], assignments: &[usize], centroids: &mut [Point2D]) {
    let k = centroids.len();
    let mut sums = vec![(0.0, 0.0, 0usize); k];
    for (p, &a) in points.iter().zip(assignments) {
        sums[a].0 += p.x;
        sums[a].1 += p.y;
        sums[a].2 += 1;
    }
    for (c, (sx, sy, count)) in centroids.iter_mut().zip(&sums) {
        if *count > 0 {
            *c = Point2D::new(sx / *count as f64, sy / *count as f64);
        }
    }
    for empty in (0..k).filter(|&i| sums[i].2 == 0) {
        // re-seed at the point currently worst served by its own centroid
        let far = points
            .iter()
            .enumerate()
            .map(|(i, p)| (i, p.dist2(&centroids[assignments[i]])))
            .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
            .0;
        centroids[empty] = points[far];
    }
}
