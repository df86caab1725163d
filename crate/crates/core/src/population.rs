//! Sub-population assignments: k-means over features, a two-group split on
//! external scores, and group files.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::GroupAssignment;
use crate::error::{Error, Result};
use crate::rng::{self, tag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    /// Row-major `N×d` centroid matrix.
    pub centroids: Vec<f64>,
    pub dim: usize,
    pub assignment: GroupAssignment,
    pub inertia: f64,
    /// Inertia after every assignment step, first entry from the seeding.
    pub inertia_trace: Vec<f64>,
    pub iterations: usize,
}

impl KMeansResult {
    pub fn centroid(&self, g: usize) -> &[f64] {
        &self.centroids[g * self.dim..(g + 1) * self.dim]
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid per point (lowest index on ties) and total inertia.
fn assign(features: &[f64], d: usize, centroids: &[f64], k: usize, labels: &mut [usize]) -> f64 {
    let mut inertia = 0.0;
    for (i, x) in features.chunks_exact(d).enumerate() {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for c in 0..k {
            let dist = sq_dist(x, &centroids[c * d..(c + 1) * d]);
            if dist < best_d {
                best_d = dist;
                best = c;
            }
        }
        labels[i] = best;
        inertia += best_d;
    }
    inertia
}

/// Moves each centroid to the mean of its members. An empty cluster is
/// re-seeded at the point farthest from the centroid it is assigned to.
fn update(features: &[f64], d: usize, centroids: &mut [f64], k: usize, labels: &mut [usize]) {
    let n = labels.len();
    let mut sums = vec![0.0; k * d];
    let mut counts = vec![0usize; k];
    for (i, x) in features.chunks_exact(d).enumerate() {
        let c = labels[i];
        counts[c] += 1;
        for j in 0..d {
            sums[c * d + j] += x[j];
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            for j in 0..d {
                centroids[c * d + j] = sums[c * d + j] / counts[c] as f64;
            }
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            continue;
        }
        let mut far = None;
        let mut far_d = -1.0;
        for i in 0..n {
            let owner = labels[i];
            if counts[owner] < 2 {
                continue;
            }
            let x = &features[i * d..(i + 1) * d];
            let dist = sq_dist(x, &centroids[owner * d..(owner + 1) * d]);
            if dist > far_d {
                far_d = dist;
                far = Some(i);
            }
        }
        if let Some(i) = far {
            counts[labels[i]] -= 1;
            counts[c] = 1;
            labels[i] = c;
            centroids[c * d..(c + 1) * d].copy_from_slice(&features[i * d..(i + 1) * d]);
        }
    }
}

/// k-means++ seeding followed by Lloyd iterations.
///
/// Stops after `max_iters` iterations or when an iteration lowers inertia by
/// less than `tol`. The returned centroids are the means of the returned
/// assignment, and every point is assigned to its nearest centroid.
pub fn kmeans_groups(
    features: &[f64],
    dim: usize,
    k: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> Result<KMeansResult> {
    if dim == 0 || features.len() % dim != 0 {
        return Err(Error::InvalidParameter(
            "feature length is not a multiple of the dimension".into(),
        ));
    }
    let n = features.len() / dim;
    if k == 0 {
        return Err(Error::InvalidParameter(
            "group count must be at least 1".into(),
        ));
    }
    if k > n {
        return Err(Error::TooManyGroups {
            groups: k,
            samples: n,
        });
    }
    if features.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("features must be finite".into()));
    }
    let d = dim;
    let mut rng = rng::stream(seed, tag::KMEANS_INIT, 0);

    let mut centroids = Vec::with_capacity(k * d);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(&features[first * d..(first + 1) * d]);
    let mut nearest: Vec<f64> = features
        .chunks_exact(d)
        .map(|x| sq_dist(x, &centroids[..d]))
        .collect();
    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &w) in nearest.iter().enumerate() {
                acc += w;
                if w > 0.0 && u < acc {
                    chosen = Some(i);
                    break;
                }
            }
            chosen.unwrap_or_else(|| {
                nearest
                    .iter()
                    .rposition(|&w| w > 0.0)
                    .expect("positive total")
            })
        } else {
            // all remaining points coincide with chosen centroids
            rng.random_range(0..n)
        };
        centroids.extend_from_slice(&features[pick * d..(pick + 1) * d]);
        let new_c = &centroids[c * d..(c + 1) * d];
        for (i, x) in features.chunks_exact(d).enumerate() {
            nearest[i] = nearest[i].min(sq_dist(x, new_c));
        }
    }

    let mut labels = vec![0usize; n];
    let mut inertia = assign(features, d, &centroids, k, &mut labels);
    let mut trace = vec![inertia];
    let mut iterations = 0;
    while iterations < max_iters {
        update(features, d, &mut centroids, k, &mut labels);
        let next = assign(features, d, &centroids, k, &mut labels);
        iterations += 1;
        trace.push(next);
        let improvement = inertia - next;
        inertia = next;
        if improvement < tol {
            break;
        }
    }
    // settle the centroids on the final assignment
    update(features, d, &mut centroids, k, &mut labels);
    inertia = assign(features, d, &centroids, k, &mut labels);
    Ok(KMeansResult {
        centroids,
        dim: d,
        assignment: GroupAssignment::new_unchecked(labels, k),
        inertia,
        inertia_trace: trace,
        iterations,
    })
}

/// Puts the `round(head_fraction·n)` highest scores in group 0 (head) and
/// the rest in group 1 (tail). Equal scores keep sample order, so earlier
/// samples enter the head first.
pub fn split_two_groups(scores: &[f64], head_fraction: f64) -> Result<GroupAssignment> {
    if !(head_fraction > 0.0 && head_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "head fraction must lie in (0, 1), got {head_fraction}"
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidParameter("scores must be finite".into()));
    }
    let n = scores.len();
    let head = (head_fraction * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut ids = vec![1usize; n];
    for &i in &order[..head] {
        ids[i] = 0;
    }
    GroupAssignment::new(ids, 2)
}

/// One group id per line; the group count is `max id + 1`.
pub fn load_groups(path: &Path, n: usize) -> Result<GroupAssignment> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut ids = Vec::with_capacity(n);
    for (idx, line) in text.lines().enumerate() {
        let t = line.trim();
        let line_no = idx + 1;
        let v: i64 = t.parse().map_err(|_| Error::NonIntegerLine {
            line: line_no,
            content: line.to_owned(),
        })?;
        if v < 0 {
            return Err(Error::NegativeId {
                line: line_no,
                value: v,
            });
        }
        ids.push(v as usize);
    }
    if ids.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: ids.len(),
        });
    }
    let count = ids.iter().max().map_or(1, |m| m + 1);
    GroupAssignment::new(ids, count)
}

/// One real score per line.
pub fn load_scores(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .map(|(idx, line)| {
            line.trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::NonNumericLine {
                    line: idx + 1,
                    content: line.to_owned(),
                })
        })
        .collect()
}

pub fn write_groups(path: &Path, groups: &GroupAssignment) -> Result<()> {
    let mut text = String::with_capacity(groups.len() * 2);
    for g in groups.ids() {
        text.push_str(&g.to_string());
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn blobs(seed: u64) -> (Vec<f64>, Vec<usize>) {
        let centers = [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)];
        let noise = Normal::new(0.0, 0.1).unwrap();
        let mut rng = rng::stream(seed, 99, 0);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (c, &(cx, cy)) in centers.iter().enumerate() {
            for _ in 0..50 {
                x.push(cx + noise.sample(&mut rng));
                x.push(cy + noise.sample(&mut rng));
                y.push(c);
            }
        }
        (x, y)
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let x = vec![1.0, 2.0, 3.0, 4.0, 8.0, 0.0];
        let r = kmeans_groups(&x, 2, 1, 0, 10, 1e-12).unwrap();
        assert_eq!(r.assignment.ids(), &[0, 0, 0]);
        assert!((r.centroid(0)[0] - 4.0).abs() < 1e-12);
        assert!((r.centroid(0)[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn one_cluster_per_point() {
        let x = vec![0.0, 1.0, 5.0, 9.0, 20.0];
        let r = kmeans_groups(&x, 1, 5, 3, 50, 0.0).unwrap();
        assert_eq!(r.inertia, 0.0);
        let mut ids = r.assignment.ids().to_vec();
        ids.sort_unstable();
        assert_eq!(ids, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn one_cluster_per_point_with_duplicates() {
        let x = vec![0.0, 0.0, 0.0, 1.0];
        let r = kmeans_groups(&x, 1, 4, 0, 50, 0.0).unwrap();
        // coincident points share a cluster, so some clusters stay empty
        assert_eq!(r.inertia, 0.0);
    }

    #[test]
    fn too_many_groups() {
        assert!(matches!(
            kmeans_groups(&[0.0, 1.0], 1, 3, 0, 5, 0.0),
            Err(Error::TooManyGroups { .. })
        ));
    }

    #[test]
    fn recovers_separated_blobs() {
        let (x, y) = blobs(1);
        let r = kmeans_groups(&x, 2, 3, 42, 100, 1e-10).unwrap();
        // the partition matches up to relabeling: a bijection between ids
        let mut map = [usize::MAX; 3];
        for (i, &g) in r.assignment.ids().iter().enumerate() {
            if map[y[i]] == usize::MAX {
                map[y[i]] = g;
            }
            assert_eq!(map[y[i]], g);
        }
        let mut m = map.to_vec();
        m.sort_unstable();
        assert_eq!(m, vec![0, 1, 2]);
    }

    #[test]
    fn split_ratio_five() {
        let scores: Vec<f64> = (0..600).map(|i| ((i * 37) % 600) as f64).collect();
        let g = split_two_groups(&scores, 5.0 / 6.0).unwrap();
        assert_eq!(g.counts(), vec![500, 100]);
    }

    #[test]
    fn split_ties_follow_sample_order() {
        let g = split_two_groups(&[1.0; 10], 0.5).unwrap();
        assert_eq!(g.ids(), &[0, 0, 0, 0, 0, 1, 1, 1, 1, 1]);
    }

    #[test]
    fn split_takes_top_scores() {
        let scores: Vec<f64> = (0..100).map(f64::from).collect();
        let g = split_two_groups(&scores, 0.9).unwrap();
        assert!(g.ids()[..10].iter().all(|&x| x == 1));
        assert!(g.ids()[10..].iter().all(|&x| x == 0));
    }

    #[test]
    fn load_groups_cases() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.txt");
        fs::write(&p, "0\n1\n0\n").unwrap();
        let g = load_groups(&p, 3).unwrap();
        assert_eq!(g.group_count(), 2);
        assert_eq!(g.ids(), &[0, 1, 0]);
        assert!(matches!(
            load_groups(&p, 4),
            Err(Error::LengthMismatch {
                expected: 4,
                found: 3
            })
        ));
        fs::write(&p, "0\n-1\n").unwrap();
        assert!(matches!(
            load_groups(&p, 2),
            Err(Error::NegativeId { line: 2, value: -1 })
        ));
        fs::write(&p, "0\nx\n").unwrap();
        assert!(matches!(
            load_groups(&p, 2),
            Err(Error::NonIntegerLine { line: 2, .. })
        ));
    }
}
