//! k-means over static session encodings, silhouette-based choice of the
//! cluster count, and ordering of clusters by label entropy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::clickstream::Criterion;
use crate::error::{Error, Result};
use crate::recipe::derive_seed;

/// Per-dimension z-scores. Constant dimensions map to 0.
pub fn standardize(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let Some(first) = points.first() else {
        return Vec::new();
    };
    let d = first.len();
    let n = points.len() as f64;
    let mut mean = vec![0.0; d];
    for p in points {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v / n;
        }
    }
    let mut sd = vec![0.0; d];
    for p in points {
        for j in 0..d {
            sd[j] += (p[j] - mean[j]).powi(2) / n;
        }
    }
    let sd: Vec<f64> = sd.into_iter().map(f64::sqrt).collect();
    points
        .iter()
        .map(|p| {
            (0..d)
                .map(|j| if sd[j] > 0.0 { (p[j] - mean[j]) / sd[j] } else { 0.0 })
                .collect()
        })
        .collect()
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn distinct_count(points: &[Vec<f64>]) -> usize {
    let mut keys: Vec<Vec<u64>> = points.iter().map(|p| p.iter().map(|v| v.to_bits()).collect()).collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    /// Cluster means in the coordinates the points were given in.
    pub centroids: Vec<Vec<f64>>,
    /// Within-cluster sum of squares in the space k-means ran in.
    pub sse: f64,
    /// SSE after every Lloyd iteration of the kept restart.
    pub sse_trace: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KMeansConfig {
    pub restarts: usize,
    pub max_iter: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iter: 300,
        }
    }
}

fn plus_plus_seeds(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centers = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let mut pick = d2.iter().rposition(|&d| d > 0.0).expect("enough distinct points");
        let mut u = rng.random::<f64>() * total;
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 && u < d {
                pick = i;
                break;
            }
            u -= d;
        }
        centers.push(points[pick].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(dist2(p, &centers[centers.len() - 1]));
        }
    }
    centers
}

fn nearest(p: &[f64], centers: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, center) in centers.iter().enumerate() {
        let d = dist2(p, center);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

fn means(points: &[Vec<f64>], assign: &[usize], centers: &mut [Vec<f64>]) -> Vec<usize> {
    let d = points[0].len();
    let mut counts = vec![0usize; centers.len()];
    let mut sums = vec![vec![0.0; d]; centers.len()];
    for (p, &a) in points.iter().zip(assign) {
        counts[a] += 1;
        for (s, v) in sums[a].iter_mut().zip(p) {
            *s += v;
        }
    }
    for (c, center) in centers.iter_mut().enumerate() {
        if counts[c] > 0 {
            *center = sums[c].iter().map(|s| s / counts[c] as f64).collect();
        }
    }
    counts
}

fn sse_of(points: &[Vec<f64>], assign: &[usize], centers: &[Vec<f64>]) -> f64 {
    points.iter().zip(assign).map(|(p, &a)| dist2(p, &centers[a])).sum()
}

fn lloyd(
    points: &[Vec<f64>],
    k: usize,
    max_iter: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, Vec<Vec<f64>>, Vec<f64>) {
    let mut centers = plus_plus_seeds(points, k, rng);
    let mut assign: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
    let mut trace = Vec::new();
    for it in 0..max_iter {
        let mut counts = means(points, &assign, &mut centers);
        // Reseed each empty cluster at the point farthest from its own centre.
        while let Some(empty) = counts.iter().position(|&c| c == 0) {
            let far = (0..points.len())
                .filter(|&i| counts[assign[i]] > 1)
                .max_by(|&i, &j| {
                    dist2(&points[i], &centers[assign[i]]).total_cmp(&dist2(&points[j], &centers[assign[j]]))
                })
                .expect("more points than clusters");
            assign[far] = empty;
            counts = means(points, &assign, &mut centers);
        }
        trace.push(sse_of(points, &assign, &centers));
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
        if next == assign || it + 1 == max_iter {
            break;
        }
        assign = next;
    }
    if hartigan(points, &mut assign, &mut centers) {
        trace.push(sse_of(points, &assign, &centers));
    }
    (assign, centers, trace)
}

/// Single-point moves that lower the SSE, applied until none is left.
/// Escapes Lloyd fixpoints that are not local optima under moving one
/// point. Returns whether any point moved.
fn hartigan(points: &[Vec<f64>], assign: &mut [usize], centers: &mut [Vec<f64>]) -> bool {
    let mut counts = means(points, assign, centers);
    let mut moved_any = false;
    loop {
        let mut moved = false;
        for i in 0..points.len() {
            let a = assign[i];
            if counts[a] <= 1 {
                continue;
            }
            let na = counts[a] as f64;
            let remove = na / (na - 1.0) * dist2(&points[i], &centers[a]);
            let mut best: Option<(usize, f64)> = None;
            for (b, center) in centers.iter().enumerate() {
                if b == a {
                    continue;
                }
                let nb = counts[b] as f64;
                let delta = nb / (nb + 1.0) * dist2(&points[i], center) - remove;
                if delta < -1e-12 * remove.max(1.0) && best.is_none_or(|(_, d)| delta < d) {
                    best = Some((b, delta));
                }
            }
            if let Some((b, _)) = best {
                assign[i] = b;
                counts = means(points, assign, centers);
                moved = true;
                moved_any = true;
            }
        }
        if !moved {
            return moved_any;
        }
    }
}

/// k-means on points as given (no scaling): k-means++ seeding, Lloyd
/// iterations to a fixpoint, single-point refinement, best SSE over
/// restarts.
pub fn kmeans_unscaled(points: &[Vec<f64>], k: usize, seed: u64, cfg: &KMeansConfig) -> Result<KMeansResult> {
    if k < 2 {
        return Err(Error::Clustering(format!("k must be at least 2, got {k}")));
    }
    if points.is_empty()
        || points
            .iter()
            .any(|p| p.len() != points[0].len() || p.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::Clustering(
            "points must be non-empty, finite and of equal dimension".into(),
        ));
    }
    let distinct = distinct_count(points);
    if distinct < k {
        return Err(Error::Clustering(format!(
            "{distinct} distinct points cannot form {k} clusters"
        )));
    }
    let mut best: Option<KMeansResult> = None;
    for r in 0..cfg.restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "kmeans", r as u64));
        let (assignments, centroids, sse_trace) = lloyd(points, k, cfg.max_iter.max(1), &mut rng);
        let sse = *sse_trace.last().expect("at least one iteration");
        if best.as_ref().is_none_or(|b| sse < b.sse) {
            best = Some(KMeansResult {
                assignments,
                centroids,
                sse,
                sse_trace,
            });
        }
    }
    Ok(best.expect("at least one restart"))
}

/// k-means on standardized features; centroids are reported in the
/// original units.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, cfg: &KMeansConfig) -> Result<KMeansResult> {
    let z = standardize(points);
    let mut res = kmeans_unscaled(&z, k, seed, cfg)?;
    let mut raw = vec![vec![0.0; points[0].len()]; k];
    means(points, &res.assignments, &mut raw);
    res.centroids = raw;
    Ok(res)
}

/// Per-point silhouette coefficients (Euclidean). Points alone in their
/// cluster score 0.
pub fn silhouette_values(points: &[Vec<f64>], assignments: &[usize]) -> Vec<f64> {
    let k = assignments.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &a in assignments {
        sizes[a] += 1;
    }
    (0..points.len())
        .map(|i| {
            let own = assignments[i];
            if sizes[own] <= 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; k];
            for (j, p) in points.iter().enumerate() {
                if j != i {
                    sums[assignments[j]] += dist2(&points[i], p).sqrt();
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own && sizes[c] > 0)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            if !b.is_finite() {
                return 0.0;
            }
            let m = a.max(b);
            if m > 0.0 {
                (b - a) / m
            } else {
                0.0
            }
        })
        .collect()
}

pub fn silhouette(points: &[Vec<f64>], assignments: &[usize]) -> f64 {
    let v = silhouette_values(points, assignments);
    v.iter().sum::<f64>() / v.len() as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct KSelection {
    pub best_k: usize,
    /// `(k, mean silhouette)` for every k tried.
    pub curve: Vec<(usize, f64)>,
    pub result: KMeansResult,
}

/// Minimum number of points for silhouette-based selection.
pub const MIN_SELECTION_POINTS: usize = 20;

/// Runs k-means for each k in `k_min..=k_max` on standardized points
/// and keeps the k with the highest mean silhouette (smaller k on ties).
/// `k_max` is capped at one less than the number of distinct points.
pub fn select_k(points: &[Vec<f64>], k_min: usize, k_max: usize, seed: u64, cfg: &KMeansConfig) -> Result<KSelection> {
    if points.len() < MIN_SELECTION_POINTS {
        return Err(Error::Clustering(format!(
            "cluster selection needs at least {MIN_SELECTION_POINTS} points, got {}",
            points.len()
        )));
    }
    let z = standardize(points);
    let k_max = k_max.min(distinct_count(&z).saturating_sub(1));
    if k_max < k_min {
        return Err(Error::Clustering(format!("too few distinct points for k >= {k_min}")));
    }
    let mut curve = Vec::new();
    let mut best: Option<(f64, usize, KMeansResult)> = None;
    for k in k_min..=k_max {
        let mut res = kmeans_unscaled(&z, k, derive_seed(seed, "select_k", k as u64), cfg)?;
        let s = silhouette(&z, &res.assignments);
        curve.push((k, s));
        if best.as_ref().is_none_or(|(bs, _, _)| s > *bs) {
            let mut raw = vec![vec![0.0; points[0].len()]; k];
            means(points, &res.assignments, &mut raw);
            res.centroids = raw;
            best = Some((s, k, res));
        }
    }
    let (_, best_k, result) = best.expect("non-empty range");
    Ok(KSelection { best_k, curve, result })
}

/// Shannon entropy in bits of a binary label multiset.
pub fn label_entropy(labels: &[bool]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let p = labels.iter().filter(|&&l| l).count() as f64 / labels.len() as f64;
    [p, 1.0 - p].iter().filter(|&&q| q > 0.0).map(|&q| -q * q.log2()).sum()
}

/// The meta set split into behavioural clusters, lowest label entropy first.
#[derive(Clone, Debug, PartialEq)]
pub struct MetaClusterSet {
    /// Indices into the meta sample list.
    pub clusters: Vec<Vec<usize>>,
    pub criterion: Criterion,
    pub centroids: Vec<Vec<f64>>,
    pub label_entropy: Vec<f64>,
}

impl MetaClusterSet {
    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    /// Every member index in cluster order.
    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        self.clusters.iter().flatten().copied()
    }
}

/// Sorts clusters by ascending label entropy; ties go to the larger
/// cluster, then to the original order.
pub fn order_by_entropy(
    clusters: Vec<Vec<usize>>,
    centroids: Vec<Vec<f64>>,
    labels: &[bool],
    criterion: Criterion,
) -> MetaClusterSet {
    let entropy: Vec<f64> = clusters
        .iter()
        .map(|c| label_entropy(&c.iter().map(|&i| labels[i]).collect::<Vec<_>>()))
        .collect();
    let mut order: Vec<usize> = (0..clusters.len()).collect();
    order.sort_by(|&a, &b| {
        entropy[a]
            .total_cmp(&entropy[b])
            .then_with(|| clusters[b].len().cmp(&clusters[a].len()))
    });
    MetaClusterSet {
        clusters: order.iter().map(|&i| clusters[i].clone()).collect(),
        centroids: order
            .iter()
            .map(|&i| centroids.get(i).cloned().unwrap_or_default())
            .collect(),
        label_entropy: order.iter().map(|&i| entropy[i]).collect(),
        criterion,
    }
}

/// Groups assignments into member lists, cluster `c` at position `c`.
pub fn groups(assignments: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut g = vec![Vec::new(); k];
    for (i, &a) in assignments.iter().enumerate() {
        g[a].push(i);
    }
    g
}

/// Clusters the meta set on its static features.
///
/// With at least [`MIN_SELECTION_POINTS`] points the cluster count is
/// chosen by silhouette; smaller meta sets use two clusters when they
/// have two distinct points and a single cluster otherwise.
pub fn cluster_meta(
    features: &[Vec<f64>],
    labels: &[bool],
    criterion: Criterion,
    k_range: (usize, usize),
    seed: u64,
    cfg: &KMeansConfig,
) -> Result<(MetaClusterSet, Option<KSelection>)> {
    if features.is_empty() {
        return Err(Error::Empty("meta set"));
    }
    if features.len() >= MIN_SELECTION_POINTS && distinct_count(&standardize(features)) > k_range.0 {
        let sel = select_k(features, k_range.0, k_range.1, seed, cfg)?;
        let set = order_by_entropy(
            groups(&sel.result.assignments, sel.best_k),
            sel.result.centroids.clone(),
            labels,
            criterion,
        );
        return Ok((set, Some(sel)));
    }
    if distinct_count(features) >= 2 {
        let res = kmeans(features, 2, seed, cfg)?;
        return Ok((
            order_by_entropy(groups(&res.assignments, 2), res.centroids, labels, criterion),
            None,
        ));
    }
    let d = features[0].len();
    let centroid: Vec<f64> = (0..d)
        .map(|j| features.iter().map(|p| p[j]).sum::<f64>() / features.len() as f64)
        .collect();
    Ok((
        order_by_entropy(vec![(0..features.len()).collect()], vec![centroid], labels, criterion),
        None,
    ))
}
