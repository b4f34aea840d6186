//! k-means clustering of snapshot columns and the variance-elbow rule for
//! choosing the cluster count.

use crate::linalg::DenseMatrix;
use crate::store::fmt_full;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::path::Path;
use thiserror::Error;

pub const KMEANS_RESTARTS_DEFAULT: usize = 10;
pub const KMEANS_MAX_ITER_DEFAULT: usize = 300;
pub const ELBOW_ALPHA_DEFAULT: f64 = 0.05;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("invalid cluster count k = {k} for {s} points (need 2 <= k <= {s})")]
    InvalidK { k: usize, s: usize },
    #[error("invalid clustering input: {0}")]
    InvalidInput(String),
    #[error("invalid assignment: {0}")]
    InvalidAssignment(String),
    #[error(
        "elbow undefined: the variance scan is flat between k = 2 and k = 3; \
         choose the cluster count manually"
    )]
    ElbowUndefined,
    #[error("cannot write elbow scan: {0}")]
    Io(#[from] std::io::Error),
}

/// A k-means partition of a point set (points are matrix columns).
#[derive(Debug, Clone)]
pub struct ClusterModel {
    pub k: usize,
    /// Cluster index of each point, in column order.
    pub assignment: Vec<usize>,
    /// Cluster means as columns, N x K.
    pub means: DenseMatrix,
    /// Total within-cluster sum of squared Euclidean distances.
    pub variance: f64,
    pub seed: u64,
    pub restarts_used: usize,
    /// Variance after every Lloyd iteration of the winning restart.
    pub variance_trace: Vec<f64>,
}

impl ClusterModel {
    /// Point indices of each cluster, in ascending order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.k];
        for (p, &c) in self.assignment.iter().enumerate() {
            groups[c].push(p);
        }
        groups
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Total within-cluster sum of squares for an explicit assignment, exactly as
/// defined: `sum_s |x_s - mean_{assignment[s]}|^2`.
pub fn variance(
    points: &DenseMatrix,
    assignment: &[usize],
    means: &DenseMatrix,
) -> Result<f64, ClusterError> {
    if assignment.len() != points.cols() {
        return Err(ClusterError::InvalidAssignment(format!(
            "assignment length {} for {} points",
            assignment.len(),
            points.cols()
        )));
    }
    if means.rows() != points.rows() {
        return Err(ClusterError::InvalidAssignment(format!(
            "means have {} rows, points have {}",
            means.rows(),
            points.rows()
        )));
    }
    let mut total = 0.0;
    for (p, &c) in assignment.iter().enumerate() {
        if c >= means.cols() {
            return Err(ClusterError::InvalidAssignment(format!(
                "point {p} assigned to cluster {c}, only {} means",
                means.cols()
            )));
        }
        total += dist2(points.col(p), means.col(c));
    }
    Ok(total)
}

/// Nearest-mean index for one point; exact distance ties go to the lowest
/// cluster index.
fn nearest(means: &DenseMatrix, x: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for c in 0..means.cols() {
        let d = dist2(x, means.col(c));
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

struct LloydRun {
    assignment: Vec<usize>,
    means: DenseMatrix,
    variance: f64,
    trace: Vec<f64>,
}

/// One restart: k-means++ seeding followed by Lloyd iteration to an
/// assignment fixpoint (or `max_iter`).
fn lloyd_run(points: &DenseMatrix, k: usize, max_iter: usize, mut rng: ChaCha8Rng) -> LloydRun {
    let n = points.rows();
    let s = points.cols();

    // k-means++ seeding: first center uniform, each next drawn with
    // probability proportional to squared distance from the chosen set.
    let first = rng.gen_range(0..s);
    let mut center_cols = vec![first];
    let mut d2: Vec<f64> = (0..s)
        .map(|p| dist2(points.col(p), points.col(first)))
        .collect();
    while center_cols.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut x = rng.gen::<f64>() * total;
            let mut chosen = None;
            for (p, &w) in d2.iter().enumerate() {
                x -= w;
                if x < 0.0 {
                    chosen = Some(p);
                    break;
                }
            }
            chosen
                .or_else(|| (0..s).rev().find(|&p| d2[p] > 0.0))
                .expect("total > 0 implies a positive weight exists")
        } else {
            // All remaining points coincide with chosen centers; take the
            // lowest unused index so duplicates still yield k centers.
            (0..s)
                .find(|p| !center_cols.contains(p))
                .expect("k <= number of points")
        };
        center_cols.push(next);
        for p in 0..s {
            d2[p] = d2[p].min(dist2(points.col(p), points.col(next)));
        }
    }

    let mut means = DenseMatrix::zeros(n, k);
    for (c, &p) in center_cols.iter().enumerate() {
        means.col_mut(c).copy_from_slice(points.col(p));
    }

    let mut assignment: Vec<usize> = vec![usize::MAX; s];
    let mut trace = Vec::new();
    for _ in 0..max_iter {
        let mut next: Vec<usize> = (0..s).map(|p| nearest(&means, points.col(p))).collect();

        // Empty-cluster repair: reseed each empty mean at the point farthest
        // from its current center (skipping points that are their cluster's
        // only member), claim that point, and continue.
        let mut sizes = vec![0usize; k];
        for &c in &next {
            sizes[c] += 1;
        }
        for empty in 0..k {
            if sizes[empty] > 0 {
                continue;
            }
            let mut far_p = None;
            let mut far_d = -1.0;
            for p in 0..s {
                if sizes[next[p]] < 2 {
                    continue;
                }
                let d = dist2(points.col(p), means.col(next[p]));
                if d > far_d {
                    far_d = d;
                    far_p = Some(p);
                }
            }
            let p = far_p.expect("k <= points guarantees a donor cluster");
            means.col_mut(empty).copy_from_slice(points.col(p));
            sizes[next[p]] -= 1;
            next[p] = empty;
            sizes[empty] = 1;
        }

        // Centroid update.
        let mut sums = DenseMatrix::zeros(n, k);
        for (p, &c) in next.iter().enumerate() {
            let x = points.col(p);
            let m = sums.col_mut(c);
            for i in 0..n {
                m[i] += x[i];
            }
        }
        for c in 0..k {
            let m = sums.col_mut(c);
            for v in m.iter_mut() {
                *v /= sizes[c] as f64;
            }
        }
        means = sums;

        trace.push(variance(points, &next, &means).expect("internal assignment is valid"));
        let fixed = next == assignment;
        assignment = next;
        if fixed {
            break;
        }
    }

    let var = *trace.last().expect("max_iter >= 1");
    LloydRun {
        assignment,
        means,
        variance: var,
        trace,
    }
}

/// Best of `restarts` independent k-means runs (lowest variance; earlier
/// restart wins ties). Restarts draw from per-restart RNG streams of `seed`,
/// so the result is deterministic no matter how they are scheduled.
pub fn kmeans(
    points: &DenseMatrix,
    k: usize,
    restarts: usize,
    max_iter: usize,
    seed: u64,
) -> Result<ClusterModel, ClusterError> {
    let s = points.cols();
    if k < 2 || k > s {
        return Err(ClusterError::InvalidK { k, s });
    }
    if restarts == 0 || max_iter == 0 {
        return Err(ClusterError::InvalidInput(
            "restarts and max_iter must be positive".into(),
        ));
    }

    let runs: Vec<LloydRun> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            lloyd_run(points, k, max_iter, rng)
        })
        .collect();

    let best = runs
        .iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| {
            a.variance
                .partial_cmp(&b.variance)
                .expect("variances are finite")
                .then(ia.cmp(ib))
        })
        .expect("restarts >= 1")
        .0;
    let run = &runs[best];

    Ok(ClusterModel {
        k,
        assignment: run.assignment.clone(),
        means: run.means.clone(),
        variance: run.variance,
        seed,
        restarts_used: restarts,
        variance_trace: run.trace.clone(),
    })
}

/// Variance-versus-k scan with the elbow choice marked.
#[derive(Debug, Clone)]
pub struct ElbowScan {
    /// Scanned cluster counts, 2..=k_max.
    pub k_values: Vec<usize>,
    pub variances: Vec<f64>,
    pub chosen_k: usize,
    pub alpha: f64,
    /// True when no drop fell under the threshold and `chosen_k` defaulted to
    /// the largest scanned count.
    pub fallback: bool,
}

/// Runs k-means for k = 2..=k_max and picks the smallest K >= 3 whose
/// variance drop `V(K-1) - V(K)` is at most `alpha` times the reference drop
/// `V(2) - V(3)`. A flat reference drop leaves the elbow undefined.
pub fn elbow_select(
    points: &DenseMatrix,
    k_max: usize,
    alpha: f64,
    restarts: usize,
    seed: u64,
) -> Result<ElbowScan, ClusterError> {
    let s = points.cols();
    if k_max < 3 || k_max > s {
        return Err(ClusterError::InvalidK { k: k_max, s });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(ClusterError::InvalidInput(format!(
            "alpha = {alpha} outside (0, 1)"
        )));
    }

    let k_values: Vec<usize> = (2..=k_max).collect();
    let variances: Vec<f64> = k_values
        .iter()
        .map(|&k| kmeans(points, k, restarts, KMEANS_MAX_ITER_DEFAULT, seed).map(|m| m.variance))
        .collect::<Result<_, _>>()?;

    let reference = variances[0] - variances[1];
    if !(reference > 0.0) {
        return Err(ClusterError::ElbowUndefined);
    }

    let mut chosen_k = k_max;
    let mut fallback = true;
    for i in 1..k_values.len() {
        if variances[i - 1] - variances[i] <= alpha * reference {
            chosen_k = k_values[i];
            fallback = false;
            break;
        }
    }

    Ok(ElbowScan {
        k_values,
        variances,
        chosen_k,
        alpha,
        fallback,
    })
}

/// Writes the scan as `k,variance,chosen` rows for plotting.
pub fn write_elbow_csv(path: &Path, scan: &ElbowScan) -> Result<(), ClusterError> {
    let mut out = String::from("k,variance,chosen\n");
    for (i, &k) in scan.k_values.iter().enumerate() {
        let chosen = if k == scan.chosen_k { 1 } else { 0 };
        out.push_str(&format!("{k},{},{chosen}\n", fmt_full(scan.variances[i])));
    }
    std::fs::write(path, out)?;
    Ok(())
}
