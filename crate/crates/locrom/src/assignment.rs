//! Parameter-space assignment: which cluster's basis a query parameter uses,
//! under the parameter-mean and midrange/radius criteria.

use crate::clustering::ClusterModel;
use crate::sampling::ParameterSet;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Absolute accuracy of reported assignment switch points.
pub const SWITCH_POINT_TOL: f64 = 1e-6;
/// Scan resolution used to bracket switch points before bisection.
const SWITCH_SCAN_STEPS: usize = 4096;

#[derive(Debug, Error)]
pub enum AssignError {
    #[error("parameters inconsistent with clustering: {0}")]
    Mismatch(String),
}

/// The snapshot clustering read back in parameter space: each cluster's
/// sampled parameter values with their mean, midrange, and radius.
#[derive(Debug, Clone)]
pub struct ParameterClustering {
    pub k: usize,
    /// Sampled parameter values of each cluster, ascending.
    pub cluster_params: Vec<Vec<f64>>,
    pub means: Vec<f64>,
    /// Midpoint of each cluster's parameter range.
    pub midranges: Vec<f64>,
    /// Half-width of each cluster's parameter range.
    pub radii: Vec<f64>,
    /// Overall sampled range, used to clamp out-of-hull queries.
    pub hull: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssignmentCriterion {
    /// Nearest cluster mean.
    ParameterMean,
    /// Smallest distance-to-midrange minus cluster radius.
    MidrangeRadius,
}

impl fmt::Display for AssignmentCriterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AssignmentCriterion::ParameterMean => write!(f, "mean"),
            AssignmentCriterion::MidrangeRadius => write!(f, "midrange"),
        }
    }
}

impl FromStr for AssignmentCriterion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(AssignmentCriterion::ParameterMean),
            "midrange" => Ok(AssignmentCriterion::MidrangeRadius),
            other => Err(format!(
                "unknown assignment criterion {other:?} (expected `mean` or `midrange`)"
            )),
        }
    }
}

/// Groups the sampled parameter values by their snapshot's cluster.
pub fn induce_parameter_clusters(
    params: &ParameterSet,
    clusters: &ClusterModel,
) -> Result<ParameterClustering, AssignError> {
    parameter_clusters_from_labels(&params.points, &clusters.assignment, clusters.k)
}

/// Same statistics from raw ascending parameter values and cluster labels,
/// e.g. read back from an artifact store.
pub fn parameter_clusters_from_labels(
    points: &[f64],
    assignment: &[usize],
    k: usize,
) -> Result<ParameterClustering, AssignError> {
    if points.len() != assignment.len() {
        return Err(AssignError::Mismatch(format!(
            "{} parameter values, {} cluster assignments",
            points.len(),
            assignment.len()
        )));
    }
    if points.is_empty() {
        return Err(AssignError::Mismatch("no parameter values".into()));
    }
    if points.windows(2).any(|w| w[0] > w[1]) {
        return Err(AssignError::Mismatch(
            "parameter values are not ascending".into(),
        ));
    }
    let mut cluster_params = vec![Vec::new(); k];
    for (s, &c) in assignment.iter().enumerate() {
        if c >= k {
            return Err(AssignError::Mismatch(format!(
                "sample {s} assigned to cluster {c}, but only {k} clusters exist"
            )));
        }
        cluster_params[c].push(points[s]);
    }
    let mut means = Vec::with_capacity(k);
    let mut midranges = Vec::with_capacity(k);
    let mut radii = Vec::with_capacity(k);
    for (c, group) in cluster_params.iter_mut().enumerate() {
        if group.is_empty() {
            return Err(AssignError::Mismatch(format!(
                "cluster {c} owns no parameter values"
            )));
        }
        group.sort_by(f64::total_cmp);
        let lo = group[0];
        let hi = group[group.len() - 1];
        means.push(group.iter().sum::<f64>() / group.len() as f64);
        midranges.push(0.5 * (lo + hi));
        radii.push(0.5 * (hi - lo));
    }
    let hull = (points[0], points[points.len() - 1]);
    Ok(ParameterClustering {
        k,
        cluster_params,
        means,
        midranges,
        radii,
        hull,
    })
}

/// Where a query landed: the winning cluster, and whether the query had to be
/// clamped into the sampled hull to score it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Assignment {
    pub cluster: usize,
    pub extrapolated: bool,
}

impl ParameterClustering {
    fn score(&self, theta: f64, k: usize, criterion: AssignmentCriterion) -> f64 {
        match criterion {
            AssignmentCriterion::ParameterMean => (theta - self.means[k]).abs(),
            AssignmentCriterion::MidrangeRadius => {
                (theta - self.midranges[k]).abs() - self.radii[k]
            }
        }
    }

    /// Winning cluster for `theta`; exact score ties go to the lowest index.
    /// Queries outside the sampled hull are scored at the nearest hull edge
    /// and flagged.
    pub fn assign(&self, theta: f64, criterion: AssignmentCriterion) -> Assignment {
        let (lo, hi) = self.hull;
        let clamped = theta.clamp(lo, hi);
        let mut best = 0;
        let mut best_score = f64::INFINITY;
        for k in 0..self.k {
            let s = self.score(clamped, k, criterion);
            if s < best_score {
                best_score = s;
                best = k;
            }
        }
        Assignment {
            cluster: best,
            extrapolated: clamped != theta,
        }
    }

    /// Parameter values where the winning cluster changes, located by a scan
    /// over the hull plus bisection to `SWITCH_POINT_TOL`.
    pub fn switch_points(&self, criterion: AssignmentCriterion) -> Vec<f64> {
        let (lo, hi) = self.hull;
        if !(hi > lo) {
            return Vec::new();
        }
        let step = (hi - lo) / SWITCH_SCAN_STEPS as f64;
        let mut points = Vec::new();
        let mut prev_theta = lo;
        let mut prev = self.assign(lo, criterion).cluster;
        for i in 1..=SWITCH_SCAN_STEPS {
            let theta = lo + step * i as f64;
            let here = self.assign(theta, criterion).cluster;
            if here != prev {
                let (mut a, mut b) = (prev_theta, theta);
                while b - a > SWITCH_POINT_TOL {
                    let mid = 0.5 * (a + b);
                    if self.assign(mid, criterion).cluster == prev {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
                points.push(0.5 * (a + b));
                prev = here;
            }
            prev_theta = theta;
        }
        points
    }
}
