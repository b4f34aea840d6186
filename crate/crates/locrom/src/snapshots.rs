//! Snapshot generation along scheduled solution branches, and the on-disk
//! snapshot store (`meta.txt` + `snapshots.mat`).

use crate::fom::{steady_solve, weighted_norm, BranchId, FullOrderModel, ModelError, ModelSpec};
use crate::linalg::DenseMatrix;
use crate::sampling::{ParameterSet, SamplingPlan};
use crate::store::{self, fmt_full, StoreError};
use rayon::prelude::*;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

pub const META_FILE: &str = "meta.txt";
pub const MATRIX_FILE: &str = "snapshots.mat";
const META_FORMAT: &str = "locrom-snapshots-v1";

/// Post-load residual verification allows this much slack over the solve
/// tolerance.
pub const REVERIFY_FACTOR: f64 = 10.0;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("snapshot solve failed: {0}")]
    Solve(#[from] ModelError),
    #[error(
        "steady solve did not converge at theta = {theta} (branch {branch}): \
         residual {residual:e} after {iterations} iterations"
    )]
    NonConverged {
        theta: f64,
        branch: BranchId,
        residual: f64,
        iterations: usize,
    },
    #[error("solve at theta = {theta} converged onto branch {found}, expected {expected}")]
    BranchMismatch {
        theta: f64,
        expected: BranchId,
        found: BranchId,
    },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("snapshot store metadata invalid: {0}")]
    Meta(String),
    #[error(
        "stored snapshot at theta = {theta} fails residual re-verification: \
         {residual:e} > {allowed:e}"
    )]
    Verify {
        theta: f64,
        residual: f64,
        allowed: f64,
    },
}

/// Steady-state snapshots in the columns of `matrix`, one per parameter value,
/// each tagged with the branch it was solved on.
#[derive(Debug, Clone)]
pub struct SnapshotSet {
    pub matrix: DenseMatrix,
    pub params: ParameterSet,
    pub branches: Vec<BranchId>,
    pub steady_tol: f64,
    pub model_spec: ModelSpec,
    /// Grid index of the model's scalar observable, recorded so online
    /// consumers never need to rebuild the model.
    pub observable_index: usize,
}

impl SnapshotSet {
    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn len(&self) -> usize {
        self.matrix.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn column(&self, s: usize) -> &[f64] {
        self.matrix.col(s)
    }
}

/// Solves the model at every sampled parameter value, walking each branch
/// segment in order and warm-starting from the previous snapshot; the first
/// snapshot of each segment starts from the branch seed. Distinct segments
/// run concurrently. Any non-converged solve fails the whole set.
pub fn generate_snapshots(
    model_spec: &ModelSpec,
    params: &ParameterSet,
    steady_tol: f64,
    max_iter: usize,
) -> Result<SnapshotSet, SnapshotError> {
    let model = model_spec.build()?;
    if params.is_empty() {
        return Err(SnapshotError::Meta("empty parameter set".into()));
    }
    let (lo, hi) = model.parameter_domain();
    for &theta in &params.points {
        if !(theta >= lo && theta <= hi) {
            return Err(SnapshotError::Solve(ModelError::ThetaOutOfDomain {
                theta,
                lo,
                hi,
            }));
        }
    }

    let branches: Vec<BranchId> = params
        .points
        .iter()
        .map(|&theta| model.snapshot_branch(theta))
        .collect();

    // Consecutive runs of one branch id form continuation segments.
    let mut segments: Vec<(usize, usize)> = Vec::new();
    let mut start = 0;
    for i in 1..branches.len() {
        if branches[i] != branches[start] {
            segments.push((start, i));
            start = i;
        }
    }
    segments.push((start, branches.len()));

    let model_ref: &dyn FullOrderModel = model.as_ref();
    let solved: Vec<Result<Vec<Vec<f64>>, SnapshotError>> = segments
        .par_iter()
        .map(|&(seg_start, seg_end)| {
            let branch = branches[seg_start];
            let mut columns = Vec::with_capacity(seg_end - seg_start);
            let mut previous: Option<Vec<f64>> = None;
            for s in seg_start..seg_end {
                let theta = params.points[s];
                // Warm-start from the previous snapshot, but fall back to the
                // branch seed if the warm start drifted into another branch's
                // basin (near onset the branch can outgrow the previous
                // amplitude, which then attracts to the trivial solution).
                let report = loop {
                    let from_seed = previous.is_none();
                    let init = previous
                        .take()
                        .unwrap_or_else(|| model_ref.branch_seed(theta, branch));
                    let attempt = steady_solve(model_ref, theta, &init, steady_tol, max_iter)?;
                    let on_branch =
                        attempt.converged && model_ref.classify_branch(&attempt.solution) == branch;
                    if on_branch {
                        break attempt;
                    }
                    if from_seed {
                        return if attempt.converged {
                            Err(SnapshotError::BranchMismatch {
                                theta,
                                expected: branch,
                                found: model_ref.classify_branch(&attempt.solution),
                            })
                        } else {
                            Err(SnapshotError::NonConverged {
                                theta,
                                branch,
                                residual: attempt.residual_norm,
                                iterations: attempt.iterations,
                            })
                        };
                    }
                    // Retry once from the raw branch seed.
                };
                previous = Some(report.solution.clone());
                columns.push(report.solution);
            }
            Ok(columns)
        })
        .collect();

    let mut all_columns: Vec<Vec<f64>> = Vec::with_capacity(params.len());
    for seg in solved {
        all_columns.extend(seg?);
    }
    let matrix = DenseMatrix::from_columns(&all_columns)
        .map_err(|e| SnapshotError::Meta(format!("snapshot columns inconsistent: {e}")))?;

    Ok(SnapshotSet {
        matrix,
        params: params.clone(),
        branches,
        steady_tol,
        model_spec: model_spec.clone(),
        observable_index: model.observable_index(),
    })
}

impl SnapshotSet {
    /// Re-evaluates the model residual at every stored column and re-checks the
    /// stored branch tags; columns whose grid-weighted residual norm exceeds
    /// `REVERIFY_FACTOR * steady_tol`, or that classify onto a different
    /// branch than tagged, indicate a corrupted or mismatched store.
    pub fn verify_residuals(&self) -> Result<(), SnapshotError> {
        let model = self.model_spec.build()?;
        let allowed = REVERIFY_FACTOR * self.steady_tol;
        let weight = model.residual_norm_weight();
        for s in 0..self.len() {
            let theta = self.params.points[s];
            let r = model.operators().residual(self.column(s), theta);
            let residual = weighted_norm(&r, weight);
            if residual > allowed {
                return Err(SnapshotError::Verify {
                    theta,
                    residual,
                    allowed,
                });
            }
            let found = model.classify_branch(self.column(s));
            if found != self.branches[s] {
                return Err(SnapshotError::BranchMismatch {
                    theta,
                    expected: self.branches[s],
                    found,
                });
            }
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<(), SnapshotError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| SnapshotError::Meta(format!("cannot create {}: {e}", dir.display())))?;
        let mut meta = String::new();
        let _ = writeln!(meta, "format = {META_FORMAT}");
        match &self.model_spec {
            ModelSpec::Pitchfork {
                n_interior,
                domain_length,
                branch,
            } => {
                let _ = writeln!(meta, "model = pitchfork");
                let _ = writeln!(meta, "n_interior = {n_interior}");
                let _ = writeln!(meta, "domain_length = {}", fmt_full(*domain_length));
                let _ = writeln!(meta, "tracked_branch = {branch}");
            }
            ModelSpec::Modal {
                n_interior,
                schedule,
            } => {
                let _ = writeln!(meta, "model = modal");
                let _ = writeln!(meta, "n_interior = {n_interior}");
                let segs: Vec<String> = schedule
                    .iter()
                    .map(|s| format!("{}:{}:{}", s.mode, fmt_full(s.lo), fmt_full(s.hi)))
                    .collect();
                let _ = writeln!(meta, "schedule = {}", segs.join(","));
            }
        }
        let _ = writeln!(meta, "n = {}", self.dim());
        let _ = writeln!(meta, "s = {}", self.len());
        let _ = writeln!(meta, "steady_tol = {}", fmt_full(self.steady_tol));
        let _ = writeln!(meta, "observable_index = {}", self.observable_index);
        let _ = writeln!(meta, "plan = {}", plan_to_string(&self.params.provenance));
        for (theta, branch) in self.params.points.iter().zip(&self.branches) {
            let _ = writeln!(meta, "sample = {},{}", fmt_full(*theta), branch);
        }
        std::fs::write(dir.join(META_FILE), meta).map_err(|e| {
            SnapshotError::Meta(format!(
                "cannot write {}: {e}",
                dir.join(META_FILE).display()
            ))
        })?;
        store::write_matrix(&dir.join(MATRIX_FILE), &self.matrix)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, SnapshotError> {
        let meta_path = dir.join(META_FILE);
        let text = std::fs::read_to_string(&meta_path).map_err(|e| {
            SnapshotError::Meta(format!("cannot read {}: {e}", meta_path.display()))
        })?;
        let mut format = None;
        let mut model_kind = None;
        let mut n_interior = None;
        let mut domain_length = None;
        let mut tracked_branch = None;
        let mut schedule = None;
        let mut n = None;
        let mut s_count = None;
        let mut steady_tol = None;
        let mut observable_index = None;
        let mut plan = None;
        let mut samples: Vec<(f64, BranchId)> = Vec::new();

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                SnapshotError::Meta(format!("line {} is not `key = value`", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad =
                |what: &str| SnapshotError::Meta(format!("bad {what} on line {}", lineno + 1));
            match key {
                "format" => format = Some(value.to_string()),
                "model" => model_kind = Some(value.to_string()),
                "n_interior" => n_interior = Some(value.parse().map_err(|_| bad("n_interior"))?),
                "domain_length" => {
                    domain_length = Some(value.parse().map_err(|_| bad("domain_length"))?)
                }
                "tracked_branch" => {
                    tracked_branch = Some(value.parse::<BranchId>().map_err(SnapshotError::Meta)?)
                }
                "schedule" => schedule = Some(parse_schedule(value)?),
                "n" => n = Some(value.parse().map_err(|_| bad("n"))?),
                "s" => s_count = Some(value.parse().map_err(|_| bad("s"))?),
                "steady_tol" => steady_tol = Some(value.parse().map_err(|_| bad("steady_tol"))?),
                "observable_index" => {
                    observable_index = Some(value.parse().map_err(|_| bad("observable_index"))?)
                }
                "plan" => plan = Some(value.to_string()),
                "sample" => {
                    let (theta, branch) = value
                        .split_once(',')
                        .ok_or_else(|| bad("sample (expected `theta,branch`)"))?;
                    samples.push((
                        theta.trim().parse().map_err(|_| bad("sample theta"))?,
                        branch
                            .trim()
                            .parse::<BranchId>()
                            .map_err(SnapshotError::Meta)?,
                    ));
                }
                other => {
                    return Err(SnapshotError::Meta(format!(
                        "unknown key `{other}` on line {}",
                        lineno + 1
                    )))
                }
            }
        }

        if format.as_deref() != Some(META_FORMAT) {
            return Err(SnapshotError::Meta(format!(
                "unsupported format {:?}, expected {META_FORMAT:?}",
                format
            )));
        }
        let n_interior: usize =
            n_interior.ok_or_else(|| SnapshotError::Meta("missing n_interior".into()))?;
        let model_spec = match model_kind.as_deref() {
            Some("pitchfork") => ModelSpec::Pitchfork {
                n_interior,
                domain_length: domain_length
                    .ok_or_else(|| SnapshotError::Meta("missing domain_length".into()))?,
                branch: tracked_branch
                    .ok_or_else(|| SnapshotError::Meta("missing tracked_branch".into()))?,
            },
            Some("modal") => ModelSpec::Modal {
                n_interior,
                schedule: schedule.ok_or_else(|| SnapshotError::Meta("missing schedule".into()))?,
            },
            other => {
                return Err(SnapshotError::Meta(format!("unknown model kind {other:?}")));
            }
        };

        let n: usize = n.ok_or_else(|| SnapshotError::Meta("missing n".into()))?;
        let s_count: usize = s_count.ok_or_else(|| SnapshotError::Meta("missing s".into()))?;
        let steady_tol =
            steady_tol.ok_or_else(|| SnapshotError::Meta("missing steady_tol".into()))?;
        let observable_index = observable_index
            .ok_or_else(|| SnapshotError::Meta("missing observable_index".into()))?;
        if samples.len() != s_count {
            return Err(SnapshotError::Meta(format!(
                "meta declares s = {s_count} but lists {} samples",
                samples.len()
            )));
        }

        let points: Vec<f64> = samples.iter().map(|(t, _)| *t).collect();
        let branches: Vec<BranchId> = samples.iter().map(|(_, b)| *b).collect();
        let plan_str = plan.ok_or_else(|| SnapshotError::Meta("missing plan".into()))?;
        let provenance = plan_from_string(&plan_str, &points)?;

        let matrix = store::read_matrix(&dir.join(MATRIX_FILE))?;
        if matrix.rows() != n || matrix.cols() != s_count {
            return Err(SnapshotError::Meta(format!(
                "snapshot matrix is {}x{}, meta declares {}x{}",
                matrix.rows(),
                matrix.cols(),
                n,
                s_count
            )));
        }
        if n != n_interior {
            return Err(SnapshotError::Meta(format!(
                "meta n = {n} disagrees with model n_interior = {n_interior}"
            )));
        }

        Ok(SnapshotSet {
            matrix,
            params: ParameterSet { points, provenance },
            branches,
            steady_tol,
            model_spec,
            observable_index,
        })
    }
}

pub(crate) fn parse_schedule(
    value: &str,
) -> Result<Vec<crate::fom::ScheduleSegment>, SnapshotError> {
    value
        .split(',')
        .map(|part| {
            let fields: Vec<&str> = part.trim().split(':').collect();
            if fields.len() != 3 {
                return Err(SnapshotError::Meta(format!(
                    "bad schedule segment {part:?}, expected mode:lo:hi"
                )));
            }
            Ok(crate::fom::ScheduleSegment {
                mode: fields[0]
                    .parse()
                    .map_err(|_| SnapshotError::Meta(format!("bad mode in {part:?}")))?,
                lo: fields[1]
                    .parse()
                    .map_err(|_| SnapshotError::Meta(format!("bad lower bound in {part:?}")))?,
                hi: fields[2]
                    .parse()
                    .map_err(|_| SnapshotError::Meta(format!("bad upper bound in {part:?}")))?,
            })
        })
        .collect()
}

fn plan_to_string(plan: &SamplingPlan) -> String {
    match plan {
        SamplingPlan::Uniform { range, count } => {
            format!(
                "uniform,{},{},{count}",
                fmt_full(range.0),
                fmt_full(range.1)
            )
        }
        SamplingPlan::Packed {
            range,
            count,
            centers,
            fraction,
            band,
        } => {
            let cs: Vec<String> = centers.iter().map(|c| fmt_full(*c)).collect();
            format!(
                "packed,{},{},{count},{},{},{}",
                fmt_full(range.0),
                fmt_full(range.1),
                fmt_full(*fraction),
                fmt_full(*band),
                cs.join(";")
            )
        }
        SamplingPlan::Explicit { range, .. } => {
            format!("explicit,{},{}", fmt_full(range.0), fmt_full(range.1))
        }
    }
}

fn plan_from_string(s: &str, points: &[f64]) -> Result<SamplingPlan, SnapshotError> {
    let fields: Vec<&str> = s.split(',').collect();
    let bad = |detail: &str| SnapshotError::Meta(format!("bad plan {s:?}: {detail}"));
    let parse_f = |v: &str, what: &str| -> Result<f64, SnapshotError> {
        v.parse().map_err(|_| bad(&format!("bad {what}")))
    };
    match fields.first().copied() {
        Some("uniform") => {
            if fields.len() != 4 {
                return Err(bad("expected uniform,lo,hi,count"));
            }
            Ok(SamplingPlan::Uniform {
                range: (parse_f(fields[1], "lo")?, parse_f(fields[2], "hi")?),
                count: fields[3].parse().map_err(|_| bad("bad count"))?,
            })
        }
        Some("packed") => {
            if fields.len() != 7 {
                return Err(bad("expected packed,lo,hi,count,fraction,band,centers"));
            }
            let centers = fields[6]
                .split(';')
                .map(|c| parse_f(c, "center"))
                .collect::<Result<Vec<f64>, _>>()?;
            Ok(SamplingPlan::Packed {
                range: (parse_f(fields[1], "lo")?, parse_f(fields[2], "hi")?),
                count: fields[3].parse().map_err(|_| bad("bad count"))?,
                fraction: parse_f(fields[4], "fraction")?,
                band: parse_f(fields[5], "band")?,
                centers,
            })
        }
        Some("explicit") => {
            if fields.len() != 3 {
                return Err(bad("expected explicit,lo,hi"));
            }
            Ok(SamplingPlan::Explicit {
                range: (parse_f(fields[1], "lo")?, parse_f(fields[2], "hi")?),
                points: points.to_vec(),
            })
        }
        _ => Err(bad("unknown plan kind")),
    }
}
