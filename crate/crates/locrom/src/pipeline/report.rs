//! Full-order error studies: solve held-out parameter values with the full
//! model and measure how far the localized and global reduced solutions land
//! from it.

use super::{at, rom_dir_name, ArtifactsMeta, PipelineError, Stage, ROMS_DIR, SNAPSHOTS_DIR};
use crate::assignment::{parameter_clusters_from_labels, AssignmentCriterion};
use crate::fom::{steady_solve, FullOrderModel};
use crate::rom::{
    load_rom_artifact, relative_error, solve_rom, ApproxError, BasisId, ErrorNormKind, RomArtifact,
};
use crate::snapshots::SnapshotSet;
use crate::store::fmt_full;
use rayon::prelude::*;
use std::path::Path;

/// Held-out protocol: this many evenly spaced values inside the training
/// hull, skipping exact collisions with training samples.
pub const HELD_OUT_DEFAULT_COUNT: usize = 10;

#[derive(Debug, Clone)]
pub struct ErrorRow {
    pub theta: f64,
    /// Cluster the mean criterion picks.
    pub cluster_mean: usize,
    /// Cluster the midrange criterion picks.
    pub cluster_midrange: usize,
    pub extrapolated: bool,
    pub fom_converged: bool,
    /// Errors against the full-order solution; `NaN` when the full-order
    /// solve failed. Non-converged reduced solves still report the last
    /// iterate's error.
    pub local_error: f64,
    pub local_converged: bool,
    pub global1_error: f64,
    pub global1_converged: bool,
    pub global2_error: f64,
    pub global2_converged: bool,
    pub error_kind: ErrorNormKind,
    pub note: String,
}

#[derive(Debug, Clone)]
pub struct ErrorReport {
    pub rows: Vec<ErrorRow>,
    /// Criterion behind the `Local` column.
    pub criterion: AssignmentCriterion,
    pub mean_local: f64,
    pub max_local: f64,
    pub mean_global1: f64,
    pub max_global1: f64,
    pub mean_global2: f64,
    pub max_global2: f64,
    /// Rows whose full-order oracle failed, left out of the aggregates.
    pub excluded: usize,
}

impl ErrorReport {
    fn aggregate(rows: &[ErrorRow], criterion: AssignmentCriterion) -> ErrorReport {
        let included: Vec<&ErrorRow> = rows.iter().filter(|r| r.fom_converged).collect();
        let stats = |pick: fn(&ErrorRow) -> f64| -> (f64, f64) {
            if included.is_empty() {
                return (f64::NAN, f64::NAN);
            }
            let sum: f64 = included.iter().map(|r| pick(r)).sum();
            let max = included
                .iter()
                .map(|r| pick(r))
                .fold(f64::NEG_INFINITY, f64::max);
            (sum / included.len() as f64, max)
        };
        let (mean_local, max_local) = stats(|r| r.local_error);
        let (mean_global1, max_global1) = stats(|r| r.global1_error);
        let (mean_global2, max_global2) = stats(|r| r.global2_error);
        ErrorReport {
            excluded: rows.len() - included.len(),
            rows: rows.to_vec(),
            criterion,
            mean_local,
            max_local,
            mean_global1,
            max_global1,
            mean_global2,
            max_global2,
        }
    }
}

/// Evenly spaced parameter values strictly inside the training hull: the
/// midpoints of `count` equal bins, which sit half a bin away from any
/// endpoint-including uniform training grid. Exact collisions with training
/// samples are still skipped.
pub fn default_held_out(training: &[f64], count: usize) -> Vec<f64> {
    if training.len() < 2 || count == 0 {
        return Vec::new();
    }
    let lo = training[0];
    let hi = training[training.len() - 1];
    (1..=count)
        .map(|i| lo + (hi - lo) * (2 * i - 1) as f64 / (2 * count) as f64)
        .filter(|theta| !training.contains(theta))
        .collect()
}

/// Solves every held-out value with the full model and all reduced models.
/// `held_out` of `None` applies the default protocol.
pub fn run_errors(
    artifacts: &Path,
    held_out: Option<&[f64]>,
) -> Result<ErrorReport, PipelineError> {
    let stage = Stage::ErrorStudy;
    let meta = ArtifactsMeta::load(artifacts)?;
    let snapshots =
        SnapshotSet::load(&artifacts.join(SNAPSHOTS_DIR)).map_err(at(Stage::ArtifactLoad))?;
    let roms_dir = artifacts.join(ROMS_DIR);
    let load_rom = |basis: BasisId| {
        load_rom_artifact(&roms_dir.join(rom_dir_name(basis))).map_err(at(Stage::ArtifactLoad))
    };
    let locals = (0..meta.k)
        .map(|k| load_rom(BasisId::Local(k)))
        .collect::<Result<Vec<_>, _>>()?;
    let global1 = load_rom(BasisId::Global1)?;
    let global2 = load_rom(BasisId::Global2)?;
    let labels: Vec<usize> = {
        let clusters_file = artifacts
            .join(super::CLUSTERING_DIR)
            .join(super::CLUSTERS_FILE);
        super::read_clusters_file(&clusters_file)?.1
    };
    let clustering = parameter_clusters_from_labels(&snapshots.params.points, &labels, meta.k)
        .map_err(at(stage))?;

    let training = &snapshots.params.points;
    let defaults;
    let thetas: &[f64] = match held_out {
        Some(list) => {
            if list.is_empty() {
                return Err(PipelineError::msg(stage, "empty held-out parameter list"));
            }
            if let Some(&dup) = list.iter().find(|t| training.contains(t)) {
                return Err(PipelineError::msg(
                    stage,
                    format!("held-out value {dup} is a training sample"),
                ));
            }
            list
        }
        None => {
            defaults = default_held_out(training, HELD_OUT_DEFAULT_COUNT);
            if defaults.is_empty() {
                return Err(PipelineError::msg(
                    stage,
                    "default held-out protocol found no non-training values; pass an explicit list",
                ));
            }
            &defaults
        }
    };
    if thetas.iter().any(|t| !t.is_finite()) {
        return Err(PipelineError::msg(stage, "held-out values must be finite"));
    }

    let model = snapshots.model_spec.build().map_err(at(stage))?;
    let model_ref: &dyn FullOrderModel = model.as_ref();
    let rows = thetas
        .par_iter()
        .map(|&theta| {
            error_row(
                theta,
                model_ref,
                &meta,
                &clustering,
                &locals,
                &global1,
                &global2,
            )
        })
        .collect::<Result<Vec<ErrorRow>, PipelineError>>()?;
    Ok(ErrorReport::aggregate(&rows, meta.criterion))
}

#[allow(clippy::too_many_arguments)]
fn error_row(
    theta: f64,
    model: &dyn FullOrderModel,
    meta: &ArtifactsMeta,
    clustering: &crate::assignment::ParameterClustering,
    locals: &[RomArtifact],
    global1: &RomArtifact,
    global2: &RomArtifact,
) -> Result<ErrorRow, PipelineError> {
    let branch = model.snapshot_branch(theta);
    let seed = model.branch_seed(theta, branch);
    let oracle = steady_solve(model, theta, &seed, meta.steady_tol, meta.steady_max_iter)
        .map_err(at(Stage::ErrorStudy))?;
    let on_branch = oracle.converged && model.classify_branch(&oracle.solution) == branch;
    let assigned_mean = clustering.assign(theta, AssignmentCriterion::ParameterMean);
    let assigned_midrange = clustering.assign(theta, AssignmentCriterion::MidrangeRadius);
    let local_cluster = match meta.criterion {
        AssignmentCriterion::ParameterMean => assigned_mean,
        AssignmentCriterion::MidrangeRadius => assigned_midrange,
    };

    if !on_branch {
        let note = if oracle.converged {
            "full-order solve left the scheduled branch; excluded from aggregates"
        } else {
            "full-order solve did not converge; excluded from aggregates"
        };
        return Ok(ErrorRow {
            theta,
            cluster_mean: assigned_mean.cluster,
            cluster_midrange: assigned_midrange.cluster,
            extrapolated: local_cluster.extrapolated,
            fom_converged: false,
            local_error: f64::NAN,
            local_converged: false,
            global1_error: f64::NAN,
            global1_converged: false,
            global2_error: f64::NAN,
            global2_converged: false,
            error_kind: ErrorNormKind::Relative,
            note: note.into(),
        });
    }

    let reduced = |artifact: &RomArtifact| -> (ApproxError, bool) {
        let report = solve_rom(
            &artifact.reduced,
            theta,
            artifact.init.nearest(theta),
            meta.rom_tol,
            meta.rom_max_iter,
            meta.scheme,
        );
        let lifted = artifact
            .basis
            .lift(&report.coeffs)
            .expect("artifact dimensions are validated at load");
        (relative_error(&oracle.solution, &lifted), report.converged)
    };
    let (local, local_converged) = reduced(&locals[local_cluster.cluster]);
    let (g1, global1_converged) = reduced(global1);
    let (g2, global2_converged) = reduced(global2);
    let mut note = String::new();
    if !(local_converged && global1_converged && global2_converged) {
        note.push_str("a reduced solve hit its iteration cap; last iterate reported");
    }
    Ok(ErrorRow {
        theta,
        cluster_mean: assigned_mean.cluster,
        cluster_midrange: assigned_midrange.cluster,
        extrapolated: local_cluster.extrapolated,
        fom_converged: true,
        local_error: local.value,
        local_converged,
        global1_error: g1.value,
        global1_converged,
        global2_error: g2.value,
        global2_converged,
        error_kind: local.kind,
        note,
    })
}

pub fn write_error_csv(path: &Path, report: &ErrorReport) -> Result<(), std::io::Error> {
    let mut text = String::from(
        "theta,cluster_mean,cluster_midrange,extrapolated,fom_converged,\
         local_error,local_converged,global1_error,global1_converged,\
         global2_error,global2_converged,error_kind,note\n",
    );
    for row in &report.rows {
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            fmt_full(row.theta),
            row.cluster_mean,
            row.cluster_midrange,
            row.extrapolated,
            row.fom_converged,
            fmt_full(row.local_error),
            row.local_converged,
            fmt_full(row.global1_error),
            row.global1_converged,
            fmt_full(row.global2_error),
            row.global2_converged,
            row.error_kind,
            row.note.replace(',', ";")
        ));
    }
    text.push_str(&format!(
        "# mean,local={},global1={},global2={},over={} rows,excluded={}\n",
        fmt_full(report.mean_local),
        fmt_full(report.mean_global1),
        fmt_full(report.mean_global2),
        report.rows.len() - report.excluded,
        report.excluded
    ));
    text.push_str(&format!(
        "# max,local={},global1={},global2={}\n",
        fmt_full(report.max_local),
        fmt_full(report.max_global1),
        fmt_full(report.max_global2)
    ));
    std::fs::write(path, text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{parse_config, run_offline};
    use tempfile::tempdir;

    fn pitchfork_artifacts(dir: &Path) {
        let cfg = parse_config(
            "[model]\nkind = pitchfork\nn_interior = 32\n\
             [sampling]\nplan = uniform\ntheta_min = 14\ntheta_max = 24\ncount = 12\n\
             [clustering]\nk = 2\nseed = 1\n",
        )
        .unwrap();
        run_offline(&cfg, dir).unwrap();
    }

    #[test]
    fn default_protocol_spaces_points_inside_the_hull() {
        let training = vec![10.0, 12.0, 14.0, 16.0];
        let held = default_held_out(&training, 10);
        assert_eq!(held.len(), 10);
        assert!(held.windows(2).all(|w| w[1] > w[0]));
        assert!(held.iter().all(|t| *t > 10.0 && *t < 16.0));
        assert!(held.iter().all(|t| !training.contains(t)));
        // Even spacing: constant gap.
        let gap = held[1] - held[0];
        for w in held.windows(2) {
            assert!((w[1] - w[0] - gap).abs() <= 1e-12);
        }
    }

    #[test]
    fn default_protocol_skips_exact_training_collisions() {
        // Hull [0, 10] puts the defaults at half-integers; 2.5 is training.
        let training = vec![0.0, 2.5, 10.0];
        let held = default_held_out(&training, 10);
        assert_eq!(held.len(), 9);
        assert!(!held.contains(&2.5));
    }

    #[test]
    fn held_out_errors_stay_small_and_aggregates_recompute() {
        let dir = tempdir().unwrap();
        pitchfork_artifacts(dir.path());
        let report = run_errors(dir.path(), None).unwrap();
        assert_eq!(report.rows.len(), 10);
        assert_eq!(report.excluded, 0);
        for row in &report.rows {
            assert!(row.fom_converged);
            assert!(row.local_converged);
            assert_eq!(row.error_kind, ErrorNormKind::Relative);
            assert!(
                row.local_error <= 1e-2,
                "theta {}: local error {:e}",
                row.theta,
                row.local_error
            );
            assert!(row.cluster_midrange < 2);
        }
        let mean =
            report.rows.iter().map(|r| r.local_error).sum::<f64>() / report.rows.len() as f64;
        let max = report
            .rows
            .iter()
            .map(|r| r.local_error)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((report.mean_local - mean).abs() <= 1e-15);
        assert_eq!(report.max_local, max);
        assert!(report.mean_global1.is_finite());
        assert!(report.mean_global2.is_finite());
    }

    #[test]
    fn training_collision_in_an_explicit_list_is_rejected() {
        let dir = tempdir().unwrap();
        pitchfork_artifacts(dir.path());
        let err = run_errors(dir.path(), Some(&[14.0])).unwrap_err();
        assert!(err.to_string().contains("training sample"));
    }

    #[test]
    fn empty_explicit_list_is_rejected() {
        let dir = tempdir().unwrap();
        pitchfork_artifacts(dir.path());
        let err = run_errors(dir.path(), Some(&[])).unwrap_err();
        assert!(err.to_string().contains("empty held-out"));
    }

    #[test]
    fn failed_full_order_rows_are_flagged_and_excluded() {
        let dir = tempdir().unwrap();
        pitchfork_artifacts(dir.path());
        // Starve the full-order solver so the oracle cannot converge.
        let meta_path = dir.path().join("artifacts_meta.txt");
        let text = std::fs::read_to_string(&meta_path).unwrap();
        let text = text.replace("steady_max_iter = 50", "steady_max_iter = 1");
        assert!(text.contains("steady_max_iter = 1"));
        std::fs::write(&meta_path, text).unwrap();

        let report = run_errors(dir.path(), Some(&[15.5, 19.5])).unwrap();
        assert_eq!(report.excluded, 2);
        for row in &report.rows {
            assert!(!row.fom_converged);
            assert!(row.local_error.is_nan());
            assert!(row.note.contains("excluded"));
        }
        assert!(report.mean_local.is_nan());
    }

    #[test]
    fn csv_lists_every_row_and_the_aggregates() {
        let dir = tempdir().unwrap();
        pitchfork_artifacts(dir.path());
        let report = run_errors(dir.path(), Some(&[15.5, 19.5, 21.5])).unwrap();
        let csv_path = dir.path().join("errors.csv");
        write_error_csv(&csv_path, &report).unwrap();
        let text = std::fs::read_to_string(&csv_path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("theta,cluster_mean"));
        assert_eq!(lines.len(), 1 + 3 + 2);
        assert!(lines[4].starts_with("# mean,"));
        assert!(lines[5].starts_with("# max,"));
    }
}
