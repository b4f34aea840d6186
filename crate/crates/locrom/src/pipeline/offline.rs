//! The offline stage: configuration in, artifact directory out.

use super::{
    at, rom_dir_name, ArtifactsMeta, ClusterChoice, PipelineConfig, PipelineError, Stage,
    BASES_DIR, CLUSTERING_DIR, CLUSTERS_FILE, ELBOW_FILE, MEANS_FILE, OFFLINE_REPORT_FILE,
    ROMS_DIR, SNAPSHOTS_DIR,
};
use crate::assignment::{induce_parameter_clusters, AssignmentCriterion, ParameterClustering};
use crate::clustering::{elbow_select, kmeans, write_elbow_csv, ClusterModel, ElbowScan};
use crate::podbasis::{build_local_bases, save_bases};
use crate::rom::{build_global_roms, build_rom_artifact, save_rom_artifact, BasisId};
use crate::sampling::generate_samples;
use crate::snapshots::{generate_snapshots, SnapshotSet};
use crate::store;
use rayon::prelude::*;
use std::fmt::Write as _;
use std::path::Path;

/// What the offline run produced, for reporting and tests.
#[derive(Debug)]
pub struct OfflineSummary {
    pub sample_count: usize,
    pub k: usize,
    pub cluster_sizes: Vec<usize>,
    pub basis_sizes: Vec<usize>,
    pub global1_size: usize,
    pub global2_size: usize,
    pub elbow: Option<ElbowScan>,
    pub switch_points_mean: Vec<f64>,
    pub switch_points_midrange: Vec<f64>,
    pub rank_truncated: bool,
}

/// Runs sampling, snapshot generation, clustering, basis construction, and
/// reduced-model projection, writing every artifact under `out`. The
/// directory must be new or empty; on any failure the partial outputs are
/// removed.
pub fn run_offline(config: &PipelineConfig, out: &Path) -> Result<OfflineSummary, PipelineError> {
    let created = !out.exists();
    if !created {
        let is_empty = out.is_dir()
            && std::fs::read_dir(out)
                .map(|mut entries| entries.next().is_none())
                .unwrap_or(false);
        if !is_empty {
            return Err(PipelineError::msg(
                Stage::Config,
                format!("output directory {} exists and is not empty", out.display()),
            ));
        }
    }
    std::fs::create_dir_all(out).map_err(at(Stage::Config))?;

    let result = offline_stages(config, out);
    if result.is_err() {
        let _ = std::fs::remove_dir_all(out);
        if !created {
            let _ = std::fs::create_dir(out);
        }
    }
    result
}

fn offline_stages(config: &PipelineConfig, out: &Path) -> Result<OfflineSummary, PipelineError> {
    let params = generate_samples(&config.plan).map_err(at(Stage::Sampling))?;

    let snapshots = generate_snapshots(
        &config.model,
        &params,
        config.steady_tol,
        config.steady_max_iter,
    )
    .map_err(at(Stage::Snapshots))?;
    let snapshots_dir = out.join(SNAPSHOTS_DIR);
    snapshots
        .save(&snapshots_dir)
        .map_err(at(Stage::Snapshots))?;

    let (clusters, elbow) = cluster_snapshots(config, &snapshots)?;
    let clustering_dir = out.join(CLUSTERING_DIR);
    std::fs::create_dir_all(&clustering_dir).map_err(at(Stage::Clustering))?;
    write_clusters_artifacts(&clustering_dir, &snapshots, &clusters, elbow.as_ref())?;
    let parameter_clusters =
        induce_parameter_clusters(&snapshots.params, &clusters).map_err(at(Stage::Clustering))?;

    let bases = build_local_bases(&snapshots, &clusters, config.rule).map_err(at(Stage::Bases))?;
    save_bases(&out.join(BASES_DIR), &bases).map_err(at(Stage::Bases))?;

    let model = config.model.build().map_err(at(Stage::Roms))?;
    let roms_dir = out.join(ROMS_DIR);
    std::fs::create_dir_all(&roms_dir).map_err(at(Stage::Roms))?;
    let members = clusters.members();
    let locals: Vec<_> = bases
        .par_iter()
        .enumerate()
        .map(|(k, basis)| {
            build_rom_artifact(
                model.as_ref(),
                &snapshots,
                basis.clone(),
                Some(&members[k]),
                BasisId::Local(k),
            )
        })
        .collect::<Result<_, _>>()
        .map_err(at(Stage::Roms))?;
    for artifact in &locals {
        let dir = roms_dir.join(rom_dir_name(artifact.reduced.basis_ref));
        save_rom_artifact(&dir, artifact).map_err(at(Stage::Roms))?;
    }
    let globals = build_global_roms(model.as_ref(), &snapshots, &bases).map_err(at(Stage::Roms))?;
    for artifact in [&globals.global1, &globals.global2] {
        let dir = roms_dir.join(rom_dir_name(artifact.reduced.basis_ref));
        save_rom_artifact(&dir, artifact).map_err(at(Stage::Roms))?;
    }

    let meta = ArtifactsMeta {
        k: clusters.k,
        criterion: config.criterion,
        scheme: config.scheme,
        rom_tol: config.rom_tol,
        rom_max_iter: config.rom_max_iter,
        steady_tol: config.steady_tol,
        steady_max_iter: config.steady_max_iter,
        observable_index: snapshots.observable_index,
        rank_truncated: globals.rank_truncated,
        seed: config.seed,
        restarts: config.restarts,
    };
    meta.save(out).map_err(at(Stage::Roms))?;

    let summary = OfflineSummary {
        sample_count: snapshots.len(),
        k: clusters.k,
        cluster_sizes: members.iter().map(Vec::len).collect(),
        basis_sizes: bases.iter().map(|b| b.len()).collect(),
        global1_size: globals.global1.reduced.l,
        global2_size: globals.global2.reduced.l,
        elbow,
        switch_points_mean: parameter_clusters.switch_points(AssignmentCriterion::ParameterMean),
        switch_points_midrange: parameter_clusters
            .switch_points(AssignmentCriterion::MidrangeRadius),
        rank_truncated: globals.rank_truncated,
    };
    let report = render_report(config, &snapshots, &parameter_clusters, &summary);
    std::fs::write(out.join(OFFLINE_REPORT_FILE), report).map_err(at(Stage::Report))?;
    Ok(summary)
}

/// Re-runs the cluster-count scan on stored snapshots with the recorded
/// seed and restart budget, without touching the artifacts.
pub fn elbow_rescan(
    artifacts: &Path,
    k_max: usize,
    alpha: f64,
) -> Result<ElbowScan, PipelineError> {
    let meta = ArtifactsMeta::load(artifacts)?;
    let snapshots = crate::snapshots::SnapshotSet::load(&artifacts.join(SNAPSHOTS_DIR))
        .map_err(at(Stage::ArtifactLoad))?;
    elbow_select(&snapshots.matrix, k_max, alpha, meta.restarts, meta.seed)
        .map_err(at(Stage::Clustering))
}

fn cluster_snapshots(
    config: &PipelineConfig,
    snapshots: &SnapshotSet,
) -> Result<(ClusterModel, Option<ElbowScan>), PipelineError> {
    match config.clustering {
        ClusterChoice::Fixed { k } => {
            let clusters = kmeans(
                &snapshots.matrix,
                k,
                config.restarts,
                config.kmeans_max_iter,
                config.seed,
            )
            .map_err(at(Stage::Clustering))?;
            Ok((clusters, None))
        }
        ClusterChoice::Elbow { k_max, alpha } => {
            let scan = elbow_select(
                &snapshots.matrix,
                k_max,
                alpha,
                config.restarts,
                config.seed,
            )
            .map_err(at(Stage::Clustering))?;
            let clusters = kmeans(
                &snapshots.matrix,
                scan.chosen_k,
                config.restarts,
                config.kmeans_max_iter,
                config.seed,
            )
            .map_err(at(Stage::Clustering))?;
            Ok((clusters, Some(scan)))
        }
    }
}

fn write_clusters_artifacts(
    clustering_dir: &Path,
    snapshots: &SnapshotSet,
    clusters: &ClusterModel,
    elbow: Option<&ElbowScan>,
) -> Result<(), PipelineError> {
    super::write_clusters_file(
        &clustering_dir.join(CLUSTERS_FILE),
        &snapshots.params.points,
        &clusters.assignment,
    )
    .map_err(at(Stage::Clustering))?;
    store::write_matrix(&clustering_dir.join(MEANS_FILE), &clusters.means)
        .map_err(at(Stage::Clustering))?;
    if let Some(scan) = elbow {
        write_elbow_csv(&clustering_dir.join(ELBOW_FILE), scan).map_err(at(Stage::Clustering))?;
    }
    Ok(())
}

fn render_report(
    config: &PipelineConfig,
    snapshots: &SnapshotSet,
    parameter_clusters: &ParameterClustering,
    summary: &OfflineSummary,
) -> String {
    let mut text = String::new();
    let hull = parameter_clusters.hull;
    let _ = writeln!(
        text,
        "model: {} (n = {})",
        config.model.kind(),
        snapshots.dim()
    );
    let _ = writeln!(
        text,
        "training samples: {} over [{}, {}]",
        summary.sample_count, hull.0, hull.1
    );
    match &summary.elbow {
        Some(scan) => {
            let note = if scan.fallback {
                " (no drop met the threshold; largest scanned count kept)"
            } else {
                ""
            };
            let _ = writeln!(
                text,
                "clusters: K = {} chosen by elbow scan up to {} at alpha = {}{note}",
                summary.k,
                scan.k_values.last().copied().unwrap_or(0),
                scan.alpha
            );
        }
        None => {
            let _ = writeln!(text, "clusters: K = {} (fixed by config)", summary.k);
        }
    }
    for k in 0..summary.k {
        let group = &parameter_clusters.cluster_params[k];
        let _ = writeln!(
            text,
            "cluster {k}: {} samples, theta in [{}, {}], basis size L_{k} = {}",
            summary.cluster_sizes[k],
            group[0],
            group[group.len() - 1],
            summary.basis_sizes[k]
        );
    }
    let _ = writeln!(
        text,
        "global bases: combined L = {}, largest-local L = {}{}",
        summary.global1_size,
        summary.global2_size,
        if summary.rank_truncated {
            " (combined size capped at the snapshot rank)"
        } else {
            ""
        }
    );
    let fmt_points = |pts: &[f64]| {
        if pts.is_empty() {
            "none".to_string()
        } else {
            pts.iter()
                .map(|p| format!("{p:.6}"))
                .collect::<Vec<_>>()
                .join(", ")
        }
    };
    let _ = writeln!(
        text,
        "assignment switch points (mean criterion): {}",
        fmt_points(&summary.switch_points_mean)
    );
    let _ = writeln!(
        text,
        "assignment switch points (midrange criterion): {}",
        fmt_points(&summary.switch_points_midrange)
    );
    let _ = writeln!(text, "default assignment criterion: {}", config.criterion);
    text
}
