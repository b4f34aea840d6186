//! Offline/online orchestration: configuration parsing, the offline stage
//! that turns a config into an artifact directory (snapshots, clusters,
//! bases, reduced models, report), the online stage that sweeps parameter
//! values through the reduced models, and full-order error studies.

mod config;
mod offline;
mod online;
mod report;

pub use config::{parse_config, parse_config_file, ClusterChoice, ConfigError, PipelineConfig};
pub use offline::{elbow_rescan, run_offline, OfflineSummary};
pub use online::{run_online, write_diagram_csv, BifurcationDiagram, DiagramRow, OnlineSession};
pub use report::{
    default_held_out, run_errors, write_error_csv, ErrorReport, ErrorRow, HELD_OUT_DEFAULT_COUNT,
};

use std::fmt;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Artifact directory layout, relative to the output root.
pub const SNAPSHOTS_DIR: &str = "snapshots";
pub const CLUSTERING_DIR: &str = "clustering";
pub const BASES_DIR: &str = "bases";
pub const ROMS_DIR: &str = "roms";
pub const ARTIFACTS_META_FILE: &str = "artifacts_meta.txt";
pub const OFFLINE_REPORT_FILE: &str = "offline_report.txt";
pub const CLUSTERS_FILE: &str = "clusters.txt";
pub const MEANS_FILE: &str = "means.mat";
pub const ELBOW_FILE: &str = "elbow.csv";

const ARTIFACTS_META_FORMAT: &str = "locrom-artifacts-v1";

/// Subdirectory under `roms/` holding one reduced model.
pub fn rom_dir_name(basis: crate::rom::BasisId) -> String {
    match basis {
        crate::rom::BasisId::Local(k) => format!("local_{k}"),
        crate::rom::BasisId::Global1 => "global1".to_string(),
        crate::rom::BasisId::Global2 => "global2".to_string(),
    }
}

/// Pipeline stages, used to tag propagated errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Sampling,
    Snapshots,
    Clustering,
    Bases,
    Roms,
    Report,
    ArtifactLoad,
    Online,
    ErrorStudy,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Config => "config",
            Stage::Sampling => "sampling",
            Stage::Snapshots => "snapshots",
            Stage::Clustering => "clustering",
            Stage::Bases => "bases",
            Stage::Roms => "reduced models",
            Stage::Report => "report",
            Stage::ArtifactLoad => "artifact load",
            Stage::Online => "online",
            Stage::ErrorStudy => "error study",
        };
        write!(f, "{name}")
    }
}

#[derive(Debug, Error)]
#[error("{stage} stage: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: Box<dyn std::error::Error + Send + Sync + 'static>,
}

impl PipelineError {
    pub fn new(
        stage: Stage,
        source: impl std::error::Error + Send + Sync + 'static,
    ) -> PipelineError {
        PipelineError {
            stage,
            source: Box::new(source),
        }
    }

    pub fn msg(stage: Stage, message: impl Into<String>) -> PipelineError {
        PipelineError {
            stage,
            source: message.into().into(),
        }
    }
}

/// Shorthand for tagging a stage's fallible steps.
pub(crate) fn at<E: std::error::Error + Send + Sync + 'static>(
    stage: Stage,
) -> impl Fn(E) -> PipelineError {
    move |e| PipelineError::new(stage, e)
}

pub(crate) fn artifacts_meta_path(artifacts: &Path) -> PathBuf {
    artifacts.join(ARTIFACTS_META_FILE)
}

/// Values the online and error stages need that are not derivable from the
/// individual stores.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ArtifactsMeta {
    pub k: usize,
    pub criterion: crate::assignment::AssignmentCriterion,
    pub scheme: crate::rom::RomScheme,
    pub rom_tol: f64,
    pub rom_max_iter: usize,
    pub steady_tol: f64,
    pub steady_max_iter: usize,
    pub observable_index: usize,
    pub rank_truncated: bool,
    /// Clustering inputs, recorded so scans can be reproduced later.
    pub seed: u64,
    pub restarts: usize,
}

impl ArtifactsMeta {
    pub(crate) fn save(&self, artifacts: &Path) -> Result<(), std::io::Error> {
        use crate::store::fmt_full;
        let text = format!(
            "format = {ARTIFACTS_META_FORMAT}\n\
             k = {}\n\
             criterion = {}\n\
             scheme = {}\n\
             rom_tol = {}\n\
             rom_max_iter = {}\n\
             steady_tol = {}\n\
             steady_max_iter = {}\n\
             observable_index = {}\n\
             rank_truncated = {}\n\
             seed = {}\n\
             restarts = {}\n",
            self.k,
            self.criterion,
            self.scheme,
            fmt_full(self.rom_tol),
            self.rom_max_iter,
            fmt_full(self.steady_tol),
            self.steady_max_iter,
            self.observable_index,
            self.rank_truncated,
            self.seed,
            self.restarts,
        );
        std::fs::write(artifacts_meta_path(artifacts), text)
    }

    pub(crate) fn load(artifacts: &Path) -> Result<ArtifactsMeta, PipelineError> {
        let stage = Stage::ArtifactLoad;
        let path = artifacts_meta_path(artifacts);
        let text = std::fs::read_to_string(&path).map_err(|e| {
            PipelineError::msg(stage, format!("cannot read {}: {e}", path.display()))
        })?;
        let mut format = None;
        let mut k = None;
        let mut criterion = None;
        let mut scheme = None;
        let mut rom_tol = None;
        let mut rom_max_iter = None;
        let mut steady_tol = None;
        let mut steady_max_iter = None;
        let mut observable_index = None;
        let mut rank_truncated = None;
        let mut seed = None;
        let mut restarts = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                PipelineError::msg(
                    stage,
                    format!("meta line {} is not `key = value`", lineno + 1),
                )
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| {
                PipelineError::msg(stage, format!("bad {what} on meta line {}", lineno + 1))
            };
            match key {
                "format" => format = Some(value.to_string()),
                "k" => k = Some(value.parse().map_err(|_| bad("k"))?),
                "criterion" => {
                    criterion = Some(value.parse().map_err(|e| PipelineError::msg(stage, e))?)
                }
                "scheme" => scheme = Some(value.parse().map_err(|e| PipelineError::msg(stage, e))?),
                "rom_tol" => rom_tol = Some(value.parse().map_err(|_| bad("rom_tol"))?),
                "rom_max_iter" => {
                    rom_max_iter = Some(value.parse().map_err(|_| bad("rom_max_iter"))?)
                }
                "steady_tol" => steady_tol = Some(value.parse().map_err(|_| bad("steady_tol"))?),
                "steady_max_iter" => {
                    steady_max_iter = Some(value.parse().map_err(|_| bad("steady_max_iter"))?)
                }
                "observable_index" => {
                    observable_index = Some(value.parse().map_err(|_| bad("observable_index"))?)
                }
                "rank_truncated" => {
                    rank_truncated = Some(value.parse().map_err(|_| bad("rank_truncated"))?)
                }
                "seed" => seed = Some(value.parse().map_err(|_| bad("seed"))?),
                "restarts" => restarts = Some(value.parse().map_err(|_| bad("restarts"))?),
                other => {
                    return Err(PipelineError::msg(
                        stage,
                        format!("unknown meta key `{other}` on line {}", lineno + 1),
                    ))
                }
            }
        }
        if format.as_deref() != Some(ARTIFACTS_META_FORMAT) {
            return Err(PipelineError::msg(
                stage,
                format!(
                    "unsupported artifacts format {format:?}, expected {ARTIFACTS_META_FORMAT:?}"
                ),
            ));
        }
        let need = |name: &str| PipelineError::msg(stage, format!("missing meta key `{name}`"));
        Ok(ArtifactsMeta {
            k: k.ok_or_else(|| need("k"))?,
            criterion: criterion.ok_or_else(|| need("criterion"))?,
            scheme: scheme.ok_or_else(|| need("scheme"))?,
            rom_tol: rom_tol.ok_or_else(|| need("rom_tol"))?,
            rom_max_iter: rom_max_iter.ok_or_else(|| need("rom_max_iter"))?,
            steady_tol: steady_tol.ok_or_else(|| need("steady_tol"))?,
            steady_max_iter: steady_max_iter.ok_or_else(|| need("steady_max_iter"))?,
            observable_index: observable_index.ok_or_else(|| need("observable_index"))?,
            rank_truncated: rank_truncated.ok_or_else(|| need("rank_truncated"))?,
            seed: seed.ok_or_else(|| need("seed"))?,
            restarts: restarts.ok_or_else(|| need("restarts"))?,
        })
    }
}

/// The `clustering/clusters.txt` rows: one training sample per line as
/// `sample,theta,cluster`, thetas at full precision.
pub(crate) fn write_clusters_file(
    path: &Path,
    thetas: &[f64],
    assignment: &[usize],
) -> Result<(), std::io::Error> {
    use crate::store::fmt_full;
    let mut text = String::from("# sample,theta,cluster\n");
    for (s, (&theta, &c)) in thetas.iter().zip(assignment).enumerate() {
        text.push_str(&format!("{s},{},{c}\n", fmt_full(theta)));
    }
    std::fs::write(path, text)
}

pub(crate) fn read_clusters_file(path: &Path) -> Result<(Vec<f64>, Vec<usize>), PipelineError> {
    let stage = Stage::ArtifactLoad;
    let text = std::fs::read_to_string(path)
        .map_err(|e| PipelineError::msg(stage, format!("cannot read {}: {e}", path.display())))?;
    let mut thetas = Vec::new();
    let mut assignment = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(PipelineError::msg(
                stage,
                format!("clusters line {} is not `sample,theta,cluster`", lineno + 1),
            ));
        }
        let index: usize = fields[0].parse().map_err(|_| {
            PipelineError::msg(stage, format!("bad sample index on line {}", lineno + 1))
        })?;
        if index != thetas.len() {
            return Err(PipelineError::msg(
                stage,
                format!("sample indices out of order at line {}", lineno + 1),
            ));
        }
        thetas.push(
            fields[1].parse().map_err(|_| {
                PipelineError::msg(stage, format!("bad theta on line {}", lineno + 1))
            })?,
        );
        assignment.push(fields[2].parse().map_err(|_| {
            PipelineError::msg(stage, format!("bad cluster id on line {}", lineno + 1))
        })?);
    }
    if thetas.is_empty() {
        return Err(PipelineError::msg(stage, "clusters file lists no samples"));
    }
    Ok((thetas, assignment))
}
