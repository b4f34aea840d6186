//! The online stage: load reduced artifacts once, then answer parameter
//! queries with reduced solves only. After loading, nothing here touches the
//! full-order dimension except lifting a reduced solution to evaluate its
//! observable.

use super::{
    at, read_clusters_file, rom_dir_name, ArtifactsMeta, PipelineError, Stage, CLUSTERING_DIR,
    CLUSTERS_FILE, ROMS_DIR,
};
use crate::assignment::{parameter_clusters_from_labels, AssignmentCriterion, ParameterClustering};
use crate::rom::{load_rom_artifact, solve_rom, BasisId, RomArtifact};
use crate::store::fmt_full;
use rayon::prelude::*;
use std::path::Path;

/// One swept parameter value.
#[derive(Debug, Clone)]
pub struct DiagramRow {
    pub theta: f64,
    /// Observable of the lifted reduced solution.
    pub observable: f64,
    pub basis: BasisId,
    pub converged: bool,
    /// True when `theta` lay outside the sampled hull and was scored at the
    /// nearest edge.
    pub extrapolated: bool,
}

/// A reduced parameter sweep; rows ascend strictly in `theta`.
#[derive(Debug, Clone)]
pub struct BifurcationDiagram {
    pub rows: Vec<DiagramRow>,
    pub criterion: AssignmentCriterion,
}

/// Loaded artifacts, ready for repeated reduced queries.
#[derive(Debug)]
pub struct OnlineSession {
    locals: Vec<RomArtifact>,
    clustering: ParameterClustering,
    meta: ArtifactsMeta,
}

impl OnlineSession {
    pub fn load(artifacts: &Path) -> Result<OnlineSession, PipelineError> {
        let stage = Stage::ArtifactLoad;
        let meta = ArtifactsMeta::load(artifacts)?;
        let (thetas, labels) =
            read_clusters_file(&artifacts.join(CLUSTERING_DIR).join(CLUSTERS_FILE))?;
        let clustering =
            parameter_clusters_from_labels(&thetas, &labels, meta.k).map_err(at(stage))?;
        let roms_dir = artifacts.join(ROMS_DIR);
        let locals = (0..meta.k)
            .map(|k| {
                let artifact = load_rom_artifact(&roms_dir.join(rom_dir_name(BasisId::Local(k))))
                    .map_err(at(stage))?;
                if artifact.reduced.basis_ref != BasisId::Local(k) {
                    return Err(PipelineError::msg(
                        stage,
                        format!(
                            "reduced model in local_{k} labels itself {}",
                            artifact.reduced.basis_ref
                        ),
                    ));
                }
                if meta.observable_index >= artifact.basis.dim() {
                    return Err(PipelineError::msg(
                        stage,
                        format!(
                            "observable index {} outside state dimension {}",
                            meta.observable_index,
                            artifact.basis.dim()
                        ),
                    ));
                }
                Ok(artifact)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(OnlineSession {
            locals,
            clustering,
            meta,
        })
    }

    /// The criterion the offline config declared as default.
    pub fn default_criterion(&self) -> AssignmentCriterion {
        self.meta.criterion
    }

    pub fn cluster_count(&self) -> usize {
        self.locals.len()
    }

    pub fn parameter_clusters(&self) -> &ParameterClustering {
        &self.clustering
    }

    /// One reduced query: assign, solve, lift, read off the observable.
    pub fn solve_at(&self, theta: f64, criterion: AssignmentCriterion) -> DiagramRow {
        let assigned = self.clustering.assign(theta, criterion);
        let artifact = &self.locals[assigned.cluster];
        let report = solve_rom(
            &artifact.reduced,
            theta,
            artifact.init.nearest(theta),
            self.meta.rom_tol,
            self.meta.rom_max_iter,
            self.meta.scheme,
        );
        let lifted = artifact
            .basis
            .lift(&report.coeffs)
            .expect("basis and reduced model share a dimension");
        DiagramRow {
            theta,
            observable: lifted[self.meta.observable_index],
            basis: report.basis_used,
            converged: report.converged,
            extrapolated: assigned.extrapolated,
        }
    }

    /// Sweeps a strictly increasing parameter list; queries run concurrently
    /// and rows come back in input order.
    pub fn sweep(
        &self,
        thetas: &[f64],
        criterion: AssignmentCriterion,
    ) -> Result<BifurcationDiagram, PipelineError> {
        for pair in thetas.windows(2) {
            if !(pair[1] > pair[0]) {
                return Err(PipelineError::msg(
                    Stage::Online,
                    format!(
                        "parameter values must increase strictly ({} then {})",
                        pair[0], pair[1]
                    ),
                ));
            }
        }
        if thetas.iter().any(|t| !t.is_finite()) {
            return Err(PipelineError::msg(
                Stage::Online,
                "parameter values must be finite",
            ));
        }
        let rows = thetas
            .par_iter()
            .map(|&theta| self.solve_at(theta, criterion))
            .collect();
        Ok(BifurcationDiagram { rows, criterion })
    }
}

/// Loads the artifacts and sweeps in one call. `criterion` defaults to the
/// offline config's choice.
pub fn run_online(
    artifacts: &Path,
    thetas: &[f64],
    criterion: Option<AssignmentCriterion>,
) -> Result<BifurcationDiagram, PipelineError> {
    let session = OnlineSession::load(artifacts)?;
    let criterion = criterion.unwrap_or(session.default_criterion());
    session.sweep(thetas, criterion)
}

pub fn write_diagram_csv(path: &Path, diagram: &BifurcationDiagram) -> Result<(), std::io::Error> {
    let mut text = String::from("theta,observable,basis,converged,extrapolated\n");
    for row in &diagram.rows {
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_full(row.theta),
            fmt_full(row.observable),
            row.basis,
            row.converged,
            row.extrapolated
        ));
    }
    std::fs::write(path, text)
}
