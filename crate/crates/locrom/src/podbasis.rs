//! Per-cluster orthonormal bases from thin SVDs of clustered snapshot
//! columns, with fixed-size or energy-tail truncation, plus the basis store.

use crate::clustering::ClusterModel;
use crate::linalg::{thin_svd, DenseMatrix, LinalgError};
use crate::snapshots::SnapshotSet;
use crate::store::{self, fmt_full, StoreError};
use rayon::prelude::*;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

/// Orthonormality drift tolerated when re-checking a loaded basis.
pub const BASIS_ORTHO_TOL: f64 = 1e-10;
pub const ENERGY_TOL_DEFAULT: f64 = 1e-8;

pub const BASES_META_FILE: &str = "bases_meta.txt";
const BASES_META_FORMAT: &str = "locrom-bases-v1";

#[derive(Debug, Error)]
pub enum PodError {
    #[error("cluster {cluster} holds only zero snapshots; no basis direction exists")]
    DegenerateCluster { cluster: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid truncation rule: {0}")]
    InvalidRule(String),
    #[error("clusters inconsistent with snapshots: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("basis store metadata invalid: {0}")]
    Meta(String),
    #[error("cannot write basis store: {0}")]
    Io(#[from] std::io::Error),
}

/// How many leading singular vectors a basis keeps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TruncationRule {
    /// Keep `min(l, rank)` columns.
    Fixed { l: usize },
    /// Keep the smallest count whose squared-singular-value tail is at most
    /// `tol` times the total; `tol = 0` keeps the full numerical rank.
    Energy { tol: f64 },
}

impl TruncationRule {
    fn validate(&self) -> Result<(), PodError> {
        match *self {
            TruncationRule::Fixed { l } if l >= 1 => Ok(()),
            TruncationRule::Fixed { l } => Err(PodError::InvalidRule(format!(
                "fixed size {l} must be >= 1"
            ))),
            TruncationRule::Energy { tol } if (0.0..1.0).contains(&tol) => Ok(()),
            TruncationRule::Energy { tol } => Err(PodError::InvalidRule(format!(
                "energy tolerance {tol} outside [0, 1)"
            ))),
        }
    }
}

impl fmt::Display for TruncationRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TruncationRule::Fixed { l } => write!(f, "fixed,{l}"),
            TruncationRule::Energy { tol } => write!(f, "energy,{}", fmt_full(*tol)),
        }
    }
}

impl FromStr for TruncationRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, value) = s
            .split_once(',')
            .ok_or_else(|| format!("bad truncation rule {s:?}, expected kind,value"))?;
        match kind.trim() {
            "fixed" => Ok(TruncationRule::Fixed {
                l: value
                    .trim()
                    .parse()
                    .map_err(|_| format!("bad fixed size in {s:?}"))?,
            }),
            "energy" => Ok(TruncationRule::Energy {
                tol: value
                    .trim()
                    .parse()
                    .map_err(|_| format!("bad energy tolerance in {s:?}"))?,
            }),
            other => Err(format!("unknown truncation rule kind {other:?}")),
        }
    }
}

/// Leading left singular vectors of one cluster's snapshot matrix.
#[derive(Debug, Clone)]
pub struct LocalBasis {
    pub cluster_id: usize,
    /// Orthonormal columns, N x L.
    pub basis: DenseMatrix,
    /// Full singular spectrum of the cluster matrix (not just the kept part).
    pub singular_values: Vec<f64>,
    pub rule_used: TruncationRule,
}

impl LocalBasis {
    pub fn dim(&self) -> usize {
        self.basis.rows()
    }

    /// Number of kept modes.
    pub fn len(&self) -> usize {
        self.basis.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Coefficients of the best approximation of `u` in the basis span.
    pub fn project(&self, u: &[f64]) -> Result<Vec<f64>, PodError> {
        if u.len() != self.dim() {
            return Err(PodError::Dimension(format!(
                "projecting a length-{} vector onto a dimension-{} basis",
                u.len(),
                self.dim()
            )));
        }
        Ok(self.basis.transpose_mat_vec(u))
    }

    /// Full-order vector represented by the coefficients `a`.
    pub fn lift(&self, a: &[f64]) -> Result<Vec<f64>, PodError> {
        if a.len() != self.len() {
            return Err(PodError::Dimension(format!(
                "lifting {} coefficients through a {}-mode basis",
                a.len(),
                self.len()
            )));
        }
        Ok(self.basis.mat_vec(a))
    }

    /// Largest entrywise deviation of the basis Gram matrix from identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let gram = self.basis.transpose().matmul(&self.basis);
        let mut worst = 0.0f64;
        for i in 0..gram.rows() {
            for j in 0..gram.cols() {
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram.get(i, j) - want).abs());
            }
        }
        worst
    }
}

/// POD basis of an arbitrary column set; the global basis is this applied to
/// the whole snapshot matrix.
pub fn build_basis(
    columns: &DenseMatrix,
    cluster_id: usize,
    rule: TruncationRule,
) -> Result<LocalBasis, PodError> {
    rule.validate()?;
    let svd = thin_svd(columns)?;
    let rank = svd.rank();
    if rank == 0 {
        return Err(PodError::DegenerateCluster {
            cluster: cluster_id,
        });
    }
    let l = match rule {
        TruncationRule::Fixed { l } => l.min(rank),
        TruncationRule::Energy { tol } => {
            let total: f64 = svd.singular_values.iter().map(|s| s * s).sum();
            let mut chosen = rank;
            for l in 1..rank {
                let tail: f64 = svd.singular_values[l..].iter().map(|s| s * s).sum();
                if tail <= tol * total {
                    chosen = l;
                    break;
                }
            }
            chosen
        }
    };
    Ok(LocalBasis {
        cluster_id,
        basis: svd.left.leading_columns(l),
        singular_values: svd.singular_values,
        rule_used: rule,
    })
}

/// One POD basis per cluster, built independently (and concurrently) from the
/// columns each cluster owns.
pub fn build_local_bases(
    snapshots: &SnapshotSet,
    clusters: &ClusterModel,
    rule: TruncationRule,
) -> Result<Vec<LocalBasis>, PodError> {
    if clusters.assignment.len() != snapshots.len() {
        return Err(PodError::Inconsistent(format!(
            "{} assignments for {} snapshots",
            clusters.assignment.len(),
            snapshots.len()
        )));
    }
    let members = clusters.members();
    if let Some(empty) = members.iter().position(|g| g.is_empty()) {
        return Err(PodError::Inconsistent(format!("cluster {empty} is empty")));
    }
    members
        .par_iter()
        .enumerate()
        .map(|(k, group)| {
            let cols: Vec<Vec<f64>> = group
                .iter()
                .map(|&s| snapshots.column(s).to_vec())
                .collect();
            let matrix = DenseMatrix::from_columns(&cols)
                .map_err(|e| PodError::Inconsistent(format!("cluster {k}: {e}")))?;
            build_basis(&matrix, k, rule)
        })
        .collect()
}

/// Writes `basis_k.mat` + `spectrum_k.csv` per cluster and a `bases_meta.txt`
/// index.
pub fn save_bases(dir: &Path, bases: &[LocalBasis]) -> Result<(), PodError> {
    std::fs::create_dir_all(dir)?;
    let mut meta = String::new();
    meta.push_str(&format!("format = {BASES_META_FORMAT}\n"));
    meta.push_str(&format!("k = {}\n", bases.len()));
    for b in bases {
        meta.push_str(&format!(
            "basis = {},{},{}\n",
            b.cluster_id,
            b.len(),
            b.rule_used
        ));
    }
    std::fs::write(dir.join(BASES_META_FILE), meta)?;
    for b in bases {
        store::write_matrix(&dir.join(format!("basis_{}.mat", b.cluster_id)), &b.basis)?;
        let mut csv = String::from("l,sigma\n");
        for (i, s) in b.singular_values.iter().enumerate() {
            csv.push_str(&format!("{},{}\n", i + 1, fmt_full(*s)));
        }
        std::fs::write(dir.join(format!("spectrum_{}.csv", b.cluster_id)), csv)?;
    }
    Ok(())
}

pub fn load_bases(dir: &Path) -> Result<Vec<LocalBasis>, PodError> {
    let meta_path = dir.join(BASES_META_FILE);
    let text = std::fs::read_to_string(&meta_path)
        .map_err(|e| PodError::Meta(format!("cannot read {}: {e}", meta_path.display())))?;
    let mut declared_k = None;
    let mut rows: Vec<(usize, usize, TruncationRule)> = Vec::new();
    let mut format = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| PodError::Meta(format!("line {} is not `key = value`", lineno + 1)))?;
        match key.trim() {
            "format" => format = Some(value.trim().to_string()),
            "k" => {
                declared_k = Some(
                    value
                        .trim()
                        .parse::<usize>()
                        .map_err(|_| PodError::Meta(format!("bad k on line {}", lineno + 1)))?,
                )
            }
            "basis" => {
                let fields: Vec<&str> = value.trim().splitn(3, ',').collect();
                if fields.len() != 3 {
                    return Err(PodError::Meta(format!(
                        "bad basis row on line {}, expected id,l,rule",
                        lineno + 1
                    )));
                }
                let id = fields[0].parse().map_err(|_| {
                    PodError::Meta(format!("bad cluster id on line {}", lineno + 1))
                })?;
                let l = fields[1].parse().map_err(|_| {
                    PodError::Meta(format!("bad mode count on line {}", lineno + 1))
                })?;
                let rule = fields[2].parse().map_err(PodError::Meta)?;
                rows.push((id, l, rule));
            }
            other => {
                return Err(PodError::Meta(format!(
                    "unknown key `{other}` on line {}",
                    lineno + 1
                )))
            }
        }
    }
    if format.as_deref() != Some(BASES_META_FORMAT) {
        return Err(PodError::Meta(format!(
            "unsupported format {format:?}, expected {BASES_META_FORMAT:?}"
        )));
    }
    let declared_k = declared_k.ok_or_else(|| PodError::Meta("missing k".into()))?;
    if rows.len() != declared_k {
        return Err(PodError::Meta(format!(
            "meta declares k = {declared_k} but lists {} bases",
            rows.len()
        )));
    }

    let mut bases = Vec::with_capacity(rows.len());
    for (id, l, rule) in rows {
        let basis = store::read_matrix(&dir.join(format!("basis_{id}.mat")))?;
        if basis.cols() != l {
            return Err(PodError::Meta(format!(
                "basis {id} has {} columns, meta declares {l}",
                basis.cols()
            )));
        }
        let spectrum_path = dir.join(format!("spectrum_{id}.csv"));
        let csv = std::fs::read_to_string(&spectrum_path)
            .map_err(|e| PodError::Meta(format!("cannot read {}: {e}", spectrum_path.display())))?;
        let mut singular_values = Vec::new();
        for (lineno, line) in csv.lines().enumerate() {
            if lineno == 0 {
                if line.trim() != "l,sigma" {
                    return Err(PodError::Meta(format!(
                        "bad spectrum header in {}",
                        spectrum_path.display()
                    )));
                }
                continue;
            }
            let (_, sigma) = line.split_once(',').ok_or_else(|| {
                PodError::Meta(format!(
                    "bad spectrum row {} in {}",
                    lineno,
                    spectrum_path.display()
                ))
            })?;
            singular_values.push(sigma.trim().parse::<f64>().map_err(|_| {
                PodError::Meta(format!(
                    "bad sigma on row {} in {}",
                    lineno,
                    spectrum_path.display()
                ))
            })?);
        }
        if singular_values.len() < l {
            return Err(PodError::Meta(format!(
                "basis {id} keeps {l} modes but the spectrum lists {}",
                singular_values.len()
            )));
        }
        let out = LocalBasis {
            cluster_id: id,
            basis,
            singular_values,
            rule_used: rule,
        };
        let defect = out.orthonormality_defect();
        if defect > BASIS_ORTHO_TOL {
            return Err(PodError::Meta(format!(
                "basis {id} is not orthonormal after load (defect {defect:e})"
            )));
        }
        bases.push(out);
    }
    Ok(bases)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::thin_svd;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use tempfile::tempdir;

    fn matrix_of(points: &[Vec<f64>]) -> DenseMatrix {
        DenseMatrix::from_columns(points).unwrap()
    }

    fn random_columns(n: usize, s: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols: Vec<Vec<f64>> = (0..s)
            .map(|_| (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect())
            .collect();
        matrix_of(&cols)
    }

    /// The quantity the basis minimizes: total squared projection error of
    /// the columns.
    fn objective(basis: &DenseMatrix, columns: &DenseMatrix) -> f64 {
        let mut total = 0.0;
        for s in 0..columns.cols() {
            let u = columns.col(s);
            let a = basis.transpose_mat_vec(u);
            let p = basis.mat_vec(&a);
            total += u
                .iter()
                .zip(&p)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>();
        }
        total
    }

    #[test]
    fn identical_columns_give_a_single_normalized_mode() {
        let col = vec![3.0, -4.0, 0.0];
        let cluster = matrix_of(&[col.clone(), col.clone()]);
        let b = build_basis(&cluster, 0, TruncationRule::Energy { tol: 0.0 }).unwrap();
        assert_eq!(b.len(), 1);
        let got = b.basis.col(0);
        // Sign convention: largest-magnitude entry positive, so the mode is
        // the normalized column with its sign flipped.
        let want = [-0.6, 0.8, 0.0];
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() <= 1e-12);
        }
    }

    #[test]
    fn zero_energy_tolerance_keeps_the_full_rank() {
        let e1 = vec![1.0, 0.0, 0.0];
        let e2 = vec![0.0, 1.0, 0.0];
        let b = build_basis(
            &matrix_of(&[e1.clone(), e2.clone()]),
            0,
            TruncationRule::Energy { tol: 0.0 },
        )
        .unwrap();
        assert_eq!(b.len(), 2);
        for u in [&e1, &e2] {
            let back = b.lift(&b.project(u).unwrap()).unwrap();
            for (x, y) in u.iter().zip(&back) {
                assert!((x - y).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn projection_error_equals_the_spectral_tail() {
        let columns = random_columns(12, 7, 3);
        let svd = thin_svd(&columns).unwrap();
        let total: f64 = svd.singular_values.iter().map(|s| s * s).sum();
        for l in 1..=svd.rank() {
            let b = build_basis(&columns, 0, TruncationRule::Fixed { l }).unwrap();
            assert_eq!(b.len(), l);
            let tail: f64 = svd.singular_values[l..].iter().map(|s| s * s).sum();
            assert!((objective(&b.basis, &columns) - tail).abs() <= 1e-8 * total);
        }
    }

    #[test]
    fn no_random_competitor_beats_the_basis() {
        let columns = random_columns(10, 6, 17);
        let b = build_basis(&columns, 0, TruncationRule::Fixed { l: 3 }).unwrap();
        let pod = objective(&b.basis, &columns);
        let total: f64 = b.singular_values.iter().map(|s| s * s).sum();
        for trial in 0..20 {
            let competitor = thin_svd(&random_columns(10, 3, 1000 + trial)).unwrap().left;
            assert!(objective(&competitor, &columns) >= pod - 1e-8 * total);
        }
    }

    #[test]
    fn basis_columns_are_orthonormal() {
        let columns = random_columns(15, 9, 5);
        let b = build_basis(&columns, 0, TruncationRule::Energy { tol: 1e-8 }).unwrap();
        assert!(b.orthonormality_defect() <= 1e-10);
    }

    #[test]
    fn truncations_nest() {
        let columns = random_columns(14, 8, 11);
        let wide = build_basis(&columns, 0, TruncationRule::Fixed { l: 6 }).unwrap();
        let narrow = build_basis(&columns, 0, TruncationRule::Fixed { l: 3 }).unwrap();
        for l in 0..3 {
            assert_eq!(wide.basis.col(l), narrow.basis.col(l));
        }
    }

    #[test]
    fn energy_rule_meets_its_tolerance() {
        let columns = random_columns(20, 10, 23);
        let tol = 1e-4;
        let b = build_basis(&columns, 0, TruncationRule::Energy { tol }).unwrap();
        let total: f64 = b.singular_values.iter().map(|s| s * s).sum();
        let tail: f64 = b.singular_values[b.len()..].iter().map(|s| s * s).sum();
        assert!(tail <= tol * total);
        // And one fewer mode would miss it.
        if b.len() > 1 {
            let bigger: f64 = b.singular_values[b.len() - 1..].iter().map(|s| s * s).sum();
            assert!(bigger > tol * total);
        }
    }

    #[test]
    fn zero_cluster_is_degenerate() {
        let cluster = matrix_of(&vec![vec![0.0; 6]; 3]);
        assert!(matches!(
            build_basis(&cluster, 4, TruncationRule::Fixed { l: 1 }),
            Err(PodError::DegenerateCluster { cluster: 4 })
        ));
    }

    #[test]
    fn projection_facts() {
        let columns = random_columns(9, 4, 7);
        let b = build_basis(&columns, 0, TruncationRule::Fixed { l: 2 }).unwrap();

        let zero = b.lift(&vec![0.0; b.len()]).unwrap();
        assert!(zero.iter().all(|&x| x == 0.0));

        // A vector already in the span returns unchanged.
        let mut in_span = vec![0.0; 9];
        for (i, v) in in_span.iter_mut().enumerate() {
            *v = 1.3 * b.basis.col(0)[i] - 0.4 * b.basis.col(1)[i];
        }
        let back = b.lift(&b.project(&in_span).unwrap()).unwrap();
        for (x, y) in in_span.iter().zip(&back) {
            assert!((x - y).abs() <= 1e-10);
        }

        // A vector orthogonal to the span projects to zero.
        let full = thin_svd(&columns).unwrap();
        if full.rank() > 2 {
            let orth = full.left.col(full.rank() - 1);
            let coeffs = b.project(orth).unwrap();
            assert!(coeffs.iter().all(|c| c.abs() <= 1e-10));
        }

        assert!(matches!(
            b.project(&[1.0, 2.0]),
            Err(PodError::Dimension(_))
        ));
        assert!(matches!(b.lift(&[1.0]), Err(PodError::Dimension(_))));
    }

    #[test]
    fn per_cluster_bases_cover_their_own_members() {
        use crate::clustering::kmeans;
        use crate::fom::{BranchId, ModelSpec};
        use crate::sampling::{generate_samples, SamplingPlan};
        use crate::snapshots::generate_snapshots;

        let spec = ModelSpec::Pitchfork {
            n_interior: 24,
            domain_length: 1.0,
            branch: BranchId::Lower,
        };
        let params = generate_samples(&SamplingPlan::Uniform {
            range: (11.0, 25.0),
            count: 12,
        })
        .unwrap();
        let set = generate_snapshots(&spec, &params, 1e-10, 50).unwrap();
        let clusters = kmeans(&set.matrix, 3, 10, 300, 7).unwrap();
        let bases =
            build_local_bases(&set, &clusters, TruncationRule::Energy { tol: 1e-10 }).unwrap();
        assert_eq!(bases.len(), 3);
        let groups = clusters.members();
        for (k, b) in bases.iter().enumerate() {
            assert!(b.len() <= groups[k].len());
            for &s in &groups[k] {
                let u = set.column(s);
                let back = b.lift(&b.project(u).unwrap()).unwrap();
                let err: f64 = u
                    .iter()
                    .zip(&back)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt();
                let scale: f64 = u.iter().map(|x| x * x).sum::<f64>().sqrt();
                assert!(
                    err <= 1e-4 * scale.max(1e-12),
                    "cluster {k} column {s}: {err:e}"
                );
            }
        }
    }

    #[test]
    fn basis_store_round_trips() {
        let columns = random_columns(12, 8, 29);
        let clusters: Vec<LocalBasis> = vec![
            build_basis(&columns, 0, TruncationRule::Fixed { l: 3 }).unwrap(),
            build_basis(&columns, 1, TruncationRule::Energy { tol: 1e-6 }).unwrap(),
        ];
        let dir = tempdir().unwrap();
        save_bases(dir.path(), &clusters).unwrap();
        let back = load_bases(dir.path()).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in clusters.iter().zip(&back) {
            assert_eq!(a.cluster_id, b.cluster_id);
            assert_eq!(a.basis.column_major_data(), b.basis.column_major_data());
            assert_eq!(a.singular_values, b.singular_values);
            assert_eq!(a.rule_used, b.rule_used);
        }
    }

    #[test]
    fn corrupted_basis_store_is_rejected() {
        let columns = random_columns(10, 5, 31);
        let bases = vec![build_basis(&columns, 0, TruncationRule::Fixed { l: 2 }).unwrap()];
        let dir = tempdir().unwrap();
        save_bases(dir.path(), &bases).unwrap();
        // Overwrite the basis with a non-orthonormal matrix of the right shape.
        store::write_matrix(&dir.path().join("basis_0.mat"), &random_columns(10, 2, 99)).unwrap();
        assert!(matches!(load_bases(dir.path()), Err(PodError::Meta(_))));
    }

    #[test]
    fn invalid_rules_are_rejected() {
        let columns = random_columns(5, 3, 1);
        assert!(matches!(
            build_basis(&columns, 0, TruncationRule::Fixed { l: 0 }),
            Err(PodError::InvalidRule(_))
        ));
        assert!(matches!(
            build_basis(&columns, 0, TruncationRule::Energy { tol: 1.0 }),
            Err(PodError::InvalidRule(_))
        ));
    }

    #[test]
    fn rule_strings_round_trip() {
        for rule in [
            TruncationRule::Fixed { l: 7 },
            TruncationRule::Energy { tol: 1e-8 },
        ] {
            let back: TruncationRule = rule.to_string().parse().unwrap();
            assert_eq!(back, rule);
        }
        assert!("nonsense,1".parse::<TruncationRule>().is_err());
    }
}
