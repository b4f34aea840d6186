//! End-to-end acceptance gate: eight checks covering the numerical kernels
//! (SVD, k-means, POD optimality), the two bifurcation pipelines, global
//! basis bookkeeping, the online cost split, and rerun determinism. Each
//! test is one pass/fail line; tolerances are pinned below.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::path::Path;
use std::time::Instant;
use tempfile::TempDir;

use locrom::clustering::{elbow_select, kmeans, variance, ELBOW_ALPHA_DEFAULT};
use locrom::fom::{hump_count, BranchId, ModelSpec, STEADY_MAX_ITER_DEFAULT, STEADY_TOL_DEFAULT};
use locrom::linalg::{thin_svd, DenseMatrix};
use locrom::pipeline::{
    default_held_out, parse_config, run_errors, run_offline, run_online, write_diagram_csv,
    OnlineSession, CLUSTERING_DIR, CLUSTERS_FILE, SNAPSHOTS_DIR,
};
use locrom::podbasis::{build_basis, LocalBasis, TruncationRule};
use locrom::rom::build_global_roms;
use locrom::sampling::{generate_samples, ParameterSet, SamplingPlan};
use locrom::snapshots::{generate_snapshots, SnapshotSet};

const SVD_ORTHO_TOL: f64 = 1e-10;
const SVD_RECONSTRUCT_REL_TOL: f64 = 1e-9;
const SVD_TAIL_REL_TOL: f64 = 1e-8;
const VARIANCE_ORACLE_REL_TOL: f64 = 1e-12;
const LLOYD_MONOTONE_REL_SLACK: f64 = 1e-12;
const RESTART_MONOTONE_REL_TOL: f64 = 1e-9;
const BLOB_AGREEMENT_MIN: f64 = 0.99;
const POD_TAIL_REL_TOL: f64 = 1e-8;
const POD_COMPETITORS: usize = 20;
const DIAGRAM_POINTWISE_TOL: f64 = 1e-2;
const DIAGRAM_MEAN_TOL: f64 = 5e-3;
const BIFURCATION_ONSET_TOL: f64 = 1e-4;
const ONLINE_SPEEDUP_MIN: f64 = 20.0;

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    DenseMatrix::from_column_major(rows, cols, data).expect("well-formed random matrix")
}

fn max_abs_offdiag_defect(q: &DenseMatrix) -> f64 {
    let gram = q.transpose().matmul(q);
    let mut worst: f64 = 0.0;
    for i in 0..gram.rows() {
        for j in 0..gram.cols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram.get(i, j) - target).abs());
        }
    }
    worst
}

/// Factorization suite on 50 random matrices: orthogonality of both factors,
/// full reconstruction, and the truncation tail identity
/// `||A - A_r||_F^2 = sum of squared discarded singular values`.
#[test]
fn svd_factorization_suite() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC1);
    for case in 0..50 {
        let rows = rng.gen_range(2..=30);
        let cols = rng.gen_range(2..=30);
        let a = random_matrix(&mut rng, rows, cols);
        let svd = thin_svd(&a).expect("svd of a finite matrix");

        let u_defect = max_abs_offdiag_defect(&svd.left);
        let v_defect = max_abs_offdiag_defect(&svd.right);
        assert!(
            u_defect <= SVD_ORTHO_TOL && v_defect <= SVD_ORTHO_TOL,
            "case {case} ({rows}x{cols}): orthogonality defects {u_defect:.3e} / {v_defect:.3e}"
        );

        let a_norm = a.frobenius_norm();
        let mut residual = svd.reconstruct();
        for j in 0..cols {
            for i in 0..rows {
                residual.set(i, j, residual.get(i, j) - a.get(i, j));
            }
        }
        let rec_err = residual.frobenius_norm();
        assert!(
            rec_err <= SVD_RECONSTRUCT_REL_TOL * a_norm,
            "case {case}: reconstruction error {rec_err:.3e} vs norm {a_norm:.3e}"
        );

        let p = svd.singular_values.len();
        let r = rng.gen_range(1..=p);
        let mut ur = svd.left.leading_columns(r);
        for (j, &s) in svd.singular_values.iter().take(r).enumerate() {
            for v in ur.col_mut(j) {
                *v *= s;
            }
        }
        let ar = ur.matmul(&svd.right.leading_columns(r).transpose());
        let mut tail_sq = 0.0;
        for j in 0..cols {
            for i in 0..rows {
                let d = a.get(i, j) - ar.get(i, j);
                tail_sq += d * d;
            }
        }
        let spectrum_tail: f64 = svd.singular_values[r..].iter().map(|s| s * s).sum();
        let total: f64 = svd.singular_values.iter().map(|s| s * s).sum();
        assert!(
            (tail_sq - spectrum_tail).abs() <= SVD_TAIL_REL_TOL * total,
            "case {case}: rank-{r} tail {tail_sq:.6e} vs spectrum tail {spectrum_tail:.6e}"
        );
    }
    println!("svd factorization suite: PASS (50 random matrices)");
}

fn four_blobs(points_per_blob: usize, seed: u64) -> (DenseMatrix, Vec<usize>) {
    let centers = [(0.0, 0.0), (8.0, 0.0), (0.0, 8.0), (8.0, 8.0)];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols = Vec::new();
    let mut labels = Vec::new();
    for (b, &(cx, cy)) in centers.iter().enumerate() {
        for _ in 0..points_per_blob {
            // Rejection-sample the unit disc around the blob center.
            let (dx, dy) = loop {
                let dx: f64 = rng.gen_range(-1.0..1.0);
                let dy: f64 = rng.gen_range(-1.0..1.0);
                if dx * dx + dy * dy <= 1.0 {
                    break (dx, dy);
                }
            };
            cols.push(vec![cx + dx, cy + dy]);
            labels.push(b);
        }
    }
    (
        DenseMatrix::from_columns(&cols).expect("blob columns"),
        labels,
    )
}

fn permutations4() -> Vec<[usize; 4]> {
    let mut perms = Vec::new();
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let p = [a, b, c, d];
                    let mut seen = [false; 4];
                    p.iter().for_each(|&x| seen[x] = true);
                    if seen.iter().all(|&s| s) {
                        perms.push(p);
                    }
                }
            }
        }
    }
    perms
}

/// Clustering suite: exact variance bookkeeping, per-iteration and per-k
/// monotonicity, recovery of four well-separated discs, and a small variance
/// drop once the scan passes the true cluster count.
#[test]
fn kmeans_clustering_suite() {
    // Variance formula against a naive oracle on random labeled data.
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC2);
    let points = random_matrix(&mut rng, 5, 30);
    let labels: Vec<usize> = (0..30).map(|j| j % 4).collect();
    let mut sums = vec![vec![0.0; 5]; 4];
    let mut counts = [0usize; 4];
    for (j, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for (i, s) in sums[l].iter_mut().enumerate() {
            *s += points.get(i, j);
        }
    }
    let mean_cols: Vec<Vec<f64>> = sums
        .iter()
        .zip(counts.iter())
        .map(|(s, &c)| s.iter().map(|x| x / c as f64).collect())
        .collect();
    let means = DenseMatrix::from_columns(&mean_cols).expect("mean columns");
    let mut naive = 0.0;
    for (j, &l) in labels.iter().enumerate() {
        for i in 0..5 {
            let d = points.get(i, j) - means.get(i, l);
            naive += d * d;
        }
    }
    let fast = variance(&points, &labels, &means).expect("variance");
    assert!(
        (fast - naive).abs() <= VARIANCE_ORACLE_REL_TOL * naive,
        "variance {fast:.15e} vs oracle {naive:.15e}"
    );

    let (blobs, truth) = four_blobs(50, 0xACC3);

    // Lloyd iterations never increase the objective.
    let model = kmeans(&blobs, 4, 10, 300, 7).expect("k-means on blobs");
    for w in model.variance_trace.windows(2) {
        assert!(
            w[1] <= w[0] * (1.0 + LLOYD_MONOTONE_REL_SLACK),
            "objective rose within a run: {} -> {}",
            w[0],
            w[1]
        );
    }

    // Best-of-restarts variance is non-increasing in k.
    let sweep: Vec<f64> = (2..=8)
        .map(|k| kmeans(&blobs, k, 10, 300, 7).expect("sweep").variance)
        .collect();
    for w in sweep.windows(2) {
        assert!(
            w[1] <= w[0] * (1.0 + RESTART_MONOTONE_REL_TOL),
            "variance rose with k: {} -> {}",
            w[0],
            w[1]
        );
    }

    // Four discs are recovered almost exactly at k = 4.
    let matches = permutations4()
        .iter()
        .map(|perm| {
            model
                .assignment
                .iter()
                .zip(truth.iter())
                .filter(|&(&got, &want)| perm[got] == want)
                .count()
        })
        .max()
        .expect("some permutation");
    let agreement = matches as f64 / truth.len() as f64;
    assert!(
        agreement >= BLOB_AGREEMENT_MIN,
        "only {matches}/{} labels agree",
        truth.len()
    );

    // Once the scan passes the true count, the next drop is tiny.
    let scan = elbow_select(&blobs, 5, ELBOW_ALPHA_DEFAULT, 10, 7).expect("elbow scan");
    assert_eq!(scan.k_values, vec![2, 3, 4, 5]);
    let reference_drop = scan.variances[0] - scan.variances[1];
    let past_truth_drop = scan.variances[2] - scan.variances[3];
    assert!(
        past_truth_drop <= ELBOW_ALPHA_DEFAULT * reference_drop,
        "drop past the true count {past_truth_drop:.3e} vs reference {reference_drop:.3e}"
    );
    println!(
        "k-means suite: PASS (agreement {:.1}%, drop ratio {:.4})",
        100.0 * agreement,
        past_truth_drop / reference_drop
    );
}

fn projection_objective(columns: &DenseMatrix, basis: &DenseMatrix) -> f64 {
    let mut total = 0.0;
    for j in 0..columns.cols() {
        let u = columns.col(j);
        let coeffs = basis.transpose_mat_vec(u);
        let back = basis.mat_vec(&coeffs);
        total += u
            .iter()
            .zip(back.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    total
}

/// The kept basis minimizes the squared projection error: the objective
/// matches the discarded squared singular values, and random orthonormal
/// bases of the same size never do better.
#[test]
fn pod_projection_optimality() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC4);
    for cluster in 0..3 {
        let columns = random_matrix(&mut rng, 40, 12);
        let kept = 4;
        let basis = build_basis(&columns, cluster, TruncationRule::Fixed { l: kept })
            .expect("basis of a full-rank cluster");
        assert_eq!(basis.len(), kept);

        let objective = projection_objective(&columns, &basis.basis);
        let tail: f64 = basis.singular_values[kept..].iter().map(|s| s * s).sum();
        let total: f64 = basis.singular_values.iter().map(|s| s * s).sum();
        assert!(
            (objective - tail).abs() <= POD_TAIL_REL_TOL * total,
            "cluster {cluster}: objective {objective:.9e} vs spectrum tail {tail:.9e}"
        );

        for trial in 0..POD_COMPETITORS {
            let competitor = thin_svd(&random_matrix(&mut rng, 40, kept))
                .expect("competitor factorization")
                .left;
            let challenger = projection_objective(&columns, &competitor);
            assert!(
                objective <= challenger,
                "cluster {cluster}, trial {trial}: competitor objective \
                 {challenger:.9e} beats {objective:.9e}"
            );
        }
    }
    println!("pod optimality: PASS (3 clusters x {POD_COMPETITORS} competitors)");
}

fn run_offline_from(config_text: &str, out: &Path) -> locrom::pipeline::OfflineSummary {
    let config = parse_config(config_text).expect("valid config");
    run_offline(&config, out).expect("offline stage")
}

/// Continuous-transition pipeline: training samples packed just above the
/// first critical parameter, reduced diagram evaluated on 50 unseen values
/// straddling it. Pointwise and mean accuracy are pinned, and the onset
/// recovered from the diagram must sit within one diagram spacing of the
/// discrete critical value `(2/h^2)(1 - cos(pi h))`.
#[test]
fn pitchfork_pipeline_accuracy() {
    let dir = TempDir::new().expect("tempdir");
    let artifacts = dir.path().join("artifacts");
    let summary = run_offline_from(
        "[model]\n\
         kind = pitchfork\n\
         n_interior = 64\n\
         branch = lower\n\
         \n\
         [sampling]\n\
         plan = packed\n\
         theta_min = 9.9\n\
         theta_max = 14\n\
         count = 40\n\
         centers = 9.99\n\
         fraction = 0.5\n\
         \n\
         [clustering]\n\
         elbow_kmax = 8\n",
        &artifacts,
    );
    assert_eq!(summary.sample_count, 40);
    assert!(summary.k >= 2);
    assert!(summary.basis_sizes.iter().all(|&l| l >= 1));

    // 50 unseen parameter values straddling the critical point.
    let held_out: Vec<f64> = (1..=50)
        .map(|i| 9.0 + 3.0 * (2 * i - 1) as f64 / 100.0)
        .collect();
    let spacing = held_out[1] - held_out[0];

    let diagram = run_online(&artifacts, &held_out, None).expect("reduced diagram");
    assert!(diagram.rows.iter().all(|r| r.converged));
    let n = 64usize;
    let h = 1.0 / (n as f64 + 1.0);
    let critical = 2.0 / (h * h) * (1.0 - (PI * h).cos());
    let onset = diagram
        .rows
        .iter()
        .find(|r| r.observable.abs() > BIFURCATION_ONSET_TOL)
        .map(|r| r.theta)
        .expect("the diagram leaves the flat branch");
    assert!(
        (onset - critical).abs() <= spacing,
        "onset {onset:.6} vs critical {critical:.6} (spacing {spacing})"
    );

    let report = run_errors(&artifacts, Some(&held_out)).expect("error study");
    assert_eq!(report.rows.len(), 50);
    for row in &report.rows {
        if row.fom_converged && row.local_converged {
            assert!(
                row.local_error <= DIAGRAM_POINTWISE_TOL,
                "theta {}: reduced error {:.3e}",
                row.theta,
                row.local_error
            );
        }
    }
    assert!(
        report.mean_local <= DIAGRAM_MEAN_TOL,
        "mean reduced error {:.3e}",
        report.mean_local
    );
    println!(
        "pitchfork pipeline: PASS (onset {:.4} vs {:.4}, max err {:.2e}, mean err {:.2e})",
        onset, critical, report.max_local, report.mean_local
    );
}

fn schedule_mode(theta: f64) -> u32 {
    if theta < 45.0 {
        1
    } else if theta < 95.0 {
        2
    } else {
        3
    }
}

/// Discontinuous-transition pipeline: three clusters must reproduce the
/// branch schedule exactly, the midrange/radius criterion must assign every
/// unseen value to the right branch (the parameter-mean criterion is only
/// reported), and the local models must beat the max-size global model
/// pointwise.
#[test]
fn modal_pipeline_classification() {
    let dir = TempDir::new().expect("tempdir");
    let artifacts = dir.path().join("artifacts");
    run_offline_from(
        "[model]\n\
         kind = modal\n\
         n_interior = 64\n\
         schedule = 1:12:45,2:45:95,3:95:120\n\
         \n\
         [sampling]\n\
         plan = packed\n\
         theta_min = 12\n\
         theta_max = 120\n\
         count = 36\n\
         centers = 45; 95\n\
         fraction = 0.56\n\
         \n\
         [clustering]\n\
         k = 3\n",
        &artifacts,
    );

    let snapshots = SnapshotSet::load(&artifacts.join(SNAPSHOTS_DIR)).expect("stored snapshots");
    let session = OnlineSession::load(&artifacts).expect("online session");
    assert_eq!(session.cluster_count(), 3);

    // Every stored solution's hump count matches its scheduled branch.
    for (s, branch) in snapshots.branches.iter().enumerate() {
        let BranchId::Mode(m) = branch else {
            panic!("unexpected branch {branch} in a modal run");
        };
        assert_eq!(hump_count(snapshots.column(s)), *m as usize);
        assert_eq!(schedule_mode(snapshots.params.points[s]), *m);
    }

    // Cluster <-> branch bijection on the training set.
    let mut cluster_mode = vec![0u32; 3];
    for (k, cluster_thetas) in session
        .parameter_clusters()
        .cluster_params
        .iter()
        .enumerate()
    {
        let modes: Vec<u32> = cluster_thetas
            .iter()
            .map(|theta| {
                let s = snapshots
                    .params
                    .points
                    .iter()
                    .position(|p| p == theta)
                    .expect("cluster parameter is a training sample");
                match snapshots.branches[s] {
                    BranchId::Mode(m) => m,
                    ref other => panic!("unexpected branch {other}"),
                }
            })
            .collect();
        assert!(
            modes.windows(2).all(|w| w[0] == w[1]),
            "cluster {k} mixes branches: {modes:?}"
        );
        cluster_mode[k] = modes[0];
    }
    let mut seen = cluster_mode.clone();
    seen.sort_unstable();
    assert_eq!(
        seen,
        vec![1, 2, 3],
        "clusters do not cover the three branches"
    );

    let held_out = default_held_out(&snapshots.params.points, 40);
    assert_eq!(held_out.len(), 40);
    let report = run_errors(&artifacts, Some(&held_out)).expect("error study");

    let mut mean_criterion_misses = 0usize;
    for row in &report.rows {
        let truth = schedule_mode(row.theta);
        assert_eq!(
            cluster_mode[row.cluster_midrange], truth,
            "midrange criterion mis-assigned theta {}",
            row.theta
        );
        if cluster_mode[row.cluster_mean] != truth {
            mean_criterion_misses += 1;
        }
        if row.fom_converged {
            assert!(
                row.local_error <= row.global2_error,
                "theta {}: local {:.3e} vs max-size global {:.3e}",
                row.theta,
                row.local_error,
                row.global2_error
            );
        }
    }
    println!(
        "modal pipeline: PASS (midrange misses 0; mean criterion misses {} of {} — reported \
         only; local <= global-2 pointwise)",
        mean_criterion_misses,
        report.rows.len()
    );
}

/// Combined-basis bookkeeping: the sum-size global basis has exactly the sum
/// of the local sizes and the max-size global basis exactly the largest, here
/// (11, 7, 21) -> 39 and 21.
#[test]
fn global_basis_bookkeeping() {
    let n = 64;
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC6);
    let matrix = random_matrix(&mut rng, n, 62);
    let model_spec = ModelSpec::Pitchfork {
        n_interior: n,
        domain_length: 1.0,
        branch: BranchId::Lower,
    };
    let model = model_spec.build().expect("model");
    let snapshots = SnapshotSet {
        matrix,
        params: ParameterSet {
            points: (0..62).map(|i| 10.0 + i as f64).collect(),
            provenance: SamplingPlan::Uniform {
                range: (10.0, 71.0),
                count: 62,
            },
        },
        branches: vec![BranchId::Lower; 62],
        steady_tol: STEADY_TOL_DEFAULT,
        model_spec,
        observable_index: model.observable_index(),
    };

    let group_sizes = [20usize, 20, 22];
    let wanted = [11usize, 7, 21];
    let mut start = 0;
    let mut local_bases: Vec<LocalBasis> = Vec::new();
    for (k, (&size, &l)) in group_sizes.iter().zip(wanted.iter()).enumerate() {
        let cols: Vec<Vec<f64>> = (start..start + size)
            .map(|j| snapshots.column(j).to_vec())
            .collect();
        let cluster = DenseMatrix::from_columns(&cols).expect("cluster columns");
        let basis = build_basis(&cluster, k, TruncationRule::Fixed { l }).expect("local basis");
        assert_eq!(basis.len(), l);
        start += size;
        local_bases.push(basis);
    }

    let globals = build_global_roms(model.as_ref(), &snapshots, &local_bases).expect("globals");
    let sum: usize = wanted.iter().sum();
    let max: usize = *wanted.iter().max().expect("nonempty");
    assert_eq!(globals.global1.basis.len(), sum);
    assert_eq!(globals.global1.reduced.l, sum);
    assert_eq!(globals.global2.basis.len(), max);
    assert_eq!(globals.global2.reduced.l, max);
    assert!(!globals.rank_truncated);
    println!("global bookkeeping: PASS (sizes {sum} and {max})");
}

/// Online cost split: with artifacts loaded, reduced queries touch only
/// reduced-size state until the final lift, so a 100-point reduced sweep must
/// run at least 20x faster than the matching full-order sweep at n = 256.
#[test]
fn online_cost_split() {
    let dir = TempDir::new().expect("tempdir");
    let artifacts = dir.path().join("artifacts");
    run_offline_from(
        "[model]\n\
         kind = pitchfork\n\
         n_interior = 256\n\
         branch = lower\n\
         \n\
         [sampling]\n\
         plan = uniform\n\
         theta_min = 14\n\
         theta_max = 24\n\
         count = 24\n\
         \n\
         [clustering]\n\
         k = 3\n",
        &artifacts,
    );

    let thetas: Vec<f64> = (1..=100)
        .map(|i| 14.0 + 10.0 * (2 * i - 1) as f64 / 200.0)
        .collect();

    let session = OnlineSession::load(&artifacts).expect("online session");
    let criterion = session.default_criterion();
    // Untimed pass to warm the worker pool and caches.
    session.sweep(&thetas, criterion).expect("warm-up sweep");
    let reduced_start = Instant::now();
    let diagram = session.sweep(&thetas, criterion).expect("reduced sweep");
    let reduced_time = reduced_start.elapsed();
    assert_eq!(diagram.rows.len(), 100);
    assert!(diagram.rows.iter().all(|r| r.converged));

    let params = generate_samples(&SamplingPlan::Explicit {
        range: (14.0, 24.0),
        points: thetas.clone(),
    })
    .expect("full sweep parameters");
    let spec = ModelSpec::Pitchfork {
        n_interior: 256,
        domain_length: 1.0,
        branch: BranchId::Lower,
    };
    let full_start = Instant::now();
    let full = generate_snapshots(&spec, &params, STEADY_TOL_DEFAULT, STEADY_MAX_ITER_DEFAULT)
        .expect("full sweep");
    let full_time = full_start.elapsed();
    assert_eq!(full.len(), 100);

    let ratio = reduced_time.as_secs_f64() / full_time.as_secs_f64();
    assert!(
        ratio <= 1.0 / ONLINE_SPEEDUP_MIN,
        "reduced sweep {reduced_time:?} vs full sweep {full_time:?} (ratio {ratio:.4})"
    );
    println!(
        "online cost split: PASS (reduced {:?} vs full {:?}, {:.0}x)",
        reduced_time,
        full_time,
        1.0 / ratio
    );
}

/// Identical config and seed produce bit-identical snapshots, cluster
/// assignment, and diagram CSV across two independent runs.
#[test]
fn rerun_determinism() {
    let config = "[model]\n\
         kind = pitchfork\n\
         n_interior = 48\n\
         branch = lower\n\
         \n\
         [sampling]\n\
         plan = uniform\n\
         theta_min = 14\n\
         theta_max = 24\n\
         count = 16\n\
         \n\
         [clustering]\n\
         k = 3\n\
         seed = 7\n";
    let thetas: Vec<f64> = (0..30).map(|i| 14.2 + 9.6 * i as f64 / 29.0).collect();

    let mut artifacts = Vec::new();
    let mut dirs = Vec::new();
    for run in 0..2 {
        let dir = TempDir::new().expect("tempdir");
        let out = dir.path().join("artifacts");
        run_offline_from(config, &out);
        let diagram = run_online(&out, &thetas, None).expect("diagram");
        let csv_path = dir.path().join(format!("diagram_{run}.csv"));
        write_diagram_csv(&csv_path, &diagram).expect("diagram csv");
        artifacts.push((out, csv_path));
        dirs.push(dir);
    }

    let read = |p: &Path| std::fs::read(p).expect("artifact bytes");
    let (a, b) = (&artifacts[0], &artifacts[1]);
    assert_eq!(
        read(&a.0.join(SNAPSHOTS_DIR).join("snapshots.mat")),
        read(&b.0.join(SNAPSHOTS_DIR).join("snapshots.mat")),
        "snapshot matrices differ between identical runs"
    );
    assert_eq!(
        read(&a.0.join(CLUSTERING_DIR).join(CLUSTERS_FILE)),
        read(&b.0.join(CLUSTERING_DIR).join(CLUSTERS_FILE)),
        "cluster assignments differ between identical runs"
    );
    assert_eq!(
        read(&a.1),
        read(&b.1),
        "diagram CSVs differ between identical runs"
    );
    println!("determinism: PASS (snapshots, clusters, diagram bit-identical)");
}
