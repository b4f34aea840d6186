//! Steady Chafee-Infante models on a uniform 1-D grid: a single-branch
//! pitchfork model and a multi-branch modal model driven by a branch schedule.
//!
//! Both discretize `u'' + theta * (u - u^3) = 0` with zero Dirichlet ends by
//! central differences on `n` interior points, giving the decomposition
//! `A0 = tridiag(1, -2, 1)/h^2`, `A1 = I`, a diagonal cubic tensor with
//! entries `-1` that is scaled by `theta` at evaluation, and zero loads.

use super::{
    hump_count, BranchId, CubicTerm, FullOrderModel, ModelError, OperatorDecomposition,
    SparseTensor4, TRIVIAL_BRANCH_TOL,
};
use crate::linalg::DenseMatrix;
use std::f64::consts::PI;

/// Seed amplitude used where the local branch amplitude estimate is not
/// positive (at or below the branch's critical parameter).
const SEED_FALLBACK_AMPLITUDE: f64 = 0.1;
/// Fraction of the domain length at which the pitchfork observable is read.
const PITCHFORK_OBSERVABLE_FRACTION: f64 = 0.3;
/// Fraction of the domain length at which the modal observable is read.
const MODAL_OBSERVABLE_FRACTION: f64 = 0.7;

/// Uniform interior grid for the unit-interval-style discretizations.
#[derive(Debug, Clone)]
struct Grid {
    n: usize,
    h: f64,
    len: f64,
}

impl Grid {
    fn new(n_interior: usize, domain_length: f64) -> Result<Self, ModelError> {
        if n_interior < 3 {
            return Err(ModelError::InvalidInput(format!(
                "need at least 3 interior points, got {n_interior}"
            )));
        }
        if !(domain_length.is_finite() && domain_length > 0.0) {
            return Err(ModelError::InvalidInput(format!(
                "domain length must be positive and finite, got {domain_length}"
            )));
        }
        let h = domain_length / (n_interior as f64 + 1.0);
        Ok(Grid {
            n: n_interior,
            h,
            len: domain_length,
        })
    }

    fn x(&self, i: usize) -> f64 {
        (i as f64 + 1.0) * self.h
    }

    /// Smallest discrete eigenvalue index `k` of `-Laplacian_h` is
    /// `(2/h^2) * (1 - cos(k*pi/(n+1)))`.
    fn discrete_eigenvalue(&self, k: u32) -> f64 {
        (2.0 / (self.h * self.h)) * (1.0 - (k as f64 * PI / (self.n as f64 + 1.0)).cos())
    }

    /// Grid index nearest `x_target`; ties resolve to the lower index.
    fn nearest_index(&self, x_target: f64) -> usize {
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for i in 0..self.n {
            let d = (self.x(i) - x_target).abs();
            if d < best_dist {
                best_dist = d;
                best = i;
            }
        }
        best
    }

    fn sine_mode(&self, k: u32, amplitude: f64) -> Vec<f64> {
        (0..self.n)
            .map(|i| amplitude * (k as f64 * PI * self.x(i) / self.len).sin())
            .collect()
    }

    /// First-order amplitude of the mode-`k` branch at `theta`, from the
    /// leading balance `(theta - lambda_k) a = (3/4) theta a^3`. Used to place
    /// Newton seeds inside the intended branch's basin; a fixed small
    /// amplitude sits in the trivial solution's basin instead.
    fn branch_amplitude(&self, theta: f64, k: u32) -> f64 {
        let lambda = self.discrete_eigenvalue(k);
        if theta > lambda && theta > 0.0 {
            ((4.0 / 3.0) * (theta - lambda) / theta).sqrt()
        } else {
            SEED_FALLBACK_AMPLITUDE
        }
    }
}

fn assemble_operators(grid: &Grid) -> OperatorDecomposition {
    let n = grid.n;
    let inv_h2 = 1.0 / (grid.h * grid.h);
    let mut a0 = DenseMatrix::zeros(n, n);
    for i in 0..n {
        a0.set(i, i, -2.0 * inv_h2);
        if i + 1 < n {
            a0.set(i, i + 1, inv_h2);
            a0.set(i + 1, i, inv_h2);
        }
    }
    let mut ops = OperatorDecomposition::linear(a0, DenseMatrix::identity(n));
    ops.cubic = Some(CubicTerm {
        tensor: SparseTensor4 {
            dim: n,
            entries: (0..n).map(|i| ([i, i, i, i], -1.0)).collect(),
        },
        theta_scaled: true,
    });
    ops
}

/// Pitchfork model: the trivial solution loses stability at the smallest
/// eigenvalue of the discrete negative Laplacian, where a symmetric pair of
/// nonzero branches appears. Snapshot generation tracks one configured branch.
#[derive(Debug, Clone)]
pub struct PitchforkModel {
    grid: Grid,
    ops: OperatorDecomposition,
    tracked_branch: BranchId,
    observable_index: usize,
    critical_theta: f64,
}

pub fn make_pitchfork_model(
    n_interior: usize,
    domain_length: f64,
) -> Result<PitchforkModel, ModelError> {
    let grid = Grid::new(n_interior, domain_length)?;
    let ops = assemble_operators(&grid);
    let observable_index = grid.nearest_index(PITCHFORK_OBSERVABLE_FRACTION * domain_length);
    let critical_theta = grid.discrete_eigenvalue(1);
    Ok(PitchforkModel {
        grid,
        ops,
        tracked_branch: BranchId::Lower,
        observable_index,
        critical_theta,
    })
}

impl PitchforkModel {
    /// Chooses which nonzero branch snapshot generation follows.
    pub fn with_tracked_branch(mut self, branch: BranchId) -> Result<Self, ModelError> {
        match branch {
            BranchId::Lower | BranchId::Upper | BranchId::Trivial => {
                self.tracked_branch = branch;
                Ok(self)
            }
            BranchId::Mode(_) => Err(ModelError::InvalidInput(
                "pitchfork model has no modal branches".into(),
            )),
        }
    }

    /// Parameter value where the trivial solution loses uniqueness:
    /// the smallest eigenvalue of the discrete negative Laplacian,
    /// `(2/h^2) * (1 - cos(pi/(n+1)))`.
    pub fn critical_theta(&self) -> f64 {
        self.critical_theta
    }

    pub fn grid_spacing(&self) -> f64 {
        self.grid.h
    }
}

impl FullOrderModel for PitchforkModel {
    fn name(&self) -> &str {
        "pitchfork"
    }

    fn dim(&self) -> usize {
        self.grid.n
    }

    fn parameter_domain(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }

    fn operators(&self) -> &OperatorDecomposition {
        &self.ops
    }

    fn snapshot_branch(&self, theta: f64) -> BranchId {
        if theta <= self.critical_theta {
            BranchId::Trivial
        } else {
            self.tracked_branch
        }
    }

    fn branch_seed(&self, theta: f64, branch: BranchId) -> Vec<f64> {
        match branch {
            BranchId::Trivial => vec![0.0; self.grid.n],
            BranchId::Upper => self.grid.sine_mode(1, self.grid.branch_amplitude(theta, 1)),
            BranchId::Lower => self
                .grid
                .sine_mode(1, -self.grid.branch_amplitude(theta, 1)),
            BranchId::Mode(k) => self.grid.sine_mode(k, self.grid.branch_amplitude(theta, k)),
        }
    }

    fn classify_branch(&self, u: &[f64]) -> BranchId {
        let amp = u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if amp <= TRIVIAL_BRANCH_TOL {
            BranchId::Trivial
        } else if u[self.observable_index] >= 0.0 {
            BranchId::Upper
        } else {
            BranchId::Lower
        }
    }

    fn observable_index(&self) -> usize {
        self.observable_index
    }

    fn residual_norm_weight(&self) -> f64 {
        self.grid.h
    }
}

/// One scheduled branch segment: parameter values in `[lo, hi)` (closed at
/// `hi` for the final segment) follow the `mode`-hump branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleSegment {
    pub mode: u32,
    pub lo: f64,
    pub hi: f64,
}

/// Modal model on the unit interval: a branch schedule assigns each parameter
/// range a hump count, and snapshots deliberately follow those (possibly
/// dynamically unstable) branches.
#[derive(Debug, Clone)]
pub struct ModalModel {
    grid: Grid,
    ops: OperatorDecomposition,
    schedule: Vec<ScheduleSegment>,
    observable_index: usize,
}

pub fn default_branch_schedule() -> Vec<ScheduleSegment> {
    vec![
        ScheduleSegment {
            mode: 1,
            lo: 12.0,
            hi: 45.0,
        },
        ScheduleSegment {
            mode: 2,
            lo: 45.0,
            hi: 95.0,
        },
        ScheduleSegment {
            mode: 3,
            lo: 95.0,
            hi: 120.0,
        },
    ]
}

pub fn make_modal_model(
    n_interior: usize,
    schedule: Vec<ScheduleSegment>,
) -> Result<ModalModel, ModelError> {
    let grid = Grid::new(n_interior, 1.0)?;
    if schedule.is_empty() {
        return Err(ModelError::InvalidSchedule("schedule is empty".into()));
    }
    for seg in &schedule {
        if seg.mode == 0 {
            return Err(ModelError::InvalidSchedule(
                "mode numbers start at 1".into(),
            ));
        }
        if !(seg.lo.is_finite() && seg.hi.is_finite() && seg.lo < seg.hi) {
            return Err(ModelError::InvalidSchedule(format!(
                "segment for mode {} has an empty or unbounded interval [{}, {})",
                seg.mode, seg.lo, seg.hi
            )));
        }
        // Existence: the mode-k branch only exists above its continuum
        // threshold (k*pi/l)^2, which dominates the discrete one.
        let threshold = (seg.mode as f64 * PI / grid.len).powi(2);
        if threshold >= seg.lo {
            return Err(ModelError::InvalidSchedule(format!(
                "mode {} needs theta > {:.4}, but its interval starts at {}",
                seg.mode, threshold, seg.lo
            )));
        }
    }
    for pair in schedule.windows(2) {
        if pair[0].hi > pair[1].lo {
            return Err(ModelError::InvalidSchedule(format!(
                "segments overlap or are out of order near theta = {}",
                pair[1].lo
            )));
        }
        if pair[0].hi < pair[1].lo {
            return Err(ModelError::InvalidSchedule(format!(
                "schedule leaves theta in [{}, {}) without a branch",
                pair[0].hi, pair[1].lo
            )));
        }
    }
    let ops = assemble_operators(&grid);
    let observable_index = grid.nearest_index(MODAL_OBSERVABLE_FRACTION * grid.len);
    Ok(ModalModel {
        grid,
        ops,
        schedule,
        observable_index,
    })
}

impl ModalModel {
    pub fn schedule(&self) -> &[ScheduleSegment] {
        &self.schedule
    }

    fn segment_of(&self, theta: f64) -> Option<&ScheduleSegment> {
        let last = self.schedule.len() - 1;
        self.schedule.iter().enumerate().find_map(|(i, seg)| {
            let inside = if i == last {
                theta >= seg.lo && theta <= seg.hi
            } else {
                theta >= seg.lo && theta < seg.hi
            };
            inside.then_some(seg)
        })
    }
}

impl FullOrderModel for ModalModel {
    fn name(&self) -> &str {
        "modal"
    }

    fn dim(&self) -> usize {
        self.grid.n
    }

    fn parameter_domain(&self) -> (f64, f64) {
        (
            self.schedule[0].lo,
            self.schedule[self.schedule.len() - 1].hi,
        )
    }

    fn operators(&self) -> &OperatorDecomposition {
        &self.ops
    }

    fn snapshot_branch(&self, theta: f64) -> BranchId {
        let seg = self
            .segment_of(theta)
            .expect("theta outside the scheduled parameter domain");
        BranchId::Mode(seg.mode)
    }

    fn branch_seed(&self, theta: f64, branch: BranchId) -> Vec<f64> {
        match branch {
            BranchId::Trivial => vec![0.0; self.grid.n],
            BranchId::Mode(k) => self.grid.sine_mode(k, self.grid.branch_amplitude(theta, k)),
            // The symmetric pair of the fundamental mode.
            BranchId::Upper => self.grid.sine_mode(1, self.grid.branch_amplitude(theta, 1)),
            BranchId::Lower => self
                .grid
                .sine_mode(1, -self.grid.branch_amplitude(theta, 1)),
        }
    }

    fn classify_branch(&self, u: &[f64]) -> BranchId {
        let amp = u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if amp <= TRIVIAL_BRANCH_TOL {
            BranchId::Trivial
        } else {
            BranchId::Mode(hump_count(u) as u32)
        }
    }

    fn observable_index(&self) -> usize {
        self.observable_index
    }

    fn residual_norm_weight(&self) -> f64 {
        self.grid.h
    }
}
