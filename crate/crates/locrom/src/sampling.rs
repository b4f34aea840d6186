//! Parameter sampling plans: uniform sweeps, sweeps packed near parameter
//! values of interest (bifurcation points), and explicit lists.

use thiserror::Error;

/// Points closer than this are considered duplicates.
pub const DUPLICATE_TOL: f64 = 1e-12;
/// Default half-width of a packed band, as a fraction of the range width.
pub const DEFAULT_PACK_BAND: f64 = 0.02;

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("invalid sampling plan: {0}")]
    InvalidPlan(String),
    #[error("points outside the sampling range [{lo}, {hi}]: {offenders:?}")]
    OutOfDomain {
        lo: f64,
        hi: f64,
        offenders: Vec<f64>,
    },
    #[error("explicit point list contains duplicates near {value}")]
    Duplicate { value: f64 },
}

/// How training parameter values are laid out over a closed interval.
#[derive(Debug, Clone, PartialEq)]
pub enum SamplingPlan {
    /// `count` points equally spaced over `range`, endpoints included.
    Uniform { range: (f64, f64), count: usize },
    /// A uniform backbone plus a fraction of the budget packed into narrow
    /// bands around the given centers (e.g. expected bifurcation points).
    Packed {
        range: (f64, f64),
        count: usize,
        centers: Vec<f64>,
        /// Fraction of `count` spent on the packed bands, in (0, 1).
        fraction: f64,
        /// Half-width of each band as a fraction of the range width.
        band: f64,
    },
    /// A caller-provided list, validated against `range`.
    Explicit { range: (f64, f64), points: Vec<f64> },
}

/// Sorted training parameter values with the plan that produced them.
#[derive(Debug, Clone)]
pub struct ParameterSet {
    pub points: Vec<f64>,
    pub provenance: SamplingPlan,
}

impl ParameterSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Convex hull of the sampled values.
    pub fn hull(&self) -> (f64, f64) {
        (self.points[0], self.points[self.points.len() - 1])
    }
}

fn check_range(range: (f64, f64)) -> Result<(), SamplingError> {
    let (lo, hi) = range;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(SamplingError::InvalidPlan(format!(
            "range [{lo}, {hi}] is not a nonempty finite interval"
        )));
    }
    Ok(())
}

fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count as f64 - 1.0))
            .collect(),
    }
}

fn sort_dedup(mut points: Vec<f64>) -> Vec<f64> {
    points.sort_by(|a, b| a.partial_cmp(b).unwrap());
    points.dedup_by(|a, b| (*a - *b).abs() <= DUPLICATE_TOL);
    points
}

/// Expands a plan into sorted, strictly increasing parameter values.
///
/// Uniform and packed plans silently drop collision duplicates (so the output
/// may be shorter than requested); explicit lists treat duplicates as an
/// error in the caller's data.
pub fn generate_samples(plan: &SamplingPlan) -> Result<ParameterSet, SamplingError> {
    let points = match plan {
        SamplingPlan::Uniform { range, count } => {
            check_range(*range)?;
            if *count < 2 {
                return Err(SamplingError::InvalidPlan(format!(
                    "uniform plan needs at least 2 points, got {count}"
                )));
            }
            sort_dedup(linspace(range.0, range.1, *count))
        }
        SamplingPlan::Packed {
            range,
            count,
            centers,
            fraction,
            band,
        } => {
            check_range(*range)?;
            if *count < 2 {
                return Err(SamplingError::InvalidPlan(format!(
                    "packed plan needs at least 2 points, got {count}"
                )));
            }
            if !(*fraction > 0.0 && *fraction < 1.0) {
                return Err(SamplingError::InvalidPlan(format!(
                    "packed fraction must lie in (0, 1), got {fraction}"
                )));
            }
            if !(*band > 0.0 && *band < 0.5) {
                return Err(SamplingError::InvalidPlan(format!(
                    "packed band must lie in (0, 0.5), got {band}"
                )));
            }
            if centers.is_empty() {
                return Err(SamplingError::InvalidPlan(
                    "packed plan has no centers".into(),
                ));
            }
            if *count < centers.len() + 2 {
                return Err(SamplingError::InvalidPlan(format!(
                    "packed plan needs at least {} points for {} centers plus a \
                     2-point uniform backbone, got {count}",
                    centers.len() + 2,
                    centers.len()
                )));
            }
            let (lo, hi) = *range;
            let outside: Vec<f64> = centers
                .iter()
                .copied()
                .filter(|c| *c < lo || *c > hi)
                .collect();
            if !outside.is_empty() {
                return Err(SamplingError::OutOfDomain {
                    lo,
                    hi,
                    offenders: outside,
                });
            }
            let packed_total = ((*count as f64) * fraction).round() as usize;
            let packed_total = packed_total.clamp(centers.len(), count - 2);
            let uniform_count = count - packed_total;
            let mut points = linspace(lo, hi, uniform_count);
            let width = (hi - lo) * band;
            // Split the packed budget as evenly as possible across centers.
            let per_center = packed_total / centers.len();
            let mut remainder = packed_total % centers.len();
            for c in centers {
                let mut share = per_center;
                if remainder > 0 {
                    share += 1;
                    remainder -= 1;
                }
                if share == 0 {
                    continue;
                }
                let band_lo = (c - width).max(lo);
                let band_hi = (c + width).min(hi);
                points.extend(linspace(band_lo, band_hi, share));
            }
            sort_dedup(points)
        }
        SamplingPlan::Explicit { range, points } => {
            check_range(*range)?;
            if points.is_empty() {
                return Err(SamplingError::InvalidPlan(
                    "explicit plan has no points".into(),
                ));
            }
            let (lo, hi) = *range;
            let outside: Vec<f64> = points
                .iter()
                .copied()
                .filter(|p| !p.is_finite() || *p < lo || *p > hi)
                .collect();
            if !outside.is_empty() {
                return Err(SamplingError::OutOfDomain {
                    lo,
                    hi,
                    offenders: outside,
                });
            }
            let mut sorted = points.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for w in sorted.windows(2) {
                if (w[1] - w[0]).abs() <= DUPLICATE_TOL {
                    return Err(SamplingError::Duplicate { value: w[0] });
                }
            }
            sorted
        }
    };
    Ok(ParameterSet {
        points,
        provenance: plan.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_includes_endpoints() {
        let set = generate_samples(&SamplingPlan::Uniform {
            range: (2.0, 30.0),
            count: 15,
        })
        .unwrap();
        assert_eq!(set.len(), 15);
        assert_eq!(set.points[0], 2.0);
        assert_eq!(set.points[14], 30.0);
    }

    #[test]
    fn packed_places_the_requested_share_in_the_band() {
        let set = generate_samples(&SamplingPlan::Packed {
            range: (0.0, 100.0),
            count: 10,
            centers: vec![33.0],
            fraction: 0.4,
            band: DEFAULT_PACK_BAND,
        })
        .unwrap();
        assert_eq!(set.len(), 10);
        let in_band = set
            .points
            .iter()
            .filter(|&&p| (p - 33.0).abs() <= 2.0 + 1e-12)
            .count();
        assert_eq!(in_band, 4, "packed points: {:?}", set.points);
        for w in set.points.windows(2) {
            assert!(w[1] - w[0] > DUPLICATE_TOL);
        }
    }

    #[test]
    fn explicit_duplicates_are_an_error() {
        let err = generate_samples(&SamplingPlan::Explicit {
            range: (0.0, 10.0),
            points: vec![5.0, 3.0, 3.0],
        });
        assert!(matches!(err, Err(SamplingError::Duplicate { .. })));
    }

    #[test]
    fn explicit_out_of_range_lists_offenders() {
        let err = generate_samples(&SamplingPlan::Explicit {
            range: (0.0, 10.0),
            points: vec![5.0, 11.0, -2.0],
        });
        match err {
            Err(SamplingError::OutOfDomain { offenders, .. }) => {
                assert_eq!(offenders, vec![11.0, -2.0]);
            }
            other => panic!("expected out-of-domain error, got {other:?}"),
        }
    }

    #[test]
    fn explicit_is_sorted() {
        let set = generate_samples(&SamplingPlan::Explicit {
            range: (0.0, 10.0),
            points: vec![7.0, 1.0, 4.0],
        })
        .unwrap();
        assert_eq!(set.points, vec![1.0, 4.0, 7.0]);
    }

    #[test]
    fn degenerate_ranges_are_rejected() {
        assert!(matches!(
            generate_samples(&SamplingPlan::Uniform {
                range: (3.0, 3.0),
                count: 5
            }),
            Err(SamplingError::InvalidPlan(_))
        ));
        assert!(matches!(
            generate_samples(&SamplingPlan::Uniform {
                range: (0.0, f64::INFINITY),
                count: 5
            }),
            Err(SamplingError::InvalidPlan(_))
        ));
    }

    proptest! {
        #[test]
        fn outputs_are_strictly_increasing_and_in_range(
            lo in -50.0..50.0f64,
            width in 1.0..100.0f64,
            count in 3usize..40,
            fraction in 0.1..0.9f64,
            center_t in 0.0..1.0f64,
        ) {
            let hi = lo + width;
            let plans = vec![
                SamplingPlan::Uniform { range: (lo, hi), count },
                SamplingPlan::Packed {
                    range: (lo, hi),
                    count,
                    centers: vec![lo + center_t * width],
                    fraction,
                    band: DEFAULT_PACK_BAND,
                },
            ];
            for plan in plans {
                let set = generate_samples(&plan).unwrap();
                prop_assert!(set.len() <= count);
                prop_assert!(!set.is_empty());
                for w in set.points.windows(2) {
                    prop_assert!(w[1] > w[0] + DUPLICATE_TOL);
                }
                for &p in &set.points {
                    prop_assert!(p >= lo - 1e-12 && p <= hi + 1e-12);
                }
            }
        }
    }
}
