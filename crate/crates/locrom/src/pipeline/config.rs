//! Line-oriented `key = value` configuration with bracketed sections.
//!
//! ```text
//! [model]
//! kind = pitchfork            # or `modal`
//! n_interior = 64
//! domain_length = 1.0         # pitchfork only, optional (default 1.0)
//! branch = lower              # pitchfork only, optional (default lower)
//! schedule = 1:12:45,2:45:95  # modal only: mode:lo:hi segments
//!
//! [sampling]
//! plan = packed               # uniform | packed | explicit
//! theta_min = 5.0             # uniform/packed
//! theta_max = 15.0
//! count = 40
//! centers = 9.86              # packed: `;`-separated band centers
//! fraction = 0.5              # packed: share of count inside the bands
//! band = 0.02                 # packed: band half-width / range width
//! points = 5.0,7.5,10.0       # explicit only
//!
//! [solver]
//! steady_tol = 1e-10          # optional
//! max_iter = 50               # optional
//!
//! [clustering]
//! k = 3                       # either a fixed count ...
//! elbow_kmax = 10             # ... or an elbow scan bound (not both)
//! elbow_alpha = 0.05          # optional with elbow_kmax
//! restarts = 10               # optional
//! max_iter = 300              # optional
//! seed = 0                    # optional
//!
//! [pod]
//! rule = energy,1e-8          # or fixed,7; optional
//!
//! [rom]
//! rom_tol = 1e-10             # optional
//! max_iter = 3000             # optional
//! scheme = newton             # optional: newton | picard
//! criterion = midrange        # optional: mean | midrange
//!
//! [output]
//! dir = artifacts             # optional; the CLI flag overrides it
//! ```
//!
//! Unknown sections and keys are rejected, as are keys outside any section.

use crate::assignment::AssignmentCriterion;
use crate::clustering::{ELBOW_ALPHA_DEFAULT, KMEANS_MAX_ITER_DEFAULT, KMEANS_RESTARTS_DEFAULT};
use crate::fom::{BranchId, ModelSpec, STEADY_MAX_ITER_DEFAULT, STEADY_TOL_DEFAULT};
use crate::podbasis::{TruncationRule, ENERGY_TOL_DEFAULT};
use crate::rom::{RomScheme, ROM_MAX_ITER_DEFAULT, ROM_TOL_DEFAULT};
use crate::sampling::{SamplingPlan, DEFAULT_PACK_BAND};
use crate::snapshots::parse_schedule;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("config line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("config section [{section}]: {message}")]
    Section { section: String, message: String },
}

/// How the number of clusters is decided.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClusterChoice {
    Fixed { k: usize },
    Elbow { k_max: usize, alpha: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub model: ModelSpec,
    pub plan: SamplingPlan,
    pub steady_tol: f64,
    pub steady_max_iter: usize,
    pub clustering: ClusterChoice,
    pub restarts: usize,
    pub kmeans_max_iter: usize,
    pub seed: u64,
    pub rule: TruncationRule,
    pub criterion: AssignmentCriterion,
    pub rom_tol: f64,
    pub rom_max_iter: usize,
    pub scheme: RomScheme,
    /// Output directory from the `[output]` section; a CLI `--out` flag wins.
    pub out_dir: Option<PathBuf>,
}

/// One parsed section: key -> (value, line number), plus consumption marks so
/// unknown keys can be reported precisely.
struct Section {
    name: String,
    entries: BTreeMap<String, (String, usize)>,
}

impl Section {
    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        self.entries.remove(key)
    }

    fn finish(self) -> Result<(), ConfigError> {
        if let Some((key, (_, line))) = self.entries.into_iter().next() {
            return Err(ConfigError::Syntax {
                line,
                message: format!("unknown key `{key}` in section [{}]", self.name),
            });
        }
        Ok(())
    }
}

fn section_err(section: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Section {
        section: section.to_string(),
        message: message.into(),
    }
}

fn parse_value<T: std::str::FromStr>(
    section: &str,
    key: &str,
    entry: Option<(String, usize)>,
) -> Result<Option<T>, ConfigError> {
    match entry {
        None => Ok(None),
        Some((value, line)) => value.parse().map(Some).map_err(|_| ConfigError::Syntax {
            line,
            message: format!("bad value for `{key}` in section [{section}]"),
        }),
    }
}

fn require<T>(section: &str, key: &str, value: Option<T>) -> Result<T, ConfigError> {
    value.ok_or_else(|| section_err(section, format!("missing required key `{key}`")))
}

pub fn parse_config_file(path: &Path) -> Result<PipelineConfig, ConfigError> {
    parse_config(&std::fs::read_to_string(path)?)
}

pub fn parse_config(text: &str) -> Result<PipelineConfig, ConfigError> {
    let mut sections: BTreeMap<String, Section> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let lineno = lineno + 1;
        if let Some(name) = line.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or(ConfigError::Syntax {
                line: lineno,
                message: "unterminated section header".into(),
            })?;
            let name = name.trim().to_string();
            if !matches!(
                name.as_str(),
                "model" | "sampling" | "solver" | "clustering" | "pod" | "rom" | "output"
            ) {
                return Err(ConfigError::Syntax {
                    line: lineno,
                    message: format!("unknown section [{name}]"),
                });
            }
            if sections.contains_key(&name) {
                return Err(ConfigError::Syntax {
                    line: lineno,
                    message: format!("duplicate section [{name}]"),
                });
            }
            sections.insert(
                name.clone(),
                Section {
                    name: name.clone(),
                    entries: BTreeMap::new(),
                },
            );
            current = Some(name);
            continue;
        }
        let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax {
            line: lineno,
            message: "expected `key = value` or a `[section]` header".into(),
        })?;
        let section = current.as_ref().ok_or(ConfigError::Syntax {
            line: lineno,
            message: "key outside any section".into(),
        })?;
        let section = sections.get_mut(section).expect("current section exists");
        let key = key.trim().to_string();
        if section.entries.contains_key(&key) {
            return Err(ConfigError::Syntax {
                line: lineno,
                message: format!("duplicate key `{key}` in section [{}]", section.name),
            });
        }
        section
            .entries
            .insert(key, (value.trim().to_string(), lineno));
    }

    let mut take_section = |name: &str| {
        sections.remove(name).unwrap_or(Section {
            name: name.to_string(),
            entries: BTreeMap::new(),
        })
    };

    // [model]
    let mut model_sec = take_section("model");
    let kind: String = require(
        "model",
        "kind",
        parse_value("model", "kind", model_sec.take("kind"))?,
    )?;
    let n_interior: usize = require(
        "model",
        "n_interior",
        parse_value("model", "n_interior", model_sec.take("n_interior"))?,
    )?;
    let model = match kind.as_str() {
        "pitchfork" => {
            let domain_length =
                parse_value("model", "domain_length", model_sec.take("domain_length"))?
                    .unwrap_or(1.0);
            let branch = match model_sec.take("branch") {
                None => BranchId::Lower,
                Some((value, line)) => match value.as_str() {
                    "trivial" => BranchId::Trivial,
                    "upper" => BranchId::Upper,
                    "lower" => BranchId::Lower,
                    other => {
                        return Err(ConfigError::Syntax {
                            line,
                            message: format!(
                                "bad branch {other:?} (expected trivial, upper, or lower)"
                            ),
                        })
                    }
                },
            };
            ModelSpec::Pitchfork {
                n_interior,
                domain_length,
                branch,
            }
        }
        "modal" => {
            let (value, line) = model_sec
                .take("schedule")
                .ok_or_else(|| section_err("model", "modal models need a `schedule` key"))?;
            let schedule = parse_schedule(&value).map_err(|e| ConfigError::Syntax {
                line,
                message: e.to_string(),
            })?;
            ModelSpec::Modal {
                n_interior,
                schedule,
            }
        }
        other => {
            return Err(section_err(
                "model",
                format!("unknown model kind {other:?} (expected pitchfork or modal)"),
            ))
        }
    };
    model_sec.finish()?;

    // [sampling]
    let mut sampling = take_section("sampling");
    let plan_kind: String = require(
        "sampling",
        "plan",
        parse_value("sampling", "plan", sampling.take("plan"))?,
    )?;
    let plan = match plan_kind.as_str() {
        "uniform" | "packed" => {
            let theta_min: f64 = require(
                "sampling",
                "theta_min",
                parse_value("sampling", "theta_min", sampling.take("theta_min"))?,
            )?;
            let theta_max: f64 = require(
                "sampling",
                "theta_max",
                parse_value("sampling", "theta_max", sampling.take("theta_max"))?,
            )?;
            let count: usize = require(
                "sampling",
                "count",
                parse_value("sampling", "count", sampling.take("count"))?,
            )?;
            if plan_kind == "uniform" {
                SamplingPlan::Uniform {
                    range: (theta_min, theta_max),
                    count,
                }
            } else {
                let (centers_raw, line) = sampling
                    .take("centers")
                    .ok_or_else(|| section_err("sampling", "packed plans need a `centers` key"))?;
                let centers = centers_raw
                    .split(';')
                    .map(|c| c.trim().parse::<f64>())
                    .collect::<Result<Vec<f64>, _>>()
                    .map_err(|_| ConfigError::Syntax {
                        line,
                        message: "bad `centers` list (expected `;`-separated numbers)".into(),
                    })?;
                let fraction =
                    parse_value("sampling", "fraction", sampling.take("fraction"))?.unwrap_or(0.5);
                let band = parse_value("sampling", "band", sampling.take("band"))?
                    .unwrap_or(DEFAULT_PACK_BAND);
                SamplingPlan::Packed {
                    range: (theta_min, theta_max),
                    count,
                    centers,
                    fraction,
                    band,
                }
            }
        }
        "explicit" => {
            let (points_raw, line) = sampling
                .take("points")
                .ok_or_else(|| section_err("sampling", "explicit plans need a `points` key"))?;
            let points = points_raw
                .split(',')
                .map(|p| p.trim().parse::<f64>())
                .collect::<Result<Vec<f64>, _>>()
                .map_err(|_| ConfigError::Syntax {
                    line,
                    message: "bad `points` list (expected comma-separated numbers)".into(),
                })?;
            if points.is_empty() {
                return Err(section_err("sampling", "empty `points` list"));
            }
            let theta_min = parse_value("sampling", "theta_min", sampling.take("theta_min"))?;
            let theta_max = parse_value("sampling", "theta_max", sampling.take("theta_max"))?;
            let lo = points.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = points.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            SamplingPlan::Explicit {
                range: (theta_min.unwrap_or(lo), theta_max.unwrap_or(hi)),
                points,
            }
        }
        other => {
            return Err(section_err(
                "sampling",
                format!("unknown plan {other:?} (expected uniform, packed, or explicit)"),
            ))
        }
    };
    sampling.finish()?;

    // [solver]
    let mut solver = take_section("solver");
    let steady_tol = parse_value("solver", "steady_tol", solver.take("steady_tol"))?
        .unwrap_or(STEADY_TOL_DEFAULT);
    let steady_max_iter = parse_value("solver", "max_iter", solver.take("max_iter"))?
        .unwrap_or(STEADY_MAX_ITER_DEFAULT);
    solver.finish()?;

    // [clustering]
    let mut clustering_sec = take_section("clustering");
    let k: Option<usize> = parse_value("clustering", "k", clustering_sec.take("k"))?;
    let elbow_kmax: Option<usize> = parse_value(
        "clustering",
        "elbow_kmax",
        clustering_sec.take("elbow_kmax"),
    )?;
    let elbow_alpha: Option<f64> = parse_value(
        "clustering",
        "elbow_alpha",
        clustering_sec.take("elbow_alpha"),
    )?;
    let clustering = match (k, elbow_kmax) {
        (Some(_), Some(_)) => {
            return Err(section_err(
                "clustering",
                "give either `k` or `elbow_kmax`, not both",
            ))
        }
        (Some(k), None) => {
            if elbow_alpha.is_some() {
                return Err(section_err(
                    "clustering",
                    "`elbow_alpha` only applies with `elbow_kmax`",
                ));
            }
            ClusterChoice::Fixed { k }
        }
        (None, Some(k_max)) => ClusterChoice::Elbow {
            k_max,
            alpha: elbow_alpha.unwrap_or(ELBOW_ALPHA_DEFAULT),
        },
        (None, None) => {
            return Err(section_err(
                "clustering",
                "missing `k` (fixed count) or `elbow_kmax` (elbow scan)",
            ))
        }
    };
    let restarts = parse_value("clustering", "restarts", clustering_sec.take("restarts"))?
        .unwrap_or(KMEANS_RESTARTS_DEFAULT);
    let kmeans_max_iter = parse_value("clustering", "max_iter", clustering_sec.take("max_iter"))?
        .unwrap_or(KMEANS_MAX_ITER_DEFAULT);
    let seed = parse_value("clustering", "seed", clustering_sec.take("seed"))?.unwrap_or(0);
    clustering_sec.finish()?;

    // [pod]
    let mut pod = take_section("pod");
    let rule = match pod.take("rule") {
        None => TruncationRule::Energy {
            tol: ENERGY_TOL_DEFAULT,
        },
        Some((value, line)) => value
            .parse()
            .map_err(|e| ConfigError::Syntax { line, message: e })?,
    };
    pod.finish()?;

    // [rom]
    let mut rom = take_section("rom");
    let rom_tol = parse_value("rom", "rom_tol", rom.take("rom_tol"))?.unwrap_or(ROM_TOL_DEFAULT);
    let rom_max_iter =
        parse_value("rom", "max_iter", rom.take("max_iter"))?.unwrap_or(ROM_MAX_ITER_DEFAULT);
    let scheme = match rom.take("scheme") {
        None => RomScheme::Newton,
        Some((value, line)) => value
            .parse()
            .map_err(|message| ConfigError::Syntax { line, message })?,
    };
    let criterion = match rom.take("criterion") {
        None => AssignmentCriterion::MidrangeRadius,
        Some((value, line)) => value
            .parse()
            .map_err(|message| ConfigError::Syntax { line, message })?,
    };
    rom.finish()?;

    // [output]
    let mut output = take_section("output");
    let out_dir = output.take("dir").map(|(value, _)| PathBuf::from(value));
    output.finish()?;

    Ok(PipelineConfig {
        model,
        plan,
        steady_tol,
        steady_max_iter,
        clustering,
        restarts,
        kmeans_max_iter,
        seed,
        rule,
        criterion,
        rom_tol,
        rom_max_iter,
        scheme,
        out_dir,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = "\
# end-to-end example
[model]
kind = pitchfork
n_interior = 64
domain_length = 1.0
branch = lower

[sampling]
plan = packed
theta_min = 5.0
theta_max = 15.0
count = 40
centers = 9.8696
fraction = 0.5
band = 0.05

[solver]
steady_tol = 1e-11
max_iter = 60

[clustering]
elbow_kmax = 8
elbow_alpha = 0.1
restarts = 12
seed = 7

[pod]
rule = energy,1e-9

[rom]
rom_tol = 1e-9
max_iter = 500
scheme = newton
criterion = mean

[output]
dir = run1
";

    #[test]
    fn full_config_round_trips_every_field() {
        let cfg = parse_config(FULL).unwrap();
        assert_eq!(
            cfg.model,
            ModelSpec::Pitchfork {
                n_interior: 64,
                domain_length: 1.0,
                branch: BranchId::Lower
            }
        );
        assert_eq!(
            cfg.plan,
            SamplingPlan::Packed {
                range: (5.0, 15.0),
                count: 40,
                centers: vec![9.8696],
                fraction: 0.5,
                band: 0.05
            }
        );
        assert_eq!(cfg.steady_tol, 1e-11);
        assert_eq!(cfg.steady_max_iter, 60);
        assert_eq!(
            cfg.clustering,
            ClusterChoice::Elbow {
                k_max: 8,
                alpha: 0.1
            }
        );
        assert_eq!(cfg.restarts, 12);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.rule, TruncationRule::Energy { tol: 1e-9 });
        assert_eq!(cfg.rom_tol, 1e-9);
        assert_eq!(cfg.rom_max_iter, 500);
        assert_eq!(cfg.scheme, RomScheme::Newton);
        assert_eq!(cfg.criterion, AssignmentCriterion::ParameterMean);
        assert_eq!(cfg.out_dir.as_deref(), Some(Path::new("run1")));
    }

    #[test]
    fn minimal_config_fills_in_defaults() {
        let cfg = parse_config(
            "[model]\nkind = modal\nn_interior = 32\nschedule = 1:12:45,2:45:95\n\
             [sampling]\nplan = uniform\ntheta_min = 20\ntheta_max = 90\ncount = 8\n\
             [clustering]\nk = 2\n",
        )
        .unwrap();
        assert_eq!(cfg.steady_tol, STEADY_TOL_DEFAULT);
        assert_eq!(cfg.steady_max_iter, STEADY_MAX_ITER_DEFAULT);
        assert_eq!(cfg.clustering, ClusterChoice::Fixed { k: 2 });
        assert_eq!(cfg.restarts, KMEANS_RESTARTS_DEFAULT);
        assert_eq!(cfg.kmeans_max_iter, KMEANS_MAX_ITER_DEFAULT);
        assert_eq!(cfg.seed, 0);
        assert_eq!(
            cfg.rule,
            TruncationRule::Energy {
                tol: ENERGY_TOL_DEFAULT
            }
        );
        assert_eq!(cfg.criterion, AssignmentCriterion::MidrangeRadius);
        assert_eq!(cfg.scheme, RomScheme::Newton);
        assert_eq!(cfg.rom_tol, ROM_TOL_DEFAULT);
        assert_eq!(cfg.out_dir, None);
        match cfg.model {
            ModelSpec::Modal { ref schedule, .. } => assert_eq!(schedule.len(), 2),
            ref other => panic!("wrong model {other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_rejected_with_its_line() {
        let err = parse_config(
            "[model]\nkind = pitchfork\nn_interior = 8\nwavelength = 3\n\
             [sampling]\nplan = uniform\ntheta_min = 1\ntheta_max = 2\ncount = 3\n\
             [clustering]\nk = 1\n",
        )
        .unwrap_err();
        let text = err.to_string();
        assert!(text.contains("wavelength"), "{text}");
        assert!(text.contains("line 4"), "{text}");
    }

    #[test]
    fn unknown_section_is_rejected() {
        let err = parse_config("[plotting]\nstyle = dark\n").unwrap_err();
        assert!(err.to_string().contains("plotting"));
    }

    #[test]
    fn key_outside_any_section_is_rejected() {
        let err = parse_config("k = 3\n").unwrap_err();
        assert!(err.to_string().contains("outside"));
    }

    #[test]
    fn both_k_and_elbow_are_rejected() {
        let err = parse_config(
            "[model]\nkind = pitchfork\nn_interior = 8\n\
             [sampling]\nplan = uniform\ntheta_min = 1\ntheta_max = 2\ncount = 3\n\
             [clustering]\nk = 2\nelbow_kmax = 5\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("not both"));
    }

    #[test]
    fn missing_clustering_choice_is_rejected() {
        let err = parse_config(
            "[model]\nkind = pitchfork\nn_interior = 8\n\
             [sampling]\nplan = uniform\ntheta_min = 1\ntheta_max = 2\ncount = 3\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("elbow_kmax"));
    }

    #[test]
    fn explicit_plan_takes_a_point_list() {
        let cfg = parse_config(
            "[model]\nkind = pitchfork\nn_interior = 8\n\
             [sampling]\nplan = explicit\npoints = 3.0, 1.0, 2.0\n\
             [clustering]\nk = 1\n",
        )
        .unwrap();
        match cfg.plan {
            SamplingPlan::Explicit { range, ref points } => {
                assert_eq!(range, (1.0, 3.0));
                assert_eq!(points, &[3.0, 1.0, 2.0]);
            }
            ref other => panic!("wrong plan {other:?}"),
        }
    }

    #[test]
    fn duplicate_keys_and_sections_are_rejected() {
        let err = parse_config("[model]\nkind = modal\nkind = pitchfork\n").unwrap_err();
        assert!(err.to_string().contains("duplicate key"));
        let err = parse_config("[model]\n[model]\n").unwrap_err();
        assert!(err.to_string().contains("duplicate section"));
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let cfg = parse_config(
            "# leading comment\n\n[model]\nkind = pitchfork # trailing\nn_interior = 8\n\n\
             [sampling]\nplan = uniform\ntheta_min = 1\ntheta_max = 2\ncount = 3\n\
             [clustering]\nk = 1\n",
        )
        .unwrap();
        assert!(matches!(cfg.model, ModelSpec::Pitchfork { .. }));
    }
}
