// The sweep-range guard is written `!(a > b)` on purpose so NaN fails it too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use clap::{Parser, Subcommand};
use locrom::assignment::AssignmentCriterion;
use locrom::pipeline::{
    elbow_rescan, parse_config_file, run_errors, run_offline, run_online, write_diagram_csv,
    write_error_csv,
};
use std::path::PathBuf;

/// Localized reduced-order models for steady parametrized bifurcation
/// problems: build artifacts offline, then sweep and validate them online.
#[derive(Parser)]
#[command(name = "locrom", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the offline stage: sample, solve, cluster, build bases and
    /// reduced models, and write the artifact directory.
    Offline {
        /// Pipeline configuration file.
        #[arg(long)]
        config: PathBuf,
        /// Artifact directory to create (overrides the config's [output] dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep the reduced models over a parameter range and write the
    /// bifurcation diagram.
    Online {
        /// Artifact directory from an offline run.
        #[arg(long)]
        artifacts: PathBuf,
        #[arg(long)]
        theta_min: f64,
        #[arg(long)]
        theta_max: f64,
        /// Number of sweep points (0 writes a header-only CSV).
        #[arg(long)]
        count: usize,
        /// Assignment criterion: `mean` or `midrange` (default: the offline
        /// config's choice).
        #[arg(long)]
        criterion: Option<String>,
        /// Diagram CSV to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve held-out parameter values with the full model and report
    /// reduced-model errors.
    Errors {
        /// Artifact directory from an offline run.
        #[arg(long)]
        artifacts: PathBuf,
        /// File of held-out parameter values (whitespace-separated; `#`
        /// comments). Default: evenly spaced values between the training
        /// samples.
        #[arg(long)]
        held_out: Option<PathBuf>,
        /// Error report CSV to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-run the cluster-count scan on stored snapshots and print the
    /// variance table.
    Elbow {
        /// Artifact directory from an offline run.
        #[arg(long)]
        artifacts: PathBuf,
        /// Largest cluster count to scan.
        #[arg(long)]
        kmax: usize,
        /// Drop threshold relative to the reference variance drop.
        #[arg(long, default_value_t = locrom::clustering::ELBOW_ALPHA_DEFAULT)]
        alpha: f64,
    },
}

fn main() {
    if let Err(message) = init_thread_pool() {
        eprintln!("error: {message}");
        std::process::exit(1);
    }
    let cli = Cli::parse();
    if let Err(message) = run(cli.command) {
        eprintln!("error: {message}");
        std::process::exit(1);
    }
}

/// Honors `LOCROM_THREADS` before any parallel work starts.
fn init_thread_pool() -> Result<(), String> {
    let Ok(raw) = std::env::var("LOCROM_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .parse()
        .map_err(|_| format!("LOCROM_THREADS must be a positive integer, got {raw:?}"))?;
    if threads == 0 {
        return Err("LOCROM_THREADS must be a positive integer, got 0".into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| format!("cannot size the worker pool: {e}"))
}

fn run(command: Command) -> Result<(), String> {
    match command {
        Command::Offline { config, out } => {
            let cfg = parse_config_file(&config).map_err(|e| e.to_string())?;
            let out = out
                .or(cfg.out_dir.clone())
                .ok_or("no output directory: pass --out or set [output] dir in the config")?;
            let summary = run_offline(&cfg, &out).map_err(|e| e.to_string())?;
            println!(
                "artifacts written to {}: {} samples, K = {}{}, basis sizes {:?}, global {} / {}",
                out.display(),
                summary.sample_count,
                summary.k,
                match &summary.elbow {
                    Some(scan) if scan.fallback => " (elbow fallback)",
                    Some(_) => " (elbow)",
                    None => "",
                },
                summary.basis_sizes,
                summary.global1_size,
                summary.global2_size,
            );
            if summary.rank_truncated {
                println!("note: combined global basis capped at the snapshot rank");
            }
            Ok(())
        }
        Command::Online {
            artifacts,
            theta_min,
            theta_max,
            count,
            criterion,
            out,
        } => {
            let criterion = criterion
                .map(|c| c.parse::<AssignmentCriterion>())
                .transpose()?;
            if count >= 2 && !(theta_max > theta_min) {
                return Err(format!(
                    "--theta-max ({theta_max}) must exceed --theta-min ({theta_min})"
                ));
            }
            let thetas: Vec<f64> = match count {
                0 => Vec::new(),
                1 => vec![0.5 * (theta_min + theta_max)],
                _ => (0..count)
                    .map(|i| theta_min + (theta_max - theta_min) * i as f64 / (count as f64 - 1.0))
                    .collect(),
            };
            let diagram = run_online(&artifacts, &thetas, criterion).map_err(|e| e.to_string())?;
            write_diagram_csv(&out, &diagram).map_err(|e| e.to_string())?;
            let non_converged = diagram.rows.iter().filter(|r| !r.converged).count();
            println!(
                "wrote {} rows to {} ({} criterion{})",
                diagram.rows.len(),
                out.display(),
                diagram.criterion,
                if non_converged > 0 {
                    format!(", {non_converged} non-converged")
                } else {
                    String::new()
                }
            );
            Ok(())
        }
        Command::Errors {
            artifacts,
            held_out,
            out,
        } => {
            let explicit = held_out
                .map(|path| -> Result<Vec<f64>, String> {
                    let text = std::fs::read_to_string(&path)
                        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
                    text.lines()
                        .map(|line| match line.find('#') {
                            Some(pos) => &line[..pos],
                            None => line,
                        })
                        .flat_map(str::split_whitespace)
                        .map(|tok| {
                            tok.parse::<f64>()
                                .map_err(|_| format!("bad held-out value {tok:?}"))
                        })
                        .collect()
                })
                .transpose()?;
            let report = run_errors(&artifacts, explicit.as_deref()).map_err(|e| e.to_string())?;
            write_error_csv(&out, &report).map_err(|e| e.to_string())?;
            println!(
                "wrote {} rows to {} ({} excluded); local mean {:.3e} max {:.3e}, \
                 global1 mean {:.3e}, global2 mean {:.3e}",
                report.rows.len(),
                out.display(),
                report.excluded,
                report.mean_local,
                report.max_local,
                report.mean_global1,
                report.mean_global2,
            );
            Ok(())
        }
        Command::Elbow {
            artifacts,
            kmax,
            alpha,
        } => {
            let scan = elbow_rescan(&artifacts, kmax, alpha).map_err(|e| e.to_string())?;
            println!("k,variance,chosen");
            for (i, &k) in scan.k_values.iter().enumerate() {
                println!(
                    "{k},{:.6e},{}",
                    scan.variances[i],
                    if k == scan.chosen_k { 1 } else { 0 }
                );
            }
            println!(
                "chosen K = {} at alpha = {}{}",
                scan.chosen_k,
                scan.alpha,
                if scan.fallback {
                    " (no drop met the threshold; largest scanned count kept)"
                } else {
                    ""
                }
            );
            Ok(())
        }
    }
}
