use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use bladeseg::forest::ForestConfig;
use bladeseg::holefill::{blade_hole_fill, orientation_report};
use bladeseg::io;
use bladeseg::losses::{gradcheck, total_loss, LossConfig};
use bladeseg::metrics::{records_to_csv, Step};
use bladeseg::pipeline::{self, ItemFailure, PipelineConfig};
use bladeseg::synthcorpus::{self, CorpusSpec};
use bladeseg::tta::{soft_vote, TtaBundle, DEFAULT_THRESHOLD};
use bladeseg::{quantize, FlipTransform};
use clap::{Args, Parser, Subcommand};

/// Refines binary blade segmentation masks and scores them.
#[derive(Parser)]
#[command(name = "bladeseg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ForestArgs {
    /// Trees per forest.
    #[arg(long, default_value_t = 5)]
    trees: usize,
    /// Maximum tree depth.
    #[arg(long, default_value_t = 4)]
    depth: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

impl ForestArgs {
    fn config(&self) -> ForestConfig {
        ForestConfig {
            n_trees: self.trees,
            max_depth: self.depth,
            seed: self.seed,
            ..ForestConfig::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Focal, contiguity and total loss of a logit map against a mask.
    Loss {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        logits: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        gamma: f64,
        #[arg(long, default_value_t = 0.25)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        /// Also compare analytic gradients with central differences.
        #[arg(long)]
        grad_check: bool,
    },
    /// Soft-votes four flip-variant probability maps (id, fh, fv, fhv order).
    TtaMerge {
        #[arg(long)]
        out: PathBuf,
        id: PathBuf,
        fh: PathBuf,
        fv: PathBuf,
        fhv: PathBuf,
    },
    /// Thresholds a probability map into a mask.
    Quantize {
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        input: PathBuf,
        output: PathBuf,
    },
    /// Orientation-aware hole filling of a mask.
    FillHoles {
        input: PathBuf,
        output: PathBuf,
        /// Print the detected orientation and gradient sums.
        #[arg(long)]
        report_orientation: bool,
    },
    /// Fits one forest per blade group and writes its predicted masks.
    ForestRefine {
        /// CSV with blade_id,image_path,h1_mask_path[,gt_path].
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        forest: ForestArgs,
        #[arg(long)]
        out_dir: PathBuf,
        /// Write a parenthesized text dump of every fitted forest.
        #[arg(long)]
        dump_model: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Scores a directory of predicted masks against ground truth.
    Metrics {
        #[arg(long)]
        pred_dir: PathBuf,
        #[arg(long)]
        gt_dir: PathBuf,
        #[arg(long)]
        step: Step,
        /// Output file; stdout when omitted.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Append dispersion summary rows.
        #[arg(long)]
        summary: bool,
    },
    /// Runs the full refinement chain over a manifest.
    Refine {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        #[command(flatten)]
        forest: ForestArgs,
        /// Comma-separated steps whose masks are written.
        #[arg(long, value_delimiter = ',', default_value = "BU,H1,RF,H2")]
        save_steps: Vec<Step>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Writes a synthetic blade corpus with a manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2)]
        groups: usize,
        #[arg(long, default_value_t = 10)]
        per_group: usize,
        /// Image side length.
        #[arg(long, default_value_t = 128)]
        size: usize,
        #[arg(long, default_value_t = 2)]
        holes: usize,
        #[arg(long, default_value_t = 0.01)]
        salt: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

/// Lists quarantined items on stderr; exit status 2 when there are any.
fn finish(failures: &[ItemFailure]) -> ExitCode {
    if failures.is_empty() {
        return ExitCode::SUCCESS;
    }
    eprintln!("{} item(s) failed:", failures.len());
    for f in failures {
        eprintln!("  {}/{}: {}", f.blade_id, f.image_id, f.message);
    }
    ExitCode::from(2)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Loss {
            gt,
            logits,
            gamma,
            alpha,
            lambda,
            grad_check,
        } => {
            let gt = io::read_mask(&gt)?;
            let logits = io::read_logits(&logits)?;
            let cfg = LossConfig { alpha, gamma, lambda };
            let v = total_loss(&gt, &logits, &cfg)?;
            let pixels = gt.len() as f64;
            let mut header = "focal,contiguity,total,focal_per_pixel,total_per_pixel".to_string();
            let mut row = format!(
                "{},{},{},{},{}",
                v.focal,
                v.contiguity,
                v.total,
                v.focal / pixels,
                v.total / pixels
            );
            if grad_check {
                let r = gradcheck::check_losses(&gt, &logits, &cfg, gradcheck::DEFAULT_STEP)?;
                header.push_str(",focal_grad_max_rel_err,contiguity_grad_max_rel_err");
                row.push_str(&format!(
                    ",{},{}",
                    r.focal_max_rel_err,
                    r.contiguity_max_rel_err
                        .map_or_else(|| "NA".to_string(), |e| e.to_string())
                ));
            }
            println!("{header}\n{row}");
        }
        Command::TtaMerge { out, id, fh, fv, fhv } => {
            let entries = [id, fh, fv, fhv]
                .iter()
                .zip(FlipTransform::ALL)
                .map(|(p, t)| Ok((t, io::read_probability(p)?)))
                .collect::<Result<Vec<_>>>()?;
            io::write_probability(&soft_vote(&TtaBundle::new(entries)?), &out)?;
        }
        Command::Quantize {
            threshold,
            input,
            output,
        } => {
            let p = io::read_probability(&input)?;
            io::write_mask(&quantize(&p, threshold)?, &output)?;
        }
        Command::FillHoles {
            input,
            output,
            report_orientation,
        } => {
            let m = io::read_mask(&input)?;
            if report_orientation {
                let r = orientation_report(&m);
                println!("{} gx={} gy={}", r.orientation.name(), r.gx, r.gy);
            }
            io::write_mask(&blade_hole_fill(&m), &output)?;
        }
        Command::ForestRefine {
            manifest,
            forest,
            out_dir,
            dump_model,
            jobs,
        } => {
            let groups = pipeline::read_forest_manifest(&manifest)?;
            let outcome = pipeline::forest_refine(&groups, &out_dir, &forest.config(), jobs)?;
            if let Some(path) = dump_model {
                let dump: String = outcome.models.iter().map(|m| m.dump()).collect();
                write_text(&path, &dump)?;
            }
            println!("wrote {} mask(s) to {}", outcome.written.len(), out_dir.display());
            if !outcome.records.is_empty() {
                print!("{}", records_to_csv(&outcome.records, false));
            }
            return Ok(finish(&outcome.failures));
        }
        Command::Metrics {
            pred_dir,
            gt_dir,
            step,
            csv,
            summary,
        } => {
            let (records, failures) = pipeline::evaluate_dirs(&pred_dir, &gt_dir, step)?;
            if records.is_empty() && !failures.is_empty() {
                finish(&failures);
                bail!("no mask in {} could be scored", pred_dir.display());
            }
            let text = records_to_csv(&records, summary);
            match csv {
                Some(path) => write_text(&path, &text)?,
                None => print!("{text}"),
            }
            return Ok(finish(&failures));
        }
        Command::Refine {
            manifest,
            out,
            threshold,
            forest,
            save_steps,
            jobs,
        } => {
            let cfg = PipelineConfig {
                threshold,
                forest: forest.config(),
                save_steps,
                jobs,
            };
            let outcome = pipeline::refine(&manifest, &out, &cfg)?;
            if !outcome.output.records.is_empty() {
                print!("{}", pipeline::report(&outcome.output.records).to_text());
            }
            println!(
                "refined {} image(s); wrote {} file(s) under {}",
                outcome.output.images.len(),
                outcome.written.len(),
                out.display()
            );
            return Ok(finish(&outcome.output.failures));
        }
        Command::Synth {
            out,
            groups,
            per_group,
            size,
            holes,
            salt,
            seed,
        } => {
            let spec = CorpusSpec {
                groups,
                per_group,
                height: size,
                width: size,
                holes,
                salt_rate: salt,
                seed,
                ..CorpusSpec::default()
            };
            let manifest = synthcorpus::generate(&spec, &out)?;
            println!(
                "wrote {} image(s) and {}",
                manifest.rows.len(),
                out.join("manifest.csv").display()
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
