use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use ijvtrack_cli::{cmd_compare, cmd_eval, cmd_synth, cmd_track, TrackOptions};

#[derive(Parser)]
#[command(
    name = "ijvtrack",
    version,
    about = "Optical-flow vessel contour tracking"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct TrackFlags {
    /// Pyramid levels.
    #[arg(long, default_value_t = 3)]
    levels: usize,
    /// LK window length and FB aggregation window, in pixels.
    #[arg(long, default_value_t = 20)]
    window: usize,
    /// HS smoothness weight.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// HS iterations per pyramid level.
    #[arg(long, default_value_t = 250)]
    iters: usize,
    /// Contour points; the initial contour is resampled if needed.
    #[arg(long, default_value_t = 32)]
    points: usize,
}

impl From<&TrackFlags> for TrackOptions {
    fn from(f: &TrackFlags) -> Self {
        TrackOptions {
            levels: f.levels,
            window: f.window,
            alpha: f.alpha,
            iters: f.iters,
            points: f.points,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic phantom dataset.
    Synth {
        /// key = value config file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config frame count.
        #[arg(long)]
        frames: Option<usize>,
    },
    /// Track a contour through a dataset.
    Track {
        dataset: PathBuf,
        #[arg(long, default_value = "lk")]
        algo: String,
        /// Initial contour; defaults to the dataset's contours/frame_00000.txt.
        #[arg(long)]
        init: Option<PathBuf>,
        #[command(flatten)]
        flags: TrackFlags,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score tracked contours against truth masks.
    Eval {
        tracked: PathBuf,
        truth: PathBuf,
        /// CSV destination; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Track and evaluate every algorithm on every dataset.
    Compare {
        #[arg(required = true)]
        datasets: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "lk,hs,fb")]
        algos: Vec<String>,
        #[command(flatten)]
        flags: TrackFlags,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Synth {
            config,
            out,
            seed,
            frames,
        } => {
            let c = cmd_synth(config.as_deref(), &out, seed, frames)?;
            println!("wrote {} frames to {}", c.frame_count, out.display());
        }
        Command::Track {
            dataset,
            algo,
            init,
            flags,
            out,
        } => {
            let contours = cmd_track(&dataset, &algo, init.as_deref(), &(&flags).into(), &out)?;
            println!("tracked {} frames into {}", contours.len(), out.display());
        }
        Command::Eval {
            tracked,
            truth,
            out,
        } => {
            let report = cmd_eval(&tracked, &truth, out.as_deref())?;
            if out.is_none() {
                print!("{}", report.csv());
            }
            println!(
                "mean_dice={:.4} min_dice={:.4}",
                report.series.mean(),
                report.series.min()
            );
            println!("{}", report.verdict_line());
        }
        Command::Compare {
            datasets,
            algos,
            flags,
            out,
        } => {
            let report = cmd_compare(&datasets, &algos, &(&flags).into(), &out)?;
            for c in &report.cells {
                match &c.outcome {
                    Ok(r) => println!(
                        "{} {} mean_dice={:.4} {}",
                        c.dataset.display(),
                        c.algo,
                        r.series.mean(),
                        r.verdict_line()
                    ),
                    Err(e) => println!("{} {} ERROR {e}", c.dataset.display(), c.algo),
                }
            }
            for (algo, s, n) in &report.success_counts {
                println!("{algo}: {s}/{n} without failure");
            }
        }
    }
    Ok(())
}
