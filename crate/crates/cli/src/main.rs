//! `crashwatch`: accident detection over dashcam detection streams.
//!
//! Exit codes: 0 success, 1 usage, 2 bad input (format, parse, validation,
//! I/O), 3 internal invariant violation.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use crashwatch_core::frame_io::read_config;
use crashwatch_core::pipeline::{run_detect, run_estimate_lanes, run_eval, run_synth, RunInputs};
use crashwatch_core::synth::ScenarioKind;
use crashwatch_core::{Error, PipelineConfig};

#[derive(Debug, Parser)]
#[command(name = "crashwatch", version, about = "Detect vehicle accidents in dashcam detection streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Track vehicles, score overlapping pairs and write an event log.
    Detect {
        /// Detection stream (JSON lines).
        #[arg(long)]
        detections: PathBuf,
        /// Directory of binary PGM frames; enables ego-motion and lane estimation.
        #[arg(long)]
        frames: Option<PathBuf>,
        /// Lanes file; overrides lane estimation.
        #[arg(long)]
        lanes: Option<PathBuf>,
        #[arg(long)]
        config: PathBuf,
        /// Event log to write; the run manifest goes next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare an event log with ground truth and write a metrics report.
    Eval {
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Frames of slack around each truth interval.
        #[arg(long, default_value_t = 30)]
        tolerance: u64,
    },
    /// Generate a synthetic scenario.
    Synth {
        #[arg(long)]
        seed: u64,
        /// crash_rear_end, crash_crossing, near_miss_pass, parallel_traffic or occlusion_overlap.
        #[arg(long)]
        kind: ScenarioKind,
        #[arg(long)]
        out_dir: PathBuf,
        /// Also render grayscale frames into `frames/`.
        #[arg(long)]
        render: bool,
    },
    /// Estimate two straight lane lines from a frame directory.
    EstimateLanes {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Detect {
            detections,
            frames,
            lanes,
            config,
            out,
        } => {
            let cfg = read_config(&config).with_context(|| format!("reading config {}", config.display()))?;
            let inputs = RunInputs {
                detections,
                frames,
                lanes,
                config: Some(config),
            };
            let manifest = run_detect(&inputs, &cfg, &out)?;
            eprintln!(
                "{} frames, {} scored episodes -> {}",
                manifest.frames_processed,
                manifest.event_count,
                out.display()
            );
        }
        Command::Eval {
            events,
            truth,
            out,
            tolerance,
        } => {
            let r = run_eval(&events, &truth, tolerance, &out)?;
            let pct = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.2}%"));
            eprintln!(
                "ADR {} ({}/{}), FAR {} ({}/{})",
                pct(r.adr_percent),
                r.identified,
                r.total_accidents,
                pct(r.far_percent),
                r.false_alarms,
                r.total_patterns
            );
        }
        Command::Synth {
            seed,
            kind,
            out_dir,
            render,
        } => {
            let out = run_synth(seed, kind, &out_dir, render, &PipelineConfig::default())?;
            match out.scenario.crash_frame {
                Some(f) => eprintln!("{kind} seed {seed}: {} frames, crash at {f}", out.scenario.n_frames),
                None => eprintln!("{kind} seed {seed}: {} frames, no crash", out.scenario.n_frames),
            }
        }
        Command::EstimateLanes { frames, out } => {
            let m = run_estimate_lanes(&frames, &out)?;
            eprintln!(
                "left {:.2} deg, right {:.2} deg -> {}",
                m.left_line.angle_deg(),
                m.right_line.angle_deg(),
                out.display()
            );
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let Some(e) = err.chain().find_map(|c| c.downcast_ref::<Error>()) else {
        return 2;
    };
    match e.root() {
        Error::Usage(_) => 1,
        Error::Invariant(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
