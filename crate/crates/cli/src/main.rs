//! Batch command-line front end: detect, eval, synth, and stats.
//!
//! Every command is non-interactive and reproducible: identical inputs and
//! config produce byte-identical output files. Exit codes are 0 for full
//! success, 1 for fatal errors, and 2 for partial success (some batch
//! inputs skipped).

mod config;
mod manifest;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use npdetect_core::evaluate::{intensity_size_report, load_ground_truth, match_rows, MatchReport};
use npdetect_core::pipeline::{
    detect, detect_batch, BatchRow, BatchSummary, DetectConfig, PipelineError, Separation,
};
use npdetect_core::raster::{histogram, load_pgm, write_pgm};
use npdetect_core::regionprops::{rows_from_csv, to_csv};
use npdetect_core::synthgen::{generate, truth_to_ground_truth};

use crate::config::{parse_detect_config, parse_synth_config};
use crate::manifest::{write_manifest, RunClock};

#[derive(Parser)]
#[command(
    name = "npdetect",
    version,
    about = "Nanoparticle detection and analysis for PGM micrographs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SeparationArg {
    Morphological,
    Watershed,
}

impl From<SeparationArg> for Separation {
    fn from(arg: SeparationArg) -> Self {
        match arg {
            SeparationArg::Morphological => Separation::Morphological,
            SeparationArg::Watershed => Separation::Watershed,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Detect particles in a PGM file or every PGM in a directory.
    Detect {
        /// PGM file or directory of PGM files.
        input: PathBuf,
        /// Output directory for per-image CSVs, summary.csv and manifest.json.
        #[arg(long)]
        out: PathBuf,
        /// key=value config file; flags below override its values.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        max_iterations: Option<u32>,
        #[arg(long)]
        min_area: Option<u64>,
        #[arg(long, value_enum)]
        separation: Option<SeparationArg>,
        /// Worker threads for directory input; results are identical for any
        /// worker count.
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Match a particles CSV against ground-truth points.
    Eval {
        particles: PathBuf,
        gt: PathBuf,
        /// Maximum centroid distance for a match, in pixels.
        #[arg(long, default_value_t = 10.0)]
        radius: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic image with exact ground truth.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Intensity/size correlation (and optionally an intensity histogram).
    Stats {
        particles: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the 256-bin histogram CSV of this PGM image.
        #[arg(long)]
        histogram: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<u8> {
    match command {
        Command::Detect {
            input,
            out,
            config,
            max_iterations,
            min_area,
            separation,
            workers,
        } => cmd_detect(
            &input,
            &out,
            config.as_deref(),
            max_iterations,
            min_area,
            separation,
            workers,
        ),
        Command::Eval {
            particles,
            gt,
            radius,
            out,
        } => cmd_eval(&particles, &gt, radius, &out),
        Command::Synth { config, out } => cmd_synth(&config, &out),
        Command::Stats {
            particles,
            out,
            histogram,
        } => cmd_stats(&particles, &out, histogram.as_deref()),
    }
}

fn load_detect_config(
    config: Option<&Path>,
    max_iterations: Option<u32>,
    min_area: Option<u64>,
    separation: Option<SeparationArg>,
) -> Result<DetectConfig> {
    let mut cfg = match config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            parse_detect_config(&text)?
        }
        None => DetectConfig::default(),
    };
    // Flags beat config-file values beat defaults.
    if let Some(n) = max_iterations {
        cfg.max_iterations = n;
    }
    if let Some(a) = min_area {
        cfg.min_area = a;
    }
    if let Some(s) = separation {
        cfg.separation = s.into();
    }
    Ok(cfg)
}

fn cmd_detect(
    input: &Path,
    out: &Path,
    config: Option<&Path>,
    max_iterations: Option<u32>,
    min_area: Option<u64>,
    separation: Option<SeparationArg>,
    workers: usize,
) -> Result<u8> {
    let clock = RunClock::start();
    let cfg = load_detect_config(config, max_iterations, min_area, separation)?;
    let meta = fs::metadata(input).with_context(|| format!("reading {}", input.display()))?;
    fs::create_dir_all(out)?;

    let (exit_code, input_files) = if meta.is_dir() {
        match detect_batch(input, out, &cfg, workers) {
            Ok(summary) => {
                for (name, why) in &summary.skipped {
                    eprintln!("warning: skipped {name}: {why}");
                }
                let mut files: Vec<String> = summary.rows.iter().map(|r| r.file.clone()).collect();
                files.extend(summary.skipped.iter().map(|(name, _)| name.clone()));
                files.sort();
                let code = if summary.skipped.is_empty() { 0 } else { 2 };
                (code, files)
            }
            Err(e @ PipelineError::NoProcessableImages { .. }) => {
                eprintln!("error: {e}");
                (1, Vec::new())
            }
            Err(e) => return Err(e.into()),
        }
    } else {
        let name = input
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| input.display().to_string());
        let img = load_pgm(input).with_context(|| format!("loading {}", input.display()))?;
        let result = detect(&img, &cfg)?;
        let stem = input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| name.clone());
        to_csv(&result.particles, out.join(format!("{stem}.particles.csv")))?;
        let summary = BatchSummary {
            rows: vec![BatchRow {
                file: name.clone(),
                particles: result.particles.len(),
                iterations: result.thresholds_used.len(),
                thresholds: result.thresholds_used,
            }],
            skipped: Vec::new(),
        };
        fs::write(out.join("summary.csv"), summary.to_csv_string())?;
        println!(
            "{name}: {} particles in {} iterations",
            summary.rows[0].particles, summary.rows[0].iterations
        );
        (0, vec![name])
    };

    let manifest = clock.finish(&cfg, input_files, exit_code as i32)?;
    write_manifest(&manifest, out)?;
    Ok(exit_code)
}

fn render_report_text(report: &MatchReport, gt_points: usize, detections: usize) -> String {
    let join = |v: &[usize]| {
        v.iter()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join(";")
    };
    let mut text = String::new();
    let _ = writeln!(text, "radius={:.6}", report.radius);
    let _ = writeln!(text, "ground_truth_points={gt_points}");
    let _ = writeln!(text, "detections={detections}");
    let _ = writeln!(text, "matched={}", report.pairs.len());
    let _ = writeln!(text, "recall={:.6}", report.recall);
    let _ = writeln!(text, "precision={:.6}", report.precision);
    let _ = writeln!(text, "unmatched_gt={}", join(&report.unmatched_gt));
    let _ = writeln!(
        text,
        "unmatched_detections={}",
        join(&report.unmatched_detections)
    );
    text
}

fn cmd_eval(particles: &Path, gt_path: &Path, radius: f64, out: &Path) -> Result<u8> {
    if radius <= 0.0 {
        bail!("--radius must be positive, got {radius}");
    }
    let rows =
        rows_from_csv(particles).with_context(|| format!("parsing {}", particles.display()))?;
    let gt =
        load_ground_truth(gt_path).with_context(|| format!("parsing {}", gt_path.display()))?;
    let report = match_rows(&gt, &rows, radius);

    if gt.points.is_empty() {
        eprintln!("warning: no ground-truth points; recall is vacuously 1");
    }
    if rows.is_empty() {
        eprintln!("warning: no detections; precision is vacuously 1");
    }
    println!("recall={:.6}", report.recall);
    println!("precision={:.6}", report.precision);

    fs::create_dir_all(out)?;
    let mut pairs_csv = String::from("gt_index,detection_index,distance\n");
    for &(gi, di, dist) in &report.pairs {
        let _ = writeln!(pairs_csv, "{gi},{di},{dist:.6}");
    }
    fs::write(out.join("match_pairs.csv"), pairs_csv)?;
    fs::write(
        out.join("match_report.txt"),
        render_report_text(&report, gt.points.len(), rows.len()),
    )?;
    Ok(0)
}

fn cmd_synth(config: &Path, out: &Path) -> Result<u8> {
    let clock = RunClock::start();
    let text = fs::read_to_string(config)
        .with_context(|| format!("reading config {}", config.display()))?;
    let cfg = parse_synth_config(&text)?;
    let (img, truth) = generate(&cfg)?;
    fs::create_dir_all(out)?;
    write_pgm(&img, out.join("image.pgm"))?;
    npdetect_core::evaluate::write_ground_truth(
        &truth_to_ground_truth(&truth, &cfg),
        out.join("ground_truth.csv"),
    )?;
    let manifest = clock.finish(&cfg, vec![config.display().to_string()], 0)?;
    write_manifest(&manifest, out)?;
    println!(
        "generated {}x{} image with {} particles",
        cfg.width,
        cfg.height,
        truth.particles.len()
    );
    Ok(0)
}

fn cmd_stats(particles: &Path, out: &Path, histogram_src: Option<&Path>) -> Result<u8> {
    let rows =
        rows_from_csv(particles).with_context(|| format!("parsing {}", particles.display()))?;
    fs::create_dir_all(out)?;

    if let Some(img_path) = histogram_src {
        let img = load_pgm(img_path).with_context(|| format!("loading {}", img_path.display()))?;
        let hist = histogram(&img);
        let mut csv = String::from("intensity,count\n");
        for (v, n) in hist.bins().iter().enumerate() {
            let _ = writeln!(csv, "{v},{n}");
        }
        fs::write(out.join("histogram.csv"), csv)?;
    }

    let (r, pairs_csv) = intensity_size_report(&rows)
        .with_context(|| format!("correlating {}", particles.display()))?;
    fs::write(out.join("intensity_size.csv"), pairs_csv)?;
    fs::write(out.join("pearson.txt"), format!("{r:.6}\n"))?;
    println!("r={r:.6}");
    Ok(0)
}
