use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};

use lrfs_mot::config::{FilterKind, RunConfig};
use lrfs_mot::io::{self, parse_detections, read_mot, write_detections, write_text, write_tracks};
use lrfs_mot::metrics::{ospa2_windowed, OspaConfig};
use lrfs_mot::synth::{synth_scenario, ScenarioSpec};

#[derive(Parser)]
#[command(name = "lrfs-mot", version, about = "Labeled random finite set multi-object tracker")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Track a detection file and write MOTChallenge-style results.
    Track {
        #[arg(long, value_parser = parse_filter)]
        filter: Option<FilterKind>,
        #[arg(long)]
        detections: PathBuf,
        /// Configuration file; defaults are used for missing keys.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write re-identification events (`frame,id,similarity`).
        #[arg(long)]
        recall_log: Option<PathBuf>,
        /// Suppress per-frame timing lines.
        #[arg(long)]
        quiet: bool,
    },
    /// OSPA(2) of a result file against ground truth.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        cutoff: Option<f64>,
        #[arg(long)]
        order: Option<f64>,
        /// Restrict evaluation to frames `first..=last`.
        #[arg(long, num_args = 2, value_names = ["FIRST", "LAST"])]
        window: Option<Vec<u32>>,
    },
    /// Generate a synthetic scenario (`<prefix>.det.csv`, `<prefix>.gt.txt`).
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out_prefix: PathBuf,
    },
    /// Merge a 10-column MOT detection file with a feature matrix.
    Convert {
        #[arg(long)]
        mot_det: PathBuf,
        /// One comma-separated feature row per detection row.
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the default configuration.
    Defaults,
}

fn parse_filter(s: &str) -> Result<FilterKind, String> {
    s.parse().map_err(|e: lrfs_mot::Error| e.to_string())
}

fn track(
    filter: Option<FilterKind>,
    detections: &Path,
    config: Option<&Path>,
    output: &Path,
    seed: Option<u64>,
    recall_log: Option<&Path>,
    quiet: bool,
) -> lrfs_mot::Result<()> {
    let mut cfg = match config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(f) = filter {
        cfg.filter = f;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let seq = parse_detections(detections)?;
    let out = lrfs_mot::tracker::run_sequence(&seq, &cfg, |r, t| {
        if !quiet {
            println!(
                "frame {:>6}  {:>4} dets->{:>3} tracks  {:>6} components  {:>9.3} ms",
                r.frame,
                seq.frames.iter().find(|f| f.frame == r.frame).map_or(0, |f| f.measurements.len()),
                r.estimates.len(),
                r.components,
                t.as_secs_f64() * 1e3
            );
        }
    })?;
    write_tracks(&out.estimates, output)?;
    if let Some(p) = recall_log {
        let mut ids = io::TrackIds::default();
        // Ids follow the result file's first-appearance order.
        for (_, ests) in &out.estimates {
            for e in ests {
                ids.id(e.label);
            }
        }
        let text: String = out
            .recalls
            .iter()
            .map(|r| format!("{},{},{}\n", r.frame, ids.id(r.label), io::format_number(r.similarity, 6)))
            .collect();
        write_text(p, &text)?;
    }
    let total: Duration = out.timings.iter().sum();
    let frames = out.timings.len();
    let fps = if total.is_zero() { f64::INFINITY } else { frames as f64 / total.as_secs_f64() };
    println!(
        "{} filter: {} frames in {:.3} s compute ({:.1} FPS), {} re-identifications",
        cfg.filter,
        frames,
        total.as_secs_f64(),
        fps,
        out.recalls.len()
    );
    Ok(())
}

fn eval(gt: &Path, results: &Path, cutoff: Option<f64>, order: Option<f64>, window: Option<Vec<u32>>) -> lrfs_mot::Result<()> {
    let defaults = OspaConfig::default();
    let cfg = OspaConfig { cutoff: cutoff.unwrap_or(defaults.cutoff), order: order.unwrap_or(defaults.order) };
    cfg.validate()?;
    let ground = read_mot(gt, true)?;
    let hyp = read_mot(results, false)?;
    let window = window.map(|w| (w[0], w[1]));
    let v = ospa2_windowed(&ground, &hyp, &cfg, window);
    let name = gt.file_stem().map_or_else(|| gt.display().to_string(), |s| s.to_string_lossy().into_owned());
    println!(
        "sequence={} c={} p={} ospa2={:.6} localization={:.6} cardinality={:.6}",
        name, cfg.cutoff, cfg.order, v.total, v.localization, v.cardinality
    );
    Ok(())
}

fn synth(spec: &Path, prefix: &Path) -> lrfs_mot::Result<()> {
    let spec = ScenarioSpec::parse(&io::read_text(spec)?)?;
    let s = synth_scenario(&spec)?;
    let det = io::with_suffix(prefix, ".det.csv");
    let gt = io::with_suffix(prefix, ".gt.txt");
    write_detections(&det, &s.detections)?;
    write_text(&gt, &io::format_ground_truth(&s.ground_truth))?;
    println!("wrote {} and {}", det.display(), gt.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Track { filter, detections, config, output, seed, recall_log, quiet } => {
            track(filter, &detections, config.as_deref(), &output, seed, recall_log.as_deref(), quiet)
        }
        Command::Eval { gt, results, cutoff, order, window } => eval(&gt, &results, cutoff, order, window),
        Command::Synth { spec, out_prefix } => synth(&spec, &out_prefix),
        Command::Convert { mot_det, features, out } => {
            io::convert_mot(&mot_det, &features).and_then(|seq| write_detections(&out, &seq))
        }
        Command::Defaults => {
            print!("{}", RunConfig::default());
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
