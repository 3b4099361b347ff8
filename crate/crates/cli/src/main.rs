//! `dyadic`: synthetic-corpus generation, detector tuning/evaluation,
//! and participant-level interaction analytics over diarized audio
//! timelines with speaker embeddings.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error. All file
//! outputs are written atomically and every subcommand is
//! deterministic given its config and seed, including with `--jobs`
//! greater than one.

use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Parser, Subcommand};
use serde::Deserialize;

use dyadic_core::clustering::default_threshold_grid;
use dyadic_core::forest::{Forest, ForestConfig};
use dyadic_core::pipeline::{
    analyze_participants, load_corpus, run_eval, run_tune, statistics_report, AnalysisOptions,
};
use dyadic_core::spurious::{
    train_spurious_model, AnnotatedClustering, SpuriousMode, DEFAULT_MIN_SHARE,
};
use dyadic_core::stats::DEFAULT_SEVERITY_CUT;
use dyadic_core::synth::{
    gen_cohort, gen_detection_corpus, write_atomic, write_corpus, CohortSpec, ConversationSpec,
    DetectionCorpusSpec, EmbeddingSpec, SeverityModel,
};

mod report;

#[derive(Parser)]
#[command(
    name = "dyadic",
    version,
    about = "Dyadic interaction detection and conversational timing analytics"
)]
struct Cli {
    /// Worker threads for per-recording work (default: all cores).
    /// Results are identical for any value.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus (RTTM + embeddings + manifest) from
    /// a JSON config file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Grid-search the clustering threshold on the dev split.
    Tune {
        #[arg(long)]
        manifest: PathBuf,
        /// Either start:end:step or a comma-separated list.
        #[arg(long, default_value = "0.1:1.5:0.05")]
        grid: String,
        /// off | heuristic | model=<path>
        #[arg(long, default_value = "heuristic")]
        spurious: String,
        /// Write the per-threshold accuracy CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate detectors against ground-truth labels, in the
    /// with/without-screening (and optionally baseline) table layout.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        threshold: f64,
        /// off | heuristic | model=<path> | both
        #[arg(long, default_value = "both")]
        spurious: String,
        /// Also train the VAD baseline on dev and evaluate it on eval.
        #[arg(long)]
        baseline: bool,
        /// Seed for baseline training.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the metrics CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-participant profiles and the statistics report.
    Analyze {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        threshold: f64,
        /// Speech-rich windows per participant feeding the timing
        /// features.
        #[arg(long, default_value_t = 10)]
        top_k: usize,
        #[arg(long, default_value_t = 600.0)]
        window_secs: f64,
        /// off | heuristic | model=<path>
        #[arg(long, default_value = "heuristic")]
        spurious: String,
        /// Output directory for participants.csv and statistics.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the VAD-statistics baseline on the dev split.
    BaselineTrain {
        #[arg(long)]
        manifest: PathBuf,
        /// Model JSON output path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Classify recordings with a trained baseline model.
    BaselinePredict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Write the per-recording predictions CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the spurious-cluster screening model from annotated dev
    /// recordings.
    SpuriousTrain {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        threshold: f64,
        /// Model JSON output path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

enum CliError {
    Usage(String),
    Run(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Run(e.into())
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successes.
            if e.use_stderr() {
                eprint!("{e}");
                std::process::exit(1);
            }
            print!("{e}");
            std::process::exit(0);
        }
    };
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            std::process::exit(1);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .expect("worker pool initialized once");
    }
    match run(cli.command) {
        Ok(()) => {}
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(1);
        }
        Err(CliError::Run(e)) => {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Simulate { config, out, seed } => simulate(&config, &out, seed),
        Command::Tune {
            manifest,
            grid,
            spurious,
            out,
        } => tune(&manifest, &grid, &spurious, out.as_deref()),
        Command::Eval {
            manifest,
            threshold,
            spurious,
            baseline,
            seed,
            out,
        } => eval(&manifest, threshold, &spurious, baseline, seed, out.as_deref()),
        Command::Analyze {
            manifest,
            threshold,
            top_k,
            window_secs,
            spurious,
            out,
        } => analyze(&manifest, threshold, top_k, window_secs, &spurious, &out),
        Command::BaselineTrain {
            manifest,
            out,
            seed,
        } => baseline_train(&manifest, &out, seed),
        Command::BaselinePredict {
            model,
            manifest,
            out,
        } => baseline_predict(&model, &manifest, out.as_deref()),
        Command::SpuriousTrain {
            manifest,
            threshold,
            out,
            seed,
        } => spurious_train(&manifest, threshold, &out, seed),
    }
}

/// Severity-model knobs accepted in cohort configs; defaults are the
/// piecewise fixture.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelConfig {
    #[serde(default = "d_cut")]
    cut: u32,
    #[serde(default = "d_ratio_base")]
    ratio_base: f64,
    #[serde(default = "d_ratio_slope_low")]
    ratio_slope_low: f64,
    #[serde(default = "d_ratio_at_cut")]
    ratio_at_cut: f64,
    #[serde(default = "d_ratio_slope_high")]
    ratio_slope_high: f64,
    #[serde(default = "d_response_base")]
    response_base: f64,
    #[serde(default = "d_response_slope")]
    response_slope: f64,
}

fn d_cut() -> u32 {
    SeverityModel::piecewise().cut
}
fn d_ratio_base() -> f64 {
    SeverityModel::piecewise().ratio_base
}
fn d_ratio_slope_low() -> f64 {
    SeverityModel::piecewise().ratio_slope_low
}
fn d_ratio_at_cut() -> f64 {
    SeverityModel::piecewise().ratio_at_cut
}
fn d_ratio_slope_high() -> f64 {
    SeverityModel::piecewise().ratio_slope_high
}
fn d_response_base() -> f64 {
    SeverityModel::piecewise().response_base
}
fn d_response_slope() -> f64 {
    SeverityModel::piecewise().response_slope
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum SimulateConfig {
    /// Participant cohort with severity-linked behavior.
    Cohort {
        #[serde(default = "d_participants")]
        n_participants: usize,
        #[serde(default = "d_windows")]
        windows_per_participant: usize,
        #[serde(default = "d_window_secs")]
        window_secs: f64,
        /// Flat severity model (all slopes zero) instead of piecewise.
        #[serde(default)]
        null_model: bool,
        model: Option<ModelConfig>,
        #[serde(default = "d_dim")]
        dim: usize,
        #[serde(default = "d_cohort_centroid")]
        centroid_min_distance: f64,
        #[serde(default = "d_intra_noise")]
        intra_noise: f64,
        #[serde(default = "d_cohort_spurious")]
        spurious_rate: f64,
        #[serde(default)]
        seed: u64,
    },
    /// Standalone 1-4 speaker recordings split into dev/eval.
    Detection {
        #[serde(default = "d_recordings")]
        n_recordings: usize,
        #[serde(default = "d_window_secs")]
        duration: f64,
        #[serde(default = "d_max_speakers")]
        max_speakers: usize,
        #[serde(default = "d_dev_fraction")]
        dev_fraction: f64,
        #[serde(default = "d_dim")]
        dim: usize,
        #[serde(default = "d_detect_centroid")]
        centroid_min_distance: f64,
        #[serde(default = "d_intra_noise")]
        intra_noise: f64,
        #[serde(default = "d_detect_spurious")]
        spurious_rate: f64,
        #[serde(default)]
        seed: u64,
    },
}

fn d_participants() -> usize {
    32
}
fn d_windows() -> usize {
    12
}
fn d_window_secs() -> f64 {
    600.0
}
fn d_dim() -> usize {
    16
}
fn d_cohort_centroid() -> f64 {
    0.6
}
fn d_intra_noise() -> f64 {
    0.05
}
fn d_cohort_spurious() -> f64 {
    0.02
}
fn d_recordings() -> usize {
    200
}
fn d_max_speakers() -> usize {
    4
}
fn d_dev_fraction() -> f64 {
    0.5
}
fn d_detect_centroid() -> f64 {
    0.8
}
fn d_detect_spurious() -> f64 {
    0.05
}

fn simulate(config_path: &Path, out: &Path, seed_override: Option<u64>) -> Result<(), CliError> {
    let text = std::fs::read_to_string(config_path)
        .with_context(|| format!("reading config {}", config_path.display()))?;
    let config: SimulateConfig =
        serde_json::from_str(&text).with_context(|| "parsing simulate config")?;
    let corpus = match config {
        SimulateConfig::Cohort {
            n_participants,
            windows_per_participant,
            window_secs,
            null_model,
            model,
            dim,
            centroid_min_distance,
            intra_noise,
            spurious_rate,
            seed,
        } => {
            let model = match (null_model, model) {
                (true, _) => SeverityModel::null(),
                (false, Some(m)) => SeverityModel {
                    cut: m.cut,
                    ratio_base: m.ratio_base,
                    ratio_slope_low: m.ratio_slope_low,
                    ratio_at_cut: m.ratio_at_cut,
                    ratio_slope_high: m.ratio_slope_high,
                    response_base: m.response_base,
                    response_slope: m.response_slope,
                },
                (false, None) => SeverityModel::piecewise(),
            };
            gen_cohort(&CohortSpec {
                n_participants,
                windows_per_participant,
                window_secs,
                model,
                dim,
                centroid_min_distance,
                intra_noise,
                spurious_rate,
                seed: seed_override.unwrap_or(seed),
                ..CohortSpec::default()
            })?
        }
        SimulateConfig::Detection {
            n_recordings,
            duration,
            max_speakers,
            dev_fraction,
            dim,
            centroid_min_distance,
            intra_noise,
            spurious_rate,
            seed,
        } => gen_detection_corpus(&DetectionCorpusSpec {
            n_recordings,
            duration,
            max_speakers,
            dev_fraction,
            conversation: ConversationSpec::default(),
            embedding: EmbeddingSpec {
                dim,
                centroid_min_distance,
                intra_noise,
                spurious_rate,
                seed: 0,
            },
            seed: seed_override.unwrap_or(seed),
        })?,
    };
    write_corpus(out, &corpus)?;
    println!(
        "wrote {} recordings ({} participants) and manifest.json",
        corpus.manifest.recordings.len(),
        corpus.manifest.participants.len()
    );
    Ok(())
}

/// off | heuristic | model=<path>, plus `both` where allowed.
fn parse_spurious(arg: &str, allow_both: bool) -> Result<Option<SpuriousMode>, CliError> {
    if arg == "both" {
        if allow_both {
            return Ok(None);
        }
        return Err(CliError::Usage(
            "--spurious both is only valid for eval".into(),
        ));
    }
    let mode = match arg {
        "off" => SpuriousMode::Off,
        "heuristic" => SpuriousMode::Heuristic {
            min_share: DEFAULT_MIN_SHARE,
        },
        _ => match arg.strip_prefix("model=") {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading spurious model {path}"))?;
                let forest = Forest::from_json(&text)
                    .with_context(|| format!("parsing spurious model {path}"))?;
                SpuriousMode::Model(forest)
            }
            None => {
                return Err(CliError::Usage(format!(
                    "--spurious must be off, heuristic, or model=<path>, got {arg:?}"
                )))
            }
        },
    };
    Ok(Some(mode))
}

/// start:end:step, or a comma-separated list of thresholds.
fn parse_grid(arg: &str) -> Result<Vec<f64>, CliError> {
    let bad = |why: &str| CliError::Usage(format!("--grid {arg:?}: {why}"));
    let grid = if arg.contains(':') {
        let parts: Vec<&str> = arg.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("expected start:end:step"));
        }
        let nums: Vec<f64> = parts
            .iter()
            .map(|p| p.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad("unparseable number"))?;
        let (start, end, step) = (nums[0], nums[1], nums[2]);
        if step <= 0.0 || end < start {
            return Err(bad("need step > 0 and end >= start"));
        }
        let n = ((end - start) / step).round() as usize;
        (0..=n)
            // Snap accumulated float error off the grid points.
            .map(|i| ((start + i as f64 * step) * 1e6).round() / 1e6)
            .filter(|t| *t <= end + 1e-12)
            .collect()
    } else {
        arg.split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|_| bad("unparseable number"))?
    };
    if grid.is_empty() || grid.iter().any(|t| *t <= 0.0) {
        return Err(bad("thresholds must be positive"));
    }
    Ok(grid)
}

fn tune(
    manifest: &Path,
    grid_arg: &str,
    spurious_arg: &str,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let grid = if grid_arg == "default" {
        default_threshold_grid()
    } else {
        parse_grid(grid_arg)?
    };
    let mode = parse_spurious(spurious_arg, false)?.expect("both rejected above");
    let (_, recordings) = load_corpus(manifest)?;
    let report = run_tune(&recordings, &grid, &mode)?;
    if let Some(path) = out {
        write_atomic(path, &report::tune_csv(&report))?;
    }
    let best_acc = report
        .grid
        .iter()
        .zip(&report.accuracy_per_threshold)
        .find(|(t, _)| **t == report.best_threshold)
        .map(|(_, a)| *a)
        .unwrap_or(0.0);
    println!("best_threshold {}", report.best_threshold);
    println!("dev_accuracy {best_acc}");
    Ok(())
}

fn eval(
    manifest: &Path,
    threshold: f64,
    spurious_arg: &str,
    baseline: bool,
    seed: u64,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let (screened, unscreened) = match parse_spurious(spurious_arg, true)? {
        None => (
            Some(SpuriousMode::Heuristic {
                min_share: DEFAULT_MIN_SHARE,
            }),
            true,
        ),
        Some(SpuriousMode::Off) => (None, true),
        Some(mode) => (Some(mode), false),
    };
    let (_, recordings) = load_corpus(manifest)?;
    let rows = run_eval(
        &recordings,
        threshold,
        screened.as_ref(),
        unscreened,
        baseline.then_some(seed),
    )?;
    print!("{}", report::eval_table(&rows));
    if let Some(path) = out {
        write_atomic(path, &report::eval_csv(&rows, threshold))?;
    }
    Ok(())
}

fn analyze(
    manifest: &Path,
    threshold: f64,
    top_k: usize,
    window_secs: f64,
    spurious_arg: &str,
    out: &Path,
) -> Result<(), CliError> {
    if window_secs <= 0.0 {
        return Err(CliError::Usage("--window-secs must be positive".into()));
    }
    let mode = parse_spurious(spurious_arg, false)?.expect("both rejected above");
    let (manifest_data, recordings) = load_corpus(manifest)?;
    let options = AnalysisOptions {
        threshold,
        spurious: mode,
        window_secs,
        top_k,
    };
    let profiles = analyze_participants(&manifest_data, &recordings, &options)?;
    let rows = statistics_report(&profiles, DEFAULT_SEVERITY_CUT);
    std::fs::create_dir_all(out)
        .with_context(|| format!("creating output dir {}", out.display()))?;
    write_atomic(&out.join("participants.csv"), &report::participants_csv(&profiles))?;
    write_atomic(&out.join("statistics.csv"), &report::statistics_csv(&rows))?;
    println!("participants {}", profiles.len());
    print!("{}", report::statistics_summary(&rows));
    Ok(())
}

fn baseline_train(manifest: &Path, out: &Path, seed: u64) -> Result<(), CliError> {
    let (_, recordings) = load_corpus(manifest)?;
    let model = dyadic_core::pipeline::train_baseline_on_dev(&recordings, seed)?;
    write_atomic(out, &model.to_json())?;
    println!("trained baseline on dev split ({} trees)", model.forest.config.n_trees);
    Ok(())
}

fn baseline_predict(model_path: &Path, manifest: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let text = std::fs::read_to_string(model_path)
        .with_context(|| format!("reading model {}", model_path.display()))?;
    let model = dyadic_core::baseline::BaselineModel::from_json(&text)
        .with_context(|| format!("parsing model {}", model_path.display()))?;
    let (_, recordings) = load_corpus(manifest)?;
    let mut csv = String::from("recording_id,split,prediction,vote_fraction\n");
    for rec in &recordings {
        let features = dyadic_core::baseline::compute_vad_features(&rec.timeline)?;
        let (verdict, fraction) = dyadic_core::baseline::predict_baseline(&model, &features)?;
        let line = format!(
            "{},{},{},{}\n",
            rec.entry.recording_id,
            report::split_name(rec.entry.split),
            if verdict.is_dyadic { "dyadic" } else { "non-dyadic" },
            fraction
        );
        print!("{line}");
        csv.push_str(&line);
    }
    if let Some(path) = out {
        write_atomic(path, &csv)?;
    }
    Ok(())
}

fn spurious_train(manifest: &Path, threshold: f64, out: &Path, seed: u64) -> Result<(), CliError> {
    let (_, recordings) = load_corpus(manifest)?;
    let clusterings: Vec<_> = recordings
        .iter()
        .filter(|r| r.entry.annotated && r.entry.split == dyadic_core::io::Split::Dev)
        .map(|r| {
            dyadic_core::clustering::cluster_segments(&r.table, threshold)
                .map(|clusters| (r, clusters))
        })
        .collect::<Result<_, _>>()?;
    if clusterings.is_empty() {
        return Err(CliError::Run(anyhow::anyhow!(
            "no annotated dev recordings in manifest"
        )));
    }
    let annotated: Vec<AnnotatedClustering<'_>> = clusterings
        .iter()
        .map(|(r, clusters)| AnnotatedClustering {
            clusters,
            table: &r.table,
            timeline: &r.timeline,
        })
        .collect();
    let model = train_spurious_model(&annotated, ForestConfig::with_seed(seed))?;
    write_atomic(out, &model.to_json())?;
    println!(
        "trained spurious screen on {} clusters from {} recordings",
        annotated
            .iter()
            .map(|a| a.clusters.n_clusters)
            .sum::<usize>(),
        annotated.len()
    );
    Ok(())
}
