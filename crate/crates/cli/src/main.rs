//! `gmpr`: command-line front end for the robust pruning library.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gmpr_core::corruption::{self, CorruptionSpec, NoiseKind};
use gmpr_core::harness::{self, ExperimentConfig, OutputFormat, Reference, RowSink};
use gmpr_core::io::{read_dataset, write_csv, write_dataset};
use gmpr_core::selectors::{Execution, SelectionConfig, SelectorKind, TargetMode};
use gmpr_core::{apply_feature_map, Dataset, Error, FeatureMapSpec, GmSolverConfig, Result};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "gmpr",
    version,
    about = "Robust data pruning by geometric-median matching"
)]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file (or directory for `convergence`). Defaults to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Table format for tabular output.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sample a corrupted Gaussian-mixture dataset from a preset.
    Gen {
        #[arg(long, default_value = "paper-2d-mixture")]
        preset: String,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0.0)]
        psi: f64,
    },
    /// Corrupt an existing dataset.
    Corrupt {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        kind: CorruptKind,
        #[arg(long, default_value_t = 0.1)]
        psi: f64,
        /// Noise scale for additive kinds.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long, default_value_t = 10)]
        num_classes: u32,
        /// Comma-separated target mean for `hijack`.
        #[arg(long, value_delimiter = ',')]
        target: Vec<f64>,
    },
    /// Select a subset and write its row indices.
    Select {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        selector: SelectorKind,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        batches: usize,
        #[arg(long, value_enum, default_value_t = Target::GmGlobal)]
        target_mode: Target,
        /// Run batches on all cores (global targets only).
        #[arg(long)]
        parallel: bool,
        #[command(flatten)]
        gm: GmArgs,
        #[command(flatten)]
        map: MapArgs,
    },
    /// Score a selection against the clean rows of a dataset.
    Eval {
        #[arg(long)]
        input: PathBuf,
        /// Newline-delimited row indices, as written by `select`.
        #[arg(long)]
        indices: PathBuf,
        /// Comma-separated reference mean; defaults to the clean-row mean.
        #[arg(long, value_delimiter = ',')]
        reference_mean: Vec<f64>,
        #[command(flatten)]
        map: MapArgs,
    },
    /// Run a convergence sweep from a JSON config.
    Convergence {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a mean-vs-median breakdown sweep from a JSON config.
    Breakdown {
        #[arg(long)]
        config: PathBuf,
    },
    /// Time the geometric-median solver over an (n, d) grid.
    BenchGm {
        #[arg(long, value_delimiter = ',', default_values_t = [2000, 4000, 8000])]
        n: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [8, 16, 32])]
        d: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[command(flatten)]
        gm: GmArgs,
    },
    /// Time batched selection over a list of batch counts.
    BenchBatch {
        #[arg(long, default_value_t = 10000)]
        n: usize,
        #[arg(long, default_value_t = 256)]
        k: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [1, 4, 16])]
        batches: Vec<usize>,
        #[arg(long, default_value_t = 16)]
        dim: usize,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[command(flatten)]
        gm: GmArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum CorruptKind {
    Gaussian,
    Uniform,
    LabelFlip,
    Hijack,
}

#[derive(Clone, Copy, ValueEnum)]
enum Target {
    GmGlobal,
    GmPerBatch,
    Mean,
    MeanPerBatch,
}

impl From<Target> for TargetMode {
    fn from(t: Target) -> Self {
        match t {
            Target::GmGlobal => TargetMode::GmGlobal,
            Target::GmPerBatch => TargetMode::GmPerBatch,
            Target::Mean => TargetMode::EmpiricalMean,
            Target::MeanPerBatch => TargetMode::EmpiricalMeanPerBatch,
        }
    }
}

#[derive(Args)]
struct GmArgs {
    /// Fraction of rows used to estimate the geometric median.
    #[arg(long, default_value_t = 1.0)]
    gamma_gm: f64,
    #[arg(long, default_value_t = 1e-8)]
    epsilon: f64,
    #[arg(long, default_value_t = 1000)]
    t_max: usize,
}

impl GmArgs {
    fn config(&self, seed: u64) -> GmSolverConfig {
        GmSolverConfig {
            epsilon: self.epsilon,
            t_max: self.t_max,
            gamma_gm: self.gamma_gm,
            seed,
            ..GmSolverConfig::default()
        }
    }
}

#[derive(Args)]
struct MapArgs {
    /// Explicit feature map applied before selection.
    #[arg(long, value_enum, default_value_t = MapKind::Identity)]
    feature_map: MapKind,
    #[arg(long, default_value_t = 2)]
    degree: u32,
    /// Polynomial kernel offset.
    #[arg(long, default_value_t = 1.0)]
    c: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum MapKind {
    Identity,
    Poly,
}

impl MapArgs {
    fn spec(&self) -> FeatureMapSpec {
        match self.feature_map {
            MapKind::Identity => FeatureMapSpec::Identity,
            MapKind::Poly => FeatureMapSpec::Polynomial {
                degree: self.degree,
                c: self.c,
            },
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_data_error() { 3 } else { 2 })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    let format = OutputFormat::from(cli.format);
    let out = cli.out.as_deref();
    match cli.command {
        Command::Gen { preset, n, psi } => {
            let spec = CorruptionSpec::preset(&preset, psi)?;
            emit_dataset(out, &corruption::make_gmm_dataset(n, &spec, seed)?)
        }
        Command::Corrupt {
            input,
            kind,
            psi,
            scale,
            num_classes,
            target,
        } => {
            let data = read_dataset(&input)?;
            let result = match kind {
                CorruptKind::Gaussian | CorruptKind::Uniform => {
                    let noise = if matches!(kind, CorruptKind::Gaussian) {
                        NoiseKind::Gaussian
                    } else {
                        NoiseKind::Uniform
                    };
                    let noisy =
                        corruption::additive_noise(&data.embeddings, psi, noise, scale, seed)?;
                    Dataset::new(noisy.embeddings, data.labels, noisy.corrupt_mask)?
                }
                CorruptKind::LabelFlip => {
                    let labels = data.labels.as_deref().ok_or_else(|| {
                        Error::Format(format!("{}: no label column to flip", input.display()))
                    })?;
                    let flipped = corruption::flip_labels(labels, psi, num_classes, seed)?;
                    let mask = flipped.iter().zip(labels).map(|(a, b)| a != b).collect();
                    Dataset::new(data.embeddings, Some(flipped), Some(mask))?
                }
                CorruptKind::Hijack => {
                    let (x, idx) = corruption::hijack_mean(&data.embeddings, &target)?;
                    let mut mask = data.corrupt_mask.unwrap_or_else(|| vec![false; idx]);
                    mask.push(true);
                    let labels = data.labels.map(|mut l| {
                        l.push(0);
                        l
                    });
                    Dataset::new(x, labels, Some(mask))?
                }
            };
            emit_dataset(out, &result)
        }
        Command::Select {
            input,
            selector,
            k,
            batches,
            target_mode,
            parallel,
            gm,
            map,
        } => {
            let t = Instant::now();
            let data = read_dataset(&input)?;
            let t_load = t.elapsed().as_secs_f64();
            let t = Instant::now();
            let spec = map.spec();
            let phi = apply_feature_map(&spec, &data.embeddings)?;
            let t_map = t.elapsed().as_secs_f64();
            let cfg = SelectionConfig {
                k,
                batches,
                seed,
                gm: gm.config(seed),
                target_mode: target_mode.into(),
                execution: if parallel {
                    Execution::Parallel
                } else {
                    Execution::Sequential
                },
            };
            let t = Instant::now();
            let sel = selector.select(&phi, &cfg)?;
            let t_select = t.elapsed().as_secs_f64();
            let text: String = sel.indices.iter().map(|i| format!("{i}\n")).collect();
            match out {
                Some(path) => {
                    write_text(path, &text)?;
                    let sidecar = json!({
                        "input": input,
                        "selector": selector,
                        "feature_map": spec,
                        "config": cfg,
                        "seed": seed,
                        "timings": {"load": t_load, "feature_map": t_map, "select": t_select},
                        "target": sel.target,
                    });
                    harness::write_json(&sidecar_path(path), &sidecar)
                }
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
        Command::Eval {
            input,
            indices,
            reference_mean,
            map,
        } => {
            let data = read_dataset(&input)?;
            let picked = read_indices(&indices)?;
            let phi = apply_feature_map(&map.spec(), &data.embeddings)?;
            let mut reference = Reference::from_clean_rows(&data, &phi)?;
            if !reference_mean.is_empty() {
                reference.mean = reference_mean;
            }
            let sel = gmpr_core::SelectionResult {
                indices: picked,
                trace: Vec::new(),
                target: gmpr_core::selectors::MatchTarget::None,
            };
            if let Some(&bad) = sel.indices.iter().find(|&&i| i >= data.n()) {
                return Err(Error::Parse {
                    path: indices,
                    line: 0,
                    msg: format!("index {bad} out of range for {} rows", data.n()),
                });
            }
            let report = harness::evaluate_selection(
                &data.embeddings,
                &phi,
                &sel,
                data.corrupt_mask.as_deref(),
                &reference,
            )?;
            match format {
                OutputFormat::Json => {
                    let text = serde_json::to_string_pretty(&report)
                        .map_err(|e| Error::Format(e.to_string()))?;
                    emit_text(out, &(text + "\n"))
                }
                OutputFormat::Csv => emit_rows(out, &[EvalRow::from(&report)], format),
            }
        }
        Command::Convergence { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dir = out
                .map(Path::to_path_buf)
                .or_else(|| cfg.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from("results"));
            let result = harness::run_convergence_to(&dir, &cfg, format)?;
            for s in &result.slopes {
                let slope = s.slope.map_or("n/a".to_string(), |v| format!("{v:.3}"));
                println!("{:<24} psi={:<5} slope={slope}", s.selector, s.psi);
            }
            eprintln!(
                "{} records written to {}",
                result.records.len(),
                dir.display()
            );
            Ok(())
        }
        Command::Breakdown { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            emit_rows(out, &harness::run_breakdown(&cfg)?, format)
        }
        Command::BenchGm { n, d, reps, gm } => {
            let rows = harness::bench_gm_scaling(&n, &d, &gm.config(seed), reps, seed)?;
            emit_rows(out, &rows, format)
        }
        Command::BenchBatch {
            n,
            k,
            batches,
            dim,
            reps,
            gm,
        } => {
            let rows = harness::bench_batching(
                n,
                k,
                &batches,
                dim,
                &gm.config(seed),
                Execution::Sequential,
                reps,
                seed,
            )?;
            emit_rows(out, &rows, format)
        }
    }
}

/// Flat CSV row for a metrics report; `wall_times` and `slope` are dropped.
#[derive(serde::Serialize)]
struct EvalRow {
    delta_sq: f64,
    mmd_sq: f64,
    frechet: Option<f64>,
    corrupt_fraction: f64,
}

impl From<&gmpr_core::metrics::MetricsReport> for EvalRow {
    fn from(r: &gmpr_core::metrics::MetricsReport) -> Self {
        Self {
            delta_sq: r.delta_sq,
            mmd_sq: r.mmd_sq,
            frechet: r.frechet,
            corrupt_fraction: r.corrupt_fraction,
        }
    }
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

fn read_indices(path: &Path) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse().map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i as u64 + 1,
                msg: format!("bad index `{}`: {e}", l.trim()),
            })
        })
        .collect()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn emit_text(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => write_text(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit_rows<T: serde::Serialize>(
    out: Option<&Path>,
    rows: &[T],
    format: OutputFormat,
) -> Result<()> {
    let mut sink = match out {
        Some(path) => RowSink::create(path, format)?,
        None => RowSink::stdout(format),
    };
    for r in rows {
        sink.push(r)?;
    }
    sink.flush()
}

fn emit_dataset(out: Option<&Path>, data: &Dataset) -> Result<()> {
    match out {
        Some(path) => write_dataset(path, data),
        None => write_csv(std::io::stdout().lock(), data),
    }
}
