mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use vaas_core::features::ProviderMode;
use vaas_core::fusion::{alpha_grid, FusionMode};
use vaas_core::fx::{FxStatistic, ReferenceStats};
use vaas_core::image::load_image;
use vaas_core::manifest::{load_manifest, DatasetManifest};
use vaas_core::pipeline::{
    analyse_sample, calibrate_dataset, evaluate_dataset, ground_truth, score_dataset, sweep_dataset,
    EngineConfig,
};
use vaas_core::px::Neighbourhood;
use vaas_core::render::{encode_png, render_composite};
use vaas_core::selfcheck::{run_all, SelfCheckOptions};
use vaas_core::synth::{write_dataset, SynthConfig};

use output::{csv_bytes, Outputs};

#[derive(Parser)]
#[command(name = "vaas", version, about = "Attention and patch-consistency anomaly scoring for image forensics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit reference statistics on the manifest's authentic samples.
    Calibrate {
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score every sample and write one CSV row per sample.
    Score {
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate localisation and detection against ground truth.
    Evaluate {
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long = "ref")]
        reference: PathBuf,
        /// JSON report.
        #[arg(long)]
        out: PathBuf,
        /// Per-sample CSV; defaults to the report path with a .csv extension.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Sweep the fusion weight and tabulate detection and localisation.
    Sweep {
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.3)]
        alpha_min: f64,
        #[arg(long, default_value_t = 0.8)]
        alpha_max: f64,
        #[arg(long, default_value_t = 0.05)]
        alpha_step: f64,
        /// Fusion modes to sweep.
        #[arg(long = "modes", value_delimiter = ',', default_values_t = [FusionArg::Weighted, FusionArg::Harmonic])]
        modes: Vec<FusionArg>,
    },
    /// Write six-panel diagnostic composites, one PNG per sample.
    Render {
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Samples to render; all when omitted.
        #[arg(long = "id")]
        ids: Vec<String>,
    },
    /// Run the built-in oracle suites.
    Selfcheck {
        #[arg(long, default_value_t = 0x5EED)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        instances: usize,
        #[arg(long, hide = true, default_value_t = 1e-4)]
        gradient_tolerance: f64,
    },
    /// Generate the seeded synthetic dataset.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        n_authentic: usize,
        #[arg(long, default_value_t = 20)]
        n_tampered: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Toy,
    File,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum FusionArg {
    Weighted,
    Harmonic,
}

impl std::fmt::Display for FusionArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(FusionMode::from(*self).as_str())
    }
}

impl From<FusionArg> for FusionMode {
    fn from(a: FusionArg) -> Self {
        match a {
            FusionArg::Weighted => FusionMode::Weighted,
            FusionArg::Harmonic => FusionMode::Harmonic,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StatisticArg {
    Mean,
    Spread,
}

#[derive(Clone, Copy, ValueEnum)]
enum NeighbourhoodArg {
    #[value(name = "4")]
    Four,
    #[value(name = "8")]
    Eight,
}

#[derive(Args)]
struct EngineArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Feature provider.
    #[arg(long, value_enum, default_value_t = ModeArg::Toy)]
    mode: ModeArg,
    /// Seed of the toy provider.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Toy attention temperature.
    #[arg(long, default_value_t = 0.05)]
    tau: f64,
    /// Token grid as ROWSxCOLS or a single side length.
    #[arg(long, default_value = "14x14", value_parser = parse_grid)]
    token_grid: (usize, usize),
    /// Patch size; defaults to the manifest's.
    #[arg(long)]
    patch_size: Option<usize>,
    /// Toy embedding width; defaults to the manifest's.
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long, default_value_t = 4)]
    last_k: usize,
    #[arg(long, value_enum, default_value_t = StatisticArg::Spread)]
    fx_statistic: StatisticArg,
    #[arg(long, value_enum, default_value_t = NeighbourhoodArg::Eight)]
    neighbourhood: NeighbourhoodArg,
    /// Keep negative neighbour similarities instead of clamping them to 0.
    #[arg(long)]
    no_clamp: bool,
    #[arg(long, default_value_t = 0.5)]
    binarise_threshold: f64,
    #[arg(long, value_enum, default_value_t = FusionArg::Weighted)]
    fusion: FusionArg,
    /// Weight of the global score in weighted fusion.
    #[arg(long, default_value_t = 0.6)]
    alpha: f64,
    #[arg(long, default_value_t = 1e-9)]
    epsilon_h: f64,
    /// Sample-level decision threshold on the hybrid score.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
}

fn parse_grid(s: &str) -> std::result::Result<(usize, usize), String> {
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    match s.split_once(['x', 'X']) {
        Some((r, c)) => Ok((parse(r)?, parse(c)?)),
        None => {
            let n = parse(s)?;
            Ok((n, n))
        }
    }
}

impl EngineArgs {
    fn load(&self) -> Result<(DatasetManifest, EngineConfig)> {
        let manifest = load_manifest(&self.manifest)?;
        let mut cfg = EngineConfig::default();
        cfg.mode = match self.mode {
            ModeArg::Toy => ProviderMode::Toy,
            ModeArg::File => ProviderMode::File,
        };
        let patch_size = self.patch_size.unwrap_or(manifest.meta.patch_size);
        cfg.toy.seed = self.seed;
        cfg.toy.temperature = self.tau;
        cfg.toy.token_grid = self.token_grid;
        cfg.toy.patch_size = patch_size;
        cfg.toy.embed_dim = self.embed_dim.unwrap_or(manifest.meta.embed_dim);
        cfg.fx.last_k = self.last_k;
        cfg.fx.statistic = match self.fx_statistic {
            StatisticArg::Mean => FxStatistic::Mean,
            StatisticArg::Spread => FxStatistic::Spread,
        };
        cfg.px.patch_size = patch_size;
        cfg.px.neighbourhood = match self.neighbourhood {
            NeighbourhoodArg::Four => Neighbourhood::Four,
            NeighbourhoodArg::Eight => Neighbourhood::Eight,
        };
        cfg.px.clamp_negative_sim = !self.no_clamp;
        cfg.px.binarise_threshold = self.binarise_threshold;
        cfg.fusion.mode = self.fusion.into();
        cfg.fusion.alpha = self.alpha;
        cfg.fusion.epsilon_h = self.epsilon_h;
        cfg.threshold = self.threshold;
        cfg.validate()?;
        Ok((manifest, cfg))
    }
}

fn load_reference(path: &Path) -> Result<ReferenceStats<f64>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read reference {}", path.display()))?;
    Ok(ReferenceStats::from_json(&text)?)
}

#[derive(Serialize)]
struct ScoreRow<'a> {
    id: &'a str,
    label: &'a str,
    s_f_raw: f64,
    s_f: f64,
    s_p: f64,
    s_h: f64,
    mode: &'a str,
    alpha: f64,
}

#[derive(Serialize)]
struct EvalRow<'a> {
    id: &'a str,
    label: &'a str,
    s_f: f64,
    s_p: f64,
    s_h: f64,
    precision: f64,
    recall: f64,
    f1: f64,
    iou: f64,
    tp: u64,
    fp: u64,
    #[serde(rename = "fn")]
    fn_: u64,
    tn: u64,
}

#[derive(Serialize)]
struct SweepCsvRow<'a> {
    alpha: f64,
    mode: &'a str,
    f1: f64,
    iou: Option<f64>,
    precision: f64,
    recall: f64,
}

fn run(command: Command) -> Result<()> {
    let mut out = Outputs::default();
    match command {
        Command::Calibrate { engine, out: path } => {
            let (manifest, cfg) = engine.load()?;
            let reference = calibrate_dataset(&manifest, &cfg)?;
            out.write(&path, (reference.to_json()? + "\n").as_bytes())?;
            println!(
                "n_samples={} mu_ref={} sigma_ref={}",
                reference.n_samples, reference.mu_ref, reference.sigma_ref
            );
        }
        Command::Score {
            engine,
            reference,
            out: path,
        } => {
            let (manifest, cfg) = engine.load()?;
            let reference = load_reference(&reference)?;
            let records = score_dataset(&manifest, &reference, &cfg)?;
            let rows = records.iter().map(|r| ScoreRow {
                id: &r.sample_id,
                label: r.label.as_str(),
                s_f_raw: r.s_f_raw,
                s_f: r.s_f,
                s_p: r.s_p,
                s_h: r.s_h,
                mode: r.config.mode.as_str(),
                alpha: r.config.alpha,
            });
            out.write(&path, &csv_bytes(rows)?)?;
            println!("scored {} samples", records.len());
        }
        Command::Evaluate {
            engine,
            reference,
            out: path,
            csv,
        } => {
            let (manifest, cfg) = engine.load()?;
            let reference = load_reference(&reference)?;
            let report = evaluate_dataset(&manifest, &reference, &cfg)?;
            let csv_path = csv.unwrap_or_else(|| path.with_extension("csv"));
            if csv_path == path {
                bail!("report and CSV paths coincide: {}", path.display());
            }
            out.write(&path, (serde_json::to_string_pretty(&report)? + "\n").as_bytes())?;
            let rows = report.per_sample.iter().map(|s| EvalRow {
                id: &s.id,
                label: s.label.as_str(),
                s_f: s.s_f,
                s_p: s.s_p,
                s_h: s.s_h,
                precision: s.precision,
                recall: s.recall,
                f1: s.f1,
                iou: s.iou,
                tp: s.counts.tp,
                fp: s.counts.fp,
                fn_: s.counts.fn_,
                tn: s.counts.tn,
            });
            out.write(&csv_path, &csv_bytes(rows)?)?;
            let auc = report
                .detection
                .auc
                .map_or_else(|| "n/a".to_string(), |a| format!("{a:.4}"));
            println!(
                "pixel iou={:.4} f1={:.4}; detection f1={:.4} auc={auc}",
                report.aggregate.iou, report.aggregate.f1, report.detection.f1
            );
        }
        Command::Sweep {
            engine,
            reference,
            out: path,
            alpha_min,
            alpha_max,
            alpha_step,
            modes,
        } => {
            let (manifest, cfg) = engine.load()?;
            let reference = load_reference(&reference)?;
            let alphas = alpha_grid(alpha_min, alpha_max, alpha_step)?;
            let mut modes: Vec<FusionMode> = modes.into_iter().map(Into::into).collect();
            modes.dedup();
            let rows = sweep_dataset(&manifest, &reference, &cfg, &alphas, &modes)?;
            let csv_rows = rows.iter().map(|r| SweepCsvRow {
                alpha: r.alpha,
                mode: r.mode.as_str(),
                f1: r.f1,
                iou: r.iou,
                precision: r.precision,
                recall: r.recall,
            });
            out.write(&path, &csv_bytes(csv_rows)?)?;
            println!("{} rows ({} alphas × {} modes)", rows.len(), alphas.len(), modes.len());
        }
        Command::Render {
            engine,
            reference,
            out_dir,
            ids,
        } => {
            let (manifest, cfg) = engine.load()?;
            let reference = load_reference(&reference)?;
            let ids: Vec<String> = if ids.is_empty() {
                manifest.samples.iter().map(|s| s.id.clone()).collect()
            } else {
                ids
            };
            std::fs::create_dir_all(&out_dir)
                .with_context(|| format!("cannot create {}", out_dir.display()))?;
            let (h, w) = manifest.meta.image_size;
            for id in &ids {
                let entry = manifest.sample(id)?;
                let analysis = analyse_sample(&manifest, id, &reference, &cfg)?;
                let input = load_image(&manifest.resolve(&entry.image_path))?.resize(h, w);
                let gt = match &entry.mask_path {
                    Some(_) => ground_truth(&manifest, entry)?,
                    None => {
                        eprintln!("warning: {id} has no mask; ground-truth panel shows N/A");
                        None
                    }
                };
                let composite = render_composite(&input, gt.as_ref(), &analysis, &cfg.fusion)?;
                out.write(&out_dir.join(format!("{id}.png")), &encode_png(&composite)?)?;
            }
            println!("rendered {} composites", ids.len());
        }
        Command::Selfcheck {
            seed,
            instances,
            gradient_tolerance,
        } => {
            let opts = SelfCheckOptions {
                seed,
                gradient_tolerance,
                instances,
            };
            let outcomes = run_all(&opts);
            for o in &outcomes {
                println!("{} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
            }
            let failed: Vec<&str> = outcomes.iter().filter(|o| !o.passed).map(|o| o.name).collect();
            if !failed.is_empty() {
                bail!(SelfCheckFailed(failed.join(", ")));
            }
        }
        Command::Synth {
            out_dir,
            seed,
            n_authentic,
            n_tampered,
        } => {
            let cfg = SynthConfig {
                seed,
                n_authentic,
                n_tampered,
                ..SynthConfig::default()
            };
            let path = write_dataset(&cfg, &out_dir)?;
            println!("wrote {}", path.display());
        }
    }
    out.commit();
    Ok(())
}

#[derive(Debug)]
struct SelfCheckFailed(String);

impl std::fmt::Display for SelfCheckFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "failing suites: {}", self.0)
    }
}

impl std::error::Error for SelfCheckFailed {}

/// 1 for invalid input or configuration, 2 for unreadable data and runtime
/// failures.
fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.downcast_ref::<vaas_core::Error>() {
        return if e.is_validation() { 1 } else { 2 };
    }
    if err.downcast_ref::<SelfCheckFailed>().is_some() {
        return 2;
    }
    if err.downcast_ref::<std::io::Error>().is_some() {
        return 2;
    }
    1
}

/// The error chain on one line, skipping causes already quoted by their
/// parent's message.
fn one_line(err: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if msg.contains(&text) {
            continue;
        }
        if !msg.is_empty() {
            msg.push_str(": ");
        }
        msg.push_str(&text);
    }
    msg.replace('\n', " ")
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
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", one_line(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
