use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use grad_core::ablate::{ablate, AblationRow, Grid};
use grad_core::config::RunConfig;
use grad_core::corrupt::CorruptionSpec;
use grad_core::dataset::{load_split, save_split, Split};
use grad_core::metrics::MetricsReport;
use grad_core::plot::{curves_from_csv, ribbon, ribbons_from_predictions, severity_curves};
use grad_core::synth::generate_dataset;
use grad_core::train::{train_with, EpochLog};
use grad_core::{checkpoint, eval, GradError};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser)]
#[command(name = "grad", version, about = "Multimodal surgical workflow recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// key = value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Extra KEY=VALUE overrides, applied last
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic train and test splits
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Train a model and write its checkpoint and epoch log
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a checkpoint on the test split
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Corrupt test frames first, as KIND:SEVERITY
        #[arg(long)]
        corruption: Option<String>,
    },
    /// Evaluate a checkpoint on every corruption kind and severity
    CorruptEval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Train and evaluate ablation grids
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Grid names (components, domains, mix, sides, loss, lambda, fusion); all by default
        #[arg(long = "grid")]
        grids: Vec<String>,
        /// Comma-separated seeds; the configured seed by default
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
    },
    /// Render ribbons and severity curves as PPM images
    Plot {
        #[command(flatten)]
        common: Common,
        /// Metrics CSV with run, severity and acc columns
        #[arg(long)]
        report: Option<PathBuf>,
        /// Predictions CSV written by `eval`
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
}

fn load_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    for kv in &c.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| GradError::Config(format!("--set {kv:?} is not KEY=VALUE")))?;
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(c: &Common) -> Result<&Path> {
    fs::create_dir_all(&c.out).with_context(|| format!("creating {}", c.out.display()))?;
    Ok(&c.out)
}

fn write(path: PathBuf, data: impl AsRef<[u8]>) -> Result<()> {
    fs::write(&path, data).with_context(|| format!("writing {}", path.display()))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn summary(r: &MetricsReport) -> String {
    format!(
        "acc {:.2}  edit {:.2}  OP {:.2}  OR {:.2}  OF1 {:.2}  CP {:.2}  CR {:.2}  CF1 {:.2}",
        r.acc, r.edit, r.op, r.or_, r.of1, r.cp, r.cr, r.cf1
    )
}

fn gen_data(c: &Common) -> Result<()> {
    let cfg = load_config(c)?;
    let (train, test) = generate_dataset(cfg.seed, cfg.n_train, cfg.n_test, &cfg.phases)?;
    let dir = out_dir(c)?;
    for (name, seqs) in [("train.grd", train), ("test.grd", test)] {
        let path = dir.join(name);
        save_split(
            &path,
            &Split {
                classes: cfg.phases.classes,
                sequences: seqs,
            },
        )?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn train_cmd(c: &Common) -> Result<()> {
    let cfg = load_config(c)?;
    let split = load_split(&cfg.train_path)?;
    let dir = out_dir(c)?;
    let start = Instant::now();
    let outcome = train_with(&cfg, &split, |e| {
        let val = e.val_acc.map_or("-".to_string(), |v| format!("{v:.2}"));
        eprintln!(
            "epoch {:>3}  loss {:.4}  cce {:.4}  disc {:.4}  val acc {val}  [{:.0}s]",
            e.epoch,
            e.loss,
            e.l_cce,
            e.disc,
            start.elapsed().as_secs_f64()
        );
    })?;
    let mut log = format!("{}\n", EpochLog::CSV_HEADER);
    for e in &outcome.log {
        log.push_str(&e.csv_row());
        log.push('\n');
    }
    write(dir.join("epochs.csv"), log)?;
    write(dir.join("config.txt"), cfg.to_text())?;
    let path = dir.join("model.grad");
    checkpoint::save(&path, &outcome.model)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn eval_cmd(c: &Common, ckpt: &Path, corruption: Option<&str>) -> Result<()> {
    let spec = corruption.map(str::parse::<CorruptionSpec>).transpose()?;
    let cfg = load_config(c)?;
    let model = checkpoint::load(ckpt)?;
    let test = load_split(&cfg.test_path)?;
    let report = eval::evaluate(&model, &test.sequences, spec, cfg.seed)?;
    println!("{}", summary(&report));
    let dir = out_dir(c)?;
    let (name, sev) = spec.map_or(("none".to_string(), 0), |s| (s.kind.to_string(), s.severity));
    write(
        dir.join("metrics.csv"),
        format!("{}\n{}\n", MetricsReport::CSV_HEADER, report.csv_row("model", &name, sev)),
    )?;
    if spec.is_none() {
        write(dir.join("predictions.csv"), eval::predictions_csv(&model, &test.sequences)?)?;
    }
    Ok(())
}

fn corrupt_eval(c: &Common, ckpt: &Path) -> Result<()> {
    let cfg = load_config(c)?;
    let model = checkpoint::load(ckpt)?;
    let test = load_split(&cfg.test_path)?;
    let mut csv = format!("{}\n", MetricsReport::CSV_HEADER);
    let clean = eval::evaluate(&model, &test.sequences, None, cfg.seed)?;
    csv.push_str(&clean.csv_row("model", "none", 0));
    csv.push('\n');
    for spec in CorruptionSpec::grid() {
        let r = eval::evaluate(&model, &test.sequences, Some(spec), cfg.seed)?;
        eprintln!("{spec:<16} {}", summary(&r));
        csv.push_str(&r.csv_row("model", spec.kind.name(), spec.severity));
        csv.push('\n');
    }
    write(out_dir(c)?.join("robustness.csv"), csv)
}

fn ablate_cmd(c: &Common, grids: &[String], seeds: &[u64]) -> Result<()> {
    let cfg = load_config(c)?;
    let grids: Vec<Grid> = if grids.is_empty() {
        Grid::ALL.to_vec()
    } else {
        grids.iter().map(|g| g.parse()).collect::<grad_core::Result<_>>()?
    };
    let seeds = if seeds.is_empty() { vec![cfg.seed] } else { seeds.to_vec() };
    let train = load_split(&cfg.train_path)?;
    let test = load_split(&cfg.test_path)?;
    let dir = out_dir(c)?.to_path_buf();
    let path = dir.join("ablation.csv");
    let mut csv = format!("{}\n", AblationRow::CSV_HEADER);
    ablate(&cfg, &grids, &seeds, &train, &test, |row| {
        eprintln!("{:<12} {:<28} seed {:<4} {}", row.grid.name(), row.setting, row.seed, summary(&row.report));
        csv.push_str(&row.csv_row());
        csv.push('\n');
        // keep partial results if a later run fails
        let _ = fs::write(&path, &csv);
    })?;
    write(path, csv)
}

fn plot_cmd(c: &Common, report: Option<&Path>, predictions: Option<&Path>) -> Result<()> {
    if report.is_none() && predictions.is_none() {
        return Err(GradError::Config("plot needs --report and/or --predictions".into()).into());
    }
    let dir = out_dir(c)?;
    if let Some(p) = report {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let curves = curves_from_csv(&text)?;
        for (i, cv) in curves.iter().enumerate() {
            eprintln!("curve {i}: {} {:?}", cv.name, cv.values);
        }
        write(dir.join("severity.ppm"), severity_curves(&curves).to_ppm())?;
    }
    if let Some(p) = predictions {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        for (i, (truth, pred)) in ribbons_from_predictions(&text)?.iter().enumerate() {
            let img = ribbon(&[truth, pred], 12, 2)?;
            write(dir.join(format!("ribbon_{i:03}.ppm")), img.to_ppm())?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { common } => gen_data(&common),
        Command::Train { common } => train_cmd(&common),
        Command::Eval {
            common,
            checkpoint,
            corruption,
        } => eval_cmd(&common, &checkpoint, corruption.as_deref()),
        Command::CorruptEval { common, checkpoint } => corrupt_eval(&common, &checkpoint),
        Command::Ablate { common, grids, seeds } => ablate_cmd(&common, &grids, &seeds),
        Command::Plot {
            common,
            report,
            predictions,
        } => plot_cmd(&common, report.as_deref(), predictions.as_deref()),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.downcast_ref::<GradError>() {
        return e.exit_code() as u8;
    }
    // file-system failures wrapped with context
    if err.downcast_ref::<std::io::Error>().is_some() {
        return 3;
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
