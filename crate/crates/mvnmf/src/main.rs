use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mvnmf::error::{Error, Result};
use mvnmf::experiment::{
    evaluate_saved, run_ablation, run_experiment, run_sweep, DatasetSource, ExperimentConfig,
};
use mvnmf::solver::Variant;

#[derive(Parser)]
#[command(
    name = "mvnmf",
    about = "Semi-supervised multi-view NMF experiments: fit, ablate, sweep and score"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Experiment config JSON (or a manifest.json from a previous run).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Hyperparameter preset: yale, orl, ecg or webkb.
    #[arg(long)]
    preset: Option<String>,
    /// Label ratio(s); replaces the config's ratio list.
    #[arg(long = "ratio")]
    ratios: Vec<f64>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Solver variant(s): full, baseline, baseline_alpha, baseline_beta,
    /// no_normalization.
    #[arg(long = "variant")]
    variants: Vec<String>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Run independent cells in parallel (true/false).
    #[arg(long)]
    parallel: Option<bool>,
    /// Export factor matrices per cell.
    #[arg(long)]
    dump_factors: bool,
    /// Export each view's similarity matrix per cell.
    #[arg(long)]
    dump_graphs: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the (ratio x redraw x variant) protocol and write reports.
    Run(CommonArgs),
    /// Grid-sweep hyperparameters one at a time.
    Sweep(CommonArgs),
    /// Run all five solver variants.
    Ablate(CommonArgs),
    /// Generate the configured synthetic dataset and write it to files.
    Synth(CommonArgs),
    /// Score previously exported factors.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        /// Directory holding one cell's exported factors.
        #[arg(long)]
        factors: PathBuf,
    },
}

fn resolve_config(args: &CommonArgs) -> Result<ExperimentConfig> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::from_json_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(preset) = &args.preset {
        config.preset = Some(preset.clone());
    }
    if !args.ratios.is_empty() {
        config.ratios = args.ratios.clone();
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = &args.out {
        config.out_dir = out.clone();
    }
    if !args.variants.is_empty() {
        config.variants = args
            .variants
            .iter()
            .map(|name| {
                Variant::parse(name)
                    .ok_or_else(|| Error::config("variant", format!("unknown variant `{name}`")))
            })
            .collect::<Result<Vec<_>>>()?;
    }
    if let Some(max_iters) = args.max_iters {
        config.solver.max_iters = max_iters;
    }
    if let Some(tol) = args.tol {
        config.solver.tol = tol;
    }
    if let Some(parallel) = args.parallel {
        config.parallel = parallel;
    }
    if args.dump_factors {
        config.dump_factors = true;
    }
    if args.dump_graphs {
        config.dump_graphs = true;
    }
    Ok(config)
}

fn execute() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => {
            let config = resolve_config(&args)?;
            let report = run_experiment(&config)?;
            for a in &report.metrics.aggregates {
                println!(
                    "{:<18} ratio {:<5} AC {:6.2}±{:<5.2} NMI {:6.2}±{:<5.2}",
                    a.variant,
                    a.ratio,
                    100.0 * a.ac_mean,
                    100.0 * a.ac_std,
                    100.0 * a.nmi_mean,
                    100.0 * a.nmi_std
                );
            }
            println!("reports written to {}", report.out_dir.display());
        }
        Command::Sweep(args) => {
            let config = resolve_config(&args)?;
            let report = run_sweep(&config)?;
            for r in &report.records {
                println!(
                    "{:<6} = {:<10} ratio {:<5} AC {:6.2}±{:<5.2} NMI {:6.2}±{:<5.2}",
                    r.parameter,
                    r.value,
                    r.ratio,
                    100.0 * r.ac_mean,
                    100.0 * r.ac_std,
                    100.0 * r.nmi_mean,
                    100.0 * r.nmi_std
                );
            }
            println!("sweep written to {}", report.out_dir.display());
        }
        Command::Ablate(args) => {
            let config = resolve_config(&args)?;
            let report = run_ablation(&config)?;
            for a in &report.metrics.aggregates {
                println!(
                    "{:<18} ratio {:<5} AC {:6.2}±{:<5.2} NMI {:6.2}±{:<5.2}",
                    a.variant,
                    a.ratio,
                    100.0 * a.ac_mean,
                    100.0 * a.ac_std,
                    100.0 * a.nmi_mean,
                    100.0 * a.nmi_std
                );
            }
            println!("ablation written to {}", report.out_dir.display());
        }
        Command::Synth(args) => {
            let config = resolve_config(&args)?;
            let DatasetSource::Synthetic(spec) = &config.dataset else {
                return Err(Error::config("dataset", "synth needs a synthetic source"));
            };
            let dataset = spec.generate()?;
            std::fs::create_dir_all(&config.out_dir).map_err(|e| Error::io(&config.out_dir, e))?;
            let written = dataset.save(&config.out_dir)?;
            for path in written {
                println!("wrote {}", path.display());
            }
        }
        Command::Eval { common, factors } => {
            let config = resolve_config(&common)?;
            let summary = evaluate_saved(&config, &factors)?;
            println!("AC  {}", summary.format_ac());
            println!("NMI {}", summary.format_nmi());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
