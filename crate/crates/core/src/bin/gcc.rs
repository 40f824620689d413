use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gcc_core::cli_reporting::{load_config, render_reports, run_ablation_matrix, summary_table, Variant, OUTPUT_ROOT_ENV};
use gcc_core::error::write_string;
use gcc_core::pruning::{apply_plan, ratio_report, ratios_table, PruningPlan};
use gcc_core::trainer::phase2::final_checkpoint_path;
use gcc_core::trainer::record::{Checkpoint, PLAN_FILE};
use gcc_core::trainer::{run_experiment, run_phase1, run_phase2, ExperimentConfig, Phase2Trainer, RunRecord};
use gcc_core::GccError;

/// Generator-discriminator cooperative compression on small synthetic tasks.
///
/// Exit status is 0 on success, 1 for configuration errors and 2 when a run
/// aborts.
#[derive(Parser)]
#[command(name = "gcc", version, about)]
struct Cli {
    /// Root for relative `output_dir` values in config files.
    #[arg(long, global = true, env = OUTPUT_ROOT_ENV)]
    output_root: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sparsity training of the teacher generator, then a one-shot prune to
    /// the student budget. Writes the pruning plan and the pruned spec.
    Prune {
        /// Experiment config (TOML).
        config: PathBuf,
    },
    /// Full two-phase run; writes the record, CSV logs, checkpoints and plots
    /// to the config's output directory.
    Train {
        /// Experiment config (TOML).
        config: PathBuf,
        /// Skip pruning and train the student obtained from this plan.
        #[arg(long)]
        plan: Option<PathBuf>,
        /// Do not render plots after training.
        #[arg(long)]
        no_report: bool,
    },
    /// Re-evaluate the final checkpoint of a finished run.
    Eval {
        /// Output directory of a `train` run.
        run_dir: PathBuf,
    },
    /// Render plots and the summary table of a run directory into its
    /// `report/` subdirectory.
    Report {
        /// Output directory of a `train` run.
        run_dir: PathBuf,
    },
    /// Run ablation variants over a seed set; GCC is always the first row.
    Ablate {
        /// Base experiment config (TOML).
        config: PathBuf,
        /// Variant slug or label (repeatable): full, prune-baseline,
        /// no-texture, no-mse, no-online, no-d-distill, no-g-distill,
        /// no-discriminator, no-selective, no-global.
        #[arg(long = "variant", value_name = "NAME")]
        variants: Vec<String>,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
    },
}

fn is_config_error(e: &GccError) -> bool {
    matches!(
        e,
        GccError::Config(_) | GccError::UnknownKeys(_) | GccError::TomlDe(_) | GccError::UnachievableBudget { .. }
    )
}

fn config(path: &Path, root: &Option<PathBuf>) -> Result<ExperimentConfig, GccError> {
    if let Some(r) = root {
        std::env::set_var(OUTPUT_ROOT_ENV, r);
    }
    match load_config(path) {
        Err(GccError::Io { path, source }) => Err(GccError::Config(format!("cannot read {}: {source}", path.display()))),
        other => other,
    }
}

fn prune(cfg: &ExperimentConfig) -> Result<(), GccError> {
    let out = &cfg.output_dir;
    let p1 = run_phase1(cfg, Some(out))?;
    p1.student_spec.save(&out.join("student_spec.toml"))?;
    println!("method: {}", p1.method);
    println!(
        "MACs: {} -> {} (budget {})",
        p1.plan.original_macs, p1.plan.achieved_macs, p1.plan.target_macs
    );
    print!("{}", ratios_table(&ratio_report(&p1.plan)));
    println!("plan written to {}", out.join(PLAN_FILE).display());
    Ok(())
}

fn train(cfg: &ExperimentConfig, plan: Option<&Path>, report: bool) -> Result<(), GccError> {
    let out = &cfg.output_dir;
    let record = match plan {
        Some(p) => {
            let plan = PruningPlan::load(p)?;
            let student = apply_plan(&cfg.teacher_generator(), &plan)?;
            run_phase2(cfg, &student, Some(out))?
        }
        None => run_experiment(cfg, Some(out))?.1,
    };
    print!("{}", summary_table(&record));
    if report {
        let bundle = render_reports(out)?;
        println!("{} report artifacts in {}", bundle.artifacts.len(), out.join("report").display());
    }
    Ok(())
}

fn eval(run_dir: &Path) -> Result<(), GccError> {
    let record = RunRecord::load(run_dir)?;
    let ckpt = Checkpoint::load(&final_checkpoint_path(run_dir))?;
    let mut trainer = Phase2Trainer::new(&record.config, &ckpt.student_spec)?;
    trainer.restore(&ckpt)?;
    trainer.record.iterations = record.iterations.clone();
    let m = trainer.evaluate()?;
    let json = serde_json::to_string_pretty(&m)?;
    write_string(&run_dir.join("eval.json"), &json)?;
    println!("{json}");
    Ok(())
}

fn report(run_dir: &Path) -> Result<(), GccError> {
    let bundle = render_reports(run_dir)?;
    for a in &bundle.artifacts {
        println!("{}", a.path.display());
    }
    Ok(())
}

fn ablate(cfg: &ExperimentConfig, names: &[String], seeds: &[u64]) -> Result<(), GccError> {
    let variants = names.iter().map(|n| n.parse()).collect::<Result<Vec<Variant>, _>>()?;
    if seeds.is_empty() {
        return Err(GccError::Config("at least one seed is required".into()));
    }
    let table = run_ablation_matrix(cfg, &variants, seeds)?;
    write_string(&cfg.output_dir.join("ablation.csv"), &table.to_csv())?;
    print!("{}", table.to_text());
    Ok(())
}

fn run(cli: Cli) -> Result<(), GccError> {
    let root = cli.output_root;
    match cli.cmd {
        Cmd::Prune { config: c } => prune(&config(&c, &root)?),
        Cmd::Train { config: c, plan, no_report } => train(&config(&c, &root)?, plan.as_deref(), !no_report),
        Cmd::Eval { run_dir } => eval(&run_dir),
        Cmd::Report { run_dir } => report(&run_dir),
        Cmd::Ablate { config: c, variants, seeds } => ablate(&config(&c, &root)?, &variants, &seeds),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if is_config_error(&e) { 1 } else { 2 })
        }
    }
}
