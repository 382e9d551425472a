use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use warpgof::basis::{ScalingFamily, WarpedBasis};
use warpgof::harness::{
    emit_outcomes, emit_plot_data, emit_power_table, envelope_report, load_envelope_constants,
    model_envelope_constants, read_sample_csv, run_level_power_study, with_jobs, ExperimentConfig,
    RateSettings, StudySetup,
};
use warpgof::{
    run_test, CalibrationTable, DesignDistribution, Error, NullFunctional, RegressionFunction, Result,
};

#[derive(Parser, Debug)]
#[command(name = "warpgof", version, about = "Adaptive goodness-of-fit tests for random-design regression")]
struct Cli {
    /// Experiment config (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the config seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Use 25,000 replicates for B1, B2 and B_eval
    #[arg(long, global = true)]
    paper_scale: bool,
    /// Worker threads (results do not depend on it)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory (overrides the config's output_dir)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Calibrate per-level thresholds for one null and write calibration.json
    Calibrate {
        /// Null regression function tag (defaults to the config's truth)
        #[arg(long)]
        null: Option<String>,
        /// Observed x,y CSV whose residuals feed the bootstrap
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Test an x,y CSV against a calibration table
    Test {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Null tag; defaults to the one the table was calibrated for
        #[arg(long)]
        null: Option<String>,
    },
    /// Level and power study; writes power.csv
    Study,
    /// Theoretical envelope and rate curves
    Envelopes {
        /// TOML file of envelope constants; keys left out default to unit
        /// constants with model-derived tau's
        #[arg(long)]
        constants: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        smoothness: f64,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
    },
    /// One realization per design and the truth curve, for plotting
    Plotdata,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::CalibrationMismatch(_) => 3,
        Error::Io { .. } | Error::Csv { .. } | Error::Json(_) => 4,
        _ => 2,
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::Config("this subcommand needs --config <file>".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.paper_scale {
        cfg = cfg.paper_scale();
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: Option<&ExperimentConfig>) -> Result<PathBuf> {
    let dir = match (&cli.out, cfg) {
        (Some(o), _) => o.clone(),
        (None, Some(c)) => c.output_dir.clone(),
        (None, None) => PathBuf::from("out"),
    };
    std::fs::create_dir_all(&dir).map_err(|e| Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    Ok(dir)
}

fn calibrate_cmd(cli: &Cli, null: Option<&str>, data: Option<&Path>) -> Result<()> {
    let cfg = load_config(cli)?;
    let dir = out_dir(cli, Some(&cfg))?;
    let setup = StudySetup::from_config(&cfg)?;
    let f0 = RegressionFunction::from_tag(null.unwrap_or(&cfg.truth_tag))?;
    let source = match data {
        Some(p) => read_sample_csv(p)?,
        None => setup.pilot()?,
    };
    let table = with_jobs(cli.jobs, || setup.calibrate_row(0, &f0, &source))??;
    let path = dir.join("calibration.json");
    table.save(&path)?;
    println!(
        "null={} n={} levels={} u_alpha={} fallback={} clamped={} -> {}",
        table.null_label,
        table.n,
        table.levels.len(),
        table.u_alpha,
        table.fallback,
        table.clamped,
        path.display()
    );
    Ok(())
}

fn test_cmd(cli: &Cli, table: &Path, data: &Path, null: Option<&str>) -> Result<()> {
    let table = CalibrationTable::load(table)?;
    let sample = read_sample_csv(data)?;
    let design = DesignDistribution::from_tag(&table.design_label)?;
    let basis = WarpedBasis::new(ScalingFamily::from_tag(&table.family)?, design.clone(), table.levels.clone())?;
    let f0 = RegressionFunction::from_tag(null.unwrap_or(&table.null_label))?;
    let null = NullFunctional::new(f0, &design);
    let outcome = run_test(&sample, &basis, &null, &table)?;
    let dir = out_dir(cli, None)?;
    emit_outcomes(
        std::slice::from_ref(&outcome),
        &dir.join("outcome.csv"),
        Some(&dir.join("outcome_levels.csv")),
        table.seed,
        &table.config_hash,
    )?;
    println!(
        "reject={} r_alpha={} argmax_level={} alpha={} u_alpha={}",
        outcome.reject, outcome.r_alpha, outcome.argmax_level, outcome.alpha, outcome.u_alpha
    );
    Ok(())
}

fn study_cmd(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let dir = out_dir(cli, Some(&cfg))?;
    let out = run_level_power_study(&cfg, cli.jobs)?;
    let hash = cfg.config_hash();
    emit_power_table(&out.table, &dir.join("power.csv"), cfg.seed, &hash)?;
    for (i, cal) in out.calibrations.iter().enumerate() {
        cal.save(&dir.join(format!("calibration_{i}.json")))?;
    }
    for r in &out.table.rows {
        println!("{}\t{}\t{:.4}\t{:.4}", r.design_tag, r.null_tag, r.estimate, r.mc_stderr);
    }
    Ok(())
}

fn envelopes_cmd(cli: &Cli, constants: Option<&Path>, s: f64, r: f64) -> Result<()> {
    let cfg = load_config(cli)?;
    let dir = out_dir(cli, Some(&cfg))?;
    let mut consts = model_envelope_constants(&cfg)?;
    if let Some(p) = constants {
        consts = load_envelope_constants(p, &consts)?;
    }
    for p in envelope_report(&cfg, &consts, RateSettings { s, r }, &dir)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn plotdata_cmd(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let dir = out_dir(cli, Some(&cfg))?;
    for p in emit_plot_data(&cfg, &dir)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Calibrate { null, data } => calibrate_cmd(cli, null.as_deref(), data.as_deref()),
        Command::Test { table, data, null } => test_cmd(cli, table, data, null.as_deref()),
        Command::Study => study_cmd(cli),
        Command::Envelopes {
            constants,
            smoothness,
            radius,
        } => envelopes_cmd(cli, constants.as_deref(), *smoothness, *radius),
        Command::Plotdata => plotdata_cmd(cli),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
