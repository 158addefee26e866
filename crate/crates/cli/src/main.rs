use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use log::info;
use schatten_core::{
    estimator_samples, figure_configs, run_checks, run_variance_experiment, sample_variance,
    BoundSet, ExperimentConfig, SpectrumSpec, VarianceReport,
};

const EXIT_USAGE: u8 = 64;
const EXIT_SKIPPED: u8 = 2;

/// Schatten-2p norm estimation from Gaussian sketches.
#[derive(Debug, Parser)]
#[command(name = "schatten", version)]
struct Cli {
    /// Worker threads (default: all cores)
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the estimator on independent sketches of a spectrum
    Estimate(EstimateArgs),
    /// Print variance bounds and expansions for a list of sketch widths
    Bounds(BoundsArgs),
    /// Run a variance experiment and write its CSV
    Experiment(ExperimentArgs),
    /// Run the deterministic self-checks
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Kv,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    /// Spectrum, e.g. `geometric:rho=0.8,n=100`
    #[arg(long)]
    spectrum: SpectrumSpec,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    p: u64,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    k: u64,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Debug, Args)]
struct BoundsArgs {
    #[arg(long)]
    spectrum: SpectrumSpec,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    p: u64,
    /// Comma-separated sketch widths
    #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
    k: Vec<u64>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// JSON experiment config
    #[arg(long, required_unless_present = "full", conflicts_with = "full")]
    config: Option<PathBuf>,
    /// Regenerate every figure grid at full size (slow)
    #[arg(long, requires = "output_dir")]
    full: bool,
    /// Directory for the `--full` CSVs
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Overrides the config's master seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Only the oracle, tuple-count and inequality batteries
    #[arg(long)]
    quick: bool,
}

fn estimate(args: &EstimateArgs) -> anyhow::Result<String> {
    let s = args.spectrum.build()?;
    let (p, k) = (args.p as usize, args.k as usize);
    let values = estimator_samples(&s, p, k, args.trials, args.seed, 0)?;
    let (mean, stderr) = if values.len() >= 2 {
        let st = sample_variance(&values)?;
        (st.mean, (st.variance / values.len() as f64).sqrt())
    } else {
        (values[0], f64::NAN)
    };
    let mut out = String::new();
    match args.format {
        Format::Csv => {
            out.push_str("trial,theta_hat\n");
            for (i, v) in values.iter().enumerate() {
                writeln!(out, "{i},{v}")?;
            }
            writeln!(out, "mean,stderr\n{mean},{stderr}")?;
        }
        Format::Kv => {
            for (i, v) in values.iter().enumerate() {
                writeln!(out, "trial={i} theta_hat={v}")?;
            }
            writeln!(out, "mean={mean} stderr={stderr}")?;
        }
    }
    Ok(out)
}

fn bounds(args: &BoundsArgs) -> anyhow::Result<String> {
    let s = args.spectrum.build()?;
    if let Some(&k) = args.k.iter().find(|&&k| k < args.p) {
        anyhow::bail!("order p = {} exceeds sketch width k = {k}", args.p);
    }
    let mut out = String::new();
    if let Format::Csv = args.format {
        out.push_str("k,kv,thm2,first_order,second_order,truth_2p\n");
    }
    for &k in &args.k {
        let b = BoundSet::compute(k, args.p, &s)?;
        match args.format {
            Format::Csv => writeln!(
                out,
                "{k},{},{},{},{},{}",
                b.kv, b.thm2, b.first_order, b.second_order, b.truth_2p
            )?,
            Format::Kv => writeln!(
                out,
                "k={k} kv={} thm2={} first_order={} second_order={} truth_2p={}",
                b.kv, b.thm2, b.first_order, b.second_order, b.truth_2p
            )?,
        }
    }
    Ok(out)
}

fn summarise(cfg: &ExperimentConfig, report: &VarianceReport) -> String {
    format!(
        "wrote {} ({} rows, {} skipped)",
        cfg.output_path.display(),
        report.rows.len(),
        report.skipped.len()
    )
}

/// Returns the exit code: 0, or 2 when cells were skipped.
fn experiment(args: &ExperimentArgs) -> anyhow::Result<u8> {
    let mut configs = match (&args.config, &args.output_dir) {
        (Some(path), _) => vec![ExperimentConfig::load(path)?],
        (None, Some(dir)) => {
            std::fs::create_dir_all(dir)?;
            figure_configs(dir, args.seed.unwrap_or(0))
        }
        (None, None) => unreachable!("clap requires --config or --full --output-dir"),
    };
    if let Some(seed) = args.seed {
        configs.iter_mut().for_each(|c| c.master_seed = seed);
    }
    let mut skipped = false;
    for cfg in &configs {
        info!("running {}", cfg.output_path.display());
        let report = run_variance_experiment(cfg)?;
        println!("{}", summarise(cfg, &report));
        skipped |= !report.skipped.is_empty();
    }
    Ok(if skipped { EXIT_SKIPPED } else { 0 })
}

fn verify(args: &VerifyArgs) -> u8 {
    let checks = run_checks(args.quick);
    let failed = checks.iter().filter(|c| !c.passed).count();
    for c in &checks {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        println!("{tag} {}: {}", c.name, c.detail);
    }
    println!("passed={} failed={failed}", checks.len() - failed);
    u8::from(failed > 0)
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.into())
            .build_global()?;
    }
    match cli.command {
        Command::Estimate(a) => print!("{}", estimate(&a)?),
        Command::Bounds(a) => print!("{}", bounds(&a)?),
        Command::Experiment(a) => return experiment(&a),
        Command::Verify(a) => return Ok(verify(&a)),
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let text = e.render().to_string();
            eprint!("{text}");
            if !text.contains("Usage:") {
                eprintln!("\n{}", Cli::command().render_usage());
            }
            return ExitCode::from(EXIT_USAGE);
        }
        Err(e) => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
