use blpp_core::harness::{compare, read_records, run, write_outputs, Experiment, ExperimentConfig, Tolerance};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "blpp", version = blpp_core::harness::VERSION, about = "Brownian and geometric last passage percolation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON experiment config; unset keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    samples: Option<usize>,
    /// Fixed Nyström node count per slice.
    #[arg(long)]
    nodes: Option<usize>,
    /// Discrete scale N.
    #[arg(long)]
    scale: Option<usize>,
    #[arg(long)]
    m: Option<u32>,
    /// Smaller sample counts for the validation suites.
    #[arg(long)]
    quick: bool,
    /// Append JSONL and write CSV here instead of printing to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate one kernel at the configured points.
    KernelEval(Common),
    /// Geometric determinant for `G(m, n_i) < a_i`.
    FredholmDiscrete(Common),
    /// Brownian determinant for `L(t_i) <= a_i`.
    FredholmContinuum(Common),
    /// Monte Carlo for the Brownian model.
    McBlpp(Common),
    /// Monte Carlo for the geometric model.
    McGlpp(Common),
    /// Largest GUE eigenvalue frequencies.
    GueOracle(Common),
    /// Discrete-to-continuum kernel error tables.
    LemmaCheck(Common),
    /// Full kernel error table.
    ProductCheck(Common),
    /// Every property suite; exits non-zero if one fails.
    ValidateAll(Common),
    /// Compare the last record of two JSONL files.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 3.0)]
        sigmas: f64,
        #[arg(long, default_value_t = 0.0)]
        absolute: f64,
    },
}

fn configure(common: &Common) -> blpp_core::Result<ExperimentConfig> {
    let mut c = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = common.seed {
        c.seed = v;
    }
    if let Some(v) = common.samples {
        c.samples = v;
    }
    if common.nodes.is_some() {
        c.nodes = common.nodes;
    }
    if let Some(v) = common.scale {
        c.scale = v;
    }
    if let Some(v) = common.m {
        c.m = v;
    }
    c.quick |= common.quick;
    Ok(c)
}

fn experiment(command: &Command) -> Option<(Experiment, &Common)> {
    Some(match command {
        Command::KernelEval(c) => (Experiment::KernelEval, c),
        Command::FredholmDiscrete(c) => (Experiment::FredholmDiscrete, c),
        Command::FredholmContinuum(c) => (Experiment::FredholmContinuum, c),
        Command::McBlpp(c) => (Experiment::McBlpp, c),
        Command::McGlpp(c) => (Experiment::McGlpp, c),
        Command::GueOracle(c) => (Experiment::GueOracle, c),
        Command::LemmaCheck(c) => (Experiment::LemmaCheck, c),
        Command::ProductCheck(c) => (Experiment::ProductCheck, c),
        Command::ValidateAll(c) => (Experiment::ValidateAll, c),
        Command::Compare { .. } => return None,
    })
}

fn execute(cli: &Cli) -> blpp_core::Result<bool> {
    if let Command::Compare { a, b, sigmas, absolute } = &cli.command {
        let last = |p: &PathBuf| {
            read_records(p)?
                .pop()
                .ok_or_else(|| blpp_core::Error::Config(format!("{} holds no records", p.display())))
        };
        let report = compare(&last(a)?, &last(b)?, &Tolerance { sigmas: *sigmas, absolute: *absolute })?;
        println!("{}", serde_json::to_string(&report)?);
        for d in &report.diagnostics {
            eprintln!("{d}");
        }
        return Ok(report.pass);
    }
    let (exp, common) = experiment(&cli.command).expect("compare handled above");
    let record = run(exp, &configure(common)?)?;
    match &common.out {
        Some(dir) => {
            let (jsonl, csv) = write_outputs(&record, dir)?;
            eprintln!("wrote {} and {}", jsonl.display(), csv.display());
        }
        None => println!("{}", record.to_json_line()?),
    }
    for v in &record.verdicts {
        eprintln!("{} {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.name, v.detail);
    }
    Ok(record.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("BLPP_WORKERS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // only fails if a pool already exists, which cannot happen this early
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
