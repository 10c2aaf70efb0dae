use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use twoprop::runner::{
    run_experiment, run_sweep, validate_config, write_report, write_sweep, OutputFormat, Preset, RunMode, Validated,
};
use twoprop::slot_sim::{monte_carlo_utility, write_traces, SimMode, SlotInputs};
use twoprop::Error;

#[derive(Parser)]
#[command(name = "twoprop", version, about = "Latency games for two-proposer block production")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON experiment configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// fig5, fig5-calibrated, D1-row, D2-row, table2, homogeneous-mu, ethereum
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Output directory (overrides the config)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte-Carlo trials
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Write only this format (default: both)
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliMode {
    Analytic,
    MonteCarlo,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliSimMode {
    TwoProp,
    XiBaseline,
}

#[derive(Subcommand)]
enum Command {
    /// Payoff matrices, equilibria and optional simulation for one scenario
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        mode: Option<CliMode>,
    },
    /// Equilibria across the mean ratios of each sweep row
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Row indices to run (default: all)
        #[arg(long, value_delimiter = ',')]
        row: Option<Vec<usize>>,
    },
    /// Monte-Carlo utilities at one strategy pair
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        delta0: Option<f64>,
        #[arg(long)]
        delta1: Option<f64>,
        #[arg(long, value_enum, default_value = "two-prop")]
        mode: CliSimMode,
        /// Write per-slot JSON-lines traces for this many slots
        #[arg(long)]
        trace: Option<u64>,
    },
    /// Check a configuration and print it with defaults applied
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common) -> Result<Validated, Error> {
    let preset = common.preset.as_deref().map(str::parse::<Preset>).transpose()?;
    let text = match &common.config {
        Some(p) => fs::read_to_string(p).map_err(|e| Error::Parse(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    let mut v = validate_config(&text, preset)?;
    let cfg = &mut v.config;
    if let Some(o) = &common.out {
        cfg.output_dir = o.clone();
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(t) = common.trials {
        cfg.trials = t;
    }
    cfg.validate()?;
    Ok(v)
}

fn output_format(common: &Common) -> Option<OutputFormat> {
    common.format.map(|f| match f {
        Format::Csv => OutputFormat::Csv,
        Format::Json => OutputFormat::Json,
    })
}

fn print_warnings(v: &Validated) {
    for w in &v.warnings {
        eprintln!("warning: {w}");
    }
}

fn run(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Analyze { common, mode } => {
            let mut v = load(&common)?;
            print_warnings(&v);
            if let Some(m) = mode {
                v.config.mode = match m {
                    CliMode::Analytic => RunMode::Analytic,
                    CliMode::MonteCarlo => RunMode::MonteCarlo,
                    CliMode::Both => RunMode::Both,
                };
            }
            let report = run_experiment(&v.config)?;
            let files = write_report(&report, &v.config.output_dir, output_format(&common))?;
            if let Some(eq) = &report.equilibria {
                for e in &eq.two_prop {
                    println!("2prop equilibrium ({}, {}) utilities ({:.6}, {:.6})", e.delta_0, e.delta_1, e.u0, e.u1);
                }
                for x in &eq.xi {
                    println!("xi optimum player {} delta {} utility {:.6}", x.player, x.delta, x.utility);
                }
            }
            for n in &report.notes {
                println!("note: {n}");
            }
            println!("wrote {} to {}", files.join(", "), v.config.output_dir.display());
        }
        Command::Sweep { common, row } => {
            let v = load(&common)?;
            print_warnings(&v);
            let points = run_sweep(&v.config, row.as_deref())?;
            let failed = points.iter().filter(|p| !p.is_ok()).count();
            let files = write_sweep(&points, &v.config.output_dir, output_format(&common))?;
            println!(
                "{} games, {} failed; wrote {} to {}",
                points.len(),
                failed,
                files.join(", "),
                v.config.output_dir.display()
            );
        }
        Command::Simulate { common, delta0, delta1, mode, trace } => {
            let v = load(&common)?;
            print_warnings(&v);
            let cfg = &v.config;
            let spec = cfg.scenario_spec()?;
            let d0 = delta0.unwrap_or(cfg.strategy.0);
            let d1 = delta1.unwrap_or(cfg.strategy.1);
            let mode = match mode {
                CliSimMode::TwoProp => SimMode::TwoProp,
                CliSimMode::XiBaseline => SimMode::XiBaseline,
            };
            let est = monte_carlo_utility(&spec, d0, d1, cfg.trials, cfg.seed, mode)?;
            fs::create_dir_all(&cfg.output_dir)?;
            let fmt = output_format(&common);
            if fmt != Some(OutputFormat::Json) {
                let mut w = csv::Writer::from_path(cfg.output_dir.join("simulation.csv"))?;
                w.write_record(["player", "delta_0", "delta_1", "mean", "stderr", "trials", "seed"])?;
                for (p, m, s) in [(0, est.mean_0, est.stderr_0), (1, est.mean_1, est.stderr_1)] {
                    w.write_record([
                        p.to_string(),
                        d0.to_string(),
                        d1.to_string(),
                        m.to_string(),
                        s.to_string(),
                        est.trials.to_string(),
                        cfg.seed.to_string(),
                    ])?;
                }
                w.flush()?;
            }
            if fmt != Some(OutputFormat::Csv) {
                let f = fs::File::create(cfg.output_dir.join("simulation.json"))?;
                serde_json::to_writer_pretty(f, &est)?;
            }
            if let Some(slots) = trace {
                let inputs = SlotInputs::new(spec, d0, d1, cfg.seed, mode)?;
                let f = io::BufWriter::new(fs::File::create(cfg.output_dir.join("trace.jsonl"))?);
                write_traces(&inputs, slots, f)?;
            }
            println!(
                "mean ({:.6}, {:.6}) stderr ({:.6}, {:.6}) over {} trials",
                est.mean_0, est.mean_1, est.stderr_0, est.stderr_1, est.trials
            );
        }
        Command::Validate { common } => {
            let v = load(&common)?;
            print_warnings(&v);
            let mut out = io::stdout().lock();
            serde_json::to_writer_pretty(&mut out, &v.config)?;
            writeln!(out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Config(fields) = &e {
                for f in fields {
                    eprintln!("  {f}");
                }
            }
            if e.is_validation() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
