use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use dcf_delay::experiment::{self, Experiment, ExperimentSpec, Report, RowNote, Settings};
use dcf_delay::sim::{self, IdleArrival};
use dcf_delay::{Error, MacPhyParams};

/// Analytic and simulated access delay of a DCF wireless LAN.
#[derive(Parser)]
#[command(name = "dcf-delay", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Saturation throughput S(n), analytic and simulated.
    Throughput {
        #[arg(long, default_value_t = 1)]
        n_min: u32,
        #[arg(long, default_value_t = 50)]
        n_max: u32,
        #[command(flatten)]
        common: Common,
    },
    /// Mean delay over a grid of per-node rates at fixed n.
    DelaySweep {
        #[arg(long)]
        n: usize,
        /// Comma-separated rates in packets/s.
        #[arg(long, value_delimiter = ',', required = true)]
        lambda_grid: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Mean delay over a grid of node counts at fixed rate.
    NSweep {
        #[arg(long)]
        lambda: f64,
        #[arg(long, value_delimiter = ',', required = true)]
        n_grid: Vec<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Re-run the published light-load comparison table.
    TableCheck {
        #[command(flatten)]
        common: Common,
    },
    /// Per-node delay bounds for unequal rates.
    Nonhom {
        #[arg(long, value_delimiter = ',', required = true)]
        rates: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// One simulation run, optionally writing a slot-level trace.
    Simulate {
        #[arg(long, value_delimiter = ',', required = true)]
        rates: Vec<f64>,
        /// Slot trace destination (`time_us,event,winner,n_nonempty`).
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum IdlePolicy {
    Backoff,
    Immediate,
}

#[derive(Args)]
struct Common {
    /// MAC/PHY profile; defaults to the bundled 802.11b 1 Mbit/s profile.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 30)]
    reps: usize,
    #[arg(long, default_value_t = 0.95)]
    confidence: f64,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Measured virtual seconds per replication.
    #[arg(long, default_value_t = 2000.0)]
    measure_time: f64,
    /// Warm-up virtual seconds; defaults to max(10% of measure time, 50000 slots).
    #[arg(long)]
    warmup_time: Option<f64>,
    #[arg(long, default_value_t = 10)]
    n_ref: u32,
    /// Relative error a row may show and still pass.
    #[arg(long, default_value_t = 0.15)]
    error_threshold: f64,
    #[arg(long, value_enum, default_value_t = IdlePolicy::Backoff)]
    idle_arrival: IdlePolicy,
}

impl Common {
    fn settings(&self) -> Result<Settings, Error> {
        let params = match &self.config {
            Some(path) => MacPhyParams::from_cfg_file(path)?,
            None => MacPhyParams::dot11b_1mbps(),
        };
        Ok(Settings {
            params,
            measure_time: self.measure_time,
            warmup_time: self.warmup_time,
            seed: self.seed,
            replications: self.reps,
            confidence: self.confidence,
            n_ref: self.n_ref,
            error_threshold: self.error_threshold,
            idle_arrival: match self.idle_arrival {
                IdlePolicy::Backoff => IdleArrival::Backoff,
                IdlePolicy::Immediate => IdleArrival::Immediate,
            },
            ..Settings::default()
        })
    }

    fn sink(&self) -> io::Result<Box<dyn Write>> {
        Ok(match &self.out {
            Some(p) => Box::new(BufWriter::new(File::create(p)?)),
            None => Box::new(io::stdout().lock()),
        })
    }
}

fn run_experiment(experiment: Experiment, common: &Common) -> Result<ExitCode, Error> {
    let spec = ExperimentSpec::new(experiment, common.settings()?);
    let report = experiment::run(&spec)?;
    let text = experiment::render_csv(&spec, &report)?;
    let mut out = common.sink()?;
    out.write_all(text.as_bytes())?;
    out.flush()?;
    if let Report::Comparison(r) = &report {
        let unstable = r.rows.iter().filter(|row| row.has_note(RowNote::Unstable)).count();
        if unstable > 0 {
            eprintln!("error: {unstable} operating point(s) have utilization >= 1");
            return Ok(ExitCode::from(2));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn simulate(rates: Vec<f64>, trace: Option<PathBuf>, common: &Common) -> Result<ExitCode, Error> {
    let s = common.settings()?;
    let mut cfg = sim::SimConfig::homogeneous(rates.len(), 0.0, s.params, s.measure_time, s.seed);
    cfg.rates = rates;
    cfg.idle_arrival = s.idle_arrival;
    if let Some(w) = s.warmup_time {
        cfg.warmup_time = w;
    }
    let mut trace_file = trace.map(File::create).transpose()?.map(BufWriter::new);
    let m = sim::run_simulation_traced(&cfg, trace_file.as_mut().map(|w| w as &mut dyn Write))?;
    if let Some(mut w) = trace_file {
        w.flush()?;
    }
    let c = s.capacity()?;
    let mut out = common.sink()?;
    writeln!(out, "# capacity_c = {c:.8e}")?;
    writeln!(out, "# generator = {}", sim::RNG_ALGORITHM)?;
    writeln!(out, "# seed = {}", s.seed)?;
    writeln!(out, "node,lambda,generated,delivered,residual,mean_delay")?;
    for (i, (rate, counters)) in cfg.rates.iter().zip(&m.per_node).enumerate() {
        let d = m.node_mean_delay(i).map(|d| format!("{d:.8e}")).unwrap_or_default();
        writeln!(
            out,
            "{i},{rate:.8e},{},{},{},{d}",
            counters.generated, counters.delivered, counters.residual
        )?;
    }
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Throughput { n_min, n_max, common } => {
            run_experiment(Experiment::ThroughputVsN { ns: (n_min..=n_max).collect() }, &common)
        }
        Command::DelaySweep { n, lambda_grid, common } => {
            run_experiment(Experiment::DelayVsLambda { n, lambdas: lambda_grid }, &common)
        }
        Command::NSweep { lambda, n_grid, common } => {
            run_experiment(Experiment::DelayVsN { lambda, ns: n_grid }, &common)
        }
        Command::TableCheck { common } => run_experiment(Experiment::TableCheck, &common),
        Command::Nonhom { rates, common } => run_experiment(Experiment::NonHomogeneous { rates }, &common),
        Command::Simulate { rates, trace, common } => simulate(rates, trace, &common),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::UnstableLoad { .. } | Error::UnstableQueue { .. } | Error::QueueOverflow { .. } => {
                    ExitCode::from(2)
                }
                Error::NoConvergence { .. } => ExitCode::from(3),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
