use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use cellfree::config::{SelectionMode, SystemConfig};
use cellfree::experiment::{run_experiment, sweep, SweepAxis};
use cellfree::propagation::path_loss_with_branch;
use cellfree::sinr::Approach;
use cellfree::validate::{run_validation, ValidationOptions};

#[derive(Parser)]
#[command(name = "cellfree", version, about = "Cell-free massive MIMO-OFDM spectral-efficiency simulator")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo drops; writes samples.csv, summary.json and cdf.csv.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// 5th-percentile SE along the users-per-RB or APs-per-user axis.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        axis: AxisArg,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Checks every closed form against link-level simulation.
    Validate {
        /// Channel realisations per check.
        #[arg(long, default_value_t = 100_000)]
        realizations: usize,
        /// Data symbols per realisation.
        #[arg(long, default_value_t = 4)]
        symbols: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Directory for checks.csv and terms.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Path gain at one distance and the active model segment.
    Pathloss {
        #[arg(long)]
        distance_km: f64,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    drops: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Approaches to evaluate (repeat or comma-separate; default all).
    #[arg(long, value_enum, value_delimiter = ',')]
    approach: Vec<ApproachArg>,
    /// Near APs per user.
    #[arg(long)]
    ms: Option<usize>,
    /// Threshold coefficient for threshold selection.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Users per RB under MU-OAS.
    #[arg(long)]
    nu: Option<usize>,
    #[arg(long, value_enum)]
    selection: Option<SelectionArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ApproachArg {
    Cf,
    Uc,
    SuOas,
    MuOas,
}

impl From<ApproachArg> for Approach {
    fn from(a: ApproachArg) -> Self {
        match a {
            ApproachArg::Cf => Approach::Cf,
            ApproachArg::Uc => Approach::Uc,
            ApproachArg::SuOas => Approach::SuOas,
            ApproachArg::MuOas => Approach::MuOas,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SelectionArg {
    Fixed,
    Threshold,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Nu,
    Ms,
}

fn load_config(path: Option<&Path>) -> anyhow::Result<SystemConfig> {
    match path {
        Some(p) => SystemConfig::from_file(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(SystemConfig::default()),
    }
}

impl Common {
    fn resolve(&self) -> anyhow::Result<(SystemConfig, Vec<Approach>)> {
        let mut cfg = load_config(self.config.as_deref())?;
        if let Some(v) = self.drops {
            cfg.drops = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.ms {
            cfg.aps_per_user = v;
        }
        if let Some(v) = self.epsilon {
            cfg.threshold_coeff = v;
        }
        if let Some(v) = self.nu {
            cfg.users_per_rb = v;
        }
        if let Some(v) = self.selection {
            cfg.selection = match v {
                SelectionArg::Fixed => SelectionMode::Fixed,
                SelectionArg::Threshold => SelectionMode::Threshold,
            };
        }
        cfg.validate()?;
        let mut approaches: Vec<Approach> = self.approach.iter().map(|&a| a.into()).collect();
        if approaches.is_empty() {
            approaches = Approach::ALL.to_vec();
        }
        approaches.sort();
        approaches.dedup();
        Ok((cfg, approaches))
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Run { common, out } => {
            let (cfg, approaches) = common.resolve()?;
            let report = run_experiment(&cfg, &approaches)?;
            report.write_outputs(&out)?;
            println!("{:<10} {:<3} {:>8} {:>8} {:>8} {:>8}", "approach", "dir", "p5", "median", "p95", "mean");
            for s in report.summaries() {
                println!(
                    "{:<10} {:<3} {:>8.3} {:>8.3} {:>8.3} {:>8.3}",
                    s.approach.name(),
                    s.direction.name(),
                    s.summary.p5,
                    s.summary.median,
                    s.summary.p95,
                    s.summary.mean
                );
            }
            println!("wrote {}", out.display());
            Ok(true)
        }
        Command::Sweep {
            common,
            axis,
            values,
            out,
        } => {
            let (cfg, approaches) = common.resolve()?;
            let axis = match axis {
                AxisArg::Nu => SweepAxis::UsersPerRb,
                AxisArg::Ms => SweepAxis::ApsPerUser,
            };
            let res = sweep(&cfg, axis, &values, &approaches)?;
            print!("{:<10} {:<3}", "approach", "dir");
            for v in &res.values {
                print!(" {:>7}", format!("{}={v}", axis.name()));
            }
            println!();
            for c in &res.curves {
                print!("{:<10} {:<3}", c.approach.name(), c.direction.name());
                for p in &c.p5 {
                    print!(" {p:>7.3}");
                }
                println!();
            }
            if let Some(dir) = out {
                res.write_outputs(&dir, &cfg)?;
                println!("wrote {}", dir.display());
            }
            Ok(true)
        }
        Command::Validate {
            realizations,
            symbols,
            seed,
            out,
        } => {
            let opts = ValidationOptions {
                realizations,
                symbols,
                seed,
            };
            let report = run_validation(&opts)?;
            for c in &report.checks {
                println!("{c}");
            }
            if let Some(dir) = out {
                report.write_outputs(&dir)?;
                println!("wrote {}", dir.display());
            }
            Ok(report.all_passed())
        }
        Command::Pathloss { distance_km, config } => {
            if !(distance_km >= 0.0) {
                bail!("distance must be non-negative");
            }
            let cfg = load_config(config.as_deref())?;
            let (db, branch) = path_loss_with_branch(distance_km, &cfg);
            println!("{db:.4} dB  {}", branch.name());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
