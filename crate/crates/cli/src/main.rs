use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ifdd_core::exec::init_threads;
use ifdd_core::figures::run_sweep;
use ifdd_core::{run_figure, Execution, ExperimentConfig, Figure};

#[derive(Parser)]
#[command(name = "ifdd", version, about = "TDD vs interlaced-FDD massive-MIMO link simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the CSV for one figure (fig3, fig5, fig6, fig11, fig12).
    Run {
        figure: String,
        #[command(flatten)]
        common: Common,
    },
    /// Run the `[sweep]` grid of a configuration file.
    Sweep {
        #[arg(value_name = "CONFIG")]
        file: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Check a configuration file and list every violated constraint.
    Validate {
        config: PathBuf,
        #[arg(long)]
        desk_scale: bool,
    },
    /// Print the default configuration as TOML.
    Defaults {
        #[arg(long)]
        desk_scale: bool,
    },
}

#[derive(Args)]
struct Common {
    /// TOML configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a field, e.g. `--set ofdm.n_sub=512`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Reduced numerology: 16 antennas, 256/512 subcarriers, scaled Doppler.
    #[arg(long)]
    desk_scale: bool,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for the parallel executor.
    #[arg(long)]
    threads: Option<usize>,
    /// Run on the calling thread only.
    #[arg(long)]
    sequential: bool,
}

impl Common {
    fn resolve(&self, file: Option<&Path>) -> Result<ExperimentConfig> {
        let path = file.or(self.config.as_deref());
        let mut cfg = match path {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if self.desk_scale {
            cfg = cfg.desk_scale();
        }
        for o in &self.overrides {
            cfg.apply_override(o).with_context(|| format!("--set {o}"))?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }

    fn execution(&self) -> Result<Execution> {
        if let Some(n) = self.threads {
            if n == 0 {
                bail!("--threads must be at least 1");
            }
            if !init_threads(n) {
                eprintln!("note: thread pool already configured or parallelism unavailable");
            }
        }
        Ok(if self.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        })
    }

    fn emit(&self, csv: &str) -> Result<()> {
        match &self.out {
            Some(p) => {
                if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                }
                std::fs::write(p, csv).with_context(|| format!("writing {}", p.display()))
            }
            None => {
                print!("{csv}");
                Ok(())
            }
        }
    }
}

fn report(what: &str, rows: usize, flagged: usize, seed: u64, started: Instant) {
    eprintln!(
        "{what}: {rows} rows ({flagged} flagged), seed {seed}, {:.2} s",
        started.elapsed().as_secs_f64()
    );
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { figure, common } => {
            let fig: Figure = figure.parse()?;
            let cfg = common.resolve(None)?;
            let exec = common.execution()?;
            let started = Instant::now();
            let out = run_figure(fig, &cfg, exec)?;
            common.emit(&out.csv)?;
            report(fig.name(), out.rows, out.flagged, cfg.seed, started);
        }
        Command::Sweep { file, common } => {
            let cfg = common.resolve(Some(&file))?;
            let exec = common.execution()?;
            let started = Instant::now();
            let (csv, rows, flagged) = run_sweep(&cfg, exec)?;
            common.emit(&csv)?;
            report("sweep", rows, flagged, cfg.seed, started);
        }
        Command::Validate { config, desk_scale } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if desk_scale {
                cfg = cfg.desk_scale();
            }
            let violations = cfg.validate();
            if violations.is_empty() {
                println!("{}: ok", config.display());
            } else {
                for v in &violations {
                    println!("{}: {v}", config.display());
                }
                return Ok(ExitCode::from(1));
            }
        }
        Command::Defaults { desk_scale } => {
            let mut cfg = ExperimentConfig::default();
            if desk_scale {
                cfg = cfg.desk_scale();
            }
            print!("{}", cfg.to_toml_string()?);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
