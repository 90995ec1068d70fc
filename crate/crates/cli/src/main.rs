//! Command-line front end: training runs, sweeps, plots and the oracle suite.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use hris_isac::experiment::{cmd_sweep_elements, cmd_sweep_power, cmd_train, Scheme, SweepOutcome};
use hris_isac::plot::{cmd_plot, PlotKind};
use hris_isac::{verify, Exec, ExperimentConfig, Profile};

#[derive(Parser)]
#[command(name = "hris-isac", version, about = "Hybrid-RIS ISAC workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scheme on one seed and write telemetry.csv, summary.json and config.toml.
    Train(RunArgs),
    /// Sweep the BS power grid and write power_sweep.csv and power_means.csv.
    SweepPower(RunArgs),
    /// Sweep the element-count grid and write elements_sweep.csv and elements_means.csv.
    SweepElements(RunArgs),
    /// Render a telemetry or sweep CSV as SVG.
    Plot {
        /// CSV written by train, sweep-power or sweep-elements.
        csv: PathBuf,
        /// Figure kind: reward, power or elements.
        #[arg(long)]
        kind: String,
        /// Output file (defaults to the CSV path with an .svg extension).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Run the oracle suite and print one line per oracle.
    Verify {
        /// Evaluate Monte-Carlo draws sequentially.
        #[arg(long)]
        sequential: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration file; overrides --profile.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in profile used when no file is given: paper or desk.
    #[arg(long, default_value = "desk")]
    profile: String,
    /// Dotted override such as `budgets.a_max=2`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Seed; repeatable for sweeps (defaults to sweep.seeds, or the first of them for train).
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    /// Scheme; repeatable for sweeps (defaults to sweep.schemes, or ddpg for train).
    #[arg(long = "scheme")]
    schemes: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overwrite existing outputs.
    #[arg(long)]
    force: bool,
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::profile(self.profile.parse::<Profile>()?),
        };
        for o in &self.overrides {
            cfg.set(o).with_context(|| format!("applying --set {o}"))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn schemes(&self, cfg: &ExperimentConfig) -> Result<Vec<Scheme>> {
        if self.schemes.is_empty() {
            return Ok(cfg.sweep.schemes.clone());
        }
        Ok(self
            .schemes
            .iter()
            .map(|s| s.parse())
            .collect::<hris_isac::Result<_>>()?)
    }

    fn seeds(&self, cfg: &ExperimentConfig) -> Vec<u64> {
        if self.seeds.is_empty() {
            cfg.sweep.seeds.clone()
        } else {
            self.seeds.clone()
        }
    }
}

fn header(cfg: &ExperimentConfig) {
    let l = cfg.linear();
    println!(
        "config {}: P_BS {:.4e} W, P_RIS {:.4e} W, R_max {:.4e} W, gamma_th {:.4e}, sigma_o^2 {:.4e} W, sigma_a^2 {:.4e} W",
        cfg.hash(),
        l.budgets.p_bs_max,
        l.budgets.p_ris_max,
        l.budgets.r_max,
        l.budgets.gamma_th,
        l.sigma_o_sq_w,
        l.sigma_a_sq_w
    );
}

fn report_sweep(out: SweepOutcome) -> Result<()> {
    println!(
        "wrote {} ({} cells) and {}",
        out.rows_path.display(),
        out.cells,
        out.means_path.display()
    );
    out.into_result()?;
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Train(args) => {
            let cfg = args.config()?;
            header(&cfg);
            let scheme = match args.schemes.as_slice() {
                [] => Scheme::Ddpg,
                [s] => s.parse()?,
                _ => bail!("train takes a single --scheme"),
            };
            let seed = match args.seeds.as_slice() {
                [] => *cfg
                    .sweep
                    .seeds
                    .first()
                    .context("sweep.seeds is empty; pass --seed")?,
                [s] => *s,
                _ => bail!("train takes a single --seed"),
            };
            let rec = cmd_train(&cfg, scheme, seed, &args.out, args.force)?;
            let s = &rec.summary;
            println!(
                "{} seed {}: best reward {:.6e}, final mean reward {:.6e}, best sum rate {:.6e}, best CRB {:.6e}",
                rec.scheme, rec.seed, s.best_reward, s.final_mean_reward, s.best_sum_rate, s.best_crb
            );
            println!("wrote {}", rec.telemetry_path.display());
        }
        Command::SweepPower(args) => {
            let cfg = args.config()?;
            header(&cfg);
            report_sweep(cmd_sweep_power(
                &cfg,
                &args.seeds(&cfg),
                &args.schemes(&cfg)?,
                &args.out,
                args.force,
            )?)?;
        }
        Command::SweepElements(args) => {
            let cfg = args.config()?;
            header(&cfg);
            report_sweep(cmd_sweep_elements(
                &cfg,
                &args.seeds(&cfg),
                &args.schemes(&cfg)?,
                &args.out,
                args.force,
            )?)?;
        }
        Command::Plot {
            csv,
            kind,
            out,
            force,
        } => {
            let kind: PlotKind = kind.parse()?;
            let path = cmd_plot(&csv, kind, out.as_deref(), force)
                .with_context(|| format!("plotting {}", csv.display()))?;
            println!("wrote {}", path.display());
        }
        Command::Verify { sequential } => {
            let exec = if sequential {
                Exec::Sequential
            } else {
                Exec::Parallel
            };
            let report = verify::run_all(exec)?;
            for o in &report {
                println!("{o}");
            }
            return Ok(report.iter().all(|o| o.pass));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
