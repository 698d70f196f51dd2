use anyhow::Result;
use plan_cli::{emit, scenario, sim};
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Scenario replay for the topological maneuver planner.
#[derive(Parser)]
#[command(name = "plan", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay a scenario and write trajectory, maneuver and metric files.
    Run {
        scenario: PathBuf,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        /// Override the replan period from the scenario, seconds.
        #[arg(long)]
        replan_period: Option<f64>,
        /// Override the run duration, seconds.
        #[arg(long)]
        horizon: Option<f64>,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Also write SVG plots of the first planning cycle.
        #[arg(long)]
        plots: bool,
    },
    /// Validate a scenario file without running it.
    Check { scenario: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            log::error!("{err:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Check { scenario } => match scenario::Scenario::load(&scenario) {
            Ok(_) => {
                println!("ok: {}", scenario.display());
                Ok(ExitCode::SUCCESS)
            }
            Err(err) => {
                log::error!("{err:#}");
                Ok(ExitCode::from(2))
            }
        },
        Command::Run {
            scenario,
            out,
            replan_period,
            horizon,
            seed,
            plots,
        } => {
            let mut sc = match scenario::Scenario::load(&scenario) {
                Ok(sc) => sc,
                Err(err) => {
                    log::error!("{err:#}");
                    return Ok(ExitCode::from(2));
                }
            };
            if let Some(p) = replan_period {
                sc.run.replan_period = p;
            }
            if let Some(h) = horizon {
                sc.run.duration = h;
            }
            if let Some(s) = seed {
                sc.run.seed = s;
            }
            if let Err(err) = sc.validate() {
                log::error!("{err:#}");
                return Ok(ExitCode::from(2));
            }

            let result = sim::run(&sc)?;
            std::fs::create_dir_all(&out)?;
            emit::write_trajectory_csv(&out.join("trajectory.csv"), &result.steps)?;
            emit::write_metrics_csv(&out.join("metrics.csv"), &result.cycles)?;
            emit::write_maneuvers_json(&out.join("maneuvers.json"), &result.maneuver_log)?;
            if plots {
                if let Some(outcome) = &result.first_outcome {
                    let dt = sc.planner_config().dt;
                    emit::write_plots_svg(&out.join("plots.svg"), outcome, dt)?;
                }
            }

            let emergencies = result.cycles.iter().filter(|c| c.emergency).count();
            log::info!(
                "{}: {} cycles, {} steps, {} emergency cycles",
                sc.name,
                result.cycles.len(),
                result.steps.len(),
                emergencies
            );
            if let Some((t, what)) = result.collision {
                log::error!("collision with {what} at t={t:.2}");
                return Ok(ExitCode::from(3));
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
