use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use robust_rl::agents::{train_vanilla, Agent};
use robust_rl::envs::EnvKind;
use robust_rl::harness::{
    cvar_statistic, evaluate, load_agent, read_results_csv, save_agent, sweep_attack_magnitude, sweep_params_grid,
    write_results_csv, Axis, AxisValue, Cell, ExperimentConfig, RawConfig, SweepResult,
};
use robust_rl::rng::derive_seed;
use robust_rl::robust::adv_train;
use robust_rl::{Error, Result, RngHandle};

#[derive(Parser)]
#[command(name = "robust-rl", version, about = "Adversarial attacks and adversarial retraining for RL agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Master seed for training and evaluation streams.
    #[arg(long)]
    seed: u64,
    /// Directory for all outputs; created if missing.
    #[arg(long)]
    out_dir: PathBuf,
    /// Config file of `section.key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config entry, e.g. `--set attack.epsilon=0.05`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a fresh agent and save it under OUT_DIR/agent.
    Train(Common),
    /// Retrain a saved agent under gradient attack; saves OUT_DIR/agent.
    AdvTrain {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        agent: PathBuf,
    },
    /// Evaluate a saved agent under the configured attack.
    AttackEval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        agent: PathBuf,
    },
    /// Normalized return against attack magnitude for each attack kind.
    SweepAttack {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        agent: PathBuf,
    },
    /// Clean return over a grid of physics parameters.
    SweepGrid {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        agent: PathBuf,
    },
    /// Summarize a results CSV: grid mean and CVaR over cell means.
    Report {
        csv: PathBuf,
        /// Tail fraction for the CVaR summary.
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
    },
}

fn load_config(common: &Common, agent_env: Option<(&Agent, EnvKind)>) -> Result<ExperimentConfig> {
    let mut raw = match &common.config {
        Some(p) => RawConfig::load(p)?,
        None => RawConfig::default(),
    };
    for o in &common.overrides {
        raw.set(o)?;
    }
    if let Some((agent, env)) = agent_env {
        match raw.get("env.kind") {
            Some(k) if k != env.name() => {
                return Err(Error::Config(format!("config names env '{k}' but the agent was trained on {env}")));
            }
            Some(_) => {}
            None => raw.set(&format!("env.kind={env}"))?,
        }
        match raw.get("agent.kind") {
            Some(k) if k != agent.kind().name() => {
                return Err(Error::Config(format!("config names agent '{k}' but the saved agent is {}", agent.kind())));
            }
            Some(_) => {}
            None => raw.set(&format!("agent.kind={}", agent.kind()))?,
        }
    }
    let mut cfg = ExperimentConfig::resolve(&raw)?;
    // evaluation streams hang off the master seed
    cfg.eval.seeds = cfg.eval.seeds.iter().map(|&s| derive_seed(common.seed, &[s])).collect();
    Ok(cfg)
}

fn prepare_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn write_returns(path: &Path, returns: &[f64]) -> Result<()> {
    let mut text = String::from("episode,return\n");
    for (i, r) in returns.iter().enumerate() {
        text.push_str(&format!("{i},{r:.16e}\n"));
    }
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(common) => {
            let cfg = load_config(&common, None)?;
            prepare_out_dir(&common.out_dir)?;
            let mut rng = RngHandle::new(common.seed);
            let (agent, log) = train_vanilla(&cfg.agent, &cfg.params, cfg.train_steps, &mut rng)?;
            save_agent(&agent, cfg.env, &common.out_dir.join("agent"))?;
            write_returns(&common.out_dir.join("train_returns.csv"), &log.episode_returns)?;
            let eval = evaluate(&agent, &cfg.params, &cfg.eval)?;
            println!(
                "trained {} on {} for {} steps: {} episodes, greedy mean {:.3} (std {:.3})",
                agent.kind(),
                cfg.env,
                log.steps,
                log.episode_returns.len(),
                eval.mean,
                eval.std
            );
        }
        Command::AdvTrain { common, agent } => {
            let (mut agent, env) = load_agent(&agent)?;
            let cfg = load_config(&common, Some((&agent, env)))?;
            prepare_out_dir(&common.out_dir)?;
            let log = adv_train(&mut agent, &cfg.params, &cfg.adv, &mut RngHandle::new(common.seed))?;
            save_agent(&agent, env, &common.out_dir.join("agent"))?;
            write_returns(&common.out_dir.join("train_returns.csv"), &log.episode_returns)?;
            let eval = evaluate(&agent, &cfg.params, &cfg.eval)?;
            println!(
                "retrained {} on {} for {} steps at epsilon {}: greedy mean {:.3} (std {:.3})",
                agent.kind(),
                env,
                log.steps,
                cfg.adv.attack.epsilon,
                eval.mean,
                eval.std
            );
        }
        Command::AttackEval { common, agent } => {
            let (agent, env) = load_agent(&agent)?;
            let cfg = load_config(&common, Some((&agent, env)))?;
            prepare_out_dir(&common.out_dir)?;
            let spec = cfg.eval.with_attack(Some(cfg.attack));
            let r = evaluate(&agent, &cfg.params, &spec)?;
            let result = SweepResult {
                axes: vec![
                    Axis {
                        name: "attack".into(),
                        values: vec![AxisValue::Label(cfg.attack.kind.name().into())],
                    },
                    Axis::numeric("epsilon", &[cfg.attack.epsilon]),
                ],
                cells: vec![Cell {
                    index: vec![0, 0],
                    mean_return: r.mean,
                    std_return: r.std,
                    n: r.per_episode_returns.len(),
                    per_seed_means: r.per_seed_means,
                }],
                baseline_return: f64::NAN,
            };
            write_results_csv(&result, &common.out_dir.join("attack_eval.csv"))?;
            println!(
                "{} attack at epsilon {}: mean {:.3} (std {:.3}) over {} episodes",
                cfg.attack.kind,
                cfg.attack.epsilon,
                r.mean,
                r.std,
                r.per_episode_returns.len()
            );
        }
        Command::SweepAttack { common, agent } => {
            let (agent, env) = load_agent(&agent)?;
            let cfg = load_config(&common, Some((&agent, env)))?;
            prepare_out_dir(&common.out_dir)?;
            let result =
                sweep_attack_magnitude(&agent, &cfg.params, &cfg.sweep_kinds, &cfg.sweep_epsilons, &cfg.attack, &cfg.eval)?;
            write_results_csv(&result, &common.out_dir.join("sweep_attack.csv"))?;
            println!("baseline return {:.3}", result.baseline_return);
            for cell in &result.cells {
                let norm = result.normalized(cell).map_or("n/a".to_string(), |v| format!("{v:.4}"));
                println!(
                    "{:>9} eps={:<6} mean={:>10.3} normalized={norm}",
                    result.axes[0].values[cell.index[0]].to_string(),
                    cfg.sweep_epsilons[cell.index[1]],
                    cell.mean_return
                );
            }
        }
        Command::SweepGrid { common, agent } => {
            let (agent, env) = load_agent(&agent)?;
            let cfg = load_config(&common, Some((&agent, env)))?;
            prepare_out_dir(&common.out_dir)?;
            let result = sweep_params_grid(&agent, &cfg.params, &cfg.grid, &cfg.eval)?;
            write_results_csv(&result, &common.out_dir.join("sweep_grid.csv"))?;
            println!(
                "{} cells, grid mean {:.3}, default-parameter return {:.3}",
                result.cells.len(),
                result.grid_mean(),
                result.baseline_return
            );
        }
        Command::Report { csv, alpha } => {
            let (header, rows) = read_results_csv(&csv)?;
            let mean_col = header.len() - 3;
            let means = rows
                .iter()
                .map(|r| {
                    r[mean_col]
                        .parse::<f64>()
                        .map_err(|_| Error::Format {
                            expected: "a float mean".into(),
                            found: r[mean_col].clone(),
                        })
                })
                .collect::<Result<Vec<f64>>>()?;
            if means.is_empty() {
                return Err(Error::Format {
                    expected: "at least one data row".into(),
                    found: "none".into(),
                });
            }
            println!("{}", header.join("\t"));
            for r in &rows {
                println!("{}", r.join("\t"));
            }
            let c = cvar_statistic(&means, alpha)?;
            println!(
                "cells {}  mean {:.6}  cvar@{alpha} {:.6}  threshold {:.6}",
                means.len(),
                means.iter().sum::<f64>() / means.len() as f64,
                c.cvar,
                c.threshold_beta
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
