mod settings;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use caqa::harness::{
    load_checkpoint, run_eval, run_sweep, run_training, verify, write_sweep_csv, ExperimentPlan, SweepAxis,
};
use caqa::policy::PolicyKind;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use settings::Settings;

#[derive(Parser)]
#[command(name = "caqa", version, about = "Resource allocation experiments for ISAC-driven AIGC services")]
struct Cli {
    /// TOML file with optional [system], [agent] and [plan] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory for metrics, checkpoints and tables.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Full-length training and test schedules.
    #[arg(long, global = true)]
    paper_scale: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct PolicyArgs {
    /// lpdrl-f, lpdrl, jdrl-f, saqa-fg or cgq-fsg.
    #[arg(long, default_value = "lpdrl-f")]
    policy: String,
    /// Sensing share of cgq-fsg.
    #[arg(long)]
    alpha: Option<f64>,
    /// Generation step of saqa-fg.
    #[arg(long)]
    z_fixed: Option<u32>,
}

impl PolicyArgs {
    fn resolve(&self) -> anyhow::Result<PolicyKind> {
        let mut p: PolicyKind = self.policy.parse()?;
        match (&mut p, self.alpha, self.z_fixed) {
            (PolicyKind::CgqFsg { alpha }, Some(a), _) => *alpha = a,
            (PolicyKind::SaqaFg { z }, _, Some(v)) => *z = v,
            (_, None, None) => {}
            _ => bail!(caqa::Error::InvalidConfig(format!("--alpha/--z-fixed do not apply to {p}"))),
        }
        if let PolicyKind::CgqFsg { alpha } = p {
            caqa::baselines::CgqFsg::new(alpha)?;
        }
        Ok(p)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy and write metrics and a checkpoint.
    Train {
        #[command(flatten)]
        policy: PolicyArgs,
        /// Training episodes.
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Evaluate a trained checkpoint or a fixed policy on test slots.
    Eval {
        #[command(flatten)]
        policy: PolicyArgs,
        /// Directory holding checkpoint.txt and checkpoint.json.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Test episodes.
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Evaluate policies across values of one system parameter.
    Sweep {
        /// num-users, e-max, step, server-flops or t-max.
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "cgq-fsg")]
        policies: Vec<String>,
        /// Training episodes per learned policy and point.
        #[arg(long)]
        episodes: Option<usize>,
        /// Test episodes per point.
        #[arg(long)]
        eval_episodes: Option<usize>,
    },
    /// Check the communication allocator against independent optima.
    VerifyRce {
        #[arg(long, default_value_t = 500)]
        instances: usize,
    },
    /// Finite-difference checks of every network.
    Gradcheck {
        #[arg(long, default_value_t = 200)]
        points: usize,
    },
    /// Allocator, timeline and gradient checks together.
    Verify,
}

fn plan_for(cli: &Cli, settings: &Settings) -> ExperimentPlan {
    let base = settings.plan.clone().unwrap_or_else(ExperimentPlan::desk);
    let mut plan = if cli.paper_scale {
        ExperimentPlan { seeds: base.seeds.clone(), ..ExperimentPlan::full() }
    } else {
        base
    };
    plan.seeds = vec![cli.seed];
    plan
}

fn print_json(value: &impl serde::Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

enum Outcome {
    Ok,
    VerificationFailed,
}

fn run(cli: &Cli) -> anyhow::Result<Outcome> {
    let settings = Settings::load(cli.config.as_deref())?;
    let system = &settings.system;
    let mut plan = plan_for(cli, &settings);
    match &cli.command {
        Command::Train { policy, episodes } => {
            let policy = policy.resolve()?;
            if let Some(n) = episodes {
                plan.train_episodes = *n;
            }
            let out = cli.out.as_deref();
            let every = (plan.train_episodes / 20).max(1);
            let run = run_training(&plan, system, &settings.agent, policy, cli.seed, out, |e| {
                if (e.episode + 1) % every == 0 {
                    eprintln!("episode {:>6}  caqa {:.4}  reward {:.4}", e.episode + 1, e.mean_caqa, e.mean_reward);
                }
            })?;
            let window = plan.rolling_window;
            print_json(&json!({
                "policy": policy.to_string(),
                "seed": cli.seed,
                "episodes": run.episodes.len(),
                "final_mean_caqa": run.final_mean_caqa(window),
                "final_reward_std": run.final_reward_std(window),
                "wall_s": run.wall_s,
            }))?;
        }
        Command::Eval { policy, checkpoint, episodes } => {
            if let Some(n) = episodes {
                plan.eval_episodes = *n;
            }
            let (policy, agent, system) = match checkpoint {
                Some(dir) => {
                    let (agent, meta) = load_checkpoint(dir)
                        .with_context(|| format!("loading checkpoint from {}", dir.display()))?;
                    (meta.policy, Some(agent), meta.system)
                }
                None => {
                    let p = policy.resolve()?;
                    if p.is_learned() {
                        bail!(caqa::Error::InvalidConfig(format!("{p} needs --checkpoint")));
                    }
                    (p, None, system.clone())
                }
            };
            let summary = run_eval(&system, policy, agent.as_ref(), plan.eval_episodes, plan.eval_iterations, cli.seed)?;
            if let Some(dir) = &cli.out {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join("eval.json"), serde_json::to_string_pretty(&summary)?)?;
            }
            print_json(&summary)?;
        }
        Command::Sweep { axis, values, policies, episodes, eval_episodes } => {
            let axis: SweepAxis = axis.parse()?;
            let policies = policies
                .iter()
                .map(|p| p.parse::<PolicyKind>())
                .collect::<Result<Vec<_>, _>>()?;
            if let Some(n) = episodes {
                plan.train_episodes = *n;
            }
            if let Some(n) = eval_episodes {
                plan.eval_episodes = *n;
            }
            let rows = run_sweep(&plan, system, &settings.agent, axis, values, &policies, |r| {
                eprintln!("{} = {}  {:<12} caqa {:.4}", axis_name(axis), r.value, r.policy, r.mean_caqa);
            })?;
            if let Some(dir) = &cli.out {
                std::fs::create_dir_all(dir)?;
                write_sweep_csv(&dir.join("sweep.csv"), &rows)?;
            }
            print_json(&rows)?;
        }
        Command::VerifyRce { instances } => return verify_rce(*instances, cli.seed),
        Command::Gradcheck { points } => return gradcheck(&settings, *points, cli.seed),
        Command::Verify => {
            let a = verify_rce(500, cli.seed)?;
            let b = gradcheck(&settings, 200, cli.seed)?;
            let worst = verify::verify_fcfs(1000, cli.seed);
            let fcfs_ok = worst <= 1e-9;
            println!("fcfs timeline: max deviation {worst:.3e} s  {}", verdict(fcfs_ok));
            if !(matches!(a, Outcome::Ok) && matches!(b, Outcome::Ok) && fcfs_ok) {
                return Ok(Outcome::VerificationFailed);
            }
        }
    }
    Ok(Outcome::Ok)
}

fn axis_name(axis: SweepAxis) -> &'static str {
    match axis {
        SweepAxis::NumUsers => "num-users",
        SweepAxis::EMax => "e-max",
        SweepAxis::Step => "step",
        SweepAxis::ServerFlops => "server-flops",
        SweepAxis::TMax => "t-max",
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAILED"
    }
}

fn verify_rce(instances: usize, seed: u64) -> anyhow::Result<Outcome> {
    let r = verify::verify_rce(instances, seed)?;
    println!(
        "rce oracle: {} instances ({} grid-evaluated), {} grid / {} exchange / {} dual failures, {:.1} s  {}",
        r.instances,
        r.grid_evaluated,
        r.grid_failures,
        r.exchange_failures,
        r.dual_failures,
        r.wall_s,
        verdict(r.passed())
    );
    Ok(if r.passed() { Outcome::Ok } else { Outcome::VerificationFailed })
}

fn gradcheck(settings: &Settings, points: usize, seed: u64) -> anyhow::Result<Outcome> {
    let mut ok = true;
    for (name, r) in verify::gradcheck_all(&settings.system, &settings.agent, points, seed)? {
        let pass = r.passes(verify::GRAD_TOL);
        ok &= pass;
        println!("gradcheck {name}: {} points, max rel error {:.2e}  {}", r.points, r.max_rel_error, verdict(pass));
    }
    Ok(if ok { Outcome::Ok } else { Outcome::VerificationFailed })
}

fn is_config_error(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        matches!(
            e.downcast_ref::<caqa::Error>(),
            Some(caqa::Error::InvalidConfig(_) | caqa::Error::ConfigParse(_) | caqa::Error::StepOutOfRange { .. })
        )
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::VerificationFailed) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            if is_config_error(&err) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
