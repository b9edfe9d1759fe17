//! Command-line driver for the full pipeline: distill skills from
//! classical controllers, build and audit the parameter memory, run
//! recalled and interpolated skills closed-loop, and execute task graphs.
//!
//! Exit codes: 0 success, 1 validation/config error, 2 runtime/fidelity
//! failure. Failures print one machine-parsable line to stderr:
//! `error: <CODE>: <message>`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use skillmem_core::check::{gradient_check, riccati_check};
use skillmem_core::config::ExperimentConfig;
use skillmem_core::distill::{distill_skill, SkillMetrics};
use skillmem_core::env::{rollout, write_trajectory_csv, EnvId, Outcome};
use skillmem_core::graph::{execute, validate, ExecStatus, TaskGraph};
use skillmem_core::memory::{interpolate, recall};
use skillmem_core::store::{SkillRecord, SkillStore};
use skillmem_core::{distill, EnvParams, Error};

#[derive(Parser)]
#[command(
    name = "skillmem",
    version,
    about = "Skill distillation, parameter memory, and task-graph execution"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Environment catalogue
    Env {
        #[command(subcommand)]
        cmd: EnvCmd,
    },
    /// Train, recall, and interpolate skills
    Skill {
        #[command(subcommand)]
        cmd: SkillCmd,
    },
    /// Build and audit the parameter memory
    Memory {
        #[command(subcommand)]
        cmd: MemoryCmd,
    },
    /// Execute task graphs
    Graph {
        #[command(subcommand)]
        cmd: GraphCmd,
    },
    /// Gradient oracle
    Grad {
        #[command(subcommand)]
        cmd: CheckCmd,
    },
    /// Riccati solver oracle
    Riccati {
        #[command(subcommand)]
        cmd: CheckCmd,
    },
}

#[derive(Subcommand)]
enum EnvCmd {
    /// List environments with dimensions, bounds, and boxes
    List,
}

#[derive(Subcommand)]
enum SkillCmd {
    /// Distill one named skill from its configured oracle into the store
    Train(TrainArgs),
    /// Decode a stored skill and run it closed-loop, emitting a CSV
    Recall(RecallArgs),
    /// Decode an interpolated skill vector and report closed-loop metrics
    Interp(InterpArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    name: String,
    #[arg(long)]
    store: PathBuf,
    /// Overrides the config's distillation seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RecallArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    name: String,
    #[arg(long)]
    out: PathBuf,
    /// Goal override, comma-separated (e.g. `1.5,0.5`)
    #[arg(long, value_name = "G0,G1,..")]
    env_goal: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct InterpArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    from: String,
    #[arg(long)]
    to: String,
    #[arg(long)]
    alpha: f64,
    /// Trajectory CSV for the first evaluation seed
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum MemoryCmd {
    /// Train the autoencoder over all stored skills and record skill vectors
    Build {
        #[arg(long)]
        store: PathBuf,
        /// Overrides the store's memory seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Recompute fidelity and behavior-preservation checks
    Verify {
        #[arg(long)]
        store: PathBuf,
    },
}

#[derive(Subcommand)]
enum GraphCmd {
    /// Validate, traverse, and execute a task graph
    Run {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum CheckCmd {
    /// Run the numerical oracle; nonzero exit on failure
    Check,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}: {}", e.code(), e);
            ExitCode::from(e.exit_class() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.cmd {
        Command::Env { cmd: EnvCmd::List } => cmd_env_list(),
        Command::Skill { cmd } => match cmd {
            SkillCmd::Train(args) => cmd_skill_train(args),
            SkillCmd::Recall(args) => cmd_skill_recall(args),
            SkillCmd::Interp(args) => cmd_skill_interp(args),
        },
        Command::Memory { cmd } => match cmd {
            MemoryCmd::Build { store, seed } => cmd_memory_build(&store, seed),
            MemoryCmd::Verify { store } => cmd_memory_verify(&store),
        },
        Command::Graph {
            cmd:
                GraphCmd::Run {
                    store,
                    graph,
                    seed,
                    out,
                },
        } => cmd_graph_run(&store, &graph, seed, &out),
        Command::Grad {
            cmd: CheckCmd::Check,
        } => cmd_grad_check(),
        Command::Riccati {
            cmd: CheckCmd::Check,
        } => cmd_riccati_check(),
    }
}

fn cmd_env_list() -> Result<u8, Error> {
    for id in EnvId::all() {
        let env: EnvParams = EnvParams::from_id(id);
        println!("{}", id.as_str());
        println!(
            "  state_dim={} action_dim={} dt={}",
            env.state_dim(),
            env.action_dim(),
            env.dt
        );
        let bounds: Vec<String> = env
            .action_bounds()
            .iter()
            .map(|(lo, hi)| format!("[{lo}, {hi}]"))
            .collect();
        println!("  action_bounds={}", bounds.join(" "));
        let boxes: Vec<String> = env
            .state_box
            .iter()
            .map(|(lo, hi)| format!("[{lo}, {hi}]"))
            .collect();
        println!("  state_box={}", boxes.join(" "));
        let init: Vec<String> = env
            .init_box
            .iter()
            .map(|(lo, hi)| format!("[{lo}, {hi}]"))
            .collect();
        println!("  init_box={}", init.join(" "));
    }
    Ok(0)
}

fn load_or_create_store(cfg: &ExperimentConfig, path: &Path) -> Result<SkillStore, Error> {
    let policy = cfg.policy.to_spec()?;
    if path.exists() {
        let store = SkillStore::load(path)?;
        if store.policy_spec != policy {
            return Err(Error::InvalidConfig(
                "store was created with a different policy architecture".into(),
            ));
        }
        Ok(store)
    } else {
        let ae_spec = cfg.autoencoder.to_spec(policy.param_count())?;
        SkillStore::new(
            policy,
            ae_spec,
            cfg.autoencoder.hyper(),
            cfg.autoencoder.seed,
        )
    }
}

fn print_metrics(name: &str, metrics: &SkillMetrics, oracle_rate: f64) {
    println!("skill={name}");
    println!("train_mse={:.6e}", metrics.train_mse);
    println!("holdout_mse={:.6e}", metrics.holdout_mse);
    println!("success_rate={}", metrics.success_rate);
    println!("oracle_success_rate={oracle_rate}");
    match metrics.mean_steps_to_success {
        Some(steps) => println!("mean_steps_to_success={steps}"),
        None => println!("mean_steps_to_success="),
    }
    let json = serde_json::json!({
        "skill": name,
        "train_mse": metrics.train_mse,
        "holdout_mse": metrics.holdout_mse,
        "success_rate": metrics.success_rate,
        "oracle_success_rate": oracle_rate,
        "mean_steps_to_success": metrics.mean_steps_to_success,
    });
    println!("{json}");
}

fn cmd_skill_train(args: TrainArgs) -> Result<u8, Error> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.distill.seed = seed;
    }
    let (env, oracle, termination) = cfg.skill_setup(&args.name)?;
    let policy = cfg.policy.to_spec()?;
    let mut store = load_or_create_store(&cfg, &args.store)?;
    let skill = distill_skill(&oracle, &policy, &cfg.distill, &termination, cfg.eval_seeds)?;
    print_metrics(&args.name, &skill.metrics, skill.oracle_eval.success_rate);
    store.add_skill(SkillRecord {
        name: args.name.clone(),
        env,
        termination,
        params: skill.params,
        skill_vector: None,
        recon_rel_error: None,
        built_at: None,
        metrics: skill.metrics,
    })?;
    store.save(&args.store)?;
    println!(
        "stored={} skills={}",
        args.store.display(),
        store.skills.len()
    );
    Ok(0)
}

fn cmd_memory_build(path: &Path, seed: Option<u64>) -> Result<u8, Error> {
    let mut store = SkillStore::load(path)?;
    let summary = store.rebuild_memory(seed)?;
    store.save(path)?;
    println!(
        "rebuild_counter={} epochs={} reached_target={}",
        store.rebuild_counter, summary.epochs_run, summary.reached_target
    );
    for (name, err) in &summary.recon_errors {
        println!("recon name={name} rel_error={err:.6e}");
    }
    if !summary.reached_target {
        return Err(Error::BelowTargetFidelity(format!(
            "epoch budget exhausted above target {} (store saved)",
            store.ae_hyper.target_rel_error
        )));
    }
    Ok(0)
}

fn cmd_memory_verify(path: &Path) -> Result<u8, Error> {
    let store = SkillStore::load(path)?;
    let exact = store.verify_exact()?;
    let fidelity = store.verify_fidelity()?;
    println!(
        "exact_checked={} fidelity_checked={}",
        exact.skills_checked, fidelity.skills_checked
    );
    let mut violations = exact.violations;
    violations.extend(fidelity.violations);
    for v in &violations {
        println!("violation: {v}");
    }
    if violations.is_empty() {
        println!("verify=ok");
        Ok(0)
    } else {
        Err(Error::VerifyFailed(format!(
            "{} violation(s)",
            violations.len()
        )))
    }
}

fn parse_goal(text: &str) -> Result<Vec<f64>, Error> {
    text.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidConfig(format!("bad goal entry `{p}`: {e}")))
        })
        .collect()
}

/// The skill's current vector, or the reason it cannot be decoded.
fn current_vector(
    store: &SkillStore,
    name: &str,
) -> Result<skillmem_core::memory::SkillVector, Error> {
    let rec = store.get_skill(name)?;
    match (&rec.skill_vector, rec.built_at) {
        (Some(s), Some(at)) if at == store.rebuild_counter => Ok(s.clone()),
        _ => Err(Error::StoreNotBuilt),
    }
}

fn cmd_skill_recall(args: RecallArgs) -> Result<u8, Error> {
    let store = SkillStore::load(&args.store)?;
    let rec = store.get_skill(&args.name)?;
    let s = current_vector(&store, &args.name)?;
    let (stats, ae) = match (&store.stats, &store.ae) {
        (Some(stats), Some(ae)) => (stats, ae),
        _ => return Err(Error::StoreNotBuilt),
    };
    let params = recall(&store.ae_spec, ae, stats, &s)?;
    let env = match &args.env_goal {
        Some(text) => rec.env.with_goal(&parse_goal(text)?)?,
        None => rec.env.clone(),
    };
    let act = distill::policy_act_fn(&env, &store.policy_spec, &params);
    let traj = rollout(&env, act, env.reset(args.seed), &rec.termination);
    let mut buf = Vec::new();
    write_trajectory_csv(&traj, env.state_dim(), env.action_dim(), &mut buf)?;
    std::fs::write(&args.out, buf)?;
    println!(
        "skill={} outcome={:?} steps={} goal_error={:.6e} csv={}",
        args.name,
        traj.outcome,
        traj.steps.len(),
        env.goal_error(&traj.final_state),
        args.out.display()
    );
    Ok(0)
}

fn cmd_skill_interp(args: InterpArgs) -> Result<u8, Error> {
    let store = SkillStore::load(&args.store)?;
    let from = store.get_skill(&args.from)?;
    let to = store.get_skill(&args.to)?;
    if from.env.env_id() != to.env.env_id() {
        return Err(Error::InvalidConfig(format!(
            "skills live in different environments ({} vs {})",
            from.env.env_id().as_str(),
            to.env.env_id().as_str()
        )));
    }
    let s_from = current_vector(&store, &args.from)?;
    let s_to = current_vector(&store, &args.to)?;
    let s = interpolate(&s_from, &s_to, args.alpha)?;
    let (stats, ae) = match (&store.stats, &store.ae) {
        (Some(stats), Some(ae)) => (stats, ae),
        _ => return Err(Error::StoreNotBuilt),
    };
    let params = recall(&store.ae_spec, ae, stats, &s)?;

    // Reporting only: run the decoded policy from the evaluation seeds
    // under the `from` skill's environment and termination, and give the
    // final goal error against both endpoints.
    let env = &from.env;
    let n_seeds = 10u64;
    let act = distill::policy_act_fn(env, &store.policy_spec, &params);
    let mut successes = 0usize;
    let mut from_err_sum = 0.0;
    let mut to_err_sum = 0.0;
    let mut first_traj = None;
    for seed in args.seed..args.seed + n_seeds {
        let traj = rollout(env, &act, env.reset(seed), &from.termination);
        if traj.outcome == Outcome::Success {
            successes += 1;
        }
        from_err_sum += from.env.goal_error(&traj.final_state);
        to_err_sum += to.env.goal_error(&traj.final_state);
        if first_traj.is_none() {
            first_traj = Some(traj);
        }
    }
    if let (Some(out), Some(traj)) = (&args.out, &first_traj) {
        let mut buf = Vec::new();
        write_trajectory_csv(traj, env.state_dim(), env.action_dim(), &mut buf)?;
        std::fs::write(out, buf)?;
    }
    println!("from={} to={} alpha={}", args.from, args.to, args.alpha);
    println!(
        "success_rate_under_from_termination={}",
        successes as f64 / n_seeds as f64
    );
    println!(
        "mean_final_goal_error_from={:.6e}",
        from_err_sum / n_seeds as f64
    );
    println!(
        "mean_final_goal_error_to={:.6e}",
        to_err_sum / n_seeds as f64
    );
    let json = serde_json::json!({
        "from": args.from,
        "to": args.to,
        "alpha": args.alpha,
        "success_rate_under_from_termination": successes as f64 / n_seeds as f64,
        "mean_final_goal_error_from": from_err_sum / n_seeds as f64,
        "mean_final_goal_error_to": to_err_sum / n_seeds as f64,
    });
    println!("{json}");
    Ok(0)
}

fn cmd_graph_run(store_path: &Path, graph_path: &Path, seed: u64, out: &Path) -> Result<u8, Error> {
    let store = SkillStore::load(store_path)?;
    let graph = TaskGraph::load(graph_path)?;
    let issues = validate(&graph, &store);
    if !issues.is_empty() {
        for issue in &issues {
            eprintln!("invalid: {issue}");
        }
        return Err(Error::InvalidGraph(format!("{} issue(s)", issues.len())));
    }
    let report = execute(&graph, &store, seed)?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("report.json"), report.to_json())?;
    report.write_csvs(out)?;
    for node in &report.nodes {
        println!(
            "node={} outcome={:?} steps={}",
            node.id,
            node.outcome,
            node.trajectory.steps.len()
        );
    }
    match &report.status {
        ExecStatus::Completed => {
            println!(
                "status=Completed report={}",
                out.join("report.json").display()
            );
            Ok(0)
        }
        ExecStatus::AbortedAt { node, reason } => {
            println!("status=AbortedAt node={node} reason={reason}");
            eprintln!("error: EXECUTION_ABORTED: aborted at node `{node}` ({reason})");
            Ok(2)
        }
    }
}

fn cmd_grad_check() -> Result<u8, Error> {
    let report = gradient_check(20, 2024);
    for case in &report.cases {
        println!(
            "dims={:?} batch={} max_rel_err={:.3e}",
            case.layer_dims, case.batch_len, case.max_err
        );
    }
    println!(
        "worst={:.3e} tolerance={:.0e}",
        report.worst(),
        skillmem_core::check::GRAD_REL_TOL
    );
    if report.ok() {
        println!("grad_check=ok");
        Ok(0)
    } else {
        Err(Error::VerifyFailed(format!(
            "gradient deviation {:.3e} above tolerance",
            report.worst()
        )))
    }
}

fn cmd_riccati_check() -> Result<u8, Error> {
    let report = riccati_check(20, 2024);
    println!("scalar_p_err={:.3e}", report.scalar_p_err);
    println!("scalar_k_err={:.3e}", report.scalar_k_err);
    let worst_dp = report.dp_errs.iter().cloned().fold(0.0, f64::max);
    println!(
        "dp_cases={} worst_gain_err={:.3e}",
        report.dp_errs.len(),
        worst_dp
    );
    if report.ok() {
        println!("riccati_check=ok");
        Ok(0)
    } else {
        Err(Error::VerifyFailed(format!(
            "riccati deviation (scalar {:.3e}/{:.3e}, dp {:.3e})",
            report.scalar_p_err, report.scalar_k_err, worst_dp
        )))
    }
}
