//! Acceptance suite: one test per criterion, each printing a PASS/FAIL
//! line (visible with `cargo test --test acceptance -- --nocapture`).
//!
//! - A1 gradient correctness vs central finite differences
//! - A2 distillation fidelity of every shipped skill
//! - A3 memorization fidelity and behavior preservation through recall
//! - A4 latent relevance ordering on the nav_goal family
//! - A5 graph execution, traversal-order soundness, bit-identical reruns
//! - A6 Riccati gain vs closed form and finite-horizon dynamic programming
//! - A7 bit-exact store persistence and 0-ULP verification
//! - A8 bit-identical reruns of every pipeline stage

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use skillmem_core::check::{gradient_check, riccati_check, GRAD_REL_TOL};
use skillmem_core::config::ExperimentConfig;
use skillmem_core::control::{ControlLaw, ControllerSpec};
use skillmem_core::distill::{
    build_dataset, distill_skill, evaluate_oracle, evaluate_policy, sample_states, train_policy,
    DistillConfig, SkillMetrics,
};
use skillmem_core::env::{rollout, EnvParams, EnvState, Outcome, TerminationSpec};
use skillmem_core::graph::{execute, traversal_order, ExecStatus, SkillRef, TaskGraph, TaskNode};
use skillmem_core::memory::{recall, skill_distance, AeHyper, AutoencoderSpec, SkillVector};
use skillmem_core::net::{ParamVector, PolicySpec};
use skillmem_core::rng::Xoshiro256StarStar;
use skillmem_core::store::{SkillRecord, SkillStore};
use skillmem_core::Scalar;

fn repo_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(rel)
}

fn shipped_config() -> &'static ExperimentConfig {
    static CONFIG: OnceLock<ExperimentConfig> = OnceLock::new();
    CONFIG.get_or_init(|| {
        ExperimentConfig::load(&repo_path("configs/default.json")).expect("shipped config loads")
    })
}

/// The default five-skill store, distilled once from the shipped config
/// and shared by A2, A3, A5, and A8.
fn default_store() -> &'static SkillStore {
    static STORE: OnceLock<SkillStore> = OnceLock::new();
    STORE.get_or_init(|| {
        let cfg = shipped_config();
        let policy = cfg.policy.to_spec().unwrap();
        let ae_spec = cfg.autoencoder.to_spec(policy.param_count()).unwrap();
        let mut store = SkillStore::new(
            policy.clone(),
            ae_spec,
            cfg.autoencoder.hyper(),
            cfg.autoencoder.seed,
        )
        .unwrap();
        for name in cfg.skills.keys() {
            let (env, oracle, termination) = cfg.skill_setup(name).unwrap();
            let skill = distill_skill(&oracle, &policy, &cfg.distill, &termination, cfg.eval_seeds)
                .unwrap();
            store
                .add_skill(SkillRecord {
                    name: name.clone(),
                    env,
                    termination,
                    params: skill.params,
                    skill_vector: None,
                    recon_rel_error: None,
                    built_at: None,
                    metrics: skill.metrics,
                })
                .unwrap();
        }
        let summary = store.rebuild_memory(None).unwrap();
        assert!(
            summary.reached_target,
            "memory build missed its fidelity target: {:?}",
            summary.recon_errors
        );
        store
    })
}

const NAV_GOALS: [[f64; 2]; 8] = [
    [2.0, 0.0],
    [2.0, 0.5],
    [-2.0, 0.0],
    [-2.0, 0.5],
    [0.0, 2.0],
    [0.5, 2.0],
    [0.0, -2.0],
    [0.5, -2.0],
];

fn nav_oracle(goal: [f64; 2]) -> ControllerSpec<Scalar> {
    ControllerSpec {
        law: ControlLaw::PdGoal {
            kp: 0.2,
            kd: 0.7,
            gravity_feedforward: false,
        },
        env: EnvParams::point_mass_2d(goal),
    }
}

/// The nav_goal family store for A4: a linear navigation policy per goal,
/// every member trained on one shared state set (the union of all member
/// tubes) so parameter differences are purely goal-driven.
fn nav_family_store() -> &'static SkillStore {
    static STORE: OnceLock<SkillStore> = OnceLock::new();
    STORE.get_or_init(|| {
        let policy = PolicySpec::new(vec![4, 2], Some(vec![(-1.0, 1.0), (-1.0, 1.0)]));
        let term = TerminationSpec {
            tolerance: 0.05,
            hold_steps: 10,
            max_steps: 400,
        };
        let cfg = DistillConfig {
            n_rollout_states: 512,
            n_grid_states: 0,
            noise_sigma: 0.05,
            holdout_fraction: 0.1,
            epochs: 500,
            batch_size: 128,
            seed: 7,
        };
        let ae_spec = AutoencoderSpec {
            input_dim: policy.param_count(),
            hidden: vec![16],
            latent_dim: 4,
        };
        let hyper = AeHyper {
            lr: 1e-3,
            max_epochs: 20_000,
            target_rel_error: 0.01,
        };
        let mut store = SkillStore::new(policy.clone(), ae_spec, hyper, 11).unwrap();

        let mut shared_states: Vec<EnvState<Scalar>> = Vec::new();
        for goal in &NAV_GOALS {
            let oracle = nav_oracle(*goal);
            shared_states.extend(sample_states(&oracle.env, &oracle, &cfg).unwrap());
        }
        for (i, goal) in NAV_GOALS.iter().enumerate() {
            let oracle = nav_oracle(*goal);
            let batch = build_dataset(&oracle, &shared_states, &policy).unwrap();
            let trained = train_policy(&policy, &batch, &cfg).unwrap();
            let eval = evaluate_policy(&oracle.env, &policy, &trained.params, &term, 10).unwrap();
            assert_eq!(
                eval.success_rate, 1.0,
                "nav family member {i} is not closed-loop competent"
            );
            store
                .add_skill(SkillRecord {
                    name: format!("nav_{i:02}"),
                    env: oracle.env.clone(),
                    termination: term.clone(),
                    params: trained.params,
                    skill_vector: None,
                    recon_rel_error: None,
                    built_at: None,
                    metrics: SkillMetrics {
                        train_mse: trained.train_mse,
                        holdout_mse: trained.holdout_mse,
                        success_rate: eval.success_rate,
                        mean_steps_to_success: eval.mean_steps_to_success,
                    },
                })
                .unwrap();
        }
        let summary = store.rebuild_memory(None).unwrap();
        assert!(summary.reached_target, "{:?}", summary.recon_errors);
        store
    })
}

fn verdict(criterion: &str, ok: bool, detail: &str) {
    println!(
        "{criterion}: {} ({detail})",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "{criterion} failed: {detail}");
}

#[test]
fn a1_gradient_correctness() {
    let report = gradient_check(20, 2024);
    let detail = format!(
        "{} randomized cases, worst deviation {:.3e} (tolerance {:.0e})",
        report.cases.len(),
        report.worst(),
        GRAD_REL_TOL
    );
    verdict("A1 gradient-correctness", report.ok(), &detail);
}

#[test]
fn a2_distillation_fidelity() {
    let cfg = shipped_config();
    let store = default_store();
    let mut ok = true;
    let mut worst_mse: f64 = 0.0;
    for skill in &store.skills {
        worst_mse = worst_mse.max(skill.metrics.holdout_mse);
        let (_, oracle, termination) = cfg.skill_setup(&skill.name).unwrap();
        let oracle_eval = evaluate_oracle(&oracle, &termination, cfg.eval_seeds).unwrap();
        let line_ok = skill.metrics.holdout_mse <= 1e-3
            && skill.metrics.success_rate == 1.0
            && oracle_eval.success_rate == 1.0;
        println!(
            "  {}: holdout {:.3e}, policy {}/10, oracle {}/10",
            skill.name,
            skill.metrics.holdout_mse,
            (skill.metrics.success_rate * 10.0).round(),
            (oracle_eval.success_rate * 10.0).round()
        );
        ok &= line_ok;
    }
    let detail =
        format!("5 shipped skills, worst holdout MSE {worst_mse:.3e}, all 10/10 matching oracle");
    verdict("A2 distillation-fidelity", ok, &detail);
}

#[test]
fn a3_memorization_fidelity() {
    let store = default_store();
    let (stats, ae) = (store.stats.as_ref().unwrap(), store.ae.as_ref().unwrap());
    let mut ok = true;
    let mut worst_recon: f64 = 0.0;
    for skill in &store.skills {
        let recon = skill.recon_rel_error.unwrap();
        worst_recon = worst_recon.max(recon);
        let recalled = recall(
            &store.ae_spec,
            ae,
            stats,
            skill.skill_vector.as_ref().unwrap(),
        )
        .unwrap();
        let original = evaluate_policy(
            &skill.env,
            &store.policy_spec,
            &skill.params,
            &skill.termination,
            10,
        )
        .unwrap();
        let through_memory = evaluate_policy(
            &skill.env,
            &store.policy_spec,
            &recalled,
            &skill.termination,
            10,
        )
        .unwrap();
        let original_wins: Vec<usize> = original
            .outcomes
            .iter()
            .enumerate()
            .filter(|(_, o)| **o == Outcome::Success)
            .map(|(i, _)| i)
            .collect();
        let kept = original_wins
            .iter()
            .filter(|&&i| through_memory.outcomes[i] == Outcome::Success)
            .count();
        let needed = (original_wins.len() * 9).div_ceil(10);
        // Action agreement at the skill's goal state, through memory.
        let goal_state = EnvState {
            values: skill.env.goal_state(),
        };
        let input = skill
            .env
            .embed_state(&goal_state, store.policy_spec.input_dim())
            .unwrap();
        let a_orig =
            skillmem_core::net::forward(&store.policy_spec, &skill.params, &input).unwrap();
        let a_mem = skillmem_core::net::forward(&store.policy_spec, &recalled, &input).unwrap();
        let action_dev = a_orig
            .iter()
            .zip(&a_mem)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        println!(
            "  {}: recon {:.4}, behavior {}/{} (needs {}), goal-state action dev {:.4}",
            skill.name,
            recon,
            kept,
            original_wins.len(),
            needed,
            action_dev
        );
        ok &= recon <= 0.05 && kept >= needed && action_dev <= 0.05;
    }
    let detail = format!(
        "worst reconstruction {worst_recon:.4} (bound 0.05), recalled policies keep >= 9/10 of original successes"
    );
    verdict("A3 memorization-fidelity", ok, &detail);
}

#[test]
fn a4_latent_relevance_ordering() {
    let store = nav_family_store();
    let codes: Vec<SkillVector> = store
        .skills
        .iter()
        .map(|s| s.skill_vector.clone().unwrap())
        .collect();
    let mut near: Vec<f64> = Vec::new();
    let mut far: Vec<f64> = Vec::new();
    for i in 0..codes.len() {
        for j in (i + 1)..codes.len() {
            let (gi, gj) = (NAV_GOALS[i], NAV_GOALS[j]);
            let sep = ((gi[0] - gj[0]).powi(2) + (gi[1] - gj[1]).powi(2)).sqrt();
            let d = skill_distance(&codes[i], &codes[j]).unwrap();
            if (sep - 0.5).abs() < 1e-9 {
                near.push(d);
            } else if (sep - 4.0).abs() < 1e-9 {
                far.push(d);
            }
        }
    }
    let max_near = near.iter().cloned().fold(0.0, f64::max);
    let min_far = far.iter().cloned().fold(f64::INFINITY, f64::min);
    let ok = near.len() == 4 && far.len() == 4 && max_near < min_far;
    let detail = format!(
        "{} near pairs (goal sep 0.5) all below {} far pairs (sep 4.0): max-near {max_near:.3} < min-far {min_far:.3}",
        near.len(),
        far.len()
    );
    verdict("A4 latent-relevance-ordering", ok, &detail);
}

/// Reference ordering oracle: repeatedly emit the lexicographically
/// smallest id whose predecessors are all done.
fn reference_order(ids: &[String], edges: &[(String, String)]) -> Vec<String> {
    let mut remaining: BTreeSet<&str> = ids.iter().map(|s| s.as_str()).collect();
    let mut order = Vec::new();
    while !remaining.is_empty() {
        let pick = remaining
            .iter()
            .find(|&&id| {
                !edges
                    .iter()
                    .any(|(from, to)| to == id && remaining.contains(from.as_str()))
            })
            .copied()
            .expect("acyclic");
        remaining.remove(pick);
        order.push(pick.to_string());
    }
    order
}

#[test]
fn a5_graph_execution() {
    let store = default_store();
    let graph = TaskGraph::load(&repo_path("configs/graph_waypoints.json")).unwrap();

    let report = execute(&graph, store, 3).unwrap();
    let completed = report.status == ExecStatus::Completed;
    let successes = report
        .nodes
        .iter()
        .filter(|n| n.outcome == Outcome::Success)
        .count();
    for node in &report.nodes {
        println!(
            "  {}: {:?} in {} steps",
            node.id,
            node.outcome,
            node.trajectory.steps.len()
        );
    }

    // Bit-identical rerun.
    let rerun = execute(&graph, store, 3).unwrap();
    let identical = report == rerun && report.to_json() == rerun.to_json();

    // Traversal-order soundness on 100 random DAGs vs the reference oracle.
    let mut order_ok = true;
    for seed in 0..100u64 {
        let mut rng = Xoshiro256StarStar::new(seed);
        let n = 2 + rng.next_below(10);
        let ids: Vec<String> = (0..n).map(|i| format!("n{i:02}")).collect();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.next_below(3) == 0 {
                    edges.push((ids[i].clone(), ids[j].clone()));
                }
            }
        }
        let dag = TaskGraph {
            nodes: ids
                .iter()
                .map(|id| TaskNode {
                    id: id.clone(),
                    skill: SkillRef::Literal(SkillVector {
                        values: vec![0.0; 8],
                    }),
                    goal: None,
                    termination: None,
                })
                .collect(),
            edges: edges.clone(),
            env: None,
        };
        let order = traversal_order(&dag).unwrap();
        if order != reference_order(&ids, &edges) {
            order_ok = false;
            break;
        }
        for (from, to) in &edges {
            let pf = order.iter().position(|x| x == from).unwrap();
            let pt = order.iter().position(|x| x == to).unwrap();
            if pf >= pt {
                order_ok = false;
            }
        }
    }

    let ok = completed && successes == 3 && identical && order_ok;
    let detail = format!(
        "3-waypoint chain Completed with {successes}/3 Success, rerun bit-identical: {identical}, traversal matches oracle on 100 random DAGs: {order_ok}"
    );
    verdict("A5 graph-execution", ok, &detail);
}

#[test]
fn a6_riccati_correctness() {
    let report = riccati_check(20, 2024);
    let worst_dp = report.dp_errs.iter().cloned().fold(0.0, f64::max);
    let detail = format!(
        "scalar closed form off by {:.2e} (bound 1e-8); {} random systems vs horizon-500 DP, worst {:.2e} (bound 1e-6)",
        report.scalar_p_err.max(report.scalar_k_err),
        report.dp_errs.len(),
        worst_dp
    );
    verdict("A6 riccati-correctness", report.ok(), &detail);
}

#[test]
fn a7_persistence() {
    // 50 randomized stores round-trip bit-exactly.
    let mut rng = Xoshiro256StarStar::new(7);
    let mut roundtrips_ok = true;
    for case in 0..50 {
        let policy = PolicySpec::new(vec![4, 2], Some(vec![(-1.0, 1.0), (-1.0, 1.0)]));
        let ae_spec = AutoencoderSpec {
            input_dim: policy.param_count(),
            hidden: vec![8],
            latent_dim: 2,
        };
        let hyper = AeHyper {
            lr: 1e-3,
            max_epochs: 20,
            target_rel_error: 0.05,
        };
        let mut store = SkillStore::new(policy, ae_spec, hyper, rng.next_u64()).unwrap();
        let n_skills = 1 + rng.next_below(4);
        for i in 0..n_skills {
            let goal = [rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)];
            let mut params = ParamVector::zeros(10);
            for v in params.data.iter_mut() {
                *v = rng.uniform(-1.0, 1.0);
            }
            store
                .add_skill(SkillRecord {
                    name: format!("skill_{i}"),
                    env: EnvParams::point_mass_2d(goal),
                    termination: TerminationSpec {
                        tolerance: rng.uniform(0.01, 0.2),
                        hold_steps: 1 + rng.next_below(20),
                        max_steps: 50 + rng.next_below(500),
                    },
                    params,
                    skill_vector: None,
                    recon_rel_error: None,
                    built_at: None,
                    metrics: SkillMetrics {
                        train_mse: rng.uniform(0.0, 1e-3),
                        holdout_mse: rng.uniform(0.0, 1e-3),
                        success_rate: rng.uniform(0.0, 1.0),
                        mean_steps_to_success: if rng.next_below(2) == 0 {
                            Some(rng.uniform(1.0, 400.0))
                        } else {
                            None
                        },
                    },
                })
                .unwrap();
        }
        if rng.next_below(2) == 0 {
            store.rebuild_memory(Some(rng.next_u64())).unwrap();
        }
        let bytes = store.to_bytes().unwrap();
        let loaded = SkillStore::from_bytes(&bytes).unwrap();
        if loaded != store || loaded.to_bytes().unwrap() != bytes {
            println!("  roundtrip mismatch at case {case}");
            roundtrips_ok = false;
            break;
        }
    }

    // 0-ULP recomputation on the real store, through a disk roundtrip.
    let store = default_store();
    let bytes = store.to_bytes().unwrap();
    let reloaded = SkillStore::from_bytes(&bytes).unwrap();
    let exact = reloaded.verify_exact().unwrap();
    let exact_ok = exact.ok() && exact.skills_checked == store.skills.len();
    if !exact_ok {
        for v in &exact.violations {
            println!("  {v}");
        }
    }

    let ok = roundtrips_ok && exact_ok;
    let detail = format!(
        "50 randomized stores bit-exact, verify recomputation matches recorded values at 0 ULP on {} skills",
        exact.skills_checked
    );
    verdict("A7 persistence", ok, &detail);
}

#[test]
fn a8_determinism() {
    let cfg = shipped_config();
    let policy = cfg.policy.to_spec().unwrap();

    // Stage 1: distillation reruns bit-identically.
    let (_, oracle, termination) = cfg.skill_setup("hover").unwrap();
    let first =
        distill_skill(&oracle, &policy, &cfg.distill, &termination, cfg.eval_seeds).unwrap();
    let second =
        distill_skill(&oracle, &policy, &cfg.distill, &termination, cfg.eval_seeds).unwrap();
    let distill_ok = first.params == second.params && first.metrics == second.metrics;

    // Stage 2: memory build reruns bit-identically (store bytes).
    let build = |seed: u64| -> Vec<u8> {
        let ae_spec = cfg.autoencoder.to_spec(policy.param_count()).unwrap();
        let mut store =
            SkillStore::new(policy.clone(), ae_spec, cfg.autoencoder.hyper(), seed).unwrap();
        let (env, _, term) = cfg.skill_setup("hover").unwrap();
        store
            .add_skill(SkillRecord {
                name: "hover".into(),
                env,
                termination: term,
                params: first.params.clone(),
                skill_vector: None,
                recon_rel_error: None,
                built_at: None,
                metrics: first.metrics.clone(),
            })
            .unwrap();
        store.rebuild_memory(None).unwrap();
        store.to_bytes().unwrap()
    };
    let build_ok = build(cfg.autoencoder.seed) == build(cfg.autoencoder.seed);

    // Stage 3: graph execution writes bit-identical reports and CSVs.
    let store = default_store();
    let graph = TaskGraph::load(&repo_path("configs/graph_waypoints.json")).unwrap();
    let r1 = execute(&graph, store, 9).unwrap();
    let r2 = execute(&graph, store, 9).unwrap();
    let mut csv1 = Vec::new();
    let mut csv2 = Vec::new();
    for (a, b) in r1.nodes.iter().zip(&r2.nodes) {
        skillmem_core::env::write_trajectory_csv(
            &a.trajectory,
            a.state_dim,
            a.action_dim,
            &mut csv1,
        )
        .unwrap();
        skillmem_core::env::write_trajectory_csv(
            &b.trajectory,
            b.state_dim,
            b.action_dim,
            &mut csv2,
        )
        .unwrap();
    }
    let graph_ok = r1.to_json() == r2.to_json() && csv1 == csv2;

    // Stage 4: closed-loop rollouts rerun bit-identically.
    let skill = store.get_skill("nav_east").unwrap();
    let act = skillmem_core::distill::policy_act_fn(&skill.env, &store.policy_spec, &skill.params);
    let t1 = rollout(&skill.env, &act, skill.env.reset(4), &skill.termination);
    let t2 = rollout(&skill.env, &act, skill.env.reset(4), &skill.termination);
    let rollout_ok = t1 == t2;

    let ok = distill_ok && build_ok && graph_ok && rollout_ok;
    let detail = format!(
        "distill rerun identical: {distill_ok}, memory build bytes identical: {build_ok}, graph outputs identical: {graph_ok}, rollouts identical: {rollout_ok}"
    );
    verdict("A8 determinism", ok, &detail);
}
