//! Supervised distillation of classical controllers into the policy
//! network: state sampling, dataset construction, training with a
//! best-holdout checkpoint, and closed-loop evaluation.

use serde::{Deserialize, Serialize};

use crate::control::{controller_action, ControllerSpec};
use crate::env::{rollout, EnvAction, Outcome, TerminationSpec, Trajectory};
use crate::error::{Error, Result};
use crate::net::{
    adam_step, forward, init_params, loss_and_grad, mse, AdamHyper, AdamState, Batch, ParamVector,
    PolicySpec,
};
use crate::rng::{derive_seed, Xoshiro256StarStar};
use crate::Scalar;
use crate::{EnvParams, EnvState};

/// Steps per state-collection rollout.
const SAMPLE_ROLLOUT_STEPS: usize = 200;
/// Stream tags so action noise and training randomness draw from distinct
/// deterministic streams of the same seed.
const STREAM_NOISE: u64 = 1;
const STREAM_TRAIN: u64 = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistillConfig {
    pub n_rollout_states: usize,
    pub n_grid_states: usize,
    pub noise_sigma: f64,
    pub holdout_fraction: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            n_rollout_states: 4096,
            n_grid_states: 1024,
            noise_sigma: 0.05,
            holdout_fraction: 0.1,
            epochs: 500,
            batch_size: 128,
            seed: 7,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::InvalidConfig(
                "holdout_fraction must lie in (0, 1)".into(),
            ));
        }
        if self.n_rollout_states + self.n_grid_states == 0
            || self.epochs == 0
            || self.batch_size == 0
        {
            return Err(Error::InvalidConfig(
                "state counts, epochs, and batch size must be >= 1".into(),
            ));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidConfig("noise_sigma must be >= 0".into()));
        }
        Ok(())
    }
}

/// Per-skill quality numbers recorded in the store.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkillMetrics {
    pub train_mse: f64,
    pub holdout_mse: f64,
    pub success_rate: f64,
    pub mean_steps_to_success: Option<f64>,
}

/// Closed-loop evaluation over seeded initial states.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub outcomes: Vec<Outcome>,
    pub success_rate: f64,
    pub mean_steps_to_success: Option<f64>,
}

/// Init seed of the `idx`-th sampling rollout for a distill seed.
pub fn rollout_init_seed(seed: u64, idx: u64) -> u64 {
    derive_seed(seed, idx.wrapping_add(100))
}

/// Radical inverse of `i` in the given base (Halton sequence coordinate).
fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut out = 0.0;
    let mut scale = inv;
    while i > 0 {
        out += (i % base) as f64 * scale;
        i /= base;
        scale *= inv;
    }
    out
}

/// Low-discrepancy grid over the environment's operating box (Halton
/// points, one prime base per state entry).
pub fn grid_states(env: &EnvParams, count: usize) -> Vec<EnvState> {
    const BASES: [u64; 6] = [2, 3, 5, 7, 11, 13];
    let mut out = Vec::with_capacity(count);
    for i in 1..=count as u64 {
        let values = env
            .state_box
            .iter()
            .enumerate()
            .map(|(j, (lo, hi))| lo + radical_inverse(i, BASES[j % BASES.len()]) * (hi - lo))
            .collect();
        out.push(EnvState { values });
    }
    out
}

/// Training-state distribution: oracle-driven rollouts from seeded initial
/// states with zero-mean Gaussian action perturbation, plus a Halton grid
/// over the operating box. Deterministic given the config seed.
pub fn sample_states(
    env: &EnvParams,
    oracle: &ControllerSpec<Scalar>,
    cfg: &DistillConfig,
) -> Result<Vec<EnvState>> {
    cfg.validate()?;
    env.validate()?;
    oracle.validate()?;
    let mut noise = Xoshiro256StarStar::new(derive_seed(cfg.seed, STREAM_NOISE));
    let mut states = Vec::with_capacity(cfg.n_rollout_states + cfg.n_grid_states);
    let mut rollout_idx = 0u64;
    while states.len() < cfg.n_rollout_states {
        let mut state = env.reset(rollout_init_seed(cfg.seed, rollout_idx));
        rollout_idx += 1;
        for _ in 0..SAMPLE_ROLLOUT_STEPS {
            if states.len() >= cfg.n_rollout_states {
                break;
            }
            states.push(state.clone());
            let mut action = controller_action(oracle, &state)?;
            for v in action.values.iter_mut() {
                *v += cfg.noise_sigma * noise.normal();
            }
            let clipped = env.clip_action(&action);
            state = env.step(&state, &clipped)?;
            if env.is_diverged(&state) {
                break;
            }
        }
    }
    states.extend(grid_states(env, cfg.n_grid_states));
    Ok(states)
}

/// Labels every state with the oracle action, embedding states into the
/// policy input width and zero-padding targets to the policy output width.
pub fn build_dataset(
    oracle: &ControllerSpec<Scalar>,
    states: &[EnvState],
    policy: &PolicySpec<Scalar>,
) -> Result<Batch<Scalar>> {
    policy.validate()?;
    let mut inputs = Vec::with_capacity(states.len());
    let mut targets = Vec::with_capacity(states.len());
    for state in states {
        inputs.push(oracle.env.embed_state(state, policy.input_dim())?);
        let action = controller_action(oracle, state)?;
        let mut target = action.values;
        if target.len() > policy.output_dim() {
            return Err(Error::DimensionMismatch {
                context: "dataset target",
                expected: policy.output_dim(),
                got: target.len(),
            });
        }
        target.resize(policy.output_dim(), 0.0);
        targets.push(target);
    }
    Ok(Batch { inputs, targets })
}

/// Training outcome: the best-holdout parameters and their fit quality.
#[derive(Clone, Debug)]
pub struct TrainedPolicy {
    pub params: ParamVector<Scalar>,
    pub train_mse: f64,
    pub holdout_mse: f64,
}

/// Adam minimization of the imitation MSE from a seeded initialization.
/// Returns the best-holdout checkpoint, not the last epoch. Deterministic
/// given `cfg.seed`.
pub fn train_policy(
    spec: &PolicySpec<Scalar>,
    batch: &Batch<Scalar>,
    cfg: &DistillConfig,
) -> Result<TrainedPolicy> {
    cfg.validate()?;
    spec.validate()?;
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    batch.validate(spec)?;

    let n = batch.len();
    let n_holdout = ((n as f64 * cfg.holdout_fraction).round() as usize).max(1);
    if n_holdout >= n {
        return Err(Error::InvalidConfig(
            "holdout split leaves no training samples".into(),
        ));
    }

    let mut rng = Xoshiro256StarStar::new(derive_seed(cfg.seed, STREAM_TRAIN));
    let mut indices: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut indices);
    let (train_idx, holdout_idx) = indices.split_at(n - n_holdout);
    let take = |idx: &[usize]| Batch {
        inputs: idx.iter().map(|&i| batch.inputs[i].clone()).collect(),
        targets: idx.iter().map(|&i| batch.targets[i].clone()).collect(),
    };
    let train_set = take(train_idx);
    let holdout_set = take(holdout_idx);

    let mut w = init_params(spec, cfg.seed);
    let hyper = AdamHyper::default();
    let mut adam = AdamState::new(w.len());
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best_w = w.clone();
    let mut best_holdout = mse(spec, &w, &holdout_set)?;

    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        for chunk in order.chunks(cfg.batch_size) {
            let mini = Batch {
                inputs: chunk.iter().map(|&i| train_set.inputs[i].clone()).collect(),
                targets: chunk
                    .iter()
                    .map(|&i| train_set.targets[i].clone())
                    .collect(),
            };
            let (loss, grad) = loss_and_grad(spec, &w, &mini)?;
            if !loss.is_finite() {
                return Err(Error::NanLoss { epoch });
            }
            adam_step(&mut w, &grad, &mut adam, &hyper);
        }
        let holdout = mse(spec, &w, &holdout_set)?;
        if holdout < best_holdout {
            best_holdout = holdout;
            best_w = w.clone();
        }
    }

    let train_mse = mse(spec, &best_w, &train_set)?;
    Ok(TrainedPolicy {
        params: best_w,
        train_mse,
        holdout_mse: best_holdout,
    })
}

/// Closed-loop policy: embed the state, run the network, read the action.
pub fn policy_act_fn<'a>(
    env: &'a EnvParams,
    spec: &'a PolicySpec<Scalar>,
    w: &'a ParamVector<Scalar>,
) -> impl Fn(&EnvState) -> EnvAction<Scalar> + 'a {
    move |state| {
        let input = env
            .embed_state(state, spec.input_dim())
            .expect("embedding validated before rollout");
        let out = forward(spec, w, &input).expect("forward validated before rollout");
        env.extract_action(&out).expect("action width validated")
    }
}

/// Runs the policy from `n_seeds` seeded initial states (seeds 0..n).
pub fn evaluate_policy(
    env: &EnvParams,
    spec: &PolicySpec<Scalar>,
    w: &ParamVector<Scalar>,
    term: &TerminationSpec<Scalar>,
    n_seeds: u64,
) -> Result<EvalReport> {
    env.validate()?;
    term.validate()?;
    env.embed_state(&env.reset(0), spec.input_dim())?;
    let act = policy_act_fn(env, spec, w);
    let trajectories: Vec<Trajectory<Scalar>> = (0..n_seeds)
        .map(|seed| rollout(env, &act, env.reset(seed), term))
        .collect();
    Ok(summarize(&trajectories))
}

/// Runs a classical controller over the same seeded initial states.
pub fn evaluate_oracle(
    oracle: &ControllerSpec<Scalar>,
    term: &TerminationSpec<Scalar>,
    n_seeds: u64,
) -> Result<EvalReport> {
    oracle.validate()?;
    term.validate()?;
    let trajectories: Vec<Trajectory<Scalar>> = (0..n_seeds)
        .map(|seed| {
            rollout(
                &oracle.env,
                |s| controller_action(oracle, s).expect("oracle validated"),
                oracle.env.reset(seed),
                term,
            )
        })
        .collect();
    Ok(summarize(&trajectories))
}

fn summarize(trajectories: &[Trajectory<Scalar>]) -> EvalReport {
    let outcomes: Vec<Outcome> = trajectories.iter().map(|t| t.outcome).collect();
    let successes: Vec<&Trajectory<Scalar>> = trajectories
        .iter()
        .filter(|t| t.outcome == Outcome::Success)
        .collect();
    let success_rate = if trajectories.is_empty() {
        0.0
    } else {
        successes.len() as f64 / trajectories.len() as f64
    };
    let mean_steps_to_success = if successes.is_empty() {
        None
    } else {
        Some(successes.iter().map(|t| t.steps.len() as f64).sum::<f64>() / successes.len() as f64)
    };
    EvalReport {
        outcomes,
        success_rate,
        mean_steps_to_success,
    }
}

/// A fully distilled skill ready to be stored.
#[derive(Clone, Debug)]
pub struct DistilledSkill {
    pub params: ParamVector<Scalar>,
    pub metrics: SkillMetrics,
    pub policy_eval: EvalReport,
    pub oracle_eval: EvalReport,
}

/// End-to-end distillation: sample states, label them with the oracle,
/// train the policy, evaluate policy and oracle closed-loop.
pub fn distill_skill(
    oracle: &ControllerSpec<Scalar>,
    policy: &PolicySpec<Scalar>,
    cfg: &DistillConfig,
    term: &TerminationSpec<Scalar>,
    eval_seeds: u64,
) -> Result<DistilledSkill> {
    let states = sample_states(&oracle.env, oracle, cfg)?;
    let dataset = build_dataset(oracle, &states, policy)?;
    let trained = train_policy(policy, &dataset, cfg)?;
    let policy_eval = evaluate_policy(&oracle.env, policy, &trained.params, term, eval_seeds)?;
    let oracle_eval = evaluate_oracle(oracle, term, eval_seeds)?;
    let metrics = SkillMetrics {
        train_mse: trained.train_mse,
        holdout_mse: trained.holdout_mse,
        success_rate: policy_eval.success_rate,
        mean_steps_to_success: policy_eval.mean_steps_to_success,
    };
    Ok(DistilledSkill {
        params: trained.params,
        metrics,
        policy_eval,
        oracle_eval,
    })
}
