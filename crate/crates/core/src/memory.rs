//! Parameter-space autoencoder: the skill memory.
//!
//! The encoder maps a flattened (and z-score normalized) policy parameter
//! vector to a low-dimensional skill vector; the decoder recalls
//! parameters from any skill vector, including ones never produced by
//! encoding. The memory is trained to overfit its skill set: training
//! stops once every stored skill reconstructs within the relative-error
//! target in raw parameter space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::backward_from_trace;
use crate::net::{
    adam_step, forward_trace, forward_unclipped, init_params, AdamHyper, AdamState, GradVector,
    ParamVector, PolicySpec,
};
use crate::rng::derive_seed;
use crate::Scalar;

/// Scale floor used when a parameter dimension barely varies across skills.
pub const SIGMA_FLOOR: f64 = 1e-6;

/// Mirrored encoder/decoder architecture: encoder
/// `[input_dim, hidden.., latent_dim]`, decoder reversed. Hidden layers
/// are tanh; the latent and the output are identity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
}

impl AutoencoderSpec {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.input_dim == 0 {
            return Err(Error::InvalidConfig("autoencoder dims must be >= 1".into()));
        }
        if self.latent_dim >= self.input_dim {
            return Err(Error::InvalidConfig(
                "latent dimension must be smaller than the input dimension".into(),
            ));
        }
        Ok(())
    }

    pub fn encoder_spec(&self) -> PolicySpec<Scalar> {
        let mut dims = vec![self.input_dim];
        dims.extend_from_slice(&self.hidden);
        dims.push(self.latent_dim);
        PolicySpec::new(dims, None)
    }

    pub fn decoder_spec(&self) -> PolicySpec<Scalar> {
        let mut dims = vec![self.latent_dim];
        dims.extend(self.hidden.iter().rev());
        dims.push(self.input_dim);
        PolicySpec::new(dims, None)
    }
}

/// Encoder and decoder parameters in the shared flat layout.
#[derive(Clone, Debug, PartialEq)]
pub struct AeParams {
    pub encoder: ParamVector<Scalar>,
    pub decoder: ParamVector<Scalar>,
}

/// Latent code naming a skill.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkillVector {
    pub values: Vec<Scalar>,
}

/// Per-dimension z-score statistics across the stored skill set.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizationStats {
    pub mean: Vec<Scalar>,
    pub scale: Vec<Scalar>,
}

/// Per-dimension mean and scale over the skill set. With a single stored
/// vector the per-dimension std is degenerate, so the global std of that
/// vector's entries is used for every dimension. Scales are floored at
/// [`SIGMA_FLOOR`].
pub fn fit_normalization(ws: &[&ParamVector<Scalar>]) -> Result<NormalizationStats> {
    if ws.is_empty() {
        return Err(Error::EmptySkillSet);
    }
    let m = ws[0].len();
    for w in ws {
        if w.len() != m {
            return Err(Error::DimensionMismatch {
                context: "normalization input",
                expected: m,
                got: w.len(),
            });
        }
    }
    let n = ws.len() as f64;
    let mut mean = vec![0.0; m];
    for w in ws {
        for (mu, x) in mean.iter_mut().zip(&w.data) {
            *mu += *x;
        }
    }
    for mu in mean.iter_mut() {
        *mu /= n;
    }
    let scale = if ws.len() == 1 {
        let w = ws[0];
        let entry_mean = w.data.iter().sum::<f64>() / m as f64;
        let var = w.data.iter().map(|x| (x - entry_mean).powi(2)).sum::<f64>() / m as f64;
        vec![var.sqrt().max(SIGMA_FLOOR); m]
    } else {
        let mut var = vec![0.0; m];
        for w in ws {
            for ((v, x), mu) in var.iter_mut().zip(&w.data).zip(&mean) {
                let d = *x - *mu;
                *v += d * d;
            }
        }
        var.iter()
            .map(|v| (v / n).sqrt().max(SIGMA_FLOOR))
            .collect()
    };
    Ok(NormalizationStats { mean, scale })
}

pub fn normalize(w: &ParamVector<Scalar>, stats: &NormalizationStats) -> ParamVector<Scalar> {
    let data = w
        .data
        .iter()
        .zip(&stats.mean)
        .zip(&stats.scale)
        .map(|((x, mu), s)| (x - mu) / s)
        .collect();
    ParamVector { data }
}

pub fn denormalize(w: &ParamVector<Scalar>, stats: &NormalizationStats) -> ParamVector<Scalar> {
    let data = w
        .data
        .iter()
        .zip(&stats.mean)
        .zip(&stats.scale)
        .map(|((x, mu), s)| x * s + mu)
        .collect();
    ParamVector { data }
}

/// Memorization hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AeHyper {
    pub lr: f64,
    pub max_epochs: usize,
    pub target_rel_error: f64,
}

impl Default for AeHyper {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            max_epochs: 20_000,
            target_rel_error: 0.05,
        }
    }
}

/// Result of a memorization run. `reached_target` is false when the epoch
/// budget ran out with some skill still above the fidelity target; callers
/// must surface that, not swallow it.
#[derive(Clone, Debug)]
pub struct AeTraining {
    pub params: AeParams,
    pub recon_errors: Vec<f64>,
    pub reached_target: bool,
    pub epochs_run: usize,
}

/// Relative reconstruction error in raw parameter space.
pub fn reconstruction_error(
    spec: &AutoencoderSpec,
    ae: &AeParams,
    stats: &NormalizationStats,
    w: &ParamVector<Scalar>,
) -> Result<f64> {
    let recalled = recall(spec, ae, stats, &encode(spec, ae, stats, w)?)?;
    let mut num = 0.0;
    for (a, b) in w.data.iter().zip(&recalled.data) {
        let d = a - b;
        num += d * d;
    }
    let denom = w.norm().max(1e-12);
    Ok(num.sqrt() / denom)
}

/// Full-batch Adam on the normalized reconstruction objective, warm-started
/// from `warm` when given. Checks the raw-space fidelity target every few
/// epochs and stops early once every skill is within it.
pub fn train_autoencoder(
    ws: &[&ParamVector<Scalar>],
    stats: &NormalizationStats,
    spec: &AutoencoderSpec,
    hyper: &AeHyper,
    seed: u64,
    warm: Option<AeParams>,
) -> Result<AeTraining> {
    spec.validate()?;
    if ws.is_empty() {
        return Err(Error::EmptySkillSet);
    }
    for w in ws {
        if w.len() != spec.input_dim {
            return Err(Error::DimensionMismatch {
                context: "autoencoder input",
                expected: spec.input_dim,
                got: w.len(),
            });
        }
    }

    let enc_spec = spec.encoder_spec();
    let dec_spec = spec.decoder_spec();
    let mut ae = match warm {
        Some(p)
            if p.encoder.len() == enc_spec.param_count()
                && p.decoder.len() == dec_spec.param_count() =>
        {
            p
        }
        _ => AeParams {
            encoder: init_params(&enc_spec, derive_seed(seed, 1)),
            decoder: init_params(&dec_spec, derive_seed(seed, 2)),
        },
    };

    let normalized: Vec<ParamVector<Scalar>> = ws.iter().map(|w| normalize(w, stats)).collect();
    let hyper_net = AdamHyper::with_lr(hyper.lr);
    let mut enc_adam = AdamState::new(ae.encoder.len());
    let mut dec_adam = AdamState::new(ae.decoder.len());
    let n = ws.len() as f64;
    const CHECK_EVERY: usize = 10;

    let errors = |ae: &AeParams| -> Result<Vec<f64>> {
        ws.iter()
            .map(|w| reconstruction_error(spec, ae, stats, w))
            .collect()
    };

    let mut epochs_run = 0;
    // A warm-started memory may already satisfy the target.
    let mut recon = errors(&ae)?;
    let mut reached = recon.iter().all(|e| *e <= hyper.target_rel_error);

    while !reached && epochs_run < hyper.max_epochs {
        let mut enc_grad = GradVector::zeros(ae.encoder.len());
        let mut dec_grad = GradVector::zeros(ae.decoder.len());
        let mut loss = 0.0;
        for x in &normalized {
            let enc_acts = forward_trace(&enc_spec, &ae.encoder, &x.data);
            let latent = enc_acts.last().unwrap().clone();
            let dec_acts = forward_trace(&dec_spec, &ae.decoder, &latent);
            let out = dec_acts.last().unwrap();
            let mut d_out = Vec::with_capacity(out.len());
            for (o, t) in out.iter().zip(&x.data) {
                let d = o - t;
                loss += d * d;
                d_out.push(2.0 * d / n);
            }
            let d_latent = backward_from_trace(
                &dec_spec,
                &ae.decoder,
                &dec_acts,
                &d_out,
                &mut dec_grad.data,
            );
            backward_from_trace(
                &enc_spec,
                &ae.encoder,
                &enc_acts,
                &d_latent,
                &mut enc_grad.data,
            );
        }
        if !loss.is_finite() {
            return Err(Error::NanLoss { epoch: epochs_run });
        }
        adam_step(&mut ae.encoder, &enc_grad, &mut enc_adam, &hyper_net);
        adam_step(&mut ae.decoder, &dec_grad, &mut dec_adam, &hyper_net);
        epochs_run += 1;

        if epochs_run % CHECK_EVERY == 0 || epochs_run == hyper.max_epochs {
            recon = errors(&ae)?;
            reached = recon.iter().all(|e| *e <= hyper.target_rel_error);
        }
    }

    Ok(AeTraining {
        params: ae,
        recon_errors: recon,
        reached_target: reached,
        epochs_run,
    })
}

/// S = E(normalize(W)).
pub fn encode(
    spec: &AutoencoderSpec,
    ae: &AeParams,
    stats: &NormalizationStats,
    w: &ParamVector<Scalar>,
) -> Result<SkillVector> {
    if w.len() != spec.input_dim {
        return Err(Error::DimensionMismatch {
            context: "encode input",
            expected: spec.input_dim,
            got: w.len(),
        });
    }
    let x = normalize(w, stats);
    let values = forward_unclipped(&spec.encoder_spec(), &ae.encoder, &x.data)?;
    Ok(SkillVector { values })
}

/// W = denormalize(D(S)). Total on the whole latent space: skill vectors
/// that were never produced by encoding are legal inputs.
pub fn recall(
    spec: &AutoencoderSpec,
    ae: &AeParams,
    stats: &NormalizationStats,
    s: &SkillVector,
) -> Result<ParamVector<Scalar>> {
    if s.values.len() != spec.latent_dim {
        return Err(Error::DimensionMismatch {
            context: "recall input",
            expected: spec.latent_dim,
            got: s.values.len(),
        });
    }
    let decoded = forward_unclipped(&spec.decoder_spec(), &ae.decoder, &s.values)?;
    let w = denormalize(&ParamVector { data: decoded }, stats);
    if !w.is_finite() {
        return Err(Error::NonFiniteRecall);
    }
    Ok(w)
}

/// Euclidean distance between skill vectors.
pub fn skill_distance(a: &SkillVector, b: &SkillVector) -> Result<f64> {
    if a.values.len() != b.values.len() {
        return Err(Error::DimensionMismatch {
            context: "skill distance",
            expected: a.values.len(),
            got: b.values.len(),
        });
    }
    let mut acc = 0.0;
    for (x, y) in a.values.iter().zip(&b.values) {
        let d = x - y;
        acc += d * d;
    }
    Ok(acc.sqrt())
}

/// Linear latent interpolation (1 - alpha) * a + alpha * b.
pub fn interpolate(a: &SkillVector, b: &SkillVector, alpha: f64) -> Result<SkillVector> {
    if a.values.len() != b.values.len() {
        return Err(Error::DimensionMismatch {
            context: "interpolate",
            expected: a.values.len(),
            got: b.values.len(),
        });
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    let values = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (1.0 - alpha) * x + alpha * y)
        .collect();
    Ok(SkillVector { values })
}

/// a = policy(input | D(S)): recall the parameters, then evaluate the
/// policy (with its output clipping) on an already-embedded input.
pub fn act_through_memory(
    policy: &PolicySpec<Scalar>,
    spec: &AutoencoderSpec,
    ae: &AeParams,
    stats: &NormalizationStats,
    s: &SkillVector,
    input: &[Scalar],
) -> Result<Vec<Scalar>> {
    let w = recall(spec, ae, stats, s)?;
    crate::net::forward(policy, &w, input)
}
