//! Bit-exact persistence of the policy spec, normalization statistics,
//! autoencoder, and skill records.
//!
//! Format version 1: a single JSON document. Human-readable metadata stays
//! plain JSON; every float array is base64 of little-endian IEEE-754
//! 64-bit values so round-trips reproduce each bit. The final `crc32c`
//! field holds a CRC-32C checksum over the canonicalized (compact,
//! field-ordered) body.

use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::distill::{evaluate_policy, SkillMetrics};
use crate::env::{EnvParams, TerminationSpec};
use crate::error::{Error, Result};
use crate::memory::{
    encode, fit_normalization, recall, reconstruction_error, train_autoencoder, AeHyper, AeParams,
    AutoencoderSpec, NormalizationStats, SkillVector,
};
use crate::net::{ParamVector, PolicySpec};
use crate::Scalar;

pub const FORMAT_VERSION: u32 = 1;
/// Seeds 0..EVAL_SEEDS drive every behavior-preservation evaluation.
pub const EVAL_SEEDS: u64 = 10;

/// One named skill: its environment binding, termination rule, trained
/// parameters, and (once the memory is built) its skill vector.
#[derive(Clone, Debug, PartialEq)]
pub struct SkillRecord {
    pub name: String,
    pub env: EnvParams<Scalar>,
    pub termination: TerminationSpec<Scalar>,
    pub params: ParamVector<Scalar>,
    pub skill_vector: Option<SkillVector>,
    pub recon_rel_error: Option<f64>,
    /// Rebuild counter at which the skill vector was computed; stale when
    /// it differs from the store's current counter.
    pub built_at: Option<u64>,
    pub metrics: SkillMetrics,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SkillStore {
    pub version: u32,
    pub rebuild_counter: u64,
    pub policy_spec: PolicySpec<Scalar>,
    pub ae_spec: AutoencoderSpec,
    pub ae_hyper: AeHyper,
    pub ae_seed: u64,
    pub stats: Option<NormalizationStats>,
    pub ae: Option<AeParams>,
    /// Kept sorted by name.
    pub skills: Vec<SkillRecord>,
}

/// Outcome of a memory rebuild.
#[derive(Clone, Debug)]
pub struct RebuildSummary {
    pub reached_target: bool,
    pub epochs_run: usize,
    pub recon_errors: Vec<(String, f64)>,
}

/// Outcome of `verify`: empty `violations` means the store is sound.
#[derive(Clone, Debug, Default)]
pub struct VerifyReport {
    pub skills_checked: usize,
    pub violations: Vec<String>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl SkillStore {
    pub fn new(
        policy_spec: PolicySpec<Scalar>,
        ae_spec: AutoencoderSpec,
        ae_hyper: AeHyper,
        ae_seed: u64,
    ) -> Result<Self> {
        policy_spec.validate()?;
        ae_spec.validate()?;
        if ae_spec.input_dim != policy_spec.param_count() {
            return Err(Error::DimensionMismatch {
                context: "autoencoder input vs policy parameter count",
                expected: policy_spec.param_count(),
                got: ae_spec.input_dim,
            });
        }
        Ok(Self {
            version: FORMAT_VERSION,
            rebuild_counter: 0,
            policy_spec,
            ae_spec,
            ae_hyper,
            ae_seed,
            stats: None,
            ae: None,
            skills: Vec::new(),
        })
    }

    /// Adds a skill under a fresh name. The record's memory-derived fields
    /// are cleared: the store needs a `rebuild_memory` before the new
    /// skill participates in fidelity checks.
    pub fn add_skill(&mut self, mut record: SkillRecord) -> Result<()> {
        if record.name.is_empty() {
            return Err(Error::InvalidConfig("skill name must be nonempty".into()));
        }
        if record.params.len() != self.policy_spec.param_count() {
            return Err(Error::DimensionMismatch {
                context: "skill parameters",
                expected: self.policy_spec.param_count(),
                got: record.params.len(),
            });
        }
        record.env.validate()?;
        record.termination.validate()?;
        if self.skills.iter().any(|s| s.name == record.name) {
            return Err(Error::DuplicateSkill(record.name));
        }
        record.skill_vector = None;
        record.recon_rel_error = None;
        record.built_at = None;
        let pos = self
            .skills
            .binary_search_by(|s| s.name.as_str().cmp(record.name.as_str()))
            .unwrap_err();
        self.skills.insert(pos, record);
        Ok(())
    }

    pub fn get_skill(&self, name: &str) -> Result<&SkillRecord> {
        self.skills
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::UnknownSkill(name.to_string()))
    }

    /// Skill names in sorted order.
    pub fn list_skills(&self) -> Vec<&str> {
        self.skills.iter().map(|s| s.name.as_str()).collect()
    }

    /// Fits normalization over all stored parameter vectors, trains the
    /// autoencoder (warm-started from the previous parameters), bumps the
    /// rebuild counter, and rewrites every skill's vector and
    /// reconstruction error. Returns a summary; `reached_target == false`
    /// means the epoch budget ran out above the fidelity target.
    pub fn rebuild_memory(&mut self, seed_override: Option<u64>) -> Result<RebuildSummary> {
        if self.skills.is_empty() {
            return Err(Error::EmptySkillSet);
        }
        let seed = seed_override.unwrap_or(self.ae_seed);
        let ws: Vec<&ParamVector<Scalar>> = self.skills.iter().map(|s| &s.params).collect();
        let stats = fit_normalization(&ws)?;
        let training = train_autoencoder(
            &ws,
            &stats,
            &self.ae_spec,
            &self.ae_hyper,
            seed,
            self.ae.clone(),
        )?;
        self.rebuild_counter += 1;
        self.stats = Some(stats);
        self.ae = Some(training.params);
        let stats = self.stats.as_ref().unwrap();
        let ae = self.ae.as_ref().unwrap();
        let mut recon_errors = Vec::with_capacity(self.skills.len());
        for skill in self.skills.iter_mut() {
            let s = encode(&self.ae_spec, ae, stats, &skill.params)?;
            let err = reconstruction_error(&self.ae_spec, ae, stats, &skill.params)?;
            skill.skill_vector = Some(s);
            skill.recon_rel_error = Some(err);
            skill.built_at = Some(self.rebuild_counter);
            recon_errors.push((skill.name.clone(), err));
        }
        Ok(RebuildSummary {
            reached_target: training.reached_target,
            epochs_run: training.epochs_run,
            recon_errors,
        })
    }

    fn built(&self) -> Result<(&NormalizationStats, &AeParams)> {
        match (&self.stats, &self.ae) {
            (Some(stats), Some(ae)) => Ok((stats, ae)),
            _ => Err(Error::StoreNotBuilt),
        }
    }

    /// Recomputes every current skill's vector and reconstruction error
    /// and demands bit equality (0 ULP) with the recorded values.
    pub fn verify_exact(&self) -> Result<VerifyReport> {
        let (stats, ae) = self.built()?;
        let mut report = VerifyReport::default();
        for skill in &self.skills {
            if skill.built_at != Some(self.rebuild_counter) {
                continue;
            }
            report.skills_checked += 1;
            let recomputed = encode(&self.ae_spec, ae, stats, &skill.params)?;
            let recorded = skill.skill_vector.as_ref().expect("built skill has vector");
            let bits_equal = recorded.values.len() == recomputed.values.len()
                && recorded
                    .values
                    .iter()
                    .zip(&recomputed.values)
                    .all(|(a, b)| a.to_bits() == b.to_bits());
            if !bits_equal {
                report.violations.push(format!(
                    "{}: recorded skill vector differs from encode(W)",
                    skill.name
                ));
            }
            let err = reconstruction_error(&self.ae_spec, ae, stats, &skill.params)?;
            if skill.recon_rel_error.map(f64::to_bits) != Some(err.to_bits()) {
                report.violations.push(format!(
                    "{}: recorded reconstruction error differs from recomputation",
                    skill.name
                ));
            }
        }
        Ok(report)
    }

    /// Fidelity and behavior-preservation audit: every skill must be
    /// currently built, reconstruct within the fidelity target, and the
    /// recalled parameters must succeed on at least 9/10ths of the
    /// evaluation seeds the original parameters succeed on.
    pub fn verify_fidelity(&self) -> Result<VerifyReport> {
        let (stats, ae) = self.built()?;
        let mut report = VerifyReport::default();
        for skill in &self.skills {
            if skill.built_at != Some(self.rebuild_counter) {
                report.violations.push(format!(
                    "{}: stale skill vector; rebuild the memory",
                    skill.name
                ));
                continue;
            }
            report.skills_checked += 1;
            let err = skill.recon_rel_error.expect("built skill has error");
            if err > self.ae_hyper.target_rel_error {
                report.violations.push(format!(
                    "{}: reconstruction error {err:.6} above target {}",
                    skill.name, self.ae_hyper.target_rel_error
                ));
            }
            let s = skill.skill_vector.as_ref().expect("built skill has vector");
            let recalled = recall(&self.ae_spec, ae, stats, s)?;
            let original = evaluate_policy(
                &skill.env,
                &self.policy_spec,
                &skill.params,
                &skill.termination,
                EVAL_SEEDS,
            )?;
            let through_memory = evaluate_policy(
                &skill.env,
                &self.policy_spec,
                &recalled,
                &skill.termination,
                EVAL_SEEDS,
            )?;
            let original_wins: Vec<usize> = original
                .outcomes
                .iter()
                .enumerate()
                .filter(|(_, o)| **o == crate::env::Outcome::Success)
                .map(|(i, _)| i)
                .collect();
            let kept = original_wins
                .iter()
                .filter(|&&i| through_memory.outcomes[i] == crate::env::Outcome::Success)
                .count();
            let needed = (original_wins.len() * 9).div_ceil(10);
            if kept < needed {
                report.violations.push(format!(
                    "{}: recalled policy succeeds on {kept}/{} of the seeds the original wins (needs {needed})",
                    skill.name,
                    original_wins.len()
                ));
            }
        }
        Ok(report)
    }

    /// Canonical serialized form including the trailing checksum.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let doc = StoreDoc::from_store(self)?;
        let body = serde_json::to_string(&doc)
            .map_err(|e| Error::MalformedStore(format!("serialize: {e}")))?;
        debug_assert!(body.ends_with('}'));
        let crc = crc32c(body.as_bytes());
        let mut out = body;
        out.truncate(out.len() - 1);
        out.push_str(&format!(",\"crc32c\":{crc}}}"));
        Ok(out.into_bytes())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let text = std::str::from_utf8(bytes)
            .map_err(|e| Error::MalformedStore(format!("not utf-8: {e}")))?;
        let file: FileDoc =
            serde_json::from_str(text).map_err(|e| Error::MalformedStore(format!("parse: {e}")))?;
        if file.body.version != FORMAT_VERSION {
            return Err(Error::StoreVersionMismatch {
                found: file.body.version,
                expected: FORMAT_VERSION,
            });
        }
        let canonical = serde_json::to_string(&file.body)
            .map_err(|e| Error::MalformedStore(format!("canonicalize: {e}")))?;
        if crc32c(canonical.as_bytes()) != file.crc32c {
            return Err(Error::ChecksumMismatch);
        }
        file.body.into_store()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        std::fs::write(path, bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes)
    }
}

// CRC-32C (Castagnoli), reflected, table-driven.
const CRC32C_TABLE: [u32; 256] = build_crc32c_table();

const fn build_crc32c_table() -> [u32; 256] {
    let mut table = [0u32; 256];
    let mut i = 0;
    while i < 256 {
        let mut crc = i as u32;
        let mut j = 0;
        while j < 8 {
            crc = if crc & 1 != 0 {
                (crc >> 1) ^ 0x82F6_3B78
            } else {
                crc >> 1
            };
            j += 1;
        }
        table[i] = crc;
        i += 1;
    }
    table
}

pub fn crc32c(data: &[u8]) -> u32 {
    let mut crc = u32::MAX;
    for &b in data {
        crc = (crc >> 8) ^ CRC32C_TABLE[((crc ^ b as u32) & 0xFF) as usize];
    }
    !crc
}

fn f64s_to_b64(xs: &[f64]) -> Result<String> {
    let mut bytes = Vec::with_capacity(xs.len() * 8);
    for x in xs {
        if !x.is_finite() {
            return Err(Error::InvalidConfig(
                "refusing to store non-finite float".into(),
            ));
        }
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    Ok(BASE64.encode(bytes))
}

fn b64_to_f64s(s: &str) -> Result<Vec<f64>> {
    let bytes = BASE64
        .decode(s)
        .map_err(|e| Error::MalformedStore(format!("base64: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::MalformedStore(
            "float array length not a multiple of 8 bytes".into(),
        ));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

#[derive(Serialize, Deserialize)]
struct StatsDoc {
    mean: String,
    scale: String,
}

#[derive(Serialize, Deserialize)]
struct AeDoc {
    encoder: String,
    decoder: String,
}

#[derive(Serialize, Deserialize)]
struct SkillDoc {
    name: String,
    env: EnvParams<Scalar>,
    termination: TerminationSpec<Scalar>,
    params: String,
    skill_vector: Option<String>,
    recon_rel_error: Option<f64>,
    built_at: Option<u64>,
    metrics: SkillMetrics,
}

#[derive(Serialize, Deserialize)]
struct StoreDoc {
    version: u32,
    rebuild_counter: u64,
    policy_spec: PolicySpec<Scalar>,
    autoencoder_spec: AutoencoderSpec,
    ae_hyper: AeHyper,
    ae_seed: u64,
    stats: Option<StatsDoc>,
    ae: Option<AeDoc>,
    skills: Vec<SkillDoc>,
}

#[derive(Deserialize)]
struct FileDoc {
    #[serde(flatten)]
    body: StoreDoc,
    crc32c: u32,
}

impl StoreDoc {
    fn from_store(store: &SkillStore) -> Result<Self> {
        let stats = store
            .stats
            .as_ref()
            .map(|s| -> Result<StatsDoc> {
                Ok(StatsDoc {
                    mean: f64s_to_b64(&s.mean)?,
                    scale: f64s_to_b64(&s.scale)?,
                })
            })
            .transpose()?;
        let ae = store
            .ae
            .as_ref()
            .map(|a| -> Result<AeDoc> {
                Ok(AeDoc {
                    encoder: f64s_to_b64(&a.encoder.data)?,
                    decoder: f64s_to_b64(&a.decoder.data)?,
                })
            })
            .transpose()?;
        let skills = store
            .skills
            .iter()
            .map(|s| -> Result<SkillDoc> {
                Ok(SkillDoc {
                    name: s.name.clone(),
                    env: s.env.clone(),
                    termination: s.termination.clone(),
                    params: f64s_to_b64(&s.params.data)?,
                    skill_vector: s
                        .skill_vector
                        .as_ref()
                        .map(|v| f64s_to_b64(&v.values))
                        .transpose()?,
                    recon_rel_error: s.recon_rel_error,
                    built_at: s.built_at,
                    metrics: s.metrics.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(StoreDoc {
            version: store.version,
            rebuild_counter: store.rebuild_counter,
            policy_spec: store.policy_spec.clone(),
            autoencoder_spec: store.ae_spec.clone(),
            ae_hyper: store.ae_hyper.clone(),
            ae_seed: store.ae_seed,
            stats,
            ae,
            skills,
        })
    }

    fn into_store(self) -> Result<SkillStore> {
        let m = self.policy_spec.param_count();
        let stats = self
            .stats
            .map(|s| -> Result<NormalizationStats> {
                let mean = b64_to_f64s(&s.mean)?;
                let scale = b64_to_f64s(&s.scale)?;
                if mean.len() != m || scale.len() != m {
                    return Err(Error::MalformedStore(
                        "normalization stats length mismatch".into(),
                    ));
                }
                Ok(NormalizationStats { mean, scale })
            })
            .transpose()?;
        let enc_len = self.autoencoder_spec.encoder_spec().param_count();
        let dec_len = self.autoencoder_spec.decoder_spec().param_count();
        let ae = self
            .ae
            .map(|a| -> Result<AeParams> {
                let encoder = b64_to_f64s(&a.encoder)?;
                let decoder = b64_to_f64s(&a.decoder)?;
                if encoder.len() != enc_len || decoder.len() != dec_len {
                    return Err(Error::MalformedStore(
                        "autoencoder parameter length mismatch".into(),
                    ));
                }
                Ok(AeParams {
                    encoder: ParamVector { data: encoder },
                    decoder: ParamVector { data: decoder },
                })
            })
            .transpose()?;
        let sorted_unique = self
            .skills
            .windows(2)
            .all(|w| w[0].name.as_str() < w[1].name.as_str());
        if !sorted_unique {
            return Err(Error::MalformedStore(
                "skills must be sorted by unique name".into(),
            ));
        }
        let mut skills = Vec::with_capacity(self.skills.len());
        for s in self.skills {
            let params = b64_to_f64s(&s.params)?;
            if params.len() != m {
                return Err(Error::MalformedStore(format!(
                    "skill {} parameter length mismatch",
                    s.name
                )));
            }
            let skill_vector = s
                .skill_vector
                .map(|v| -> Result<SkillVector> {
                    let values = b64_to_f64s(&v)?;
                    if values.len() != self.autoencoder_spec.latent_dim {
                        return Err(Error::MalformedStore(format!(
                            "skill {} vector length mismatch",
                            s.name
                        )));
                    }
                    Ok(SkillVector { values })
                })
                .transpose()?;
            skills.push(SkillRecord {
                name: s.name,
                env: s.env,
                termination: s.termination,
                params: ParamVector { data: params },
                skill_vector,
                recon_rel_error: s.recon_rel_error,
                built_at: s.built_at,
                metrics: s.metrics,
            });
        }
        Ok(SkillStore {
            version: self.version,
            rebuild_counter: self.rebuild_counter,
            policy_spec: self.policy_spec,
            ae_spec: self.autoencoder_spec,
            ae_hyper: self.ae_hyper,
            ae_seed: self.ae_seed,
            stats,
            ae,
            skills,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Xoshiro256StarStar;
    use proptest::prelude::*;

    #[test]
    fn crc32c_known_vector() {
        assert_eq!(crc32c(b"123456789"), 0xE306_9283);
        assert_eq!(crc32c(b""), 0);
    }

    fn small_policy() -> PolicySpec<Scalar> {
        PolicySpec::new(vec![4, 2], Some(vec![(-1.0, 1.0), (-1.0, 1.0)]))
    }

    fn small_ae(m: usize) -> AutoencoderSpec {
        AutoencoderSpec {
            input_dim: m,
            hidden: vec![8],
            latent_dim: 2,
        }
    }

    /// Linear policy weights realizing a = kp (goal - pos) - kd vel on the
    /// point-mass embedding (state_box halves 3, 3, 2.5, 2.5).
    fn pd_params(kp: f64, kd: f64, goal: [f64; 2]) -> ParamVector<Scalar> {
        ParamVector {
            data: vec![
                -3.0 * kp,
                0.0,
                -2.5 * kd,
                0.0,
                0.0,
                -3.0 * kp,
                0.0,
                -2.5 * kd,
                kp * goal[0],
                kp * goal[1],
            ],
        }
    }

    fn nav_record(name: &str, goal: [f64; 2]) -> SkillRecord {
        SkillRecord {
            name: name.to_string(),
            env: EnvParams::point_mass_2d(goal),
            termination: TerminationSpec {
                tolerance: 0.05,
                hold_steps: 10,
                max_steps: 400,
            },
            params: pd_params(1.0, 1.8, goal),
            skill_vector: None,
            recon_rel_error: None,
            built_at: None,
            metrics: SkillMetrics {
                train_mse: 0.0,
                holdout_mse: 0.0,
                success_rate: 1.0,
                mean_steps_to_success: Some(100.0),
            },
        }
    }

    fn sample_store() -> SkillStore {
        let policy = small_policy();
        let ae_spec = small_ae(policy.param_count());
        // Tight target: these skills are exact linear laws, so recalled
        // behavior only survives a small parameter perturbation.
        let hyper = AeHyper {
            lr: 3e-3,
            max_epochs: 8000,
            target_rel_error: 1e-3,
        };
        let mut store = SkillStore::new(policy, ae_spec, hyper, 17).unwrap();
        store.add_skill(nav_record("east", [2.0, 0.0])).unwrap();
        store.add_skill(nav_record("north", [0.0, 2.0])).unwrap();
        store
    }

    #[test]
    fn add_get_list_roundtrip() {
        let mut store = sample_store();
        store.add_skill(nav_record("a_first", [1.0, 1.0])).unwrap();
        assert_eq!(store.list_skills(), vec!["a_first", "east", "north"]);
        let got = store.get_skill("east").unwrap();
        assert_eq!(got.params, pd_params(1.0, 1.8, [2.0, 0.0]));
        assert!(matches!(
            store.get_skill("absent"),
            Err(Error::UnknownSkill(_))
        ));
        assert!(matches!(
            store.add_skill(nav_record("east", [2.0, 0.0])),
            Err(Error::DuplicateSkill(_))
        ));
    }

    #[test]
    fn save_load_is_bit_exact() {
        let mut store = sample_store();
        store.rebuild_memory(None).unwrap();
        let bytes = store.to_bytes().unwrap();
        let loaded = SkillStore::from_bytes(&bytes).unwrap();
        assert_eq!(store, loaded);
        // Stable bytes as well.
        assert_eq!(bytes, loaded.to_bytes().unwrap());
    }

    #[test]
    fn version_mismatch_is_reported_first() {
        let store = sample_store();
        let text = String::from_utf8(store.to_bytes().unwrap()).unwrap();
        let tampered = text.replace("{\"version\":1,", "{\"version\":999,");
        assert!(matches!(
            SkillStore::from_bytes(tampered.as_bytes()),
            Err(Error::StoreVersionMismatch { found: 999, .. })
        ));
    }

    #[test]
    fn truncated_file_never_yields_a_store() {
        let store = sample_store();
        let bytes = store.to_bytes().unwrap();
        let err = SkillStore::from_bytes(&bytes[..bytes.len() / 2]);
        assert!(matches!(err, Err(Error::MalformedStore(_))));
    }

    #[test]
    fn value_tampering_fails_the_checksum() {
        let store = sample_store();
        let text = String::from_utf8(store.to_bytes().unwrap()).unwrap();
        let tampered = text.replace("\"rebuild_counter\":0", "\"rebuild_counter\":1");
        assert_ne!(text, tampered);
        assert!(matches!(
            SkillStore::from_bytes(tampered.as_bytes()),
            Err(Error::ChecksumMismatch)
        ));
    }

    #[test]
    fn unsorted_skill_names_are_rejected_on_load() {
        let mut store = sample_store();
        store.skills.swap(0, 1);
        // Serialize the swapped order with a valid checksum; only the
        // ordering rule can reject this document.
        let bytes = store.to_bytes().unwrap();
        assert!(matches!(
            SkillStore::from_bytes(&bytes),
            Err(Error::MalformedStore(_))
        ));
    }

    #[test]
    fn rebuild_then_verify_exact_passes() {
        let mut store = sample_store();
        let summary = store.rebuild_memory(None).unwrap();
        assert!(summary.reached_target, "recon {:?}", summary.recon_errors);
        assert_eq!(store.rebuild_counter, 1);
        let report = store.verify_exact().unwrap();
        assert!(report.ok(), "{:?}", report.violations);
        assert_eq!(report.skills_checked, 2);
    }

    #[test]
    fn corrupted_record_fails_verify_exact() {
        let mut store = sample_store();
        store.rebuild_memory(None).unwrap();
        store.skills[0].skill_vector.as_mut().unwrap().values[0] += 1e-9;
        let report = store.verify_exact().unwrap();
        assert!(!report.ok());
    }

    #[test]
    fn verify_fidelity_passes_and_flags_stale_skills() {
        let mut store = sample_store();
        store.rebuild_memory(None).unwrap();
        let report = store.verify_fidelity().unwrap();
        assert!(report.ok(), "{:?}", report.violations);

        store.add_skill(nav_record("west", [-2.0, 0.0])).unwrap();
        let report = store.verify_fidelity().unwrap();
        assert!(!report.ok());
        assert!(report.violations[0].contains("stale"));
    }

    #[test]
    fn unbuilt_store_cannot_be_verified() {
        let store = sample_store();
        assert!(matches!(store.verify_exact(), Err(Error::StoreNotBuilt)));
        assert!(matches!(store.verify_fidelity(), Err(Error::StoreNotBuilt)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn randomized_store_roundtrips(seed in 0u64..10_000) {
            let mut rng = Xoshiro256StarStar::new(seed);
            let policy = small_policy();
            let m = policy.param_count();
            let ae_spec = small_ae(m);
            let hyper = AeHyper { lr: 1e-3, max_epochs: 10, target_rel_error: 0.05 };
            let mut store = SkillStore::new(policy, ae_spec, hyper, seed).unwrap();
            let n_skills = 1 + rng.next_below(3);
            for i in 0..n_skills {
                let goal = [rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)];
                let mut rec = nav_record(&format!("skill_{i}"), goal);
                for v in rec.params.data.iter_mut() {
                    *v = rng.uniform(-1.0, 1.0);
                }
                store.add_skill(rec).unwrap();
            }
            if rng.next_below(2) == 0 {
                store.rebuild_memory(Some(rng.next_u64())).unwrap();
            }
            let bytes = store.to_bytes().unwrap();
            let loaded = SkillStore::from_bytes(&bytes).unwrap();
            prop_assert_eq!(&store, &loaded);
            prop_assert_eq!(bytes, loaded.to_bytes().unwrap());
        }
    }
}
