//! The verification harness: seeded generators, machine-checked claims
//! with exact or Monte Carlo certificates, a registry of expected
//! divergences, and deterministic reports.
//!
//! Every check produces a flat `CheckRecord`. Exact checks store both
//! sides of a rational identity, so the verdict can be re-derived from
//! the record alone; Monte Carlo checks store mean, standard error,
//! sample size and the comparison target of a two-sided 4σ interval.
//! "documented-fail" is a first-class outcome for expected divergences
//! between a claim's literal hypotheses and exact computation; the
//! registry of those is part of the deliverable, and its absence is a
//! suite failure.

mod checks;
mod generators;
mod runner;

pub use checks::{
    check_change_of_variables, check_composition, check_factorization, check_invariance,
    check_isometry, check_isometry_mc, check_mass_defect, check_pushforward_lemma,
    check_pushforward_lemma_mc, check_rn_normalization, check_rn_normalization_mc,
    check_sampler_window, check_separator, check_support_shift, check_u_composition,
    counterexample_registry, find_separator, pointwise_group_axioms, registry_complete,
    CheckCtx, HypothesisMode, SeparatorCertificate,
};
pub use generators::{ElementKind, GeneratorMix, LabGen};
pub use runner::{
    invariance_literal_instance, invariance_strengthened_instance, random_cylinder, run_suite,
    support_shift_instance, LabReport,
};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MC_SIGMA: f64 = 4.0;
/// Two-sided tail mass of a 4σ normal interval, for suite-level
/// false-alarm reporting.
pub const MC_FALSE_ALARM_PER_CHECK: f64 = 6.334e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Exact,
    Mc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    #[serde(rename = "pass")]
    Pass,
    #[serde(rename = "fail")]
    Fail,
    #[serde(rename = "documented-fail")]
    DocumentedFail,
}

/// One verified claim instance, serialized as one flat JSON report line.
/// Runtime is tracked but excluded from serialization so that a fixed
/// (config, seed) pair fixes the report byte stream.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckRecord {
    pub id: String,
    pub check: String,
    pub suite: String,
    pub prime: u32,
    pub seed: u64,
    pub kind: CheckKind,
    pub outcome: Outcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub product_mode: Option<crate::affine::ProductMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inverse_mode: Option<crate::affine::InverseMode>,
    pub inputs_digest: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lhs: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rhs: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
    #[serde(skip)]
    pub runtime_ms: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Core,
    Poisson,
    Representation,
    Ergodicity,
    Counterexamples,
}

impl Suite {
    pub fn all() -> Vec<Suite> {
        vec![
            Suite::Core,
            Suite::Poisson,
            Suite::Representation,
            Suite::Ergodicity,
            Suite::Counterexamples,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            Suite::Core => "core",
            Suite::Poisson => "poisson",
            Suite::Representation => "representation",
            Suite::Ergodicity => "ergodicity",
            Suite::Counterexamples => "counterexamples",
        }
    }

    pub fn parse(s: &str) -> Result<Vec<Suite>> {
        match s {
            "all" => Ok(Suite::all()),
            "core" => Ok(vec![Suite::Core]),
            "poisson" => Ok(vec![Suite::Poisson]),
            "representation" => Ok(vec![Suite::Representation]),
            "ergodicity" => Ok(vec![Suite::Ergodicity]),
            "counterexamples" => Ok(vec![Suite::Counterexamples]),
            other => Err(Error::InvalidConfig(format!("unknown suite {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct LabConfig {
    pub prime: u32,
    pub seed: u64,
    pub samples: u64,
    pub suites: Vec<Suite>,
    pub mix: GeneratorMix,
    pub out: Option<PathBuf>,
}

impl Default for LabConfig {
    fn default() -> Self {
        LabConfig {
            prime: 3,
            seed: 7,
            samples: 100_000,
            suites: Suite::all(),
            mix: GeneratorMix::default(),
            out: None,
        }
    }
}

impl LabConfig {
    pub fn validate(&self) -> Result<()> {
        crate::padic::Prime::new(self.prime)?;
        if ![2, 3, 5, 7].contains(&self.prime) {
            return Err(Error::InvalidConfig(format!(
                "lab runs restrict the prime to {{2, 3, 5, 7}}, got {}",
                self.prime
            )));
        }
        if self.samples < 1_000 {
            return Err(Error::InvalidConfig(format!(
                "samples must be ≥ 1000, got {}",
                self.samples
            )));
        }
        if self.suites.is_empty() {
            return Err(Error::InvalidConfig("no suites selected".into()));
        }
        self.mix.validate()?;
        Ok(())
    }
}

/// FNV-1a over the canonical JSON of the inputs; stable across runs.
pub fn digest(parts: &[serde_json::Value]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in parts {
        for b in p.to_string().as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x1_0000_0000_01b3);
        }
        h ^= 0x1f;
        h = h.wrapping_mul(0x1_0000_0000_01b3);
    }
    format!("{h:016x}")
}
