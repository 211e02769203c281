//! JSON configurations of the subcommands. Every numeric field is checked
//! before any computation starts.

use hardsphere::bandit::{Algorithm, BetaSchedule, Event};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

fn default_theta() -> f64 {
    1.0
}
fn default_seed() -> u64 {
    0
}
fn default_max_degree() -> usize {
    80
}
fn default_budget() -> f64 {
    1.0
}

fn check(cond: bool, field: &str, msg: &str) -> Result<(), CliError> {
    if cond {
        Ok(())
    } else {
        Err(CliError::Config(format!("field `{field}`: {msg}")))
    }
}

fn positive(v: f64, field: &str) -> Result<(), CliError> {
    check(v > 0.0 && v.is_finite(), field, "must be a positive finite number")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceConfig {
    pub d: usize,
    #[serde(default = "default_theta")]
    pub theta: f64,
    pub eps: f64,
    /// Degrees for which a profile is written.
    pub degrees: Vec<usize>,
    #[serde(default = "default_profile_points")]
    pub profile_points: usize,
    /// When set, the full function class at this budget is also built.
    #[serde(default)]
    pub class_budget: Option<f64>,
    #[serde(default = "default_max_degree")]
    pub max_degree: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_profile_points() -> usize {
    2001
}

impl InstanceConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        check(self.d >= 1, "d", "must be >= 1")?;
        positive(self.theta, "theta")?;
        positive(self.eps, "eps")?;
        check(!self.degrees.is_empty(), "degrees", "must list at least one degree")?;
        check(
            self.degrees.iter().all(|&n| n >= 1),
            "degrees",
            "every degree must be >= 1",
        )?;
        check(self.profile_points >= 2, "profile_points", "must be >= 2")?;
        check(self.max_degree >= 2, "max_degree", "must be >= 2")?;
        if let Some(b) = self.class_budget {
            positive(b, "class_budget")?;
            check(self.eps < b, "class_budget", "must exceed eps")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    /// Multiplies the closed-form `b` before the cross-route comparison;
    /// any value other than 1 should make that check fail.
    #[serde(default = "default_one")]
    pub perturb_b: f64,
    /// Largest horizon of the information-gain scaling check.
    #[serde(default = "default_verify_t")]
    pub mig_t_max: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_one() -> f64 {
    1.0
}
fn default_verify_t() -> usize {
    1024
}

impl VerifyConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        positive(self.perturb_b, "perturb_b")?;
        check(self.mig_t_max >= 64, "mig_t_max", "must be >= 64")?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MigConfig {
    pub d: usize,
    #[serde(default = "default_theta")]
    pub theta: f64,
    pub noise_var: f64,
    pub horizons: Vec<usize>,
    pub candidates: usize,
    #[serde(default = "default_max_degree")]
    pub max_degree: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl MigConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        check(self.d >= 1, "d", "must be >= 1")?;
        positive(self.theta, "theta")?;
        positive(self.noise_var, "noise_var")?;
        check(!self.horizons.is_empty(), "horizons", "must list at least one T")?;
        check(
            self.horizons.iter().all(|&t| t >= 3),
            "horizons",
            "every T must be >= 3",
        )?;
        let t_max = *self.horizons.iter().max().unwrap_or(&0);
        check(self.candidates >= t_max, "candidates", "must be at least the largest T")?;
        check(self.max_degree >= 12, "max_degree", "must be >= 12")?;
        Ok(())
    }
}

fn default_candidates() -> usize {
    256
}
fn default_delta() -> f64 {
    0.1
}
fn default_c_tilde() -> f64 {
    1.0
}
fn default_per_region() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegretConfig {
    pub algorithm: Algorithm,
    pub d: usize,
    #[serde(default = "default_theta")]
    pub theta: f64,
    /// Observation noise; zero gives noise-free observations.
    pub sigma: f64,
    #[serde(default = "default_budget")]
    pub budget: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub horizons: Vec<usize>,
    pub trials: usize,
    /// Fixed `eps`; when absent the schedule is solved per horizon.
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default = "default_c_tilde")]
    pub c_tilde: f64,
    /// Noise variance assumed by the GP model; defaults to `max(sigma^2, 1e-4)`.
    #[serde(default)]
    pub model_noise_var: Option<f64>,
    #[serde(default = "default_beta")]
    pub beta: BetaSchedule,
    #[serde(default = "default_candidates")]
    pub candidates: usize,
    #[serde(default = "default_max_degree")]
    pub max_degree: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_beta() -> BetaSchedule {
    BetaSchedule::Default
}

fn model_noise(sigma: f64, explicit: Option<f64>) -> f64 {
    explicit.unwrap_or((sigma * sigma).max(1e-4))
}

impl RegretConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        check(self.d >= 1, "d", "must be >= 1")?;
        positive(self.theta, "theta")?;
        check(self.sigma >= 0.0 && self.sigma.is_finite(), "sigma", "must be >= 0")?;
        positive(self.budget, "budget")?;
        check(self.delta > 0.0 && self.delta < 1.0, "delta", "must lie in (0, 1)")?;
        check(!self.horizons.is_empty(), "horizons", "must list at least one T")?;
        check(
            self.horizons.iter().all(|&t| t >= 1),
            "horizons",
            "every T must be >= 1",
        )?;
        check(self.trials >= 1, "trials", "must be >= 1")?;
        if let Some(e) = self.eps {
            positive(e, "eps")?;
            check(e < self.budget, "eps", "must be below budget")?;
        } else {
            check(self.sigma > 0.0, "sigma", "the eps schedule needs sigma > 0")?;
        }
        positive(self.c_tilde, "c_tilde")?;
        positive(self.model_noise_var(), "model_noise_var")?;
        check(self.candidates >= 1, "candidates", "must be >= 1")?;
        check(self.max_degree >= 2, "max_degree", "must be >= 2")?;
        Ok(())
    }

    pub fn model_noise_var(&self) -> f64 {
        model_noise(self.sigma, self.model_noise_var)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyConfig {
    pub algorithm: Algorithm,
    pub d: usize,
    #[serde(default = "default_theta")]
    pub theta: f64,
    pub sigma: f64,
    #[serde(default = "default_budget")]
    pub budget: f64,
    pub eps: f64,
    pub delta: f64,
    pub horizon: usize,
    pub trials: usize,
    pub event: Event,
    /// Member index pairs `(i, j)`; `i = j` certifies a function against itself.
    pub pairs: Vec<(usize, usize)>,
    #[serde(default)]
    pub model_noise_var: Option<f64>,
    #[serde(default = "default_beta")]
    pub beta: BetaSchedule,
    #[serde(default = "default_candidates")]
    pub candidates: usize,
    #[serde(default = "default_per_region")]
    pub per_region: usize,
    #[serde(default = "default_max_degree")]
    pub max_degree: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl CertifyConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        check(self.d >= 1, "d", "must be >= 1")?;
        positive(self.theta, "theta")?;
        positive(self.sigma, "sigma")?;
        positive(self.budget, "budget")?;
        positive(self.eps, "eps")?;
        check(self.eps < self.budget, "eps", "must be below budget")?;
        check(
            self.delta > 0.0 && self.delta < 1.0 / 3.0,
            "delta",
            "must lie in (0, 1/3)",
        )?;
        check(self.horizon >= 1, "horizon", "must be >= 1")?;
        check(self.trials >= 30, "trials", "must be >= 30")?;
        check(!self.pairs.is_empty(), "pairs", "must list at least one pair")?;
        positive(self.model_noise_var(), "model_noise_var")?;
        check(self.candidates >= 1, "candidates", "must be >= 1")?;
        check(self.per_region >= 1000, "per_region", "must be >= 1000")?;
        check(self.max_degree >= 2, "max_degree", "must be >= 2")?;
        Ok(())
    }

    pub fn model_noise_var(&self) -> f64 {
        model_noise(self.sigma, self.model_noise_var)
    }
}

/// Parses a JSON configuration, mapping syntax and schema errors to
/// configuration errors.
pub fn parse<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid configuration: {e}")))
}
