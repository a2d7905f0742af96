//! Weak-user identification.
//!
//! A user is *weak* when the recommender already struggles for them
//! (per-user AUC at or below the performance threshold) **and** their
//! history is unusually thin (sparsity index strictly above the
//! sparsity threshold). Only weak users are routed to the language
//! model; everyone else keeps their recommender ranking untouched.

use alloc::vec::Vec;

use crate::error::GateError;
use crate::metrics::UserProfile;

/// Sparsity threshold: fixed, or resolved to the dataset mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SparsityThreshold {
    /// Use the mean sparsity over all profiled users.
    Auto,
    /// Use this value directly.
    Fixed(f64),
}

/// Gate thresholds before resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateConfig {
    /// Performance threshold t_p: weak requires `auc ≤ t_p`.
    pub t_p: f64,
    /// Sparsity threshold t_s: weak requires `sparsity > t_s`.
    pub t_s: SparsityThreshold,
}

impl Default for GateConfig {
    /// `t_p = 0.5` (no better than chance) and the dataset-mean
    /// sparsity.
    fn default() -> Self {
        GateConfig { t_p: 0.5, t_s: SparsityThreshold::Auto }
    }
}

/// The gate's verdict for one user, with the two conjuncts it rests on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GateDecision {
    /// Internal user index.
    pub user: usize,
    /// `below_perf && above_sparsity`.
    pub weak: bool,
    /// Whether `auc ≤ t_p`.
    pub below_perf: bool,
    /// Whether `sparsity > t_s`.
    pub above_sparsity: bool,
}

/// Resolves the configured thresholds against a profile list: `t_p`
/// passes through, and an automatic `t_s` becomes the mean sparsity.
pub fn resolve_thresholds(cfg: &GateConfig, profiles: &[UserProfile]) -> Result<(f64, f64), GateError> {
    if profiles.is_empty() {
        return Err(GateError::EmptyProfiles);
    }
    let t_s = match cfg.t_s {
        SparsityThreshold::Fixed(v) => v,
        SparsityThreshold::Auto => {
            profiles.iter().map(|p| p.sparsity).sum::<f64>() / profiles.len() as f64
        }
    };
    if !(0.0..=1.0).contains(&cfg.t_p) {
        return Err(GateError::ThresholdOutOfRange { which: "t_p" });
    }
    if !(0.0..=1.0).contains(&t_s) {
        return Err(GateError::ThresholdOutOfRange { which: "t_s" });
    }
    Ok((cfg.t_p, t_s))
}

/// Classifies one user: weak iff `auc ≤ t_p` (inclusive) and
/// `sparsity > t_s` (strict).
pub fn classify(profile: &UserProfile, t_p: f64, t_s: f64) -> GateDecision {
    let below_perf = profile.auc <= t_p;
    let above_sparsity = profile.sparsity > t_s;
    GateDecision {
        user: profile.user,
        weak: below_perf && above_sparsity,
        below_perf,
        above_sparsity,
    }
}

/// Classifies every profile with resolved thresholds.
pub fn decide_all(profiles: &[UserProfile], cfg: &GateConfig) -> Result<Vec<GateDecision>, GateError> {
    let (t_p, t_s) = resolve_thresholds(cfg, profiles)?;
    Ok(profiles.iter().map(|p| classify(p, t_p, t_s)).collect())
}

/// Splits profiled users into (weak, strong) index lists — a disjoint,
/// exhaustive partition.
pub fn partition(profiles: &[UserProfile], cfg: &GateConfig) -> Result<(Vec<usize>, Vec<usize>), GateError> {
    let decisions = decide_all(profiles, cfg)?;
    let mut weak = Vec::new();
    let mut strong = Vec::new();
    for d in decisions {
        if d.weak {
            weak.push(d.user);
        } else {
            strong.push(d.user);
        }
    }
    Ok((weak, strong))
}
