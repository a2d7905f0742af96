//! Per-user and aggregate ranking metrics.
//!
//! The central quantity is per-user AUC: the probability that a
//! recommender scores a relevant item above an irrelevant one, with ties
//! counting one half. It is computed exactly — wins and ties are counted
//! as integers against a sorted negative pool — so results are bit-equal
//! to a brute-force enumeration of all (relevant, negative) pairs.

use alloc::vec::Vec;

use crate::corpus::SplitDataset;
use crate::error::{MetricsError, ProfileError};
use crate::recsys::Recommender;
use crate::stats;

/// A user's difficulty profile: how sparse their history is and how well
/// the recommender already ranks for them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserProfile {
    /// Internal user index.
    pub user: usize,
    /// Sparsity index: `1 − train_count / N`.
    pub sparsity: f64,
    /// Per-user AUC of the recommender over the full negative pool.
    pub auc: f64,
    /// Number of train interactions.
    pub train_count: usize,
}

/// Which held-out interaction plays the "relevant item" role.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HoldoutTarget {
    /// The most recent interaction (the evaluation convention).
    Test,
    /// The second most recent interaction (deployment-realistic gating).
    Valid,
}

/// The items a per-user metric is computed over: a relevant set and a
/// disjoint negative pool, both non-empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalContext {
    relevant: Vec<usize>,
    negatives: Vec<usize>,
}

impl EvalContext {
    /// Builds a context from explicit relevant and negative item sets.
    pub fn new(relevant: Vec<usize>, negatives: Vec<usize>) -> Result<Self, MetricsError> {
        if relevant.is_empty() {
            return Err(MetricsError::EmptyRelevant);
        }
        if negatives.is_empty() {
            return Err(MetricsError::EmptyNegatives);
        }
        debug_assert!(relevant.iter().all(|r| !negatives.contains(r)));
        Ok(EvalContext { relevant, negatives })
    }

    /// Builds the leave-one-out context for one user: the chosen holdout
    /// is the single relevant item, and the negative pool is the catalog
    /// minus the user's train, valid, and test items.
    pub fn loo(split: &SplitDataset, user: usize, target: HoldoutTarget) -> Result<Self, MetricsError> {
        let valid = split.valid[user].ok_or(MetricsError::EmptyRelevant)?;
        let test = split.test[user].ok_or(MetricsError::EmptyRelevant)?;
        let relevant_item = match target {
            HoldoutTarget::Test => test.item,
            HoldoutTarget::Valid => valid.item,
        };
        let n = split.n_items();
        let mut seen = alloc::vec![false; n];
        for e in &split.train[user] {
            seen[e.item] = true;
        }
        seen[valid.item] = true;
        seen[test.item] = true;
        let negatives: Vec<usize> = (0..n).filter(|&i| !seen[i]).collect();
        EvalContext::new(alloc::vec![relevant_item], negatives)
    }

    /// The relevant items.
    pub fn relevant(&self) -> &[usize] {
        &self.relevant
    }

    /// The negative pool.
    pub fn negatives(&self) -> &[usize] {
        &self.negatives
    }
}

/// Sparsity index of a user: `1 − train_count / N`.
pub fn user_sparsity(train_count: usize, n_items: usize) -> Result<f64, MetricsError> {
    if n_items == 0 {
        return Err(MetricsError::EmptyCatalog);
    }
    if train_count > n_items {
        return Err(MetricsError::TrainCountExceedsCatalog { train_count, n_items });
    }
    Ok(1.0 - train_count as f64 / n_items as f64)
}

/// Per-user AUC: the fraction of (relevant, negative) pairs in which the
/// relevant item scores strictly higher, counting ties as one half.
///
/// Wins and ties are tallied as integers (a win counts 2, a tie 1)
/// against a sorted copy of the negative scores, then divided once —
/// this is bit-equal to enumerating every pair in floating point, since
/// every partial pair-sum is an exact multiple of one half.
pub fn user_auc(scores: &[f64], ctx: &EvalContext) -> Result<f64, MetricsError> {
    if ctx.relevant.is_empty() {
        return Err(MetricsError::EmptyRelevant);
    }
    if ctx.negatives.is_empty() {
        return Err(MetricsError::EmptyNegatives);
    }
    let mut neg: Vec<f64> = ctx.negatives.iter().map(|&i| scores[i]).collect();
    neg.sort_unstable_by(f64::total_cmp);
    // total_cmp puts IEEE-equal values (and the -0.0/+0.0 pair) in a
    // contiguous run, so counting with IEEE `<` / `<=` below is a valid
    // binary search over the sorted array.
    let mut wins2: u64 = 0; // 2·wins + ties
    for &r in &ctx.relevant {
        let s = scores[r];
        let below = neg.partition_point(|&x| x < s);
        let below_or_equal = neg.partition_point(|&x| x <= s);
        wins2 += 2 * below as u64 + (below_or_equal - below) as u64;
    }
    let pairs2 = 2 * (ctx.relevant.len() as u64) * (neg.len() as u64);
    Ok(wins2 as f64 / pairs2 as f64)
}

/// Reference AUC by explicit enumeration of all (relevant, negative)
/// pairs; quadratic, for verification only.
pub fn user_auc_brute_force(scores: &[f64], ctx: &EvalContext) -> Result<f64, MetricsError> {
    if ctx.relevant.is_empty() {
        return Err(MetricsError::EmptyRelevant);
    }
    if ctx.negatives.is_empty() {
        return Err(MetricsError::EmptyNegatives);
    }
    let mut sum = 0.0f64;
    for &r in &ctx.relevant {
        for &n in &ctx.negatives {
            if scores[r] > scores[n] {
                sum += 1.0;
            } else if scores[r] == scores[n] {
                sum += 0.5;
            }
        }
    }
    Ok(sum / (ctx.relevant.len() * ctx.negatives.len()) as f64)
}

/// AUC of a single relevant item inside an explicitly ranked list: the
/// fraction of other list entries ranked below it.
///
/// Returns `None` when the item is absent or the list has no other
/// entries to compare against.
pub fn list_auc(ranking: &[usize], relevant: usize) -> Option<f64> {
    if ranking.len() < 2 {
        return None;
    }
    let pos = ranking.iter().position(|&i| i == relevant)?;
    Some((ranking.len() - 1 - pos) as f64 / (ranking.len() - 1) as f64)
}

/// NDCG@k with unit gains: `DCG@k / IDCG@k`, discount `1/log2(rank+1)`,
/// ranks starting at 1.
pub fn ndcg_at_k(ranked: &[usize], relevant: &[usize], k: usize) -> Result<f64, MetricsError> {
    if relevant.is_empty() {
        return Err(MetricsError::EmptyRelevant);
    }
    let cutoff = core::cmp::min(k, ranked.len());
    let mut dcg = 0.0;
    for (pos, item) in ranked[..cutoff].iter().enumerate() {
        if relevant.contains(item) {
            dcg += 1.0 / libm::log2((pos + 2) as f64);
        }
    }
    let ideal_hits = core::cmp::min(relevant.len(), k);
    let mut idcg = 0.0;
    for pos in 0..ideal_hits {
        idcg += 1.0 / libm::log2((pos + 2) as f64);
    }
    Ok(dcg / idcg)
}

/// Result of a paired t-test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    /// The t statistic, `mean(a−b) / (sd(a−b)/√n)`.
    pub t: f64,
    /// Two-tailed p-value.
    pub p: f64,
    /// Degrees of freedom, `n − 1`.
    pub df: usize,
}

/// Paired t-test between two equal-length samples.
///
/// Uses the sample standard deviation (n−1 denominator). Identical
/// differences across all pairs leave the statistic undefined and are
/// reported as a degenerate-constant-difference error.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<TTest, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch { a: a.len(), b: b.len() });
    }
    let n = a.len();
    if n < 2 {
        return Err(MetricsError::TooFewSamples { n });
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if diffs.windows(2).all(|w| w[0] == w[1]) {
        return Err(MetricsError::DegenerateConstantDifference { diff: diffs[0] });
    }
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return Err(MetricsError::DegenerateConstantDifference { diff: mean });
    }
    let t = mean / libm::sqrt(var / n as f64);
    let df = n - 1;
    let p = stats::t_two_tailed_p(t, df as f64)?;
    Ok(TTest { t, p, df })
}

/// Profiles every split-surviving user: sparsity index plus full-pool
/// AUC of the given recommender against the chosen holdout.
pub fn profile_users(
    rec: &dyn Recommender,
    split: &SplitDataset,
    target: HoldoutTarget,
) -> Result<Vec<UserProfile>, ProfileError> {
    let n = split.n_items();
    let mut profiles = Vec::new();
    for user in split.surviving_users() {
        let scores = rec.score_checked(user)?;
        let ctx = EvalContext::loo(split, user, target)?;
        let auc = user_auc(&scores, &ctx)?;
        let train_count = split.train[user].len();
        let sparsity = user_sparsity(train_count, n)?;
        profiles.push(UserProfile { user, sparsity, auc, train_count });
    }
    Ok(profiles)
}
