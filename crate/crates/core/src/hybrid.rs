//! Guarded merge of recommender and reranker output, and run evaluation.
//!
//! The merge rule is deliberately conservative: the reranked list
//! replaces the recommender's candidate ranking only when its measured
//! quality is *strictly* better; ties keep the recommender. Every user
//! carries a source tag recording which way the decision went, and
//! [`evaluate`] aggregates per-user outcomes into the stratified
//! [`EvalReport`].

use alloc::string::ToString;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{MergeError, MetricsError};
use crate::metrics::{list_auc, ndcg_at_k, paired_ttest};
use crate::report::{
    CandidatePool, EvalReport, FullPool, RankingMeans, ReportMetrics, Significance,
    SourceTagCounts, Strata, StrataCounts,
};

/// Which system produced a user's final ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SourceTag {
    /// Not routed to the reranker; the recommender ranking stands.
    #[serde(rename = "RS")]
    Rs,
    /// Reranked and accepted by the guard.
    #[serde(rename = "LLM")]
    Llm,
    /// Reranked but rejected; fell back to the recommender ranking.
    #[serde(rename = "LLM-rejected-fallback-RS")]
    LlmRejectedFallbackRs,
}

impl SourceTag {
    /// The tag as written in CSV artifacts.
    pub fn as_str(self) -> &'static str {
        match self {
            SourceTag::Rs => "RS",
            SourceTag::Llm => "LLM",
            SourceTag::LlmRejectedFallbackRs => "LLM-rejected-fallback-RS",
        }
    }
}

/// Chooses between the recommender's candidate ranking and the reranked
/// list.
///
/// Both rankings must order the same candidate set. With the guard on,
/// `quality` scores each list and the reranked one wins only when
/// strictly better; with the guard off it is accepted unconditionally.
pub fn guarded_merge<F>(
    rs_ranking: &[usize],
    llm_ranking: &[usize],
    quality: F,
    guard_on: bool,
) -> Result<(Vec<usize>, SourceTag), MergeError>
where
    F: Fn(&[usize]) -> f64,
{
    let mut a: Vec<usize> = rs_ranking.to_vec();
    let mut b: Vec<usize> = llm_ranking.to_vec();
    a.sort_unstable();
    b.sort_unstable();
    if a != b {
        return Err(MergeError::CandidateSetMismatch);
    }
    if !guard_on {
        return Ok((llm_ranking.to_vec(), SourceTag::Llm));
    }
    if quality(llm_ranking) > quality(rs_ranking) {
        Ok((llm_ranking.to_vec(), SourceTag::Llm))
    } else {
        Ok((rs_ranking.to_vec(), SourceTag::LlmRejectedFallbackRs))
    }
}

/// Everything the evaluator needs to know about one user's run.
#[derive(Debug, Clone, PartialEq)]
pub struct UserOutcome {
    /// User index.
    pub user: usize,
    /// Whether the gate flagged this user weak.
    pub weak: bool,
    /// Which system produced `final_ranking`.
    pub tag: SourceTag,
    /// The held-out item being searched for.
    pub test_item: usize,
    /// The ranking actually served (candidate set, best first).
    pub final_ranking: Vec<usize>,
    /// The recommender's ranking of the same candidate set.
    pub rs_ranking: Vec<usize>,
    /// Full-catalog AUC of the recommender for this user.
    pub full_pool_auc: f64,
}

struct Row {
    weak: bool,
    hybrid_auc: Option<f64>,
    hybrid_ndcg: Option<f64>,
    rs_auc: Option<f64>,
    rs_ndcg: Option<f64>,
    full_auc: f64,
}

fn mean<I: Iterator<Item = f64>>(values: I) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in values {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

fn strata_means(rows: &[Row], pick: impl Fn(&Row) -> Option<f64> + Copy) -> Strata<RankingMeans> {
    // Caller substitutes the NDCG picker afterwards; this fills AUC only.
    Strata {
        all: RankingMeans { auc: mean(rows.iter().filter_map(pick)), ndcg_at_10: None },
        weak: RankingMeans {
            auc: mean(rows.iter().filter(|r| r.weak).filter_map(pick)),
            ndcg_at_10: None,
        },
        non_weak: RankingMeans {
            auc: mean(rows.iter().filter(|r| !r.weak).filter_map(pick)),
            ndcg_at_10: None,
        },
    }
}

fn fill_ndcg(
    mut strata: Strata<RankingMeans>,
    rows: &[Row],
    pick: impl Fn(&Row) -> Option<f64> + Copy,
) -> Strata<RankingMeans> {
    strata.all.ndcg_at_10 = mean(rows.iter().filter_map(pick));
    strata.weak.ndcg_at_10 = mean(rows.iter().filter(|r| r.weak).filter_map(pick));
    strata.non_weak.ndcg_at_10 = mean(rows.iter().filter(|r| !r.weak).filter_map(pick));
    strata
}

fn weak_significance(rows: &[Row]) -> Significance {
    let pairs: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.weak)
        .filter_map(|r| Some((r.rs_auc?, r.hybrid_auc?)))
        .collect();
    if pairs.len() < 2 {
        return Significance::Absent;
    }
    let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    match paired_ttest(&a, &b) {
        Ok(res) => Significance::Test { t: res.t, p: res.p, df: res.df },
        Err(MetricsError::DegenerateConstantDifference { diff }) => {
            if diff == 0.0 {
                Significance::NoChange
            } else {
                Significance::ConstantDifference { diff }
            }
        }
        Err(_) => Significance::Absent,
    }
}

/// Aggregates per-user outcomes into the final report: stratum counts,
/// candidate-pool means for both systems, full-pool baseline means,
/// source-tag tallies, and the weak-stratum paired test of recommender
/// versus merged candidate AUC (negative t means the merge helped).
///
/// Empty strata yield absent means, never zeros. Users whose candidate
/// list is too short to score (a single candidate) are excluded from the
/// affected means only.
pub fn evaluate(outcomes: &[UserOutcome], config_fingerprint: &str) -> EvalReport {
    let rows: Vec<Row> = outcomes
        .iter()
        .map(|o| {
            let relevant = [o.test_item];
            Row {
                weak: o.weak,
                hybrid_auc: list_auc(&o.final_ranking, o.test_item),
                hybrid_ndcg: ndcg_at_k(&o.final_ranking, &relevant, 10).ok(),
                rs_auc: list_auc(&o.rs_ranking, o.test_item),
                rs_ndcg: ndcg_at_k(&o.rs_ranking, &relevant, 10).ok(),
                full_auc: o.full_pool_auc,
            }
        })
        .collect();

    let mut tags = SourceTagCounts::default();
    for o in outcomes {
        match o.tag {
            SourceTag::Rs => tags.rs += 1,
            SourceTag::Llm => tags.llm += 1,
            SourceTag::LlmRejectedFallbackRs => tags.llm_rejected_fallback_rs += 1,
        }
    }

    let weak = rows.iter().filter(|r| r.weak).count();
    let users = StrataCounts { all: rows.len(), weak, non_weak: rows.len() - weak };

    let hybrid = fill_ndcg(strata_means(&rows, |r| r.hybrid_auc), &rows, |r| r.hybrid_ndcg);
    let rs_only = fill_ndcg(strata_means(&rows, |r| r.rs_auc), &rows, |r| r.rs_ndcg);

    let full_pool = FullPool {
        rs_auc: Strata {
            all: mean(rows.iter().map(|r| r.full_auc)),
            weak: mean(rows.iter().filter(|r| r.weak).map(|r| r.full_auc)),
            non_weak: mean(rows.iter().filter(|r| !r.weak).map(|r| r.full_auc)),
        },
    };

    EvalReport {
        config_fingerprint: config_fingerprint.to_string(),
        source_tag_counts: tags,
        metrics: ReportMetrics {
            users,
            candidate_pool: CandidatePool { hybrid, rs_only },
            full_pool,
            significance: weak_significance(&rows),
        },
    }
}

/// Convenience: the quality functional used by the deployment guard —
/// AUC of the held-out item within the candidate list, with an
/// unrankable list scored zero so it can never beat a rankable one.
pub fn holdout_list_quality(ranking: &[usize], holdout: usize) -> f64 {
    list_auc(ranking, holdout).unwrap_or(0.0)
}
