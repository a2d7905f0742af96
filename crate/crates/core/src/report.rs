//! Evaluation report types and text artifacts.
//!
//! [`EvalReport`] is the canonical machine-readable result of a run: user
//! counts, candidate-pool and full-pool metric means stratified into
//! All / Weak / Non-Weak, ranking-source counts, and the significance
//! check on the weak stratum. Serialization is plain `serde`, and every
//! emitter here produces deterministic text so identical runs produce
//! byte-identical artifacts.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::ReportError;
use crate::metrics::UserProfile;

/// How many users ended up with each ranking source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SourceTagCounts {
    /// Users served by the recommender directly (not routed).
    pub rs: usize,
    /// Users whose reranked list was accepted.
    pub llm: usize,
    /// Users routed to the reranker whose list was rejected by the guard.
    pub llm_rejected_fallback_rs: usize,
}

/// One value per stratum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Strata<T> {
    /// Every evaluated user.
    pub all: T,
    /// Users flagged weak by the gate.
    pub weak: T,
    /// The complement of the weak stratum.
    pub non_weak: T,
}

/// Mean ranking quality over one stratum; `None` when the stratum is
/// empty (never a fabricated zero).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RankingMeans {
    /// Mean AUC of the held-out item against the other candidates.
    pub auc: Option<f64>,
    /// Mean NDCG@10 of the held-out item in the candidate ranking.
    pub ndcg_at_10: Option<f64>,
}

/// Candidate-pool metrics for the merged system and the recommender-only
/// baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidatePool {
    /// The guarded merge output.
    pub hybrid: Strata<RankingMeans>,
    /// The recommender ranking of the same candidate sets.
    pub rs_only: Strata<RankingMeans>,
}

/// Full-catalog metrics (the recommender scores every unseen item).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FullPool {
    /// Mean full-pool AUC per stratum; `None` for an empty stratum.
    pub rs_auc: Strata<Option<f64>>,
}

/// Outcome of the paired significance test on the weak stratum,
/// comparing per-user candidate AUC of the baseline and the merged
/// system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Significance {
    /// Fewer than two weak users — no test possible.
    Absent,
    /// Every per-user difference is exactly zero (e.g. the echo
    /// ablation): nothing changed, so there is nothing to test.
    NoChange,
    /// Every difference is the same non-zero value; the statistic is
    /// undefined, but the shift itself is reported.
    ConstantDifference {
        /// The common per-user difference (baseline minus merged).
        diff: f64,
    },
    /// A regular two-tailed paired t-test result.
    Test {
        /// Statistic; negative when the merged system scores higher.
        t: f64,
        /// Two-tailed p-value.
        p: f64,
        /// Degrees of freedom (`n - 1`).
        df: usize,
    },
}

/// User counts per stratum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrataCounts {
    /// Evaluated users.
    pub all: usize,
    /// Weak users.
    pub weak: usize,
    /// Non-weak users.
    pub non_weak: usize,
}

/// Metric block of the report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportMetrics {
    /// How many users fell into each stratum.
    pub users: StrataCounts,
    /// Candidate-pool quality for both systems.
    pub candidate_pool: CandidatePool,
    /// Full-catalog baseline quality.
    pub full_pool: FullPool,
    /// Weak-stratum significance check.
    pub significance: Significance,
}

/// The complete machine-readable evaluation result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Hash of the effective configuration that produced this report.
    pub config_fingerprint: String,
    /// Ranking-source tally over all evaluated users.
    pub source_tag_counts: SourceTagCounts,
    /// The stratified metrics.
    pub metrics: ReportMetrics,
}

fn cell(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.4}"),
        None => String::from("\u{2014}"),
    }
}

/// Renders the report as a fixed-layout markdown table with a counts
/// line and the significance verdict underneath. Absent strata show an
/// em dash, never a zero.
pub fn emit_table(report: &EvalReport) -> String {
    let m = &report.metrics;
    let mut out = String::new();
    out.push_str("| Metric | Pool | All | Weak | Non-Weak |\n");
    out.push_str("|---|---|---|---|---|\n");
    let rows: [(&str, &str, Strata<RankingMeans>, fn(&RankingMeans) -> Option<f64>); 4] = [
        ("AUC (hybrid)", "candidates", m.candidate_pool.hybrid, |r| r.auc),
        ("NDCG@10 (hybrid)", "candidates", m.candidate_pool.hybrid, |r| r.ndcg_at_10),
        ("AUC (rs-only)", "candidates", m.candidate_pool.rs_only, |r| r.auc),
        ("NDCG@10 (rs-only)", "candidates", m.candidate_pool.rs_only, |r| r.ndcg_at_10),
    ];
    for (label, pool, strata, pick) in rows {
        out.push_str(&format!(
            "| {label} | {pool} | {} | {} | {} |\n",
            cell(pick(&strata.all)),
            cell(pick(&strata.weak)),
            cell(pick(&strata.non_weak)),
        ));
    }
    out.push_str(&format!(
        "| AUC (rs-only) | full | {} | {} | {} |\n",
        cell(m.full_pool.rs_auc.all),
        cell(m.full_pool.rs_auc.weak),
        cell(m.full_pool.rs_auc.non_weak),
    ));
    out.push_str(&format!(
        "\nUsers: {} total, {} weak, {} non-weak. Sources: {} RS, {} LLM, {} LLM-rejected-fallback-RS.\n",
        m.users.all,
        m.users.weak,
        m.users.non_weak,
        report.source_tag_counts.rs,
        report.source_tag_counts.llm,
        report.source_tag_counts.llm_rejected_fallback_rs,
    ));
    let verdict = match m.significance {
        Significance::Absent => String::from("not run (fewer than two weak users)"),
        Significance::NoChange => String::from("no change (all per-user differences are zero)"),
        Significance::ConstantDifference { diff } => {
            format!("constant per-user difference of {diff:.4} (statistic undefined)")
        }
        Significance::Test { t, p, df } => format!("t = {t:.4}, p = {p:.4}, df = {df}"),
    };
    out.push_str(&format!("Weak-stratum paired test (RS minus hybrid): {verdict}\n"));
    out
}

/// Emits per-user scatter data (`user,sparsity,auc`) for the
/// sparsity-versus-performance figure. `label` maps a user index to the
/// identifier written in the first column.
pub fn emit_scatter(profiles: &[UserProfile], label: &dyn Fn(usize) -> String) -> String {
    let mut out = String::from("user,sparsity,auc\n");
    for p in profiles {
        out.push_str(&format!("{},{},{}\n", label(p.user), p.sparsity, p.auc));
    }
    out
}

/// Histogram CSVs for the two profile dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histograms {
    /// `bin_lo,bin_hi,count` over sparsity in `[0, 1]`.
    pub sparsity_csv: String,
    /// `bin_lo,bin_hi,count` over training-set sizes in `[0, max + 1)`.
    pub train_counts_csv: String,
}

fn histogram_csv(values: &[f64], lo: f64, hi: f64, bins: usize) -> String {
    let width = (hi - lo) / bins as f64;
    let mut counts = alloc::vec![0usize; bins];
    for &v in values {
        let mut idx = ((v - lo) / width) as usize;
        if idx >= bins {
            idx = bins - 1; // the top edge is inclusive
        }
        counts[idx] += 1;
    }
    let mut out = String::from("bin_lo,bin_hi,count\n");
    for (i, c) in counts.iter().enumerate() {
        let b_lo = lo + width * i as f64;
        let b_hi = lo + width * (i + 1) as f64;
        out.push_str(&format!("{b_lo},{b_hi},{c}\n"));
    }
    out
}

/// Bins the profile population into uniform histograms: sparsity over
/// `[0, 1]`, training counts over `[0, max + 1)` so the largest count
/// lands strictly inside the final bin.
pub fn emit_histograms(profiles: &[UserProfile], bins: usize) -> Result<Histograms, ReportError> {
    if bins == 0 {
        return Err(ReportError::ZeroBins);
    }
    if profiles.is_empty() {
        return Err(ReportError::EmptyProfiles);
    }
    let sparsities: Vec<f64> = profiles.iter().map(|p| p.sparsity).collect();
    let counts: Vec<f64> = profiles.iter().map(|p| p.train_count as f64).collect();
    let max_count = counts.iter().fold(0.0f64, |a, &b| if b > a { b } else { a });
    Ok(Histograms {
        sparsity_csv: histogram_csv(&sparsities, 0.0, 1.0, bins),
        train_counts_csv: histogram_csv(&counts, 0.0, max_count + 1.0, bins),
    })
}

/// Emits the routing funnel (`stage,count,reduction_pct`): how many
/// users existed, how many passed the sparsity condition, and how many
/// the gate finally flagged weak. Each reduction is relative to the
/// previous stage, as a percentage with two decimals.
pub fn emit_weak_funnel(total: usize, sparse: usize, weak: usize) -> Result<String, ReportError> {
    if sparse > total || weak > sparse {
        return Err(ReportError::FunnelOrdering { total, sparse, weak });
    }
    let pct = |prev: usize, next: usize| -> f64 {
        if prev == 0 {
            0.0
        } else {
            100.0 * (1.0 - next as f64 / prev as f64)
        }
    };
    Ok(format!(
        "stage,count,reduction_pct\ntotal,{total},\nsparse,{sparse},{:.2}\nweak,{weak},{:.2}\n",
        pct(total, sparse),
        pct(sparse, weak),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn sample_report() -> EvalReport {
        EvalReport {
            config_fingerprint: "abc123".to_string(),
            source_tag_counts: SourceTagCounts { rs: 470, llm: 25, llm_rejected_fallback_rs: 5 },
            metrics: ReportMetrics {
                users: StrataCounts { all: 500, weak: 30, non_weak: 470 },
                candidate_pool: CandidatePool {
                    hybrid: Strata {
                        all: RankingMeans { auc: Some(0.91234), ndcg_at_10: Some(0.8) },
                        weak: RankingMeans { auc: Some(1.0), ndcg_at_10: Some(1.0) },
                        non_weak: RankingMeans { auc: Some(0.9067), ndcg_at_10: Some(0.787) },
                    },
                    rs_only: Strata {
                        all: RankingMeans { auc: Some(0.88), ndcg_at_10: Some(0.75) },
                        weak: RankingMeans { auc: Some(0.1), ndcg_at_10: Some(0.05) },
                        non_weak: RankingMeans { auc: Some(0.93), ndcg_at_10: Some(0.79) },
                    },
                },
                full_pool: FullPool {
                    rs_auc: Strata { all: Some(0.86), weak: Some(0.41), non_weak: Some(0.89) },
                },
                significance: Significance::Test { t: -2.5, p: 0.1296, df: 2 },
            },
        }
    }

    #[test]
    fn report_json_round_trips() {
        let report = sample_report();
        let json = serde_json::to_string_pretty(&report).unwrap();
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn report_json_is_deterministic() {
        let a = serde_json::to_string_pretty(&sample_report()).unwrap();
        let b = serde_json::to_string_pretty(&sample_report()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_stratum_serializes_as_null() {
        let mut report = sample_report();
        report.metrics.candidate_pool.hybrid.weak = RankingMeans::default();
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"auc\":null"));
    }

    #[test]
    fn significance_tagging() {
        let json = serde_json::to_string(&Significance::NoChange).unwrap();
        assert_eq!(json, "{\"kind\":\"no_change\"}");
        let json = serde_json::to_string(&Significance::ConstantDifference { diff: 0.25 }).unwrap();
        assert_eq!(json, "{\"kind\":\"constant_difference\",\"diff\":0.25}");
    }

    #[test]
    fn table_uses_four_decimals_and_dash() {
        let mut report = sample_report();
        report.metrics.candidate_pool.hybrid.weak = RankingMeans::default();
        report.metrics.full_pool.rs_auc.weak = None;
        let table = emit_table(&report);
        assert!(table.contains("0.9123"));
        assert!(table.contains("\u{2014}"));
        assert!(table.contains("t = -2.5000, p = 0.1296, df = 2"));
        // Markdown shape: every body row has six pipes.
        for line in table.lines().filter(|l| l.starts_with('|')) {
            assert_eq!(line.matches('|').count(), 6, "row {line}");
        }
    }

    #[test]
    fn table_renders_all_significance_variants() {
        for (sig, needle) in [
            (Significance::Absent, "not run"),
            (Significance::NoChange, "no change"),
            (Significance::ConstantDifference { diff: 0.25 }, "constant per-user difference"),
        ] {
            let mut report = sample_report();
            report.metrics.significance = sig;
            assert!(emit_table(&report).contains(needle));
        }
    }

    fn profile(user: usize, sparsity: f64, auc: f64, train_count: usize) -> UserProfile {
        UserProfile { user, sparsity, auc, train_count }
    }

    #[test]
    fn scatter_has_header_and_one_row_per_user() {
        let profiles =
            vec![profile(0, 0.99, 0.45, 12), profile(1, 0.5, 0.9, 1700)];
        let csv = emit_scatter(&profiles, &|u| format!("u{u}"));
        assert_eq!(csv, "user,sparsity,auc\nu0,0.99,0.45\nu1,0.5,0.9\n");
    }

    #[test]
    fn histograms_conserve_mass() {
        let profiles: Vec<UserProfile> = (0..137)
            .map(|i| profile(i, (i % 100) as f64 / 100.0, 0.5, i * 3))
            .collect();
        let h = emit_histograms(&profiles, 50).unwrap();
        for csv in [&h.sparsity_csv, &h.train_counts_csv] {
            let total: usize = csv
                .lines()
                .skip(1)
                .map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap())
                .sum();
            assert_eq!(total, 137);
            assert_eq!(csv.lines().count(), 51);
        }
    }

    #[test]
    fn sparsity_one_lands_in_last_bin() {
        let profiles = vec![profile(0, 1.0, 0.5, 3)];
        let h = emit_histograms(&profiles, 10).unwrap();
        let last = h.sparsity_csv.lines().last().unwrap();
        assert!(last.ends_with(",1"), "last bin row: {last}");
    }

    #[test]
    fn histogram_input_validation() {
        let profiles = vec![profile(0, 0.5, 0.5, 3)];
        assert!(matches!(emit_histograms(&profiles, 0), Err(ReportError::ZeroBins)));
        assert!(matches!(emit_histograms(&[], 10), Err(ReportError::EmptyProfiles)));
    }

    #[test]
    fn funnel_reductions_match_hand_computation() {
        // 6036 → 1890 is a 68.69% reduction; 1890 → 300 is 84.13%.
        let csv = emit_weak_funnel(6036, 1890, 300).unwrap();
        assert_eq!(
            csv,
            "stage,count,reduction_pct\ntotal,6036,\nsparse,1890,68.69\nweak,300,84.13\n"
        );
    }

    #[test]
    fn funnel_edge_cases() {
        let csv = emit_weak_funnel(10, 0, 0).unwrap();
        assert_eq!(csv, "stage,count,reduction_pct\ntotal,10,\nsparse,0,100.00\nweak,0,0.00\n");
        assert!(matches!(
            emit_weak_funnel(5, 6, 1),
            Err(ReportError::FunnelOrdering { total: 5, sparse: 6, weak: 1 })
        ));
        assert!(matches!(emit_weak_funnel(5, 3, 4), Err(ReportError::FunnelOrdering { .. })));
    }
}
