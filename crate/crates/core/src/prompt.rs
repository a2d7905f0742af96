//! In-context ranking instructions and response repair.
//!
//! For each weak user this module builds a candidate set (the held-out
//! item plus the recommender's top picks), renders a deterministic
//! instruction text showing the user's history and the candidates in a
//! seeded presentation order, and parses the model's reply back into an
//! exact permutation of the candidate set — dropping titles that were
//! never offered and appending candidates the model forgot.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use core::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::Event;
use crate::error::PromptError;

/// Version tag of the instruction wording below; bump on any change so
/// cached responses and parsers never silently cross template versions.
pub const TEMPLATE_VERSION: &str = "v1";

/// Display titles keyed by item index.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TitleTable {
    titles: BTreeMap<usize, String>,
}

impl TitleTable {
    /// Empty table.
    pub fn new() -> Self {
        TitleTable::default()
    }

    /// Sets the title for an item.
    pub fn insert(&mut self, item: usize, title: &str) {
        self.titles.insert(item, title.to_string());
    }

    /// Title of an item, if known.
    pub fn get(&self, item: usize) -> Option<&str> {
        self.titles.get(&item).map(String::as_str)
    }

    /// Title of an item, or an error naming the item.
    pub fn require(&self, item: usize) -> Result<&str, PromptError> {
        self.get(item).ok_or(PromptError::MissingTitle { item })
    }

    /// Number of titled items.
    pub fn len(&self) -> usize {
        self.titles.len()
    }

    /// Whether the table is empty.
    pub fn is_empty(&self) -> bool {
        self.titles.is_empty()
    }
}

/// How candidates are ordered inside the rendered prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PresentationOrder {
    /// Seeded random permutation (the default), so the model cannot
    /// read the recommender's ranking off the listing order.
    Shuffled,
    /// Keep the recommender's order; with an echoing backend this makes
    /// the re-rank an exact no-op, which the ablation tests rely on.
    RsRank,
}

/// How response lines are matched against candidate titles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchMode {
    /// Case- and whitespace-insensitive substring matching only.
    Exact,
    /// Exact matching first; a list line that matched nothing is then
    /// allowed to claim the unique candidate within `max_edits` edits.
    Fuzzy {
        /// Maximum Levenshtein distance accepted.
        max_edits: usize,
    },
}

/// One rendered instruction for one user.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptInstance {
    /// Internal user index.
    pub user: usize,
    /// External user ID as shown in the prompt.
    pub user_ext: String,
    /// History items, most recent first, as listed in the prompt.
    pub history: Vec<usize>,
    /// Candidates in presentation order.
    pub candidates: Vec<usize>,
    /// Candidates in recommender order — the repair fallback order.
    pub rs_order: Vec<usize>,
    /// Per-user shuffle seed used for the presentation order.
    pub seed: u64,
    /// The rendered instruction text.
    pub text: String,
}

/// A parsed, repaired model ranking: always an exact permutation of the
/// candidate set.
#[derive(Debug, Clone, PartialEq)]
pub struct RerankResult {
    /// Internal user index.
    pub user: usize,
    /// Candidates in the model's order after repair.
    pub ranking: Vec<usize>,
    /// List lines that named no candidate at all.
    pub dropped_hallucinations: usize,
    /// Candidates the model never mentioned, appended in fallback order.
    pub appended_missing: usize,
    /// The raw response text.
    pub raw: String,
}

/// Sizing and ordering knobs for prompt construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PromptBuildConfig {
    /// Candidate-set size j (held-out item included).
    pub j: usize,
    /// Maximum history items shown, most recent first.
    pub history_cap: usize,
    /// Candidate ordering inside the prompt.
    pub presentation: PresentationOrder,
}

impl Default for PromptBuildConfig {
    fn default() -> Self {
        PromptBuildConfig { j: 20, history_cap: 50, presentation: PresentationOrder::Shuffled }
    }
}

/// A candidate set in recommender order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    /// Candidate items sorted by the recommender's ranking (the
    /// held-out item sits wherever the recommender placed it).
    pub rs_order: Vec<usize>,
    /// True when fewer than j items were available.
    pub shrunk: bool,
}

/// Stateless 64-bit mixer (splitmix64 finalizer).
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derives a per-user seed from the run seed, so one user's shuffle
/// never depends on how many other prompts were built.
pub fn per_user_seed(run_seed: u64, user: usize) -> u64 {
    splitmix64(run_seed ^ splitmix64(user as u64 + 1))
}

/// Selects the candidate set: the held-out item plus the top `j − 1`
/// recommender-ranked items (excluding the held-out item), ordered by
/// recommender rank. Shrinks with a flag when the pool is too small.
pub fn build_candidates(rs_ranking: &[usize], test_item: usize, j: usize) -> CandidateSet {
    let take = j.saturating_sub(1);
    let mut chosen: Vec<usize> = rs_ranking.iter().copied().filter(|&i| i != test_item).take(take).collect();
    chosen.push(test_item);
    let rs_order: Vec<usize> = rs_ranking.iter().copied().filter(|i| chosen.contains(i)).collect();
    let mut rs_order = rs_order;
    if !rs_order.contains(&test_item) {
        rs_order.push(test_item);
    }
    let shrunk = rs_order.len() < j;
    CandidateSet { rs_order, shrunk }
}

/// Applies the presentation policy: a Fisher–Yates shuffle under the
/// given seed, or the recommender order unchanged.
pub fn present(candidates_rs_order: &[usize], policy: PresentationOrder, seed: u64) -> Vec<usize> {
    let mut out = candidates_rs_order.to_vec();
    if let PresentationOrder::Shuffled = policy {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..out.len()).rev() {
            let j = rng.gen_range(0..=i);
            out.swap(i, j);
        }
    }
    out
}

fn numbered_inline(items: &[usize], titles: &TitleTable) -> Result<String, PromptError> {
    let mut out = String::new();
    for (pos, &item) in items.iter().enumerate() {
        if pos > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "{}. {}", pos + 1, titles.require(item)?);
    }
    Ok(out)
}

/// Renders the instruction text: the history as a numbered list (most
/// recent at the top), the ranking request over the candidates in
/// presentation order, and the restriction and output-format sentences.
pub fn render_prompt(
    user_ext: &str,
    history: &[usize],
    candidates: &[usize],
    titles: &TitleTable,
) -> Result<String, PromptError> {
    if history.is_empty() {
        return Err(PromptError::EmptyHistory);
    }
    if candidates.is_empty() {
        return Err(PromptError::EmptyCandidates);
    }
    let mut text = String::new();
    let _ = write!(
        text,
        "User {} watched the following movies in order, with the most recent at the top: {}\n",
        user_ext,
        numbered_inline(history, titles)?
    );
    let _ = write!(
        text,
        "Now, rank the following items based on which movie the user would like to watch next: {}\n",
        numbered_inline(candidates, titles)?
    );
    let _ = write!(
        text,
        "Rank all {} candidate items and no others. Return a numbered list of the candidate titles only, one per line, with your top recommendation first.",
        candidates.len()
    );
    Ok(text)
}

/// Builds the complete prompt instance for one user: capped
/// most-recent-first history, candidate selection, seeded presentation,
/// and the rendered text.
pub fn make_instance(
    user: usize,
    user_ext: &str,
    train: &[Event],
    rs_ranking: &[usize],
    test_item: usize,
    cfg: &PromptBuildConfig,
    run_seed: u64,
    titles: &TitleTable,
) -> Result<PromptInstance, PromptError> {
    let history: Vec<usize> = train.iter().rev().take(cfg.history_cap).map(|e| e.item).collect();
    let set = build_candidates(rs_ranking, test_item, cfg.j);
    let seed = per_user_seed(run_seed, user);
    let candidates = present(&set.rs_order, cfg.presentation, seed);
    let text = render_prompt(user_ext, &history, &candidates, titles)?;
    Ok(PromptInstance {
        user,
        user_ext: user_ext.to_string(),
        history,
        candidates,
        rs_order: set.rs_order,
        seed,
        text,
    })
}

/// Lowercases and collapses every whitespace run to a single space.
fn normalize(s: &str) -> String {
    let mut out = String::new();
    let mut pending_space = false;
    for c in s.chars() {
        if c.is_whitespace() {
            pending_space = !out.is_empty();
        } else {
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            for lc in c.to_lowercase() {
                out.push(lc);
            }
        }
    }
    out
}

/// Whether a raw line presents itself as a list entry ("1. …", "2) …",
/// "- …", "* …").
fn is_list_item(line: &str) -> bool {
    let t = line.trim_start();
    if let Some(rest) = t.strip_prefix(['-', '*', '\u{2022}']) {
        return rest.starts_with(' ');
    }
    let digits = t.chars().take_while(|c| c.is_ascii_digit()).count();
    // Up to 3 digits: list indexes, not four-digit years like "2001: …".
    if digits == 0 || digits > 3 {
        return false;
    }
    t[digits..].starts_with(['.', ')', ':', '-'])
}

/// Strips a leading list marker for fuzzy comparison.
fn strip_list_marker(line: &str) -> &str {
    let t = line.trim_start();
    if let Some(rest) = t.strip_prefix(['-', '*', '\u{2022}']) {
        if rest.starts_with(' ') {
            return rest.trim_start();
        }
    }
    let digits = t.chars().take_while(|c| c.is_ascii_digit()).count();
    if (1..=3).contains(&digits) && t[digits..].starts_with(['.', ')', ':', '-']) {
        return t[digits + 1..].trim_start();
    }
    t
}

/// Levenshtein distance, abandoned early once it must exceed `max`.
fn bounded_edit_distance(a: &str, b: &str, max: usize) -> Option<usize> {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.len().abs_diff(b.len()) > max {
        return None;
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = alloc::vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        let mut row_min = cur[0];
        for (j, &cb) in b.iter().enumerate() {
            let cost = usize::from(ca != cb);
            cur[j + 1] = (prev[j] + cost).min(prev[j + 1] + 1).min(cur[j] + 1);
            row_min = row_min.min(cur[j + 1]);
        }
        if row_min > max {
            return None;
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    (prev[b.len()] <= max).then_some(prev[b.len()])
}

/// Extracts an ordered, repaired ranking from a raw model response.
///
/// Candidate titles are matched case- and whitespace-insensitively as
/// substrings of each response line, longest title first, each span of
/// text claimed at most once. Matched candidates keep the order they
/// appear in; duplicates keep their first mention. List lines naming no
/// candidate count as hallucinations; candidates never mentioned are
/// appended at the tail in `rs_fallback` order. The result is always an
/// exact permutation of `candidates` — unless nothing matched at all,
/// which is an unparseable-response error.
pub fn parse_response(
    user: usize,
    raw: &str,
    candidates: &[usize],
    titles: &TitleTable,
    rs_fallback: &[usize],
    mode: MatchMode,
) -> Result<RerankResult, PromptError> {
    if candidates.is_empty() {
        return Err(PromptError::EmptyCandidates);
    }
    // (normalized title, candidate item), longest first so a title that
    // contains another title wins the span.
    let mut norm_titles: Vec<(String, usize)> = Vec::new();
    for &item in candidates {
        let norm = normalize(titles.require(item)?);
        if !norm.is_empty() {
            norm_titles.push((norm, item));
        }
    }
    norm_titles.sort_by(|(ta, ia), (tb, ib)| tb.len().cmp(&ta.len()).then(ia.cmp(ib)));

    let mut ordered: Vec<usize> = Vec::new();
    let mut seen = alloc::vec![false; candidates.len()];
    let position_of = |item: usize| candidates.iter().position(|&c| c == item).unwrap();
    let mut hallucinations = 0usize;

    for line in raw.lines() {
        let norm_line = normalize(line);
        if norm_line.is_empty() {
            continue;
        }
        // Claimed byte spans of norm_line, so overlapping titles cannot
        // both match the same text.
        let mut claims: Vec<(usize, usize, usize)> = Vec::new();
        for (title, item) in &norm_titles {
            let mut search = 0;
            while search < norm_line.len() {
                let Some(found) = norm_line[search..].find(title.as_str()) else {
                    break;
                };
                let pos = search + found;
                let end = pos + title.len();
                let boundary_before =
                    norm_line[..pos].chars().next_back().is_none_or(|c| !c.is_alphanumeric());
                let boundary_after =
                    norm_line[end..].chars().next().is_none_or(|c| !c.is_alphanumeric());
                let free = claims.iter().all(|&(s, e, _)| pos >= e || end <= s);
                if boundary_before && boundary_after && free {
                    claims.push((pos, end, *item));
                    search = end;
                } else {
                    search = pos + norm_line[pos..].chars().next().map_or(1, char::len_utf8);
                }
            }
        }
        claims.sort_by_key(|&(pos, _, _)| pos);
        let mut matched_any = false;
        for (_, _, item) in claims {
            matched_any = true;
            let slot = position_of(item);
            if !seen[slot] {
                seen[slot] = true;
                ordered.push(item);
            }
        }
        if !matched_any {
            if let MatchMode::Fuzzy { max_edits } = mode {
                let target = normalize(strip_list_marker(line));
                if !target.is_empty() {
                    let mut best: Option<(usize, usize)> = None; // (distance, item)
                    let mut tied = false;
                    for (title, item) in &norm_titles {
                        if let Some(d) = bounded_edit_distance(&target, title, max_edits) {
                            match best {
                                Some((bd, _)) if d > bd => {}
                                Some((bd, _)) if d == bd => tied = true,
                                _ => {
                                    best = Some((d, *item));
                                    tied = false;
                                }
                            }
                        }
                    }
                    if let (Some((_, item)), false) = (best, tied) {
                        matched_any = true;
                        let slot = position_of(item);
                        if !seen[slot] {
                            seen[slot] = true;
                            ordered.push(item);
                        }
                    }
                }
            }
        }
        if !matched_any && is_list_item(line) {
            hallucinations += 1;
        }
    }

    if ordered.is_empty() {
        return Err(PromptError::UnparseableResponse);
    }
    let mut appended = 0usize;
    for &item in rs_fallback {
        let slot = position_of(item);
        if !seen[slot] {
            seen[slot] = true;
            ordered.push(item);
            appended += 1;
        }
    }
    debug_assert_eq!(ordered.len(), candidates.len());
    Ok(RerankResult {
        user,
        ranking: ordered,
        dropped_hallucinations: hallucinations,
        appended_missing: appended,
        raw: raw.to_string(),
    })
}

/// Helpers that read structure back out of a rendered prompt.
///
/// These exist for the deterministic mock backends and tests; they are
/// coupled to [`TEMPLATE_VERSION`] and split the inline numbered list on
/// its `", k. "` separators, so they assume candidate titles do not
/// themselves contain such a marker.
pub mod introspect {
    use alloc::string::{String, ToString};
    use alloc::vec::Vec;

    const CANDIDATE_MARKER: &str =
        "Now, rank the following items based on which movie the user would like to watch next: ";
    const USER_PREFIX: &str = "User ";
    const USER_SUFFIX: &str = " watched the following movies in order";

    /// Splits `"1. A, 2. B, 3. C"` into `["A", "B", "C"]`.
    fn split_numbered_inline(list: &str) -> Option<Vec<String>> {
        let rest = list.strip_prefix("1. ")?;
        let mut titles = Vec::new();
        let mut remaining = rest;
        let mut next = 2usize;
        loop {
            let sep = alloc::format!(", {next}. ");
            match remaining.find(&sep) {
                Some(pos) => {
                    titles.push(remaining[..pos].to_string());
                    remaining = &remaining[pos + sep.len()..];
                    next += 1;
                }
                None => {
                    titles.push(remaining.to_string());
                    return Some(titles);
                }
            }
        }
    }

    /// Candidate titles in presentation order, read from the ranking
    /// request line.
    pub fn candidate_titles(prompt: &str) -> Option<Vec<String>> {
        let line = prompt.lines().find(|l| l.starts_with(CANDIDATE_MARKER))?;
        split_numbered_inline(&line[CANDIDATE_MARKER.len()..])
    }

    /// The external user ID named in the history line.
    pub fn user_id(prompt: &str) -> Option<String> {
        let line = prompt.lines().find(|l| l.starts_with(USER_PREFIX))?;
        let end = line.find(USER_SUFFIX)?;
        Some(line[USER_PREFIX.len()..end].to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn titles_of(entries: &[(usize, &str)]) -> TitleTable {
        let mut t = TitleTable::new();
        for &(item, title) in entries {
            t.insert(item, title);
        }
        t
    }

    #[test]
    fn candidates_test_item_outside_top() {
        let ranking: Vec<usize> = (0..100).collect();
        let set = build_candidates(&ranking, 50, 20);
        assert_eq!(set.rs_order.len(), 20);
        assert!(set.rs_order.contains(&50));
        assert!(!set.shrunk);
        // Top 19 plus the held-out item, in recommender order.
        let expected: Vec<usize> = (0..19).chain([50]).collect();
        assert_eq!(set.rs_order, expected);
    }

    #[test]
    fn candidates_test_item_inside_top() {
        let ranking: Vec<usize> = (0..100).collect();
        let set = build_candidates(&ranking, 2, 20);
        // The window extends one item to keep |C| = 20.
        assert_eq!(set.rs_order, (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn candidates_j_one_is_test_item_only() {
        let set = build_candidates(&[5, 6, 7], 6, 1);
        assert_eq!(set.rs_order, alloc::vec![6]);
        assert!(!set.shrunk);
    }

    #[test]
    fn candidates_shrink_when_pool_small() {
        let set = build_candidates(&[1, 2, 9], 9, 20);
        assert_eq!(set.rs_order, alloc::vec![1, 2, 9]);
        assert!(set.shrunk);
    }

    #[test]
    fn present_is_seed_deterministic() {
        let c = alloc::vec![10, 20, 30, 40, 50];
        let a = present(&c, PresentationOrder::Shuffled, 7);
        let b = present(&c, PresentationOrder::Shuffled, 7);
        assert_eq!(a, b);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, c);
        assert_eq!(present(&c, PresentationOrder::RsRank, 7), c);
    }

    #[test]
    fn present_varies_with_seed() {
        let c: Vec<usize> = (0..20).collect();
        let distinct = (0..10)
            .map(|s| present(&c, PresentationOrder::Shuffled, s))
            .collect::<alloc::collections::BTreeSet<_>>();
        assert!(distinct.len() > 1);
    }

    #[test]
    fn render_matches_wording() {
        let titles = titles_of(&[(0, "Harry Potter"), (1, "Jurassic Park"), (2, "Multiplicity"), (3, "Dune")]);
        // History most recent first: Harry Potter then Jurassic Park.
        let text = render_prompt("42", &[0, 1], &[2, 3], &titles).unwrap();
        assert!(text.starts_with(
            "User 42 watched the following movies in order, with the most recent at the top: 1. Harry Potter, 2. Jurassic Park\n"
        ));
        assert!(text.contains(
            "Now, rank the following items based on which movie the user would like to watch next: 1. Multiplicity, 2. Dune\n"
        ));
        assert!(text.contains("Rank all 2 candidate items and no others."));
        // Byte-identical on re-render.
        assert_eq!(text, render_prompt("42", &[0, 1], &[2, 3], &titles).unwrap());
    }

    #[test]
    fn render_missing_title_names_item() {
        let titles = titles_of(&[(0, "A")]);
        assert_eq!(
            render_prompt("1", &[0], &[9], &titles).unwrap_err(),
            PromptError::MissingTitle { item: 9 }
        );
    }

    #[test]
    fn render_empty_history_errors() {
        let titles = titles_of(&[(0, "A")]);
        assert_eq!(render_prompt("1", &[], &[0], &titles).unwrap_err(), PromptError::EmptyHistory);
    }

    #[test]
    fn per_user_seed_is_stable_and_spread() {
        assert_eq!(per_user_seed(42, 7), per_user_seed(42, 7));
        assert_ne!(per_user_seed(42, 7), per_user_seed(42, 8));
        assert_ne!(per_user_seed(42, 7), per_user_seed(43, 7));
    }

    /// Frozen shuffle output: presentation order must never drift for a
    /// fixed seed, or cached responses stop matching their prompts.
    #[test]
    fn present_frozen_permutation() {
        let c = alloc::vec![0, 1, 2, 3, 4];
        assert_eq!(present(&c, PresentationOrder::Shuffled, 7), alloc::vec![4, 0, 1, 2, 3]);
    }

    #[test]
    fn parse_simple_numbered_list() {
        let titles = titles_of(&[(0, "Dune"), (1, "Multiplicity")]);
        let r = parse_response(5, "1. Dune\n2. Multiplicity", &[0, 1], &titles, &[0, 1], MatchMode::Exact).unwrap();
        assert_eq!(r.ranking, alloc::vec![0, 1]);
        assert_eq!(r.dropped_hallucinations, 0);
        assert_eq!(r.appended_missing, 0);
        assert_eq!(r.user, 5);
    }

    #[test]
    fn parse_reversed_order_preserved() {
        let titles = titles_of(&[(0, "Dune"), (1, "Multiplicity")]);
        let r = parse_response(0, "1. Multiplicity\n2. Dune", &[0, 1], &titles, &[0, 1], MatchMode::Exact).unwrap();
        assert_eq!(r.ranking, alloc::vec![1, 0]);
    }

    #[test]
    fn parse_drops_hallucinated_title() {
        let titles = titles_of(&[(0, "Dune"), (1, "Multiplicity")]);
        let r = parse_response(
            0,
            "1. The Matrix\n2. Dune\n3. Multiplicity",
            &[0, 1],
            &titles,
            &[0, 1],
            MatchMode::Exact,
        )
        .unwrap();
        assert_eq!(r.ranking, alloc::vec![0, 1]);
        assert!(r.dropped_hallucinations >= 1);
    }

    #[test]
    fn parse_appends_missing_in_fallback_order() {
        let titles = titles_of(&[(0, "A Movie"), (1, "B Movie"), (2, "C Movie")]);
        let r = parse_response(0, "1. B Movie", &[0, 1, 2], &titles, &[2, 0, 1], MatchMode::Exact).unwrap();
        assert_eq!(r.ranking, alloc::vec![1, 2, 0]);
        assert_eq!(r.appended_missing, 2);
    }

    #[test]
    fn parse_nothing_matched_is_unparseable() {
        let titles = titles_of(&[(0, "Dune")]);
        assert_eq!(
            parse_response(0, "I cannot help with that.", &[0], &titles, &[0], MatchMode::Exact).unwrap_err(),
            PromptError::UnparseableResponse
        );
    }

    #[test]
    fn parse_case_and_whitespace_insensitive() {
        let titles = titles_of(&[(0, "Harry  Potter"), (1, "Dune")]);
        let r = parse_response(0, "1. harry POTTER\n2. DUNE", &[0, 1], &titles, &[0, 1], MatchMode::Exact).unwrap();
        assert_eq!(r.ranking, alloc::vec![0, 1]);
    }

    #[test]
    fn parse_longest_title_wins_span() {
        let titles = titles_of(&[(0, "Dune"), (1, "Dune Part Two")]);
        let r = parse_response(0, "1. Dune Part Two\n2. Dune", &[0, 1], &titles, &[0, 1], MatchMode::Exact).unwrap();
        assert_eq!(r.ranking, alloc::vec![1, 0]);
    }

    #[test]
    fn parse_substring_needs_word_boundary() {
        let titles = titles_of(&[(0, "Heat")]);
        // "Heated" must not claim "Heat"; nothing matches → unparseable.
        assert_eq!(
            parse_response(0, "1. Heated", &[0], &titles, &[0], MatchMode::Exact).unwrap_err(),
            PromptError::UnparseableResponse
        );
    }

    #[test]
    fn parse_duplicate_mention_keeps_first() {
        let titles = titles_of(&[(0, "Dune"), (1, "Heat")]);
        let r = parse_response(0, "1. Heat\n2. Heat\n3. Dune", &[0, 1], &titles, &[0, 1], MatchMode::Exact).unwrap();
        assert_eq!(r.ranking, alloc::vec![1, 0]);
    }

    #[test]
    fn parse_comma_separated_single_line() {
        let titles = titles_of(&[(0, "Dune"), (1, "Heat"), (2, "Big")]);
        let r = parse_response(0, "Big, Dune, Heat", &[0, 1, 2], &titles, &[0, 1, 2], MatchMode::Exact).unwrap();
        assert_eq!(r.ranking, alloc::vec![2, 0, 1]);
    }

    #[test]
    fn parse_numeric_title_not_mistaken_for_marker() {
        let titles = titles_of(&[(0, "2001: A Space Odyssey"), (1, "Heat")]);
        let r = parse_response(
            0,
            "1. 2001: A Space Odyssey\n2. Heat",
            &[0, 1],
            &titles,
            &[0, 1],
            MatchMode::Exact,
        )
        .unwrap();
        assert_eq!(r.ranking, alloc::vec![0, 1]);
    }

    #[test]
    fn parse_fuzzy_recovers_typo() {
        let titles = titles_of(&[(0, "Multiplicity"), (1, "Heat")]);
        let fuzzy = MatchMode::Fuzzy { max_edits: 2 };
        let r = parse_response(0, "1. Multiplicty\n2. Heat", &[0, 1], &titles, &[0, 1], fuzzy).unwrap();
        assert_eq!(r.ranking, alloc::vec![0, 1]);
        assert_eq!(r.dropped_hallucinations, 0);
        // Exact mode treats the typo as a hallucination and appends.
        let e = parse_response(0, "1. Multiplicty\n2. Heat", &[0, 1], &titles, &[0, 1], MatchMode::Exact).unwrap();
        assert_eq!(e.ranking, alloc::vec![1, 0]);
        assert_eq!(e.dropped_hallucinations, 1);
        assert_eq!(e.appended_missing, 1);
    }

    #[test]
    fn parse_fuzzy_ambiguity_is_skipped() {
        let titles = titles_of(&[(0, "Alien"), (1, "Aliens")]);
        let fuzzy = MatchMode::Fuzzy { max_edits: 2 };
        // "Alienz" is distance 1 from both → ambiguous, counted as a
        // hallucination, both candidates appended.
        let r = parse_response(0, "1. Alienz\n2. Alien", &[0, 1], &titles, &[0, 1], fuzzy).unwrap();
        assert_eq!(r.ranking, alloc::vec![0, 1]);
        assert_eq!(r.dropped_hallucinations, 1);
    }

    #[test]
    fn edit_distance_bounds() {
        assert_eq!(bounded_edit_distance("abc", "abc", 2), Some(0));
        assert_eq!(bounded_edit_distance("abc", "abd", 2), Some(1));
        assert_eq!(bounded_edit_distance("abc", "xyz", 2), None);
        assert_eq!(bounded_edit_distance("kitten", "sitting", 3), Some(3));
    }

    #[test]
    fn make_instance_caps_history_and_shuffles() {
        let mut titles = TitleTable::new();
        for i in 0..30 {
            titles.insert(i, &alloc::format!("Movie {i:02}"));
        }
        let train: Vec<Event> = (0..10)
            .map(|t| Event { item: t, rating: 4.0, timestamp: t as i64 })
            .collect();
        let ranking: Vec<usize> = (10..30).collect();
        let cfg = PromptBuildConfig { j: 5, history_cap: 4, presentation: PresentationOrder::Shuffled };
        let inst = make_instance(3, "u3", &train, &ranking, 25, &cfg, 42, &titles).unwrap();
        // History: last 4 train items, most recent first.
        assert_eq!(inst.history, alloc::vec![9, 8, 7, 6]);
        assert_eq!(inst.candidates.len(), 5);
        assert!(inst.candidates.contains(&25));
        assert_eq!(inst.seed, per_user_seed(42, 3));
        let again = make_instance(3, "u3", &train, &ranking, 25, &cfg, 42, &titles).unwrap();
        assert_eq!(inst, again);
    }

    #[test]
    fn introspect_round_trip() {
        let titles = titles_of(&[(0, "Harry Potter"), (1, "Jurassic Park"), (2, "Multiplicity"), (3, "Dune")]);
        let text = render_prompt("u77", &[0, 1], &[3, 2], &titles).unwrap();
        assert_eq!(introspect::user_id(&text).unwrap(), "u77");
        assert_eq!(
            introspect::candidate_titles(&text).unwrap(),
            alloc::vec!["Dune".to_string(), "Multiplicity".to_string()]
        );
    }

    #[test]
    fn parse_round_trip_over_random_permutations() {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for trial in 0..50u64 {
            let n = 3 + (trial as usize % 10);
            let mut titles = TitleTable::new();
            let candidates: Vec<usize> = (0..n).collect();
            for i in 0..n {
                titles.insert(i, &alloc::format!("Title {} Film", splitmix64(trial * 100 + i as u64) % 10_000));
            }
            let mut perm = candidates.clone();
            perm.shuffle(&mut rng);
            let echo: String = perm
                .iter()
                .enumerate()
                .map(|(k, &i)| alloc::format!("{}. {}\n", k + 1, titles.get(i).unwrap()))
                .collect();
            let r = parse_response(0, &echo, &candidates, &titles, &candidates, MatchMode::Exact).unwrap();
            assert_eq!(r.ranking, perm);
            assert_eq!(r.appended_missing, 0);
        }
    }
}
