//! Interaction ingestion, preprocessing, and leave-one-out splitting.
//!
//! The flow is: parse raw text into an [`InteractionLog`], prune it with
//! [`kcore_filter`], turn it into a contiguous-ID [`Dataset`] with
//! [`build_dataset`], and finally carve per-user train/valid/test
//! partitions with [`loo_split`]. Every step is a pure function over its
//! input, so the whole chain is trivially reproducible.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::CorpusError;

/// One raw interaction: external IDs plus rating and time.
#[derive(Debug, Clone, PartialEq)]
pub struct Interaction {
    /// External user ID as it appeared in the source file.
    pub user: String,
    /// External item ID as it appeared in the source file.
    pub item: String,
    /// Rating in `[1, 5]`.
    pub rating: f64,
    /// Interaction time in seconds.
    pub timestamp: i64,
}

/// An ordered list of raw interactions, possibly with duplicates.
///
/// Duplicate (user, item) pairs are allowed here; they collapse to the
/// latest occurrence when a [`Dataset`] is built.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InteractionLog {
    /// Records in source order.
    pub records: Vec<Interaction>,
}

impl InteractionLog {
    /// Number of records.
    pub fn len(&self) -> usize {
        self.records.len()
    }

    /// Whether the log holds no records.
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Bijective map between external ID strings and contiguous indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IdMap {
    to_index: BTreeMap<String, usize>,
    to_external: Vec<String>,
}

impl IdMap {
    /// Returns the index for `external`, assigning the next free index on
    /// first sight.
    pub fn intern(&mut self, external: &str) -> usize {
        if let Some(&idx) = self.to_index.get(external) {
            return idx;
        }
        let idx = self.to_external.len();
        self.to_index.insert(external.to_string(), idx);
        self.to_external.push(external.to_string());
        idx
    }

    /// Looks up the index of an external ID.
    pub fn index_of(&self, external: &str) -> Option<usize> {
        self.to_index.get(external).copied()
    }

    /// Looks up the external ID at an index.
    pub fn external_of(&self, index: usize) -> Option<&str> {
        self.to_external.get(index).map(String::as_str)
    }

    /// Number of interned IDs.
    pub fn len(&self) -> usize {
        self.to_external.len()
    }

    /// Whether no ID has been interned.
    pub fn is_empty(&self) -> bool {
        self.to_external.is_empty()
    }

    /// Iterates `(index, external)` pairs in index order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &str)> {
        self.to_external.iter().enumerate().map(|(i, s)| (i, s.as_str()))
    }
}

/// One interaction inside a [`Dataset`], with the item as an index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    /// Contiguous item index.
    pub item: usize,
    /// Rating in `[1, 5]`.
    pub rating: f64,
    /// Interaction time in seconds.
    pub timestamp: i64,
}

/// Deduplicated interaction store with contiguous user and item indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// External user ID ↔ index `[0, M)`.
    pub user_ids: IdMap,
    /// External item ID ↔ index `[0, N)`.
    pub item_ids: IdMap,
    /// Per-user interactions sorted ascending by `(timestamp, item)`.
    pub histories: Vec<Vec<Event>>,
}

impl Dataset {
    /// Number of users (M).
    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }

    /// Number of items (N).
    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }
}

/// Summary counts for a dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetStats {
    /// User count M.
    pub users: usize,
    /// Item count N.
    pub items: usize,
    /// Total deduplicated interactions.
    pub interactions: usize,
    /// `1 − interactions / (M·N)`.
    pub sparsity: f64,
}

/// Per-user train history plus single held-out valid and test events.
///
/// Users whose history was too short for the three-way split keep their
/// index (so the ID maps stay valid) but carry an empty train list and
/// `None` holdouts; [`SplitDataset::surviving_users`] skips them.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    /// External user ID ↔ index, shared with the source dataset.
    pub user_ids: IdMap,
    /// External item ID ↔ index, shared with the source dataset.
    pub item_ids: IdMap,
    /// Per-user train events sorted ascending by `(timestamp, item)`.
    pub train: Vec<Vec<Event>>,
    /// Per-user validation holdout: the second most recent interaction.
    pub valid: Vec<Option<Event>>,
    /// Per-user test holdout: the most recent interaction.
    pub test: Vec<Option<Event>>,
    /// Users dropped for having fewer than three interactions.
    pub dropped_users: usize,
}

impl SplitDataset {
    /// Number of user indices (including dropped users).
    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }

    /// Number of items (N).
    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    /// Iterates the indices of users that made it into the split.
    pub fn surviving_users(&self) -> impl Iterator<Item = usize> + '_ {
        self.test
            .iter()
            .enumerate()
            .filter_map(|(u, t)| t.as_ref().map(|_| u))
    }

    /// Total number of train interactions across all users.
    pub fn train_len(&self) -> usize {
        self.train.iter().map(Vec::len).sum()
    }
}

fn check_rating(rating: f64, line: usize) -> Result<f64, CorpusError> {
    if !(1.0..=5.0).contains(&rating) {
        return Err(CorpusError::RatingOutOfRange { line, rating });
    }
    Ok(rating)
}

/// Parses `user::item::rating::timestamp` lines.
///
/// Whitespace-only lines are skipped; any other malformed line aborts with
/// its 1-based line number. An empty input yields an empty log.
pub fn parse_movielens(text: &str) -> Result<InteractionLog, CorpusError> {
    let mut records = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split("::").collect();
        if fields.len() != 4 {
            return Err(CorpusError::Parse {
                line,
                reason: format!("expected 4 '::'-separated fields, found {}", fields.len()),
            });
        }
        let rating: f64 = fields[2].trim().parse().map_err(|_| CorpusError::Parse {
            line,
            reason: format!("rating '{}' is not a number", fields[2]),
        })?;
        let timestamp: i64 = fields[3].trim().parse().map_err(|_| CorpusError::Parse {
            line,
            reason: format!("timestamp '{}' is not an integer", fields[3]),
        })?;
        records.push(Interaction {
            user: fields[0].trim().to_string(),
            item: fields[1].trim().to_string(),
            rating: check_rating(rating, line)?,
            timestamp,
        });
    }
    Ok(InteractionLog { records })
}

/// Field names used to pull interactions out of review JSON lines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JsonFields {
    /// Key holding the user/reviewer ID.
    pub user: String,
    /// Key holding the item ID.
    pub item: String,
    /// Key holding the rating.
    pub rating: String,
    /// Key holding the unix timestamp.
    pub timestamp: String,
}

impl Default for JsonFields {
    /// The Amazon review dump convention.
    fn default() -> Self {
        JsonFields {
            user: String::from("reviewerID"),
            item: String::from("asin"),
            rating: String::from("overall"),
            timestamp: String::from("unixReviewTime"),
        }
    }
}

fn json_id(value: &serde_json::Value, key: &str, line: usize) -> Result<String, CorpusError> {
    let field = value.get(key).ok_or_else(|| CorpusError::Parse {
        line,
        reason: format!("missing field '{key}'"),
    })?;
    match field {
        serde_json::Value::String(s) => Ok(s.clone()),
        serde_json::Value::Number(n) => Ok(n.to_string()),
        _ => Err(CorpusError::Parse {
            line,
            reason: format!("field '{key}' is neither string nor number"),
        }),
    }
}

fn json_number(value: &serde_json::Value, key: &str, line: usize) -> Result<f64, CorpusError> {
    value
        .get(key)
        .and_then(serde_json::Value::as_f64)
        .ok_or_else(|| CorpusError::Parse {
            line,
            reason: format!("field '{key}' is missing or not a number"),
        })
}

/// Parses one JSON object per line using the given field names.
///
/// Invalid JSON or a missing field aborts with the 1-based line number;
/// ratings outside `[1, 5]` are a range error. Whitespace-only lines are
/// skipped.
pub fn parse_amazon_jsonl(text: &str, fields: &JsonFields) -> Result<InteractionLog, CorpusError> {
    let mut records = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(raw).map_err(|e| CorpusError::Parse {
                line,
                reason: format!("invalid JSON: {e}"),
            })?;
        let rating = json_number(&value, &fields.rating, line)?;
        let ts = json_number(&value, &fields.timestamp, line)?;
        if libm::trunc(ts) != ts {
            return Err(CorpusError::Parse {
                line,
                reason: format!("timestamp {ts} is not an integer"),
            });
        }
        records.push(Interaction {
            user: json_id(&value, &fields.user, line)?,
            item: json_id(&value, &fields.item, line)?,
            rating: check_rating(rating, line)?,
            timestamp: ts as i64,
        });
    }
    Ok(InteractionLog { records })
}

/// Iteratively removes users and items with fewer than `k` records until
/// everything left has at least `k`. May return an empty log.
///
/// Counts are over raw records; duplicate (user, item) pairs are collapsed
/// later, by [`build_dataset`].
pub fn kcore_filter(log: &InteractionLog, k: usize) -> InteractionLog {
    let mut records: Vec<Interaction> = log.records.clone();
    loop {
        let mut user_counts: BTreeMap<&str, usize> = BTreeMap::new();
        let mut item_counts: BTreeMap<&str, usize> = BTreeMap::new();
        for r in &records {
            *user_counts.entry(r.user.as_str()).or_default() += 1;
            *item_counts.entry(r.item.as_str()).or_default() += 1;
        }
        let keep: Vec<bool> = records
            .iter()
            .map(|r| user_counts[r.user.as_str()] >= k && item_counts[r.item.as_str()] >= k)
            .collect();
        if keep.iter().all(|&b| b) {
            return InteractionLog { records };
        }
        let mut it = keep.into_iter();
        records.retain(|_| it.next().unwrap_or(false));
    }
}

/// Builds a contiguous-ID dataset from a log.
///
/// Indices are assigned in first-appearance order. Duplicate (user, item)
/// pairs collapse to the occurrence with the latest timestamp (on a
/// timestamp tie, the record seen later in the log wins). Histories are
/// sorted ascending by `(timestamp, item index)`.
pub fn build_dataset(log: &InteractionLog) -> Result<Dataset, CorpusError> {
    if log.records.is_empty() {
        return Err(CorpusError::EmptyLog);
    }
    let mut user_ids = IdMap::default();
    let mut item_ids = IdMap::default();
    // (user, item) → (rating, timestamp), latest occurrence winning.
    let mut latest: BTreeMap<(usize, usize), (f64, i64)> = BTreeMap::new();
    for r in &log.records {
        let u = user_ids.intern(&r.user);
        let i = item_ids.intern(&r.item);
        match latest.get(&(u, i)) {
            Some(&(_, t)) if r.timestamp < t => {}
            _ => {
                latest.insert((u, i), (r.rating, r.timestamp));
            }
        }
    }
    let mut histories = alloc::vec![Vec::new(); user_ids.len()];
    for (&(u, i), &(rating, timestamp)) in &latest {
        histories[u].push(Event { item: i, rating, timestamp });
    }
    for history in &mut histories {
        history.sort_by_key(|e| (e.timestamp, e.item));
    }
    Ok(Dataset { user_ids, item_ids, histories })
}

/// Computes user/item counts and global sparsity `1 − total/(M·N)`.
pub fn dataset_stats(ds: &Dataset) -> DatasetStats {
    let users = ds.n_users();
    let items = ds.n_items();
    let interactions: usize = ds.histories.iter().map(Vec::len).sum();
    let cells = (users * items) as f64;
    let sparsity = if cells == 0.0 { 0.0 } else { 1.0 - interactions as f64 / cells };
    DatasetStats { users, items, interactions, sparsity }
}

/// Splits each user's history leave-one-out style: most recent → test,
/// second most recent → valid, remainder → train.
///
/// Users with fewer than three interactions cannot fill all three parts;
/// they are dropped (empty train, no holdouts) and counted in
/// `dropped_users`. If nobody survives, that is an error.
pub fn loo_split(ds: &Dataset) -> Result<SplitDataset, CorpusError> {
    let n_users = ds.n_users();
    let mut train = alloc::vec![Vec::new(); n_users];
    let mut valid = alloc::vec![None; n_users];
    let mut test = alloc::vec![None; n_users];
    let mut dropped = 0usize;
    for (u, history) in ds.histories.iter().enumerate() {
        if history.len() < 3 {
            dropped += 1;
            continue;
        }
        let n = history.len();
        train[u] = history[..n - 2].to_vec();
        valid[u] = Some(history[n - 2]);
        test[u] = Some(history[n - 1]);
    }
    if dropped == n_users {
        return Err(CorpusError::NoSplitUsers);
    }
    Ok(SplitDataset {
        user_ids: ds.user_ids.clone(),
        item_ids: ds.item_ids.clone(),
        train,
        valid,
        test,
        dropped_users: dropped,
    })
}
