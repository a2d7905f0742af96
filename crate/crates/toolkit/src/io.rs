//! File IO: raw logs, split round-trips, titles, scores, and run
//! artifacts.
//!
//! Interaction files in the wild predate UTF-8 discipline (MovieLens
//! title files are Latin-1), so raw text is decoded leniently: UTF-8
//! when valid, byte-as-codepoint fallback otherwise. Everything written
//! here uses external IDs, full-precision floats, and `\n` line endings
//! so artifacts are diffable and byte-deterministic.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{DataFormat, DatasetSection, TitlesFormat};
use crate::runerr::RunError;
use weakrec_core::corpus::{
    parse_amazon_jsonl, parse_movielens, Event, IdMap, InteractionLog, SplitDataset,
};
use weakrec_core::gate::GateDecision;
use weakrec_core::metrics::UserProfile;
use weakrec_core::prompt::TitleTable;
use weakrec_core::report::EvalReport;

/// Reads a file as UTF-8, falling back to Latin-1 (every byte is its
/// own codepoint) for legacy encodings.
pub fn read_text_lossy(path: &Path) -> Result<String, RunError> {
    let bytes = fs::read(path)
        .map_err(|e| RunError::Data(format!("cannot read {}: {e}", path.display())))?;
    Ok(match String::from_utf8(bytes) {
        Ok(s) => s,
        Err(e) => e.into_bytes().iter().map(|&b| b as char).collect(),
    })
}

/// Loads the raw interaction log named by the dataset section.
pub fn load_log(ds: &DatasetSection) -> Result<InteractionLog, RunError> {
    let path = ds
        .path
        .as_deref()
        .ok_or_else(|| RunError::Usage("dataset.path is required to read raw data".into()))?;
    let text = read_text_lossy(Path::new(path))?;
    let log = match ds.format {
        DataFormat::Movielens => parse_movielens(&text)?,
        DataFormat::Amazon => parse_amazon_jsonl(&text, &ds.json_fields())?,
    };
    Ok(log)
}

#[derive(Serialize, Deserialize)]
struct SplitRow {
    user: String,
    item: String,
    rating: f64,
    timestamp: i64,
}

#[derive(Serialize, Deserialize)]
struct UserRow {
    user: String,
    dropped: bool,
}

#[derive(Serialize, Deserialize)]
struct ItemRow {
    item: String,
}

/// Looks up the external ID for an index produced by the same map.
fn ext(ids: &IdMap, idx: usize) -> &str {
    ids.external_of(idx).expect("index came from this map")
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, RunError> {
    let file = fs::File::create(path)
        .map_err(|e| RunError::Data(format!("cannot create {}: {e}", path.display())))?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>, RunError> {
    let file = fs::File::open(path)
        .map_err(|e| RunError::Data(format!("cannot open {}: {e}", path.display())))?;
    Ok(csv::Reader::from_reader(file))
}

/// Writes a prepared split as `train.csv`, `valid.csv`, `test.csv`
/// (header `user,item,rating,timestamp`), plus `users.csv` and
/// `items.csv` so the full catalog — dropped users included — survives
/// the round trip.
pub fn write_splits(dir: &Path, split: &SplitDataset) -> Result<(), RunError> {
    fs::create_dir_all(dir)
        .map_err(|e| RunError::Data(format!("cannot create {}: {e}", dir.display())))?;

    let row = |u: usize, e: &Event| SplitRow {
        user: ext(&split.user_ids, u).to_string(),
        item: ext(&split.item_ids, e.item).to_string(),
        rating: e.rating,
        timestamp: e.timestamp,
    };

    let mut train = csv_writer(&dir.join("train.csv"))?;
    for (u, history) in split.train.iter().enumerate() {
        for e in history {
            train.serialize(row(u, e))?;
        }
    }
    train.flush().map_err(RunError::from)?;

    for (name, holdouts) in [("valid.csv", &split.valid), ("test.csv", &split.test)] {
        let mut w = csv_writer(&dir.join(name))?;
        for (u, holdout) in holdouts.iter().enumerate() {
            if let Some(e) = holdout {
                w.serialize(row(u, e))?;
            }
        }
        w.flush().map_err(RunError::from)?;
    }

    let mut users = csv_writer(&dir.join("users.csv"))?;
    for u in 0..split.user_ids.len() {
        users.serialize(UserRow {
            user: ext(&split.user_ids, u).to_string(),
            dropped: split.train[u].is_empty() && split.test[u].is_none(),
        })?;
    }
    users.flush().map_err(RunError::from)?;

    let mut items = csv_writer(&dir.join("items.csv"))?;
    for i in 0..split.item_ids.len() {
        items.serialize(ItemRow { item: ext(&split.item_ids, i).to_string() })?;
    }
    items.flush().map_err(RunError::from)?;
    Ok(())
}

/// Reloads a split written by [`write_splits`], reconstructing indices
/// from the persisted user and item orderings.
pub fn load_splits(dir: &Path) -> Result<SplitDataset, RunError> {
    let mut user_ids = IdMap::default();
    let mut dropped_users = 0usize;
    let mut dropped_flags: Vec<bool> = Vec::new();
    for row in csv_reader(&dir.join("users.csv"))?.deserialize() {
        let row: UserRow = row?;
        user_ids.intern(&row.user);
        dropped_flags.push(row.dropped);
        if row.dropped {
            dropped_users += 1;
        }
    }
    let mut item_ids = IdMap::default();
    for row in csv_reader(&dir.join("items.csv"))?.deserialize() {
        let row: ItemRow = row?;
        item_ids.intern(&row.item);
    }
    let n_users = user_ids.len();
    if n_users == 0 || item_ids.len() == 0 {
        return Err(RunError::Data(format!("split directory {} is empty", dir.display())));
    }

    let resolve = |ids: &IdMap, ext: &str, what: &str| -> Result<usize, RunError> {
        ids.index_of(ext)
            .ok_or_else(|| RunError::Data(format!("{what} '{ext}' not in {what} catalog")))
    };

    let mut train: Vec<Vec<Event>> = vec![Vec::new(); n_users];
    for row in csv_reader(&dir.join("train.csv"))?.deserialize() {
        let row: SplitRow = row?;
        let u = resolve(&user_ids, &row.user, "user")?;
        let i = resolve(&item_ids, &row.item, "item")?;
        train[u].push(Event { item: i, rating: row.rating, timestamp: row.timestamp });
    }
    for history in &mut train {
        history.sort_by(|a, b| (a.timestamp, a.item).cmp(&(b.timestamp, b.item)));
    }

    let load_holdout = |name: &str| -> Result<Vec<Option<Event>>, RunError> {
        let mut out: Vec<Option<Event>> = vec![None; n_users];
        for row in csv_reader(&dir.join(name))?.deserialize() {
            let row: SplitRow = row?;
            let u = resolve(&user_ids, &row.user, "user")?;
            let i = resolve(&item_ids, &row.item, "item")?;
            if out[u].is_some() {
                return Err(RunError::Data(format!("{name}: user '{}' appears twice", row.user)));
            }
            out[u] = Some(Event { item: i, rating: row.rating, timestamp: row.timestamp });
        }
        Ok(out)
    };
    let valid = load_holdout("valid.csv")?;
    let test = load_holdout("test.csv")?;

    for (u, flag) in dropped_flags.iter().enumerate() {
        let populated = !train[u].is_empty() && valid[u].is_some() && test[u].is_some();
        if *flag == populated {
            return Err(RunError::Data(format!(
                "user '{}' is marked dropped={flag} but its split rows disagree",
                ext(&user_ids, u)
            )));
        }
    }

    Ok(SplitDataset { user_ids, item_ids, train, valid, test, dropped_users })
}

/// Loads display titles for every catalog item, keyed by item index.
pub fn load_titles(
    path: &Path,
    format: TitlesFormat,
    items: &IdMap,
) -> Result<TitleTable, RunError> {
    let mut table = TitleTable::new();
    match format {
        TitlesFormat::Movielens => {
            let text = read_text_lossy(path)?;
            for (n, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let mut parts = line.splitn(3, "::");
                let (Some(id), Some(title)) = (parts.next(), parts.next()) else {
                    return Err(RunError::Data(format!(
                        "{}: line {}: expected item::title::genres",
                        path.display(),
                        n + 1
                    )));
                };
                if let Some(idx) = items.index_of(id) {
                    table.insert(idx, title);
                }
            }
        }
        TitlesFormat::Csv => {
            #[derive(Deserialize)]
            struct TitleRow {
                item: String,
                title: String,
            }
            for row in csv_reader(path)?.deserialize() {
                let row: TitleRow = row?;
                if let Some(idx) = items.index_of(&row.item) {
                    table.insert(idx, &row.title);
                }
            }
        }
    }
    Ok(table)
}

/// Fallback titles when no title file is configured: `Item {external}`.
pub fn synthesized_titles(items: &IdMap) -> TitleTable {
    let mut table = TitleTable::new();
    for i in 0..items.len() {
        table.insert(i, &format!("Item {}", ext(items, i)));
    }
    table
}

/// Loads an externally scored `user,item,score` CSV as raw rows.
pub fn load_score_rows(path: &Path) -> Result<Vec<(String, String, f64)>, RunError> {
    #[derive(Deserialize)]
    struct ScoreRow {
        user: String,
        item: String,
        score: f64,
    }
    let mut rows = Vec::new();
    for row in csv_reader(path)?.deserialize() {
        let row: ScoreRow = row?;
        rows.push((row.user, row.item, row.score));
    }
    Ok(rows)
}

#[derive(Serialize, Deserialize)]
struct ProfileRow {
    user: String,
    sparsity: f64,
    auc: f64,
    train_count: usize,
}

/// Writes per-user profiles (`user,sparsity,auc,train_count`).
pub fn write_profiles(
    path: &Path,
    profiles: &[UserProfile],
    users: &IdMap,
) -> Result<(), RunError> {
    let mut w = csv_writer(path)?;
    for p in profiles {
        w.serialize(ProfileRow {
            user: ext(users, p.user).to_string(),
            sparsity: p.sparsity,
            auc: p.auc,
            train_count: p.train_count,
        })?;
    }
    w.flush().map_err(RunError::from)
}

/// Reads profiles back, resolving external user IDs to indices.
pub fn read_profiles(path: &Path, users: &IdMap) -> Result<Vec<UserProfile>, RunError> {
    let mut out = Vec::new();
    for row in csv_reader(path)?.deserialize() {
        let row: ProfileRow = row?;
        let user = users
            .index_of(&row.user)
            .ok_or_else(|| RunError::Data(format!("profiles: unknown user '{}'", row.user)))?;
        out.push(UserProfile {
            user,
            sparsity: row.sparsity,
            auc: row.auc,
            train_count: row.train_count,
        });
    }
    Ok(out)
}

/// Reads a profiles artifact without needing the split: users keep
/// their external IDs and get row-order indices. For re-emitting
/// figures from a run directory alone.
pub fn read_profiles_raw(path: &Path) -> Result<Vec<(String, UserProfile)>, RunError> {
    let mut out = Vec::new();
    for (idx, row) in csv_reader(path)?.deserialize().enumerate() {
        let row: ProfileRow = row?;
        out.push((
            row.user,
            UserProfile { user: idx, sparsity: row.sparsity, auc: row.auc, train_count: row.train_count },
        ));
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct GateRow {
    user: String,
    weak: bool,
    below_perf: bool,
    above_sparsity: bool,
    auc: f64,
    sparsity: f64,
}

/// Writes gate decisions alongside the profile values they were made
/// from (`user,weak,below_perf,above_sparsity,auc,sparsity`). The
/// `above_sparsity` column is what the funnel's sparse stage counts.
pub fn write_gate(
    path: &Path,
    decisions: &[GateDecision],
    profiles: &[UserProfile],
    users: &IdMap,
) -> Result<(), RunError> {
    if decisions.len() != profiles.len() {
        return Err(RunError::Data(format!(
            "gate: {} decisions for {} profiles",
            decisions.len(),
            profiles.len()
        )));
    }
    let mut w = csv_writer(path)?;
    for (d, p) in decisions.iter().zip(profiles) {
        debug_assert_eq!(d.user, p.user);
        w.serialize(GateRow {
            user: ext(users, d.user).to_string(),
            weak: d.weak,
            below_perf: d.below_perf,
            above_sparsity: d.above_sparsity,
            auc: p.auc,
            sparsity: p.sparsity,
        })?;
    }
    w.flush().map_err(RunError::from)
}

/// One parsed gate artifact row.
#[derive(Debug, Clone, PartialEq)]
pub struct GateRecord {
    /// User index.
    pub user: usize,
    /// Final gate verdict.
    pub weak: bool,
    /// Performance conjunct.
    pub below_perf: bool,
    /// Sparsity conjunct.
    pub above_sparsity: bool,
}

/// Reads a gate artifact back, resolving user IDs to indices.
pub fn read_gate(path: &Path, users: &IdMap) -> Result<Vec<GateRecord>, RunError> {
    let mut out = Vec::new();
    for row in csv_reader(path)?.deserialize() {
        let row: GateRow = row?;
        let user = users
            .index_of(&row.user)
            .ok_or_else(|| RunError::Data(format!("gate: unknown user '{}'", row.user)))?;
        out.push(GateRecord {
            user,
            weak: row.weak,
            below_perf: row.below_perf,
            above_sparsity: row.above_sparsity,
        });
    }
    Ok(out)
}

/// Reads a gate artifact's funnel counts — (total, sparse, weak) —
/// without needing the split.
pub fn read_gate_counts(path: &Path) -> Result<(usize, usize, usize), RunError> {
    let (mut total, mut sparse, mut weak) = (0usize, 0usize, 0usize);
    for row in csv_reader(path)?.deserialize() {
        let row: GateRow = row?;
        total += 1;
        sparse += row.above_sparsity as usize;
        weak += row.weak as usize;
    }
    Ok((total, sparse, weak))
}

#[derive(Serialize)]
struct MergedRow<'a> {
    user: &'a str,
    rank: usize,
    item: &'a str,
    tag: &'a str,
}

/// Writes final rankings as one `user,rank,item,tag` row per position.
pub fn write_merged(
    path: &Path,
    rankings: &[(usize, Vec<usize>, &'static str)],
    users: &IdMap,
    items: &IdMap,
) -> Result<(), RunError> {
    let mut w = csv_writer(path)?;
    for (user, ranking, tag) in rankings {
        for (pos, item) in ranking.iter().enumerate() {
            w.serialize(MergedRow {
                user: ext(users, *user),
                rank: pos + 1,
                item: ext(items, *item),
                tag,
            })?;
        }
    }
    w.flush().map_err(RunError::from)
}

/// Serializes one value per line into an open JSON-lines writer.
pub fn write_jsonl_line<W: Write, T: Serialize>(w: &mut W, value: &T) -> Result<(), RunError> {
    let line = serde_json::to_string(value)?;
    w.write_all(line.as_bytes())?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Writes text to a file, creating parent directories as needed.
pub fn write_text(path: &Path, text: &str) -> Result<(), RunError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| RunError::Data(format!("cannot create {}: {e}", parent.display())))?;
    }
    fs::write(path, text)
        .map_err(|e| RunError::Data(format!("cannot write {}: {e}", path.display())))
}

/// Writes the report as pretty-printed JSON with a trailing newline.
pub fn write_report_json(path: &Path, report: &EvalReport) -> Result<(), RunError> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    write_text(path, &text)
}

/// Reads a report back from JSON.
pub fn read_report_json(path: &Path) -> Result<EvalReport, RunError> {
    let text = fs::read_to_string(path)
        .map_err(|e| RunError::Data(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(RunError::from)
}

/// The standard artifact paths inside a run directory.
#[derive(Debug, Clone)]
pub struct RunDir {
    /// The run directory root.
    pub root: PathBuf,
}

impl RunDir {
    /// Wraps a run directory path.
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunDir { root: root.into() }
    }

    /// Effective configuration snapshot.
    pub fn config_snapshot(&self) -> PathBuf {
        self.root.join("config.snapshot")
    }

    /// Per-user profiles CSV.
    pub fn profiles(&self) -> PathBuf {
        self.root.join("profiles.csv")
    }

    /// Gate decisions CSV.
    pub fn gate(&self) -> PathBuf {
        self.root.join("gate.csv")
    }

    /// Rendered prompts, one JSON object per line.
    pub fn prompts(&self) -> PathBuf {
        self.root.join("prompts.jsonl")
    }

    /// Raw backend responses, one JSON object per line.
    pub fn responses(&self) -> PathBuf {
        self.root.join("responses.jsonl")
    }

    /// Final rankings CSV.
    pub fn merged(&self) -> PathBuf {
        self.root.join("merged.csv")
    }

    /// Machine-readable report.
    pub fn report_json(&self) -> PathBuf {
        self.root.join("report.json")
    }

    /// Human-readable report.
    pub fn report_md(&self) -> PathBuf {
        self.root.join("report.md")
    }

    /// Sparsity-versus-AUC scatter data.
    pub fn scatter(&self) -> PathBuf {
        self.root.join("scatter.csv")
    }

    /// Sparsity histogram.
    pub fn hist_sparsity(&self) -> PathBuf {
        self.root.join("hist_sparsity.csv")
    }

    /// Train-count histogram.
    pub fn hist_train_counts(&self) -> PathBuf {
        self.root.join("hist_train_counts.csv")
    }

    /// Weak-user funnel.
    pub fn funnel(&self) -> PathBuf {
        self.root.join("funnel.csv")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;
    use weakrec_core::corpus::{build_dataset, loo_split};

    fn sample_split() -> SplitDataset {
        // u3 has only two interactions and is dropped by the split.
        let text = "\
1::10::5::100\n1::20::4::200\n1::30::3::300\n1::40::2::400\n\
2::10::4::100\n2::30::5::200\n2::20::2::300\n\
3::10::1::50\n3::20::2::60\n";
        let log = parse_movielens(text).unwrap();
        let dataset = build_dataset(&log).unwrap();
        loo_split(&dataset).unwrap()
    }

    #[test]
    fn splits_round_trip_losslessly() {
        let split = sample_split();
        let dir = TempDir::new().unwrap();
        write_splits(dir.path(), &split).unwrap();
        let back = load_splits(dir.path()).unwrap();
        assert_eq!(back, split);
        assert_eq!(back.dropped_users, 1);
    }

    #[test]
    fn split_csvs_have_the_documented_header() {
        let dir = TempDir::new().unwrap();
        write_splits(dir.path(), &sample_split()).unwrap();
        for name in ["train.csv", "valid.csv", "test.csv"] {
            let text = fs::read_to_string(dir.path().join(name)).unwrap();
            assert!(
                text.starts_with("user,item,rating,timestamp\n"),
                "{name} header: {text:?}"
            );
        }
    }

    #[test]
    fn load_splits_rejects_tampered_holdouts() {
        let split = sample_split();
        let dir = TempDir::new().unwrap();
        write_splits(dir.path(), &split).unwrap();
        // Duplicate the test row for the first user.
        let test_path = dir.path().join("test.csv");
        let mut text = fs::read_to_string(&test_path).unwrap();
        let dup = text.lines().nth(1).unwrap().to_string();
        text.push_str(&dup);
        text.push('\n');
        fs::write(&test_path, text).unwrap();
        assert!(load_splits(dir.path()).is_err());
    }

    #[test]
    fn latin1_fallback_decodes_every_byte() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("movies.dat");
        // "Am\xe9lie" in Latin-1 is invalid UTF-8.
        fs::write(&path, b"1::Am\xe9lie (2001)::Comedy\n").unwrap();
        let text = read_text_lossy(&path).unwrap();
        assert_eq!(text, "1::Am\u{e9}lie (2001)::Comedy\n");
    }

    #[test]
    fn movielens_titles_resolve_known_items_only() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("movies.dat");
        fs::write(&path, "10::Alpha::G\n20::Beta: The Sequel::G\n99::Unseen::G\n").unwrap();
        let mut items = IdMap::default();
        items.intern("10");
        items.intern("20");
        let titles = load_titles(&path, TitlesFormat::Movielens, &items).unwrap();
        assert_eq!(titles.get(0), Some("Alpha"));
        assert_eq!(titles.get(1), Some("Beta: The Sequel"));
        assert_eq!(titles.len(), 2);
    }

    #[test]
    fn csv_titles_load() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("titles.csv");
        fs::write(&path, "item,title\n10,\"Comma, The Movie\"\n20,Plain\n").unwrap();
        let mut items = IdMap::default();
        items.intern("10");
        items.intern("20");
        let titles = load_titles(&path, TitlesFormat::Csv, &items).unwrap();
        assert_eq!(titles.get(0), Some("Comma, The Movie"));
        assert_eq!(titles.get(1), Some("Plain"));
    }

    #[test]
    fn synthesized_titles_cover_all_items() {
        let mut items = IdMap::default();
        items.intern("42");
        items.intern("7");
        let titles = synthesized_titles(&items);
        assert_eq!(titles.get(0), Some("Item 42"));
        assert_eq!(titles.get(1), Some("Item 7"));
    }

    #[test]
    fn profiles_round_trip() {
        let split = sample_split();
        let profiles = vec![
            UserProfile { user: 0, sparsity: 0.25, auc: 0.5, train_count: 2 },
            UserProfile { user: 1, sparsity: 0.5, auc: 0.75, train_count: 1 },
        ];
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("profiles.csv");
        write_profiles(&path, &profiles, &split.user_ids).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("user,sparsity,auc,train_count\n"));
        let back = read_profiles(&path, &split.user_ids).unwrap();
        assert_eq!(back, profiles);
    }

    #[test]
    fn gate_round_trip_keeps_reason_columns() {
        let split = sample_split();
        let profiles = vec![
            UserProfile { user: 0, sparsity: 0.99, auc: 0.4, train_count: 2 },
            UserProfile { user: 1, sparsity: 0.10, auc: 0.9, train_count: 1 },
        ];
        let decisions = vec![
            GateDecision { user: 0, weak: true, below_perf: true, above_sparsity: true },
            GateDecision { user: 1, weak: false, below_perf: false, above_sparsity: false },
        ];
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("gate.csv");
        write_gate(&path, &decisions, &profiles, &split.user_ids).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("user,weak,below_perf,above_sparsity,auc,sparsity\n"));
        let back = read_gate(&path, &split.user_ids).unwrap();
        assert_eq!(back.len(), 2);
        assert!(back[0].weak && back[0].above_sparsity);
        assert!(!back[1].weak);
    }

    #[test]
    fn merged_rows_enumerate_ranks_from_one() {
        let split = sample_split();
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("merged.csv");
        write_merged(
            &path,
            &[(0, vec![2, 0, 1], "RS"), (1, vec![1, 2, 0], "LLM")],
            &split.user_ids,
            &split.item_ids,
        )
        .unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("user,rank,item,tag"));
        assert_eq!(lines.next(), Some("1,1,30,RS"));
        assert_eq!(lines.next(), Some("1,2,10,RS"));
        assert_eq!(lines.next(), Some("1,3,20,RS"));
        assert_eq!(lines.next(), Some("2,1,20,LLM"));
    }

    #[test]
    fn score_rows_load_in_order() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("scores.csv");
        fs::write(&path, "user,item,score\n1,10,0.5\n1,20,-1.25\n").unwrap();
        let rows = load_score_rows(&path).unwrap();
        assert_eq!(
            rows,
            vec![("1".into(), "10".into(), 0.5), ("1".into(), "20".into(), -1.25)]
        );
    }

    #[test]
    fn report_json_file_round_trips_and_ends_with_newline() {
        let report = EvalReport {
            config_fingerprint: "f".into(),
            source_tag_counts: Default::default(),
            metrics: weakrec_core::report::ReportMetrics {
                users: weakrec_core::report::StrataCounts { all: 0, weak: 0, non_weak: 0 },
                candidate_pool: weakrec_core::report::CandidatePool {
                    hybrid: weakrec_core::report::Strata {
                        all: Default::default(),
                        weak: Default::default(),
                        non_weak: Default::default(),
                    },
                    rs_only: weakrec_core::report::Strata {
                        all: Default::default(),
                        weak: Default::default(),
                        non_weak: Default::default(),
                    },
                },
                full_pool: weakrec_core::report::FullPool {
                    rs_auc: weakrec_core::report::Strata { all: None, weak: None, non_weak: None },
                },
                significance: weakrec_core::report::Significance::Absent,
            },
        };
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("report.json");
        write_report_json(&path, &report).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.ends_with('\n'));
        assert_eq!(read_report_json(&path).unwrap(), report);
    }
}
