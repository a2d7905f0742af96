//! Model persistence: every trainable model saves to a directory of
//! `meta.toml` plus plain CSV part files, and loads back to an
//! identical scorer.
//!
//! Part files use split-relative indices (the row order of `users.csv`
//! and `items.csv` in the prepared split directory), so a checkpoint is
//! only meaningful next to the split it was trained on. Floats are
//! written with Rust's shortest-round-trip formatting, which parses
//! back to the identical bit pattern — save → load is lossless.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::io::write_text;
use crate::runerr::RunError;
use weakrec_core::corpus::Event;
use weakrec_core::recsys::{
    Bpr, BprConfig, ImportedScores, ItemKnn, ItemKnnConfig, MostPopular, Recommender,
};

/// A fitted model of any supported kind, scoring through one type.
#[derive(Debug, Clone, PartialEq)]
pub enum FittedModel {
    /// Global popularity ranking.
    MostPop(MostPopular),
    /// Item-based neighbourhood model.
    ItemKnn(ItemKnn),
    /// Pairwise-trained matrix factorization.
    Bpr(Bpr),
    /// Externally computed score table.
    Import(ImportedScores),
}

impl Recommender for FittedModel {
    fn name(&self) -> &str {
        match self {
            FittedModel::MostPop(m) => m.name(),
            FittedModel::ItemKnn(m) => m.name(),
            FittedModel::Bpr(m) => m.name(),
            FittedModel::Import(m) => m.name(),
        }
    }

    fn n_items(&self) -> usize {
        match self {
            FittedModel::MostPop(m) => m.n_items(),
            FittedModel::ItemKnn(m) => m.n_items(),
            FittedModel::Bpr(m) => m.n_items(),
            FittedModel::Import(m) => m.n_items(),
        }
    }

    fn score(&self, user: usize) -> Vec<f64> {
        match self {
            FittedModel::MostPop(m) => m.score(user),
            FittedModel::ItemKnn(m) => m.score(user),
            FittedModel::Bpr(m) => m.score(user),
            FittedModel::Import(m) => m.score(user),
        }
    }

    fn score_checked(&self, user: usize) -> Result<Vec<f64>, weakrec_core::error::RecsysError> {
        match self {
            FittedModel::MostPop(m) => m.score_checked(user),
            FittedModel::ItemKnn(m) => m.score_checked(user),
            FittedModel::Bpr(m) => m.score_checked(user),
            FittedModel::Import(m) => m.score_checked(user),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Meta {
    kind: String,
    n_items: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    itemknn: Option<KnnMeta>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bpr: Option<BprMeta>,
}

#[derive(Serialize, Deserialize)]
struct KnnMeta {
    k: usize,
    shrink: f64,
    binarize: bool,
}

#[derive(Serialize, Deserialize)]
struct BprMeta {
    d: usize,
    lr: f64,
    reg: f64,
    epochs: usize,
    seed: u64,
    n_users: usize,
}

#[derive(Serialize, Deserialize)]
struct PopularityRow {
    item: usize,
    score: f64,
}

#[derive(Serialize, Deserialize)]
struct SimilarityRow {
    item: usize,
    neighbor: usize,
    sim: f64,
}

#[derive(Serialize, Deserialize)]
struct FactorRow {
    index: usize,
    dim: usize,
    value: f64,
}

#[derive(Serialize, Deserialize)]
struct BiasRow {
    item: usize,
    bias: f64,
}

fn csv_out(path: &Path) -> Result<csv::Writer<fs::File>, RunError> {
    let file = fs::File::create(path)
        .map_err(|e| RunError::Data(format!("cannot create {}: {e}", path.display())))?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_in(path: &Path) -> Result<csv::Reader<fs::File>, RunError> {
    let file = fs::File::open(path)
        .map_err(|e| RunError::Data(format!("cannot open {}: {e}", path.display())))?;
    Ok(csv::Reader::from_reader(file))
}

/// Reads a factor part file into a dense row-major matrix.
fn load_matrix(path: &Path, rows: usize, d: usize) -> Result<Vec<f64>, RunError> {
    let mut out = vec![f64::NAN; rows * d];
    let mut seen = vec![false; rows * d];
    for row in csv_in(path)?.deserialize() {
        let row: FactorRow = row?;
        if row.index >= rows || row.dim >= d {
            return Err(RunError::Data(format!(
                "{}: entry ({}, {}) outside a {rows}x{d} matrix",
                path.display(),
                row.index,
                row.dim
            )));
        }
        let flat = row.index * d + row.dim;
        if seen[flat] {
            return Err(RunError::Data(format!(
                "{}: duplicate entry ({}, {})",
                path.display(),
                row.index,
                row.dim
            )));
        }
        seen[flat] = true;
        out[flat] = row.value;
    }
    if let Some(missing) = seen.iter().position(|&s| !s) {
        return Err(RunError::Data(format!(
            "{}: missing entry ({}, {})",
            path.display(),
            missing / d,
            missing % d
        )));
    }
    Ok(out)
}

fn write_matrix(path: &Path, values: &[f64], d: usize) -> Result<(), RunError> {
    let mut w = csv_out(path)?;
    for (flat, &value) in values.iter().enumerate() {
        w.serialize(FactorRow { index: flat / d, dim: flat % d, value })?;
    }
    w.flush().map_err(RunError::from)
}

impl FittedModel {
    /// Stable kind label used in `meta.toml`.
    pub fn kind_name(&self) -> &'static str {
        match self {
            FittedModel::MostPop(_) => "mostpop",
            FittedModel::ItemKnn(_) => "itemknn",
            FittedModel::Bpr(_) => "bpr",
            FittedModel::Import(_) => "import",
        }
    }

    /// Saves the model under `dir`.
    ///
    /// Imported score tables are views of an external file and are not
    /// saveable; pointing the next run at the same file is the
    /// checkpoint.
    pub fn save(&self, dir: &Path) -> Result<(), RunError> {
        fs::create_dir_all(dir)
            .map_err(|e| RunError::Data(format!("cannot create {}: {e}", dir.display())))?;
        let mut meta = Meta { kind: self.kind_name().into(), n_items: self.n_items(), itemknn: None, bpr: None };
        match self {
            FittedModel::MostPop(m) => {
                let mut w = csv_out(&dir.join("popularity.csv"))?;
                // Popularity is user-independent, so any user's score
                // vector is the count table itself.
                for (item, &score) in m.score(0).iter().enumerate() {
                    w.serialize(PopularityRow { item, score })?;
                }
                w.flush().map_err(RunError::from)?;
            }
            FittedModel::ItemKnn(m) => {
                meta.itemknn = Some(KnnMeta {
                    k: m.config().k,
                    shrink: m.config().shrink,
                    binarize: m.config().binarize,
                });
                let mut w = csv_out(&dir.join("similarities.csv"))?;
                for item in 0..m.n_items() {
                    for &(neighbor, sim) in m.sim_row(item) {
                        w.serialize(SimilarityRow { item, neighbor, sim })?;
                    }
                }
                w.flush().map_err(RunError::from)?;
            }
            FittedModel::Bpr(m) => {
                meta.bpr = Some(BprMeta {
                    d: m.cfg.d,
                    lr: m.cfg.lr,
                    reg: m.cfg.reg,
                    epochs: m.cfg.epochs,
                    seed: m.cfg.seed,
                    n_users: m.n_users(),
                });
                write_matrix(&dir.join("user_factors.csv"), &m.p, m.cfg.d)?;
                write_matrix(&dir.join("item_factors.csv"), &m.q, m.cfg.d)?;
                let mut w = csv_out(&dir.join("item_biases.csv"))?;
                for (item, &bias) in m.b.iter().enumerate() {
                    w.serialize(BiasRow { item, bias })?;
                }
                w.flush().map_err(RunError::from)?;
            }
            FittedModel::Import(_) => {
                return Err(RunError::Usage(
                    "imported score tables cannot be checkpointed; re-point model.scores at the \
                     original file instead"
                        .into(),
                ));
            }
        }
        let text = toml::to_string_pretty(&meta)
            .map_err(|e| RunError::Data(format!("cannot serialize checkpoint meta: {e}")))?;
        write_text(&dir.join("meta.toml"), &text)
    }

    /// Loads a model saved by [`FittedModel::save`].
    ///
    /// `train` must be the same split's train histories the model was
    /// fitted on; neighbourhood models score through them.
    pub fn load(dir: &Path, train: &[Vec<Event>]) -> Result<FittedModel, RunError> {
        let meta_path = dir.join("meta.toml");
        let text = fs::read_to_string(&meta_path)
            .map_err(|e| RunError::Data(format!("cannot read {}: {e}", meta_path.display())))?;
        let meta: Meta = toml::from_str(&text)
            .map_err(|e| RunError::Data(format!("{}: {e}", meta_path.display())))?;
        match meta.kind.as_str() {
            "mostpop" => {
                let mut scores = vec![f64::NAN; meta.n_items];
                let mut seen = vec![false; meta.n_items];
                for row in csv_in(&dir.join("popularity.csv"))?.deserialize() {
                    let row: PopularityRow = row?;
                    if row.item >= meta.n_items || seen[row.item] {
                        return Err(RunError::Data(format!(
                            "popularity.csv: bad or duplicate item {}",
                            row.item
                        )));
                    }
                    seen[row.item] = true;
                    scores[row.item] = row.score;
                }
                if let Some(missing) = seen.iter().position(|&s| !s) {
                    return Err(RunError::Data(format!("popularity.csv: missing item {missing}")));
                }
                Ok(FittedModel::MostPop(MostPopular::from_scores(scores)?))
            }
            "itemknn" => {
                let knn = meta.itemknn.ok_or_else(|| {
                    RunError::Data("meta.toml: itemknn checkpoint lacks [itemknn] section".into())
                })?;
                let cfg = ItemKnnConfig { k: knn.k, shrink: knn.shrink, binarize: knn.binarize };
                let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); meta.n_items];
                for row in csv_in(&dir.join("similarities.csv"))?.deserialize() {
                    let row: SimilarityRow = row?;
                    if row.item >= meta.n_items {
                        return Err(RunError::Data(format!(
                            "similarities.csv: item {} outside catalog",
                            row.item
                        )));
                    }
                    rows[row.item].push((row.neighbor, row.sim));
                }
                Ok(FittedModel::ItemKnn(ItemKnn::from_parts(cfg, train, meta.n_items, rows)?))
            }
            "bpr" => {
                let bpr = meta.bpr.ok_or_else(|| {
                    RunError::Data("meta.toml: bpr checkpoint lacks [bpr] section".into())
                })?;
                let cfg = BprConfig {
                    d: bpr.d,
                    lr: bpr.lr,
                    reg: bpr.reg,
                    epochs: bpr.epochs,
                    seed: bpr.seed,
                };
                let p = load_matrix(&dir.join("user_factors.csv"), bpr.n_users, bpr.d)?;
                let q = load_matrix(&dir.join("item_factors.csv"), meta.n_items, bpr.d)?;
                let mut b = vec![f64::NAN; meta.n_items];
                let mut seen = vec![false; meta.n_items];
                for row in csv_in(&dir.join("item_biases.csv"))?.deserialize() {
                    let row: BiasRow = row?;
                    if row.item >= meta.n_items || seen[row.item] {
                        return Err(RunError::Data(format!(
                            "item_biases.csv: bad or duplicate item {}",
                            row.item
                        )));
                    }
                    seen[row.item] = true;
                    b[row.item] = row.bias;
                }
                if let Some(missing) = seen.iter().position(|&s| !s) {
                    return Err(RunError::Data(format!("item_biases.csv: missing item {missing}")));
                }
                Ok(FittedModel::Bpr(Bpr::from_parts(cfg, p, q, b)?))
            }
            other => Err(RunError::Data(format!("meta.toml: unknown model kind '{other}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;
    use weakrec_core::corpus::{build_dataset, loo_split, parse_movielens};

    fn split_train() -> Vec<Vec<Event>> {
        let text = "\
1::10::5::100\n1::20::4::200\n1::30::3::300\n1::40::2::400\n\
2::10::4::100\n2::30::5::200\n2::20::2::300\n2::40::1::400\n\
3::20::5::100\n3::40::4::200\n3::10::3::300\n3::30::2::400\n";
        let log = parse_movielens(text).unwrap();
        let split = loo_split(&build_dataset(&log).unwrap()).unwrap();
        split.train
    }

    fn scores_match(a: &FittedModel, b: &FittedModel, users: usize) {
        for u in 0..users {
            assert_eq!(a.score(u), b.score(u), "user {u} scores differ");
        }
    }

    #[test]
    fn mostpop_round_trips() {
        let train = split_train();
        let model = FittedModel::MostPop(MostPopular::fit(&train, 4).unwrap());
        let dir = TempDir::new().unwrap();
        model.save(dir.path()).unwrap();
        let back = FittedModel::load(dir.path(), &train).unwrap();
        assert_eq!(back, model);
        scores_match(&model, &back, 3);
    }

    #[test]
    fn itemknn_round_trips() {
        let train = split_train();
        let cfg = ItemKnnConfig { k: 3, shrink: 0.5, binarize: false };
        let model = FittedModel::ItemKnn(ItemKnn::fit(&train, 4, cfg).unwrap());
        let dir = TempDir::new().unwrap();
        model.save(dir.path()).unwrap();
        let back = FittedModel::load(dir.path(), &train).unwrap();
        assert_eq!(back, model);
        scores_match(&model, &back, 3);
    }

    #[test]
    fn bpr_round_trips_bit_exactly() {
        let train = split_train();
        let cfg = BprConfig { d: 4, lr: 0.05, reg: 0.01, epochs: 10, seed: 9 };
        let model = FittedModel::Bpr(Bpr::fit(&train, 4, cfg).unwrap());
        let dir = TempDir::new().unwrap();
        model.save(dir.path()).unwrap();
        let back = FittedModel::load(dir.path(), &train).unwrap();
        // Equality here is bitwise on every factor; shortest-round-trip
        // float formatting makes that hold.
        assert_eq!(back, model);
        scores_match(&model, &back, 3);
    }

    #[test]
    fn import_refuses_to_checkpoint() {
        let train = split_train();
        let log = parse_movielens("1::10::5::100\n").unwrap();
        let ds = build_dataset_for_import(&log);
        let rows = vec![("1".to_string(), "10".to_string(), 0.5)];
        let model = FittedModel::Import(
            ImportedScores::from_rows("import", &rows, &ds.0, &ds.1).unwrap(),
        );
        let dir = TempDir::new().unwrap();
        let err = model.save(dir.path()).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        drop(train);
    }

    fn build_dataset_for_import(
        log: &weakrec_core::corpus::InteractionLog,
    ) -> (weakrec_core::corpus::IdMap, weakrec_core::corpus::IdMap) {
        let mut users = weakrec_core::corpus::IdMap::default();
        let mut items = weakrec_core::corpus::IdMap::default();
        for r in &log.records {
            users.intern(&r.user);
            items.intern(&r.item);
        }
        (users, items)
    }

    #[test]
    fn truncated_part_file_is_rejected() {
        let train = split_train();
        let cfg = BprConfig { d: 2, lr: 0.05, reg: 0.01, epochs: 2, seed: 1 };
        let model = FittedModel::Bpr(Bpr::fit(&train, 4, cfg).unwrap());
        let dir = TempDir::new().unwrap();
        model.save(dir.path()).unwrap();
        // Drop the last line of the user factor file.
        let path = dir.path().join("user_factors.csv");
        let text = fs::read_to_string(&path).unwrap();
        let trimmed: Vec<&str> = text.lines().collect();
        fs::write(&path, trimmed[..trimmed.len() - 1].join("\n")).unwrap();
        let err = FittedModel::load(dir.path(), &train).unwrap_err();
        assert!(err.to_string().contains("missing entry"), "{err}");
    }

    #[test]
    fn unknown_kind_is_rejected() {
        let dir = TempDir::new().unwrap();
        fs::write(dir.path().join("meta.toml"), "kind = \"magic\"\nn_items = 3\n").unwrap();
        let err = FittedModel::load(dir.path(), &split_train()).unwrap_err();
        assert!(err.to_string().contains("unknown model kind"), "{err}");
    }
}
