//! Classical recommenders behind one scoring interface.
//!
//! All models share the [`Recommender`] trait: fit once over the train
//! histories, then produce a full vector of item scores for any user.
//! Fitting is single-threaded and seeded where stochastic, so identical
//! inputs always yield identical models; scoring is read-only and safe
//! to call from many threads.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Event, IdMap};
use crate::error::RecsysError;

/// A fitted top-k recommender.
pub trait Recommender {
    /// Human-readable model name for reports and artifacts.
    fn name(&self) -> &str;

    /// Catalog size N the model was fitted over.
    fn n_items(&self) -> usize;

    /// Scores every item for `user`: a vector of exactly N values,
    /// higher = more preferred. All values are finite, except that
    /// imported score tables mark absent entries with `-∞` so they rank
    /// last.
    fn score(&self, user: usize) -> Vec<f64>;

    /// Like [`Recommender::score`], but fails when the model cannot
    /// cover the user at all (only imported score tables do).
    fn score_checked(&self, user: usize) -> Result<Vec<f64>, RecsysError> {
        Ok(self.score(user))
    }
}

/// Sorts `pool` by score descending, breaking ties by item index
/// ascending.
pub fn rank(scores: &[f64], pool: &[usize]) -> Vec<usize> {
    let mut out = pool.to_vec();
    out.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    out
}

/// Popularity baseline: every user sees items ranked by interaction
/// count.
#[derive(Debug, Clone, PartialEq)]
pub struct MostPopular {
    counts: Vec<f64>,
}

impl MostPopular {
    /// Rebuilds the baseline from persisted per-item counts.
    pub fn from_scores(counts: Vec<f64>) -> Result<Self, RecsysError> {
        if counts.is_empty() {
            return Err(RecsysError::ShapeMismatch { what: "empty popularity vector".into() });
        }
        Ok(MostPopular { counts })
    }

    /// Counts train interactions per item.
    pub fn fit(train: &[Vec<Event>], n_items: usize) -> Result<Self, RecsysError> {
        if train.iter().all(Vec::is_empty) {
            return Err(RecsysError::EmptyTrain);
        }
        let mut counts = alloc::vec![0.0; n_items];
        for history in train {
            for e in history {
                counts[e.item] += 1.0;
            }
        }
        Ok(MostPopular { counts })
    }
}

impl Recommender for MostPopular {
    fn name(&self) -> &str {
        "most-popular"
    }

    fn n_items(&self) -> usize {
        self.counts.len()
    }

    fn score(&self, _user: usize) -> Vec<f64> {
        self.counts.clone()
    }
}

/// Hyperparameters for item-based k-nearest-neighbour fitting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ItemKnnConfig {
    /// Neighbours kept per item row.
    pub k: usize,
    /// Shrinkage added to the similarity denominator.
    pub shrink: f64,
    /// Use 1.0 instead of the explicit rating as the interaction weight.
    pub binarize: bool,
}

impl Default for ItemKnnConfig {
    fn default() -> Self {
        ItemKnnConfig { k: 100, shrink: 0.0, binarize: false }
    }
}

/// Item-based collaborative filtering with cosine similarity and
/// shrinkage: `sim(i,j) = (r_i·r_j) / (‖r_i‖‖r_j‖ + shrink)`, each item
/// keeping only its `k` most similar neighbours.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemKnn {
    cfg: ItemKnnConfig,
    n_items: usize,
    /// Per-user (item, weight) interactions from fit time.
    user_items: Vec<Vec<(usize, f64)>>,
    /// Truncated similarity rows: `rows[i]` holds i's top-k neighbours
    /// as (neighbour, similarity), sorted by similarity descending.
    rows: Vec<Vec<(usize, f64)>>,
    /// Transpose of `rows` for scoring: `incoming[j]` lists the items i
    /// that keep j as a neighbour.
    incoming: Vec<Vec<(usize, f64)>>,
}

impl ItemKnn {
    /// Fits the similarity matrix from train histories.
    pub fn fit(train: &[Vec<Event>], n_items: usize, cfg: ItemKnnConfig) -> Result<Self, RecsysError> {
        if train.iter().all(Vec::is_empty) {
            return Err(RecsysError::EmptyTrain);
        }
        let weight = |e: &Event| if cfg.binarize { 1.0 } else { e.rating };
        let user_items: Vec<Vec<(usize, f64)>> = train
            .iter()
            .map(|h| h.iter().map(|e| (e.item, weight(e))).collect())
            .collect();
        let mut raters: Vec<Vec<(usize, f64)>> = alloc::vec![Vec::new(); n_items];
        for (u, items) in user_items.iter().enumerate() {
            for &(i, w) in items {
                raters[i].push((u, w));
            }
        }
        let norms: Vec<f64> = raters
            .iter()
            .map(|rs| libm::sqrt(rs.iter().map(|&(_, w)| w * w).sum()))
            .collect();

        let mut rows: Vec<Vec<(usize, f64)>> = alloc::vec![Vec::new(); n_items];
        let mut acc = alloc::vec![0.0f64; n_items];
        let mut touched: Vec<usize> = Vec::new();
        for i in 0..n_items {
            for &(u, w) in &raters[i] {
                for &(j, wj) in &user_items[u] {
                    if acc[j] == 0.0 {
                        touched.push(j);
                    }
                    acc[j] += w * wj;
                }
            }
            let mut row: Vec<(usize, f64)> = Vec::with_capacity(touched.len());
            for &j in &touched {
                if j != i && acc[j] > 0.0 {
                    row.push((j, acc[j] / (norms[i] * norms[j] + cfg.shrink)));
                }
                acc[j] = 0.0;
            }
            touched.clear();
            row.sort_by(|&(ja, sa), &(jb, sb)| sb.total_cmp(&sa).then(ja.cmp(&jb)));
            row.truncate(cfg.k);
            rows[i] = row;
        }

        let mut incoming: Vec<Vec<(usize, f64)>> = alloc::vec![Vec::new(); n_items];
        for (i, row) in rows.iter().enumerate() {
            for &(j, s) in row {
                incoming[j].push((i, s));
            }
        }
        Ok(ItemKnn { cfg, n_items, user_items, rows, incoming })
    }

    /// Rebuilds a fitted model from persisted similarity rows plus the
    /// train histories whose interactions drive scoring.
    pub fn from_parts(
        cfg: ItemKnnConfig,
        train: &[Vec<Event>],
        n_items: usize,
        rows: Vec<Vec<(usize, f64)>>,
    ) -> Result<Self, RecsysError> {
        if train.iter().all(Vec::is_empty) {
            return Err(RecsysError::EmptyTrain);
        }
        if rows.len() != n_items {
            return Err(RecsysError::ShapeMismatch {
                what: alloc::format!("{} similarity rows for {n_items} items", rows.len()),
            });
        }
        if let Some((i, &(j, _))) =
            rows.iter().enumerate().find_map(|(i, r)| r.iter().find(|&&(j, _)| j >= n_items).map(|e| (i, e)))
        {
            return Err(RecsysError::ShapeMismatch {
                what: alloc::format!("row {i} references neighbour {j} beyond catalog size {n_items}"),
            });
        }
        let weight = |e: &Event| if cfg.binarize { 1.0 } else { e.rating };
        let user_items: Vec<Vec<(usize, f64)>> = train
            .iter()
            .map(|h| h.iter().map(|e| (e.item, weight(e))).collect())
            .collect();
        let mut incoming: Vec<Vec<(usize, f64)>> = alloc::vec![Vec::new(); n_items];
        for (i, row) in rows.iter().enumerate() {
            for &(j, s) in row {
                incoming[j].push((i, s));
            }
        }
        Ok(ItemKnn { cfg, n_items, user_items, rows, incoming })
    }

    /// The hyperparameters the model was fitted with.
    pub fn config(&self) -> ItemKnnConfig {
        self.cfg
    }

    /// The truncated similarity row of item `i`, sorted by similarity
    /// descending.
    pub fn sim_row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    /// Similarity between `i` and `j` as kept in i's row (0.0 when
    /// truncated away).
    pub fn similarity(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .iter()
            .find(|&&(n, _)| n == j)
            .map(|&(_, s)| s)
            .unwrap_or(0.0)
    }
}

impl Recommender for ItemKnn {
    fn name(&self) -> &str {
        "itemknn"
    }

    fn n_items(&self) -> usize {
        self.n_items
    }

    fn score(&self, user: usize) -> Vec<f64> {
        let mut scores = alloc::vec![0.0; self.n_items];
        for &(j, w) in &self.user_items[user] {
            for &(i, s) in &self.incoming[j] {
                scores[i] += s * w;
            }
        }
        scores
    }
}

/// Hyperparameters for pairwise-ranking matrix factorization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BprConfig {
    /// Latent dimension.
    pub d: usize,
    /// SGD learning rate.
    pub lr: f64,
    /// L2 regularization coefficient.
    pub reg: f64,
    /// Passes over the data; one epoch draws `|train|` triples.
    pub epochs: usize,
    /// RNG seed controlling initialization and sampling.
    pub seed: u64,
}

impl Default for BprConfig {
    fn default() -> Self {
        BprConfig { d: 64, lr: 5e-3, reg: 0.01, epochs: 30, seed: 42 }
    }
}

/// Matrix factorization trained on sampled (user, positive, negative)
/// triples to maximize `Σ ln σ(x_ui − x_uj) − reg‖Θ‖²`, with
/// `x_ui = P[u]·Q[i] + b[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bpr {
    /// Configuration used at fit time.
    pub cfg: BprConfig,
    /// User factors, row-major `M × d`.
    pub p: Vec<f64>,
    /// Item factors, row-major `N × d`.
    pub q: Vec<f64>,
    /// Item biases, length N.
    pub b: Vec<f64>,
    n_users: usize,
    n_items: usize,
}

/// Analytic gradient of `ln σ(x_uij)` for one sampled triple, excluding
/// the regularization term.
#[derive(Debug, Clone, PartialEq)]
pub struct TripleGradient {
    /// ∂/∂P[u] = σ(−x)·(Q[i] − Q[j]).
    pub d_pu: Vec<f64>,
    /// ∂/∂Q[i] = σ(−x)·P[u].
    pub d_qi: Vec<f64>,
    /// ∂/∂Q[j] = −σ(−x)·P[u].
    pub d_qj: Vec<f64>,
    /// ∂/∂b[i] = σ(−x).
    pub d_bi: f64,
    /// ∂/∂b[j] = −σ(−x).
    pub d_bj: f64,
}

/// Numerically stable `ln σ(x)`.
fn ln_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -libm::log1p(libm::exp(-x))
    } else {
        x - libm::log1p(libm::exp(x))
    }
}

impl Bpr {
    /// Trains by SGD over uniformly sampled triples: a random train
    /// interaction supplies (u, i⁺), and j⁻ is drawn uniformly from the
    /// user's non-interacted items by rejection. With `epochs = 0` the
    /// model is the seeded random initialization (factors drawn from
    /// N(0, 0.01), biases zero).
    pub fn fit(train: &[Vec<Event>], n_items: usize, cfg: BprConfig) -> Result<Self, RecsysError> {
        let pairs: Vec<(usize, usize)> = train
            .iter()
            .enumerate()
            .flat_map(|(u, h)| h.iter().map(move |e| (u, e.item)))
            .collect();
        if pairs.is_empty() {
            return Err(RecsysError::EmptyTrain);
        }
        let n_users = train.len();
        let mut item_sets: Vec<Vec<usize>> = train
            .iter()
            .map(|h| h.iter().map(|e| e.item).collect::<Vec<_>>())
            .collect();
        for s in &mut item_sets {
            s.sort_unstable();
            s.dedup();
        }

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut normal = || {
            // Box–Muller from two uniform draws; deterministic under the
            // seeded generator.
            let u1 = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            let u2 = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            let u1 = if u1 <= 0.0 { f64::MIN_POSITIVE } else { u1 };
            libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * core::f64::consts::PI * u2)
        };
        let mut p = alloc::vec![0.0; n_users * cfg.d];
        let mut q = alloc::vec![0.0; n_items * cfg.d];
        for v in p.iter_mut().chain(q.iter_mut()) {
            *v = 0.1 * normal();
        }
        let b = alloc::vec![0.0; n_items];

        let mut model = Bpr { cfg, p, q, b, n_users, n_items };
        for _ in 0..cfg.epochs {
            for _ in 0..pairs.len() {
                let (u, i) = pairs[rng.gen_range(0..pairs.len())];
                if item_sets[u].len() >= n_items {
                    continue; // no negative item exists for this user
                }
                let j = loop {
                    let j = rng.gen_range(0..n_items);
                    if item_sets[u].binary_search(&j).is_err() {
                        break j;
                    }
                };
                model.sgd_step(u, i, j);
            }
        }
        Ok(model)
    }

    fn dot(&self, u: usize, i: usize) -> f64 {
        let d = self.cfg.d;
        let pu = &self.p[u * d..(u + 1) * d];
        let qi = &self.q[i * d..(i + 1) * d];
        pu.iter().zip(qi).map(|(a, b)| a * b).sum()
    }

    /// `x_uij = x_ui − x_uj`, the score margin of one triple.
    pub fn margin(&self, u: usize, i: usize, j: usize) -> f64 {
        self.dot(u, i) - self.dot(u, j) + self.b[i] - self.b[j]
    }

    /// `ln σ(x_uij)`: the per-triple objective (regularization excluded).
    pub fn triple_objective(&self, u: usize, i: usize, j: usize) -> f64 {
        ln_sigmoid(self.margin(u, i, j))
    }

    /// Analytic gradient of [`Bpr::triple_objective`] w.r.t. every
    /// parameter the triple touches.
    pub fn triple_gradient(&self, u: usize, i: usize, j: usize) -> TripleGradient {
        let d = self.cfg.d;
        let x = self.margin(u, i, j);
        let g = 1.0 / (1.0 + libm::exp(x)); // σ(−x)
        let pu = &self.p[u * d..(u + 1) * d];
        let qi = &self.q[i * d..(i + 1) * d];
        let qj = &self.q[j * d..(j + 1) * d];
        TripleGradient {
            d_pu: qi.iter().zip(qj).map(|(a, b)| g * (a - b)).collect(),
            d_qi: pu.iter().map(|&v| g * v).collect(),
            d_qj: pu.iter().map(|&v| -g * v).collect(),
            d_bi: g,
            d_bj: -g,
        }
    }

    fn sgd_step(&mut self, u: usize, i: usize, j: usize) {
        let d = self.cfg.d;
        let lr = self.cfg.lr;
        let reg = self.cfg.reg;
        let x = self.margin(u, i, j);
        let g = 1.0 / (1.0 + libm::exp(x)); // σ(−x)
        for f in 0..d {
            let pu = self.p[u * d + f];
            let qi = self.q[i * d + f];
            let qj = self.q[j * d + f];
            self.p[u * d + f] += lr * (g * (qi - qj) - reg * pu);
            self.q[i * d + f] += lr * (g * pu - reg * qi);
            self.q[j * d + f] += lr * (-g * pu - reg * qj);
        }
        self.b[i] += lr * (g - reg * self.b[i]);
        self.b[j] += lr * (-g - reg * self.b[j]);
    }

    /// Number of users the model covers.
    pub fn n_users(&self) -> usize {
        self.n_users
    }

    /// Rebuilds a model from persisted factor matrices and biases.
    pub fn from_parts(
        cfg: BprConfig,
        p: Vec<f64>,
        q: Vec<f64>,
        b: Vec<f64>,
    ) -> Result<Self, RecsysError> {
        let d = cfg.d;
        if d == 0 || p.is_empty() || p.len() % d != 0 {
            return Err(RecsysError::ShapeMismatch {
                what: alloc::format!("user factor length {} not a positive multiple of d={d}", p.len()),
            });
        }
        if q.len() % d != 0 || q.len() / d != b.len() || b.is_empty() {
            return Err(RecsysError::ShapeMismatch {
                what: alloc::format!(
                    "item factors ({}) and biases ({}) disagree for d={d}",
                    q.len(),
                    b.len()
                ),
            });
        }
        let n_users = p.len() / d;
        let n_items = b.len();
        Ok(Bpr { cfg, p, q, b, n_users, n_items })
    }
}

impl Recommender for Bpr {
    fn name(&self) -> &str {
        "bpr"
    }

    fn n_items(&self) -> usize {
        self.n_items
    }

    fn score(&self, user: usize) -> Vec<f64> {
        (0..self.n_items).map(|i| self.dot(user, i) + self.b[i]).collect()
    }
}

/// Externally computed scores loaded from a `user,item,score` table,
/// standing in for models this crate does not train.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportedScores {
    name: String,
    n_items: usize,
    /// Per-user sparse rows sorted by item index; `None` = no row at all.
    rows: Vec<Option<Vec<(usize, f64)>>>,
}

impl ImportedScores {
    /// Resolves external-ID rows against the dataset maps.
    ///
    /// Rows are `(user, item, score)` with 1-based positions used in
    /// error messages. Unknown IDs and duplicate (user, item) pairs are
    /// rejected.
    pub fn from_rows(
        name: &str,
        rows: &[(String, String, f64)],
        user_ids: &IdMap,
        item_ids: &IdMap,
    ) -> Result<Self, RecsysError> {
        let mut resolved: Vec<Option<Vec<(usize, f64)>>> = alloc::vec![None; user_ids.len()];
        for (idx, (user, item, score)) in rows.iter().enumerate() {
            let line = idx + 1;
            let u = user_ids
                .index_of(user)
                .ok_or_else(|| RecsysError::UnknownUser { line, id: user.clone() })?;
            let i = item_ids
                .index_of(item)
                .ok_or_else(|| RecsysError::UnknownItem { line, id: item.clone() })?;
            let row = resolved[u].get_or_insert_with(Vec::new);
            if row.iter().any(|&(existing, _)| existing == i) {
                return Err(RecsysError::DuplicateScore { line });
            }
            row.push((i, *score));
        }
        for row in resolved.iter_mut().flatten() {
            row.sort_unstable_by_key(|&(i, _)| i);
        }
        Ok(ImportedScores { name: String::from(name), n_items: item_ids.len(), rows: resolved })
    }
}

impl Recommender for ImportedScores {
    fn name(&self) -> &str {
        &self.name
    }

    fn n_items(&self) -> usize {
        self.n_items
    }

    /// Imported values where present; `-∞` elsewhere so absent items
    /// rank last.
    fn score(&self, user: usize) -> Vec<f64> {
        let mut scores = alloc::vec![f64::NEG_INFINITY; self.n_items];
        if let Some(row) = &self.rows[user] {
            for &(i, s) in row {
                scores[i] = s;
            }
        }
        scores
    }

    fn score_checked(&self, user: usize) -> Result<Vec<f64>, RecsysError> {
        if self.rows[user].is_none() {
            return Err(RecsysError::UserNotCovered { user });
        }
        Ok(self.score(user))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(item: usize, rating: f64, timestamp: i64) -> Event {
        Event { item, rating, timestamp }
    }

    #[test]
    fn rank_sorts_descending_with_index_ties() {
        let scores = [0.2, 0.9, 0.9, 0.1];
        assert_eq!(rank(&scores, &[0, 1]), alloc::vec![1, 0]);
        assert_eq!(rank(&scores, &[2, 1, 3]), alloc::vec![1, 2, 3]);
        assert_eq!(rank(&scores, &[3]), alloc::vec![3]);
    }

    #[test]
    fn most_popular_ranks_by_count_for_every_user() {
        // i0 appears 3 times, i1 twice, i2 never.
        let train = alloc::vec![
            alloc::vec![ev(0, 5.0, 1), ev(1, 4.0, 2)],
            alloc::vec![ev(0, 3.0, 1), ev(1, 3.0, 2)],
            alloc::vec![ev(0, 2.0, 1)],
        ];
        let model = MostPopular::fit(&train, 3).unwrap();
        for user in 0..3 {
            let scores = model.score(user);
            assert_eq!(rank(&scores, &[0, 1, 2]), alloc::vec![0, 1, 2]);
            assert_eq!(scores[2], 0.0);
        }
    }

    #[test]
    fn most_popular_all_equal_counts_tie_to_index_order() {
        let train = alloc::vec![alloc::vec![ev(0, 5.0, 1), ev(1, 5.0, 2), ev(2, 5.0, 3)]];
        let model = MostPopular::fit(&train, 3).unwrap();
        assert_eq!(rank(&model.score(0), &[2, 0, 1]), alloc::vec![0, 1, 2]);
    }

    #[test]
    fn most_popular_empty_train_errors() {
        let train: Vec<Vec<Event>> = alloc::vec![Vec::new()];
        assert_eq!(MostPopular::fit(&train, 1).unwrap_err(), RecsysError::EmptyTrain);
    }

    #[test]
    fn itemknn_identical_vectors_similarity_one() {
        // Items 0 and 1 rated identically by both users.
        let train = alloc::vec![
            alloc::vec![ev(0, 4.0, 1), ev(1, 4.0, 2)],
            alloc::vec![ev(0, 2.0, 1), ev(1, 2.0, 2)],
        ];
        let model =
            ItemKnn::fit(&train, 2, ItemKnnConfig { k: 10, shrink: 0.0, binarize: false }).unwrap();
        assert!((model.similarity(0, 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn itemknn_disjoint_raters_similarity_zero() {
        let train = alloc::vec![
            alloc::vec![ev(0, 4.0, 1)],
            alloc::vec![ev(1, 4.0, 1)],
        ];
        let model = ItemKnn::fit(&train, 2, ItemKnnConfig::default()).unwrap();
        assert_eq!(model.similarity(0, 1), 0.0);
        assert!(model.sim_row(0).is_empty());
    }

    #[test]
    fn itemknn_hand_computed_shrinkage() {
        // r_i = (5, 0), r_j = (5, 5): sim = 25/(5·√50) without shrink,
        // 25/(5·√50 + 1) with shrink 1.
        let train = alloc::vec![
            alloc::vec![ev(0, 5.0, 1), ev(1, 5.0, 2)],
            alloc::vec![ev(1, 5.0, 1)],
        ];
        let plain =
            ItemKnn::fit(&train, 2, ItemKnnConfig { k: 10, shrink: 0.0, binarize: false }).unwrap();
        assert!((plain.similarity(0, 1) - 0.7071067811865475).abs() < 1e-12);
        let shrunk =
            ItemKnn::fit(&train, 2, ItemKnnConfig { k: 10, shrink: 1.0, binarize: false }).unwrap();
        assert!((shrunk.similarity(0, 1) - 25.0 / (5.0 * 50.0f64.sqrt() + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn itemknn_zero_norm_item_is_silent() {
        // Item 1 exists in the catalog but nobody rated it.
        let train = alloc::vec![alloc::vec![ev(0, 4.0, 1), ev(2, 4.0, 2)]];
        let model = ItemKnn::fit(&train, 3, ItemKnnConfig::default()).unwrap();
        assert!(model.sim_row(1).is_empty());
        assert_eq!(model.similarity(0, 1), 0.0);
    }

    #[test]
    fn itemknn_rows_truncated_and_diagonal_excluded() {
        // Four items all co-rated; k=2 keeps only two neighbours.
        let train = alloc::vec![
            alloc::vec![ev(0, 5.0, 1), ev(1, 4.0, 2), ev(2, 3.0, 3), ev(3, 2.0, 4)],
            alloc::vec![ev(0, 1.0, 1), ev(1, 2.0, 2), ev(2, 3.0, 3), ev(3, 4.0, 4)],
        ];
        let model =
            ItemKnn::fit(&train, 4, ItemKnnConfig { k: 2, shrink: 0.0, binarize: false }).unwrap();
        for i in 0..4 {
            let row = model.sim_row(i);
            assert!(row.len() <= 2);
            assert!(row.iter().all(|&(j, _)| j != i));
            assert!(row.iter().all(|&(_, s)| (0.0..=1.0 + 1e-12).contains(&s)));
        }
    }

    #[test]
    fn itemknn_untruncated_similarity_is_symmetric() {
        let train = alloc::vec![
            alloc::vec![ev(0, 5.0, 1), ev(1, 3.0, 2), ev(2, 1.0, 3)],
            alloc::vec![ev(1, 4.0, 1), ev(2, 2.0, 2), ev(3, 5.0, 3)],
            alloc::vec![ev(0, 2.0, 1), ev(3, 3.0, 2)],
        ];
        let model =
            ItemKnn::fit(&train, 4, ItemKnnConfig { k: 100, shrink: 0.3, binarize: false }).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let diff = model.similarity(i, j) - model.similarity(j, i);
                assert!(diff.abs() < 1e-12, "sim({i},{j}) asymmetric by {diff}");
            }
        }
    }

    #[test]
    fn itemknn_score_matches_hand_formula() {
        let train = alloc::vec![
            alloc::vec![ev(0, 5.0, 1), ev(1, 5.0, 2)],
            alloc::vec![ev(1, 5.0, 1)],
        ];
        let model =
            ItemKnn::fit(&train, 2, ItemKnnConfig { k: 10, shrink: 0.0, binarize: false }).unwrap();
        // User 1 rated only item 1 (weight 5): score(i0) = sim(0,1)·5.
        let scores = model.score(1);
        assert!((scores[0] - 0.7071067811865475 * 5.0).abs() < 1e-9);
    }

    #[test]
    fn itemknn_binarized_mode_ignores_rating_values() {
        let train = alloc::vec![
            alloc::vec![ev(0, 5.0, 1), ev(1, 1.0, 2)],
            alloc::vec![ev(0, 2.0, 1), ev(1, 4.0, 2)],
        ];
        let model =
            ItemKnn::fit(&train, 2, ItemKnnConfig { k: 10, shrink: 0.0, binarize: true }).unwrap();
        // Binarized identical occupancy → cosine 1.
        assert!((model.similarity(0, 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bpr_epochs_zero_is_seeded_init() {
        let train = alloc::vec![alloc::vec![ev(0, 5.0, 1), ev(1, 4.0, 2)]];
        let cfg = BprConfig { d: 8, epochs: 0, seed: 99, ..BprConfig::default() };
        let a = Bpr::fit(&train, 3, cfg).unwrap();
        let b = Bpr::fit(&train, 3, cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.b.iter().all(|&v| v == 0.0));
        assert!(a.p.iter().all(|v| v.is_finite()));
        // Factors drawn from N(0, 0.01): should be small but not all zero.
        assert!(a.p.iter().any(|&v| v != 0.0));
        assert!(a.p.iter().all(|&v| v.abs() < 1.0));
    }

    #[test]
    fn bpr_training_is_deterministic_per_seed() {
        let train = alloc::vec![
            alloc::vec![ev(0, 5.0, 1), ev(1, 4.0, 2)],
            alloc::vec![ev(2, 3.0, 1), ev(3, 2.0, 2)],
        ];
        let cfg = BprConfig { d: 4, epochs: 5, seed: 7, ..BprConfig::default() };
        let a = Bpr::fit(&train, 5, cfg).unwrap();
        let b = Bpr::fit(&train, 5, cfg).unwrap();
        assert_eq!(a.score(0), b.score(0));
        assert_eq!(a.score(1), b.score(1));
        let other = Bpr::fit(&train, 5, BprConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(a.score(0), other.score(0));
    }

    #[test]
    fn bpr_gradient_matches_finite_differences() {
        let train = alloc::vec![
            alloc::vec![ev(0, 5.0, 1), ev(1, 4.0, 2)],
            alloc::vec![ev(2, 3.0, 1)],
        ];
        let cfg = BprConfig { d: 3, epochs: 0, seed: 5, ..BprConfig::default() };
        let mut model = Bpr::fit(&train, 4, cfg).unwrap();
        let (u, i, j) = (0, 1, 3);
        let grad = model.triple_gradient(u, i, j);
        let eps = 1e-6;
        let d = model.cfg.d;
        let mut check = |analytic: f64, loc: &str, perturb: &mut dyn FnMut(&mut Bpr, f64)| {
            perturb(&mut model, eps);
            let plus = model.triple_objective(u, i, j);
            perturb(&mut model, -2.0 * eps);
            let minus = model.triple_objective(u, i, j);
            perturb(&mut model, eps);
            let numeric = (plus - minus) / (2.0 * eps);
            let denom = numeric.abs().max(1e-8);
            assert!(
                (analytic - numeric).abs() / denom < 1e-4,
                "{loc}: analytic {analytic} vs numeric {numeric}"
            );
        };
        for f in 0..d {
            check(grad.d_pu[f], "p[u]", &mut |m, e| m.p[u * 3 + f] += e);
            check(grad.d_qi[f], "q[i]", &mut |m, e| m.q[i * 3 + f] += e);
            check(grad.d_qj[f], "q[j]", &mut |m, e| m.q[j * 3 + f] += e);
        }
        check(grad.d_bi, "b[i]", &mut |m, e| m.b[i] += e);
        check(grad.d_bj, "b[j]", &mut |m, e| m.b[j] += e);
    }

    #[test]
    fn bpr_empty_train_errors() {
        let train: Vec<Vec<Event>> = alloc::vec![Vec::new(), Vec::new()];
        assert_eq!(
            Bpr::fit(&train, 3, BprConfig::default()).unwrap_err(),
            RecsysError::EmptyTrain
        );
    }

    fn id_map(ids: &[&str]) -> IdMap {
        let mut map = IdMap::default();
        for id in ids {
            map.intern(id);
        }
        map
    }

    #[test]
    fn imported_scores_single_row_with_sentinel() {
        let users = id_map(&["u1"]);
        let items = id_map(&["i1", "i2"]);
        let rows = alloc::vec![("u1".into(), "i1".into(), 0.9)];
        let model = ImportedScores::from_rows("ext", &rows, &users, &items).unwrap();
        let scores = model.score_checked(0).unwrap();
        assert_eq!(scores[0], 0.9);
        assert_eq!(scores[1], f64::NEG_INFINITY);
        assert_eq!(rank(&scores, &[0, 1]), alloc::vec![0, 1]);
    }

    #[test]
    fn imported_scores_unknown_item_names_line() {
        let users = id_map(&["u1"]);
        let items = id_map(&["i1"]);
        let rows = alloc::vec![
            ("u1".into(), "i1".into(), 0.5),
            ("u1".into(), "nope".into(), 0.2),
        ];
        assert_eq!(
            ImportedScores::from_rows("ext", &rows, &users, &items).unwrap_err(),
            RecsysError::UnknownItem { line: 2, id: "nope".into() }
        );
    }

    #[test]
    fn imported_scores_duplicate_pair_rejected() {
        let users = id_map(&["u1"]);
        let items = id_map(&["i1"]);
        let rows = alloc::vec![
            ("u1".into(), "i1".into(), 0.5),
            ("u1".into(), "i1".into(), 0.6),
        ];
        assert_eq!(
            ImportedScores::from_rows("ext", &rows, &users, &items).unwrap_err(),
            RecsysError::DuplicateScore { line: 2 }
        );
    }

    #[test]
    fn imported_scores_uncovered_user_errors() {
        let users = id_map(&["u1", "u2"]);
        let items = id_map(&["i1"]);
        let rows = alloc::vec![("u1".into(), "i1".into(), 0.5)];
        let model = ImportedScores::from_rows("ext", &rows, &users, &items).unwrap();
        assert_eq!(
            model.score_checked(1).unwrap_err(),
            RecsysError::UserNotCovered { user: 1 }
        );
    }

    fn spec_train() -> Vec<Vec<Event>> {
        alloc::vec![
            alloc::vec![ev(0, 5.0, 1), ev(1, 3.0, 2)],
            alloc::vec![ev(1, 4.0, 1), ev(2, 2.0, 2)],
            alloc::vec![ev(0, 2.0, 1), ev(2, 5.0, 2)],
        ]
    }

    #[test]
    fn itemknn_from_parts_round_trips_scores() {
        let train = spec_train();
        let fitted = ItemKnn::fit(&train, 3, ItemKnnConfig::default()).unwrap();
        let rows: Vec<Vec<(usize, f64)>> = (0..3).map(|i| fitted.sim_row(i).to_vec()).collect();
        let rebuilt = ItemKnn::from_parts(ItemKnnConfig::default(), &train, 3, rows).unwrap();
        for u in 0..train.len() {
            assert_eq!(fitted.score(u), rebuilt.score(u));
        }
    }

    #[test]
    fn itemknn_from_parts_validates_shapes() {
        let train = spec_train();
        assert!(matches!(
            ItemKnn::from_parts(ItemKnnConfig::default(), &train, 3, alloc::vec![Vec::new(); 2]),
            Err(RecsysError::ShapeMismatch { .. })
        ));
        let bad_row = alloc::vec![Vec::new(), alloc::vec![(9usize, 0.5)], Vec::new()];
        assert!(matches!(
            ItemKnn::from_parts(ItemKnnConfig::default(), &train, 3, bad_row),
            Err(RecsysError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn bpr_from_parts_round_trips_scores() {
        let train = spec_train();
        let cfg = BprConfig { d: 4, epochs: 2, ..BprConfig::default() };
        let fitted = Bpr::fit(&train, 3, cfg).unwrap();
        let rebuilt =
            Bpr::from_parts(cfg, fitted.p.clone(), fitted.q.clone(), fitted.b.clone()).unwrap();
        for u in 0..train.len() {
            assert_eq!(fitted.score(u), rebuilt.score(u));
        }
        assert_eq!(rebuilt.n_users(), train.len());
    }

    #[test]
    fn bpr_from_parts_validates_shapes() {
        let cfg = BprConfig { d: 4, ..BprConfig::default() };
        assert!(matches!(
            Bpr::from_parts(cfg, alloc::vec![0.0; 5], alloc::vec![0.0; 8], alloc::vec![0.0; 2]),
            Err(RecsysError::ShapeMismatch { .. })
        ));
        assert!(matches!(
            Bpr::from_parts(cfg, alloc::vec![0.0; 8], alloc::vec![0.0; 8], alloc::vec![0.0; 3]),
            Err(RecsysError::ShapeMismatch { .. })
        ));
    }
}
