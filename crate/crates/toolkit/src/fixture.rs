//! Deterministic synthetic corpora for tests, demos, and offline runs.
//!
//! Two generators live here. [`clustered_corpus`] builds a
//! taste-cluster world where most users follow one cluster and a
//! sprinkling of low-activity noise users does not — exactly the
//! population a weak-user gate should separate. [`planted_factors`]
//! builds interactions from known low-rank structure so a factor model
//! trained on it has a recoverable signal with a known answer.
//!
//! Both are pure functions of their seed: the same spec yields the
//! same bytes on disk, every time, on every platform.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::io::write_text;
use crate::runerr::RunError;
use weakrec_core::corpus::{Interaction, InteractionLog};

/// Shape of a generated clustered corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorpusSpec {
    /// Number of users.
    pub users: usize,
    /// Number of catalog items.
    pub items: usize,
    /// Number of taste clusters.
    pub clusters: usize,
    /// RNG seed; everything else derives from it.
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec { users: 500, items: 300, clusters: 8, seed: 42 }
    }
}

/// One catalog entry of a generated corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CatalogEntry {
    /// External item ID (1-based decimal).
    pub id: String,
    /// Unique display title.
    pub title: String,
    /// Genre label (the item's cluster).
    pub genres: String,
}

/// A generated corpus: raw interactions plus its item catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    /// Raw interaction records.
    pub log: InteractionLog,
    /// Catalog rows in item-ID order.
    pub catalog: Vec<CatalogEntry>,
}

const ADJECTIVES: [&str; 20] = [
    "Silent", "Crimson", "Wandering", "Forgotten", "Electric", "Midnight", "Golden", "Restless",
    "Hollow", "Distant", "Burning", "Frozen", "Scarlet", "Velvet", "Broken", "Rising", "Hidden",
    "Savage", "Gentle", "Last",
];

const NOUNS: [&str; 15] = [
    "Harbor", "Signal", "Meadow", "Engine", "Mirror", "Canyon", "Letter", "Voyage", "Garden",
    "Thunder", "Compass", "Lantern", "Orchard", "Summit", "Archive",
];

/// Deterministic unique title for item index `i`.
fn title_for(i: usize) -> String {
    let base = format!("{} {}", ADJECTIVES[i % ADJECTIVES.len()], NOUNS[(i / ADJECTIVES.len()) % NOUNS.len()]);
    let series = i / (ADJECTIVES.len() * NOUNS.len());
    if series == 0 {
        base
    } else {
        format!("{} {}", base, series + 1)
    }
}

/// Generates a taste-cluster corpus.
///
/// Item `i` belongs to cluster `i % clusters`; user `u` prefers cluster
/// `u % clusters` and draws 80% of interactions from it. Every tenth
/// user (`u % 10 == 9`) is a noise user instead: 5–8 uniformly random
/// items and no cluster loyalty, giving the corpus a natural stratum of
/// sparse, hard-to-model users. Regular users interact with 5–60 items.
/// In-cluster picks rate 4–5, off-cluster picks 1–5; timestamps are
/// sequential per user.
pub fn clustered_corpus(spec: &CorpusSpec) -> Fixture {
    assert!(spec.clusters >= 1 && spec.items >= spec.clusters, "degenerate corpus spec");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut records = Vec::new();

    let cluster_items: Vec<Vec<usize>> = (0..spec.clusters)
        .map(|c| (0..spec.items).filter(|i| i % spec.clusters == c).collect())
        .collect();

    for u in 0..spec.users {
        let noise = u % 10 == 9;
        // Cap activity below the catalog size so every user keeps a
        // non-empty pool of unseen items to rank.
        let cap = spec.items.saturating_sub(5).max(3);
        let count = if noise {
            rng.gen_range(5..=8usize).min(cap)
        } else {
            rng.gen_range(5..=60usize).min(cap)
        };
        let preferred = &cluster_items[u % spec.clusters];
        let mut used = vec![false; spec.items];
        let mut picked = 0usize;
        let mut tick = 0i64;
        while picked < count {
            let in_cluster = !noise && rng.gen_bool(0.8);
            let pool: Vec<usize> = if in_cluster {
                preferred.iter().copied().filter(|&i| !used[i]).collect()
            } else {
                (0..spec.items).filter(|&i| !used[i]).collect()
            };
            let Some(&item) = pool.as_slice().choose(&mut rng) else {
                // Preferred cluster exhausted; fall through to any item.
                if used.iter().all(|&b| b) {
                    break;
                }
                continue;
            };
            used[item] = true;
            let liked = item % spec.clusters == u % spec.clusters && !noise;
            let rating = if liked { rng.gen_range(4..=5) } else { rng.gen_range(1..=5) };
            records.push(Interaction {
                user: (u + 1).to_string(),
                item: (item + 1).to_string(),
                rating: rating as f64,
                timestamp: 1_000_000_000 + (u as i64) * 1_000 + tick,
            });
            picked += 1;
            tick += 1;
        }
    }

    let catalog = (0..spec.items)
        .map(|i| CatalogEntry {
            id: (i + 1).to_string(),
            title: title_for(i),
            genres: format!("Cluster{}", i % spec.clusters),
        })
        .collect();

    Fixture { log: InteractionLog { records }, catalog }
}

/// Writes a fixture in the double-colon rating/title file layout:
/// `ratings.dat` (`user::item::rating::timestamp`) and `movies.dat`
/// (`item::title::genres`).
pub fn write_movielens_fixture(dir: &Path, fixture: &Fixture) -> Result<(), RunError> {
    let mut ratings = String::new();
    for r in &fixture.log.records {
        ratings.push_str(&format!("{}::{}::{}::{}\n", r.user, r.item, r.rating as i64, r.timestamp));
    }
    write_text(&dir.join("ratings.dat"), &ratings)?;

    let mut movies = String::new();
    for entry in &fixture.catalog {
        movies.push_str(&format!("{}::{}::{}\n", entry.id, entry.title, entry.genres));
    }
    write_text(&dir.join("movies.dat"), &movies)
}

/// Generates interactions from planted two-dimensional structure.
///
/// Users and items get unit vectors at random angles; each user's
/// positives are the `positives_per_user` items with the highest inner
/// product against the user vector. A factor model trained on the
/// result faces a clean low-rank recovery problem, so its held-out
/// ranking quality has a known target.
pub fn planted_factors(
    users: usize,
    items: usize,
    positives_per_user: usize,
    seed: u64,
) -> InteractionLog {
    assert!(positives_per_user >= 3 && positives_per_user <= items, "degenerate plant");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let angle = |rng: &mut ChaCha8Rng| rng.gen_range(0.0..core::f64::consts::TAU);
    let user_vecs: Vec<(f64, f64)> = (0..users)
        .map(|_| {
            let a = angle(&mut rng);
            (a.cos(), a.sin())
        })
        .collect();
    let item_vecs: Vec<(f64, f64)> = (0..items)
        .map(|_| {
            let a = angle(&mut rng);
            (a.cos(), a.sin())
        })
        .collect();

    let mut records = Vec::new();
    for (u, uv) in user_vecs.iter().enumerate() {
        let mut scored: Vec<(usize, f64)> = item_vecs
            .iter()
            .enumerate()
            .map(|(i, iv)| (i, uv.0 * iv.0 + uv.1 * iv.1))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        for (tick, (item, _)) in scored.into_iter().take(positives_per_user).enumerate() {
            records.push(Interaction {
                user: (u + 1).to_string(),
                item: (item + 1).to_string(),
                rating: 5.0,
                timestamp: 1_000_000_000 + (u as i64) * 1_000 + tick as i64,
            });
        }
    }
    InteractionLog { records }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;
    use weakrec_core::corpus::{build_dataset, loo_split};

    #[test]
    fn corpus_is_deterministic() {
        let spec = CorpusSpec::default();
        assert_eq!(clustered_corpus(&spec), clustered_corpus(&spec));
        let other = CorpusSpec { seed: 43, ..spec };
        assert_ne!(clustered_corpus(&spec), clustered_corpus(&other));
    }

    #[test]
    fn titles_are_unique() {
        let fixture = clustered_corpus(&CorpusSpec::default());
        let titles: BTreeSet<&str> = fixture.catalog.iter().map(|c| c.title.as_str()).collect();
        assert_eq!(titles.len(), fixture.catalog.len());
    }

    #[test]
    fn corpus_survives_the_standard_pipeline() {
        let fixture = clustered_corpus(&CorpusSpec::default());
        let dataset = build_dataset(&fixture.log).unwrap();
        assert_eq!(weakrec_core::corpus::dataset_stats(&dataset).users, 500);
        let split = loo_split(&dataset).unwrap();
        // Everyone has at least five interactions, so nobody is dropped.
        assert_eq!(split.dropped_users, 0);
    }

    #[test]
    fn noise_users_are_sparse() {
        let fixture = clustered_corpus(&CorpusSpec::default());
        let mut counts = std::collections::BTreeMap::<&str, usize>::new();
        for r in &fixture.log.records {
            *counts.entry(r.user.as_str()).or_default() += 1;
        }
        for u in 0..500usize {
            let c = counts[&(u + 1).to_string().as_str()];
            if u % 10 == 9 {
                assert!((5..=8).contains(&c), "noise user {u} has {c} interactions");
            } else {
                assert!((5..=60).contains(&c));
            }
        }
    }

    #[test]
    fn movielens_files_round_trip_through_the_parser() {
        let fixture = clustered_corpus(&CorpusSpec { users: 20, items: 40, clusters: 4, seed: 7 });
        let dir = tempfile::TempDir::new().unwrap();
        write_movielens_fixture(dir.path(), &fixture).unwrap();
        let text = std::fs::read_to_string(dir.path().join("ratings.dat")).unwrap();
        let log = weakrec_core::corpus::parse_movielens(&text).unwrap();
        assert_eq!(log, fixture.log);
    }

    #[test]
    fn planted_positives_are_the_top_of_each_users_score_list() {
        let log = planted_factors(50, 40, 8, 11);
        assert_eq!(log.records.len(), 50 * 8);
        // Per-user timestamps strictly increase, so the LOO split is
        // unambiguous.
        let dataset = build_dataset(&log).unwrap();
        let split = loo_split(&dataset).unwrap();
        assert_eq!(split.dropped_users, 0);
        for history in &split.train {
            assert_eq!(history.len(), 6);
        }
    }

    #[test]
    fn planted_generator_is_deterministic() {
        assert_eq!(planted_factors(10, 20, 5, 3), planted_factors(10, 20, 5, 3));
        assert_ne!(planted_factors(10, 20, 5, 3), planted_factors(10, 20, 5, 4));
    }
}
