//! End-to-end orchestration: data → model → profiles → gate →
//! prompts → completions → guarded merge → evaluation → artifacts.
//!
//! Stages run strictly in order and every stage failure carries its
//! stage name. Within the completion stage, requests run concurrently
//! up to the backend's limit, but all outputs are keyed by user index
//! and written in user order, so a run's artifacts are byte-identical
//! across repetitions with mock backends (and cache-hits with the HTTP
//! backend make reruns cheap).

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint::FittedModel;
use crate::config::{BackendKind, Config, GuardChoice, HoldoutChoice, ModelKind};
use crate::io::{
    self, load_splits, synthesized_titles, write_gate, write_merged,
    write_profiles, write_report_json, write_splits, write_text, RunDir,
};
use crate::llm_http::HttpBackend;
use crate::runerr::RunError;
use weakrec_core::corpus::{
    build_dataset, dataset_stats, kcore_filter, DatasetStats, SplitDataset,
};
use weakrec_core::gate::{decide_all, resolve_thresholds, GateDecision};
use weakrec_core::hybrid::{evaluate, guarded_merge, holdout_list_quality, SourceTag, UserOutcome};
use weakrec_core::llm::{Budget, LlmBackend, MockIdentity, MockOracle, MockRandom};
use weakrec_core::metrics::{profile_users, HoldoutTarget, UserProfile};
use weakrec_core::prompt::{
    build_candidates, make_instance, parse_response, PromptBuildConfig, PromptInstance, TitleTable,
};
use weakrec_core::recsys::{rank, Bpr, ItemKnn, MostPopular, Recommender};
use weakrec_core::report::{emit_histograms, emit_scatter, emit_table, emit_weak_funnel};

/// Everything a finished run produced, for callers that want to
/// inspect more than the files.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// The evaluation report, as persisted to `report.json`.
    pub report: weakrec_core::report::EvalReport,
    /// Per-user outcomes in user-index order.
    pub outcomes: Vec<UserOutcome>,
    /// The profiles the gate ran on.
    pub profiles: Vec<UserProfile>,
    /// Gate decisions aligned with `profiles`.
    pub decisions: Vec<GateDecision>,
    /// Resolved (performance, sparsity) thresholds.
    pub thresholds: (f64, f64),
}

fn stage<T, E: Into<RunError>>(name: &str, result: Result<T, E>) -> Result<T, RunError> {
    result.map_err(|e| e.into().at_stage(name))
}

/// Prepares a split from raw data: parse, k-core filter, ID
/// interning, leave-one-out split. Persists to the configured split
/// directory when one is set (overwriting any previous preparation).
pub fn prepare_from_raw(cfg: &Config) -> Result<(SplitDataset, DatasetStats), RunError> {
    let log = stage("prepare", io::load_log(&cfg.dataset))?;
    let filtered = kcore_filter(&log, cfg.dataset.kcore);
    let dataset = stage("prepare", build_dataset(&filtered))?;
    let stats = dataset_stats(&dataset);
    let split = stage("prepare", weakrec_core::corpus::loo_split(&dataset))?;
    if let Some(dir) = cfg.dataset.split_dir.as_deref() {
        stage("prepare", write_splits(Path::new(dir), &split))?;
    }
    Ok((split, stats))
}

/// Loads the prepared split named by the config, or prepares it from
/// raw data via [`prepare_from_raw`]. Returns corpus stats only when
/// raw data was processed.
pub fn obtain_split(cfg: &Config) -> Result<(SplitDataset, Option<DatasetStats>), RunError> {
    if let Some(dir) = cfg.dataset.split_dir.as_deref() {
        let dir = Path::new(dir);
        if dir.join("users.csv").exists() {
            return Ok((stage("prepare", load_splits(dir))?, None));
        }
    }
    let (split, stats) = prepare_from_raw(cfg)?;
    Ok((split, Some(stats)))
}

/// Loads the configured checkpoint, or fits the configured model on
/// the split's train histories (persisting to the checkpoint path, if
/// one is set).
pub fn obtain_model(cfg: &Config, split: &SplitDataset) -> Result<FittedModel, RunError> {
    let n = split.n_items();
    if let Some(dir) = cfg.model.checkpoint.as_deref() {
        let dir = Path::new(dir);
        if dir.join("meta.toml").exists() {
            return stage("fit", FittedModel::load(dir, &split.train));
        }
    }
    let model = match cfg.model.kind {
        ModelKind::Mostpop => {
            FittedModel::MostPop(stage("fit", MostPopular::fit(&split.train, n))?)
        }
        ModelKind::Itemknn => FittedModel::ItemKnn(stage(
            "fit",
            ItemKnn::fit(&split.train, n, cfg.model.itemknn_config()),
        )?),
        ModelKind::Bpr => FittedModel::Bpr(stage(
            "fit",
            Bpr::fit(&split.train, n, cfg.model.bpr_config(cfg.run.seed)),
        )?),
        ModelKind::Import => {
            let path = cfg.model.scores.as_deref().ok_or_else(|| {
                RunError::Usage("model.kind = \"import\" requires model.scores".into())
            })?;
            let rows = stage("fit", io::load_score_rows(Path::new(path)))?;
            FittedModel::Import(stage(
                "fit",
                weakrec_core::recsys::ImportedScores::from_rows(
                    "import",
                    &rows,
                    &split.user_ids,
                    &split.item_ids,
                ),
            )?)
        }
    };
    if let Some(dir) = cfg.model.checkpoint.as_deref() {
        if !matches!(model, FittedModel::Import(_)) {
            stage("fit", model.save(Path::new(dir)))?;
        }
    }
    Ok(model)
}

/// Loads display titles (or synthesizes `Item {id}` fallbacks), then
/// fills any catalog gaps with the fallback so every prompt can render.
pub fn obtain_titles(cfg: &Config, split: &SplitDataset) -> Result<TitleTable, RunError> {
    let mut titles = match cfg.dataset.titles.as_deref() {
        Some(path) => stage(
            "titles",
            io::load_titles(Path::new(path), cfg.dataset.titles_format, &split.item_ids),
        )?,
        None => synthesized_titles(&split.item_ids),
    };
    let fallback = synthesized_titles(&split.item_ids);
    let mut filled = 0usize;
    for i in 0..split.item_ids.len() {
        if titles.get(i).is_none() {
            titles.insert(i, fallback.get(i).expect("fallback covers the catalog"));
            filled += 1;
        }
    }
    if filled > 0 {
        log::warn!("{filled} catalog items had no title; using generic fallbacks");
    }
    Ok(titles)
}

/// Builds the configured backend. The oracle is primed with every
/// surviving user's held-out title; the HTTP backend reads its key
/// from the environment and fails before any network traffic when the
/// key is missing.
pub fn make_backend(
    cfg: &Config,
    split: &SplitDataset,
    titles: &TitleTable,
) -> Result<Box<dyn LlmBackend + Send + Sync>, RunError> {
    match cfg.backend.kind {
        BackendKind::MockOracle => {
            let mut answers = BTreeMap::new();
            for u in split.surviving_users() {
                let test = split.test[u].expect("surviving users have a test item");
                let ext = split.user_ids.external_of(u).expect("index from this split");
                let title = stage("backend", titles.require(test.item))?;
                answers.insert(ext.to_string(), title.to_string());
            }
            Ok(Box::new(MockOracle::new(answers)))
        }
        BackendKind::MockIdentity => Ok(Box::new(MockIdentity)),
        BackendKind::MockRandom => Ok(Box::new(MockRandom { seed: cfg.backend.mock_seed })),
        BackendKind::Http => {
            let cache = Some(PathBuf::from(&cfg.backend.cache_dir));
            let backend = stage("backend", HttpBackend::new(&cfg.backend, cache))?;
            Ok(Box::new(backend))
        }
    }
}

fn holdout_of(cfg_choice: HoldoutChoice) -> HoldoutTarget {
    match cfg_choice {
        HoldoutChoice::Test => HoldoutTarget::Test,
        HoldoutChoice::Valid => HoldoutTarget::Valid,
    }
}

/// The candidate set for one user in recommender order.
///
/// In evaluation mode the set is the held-out test item plus the top
/// `j − 1` recommender items. In deployment mode the validation item
/// joins too (it drives the guard), keeping the test item so final
/// rankings stay comparable: `{valid, test} ∪ top (j − 2)`.
fn candidate_rs_order(
    ranking: &[usize],
    test_item: usize,
    valid_item: usize,
    j: usize,
    quality_on: HoldoutChoice,
) -> Vec<usize> {
    match quality_on {
        HoldoutChoice::Test => build_candidates(ranking, test_item, j).rs_order,
        HoldoutChoice::Valid => {
            let mut chosen: Vec<usize> = ranking
                .iter()
                .copied()
                .filter(|&i| i != test_item && i != valid_item)
                .take(j.saturating_sub(2))
                .collect();
            chosen.push(test_item);
            chosen.push(valid_item);
            let mut rs_order: Vec<usize> =
                ranking.iter().copied().filter(|i| chosen.contains(i)).collect();
            for missing in [test_item, valid_item] {
                if !rs_order.contains(&missing) {
                    rs_order.push(missing);
                }
            }
            rs_order
        }
    }
}

/// One line of `prompts.jsonl`.
#[derive(Debug, Serialize, Deserialize)]
pub struct PromptRow {
    /// External user ID.
    pub user: String,
    /// Per-user shuffle seed.
    pub seed: u64,
    /// Candidate item IDs in presentation order.
    pub candidates: Vec<String>,
    /// The rendered prompt text.
    pub text: String,
}

/// One line of `responses.jsonl`.
#[derive(Debug, Serialize, Deserialize)]
pub struct ResponseRow {
    /// External user ID.
    pub user: String,
    /// Raw backend response, when one arrived.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw: Option<String>,
    /// Whether a ranking was recovered.
    pub parsed: bool,
    /// List lines naming no candidate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dropped_hallucinations: Option<usize>,
    /// Candidates never mentioned, appended in recommender order.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub appended_missing: Option<usize>,
    /// Why this user fell back to the recommender ranking.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// What the completion stage decided for one weak user.
enum WeakResolution {
    /// A ranking was recovered from the backend.
    Reranked(Vec<usize>),
    /// Terminal per-user failure; recommender order stands.
    Fallback,
}

/// Runs the full hybrid pipeline and writes every artifact.
pub fn run(cfg: &Config) -> Result<PipelineOutput, RunError> {
    cfg.validate()?;
    let dir = RunDir::new(&cfg.run.out_dir);
    fs::create_dir_all(&dir.root)
        .map_err(|e| RunError::Data(format!("cannot create {}: {e}", dir.root.display())))?;
    write_text(&dir.config_snapshot(), &cfg.snapshot())?;

    let (split, _) = obtain_split(cfg)?;
    let model = obtain_model(cfg, &split)?;
    let titles = obtain_titles(cfg, &split)?;

    // Profiles drive the gate on the configured holdout; evaluation
    // always reports full-pool AUC on the test holdout.
    let gate_target = holdout_of(cfg.gate.gate_on);
    let profiles = stage("profile", profile_users(&model, &split, gate_target))?;
    let eval_profiles = if matches!(gate_target, HoldoutTarget::Test) {
        profiles.clone()
    } else {
        stage("profile", profile_users(&model, &split, HoldoutTarget::Test))?
    };
    let full_pool_auc: BTreeMap<usize, f64> =
        eval_profiles.iter().map(|p| (p.user, p.auc)).collect();

    let gate_cfg = cfg.gate.gate_config();
    let thresholds = stage("gate", resolve_thresholds(&gate_cfg, &profiles))?;
    let decisions = stage("gate", decide_all(&profiles, &gate_cfg))?;
    write_profiles(&dir.profiles(), &profiles, &split.user_ids)?;
    write_gate(&dir.gate(), &decisions, &profiles, &split.user_ids)?;

    let weak_of: BTreeMap<usize, bool> = decisions.iter().map(|d| (d.user, d.weak)).collect();
    let prompt_cfg = PromptBuildConfig {
        j: cfg.prompt.j,
        history_cap: cfg.prompt.history_cap,
        presentation: cfg.prompt.presentation_order(),
    };
    let match_mode = cfg.prompt.match_mode();
    let quality_on = cfg.run.quality_on;
    let guard_on = matches!(cfg.run.guard, GuardChoice::On);
    let n = split.n_items();

    // Rank the full unseen pool per user and cut candidate sets.
    let mut rs_candidates: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut weak_instances: Vec<PromptInstance> = Vec::new();
    let mut prompts_file = fs::File::create(dir.prompts())
        .map_err(|e| RunError::Data(format!("cannot create {}: {e}", dir.prompts().display())))?;
    for p in &profiles {
        let u = p.user;
        let scores = stage("rank", model.score_checked(u))?;
        let valid = split.valid[u].expect("profiled users have holdouts");
        let test = split.test[u].expect("profiled users have holdouts");
        let mut in_pool = vec![true; n];
        for e in &split.train[u] {
            in_pool[e.item] = false;
        }
        // Evaluation mode keeps the untouched validation item out of
        // the pool, mirroring the profiling context exactly.
        if matches!(quality_on, HoldoutChoice::Test) {
            in_pool[valid.item] = false;
        }
        in_pool[test.item] = true;
        let pool: Vec<usize> = (0..n).filter(|&i| in_pool[i]).collect();
        let ranking = rank(&scores, &pool);
        let rs_order = candidate_rs_order(&ranking, test.item, valid.item, prompt_cfg.j, quality_on);

        if weak_of[&u] {
            let ext = split.user_ids.external_of(u).expect("index from this split");
            let instance = stage(
                "prompts",
                make_instance(
                    u,
                    ext,
                    &split.train[u],
                    &rs_order,
                    test.item,
                    &prompt_cfg,
                    cfg.run.seed,
                    &titles,
                ),
            )?;
            io::write_jsonl_line(
                &mut prompts_file,
                &PromptRow {
                    user: instance.user_ext.clone(),
                    seed: instance.seed,
                    candidates: instance
                        .candidates
                        .iter()
                        .map(|&i| split.item_ids.external_of(i).expect("catalog index").to_string())
                        .collect(),
                    text: instance.text.clone(),
                },
            )?;
            weak_instances.push(instance);
        }
        rs_candidates.insert(u, rs_order);
    }
    prompts_file.flush().map_err(RunError::from)?;

    // Completion stage: budget is charged sequentially before each
    // request; requests in one batch run concurrently; results are
    // processed in user order.
    let backend = make_backend(cfg, &split, &titles)?;
    let mut budget = Budget::new(cfg.budget.max_requests, cfg.budget.max_prompt_chars);
    let concurrency = match cfg.backend.kind {
        BackendKind::Http => cfg.backend.concurrency.max(1),
        _ => 1,
    };
    let mut responses_file = fs::File::create(dir.responses())
        .map_err(|e| RunError::Data(format!("cannot create {}: {e}", dir.responses().display())))?;
    let mut resolutions: BTreeMap<usize, WeakResolution> = BTreeMap::new();
    for batch in weak_instances.chunks(concurrency) {
        for instance in batch {
            stage("complete", budget.charge(instance.text.chars().count() as u64))?;
        }
        let results: Vec<Result<String, weakrec_core::error::LlmError>> =
            std::thread::scope(|scope| {
                let handles: Vec<_> = batch
                    .iter()
                    .map(|instance| {
                        let backend = &backend;
                        scope.spawn(move || backend.complete(&instance.text))
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
            });
        for (instance, result) in batch.iter().zip(results) {
            let row = match result {
                Ok(raw) => match parse_response(
                    instance.user,
                    &raw,
                    &instance.candidates,
                    &titles,
                    &instance.rs_order,
                    match_mode,
                ) {
                    Ok(rerank) => {
                        resolutions.insert(instance.user, WeakResolution::Reranked(rerank.ranking));
                        ResponseRow {
                            user: instance.user_ext.clone(),
                            raw: Some(raw),
                            parsed: true,
                            dropped_hallucinations: Some(rerank.dropped_hallucinations),
                            appended_missing: Some(rerank.appended_missing),
                            error: None,
                        }
                    }
                    Err(e) => {
                        resolutions.insert(instance.user, WeakResolution::Fallback);
                        ResponseRow {
                            user: instance.user_ext.clone(),
                            raw: Some(raw),
                            parsed: false,
                            dropped_hallucinations: None,
                            appended_missing: None,
                            error: Some(e.to_string()),
                        }
                    }
                },
                Err(e @ weakrec_core::error::LlmError::Auth(_))
                | Err(e @ weakrec_core::error::LlmError::Budget(_)) => {
                    // Run-level failures: nothing a fallback can fix.
                    responses_file.flush().ok();
                    return Err(RunError::from(e).at_stage("complete"));
                }
                Err(e) => {
                    resolutions.insert(instance.user, WeakResolution::Fallback);
                    ResponseRow {
                        user: instance.user_ext.clone(),
                        raw: None,
                        parsed: false,
                        dropped_hallucinations: None,
                        appended_missing: None,
                        error: Some(e.to_string()),
                    }
                }
            };
            io::write_jsonl_line(&mut responses_file, &row)?;
        }
    }
    responses_file.flush().map_err(RunError::from)?;

    // Merge and evaluate.
    let mut outcomes: Vec<UserOutcome> = Vec::with_capacity(profiles.len());
    for p in &profiles {
        let u = p.user;
        let rs_order = rs_candidates.remove(&u).expect("candidate set built above");
        let weak = weak_of[&u];
        let test = split.test[u].expect("profiled users have holdouts");
        let valid = split.valid[u].expect("profiled users have holdouts");
        let quality_item = match quality_on {
            HoldoutChoice::Test => test.item,
            HoldoutChoice::Valid => valid.item,
        };
        let (final_ranking, tag) = if !weak {
            (rs_order.clone(), SourceTag::Rs)
        } else {
            match resolutions.get(&u) {
                Some(WeakResolution::Reranked(llm_ranking)) => stage(
                    "merge",
                    guarded_merge(
                        &rs_order,
                        llm_ranking,
                        |list| holdout_list_quality(list, quality_item),
                        guard_on,
                    ),
                )?,
                Some(WeakResolution::Fallback) | None => {
                    (rs_order.clone(), SourceTag::LlmRejectedFallbackRs)
                }
            }
        };
        outcomes.push(UserOutcome {
            user: u,
            weak,
            tag,
            test_item: test.item,
            final_ranking,
            rs_ranking: rs_order,
            full_pool_auc: full_pool_auc[&u],
        });
    }

    let merged_rows: Vec<(usize, Vec<usize>, &'static str)> = outcomes
        .iter()
        .map(|o| (o.user, o.final_ranking.clone(), o.tag.as_str()))
        .collect();
    write_merged(&dir.merged(), &merged_rows, &split.user_ids, &split.item_ids)?;

    let report = evaluate(&outcomes, &cfg.fingerprint());
    write_report_json(&dir.report_json(), &report)?;
    write_text(&dir.report_md(), &emit_table(&report))?;

    let label = |u: usize| {
        split.user_ids.external_of(u).expect("profiled index").to_string()
    };
    write_text(&dir.scatter(), &emit_scatter(&profiles, &label))?;
    let hists = stage("report", emit_histograms(&profiles, 50))?;
    write_text(&dir.hist_sparsity(), &hists.sparsity_csv)?;
    write_text(&dir.hist_train_counts(), &hists.train_counts_csv)?;
    let sparse = decisions.iter().filter(|d| d.above_sparsity).count();
    let weak_count = decisions.iter().filter(|d| d.weak).count();
    let funnel = stage("report", emit_weak_funnel(decisions.len(), sparse, weak_count))?;
    write_text(&dir.funnel(), &funnel)?;

    Ok(PipelineOutput { report, outcomes, profiles, decisions, thresholds })
}

/// Hyperparameter grid search for `train --grid`: fits one model per
/// grid point and keeps the one with the best mean validation AUC.
///
/// The grids are the study's published lists: neighbourhood size ×
/// shrinkage for the item model, learning rate for the pairwise model.
/// Popularity and imported scores have nothing to sweep.
pub fn grid_search(cfg: &Config, split: &SplitDataset) -> Result<(FittedModel, String), RunError> {
    let n = split.n_items();
    let mut best: Option<(f64, FittedModel, String)> = None;
    let mut consider = |model: FittedModel, label: String| -> Result<(), RunError> {
        let profiles = stage("grid", profile_users(&model, split, HoldoutTarget::Valid))?;
        let mean = profiles.iter().map(|p| p.auc).sum::<f64>() / profiles.len() as f64;
        log::info!("grid point {label}: mean validation AUC {mean:.4}");
        if best.as_ref().is_none_or(|(b, _, _)| mean > *b) {
            best = Some((mean, model, format!("{label} (mean valid AUC {mean:.4})")));
        }
        Ok(())
    };
    match cfg.model.kind {
        ModelKind::Itemknn => {
            for &k in &[10usize, 50, 100, 200, 250, 300, 400] {
                for &shrink in &[0.0, 0.1, 0.5, 1.0, 2.0] {
                    let mut knn_cfg = cfg.model.itemknn_config();
                    knn_cfg.k = k;
                    knn_cfg.shrink = shrink;
                    let model =
                        FittedModel::ItemKnn(stage("grid", ItemKnn::fit(&split.train, n, knn_cfg))?);
                    consider(model, format!("k={k} shrink={shrink}"))?;
                }
            }
        }
        ModelKind::Bpr => {
            for &lr in &[5e-5, 1e-4, 5e-4, 7e-4, 1e-3, 5e-3, 7e-3] {
                let mut bpr_cfg = cfg.model.bpr_config(cfg.run.seed);
                bpr_cfg.lr = lr;
                let model = FittedModel::Bpr(stage("grid", Bpr::fit(&split.train, n, bpr_cfg))?);
                consider(model, format!("lr={lr}"))?;
            }
        }
        ModelKind::Mostpop | ModelKind::Import => {
            return Err(RunError::Usage(format!(
                "--grid has nothing to sweep for model.kind = \"{}\"",
                match cfg.model.kind {
                    ModelKind::Mostpop => "mostpop",
                    _ => "import",
                }
            )));
        }
    }
    let (_, model, label) = best.expect("grids are non-empty");
    Ok((model, label))
}
