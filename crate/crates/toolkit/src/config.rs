//! Run configuration: a sectioned TOML file, flag overrides, and the
//! effective-config snapshot.
//!
//! Unknown keys are a hard error in every section — a typo must never
//! silently fall back to a default. The effective configuration (file
//! values with command-line overrides applied) is serialized back to
//! TOML as `config.snapshot` in the run directory, and its SHA-256 hex
//! digest becomes the report's `config_fingerprint`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::runerr::RunError;
use weakrec_core::corpus::JsonFields;
use weakrec_core::gate::{GateConfig, SparsityThreshold};
use weakrec_core::llm::DecodingParams;
use weakrec_core::prompt::{MatchMode, PresentationOrder};
use weakrec_core::recsys::{BprConfig, ItemKnnConfig};

/// Source data format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum DataFormat {
    /// `::`-separated `user::item::rating::timestamp` lines.
    Movielens,
    /// One JSON object per line with configurable field names.
    Amazon,
}

/// Title file format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TitlesFormat {
    /// `item::title::genres` lines.
    Movielens,
    /// CSV with header `item,title`.
    Csv,
}

/// The `[dataset]` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    /// Raw interaction file format.
    pub format: DataFormat,
    /// Path to the raw interaction file.
    pub path: Option<String>,
    /// Directory of prepared splits (used instead of `path` when set).
    pub split_dir: Option<String>,
    /// Iterative k-core threshold applied to the raw log.
    pub kcore: usize,
    /// JSON field holding the user ID (amazon format).
    pub user_field: String,
    /// JSON field holding the item ID (amazon format).
    pub item_field: String,
    /// JSON field holding the rating (amazon format).
    pub rating_field: String,
    /// JSON field holding the timestamp (amazon format).
    pub timestamp_field: String,
    /// Path to the item title file; absent means synthesized titles.
    pub titles: Option<String>,
    /// Title file format.
    pub titles_format: TitlesFormat,
}

impl Default for DatasetSection {
    fn default() -> Self {
        let json = JsonFields::default();
        DatasetSection {
            format: DataFormat::Movielens,
            path: None,
            split_dir: None,
            kcore: 5,
            user_field: json.user,
            item_field: json.item,
            rating_field: json.rating,
            timestamp_field: json.timestamp,
            titles: None,
            titles_format: TitlesFormat::Movielens,
        }
    }
}

impl DatasetSection {
    /// The amazon-format field-name mapping from this section.
    pub fn json_fields(&self) -> JsonFields {
        JsonFields {
            user: self.user_field.clone(),
            item: self.item_field.clone(),
            rating: self.rating_field.clone(),
            timestamp: self.timestamp_field.clone(),
        }
    }
}

/// Which recommender to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Item-based k-nearest-neighbour collaborative filtering.
    Itemknn,
    /// Pairwise-ranking matrix factorization.
    Bpr,
    /// Popularity baseline.
    Mostpop,
    /// Externally computed scores from a CSV file.
    Import,
}

/// The `[model]` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    /// Recommender family.
    pub kind: ModelKind,
    /// Neighbourhood size (itemknn).
    pub k: usize,
    /// Similarity shrinkage (itemknn).
    pub shrink: f64,
    /// Use binary interaction weights instead of ratings (itemknn).
    pub binarize: bool,
    /// Latent dimension (bpr).
    pub d: usize,
    /// Learning rate (bpr).
    pub lr: f64,
    /// L2 regularization (bpr).
    pub reg: f64,
    /// Training epochs (bpr).
    pub epochs: usize,
    /// Path to a `user,item,score` CSV (import).
    pub scores: Option<String>,
    /// Checkpoint directory to load instead of fitting.
    pub checkpoint: Option<String>,
}

impl Default for ModelSection {
    fn default() -> Self {
        let knn = ItemKnnConfig::default();
        let bpr = BprConfig::default();
        ModelSection {
            kind: ModelKind::Itemknn,
            k: knn.k,
            shrink: knn.shrink,
            binarize: knn.binarize,
            d: bpr.d,
            lr: bpr.lr,
            reg: bpr.reg,
            epochs: bpr.epochs,
            scores: None,
            checkpoint: None,
        }
    }
}

impl ModelSection {
    /// The itemknn hyperparameters from this section.
    pub fn itemknn_config(&self) -> ItemKnnConfig {
        ItemKnnConfig { k: self.k, shrink: self.shrink, binarize: self.binarize }
    }

    /// The bpr hyperparameters from this section, seeded by the run seed.
    pub fn bpr_config(&self, seed: u64) -> BprConfig {
        BprConfig { d: self.d, lr: self.lr, reg: self.reg, epochs: self.epochs, seed }
    }
}

/// Sparsity threshold: a fixed value or the dataset mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SparsitySetting {
    /// An explicit threshold in `[0, 1]`.
    Fixed(f64),
    /// The marker string `"auto"`.
    Auto(AutoMarker),
}

/// The literal string `"auto"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AutoMarker {
    /// Resolve to the mean profile sparsity.
    Auto,
}

impl SparsitySetting {
    /// Converts to the gate-layer threshold type.
    pub fn to_threshold(self) -> SparsityThreshold {
        match self {
            SparsitySetting::Fixed(v) => SparsityThreshold::Fixed(v),
            SparsitySetting::Auto(_) => SparsityThreshold::Auto,
        }
    }
}

impl std::str::FromStr for SparsitySetting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(SparsitySetting::Auto(AutoMarker::Auto));
        }
        s.parse::<f64>()
            .map(SparsitySetting::Fixed)
            .map_err(|_| format!("expected a number in [0,1] or \"auto\", got '{s}'"))
    }
}

/// Which holdout item drives a decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum HoldoutChoice {
    /// The most recent interaction (evaluation target).
    Test,
    /// The second most recent interaction (deployment-realistic).
    Valid,
}

/// The `[gate]` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GateSection {
    /// Performance threshold; users at or below are candidates for help.
    pub t_perf: f64,
    /// Sparsity threshold; users strictly above qualify.
    pub t_sparsity: SparsitySetting,
    /// Holdout used to compute the profiling AUC.
    pub gate_on: HoldoutChoice,
}

impl Default for GateSection {
    fn default() -> Self {
        GateSection {
            t_perf: 0.5,
            t_sparsity: SparsitySetting::Auto(AutoMarker::Auto),
            gate_on: HoldoutChoice::Test,
        }
    }
}

impl GateSection {
    /// Converts to the gate-layer config.
    pub fn gate_config(&self) -> GateConfig {
        GateConfig { t_p: self.t_perf, t_s: self.t_sparsity.to_threshold() }
    }
}

/// Candidate presentation order inside the prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PresentationChoice {
    /// Seeded random shuffle (the default).
    Shuffled,
    /// Recommender order, for echo-style ablations.
    RsRank,
}

/// Response title matching mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchChoice {
    /// Exact normalized substring matching.
    Exact,
    /// Also accept near-miss list lines within an edit budget.
    Fuzzy,
}

/// The `[prompt]` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PromptSection {
    /// Candidate list size, held-out item included.
    pub j: usize,
    /// Most recent train interactions included as history.
    pub history_cap: usize,
    /// Candidate presentation order.
    pub presentation: PresentationChoice,
    /// Title matching mode for response parsing.
    pub matching: MatchChoice,
    /// Edit budget for fuzzy matching.
    pub max_edits: usize,
}

impl Default for PromptSection {
    fn default() -> Self {
        PromptSection {
            j: 20,
            history_cap: 50,
            presentation: PresentationChoice::Shuffled,
            matching: MatchChoice::Exact,
            max_edits: 2,
        }
    }
}

impl PromptSection {
    /// Converts to the prompt-layer presentation policy.
    pub fn presentation_order(&self) -> PresentationOrder {
        match self.presentation {
            PresentationChoice::Shuffled => PresentationOrder::Shuffled,
            PresentationChoice::RsRank => PresentationOrder::RsRank,
        }
    }

    /// Converts to the prompt-layer match mode.
    pub fn match_mode(&self) -> MatchMode {
        match self.matching {
            MatchChoice::Exact => MatchMode::Exact,
            MatchChoice::Fuzzy => MatchMode::Fuzzy { max_edits: self.max_edits },
        }
    }
}

/// Which completion backend serves the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    /// Deterministic test oracle (held-out item first).
    MockOracle,
    /// Echo of the presented candidate order.
    MockIdentity,
    /// Seeded random permutation.
    MockRandom,
    /// Chat-completion HTTP client.
    Http,
}

/// The `[backend]` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendSection {
    /// Backend implementation.
    pub kind: BackendKind,
    /// Model name sent in HTTP requests.
    pub model: String,
    /// Base URL of the chat-completion API.
    pub base_url: String,
    /// Sampling temperature.
    pub temperature: f64,
    /// Nucleus-sampling mass.
    pub top_p: f64,
    /// Maximum output tokens.
    pub max_tokens: u32,
    /// Maximum in-flight HTTP requests.
    pub concurrency: usize,
    /// Directory for the content-addressed response cache.
    pub cache_dir: String,
    /// Seed for the mock-random backend.
    pub mock_seed: u64,
}

impl Default for BackendSection {
    fn default() -> Self {
        let params = DecodingParams::default();
        BackendSection {
            kind: BackendKind::MockOracle,
            model: "gpt-4".into(),
            base_url: "https://api.openai.com/v1".into(),
            temperature: params.temperature,
            top_p: params.top_p,
            max_tokens: params.max_tokens,
            concurrency: 4,
            cache_dir: ".weakrec-cache".into(),
            mock_seed: 0,
        }
    }
}

impl BackendSection {
    /// Decoding parameters from this section.
    pub fn decoding_params(&self) -> DecodingParams {
        DecodingParams {
            temperature: self.temperature,
            top_p: self.top_p,
            max_tokens: self.max_tokens,
        }
    }
}

/// The `[budget]` section; absent limits mean unlimited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BudgetSection {
    /// Maximum completion requests per run.
    pub max_requests: Option<u64>,
    /// Maximum cumulative prompt characters per run.
    pub max_prompt_chars: Option<u64>,
}

/// Guard mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum GuardChoice {
    /// Accept the reranked list only when strictly better.
    On,
    /// Always accept the reranked list.
    Off,
}

/// The `[run]` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// Master seed for every stochastic step.
    pub seed: u64,
    /// Run directory for all artifacts.
    pub out_dir: String,
    /// Guard mode for the merge step.
    pub guard: GuardChoice,
    /// Holdout item the guard's quality check uses.
    pub quality_on: HoldoutChoice,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: 42,
            out_dir: "runs/default".into(),
            guard: GuardChoice::On,
            quality_on: HoldoutChoice::Test,
        }
    }
}

/// The complete configuration, one struct per file section.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    /// Source data.
    pub dataset: DatasetSection,
    /// Recommender.
    pub model: ModelSection,
    /// Weak-user gate.
    pub gate: GateSection,
    /// Prompt construction and parsing.
    pub prompt: PromptSection,
    /// Completion backend.
    pub backend: BackendSection,
    /// Spend ceilings.
    pub budget: BudgetSection,
    /// Run-level switches.
    pub run: RunSection,
}

/// Command-line overrides; every field beats the file value when set.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    /// Raw data path.
    pub data: Option<String>,
    /// Prepared-split directory.
    pub split_dir: Option<String>,
    /// Data format.
    pub format: Option<DataFormat>,
    /// k-core threshold.
    pub kcore: Option<usize>,
    /// Title file.
    pub titles: Option<String>,
    /// Model kind.
    pub model: Option<ModelKind>,
    /// Checkpoint directory to load.
    pub checkpoint: Option<String>,
    /// Backend kind.
    pub backend: Option<BackendKind>,
    /// Guard mode.
    pub guard: Option<GuardChoice>,
    /// Candidate list size.
    pub j: Option<usize>,
    /// Master seed.
    pub seed: Option<u64>,
    /// Run directory.
    pub out_dir: Option<String>,
    /// Performance threshold.
    pub t_perf: Option<f64>,
    /// Sparsity threshold.
    pub t_sparsity: Option<SparsitySetting>,
    /// Gate holdout.
    pub gate_on: Option<HoldoutChoice>,
    /// Guard-quality holdout.
    pub quality_on: Option<HoldoutChoice>,
}

impl Config {
    /// Parses a TOML config file; unknown keys are an error.
    pub fn from_file(path: &Path) -> Result<Config, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Config::from_toml(&text)
            .map_err(|e| RunError::Usage(format!("config {}: {e}", path.display())))
    }

    /// Parses config TOML from a string.
    pub fn from_toml(text: &str) -> Result<Config, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Applies command-line overrides on top of the file values.
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = &o.data {
            self.dataset.path = Some(v.clone());
        }
        if let Some(v) = &o.split_dir {
            self.dataset.split_dir = Some(v.clone());
        }
        if let Some(v) = o.format {
            self.dataset.format = v;
        }
        if let Some(v) = o.kcore {
            self.dataset.kcore = v;
        }
        if let Some(v) = &o.titles {
            self.dataset.titles = Some(v.clone());
        }
        if let Some(v) = o.model {
            self.model.kind = v;
        }
        if let Some(v) = &o.checkpoint {
            self.model.checkpoint = Some(v.clone());
        }
        if let Some(v) = o.backend {
            self.backend.kind = v;
        }
        if let Some(v) = o.guard {
            self.run.guard = v;
        }
        if let Some(v) = o.j {
            self.prompt.j = v;
        }
        if let Some(v) = o.seed {
            self.run.seed = v;
        }
        if let Some(v) = &o.out_dir {
            self.run.out_dir = v.clone();
        }
        if let Some(v) = o.t_perf {
            self.gate.t_perf = v;
        }
        if let Some(v) = o.t_sparsity {
            self.gate.t_sparsity = v;
        }
        if let Some(v) = o.gate_on {
            self.gate.gate_on = v;
        }
        if let Some(v) = o.quality_on {
            self.run.quality_on = v;
        }
    }

    /// Sanity checks that only cross-field logic can catch.
    pub fn validate(&self) -> Result<(), RunError> {
        if self.prompt.j == 0 {
            return Err(RunError::Usage("prompt.j must be at least 1".into()));
        }
        if self.backend.concurrency == 0 {
            return Err(RunError::Usage("backend.concurrency must be at least 1".into()));
        }
        if self.model.kind == ModelKind::Import && self.model.scores.is_none() {
            return Err(RunError::Usage("model.kind = \"import\" requires model.scores".into()));
        }
        if let SparsitySetting::Fixed(v) = self.gate.t_sparsity {
            if !(0.0..=1.0).contains(&v) {
                return Err(RunError::Usage(format!(
                    "gate.t_sparsity must lie in [0,1], got {v}"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.gate.t_perf) {
            return Err(RunError::Usage(format!(
                "gate.t_perf must lie in [0,1], got {}",
                self.gate.t_perf
            )));
        }
        Ok(())
    }

    /// The effective configuration as deterministic snapshot TOML.
    pub fn snapshot(&self) -> String {
        // Serialization of this struct cannot fail: all keys are strings.
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 hex digest of the snapshot text.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.snapshot().as_bytes()))
    }
}
