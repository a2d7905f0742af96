//! `weakrec` — hybrid recommender/LLM ranking pipeline.
//!
//! Subcommands mirror the pipeline stages (`prepare`, `train`,
//! `profile`, `gate`, `run`, `report`) plus `fixture` for generating a
//! synthetic demo corpus. Behaviour comes from a TOML config file;
//! every flag below overrides its file counterpart. Exit codes: 0
//! success, 1 usage or config error, 2 data error, 3 backend error, 4
//! budget exhausted.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use weakrec::config::{
    BackendKind, Config, DataFormat, GuardChoice, HoldoutChoice, ModelKind, Overrides,
    SparsitySetting,
};
use weakrec::fixture::{clustered_corpus, write_movielens_fixture, CorpusSpec};
use weakrec::io::{
    read_gate_counts, read_profiles_raw, read_report_json, write_gate, write_profiles, write_text,
    RunDir,
};
use weakrec::pipeline;
use weakrec::runerr::RunError;
use weakrec_core::gate::{decide_all, resolve_thresholds};
use weakrec_core::metrics::{profile_users, HoldoutTarget};
use weakrec_core::recsys::Recommender;
use weakrec_core::report::{emit_histograms, emit_scatter, emit_table, emit_weak_funnel};

const CONFIG_HELP: &str = "\
CONFIG FILE KEYS (TOML; unknown keys are an error):
  [dataset]  format = \"movielens\" | \"amazon\"     raw data layout
             path                                  raw interaction file
             split_dir                             prepared-split directory (read or written)
             kcore = 5                             iterative k-core threshold
             user_field = \"reviewerID\"             JSON field names for amazon format
             item_field = \"asin\"
             rating_field = \"overall\"
             timestamp_field = \"unixReviewTime\"
             titles                                title file path (prompts need titles)
             titles_format = \"movielens\" | \"csv\"
  [model]    kind = \"itemknn\" | \"bpr\" | \"mostpop\" | \"import\"
             k = 100, shrink = 0.0, binarize = false        item-neighbourhood knobs
             d = 64, lr = 0.005, reg = 0.01, epochs = 30    factor-model knobs
             scores                                external score CSV (kind = import)
             checkpoint                            model directory (read or written)
  [gate]     t_perf = 0.5                          weak needs AUC <= t_perf ...
             t_sparsity = \"auto\"                   ... and sparsity > t_sparsity (auto = mean)
             gate_on = \"test\" | \"valid\"            holdout the profiles gate on
  [prompt]   j = 20                                candidate-list size
             history_cap = 50                      prompt history length cap
             presentation = \"shuffled\" | \"rs-rank\"
             matching = \"exact\" | \"fuzzy\", max_edits = 2
  [backend]  kind = \"mock-oracle\" | \"mock-identity\" | \"mock-random\" | \"http\"
             model = \"gpt-4\", base_url, temperature = 0.0, top_p = 0.1, max_tokens = 512
             concurrency = 4, cache_dir = \".weakrec-cache\", mock_seed = 0
  [budget]   max_requests, max_prompt_chars        optional spend ceilings
  [run]      seed = 42, out_dir = \"runs/default\"
             guard = \"on\" | \"off\"                  accept reranks only when strictly better
             quality_on = \"test\" | \"valid\"         holdout the guard scores against

ENVIRONMENT:
  WEAKREC_API_KEY    API key for the http backend (never read from the config file)

EXIT CODES:
  0 success   1 usage/config   2 data   3 backend   4 budget";

#[derive(Parser)]
#[command(
    name = "weakrec",
    version,
    about = "Gate weak users of a recommender and rerank their candidates with an LLM",
    after_help = CONFIG_HELP
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Config-file path plus every supported flag override.
#[derive(Args, Default)]
struct ConfigFlags {
    /// Config file (TOML).
    #[arg(short, long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Raw interaction data path.
    #[arg(long, value_name = "PATH")]
    data: Option<String>,
    /// Prepared split directory.
    #[arg(long, value_name = "DIR")]
    split_dir: Option<String>,
    /// Raw data format.
    #[arg(long, value_enum)]
    format: Option<DataFormat>,
    /// k-core threshold.
    #[arg(long)]
    kcore: Option<usize>,
    /// Item title file.
    #[arg(long, value_name = "FILE")]
    titles: Option<String>,
    /// Recommender kind.
    #[arg(long, value_enum)]
    model: Option<ModelKind>,
    /// Model checkpoint directory.
    #[arg(long, value_name = "DIR")]
    checkpoint: Option<String>,
    /// Completion backend.
    #[arg(long, value_enum)]
    backend: Option<BackendKind>,
    /// Rerank guard mode.
    #[arg(long, value_enum)]
    guard: Option<GuardChoice>,
    /// Candidate-list size.
    #[arg(long)]
    j: Option<usize>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Run output directory.
    #[arg(long, value_name = "DIR")]
    out_dir: Option<String>,
    /// Gate performance threshold.
    #[arg(long)]
    t_perf: Option<f64>,
    /// Gate sparsity threshold (a number, or "auto" for the mean).
    #[arg(long, value_name = "NUM|auto")]
    t_sparsity: Option<SparsitySetting>,
    /// Holdout item the gate profiles score against.
    #[arg(long, value_enum)]
    gate_on: Option<HoldoutChoice>,
    /// Holdout item the rerank guard scores against.
    #[arg(long, value_enum)]
    quality_on: Option<HoldoutChoice>,
}

impl ConfigFlags {
    fn load(&self) -> Result<Config, RunError> {
        let mut cfg = match &self.config {
            Some(path) => Config::from_file(path)?,
            None => Config::default(),
        };
        cfg.apply(&Overrides {
            data: self.data.clone(),
            split_dir: self.split_dir.clone(),
            format: self.format,
            kcore: self.kcore,
            titles: self.titles.clone(),
            model: self.model,
            checkpoint: self.checkpoint.clone(),
            backend: self.backend,
            guard: self.guard,
            j: self.j,
            seed: self.seed,
            out_dir: self.out_dir.clone(),
            t_perf: self.t_perf,
            t_sparsity: self.t_sparsity.clone(),
            gate_on: self.gate_on,
            quality_on: self.quality_on,
        });
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse raw data, apply the k-core filter, and write the split.
    Prepare(ConfigFlags),
    /// Fit a recommender and save its checkpoint.
    Train {
        #[command(flatten)]
        flags: ConfigFlags,
        /// Sweep the hyperparameter grid and keep the best point by
        /// mean validation AUC.
        #[arg(long)]
        grid: bool,
    },
    /// Score every user: per-user AUC and sparsity to profiles.csv.
    Profile(ConfigFlags),
    /// Partition users into weak and non-weak (writes profiles.csv and gate.csv).
    Gate(ConfigFlags),
    /// Execute the full hybrid pipeline into the run directory.
    Run(ConfigFlags),
    /// Re-emit report.md and figure CSVs from a finished run directory.
    Report {
        /// Run directory holding report.json, profiles.csv, gate.csv.
        #[arg(long, value_name = "DIR")]
        run_dir: PathBuf,
    },
    /// Generate a synthetic clustered demo corpus (ratings.dat + movies.dat).
    Fixture {
        /// Output directory.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Number of users.
        #[arg(long, default_value_t = 500)]
        users: usize,
        /// Number of items.
        #[arg(long, default_value_t = 300)]
        items: usize,
        /// Number of taste clusters.
        #[arg(long, default_value_t = 8)]
        clusters: usize,
        /// Corpus seed.
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp
                | clap::error::ErrorKind::DisplayVersion
                | clap::error::ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), RunError> {
    match cli.command {
        Command::Prepare(flags) => cmd_prepare(&flags.load()?),
        Command::Train { flags, grid } => cmd_train(&flags.load()?, grid),
        Command::Profile(flags) => cmd_profile(&flags.load()?, false),
        Command::Gate(flags) => cmd_profile(&flags.load()?, true),
        Command::Run(flags) => cmd_run(&flags.load()?),
        Command::Report { run_dir } => cmd_report(&run_dir),
        Command::Fixture { out, users, items, clusters, seed } => {
            cmd_fixture(&out, users, items, clusters, seed)
        }
    }
}

fn cmd_prepare(cfg: &Config) -> Result<(), RunError> {
    let (split, stats) = pipeline::prepare_from_raw(cfg)?;
    println!(
        "users={} items={} interactions={} sparsity={:.4} dropped_users={}",
        stats.users, stats.items, stats.interactions, stats.sparsity, split.dropped_users
    );
    match cfg.dataset.split_dir.as_deref() {
        Some(dir) => println!("split written to {dir}"),
        None => println!("no dataset.split_dir configured; split not persisted"),
    }
    Ok(())
}

fn cmd_train(cfg: &Config, grid: bool) -> Result<(), RunError> {
    let checkpoint = cfg.model.checkpoint.as_deref().ok_or_else(|| {
        RunError::Usage("train needs model.checkpoint (or --checkpoint) to save into".into())
    })?;
    let (split, _) = pipeline::obtain_split(cfg)?;
    if grid {
        let (model, label) = pipeline::grid_search(cfg, &split)?;
        model.save(Path::new(checkpoint))?;
        println!("best grid point: {label}");
        println!("checkpoint written to {checkpoint}");
    } else {
        let model = pipeline::obtain_model(cfg, &split)?;
        // obtain_model already persisted the fit; saying so keeps the
        // two paths symmetric for the user.
        println!("fitted {} over {} items", model.name(), model.n_items());
        println!("checkpoint written to {checkpoint}");
    }
    Ok(())
}

/// `profile` writes profiles.csv; `gate` also writes gate.csv.
fn cmd_profile(cfg: &Config, with_gate: bool) -> Result<(), RunError> {
    let (split, _) = pipeline::obtain_split(cfg)?;
    let model = pipeline::obtain_model(cfg, &split)?;
    let target = match cfg.gate.gate_on {
        HoldoutChoice::Test => HoldoutTarget::Test,
        HoldoutChoice::Valid => HoldoutTarget::Valid,
    };
    let profiles = profile_users(&model, &split, target)
        .map_err(|e| RunError::from(e).at_stage("profile"))?;
    let dir = RunDir::new(&cfg.run.out_dir);
    std::fs::create_dir_all(&dir.root)
        .map_err(|e| RunError::Data(format!("cannot create {}: {e}", dir.root.display())))?;
    write_profiles(&dir.profiles(), &profiles, &split.user_ids)?;
    println!("profiled {} users -> {}", profiles.len(), dir.profiles().display());
    if with_gate {
        let gate_cfg = cfg.gate.gate_config();
        let (t_p, t_s) = resolve_thresholds(&gate_cfg, &profiles)
            .map_err(|e| RunError::from(e).at_stage("gate"))?;
        let decisions = decide_all(&profiles, &gate_cfg)
            .map_err(|e| RunError::from(e).at_stage("gate"))?;
        write_gate(&dir.gate(), &decisions, &profiles, &split.user_ids)?;
        let sparse = decisions.iter().filter(|d| d.above_sparsity).count();
        let weak = decisions.iter().filter(|d| d.weak).count();
        println!(
            "gate: t_perf={t_p} t_sparsity={t_s:.4} total={} sparse={sparse} weak={weak} -> {}",
            decisions.len(),
            dir.gate().display()
        );
    }
    Ok(())
}

fn cmd_run(cfg: &Config) -> Result<(), RunError> {
    let out = pipeline::run(cfg)?;
    let dir = RunDir::new(&cfg.run.out_dir);
    let tags = &out.report.source_tag_counts;
    println!(
        "run complete: {} users, {} weak (thresholds t_perf={} t_sparsity={:.4})",
        out.report.metrics.users.all,
        out.report.metrics.users.weak,
        out.thresholds.0,
        out.thresholds.1,
    );
    println!(
        "sources: RS={} LLM={} fallback={}",
        tags.rs, tags.llm, tags.llm_rejected_fallback_rs
    );
    println!("report: {}", dir.report_md().display());
    Ok(())
}

fn cmd_report(run_dir: &Path) -> Result<(), RunError> {
    let dir = RunDir::new(run_dir);
    let report = read_report_json(&dir.report_json())?;
    write_text(&dir.report_md(), &emit_table(&report))?;

    let rows = read_profiles_raw(&dir.profiles())?;
    let labels: Vec<String> = rows.iter().map(|(ext, _)| ext.clone()).collect();
    let profiles: Vec<_> = rows.into_iter().map(|(_, p)| p).collect();
    let label = |u: usize| labels[u].clone();
    write_text(&dir.scatter(), &emit_scatter(&profiles, &label))?;
    let hists =
        emit_histograms(&profiles, 50).map_err(|e| RunError::from(e).at_stage("report"))?;
    write_text(&dir.hist_sparsity(), &hists.sparsity_csv)?;
    write_text(&dir.hist_train_counts(), &hists.train_counts_csv)?;

    let (total, sparse, weak) = read_gate_counts(&dir.gate())?;
    let funnel =
        emit_weak_funnel(total, sparse, weak).map_err(|e| RunError::from(e).at_stage("report"))?;
    write_text(&dir.funnel(), &funnel)?;
    println!("report refreshed in {}", dir.root.display());
    Ok(())
}

fn cmd_fixture(
    out: &Path,
    users: usize,
    items: usize,
    clusters: usize,
    seed: u64,
) -> Result<(), RunError> {
    if clusters == 0 || items < clusters || users == 0 {
        return Err(RunError::Usage(
            "fixture needs users >= 1 and items >= clusters >= 1".into(),
        ));
    }
    let fixture = clustered_corpus(&CorpusSpec { users, items, clusters, seed });
    write_movielens_fixture(out, &fixture)?;
    println!(
        "fixture written: {} users, {} items, {} interactions -> {}",
        users,
        items,
        fixture.log.records.len(),
        out.display()
    );
    Ok(())
}
