//! `schemaforge` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 provider or sidecar failure.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use schemaforge::config::Config;
use schemaforge::corpus::{
    LibraryMeta, Partition, SchemaLibrary, StepCorpus, StepLoadOptions, TaskRecord, TaskRegistry, VideoCorpus,
    VideoLoadOptions,
};
use schemaforge::editing::{edit_schema, EditTask};
use schemaforge::eval::{
    length_breakdown, load_grid, run_experiment, similarity_breakdown, write_rows_csv, write_summary_csv,
    DatasetManifest, ExperimentConfig, ExperimentContext,
};
use schemaforge::induction::induce_library;
use schemaforge::retrieval::{library_tasks, plan_query, rank_pool, Mode, PlanContext};
use schemaforge::scoring::{Matcher, ScorerProvider};
use schemaforge::segmentation::preprocess_corpus;
use schemaforge::similarity::attach_images;
use schemaforge::synthworld::{generate, WorldSpec};
use schemaforge::{Error, Result};

#[derive(Parser)]
#[command(name = "schemaforge", version, about = "Schema induction, editing and schema-guided video retrieval")]
struct Cli {
    /// Flat TOML config file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for every parallel stage.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// synthetic, file or sidecar.
    #[arg(long, global = true)]
    provider: Option<String>,
    /// Synthetic fixture or recorded responses file.
    #[arg(long, global = true, visible_alias = "provider-fixture")]
    fixture: Option<PathBuf>,
    #[arg(long, global = true)]
    sidecar_url: Option<String>,
    /// Any config key, e.g. `--set retrieval.normalize_g=true`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reduce each video to its representative clips.
    Preprocess(PreprocessArgs),
    /// Induce a schema library from known-task videos.
    Induce(InduceArgs),
    /// Edit one known task's schema for another task.
    Edit(EditArgs),
    /// Rank a video pool for one query.
    Retrieve(RetrieveArgs),
    /// Run an experiment grid over a query manifest.
    Eval(EvalArgs),
    /// Generate a synthetic world.
    Synth(SynthArgs),
}

#[derive(Args)]
struct PreprocessArgs {
    #[arg(long)]
    videos: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    k_min: Option<usize>,
    #[arg(long)]
    k_max: Option<usize>,
}

#[derive(Args)]
struct InduceArgs {
    #[arg(long)]
    tasks: PathBuf,
    #[arg(long)]
    videos: PathBuf,
    #[arg(long)]
    steps: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    top_n: Option<usize>,
    #[arg(long)]
    top_m: Option<usize>,
    #[arg(long)]
    cluster_th: Option<f64>,
    #[arg(long)]
    min_videos: Option<usize>,
}

#[derive(Args)]
struct EditArgs {
    #[arg(long)]
    library: PathBuf,
    /// Task registry; without it tasks resolve through the library.
    #[arg(long)]
    tasks: Option<PathBuf>,
    /// Source task id or name.
    #[arg(long)]
    source: String,
    /// Target task id or name; an unregistered name is taken as is.
    #[arg(long)]
    target: String,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct RetrieveArgs {
    /// Task id or name; an unregistered name is taken as is.
    #[arg(long)]
    query: String,
    #[arg(long)]
    pool: PathBuf,
    #[arg(long)]
    library: Option<PathBuf>,
    #[arg(long)]
    tasks: Option<PathBuf>,
    /// task_images.jsonl for visual task similarity.
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long, default_value = "global")]
    mode: Mode,
    #[arg(long)]
    r: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Defaults to the pool named in the manifest header.
    #[arg(long)]
    pool: Option<PathBuf>,
    #[arg(long)]
    library: Option<PathBuf>,
    #[arg(long)]
    tasks: Option<PathBuf>,
    #[arg(long)]
    images: Option<PathBuf>,
    /// JSON list of configs; defaults to a single global-mode run.
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Lower clip-count bounds of the length bins.
    #[arg(long, value_delimiter = ',', default_value = "0,8,16,32")]
    length_edges: Vec<usize>,
    /// Queries per task-similarity batch.
    #[arg(long, default_value_t = 400)]
    similarity_batch: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// World spec JSON; missing fields take defaults.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn exit_code(e: &Error) -> u8 {
    if e.is_provider() {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn resolve_config(cli: &Cli) -> Result<Config> {
    let mut cfg = Config::resolve(cli.config.as_deref())?;
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Invalid { what: "flag", reason: format!("--set {kv}: expected KEY=VALUE") })?;
        cfg.set_str(k.trim(), v.trim())?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = Some(w);
    }
    if let Some(p) = &cli.provider {
        cfg.provider = p.parse()?;
    }
    if let Some(f) = &cli.fixture {
        cfg.fixture = Some(f.clone());
    }
    if let Some(u) = &cli.sidecar_url {
        cfg.sidecar_url = Some(u.clone());
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = resolve_config(&cli)?;
    match &cli.command {
        Command::Preprocess(a) => {
            set_opt(&mut cfg.segmentation.k_min, a.k_min);
            set_opt(&mut cfg.segmentation.k_max, a.k_max);
        }
        Command::Induce(a) => {
            set_opt(&mut cfg.induction.per_clip_top_n, a.top_n);
            set_opt(&mut cfg.induction.per_task_top_m, a.top_m);
            set_opt(&mut cfg.induction.cluster_distance_threshold, a.cluster_th);
            set_opt(&mut cfg.induction.min_videos, a.min_videos);
        }
        Command::Edit(a) => set_opt(&mut cfg.edit.beta, a.beta),
        Command::Retrieve(a) => {
            set_opt(&mut cfg.retrieval.r, a.r);
            set_opt(&mut cfg.retrieval.lambda, a.lambda);
        }
        Command::Eval(_) | Command::Synth(_) => {}
    }
    cfg.validate()?;
    log::info!("seed {}", cfg.seed);
    log::info!("config {}", serde_json::to_string(&cfg.echo())?);

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cfg.workers {
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Invalid { what: "workers", reason: e.to_string() })?;
    pool.install(|| match &cli.command {
        Command::Preprocess(a) => preprocess(&cfg, a),
        Command::Induce(a) => induce(&cfg, a),
        Command::Edit(a) => edit(&cfg, a),
        Command::Retrieve(a) => retrieve(&cfg, a),
        Command::Eval(a) => eval(&cfg, a),
        Command::Synth(a) => synth(a, cli.seed),
    })
}

fn set_opt<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    let raw = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, raw).map_err(|e| io_error(path, e))
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source }
}

fn load_videos(cfg: &Config, path: &Path) -> Result<VideoCorpus> {
    VideoCorpus::load(
        path,
        &VideoLoadOptions {
            embeddings: None,
            rank_cutoff: cfg.rank_cutoff(),
        },
    )
}

fn matcher(cfg: &Config) -> Matcher {
    Matcher::new(cfg.normalize)
}

fn echo_value(cfg: &Config, extra: &[(&str, Value)]) -> Value {
    let mut echo = cfg.echo();
    for (k, v) in extra {
        echo.insert((*k).to_string(), v.clone());
    }
    json!(echo)
}

fn preprocess(cfg: &Config, a: &PreprocessArgs) -> Result<()> {
    let corpus = load_videos(cfg, &a.videos)?;
    let out = preprocess_corpus(&corpus, cfg.seed, &cfg.segmentation)?;
    out.save_with_binary(&a.out, &a.out.with_extension("bin"))?;
    log::info!("{} videos segmented into {}", out.len(), a.out.display());
    Ok(())
}

fn induce(cfg: &Config, a: &InduceArgs) -> Result<()> {
    let provider = cfg.provider()?;
    let registry = TaskRegistry::load(&a.tasks)?;
    let videos = load_videos(cfg, &a.videos)?;
    registry.check_videos(&videos)?;
    let steps = StepCorpus::load(&a.steps, &StepLoadOptions::default(), Some(provider.as_ref()))?;
    let mut lib = induce_library(&registry, &videos, &steps, &matcher(cfg), &cfg.induction)?;
    lib.meta.params.insert("seed".into(), cfg.seed.into());
    lib.meta.params.insert("rank_cutoff".into(), cfg.rank_cutoff.into());
    lib.save(&a.out)
}

/// Tasks from the registry file if given, else the library's named tasks.
fn load_tasks(
    provider: &dyn ScorerProvider,
    tasks: Option<&Path>,
    images: Option<&Path>,
    lib: Option<&SchemaLibrary>,
) -> Result<TaskRegistry> {
    let mut registry = match (tasks, lib) {
        (Some(p), _) => TaskRegistry::load(p)?,
        (None, Some(l)) => TaskRegistry::from_tasks(library_tasks(l)?)?,
        (None, None) => TaskRegistry::from_tasks([])?,
    };
    if let Some(p) = images {
        let n = attach_images(&mut registry, p, None, Some(provider))?;
        log::info!("attached images to {n} tasks");
    }
    Ok(registry)
}

fn resolve_task(registry: &TaskRegistry, lib: Option<&SchemaLibrary>, key: &str) -> Option<TaskRecord> {
    if let Some(t) = registry.resolve(key) {
        return Some(t.clone());
    }
    let names = &lib?.meta.task_names;
    names
        .iter()
        .find(|(id, name)| id.as_str() == key || name.as_str() == key)
        .map(|(id, name)| TaskRecord::new(id.clone(), name.clone(), Partition::Unknown))
}

fn load_library(path: &Path, registry: Option<&TaskRegistry>, provider: &dyn ScorerProvider) -> Result<SchemaLibrary> {
    SchemaLibrary::load(path, registry, Some(provider))
}

fn as_edit(t: &TaskRecord) -> EditTask<'_> {
    EditTask {
        task_id: &t.task_id,
        name: &t.name,
        main_object: t.main_object.as_deref(),
    }
}

fn edit(cfg: &Config, a: &EditArgs) -> Result<()> {
    let provider = cfg.provider()?;
    let file_registry = a.tasks.as_deref().map(TaskRegistry::load).transpose()?;
    let lib = load_library(&a.library, file_registry.as_ref(), provider.as_ref())?;
    let registry = match file_registry {
        Some(r) => r,
        None => TaskRegistry::from_tasks(library_tasks(&lib)?)?,
    };
    let source = resolve_task(&registry, Some(&lib), &a.source).ok_or_else(|| Error::UnknownTask(a.source.clone()))?;
    let source_schema = lib.get(&source.task_id).ok_or_else(|| Error::Invalid {
        what: "edit",
        reason: format!("no schema for source task {}", source.task_id),
    })?;
    let target = resolve_task(&registry, Some(&lib), &a.target)
        .unwrap_or_else(|| TaskRecord::new(a.target.clone(), a.target.clone(), Partition::Unknown));
    let (schema, trace) = edit_schema(provider.as_ref(), source_schema, &as_edit(&source), &as_edit(&target), &cfg.edit)?;
    log::info!("{} -> {}: {} of {} steps kept", source.name, target.name, schema.len(), source_schema.len());

    let mut params: BTreeMap<String, Value> = cfg.echo();
    params.insert("source_task_id".into(), source.task_id.clone().into());
    let mut out = SchemaLibrary {
        schemas: BTreeMap::new(),
        meta: LibraryMeta {
            corpus_fingerprint: lib.meta.corpus_fingerprint.clone(),
            params,
            task_names: BTreeMap::from([(target.task_id.clone(), target.name.clone())]),
        },
    };
    out.insert(schema);
    out.save(&a.out)?;
    if let Some(p) = &a.trace {
        write_json(p, &trace)?;
    }
    Ok(())
}

fn retrieve(cfg: &Config, a: &RetrieveArgs) -> Result<()> {
    let mode = a.mode;
    let provider = cfg.provider()?;
    let file_registry = a.tasks.as_deref().map(TaskRegistry::load).transpose()?;
    let lib = a
        .library
        .as_deref()
        .map(|p| load_library(p, file_registry.as_ref(), provider.as_ref()))
        .transpose()?;
    let registry = load_tasks(provider.as_ref(), a.tasks.as_deref(), a.images.as_deref(), lib.as_ref())?;
    let pool = load_videos(cfg, &a.pool)?;
    let target = resolve_task(&registry, lib.as_ref(), &a.query)
        .unwrap_or_else(|| TaskRecord::new(a.query.clone(), a.query.clone(), Partition::Unknown));
    let sources: Vec<TaskRecord> = registry.known().cloned().collect();
    let plan = plan_query(
        &PlanContext {
            provider: provider.as_ref(),
            matcher: matcher(cfg),
            library: lib.as_ref(),
            sources: if sources.is_empty() { None } else { Some(&sources) },
            edit: cfg.edit.clone(),
            r: cfg.retrieval.r,
        },
        &target,
        mode,
    )?;
    let mut ranked = rank_pool(&plan, &pool, &cfg.retrieval)?;
    ranked.config = echo_value(cfg, &[("mode", mode.as_str().into())]);
    write_json(&a.out, &ranked)
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

fn eval(cfg: &Config, a: &EvalArgs) -> Result<()> {
    let provider = cfg.provider()?;
    let manifest = DatasetManifest::load(&a.manifest)?;
    let pool_path = a.pool.clone().or_else(|| manifest.pool.clone()).ok_or_else(|| Error::Invalid {
        what: "eval",
        reason: "no --pool and the manifest names none".into(),
    })?;
    let pool = load_videos(cfg, &pool_path)?;
    manifest.validate(&pool)?;
    let file_registry = a.tasks.as_deref().map(TaskRegistry::load).transpose()?;
    let lib = a
        .library
        .as_deref()
        .map(|p| load_library(p, file_registry.as_ref(), provider.as_ref()))
        .transpose()?;
    let registry = load_tasks(provider.as_ref(), a.tasks.as_deref(), a.images.as_deref(), lib.as_ref())?;
    let grid = match &a.grid {
        Some(p) => load_grid(p)?,
        None => vec![ExperimentConfig::new("global", Mode::Global)],
    };
    let mut names = std::collections::BTreeSet::new();
    for c in &grid {
        if !names.insert(file_stem(&c.name)) {
            return Err(Error::Invalid { what: "grid", reason: format!("duplicate config name {:?}", c.name) });
        }
    }

    let ctx = ExperimentContext {
        provider: provider.as_ref(),
        matcher: matcher(cfg),
        registry: &registry,
        library: lib.as_ref(),
        pool: &pool,
        retrieval: cfg.retrieval.clone(),
        edit: cfg.edit.clone(),
        ks: cfg.ks.clone(),
        echo: cfg.echo(),
    };
    let reports = run_experiment(&ctx, &manifest, &grid)?;

    std::fs::create_dir_all(&a.out).map_err(|e| io_error(&a.out, e))?;
    for r in &reports {
        write_json(&a.out.join(format!("{}.json", file_stem(&r.config.name))), r)?;
        log::info!(
            "{}: P@1 {:.3} MRR {:.3} mean r {:.2} med r {:.1}",
            r.config.name,
            r.metrics.p_at_1,
            r.metrics.mrr,
            r.metrics.mean_rank,
            r.metrics.median_rank
        );
    }
    write_summary_csv(&a.out.join("summary.csv"), &reports, &cfg.ks)?;
    write_rows_csv(&a.out.join("length.csv"), &length_breakdown(&reports, &pool, &a.length_edges))?;
    write_rows_csv(&a.out.join("similarity.csv"), &similarity_breakdown(&reports, a.similarity_batch))?;
    Ok(())
}

/// `--seed` overrides the seed in the world file.
fn synth(a: &SynthArgs, seed: Option<u64>) -> Result<()> {
    let mut spec: WorldSpec = match &a.spec {
        Some(p) => {
            let raw = std::fs::read_to_string(p).map_err(|e| io_error(p, e))?;
            serde_json::from_str(&raw)?
        }
        None => WorldSpec::default(),
    };
    set_opt(&mut spec.seed, seed);
    let world = generate(&spec)?;
    world.write(&a.out)?;
    log::info!(
        "world with {} tasks, {} steps, {} training and {} pool videos in {}",
        world.tasks.len(),
        world.steps.len(),
        world.train.len(),
        world.pool.len(),
        a.out.display()
    );
    Ok(())
}
