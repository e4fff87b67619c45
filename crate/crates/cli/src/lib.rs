//! Command-line driver: corpus generation, dictionary and model training,
//! batch linking, evaluation and the latency benchmark.
//!
//! Every option can come from a `key = value` config file (`--config`) or a
//! flag; flags win. `--dry-run` prints the resolved settings and exits.

use std::ffi::OsString;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use brandlink::bench::{self, BenchParams};
use brandlink::config::Config;
use brandlink::data::io::{read_b2e_tsv, read_jsonl, write_jsonl};
use brandlink::data::synth::{generate, CorpusSpec};
use brandlink::data::{
    augment_b2e, gen_weak_labels, map_strong_labels, mix_training, EngagementRecord, InputKind, MixParams,
    PtRecord, StrongLabelRecord,
};
use brandlink::eval::{self, false_alarm_rate, MetricReport};
use brandlink::gazetteer::{build_dictionary, B2eRecord, BrandDictionary, MentionDetector, OracleDetector};
use brandlink::pipeline::{link_batch, LinkMode, LinkerConfig, Matcher, M2E_SCORE_FLOOR};
use brandlink::ptfilter::{
    train_pt_baseline, LinearPtPredictor, NoPtPredictor, OraclePtPredictor, PtAssociations, PtPredictor,
};
use brandlink::text::{fit_idf, FeaturizerConfig};
use brandlink::xmc::{fit, BeamParams, TrainParams, XmcConfig, XmcModel};
use brandlink::{LabeledQuery, LinkResult, Outcome, Query};

/// Bad invocation: unknown key, missing or malformed setting.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Parser, Debug)]
#[command(name = "brandlink", version, about = "Brand entity linking for e-commerce search queries")]
struct Cli {
    /// `key = value` settings file; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = one per core). Outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Print the resolved settings and exit without running.
    #[arg(long, global = true)]
    dry_run: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the store-keyed brand dictionary from a brand-name TSV.
    BuildDict(BuildDictArgs),
    /// Generate a synthetic corpus (dictionary, labels, engagement, PT data, test set).
    GenCorpus(GenCorpusArgs),
    /// Derive weakly-labeled queries from engagement logs.
    GenWeakLabels(WeakArgs),
    /// Train a mention-to-entity or query-to-entity tree classifier.
    TrainXmc(TrainXmcArgs),
    /// Train the baseline query product-type classifier.
    TrainPt(TrainPtArgs),
    /// Link a batch of queries; writes one result per line.
    Link(LinkArgs),
    /// Score predictions against gold labels; prints a table, writes a JSON report.
    Eval(EvalArgs),
    /// Measure beam-search latency across label-space sizes.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct BuildDictArgs {
    /// Input TSV with header `store<TAB>brand_name<TAB>entity_id`.
    #[arg(long, value_name = "PATH")]
    b2e: Option<PathBuf>,
    /// Output dictionary file.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GenCorpusArgs {
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    n_entities: Option<usize>,
    #[arg(long)]
    variants: Option<usize>,
    /// Comma-separated `language:store` pairs.
    #[arg(long)]
    languages: Option<String>,
    #[arg(long)]
    n_branded: Option<usize>,
    #[arg(long)]
    n_nonbranded: Option<usize>,
    #[arg(long)]
    n_engagement: Option<usize>,
    #[arg(long)]
    pt_space: Option<usize>,
    #[arg(long)]
    shared_fraction: Option<f64>,
    #[arg(long)]
    n_test_branded: Option<usize>,
    #[arg(long)]
    n_test_misspelled: Option<usize>,
    #[arg(long)]
    n_test_nonbranded: Option<usize>,
}

#[derive(Args, Debug)]
struct WeakArgs {
    /// Engagement JSON lines.
    #[arg(long, value_name = "PATH")]
    engagement: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    dict: Option<PathBuf>,
    /// Minimum association strength.
    #[arg(long)]
    threshold: Option<f64>,
    /// Output labeled-query JSON lines.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainXmcArgs {
    /// `q2e` (whole query, NIL label included) or `m2e` (mention surface).
    #[arg(long)]
    kind: Option<String>,
    /// Brand dictionary; its surfaces become training examples.
    #[arg(long, value_name = "PATH")]
    dict: Option<PathBuf>,
    /// Strongly-labeled query JSON lines.
    #[arg(long, value_name = "PATH")]
    sl: Option<PathBuf>,
    /// Weakly-labeled query JSON lines (from gen-weak-labels).
    #[arg(long, value_name = "PATH")]
    wl: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Training report JSON.
    #[arg(long, value_name = "PATH")]
    report: Option<PathBuf>,
    #[arg(long)]
    dim: Option<u32>,
    #[arg(long)]
    use_idf: Option<bool>,
    #[arg(long)]
    branching: Option<usize>,
    #[arg(long)]
    max_leaf: Option<usize>,
    #[arg(long)]
    reg: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    prune_threshold: Option<f32>,
    /// Per-source example caps (0 = no cap).
    #[arg(long)]
    cap_b2e: Option<usize>,
    #[arg(long)]
    cap_sl: Option<usize>,
    #[arg(long)]
    cap_wl: Option<usize>,
    /// Split multi-entity labels into one example per entity.
    #[arg(long)]
    split_multi: Option<bool>,
}

#[derive(Args, Debug)]
struct TrainPtArgs {
    /// PT-labeled query JSON lines.
    #[arg(long, value_name = "PATH")]
    data: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long)]
    dim: Option<u32>,
    #[arg(long)]
    use_idf: Option<bool>,
    #[arg(long)]
    reg: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    prune_threshold: Option<f32>,
}

#[derive(Args, Debug)]
struct LinkArgs {
    /// lexical, m2e, q2e or fused.
    #[arg(long)]
    mode: Option<String>,
    /// Query (or labeled query) JSON lines.
    #[arg(long, value_name = "PATH")]
    queries: Option<PathBuf>,
    /// Output link-result JSON lines.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    dict: Option<PathBuf>,
    /// Mention-to-entity model (m2e mode, or fused with `fusion_matcher = m2e`).
    #[arg(long, value_name = "PATH")]
    m2e: Option<PathBuf>,
    /// Query-to-entity model (q2e and fused modes).
    #[arg(long, value_name = "PATH")]
    q2e: Option<PathBuf>,
    /// Two-stage matcher used by fused mode: lexical or m2e.
    #[arg(long)]
    fusion_matcher: Option<String>,
    /// Mention detector: dict or oracle.
    #[arg(long)]
    detector: Option<String>,
    /// Labeled queries whose brand names the oracle detector replays
    /// (defaults to the query file).
    #[arg(long, value_name = "PATH")]
    oracle_labels: Option<PathBuf>,
    /// Trained PT classifier.
    #[arg(long, value_name = "PATH")]
    pt_model: Option<PathBuf>,
    /// Gold PT JSON lines replayed as the PT prediction.
    #[arg(long, value_name = "PATH")]
    pt_oracle: Option<PathBuf>,
    /// Entity-to-PT association TSV.
    #[arg(long, value_name = "PATH")]
    pt_assoc: Option<PathBuf>,
    #[arg(long)]
    beam_size: Option<usize>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    score_floor: Option<f64>,
    /// Candidate score floor for the mention-to-entity matcher.
    #[arg(long)]
    m2e_score_floor: Option<f64>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Labeled query JSON lines.
    #[arg(long, value_name = "PATH")]
    gold: Option<PathBuf>,
    /// Link-result JSON lines, aligned with the gold file.
    #[arg(long, value_name = "PATH")]
    pred: Option<PathBuf>,
    /// Report JSON.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// language, store, overall or file.
    #[arg(long)]
    slice_by: Option<String>,
    /// With `slice_by = file`: one line per query, slice key in the first TSV column.
    #[arg(long, value_name = "PATH")]
    slice_file: Option<PathBuf>,
    #[arg(long)]
    title: Option<String>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Comma-separated label-space sizes.
    #[arg(long)]
    sizes: Option<String>,
    #[arg(long)]
    n_queries: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    beam_size: Option<usize>,
    #[arg(long)]
    queries_per_label: Option<usize>,
    #[arg(long)]
    reg: Option<f64>,
    #[arg(long)]
    prune_threshold: Option<f32>,
    /// Benchmark rows as JSON.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

trait CfgValue {
    fn cfg(&self) -> String;
}

impl CfgValue for PathBuf {
    fn cfg(&self) -> String {
        self.display().to_string()
    }
}

macro_rules! cfg_display {
    ($($t:ty),*) => {$(impl CfgValue for $t { fn cfg(&self) -> String { self.to_string() } })*};
}
cfg_display!(String, usize, u32, u64, f32, f64, bool);

macro_rules! overrides {
    ($s:expr; $($f:ident),*) => {
        vec![$((stringify!($f), $s.$f.as_ref().map(CfgValue::cfg))),*]
    };
}

const GLOBAL_KEYS: &[(&str, &str)] = &[("seed", "42"), ("threads", "0")];

fn xmc_defaults() -> Vec<(&'static str, String)> {
    let x = XmcConfig::default();
    vec![
        ("dim", x.dim.to_string()),
        ("use_idf", x.use_idf.to_string()),
        ("branching", x.branching.to_string()),
        ("max_leaf", x.max_leaf.to_string()),
    ]
}

fn train_defaults() -> Vec<(&'static str, String)> {
    let t = TrainParams::default();
    vec![
        ("reg", t.reg.to_string()),
        ("tol", t.tol.to_string()),
        ("max_epochs", t.max_epochs.to_string()),
        ("prune_threshold", t.prune_threshold.to_string()),
    ]
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::BuildDict(_) => "build-dict",
            Command::GenCorpus(_) => "gen-corpus",
            Command::GenWeakLabels(_) => "gen-weak-labels",
            Command::TrainXmc(_) => "train-xmc",
            Command::TrainPt(_) => "train-pt",
            Command::Link(_) => "link",
            Command::Eval(_) => "eval",
            Command::Bench(_) => "bench",
        }
    }

    fn defaults(&self) -> Vec<(&'static str, String)> {
        defaults_for(self.name())
    }

    fn overrides(&self) -> Vec<(&'static str, Option<String>)> {
        match self {
            Command::BuildDict(a) => overrides!(a; b2e, out),
            Command::GenCorpus(a) => overrides!(a; out_dir, n_entities, variants, languages, n_branded,
                n_nonbranded, n_engagement, pt_space, shared_fraction, n_test_branded, n_test_misspelled,
                n_test_nonbranded),
            Command::GenWeakLabels(a) => overrides!(a; engagement, dict, threshold, out),
            Command::TrainXmc(a) => overrides!(a; kind, dict, sl, wl, out, report, dim, use_idf, branching,
                max_leaf, reg, tol, max_epochs, prune_threshold, cap_b2e, cap_sl, cap_wl, split_multi),
            Command::TrainPt(a) => overrides!(a; data, out, dim, use_idf, reg, tol, max_epochs, prune_threshold),
            Command::Link(a) => overrides!(a; mode, queries, out, dict, m2e, q2e, fusion_matcher, detector,
                oracle_labels, pt_model, pt_oracle, pt_assoc, beam_size, top_k, score_floor, m2e_score_floor),
            Command::Eval(a) => overrides!(a; gold, pred, out, slice_by, slice_file, title),
            Command::Bench(a) => overrides!(a; sizes, n_queries, repeats, beam_size, queries_per_label, reg,
                prune_threshold, out),
        }
    }
}


const COMMANDS: &[&str] = &[
    "build-dict",
    "gen-corpus",
    "gen-weak-labels",
    "train-xmc",
    "train-pt",
    "link",
    "eval",
    "bench",
];

/// Every key a subcommand reads, with its default ("" = unset).
fn defaults_for(command: &str) -> Vec<(&'static str, String)> {
    let s = |v: &[(&'static str, &str)]| v.iter().map(|(k, d)| (*k, d.to_string())).collect::<Vec<_>>();
    match command {
        "build-dict" => s(&[("b2e", ""), ("out", "")]),
        "gen-corpus" => {
            let c = CorpusSpec::default();
            vec![
                ("out_dir", String::new()),
                ("n_entities", c.n_entities.to_string()),
                ("variants", c.surface_variants_per_entity.to_string()),
                ("languages", c.languages.join(",")),
                ("n_branded", c.n_branded_queries.to_string()),
                ("n_nonbranded", c.n_nonbranded_queries.to_string()),
                ("n_engagement", c.n_engagement.to_string()),
                ("pt_space", c.pt_space_size.to_string()),
                ("shared_fraction", c.shared_fraction.to_string()),
                ("n_test_branded", c.n_test_branded.to_string()),
                ("n_test_misspelled", c.n_test_misspelled.to_string()),
                ("n_test_nonbranded", c.n_test_nonbranded.to_string()),
            ]
        }
        "gen-weak-labels" => s(&[("engagement", ""), ("dict", ""), ("threshold", "0.5"), ("out", "")]),
        "train-xmc" => {
            let mut v = s(&[
                ("kind", "q2e"),
                ("dict", ""),
                ("sl", ""),
                ("wl", ""),
                ("out", ""),
                ("report", ""),
                ("cap_b2e", "0"),
                ("cap_sl", "0"),
                ("cap_wl", "0"),
                ("split_multi", "true"),
            ]);
            v.extend(xmc_defaults());
            v.extend(train_defaults());
            v
        }
        "train-pt" => {
            let mut v = s(&[("data", ""), ("out", ""), ("use_idf", "true")]);
            v.push(("dim", FeaturizerConfig::default().dim.to_string()));
            v.extend(train_defaults());
            v
        }
        "link" => {
            let b = BeamParams::default();
            let mut v = s(&[
                ("mode", "lexical"),
                ("queries", ""),
                ("out", ""),
                ("dict", ""),
                ("m2e", ""),
                ("q2e", ""),
                ("fusion_matcher", "lexical"),
                ("detector", "dict"),
                ("oracle_labels", ""),
                ("pt_model", ""),
                ("pt_oracle", ""),
                ("pt_assoc", ""),
            ]);
            v.push(("beam_size", b.beam_size.to_string()));
            v.push(("top_k", b.top_k.to_string()));
            v.push(("score_floor", b.score_floor.to_string()));
            v.push(("m2e_score_floor", M2E_SCORE_FLOOR.to_string()));
            v
        }
        "eval" => s(&[
            ("gold", ""),
            ("pred", ""),
            ("out", ""),
            ("slice_by", "language"),
            ("slice_file", ""),
            ("title", "evaluation"),
        ]),
        "bench" => {
            let b = BenchParams::default();
            let sizes: Vec<String> = b.sizes.iter().map(usize::to_string).collect();
            vec![
                ("sizes", sizes.join(",")),
                ("n_queries", b.n_queries.to_string()),
                ("repeats", b.repeats.to_string()),
                ("beam_size", b.beam.beam_size.to_string()),
                ("queries_per_label", b.queries_per_label.to_string()),
                ("reg", b.xmc.train.reg.to_string()),
                ("prune_threshold", b.xmc.train.prune_threshold.to_string()),
                ("out", String::new()),
            ]
        }
        _ => Vec::new(),
    }
}

/// Keys any subcommand understands; a config file may be shared.
fn all_known_keys() -> Vec<&'static str> {
    let mut keys: Vec<&str> = GLOBAL_KEYS.iter().map(|(k, _)| *k).collect();
    for c in COMMANDS {
        keys.extend(defaults_for(c).into_iter().map(|(k, _)| k));
    }
    keys.sort_unstable();
    keys.dedup();
    keys
}

/// Resolved settings for one subcommand.
struct Settings {
    cfg: Config,
}

impl Settings {
    fn resolve(cli: &Cli) -> Result<Self> {
        let mut cfg = Config::default();
        let defaults = cli.command.defaults();
        for (k, d) in GLOBAL_KEYS {
            cfg.set(*k, *d);
        }
        for (k, d) in &defaults {
            cfg.set(*k, d.clone());
        }
        if let Some(path) = &cli.config {
            let file = Config::load(path).map_err(|e| usage(format!("config: {e}")))?;
            let known = all_known_keys();
            if let Some(k) = file.unknown_keys(&known).first() {
                return Err(usage(format!("config: unknown key {k:?} in {}", path.display())));
            }
            let mine: Vec<&str> = defaults.iter().map(|(k, _)| *k).chain(GLOBAL_KEYS.iter().map(|(k, _)| *k)).collect();
            for (k, v) in file.iter() {
                if mine.contains(&k) {
                    cfg.set(k, v);
                }
            }
        }
        let globals = [("seed", cli.seed.map(|v| v.to_string())), ("threads", cli.threads.map(|v| v.to_string()))];
        for (k, v) in globals.into_iter().chain(cli.command.overrides()) {
            if let Some(v) = v {
                cfg.set(k, v);
            }
        }
        Ok(Settings { cfg })
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        let raw = self.cfg.raw(key).unwrap_or_default();
        raw.parse::<T>().map_err(|e| usage(format!("invalid value for {key}: {raw:?} ({e})")))
    }

    fn opt_path(&self, key: &str) -> Option<PathBuf> {
        self.cfg.raw(key).filter(|v| !v.is_empty()).map(PathBuf::from)
    }

    fn path(&self, key: &str) -> Result<PathBuf> {
        self.opt_path(key)
            .ok_or_else(|| usage(format!("missing required setting {key} (flag --{} or config key)", key.replace('_', "-"))))
    }

    /// `0` means "no cap".
    fn cap(&self, key: &str) -> Result<Option<usize>> {
        Ok(Some(self.get::<usize>(key)?).filter(|&c| c > 0))
    }

    fn train_params(&self) -> Result<TrainParams> {
        let p = TrainParams {
            reg: self.get("reg")?,
            tol: self.get("tol")?,
            max_epochs: self.get("max_epochs")?,
            prune_threshold: self.get("prune_threshold")?,
        };
        p.validate().map_err(|e| usage(e.to_string()))?;
        Ok(p)
    }
}

fn diagnostic(kind: &str, command: &str, message: &str) -> String {
    json!({"level": "error", "kind": kind, "command": command, "message": message}).to_string()
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code: 0 success, 1 runtime failure, 2 usage
/// error. Failures are reported on stderr as one JSON line.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            if code == 0 {
                let _ = e.print();
                return 0;
            }
            eprintln!("{}", diagnostic("usage", "", e.render().to_string().trim()));
            return 2;
        }
    };
    let name = cli.command.name();
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            let usage_err = e.downcast_ref::<UsageError>().is_some();
            let (kind, code) = if usage_err { ("usage", 2) } else { ("runtime", 1) };
            eprintln!("{}", diagnostic(kind, name, &format!("{e:#}")));
            code
        }
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let s = Settings::resolve(cli)?;
    if cli.dry_run {
        print!("# {}\n{}", cli.command.name(), s.cfg.render());
        return Ok(());
    }
    let threads: usize = s.get("threads")?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .context("building thread pool")?;
    pool.install(|| match &cli.command {
        Command::BuildDict(_) => cmd_build_dict(&s),
        Command::GenCorpus(_) => cmd_gen_corpus(&s),
        Command::GenWeakLabels(_) => cmd_gen_weak_labels(&s),
        Command::TrainXmc(_) => cmd_train_xmc(&s),
        Command::TrainPt(_) => cmd_train_pt(&s),
        Command::Link(_) => cmd_link(&s),
        Command::Eval(_) => cmd_eval(&s),
        Command::Bench(_) => cmd_bench(&s),
    })
}

fn emit(v: serde_json::Value) {
    println!("{v}");
}

fn cmd_build_dict(s: &Settings) -> Result<()> {
    let (b2e, out) = (s.path("b2e")?, s.path("out")?);
    let records = read_b2e_tsv(&b2e)?;
    let (dict, report) = build_dictionary(records, None)?;
    dict.save(&out).with_context(|| format!("writing {}", out.display()))?;
    emit(json!({
        "command": "build-dict",
        "surfaces": dict.len(),
        "entities": dict.entities().len(),
        "report": report,
    }));
    Ok(())
}

fn cmd_gen_corpus(s: &Settings) -> Result<()> {
    let dir = s.path("out_dir")?;
    let languages: String = s.get("languages")?;
    let spec = CorpusSpec {
        n_entities: s.get("n_entities")?,
        surface_variants_per_entity: s.get("variants")?,
        languages: languages.split(',').map(|l| l.trim().to_string()).filter(|l| !l.is_empty()).collect(),
        n_branded_queries: s.get("n_branded")?,
        n_nonbranded_queries: s.get("n_nonbranded")?,
        n_engagement: s.get("n_engagement")?,
        pt_space_size: s.get("pt_space")?,
        shared_fraction: s.get("shared_fraction")?,
        n_test_branded: s.get("n_test_branded")?,
        n_test_misspelled: s.get("n_test_misspelled")?,
        n_test_nonbranded: s.get("n_test_nonbranded")?,
        seed: s.get("seed")?,
    };
    spec.validate().map_err(|e| usage(e.to_string()))?;
    let corpus = generate(&spec)?;
    corpus.write(&dir)?;
    emit(json!({
        "command": "gen-corpus",
        "out_dir": dir.display().to_string(),
        "b2e": corpus.b2e.len(),
        "strong_labels": corpus.strong_labels.len(),
        "engagement": corpus.engagement.len(),
        "pt_train": corpus.pt_train.len(),
        "test": corpus.test.len(),
        "shared_surfaces": corpus.shared_surfaces.len(),
    }));
    Ok(())
}

fn cmd_gen_weak_labels(s: &Settings) -> Result<()> {
    let (eng, dict, out) = (s.path("engagement")?, s.path("dict")?, s.path("out")?);
    let threshold: f64 = s.get("threshold")?;
    let logs: Vec<EngagementRecord> = read_jsonl(&eng)?;
    let dict = BrandDictionary::load(&dict)?;
    let (wl, stats) = gen_weak_labels(&logs, threshold, &dict);
    write_jsonl(&out, &wl)?;
    emit(json!({"command": "gen-weak-labels", "stats": stats}));
    Ok(())
}

/// Dictionary rows as brand-name records, in key order.
fn dictionary_rows(dict: &BrandDictionary) -> Vec<B2eRecord> {
    dict.iter()
        .flat_map(|(key, ents)| {
            ents.iter().map(move |e| B2eRecord {
                store: key.store.clone(),
                surface: key.surface.clone(),
                entity: e.clone(),
            })
        })
        .collect()
}

fn cmd_train_xmc(s: &Settings) -> Result<()> {
    let kind = match s.get::<String>("kind")?.as_str() {
        "q2e" => InputKind::Query,
        "m2e" => InputKind::Mention,
        other => return Err(usage(format!("invalid value for kind: {other:?} (expected q2e or m2e)"))),
    };
    let (dict_path, out) = (s.path("dict")?, s.path("out")?);
    let dict = BrandDictionary::load(&dict_path)?;
    let rows = dictionary_rows(&dict);
    let b2e = augment_b2e(&rows);
    let sl = match s.opt_path("sl") {
        Some(p) => {
            let records: Vec<StrongLabelRecord> = read_jsonl(&p)?;
            let (sl, stats) = map_strong_labels(&records, &dict);
            log::info!("strong labels: {stats:?}");
            sl
        }
        None => Vec::new(),
    };
    let wl: Vec<LabeledQuery> = match s.opt_path("wl") {
        Some(p) => read_jsonl(&p)?,
        None => Vec::new(),
    };
    let seed: u64 = s.get("seed")?;
    let mix = MixParams {
        cap_b2e: s.cap("cap_b2e")?,
        cap_sl: s.cap("cap_sl")?,
        cap_wl: s.cap("cap_wl")?,
        split_multi: s.get("split_multi")?,
        seed,
    };
    let examples = mix_training(&b2e, &sl, &wl, kind, &mix);
    let surfaces: Vec<_> = rows.iter().map(|r| (r.entity.clone(), r.surface.clone())).collect();
    let cfg = XmcConfig {
        dim: s.get("dim")?,
        use_idf: s.get("use_idf")?,
        branching: s.get("branching")?,
        max_leaf: s.get("max_leaf")?,
        seed,
        train: s.train_params()?,
    };
    let (model, report) = fit(&examples, &surfaces, &cfg)?;
    model.save(&out).with_context(|| format!("writing {}", out.display()))?;
    if let Some(p) = s.opt_path("report") {
        std::fs::write(&p, serde_json::to_string_pretty(&report)? + "\n")?;
    }
    emit(json!({
        "command": "train-xmc",
        "labels": model.labels().len(),
        "depth": model.tree().depth(),
        "nil": model.has_nil(),
        "report": report,
    }));
    Ok(())
}

fn cmd_train_pt(s: &Settings) -> Result<()> {
    let (data, out) = (s.path("data")?, s.path("out")?);
    let records: Vec<PtRecord> = read_jsonl(&data)?;
    let pairs = records
        .iter()
        .map(|r| Ok((r.query()?, r.pt.clone())))
        .collect::<Result<Vec<_>>>()?;
    let base = FeaturizerConfig {
        dim: s.get("dim")?,
        ..Default::default()
    };
    base.validate().map_err(|e| usage(e.to_string()))?;
    let featurizer = if s.get("use_idf")? {
        let texts: Vec<_> = pairs.iter().map(|(q, _)| q.normalized()).collect();
        fit_idf(texts.iter(), &base)?
    } else {
        base
    };
    let model = train_pt_baseline(pairs, featurizer, &s.train_params()?)?;
    model.save(&out).with_context(|| format!("writing {}", out.display()))?;
    emit(json!({
        "command": "train-pt",
        "examples": records.len(),
        "product_types": model.product_types().len(),
    }));
    Ok(())
}

/// Reads query lines; each line may be a plain query or a labeled query.
fn read_queries(path: &Path) -> Result<(Vec<Query>, Vec<LabeledQuery>)> {
    let f = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let (mut qs, mut labeled) = (Vec::new(), Vec::new());
    for (n, line) in f.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if let Ok(l) = serde_json::from_str::<LabeledQuery>(&line) {
            qs.push(l.query().clone());
            labeled.push(l);
        } else {
            let q: Query = serde_json::from_str(&line)
                .with_context(|| format!("{}:{}: not a query record", path.display(), n + 1))?;
            qs.push(q);
        }
    }
    Ok((qs, labeled))
}

fn load_model(path: &Path) -> Result<Arc<XmcModel>> {
    Ok(Arc::new(
        XmcModel::load(path).with_context(|| format!("loading {}", path.display()))?,
    ))
}

fn cmd_link(s: &Settings) -> Result<()> {
    let mode: LinkMode = s.get("mode")?;
    let (qpath, out) = (s.path("queries")?, s.path("out")?);
    let (queries, labeled) = read_queries(&qpath)?;
    let beam = BeamParams {
        beam_size: s.get("beam_size")?,
        top_k: s.get("top_k")?,
        score_floor: s.get("score_floor")?,
    };
    beam.validate().map_err(|e| usage(e.to_string()))?;
    let m2e_beam = BeamParams {
        score_floor: s.get("m2e_score_floor")?,
        ..beam
    };
    let fusion_matcher: String = s.get("fusion_matcher")?;
    let matcher_kind = match mode {
        LinkMode::Lexical => Some("lexical"),
        LinkMode::M2e => Some("m2e"),
        LinkMode::Q2e => None,
        LinkMode::Fused => match fusion_matcher.as_str() {
            "lexical" => Some("lexical"),
            "m2e" => Some("m2e"),
            other => return Err(usage(format!("invalid value for fusion_matcher: {other:?}"))),
        },
    };
    let uses_two_stage = matcher_kind.is_some();
    let detector_kind: String = s.get("detector")?;
    let need_dict = uses_two_stage && (detector_kind == "dict" || matcher_kind == Some("lexical"));
    let dict = if need_dict {
        Some(Arc::new(BrandDictionary::load(&s.path("dict")?)?))
    } else {
        None
    };
    let detector: Arc<dyn MentionDetector> = match detector_kind.as_str() {
        "dict" => match &dict {
            Some(d) => d.clone(),
            None => Arc::new(OracleDetector::default()),
        },
        "oracle" => {
            let gold = match s.opt_path("oracle_labels") {
                Some(p) => read_jsonl::<LabeledQuery>(&p)?,
                None if !labeled.is_empty() => labeled.clone(),
                None => bail!("oracle detector needs labeled queries (oracle_labels)"),
            };
            Arc::new(OracleDetector::from_labeled(&gold))
        }
        other => return Err(usage(format!("invalid value for detector: {other:?} (expected dict or oracle)"))),
    };
    let matcher = match matcher_kind {
        Some("lexical") => Some(Matcher::Lexical(dict.clone().expect("loaded above"))),
        Some(_) => Some(Matcher::M2e {
            model: load_model(&s.path("m2e")?)?,
            beam: m2e_beam,
        }),
        None => None,
    };
    let q2e = if matches!(mode, LinkMode::Q2e | LinkMode::Fused) {
        Some((load_model(&s.path("q2e")?)?, beam))
    } else {
        None
    };
    let pt: Arc<dyn PtPredictor> = match (s.opt_path("pt_model"), s.opt_path("pt_oracle")) {
        (Some(_), Some(_)) => return Err(usage("pt_model and pt_oracle are mutually exclusive")),
        (Some(p), None) => Arc::new(LinearPtPredictor::load(&p)?),
        (None, Some(p)) => {
            let records: Vec<PtRecord> = read_jsonl(&p)?;
            let pairs = records
                .iter()
                .map(|r| Ok((r.query()?, r.pt.clone())))
                .collect::<Result<Vec<_>>>()?;
            Arc::new(OraclePtPredictor::new(pairs))
        }
        (None, None) => Arc::new(NoPtPredictor),
    };
    let assoc = match s.opt_path("pt_assoc") {
        Some(p) => PtAssociations::load_tsv(&p)?,
        None => PtAssociations::default(),
    };
    let cfg = LinkerConfig {
        detector,
        matcher,
        q2e,
        pt,
        assoc: Arc::new(assoc),
        fusion: mode == LinkMode::Fused,
    };
    cfg.validate_for(mode).map_err(|e| usage(e.to_string()))?;
    let results = link_batch(&cfg, mode, &queries)?;
    write_jsonl(&out, &results).with_context(|| format!("writing {}", out.display()))?;
    let count = |f: fn(&Outcome) -> bool| results.iter().filter(|r| f(&r.outcome)).count();
    emit(json!({
        "command": "link",
        "mode": mode.to_string(),
        "queries": results.len(),
        "single": count(|o| o.is_single()),
        "nil": count(|o| *o == Outcome::Nil),
        "no_prediction": count(|o| *o == Outcome::NoPrediction),
    }));
    Ok(())
}

fn read_slice_keys(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split('\t').next().unwrap_or_default().to_string())
        .collect())
}

/// Builds the report for aligned gold/prediction lists.
pub fn evaluate(
    title: &str,
    gold: &[LabeledQuery],
    pred: &[LinkResult],
    slice_by: &str,
    slice_keys: Option<&[String]>,
) -> Result<MetricReport> {
    if gold.len() != pred.len() {
        bail!("{} gold queries but {} predictions", gold.len(), pred.len());
    }
    let pairs = gold.iter().zip(pred);
    Ok(match slice_by {
        "language" => eval::report(title, eval::by_language, pairs),
        "store" => eval::report(title, eval::by_store, pairs),
        "overall" => eval::report(title, eval::overall, pairs),
        "file" => {
            let keys = slice_keys.ok_or_else(|| usage("slice_by = file needs slice_file"))?;
            if keys.len() != gold.len() {
                bail!("{} slice keys but {} gold queries", keys.len(), gold.len());
            }
            // Slice keys travel with the gold record by position.
            let index: std::collections::HashMap<*const LabeledQuery, &str> =
                gold.iter().zip(keys).map(|(g, k)| (g as *const _, k.as_str())).collect();
            eval::report(title, |g: &LabeledQuery| index[&(g as *const _)].to_string(), pairs)
        }
        other => return Err(usage(format!("invalid value for slice_by: {other:?}"))),
    })
}

fn cmd_eval(s: &Settings) -> Result<()> {
    let (gold_p, pred_p) = (s.path("gold")?, s.path("pred")?);
    let gold: Vec<LabeledQuery> = read_jsonl(&gold_p)?;
    let pred: Vec<LinkResult> = read_jsonl(&pred_p)?;
    let slice_by: String = s.get("slice_by")?;
    let keys = s.opt_path("slice_file").map(|p| read_slice_keys(&p)).transpose()?;
    let title: String = s.get("title")?;
    let report = evaluate(&title, &gold, &pred, &slice_by, keys.as_deref())?;
    if let Some(out) = s.opt_path("out") {
        std::fs::write(&out, serde_json::to_string_pretty(&report)? + "\n")
            .with_context(|| format!("writing {}", out.display()))?;
    }
    let mut stdout = std::io::stdout().lock();
    write!(stdout, "{}", report.to_table())?;
    let nb: Vec<_> = gold.iter().zip(&pred).filter(|(g, _)| g.is_non_branded()).collect();
    if !nb.is_empty() {
        let fa = false_alarm_rate(nb.iter().copied())?;
        writeln!(stdout, "false alarm rate on {} non-branded queries: {fa:.2}%", nb.len())?;
    }
    Ok(())
}

fn cmd_bench(s: &Settings) -> Result<()> {
    let sizes: String = s.get("sizes")?;
    let sizes = sizes
        .split(',')
        .map(|v| v.trim().parse::<usize>().map_err(|e| usage(format!("invalid value for sizes: {v:?} ({e})"))))
        .collect::<Result<Vec<_>>>()?;
    let mut p = BenchParams {
        sizes,
        n_queries: s.get("n_queries")?,
        repeats: s.get("repeats")?,
        queries_per_label: s.get("queries_per_label")?,
        seed: s.get("seed")?,
        ..Default::default()
    };
    p.beam.beam_size = s.get("beam_size")?;
    p.xmc.train.reg = s.get("reg")?;
    p.xmc.train.prune_threshold = s.get("prune_threshold")?;
    let rows = bench::run_bench(&p)?;
    if let Some(out) = s.opt_path("out") {
        std::fs::write(&out, serde_json::to_string_pretty(&rows)? + "\n")?;
    }
    print!("{}", bench::render_table(&rows));
    Ok(())
}
