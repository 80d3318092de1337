use std::fmt::Write as _;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use kurosawa::config::{BackendKind, ServiceConfig};
use kurosawa::dataset::{DatasetRecord, ImportReport, IngestMode};
use kurosawa::metrics::{metric_report, parse_ratings_csv, render_table, LikertScores, LikertSummary};
use kurosawa::plot::{validate_annotated_plot, ProfileId};
use kurosawa::report::ValidationReport;
use kurosawa::screenplay::{
    decode_tagged, encode_tagged, parse_script, render_screenplay, render_script, DecodeMode,
    DEFAULT_PAGE_WIDTH,
};
use kurosawa::store::{ItemKind, StoredItem};
use kurosawa::text::{PlotActs, Scene};
use kurosawa::workbench::{ExportTarget, PlotRequest, RatingRequest, SceneRequest, Workbench, WorkbenchError};

const EXIT_VALIDATION: u8 = 1;
const EXIT_BACKEND: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "kurosawa", version, about = "Scriptwriting workbench: screenplays, plots, datasets, generation and evaluation")]
struct Cli {
    /// TOML config file; environment variables override it, flags override both.
    #[arg(long, global = true, env = "KUROSAWA_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    backend: Option<BackendKind>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a plain-text screenplay into scenes.
    Parse {
        /// Input file, `-` for stdin.
        input: PathBuf,
        #[arg(long, default_value_t = DEFAULT_PAGE_WIDTH)]
        width: usize,
    },
    /// Encode a scene given as JSON into tagged text.
    Encode { input: PathBuf },
    /// Decode tagged scene text.
    Decode {
        input: PathBuf,
        /// Treat stray text and empty elements as errors.
        #[arg(long)]
        strict: bool,
        #[arg(long, default_value_t = DEFAULT_PAGE_WIDTH)]
        width: usize,
    },
    /// Check an act-annotated plot.
    ValidatePlot { input: PathBuf },
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Automatic metrics for candidate and reference documents.
    Eval {
        /// One document per line, or a JSON array of strings for `.json` files.
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        references: PathBuf,
        /// JSON array of per-candidate log-probability arrays.
        #[arg(long)]
        logprobs: Option<PathBuf>,
    },
    #[command(subcommand)]
    Generate(GenerateCommand),
    #[command(subcommand)]
    Ratings(RatingsCommand),
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        listen: Option<String>,
    },
}

#[derive(Debug, Subcommand)]
enum DatasetCommand {
    Create { name: String },
    /// Add records from a JSON or JSONL file, or import a pairing manifest.
    Add {
        /// Dataset id or unique name.
        dataset: String,
        #[arg(long, conflicts_with = "manifest", required_unless_present = "manifest")]
        record: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Accept vocabulary and length findings as warnings.
        #[arg(long)]
        lenient: bool,
    },
    Export {
        dataset: String,
        /// O, AS, AL, ASG, ALG or `scene`.
        #[arg(long)]
        profile: String,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    Stats { dataset: String },
}

#[derive(Debug, Args)]
struct SamplingArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    max_tokens: Option<u32>,
}

impl SamplingArgs {
    fn overrides(&self) -> Option<serde_json::Value> {
        let mut m = serde_json::Map::new();
        if let Some(v) = self.seed {
            m.insert("seed".into(), json!(v));
        }
        if let Some(v) = self.temperature {
            m.insert("temperature".into(), json!(v));
        }
        if let Some(v) = self.max_tokens {
            m.insert("max_tokens".into(), json!(v));
        }
        (!m.is_empty()).then_some(serde_json::Value::Object(m))
    }
}

#[derive(Debug, Subcommand)]
enum GenerateCommand {
    Plot {
        #[arg(long)]
        storyline: String,
        #[arg(long)]
        long_storyline: Option<String>,
        /// Repeatable.
        #[arg(long = "genre")]
        genres: Vec<String>,
        #[arg(long, default_value = "AS")]
        profile: ProfileId,
        #[command(flatten)]
        sampling: SamplingArgs,
    },
    Scene {
        #[arg(long)]
        description: String,
        #[command(flatten)]
        sampling: SamplingArgs,
    },
}

#[derive(Debug, Subcommand)]
enum RatingsCommand {
    /// Record one rating, or import a CSV of ratings.
    Add {
        #[arg(long, required_unless_present = "csv")]
        item: Option<String>,
        #[arg(long, default_value = "anonymous")]
        rater: String,
        /// Five comma-separated scores: fluency, coherence, relevance,
        /// likability, creativity.
        #[arg(long, value_delimiter = ',', required_unless_present = "csv")]
        scores: Vec<i64>,
        #[arg(long, conflicts_with_all = ["item", "scores"])]
        csv: Option<PathBuf>,
    },
    Summary {
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        item: Option<String>,
    },
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn validation(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_VALIDATION,
            message: message.into(),
        }
    }
}

impl From<WorkbenchError> for Failure {
    fn from(e: WorkbenchError) -> Self {
        Self {
            code: if e.is_backend_failure() { EXIT_BACKEND } else { EXIT_VALIDATION },
            message: e.to_string(),
        }
    }
}

macro_rules! failure_from {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure::validation(e.to_string())
            }
        }
    )*};
}

failure_from!(
    std::io::Error,
    serde_json::Error,
    kurosawa::config::ConfigError,
    kurosawa::workbench::OpenError,
    kurosawa::screenplay::ParseError,
    kurosawa::screenplay::EncodeError,
    kurosawa::screenplay::DecodeError,
    kurosawa::screenplay::LayoutError,
    kurosawa::metrics::MetricError,
    kurosawa::dataset::DatasetError,
    anyhow::Error
);

type CliResult = Result<(), Failure>;

struct Ctx {
    format: Format,
    config: ServiceConfig,
}

impl Ctx {
    fn emit<T: Serialize>(&self, value: &T, text: impl FnOnce() -> String) {
        match self.format {
            Format::Json => println!(
                "{}",
                serde_json::to_string_pretty(value).expect("output serializes")
            ),
            Format::Text => {
                let t = text();
                print!("{t}");
                if !t.ends_with('\n') {
                    println!();
                }
            }
        }
    }

    fn workbench(&self) -> Result<Workbench, Failure> {
        Ok(Workbench::open(self.config.clone())?)
    }
}

fn read_input(path: &Path) -> Result<String, Failure> {
    if path == Path::new("-") {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s)?;
        Ok(s)
    } else {
        std::fs::read_to_string(path)
            .map_err(|e| Failure::validation(format!("cannot read {}: {e}", path.display())))
    }
}

fn report_text(report: &ValidationReport) -> String {
    let mut out = String::new();
    for e in &report.errors {
        let _ = writeln!(out, "error: {} ({e})", e.code());
    }
    for w in &report.warnings {
        let _ = writeln!(out, "warning: {} ({w})", w.code());
    }
    if out.is_empty() {
        out.push_str("ok\n");
    }
    out
}

fn fail_on_errors(report: &ValidationReport) -> CliResult {
    match report.errors.first() {
        None => Ok(()),
        Some(e) => Err(Failure::validation(format!("validation failed: {}", e.code()))),
    }
}

fn load_documents(path: &Path) -> Result<Vec<String>, Failure> {
    let text = read_input(path)?;
    if path.extension().is_some_and(|e| e == "json") {
        return Ok(serde_json::from_str(&text)?);
    }
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

fn load_records(path: &Path) -> Result<Vec<DatasetRecord>, Failure> {
    let text = read_input(path)?;
    let trimmed = text.trim_start();
    if trimmed.starts_with('[') {
        return Ok(serde_json::from_str(trimmed)?);
    }
    if let Ok(single) = serde_json::from_str::<DatasetRecord>(trimmed) {
        return Ok(vec![single]);
    }
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| Failure::validation(format!("{} line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn import_text(report: &ImportReport) -> String {
    let mut out = format!("accepted {}, rejected {}\n", report.accepted, report.rejected.len());
    for r in &report.rejected {
        let _ = writeln!(out, "  row {} ({}): {}", r.row, r.id, r.reason);
    }
    for w in &report.warnings {
        let _ = writeln!(out, "  row {} ({}): warning {}", w.row, w.id, w.issue.code());
    }
    out
}

fn plot_text(item: &StoredItem) -> String {
    let mut out = format!("item {}\n", item.id);
    let payload = &item.payload;
    match serde_json::from_value::<Option<PlotActs>>(payload["acts"].clone()) {
        Ok(Some(acts)) => {
            for (label, text) in ["Act 1", "Act 2A", "Act 2B", "Act 3"].iter().zip(acts.as_array()) {
                let _ = writeln!(out, "\n[{label}]\n{text}");
            }
        }
        _ => {
            let _ = writeln!(out, "\n{}", payload["raw"]["text"].as_str().unwrap_or(""));
        }
    }
    out.push('\n');
    if let Ok(report) = serde_json::from_value::<ValidationReport>(payload["report"].clone()) {
        out.push_str(&report_text(&report));
    }
    out
}

fn summary_text(summary: &LikertSummary) -> String {
    let mut out = format!("{} ratings\n{:<12}{:>8}{:>8}{:>8}{:>8}{:>8}{:>8}\n", summary.n_ratings, "feature", "mean", "median", "q1", "q3", "min", "max");
    for (name, s) in summary.features() {
        let _ = writeln!(
            out,
            "{name:<12}{:>8.2}{:>8.2}{:>8.2}{:>8.2}{:>8.2}{:>8.2}",
            s.mean, s.median, s.q1, s.q3, s.min, s.max
        );
    }
    out
}

fn stored_report(item: &StoredItem) -> ValidationReport {
    serde_json::from_value(item.payload["report"].clone()).unwrap_or_default()
}

fn run_dataset(ctx: &Ctx, cmd: DatasetCommand) -> CliResult {
    let wb = ctx.workbench()?;
    match cmd {
        DatasetCommand::Create { name } => {
            let item = wb.create_dataset(&name)?;
            ctx.emit(&item, || format!("{}\n", item.id));
        }
        DatasetCommand::Add {
            dataset,
            record,
            manifest,
            lenient,
        } => {
            let id = wb.resolve_dataset(&dataset)?;
            let mode = if lenient { IngestMode::Lenient } else { IngestMode::Strict };
            let records = match (record, manifest) {
                (Some(path), _) => load_records(&path)?,
                (None, Some(path)) => {
                    let mut staging = kurosawa::dataset::Dataset::new("manifest");
                    let pre = staging.import_manifest(&path, wb.vocabulary())?;
                    if !pre.rejected.is_empty() {
                        ctx.emit(&pre, || import_text(&pre));
                        return Err(Failure::validation(format!("{} manifest rows rejected", pre.rejected.len())));
                    }
                    staging.records().to_vec()
                }
                (None, None) => unreachable!("clap requires one source"),
            };
            let report = wb.add_records(&id, records, mode)?;
            ctx.emit(&report, || import_text(&report));
            if !report.rejected.is_empty() {
                return Err(Failure::validation(format!("{} records rejected", report.rejected.len())));
            }
        }
        DatasetCommand::Export {
            dataset,
            profile,
            output,
        } => {
            let id = wb.resolve_dataset(&dataset)?;
            let target = ExportTarget::parse(&profile)
                .ok_or_else(|| Failure::validation(format!("unknown profile `{profile}`")))?;
            let body = wb.export(&id, target)?;
            match output {
                Some(path) => std::fs::write(path, body)?,
                None => print!("{body}"),
            }
        }
        DatasetCommand::Stats { dataset } => {
            let id = wb.resolve_dataset(&dataset)?;
            let stats = wb.dataset_stats(&id)?;
            ctx.emit(&stats, || {
                let mut out = format!(
                    "records {} (plots {}, scenes {})\nmean storyline words {:.2}\nmean target words {:.2}\ngenres:\n",
                    stats.records, stats.plots, stats.scenes, stats.mean_storyline_words, stats.mean_target_words
                );
                for g in &stats.genre_histogram {
                    let _ = writeln!(out, "  {:<16}{:>6}", g.genre, g.count);
                }
                out
            });
        }
    }
    Ok(())
}

fn run_generate(ctx: &Ctx, cmd: GenerateCommand) -> CliResult {
    let wb = ctx.workbench()?;
    let item = match cmd {
        GenerateCommand::Plot {
            storyline,
            long_storyline,
            genres,
            profile,
            sampling,
        } => {
            let item = wb.generate_plot(&PlotRequest {
                storyline,
                long_storyline,
                genres,
                profile,
                config: sampling.overrides(),
            })?;
            ctx.emit(&item, || plot_text(&item));
            item
        }
        GenerateCommand::Scene {
            description,
            sampling,
        } => {
            let item = wb.generate_scene(&SceneRequest {
                description,
                config: sampling.overrides(),
            })?;
            ctx.emit(&item, || {
                let scene: Scene = serde_json::from_value(item.payload["scene"].clone()).unwrap_or_default();
                format!(
                    "item {}\n\n{}\n\n{}",
                    item.id,
                    render_screenplay(&scene, DEFAULT_PAGE_WIDTH),
                    report_text(&stored_report(&item))
                )
            });
            item
        }
    };
    fail_on_errors(&stored_report(&item))
}

fn run_ratings(ctx: &Ctx, cmd: RatingsCommand) -> CliResult {
    let wb = ctx.workbench()?;
    match cmd {
        RatingsCommand::Add {
            item,
            rater,
            scores,
            csv,
        } => {
            let requests: Vec<RatingRequest> = match csv {
                Some(path) => parse_ratings_csv(&read_input(&path)?)?
                    .into_iter()
                    .map(|r| RatingRequest {
                        item_id: r.item_id,
                        rater_id: r.rater_id,
                        scores: r.scores,
                    })
                    .collect(),
                None => {
                    let [fluency, coherence, relevance, likability, creativity] = scores[..] else {
                        return Err(Failure::validation("expected five scores"));
                    };
                    vec![RatingRequest {
                        item_id: item.expect("clap requires an item"),
                        rater_id: rater,
                        scores: LikertScores {
                            fluency,
                            coherence,
                            relevance,
                            likability,
                            creativity,
                        },
                    }]
                }
            };
            let mut stored = Vec::new();
            for r in requests {
                stored.push(wb.add_rating(r)?);
            }
            ctx.emit(&stored, || {
                stored.iter().map(|i| format!("{}\n", i.id)).collect()
            });
        }
        RatingsCommand::Summary { kind, item } => {
            let kind = kind
                .map(|k| ItemKind::parse(&k).ok_or_else(|| Failure::validation(format!("unknown kind `{k}`"))))
                .transpose()?;
            let summary = wb.rating_summary(kind, item.as_deref())?;
            ctx.emit(&summary, || summary_text(&summary));
        }
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    let mut config = ServiceConfig::load(cli.config.as_deref())?;
    if let Some(dir) = cli.data_dir {
        config.data_dir = dir;
    }
    if let Some(kind) = cli.backend {
        config.backend.kind = kind;
    }
    let ctx = Ctx {
        format: cli.format,
        config,
    };
    match cli.command {
        Command::Parse { input, width } => {
            ctx.config.layout.validate()?;
            let parsed = parse_script(&read_input(&input)?, &ctx.config.layout)?;
            for w in &parsed.warnings {
                eprintln!("warning: {w:?}");
            }
            ctx.emit(&parsed, || render_script(&parsed.script, width));
        }
        Command::Encode { input } => {
            let scene: Scene = serde_json::from_str(&read_input(&input)?)?;
            let text = encode_tagged(&scene)?;
            ctx.emit(&json!({ "text": text }), || text.clone());
        }
        Command::Decode {
            input,
            strict,
            width,
        } => {
            let mode = if strict { DecodeMode::Strict } else { DecodeMode::Lenient };
            let decoded = decode_tagged(&read_input(&input)?, mode)?;
            for w in &decoded.warnings {
                eprintln!("warning: {w:?}");
            }
            ctx.emit(&decoded, || render_screenplay(&decoded.scene, width));
        }
        Command::ValidatePlot { input } => {
            let report = validate_annotated_plot(&read_input(&input)?);
            ctx.emit(&report, || report_text(&report));
            fail_on_errors(&report)?;
        }
        Command::Dataset(cmd) => run_dataset(&ctx, cmd)?,
        Command::Eval {
            candidates,
            references,
            logprobs,
        } => {
            let cands = load_documents(&candidates)?;
            let refs = load_documents(&references)?;
            let lps: Option<Vec<Vec<f64>>> = logprobs
                .map(|p| -> Result<_, Failure> { Ok(serde_json::from_str(&read_input(&p)?)?) })
                .transpose()?;
            let report = metric_report(&cands, &refs, lps.as_deref())?;
            ctx.emit(&report, || render_table(&report));
        }
        Command::Generate(cmd) => run_generate(&ctx, cmd)?,
        Command::Ratings(cmd) => run_ratings(&ctx, cmd)?,
        Command::Serve { listen } => {
            let mut config = ctx.config;
            if let Some(addr) = listen {
                config.listen_address = addr;
            }
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            rt.block_on(kurosawa::service::serve(config))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
