//! Command-line front end.
//!
//! Exit codes: 0 success, 2 provider failure, 3 invalid input data,
//! 64 usage error, 74 output could not be written.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use capens_core::captions::{CaptionSet, GenerateError};
use capens_core::eval::{all_negatives_retrieval, random_baseline, sweep_caption_count, EvalError, RunOptions, SweepError, TemplatePrompts};
use capens_core::manifest::check_official_profile;
use capens_core::{BenchmarkManifest, CompoundNoun};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::cache::DiskCache;
use crate::captioner::{CaptionOrigin, CaptionService, Captioner, CaptionerError, CaptionerSpec};
use crate::config::{ConfigError, ConfigLayer, RunConfig, DEFAULT_OUT};
use crate::http::HttpClient;
use crate::manifest::{read_manifest, ManifestError};
use crate::provider::{EmbeddingProviderSpec, Provider, ProviderError};
use crate::report::{self, ReportError};
use crate::runner::{pool, run_parallel};
use crate::strategy::{Prompter, PromptsFile, StrategyName};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PROVIDER: i32 = 2;
pub const EXIT_INVALID: i32 = 3;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_OUTPUT: i32 = 74;

#[derive(Debug, Parser)]
#[command(name = "capens", version, about = "Caption-ensemble retrieval evaluation for compound nouns")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Default, Args)]
pub struct GlobalArgs {
    /// TOML run config; flags override its keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub strategy: Option<StrategyName>,
    /// Captions per compound noun for the ensemble strategy.
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// e.g. `synthetic-hash:dim=64,seed=0` or `file-store:path=emb.jsonl,model=clip,dim=768`.
    #[arg(long, global = true)]
    pub provider: Option<EmbeddingProviderSpec>,
    /// e.g. `chat:endpoint=https://host/v1/chat/completions,model=gpt-4` or `file:path=captions.json`.
    #[arg(long, global = true)]
    pub captioner: Option<CaptionerSpec>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub cache_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub no_cache: bool,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Skip failing instances instead of aborting; the report lists them.
    #[arg(long, global = true)]
    pub fail_soft: bool,
    /// Prompt lists for `--strategy file`.
    #[arg(long, global = true)]
    pub prompts: Option<PathBuf>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate (or confirm cached) caption sets for every compound noun.
    Captions,
    /// Three-image retrieval accuracy; writes report.json and CSVs.
    Eval {
        /// Also rank every benchmark image per compound noun.
        #[arg(long)]
        all_negatives: bool,
    },
    /// Ensemble accuracy for each caption count in a range.
    Sweep {
        #[arg(long)]
        k_min: usize,
        #[arg(long)]
        k_max: usize,
    },
    /// Merge reports into one comparison table.
    Report {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
    /// Check a manifest's structure.
    Validate {
        /// Also require the published benchmark's shape.
        #[arg(long)]
        official: bool,
    },
    /// Chance accuracy from random embeddings.
    Baseline {
        #[arg(long, default_value_t = 25)]
        trials: usize,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("provider failure: {0}")]
    Provider(String),
    #[error("invalid input: {0}")]
    InvalidData(String),
    #[error("output: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Provider(_) => EXIT_PROVIDER,
            CliError::InvalidData(_) => EXIT_INVALID,
            CliError::Output(_) => EXIT_OUTPUT,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<ManifestError> for CliError {
    fn from(e: ManifestError) -> Self {
        CliError::InvalidData(e.to_string())
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Write { .. } => CliError::Output(e.to_string()),
            ReportError::NoReports => CliError::Usage(e.to_string()),
            _ => CliError::InvalidData(e.to_string()),
        }
    }
}

impl From<ProviderError> for CliError {
    fn from(e: ProviderError) -> Self {
        match e {
            ProviderError::InvalidSpec(_) => CliError::Usage(e.to_string()),
            _ => CliError::Provider(e.to_string()),
        }
    }
}

impl From<CaptionerError> for CliError {
    fn from(e: CaptionerError) -> Self {
        match e {
            CaptionerError::InvalidSpec(_) => CliError::Usage(e.to_string()),
            CaptionerError::Missing(_) | CaptionerError::BadFile { .. } => CliError::InvalidData(e.to_string()),
            CaptionerError::Cache(_) => CliError::Output(e.to_string()),
            CaptionerError::Http(_) | CaptionerError::EmptyReply => CliError::Provider(e.to_string()),
        }
    }
}

fn generate_error(cn: &CompoundNoun, e: GenerateError<CaptionerError>) -> CliError {
    let msg = |m: String| format!("{:?}: {m}", cn.text());
    match e {
        GenerateError::Provider(inner) => match CliError::from(inner) {
            CliError::Usage(m) => CliError::Usage(msg(m)),
            CliError::Provider(m) => CliError::Provider(msg(m)),
            CliError::InvalidData(m) => CliError::InvalidData(msg(m)),
            CliError::Output(m) => CliError::Output(msg(m)),
        },
        GenerateError::Caption(c) => CliError::Usage(msg(c.to_string())),
        other => CliError::Provider(msg(other.to_string())),
    }
}

fn eval_error<PE: std::fmt::Display>(e: EvalError<PE, ProviderError>) -> CliError {
    match &e {
        EvalError::Prompt { .. } | EvalError::DuplicateImageIds(_) | EvalError::EmptyManifest => CliError::InvalidData(e.to_string()),
        EvalError::Embed { source: ProviderError::InvalidSpec(_), .. } => CliError::Usage(e.to_string()),
        _ => CliError::Provider(e.to_string()),
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let rendered = e.render().to_string();
            let _ = if code == EXIT_OK { stdout.write_all(rendered.as_bytes()) } else { stderr.write_all(rendered.as_bytes()) };
            return code;
        }
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match run(&cli, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "capens: {e}");
            e.exit_code()
        }
    }
}

impl GlobalArgs {
    fn layer(&self) -> Result<ConfigLayer, CliError> {
        let file = match &self.config {
            Some(path) => ConfigLayer::load(path)?,
            None => ConfigLayer::default(),
        };
        let flags = ConfigLayer {
            manifest: self.manifest.clone(),
            strategy: self.strategy,
            k: self.k,
            seed: self.seed,
            cache_dir: self.cache_dir.clone(),
            no_cache: self.no_cache.then_some(true),
            out: self.out.clone(),
            jobs: self.jobs,
            fail_soft: self.fail_soft.then_some(true),
            prompts: self.prompts.clone(),
            provider: self.provider.clone(),
            captioner: self.captioner.clone(),
        };
        Ok(file.merge(flags))
    }
}

pub fn run(cli: &Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    let layer = cli.global.layer()?;
    match &cli.command {
        Command::Captions => cmd_captions(&Session::open(layer.resolve()?)?, stdout),
        Command::Eval { all_negatives } => cmd_eval(&Session::open(layer.resolve()?)?, *all_negatives, stdout),
        Command::Sweep { k_min, k_max } => {
            if k_min > k_max || *k_min == 0 {
                return Err(CliError::Usage(format!("invalid caption-count range {k_min}..={k_max}")));
            }
            cmd_sweep(&Session::open(layer.resolve()?)?, *k_min, *k_max, stdout)
        }
        Command::Report { reports } => cmd_report(reports, &layer.out.unwrap_or_else(|| DEFAULT_OUT.into()), stdout),
        Command::Validate { official } => cmd_validate(&manifest_only(&layer)?, *official, stdout),
        Command::Baseline { trials } => cmd_baseline(&manifest_only(&layer)?, *trials, layer.seed.unwrap_or(0), stdout),
    }
}

fn manifest_only(layer: &ConfigLayer) -> Result<BenchmarkManifest, CliError> {
    let path = layer.manifest.as_ref().ok_or_else(|| CliError::Usage("no manifest given (--manifest)".into()))?;
    Ok(read_manifest(path)?)
}

/// Resolved config plus the loaded manifest, cache and HTTP client.
pub struct Session {
    pub config: RunConfig,
    pub manifest: BenchmarkManifest,
    pub cache: Option<Arc<DiskCache>>,
    pub http: HttpClient,
}

impl Session {
    pub fn open(config: RunConfig) -> Result<Self, CliError> {
        let manifest = read_manifest(&config.manifest)?;
        let cache = match &config.cache_dir {
            Some(dir) => Some(Arc::new(DiskCache::open(dir).map_err(|e| CliError::Usage(e.to_string()))?)),
            None => None,
        };
        Ok(Self { config, manifest, cache, http: HttpClient::from_env() })
    }

    fn manifest_dir(&self) -> PathBuf {
        self.config.manifest.parent().map(Path::to_path_buf).unwrap_or_default()
    }

    pub fn provider(&self) -> Result<Provider, CliError> {
        Ok(Provider::open(self.config.provider.clone(), self.cache.clone(), self.manifest_dir(), self.http.clone())?)
    }

    fn options(&self) -> RunOptions {
        RunOptions { seed: Some(self.config.seed), fail_soft: self.config.fail_soft }
    }

    fn compound_nouns(&self) -> Vec<CompoundNoun> {
        let unique: BTreeMap<String, &CompoundNoun> =
            self.manifest.instances.iter().map(|i| (i.compound_noun.prompt_text(), &i.compound_noun)).collect();
        unique.into_values().cloned().collect()
    }

    /// Caption sets of size `k` for every compound noun, keyed by lower-cased text.
    pub fn caption_sets(&self, k: usize) -> Result<(BTreeMap<String, CaptionSet>, CaptionSummary), CliError> {
        let spec = self.config.captioner.as_ref().ok_or_else(|| CliError::Usage("caption ensembles need a captioner (--captioner)".into()))?;
        let captioner = Captioner::open(spec, self.http.clone())?;
        let service = CaptionService::new(&captioner, self.cache.as_deref()).with_decoding(spec.temperature, spec.top_p, spec.retries);
        let cns = self.compound_nouns();
        let results: Vec<_> = pool(self.config.jobs).install(|| cns.par_iter().map(|cn| service.get(cn, k)).collect());
        let mut sets = BTreeMap::new();
        let mut summary = CaptionSummary::default();
        for (cn, result) in cns.iter().zip(results) {
            let (set, origin) = result.map_err(|e| generate_error(cn, e))?;
            match origin {
                CaptionOrigin::Generated => summary.generated += 1,
                CaptionOrigin::Cached => summary.cached += 1,
            }
            let mut flagged: Vec<usize> = set.flags().iter().map(|f| f.index).collect();
            flagged.dedup();
            summary.flagged += flagged.len();
            sets.insert(cn.prompt_text(), set);
        }
        Ok((sets, summary))
    }

    pub fn prompter(&self) -> Result<Prompter, CliError> {
        Ok(match self.config.strategy {
            StrategyName::Base => Prompter::Template(TemplatePrompts::Base),
            StrategyName::Reversed => Prompter::Template(TemplatePrompts::Reversed),
            StrategyName::Ensemble => Prompter::Ensemble { sets: self.caption_sets(self.config.k)?.0, k: self.config.k },
            StrategyName::File => {
                let path = self.config.prompts.as_deref().expect("validated by config");
                Prompter::File(PromptsFile::load(path).map_err(|e| CliError::InvalidData(e.to_string()))?)
            }
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CaptionSummary {
    pub generated: usize,
    pub cached: usize,
    /// Captions flagged as missing the compound noun or over-length.
    pub flagged: usize,
}

fn out_line(stdout: &mut dyn Write, line: &str) -> Result<(), CliError> {
    writeln!(stdout, "{line}").map_err(|e| CliError::Output(e.to_string()))
}

pub fn cmd_captions(session: &Session, stdout: &mut dyn Write) -> Result<(), CliError> {
    let (_, s) = session.caption_sets(session.config.k)?;
    out_line(stdout, &format!("{} generated, {} cached, {} flagged", s.generated, s.cached, s.flagged))
}

pub fn cmd_eval(session: &Session, all_negatives: bool, stdout: &mut dyn Write) -> Result<(), CliError> {
    let provider = session.provider()?;
    let prompter = session.prompter()?;
    let report = run_parallel(&session.manifest, &prompter, &provider, session.options(), session.config.jobs).map_err(eval_error)?;
    for f in &report.failed {
        log::warn!("skipped {}: {}", f.instance_id, f.error);
    }
    let out = &session.config.out;
    report::write_evaluation(out, &report)?;
    out_line(stdout, &format!("strategy={} provider={} model={}", report.strategy, report.provider_id, report.model_id))?;
    out_line(stdout, &format!("evaluated={} wins={} failed={}", report.evaluated, report.wins, report.failed.len()))?;
    if all_negatives {
        let r = all_negatives_retrieval(&session.manifest, &prompter, &provider).map_err(eval_error)?;
        report::write_atomic(&out.join(report::RETRIEVAL_JSON), &report::to_json(&r))?;
        out_line(stdout, &format!("recall@1={:.2}", r.recall_at_1))?;
    }
    if let Some(cache) = &session.cache {
        if cache.corrupt_entries() > 0 {
            log::warn!("{} corrupt cache entries were recomputed", cache.corrupt_entries());
        }
    }
    out_line(stdout, &format!("accuracy={:.2}", report.accuracy))
}

pub fn cmd_sweep(session: &Session, k_min: usize, k_max: usize, stdout: &mut dyn Write) -> Result<(), CliError> {
    let provider = session.provider()?;
    let (sets, _) = session.caption_sets(k_max)?;
    let sweep = sweep_caption_count(&session.manifest, &sets, k_min, k_max, &provider, session.options()).map_err(|e| match e {
        SweepError::InvalidRange { .. } => CliError::Usage(e.to_string()),
        SweepError::InsufficientCaptions { .. } => CliError::InvalidData(e.to_string()),
        SweepError::Eval(inner) => eval_error(inner),
    })?;
    report::write_atomic(&session.config.out.join(report::SWEEP_CSV), &report::sweep_csv(&sweep))?;
    for row in &sweep.rows {
        out_line(stdout, &format!("k={} accuracy={:.2}", row.k, row.accuracy))?;
    }
    Ok(())
}

pub fn cmd_report(paths: &[PathBuf], out: &Path, stdout: &mut dyn Write) -> Result<(), CliError> {
    let reports = paths.iter().map(|p| Ok((p.clone(), report::read_report(p)?))).collect::<Result<Vec<_>, ReportError>>()?;
    let rows = report::compare(&reports)?;
    report::write_atomic(&out.join(report::COMPARE_CSV), &report::compare_csv(&rows))?;
    stdout.write_all(report::compare_table(&rows).as_bytes()).map_err(|e| CliError::Output(e.to_string()))
}

pub fn cmd_validate(manifest: &BenchmarkManifest, official: bool, stdout: &mut dyn Write) -> Result<(), CliError> {
    let images: std::collections::BTreeSet<&str> =
        manifest.instances.iter().flat_map(|i| i.images()).map(|img| img.id.as_str()).collect();
    out_line(stdout, &format!("{} v{}: {} instances, {} images", manifest.name, manifest.version, manifest.instances.len(), images.len()))?;
    if official {
        let report = check_official_profile(manifest);
        if !report.is_valid() {
            let details: Vec<String> = report.violations.iter().map(|v| v.detail.clone()).collect();
            return Err(CliError::InvalidData(format!("not the official profile: {}", details.join("; "))));
        }
        out_line(stdout, "official profile: ok")?;
    }
    Ok(())
}

pub fn cmd_baseline(manifest: &BenchmarkManifest, trials: usize, seed: u64, stdout: &mut dyn Write) -> Result<(), CliError> {
    let b = random_baseline(manifest, trials, seed).map_err(|e| CliError::InvalidData(e.to_string()))?;
    out_line(stdout, &format!("trials={} std_error={:.2}", b.trial_accuracies.len(), b.std_error))?;
    out_line(stdout, &format!("accuracy={:.2}", b.mean_accuracy))
}
