//! Command-line front end.
//!
//! Every subcommand reads archives through the same ingest path, works per
//! satellite on a rayon pool, and writes results in (norad_id, epoch) order.
//! Exit status: 0 on success, 1 when some satellites failed, 2 on usage or
//! fatal errors.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::{DateTime, Utc};
use clap::{Args, CommandFactory, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cascade::{run_cascade, tier_stats, CascadeRecord, TierStats};
use crate::config::{ConfigError, PipelineConfig, CONFIG_ENV};
use crate::features::{extract_sequence, FeatureVector, NormStats, StatsAccumulator, FEATURE_COUNT};
use crate::filter::ImmFilter;
use crate::label::Label;
use crate::rules::rule_outcome_sequence;
use crate::synth::{generate, Scenario, SynthError};
use crate::tle::{ingest, parse_tle_lines, Archive, ArchiveError, IngestSource, Source, TleRecord};
use crate::windowing::{assign_split, make_windows, write_dataset, LabelTier, Split, Window};

pub const NORM_STATS_FILE: &str = "norm_stats.toml";

#[derive(Debug, Parser)]
#[command(name = "orblabel", version, about = "Anomaly labels for TLE archives")]
pub struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true, env = CONFIG_ENV, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Worker threads; 0 uses one per core.
    #[arg(long, global = true, default_value_t = 0, value_name = "N")]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Archives whose records are tagged TLE.
    #[arg(value_name = "ARCHIVE")]
    pub archives: Vec<PathBuf>,
    /// Archive whose records are tagged SUPGP; repeatable.
    #[arg(long = "supgp", value_name = "PATH")]
    pub supgp: Vec<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse archives into JSONL records and report ingest counts.
    Parse {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Emit raw (clipped, unnormalized) features as JSONL.
    Features {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
        /// Also write normalization statistics over every row.
        #[arg(long, value_name = "PATH")]
        stats: Option<PathBuf>,
    },
    /// Build train/val/test window datasets plus their normalization stats.
    Windows {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, value_name = "DIR")]
        out_dir: Option<PathBuf>,
        /// Add a filter-tier label block.
        #[arg(long)]
        imm: bool,
        /// Add a truth label block from a synth sidecar.
        #[arg(long, value_name = "PATH")]
        truth: Option<PathBuf>,
    },
    /// Rule-tier labels: one byte per record plus a JSONL event log.
    LabelRule {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        #[arg(long, value_name = "PATH")]
        events: Option<PathBuf>,
    },
    /// Filter-tier posteriors and labels as JSONL.
    LabelImm {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Run the cascade; JSONL records plus a tier summary.
    Cascade {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
        /// Skip the filter tier.
        #[arg(long)]
        rule_only: bool,
        /// Score scale from a saved stats file instead of the corpus.
        #[arg(long, value_name = "PATH")]
        norm_stats: Option<PathBuf>,
    },
    /// Recompute the tier summary from cascade JSONL.
    Stats {
        #[arg(value_name = "JSONL")]
        path: PathBuf,
    },
    /// Generate synthetic archives from scenario files.
    Synth {
        #[arg(value_name = "SCENARIO", required = true)]
        scenarios: Vec<PathBuf>,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        /// Truth-label sidecar; defaults to the archive path with `.truth.jsonl`.
        #[arg(long, value_name = "PATH")]
        truth: Option<PathBuf>,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Fatal(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

/// Count of satellites or scenarios that were skipped.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunStatus {
    pub failures: usize,
}

impl RunStatus {
    pub fn exit_code(&self) -> u8 {
        if self.failures == 0 {
            0
        } else {
            1
        }
    }
}

/// One line of the synth truth sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub norad_id: u32,
    pub epoch: DateTime<Utc>,
    pub label: Label,
}

/// One line of the rule event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleEvent {
    pub norad_id: u32,
    pub epoch: DateTime<Utc>,
    pub rule: u8,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub norad_id: u32,
    pub epoch: DateTime<Utc>,
    #[serde(flatten)]
    pub features: FeatureVector,
}

pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(status) => {
            if status.failures > 0 {
                log::warn!("{} item(s) failed", status.failures);
            }
            ExitCode::from(status.exit_code())
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}\n");
            let _ = Cli::command().print_help();
            ExitCode::from(2)
        }
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(2)
        }
    }
}

pub fn run(cli: Cli) -> Result<RunStatus, CliError> {
    let (cfg, path) = PipelineConfig::resolve(cli.config.as_deref())?;
    cfg.validate()?;
    match &path {
        Some(p) => log::info!("config from {}:\n{}", p.display(), cfg.to_toml()),
        None => log::info!("default config:\n{}", cfg.to_toml()),
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| CliError::Fatal(format!("cannot start worker pool: {e}")))?;
    log::info!("{} worker thread(s)", pool.current_num_threads());
    pool.install(|| dispatch(cli.command, &cfg))
}

fn dispatch(cmd: Command, cfg: &PipelineConfig) -> Result<RunStatus, CliError> {
    match cmd {
        Command::Parse { input, out } => cmd_parse(&input, out.as_deref(), cfg),
        Command::Features { input, out, stats } => cmd_features(&input, out.as_deref(), stats.as_deref(), cfg),
        Command::Windows { input, out_dir, imm, truth } => {
            let dir = out_dir
                .or_else(|| cfg.io.out_dir.clone())
                .ok_or_else(|| CliError::Usage("windows needs --out-dir or io.out_dir".into()))?;
            cmd_windows(&input, &dir, imm, truth.as_deref(), cfg)
        }
        Command::LabelRule { input, out, events } => cmd_label_rule(&input, &out, events.as_deref(), cfg),
        Command::LabelImm { input, out } => cmd_label_imm(&input, out.as_deref(), cfg),
        Command::Cascade { input, out, rule_only, norm_stats } => {
            cmd_cascade(&input, out.as_deref(), rule_only, norm_stats.as_deref(), cfg)
        }
        Command::Stats { path } => cmd_stats(&path),
        Command::Synth { scenarios, out, truth } => {
            let truth = truth.unwrap_or_else(|| default_truth_path(&out));
            cmd_synth(&scenarios, &out, &truth, cfg)
        }
    }
}

/// Config inputs first, then positional archives, then supGP archives.
/// Duplicate epochs keep the first occurrence in this order.
fn ingest_sources(input: &InputArgs, cfg: &PipelineConfig) -> Vec<IngestSource> {
    let mut sources = cfg.io.inputs.clone();
    sources.extend(input.archives.iter().map(|p| IngestSource { path: p.clone(), source: Source::Tle }));
    sources.extend(input.supgp.iter().map(|p| IngestSource { path: p.clone(), source: Source::Supgp }));
    sources
}

fn load_archive(input: &InputArgs, cfg: &PipelineConfig) -> Result<Archive, CliError> {
    let sources = ingest_sources(input, cfg);
    if sources.is_empty() {
        return Err(CliError::Usage("no input archives".into()));
    }
    let archive = ingest(&sources)?;
    log::info!(
        "ingested {} entries: {} records over {} satellites, {} malformed, {} duplicates",
        archive.entries,
        archive.emitted(),
        archive.streams.len(),
        archive.malformed,
        archive.duplicates
    );
    Ok(archive)
}

/// Applies `f` to every satellite stream in parallel. Results come back in
/// norad order; failures are logged and counted.
fn per_satellite<T, F>(archive: &Archive, f: F) -> (Vec<(u32, T)>, usize)
where
    T: Send,
    F: Fn(&[TleRecord]) -> Result<T, String> + Sync,
{
    let streams: Vec<(&u32, &Vec<TleRecord>)> = archive.streams.iter().collect();
    let results: Vec<(u32, Result<T, String>)> = streams.par_iter().map(|(id, recs)| (**id, f(recs))).collect();
    let mut ok = Vec::with_capacity(results.len());
    let mut failures = 0;
    for (id, r) in results {
        match r {
            Ok(v) => ok.push((id, v)),
            Err(e) => {
                log::error!("norad {id}: {e}");
                failures += 1;
            }
        }
    }
    (ok, failures)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

/// A file when given, otherwise standard output.
fn sink(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_jsonl<T: Serialize>(out: &mut dyn Write, items: impl IntoIterator<Item = T>) -> io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut *out, &item).map_err(io::Error::other)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

fn output_path(path: Option<&Path>) -> PathBuf {
    path.map_or_else(|| PathBuf::from("<stdout>"), Path::to_path_buf)
}

fn cmd_parse(input: &InputArgs, out: Option<&Path>, cfg: &PipelineConfig) -> Result<RunStatus, CliError> {
    let archive = load_archive(input, cfg)?;
    let mut w = sink(out)?;
    write_jsonl(&mut w, archive.records()).and_then(|_| w.flush()).map_err(io_err(&output_path(out)))?;
    let summary = format!(
        "entries {} emitted {} malformed {} duplicates {} satellites {}",
        archive.entries,
        archive.emitted(),
        archive.malformed,
        archive.duplicates,
        archive.streams.len()
    );
    summary_line(out.is_some(), &summary);
    Ok(RunStatus::default())
}

/// Summaries go to stdout unless stdout already carries the records.
fn summary_line(records_in_file: bool, text: &str) {
    if records_in_file {
        println!("{text}");
    } else {
        eprintln!("{text}");
    }
}

fn feature_rows(recs: &[TleRecord], cfg: &PipelineConfig) -> Result<Vec<[f64; FEATURE_COUNT]>, String> {
    extract_sequence(recs, &cfg.features)
        .map(|v| v.iter().map(FeatureVector::to_array).collect())
        .map_err(|e| e.to_string())
}

fn cmd_features(
    input: &InputArgs,
    out: Option<&Path>,
    stats: Option<&Path>,
    cfg: &PipelineConfig,
) -> Result<RunStatus, CliError> {
    let archive = load_archive(input, cfg)?;
    let (done, failures) = per_satellite(&archive, |recs| {
        let feats = extract_sequence(recs, &cfg.features).map_err(|e| e.to_string())?;
        Ok(recs
            .iter()
            .zip(feats)
            .map(|(r, f)| FeatureRow { norad_id: r.norad_id, epoch: r.epoch, features: f })
            .collect::<Vec<_>>())
    });
    let mut w = sink(out)?;
    write_jsonl(&mut w, done.iter().flat_map(|(_, rows)| rows))
        .and_then(|_| w.flush())
        .map_err(io_err(&output_path(out)))?;
    if let Some(path) = stats {
        let mut acc = StatsAccumulator::default();
        for (_, rows) in &done {
            for r in rows {
                acc.push(&r.features.to_array());
            }
        }
        let ns = acc.finish().map_err(|e| CliError::Fatal(e.to_string()))?;
        ns.save(path).map_err(io_err(path))?;
    }
    Ok(RunStatus { failures })
}

fn load_truth(path: &Path) -> Result<BTreeMap<(u32, DateTime<Utc>), Label>, CliError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut map = BTreeMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let t: TruthRecord =
            serde_json::from_str(&line).map_err(|e| CliError::Fatal(format!("{}:{}: {e}", path.display(), i + 1)))?;
        map.insert((t.norad_id, t.epoch), t.label);
    }
    Ok(map)
}

fn imm_labels(recs: &[TleRecord], cfg: &PipelineConfig) -> Result<Vec<Label>, String> {
    let mut f = ImmFilter::new(cfg.filter_config()).map_err(|e| e.to_string())?;
    Ok(f.run(recs).map_err(|e| e.to_string())?.into_iter().map(|r| r.label).collect())
}

fn cmd_windows(
    input: &InputArgs,
    dir: &Path,
    imm: bool,
    truth: Option<&Path>,
    cfg: &PipelineConfig,
) -> Result<RunStatus, CliError> {
    let archive = load_archive(input, cfg)?;
    let truth = truth.map(load_truth).transpose()?;
    let mut tiers = vec![LabelTier::Rule];
    if imm {
        tiers.push(LabelTier::Imm);
    }
    if truth.is_some() {
        tiers.push(LabelTier::Truth);
    }

    let (done, failures) = per_satellite(&archive, |recs| {
        let norad = recs[0].norad_id;
        let rows = feature_rows(recs, cfg)?;
        let mut windows = make_windows(norad, &rows, &cfg.windows);
        if windows.is_empty() {
            return Ok((windows, StatsAccumulator::default()));
        }
        let rule: Vec<Label> =
            rule_outcome_sequence(recs, &cfg.rules).map_err(|e| e.to_string())?.iter().map(|o| o.label).collect();
        let filt = if imm { Some(imm_labels(recs, cfg)?) } else { None };
        let truth_labels = match &truth {
            Some(map) => Some(
                recs.iter()
                    .map(|r| {
                        map.get(&(r.norad_id, r.epoch)).copied().ok_or_else(|| format!("no truth label at {}", r.epoch))
                    })
                    .collect::<Result<Vec<_>, _>>()?,
            ),
            None => None,
        };
        let mut acc = StatsAccumulator::default();
        for w in windows.iter_mut() {
            w.attach_labels(LabelTier::Rule, &rule);
            if let Some(l) = &filt {
                w.attach_labels(LabelTier::Imm, l);
            }
            if let Some(l) = &truth_labels {
                w.attach_labels(LabelTier::Truth, l);
            }
            for r in &w.rows {
                acc.push(r);
            }
        }
        Ok((windows, acc))
    });

    let mut acc = StatsAccumulator::default();
    for (_, (_, a)) in &done {
        acc.merge(a);
    }
    let stats = acc.finish().map_err(|e| CliError::Fatal(format!("cannot normalize: {e}")))?;
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let stats_path = dir.join(NORM_STATS_FILE);
    stats.save(&stats_path).map_err(io_err(&stats_path))?;

    let all: Vec<&Window> = done.iter().flat_map(|(_, (w, _))| w).collect();
    for split in Split::ALL {
        let part: Vec<&Window> =
            all.iter().copied().filter(|w| assign_split(w.norad_id, w.start, &cfg.split) == split).collect();
        let path = dir.join(format!("{}.bin", split.name()));
        let mut out = create(&path)?;
        write_dataset(&mut out, &part, &stats, cfg.split.seed, &tiers)
            .and_then(|_| out.flush())
            .map_err(io_err(&path))?;
        log::info!("{}: {} windows", path.display(), part.len());
    }
    Ok(RunStatus { failures })
}

fn cmd_label_rule(
    input: &InputArgs,
    out: &Path,
    events: Option<&Path>,
    cfg: &PipelineConfig,
) -> Result<RunStatus, CliError> {
    let archive = load_archive(input, cfg)?;
    let (done, failures) = per_satellite(&archive, |recs| {
        let outcomes = rule_outcome_sequence(recs, &cfg.rules).map_err(|e| e.to_string())?;
        Ok(recs.iter().zip(outcomes).map(|(r, o)| (r.norad_id, r.epoch, o)).collect::<Vec<_>>())
    });
    let rows = done.iter().flat_map(|(_, v)| v);
    let bytes: Vec<u8> = rows.clone().map(|(_, _, o)| o.label.as_byte()).collect();
    std::fs::write(out, &bytes).map_err(io_err(out))?;
    let mut w = sink(events)?;
    let evs =
        rows.filter_map(|&(norad_id, epoch, o)| o.rule.map(|rule| RuleEvent { norad_id, epoch, rule, label: o.label }));
    write_jsonl(&mut w, evs).and_then(|_| w.flush()).map_err(io_err(&output_path(events)))?;
    Ok(RunStatus { failures })
}

fn cmd_label_imm(input: &InputArgs, out: Option<&Path>, cfg: &PipelineConfig) -> Result<RunStatus, CliError> {
    let archive = load_archive(input, cfg)?;
    let filter_cfg = cfg.filter_config();
    let (done, failures) = per_satellite(&archive, |recs| {
        let mut f = ImmFilter::new(filter_cfg.clone()).map_err(|e| e.to_string())?;
        f.run(recs).map_err(|e| e.to_string())
    });
    let mut w = sink(out)?;
    write_jsonl(&mut w, done.iter().flat_map(|(_, v)| v)).and_then(|_| w.flush()).map_err(io_err(&output_path(out)))?;
    Ok(RunStatus { failures })
}

/// Innovation scale: configured, loaded, or the corpus feature stds.
fn score_sigma(
    archive: &Archive,
    norm_stats: Option<&Path>,
    cfg: &PipelineConfig,
) -> Result<Option<[f64; FEATURE_COUNT]>, CliError> {
    if let Some(s) = cfg.cascade.score_sigma {
        return Ok(Some(s));
    }
    if let Some(p) = norm_stats {
        return Ok(Some(NormStats::load(p).map_err(|e| CliError::Fatal(format!("{}: {e}", p.display())))?.std));
    }
    let (done, _) = per_satellite(archive, |recs| {
        let mut acc = StatsAccumulator::default();
        for r in feature_rows(recs, cfg)? {
            acc.push(&r);
        }
        Ok(acc)
    });
    let mut acc = StatsAccumulator::default();
    for (_, a) in &done {
        acc.merge(a);
    }
    match acc.finish() {
        Ok(s) => Ok(Some(s.std)),
        Err(e) => {
            log::warn!("innovation scores skipped: {e}");
            Ok(None)
        }
    }
}

fn cmd_cascade(
    input: &InputArgs,
    out: Option<&Path>,
    rule_only: bool,
    norm_stats: Option<&Path>,
    cfg: &PipelineConfig,
) -> Result<RunStatus, CliError> {
    let archive = load_archive(input, cfg)?;
    let mut ccfg = cfg.cascade.clone();
    ccfg.tiers.imm &= !rule_only;
    ccfg.score_sigma = score_sigma(&archive, norm_stats, cfg)?;
    let filter_cfg = cfg.filter_config();
    let (done, failures) = per_satellite(&archive, |recs| {
        run_cascade(recs, &cfg.features, &cfg.rules, &filter_cfg, &ccfg).map_err(|e| e.to_string())
    });
    let records: Vec<&CascadeRecord> = done.iter().flat_map(|(_, v)| v).collect();
    let mut w = sink(out)?;
    write_jsonl(&mut w, records.iter()).and_then(|_| w.flush()).map_err(io_err(&output_path(out)))?;
    drop(w);
    print_stats(out.is_some(), &tier_stats(records));
    Ok(RunStatus { failures })
}

fn print_stats(to_stdout: bool, stats: &TierStats) {
    let json = serde_json::to_string(stats).expect("plain counters serialize");
    summary_line(to_stdout, &format!("{stats}\n{json}"));
}

fn cmd_stats(path: &Path) -> Result<RunStatus, CliError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut stats = TierStats::default();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CascadeRecord =
            serde_json::from_str(&line).map_err(|e| CliError::Fatal(format!("{}:{}: {e}", path.display(), i + 1)))?;
        stats.add(&rec);
    }
    print_stats(true, &stats);
    Ok(RunStatus::default())
}

pub fn default_truth_path(archive: &Path) -> PathBuf {
    let mut s = archive.as_os_str().to_owned();
    s.push(".truth.jsonl");
    PathBuf::from(s)
}

fn cmd_synth(scenarios: &[PathBuf], out: &Path, truth: &Path, cfg: &PipelineConfig) -> Result<RunStatus, CliError> {
    let loaded = scenarios
        .iter()
        .map(|p| Scenario::load(p).map_err(|e| CliError::Fatal(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let results: Vec<_> = loaded.par_iter().map(|sc| generate(sc, &cfg.force)).collect();

    let mut archive = create(out)?;
    let mut sidecar = create(truth)?;
    let mut failures = 0;
    for (path, result) in scenarios.iter().zip(results) {
        let generated = match result {
            Ok(g) => g,
            Err(SynthError::ReentryDuringGeneration { partial }) => {
                log::error!(
                    "{}: re-entered after {} observations; keeping them",
                    path.display(),
                    partial.records.len()
                );
                failures += 1;
                *partial
            }
            Err(e) => {
                log::error!("{}: {e}", path.display());
                failures += 1;
                continue;
            }
        };
        let encoded = match encode_scenario(&generated.records, &generated.truth) {
            Ok(e) => e,
            Err(e) => {
                log::error!("{}: {e}; scenario skipped", path.display());
                failures += 1;
                continue;
            }
        };
        for (l1, l2, t) in encoded {
            writeln!(archive, "{l1}\n{l2}").map_err(io_err(out))?;
            write_jsonl(&mut sidecar, [t]).map_err(io_err(truth))?;
        }
    }
    archive.flush().map_err(io_err(out))?;
    sidecar.flush().map_err(io_err(truth))?;
    Ok(RunStatus { failures })
}

/// Archive lines and sidecar rows for one scenario, all or nothing. The
/// sidecar carries each epoch as it reads back from the archive.
fn encode_scenario(records: &[TleRecord], truth: &[Label]) -> Result<Vec<(String, String, TruthRecord)>, String> {
    records
        .iter()
        .zip(truth)
        .map(|(rec, label)| {
            let (l1, l2) = rec.to_tle_lines().map_err(|e| e.to_string())?;
            let written = parse_tle_lines(&l1, &l2).map_err(|e| e.to_string())?;
            let t = TruthRecord { norad_id: written.norad_id, epoch: written.epoch, label: *label };
            Ok((l1, l2, t))
        })
        .collect()
}
