//! Pipeline CLI: synthesize, train, classify, assign, measure, compare,
//! report. Every subcommand writes only its documented outputs, sorts all
//! emissions, and produces byte-identical files for identical inputs.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 internal
//! error. Failures print one machine-parsable line on stderr:
//! `langdiv: error: kind=<usage|data|internal> <message>`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use langdiv::catchment::{
    assign_all, coverage, read_assignments_csv, rollup, write_assignments_csv, Level,
};
use langdiv::census::{
    apply_exclusions, census_histogram, comparison_battery, load_census, load_region_profiles,
    load_regional_cr_table, read_correlations_csv, write_correlations_csv, Crosswalk,
    ExclusionPolicy,
};
use langdiv::diversity::{concentration_ratio, histogram, write_diversity_csv};
use langdiv::langid::{
    boost_corpus, compare_models, load_seed_corpus, read_predictions, split_corpus,
    write_predictions, LanguageModel, LanguagePrediction, TrainConfig,
};
use langdiv::record::{load_points, read_records_file, TextRecord};
use langdiv::report::{build_report, write_report, ReportInputs};
use langdiv::synthgen::{
    generate, load_profiles, records_to_jsonl, write_labels_csv, MonthSpan, SentencePool,
};
use langdiv::timeseries::{
    diagnostics, monthly_cr_series, write_diagnostics_csv, write_series_csv, DiagnosticsParams,
    Mode, TimeseriesError,
};

#[derive(Parser)]
#[command(name = "langdiv", version, about = "Linguistic diversity of places from geotagged text")]
struct Cli {
    /// TOML config file supplying defaults for common options.
    #[arg(long, global = true, env = "LANGDIV_CONFIG")]
    config: Option<PathBuf>,
    /// Directory for outputs given as bare file names.
    #[arg(long, global = true, env = "LANGDIV_OUT_DIR")]
    out_dir: Option<PathBuf>,
    /// Seed for anything randomized (synthesis).
    #[arg(long, global = true, env = "LANGDIV_SEED")]
    seed: Option<u64>,
    /// Worker thread cap; 0 means one per core. Output bytes do not depend on it.
    #[arg(long, global = true, env = "LANGDIV_JOBS")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a character n-gram language identifier from a seed corpus directory.
    TrainLid(TrainLidArgs),
    /// Classify records with a trained model, emitting predictions JSONL.
    Classify(ClassifyArgs),
    /// Compare two prediction files over the same records (agreement report).
    CompareModels(CompareModelsArgs),
    /// Assign records to their nearest in-radius collection point.
    Assign(AssignArgs),
    /// Concentration ratios per group from predictions and assignments.
    Diversity(DiversityArgs),
    /// Monthly CR series and diagnostics.
    Timeseries(TimeseriesArgs),
    /// Census comparison battery over the bundled benchmark tables.
    CompareCensus(CompareCensusArgs),
    /// Generate a synthetic corpus with known language mixtures.
    Synth(SynthArgs),
    /// Summary document plus plot-ready CSVs from prior stage outputs.
    Report(ReportArgs),
}

#[derive(Args)]
struct TrainLidArgs {
    /// Directory of <code>.txt seed files, one sample per line.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Output model file.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    model_id: Option<String>,
    #[arg(long)]
    ngram_min: Option<usize>,
    #[arg(long)]
    ngram_max: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Repeat a language's seed lines, e.g. --boost mri=3 (repeatable).
    #[arg(long, value_name = "LANG=K")]
    boost: Vec<String>,
    /// Hold out every k-th line per language and evaluate on it.
    #[arg(long)]
    holdout_every: Option<usize>,
    /// Sample length (chars) for held-out evaluation.
    #[arg(long, default_value_t = 50)]
    sample_len: usize,
    /// Where to write the held-out evaluation CSV.
    #[arg(long)]
    eval_out: Option<PathBuf>,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    records: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareModelsArgs {
    #[arg(long)]
    preds_a: Option<PathBuf>,
    #[arg(long)]
    preds_b: Option<PathBuf>,
    /// Output JSON report.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AssignArgs {
    #[arg(long)]
    records: Option<PathBuf>,
    #[arg(long)]
    points: Option<PathBuf>,
    #[arg(long)]
    radius_km: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a coverage summary CSV (region,count,share).
    #[arg(long)]
    coverage_out: Option<PathBuf>,
}

#[derive(Args)]
struct DiversityArgs {
    #[arg(long)]
    preds: Option<PathBuf>,
    #[arg(long)]
    assignments: Option<PathBuf>,
    #[arg(long)]
    points: Option<PathBuf>,
    /// point | region | island | urban_rural | national
    #[arg(long)]
    group_by: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    /// Language codes to exclude from histograms (repeatable).
    #[arg(long, value_name = "CODE")]
    exclude: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TimeseriesArgs {
    #[arg(long)]
    preds_a: Option<PathBuf>,
    #[arg(long)]
    preds_b: Option<PathBuf>,
    #[arg(long)]
    records: Option<PathBuf>,
    #[arg(long)]
    assignments: Option<PathBuf>,
    /// national | region
    #[arg(long)]
    group_by: Option<String>,
    /// model_a | model_b | agreement
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    tz_offset: Option<i32>,
    #[arg(long, value_name = "CODE")]
    exclude: Vec<String>,
    #[arg(long)]
    out_series: Option<PathBuf>,
    #[arg(long)]
    out_diagnostics: Option<PathBuf>,
}

#[derive(Args)]
struct CompareCensusArgs {
    /// Regional CR benchmark CSV: region,census,idnet,pacificlid.
    #[arg(long)]
    table4: Option<PathBuf>,
    /// Corpus summary CSV: region,tweets,corpus_share.
    #[arg(long)]
    table5: Option<PathBuf>,
    /// Demographics CSV: region,pop_density,median_age.
    #[arg(long)]
    table6: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional census table; computes per-geography CR_n after exclusions.
    #[arg(long)]
    census: Option<PathBuf>,
    #[arg(long)]
    crosswalk: Option<PathBuf>,
    #[arg(long)]
    census_cr_out: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Args)]
struct SynthArgs {
    /// JSON array of region mix profiles.
    #[arg(long)]
    profiles: Option<PathBuf>,
    /// Month span, e.g. 2020-01:2020-12.
    #[arg(long)]
    months: Option<String>,
    /// Directory of <code>.txt sentence pools.
    #[arg(long)]
    pool: Option<PathBuf>,
    #[arg(long)]
    out_records: Option<PathBuf>,
    #[arg(long)]
    out_labels: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    records: Option<PathBuf>,
    #[arg(long)]
    preds_a: Option<PathBuf>,
    #[arg(long)]
    preds_b: Option<PathBuf>,
    #[arg(long)]
    assignments: Option<PathBuf>,
    /// Correlation CSV from compare-census.
    #[arg(long)]
    correlations: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    tz_offset: Option<i32>,
    #[arg(long, value_name = "CODE")]
    exclude: Vec<String>,
}

/// Config-file schema. Flags win over these values; environment variables
/// (LANGDIV_*) sit between flags and the file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    records: Option<PathBuf>,
    points: Option<PathBuf>,
    census: Option<PathBuf>,
    crosswalk: Option<PathBuf>,
    model_a: Option<PathBuf>,
    model_b: Option<PathBuf>,
    radius_km: Option<f64>,
    cr_n: Option<usize>,
    mode: Option<String>,
    tz_offset: Option<i32>,
    seed: Option<u64>,
    jobs: Option<usize>,
    out_dir: Option<PathBuf>,
    exclude_languages: Option<Vec<String>>,
    exclusions: Option<ConfigExclusions>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigExclusions {
    drop_signed: Option<bool>,
    drop_other_nfd: Option<bool>,
    drop_none_too_young: Option<bool>,
    custom_labels: Option<Vec<String>>,
}

enum CliError {
    Usage(String),
    Data(String),
    Internal(String),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Data(_) => "data",
            CliError::Internal(_) => "internal",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Internal(m) => m,
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

fn usage(msg: impl std::fmt::Display) -> CliError {
    CliError::Usage(msg.to_string())
}

fn data(msg: impl std::fmt::Display) -> CliError {
    CliError::Data(msg.to_string())
}

fn internal(msg: impl std::fmt::Display) -> CliError {
    CliError::Internal(msg.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version arrive here too, but on stdout with code 0
            if e.use_stderr() {
                let line = e.to_string().lines().next().unwrap_or("bad arguments").to_string();
                eprintln!("langdiv: error: kind=usage {line}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("langdiv: error: kind={} {}", e.kind(), e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = match &cli.config {
        Some(path) => {
            let body = std::fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
            toml::from_str::<RunConfig>(&body)
                .map_err(|e| usage(format!("bad config {}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    validate_config(&config)?;

    let jobs = cli.jobs.or(config.jobs).unwrap_or(0);
    if jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| internal(format!("thread pool: {e}")))?;
    }
    let out_dir =
        cli.out_dir.clone().or_else(|| config.out_dir.clone()).unwrap_or_else(|| PathBuf::from("."));
    let seed = cli.seed.or(config.seed).unwrap_or(42);

    let ctx = Ctx { config, out_dir, seed };
    match cli.command {
        Command::TrainLid(args) => train_lid(&ctx, args),
        Command::Classify(args) => classify(&ctx, args),
        Command::CompareModels(args) => compare_models_cmd(&ctx, args),
        Command::Assign(args) => assign_cmd(&ctx, args),
        Command::Diversity(args) => diversity_cmd(&ctx, args),
        Command::Timeseries(args) => timeseries_cmd(&ctx, args),
        Command::CompareCensus(args) => compare_census_cmd(&ctx, args),
        Command::Synth(args) => synth_cmd(&ctx, args),
        Command::Report(args) => report_cmd(&ctx, args),
    }
}

struct Ctx {
    config: RunConfig,
    out_dir: PathBuf,
    seed: u64,
}

impl Ctx {
    /// Resolves an output path: bare names land in the out dir.
    fn out_path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() || p.components().count() > 1 {
            p.to_path_buf()
        } else {
            self.out_dir.join(p)
        }
    }

    fn lang_exclusions(&self, flag: &[String]) -> BTreeSet<String> {
        if flag.is_empty() {
            self.config.exclude_languages.clone().unwrap_or_default().into_iter().collect()
        } else {
            flag.iter().cloned().collect()
        }
    }

    fn exclusion_policy(&self) -> ExclusionPolicy {
        let mut policy = ExclusionPolicy::default();
        if let Some(c) = &self.config.exclusions {
            if let Some(v) = c.drop_signed {
                policy.drop_signed = v;
            }
            if let Some(v) = c.drop_other_nfd {
                policy.drop_other_nfd = v;
            }
            if let Some(v) = c.drop_none_too_young {
                policy.drop_none_too_young = v;
            }
            if let Some(labels) = &c.custom_labels {
                policy.custom_labels = labels.iter().cloned().collect();
            }
        }
        policy
    }
}

fn validate_config(config: &RunConfig) -> Result<(), CliError> {
    for (name, path) in [
        ("records", &config.records),
        ("points", &config.points),
        ("census", &config.census),
        ("crosswalk", &config.crosswalk),
        ("model_a", &config.model_a),
        ("model_b", &config.model_b),
    ] {
        if let Some(p) = path {
            if !p.exists() {
                return Err(data(format!("config path {name} = {} does not exist", p.display())));
            }
        }
    }
    if let Some(n) = config.cr_n {
        if n < 1 {
            return Err(usage("config cr_n must be >= 1"));
        }
    }
    if let Some(mode) = &config.mode {
        mode.parse::<Mode>().map_err(usage)?;
    }
    Ok(())
}

fn require<T: Clone>(flag: &Option<T>, fallback: Option<&T>, name: &str) -> Result<T, CliError> {
    flag.clone()
        .or_else(|| fallback.cloned())
        .ok_or_else(|| usage(format!("missing required option --{name}")))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| internal(format!("creating {}: {e}", parent.display())))?;
        }
    }
    std::fs::write(path, bytes).map_err(|e| internal(format!("writing {}: {e}", path.display())))
}

fn parse_boosts(specs: &[String]) -> Result<BTreeMap<String, usize>, CliError> {
    let mut boosts = BTreeMap::new();
    for spec in specs {
        let (lang, k) = spec
            .split_once('=')
            .ok_or_else(|| usage(format!("bad --boost {spec:?}, expected LANG=K")))?;
        let k: usize = k.parse().map_err(|e| usage(format!("bad --boost {spec:?}: {e}")))?;
        boosts.insert(lang.to_string(), k);
    }
    Ok(boosts)
}

fn train_lid(ctx: &Ctx, args: TrainLidArgs) -> Result<(), CliError> {
    let corpus_dir = require(&args.corpus, None, "corpus")?;
    let out = ctx.out_path(&require(&args.out, None, "out")?);
    let mut config = TrainConfig::default();
    if let Some(id) = args.model_id {
        config.model_id = id;
    }
    if let Some(v) = args.ngram_min {
        config.ngram_min = v;
    }
    if let Some(v) = args.ngram_max {
        config.ngram_max = v;
    }
    if let Some(v) = args.alpha {
        config.alpha = v;
    }
    let boosts = parse_boosts(&args.boost)?;

    let full = load_seed_corpus(&corpus_dir).map_err(|e| data(e.to_string()))?;
    let (train, holdout) = match args.holdout_every {
        Some(k) if k >= 2 => split_corpus(&full, k),
        Some(k) => return Err(usage(format!("--holdout-every must be >= 2, got {k}"))),
        None => (full, Vec::new()),
    };
    let train = if boosts.is_empty() { train } else { boost_corpus(&train, &boosts) };
    let model = LanguageModel::train(&train, &config).map_err(|e| data(e.to_string()))?;
    model.save_file(&out).map_err(|e| internal(e.to_string()))?;

    if !holdout.is_empty() {
        let report = model.evaluate(&holdout, args.sample_len).map_err(|e| data(e.to_string()))?;
        let mut csv = String::from("language,precision,recall,f1,support\n");
        for (lang, s) in &report.per_language {
            csv.push_str(&format!(
                "{lang},{:.6},{:.6},{:.6},{}\n",
                s.precision, s.recall, s.f1, s.support
            ));
        }
        csv.push_str(&format!(
            "macro,{:.6},{:.6},{:.6},{}\n",
            report.macro_precision,
            report.macro_recall,
            report.macro_f1,
            holdout.len()
        ));
        let eval_path = args
            .eval_out
            .map(|p| ctx.out_path(&p))
            .unwrap_or_else(|| out.with_extension("eval.csv"));
        write_file(&eval_path, csv.as_bytes())?;
    }
    Ok(())
}

fn classify(ctx: &Ctx, args: ClassifyArgs) -> Result<(), CliError> {
    let model_path = require(&args.model, ctx.config.model_a.as_ref(), "model")?;
    let records_path = require(&args.records, ctx.config.records.as_ref(), "records")?;
    let out = ctx.out_path(&require(&args.out, None, "out")?);

    let model = LanguageModel::load_file(&model_path).map_err(|e| data(e.to_string()))?;
    let records = read_records_file(&records_path).map_err(|e| data(e.to_string()))?;
    let preds: Vec<LanguagePrediction> = {
        use rayon::prelude::*;
        records.par_iter().map(|r| model.classify_record(&r.id, &r.text)).collect()
    };
    let mut buf = Vec::new();
    write_predictions(&mut buf, &preds).map_err(|e| internal(e.to_string()))?;
    write_file(&out, &buf)
}

fn compare_models_cmd(ctx: &Ctx, args: CompareModelsArgs) -> Result<(), CliError> {
    let a = read_predictions(&require(&args.preds_a, None, "preds-a")?).map_err(|e| data(e.to_string()))?;
    let b = read_predictions(&require(&args.preds_b, None, "preds-b")?).map_err(|e| data(e.to_string()))?;
    let out = ctx.out_path(&require(&args.out, None, "out")?);
    let report = compare_models(&a, &b).map_err(|e| data(e.to_string()))?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| internal(e.to_string()))?;
    write_file(&out, format!("{json}\n").as_bytes())
}

fn assign_cmd(ctx: &Ctx, args: AssignArgs) -> Result<(), CliError> {
    let records_path = require(&args.records, ctx.config.records.as_ref(), "records")?;
    let points_path = require(&args.points, ctx.config.points.as_ref(), "points")?;
    let out = ctx.out_path(&require(&args.out, None, "out")?);
    let radius =
        args.radius_km.or(ctx.config.radius_km).unwrap_or(langdiv::catchment::DEFAULT_RADIUS_KM);

    let records = read_records_file(&records_path).map_err(|e| data(e.to_string()))?;
    let points = load_points(&points_path).map_err(|e| data(e.to_string()))?;
    let assignments = assign_all(&records, &points, radius).map_err(|e| data(e.to_string()))?;
    let mut buf = Vec::new();
    write_assignments_csv(&mut buf, &assignments).map_err(|e| internal(e.to_string()))?;
    write_file(&out, &buf)?;

    if let Some(cov_path) = args.coverage_out {
        let cov = coverage(&assignments);
        let mut csv = String::from("region,count,share\n");
        for (region, count) in &cov.per_region {
            csv.push_str(&format!("{region},{count},{:.6}\n", cov.region_shares[region]));
        }
        csv.push_str(&format!("OUTSIDE,{},\n", cov.outside));
        write_file(&ctx.out_path(&cov_path), csv.as_bytes())?;
    }
    Ok(())
}

fn diversity_cmd(ctx: &Ctx, args: DiversityArgs) -> Result<(), CliError> {
    // argument problems surface before any file is read
    let level: Level = args
        .group_by
        .unwrap_or_else(|| "region".to_string())
        .parse()
        .map_err(usage)?;
    let n = args.n.or(ctx.config.cr_n).unwrap_or(10);
    if n < 1 {
        return Err(usage("--n must be >= 1"));
    }
    let out = ctx.out_path(&require(&args.out, None, "out")?);

    let preds = read_predictions(&require(&args.preds, None, "preds")?).map_err(|e| data(e.to_string()))?;
    let assignments =
        read_assignments_csv(&require(&args.assignments, None, "assignments")?).map_err(data)?;
    let points = load_points(&require(&args.points, ctx.config.points.as_ref(), "points")?)
        .map_err(|e| data(e.to_string()))?;
    let exclusions = ctx.lang_exclusions(&args.exclude);

    let by_id: BTreeMap<&str, &LanguagePrediction> = preds.iter().map(|p| (p.id.as_str(), p)).collect();
    let groups = rollup(&assignments, &points, level).map_err(|e| data(e.to_string()))?;
    let mut rows = Vec::new();
    for (place, ids) in &groups.groups {
        let cell: Vec<LanguagePrediction> =
            ids.iter().filter_map(|id| by_id.get(id.as_str()).map(|p| (*p).clone())).collect();
        let hist = histogram(&cell, place, "all", &exclusions);
        match concentration_ratio(&hist, n) {
            Ok(cr) => rows.push((place.clone(), "all".to_string(), cr, hist.total)),
            Err(langdiv::diversity::DiversityError::EmptyCell) => continue,
            Err(e) => return Err(data(e.to_string())),
        }
    }
    let mut buf = Vec::new();
    write_diversity_csv(&mut buf, &rows).map_err(|e| internal(e.to_string()))?;
    write_file(&out, &buf)
}

fn timeseries_cmd(ctx: &Ctx, args: TimeseriesArgs) -> Result<(), CliError> {
    // argument problems surface before any file is read
    let mode: Mode = args
        .mode
        .or_else(|| ctx.config.mode.clone())
        .unwrap_or_else(|| "model_a".to_string())
        .parse()
        .map_err(usage)?;
    if mode != Mode::ModelA && args.preds_b.is_none() {
        return Err(usage(format!("mode {mode} needs --preds-b")));
    }
    let n = args.n.or(ctx.config.cr_n).unwrap_or(10);
    let tz = args.tz_offset.or(ctx.config.tz_offset).unwrap_or(0);
    let group_by = args.group_by.unwrap_or_else(|| "national".to_string());
    if group_by != "national" && group_by != "region" {
        return Err(usage(format!("unknown --group-by {group_by:?} (expected national|region)")));
    }
    let out_series = ctx.out_path(&require(&args.out_series, None, "out-series")?);
    let out_diag = ctx.out_path(&require(&args.out_diagnostics, None, "out-diagnostics")?);

    let preds_a =
        read_predictions(&require(&args.preds_a, None, "preds-a")?).map_err(|e| data(e.to_string()))?;
    let preds_b = match &args.preds_b {
        Some(p) => read_predictions(p).map_err(|e| data(e.to_string()))?,
        None => Vec::new(),
    };
    let records = read_records_file(&require(&args.records, ctx.config.records.as_ref(), "records")?)
        .map_err(|e| data(e.to_string()))?;
    let assignments =
        read_assignments_csv(&require(&args.assignments, None, "assignments")?).map_err(data)?;
    let exclusions = ctx.lang_exclusions(&args.exclude);

    let mut places: Vec<(String, BTreeSet<String>)> = Vec::new();
    match group_by.as_str() {
        "national" => {
            let ids = assignments
                .iter()
                .filter(|a| a.is_assigned())
                .map(|a| a.record_id.clone())
                .collect();
            places.push(("national".to_string(), ids));
        }
        "region" => {
            let mut by_region: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
            for a in &assignments {
                if let Some(region) = &a.region {
                    by_region.entry(region.clone()).or_default().insert(a.record_id.clone());
                }
            }
            places.extend(by_region);
        }
        other => return Err(usage(format!("unknown --group-by {other:?} (expected national|region)"))),
    }

    let mut series_buf = Vec::new();
    let mut series_have_header = false;
    let mut diag_buf = Vec::new();
    let mut diag_have_header = false;
    for (place, ids) in &places {
        let recs: Vec<TextRecord> = records.iter().filter(|r| ids.contains(&r.id)).cloned().collect();
        let pa: Vec<LanguagePrediction> =
            preds_a.iter().filter(|p| ids.contains(&p.id)).cloned().collect();
        let pb: Vec<LanguagePrediction> =
            preds_b.iter().filter(|p| ids.contains(&p.id)).cloned().collect();
        let series = monthly_cr_series(&pa, &pb, &recs, place, n, mode, tz, &exclusions)
            .map_err(|e| data(e.to_string()))?;

        let mut one = Vec::new();
        write_series_csv(&mut one, &series).map_err(|e| internal(e.to_string()))?;
        push_csv(&mut series_buf, one, &mut series_have_header);

        match diagnostics(&series, &DiagnosticsParams::default()) {
            Ok(d) => {
                let mut one = Vec::new();
                write_diagnostics_csv(&mut one, place, &d).map_err(|e| internal(e.to_string()))?;
                push_csv(&mut diag_buf, one, &mut diag_have_header);
            }
            // Short series simply have no diagnostics rows.
            Err(TimeseriesError::TooFewMonths { .. }) => {}
            Err(e) => return Err(data(e.to_string())),
        }
    }
    if diag_buf.is_empty() {
        diag_buf = b"place,kind,year,month,max_mean_drift,stationary_flag\n".to_vec();
    }
    write_file(&out_series, &series_buf)?;
    write_file(&out_diag, &diag_buf)
}

/// Appends a CSV fragment, keeping only the first header line.
fn push_csv(acc: &mut Vec<u8>, fragment: Vec<u8>, have_header: &mut bool) {
    if *have_header {
        if let Some(pos) = fragment.iter().position(|&b| b == b'\n') {
            acc.extend_from_slice(&fragment[pos + 1..]);
        }
    } else {
        acc.extend_from_slice(&fragment);
        *have_header = true;
    }
}

fn compare_census_cmd(ctx: &Ctx, args: CompareCensusArgs) -> Result<(), CliError> {
    let table4 = require(&args.table4, None, "table4")?;
    let table5 = require(&args.table5, None, "table5")?;
    let table6 = require(&args.table6, None, "table6")?;
    let out = ctx.out_path(&require(&args.out, None, "out")?);

    let (census_cr, model_a, model_b) =
        load_regional_cr_table(&table4).map_err(|e| data(e.to_string()))?;
    let profiles = load_region_profiles(&table5, &table6).map_err(|e| data(e.to_string()))?;
    let pairs =
        comparison_battery(&census_cr, &model_a, &model_b, &profiles).map_err(|e| data(e.to_string()))?;
    let mut buf = Vec::new();
    write_correlations_csv(&mut buf, &pairs).map_err(|e| internal(e.to_string()))?;
    write_file(&out, &buf)?;

    // Optional second output: per-geography CR from a raw census table.
    if let Some(census_path) = args.census.clone().or_else(|| ctx.config.census.clone()) {
        let crosswalk_path = require(&args.crosswalk, ctx.config.crosswalk.as_ref(), "crosswalk")?;
        let cr_out =
            ctx.out_path(&args.census_cr_out.unwrap_or_else(|| PathBuf::from("census_cr.csv")));
        let n = args.n.or(ctx.config.cr_n).unwrap_or(10);
        let crosswalk = Crosswalk::load(&crosswalk_path).map_err(|e| data(e.to_string()))?;
        let (table, _warnings) =
            load_census(&census_path, &crosswalk).map_err(|e| data(e.to_string()))?;
        let (kept, _manifest) = apply_exclusions(&table, &ctx.exclusion_policy());

        let cells: BTreeSet<(String, i32)> =
            kept.rows.iter().map(|r| (r.geography.clone(), r.census_year)).collect();
        let mut csv = String::from("geography,year,n,cr_value,band,total_count\n");
        for (geography, year) in cells {
            let hist = census_histogram(&kept, &geography, year).map_err(|e| data(e.to_string()))?;
            let cr = concentration_ratio(&hist, n).map_err(|e| data(e.to_string()))?;
            csv.push_str(&format!(
                "{geography},{year},{n},{:.6},{},{}\n",
                cr.value, cr.band, hist.total
            ));
        }
        write_file(&cr_out, csv.as_bytes())?;
    }
    Ok(())
}

fn synth_cmd(ctx: &Ctx, args: SynthArgs) -> Result<(), CliError> {
    let profiles_path = require(&args.profiles, None, "profiles")?;
    let months: MonthSpan = require(&args.months, None, "months")?.parse().map_err(usage)?;
    let pool_dir = require(&args.pool, None, "pool")?;
    let out_records = ctx.out_path(&require(&args.out_records, None, "out-records")?);
    let out_labels = ctx.out_path(&require(&args.out_labels, None, "out-labels")?);

    let profiles = load_profiles(&profiles_path).map_err(|e| data(e.to_string()))?;
    let pool = SentencePool::load_dir(&pool_dir).map_err(|e| data(e.to_string()))?;
    let (records, labels) =
        generate(&profiles, months, ctx.seed, &pool).map_err(|e| data(e.to_string()))?;
    write_file(&out_records, records_to_jsonl(&records).as_bytes())?;
    let mut buf = Vec::new();
    write_labels_csv(&mut buf, &labels).map_err(|e| internal(e.to_string()))?;
    write_file(&out_labels, &buf)
}

fn report_cmd(ctx: &Ctx, args: ReportArgs) -> Result<(), CliError> {
    let stage = |arg: &Option<PathBuf>, fallback: Option<&PathBuf>, name: &str| -> Result<PathBuf, CliError> {
        let path = arg
            .clone()
            .or_else(|| fallback.cloned())
            .ok_or_else(|| data(format!("missing stage output: {name}")))?;
        if !path.exists() {
            return Err(data(format!("missing stage output: {name}: {}", path.display())));
        }
        Ok(path)
    };
    let records_path = stage(&args.records, ctx.config.records.as_ref(), "ingest (--records)")?;
    let preds_a_path = stage(&args.preds_a, None, "classify (--preds-a)")?;
    let assignments_path = stage(&args.assignments, None, "assign (--assignments)")?;

    let records = read_records_file(&records_path).map_err(|e| data(e.to_string()))?;
    let preds_a = read_predictions(&preds_a_path).map_err(|e| data(e.to_string()))?;
    let assignments = read_assignments_csv(&assignments_path).map_err(data)?;
    let preds_b = match &args.preds_b {
        Some(p) => Some(read_predictions(p).map_err(|e| data(e.to_string()))?),
        None => None,
    };
    let correlations = match &args.correlations {
        Some(p) => Some(read_correlations_csv(p).map_err(|e| data(e.to_string()))?),
        None => None,
    };
    let exclusions = ctx.lang_exclusions(&args.exclude);

    let inputs = ReportInputs {
        records: &records,
        preds_a: &preds_a,
        preds_b: preds_b.as_deref(),
        assignments: &assignments,
        correlations: correlations.as_deref(),
        cr_n: args.n.or(ctx.config.cr_n).unwrap_or(10),
        tz_offset_min: args.tz_offset.or(ctx.config.tz_offset).unwrap_or(0),
        exclusions: &exclusions,
    };
    let outputs = build_report(&inputs).map_err(|e| data(e.to_string()))?;
    write_report(&outputs, &ctx.out_dir).map_err(|e| internal(e.to_string()))?;
    Ok(())
}
