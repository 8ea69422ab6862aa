use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use latune::analysis::Analyzer;
use latune::config::{
    preset, preset_text, setting_from_json, setting_to_json, AnalyzerSpec, ConfigError, TuneConfig, PRESET_NAMES,
};
use latune::engine::{Termination, TuneEvent, TuneRequest};
use latune::harness::{
    case_config, compare, diagonal_ladder, skewed_bench, summary_table, write_csv, write_jsonl, BenchCase,
    BenchOptions, SkewKnobs, StrategyKind,
};
use latune::report::{read_records, setting_from_record, tune_reported, ReportWriter};
use latune::sim::{gen_benchmark, GenKnobs};
use latune::{HyperParams, RngSeed};
use serde_json::Value;

const EXIT_USAGE: u8 = 1;
const EXIT_BASELINE: u8 = 2;

#[derive(Parser)]
#[command(
    name = "latune",
    version,
    about = "Tune static analyzer parameters within a time budget"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Tune an analyzer on one program.
    Tune(TuneArgs),
    /// Check a config without running anything.
    Validate {
        #[arg(long)]
        config: String,
    },
    /// Print the analyzer command line for a setting.
    Render(RenderArgs),
    /// Compare strategies on a directory of benchmark configs.
    Bench(BenchArgs),
    /// Write simulated benchmark configs.
    GenBench(GenArgs),
    /// List bundled presets, or print one.
    Presets { name: Option<String> },
}

#[derive(Args)]
struct TuneArgs {
    /// Config file, or the name of a bundled preset.
    #[arg(long)]
    config: String,
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    jobs: Option<usize>,
    /// Report file (line-delimited JSON). Overrides `report_path`.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    no_timestamps: bool,
    /// No per-round progress on stderr.
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    config: String,
    /// JSON object of parameter values; parameters left out keep their base.
    #[arg(long, conflicts_with = "from_report", required_unless_present = "from_report")]
    setting: Option<String>,
    /// `REPORT[:INDEX]`, INDEX being a 0-based record number or `last`.
    #[arg(long)]
    from_report: Option<String>,
    /// Print a JSON array instead of a shell command line.
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Jsonl,
}

#[derive(Args)]
struct BenchArgs {
    /// Directory of benchmark configs (`*.json`).
    #[arg(long)]
    models: PathBuf,
    #[arg(long)]
    budget: f64,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_value = "default,expert,adaptive")]
    strategies: Vec<String>,
    /// Output table; the format follows the extension unless `--format` is given.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long, default_value_t = 1)]
    repeats: u32,
    /// Share the budget between repeats instead of giving each the whole of it.
    #[arg(long)]
    split_budget: bool,
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    /// Thresholds concentrated on one parameter, off the ladder's diagonal.
    Skewed,
    /// Uniformly random thresholds.
    Random,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    count: u64,
    #[arg(long, default_value_t = 0)]
    first_seed: u64,
    #[arg(long, value_enum, default_value = "skewed")]
    family: Family,
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long, default_value_t = 4)]
    params: usize,
    #[arg(long, default_value_t = 12)]
    alarms: usize,
    #[arg(long, default_value_t = 20)]
    max_threshold: u64,
    #[arg(long)]
    mixed_types: bool,
    #[arg(long)]
    failure_cap: Option<f64>,
}

/// Tuning could not start because the baseline analysis failed.
#[derive(Debug)]
struct BaselineFailed(String);

impl std::fmt::Display for BaselineFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "baseline analysis failed ({}); nothing to tune", self.0)
    }
}

impl std::error::Error for BaselineFailed {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Tune(a) => cmd_tune(a),
        Cmd::Validate { config } => cmd_validate(&config),
        Cmd::Render(a) => cmd_render(a),
        Cmd::Bench(a) => cmd_bench(a),
        Cmd::GenBench(a) => cmd_gen(a),
        Cmd::Presets { name } => cmd_presets(name.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<BaselineFailed>() {
                ExitCode::from(EXIT_BASELINE)
            } else {
                ExitCode::from(EXIT_USAGE)
            }
        }
    }
}

/// A config file, or a bundled preset when no such file exists. Relative
/// paths inside a file resolve against its directory.
fn load_config(spec: &str) -> Result<(TuneConfig, PathBuf)> {
    let path = Path::new(spec);
    if !path.exists() {
        if let Some(cfg) = preset(spec) {
            return Ok((cfg, std::env::current_dir()?));
        }
    }
    let cfg = TuneConfig::load(path).map_err(config_error)?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((cfg, dir))
}

fn config_error(e: ConfigError) -> anyhow::Error {
    anyhow!("invalid config: {e}")
}

fn cmd_validate(spec: &str) -> Result<()> {
    let (cfg, dir) = load_config(spec)?;
    cfg.build_analyzer(&dir).map_err(config_error)?;
    let kind = match cfg.analyzer {
        AnalyzerSpec::External(_) => "external",
        AnalyzerSpec::Simulated(_) => "simulated",
    };
    println!(
        "ok: {} parameters, {kind} analyzer, budget {}s",
        cfg.profile.len(),
        cfg.budget_seconds
    );
    Ok(())
}

fn cmd_tune(a: TuneArgs) -> Result<()> {
    let (mut cfg, dir) = load_config(&a.config)?;
    if let Some(b) = a.budget {
        if !(b.is_finite() && b > 0.0) {
            bail!("--budget must be positive");
        }
        cfg.budget_seconds = b;
    }
    if let Some(s) = a.seed {
        cfg.seed = RngSeed(s);
    }
    if let Some(j) = a.jobs {
        cfg.hyper.jobs = j;
    }
    cfg.hyper.validate()?;
    let analyzer = cfg.build_analyzer(&dir).map_err(config_error)?;
    let report_path = a
        .report
        .clone()
        .or_else(|| cfg.report_path.as_ref().map(|p| dir.join(p)));
    let sink: Box<dyn Write> = match &report_path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create report {}", p.display()))?,
        )),
        None => Box::new(io::sink()),
    };
    let mut writer = ReportWriter::new(sink, !a.no_timestamps);
    let req = TuneRequest {
        initial: cfg.initial.clone(),
        budget_seconds: cfg.budget_seconds,
        hyper: cfg.hyper,
        seed: cfg.seed,
        analyzer: &analyzer,
        baseline_cap_seconds: cfg.baseline_cap_seconds,
    };
    let quiet = a.quiet;
    let (res, scoring) = tune_reported(&req, &mut writer, |p| analyzer.render(p), &mut |ev| {
        if quiet {
            return;
        }
        match ev {
            TuneEvent::Baseline { outcome } => eprintln!(
                "baseline: {} alarms in {:.3}s",
                outcome.alarms().map_or("?".into(), |a| a.len().to_string()),
                outcome.wall_time
            ),
            TuneEvent::Round(r) => eprintln!(
                "round {}: budget {:.3}s, {}/{} completed, eta {:.4}, alarms under base {}",
                r.round_index,
                r.round_budget_seconds,
                r.completed(),
                r.sampled.len(),
                r.eta,
                r.alarms_under_base_after.map_or("?".into(), |c| c.to_string()),
            ),
        }
    })?;
    if res.termination == Termination::BaselineFailed {
        let why = match &res.baseline.status {
            latune::OutcomeStatus::Failed { reason } => format!("{reason:?}"),
            latune::OutcomeStatus::Completed { .. } => "unknown".into(),
        };
        return Err(BaselineFailed(why).into());
    }
    println!(
        "final setting: {}",
        Value::Object(setting_to_json(&cfg.profile, &res.final_setting))
    );
    if let Some(argv) = analyzer.render(&res.final_setting) {
        println!("command: {}", shell_words::join(&argv));
    }
    match scoring.alarms() {
        Some(al) => println!("final alarm count: {}", al.len()),
        None => println!("final alarm count: unknown (final analysis did not complete)"),
    }
    println!(
        "baseline alarms: {}, rounds: {}, termination: {}",
        res.a_uni_size,
        res.rounds.len(),
        serde_json::to_value(res.termination)?.as_str().unwrap_or("?")
    );
    if let Some(p) = report_path {
        println!("report: {}", p.display());
    }
    Ok(())
}

fn cmd_render(a: RenderArgs) -> Result<()> {
    let (cfg, dir) = load_config(&a.config)?;
    let setting = match (&a.setting, &a.from_report) {
        (Some(text), _) => {
            let v: Value = serde_json::from_str(text).context("--setting is not valid JSON")?;
            let obj = v
                .as_object()
                .ok_or_else(|| anyhow!("--setting must be a JSON object"))?;
            setting_from_json(&cfg.profile, obj, Some(&cfg.base()), "setting").map_err(|e| anyhow!("{e}"))?
        }
        (None, Some(spec)) => {
            let (path, index) = match spec.rsplit_once(':') {
                Some((p, i)) if !p.is_empty() && (i == "last" || i.parse::<usize>().is_ok()) => (p, i),
                _ => (spec.as_str(), "last"),
            };
            let f = File::open(path).with_context(|| format!("cannot open report {path}"))?;
            let records = read_records(BufReader::new(f))?;
            setting_from_record(&cfg.profile, &records, index)?
        }
        (None, None) => bail!("give --setting or --from-report"),
    };
    let AnalyzerSpec::External(_) = cfg.analyzer else {
        bail!("a simulated analyzer has no command line");
    };
    let analyzer = cfg.build_analyzer(&dir).map_err(config_error)?;
    let latune::config::AnalyzerHandle::External(ext) = &analyzer else {
        unreachable!("external spec builds an external analyzer")
    };
    let argv = ext.command_for(&setting)?;
    if a.json {
        println!("{}", serde_json::to_string(&argv)?);
    } else {
        println!("{}", shell_words::join(&argv));
    }
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let kinds = a
        .strategies
        .iter()
        .map(|s| StrategyKind::parse(s).ok_or_else(|| anyhow!("unknown strategy `{s}`")))
        .collect::<Result<Vec<_>>>()?;
    if !(a.budget.is_finite() && a.budget > 0.0) {
        bail!("--budget must be positive");
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(&a.models)
        .with_context(|| format!("cannot read {}", a.models.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|x| x == "json"));
    paths.sort();
    if paths.is_empty() {
        bail!("no *.json configs in {}", a.models.display());
    }
    let cases = paths
        .iter()
        .map(|p| {
            let cfg = TuneConfig::load(p).map_err(|e| anyhow!("{}: {e}", p.display()))?;
            BenchCase::from_config(&cfg, &a.models).map_err(|e| anyhow!("{}: {e}", p.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut hyper = HyperParams::default();
    if let Some(j) = a.jobs {
        hyper.jobs = j;
    }
    hyper.validate()?;
    let opts = BenchOptions {
        budget: a.budget,
        seeds: a.seeds.clone(),
        hyper,
        repeats: a.repeats,
        split_budget: a.split_budget,
    };
    let cmp = compare(&cases, &kinds, &opts)?;
    if let Some(out) = &a.out {
        let format = a.format.unwrap_or(match out.extension().and_then(|x| x.to_str()) {
            Some("jsonl") => Format::Jsonl,
            _ => Format::Csv,
        });
        let f = BufWriter::new(File::create(out).with_context(|| format!("cannot create {}", out.display()))?);
        match format {
            Format::Csv => write_csv(&cmp, f)?,
            Format::Jsonl => write_jsonl(&cmp, f)?,
        }
    }
    print!("{}", summary_table(&cmp));
    Ok(())
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    fs::create_dir_all(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;
    for seed in a.first_seed..a.first_seed + a.count {
        let cfg = match a.family {
            Family::Skewed => {
                let k = SkewKnobs {
                    n_params: a.params,
                    n_alarms: a.alarms,
                    hot_max: a.max_threshold,
                    failure_cap: a.failure_cap.unwrap_or(SkewKnobs::default().failure_cap),
                    budget: a.budget.unwrap_or(SkewKnobs::default().budget),
                    ..SkewKnobs::default()
                };
                if k.n_params == 0 || k.hot_max == 0 {
                    bail!("--params and --max-threshold must be positive");
                }
                let b = skewed_bench(RngSeed(seed), &k);
                case_config(&b.id, &b.model, &b.initial, b.ladder, k.budget)
            }
            Family::Random => {
                let knobs = GenKnobs {
                    mixed_types: a.mixed_types,
                    failure_cap: a.failure_cap,
                    ..GenKnobs::integers(a.params, a.alarms, a.max_threshold)
                };
                let b = gen_benchmark(RngSeed(seed), &knobs)?;
                let ladder = diagonal_ladder(b.model.profile(), 10, a.max_threshold);
                case_config(
                    &b.id,
                    &b.model,
                    &b.default_initial()?,
                    ladder,
                    a.budget.unwrap_or(600.0),
                )
            }
        };
        let path = a.out.join(format!("{}.json", cfg.program.id));
        fs::write(&path, cfg.to_json_string() + "\n").with_context(|| format!("cannot write {}", path.display()))?;
        println!("{}", path.display());
    }
    Ok(())
}

fn cmd_presets(name: Option<&str>) -> Result<()> {
    match name {
        None => PRESET_NAMES.iter().for_each(|n| println!("{n}")),
        Some(n) => print!(
            "{}",
            preset_text(n).ok_or_else(|| anyhow!("no preset `{n}`; try one of {}", PRESET_NAMES.join(", ")))?
        ),
    }
    Ok(())
}
