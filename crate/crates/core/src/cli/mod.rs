//! The `dmorl` command line: `train`, `eval`, `metrics` and `plot`.
//!
//! Exit codes are 0 on success, 2 for usage, configuration and input
//! errors, and 3 when training fails after exhausting its resets.

mod config;
pub mod svg;

pub use config::{parse_assignment, table_from_manifest, ArchSection, ConfigSources, RunConfig, ENV_PREFIX};

use std::cell::RefCell;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::algos::{load_model, MetricsLog, MetricsRow, Trainer};
use crate::envs::make_env;
use crate::error::{Error, Result};
use crate::metrics::{
    evaluate_policy, read_front_csv, reference_point, true_pareto_front, Evaluation, FrontTable, ParetoFront,
};
use crate::ndgrad::Checkpoint;
use crate::nets::Model;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_TRAINING: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "dmorl", version, about = "Train and evaluate weight-conditioned multi-objective agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train an agent and write metrics.csv, checkpoints and manifest.json.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a weight grid and write front.csv and metrics.csv.
    Eval(EvalArgs),
    /// Recompute hv, eu and mul from a front file.
    Metrics(MetricsArgs),
    /// Draw two-objective fronts as an SVG scatter plot.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
struct Overrides {
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set train.lr=1e-3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    overrides: Overrides,
    /// Environment id (`env`).
    #[arg(long)]
    env: Option<String>,
    /// moppo or moa2c (`algo`).
    #[arg(long)]
    algo: Option<String>,
    /// multi-body, merge, hypernet or hypernet-obs (`arch.kind`).
    #[arg(long)]
    arch: Option<String>,
    /// `arch.shared_trunk`.
    #[arg(long, value_name = "BOOL")]
    shared_trunk: Option<bool>,
    /// Environment steps (`train.total_steps`).
    #[arg(long)]
    steps: Option<u64>,
    /// `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// `out_dir`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Print a progress line every N iterations to stderr (0 = never).
    #[arg(long, default_value_t = 0)]
    progress: u64,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    overrides: Overrides,
    /// Run directory holding manifest.json and checkpoint.bin.
    #[arg(long)]
    run: Option<PathBuf>,
    /// Checkpoint to evaluate (default: RUN/checkpoint.bin).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Environment id (`env`).
    #[arg(long)]
    env: Option<String>,
    /// Where to write front.csv and metrics.csv (default: RUN/eval).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// `eval.grid_size`.
    #[arg(long)]
    grid_size: Option<usize>,
    /// `eval.samples`.
    #[arg(long)]
    samples: Option<usize>,
    /// `eval.episodes`.
    #[arg(long)]
    episodes: Option<usize>,
    /// `eval.gamma`.
    #[arg(long)]
    gamma: Option<f64>,
    /// `eval.seed`.
    #[arg(long)]
    eval_seed: Option<u64>,
    /// Front file whose returns serve as the reference for mul.
    #[arg(long)]
    reference_front: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    /// Front file (`alpha_1..alpha_K,ret_1..ret_K`).
    front: PathBuf,
    /// Take the reference point and front from this environment.
    #[arg(long)]
    env: Option<String>,
    /// Config file providing `[envs]` parameters for --env.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Discount used for the environment's reference point and front.
    #[arg(long, default_value_t = 0.99)]
    gamma: f64,
    /// Hypervolume reference point, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    reference: Option<Vec<f64>>,
    /// Front file whose returns serve as the reference for mul.
    #[arg(long)]
    reference_front: Option<PathBuf>,
    /// Also write the report to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PlotArgs {
    /// Front files to overlay.
    #[arg(required = true)]
    fronts: Vec<PathBuf>,
    /// Output SVG file.
    #[arg(long)]
    out: PathBuf,
    /// Overlay the exact front of this environment.
    #[arg(long)]
    env: Option<String>,
    /// Overlay the returns of this front file as the oracle.
    #[arg(long, conflicts_with = "env")]
    oracle: Option<PathBuf>,
    /// Discount for the --env front.
    #[arg(long, default_value_t = 0.99)]
    gamma: f64,
}

/// Exit code for an error: 3 for training failures, 2 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Training(_) => EXIT_TRAINING,
        _ => EXIT_USAGE,
    }
}

/// Runs the command line with explicit arguments and environment, printing
/// errors to stderr. Returns the process exit code.
pub fn run<I, T>(args: I, vars: Vec<(String, String)>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Train(a) => cmd_train(a, vars),
        Command::Eval(a) => cmd_eval(a, vars),
        Command::Metrics(a) => cmd_metrics(a),
        Command::Plot(a) => cmd_plot(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Entry point for the binary.
pub fn main() -> i32 {
    run(std::env::args_os(), std::env::vars().collect())
}

fn sets(o: &Overrides, flags: Vec<(String, String)>) -> Result<Vec<(String, String)>> {
    let mut v = o.set.iter().map(|s| parse_assignment(s)).collect::<Result<Vec<_>>>()?;
    v.extend(flags);
    Ok(v)
}

fn flag<T: ToString>(v: &mut Vec<(String, String)>, key: &str, x: &Option<T>) {
    if let Some(x) = x {
        v.push((key.to_string(), x.to_string()));
    }
}

/// Writes through a temporary file in the same directory, then renames.
fn write_atomic(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    let tmp = path.with_extension("partial");
    std::fs::write(&tmp, &buf)
        .and_then(|_| std::fs::rename(&tmp, path))
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Summary written next to the outputs of every training run.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub version: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub started_at: String,
    pub finished_at: String,
    /// The resolved configuration; authoritative for later `eval` calls.
    pub config: RunConfig,
    #[serde(rename = "final")]
    pub final_metrics: Option<FinalMetrics>,
}

#[derive(Debug, Serialize)]
pub struct FinalMetrics {
    pub iterations: u64,
    pub env_steps: u64,
    pub mean_scalarized_return: f64,
    pub entropy: f64,
    pub lambda: f64,
    pub beta_c: f64,
    pub discards: usize,
    pub resets: usize,
}

fn cmd_train(a: TrainArgs, vars: Vec<(String, String)>) -> Result<()> {
    let mut f = Vec::new();
    flag(&mut f, "env", &a.env);
    flag(&mut f, "algo", &a.algo);
    flag(&mut f, "arch.kind", &a.arch);
    flag(&mut f, "arch.shared_trunk", &a.shared_trunk);
    flag(&mut f, "train.total_steps", &a.steps);
    flag(&mut f, "seed", &a.seed);
    flag(&mut f, "out_dir", &a.out_dir.as_ref().map(|p| p.display()));
    let sources = ConfigSources {
        base: None,
        file: a.overrides.config.clone(),
        vars,
        sets: sets(&a.overrides, f)?,
    };
    let cfg = sources.resolve()?;
    cfg.validate()?;
    let env = make_env(cfg.env_id()?, &cfg.envs)?;
    let resume = a.resume.as_deref().map(Checkpoint::load).transpose()?;
    let out = cfg.out_dir.clone();
    create_dir(&out.join("checkpoints"))?;
    let started_at = now();

    let rows = RefCell::new(Vec::<MetricsRow>::new());
    let every = a.progress;
    let mut trainer = Trainer::new(cfg.algo, env.as_ref(), cfg.arch.resolve(), cfg.train.clone(), cfg.seed)
        .entropy(cfg.entropy.clone())
        .on_iteration(|r| {
            if every > 0 && r.iteration % every == 0 {
                eprintln!(
                    "iter {:>6}  steps {:>9}  return {:>10.4}  entropy {:.4}  lambda {:.4}",
                    r.iteration, r.env_steps, r.mean_scalarized_return, r.entropy, r.lambda
                );
            }
            rows.borrow_mut().push(r.clone());
        })
        .on_checkpoint(|it, ck| Ok(ck.save(&out.join("checkpoints").join(format!("iter-{it:06}.bin")))?));
    if let Some(ck) = resume {
        trainer = trainer.resume(ck);
    }
    let result = trainer.run();

    let log = MetricsLog { rows: rows.into_inner() };
    write_atomic(&out.join("metrics.csv"), |w| log.write_csv(w))?;
    let (status, error, final_metrics) = match &result {
        Ok(o) => {
            o.checkpoint.save(&out.join("checkpoint.bin"))?;
            let last = log.rows.last();
            let fm = FinalMetrics {
                iterations: last.map_or(0, |r| r.iteration + 1),
                env_steps: last.map_or(0, |r| r.env_steps),
                mean_scalarized_return: last.map_or(f64::NAN, |r| r.mean_scalarized_return),
                entropy: last.map_or(f64::NAN, |r| r.entropy),
                lambda: last.map_or(f64::NAN, |r| r.lambda),
                beta_c: last.map_or(f64::NAN, |r| r.beta_c),
                discards: o.report.discards,
                resets: o.report.resets,
            };
            ("ok", None, Some(fm))
        }
        Err(e) => ("failed", Some(e.to_string()), None),
    };
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        status: status.into(),
        error,
        started_at,
        finished_at: now(),
        config: cfg,
        final_metrics,
    };
    write_atomic(&out.join("manifest.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, &manifest).map_err(|e| Error::Config(e.to_string()))?;
        w.push(b'\n');
        Ok(())
    })?;
    result?;
    println!("wrote {}", out.display());
    Ok(())
}

/// `metric,value` report.
fn write_report(w: &mut Vec<u8>, rows: &[(String, f64)]) -> Result<()> {
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    let err = |e: csv::Error| Error::Csv(e.to_string());
    out.write_record(["metric", "value"]).map_err(err)?;
    for (k, v) in rows {
        out.write_record([k.as_str(), &format!("{v:?}")]).map_err(err)?;
    }
    out.flush().map_err(|e| Error::io("metrics report", e))
}

fn read_front(path: &Path) -> Result<FrontTable> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    read_front_csv(f).map_err(|e| Error::Csv(format!("{}: {e}", path.display())))
}

/// hv, eu and (when a reference front is known) mul for one set of returns.
fn report_rows(ev: &Evaluation, reference: &[f64], reference_front: Option<&[Vec<f64>]>, suffix: &str) -> Result<Vec<(String, f64)>> {
    let mut rows = vec![(format!("hv{suffix}"), ParetoFront::from_points(&ev.returns).hypervolume(reference)?)];
    if !ev.alphas.is_empty() {
        rows.push((format!("eu{suffix}"), ev.expected_utility()));
        if let Some(front) = reference_front.filter(|f| !f.is_empty()) {
            rows.push((format!("mul{suffix}"), ev.max_utility_loss(front)?));
        }
    }
    Ok(rows)
}

fn print_report(rows: &[(String, f64)]) -> Result<()> {
    let mut buf = Vec::new();
    write_report(&mut buf, rows)?;
    std::io::stdout().write_all(&buf).map_err(|e| Error::io("stdout", e))
}

fn cmd_eval(a: EvalArgs, vars: Vec<(String, String)>) -> Result<()> {
    let base = match &a.run {
        Some(run) => Some(table_from_manifest(&run.join("manifest.json"))?),
        None if a.overrides.config.is_some() => None,
        None => return Err(Error::Config("eval needs --run DIR or --config FILE".into())),
    };
    let mut f = Vec::new();
    flag(&mut f, "env", &a.env);
    flag(&mut f, "eval.grid_size", &a.grid_size);
    flag(&mut f, "eval.samples", &a.samples);
    flag(&mut f, "eval.episodes", &a.episodes);
    flag(&mut f, "eval.gamma", &a.gamma);
    flag(&mut f, "eval.seed", &a.eval_seed);
    let sources = ConfigSources {
        base,
        file: a.overrides.config.clone(),
        vars,
        sets: sets(&a.overrides, f)?,
    };
    let cfg = sources.resolve()?;
    cfg.validate()?;
    let ck_path = match (&a.checkpoint, &a.run) {
        (Some(p), _) => p.clone(),
        (None, Some(run)) => run.join("checkpoint.bin"),
        (None, None) => return Err(Error::Config("eval needs --checkpoint when --run is not given".into())),
    };
    let out = match (&a.out_dir, &a.run) {
        (Some(d), _) => d.clone(),
        (None, Some(run)) => run.join("eval"),
        (None, None) => cfg.out_dir.join("eval"),
    };

    let env = make_env(cfg.env_id()?, &cfg.envs)?;
    let ck = Checkpoint::load(&ck_path)?;
    let (net, params, popart) = load_model(&cfg.arch.resolve(), env.spec(), &ck)
        .map_err(|e| Error::Config(format!("checkpoint {} does not fit this env/arch: {e}", ck_path.display())))?;
    let model = Model {
        net: &net,
        params: &params,
        popart: &popart,
    };
    let ev = evaluate_policy(&model, env.as_ref(), &cfg.eval)?;
    let gamma = cfg.eval.gamma;
    let file_front = a.reference_front.as_deref().map(read_front).transpose()?.map(|t| t.returns);
    let front_at = |g: f64| file_front.clone().or_else(|| true_pareto_front(env.as_ref(), g).ok());

    let mut rows = report_rows(&ev, &reference_point(env.as_ref(), gamma)?, front_at(gamma).as_deref(), "")?;
    // A reference front file is assumed discounted, so it only scores the γ view.
    let raw_front = if file_front.is_some() { None } else { front_at(1.0) };
    rows.extend(report_rows(&ev.undiscounted_view(), &reference_point(env.as_ref(), 1.0)?, raw_front.as_deref(), "_undiscounted")?);

    create_dir(&out)?;
    write_atomic(&out.join("front.csv"), |w| ev.write_csv(w))?;
    write_atomic(&out.join("front_undiscounted.csv"), |w| ev.undiscounted_view().write_csv(w))?;
    write_atomic(&out.join("metrics.csv"), |w| write_report(w, &rows))?;
    print_report(&rows)
}

fn cmd_metrics(a: MetricsArgs) -> Result<()> {
    let table = read_front(&a.front)?;
    let env = match &a.env {
        Some(id) => {
            let envs = match &a.config {
                Some(p) => ConfigSources {
                    file: Some(p.clone()),
                    ..Default::default()
                }
                .resolve()?
                .envs,
                None => Default::default(),
            };
            Some(make_env(id, &envs)?)
        }
        None => None,
    };
    let reference = match (&a.reference, &env) {
        (Some(r), _) => r.clone(),
        (None, Some(env)) => reference_point(env.as_ref(), a.gamma)?,
        (None, None) => return Err(Error::Config("metrics needs --reference or --env to fix the reference point".into())),
    };
    if reference.len() != table.k {
        return Err(Error::DimensionMismatch {
            expected: table.k,
            got: reference.len(),
        });
    }
    let reference_front = match (&a.reference_front, &env) {
        (Some(p), _) => Some(read_front(p)?.returns),
        (None, Some(env)) => true_pareto_front(env.as_ref(), a.gamma).ok(),
        (None, None) => None,
    };
    if reference_front.is_none() {
        eprintln!("note: no reference front, so mul is not reported");
    }
    let ev = Evaluation {
        undiscounted: table.returns.clone(),
        alphas: table.alphas,
        returns: table.returns,
    };
    let rows = report_rows(&ev, &reference, reference_front.as_deref(), "")?;
    if let Some(p) = &a.out {
        write_atomic(p, |w| write_report(w, &rows))?;
    }
    print_report(&rows)
}

fn cmd_plot(a: PlotArgs) -> Result<()> {
    let two = |path: &Path, t: &FrontTable| -> Result<Vec<[f64; 2]>> {
        if t.k != 2 {
            return Err(Error::Config(format!(
                "{}: plot draws two-objective fronts only, this one has {} objectives; use `dmorl metrics` instead",
                path.display(),
                t.k
            )));
        }
        Ok(t.returns.iter().map(|r| [r[0], r[1]]).collect())
    };
    let mut series = Vec::new();
    for p in &a.fronts {
        series.push(svg::Series {
            label: p.display().to_string(),
            points: two(p, &read_front(p)?)?,
        });
    }
    let oracle = match (&a.oracle, &a.env) {
        (Some(p), _) => Some(two(p, &read_front(p)?)?),
        (None, Some(id)) => {
            let env = make_env(id, &Default::default())?;
            let pts = true_pareto_front(env.as_ref(), a.gamma)?;
            if env.spec().num_objectives != 2 {
                return Err(Error::Config(format!("{id} has {} objectives; use `dmorl metrics` instead", env.spec().num_objectives)));
            }
            Some(pts.iter().map(|r| [r[0], r[1]]).collect())
        }
        (None, None) => None,
    };
    let doc = svg::render(&series, oracle.as_deref());
    write_atomic(&a.out, |w| {
        w.extend_from_slice(doc.as_bytes());
        Ok(())
    })
}
