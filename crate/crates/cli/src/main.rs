use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use xcet_heom::bath::expand;
use xcet_heom::hierarchy::{projected_count, TruncationPolicy};
use xcet_heom::propagator::{equilibration_time, steady_diagnostics, write_csv, Trajectory};
use xcet_heom::scenarios::{builtin_by_name, load_config, ScenarioConfig};
use xcet_heom::validate::{self, reconstruction_error, reconstruction_grid, CheckReport};
use xcet_heom::Error;

const VERSION: &str = concat!("xcet ", env!("CARGO_PKG_VERSION"));
const MANIFEST: &str = "manifest.jsonl";

/// Exciton-coupled electron transfer dynamics from the hierarchical
/// equations of motion.
#[derive(Parser)]
#[command(name = "xcet", version = env!("CARGO_PKG_VERSION"))]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Propagate one scenario and write its population CSV.
    Run(RunArgs),
    /// Run a scenario once per value of one numeric parameter.
    Sweep(SweepArgs),
    /// Check the solver against independent references.
    Validate(ValidateArgs),
    /// Print the exponential decomposition of every bath.
    Decompose(ScenarioArgs),
    /// Print hierarchy size and memory estimate without propagating.
    Info(ScenarioArgs),
    /// Builtin scenario helpers.
    Scenario {
        #[command(subcommand)]
        action: ScenarioAction,
    },
}

#[derive(Subcommand)]
enum ScenarioAction {
    /// Print a builtin scenario as JSON.
    Dump {
        #[arg(long)]
        builtin: String,
        #[arg(long)]
        regime: String,
    },
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    /// Builtin model: up_and_down or downhill.
    #[arg(long, conflicts_with = "config", requires = "regime")]
    builtin: Option<String>,
    /// XCET regime a, b, c or d.
    #[arg(long, requires = "builtin")]
    regime: Option<String>,
    /// Scenario JSON file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replace the truncation by TotalDepth with this depth.
    #[arg(long)]
    depth: Option<usize>,
    /// Time step in 1/ω₀.
    #[arg(long)]
    dt: Option<f64>,
    /// Final time in 1/ω₀.
    #[arg(long)]
    tmax: Option<f64>,
    /// Write a CSV row every this many steps.
    #[arg(long)]
    record_every: Option<usize>,
}

#[derive(Args)]
struct OutputArgs {
    /// Output directory; created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Worker threads; results do not depend on it.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// File stem for outputs (default: derived from the scenario).
    #[arg(long)]
    name: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    output: OutputArgs,
    /// Also run at one depth lower and record the largest population
    /// difference in the manifest (TotalDepth only).
    #[arg(long)]
    check_depth: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    output: OutputArgs,
    /// Numeric config path, e.g. baths[6].lambda.
    #[arg(long)]
    param: String,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Suites to run (default: all).
    suites: Vec<String>,
}

/// Failure classes with stable exit statuses.
enum Failure {
    Config(String),
    Numerical(String),
    Other(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Numerical { .. } => Failure::Numerical(e.to_string()),
            Error::Bath(_) => Failure::Config(e.to_string()),
            e if e.is_config() => Failure::Config(e.to_string()),
            e => Failure::Other(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Validate(args) => cmd_validate(args),
        Command::Decompose(args) => cmd_decompose(args),
        Command::Info(args) => cmd_info(args),
        Command::Scenario { action: ScenarioAction::Dump { builtin, regime } } => {
            builtin_by_name(&builtin, &regime).map(|c| println!("{}", c.to_json())).map_err(Failure::from)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("{m}");
            ExitCode::from(3)
        }
        Err(Failure::Other(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

impl ScenarioArgs {
    /// The scenario with every flag applied on top; this merged config is
    /// what runs and what the manifest records.
    fn resolve(&self) -> Result<(ScenarioConfig, String), Failure> {
        let (mut config, stem) = match (&self.builtin, &self.regime, &self.config) {
            (Some(model), Some(regime), None) => (builtin_by_name(model, regime)?, format!("{model}_{regime}")),
            (None, None, Some(path)) => {
                let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
                (load_config(path).map_err(|e| in_file(e, path))?, stem)
            }
            _ => return Err(Failure::Config("give either --config or --builtin with --regime".into())),
        };
        if let Some(depth) = self.depth {
            config.truncation = TruncationPolicy::TotalDepth { depth };
        }
        if let Some(dt) = self.dt {
            config.run.dt = dt;
        }
        if let Some(t) = self.tmax {
            config.run.t_max = t;
        }
        if let Some(r) = self.record_every {
            config.run.record_every = r;
        }
        config.validate()?;
        Ok((config, stem))
    }
}

fn in_file(e: Error, path: &Path) -> Failure {
    match Failure::from(e) {
        Failure::Config(m) => Failure::Config(format!("{}: {m}", path.display())),
        f => f,
    }
}

fn unix_seconds() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn append_manifest(dir: &Path, record: &Value) -> Result<(), Failure> {
    let mut file = OpenOptions::new().create(true).append(true).open(dir.join(MANIFEST))?;
    writeln!(file, "{}", serde_json::to_string(record).expect("manifest serializes"))?;
    Ok(())
}

fn write_trajectory(path: &Path, traj: &Trajectory, labels: &[String]) -> Result<(), Failure> {
    let mut out = BufWriter::new(File::create(path)?);
    write_csv(traj, labels, &mut out)?;
    out.flush()?;
    Ok(())
}

/// Runs `config`, reporting progress on stderr. A numerical abort still
/// yields the samples recorded before it.
fn propagate(config: &ScenarioConfig, threads: usize, tag: &str) -> Result<(Trajectory, Option<Error>, usize), Failure> {
    let sim = config.build()?;
    let n_ados = sim.operator.n_ados();
    eprintln!("{tag}: {n_ados} ADOs, {} steps", config.propagation_options(threads).n_steps());
    let started = Instant::now();
    let mut next = 0.0;
    let (traj, abort) = sim.run_partial(threads, |step, total| {
        let fraction = if total == 0 { 1.0 } else { step as f64 / total as f64 };
        if fraction >= next {
            eprintln!("{tag}: {:5.1}% after {:.1} s", 100.0 * fraction, started.elapsed().as_secs_f64());
            next = fraction + 0.1;
        }
    })?;
    Ok((traj, abort, n_ados))
}

fn max_population_delta(a: &Trajectory, b: &Trajectory) -> f64 {
    a.populations
        .iter()
        .zip(&b.populations)
        .flat_map(|(p, q)| p.iter().zip(q).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let (config, stem) = args.scenario.resolve()?;
    let stem = args.output.name.clone().unwrap_or(stem);
    fs::create_dir_all(&args.output.out)?;
    let labels = config.site_labels();
    let started = Instant::now();
    let (traj, abort, n_ados) = propagate(&config, args.output.threads, &stem)?;
    let csv = args.output.out.join(format!("{stem}.csv"));
    write_trajectory(&csv, &traj, &labels)?;

    let mut convergence = Value::Null;
    if args.check_depth && abort.is_none() {
        let TruncationPolicy::TotalDepth { depth } = config.truncation else {
            return Err(Failure::Config("--check-depth needs a total_depth truncation".into()));
        };
        if depth == 0 {
            return Err(Failure::Config("--check-depth needs depth >= 1".into()));
        }
        let mut lower = config.clone();
        lower.truncation = TruncationPolicy::TotalDepth { depth: depth - 1 };
        let (low, low_abort, _) = propagate(&lower, args.output.threads, &format!("{stem} depth {}", depth - 1))?;
        convergence = json!({
            "depths": [depth - 1, depth],
            "max_population_delta": low_abort.is_none().then(|| max_population_delta(&traj, &low)),
            "lower_depth_abort": low_abort.map(|e| e.to_string()),
        });
    }

    append_manifest(
        &args.output.out,
        &json!({
            "command": "run",
            "version": VERSION,
            "created_unix": unix_seconds(),
            "wall_seconds": started.elapsed().as_secs_f64(),
            "threads": args.output.threads,
            "config": config,
            "truncation": config.truncation,
            "n_ados": n_ados,
            "outputs": [csv.display().to_string()],
            "status": if abort.is_some() { "aborted" } else { "ok" },
            "abort": abort.as_ref().map(|e| e.to_string()),
            "samples": traj.len(),
            "max_trace_error": traj.max_trace_error(),
            "max_hermiticity_defect": traj.max_hermiticity_defect(),
            "convergence": convergence,
        }),
    )?;
    match abort {
        Some(e) => Err(e.into()),
        None => {
            eprintln!("{stem}: wrote {}", csv.display());
            Ok(())
        }
    }
}

/// Values reported per sweep point; the averaging window is the final 20 %
/// of the run.
struct SweepSummary {
    final_last_site: f64,
    window_mean: f64,
    equilibration: Option<f64>,
}

fn summarize(traj: &Trajectory, config: &ScenarioConfig) -> Result<SweepSummary, Failure> {
    let t_end = *traj.times.last().expect("trajectory has samples");
    let watch = config.system.n_xt - 1;
    // the window reaches back at least one sample
    let start = match traj.times.len() {
        0 | 1 => return Err(Failure::Other("a sweep run needs at least two samples".into())),
        n => (0.8 * t_end).min(traj.times[n - 2]),
    };
    let steady = steady_diagnostics(traj, (start, t_end))?;
    let window_mean = steady.means[watch];
    Ok(SweepSummary {
        final_last_site: *traj.populations.last().expect("samples").last().expect("sites"),
        window_mean,
        equilibration: equilibration_time(&traj.times, &traj.population(watch), window_mean),
    })
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Failure> {
    let (base, stem) = args.scenario.resolve()?;
    let stem = args.output.name.clone().unwrap_or(stem);
    // check every value before spending time on any run
    let configs: Vec<ScenarioConfig> =
        args.values.iter().map(|&v| base.with_param(&args.param, v)).collect::<Result<_, _>>()?;
    fs::create_dir_all(&args.output.out)?;
    let labels = base.site_labels();
    let last = labels.last().expect("at least one site").clone();
    let watch = labels[base.system.n_xt - 1].clone();
    let mut rows = vec![format!(
        "value,status,final_P_{last},mean_P_{watch},t_eq_{watch},t_eq_{watch}_ps,csv"
    )];
    let mut outputs = Vec::new();
    let mut first_abort = None;
    let started = Instant::now();
    for (i, (config, value)) in configs.iter().zip(&args.values).enumerate() {
        let tag = format!("{stem} {}={value}", args.param);
        let point_started = Instant::now();
        let (traj, abort, n_ados) = propagate(config, args.output.threads, &tag)?;
        let csv = args.output.out.join(format!("{stem}_sweep{i}.csv"));
        write_trajectory(&csv, &traj, &labels)?;
        outputs.push(csv.display().to_string());
        let status = if abort.is_some() { "aborted" } else { "ok" };
        let row = if abort.is_none() {
            let s = summarize(&traj, config)?;
            format!(
                "{value},{status},{},{},{},{},{}",
                s.final_last_site,
                s.window_mean,
                fmt_opt(s.equilibration),
                fmt_opt(s.equilibration.map(|t| t * config.ps_per_time_unit())),
                csv.display()
            )
        } else {
            format!("{value},{status},,,,,{}", csv.display())
        };
        rows.push(row);
        append_manifest(
            &args.output.out,
            &json!({
                "command": "sweep",
                "version": VERSION,
                "created_unix": unix_seconds(),
                "wall_seconds": point_started.elapsed().as_secs_f64(),
                "threads": args.output.threads,
                "param": args.param,
                "value": value,
                "config": config,
                "truncation": config.truncation,
                "n_ados": n_ados,
                "outputs": [csv.display().to_string()],
                "status": status,
                "abort": abort.as_ref().map(|e| e.to_string()),
                "samples": traj.len(),
                "max_trace_error": traj.max_trace_error(),
                "max_hermiticity_defect": traj.max_hermiticity_defect(),
                "convergence": Value::Null,
            }),
        )?;
        if let Some(e) = abort {
            eprintln!("{tag}: {e}");
            first_abort.get_or_insert(e);
        }
    }
    let summary = args.output.out.join(format!("{stem}_summary.csv"));
    fs::write(&summary, rows.join("\n") + "\n")?;
    append_manifest(
        &args.output.out,
        &json!({
            "command": "sweep-summary",
            "version": VERSION,
            "created_unix": unix_seconds(),
            "wall_seconds": started.elapsed().as_secs_f64(),
            "param": args.param,
            "values": args.values,
            "outputs": [summary.display().to_string()],
            "sweep_outputs": outputs,
        }),
    )?;
    eprintln!("{stem}: wrote {}", summary.display());
    match first_abort {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn cmd_validate(args: ValidateArgs) -> Result<(), Failure> {
    let suites: Vec<String> =
        if args.suites.is_empty() { validate::SUITES.iter().map(|s| s.to_string()).collect() } else { args.suites };
    let mut reports: Vec<CheckReport> = Vec::new();
    for suite in &suites {
        for report in validate::run_suite(suite)? {
            eprintln!("{report}");
            reports.push(report);
        }
    }
    let all = reports.iter().all(|r| r.passed);
    println!("{}", serde_json::to_string_pretty(&json!({ "passed": all, "checks": reports })).expect("serializes"));
    if all {
        Ok(())
    } else {
        Err(Failure::Other(format!("{} of {} checks failed", reports.iter().filter(|r| !r.passed).count(), reports.len())))
    }
}

fn cmd_decompose(args: ScenarioArgs) -> Result<(), Failure> {
    let (config, _) = args.resolve()?;
    let grid = reconstruction_grid();
    let mut baths = Vec::new();
    for k in 0..config.baths.len() {
        let spec = config.bath_spec(k);
        let series = expand(&spec).map_err(|e| Failure::from(e.prefixed(&format!("baths[{k}]"))))?;
        let terms: Vec<Value> = series
            .terms
            .iter()
            .map(|t| {
                json!({
                    "c_real": [t.c_real.re, t.c_real.im],
                    "c_imag": [t.c_imag.re, t.c_imag.im],
                    "rate": [t.rate.re, t.rate.im],
                })
            })
            .collect();
        let error = if series.is_zero() { Some(0.0) } else { Some(reconstruction_error(&spec, &grid)?) };
        baths.push(json!({
            "bath": k,
            "spec": spec,
            "coupling": config.baths[k].coupling,
            "terms": terms,
            "delta": series.delta,
            "reconstruction_l2_error": error,
        }));
    }
    println!("{}", serde_json::to_string_pretty(&json!({ "beta": config.beta, "baths": baths })).expect("serializes"));
    Ok(())
}

fn cmd_info(args: ScenarioArgs) -> Result<(), Failure> {
    let (config, _) = args.resolve()?;
    let (fields, policy) = config.hierarchy_shape()?;
    let count = projected_count(&fields, &policy);
    let d2 = (config.system.n_total * config.system.n_total) as u128;
    let n_fields: usize = fields.iter().sum();
    // seven state-sized buffers during a step, 16 bytes per complex entry
    let state_bytes = count.saturating_mul(d2).saturating_mul(16 * 7);
    let index_bytes = count.saturating_mul((9 * n_fields + 40) as u128);
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "n_fields": n_fields,
            "fields_per_bath": fields,
            "policy": config.truncation,
            "n_ados": count.to_string(),
            "within_budget": count <= config.run.max_ados as u128,
            "max_ados": config.run.max_ados,
            "memory_estimate_bytes": state_bytes.saturating_add(index_bytes).to_string(),
        }))
        .expect("serializes")
    );
    Ok(())
}
