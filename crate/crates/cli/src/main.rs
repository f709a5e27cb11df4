//! `infscale`: runs the simulation sweeps and writes CSV tables with a JSON
//! manifest next to each.

mod grid;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use infscale_core::experiments::{self, Experiment};
use infscale_core::gen_error::{EstimatorMode, DEFAULT_N_INNER, DEFAULT_N_OUTER};
use infscale_core::judge::{judge_sweep, JudgeDataset, SyntheticJudge};
use infscale_core::table::Table;
use infscale_core::{Error, ModelConfig, TeacherMode};

#[derive(Parser)]
#[command(
    name = "infscale",
    version,
    about = "Inference-time scaling in Bayesian linear regression"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Renormalized ridge, shrinkage scalars and the noise-variance check.
    Ridge(RunArgs),
    /// delta against k for a grid of c and T.
    SweepK(SweepK),
    /// delta against T at fixed k, with the predicted optimal temperature.
    SweepT(SweepT),
    /// Monotone / non-monotone labels of delta(k) over a polar reward grid (d = 2).
    PolarMap(PolarMap),
    /// delta against c at fixed k for a grid of T.
    SweepC(SweepC),
    /// delta over an (n, k) grid with the log-derivatives in n and k.
    Tradeoff(Tradeoff),
    /// k^2 delta at T = 0 against the best-of-k asymptote.
    BestofkCheck(BestofkCheck),
    /// Reward-weighted accuracy on judge-scored records.
    Judge(JudgeArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Mode {
    Exact,
    De,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum TUnit {
    /// Temperatures are absolute.
    Abs,
    /// Temperatures are multiples of sigma^2.
    Sigma2,
}

#[derive(Args, Clone, Debug)]
struct ModelArgs {
    /// TOML file with any of d, n, S, sigma, gamma, tau, teacher_mode.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input dimension.
    #[arg(long)]
    d: Option<usize>,
    /// Training set size (`1e4` accepted).
    #[arg(long, value_parser = parse_count)]
    n: Option<usize>,
    /// Input scale: x ~ N(0, S^2 I).
    #[arg(long = "S")]
    cov_scale: Option<f64>,
    /// Label noise standard deviation.
    #[arg(long)]
    sigma: Option<f64>,
    /// Prior standard deviation of the student weights.
    #[arg(long)]
    gamma: Option<f64>,
    /// Teacher entries ~ N(0, tau^2).
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, value_parser = ["sampled", "normalized"])]
    teacher_mode: Option<String>,
}

#[derive(Args, Clone, Debug)]
struct RunArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Master seed; every random stream derives from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path, or `-` for stdout. Defaults to `<out-dir>/<subcommand>.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = "INFSCALE_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
    /// Test inputs per teacher.
    #[arg(long, default_value_t = DEFAULT_N_OUTER)]
    n_outer: usize,
    /// Batches of k draws per test input.
    #[arg(long, default_value_t = DEFAULT_N_INNER)]
    n_inner: usize,
    /// Exact posterior or deterministic-equivalent predictive.
    #[arg(long, value_enum, default_value_t = Mode::Exact)]
    mode: Mode,
    /// Independent teachers and datasets pooled per estimate.
    #[arg(long, default_value_t = 1)]
    replicates: u64,
    /// Worker threads (results do not depend on this).
    #[arg(long)]
    threads: Option<usize>,
    /// Unit of temperature grids.
    #[arg(long, value_enum, default_value_t = TUnit::Sigma2)]
    t_unit: TUnit,
}

#[derive(Args, Debug)]
struct SweepK {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, default_value = "1,2,3,5,10,20,50,100", value_parser = grid::parse_counts)]
    k_grid: std::vec::Vec<usize>,
    #[arg(long, default_value = "20", value_parser = grid::parse_floats)]
    t_grid: std::vec::Vec<f64>,
    #[arg(long, default_value = "-2,0,2", value_parser = grid::parse_floats)]
    c_grid: std::vec::Vec<f64>,
}

#[derive(Args, Debug)]
struct SweepT {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, default_value_t = 50)]
    k: usize,
    #[arg(long, default_value = "log:1:1000:30", value_parser = grid::parse_floats)]
    t_grid: std::vec::Vec<f64>,
    #[arg(long, default_value = "0,20,40", value_parser = grid::parse_floats)]
    c_grid: std::vec::Vec<f64>,
}

#[derive(Args, Debug)]
struct PolarMap {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, default_value = "10,20", value_parser = grid::parse_floats)]
    t_grid: std::vec::Vec<f64>,
    /// Reward offsets |w_R - w_T|, in units of sigma.
    #[arg(long, default_value = "lin:0.75:6:8", value_parser = grid::parse_floats)]
    c_grid: std::vec::Vec<f64>,
    /// Offset angles relative to the teacher direction, radians (`0.25pi` accepted).
    #[arg(long, default_value = "lin:0:1.75pi:8", value_parser = grid::parse_floats)]
    theta_grid: std::vec::Vec<f64>,
    #[arg(long, default_value = "1,2,3,5,8,13,20,32,50,100", value_parser = grid::parse_counts)]
    k_grid: std::vec::Vec<usize>,
    /// Combined standard errors an interior dip must clear.
    #[arg(long, default_value_t = infscale_core::stats::DEFAULT_GATE)]
    gate: f64,
}

#[derive(Args, Debug)]
struct SweepC {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, default_value_t = 50)]
    k: usize,
    #[arg(long, default_value = "20,100", value_parser = grid::parse_floats)]
    t_grid: std::vec::Vec<f64>,
    #[arg(long, default_value = "lin:-10:80:19", value_parser = grid::parse_floats)]
    c_grid: std::vec::Vec<f64>,
}

#[derive(Args, Debug)]
struct Tradeoff {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, default_value = "1e3,1e4,1e5", value_parser = grid::parse_counts)]
    n_grid: std::vec::Vec<usize>,
    #[arg(long, default_value = "0,20", value_parser = grid::parse_floats)]
    t_grid: std::vec::Vec<f64>,
    #[arg(long, default_value = "1,3,10,30,100,300,1000", value_parser = grid::parse_counts)]
    k_grid: std::vec::Vec<usize>,
}

#[derive(Args, Debug)]
struct BestofkCheck {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, default_value = "10,100,1000,10000", value_parser = grid::parse_counts)]
    k_grid: std::vec::Vec<usize>,
}

#[derive(Args, Debug)]
struct JudgeArgs {
    /// Newline-delimited JSON records with question_id, sample_id, reward, correct.
    /// Repeat to overlay several judges.
    #[arg(long = "input")]
    inputs: Vec<PathBuf>,
    /// Use the built-in synthetic judge instead of record files.
    #[arg(long, conflicts_with = "inputs")]
    synthetic: bool,
    #[arg(long, default_value_t = 300)]
    synthetic_questions: usize,
    #[arg(long, default_value_t = 64)]
    synthetic_samples: usize,
    #[arg(long, default_value = "1,2,4,8,16,32", value_parser = grid::parse_counts)]
    k_grid: std::vec::Vec<usize>,
    /// Absolute temperatures.
    #[arg(long, default_value = "0,0.1,0.3,1,3,10", value_parser = grid::parse_floats)]
    t_grid: std::vec::Vec<f64>,
    #[arg(long, default_value_t = 100)]
    n_resample: usize,
    /// Also report accuracy = -delta.
    #[arg(long)]
    accuracy: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = "INFSCALE_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
}

fn parse_count(s: &str) -> Result<usize, String> {
    match grid::parse_floats(s)?.as_slice() {
        [v] if *v >= 0.0 && v.fract() == 0.0 => Ok(*v as usize),
        _ => Err(format!("expected a nonnegative integer, got `{s}`")),
    }
}

enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<Error>() {
            Some(Error::InvalidConfig(_)) | Some(Error::Dimension { .. }) => {
                Failure::Usage(format!("{e:#}"))
            }
            _ => Failure::Runtime(e),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::from(anyhow::Error::from(e))
    }
}

type Outcome<T> = Result<T, Failure>;

fn resolve_model(args: &ModelArgs) -> Outcome<ModelConfig> {
    let mut m = match &args.config {
        Some(path) => ModelConfig::from_file(path)
            .with_context(|| format!("reading config {}", path.display()))?,
        None => ModelConfig::default(),
    };
    if let Some(v) = args.d {
        m.d = v;
    }
    if let Some(v) = args.n {
        m.n = v;
    }
    if let Some(v) = args.cov_scale {
        m.cov_scale = v;
    }
    if let Some(v) = args.sigma {
        m.sigma = v;
    }
    if let Some(v) = args.gamma {
        m.gamma = v;
    }
    if let Some(v) = args.tau {
        m.tau = v;
    }
    if let Some(v) = &args.teacher_mode {
        m.teacher_mode = v.parse::<TeacherMode>()?;
    }
    m.validate()?;
    Ok(m)
}

fn experiment(run: &RunArgs, model: ModelConfig) -> Experiment {
    Experiment {
        n_outer: run.n_outer,
        n_inner: run.n_inner,
        mode: match run.mode {
            Mode::Exact => EstimatorMode::ExactPosterior,
            Mode::De => EstimatorMode::DetEquiv,
        },
        replicates: run.replicates,
        ..Experiment::new(model, run.seed)
    }
}

fn temperatures(run: &RunArgs, model: &ModelConfig, grid: &[f64]) -> Outcome<Vec<f64>> {
    if grid.iter().any(|t| *t < 0.0) {
        return Err(Failure::Usage("temperatures must be >= 0".into()));
    }
    Ok(match run.t_unit {
        TUnit::Abs => grid.to_vec(),
        TUnit::Sigma2 => grid.iter().map(|t| t * model.sigma * model.sigma).collect(),
    })
}

fn output_path(out: &Option<PathBuf>, out_dir: &Path, name: &str) -> Option<PathBuf> {
    match out {
        Some(p) if p.as_os_str() == "-" => None,
        Some(p) => Some(p.clone()),
        None => Some(out_dir.join(format!("{name}.csv"))),
    }
}

fn manifest_path(csv: &Path) -> PathBuf {
    csv.with_extension("manifest.json")
}

struct Emit<'a> {
    name: &'a str,
    seed: u64,
    out: Option<PathBuf>,
    config: serde_json::Value,
    parameters: serde_json::Value,
    started: Instant,
}

fn emit(table: &Table, e: Emit<'_>) -> Outcome<()> {
    let bytes = table.to_csv_bytes()?;
    let Some(path) = e.out else {
        use std::io::Write;
        std::io::stdout()
            .write_all(&bytes)
            .context("writing stdout")?;
        return Ok(());
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(&path, &bytes).with_context(|| format!("writing {}", path.display()))?;
    let manifest = json!({
        "subcommand": e.name,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": e.seed,
        "output": path,
        "rows": table.len(),
        "columns": table.columns(),
        "config": e.config,
        "parameters": e.parameters,
        "threads": rayon::current_num_threads(),
        "wall_time_seconds": e.started.elapsed().as_secs_f64(),
    });
    let mpath = manifest_path(&path);
    let text = serde_json::to_string_pretty(&manifest).context("serializing manifest")?;
    std::fs::write(&mpath, text + "\n").with_context(|| format!("writing {}", mpath.display()))?;
    eprintln!(
        "wrote {} ({} rows) and {}",
        path.display(),
        table.len(),
        mpath.display()
    );
    Ok(())
}

fn init_threads(threads: Option<usize>) -> Outcome<()> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("starting thread pool")?;
    }
    Ok(())
}

fn run_sim(
    name: &str,
    run: &RunArgs,
    parameters: serde_json::Value,
    model: ModelConfig,
    table: impl FnOnce(&Experiment) -> infscale_core::Result<Table>,
) -> Outcome<()> {
    let started = Instant::now();
    let exp = experiment(run, model);
    let t = table(&exp)?;
    let mut params = json!({
        "n_outer": run.n_outer,
        "n_inner": run.n_inner,
        "mode": exp.mode,
        "replicates": run.replicates,
        "t_unit": run.t_unit,
    });
    if let (Some(p), Some(extra)) = (params.as_object_mut(), parameters.as_object()) {
        p.extend(extra.clone());
    }
    emit(
        &t,
        Emit {
            name,
            seed: run.seed,
            out: output_path(&run.out, &run.out_dir, name),
            config: serde_json::to_value(&exp.model).context("serializing config")?,
            parameters: params,
            started,
        },
    )
}

fn dispatch(cmd: Command) -> Outcome<()> {
    match cmd {
        Command::Ridge(run) => {
            init_threads(run.threads)?;
            let started = Instant::now();
            let model = resolve_model(&run.model)?;
            if model.n == 0 {
                return Err(Failure::Usage("ridge needs n > 0".into()));
            }
            let t = experiments::ridge_table(&model)?;
            emit(
                &t,
                Emit {
                    name: "ridge",
                    seed: run.seed,
                    out: output_path(&run.out, &run.out_dir, "ridge"),
                    config: serde_json::to_value(&model).context("serializing config")?,
                    parameters: json!({}),
                    started,
                },
            )
        }
        Command::SweepK(a) => {
            init_threads(a.run.threads)?;
            let model = resolve_model(&a.run.model)?;
            let temps = temperatures(&a.run, &model, &a.t_grid)?;
            let params = json!({"k_grid": a.k_grid, "t_grid": a.t_grid, "c_grid": a.c_grid});
            run_sim("sweep_k", &a.run, params, model, |e| {
                experiments::sweep_k(e, &a.c_grid, &temps, &a.k_grid)
            })
        }
        Command::SweepT(a) => {
            init_threads(a.run.threads)?;
            let model = resolve_model(&a.run.model)?;
            let temps = temperatures(&a.run, &model, &a.t_grid)?;
            if temps.contains(&0.0) {
                return Err(Failure::Usage("sweep-t needs temperatures > 0".into()));
            }
            let params = json!({"k": a.k, "t_grid": a.t_grid, "c_grid": a.c_grid});
            run_sim("sweep_t", &a.run, params, model, |e| {
                experiments::sweep_t(e, a.k, &a.c_grid, &temps)
            })
        }
        Command::PolarMap(a) => {
            init_threads(a.run.threads)?;
            let mut model = resolve_model(&a.run.model)?;
            match a.run.model.d {
                Some(2) | None => model.d = 2,
                Some(d) => return Err(Failure::Usage(format!("polar-map needs d = 2, got {d}"))),
            }
            let temps = temperatures(&a.run, &model, &a.t_grid)?;
            let cs: Vec<f64> = a.c_grid.iter().map(|c| c * model.sigma).collect();
            let params = json!({
                "t_grid": a.t_grid, "c_grid_sigma": a.c_grid, "theta_grid": a.theta_grid,
                "k_grid": a.k_grid, "gate": a.gate,
            });
            run_sim("polar_map", &a.run, params, model, |e| {
                experiments::polar_map(e, &temps, &cs, &a.theta_grid, &a.k_grid, a.gate)
            })
        }
        Command::SweepC(a) => {
            init_threads(a.run.threads)?;
            let model = resolve_model(&a.run.model)?;
            let temps = temperatures(&a.run, &model, &a.t_grid)?;
            let params = json!({"k": a.k, "t_grid": a.t_grid, "c_grid": a.c_grid});
            run_sim("sweep_c", &a.run, params, model, |e| {
                experiments::sweep_c(e, a.k, &temps, &a.c_grid)
            })
        }
        Command::Tradeoff(a) => {
            init_threads(a.run.threads)?;
            let model = resolve_model(&a.run.model)?;
            if a.n_grid.contains(&0) {
                return Err(Failure::Usage("tradeoff needs n > 0".into()));
            }
            let temps = temperatures(&a.run, &model, &a.t_grid)?;
            let params = json!({"n_grid": a.n_grid, "t_grid": a.t_grid, "k_grid": a.k_grid});
            run_sim("tradeoff", &a.run, params, model, |e| {
                experiments::tradeoff(e, &a.n_grid, &temps, &a.k_grid)
            })
        }
        Command::BestofkCheck(a) => {
            init_threads(a.run.threads)?;
            let model = resolve_model(&a.run.model)?;
            let params = json!({"k_grid": a.k_grid});
            run_sim("bestofk_check", &a.run, params, model, |e| {
                experiments::bestofk_check(e, &a.k_grid)
            })
        }
        Command::Judge(a) => judge(a),
    }
}

fn judge(a: JudgeArgs) -> Outcome<()> {
    init_threads(a.threads)?;
    let started = Instant::now();
    if a.inputs.is_empty() && !a.synthetic {
        return Err(Failure::Usage(
            "judge needs --input <file> or --synthetic".into(),
        ));
    }
    if a.t_grid.iter().any(|t| *t < 0.0) {
        return Err(Failure::Usage("temperatures must be >= 0".into()));
    }
    let mut sources: Vec<(String, JudgeDataset)> = Vec::new();
    if a.synthetic {
        let ds = SyntheticJudge::default().dataset(
            a.synthetic_questions,
            a.synthetic_samples,
            a.seed,
        )?;
        sources.push(("synthetic".into(), ds));
    }
    for path in &a.inputs {
        let ds = JudgeDataset::load(path).with_context(|| format!("loading {}", path.display()))?;
        sources.push((path.display().to_string(), ds));
    }
    let mut table: Option<Table> = None;
    for (label, ds) in &sources {
        let rows = judge_sweep(ds, &a.k_grid, &a.t_grid, a.n_resample, a.seed)
            .with_context(|| format!("evaluating {label}"))?;
        let mut t = experiments::judge_table(&rows, a.accuracy)?;
        if sources.len() > 1 {
            t = with_source(&t, label)?;
        }
        match &mut table {
            Some(acc) => acc.append(t)?,
            None => table = Some(t),
        }
    }
    let table = table.expect("at least one source");
    emit(
        &table,
        Emit {
            name: "judge",
            seed: a.seed,
            out: output_path(&a.out, &a.out_dir, "judge"),
            config: json!({
                "sources": sources.iter().map(|(l, ds)| json!({"source": l, "questions": ds.questions.len()})).collect::<Vec<_>>(),
            }),
            parameters: json!({
                "k_grid": a.k_grid, "t_grid": a.t_grid, "n_resample": a.n_resample, "accuracy": a.accuracy,
            }),
            started,
        },
    )
}

fn with_source(t: &Table, label: &str) -> Outcome<Table> {
    let mut cols: Vec<String> = t.columns().to_vec();
    cols.push("source".into());
    let mut out = Table::new(&cols);
    for row in t.rows() {
        let mut r = row.clone();
        r.push(label.into());
        out.push(r)?;
    }
    Ok(out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
