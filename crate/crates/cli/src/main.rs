//! `lnpbm` command-line front end.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 model
//! validation failure, 4 capacity exceeded. Errors are printed to standard
//! error as one JSON object.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use lnpbm::inference::{free_energy, run, Algorithm, ChannelNet, Init, RunConfig, Schedule};
use lnpbm::io::Meta;
use lnpbm::kernels::KernelSpec;
use lnpbm::model::{BoltzmannMachine, Observation, PairwiseParams, State};
use lnpbm::reconstruct::{reconstruct, ReconstructConfig};
use lnpbm::stability::{
    ensemble, field_export, find_fixed_points, write_field_csv, EnsembleOptions, EnsembleStart, FixedPointOptions,
};
use lnpbm::trajectory_stats::{summarize, DEFAULT_MOVING_WINDOW, DEFAULT_TERMINAL_WINDOW};
use lnpbm::transforms::{apply_chain, dale_split, EventSplitOptions, TransformOp, Transformed};
use lnpbm::{Error, LnpNetwork};

#[derive(Parser)]
#[command(name = "lnpbm", version, about = "Inference on softmax Boltzmann machines and LNP spiking networks")]
struct Cli {
    /// Suppress progress messages on standard output.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run Gibbs, variational or semi-stochastic inference.
    Infer(InferArgs),
    /// Apply network rewrites and write the resulting network and records.
    Transform(TransformArgs),
    /// Fixed points, stochastic ensembles, or vector-field export.
    Stability(StabilityArgs),
    /// Up-and-down reconstruction through a layered model.
    Reconstruct(ReconstructArgs),
    /// Exact posterior marginals by enumeration.
    Oracle(OracleArgs),
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum AlgorithmArg {
    Gibbs,
    Var,
    Ssi,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::Gibbs => Algorithm::Gibbs,
            AlgorithmArg::Var => Algorithm::Variational,
            AlgorithmArg::Ssi => Algorithm::Ssi,
        }
    }
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ScheduleArg {
    SeqCyclic,
    SeqRandom,
    Parallel,
}

impl From<ScheduleArg> for Schedule {
    fn from(s: ScheduleArg) -> Self {
        match s {
            ScheduleArg::SeqCyclic => Schedule::SequentialCyclic,
            ScheduleArg::SeqRandom => Schedule::SequentialRandomScan,
            ScheduleArg::Parallel => Schedule::ParallelSynchronized,
        }
    }
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum InitArg {
    UniformRandom,
    ConstantHalf,
}

#[derive(Args)]
struct InferArgs {
    /// Model, pairwise-parameter, or network JSON file.
    model: PathBuf,
    #[arg(long, value_enum)]
    algorithm: AlgorithmArg,
    #[arg(long, value_enum, default_value = "parallel")]
    schedule: ScheduleArg,
    #[arg(long)]
    steps: usize,
    #[arg(long)]
    seed: u64,
    /// Kernel spec as inline JSON or a path to a JSON file.
    #[arg(long)]
    kernel: Option<String>,
    /// JSON object mapping visible unit ids to "A" or "B".
    #[arg(long)]
    observe: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "uniform-random")]
    init: InitArg,
    /// SSI only: fold expectations instead of samples.
    #[arg(long)]
    deterministic: bool,
    #[arg(long, default_value_t = DEFAULT_MOVING_WINDOW)]
    window: usize,
    #[arg(long, default_value_t = DEFAULT_TERMINAL_WINDOW)]
    terminal_window: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TransformArgs {
    model: PathBuf,
    /// Comma-separated list of remove-bias, event-split, dale-split.
    #[arg(long, value_delimiter = ',', default_value = "")]
    ops: Vec<String>,
    /// Carry biases into the external input at event-split.
    #[arg(long)]
    bias_to_input: bool,
    #[arg(long, default_value_t = 1.0)]
    a: f64,
    #[arg(long, default_value_t = 1.0)]
    eps_step: f64,
    /// Trace kernel attached to the output network (inline JSON or path).
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("mode").required(true).args(["fixed_points", "ensemble", "field"])))]
struct StabilityArgs {
    /// Network JSON file.
    net: PathBuf,
    #[arg(long)]
    fixed_points: bool,
    /// Number of trials and steps per trial.
    #[arg(long, num_args = 2, value_names = ["TRIALS", "STEPS"])]
    ensemble: Option<Vec<usize>>,
    /// Grid points per axis.
    #[arg(long, value_name = "RES")]
    field: Option<usize>,
    /// Comma-separated start point for every ensemble trial.
    #[arg(long, value_delimiter = ',')]
    start: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 11)]
    grid_density: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReconstructArgs {
    model: PathBuf,
    /// JSON array of 0/1, one per visible unit in ascending order.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    up_steps: usize,
    #[arg(long)]
    down_steps: usize,
    #[arg(long, value_enum, default_value = "var")]
    algorithm: AlgorithmArg,
    #[arg(long, value_enum, default_value = "parallel")]
    schedule: ScheduleArg,
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long, default_value_t = DEFAULT_TERMINAL_WINDOW)]
    terminal_window: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    model: PathBuf,
    #[arg(long)]
    observe: Option<PathBuf>,
    /// JSON array of 2n channel values whose free energy to report.
    #[arg(long)]
    theta: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

enum CliError {
    Lib(Error),
    Usage(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Lib(Error::Io(e))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Lib(Error::Json(e))
    }
}

type CliResult<T> = Result<T, CliError>;

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Lib(e) => match e {
                Error::Invalid(_) => 3,
                Error::Capacity { .. } => 4,
                _ => 2,
            },
        }
    }

    fn to_json(&self) -> Value {
        match self {
            CliError::Usage(m) => json!({"error": "usage", "message": m}),
            CliError::Lib(e) => {
                let kind = match e {
                    Error::Invalid(_) => "validation",
                    Error::Capacity { .. } => "capacity",
                    Error::Config(_) => "config",
                    Error::Precondition(_) => "precondition",
                    Error::Mismatch(_) => "mismatch",
                    Error::Io(_) => "io",
                    Error::Json(_) => "parse",
                };
                let mut v = json!({"error": kind, "message": e.to_string()});
                if let Error::Invalid(d) = e {
                    v["diagnostics"] = serde_json::to_value(d).unwrap_or(Value::Null);
                }
                v
            }
        }
    }
}

struct Ctx {
    quiet: bool,
}

impl Ctx {
    fn progress(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }

    fn write(&self, path: &Path, data: &[u8]) -> CliResult<()> {
        fs::write(path, data)?;
        self.progress(format!("wrote {}", path.display()));
        Ok(())
    }

    fn write_json(&self, path: &Path, value: &impl Serialize) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(path, text.as_bytes())
    }
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

fn out_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", path.display())))
}

/// A loaded input file: which of the three JSON formats it was.
enum Input {
    Model(BoltzmannMachine),
    Pairwise(PairwiseParams),
    Network(LnpNetwork),
}

fn load_input(text: &str) -> CliResult<Input> {
    let v: Value = serde_json::from_str(text)?;
    let has = |k: &str| v.get(k).is_some();
    if has("W") && has("e") {
        Ok(Input::Network(LnpNetwork::from_json(text)?))
    } else if has("W") {
        Ok(Input::Pairwise(PairwiseParams::from_json(text)?))
    } else {
        Ok(Input::Model(BoltzmannMachine::from_json(text)?))
    }
}

fn load_model(text: &str) -> CliResult<BoltzmannMachine> {
    match load_input(text)? {
        Input::Model(bm) => Ok(bm),
        _ => Err(CliError::Usage("expected a model file with V and c".into())),
    }
}

fn parse_kernel(spec: Option<&str>) -> CliResult<Option<(KernelSpec, String)>> {
    let Some(spec) = spec else { return Ok(None) };
    let text = if spec.trim_start().starts_with('{') {
        spec.to_string()
    } else {
        read(Path::new(spec))?
    };
    let k: KernelSpec = serde_json::from_str(&text)?;
    k.build()?;
    Ok(Some((k, text)))
}

fn load_observation(path: Option<&Path>) -> CliResult<(Observation, String)> {
    match path {
        None => Ok((Observation::new(), String::new())),
        Some(p) => {
            let text = read(p)?;
            let obs: BTreeMap<usize, State> = serde_json::from_str(&text)?;
            Ok((obs, text))
        }
    }
}

fn check_observation(bm: &BoltzmannMachine, obs: &Observation) -> CliResult<()> {
    let d = bm.validate_observation(obs);
    if d.is_empty() {
        Ok(())
    } else {
        Err(Error::Invalid(d).into())
    }
}

fn cmd_infer(ctx: &Ctx, a: &InferArgs) -> CliResult<()> {
    let text = read(&a.model)?;
    let kernel = parse_kernel(a.kernel.as_deref())?;
    let (obs, obs_text) = load_observation(a.observe.as_deref())?;
    let net = match load_input(&text)? {
        Input::Model(bm) => {
            check_observation(&bm, &obs)?;
            ChannelNet::from_pairwise_observed(&bm.derive_pairwise()?, &obs)?
        }
        Input::Pairwise(p) => ChannelNet::from_pairwise_observed(&p, &obs)?,
        Input::Network(n) => {
            if !obs.is_empty() {
                return Err(CliError::Usage("--observe applies to model files only".into()));
            }
            ChannelNet::from_lnp(&n)
        }
    };
    let mut cfg = RunConfig::new(a.algorithm.into(), a.schedule.into(), a.steps, a.seed)
        .with_init(match a.init {
            InitArg::UniformRandom => Init::UniformRandom,
            InitArg::ConstantHalf => Init::ConstantHalf,
        })
        .with_deterministic(a.deterministic);
    if let Some((k, _)) = &kernel {
        cfg = cfg.with_kernel(*k);
    }
    cfg.validate()?;
    let traj = run(&net, &cfg)?;
    let summary = summarize(
        &traj,
        lnpbm::inference::Field::Theta,
        a.window.min(traj.steps()),
        a.terminal_window.min(traj.steps()),
    )?;
    let cfg_json = serde_json::to_string(&cfg)?;
    let meta = Meta::new(a.seed, &[cfg_json.as_bytes(), text.as_bytes(), obs_text.as_bytes()]);
    out_dir(&a.out)?;
    let mut csv = Vec::new();
    csv.extend_from_slice(meta.csv_comment().as_bytes());
    csv.push(b'\n');
    traj.write_csv(&mut csv)?;
    ctx.write(&a.out.join("trajectory.csv"), &csv)?;
    let residual = net.fixed_point_residual(traj.final_theta());
    ctx.write_json(
        &a.out.join("summary.json"),
        &json!({
            "meta": meta,
            "config": cfg,
            "net_fingerprint": net.fingerprint(),
            "residual": residual,
            "final_theta": traj.final_theta(),
            "summary": summary,
        }),
    )?;
    ctx.progress(format!("terminal residual {residual:e}"));
    Ok(())
}

fn cmd_transform(ctx: &Ctx, a: &TransformArgs) -> CliResult<()> {
    let text = read(&a.model)?;
    let ops: Vec<TransformOp> = a
        .ops
        .iter()
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<TransformOp>())
        .collect::<Result<_, _>>()?;
    let kernel = parse_kernel(a.kernel.as_deref())?;
    let opts = EventSplitOptions {
        bias_to_input: a.bias_to_input,
        a: a.a,
        eps_step: a.eps_step,
        kernel: kernel.as_ref().map(|(k, _)| *k),
    };
    let input = load_input(&text)?;
    let (result, records) = match &input {
        Input::Model(bm) => apply_chain(&bm.derive_pairwise()?, &ops, &opts)?,
        Input::Pairwise(p) => apply_chain(p, &ops, &opts)?,
        Input::Network(net) => {
            if ops != [TransformOp::DaleSplit] {
                return Err(CliError::Usage("a network file accepts only --ops dale-split".into()));
            }
            let (net, rec) = dale_split(net)?;
            (Transformed::Network(net), vec![rec])
        }
    };
    let cfg = json!({"ops": ops, "bias_to_input": a.bias_to_input, "a": a.a, "eps_step": a.eps_step, "kernel": opts.kernel});
    let meta = Meta::new(0, &[cfg.to_string().as_bytes(), text.as_bytes()]);
    out_dir(&a.out)?;
    let (name, body) = match &result {
        Transformed::Pairwise(_) if ops.is_empty() => match &input {
            Input::Model(bm) => ("model.json", bm.to_json()?),
            _ => ("pairwise.json", text.trim_end().to_string()),
        },
        Transformed::Pairwise(p) => ("pairwise.json", p.to_json()?),
        Transformed::Network(net) => {
            if ops.contains(&TransformOp::DaleSplit) && !net.satisfies_dale() {
                return Err(Error::Invalid(net.validate()).into());
            }
            ("network.json", net.to_json()?)
        }
    };
    ctx.write(&a.out.join(name), format!("{body}\n").as_bytes())?;
    ctx.write_json(&a.out.join("records.json"), &json!({"meta": meta, "records": records}))?;
    Ok(())
}

fn cmd_stability(ctx: &Ctx, a: &StabilityArgs) -> CliResult<()> {
    let text = read(&a.net)?;
    let net = match load_input(&text)? {
        Input::Network(n) => n,
        _ => return Err(CliError::Usage("stability needs a network file".into())),
    };
    out_dir(&a.out)?;
    let opts = FixedPointOptions {
        grid_density: a.grid_density,
        seed: a.seed,
        ..Default::default()
    };
    let cfg = json!({"grid_density": a.grid_density, "ensemble": a.ensemble, "field": a.field, "start": a.start});
    let meta = Meta::new(a.seed, &[cfg.to_string().as_bytes(), text.as_bytes()]);
    if a.fixed_points {
        let report = find_fixed_points(&net, &opts);
        for p in &report.points {
            ctx.progress(format!("fixed point {:?} ({:?}, radius {:.4})", p.y, p.classification, p.spectral_radius));
        }
        ctx.write_json(&a.out.join("fixed_points.json"), &json!({"meta": meta, "report": report}))?;
    }
    if let Some(e) = &a.ensemble {
        let report = find_fixed_points(&net, &opts);
        let mut eo = EnsembleOptions::new(e[0], e[1], a.seed);
        if let Some(s) = &a.start {
            eo.start = EnsembleStart::Fixed(s.clone());
        }
        let stats = ensemble(&net, &report.points, &eo)?;
        ctx.write_json(&a.out.join("ensemble.json"), &json!({"meta": meta, "ensemble": stats}))?;
    }
    if let Some(res) = a.field {
        let rows = field_export(&net, res)?;
        let mut csv = Vec::new();
        csv.extend_from_slice(meta.csv_comment().as_bytes());
        csv.push(b'\n');
        write_field_csv(&rows, &mut csv)?;
        ctx.write(&a.out.join("field.csv"), &csv)?;
    }
    Ok(())
}

fn cmd_reconstruct(ctx: &Ctx, a: &ReconstructArgs) -> CliResult<()> {
    let text = read(&a.model)?;
    let bm = load_model(&text)?;
    let input_text = read(&a.input)?;
    let input: Vec<u8> = serde_json::from_str(&input_text)?;
    let mut cfg = ReconstructConfig::new(a.algorithm.into(), a.up_steps, a.down_steps, a.seed);
    cfg.schedule = a.schedule.into();
    cfg.terminal_window = a.terminal_window;
    if let Some((k, _)) = parse_kernel(a.kernel.as_deref())? {
        cfg.kernel = k;
    }
    let r = reconstruct(&bm, &input, &cfg)?;
    let cfg_json = json!({
        "algorithm": a.algorithm, "schedule": a.schedule, "up_steps": a.up_steps,
        "down_steps": a.down_steps, "kernel": cfg.kernel, "terminal_window": a.terminal_window,
    });
    let meta = Meta::new(a.seed, &[cfg_json.to_string().as_bytes(), text.as_bytes(), input_text.as_bytes()]);
    out_dir(&a.out)?;
    ctx.progress(format!("input {:?} -> reconstruction {:?}", input, r.visible_bits));
    ctx.write_json(
        &a.out.join("reconstruction.json"),
        &json!({"meta": meta, "input": input, "reconstruction": r}),
    )
}

fn cmd_oracle(ctx: &Ctx, a: &OracleArgs) -> CliResult<()> {
    let text = read(&a.model)?;
    let bm = load_model(&text)?;
    let (obs, obs_text) = load_observation(a.observe.as_deref())?;
    check_observation(&bm, &obs)?;
    let marginals = bm.exact_posterior_marginals(&obs)?;
    let mut theta_text = String::new();
    let fe = match &a.theta {
        Some(p) => {
            theta_text = read(p)?;
            let theta: Vec<f64> = serde_json::from_str(&theta_text)?;
            Some(free_energy(&bm, &theta)?)
        }
        None => None,
    };
    let meta = Meta::new(0, &[text.as_bytes(), obs_text.as_bytes(), theta_text.as_bytes()]);
    out_dir(&a.out)?;
    let marginals: BTreeMap<String, [f64; 2]> = marginals.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    ctx.write_json(
        &a.out.join("marginals.json"),
        &json!({"meta": meta, "marginals": marginals, "free_energy": fe}),
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ctx = Ctx { quiet: cli.quiet };
    let result = match &cli.command {
        Command::Infer(a) => cmd_infer(&ctx, a),
        Command::Transform(a) => cmd_transform(&ctx, a),
        Command::Stability(a) => cmd_stability(&ctx, a),
        Command::Reconstruct(a) => cmd_reconstruct(&ctx, a),
        Command::Oracle(a) => cmd_oracle(&ctx, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
