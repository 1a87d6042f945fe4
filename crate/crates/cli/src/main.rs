//! `dissinet` command-line front end.
//!
//! Every subcommand is a thin adapter over library calls. Results are
//! written into `--out DIR` under fixed file names, or to stdout when no
//! directory is given. Exit codes: 0 when the checked property holds, 1
//! when it fails (or synthesis is partial), 2 on input errors.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use dissinet::graph::{barabasi_albert, WeightRule};
use dissinet::matrix::{Matrix, Vector};
use dissinet::microgrid::{
    feasible_region_sample, run_pipeline_with, write_region_csv, write_report, Axis, Discretization, MicrogridSpec,
    RegionGrid,
};
use dissinet::network::{
    check_network, output_perturbation, simulate, storage_decrease_check, CheckMode, GlobalParams, NetworkModel,
    NetworkSpec, RecordOptions, Variant,
};
use dissinet::synthesis::{synthesize_all, ControllerSet, SynthesisMode, SynthesisOptions, SynthesisRequest};
use dissinet::{Error, Result};

#[derive(Parser)]
#[command(
    name = "dissinet",
    version,
    about = "Dissipativity checks and decentralized synthesis for networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Seeded preferential-attachment graph (graph.json).
    GenGraph(GenGraphArgs),
    /// Stability test on a network file (verdict.json).
    Check(CheckArgs),
    /// Per-node controller synthesis (controllers.json).
    Synth(SynthArgs),
    /// Closed-loop simulation (trajectory.csv, storage.csv, simulation.json).
    Simulate(SimulateArgs),
    /// Full microgrid experiment into a report directory.
    DemoMicrogrid(DemoArgs),
    /// Scalar feasible-region sample (region.csv).
    Region(RegionArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    A,
    B,
    C,
    D,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::A => Variant::A,
            VariantArg::B => Variant::B,
            VariantArg::C => Variant::C,
            VariantArg::D => Variant::D,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Global,
    Dual,
    Decentralized,
    Comparison,
    Qmi,
}

impl From<ModeArg> for CheckMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Global => CheckMode::Global,
            ModeArg::Dual => CheckMode::Dual,
            ModeArg::Decentralized => CheckMode::Decentralized,
            ModeArg::Comparison => CheckMode::Comparison,
            ModeArg::Qmi => CheckMode::Qmi,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Euler,
    Zoh,
}

impl From<MethodArg> for Discretization {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Euler => Discretization::Euler,
            MethodArg::Zoh => Discretization::Zoh,
        }
    }
}

/// Shared `α` / `𝒮` selection for the decentralized variants.
#[derive(Args)]
struct VariantParams {
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    /// Shared α of variant a.
    #[arg(long)]
    alpha: Option<f64>,
    /// Shared 𝒮 of variant b, as a multiple of the identity.
    #[arg(long)]
    shared_s: Option<f64>,
}

impl VariantParams {
    fn params(&self, m: usize) -> GlobalParams {
        GlobalParams {
            alpha: self.alpha,
            shared_s: self.shared_s.map(|s| Matrix::identity(m, m) * s),
        }
    }
}

#[derive(Args)]
struct GenGraphArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    m_attach: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// unit | constant:W | resistive:R | uniform:LO:HI
    #[arg(long, default_value = "unit")]
    weight: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    network: PathBuf,
    #[arg(long, value_enum)]
    mode: ModeArg,
    #[command(flatten)]
    variant: VariantParams,
    /// Eigenvalue tolerance of the definiteness test.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    network: PathBuf,
    /// Joint decentralized synthesis with this variant; without it the
    /// file's fixed supplies (or dual triples) are used.
    #[command(flatten)]
    variant: VariantParams,
    /// Solver restart seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    network: PathBuf,
    /// controllers.json from `synth`; open loop when omitted.
    #[arg(long)]
    controllers: Option<PathBuf>,
    /// JSON array with the stacked initial state.
    #[arg(long, conflicts_with = "seed")]
    x0: Option<PathBuf>,
    /// Seed of a uniform perturbation of every output-observed state.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1.0)]
    amplitude: f64,
    #[arg(long, default_value_t = 100)]
    steps: usize,
    /// Sampling step used for the time column.
    #[arg(long, default_value_t = 1.0)]
    h: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DemoArgs {
    /// Experiment description; defaults are used for missing fields.
    spec: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    /// Topology seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[command(flatten)]
    variant: VariantParams,
    #[arg(long)]
    steps: Option<usize>,
    /// Degree used for region.csv.
    #[arg(long, default_value_t = 0.5)]
    region_d: f64,
    #[arg(long, default_value = "microgrid-report")]
    out: PathBuf,
}

#[derive(Args)]
struct RegionArgs {
    #[arg(long)]
    d: f64,
    /// LO:HI:COUNT
    #[arg(long, default_value = "-6:0:25", allow_hyphen_values = true)]
    q: String,
    #[arg(long, default_value = "0:1:21", allow_hyphen_values = true)]
    s: String,
    #[arg(long, default_value = "0:1:21", allow_hyphen_values = true)]
    r: String,
    /// LO:HI range admitted for α = 2S.
    #[arg(long, default_value = "0:2", allow_hyphen_values = true)]
    alpha_range: String,
    /// LO:HI range admitted for the shared 𝒮 = S.
    #[arg(long, default_value = "0:1", allow_hyphen_values = true)]
    shared_range: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::GenGraph(a) => gen_graph(a),
        Command::Check(a) => check(a),
        Command::Synth(a) => synth(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::DemoMicrogrid(a) => demo(a),
        Command::Region(a) => region(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

/// Opens `DIR/name`, or stdout without a directory.
fn sink(out: Option<&Path>, name: &str) -> Result<Box<dyn Write>> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            Ok(Box::new(fs::File::create(dir.join(name))?))
        }
        None => Ok(Box::new(std::io::stdout().lock())),
    }
}

fn emit_json<T: Serialize>(out: Option<&Path>, name: &str, value: &T) -> Result<()> {
    let mut w = sink(out, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

fn read_network(path: &Path) -> Result<NetworkSpec> {
    NetworkSpec::from_json(&fs::read_to_string(path)?)
}

fn threads() -> Result<Option<usize>> {
    match std::env::var("DISSINET_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&t| t > 0)
            .map(Some)
            .ok_or_else(|| bad(format!("DISSINET_THREADS must be a positive integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| bad(format!("not a number: {s:?}")))
}

fn parse_weight(s: &str) -> Result<WeightRule> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        ["unit"] => Ok(WeightRule::Unit),
        ["constant", w] => Ok(WeightRule::Constant(parse_f64(w)?)),
        ["resistive", r] => Ok(WeightRule::Resistive(parse_f64(r)?)),
        ["uniform", lo, hi] => Ok(WeightRule::Uniform(parse_f64(lo)?, parse_f64(hi)?)),
        _ => Err(bad(format!("unknown weight rule {s:?}"))),
    }
}

fn parse_range(s: &str) -> Result<(f64, f64)> {
    match s.split(':').collect::<Vec<_>>().as_slice() {
        [lo, hi] => Ok((parse_f64(lo)?, parse_f64(hi)?)),
        _ => Err(bad(format!("expected LO:HI, got {s:?}"))),
    }
}

fn parse_axis(s: &str) -> Result<Axis> {
    match s.split(':').collect::<Vec<_>>().as_slice() {
        [lo, hi, n] => Ok(Axis::new(
            parse_f64(lo)?,
            parse_f64(hi)?,
            n.trim().parse().map_err(|_| bad(format!("bad count in {s:?}")))?,
        )),
        _ => Err(bad(format!("expected LO:HI:COUNT, got {s:?}"))),
    }
}

fn gen_graph(a: GenGraphArgs) -> Result<bool> {
    let g = barabasi_albert(a.n, a.m_attach, parse_weight(&a.weight)?, a.seed)?;
    let mut w = sink(a.out.as_deref(), "graph.json")?;
    writeln!(w, "{}", g.to_json()?)?;
    Ok(true)
}

fn check(a: CheckArgs) -> Result<bool> {
    let spec = read_network(&a.network)?;
    let mode = CheckMode::from(a.mode);
    let variant = match (mode, a.variant.variant) {
        (_, Some(v)) => v.into(),
        (CheckMode::Decentralized, None) => return Err(bad("decentralized check needs --variant")),
        (_, None) => Variant::A,
    };
    let m = spec
        .supplies
        .first()
        .map(|s| s.m())
        .or_else(|| spec.duals.first().map(|d| d.r.dim()))
        .unwrap_or(1);
    let report = check_network(&spec, mode, variant, &a.variant.params(m), a.tol)?;
    emit_json(a.out.as_deref(), "verdict.json", &report)?;
    Ok(report.holds)
}

/// One request per node: joint when a variant is given, otherwise the
/// fixed primal supplies, otherwise the fixed dual triples.
fn synth_requests(spec: &NetworkSpec, v: &VariantParams) -> Result<Vec<SynthesisRequest>> {
    if spec.nodes.is_empty() {
        return Err(bad("synthesis needs nodes in the network file"));
    }
    let modes: Vec<SynthesisMode> = if let Some(variant) = v.variant {
        let degrees = spec.degrees()?;
        if degrees.len() != spec.nodes.len() {
            return Err(bad("graph and node list differ in size"));
        }
        spec.nodes
            .iter()
            .zip(degrees)
            .map(|(node, degree)| SynthesisMode::JointDecentralized {
                variant: variant.into(),
                degree,
                params: v.params(node.m()),
            })
            .collect()
    } else if !spec.supplies.is_empty() {
        spec.supplies.iter().cloned().map(SynthesisMode::PrimalFixed).collect()
    } else if !spec.duals.is_empty() {
        spec.duals.iter().cloned().map(SynthesisMode::DualFixed).collect()
    } else {
        return Err(bad("give --variant or put supplies or duals in the network file"));
    };
    Ok(spec
        .nodes
        .iter()
        .cloned()
        .zip(modes)
        .map(|(node, mode)| SynthesisRequest { node, mode })
        .collect())
}

fn synth(a: SynthArgs) -> Result<bool> {
    let spec = read_network(&a.network)?;
    let requests = synth_requests(&spec, &a.variant)?;
    let mut opts = SynthesisOptions::default();
    opts.solve.rng_seed = a.seed;
    let set = synthesize_all(&requests, &opts, threads()?)?;
    emit_json(a.out.as_deref(), "controllers.json", &set)?;
    for f in &set.failures {
        eprintln!("node {}: {}", f.node, f.reason);
    }
    Ok(set.complete())
}

#[derive(Serialize)]
struct SimulationSummary {
    steps: usize,
    truncated: Option<String>,
    final_max_abs: Option<f64>,
    max_storage_increase: Option<f64>,
}

fn simulate_cmd(a: SimulateArgs) -> Result<bool> {
    let spec = read_network(&a.network)?;
    let n = spec.nodes.len();
    let mut net = NetworkModel::linear(spec.nodes.clone(), spec.interconnection.clone())?;
    if let Some(path) = &a.controllers {
        let set: ControllerSet = serde_json::from_str(&fs::read_to_string(path)?)?;
        net = net.with_certificates(set.certificates(n)?)?;
    }
    let x0 = match (&a.x0, a.seed) {
        (Some(path), _) => {
            let v: Vec<f64> = serde_json::from_str(&fs::read_to_string(path)?)?;
            Vector::from_vec(v)
        }
        (None, Some(seed)) => output_perturbation(&spec.nodes, a.amplitude, seed),
        (None, None) => return Err(bad("give --x0 FILE or --seed")),
    };
    let full_storage = net.certificates.iter().all(Option::is_some);
    let record = RecordOptions {
        states: true,
        outputs: false,
        inputs: false,
        storage: full_storage,
        dt: a.h,
    };
    let traj = simulate(&net, &x0, a.steps, &record)?;
    traj.write_states_csv(sink(a.out.as_deref(), "trajectory.csv")?)?;
    let max_storage_increase = if full_storage {
        if a.out.is_some() {
            traj.write_storage_csv(sink(a.out.as_deref(), "storage.csv")?)?;
        }
        Some(storage_decrease_check(&traj)?)
    } else {
        None
    };
    let summary = SimulationSummary {
        steps: traj.steps(),
        truncated: traj.truncated.clone(),
        final_max_abs: traj.final_state().map(|x| x.amax()),
        max_storage_increase,
    };
    if let Some(dir) = &a.out {
        emit_json(Some(dir), "simulation.json", &summary)?;
    }
    if let Some(why) = &summary.truncated {
        eprintln!("simulation stopped early: {why}");
    }
    Ok(summary.truncated.is_none())
}

#[derive(Serialize)]
struct DemoRun {
    h: f64,
    certified: usize,
    failed: usize,
    spectral_radius: Option<f64>,
}

#[derive(Serialize)]
struct DemoSummary {
    out: PathBuf,
    h_star: f64,
    euler_spectral_radius: f64,
    runs: Vec<DemoRun>,
    perturbation_settle_step: Option<usize>,
}

fn demo(a: DemoArgs) -> Result<bool> {
    let mut spec: MicrogridSpec = match &a.spec {
        Some(path) => serde_json::from_str(&fs::read_to_string(path)?)?,
        None => MicrogridSpec::default(),
    };
    if let Some(n) = a.n {
        spec.n_dgus = n;
    }
    if let Some(seed) = a.seed {
        spec.topology_seed = seed;
    }
    if let Some(h) = a.h {
        spec.h = h;
    }
    if let Some(m) = a.method {
        spec.discretization = m.into();
    }
    if let Some(v) = a.variant.variant {
        spec.synthesis.variant = v.into();
    }
    if a.variant.alpha.is_some() {
        spec.synthesis.alpha = a.variant.alpha;
    }
    if a.variant.shared_s.is_some() {
        spec.synthesis.shared_s = a.variant.shared_s;
    }
    if let Some(steps) = a.steps {
        spec.steps = steps;
    }
    if let Some(t) = threads()? {
        spec.threads = Some(t);
    }
    spec.validate()?;
    let report = run_pipeline_with(&spec, &SynthesisOptions::default())?;
    write_report(&report, &a.out, a.region_d)?;
    let summary = DemoSummary {
        out: a.out.clone(),
        h_star: report.h_star,
        euler_spectral_radius: report.euler_spectral_radius,
        runs: report
            .runs
            .iter()
            .map(|r| DemoRun {
                h: r.h,
                certified: r.results.len(),
                failed: r.failures.len(),
                spectral_radius: r.spectral_radius,
            })
            .collect(),
        perturbation_settle_step: report.perturbation.as_ref().and_then(|p| p.settle_step),
    };
    emit_json(None, "", &summary)?;
    Ok(report.runs.iter().all(|r| r.complete()) && report.perturbation.is_some())
}

fn region(a: RegionArgs) -> Result<bool> {
    let grid = RegionGrid {
        q: parse_axis(&a.q)?,
        s: parse_axis(&a.s)?,
        r: parse_axis(&a.r)?,
    };
    let points = feasible_region_sample(a.d, &grid, parse_range(&a.alpha_range)?, parse_range(&a.shared_range)?)?;
    write_region_csv(&points, sink(a.out.as_deref(), "region.csv")?)?;
    Ok(true)
}
