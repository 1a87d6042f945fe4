//! DC microgrid of buck-converter DGUs coupled by resistive lines.
//!
//! Each DGU has state `(V, I)`, control input `V_in` and coupling input
//! `I_G = Σ (V_j − V_i)/R_ij`. Table units are read as `L` in mH and `C`
//! in F.

use std::fs;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dissipativity::{DualSupplyRate, LinearNode, StorageCertificate, SupplyRate, TimeDomain};
use crate::error::{Error, Result};
use crate::graph::{barabasi_albert, seeded_rng, WeightRule, WeightedGraph};
use crate::matrix::{eig_general, expm_with_integral, Complex, Matrix, Vector};
use crate::network::{
    decentralized_check, fmt_f64, simulate, stability_report, storage_decrease_check, GlobalParams, Interconnection,
    NetworkModel, NetworkSpec, RecordOptions, Trajectory, Variant,
};
use crate::synthesis::{joint_decentralized_synthesis, joint_necessary_bound, NecessaryBound, SynthesisOptions};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DguParams {
    /// Internal resistance [Ω].
    pub r_int: f64,
    /// Internal inductance [H].
    pub l_ind: f64,
    /// Internal capacitance [F].
    pub c_cap: f64,
    /// Load conductance [S].
    pub y_load: f64,
}

impl DguParams {
    pub const NOMINAL: DguParams = DguParams {
        r_int: 0.2,
        l_ind: 2.5e-3,
        c_cap: 0.01,
        y_load: 0.02,
    };

    pub fn validate(&self) -> Result<()> {
        let all = [self.r_int, self.l_ind, self.c_cap, self.y_load];
        if all.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "DGU parameters must be positive: {self:?}"
            )))
        }
    }
}

/// Half widths of the uniform sampling intervals around [`DguParams::NOMINAL`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSpread {
    pub r_int: f64,
    pub l_ind: f64,
    pub c_cap: f64,
    pub y_load: f64,
}

impl Default for ParamSpread {
    fn default() -> Self {
        Self {
            r_int: 0.05,
            l_ind: 1.0e-3,
            c_cap: 0.001,
            y_load: 0.001,
        }
    }
}

fn around(rng: &mut impl Rng, center: f64, half: f64) -> f64 {
    if half == 0.0 {
        center
    } else {
        rng.random_range(center - half..=center + half)
    }
}

pub fn sample_params_with(rng: &mut impl Rng, spread: &ParamSpread) -> DguParams {
    let c = DguParams::NOMINAL;
    DguParams {
        r_int: around(rng, c.r_int, spread.r_int),
        l_ind: around(rng, c.l_ind, spread.l_ind),
        c_cap: around(rng, c.c_cap, spread.c_cap),
        y_load: around(rng, c.y_load, spread.y_load),
    }
}

pub fn sample_params(seed: u64) -> DguParams {
    sample_params_with(&mut seeded_rng(seed), &ParamSpread::default())
}

/// `A = [[−Y/C, 1/C], [−1/L, −R/L]]`, `B = [0; 1/L]`, `G = [1/C; 0]`,
/// `C = [1, 0]`.
pub fn dgu_ct_matrices(p: &DguParams) -> Result<LinearNode> {
    p.validate()?;
    let a = Matrix::from_row_slice(
        2,
        2,
        &[-p.y_load / p.c_cap, 1.0 / p.c_cap, -1.0 / p.l_ind, -p.r_int / p.l_ind],
    );
    let b = Matrix::from_column_slice(2, 1, &[0.0, 1.0 / p.l_ind]);
    let g = Matrix::from_column_slice(2, 1, &[1.0 / p.c_cap, 0.0]);
    let c = Matrix::from_row_slice(1, 2, &[1.0, 0.0]);
    LinearNode::new(a, b, g, c, TimeDomain::Continuous)
}

/// Largest forward-Euler step keeping every eigenvalue inside the unit
/// disk: `min −2 Re λ / |λ|²`.
pub fn ct_stepsize_bound(eigs: &[Complex<f64>]) -> Result<f64> {
    if eigs.is_empty() {
        return Err(Error::InvalidArgument("no eigenvalues given".into()));
    }
    let mut h = f64::INFINITY;
    for z in eigs {
        if !(z.re < 0.0) {
            return Err(Error::Precondition(format!(
                "step bound needs Re λ < 0, found {}{:+}i",
                z.re, z.im
            )));
        }
        h = h.min(-2.0 * z.re / z.norm_sqr());
    }
    Ok(h)
}

fn check_ct(node: &LinearNode, h: f64) -> Result<()> {
    if node.domain != TimeDomain::Continuous {
        return Err(Error::InvalidArgument("node is already discrete time".into()));
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidArgument(format!("step must be positive, got {h}")));
    }
    Ok(())
}

/// `(I + hA, hB, hG, C)`.
pub fn euler_discretize(node: &LinearNode, h: f64) -> Result<LinearNode> {
    check_ct(node, h)?;
    let n = node.n();
    let mut out = LinearNode::discrete(
        Matrix::identity(n, n) + &node.a * h,
        &node.b * h,
        &node.g * h,
        node.c.clone(),
    )?;
    out.d = node.d.clone();
    Ok(out)
}

/// Zero-order hold on both `v` and `u`: `A_d = e^{Ah}`,
/// `[B_d G_d] = (∫₀ʰ e^{Aτ} dτ)[B G]`.
pub fn zoh_discretize(node: &LinearNode, h: f64) -> Result<LinearNode> {
    check_ct(node, h)?;
    let (phi, gamma) = expm_with_integral(&node.a, h)?;
    let mut out = LinearNode::discrete(phi, &gamma * &node.b, &gamma * &node.g, node.c.clone())?;
    out.d = node.d.clone();
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Discretization {
    Euler,
    Zoh,
}

impl std::str::FromStr for Discretization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euler" => Ok(Discretization::Euler),
            "zoh" => Ok(Discretization::Zoh),
            _ => Err(Error::InvalidArgument(format!(
                "unknown discretization '{s}', expected euler or zoh"
            ))),
        }
    }
}

pub fn discretize(node: &LinearNode, h: f64, method: Discretization) -> Result<LinearNode> {
    match method {
        Discretization::Euler => euler_discretize(node, h),
        Discretization::Zoh => zoh_discretize(node, h),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisSpec {
    pub variant: Variant,
    pub alpha: Option<f64>,
    /// Shared scalar `𝒮` for variant (b).
    pub shared_s: Option<f64>,
}

impl Default for SynthesisSpec {
    fn default() -> Self {
        Self {
            variant: Variant::A,
            alpha: Some(1.0),
            shared_s: None,
        }
    }
}

impl SynthesisSpec {
    pub fn params(&self) -> GlobalParams {
        GlobalParams {
            alpha: self.alpha,
            shared_s: self.shared_s.map(|s| Matrix::from_element(1, 1, s)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MicrogridSpec {
    pub n_dgus: usize,
    pub topology_seed: u64,
    pub param_seed: u64,
    pub m_attach: usize,
    /// Line resistance `R_ij` [Ω].
    pub line_resistance: f64,
    /// Step [s] of the controlled network and the perturbation run.
    pub h: f64,
    pub discretization: Discretization,
    pub synthesis: SynthesisSpec,
    /// Additional steps for the controlled-eigenvalue sweep.
    pub sweep_h: Vec<f64>,
    /// Step of the uncontrolled forward-Euler eigenvalue report.
    pub euler_h: f64,
    pub baseline_seed: u64,
    pub baseline_ki: f64,
    pub baseline_ki_spread: f64,
    pub perturbation_seed: u64,
    /// Half width [V] of the uniform voltage perturbation.
    pub perturbation: f64,
    pub steps: usize,
    /// Worker threads for per-node synthesis; `None` uses the rayon default.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub spread: ParamSpread,
}

impl Default for MicrogridSpec {
    fn default() -> Self {
        Self {
            n_dgus: 100,
            topology_seed: 1,
            param_seed: 2,
            m_attach: 1,
            line_resistance: 0.05,
            h: 1e-3,
            discretization: Discretization::Zoh,
            synthesis: SynthesisSpec::default(),
            sweep_h: vec![1e-4, 1e-3, 5e-3],
            euler_h: 5e-3,
            baseline_seed: 3,
            baseline_ki: -1.0,
            baseline_ki_spread: 0.1,
            perturbation_seed: 4,
            perturbation: 1.0,
            steps: 2000,
            threads: None,
            spread: ParamSpread::default(),
        }
    }
}

impl MicrogridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_dgus < 2 {
            return Err(Error::InvalidArgument("a microgrid needs at least two DGUs".into()));
        }
        let steps = std::iter::once(self.h)
            .chain(self.sweep_h.iter().copied())
            .chain([self.euler_h]);
        for h in steps {
            if !(h > 0.0) || !h.is_finite() {
                return Err(Error::InvalidArgument(format!("steps must be positive, got {h}")));
            }
        }
        if !(self.line_resistance > 0.0) {
            return Err(Error::InvalidArgument("line resistance must be positive".into()));
        }
        if self.m_attach == 0 || self.m_attach >= self.n_dgus {
            return Err(Error::InvalidArgument("m_attach must lie in 1..n_dgus".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Microgrid {
    pub graph: WeightedGraph,
    pub params: Vec<DguParams>,
    pub ct_nodes: Vec<LinearNode>,
    pub degrees: Vec<f64>,
}

impl Microgrid {
    pub fn dt_nodes(&self, h: f64, method: Discretization) -> Result<Vec<LinearNode>> {
        self.ct_nodes.iter().map(|n| discretize(n, h, method)).collect()
    }

    pub fn interconnection(&self) -> Interconnection {
        Interconnection::Laplacian {
            graph: self.graph.clone(),
            block: 1,
        }
    }

    pub fn network(&self, h: f64, method: Discretization) -> Result<NetworkModel> {
        NetworkModel::linear(self.dt_nodes(h, method)?, self.interconnection())
    }

    /// The discretized grid as a network file (nodes and coupling only).
    pub fn network_spec(&self, h: f64, method: Discretization) -> Result<NetworkSpec> {
        Ok(NetworkSpec {
            nodes: self.dt_nodes(h, method)?,
            supplies: Vec::new(),
            duals: Vec::new(),
            interconnection: self.interconnection(),
            comparison: None,
        })
    }

    /// `A + BK − G𝓛C` for the continuous-time network.
    pub fn ct_closed_loop(&self, gains: &[Matrix]) -> Result<Matrix> {
        let h = -self.graph.laplacian().into_matrix();
        let slots: Vec<Option<Matrix>> = gains.iter().cloned().map(Some).collect();
        crate::network::assemble_closed_loop(&self.ct_nodes, &slots, &h)
    }
}

pub fn build_microgrid(spec: &MicrogridSpec) -> Result<Microgrid> {
    spec.validate()?;
    let weight = WeightRule::Resistive(spec.line_resistance);
    let graph = barabasi_albert(spec.n_dgus, spec.m_attach, weight, spec.topology_seed)?;
    if !graph.is_connected() {
        return Err(Error::Graph("microgrid topology is disconnected".into()));
    }
    let mut rng = seeded_rng(spec.param_seed);
    let params: Vec<DguParams> = (0..spec.n_dgus)
        .map(|_| sample_params_with(&mut rng, &spec.spread))
        .collect();
    let ct_nodes = params.iter().map(dgu_ct_matrices).collect::<Result<Vec<_>>>()?;
    let degrees = graph.degrees();
    Ok(Microgrid {
        graph,
        params,
        ct_nodes,
        degrees,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NodeSynthesis {
    pub node: usize,
    pub degree: f64,
    pub certificate: StorageCertificate,
    pub dual: DualSupplyRate,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NodeFailure {
    pub node: usize,
    pub degree: f64,
    pub reason: String,
    /// Closed-form necessary condition; `holds == false` proves the joint
    /// problem infeasible for this node.
    pub necessary: Option<NecessaryBound>,
}

#[derive(Clone, Debug, Serialize)]
pub struct StepRun {
    pub h: f64,
    pub results: Vec<NodeSynthesis>,
    pub failures: Vec<NodeFailure>,
    /// Eigenvalues of the controlled network when every node succeeded.
    #[serde(skip)]
    pub eigs: Option<Vec<Complex<f64>>>,
    pub spectral_radius: Option<f64>,
}

impl StepRun {
    pub fn complete(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn certificates(&self) -> Vec<StorageCertificate> {
        self.results.iter().map(|r| r.certificate.clone()).collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PerturbationRun {
    pub h: f64,
    #[serde(skip)]
    pub trajectory: Trajectory,
    pub final_max_abs: f64,
    /// First step after which every state stays within 1e−3 of the origin.
    pub settle_step: Option<usize>,
    pub max_storage_increase: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentReport {
    pub spec: MicrogridSpec,
    #[serde(skip)]
    pub grid: Microgrid,
    pub baseline_ki: Vec<f64>,
    #[serde(skip)]
    pub eigs_ct: Vec<Complex<f64>>,
    pub h_star: f64,
    #[serde(skip)]
    pub eigs_euler: Vec<Complex<f64>>,
    pub euler_spectral_radius: f64,
    pub runs: Vec<StepRun>,
    pub perturbation: Option<PerturbationRun>,
}

impl ExperimentReport {
    pub fn run_at(&self, h: f64) -> Option<&StepRun> {
        self.runs.iter().find(|r| r.h == h)
    }
}

/// Joint synthesis for every node of `nodes` in parallel, ordered by index.
pub fn synthesize_nodes(
    nodes: &[LinearNode],
    degrees: &[f64],
    synthesis: &SynthesisSpec,
    opts: &SynthesisOptions,
    threads: Option<usize>,
) -> Result<(Vec<NodeSynthesis>, Vec<NodeFailure>)> {
    let params = synthesis.params();
    let work = || {
        nodes
            .par_iter()
            .zip(degrees.par_iter())
            .enumerate()
            .map(|(i, (node, &d))| {
                joint_decentralized_synthesis(node, synthesis.variant, d, &params, opts)
                    .map(|(certificate, dual)| NodeSynthesis {
                        node: i,
                        degree: d,
                        certificate,
                        dual,
                    })
                    .map_err(|e| NodeFailure {
                        node: i,
                        degree: d,
                        reason: e.to_string(),
                        necessary: joint_necessary_bound(node, synthesis.variant, d, &params)
                            .ok()
                            .flatten(),
                    })
            })
            .collect::<Vec<_>>()
    };
    let outcomes = match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => ok.push(r),
            Err(f) => failed.push(f),
        }
    }
    Ok((ok, failed))
}

fn step_run(grid: &Microgrid, spec: &MicrogridSpec, h: f64, opts: &SynthesisOptions) -> Result<StepRun> {
    let nodes = grid.dt_nodes(h, spec.discretization)?;
    let (results, failures) = synthesize_nodes(&nodes, &grid.degrees, &spec.synthesis, opts, spec.threads)?;
    let (eigs, spectral_radius) = if failures.is_empty() {
        let net = NetworkModel::linear(nodes, grid.interconnection())?
            .with_certificates(results.iter().map(|r| Some(r.certificate.clone())).collect())?;
        let rep = stability_report(&net.closed_loop_matrix()?, TimeDomain::Discrete, 0.0)?;
        (Some(rep.eigs), Some(rep.spectral_radius))
    } else {
        (None, None)
    };
    Ok(StepRun {
        h,
        results,
        failures,
        eigs,
        spectral_radius,
    })
}

pub fn perturbation_state(n_dgus: usize, amplitude: f64, seed: u64) -> Vector {
    let mut rng = seeded_rng(seed);
    let mut x = Vector::zeros(2 * n_dgus);
    for i in 0..n_dgus {
        x[2 * i] = if amplitude > 0.0 {
            rng.random_range(-amplitude..=amplitude)
        } else {
            0.0
        };
    }
    x
}

/// Simulates the certified network from a voltage perturbation.
pub fn perturbation_run(
    grid: &Microgrid,
    spec: &MicrogridSpec,
    h: f64,
    certificates: Vec<StorageCertificate>,
) -> Result<PerturbationRun> {
    let net = grid
        .network(h, spec.discretization)?
        .with_certificates(certificates.into_iter().map(Some).collect())?;
    let x0 = perturbation_state(spec.n_dgus, spec.perturbation, spec.perturbation_seed);
    let record = RecordOptions {
        states: true,
        outputs: false,
        inputs: true,
        storage: true,
        dt: h,
    };
    let trajectory = simulate(&net, &x0, spec.steps, &record)?;
    if let Some(why) = &trajectory.truncated {
        return Err(Error::NonFinite(if why.is_empty() {
            "trajectory"
        } else {
            "trajectory diverged"
        }));
    }
    let amax: Vec<f64> = trajectory.states.iter().map(|x| x.amax()).collect();
    let settle_step = match amax.iter().rposition(|&v| v > 1e-3) {
        None => Some(0),
        Some(k) if k + 1 < amax.len() => Some(k + 1),
        Some(_) => None,
    };
    Ok(PerturbationRun {
        h,
        final_max_abs: *amax.last().unwrap_or(&0.0),
        settle_step,
        max_storage_increase: storage_decrease_check(&trajectory)?,
        trajectory,
    })
}

/// Runs the full experiment: CT baseline, Euler baseline, per-step joint
/// synthesis and the perturbation run at `spec.h`. Synthesis failures are
/// listed per step rather than aborting.
pub fn run_pipeline(spec: &MicrogridSpec) -> Result<ExperimentReport> {
    run_pipeline_with(spec, &SynthesisOptions::default())
}

pub fn run_pipeline_with(spec: &MicrogridSpec, opts: &SynthesisOptions) -> Result<ExperimentReport> {
    let grid = build_microgrid(spec)?;
    let mut rng = seeded_rng(spec.baseline_seed);
    let baseline_ki: Vec<f64> = (0..spec.n_dgus)
        .map(|_| around(&mut rng, spec.baseline_ki, spec.baseline_ki_spread))
        .collect();
    let gains: Vec<Matrix> = baseline_ki
        .iter()
        .map(|&k| Matrix::from_row_slice(1, 2, &[0.0, k]))
        .collect();
    let ct = grid.ct_closed_loop(&gains)?;
    let eigs_ct = eig_general(&ct)?;
    let h_star = ct_stepsize_bound(&eigs_ct)?;
    let n = ct.nrows();
    let euler = Matrix::identity(n, n) + &ct * spec.euler_h;
    let eigs_euler = eig_general(&euler)?;
    let euler_spectral_radius = eigs_euler.iter().map(|z| z.norm()).fold(0.0, f64::max);

    let mut steps = vec![spec.h];
    for &h in &spec.sweep_h {
        if !steps.contains(&h) {
            steps.push(h);
        }
    }
    let mut runs = Vec::with_capacity(steps.len());
    for &h in &steps {
        runs.push(step_run(&grid, spec, h, opts)?);
    }
    let perturbation = match runs.first() {
        Some(run) if run.complete() => Some(perturbation_run(&grid, spec, spec.h, run.certificates())?),
        _ => None,
    };
    Ok(ExperimentReport {
        spec: spec.clone(),
        grid,
        baseline_ki,
        eigs_ct,
        h_star,
        eigs_euler,
        euler_spectral_radius,
        runs,
        perturbation,
    })
}

fn write_eigs<W: std::io::Write>(out: &mut csv::Writer<W>, set: &str, eigs: &[Complex<f64>]) -> Result<()> {
    for z in eigs {
        out.write_record([set.to_string(), fmt_f64(z.re), fmt_f64(z.im), fmt_f64(z.norm())])?;
    }
    Ok(())
}

fn eig_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["node_set", "re", "im", "abs"])?;
    Ok(w)
}

/// Writes the report directory: `graph.json`, `network.json`, `params.csv`, `eigs_ct.csv`,
/// `eigs_euler.csv`, `eigs_dt_controlled.csv`, `controllers.json`,
/// `failures.json`, `trajectory.csv`, `storage.csv`, `region.csv` and
/// `summary.json`.
pub fn write_report(report: &ExperimentReport, dir: &Path, region_d: f64) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("graph.json"), report.grid.graph.to_json()?)?;
    let net = report.grid.network_spec(report.spec.h, report.spec.discretization)?;
    fs::write(dir.join("network.json"), serde_json::to_string_pretty(&net)?)?;

    let mut w = csv::Writer::from_path(dir.join("params.csv"))?;
    w.write_record(["node", "R_int", "L_ind", "C_cap", "Y_load", "degree", "K_I_baseline"])?;
    for (i, p) in report.grid.params.iter().enumerate() {
        w.write_record([
            i.to_string(),
            fmt_f64(p.r_int),
            fmt_f64(p.l_ind),
            fmt_f64(p.c_cap),
            fmt_f64(p.y_load),
            fmt_f64(report.grid.degrees[i]),
            fmt_f64(report.baseline_ki[i]),
        ])?;
    }
    w.flush()?;

    let mut w = eig_writer(&dir.join("eigs_ct.csv"))?;
    write_eigs(&mut w, "ct_baseline", &report.eigs_ct)?;
    w.flush()?;
    let mut w = eig_writer(&dir.join("eigs_euler.csv"))?;
    write_eigs(&mut w, &format!("euler_h={}", report.spec.euler_h), &report.eigs_euler)?;
    w.flush()?;
    let mut w = eig_writer(&dir.join("eigs_dt_controlled.csv"))?;
    for run in &report.runs {
        if let Some(eigs) = &run.eigs {
            write_eigs(&mut w, &format!("h={}", run.h), eigs)?;
        }
    }
    w.flush()?;

    #[derive(Serialize)]
    struct Controllers<'a> {
        h: f64,
        nodes: &'a [NodeSynthesis],
    }
    let controllers: Vec<Controllers> = report
        .runs
        .iter()
        .map(|r| Controllers {
            h: r.h,
            nodes: &r.results,
        })
        .collect();
    fs::write(
        dir.join("controllers.json"),
        serde_json::to_string_pretty(&controllers)?,
    )?;

    #[derive(Serialize)]
    struct Failures<'a> {
        h: f64,
        failures: &'a [NodeFailure],
    }
    let failures: Vec<Failures> = report
        .runs
        .iter()
        .map(|r| Failures {
            h: r.h,
            failures: &r.failures,
        })
        .collect();
    fs::write(dir.join("failures.json"), serde_json::to_string_pretty(&failures)?)?;

    if let Some(p) = &report.perturbation {
        p.trajectory
            .write_states_csv(fs::File::create(dir.join("trajectory.csv"))?)?;
        p.trajectory
            .write_storage_csv(fs::File::create(dir.join("storage.csv"))?)?;
    }

    let points = feasible_region_sample(region_d, &RegionGrid::default(), (0.0, 2.0), (0.0, 1.0))?;
    write_region_csv(&points, fs::File::create(dir.join("region.csv"))?)?;

    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(report)?)?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, count: usize) -> Self {
        Self { lo, hi, count }
    }

    pub fn values(&self) -> Vec<f64> {
        match self.count {
            0 => Vec::new(),
            1 => vec![self.lo],
            n => (0..n)
                .map(|k| self.lo + (self.hi - self.lo) * k as f64 / (n - 1) as f64)
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionGrid {
    pub q: Axis,
    pub s: Axis,
    pub r: Axis,
}

impl Default for RegionGrid {
    fn default() -> Self {
        Self {
            q: Axis::new(-6.0, 0.0, 25),
            s: Axis::new(0.0, 1.0, 21),
            r: Axis::new(0.0, 1.0, 21),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionPoint {
    pub q: f64,
    pub s: f64,
    pub r: f64,
    /// Bit `k` set when variant `k` (a = 0, ..., d = 3) holds.
    pub mask: u8,
}

impl RegionPoint {
    pub fn holds(&self, v: Variant) -> bool {
        self.mask & v.bit() != 0
    }
}

/// Scalar local-condition membership over a `(Q, S, R)` grid.
///
/// `α` and the shared `𝒮` are free per point: variant (a) is tested with
/// `α = 2S` when that lies in `alpha_range`, variant (b) with a shared
/// value equal to `S` when it lies in `shared_range`.
pub fn feasible_region_sample(
    d: f64,
    grid: &RegionGrid,
    alpha_range: (f64, f64),
    shared_range: (f64, f64),
) -> Result<Vec<RegionPoint>> {
    let (qs, ss, rs) = (grid.q.values(), grid.s.values(), grid.r.values());
    let mut out = Vec::with_capacity(qs.len() * ss.len() * rs.len());
    for &q in &qs {
        for &s in &ss {
            for &r in &rs {
                let sr = SupplyRate::scalar(q, s, r);
                let mut mask = 0u8;
                let alpha = 2.0 * s;
                if alpha >= alpha_range.0
                    && alpha <= alpha_range.1
                    && decentralized_check(d, &sr, Variant::A, &GlobalParams::alpha(alpha))?.holds
                {
                    mask |= Variant::A.bit();
                }
                if s >= shared_range.0
                    && s <= shared_range.1
                    && decentralized_check(d, &sr, Variant::B, &GlobalParams::shared(Matrix::from_element(1, 1, s)))?
                        .holds
                {
                    mask |= Variant::B.bit();
                }
                for v in [Variant::C, Variant::D] {
                    if decentralized_check(d, &sr, v, &GlobalParams::default())?.holds {
                        mask |= v.bit();
                    }
                }
                out.push(RegionPoint { q, s, r, mask });
            }
        }
    }
    Ok(out)
}

/// CSV with columns `Q, S, R, mask`.
pub fn write_region_csv<W: std::io::Write>(points: &[RegionPoint], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["Q", "S", "R", "mask"])?;
    for p in points {
        out.write_record([fmt_f64(p.q), fmt_f64(p.s), fmt_f64(p.r), p.mask.to_string()])?;
    }
    out.flush()?;
    Ok(())
}
