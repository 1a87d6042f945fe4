//! Dissipative state-feedback synthesis for discrete-time nodes.
//!
//! All routes solve for `P ≻ 0` and `Z`, recover `K = ZP⁻¹` and storage
//! `P⁻¹`, and accept the result only after the closed-loop dissipation
//! matrix has been rebuilt from `(A + BK, G, C)` and found NSD.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dissipativity::{
    dissipation_check_tol, dissipation_lmi_matrix, DualSupplyRate, LinearNode, StorageCertificate, SupplyRate,
    TimeDomain,
};
use crate::error::{Error, Result};
use crate::lmi::{BlockExpr, LmiProblem, LmiSolution, Sense, SolveOptions, SolveStatus, VarId};
use crate::matrix::{definiteness, Definiteness, Matrix, SymMatrix};
use crate::network::{alpha_tilde, dual_decentralized_check, GlobalParams, Variant};

#[derive(Clone, Debug)]
pub struct SynthesisOptions {
    pub solve: SolveOptions,
    /// Joint mode bounds `tr ℛᵢ ≤ trace_cap · dᵢ`.
    pub trace_cap: f64,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            solve: SolveOptions::default(),
            trace_cap: 1e6,
        }
    }
}

#[derive(Clone, Debug)]
pub enum SynthesisMode {
    PrimalFixed(SupplyRate),
    DualFixed(DualSupplyRate),
    JointDecentralized {
        variant: Variant,
        degree: f64,
        params: GlobalParams,
    },
}

#[derive(Clone, Debug)]
pub struct SynthesisRequest {
    pub node: LinearNode,
    pub mode: SynthesisMode,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthesisOutcome {
    pub certificate: StorageCertificate,
    /// Present for dual and joint modes.
    pub dual: Option<DualSupplyRate>,
}

pub fn synthesize(req: &SynthesisRequest, opts: &SynthesisOptions) -> Result<SynthesisOutcome> {
    match &req.mode {
        SynthesisMode::PrimalFixed(sr) => Ok(SynthesisOutcome {
            certificate: primal_control(&req.node, sr, opts)?,
            dual: None,
        }),
        SynthesisMode::DualFixed(dual) => Ok(SynthesisOutcome {
            certificate: dual_control(&req.node, dual, opts)?,
            dual: Some(dual.clone()),
        }),
        SynthesisMode::JointDecentralized {
            variant,
            degree,
            params,
        } => {
            let (certificate, dual) = joint_decentralized_synthesis(&req.node, *variant, *degree, params, opts)?;
            Ok(SynthesisOutcome {
                certificate,
                dual: Some(dual),
            })
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NodeController {
    pub node: usize,
    pub certificate: StorageCertificate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dual: Option<DualSupplyRate>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NodeSynthesisFailure {
    pub node: usize,
    pub reason: String,
    /// Set for failed joint requests on single-channel nodes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub necessary: Option<NecessaryBound>,
}

/// Per-node synthesis results of a whole network, ordered by node.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ControllerSet {
    pub results: Vec<NodeController>,
    pub failures: Vec<NodeSynthesisFailure>,
}

impl ControllerSet {
    pub fn complete(&self) -> bool {
        self.failures.is_empty()
    }

    /// One slot per node in `0..n`; failed nodes get `None`.
    pub fn certificates(&self, n: usize) -> Result<Vec<Option<StorageCertificate>>> {
        let mut out = vec![None; n];
        for r in &self.results {
            let slot = out
                .get_mut(r.node)
                .ok_or_else(|| Error::Dimension(format!("controller for node {} in a network of {n}", r.node)))?;
            *slot = Some(r.certificate.clone());
        }
        Ok(out)
    }
}

/// Solves every request independently, in parallel on `threads` workers
/// (rayon default when `None`). Failures are collected, not propagated.
pub fn synthesize_all(
    requests: &[SynthesisRequest],
    opts: &SynthesisOptions,
    threads: Option<usize>,
) -> Result<ControllerSet> {
    let work = || {
        requests
            .par_iter()
            .enumerate()
            .map(|(node, req)| match synthesize(req, opts) {
                Ok(o) => Ok(NodeController {
                    node,
                    certificate: o.certificate,
                    dual: o.dual,
                }),
                Err(e) => Err(NodeSynthesisFailure {
                    node,
                    reason: e.to_string(),
                    necessary: match &req.mode {
                        SynthesisMode::JointDecentralized {
                            variant,
                            degree,
                            params,
                        } => joint_necessary_bound(&req.node, *variant, *degree, params)
                            .ok()
                            .flatten(),
                        _ => None,
                    },
                }),
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
    let mut set = ControllerSet::default();
    for o in outcomes {
        match o {
            Ok(r) => set.results.push(r),
            Err(f) => set.failures.push(f),
        }
    }
    Ok(set)
}

fn check_node(node: &LinearNode) -> Result<()> {
    node.validate()?;
    if node.domain != TimeDomain::Discrete {
        return Err(Error::Precondition("synthesis needs a discrete-time node".into()));
    }
    if node.has_feedthrough() {
        return Err(Error::Precondition("synthesis needs a feedthrough-free node".into()));
    }
    Ok(())
}

fn require(m: &SymMatrix, mode: Definiteness, what: &str) -> Result<()> {
    let v = definiteness(m, mode, None)?;
    if !v.holds {
        return Err(Error::Precondition(format!(
            "{what} violated (eigenvalues in [{:e}, {:e}])",
            v.min_eig, v.max_eig
        )));
    }
    Ok(())
}

// The dissipation LMIs are nonstrict. An iterate that misses the strict
// margin is still usable when its closed-loop check passes, which the
// caller decides through `certificate`.
fn solved(problem: &LmiProblem, opts: &SolveOptions) -> Result<LmiSolution> {
    problem.solve(opts)
}

fn not_found(sol: &LmiSolution, why: Error) -> Error {
    let why = match why {
        Error::NotFound(m) => m,
        other => other.to_string(),
    };
    match sol.status {
        SolveStatus::Verified => Error::NotFound(why),
        SolveStatus::Unknown => Error::NotFound(format!(
            "solver stopped after {} iterations with margin {:e}; {why}",
            sol.iterations, sol.achieved_margin
        )),
    }
}

fn certificate(
    node: &LinearNode,
    sol: &LmiSolution,
    p: VarId,
    z: VarId,
    supply: SupplyRate,
    variant: &str,
) -> Result<StorageCertificate> {
    let p_mat = sol.assignment.sym(p);
    if !definiteness(&p_mat, Definiteness::PositiveDefinite, None)?.holds {
        return Err(not_found(
            sol,
            Error::NotFound("storage matrix is not positive definite".into()),
        ));
    }
    let storage = p_mat
        .inverse()
        .map_err(|e| not_found(sol, Error::NotFound(format!("storage matrix is not invertible: {e}"))))?;
    let k = sol.assignment.get(z) * storage.as_matrix();
    let cert = StorageCertificate {
        p: p_mat,
        storage,
        k,
        supply,
        margin: sol.achieved_margin,
        variant: variant.into(),
    };
    closed_loop_accept(node, &cert).map_err(|e| not_found(sol, e))?;
    Ok(cert)
}

/// Independent acceptance check of a certificate against its node.
pub fn closed_loop_accept(node: &LinearNode, cert: &StorageCertificate) -> Result<()> {
    if !cert.k.iter().all(|v| v.is_finite()) {
        return Err(Error::NotFound("gain has non-finite entries".into()));
    }
    let m = dissipation_lmi_matrix(node, Some(&cert.k), &cert.supply, &cert.storage)?;
    let tol = dissipation_check_tol(node, &cert.supply, &cert.storage);
    let v = definiteness(&m, Definiteness::NegativeSemidefinite, Some(tol))?;
    if !v.holds {
        return Err(Error::NotFound(format!(
            "closed-loop dissipation check failed (max eigenvalue {:e}, tolerance {:e})",
            v.max_eig, tol
        )));
    }
    Ok(())
}

/// Fixed `(Q, S, R)` with `Q ≺ 0`:
///
/// ```text
/// [ P   AP+BZ   G      0   ]
/// [ ⋆   P       PCᵀS   PCᵀ ]  ⪰ 0,   Q̃ = Q⁻¹
/// [ ⋆   ⋆       R      0   ]
/// [ ⋆   ⋆       ⋆      −Q̃  ]
/// ```
pub fn primal_control(node: &LinearNode, sr: &SupplyRate, opts: &SynthesisOptions) -> Result<StorageCertificate> {
    check_node(node)?;
    if sr.p() != node.p() || sr.m() != node.m() {
        return Err(Error::Dimension("supply does not fit the node".into()));
    }
    require(&sr.q, Definiteness::NegativeDefinite, "Q negative definite")?;
    let (n, r, m, p) = (node.n(), node.r(), node.m(), node.p());
    let q_tilde = sr.q.inverse()?;
    let mut prob = LmiProblem::new();
    let pv = prob.add_symmetric("P", n);
    let zv = prob.add_rectangular("Z", r, n);
    let ct = node.c.transpose();
    let eye_n = Matrix::identity(n, n);
    let lmi = BlockExpr::new(&[n, n, m, p])
        .var(0, pv, 1.0)
        .term(0, 1, &node.a, pv, &eye_n)
        .term(0, 1, &node.b, zv, &eye_n)
        .constant(0, 2, &node.g)
        .var(1, pv, 1.0)
        .term(1, 2, &eye_n, pv, &(&ct * &sr.s))
        .term(1, 3, &eye_n, pv, &ct)
        .constant(2, 2, sr.r.as_matrix())
        .constant(3, 3, &(-q_tilde.into_matrix()))
        .build();
    prob.add_constraint("dissipation", lmi, Sense::Positive);
    prob.add_constraint("P > 0", BlockExpr::new(&[n]).var(0, pv, 1.0).build(), Sense::Positive);
    let sol = solved(&prob, &opts.solve)?;
    certificate(node, &sol, pv, zv, sr.clone(), "fixed")
}

fn dual_lmi(node: &LinearNode, pv: VarId, zv: VarId, q: DualBlock, s: DualBlock, r: DualBlock) -> BlockExpr {
    let (n, p) = (node.n(), node.p());
    let eye_n = Matrix::identity(n, n);
    let eye_p = Matrix::identity(p, p);
    let ct = node.c.transpose();
    let mut e = BlockExpr::new(&[n, n, p])
        .var(0, pv, 1.0)
        .term(1, 0, &node.a, pv, &eye_n)
        .term(1, 0, &node.b, zv, &eye_n)
        .term(0, 2, &eye_n, pv, &ct)
        .var(1, pv, 1.0);
    e = match r {
        DualBlock::Fixed(r) => e.constant(1, 1, &(-(&node.g * r * node.g.transpose()))),
        DualBlock::Var(id) => e.congruence(1, &node.g, id, -1.0),
    };
    e = match s {
        DualBlock::Fixed(s) => e.constant(2, 1, &(s * node.g.transpose())),
        DualBlock::Var(id) => e.term(2, 1, &eye_p, id, &node.g.transpose()),
    };
    match q {
        DualBlock::Fixed(q) => e.constant(2, 2, &(-q)),
        DualBlock::Var(id) => e.var(2, id, -1.0),
    }
}

enum DualBlock<'a> {
    Fixed(&'a Matrix),
    Var(VarId),
}

/// Fixed dual `(𝒬, 𝒮, ℛ)` with `𝒬 ≺ 0`, `ℛ ≻ 0`:
///
/// ```text
/// [ P   (AP+BZ)ᵀ    PCᵀ ]
/// [ ⋆   P − GℛGᵀ    G𝒮ᵀ ]  ⪰ 0
/// [ ⋆   ⋆           −𝒬  ]
/// ```
pub fn dual_control(node: &LinearNode, dual: &DualSupplyRate, opts: &SynthesisOptions) -> Result<StorageCertificate> {
    check_node(node)?;
    if dual.q.dim() != node.p() || dual.r.dim() != node.m() {
        return Err(Error::Dimension("dual supply does not fit the node".into()));
    }
    require(&dual.q, Definiteness::NegativeDefinite, "dual Q negative definite")?;
    require(&dual.r, Definiteness::PositiveDefinite, "dual R positive definite")?;
    let supply = dual.to_primal()?;
    let (n, r) = (node.n(), node.r());
    let mut prob = LmiProblem::new();
    let pv = prob.add_symmetric("P", n);
    let zv = prob.add_rectangular("Z", r, n);
    let lmi = dual_lmi(
        node,
        pv,
        zv,
        DualBlock::Fixed(dual.q.as_matrix()),
        DualBlock::Fixed(&dual.s),
        DualBlock::Fixed(dual.r.as_matrix()),
    )
    .build();
    prob.add_constraint("dissipation", lmi, Sense::Positive);
    prob.add_constraint("P > 0", BlockExpr::new(&[n]).var(0, pv, 1.0).build(), Sense::Positive);
    let sol = solved(&prob, &opts.solve)?;
    certificate(node, &sol, pv, zv, supply, "fixed")
}

/// Solves the dual dissipation LMI jointly with the dual decentralized
/// bounds of `variant` for a node of weighted degree `degree`.
///
/// `𝒮` is fixed for variants (a) and (b) and a symmetric variable for (c)
/// and (d). `𝒬 ≺ 0`, `ℛ ≻ 0` and `tr ℛ ≤ trace_cap · degree` are imposed in
/// every variant.
pub fn joint_decentralized_synthesis(
    node: &LinearNode,
    variant: Variant,
    degree: f64,
    params: &GlobalParams,
    opts: &SynthesisOptions,
) -> Result<(StorageCertificate, DualSupplyRate)> {
    check_node(node)?;
    if !(degree > 0.0) || !degree.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "weighted degree must be positive, got {degree}"
        )));
    }
    let (n, r, m, p) = (node.n(), node.r(), node.m(), node.p());
    let fixed_s = match variant {
        Variant::A => {
            let alpha = params
                .alpha
                .filter(|a| a.is_finite())
                .ok_or_else(|| Error::InvalidArgument("variant a needs a finite alpha".into()))?;
            if p != m {
                return Err(Error::Dimension(
                    "variant a needs as many outputs as coupling inputs".into(),
                ));
            }
            Some(Matrix::identity(p, m) * (0.5 * alpha))
        }
        Variant::B => {
            let s = params
                .shared_s
                .clone()
                .ok_or_else(|| Error::InvalidArgument("variant b needs a shared S matrix".into()))?;
            if s.nrows() != p || s.ncols() != m {
                return Err(Error::Dimension(format!("shared S must be {p}x{m}")));
            }
            let sym = SymMatrix::new(s.clone())?;
            require(
                &sym,
                Definiteness::PositiveSemidefinite,
                "shared S positive semidefinite",
            )?;
            Some(s)
        }
        Variant::C | Variant::D => {
            if p != m {
                return Err(Error::Dimension(format!("variant {} needs square S", variant.letter())));
            }
            None
        }
    };

    let mut prob = LmiProblem::new();
    let pv = prob.add_symmetric("P", n);
    let zv = prob.add_rectangular("Z", r, n);
    let qv = prob.add_symmetric("Qd", p);
    let rv = prob.add_symmetric("Rd", m);
    let sv = if fixed_s.is_none() {
        Some(prob.add_symmetric("Sd", p))
    } else {
        None
    };
    let s_block = match (&fixed_s, sv) {
        (Some(s), _) => DualBlock::Fixed(s),
        (None, Some(id)) => DualBlock::Var(id),
        (None, None) => unreachable!("S is either fixed or a variable"),
    };
    let lmi = dual_lmi(node, pv, zv, DualBlock::Var(qv), s_block, DualBlock::Var(rv)).build();
    prob.add_constraint("dissipation", lmi, Sense::Positive);
    prob.add_constraint("P > 0", BlockExpr::new(&[n]).var(0, pv, 1.0).build(), Sense::Positive);
    prob.add_constraint(
        "dual Q < 0",
        BlockExpr::new(&[p]).var(0, qv, 1.0).build(),
        Sense::Negative,
    );
    prob.add_constraint(
        "dual R > 0",
        BlockExpr::new(&[m]).var(0, rv, 1.0).build(),
        Sense::Positive,
    );
    let cap = opts.trace_cap * degree;
    prob.add_nonstrict(
        "trace cap",
        BlockExpr::new(&[1]).identity(0, cap).trace(0, rv, m, -1.0).build(),
        Sense::Positive,
    );

    let inv_2d = 1.0 / (2.0 * degree);
    let q_lower = BlockExpr::new(&[p]).var(0, qv, 1.0).identity(0, inv_2d);
    match variant {
        Variant::A | Variant::B => {
            prob.add_constraint("dual Q > -I/(2d)", q_lower.build(), Sense::Positive);
            let shift = match variant {
                Variant::A => 2.0 * degree * alpha_tilde(params.alpha.unwrap_or(1.0)),
                _ => 2.0 * degree,
            };
            let e = BlockExpr::new(&[m]).var(0, rv, 1.0).identity(0, -shift).build();
            prob.add_constraint("dual R lower bound", e, Sense::Positive);
        }
        Variant::C => {
            let s = sv.expect("variant c has an S variable");
            prob.add_nonstrict(
                "dual S >= 0",
                BlockExpr::new(&[p]).var(0, s, 1.0).build(),
                Sense::Positive,
            );
            let e = BlockExpr::new(&[p])
                .identity(0, 1.0 / (3.0 * degree))
                .var(0, s, -1.0)
                .build();
            prob.add_constraint("dual S < I/(3d)", e, Sense::Positive);
            prob.add_constraint("dual Q > -I/(2d)", q_lower.build(), Sense::Positive);
            let e = BlockExpr::new(&[m])
                .var(0, rv, 1.0)
                .var(0, s, -1.0)
                .identity(0, -4.0 * degree)
                .build();
            prob.add_constraint("dual R - dual S > 4d I", e, Sense::Positive);
        }
        Variant::D => {
            let s = sv.expect("variant d has an S variable");
            prob.add_nonstrict(
                "dual S >= 0",
                BlockExpr::new(&[p]).var(0, s, 1.0).build(),
                Sense::Positive,
            );
            prob.add_constraint(
                "dual Q - dual S > -I/(2d)",
                q_lower.var(0, s, -1.0).build(),
                Sense::Positive,
            );
            let e = BlockExpr::new(&[m]).var(0, rv, 1.0).var(0, s, -2.0).build();
            prob.add_constraint("dual R > 2 dual S", e, Sense::Positive);
            let e = BlockExpr::new(&[m]).var(0, rv, 1.0).identity(0, -4.0 * degree).build();
            prob.add_constraint("dual R > 4d I", e, Sense::Positive);
        }
    }

    let sol = solved(&prob, &opts.solve)?;
    if sol.status != SolveStatus::Verified {
        return Err(not_found(&sol, Error::NotFound("the joint bounds are not met".into())));
    }
    let s = match (fixed_s, sv) {
        (Some(s), _) => s,
        (None, Some(id)) => sol.assignment.sym(id).into_matrix(),
        (None, None) => unreachable!("S is either fixed or a variable"),
    };
    let dual = DualSupplyRate::new(sol.assignment.sym(qv), s, sol.assignment.sym(rv))?;
    let local = dual_decentralized_check(degree, &dual, variant, params)?;
    if !local.holds {
        let failed: Vec<&str> = local.bounds.iter().filter(|b| !b.holds).map(|b| b.name).collect();
        return Err(Error::NotFound(format!(
            "solved dual supply misses {}",
            failed.join(", ")
        )));
    }
    let supply = dual
        .to_primal()
        .map_err(|e| Error::NotFound(format!("dual supply is not invertible: {e}")))?;
    let cert = certificate(node, &sol, pv, zv, supply, &variant.letter().to_string())?;
    Ok((cert, dual))
}

/// Closed-form necessary condition for joint synthesis on a node with one
/// output and one coupling input.
///
/// With `γ = CG`, the dual LMI forces
/// `−𝒬 ≥ f(ℛ, 𝒮) = (ℛγ² + √(ℛ²γ⁴ + 4γ²𝒮²))/2`, while every variant caps
/// `−𝒬` below `1/(2d)` (variant (d): `1/(2d) − 𝒮`). `required` is the
/// smallest `f` the variant bounds allow and `limit` that cap.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NecessaryBound {
    pub gamma: f64,
    pub required: f64,
    pub limit: f64,
    pub holds: bool,
}

pub fn joint_necessary_bound(
    node: &LinearNode,
    variant: Variant,
    degree: f64,
    params: &GlobalParams,
) -> Result<Option<NecessaryBound>> {
    node.validate()?;
    if node.p() != 1 || node.m() != 1 {
        return Ok(None);
    }
    if !(degree > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "weighted degree must be positive, got {degree}"
        )));
    }
    let gamma = (&node.c * &node.g)[(0, 0)];
    let f = |r: f64, s: f64| {
        let g2 = gamma * gamma;
        0.5 * (r * g2 + (r * r * g2 * g2 + 4.0 * g2 * s * s).sqrt())
    };
    let cap = 1.0 / (2.0 * degree);
    let (required, limit) = match variant {
        Variant::A => {
            let alpha = params
                .alpha
                .ok_or_else(|| Error::InvalidArgument("variant a needs alpha".into()))?;
            (f(2.0 * degree * alpha_tilde(alpha), 0.5 * alpha), cap)
        }
        Variant::B => {
            let s = params
                .shared_s
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("variant b needs a shared S".into()))?[(0, 0)];
            (f(2.0 * degree, s), cap)
        }
        // both are smallest at 𝒮 = 0, where ℛ > 4d
        Variant::C | Variant::D => (f(4.0 * degree, 0.0), cap),
    };
    Ok(Some(NecessaryBound {
        gamma,
        required,
        limit,
        holds: required < limit,
    }))
}
