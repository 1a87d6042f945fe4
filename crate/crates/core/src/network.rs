//! Networks of dissipative nodes coupled through `u = Hy`.
//!
//! Global stability is certified by `M = Q + SH + HᵀSᵀ + HᵀRH ≺ 0` on the
//! block-diagonal supply matrices. Under Laplacian coupling, the per-node
//! [`decentralized_check`] conditions are sufficient for it, and the dual
//! forms mirror them on the dual supply triples.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dissipativity::{dualize_supply, DualSupplyRate, LinearNode, StorageCertificate, SupplyRate, TimeDomain};
use crate::error::{Error, Result};
use crate::graph::{seeded_rng, WeightedGraph};
use crate::matrix::{
    block_diag, definiteness, eig_general, kron, pinv_sym_psd, rows, Complex, Definiteness, DefinitenessVerdict,
    Matrix, SymMatrix, Vector,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Interconnection {
    General {
        #[serde(rename = "H", with = "rows")]
        h: Matrix,
    },
    /// `H = −(𝓛 ⊗ I_block)`.
    Laplacian { graph: WeightedGraph, block: usize },
    /// `H = (𝒜 − 𝒜ᵀ) ⊗ I_block` for a possibly directed adjacency.
    SkewSymmetric {
        #[serde(with = "rows")]
        adjacency: Matrix,
        block: usize,
    },
    /// `H = [[0, I], [I, 0]]` between two nodes.
    Feedback2 { block: usize },
}

impl Interconnection {
    /// Diagnostics about degenerate configurations.
    pub fn warnings(&self) -> Vec<String> {
        match self {
            Interconnection::SkewSymmetric { adjacency, .. }
                if adjacency.is_square() && (adjacency - adjacency.transpose()).amax() == 0.0 =>
            {
                vec!["skew-symmetric interconnection of a symmetric adjacency is identically zero".into()]
            }
            _ => Vec::new(),
        }
    }

    pub fn n_nodes(&self) -> Option<usize> {
        match self {
            Interconnection::General { .. } => None,
            Interconnection::Laplacian { graph, .. } => Some(graph.n_nodes()),
            Interconnection::SkewSymmetric { adjacency, .. } => Some(adjacency.nrows()),
            Interconnection::Feedback2 { .. } => Some(2),
        }
    }
}

/// Builds `H` for `n_nodes` nodes with `m` channels each.
pub fn build_h(ic: &Interconnection, n_nodes: usize, m: usize) -> Result<Matrix> {
    let check_nodes = |k: usize| {
        if k != n_nodes {
            Err(Error::Dimension(format!(
                "interconnection has {k} nodes, network has {n_nodes}"
            )))
        } else {
            Ok(())
        }
    };
    let check_block = |b: usize| {
        if b != m {
            Err(Error::Dimension(format!(
                "interconnection block {b} differs from node channel count {m}"
            )))
        } else {
            Ok(())
        }
    };
    match ic {
        Interconnection::General { h } => {
            if h.nrows() != n_nodes * m || h.ncols() != n_nodes * m {
                return Err(Error::Dimension(format!(
                    "H is {}x{}, expected {}x{}",
                    h.nrows(),
                    h.ncols(),
                    n_nodes * m,
                    n_nodes * m
                )));
            }
            Ok(h.clone())
        }
        Interconnection::Laplacian { graph, block } => {
            check_nodes(graph.n_nodes())?;
            check_block(*block)?;
            Ok(-graph.extended_laplacian(*block).into_matrix())
        }
        Interconnection::SkewSymmetric { adjacency, block } => {
            if !adjacency.is_square() {
                return Err(Error::NotSquare {
                    rows: adjacency.nrows(),
                    cols: adjacency.ncols(),
                });
            }
            check_nodes(adjacency.nrows())?;
            check_block(*block)?;
            Ok(kron(
                &(adjacency - adjacency.transpose()),
                &Matrix::identity(*block, *block),
            ))
        }
        Interconnection::Feedback2 { block } => {
            check_nodes(2)?;
            check_block(*block)?;
            let b = *block;
            let mut h = Matrix::zeros(2 * b, 2 * b);
            for i in 0..b {
                h[(i, b + i)] = 1.0;
                h[(b + i, i)] = 1.0;
            }
            Ok(h)
        }
    }
}

/// Block-diagonal stacking of per-node supply rates.
pub fn stack_supplies(supplies: &[SupplyRate]) -> SupplyRate {
    let q: Vec<Matrix> = supplies.iter().map(|s| s.q.as_matrix().clone()).collect();
    let s: Vec<Matrix> = supplies.iter().map(|s| s.s.clone()).collect();
    let r: Vec<Matrix> = supplies.iter().map(|s| s.r.as_matrix().clone()).collect();
    SupplyRate {
        q: SymMatrix::from_symmetrized(block_diag(&q)),
        s: block_diag(&s),
        r: SymMatrix::from_symmetrized(block_diag(&r)),
    }
}

pub fn stack_duals(duals: &[DualSupplyRate]) -> DualSupplyRate {
    let q: Vec<Matrix> = duals.iter().map(|s| s.q.as_matrix().clone()).collect();
    let s: Vec<Matrix> = duals.iter().map(|s| s.s.clone()).collect();
    let r: Vec<Matrix> = duals.iter().map(|s| s.r.as_matrix().clone()).collect();
    DualSupplyRate {
        q: SymMatrix::from_symmetrized(block_diag(&q)),
        s: block_diag(&s),
        r: SymMatrix::from_symmetrized(block_diag(&r)),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GlobalVerdict {
    #[serde(skip)]
    pub matrix: SymMatrix,
    pub verdict: DefinitenessVerdict,
}

/// `M = Q + SH + HᵀSᵀ + HᵀRH`, checked for negative definiteness.
pub fn global_condition(supplies: &[SupplyRate], h: &Matrix, tol: Option<f64>) -> Result<GlobalVerdict> {
    let g = stack_supplies(supplies);
    if h.nrows() != g.m() || h.ncols() != g.p() {
        return Err(Error::Dimension(format!(
            "H is {}x{}, stacked supply needs {}x{}",
            h.nrows(),
            h.ncols(),
            g.m(),
            g.p()
        )));
    }
    let sh = &g.s * h;
    let m = g.q.as_matrix() + &sh + sh.transpose() + h.transpose() * g.r.as_matrix() * h;
    let matrix = SymMatrix::from_symmetrized(m);
    let verdict = definiteness(&matrix, Definiteness::NegativeDefinite, tol)?;
    Ok(GlobalVerdict { matrix, verdict })
}

/// `[−Hᵀ; I]ᵀ [𝒬 𝒮; ⋆ ℛ] [−Hᵀ; I] ≻ 0`, which expands to
/// `H𝒬Hᵀ − H𝒮 − 𝒮ᵀHᵀ + ℛ`. Requires `𝒬ᵢ ≺ 0` and `ℛᵢ ≻ 0`.
pub fn dual_global_condition(duals: &[DualSupplyRate], h: &Matrix, tol: Option<f64>) -> Result<GlobalVerdict> {
    for (i, d) in duals.iter().enumerate() {
        if !definiteness(&d.q, Definiteness::NegativeDefinite, None)?.holds {
            return Err(Error::Precondition(format!(
                "dual Q of node {i} is not negative definite"
            )));
        }
        if !definiteness(&d.r, Definiteness::PositiveDefinite, None)?.holds {
            return Err(Error::Precondition(format!(
                "dual R of node {i} is not positive definite"
            )));
        }
    }
    let g = stack_duals(duals);
    if h.nrows() != g.r.dim() || h.ncols() != g.q.dim() {
        return Err(Error::Dimension(format!(
            "H is {}x{}, stacked dual supply needs {}x{}",
            h.nrows(),
            h.ncols(),
            g.r.dim(),
            g.q.dim()
        )));
    }
    let hs = h * &g.s;
    let m = h * g.q.as_matrix() * h.transpose() - &hs - hs.transpose() + g.r.as_matrix();
    let matrix = SymMatrix::from_symmetrized(m);
    let verdict = definiteness(&matrix, Definiteness::PositiveDefinite, tol)?;
    Ok(GlobalVerdict { matrix, verdict })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    A,
    B,
    C,
    D,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::A, Variant::B, Variant::C, Variant::D];

    pub fn letter(self) -> char {
        match self {
            Variant::A => 'a',
            Variant::B => 'b',
            Variant::C => 'c',
            Variant::D => 'd',
        }
    }

    pub fn bit(self) -> u8 {
        1 << (self as u8)
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a" | "A" => Ok(Variant::A),
            "b" | "B" => Ok(Variant::B),
            "c" | "C" => Ok(Variant::C),
            "d" | "D" => Ok(Variant::D),
            _ => Err(Error::InvalidArgument(format!(
                "unknown variant '{s}', expected a, b, c or d"
            ))),
        }
    }
}

/// Shared network-wide parameters: `α` for variant (a) and `𝒮` for (b).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GlobalParams {
    pub alpha: Option<f64>,
    #[serde(default, with = "rows::option", skip_serializing_if = "Option::is_none")]
    pub shared_s: Option<Matrix>,
}

impl GlobalParams {
    pub fn alpha(alpha: f64) -> Self {
        Self {
            alpha: Some(alpha),
            shared_s: None,
        }
    }

    pub fn shared(s: Matrix) -> Self {
        Self {
            alpha: None,
            shared_s: Some(s),
        }
    }

    fn require_alpha(&self) -> Result<f64> {
        self.alpha
            .filter(|a| a.is_finite())
            .ok_or_else(|| Error::InvalidArgument("variant a needs a finite alpha".into()))
    }

    fn require_shared(&self, m: usize) -> Result<SymMatrix> {
        let s = self
            .shared_s
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("variant b needs a shared S matrix".into()))?;
        if s.nrows() != m || s.ncols() != m {
            return Err(Error::Dimension(format!("shared S must be {m}x{m}")));
        }
        SymMatrix::new(s.clone())
    }
}

pub fn alpha_tilde(alpha: f64) -> f64 {
    (1.0 - alpha).max(0.0)
}

/// One named matrix inequality of a decentralized test, reported as the
/// minimum eigenvalue of its "must be positive" side.
#[derive(Clone, Debug, Serialize)]
pub struct Bound {
    pub name: &'static str,
    pub min_eig: f64,
    pub strict: bool,
    pub holds: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct LocalVerdict {
    pub variant: Variant,
    pub holds: bool,
    pub bounds: Vec<Bound>,
}

fn positive(name: &'static str, m: &SymMatrix, strict: bool) -> Result<Bound> {
    let mode = if strict {
        Definiteness::PositiveDefinite
    } else {
        Definiteness::PositiveSemidefinite
    };
    let v = definiteness(m, mode, None)?;
    Ok(Bound {
        name,
        min_eig: v.min_eig,
        strict,
        holds: v.holds,
    })
}

fn equals(name: &'static str, a: &Matrix, b: &Matrix) -> Bound {
    let diff = if a.shape() == b.shape() {
        (a - b).amax()
    } else {
        f64::INFINITY
    };
    let tol = 1e-9 * (1.0 + a.amax().max(b.amax()));
    Bound {
        name,
        min_eig: -diff,
        strict: false,
        holds: diff <= tol,
    }
}

fn square_sym(name: &'static str, s: &Matrix) -> std::result::Result<SymMatrix, Bound> {
    if !s.is_square() {
        return Err(Bound {
            name,
            min_eig: f64::NEG_INFINITY,
            strict: false,
            holds: false,
        });
    }
    SymMatrix::new(s.clone()).map_err(|_| Bound {
        name,
        min_eig: -(s - s.transpose()).amax(),
        strict: false,
        holds: false,
    })
}

fn finish(variant: Variant, bounds: Vec<Bound>) -> LocalVerdict {
    LocalVerdict {
        variant,
        holds: bounds.iter().all(|b| b.holds),
        bounds,
    }
}

fn check_degree(d: f64) -> Result<()> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "weighted degree must be positive, got {d}"
        )));
    }
    Ok(())
}

/// Per-node sufficient conditions for the global inequality under
/// Laplacian coupling, for a node of weighted degree `d`:
///
/// * (a) `S = ½αI`, `0 ≺ R ≺ I/(2d)`, `Q ≺ −2dα̃I` with `α̃ = max(1 − α, 0)`
/// * (b) `S = 𝒮 ⪰ 0`, `0 ≺ R ≺ I/(2d)`, `Q ≺ −2dI`
/// * (c) `0 ⪯ S ≺ I/(3d)`, `0 ≺ R ≺ I/(2d)`, `Q + S ≺ −4dI`
/// * (d) `S ⪰ 0`, `R + S ≺ I/(2d)`, `Q ≺ −2S`, `Q ≺ −4dI`
pub fn decentralized_check(d: f64, sr: &SupplyRate, variant: Variant, params: &GlobalParams) -> Result<LocalVerdict> {
    check_degree(d)?;
    let m = sr.m();
    let p = sr.p();
    let eye = SymMatrix::identity(m);
    let eye_p = SymMatrix::identity(p);
    let r_upper = eye.scale(1.0 / (2.0 * d)).sub(&sr.r);
    let mut bounds = Vec::new();
    match variant {
        Variant::A => {
            let alpha = params.require_alpha()?;
            bounds.push(equals(
                "S = alpha/2 I",
                &sr.s,
                &(Matrix::identity(p, m) * (0.5 * alpha)),
            ));
            bounds.push(positive("R > 0", &sr.r, true)?);
            bounds.push(positive("R < I/(2d)", &r_upper, true)?);
            let q_bound = eye_p.scale(-2.0 * d * alpha_tilde(alpha)).sub(&sr.q);
            bounds.push(positive("Q < -2d alpha~ I", &q_bound, true)?);
        }
        Variant::B => {
            let shared = params.require_shared(m)?;
            bounds.push(equals("S = shared S", &sr.s, shared.as_matrix()));
            bounds.push(positive("shared S >= 0", &shared, false)?);
            bounds.push(positive("R > 0", &sr.r, true)?);
            bounds.push(positive("R < I/(2d)", &r_upper, true)?);
            bounds.push(positive("Q < -2d I", &eye_p.scale(-2.0 * d).sub(&sr.q), true)?);
        }
        Variant::C => match square_sym("S symmetric", &sr.s) {
            Err(b) => bounds.push(b),
            Ok(s) => {
                bounds.push(positive("S >= 0", &s, false)?);
                bounds.push(positive("S < I/(3d)", &eye.scale(1.0 / (3.0 * d)).sub(&s), true)?);
                bounds.push(positive("R > 0", &sr.r, true)?);
                bounds.push(positive("R < I/(2d)", &r_upper, true)?);
                let qs = eye.scale(-4.0 * d).sub(&sr.q).sub(&s);
                bounds.push(positive("Q + S < -4d I", &qs, true)?);
            }
        },
        Variant::D => match square_sym("S symmetric", &sr.s) {
            Err(b) => bounds.push(b),
            Ok(s) => {
                bounds.push(positive("S >= 0", &s, false)?);
                bounds.push(positive("R + S < I/(2d)", &r_upper.sub(&s), true)?);
                bounds.push(positive("Q < -2S", &s.scale(-2.0).sub(&sr.q), true)?);
                bounds.push(positive("Q < -4d I", &eye.scale(-4.0 * d).sub(&sr.q), true)?);
            }
        },
    }
    Ok(finish(variant, bounds))
}

/// Dual counterparts on `(𝒬, 𝒮, ℛ)`:
///
/// * (a) `𝒮 = ½αI`, `−I/(2d) ≺ 𝒬 ≺ 0`, `ℛ ≻ 2dα̃I`
/// * (b) `𝒮 = 𝒮_shared ⪰ 0`, `−I/(2d) ≺ 𝒬 ≺ 0`, `ℛ ≻ 2dI`
/// * (c) `0 ⪯ 𝒮 ≺ I/(3d)`, `−I/(2d) ≺ 𝒬 ≺ 0`, `ℛ − 𝒮 ≻ 4dI`
/// * (d) `𝒮 ⪰ 0`, `𝒬 − 𝒮 ≻ −I/(2d)`, `ℛ ≻ 2𝒮`, `ℛ ≻ 4dI`
pub fn dual_decentralized_check(
    d: f64,
    dual: &DualSupplyRate,
    variant: Variant,
    params: &GlobalParams,
) -> Result<LocalVerdict> {
    check_degree(d)?;
    let p = dual.q.dim();
    let m = dual.r.dim();
    let eye_p = SymMatrix::identity(p);
    let eye_m = SymMatrix::identity(m);
    let q_lower = dual.q.add(&eye_p.scale(1.0 / (2.0 * d)));
    let q_neg = dual.q.scale(-1.0);
    let mut bounds = Vec::new();
    match variant {
        Variant::A => {
            let alpha = params.require_alpha()?;
            bounds.push(equals(
                "dual S = alpha/2 I",
                &dual.s,
                &(Matrix::identity(p, m) * (0.5 * alpha)),
            ));
            bounds.push(positive("dual Q > -I/(2d)", &q_lower, true)?);
            bounds.push(positive("dual Q < 0", &q_neg, true)?);
            let r = dual.r.sub(&eye_m.scale(2.0 * d * alpha_tilde(alpha)));
            bounds.push(positive("dual R > 2d alpha~ I", &r, true)?);
        }
        Variant::B => {
            let shared = params.require_shared(p)?;
            bounds.push(equals("dual S = shared S", &dual.s, shared.as_matrix()));
            bounds.push(positive("shared S >= 0", &shared, false)?);
            bounds.push(positive("dual Q > -I/(2d)", &q_lower, true)?);
            bounds.push(positive("dual Q < 0", &q_neg, true)?);
            bounds.push(positive("dual R > 2d I", &dual.r.sub(&eye_m.scale(2.0 * d)), true)?);
        }
        Variant::C => match square_sym("dual S symmetric", &dual.s) {
            Err(b) => bounds.push(b),
            Ok(s) => {
                bounds.push(positive("dual S >= 0", &s, false)?);
                bounds.push(positive(
                    "dual S < I/(3d)",
                    &eye_p.scale(1.0 / (3.0 * d)).sub(&s),
                    true,
                )?);
                bounds.push(positive("dual Q > -I/(2d)", &q_lower, true)?);
                bounds.push(positive("dual Q < 0", &q_neg, true)?);
                let rs = dual.r.sub(&s).sub(&eye_m.scale(4.0 * d));
                bounds.push(positive("dual R - dual S > 4d I", &rs, true)?);
            }
        },
        Variant::D => match square_sym("dual S symmetric", &dual.s) {
            Err(b) => bounds.push(b),
            Ok(s) => {
                bounds.push(positive("dual S >= 0", &s, false)?);
                bounds.push(positive("dual Q - dual S > -I/(2d)", &q_lower.sub(&s), true)?);
                bounds.push(positive("dual R > 2 dual S", &dual.r.sub(&s.scale(2.0)), true)?);
                bounds.push(positive("dual R > 4d I", &dual.r.sub(&eye_m.scale(4.0 * d)), true)?);
            }
        },
    }
    Ok(finish(variant, bounds))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Comparison {
    /// `CᵀLC − CᵀLᵀR̂LC + Q̂ ≻ 0`
    Lemma5,
    /// `L − LᵀR̂L + Q̂ ≻ 0`
    Lemma6,
    /// diagonal `Q̂ᵢ, R̂ᵢ` with `0 ≺ R̂ᵢ ≺ I/(2dᵢ)`, `0 ≺ Q̂ᵢ ≺ dᵢI`
    Prop1,
}

/// Virtual-output stability tests under Laplacian coupling `L = 𝓛 ⊗ I_block`.
///
/// Only the quadratic-storage reading of the output-strict passivity result
/// is implemented.
pub fn comparison_conditions(
    graph: &WeightedGraph,
    block: usize,
    c: Option<&Matrix>,
    q_hat: &SymMatrix,
    r_hat: &SymMatrix,
    which: Comparison,
) -> Result<DefinitenessVerdict> {
    let l = graph.extended_laplacian(block).into_matrix();
    let nm = l.nrows();
    if r_hat.dim() != nm {
        return Err(Error::Dimension(format!("R-hat must be {nm}x{nm}")));
    }
    match which {
        Comparison::Lemma5 => {
            let c = c.ok_or_else(|| Error::InvalidArgument("the state-space comparison needs C".into()))?;
            if c.nrows() != nm || q_hat.dim() != c.ncols() {
                return Err(Error::Dimension("C must be (N·m) x n and Q-hat n x n".into()));
            }
            let lc = &l * c;
            let m = c.transpose() * &lc - lc.transpose() * r_hat.as_matrix() * &lc + q_hat.as_matrix();
            definiteness(&SymMatrix::from_symmetrized(m), Definiteness::PositiveDefinite, None)
        }
        Comparison::Lemma6 => {
            if q_hat.dim() != nm {
                return Err(Error::Dimension(format!("Q-hat must be {nm}x{nm}")));
            }
            let m = &l - l.transpose() * r_hat.as_matrix() * &l + q_hat.as_matrix();
            definiteness(&SymMatrix::from_symmetrized(m), Definiteness::PositiveDefinite, None)
        }
        Comparison::Prop1 => {
            if q_hat.dim() != nm {
                return Err(Error::Dimension(format!("Q-hat must be {nm}x{nm}")));
            }
            let off_diag = |m: &SymMatrix| {
                let mut a = m.as_matrix().clone();
                a.fill_diagonal(0.0);
                a.amax()
            };
            let degrees = graph.degrees();
            let mut worst = f64::INFINITY;
            let diagonal = off_diag(q_hat) == 0.0 && off_diag(r_hat) == 0.0;
            for (k, _) in q_hat.as_matrix().diagonal().iter().enumerate() {
                let d = degrees[k / block];
                let q = q_hat[(k, k)];
                let r = r_hat[(k, k)];
                worst = worst.min(q).min(d - q).min(r).min(1.0 / (2.0 * d) - r);
            }
            let tol = crate::matrix::default_tol(0.0);
            if !diagonal {
                worst = worst.min(-off_diag(q_hat).max(off_diag(r_hat)));
            }
            Ok(DefinitenessVerdict {
                kind: if diagonal && worst > tol {
                    Definiteness::PositiveDefinite
                } else {
                    Definiteness::Indefinite
                },
                holds: diagonal && worst > tol,
                min_eig: worst,
                max_eig: worst,
                tol_used: tol,
            })
        }
    }
}

/// Necessary condition for the global inequality to admit any `H`:
/// `S R† Sᵀ − Q ≻ 0`.
pub fn qmi_nonempty_check(sr: &SupplyRate) -> Result<DefinitenessVerdict> {
    let rp = pinv_sym_psd_any(&sr.r)?;
    let m = &sr.s * rp.as_matrix() * sr.s.transpose() - sr.q.as_matrix();
    definiteness(&SymMatrix::from_symmetrized(m), Definiteness::PositiveDefinite, None)
}

// eigen pseudoinverse that also handles indefinite R
fn pinv_sym_psd_any(r: &SymMatrix) -> Result<SymMatrix> {
    if r.dim() == 0 {
        return Ok(r.clone());
    }
    let e = r.eig()?;
    let big = e.spectral_norm();
    if e.min() >= -1e-10 * big.max(1e-300) {
        return pinv_sym_psd(r);
    }
    let cut = 1e-10 * big;
    Ok(SymMatrix::from_symmetrized(e.map(|v| {
        if v.abs() > cut {
            1.0 / v
        } else {
            0.0
        }
    })))
}

/// `x⁺ = (A + BK + GHC)x` for the stacked linear network.
pub fn assemble_closed_loop(nodes: &[LinearNode], gains: &[Option<Matrix>], h: &Matrix) -> Result<Matrix> {
    if gains.len() != nodes.len() {
        return Err(Error::Dimension("one gain slot per node is required".into()));
    }
    let mut blocks = Vec::with_capacity(nodes.len());
    for (i, (node, k)) in nodes.iter().zip(gains).enumerate() {
        let k = k
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument(format!("node {i} has no controller")))?;
        blocks.push(node.closed_loop(Some(k))?);
    }
    let a = block_diag(&blocks);
    let g = block_diag(&nodes.iter().map(|n| n.g.clone()).collect::<Vec<_>>());
    let c = block_diag(&nodes.iter().map(|n| n.c.clone()).collect::<Vec<_>>());
    if h.nrows() != g.ncols() || h.ncols() != c.nrows() {
        return Err(Error::Dimension(format!(
            "H is {}x{}, network needs {}x{}",
            h.nrows(),
            h.ncols(),
            g.ncols(),
            c.nrows()
        )));
    }
    Ok(a + g * h * c)
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityReport {
    #[serde(skip)]
    pub eigs: Vec<Complex<f64>>,
    pub spectral_abscissa: f64,
    pub spectral_radius: f64,
    pub stable: bool,
    pub domain: TimeDomain,
}

/// Continuous time: stable iff `max Re λ < −tol`. Discrete time: stable iff
/// `max |λ| < 1 − tol`.
pub fn stability_report(m: &Matrix, domain: TimeDomain, tol: f64) -> Result<StabilityReport> {
    let eigs = eig_general(m)?;
    let spectral_abscissa = eigs.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let spectral_radius = eigs.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let stable = match domain {
        TimeDomain::Continuous => spectral_abscissa < -tol,
        TimeDomain::Discrete => spectral_radius < 1.0 - tol,
    };
    Ok(StabilityReport {
        eigs,
        spectral_abscissa,
        spectral_radius,
        stable,
        domain,
    })
}

pub type UpdateFn = Arc<dyn Fn(&Vector, &Vector) -> Vector + Send + Sync>;
pub type OutputFn = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;

/// A caller-supplied discrete-time node `x⁺ = f(x, u)`, `y = h(x)` with
/// `f(0, 0) = 0` and `h(0) = 0`.
#[derive(Clone)]
pub struct NonlinearNode {
    pub state_dim: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    update: UpdateFn,
    output: OutputFn,
}

impl std::fmt::Debug for NonlinearNode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NonlinearNode")
            .field("state_dim", &self.state_dim)
            .field("input_dim", &self.input_dim)
            .field("output_dim", &self.output_dim)
            .finish_non_exhaustive()
    }
}

impl NonlinearNode {
    pub fn new(
        state_dim: usize,
        input_dim: usize,
        output_dim: usize,
        update: UpdateFn,
        output: OutputFn,
    ) -> Result<Self> {
        let node = Self {
            state_dim,
            input_dim,
            output_dim,
            update,
            output,
        };
        let x0 = node.step(&Vector::zeros(state_dim), &Vector::zeros(input_dim))?;
        let y0 = node.observe(&Vector::zeros(state_dim))?;
        if x0.amax() > 1e-12 || y0.amax() > 1e-12 {
            return Err(Error::InvalidArgument("nonlinear node must fix the origin".into()));
        }
        Ok(node)
    }

    pub fn step(&self, x: &Vector, u: &Vector) -> Result<Vector> {
        let xp = (self.update)(x, u);
        if xp.len() != self.state_dim {
            return Err(Error::Dimension(format!(
                "nonlinear update returned {} states, expected {}",
                xp.len(),
                self.state_dim
            )));
        }
        Ok(xp)
    }

    pub fn observe(&self, x: &Vector) -> Result<Vector> {
        let y = (self.output)(x);
        if y.len() != self.output_dim {
            return Err(Error::Dimension(format!(
                "nonlinear output returned {} values, expected {}",
                y.len(),
                self.output_dim
            )));
        }
        Ok(y)
    }
}

#[derive(Clone, Debug)]
pub enum Node {
    Linear(LinearNode),
    Nonlinear(NonlinearNode),
}

impl Node {
    pub fn state_dim(&self) -> usize {
        match self {
            Node::Linear(n) => n.n(),
            Node::Nonlinear(n) => n.state_dim,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Node::Linear(n) => n.m(),
            Node::Nonlinear(n) => n.input_dim,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Node::Linear(n) => n.p(),
            Node::Nonlinear(n) => n.output_dim,
        }
    }
}

#[derive(Clone, Debug)]
pub struct NetworkModel {
    pub nodes: Vec<Node>,
    pub interconnection: Interconnection,
    pub h: Matrix,
    pub controllers: Vec<Option<Matrix>>,
    pub certificates: Vec<Option<StorageCertificate>>,
    pub supplies: Vec<SupplyRate>,
}

impl NetworkModel {
    pub fn new(nodes: Vec<Node>, interconnection: Interconnection) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidArgument("network needs at least one node".into()));
        }
        let m = nodes[0].input_dim();
        let uniform = nodes.iter().all(|n| n.input_dim() == m && n.output_dim() == m);
        let h = match (&interconnection, uniform) {
            (Interconnection::General { h }, _) => {
                let mi: usize = nodes.iter().map(Node::input_dim).sum();
                let pi: usize = nodes.iter().map(Node::output_dim).sum();
                if h.nrows() != mi || h.ncols() != pi {
                    return Err(Error::Dimension(format!("H must be {mi}x{pi}")));
                }
                h.clone()
            }
            (_, false) => {
                return Err(Error::Dimension(
                    "structured interconnections need equal input and output sizes on every node".into(),
                ))
            }
            (ic, true) => build_h(ic, nodes.len(), m)?,
        };
        for node in &nodes {
            if let Node::Linear(l) = node {
                l.validate()?;
            }
        }
        let n = nodes.len();
        Ok(Self {
            nodes,
            interconnection,
            h,
            controllers: vec![None; n],
            certificates: vec![None; n],
            supplies: Vec::new(),
        })
    }

    pub fn linear(nodes: Vec<LinearNode>, interconnection: Interconnection) -> Result<Self> {
        Self::new(nodes.into_iter().map(Node::Linear).collect(), interconnection)
    }

    pub fn with_controllers(mut self, gains: Vec<Option<Matrix>>) -> Result<Self> {
        if gains.len() != self.nodes.len() {
            return Err(Error::Dimension("one controller slot per node".into()));
        }
        self.controllers = gains;
        Ok(self)
    }

    /// Installs certificates and their gains.
    pub fn with_certificates(mut self, certs: Vec<Option<StorageCertificate>>) -> Result<Self> {
        if certs.len() != self.nodes.len() {
            return Err(Error::Dimension("one certificate slot per node".into()));
        }
        for (i, c) in certs.iter().enumerate() {
            if let Some(c) = c {
                self.controllers[i] = Some(c.k.clone());
            }
        }
        self.supplies = certs.iter().flatten().map(|c| c.supply.clone()).collect();
        self.certificates = certs;
        Ok(self)
    }

    pub fn state_dim(&self) -> usize {
        self.nodes.iter().map(Node::state_dim).sum()
    }

    pub fn linear_nodes(&self) -> Option<Vec<LinearNode>> {
        self.nodes
            .iter()
            .map(|n| match n {
                Node::Linear(l) => Some(l.clone()),
                Node::Nonlinear(_) => None,
            })
            .collect()
    }

    pub fn closed_loop_matrix(&self) -> Result<Matrix> {
        let nodes = self
            .linear_nodes()
            .ok_or_else(|| Error::InvalidArgument("closed-loop matrix needs linear nodes".into()))?;
        assemble_closed_loop(&nodes, &self.controllers, &self.h)
    }

    pub fn storage(&self, x: &Vector) -> Option<f64> {
        let mut total = 0.0;
        let mut off = 0;
        for (node, cert) in self.nodes.iter().zip(&self.certificates) {
            let n = node.state_dim();
            let c = cert.as_ref()?;
            total += c.storage_value(&x.rows(off, n).into_owned());
            off += n;
        }
        Some(total)
    }
}

#[derive(Clone, Debug)]
pub struct RecordOptions {
    pub states: bool,
    pub outputs: bool,
    pub inputs: bool,
    pub storage: bool,
    /// Sampling period used for the `time_s` column.
    pub dt: f64,
}

impl Default for RecordOptions {
    fn default() -> Self {
        Self {
            states: true,
            outputs: false,
            inputs: false,
            storage: true,
            dt: 1.0,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub dt: f64,
    /// Per node state dimensions, used to label CSV rows.
    pub state_dims: Vec<usize>,
    pub states: Vec<Vector>,
    pub outputs: Vec<Vector>,
    pub inputs: Vec<Vector>,
    pub storage: Option<Vec<f64>>,
    /// Set when the run stopped on a non-finite or exploding state.
    pub truncated: Option<String>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn final_state(&self) -> Option<&Vector> {
        self.states.last()
    }

    /// CSV with columns `step, time_s, node, state_index, value`.
    pub fn write_states_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["step", "time_s", "node", "state_index", "value"])?;
        for (k, x) in self.states.iter().enumerate() {
            let mut off = 0;
            for (node, &n) in self.state_dims.iter().enumerate() {
                for j in 0..n {
                    out.write_record([
                        k.to_string(),
                        fmt_f64(k as f64 * self.dt),
                        node.to_string(),
                        j.to_string(),
                        fmt_f64(x[off + j]),
                    ])?;
                }
                off += n;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// CSV with columns `step, V`.
    pub fn write_storage_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let storage = self
            .storage
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("trajectory has no storage column".into()))?;
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["step", "V"])?;
        for (k, v) in storage.iter().enumerate() {
            out.write_record([k.to_string(), fmt_f64(*v)])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Round-trip float formatting (17 significant digits).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

const BLOWUP: f64 = 1e150;

/// Iterates `uᵏ = Hyᵏ`, then every node's update.
pub fn simulate(net: &NetworkModel, x0: &Vector, steps: usize, record: &RecordOptions) -> Result<Trajectory> {
    let n = net.state_dim();
    if x0.len() != n {
        return Err(Error::Dimension(format!(
            "initial state has {} entries, network has {n}",
            x0.len()
        )));
    }
    let mut closed = Vec::with_capacity(net.nodes.len());
    for (i, node) in net.nodes.iter().enumerate() {
        if let Node::Linear(l) = node {
            if l.domain != TimeDomain::Discrete {
                return Err(Error::InvalidArgument(format!(
                    "node {i} is continuous time; discretize it first"
                )));
            }
            if l.has_feedthrough() {
                return Err(Error::InvalidArgument(format!(
                    "node {i} has feedthrough, which makes u = Hy implicit"
                )));
            }
            closed.push(Some(l.closed_loop(net.controllers[i].as_ref())?));
        } else {
            closed.push(None);
        }
    }
    let with_storage = record.storage && net.certificates.iter().all(Option::is_some);
    let mut traj = Trajectory {
        dt: record.dt,
        state_dims: net.nodes.iter().map(Node::state_dim).collect(),
        storage: if with_storage { Some(Vec::new()) } else { None },
        ..Default::default()
    };
    let mut x = x0.clone();
    for k in 0..=steps {
        let mut y_parts = Vec::with_capacity(net.nodes.len());
        let mut off = 0;
        for node in &net.nodes {
            let ni = node.state_dim();
            let xi = x.rows(off, ni).into_owned();
            y_parts.push(match node {
                Node::Linear(l) => &l.c * &xi,
                Node::Nonlinear(nl) => nl.observe(&xi)?,
            });
            off += ni;
        }
        let y = Vector::from_iterator(
            y_parts.iter().map(|v| v.len()).sum(),
            y_parts.iter().flat_map(|v| v.iter().copied()),
        );
        let u = &net.h * &y;
        if record.states {
            traj.states.push(x.clone());
        }
        if record.outputs {
            traj.outputs.push(y.clone());
        }
        if record.inputs {
            traj.inputs.push(u.clone());
        }
        if let Some(s) = traj.storage.as_mut() {
            s.push(net.storage(&x).unwrap_or(f64::NAN));
        }
        if k == steps {
            break;
        }
        let mut next = Vector::zeros(n);
        let (mut xo, mut uo) = (0, 0);
        for (i, node) in net.nodes.iter().enumerate() {
            let ni = node.state_dim();
            let mi = node.input_dim();
            let xi = x.rows(xo, ni).into_owned();
            let ui = u.rows(uo, mi).into_owned();
            let xp = match node {
                Node::Linear(l) => closed[i].as_ref().expect("linear node has a closed loop") * &xi + &l.g * &ui,
                Node::Nonlinear(nl) => nl.step(&xi, &ui)?,
            };
            next.rows_mut(xo, ni).copy_from(&xp);
            xo += ni;
            uo += mi;
        }
        if next.iter().any(|v| !v.is_finite() || v.abs() > BLOWUP) {
            traj.truncated = Some(format!("state left the finite range at step {}", k + 1));
            if !record.states {
                traj.states.push(x.clone());
            }
            return Ok(traj);
        }
        x = next;
    }
    if !record.states {
        traj.states.push(x);
    }
    Ok(traj)
}

/// Largest one-step increase `V(xᵏ⁺¹) − V(xᵏ)` along a trajectory; zero
/// when fewer than two samples exist.
pub fn storage_decrease_check(traj: &Trajectory) -> Result<f64> {
    let s = traj
        .storage
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("trajectory has no storage column".into()))?;
    if s.len() < 2 {
        return Ok(0.0);
    }
    Ok(s.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max))
}

/// Virtual-output comparison data of a network file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonSpec {
    pub which: Comparison,
    #[serde(
        rename = "C",
        default,
        with = "rows::option",
        skip_serializing_if = "Option::is_none"
    )]
    pub c: Option<Matrix>,
    pub q_hat: SymMatrix,
    pub r_hat: SymMatrix,
}

/// A network as read from JSON: nodes, per-node supply rates (primal or
/// dual) and the interconnection. Only the interconnection is mandatory;
/// each command uses the parts it needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub nodes: Vec<LinearNode>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub supplies: Vec<SupplyRate>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub duals: Vec<DualSupplyRate>,
    pub interconnection: Interconnection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison: Option<ComparisonSpec>,
}

impl NetworkSpec {
    /// Parses and validates node data and node counts.
    pub fn from_json(s: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for node in &self.nodes {
            node.validate()?;
        }
        let counts = [self.nodes.len(), self.supplies.len(), self.duals.len()];
        let mut known = counts.iter().copied().filter(|&c| c > 0);
        if let Some(first) = known.next() {
            if known.any(|c| c != first) {
                return Err(Error::Dimension(format!(
                    "nodes, supplies and duals disagree on the node count ({}, {}, {})",
                    counts[0], counts[1], counts[2]
                )));
            }
            if let Some(k) = self.interconnection.n_nodes() {
                if k != first {
                    return Err(Error::Dimension(format!(
                        "interconnection has {k} nodes, network has {first}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Primal supplies, converted from the dual triples when only those are given.
    pub fn primal_supplies(&self) -> Result<Vec<SupplyRate>> {
        if !self.supplies.is_empty() {
            return Ok(self.supplies.clone());
        }
        if self.duals.is_empty() {
            return Err(Error::InvalidArgument(
                "network file has neither supplies nor duals".into(),
            ));
        }
        self.duals.iter().map(DualSupplyRate::to_primal).collect()
    }

    pub fn dual_supplies(&self) -> Result<Vec<DualSupplyRate>> {
        if !self.duals.is_empty() {
            return Ok(self.duals.clone());
        }
        if self.supplies.is_empty() {
            return Err(Error::InvalidArgument(
                "network file has neither supplies nor duals".into(),
            ));
        }
        self.supplies.iter().map(dualize_supply).collect()
    }

    /// `H` for `n` nodes with `m` channels each; a general `H` is passed through.
    pub fn coupling(&self, n: usize, m: usize) -> Result<Matrix> {
        match &self.interconnection {
            Interconnection::General { h } => Ok(h.clone()),
            ic => build_h(ic, n, m),
        }
    }

    pub fn laplacian(&self) -> Result<(&WeightedGraph, usize)> {
        match &self.interconnection {
            Interconnection::Laplacian { graph, block } => Ok((graph, *block)),
            _ => Err(Error::InvalidArgument(
                "this check needs a laplacian interconnection".into(),
            )),
        }
    }

    /// Weighted degrees of the Laplacian interconnection.
    pub fn degrees(&self) -> Result<Vec<f64>> {
        Ok(self.laplacian()?.0.degrees())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckMode {
    Global,
    Dual,
    Decentralized,
    Comparison,
    Qmi,
}

impl std::str::FromStr for CheckMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "global" => Ok(CheckMode::Global),
            "dual" => Ok(CheckMode::Dual),
            "decentralized" => Ok(CheckMode::Decentralized),
            "comparison" => Ok(CheckMode::Comparison),
            "qmi" => Ok(CheckMode::Qmi),
            _ => Err(Error::InvalidArgument(format!("unknown check mode {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct NodeCheck {
    pub node: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degree: Option<f64>,
    pub holds: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<DefinitenessVerdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub local: Option<LocalVerdict>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckReport {
    pub mode: CheckMode,
    pub holds: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<DefinitenessVerdict>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub nodes: Vec<NodeCheck>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Runs one stability test on a network file.
///
/// `global` and `dual` test the stacked inequalities, `decentralized` the
/// per-node variant bounds (dual bounds when the file only has dual
/// triples), `comparison` the virtual-output tests and `qmi` the per-node
/// non-emptiness condition. `variant` and `params` only matter for
/// `decentralized`.
pub fn check_network(
    spec: &NetworkSpec,
    mode: CheckMode,
    variant: Variant,
    params: &GlobalParams,
    tol: Option<f64>,
) -> Result<CheckReport> {
    let mut report = CheckReport {
        mode,
        holds: false,
        verdict: None,
        nodes: Vec::new(),
        warnings: spec.interconnection.warnings(),
    };
    match mode {
        CheckMode::Global => {
            let sups = spec.primal_supplies()?;
            let h = spec.coupling(sups.len(), sups[0].m())?;
            report.verdict = Some(global_condition(&sups, &h, tol)?.verdict);
        }
        CheckMode::Dual => {
            let duals = spec.dual_supplies()?;
            let h = spec.coupling(duals.len(), duals[0].r.dim())?;
            report.verdict = Some(dual_global_condition(&duals, &h, tol)?.verdict);
        }
        CheckMode::Decentralized => {
            let degrees = spec.degrees()?;
            let locals: Vec<LocalVerdict> = if spec.supplies.is_empty() && !spec.duals.is_empty() {
                check_count(spec.duals.len(), degrees.len())?;
                spec.duals
                    .iter()
                    .zip(&degrees)
                    .map(|(dual, &d)| dual_decentralized_check(d, dual, variant, params))
                    .collect::<Result<_>>()?
            } else {
                let sups = spec.primal_supplies()?;
                check_count(sups.len(), degrees.len())?;
                sups.iter()
                    .zip(&degrees)
                    .map(|(sr, &d)| decentralized_check(d, sr, variant, params))
                    .collect::<Result<_>>()?
            };
            report.nodes = locals
                .into_iter()
                .zip(&degrees)
                .enumerate()
                .map(|(node, (local, &d))| NodeCheck {
                    node,
                    degree: Some(d),
                    holds: local.holds,
                    verdict: None,
                    local: Some(local),
                })
                .collect();
        }
        CheckMode::Comparison => {
            let (graph, block) = spec.laplacian()?;
            let cmp = spec
                .comparison
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("comparison check needs a \"comparison\" section".into()))?;
            report.verdict = Some(comparison_conditions(
                graph,
                block,
                cmp.c.as_ref(),
                &cmp.q_hat,
                &cmp.r_hat,
                cmp.which,
            )?);
        }
        CheckMode::Qmi => {
            report.nodes = spec
                .primal_supplies()?
                .iter()
                .enumerate()
                .map(|(node, sr)| {
                    let v = qmi_nonempty_check(sr)?;
                    Ok(NodeCheck {
                        node,
                        degree: None,
                        holds: v.holds,
                        verdict: Some(v),
                        local: None,
                    })
                })
                .collect::<Result<_>>()?;
        }
    }
    report.holds = match &report.verdict {
        Some(v) => v.holds,
        None => !report.nodes.is_empty() && report.nodes.iter().all(|n| n.holds),
    };
    Ok(report)
}

fn check_count(nodes: usize, degrees: usize) -> Result<()> {
    if nodes != degrees {
        return Err(Error::Dimension(format!(
            "{nodes} supplies for a graph of {degrees} nodes"
        )));
    }
    Ok(())
}

/// Initial state perturbing every output-observed state (a state whose
/// column of `C` is nonzero) uniformly in `[−amplitude, amplitude]`, drawn
/// in state order from `seeded_rng(seed)`; other states start at zero.
pub fn output_perturbation(nodes: &[LinearNode], amplitude: f64, seed: u64) -> Vector {
    let mut rng = seeded_rng(seed);
    let n: usize = nodes.iter().map(LinearNode::n).sum();
    let mut x = Vector::zeros(n);
    let mut off = 0;
    for node in nodes {
        for j in 0..node.n() {
            if node.c.column(j).amax() != 0.0 {
                x[off + j] = if amplitude > 0.0 {
                    rng.random_range(-amplitude..=amplitude)
                } else {
                    0.0
                };
            }
        }
        off += node.n();
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn m1(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    fn pair(w: f64) -> WeightedGraph {
        WeightedGraph::new(2, [(0, 1, w)]).unwrap()
    }

    #[test]
    fn build_h_examples() {
        let h = build_h(
            &Interconnection::Laplacian {
                graph: pair(1.0),
                block: 1,
            },
            2,
            1,
        )
        .unwrap();
        assert_eq!(h, Matrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]));
        let h = build_h(&Interconnection::Feedback2 { block: 1 }, 2, 1).unwrap();
        assert_eq!(h, Matrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        assert!(build_h(&Interconnection::Feedback2 { block: 1 }, 3, 1).is_err());
    }

    #[test]
    fn laplacian_coupling_is_neighbour_sum() {
        let g = WeightedGraph::new(3, [(0, 1, 0.5), (1, 2, 2.0)]).unwrap();
        let h = build_h(
            &Interconnection::Laplacian {
                graph: g.clone(),
                block: 1,
            },
            3,
            1,
        )
        .unwrap();
        let y = Vector::from_column_slice(&[1.0, -2.0, 4.0]);
        let u = &h * &y;
        let adj = g.neighbors();
        for i in 0..3 {
            let expected: f64 = adj[i].iter().map(|&(j, a)| a * (y[j] - y[i])).sum();
            assert_abs_diff_eq!(u[i], expected, epsilon = 1e-14);
        }
    }

    #[test]
    fn skew_warns_for_symmetric_adjacency() {
        let ic = Interconnection::SkewSymmetric {
            adjacency: pair(1.0).adjacency().into_matrix(),
            block: 1,
        };
        assert_eq!(ic.warnings().len(), 1);
        assert_eq!(build_h(&ic, 2, 1).unwrap(), Matrix::zeros(2, 2));
        let directed = Interconnection::SkewSymmetric {
            adjacency: Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            block: 1,
        };
        assert!(directed.warnings().is_empty());
        assert_eq!(
            build_h(&directed, 2, 1).unwrap(),
            Matrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])
        );
    }

    #[test]
    fn global_zero_coupling_reduces_to_q() {
        let sr = SupplyRate::scalar(-1.0, 0.3, 2.0);
        let v = global_condition(&[sr.clone(), sr], &Matrix::zeros(2, 2), None).unwrap();
        assert!(v.verdict.holds);
        assert_abs_diff_eq!(v.matrix.as_matrix(), &(-Matrix::identity(2, 2)), epsilon = 1e-15);
    }

    #[test]
    fn global_feedback_blocks() {
        let s1 = SupplyRate::scalar(-2.0, 0.3, 0.5);
        let s2 = SupplyRate::scalar(-1.5, -0.1, 0.7);
        let h = build_h(&Interconnection::Feedback2 { block: 1 }, 2, 1).unwrap();
        let v = global_condition(&[s1.clone(), s2.clone()], &h, None).unwrap();
        let expected = Matrix::from_row_slice(2, 2, &[-2.0 + 0.7, 0.3 - 0.1, 0.3 - 0.1, 0.5 - 1.5]);
        assert_abs_diff_eq!(v.matrix.as_matrix(), &expected, epsilon = 1e-15);
        assert!(v.verdict.holds);
    }

    #[test]
    fn global_laplacian_pair() {
        let sr = SupplyRate::scalar(-5.0, 0.5, 0.4);
        assert!(
            decentralized_check(1.0, &sr, Variant::A, &GlobalParams::alpha(1.0))
                .unwrap()
                .holds
        );
        let h = build_h(
            &Interconnection::Laplacian {
                graph: pair(1.0),
                block: 1,
            },
            2,
            1,
        )
        .unwrap();
        let v = global_condition(&[sr.clone(), sr], &h, None).unwrap();
        assert!(v.verdict.holds);
        // M = −5I − 𝓛 + 0.4𝓛²: eigenvalues −5 and −5 − 2 + 1.6
        assert_abs_diff_eq!(v.verdict.max_eig, -5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v.verdict.min_eig, -5.4, epsilon = 1e-12);
    }

    #[test]
    fn local_examples_half_degree() {
        let a1 = GlobalParams::alpha(1.0);
        assert!(
            decentralized_check(0.5, &SupplyRate::scalar(-3.0, 0.5, 0.8), Variant::A, &a1)
                .unwrap()
                .holds
        );
        assert!(
            !decentralized_check(0.5, &SupplyRate::scalar(-3.0, 0.5, 1.2), Variant::A, &a1)
                .unwrap()
                .holds
        );
        // alpha >= 1 only asks for Q < 0
        assert!(
            decentralized_check(
                0.5,
                &SupplyRate::scalar(-1e-3, 1.0, 0.5),
                Variant::A,
                &GlobalParams::alpha(2.0)
            )
            .unwrap()
            .holds
        );
        assert!(decentralized_check(
            0.5,
            &SupplyRate::scalar(-3.0, 0.5, 0.8),
            Variant::A,
            &GlobalParams::default()
        )
        .is_err());
        assert!(decentralized_check(0.0, &SupplyRate::scalar(-3.0, 0.5, 0.8), Variant::A, &a1).is_err());
    }

    #[test]
    fn dual_local_matches_change_of_variables() {
        let cases = [
            (0.5, DualSupplyRate::scalar(-0.8, 0.5, 3.0), Variant::A),
            (0.5, DualSupplyRate::scalar(-1.2, 0.5, 3.0), Variant::A),
            (1.0, DualSupplyRate::scalar(-0.3, 0.2, 4.5), Variant::C),
            (1.0, DualSupplyRate::scalar(-0.1, 0.2, 4.5), Variant::D),
            (2.0, DualSupplyRate::scalar(-0.1, 0.05, 4.5), Variant::B),
        ];
        for (d, dual, variant) in cases {
            let params = GlobalParams {
                alpha: Some(1.0),
                shared_s: Some(m1(dual.s[(0, 0)])),
            };
            let mapped = SupplyRate::new(dual.r.scale(-1.0), dual.s.transpose(), dual.q.scale(-1.0)).unwrap();
            let lhs = dual_decentralized_check(d, &dual, variant, &params).unwrap().holds;
            let rhs = decentralized_check(d, &mapped, variant, &params).unwrap().holds;
            assert_eq!(lhs, rhs, "{variant:?} at d={d}");
        }
    }

    #[test]
    fn dual_global_agrees_on_pair() {
        let sr = SupplyRate::scalar(-5.0, 0.5, 0.4);
        let dual = crate::dissipativity::dualize_supply(&sr).unwrap();
        let h = build_h(
            &Interconnection::Laplacian {
                graph: pair(1.0),
                block: 1,
            },
            2,
            1,
        )
        .unwrap();
        let p = global_condition(&[sr.clone(), sr], &h, None).unwrap();
        let d = dual_global_condition(&[dual.clone(), dual], &h, None).unwrap();
        assert_eq!(p.verdict.holds, d.verdict.holds);
        let bad = DualSupplyRate::scalar(1.0, 0.0, 1.0);
        assert!(dual_global_condition(&[bad.clone(), bad], &h, None).is_err());
    }

    #[test]
    fn qmi_examples() {
        let ok = SupplyRate::new(
            SymMatrix::identity(2).scale(-1.0),
            Matrix::zeros(2, 2),
            SymMatrix::identity(2),
        )
        .unwrap();
        assert!(qmi_nonempty_check(&ok).unwrap().holds);
        let bad = SupplyRate::new(SymMatrix::identity(2), Matrix::zeros(2, 2), SymMatrix::identity(2)).unwrap();
        assert!(!qmi_nonempty_check(&bad).unwrap().holds);
    }

    #[test]
    fn comparison_examples() {
        let g = WeightedGraph::new(3, [(0, 1, 1.0), (1, 2, 0.5)]).unwrap();
        let q = SymMatrix::from_diagonal(&[0.5, 0.7, 0.2]);
        let r = SymMatrix::from_diagonal(&[0.3, 0.2, 0.5]);
        assert!(
            comparison_conditions(&g, 1, None, &q, &r, Comparison::Prop1)
                .unwrap()
                .holds
        );
        assert!(
            comparison_conditions(&g, 1, None, &q, &r, Comparison::Lemma6)
                .unwrap()
                .holds
        );
        let eye = Matrix::identity(3, 3);
        let l5 = comparison_conditions(&g, 1, Some(&eye), &q, &r, Comparison::Lemma5).unwrap();
        let l6 = comparison_conditions(&g, 1, None, &q, &r, Comparison::Lemma6).unwrap();
        assert_abs_diff_eq!(l5.min_eig, l6.min_eig, epsilon = 1e-14);
        assert!(comparison_conditions(&g, 1, None, &q, &r, Comparison::Lemma5).is_err());
        let tiny_q = SymMatrix::identity(3).scale(1e-3);
        assert!(
            !comparison_conditions(&g, 1, None, &tiny_q, &SymMatrix::zeros(3), Comparison::Prop1)
                .unwrap()
                .holds
        );
        let mut full = q.as_matrix().clone();
        full[(0, 1)] = 0.01;
        full[(1, 0)] = 0.01;
        let full = SymMatrix::new(full).unwrap();
        assert!(
            !comparison_conditions(&g, 1, None, &full, &r, Comparison::Prop1)
                .unwrap()
                .holds
        );
    }

    #[test]
    fn closed_loop_assembly() {
        let a = LinearNode::discrete(m1(0.5), m1(1.0), m1(1.0), m1(1.0)).unwrap();
        let b = LinearNode::discrete(m1(0.2), m1(2.0), m1(0.5), m1(1.0)).unwrap();
        let gains = vec![Some(m1(-0.1)), Some(m1(0.1))];
        let m0 = assemble_closed_loop(&[a.clone(), b.clone()], &gains, &Matrix::zeros(2, 2)).unwrap();
        assert_abs_diff_eq!(m0, Matrix::from_row_slice(2, 2, &[0.4, 0.0, 0.0, 0.4]), epsilon = 1e-15);
        let h = build_h(
            &Interconnection::Laplacian {
                graph: pair(1.0),
                block: 1,
            },
            2,
            1,
        )
        .unwrap();
        let m = assemble_closed_loop(&[a.clone(), b.clone()], &gains, &h).unwrap();
        // row i: a_i + b_i k_i − g_i on the diagonal, g_i off it
        assert_abs_diff_eq!(
            m,
            Matrix::from_row_slice(2, 2, &[-0.6, 1.0, 0.5, -0.1]),
            epsilon = 1e-15
        );
        assert!(assemble_closed_loop(&[a, b], &[None, Some(m1(0.0))], &h).is_err());
    }

    #[test]
    fn stability_examples() {
        assert!(stability_report(&m1(0.5), TimeDomain::Discrete, 1e-12).unwrap().stable);
        let ct = Matrix::from_row_slice(2, 2, &[-2.0, 100.0, -400.0, -480.0]);
        let r = stability_report(&ct, TimeDomain::Continuous, 1e-12).unwrap();
        assert!(r.stable);
        let mut re: Vec<f64> = r.eigs.iter().map(|z| z.re).collect();
        re.sort_by(f64::total_cmp);
        assert_abs_diff_eq!(re[1], -110.1, epsilon = 0.1);
        assert_abs_diff_eq!(re[0], -371.8, epsilon = 0.1);
    }

    #[test]
    fn simulate_zero_and_decay() {
        let a = LinearNode::discrete(m1(0.5), m1(0.0), m1(0.0), m1(1.0)).unwrap();
        let b = LinearNode::discrete(m1(-0.8), m1(0.0), m1(0.0), m1(1.0)).unwrap();
        let net = NetworkModel::linear(
            vec![a, b],
            Interconnection::Laplacian {
                graph: pair(1.0),
                block: 1,
            },
        )
        .unwrap();
        let t = simulate(&net, &Vector::zeros(2), 10, &RecordOptions::default()).unwrap();
        assert!(t.states.iter().all(|x| x.amax() == 0.0));
        let t = simulate(
            &net,
            &Vector::from_column_slice(&[1.0, 1.0]),
            5,
            &RecordOptions::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(t.states[5][0], 0.5f64.powi(5), epsilon = 1e-15);
        assert_abs_diff_eq!(t.states[5][1], (-0.8f64).powi(5), epsilon = 1e-15);
        assert!(t.storage.is_none());
    }

    #[test]
    fn simulate_guard_truncates() {
        let a = LinearNode::discrete(m1(1e80), m1(0.0), m1(0.0), m1(1.0)).unwrap();
        let net = NetworkModel::linear(vec![a], Interconnection::General { h: Matrix::zeros(1, 1) }).unwrap();
        let t = simulate(&net, &Vector::from_column_slice(&[1.0]), 10, &RecordOptions::default()).unwrap();
        assert!(t.truncated.is_some());
        assert!(t.states.len() < 11);
    }

    #[test]
    fn nonlinear_nodes_simulate() {
        let f: UpdateFn = Arc::new(|x, u| x.map(|v| 0.5 * v.sin()) + u * 0.1);
        let h: OutputFn = Arc::new(|x| x.clone());
        let node = NonlinearNode::new(1, 1, 1, f, h).unwrap();
        let net = NetworkModel::new(
            vec![Node::Nonlinear(node.clone()), Node::Nonlinear(node)],
            Interconnection::Laplacian {
                graph: pair(1.0),
                block: 1,
            },
        )
        .unwrap();
        let t = simulate(
            &net,
            &Vector::from_column_slice(&[1.0, -1.0]),
            50,
            &RecordOptions::default(),
        )
        .unwrap();
        assert!(t.final_state().unwrap().amax() < 1e-10);
        let bad: UpdateFn = Arc::new(|x, _| x.map(|v| v + 1.0));
        let id: OutputFn = Arc::new(|x| x.clone());
        assert!(NonlinearNode::new(1, 1, 1, bad, id).is_err());
    }

    #[test]
    fn storage_check_examples() {
        let t = Trajectory {
            storage: Some(vec![0.0; 5]),
            ..Default::default()
        };
        assert_eq!(storage_decrease_check(&t).unwrap(), 0.0);
        let t = Trajectory {
            storage: Some(vec![3.0, 2.0, 2.5, 1.0]),
            ..Default::default()
        };
        assert_abs_diff_eq!(storage_decrease_check(&t).unwrap(), 0.5);
        assert!(storage_decrease_check(&Trajectory::default()).is_err());
    }

    #[test]
    fn trajectory_csv_layout() {
        let t = Trajectory {
            dt: 0.5,
            state_dims: vec![1, 2],
            states: vec![Vector::from_column_slice(&[1.0, 2.0, 3.0])],
            ..Default::default()
        };
        let mut buf = Vec::new();
        t.write_states_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "step,time_s,node,state_index,value");
        assert_eq!(lines.len(), 4);
        assert!(lines[3].starts_with("0,0.0000000000000000e0,1,1,"));
    }
}
