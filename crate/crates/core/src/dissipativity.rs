//! Quadratic supply rates and dissipativity of linear nodes.
//!
//! A node `x⁺ = Ax + Bv + Gu`, `y = Cx` is `(Q,S,R)`-dissipative with a
//! quadratic storage `V(x) = xᵀ𝒫x` when `V(x⁺) − V(x) ≤ s(y, u)` with
//! `s(y,u) = yᵀQy + 2yᵀSu + uᵀRu`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{
    block_inverse_2x2, definiteness, eig_general, inertia, rows, Complex, Definiteness, DefinitenessVerdict, Matrix,
    SymMatrix, Vector,
};

/// Default absolute tolerance on the eigenvalues of dissipation checks.
pub const DISSIPATION_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupplyRate {
    #[serde(rename = "Q")]
    pub q: SymMatrix,
    #[serde(rename = "S", with = "rows")]
    pub s: Matrix,
    #[serde(rename = "R")]
    pub r: SymMatrix,
}

impl SupplyRate {
    pub fn new(q: SymMatrix, s: Matrix, r: SymMatrix) -> Result<Self> {
        if s.nrows() != q.dim() || s.ncols() != r.dim() {
            return Err(Error::Dimension(format!(
                "S is {}x{}, expected {}x{}",
                s.nrows(),
                s.ncols(),
                q.dim(),
                r.dim()
            )));
        }
        Ok(Self { q, s, r })
    }

    pub fn scalar(q: f64, s: f64, r: f64) -> Self {
        Self {
            q: SymMatrix::scalar(q),
            s: Matrix::from_element(1, 1, s),
            r: SymMatrix::scalar(r),
        }
    }

    /// `s(y,u) = yᵀu` on `m` channels.
    pub fn passivity(m: usize) -> Self {
        Self {
            q: SymMatrix::zeros(m),
            s: Matrix::identity(m, m) * 0.5,
            r: SymMatrix::zeros(m),
        }
    }

    pub fn p(&self) -> usize {
        self.q.dim()
    }

    pub fn m(&self) -> usize {
        self.r.dim()
    }

    /// `[Q S; Sᵀ R]`.
    pub fn stacked(&self) -> SymMatrix {
        let (p, m) = (self.p(), self.m());
        let mut out = Matrix::zeros(p + m, p + m);
        out.view_mut((0, 0), (p, p)).copy_from(self.q.as_matrix());
        out.view_mut((0, p), (p, m)).copy_from(&self.s);
        out.view_mut((p, 0), (m, p)).copy_from(&self.s.transpose());
        out.view_mut((p, p), (m, m)).copy_from(self.r.as_matrix());
        SymMatrix::from_symmetrized(out)
    }
}

/// The block inverse `[𝒬 𝒮; ⋆ ℛ] = [Q S; ⋆ R]⁻¹`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualSupplyRate {
    #[serde(rename = "Q")]
    pub q: SymMatrix,
    #[serde(rename = "S", with = "rows")]
    pub s: Matrix,
    #[serde(rename = "R")]
    pub r: SymMatrix,
}

impl DualSupplyRate {
    pub fn new(q: SymMatrix, s: Matrix, r: SymMatrix) -> Result<Self> {
        let sr = SupplyRate::new(q, s, r)?;
        Ok(Self {
            q: sr.q,
            s: sr.s,
            r: sr.r,
        })
    }

    pub fn scalar(q: f64, s: f64, r: f64) -> Self {
        let sr = SupplyRate::scalar(q, s, r);
        Self {
            q: sr.q,
            s: sr.s,
            r: sr.r,
        }
    }

    /// Inverts back to the primal triple.
    pub fn to_primal(&self) -> Result<SupplyRate> {
        let (q, s, r) = block_inverse_2x2(&self.q, &self.s, &self.r)?;
        SupplyRate::new(q, s, r)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeDomain {
    Continuous,
    Discrete,
}

/// `x⁺ = Ax + Bv + Gu`, `y = Cx (+ Du)`; `v` is the local control input
/// and `u` the coupling input. Continuous-time nodes read `ẋ` for `x⁺`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearNode {
    #[serde(rename = "A", with = "rows")]
    pub a: Matrix,
    #[serde(rename = "B", with = "rows")]
    pub b: Matrix,
    #[serde(rename = "G", with = "rows")]
    pub g: Matrix,
    #[serde(rename = "C", with = "rows")]
    pub c: Matrix,
    #[serde(
        rename = "D",
        with = "rows::option",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub d: Option<Matrix>,
    pub domain: TimeDomain,
}

impl LinearNode {
    pub fn new(a: Matrix, b: Matrix, g: Matrix, c: Matrix, domain: TimeDomain) -> Result<Self> {
        let node = Self {
            a,
            b,
            g,
            c,
            d: None,
            domain,
        };
        node.validate()?;
        Ok(node)
    }

    pub fn discrete(a: Matrix, b: Matrix, g: Matrix, c: Matrix) -> Result<Self> {
        Self::new(a, b, g, c, TimeDomain::Discrete)
    }

    pub fn with_feedthrough(mut self, d: Matrix) -> Result<Self> {
        self.d = Some(d);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.a.nrows();
        let bad = |what: &str| Err(Error::Dimension(format!("linear node: {what}")));
        if !self.a.is_square() {
            return bad("A must be square");
        }
        if self.b.nrows() != n {
            return bad("B must have as many rows as A");
        }
        if self.g.nrows() != n {
            return bad("G must have as many rows as A");
        }
        if self.c.ncols() != n {
            return bad("C must have as many columns as A");
        }
        if let Some(d) = &self.d {
            if d.nrows() != self.c.nrows() || d.ncols() != self.g.ncols() {
                return bad("D must be p x m");
            }
        }
        let finite = [&self.a, &self.b, &self.g, &self.c]
            .iter()
            .all(|m| m.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::NonFinite("linear node matrices"));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Control input dimension.
    pub fn r(&self) -> usize {
        self.b.ncols()
    }

    /// Coupling input dimension.
    pub fn m(&self) -> usize {
        self.g.ncols()
    }

    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    pub fn has_feedthrough(&self) -> bool {
        self.d.as_ref().is_some_and(|d| d.amax() > 0.0)
    }

    /// `A + BK`, or `A` without a gain.
    pub fn closed_loop(&self, k: Option<&Matrix>) -> Result<Matrix> {
        match k {
            None => Ok(self.a.clone()),
            Some(k) => {
                if k.nrows() != self.r() || k.ncols() != self.n() {
                    return Err(Error::Dimension(format!(
                        "gain is {}x{}, expected {}x{}",
                        k.nrows(),
                        k.ncols(),
                        self.r(),
                        self.n()
                    )));
                }
                Ok(&self.a + &self.b * k)
            }
        }
    }

    pub fn output(&self, x: &Vector, u: &Vector) -> Vector {
        let y = &self.c * x;
        match &self.d {
            Some(d) => y + d * u,
            None => y,
        }
    }
}

/// A quadratic storage certifying closed-loop dissipativity.
///
/// `p` is the LMI variable and `storage = p⁻¹` the matrix of
/// `V(x) = xᵀ·storage·x`.
#[derive(Clone, Debug, PartialEq)]
pub struct StorageCertificate {
    pub p: SymMatrix,
    pub storage: SymMatrix,
    pub k: Matrix,
    pub supply: SupplyRate,
    pub margin: f64,
    pub variant: String,
}

#[derive(Serialize, Deserialize)]
struct CertificateJson {
    #[serde(rename = "P")]
    p: SymMatrix,
    #[serde(rename = "K", with = "rows")]
    k: Matrix,
    supply: SupplyRate,
    margin: f64,
    variant: String,
}

impl Serialize for StorageCertificate {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        CertificateJson {
            p: self.p.clone(),
            k: self.k.clone(),
            supply: self.supply.clone(),
            margin: self.margin,
            variant: self.variant.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for StorageCertificate {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let c = CertificateJson::deserialize(d)?;
        let storage = c.p.inverse().map_err(serde::de::Error::custom)?;
        Ok(Self {
            p: c.p,
            storage,
            k: c.k,
            supply: c.supply,
            margin: c.margin,
            variant: c.variant,
        })
    }
}

impl StorageCertificate {
    pub fn storage_value(&self, x: &Vector) -> f64 {
        (x.transpose() * self.storage.as_matrix() * x)[(0, 0)]
    }

    /// Re-checks the closed-loop dissipation inequality from scratch.
    pub fn check(&self, node: &LinearNode, tol: f64) -> Result<DefinitenessVerdict> {
        let m = dissipation_lmi_matrix(node, Some(&self.k), &self.supply, &self.storage)?;
        definiteness(&m, Definiteness::NegativeSemidefinite, Some(tol))
    }

    /// `φ = s(y,u) − V(x⁺) + V(x)` along the closed loop `x⁺ = (A+BK)x + Gu`.
    pub fn dissipation_rate(&self, node: &LinearNode, x: &Vector, u: &Vector) -> Result<f64> {
        let ak = node.closed_loop(Some(&self.k))?;
        let xp = &ak * x + &node.g * u;
        let y = node.output(x, u);
        Ok(supply_eval(&self.supply, &y, u)? - self.storage_value(&xp) + self.storage_value(x))
    }
}

/// Tolerance used to accept the closed-loop dissipation check of a
/// certificate: [`DISSIPATION_TOL`] relative to the size of the blocks.
pub fn dissipation_check_tol(node: &LinearNode, sr: &SupplyRate, storage: &SymMatrix) -> f64 {
    let scale = storage.as_matrix().amax() * (1.0 + node.a.amax() + node.g.amax()).powi(2)
        + sr.q.as_matrix().amax() * (1.0 + node.c.amax()).powi(2)
        + sr.r.as_matrix().amax();
    DISSIPATION_TOL * scale.max(1.0)
}

pub fn supply_eval(sr: &SupplyRate, y: &Vector, u: &Vector) -> Result<f64> {
    if y.len() != sr.p() || u.len() != sr.m() {
        return Err(Error::Dimension(format!(
            "supply expects y in R^{} and u in R^{}, got {} and {}",
            sr.p(),
            sr.m(),
            y.len(),
            u.len()
        )));
    }
    let v = y.dot(&(sr.q.as_matrix() * y)) + 2.0 * y.dot(&(&sr.s * u)) + u.dot(&(sr.r.as_matrix() * u));
    Ok(v)
}

fn check_supply_fits(node: &LinearNode, sr: &SupplyRate) -> Result<()> {
    if sr.p() != node.p() || sr.m() != node.m() {
        return Err(Error::Dimension(format!(
            "supply is for (p={}, m={}), node has (p={}, m={})",
            sr.p(),
            sr.m(),
            node.p(),
            node.m()
        )));
    }
    Ok(())
}

/// `[[A_KᵀPA_K − P − CᵀQC, A_KᵀPG − CᵀS], [⋆, GᵀPG − R]]` with `P = storage`
/// and `A_K = A + BK`. The node is dissipative with this storage iff the
/// result is NSD.
pub fn dissipation_lmi_matrix(
    node: &LinearNode,
    k: Option<&Matrix>,
    sr: &SupplyRate,
    storage: &SymMatrix,
) -> Result<SymMatrix> {
    check_supply_fits(node, sr)?;
    if storage.dim() != node.n() {
        return Err(Error::Dimension("storage matrix must be n x n".into()));
    }
    let ak = node.closed_loop(k)?;
    let p = storage.as_matrix();
    let (n, m) = (node.n(), node.m());
    let c = &node.c;
    let tl = ak.transpose() * p * &ak - p - c.transpose() * sr.q.as_matrix() * c;
    let tr = ak.transpose() * p * &node.g - c.transpose() * &sr.s;
    let br = node.g.transpose() * p * &node.g - sr.r.as_matrix();
    let mut out = Matrix::zeros(n + m, n + m);
    out.view_mut((0, 0), (n, n)).copy_from(&tl);
    out.view_mut((0, n), (n, m)).copy_from(&tr);
    out.view_mut((n, 0), (m, n)).copy_from(&tr.transpose());
    out.view_mut((n, n), (m, m)).copy_from(&br);
    Ok(SymMatrix::from_symmetrized(out))
}

/// Passivity (`s = yᵀu`) inequality for `y = Cx + Du`:
/// `[[AᵀPA − P, AᵀPG − ½Cᵀ], [⋆, GᵀPG − ½(D + Dᵀ)]] ⪯ 0`.
pub fn passivity_lmi_matrix(node: &LinearNode, storage: &SymMatrix) -> Result<SymMatrix> {
    if node.m() != node.p() {
        return Err(Error::Dimension(
            "passivity needs as many outputs as coupling inputs".into(),
        ));
    }
    let m = node.m();
    let mut base = dissipation_lmi_matrix(node, None, &SupplyRate::passivity(m), storage)?.into_matrix();
    if let Some(d) = &node.d {
        let n = node.n();
        let sym = (d + d.transpose()) * 0.5;
        let mut v = base.view_mut((n, n), (m, m));
        v -= sym;
    }
    Ok(SymMatrix::from_symmetrized(base))
}

/// Necessary condition for a feedthrough-free node: `R ⪰ 0`.
pub fn check_r_necessary(sr: &SupplyRate) -> Result<DefinitenessVerdict> {
    definiteness(&sr.r, Definiteness::PositiveSemidefinite, None)
}

/// Supply on the true output equivalent to passivity of the virtual output
/// `z = y + R̂u`, optionally with output dissipation `ρ(y) = yᵀQ̂y`.
pub fn virtual_to_qsr(q_hat: Option<&SymMatrix>, r_hat: &SymMatrix) -> Result<SupplyRate> {
    let m = r_hat.dim();
    let q = match q_hat {
        Some(q) if q.dim() != m => {
            return Err(Error::Dimension(format!(
                "Q-hat is {}x{}, R-hat is {m}x{m}",
                q.dim(),
                q.dim()
            )));
        }
        Some(q) => q.scale(-1.0),
        None => SymMatrix::zeros(m),
    };
    SupplyRate::new(q, Matrix::identity(m, m) * 0.5, r_hat.clone())
}

/// Requires `Q ≺ 0`, `R ≻ 0` and returns the block inverse.
pub fn dualize_supply(sr: &SupplyRate) -> Result<DualSupplyRate> {
    let qv = definiteness(&sr.q, Definiteness::NegativeDefinite, None)?;
    if !qv.holds {
        return Err(Error::Precondition(format!(
            "dualization needs Q negative definite (max eigenvalue {:e})",
            qv.max_eig
        )));
    }
    let rv = definiteness(&sr.r, Definiteness::PositiveDefinite, None)?;
    if !rv.holds {
        return Err(Error::Precondition(format!(
            "dualization needs R positive definite (min eigenvalue {:e})",
            rv.min_eig
        )));
    }
    let inn = inertia(&sr.stacked(), None)?;
    if (inn.neg, inn.zero, inn.pos) != (sr.p(), 0, sr.m()) {
        return Err(Error::Precondition(format!(
            "stacked supply has inertia ({}, {}, {}), expected ({}, 0, {})",
            inn.neg,
            inn.zero,
            inn.pos,
            sr.p(),
            sr.m()
        )));
    }
    let (q, s, r) = block_inverse_2x2(&sr.q, &sr.s, &sr.r)?;
    let dual = DualSupplyRate { q, s, r };
    let ok = definiteness(&dual.q, Definiteness::NegativeDefinite, None)?.holds
        && definiteness(&dual.r, Definiteness::PositiveDefinite, None)?.holds;
    if !ok {
        return Err(Error::Precondition(
            "dual supply lost the sign pattern after inversion".into(),
        ));
    }
    Ok(dual)
}

fn numerical_rank(m: &Matrix) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.iter().copied().fold(0.0, f64::max);
    let cut = 1e-9 * top.max(1.0);
    sv.iter().filter(|&&s| s > cut).count()
}

// rank of the complex matrix [λI − A; C] through its real embedding
fn pbh_rank(a: &Matrix, c: &Matrix, lambda: Complex<f64>) -> usize {
    let n = a.nrows();
    let p = c.nrows();
    let rows = n + p;
    let mut re = Matrix::zeros(rows, n);
    let mut im = Matrix::zeros(rows, n);
    re.view_mut((0, 0), (n, n)).copy_from(&(-a));
    for i in 0..n {
        re[(i, i)] += lambda.re;
        im[(i, i)] = lambda.im;
    }
    re.view_mut((n, 0), (p, n)).copy_from(c);
    let mut emb = Matrix::zeros(2 * rows, 2 * n);
    emb.view_mut((0, 0), (rows, n)).copy_from(&re);
    emb.view_mut((0, n), (rows, n)).copy_from(&(-&im));
    emb.view_mut((rows, 0), (rows, n)).copy_from(&im);
    emb.view_mut((rows, n), (rows, n)).copy_from(&re);
    numerical_rank(&emb) / 2
}

/// PBH test of `(C, A)` for a discrete-time system: every eigenvalue with
/// `|λ| ≥ 1` must be observable.
pub fn detectability(c: &Matrix, a: &Matrix) -> Result<bool> {
    if c.ncols() != a.nrows() || !a.is_square() {
        return Err(Error::Dimension(
            "detectability needs C with as many columns as A".into(),
        ));
    }
    let n = a.nrows();
    for lambda in eig_general(a)? {
        if lambda.norm() >= 1.0 - 1e-12 && pbh_rank(a, c, lambda) < n {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Dual PBH test: `(A, B)` is stabilizable iff `(Bᵀ, Aᵀ)` is detectable.
pub fn stabilizability(a: &Matrix, b: &Matrix) -> Result<bool> {
    if b.nrows() != a.nrows() {
        return Err(Error::Dimension(
            "stabilizability needs B with as many rows as A".into(),
        ));
    }
    detectability(&b.transpose(), &a.transpose())
}
