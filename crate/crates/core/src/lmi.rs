//! Linear matrix inequality feasibility over named matrix variables.
//!
//! A constraint is an affine symmetric expression
//! `F(X) = C + Σ (Lₖ Xₖ Rₖ + (Lₖ Xₖ Rₖ)ᵀ)` together with a sense. Problems are
//! solved by a primal log-det barrier method that maximizes the smallest
//! constraint eigenvalue. Every returned point is re-evaluated through
//! [`evaluate`] and [`eig_sym`](crate::matrix::eig_sym) before it is reported
//! as verified; the solver never reports infeasibility.
//!
//! ```
//! use dissinet::lmi::{BlockExpr, LmiProblem, Sense, SolveOptions, SolveStatus};
//! use dissinet::matrix::Matrix;
//!
//! // find p with p > 0 and p - 0.25 p > 0
//! let mut prob = LmiProblem::new();
//! let p = prob.add_symmetric("P", 1);
//! prob.add_constraint("P > 0", BlockExpr::new(&[1]).var(0, p, 1.0).build(), Sense::Positive);
//! let a = Matrix::from_element(1, 1, 0.5);
//! let lyap = BlockExpr::new(&[1])
//!     .var(0, p, 1.0)
//!     .congruence(0, &(-a.transpose()), p, 1.0)
//!     .build();
//! prob.add_constraint("P - A'PA > 0", lyap, Sense::Positive);
//! let sol = prob.solve(&SolveOptions::default()).unwrap();
//! assert_eq!(sol.status, SolveStatus::Verified);
//! ```

use nalgebra::Cholesky;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::{Matrix, SymMatrix, Vector};

/// Slack allowed below the requested margin when re-verifying.
pub const VERIFY_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum VarKind {
    Symmetric,
    Rectangular,
}

#[derive(Clone, Debug, Serialize)]
pub struct MatrixVariable {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub kind: VarKind,
}

impl MatrixVariable {
    fn scalar_count(&self) -> usize {
        match self.kind {
            VarKind::Symmetric => self.rows * (self.rows + 1) / 2,
            VarKind::Rectangular => self.rows * self.cols,
        }
    }

    fn unit(&self, k: usize) -> Matrix {
        let mut m = Matrix::zeros(self.rows, self.cols);
        match self.kind {
            VarKind::Rectangular => m[(k % self.rows, k / self.rows)] = 1.0,
            VarKind::Symmetric => {
                let (i, j) = sym_index(self.rows, k);
                m[(i, j)] = 1.0;
                m[(j, i)] = 1.0;
            }
        }
        m
    }
}

// k-th element of the upper triangle, row-major
fn sym_index(n: usize, mut k: usize) -> (usize, usize) {
    for i in 0..n {
        let len = n - i;
        if k < len {
            return (i, i + k);
        }
        k -= len;
    }
    unreachable!("symmetric index out of range")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// One summand `L X R + (L X R)ᵀ`.
#[derive(Clone, Debug)]
pub struct Term {
    pub left: Matrix,
    pub var: VarId,
    pub right: Matrix,
}

#[derive(Clone, Debug)]
pub struct AffineMatrixExpr {
    pub constant: SymMatrix,
    pub terms: Vec<Term>,
}

impl AffineMatrixExpr {
    pub fn constant(c: SymMatrix) -> Self {
        Self {
            constant: c,
            terms: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.constant.dim()
    }

    pub fn neg(&self) -> Self {
        Self {
            constant: self.constant.scale(-1.0),
            terms: self
                .terms
                .iter()
                .map(|t| Term {
                    left: -&t.left,
                    var: t.var,
                    right: t.right.clone(),
                })
                .collect(),
        }
    }
}

/// Assembles an [`AffineMatrixExpr`] block by block.
///
/// Off-diagonal placements at `(i, j)` also fill the mirrored block `(j, i)`
/// with the transpose.
#[derive(Clone, Debug)]
pub struct BlockExpr {
    offsets: Vec<usize>,
    sizes: Vec<usize>,
    constant: Matrix,
    terms: Vec<Term>,
}

impl BlockExpr {
    pub fn new(sizes: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut acc = 0;
        for &s in sizes {
            offsets.push(acc);
            acc += s;
        }
        Self {
            offsets,
            sizes: sizes.to_vec(),
            constant: Matrix::zeros(acc, acc),
            terms: Vec::new(),
        }
    }

    fn dim(&self) -> usize {
        self.constant.nrows()
    }

    fn embed_left(&self, i: usize, l: &Matrix) -> Matrix {
        assert_eq!(l.nrows(), self.sizes[i], "left factor rows must match block {i}");
        let mut e = Matrix::zeros(self.dim(), l.ncols());
        e.view_mut((self.offsets[i], 0), (l.nrows(), l.ncols())).copy_from(l);
        e
    }

    fn embed_right(&self, j: usize, r: &Matrix) -> Matrix {
        assert_eq!(r.ncols(), self.sizes[j], "right factor cols must match block {j}");
        let mut e = Matrix::zeros(r.nrows(), self.dim());
        e.view_mut((0, self.offsets[j]), (r.nrows(), r.ncols())).copy_from(r);
        e
    }

    /// Adds a constant block. Diagonal blocks are symmetrized.
    pub fn constant(mut self, i: usize, j: usize, m: &Matrix) -> Self {
        assert_eq!((m.nrows(), m.ncols()), (self.sizes[i], self.sizes[j]));
        let (oi, oj) = (self.offsets[i], self.offsets[j]);
        if i == j {
            let s = (m + m.transpose()) * 0.5;
            let mut v = self.constant.view_mut((oi, oi), (m.nrows(), m.nrows()));
            v += s;
        } else {
            {
                let mut v = self.constant.view_mut((oi, oj), (m.nrows(), m.ncols()));
                v += m;
            }
            let mut v = self.constant.view_mut((oj, oi), (m.ncols(), m.nrows()));
            v += m.transpose();
        }
        self
    }

    /// `c·I` on diagonal block `i`.
    pub fn identity(self, i: usize, c: f64) -> Self {
        let n = self.sizes[i];
        self.constant(i, i, &(Matrix::identity(n, n) * c))
    }

    /// `L X R` at block `(i, j)`, `i ≠ j`.
    pub fn term(mut self, i: usize, j: usize, l: &Matrix, var: VarId, r: &Matrix) -> Self {
        assert_ne!(i, j, "use var/congruence for diagonal blocks");
        let term = Term {
            left: self.embed_left(i, l),
            var,
            right: self.embed_right(j, r),
        };
        self.terms.push(term);
        self
    }

    /// `c·X` on diagonal block `i` for a symmetric variable `X`.
    pub fn var(self, i: usize, var: VarId, c: f64) -> Self {
        let n = self.sizes[i];
        let eye = Matrix::identity(n, n);
        self.congruence(i, &eye, var, c)
    }

    /// `c·L X Lᵀ` on diagonal block `i` for a symmetric variable `X`.
    pub fn congruence(mut self, i: usize, l: &Matrix, var: VarId, c: f64) -> Self {
        let term = Term {
            left: self.embed_left(i, &(l * (0.5 * c))),
            var,
            right: self.embed_right(i, &l.transpose()),
        };
        self.terms.push(term);
        self
    }

    /// `c·tr(X)·I` on a 1×1 diagonal block.
    pub fn trace(mut self, i: usize, var: VarId, n: usize, c: f64) -> Self {
        assert_eq!(self.sizes[i], 1, "trace terms live in scalar blocks");
        for k in 0..n {
            let mut e = Matrix::zeros(1, n);
            e[(0, k)] = 1.0;
            self = self.congruence(i, &e, var, c);
        }
        self
    }

    pub fn build(self) -> AffineMatrixExpr {
        AffineMatrixExpr {
            constant: SymMatrix::from_symmetrized(self.constant),
            terms: self.terms,
        }
    }
}

/// `Positive`: expression ⪰ margin·I. `Negative`: expression ⪯ −margin·I.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Sense {
    Positive,
    Negative,
}

#[derive(Clone, Debug)]
pub struct Constraint {
    pub name: String,
    pub expr: AffineMatrixExpr,
    pub sense: Sense,
    /// Strict constraints must clear the target margin; non-strict ones only
    /// need to be nonnegative up to [`VERIFY_SLACK`].
    pub strict: bool,
}

impl Constraint {
    fn normalized(&self) -> AffineMatrixExpr {
        match self.sense {
            Sense::Positive => self.expr.clone(),
            Sense::Negative => self.expr.neg(),
        }
    }
}

/// Values for every declared variable, indexed by [`VarId`].
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment(pub Vec<Matrix>);

impl Assignment {
    pub fn get(&self, id: VarId) -> &Matrix {
        &self.0[id.0]
    }

    pub fn sym(&self, id: VarId) -> SymMatrix {
        SymMatrix::from_symmetrized(self.0[id.0].clone())
    }

    pub fn set(&mut self, id: VarId, m: Matrix) {
        self.0[id.0] = m;
    }
}

pub fn evaluate(expr: &AffineMatrixExpr, assignment: &Assignment) -> Result<SymMatrix> {
    let mut acc = expr.constant.as_matrix().clone();
    for t in &expr.terms {
        let x = assignment
            .0
            .get(t.var.0)
            .ok_or_else(|| Error::MalformedProblem(format!("no value for variable #{}", t.var.0)))?;
        if x.nrows() != t.left.ncols() || x.ncols() != t.right.nrows() {
            return Err(Error::Dimension(format!(
                "variable #{} is {}x{}, term expects {}x{}",
                t.var.0,
                x.nrows(),
                x.ncols(),
                t.left.ncols(),
                t.right.nrows()
            )));
        }
        let lxr = &t.left * x * &t.right;
        acc += &lxr + lxr.transpose();
    }
    Ok(SymMatrix::from_symmetrized(acc))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Objective {
    /// Stop at the first central point that clears the target margin.
    Feasibility,
    /// Follow the central path to the end and return the best verified point.
    MaxMargin,
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    /// Budget of Newton steps per attempt.
    pub max_iters: usize,
    pub restarts: usize,
    pub rng_seed: u64,
    /// Absolute margin every strict constraint must clear.
    pub target_margin: f64,
    pub objective: Objective,
    /// Radius of the Euclidean ball on the flattened variables that keeps
    /// the barrier problem bounded.
    pub radius: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iters: 800,
            restarts: 3,
            rng_seed: 0,
            target_margin: 1e-6,
            objective: Objective::Feasibility,
            radius: 1e6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    Verified,
    Unknown,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConstraintReport {
    pub name: String,
    pub min_eig: f64,
    pub strict: bool,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerificationReport {
    pub constraints: Vec<ConstraintReport>,
    pub passed: bool,
    /// Smallest normalized eigenvalue over all constraints.
    pub margin: f64,
}

#[derive(Clone, Debug)]
pub struct LmiSolution {
    pub assignment: Assignment,
    pub achieved_margin: f64,
    pub status: SolveStatus,
    pub report: VerificationReport,
    pub iterations: usize,
}

#[derive(Clone, Debug, Default)]
pub struct LmiProblem {
    pub variables: Vec<MatrixVariable>,
    pub constraints: Vec<Constraint>,
}

impl LmiProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_symmetric(&mut self, name: &str, n: usize) -> VarId {
        self.variables.push(MatrixVariable {
            name: name.into(),
            rows: n,
            cols: n,
            kind: VarKind::Symmetric,
        });
        VarId(self.variables.len() - 1)
    }

    pub fn add_rectangular(&mut self, name: &str, rows: usize, cols: usize) -> VarId {
        self.variables.push(MatrixVariable {
            name: name.into(),
            rows,
            cols,
            kind: VarKind::Rectangular,
        });
        VarId(self.variables.len() - 1)
    }

    pub fn add_constraint(&mut self, name: &str, expr: AffineMatrixExpr, sense: Sense) {
        self.constraints.push(Constraint {
            name: name.into(),
            expr,
            sense,
            strict: true,
        });
    }

    pub fn add_nonstrict(&mut self, name: &str, expr: AffineMatrixExpr, sense: Sense) {
        self.constraints.push(Constraint {
            name: name.into(),
            expr,
            sense,
            strict: false,
        });
    }

    pub fn var_id(&self, name: &str) -> Option<VarId> {
        self.variables.iter().position(|v| v.name == name).map(VarId)
    }

    pub fn zero_assignment(&self) -> Assignment {
        Assignment(self.variables.iter().map(|v| Matrix::zeros(v.rows, v.cols)).collect())
    }

    /// Checks that every term references a declared variable with matching shape.
    pub fn validate(&self) -> Result<()> {
        if self.constraints.is_empty() {
            return Err(Error::MalformedProblem("no constraints".into()));
        }
        for c in &self.constraints {
            let d = c.expr.dim();
            if d == 0 {
                return Err(Error::MalformedProblem(format!("constraint '{}' is empty", c.name)));
            }
            for t in &c.expr.terms {
                let v = self.variables.get(t.var.0).ok_or_else(|| {
                    Error::MalformedProblem(format!("constraint '{}' uses undeclared variable #{}", c.name, t.var.0))
                })?;
                if t.left.nrows() != d || t.right.ncols() != d || t.left.ncols() != v.rows || t.right.nrows() != v.cols
                {
                    return Err(Error::MalformedProblem(format!(
                        "constraint '{}': term on '{}' has incompatible factors",
                        c.name, v.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn verify(&self, assignment: &Assignment, tol: f64) -> Result<VerificationReport> {
        let mut constraints = Vec::with_capacity(self.constraints.len());
        let mut margin = f64::INFINITY;
        for c in &self.constraints {
            let value = evaluate(&c.normalized(), assignment)?;
            let min_eig = value.min_eig()?;
            margin = margin.min(min_eig);
            let floor = if c.strict { tol - VERIFY_SLACK } else { -VERIFY_SLACK };
            constraints.push(ConstraintReport {
                name: c.name.clone(),
                min_eig,
                strict: c.strict,
                passed: min_eig >= floor,
            });
        }
        let passed = constraints.iter().all(|c| c.passed);
        Ok(VerificationReport {
            constraints,
            passed,
            margin,
        })
    }

    pub fn solve(&self, opts: &SolveOptions) -> Result<LmiSolution> {
        solve(self, opts)
    }
}

pub fn verify(problem: &LmiProblem, assignment: &Assignment, tol: f64) -> Result<VerificationReport> {
    problem.verify(assignment, tol)
}

struct Compiled {
    offsets: Vec<usize>,
    n: usize,
    constants: Vec<Matrix>,
    // per constraint: (scalar index, coefficient matrix)
    basis: Vec<Vec<(usize, Matrix)>>,
}

impl Compiled {
    fn new(p: &LmiProblem) -> Self {
        let mut offsets = Vec::with_capacity(p.variables.len());
        let mut n = 0;
        for v in &p.variables {
            offsets.push(n);
            n += v.scalar_count();
        }
        let mut constants = Vec::new();
        let mut basis = Vec::new();
        for c in &p.constraints {
            let e = c.normalized();
            constants.push(e.constant.as_matrix().clone());
            let mut list = Vec::new();
            for (vi, v) in p.variables.iter().enumerate() {
                let terms: Vec<&Term> = e.terms.iter().filter(|t| t.var.0 == vi).collect();
                if terms.is_empty() {
                    continue;
                }
                for k in 0..v.scalar_count() {
                    let u = v.unit(k);
                    let mut a = Matrix::zeros(e.dim(), e.dim());
                    for t in &terms {
                        let lxr = &t.left * &u * &t.right;
                        a += &lxr + lxr.transpose();
                    }
                    if a.amax() > 0.0 {
                        list.push((offsets[vi] + k, (&a + a.transpose()) * 0.5));
                    }
                }
            }
            basis.push(list);
        }
        Self {
            offsets,
            n,
            constants,
            basis,
        }
    }

    fn flatten(&self, p: &LmiProblem, a: &Assignment) -> Vector {
        let mut x = Vector::zeros(self.n);
        for (vi, v) in p.variables.iter().enumerate() {
            let m = &a.0[vi];
            for k in 0..v.scalar_count() {
                x[self.offsets[vi] + k] = match v.kind {
                    VarKind::Rectangular => m[(k % v.rows, k / v.rows)],
                    VarKind::Symmetric => {
                        let (i, j) = sym_index(v.rows, k);
                        0.5 * (m[(i, j)] + m[(j, i)])
                    }
                };
            }
        }
        x
    }

    fn unflatten(&self, p: &LmiProblem, x: &Vector) -> Assignment {
        let mut out = Vec::with_capacity(p.variables.len());
        for (vi, v) in p.variables.iter().enumerate() {
            let mut m = Matrix::zeros(v.rows, v.cols);
            for k in 0..v.scalar_count() {
                let val = x[self.offsets[vi] + k];
                match v.kind {
                    VarKind::Rectangular => m[(k % v.rows, k / v.rows)] = val,
                    VarKind::Symmetric => {
                        let (i, j) = sym_index(v.rows, k);
                        m[(i, j)] = val;
                        m[(j, i)] = val;
                    }
                }
            }
            out.push(m);
        }
        Assignment(out)
    }

    fn value(&self, c: usize, x: &Vector) -> Matrix {
        let mut f = self.constants[c].clone();
        for (k, a) in &self.basis[c] {
            if x[*k] != 0.0 {
                f += a * x[*k];
            }
        }
        f
    }
}

struct BarrierState {
    f: f64,
    grad: Vector,
    hess: Matrix,
}

/// Barrier `−τ·t − Σ log det(F_c(x) − tI) − log(ρ² − ‖x‖²)` on z = (x, t).
/// Returns `None` outside the domain.
fn barrier(c: &Compiled, z: &Vector, tau: f64, rho: f64, with_derivs: bool) -> Option<BarrierState> {
    let n = c.n;
    let x = z.rows(0, n).into_owned();
    let t = z[n];
    let slack = rho * rho - x.norm_squared();
    if !(slack > 0.0) {
        return None;
    }
    let mut f = -tau * t - slack.ln();
    let mut grad = Vector::zeros(n + 1);
    let mut hess = Matrix::zeros(n + 1, n + 1);
    for ci in 0..c.constants.len() {
        let mut w = c.value(ci, &x);
        let d = w.nrows();
        for i in 0..d {
            w[(i, i)] -= t;
        }
        let chol = Cholesky::new(w)?;
        let logdet: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        if !logdet.is_finite() {
            return None;
        }
        f -= logdet;
        if !with_derivs {
            continue;
        }
        let winv = chol.inverse();
        let ms: Vec<(usize, Matrix)> = c.basis[ci].iter().map(|(k, a)| (*k, &winv * a)).collect();
        for (a, (k, mk)) in ms.iter().enumerate() {
            grad[*k] -= mk.trace();
            for (l, ml) in ms.iter().take(a + 1) {
                let h = trace_product(mk, ml);
                hess[(*k, *l)] += h;
                if l != k {
                    hess[(*l, *k)] += h;
                }
            }
            // coefficient of t is −I
            let h = -trace_product(mk, &winv);
            hess[(*k, n)] += h;
            hess[(n, *k)] += h;
        }
        grad[n] += winv.trace();
        hess[(n, n)] += trace_product(&winv, &winv);
    }
    if with_derivs {
        grad[n] -= tau;
        for i in 0..n {
            grad[i] += 2.0 * x[i] / slack;
            hess[(i, i)] += 2.0 / slack;
            for j in 0..n {
                hess[(i, j)] += 4.0 * x[i] * x[j] / (slack * slack);
            }
        }
    }
    Some(BarrierState { f, grad, hess })
}

// tr(A B) without forming the product
fn trace_product(a: &Matrix, b: &Matrix) -> f64 {
    let mut s = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            s += a[(i, j)] * b[(j, i)];
        }
    }
    s
}

fn newton_direction(hess: &Matrix, grad: &Vector) -> Option<Vector> {
    let n = hess.nrows();
    let scale = hess.diagonal().amax().max(1e-300);
    let mut ridge = 0.0;
    for _ in 0..8 {
        let mut h = hess.clone();
        for i in 0..n {
            h[(i, i)] += ridge;
        }
        if let Some(ch) = Cholesky::new(h) {
            let d = ch.solve(&(-grad));
            if d.iter().all(|v| v.is_finite()) {
                return Some(d);
            }
        }
        ridge = if ridge == 0.0 { 1e-14 * scale } else { ridge * 100.0 };
    }
    None
}

fn min_margin(c: &Compiled, x: &Vector) -> f64 {
    let mut m = f64::INFINITY;
    for ci in 0..c.constants.len() {
        let v = SymMatrix::from_symmetrized(c.value(ci, x));
        match v.min_eig() {
            Ok(e) => m = m.min(e),
            Err(_) => return f64::NEG_INFINITY,
        }
    }
    m
}

struct Attempt {
    best: Option<(Assignment, VerificationReport)>,
    iterations: usize,
}

fn run_attempt(p: &LmiProblem, c: &Compiled, x0: Vector, opts: &SolveOptions) -> Result<Attempt> {
    let n = c.n;
    let rho = opts.radius;
    let mut z = Vector::zeros(n + 1);
    z.rows_mut(0, n).copy_from(&x0);
    let start = min_margin(c, &x0);
    if !start.is_finite() {
        return Err(Error::NonFinite("initial constraint values"));
    }
    z[n] = start - 0.5 * (1.0 + start.abs());
    let total_dim: usize = c.constants.iter().map(|m| m.nrows()).sum();
    let mut tau = 1.0 / (1.0 + start.abs());
    let mut iterations = 0;
    let mut best: Option<(Assignment, VerificationReport)> = None;

    'outer: loop {
        // centering
        for _ in 0..100 {
            if iterations >= opts.max_iters {
                break 'outer;
            }
            let Some(st) = barrier(c, &z, tau, rho, true) else {
                break 'outer;
            };
            let Some(dz) = newton_direction(&st.hess, &st.grad) else {
                break 'outer;
            };
            iterations += 1;
            let dec2 = -st.grad.dot(&dz);
            if dec2 < 0.0 || dec2 * 0.5 < 1e-10 {
                break;
            }
            let mut step = 1.0;
            let mut moved = false;
            for _ in 0..60 {
                let cand = &z + &dz * step;
                if let Some(s2) = barrier(c, &cand, tau, rho, false) {
                    if s2.f <= st.f - 0.25 * step * dec2 {
                        z = cand;
                        moved = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !moved {
                break;
            }
        }

        let x = z.rows(0, n).into_owned();
        let assignment = c.unflatten(p, &x);
        let report = p.verify(&assignment, opts.target_margin)?;
        let improves = best.as_ref().is_none_or(|(_, r)| {
            (report.passed && !r.passed) || (report.passed == r.passed && report.margin > r.margin)
        });
        if improves {
            best = Some((assignment, report));
        }
        if opts.objective == Objective::Feasibility && best.as_ref().is_some_and(|(_, r)| r.passed) {
            break;
        }
        let gap = total_dim as f64 / tau;
        if gap < 1e-10 * (1.0 + z[n].abs()) || tau > 1e14 {
            break;
        }
        tau *= 10.0;
    }
    Ok(Attempt { best, iterations })
}

fn initial_point(p: &LmiProblem, c: &Compiled) -> Vector {
    let mean_norm = if c.constants.is_empty() {
        1.0
    } else {
        c.constants.iter().map(|m| m.norm()).sum::<f64>() / c.constants.len() as f64
    };
    let scale = if mean_norm > 0.0 { mean_norm } else { 1.0 };
    let mut a = p.zero_assignment();
    for (vi, v) in p.variables.iter().enumerate() {
        if v.kind == VarKind::Symmetric {
            a.0[vi] = Matrix::identity(v.rows, v.rows) * scale;
        }
    }
    c.flatten(p, &a)
}

pub fn solve(p: &LmiProblem, opts: &SolveOptions) -> Result<LmiSolution> {
    p.validate()?;
    if !(opts.radius > 0.0) || !(opts.target_margin >= 0.0) {
        return Err(Error::InvalidArgument(
            "radius must be positive and target_margin nonnegative".into(),
        ));
    }
    let c = Compiled::new(p);
    let mut x0 = initial_point(p, &c);
    if x0.norm() >= opts.radius {
        x0 *= 0.5 * opts.radius / x0.norm();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.rng_seed);
    let mut total_iters = 0;
    let mut best: Option<(Assignment, VerificationReport)> = None;
    for attempt in 0..=opts.restarts {
        let start = if attempt == 0 {
            x0.clone()
        } else {
            let spread = 1.0 + x0.amax();
            let mut s = x0.map(|v| v + spread * rng.random_range(-1.0..1.0));
            if s.norm() >= opts.radius {
                s *= 0.5 * opts.radius / s.norm();
            }
            s
        };
        let run = run_attempt(p, &c, start, opts)?;
        total_iters += run.iterations;
        if let Some((a, r)) = run.best {
            let improves = best
                .as_ref()
                .is_none_or(|(_, br)| (r.passed && !br.passed) || (r.passed == br.passed && r.margin > br.margin));
            if improves {
                best = Some((a, r));
            }
        }
        if best.as_ref().is_some_and(|(_, r)| r.passed) {
            break;
        }
    }
    let (assignment, report) = match best {
        Some(b) => b,
        None => {
            let a = c.unflatten(p, &x0);
            let r = p.verify(&a, opts.target_margin)?;
            (a, r)
        }
    };
    let status = if report.passed {
        SolveStatus::Verified
    } else {
        SolveStatus::Unknown
    };
    Ok(LmiSolution {
        achieved_margin: report.margin,
        assignment,
        status,
        report,
        iterations: total_iters,
    })
}
