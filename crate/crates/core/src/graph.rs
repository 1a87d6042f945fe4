//! Weighted undirected graphs and their Laplacian analytics.
//!
//! Node indices are 0-based. Edge weights are strictly positive and
//! symmetric; the Laplacian is `𝓛 = 𝒟 − 𝒜` with `𝒟 = diag(dᵢ)`,
//! `dᵢ = Σⱼ aᵢⱼ`.

use std::collections::{BTreeMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{kron, ones, pinv_sym_psd, Definiteness, Matrix, SymMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// Undirected graph with strictly positive symmetric weights, no self-loops
/// and no duplicate edges. Edges are kept sorted with `i < j`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedGraph {
    n: usize,
    edges: Vec<Edge>,
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
}

impl WeightedGraph {
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Graph("graph must have at least one node".into()));
        }
        let mut seen = BTreeMap::new();
        for (a, b, w) in edges {
            if a >= n || b >= n {
                return Err(Error::Graph(format!("edge ({a},{b}) out of range for {n} nodes")));
            }
            if a == b {
                return Err(Error::Graph(format!("self-loop at node {a}")));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::Graph(format!("edge ({a},{b}) has non-positive weight {w}")));
            }
            let key = (a.min(b), a.max(b));
            if seen.insert(key, w).is_some() {
                return Err(Error::Graph(format!("duplicate edge ({},{})", key.0, key.1)));
            }
        }
        let edges = seen.into_iter().map(|((i, j), weight)| Edge { i, j, weight }).collect();
        Ok(Self { n, edges })
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn degrees(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for e in &self.edges {
            d[e.i] += e.weight;
            d[e.j] += e.weight;
        }
        d
    }

    pub fn adjacency(&self) -> SymMatrix {
        let mut a = Matrix::zeros(self.n, self.n);
        for e in &self.edges {
            a[(e.i, e.j)] = e.weight;
            a[(e.j, e.i)] = e.weight;
        }
        SymMatrix::from_symmetrized(a)
    }

    pub fn neighbors(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.n];
        for e in &self.edges {
            adj[e.i].push((e.j, e.weight));
            adj[e.j].push((e.i, e.weight));
        }
        adj
    }

    /// Number of connected components, by breadth-first search.
    pub fn component_count(&self) -> usize {
        let adj = self.neighbors();
        let mut seen = vec![false; self.n];
        let mut count = 0;
        for start in 0..self.n {
            if seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for &(v, _) in &adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        queue.push_back(v);
                    }
                }
            }
        }
        count
    }

    pub fn is_connected(&self) -> bool {
        self.component_count() == 1
    }

    pub fn laplacian(&self) -> SymMatrix {
        let d = self.degrees();
        let a = self.adjacency();
        SymMatrix::from_symmetrized(Matrix::from_diagonal(&d.into()) - a.as_matrix())
    }

    pub fn laplacian_bundle(&self) -> Result<LaplacianBundle> {
        LaplacianBundle::new(self)
    }

    /// `𝓛 ⊗ I_block`.
    pub fn extended_laplacian(&self, block: usize) -> SymMatrix {
        SymMatrix::from_symmetrized(kron(self.laplacian().as_matrix(), &Matrix::identity(block, block)))
    }

    pub fn to_json(&self) -> Result<String> {
        let g = GraphJson {
            n: self.n,
            edges: self.edges.iter().map(|e| (e.i, e.j, e.weight)).collect(),
        };
        Ok(serde_json::to_string_pretty(&g)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let g: GraphJson = serde_json::from_str(s)?;
        Self::new(g.n, g.edges)
    }
}

impl Serialize for WeightedGraph {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        GraphJson {
            n: self.n,
            edges: self.edges.iter().map(|e| (e.i, e.j, e.weight)).collect(),
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for WeightedGraph {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let g = GraphJson::deserialize(de)?;
        WeightedGraph::new(g.n, g.edges).map_err(serde::de::Error::custom)
    }
}

/// Laplacian, adjacency and degree matrices together with the scalar
/// quantities the decentralized conditions consume.
#[derive(Clone, Debug)]
pub struct LaplacianBundle {
    pub laplacian: SymMatrix,
    pub adjacency: SymMatrix,
    pub degree: SymMatrix,
    pub degrees: Vec<f64>,
    pub d_min: f64,
    /// Algebraic connectivity (second-smallest Laplacian eigenvalue).
    pub lambda2: f64,
    pub connected: bool,
}

impl LaplacianBundle {
    pub fn new(g: &WeightedGraph) -> Result<Self> {
        let degrees = g.degrees();
        let adjacency = g.adjacency();
        let degree = SymMatrix::from_diagonal(&degrees);
        let laplacian = g.laplacian();
        let eig = laplacian.eig()?;
        let lambda2 = if g.n_nodes() > 1 { eig.values[1] } else { 0.0 };
        let d_min = degrees.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(Self {
            laplacian,
            adjacency,
            degree,
            degrees,
            d_min,
            lambda2,
            connected: g.is_connected(),
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.degrees.len()
    }

    fn require_connected(&self, what: &str) -> Result<()> {
        if !self.connected {
            return Err(Error::Graph(format!("{what} requires a connected graph")));
        }
        Ok(())
    }

    fn ones_outer(&self) -> Matrix {
        let one = ones(self.n_nodes());
        &one * one.transpose()
    }
}

/// Moore–Penrose pseudoinverse `𝓛†` of a connected graph's Laplacian.
pub fn laplacian_pinv(b: &LaplacianBundle) -> Result<SymMatrix> {
    b.require_connected("Laplacian pseudoinverse")?;
    pinv_sym_psd(&b.laplacian)
}

/// `𝓛 + (β/N)·11ᵀ` together with its inverse `𝓛† + 1/(βN)·11ᵀ`.
pub fn regularized_laplacian(b: &LaplacianBundle, beta: f64) -> Result<(SymMatrix, SymMatrix)> {
    if !(beta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "regularization beta must be positive, got {beta}"
        )));
    }
    b.require_connected("regularized Laplacian")?;
    let n = b.n_nodes() as f64;
    let j = b.ones_outer();
    let reg = SymMatrix::from_symmetrized(b.laplacian.as_matrix() + &j * (beta / n));
    let inv = SymMatrix::from_symmetrized(laplacian_pinv(b)?.as_matrix() + &j / (beta * n));
    Ok((reg, inv))
}

/// Minimum eigenvalues of `2𝒟 − 𝓛` and of `𝓛† + 1/(d_min·N)·11ᵀ − 𝒟⁻¹/3`.
/// Both matrices are PSD for every connected graph.
pub fn lemma4_bounds(b: &LaplacianBundle) -> Result<(f64, f64)> {
    b.require_connected("degree bounds")?;
    if !(b.d_min > 0.0) {
        return Err(Error::Graph("degree bounds need every node to have an edge".into()));
    }
    let first = b.degree.scale(2.0).sub(&b.laplacian).min_eig()?;
    let n = b.n_nodes() as f64;
    let dinv: Vec<f64> = b.degrees.iter().map(|d| 1.0 / (3.0 * d)).collect();
    let second = SymMatrix::from_symmetrized(
        laplacian_pinv(b)?.as_matrix() + b.ones_outer() / (b.d_min * n) - Matrix::from_diagonal(&dinv.into()),
    )
    .min_eig()?;
    Ok((first, second))
}

/// Checks `V L + L Vᵀ ⪰ 0` for `V = I_N ⊗ 𝒱` and `L = 𝓛 ⊗ I`.
pub fn laplacian_flow_lyapunov_check(b: &LaplacianBundle, v: &SymMatrix) -> Result<bool> {
    let n = b.n_nodes();
    let k = v.dim();
    let big_v = kron(&Matrix::identity(n, n), v.as_matrix());
    let big_l = kron(b.laplacian.as_matrix(), &Matrix::identity(k, k));
    let lyap = SymMatrix::from_symmetrized(&big_v * &big_l + &big_l * big_v.transpose());
    Ok(crate::matrix::definiteness(&lyap, Definiteness::PositiveSemidefinite, None)?.holds)
}

/// How edge weights are assigned by the random generators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightRule {
    Unit,
    Constant(f64),
    /// Conductance `1/R` of a resistive line of `R` ohms.
    Resistive(f64),
    /// Uniform in `[lo, hi]`, drawn from the generator's stream.
    Uniform(f64, f64),
}

impl WeightRule {
    fn draw(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            WeightRule::Unit => 1.0,
            WeightRule::Constant(w) => w,
            WeightRule::Resistive(r) => 1.0 / r,
            WeightRule::Uniform(lo, hi) => rng.random_range(lo..=hi),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            WeightRule::Unit => true,
            WeightRule::Constant(w) => w > 0.0 && w.is_finite(),
            WeightRule::Resistive(r) => r > 0.0 && r.is_finite(),
            WeightRule::Uniform(lo, hi) => lo > 0.0 && hi >= lo && hi.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid weight rule {self:?}")))
        }
    }
}

/// Seeded generator used throughout the crate: ChaCha with 8 rounds
/// (`rand_chacha::ChaCha8Rng`), seeded through `seed_from_u64`. Its output
/// stream is platform independent.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Preferential-attachment graph: a clique on `m_attach + 1` nodes, then each
/// new node links to `m_attach` distinct existing nodes chosen with
/// probability proportional to their current (unweighted) degree.
pub fn barabasi_albert(n: usize, m_attach: usize, weight: WeightRule, seed: u64) -> Result<WeightedGraph> {
    if m_attach == 0 {
        return Err(Error::InvalidArgument("m_attach must be at least 1".into()));
    }
    if n < m_attach + 1 {
        return Err(Error::InvalidArgument(format!(
            "need n >= m_attach + 1, got n={n}, m_attach={m_attach}"
        )));
    }
    weight.validate()?;
    let mut rng = seeded_rng(seed);
    let mut edges = Vec::new();
    // each edge endpoint appears once, so uniform picks are degree-proportional
    let mut endpoints: Vec<usize> = Vec::new();
    let seed_size = m_attach + 1;
    for i in 0..seed_size {
        for j in (i + 1)..seed_size {
            edges.push((i, j, weight.draw(&mut rng)));
            endpoints.push(i);
            endpoints.push(j);
        }
    }
    for new in seed_size..n {
        let mut targets: Vec<usize> = Vec::with_capacity(m_attach);
        while targets.len() < m_attach {
            let t = endpoints[rng.random_range(0..endpoints.len())];
            if !targets.contains(&t) {
                targets.push(t);
            }
        }
        for t in targets {
            edges.push((t, new, weight.draw(&mut rng)));
            endpoints.push(t);
            endpoints.push(new);
        }
    }
    WeightedGraph::new(n, edges)
}

/// Random connected graph: a random spanning tree plus extra edges, weights
/// uniform in `[w_lo, w_hi]`. Used by the fuzz suites.
pub fn random_connected(
    n: usize,
    extra_edge_prob: f64,
    w_lo: f64,
    w_hi: f64,
    rng: &mut impl Rng,
) -> Result<WeightedGraph> {
    let mut edges = BTreeMap::new();
    for v in 1..n {
        let u = rng.random_range(0..v);
        edges.insert((u, v), rng.random_range(w_lo..=w_hi));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if !edges.contains_key(&(i, j)) && rng.random_bool(extra_edge_prob) {
                edges.insert((i, j), rng.random_range(w_lo..=w_hi));
            }
        }
    }
    WeightedGraph::new(n, edges.into_iter().map(|((i, j), w)| (i, j, w)))
}
