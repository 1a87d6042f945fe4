//! Seeded random generators shared by the property suites. Proptest
//! drives the seeds, so failures shrink to a reproducible seed.
#![allow(dead_code)]

pub mod samplers;

use dissinet::graph::{random_connected, seeded_rng, WeightedGraph};
use dissinet::matrix::{Matrix, SymMatrix};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub type TestRng = ChaCha8Rng;

pub fn rng(seed: u64) -> TestRng {
    seeded_rng(seed)
}

pub fn mat(rng: &mut TestRng, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

pub fn sym(rng: &mut TestRng, n: usize) -> SymMatrix {
    SymMatrix::from_symmetrized(mat(rng, n, n))
}

/// Random orthogonal matrix from the QR factor of a random square.
pub fn orthogonal(rng: &mut TestRng, n: usize) -> Matrix {
    mat(rng, n, n).qr().q()
}

/// `U diag(λ) Uᵀ` with `λᵢ` uniform in `[lo, hi]`.
pub fn with_spectrum(rng: &mut TestRng, n: usize, lo: f64, hi: f64) -> SymMatrix {
    let u = orthogonal(rng, n);
    let d: Vec<f64> = (0..n)
        .map(|_| if hi > lo { rng.random_range(lo..hi) } else { lo })
        .collect();
    SymMatrix::from_symmetrized(&u * Matrix::from_diagonal(&d.into()) * u.transpose())
}

/// PD with spectrum in `[lo, hi]`, `lo > 0`.
pub fn pd(rng: &mut TestRng, n: usize, lo: f64, hi: f64) -> SymMatrix {
    with_spectrum(rng, n, lo, hi)
}

/// PSD of the given rank.
pub fn psd_rank(rng: &mut TestRng, n: usize, rank: usize) -> SymMatrix {
    let f = mat(rng, n, rank);
    SymMatrix::from_symmetrized(&f * f.transpose())
}

/// Invertible matrix with singular values bounded away from zero.
pub fn invertible(rng: &mut TestRng, n: usize) -> Matrix {
    let u = orthogonal(rng, n);
    let v = orthogonal(rng, n);
    let s: Vec<f64> = (0..n)
        .map(|_| rng.random_range(0.3..2.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 })
        .collect();
    u * Matrix::from_diagonal(&s.into()) * v.transpose()
}

pub fn connected_graph(rng: &mut TestRng, n: usize, w_lo: f64, w_hi: f64) -> WeightedGraph {
    let p = rng.random_range(0.0..0.6);
    random_connected(n, p, w_lo, w_hi, rng).unwrap()
}

/// Arbitrary (possibly disconnected) graph on `n` nodes.
pub fn any_graph(rng: &mut TestRng, n: usize) -> WeightedGraph {
    let p = rng.random_range(0.0..0.6);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                edges.push((i, j, rng.random_range(0.1..2.0)));
            }
        }
    }
    WeightedGraph::new(n, edges).unwrap()
}

pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).amax()
}
