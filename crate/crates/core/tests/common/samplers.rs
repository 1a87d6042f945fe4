//! Supply triples sampled strictly inside the decentralized bounds.

use super::*;
use dissinet::dissipativity::{DualSupplyRate, LinearNode, StorageCertificate, SupplyRate};
use dissinet::matrix::block;
use dissinet::network::{build_h, GlobalParams, Interconnection, Variant};

/// Distance kept from every bound, strict or not.
pub const MARGIN: f64 = 1e-3;

pub fn eye(m: usize) -> SymMatrix {
    SymMatrix::identity(m)
}

/// Symmetric with spectrum in `[lo + MARGIN, hi − MARGIN]`.
pub fn between(rng: &mut TestRng, m: usize, lo: f64, hi: f64) -> SymMatrix {
    assert!(hi - lo > 2.0 * MARGIN, "interval [{lo}, {hi}] too narrow");
    with_spectrum(rng, m, lo + MARGIN, hi - MARGIN)
}

/// PD slack with spectrum in `[MARGIN, hi]`.
pub fn slack(rng: &mut TestRng, m: usize, hi: f64) -> SymMatrix {
    with_spectrum(rng, m, MARGIN, hi)
}

pub struct Instance {
    pub graph: WeightedGraph,
    pub block: usize,
    pub variant: Variant,
    pub params: GlobalParams,
}

/// Connected graph with `n ≤ 12`, weights in `[0.1, 2]`, random variant and parameters.
pub fn instance(rng: &mut TestRng) -> Instance {
    let n = rng.random_range(2..=12);
    let graph = connected_graph(rng, n, 0.1, 2.0);
    let block = rng.random_range(1..=2);
    let variant = Variant::ALL[rng.random_range(0..4)];
    let params = match variant {
        Variant::A => GlobalParams::alpha(rng.random_range(0.0..2.0)),
        Variant::B => {
            let rank = rng.random_range(0..=block);
            GlobalParams::shared(psd_rank(rng, block, rank).into_matrix())
        }
        _ => GlobalParams::default(),
    };
    Instance {
        graph,
        block,
        variant,
        params,
    }
}

pub fn laplacian_h(inst: &Instance) -> Matrix {
    let ic = Interconnection::Laplacian {
        graph: inst.graph.clone(),
        block: inst.block,
    };
    build_h(&ic, inst.graph.n_nodes(), inst.block).unwrap()
}

/// Primal triple inside the variant's local bounds at degree `d`.
pub fn primal_inside(rng: &mut TestRng, inst: &Instance, d: f64) -> SupplyRate {
    let m = inst.block;
    let r_in = between(rng, m, 0.0, 1.0 / (2.0 * d));
    let (q, s, r) = match inst.variant {
        Variant::A => {
            let alpha = inst.params.alpha.unwrap();
            let at = (1.0 - alpha).max(0.0);
            let q = eye(m).scale(-2.0 * d * at).sub(&slack(rng, m, 2.0));
            (q, Matrix::identity(m, m) * (0.5 * alpha), r_in)
        }
        Variant::B => {
            let q = eye(m).scale(-2.0 * d).sub(&slack(rng, m, 2.0));
            (q, inst.params.shared_s.clone().unwrap(), r_in)
        }
        Variant::C => {
            let s = between(rng, m, 0.0, 1.0 / (3.0 * d));
            let q = eye(m).scale(-4.0 * d).sub(&s).sub(&slack(rng, m, 2.0));
            (q, s.into_matrix(), r_in)
        }
        Variant::D => {
            let s = between(rng, m, 0.0, 1.0);
            let r = eye(m).scale(1.0 / (2.0 * d)).sub(&s).sub(&slack(rng, m, 2.0));
            let q = s.scale(-2.0).sub(&eye(m).scale(4.0 * d)).sub(&slack(rng, m, 2.0));
            (q, s.into_matrix(), r)
        }
    };
    SupplyRate::new(q, s, r).unwrap()
}

/// Dual triple inside the dual local bounds, also keeping `𝒬 ≺ 0` and `ℛ ≻ 0`.
pub fn dual_inside(rng: &mut TestRng, inst: &Instance, d: f64) -> DualSupplyRate {
    let m = inst.block;
    let q_in = between(rng, m, -1.0 / (2.0 * d), 0.0);
    let (q, s, r) = match inst.variant {
        Variant::A => {
            let alpha = inst.params.alpha.unwrap();
            let at = (1.0 - alpha).max(0.0);
            let r = eye(m).scale(2.0 * d * at).add(&slack(rng, m, 2.0));
            (q_in, Matrix::identity(m, m) * (0.5 * alpha), r)
        }
        Variant::B => {
            let r = eye(m).scale(2.0 * d).add(&slack(rng, m, 2.0));
            (q_in, inst.params.shared_s.clone().unwrap(), r)
        }
        Variant::C => {
            let s = between(rng, m, 0.0, 1.0 / (3.0 * d));
            let r = eye(m).scale(4.0 * d).add(&s).add(&slack(rng, m, 2.0));
            (q_in, s.into_matrix(), r)
        }
        Variant::D => {
            // 𝒬 = 𝒮 − I/(2d) + E with 𝒮, E ≤ 0.45/(2d) keeps 𝒬 ≺ 0
            let s = between(rng, m, 0.0, 0.45 / (2.0 * d));
            let e = with_spectrum(rng, m, MARGIN, 0.45 / (2.0 * d));
            let q = s.sub(&eye(m).scale(1.0 / (2.0 * d))).add(&e);
            let r = s.scale(2.0).add(&eye(m).scale(4.0 * d)).add(&slack(rng, m, 2.0));
            (q, s.into_matrix(), r)
        }
    };
    DualSupplyRate::new(q, s, r).unwrap()
}

pub fn scalar_node(a: f64, b: f64, g: f64) -> LinearNode {
    let m1 = |v: f64| Matrix::from_element(1, 1, v);
    LinearNode::discrete(m1(a), m1(b), m1(g), m1(1.0)).unwrap()
}

/// Closed-loop dissipation matrix rebuilt from scratch, with `V = xᵀPx`.
pub fn closed_loop_matrix(node: &LinearNode, cert: &StorageCertificate) -> SymMatrix {
    let ak = &node.a + &node.b * &cert.k;
    let p = cert.storage.as_matrix();
    let sr = &cert.supply;
    let tl = ak.transpose() * p * &ak - p - node.c.transpose() * sr.q.as_matrix() * &node.c;
    let tr = ak.transpose() * p * &node.g - node.c.transpose() * &sr.s;
    let br = node.g.transpose() * p * &node.g - sr.r.as_matrix();
    SymMatrix::from_symmetrized(block(&[vec![tl, tr.clone()], vec![tr.transpose(), br]]).unwrap())
}

/// Magnitude used to scale the closed-loop acceptance tolerance.
pub fn scale_of(node: &LinearNode, cert: &StorageCertificate) -> f64 {
    let p = cert.storage.as_matrix().amax();
    1.0 + p * (1.0 + node.a.amax() + node.b.amax() * cert.k.amax() + node.g.amax()).powi(2)
        + cert.supply.q.as_matrix().amax()
        + cert.supply.r.as_matrix().amax()
}

/// Independent closed-loop check: the rebuilt matrix is NSD within `1e−8 · scale`
/// and the storage is PD.
pub fn independent_check(node: &LinearNode, cert: &StorageCertificate) -> bool {
    let m = closed_loop_matrix(node, cert);
    m.max_eig().unwrap() <= 1e-8 * scale_of(node, cert) && cert.storage.min_eig().unwrap() > 0.0
}
