mod common;

use common::samplers::{closed_loop_matrix, scale_of};
use common::*;
use dissinet::dissipativity::{
    dualize_supply, supply_eval, virtual_to_qsr, LinearNode, StorageCertificate, SupplyRate,
};
use dissinet::matrix::{definiteness, Definiteness, Matrix, SymMatrix, Vector};
use dissinet::synthesis::{dual_control, primal_control, SynthesisOptions};
use proptest::prelude::*;
use rand::Rng;

fn vector(rng: &mut TestRng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| rng.random_range(-2.0..2.0))
}

fn random_node(rng: &mut TestRng) -> LinearNode {
    let n = rng.random_range(1..=3);
    let r = rng.random_range(1..=2);
    let a = mat(rng, n, n) * rng.random_range(0.2..1.5);
    LinearNode::discrete(a, mat(rng, n, r), mat(rng, n, 1), mat(rng, 1, n)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn certificates_pass_independent_check_and_power_balance(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let node = random_node(&mut rng);
        let sr = SupplyRate::scalar(-rng.random_range(0.1..2.0), rng.random_range(-0.5..0.5), rng.random_range(0.0..2.0));
        let Ok(cert) = primal_control(&node, &sr, &SynthesisOptions::default()) else { return Ok(()) };
        let scale = scale_of(&node, &cert);
        let m = closed_loop_matrix(&node, &cert);
        prop_assert!(m.max_eig().unwrap() <= 1e-8 * scale, "max eig {:e}", m.max_eig().unwrap());
        prop_assert!(definiteness(&cert.storage, Definiteness::PositiveDefinite, None).unwrap().holds);
        for _ in 0..20 {
            let x = vector(&mut rng, node.n());
            let u = vector(&mut rng, 1);
            let phi = cert.dissipation_rate(&node, &x, &u).unwrap();
            let size = 1.0 + x.norm_squared() + u.norm_squared();
            prop_assert!(phi >= -1e-8 * scale * size, "phi {phi:e}");
        }
    }

    #[test]
    fn achievable_supplies_have_nonnegative_r(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let node = random_node(&mut rng);
        let sr = SupplyRate::scalar(-rng.random_range(0.1..2.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if let Ok(cert) = primal_control(&node, &sr, &SynthesisOptions::default()) {
            prop_assert!(cert.supply.r.min_eig().unwrap() >= -1e-9);
        }
    }

    #[test]
    fn primal_and_dual_routes_agree(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let node = random_node(&mut rng);
        let sr = SupplyRate::scalar(-rng.random_range(0.1..2.0), rng.random_range(-0.5..0.5), rng.random_range(0.1..2.0));
        let dual = dualize_supply(&sr).unwrap();
        let opts = SynthesisOptions::default();
        let primal = primal_control(&node, &sr, &opts);
        let dualr = dual_control(&node, &dual, &opts);
        for cert in primal.iter().chain(dualr.iter()) {
            let m = closed_loop_matrix(&node, cert);
            prop_assert!(m.max_eig().unwrap() <= 1e-8 * scale_of(&node, cert));
            prop_assert!((cert.supply.q[(0, 0)] - sr.q[(0, 0)]).abs() <= 1e-9 * (1.0 + sr.q[(0, 0)].abs()));
        }
        prop_assert_eq!(
            primal.is_ok(),
            dualr.is_ok(),
            "primal {:?} / dual {:?}",
            primal.as_ref().err().map(|e| e.to_string()),
            dualr.as_ref().err().map(|e| e.to_string())
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn virtual_output_supply_identity(seed in any::<u64>(), m in 1usize..5, with_q in any::<bool>()) {
        let mut rng = rng(seed);
        let r_hat = sym(&mut rng, m);
        let q_hat = sym(&mut rng, m);
        let sr = virtual_to_qsr(with_q.then_some(&q_hat), &r_hat).unwrap();
        let y = vector(&mut rng, m);
        let u = vector(&mut rng, m);
        let z = &y + r_hat.as_matrix() * &u;
        let mut expect = z.dot(&u);
        if with_q {
            expect -= (y.transpose() * q_hat.as_matrix() * &y)[(0, 0)];
        }
        let got = supply_eval(&sr, &y, &u).unwrap();
        prop_assert!((got - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
    }

    #[test]
    fn supply_eval_matches_stacked_form(seed in any::<u64>(), p in 1usize..4, m in 1usize..4) {
        let mut rng = rng(seed);
        let sr = SupplyRate::new(sym(&mut rng, p), mat(&mut rng, p, m), sym(&mut rng, m)).unwrap();
        let y = vector(&mut rng, p);
        let u = vector(&mut rng, m);
        let w = Vector::from_iterator(p + m, y.iter().chain(u.iter()).copied());
        let expect = (w.transpose() * sr.stacked().as_matrix() * &w)[(0, 0)];
        prop_assert!((supply_eval(&sr, &y, &u).unwrap() - expect).abs() <= 1e-11 * (1.0 + expect.abs()));
    }
}

#[test]
fn closed_loop_matrix_helper_matches_library() {
    let mut rng = rng(11);
    let node = random_node(&mut rng);
    let cert = StorageCertificate {
        p: SymMatrix::identity(node.n()),
        storage: SymMatrix::identity(node.n()),
        k: Matrix::zeros(node.r(), node.n()),
        supply: SupplyRate::scalar(-1.0, 0.2, 0.5),
        margin: 0.0,
        variant: "fixed".into(),
    };
    let lib =
        dissinet::dissipativity::dissipation_lmi_matrix(&node, Some(&cert.k), &cert.supply, &cert.storage).unwrap();
    assert!((lib.as_matrix() - closed_loop_matrix(&node, &cert).as_matrix()).amax() < 1e-12);
}
