mod common;

use common::samplers::*;
use common::*;
use dissinet::dissipativity::TimeDomain;
use dissinet::dissipativity::{dualize_supply, DualSupplyRate, LinearNode, SupplyRate};
use dissinet::matrix::{Matrix, SymMatrix, Vector};
use dissinet::network::{
    comparison_conditions, decentralized_check, dual_decentralized_check, dual_global_condition, global_condition,
    qmi_nonempty_check, simulate, stability_report, storage_decrease_check, Comparison, GlobalParams, Interconnection,
    NetworkModel, NetworkSpec, RecordOptions, Variant,
};
use dissinet::synthesis::{joint_decentralized_synthesis, SynthesisOptions};
use proptest::prelude::*;
use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn local_bounds_imply_global_condition(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let inst = instance(&mut rng);
        let degrees = inst.graph.degrees();
        let supplies: Vec<SupplyRate> = degrees.iter().map(|&d| primal_inside(&mut rng, &inst, d)).collect();
        for (sr, &d) in supplies.iter().zip(&degrees) {
            let v = decentralized_check(d, sr, inst.variant, &inst.params).unwrap();
            prop_assert!(v.holds, "sampler left variant {:?}: {:?}", inst.variant, v.bounds);
        }
        let g = global_condition(&supplies, &laplacian_h(&inst), None).unwrap();
        prop_assert!(g.verdict.holds && g.verdict.max_eig < -1e-10,
            "variant {:?}: max eig {:e}", inst.variant, g.verdict.max_eig);
        // the per-node QMI is necessary once R ⪰ 0; an indefinite R makes
        // q + 2sh + rh² < 0 solvable for any q
        for sr in supplies.iter().filter(|sr| sr.r.min_eig().unwrap() >= 0.0) {
            prop_assert!(qmi_nonempty_check(sr).unwrap().holds);
        }
    }

    #[test]
    fn dual_local_bounds_imply_dual_global_condition(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let inst = instance(&mut rng);
        let degrees = inst.graph.degrees();
        let duals: Vec<DualSupplyRate> = degrees.iter().map(|&d| dual_inside(&mut rng, &inst, d)).collect();
        for (dual, &d) in duals.iter().zip(&degrees) {
            let v = dual_decentralized_check(d, dual, inst.variant, &inst.params).unwrap();
            prop_assert!(v.holds, "sampler left dual variant {:?}: {:?}", inst.variant, v.bounds);
        }
        let g = dual_global_condition(&duals, &laplacian_h(&inst), None).unwrap();
        prop_assert!(g.verdict.holds && g.verdict.min_eig > 1e-10,
            "variant {:?}: min eig {:e}", inst.variant, g.verdict.min_eig);
        // and the primal mirror holds for the recovered supplies
        let primal: Vec<SupplyRate> = duals.iter().map(|d| d.to_primal().unwrap()).collect();
        prop_assert!(global_condition(&primal, &laplacian_h(&inst), None).unwrap().verdict.holds);
    }

    #[test]
    fn primal_and_dual_global_conditions_agree(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let n = rng.random_range(1..=5);
        let m = rng.random_range(1..=2);
        let supplies: Vec<SupplyRate> = (0..n)
            .map(|_| {
                let q = with_spectrum(&mut rng, m, -3.0, -0.1);
                let r = with_spectrum(&mut rng, m, 0.05, 2.0);
                let s = mat(&mut rng, m, m) * rng.random_range(0.0..2.0);
                SupplyRate::new(q, s, r).unwrap()
            })
            .collect();
        let h = mat(&mut rng, n * m, n * m) * rng.random_range(0.0..2.0);
        let duals: Vec<DualSupplyRate> = supplies.iter().map(|s| dualize_supply(s).unwrap()).collect();
        let p = global_condition(&supplies, &h, Some(1e-9)).unwrap().verdict;
        let d = dual_global_condition(&duals, &h, Some(1e-9)).unwrap().verdict;
        prop_assume!(p.max_eig.abs() > 1e-7 && d.min_eig.abs() > 1e-7);
        prop_assert_eq!(p.holds, d.holds);
        if p.holds {
            for sr in &supplies {
                prop_assert!(qmi_nonempty_check(sr).unwrap().holds);
            }
        }
    }

    #[test]
    fn diagonal_comparison_implies_laplacian_comparison(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let n = rng.random_range(2..=10);
        let block = rng.random_range(1..=2);
        let graph = connected_graph(&mut rng, n, 0.1, 2.0);
        let degrees = graph.degrees();
        let mut q = Vec::new();
        let mut r = Vec::new();
        for &d in &degrees {
            for _ in 0..block {
                q.push(rng.random_range(0.01..0.99) * d);
                r.push(rng.random_range(0.01..0.99) / (2.0 * d));
            }
        }
        let (q_hat, r_hat) = (SymMatrix::from_diagonal(&q), SymMatrix::from_diagonal(&r));
        let prop1 = comparison_conditions(&graph, block, None, &q_hat, &r_hat, Comparison::Prop1).unwrap();
        prop_assert!(prop1.holds);
        let lemma6 = comparison_conditions(&graph, block, None, &q_hat, &r_hat, Comparison::Lemma6).unwrap();
        prop_assert!(lemma6.holds, "min eig {:e}", lemma6.min_eig);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn certified_networks_are_stable_and_storage_monotone(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let n = rng.random_range(2..=5);
        let graph = connected_graph(&mut rng, n, 0.1, 0.5);
        let degrees = graph.degrees();
        let nodes: Vec<LinearNode> = (0..n)
            .map(|_| scalar_node(rng.random_range(0.5..1.1), rng.random_range(0.5..1.0), rng.random_range(0.02..0.08)))
            .collect();
        let params = GlobalParams::alpha(1.0);
        let opts = SynthesisOptions::default();
        let certs: Vec<_> = nodes
            .iter()
            .zip(&degrees)
            .map(|(node, &d)| joint_decentralized_synthesis(node, Variant::A, d, &params, &opts).map(|(c, _)| c))
            .collect::<Result<_, _>>()
            .map_err(|e| TestCaseError::fail(format!("joint synthesis failed: {e}")))?;
        let net = NetworkModel::linear(nodes, Interconnection::Laplacian { graph, block: 1 })
            .unwrap()
            .with_certificates(certs.into_iter().map(Some).collect())
            .unwrap();
        let rep = stability_report(&net.closed_loop_matrix().unwrap(), TimeDomain::Discrete, 0.0).unwrap();
        prop_assert!(rep.spectral_radius < 1.0, "spectral radius {}", rep.spectral_radius);
        let x0 = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let record = RecordOptions { storage: true, ..RecordOptions::default() };
        let traj = simulate(&net, &x0, 150, &record).unwrap();
        let v0 = traj.storage.as_ref().unwrap()[0];
        prop_assert!(storage_decrease_check(&traj).unwrap() <= 1e-10 * (1.0 + v0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn network_files_round_trip(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let inst = instance(&mut rng);
        let degrees = inst.graph.degrees();
        let spec = NetworkSpec {
            nodes: (0..degrees.len()).map(|_| scalar_node(rng.random_range(-1.0..1.0), 1.0, 0.1)).collect(),
            supplies: degrees.iter().map(|&d| primal_inside(&mut rng, &Instance { block: 1, ..clone_instance(&inst) }, d)).collect(),
            duals: Vec::new(),
            interconnection: Interconnection::Laplacian { graph: inst.graph.clone(), block: 1 },
            comparison: None,
        };
        let text = serde_json::to_string(&spec).unwrap();
        let back = NetworkSpec::from_json(&text).unwrap();
        prop_assert_eq!(&back, &spec);
        prop_assert_eq!(serde_json::to_string(&back).unwrap(), text);
    }
}

fn clone_instance(inst: &Instance) -> Instance {
    let params = match inst.variant {
        Variant::B => GlobalParams::shared(Matrix::from_element(1, 1, 0.1)),
        _ => inst.params.clone(),
    };
    Instance {
        graph: inst.graph.clone(),
        block: inst.block,
        variant: inst.variant,
        params,
    }
}
