mod common;

use common::*;
use dissinet::matrix::{
    block, block_inverse_2x2, definiteness, eig_sym, inertia, schur_complement, Definiteness, Eliminate, Inertia,
    Matrix, SymMatrix,
};
use proptest::prelude::*;
use rand::Rng;

const MODES: [Definiteness; 4] = [
    Definiteness::PositiveDefinite,
    Definiteness::PositiveSemidefinite,
    Definiteness::NegativeDefinite,
    Definiteness::NegativeSemidefinite,
];

fn stack(q: &SymMatrix, s: &Matrix, r: &SymMatrix) -> SymMatrix {
    SymMatrix::from_symmetrized(
        block(&[
            vec![q.as_matrix().clone(), s.clone()],
            vec![s.transpose(), r.as_matrix().clone()],
        ])
        .unwrap(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn definiteness_follows_eigen_signs(seed in any::<u64>(), n in 1usize..7, tol in 1e-9f64..1e-3) {
        let mut rng = rng(seed);
        // mix generic matrices with planted zero and near-tolerance eigenvalues
        let m = match rng.random_range(0..3) {
            0 => sym(&mut rng, n),
            1 => {
                let rank = rng.random_range(0..=n);
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                psd_rank(&mut rng, n, rank).scale(sign)
            }
            _ => with_spectrum(&mut rng, n, -2.0 * tol, 2.0 * tol),
        };
        let e = eig_sym(&m).unwrap();
        for mode in MODES {
            let v = definiteness(&m, mode, Some(tol)).unwrap();
            let expect = match mode {
                Definiteness::PositiveDefinite => e.values.iter().all(|&l| l > tol),
                Definiteness::PositiveSemidefinite => e.values.iter().all(|&l| l >= -tol),
                Definiteness::NegativeDefinite => e.values.iter().all(|&l| l < -tol),
                Definiteness::NegativeSemidefinite => e.values.iter().all(|&l| l <= tol),
                Definiteness::Indefinite => unreachable!(),
            };
            prop_assert_eq!(v.holds, expect, "mode {:?}, eigs {:?}", mode, e.values);
            prop_assert_eq!(v.min_eig, e.min());
            prop_assert_eq!(v.max_eig, e.max());
        }
    }

    #[test]
    fn eig_sym_reconstructs(seed in any::<u64>(), n in 1usize..9) {
        let mut rng = rng(seed);
        let m = sym(&mut rng, n);
        let e = eig_sym(&m).unwrap();
        let v = &e.vectors;
        let rebuilt = v * Matrix::from_diagonal(&e.values) * v.transpose();
        prop_assert!(max_abs_diff(&rebuilt, m.as_matrix()) < 1e-10);
        prop_assert!(max_abs_diff(&(v.transpose() * v), &Matrix::identity(n, n)) < 1e-10);
        prop_assert!(e.values.as_slice().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn congruence_preserves_psd(seed in any::<u64>(), n in 1usize..6, k in 1usize..6) {
        let mut rng = rng(seed);
        let rank = rng.random_range(0..=n);
        let a = psd_rank(&mut rng, n, rank);
        let b = mat(&mut rng, n, k);
        let v = definiteness(&a.congruence(&b), Definiteness::PositiveSemidefinite, None).unwrap();
        prop_assert!(v.holds, "min eig {}", v.min_eig);
    }

    #[test]
    fn congruence_full_column_rank_preserves_pd(seed in any::<u64>(), n in 1usize..6) {
        let mut rng = rng(seed);
        let k = rng.random_range(1..=n);
        let a = pd(&mut rng, n, 0.1, 3.0);
        // orthonormal columns scaled by invertible factor keep full column rank
        let b = orthogonal(&mut rng, n).columns(0, k).into_owned() * invertible(&mut rng, k);
        prop_assert!(definiteness(&a.congruence(&b), Definiteness::PositiveDefinite, None).unwrap().holds);
    }

    #[test]
    fn dominated_block_matrix_is_psd(seed in any::<u64>(), n in 1usize..5, strict in any::<bool>()) {
        let mut rng = rng(seed);
        let rank = rng.random_range(0..=n);
        let b = psd_rank(&mut rng, n, rank);
        let (lo, hi) = if strict { (0.05, 2.0) } else { (0.0, 2.0) };
        let a = b.add(&with_spectrum(&mut rng, n, lo, hi));
        let c = b.add(&with_spectrum(&mut rng, n, lo, hi));
        let full = stack(&a, b.as_matrix(), &c);
        let mode = if strict { Definiteness::PositiveDefinite } else { Definiteness::PositiveSemidefinite };
        let v = definiteness(&full, mode, None).unwrap();
        prop_assert!(v.holds, "min eig {}", v.min_eig);
    }

    #[test]
    fn dualization_lemma(seed in any::<u64>(), n in 1usize..5, p in 1usize..5) {
        // [I; M]ᵀ P [I; M] ≺ 0 with C ⪰ 0  ⇔  [−Mᵀ; I]ᵀ P⁻¹ [−Mᵀ; I] ≻ 0 with 𝒜 ⪯ 0
        let mut rng = rng(seed);
        let a = with_spectrum(&mut rng, n, -3.0, -0.1);
        let c = with_spectrum(&mut rng, p, 0.1, 3.0);
        let b = mat(&mut rng, n, p) * rng.random_range(0.0..2.0);
        let m = mat(&mut rng, p, n) * rng.random_range(0.0..3.0);
        let Ok((ai, bi, ci)) = block_inverse_2x2(&a, &b, &c) else { return Ok(()) };

        let primal = SymMatrix::from_symmetrized(
            a.as_matrix() + &b * &m + m.transpose() * b.transpose() + m.transpose() * c.as_matrix() * &m,
        );
        let bm = &m * &bi;
        let dual = SymMatrix::from_symmetrized(
            &m * ai.as_matrix() * m.transpose() - &bm - bm.transpose() + ci.as_matrix(),
        );
        let lhs = definiteness(&primal, Definiteness::NegativeDefinite, Some(1e-9)).unwrap().holds;
        let rhs = definiteness(&dual, Definiteness::PositiveDefinite, Some(1e-9)).unwrap().holds
            && definiteness(&ai, Definiteness::NegativeSemidefinite, Some(1e-9)).unwrap().holds;
        // skip numerically borderline cases
        let margin = primal.max_eig().unwrap().abs().min(dual.min_eig().unwrap().abs());
        prop_assume!(margin > 1e-7);
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn block_inverse_round_trip(seed in any::<u64>(), p in 1usize..5, m in 1usize..5) {
        let mut rng = rng(seed);
        let q = sym(&mut rng, p);
        let s = mat(&mut rng, p, m);
        let r = sym(&mut rng, m);
        let full = stack(&q, &s, &r);
        prop_assume!(full.eig().unwrap().values.iter().all(|v| v.abs() > 1e-2));
        let (q1, s1, r1) = block_inverse_2x2(&q, &s, &r).unwrap();
        let (q2, s2, r2) = block_inverse_2x2(&q1, &s1, &r1).unwrap();
        let scale = 1.0 + full.inverse().unwrap().as_matrix().amax();
        prop_assert!(max_abs_diff(q2.as_matrix(), q.as_matrix()) < 1e-8 * scale * scale);
        prop_assert!(max_abs_diff(&s2, &s) < 1e-8 * scale * scale);
        prop_assert!(max_abs_diff(r2.as_matrix(), r.as_matrix()) < 1e-8 * scale * scale);
    }

    #[test]
    fn inertia_invariant_under_congruence(seed in any::<u64>(), n in 1usize..7) {
        let mut rng = rng(seed);
        let neg = rng.random_range(0..=n);
        let zero = rng.random_range(0..=n - neg);
        let mut d: Vec<f64> = Vec::new();
        d.extend((0..neg).map(|_| -rng.random_range(0.2..2.0)));
        d.extend((0..zero).map(|_| 0.0));
        d.extend((0..n - neg - zero).map(|_| rng.random_range(0.2..2.0)));
        let u = orthogonal(&mut rng, n);
        let m = SymMatrix::from_symmetrized(&u * Matrix::from_diagonal(&d.into()) * u.transpose());
        let t = invertible(&mut rng, n);
        let expect = Inertia { neg, zero, pos: n - neg - zero };
        prop_assert_eq!(inertia(&m, Some(1e-8)).unwrap(), expect);
        prop_assert_eq!(inertia(&m.congruence(&t), Some(1e-8)).unwrap(), expect);
    }

    #[test]
    fn haynsworth_inertia_of_supply_block(seed in any::<u64>(), p in 1usize..5, m in 1usize..5) {
        let mut rng = rng(seed);
        let q = with_spectrum(&mut rng, p, -3.0, -0.1);
        let r = with_spectrum(&mut rng, m, 0.1, 3.0);
        let s = mat(&mut rng, p, m) * rng.random_range(0.0..4.0);
        let full = stack(&q, &s, &r);
        prop_assert_eq!(inertia(&full, Some(1e-10)).unwrap(), Inertia { neg: p, zero: 0, pos: m });
        // In(M) = In(R) + In(M/R)
        let schur = schur_complement(&full, p, Eliminate::Trailing).unwrap();
        prop_assert!(definiteness(&schur, Definiteness::NegativeDefinite, None).unwrap().holds);
    }
}
