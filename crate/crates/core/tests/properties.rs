//! Randomized invariants across the library.

mod common;

use common::{c, diag, random_hermitian, random_unitary};
use metachan::channel::{branch_superop, validate_superop};
use metachan::cli::config::{ModelConfig, OpSpec, RunConfig};
use metachan::cli::ExperimentConfig;
use metachan::hs_algebra::{hs_inner, partial_trace, sandwich, trace_distance, vectorize, Operator, Subsystem};
use metachan::manifold::{commutant_projections, ems_from_modes, ems_qubit, fixed_point_space, mm_projector};
use metachan::models::{
    dissipative_rim_maps, rim_channel, spin_bath_hamiltonians, LindbladSpec, RimSpec, SpinSystem,
};
use metachan::spectral::{propagate, spectral_decompose};
use metachan::trajectory::{exhaustive_branch_sum, polarization_histogram, run_ensemble, EnsembleSpec};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_operator(d: usize, r: &mut ChaCha8Rng) -> Operator {
    Operator::new(DMatrix::from_fn(d, d, |_, _| c(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)))).unwrap()
}

fn random_state(d: usize, r: &mut ChaCha8Rng) -> Operator {
    let a = random_operator(d, r);
    let p = &a * &a.adjoint();
    let tr = p.trace().re;
    (p * (1.0 / tr)).hermitian_part()
}

fn random_rim(seed: u64, d: usize) -> RimSpec {
    let mut r = rng(seed);
    let b = random_hermitian(d, &mut r);
    let cc = random_hermitian(d, &mut r);
    let gamma = r.random_range(0.0..0.5);
    let dphi = r.random_range(0.0..std::f64::consts::TAU);
    let t = r.random_range(0.2..2.0);
    RimSpec::new(b, cc, gamma, dphi, t).unwrap()
}

fn dims() -> impl Strategy<Value = usize> {
    prop_oneof![Just(2usize), Just(3), Just(4)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn hs_inner_matches_trace_formula(seed in any::<u64>(), d in 1usize..9) {
        let mut r = rng(seed);
        let (a, b) = (random_operator(d, &mut r), random_operator(d, &mut r));
        let mut direct = c(0.0, 0.0);
        for i in 0..d {
            for k in 0..d {
                direct += a.get(k, i).conj() * b.get(k, i);
            }
        }
        prop_assert!((hs_inner(&a, &b).unwrap() - direct).norm() < 1e-12);
    }

    #[test]
    fn sandwich_acts_as_left_right_product(seed in any::<u64>(), d in 1usize..6) {
        let mut r = rng(seed);
        let (x, rho, y) = (random_operator(d, &mut r), random_operator(d, &mut r), random_operator(d, &mut r));
        let lhs = sandwich(&x, &y).unwrap().apply(&vectorize(&rho)).unwrap();
        let rhs = vectorize(&(&(&x * &rho) * &y));
        prop_assert!((lhs.vector() - rhs.vector()).camax() < 1e-12);
    }

    #[test]
    fn partial_trace_preserves_trace(seed in any::<u64>(), da in 1usize..4, ds in 1usize..4) {
        let rho = random_operator(da * ds, &mut rng(seed));
        for keep in [Subsystem::Ancilla, Subsystem::System] {
            let red = partial_trace(&rho, (da, ds), keep).unwrap();
            prop_assert!((red.trace() - rho.trace()).norm() < 1e-12);
        }
    }

    #[test]
    fn rim_channels_are_unital_cptp(seed in any::<u64>(), d in dims()) {
        let spec = random_rim(seed, d);
        let (ch, maps) = rim_channel(&spec).unwrap();
        let id = Operator::identity(d);
        let completeness = ch.kraus().iter().fold(Operator::zeros(d), |acc, k| &acc + &(&k.adjoint() * k));
        prop_assert!((&completeness - &id).max_abs() < 1e-10);
        let report = ch.validate();
        prop_assert!(report.all_ok(), "{report:?}");
        // Φ̂†|𝕀⟩⟩ = |𝕀⟩⟩
        let dual = ch.natural().adjoint().apply(&vectorize(&id)).unwrap();
        prop_assert!((dual.vector() - vectorize(&id).vector()).camax() < 1e-10);
        // natural representation is the average of the two unitary branches
        let [u0, u1] = spec.branch_unitaries().unwrap();
        let avg = branch_superop(&u0).add(&branch_superop(&u1)).unwrap().matrix() * c(0.5, 0.0);
        prop_assert!((ch.natural().matrix() - avg).camax() < 1e-12);
        // each conditional map is CP
        prop_assert!(maps.min_choi_eigenvalue() > -1e-10);
        prop_assert!(validate_superop(&maps.channel_superop()).trace_preserving);
    }

    #[test]
    fn channel_power_matches_repeated_application(seed in any::<u64>(), d in dims(), m in 0u64..64) {
        let (ch, _) = rim_channel(&random_rim(seed, d)).unwrap();
        let rho = random_state(d, &mut rng(seed ^ 1));
        let mut step = rho.clone();
        for _ in 0..m {
            step = ch.apply(&step, 1).unwrap();
        }
        prop_assert!((&ch.apply(&rho, m).unwrap() - &step).max_abs() < 1e-10);
    }

    #[test]
    fn spectral_invariants(seed in any::<u64>(), d in dims()) {
        let (ch, _) = rim_channel(&random_rim(seed, d)).unwrap();
        let sd = spectral_decompose(ch.natural()).unwrap();
        let eigs = sd.eigenvalues();
        prop_assert!(eigs.iter().all(|z| z.norm() <= 1.0 + 1e-8));
        for z in eigs.iter().filter(|z| z.im.abs() > 1e-10) {
            prop_assert!(eigs.iter().any(|w| (w - z.conj()).norm() < 1e-10), "no partner for {z}");
        }
        if sd.diagonalizable() {
            prop_assert!(sd.biorthonormality_residual() < 1e-8);
            let rebuilt = sd.reconstruct().unwrap();
            prop_assert!((rebuilt.matrix() - ch.natural().matrix()).camax() < 1e-8);
            for (j, z) in eigs.iter().enumerate() {
                if z.norm() < 1.0 - 1e-10 {
                    prop_assert!(sd.right_op(j).trace().norm() < 1e-8);
                }
            }
            let rho = random_state(d, &mut rng(seed ^ 2));
            for m in [1u64, 7, 64] {
                let a = propagate(&sd, &rho, m, None).unwrap();
                let b = ch.apply(&rho, m).unwrap();
                prop_assert!(trace_distance(&a, &b).unwrap() < 1e-8);
            }
        }
    }

    #[test]
    fn fixed_points_commute_with_kraus(seed in any::<u64>(), d in dims()) {
        let (ch, _) = rim_channel(&random_rim(seed, d)).unwrap();
        let sd = spectral_decompose(ch.natural()).unwrap();
        let fp = fixed_point_space(&sd, &ch).unwrap();
        for rho in &fp.basis {
            for k in ch.kraus() {
                prop_assert!(rho.commutator(k).max_abs() < 1e-8);
            }
        }
    }

    #[test]
    fn commuting_pairs_give_rank_one_projections(seed in any::<u64>(), d in dims()) {
        let mut r = rng(seed);
        let v = random_unitary(d, &mut r);
        let eb: Vec<f64> = (0..d).map(|i| i as f64 + r.random_range(0.0..0.5)).collect();
        let ec: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
        let rot = |e: &[f64]| (&(&v * &diag(e)) * &v.adjoint()).hermitian_part();
        let s = commutant_projections(&rot(&eb), &rot(&ec)).unwrap();
        prop_assert_eq!(s.r(), d);
        prop_assert!(s.block_dims.iter().all(|&k| k == 1));
        // each projection is a simultaneous eigenprojector
        for p in &s.projections {
            let overlap: Vec<f64> = (0..d).map(|k| {
                let col = v.matrix().column(k).into_owned();
                (col.adjoint() * p.matrix() * &col)[(0, 0)].re
            }).collect();
            prop_assert!(overlap.iter().filter(|&&x| (x - 1.0).abs() < 1e-8).count() == 1);
        }
    }

    #[test]
    fn qubit_manifold_contract(gamma in 0.01f64..0.1, t in 0.6f64..1.4) {
        let spec = RimSpec::new(Operator::pauli_z(), Operator::pauli_x(), gamma, std::f64::consts::FRAC_PI_2, t).unwrap();
        let (ch, _) = rim_channel(&spec).unwrap();
        let sd = spectral_decompose(ch.natural()).unwrap();
        let mm = ems_qubit(&sd).unwrap();
        let res = mm.residuals();
        prop_assert!((res.min_purity - 1.0).abs() < 1e-3, "{res:?}");
        prop_assert!(res.dual_sum < 1e-8);
        prop_assert!(res.duality < 1e-6);
        let p = mm_projector(&mm).unwrap();
        let p2 = p.compose(&p).unwrap();
        prop_assert!((p2.matrix() - p.matrix()).camax() < 1e-6);
        for rho in &mm.ems {
            let image = p.apply_op(rho).unwrap();
            prop_assert!((&image - rho).max_abs() < 1e-8);
        }
    }

    #[test]
    fn manifold_is_gauge_invariant(seed in any::<u64>(), s in 0.05f64..20.0) {
        let mut r = rng(seed);
        let rho_fix = Operator::maximally_mixed(2);
        let rr = random_hermitian(2, &mut r);
        let rr = &rr - &(&Operator::identity(2) * (rr.trace().re / 2.0));
        let ll = random_hermitian(2, &mut r);
        let a = ems_from_modes(&rho_fix, &rr, &ll).unwrap();
        let b = ems_from_modes(&rho_fix, &(&rr * s), &(&ll * (1.0 / s))).unwrap();
        for (x, y) in a.ems.iter().zip(&b.ems).chain(a.duals.iter().zip(&b.duals)) {
            prop_assert!((x - y).max_abs() < 1e-10);
        }
    }

    #[test]
    fn closed_dissipative_cycle_matches_rim(seed in any::<u64>(), d in prop_oneof![Just(2usize), Just(4)]) {
        let spec = random_rim(seed, d);
        let (_, closed) = rim_channel(&spec).unwrap();
        let open = dissipative_rim_maps(&spec, &LindbladSpec::default()).unwrap();
        for (a, b) in closed.maps().iter().zip(open.maps()) {
            prop_assert!((a.matrix() - b.matrix()).camax() < 1e-10);
        }
    }

    #[test]
    fn spin_bath_operators(seed in any::<u64>(), k in 1usize..4) {
        let mut r = rng(seed);
        let sys = SpinSystem {
            hyperfine: (0..k).map(|_| [r.random_range(-5.0..5.0), r.random_range(-5.0..5.0), r.random_range(-5.0..5.0)]).collect(),
            positions: (0..k).map(|i| [i as f64 + r.random_range(0.0..0.5), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)]).collect(),
            larmor: 0.0,
            gyromagnetic: metachan::models::GAMMA_C13,
        };
        let (b, cc) = spin_bath_hamiltonians(&sys, false).unwrap();
        prop_assert!(b.hermiticity_residual() < 1e-12 && cc.hermiticity_residual() < 1e-12);
        prop_assert!(cc.trace().norm() < 1e-12);
    }

    #[test]
    fn branch_sum_reproduces_channel(seed in any::<u64>(), m in 1u64..9) {
        let spec = random_rim(seed, 2);
        let (ch, maps) = rim_channel(&spec).unwrap();
        let rho = random_state(2, &mut rng(seed ^ 3));
        let sum = exhaustive_branch_sum(&maps, &rho, m).unwrap();
        prop_assert!(trace_distance(&sum, &ch.apply(&rho, m).unwrap()).unwrap() < 1e-10);
    }

    #[test]
    fn config_round_trip(gamma in 0.0f64..1.0, t in 0.01f64..10.0, seed in any::<u64>(),
                         rounds in proptest::collection::btree_set(1u64..100_000, 0..6)) {
        let cfg = ExperimentConfig {
            schema: 1,
            description: "random".into(),
            model: ModelConfig::SingleQubit {
                b: OpSpec::from_operator(&random_hermitian(3, &mut rng(seed))),
                c: OpSpec::Named(metachan::cli::config::NamedOp::SigmaX),
                gamma,
                delta_phi: 0.3,
                t,
            },
            analysis: Default::default(),
            run: RunConfig { seed, rounds: rounds.into_iter().collect(), ..Default::default() },
            output: "somewhere".into(),
        };
        prop_assert_eq!(ExperimentConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn ensembles_conserve_mass_and_ignore_thread_count(seed in any::<u64>(), bins in 2usize..100) {
        let (_, maps) = rim_channel(&random_rim(seed, 2)).unwrap();
        let rho = Operator::maximally_mixed(2);
        let spec = EnsembleSpec::new(40, 150, vec![10, 40], seed);
        let one = run_ensemble(&maps, &rho, &spec.clone().with_threads(1)).unwrap();
        let four = run_ensemble(&maps, &rho, &spec.with_threads(4)).unwrap();
        prop_assert!(one.records.iter().zip(&four.records).all(|(a, b)| a.outcomes == b.outcomes));
        prop_assert!(one.mean_states.iter().zip(&four.mean_states).all(|(a, b)| a == b));
        let h = polarization_histogram(&one, bins, None).unwrap();
        prop_assert_eq!(h.total(), 150);
        prop_assert!(one.records.iter().all(|r| r.polarization.abs() <= 0.5));
    }
}
