use isogftns::checkpoint::{read_checkpoint, write_checkpoint};
use isogftns::extras::circuit::{arrow_field, bonds};
use isogftns::extras::{quantum_double_checks, schedule_circuit, GroupTable};
use isogftns::iso::{random_init, ArrowPattern, LegSet};
use isogftns::linalg::{max_abs_c, orthogonality_defect, purity_defect, random_antisymmetric, RMat};
use isogftns::observables::{realspace_chern, unfolded_occupation, RealSpaceCovariance, RegionPartition};
use isogftns::optimize::{common_cell, physical_covariances, retract};
use isogftns::{Boundary, ModelKind, ModelSpec, MomentumGrid};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn pattern(i: usize) -> ArrowPattern {
    match i % 4 {
        0 => ArrowPattern::Unconstrained,
        1 => ArrowPattern::Uniform,
        2 => ArrowPattern::Alternating,
        _ => ArrowPattern::Custom(vec![LegSet::parse("ru").unwrap(), LegSet::parse("rd").unwrap()]),
    }
}

fn model(kind: ModelKind, l: usize, p: &ArrowPattern) -> ModelSpec {
    let cell = common_cell(kind.min_cell(), p.min_cell());
    let grid = MomentumGrid::new(l, l, Boundary::AntiPeriodic, Boundary::Periodic, cell).unwrap();
    ModelSpec::new(kind, grid).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn grid_covariances_are_pure_and_real(seed in 0u64..1_000_000, p in 0usize..4, n_v in 1usize..4) {
        let p = pattern(p);
        let m = model(ModelKind::FermiSurface, 4, &p);
        let params = random_init(&p, n_v, m.cell(), seed).unwrap();
        let gammas = physical_covariances(&params, &m).unwrap();
        for (k, g) in gammas.iter().enumerate() {
            prop_assert!(purity_defect(g) < 1e-10);
            let minus = &gammas[m.grid.neg_index(k)];
            prop_assert!(max_abs_c(&(minus + g.transpose())) < 1e-10);
        }
    }

    #[test]
    fn occupations_lie_in_unit_interval(seed in 0u64..1_000_000, p in 0usize..4) {
        let p = pattern(p);
        let m = model(ModelKind::PipSc, 4, &p);
        let params = random_init(&p, 2, m.cell(), seed).unwrap();
        let occ = unfolded_occupation(&physical_covariances(&params, &m).unwrap(), &m.grid).unwrap();
        prop_assert_eq!(occ.len(), 16);
        prop_assert!(occ.iter().all(|n| (0.0..=1.0).contains(n)));
    }

    #[test]
    fn chern_number_flips_under_region_swap(seed in 0u64..1_000_000, r in 2.0f64..3.5) {
        let p = ArrowPattern::Uniform;
        let m = model(ModelKind::PipSc, 8, &p);
        let params = random_init(&p, 1, m.cell(), seed).unwrap();
        let gammas = physical_covariances(&params, &m).unwrap();
        let real = RealSpaceCovariance::from_momentum(&gammas, &m.grid).unwrap();
        let part = RegionPartition::new(8, 8, r);
        let nu = realspace_chern(&real, &gammas, &part).unwrap();
        let swapped = realspace_chern(&real, &gammas, &part.swapped_bc()).unwrap();
        prop_assert!((nu + swapped).abs() < 1e-9);
    }

    #[test]
    fn retraction_stays_orthogonal(seed in 0u64..1_000_000, p in 0usize..4, scale in 0.0f64..3.0) {
        let p = pattern(p);
        let params = random_init(&p, 2, p.min_cell(), seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let step: Vec<RMat> = params.q.iter().map(|q| random_antisymmetric(q.nrows(), scale, &mut rng)).collect();
        let moved = retract(&params, &step);
        for q in &moved.q {
            prop_assert!(orthogonality_defect(q) < 1e-12);
        }
        prop_assert!(moved.validate().is_ok());
    }

    #[test]
    fn checkpoints_round_trip(seed in 0u64..1_000_000, p in 0usize..4, n_v in 0usize..5) {
        let p = pattern(p);
        let params = random_init(&p, n_v, p.min_cell(), seed).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &params).unwrap();
        prop_assert_eq!(read_checkpoint(&mut buf.as_slice()).unwrap(), params);
    }

    #[test]
    fn gates_fire_after_their_producers(lx in 2usize..10, ly in 2usize..10, alt in any::<bool>()) {
        let p = if alt { ArrowPattern::Alternating } else { ArrowPattern::Uniform };
        let s = schedule_circuit(&p, lx, ly, 2).unwrap();
        let field = arrow_field(&p, lx, ly).unwrap();
        for (a, b) in bonds(&field, lx, ly).unwrap() {
            prop_assert!(s.gates[a].step < s.gates[b].step);
        }
        prop_assert_eq!(s.depth, s.gates.iter().map(|g| g.step).max().unwrap());
        prop_assert!(s.gates.iter().all(|g| g.step >= 1));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn cyclic_quantum_doubles_are_isometric(n in 2usize..6) {
        let g = GroupTable::cyclic(n).unwrap();
        for (_, check) in quantum_double_checks(&g) {
            prop_assert!(check.passes);
            prop_assert_eq!(check.constant, (n * n * n) as f64);
        }
    }
}
