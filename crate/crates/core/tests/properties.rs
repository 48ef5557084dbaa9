use pdmlab::{build_hamiltonian, make_grid, make_vector_potential, Builder, MassProfile, OrderingParams, Physics, ScalarField};
use pdmlab::spectral::{solve_lowest, Method};
use proptest::prelude::*;

fn physics(mass: MassProfile, b: f64, gauge: &str, k: f64) -> Physics {
    Physics {
        mass,
        vector_potential: make_vector_potential(gauge, b).unwrap(),
        potential: ScalarField::Harmonic { k },
        ordering: OrderingParams::MM,
        constants: Default::default(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn magnetic_builders_are_hermitian(
        m0 in 0.3..3.0_f64,
        a in 0.5..2.5_f64,
        b in -2.0..2.0_f64,
        k in 0.0..2.0_f64,
        nx in 5..14_usize,
        ny in 5..14_usize,
        landau in any::<bool>(),
    ) {
        let g = make_grid(nx, ny, [-2.0, 2.5, -1.5, 2.0]).unwrap();
        let gauge = if landau { "landau-x" } else { "symmetric" };
        let p = physics(MassProfile::rational_bump(m0, a).unwrap(), b, gauge, k);
        for builder in [Builder::Corrected, Builder::Expanded, Builder::DutraOliveira] {
            let h = build_hamiltonian(builder, &g, &p).unwrap();
            prop_assert!(h.hermiticity_defect() <= 1e-13 * h.max_abs());
        }
    }

    #[test]
    fn builders_agree_at_constant_mass(m0 in 0.3..3.0_f64, b in -2.0..2.0_f64, k in 0.0..2.0_f64) {
        let g = make_grid(9, 11, [-2.0, 2.0, -2.5, 2.5]).unwrap();
        let p = physics(MassProfile::constant(m0).unwrap(), b, "symmetric", k);
        let hc = build_hamiltonian(Builder::Corrected, &g, &p).unwrap();
        for builder in [Builder::Expanded, Builder::DutraOliveira] {
            let h = build_hamiltonian(builder, &g, &p).unwrap();
            prop_assert!(h.sub(&hc).unwrap().max_abs() <= 1e-12 * hc.max_abs());
        }
    }

    #[test]
    fn csv_energies_round_trip(m0 in 0.3..3.0_f64, b in 0.0..1.5_f64, seed in any::<u64>()) {
        let g = make_grid(10, 10, [-3.0, 3.0, -3.0, 3.0]).unwrap();
        let h = build_hamiltonian(Builder::Corrected, &g, &physics(MassProfile::constant(m0).unwrap(), b, "symmetric", 0.5)).unwrap();
        let s = solve_lowest(&h, 3, Method::Lanczos, 1e-9, seed).unwrap();
        let mut csv = Vec::new();
        s.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        for (line, e) in text.lines().skip(1).zip(&s.eigenvalues) {
            let parsed: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
            prop_assert_eq!(parsed, *e);
        }
    }
}
