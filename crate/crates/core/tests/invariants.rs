use floquet_chain::dynamics::{commensurate_step, propagate_lattice, solve_volterra, StepPropagator};
use floquet_chain::floquet::{
    fold, monodromy_spectrum, pairwise_deviation, solve_sambe, ClassifyOptions, KPolicy, SambeForm,
};
use floquet_chain::io::{fmt_f64, CsvTable};
use floquet_chain::{c64, ChainSpec, DriveProtocol};
use proptest::prelude::*;

fn drive_strategy() -> impl Strategy<Value = DriveProtocol> {
    (-15.0f64..15.0, -15.0f64..15.0, 0.05f64..0.95, 0.3f64..2.0)
        .prop_map(|(a1, a2, frac, period)| DriveProtocol::step(a1, a2, frac * period, period).unwrap())
}

fn impurity_state(n: usize) -> Vec<c64> {
    let mut psi = vec![c64::default(); n];
    psi[0] = c64::new(1.0, 0.0);
    psi
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lattice_evolution_is_unitary(drive in drive_strategy(), g in 0.2f64..2.0, sites in 8usize..40) {
        let chain = ChainSpec::new(sites, 1.0, g, 20.0).unwrap();
        let prop = StepPropagator::new(&chain, &drive).unwrap();
        let times: Vec<f64> = (0..12).map(|i| 0.37 * i as f64).collect();
        let (c0, norms) = prop.impurity_and_norm(&impurity_state(chain.dim()), &times);
        for (c, n) in c0.iter().zip(&norms) {
            prop_assert!((n - 1.0).abs() < 1e-10, "norm {n}");
            prop_assert!(c.norm_sqr() <= 1.0 + 1e-10);
        }
    }

    #[test]
    fn decoupled_impurity_never_decays(drive in drive_strategy(), sites in 4usize..30) {
        let chain = ChainSpec::new(sites, 1.0, 0.0, 20.0).unwrap();
        let traj = propagate_lattice(&chain, &drive, 5.0, 8).unwrap();
        for p in &traj.p {
            prop_assert!((p - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cyclic_shift_of_drive_keeps_quasienergies(
        a1 in -10.0f64..10.0, a2 in -10.0f64..10.0, frac in 0.1f64..0.9, period in 0.4f64..1.5,
    ) {
        let chain = ChainSpec::new(16, 1.0, 1.0, 20.0).unwrap();
        let opts = ClassifyOptions::default();
        let d = DriveProtocol::step(a1, a2, frac * period, period).unwrap();
        let shifted = DriveProtocol::step(a2, a1, (1.0 - frac) * period, period).unwrap();
        let e = monodromy_spectrum(&chain, &d, &opts).unwrap().spectrum.quasienergies();
        let s = monodromy_spectrum(&chain, &shifted, &opts).unwrap().spectrum.quasienergies();
        let omega = d.omega();
        prop_assert!(pairwise_deviation(&e, &s, omega) < 1e-9);
        for x in e {
            prop_assert!(x > -0.5 * omega - 1e-12 && x <= 0.5 * omega + 1e-12);
            prop_assert!((fold(x, omega) - x).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_floats_round_trip_bitwise(values in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 1..40)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let mut table = CsvTable::new("profile", &["j", "population"]);
        for (i, v) in values.iter().enumerate() {
            table.push(vec![i.to_string(), fmt_f64(*v)]);
        }
        table.write(&path).unwrap();
        let back = CsvTable::read(&path).unwrap();
        let col = back.column_f64("population").unwrap();
        for (a, b) in values.iter().zip(col) {
            prop_assert_eq!(a.to_bits(), b.unwrap().to_bits());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn volterra_tracks_lattice(a2 in 0.0f64..8.0, g in 0.3f64..1.2) {
        let chain = ChainSpec::new(60, 1.0, g, 20.0).unwrap();
        let drive = DriveProtocol::step(0.0, a2, 0.1 * std::f64::consts::PI, 0.25 * std::f64::consts::PI).unwrap();
        let horizon = 3.0;
        let exact = propagate_lattice(&chain, &drive, horizon, 16).unwrap();
        let v = solve_volterra(&chain, &drive, horizon, commensurate_step(&drive, 2e-3).unwrap()).unwrap();
        for (t, p) in exact.times.iter().zip(&exact.p).step_by(16) {
            let q = v.p_at(*t).unwrap();
            prop_assert!((p - q).abs() < 1e-5, "t={t} lattice {p} volterra {q}");
        }
    }

    #[test]
    fn sambe_matches_monodromy(a1 in -6.0f64..6.0, a2 in -6.0f64..6.0) {
        let chain = ChainSpec::new(10, 1.0, 1.0, 20.0).unwrap();
        let drive = DriveProtocol::step(a1, a2, 0.1 * std::f64::consts::PI, 0.25 * std::f64::consts::PI).unwrap();
        let opts = ClassifyOptions::default();
        let mono = monodromy_spectrum(&chain, &drive, &opts).unwrap().spectrum.quasienergies();
        let policy = KPolicy { initial: 8, step: 4, tol: 1e-9, max: 48 };
        let sambe = solve_sambe(&chain, &drive, &policy, SambeForm::Rotated, &opts).unwrap().quasienergies();
        prop_assert!(pairwise_deviation(&mono, &sambe, drive.omega()) < 1e-7);
    }
}
