use molmech_core::analytics::{eta_read, eta_write, eta_write_max};
use molmech_core::dump::{decode_binary, decode_text, encode_binary, encode_text};
use molmech_core::dynamics::{evolve, steady_state, EvolveOptions, Generator, Observable, Tolerance};
use molmech_core::experiments::{composite_grid, steady_populations, ParameterPath, SweepSpec};
use molmech_core::hilbert::{expectation, CMatrix, DensityMatrix, Ladder, Level, C64};
use molmech_core::model::SystemConfig;
use proptest::prelude::*;

fn config() -> impl Strategy<Value = SystemConfig> {
    (0.0..2.0f64, 1.0..10.0f64, 0.05..2.0f64, 0.0..0.5f64, 0.0..2.0f64, -5.0..5.0f64, 2usize..5)
        .prop_map(|(g0, ob, kb, nth, om, d, n)| {
            let mut c = SystemConfig::cw(g0, ob, kb, om, d, n).unwrap();
            c.phonon.n_thermal = nth;
            c
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn evolution_stays_physical(cfg in config(), t_end in 0.5..6.0f64) {
        let gen = Generator::from_config(&cfg).unwrap();
        let l = Ladder::new(cfg.cutoff);
        let rho0 = DensityMatrix::basis(cfg.cutoff, Level::Ground, 0).unwrap();
        let grid: Vec<f64> = (0..=10).map(|k| t_end * k as f64 / 10.0).collect();
        let obs = [
            Observable::new("pop_e", l.excited_projector.clone()),
            Observable::new("pop_b", l.phonon_number.clone()),
        ];
        let traj = evolve(&rho0, &gen, &grid, &obs, &EvolveOptions::with_tol(Tolerance { rel: 1e-9, abs: 1e-12 })).unwrap();
        let d = traj.diagnostics;
        prop_assert!(d.max_trace_drift < 1e-8);
        prop_assert!(d.max_hermitian_deviation < 1e-9);
        prop_assert!(d.min_eigenvalue > -1e-8);
        let nmax = (cfg.cutoff.phonon_cutoff() - 1) as f64;
        for (&pe, &pb) in traj.values[0].iter().zip(&traj.values[1]) {
            prop_assert!((-1e-9..=1.0 + 1e-9).contains(&pe));
            prop_assert!((-1e-9..=nmax + 1e-9).contains(&pb));
        }
        traj.final_state.validate().unwrap();
    }

    #[test]
    fn steady_state_is_a_fixed_point(cfg in config()) {
        let gen = Generator::from_config(&cfg).unwrap();
        let rho = steady_state(&gen).unwrap();
        rho.validate().unwrap();
        // Evolving the steady state leaves it in place.
        let l = Ladder::new(cfg.cutoff);
        let obs = [Observable::new("pop_e", l.excited_projector.clone())];
        let traj = evolve(&rho, &gen, &[0.0, 3.0], &obs, &EvolveOptions::with_tol(Tolerance { rel: 1e-10, abs: 1e-13 })).unwrap();
        prop_assert!((traj.values[0][1] - traj.values[0][0]).abs() < 1e-8);
        let diff = (traj.final_state.matrix() - rho.matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        prop_assert!(diff < 1e-7, "{}", diff);
    }

    #[test]
    fn decoupled_steady_state_is_the_bloch_solution(delta in -10.0..10.0f64, omega in 0.01..5.0f64) {
        let cfg = SystemConfig::cw(0.0, 3.0, 1.0, omega, delta, 2).unwrap();
        let (pe, _) = steady_populations(&cfg).unwrap();
        let exact = omega * omega / (delta * delta + 0.25 + 2.0 * omega * omega);
        prop_assert!((pe - exact).abs() < 1e-10 * (1.0 + exact));
    }

    #[test]
    fn global_drive_phase_does_not_change_populations(phase in 0.0..6.28f64, cfg in config()) {
        let mut rotated = cfg.clone();
        rotated.tones[0].amplitude *= C64::from_polar(1.0, phase);
        let (a, b) = steady_populations(&cfg).unwrap();
        let (c, d) = steady_populations(&rotated).unwrap();
        prop_assert!((a - c).abs() < 1e-9);
        prop_assert!((b - d).abs() < 1e-9);
        let l = Ladder::new(cfg.cutoff);
        let s0 = expectation(&steady_state(&Generator::from_config(&cfg).unwrap()).unwrap(), &l.sigma).unwrap();
        let s1 = expectation(&steady_state(&Generator::from_config(&rotated).unwrap()).unwrap(), &l.sigma).unwrap();
        prop_assert!((s0 * C64::from_polar(1.0, phase) - s1).norm() < 1e-9);
    }

    #[test]
    fn efficiencies_are_bounded(m in 1e-6..50.0f64) {
        let best = eta_write_max().eta_star;
        prop_assert!(eta_write(m) <= best + 1e-12);
        prop_assert!((0.0..=1.0).contains(&eta_read(m)));
        prop_assert!(eta_read(m * 1.01) >= eta_read(m));
    }

    #[test]
    fn dumps_round_trip(rows in 0usize..6, cols in 0usize..6, seed in proptest::collection::vec(-1e6..1e6f64, 72)) {
        let m = CMatrix::from_fn(rows, cols, |i, j| C64::new(seed[2 * (i * 6 + j)], seed[2 * (i * 6 + j) + 1]));
        prop_assert_eq!(decode_text(&encode_text(&m)).unwrap(), m.clone());
        prop_assert_eq!(decode_binary(&encode_binary(&m)).unwrap(), m);
    }

    #[test]
    fn truncated_binary_dumps_are_rejected(cut in 1usize..40) {
        let m = CMatrix::from_element(2, 2, C64::new(1.0, -1.0));
        let bytes = encode_binary(&m);
        let cut = cut.min(bytes.len());
        prop_assert!(decode_binary(&bytes[..bytes.len() - cut]).is_err());
    }

    #[test]
    fn composite_grids_are_sorted_and_cover_windows(
        step in 0.01..1.0f64,
        centre in -5.0..5.0f64,
        hw in 0.01..1.0f64,
    ) {
        let g = composite_grid(-10.0, 10.0, step, &[(centre, hw, hw / 50.0)]).unwrap();
        prop_assert!(g.windows(2).all(|w| w[1] > w[0]));
        prop_assert_eq!(g[0], -10.0);
        let inside = g.iter().filter(|&&x| (x - centre).abs() <= hw + 1e-12).count();
        prop_assert!(inside >= 50);
    }

    #[test]
    fn sweep_points_set_only_their_parameter(values in proptest::collection::vec(0.0..3.0f64, 1..6)) {
        let base = SystemConfig::cw(1.0, 5.0, 0.5, 0.3, 0.0, 3).unwrap();
        let spec = SweepSpec { parameter: ParameterPath::G0, values: values.clone(), overrides: vec![(ParameterPath::KappaB, 0.7)] };
        spec.validate(&base).unwrap();
        for (k, v) in values.iter().enumerate() {
            let p = spec.point(&base, k).unwrap();
            prop_assert_eq!(p.coupling.g0, *v);
            prop_assert_eq!(p.phonon.kappa_b, 0.7);
            prop_assert_eq!(p.phonon.omega_b, 5.0);
            prop_assert_eq!(&p.tones, &base.tones);
        }
    }
}
