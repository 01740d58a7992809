mod common;

use std::f64::consts::PI;

use common::*;
use msgate::analysis::operational_infidelity;
use msgate::control::{
    build_parametrization, pairs_of, validate, wrap_phase, DriveWaveform, GateTarget, IonDrive, Modulation,
    SchemeConfig, SlewBounds,
};
use msgate::kernels::KernelSet;
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn setup(seed: u64) -> (ChaCha8Rng, msgate::chain::ModeData, DriveWaveform, KernelSet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=4);
    let tau = 1.0;
    let modes = random_modes(&mut rng, n, tau);
    let s = rng.gen_range(1..=10);
    let grid = random_grid(&mut rng, s, tau);
    let drive = random_drive(&mut rng, grid, n, 4.0);
    let ks = KernelSet::new(&modes, &drive.boundaries, &pairs_of(&(0..n).collect::<Vec<_>>())).unwrap();
    (rng, modes, drive, ks)
}

fn from_values(template: &DriveWaveform, values: &[Vec<Complex64>]) -> DriveWaveform {
    let mut d = template.clone();
    for (ion, v) in d.ions.iter_mut().zip(values) {
        ion.amplitudes = v.iter().map(|c| c.norm()).collect();
        ion.phases = v.iter().map(|c| c.arg()).collect();
    }
    d
}

fn close(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>, tol: f64) -> bool {
    (a - b).iter().all(|z| z.norm() <= tol)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn displacements_are_linear_in_the_drive(seed in any::<u64>(), c1 in -2.0f64..2.0, c2 in -2.0f64..2.0) {
        let (mut rng, _, d1, ks) = setup(seed);
        let d2 = random_drive(&mut rng, d1.boundaries.clone(), d1.ions.len(), 4.0);
        let combined: Vec<Vec<Complex64>> = d1
            .ions
            .iter()
            .zip(&d2.ions)
            .map(|(a, b)| a.values().iter().zip(b.values()).map(|(x, y)| c1 * x + c2 * y).collect())
            .collect();
        let lhs = ks.displacements(&from_values(&d1, &combined)).unwrap();
        let rhs = ks.displacements(&d1).unwrap() * Complex64::from(c1) + ks.displacements(&d2).unwrap() * Complex64::from(c2);
        prop_assert!(close(&lhs, &rhs, 1e-12));
    }

    #[test]
    fn amplitude_scaling_scales_phases_quadratically(seed in any::<u64>(), s in 0.0f64..3.0) {
        let (_, _, d, ks) = setup(seed);
        let base = ks.entangling_phases(&d).unwrap();
        let scaled = ks.entangling_phases(&d.scaled(s)).unwrap();
        let alpha = ks.displacements(&d).unwrap() * Complex64::from(s);
        prop_assert!(close(&ks.displacements(&d.scaled(s)).unwrap(), &alpha, 1e-12));
        for (a, b) in scaled.iter().zip(base.iter()) {
            prop_assert!((a - s * s * b).abs() <= 1e-12 * (1.0 + b.abs() * s * s));
        }
    }

    #[test]
    fn common_phase_offset_rotates_displacements_only(seed in any::<u64>(), theta in -PI..PI) {
        let (_, _, d, ks) = setup(seed);
        let shifted = d.phase_shifted(theta);
        let rot = ks.displacements(&d).unwrap() * Complex64::from_polar(1.0, theta);
        prop_assert!(close(&ks.displacements(&shifted).unwrap(), &rot, 1e-12));
        let (a, b) = (ks.entangling_phases(&d).unwrap(), ks.entangling_phases(&shifted).unwrap());
        for (x, y) in a.iter().zip(b.iter()) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn phase_matrix_is_symmetric_under_ion_swap(seed in any::<u64>()) {
        let (_, _, d, ks) = setup(seed);
        let phi = ks.entangling_phases(&d).unwrap();
        let n = d.ions.len();
        for j in 0..n {
            for k in 0..n {
                prop_assert!((phi[(j, k)] - phi[(k, j)]).abs() <= 1e-13 * (1.0 + phi[(j, k)].abs()));
            }
        }
        // Swapping the drives of two ions swaps their rows of the phase matrix.
        let mut swapped = d.clone();
        let (a, b) = (swapped.ions[0].clone(), swapped.ions[1].clone());
        swapped.ions[0] = IonDrive { ion: 0, ..b };
        swapped.ions[1] = IonDrive { ion: 1, ..a };
        let mut modes = ks.modes().clone();
        modes.lamb_dicke.swap_rows(0, 1);
        modes.eigenvectors.swap_rows(0, 1);
        let ks2 = KernelSet::new(&modes, &d.boundaries, &pairs_of(&(0..n).collect::<Vec<_>>())).unwrap();
        let phi2 = ks2.entangling_phases(&swapped).unwrap();
        let perm = |i: usize| match i { 0 => 1, 1 => 0, x => x };
        for j in 0..n {
            for k in 0..n {
                prop_assert!((phi2[(perm(j), perm(k))] - phi[(j, k)]).abs() <= 1e-12 * (1.0 + phi[(j, k)].abs()));
            }
        }
    }

    #[test]
    fn infidelity_lies_in_unit_interval(seed in any::<u64>(), psi in -2.0f64..2.0, nbar in 0.0f64..3.0) {
        let (_, modes, d, ks) = setup(seed);
        let target = GateTarget::new(modes.n_ions).with_gate(&[0, 1], &[((0, 1), psi)]).unwrap();
        let r = operational_infidelity(&d, &ks, &target, &vec![nbar; modes.n_modes()]).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.infidelity));
        prop_assert!(r.motional_term >= 0.0);
    }

    #[test]
    fn wrap_phase_is_a_congruent_representative(x in -1e3f64..1e3) {
        let y = wrap_phase(x);
        prop_assert!(y > -PI && y <= PI);
        let k = (x - y) / (2.0 * PI);
        prop_assert!((k - k.round()).abs() < 1e-9);
    }

    #[test]
    fn every_parameter_vector_yields_a_valid_drive(
        seed in any::<u64>(),
        modulation in prop_oneof![Just(Modulation::Am), Just(Modulation::Pm), Just(Modulation::Ampm)],
        robust in any::<bool>(),
        slew in any::<bool>(),
        pin in any::<bool>(),
        shared in any::<bool>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let target = GateTarget::new(4).with_maximal_gate(&[0, 1]).unwrap().with_gate(&[2, 3], &[((2, 3), 0.3)]).unwrap();
        let segments = 2 * rng.gen_range(2..=8);
        let omax = rng.gen_range(1.0..1e6);
        let mut scheme = if shared {
            SchemeConfig::shared(modulation, segments, 1e-4, omax, &target)
        } else {
            SchemeConfig::individual(modulation, segments, 1e-4, omax, &target)
        }
        .with_robust(robust);
        if slew {
            scheme = scheme.with_slew(SlewBounds {
                max_amplitude_step: rng.gen_range(0.01..0.5) * omax,
                max_phase_step: rng.gen_range(0.05..1.0),
                pin_start: pin,
            });
        }
        let p = build_parametrization(&scheme, &target).unwrap();
        let theta: Vec<f64> = (0..p.n_vars()).map(|_| rng.gen_range(-30.0..30.0)).collect();
        let drive = p.drive(&theta);
        let report = validate(&drive, &scheme);
        prop_assert!(report.passes(), "{:?}", report);
        // Extraction inverts the map away from saturation.
        let mild: Vec<f64> = (0..p.n_vars()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let back = p.drive(&p.extract(&p.drive(&mild)).unwrap());
        let orig = p.drive(&mild);
        for (a, b) in orig.ions.iter().zip(&back.ions) {
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((x - y).norm() <= 1e-9 * omax);
            }
        }
    }
}
