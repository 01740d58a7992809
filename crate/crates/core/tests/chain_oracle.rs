mod common;

use std::f64::consts::PI;

use common::*;
use msgate::chain::{
    axial_hessian, build_mode_data, equilibrium_positions, mass_from_amu, normal_modes, potential_gradient, Axis,
    TrapChainConfig, HBAR,
};

fn config(n: usize, mhz: [f64; 3]) -> TrapChainConfig {
    let k = 2.0 * PI / 355e-9;
    TrapChainConfig::new(n, mass_from_amu(171.0), mhz.map(|f| 2.0 * PI * f * 1e6), [k, k, 0.0])
}

#[test]
fn newton_positions_match_coordinate_descent() {
    for n in 2..=10 {
        let pos = equilibrium_positions(&config(n, [1.6, 1.5, 0.3])).unwrap();
        let oracle = equilibrium_by_coordinate_descent(n);
        for (a, b) in pos.dimensionless.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9, "n = {n}: {a} vs {b}");
        }
        // Mirror symmetric about the trap centre.
        for i in 0..n {
            assert!((pos.dimensionless[i] + pos.dimensionless[n - 1 - i]).abs() < 1e-10);
        }
    }
}

#[test]
fn axial_hessian_is_the_derivative_of_the_gradient() {
    for n in [3, 6] {
        let u = equilibrium_by_coordinate_descent(n);
        let h = axial_hessian(&u);
        for i in 0..n {
            for j in 0..n {
                let fd = richardson_derivative(
                    |x| {
                        let mut v = u.clone();
                        v[j] = x;
                        potential_gradient(&v)[i]
                    },
                    u[j],
                    1e-4,
                );
                assert!((h[(i, j)] - fd).abs() < 1e-7, "({i}, {j}): {} vs {fd}", h[(i, j)]);
            }
        }
    }
}

#[test]
fn com_breathing_and_tilt_frequencies() {
    // Independent of chain length: axial COM at nu_z, breathing at
    // sqrt(3) nu_z, transverse COM at nu_t and tilt at sqrt(nu_t^2 - nu_z^2).
    for n in 2..=10 {
        let cfg = config(n, [1.6, 1.5, 0.3]);
        let (nx, nz) = (cfg.com_frequencies[0], cfg.com_frequencies[2]);
        let pos = equilibrium_positions(&cfg).unwrap();
        let z = normal_modes(&cfg, &pos, Axis::Z).unwrap();
        assert!((z.frequencies[0] / nz - 1.0).abs() < 1e-9);
        assert!((z.frequencies[1] / nz - 3f64.sqrt()).abs() < 1e-9);
        let x = normal_modes(&cfg, &pos, Axis::X).unwrap();
        assert!((x.frequencies[0] / nx - 1.0).abs() < 1e-9);
        assert!((x.frequencies[1] - (nx * nx - nz * nz).sqrt()).abs() / nx < 1e-9);
        for p in 0..n {
            for q in 0..n {
                let dot: f64 = (0..n).map(|j| x.eigenvectors[(j, p)] * x.eigenvectors[(j, q)]).sum();
                assert!((dot - if p == q { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
        for j in 0..n {
            assert!((x.eigenvectors[(j, 0)] - 1.0 / (n as f64).sqrt()).abs() < 1e-12);
        }
    }
}

#[test]
fn three_ion_axial_spectrum() {
    // Eigenvalues 1, 3 and 29/5 for three ions.
    let cfg = config(3, [1.6, 1.5, 0.3]);
    let pos = equilibrium_positions(&cfg).unwrap();
    let z = normal_modes(&cfg, &pos, Axis::Z).unwrap();
    for (l, e) in z.eigenvalues.iter().zip([1.0, 3.0, 29.0 / 5.0]) {
        assert!((l - e).abs() < 1e-10, "{l} vs {e}");
    }
}

#[test]
fn lamb_dicke_parameters_from_first_principles() {
    let cfg = config(4, [1.6, 1.5, 0.3]);
    let pos = equilibrium_positions(&cfg).unwrap();
    let delta = cfg.com_frequencies[0] + 2.0 * PI * 4.7e3;
    let modes = build_mode_data(&cfg, &pos, delta).unwrap();
    assert_eq!(modes.n_modes(), 8);
    let k = 2.0 * PI / 355e-9;
    for p in 0..modes.n_modes() {
        let nu = modes.frequencies[p];
        for j in 0..4 {
            let eta = k * (HBAR / (2.0 * cfg.mass * nu)).sqrt() * modes.eigenvectors[(j, p)];
            assert!((modes.lamb_dicke[(j, p)] - eta).abs() < 1e-15);
        }
        assert_eq!(modes.relative_detunings[p], nu - delta);
    }
    // One 171 amu ion at 1.6 MHz, 355 nm: k sqrt(hbar / 2 m nu) is about 0.076.
    let one = config(1, [1.6, 1.5, 0.3]);
    let single = build_mode_data(&one, &equilibrium_positions(&one).unwrap(), delta).unwrap();
    let eta = single.lamb_dicke[(0, 0)];
    assert!(eta > 0.075 && eta < 0.077, "{eta}");
}
