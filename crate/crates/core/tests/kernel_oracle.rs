mod common;

use std::f64::consts::PI;

use common::*;
use msgate::kernels::{phase_series, trajectory_series, KernelSet};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const QUAD_TOL: f64 = 1e-13;

#[test]
fn quadrature_oracle_on_hand_integrals() {
    let c = |re: f64, im: f64| Complex64::new(re, im);
    let v = integrate(&|t: f64| c(t * t, 0.0), 0.0, 1.0, 1e-14);
    assert!((v.re - 1.0 / 3.0).abs() < 1e-15);
    let w = 5.0;
    let v = integrate(&|t: f64| Complex64::from_polar(1.0, w * t), 0.0, 2.0, 1e-14);
    let exact = (Complex64::from_polar(1.0, 2.0 * w) - 1.0) / c(0.0, w);
    assert!((v - exact).norm() < 1e-14);
    // Step function with a breakpoint.
    let step = |t: f64| if t < 0.3 { c(1.0, 0.0) } else { c(0.0, 2.0) };
    let v = integrate_pieces(&step, &[0.3], 0.0, 1.0, 1e-14);
    assert!((v - c(0.3, 1.4)).norm() < 1e-14);
    // Time-ordered double integral of 1 over the unit triangle.
    let v = integrate(&|t1: f64| integrate(&|_t2: f64| c(1.0, 0.0), 0.0, t1, 1e-15), 0.0, 1.0, 1e-14);
    assert!((v.re - 0.5).abs() < 1e-14);
}

#[test]
fn coordinate_descent_oracle_on_known_chains() {
    let u2 = equilibrium_by_coordinate_descent(2);
    assert!((u2[1] - 0.25f64.cbrt()).abs() < 1e-12);
    let u3 = equilibrium_by_coordinate_descent(3);
    assert!(u3[1].abs() < 1e-12 && (u3[2] - 1.25f64.cbrt()).abs() < 1e-12);
}

#[test]
fn kernels_match_quadrature_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let tol = 1e-9;
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.gen_range(1..=5);
        let s = rng.gen_range(1..=16);
        let tau = 1.0;
        let modes = random_modes(&mut rng, n, tau);
        let grid = random_grid(&mut rng, s, tau);
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|j| (j..n).map(move |k| (j, k))).collect();
        let ks = KernelSet::new(&modes, &grid, &pairs).unwrap();
        let m = ks.displacement_matrix();
        let r = ks.com_matrix();
        for p in 0..modes.n_modes() {
            let d = modes.relative_detunings[p];
            let e = |t: f64| Complex64::from_polar(1.0, d * t);
            for k in 0..s {
                let (a, b) = (grid[k], grid[k + 1]);
                let mq = 0.5 * integrate(&e, a, b, QUAD_TOL);
                worst = worst.max((m[(p, k)] - mq).norm());
                // R: int_0^T dt int_{A_k cap [0, t]} e^{i delta t1} dt1.
                let inner = |t: f64| integrate(&e, a, t.min(b), QUAD_TOL);
                let rq = integrate_pieces(&inner, &[b], a, tau, QUAD_TOL);
                worst = worst.max((r[(p, k)] - rq).norm());
            }
        }
        for &(mi, ni) in &pairs {
            let pm = ks.phase_matrix(mi, ni);
            for k in 0..s {
                for l in 0..s {
                    let mut q = Complex64::new(0.0, 0.0);
                    for p in 0..modes.n_modes() {
                        let w = modes.lamb_dicke[(mi, p)] * modes.lamb_dicke[(ni, p)] / 4.0;
                        let d = modes.relative_detunings[p];
                        let (ak, bk, al, bl) = (grid[k], grid[k + 1], grid[l], grid[l + 1]);
                        let outer = |t1: f64| {
                            let hi = t1.min(bl);
                            let inner = if hi > al {
                                integrate(&|t2: f64| Complex64::from_polar(1.0, -d * t2), al, hi, QUAD_TOL)
                            } else {
                                Complex64::new(0.0, 0.0)
                            };
                            Complex64::from_polar(1.0, d * t1) * inner
                        };
                        q += w * integrate(&outer, ak, bk, QUAD_TOL);
                    }
                    worst = worst.max((pm[(k, l)] - q).norm());
                }
            }
        }
    }
    assert!(worst < tol, "largest kernel deviation {worst:e}");
}

#[test]
fn series_match_quadrature_on_random_drives() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst_alpha: f64 = 0.0;
    let mut worst_phase: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.gen_range(2..=5);
        let s = rng.gen_range(1..=16);
        let tau = 1.0;
        let modes = random_modes(&mut rng, n, tau);
        let grid = random_grid(&mut rng, s, tau);
        let drive = random_drive(&mut rng, grid, n, 6.0);
        let mut times: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..tau)).collect();
        times.push(tau);
        let alpha = trajectory_series(&drive, &modes, &times).unwrap();
        let phases = phase_series(&drive, &modes, &times).unwrap();
        for (i, &t) in times.iter().enumerate() {
            for j in 0..n {
                for p in 0..modes.n_modes() {
                    let q = alpha_quadrature(&drive, &modes, j, p, t, QUAD_TOL);
                    worst_alpha = worst_alpha.max((alpha[i][(j, p)] - q).norm());
                }
            }
            let (j, k) = (0, rng.gen_range(1..n));
            let q = phase_quadrature(&drive, &modes, j, k, t, 1e-12);
            worst_phase = worst_phase.max((phases[i][(j, k)] - q).abs());
        }
        // End-of-gate kernel evaluation agrees with the sampled series.
        let ks = KernelSet::new(&modes, &drive.boundaries, &[]).unwrap();
        let end = ks.entangling_phases(&drive).unwrap();
        let last = phases.last().unwrap();
        for j in 0..n {
            for k in 0..n {
                assert!((end[(j, k)] - last[(j, k)]).abs() < 1e-12);
            }
        }
    }
    assert!(worst_alpha < 1e-9, "trajectory deviation {worst_alpha:e}");
    assert!(worst_phase < 1e-9, "phase deviation {worst_phase:e}");
}

#[test]
fn constant_drive_com_residual_closed_form() {
    // For constant gamma, int_0^tau alpha(t) dt with
    // alpha(t) = (g/2)(e^{i d t} - 1)/(i d).
    let modes = {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut m = random_modes(&mut rng, 1, 1.0);
        m.relative_detunings = vec![2.0 * PI * 3.3; m.n_modes()];
        m
    };
    let tau = 1.0;
    let d = modes.relative_detunings[0];
    let drive = msgate::control::DriveWaveform {
        duration: tau,
        boundaries: vec![0.0, 0.4, tau],
        ions: vec![msgate::control::IonDrive {
            ion: 0,
            amplitudes: vec![2.0, 2.0],
            phases: vec![0.0, 0.0],
        }],
        robust_symmetric: false,
    };
    let ks = KernelSet::new(&modes, &drive.boundaries, &[]).unwrap();
    let r = ks.com_residuals(&drive).unwrap()[(0, 0)];
    let i = Complex64::i();
    let exact = ((Complex64::from_polar(1.0, d * tau) - 1.0) / (i * d) - tau) / (i * d);
    assert!((r - exact).norm() < 1e-13, "{r} vs {exact}");
}
