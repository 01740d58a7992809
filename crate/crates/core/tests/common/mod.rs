//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use msgate::chain::{Axis, ModeData};
use msgate::control::{uniform_grid, DriveWaveform, IonDrive};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

// 15-point Kronrod nodes and weights with the embedded 7-point Gauss rule.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

// Returns the Kronrod value, the Kronrod-Gauss difference and the Kronrod
// estimate of the integral of |f|.
fn gk15<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64) -> (Complex64, f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut mass = fc.norm() * WGK[7];
    for i in 0..7 {
        let x = h * XGK[i];
        let (lo, hi) = (f(c - x), f(c + x));
        kron += (lo + hi) * WGK[i];
        mass += (lo.norm() + hi.norm()) * WGK[i];
        if i % 2 == 1 {
            gauss += (lo + hi) * WG[i / 2];
        }
    }
    (kron * h, ((kron - gauss) * h).norm(), mass * h.abs())
}

/// Adaptive Gauss-Kronrod quadrature of a complex integrand to absolute
/// tolerance `tol`.
pub fn integrate<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64, tol: f64) -> Complex64 {
    fn rec<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64, tol: f64, depth: usize) -> Complex64 {
        let (v, err, mass) = gk15(f, a, b);
        // Below a few ulps of the integrand mass the estimate is roundoff.
        if err <= tol.max(1e-14 * mass) || depth == 0 || (b - a).abs() < 1e-15 {
            return v;
        }
        let m = 0.5 * (a + b);
        rec(f, a, m, 0.5 * tol, depth - 1) + rec(f, m, b, 0.5 * tol, depth - 1)
    }
    if a == b {
        return Complex64::new(0.0, 0.0);
    }
    rec(f, a, b, tol, 30)
}

/// Integrates across the breakpoints of a piecewise-smooth integrand.
pub fn integrate_pieces<F: Fn(f64) -> Complex64>(f: &F, breaks: &[f64], a: f64, b: f64, tol: f64) -> Complex64 {
    let mut pts = vec![a];
    pts.extend(breaks.iter().copied().filter(|t| *t > a && *t < b));
    pts.push(b);
    pts.windows(2).map(|w| integrate(f, w[0], w[1], tol / pts.len() as f64)).sum()
}

/// Piecewise-constant drive value of `ion` at time `t`.
pub fn gamma(drive: &DriveWaveform, ion: usize, t: f64) -> Complex64 {
    let Some(d) = drive.drive_for(ion) else {
        return Complex64::new(0.0, 0.0);
    };
    let g = &drive.boundaries;
    let k = match g.iter().position(|&b| b > t) {
        Some(0) => 0,
        Some(i) => i - 1,
        None => g.len() - 2,
    };
    Complex64::from_polar(d.amplitudes[k], d.phases[k])
}

/// `alpha_j^p(t) = int_0^t gamma_j / 2 e^{i delta_p t'} dt'` by quadrature.
pub fn alpha_quadrature(drive: &DriveWaveform, modes: &ModeData, ion: usize, p: usize, t: f64, tol: f64) -> Complex64 {
    let d = modes.relative_detunings[p];
    let f = |s: f64| 0.5 * gamma(drive, ion, s) * Complex64::from_polar(1.0, d * s);
    integrate_pieces(&f, &drive.boundaries, 0.0, t, tol)
}

/// `phi_jk(t) + phi_kj(t)` from the double time-ordered integral of
/// `beta_j(t1) conj(beta_k(t2))`, inner integral accumulated segment by
/// segment.
pub fn phase_quadrature(drive: &DriveWaveform, modes: &ModeData, j: usize, k: usize, t: f64, tol: f64) -> f64 {
    let mut total = 0.0;
    for (a, b) in [(j, k), (k, j)] {
        let mut acc = Complex64::new(0.0, 0.0);
        for p in 0..modes.n_modes() {
            let w = modes.lamb_dicke[(a, p)] * modes.lamb_dicke[(b, p)];
            if w == 0.0 {
                continue;
            }
            let d = modes.relative_detunings[p];
            let beta = |ion: usize, s: f64| 0.5 * gamma(drive, ion, s) * Complex64::from_polar(1.0, d * s);
            let grid = &drive.boundaries;
            let mut inner_before = Complex64::new(0.0, 0.0);
            for seg in 0..grid.len() - 1 {
                let (lo, hi) = (grid[seg], grid[seg + 1].min(t));
                if lo >= t {
                    break;
                }
                let outer = |t1: f64| {
                    let inner = integrate(&|t2: f64| beta(b, t2).conj(), lo, t1, tol * 1e-2);
                    beta(a, t1) * (inner_before + inner)
                };
                acc += w * integrate(&outer, lo, hi, tol);
                inner_before += integrate(&|t2: f64| beta(b, t2).conj(), lo, hi, tol * 1e-2);
            }
        }
        total += acc.im;
    }
    total
}

/// Axial equilibrium of the dimensionless chain potential by cyclic
/// coordinate descent with a one-dimensional Newton step per coordinate.
pub fn equilibrium_by_coordinate_descent(n: usize) -> Vec<f64> {
    let mut u: Vec<f64> = (0..n).map(|i| (i as f64 - (n as f64 - 1.0) / 2.0) * 1.5 / (n as f64).powf(0.3)).collect();
    for _sweep in 0..100_000 {
        let mut change: f64 = 0.0;
        for i in 0..n {
            for _ in 0..50 {
                let mut g = u[i];
                let mut h = 1.0;
                for j in 0..n {
                    if j != i {
                        let d = u[i] - u[j];
                        g -= d.signum() / (d * d);
                        h += 2.0 / d.abs().powi(3);
                    }
                }
                let step = g / h;
                u[i] -= step;
                change = change.max(step.abs());
                if step.abs() < 1e-16 {
                    break;
                }
            }
        }
        if change < 1e-15 {
            break;
        }
    }
    u
}

/// Central difference with one Richardson extrapolation step.
pub fn richardson_derivative<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    let d = |h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
    (4.0 * d(0.5 * h) - d(h)) / 3.0
}

/// Random mode set on `n` ions with dimensionless detunings `delta_p * tau`
/// in `[-40, 40]`, a resonant mode now and then.
pub fn random_modes<R: Rng>(rng: &mut R, n: usize, tau: f64) -> ModeData {
    let n_modes = rng.gen_range(1..=2 * n);
    let mut eigenvectors = DMatrix::zeros(n, n_modes);
    let mut lamb_dicke = DMatrix::zeros(n, n_modes);
    for j in 0..n {
        for p in 0..n_modes {
            let b: f64 = rng.gen_range(-0.7..0.7);
            eigenvectors[(j, p)] = b;
            lamb_dicke[(j, p)] = 0.08 * b;
        }
    }
    let relative_detunings: Vec<f64> = (0..n_modes)
        .map(|_| {
            if rng.gen_bool(0.1) {
                0.0
            } else {
                rng.gen_range(-40.0..40.0) / tau
            }
        })
        .collect();
    ModeData {
        n_ions: n,
        frequencies: relative_detunings.iter().map(|d| 2.0 * PI * 1.5e6 + d).collect(),
        eigenvectors,
        lamb_dicke,
        axis_labels: vec![Axis::X; n_modes],
        mean_phonons: vec![0.0; n_modes],
        laser_detuning: 2.0 * PI * 1.5e6,
        relative_detunings,
    }
}

/// Random grid on `[0, tau]` with `s` segments of uneven length.
pub fn random_grid<R: Rng>(rng: &mut R, s: usize, tau: f64) -> Vec<f64> {
    let mut w: Vec<f64> = (0..s).map(|_| rng.gen_range(0.3..1.0)).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    let mut g = vec![0.0];
    for x in w {
        g.push(g.last().unwrap() + x * tau);
    }
    g[s] = tau;
    g
}

/// Random drive on every ion with `Omega <= omega_max`.
pub fn random_drive<R: Rng>(rng: &mut R, boundaries: Vec<f64>, n: usize, omega_max: f64) -> DriveWaveform {
    let s = boundaries.len() - 1;
    DriveWaveform {
        duration: *boundaries.last().unwrap(),
        ions: (0..n)
            .map(|ion| IonDrive {
                ion,
                amplitudes: (0..s).map(|_| rng.gen_range(0.0..omega_max)).collect(),
                phases: (0..s).map(|_| rng.gen_range(-PI..PI)).collect(),
            })
            .collect(),
        boundaries,
        robust_symmetric: false,
    }
}

pub fn uniform_drive<R: Rng>(rng: &mut R, tau: f64, s: usize, n: usize, omega_max: f64) -> DriveWaveform {
    random_drive(rng, uniform_grid(tau, s), n, omega_max)
}
