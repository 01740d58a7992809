//! Standard versus robust two-ion gates under quasi-static detuning, timing
//! and amplitude errors, plus their filter functions.
//!
//! cargo run --release --example noise_scans

use std::f64::consts::PI;

use msgate::analysis::{
    amplitude_error_scan, asymmetric_detuning_sensitivity, filter_function, log_log_slope, quasi_static_detuning_scan,
    timing_error_scan,
};
use msgate::chain::{build_mode_data, equilibrium_positions, mass_from_amu, TrapChainConfig};
use msgate::control::{GateTarget, Modulation, SchemeConfig};
use msgate::optimize::{optimize, OptimizationProblem};

fn main() -> msgate::Result<()> {
    let mhz = 2.0 * PI * 1e6;
    let k = 2.0 * PI / 355e-9;
    let trap = TrapChainConfig::new(2, mass_from_amu(171.0), [1.6 * mhz, 1.5 * mhz, 0.3 * mhz], [k, k, 0.0]);
    let modes = build_mode_data(&trap, &equilibrium_positions(&trap)?, 1.6 * mhz + 2.0 * PI * 4.7e3)?;
    let target = GateTarget::new(2).with_maximal_gate(&[0, 1])?;
    let scheme = SchemeConfig::shared(Modulation::Ampm, 256, 153.6e-6, 2.0 * PI * 100e3, &target);

    let offsets: Vec<f64> = (0..=8).map(|i| 2.0 * PI * 10f64.powf(i as f64 / 4.0)).collect();
    let omegas: Vec<f64> = (0..40).map(|i| 2.0 * PI * 10f64.powf(1.0 + i as f64 / 8.0)).collect();
    for robust in [false, true] {
        let problem = OptimizationProblem::from_modes(&modes, target.clone(), scheme.clone().with_robust(robust))?.with_seed(7);
        let res = optimize(&problem)?;
        let drive = &res.best_drive;
        let k = &problem.kernels;
        let label = if robust { "robust" } else { "standard" };
        println!("{label}: infidelity {:.3e}", res.infidelity);

        let mut axis = vec![0.0];
        axis.extend(&offsets);
        let scan = quasi_static_detuning_scan(drive, k, &target, &axis)?;
        let m = scan.series("motional_term").unwrap();
        let excess: Vec<f64> = m[1..].iter().map(|v| (v - m[0]).abs()).collect();
        println!("  motional term slope over 1-100 Hz: {:.2}", log_log_slope(&offsets, &excess));
        for (e, v) in offsets.iter().zip(scan.series("infidelity").unwrap()[1..].iter()) {
            println!("    eps/2pi = {:8.2} Hz  infidelity {:.3e}", e / (2.0 * PI), v);
        }
        let f = filter_function(drive, k, &modes.mean_phonons, &[0.0, 2.0 * PI * 100.0])?;
        let fv = f.series("filter_s2").unwrap();
        println!("  filter F(0) = {:.3e}, F(2pi x 100 Hz) = {:.3e}", fv[0], fv[1]);
        let broad = filter_function(drive, k, &modes.mean_phonons, &omegas)?;
        let bv = broad.series("filter_s2").unwrap();
        let peak = bv.iter().cloned().fold(0.0, f64::max);
        println!("  filter peak {:.3e}, min/peak below 2pi/tau: {:.3e}", peak,
            omegas.iter().zip(bv).filter(|(w, _)| **w < 2.0 * PI / 153.6e-6).map(|(_, v)| *v).fold(f64::INFINITY, f64::min) / peak);
        let timing = timing_error_scan(drive, k, &target, &[-1e-3, 0.0, 1e-3])?;
        println!("  timing +-1e-3: {:?}", timing.series("infidelity").unwrap());
        let amp = amplitude_error_scan(drive, k, &target, &[0.99, 1.0, 1.01])?;
        println!("  amplitude +-1%: {:?}", amp.series("infidelity").unwrap());
        let asym = asymmetric_detuning_sensitivity(drive, k, 2.0 * PI * 100.0)?;
        println!("  t-weighted closure / (tau^2 Omega_max): {:.3e}", asym.normalized_tweighted);
    }
    Ok(())
}
