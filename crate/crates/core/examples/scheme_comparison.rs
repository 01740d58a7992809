//! AM, PM and AM+PM schemes for a 2-of-5 gate with a shared drive: best
//! infidelity against the Rabi-rate bound, and the smallest bound that reaches
//! a threshold.
//!
//! cargo run --release --example scheme_comparison

use std::f64::consts::PI;

use msgate::chain::{build_mode_data, equilibrium_positions, mass_from_amu, TrapChainConfig};
use msgate::control::{GateTarget, Modulation, SchemeConfig};
use msgate::optimize::{optimize, OptimizationProblem};

fn main() -> msgate::Result<()> {
    let mhz = 2.0 * PI * 1e6;
    let k = 2.0 * PI / 355e-9;
    let trap = TrapChainConfig::new(5, mass_from_amu(171.0), [1.6 * mhz, 1.5 * mhz, 0.3 * mhz], [k, k, 0.0]);
    let modes = build_mode_data(&trap, &equilibrium_positions(&trap)?, 1.365 * mhz)?;
    for (p, f) in modes.frequencies.iter().enumerate() {
        println!("mode {p}: {:.4} MHz, delta_p/2pi = {:.1} kHz", f / mhz, modes.relative_detunings[p] / (2.0 * PI * 1e3));
    }
    let target = GateTarget::new(5).with_maximal_gate(&[0, 1])?;
    let rabi_khz = [100.0, 150.0, 200.0, 250.0, 300.0, 350.0, 400.0, 500.0, 600.0, 800.0, 1000.0];
    let threshold = 1e-5;
    for modulation in [Modulation::Am, Modulation::Pm, Modulation::Ampm] {
        let mut first = None;
        for &r in &rabi_khz {
            let scheme = SchemeConfig::shared(modulation, 64, 50e-6, 2.0 * PI * r * 1e3, &target);
            let problem = OptimizationProblem::from_modes(&modes, target.clone(), scheme)?.with_seed(11);
            let res = optimize(&problem)?;
            println!("{modulation:?} Omega_max/2pi = {r:6.0} kHz: infidelity {:.3e} ({:.2} s)", res.infidelity, res.wall_time_s);
            if first.is_none() && res.infidelity <= threshold {
                first = Some(r);
            }
        }
        println!("{modulation:?}: minimum Omega_max/2pi reaching {threshold:e}: {first:?} kHz");
    }
    Ok(())
}
