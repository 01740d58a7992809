//! Two-ion maximally entangling gate with one shared amplitude- and
//! phase-modulated drive, unconstrained and robust with bounded slew.
//!
//! cargo run --release --example pair_gate -- [duration_us] [segments]

use std::f64::consts::PI;

use msgate::chain::{build_mode_data, equilibrium_positions, mass_from_amu, TrapChainConfig};
use msgate::control::{GateTarget, Modulation, SchemeConfig, SlewBounds};
use msgate::optimize::{optimize, OptimizationProblem};

fn main() -> msgate::Result<()> {
    let mut args = std::env::args().skip(1);
    let tau_us: f64 = args.next().map_or(153.6, |s| s.parse().expect("duration in us"));
    let segments: usize = args.next().map_or(256, |s| s.parse().expect("segment count"));
    let mhz = 2.0 * PI * 1e6;
    let k = 2.0 * PI / 355e-9;
    let trap = TrapChainConfig::new(2, mass_from_amu(171.0), [1.6 * mhz, 1.5 * mhz, 0.3 * mhz], [k, k, 0.0]);
    let positions = equilibrium_positions(&trap)?;
    let modes = build_mode_data(&trap, &positions, 1.6 * mhz + 2.0 * PI * 4.7e3)?;
    let target = GateTarget::new(2).with_maximal_gate(&[0, 1])?;
    let omax = 2.0 * PI * 100e3;

    let plain = SchemeConfig::shared(Modulation::Ampm, segments, tau_us * 1e-6, omax, &target);
    let robust = plain.clone().with_robust(true).with_slew(SlewBounds {
        max_amplitude_step: 2.0 * PI * 10e3,
        max_phase_step: PI / 8.0,
        pin_start: false,
    });
    for (name, scheme) in [("unconstrained", plain), ("robust, slew-bounded", robust)] {
        let problem = OptimizationProblem::from_modes(&modes, target.clone(), scheme)?.with_seed(1);
        let res = optimize(&problem)?;
        println!("{name}: infidelity {:.3e}, cost {:.3e}, {:.2} s", res.infidelity, res.breakdown.total, res.wall_time_s);
        for d in &res.instances {
            println!("  instance {} cost {:.3e} after {} iterations ({:?})", d.index, d.final_cost, d.iterations, d.status);
        }
        println!("  constraints pass: {}", res.constraints.passes());
    }
    Ok(())
}
