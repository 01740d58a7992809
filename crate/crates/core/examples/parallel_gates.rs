//! Two simultaneous gates in a ten-ion chain with individual drives: a
//! maximally entangling pair {0, 3} and a four-ion gate on {2, 5, 6, 8} with
//! pairwise phases in steps of pi/10.
//!
//! cargo run --release --example parallel_gates -- [duration_us] [segments] [axial_mhz]

use std::f64::consts::PI;

use msgate::chain::{build_mode_data, equilibrium_positions, mass_from_amu, TrapChainConfig};
use msgate::control::{GateTarget, Modulation, SchemeConfig};
use msgate::kernels::{phase_series, trajectory_series};
use msgate::optimize::{optimize, OptimizationProblem};

fn main() -> msgate::Result<()> {
    let mut args = std::env::args().skip(1);
    let tau_us: f64 = args.next().map_or(300.0, |s| s.parse().expect("duration in us"));
    let segments: usize = args.next().map_or(128, |s| s.parse().expect("segment count"));
    let axial: f64 = args.next().map_or(0.3, |s| s.parse().expect("axial frequency in MHz"));

    let mhz = 2.0 * PI * 1e6;
    let k = 2.0 * PI / 355e-9;
    let trap = TrapChainConfig::new(10, mass_from_amu(171.0), [1.6 * mhz, 1.5 * mhz, axial * mhz], [k, k, 0.0]);
    let modes = build_mode_data(&trap, &equilibrium_positions(&trap)?, 1.6 * mhz + 2.0 * PI * 4.7e3)?;

    let step = PI / 10.0;
    let target = GateTarget::new(10).with_maximal_gate(&[0, 3])?.with_gate(
        &[2, 5, 6, 8],
        &[
            ((2, 5), step),
            ((2, 6), 2.0 * step),
            ((2, 8), -step),
            ((5, 6), 3.0 * step),
            ((5, 8), -2.0 * step),
            ((6, 8), step),
        ],
    )?;
    let scheme = SchemeConfig::individual(Modulation::Ampm, segments, tau_us * 1e-6, 2.0 * PI * 100e3, &target);
    let problem = OptimizationProblem::from_modes(&modes, target.clone(), scheme)?.with_seed(3);
    println!("{} variables, {} instances", problem.n_vars(), problem.instance_count);
    let res = optimize(&problem)?;
    println!("infidelity {:.3e} in {:.1} s (instance {})", res.infidelity, res.wall_time_s, res.best_instance);
    for d in &res.instances {
        println!("  instance {} cost {:.3e} after {} iterations ({:?})", d.index, d.final_cost, d.iterations, d.status);
    }

    let end = [res.best_drive.duration];
    let phases = &phase_series(&res.best_drive, &modes, &end)?[0];
    let mut worst_phase: f64 = 0.0;
    for j in 0..10 {
        for k in j + 1..10 {
            worst_phase = worst_phase.max((phases[(j, k)] - target.phase(j, k)).abs());
        }
    }
    let alpha = &trajectory_series(&res.best_drive, &modes, &end)?[0];
    println!("worst pair phase error {worst_phase:.2e} rad, largest final |alpha| {:.2e}", alpha.iter().map(|a| a.norm()).fold(0.0, f64::max));
    Ok(())
}
