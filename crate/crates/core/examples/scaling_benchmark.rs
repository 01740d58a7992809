//! Wall time and infidelity of two simultaneous pair gates against chain
//! length.
//!
//! cargo run --release --example scaling_benchmark -- [repeats]

use std::f64::consts::PI;
use std::time::Instant;

use msgate::chain::{build_mode_data, equilibrium_positions, mass_from_amu, TrapChainConfig};
use msgate::control::{GateTarget, Modulation, SchemeConfig};
use msgate::optimize::{optimize, OptimizationProblem};

fn main() -> msgate::Result<()> {
    let repeats: u64 = std::env::args().nth(1).map_or(3, |s| s.parse().expect("repeat count"));
    let mhz = 2.0 * PI * 1e6;
    let k = 2.0 * PI / 355e-9;
    for n in [4, 6, 8, 10, 12] {
        let trap = TrapChainConfig::new(n, mass_from_amu(171.0), [2.0 * mhz, 2.0 * mhz, 0.2 * mhz], [k, k, 0.0]);
        let modes = build_mode_data(&trap, &equilibrium_positions(&trap)?, 2.0 * mhz + 2.0 * PI * 4.7e3)?;
        let target = GateTarget::new(n).with_maximal_gate(&[0, 1])?.with_maximal_gate(&[2, 3])?;
        let scheme = SchemeConfig::individual(Modulation::Ampm, 64, 300e-6, 2.0 * PI * 100e3, &target);
        let (mut time, mut worst) = (0.0, 0.0f64);
        for seed in 0..repeats {
            let problem = OptimizationProblem::from_modes(&modes, target.clone(), scheme.clone())?.with_seed(seed);
            let t0 = Instant::now();
            let res = optimize(&problem)?;
            time += t0.elapsed().as_secs_f64();
            worst = worst.max(res.infidelity);
        }
        println!("N = {n:2}: {:.3} s per gate set, worst infidelity {worst:.2e}", time / repeats as f64);
    }
    Ok(())
}
