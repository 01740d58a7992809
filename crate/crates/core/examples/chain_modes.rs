//! Equilibrium positions, normal modes and Lamb-Dicke parameters of a linear
//! chain, with each mode's detuning from the laser beat note.
//!
//! cargo run --release --example chain_modes -- [n_ions] [axial_mhz]

use std::f64::consts::PI;

use msgate::chain::{build_mode_data, equilibrium_positions, mass_from_amu, TrapChainConfig};

fn main() -> msgate::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(5, |s| s.parse().expect("ion count"));
    let axial: f64 = args.next().map_or(0.3, |s| s.parse().expect("axial frequency in MHz"));
    let mhz = 2.0 * PI * 1e6;
    let k = 2.0 * PI / 355e-9;
    let trap = TrapChainConfig::new(n, mass_from_amu(171.0), [1.6 * mhz, 1.5 * mhz, axial * mhz], [k, k, 0.0]);
    let positions = equilibrium_positions(&trap)?;
    println!("length scale {:.3} um", positions.length_scale * 1e6);
    let z: Vec<String> = positions.physical.iter().map(|x| format!("{:.3}", x * 1e6)).collect();
    println!("positions (um): {}", z.join(" "));

    let modes = build_mode_data(&trap, &positions, 1.6 * mhz + 2.0 * PI * 4.7e3)?;
    for p in 0..modes.n_modes() {
        let eta: Vec<String> = (0..n).map(|j| format!("{:+.4}", modes.lamb_dicke[(j, p)])).collect();
        println!(
            "{} mode {:2}: {:.5} MHz, delta_p/2pi {:9.2} kHz, eta {}",
            modes.axis_labels[p].label(),
            p,
            modes.frequencies[p] / mhz,
            modes.relative_detunings[p] / (2.0 * PI * 1e3),
            eta.join(" ")
        );
    }
    Ok(())
}
