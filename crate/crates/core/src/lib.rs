//! Pulse synthesis for Molmer-Sorensen-type entangling gates in linear
//! trapped-ion chains.
//!
//! The pipeline runs chain model -> kernels -> optimizer -> analysis:
//!
//! ```no_run
//! use msgate::chain::{build_mode_data, equilibrium_positions, mass_from_amu, TrapChainConfig};
//! use msgate::control::{GateTarget, Modulation, SchemeConfig};
//! use msgate::optimize::{optimize, OptimizationProblem};
//! use std::f64::consts::PI;
//!
//! let mhz = 2.0 * PI * 1e6;
//! let k = 2.0 * PI / 355e-9;
//! let trap = TrapChainConfig::new(2, mass_from_amu(171.0), [1.6 * mhz, 1.5 * mhz, 0.3 * mhz], [k, k, 0.0]);
//! let pos = equilibrium_positions(&trap).unwrap();
//! let modes = build_mode_data(&trap, &pos, 1.6 * mhz + 2.0 * PI * 4.7e3).unwrap();
//! let target = GateTarget::new(2).with_maximal_gate(&[0, 1]).unwrap();
//! let scheme = SchemeConfig::shared(Modulation::Ampm, 64, 200e-6, 2.0 * PI * 100e3, &target);
//! let result = optimize(&OptimizationProblem::from_modes(&modes, target, scheme).unwrap()).unwrap();
//! println!("infidelity {:e}", result.infidelity);
//! ```

pub mod analysis;
pub mod app;
pub mod chain;
pub mod config;
pub mod control;
pub mod error;
pub mod kernels;
pub mod optimize;
pub mod solver;

pub use error::{Error, Result};
