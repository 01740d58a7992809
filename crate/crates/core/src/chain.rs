//! Linear ion-chain statics and normal modes.
//!
//! Equilibrium positions are found in the dimensionless axial potential
//! `V(u) = sum_i u_i^2 / 2 + sum_{i<j} 1 / |u_i - u_j|`, lengths in units of
//! `l = (q^2 / (4 pi eps0 m nu_z^2))^(1/3)`. Mode frequencies follow from the
//! dimensionless Hessians as `nu_p = nu_z * sqrt(lambda_p)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HBAR: f64 = 1.054_571_817e-34;
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_8128e-12;
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;

const NEWTON_BUDGET: usize = 200;
const GRADIENT_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn label(self) -> char {
        match self {
            Axis::X => 'x',
            Axis::Y => 'y',
            Axis::Z => 'z',
        }
    }

    pub fn is_transverse(self) -> bool {
        self != Axis::Z
    }
}

/// Trap and laser geometry for a linear chain. All frequencies are angular
/// (rad/s); `z` is the weak trapping axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrapChainConfig {
    pub n_ions: usize,
    /// Ion mass in kg.
    pub mass: f64,
    /// Center-of-mass trap frequencies for `[x, y, z]`.
    pub com_frequencies: [f64; 3],
    /// Effective two-photon wavevector in rad/m.
    pub raman_wavevector: [f64; 3],
    /// Mean phonon number applied to every mode on each axis.
    pub mean_phonons: [f64; 3],
}

impl TrapChainConfig {
    pub fn new(n_ions: usize, mass: f64, com_frequencies: [f64; 3], raman_wavevector: [f64; 3]) -> Self {
        Self {
            n_ions,
            mass,
            com_frequencies,
            raman_wavevector,
            mean_phonons: [0.0; 3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_ions == 0 {
            return Err(Error::InvalidConfig("chain needs at least one ion".into()));
        }
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(Error::InvalidConfig(format!("ion mass must be positive, got {}", self.mass)));
        }
        for (axis, &f) in Axis::ALL.iter().zip(&self.com_frequencies) {
            if !(f > 0.0 && f.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "trap frequency on {} axis must be positive, got {f}",
                    axis.label()
                )));
            }
        }
        if self.mean_phonons.iter().any(|n| !(*n >= 0.0)) {
            return Err(Error::InvalidConfig("mean phonon numbers must be non-negative".into()));
        }
        Ok(())
    }

    pub fn trap_frequency(&self, axis: Axis) -> f64 {
        self.com_frequencies[axis.index()]
    }

    /// Projection of the wavevector on a trap axis.
    pub fn wavevector_projection(&self, axis: Axis) -> f64 {
        self.raman_wavevector[axis.index()]
    }

    /// `l = (q^2 / (4 pi eps0 m nu_z^2))^(1/3)`.
    pub fn length_scale(&self) -> f64 {
        let nu_z = self.com_frequencies[2];
        (ELEMENTARY_CHARGE.powi(2)
            / (4.0 * std::f64::consts::PI * VACUUM_PERMITTIVITY * self.mass * nu_z * nu_z))
            .cbrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumPositions {
    /// Sorted dimensionless positions.
    pub dimensionless: Vec<f64>,
    pub length_scale: f64,
    /// Physical positions in meters.
    pub physical: Vec<f64>,
}

impl EquilibriumPositions {
    pub fn len(&self) -> usize {
        self.dimensionless.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dimensionless.is_empty()
    }
}

/// Gradient of the dimensionless axial potential.
pub fn potential_gradient(u: &[f64]) -> Vec<f64> {
    let n = u.len();
    let mut g = u.to_vec();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let d = u[i] - u[j];
                g[i] -= d.signum() / (d * d);
            }
        }
    }
    g
}

pub fn potential_energy(u: &[f64]) -> f64 {
    let mut v: f64 = u.iter().map(|x| 0.5 * x * x).sum();
    for i in 0..u.len() {
        for j in (i + 1)..u.len() {
            v += 1.0 / (u[i] - u[j]).abs();
        }
    }
    v
}

/// `sum_{k != j} 1 / |u_j - u_k|^3` and the off-diagonal couplings.
fn inverse_cubes(u: &[f64]) -> DMatrix<f64> {
    let n = u.len();
    DMatrix::from_fn(n, n, |j, k| if j == k { 0.0 } else { 1.0 / (u[j] - u[k]).abs().powi(3) })
}

/// Dimensionless axial Hessian `B`.
pub fn axial_hessian(u: &[f64]) -> DMatrix<f64> {
    let c = inverse_cubes(u);
    let n = u.len();
    let mut b = DMatrix::zeros(n, n);
    for j in 0..n {
        let row_sum: f64 = c.row(j).sum();
        for k in 0..n {
            b[(j, k)] = if j == k { 1.0 + 2.0 * row_sum } else { -2.0 * c[(j, k)] };
        }
    }
    b
}

/// Dimensionless transverse Hessian `A` for trap-frequency ratio `nu_t / nu_z`.
pub fn transverse_hessian(u: &[f64], ratio: f64) -> DMatrix<f64> {
    let c = inverse_cubes(u);
    let n = u.len();
    let mut a = DMatrix::zeros(n, n);
    for j in 0..n {
        let row_sum: f64 = c.row(j).sum();
        for k in 0..n {
            a[(j, k)] = if j == k { ratio * ratio - row_sum } else { c[(j, k)] };
        }
    }
    a
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Damped Newton iteration on the axial potential.
pub fn equilibrium_positions(config: &TrapChainConfig) -> Result<EquilibriumPositions> {
    config.validate()?;
    let n = config.n_ions;
    let spacing = 2.018 * (n as f64).powf(-0.559);
    let centre = (n as f64 - 1.0) / 2.0;
    let mut u: Vec<f64> = (0..n).map(|i| (i as f64 - centre) * spacing).collect();

    let mut grad = potential_gradient(&u);
    let mut iterations = 0;
    while max_abs(&grad) > 1e-13 && iterations < NEWTON_BUDGET {
        iterations += 1;
        let hessian = axial_hessian(&u);
        let rhs = DVector::from_iterator(n, grad.iter().map(|g| -g));
        let step = match hessian.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => rhs.clone(),
        };
        let energy = potential_energy(&u);
        let gnorm = max_abs(&grad);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = u.iter().zip(step.iter()).map(|(x, s)| x + t * s).collect();
            let ordered = trial.windows(2).all(|w| w[0] < w[1]);
            if ordered {
                let trial_grad = potential_gradient(&trial);
                if potential_energy(&trial) <= energy || max_abs(&trial_grad) < gnorm {
                    u = trial;
                    grad = trial_grad;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    let gnorm = max_abs(&grad);
    if gnorm >= GRADIENT_TOLERANCE {
        return Err(Error::SolverFailure {
            iterations,
            gradient_norm: gnorm,
        });
    }
    let length_scale = config.length_scale();
    let physical = u.iter().map(|x| x * length_scale).collect();
    Ok(EquilibriumPositions {
        dimensionless: u,
        length_scale,
        physical,
    })
}

/// Normal modes along one axis. Mode 0 is always the center-of-mass mode:
/// transverse modes are sorted by descending frequency, axial ones ascending.
#[derive(Clone, Debug, PartialEq)]
pub struct AxisModes {
    pub axis: Axis,
    /// Angular frequencies `nu_p`.
    pub frequencies: Vec<f64>,
    /// Dimensionless Hessian eigenvalues, `nu_p = nu_z sqrt(lambda_p)`.
    pub eigenvalues: Vec<f64>,
    /// Participation vectors, column `p` holds `b_j^(p)`.
    pub eigenvectors: DMatrix<f64>,
}

pub fn normal_modes(config: &TrapChainConfig, positions: &EquilibriumPositions, axis: Axis) -> Result<AxisModes> {
    if positions.len() != config.n_ions {
        return Err(Error::InvalidConfig(format!(
            "{} positions supplied for a {}-ion chain",
            positions.len(),
            config.n_ions
        )));
    }
    let u = &positions.dimensionless;
    let nu_z = config.com_frequencies[2];
    let hessian = match axis {
        Axis::Z => axial_hessian(u),
        t => transverse_hessian(u, config.trap_frequency(t) / nu_z),
    };
    let eig = SymmetricEigen::new(hessian);
    let n = u.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    if axis.is_transverse() {
        order.reverse();
    }

    let mut eigenvalues = Vec::with_capacity(n);
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (col, &idx) in order.iter().enumerate() {
        let lambda = eig.eigenvalues[idx];
        if lambda <= 0.0 {
            return Err(Error::ChainInstability {
                axis: axis.label(),
                eigenvalue: lambda,
            });
        }
        eigenvalues.push(lambda);
        let mut v: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        let sum: f64 = v.iter().sum();
        let flip = if sum.abs() > 1e-9 {
            sum < 0.0
        } else {
            v.iter().find(|x| x.abs() > 1e-9).map_or(false, |x| *x < 0.0)
        };
        if flip {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        for (row, x) in v.into_iter().enumerate() {
            eigenvectors[(row, col)] = x;
        }
    }
    let frequencies = eigenvalues.iter().map(|l| nu_z * l.sqrt()).collect();
    Ok(AxisModes {
        axis,
        frequencies,
        eigenvalues,
        eigenvectors,
    })
}

/// The motional modes that couple to the drive, with their Lamb-Dicke
/// couplings and detunings from the laser beat note.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeData {
    pub n_ions: usize,
    /// Angular mode frequencies `nu_p`.
    pub frequencies: Vec<f64>,
    /// Participation vectors, `eigenvectors[(j, p)] = b_j^(p)`.
    pub eigenvectors: DMatrix<f64>,
    /// `lamb_dicke[(j, p)] = eta_j^p`.
    pub lamb_dicke: DMatrix<f64>,
    pub axis_labels: Vec<Axis>,
    pub mean_phonons: Vec<f64>,
    /// Laser beat-note detuning `delta` (rad/s).
    pub laser_detuning: f64,
    /// `delta_p = nu_p - delta` (rad/s).
    pub relative_detunings: Vec<f64>,
}

impl ModeData {
    pub fn n_modes(&self) -> usize {
        self.frequencies.len()
    }

    /// Same modes with every relative detuning shifted by its own offset.
    pub fn with_detuning_offsets(&self, offsets: &[f64]) -> ModeData {
        assert_eq!(offsets.len(), self.n_modes(), "one offset per mode");
        let mut out = self.clone();
        for (d, e) in out.relative_detunings.iter_mut().zip(offsets) {
            *d += e;
        }
        out
    }

    /// Same modes with a common laser-detuning error (`delta_p -> delta_p + eps`).
    pub fn with_common_offset(&self, offset: f64) -> ModeData {
        self.with_detuning_offsets(&vec![offset; self.n_modes()])
    }

    /// Index of the center-of-mass mode on `axis`, if that axis couples.
    pub fn com_mode(&self, axis: Axis) -> Option<usize> {
        self.axis_labels.iter().position(|a| *a == axis)
    }
}

/// Computes every coupled mode (axes with nonzero wavevector projection) and
/// attaches `delta_p = nu_p - laser_detuning`.
pub fn build_mode_data(
    config: &TrapChainConfig,
    positions: &EquilibriumPositions,
    laser_detuning: f64,
) -> Result<ModeData> {
    config.validate()?;
    let coupled: Vec<Axis> = Axis::ALL
        .iter()
        .copied()
        .filter(|a| config.wavevector_projection(*a) != 0.0)
        .collect();
    if coupled.is_empty() {
        return Err(Error::NoCoupling);
    }

    let n = config.n_ions;
    let mut per_axis = Vec::new();
    for axis in [Axis::X, Axis::Y] {
        // Both transverse axes must be stable whether or not they couple.
        let modes = normal_modes(config, positions, axis)?;
        if coupled.contains(&axis) {
            per_axis.push(modes);
        }
    }
    if coupled.contains(&Axis::Z) {
        per_axis.push(normal_modes(config, positions, Axis::Z)?);
    }

    let total: usize = per_axis.iter().map(|m| m.frequencies.len()).sum();
    let mut frequencies = Vec::with_capacity(total);
    let mut axis_labels = Vec::with_capacity(total);
    let mut mean_phonons = Vec::with_capacity(total);
    let mut eigenvectors = DMatrix::zeros(n, total);
    let mut lamb_dicke = DMatrix::zeros(n, total);
    let mut col = 0;
    for modes in &per_axis {
        let k = config.wavevector_projection(modes.axis);
        for (p, &nu) in modes.frequencies.iter().enumerate() {
            let zero_point = (HBAR / (2.0 * config.mass * nu)).sqrt();
            for j in 0..n {
                let b = modes.eigenvectors[(j, p)];
                eigenvectors[(j, col)] = b;
                lamb_dicke[(j, col)] = k * zero_point * b;
            }
            frequencies.push(nu);
            axis_labels.push(modes.axis);
            mean_phonons.push(config.mean_phonons[modes.axis.index()]);
            col += 1;
        }
    }
    let relative_detunings = frequencies.iter().map(|nu| nu - laser_detuning).collect();
    Ok(ModeData {
        n_ions: n,
        frequencies,
        eigenvectors,
        lamb_dicke,
        axis_labels,
        mean_phonons,
        laser_detuning,
        relative_detunings,
    })
}

/// Mass of a singly charged ion of `amu` atomic mass units.
pub fn mass_from_amu(amu: f64) -> f64 {
    amu * ATOMIC_MASS_UNIT
}
