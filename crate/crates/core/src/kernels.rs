//! Closed-form gate kernels on a piecewise-constant segment grid.
//!
//! Internally times are measured in units of the gate duration `tau` and
//! rates in units of `1/tau`, so that `alpha = M~ u~` with `u~ = tau * gamma`.
//! Accessors ending in `_matrix` convert back to SI units.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::chain::ModeData;
use crate::control::DriveWaveform;
use crate::error::{Error, Result};

/// Below this `|delta * h|` the segment antiderivatives switch to Taylor series.
pub const SMALL_PHASE: f64 = 1e-6;

/// `(e^{i theta} - 1) / (i theta)`.
pub fn unit_segment(theta: f64) -> Complex64 {
    if theta.abs() < SMALL_PHASE {
        Complex64::new(1.0 - theta * theta / 6.0, theta / 2.0)
    } else {
        let half = 0.5 * theta;
        Complex64::new(theta.sin() / theta, 2.0 * half.sin() * half.sin() / theta)
    }
}

/// `int_0^1 (1 - y) e^{i theta y} dy = ((1 - cos theta) + i (theta - sin theta)) / theta^2`.
pub fn unit_triangle(theta: f64) -> Complex64 {
    if theta.abs() < SMALL_PHASE {
        return Complex64::new(0.5 - theta * theta / 24.0, theta / 6.0);
    }
    let half = 0.5 * theta;
    let re = 2.0 * (half.sin() / theta).powi(2);
    let im = if theta.abs() < 1.0 {
        // (theta - sin theta) / theta^2 as an alternating series.
        let t2 = theta * theta;
        let mut term = theta / 6.0;
        let mut sum = term;
        let mut n = 1.0;
        while term.abs() > 1e-18 * sum.abs() {
            term *= -t2 / ((2.0 * n + 2.0) * (2.0 * n + 3.0));
            sum += term;
            n += 1.0;
        }
        sum
    } else {
        (theta - theta.sin()) / (theta * theta)
    };
    Complex64::new(re, im)
}

/// `int_a^{a+h} e^{i delta t} dt`.
pub fn segment_integral(delta: f64, a: f64, h: f64) -> Complex64 {
    Complex64::from_polar(h, delta * a) * unit_segment(delta * h)
}

/// `int_a^{a+h} dt1 e^{i delta t1} int_a^{t1} dt2 e^{-i delta t2}`.
pub fn segment_triangle(delta: f64, h: f64) -> Complex64 {
    h * h * unit_triangle(delta * h)
}

/// `int_a^{a+h} (a + h - t) e^{i delta t} dt`.
pub fn segment_ramp(delta: f64, a: f64, h: f64) -> Complex64 {
    Complex64::from_polar(h * h, delta * a) * unit_triangle(delta * h)
}

pub(crate) fn check_grid(boundaries: &[f64]) -> Result<()> {
    if boundaries.len() < 2 {
        return Err(Error::GridMismatch("grid needs at least one segment".into()));
    }
    if boundaries[0] != 0.0 {
        return Err(Error::GridMismatch("grid must start at t = 0".into()));
    }
    if boundaries.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
        return Err(Error::GridMismatch("grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Precomputed kernels `M`, `P^{m,n}`, `R` (and the `t`-weighted closure
/// kernel) for a fixed grid and mode set.
#[derive(Clone, Debug)]
pub struct KernelSet {
    modes: ModeData,
    boundaries: Vec<f64>,
    tau: f64,
    /// Dimensionless grid.
    grid: Vec<f64>,
    /// `delta_p * tau`.
    detunings: Vec<f64>,
    /// `E_{p,k} = int_{A_k} e^{i delta_p t} dt` (dimensionless).
    segment: DMatrix<Complex64>,
    /// Same-segment time-ordered double integral per mode and segment.
    triangle: DMatrix<Complex64>,
    /// `R_{p,k} = int_0^1 dt int_{A_k cap [0,t]} dt1 e^{i delta_p t1}`.
    com: DMatrix<Complex64>,
    /// `(1/2) int_{A_k} t e^{i delta_p t} dt`.
    tweight: DMatrix<Complex64>,
    phase: BTreeMap<(usize, usize), DMatrix<Complex64>>,
}

impl KernelSet {
    /// Builds kernels on `boundaries` (seconds) and caches `P` for `pairs`.
    pub fn new(modes: &ModeData, boundaries: &[f64], pairs: &[(usize, usize)]) -> Result<Self> {
        check_grid(boundaries)?;
        if let Some(d) = modes.relative_detunings.iter().find(|d| !d.is_finite()) {
            return Err(Error::InvalidConfig(format!("non-finite relative detuning {d}")));
        }
        let s = boundaries.len() - 1;
        let tau = boundaries[s];
        let grid: Vec<f64> = boundaries.iter().map(|t| t / tau).collect();
        let detunings: Vec<f64> = modes.relative_detunings.iter().map(|d| d * tau).collect();
        let n_modes = detunings.len();
        let mut segment = DMatrix::zeros(n_modes, s);
        let mut triangle = DMatrix::zeros(n_modes, s);
        let mut com = DMatrix::zeros(n_modes, s);
        let mut tweight = DMatrix::zeros(n_modes, s);
        for (p, &d) in detunings.iter().enumerate() {
            for k in 0..s {
                let (a, b) = (grid[k], grid[k + 1]);
                let h = b - a;
                let e = segment_integral(d, a, h);
                let ramp = segment_ramp(d, a, h);
                segment[(p, k)] = e;
                triangle[(p, k)] = segment_triangle(d, h);
                com[(p, k)] = ramp + e * (1.0 - b);
                tweight[(p, k)] = 0.5 * (e * b - ramp);
            }
        }
        let mut set = Self {
            modes: modes.clone(),
            boundaries: boundaries.to_vec(),
            tau,
            grid,
            detunings,
            segment,
            triangle,
            com,
            tweight,
            phase: BTreeMap::new(),
        };
        for &(m, n) in pairs {
            let key = (m.min(n), m.max(n));
            if !set.phase.contains_key(&key) {
                let p = set.build_phase(key.0, key.1);
                set.phase.insert(key, p);
            }
        }
        Ok(set)
    }

    pub fn modes(&self) -> &ModeData {
        &self.modes
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn duration(&self) -> f64 {
        self.tau
    }

    pub fn segments(&self) -> usize {
        self.grid.len() - 1
    }

    pub fn n_modes(&self) -> usize {
        self.detunings.len()
    }

    pub fn dimensionless_grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn dimensionless_detunings(&self) -> &[f64] {
        &self.detunings
    }

    pub fn segment_integrals(&self) -> &DMatrix<Complex64> {
        &self.segment
    }

    pub fn segment_triangles(&self) -> &DMatrix<Complex64> {
        &self.triangle
    }

    /// Dimensionless `M~ = M / tau`.
    pub fn displacement(&self) -> DMatrix<Complex64> {
        self.segment.map(|e| 0.5 * e)
    }

    /// Dimensionless `R~ = R / tau^2`.
    pub fn com(&self) -> &DMatrix<Complex64> {
        &self.com
    }

    /// Dimensionless `t`-weighted closure kernel, `/ tau^2`.
    pub fn tweight(&self) -> &DMatrix<Complex64> {
        &self.tweight
    }

    /// `M_{p,k} = (1/2) int_{A_k} e^{i delta_p t} dt` in seconds.
    pub fn displacement_matrix(&self) -> DMatrix<Complex64> {
        self.segment.map(|e| 0.5 * self.tau * e)
    }

    /// `R_{p,k}` in seconds squared.
    pub fn com_matrix(&self) -> DMatrix<Complex64> {
        self.com.map(|e| self.tau * self.tau * e)
    }

    /// `P^{m,n}` in seconds squared.
    pub fn phase_matrix(&self, m: usize, n: usize) -> DMatrix<Complex64> {
        let t2 = self.tau * self.tau;
        self.phase_kernel(m, n).map(|e| t2 * e)
    }

    /// Dimensionless `P~^{m,n}`; built on demand for pairs not cached.
    pub fn phase_kernel(&self, m: usize, n: usize) -> std::borrow::Cow<'_, DMatrix<Complex64>> {
        let key = (m.min(n), m.max(n));
        match self.phase.get(&key) {
            Some(p) => std::borrow::Cow::Borrowed(p),
            None => std::borrow::Cow::Owned(self.build_phase(key.0, key.1)),
        }
    }

    pub fn cached_pairs(&self) -> impl Iterator<Item = &(usize, usize)> {
        self.phase.keys()
    }

    /// `P~^{m,n}_{k,l} = sum_p eta_m^p eta_n^p / 4 * Q^p_{k,l}` with
    /// `Q_{k,l} = E_k conj(E_l)` for `k > l`, the triangle on the diagonal and
    /// zero above it.
    fn build_phase(&self, m: usize, n: usize) -> DMatrix<Complex64> {
        let s = self.segments();
        let mut p_mat = DMatrix::zeros(s, s);
        for p in 0..self.n_modes() {
            let w = 0.25 * self.modes.lamb_dicke[(m, p)] * self.modes.lamb_dicke[(n, p)];
            if w == 0.0 {
                continue;
            }
            for l in 0..s {
                let el = self.segment[(p, l)].conj() * w;
                p_mat[(l, l)] += self.triangle[(p, l)] * w;
                for k in (l + 1)..s {
                    p_mat[(k, l)] += self.segment[(p, k)] * el;
                }
            }
        }
        p_mat
    }

    fn check_drive(&self, drive: &DriveWaveform) -> Result<()> {
        drive.check()?;
        if drive.segments() != self.segments() {
            return Err(Error::GridMismatch(format!(
                "drive has {} segments, kernels {}",
                drive.segments(),
                self.segments()
            )));
        }
        let tol = 1e-12 * self.tau;
        if drive.boundaries.iter().zip(&self.boundaries).any(|(a, b)| (a - b).abs() > tol) {
            return Err(Error::GridMismatch("drive and kernel segment boundaries differ".into()));
        }
        if let Some(d) = drive.ions.iter().find(|d| d.ion >= self.modes.n_ions) {
            return Err(Error::GridMismatch(format!("drive addresses ion {} outside the chain", d.ion)));
        }
        Ok(())
    }

    /// Dimensionless control vector `u~_j = tau * gamma_j`.
    pub fn control_vector(&self, drive: &DriveWaveform, ion: usize) -> Vec<Complex64> {
        match drive.drive_for(ion) {
            Some(d) => d.values().into_iter().map(|g| g * self.tau).collect(),
            None => vec![Complex64::new(0.0, 0.0); self.segments()],
        }
    }

    /// End-of-gate displacements `alpha_j^p(tau)`, one row per ion of the chain.
    pub fn displacements(&self, drive: &DriveWaveform) -> Result<DMatrix<Complex64>> {
        self.check_drive(drive)?;
        let mut out = DMatrix::zeros(self.modes.n_ions, self.n_modes());
        for d in &drive.ions {
            let u = self.control_vector(drive, d.ion);
            for p in 0..self.n_modes() {
                let mut acc = Complex64::new(0.0, 0.0);
                for (k, uk) in u.iter().enumerate() {
                    acc += self.segment[(p, k)] * uk;
                }
                out[(d.ion, p)] = 0.5 * acc;
            }
        }
        Ok(out)
    }

    /// Symmetric matrix of accumulated phases `phi_jk(tau) + phi_kj(tau)`.
    pub fn entangling_phases(&self, drive: &DriveWaveform) -> Result<DMatrix<f64>> {
        self.check_drive(drive)?;
        let n = self.modes.n_ions;
        let mut out = DMatrix::zeros(n, n);
        let ions = drive.addressed_ions();
        let controls: Vec<Vec<Complex64>> = ions.iter().map(|&i| self.control_vector(drive, i)).collect();
        for a in 0..ions.len() {
            for b in (a + 1)..ions.len() {
                let p = self.phase_kernel(ions[a], ions[b]);
                let v = pair_phase(&p, &controls[a], &controls[b]);
                out[(ions[a], ions[b])] = v;
                out[(ions[b], ions[a])] = v;
            }
        }
        Ok(out)
    }

    /// Center-of-mass residuals `int_0^tau alpha_j^p(t) dt = (1/2) R u_j`, in
    /// seconds, one row per ion.
    pub fn com_residuals(&self, drive: &DriveWaveform) -> Result<DMatrix<Complex64>> {
        self.check_drive(drive)?;
        let scale = 0.5 * self.tau;
        Ok(self.apply_rows(drive, &self.com).map(|z| z * scale))
    }

    /// `int_0^tau t gamma_j(t)/2 e^{i delta_p t} dt` in seconds, one row per ion.
    pub fn tweighted_integrals(&self, drive: &DriveWaveform) -> Result<DMatrix<Complex64>> {
        self.check_drive(drive)?;
        Ok(self.apply_rows(drive, &self.tweight).map(|z| z * self.tau))
    }

    fn apply_rows(&self, drive: &DriveWaveform, kernel: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let mut out = DMatrix::zeros(self.modes.n_ions, self.n_modes());
        for d in &drive.ions {
            let u = self.control_vector(drive, d.ion);
            for p in 0..self.n_modes() {
                out[(d.ion, p)] = (0..u.len()).map(|k| kernel[(p, k)] * u[k]).sum();
            }
        }
        out
    }
}

/// `Im[a^T P b* + b^T P a*]` for dimensionless controls.
pub fn pair_phase(p: &DMatrix<Complex64>, a: &[Complex64], b: &[Complex64]) -> f64 {
    let s = a.len();
    let mut acc = Complex64::new(0.0, 0.0);
    for l in 0..s {
        let (al, bl) = (a[l].conj(), b[l].conj());
        for k in l..s {
            let pk = p[(k, l)];
            acc += a[k] * pk * bl + b[k] * pk * al;
        }
    }
    acc.im
}

fn locate(grid: &[f64], t: f64) -> usize {
    let s = grid.len() - 1;
    match grid.binary_search_by(|g| g.total_cmp(&t)) {
        Ok(i) => i.min(s - 1),
        Err(i) => (i.max(1) - 1).min(s - 1),
    }
}

fn check_samples(drive: &DriveWaveform, times: &[f64]) -> Result<()> {
    drive.check()?;
    for &t in times {
        let slack = 1e-12 * drive.duration;
        if !(t >= -slack && t <= drive.duration + slack) {
            return Err(Error::SampleOutOfRange {
                time: t,
                duration: drive.duration,
            });
        }
    }
    Ok(())
}

/// Sampled displacements `alpha_j^p(t)`; element `[i][(j, p)]` is sample `i`.
pub fn trajectory_series(drive: &DriveWaveform, modes: &ModeData, times: &[f64]) -> Result<Vec<DMatrix<Complex64>>> {
    check_samples(drive, times)?;
    let grid = &drive.boundaries;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let t = t.clamp(0.0, drive.duration);
        let k = locate(grid, t);
        let mut m = DMatrix::zeros(modes.n_ions, modes.n_modes());
        for d in &drive.ions {
            let u = d.values();
            for (p, &delta) in modes.relative_detunings.iter().enumerate() {
                let mut acc = Complex64::new(0.0, 0.0);
                for l in 0..k {
                    acc += u[l] * segment_integral(delta, grid[l], grid[l + 1] - grid[l]);
                }
                acc += u[k] * segment_integral(delta, grid[k], t - grid[k]);
                m[(d.ion, p)] = 0.5 * acc;
            }
        }
        out.push(m);
    }
    Ok(out)
}

/// Sampled summed phases `phi_jk(t) + phi_kj(t)` by exact accumulation over
/// the segments preceding each sample.
pub fn phase_series(drive: &DriveWaveform, modes: &ModeData, times: &[f64]) -> Result<Vec<DMatrix<f64>>> {
    check_samples(drive, times)?;
    let grid = &drive.boundaries;
    let n = modes.n_ions;
    let values: Vec<(usize, Vec<Complex64>)> = drive.ions.iter().map(|d| (d.ion, d.values())).collect();
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let t = t.clamp(0.0, drive.duration);
        let kt = locate(grid, t);
        let mut phases = DMatrix::zeros(n, n);
        for p in 0..modes.n_modes() {
            let delta = modes.relative_detunings[p];
            // Running X_{jk} = int int_{t2 < t1} gamma_j(t1) gamma_k*(t2) e^{i delta (t1 - t2)}.
            let nd = values.len();
            let mut cum = vec![Complex64::new(0.0, 0.0); nd];
            let mut x = vec![Complex64::new(0.0, 0.0); nd * nd];
            for k in 0..=kt {
                let a = grid[k];
                let h = if k == kt { t - a } else { grid[k + 1] - a };
                let e = segment_integral(delta, a, h);
                let tri = segment_triangle(delta, h);
                for (ja, (_, uj)) in values.iter().enumerate() {
                    for (kb, (_, uk)) in values.iter().enumerate() {
                        x[ja * nd + kb] += uj[k] * (e * cum[kb].conj() + tri * uk[k].conj());
                    }
                }
                for (ja, (_, uj)) in values.iter().enumerate() {
                    cum[ja] += uj[k] * e;
                }
            }
            for ja in 0..nd {
                for kb in (ja + 1)..nd {
                    let (ij, ik) = (values[ja].0, values[kb].0);
                    let w = 0.25 * modes.lamb_dicke[(ij, p)] * modes.lamb_dicke[(ik, p)];
                    let v = w * (x[ja * nd + kb] + x[kb * nd + ja]).im;
                    phases[(ij, ik)] += v;
                    phases[(ik, ij)] += v;
                }
            }
        }
        out.push(phases);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{DriveWaveform, IonDrive};
    use nalgebra::DMatrix;
    use std::f64::consts::PI;

    fn toy_modes(detunings: &[f64], etas: &[&[f64]]) -> ModeData {
        let n_ions = etas.len();
        let n_modes = detunings.len();
        ModeData {
            n_ions,
            frequencies: vec![1.0; n_modes],
            eigenvectors: DMatrix::from_fn(n_ions, n_modes, |j, p| etas[j][p]),
            lamb_dicke: DMatrix::from_fn(n_ions, n_modes, |j, p| etas[j][p]),
            axis_labels: vec![crate::chain::Axis::X; n_modes],
            mean_phonons: vec![0.0; n_modes],
            laser_detuning: 0.0,
            relative_detunings: detunings.to_vec(),
        }
    }

    fn constant_drive(tau: f64, s: usize, ions: &[usize], omega: f64, phi: f64) -> DriveWaveform {
        let mut d = DriveWaveform::zeros(tau, s, ions);
        for ion in &mut d.ions {
            ion.amplitudes = vec![omega; s];
            ion.phases = vec![phi; s];
        }
        d
    }

    #[test]
    fn resonant_and_full_period_segments() {
        let modes = toy_modes(&[0.0, 2.0 * PI], &[&[1.0, 1.0]]);
        let k = KernelSet::new(&modes, &[0.0, 1.0], &[]).unwrap();
        let m = k.displacement_matrix();
        assert!((m[(0, 0)] - Complex64::new(0.5, 0.0)).norm() < 1e-15);
        assert!(m[(1, 0)].norm() < 1e-15);
    }

    #[test]
    fn small_detuning_branches_agree() {
        for &theta in &[0.99e-6_f64, -0.5e-6, 1e-7] {
            let closed = Complex64::new(theta.sin() / theta, 2.0 * (0.5 * theta).sin().powi(2) / theta);
            assert!((unit_segment(theta) - closed).norm() < 1e-12);
            let series = Complex64::new(0.5 - theta * theta / 24.0, theta / 6.0 - theta.powi(3) / 120.0);
            assert!((unit_triangle(theta) - series).norm() < 1e-15);
        }
        for &theta in &[0.3_f64, 0.999, 1.001, 4.0] {
            let closed = Complex64::new((1.0 - theta.cos()) / (theta * theta), (theta - theta.sin()) / (theta * theta));
            assert!((unit_triangle(theta) - closed).norm() < 1e-14);
        }
        assert_eq!(segment_triangle(0.0, 2.0), Complex64::new(2.0, 0.0));
    }

    #[test]
    fn constant_drive_displacement_closed_form() {
        let (tau, delta, omega) = (2.0, 1.7, 0.9);
        let modes = toy_modes(&[delta], &[&[0.1]]);
        let drive = constant_drive(tau, 5, &[0], omega, 0.0);
        let grid = drive.boundaries.clone();
        let k = KernelSet::new(&modes, &grid, &[]).unwrap();
        let alpha = k.displacements(&drive).unwrap()[(0, 0)];
        let i = Complex64::i();
        let expected = (omega / 2.0) * ((i * delta * tau).exp() - 1.0) / (i * delta);
        assert!((alpha - expected).norm() < 1e-13);

        // int_0^tau alpha(t) dt = (Omega/2) [ (e^{i d tau} - 1)/(i d)^2 - tau/(i d) ]
        let com = k.com_residuals(&drive).unwrap()[(0, 0)];
        let id = i * delta;
        let expected = (omega / 2.0) * (((id * tau).exp() - 1.0) / (id * id) - tau / id);
        assert!((com - expected).norm() < 1e-13);
    }

    #[test]
    fn zero_drive_gives_zeros() {
        let modes = toy_modes(&[0.4, -1.1], &[&[0.1, 0.2], &[0.3, -0.1]]);
        let drive = DriveWaveform::zeros(1.0, 4, &[0, 1]);
        let k = KernelSet::new(&modes, &drive.boundaries, &[(0, 1)]).unwrap();
        assert!(k.displacements(&drive).unwrap().iter().all(|z| z.norm() == 0.0));
        assert!(k.entangling_phases(&drive).unwrap().iter().all(|z| *z == 0.0));
        assert!(k.com_residuals(&drive).unwrap().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn grid_mismatch_is_an_error() {
        let modes = toy_modes(&[0.4], &[&[0.1]]);
        let drive = DriveWaveform::zeros(1.0, 4, &[0]);
        let k = KernelSet::new(&modes, &crate::control::uniform_grid(1.0, 5), &[]).unwrap();
        assert!(matches!(k.displacements(&drive), Err(Error::GridMismatch(_))));
        let k = KernelSet::new(&modes, &crate::control::uniform_grid(1.1, 4), &[]).unwrap();
        assert!(matches!(k.entangling_phases(&drive), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn phase_kernel_is_lower_triangular_and_factorizes() {
        let modes = toy_modes(&[0.4, -1.1], &[&[0.1, 0.2], &[0.3, -0.1]]);
        let grid = [0.0, 0.2, 0.5, 0.6, 1.0];
        let k = KernelSet::new(&modes, &grid, &[(0, 1)]).unwrap();
        let p = k.phase_matrix(0, 1);
        let e = k.segment_integrals();
        for r in 0..4 {
            for c in 0..4 {
                if r < c {
                    assert_eq!(p[(r, c)], Complex64::new(0.0, 0.0));
                } else if r > c {
                    let expected: Complex64 = (0..2)
                        .map(|q| 0.25 * modes.lamb_dicke[(0, q)] * modes.lamb_dicke[(1, q)] * e[(q, r)] * e[(q, c)].conj())
                        .sum();
                    assert!((p[(r, c)] - expected).norm() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn series_endpoints_match_kernels() {
        let modes = toy_modes(&[3.0, -5.5, 0.0], &[&[0.1, 0.2, 0.05], &[0.3, -0.1, 0.05], &[0.2, 0.1, -0.1]]);
        let mut drive = DriveWaveform::zeros(1.3, 6, &[0, 2]);
        drive.ions[0] = IonDrive {
            ion: 0,
            amplitudes: vec![0.5, 1.0, 0.2, 0.9, 0.3, 0.7],
            phases: vec![0.1, -2.0, 0.3, 1.0, 2.5, -0.4],
        };
        drive.ions[1] = IonDrive {
            ion: 2,
            amplitudes: vec![0.1, 0.8, 0.6, 0.2, 0.9, 0.4],
            phases: vec![1.1, 0.0, -0.3, 0.7, -2.5, 0.4],
        };
        let k = KernelSet::new(&modes, &drive.boundaries, &[(0, 2)]).unwrap();
        let end = [0.0, drive.duration];
        let traj = trajectory_series(&drive, &modes, &end).unwrap();
        let phases = phase_series(&drive, &modes, &end).unwrap();
        assert!(traj[0].iter().all(|z| z.norm() == 0.0));
        assert!(phases[0].iter().all(|z| *z == 0.0));
        let alpha = k.displacements(&drive).unwrap();
        assert!((&traj[1] - &alpha).iter().all(|z| z.norm() < 1e-12));
        let phi = k.entangling_phases(&drive).unwrap();
        assert!((&phases[1] - &phi).iter().all(|z| z.abs() < 1e-12));
        assert!(trajectory_series(&drive, &modes, &[1.5]).is_err());
    }

    #[test]
    fn phases_are_global_phase_invariant_and_quadratic() {
        let modes = toy_modes(&[3.0, -5.5], &[&[0.1, 0.2], &[0.3, -0.1]]);
        let mut drive = DriveWaveform::zeros(1.0, 4, &[0, 1]);
        drive.ions[0].amplitudes = vec![0.5, 1.0, 0.2, 0.9];
        drive.ions[0].phases = vec![0.1, -2.0, 0.3, 1.0];
        drive.ions[1].amplitudes = vec![0.3, 0.1, 0.7, 0.9];
        drive.ions[1].phases = vec![0.4, 1.0, -0.3, 2.0];
        let k = KernelSet::new(&modes, &drive.boundaries, &[(0, 1)]).unwrap();
        let base = k.entangling_phases(&drive).unwrap()[(0, 1)];
        let shifted = k.entangling_phases(&drive.phase_shifted(0.77)).unwrap()[(0, 1)];
        assert!((base - shifted).abs() < 1e-12);
        let scaled = k.entangling_phases(&drive.scaled(1.7)).unwrap()[(0, 1)];
        assert!((scaled - 1.7 * 1.7 * base).abs() < 1e-12);
        let a0 = k.displacements(&drive).unwrap();
        let a1 = k.displacements(&drive.scaled(-0.0 + 2.5)).unwrap();
        assert!((a1 - a0 * Complex64::new(2.5, 0.0)).iter().all(|z| z.norm() < 1e-12));
    }
}
