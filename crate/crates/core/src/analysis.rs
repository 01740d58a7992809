//! Operational fidelity and noise-susceptibility analysis of a drive.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::ModeData;
use crate::control::{DriveWaveform, GateTarget};
use crate::error::{Error, Result};
use crate::kernels::{segment_integral, trajectory_series, KernelSet};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FidelityReport {
    pub infidelity: f64,
    /// `eps_jk = psi_jk - (phi_jk + phi_kj)` over the addressed ions.
    pub phase_errors: DMatrix<f64>,
    /// `prod cos(eps_jk)`.
    pub phase_factor: f64,
    /// `sum_{j,p} |eta_j^p|^2 |alpha_j^p|^2 (nbar_p + 1/2)`.
    pub motional_term: f64,
    pub mode_contributions: Vec<f64>,
    pub ions: Vec<usize>,
}

/// Ions that participate in the fidelity: every driven or targeted ion.
fn active_ions(drive: &DriveWaveform, target: &GateTarget) -> Vec<usize> {
    let mut ions = drive.addressed_ions();
    ions.extend(target.addressed_ions());
    ions.sort_unstable();
    ions.dedup();
    ions
}

/// Assembles the fidelity from end-of-gate phases and displacements.
pub fn fidelity_from_parts(
    phases: &DMatrix<f64>,
    alpha: &DMatrix<Complex64>,
    ions: &[usize],
    target: &GateTarget,
    modes: &ModeData,
    mean_phonons: &[f64],
) -> FidelityReport {
    let n = modes.n_ions;
    let mut phase_errors = DMatrix::zeros(n, n);
    let mut phase_factor = 1.0;
    // log|F| accumulated with ln_1p so that tiny infidelities survive rounding.
    let mut log_amp = 0.0;
    let mut accurate = true;
    for (a, &j) in ions.iter().enumerate() {
        for &k in &ions[a + 1..] {
            let eps = target.phase(j, k) - phases[(j, k)];
            phase_errors[(j, k)] = eps;
            phase_errors[(k, j)] = eps;
            phase_factor *= eps.cos();
            accurate &= eps.cos() > 0.0;
            log_amp += (-2.0 * (0.5 * eps).sin().powi(2)).ln_1p();
        }
    }
    let mut mode_contributions = vec![0.0; modes.n_modes()];
    for (p, c) in mode_contributions.iter_mut().enumerate() {
        let w = mean_phonons[p] + 0.5;
        for j in 0..n {
            let eta = modes.lamb_dicke[(j, p)];
            *c += eta * eta * alpha[(j, p)].norm_sqr() * w;
        }
    }
    let motional_term: f64 = mode_contributions.iter().sum();
    let infidelity = if accurate && motional_term < 1.0 {
        -(2.0 * (log_amp + (-motional_term).ln_1p())).exp_m1()
    } else {
        1.0 - (phase_factor * (1.0 - motional_term)).powi(2)
    };
    FidelityReport {
        infidelity: infidelity.clamp(0.0, 1.0),
        phase_errors,
        phase_factor,
        motional_term,
        mode_contributions,
        ions: ions.to_vec(),
    }
}

pub fn operational_infidelity(
    drive: &DriveWaveform,
    kernels: &KernelSet,
    target: &GateTarget,
    mean_phonons: &[f64],
) -> Result<FidelityReport> {
    if mean_phonons.len() != kernels.n_modes() || mean_phonons.iter().any(|n| !(*n >= 0.0)) {
        return Err(Error::InvalidConfig("need one non-negative mean phonon number per mode".into()));
    }
    let phases = kernels.entangling_phases(drive)?;
    let alpha = kernels.displacements(drive)?;
    let ions = active_ions(drive, target);
    Ok(fidelity_from_parts(&phases, &alpha, &ions, target, kernels.modes(), mean_phonons))
}

/// Infidelity evaluated on freshly built kernels for `modes` and `boundaries`.
fn infidelity_with(
    drive: &DriveWaveform,
    modes: &ModeData,
    target: &GateTarget,
    mean_phonons: &[f64],
) -> Result<FidelityReport> {
    let ions = active_ions(drive, target);
    let pairs = crate::control::pairs_of(&ions);
    let k = KernelSet::new(modes, &drive.boundaries, &pairs)?;
    operational_infidelity(drive, &k, target, mean_phonons)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanSeries {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    /// Column name of the axis, unit included.
    pub axis_name: String,
    pub axis: Vec<f64>,
    pub series: Vec<ScanSeries>,
    pub metadata: BTreeMap<String, String>,
}

impl ScanResult {
    pub fn new(axis_name: &str, axis: Vec<f64>) -> Result<Self> {
        if axis.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig(format!("non-finite value on scan axis {axis_name}")));
        }
        let up = axis.windows(2).all(|w| w[1] > w[0]);
        let down = axis.windows(2).all(|w| w[1] < w[0]);
        if !(up || down) {
            return Err(Error::InvalidConfig(format!("scan axis {axis_name} must be strictly monotone")));
        }
        Ok(Self {
            axis_name: axis_name.to_string(),
            axis,
            series: Vec::new(),
            metadata: BTreeMap::new(),
        })
    }

    pub fn push_series(&mut self, name: &str, values: Vec<f64>) {
        assert_eq!(values.len(), self.axis.len());
        self.series.push(ScanSeries {
            name: name.to_string(),
            values,
        });
    }

    pub fn series(&self, name: &str) -> Option<&[f64]> {
        self.series.iter().find(|s| s.name == name).map(|s| s.values.as_slice())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![self.axis_name.clone()];
        header.extend(self.series.iter().map(|s| s.name.clone()));
        w.write_record(&header).map_err(csv_err)?;
        for (i, x) in self.axis.iter().enumerate() {
            let mut row = vec![format!("{x:e}")];
            row.extend(self.series.iter().map(|s| format!("{:e}", s.values[i])));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::new(std::io::ErrorKind::Other, e))
}

fn push_reports(scan: &mut ScanResult, reports: &[FidelityReport]) {
    scan.push_series("infidelity", reports.iter().map(|r| r.infidelity).collect());
    scan.push_series("motional_term", reports.iter().map(|r| r.motional_term).collect());
    scan.push_series(
        "phase_infidelity",
        reports.iter().map(|r| 1.0 - r.phase_factor.powi(2)).collect(),
    );
}

/// Quasi-static scan with a common offset `delta_p -> delta_p + eps` on every mode.
pub fn quasi_static_detuning_scan(
    drive: &DriveWaveform,
    kernels: &KernelSet,
    target: &GateTarget,
    offsets: &[f64],
) -> Result<ScanResult> {
    let mut scan = ScanResult::new("detuning_offset_rad_s", offsets.to_vec())?;
    let nbar = &kernels.modes().mean_phonons;
    let reports = offsets
        .par_iter()
        .map(|&eps| {
            if eps == 0.0 {
                operational_infidelity(drive, kernels, target, nbar)
            } else {
                infidelity_with(drive, &kernels.modes().with_common_offset(eps), target, nbar)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    push_reports(&mut scan, &reports);
    scan.metadata.insert("kind".into(), "detuning".into());
    Ok(scan)
}

/// Infidelity with an independent offset `eps_p` on each mode.
pub fn mode_offset_infidelity(
    drive: &DriveWaveform,
    kernels: &KernelSet,
    target: &GateTarget,
    offsets: &[f64],
) -> Result<FidelityReport> {
    if offsets.len() != kernels.n_modes() {
        return Err(Error::InvalidConfig("need one detuning offset per mode".into()));
    }
    let modes = kernels.modes().with_detuning_offsets(offsets);
    infidelity_with(drive, &modes, target, &kernels.modes().mean_phonons)
}

/// Infidelity when the whole pulse is stretched in time by `1 + eps_t`.
pub fn timing_error_infidelity(
    drive: &DriveWaveform,
    kernels: &KernelSet,
    target: &GateTarget,
    eps_t: f64,
) -> Result<FidelityReport> {
    if !(1.0 + eps_t > 0.0) {
        return Err(Error::InvalidConfig(format!("timing error must satisfy 1 + eps_t > 0, got {eps_t}")));
    }
    if eps_t == 0.0 {
        return operational_infidelity(drive, kernels, target, &kernels.modes().mean_phonons);
    }
    let stretched = drive.stretched(1.0 + eps_t);
    infidelity_with(&stretched, kernels.modes(), target, &kernels.modes().mean_phonons)
}

/// The same error expressed on the original grid: the drive scaled by
/// `1 + eps_t` and each mode shifted by `eps_t * delta_p`.
pub fn timing_error_as_dephasing(
    drive: &DriveWaveform,
    kernels: &KernelSet,
    target: &GateTarget,
    eps_t: f64,
) -> Result<FidelityReport> {
    let offsets: Vec<f64> = kernels.modes().relative_detunings.iter().map(|d| eps_t * d).collect();
    mode_offset_infidelity(&drive.scaled(1.0 + eps_t), kernels, target, &offsets)
}

pub fn timing_error_scan(
    drive: &DriveWaveform,
    kernels: &KernelSet,
    target: &GateTarget,
    errors: &[f64],
) -> Result<ScanResult> {
    let mut scan = ScanResult::new("timing_error", errors.to_vec())?;
    let reports = errors
        .par_iter()
        .map(|&e| timing_error_infidelity(drive, kernels, target, e))
        .collect::<Result<Vec<_>>>()?;
    push_reports(&mut scan, &reports);
    scan.metadata.insert("kind".into(), "timing".into());
    Ok(scan)
}

/// Quasi-static amplitude errors `Omega -> s Omega`.
pub fn amplitude_error_scan(
    drive: &DriveWaveform,
    kernels: &KernelSet,
    target: &GateTarget,
    scales: &[f64],
) -> Result<ScanResult> {
    if let Some(s) = scales.iter().find(|s| !(**s > 0.0)) {
        return Err(Error::InvalidConfig(format!("amplitude scale must be positive, got {s}")));
    }
    let mut scan = ScanResult::new("amplitude_scale", scales.to_vec())?;
    let nbar = &kernels.modes().mean_phonons;
    // Phases and displacements are evaluated once and rescaled.
    let phases = kernels.entangling_phases(drive)?;
    let alpha = kernels.displacements(drive)?;
    let ions = active_ions(drive, target);
    let reports: Vec<FidelityReport> = scales
        .iter()
        .map(|&s| {
            let ph = phases.map(|v| s * s * v);
            let al = alpha.map(|v| v * s);
            fidelity_from_parts(&ph, &al, &ions, target, kernels.modes(), nbar)
        })
        .collect();
    push_reports(&mut scan, &reports);
    scan.metadata.insert("kind".into(), "amplitude".into());
    Ok(scan)
}

/// `int_0^tau gamma_j(t)/2 e^{i delta t} dt` for each driven ion.
fn closure_integrals(drive: &DriveWaveform, delta: f64) -> Vec<(usize, Complex64)> {
    let g = &drive.boundaries;
    drive
        .ions
        .iter()
        .map(|d| {
            let v: Complex64 = d
                .values()
                .iter()
                .enumerate()
                .map(|(k, u)| u * segment_integral(delta, g[k], g[k + 1] - g[k]))
                .sum();
            (d.ion, 0.5 * v)
        })
        .collect()
}

/// `int_0^tau t gamma_j(t)/2 e^{i delta t} dt` for each driven ion.
fn tweighted_closure(drive: &DriveWaveform, delta: f64) -> Vec<(usize, Complex64)> {
    let g = &drive.boundaries;
    drive
        .ions
        .iter()
        .map(|d| {
            let v: Complex64 = d
                .values()
                .iter()
                .enumerate()
                .map(|(k, u)| {
                    let (a, b) = (g[k], g[k + 1]);
                    let e = segment_integral(delta, a, b - a);
                    u * (b * e - crate::kernels::segment_ramp(delta, a, b - a))
                })
                .sum();
            (d.ion, 0.5 * v)
        })
        .collect()
}

/// First-order displacement response to detuning noise at frequency `omega`,
/// averaged over the noise phase. At `omega = 0` this is the quasi-static limit
/// `1/2 sum |eta|^2 (nbar + 1/2) |int t gamma/2 e^{i delta t} dt|^2`.
pub fn filter_function(
    drive: &DriveWaveform,
    kernels: &KernelSet,
    mean_phonons: &[f64],
    omegas: &[f64],
) -> Result<ScanResult> {
    drive.check()?;
    if let Some(w) = omegas.iter().find(|w| !(**w >= 0.0)) {
        return Err(Error::InvalidConfig(format!("filter frequencies must be non-negative, got {w}")));
    }
    let modes = kernels.modes();
    if mean_phonons.len() != modes.n_modes() {
        return Err(Error::InvalidConfig("need one mean phonon number per mode".into()));
    }
    let mut scan = ScanResult::new("frequency_rad_s", omegas.to_vec())?;
    let values: Vec<f64> = omegas
        .par_iter()
        .map(|&w| {
            let mut total = 0.0;
            for (p, &delta) in modes.relative_detunings.iter().enumerate() {
                let weight = mean_phonons[p] + 0.5;
                if w == 0.0 {
                    for (ion, t) in tweighted_closure(drive, delta) {
                        let eta = modes.lamb_dicke[(ion, p)];
                        total += 0.5 * eta * eta * weight * t.norm_sqr();
                    }
                } else {
                    let a0 = closure_integrals(drive, delta);
                    let ap = closure_integrals(drive, delta + w);
                    let am = closure_integrals(drive, delta - w);
                    for i in 0..a0.len() {
                        let eta = modes.lamb_dicke[(a0[i].0, p)];
                        let resp = (ap[i].1 - a0[i].1).norm_sqr() + (am[i].1 - a0[i].1).norm_sqr();
                        total += eta * eta * weight * resp / (4.0 * w * w);
                    }
                }
            }
            total
        })
        .collect();
    scan.push_series("filter_s2", values);
    scan.metadata.insert("kind".into(), "filter".into());
    Ok(scan)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AsymmetricReport {
    pub detuning_error: f64,
    /// `|int beta_j^p dt| / eta_j^p`, per ion (rows) and mode, in seconds times rad/s.
    pub closure: DMatrix<f64>,
    /// `|int t gamma_j/2 e^{i delta_p t} dt|` in seconds.
    pub tweighted: DMatrix<f64>,
    /// `eps/2 * |t-weighted integral|`, the first-order amplitude of the error term.
    pub first_order: DMatrix<f64>,
    pub max_closure: f64,
    pub max_tweighted: f64,
    /// `max_tweighted / (tau^2 Omega_max)`.
    pub normalized_tweighted: f64,
}

/// First-order terms of the asymmetric laser-detuning error model.
pub fn asymmetric_detuning_sensitivity(
    drive: &DriveWaveform,
    kernels: &KernelSet,
    detuning_error: f64,
) -> Result<AsymmetricReport> {
    let closure = kernels.displacements(drive)?.map(|z| z.norm());
    let tweighted = kernels.tweighted_integrals(drive)?.map(|z| z.norm());
    let first_order = tweighted.map(|v| 0.5 * detuning_error.abs() * v);
    let max_closure = closure.iter().fold(0.0_f64, |m, v| m.max(*v));
    let max_tweighted = tweighted.iter().fold(0.0_f64, |m, v| m.max(*v));
    let tau = kernels.duration();
    let scale = tau * tau * drive.max_amplitude();
    Ok(AsymmetricReport {
        detuning_error,
        closure,
        tweighted,
        first_order,
        max_closure,
        max_tweighted,
        normalized_tweighted: if scale > 0.0 { max_tweighted / scale } else { 0.0 },
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LambDickeReport {
    /// Metric per sample (rows) and ion.
    pub metric: DMatrix<f64>,
    pub max_metric: f64,
    pub argmax_ion: usize,
    pub argmax_time: f64,
    pub threshold: f64,
    pub warning: bool,
}

pub const LAMB_DICKE_THRESHOLD: f64 = 0.3;

/// `sqrt(sum_p |eta|^2 (2 nbar + 1) + sum_p 4 |eta|^2 |eta alpha(t)|^2)` per ion and sample.
pub fn lamb_dicke_diagnostic(
    drive: &DriveWaveform,
    modes: &ModeData,
    mean_phonons: &[f64],
    sample_times: &[f64],
    threshold: f64,
) -> Result<LambDickeReport> {
    if mean_phonons.len() != modes.n_modes() {
        return Err(Error::InvalidConfig("need one mean phonon number per mode".into()));
    }
    let series = trajectory_series(drive, modes, sample_times)?;
    let n = modes.n_ions;
    let mut metric = DMatrix::zeros(sample_times.len(), n);
    let (mut best, mut arg_ion, mut arg_t) = (0.0, 0, 0.0);
    for (i, alpha) in series.iter().enumerate() {
        for j in 0..n {
            let mut v = 0.0;
            for p in 0..modes.n_modes() {
                let eta2 = modes.lamb_dicke[(j, p)].powi(2);
                v += eta2 * (2.0 * mean_phonons[p] + 1.0) + 4.0 * eta2 * eta2 * alpha[(j, p)].norm_sqr();
            }
            let m = v.sqrt();
            metric[(i, j)] = m;
            if m > best {
                best = m;
                arg_ion = j;
                arg_t = sample_times[i];
            }
        }
    }
    Ok(LambDickeReport {
        metric,
        max_metric: best,
        argmax_ion: arg_ion,
        argmax_time: arg_t,
        threshold,
        warning: best > threshold,
    })
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::Axis;
    use std::f64::consts::PI;

    fn toy_modes() -> ModeData {
        ModeData {
            n_ions: 2,
            frequencies: vec![1.0e7],
            eigenvectors: DMatrix::from_element(2, 1, 0.5_f64.sqrt()),
            lamb_dicke: DMatrix::from_element(2, 1, 0.05),
            axis_labels: vec![Axis::X],
            mean_phonons: vec![0.0],
            laser_detuning: 0.0,
            relative_detunings: vec![2.0 * PI * 10e3],
        }
    }

    #[test]
    fn phase_error_only_halves_fidelity() {
        let modes = toy_modes();
        let target = GateTarget::new(2).with_maximal_gate(&[0, 1]).unwrap();
        let r = fidelity_from_parts(&DMatrix::zeros(2, 2), &DMatrix::zeros(2, 1), &[0, 1], &target, &modes, &[0.0]);
        // |cos(pi/4)|^2 with each pair counted once.
        assert!((r.infidelity - 0.5).abs() < 1e-15);
        assert!((r.phase_errors[(0, 1)] - PI / 4.0).abs() < 1e-15);
    }

    #[test]
    fn zero_drive_zero_target_is_perfect() {
        let modes = toy_modes();
        let drive = DriveWaveform::zeros(1e-4, 4, &[0, 1]);
        let k = KernelSet::new(&modes, &drive.boundaries, &[(0, 1)]).unwrap();
        let r = operational_infidelity(&drive, &k, &GateTarget::new(2), &[0.0]).unwrap();
        assert_eq!(r.infidelity, 0.0);
        let f = filter_function(&drive, &k, &[0.0], &[0.0, 10.0, 1e4]).unwrap();
        assert!(f.series("filter_s2").unwrap().iter().all(|v| *v == 0.0));
        let a = asymmetric_detuning_sensitivity(&drive, &k, 10.0).unwrap();
        assert_eq!(a.max_closure, 0.0);
        assert_eq!(a.max_tweighted, 0.0);
    }

    #[test]
    fn scan_axis_must_be_monotone() {
        assert!(ScanResult::new("x", vec![0.0, 1.0, 1.0]).is_err());
        assert!(ScanResult::new("x", vec![2.0, 1.0, 0.0]).is_ok());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let mut s = ScanResult::new("scale", vec![0.5, 1.0]).unwrap();
        s.push_series("infidelity", vec![0.1, 0.0]);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "scale,infidelity");
        assert_eq!(lines.len(), 3);
    }

    #[test]
    fn vacuum_lamb_dicke_metric() {
        let modes = toy_modes();
        let drive = DriveWaveform::zeros(1e-4, 4, &[0, 1]);
        let r = lamb_dicke_diagnostic(&drive, &modes, &[0.0], &[0.0, 5e-5, 1e-4], LAMB_DICKE_THRESHOLD).unwrap();
        assert!((r.max_metric - 0.05).abs() < 1e-15);
        assert!(!r.warning);
    }

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powi(4)).collect();
        assert!((log_log_slope(&x, &y) - 4.0).abs() < 1e-12);
    }
}
