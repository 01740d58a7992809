//! JSON experiment configuration. Field names carry their units
//! (`_mhz`, `_khz`, `_us`, `_nm`); everything is converted to SI angular
//! units on load.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chain::{build_mode_data, equilibrium_positions, mass_from_amu, ModeData, TrapChainConfig};
use crate::control::{GateTarget, Modulation, SchemeConfig, SlewBounds};
use crate::error::{Error, Result};
use crate::optimize::{OptimizationProblem, Weights};
use crate::solver::Backend;

const TWO_PI: f64 = 2.0 * PI;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub trap: TrapSection,
    pub laser: LaserSection,
    pub gates: Vec<GateSpec>,
    pub drive: DriveSection,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub thermal: ThermalSection,
    #[serde(default)]
    pub outputs: OutputSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<BenchmarkSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrapSection {
    pub n_ions: usize,
    #[serde(default = "default_mass")]
    pub mass_amu: f64,
    pub com_frequencies_mhz: [f64; 3],
    pub wavevector: WavevectorSpec,
}

fn default_mass() -> f64 {
    171.0
}

/// `k = 2 pi / wavelength * direction`. The direction is used as given, so
/// `[1, 1, 0]` puts the full `2 pi / wavelength` on both transverse axes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WavevectorSpec {
    pub wavelength_nm: f64,
    pub direction: [f64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetuningMode {
    AbsoluteMhz,
    OffsetFromXComKhz,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaserSection {
    pub detuning_mode: DetuningMode,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateSpec {
    pub ions: Vec<usize>,
    pub phases: PhaseSpec,
}

/// `"maximal"` or a map from `"j,k"` to the target phase in units of pi.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PhaseSpec {
    Named(String),
    Explicit(BTreeMap<String, f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveSection {
    pub scheme: Modulation,
    pub segments: usize,
    pub duration_us: f64,
    pub max_rabi_khz: f64,
    /// Groups of ions sharing one drive. Omitted: every addressed ion has its
    /// own drive.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shared_groups: Option<Vec<Vec<usize>>>,
    #[serde(default)]
    pub robust: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slew: Option<SlewSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlewSpec {
    pub domega_khz: f64,
    pub dphi_rad: f64,
    #[serde(default)]
    pub pin_start: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    /// Independent repetitions, each a multi-start of `instances`.
    #[serde(default = "one")]
    pub runs: usize,
    #[serde(default = "five")]
    pub instances: usize,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_backend")]
    pub backend: Backend,
    /// Infidelity above which `optimize` reports failure (exit code 3).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<WeightSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSpec {
    pub phase: f64,
    pub motion: f64,
    pub com: f64,
}

fn one() -> usize {
    1
}
fn five() -> usize {
    5
}
fn default_budget() -> usize {
    2000
}
fn default_tolerance() -> f64 {
    1e-16
}
fn default_backend() -> Backend {
    Backend::LevenbergMarquardt
}

impl Default for OptimizerSection {
    fn default() -> Self {
        Self {
            runs: 1,
            instances: 5,
            budget: default_budget(),
            tolerance: default_tolerance(),
            seed: 0,
            backend: default_backend(),
            threshold: None,
            weights: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalSection {
    /// Mean phonon number per axis `[x, y, z]`.
    #[serde(default)]
    pub nbar: [f64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Emit {
    Drives,
    Trajectories,
    Phases,
    Scans,
    Report,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_directory")]
    pub directory: String,
    #[serde(default = "default_emit")]
    pub emit: Vec<Emit>,
    /// Sample count for trajectory and phase series.
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_directory() -> String {
    "out".into()
}
fn default_emit() -> Vec<Emit> {
    vec![Emit::Drives, Emit::Trajectories, Emit::Phases, Emit::Scans, Emit::Report]
}
fn default_samples() -> usize {
    201
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: default_directory(),
            emit: default_emit(),
            samples: default_samples(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanKind {
    /// Common detuning error, axis in Hz (`eps / 2 pi`).
    Detuning,
    /// Relative gate-time error.
    Timing,
    /// Relative amplitude scale.
    Amplitude,
    /// Filter function, axis in Hz (`omega / 2 pi`).
    Filter,
    /// Fresh optimization per (detuning, duration) cell. The first axis is in
    /// the laser section's detuning units, the second in microseconds.
    Domain,
    /// Fresh optimization per maximum Rabi rate, axis in kHz.
    Power,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default)]
    pub start: f64,
    #[serde(default)]
    pub stop: f64,
    #[serde(default)]
    pub points: usize,
    #[serde(default)]
    pub log: bool,
}

impl AxisSpec {
    pub fn values(&self) -> Result<Vec<f64>> {
        let v = match &self.values {
            Some(v) => v.clone(),
            None => {
                if self.points < 2 {
                    return Err(Error::InvalidConfig("scan axis needs at least two points".into()));
                }
                if self.log && !(self.start > 0.0 && self.stop > 0.0) {
                    return Err(Error::InvalidConfig("logarithmic scan axis must be positive".into()));
                }
                let n = self.points - 1;
                (0..=n)
                    .map(|i| {
                        let f = i as f64 / n as f64;
                        if self.log {
                            (self.start.ln() + f * (self.stop.ln() - self.start.ln())).exp()
                        } else {
                            self.start + f * (self.stop - self.start)
                        }
                    })
                    .collect()
            }
        };
        let up = v.windows(2).all(|w| w[1] > w[0]);
        let down = v.windows(2).all(|w| w[1] < w[0]);
        if v.is_empty() || !(up || down) || v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig("scan axis must be finite and strictly monotone".into()));
        }
        Ok(v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSpec {
    pub kind: ScanKind,
    pub axis: AxisSpec,
    /// Gate durations in microseconds for domain scans.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub durations_us: Option<AxisSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSpec {
    pub lengths: Vec<usize>,
    #[serde(default = "ten")]
    pub repeats: usize,
}

fn ten() -> usize {
    10
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("{name} must be positive and finite, got {v}")))
    }
}

fn parse_pair(key: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = key.split([',', '-', ' ']).filter(|s| !s.is_empty()).collect();
    match parts.as_slice() {
        [a, b] => match (a.parse(), b.parse()) {
            (Ok(a), Ok(b)) => Ok((a, b)),
            _ => Err(Error::InvalidConfig(format!("bad pair key {key:?}, expected \"j,k\""))),
        },
        _ => Err(Error::InvalidConfig(format!("bad pair key {key:?}, expected \"j,k\""))),
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Checks everything that does not need the mode solve.
    pub fn validate(&self) -> Result<()> {
        let t = &self.trap;
        if t.n_ions == 0 {
            return Err(Error::InvalidConfig("n_ions must be at least 1".into()));
        }
        positive("mass_amu", t.mass_amu)?;
        for f in t.com_frequencies_mhz {
            positive("trap frequency", f)?;
        }
        positive("wavelength_nm", t.wavevector.wavelength_nm)?;
        if t.wavevector.direction.iter().any(|d| !d.is_finite()) {
            return Err(Error::InvalidConfig("wavevector direction must be finite".into()));
        }
        if t.wavevector.direction.iter().all(|d| *d == 0.0) {
            return Err(Error::NoCoupling);
        }
        if !self.laser.value.is_finite() {
            return Err(Error::InvalidConfig("laser detuning must be finite".into()));
        }
        let d = &self.drive;
        if d.segments == 0 {
            return Err(Error::InvalidConfig("drive needs at least one segment".into()));
        }
        positive("duration_us", d.duration_us)?;
        positive("max_rabi_khz", d.max_rabi_khz)?;
        if let Some(s) = &d.slew {
            positive("slew domega_khz", s.domega_khz)?;
            positive("slew dphi_rad", s.dphi_rad)?;
        }
        let o = &self.optimizer;
        if o.runs == 0 || o.instances == 0 || o.budget == 0 {
            return Err(Error::InvalidConfig("optimizer runs, instances and budget must be positive".into()));
        }
        positive("optimizer tolerance", o.tolerance)?;
        if let Some(th) = o.threshold {
            positive("optimizer threshold", th)?;
        }
        if self.thermal.nbar.iter().any(|n| !(*n >= 0.0 && n.is_finite())) {
            return Err(Error::InvalidConfig("thermal nbar must be non-negative".into()));
        }
        if self.outputs.samples < 2 {
            return Err(Error::InvalidConfig("outputs.samples must be at least 2".into()));
        }
        // Gate and grouping checks share the target builder. A gate-free
        // config is still enough to list modes.
        if !self.gates.is_empty() {
            let target = self.target()?;
            self.scheme_for(&target)?;
        }
        Ok(())
    }

    pub fn trap_config(&self) -> TrapChainConfig {
        let t = &self.trap;
        let mhz = TWO_PI * 1e6;
        let k = TWO_PI / (t.wavevector.wavelength_nm * 1e-9);
        let mut cfg = TrapChainConfig::new(
            t.n_ions,
            mass_from_amu(t.mass_amu),
            t.com_frequencies_mhz.map(|f| f * mhz),
            t.wavevector.direction.map(|d| d * k),
        );
        cfg.mean_phonons = self.thermal.nbar;
        cfg
    }

    /// Laser beat-note detuning in rad/s. The transverse x center-of-mass
    /// mode sits exactly at the x trap frequency.
    pub fn laser_detuning(&self) -> f64 {
        match self.laser.detuning_mode {
            DetuningMode::AbsoluteMhz => TWO_PI * 1e6 * self.laser.value,
            DetuningMode::OffsetFromXComKhz => {
                TWO_PI * 1e6 * self.trap.com_frequencies_mhz[0] + TWO_PI * 1e3 * self.laser.value
            }
        }
    }

    pub fn modes(&self) -> Result<ModeData> {
        let trap = self.trap_config();
        let positions = equilibrium_positions(&trap)?;
        build_mode_data(&trap, &positions, self.laser_detuning())
    }

    pub fn target(&self) -> Result<GateTarget> {
        let n = self.trap.n_ions;
        let mut target = GateTarget::new(n);
        for g in &self.gates {
            target = match &g.phases {
                PhaseSpec::Named(name) if name == "maximal" => target.with_maximal_gate(&g.ions)?,
                PhaseSpec::Named(name) => {
                    return Err(Error::InvalidConfig(format!("unknown phase preset {name:?}, expected \"maximal\"")))
                }
                PhaseSpec::Explicit(map) => {
                    let pairs = map
                        .iter()
                        .map(|(key, v)| Ok((parse_pair(key)?, v * PI)))
                        .collect::<Result<Vec<_>>>()?;
                    target.with_gate(&g.ions, &pairs)?
                }
            };
        }
        if target.gate_groups.is_empty() {
            return Err(Error::InvalidConfig("configuration has no gates".into()));
        }
        Ok(target)
    }

    pub fn scheme_for(&self, target: &GateTarget) -> Result<SchemeConfig> {
        let d = &self.drive;
        let max_rabi = TWO_PI * 1e3 * d.max_rabi_khz;
        let duration = d.duration_us * 1e-6;
        let mut scheme = SchemeConfig::individual(d.scheme, d.segments, duration, max_rabi, target);
        if let Some(groups) = &d.shared_groups {
            let mut seen: Vec<usize> = groups.iter().flatten().copied().collect();
            seen.sort_unstable();
            if seen != target.addressed_ions() {
                return Err(Error::InvalidConfig(format!(
                    "shared_groups must partition the addressed ions {:?}",
                    target.addressed_ions()
                )));
            }
            if groups.iter().any(|g| g.is_empty()) {
                return Err(Error::InvalidConfig("shared_groups contains an empty group".into()));
            }
            scheme.shared_groups = groups.clone();
        }
        scheme.robust = d.robust;
        if let Some(s) = &d.slew {
            scheme.slew = Some(SlewBounds {
                max_amplitude_step: TWO_PI * 1e3 * s.domega_khz,
                max_phase_step: s.dphi_rad,
                pin_start: s.pin_start,
            });
        }
        Ok(scheme)
    }

    /// Full optimization problem with the configured seed (`seed_override`
    /// wins when given).
    pub fn problem(&self, modes: &ModeData, seed_override: Option<u64>) -> Result<OptimizationProblem> {
        let target = self.target()?;
        let scheme = self.scheme_for(&target)?;
        let o = &self.optimizer;
        let mut p = OptimizationProblem::from_modes(modes, target, scheme)?
            .with_seed(seed_override.unwrap_or(o.seed))
            .with_instances(o.instances)
            .with_budget(o.budget)
            .with_tolerance(o.tolerance)
            .with_backend(o.backend);
        if let Some(w) = &o.weights {
            p = p.with_weights(Weights {
                phase: w.phase,
                motion: w.motion,
                com: w.com,
            });
        }
        Ok(p)
    }

    pub fn emits(&self, what: Emit) -> bool {
        self.outputs.emit.contains(&what)
    }
}

/// Parses `text` as JSON and re-serializes it with sorted keys and no
/// insignificant whitespace.
pub fn canonical_json(text: &str) -> Result<String> {
    let v: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    Ok(serde_json::to_string(&v)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const PAIR: &str = r#"{
        "trap": {"n_ions": 2, "com_frequencies_mhz": [1.6, 1.5, 0.3],
                 "wavevector": {"wavelength_nm": 355, "direction": [1, 1, 0]}},
        "laser": {"detuning_mode": "offset_from_x_com_khz", "value": 4.7},
        "gates": [{"ions": [0, 1], "phases": "maximal"}],
        "drive": {"scheme": "ampm", "segments": 16, "duration_us": 200, "max_rabi_khz": 100}
    }"#;

    #[test]
    fn units_convert_to_angular_si() {
        let cfg = ExperimentConfig::from_json(PAIR).unwrap();
        let d = cfg.laser_detuning();
        assert!((d / TWO_PI - 1.6047e6).abs() < 1e-6);
        let scheme = cfg.scheme_for(&cfg.target().unwrap()).unwrap();
        assert!((scheme.duration - 2e-4).abs() < 1e-18);
        assert!((scheme.max_rabi / TWO_PI - 1e5).abs() < 1e-9);
        assert_eq!(cfg.optimizer.instances, 5);
    }

    #[test]
    fn explicit_phases_are_in_units_of_pi() {
        let text = PAIR.replace("\"maximal\"", "{\"0,1\": 0.1}");
        let cfg = ExperimentConfig::from_json(&text).unwrap();
        assert!((cfg.target().unwrap().phase(1, 0) - 0.1 * PI).abs() < 1e-15);
    }

    #[test]
    fn bad_ion_and_unknown_field_are_rejected() {
        let text = PAIR.replace("[0, 1], \"phases\"", "[0, 2], \"phases\"");
        assert!(matches!(ExperimentConfig::from_json(&text), Err(Error::InvalidConfig(_))));
        let text = PAIR.replace("\"max_rabi_khz\"", "\"max_rabi\": 1, \"max_rabi_khz\"");
        assert!(ExperimentConfig::from_json(&text).is_err());
    }

    #[test]
    fn canonical_form_ignores_layout_and_key_order() {
        let a = canonical_json(r#"{"b": 1, "a": [1, 2]}"#).unwrap();
        let b = canonical_json("{\n  \"a\": [1,2],\n  \"b\": 1\n}").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn axis_spec_linear_and_log() {
        let lin = AxisSpec { values: None, start: 0.0, stop: 1.0, points: 3, log: false };
        assert_eq!(lin.values().unwrap(), vec![0.0, 0.5, 1.0]);
        let log = AxisSpec { values: None, start: 1.0, stop: 100.0, points: 3, log: true };
        let v = log.values().unwrap();
        assert!((v[1] - 10.0).abs() < 1e-12);
        let bad = AxisSpec { values: Some(vec![1.0, 1.0]), start: 0.0, stop: 0.0, points: 0, log: false };
        assert!(bad.values().is_err());
    }
}
