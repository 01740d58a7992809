//! Piecewise-constant drives, control schemes and their parametrization.
//!
//! Every addressed ion (or group of ions sharing a drive) owns one block of
//! free real variables. Amplitudes enter through a logistic squash onto
//! `(0, max_rabi)`, or `(-max_rabi, max_rabi)` for amplitude-only drives where
//! a negative value is emitted as phase `pi`; slew-bounded amplitudes are built from `tanh`-bounded steps
//! in the pre-squash coordinate and slew-bounded phases from `tanh`-bounded
//! increments. Robust schemes emit the first half of the segments and mirror
//! it so that amplitudes form a palindrome and phase increments mirror about
//! the gate midpoint.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modulation {
    /// Real drive of either sign: the phase is fixed and only flips by `pi`
    /// where the signed amplitude changes sign.
    Am,
    /// Phase only, amplitude fixed at `max_rabi`.
    Pm,
    /// Amplitude and phase.
    Ampm,
}

impl Modulation {
    pub fn modulates_amplitude(self) -> bool {
        matches!(self, Modulation::Am | Modulation::Ampm)
    }

    pub fn modulates_phase(self) -> bool {
        matches!(self, Modulation::Pm | Modulation::Ampm)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlewBounds {
    /// Largest allowed `|Omega_{k+1} - Omega_k|` in rad/s.
    pub max_amplitude_step: f64,
    /// Largest allowed wrapped `|phi_{k+1} - phi_k|` in rad.
    pub max_phase_step: f64,
    /// Also bound the first amplitude relative to zero.
    #[serde(default)]
    pub pin_start: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub modulation: Modulation,
    pub segments: usize,
    /// Gate duration in seconds.
    pub duration: f64,
    /// Partition of the addressed ions; each group shares one drive.
    pub shared_groups: Vec<Vec<usize>>,
    pub robust: bool,
    /// `Omega_max` in rad/s.
    pub max_rabi: f64,
    pub slew: Option<SlewBounds>,
}

impl SchemeConfig {
    /// One individual drive per addressed ion of `target`.
    pub fn individual(modulation: Modulation, segments: usize, duration: f64, max_rabi: f64, target: &GateTarget) -> Self {
        Self {
            modulation,
            segments,
            duration,
            shared_groups: target.addressed_ions().into_iter().map(|i| vec![i]).collect(),
            robust: false,
            max_rabi,
            slew: None,
        }
    }

    /// A single drive shared by every addressed ion of `target`.
    pub fn shared(modulation: Modulation, segments: usize, duration: f64, max_rabi: f64, target: &GateTarget) -> Self {
        Self {
            shared_groups: vec![target.addressed_ions()],
            ..Self::individual(modulation, segments, duration, max_rabi, target)
        }
    }

    pub fn with_robust(mut self, robust: bool) -> Self {
        self.robust = robust;
        self
    }

    pub fn with_slew(mut self, slew: SlewBounds) -> Self {
        self.slew = Some(slew);
        self
    }

    pub fn addressed_ions(&self) -> Vec<usize> {
        let mut ions: Vec<usize> = self.shared_groups.iter().flatten().copied().collect();
        ions.sort_unstable();
        ions
    }
}

/// Symmetric matrix of target pairwise entangling phases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateTarget {
    pub n_ions: usize,
    pub psi: DMatrix<f64>,
    pub gate_groups: Vec<Vec<usize>>,
}

impl GateTarget {
    pub fn new(n_ions: usize) -> Self {
        Self {
            n_ions,
            psi: DMatrix::zeros(n_ions, n_ions),
            gate_groups: Vec::new(),
        }
    }

    /// Adds a gate on `ions` with target phases given per pair.
    pub fn with_gate(mut self, ions: &[usize], pair_phases: &[((usize, usize), f64)]) -> Result<Self> {
        let group: BTreeSet<usize> = ions.iter().copied().collect();
        if group.len() != ions.len() || ions.len() < 2 {
            return Err(Error::InvalidConfig(format!("gate needs at least two distinct ions, got {ions:?}")));
        }
        if let Some(&bad) = group.iter().find(|&&i| i >= self.n_ions) {
            return Err(Error::InvalidConfig(format!("ion index {bad} out of range for {} ions", self.n_ions)));
        }
        let existing: BTreeSet<(usize, usize)> = self.pair_set();
        for &((a, b), value) in pair_phases {
            let (j, k) = (a.min(b), a.max(b));
            if j == k || !group.contains(&j) || !group.contains(&k) {
                return Err(Error::InvalidConfig(format!("pair ({a}, {b}) is not a pair of gate ions {ions:?}")));
            }
            if !value.is_finite() {
                return Err(Error::InvalidConfig(format!("non-finite target phase for pair ({a}, {b})")));
            }
            if existing.contains(&(j, k)) && self.psi[(j, k)] != value {
                return Err(Error::InvalidConfig(format!("conflicting targets for pair ({j}, {k})")));
            }
        }
        // Pairs of this gate left unspecified default to zero, which conflicts
        // with a nonzero target set by an earlier overlapping gate.
        for (idx, &j) in group.iter().enumerate() {
            for &k in group.iter().skip(idx + 1) {
                let specified = pair_phases.iter().any(|&((a, b), _)| (a.min(b), a.max(b)) == (j, k));
                if !specified && existing.contains(&(j, k)) && self.psi[(j, k)] != 0.0 {
                    return Err(Error::InvalidConfig(format!("conflicting targets for pair ({j}, {k})")));
                }
            }
        }
        for &((a, b), value) in pair_phases {
            self.psi[(a, b)] = value;
            self.psi[(b, a)] = value;
        }
        self.gate_groups.push(group.into_iter().collect());
        Ok(self)
    }

    /// Maximally entangling gate: `pi/4` on every pair of `ions`.
    pub fn with_maximal_gate(self, ions: &[usize]) -> Result<Self> {
        let mut pairs = Vec::new();
        for (idx, &j) in ions.iter().enumerate() {
            for &k in &ions[idx + 1..] {
                pairs.push(((j, k), PI / 4.0));
            }
        }
        self.with_gate(ions, &pairs)
    }

    fn pair_set(&self) -> BTreeSet<(usize, usize)> {
        let mut out = BTreeSet::new();
        for g in &self.gate_groups {
            for (idx, &j) in g.iter().enumerate() {
                for &k in &g[idx + 1..] {
                    out.insert((j.min(k), j.max(k)));
                }
            }
        }
        out
    }

    pub fn addressed_ions(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.gate_groups.iter().flatten().copied().collect();
        set.into_iter().collect()
    }

    /// All pairs `(j, k)` with `j < k` among the addressed ions.
    pub fn addressed_pairs(&self) -> Vec<(usize, usize)> {
        pairs_of(&self.addressed_ions())
    }

    pub fn phase(&self, j: usize, k: usize) -> f64 {
        self.psi[(j, k)]
    }
}

pub fn pairs_of(ions: &[usize]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (idx, &j) in ions.iter().enumerate() {
        for &k in &ions[idx + 1..] {
            out.push((j.min(k), j.max(k)));
        }
    }
    out
}

/// Drive applied to a single ion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IonDrive {
    pub ion: usize,
    /// `Omega_{j,k}` in rad/s.
    #[serde(rename = "omega_rad_s")]
    pub amplitudes: Vec<f64>,
    /// `phi_{j,k}` in rad (unwrapped).
    #[serde(rename = "phi_rad")]
    pub phases: Vec<f64>,
}

impl IonDrive {
    pub fn values(&self) -> Vec<Complex64> {
        self.amplitudes
            .iter()
            .zip(&self.phases)
            .map(|(&a, &p)| Complex64::from_polar(a, p))
            .collect()
    }
}

/// Per-ion piecewise-constant complex drive on a shared time grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveWaveform {
    pub duration: f64,
    /// `t_1 = 0 < ... < t_{S+1} = duration`.
    pub boundaries: Vec<f64>,
    pub ions: Vec<IonDrive>,
    #[serde(default)]
    pub robust_symmetric: bool,
}

pub fn uniform_grid(duration: f64, segments: usize) -> Vec<f64> {
    let mut grid: Vec<f64> = (0..=segments).map(|k| duration * k as f64 / segments as f64).collect();
    grid[segments] = duration;
    grid
}

impl DriveWaveform {
    pub fn zeros(duration: f64, segments: usize, ions: &[usize]) -> Self {
        Self {
            duration,
            boundaries: uniform_grid(duration, segments),
            ions: ions
                .iter()
                .map(|&ion| IonDrive {
                    ion,
                    amplitudes: vec![0.0; segments],
                    phases: vec![0.0; segments],
                })
                .collect(),
            robust_symmetric: false,
        }
    }

    pub fn segments(&self) -> usize {
        self.boundaries.len().saturating_sub(1)
    }

    pub fn drive_for(&self, ion: usize) -> Option<&IonDrive> {
        self.ions.iter().find(|d| d.ion == ion)
    }

    pub fn addressed_ions(&self) -> Vec<usize> {
        self.ions.iter().map(|d| d.ion).collect()
    }

    /// Checks the data-model invariants (grid ordering, lengths, `Omega >= 0`).
    pub fn check(&self) -> Result<()> {
        let s = self.segments();
        if s == 0 {
            return Err(Error::GridMismatch("drive has no segments".into()));
        }
        if self.boundaries[0] != 0.0 || (self.boundaries[s] - self.duration).abs() > 1e-12 * self.duration {
            return Err(Error::GridMismatch("grid must span [0, duration]".into()));
        }
        if self.boundaries.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::GridMismatch("segment boundaries must be strictly increasing".into()));
        }
        for d in &self.ions {
            if d.amplitudes.len() != s || d.phases.len() != s {
                return Err(Error::GridMismatch(format!("ion {} drive has wrong segment count", d.ion)));
            }
            if d.amplitudes.iter().any(|a| !(*a >= 0.0)) {
                return Err(Error::InvalidConfig(format!("ion {} has a negative amplitude", d.ion)));
            }
        }
        Ok(())
    }

    /// Multiplies every amplitude by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        for d in &mut out.ions {
            d.amplitudes.iter_mut().for_each(|a| *a *= s);
        }
        out
    }

    /// Adds a common phase offset to every segment of every ion.
    pub fn phase_shifted(&self, offset: f64) -> Self {
        let mut out = self.clone();
        for d in &mut out.ions {
            d.phases.iter_mut().for_each(|p| *p += offset);
        }
        out
    }

    /// Same segment values on a grid stretched by `factor`.
    pub fn stretched(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.duration *= factor;
        out.boundaries.iter_mut().for_each(|t| *t *= factor);
        out
    }

    pub fn max_amplitude(&self) -> f64 {
        self.ions
            .iter()
            .flat_map(|d| d.amplitudes.iter())
            .fold(0.0, |m, a| m.max(*a))
    }
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_phase(x: f64) -> f64 {
    let mut y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y -= 2.0 * PI;
    }
    y
}

/// First half of a robust drive: `ceil(S/2)` amplitudes, the initial phase and
/// the `floor(S/2)` independent phase increments.
#[derive(Clone, Debug, PartialEq)]
pub struct HalfDrive {
    pub segments: usize,
    pub amplitudes: Vec<f64>,
    pub initial_phase: f64,
    pub increments: Vec<f64>,
}

/// Mirrors a half drive into full amplitude and phase sequences.
///
/// Amplitudes satisfy `Omega_k = Omega_{S-1-k}` and increments
/// `dphi_n = dphi_{S-n}` for `n = 1..S-1`.
pub fn reflect_symmetric(half: &HalfDrive) -> (Vec<f64>, Vec<f64>) {
    let s = half.segments;
    assert_eq!(half.amplitudes.len(), s.div_ceil(2), "need ceil(S/2) amplitudes");
    assert_eq!(half.increments.len(), s / 2, "need floor(S/2) increments");
    let amplitudes = (0..s).map(|k| half.amplitudes[k.min(s - 1 - k)]).collect();
    let mut phases = Vec::with_capacity(s);
    phases.push(half.initial_phase);
    for n in 1..s {
        let m = if n <= s / 2 { n } else { s - n };
        let prev = phases[n - 1];
        phases.push(prev + half.increments[m - 1]);
    }
    (amplitudes, phases)
}

/// Constraint check of a drive against a scheme.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub max_amplitude: f64,
    pub amplitude_bound_ok: bool,
    pub nonnegative_ok: bool,
    pub max_amplitude_step: f64,
    pub max_phase_step: f64,
    /// `max_amplitude_step - bound` when a slew bound is violated.
    pub amplitude_step_violation: Option<f64>,
    pub phase_step_violation: Option<f64>,
    pub start_violation: Option<f64>,
    pub amplitude_symmetry_residual: f64,
    pub phase_symmetry_residual: f64,
    pub symmetry_ok: bool,
    pub modulation_ok: bool,
}

impl ConstraintReport {
    pub fn passes(&self) -> bool {
        self.amplitude_bound_ok
            && self.nonnegative_ok
            && self.amplitude_step_violation.is_none()
            && self.phase_step_violation.is_none()
            && self.start_violation.is_none()
            && self.symmetry_ok
            && self.modulation_ok
    }
}

/// Rounding allowance used by the validator's bound comparisons.
const VALIDATION_SLACK: f64 = 1e-12;

/// Bounded steps saturate slightly inside their bound so that `tanh -> 1`
/// and accumulated rounding never land on or past it.
const SLEW_MARGIN: f64 = 1.0 - 1e-9;

pub fn validate(drive: &DriveWaveform, scheme: &SchemeConfig) -> ConstraintReport {
    let s = drive.segments();
    let mut max_amplitude: f64 = 0.0;
    let mut nonnegative_ok = true;
    let mut max_amp_step: f64 = 0.0;
    let mut max_phase_step: f64 = 0.0;
    let mut amp_sym: f64 = 0.0;
    let mut phase_sym: f64 = 0.0;
    let mut first_amp: f64 = 0.0;
    let mut modulation_ok = true;
    let am = scheme.modulation == Modulation::Am;
    for d in &drive.ions {
        for &a in &d.amplitudes {
            max_amplitude = max_amplitude.max(a);
            nonnegative_ok &= a >= 0.0;
        }
        // Amplitude-only drives are compared as signed real values.
        let signed: Vec<f64> = if am {
            d.amplitudes.iter().zip(&d.phases).map(|(a, p)| if *p == 0.0 { *a } else { -a }).collect()
        } else {
            d.amplitudes.clone()
        };
        first_amp = first_amp.max(signed.first().map_or(0.0, |a| a.abs()));
        for k in 1..s {
            max_amp_step = max_amp_step.max((signed[k] - signed[k - 1]).abs());
            if !am {
                max_phase_step = max_phase_step.max(wrap_phase(d.phases[k] - d.phases[k - 1]).abs());
            }
        }
        for k in 0..s {
            amp_sym = amp_sym.max((signed[k] - signed[s - 1 - k]).abs());
        }
        for n in 1..s {
            if am {
                break;
            }
            let fwd = d.phases[n] - d.phases[n - 1];
            let back = d.phases[s - n] - d.phases[s - n - 1];
            phase_sym = phase_sym.max(wrap_phase(fwd - back).abs());
        }
        match scheme.modulation {
            Modulation::Am => modulation_ok &= d.phases.iter().all(|p| *p == 0.0 || *p == PI),
            Modulation::Pm => {
                modulation_ok &= d
                    .amplitudes
                    .iter()
                    .all(|a| (a - scheme.max_rabi).abs() <= VALIDATION_SLACK * scheme.max_rabi)
            }
            Modulation::Ampm => {}
        }
    }
    let amp_slack = VALIDATION_SLACK * scheme.max_rabi;
    let amplitude_bound_ok = max_amplitude <= scheme.max_rabi + amp_slack;
    let (amplitude_step_violation, phase_step_violation, start_violation) = match scheme.slew {
        Some(b) => {
            let amp = (max_amp_step > b.max_amplitude_step + amp_slack).then(|| max_amp_step - b.max_amplitude_step);
            let phase =
                (max_phase_step > b.max_phase_step + VALIDATION_SLACK).then(|| max_phase_step - b.max_phase_step);
            let start = (b.pin_start && scheme.modulation.modulates_amplitude() && first_amp > b.max_amplitude_step + amp_slack)
                .then(|| first_amp - b.max_amplitude_step);
            (amp, phase, start)
        }
        None => (None, None, None),
    };
    // Accumulated phases mirror only up to rounding of the running sum.
    let phase_scale = drive
        .ions
        .iter()
        .flat_map(|d| d.phases.iter())
        .fold(1.0f64, |m, p| m.max(p.abs()));
    let symmetry_ok = !scheme.robust || (amp_sym == 0.0 && phase_sym <= 64.0 * f64::EPSILON * phase_scale);
    ConstraintReport {
        max_amplitude,
        amplitude_bound_ok,
        nonnegative_ok,
        max_amplitude_step: max_amp_step,
        max_phase_step,
        amplitude_step_violation,
        phase_step_violation,
        start_violation,
        amplitude_symmetry_residual: amp_sym,
        phase_symmetry_residual: phase_sym,
        symmetry_ok,
        modulation_ok,
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(y: f64) -> f64 {
    (y / (1.0 - y)).ln()
}

/// Free-variable counts of one drive block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableCounts {
    pub amplitude: usize,
    /// Absolute per-segment phases (unbounded, non-robust schemes).
    pub phase_absolute: usize,
    /// Initial phase of an increment-parametrized phase sequence.
    pub phase_offset: usize,
    pub phase_increment: usize,
}

impl VariableCounts {
    pub fn total(&self) -> usize {
        self.amplitude + self.phase_absolute + self.phase_offset + self.phase_increment
    }
}

/// Map from free real variables to a [`DriveWaveform`].
#[derive(Clone, Debug)]
pub struct Parametrization {
    pub scheme: SchemeConfig,
    pub counts: VariableCounts,
    /// Ions sharing each block.
    pub blocks: Vec<Vec<usize>>,
    /// Pre-squash slope bound for slew-limited amplitudes.
    amp_step_scale: f64,
    /// Pinned start: `z_0 = amp_floor + pin_scale * tanh(v_0)`.
    amp_floor: f64,
    pin_scale: f64,
}

/// Normalised amplitudes `Omega / Omega_max` and phases of one block. For
/// amplitude-only schemes the amplitudes are signed and the phases zero.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockControls {
    pub amplitudes: Vec<f64>,
    pub phases: Vec<f64>,
}

pub fn build_parametrization(scheme: &SchemeConfig, target: &GateTarget) -> Result<Parametrization> {
    let s = scheme.segments;
    if s == 0 {
        return Err(Error::InvalidConfig("scheme needs at least one segment".into()));
    }
    if !(scheme.max_rabi > 0.0 && scheme.max_rabi.is_finite()) {
        return Err(Error::InvalidConfig("max Rabi rate must be positive".into()));
    }
    if !(scheme.duration > 0.0 && scheme.duration.is_finite()) {
        return Err(Error::InvalidConfig("gate duration must be positive".into()));
    }
    if let Some(b) = scheme.slew {
        if !(b.max_amplitude_step > 0.0) {
            return Err(Error::InvalidConstraint(format!("amplitude step bound must be positive, got {}", b.max_amplitude_step)));
        }
        if !(b.max_phase_step > 0.0) {
            return Err(Error::InvalidConstraint(format!("phase step bound must be positive, got {}", b.max_phase_step)));
        }
    }
    let mut seen = BTreeSet::new();
    for g in &scheme.shared_groups {
        if g.is_empty() {
            return Err(Error::InvalidConfig("empty shared group".into()));
        }
        for &i in g {
            if i >= target.n_ions {
                return Err(Error::InvalidConfig(format!("ion index {i} out of range for {} ions", target.n_ions)));
            }
            if !seen.insert(i) {
                return Err(Error::InvalidConfig(format!("ion {i} appears in more than one shared group")));
            }
        }
    }
    for ion in target.addressed_ions() {
        if !seen.contains(&ion) {
            return Err(Error::InvalidConfig(format!("gate ion {ion} is not driven by any shared group")));
        }
    }

    let amp_free = if scheme.robust { s.div_ceil(2) } else { s };
    let amplitude = if scheme.modulation.modulates_amplitude() { amp_free } else { 0 };
    let (phase_absolute, phase_offset, phase_increment) = if !scheme.modulation.modulates_phase() {
        (0, 0, 0)
    } else if scheme.robust {
        (0, 1, s / 2)
    } else if scheme.slew.is_some() {
        (0, 1, s - 1)
    } else {
        (s, 0, 0)
    };
    let counts = VariableCounts {
        amplitude,
        phase_absolute,
        phase_offset,
        phase_increment,
    };
    let signed = scheme.modulation == Modulation::Am;
    let (amp_step_scale, amp_floor, pin_scale) = match scheme.slew {
        Some(b) => {
            let rel = (b.max_amplitude_step / scheme.max_rabi) * SLEW_MARGIN;
            // The squash has slope <= 1/4 (<= 1/2 signed), so bounded
            // pre-squash steps keep |dOmega| below the bound.
            if signed {
                let pin = if rel < 1.0 { 2.0 * rel.atanh() } else { 0.0 };
                (2.0 * rel, 0.0, pin)
            } else {
                let c = 4.0 * rel;
                let floor = if rel < 1.0 { logit(rel) - c } else { 0.0 };
                (c, floor, c)
            }
        }
        None => (0.0, 0.0, 0.0),
    };
    Ok(Parametrization {
        scheme: scheme.clone(),
        counts,
        blocks: scheme.shared_groups.clone(),
        amp_step_scale,
        amp_floor,
        pin_scale,
    })
}

impl Parametrization {
    pub fn block_len(&self) -> usize {
        self.counts.total()
    }

    pub fn n_vars(&self) -> usize {
        self.block_len() * self.blocks.len()
    }

    pub fn segments(&self) -> usize {
        self.scheme.segments
    }

    fn amp_slewed(&self) -> bool {
        self.scheme.slew.is_some() && self.counts.amplitude > 0
    }

    fn pinned(&self) -> bool {
        self.scheme.slew.map_or(false, |b| b.pin_start && b.max_amplitude_step < self.scheme.max_rabi)
    }

    fn phase_step_bound(&self) -> Option<f64> {
        self.scheme.slew.map(|b| b.max_phase_step * SLEW_MARGIN)
    }

    fn signed(&self) -> bool {
        self.scheme.modulation == Modulation::Am
    }

    /// Logistic squash onto `(0, 1)`, or `(-1, 1)` for signed amplitudes.
    fn squash(&self, z: f64) -> f64 {
        if self.signed() {
            (0.5 * z).tanh()
        } else {
            sigmoid(z)
        }
    }

    fn squash_slope(&self, z: f64) -> f64 {
        if self.signed() {
            let t = (0.5 * z).tanh();
            0.5 * (1.0 - t * t)
        } else {
            let sg = sigmoid(z);
            sg * (1.0 - sg)
        }
    }

    fn unsquash(&self, a: f64) -> f64 {
        if self.signed() {
            2.0 * a.atanh()
        } else {
            logit(a)
        }
    }

    /// Pre-squash amplitude coordinates of the free segments.
    fn pre_squash(&self, vars: &[f64]) -> Vec<f64> {
        if !self.amp_slewed() {
            return vars.to_vec();
        }
        let c = self.amp_step_scale;
        let mut z = Vec::with_capacity(vars.len());
        let first = if self.pinned() { self.amp_floor + self.pin_scale * vars[0].tanh() } else { vars[0] };
        z.push(first);
        for k in 1..vars.len() {
            let prev = z[k - 1];
            z.push(prev + c * vars[k].tanh());
        }
        z
    }

    /// Evaluates one block's normalised amplitudes and phases.
    pub fn block_controls(&self, theta: &[f64]) -> BlockControls {
        let s = self.segments();
        let c = &self.counts;
        debug_assert_eq!(theta.len(), c.total());
        let (amp_vars, phase_vars) = theta.split_at(c.amplitude);
        let amplitudes: Vec<f64> = if c.amplitude == 0 {
            vec![1.0; s]
        } else {
            let free: Vec<f64> = self.pre_squash(amp_vars).into_iter().map(|z| self.squash(z)).collect();
            if self.scheme.robust {
                (0..s).map(|k| free[k.min(s - 1 - k)]).collect()
            } else {
                free
            }
        };
        let phases = if !self.scheme.modulation.modulates_phase() {
            vec![0.0; s]
        } else if c.phase_absolute > 0 {
            phase_vars.to_vec()
        } else {
            let bound = self.phase_step_bound();
            let incr = |v: f64| bound.map_or(v, |q| q * v.tanh());
            let free: Vec<f64> = phase_vars[1..].iter().map(|&v| incr(v)).collect();
            if self.scheme.robust {
                let half = HalfDrive {
                    segments: s,
                    amplitudes: vec![0.0; s.div_ceil(2)],
                    initial_phase: phase_vars[0],
                    increments: free,
                };
                reflect_symmetric(&half).1
            } else {
                let mut p = Vec::with_capacity(s);
                p.push(phase_vars[0]);
                for d in free {
                    let prev = *p.last().unwrap();
                    p.push(prev + d);
                }
                p
            }
        };
        BlockControls { amplitudes, phases }
    }

    /// Pulls back gradients with respect to normalised amplitudes and phases
    /// onto one block's free variables.
    pub fn block_backprop(&self, theta: &[f64], d_amp: &[f64], d_phase: &[f64], out: &mut [f64]) {
        let s = self.segments();
        let c = self.counts;
        let (amp_vars, phase_vars) = theta.split_at(c.amplitude);
        let (out_amp, out_phase) = out.split_at_mut(c.amplitude);

        if c.amplitude > 0 {
            let n_free = c.amplitude;
            let mut g_free = vec![0.0; n_free];
            if self.scheme.robust {
                for k in 0..s {
                    g_free[k.min(s - 1 - k)] += d_amp[k];
                }
            } else {
                g_free.copy_from_slice(&d_amp[..n_free]);
            }
            let z = self.pre_squash(amp_vars);
            let gz: Vec<f64> = z
                .iter()
                .zip(&g_free)
                .map(|(&zk, &g)| g * self.squash_slope(zk))
                .collect();
            if self.amp_slewed() {
                let cstep = self.amp_step_scale;
                let mut suffix = 0.0;
                for k in (0..n_free).rev() {
                    suffix += gz[k];
                    let t = amp_vars[k].tanh();
                    out_amp[k] = match (k, self.pinned()) {
                        (0, false) => suffix,
                        (0, true) => suffix * self.pin_scale * (1.0 - t * t),
                        _ => suffix * cstep * (1.0 - t * t),
                    };
                }
            } else {
                out_amp.copy_from_slice(&gz);
            }
        }

        if !self.scheme.modulation.modulates_phase() {
            return;
        }
        if c.phase_absolute > 0 {
            out_phase.copy_from_slice(d_phase);
            return;
        }
        // phi_k = phi_0 + sum_{n <= k} incr_n, so d/d incr_n is the suffix sum.
        let mut suffix = vec![0.0; s + 1];
        for k in (0..s).rev() {
            suffix[k] = suffix[k + 1] + d_phase[k];
        }
        out_phase[0] = suffix[0];
        let bound = self.phase_step_bound();
        for m in 1..=c.phase_increment {
            let mut g = suffix[m];
            if self.scheme.robust && s - m != m {
                g += suffix[s - m];
            }
            if let Some(q) = bound {
                let t = phase_vars[m].tanh();
                g *= q * (1.0 - t * t);
            }
            out_phase[m] = g;
        }
    }

    /// Builds the physical drive for the full variable vector.
    pub fn drive(&self, theta: &[f64]) -> DriveWaveform {
        assert_eq!(theta.len(), self.n_vars());
        let s = self.segments();
        let omega = self.scheme.max_rabi;
        let mut ions = Vec::new();
        for (b, group) in self.blocks.iter().enumerate() {
            let ctl = self.block_controls(&theta[b * self.block_len()..(b + 1) * self.block_len()]);
            let amplitudes: Vec<f64> = ctl.amplitudes.iter().map(|a| a.abs() * omega).collect();
            // A negative real amplitude is a positive one at phase pi.
            let phases: Vec<f64> = ctl
                .amplitudes
                .iter()
                .zip(&ctl.phases)
                .map(|(a, p)| if *a < 0.0 { std::f64::consts::PI } else { *p })
                .collect();
            for &ion in group {
                ions.push(IonDrive {
                    ion,
                    amplitudes: amplitudes.clone(),
                    phases: phases.clone(),
                });
            }
        }
        ions.sort_by_key(|d| d.ion);
        DriveWaveform {
            duration: self.scheme.duration,
            boundaries: uniform_grid(self.scheme.duration, s),
            ions,
            robust_symmetric: self.scheme.robust,
        }
    }

    /// Inverse of [`Parametrization::drive`] for drives inside the scheme's range.
    pub fn extract(&self, drive: &DriveWaveform) -> Result<Vec<f64>> {
        let s = self.segments();
        if drive.segments() != s {
            return Err(Error::GridMismatch(format!("drive has {} segments, scheme {}", drive.segments(), s)));
        }
        let mut theta = Vec::with_capacity(self.n_vars());
        let omega = self.scheme.max_rabi;
        for group in &self.blocks {
            let d = drive
                .drive_for(group[0])
                .ok_or_else(|| Error::GridMismatch(format!("no drive for ion {}", group[0])))?;
            let c = self.counts;
            if c.amplitude > 0 {
                let z: Vec<f64> = d.amplitudes[..c.amplitude]
                    .iter()
                    .zip(&d.phases)
                    .map(|(a, p)| {
                        let signed = if self.signed() && *p != 0.0 { -a } else { *a };
                        self.unsquash(signed / omega)
                    })
                    .collect();
                if self.amp_slewed() {
                    let cs = self.amp_step_scale;
                    let first = if self.pinned() { ((z[0] - self.amp_floor) / self.pin_scale).atanh() } else { z[0] };
                    theta.push(first);
                    for k in 1..z.len() {
                        theta.push(((z[k] - z[k - 1]) / cs).atanh());
                    }
                } else {
                    theta.extend(z);
                }
            }
            if self.scheme.modulation.modulates_phase() {
                if c.phase_absolute > 0 {
                    theta.extend_from_slice(&d.phases);
                } else {
                    theta.push(d.phases[0]);
                    let bound = self.phase_step_bound();
                    for m in 1..=c.phase_increment {
                        let incr = d.phases[m] - d.phases[m - 1];
                        theta.push(bound.map_or(incr, |q| (incr / q).atanh()));
                    }
                }
            }
        }
        Ok(theta)
    }

    /// Random starting point: amplitudes uniform in `[0.1, 0.9] Omega_max`
    /// (with a random sign for amplitude-only schemes),
    /// absolute phases and unbounded increments uniform in `(-pi, pi]`, and
    /// bounded steps with pre-image uniform in `(-1, 1)`.
    pub fn initial_guess<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.n_vars());
        let c = self.counts;
        for _ in &self.blocks {
            for k in 0..c.amplitude {
                if self.amp_slewed() && (k > 0 || self.pinned()) {
                    theta.push(rng.gen_range(-1.0..1.0));
                } else {
                    let a: f64 = rng.gen_range(0.1..0.9);
                    let a = if self.signed() && rng.gen_bool(0.5) { -a } else { a };
                    theta.push(self.unsquash(a));
                }
            }
            for _ in 0..(c.phase_absolute + c.phase_offset) {
                theta.push(rng.gen_range(-PI..PI));
            }
            for _ in 0..c.phase_increment {
                if self.phase_step_bound().is_some() {
                    theta.push(rng.gen_range(-1.0..1.0));
                } else {
                    theta.push(rng.gen_range(-PI..PI));
                }
            }
        }
        theta
    }
}
