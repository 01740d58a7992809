//! Gate cost, its analytic derivatives and multi-start optimization.
//!
//! The cost is a sum of squared residuals: target phase errors, end-of-gate
//! displacements of every addressed ion and, for robust schemes, the
//! center-of-mass integrals `R u`. Everything is evaluated on dimensionless
//! controls `u~ = tau * gamma` so residuals are O(1).

use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{fidelity_from_parts, operational_infidelity, FidelityReport};
use crate::chain::ModeData;
use crate::control::{
    build_parametrization, pairs_of, uniform_grid, validate, ConstraintReport, DriveWaveform, GateTarget, Parametrization,
    SchemeConfig,
};
use crate::error::{Error, Result};
use crate::kernels::KernelSet;
use crate::solver::{minimize, Backend, LeastSquares, SolverOptions, Status};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub phase: f64,
    pub motion: f64,
    pub com: f64,
}

impl Weights {
    pub fn for_scheme(scheme: &SchemeConfig) -> Self {
        Self {
            phase: 1.0,
            motion: 1.0,
            com: if scheme.robust { 1.0 } else { 0.0 },
        }
    }
}

#[derive(Clone, Debug)]
pub struct OptimizationProblem {
    pub kernels: KernelSet,
    pub target: GateTarget,
    pub scheme: SchemeConfig,
    pub weights: Weights,
    pub instance_count: usize,
    pub iteration_budget: usize,
    pub convergence_tolerance: f64,
    pub rng_seed: u64,
    pub backend: Backend,
    /// Worker threads for the instances; `None` uses the global pool.
    pub threads: Option<usize>,
    param: Parametrization,
}

struct PairTerm {
    ions: (usize, usize),
    blocks: (usize, usize),
    target: f64,
    kernel: DMatrix<Complex64>,
}

/// Per-block phases and `u~` at one point.
struct BlockState {
    phases: Vec<f64>,
    u: Vec<Complex64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    /// `sum eps_jk^2`.
    pub phase: f64,
    /// `sum_j sum_p |alpha_j^p|^2`.
    pub motion: f64,
    /// `sum_j sum_p |R~ u~_j|^2`.
    pub com: f64,
    /// Weighted total.
    pub total: f64,
}

impl OptimizationProblem {
    pub fn new(kernels: KernelSet, target: GateTarget, scheme: SchemeConfig) -> Result<Self> {
        let param = build_parametrization(&scheme, &target)?;
        if target.n_ions != kernels.modes().n_ions {
            return Err(Error::InvalidConfig(format!(
                "target has {} ions, chain {}",
                target.n_ions,
                kernels.modes().n_ions
            )));
        }
        let grid = uniform_grid(scheme.duration, scheme.segments);
        if grid.len() != kernels.boundaries().len()
            || grid.iter().zip(kernels.boundaries()).any(|(a, b)| (a - b).abs() > 1e-12 * scheme.duration)
        {
            return Err(Error::GridMismatch("kernels were not built on the scheme's segment grid".into()));
        }
        Ok(Self {
            weights: Weights::for_scheme(&scheme),
            kernels,
            target,
            scheme,
            instance_count: 5,
            iteration_budget: 2000,
            convergence_tolerance: 1e-16,
            rng_seed: 0,
            backend: Backend::LevenbergMarquardt,
            threads: None,
            param,
        })
    }

    /// Builds the kernels for `modes` on the scheme grid.
    pub fn from_modes(modes: &ModeData, target: GateTarget, scheme: SchemeConfig) -> Result<Self> {
        let pairs = pairs_of(&scheme.addressed_ions());
        let kernels = KernelSet::new(modes, &uniform_grid(scheme.duration, scheme.segments), &pairs)?;
        Self::new(kernels, target, scheme)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn with_instances(mut self, n: usize) -> Self {
        self.instance_count = n;
        self
    }

    pub fn with_budget(mut self, iterations: usize) -> Self {
        self.iteration_budget = iterations;
        self
    }

    pub fn with_backend(mut self, backend: Backend) -> Self {
        self.backend = backend;
        self
    }

    pub fn with_weights(mut self, weights: Weights) -> Self {
        self.weights = weights;
        self
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.convergence_tolerance = tolerance;
        self
    }

    pub fn with_threads(mut self, threads: Option<usize>) -> Self {
        self.threads = threads;
        self
    }

    pub fn parametrization(&self) -> &Parametrization {
        &self.param
    }

    pub fn n_vars(&self) -> usize {
        self.param.n_vars()
    }

    fn check(&self) -> Result<()> {
        let w = self.weights;
        if !(w.phase >= 0.0 && w.motion >= 0.0 && w.com >= 0.0) {
            return Err(Error::InvalidConfig("cost weights must be non-negative".into()));
        }
        if (w.com > 0.0) != self.scheme.robust {
            return Err(Error::InvalidConfig("center-of-mass weight must be positive exactly for robust schemes".into()));
        }
        if self.instance_count == 0 {
            return Err(Error::InvalidConfig("need at least one optimization instance".into()));
        }
        Ok(())
    }

    pub fn evaluator(&self) -> Evaluator<'_> {
        Evaluator::new(self)
    }

    pub fn cost(&self, theta: &[f64]) -> f64 {
        self.evaluator().cost(theta)
    }

    pub fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.n_vars()];
        self.evaluator().cost_gradient(theta, &mut g);
        g
    }

    pub fn breakdown(&self, theta: &[f64]) -> CostBreakdown {
        self.evaluator().breakdown(theta)
    }

    pub fn drive(&self, theta: &[f64]) -> DriveWaveform {
        self.param.drive(theta)
    }

    pub fn initial_guess(&self, instance: usize) -> Vec<f64> {
        let mut rng = instance_rng(self.rng_seed, instance);
        self.param.initial_guess(&mut rng)
    }
}

/// Independent stream per instance so results do not depend on scheduling.
pub fn instance_rng(seed: u64, instance: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(instance as u64);
    rng
}

/// Residual and derivative evaluation for one problem.
pub struct Evaluator<'a> {
    problem: &'a OptimizationProblem,
    scale: f64,
    mtil: DMatrix<Complex64>,
    rtil: DMatrix<Complex64>,
    pairs: Vec<PairTerm>,
    block_sizes: Vec<usize>,
    robust_rows: bool,
}

impl<'a> Evaluator<'a> {
    fn new(problem: &'a OptimizationProblem) -> Self {
        let param = &problem.param;
        let k = &problem.kernels;
        let mut ion_block = vec![usize::MAX; problem.target.n_ions];
        for (b, g) in param.blocks.iter().enumerate() {
            for &i in g {
                ion_block[i] = b;
            }
        }
        let pairs = pairs_of(&problem.scheme.addressed_ions())
            .into_iter()
            .map(|(j, l)| PairTerm {
                ions: (j, l),
                blocks: (ion_block[j], ion_block[l]),
                target: problem.target.phase(j, l),
                kernel: k.phase_kernel(j, l).into_owned(),
            })
            .collect();
        Self {
            problem,
            scale: problem.scheme.duration * problem.scheme.max_rabi,
            mtil: k.displacement(),
            rtil: k.com().clone(),
            pairs,
            block_sizes: param.blocks.iter().map(|g| g.len()).collect(),
            robust_rows: problem.weights.com > 0.0,
        }
    }

    fn n_blocks(&self) -> usize {
        self.block_sizes.len()
    }

    fn n_modes(&self) -> usize {
        self.mtil.nrows()
    }

    fn states(&self, theta: &[f64]) -> Vec<BlockState> {
        let param = &self.problem.param;
        let bl = param.block_len();
        (0..self.n_blocks())
            .map(|b| {
                let c = param.block_controls(&theta[b * bl..(b + 1) * bl]);
                let u = c
                    .amplitudes
                    .iter()
                    .zip(&c.phases)
                    .map(|(a, p)| Complex64::from_polar(self.scale * a, *p))
                    .collect();
                BlockState {
                    phases: c.phases,
                    u,
                }
            })
            .collect()
    }

    fn motion_offset(&self) -> usize {
        self.pairs.len()
    }

    fn com_offset(&self) -> usize {
        self.pairs.len() + 2 * self.n_modes() * self.n_blocks()
    }

    /// `Im[a^T P b* + b^T P a*]` together with `P b*`, `P a*`, `P^T a`, `P^T b`.
    fn pair_terms(p: &DMatrix<Complex64>, a: &[Complex64], b: &[Complex64]) -> (f64, [Vec<Complex64>; 4]) {
        let s = a.len();
        let mut pb = vec![Complex64::new(0.0, 0.0); s];
        let mut pa = vec![Complex64::new(0.0, 0.0); s];
        let mut pta = vec![Complex64::new(0.0, 0.0); s];
        let mut ptb = vec![Complex64::new(0.0, 0.0); s];
        for l in 0..s {
            let (bl, al) = (b[l].conj(), a[l].conj());
            for k in l..s {
                let pk = p[(k, l)];
                pb[k] += pk * bl;
                pa[k] += pk * al;
                pta[l] += pk * a[k];
                ptb[l] += pk * b[k];
            }
        }
        let v: Complex64 = (0..s).map(|k| a[k] * pb[k] + b[k] * pa[k]).sum();
        (v.im, [pb, pa, pta, ptb])
    }

    fn fill_residuals(&self, states: &[BlockState], r: &mut [f64]) {
        let w = self.problem.weights;
        let sp = w.phase.sqrt();
        for (i, pt) in self.pairs.iter().enumerate() {
            let (phi, _) = Self::pair_terms(&pt.kernel, &states[pt.blocks.0].u, &states[pt.blocks.1].u);
            r[i] = sp * (pt.target - phi);
        }
        let nm = self.n_modes();
        for (b, st) in states.iter().enumerate() {
            let sm = (w.motion * self.block_sizes[b] as f64).sqrt();
            let sc = (w.com * self.block_sizes[b] as f64).sqrt();
            for p in 0..nm {
                let alpha: Complex64 = (0..st.u.len()).map(|k| self.mtil[(p, k)] * st.u[k]).sum();
                let row = self.motion_offset() + 2 * (b * nm + p);
                r[row] = sm * alpha.re;
                r[row + 1] = sm * alpha.im;
                if self.robust_rows {
                    let c: Complex64 = (0..st.u.len()).map(|k| self.rtil[(p, k)] * st.u[k]).sum();
                    let row = self.com_offset() + 2 * (b * nm + p);
                    r[row] = sc * c.re;
                    r[row + 1] = sc * c.im;
                }
            }
        }
    }

    /// Maps a complex sensitivity `G` (with `df = Re(conj(G) du~)`) of one
    /// block onto its free variables.
    fn pull_back(&self, b: usize, theta: &[f64], st: &BlockState, g: &[Complex64], out: &mut [f64]) {
        let param = &self.problem.param;
        let bl = param.block_len();
        let s = st.u.len();
        let mut d_amp = vec![0.0; s];
        let mut d_phase = vec![0.0; s];
        for k in 0..s {
            let gc = g[k].conj();
            d_amp[k] = self.scale * (gc * Complex64::from_polar(1.0, st.phases[k])).re;
            d_phase[k] = (gc * Complex64::new(0.0, 1.0) * st.u[k]).re;
        }
        param.block_backprop(&theta[b * bl..(b + 1) * bl], &d_amp, &d_phase, out);
    }

    /// Complex sensitivities of one pair residual on its two blocks.
    fn pair_sensitivity(&self, pt: &PairTerm, states: &[BlockState]) -> (Vec<Complex64>, Vec<Complex64>) {
        let i = Complex64::new(0.0, 1.0);
        let sp = self.problem.weights.phase.sqrt();
        let (_, [pb, pa, pta, ptb]) = Self::pair_terms(&pt.kernel, &states[pt.blocks.0].u, &states[pt.blocks.1].u);
        let s = pb.len();
        let ga = (0..s).map(|k| -sp * (i * pb[k].conj() - i * ptb[k])).collect();
        let gb = (0..s).map(|k| -sp * (i * pa[k].conj() - i * pta[k])).collect();
        (ga, gb)
    }

    pub fn residual_count(&self) -> usize {
        let motion = 2 * self.n_modes() * self.n_blocks();
        self.pairs.len() + motion + if self.robust_rows { motion } else { 0 }
    }

    pub fn cost(&self, theta: &[f64]) -> f64 {
        let mut r = vec![0.0; self.residual_count()];
        self.residuals(theta, &mut r);
        r.iter().map(|v| v * v).sum()
    }

    pub fn breakdown(&self, theta: &[f64]) -> CostBreakdown {
        let mut r = vec![0.0; self.residual_count()];
        self.residuals(theta, &mut r);
        let w = self.problem.weights;
        let sum = |range: std::ops::Range<usize>| r[range].iter().map(|v| v * v).sum::<f64>();
        let phase_w = sum(0..self.motion_offset());
        let motion_w = sum(self.motion_offset()..self.com_offset());
        let com_w = if self.robust_rows { sum(self.com_offset()..r.len()) } else { 0.0 };
        let unweight = |v: f64, w: f64| if w > 0.0 { v / w } else { 0.0 };
        let com = if self.robust_rows {
            unweight(com_w, w.com)
        } else {
            // Report the center-of-mass term even when it is not optimized.
            let states = self.states(theta);
            let mut acc = 0.0;
            for (b, st) in states.iter().enumerate() {
                for p in 0..self.n_modes() {
                    let c: Complex64 = (0..st.u.len()).map(|k| self.rtil[(p, k)] * st.u[k]).sum();
                    acc += self.block_sizes[b] as f64 * c.norm_sqr();
                }
            }
            acc
        };
        CostBreakdown {
            phase: unweight(phase_w, w.phase),
            motion: unweight(motion_w, w.motion),
            com,
            total: phase_w + motion_w + com_w,
        }
    }

    /// Infidelity assembled from the optimizer's own phases and displacements.
    pub fn internal_infidelity(&self, theta: &[f64]) -> FidelityReport {
        let states = self.states(theta);
        let modes = self.problem.kernels.modes();
        let n = modes.n_ions;
        let mut phases = DMatrix::zeros(n, n);
        for pt in &self.pairs {
            let (phi, _) = Self::pair_terms(&pt.kernel, &states[pt.blocks.0].u, &states[pt.blocks.1].u);
            phases[(pt.ions.0, pt.ions.1)] = phi;
            phases[(pt.ions.1, pt.ions.0)] = phi;
        }
        let mut alpha = DMatrix::zeros(n, self.n_modes());
        for (b, group) in self.problem.param.blocks.iter().enumerate() {
            for p in 0..self.n_modes() {
                let a: Complex64 = (0..states[b].u.len()).map(|k| self.mtil[(p, k)] * states[b].u[k]).sum();
                for &ion in group {
                    alpha[(ion, p)] = a;
                }
            }
        }
        let ions = self.problem.scheme.addressed_ions();
        fidelity_from_parts(&phases, &alpha, &ions, &self.problem.target, modes, &modes.mean_phonons)
    }
}

impl LeastSquares for Evaluator<'_> {
    fn n_vars(&self) -> usize {
        self.problem.param.n_vars()
    }

    fn n_residuals(&self) -> usize {
        self.residual_count()
    }

    fn residuals(&self, theta: &[f64], r: &mut [f64]) {
        let states = self.states(theta);
        self.fill_residuals(&states, r);
    }

    fn jacobian(&self, theta: &[f64], r: &mut [f64], jac: &mut DMatrix<f64>) {
        let states = self.states(theta);
        self.fill_residuals(&states, r);
        jac.fill(0.0);
        let bl = self.problem.param.block_len();
        let mut out = vec![0.0; bl];
        let write_row = |jac: &mut DMatrix<f64>, row: usize, b: usize, out: &[f64]| {
            for (v, x) in out.iter().enumerate() {
                jac[(row, b * bl + v)] += x;
            }
        };
        for (row, pt) in self.pairs.iter().enumerate() {
            let (ga, gb) = self.pair_sensitivity(pt, &states);
            self.pull_back(pt.blocks.0, theta, &states[pt.blocks.0], &ga, &mut out);
            write_row(jac, row, pt.blocks.0, &out);
            self.pull_back(pt.blocks.1, theta, &states[pt.blocks.1], &gb, &mut out);
            write_row(jac, row, pt.blocks.1, &out);
        }
        let nm = self.n_modes();
        let w = self.problem.weights;
        let i = Complex64::new(0.0, 1.0);
        let mut kernel_rows = vec![(self.motion_offset(), &self.mtil, w.motion)];
        if self.robust_rows {
            kernel_rows.push((self.com_offset(), &self.rtil, w.com));
        }
        for (offset, kernel, weight) in kernel_rows {
            for (b, st) in states.iter().enumerate() {
                let sw = (weight * self.block_sizes[b] as f64).sqrt();
                for p in 0..nm {
                    let g_re: Vec<Complex64> = (0..st.u.len()).map(|k| sw * kernel[(p, k)].conj()).collect();
                    let g_im: Vec<Complex64> = g_re.iter().map(|g| i * g).collect();
                    let row = offset + 2 * (b * nm + p);
                    self.pull_back(b, theta, st, &g_re, &mut out);
                    write_row(jac, row, b, &out);
                    self.pull_back(b, theta, st, &g_im, &mut out);
                    write_row(jac, row + 1, b, &out);
                }
            }
        }
    }

    fn cost_gradient(&self, theta: &[f64], g: &mut [f64]) -> f64 {
        let states = self.states(theta);
        let mut r = vec![0.0; self.residual_count()];
        self.fill_residuals(&states, &mut r);
        let s = self.problem.param.segments();
        let zero = Complex64::new(0.0, 0.0);
        let mut acc = vec![vec![zero; s]; self.n_blocks()];
        for (row, pt) in self.pairs.iter().enumerate() {
            let (ga, gb) = self.pair_sensitivity(pt, &states);
            for k in 0..s {
                acc[pt.blocks.0][k] += ga[k] * r[row];
                acc[pt.blocks.1][k] += gb[k] * r[row];
            }
        }
        let nm = self.n_modes();
        let w = self.problem.weights;
        let mut kernel_rows = vec![(self.motion_offset(), &self.mtil, w.motion)];
        if self.robust_rows {
            kernel_rows.push((self.com_offset(), &self.rtil, w.com));
        }
        for (offset, kernel, weight) in kernel_rows {
            for b in 0..self.n_blocks() {
                let sw = (weight * self.block_sizes[b] as f64).sqrt();
                for p in 0..nm {
                    let row = offset + 2 * (b * nm + p);
                    // Re row has G = conj(K), Im row G = i conj(K).
                    let c = Complex64::new(r[row], r[row + 1]) * sw;
                    for k in 0..s {
                        acc[b][k] += kernel[(p, k)].conj() * c;
                    }
                }
            }
        }
        let bl = self.problem.param.block_len();
        for (b, st) in states.iter().enumerate() {
            self.pull_back(b, theta, st, &acc[b], &mut g[b * bl..(b + 1) * bl]);
        }
        g.iter_mut().for_each(|v| *v *= 2.0);
        r.iter().map(|v| v * v).sum()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InstanceDiagnostics {
    pub index: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub status: Status,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub best_drive: DriveWaveform,
    pub best_variables: Vec<f64>,
    pub best_instance: usize,
    pub cost_histories: Vec<Vec<f64>>,
    pub breakdown: CostBreakdown,
    /// Recomputed through the analysis module from the returned drive.
    pub infidelity: f64,
    pub fidelity: FidelityReport,
    /// Infidelity from the optimizer's internal quantities.
    pub internal_infidelity: f64,
    pub constraints: ConstraintReport,
    pub wall_time_s: f64,
    pub seed: u64,
    pub instances: Vec<InstanceDiagnostics>,
}

struct InstanceRun {
    x: Vec<f64>,
    cost: f64,
    history: Vec<f64>,
    diag: InstanceDiagnostics,
}

fn run_instance(problem: &OptimizationProblem, index: usize, start: Option<&[f64]>) -> InstanceRun {
    let t0 = Instant::now();
    let eval = problem.evaluator();
    let x0 = match start {
        Some(x) => x.to_vec(),
        None => problem.initial_guess(index),
    };
    let opts = SolverOptions {
        max_iterations: problem.iteration_budget,
        cost_tolerance: problem.convergence_tolerance,
        ..Default::default()
    };
    let out = minimize(&eval, &x0, problem.backend, &opts);
    InstanceRun {
        diag: InstanceDiagnostics {
            index,
            initial_cost: out.history[0],
            final_cost: out.cost,
            iterations: out.iterations,
            evaluations: out.evaluations,
            status: out.status,
            wall_time_s: t0.elapsed().as_secs_f64(),
        },
        x: out.x,
        cost: out.cost,
        history: out.history,
    }
}

/// Runs every instance from its own seeded start and keeps the lowest cost
/// (ties broken by instance index).
pub fn optimize(problem: &OptimizationProblem) -> Result<OptimizationResult> {
    optimize_from(problem, &[])
}

/// Like [`optimize`], with explicit starting points for the first instances.
pub fn optimize_from(problem: &OptimizationProblem, starts: &[Vec<f64>]) -> Result<OptimizationResult> {
    problem.check()?;
    for s in starts {
        if s.len() != problem.n_vars() {
            return Err(Error::InvalidConfig(format!(
                "starting point has {} variables, problem {}",
                s.len(),
                problem.n_vars()
            )));
        }
    }
    let t0 = Instant::now();
    let n = problem.instance_count.max(starts.len());
    let work = || -> Vec<InstanceRun> {
        (0..n)
            .into_par_iter()
            .map(|i| run_instance(problem, i, starts.get(i).map(|v| v.as_slice())))
            .collect()
    };
    let runs = match problem.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    let best = runs
        .iter()
        .filter(|r| r.cost.is_finite())
        .min_by(|a, b| a.cost.total_cmp(&b.cost).then(a.diag.index.cmp(&b.diag.index)));
    let Some(best) = best else {
        let details = runs
            .iter()
            .map(|r| format!("instance {}: {:?} after {} iterations", r.diag.index, r.diag.status, r.diag.iterations))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::OptimizationFailure { instances: n, details });
    };
    let drive = problem.drive(&best.x);
    let eval = problem.evaluator();
    let fidelity = operational_infidelity(&drive, &problem.kernels, &problem.target, &problem.kernels.modes().mean_phonons)?;
    let internal = eval.internal_infidelity(&best.x);
    Ok(OptimizationResult {
        constraints: validate(&drive, &problem.scheme),
        breakdown: eval.breakdown(&best.x),
        infidelity: fidelity.infidelity,
        internal_infidelity: internal.infidelity,
        fidelity,
        best_drive: drive,
        best_variables: best.x.clone(),
        best_instance: best.diag.index,
        cost_histories: runs.iter().map(|r| r.history.clone()).collect(),
        wall_time_s: t0.elapsed().as_secs_f64(),
        seed: problem.rng_seed,
        instances: runs.into_iter().map(|r| r.diag).collect(),
    })
}

/// Cost histories as CSV: `iteration,instance_0,...`, blank past each end.
pub fn histories_csv(result: &OptimizationResult) -> String {
    let len = result.cost_histories.iter().map(|h| h.len()).max().unwrap_or(0);
    let mut out = String::from("iteration");
    for i in 0..result.cost_histories.len() {
        out.push_str(&format!(",cost_instance_{i}"));
    }
    out.push('\n');
    for it in 0..len {
        out.push_str(&it.to_string());
        for h in &result.cost_histories {
            out.push(',');
            if let Some(v) = h.get(it) {
                out.push_str(&format!("{v:e}"));
            }
        }
        out.push('\n');
    }
    out
}
