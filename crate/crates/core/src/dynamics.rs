//! Time evolution: the closed-form Rabi solution in the squeezed coherent
//! basis, the ground-state probability series, direct integration of the
//! Schrödinger equation in the photon-number basis, the second-order recursion
//! residual and long-time averages.
//!
//! Times passed in and reported are dimensionless `λt`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{FockMatrix, TruncationSpec};
use crate::propagate::{norm_sqr, rk4_step, BandedOp, Chebyshev, LinearOp};
use crate::specfun::{log_factorial, CompensatedSum};
use crate::states::{AmplitudeSeries, ModelParams};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Which basis the field amplitudes of a [`JointState`] refer to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    /// Squeezed coherent basis `|ζ, α, n⟩`; `c2[m]` belongs to `n = m + 1`.
    BBasis,
    /// Photon-number basis `|n⟩`.
    ABasis,
}

/// Amplitudes of the atom (ground `c1`, excited `c2`) times field state.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub basis: Basis,
    pub n_max: usize,
    pub c1: Vec<Complex64>,
    pub c2: Vec<Complex64>,
}

impl JointState {
    pub fn norm_sqr(&self) -> f64 {
        norm_sqr(&self.c1) + norm_sqr(&self.c2)
    }

    pub fn ground_population(&self) -> f64 {
        norm_sqr(&self.c1)
    }

    /// `⟨B̂†B̂ + σ̂₊σ̂₋⟩` for a B-basis state.
    pub fn excitation_number(&self) -> f64 {
        let mut acc = CompensatedSum::<f64>::default();
        for (n, c) in self.c1.iter().enumerate() {
            acc.add(n as f64 * c.norm_sqr());
        }
        let shift = if self.basis == Basis::BBasis { 1.0 } else { 0.0 };
        for (m, c) in self.c2.iter().enumerate() {
            acc.add((m as f64 + shift) * c.norm_sqr());
        }
        if self.basis == Basis::ABasis {
            acc.add(norm_sqr(&self.c2));
        }
        acc.value()
    }
}

/// Ground-state probability sampled on a `λt` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub meta: ModelParams,
}

impl TimeSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>, meta: ModelParams) -> Result<Self> {
        check_grid(&times)?;
        if times.len() != values.len() {
            return Err(Error::domain("time series: times and values differ in length"));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= -1e-12 && **v <= 1.0 + 1e-12)) {
            return Err(Error::domain(format!("time series: probability {v} outside [0, 1]")));
        }
        Ok(TimeSeries { times, values, meta })
    }

    /// Largest pointwise difference from another series on the same grid.
    pub fn max_abs_diff(&self, other: &TimeSeries) -> f64 {
        assert_eq!(self.times.len(), other.times.len());
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn check_grid(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::domain("time grid is empty"));
    }
    if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::domain("time grid values must be finite and >= 0"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::domain("time grid must be strictly increasing"));
    }
    Ok(())
}

/// Uniform grid of `steps` points on `[0, t_max]`.
pub fn uniform_grid(t_max: f64, steps: usize) -> Result<Vec<f64>> {
    if steps < 2 || !(t_max > 0.0) {
        return Err(Error::domain("uniform grid needs t_max > 0 and at least 2 points"));
    }
    Ok((0..steps).map(|i| t_max * i as f64 / (steps - 1) as f64).collect())
}

/// `Ω_R(n) = √(Δ² + 4λ²n)`.
pub fn rabi_freq(n: usize, lambda: f64, delta: f64) -> f64 {
    (delta * delta + 4.0 * lambda * lambda * n as f64).sqrt()
}

/// Closed-form amplitudes at physical time `t` for initial ground-state atom
/// and field coefficients `series`.
pub fn amplitudes_analytic(series: &AmplitudeSeries, lambda: f64, delta: f64, t: f64) -> JointState {
    let n_max = series.n_max;
    let mut c1 = Vec::with_capacity(n_max + 1);
    let mut c2 = vec![ZERO; n_max];
    for (n, b) in series.coefficients.iter().enumerate() {
        let omega = rabi_freq(n, lambda, delta);
        let half = 0.5 * omega * t;
        if omega == 0.0 {
            c1.push(*b);
            continue;
        }
        c1.push(b * Complex64::new(half.cos(), delta / omega * half.sin()));
        if n > 0 {
            c2[n - 1] = -b * (2.0 * lambda * (n as f64).sqrt() / omega * half.sin());
        }
    }
    JointState {
        basis: Basis::BBasis,
        n_max,
        c1,
        c2,
    }
}

/// Resonant ground-state probability `½ Σ |b_n|² [1 + cos(2λ√n t)]`.
pub fn ground_prob(series: &AmplitudeSeries, lambda: f64, t_grid: &[f64], meta: ModelParams) -> Result<TimeSeries> {
    check_grid(t_grid)?;
    let weights = series.probabilities();
    let values = t_grid
        .par_iter()
        .map(|lt| {
            let t = lt / lambda;
            let mut acc = CompensatedSum::<f64>::default();
            for (n, w) in weights.iter().enumerate() {
                acc.add(0.5 * w * (1.0 + (2.0 * lambda * (n as f64).sqrt() * t).cos()));
            }
            acc.value()
        })
        .collect();
    TimeSeries::new(t_grid.to_vec(), values, meta)
}

/// Ground-state probability `Σ |c_{1,n}(t)|²` for any detuning.
pub fn ground_prob_detuned(series: &AmplitudeSeries, lambda: f64, delta: f64, t_grid: &[f64], meta: ModelParams) -> Result<TimeSeries> {
    check_grid(t_grid)?;
    let weights = series.probabilities();
    let values = t_grid
        .par_iter()
        .map(|lt| {
            let t = lt / lambda;
            let mut acc = CompensatedSum::<f64>::default();
            for (n, w) in weights.iter().enumerate() {
                let omega = rabi_freq(n, lambda, delta);
                if omega == 0.0 {
                    acc.add(*w);
                    continue;
                }
                let (s, c) = (0.5 * omega * t).sin_cos();
                let ratio = delta / omega;
                acc.add(w * (c * c + ratio * ratio * s * s));
            }
            acc.value()
        })
        .collect();
    TimeSeries::new(t_grid.to_vec(), values, meta)
}

/// Poisson weights `e^{-b²} b^{2n}/n!` truncated once the retained mass is
/// within `1e-13` of one.
pub fn poisson_weights(b: f64) -> Vec<f64> {
    if b == 0.0 {
        return vec![1.0];
    }
    let mean = b * b;
    let mut out = Vec::new();
    let mut acc = CompensatedSum::<f64>::default();
    let mut n = 0usize;
    loop {
        let w = (-mean + 2.0 * n as f64 * b.ln() - log_factorial(n)).exp();
        out.push(w);
        acc.add(w);
        if n as f64 > mean && 1.0 - acc.value() < 1e-13 {
            return out;
        }
        n += 1;
    }
}

/// Ground-state probability of the ordinary model with a coherent field of
/// amplitude `b` and no squeezing.
pub fn ground_prob_jcm(b: f64, lambda: f64, t_grid: &[f64]) -> Result<TimeSeries> {
    if !(b >= 0.0 && b.is_finite()) {
        return Err(Error::domain(format!("ground_prob_jcm: b must be >= 0, got {b}")));
    }
    let meta = ModelParams::aligned(0.0, b, 0.0, 0.0)?.with_coupling(lambda, 0.0)?;
    let weights = poisson_weights(b);
    let coefficients = weights.iter().map(|w| Complex64::new(w.sqrt(), 0.0)).collect();
    let series = AmplitudeSeries::new(coefficients, 0.0, crate::states::SeriesSource::AnalyticAligned);
    ground_prob(&series, lambda, t_grid, meta)
}

/// Form of the interaction Hamiltonian used for direct integration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HamiltonianForm {
    /// Exact rewrite in photon operators, including counter-rotating and
    /// atom-exchange terms.
    #[default]
    Full,
    /// Large-squeezing limit with `sinh r ≈ cosh r ≈ e^r/2`, `φ = π`, `α = 0`:
    /// `(Δ/2)σ₃ − iλ(e^r/2)(σ₊ + σ₋)(â − â†)`.
    Ultrastrong,
}

/// Interaction Hamiltonian on `{|1⟩, |2⟩} ⊗ {|0⟩..|N−1⟩}`, stored through the
/// field operator `B` it couples: `H = [[−Δ/2, iλB†], [−iλB, Δ/2]]`.
#[derive(Debug, Clone)]
pub struct JointHamiltonian {
    dim: usize,
    lambda: f64,
    delta: f64,
    b: BandedOp,
    bd: BandedOp,
}

impl JointHamiltonian {
    pub fn new(params: &ModelParams, dim: usize, form: HamiltonianForm) -> Self {
        let b = match form {
            HamiltonianForm::Full => crate::fock::bogoliubov_banded(params.alpha(), params.zeta(), dim).0,
            HamiltonianForm::Ultrastrong => {
                let g = 0.5 * params.r().exp();
                BandedOp::annihilation(dim)
                    .scale(Complex64::new(g, 0.0))
                    .add(&BandedOp::creation(dim).scale(Complex64::new(-g, 0.0)))
            }
        };
        let bd = b.adjoint();
        JointHamiltonian {
            dim,
            lambda: params.lambda(),
            delta: params.delta(),
            b,
            bd,
        }
    }

    /// Fock dimension per atomic level.
    pub fn field_dim(&self) -> usize {
        self.dim
    }
}

impl LinearOp for JointHamiltonian {
    fn dim(&self) -> usize {
        2 * self.dim
    }

    fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        let n = self.dim;
        let (x1, x2) = x.split_at(n);
        let (y1, y2) = y.split_at_mut(n);
        for (o, v) in y1.iter_mut().zip(x1) {
            *o = -0.5 * self.delta * v;
        }
        self.bd.apply_add(x2, I * self.lambda, y1);
        for (o, v) in y2.iter_mut().zip(x2) {
            *o = 0.5 * self.delta * v;
        }
        self.b.apply_add(x1, -I * self.lambda, y2);
    }

    fn spectral_bounds(&self) -> (f64, f64) {
        let r1 = self.bd.row_abs_sums();
        let r2 = self.b.row_abs_sums();
        let half = 0.5 * self.delta;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (c, rows) in [(-half, &r1), (half, &r2)] {
            for r in rows.iter() {
                lo = lo.min(c - self.lambda * r);
                hi = hi.max(c + self.lambda * r);
            }
        }
        (lo, hi)
    }
}

/// Dense `2N × 2N` Hamiltonian, index `s·N + n` for atomic level `s`
/// (0 ground, 1 excited) and photon number `n < N = spec.retained`.
pub fn hamiltonian_matrix(params: &ModelParams, spec: TruncationSpec) -> FockMatrix {
    hamiltonian_matrix_form(params, spec, HamiltonianForm::Full)
}

pub fn hamiltonian_matrix_form(params: &ModelParams, spec: TruncationSpec, form: HamiltonianForm) -> FockMatrix {
    let h = JointHamiltonian::new(params, spec.retained(), form);
    let n = 2 * h.field_dim();
    let mut m = DMatrix::<Complex64>::zeros(n, n);
    let mut e = vec![ZERO; n];
    let mut col = vec![ZERO; n];
    for j in 0..n {
        e[j] = ONE;
        h.apply(&e, &mut col);
        e[j] = ZERO;
        for i in 0..n {
            m[(i, j)] = col[i];
        }
    }
    FockMatrix::from_entries(m)
}

/// Coherent amplitudes `e^{-|β|²/2} β^n/√n!` for `n < dim`.
pub fn coherent_amplitudes(beta: Complex64, dim: usize) -> Vec<Complex64> {
    let b = beta.norm();
    (0..dim)
        .map(|n| {
            if b == 0.0 {
                return if n == 0 { ONE } else { ZERO };
            }
            let mag = (-0.5 * b * b + n as f64 * b.ln() - 0.5 * log_factorial(n)).exp();
            Complex64::from_polar(mag, n as f64 * beta.arg())
        })
        .collect()
}

/// Time stepping scheme for [`evolve_with`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Integrator {
    /// Chebyshev expansion of the propagator between consecutive samples.
    #[default]
    Chebyshev,
    /// Classical fourth-order Runge-Kutta with step `λ·dt`.
    Rk4 { dt: f64 },
}

/// Controls for direct integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolveOptions {
    pub form: HamiltonianForm,
    pub integrator: Integrator,
    /// Fraction of the highest Fock levels monitored for leakage.
    pub edge_fraction: f64,
    pub edge_tolerance: f64,
    pub max_retained: usize,
    /// Allowed `|‖ψ‖² − 1|` per unit `λt`.
    pub norm_drift_rate: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            form: HamiltonianForm::Full,
            integrator: Integrator::Chebyshev,
            edge_fraction: 0.1,
            edge_tolerance: 1e-8,
            max_retained: 2048,
            norm_drift_rate: 1e-9,
        }
    }
}

/// Result of [`evolve_with`] with the diagnostics of the accepted run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolveReport {
    pub series: TimeSeries,
    /// Fock dimension of the accepted run.
    pub retained: usize,
    /// Dimensions abandoned because the state reached the Fock ceiling.
    pub escalations: Vec<usize>,
    pub max_edge_population: f64,
    pub max_norm_drift: f64,
}

/// Ground-state probability by direct integration from `D̂(β)|0⟩|1⟩`.
pub fn evolve(params: &ModelParams, spec: TruncationSpec, t_grid: &[f64]) -> Result<TimeSeries> {
    Ok(evolve_with(params, spec, t_grid, &EvolveOptions::default())?.series)
}

enum RunOutcome {
    Done { values: Vec<f64>, edge: f64, drift: f64 },
    Breach { edge: f64, at: f64 },
}

fn edge_population(psi: &[Complex64], dim: usize, fraction: f64) -> f64 {
    let start = dim - ((dim as f64 * fraction).ceil() as usize).clamp(1, dim);
    norm_sqr(&psi[start..dim]) + norm_sqr(&psi[dim + start..])
}

/// Evolves the state through `t_grid`, calling `visit(index, λt, ψ)` at each
/// sample; `ψ` is laid out as `[c1; c2]`.
pub(crate) fn propagate_samples(
    h: &JointHamiltonian,
    lambda: f64,
    integrator: Integrator,
    psi: &mut [Complex64],
    t_grid: &[f64],
    mut visit: impl FnMut(usize, f64, &[Complex64]) -> bool,
) -> Result<()> {
    let mut now = 0.0f64;
    let mut work: [Vec<Complex64>; 5] = std::array::from_fn(|_| vec![ZERO; psi.len()]);
    let mut cached: Option<(f64, Chebyshev<JointHamiltonian>)> = None;
    for (i, lt) in t_grid.iter().enumerate() {
        let span = (lt - now) / lambda;
        if span > 0.0 {
            match integrator {
                Integrator::Chebyshev => {
                    let reuse = matches!(&cached, Some((dt, _)) if (dt - span).abs() <= 1e-12 * span);
                    if !reuse {
                        cached = Some((span, Chebyshev::new(h, span)?));
                    }
                    cached.as_mut().expect("propagator prepared").1.step(psi);
                }
                Integrator::Rk4 { dt } => {
                    if !(dt > 0.0) {
                        return Err(Error::domain("rk4 step must be > 0"));
                    }
                    let steps = (span * lambda / dt).ceil().max(1.0) as usize;
                    let h_dt = span / steps as f64;
                    for _ in 0..steps {
                        rk4_step(h, h_dt, psi, &mut work);
                    }
                }
            }
        }
        now = *lt;
        if !visit(i, *lt, psi) {
            break;
        }
    }
    Ok(())
}

fn run_once(params: &ModelParams, dim: usize, t_grid: &[f64], opts: &EvolveOptions) -> Result<RunOutcome> {
    let h = JointHamiltonian::new(params, dim, opts.form);
    let mut psi = coherent_amplitudes(params.beta(), dim);
    psi.extend(std::iter::repeat_n(ZERO, dim));
    let mut values = Vec::with_capacity(t_grid.len());
    let mut edge_max = 0.0f64;
    let mut drift_max = 0.0f64;
    let mut breach = None;
    let initial = norm_sqr(&psi);
    propagate_samples(&h, params.lambda(), opts.integrator, &mut psi, t_grid, |_, lt, psi| {
        let edge = edge_population(psi, dim, opts.edge_fraction);
        edge_max = edge_max.max(edge);
        if edge > opts.edge_tolerance {
            breach = Some((edge, lt));
            return false;
        }
        drift_max = drift_max.max((norm_sqr(psi) - initial).abs() / lt.max(1.0));
        values.push(norm_sqr(&psi[..dim]).clamp(0.0, 1.0));
        true
    })?;
    if let Some((edge, at)) = breach {
        return Ok(RunOutcome::Breach { edge, at });
    }
    Ok(RunOutcome::Done {
        values,
        edge: edge_max,
        drift: drift_max,
    })
}

/// Direct integration with leakage monitoring: when the population of the top
/// `edge_fraction` of Fock levels exceeds `edge_tolerance` at a sample, the
/// dimension doubles (up to `max_retained`) and the run restarts.
pub fn evolve_with(params: &ModelParams, spec: TruncationSpec, t_grid: &[f64], opts: &EvolveOptions) -> Result<EvolveReport> {
    check_grid(t_grid)?;
    let mut dim = spec.retained();
    let mut escalations = Vec::new();
    loop {
        match run_once(params, dim, t_grid, opts)? {
            RunOutcome::Done { values, edge, drift } => {
                if drift > opts.norm_drift_rate {
                    return Err(Error::Convergence {
                        context: format!("evolve: norm drift {drift:.3e} per unit time"),
                        terms_used: t_grid.len(),
                        tail_estimate: drift,
                        partial: values.last().copied().unwrap_or(f64::NAN),
                    });
                }
                let series = TimeSeries::new(t_grid.to_vec(), values, *params)?;
                return Ok(EvolveReport {
                    series,
                    retained: dim,
                    escalations,
                    max_edge_population: edge,
                    max_norm_drift: drift,
                });
            }
            RunOutcome::Breach { edge, at } => {
                if dim >= opts.max_retained {
                    return Err(Error::Truncation {
                        context: format!("evolve: Fock ceiling {dim} reached at lambda*t = {at}"),
                        measured: edge,
                        tolerance: opts.edge_tolerance,
                    });
                }
                log::info!("evolve: edge population {edge:.2e} at lambda*t = {at}; dimension {dim} -> {}", (2 * dim).min(opts.max_retained));
                escalations.push(dim);
                dim = (2 * dim).min(opts.max_retained);
            }
        }
    }
}

/// Ground-state probability under the large-squeezing Hamiltonian
/// `(Δ/2)σ₃ + g σ_x K̂` with `K̂ = i(â† − â)` and `g = λe^r/2`.
///
/// `K̂` is diagonal on its quadrature eigenbasis, where the coherent initial
/// field has a Gaussian density of mean `2 Im β` and unit variance, so every
/// quadrature value evolves as an independent two-level system. The density
/// is integrated with the trapezoidal rule on a grid fine enough to resolve
/// the `cos(2 g t k)` oscillation at the latest time.
pub fn evolve_quadrature(params: &ModelParams, t_grid: &[f64]) -> Result<TimeSeries> {
    check_grid(t_grid)?;
    let lambda = params.lambda();
    let g = 0.5 * lambda * params.r().exp();
    let delta = params.delta();
    let mean = 2.0 * params.beta().im;
    let t_end = t_grid.last().copied().unwrap_or(0.0) / lambda;
    let bandwidth = 2.0 * g * t_end + delta.abs() * t_end + 10.0;
    let half_range = 12.0;
    let h = (2.0 * PI / (bandwidth + 20.0)).min(0.05);
    let points = (2.0 * half_range / h).ceil() as usize + 1;
    let h = 2.0 * half_range / (points - 1) as f64;
    let nodes: Vec<(f64, f64)> = (0..points)
        .map(|i| {
            let k = mean - half_range + i as f64 * h;
            let x = k - mean;
            let w = if i == 0 || i == points - 1 { 0.5 } else { 1.0 };
            (k, w * h * (-0.5 * x * x).exp() / (2.0 * PI).sqrt())
        })
        .collect();
    let values: Vec<f64> = t_grid
        .par_iter()
        .map(|lt| {
            let t = lt / lambda;
            let mut acc = CompensatedSum::<f64>::default();
            for (k, w) in &nodes {
                let omega = ((0.5 * delta).powi(2) + (g * k).powi(2)).sqrt();
                if omega == 0.0 {
                    acc.add(*w);
                    continue;
                }
                let (s, c) = (omega * t).sin_cos();
                let ratio = 0.5 * delta / omega;
                acc.add(w * (c * c + ratio * ratio * s * s));
            }
            acc.value().clamp(0.0, 1.0)
        })
        .collect();
    TimeSeries::new(t_grid.to_vec(), values, *params)
}

/// Largest residual of `c̈_n = −λ²(2n+1)c_n + λ²√((n+1)(n+2))c_{n+2} +
/// λ²√(n(n−1))c_{n−2}` (both atomic levels, `n ≤ 0.8 N`) along a direct
/// integration of the large-squeezing Hamiltonian, with `c̈` from centred
/// second differences of step `dt_inner` (in units of `1/λ`) around each
/// sample of `t_grid`.
pub fn nonrwa_residual(params: &ModelParams, spec: TruncationSpec, t_grid: &[f64], dt_inner: f64) -> Result<f64> {
    let ln2 = 2f64.ln();
    if (params.r() - ln2).abs() > 1e-12 || params.delta() != 0.0 || params.a() != 0.0 || (params.phi() - PI).abs() > 1e-12 {
        return Err(Error::domain("nonrwa_residual needs r = ln 2, delta = 0, a = 0 and phi = pi"));
    }
    if !(dt_inner > 0.0) {
        return Err(Error::domain("nonrwa_residual: dt_inner must be > 0"));
    }
    check_grid(t_grid)?;
    let dim = spec.retained();
    let lambda = params.lambda();
    let h = JointHamiltonian::new(params, dim, HamiltonianForm::Ultrastrong);
    let mut psi = coherent_amplitudes(params.beta(), dim);
    psi.extend(std::iter::repeat_n(ZERO, dim));
    let dt = dt_inner / lambda;
    let mut forward = Chebyshev::new(&h, dt)?;
    let mut backward = Chebyshev::new(&h, -dt)?;
    let rows = ((0.8 * dim as f64).floor() as usize).min(dim.saturating_sub(3));
    let l2 = lambda * lambda;
    let mut worst = 0.0f64;
    let mut edge = 0.0f64;
    propagate_samples(&h, lambda, Integrator::Chebyshev, &mut psi, t_grid, |_, _, psi| {
        let mut plus = psi.to_vec();
        forward.step(&mut plus);
        let mut minus = psi.to_vec();
        backward.step(&mut minus);
        edge = edge.max(edge_population(psi, dim, 0.1));
        for level in 0..2 {
            let off = level * dim;
            let c = |n: usize| psi[off + n];
            for n in 0..=rows {
                let second = (plus[off + n] - 2.0 * c(n) + minus[off + n]) / (dt * dt);
                let mut rhs = -l2 * (2 * n + 1) as f64 * c(n) + l2 * (((n + 1) * (n + 2)) as f64).sqrt() * c(n + 2);
                if n >= 2 {
                    rhs += l2 * ((n * (n - 1)) as f64).sqrt() * c(n - 2);
                }
                worst = worst.max((second - rhs).norm());
            }
        }
        true
    })?;
    if edge > 1e-8 {
        return Err(Error::Truncation {
            context: format!("nonrwa_residual: dimension {dim} too small"),
            measured: edge,
            tolerance: 1e-8,
        });
    }
    Ok(worst)
}

/// Minimum window width accepted by [`longtime_average`], in units of `λt`.
pub const MIN_AVERAGE_WINDOW: f64 = 10.0;

/// Trapezoidal mean of the series over `[t_lo, t_hi]`.
pub fn longtime_average(series: &TimeSeries, window: (f64, f64)) -> Result<f64> {
    let (lo, hi) = window;
    let first = series.times[0];
    let last = *series.times.last().expect("non-empty series");
    if !(lo >= first && hi <= last && hi > lo) {
        return Err(Error::domain(format!(
            "averaging window [{lo}, {hi}] outside the series range [{first}, {last}]"
        )));
    }
    if hi - lo < MIN_AVERAGE_WINDOW {
        return Err(Error::domain(format!(
            "averaging window width {} is shorter than {MIN_AVERAGE_WINDOW}",
            hi - lo
        )));
    }
    let interp = |t: f64| -> f64 {
        let idx = series.times.partition_point(|x| *x <= t).clamp(1, series.times.len() - 1);
        let (t0, t1) = (series.times[idx - 1], series.times[idx]);
        let (v0, v1) = (series.values[idx - 1], series.values[idx]);
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    };
    let mut knots = vec![(lo, interp(lo))];
    knots.extend(
        series
            .times
            .iter()
            .zip(&series.values)
            .filter(|(t, _)| **t > lo && **t < hi)
            .map(|(t, v)| (*t, *v)),
    );
    knots.push((hi, interp(hi)));
    let mut acc = CompensatedSum::<f64>::default();
    for w in knots.windows(2) {
        acc.add(0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1));
    }
    Ok(acc.value() / (hi - lo))
}

/// Collapse and first revival located on a sampled curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RevivalFeatures {
    /// Time at which the oscillation envelope first reaches a local minimum.
    pub collapse_time: f64,
    /// Time of the largest probability inside the first revival packet.
    pub revival_time: f64,
    pub revival_value: f64,
}

/// Finds the first revival of a collapse/revival curve.
///
/// The oscillation envelope is the running maximum of `|P − ½|` over one
/// window, smoothed by a running mean of the same width, where the window is
/// two periods of the Rabi frequency at the mean photon number `mean_n`. The
/// collapse is the first local minimum of the smoothed envelope, the revival
/// packet extends from there to the next local minimum after the following
/// maximum, and the revival time is where `P` peaks inside that packet.
pub fn first_revival(series: &TimeSeries, mean_n: f64, lambda: f64) -> Option<RevivalFeatures> {
    let t = &series.times;
    let p = &series.values;
    if t.len() < 5 || !(mean_n > 0.0) {
        return None;
    }
    let step = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
    let window = 2.0 * PI / (lambda * mean_n.sqrt());
    let half = ((0.5 * window / step).round() as usize).max(1);
    let dev: Vec<f64> = p.iter().map(|v| (v - 0.5).abs()).collect();
    let around = |i: usize| i.saturating_sub(half)..(i + half + 1).min(t.len());
    let env: Vec<f64> = (0..t.len()).map(|i| dev[around(i)].iter().copied().fold(0.0, f64::max)).collect();
    let smooth: Vec<f64> = (0..t.len())
        .map(|i| {
            let r = around(i);
            let n = r.len() as f64;
            env[r].iter().sum::<f64>() / n
        })
        .collect();
    let is_min = |i: usize| smooth[i] <= smooth[i - 1] && smooth[i] <= smooth[i + 1];
    let is_max = |i: usize| smooth[i] >= smooth[i - 1] && smooth[i] >= smooth[i + 1];
    let i0 = (1..t.len() - 1).find(|&i| is_min(i))?;
    let i1 = (i0 + 1..t.len() - 1).find(|&i| is_max(i) && smooth[i] > smooth[i0])?;
    let i2 = (i1 + 1..t.len() - 1).find(|&i| is_min(i)).unwrap_or(t.len() - 1);
    let (j, v) = (i0..=i2).map(|j| (j, p[j])).fold((i0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    Some(RevivalFeatures {
        collapse_time: t[i0],
        revival_time: t[j],
        revival_value: v,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::{build_series, SeriesSource};

    fn single_mode(n: usize) -> AmplitudeSeries {
        let mut c = vec![ZERO; n + 1];
        c[n] = ONE;
        AmplitudeSeries::new(c, 0.0, SeriesSource::AnalyticAligned)
    }

    #[test]
    fn rabi_frequency_examples() {
        assert_eq!(rabi_freq(0, 1.0, -3.0), 3.0);
        assert_eq!(rabi_freq(4, 1.0, 0.0), 4.0);
        assert_eq!(rabi_freq(4, 1.0, 3.0), 5.0);
    }

    #[test]
    fn analytic_amplitudes_initial_and_transfer() {
        let p = ModelParams::aligned(10.0, 2.0, 0.1, 0.0).unwrap();
        let s = build_series(&p, 1e-8).unwrap();
        let st = amplitudes_analytic(&s, 1.0, 0.0, 0.0);
        assert_eq!(st.c1, s.coefficients);
        assert!(st.c2.iter().all(|c| c.norm() == 0.0));

        let one = single_mode(1);
        let t = PI / rabi_freq(1, 1.0, 0.0);
        let st = amplitudes_analytic(&one, 1.0, 0.0, t);
        assert!((st.c2[0].norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn analytic_amplitudes_conserve_norm_and_excitations() {
        let p = ModelParams::aligned(10.0, 2.0, 0.1, 0.0).unwrap();
        let s = build_series(&p, 1e-8).unwrap();
        let n0 = amplitudes_analytic(&s, 1.0, 0.0, 0.0);
        for delta in [0.0, 0.7] {
            let st = amplitudes_analytic(&s, 1.0, delta, 5.0);
            assert!((st.norm_sqr() - n0.norm_sqr()).abs() < 1e-9);
            assert!((st.excitation_number() - n0.excitation_number()).abs() < 1e-8);
        }
    }

    #[test]
    fn vacuum_sector_is_pure_phase() {
        let st = amplitudes_analytic(&single_mode(0), 1.0, 0.8, 2.0);
        assert!((st.c1[0] - Complex64::from_polar(1.0, 0.8)).norm() < 1e-15);
        assert!(st.c2.is_empty());
    }

    #[test]
    fn detuned_two_level_matches_direct_integration() {
        let (lambda, delta) = (1.0, 0.9);
        let omega = rabi_freq(1, lambda, delta);
        let series = single_mode(1);
        // Direct 2×2 integration of the amplitude equations for (c_{1,1}, c_{2,0}).
        let mut y = [ONE, ZERO];
        let f = |y: [Complex64; 2]| {
            [
                I * delta / 2.0 * y[0] + lambda * y[1],
                -I * delta / 2.0 * y[1] - lambda * y[0],
            ]
        };
        let dt = 1e-3;
        let mut t = 0.0;
        for _ in 0..3000 {
            let k1 = f(y);
            let k2 = f([y[0] + 0.5 * dt * k1[0], y[1] + 0.5 * dt * k1[1]]);
            let k3 = f([y[0] + 0.5 * dt * k2[0], y[1] + 0.5 * dt * k2[1]]);
            let k4 = f([y[0] + dt * k3[0], y[1] + dt * k3[1]]);
            for i in 0..2 {
                y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            t += dt;
            let st = amplitudes_analytic(&series, lambda, delta, t);
            let closed = (0.5 * omega * t).cos().powi(2) + (delta / omega).powi(2) * (0.5 * omega * t).sin().powi(2);
            assert!((st.ground_population() - y[0].norm_sqr()).abs() < 1e-10);
            assert!((closed - y[0].norm_sqr()).abs() < 1e-10);
        }
    }

    #[test]
    fn ground_prob_examples() {
        let grid = uniform_grid(30.0, 301).unwrap();
        let vac = ModelParams::default();
        let s = build_series(&vac, 1e-8).unwrap();
        let ts = ground_prob(&s, 1.0, &grid, vac).unwrap();
        assert!(ts.values.iter().all(|v| (v - 1.0).abs() < 1e-15));
        let jcm = ground_prob_jcm(0.0, 1.0, &grid).unwrap();
        assert!(jcm.values.iter().all(|v| (v - 1.0).abs() < 1e-15));
        let jcm2 = ground_prob_jcm(2.0, 1.0, &grid).unwrap();
        assert!((jcm2.values[0] - 1.0).abs() < 1e-10);
        let p = ModelParams::aligned(0.0, 5.0, 0.9, 0.0).unwrap();
        let s = build_series(&p, 1e-8).unwrap();
        let ts = ground_prob(&s, 1.0, &grid, p).unwrap();
        assert!((ts.values[0] - 1.0).abs() <= s.tail_mass + 1e-12);
    }

    #[test]
    fn detuned_ground_prob_reduces_to_resonant() {
        let p = ModelParams::aligned(10.0, 2.0, 0.1, 0.0).unwrap();
        let s = build_series(&p, 1e-8).unwrap();
        let grid = uniform_grid(10.0, 101).unwrap();
        let a = ground_prob(&s, 1.0, &grid, p).unwrap();
        let b = ground_prob_detuned(&s, 1.0, 0.0, &grid, p).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-13);
    }

    #[test]
    fn hamiltonian_structure() {
        let spec = TruncationSpec::with_retained(12).unwrap();
        let p = ModelParams::new(1.3, 0.4, 0.7, 2.0, 1.0, 0.3, 1.2, 0.5).unwrap();
        let h = hamiltonian_matrix(&p, spec);
        assert!(h.hermiticity_residual() < 1e-12);

        let jcm = ModelParams::new(0.0, 0.0, 0.0, 0.0, 2.0, 0.0, 1.0, 0.0).unwrap();
        let h = hamiltonian_matrix(&jcm, spec);
        let n = 12;
        for i in 0..2 * n {
            for j in 0..2 * n {
                let (si, ni) = (i / n, i % n);
                let (sj, nj) = (j / n, j % n);
                let allowed = (si == 0 && sj == 1 && ni == nj + 1) || (si == 1 && sj == 0 && nj == ni + 1);
                if !allowed {
                    assert_eq!(h.get(i, j).norm(), 0.0, "({i},{j})");
                }
            }
        }
    }

    #[test]
    fn ultrastrong_form_is_large_squeezing_limit() {
        let spec = TruncationSpec::with_retained(16).unwrap();
        let p = ModelParams::new(0.0, 0.0, 3.0, PI, 1.0, 0.0, 1.0, 0.0).unwrap();
        let full = hamiltonian_matrix(&p, spec);
        let approx = hamiltonian_matrix_form(&p, spec, HamiltonianForm::Ultrastrong);
        let scale = approx.entries().iter().map(|z| z.norm()).fold(0.0, f64::max);
        let rel = full.max_abs_diff(&approx) / scale;
        let expected = (-6.0f64).exp();
        assert!(rel > 0.5 * expected && rel < 2.0 * expected, "{rel}");
    }

    #[test]
    fn evolve_jcm_matches_poisson_series() {
        let p = ModelParams::aligned(0.0, 2.0, 0.0, 0.0).unwrap();
        let grid = uniform_grid(30.0, 601).unwrap();
        let ev = evolve(&p, TruncationSpec::with_retained(64).unwrap(), &grid).unwrap();
        let jcm = ground_prob_jcm(2.0, 1.0, &grid).unwrap();
        assert!((ev.values[0] - 1.0).abs() < 1e-12);
        assert!(ev.max_abs_diff(&jcm) < 1e-6);
    }

    #[test]
    fn evolve_rk4_agrees_with_chebyshev() {
        let p = ModelParams::aligned(1.0, 1.0, 0.2, 0.3).unwrap();
        let grid = uniform_grid(3.0, 31).unwrap();
        let spec = TruncationSpec::with_retained(64).unwrap();
        let a = evolve(&p, spec, &grid).unwrap();
        let opts = EvolveOptions {
            integrator: Integrator::Rk4 { dt: 1e-3 },
            ..EvolveOptions::default()
        };
        let b = evolve_with(&p, spec, &grid, &opts).unwrap();
        assert!(a.max_abs_diff(&b.series) < 1e-9);
    }

    #[test]
    fn evolve_escalates_on_edge_breach() {
        let p = ModelParams::aligned(0.0, 2.0, 0.0, 0.0).unwrap();
        let grid = uniform_grid(5.0, 11).unwrap();
        let opts = EvolveOptions {
            max_retained: 64,
            ..EvolveOptions::default()
        };
        let r = evolve_with(&p, TruncationSpec::new(16, 80).unwrap(), &grid, &opts).unwrap();
        assert_eq!(r.escalations, vec![16]);
        assert_eq!(r.retained, 32);
        let opts = EvolveOptions {
            max_retained: 16,
            ..EvolveOptions::default()
        };
        let err = evolve_with(&p, TruncationSpec::new(16, 80).unwrap(), &grid, &opts).unwrap_err();
        assert!(matches!(err, Error::Truncation { .. }));
    }

    #[test]
    fn quadrature_route_matches_fock_route_early() {
        for (r, chi, delta) in [(2.3, 0.0, 0.0), (1.0, 0.7, 0.4)] {
            let p = ModelParams::new(0.0, 0.0, r, PI, 1.0, chi, 1.0, delta).unwrap();
            let grid = uniform_grid(1.0, 41).unwrap();
            let q = evolve_quadrature(&p, &grid).unwrap();
            let opts = EvolveOptions {
                form: HamiltonianForm::Ultrastrong,
                ..EvolveOptions::default()
            };
            let f = evolve_with(&p, TruncationSpec::with_retained(512).unwrap(), &grid, &opts).unwrap();
            assert!(q.max_abs_diff(&f.series) < 1e-10, "r={r}: {}", q.max_abs_diff(&f.series));
        }
    }

    #[test]
    fn longtime_average_examples() {
        let grid = uniform_grid(100.0, 10001).unwrap();
        let meta = ModelParams::default();
        let ones = TimeSeries::new(grid.clone(), vec![1.0; grid.len()], meta).unwrap();
        assert!((longtime_average(&ones, (10.0, 90.0)).unwrap() - 1.0).abs() < 1e-15);
        let omega = 3.7;
        let rabi: Vec<f64> = grid.iter().map(|t| 0.5 * (1.0 + (omega * t).cos())).collect();
        let ts = TimeSeries::new(grid, rabi, meta).unwrap();
        let m = longtime_average(&ts, (10.0, 90.0)).unwrap();
        assert!((m - 0.5).abs() < 1.0 / (omega * 80.0));
        assert!(longtime_average(&ts, (10.0, 15.0)).is_err());
        assert!(longtime_average(&ts, (10.0, 150.0)).is_err());
    }

    #[test]
    fn revival_detector_on_coherent_curves() {
        for b in [2.0f64, 5.0] {
            let grid = uniform_grid(12.0 * b, (1200.0 * b) as usize + 1).unwrap();
            let ts = ground_prob_jcm(b, 1.0, &grid).unwrap();
            let f = first_revival(&ts, b * b, 1.0).unwrap();
            assert!((f.revival_time - 2.0 * PI * b).abs() < 2.0, "b={b}: {f:?}");
            assert!(f.collapse_time < f.revival_time);
        }
    }

    #[test]
    fn nonrwa_residual_regime_and_order() {
        let p = ModelParams::new(0.0, 0.0, 2f64.ln(), PI, 1.0, 0.0, 1.0, 0.0).unwrap();
        let spec = TruncationSpec::with_retained(128).unwrap();
        let grid = [0.5, 1.0, 1.5];
        let r1 = nonrwa_residual(&p, spec, &grid, 1e-3).unwrap();
        let r2 = nonrwa_residual(&p, spec, &grid, 5e-4).unwrap();
        assert!(r1 < 1e-4);
        let ratio = r1 / r2;
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
        let wrong = ModelParams::new(0.0, 0.0, 0.5, PI, 1.0, 0.0, 1.0, 0.0).unwrap();
        assert!(nonrwa_residual(&wrong, spec, &grid, 1e-3).is_err());
    }
}
