//! Model parameters and the expansion coefficients `b_n` of a coherent initial
//! field over the n-photon squeezed coherent basis `|ζ, α, n⟩`.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specfun::{log_factorial, weighted_poly_column, CompensatedSum, SeriesOptions, StoppingRule};

/// Below this `|γ - α|` the closed form is singular and the squeezed-vacuum
/// limit is used instead.
pub const DEGENERACY_THRESHOLD: f64 = 1e-8;
pub const DEFAULT_TAIL_TARGET: f64 = 1e-8;
pub const DEFAULT_N_MAX_CAP: usize = 4096;
const ALIGNMENT_TOLERANCE: f64 = 1e-12;

fn reduce_phase(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Distance between two angles on the circle.
fn circular_distance(x: f64, y: f64) -> f64 {
    let d = (x - y).rem_euclid(TAU);
    d.min(TAU - d)
}

/// Physical parameters of the model with `ħ = 1`.
///
/// `α = a e^{iθ}` displaces and `ζ = r e^{iφ}` squeezes the photon operators,
/// `β = b e^{iχ}` is the initial coherent amplitude, `lambda` the coupling and
/// `delta` the detuning. Phases are kept reduced to `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct ModelParams {
    a: f64,
    theta: f64,
    r: f64,
    phi: f64,
    b: f64,
    chi: f64,
    lambda: f64,
    delta: f64,
}

/// Unvalidated parameter record; every field defaults (`lambda` to 1, the rest
/// to 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawParams {
    pub a: f64,
    pub theta: f64,
    pub r: f64,
    pub phi: f64,
    pub b: f64,
    pub chi: f64,
    pub lambda: f64,
    pub delta: f64,
}

impl Default for RawParams {
    fn default() -> Self {
        RawParams {
            a: 0.0,
            theta: 0.0,
            r: 0.0,
            phi: 0.0,
            b: 0.0,
            chi: 0.0,
            lambda: 1.0,
            delta: 0.0,
        }
    }
}

impl TryFrom<RawParams> for ModelParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        let finite = [
            ("a", raw.a),
            ("theta", raw.theta),
            ("r", raw.r),
            ("phi", raw.phi),
            ("b", raw.b),
            ("chi", raw.chi),
            ("lambda", raw.lambda),
            ("delta", raw.delta),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::domain(format!("parameter {name} must be finite, got {v}")));
            }
        }
        for (name, v) in [("a", raw.a), ("b", raw.b), ("r", raw.r)] {
            if v < 0.0 {
                return Err(Error::domain(format!("parameter {name} must be >= 0, got {v}")));
            }
        }
        if raw.lambda <= 0.0 {
            return Err(Error::domain(format!("parameter lambda must be > 0, got {}", raw.lambda)));
        }
        Ok(ModelParams {
            a: raw.a,
            theta: reduce_phase(raw.theta),
            r: raw.r,
            phi: reduce_phase(raw.phi),
            b: raw.b,
            chi: reduce_phase(raw.chi),
            lambda: raw.lambda,
            delta: raw.delta,
        })
    }
}

impl From<ModelParams> for RawParams {
    fn from(p: ModelParams) -> Self {
        RawParams {
            a: p.a,
            theta: p.theta,
            r: p.r,
            phi: p.phi,
            b: p.b,
            chi: p.chi,
            lambda: p.lambda,
            delta: p.delta,
        }
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams::try_from(RawParams::default()).expect("defaults are valid")
    }
}

impl ModelParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(a: f64, theta: f64, r: f64, phi: f64, b: f64, chi: f64, lambda: f64, delta: f64) -> Result<Self> {
        RawParams {
            a,
            theta,
            r,
            phi,
            b,
            chi,
            lambda,
            delta,
        }
        .try_into()
    }

    /// Phase-aligned parameters (`θ = χ`, `φ = 2χ`) with `λ = 1`, `Δ = 0`.
    pub fn aligned(a: f64, b: f64, r: f64, chi: f64) -> Result<Self> {
        Self::new(a, chi, r, 2.0 * chi, b, chi, 1.0, 0.0)
    }

    pub fn with_coupling(mut self, lambda: f64, delta: f64) -> Result<Self> {
        self.lambda = lambda;
        self.delta = delta;
        RawParams::from(self).try_into()
    }

    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn theta(&self) -> f64 {
        self.theta
    }
    pub fn r(&self) -> f64 {
        self.r
    }
    pub fn phi(&self) -> f64 {
        self.phi
    }
    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn chi(&self) -> f64 {
        self.chi
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn alpha(&self) -> Complex64 {
        Complex64::from_polar(self.a, self.theta)
    }

    pub fn zeta(&self) -> Complex64 {
        Complex64::from_polar(self.r, self.phi)
    }

    pub fn beta(&self) -> Complex64 {
        Complex64::from_polar(self.b, self.chi)
    }

    /// True when `φ = 2θ = 2χ`, read as `θ = χ` and `φ = 2χ (mod 2π)`.
    ///
    /// A phase whose magnitude is zero does not constrain alignment: `θ` is
    /// free when `a = 0` and `φ` is free when `r = 0`.
    pub fn is_phase_aligned(&self) -> bool {
        let theta_ok = self.a == 0.0 || circular_distance(self.theta, self.chi) < ALIGNMENT_TOLERANCE;
        let phi_ok = self.r == 0.0 || circular_distance(self.phi, 2.0 * self.chi) < ALIGNMENT_TOLERANCE;
        theta_ok && phi_ok
    }

    /// `|γ - α|`, the displacement left after reordering.
    pub fn residual_displacement(&self) -> f64 {
        (gamma_param(self.b, self.chi, self.r, self.phi) - self.alpha()).norm()
    }

    /// Mean of `B̂†B̂` in the initial coherent state: `|γ - α|² + sinh² r`.
    pub fn mean_excitation(&self) -> f64 {
        self.residual_displacement().powi(2) + self.r.sinh().powi(2)
    }
}

/// Where a coefficient vector came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesSource {
    AnalyticAligned,
    AnalyticGeneral,
    NumericOracle,
}

/// Expansion coefficients `b_0..=b_{n_max}` with tail bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeSeries {
    pub n_max: usize,
    pub coefficients: Vec<Complex64>,
    /// Estimated `Σ_{n > n_max} |b_n|²`.
    pub tail_mass: f64,
    pub source: SeriesSource,
}

impl AmplitudeSeries {
    pub fn new(coefficients: Vec<Complex64>, tail_mass: f64, source: SeriesSource) -> Self {
        assert!(!coefficients.is_empty(), "an amplitude series needs at least b_0");
        AmplitudeSeries {
            n_max: coefficients.len() - 1,
            coefficients,
            tail_mass,
            source,
        }
    }

    /// `Σ_{n ≤ n_max} |b_n|²`.
    pub fn retained_mass(&self) -> f64 {
        let mut acc = CompensatedSum::<f64>::default();
        for c in &self.coefficients {
            acc.add(c.norm_sqr());
        }
        acc.value()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.coefficients.iter().map(|c| c.norm_sqr()).collect()
    }
}

/// `γ = β cosh r + β* e^{iφ} sinh r`, the displacement produced by moving
/// `D̂(β)` through `Ŝ(-ζ)`.
pub fn gamma_param(b: f64, chi: f64, r: f64, phi: f64) -> Complex64 {
    gamma_param_signed(b, chi, r, phi, 1.0)
}

pub(crate) fn gamma_param_signed(b: f64, chi: f64, r: f64, phi: f64, sinh_sign: f64) -> Complex64 {
    let beta = Complex64::from_polar(b, chi);
    beta * r.cosh() + sinh_sign * beta.conj() * Complex64::from_polar(r.sinh(), phi)
}

/// Switches used by the validation suite to inject known-wrong variants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Formula {
    pub sinh_sign: f64,
    pub chi_phase: bool,
}

impl Default for Formula {
    fn default() -> Self {
        Formula {
            sinh_sign: 1.0,
            chi_phase: true,
        }
    }
}

/// How the per-`n` series over `l` is organized.
#[derive(Debug, Clone, Copy)]
enum Route {
    /// Phase-aligned closed form: real signed `x = b e^r - a`, overall `e^{iχn}`.
    Aligned { x: f64, chi: f64, apply_chi: bool },
    /// Full-phase closed form with `δ = γ - α = |δ| e^{iψ}`.
    General {
        magnitude: f64,
        psi: f64,
        global_phase: Complex64,
    },
}

fn check_tail_options(opts: &SeriesOptions) -> Result<()> {
    if !(opts.rel_tol > 0.0) || opts.max_terms == 0 {
        return Err(Error::domain("series options need rel_tol > 0 and max_terms >= 1"));
    }
    Ok(())
}

/// Coefficients `b_0..len` of the closed form, one `l`-series per `n`,
/// summed with compensation and the three-small-terms stopping rule.
fn closed_form_coefficients(
    params: &ModelParams,
    route: Route,
    len: usize,
    opts: &SeriesOptions,
) -> Result<Vec<Complex64>> {
    check_tail_options(opts)?;
    let r = params.r;
    let phi = params.phi;
    let (x, n_phase, l_phase, global) = match route {
        Route::Aligned { x, chi, apply_chi } => {
            let chi = if apply_chi { chi } else { 0.0 };
            (x, chi, 0.0, Complex64::new(1.0, 0.0))
        }
        Route::General {
            magnitude,
            psi,
            global_phase,
        } => (magnitude, psi, phi - 2.0 * psi, global_phase),
    };

    if x.abs() < DEGENERACY_THRESHOLD {
        return Ok(squeezed_vacuum_coefficients(r, phi, global, len));
    }

    let x2 = x * x;
    let tanh_r = r.tanh();
    let u = 0.5 * x2 * tanh_r;
    let log_prefactor = -0.5 * r.cosh().ln() - 0.5 * x2;

    let mut acc = vec![CompensatedSum::<Complex64>::default(); len];
    let mut rules = vec![StoppingRule::default(); len];
    let mut done = vec![false; len];
    let mut remaining = len;
    let min_terms = if u > 0.0 { u.ceil() as usize + 1 } else { 1 };

    let mut l = 0usize;
    loop {
        if l >= opts.max_terms {
            let n = done.iter().position(|d| !d).unwrap_or(0);
            let partial = acc[n].value();
            return Err(Error::Convergence {
                context: format!("l-series of b_{n}"),
                terms_used: l,
                tail_estimate: f64::NAN,
                partial: partial.norm(),
            });
        }
        let log_weight = if l == 0 {
            log_prefactor
        } else {
            log_prefactor + l as f64 * u.ln() - log_factorial(l)
        };
        let column = weighted_poly_column(2 * l, x, log_weight, len);
        let rot = Complex64::from_polar(1.0, l as f64 * l_phase);
        for n in 0..len {
            let term = rot * column[n].to_real();
            acc[n].add(term);
            let fired = rules[n].observe(term.norm(), acc[n].value().norm(), opts);
            if !done[n] && fired && l + 1 >= min_terms {
                done[n] = true;
                remaining -= 1;
            }
        }
        l += 1;
        if u == 0.0 || remaining == 0 {
            break;
        }
    }

    Ok(acc
        .iter()
        .enumerate()
        .map(|(n, s)| global * Complex64::from_polar(1.0, n as f64 * n_phase) * s.value())
        .collect())
}

/// `Ŝ(-ζ)|0⟩` in the Fock basis: only even `n` survive,
/// `b_{2k} = √sech r · √((2k)!) / (k! 2^k) · (e^{iφ} tanh r)^k`.
fn squeezed_vacuum_coefficients(r: f64, phi: f64, global: Complex64, len: usize) -> Vec<Complex64> {
    let tanh_r = r.tanh();
    (0..len)
        .map(|n| {
            if n % 2 == 1 {
                return Complex64::new(0.0, 0.0);
            }
            let k = n / 2;
            if k > 0 && tanh_r == 0.0 {
                return Complex64::new(0.0, 0.0);
            }
            let log_mag = -0.5 * r.cosh().ln() + 0.5 * log_factorial(n)
                - log_factorial(k)
                - k as f64 * 2f64.ln()
                + if k > 0 { k as f64 * tanh_r.ln() } else { 0.0 };
            global * Complex64::from_polar(log_mag.exp(), k as f64 * phi)
        })
        .collect()
}

fn aligned_route(params: &ModelParams, formula: Formula) -> Result<Route> {
    if !params.is_phase_aligned() {
        return Err(Error::domain(
            "phase-aligned closed form needs theta = chi and phi = 2 chi; use bn_general",
        ));
    }
    Ok(Route::Aligned {
        x: params.b * params.r.exp() - params.a,
        chi: params.chi,
        apply_chi: formula.chi_phase,
    })
}

fn general_route(params: &ModelParams, formula: Formula) -> Route {
    let alpha = params.alpha();
    let gamma = gamma_param_signed(params.b, params.chi, params.r, params.phi, formula.sinh_sign);
    let delta = gamma - alpha;
    // exp((γα* − αγ*)/2) is a pure phase.
    let exponent = 0.5 * (gamma * alpha.conj() - alpha * gamma.conj());
    Route::General {
        magnitude: delta.norm(),
        psi: if delta.norm() > 0.0 { delta.arg() } else { 0.0 },
        global_phase: Complex64::from_polar(1.0, exponent.im),
    }
}

/// Phase-aligned closed form for `b_0..len`.
pub fn bn_aligned_vec(params: &ModelParams, len: usize, opts: &SeriesOptions) -> Result<Vec<Complex64>> {
    closed_form_coefficients(params, aligned_route(params, Formula::default())?, len, opts)
}

/// Closed form for `b_0..len` through the aligned route when the phases allow
/// it and the general route otherwise.
pub(crate) fn closed_form_vec_with(
    params: &ModelParams,
    len: usize,
    opts: &SeriesOptions,
    formula: Formula,
) -> Result<Vec<Complex64>> {
    let route = if params.is_phase_aligned() {
        aligned_route(params, formula)?
    } else {
        general_route(params, formula)
    };
    closed_form_coefficients(params, route, len, opts)
}

/// Full-phase closed form for `b_0..len`; any phases.
pub fn bn_general_vec(params: &ModelParams, len: usize, opts: &SeriesOptions) -> Result<Vec<Complex64>> {
    closed_form_coefficients(params, general_route(params, Formula::default()), len, opts)
}

/// Single coefficient from the phase-aligned closed form.
pub fn bn_aligned(params: &ModelParams, n: usize) -> Result<Complex64> {
    Ok(bn_aligned_vec(params, n + 1, &SeriesOptions::default())?[n])
}

/// Single coefficient from the full-phase closed form.
pub fn bn_general(params: &ModelParams, n: usize) -> Result<Complex64> {
    Ok(bn_general_vec(params, n + 1, &SeriesOptions::default())?[n])
}

/// Options for [`build_series`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildOptions {
    pub tail_target: f64,
    pub n_max_cap: usize,
    pub series: SeriesOptions,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            tail_target: DEFAULT_TAIL_TARGET,
            n_max_cap: DEFAULT_N_MAX_CAP,
            series: SeriesOptions::default(),
        }
    }
}

/// Builds the coefficient vector with `n_max` chosen so that the missing
/// probability `1 - Σ|b_n|²` is below `tail_target`.
///
/// Uses the aligned closed form when the phases allow it, the general one
/// otherwise. `tail_mass` is estimated from coefficients computed past `n_max`
/// plus a geometric extrapolation, not from `1 - Σ`.
pub fn build_series(params: &ModelParams, tail_target: f64) -> Result<AmplitudeSeries> {
    build_series_with(
        params,
        &BuildOptions {
            tail_target,
            ..BuildOptions::default()
        },
    )
}

pub fn build_series_with(params: &ModelParams, opts: &BuildOptions) -> Result<AmplitudeSeries> {
    build_series_impl(params, opts, Formula::default())
}

pub(crate) fn build_series_impl(params: &ModelParams, opts: &BuildOptions, formula: Formula) -> Result<AmplitudeSeries> {
    if !(opts.tail_target > 0.0 && opts.tail_target <= 1e-3) {
        return Err(Error::domain(format!(
            "tail_target must lie in (0, 1e-3], got {}",
            opts.tail_target
        )));
    }
    let (route, source) = if params.is_phase_aligned() {
        (aligned_route(params, formula)?, SeriesSource::AnalyticAligned)
    } else {
        (general_route(params, formula), SeriesSource::AnalyticGeneral)
    };
    let mean = params.mean_excitation();
    let mut len = ((2.0 * mean + 10.0 * mean.sqrt() + 40.0).ceil() as usize).min(opts.n_max_cap + 1);
    loop {
        let coeffs = closed_form_coefficients(params, route, len, &opts.series)?;
        let probs: Vec<f64> = coeffs.iter().map(|c| c.norm_sqr()).collect();
        let mut cumulative = CompensatedSum::<f64>::default();
        let mut n_max = None;
        for (n, p) in probs.iter().enumerate() {
            cumulative.add(*p);
            if 1.0 - cumulative.value() < opts.tail_target {
                n_max = Some(n);
                break;
            }
        }
        let beyond = geometric_tail(&probs);
        let margin_ok = n_max.is_some_and(|n| n + 8 < len) && beyond.is_some_and(|t| t < opts.tail_target);
        if let (true, Some(n_max), Some(beyond)) = (margin_ok, n_max, beyond) {
            let mut tail = CompensatedSum::<f64>::default();
            for p in &probs[n_max + 1..] {
                tail.add(*p);
            }
            tail.add(beyond);
            let mut coefficients = coeffs;
            coefficients.truncate(n_max + 1);
            return Ok(AmplitudeSeries::new(coefficients, tail.value(), source));
        }
        if len > opts.n_max_cap {
            let mass: f64 = probs.iter().sum();
            return Err(Error::Truncation {
                context: format!("build_series: n_max cap {} reached with retained mass {mass:.12}", opts.n_max_cap),
                measured: 1.0 - mass,
                tolerance: opts.tail_target,
            });
        }
        len = (2 * len).min(opts.n_max_cap + 1 + 16);
    }
}

/// Geometric extrapolation of `Σ_{n ≥ len} p_n` from the last few values,
/// pairing neighbours so that parity-alternating sequences behave.
fn geometric_tail(probs: &[f64]) -> Option<f64> {
    let k = probs.len();
    if k < 8 {
        return None;
    }
    let last = probs[k - 1] + probs[k - 2];
    let before = probs[k - 3] + probs[k - 4];
    if last == 0.0 {
        return Some(0.0);
    }
    if before == 0.0 {
        return None;
    }
    let ratio = last / before;
    if ratio >= 1.0 {
        return None;
    }
    Some(last * ratio / (1.0 - ratio))
}

/// Displaced-Poisson probability `e^{-x²} x^{2n} / n!` with `x = b e^r - a` at
/// `r = 0`; used as a closed-form check.
pub fn displaced_poisson_probability(x: f64, n: usize) -> f64 {
    if x == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    (-x * x + 2.0 * n as f64 * x.abs().ln() - log_factorial(n)).exp()
}
