//! Independent reference computations on a truncated Fock space: ladder,
//! displacement, squeeze and Bogoliubov operators, n-photon squeezed coherent
//! states, the coefficients `b_n` as inner products, and residuals of the
//! operator identities they satisfy.
//!
//! Exponentials are evaluated at the buffer dimension and only the top-left
//! `retained × retained` block is kept. Columns are obtained by applying
//! `exp(G)` to unit vectors with a Chebyshev expansion of the banded generator;
//! for a truncated anti-Hermitian generator this is the same matrix a dense
//! scaling-and-squaring method produces, up to rounding.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::propagate::{norm_sqr, BandedOp, Chebyshev};
use crate::states::{gamma_param_signed, AmplitudeSeries, Formula, SeriesSource};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Largest amplitude tolerated in the top guard rows of the buffer before a
/// result is considered contaminated by the truncation edge.
pub const EDGE_TOLERANCE: f64 = 1e-10;
/// Norm deficit tolerated for basis states on the retained block.
pub const STATE_NORM_TOLERANCE: f64 = 1e-8;
/// Hard ceiling for automatic buffer escalation.
pub const MAX_BUFFER: usize = 16384;

/// Retained block size and the larger working dimension used for
/// exponentials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTruncation", into = "RawTruncation")]
pub struct TruncationSpec {
    retained: usize,
    buffer: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawTruncation {
    pub retained: usize,
    #[serde(default)]
    pub buffer: Option<usize>,
}

impl TryFrom<RawTruncation> for TruncationSpec {
    type Error = Error;
    fn try_from(raw: RawTruncation) -> Result<Self> {
        match raw.buffer {
            Some(b) => TruncationSpec::new(raw.retained, b),
            None => TruncationSpec::with_retained(raw.retained),
        }
    }
}

impl From<TruncationSpec> for RawTruncation {
    fn from(s: TruncationSpec) -> Self {
        RawTruncation {
            retained: s.retained,
            buffer: Some(s.buffer),
        }
    }
}

impl Default for TruncationSpec {
    fn default() -> Self {
        TruncationSpec {
            retained: 512,
            buffer: 640,
        }
    }
}

impl TruncationSpec {
    pub fn new(retained: usize, buffer: usize) -> Result<Self> {
        if retained == 0 {
            return Err(Error::domain("truncation: retained dimension must be >= 1"));
        }
        if buffer <= retained {
            return Err(Error::domain(format!(
                "truncation: buffer ({buffer}) must exceed retained ({retained})"
            )));
        }
        Ok(TruncationSpec { retained, buffer })
    }

    /// Retained dimension with the default buffer `retained + max(64, retained/4)`.
    pub fn with_retained(retained: usize) -> Result<Self> {
        Self::new(retained, retained + (retained / 4).max(64))
    }

    pub fn retained(&self) -> usize {
        self.retained
    }

    pub fn buffer(&self) -> usize {
        self.buffer
    }

    /// Same retained block with the buffer doubled.
    pub fn doubled_buffer(&self) -> Self {
        TruncationSpec {
            retained: self.retained,
            buffer: 2 * self.buffer,
        }
    }

    /// Width of the edge band excluded by interior checks.
    pub fn interior_margin(&self) -> usize {
        (self.retained / 8).max(32)
    }

    fn guard_rows(&self) -> usize {
        ((self.buffer - self.retained) / 8).max(8).min(self.buffer)
    }
}

/// Dense complex matrix on a truncated Fock space, `entries[(m, n)] = ⟨m|O|n⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct FockMatrix {
    entries: DMatrix<Complex64>,
    /// Largest `|1 - ‖column‖²|` of the working-dimension columns.
    pub unitarity_deviation: Option<f64>,
    /// Largest amplitude any retained column placed in the buffer guard rows.
    pub edge_leak: Option<f64>,
}

impl FockMatrix {
    pub fn from_entries(entries: DMatrix<Complex64>) -> Self {
        assert!(entries.is_square(), "Fock matrices are square");
        FockMatrix {
            entries,
            unitarity_deviation: None,
            edge_leak: None,
        }
    }

    pub fn from_banded(op: &BandedOp) -> Self {
        let dense = op.to_dense();
        Self::from_entries(DMatrix::from_fn(op.dim(), op.dim(), |i, j| dense[i][j]))
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_entries(DMatrix::identity(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn get(&self, m: usize, n: usize) -> Complex64 {
        self.entries[(m, n)]
    }

    pub fn adjoint(&self) -> Self {
        Self::from_entries(self.entries.adjoint())
    }

    pub fn mul(&self, other: &FockMatrix) -> Self {
        Self::from_entries(&self.entries * &other.entries)
    }

    /// Top-left `dim × dim` block.
    pub fn block(&self, dim: usize) -> Self {
        Self::from_entries(self.entries.view((0, 0), (dim, dim)).into_owned())
    }

    /// Largest entrywise modulus of `self - other` over rows and columns in
    /// `lo..hi`.
    pub fn max_abs_diff_in(&self, other: &FockMatrix, lo: usize, hi: usize) -> f64 {
        let mut worst = 0.0f64;
        for n in lo..hi {
            for m in lo..hi {
                worst = worst.max((self.entries[(m, n)] - other.entries[(m, n)]).norm());
            }
        }
        worst
    }

    pub fn max_abs_diff(&self, other: &FockMatrix) -> f64 {
        assert_eq!(self.dim(), other.dim());
        self.max_abs_diff_in(other, 0, self.dim())
    }

    /// Largest `|H - H†|` entry.
    pub fn hermiticity_residual(&self) -> f64 {
        let adj = self.entries.adjoint();
        (&self.entries - adj).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Fails with a truncation error when the recorded edge leak exceeds `tol`.
    pub fn certify(self, tol: f64, context: &str) -> Result<Self> {
        let leak = self.edge_leak.unwrap_or(0.0);
        let dev = self.unitarity_deviation.unwrap_or(0.0);
        if leak > tol || dev > tol {
            return Err(Error::Truncation {
                context: format!("{context}: retained block not certified"),
                measured: leak.max(dev),
                tolerance: tol,
            });
        }
        Ok(self)
    }
}

/// Amplitudes of a state on a truncated Fock space.
#[derive(Debug, Clone, PartialEq)]
pub struct FockVector {
    pub amplitudes: Vec<Complex64>,
    /// Largest amplitude in the buffer guard rows reached while building it.
    pub edge_leak: f64,
}

impl FockVector {
    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        norm_sqr(&self.amplitudes)
    }

    /// `Σ_{n < dim} |v_n|²`.
    pub fn mass_below(&self, dim: usize) -> f64 {
        norm_sqr(&self.amplitudes[..dim.min(self.dim())])
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &FockVector) -> Complex64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }
}

/// `αa† − α*a` at dimension `dim`.
pub fn displacement_generator(alpha: Complex64, dim: usize) -> BandedOp {
    BandedOp::creation(dim)
        .scale(alpha)
        .add(&BandedOp::annihilation(dim).scale(-alpha.conj()))
}

/// `−(ζ/2)a†² + (ζ*/2)a²` at dimension `dim`.
pub fn squeeze_generator(zeta: Complex64, dim: usize) -> BandedOp {
    let ad = BandedOp::creation(dim);
    let a = BandedOp::annihilation(dim);
    ad.compose(&ad)
        .scale(-zeta / 2.0)
        .add(&a.compose(&a).scale(zeta.conj() / 2.0))
}

/// One factor of an operator product.
#[derive(Debug, Clone, PartialEq)]
pub enum Factor {
    /// `D̂(α)`.
    Displacement(Complex64),
    /// `Ŝ(ζ)`.
    Squeeze(Complex64),
    /// An explicit operator such as `â` or `B̂`, given at working dimension.
    Linear(LinearFactor),
}

/// Explicit banded factor; built at the working dimension on demand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinearFactor {
    Annihilation,
    Creation,
}

enum Prepared {
    Exp(BandedOp),
    Linear(BandedOp),
}

/// Applies products of operators (rightmost factor first) to vectors at a
/// fixed working dimension.
pub struct Chain {
    dim: usize,
    guard: usize,
    prepared: Vec<Prepared>,
}

impl Chain {
    /// `factors` is listed left to right as written in the operator product.
    pub fn new(factors: &[Factor], dim: usize, guard: usize) -> Self {
        let prepared = factors
            .iter()
            .rev()
            .map(|f| match f {
                // exp(G) = exp(−i H) with H = iG.
                Factor::Displacement(alpha) => {
                    Prepared::Exp(displacement_generator(*alpha, dim).scale(Complex64::new(0.0, 1.0)))
                }
                Factor::Squeeze(zeta) => Prepared::Exp(squeeze_generator(*zeta, dim).scale(Complex64::new(0.0, 1.0))),
                Factor::Linear(LinearFactor::Annihilation) => Prepared::Linear(BandedOp::annihilation(dim)),
                Factor::Linear(LinearFactor::Creation) => Prepared::Linear(BandedOp::creation(dim)),
            })
            .collect();
        Chain { dim, guard, prepared }
    }

    fn edge(&self, v: &[Complex64]) -> f64 {
        v[self.dim - self.guard..].iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Applies the product to `v`; returns the largest guard-row amplitude
    /// seen after any factor.
    pub fn apply(&self, v: &mut Vec<Complex64>) -> Result<f64> {
        assert_eq!(v.len(), self.dim);
        let mut leak = self.edge(v);
        for p in &self.prepared {
            match p {
                Prepared::Exp(h) => Chebyshev::new(h, 1.0)?.step(v),
                Prepared::Linear(op) => {
                    let mut out = vec![ZERO; self.dim];
                    op.apply_add(v, ONE, &mut out);
                    *v = out;
                }
            }
            leak = leak.max(self.edge(v));
        }
        Ok(leak)
    }

    /// Same as [`Chain::apply`] on a unit vector `e_n`.
    pub fn column(&self, n: usize) -> Result<(Vec<Complex64>, f64)> {
        let mut v = vec![ZERO; self.dim];
        v[n] = ONE;
        let leak = self.apply(&mut v)?;
        Ok((v, leak))
    }
}

/// Retained block of an operator product evaluated at the buffer dimension.
pub fn product_block(factors: &[Factor], spec: TruncationSpec) -> Result<FockMatrix> {
    let chain = Chain::new(factors, spec.buffer, spec.guard_rows());
    let n = spec.retained;
    let mut entries = DMatrix::<Complex64>::zeros(n, n);
    let mut leak = 0.0f64;
    let mut deviation = 0.0f64;
    let unitary = factors.iter().all(|f| !matches!(f, Factor::Linear(_)));
    for j in 0..n {
        let (col, l) = chain.column(j)?;
        leak = leak.max(l);
        if unitary {
            deviation = deviation.max((norm_sqr(&col) - 1.0).abs());
        }
        for i in 0..n {
            entries[(i, j)] = col[i];
        }
    }
    let mut m = FockMatrix::from_entries(entries);
    m.edge_leak = Some(leak);
    m.unitarity_deviation = unitary.then_some(deviation);
    Ok(m)
}

/// Like [`product_block`] but doubles the buffer until the edge leak is below
/// `tol`, up to [`MAX_BUFFER`].
pub fn certified_product_block(factors: &[Factor], spec: TruncationSpec, tol: f64) -> Result<(FockMatrix, TruncationSpec)> {
    let mut spec = spec;
    loop {
        let m = product_block(factors, spec)?;
        let leak = m.edge_leak.unwrap_or(0.0);
        if leak <= tol {
            return Ok((m, spec));
        }
        if spec.buffer * 2 > MAX_BUFFER {
            return Err(Error::Truncation {
                context: format!("operator product at buffer {}", spec.buffer),
                measured: leak,
                tolerance: tol,
            });
        }
        log::debug!("edge leak {leak:.2e} at buffer {}; doubling", spec.buffer);
        spec = spec.doubled_buffer();
    }
}

/// `(â, â†)` at the buffer dimension.
pub fn ladder_ops(spec: TruncationSpec) -> (FockMatrix, FockMatrix) {
    (
        FockMatrix::from_banded(&BandedOp::annihilation(spec.buffer)),
        FockMatrix::from_banded(&BandedOp::creation(spec.buffer)),
    )
}

/// Retained block of `D̂(α)`. Logs a warning when the buffer edge is reached.
pub fn displacement(alpha: Complex64, spec: TruncationSpec) -> Result<FockMatrix> {
    if alpha.norm_sqr() > spec.retained as f64 / 4.0 {
        log::warn!("displacement |alpha|^2 = {:.3} exceeds retained/4", alpha.norm_sqr());
    }
    exp_block(&[Factor::Displacement(alpha)], spec, "displacement")
}

/// Retained block of `Ŝ(ζ)`. Logs a warning when the buffer edge is reached.
pub fn squeeze(zeta: Complex64, spec: TruncationSpec) -> Result<FockMatrix> {
    if (2.0 * zeta.norm()).exp() > spec.retained as f64 / 4.0 {
        log::warn!("squeeze e^(2r) = {:.3} exceeds retained/4", (2.0 * zeta.norm()).exp());
    }
    exp_block(&[Factor::Squeeze(zeta)], spec, "squeeze")
}

fn exp_block(factors: &[Factor], spec: TruncationSpec, what: &str) -> Result<FockMatrix> {
    let m = product_block(factors, spec)?;
    let dev = m.unitarity_deviation.unwrap_or(0.0);
    if dev > EDGE_TOLERANCE {
        return Err(Error::Truncation {
            context: format!("{what}: unitarity certification"),
            measured: dev,
            tolerance: EDGE_TOLERANCE,
        });
    }
    let leak = m.edge_leak.unwrap_or(0.0);
    if leak > EDGE_TOLERANCE {
        log::warn!("{what}: retained columns reach the buffer edge (amplitude {leak:.2e})");
    }
    Ok(m)
}

/// Banded `(B̂, B̂†)` with `B̂ = cosh r â + e^{iφ} sinh r â† − α` at `dim`.
pub fn bogoliubov_banded(alpha: Complex64, zeta: Complex64, dim: usize) -> (BandedOp, BandedOp) {
    bogoliubov_banded_signed(alpha, zeta, dim, 1.0)
}

pub(crate) fn bogoliubov_banded_signed(alpha: Complex64, zeta: Complex64, dim: usize, sinh_sign: f64) -> (BandedOp, BandedOp) {
    let r = zeta.norm();
    let phase = if r > 0.0 { zeta / r } else { ONE };
    let b = BandedOp::annihilation(dim)
        .scale(Complex64::new(r.cosh(), 0.0))
        .add(&BandedOp::creation(dim).scale(sinh_sign * phase * r.sinh()))
        .add(&BandedOp::identity(dim).scale(-alpha));
    let bd = b.adjoint();
    (b, bd)
}

/// `(B̂, B̂†)` at the buffer dimension.
pub fn bogoliubov_ops(alpha: Complex64, zeta: Complex64, spec: TruncationSpec) -> (FockMatrix, FockMatrix) {
    let (b, bd) = bogoliubov_banded(alpha, zeta, spec.buffer);
    (FockMatrix::from_banded(&b), FockMatrix::from_banded(&bd))
}

/// `|ζ, α, n⟩ = Ŝ(ζ)D̂(α)|n⟩` at the buffer dimension.
pub fn basis_state(alpha: Complex64, zeta: Complex64, n: usize, spec: TruncationSpec) -> Result<FockVector> {
    if n >= spec.retained {
        return Err(Error::domain(format!("basis_state: n = {n} outside retained block")));
    }
    let v = basis_state_unchecked(alpha, zeta, n, spec)?;
    let deficit = 1.0 - v.mass_below(spec.retained);
    if deficit > STATE_NORM_TOLERANCE {
        return Err(Error::Truncation {
            context: format!("basis_state n = {n}: norm deficit on the retained block"),
            measured: deficit,
            tolerance: STATE_NORM_TOLERANCE,
        });
    }
    Ok(v)
}

fn basis_state_unchecked(alpha: Complex64, zeta: Complex64, n: usize, spec: TruncationSpec) -> Result<FockVector> {
    let chain = Chain::new(&[Factor::Squeeze(zeta), Factor::Displacement(alpha)], spec.buffer, spec.guard_rows());
    let (amplitudes, leak) = chain.column(n)?;
    Ok(FockVector {
        amplitudes,
        edge_leak: leak,
    })
}

/// `b_n = ⟨n|D̂(−α)Ŝ(−ζ)D̂(β)|0⟩` for `n < retained`, by direct operator
/// application at the buffer dimension.
pub fn bn_numeric(alpha: Complex64, zeta: Complex64, beta: Complex64, spec: TruncationSpec) -> Result<AmplitudeSeries> {
    let chain = Chain::new(
        &[Factor::Displacement(-alpha), Factor::Squeeze(-zeta), Factor::Displacement(beta)],
        spec.buffer,
        spec.guard_rows(),
    );
    let (v, leak) = chain.column(0)?;
    if leak > EDGE_TOLERANCE {
        return Err(Error::Truncation {
            context: format!("bn_numeric at buffer {}", spec.buffer),
            measured: leak,
            tolerance: EDGE_TOLERANCE,
        });
    }
    let tail = norm_sqr(&v[spec.retained..]);
    Ok(AmplitudeSeries::new(v[..spec.retained].to_vec(), tail, SeriesSource::NumericOracle))
}

/// Retained `n_max + 1` oracle coefficients, escalating the buffer until the
/// working edge is clean.
pub fn bn_numeric_certified(alpha: Complex64, zeta: Complex64, beta: Complex64, spec: TruncationSpec) -> Result<(AmplitudeSeries, TruncationSpec)> {
    let mut spec = spec;
    loop {
        match bn_numeric(alpha, zeta, beta, spec) {
            Err(Error::Truncation { .. }) if spec.buffer * 2 <= MAX_BUFFER => spec = spec.doubled_buffer(),
            other => return other.map(|s| (s, spec)),
        }
    }
}

/// Residual of `Ŝ(−ζ)D̂(β) = D̂(γ)Ŝ(−ζ)`: largest entry of the difference on
/// the retained block, with the buffer escalated until both products are
/// edge-clean.
pub fn shift_identity_residual(beta: Complex64, zeta: Complex64, spec: TruncationSpec) -> Result<f64> {
    shift_identity_residual_with(beta, zeta, spec, Formula::default())
}

pub(crate) fn shift_identity_residual_with(beta: Complex64, zeta: Complex64, spec: TruncationSpec, formula: Formula) -> Result<f64> {
    let gamma = gamma_param_signed(beta.norm(), beta.arg(), zeta.norm(), zeta.arg(), formula.sinh_sign);
    let (lhs, used) = certified_product_block(&[Factor::Squeeze(-zeta), Factor::Displacement(beta)], spec, EDGE_TOLERANCE)?;
    let (rhs, _) = certified_product_block(&[Factor::Displacement(gamma), Factor::Squeeze(-zeta)], used, EDGE_TOLERANCE)?;
    Ok(lhs.max_abs_diff(&rhs))
}

/// Residual of `D̂(−α)D̂(γ) = e^{−(αγ*−γα*)/2} D̂(γ−α)` on the retained block,
/// together with `| |phase| − 1 |`.
pub fn compose_identity_residual(alpha: Complex64, gamma: Complex64, spec: TruncationSpec) -> Result<(f64, f64)> {
    let exponent = -(alpha * gamma.conj() - gamma * alpha.conj()) / 2.0;
    let phase = exponent.exp();
    let (lhs, used) = certified_product_block(&[Factor::Displacement(-alpha), Factor::Displacement(gamma)], spec, EDGE_TOLERANCE)?;
    let (rhs, _) = certified_product_block(&[Factor::Displacement(gamma - alpha)], used, EDGE_TOLERANCE)?;
    let mut worst = 0.0f64;
    for j in 0..lhs.dim() {
        for i in 0..lhs.dim() {
            worst = worst.max((lhs.get(i, j) - phase * rhs.get(i, j)).norm());
        }
    }
    Ok((worst, (phase.norm() - 1.0).abs()))
}

/// Largest of `‖B̂|n⟩ − √n|n−1⟩‖` and `‖B̂†|n⟩ − √(n+1)|n+1⟩‖` over
/// `n ≤ n_max`, where `|n⟩ = |ζ, α, n⟩`.
pub fn ladder_residual(alpha: Complex64, zeta: Complex64, n_max: usize, spec: TruncationSpec) -> Result<f64> {
    ladder_residual_with(alpha, zeta, n_max, spec, Formula::default())
}

pub(crate) fn ladder_residual_with(alpha: Complex64, zeta: Complex64, n_max: usize, spec: TruncationSpec, formula: Formula) -> Result<f64> {
    if n_max + 1 >= spec.buffer {
        return Err(Error::domain("ladder_residual: n_max outside the working dimension"));
    }
    let states = (0..=n_max + 1)
        .map(|n| basis_state_unchecked(alpha, zeta, n, spec))
        .collect::<Result<Vec<_>>>()?;
    let leak = states.iter().map(|s| s.edge_leak).fold(0.0, f64::max);
    if leak > EDGE_TOLERANCE {
        return Err(Error::Truncation {
            context: "ladder_residual: basis states reach the buffer edge".into(),
            measured: leak,
            tolerance: EDGE_TOLERANCE,
        });
    }
    let (b, bd) = bogoliubov_banded_signed(alpha, zeta, spec.buffer, formula.sinh_sign);
    let mut worst = 0.0f64;
    for n in 0..=n_max {
        let mut lowered = vec![ZERO; spec.buffer];
        b.apply_add(&states[n].amplitudes, ONE, &mut lowered);
        if n > 0 {
            for (x, y) in lowered.iter_mut().zip(&states[n - 1].amplitudes) {
                *x -= (n as f64).sqrt() * y;
            }
        }
        let mut raised = vec![ZERO; spec.buffer];
        bd.apply_add(&states[n].amplitudes, ONE, &mut raised);
        for (x, y) in raised.iter_mut().zip(&states[n + 1].amplitudes) {
            *x -= ((n + 1) as f64).sqrt() * y;
        }
        worst = worst.max(norm_sqr(&lowered).sqrt()).max(norm_sqr(&raised).sqrt());
    }
    Ok(worst)
}

/// Largest entry of `[B̂, B̂†] − I` over the interior of the retained block.
pub fn commutator_residual(alpha: Complex64, zeta: Complex64, spec: TruncationSpec) -> f64 {
    commutator_residual_with(alpha, zeta, spec, Formula::default())
}

pub(crate) fn commutator_residual_with(alpha: Complex64, zeta: Complex64, spec: TruncationSpec, formula: Formula) -> f64 {
    let n = spec.retained;
    let (b, bd) = bogoliubov_banded_signed(alpha, zeta, n, formula.sinh_sign);
    let c = b
        .compose(&bd)
        .add(&bd.compose(&b).scale(-ONE))
        .add(&BandedOp::identity(n).scale(-ONE));
    let margin = spec.interior_margin().min(n / 2);
    let mut worst = 0.0f64;
    for i in 0..n.saturating_sub(margin) {
        for j in 0..n.saturating_sub(margin) {
            worst = worst.max(c.get(i, j).norm());
        }
    }
    worst
}

/// Largest interior difference between `B̂` in its linear form and the
/// conjugation `Ŝ(ζ)D̂(α) â D̂(−α)Ŝ(−ζ)`.
pub fn conjugation_residual(alpha: Complex64, zeta: Complex64, spec: TruncationSpec) -> Result<f64> {
    let factors = [
        Factor::Squeeze(zeta),
        Factor::Displacement(alpha),
        Factor::Linear(LinearFactor::Annihilation),
        Factor::Displacement(-alpha),
        Factor::Squeeze(-zeta),
    ];
    let (conj, _) = certified_product_block(&factors, spec, EDGE_TOLERANCE)?;
    let (b, _) = bogoliubov_banded(alpha, zeta, spec.retained);
    let lin = FockMatrix::from_banded(&b);
    let hi = spec.retained.saturating_sub(spec.interior_margin());
    Ok(conj.max_abs_diff_in(&lin, 0, hi))
}

/// Residual of the inverse relations recovering `â` and `â†` from `B̂`, `B̂†`
/// on the retained block.
pub fn inverse_relation_residual(alpha: Complex64, zeta: Complex64, spec: TruncationSpec) -> f64 {
    let n = spec.retained;
    let r = zeta.norm();
    let phase = if r > 0.0 { zeta / r } else { ONE };
    let (b, bd) = bogoliubov_banded(alpha, zeta, n);
    let (ch, sh) = (r.cosh(), r.sinh());
    let a_rec = b
        .clone()
        .scale(Complex64::new(ch, 0.0))
        .add(&bd.clone().scale(-phase * sh))
        .add(&BandedOp::identity(n).scale(alpha * ch - alpha.conj() * phase * sh));
    let ad_rec = b
        .scale(-phase.conj() * sh)
        .add(&bd.scale(Complex64::new(ch, 0.0)))
        .add(&BandedOp::identity(n).scale(alpha.conj() * ch - alpha * phase.conj() * sh));
    let a = BandedOp::annihilation(n);
    let ad = BandedOp::creation(n);
    let d1 = a_rec.add(&a.scale(-ONE));
    let d2 = ad_rec.add(&ad.scale(-ONE));
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i.saturating_sub(2)..(i + 3).min(n) {
            worst = worst.max(d1.get(i, j).norm()).max(d2.get(i, j).norm());
        }
    }
    worst
}

/// Largest change of the retained block of a product when the buffer is
/// doubled.
pub fn buffer_adequacy(factors: &[Factor], spec: TruncationSpec) -> Result<f64> {
    let a = product_block(factors, spec)?;
    let b = product_block(factors, spec.doubled_buffer())?;
    Ok(a.max_abs_diff(&b))
}

/// Dense reference exponential `exp(G)` at dimension `dim` (scaling and
/// squaring with a Padé approximant); used to cross-check the vector route.
pub fn dense_exponential(generator: &BandedOp) -> FockMatrix {
    FockMatrix::from_banded(generator).entries.exp().into()
}

impl From<DMatrix<Complex64>> for FockMatrix {
    fn from(m: DMatrix<Complex64>) -> Self {
        FockMatrix::from_entries(m)
    }
}
