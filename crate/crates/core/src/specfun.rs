//! Scalar kernels: log-factorials, signed log-space arithmetic, the terminating
//! polynomial that appears in the squeezed-basis expansion coefficients, and
//! compensated series summation with a tail-aware stopping rule.

use std::f64::consts::LN_2;
use std::ops::{Div, Mul, Neg};
use std::sync::OnceLock;

use num_complex::Complex64;

use crate::error::{Error, Result};

const LOG_FACTORIAL_TABLE_LEN: usize = 1024;

fn log_factorial_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut acc = NeumaierSum::default();
        let mut table = Vec::with_capacity(LOG_FACTORIAL_TABLE_LEN);
        table.push(0.0);
        for k in 1..LOG_FACTORIAL_TABLE_LEN {
            acc.add((k as f64).ln());
            table.push(acc.value());
        }
        table
    })
}

/// Natural log of `n!`.
///
/// Tabulated (compensated cumulative sum of logs) below 1024, Stirling series
/// with five correction terms above; both are good to a few ulps.
pub fn log_factorial(n: usize) -> f64 {
    let table = log_factorial_table();
    if n < table.len() {
        return table[n];
    }
    let x = (n + 1) as f64;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // ln Γ(x) = (x - 1/2) ln x - x + ln(2π)/2 + Σ B_2k / (2k(2k-1) x^(2k-1))
    let series = inv
        * (1.0 / 12.0
            - inv2
                * (1.0 / 360.0
                    - inv2 * (1.0 / 1260.0 - inv2 * (1.0 / 1680.0 - inv2 * (1.0 / 1188.0)))));
    (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + series
}

/// A real number stored as sign and natural log of its magnitude.
///
/// Used for intermediate products such as `x^n / sqrt(n!)` that overflow or
/// underflow `f64` long before the quantity they feed into does. The log is
/// held as `exp2 · ln 2 + frac` with `|frac| <= ln 2`, so converting an
/// ordinary `f64` in and out loses nothing beyond a couple of ulps even at
/// magnitudes near `1e±300`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedLogValue {
    sign: i8,
    exp2: i64,
    frac: f64,
}

/// `x · 2^e` without intermediate overflow.
fn ldexp(x: f64, e: i64) -> f64 {
    let mut x = x;
    let mut e = e.clamp(-2200, 2200);
    while e > 1000 {
        x *= 2f64.powi(1000);
        e -= 1000;
    }
    while e < -1000 {
        x *= 2f64.powi(-1000);
        e += 1000;
    }
    x * 2f64.powi(e as i32)
}

impl SignedLogValue {
    pub const ZERO: SignedLogValue = SignedLogValue {
        sign: 0,
        exp2: 0,
        frac: f64::NEG_INFINITY,
    };
    pub const ONE: SignedLogValue = SignedLogValue {
        sign: 1,
        exp2: 0,
        frac: 0.0,
    };

    fn normalized(sign: i8, exp2: i64, frac: f64) -> Self {
        if sign == 0 || frac == f64::NEG_INFINITY {
            return Self::ZERO;
        }
        if frac.abs() <= LN_2 {
            return SignedLogValue { sign: sign.signum(), exp2, frac };
        }
        let shift = (frac / LN_2).round();
        SignedLogValue {
            sign: sign.signum(),
            exp2: exp2 + shift as i64,
            frac: frac - shift * LN_2,
        }
    }

    /// Builds a value from an explicit sign and log-magnitude.
    ///
    /// A zero sign or a `-inf` magnitude yields exact zero.
    pub fn new(sign: i8, log_magnitude: f64) -> Self {
        if sign == 0 || log_magnitude == f64::NEG_INFINITY {
            return Self::ZERO;
        }
        Self::normalized(sign, 0, log_magnitude)
    }

    /// `exp(log_magnitude)` with positive sign.
    pub fn from_log(log_magnitude: f64) -> Self {
        Self::new(1, log_magnitude)
    }

    pub fn from_real(x: f64) -> Self {
        if x == 0.0 || !x.is_finite() {
            return Self::ZERO;
        }
        let sign = if x > 0.0 { 1 } else { -1 };
        let (mantissa, exp2) = frexp(x.abs());
        Self::normalized(sign, exp2, mantissa.ln())
    }

    pub fn to_real(self) -> f64 {
        match self.sign {
            0 => 0.0,
            s => f64::from(s) * ldexp(self.frac.exp(), self.exp2),
        }
    }

    pub fn sign(self) -> i8 {
        self.sign
    }

    pub fn log_magnitude(self) -> f64 {
        if self.sign == 0 {
            f64::NEG_INFINITY
        } else {
            self.exp2 as f64 * LN_2 + self.frac
        }
    }

    pub fn is_zero(self) -> bool {
        self.sign == 0
    }

    pub fn powi(self, k: u32) -> Self {
        if k == 0 {
            return Self::ONE;
        }
        if self.sign == 0 {
            return Self::ZERO;
        }
        let sign = if self.sign < 0 && k % 2 == 1 { -1 } else { 1 };
        Self::normalized(sign, self.exp2 * i64::from(k), self.frac * f64::from(k))
    }

    /// Difference of log-magnitudes, `ln|self| - ln|other|`, for nonzero values.
    fn log_ratio(self, other: Self) -> f64 {
        (self.exp2 - other.exp2) as f64 * LN_2 + (self.frac - other.frac)
    }

    /// Sum of two values, computed as a log-sum-exp with signs.
    pub fn add(self, other: Self) -> Self {
        if self.sign == 0 {
            return other;
        }
        if other.sign == 0 {
            return self;
        }
        let (big, small) = if self.log_ratio(other) >= 0.0 {
            (self, other)
        } else {
            (other, self)
        };
        let ratio = small.log_ratio(big).exp();
        if big.sign == small.sign {
            Self::normalized(big.sign, big.exp2, big.frac + ratio.ln_1p())
        } else if ratio == 1.0 {
            Self::ZERO
        } else {
            Self::normalized(big.sign, big.exp2, big.frac + (-ratio).ln_1p())
        }
    }
}

/// Splits a positive finite `x` into `m · 2^e` with `m ∈ [0.5, 1)`.
fn frexp(x: f64) -> (f64, i64) {
    let bits = x.to_bits();
    let raw_exp = ((bits >> 52) & 0x7ff) as i64;
    if raw_exp == 0 {
        // Subnormal: scale into the normal range first.
        let (m, e) = frexp(x * 2f64.powi(64));
        return (m, e - 64);
    }
    let mantissa = f64::from_bits((bits & !(0x7ffu64 << 52)) | (1022u64 << 52));
    (mantissa, raw_exp - 1022)
}

impl Mul for SignedLogValue {
    type Output = SignedLogValue;

    fn mul(self, rhs: Self) -> Self {
        if self.sign == 0 || rhs.sign == 0 {
            return Self::ZERO;
        }
        Self::normalized(self.sign * rhs.sign, self.exp2 + rhs.exp2, self.frac + rhs.frac)
    }
}

impl Div for SignedLogValue {
    type Output = SignedLogValue;

    fn div(self, rhs: Self) -> Self {
        assert!(rhs.sign != 0, "division of SignedLogValue by zero");
        if self.sign == 0 {
            return Self::ZERO;
        }
        Self::normalized(self.sign * rhs.sign, self.exp2 - rhs.exp2, self.frac - rhs.frac)
    }
}

impl Neg for SignedLogValue {
    type Output = SignedLogValue;

    fn neg(self) -> Self {
        SignedLogValue {
            sign: -self.sign,
            ..self
        }
    }
}

/// Terminating polynomial `Σ_{j=0}^{min(m,n)} m! n! / ((m-j)! (n-j)! j!) (-1/x2)^j`.
///
/// Terms are generated by their ratio recurrence in log space, so no
/// intermediate overflows; the sum is accumulated with compensation. Symmetric in `m` and `n`. Accurate only where the terms do
/// not cancel heavily; [`weighted_poly_column`] is the stable route for large
/// arguments.
pub fn terminating_poly(m: usize, n: usize, x2: f64) -> Result<f64> {
    if !(x2 > 0.0) || !x2.is_finite() {
        return Err(Error::domain(format!(
            "terminating polynomial needs x2 > 0, got {x2}"
        )));
    }
    // Symmetric in (m, n); fix the order so both argument orders round alike.
    let (lo, hi) = if m <= n { (m, n) } else { (n, m) };
    let mut acc = NeumaierSum::default();
    let mut term = SignedLogValue::ONE;
    for j in 0..=lo {
        acc.add(term.to_real());
        if j == lo {
            break;
        }
        let ratio = ((lo - j) as f64) * ((hi - j) as f64) / ((j + 1) as f64 * x2);
        term = -(term * SignedLogValue::from_real(ratio));
    }
    Ok(acc.value())
}

/// The finite hypergeometric sum in the `l`-th term of the coefficient series:
/// [`terminating_poly`] with `m = 2l`.
pub fn hyp_poly_eq24(l: usize, n: usize, x2: f64) -> Result<f64> {
    terminating_poly(2 * l, n, x2)
}

/// Evaluates `w · x^n / sqrt(n!) · P(m, n; x²)` for `n = 0..len`, where `P` is
/// [`terminating_poly`] and `w = exp(log_weight)`.
///
/// `P(m, ·; x²)` obeys the three-term recurrence
/// `x² P(n+1) = (n + x² - m) P(n) - n P(n-1)`. It is run forward up to the
/// upper turning point `(√m + |x|)²` and backward (Miller style) from well
/// beyond `len` down to it, since the polynomial is the minimal solution past
/// the turning point. The two pieces are matched at the forward value of
/// largest magnitude near the turning point. `x` may be negative.
pub fn weighted_poly_column(m: usize, x: f64, log_weight: f64, len: usize) -> Vec<SignedLogValue> {
    let mut out = vec![SignedLogValue::ZERO; len];
    if len == 0 {
        return out;
    }
    assert!(x != 0.0 && x.is_finite(), "weighted_poly_column needs finite nonzero x");
    let x_sign: i8 = if x > 0.0 { 1 } else { -1 };
    let log_abs_x = x.abs().ln();

    if m == 0 {
        // P ≡ 1: closed form.
        for (n, slot) in out.iter_mut().enumerate() {
            let sign = if n % 2 == 1 { x_sign } else { 1 };
            *slot = SignedLogValue::new(
                sign,
                log_weight + n as f64 * log_abs_x - 0.5 * log_factorial(n),
            );
        }
        return out;
    }

    let a = x * x;
    let m_f = m as f64;
    let turning = (m_f.sqrt() + x.abs()).powi(2).floor() as usize + 1;
    let forward_end = turning.min(len - 1);

    let mut scaled = ScaledPair::new(0.0, 1.0, log_weight);
    for (n, slot) in out.iter_mut().enumerate().take(forward_end + 1) {
        *slot = scaled.current();
        let nf = n as f64;
        let next = ((nf + a - m_f) * scaled.cur - x * nf.sqrt() * scaled.prev) / (x * (nf + 1.0).sqrt());
        scaled.advance(next);
    }
    if forward_end == len - 1 {
        return out;
    }

    // Backward sweep from beyond the requested range.
    let match_lo = forward_end.saturating_sub(3);
    let top = len - 1 + 80 + (4.0 * (len as f64).sqrt()) as usize;
    let mut back = vec![SignedLogValue::ZERO; len - match_lo];
    let mut scaled = ScaledPair::new(0.0, 1.0, 0.0);
    for n in (match_lo..=top).rev() {
        if n < len {
            back[n - match_lo] = scaled.current();
        }
        if n == 0 {
            break;
        }
        let nf = n as f64;
        let prev = ((nf + a - m_f) * scaled.cur - x * (nf + 1.0).sqrt() * scaled.prev) / (x * nf.sqrt());
        scaled.advance(prev);
    }

    let anchor = (match_lo..=forward_end)
        .max_by(|&i, &j| out[i].log_magnitude().total_cmp(&out[j].log_magnitude()))
        .expect("nonempty match window");
    let fwd = out[anchor];
    let bwd = back[anchor - match_lo];
    if fwd.is_zero() || bwd.is_zero() {
        // Degenerate match (underflow on both sides): everything past the
        // turning point is negligible.
        for slot in out.iter_mut().skip(forward_end + 1) {
            *slot = SignedLogValue::ZERO;
        }
        return out;
    }
    let ratio = fwd / bwd;
    for n in forward_end + 1..len {
        out[n] = back[n - match_lo] * ratio;
    }
    out
}

/// Two consecutive recurrence values with a shared running log-scale.
struct ScaledPair {
    prev: f64,
    cur: f64,
    log_scale: f64,
}

impl ScaledPair {
    fn new(prev: f64, cur: f64, log_scale: f64) -> Self {
        ScaledPair {
            prev,
            cur,
            log_scale,
        }
    }

    fn current(&self) -> SignedLogValue {
        let v = SignedLogValue::from_real(self.cur);
        if v.is_zero() {
            v
        } else {
            SignedLogValue::new(v.sign(), v.log_magnitude() + self.log_scale)
        }
    }

    fn advance(&mut self, next: f64) {
        self.prev = self.cur;
        self.cur = next;
        let s = self.prev.abs().max(self.cur.abs());
        if s > 1e150 || (s > 0.0 && s < 1e-150) {
            self.prev /= s;
            self.cur /= s;
            self.log_scale += s.ln();
        }
    }
}

/// A value that can be accumulated by [`compensated_sum`].
pub trait Summand: Copy {
    fn zero() -> Self;
    fn magnitude(&self) -> f64;
    /// One Neumaier step: `sum += v` with the rounding error folded into `comp`.
    fn neumaier_step(sum: &mut Self, comp: &mut Self, v: Self);
    fn combine(sum: Self, comp: Self) -> Self;
}

fn neumaier_f64(sum: &mut f64, comp: &mut f64, v: f64) {
    let t = *sum + v;
    if sum.abs() >= v.abs() {
        *comp += (*sum - t) + v;
    } else {
        *comp += (v - t) + *sum;
    }
    *sum = t;
}

impl Summand for f64 {
    fn zero() -> Self {
        0.0
    }

    fn magnitude(&self) -> f64 {
        self.abs()
    }

    fn neumaier_step(sum: &mut Self, comp: &mut Self, v: Self) {
        neumaier_f64(sum, comp, v);
    }

    fn combine(sum: Self, comp: Self) -> Self {
        sum + comp
    }
}

impl Summand for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }

    fn magnitude(&self) -> f64 {
        self.norm()
    }

    fn neumaier_step(sum: &mut Self, comp: &mut Self, v: Self) {
        neumaier_f64(&mut sum.re, &mut comp.re, v.re);
        neumaier_f64(&mut sum.im, &mut comp.im, v.im);
    }

    fn combine(sum: Self, comp: Self) -> Self {
        sum + comp
    }
}

/// Compensated (Neumaier) accumulator.
#[derive(Debug, Clone, Copy)]
pub struct CompensatedSum<T> {
    sum: T,
    comp: T,
}

impl<T: Summand> Default for CompensatedSum<T> {
    fn default() -> Self {
        CompensatedSum {
            sum: T::zero(),
            comp: T::zero(),
        }
    }
}

impl<T: Summand> CompensatedSum<T> {
    #[inline]
    pub fn add(&mut self, v: T) {
        T::neumaier_step(&mut self.sum, &mut self.comp, v);
    }

    #[inline]
    pub fn value(&self) -> T {
        T::combine(self.sum, self.comp)
    }
}

pub type NeumaierSum = CompensatedSum<f64>;

/// Stopping parameters for [`compensated_sum`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesOptions {
    pub rel_tol: f64,
    /// Below this accumulated magnitude the tolerance becomes absolute.
    pub abs_floor: f64,
    pub max_terms: usize,
    /// Convergence is never declared before this many terms.
    pub min_terms: usize,
}

impl Default for SeriesOptions {
    fn default() -> Self {
        SeriesOptions {
            rel_tol: 1e-12,
            abs_floor: 1e-300,
            max_terms: 20_000,
            min_terms: 0,
        }
    }
}

/// Outcome of a summation. `converged == false` is a failure the caller must
/// surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesResult<T> {
    pub value: T,
    pub terms_used: usize,
    pub tail_estimate: f64,
    pub converged: bool,
}

/// Incremental form of the three-small-terms stopping rule.
#[derive(Debug, Clone, Copy, Default)]
pub struct StoppingRule {
    consecutive_small: u8,
}

impl StoppingRule {
    /// Records a term; returns true once three consecutive terms were each
    /// below `rel_tol · max(|acc|, abs_floor)`.
    pub fn observe(&mut self, term_magnitude: f64, acc_magnitude: f64, opts: &SeriesOptions) -> bool {
        if term_magnitude < opts.rel_tol * acc_magnitude.max(opts.abs_floor) {
            self.consecutive_small = self.consecutive_small.saturating_add(1);
        } else {
            self.consecutive_small = 0;
        }
        self.consecutive_small >= 3
    }
}

/// Sums `terms` with compensated accumulation.
///
/// Convergence is declared when three consecutive terms each fall below
/// `rel_tol · max(|acc|, abs_floor)`; a finite sequence that ends earlier
/// counts as converged with zero tail. Running out of `max_terms` yields
/// `converged == false` and the partial value.
pub fn compensated_sum<T, I>(terms: I, opts: &SeriesOptions) -> SeriesResult<T>
where
    T: Summand,
    I: IntoIterator<Item = T>,
{
    let mut acc = CompensatedSum::<T>::default();
    let mut rule = StoppingRule::default();
    let mut used = 0usize;
    let mut last = 0.0f64;
    for term in terms {
        if used >= opts.max_terms {
            return SeriesResult {
                value: acc.value(),
                terms_used: used,
                tail_estimate: last,
                converged: false,
            };
        }
        acc.add(term);
        used += 1;
        last = term.magnitude();
        let small = rule.observe(last, acc.value().magnitude(), opts);
        if small && used >= opts.min_terms {
            return SeriesResult {
                value: acc.value(),
                terms_used: used,
                tail_estimate: last,
                converged: true,
            };
        }
    }
    SeriesResult {
        value: acc.value(),
        terms_used: used,
        tail_estimate: 0.0,
        converged: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn log_factorial_small_values() {
        assert_eq!(log_factorial(0), 0.0);
        assert_eq!(log_factorial(1), 0.0);
        assert_relative_eq!(log_factorial(5), 4.787491742782046, max_relative = 1e-15);
    }

    #[test]
    fn log_factorial_170_matches_sum_of_logs() {
        let mut acc = NeumaierSum::default();
        for k in 1..=170 {
            acc.add((k as f64).ln());
        }
        assert_relative_eq!(log_factorial(170), acc.value(), max_relative = 1e-12);
    }

    #[test]
    fn log_factorial_stirling_continues_table() {
        // Table boundary: compare Stirling against the recurrence ln((n+1)!) = ln(n!) + ln(n+1).
        let n = LOG_FACTORIAL_TABLE_LEN - 1;
        let stirling = log_factorial(n + 1);
        let table = log_factorial(n) + ((n + 1) as f64).ln();
        assert_relative_eq!(stirling, table, max_relative = 1e-14);
        let far = log_factorial(5000);
        let via_sum: f64 = {
            let mut acc = NeumaierSum::default();
            for k in 1..=5000 {
                acc.add((k as f64).ln());
            }
            acc.value()
        };
        assert_relative_eq!(far, via_sum, max_relative = 1e-14);
    }

    #[test]
    fn signed_log_arithmetic() {
        let a = SignedLogValue::from_real(-3.0);
        let b = SignedLogValue::from_real(5.0);
        assert_relative_eq!((a * b).to_real(), -15.0, max_relative = 1e-15);
        assert_relative_eq!((b / a).to_real(), -5.0 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(a.add(b).to_real(), 2.0, max_relative = 1e-15);
        assert_relative_eq!(a.powi(3).to_real(), -27.0, max_relative = 1e-15);
        assert!(a.add(-a).is_zero());
        assert_eq!(SignedLogValue::from_real(0.0).sign(), 0);
        assert_eq!(SignedLogValue::ZERO.to_real(), 0.0);
        // Far outside f64 range, but the ratio is ordinary.
        let huge = SignedLogValue::from_log(2000.0);
        let also = SignedLogValue::from_log(1999.0);
        assert_relative_eq!((also / huge).to_real(), (-1.0f64).exp(), max_relative = 1e-13);
    }

    #[test]
    fn hyp_poly_examples() {
        assert_eq!(hyp_poly_eq24(0, 7, 3.5).unwrap(), 1.0);
        assert_eq!(hyp_poly_eq24(3, 0, 1.0).unwrap(), 1.0);
        assert_relative_eq!(hyp_poly_eq24(1, 1, 1.0).unwrap(), -1.0, max_relative = 1e-14);
        assert_relative_eq!(hyp_poly_eq24(1, 2, 2.0).unwrap(), -0.5, max_relative = 1e-14);
    }

    #[test]
    fn hyp_poly_rejects_nonpositive_argument() {
        assert!(matches!(hyp_poly_eq24(1, 1, 0.0), Err(Error::Domain(_))));
        assert!(matches!(hyp_poly_eq24(1, 1, -2.0), Err(Error::Domain(_))));
    }

    #[test]
    fn hyp_poly_symmetric_under_role_exchange() {
        for two_l in (0..=12).step_by(2) {
            for n in (0..=12).step_by(2) {
                let l_prime = n / 2;
                let lhs = hyp_poly_eq24(two_l / 2, n, 1.7).unwrap();
                let rhs = hyp_poly_eq24(l_prime, two_l, 1.7).unwrap();
                assert_relative_eq!(lhs, rhs, max_relative = 1e-13, epsilon = 1e-13);
            }
        }
        for m in 0..=12 {
            for n in 0..=12 {
                assert_eq!(
                    terminating_poly(m, n, 0.6).unwrap(),
                    terminating_poly(n, m, 0.6).unwrap()
                );
            }
        }
    }

    /// Plain floating-point evaluation of the same sum.
    fn hyp_poly_direct(l: usize, n: usize, x2: f64) -> f64 {
        let m = 2 * l;
        let mut sum = 0.0;
        let mut ratio = 1.0; // m! n! / ((m-j)! (n-j)! j!) (-1/x2)^j
        for j in 0..=m.min(n) {
            sum += ratio;
            ratio *= -((m - j) as f64) * ((n - j) as f64) / ((j + 1) as f64) / x2;
        }
        sum
    }

    #[test]
    fn hyp_poly_log_space_matches_direct() {
        for l in 0..=10 {
            for n in 0..=40 {
                for &x2 in &[0.1, 1.0, 10.0, 100.0] {
                    let log_space = hyp_poly_eq24(l, n, x2).unwrap();
                    let direct = hyp_poly_direct(l, n, x2);
                    // Exact zeros of the polynomial make a pure relative test
                    // meaningless; add a floor at the rounding level of the
                    // largest term, which both routes carry.
                    let scale = (0..=(2 * l).min(n))
                        .map(|j| {
                            (log_factorial(2 * l) + log_factorial(n)
                                - log_factorial(2 * l - j)
                                - log_factorial(n - j)
                                - log_factorial(j)
                                - j as f64 * x2.ln())
                            .exp()
                        })
                        .fold(0.0f64, f64::max);
                    let tol = 1e-10 * direct.abs() + 1e-14 * scale;
                    assert!(
                        (log_space - direct).abs() <= tol,
                        "l={l} n={n} x2={x2}: {log_space} vs {direct}"
                    );
                }
            }
        }
    }

    #[test]
    fn column_matches_direct_polynomial_where_well_conditioned() {
        for &x in &[0.7, -1.3, 2.0, 4.0] {
            for m in [0usize, 1, 2, 5, 8] {
                let col = weighted_poly_column(m, x, 0.0, 30);
                for (n, v) in col.iter().enumerate() {
                    let p = terminating_poly(m, n, x * x).unwrap();
                    let weight = x.powi(n as i32) / (0.5 * log_factorial(n)).exp();
                    let expected = p * weight;
                    // Largest term of the polynomial sets the rounding floor.
                    let biggest = (0..=m.min(n))
                        .map(|j| {
                            (log_factorial(m) + log_factorial(n)
                                - log_factorial(m - j)
                                - log_factorial(n - j)
                                - log_factorial(j)
                                - 2.0 * j as f64 * x.abs().ln())
                            .exp()
                        })
                        .fold(0.0f64, f64::max);
                    let tol = 1e-12 * expected.abs() + 1e-13 * biggest * weight.abs();
                    assert!(
                        (v.to_real() - expected).abs() <= tol,
                        "m={m} x={x} n={n}: {} vs {expected}",
                        v.to_real()
                    );
                }
            }
        }
    }

    #[test]
    fn column_backward_branch_is_continuous() {
        // Range long enough to exercise the backward sweep.
        let x = 3.0;
        let col = weighted_poly_column(4, x, -4.5, 200);
        let short = weighted_poly_column(4, x, -4.5, 25);
        for n in 0..25 {
            let (a, b) = (col[n].to_real(), short[n].to_real());
            assert!((a - b).abs() <= 1e-13 * a.abs().max(1e-30), "n={n}");
        }
        // Past the turning point the values decay.
        assert!(col[199].to_real().abs() < 1e-40);
    }

    #[test]
    fn compensated_sum_examples() {
        let opts = SeriesOptions::default();
        let geo = compensated_sum((0..).map(|k| 0.5f64.powi(k)), &opts);
        assert!(geo.converged);
        assert!((geo.value - 2.0).abs() < 1e-12);
        assert!(geo.tail_estimate <= opts.rel_tol * geo.value.abs());

        let single = compensated_sum([42.0f64], &opts);
        assert_eq!(single.value, 42.0);
        assert_eq!(single.terms_used, 1);
        assert!(single.converged);

        let capped = SeriesOptions {
            max_terms: 10,
            ..opts
        };
        let harmonic = compensated_sum(
            (1..).map(|k: i32| if k % 2 == 1 { 1.0 / k as f64 } else { -1.0 / k as f64 }),
            &capped,
        );
        assert!(!harmonic.converged);
        assert_eq!(harmonic.terms_used, 10);
    }

    #[test]
    fn compensated_sum_complex_terms() {
        let z = Complex64::new(0.3, 0.4);
        let res = compensated_sum((0..).map(|k| z.powi(k)), &SeriesOptions::default());
        assert!(res.converged);
        let exact = Complex64::new(1.0, 0.0) / (Complex64::new(1.0, 0.0) - z);
        assert!((res.value - exact).norm() < 1e-12);
    }

    #[test]
    fn stopping_rule_ignores_a_single_small_term() {
        // Sign alternation can make one term vanish; that is not convergence.
        let terms = [1.0, 0.0, 0.5, 0.25, 0.0, 0.0, 0.0];
        let res = compensated_sum(terms, &SeriesOptions::default());
        assert_eq!(res.terms_used, 7);
        assert!(res.converged);
        assert_eq!(res.value, 1.75);
    }
}
