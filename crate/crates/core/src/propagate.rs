//! Sparse banded operators on a truncated Fock space and the action of
//! `exp(-i H t)` on a vector for Hermitian `H` (Chebyshev expansion).

use num_complex::Complex64;

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// A linear operator that can be applied to vectors.
pub trait LinearOp: Sync {
    fn dim(&self) -> usize;

    /// `y = Op x`.
    fn apply(&self, x: &[Complex64], y: &mut [Complex64]);

    /// Interval containing the spectrum when the operator is Hermitian.
    fn spectral_bounds(&self) -> (f64, f64);
}

/// Square matrix stored by diagonals. Entry `i` of the diagonal with offset
/// `k` sits at row `i + max(0, -k)` and column `i + max(0, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedOp {
    dim: usize,
    diagonals: Vec<(isize, Vec<Complex64>)>,
}

impl BandedOp {
    pub fn zeros(dim: usize) -> Self {
        BandedOp {
            dim,
            diagonals: Vec::new(),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::zeros(dim).with_diagonal(0, vec![Complex64::new(1.0, 0.0); dim])
    }

    /// Annihilation operator: `a[m][m+1] = √(m+1)`.
    pub fn annihilation(dim: usize) -> Self {
        let d = (1..dim).map(|k| Complex64::new((k as f64).sqrt(), 0.0)).collect();
        Self::zeros(dim).with_diagonal(1, d)
    }

    /// Creation operator: `a†[m+1][m] = √(m+1)`.
    pub fn creation(dim: usize) -> Self {
        Self::annihilation(dim).adjoint()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn diagonal_len(&self, offset: isize) -> usize {
        self.dim.saturating_sub(offset.unsigned_abs())
    }

    /// Adds `values` onto the diagonal at `offset`.
    pub fn with_diagonal(mut self, offset: isize, values: Vec<Complex64>) -> Self {
        assert_eq!(values.len(), self.diagonal_len(offset), "diagonal length mismatch");
        if let Some((_, existing)) = self.diagonals.iter_mut().find(|(k, _)| *k == offset) {
            for (e, v) in existing.iter_mut().zip(values) {
                *e += v;
            }
        } else {
            self.diagonals.push((offset, values));
            self.diagonals.sort_by_key(|(k, _)| *k);
        }
        self
    }

    pub fn scale(mut self, s: Complex64) -> Self {
        for (_, d) in &mut self.diagonals {
            for v in d.iter_mut() {
                *v *= s;
            }
        }
        self
    }

    pub fn add(mut self, other: &BandedOp) -> Self {
        assert_eq!(self.dim, other.dim);
        for (k, d) in &other.diagonals {
            self = self.with_diagonal(*k, d.clone());
        }
        self
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.dim);
        for (k, d) in &self.diagonals {
            out = out.with_diagonal(-k, d.iter().map(|v| v.conj()).collect());
        }
        out
    }

    /// Matrix product `self · other`, still banded.
    pub fn compose(&self, other: &BandedOp) -> Self {
        assert_eq!(self.dim, other.dim);
        let n = self.dim as isize;
        let mut out = Self::zeros(self.dim);
        for (k1, d1) in &self.diagonals {
            for (k2, d2) in &other.diagonals {
                let k = k1 + k2;
                if k.abs() >= n {
                    continue;
                }
                let mut values = vec![ZERO; self.diagonal_len(k)];
                // Row i of the result diagonal k: row = i + max(0,-k).
                for (i, v) in values.iter_mut().enumerate() {
                    let row = i as isize + (-k).max(0);
                    let mid = row + k1;
                    let col = mid + k2;
                    if mid < 0 || mid >= n || col < 0 || col >= n {
                        continue;
                    }
                    let i1 = (row - (-k1).max(0)) as usize;
                    let i2 = (mid - (-k2).max(0)) as usize;
                    *v = d1[i1] * d2[i2];
                }
                out = out.with_diagonal(k, values);
            }
        }
        out
    }

    /// Entry `(row, col)`.
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        let k = col as isize - row as isize;
        self.diagonals
            .iter()
            .find(|(o, _)| *o == k)
            .map(|(_, d)| d[row.min(col)])
            .unwrap_or(ZERO)
    }

    /// Dense row-major copy.
    pub fn to_dense(&self) -> Vec<Vec<Complex64>> {
        let mut out = vec![vec![ZERO; self.dim]; self.dim];
        for (k, d) in &self.diagonals {
            for (i, v) in d.iter().enumerate() {
                let row = i + (-k).max(0) as usize;
                let col = i + (*k).max(0) as usize;
                out[row][col] = *v;
            }
        }
        out
    }

    /// `y += s · (self x)`.
    pub fn apply_add(&self, x: &[Complex64], s: Complex64, y: &mut [Complex64]) {
        for (k, d) in &self.diagonals {
            let r0 = (-k).max(0) as usize;
            let c0 = (*k).max(0) as usize;
            let ys = &mut y[r0..r0 + d.len()];
            let xs = &x[c0..c0 + d.len()];
            for ((yv, dv), xv) in ys.iter_mut().zip(d).zip(xs) {
                *yv += s * dv * xv;
            }
        }
    }

    /// Absolute row sums.
    pub fn row_abs_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.dim];
        for (k, d) in &self.diagonals {
            let r0 = (-k).max(0) as usize;
            for (i, v) in d.iter().enumerate() {
                sums[r0 + i] += v.norm();
            }
        }
        sums
    }
}

impl LinearOp for BandedOp {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        y.iter_mut().for_each(|v| *v = ZERO);
        self.apply_add(x, Complex64::new(1.0, 0.0), y);
    }

    /// Gershgorin interval using the real part of the diagonal.
    fn spectral_bounds(&self) -> (f64, f64) {
        let mut centre = vec![0.0; self.dim];
        let mut radius = vec![0.0; self.dim];
        for (k, d) in &self.diagonals {
            let r0 = (-k).max(0) as usize;
            for (i, v) in d.iter().enumerate() {
                if *k == 0 {
                    centre[r0 + i] += v.re;
                } else {
                    radius[r0 + i] += v.norm();
                }
            }
        }
        let lo = centre.iter().zip(&radius).map(|(c, r)| c - r).fold(f64::INFINITY, f64::min);
        let hi = centre.iter().zip(&radius).map(|(c, r)| c + r).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

/// `J_0(z) .. J_{len-1}(z)` for `z ≥ 0` by backward recurrence normalized with
/// `J_0 + 2 Σ J_{2k} = 1`.
pub fn bessel_j_sequence(z: f64, len: usize) -> Vec<f64> {
    assert!(z >= 0.0 && z.is_finite());
    let mut out = vec![0.0; len];
    if len == 0 {
        return out;
    }
    if z == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let start = len.max(z.ceil() as usize) + 40 + (6.0 * z.cbrt()).ceil() as usize;
    let start = start + start % 2;
    let mut next = 0.0f64;
    let mut cur = 1e-300f64;
    let mut norm = 0.0f64;
    let mut values = vec![0.0f64; len];
    for k in (0..start).rev() {
        // cur = j_{k+1}, next = j_{k+2}; compute j_k.
        let jk = 2.0 * (k + 1) as f64 / z * cur - next;
        next = cur;
        cur = jk;
        if k < len {
            values[k] = jk;
        }
        if k % 2 == 0 {
            norm += if k == 0 { jk } else { 2.0 * jk };
        }
        if cur.abs() > 1e250 {
            let s = 1e-250;
            cur *= s;
            next *= s;
            norm *= s;
            for v in values.iter_mut().skip(k) {
                *v *= s;
            }
        }
    }
    for (o, v) in out.iter_mut().zip(values) {
        *o = v / norm;
    }
    out
}

/// Number of Chebyshev terms for argument `z` so that dropped Bessel
/// coefficients are below `1e-18`.
fn chebyshev_terms(z: f64) -> usize {
    let guess = (z + 10.0 * z.cbrt() + 40.0).ceil() as usize;
    let j = bessel_j_sequence(z, guess);
    let mut k = guess;
    while k > 1 && j[k - 1].abs() < 1e-18 {
        k -= 1;
    }
    k.max(1)
}

/// Reusable propagator for `exp(-i H dt)` with a fixed step.
pub struct Chebyshev<'a, Op: LinearOp + ?Sized> {
    op: &'a Op,
    centre: f64,
    half_width: f64,
    coefficients: Vec<Complex64>,
    phase: Complex64,
    scratch: [Vec<Complex64>; 3],
}

impl<'a, Op: LinearOp + ?Sized> Chebyshev<'a, Op> {
    pub fn new(op: &'a Op, dt: f64) -> Result<Self> {
        if !dt.is_finite() {
            return Err(Error::domain("propagation time must be finite"));
        }
        let (lo, hi) = op.spectral_bounds();
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::domain("operator has non-finite spectral bounds"));
        }
        let centre = 0.5 * (lo + hi);
        let half_width = (0.5 * (hi - lo)).max(1e-300);
        let z = half_width * dt.abs();
        let j = if z <= 1e-17 {
            vec![1.0]
        } else {
            bessel_j_sequence(z, chebyshev_terms(z))
        };
        // exp(-i x dt) = Σ (2 - δ_k0) (-i sgn dt)^k J_k(|dt| h) T_k(x').
        let unit = if dt >= 0.0 {
            Complex64::new(0.0, -1.0)
        } else {
            Complex64::new(0.0, 1.0)
        };
        let mut power = Complex64::new(1.0, 0.0);
        let coefficients = j
            .iter()
            .enumerate()
            .map(|(k, jk)| {
                let c = power * jk * if k == 0 { 1.0 } else { 2.0 };
                power *= unit;
                c
            })
            .collect();
        let n = op.dim();
        Ok(Chebyshev {
            op,
            centre,
            half_width,
            coefficients,
            phase: Complex64::from_polar(1.0, -centre * dt),
            scratch: [vec![ZERO; n], vec![ZERO; n], vec![ZERO; n]],
        })
    }

    pub fn terms(&self) -> usize {
        self.coefficients.len()
    }

    /// Applies the shifted and scaled operator `(H - c)/h`.
    fn apply_scaled(op: &Op, centre: f64, half_width: f64, x: &[Complex64], y: &mut [Complex64]) {
        op.apply(x, y);
        let inv = 1.0 / half_width;
        for (yv, xv) in y.iter_mut().zip(x) {
            *yv = (*yv - centre * xv) * inv;
        }
    }

    /// Replaces `v` by `exp(-i H dt) v`.
    pub fn step(&mut self, v: &mut [Complex64]) {
        let [t0, t1, t2] = &mut self.scratch;
        let mut acc: Vec<Complex64> = v.iter().map(|x| x * self.coefficients[0]).collect();
        if self.coefficients.len() > 1 {
            t0.copy_from_slice(v);
            Self::apply_scaled(self.op, self.centre, self.half_width, t0, t1);
            for (a, x) in acc.iter_mut().zip(t1.iter()) {
                *a += self.coefficients[1] * x;
            }
            for c in &self.coefficients[2..] {
                Self::apply_scaled(self.op, self.centre, self.half_width, t1, t2);
                for (n2, n0) in t2.iter_mut().zip(t0.iter()) {
                    *n2 = 2.0 * *n2 - n0;
                }
                for (a, x) in acc.iter_mut().zip(t2.iter()) {
                    *a += c * x;
                }
                std::mem::swap(t0, t1);
                std::mem::swap(t1, t2);
            }
        }
        for (o, a) in v.iter_mut().zip(acc) {
            *o = self.phase * a;
        }
    }
}

/// `exp(-i H t) v` for Hermitian `H`.
pub fn expm_hermitian_action<Op: LinearOp + ?Sized>(op: &Op, t: f64, v: &[Complex64]) -> Result<Vec<Complex64>> {
    let mut out = v.to_vec();
    Chebyshev::new(op, t)?.step(&mut out);
    Ok(out)
}

/// `exp(G) v` for anti-Hermitian `G`, using `G = -i H` with `H = i G`.
pub fn expm_antihermitian_action(generator: &BandedOp, v: &[Complex64]) -> Result<Vec<Complex64>> {
    let h = generator.clone().scale(Complex64::new(0.0, 1.0));
    expm_hermitian_action(&h, 1.0, v)
}

/// One classical fourth-order Runge-Kutta step of `dv/dt = -i H v`.
pub fn rk4_step<Op: LinearOp + ?Sized>(op: &Op, dt: f64, v: &mut [Complex64], work: &mut [Vec<Complex64>; 5]) {
    let minus_i = Complex64::new(0.0, -1.0);
    let [k1, k2, k3, k4, tmp] = work;
    op.apply(v, k1);
    k1.iter_mut().for_each(|x| *x *= minus_i);
    for ((t, x), k) in tmp.iter_mut().zip(v.iter()).zip(k1.iter()) {
        *t = x + 0.5 * dt * k;
    }
    op.apply(tmp, k2);
    k2.iter_mut().for_each(|x| *x *= minus_i);
    for ((t, x), k) in tmp.iter_mut().zip(v.iter()).zip(k2.iter()) {
        *t = x + 0.5 * dt * k;
    }
    op.apply(tmp, k3);
    k3.iter_mut().for_each(|x| *x *= minus_i);
    for ((t, x), k) in tmp.iter_mut().zip(v.iter()).zip(k3.iter()) {
        *t = x + dt * k;
    }
    op.apply(tmp, k4);
    k4.iter_mut().for_each(|x| *x *= minus_i);
    for i in 0..v.len() {
        v[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

pub fn norm_sqr(v: &[Complex64]) -> f64 {
    let mut acc = crate::specfun::CompensatedSum::<f64>::default();
    for x in v {
        acc.add(x.norm_sqr());
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn to_nalgebra(op: &BandedOp) -> DMatrix<Complex64> {
        let d = op.to_dense();
        DMatrix::from_fn(op.dim(), op.dim(), |i, j| d[i][j])
    }

    #[test]
    fn bessel_values() {
        let j = bessel_j_sequence(1.0, 4);
        assert!((j[0] - 0.7651976865579666).abs() < 1e-15);
        assert!((j[1] - 0.4400505857449335).abs() < 1e-15);
        assert!((j[2] - 0.1149034849319005).abs() < 1e-15);
        let j = bessel_j_sequence(100.0, 3);
        assert!((j[0] - 0.019985850304223122).abs() < 1e-14);
        assert!((j[1] - (-0.0771453520141123)).abs() < 1e-14);
        let j = bessel_j_sequence(2500.0, 2);
        let sum_check = bessel_j_sequence(2500.0, 2600);
        let s: f64 = sum_check.iter().enumerate().map(|(k, v)| if k == 0 { v * v } else { 2.0 * v * v }).sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(j[0].abs() < 0.02);
    }

    #[test]
    fn compose_matches_dense_product() {
        let a = BandedOp::annihilation(12);
        let ad = BandedOp::creation(12);
        let p = a.compose(&ad).add(&ad.compose(&a).scale(Complex64::new(-1.0, 0.0)));
        let dense = to_nalgebra(&a) * to_nalgebra(&ad) - to_nalgebra(&ad) * to_nalgebra(&a);
        assert!((to_nalgebra(&p) - dense).iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-14);
        for i in 0..11 {
            assert!((p.get(i, i) - 1.0).norm() < 1e-14);
        }
        assert!((p.get(11, 11) + 11.0).norm() < 1e-13);
    }

    #[test]
    fn chebyshev_matches_dense_exponential() {
        let n = 40;
        let a = BandedOp::annihilation(n);
        let alpha = Complex64::new(1.2, -0.7);
        let zeta = Complex64::new(0.3, 0.4);
        let g = BandedOp::creation(n)
            .scale(alpha)
            .add(&a.clone().scale(-alpha.conj()))
            .add(&BandedOp::creation(n).compose(&BandedOp::creation(n)).scale(-zeta / 2.0))
            .add(&a.compose(&a).scale(zeta.conj() / 2.0));
        let dense = to_nalgebra(&g).exp();
        for col in [0usize, 5, 39] {
            let mut e = vec![ZERO; n];
            e[col] = Complex64::new(1.0, 0.0);
            let v = expm_antihermitian_action(&g, &e).unwrap();
            for row in 0..n {
                assert!((v[row] - dense[(row, col)]).norm() < 1e-12, "row {row} col {col}");
            }
        }
    }

    #[test]
    fn chebyshev_negative_time_inverts() {
        let n = 60;
        let h = BandedOp::annihilation(n)
            .add(&BandedOp::creation(n))
            .add(&BandedOp::zeros(n).with_diagonal(0, (0..n).map(|k| Complex64::new(0.3 * k as f64, 0.0)).collect()));
        let mut v = vec![ZERO; n];
        v[3] = Complex64::new(0.6, 0.0);
        v[4] = Complex64::new(0.0, 0.8);
        let fwd = expm_hermitian_action(&h, 2.7, &v).unwrap();
        assert!((norm_sqr(&fwd) - 1.0).abs() < 1e-13);
        let back = expm_hermitian_action(&h, -2.7, &fwd).unwrap();
        for (x, y) in back.iter().zip(&v) {
            assert!((x - y).norm() < 1e-13);
        }
    }

    #[test]
    fn rk4_tracks_exact_solution() {
        let n = 20;
        let h = BandedOp::annihilation(n).add(&BandedOp::creation(n));
        let mut v = vec![ZERO; n];
        v[0] = Complex64::new(1.0, 0.0);
        let exact = expm_hermitian_action(&h, 1.0, &v).unwrap();
        let mut work: [Vec<Complex64>; 5] = std::array::from_fn(|_| vec![ZERO; n]);
        for _ in 0..1000 {
            rk4_step(&h, 1e-3, &mut v, &mut work);
        }
        for (x, y) in v.iter().zip(&exact) {
            assert!((x - y).norm() < 1e-10);
        }
    }
}
