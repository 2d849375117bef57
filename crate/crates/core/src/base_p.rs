//! Exact base-`p` digit arithmetic.
//!
//! Integer indices and wavenumbers store their digits least significant
//! first (`n = n_0 + n_1 p + ...`). Point coordinates store post-radix
//! digits most significant first (`x = x_1/p + x_2/p^2 + ...`), so index 0
//! of a coordinate digit vector holds `x_1`.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WalshError};

/// A prime base `p`, restricted to `p < 256` so that digits fit in a byte.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct PrimeBase(u32);

impl PrimeBase {
    pub const TWO: PrimeBase = PrimeBase(2);

    pub fn new(p: u32) -> Result<Self> {
        if !(2..=255).contains(&p) || !(2..p).take_while(|d| d * d <= p).all(|d| p % d != 0) {
            return Err(WalshError::NotPrime(p as u64));
        }
        Ok(PrimeBase(p))
    }

    #[inline]
    pub fn get(self) -> u32 {
        self.0
    }

    /// Number of base-`p` digits that a binary64 mantissa resolves,
    /// `floor(53 / log2 p)`.
    pub fn digit_cap(self) -> usize {
        if self.0 == 2 {
            return 53;
        }
        (53.0 / (self.0 as f64).log2()).floor() as usize
    }

    /// `p^e`, or `None` on `u64` overflow.
    pub fn checked_pow(self, e: usize) -> Option<u64> {
        (self.0 as u64).checked_pow(u32::try_from(e).ok()?)
    }

    /// `p^e` as a `usize`, failing with a size error when it does not fit.
    pub fn len_pow(self, e: usize) -> Result<usize> {
        self.checked_pow(e)
            .and_then(|v| usize::try_from(v).ok())
            .ok_or(WalshError::SizeCapExceeded { size: u64::MAX, cap: usize::MAX as u64 })
    }

    /// `e` such that `len == p^e`, if any.
    pub fn log_exact(self, len: usize) -> Option<usize> {
        let p = self.0 as usize;
        let mut e = 0;
        let mut v = 1usize;
        while v < len {
            v = v.checked_mul(p)?;
            e += 1;
        }
        (v == len).then_some(e)
    }
}

impl TryFrom<u32> for PrimeBase {
    type Error = WalshError;
    fn try_from(p: u32) -> Result<Self> {
        PrimeBase::new(p)
    }
}

impl From<PrimeBase> for u32 {
    fn from(p: PrimeBase) -> u32 {
        p.0
    }
}

/// `omega_p^e = exp(2 pi i e / p)`; exactly real for `p = 2`.
#[inline]
pub fn unit_root(p: PrimeBase, e: u32) -> Complex64 {
    let e = e % p.0;
    if e == 0 {
        return Complex64::new(1.0, 0.0);
    }
    if p.0 == 2 {
        return Complex64::new(-1.0, 0.0);
    }
    Complex64::from_polar(1.0, TAU * e as f64 / p.0 as f64)
}

/// Table of `omega_p^e` for `e = 0..p`.
pub fn unit_roots(p: PrimeBase) -> Vec<Complex64> {
    (0..p.0).map(|e| unit_root(p, e)).collect()
}

/// A finite digit sequence over `Z_p`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DigitVector {
    base: PrimeBase,
    digits: Vec<u8>,
}

impl DigitVector {
    pub fn new(base: PrimeBase, digits: Vec<u8>) -> Result<Self> {
        if let Some(&d) = digits.iter().find(|&&d| d as u32 >= base.0) {
            return Err(WalshError::DigitOutOfRange { digit: d as u32, p: base.0 });
        }
        Ok(DigitVector { base, digits })
    }

    pub fn zeros(base: PrimeBase, len: usize) -> Self {
        DigitVector { base, digits: vec![0; len] }
    }

    #[inline]
    pub fn base(&self) -> PrimeBase {
        self.base
    }

    #[inline]
    pub fn digits(&self) -> &[u8] {
        &self.digits
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.digits.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.digits.is_empty()
    }

    /// Digit `i`, or zero past the stored length.
    #[inline]
    pub fn digit(&self, i: usize) -> u8 {
        self.digits.get(i).copied().unwrap_or(0)
    }

    /// Reassemble the integer `sum digits[i] p^i` (least significant first).
    pub fn to_u64(&self) -> Option<u64> {
        let p = self.base.0 as u64;
        self.digits.iter().rev().try_fold(0u64, |acc, &d| acc.checked_mul(p)?.checked_add(d as u64))
    }

    pub fn is_zero(&self) -> bool {
        self.digits.iter().all(|&d| d == 0)
    }
}

/// Base-`p` expansion of `n` with exactly `len` digits, least significant first.
pub fn digits_of(n: u64, p: PrimeBase, len: usize) -> Result<DigitVector> {
    let pp = p.0 as u64;
    let mut digits = Vec::with_capacity(len);
    let mut rest = n;
    for _ in 0..len {
        digits.push((rest % pp) as u8);
        rest /= pp;
    }
    if rest != 0 {
        return Err(WalshError::DigitOverflow { value: n, p: p.0, len });
    }
    Ok(DigitVector { base: p, digits })
}

/// Post-radix digits `x_1, ..., x_len` of `x` in `[0, 1)`.
///
/// Within the digit cap, values lying a few ulps below a grid point
/// `w / p^len` are snapped onto it, so coordinates of base-`p` nets survive
/// a round trip through `f64`. Longer expansions carry rounding noise in
/// their trailing digits.
pub fn fraction_digits(x: f64, p: PrimeBase, len: usize) -> Result<DigitVector> {
    if len <= p.digit_cap() {
        let w = fraction_word(x, p, len)?;
        let mut d = digits_of(w, p, len)?.digits;
        d.reverse();
        return Ok(DigitVector { base: p, digits: d });
    }
    if !(0.0..1.0).contains(&x) {
        return Err(WalshError::OutOfDomain { coord: 0, value: x });
    }
    let pf = p.0 as f64;
    let mut rest = x;
    let mut digits = Vec::with_capacity(len);
    for _ in 0..len {
        rest *= pf;
        let d = (rest.floor() as u32).min(p.0 - 1);
        rest -= d as f64;
        digits.push(d as u8);
    }
    Ok(DigitVector { base: p, digits })
}

/// Packs the first `len` post-radix digits of `x` into the integer
/// `sum_{i=1}^{len} x_i p^{len-i}`; `len` must not exceed the digit cap.
pub fn fraction_word(x: f64, p: PrimeBase, len: usize) -> Result<u64> {
    if !(0.0..1.0).contains(&x) {
        return Err(WalshError::OutOfDomain { coord: 0, value: x });
    }
    let scale = p.checked_pow(len).filter(|_| len <= p.digit_cap()).ok_or(WalshError::DigitOverflow { value: 0, p: p.0, len })?;
    let t = x * scale as f64;
    let near = t.round();
    let w = if (t - near).abs() <= 4.0 * f64::EPSILON * t.max(1.0) { near } else { t.floor() };
    Ok((w as u64).min(scale - 1))
}

fn check_base(a: PrimeBase, b: PrimeBase) -> Result<()> {
    if a != b {
        return Err(WalshError::BaseMismatch { left: a.0, right: b.0 });
    }
    Ok(())
}

/// Digit-wise addition modulo `p` with no carries (`k (+) l`).
pub fn carryless_add(k: &DigitVector, l: &DigitVector) -> Result<DigitVector> {
    check_base(k.base, l.base)?;
    let p = k.base.0;
    let len = k.len().max(l.len());
    let digits = (0..len)
        .map(|i| ((k.digit(i) as u32 + l.digit(i) as u32) % p) as u8)
        .collect();
    Ok(DigitVector { base: k.base, digits })
}

/// Digit-wise subtraction modulo `p` with no borrows (`k (-) l`).
pub fn carryless_sub(k: &DigitVector, l: &DigitVector) -> Result<DigitVector> {
    check_base(k.base, l.base)?;
    let p = k.base.0;
    let len = k.len().max(l.len());
    let digits = (0..len)
        .map(|i| ((p + k.digit(i) as u32 - l.digit(i) as u32) % p) as u8)
        .collect();
    Ok(DigitVector { base: k.base, digits })
}

/// Carry-less sum of two integers; plain XOR when `p = 2`.
pub fn carryless_add_int(k: u64, l: u64, p: PrimeBase) -> u64 {
    if p.0 == 2 {
        return k ^ l;
    }
    digitwise_int(k, l, p, |a, b, p| (a + b) % p)
}

/// Carry-less difference of two integers; plain XOR when `p = 2`.
pub fn carryless_sub_int(k: u64, l: u64, p: PrimeBase) -> u64 {
    if p.0 == 2 {
        return k ^ l;
    }
    digitwise_int(k, l, p, |a, b, p| (p + a - b) % p)
}

fn digitwise_int(mut k: u64, mut l: u64, p: PrimeBase, op: impl Fn(u64, u64, u64) -> u64) -> u64 {
    let pp = p.0 as u64;
    let (mut out, mut scale) = (0u64, 1u64);
    while k > 0 || l > 0 {
        out += op(k % pp, l % pp, pp) * scale;
        k /= pp;
        l /= pp;
        scale = scale.saturating_mul(pp);
    }
    out
}

/// `nu(0) = 0`, otherwise one plus the index of the most significant
/// nonzero digit.
pub fn nu_norm(k: &DigitVector) -> usize {
    k.digits.iter().rposition(|&d| d != 0).map_or(0, |i| i + 1)
}

/// `nu` of an integer wavenumber.
pub fn nu_int(mut k: u64, p: PrimeBase) -> usize {
    let mut v = 0;
    while k > 0 {
        k /= p.0 as u64;
        v += 1;
    }
    v
}

/// A vector of wavenumbers `(k_1, ..., k_s)` over one base.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct WavenumberVector {
    base: PrimeBase,
    components: Vec<DigitVector>,
}

impl WavenumberVector {
    pub fn new(components: Vec<DigitVector>) -> Result<Self> {
        let base = components.first().map(|c| c.base).unwrap_or(PrimeBase::TWO);
        for c in &components {
            check_base(base, c.base)?;
        }
        Ok(WavenumberVector { base, components })
    }

    /// Build from integer components, each expanded to `len` digits.
    pub fn from_ints(ks: &[u64], p: PrimeBase, len: usize) -> Result<Self> {
        let components = ks.iter().map(|&k| digits_of(k, p, len)).collect::<Result<Vec<_>>>()?;
        Ok(WavenumberVector { base: p, components })
    }

    pub fn zero(p: PrimeBase, s: usize) -> Self {
        WavenumberVector { base: p, components: vec![DigitVector::zeros(p, 0); s] }
    }

    pub fn base(&self) -> PrimeBase {
        self.base
    }

    pub fn components(&self) -> &[DigitVector] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(DigitVector::is_zero)
    }

    pub fn to_ints(&self) -> Option<Vec<u64>> {
        self.components.iter().map(DigitVector::to_u64).collect()
    }
}

/// Sum of the component `nu` norms.
pub fn nu_norm_vec(k: &WavenumberVector) -> usize {
    k.components.iter().map(nu_norm).sum()
}

/// Component-wise carry-less addition of wavenumber vectors.
pub fn carryless_add_vec(k: &WavenumberVector, l: &WavenumberVector) -> Result<WavenumberVector> {
    zip_vec(k, l, carryless_add)
}

/// Component-wise carry-less subtraction of wavenumber vectors.
pub fn carryless_sub_vec(k: &WavenumberVector, l: &WavenumberVector) -> Result<WavenumberVector> {
    zip_vec(k, l, carryless_sub)
}

fn zip_vec(
    k: &WavenumberVector,
    l: &WavenumberVector,
    op: fn(&DigitVector, &DigitVector) -> Result<DigitVector>,
) -> Result<WavenumberVector> {
    check_base(k.base, l.base)?;
    if k.dim() != l.dim() {
        return Err(WalshError::DimensionMismatch { expected: k.dim(), found: l.dim() });
    }
    let components = k.components.iter().zip(&l.components).map(|(a, b)| op(a, b)).collect::<Result<_>>()?;
    Ok(WavenumberVector { base: k.base, components })
}

/// Dense matrix over `Z_p`, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GfMatrix {
    rows: usize,
    cols: usize,
    data: Vec<u8>,
}

impl GfMatrix {
    pub fn from_rows(p: PrimeBase, rows: &[Vec<u8>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(WalshError::DimensionMismatch { expected: cols, found: row.len() });
            }
            if let Some(&d) = row.iter().find(|&&d| d as u32 >= p.get()) {
                return Err(WalshError::DigitOutOfRange { digit: d as u32, p: p.get() });
            }
            data.extend_from_slice(row);
        }
        Ok(GfMatrix { rows: rows.len(), cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        GfMatrix { rows, cols, data: vec![0; rows * cols] }
    }

    pub fn identity(rows: usize, cols: usize) -> Self {
        let mut m = GfMatrix::zeros(rows, cols);
        for i in 0..rows.min(cols) {
            m.set(i, i, 1);
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: u8) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[u8] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    /// Copy keeping only the first `cols` columns.
    pub fn truncate_cols(&self, cols: usize) -> GfMatrix {
        let cols = cols.min(self.cols);
        let data = (0..self.rows).flat_map(|r| self.row(r)[..cols].iter().copied()).collect();
        GfMatrix { rows: self.rows, cols, data }
    }
}

/// Exact product `M v` over `Z_p`.
pub fn gf_matvec(m: &GfMatrix, v: &DigitVector) -> Result<DigitVector> {
    if v.len() != m.cols {
        return Err(WalshError::DimensionMismatch { expected: m.cols, found: v.len() });
    }
    let p = v.base.0;
    let digits = (0..m.rows)
        .map(|r| {
            let acc: u32 = m.row(r).iter().zip(&v.digits).map(|(&a, &b)| a as u32 * b as u32 % p).sum();
            (acc % p) as u8
        })
        .collect();
    Ok(DigitVector { base: v.base, digits })
}

/// Exponent `e = sum_{i>=1} x_i k_{i-1} mod p` of `wal_k(x) = omega_p^e`.
pub fn walsh_exponent(k: &DigitVector, x_digits: &DigitVector) -> Result<u32> {
    check_base(k.base, x_digits.base)?;
    let p = k.base.0;
    Ok(k.digits.iter().zip(&x_digits.digits).map(|(&a, &b)| a as u32 * b as u32 % p).sum::<u32>() % p)
}

/// Univariate Walsh function `wal_k(x)` at a point given by its digits.
pub fn walsh_eval(k: &DigitVector, x_digits: &DigitVector) -> Result<Complex64> {
    Ok(unit_root(k.base, walsh_exponent(k, x_digits)?))
}

/// Real-valued `wal_k(x)` for `p = 2`; returns `+1` or `-1`.
pub fn walsh_eval_binary(k: u64, x_digits: &DigitVector) -> f64 {
    let parity = x_digits.digits.iter().enumerate().take(64).fold(0u8, |acc, (i, &d)| acc ^ (d & ((k >> i) & 1) as u8));
    if parity == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Multivariate Walsh function: product of the coordinate factors.
pub fn walsh_eval_vec(k: &WavenumberVector, x: &[DigitVector]) -> Result<Complex64> {
    if k.dim() != x.len() {
        return Err(WalshError::DimensionMismatch { expected: k.dim(), found: x.len() });
    }
    let mut e = 0u32;
    for (kj, xj) in k.components.iter().zip(x) {
        e += walsh_exponent(kj, xj)?;
    }
    Ok(unit_root(k.base, e))
}
