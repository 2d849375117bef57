//! Walsh-space reproducing kernels and their sample vectors over a net.
//!
//! Every kernel here is a function of `x ⊖ y` only through the index of the
//! first base-`p` digit where the two points differ, so per-parameter work
//! reduces to small lookup tables indexed by that level.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::base_p::{fraction_word, DigitVector, PrimeBase};
use crate::dd::Dd;
use crate::error::{Result, WalshError};
use crate::fwt::SampleVector;
use crate::net::GeneratingMatrices;

/// Kernel smoothness and coordinate weights.
///
/// In factorized form `gamma[j] = beta * (j+1)^q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsRepr", into = "ParamsRepr")]
pub struct KernelParams {
    p: PrimeBase,
    alpha: f64,
    gamma: Vec<f64>,
    factor: Option<(f64, f64)>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ParamsRepr {
    Factorized { p: PrimeBase, alpha: f64, beta: f64, q: f64, s: usize },
    Raw { p: PrimeBase, alpha: f64, gamma: Vec<f64> },
}

impl TryFrom<ParamsRepr> for KernelParams {
    type Error = WalshError;

    fn try_from(r: ParamsRepr) -> Result<Self> {
        match r {
            ParamsRepr::Factorized { p, alpha, beta, q, s } => KernelParams::factorized(p, alpha, beta, q, s),
            ParamsRepr::Raw { p, alpha, gamma } => KernelParams::new(p, alpha, gamma),
        }
    }
}

impl From<KernelParams> for ParamsRepr {
    fn from(k: KernelParams) -> Self {
        match k.factor {
            Some((beta, q)) => ParamsRepr::Factorized { p: k.p, alpha: k.alpha, beta, q, s: k.gamma.len() },
            None => ParamsRepr::Raw { p: k.p, alpha: k.alpha, gamma: k.gamma },
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha > 1.0) {
        return Err(WalshError::InvalidParams(format!("alpha must exceed 1, got {alpha}")));
    }
    Ok(())
}

impl KernelParams {
    /// Raw per-coordinate weights.
    pub fn new(p: PrimeBase, alpha: f64, gamma: Vec<f64>) -> Result<Self> {
        check_alpha(alpha)?;
        if gamma.is_empty() {
            return Err(WalshError::InvalidParams("need at least one weight".into()));
        }
        if let Some(g) = gamma.iter().find(|g| !(g.is_finite() && **g > 0.0)) {
            return Err(WalshError::InvalidParams(format!("weights must be positive and finite, got {g}")));
        }
        Ok(KernelParams { p, alpha, gamma, factor: None })
    }

    /// Weights `gamma_j = beta * j^q` for `j = 1..=s`.
    pub fn factorized(p: PrimeBase, alpha: f64, beta: f64, q: f64, s: usize) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(WalshError::InvalidParams(format!("beta must be positive, got {beta}")));
        }
        if !q.is_finite() {
            return Err(WalshError::InvalidParams(format!("q must be finite, got {q}")));
        }
        let gamma = (1..=s).map(|j| beta * (j as f64).powf(q)).collect();
        let mut out = KernelParams::new(p, alpha, gamma)?;
        out.factor = Some((beta, q));
        Ok(out)
    }

    pub fn base(&self) -> PrimeBase {
        self.p
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn s(&self) -> usize {
        self.gamma.len()
    }

    pub fn beta(&self) -> Option<f64> {
        self.factor.map(|f| f.0)
    }

    pub fn q(&self) -> Option<f64> {
        self.factor.map(|f| f.1)
    }

    /// Reduced weights `j^q`, if factorized.
    pub fn reduced_gamma(&self) -> Option<Vec<f64>> {
        let (_, q) = self.factor?;
        Some((1..=self.s()).map(|j| (j as f64).powf(q)).collect())
    }
}

/// Index `a` with `p^a <= k < p^{a+1}`; `k` must be positive.
fn leading_index(k: u64, p: PrimeBase) -> u32 {
    if p.get() == 2 {
        return 63 - k.leading_zeros();
    }
    let p = p.get() as u64;
    let mut a = 0;
    let mut rest = k / p;
    while rest > 0 {
        rest /= p;
        a += 1;
    }
    a
}

/// Univariate Walsh coefficient `K'^(k)`.
pub fn k1_hat(k: u64, p: PrimeBase, alpha: f64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let pf = p.get() as f64;
    let pa = pf.powf(alpha);
    (pa - pf) / (pa * (pf - 1.0)) * pa.powi(-(leading_index(k, p) as i32))
}

/// Univariate coefficient `R'^(k) = K'^(k)^2`.
pub fn r1_hat(k: u64, p: PrimeBase, alpha: f64) -> f64 {
    let v = k1_hat(k, p, alpha);
    v * v
}

/// `K'(x, y)` when the first differing digit is `level` (1-based); `None`
/// when the points agree on every digit.
pub fn k1_at_level(level: Option<usize>, p: PrimeBase, alpha: f64) -> f64 {
    let Some(i) = level else { return 1.0 };
    let pf = p.get() as f64;
    1.0 - pf.powf(i as f64 * (1.0 - alpha)) * (pf.powf(alpha) - 1.0) / (pf - 1.0)
}

/// `R'(x, y)` for the same level convention as [`k1_at_level`].
pub fn r1_at_level(level: Option<usize>, p: PrimeBase, alpha: f64) -> f64 {
    let pf = p.get() as f64;
    let p2a = pf.powf(2.0 * alpha);
    let pa = pf.powf(alpha);
    let scale = (pa - pf) * (pa - pf) / ((pf - 1.0) * (p2a - pf));
    match level {
        None => scale,
        Some(i) => scale * (1.0 - pf.powf(i as f64 * (1.0 - 2.0 * alpha)) * (p2a - 1.0) / (pf - 1.0)),
    }
}

/// First digit (1-based) where the two expansions differ, over their common length.
pub fn first_difference(x: &DigitVector, y: &DigitVector) -> Option<usize> {
    x.digits().iter().zip(y.digits()).position(|(a, b)| a != b).map(|i| i + 1)
}

pub fn k1_closed(x: &DigitVector, y: &DigitVector, alpha: f64) -> f64 {
    k1_at_level(first_difference(x, y), x.base(), alpha)
}

pub fn r1_closed(x: &DigitVector, y: &DigitVector, alpha: f64) -> f64 {
    r1_at_level(first_difference(x, y), x.base(), alpha)
}

/// Level (1-based leading digit position) of an `r`-digit word, 0 for zero.
pub fn word_level(w: u64, p: PrimeBase, r: usize) -> u8 {
    if w == 0 {
        return 0;
    }
    (r - leading_index(w, p) as usize) as u8
}

/// First differing digit of two `r`-digit words, 0 if equal.
pub fn word_difference_level(x: u64, y: u64, p: PrimeBase, r: usize) -> u8 {
    if x == y {
        return 0;
    }
    if p.get() == 2 {
        return word_level(x ^ y, p, r);
    }
    let pp = p.get() as u64;
    let (mut a, mut b) = (x, y);
    let mut shift = 0;
    let mut last = 0;
    while a != b {
        if a % pp != b % pp {
            last = shift;
        }
        a /= pp;
        b /= pp;
        shift += 1;
    }
    (r - last) as u8
}

/// Level tables of a net: `levels[n * s + j]` is the leading digit position
/// of coordinate `j` of point `n` (0 for the zero coordinate).
#[derive(Clone, Debug)]
pub struct NetGeometry {
    p: PrimeBase,
    m: usize,
    r: usize,
    s: usize,
    words: Vec<u64>,
    levels: Vec<u8>,
}

impl NetGeometry {
    pub fn new(c: &GeneratingMatrices) -> Self {
        let (p, r) = (c.base(), c.r());
        let words = c.coordinate_words();
        let levels = words.par_iter().map(|&w| word_level(w, p, r)).collect();
        NetGeometry { p, m: c.m(), r, s: c.s(), words, levels }
    }

    pub fn base(&self) -> PrimeBase {
        self.p
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn len(&self) -> usize {
        self.words.len() / self.s
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn levels(&self) -> &[u8] {
        &self.levels
    }

    /// Leading `p^k` points, which form the net of the first `k` columns.
    pub fn prefix(&self, k: usize) -> Result<NetGeometry> {
        if k > self.m {
            return Err(WalshError::IndexOutOfRange { index: k as u64, limit: self.m as u64 + 1 });
        }
        let n = self.p.len_pow(k)? * self.s;
        Ok(NetGeometry {
            p: self.p,
            m: k,
            r: self.r,
            s: self.s,
            words: self.words[..n].to_vec(),
            levels: self.levels[..n].to_vec(),
        })
    }

    fn check(&self, params: &KernelParams) -> Result<()> {
        if params.base() != self.p {
            return Err(WalshError::BaseMismatch { left: params.base().get(), right: self.p.get() });
        }
        if params.s() != self.s {
            return Err(WalshError::DimensionMismatch { expected: self.s, found: params.s() });
        }
        Ok(())
    }

    /// Query point as `r`-digit words.
    pub fn point_words(&self, x: &[f64]) -> Result<Vec<u64>> {
        if x.len() != self.s {
            return Err(WalshError::DimensionMismatch { expected: self.s, found: x.len() });
        }
        x.iter()
            .enumerate()
            .map(|(j, &v)| fraction_word(v, self.p, self.r).map_err(|_| WalshError::OutOfDomain { coord: j, value: v }))
            .collect()
    }
}

fn level_tables(p: PrimeBase, alpha: f64, r: usize) -> (Vec<Dd>, Vec<Dd>) {
    let pf = p.get() as f64;
    let ln_p = Dd::new(pf).ln();
    let pow = |e: Dd| (e * ln_p).exp();
    let a = Dd::new(alpha);
    let pa = pow(a);
    let p2a = pow(a * 2.0);
    let pm1 = Dd::new(pf - 1.0);
    let rho_k = pow(Dd::ONE - a);
    let rho_r = pow(Dd::ONE - a * 2.0);
    let ck = (pa - Dd::ONE) / pm1;
    let cr = (p2a - Dd::ONE) / pm1;
    let d = pa - Dd::new(pf);
    let scale = d * d / (pm1 * (p2a - Dd::new(pf)));
    let mut k = vec![Dd::ONE];
    let mut rr = vec![scale];
    let (mut tk, mut tr) = (Dd::ONE, Dd::ONE);
    for _ in 1..=r {
        tk = tk * rho_k;
        tr = tr * rho_r;
        k.push(Dd::ONE - tk * ck);
        rr.push(scale * (Dd::ONE - tr * cr));
    }
    (k, rr)
}

/// `K'` indexed by level `0..=r`, level 0 meaning equal digits.
pub fn k1_table(p: PrimeBase, alpha: f64, r: usize) -> Vec<f64> {
    level_tables(p, alpha, r).0.into_iter().map(Dd::to_f64).collect()
}

/// `R'` indexed by level `0..=r`.
pub fn r1_table(p: PrimeBase, alpha: f64, r: usize) -> Vec<f64> {
    level_tables(p, alpha, r).1.into_iter().map(Dd::to_f64).collect()
}

fn to_f64(v: Vec<Dd>) -> Vec<f64> {
    v.into_iter().map(Dd::to_f64).collect()
}

pub(crate) fn kernel_values_dd(geom: &NetGeometry, params: &KernelParams) -> Result<Vec<Dd>> {
    geom.check(params)?;
    let base = level_tables(geom.p, params.alpha, geom.r).0;
    let weighted: Vec<Vec<Dd>> = params.gamma.iter().map(|&g| base.iter().map(|&k| Dd::ONE + k * g).collect()).collect();
    Ok(geom
        .levels
        .par_chunks(geom.s)
        .map(|lv| lv.iter().zip(&weighted).fold(Dd::ONE, |acc, (&l, t)| acc * t[l as usize]))
        .collect())
}

/// `K(x_n, 0) = prod_j (1 + gamma_j K'(x_{j,n}, 0))` over the net.
pub fn kernel_values(geom: &NetGeometry, params: &KernelParams) -> Result<Vec<f64>> {
    kernel_values_dd(geom, params).map(to_f64)
}

pub fn kernel_data_k(c: &GeneratingMatrices, params: &KernelParams) -> Result<SampleVector> {
    SampleVector::from_real(c.base(), &kernel_values(&NetGeometry::new(c), params)?)
}

pub(crate) fn r_terms_dd(geom: &NetGeometry, params: &KernelParams, j: usize) -> Result<Vec<Dd>> {
    geom.check(params)?;
    if j >= geom.s {
        return Err(WalshError::IndexOutOfRange { index: j as u64, limit: geom.s as u64 });
    }
    let g = params.gamma[j];
    let table: Vec<Dd> = level_tables(geom.p, params.alpha, geom.r).1.into_iter().map(|r| r * g * g).collect();
    Ok(geom.levels.iter().skip(j).step_by(geom.s).map(|&l| table[l as usize]).collect())
}

/// Per-point factors `gamma_j^2 R'(x_{j,n}, 0)` for one coordinate.
pub fn r_terms(geom: &NetGeometry, params: &KernelParams, j: usize) -> Result<Vec<f64>> {
    r_terms_dd(geom, params, j).map(to_f64)
}

/// `R_d(x_n, 0) = prod_{j<d} (1 + gamma_j^2 R'(x_{j,n}, 0))`.
pub fn kernel_values_rd(geom: &NetGeometry, params: &KernelParams, d: usize) -> Result<Vec<f64>> {
    geom.check(params)?;
    if d > geom.s {
        return Err(WalshError::IndexOutOfRange { index: d as u64, limit: geom.s as u64 + 1 });
    }
    let mut out = vec![Dd::ONE; geom.len()];
    for j in 0..d {
        for (o, a) in out.iter_mut().zip(r_terms_dd(geom, params, j)?) {
            *o = *o * (Dd::ONE + a);
        }
    }
    Ok(to_f64(out))
}

pub fn kernel_data_rd(c: &GeneratingMatrices, params: &KernelParams, d: usize) -> Result<SampleVector> {
    SampleVector::from_real(c.base(), &kernel_values_rd(&NetGeometry::new(c), params, d)?)
}

pub(crate) fn kernel_values_ru_dd(geom: &NetGeometry, alpha: f64, u: &[usize]) -> Result<Vec<Dd>> {
    let mut seen = vec![false; geom.s];
    for &j in u {
        if j >= geom.s || seen[j] {
            return Err(WalshError::InvalidParams(format!("invalid coordinate subset {u:?}")));
        }
        seen[j] = true;
    }
    let table = level_tables(geom.p, alpha, geom.r).1;
    Ok(geom.levels.chunks(geom.s).map(|lv| u.iter().fold(Dd::ONE, |acc, &j| acc * table[lv[j] as usize])).collect())
}

/// `R_u(x_n, 0) = prod_{j in u} R'(x_{j,n}, 0)` for zero-based coordinates `u`.
pub fn kernel_values_ru(geom: &NetGeometry, alpha: f64, u: &[usize]) -> Result<Vec<f64>> {
    kernel_values_ru_dd(geom, alpha, u).map(to_f64)
}

pub fn kernel_data_ru(c: &GeneratingMatrices, alpha: f64, u: &[usize]) -> Result<SampleVector> {
    SampleVector::from_real(c.base(), &kernel_values_ru(&NetGeometry::new(c), alpha, u)?)
}

/// Coefficients `e_1..e_s` with `prod_j (1 + t a_j) = 1 + sum_j e_j t^j`.
pub fn elementary_sym_coeffs(a: &[f64]) -> Vec<f64> {
    let mut e = vec![0.0; a.len() + 1];
    e[0] = 1.0;
    for (k, &v) in a.iter().enumerate() {
        for j in (1..=k + 1).rev() {
            e[j] += v * e[j - 1];
        }
    }
    e.remove(0);
    e
}

fn elementary_sym_dd(a: &[Dd]) -> Vec<Dd> {
    let mut e = vec![Dd::ZERO; a.len() + 1];
    e[0] = Dd::ONE;
    for (k, &v) in a.iter().enumerate() {
        for j in (1..=k + 1).rev() {
            e[j] = e[j] + v * e[j - 1];
        }
    }
    e.remove(0);
    e
}

pub(crate) fn degree_slices_dd(geom: &NetGeometry, alpha: f64, weights: &[f64]) -> Result<Vec<Vec<Dd>>> {
    if weights.len() != geom.s {
        return Err(WalshError::DimensionMismatch { expected: geom.s, found: weights.len() });
    }
    let table = level_tables(geom.p, alpha, geom.r).1;
    let per_point: Vec<Vec<Dd>> = geom
        .levels
        .par_chunks(geom.s)
        .map(|lv| {
            let a: Vec<Dd> = lv.iter().zip(weights).map(|(&l, &w)| table[l as usize] * w * w).collect();
            elementary_sym_dd(&a)
        })
        .collect();
    Ok((0..geom.s).map(|j| per_point.iter().map(|e| e[j]).collect()).collect())
}

/// Degree slices `Q[j-1][n] = e_j(w_1^2 R'(x_{1,n},0), ..., w_s^2 R'(x_{s,n},0))`.
pub fn degree_slices(geom: &NetGeometry, alpha: f64, weights: &[f64]) -> Result<Vec<Vec<f64>>> {
    Ok(degree_slices_dd(geom, alpha, weights)?.into_iter().map(to_f64).collect())
}

/// Sample-space `Q(., j)` built from the reduced weights of factorized params.
pub fn q_slices(geom: &NetGeometry, params: &KernelParams) -> Result<Vec<Vec<f64>>> {
    geom.check(params)?;
    let reduced = params.reduced_gamma().ok_or(WalshError::NotFactorized)?;
    degree_slices(geom, params.alpha, &reduced)
}
