//! Fast discrete Walsh transform over `Z_p^m` and its inverse.
//!
//! Stage `r` replaces index digit `n_{r-1}` by frequency digit `h_{r-1}` in
//! place, so after all `m` stages slot `h = h_0 + h_1 p + ...` holds the
//! coefficient of coset label `h`. The transform never looks at generating
//! matrices: any net semantics come from how the samples were ordered.

use num_complex::Complex64;

use crate::base_p::{unit_roots, PrimeBase};
use crate::dd::{self, Dd};
use crate::error::{Result, WalshError};

/// Function or coefficient values indexed by net point index `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleVector {
    p: PrimeBase,
    m: usize,
    values: Vec<Complex64>,
}

/// Discrete Walsh coefficients indexed by coset label `h`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralVector {
    p: PrimeBase,
    m: usize,
    values: Vec<Complex64>,
}

macro_rules! vector_common {
    ($name:ident) => {
        impl $name {
            /// Wraps `values`, which must have length `p^m` for some `m`.
            pub fn new(p: PrimeBase, values: Vec<Complex64>) -> Result<Self> {
                let m = p.log_exact(values.len()).ok_or(WalshError::NotPowerOfBase { len: values.len(), p: p.get() })?;
                Ok($name { p, m, values })
            }

            pub fn from_real(p: PrimeBase, values: &[f64]) -> Result<Self> {
                Self::new(p, values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
            }

            pub fn base(&self) -> PrimeBase {
                self.p
            }

            pub fn m(&self) -> usize {
                self.m
            }

            pub fn len(&self) -> usize {
                self.values.len()
            }

            pub fn is_empty(&self) -> bool {
                self.values.is_empty()
            }

            pub fn values(&self) -> &[Complex64] {
                &self.values
            }

            pub fn values_mut(&mut self) -> &mut [Complex64] {
                &mut self.values
            }

            pub fn into_values(self) -> Vec<Complex64> {
                self.values
            }

            /// Real parts.
            pub fn re(&self) -> Vec<f64> {
                self.values.iter().map(|v| v.re).collect()
            }

            /// Largest imaginary magnitude relative to the largest magnitude.
            pub fn imag_residue(&self) -> f64 {
                let scale = self.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
                if scale == 0.0 {
                    return 0.0;
                }
                self.values.iter().map(|v| v.im.abs()).fold(0.0, f64::max) / scale
            }
        }
    };
}

vector_common!(SampleVector);
vector_common!(SpectralVector);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Direction {
    Forward,
    Inverse,
}

/// Operation tally of one transform.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TransformStats {
    pub stages: usize,
    pub butterflies: u64,
    /// Complex multiply-adds (`p^2` per butterfly).
    pub multiply_adds: u64,
}

fn stage_count(p: PrimeBase, len: usize) -> Result<usize> {
    p.log_exact(len).ok_or(WalshError::NotPowerOfBase { len, p: p.get() })
}

/// Elements per cache-resident chunk for the low stages.
const CHUNK: usize = 1 << 15;
/// Most stages fused per memory pass above `CHUNK`.
const GROUP: usize = 7;
/// Contiguous lanes processed together in the fused high stages.
const LANES: usize = 64;

#[inline]
fn butterflies(lo: &mut [Complex64], hi: &mut [Complex64]) {
    for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
        let (x, y) = (*a, *b);
        *a = x + y;
        *b = x - y;
    }
}

/// Radix-2 stages reordered so each memory pass applies several stages:
/// every stage below `CHUNK` runs chunk by chunk, the rest in balanced
/// groups of at most `GROUP` stages over `LANES`-wide rows.
/// `scale` multiplies the output while it is still in cache.
fn binary_blocked(buf: &mut [Complex64], scale: f64) {
    let len = buf.len();
    let chunk = CHUNK.min(len);
    for c in buf.chunks_exact_mut(chunk) {
        let mut stride = 1;
        while stride < chunk {
            for block in c.chunks_exact_mut(2 * stride) {
                let (lo, hi) = block.split_at_mut(stride);
                butterflies(lo, hi);
            }
            stride *= 2;
        }
        if chunk == len && scale != 1.0 {
            c.iter_mut().for_each(|v| *v *= scale);
        }
    }
    let high = (len / chunk).trailing_zeros() as usize;
    let per_pass = if high == 0 { 0 } else { high.div_ceil(high.div_ceil(GROUP)) };
    let mut st = chunk;
    while st < len {
        let g = per_pass.min((len / st).trailing_zeros() as usize);
        let span = st << g;
        let last = span == len && scale != 1.0;
        for sup in buf.chunks_exact_mut(span) {
            for l0 in (0..st).step_by(LANES) {
                for k in 0..g {
                    let s = st << k;
                    for j in (0..1usize << g).filter(|j| j & (1 << k) == 0) {
                        let a = j * st + l0;
                        let (x, y) = sup.split_at_mut(a + s);
                        butterflies(&mut x[a..a + LANES], &mut y[..LANES]);
                    }
                }
                if last {
                    for j in 0..1usize << g {
                        let a = j * st + l0;
                        sup[a..a + LANES].iter_mut().for_each(|v| *v *= scale);
                    }
                }
            }
        }
        st = span;
    }
}

fn transform(p: PrimeBase, buf: &mut [Complex64], dir: Direction, scale: f64) -> Result<TransformStats> {
    let m = stage_count(p, buf.len())?;
    let mut stats = TransformStats { stages: m, ..Default::default() };
    let len = buf.len();
    if p.get() == 2 {
        binary_blocked(buf, scale);
        stats.butterflies = (m * len / 2) as u64;
        stats.multiply_adds = stats.butterflies * 4;
        return Ok(stats);
    }

    let pp = p.get() as usize;
    let mut roots = unit_roots(p);
    if dir == Direction::Forward {
        roots.iter_mut().for_each(|w| *w = w.conj());
    }
    let mut gathered = vec![Complex64::default(); pp];
    let mut stride = 1;
    while stride < len {
        let block = stride * pp;
        for start in (0..len).step_by(block) {
            for lane in start..start + stride {
                for (d, g) in gathered.iter_mut().enumerate() {
                    *g = buf[lane + d * stride];
                }
                for h in 0..pp {
                    let mut acc = gathered[0];
                    let mut e = 0;
                    for g in &gathered[1..] {
                        e += h;
                        if e >= pp {
                            e -= pp;
                        }
                        acc += g * roots[e];
                    }
                    buf[lane + h * stride] = acc;
                }
            }
        }
        stats.butterflies += (len / pp) as u64;
        stride = block;
    }
    stats.multiply_adds = stats.butterflies * (pp * pp) as u64;
    if scale != 1.0 {
        buf.iter_mut().for_each(|v| *v *= scale);
    }
    Ok(stats)
}

/// Unnormalized forward transform in place: `buf[h] <- sum_n buf[n] omega^{-n.h}`.
pub fn fwt_unnormalized_in_place(p: PrimeBase, buf: &mut [Complex64]) -> Result<TransformStats> {
    transform(p, buf, Direction::Forward, 1.0)
}

/// Forward transform in place, including the `1/p^m` factor.
pub fn fwt_in_place(p: PrimeBase, buf: &mut [Complex64]) -> Result<TransformStats> {
    let scale = 1.0 / buf.len() as f64;
    transform(p, buf, Direction::Forward, scale)
}

/// Inverse transform in place: `buf[n] <- sum_h buf[h] omega^{+n.h}`.
pub fn ifwt_in_place(p: PrimeBase, buf: &mut [Complex64]) -> Result<TransformStats> {
    transform(p, buf, Direction::Inverse, 1.0)
}

/// `fwt(f)[h] = p^{-m} sum_n f[n] omega_p^{-n.h}`.
pub fn fwt(f: &SampleVector) -> SpectralVector {
    let mut values = f.values.clone();
    fwt_in_place(f.p, &mut values).expect("length checked at construction");
    SpectralVector { p: f.p, m: f.m, values }
}

/// `ifwt(g)[n] = sum_h g[h] omega_p^{+n.h}`; inverts [`fwt`].
pub fn ifwt(g: &SpectralVector) -> SampleVector {
    let mut values = g.values.clone();
    ifwt_in_place(g.p, &mut values).expect("length checked at construction");
    SampleVector { p: g.p, m: g.m, values }
}

/// [`fwt`] together with its operation tally.
pub fn fwt_with_stats(f: &SampleVector) -> (SpectralVector, TransformStats) {
    let mut values = f.values.clone();
    let stats = fwt_in_place(f.p, &mut values).expect("length checked at construction");
    (SpectralVector { p: f.p, m: f.m, values }, stats)
}

/// Binary transform on real data, unnormalized: add/sub butterflies only.
pub fn fwt_binary_unnormalized(buf: &mut [f64]) -> Result<()> {
    let len = buf.len();
    if !len.is_power_of_two() {
        return Err(WalshError::NotPowerOfBase { len, p: 2 });
    }
    let mut stride = 1;
    while stride < len {
        for block in buf.chunks_exact_mut(2 * stride) {
            let (lo, hi) = block.split_at_mut(stride);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        stride *= 2;
    }
    Ok(())
}

/// Real-valued binary forward transform with the `1/2^m` factor.
pub fn fwt_binary(buf: &mut [f64]) -> Result<()> {
    fwt_binary_unnormalized(buf)?;
    let scale = 1.0 / buf.len() as f64;
    buf.iter_mut().for_each(|v| *v *= scale);
    Ok(())
}

/// Real-valued binary inverse transform (no normalization).
pub fn ifwt_binary(buf: &mut [f64]) -> Result<()> {
    fwt_binary_unnormalized(buf)
}

/// Normalized forward transform of real data held in double-double; the
/// binary case keeps the extra precision through every butterfly.
pub(crate) fn real_spectrum(p: PrimeBase, vals: Vec<Dd>) -> Result<Vec<Complex64>> {
    let scale = 1.0 / vals.len() as f64;
    if p.get() == 2 {
        let mut buf = vals;
        if !buf.len().is_power_of_two() {
            return Err(WalshError::NotPowerOfBase { len: buf.len(), p: 2 });
        }
        dd::wht_in_place(&mut buf);
        return Ok(buf.into_iter().map(|v| Complex64::new((v * scale).to_f64(), 0.0)).collect());
    }
    let mut buf: Vec<Complex64> = vals.into_iter().map(|v| Complex64::new(v.to_f64(), 0.0)).collect();
    fwt_in_place(p, &mut buf)?;
    Ok(buf)
}

/// Default point-count cap for [`dwt_naive`].
pub const NAIVE_SIZE_CAP: usize = 1 << 14;

/// Direct `O(p^{2m})` evaluation of the forward transform, used as an oracle.
pub fn dwt_naive(f: &SampleVector, cap: usize) -> Result<SpectralVector> {
    let len = f.len();
    if len > cap {
        return Err(WalshError::SizeCapExceeded { size: len as u64, cap: cap as u64 });
    }
    let p = f.p;
    let pp = p.get() as usize;
    let roots: Vec<Complex64> = unit_roots(p).into_iter().map(|w| w.conj()).collect();
    let digits: Vec<Vec<usize>> = (0..len)
        .map(|n| {
            let mut rest = n;
            (0..f.m)
                .map(|_| {
                    let d = rest % pp;
                    rest /= pp;
                    d
                })
                .collect()
        })
        .collect();
    let scale = 1.0 / len as f64;
    let values = (0..len)
        .map(|h| {
            let mut acc = Complex64::default();
            for (n, fv) in f.values.iter().enumerate() {
                let e = digits[n].iter().zip(&digits[h]).map(|(a, b)| a * b).sum::<usize>() % pp;
                acc += fv * roots[e];
            }
            acc * scale
        })
        .collect();
    Ok(SpectralVector { p, m: f.m, values })
}
