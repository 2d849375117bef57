//! Double-double arithmetic (about 32 significant digits) for kernel spectra.

use std::ops::{Add, Mul, Neg, Sub};

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

const LN2: Dd = Dd { hi: std::f64::consts::LN_2, lo: 2.3190468138462996e-17 };

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

impl Dd {
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    pub fn new(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn recip(self) -> Dd {
        Dd::ONE / self
    }

    pub fn powi(self, n: u32) -> Dd {
        let (mut acc, mut base, mut e) = (Dd::ONE, self, n);
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            e >>= 1;
        }
        acc
    }

    pub fn exp(self) -> Dd {
        if self.hi == 0.0 {
            return Dd::ONE;
        }
        let k = (self.hi / LN2.hi).round();
        let r = self - LN2 * k;
        // e^r = (e^{r/32})^32 with a Taylor series for the small argument
        let t = Dd { hi: r.hi / 32.0, lo: r.lo / 32.0 };
        let mut term = Dd::ONE;
        let mut sum = Dd::ONE;
        for i in 1..=20 {
            term = term * t / Dd::new(i as f64);
            sum = sum + term;
        }
        for _ in 0..5 {
            sum = sum * sum;
        }
        let scale = 2f64.powi(k as i32);
        Dd { hi: sum.hi * scale, lo: sum.lo * scale }
    }

    /// Natural log of a positive value by one Newton step on `exp`.
    pub fn ln(self) -> Dd {
        let y = Dd::new(self.hi.ln());
        y + self * (-y).exp() - Dd::ONE
    }
}

impl From<f64> for Dd {
    fn from(x: f64) -> Dd {
        Dd::new(x)
    }
}

impl Add for Dd {
    type Output = Dd;
    #[inline]
    fn add(self, b: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, b.hi);
        let (t, f) = two_sum(self.lo, b.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }
}

impl Neg for Dd {
    type Output = Dd;
    #[inline]
    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }
}

impl Sub for Dd {
    type Output = Dd;
    #[inline]
    fn sub(self, b: Dd) -> Dd {
        self + (-b)
    }
}

impl Mul for Dd {
    type Output = Dd;
    #[inline]
    fn mul(self, b: Dd) -> Dd {
        let p = self.hi * b.hi;
        let e = self.hi.mul_add(b.hi, -p);
        let (hi, lo) = quick_two_sum(p, e + (self.hi * b.lo + self.lo * b.hi));
        Dd { hi, lo }
    }
}

impl Mul<f64> for Dd {
    type Output = Dd;
    #[inline]
    fn mul(self, b: f64) -> Dd {
        let p = self.hi * b;
        let e = self.hi.mul_add(b, -p);
        let (hi, lo) = quick_two_sum(p, e + self.lo * b);
        Dd { hi, lo }
    }
}

impl std::ops::Div for Dd {
    type Output = Dd;
    fn div(self, b: Dd) -> Dd {
        let q1 = self.hi / b.hi;
        let r = self - b * q1;
        let q2 = r.hi / b.hi;
        let r = r - b * q2;
        let q3 = r.hi / b.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo } + Dd::new(q3)
    }
}

/// Unnormalized binary Walsh-Hadamard transform in double-double.
pub fn wht_in_place(buf: &mut [Dd]) {
    let len = buf.len();
    assert!(len.is_power_of_two());
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
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: Dd, hi: f64, lo: f64) -> f64 {
        ((a - Dd { hi, lo }).to_f64() / hi).abs()
    }

    #[test]
    fn transcendental_accuracy() {
        // reference digits from a 50-digit evaluation
        assert!(rel(Dd::new(2.0).ln(), std::f64::consts::LN_2, 2.3190468138462996e-17) < 1e-30);
        let v = (Dd::new(-1.8496) * Dd::new(2.0).ln()).exp();
        assert!(rel(v, 0.27746928817498656, 8.327733405224273e-18) < 1e-29);
        assert!(rel(Dd::new(1.0).exp(), std::f64::consts::E, 1.4456468917292502e-16) < 1e-30);
        assert!(rel(Dd::new(10.0).ln(), std::f64::consts::LN_10, -2.1707562233822494e-16) < 1e-30);
    }

    #[test]
    fn arithmetic_round_trips() {
        let third = Dd::ONE / Dd::new(3.0);
        assert!(((third * 3.0) - Dd::ONE).to_f64().abs() < 1e-31);
        let x = Dd::new(1.0) + Dd::new(1e-20);
        assert_eq!((x - Dd::ONE).to_f64(), 1e-20);
        assert!((Dd::new(1.1).powi(10).to_f64() - 1.1f64.powi(10)).abs() < 1e-14);
    }

    #[test]
    fn transform_resolves_tiny_coefficients() {
        let n = 1 << 10;
        let mut v: Vec<Dd> = (0..n).map(|i| Dd::ONE + Dd::new(if i % 2 == 0 { 1e-25 } else { -1e-25 })).collect();
        wht_in_place(&mut v);
        assert_eq!(v[0].to_f64(), n as f64);
        assert!((v[1].to_f64() - n as f64 * 1e-25).abs() < 1e-35 * n as f64);
    }
}
