//! Multiplicative test functions, the Asian call payoff and the QMC variance.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Result, WalshError};
use crate::fwt::SampleVector;
use crate::kernel::elementary_sym_coeffs;
use crate::net::GeneratingMatrices;

/// Uniforms are clamped to `[CLAMP, 1 - CLAMP]` before the inverse normal map.
pub const CLAMP: f64 = 1.0 / (1u64 << 30) as f64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AMode {
    Ones,
    Linear,
    Quadratic,
}

impl std::str::FromStr for AMode {
    type Err = WalshError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ones" => Ok(AMode::Ones),
            "linear" => Ok(AMode::Linear),
            "quadratic" => Ok(AMode::Quadratic),
            other => Err(WalshError::Parse(format!("unknown a-mode '{other}'"))),
        }
    }
}

/// `f(x) = prod_k (|4 x_k - 2| + a_k) / (1 + a_k)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiplicativeSpec {
    pub s: usize,
    pub a_mode: AMode,
}

impl MultiplicativeSpec {
    pub fn new(s: usize, a_mode: AMode) -> Result<Self> {
        if s == 0 {
            return Err(WalshError::InvalidParams("dimension must be at least 1".into()));
        }
        Ok(MultiplicativeSpec { s, a_mode })
    }

    /// `a_k` for `k = 1..=s`.
    pub fn a(&self) -> Vec<f64> {
        (1..=self.s)
            .map(|k| {
                let k = k as f64;
                match self.a_mode {
                    AMode::Ones => 1.0,
                    AMode::Linear => k,
                    AMode::Quadratic => k * k,
                }
            })
            .collect()
    }
}

fn check_point(x: &[f64], s: usize) -> Result<()> {
    if x.len() != s {
        return Err(WalshError::DimensionMismatch { expected: s, found: x.len() });
    }
    if let Some((coord, &value)) = x.iter().enumerate().find(|(_, v)| !(0.0..1.0).contains(*v)) {
        return Err(WalshError::OutOfDomain { coord, value });
    }
    Ok(())
}

pub fn multiplicative_eval(spec: &MultiplicativeSpec, x: &[f64]) -> Result<f64> {
    check_point(x, spec.s)?;
    Ok(x.iter().zip(spec.a()).map(|(v, a)| ((4.0 * v - 2.0).abs() + a) / (1.0 + a)).product())
}

/// Analytic ANOVA quantities of a multiplicative function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiplicativeExact {
    /// `sigma^2(f_{j})` for each single coordinate.
    pub single: Vec<f64>,
    pub total: f64,
    pub trunc: Vec<f64>,
    pub sup: Vec<f64>,
    pub d_trc: usize,
    pub d_sup: usize,
}

impl MultiplicativeExact {
    /// `sigma^2(f_u) = prod_{j in u} 1/(3 (1 + a_j)^2)` for zero-based `u`.
    pub fn subset_variance(&self, u: &[usize]) -> f64 {
        if u.is_empty() {
            return 0.0;
        }
        u.iter().map(|&j| self.single[j]).product()
    }
}

pub fn multiplicative_exact(spec: &MultiplicativeSpec, threshold: f64) -> Result<MultiplicativeExact> {
    if spec.s > 64 {
        return Err(WalshError::SizeCapExceeded { size: spec.s as u64, cap: 64 });
    }
    let single: Vec<f64> = spec.a().iter().map(|a| 1.0 / (3.0 * (1.0 + a).powi(2))).collect();
    let mut trunc = vec![0.0];
    let mut prod = 1.0;
    for v in &single {
        prod *= 1.0 + v;
        trunc.push(prod - 1.0);
    }
    let total = trunc[spec.s];
    let mut sup = vec![0.0];
    for e in elementary_sym_coeffs(&single) {
        sup.push(sup.last().unwrap() + e);
    }
    let first = |c: &[f64]| c.iter().position(|&v| v >= threshold * total).unwrap_or(spec.s);
    Ok(MultiplicativeExact { d_trc: first(&trunc), d_sup: first(&sup), single, total, trunc, sup })
}

/// Arithmetic-average Asian call under geometric Brownian motion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsianOptionSpec {
    pub s: usize,
    pub s0: f64,
    pub strike: f64,
    pub sigma: f64,
    pub rate: f64,
    pub maturity: f64,
    /// Average over `S_0, ..., S_s` rather than `S_1, ..., S_s`.
    #[serde(default = "default_true")]
    pub include_s0: bool,
}

fn default_true() -> bool {
    true
}

impl AsianOptionSpec {
    /// `S0 = K = 100`, `sigma = 0.2`, `r = 0.1`, `T = 1`, averaging from `S_0`.
    pub fn standard(s: usize) -> Self {
        AsianOptionSpec { s, s0: 100.0, strike: 100.0, sigma: 0.2, rate: 0.1, maturity: 1.0, include_s0: true }
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [self.s0, self.strike, self.maturity];
        if self.s == 0 || vals.iter().any(|v| !(v.is_finite() && *v > 0.0)) || !(self.sigma >= 0.0) || !self.rate.is_finite() {
            return Err(WalshError::InvalidParams("asian option needs s >= 1, positive prices and maturity, sigma >= 0".into()));
        }
        Ok(())
    }
}

/// Discounted payoff `e^{-rT} max(mean_j S_j - K, 0)` along the path driven by `x`,
/// the mean taken over `j = 0..=s` or `j = 1..=s`.
pub fn asian_payoff(spec: &AsianOptionSpec, x: &[f64]) -> Result<f64> {
    check_point(x, spec.s)?;
    let dt = spec.maturity / spec.s as f64;
    let drift = (spec.rate - 0.5 * spec.sigma * spec.sigma) * dt;
    let vol = spec.sigma * dt.sqrt();
    let mut log_s = spec.s0.ln();
    let (mut sum, count) = if spec.include_s0 { (spec.s0, spec.s + 1) } else { (0.0, spec.s) };
    for &u in x {
        let z = inv_normal_cdf(u.clamp(CLAMP, 1.0 - CLAMP))?;
        log_s += drift + vol * z;
        sum += log_s.exp();
    }
    Ok((-spec.rate * spec.maturity).exp() * (sum / count as f64 - spec.strike).max(0.0))
}

/// Standard normal quantile: rational approximation plus one Halley step.
pub fn inv_normal_cdf(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(WalshError::OutOfDomain { coord: 0, value: u });
    }
    const A: [f64; 6] = [-3.969683028665376e1, 2.209460984245205e2, -2.759285104469687e2, 1.383577518672690e2, -3.066479806614716e1, 2.506628277459239];
    const B: [f64; 5] = [-5.447609879822406e1, 1.615858368580409e2, -1.556989798598866e2, 6.680131188771972e1, -1.328068155288572e1];
    const C: [f64; 6] = [-7.784894002430293e-3, -3.223964580411365e-1, -2.400758277161838, -2.549732539343734, 4.374664141464968, 2.938163982698783];
    const D: [f64; 4] = [7.784695709041462e-3, 3.224671290700398e-1, 2.445134137142996, 3.754408661907416];
    const LOW: f64 = 0.02425;
    let tail = |q: f64| (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5]) / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0);
    let x = if u < LOW {
        tail((-2.0 * u.ln()).sqrt())
    } else if u > 1.0 - LOW {
        -tail((-2.0 * (1.0 - u).ln()).sqrt())
    } else {
        let q = u - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    let e = 0.5 * erfc(-x / std::f64::consts::SQRT_2) - u;
    let g = e * (2.0 * std::f64::consts::PI).sqrt() * (0.5 * x * x).exp();
    Ok(x - g / (1.0 + 0.5 * x * g))
}

/// `mean(f^2) - mean(f)^2`, computed in two passes.
pub fn qmc_variance(fvals: &[f64]) -> f64 {
    if fvals.is_empty() {
        return 0.0;
    }
    let n = fvals.len() as f64;
    let mean = fvals.iter().sum::<f64>() / n;
    fvals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

/// Samples `f` at every point of the net, in index order.
pub fn sample_on_net<F>(net: &GeneratingMatrices, f: F) -> Result<SampleVector>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let s = net.s();
    let scale = net.base().checked_pow(net.r()).ok_or(WalshError::DigitOverflow { value: 0, p: net.base().get(), len: net.r() })? as f64;
    let words = net.coordinate_words();
    let vals = words
        .par_chunks(s)
        .map(|w| {
            let x: Vec<f64> = w.iter().map(|&v| v as f64 / scale).collect();
            f(&x)
        })
        .collect::<Result<Vec<f64>>>()?;
    SampleVector::from_real(net.base(), &vals)
}
