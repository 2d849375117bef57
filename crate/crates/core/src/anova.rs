//! ANOVA variances of a fitted spline and its effective dimensions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WalshError};
use crate::dd::Dd;
use crate::fwt::real_spectrum;
use crate::kernel::{degree_slices_dd, kernel_values_ru_dd, r_terms_dd, KernelParams};
use crate::spline::SplineModel;

/// Default share of the total variance defining the effective dimensions.
pub const DEFAULT_THRESHOLD: f64 = 0.99;

/// Truncation and superposition variance curves, indexed by `d = 0..=s`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub total: f64,
    pub trunc: Vec<f64>,
    pub sup: Vec<f64>,
    pub d_trc: usize,
    pub d_sup: usize,
    pub threshold: f64,
    pub params: KernelParams,
}

/// `p^{2m} sum_h |c~[h]|^2 G~[h]` where `G~ = fwt(g)`.
fn spectral_form(model: &SplineModel, g: Vec<Dd>) -> Result<f64> {
    let buf = real_spectrum(model.geometry().base(), g)?;
    let n2 = (buf.len() as f64).powi(2);
    Ok(n2 * model.c_tilde().values().iter().zip(&buf).map(|(c, r)| c.norm_sqr() * r.re).sum::<f64>())
}

/// `R_d(x_n, 0) - 1` for `d = 1..=s`, accumulated without cancellation.
fn trunc_kernels(model: &SplineModel) -> Result<Vec<Vec<Dd>>> {
    let geom = model.geometry();
    let mut prod = vec![Dd::ONE; geom.len()];
    let mut excess = vec![Dd::ZERO; geom.len()];
    let mut out = Vec::with_capacity(geom.s());
    for j in 0..geom.s() {
        let a = r_terms_dd(geom, model.params(), j)?;
        for ((e, pr), &a) in excess.iter_mut().zip(prod.iter_mut()).zip(&a) {
            *e = *e + a * *pr;
            *pr = *pr * (Dd::ONE + a);
        }
        out.push(excess.clone());
    }
    Ok(out)
}

/// `sigma^2(Sf) = p^{2m} sum_h |c~[h]|^2 (R~[h] - delta_{h,0})`.
pub fn variance_total(model: &SplineModel) -> Result<f64> {
    match trunc_kernels(model)?.pop() {
        Some(g) => spectral_form(model, g),
        None => Ok(0.0),
    }
}

/// The same total through `|f~[h]|^2 (R~[h] - delta_{h,0}) / K~[h]^2`.
pub fn variance_total_from_data(model: &SplineModel) -> Result<f64> {
    let g = trunc_kernels(model)?.pop().unwrap_or_default();
    let buf = real_spectrum(model.geometry().base(), g)?;
    Ok(model
        .f_tilde()
        .values()
        .iter()
        .zip(model.k_tilde().values())
        .zip(&buf)
        .map(|((f, k), r)| f.norm_sqr() * r.re / k.norm_sqr())
        .sum())
}

/// `sigma^2((Sf)_u)` for zero-based coordinates `u`; 0 for the empty set.
pub fn variance_u(model: &SplineModel, u: &[usize]) -> Result<f64> {
    if u.is_empty() {
        return Ok(0.0);
    }
    let params = model.params();
    let ru = kernel_values_ru_dd(model.geometry(), params.alpha(), u)?;
    let g2: f64 = u.iter().map(|&j| params.gamma()[j].powi(2)).product();
    Ok(g2 * spectral_form(model, ru)?)
}

/// Truncation variances for `d = 0..=s`.
pub fn truncation_curve(model: &SplineModel) -> Result<Vec<f64>> {
    let kernels = trunc_kernels(model)?;
    let mut out = vec![0.0];
    out.extend(kernels.into_par_iter().map(|g| spectral_form(model, g)).collect::<Result<Vec<_>>>()?);
    Ok(out)
}

pub fn truncation_variance(model: &SplineModel, d: usize) -> Result<f64> {
    let s = model.geometry().s();
    if d > s {
        return Err(WalshError::IndexOutOfRange { index: d as u64, limit: s as u64 + 1 });
    }
    if d == 0 {
        return Ok(0.0);
    }
    spectral_form(model, trunc_kernels(model)?.swap_remove(d - 1))
}

/// Superposition variances for `d = 0..=s`; requires factorized params.
pub fn superposition_curve(model: &SplineModel) -> Result<Vec<f64>> {
    let params = model.params();
    params.reduced_gamma().ok_or(WalshError::NotFactorized)?;
    // beta^{2j} Q~(., j) equals the degree-j slice built from the full weights
    let slices = degree_slices_dd(model.geometry(), params.alpha(), params.gamma())?;
    let terms = slices.into_par_iter().map(|g| spectral_form(model, g)).collect::<Result<Vec<_>>>()?;
    let mut out = vec![0.0];
    let mut acc = 0.0;
    for t in terms {
        acc += t;
        out.push(acc);
    }
    Ok(out)
}

pub fn superposition_variance(model: &SplineModel, d: usize) -> Result<f64> {
    let curve = superposition_curve(model)?;
    curve.get(d).copied().ok_or(WalshError::IndexOutOfRange { index: d as u64, limit: curve.len() as u64 })
}

/// Smallest `d >= 1` with `curve[d] >= threshold * total`.
pub fn effective_dimension(curve: &[f64], total: f64, threshold: f64) -> Result<usize> {
    if !(total > 0.0) {
        return Err(WalshError::ZeroVariance);
    }
    let target = threshold * total;
    Ok(curve.iter().skip(1).position(|&v| v >= target).map_or(curve.len() - 1, |i| i + 1))
}

/// `(d_trc, d_sup)` at the given variance share.
pub fn effective_dimensions(model: &SplineModel, threshold: f64) -> Result<(usize, usize)> {
    let r = variance_report(model, threshold)?;
    Ok((r.d_trc, r.d_sup))
}

pub fn variance_report(model: &SplineModel, threshold: f64) -> Result<VarianceReport> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(WalshError::InvalidParams(format!("threshold must lie in (0, 1), got {threshold}")));
    }
    let trunc = truncation_curve(model)?;
    let sup = superposition_curve(model)?;
    let total = *trunc.last().unwrap_or(&0.0);
    Ok(VarianceReport {
        total,
        d_trc: effective_dimension(&trunc, total, threshold)?,
        d_sup: effective_dimension(&sup, total, threshold)?,
        trunc,
        sup,
        threshold,
        params: model.params().clone(),
    })
}

/// Checks `0 = trunc[0] = sup[0]`, monotonicity and `trunc <= sup`, all up
/// to `rel_tol * total`.
pub fn check_ordering(report: &VarianceReport, rel_tol: f64) -> bool {
    let tol = rel_tol * report.total.abs().max(f64::MIN_POSITIVE);
    let mono = |c: &[f64]| c.windows(2).all(|w| w[1] >= w[0] - tol);
    report.trunc[0] == 0.0
        && report.sup[0] == 0.0
        && mono(&report.trunc)
        && mono(&report.sup)
        && report.trunc.iter().zip(&report.sup).all(|(t, s)| *t <= s + tol)
        && (report.trunc.last().unwrap() - report.total).abs() <= tol
        && (report.sup.last().unwrap() - report.total).abs() <= tol
}
