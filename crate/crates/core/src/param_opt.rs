//! Kernel parameter search by nested-net holdout and a downhill simplex.

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WalshError};
use crate::fwt::{fwt_in_place, ifwt_in_place, SampleVector, SpectralVector};
use crate::kernel::{kernel_values, KernelParams, NetGeometry};
use crate::net::GeneratingMatrices;
use crate::spline::{evaluate_words, gram_apply_spectral, SINGULAR_THRESHOLD};

/// Objective value substituted for parameter points where the fit fails.
pub const FAILURE_PENALTY: f64 = 1e300;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    pub cost_tolerance: f64,
    pub x_tolerance: f64,
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    pub beta0: f64,
    pub alpha0: f64,
    pub q0: f64,
    pub initial_step: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            max_iters: 200,
            cost_tolerance: 1e-4,
            x_tolerance: 1e-4,
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            beta0: 1.0,
            alpha0: 2.0,
            q0: 0.0,
            initial_step: 0.5,
            restarts: 1,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let coeffs = [self.reflection, self.expansion, self.contraction, self.shrink, self.initial_step];
        if coeffs.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(WalshError::InvalidParams("simplex coefficients and step must be positive".into()));
        }
        if self.contraction >= 1.0 || self.shrink >= 1.0 || self.expansion <= self.reflection {
            return Err(WalshError::InvalidParams("need contraction, shrink < 1 and expansion > reflection".into()));
        }
        if !(self.beta0.is_finite() && self.beta0 > 0.0) {
            return Err(WalshError::InvalidParams(format!("initial beta must be positive, got {}", self.beta0)));
        }
        if !(self.alpha0.is_finite() && self.alpha0 > 1.0) {
            return Err(WalshError::InvalidParams(format!("initial alpha must exceed 1, got {}", self.alpha0)));
        }
        if !self.q0.is_finite() || !(self.cost_tolerance >= 0.0) || !(self.x_tolerance >= 0.0) {
            return Err(WalshError::InvalidParams("initial q and tolerances must be finite".into()));
        }
        Ok(())
    }

    /// Internal coordinates `(ln beta, ln(alpha - 1), q)` of the start point.
    pub fn start(&self) -> [f64; 3] {
        [self.beta0.ln(), (self.alpha0 - 1.0).ln(), self.q0]
    }
}

/// Maps internal coordinates `(b, a, q)` to `beta = e^b`, `alpha = 1 + e^a`.
pub fn params_from_internal(p: crate::base_p::PrimeBase, s: usize, z: &[f64]) -> Result<KernelParams> {
    KernelParams::factorized(p, 1.0 + z[1].exp(), z[0].exp(), z[2], s)
}

/// Nested-net holdout problem with cached net geometry.
#[derive(Clone, Debug)]
pub struct HoldoutProblem {
    full: Arc<NetGeometry>,
    train_len: usize,
    fvals: Vec<f64>,
}

impl HoldoutProblem {
    pub fn new(c_full: &GeneratingMatrices, fvals_full: &SampleVector) -> Result<Self> {
        let (_, eval) = c_full.split_nested()?;
        if fvals_full.len() != c_full.len() {
            return Err(WalshError::DimensionMismatch { expected: c_full.len(), found: fvals_full.len() });
        }
        if fvals_full.base() != c_full.base() {
            return Err(WalshError::BaseMismatch { left: fvals_full.base().get(), right: c_full.base().get() });
        }
        Ok(HoldoutProblem { full: Arc::new(NetGeometry::new(c_full)), train_len: eval.start, fvals: fvals_full.re() })
    }

    pub fn geometry(&self) -> &NetGeometry {
        &self.full
    }

    fn spectrum(&self, values: &[f64]) -> Result<SpectralVector> {
        let p = self.full.base();
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fwt_in_place(p, &mut buf)?;
        if let Some((label, v)) = buf.iter().enumerate().find(|(_, v)| !(v.norm() >= SINGULAR_THRESHOLD && v.re.is_finite())) {
            return Err(WalshError::SingularKernel { label, value: v.norm() });
        }
        SpectralVector::new(p, buf)
    }

    /// Spline coefficients of the first-half fit.
    fn train_coefficients(&self, kvals: &[f64]) -> Result<Vec<Complex64>> {
        let p = self.full.base();
        let n = self.train_len;
        let kt = self.spectrum(&kvals[..n])?;
        let mut buf: Vec<Complex64> = self.fvals[..n].iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fwt_in_place(p, &mut buf)?;
        for (b, k) in buf.iter_mut().zip(kt.values()) {
            *b /= k * n as f64;
        }
        ifwt_in_place(p, &mut buf)?;
        Ok(buf)
    }

    /// Sum of squared errors on the second half, via one Gram product on the full net.
    pub fn cost(&self, params: &KernelParams) -> Result<f64> {
        let kvals = kernel_values(&self.full, params)?;
        let c = self.train_coefficients(&kvals)?;
        let kt_full = self.spectrum(&kvals)?;
        let mut embedded = vec![Complex64::default(); self.full.len()];
        embedded[..self.train_len].copy_from_slice(&c);
        let sf = gram_apply_spectral(&kt_full, &embedded)?;
        Ok(sf[self.train_len..].iter().zip(&self.fvals[self.train_len..]).map(|(s, f)| (f - s.re).powi(2)).sum())
    }

    /// Same cost with direct kernel sums at every held-out point.
    pub fn cost_direct(&self, params: &KernelParams) -> Result<f64> {
        let kvals = kernel_values(&self.full, params)?;
        let c: Vec<f64> = self.train_coefficients(&kvals)?.iter().map(|v| v.re).collect();
        let train = self.full.prefix(self.full.m() - 1)?;
        let s = self.full.s();
        Ok((self.train_len..self.full.len())
            .map(|n| {
                let sf = evaluate_words(&train, params, &c, &self.full.words()[n * s..(n + 1) * s]);
                (self.fvals[n] - sf).powi(2)
            })
            .sum())
    }
}

/// `sum_{n=N}^{2N-1} (f(x_n) - Sf(x_n))^2` with `Sf` fitted on the first `N` points.
pub fn holdout_cost(c_full: &GeneratingMatrices, fvals_full: &SampleVector, params: &KernelParams) -> Result<f64> {
    HoldoutProblem::new(c_full, fvals_full)?.cost(params)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub best_cost: f64,
    pub best_point: Vec<f64>,
    pub evaluations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NelderMeadResult {
    pub best_point: Vec<f64>,
    pub best_cost: f64,
    pub converged: bool,
    pub trace: Vec<TraceEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NelderMeadFailure {
    pub error: WalshError,
    pub trace: Vec<TraceEntry>,
}

struct Simplex<'a, F> {
    f: &'a mut F,
    evaluations: usize,
    iteration: usize,
}

impl<F: FnMut(&[f64]) -> f64> Simplex<'_, F> {
    fn eval(&mut self, x: &[f64]) -> Result<f64> {
        self.evaluations += 1;
        let v = (self.f)(x);
        if !v.is_finite() {
            return Err(WalshError::NonFiniteObjective { value: v, iteration: self.iteration });
        }
        Ok(v)
    }
}

fn converged(costs: &[f64], pts: &[Vec<f64>], cfg: &OptimizerConfig) -> bool {
    let spread = costs[costs.len() - 1] - costs[0];
    if spread > cfg.cost_tolerance * costs[0].abs().max(1.0) {
        return false;
    }
    let diameter = pts[1..].iter().map(|x| x.iter().zip(&pts[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)).fold(0.0, f64::max);
    spread == 0.0 || diameter <= cfg.x_tolerance
}

fn sort_simplex(pts: &mut Vec<Vec<f64>>, costs: &mut Vec<f64>) {
    let mut idx: Vec<usize> = (0..costs.len()).collect();
    idx.sort_by(|&a, &b| costs[a].total_cmp(&costs[b]).then(a.cmp(&b)));
    *pts = idx.iter().map(|&i| pts[i].clone()).collect();
    *costs = idx.iter().map(|&i| costs[i]).collect();
}

fn run_once<F: FnMut(&[f64]) -> f64>(sx: &mut Simplex<F>, start: &[f64], steps: &[f64], cfg: &OptimizerConfig, trace: &mut Vec<TraceEntry>) -> Result<(Vec<f64>, f64, bool)> {
    let dim = start.len();
    let mut pts = vec![start.to_vec()];
    for (i, st) in steps.iter().enumerate() {
        let mut x = start.to_vec();
        x[i] += st;
        pts.push(x);
    }
    let mut costs = Vec::with_capacity(dim + 1);
    for x in &pts {
        costs.push(sx.eval(x)?);
    }
    let affine = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> { a.iter().zip(b).map(|(u, v)| u + t * (v - u)).collect() };
    for _ in 0..cfg.max_iters {
        sort_simplex(&mut pts, &mut costs);
        if converged(&costs, &pts, cfg) {
            return Ok((pts[0].clone(), costs[0], true));
        }
        sx.iteration += 1;
        let mut centroid = vec![0.0; dim];
        for x in &pts[..dim] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / dim as f64;
            }
        }
        let worst = pts[dim].clone();
        let xr = affine(&centroid, &worst, -cfg.reflection);
        let fr = sx.eval(&xr)?;
        let mut shrink = false;
        if fr < costs[0] {
            let xe = affine(&centroid, &worst, -cfg.reflection * cfg.expansion);
            let fe = sx.eval(&xe)?;
            if fe < fr {
                pts[dim] = xe;
                costs[dim] = fe;
            } else {
                pts[dim] = xr;
                costs[dim] = fr;
            }
        } else if fr < costs[dim - 1] {
            pts[dim] = xr;
            costs[dim] = fr;
        } else if fr < costs[dim] {
            let xc = affine(&centroid, &worst, -cfg.reflection * cfg.contraction);
            let fc = sx.eval(&xc)?;
            if fc <= fr {
                pts[dim] = xc;
                costs[dim] = fc;
            } else {
                shrink = true;
            }
        } else {
            let xc = affine(&centroid, &worst, cfg.contraction);
            let fc = sx.eval(&xc)?;
            if fc < costs[dim] {
                pts[dim] = xc;
                costs[dim] = fc;
            } else {
                shrink = true;
            }
        }
        if shrink {
            for i in 1..=dim {
                pts[i] = affine(&pts[0], &pts[i], cfg.shrink);
                costs[i] = sx.eval(&pts[i].clone())?;
            }
        }
        let (bi, bc) = costs.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).map(|(i, c)| (i, *c)).unwrap();
        let prev = trace.last().map_or(f64::INFINITY, |t| t.best_cost);
        let (best_cost, best_point) = if bc <= prev { (bc, pts[bi].clone()) } else { (prev, trace.last().unwrap().best_point.clone()) };
        trace.push(TraceEntry { iteration: sx.iteration, best_cost, best_point, evaluations: sx.evaluations });
    }
    sort_simplex(&mut pts, &mut costs);
    Ok((pts[0].clone(), costs[0], converged(&costs, &pts, cfg)))
}

/// Downhill simplex from `start` with `cfg.restarts` seeded restarts around
/// the incumbent. Aborts on the first non-finite objective value.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut objective: F, start: &[f64], cfg: &OptimizerConfig) -> std::result::Result<NelderMeadResult, NelderMeadFailure> {
    let mut trace = Vec::new();
    let fail = |error, trace| NelderMeadFailure { error, trace };
    if let Err(error) = cfg.validate() {
        return Err(fail(error, trace));
    }
    let mut sx = Simplex { f: &mut objective, evaluations: 0, iteration: 0 };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut steps = vec![cfg.initial_step; start.len()];
    let mut best = (start.to_vec(), f64::INFINITY, false);
    let mut from = start.to_vec();
    for round in 0..=cfg.restarts {
        let out = match run_once(&mut sx, &from, &steps, cfg, &mut trace) {
            Ok(v) => v,
            Err(e) => return Err(fail(e, trace)),
        };
        if out.1 <= best.1 {
            best = out;
        }
        if round < cfg.restarts {
            from = best.0.clone();
            steps = (0..start.len()).map(|_| cfg.initial_step * if rng.gen::<bool>() { 1.0 } else { -1.0 } * rng.gen_range(0.5..1.5)).collect();
        }
    }
    Ok(NelderMeadResult { best_point: best.0, best_cost: best.1, converged: best.2, trace })
}

/// Best parameters found, with the search trace in `(beta, alpha, q)` form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizeOutcome {
    pub params: KernelParams,
    pub cost: f64,
    pub converged: bool,
    pub failed_evaluations: usize,
    pub trace: Vec<(usize, f64, f64, f64, f64)>,
}

/// Minimizes the holdout cost over `(ln beta, ln(alpha - 1), q)`.
pub fn optimize_params(c_full: &GeneratingMatrices, fvals_full: &SampleVector, cfg: &OptimizerConfig) -> Result<OptimizeOutcome> {
    cfg.validate()?;
    let problem = HoldoutProblem::new(c_full, fvals_full)?;
    optimize_holdout(&problem, cfg)
}

pub fn optimize_holdout(problem: &HoldoutProblem, cfg: &OptimizerConfig) -> Result<OptimizeOutcome> {
    cfg.validate()?;
    let (p, s) = (problem.geometry().base(), problem.geometry().s());
    let mut failed = 0usize;
    let mut total = 0usize;
    let objective = |z: &[f64]| {
        total += 1;
        match params_from_internal(p, s, z).and_then(|k| problem.cost(&k)) {
            Ok(c) if c.is_finite() => c,
            _ => {
                failed += 1;
                FAILURE_PENALTY
            }
        }
    };
    let res = nelder_mead(objective, &cfg.start(), cfg).map_err(|f| f.error)?;
    if failed == total {
        return Err(WalshError::AllEvaluationsFailed);
    }
    let to_public = |z: &[f64]| (z[0].exp(), 1.0 + z[1].exp(), z[2]);
    let trace = res
        .trace
        .iter()
        .map(|t| {
            let (b, a, q) = to_public(&t.best_point);
            (t.iteration, t.best_cost, b, a, q)
        })
        .collect();
    Ok(OptimizeOutcome {
        params: params_from_internal(p, s, &res.best_point)?,
        cost: res.best_cost,
        converged: res.converged,
        failed_evaluations: failed,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base_p::PrimeBase;
    use crate::net::sobol_default;
    use crate::spline::SplineModel;

    fn sampled(net: &GeneratingMatrices, f: impl Fn(&[f64]) -> f64) -> SampleVector {
        let v: Vec<f64> = net.net_points(1 << 16).unwrap().iter().map(|pt| f(&pt.coords)).collect();
        SampleVector::from_real(net.base(), &v).unwrap()
    }

    #[test]
    fn fast_cost_matches_direct_evaluation() {
        let net = sobol_default(2, 6, 32).unwrap();
        let f = sampled(&net, |x| (3.0 * x[0]).sin() + x[1] * x[1]);
        let problem = HoldoutProblem::new(&net, &f).unwrap();
        for (b, a, q) in [(1.0, 2.0, 0.0), (0.3, 1.4, -1.0), (3.0, 3.5, 0.5)] {
            let params = KernelParams::factorized(PrimeBase::TWO, a, b, q, 2).unwrap();
            let fast = problem.cost(&params).unwrap();
            let direct = problem.cost_direct(&params).unwrap();
            assert!((fast - direct).abs() <= 1e-9 * direct.max(1e-12), "{fast} vs {direct}");
        }
    }

    #[test]
    fn cost_matches_independent_fit() {
        let net = sobol_default(3, 7, 32).unwrap();
        let f = sampled(&net, |x| x[0] * x[1] + (x[2] - 0.5).abs());
        let params = KernelParams::factorized(PrimeBase::TWO, 2.0, 1.0, 0.0, 3).unwrap();
        let (train, eval) = net.split_nested().unwrap();
        let fv = f.re();
        let model = SplineModel::fit(&train, &SampleVector::from_real(PrimeBase::TWO, &fv[..eval.start]).unwrap(), &params).unwrap();
        let pts = net.net_points(1 << 10).unwrap();
        let want: f64 = eval.clone().map(|n| (fv[n] - model.evaluate(&pts[n].coords).unwrap()).powi(2)).sum();
        let got = holdout_cost(&net, &f, &params).unwrap();
        assert!((got - want).abs() <= 1e-9 * want);
        assert!(got >= 0.0);
    }

    #[test]
    fn constant_data_cost_is_small() {
        let net = sobol_default(3, 8, 32).unwrap();
        let f = sampled(&net, |_| 1.0);
        let params = KernelParams::factorized(PrimeBase::TWO, 2.0, 1.0, 0.0, 3).unwrap();
        let cost = holdout_cost(&net, &f, &params).unwrap();
        // bounded by the off-net deviation of a constant fit, not by roundoff
        assert!(cost < 0.1 && cost >= 0.0, "{cost}");
    }

    #[test]
    fn rejects_one_point_nets() {
        let net = GeneratingMatrices::identity(PrimeBase::TWO, 0, 4, 1).unwrap();
        assert!(HoldoutProblem::new(&net, &SampleVector::from_real(PrimeBase::TWO, &[1.0]).unwrap()).is_err());
    }

    #[test]
    fn bowl_converges_to_origin() {
        let cfg = OptimizerConfig { restarts: 0, ..Default::default() };
        let res = nelder_mead(|x: &[f64]| x[0] * x[0] + x[1] * x[1], &[1.0, 1.0], &cfg).unwrap();
        assert!(res.best_point.iter().all(|v| v.abs() < 1e-3));
        assert!(res.trace.len() <= 200);
        assert!(res.converged);
    }

    #[test]
    fn constant_objective_stops_immediately() {
        let res = nelder_mead(|_: &[f64]| 3.0, &[0.0, 0.0, 0.0], &OptimizerConfig::default()).unwrap();
        assert!(res.trace.is_empty());
        assert!(res.converged);
        assert_eq!(res.best_cost, 3.0);
    }

    #[test]
    fn rosenbrock_within_400_iterations() {
        let rosen = |x: &[f64]| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2);
        let cfg = OptimizerConfig { max_iters: 400, restarts: 0, cost_tolerance: 1e-12, x_tolerance: 1e-10, ..Default::default() };
        let res = nelder_mead(rosen, &[-1.2, 1.0], &cfg).unwrap();
        assert!(res.best_cost < 1e-4, "{}", res.best_cost);
        assert!(res.trace.len() <= 400);
    }

    #[test]
    fn trace_is_monotone_and_reproducible() {
        let f = |x: &[f64]| (x[0] - 0.3).powi(2) + (x[1] + 0.2).powi(4) + (3.0 * x[0]).sin().abs();
        let a = nelder_mead(f, &[1.0, 1.0], &OptimizerConfig::default()).unwrap();
        let b = nelder_mead(f, &[1.0, 1.0], &OptimizerConfig::default()).unwrap();
        assert_eq!(a, b);
        assert!(a.trace.windows(2).all(|w| w[1].best_cost <= w[0].best_cost));
    }

    #[test]
    fn non_finite_objective_aborts_with_trace() {
        let mut calls = 0;
        let f = |x: &[f64]| {
            calls += 1;
            if calls > 20 { f64::NAN } else { x[0] * x[0] }
        };
        let err = nelder_mead(f, &[2.0], &OptimizerConfig::default()).unwrap_err();
        assert!(matches!(err.error, WalshError::NonFiniteObjective { .. }));
        assert!(!err.trace.is_empty());
    }

    #[test]
    fn invalid_start_is_rejected() {
        let net = sobol_default(2, 4, 32).unwrap();
        let f = sampled(&net, |x| x[0]);
        let cfg = OptimizerConfig { beta0: 0.0, ..Default::default() };
        assert!(matches!(optimize_params(&net, &f, &cfg), Err(WalshError::InvalidParams(_))));
        let cfg = OptimizerConfig { alpha0: 1.0, ..Default::default() };
        assert!(optimize_params(&net, &f, &cfg).is_err());
    }

    #[test]
    fn recovers_cost_of_generating_params() {
        let p = PrimeBase::TWO;
        let net = sobol_default(2, 8, 32).unwrap();
        let truth = KernelParams::factorized(p, 2.5, 0.6, -1.0, 2).unwrap();
        // data drawn from the kernel span: a few random centers
        let centers = [[0.13, 0.71], [0.52, 0.33], [0.87, 0.08], [0.29, 0.94]];
        let weights = [1.0, -0.7, 0.4, 0.9];
        let kern = |x: &[f64], y: &[f64]| {
            x.iter()
                .zip(y)
                .zip(truth.gamma())
                .map(|((a, b), g)| {
                    let (wa, wb) = (crate::base_p::fraction_word(*a, p, 32).unwrap(), crate::base_p::fraction_word(*b, p, 32).unwrap());
                    let lv = crate::kernel::word_difference_level(wa, wb, p, 32) as usize;
                    1.0 + g * crate::kernel::k1_at_level((lv > 0).then_some(lv), p, truth.alpha())
                })
                .product::<f64>()
        };
        let f = sampled(&net, |x| centers.iter().zip(&weights).map(|(c, w)| w * kern(x, c)).sum());
        let at_truth = holdout_cost(&net, &f, &truth).unwrap();
        let out = optimize_params(&net, &f, &OptimizerConfig::default()).unwrap();
        assert!(out.cost <= at_truth * 1.05, "{} vs {}", out.cost, at_truth);
        assert!(out.params.beta().is_some());
        assert!(out.trace.windows(2).all(|w| w[1].1 <= w[0].1));
    }
}
