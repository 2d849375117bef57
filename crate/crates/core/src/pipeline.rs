//! Sample, optimize, fit and report: the end-to-end effective-dimension run.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::anova::{variance_report, VarianceReport};
use crate::error::Result;
use crate::fwt::SampleVector;
use crate::kernel::{KernelParams, NetGeometry};
use crate::net::GeneratingMatrices;
use crate::param_opt::{optimize_holdout, HoldoutProblem, OptimizeOutcome, OptimizerConfig};
use crate::spline::SplineModel;
use crate::test_functions::qmc_variance;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffdimRun {
    pub report: VarianceReport,
    pub qmc_variance: f64,
    /// `sigma^2(Sf) / sigma^2_QMC`.
    pub variance_ratio: f64,
    pub holdout_cost: Option<f64>,
}

/// Parameters from the nested holdout on `net`.
pub fn optimize(net: &GeneratingMatrices, fvals: &SampleVector, cfg: &OptimizerConfig) -> Result<OptimizeOutcome> {
    optimize_holdout(&HoldoutProblem::new(net, fvals)?, cfg)
}

/// Fits on the whole net with `params` and reports variances.
pub fn analyze(net: &GeneratingMatrices, fvals: &SampleVector, params: &KernelParams, threshold: f64, cost: Option<f64>) -> Result<EffdimRun> {
    let model = SplineModel::fit_with_geometry(net, Arc::new(NetGeometry::new(net)), fvals, params)?;
    let report = variance_report(&model, threshold)?;
    let qmc = qmc_variance(&fvals.re());
    Ok(EffdimRun { variance_ratio: report.total / qmc, qmc_variance: qmc, report, holdout_cost: cost })
}

/// Optimize on the nested split, then fit all points with the best parameters.
pub fn optimize_and_analyze(net: &GeneratingMatrices, fvals: &SampleVector, cfg: &OptimizerConfig, threshold: f64) -> Result<(OptimizeOutcome, EffdimRun)> {
    let opt = optimize(net, fvals, cfg)?;
    let run = analyze(net, fvals, &opt.params, threshold, Some(opt.cost))?;
    Ok((opt, run))
}
