//! Maximum pseudo-likelihood fitting, variable-order selection and
//! likelihood-ratio tests.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::covariance::{CovarianceSpec, PoweredExponential, SpatialDesign};
use crate::data::UniformScores;
use crate::diagnostics::pearson;
use crate::error::{Error, Result};
use crate::likelihood::PseudoLikelihood;
use crate::margins::{FactorLoadings, VariableLoadings};
use crate::optimize::{nelder_mead, NelderMeadOptions};
use crate::quadrature::DEFAULT_NODES;

/// Parametric covariance family of the latent field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CovarianceModel {
    /// `Z_i = 2^{-1/2}(Y_0 + Y_i)` with exponential correlations `e^{-θ h}`.
    SharedExponential { theta0: f64, theta: Vec<f64> },
    /// `Z_i = ρ_i Y_0 + (1 − ρ_i²)^{1/2} Y_i` with powered exponential components.
    Coregionalization {
        rho: Vec<f64>,
        common: PoweredExponential,
        specific: Vec<PoweredExponential>,
    },
}

impl CovarianceModel {
    pub fn spec(&self) -> Result<CovarianceSpec> {
        match self {
            CovarianceModel::SharedExponential { theta0, theta } => CovarianceSpec::shared_exponential(*theta0, theta),
            CovarianceModel::Coregionalization { rho, common, specific } => {
                CovarianceSpec::coregionalization(rho, *common, specific)
            }
        }
    }

    pub fn p(&self) -> usize {
        match self {
            CovarianceModel::SharedExponential { theta, .. } => theta.len(),
            CovarianceModel::Coregionalization { rho, .. } => rho.len(),
        }
    }

    /// The same model with variables listed in reverse order.
    pub fn swapped(&self) -> Self {
        match self {
            CovarianceModel::SharedExponential { theta0, theta } => CovarianceModel::SharedExponential {
                theta0: *theta0,
                theta: theta.iter().rev().copied().collect(),
            },
            CovarianceModel::Coregionalization { rho, common, specific } => CovarianceModel::Coregionalization {
                rho: rho.iter().rev().copied().collect(),
                common: *common,
                specific: specific.iter().rev().copied().collect(),
            },
        }
    }
}

/// Which loadings of one variable are estimated; fixed ones are held at zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableMask {
    pub alpha0_upper: bool,
    pub alpha_upper: bool,
    pub alpha0_lower: bool,
    pub alpha_lower: bool,
}

impl VariableMask {
    pub const ALL: VariableMask = VariableMask {
        alpha0_upper: true,
        alpha_upper: true,
        alpha0_lower: true,
        alpha_lower: true,
    };
    pub const COMMON: VariableMask = VariableMask {
        alpha0_upper: true,
        alpha_upper: false,
        alpha0_lower: true,
        alpha_lower: false,
    };
    pub const NONE: VariableMask = VariableMask {
        alpha0_upper: false,
        alpha_upper: false,
        alpha0_lower: false,
        alpha_lower: false,
    };

    fn flags(&self) -> [bool; 4] {
        [self.alpha0_upper, self.alpha_upper, self.alpha0_lower, self.alpha_lower]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadingMask {
    pub variables: Vec<VariableMask>,
}

impl LoadingMask {
    /// Every loading free.
    pub fn full(p: usize) -> Self {
        LoadingMask {
            variables: vec![VariableMask::ALL; p],
        }
    }

    /// The idiosyncratic loadings of the last variable fixed at zero.
    pub fn last_idiosyncratic_zero(p: usize) -> Self {
        let mut m = LoadingMask::full(p);
        if let Some(last) = m.variables.last_mut() {
            *last = VariableMask::COMMON;
        }
        m
    }

    /// Only the common-factor loadings free.
    pub fn common_only(p: usize) -> Self {
        LoadingMask {
            variables: vec![VariableMask::COMMON; p],
        }
    }

    /// No factors at all: the Gaussian copula.
    pub fn gaussian(p: usize) -> Self {
        LoadingMask {
            variables: vec![VariableMask::NONE; p],
        }
    }

    pub fn n_free(&self) -> usize {
        self.variables.iter().map(|v| v.flags().iter().filter(|&&f| f).count()).sum()
    }

    pub fn swapped(&self) -> Self {
        LoadingMask {
            variables: self.variables.iter().rev().copied().collect(),
        }
    }
}

/// What to estimate and how.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub mask: LoadingMask,
    /// Family and, unless `moment_start` is set, the starting covariance values.
    pub covariance: CovarianceModel,
    /// Estimate the cross-component weights ρ_i (coregionalization family).
    pub free_rho: bool,
    /// Estimate the powered-exponential exponents (coregionalization family).
    pub free_exponents: bool,
    /// Starting loadings; free entries default to 0.5.
    pub start_loadings: Option<FactorLoadings>,
    /// Start the covariance parameters from a moment fit of Spearman correlations.
    pub moment_start: bool,
    pub nodes: usize,
    pub optimizer: NelderMeadOptions,
}

impl FitConfig {
    /// Shared-exponential covariance, idiosyncratic loadings of variable 2
    /// fixed at zero, moment start.
    pub fn shared_exponential() -> Self {
        FitConfig {
            mask: LoadingMask::last_idiosyncratic_zero(2),
            covariance: CovarianceModel::SharedExponential {
                theta0: 1.0,
                theta: vec![1.0, 1.0],
            },
            free_rho: false,
            free_exponents: false,
            start_loadings: None,
            moment_start: true,
            nodes: DEFAULT_NODES,
            optimizer: NelderMeadOptions::default(),
        }
    }

    /// Coregionalization with free ρ_i, exponential components and the same
    /// default mask.
    pub fn coregionalization() -> Self {
        FitConfig {
            covariance: CovarianceModel::Coregionalization {
                rho: vec![0.7, 0.7],
                common: PoweredExponential::exponential(1.0),
                specific: vec![PoweredExponential::exponential(1.0); 2],
            },
            free_rho: true,
            ..FitConfig::shared_exponential()
        }
    }

    pub fn with_mask(mut self, mask: LoadingMask) -> Self {
        self.mask = mask;
        self
    }

    fn swapped(&self) -> Self {
        FitConfig {
            mask: self.mask.swapped(),
            covariance: self.covariance.swapped(),
            start_loadings: self.start_loadings.as_ref().map(|l| l.swapped()),
            ..self.clone()
        }
    }

    /// Number of free parameters.
    pub fn n_free(&self) -> usize {
        self.mask.n_free() + self.covariance_layout().len()
    }

    fn covariance_layout(&self) -> Vec<CovParam> {
        let mut out = Vec::new();
        match &self.covariance {
            CovarianceModel::SharedExponential { theta, .. } => {
                out.push(CovParam::Theta(0));
                out.extend((0..theta.len()).map(|i| CovParam::Theta(i + 1)));
            }
            CovarianceModel::Coregionalization { rho, .. } => {
                if self.free_rho {
                    out.extend((0..rho.len()).map(CovParam::Rho));
                }
                out.extend((0..=rho.len()).map(CovParam::Theta));
                if self.free_exponents {
                    out.extend((0..=rho.len()).map(CovParam::Exponent));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
enum CovParam {
    Rho(usize),
    /// component 0 is the common one
    Theta(usize),
    Exponent(usize),
}

fn cov_get(model: &CovarianceModel, p: CovParam) -> f64 {
    match (model, p) {
        (CovarianceModel::SharedExponential { theta0, .. }, CovParam::Theta(0)) => theta0.ln(),
        (CovarianceModel::SharedExponential { theta, .. }, CovParam::Theta(k)) => theta[k - 1].ln(),
        (CovarianceModel::Coregionalization { rho, .. }, CovParam::Rho(i)) => rho[i].clamp(-0.999, 0.999).atanh(),
        (CovarianceModel::Coregionalization { common, .. }, CovParam::Theta(0)) => common.theta.ln(),
        (CovarianceModel::Coregionalization { specific, .. }, CovParam::Theta(k)) => specific[k - 1].theta.ln(),
        (CovarianceModel::Coregionalization { common, specific, .. }, CovParam::Exponent(k)) => {
            let a = if k == 0 { common.exponent } else { specific[k - 1].exponent };
            let t = (a / 2.0).clamp(1e-6, 1.0 - 1e-6);
            (t / (1.0 - t)).ln()
        }
        _ => unreachable!("parameter does not belong to this family"),
    }
}

fn cov_set(model: &mut CovarianceModel, p: CovParam, x: f64) {
    match (model, p) {
        (CovarianceModel::SharedExponential { theta0, .. }, CovParam::Theta(0)) => *theta0 = x.exp(),
        (CovarianceModel::SharedExponential { theta, .. }, CovParam::Theta(k)) => theta[k - 1] = x.exp(),
        (CovarianceModel::Coregionalization { rho, .. }, CovParam::Rho(i)) => rho[i] = x.tanh(),
        (CovarianceModel::Coregionalization { common, .. }, CovParam::Theta(0)) => common.theta = x.exp(),
        (CovarianceModel::Coregionalization { specific, .. }, CovParam::Theta(k)) => specific[k - 1].theta = x.exp(),
        (CovarianceModel::Coregionalization { common, specific, .. }, CovParam::Exponent(k)) => {
            let a = 2.0 / (1.0 + (-x).exp());
            if k == 0 {
                common.exponent = a;
            } else {
                specific[k - 1].exponent = a;
            }
        }
        _ => unreachable!("parameter does not belong to this family"),
    }
}

fn loading_mut(v: &mut VariableLoadings, slot: usize) -> &mut f64 {
    match slot {
        0 => &mut v.alpha0_upper,
        1 => &mut v.alpha_upper,
        2 => &mut v.alpha0_lower,
        _ => &mut v.alpha_lower,
    }
}

/// Maps between the unconstrained optimizer vector and model parameters.
struct Packing {
    mask: LoadingMask,
    cov_layout: Vec<CovParam>,
    base_cov: CovarianceModel,
}

impl Packing {
    fn unpack(&self, x: &[f64]) -> (FactorLoadings, CovarianceModel) {
        let mut it = x.iter();
        let variables = self
            .mask
            .variables
            .iter()
            .map(|m| {
                let mut v = VariableLoadings::default();
                for (slot, free) in m.flags().into_iter().enumerate() {
                    if free {
                        *loading_mut(&mut v, slot) = it.next().expect("packed loading").exp();
                    }
                }
                v
            })
            .collect();
        let mut cov = self.base_cov.clone();
        for &p in &self.cov_layout {
            cov_set(&mut cov, p, *it.next().expect("packed covariance parameter"));
        }
        (FactorLoadings { variables }, cov)
    }

    fn pack(&self, loadings: &FactorLoadings, cov: &CovarianceModel) -> Vec<f64> {
        let mut x = Vec::new();
        for (m, v) in self.mask.variables.iter().zip(&loadings.variables) {
            let mut v = *v;
            for (slot, free) in m.flags().into_iter().enumerate() {
                if free {
                    x.push(loading_mut(&mut v, slot).max(1e-3).ln());
                }
            }
        }
        for &p in &self.cov_layout {
            x.push(cov_get(cov, p));
        }
        x
    }
}

/// Outcome of a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub loadings: FactorLoadings,
    pub covariance: CovarianceModel,
    pub mask: LoadingMask,
    pub loglik: f64,
    pub start_loglik: f64,
    pub n_free: usize,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Order in which the input variables enter the fitted model.
    pub variable_order: Vec<usize>,
    /// Best log-likelihood after each optimizer iteration.
    pub trace: Vec<f64>,
    #[serde(skip)]
    pub wall_time_secs: f64,
}

impl FitResult {
    pub fn spec(&self) -> Result<CovarianceSpec> {
        self.covariance.spec()
    }
}

/// Pearson correlations of the scores' normal scores' Spearman-implied
/// Gaussian correlations `2 sin(π ρ_S / 6)` for every column pair.
fn moment_start(scores: &UniformScores, config: &FitConfig) -> Result<CovarianceModel> {
    let design = scores.design();
    let m = design.dim();
    let n = design.n();
    let cols: Vec<Vec<f64>> = (0..m).map(|c| scores.column(c)).collect();
    let mut pairs = Vec::new();
    for a in 0..m {
        for b in (a + 1)..m {
            let rs = pearson(&cols[a], &cols[b]);
            let r = 2.0 * (std::f64::consts::PI * rs / 6.0).sin();
            pairs.push((a / n, b / n, design.distance(a % n, b % n), r));
        }
    }
    let layout = config.covariance_layout();
    let packing = Packing {
        mask: LoadingMask::gaussian(design.p()),
        cov_layout: layout,
        base_cov: config.covariance.clone(),
    };
    let objective = |x: &[f64]| {
        let (_, cov) = packing.unpack(x);
        match cov.spec() {
            Ok(spec) => pairs
                .iter()
                .map(|&(i1, i2, d, r)| (spec.correlation(i1, i2, d) - r).powi(2))
                .sum::<f64>(),
            Err(_) => f64::INFINITY,
        }
    };
    let x0 = packing.pack(&FactorLoadings::gaussian(design.p()), &config.covariance);
    let opts = NelderMeadOptions {
        max_evals: 2000,
        ftol: 1e-10,
        xtol: 1e-6,
        initial_step: 0.5,
        restarts: 1,
    };
    let best = nelder_mead(objective, &x0, &opts);
    Ok(packing.unpack(&best.x).1)
}

/// Maximizes the pseudo log-likelihood over the free parameters.
pub fn fit(scores: &UniformScores, design: &SpatialDesign, config: &FitConfig) -> Result<FitResult> {
    if scores.design() != design {
        return Err(Error::invalid("scores were built for a different design"));
    }
    fit_scores(scores, config, vec![0, 1])
}

fn fit_scores(scores: &UniformScores, config: &FitConfig, variable_order: Vec<usize>) -> Result<FitResult> {
    let t0 = Instant::now();
    let p = scores.design().p();
    if p != 2 || config.mask.variables.len() != p || config.covariance.p() != p {
        return Err(Error::invalid("fitting needs p = 2 and a matching mask and covariance model"));
    }
    let lik = PseudoLikelihood::new(scores.clone(), config.nodes)?;
    let start_cov = if config.moment_start {
        moment_start(scores, config)?
    } else {
        config.covariance.clone()
    };
    let start_loadings = match &config.start_loadings {
        Some(l) => {
            let mut l = l.clone();
            for (v, m) in l.variables.iter_mut().zip(&config.mask.variables) {
                for (slot, free) in m.flags().into_iter().enumerate() {
                    if !free {
                        *loading_mut(v, slot) = 0.0;
                    }
                }
            }
            l
        }
        None => FactorLoadings {
            variables: config
                .mask
                .variables
                .iter()
                .map(|m| {
                    let f = m.flags().map(|free| if free { 0.5 } else { 0.0 });
                    VariableLoadings::new(f[0], f[1], f[2], f[3])
                })
                .collect(),
        },
    };
    let packing = Packing {
        mask: config.mask.clone(),
        cov_layout: config.covariance_layout(),
        base_cov: start_cov.clone(),
    };
    let x0 = packing.pack(&start_loadings, &start_cov);
    let objective = |x: &[f64]| -> f64 {
        if x.iter().any(|v| v.abs() > 30.0) {
            return f64::INFINITY;
        }
        let (loadings, cov) = packing.unpack(x);
        let ll = cov.spec().and_then(|spec| lik.evaluate(&spec, &loadings));
        match ll {
            Ok(v) if v.is_finite() => -v,
            _ => f64::INFINITY,
        }
    };
    let start_value = -objective(&x0);
    if !start_value.is_finite() {
        return Err(Error::Optimizer("log-likelihood is not finite at the starting point".into()));
    }
    let best = nelder_mead(objective, &x0, &config.optimizer);
    let (loadings, covariance) = packing.unpack(&best.x);
    Ok(FitResult {
        loadings,
        covariance,
        mask: config.mask.clone(),
        loglik: -best.f,
        start_loglik: start_value,
        n_free: config.n_free(),
        iterations: best.iterations,
        evaluations: best.evals,
        converged: best.converged,
        variable_order,
        trace: best.trace.iter().map(|v| -v).collect(),
        wall_time_secs: t0.elapsed().as_secs_f64(),
    })
}

/// Fits both variable orders and keeps the better one; the original order
/// wins unless the swapped fit is better by more than the optimizer tolerance.
pub fn select_variable_order(scores: &UniformScores, design: &SpatialDesign, config: &FitConfig) -> Result<(FitResult, Vec<usize>)> {
    if scores.design() != design {
        return Err(Error::invalid("scores were built for a different design"));
    }
    let original = fit_scores(scores, config, vec![0, 1]);
    let swapped = scores
        .reorder_variables(&[1, 0])
        .and_then(|s| fit_scores(&s, &config.swapped(), vec![1, 0]));
    match (original, swapped) {
        (Ok(a), Ok(b)) => {
            if b.loglik > a.loglik + config.optimizer.ftol {
                Ok((b, vec![1, 0]))
            } else {
                Ok((a, vec![0, 1]))
            }
        }
        (Ok(a), Err(_)) => Ok((a, vec![0, 1])),
        (Err(_), Ok(b)) => Ok((b, vec![1, 0])),
        (Err(e), Err(_)) => Err(e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrTest {
    pub statistic: f64,
    pub df: usize,
    /// 95% quantile of χ²(df).
    pub critical_value: f64,
    pub p_value: f64,
    pub significant: bool,
}

/// 95% quantile of the χ² distribution.
pub fn chi_square_critical(df: usize) -> Result<f64> {
    if df == 0 {
        return Err(Error::invalid("degrees of freedom must be positive"));
    }
    let chi = ChiSquared::new(df as f64).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(chi.inverse_cdf(0.95))
}

/// Likelihood-ratio test from two log-likelihood values.
pub fn lr_test_values(loglik_full: f64, loglik_nested: f64, df: usize) -> Result<LrTest> {
    let statistic = 2.0 * (loglik_full - loglik_nested);
    if statistic < -1e-6 {
        return Err(Error::Optimizer(format!(
            "nested model log-likelihood {loglik_nested} exceeds the full model's {loglik_full}"
        )));
    }
    let statistic = statistic.max(0.0);
    let chi = ChiSquared::new(df.max(1) as f64).map_err(|e| Error::invalid(e.to_string()))?;
    let critical_value = chi_square_critical(df)?;
    Ok(LrTest {
        statistic,
        df,
        critical_value,
        p_value: 1.0 - chi.cdf(statistic),
        significant: statistic > critical_value,
    })
}

pub fn lr_test(full: &FitResult, nested: &FitResult, df: usize) -> Result<LrTest> {
    lr_test_values(full.loglik, nested.loglik, df)
}
