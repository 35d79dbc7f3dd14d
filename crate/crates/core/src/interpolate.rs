//! Conditional copula of one variable at a new location given both variables
//! at the observed locations.
//!
//! With `z₀ = F_i⁻¹(u₀)` the conditional copula CDF is
//! `∫_{−∞}^{z₀} f_{n+1}(w, z) / f_n(w) dz`: the marginal densities cancel, so
//! the integral runs on the latent scale, where the integrand is log-concave.
//! The other variable at the new location is left out of the joint density,
//! which is the same as integrating it out.

use std::sync::Arc;

use nalgebra::DVector;

use crate::covariance::{build_sigma_z, CovarianceSpec, SpatialDesign};
use crate::density::JointDensity;
use crate::error::{Error, Result};
use crate::fit::FitResult;
use crate::margins::{FactorLoadings, Marginal};
use crate::quadrature::{LogConcaveIntegrator, Support, DEFAULT_NODES};

/// Everything needed to predict variable `target` at `new_location`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRequest {
    pub design: SpatialDesign,
    pub spec: CovarianceSpec,
    pub loadings: FactorLoadings,
    /// Scores of both variables at the observed locations, variable-major.
    pub scores: Vec<f64>,
    pub new_location: Vec<f64>,
    pub target: usize,
    pub nodes: usize,
}

impl PredictionRequest {
    pub fn new(
        design: SpatialDesign,
        spec: CovarianceSpec,
        loadings: FactorLoadings,
        scores: Vec<f64>,
        new_location: Vec<f64>,
        target: usize,
    ) -> Self {
        PredictionRequest {
            design,
            spec,
            loadings,
            scores,
            new_location,
            target,
            nodes: DEFAULT_NODES,
        }
    }

    /// Uses a fitted model. Scores and `target` refer to the input variable
    /// order; they are permuted if the fit chose the swapped order.
    pub fn from_fit(fit: &FitResult, design: SpatialDesign, scores: Vec<f64>, new_location: Vec<f64>, target: usize) -> Result<Self> {
        let n = design.n();
        if scores.len() != design.dim() || target >= 2 {
            return Err(Error::invalid("scores must cover both variables and target must be 0 or 1"));
        }
        let (scores, target) = if fit.variable_order == [1, 0] {
            let mut s = scores[n..].to_vec();
            s.extend_from_slice(&scores[..n]);
            (s, 1 - target)
        } else {
            (scores, target)
        };
        Ok(PredictionRequest::new(design, fit.spec()?, fit.loadings.clone(), scores, new_location, target))
    }
}

/// Conditional law of the target variable at the new location.
#[derive(Debug, Clone)]
pub struct ConditionalCopula {
    extended: JointDensity,
    w: Vec<f64>,
    log_fn: f64,
    marginal: Marginal,
    integrator: LogConcaveIntegrator,
    log_norm: f64,
    start: f64,
    scale: f64,
}

impl ConditionalCopula {
    pub fn new(req: &PredictionRequest) -> Result<Self> {
        let design = &req.design;
        if design.p() != 2 {
            return Err(Error::invalid("interpolation needs p = 2"));
        }
        if req.target >= 2 {
            return Err(Error::invalid(format!("target variable {} out of range", req.target)));
        }
        if req.scores.len() != design.dim() {
            return Err(Error::invalid(format!("expected {} scores, got {}", design.dim(), req.scores.len())));
        }
        if req.new_location.len() != design.locations()[0].coords.len() {
            return Err(Error::invalid("new location has the wrong number of coordinates"));
        }
        let probe = crate::covariance::Location::new(i64::MIN, req.new_location.clone());
        let d0: Vec<f64> = design.locations().iter().map(|l| l.distance(&probe)).collect();
        if d0.iter().any(|&d| d == 0.0) {
            return Err(Error::invalid("the new location coincides with an observed one"));
        }
        let n = design.n();
        let marginals = [Marginal::new(req.loadings.variables[0])?, Marginal::new(req.loadings.variables[1])?];
        let w: Vec<f64> = req
            .scores
            .iter()
            .enumerate()
            .map(|(a, &u)| {
                if !(u > 0.0 && u < 1.0) {
                    return Err(Error::invalid(format!("scores must lie in (0, 1), got {u}")));
                }
                marginals[a / n].quantile(u)
            })
            .collect::<Result<_>>()?;

        let sigma = build_sigma_z(design, &req.spec)?;
        let cross: Vec<f64> = (0..design.dim())
            .map(|a| req.spec.correlation(a / n, req.target, d0[a % n]))
            .collect();
        let groups_n: Vec<usize> = (0..design.dim()).map(|a| a / n).collect();
        let mut groups = groups_n.clone();
        groups.push(req.target);
        let extended_sigma = sigma.bordered(&cross, 1.0)?;

        // Gaussian-part prediction: a starting point and scale for the search
        let means: Vec<f64> = groups_n.iter().map(|&g| req.loadings.variables[g].mean()).collect();
        let sds: Vec<f64> = groups_n.iter().map(|&g| req.loadings.variables[g].variance().sqrt()).collect();
        let centred = DVector::from_iterator(w.len(), w.iter().zip(&means).map(|(x, m)| x - m));
        let c = DVector::from_column_slice(&cross);
        let weights = sigma.solve(&c);
        let target = &req.loadings.variables[req.target];
        let start = target.mean() + weights.dot(&centred);
        let cond_var = (1.0 - weights.dot(&c)).max(0.0);
        let scale = (cond_var + target.variance() - 1.0).sqrt().max(1e-3).min(sds.iter().cloned().fold(1.0, f64::max));

        let base = JointDensity::new(sigma, groups_n, &req.loadings, req.nodes)?;
        let log_fn = base.log_pdf(&w)?;
        if !log_fn.is_finite() {
            return Err(Error::Quadrature {
                abscissa: f64::NAN,
                context: format!("observed joint log-density is {log_fn}"),
            });
        }
        let extended = JointDensity::new(extended_sigma, groups, &req.loadings, req.nodes)?;
        let mut out = ConditionalCopula {
            extended,
            w,
            log_fn,
            marginal: marginals[req.target].clone(),
            integrator: LogConcaveIntegrator::new(req.nodes.max(DEFAULT_NODES)),
            log_norm: 0.0,
            start,
            scale,
        };
        out.log_norm = out.log_integral(f64::INFINITY, false)?;
        Ok(out)
    }

    /// `ln f_{n+1}(w, z) − ln f_n(w)`: the conditional density on the latent
    /// scale before normalization.
    pub fn log_density_z(&self, z: f64) -> Result<f64> {
        let mut x = self.w.clone();
        x.push(z);
        Ok(self.extended.log_pdf(&x)? - self.log_fn)
    }

    /// `ln ∫_{−∞}^{upper}` of the latent conditional density, optionally
    /// weighted by `F_i(z)`.
    fn log_integral(&self, upper: f64, weighted: bool) -> Result<f64> {
        let mut err = None;
        let support = Support {
            lower: f64::NEG_INFINITY,
            upper,
            kink: None,
            scale: self.scale,
            start: Some(if upper < self.start { upper - self.scale } else { self.start }),
        };
        let v = self.integrator.log_integrate(
            |z| {
                let base = match self.log_density_z(z) {
                    Ok(v) => v,
                    Err(e) => {
                        err.get_or_insert(e);
                        return f64::NAN;
                    }
                };
                if weighted {
                    base + self.marginal.cdf(z).ln()
                } else {
                    base
                }
            },
            support,
        );
        if let Some(e) = err {
            return Err(e);
        }
        v
    }

    /// Integral of the unnormalized conditional density; 1 up to quadrature error.
    pub fn total_mass(&self) -> f64 {
        self.log_norm.exp()
    }

    /// Conditional copula density at `u0`.
    pub fn density(&self, u0: f64) -> Result<f64> {
        let z = self.marginal.quantile(u0)?;
        Ok((self.log_density_z(z)? - self.log_norm - self.marginal.log_pdf(z)).exp())
    }

    fn cdf_z(&self, z: f64) -> Result<f64> {
        Ok((self.log_integral(z, false)? - self.log_norm).exp().min(1.0))
    }

    pub fn cdf(&self, u0: f64) -> Result<f64> {
        if u0 <= 0.0 {
            return Ok(0.0);
        }
        if u0 >= 1.0 {
            return Ok(1.0);
        }
        self.cdf_z(self.marginal.quantile(u0)?)
    }

    /// `∫ ũ c(ũ | u) dũ`.
    pub fn mean(&self) -> Result<f64> {
        Ok((self.log_integral(f64::INFINITY, true)? - self.log_norm).exp())
    }

    /// Solves `cdf(u) = 0.5`.
    pub fn median(&self) -> Result<f64> {
        let z = self.median_z()?;
        Ok(self.marginal.cdf(z))
    }

    /// Conditional median on the latent scale.
    pub fn median_z(&self) -> Result<f64> {
        let eps = 1e-12;
        let g = |z: f64| -> Result<f64> { Ok(self.cdf_z(z)? - 0.5) };
        let mut step = self.scale;
        let (mut lo, mut hi) = (self.start - step, self.start + step);
        let (mut glo, mut ghi) = (g(lo)?, g(hi)?);
        let mut tries = 0;
        while glo > 0.0 || ghi < 0.0 {
            tries += 1;
            if tries > 60 {
                return Err(Error::NotBracketed { lo, hi });
            }
            step *= 2.0;
            if glo > 0.0 {
                hi = lo;
                ghi = glo;
                lo -= step;
                glo = g(lo)?;
            } else {
                lo = hi;
                glo = ghi;
                hi += step;
                ghi = g(hi)?;
            }
        }
        let mut z = 0.5 * (lo + hi);
        for _ in 0..100 {
            let gz = g(z)?;
            if gz.abs() < eps {
                return Ok(z);
            }
            if gz < 0.0 {
                lo = z;
            } else {
                hi = z;
            }
            let dens = (self.log_density_z(z)? - self.log_norm).exp();
            let mut next = z - gz / dens;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            if hi - lo < 1e-13 * (1.0 + z.abs()) {
                return Ok(next);
            }
            z = next;
        }
        Ok(z)
    }

    /// `(mean, median)` on the uniform scale.
    pub fn summaries(&self) -> Result<(f64, f64)> {
        Ok((self.mean()?, self.median()?))
    }
}

/// `(mean, median)` of the conditional copula described by `req`.
pub fn conditional_summaries(req: &PredictionRequest) -> Result<(f64, f64)> {
    ConditionalCopula::new(req)?.summaries()
}

pub fn conditional_cdf(req: &PredictionRequest, u0: f64) -> Result<f64> {
    ConditionalCopula::new(req)?.cdf(u0)
}

/// Map from the uniform scale back to the data scale.
#[derive(Clone)]
pub enum MarginalModel {
    Identity,
    /// Interpolated empirical quantiles of training values (sorted on construction).
    Empirical(Vec<f64>),
    /// Analytic quantile function.
    Parametric(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for MarginalModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MarginalModel::Identity => write!(f, "Identity"),
            MarginalModel::Empirical(v) => write!(f, "Empirical({} values)", v.len()),
            MarginalModel::Parametric(_) => write!(f, "Parametric"),
        }
    }
}

impl MarginalModel {
    pub fn empirical(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("empirical back-transform needs training values"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("training values must be finite"));
        }
        values.sort_by(f64::total_cmp);
        Ok(MarginalModel::Empirical(values))
    }
}

/// `Ĝ⁻¹(u)`. The empirical option interpolates order statistics at
/// position `(N − 1)u`.
pub fn back_transform(u: f64, model: &MarginalModel) -> Result<f64> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::invalid(format!("probability {u} outside [0, 1]")));
    }
    match model {
        MarginalModel::Identity => Ok(u),
        MarginalModel::Parametric(q) => Ok(q(u)),
        MarginalModel::Empirical(x) => {
            if x.is_empty() {
                return Err(Error::invalid("empirical back-transform needs training values"));
            }
            let h = (x.len() - 1) as f64 * u;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(x.len() - 1);
            Ok(x[lo] + (h - lo as f64) * (x[hi] - x[lo]))
        }
    }
}
