//! Joint density of the bivariate model and its copula density.
//!
//! `W* = Z + (α_{10}ᵁ e₁ + α_{20}ᵁ e₂) E₀ᵁ − (α_{10}ᴸ e₁ + α_{20}ᴸ e₂) E₀ᴸ` has
//! a closed-form density: the two common factors integrate out to a bivariate
//! normal orthant probability. The idiosyncratic factors `V_i = α_iᵁ E_iᵁ −
//! α_iᴸ E_iᴸ` shift every coordinate of variable `i` by the same amount and
//! are integrated numerically.
//!
//! Everything is expressed through the forms `s_i = e_iᵀ Σ⁻¹ w` and
//! `q = wᵀ Σ⁻¹ w`, which change in O(1) when `w` is shifted along `e₁, e₂`, so
//! each quadrature node costs a handful of flops once the forms are known.

use nalgebra::DVector;

use crate::covariance::{build_sigma_z, CorrelationMatrix, CovarianceSpec, SpatialDesign};
use crate::error::{Error, Result};
use crate::margins::{log_factor_diff_pdf, FactorLoadings, Marginal};
use crate::normal::{log_bvn_cdf, log_std_normal_cdf, LN_2PI};
use crate::quadrature::{log_add_exp, LogConcaveIntegrator, Support, DEFAULT_NODES};

/// Relative threshold on `c_δ / (c₁₁ c₂₂)` below which the loadings are
/// numerically degenerate.
pub const DEGENERACY_TOL: f64 = 1e-9;

/// The sufficient forms of a point `w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Forms {
    pub s1: f64,
    pub s2: f64,
    pub q: f64,
}

/// Intermediate quantities of the common-factor density at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommonFactorTerms {
    pub s1: f64,
    pub s2: f64,
    pub s11: f64,
    pub s22: f64,
    pub s12: f64,
    pub c1: f64,
    pub c2: f64,
    pub c11: f64,
    pub c22: f64,
    pub c12: f64,
    pub c_delta: f64,
    /// `ln` of the Gaussian prefactor `(2π)^{-m/2} |Σ|^{-1/2} exp(-q/2)`.
    pub log_k_w: f64,
    pub rho_star: f64,
}

#[derive(Debug, Clone, Copy)]
enum CommonKind {
    None,
    Upper,
    Lower,
    /// lower loadings are `lambda` times the upper loadings
    Parallel { lambda: f64 },
    Both { c_delta: f64, rho_star: f64 },
}

/// Precomputed state for evaluating the common-factor density `f*` on a fixed
/// coordinate layout.
#[derive(Debug, Clone)]
pub struct CommonFactorContext {
    sigma: CorrelationMatrix,
    groups: Vec<usize>,
    x1: DVector<f64>,
    x2: DVector<f64>,
    s11: f64,
    s22: f64,
    s12: f64,
    upper: [f64; 2],
    lower: [f64; 2],
    c11: f64,
    c22: f64,
    c12: f64,
    kind: CommonKind,
    log_const: f64,
}

impl CommonFactorContext {
    /// `groups[a]` is the variable (0 or 1) of coordinate `a`.
    pub fn new(sigma: CorrelationMatrix, groups: Vec<usize>, loadings: &FactorLoadings) -> Result<Self> {
        if loadings.p() != 2 {
            return Err(Error::invalid(format!("density evaluation needs p = 2, got p = {}", loadings.p())));
        }
        if groups.len() != sigma.dim() {
            return Err(Error::invalid("coordinate layout does not match the correlation matrix"));
        }
        if groups.iter().any(|&g| g > 1) {
            return Err(Error::invalid("coordinate variables must be 0 or 1"));
        }
        let m = groups.len();
        let e1 = DVector::from_fn(m, |a, _| if groups[a] == 0 { 1.0 } else { 0.0 });
        let e2 = DVector::from_fn(m, |a, _| if groups[a] == 1 { 1.0 } else { 0.0 });
        let x1 = sigma.solve(&e1);
        let x2 = sigma.solve(&e2);
        let s11 = e1.dot(&x1);
        let s22 = e2.dot(&x2);
        let s12 = 0.5 * (e1.dot(&x2) + e2.dot(&x1));
        let v = &loadings.variables;
        let upper = [v[0].alpha0_upper, v[1].alpha0_upper];
        let lower = [v[0].alpha0_lower, v[1].alpha0_lower];
        let quad = |a: [f64; 2], b: [f64; 2]| a[0] * b[0] * s11 + (a[0] * b[1] + a[1] * b[0]) * s12 + a[1] * b[1] * s22;
        let c11 = quad(upper, upper);
        let c22 = quad(lower, lower);
        let c12 = quad(upper, lower);
        let has_u = upper.iter().any(|&a| a > 0.0);
        let has_l = lower.iter().any(|&a| a > 0.0);
        let kind = match (has_u, has_l) {
            (false, false) => CommonKind::None,
            (true, false) => CommonKind::Upper,
            (false, true) => CommonKind::Lower,
            (true, true) => {
                let cross = upper[0] * lower[1] - upper[1] * lower[0];
                let scale = (upper[0].abs() + upper[1].abs()) * (lower[0].abs() + lower[1].abs());
                let c_delta = c11 * c22 - c12 * c12;
                if cross.abs() <= 1e-14 * scale {
                    let lambda = (lower[0] + lower[1]) / (upper[0] + upper[1]);
                    CommonKind::Parallel { lambda }
                } else if c_delta <= DEGENERACY_TOL * c11 * c22 {
                    return Err(Error::DegenerateLoadings {
                        c_delta,
                        upper1: upper[0],
                        upper2: upper[1],
                        lower1: lower[0],
                        lower2: lower[1],
                    });
                } else {
                    CommonKind::Both {
                        c_delta,
                        rho_star: (c12 / (c11 * c22).sqrt()).clamp(-1.0, 1.0),
                    }
                }
            }
        };
        let log_const = -0.5 * (m as f64) * LN_2PI - 0.5 * sigma.log_det();
        Ok(CommonFactorContext {
            sigma,
            groups,
            x1,
            x2,
            s11,
            s22,
            s12,
            upper,
            lower,
            c11,
            c22,
            c12,
            kind,
            log_const,
        })
    }

    pub fn dim(&self) -> usize {
        self.groups.len()
    }

    pub fn groups(&self) -> &[usize] {
        &self.groups
    }

    pub fn sigma(&self) -> &CorrelationMatrix {
        &self.sigma
    }

    pub fn forms(&self, w: &[f64]) -> Result<Forms> {
        if w.len() != self.dim() {
            return Err(Error::invalid(format!("point has dimension {}, expected {}", w.len(), self.dim())));
        }
        let v = DVector::from_column_slice(w);
        Ok(Forms {
            s1: self.x1.dot(&v),
            s2: self.x2.dot(&v),
            q: self.sigma.quad_form(&v),
        })
    }

    /// Forms of `w − v1 e₁ − v2 e₂`.
    #[inline]
    pub fn shifted(&self, f: &Forms, v1: f64, v2: f64) -> Forms {
        Forms {
            s1: f.s1 - v1 * self.s11 - v2 * self.s12,
            s2: f.s2 - v1 * self.s12 - v2 * self.s22,
            q: f.q - 2.0 * v1 * f.s1 - 2.0 * v2 * f.s2
                + v1 * v1 * self.s11
                + 2.0 * v1 * v2 * self.s12
                + v2 * v2 * self.s22,
        }
    }

    pub fn terms(&self, f: &Forms) -> CommonFactorTerms {
        let c1 = self.upper[0] * f.s1 + self.upper[1] * f.s2 - 1.0;
        let c2 = -(self.lower[0] * f.s1 + self.lower[1] * f.s2) - 1.0;
        let c_delta = self.c11 * self.c22 - self.c12 * self.c12;
        let rho_star = match self.kind {
            CommonKind::Both { rho_star, .. } => rho_star,
            _ => f64::NAN,
        };
        CommonFactorTerms {
            s1: f.s1,
            s2: f.s2,
            s11: self.s11,
            s22: self.s22,
            s12: self.s12,
            c1,
            c2,
            c11: self.c11,
            c22: self.c22,
            c12: self.c12,
            c_delta,
            log_k_w: self.log_const - 0.5 * f.q,
            rho_star,
        }
    }

    /// `ln f*` at the point with forms `f`.
    pub fn log_density(&self, f: &Forms) -> Result<f64> {
        let log_k = self.log_const - 0.5 * f.q;
        let pa = self.upper[0] * f.s1 + self.upper[1] * f.s2;
        let pb = self.lower[0] * f.s1 + self.lower[1] * f.s2;
        let v = match self.kind {
            CommonKind::None => log_k,
            CommonKind::Upper => log_k + half_line_gaussian(self.c11, pa - 1.0),
            CommonKind::Lower => log_k + half_line_gaussian(self.c22, -pb - 1.0),
            CommonKind::Parallel { lambda } => {
                let right = half_line_gaussian(self.c11, pa - 1.0);
                let left = half_line_gaussian(self.c11, -(pa + 1.0 / lambda));
                log_k + log_add_exp(right, left) - (1.0 + lambda).ln()
            }
            CommonKind::Both { c_delta, rho_star } => {
                let (c1, c2) = (pa - 1.0, -pb - 1.0);
                let (c11, c22, c12) = (self.c11, self.c22, self.c12);
                let expo = (c1 * c1 * c22 + 2.0 * c1 * c2 * c12 + c2 * c2 * c11) / (2.0 * c_delta);
                let h = (c1 * c22 + c2 * c12) / (c_delta * c22).sqrt();
                let k = (c1 * c12 + c2 * c11) / (c_delta * c11).sqrt();
                log_k + LN_2PI - 0.5 * c_delta.ln() + expo + log_bvn_cdf(h, k, rho_star)?
            }
        };
        if v.is_nan() {
            return Err(Error::Quadrature {
                abscissa: f.q,
                context: "common-factor log-density is NaN".into(),
            });
        }
        Ok(v)
    }
}

/// `ln ∫_0^∞ exp(b t − a t²/2) dt`.
fn half_line_gaussian(a: f64, b: f64) -> f64 {
    let sa = a.sqrt();
    0.5 * (LN_2PI - a.ln()) + 0.5 * b * b / a + log_std_normal_cdf(b / sa)
}

/// Full joint density of `W` on a coordinate layout, including the
/// idiosyncratic factors.
#[derive(Debug, Clone)]
pub struct JointDensity {
    common: CommonFactorContext,
    /// (αᵁ, αᴸ) of the idiosyncratic factor difference per variable, if any
    idio: [Option<(f64, f64)>; 2],
    integrator: LogConcaveIntegrator,
}

impl JointDensity {
    pub fn new(sigma: CorrelationMatrix, groups: Vec<usize>, loadings: &FactorLoadings, nodes: usize) -> Result<Self> {
        let common = CommonFactorContext::new(sigma, groups, loadings)?;
        let idio = [0, 1].map(|i| {
            let v = loadings.variables[i];
            v.has_idiosyncratic().then_some((v.alpha_upper, v.alpha_lower))
        });
        Ok(JointDensity {
            common,
            idio,
            integrator: LogConcaveIntegrator::new(nodes),
        })
    }

    /// Variable-major layout of a design: `n` coordinates of variable 0, then
    /// `n` of variable 1.
    pub fn for_design(design: &SpatialDesign, spec: &CovarianceSpec, loadings: &FactorLoadings, nodes: usize) -> Result<Self> {
        if design.p() != 2 {
            return Err(Error::invalid(format!("density evaluation needs p = 2, got p = {}", design.p())));
        }
        let sigma = build_sigma_z(design, spec)?;
        let groups = (0..design.dim()).map(|a| a / design.n()).collect();
        JointDensity::new(sigma, groups, loadings, nodes)
    }

    pub fn common(&self) -> &CommonFactorContext {
        &self.common
    }

    pub fn dim(&self) -> usize {
        self.common.dim()
    }

    fn support(&self, i: usize) -> Support {
        let (au, al) = self.idio[i].expect("idiosyncratic factor present");
        Support {
            lower: if al > 0.0 { f64::NEG_INFINITY } else { 0.0 },
            upper: if au > 0.0 { f64::INFINITY } else { 0.0 },
            kink: (au > 0.0 && al > 0.0).then_some(0.0),
            scale: au.max(al),
            start: Some(0.0),
        }
    }

    fn log_v(&self, i: usize, v: f64) -> f64 {
        let (au, al) = self.idio[i].expect("idiosyncratic factor present");
        log_factor_diff_pdf(v, au, al).unwrap_or(f64::NEG_INFINITY)
    }

    /// `ln f_W(w)` from precomputed forms.
    pub fn log_pdf_forms(&self, f: &Forms) -> Result<f64> {
        let ctx = &self.common;
        match (self.idio[0].is_some(), self.idio[1].is_some()) {
            (false, false) => ctx.log_density(f),
            (true, false) | (false, true) => {
                let i = if self.idio[0].is_some() { 0 } else { 1 };
                let mut err = None;
                let out = self.integrator.log_integrate(
                    |v| {
                        let g = if i == 0 { ctx.shifted(f, v, 0.0) } else { ctx.shifted(f, 0.0, v) };
                        match ctx.log_density(&g) {
                            Ok(x) => x + self.log_v(i, v),
                            Err(e) => {
                                err.get_or_insert(e);
                                f64::NAN
                            }
                        }
                    },
                    self.support(i),
                );
                if let Some(e) = err {
                    return Err(e);
                }
                out
            }
            (true, true) => {
                let mut err = None;
                let out = self.integrator.log_integrate(
                    |v1| {
                        let inner = self.integrator.log_integrate(
                            |v2| match ctx.log_density(&ctx.shifted(f, v1, v2)) {
                                Ok(x) => x + self.log_v(1, v2),
                                Err(e) => {
                                    err.get_or_insert(e);
                                    f64::NAN
                                }
                            },
                            self.support(1),
                        );
                        match inner {
                            Ok(x) => x + self.log_v(0, v1),
                            Err(e) => {
                                err.get_or_insert(e);
                                f64::NAN
                            }
                        }
                    },
                    self.support(0),
                );
                if let Some(e) = err {
                    return Err(e);
                }
                out
            }
        }
    }

    pub fn log_pdf(&self, w: &[f64]) -> Result<f64> {
        let f = self.common.forms(w)?;
        self.log_pdf_forms(&f)
    }
}

/// Copula density on a coordinate layout: joint density at the marginal
/// quantiles minus the marginal log-densities.
#[derive(Debug, Clone)]
pub struct CopulaDensity {
    joint: JointDensity,
    marginals: [Marginal; 2],
}

impl CopulaDensity {
    pub fn new(joint: JointDensity, loadings: &FactorLoadings) -> Result<Self> {
        let marginals = [Marginal::new(loadings.variables[0])?, Marginal::new(loadings.variables[1])?];
        Ok(CopulaDensity { joint, marginals })
    }

    pub fn for_design(design: &SpatialDesign, spec: &CovarianceSpec, loadings: &FactorLoadings, nodes: usize) -> Result<Self> {
        CopulaDensity::new(JointDensity::for_design(design, spec, loadings, nodes)?, loadings)
    }

    pub fn joint(&self) -> &JointDensity {
        &self.joint
    }

    pub fn marginal(&self, variable: usize) -> &Marginal {
        &self.marginals[variable]
    }

    /// Copula log-density at uniform scores `u` (one per coordinate).
    pub fn log_density(&self, u: &[f64]) -> Result<f64> {
        if u.len() != self.joint.dim() {
            return Err(Error::invalid(format!("expected {} scores, got {}", self.joint.dim(), u.len())));
        }
        let groups = self.joint.common.groups();
        let mut z = Vec::with_capacity(u.len());
        let mut log_marg = 0.0;
        for (&ua, &g) in u.iter().zip(groups) {
            if !(ua > 0.0 && ua < 1.0) {
                return Err(Error::invalid(format!("copula scores must lie in (0, 1), got {ua}")));
            }
            let za = self.marginals[g].quantile(ua)?;
            log_marg += self.marginals[g].log_pdf(za);
            z.push(za);
        }
        Ok(self.joint.log_pdf(&z)? - log_marg)
    }
}

/// `ln f*` for the stacked vector `w` (variable 1 then variable 2) on `design`.
pub fn wstar_logpdf(w: &[f64], design: &SpatialDesign, spec: &CovarianceSpec, loadings: &FactorLoadings) -> Result<f64> {
    let mut common_only = loadings.clone();
    for v in &mut common_only.variables {
        v.alpha_upper = 0.0;
        v.alpha_lower = 0.0;
    }
    JointDensity::for_design(design, spec, &common_only, DEFAULT_NODES)?.log_pdf(w)
}

/// `ln f_W(w1, w2)` on `design`.
pub fn joint_logpdf(w1: &[f64], w2: &[f64], design: &SpatialDesign, spec: &CovarianceSpec, loadings: &FactorLoadings) -> Result<f64> {
    let w: Vec<f64> = w1.iter().chain(w2).copied().collect();
    JointDensity::for_design(design, spec, loadings, DEFAULT_NODES)?.log_pdf(&w)
}

/// Copula log-density at scores `u1` (variable 1) and `u2` (variable 2).
pub fn copula_logdensity(u1: &[f64], u2: &[f64], design: &SpatialDesign, spec: &CovarianceSpec, loadings: &FactorLoadings) -> Result<f64> {
    let u: Vec<f64> = u1.iter().chain(u2).copied().collect();
    CopulaDensity::for_design(design, spec, loadings, DEFAULT_NODES)?.log_density(&u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::mvn_logpdf;
    use crate::margins::VariableLoadings;
    use nalgebra::DMatrix;

    fn pair(rho: f64) -> CorrelationMatrix {
        CorrelationMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0])).unwrap()
    }

    #[test]
    fn no_factors_is_gaussian() {
        let s = pair(0.4);
        let jd = JointDensity::new(s.clone(), vec![0, 1], &FactorLoadings::gaussian(2), 30).unwrap();
        let w = [0.3, -1.2];
        assert_eq!(jd.log_pdf(&w).unwrap(), mvn_logpdf(&w, &s).unwrap());
    }

    #[test]
    fn one_sided_common_factor_matches_univariate_law() {
        // n = 1 with only variable 1 loading on the upper factor: the first
        // coordinate is Z + aE, the second is its correlated Gaussian partner
        let loads = FactorLoadings::new(vec![VariableLoadings::new(0.8, 0.0, 0.0, 0.0), VariableLoadings::default()]).unwrap();
        let jd = JointDensity::new(pair(0.0), vec![0, 1], &loads, 30).unwrap();
        let m = Marginal::new(loads.variables[0]).unwrap();
        let w = [0.7, 0.2];
        let want = m.log_pdf(0.7) + (-0.5 * 0.04 - 0.5 * LN_2PI);
        assert!((jd.log_pdf(&w).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn parallel_loadings_match_factor_difference_marginal() {
        let loads = FactorLoadings::new(vec![VariableLoadings::new(0.8, 0.0, 0.5, 0.0), VariableLoadings::default()]).unwrap();
        let jd = JointDensity::new(pair(0.0), vec![0, 1], &loads, 30).unwrap();
        let m = Marginal::new(loads.variables[0]).unwrap();
        let w = [-0.4, 1.1];
        let want = m.log_pdf(-0.4) + (-0.5 * 1.21 - 0.5 * LN_2PI);
        assert!((jd.log_pdf(&w).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn idiosyncratic_only_matches_marginal_product() {
        // independent coordinates with idiosyncratic factors only
        let a = VariableLoadings::new(0.0, 0.9, 0.0, 0.6);
        let b = VariableLoadings::new(0.0, 0.4, 0.0, 1.2);
        let loads = FactorLoadings::new(vec![a, b]).unwrap();
        let jd = JointDensity::new(pair(0.0), vec![0, 1], &loads, 30).unwrap();
        let w = [0.5, -2.0];
        let want = Marginal::new(a).unwrap().log_pdf(0.5) + Marginal::new(b).unwrap().log_pdf(-2.0);
        let got = jd.log_pdf(&w).unwrap();
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");
    }

    #[test]
    fn gaussian_copula_closed_form() {
        let s = pair(0.6);
        let cd = CopulaDensity::new(JointDensity::new(s.clone(), vec![0, 1], &FactorLoadings::gaussian(2), 30).unwrap(), &FactorLoadings::gaussian(2)).unwrap();
        let u = [0.2, 0.9];
        let z = [crate::normal::std_normal_quantile(0.2), crate::normal::std_normal_quantile(0.9)];
        let q = (z[0] * z[0] - 2.0 * 0.6 * z[0] * z[1] + z[1] * z[1]) / 0.64;
        let want = -0.5 * 0.64f64.ln() - 0.5 * q + 0.5 * (z[0] * z[0] + z[1] * z[1]);
        assert!((cd.log_density(&u).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn degenerate_loadings_are_reported() {
        let loads = FactorLoadings::new(vec![VariableLoadings::new(1.0, 0.0, 1.0, 0.0), VariableLoadings::new(1.0, 0.0, 1.0 + 1e-6, 0.0)]).unwrap();
        let err = JointDensity::new(pair(0.3), vec![0, 1], &loads, 30).unwrap_err();
        assert!(matches!(err, Error::DegenerateLoadings { .. }));
    }
}
