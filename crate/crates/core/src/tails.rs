//! Closed-form tail dependence: within-variable coefficients, the stable tail
//! dependence function of two different variables under exponential and
//! Pareto factors, and a numeric finite-`n` version for checking limits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::margins::{FactorLoadings, Marginal, VariableLoadings};
use crate::normal::{log_bvn_cdf, log_std_normal_cdf, std_normal_cdf};
use crate::quadrature::{log_add_exp, LogConcaveIntegrator, Support};

/// Tail dependence coefficient of one variable at two locations,
/// `2Φ(−√((1 − ρ)/2) / α̃)` with `α̃ = max(α_i, α_{i0})` of the tail.
pub fn lambda_within(rho: f64, alpha_tilde: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&rho) || !(alpha_tilde >= 0.0) {
        return Err(Error::invalid(format!("need |ρ| ≤ 1 and α̃ ≥ 0, got ρ = {rho}, α̃ = {alpha_tilde}")));
    }
    if alpha_tilde == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * std_normal_cdf(-((1.0 - rho) / 2.0).sqrt() / alpha_tilde))
}

/// Lower and upper within-variable coefficients of variable `i` of `loadings`.
pub fn lambda_within_pair(rho: f64, loadings: &VariableLoadings) -> Result<(f64, f64)> {
    Ok((
        lambda_within(rho, loadings.alpha0_lower.max(loadings.alpha_lower))?,
        lambda_within(rho, loadings.alpha0_upper.max(loadings.alpha_upper))?,
    ))
}

/// Husler–Reiss stable tail dependence function with parameter `lambda`.
pub fn husler_reiss(x1: f64, x2: f64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return x1.max(x2);
    }
    let r = (x1 / x2).ln();
    x1 * std_normal_cdf(lambda / 2.0 + r / lambda) + x2 * std_normal_cdf(lambda / 2.0 - r / lambda)
}

/// `∫ exp(θv) φ(v) Φ(qv) dv = exp(θ²/2) Φ(θq / √(q² + 1))`.
pub fn tilted_normal_integral(theta: f64, q: f64) -> f64 {
    (0.5 * theta * theta).exp() * std_normal_cdf(theta * q / (q * q + 1.0).sqrt())
}

/// Upper loadings of the two variables; lower loadings must be zero.
fn upper_pair(loadings: &FactorLoadings) -> Result<[f64; 4]> {
    if loadings.p() != 2 {
        return Err(Error::invalid("tail limits are defined for two variables"));
    }
    let l = &loadings.variables;
    if l.iter().any(|v| v.alpha0_lower != 0.0 || v.alpha_lower != 0.0) {
        return Err(Error::invalid("the exponential-factor limit needs zero lower loadings"));
    }
    for v in l {
        v.validate()?;
    }
    Ok([l[0].alpha0_upper, l[0].alpha_upper, l[1].alpha0_upper, l[1].alpha_upper])
}

/// Quantities entering the exponential-factor stable tail dependence function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailLimitContext {
    /// `α_{10}ᵁ / α_1ᵁ`, infinite when `α_1ᵁ = 0`
    pub delta1: f64,
    pub delta2: f64,
    pub delta12: f64,
    /// `(δ_i − 1)⁻¹ − (δ₁₂ − 1)⁻¹`, present when both `δ_i > 1`
    pub delta_star: Option<[f64; 2]>,
    /// `x_i (1 − 1/δ_i)`
    pub y1: f64,
    pub y2: f64,
    pub rho12: f64,
}

fn ratio(a0: f64, a: f64) -> f64 {
    if a0 == 0.0 {
        0.0
    } else if a == 0.0 {
        f64::INFINITY
    } else {
        a0 / a
    }
}

impl TailLimitContext {
    pub fn new(x1: f64, x2: f64, loadings: &FactorLoadings, rho_z: f64) -> Result<Self> {
        if !(x1 > 0.0 && x2 > 0.0) {
            return Err(Error::invalid("x1 and x2 must be positive"));
        }
        if !(-1.0..=1.0).contains(&rho_z) {
            return Err(Error::invalid(format!("latent correlation {rho_z} outside [-1, 1]")));
        }
        let [a10, a1, a20, a2] = upper_pair(loadings)?;
        let delta1 = ratio(a10, a1);
        let delta2 = ratio(a20, a2);
        if delta1 == 1.0 || delta2 == 1.0 {
            return Err(Error::invalid("δ_i = 1 lies on the boundary between the two regimes"));
        }
        let delta12 = delta1 + delta2;
        let both = delta1 > 1.0 && delta2 > 1.0;
        let star = |d: f64| {
            if d.is_infinite() {
                0.0
            } else if delta12.is_infinite() {
                1.0 / (d - 1.0)
            } else {
                1.0 / (d - 1.0) - 1.0 / (delta12 - 1.0)
            }
        };
        let rho12 = if both {
            (a10 * a10 - 2.0 * rho_z * a10 * a20 + a20 * a20).sqrt() / (a10 * a20)
        } else {
            f64::NAN
        };
        Ok(TailLimitContext {
            delta1,
            delta2,
            delta12,
            delta_star: both.then(|| [star(delta1), star(delta2)]),
            y1: x1 * (1.0 - 1.0 / delta1),
            y2: x2 * (1.0 - 1.0 / delta2),
            rho12,
        })
    }

    pub fn has_tail_dependence(&self) -> bool {
        self.delta_star.is_some()
    }
}

/// `δ y / (δ − 1)`, which is `x` itself.
fn lead(delta: f64, y: f64) -> f64 {
    if delta.is_infinite() {
        y
    } else {
        delta * y / (delta - 1.0)
    }
}

/// `y_i^{δ_i} y_j^{1−δ_i} δ_i* exp{δ_i(δ_i − 1)ρ²/2} Φ{ρ(1/2 − δ_i) + log(y_j/y_i)/ρ}`
fn cross_term(delta: f64, star: f64, yi: f64, yj: f64, rho: f64) -> f64 {
    if star == 0.0 || delta.is_infinite() {
        return 0.0;
    }
    let log_t = delta * yi.ln() + (1.0 - delta) * yj.ln() + star.ln() + 0.5 * delta * (delta - 1.0) * rho * rho
        + log_std_normal_cdf(rho * (0.5 - delta) + (yj / yi).ln() / rho);
    log_t.exp()
}

/// Stable upper tail dependence function `ℓ(x₁, x₂)` of `(W_{11}, W_{21})`
/// with exponential factors and zero lower loadings; `rho_z` is the
/// latent correlation of `Z_{11}` and `Z_{21}`.
pub fn stable_tail_exponential(x1: f64, x2: f64, loadings: &FactorLoadings, rho_z: f64) -> Result<f64> {
    let ctx = TailLimitContext::new(x1, x2, loadings, rho_z)?;
    let Some([s1, s2]) = ctx.delta_star else {
        return Ok(x1 + x2);
    };
    let (y1, y2, r) = (ctx.y1, ctx.y2, ctx.rho12);
    if r == 0.0 {
        return Ok(x1.max(x2));
    }
    let lr = (y1 / y2).ln();
    Ok(lead(ctx.delta1, y1) * std_normal_cdf(r / 2.0 + lr / r)
        + lead(ctx.delta2, y2) * std_normal_cdf(r / 2.0 - lr / r)
        + cross_term(ctx.delta2, s2, y2, y1, r)
        + cross_term(ctx.delta1, s1, y1, y2, r))
}

/// `log P(Z₁ + a₁E₁ > t₁, Z₂ + a₂E₂ > t₂)` for standard normals with
/// correlation `rho` and independent unit exponentials `E_i`.
fn log_joint_survival(t1: f64, t2: f64, a1: f64, a2: f64, rho: f64) -> Result<f64> {
    // split on Z_i > t_i; below t_i the exponential tilt e^{Z_i/a_i} shifts
    // the normal mean, leaving bivariate normal probabilities
    let mut acc = log_bvn_cdf(-t1, -t2, rho)?;
    if a2 > 0.0 {
        let lf = 0.5 / (a2 * a2) - t2 / a2;
        acc = log_add_exp(acc, lf + log_bvn_cdf(rho / a2 - t1, t2 - 1.0 / a2, -rho)?);
    }
    if a1 > 0.0 {
        let lf = 0.5 / (a1 * a1) - t1 / a1;
        acc = log_add_exp(acc, lf + log_bvn_cdf(t1 - 1.0 / a1, rho / a1 - t2, -rho)?);
    }
    if a1 > 0.0 && a2 > 0.0 {
        let lf = 0.5 * (1.0 / (a1 * a1) + 2.0 * rho / (a1 * a2) + 1.0 / (a2 * a2)) - t1 / a1 - t2 / a2;
        let m1 = 1.0 / a1 + rho / a2;
        let m2 = rho / a1 + 1.0 / a2;
        acc = log_add_exp(acc, lf + log_bvn_cdf(t1 - m1, t2 - m2, rho)?);
    }
    Ok(acc)
}

/// `ℓ_n(x₁, x₂) = n[1 − F{F₁⁻¹(1 − x₁/n), F₂⁻¹(1 − x₂/n)}]` for the
/// exponential-factor model with zero lower loadings, by quadrature over the
/// common factor.
pub fn stable_tail_numeric(x1: f64, x2: f64, n: f64, loadings: &FactorLoadings, rho_z: f64) -> Result<f64> {
    if !(x1 > 0.0 && x2 > 0.0 && x1 < n && x2 < n) {
        return Err(Error::invalid("need 0 < x_i < n"));
    }
    let [a10, a1, a20, a2] = upper_pair(loadings)?;
    let z1 = Marginal::new(loadings.variables[0])?.upper_quantile(x1 / n)?;
    let z2 = Marginal::new(loadings.variables[1])?.upper_quantile(x2 / n)?;
    let integrator = LogConcaveIntegrator::new(64);
    let mut failure = None;
    let log_s = integrator.log_integrate(
        |v0| match log_joint_survival(z1 - a10 * v0, z2 - a20 * v0, a1, a2, rho_z) {
            Ok(v) => v - v0,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NEG_INFINITY
            }
        },
        Support {
            lower: 0.0,
            upper: f64::INFINITY,
            kink: None,
            scale: 1.0,
            start: None,
        },
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(x1 + x2 - n * log_s.exp())
}

fn pareto_theta_star(alpha0: f64, alpha1: f64, k: f64) -> Result<f64> {
    if !(alpha0 > 0.0) {
        return Err(Error::invalid("the common-factor loading must be positive"));
    }
    if !(k > 1.0) {
        return Err(Error::invalid(format!("Pareto shape must exceed 1, got {k}")));
    }
    if !(alpha1 >= 0.0) {
        return Err(Error::invalid("loadings must be non-negative"));
    }
    Ok(1.0 / (1.0 + (alpha1 / alpha0).powf(k)))
}

/// Marshall–Olkin stable tail dependence function of `(W_{11}, W_{21})`
/// under Pareto(1, k) factors: `x₁ + x₂ − min(θ₁* x₁, θ₂* x₂)`.
pub fn stable_tail_pareto(x1: f64, x2: f64, loadings: &FactorLoadings, k: f64) -> Result<f64> {
    if !(x1 > 0.0 && x2 > 0.0) {
        return Err(Error::invalid("x1 and x2 must be positive"));
    }
    if loadings.p() != 2 {
        return Err(Error::invalid("tail limits are defined for two variables"));
    }
    let l = &loadings.variables;
    let t1 = pareto_theta_star(l[0].alpha0_upper, l[0].alpha_upper, k)?;
    let t2 = pareto_theta_star(l[1].alpha0_upper, l[1].alpha_upper, k)?;
    Ok(x1 + x2 - (t1 * x1).min(t2 * x2))
}

/// Upper tail dependence of one variable at two locations under Pareto
/// factors: `1 / {1 + (α₁/α₀)^k}`.
pub fn lambda_pareto_within(alpha0: f64, alpha1: f64, k: f64) -> Result<f64> {
    pareto_theta_star(alpha0, alpha1, k)
}

/// Share of the variance of `W_{ij}` that is independent across locations,
/// with Pareto(1, k) factors, `k > 2`.
pub fn nugget_pareto(alpha0: f64, alpha1: f64, k: f64) -> Result<f64> {
    if !(k > 2.0) {
        return Err(Error::invalid(format!("the factor variance is infinite for k = {k} ≤ 2")));
    }
    if !(alpha0 >= 0.0 && alpha1 >= 0.0) {
        return Err(Error::invalid("loadings must be non-negative"));
    }
    let a1 = alpha1 * alpha1;
    Ok(a1 / ((k - 1.0).powi(2) * (1.0 - 2.0 / k) + alpha0 * alpha0 + a1))
}
