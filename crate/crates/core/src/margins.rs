//! Factor loadings and the closed-form marginal law of
//! `W = Z + α0ᵁ E0ᵁ + αᵁ Eᵁ − α0ᴸ E0ᴸ − αᴸ Eᴸ` with standard exponential `E`.
//!
//! The signed exponential sum has a partial-fraction density
//! `Σ_k w_k f_{s_k}` with `w_k = Π_{m≠k} s_k / (s_k − s_m)` over the nonzero
//! signed scales `s_k`, so every quantity of `W` is a weighted sum of the
//! corresponding quantity for `Z + s_k E`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal::{erfcx, std_normal_cdf, std_normal_pdf, std_normal_quantile};

/// Two loadings of the same sign closer than this are treated as equal.
pub const EPS_SING: f64 = 1e-6;
/// Relative size of the perturbation applied to near-equal loadings.
pub const PERTURBATION: f64 = 1e-5;
/// Loadings below this are treated as exactly zero.
const ZERO_LOADING: f64 = 1e-12;

/// The four exponential-factor loadings of one variable.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VariableLoadings {
    /// Common upper factor, α_{i0}ᵁ.
    pub alpha0_upper: f64,
    /// Variable-specific upper factor, α_iᵁ.
    pub alpha_upper: f64,
    /// Common lower factor, α_{i0}ᴸ.
    pub alpha0_lower: f64,
    /// Variable-specific lower factor, α_iᴸ.
    pub alpha_lower: f64,
}

impl VariableLoadings {
    pub fn new(alpha0_upper: f64, alpha_upper: f64, alpha0_lower: f64, alpha_lower: f64) -> Self {
        VariableLoadings {
            alpha0_upper,
            alpha_upper,
            alpha0_lower,
            alpha_lower,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha0_upper", self.alpha0_upper),
            ("alpha_upper", self.alpha_upper),
            ("alpha0_lower", self.alpha0_lower),
            ("alpha_lower", self.alpha_lower),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        Ok(())
    }

    /// Upper and lower factors swapped; the law of `-W`.
    pub fn reflected(&self) -> Self {
        VariableLoadings::new(self.alpha0_lower, self.alpha_lower, self.alpha0_upper, self.alpha_upper)
    }

    pub fn variance(&self) -> f64 {
        1.0 + self.alpha0_upper.powi(2) + self.alpha_upper.powi(2) + self.alpha0_lower.powi(2) + self.alpha_lower.powi(2)
    }

    pub fn mean(&self) -> f64 {
        self.alpha0_upper + self.alpha_upper - self.alpha0_lower - self.alpha_lower
    }

    pub fn has_idiosyncratic(&self) -> bool {
        self.alpha_upper > 0.0 || self.alpha_lower > 0.0
    }

    pub fn has_common(&self) -> bool {
        self.alpha0_upper > 0.0 || self.alpha0_lower > 0.0
    }
}

/// Loadings for all `p` variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorLoadings {
    pub variables: Vec<VariableLoadings>,
}

impl FactorLoadings {
    pub fn new(variables: Vec<VariableLoadings>) -> Result<Self> {
        if variables.is_empty() {
            return Err(Error::invalid("need loadings for at least one variable"));
        }
        for v in &variables {
            v.validate()?;
        }
        Ok(FactorLoadings { variables })
    }

    /// From the stacked vectors `(α_{10}, α_1, α_{20}, α_2, …)` for the upper
    /// and lower factors.
    pub fn from_vectors(upper: &[f64], lower: &[f64]) -> Result<Self> {
        if upper.len() != lower.len() || upper.len() % 2 != 0 || upper.is_empty() {
            return Err(Error::invalid("upper and lower vectors must have equal, even, nonzero length"));
        }
        let variables = upper
            .chunks(2)
            .zip(lower.chunks(2))
            .map(|(u, l)| VariableLoadings::new(u[0], u[1], l[0], l[1]))
            .collect();
        FactorLoadings::new(variables)
    }

    /// All loadings zero: the Gaussian model.
    pub fn gaussian(p: usize) -> Self {
        FactorLoadings {
            variables: vec![VariableLoadings::default(); p],
        }
    }

    pub fn p(&self) -> usize {
        self.variables.len()
    }

    pub fn upper_vector(&self) -> Vec<f64> {
        self.variables.iter().flat_map(|v| [v.alpha0_upper, v.alpha_upper]).collect()
    }

    pub fn lower_vector(&self) -> Vec<f64> {
        self.variables.iter().flat_map(|v| [v.alpha0_lower, v.alpha_lower]).collect()
    }

    pub fn swapped(&self) -> Self {
        FactorLoadings {
            variables: self.variables.iter().rev().copied().collect(),
        }
    }

    /// Correlation of `W_{i1}(s)` and `W_{i2}(s')` given the latent
    /// correlation `cor_z` of `Z_{i1}(s)` and `Z_{i2}(s')`. `same_location`
    /// distinguishes the variance from a within-variable covariance.
    pub fn w_correlation(&self, i1: usize, i2: usize, cor_z: f64, same_location: bool) -> f64 {
        let a = &self.variables[i1];
        let b = &self.variables[i2];
        let cov = if i1 == i2 {
            if same_location {
                return 1.0;
            }
            cor_z + a.variance() - 1.0
        } else {
            cor_z + a.alpha0_upper * b.alpha0_upper + a.alpha0_lower * b.alpha0_lower
        };
        cov / (a.variance() * b.variance()).sqrt()
    }
}

/// `ξ(z; aL, aU, a0L, a0U)`: one partial-fraction term of the marginal CDF.
pub fn xi(z: f64, a_l: f64, a_u: f64, a0_l: f64, a0_u: f64) -> Result<f64> {
    if a_u == 0.0 {
        return Ok(0.0);
    }
    if (a0_u - a_u).abs() <= EPS_SING {
        return Err(Error::SingularMarginal {
            a: a0_u,
            b: a_u,
            eps: EPS_SING,
        });
    }
    let denom = (a0_l + a_u) * (a_l + a_u) * (a0_u - a_u);
    Ok(a_u.powi(3) * shifted_exp_tail(z, a_u) / denom)
}

/// `g_s(z) = exp(1/(2s²) − z/s) Φ(z − 1/s)`, which is `s` times the density of
/// `Z + sE` and `Φ(z) − P(Z + sE ≤ z)`.
fn shifted_exp_tail(z: f64, s: f64) -> f64 {
    let x = 1.0 / s - z;
    if x > 0.0 {
        (-0.5 * z * z).exp() * 0.5 * erfcx(x * std::f64::consts::FRAC_1_SQRT_2)
    } else {
        (0.5 / (s * s) - z / s).exp() * std_normal_cdf(-x)
    }
}

/// Marginal distribution of one variable with precomputed partial fractions.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginal {
    loadings: VariableLoadings,
    /// (scale, weight) for positive scales
    upper: Vec<(f64, f64)>,
    /// (scale, weight) for negated scales, scale stored positive
    lower: Vec<(f64, f64)>,
    mean: f64,
    sd: f64,
}

fn separate(a: f64, b: f64) -> (f64, f64) {
    if a > ZERO_LOADING && b > ZERO_LOADING && (a - b).abs() <= EPS_SING {
        // move the larger one up so that neither can become negative
        if a >= b {
            (b + PERTURBATION * (1.0 + b.abs()), b)
        } else {
            (a, a + PERTURBATION * (1.0 + a.abs()))
        }
    } else {
        (a, b)
    }
}

impl Marginal {
    /// Near-equal pairs of same-sign loadings are separated by
    /// [`PERTURBATION`] before the partial fractions are formed.
    pub fn new(loadings: VariableLoadings) -> Result<Self> {
        loadings.validate()?;
        let (u0, u1) = separate(loadings.alpha0_upper, loadings.alpha_upper);
        let (l0, l1) = separate(loadings.alpha0_lower, loadings.alpha_lower);
        let signed: Vec<f64> = [u0, u1, -l0, -l1].into_iter().filter(|s| s.abs() > ZERO_LOADING).collect();
        let mut upper = Vec::new();
        let mut lower = Vec::new();
        for (k, &s) in signed.iter().enumerate() {
            let w: f64 = signed
                .iter()
                .enumerate()
                .filter(|&(m, _)| m != k)
                .map(|(_, &t)| s / (s - t))
                .product();
            if !w.is_finite() {
                return Err(Error::SingularMarginal { a: s, b: s, eps: EPS_SING });
            }
            if s > 0.0 {
                upper.push((s, w));
            } else {
                lower.push((-s, w));
            }
        }
        Ok(Marginal {
            loadings,
            upper,
            lower,
            mean: loadings.mean(),
            sd: loadings.variance().sqrt(),
        })
    }

    pub fn loadings(&self) -> &VariableLoadings {
        &self.loadings
    }

    pub fn is_gaussian(&self) -> bool {
        self.upper.is_empty() && self.lower.is_empty()
    }

    pub fn cdf(&self, z: f64) -> f64 {
        if z == f64::INFINITY {
            return 1.0;
        }
        if z == f64::NEG_INFINITY {
            return 0.0;
        }
        let mut v = std_normal_cdf(z);
        for &(s, w) in &self.upper {
            v -= w * shifted_exp_tail(z, s);
        }
        for &(s, w) in &self.lower {
            v += w * shifted_exp_tail(-z, s);
        }
        v.clamp(0.0, 1.0)
    }

    /// `1 − cdf(z)`, computed without cancellation in the upper tail.
    pub fn sf(&self, z: f64) -> f64 {
        if z == f64::INFINITY {
            return 0.0;
        }
        if z == f64::NEG_INFINITY {
            return 1.0;
        }
        let mut v = std_normal_cdf(-z);
        for &(s, w) in &self.upper {
            v += w * shifted_exp_tail(z, s);
        }
        for &(s, w) in &self.lower {
            v -= w * shifted_exp_tail(-z, s);
        }
        v.clamp(0.0, 1.0)
    }

    pub fn pdf(&self, z: f64) -> f64 {
        if !z.is_finite() {
            return 0.0;
        }
        if self.is_gaussian() {
            return std_normal_pdf(z);
        }
        let mut v = 0.0;
        for &(s, w) in &self.upper {
            v += w * shifted_exp_tail(z, s) / s;
        }
        for &(s, w) in &self.lower {
            v += w * shifted_exp_tail(-z, s) / s;
        }
        v.max(0.0)
    }

    pub fn log_pdf(&self, z: f64) -> f64 {
        if self.is_gaussian() {
            return -0.5 * z * z - 0.5 * crate::normal::LN_2PI;
        }
        self.pdf(z).ln()
    }

    /// Inverse CDF by safeguarded Newton iteration; `cdf(q) = u` to about 1e-14.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::invalid(format!("quantile level must be in (0, 1), got {u}")));
        }
        if self.is_gaussian() {
            return Ok(std_normal_quantile(u));
        }
        // work on whichever tail keeps the target representable
        if u > 0.5 {
            self.solve(1.0 - u, true)
        } else {
            self.solve(u, false)
        }
    }

    /// Upper quantile: the `z` with `sf(z) = p`, accurate for tiny `p`.
    pub fn upper_quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::invalid(format!("tail probability must be in (0, 1), got {p}")));
        }
        if self.is_gaussian() {
            return Ok(-std_normal_quantile(p));
        }
        if p < 0.5 {
            self.solve(p, true)
        } else {
            self.solve(1.0 - p, false)
        }
    }

    fn solve(&self, target: f64, upper_tail: bool) -> Result<f64> {
        // g(z) increasing in z, root at g = 0
        let g = |z: f64| {
            if upper_tail {
                target - self.sf(z)
            } else {
                self.cdf(z) - target
            }
        };
        let zq = std_normal_quantile(target);
        let guess = self.mean + self.sd * if upper_tail { -zq } else { zq };
        let mut step = self.sd.max(1.0);
        let (mut lo, mut hi);
        let g0 = g(guess);
        if g0 == 0.0 {
            return Ok(guess);
        }
        if g0 < 0.0 {
            lo = guess;
            hi = guess + step;
            while g(hi) < 0.0 {
                lo = hi;
                step *= 2.0;
                hi += step;
                if step > 1e6 {
                    return Err(Error::NotBracketed { lo, hi });
                }
            }
        } else {
            hi = guess;
            lo = guess - step;
            while g(lo) > 0.0 {
                hi = lo;
                step *= 2.0;
                lo -= step;
                if step > 1e6 {
                    return Err(Error::NotBracketed { lo, hi });
                }
            }
        }
        let mut z = 0.5 * (lo + hi);
        for _ in 0..200 {
            let gz = g(z);
            if gz == 0.0 {
                return Ok(z);
            }
            if gz < 0.0 {
                lo = z;
            } else {
                hi = z;
            }
            let d = self.pdf(z);
            let mut next = if d > 0.0 { z - gz / d } else { f64::NAN };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - z).abs() <= 1e-15 * (1.0 + z.abs()) || hi - lo <= 1e-15 * (1.0 + z.abs()) {
                return Ok(next);
            }
            z = next;
        }
        Ok(z)
    }
}

pub fn marginal_cdf(z: f64, loadings: &VariableLoadings) -> Result<f64> {
    Ok(Marginal::new(*loadings)?.cdf(z))
}

pub fn marginal_pdf(z: f64, loadings: &VariableLoadings) -> Result<f64> {
    Ok(Marginal::new(*loadings)?.pdf(z))
}

pub fn marginal_quantile(u: f64, loadings: &VariableLoadings) -> Result<f64> {
    Marginal::new(*loadings)?.quantile(u)
}

/// Density of `V = aU·E1 − aL·E2` for independent standard exponentials.
pub fn factor_diff_pdf(v: f64, a_u: f64, a_l: f64) -> Result<f64> {
    Ok(log_factor_diff_pdf(v, a_u, a_l)?.exp())
}

pub fn log_factor_diff_pdf(v: f64, a_u: f64, a_l: f64) -> Result<f64> {
    if !(a_u >= 0.0 && a_l >= 0.0) || a_u + a_l <= 0.0 {
        return Err(Error::invalid(format!(
            "factor difference needs nonnegative scales with a positive sum, got ({a_u}, {a_l})"
        )));
    }
    let norm = -(a_u + a_l).ln();
    if v > 0.0 {
        if a_u == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(norm - v / a_u)
    } else if v < 0.0 {
        if a_l == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(norm + v / a_l)
    } else {
        Ok(norm)
    }
}
