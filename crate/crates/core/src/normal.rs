//! Univariate and bivariate standard normal functions.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use libm::erfc;
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};
use crate::quadrature::{LogConcaveIntegrator, Support};

/// ln(2π)
pub const LN_2PI: f64 = 1.837_877_066_409_345_5;
const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;

/// Standard normal density φ(z).
pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Standard normal CDF Φ(z). Saturates at 0 and 1.
pub fn std_normal_cdf(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

/// ln Φ(z), accurate deep in the lower tail.
pub fn log_std_normal_cdf(z: f64) -> f64 {
    if z == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if z > -5.0 {
        // Φ(z) = 1 - Φ(-z); ln_1p keeps the upper tail exact
        if z > 5.0 {
            return (-std_normal_cdf(-z)).ln_1p();
        }
        return std_normal_cdf(z).ln();
    }
    (0.5 * erfcx(-z * FRAC_1_SQRT_2)).ln() - 0.5 * z * z
}

/// Scaled complementary error function `exp(x²) erfc(x)`.
pub fn erfcx(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        if x < -26.7 {
            return f64::INFINITY;
        }
        return 2.0 * (x * x).exp() - erfcx(-x);
    }
    if x < 4.0 {
        return (x * x).exp() * erfc(x);
    }
    // Laplace continued fraction, evaluated from the tail
    let mut t = x;
    for k in (1..=60).rev() {
        t = x + 0.5 * k as f64 / t;
    }
    FRAC_1_SQRT_PI / t
}

/// Φ⁻¹(u) for u in (0, 1); returns ±∞ at the endpoints.
pub fn std_normal_quantile(u: f64) -> f64 {
    if u <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if u >= 1.0 {
        return f64::INFINITY;
    }
    let mut z = -SQRT_2 * erfc_inv(2.0 * u);
    // one Halley step on whichever tail carries the precision
    let (err, dens) = if z < 0.0 {
        (std_normal_cdf(z) - u, std_normal_pdf(z))
    } else {
        ((1.0 - u) - std_normal_cdf(-z), std_normal_pdf(z))
    };
    if dens > 0.0 && err.is_finite() {
        let step = err / dens;
        z -= step / (1.0 + 0.5 * z * step);
    }
    z
}

// Gauss–Legendre half-rules (negative nodes) for the Genz bivariate algorithm.
const X6: [f64; 3] = [-0.932_469_514_203_152_2, -0.661_209_386_466_264_7, -0.238_619_186_083_197];
const W6: [f64; 3] = [0.171_324_492_379_170_5, 0.360_761_573_048_138_4, 0.467_913_934_572_690_4];
const X12: [f64; 6] = [
    -0.981_560_634_246_719_1,
    -0.904_117_256_370_475,
    -0.769_902_674_194_305,
    -0.587_317_954_286_617_1,
    -0.367_831_498_998_180_2,
    -0.125_233_408_511_469_2,
];
const W12: [f64; 6] = [
    0.047_175_336_386_511_77,
    0.106_939_325_995_318_3,
    0.160_078_328_543_346_4,
    0.203_167_426_723_065_9,
    0.233_492_536_538_354_7,
    0.249_147_045_813_402_9,
];
const X20: [f64; 10] = [
    -0.993_128_599_185_094_9,
    -0.963_971_927_277_913_8,
    -0.912_234_428_251_325_9,
    -0.839_116_971_822_218_8,
    -0.746_331_906_460_150_8,
    -0.636_053_680_726_515,
    -0.510_867_001_950_827_1,
    -0.373_706_088_715_419_6,
    -0.227_785_851_141_645_1,
    -0.076_526_521_133_497_33,
];
const W20: [f64; 10] = [
    0.017_614_007_139_152_12,
    0.040_601_429_800_386_94,
    0.062_672_048_334_109_06,
    0.083_276_741_576_704_75,
    0.101_930_119_817_240_4,
    0.118_194_531_961_518_4,
    0.131_688_638_449_176_6,
    0.142_096_109_318_382_1,
    0.149_172_986_472_603_7,
    0.152_753_387_130_725_9,
];

/// Upper orthant probability P(Z1 > h, Z2 > k) for |r| < 1 (Genz's BVU).
fn bvu(h: f64, k: f64, r: f64) -> f64 {
    let (xs, ws): (&[f64], &[f64]) = if r.abs() < 0.3 {
        (&X6, &W6)
    } else if r.abs() < 0.75 {
        (&X12, &W12)
    } else {
        (&X20, &W20)
    };
    let two_pi = 2.0 * PI;
    let mut hk = h * k;
    let mut bvn = 0.0;
    if r.abs() < 0.925 {
        let hs = 0.5 * (h * h + k * k);
        let asr = r.asin();
        for (&x, &w) in xs.iter().zip(ws) {
            for s in [x, -x] {
                let sn = (asr * (s + 1.0) * 0.5).sin();
                bvn += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
            }
        }
        return bvn * asr / (2.0 * two_pi) + std_normal_cdf(-h) * std_normal_cdf(-k);
    }
    let mut k = k;
    if r < 0.0 {
        k = -k;
        hk = -hk;
    }
    let a_s = (1.0 - r) * (1.0 + r);
    let mut a = a_s.sqrt();
    let bs = (h - k) * (h - k);
    let c = (4.0 - hk) / 8.0;
    let d = (12.0 - hk) / 16.0;
    bvn = a
        * (-(bs / a_s + hk) * 0.5).exp()
        * (1.0 - c * (bs - a_s) * (1.0 - d * bs / 5.0) / 3.0 + c * d * a_s * a_s / 5.0);
    if hk > -160.0 {
        let b = bs.sqrt();
        bvn -= (-hk * 0.5).exp() * two_pi.sqrt() * std_normal_cdf(-b / a) * b * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
    }
    a *= 0.5;
    for (&x, &w) in xs.iter().zip(ws) {
        let xs2 = (a * (x + 1.0)).powi(2);
        let rs = (1.0 - xs2).sqrt();
        bvn += a
            * w
            * ((-bs / (2.0 * xs2) - hk / (1.0 + rs)).exp() / rs
                - (-(bs / xs2 + hk) * 0.5).exp() * (1.0 + c * xs2 * (1.0 + d * xs2)));
        let xs2 = a_s * (1.0 - x).powi(2) / 4.0;
        let rs = (1.0 - xs2).sqrt();
        bvn += a
            * w
            * (-(bs / xs2 + hk) * 0.5).exp()
            * ((-hk * (1.0 - rs) / (2.0 * (1.0 + rs))).exp() / rs - (1.0 + c * xs2 * (1.0 + d * xs2)));
    }
    bvn = -bvn / two_pi;
    if r > 0.0 {
        bvn += std_normal_cdf(-h.max(k));
    } else {
        bvn = -bvn + (std_normal_cdf(-h) - std_normal_cdf(-k)).max(0.0);
    }
    bvn
}

fn check_rho(rho: f64) -> Result<()> {
    if !rho.is_finite() || rho.abs() > 1.0 + 1e-12 {
        return Err(Error::invalid(format!("correlation must be finite and in [-1, 1], got {rho}")));
    }
    Ok(())
}

/// Bivariate standard normal CDF Φ_ρ(z1, z2) = P(Z1 ≤ z1, Z2 ≤ z2).
pub fn bvn_cdf(z1: f64, z2: f64, rho: f64) -> Result<f64> {
    check_rho(rho)?;
    if z1.is_nan() || z2.is_nan() {
        return Err(Error::invalid("bvn_cdf arguments must not be NaN"));
    }
    if z1 == f64::NEG_INFINITY || z2 == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    if z1 == f64::INFINITY {
        return Ok(std_normal_cdf(z2));
    }
    if z2 == f64::INFINITY {
        return Ok(std_normal_cdf(z1));
    }
    let rho = rho.clamp(-1.0, 1.0);
    if rho == 1.0 {
        return Ok(std_normal_cdf(z1.min(z2)));
    }
    if rho == -1.0 {
        return Ok((std_normal_cdf(z1) - std_normal_cdf(-z2)).max(0.0));
    }
    Ok(bvu(-z1, -z2, rho).clamp(0.0, 1.0))
}

/// ln Φ_ρ(z1, z2), keeping relative accuracy when the probability is tiny.
pub fn log_bvn_cdf(z1: f64, z2: f64, rho: f64) -> Result<f64> {
    let direct = bvn_cdf(z1, z2, rho)?;
    if direct >= 1e-7 {
        return Ok(direct.ln());
    }
    if !z1.is_finite() || !z2.is_finite() {
        // one argument infinite: the result is univariate or zero
        if z1 == f64::NEG_INFINITY || z2 == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        return Ok(log_std_normal_cdf(z1.min(z2)));
    }
    let rho = rho.clamp(-1.0, 1.0);
    let (h, k) = if z1 <= z2 { (z1, z2) } else { (z2, z1) };
    if rho == 1.0 {
        return Ok(log_std_normal_cdf(h));
    }
    if rho == -1.0 {
        // P(-k < Z < h)
        if h <= -k {
            return Ok(f64::NEG_INFINITY);
        }
        let lh = log_std_normal_cdf(h);
        let lk = log_std_normal_cdf(-k);
        return Ok(lh + (-(lk - lh).exp()).ln_1p());
    }
    let s = ((1.0 - rho) * (1.0 + rho)).sqrt();
    let integrator = bvn_tail_integrator();
    let logf = |x: f64| -0.5 * x * x - 0.5 * LN_2PI + log_std_normal_cdf((k - rho * x) / s);
    integrator.log_integrate(
        logf,
        Support {
            lower: f64::NEG_INFINITY,
            upper: h,
            kink: None,
            scale: (1.0 / (1.0 + h.abs())).min(1.0),
            start: Some(h),
        },
    )
}

fn bvn_tail_integrator() -> &'static LogConcaveIntegrator {
    static INTEGRATOR: std::sync::OnceLock<LogConcaveIntegrator> = std::sync::OnceLock::new();
    INTEGRATOR.get_or_init(|| LogConcaveIntegrator::new(24))
}
