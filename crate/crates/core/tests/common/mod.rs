//! Independent numerical oracles for the integration tests. Nothing here
//! calls the library's quadrature or special functions.
#![allow(dead_code)]

/// Kronrod 15-point nodes on [0, 1] (positive half) and weights; Gauss
/// 7-point weights for the embedded rule.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut rk = fc * WGK[7];
    let mut rg = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        rk += WGK[j] * s;
        if j % 2 == 1 {
            rg += WG[j / 2] * s;
        }
    }
    (rk * h, ((rk - rg) * h).abs())
}

/// Globally adaptive Gauss–Kronrod on [a, b].
pub fn adaptive<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> f64 {
    let mut segs: Vec<(f64, f64, f64, f64)> = Vec::new();
    let (v, e) = gk15(&mut f, a, b);
    segs.push((a, b, v, e));
    for _ in 0..5000 {
        let total: f64 = segs.iter().map(|s| s.2).sum();
        let err: f64 = segs.iter().map(|s| s.3).sum();
        if err <= abs_tol.max(rel_tol * total.abs()) {
            break;
        }
        let (idx, _) = segs
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.partial_cmp(&y.1 .3).unwrap())
            .unwrap();
        let (a, b, _, _) = segs.swap_remove(idx);
        let m = 0.5 * (a + b);
        let (v1, e1) = gk15(&mut f, a, m);
        let (v2, e2) = gk15(&mut f, m, b);
        segs.push((a, m, v1, e1));
        segs.push((m, b, v2, e2));
    }
    segs.iter().map(|s| s.2).sum()
}

/// Adaptive integral over a list of breakpoints.
pub fn adaptive_pieces<F: FnMut(f64) -> f64>(mut f: F, points: &[f64], abs_tol: f64, rel_tol: f64) -> f64 {
    points
        .windows(2)
        .map(|w| adaptive(&mut f, w[0], w[1], abs_tol, rel_tol))
        .sum()
}

/// Fixed 15-point Kronrod rule on each panel between consecutive points.
pub fn kronrod_pieces<F: FnMut(f64) -> f64>(mut f: F, points: &[f64]) -> f64 {
    points.windows(2).map(|w| gk15(&mut f, w[0], w[1]).0).sum()
}

pub fn phi(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Φ via libm's erfc (fdlibm).
pub fn big_phi(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Density of a bivariate normal with unit variances and correlation `r`.
pub fn bvn_pdf(x: f64, y: f64, r: f64) -> f64 {
    let d = 1.0 - r * r;
    (-(x * x - 2.0 * r * x * y + y * y) / (2.0 * d)).exp() / (2.0 * std::f64::consts::PI * d.sqrt())
}

/// Density of N(0, Σ) by explicit inverse for 2×2 and Gaussian elimination
/// otherwise.
pub fn mvn_pdf(x: &[f64], sigma: &[Vec<f64>]) -> f64 {
    let m = x.len();
    // Cholesky by hand
    let mut l = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..=i {
            let mut s = sigma[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let mut y = vec![0.0; m];
    for i in 0..m {
        let mut s = x[i];
        for k in 0..i {
            s -= l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    let q: f64 = y.iter().map(|v| v * v).sum();
    let logdet: f64 = (0..m).map(|i| 2.0 * l[i][i].ln()).sum();
    (-0.5 * (m as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + q)).exp()
}

/// Simple deterministic xorshift for test-side random parameters.
pub struct TestRng(u64);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        TestRng(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1)
    }
    pub fn uniform(&mut self) -> f64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }
}
