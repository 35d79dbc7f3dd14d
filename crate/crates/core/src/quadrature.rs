//! Gauss–Legendre rules and a log-space integrator for log-concave integrands.
//!
//! Every one-dimensional integral in the density, the tail-limit and the
//! interpolation code has a log-concave integrand (Gaussian kernels convolved
//! with exponential factors). [`LogConcaveIntegrator`] exploits this: it
//! locates the mode, brackets the region where the integrand is within
//! `drop` nats of its maximum, and applies a Gauss–Legendre panel on each side
//! of the mode (split again at an optional kink), summing in log space.

use crate::error::{Error, Result};

/// Default number of Gauss–Legendre nodes per panel.
pub const DEFAULT_NODES: usize = 30;

/// An n-point Gauss–Legendre rule on [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    /// Nodes are computed by Newton iteration on the Legendre recurrence.
    pub fn gauss_legendre(n: usize) -> Self {
        assert!(n >= 1, "a quadrature rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        QuadratureRule { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Integral of `f` over [a, b].
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * f(mid + half * t))
            .sum::<f64>()
            * half
    }

    /// Abscissae and weights for the half line: `v = scale * t / (1 - t)` with
    /// the rule mapped to `t` in (0, 1).
    pub fn half_line(&self, scale: f64) -> Vec<(f64, f64)> {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| {
                let t = 0.5 * (x + 1.0);
                let one_minus = 1.0 - t;
                (scale * t / one_minus, 0.5 * w * scale / (one_minus * one_minus))
            })
            .collect()
    }

    /// `ln ∫ exp(logf)` over [a, b], with the sum taken relative to `offset`.
    fn log_panel<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, offset: f64, logf: &mut F) -> Result<f64> {
        if b <= a {
            return Ok(f64::NEG_INFINITY);
        }
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (&t, &w) in self.nodes.iter().zip(&self.weights) {
            let x = mid + half * t;
            let lf = logf(x);
            if lf.is_nan() || lf == f64::INFINITY {
                return Err(Error::Quadrature {
                    abscissa: x,
                    context: format!("log-integrand = {lf}"),
                });
            }
            acc += w * (lf - offset).exp();
        }
        Ok(offset + (acc * half).ln())
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// `ln(e^a + e^b)` without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Integrates `exp(logf)` for log-concave `logf`, returning the log of the
/// integral.
#[derive(Debug, Clone)]
pub struct LogConcaveIntegrator {
    rule: QuadratureRule,
    /// Truncate where the integrand has fallen this many nats below its mode.
    drop: f64,
    golden_iters: usize,
    bisect_iters: usize,
}

impl Default for LogConcaveIntegrator {
    fn default() -> Self {
        Self::new(DEFAULT_NODES)
    }
}

/// Where the integrand lives. `scale` is a rough width used for the first
/// search steps; `kink` is a point where the integrand is continuous but not
/// smooth and gets its own panel boundary.
#[derive(Debug, Clone, Copy)]
pub struct Support {
    pub lower: f64,
    pub upper: f64,
    pub kink: Option<f64>,
    pub scale: f64,
    pub start: Option<f64>,
}

impl Support {
    pub fn real_line(scale: f64) -> Self {
        Support {
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
            kink: None,
            scale,
            start: None,
        }
    }

    pub fn with_kink(mut self, kink: f64) -> Self {
        self.kink = Some(kink);
        self
    }

    pub fn with_start(mut self, start: f64) -> Self {
        self.start = Some(start);
        self
    }
}

const GOLDEN: f64 = 0.618_033_988_749_894_8;
const FLAT: f64 = 0.5;

impl LogConcaveIntegrator {
    pub fn new(nodes: usize) -> Self {
        LogConcaveIntegrator {
            rule: QuadratureRule::gauss_legendre(nodes),
            drop: 38.0,
            golden_iters: 200,
            bisect_iters: 10,
        }
    }

    pub fn nodes(&self) -> usize {
        self.rule.len()
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    /// `ln ∫_{lower}^{upper} exp(logf(x)) dx`.
    pub fn log_integrate<F: FnMut(f64) -> f64>(&self, mut logf: F, support: Support) -> Result<f64> {
        let Support {
            lower,
            upper,
            kink,
            scale,
            start,
        } = support;
        if !(upper > lower) {
            return Ok(f64::NEG_INFINITY);
        }
        let scale = if scale.is_finite() && scale > 0.0 { scale } else { 1.0 };
        let x0 = start
            .or(kink)
            .unwrap_or(0.0)
            .clamp(lower, upper)
            .max(if lower.is_finite() { lower } else { f64::NEG_INFINITY });
        let (mode, fmax, width) = self.find_mode(&mut logf, x0, lower, upper, scale)?;
        let width = if width > 0.0 { width } else { scale };
        if fmax == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        let target = fmax - self.drop;
        let right = self.find_edge(&mut logf, mode, upper, width, target, 1.0);
        let left = self.find_edge(&mut logf, mode, lower, width, target, -1.0);

        let mut cuts = vec![left, mode, right];
        if let Some(k) = kink {
            if k > left && k < right && (k - mode).abs() > 1e-12 * scale {
                cuts.push(k);
            }
        }
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cuts.dedup();
        let mut total = f64::NEG_INFINITY;
        for w in cuts.windows(2) {
            let part = self.rule.log_panel(w[0], w[1], fmax, &mut logf)?;
            total = log_add_exp(total, part);
        }
        Ok(total)
    }

    fn eval<F: FnMut(f64) -> f64>(logf: &mut F, x: f64) -> Result<f64> {
        let v = logf(x);
        if v.is_nan() || v == f64::INFINITY {
            return Err(Error::Quadrature {
                abscissa: x,
                context: format!("log-integrand = {v} during mode search"),
            });
        }
        Ok(v)
    }

    fn find_mode<F: FnMut(f64) -> f64>(
        &self,
        logf: &mut F,
        x0: f64,
        lower: f64,
        upper: f64,
        scale: f64,
    ) -> Result<(f64, f64, f64)> {
        let f0 = Self::eval(logf, x0)?;
        let step = 0.25 * scale;
        let xr = (x0 + step).min(upper);
        let xl = (x0 - step).max(lower);
        let fr = if xr > x0 { Self::eval(logf, xr)? } else { f64::NEG_INFINITY };
        let fl = if xl < x0 { Self::eval(logf, xl)? } else { f64::NEG_INFINITY };

        // bracket (a, b, c) with f(b) >= f(a), f(c)
        let (mut a, mut b, mut c, mut fb);
        if fr > f0 || (f0 == f64::NEG_INFINITY && fr > fl) {
            // walk right
            a = x0;
            b = xr;
            fb = fr;
            let mut h = step;
            loop {
                if b >= upper {
                    return Ok((b, fb, b - a));
                }
                h *= 2.0;
                let x = (b + h).min(upper);
                let fx = Self::eval(logf, x)?;
                if fx > fb {
                    a = b;
                    b = x;
                    fb = fx;
                } else {
                    c = x;
                    break;
                }
            }
        } else if fl > f0 || (f0 == f64::NEG_INFINITY && fl > fr) {
            c = x0;
            b = xl;
            fb = fl;
            let mut h = step;
            loop {
                if b <= lower {
                    return Ok((b, fb, c - b));
                }
                h *= 2.0;
                let x = (b - h).max(lower);
                let fx = Self::eval(logf, x)?;
                if fx > fb {
                    c = b;
                    b = x;
                    fb = fx;
                } else {
                    a = x;
                    break;
                }
            }
        } else {
            if f0 == f64::NEG_INFINITY {
                return Ok((x0, f0, step));
            }
            a = xl;
            b = x0;
            c = xr;
            fb = f0;
        }

        // golden-section refinement until the bracket sits inside the
        // region within `FLAT` nats of the maximum
        let mut fa = Self::eval(logf, a)?;
        let mut fc = Self::eval(logf, c)?;
        let mut x1 = c - GOLDEN * (c - a);
        let mut x2 = a + GOLDEN * (c - a);
        let mut f1 = Self::eval(logf, x1)?;
        let mut f2 = Self::eval(logf, x2)?;
        for _ in 0..self.golden_iters {
            if f1.max(f2) - fa.min(fc) < FLAT {
                break;
            }
            if f1 > f2 {
                c = x2;
                fc = f2;
                x2 = x1;
                f2 = f1;
                x1 = c - GOLDEN * (c - a);
                f1 = Self::eval(logf, x1)?;
            } else {
                a = x1;
                fa = f1;
                x1 = x2;
                f1 = f2;
                x2 = a + GOLDEN * (c - a);
                f2 = Self::eval(logf, x2)?;
            }
        }
        let (mut xm, mut fm) = if f1 > f2 { (x1, f1) } else { (x2, f2) };
        if fb > fm && b > a && b < c {
            xm = b;
            fm = fb;
        }
        Ok((xm, fm, c - a))
    }

    fn find_edge<F: FnMut(f64) -> f64>(
        &self,
        logf: &mut F,
        mode: f64,
        bound: f64,
        scale: f64,
        target: f64,
        dir: f64,
    ) -> f64 {
        if mode == bound {
            return bound;
        }
        let mut inside = mode;
        let mut h = scale;
        let outside;
        loop {
            let mut x = inside + dir * h;
            if (dir > 0.0 && x >= bound) || (dir < 0.0 && x <= bound) {
                x = bound;
                let fx = logf(x);
                if !(fx < target) {
                    return bound;
                }
                outside = x;
                break;
            }
            let fx = logf(x);
            if fx < target || fx.is_nan() {
                outside = x;
                break;
            }
            inside = x;
            h *= 2.0;
            if h > 1e8 * scale {
                return x;
            }
        }
        let (mut lo, mut hi) = (inside, outside);
        for _ in 0..self.bisect_iters {
            let mid = 0.5 * (lo + hi);
            let fm = logf(mid);
            if fm < target || fm.is_nan() {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }
}
