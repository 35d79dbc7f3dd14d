//! Empirical dependence measures and goodness-of-fit summaries.

use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{average_ranks, UniformScores};
use crate::error::{Error, Result};
use crate::normal::std_normal_cdf;

/// Power in the tail transform `a(u) = (1 − 2u)^γ`.
pub const TAIL_POWER: i32 = 6;
/// Quadrant points below which a tail-weighted estimate is flagged.
pub const MIN_QUADRANT_POINTS: usize = 20;
/// Thresholds reported by [`gof_deltas`].
pub const DEFAULT_Q_GRID: [f64; 3] = [0.01, 0.05, 0.10];
/// Normal-copula sample size behind each ϱ_N table entry.
pub const RHO_N_SAMPLES: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tail {
    Lower,
    Upper,
}

/// An estimate together with a flag for too little data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    /// Observations the estimate rests on.
    pub support: usize,
    pub unstable: bool,
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len());
    if n < 2 {
        return f64::NAN;
    }
    let mx = x[..n].iter().sum::<f64>() / n as f64;
    let my = y[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    sxy / (sxx * syy).sqrt()
}

/// Spearman's rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Gaussian correlation with the given Spearman's ρ.
pub fn spearman_to_pearson(rho_s: f64) -> f64 {
    2.0 * (std::f64::consts::PI * rho_s / 6.0).sin()
}

/// `λ^q`: the share of the `q`-tail of `u1` that is also in the `q`-tail of `u2`.
pub fn empirical_lambda(u1: &[f64], u2: &[f64], q: f64, tail: Tail) -> Result<Estimate> {
    if !(q > 0.0 && q < 0.5) {
        return Err(Error::invalid(format!("threshold q = {q} must lie in (0, 0.5)")));
    }
    if u1.len() != u2.len() || u1.is_empty() {
        return Err(Error::invalid("score columns must be non-empty and of equal length"));
    }
    let n = u1.len() as f64;
    let count = match tail {
        Tail::Lower => u1.iter().zip(u2).filter(|(&a, &b)| a <= q && b <= q).count(),
        Tail::Upper => u1.iter().zip(u2).filter(|(&a, &b)| a >= 1.0 - q && b >= 1.0 - q).count(),
    };
    Ok(Estimate {
        value: count as f64 / (n * q),
        support: count,
        unstable: q * n < 5.0,
    })
}

/// Correlation of `(1 − 2u)^γ` (lower) or `(2u − 1)^γ` (upper) over the points
/// in the joint lower or upper quadrant.
pub fn tail_weighted_rho(u1: &[f64], u2: &[f64], tail: Tail) -> Result<Estimate> {
    if u1.len() != u2.len() {
        return Err(Error::invalid("score columns must have equal length"));
    }
    let transform = |u: f64| match tail {
        Tail::Lower if u < 0.5 => Some((1.0 - 2.0 * u).powi(TAIL_POWER)),
        Tail::Upper if u > 0.5 => Some((2.0 * u - 1.0).powi(TAIL_POWER)),
        _ => None,
    };
    let (a, b): (Vec<f64>, Vec<f64>) = u1
        .iter()
        .zip(u2)
        .filter_map(|(&x, &y)| Some((transform(x)?, transform(y)?)))
        .unzip();
    let support = a.len();
    Ok(Estimate {
        value: pearson(&a, &b),
        support,
        unstable: support < MIN_QUADRANT_POINTS,
    })
}

fn rho_n_grid() -> Vec<f64> {
    let mut g: Vec<f64> = (-19..=19).map(|k| k as f64 * 0.05).collect();
    g.extend([0.97, 0.99]);
    g
}

/// ϱ of a normal copula with the given Spearman's ρ, by simulation.
pub fn rho_n_simulated(rho_s: f64, samples: usize, seed: u64) -> f64 {
    let r = spearman_to_pearson(rho_s);
    let c = (1.0 - r * r).max(0.0).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut u1, mut u2) = (Vec::with_capacity(samples), Vec::with_capacity(samples));
    for _ in 0..samples {
        let x: f64 = StandardNormal.sample(&mut rng);
        let e: f64 = StandardNormal.sample(&mut rng);
        u1.push(std_normal_cdf(x));
        u2.push(std_normal_cdf(r * x + c * e));
    }
    // both tails estimate the same quantity; average them
    let l = tail_weighted_rho(&u1, &u2, Tail::Lower).map(|e| e.value).unwrap_or(f64::NAN);
    let u = tail_weighted_rho(&u1, &u2, Tail::Upper).map(|e| e.value).unwrap_or(f64::NAN);
    0.5 * (l + u)
}

/// `(spearman, ϱ_N)` nodes of the calibration table, built on first use.
pub fn rho_n_table() -> &'static [(f64, f64)] {
    static TABLE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let grid = rho_n_grid();
        let mut t: Vec<(f64, f64)> = grid
            .par_iter()
            .enumerate()
            .map(|(k, &s)| (s, rho_n_simulated(s, RHO_N_SAMPLES, 0x5eed_0000 + k as u64)))
            .collect();
        t.push((1.0, 1.0));
        t
    })
}

/// ϱ_N: the tail-weighted measure a normal copula with this Spearman's ρ would
/// show, interpolated linearly in the calibration table.
pub fn rho_n_calibration(spearman: f64) -> f64 {
    let t = rho_n_table();
    if spearman.is_nan() {
        return f64::NAN;
    }
    if spearman <= t[0].0 {
        return t[0].1;
    }
    let k = t.partition_point(|&(s, _)| s < spearman).min(t.len() - 1);
    let (s0, v0) = t[k - 1];
    let (s1, v1) = t[k];
    v0 + (v1 - v0) * (spearman - s0) / (s1 - s0)
}

/// Location pairs of one comparison group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairGroup {
    /// Variable `i` at two locations.
    Within(usize),
    /// Variable 0 at one location, variable 1 at another.
    Cross,
}

impl PairGroup {
    pub fn label(&self) -> String {
        match self {
            PairGroup::Within(i) => format!("variable{}", i + 1),
            PairGroup::Cross => "cross".to_string(),
        }
    }
}

/// Dependence measures of one column pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMeasures {
    pub group: PairGroup,
    pub location1: usize,
    pub location2: usize,
    pub spearman: f64,
    pub rho_lower: f64,
    pub rho_upper: f64,
    pub rho_normal: f64,
    /// `(q, λ_L^q, λ_U^q)`
    pub lambdas: Vec<(f64, f64, f64)>,
}

fn pair_columns(group: PairGroup, n: usize, j1: usize, j2: usize) -> (usize, usize) {
    match group {
        PairGroup::Within(i) => (i * n + j1, i * n + j2),
        PairGroup::Cross => (j1, n + j2),
    }
}

/// Measures for every ordered location pair `(j1, j2)` of a group. Diagonal
/// within-variable pairs are included and give exact zeros in Δ.
pub fn pair_measures(scores: &UniformScores, group: PairGroup, q_grid: &[f64]) -> Result<Vec<PairMeasures>> {
    let design = scores.design();
    let n = design.n();
    if let PairGroup::Within(i) = group {
        if i >= design.p() {
            return Err(Error::invalid(format!("variable {i} out of range")));
        }
    } else if design.p() < 2 {
        return Err(Error::invalid("cross pairs need two variables"));
    }
    let cols: Vec<Vec<f64>> = (0..design.dim()).map(|c| scores.column(c)).collect();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (0..n).map(move |b| (a, b))).collect();
    pairs
        .par_iter()
        .map(|&(j1, j2)| {
            let (c1, c2) = pair_columns(group, n, j1, j2);
            let (x, y) = (&cols[c1], &cols[c2]);
            let rho = spearman(x, y);
            let lambdas = q_grid
                .iter()
                .map(|&q| {
                    Ok((
                        q,
                        empirical_lambda(x, y, q, Tail::Lower)?.value,
                        empirical_lambda(x, y, q, Tail::Upper)?.value,
                    ))
                })
                .collect::<Result<_>>()?;
            Ok(PairMeasures {
                group,
                location1: j1,
                location2: j2,
                spearman: rho,
                rho_lower: tail_weighted_rho(x, y, Tail::Lower)?.value,
                rho_upper: tail_weighted_rho(x, y, Tail::Upper)?.value,
                rho_normal: rho_n_calibration(rho),
                lambdas,
            })
        })
        .collect()
}

/// Group averages and data-minus-model deltas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: PairGroup,
    pub pairs: usize,
    /// averages on the data side: S_ρ, ϱ̄_N, ϱ̄_L, ϱ̄_U
    pub mean_spearman: f64,
    pub mean_rho_normal: f64,
    pub mean_rho_lower: f64,
    pub mean_rho_upper: f64,
    pub delta_rho: f64,
    pub abs_delta_rho: f64,
    pub delta_lower: f64,
    pub abs_delta_lower: f64,
    pub delta_upper: f64,
    pub abs_delta_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailSummary {
    pub groups: Vec<GroupSummary>,
    pub data_pairs: Vec<PairMeasures>,
    pub model_pairs: Vec<PairMeasures>,
}

impl TailSummary {
    pub fn group(&self, g: PairGroup) -> Option<&GroupSummary> {
        self.groups.iter().find(|s| s.group == g)
    }
}

fn mean(x: impl Iterator<Item = f64>) -> f64 {
    let (s, c) = x.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    s / c as f64
}

/// Compares data and model-simulated scores pair by pair and averages
/// `data − model` over the within-variable and cross groups.
pub fn gof_deltas(data: &UniformScores, model: &UniformScores, q_grid: &[f64]) -> Result<TailSummary> {
    if data.design() != model.design() {
        return Err(Error::invalid("data and model scores must share a design"));
    }
    let p = data.design().p();
    let mut groups_list: Vec<PairGroup> = (0..p).map(PairGroup::Within).collect();
    if p == 2 {
        groups_list.push(PairGroup::Cross);
    }
    let mut groups = Vec::new();
    let mut data_pairs = Vec::new();
    let mut model_pairs = Vec::new();
    for g in groups_list {
        let d = pair_measures(data, g, q_grid)?;
        let m = pair_measures(model, g, q_grid)?;
        let diff = |f: fn(&PairMeasures) -> f64| -> Vec<f64> { d.iter().zip(&m).map(|(a, b)| f(a) - f(b)).collect() };
        let dr = diff(|x| x.spearman);
        let dl = diff(|x| x.rho_lower);
        let du = diff(|x| x.rho_upper);
        groups.push(GroupSummary {
            group: g,
            pairs: d.len(),
            mean_spearman: mean(d.iter().map(|x| x.spearman)),
            mean_rho_normal: mean(d.iter().map(|x| x.rho_normal)),
            mean_rho_lower: mean(d.iter().map(|x| x.rho_lower)),
            mean_rho_upper: mean(d.iter().map(|x| x.rho_upper)),
            delta_rho: mean(dr.iter().copied()),
            abs_delta_rho: mean(dr.iter().map(|v| v.abs())),
            delta_lower: mean(dl.iter().copied()),
            abs_delta_lower: mean(dl.iter().map(|v| v.abs())),
            delta_upper: mean(du.iter().copied()),
            abs_delta_upper: mean(du.iter().map(|v| v.abs())),
        });
        data_pairs.extend(d);
        model_pairs.extend(m);
    }
    Ok(TailSummary {
        groups,
        data_pairs,
        model_pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_scores(n: usize) -> Vec<f64> {
        (0..n).map(|k| (k as f64 + 0.5) / n as f64).collect()
    }

    #[test]
    fn comonotone_columns() {
        let u = grid_scores(1000);
        for q in [0.01, 0.05, 0.1] {
            assert_eq!(empirical_lambda(&u, &u, q, Tail::Lower).unwrap().value, 1.0);
            assert_eq!(empirical_lambda(&u, &u, q, Tail::Upper).unwrap().value, 1.0);
        }
        assert!((tail_weighted_rho(&u, &u, Tail::Lower).unwrap().value - 1.0).abs() < 1e-12);
        assert!((spearman(&u, &u) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn small_samples_are_flagged() {
        let u = grid_scores(30);
        assert!(empirical_lambda(&u, &u, 0.1, Tail::Lower).unwrap().unstable);
        assert!(tail_weighted_rho(&u, &u, Tail::Upper).unwrap().unstable);
        assert!(empirical_lambda(&u, &u, 0.6, Tail::Lower).is_err());
    }

    #[test]
    fn reflection_swaps_tails() {
        let u1: Vec<f64> = grid_scores(200);
        let u2: Vec<f64> = u1.iter().map(|&u| (u * 7.3).fract().max(1e-3)).collect();
        let r1: Vec<f64> = u1.iter().map(|u| 1.0 - u).collect();
        let r2: Vec<f64> = u2.iter().map(|u| 1.0 - u).collect();
        let a = empirical_lambda(&u1, &u2, 0.1, Tail::Upper).unwrap().value;
        let b = empirical_lambda(&r1, &r2, 0.1, Tail::Lower).unwrap().value;
        assert_eq!(a, b);
    }

    #[test]
    fn spearman_pearson_conversion() {
        assert_eq!(spearman_to_pearson(0.0), 0.0);
        assert!((spearman_to_pearson(1.0) - 1.0).abs() < 1e-15);
    }
}
