//! Exact sampling from the factor-copula model.
//!
//! Replicate `k` draws from its own ChaCha8 stream (`seed`, stream `k`), so
//! output does not depend on how replicates are scheduled across threads.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{build_sigma_z, CovarianceSpec, SpatialDesign};
use crate::data::{uniform_scores, ReplicateMatrix};
use crate::diagnostics::{empirical_lambda, spearman, Tail};
use crate::error::{Error, Result};
use crate::margins::FactorLoadings;

/// Distribution of the positive factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FactorLaw {
    Exponential,
    /// Pareto with scale 1 and shape `k > 1`.
    Pareto { k: f64 },
    /// Weibull with scale 1 and shape `κ ∈ (0, 1)`.
    Weibull { kappa: f64 },
}

impl FactorLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            FactorLaw::Exponential => Ok(()),
            FactorLaw::Pareto { k } if k > 1.0 && k.is_finite() => Ok(()),
            FactorLaw::Pareto { k } => Err(Error::invalid(format!("Pareto shape must exceed 1, got {k}"))),
            FactorLaw::Weibull { kappa } if kappa > 0.0 && kappa < 1.0 => Ok(()),
            FactorLaw::Weibull { kappa } => Err(Error::invalid(format!("Weibull shape must lie in (0, 1), got {kappa}"))),
        }
    }

    /// Inverse-CDF draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // in (0, 1]: never zero, so the logarithm and the power stay finite
        let u = 1.0 - rng.random::<f64>();
        match *self {
            FactorLaw::Exponential => -u.ln(),
            FactorLaw::Pareto { k } => u.powf(-1.0 / k),
            FactorLaw::Weibull { kappa } => (-u.ln()).powf(1.0 / kappa),
        }
    }
}

impl fmt::Display for FactorLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FactorLaw::Exponential => write!(f, "exp"),
            FactorLaw::Pareto { k } => write!(f, "pareto:{k}"),
            FactorLaw::Weibull { kappa } => write!(f, "weibull:{kappa}"),
        }
    }
}

impl FromStr for FactorLaw {
    type Err = Error;

    /// `exp`, `pareto:<k>` or `weibull:<kappa>`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        let num = |a: Option<&str>| -> Result<f64> {
            a.ok_or_else(|| Error::invalid(format!("factor law `{s}` needs a shape parameter")))?
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("bad shape parameter in `{s}`")))
        };
        let law = match (kind, arg) {
            ("exp" | "exponential", None) => FactorLaw::Exponential,
            ("pareto", a) => FactorLaw::Pareto { k: num(a)? },
            ("weibull", a) => FactorLaw::Weibull { kappa: num(a)? },
            _ => return Err(Error::invalid(format!("unknown factor law `{s}`"))),
        };
        law.validate()?;
        Ok(law)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub design: SpatialDesign,
    pub spec: CovarianceSpec,
    pub loadings: FactorLoadings,
    pub n_replicates: usize,
    pub law: FactorLaw,
    pub seed: u64,
    /// Draw the idiosyncratic factors afresh at every location (a nugget)
    /// instead of once per variable.
    pub location_specific: bool,
}

impl SimulationConfig {
    pub fn new(design: SpatialDesign, spec: CovarianceSpec, loadings: FactorLoadings, n_replicates: usize) -> Self {
        SimulationConfig {
            design,
            spec,
            loadings,
            n_replicates,
            law: FactorLaw::Exponential,
            seed: 0,
            location_specific: false,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_law(mut self, law: FactorLaw) -> Self {
        self.law = law;
        self
    }

    /// Independent idiosyncratic factors at each location, as in the
    /// univariate Pareto process `W_j = Z_j + α₀V₀ + α₁V_j`.
    pub fn with_location_specific_factors(mut self) -> Self {
        self.location_specific = true;
        self
    }
}

/// Draws `N` independent replicates of `W`.
pub fn simulate(cfg: &SimulationConfig) -> Result<ReplicateMatrix> {
    if cfg.n_replicates == 0 {
        return Err(Error::invalid("need at least one replicate"));
    }
    cfg.law.validate()?;
    let p = cfg.design.p();
    if cfg.loadings.p() != p {
        return Err(Error::invalid(format!("loadings have {} variables, design {p}", cfg.loadings.p())));
    }
    for v in &cfg.loadings.variables {
        v.validate()?;
    }
    let sigma = build_sigma_z(&cfg.design, &cfg.spec)?;
    let l = sigma.cholesky_l();
    let n = cfg.design.n();
    let m = cfg.design.dim();
    let vars = &cfg.loadings.variables;
    let mut values = vec![0.0; cfg.n_replicates * m];
    values.par_chunks_mut(m).enumerate().for_each(|(k, row)| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(k as u64);
        let e: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        for (a, out) in row.iter_mut().enumerate() {
            *out = (0..=a).map(|b| l[(a, b)] * e[b]).sum();
        }
        let e0u = cfg.law.sample(&mut rng);
        let e0l = cfg.law.sample(&mut rng);
        for (i, v) in vars.iter().enumerate() {
            let mut eiu = cfg.law.sample(&mut rng);
            let mut eil = cfg.law.sample(&mut rng);
            for (j, x) in row[i * n..(i + 1) * n].iter_mut().enumerate() {
                if cfg.location_specific && j > 0 {
                    eiu = cfg.law.sample(&mut rng);
                    eil = cfg.law.sample(&mut rng);
                }
                *x += v.alpha0_upper * e0u + v.alpha_upper * eiu - v.alpha0_lower * e0l - v.alpha_lower * eil;
            }
        }
    });
    ReplicateMatrix::new(cfg.design.clone(), values)
}

/// One row of [`empirical_dependence_curves`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependencePoint {
    pub column1: usize,
    pub column2: usize,
    pub spearman: f64,
    pub q: f64,
    pub lambda_lower: f64,
    pub lambda_upper: f64,
    /// Fewer than five expected tail points.
    pub unstable: bool,
}

/// Spearman's ρ and `λ_L^q`, `λ_U^q` for each column pair and threshold.
pub fn empirical_dependence_curves(data: &ReplicateMatrix, pairs: &[(usize, usize)], q_grid: &[f64]) -> Result<Vec<DependencePoint>> {
    let m = data.n_columns();
    if let Some(&(a, b)) = pairs.iter().find(|&&(a, b)| a >= m || b >= m) {
        return Err(Error::invalid(format!("pair ({a}, {b}) references a column beyond {m}")));
    }
    let scores = uniform_scores(data)?;
    let mut out = Vec::with_capacity(pairs.len() * q_grid.len());
    for &(a, b) in pairs {
        let (x, y) = (scores.column(a), scores.column(b));
        let rho = spearman(&x, &y);
        for &q in q_grid {
            let lo = empirical_lambda(&x, &y, q, Tail::Lower)?;
            let up = empirical_lambda(&x, &y, q, Tail::Upper)?;
            out.push(DependencePoint {
                column1: a,
                column2: b,
                spearman: rho,
                q,
                lambda_lower: lo.value,
                lambda_upper: up.value,
                unstable: lo.unstable || up.unstable,
            });
        }
    }
    Ok(out)
}

/// The three parameter sets of the transect illustration: upper loadings,
/// lower loadings and `(θ₀, θ₁, θ₂)`.
pub const FIG1_MODELS: [([f64; 4], [f64; 4], [f64; 3]); 3] = [
    ([1.40, 0.50, 0.80, 0.00], [0.80, 1.00, 0.60, 0.20], [0.75, 0.10, 0.40]),
    ([1.20, 1.00, 0.80, 0.20], [1.00, 0.80, 0.60, 0.20], [0.75, 0.10, 0.40]),
    ([1.15, 1.05, 0.75, 0.50], [1.10, 0.20, 0.60, 0.00], [0.75, 0.10, 0.45]),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairType {
    /// `W_{11}` with `W_{1j}`
    Variable1,
    /// `W_{21}` with `W_{2j}`
    Variable2,
    /// `W_{11}` with `W_{2j}`
    Cross,
}

impl PairType {
    pub const ALL: [PairType; 3] = [PairType::Variable1, PairType::Variable2, PairType::Cross];

    pub fn label(&self) -> &'static str {
        match self {
            PairType::Variable1 => "variable1",
            PairType::Variable2 => "variable2",
            PairType::Cross => "cross",
        }
    }

    fn columns(&self, n: usize, j: usize) -> (usize, usize) {
        match self {
            PairType::Variable1 => (0, j),
            PairType::Variable2 => (n, n + j),
            PairType::Cross => (0, n + j),
        }
    }
}

/// One value plotted in the transect figure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig1Row {
    /// 1-based model number
    pub model: usize,
    pub pair_type: PairType,
    pub lag: usize,
    /// `spearman`, `lambda_L` or `lambda_U`
    pub stat: String,
    /// `None` for Spearman's ρ
    pub q: Option<f64>,
    pub value: f64,
}

/// Model `index` (0-based) of [`FIG1_MODELS`] on the 5-point transect.
pub fn fig1_model(index: usize) -> Result<(SpatialDesign, CovarianceSpec, FactorLoadings)> {
    let (upper, lower, theta) = FIG1_MODELS
        .get(index)
        .ok_or_else(|| Error::invalid(format!("there are {} models", FIG1_MODELS.len())))?;
    let design = SpatialDesign::transect(2, 5)?;
    let spec = CovarianceSpec::shared_exponential(theta[0], &theta[1..])?;
    let loadings = FactorLoadings::from_vectors(upper, lower)?;
    Ok((design, spec, loadings))
}

/// Simulates the three transect models with `n_replicates` each and returns
/// Spearman's ρ and `λ^q` against lag for the three pair types.
pub fn fig1_data(n_replicates: usize, q_grid: &[f64], seed: u64, law: FactorLaw) -> Result<Vec<Fig1Row>> {
    let mut rows = Vec::new();
    for model in 0..FIG1_MODELS.len() {
        let (design, spec, loadings) = fig1_model(model)?;
        let n = design.n();
        let cfg = SimulationConfig::new(design, spec, loadings, n_replicates)
            .with_seed(seed.wrapping_add(model as u64))
            .with_law(law);
        let data = simulate(&cfg)?;
        for pt in PairType::ALL {
            for lag in 0..n {
                let pair = pt.columns(n, lag);
                let curve = empirical_dependence_curves(&data, &[pair], q_grid)?;
                rows.push(Fig1Row {
                    model: model + 1,
                    pair_type: pt,
                    lag,
                    stat: "spearman".into(),
                    q: None,
                    value: curve.first().map_or(f64::NAN, |c| c.spearman),
                });
                for c in &curve {
                    for (stat, value) in [("lambda_L", c.lambda_lower), ("lambda_U", c.lambda_upper)] {
                        rows.push(Fig1Row {
                            model: model + 1,
                            pair_type: pt,
                            lag,
                            stat: stat.into(),
                            q: Some(c.q),
                            value,
                        });
                    }
                }
            }
        }
    }
    Ok(rows)
}
