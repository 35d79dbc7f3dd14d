//! Pseudo log-likelihood of rank scores under the bivariate model.

use rayon::prelude::*;

use crate::covariance::{CovarianceSpec, SpatialDesign};
use crate::data::UniformScores;
use crate::density::JointDensity;
use crate::error::{Error, Result};
use crate::margins::{FactorLoadings, Marginal};
use crate::quadrature::DEFAULT_NODES;

/// Sum in a fixed binary-tree order, so the result does not depend on how the
/// terms were computed.
pub fn pairwise_sum(x: &[f64]) -> f64 {
    match x.len() {
        0 => 0.0,
        1 => x[0],
        2 => x[0] + x[1],
        n => {
            let (a, b) = x.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// Scores preprocessed for repeated likelihood evaluation. Marginal quantiles
/// are computed once per distinct score value and variable.
#[derive(Debug, Clone)]
pub struct PseudoLikelihood {
    scores: UniformScores,
    /// distinct sorted score values per variable
    levels: [Vec<f64>; 2],
    /// for every entry of the score matrix, its index into `levels`
    level_index: Vec<u32>,
    nodes: usize,
}

impl PseudoLikelihood {
    pub fn new(scores: UniformScores, nodes: usize) -> Result<Self> {
        let design = scores.design();
        if design.p() != 2 {
            return Err(Error::invalid(format!("the likelihood needs p = 2, got p = {}", design.p())));
        }
        let n = design.n();
        let m = design.dim();
        let values = scores.matrix().values();
        let mut levels: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        for (i, lv) in levels.iter_mut().enumerate() {
            let mut v: Vec<f64> = values
                .chunks(m)
                .flat_map(|row| row[i * n..(i + 1) * n].iter().copied())
                .collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            *lv = v;
        }
        let level_index = values
            .iter()
            .enumerate()
            .map(|(idx, v)| {
                let i = (idx % m) / n;
                levels[i].binary_search_by(|x| x.total_cmp(v)).expect("level present") as u32
            })
            .collect();
        Ok(PseudoLikelihood {
            scores,
            levels,
            level_index,
            nodes,
        })
    }

    pub fn scores(&self) -> &UniformScores {
        &self.scores
    }

    pub fn design(&self) -> &SpatialDesign {
        self.scores.design()
    }

    pub fn n_replicates(&self) -> usize {
        self.scores.n_replicates()
    }

    /// Copula log-density of every replicate.
    pub fn terms(&self, spec: &CovarianceSpec, loadings: &FactorLoadings) -> Result<Vec<f64>> {
        let joint = JointDensity::for_design(self.design(), spec, loadings, self.nodes)?;
        let mut z_tables: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        let mut lpdf_tables: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        for i in 0..2 {
            let marginal = Marginal::new(loadings.variables[i])?;
            let z: Vec<f64> = self.levels[i].iter().map(|&u| marginal.quantile(u)).collect::<Result<_>>()?;
            lpdf_tables[i] = z.iter().map(|&zz| marginal.log_pdf(zz)).collect();
            z_tables[i] = z;
        }
        let m = self.design().dim();
        let n = self.design().n();
        (0..self.n_replicates())
            .into_par_iter()
            .map(|k| {
                let idx = &self.level_index[k * m..(k + 1) * m];
                let mut z = Vec::with_capacity(m);
                let mut log_marg = 0.0;
                for (a, &l) in idx.iter().enumerate() {
                    let i = a / n;
                    z.push(z_tables[i][l as usize]);
                    log_marg += lpdf_tables[i][l as usize];
                }
                let v = joint.log_pdf(&z).map_err(|e| e.at_replicate(k))?;
                if !v.is_finite() {
                    return Err(Error::Quadrature {
                        abscissa: f64::NAN,
                        context: format!("replicate {k}: joint log-density is {v}"),
                    });
                }
                Ok(v - log_marg)
            })
            .collect()
    }

    pub fn evaluate(&self, spec: &CovarianceSpec, loadings: &FactorLoadings) -> Result<f64> {
        Ok(pairwise_sum(&self.terms(spec, loadings)?))
    }
}

/// Σ_k copula log-density of replicate `k`.
pub fn pseudo_loglik(scores: &UniformScores, design: &SpatialDesign, spec: &CovarianceSpec, loadings: &FactorLoadings) -> Result<f64> {
    if scores.design() != design {
        return Err(Error::invalid("scores were built for a different design"));
    }
    PseudoLikelihood::new(scores.clone(), DEFAULT_NODES)?.evaluate(spec, loadings)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_sum_matches_plain_sum_on_integers() {
        let x: Vec<f64> = (1..=1000).map(|v| v as f64).collect();
        assert_eq!(pairwise_sum(&x), 500_500.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }
}
