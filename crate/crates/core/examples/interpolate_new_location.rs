//! Conditional copula prediction of variable 1 at an unobserved location,
//! mapped back to the data scale with an empirical marginal.
use corlmc::covariance::{CovarianceSpec, SpatialDesign};
use corlmc::data::uniform_scores;
use corlmc::interpolate::{back_transform, ConditionalCopula, MarginalModel, PredictionRequest};
use corlmc::margins::FactorLoadings;
use corlmc::simulate::{simulate, SimulationConfig};

fn main() -> corlmc::Result<()> {
    let design = SpatialDesign::unit_grid(2, 2)?;
    let spec = CovarianceSpec::shared_exponential(2.2, &[0.8, 1.0])?;
    let loadings = FactorLoadings::from_vectors(&[1.1, 0.9, 0.9, 0.0], &[0.7, 1.1, 0.7, 0.0])?;
    let data = simulate(&SimulationConfig::new(design.clone(), spec.clone(), loadings.clone(), 200).with_seed(3))?;
    let scores = uniform_scores(&data)?;
    let g = MarginalModel::empirical((0..200).flat_map(|k| data.row(k)[..4].to_vec()).collect())?;

    for k in 0..3 {
        let req = PredictionRequest::new(
            design.clone(),
            spec.clone(),
            loadings.clone(),
            scores.row(k).to_vec(),
            vec![0.5, 0.5],
            0,
        );
        let c = ConditionalCopula::new(&req)?;
        let (mean, median) = c.summaries()?;
        println!(
            "replicate {k}: observed u = {:.3?}, predicted mean {mean:.3}, median {median:.3} -> {:.3}",
            &scores.row(k)[..4],
            back_transform(median, &g)?
        );
    }
    Ok(())
}
