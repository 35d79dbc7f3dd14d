//! Simulate, rank-transform and refit on a small grid, then compare the fit
//! with a common-factor-only model by a likelihood-ratio test.
use corlmc::covariance::{CovarianceSpec, SpatialDesign};
use corlmc::data::uniform_scores;
use corlmc::fit::{fit, lr_test, FitConfig, LoadingMask};
use corlmc::margins::FactorLoadings;
use corlmc::simulate::{simulate, SimulationConfig};

fn main() -> corlmc::Result<()> {
    let design = SpatialDesign::unit_grid(2, 3)?;
    let spec = CovarianceSpec::shared_exponential(2.2, &[0.8, 1.0])?;
    let truth = FactorLoadings::from_vectors(&[1.1, 0.9, 0.9, 0.0], &[0.7, 1.1, 0.7, 0.0])?;
    let data = simulate(&SimulationConfig::new(design.clone(), spec, truth, 300).with_seed(11))?;
    let scores = uniform_scores(&data)?;

    let mut config = FitConfig::shared_exponential();
    config.nodes = 20;
    config.optimizer.max_evals = 1500;
    let full = fit(&scores, &design, &config)?;
    println!("loadings (upper) {:.3?}", full.loadings.upper_vector());
    println!("loadings (lower) {:.3?}", full.loadings.lower_vector());
    println!("covariance {:?}", full.covariance);
    println!("loglik {:.2} after {} evaluations", full.loglik, full.evaluations);

    let nested = fit(&scores, &design, &config.clone().with_mask(LoadingMask::common_only(2)))?;
    let lr = lr_test(&full, &nested, 2)?;
    println!(
        "LR vs common-only: {:.2} on {} df (critical {:.2}, p = {:.3e})",
        lr.statistic, lr.df, lr.critical_value, lr.p_value
    );
    Ok(())
}
