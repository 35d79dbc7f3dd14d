//! Bivariate copula log-density at one location, next to the Gaussian copula
//! with the same latent correlation.
use corlmc::covariance::{CovarianceSpec, SpatialDesign};
use corlmc::density::copula_logdensity;
use corlmc::margins::FactorLoadings;

fn main() -> corlmc::Result<()> {
    let design = SpatialDesign::transect(2, 1)?;
    let spec = CovarianceSpec::shared_exponential(2.2, &[0.8, 1.0])?;
    let skewed = FactorLoadings::from_vectors(&[1.1, 0.9, 0.9, 0.0], &[0.7, 1.1, 0.7, 0.0])?;
    let gaussian = FactorLoadings::gaussian(2);
    println!("{:>6} {:>6} {:>12} {:>12}", "u1", "u2", "factor", "gaussian");
    for (u1, u2) in [(0.01, 0.01), (0.1, 0.3), (0.5, 0.5), (0.7, 0.2), (0.99, 0.99)] {
        let a = copula_logdensity(&[u1], &[u2], &design, &spec, &skewed)?;
        let b = copula_logdensity(&[u1], &[u2], &design, &spec, &gaussian)?;
        println!("{u1:>6} {u2:>6} {a:>12.6} {b:>12.6}");
    }
    Ok(())
}
