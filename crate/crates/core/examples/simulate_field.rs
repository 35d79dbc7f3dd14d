//! Draws replicates on a 3×3 grid and reports sample moments per variable.
use corlmc::covariance::{CovarianceSpec, SpatialDesign};
use corlmc::margins::FactorLoadings;
use corlmc::simulate::{simulate, FactorLaw, SimulationConfig};

fn main() -> corlmc::Result<()> {
    let design = SpatialDesign::unit_grid(2, 3)?;
    let spec = CovarianceSpec::shared_exponential(2.2, &[0.8, 1.0])?;
    let loadings = FactorLoadings::from_vectors(&[1.1, 0.9, 0.9, 0.8], &[0.7, 1.1, 0.7, 0.4])?;
    for law in [FactorLaw::Exponential, FactorLaw::Pareto { k: 3.0 }] {
        let cfg = SimulationConfig::new(design.clone(), spec.clone(), loadings.clone(), 20_000)
            .with_seed(7)
            .with_law(law);
        let data = simulate(&cfg)?;
        for (i, v) in loadings.variables.iter().enumerate() {
            let col = data.column(design.index(i, 0));
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let theory = match law {
                FactorLaw::Exponential => format!(" (theory {:.3})", v.mean()),
                _ => String::new(),
            };
            println!("{law}: variable {} mean {mean:.3}{theory}, variance {var:.3}", i + 1);
        }
    }
    Ok(())
}
