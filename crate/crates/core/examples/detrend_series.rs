//! Station time series -> AR(2) + linear-trend residuals -> replicates.
use corlmc::covariance::SpatialDesign;
use corlmc::ingest::{ingest_detrend, DetrendOptions, Observation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> corlmc::Result<()> {
    let design = SpatialDesign::transect(2, 3)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut obs = Vec::new();
    for i in 0..2 {
        for loc in design.locations() {
            let (mut y1, mut y2) = (0.0, 0.0);
            for t in 0..200 {
                let y = 0.01 * t as f64 + 0.5 * y1 - 0.2 * y2 + rng.random::<f64>() - 0.5;
                obs.push(Observation { variable: i, location_id: loc.id, time: t, value: y });
                (y2, y1) = (y1, y);
            }
        }
    }
    let opts = DetrendOptions { lags: 2, trend_degree: 1, coordinates: false };
    let (replicates, fits) = ingest_detrend(&obs, &design, &[opts, opts])?;
    for (i, f) in fits.iter().enumerate() {
        println!("variable {}: {:?}", i + 1, f.columns.iter().zip(&f.coefficients).collect::<Vec<_>>());
    }
    println!("{} replicates from time {}", replicates.n_replicates(), replicates.timestamps().unwrap()[0]);
    Ok(())
}
