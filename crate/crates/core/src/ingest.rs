//! Turning raw station time series into replicates: pooled OLS with
//! autoregressive lags, a polynomial time trend and station coordinates.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::covariance::SpatialDesign;
use crate::data::ReplicateMatrix;
use crate::error::{Error, Result};

/// One raw measurement. `variable` is 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub variable: usize,
    pub location_id: i64,
    pub time: i64,
    pub value: f64,
}

/// Regressors of one variable's marginal model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct DetrendOptions {
    /// Autoregressive lags of the same station's series.
    pub lags: usize,
    /// Degree of the polynomial in time (0: intercept only).
    pub trend_degree: usize,
    /// Include the station coordinates.
    pub coordinates: bool,
}

/// Fitted marginal regression of one variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub columns: Vec<String>,
    pub coefficients: Vec<f64>,
    pub residual_sd: f64,
}

/// Regresses each variable on its own lags, a time polynomial and
/// (optionally) coordinates, pooling stations, and returns residuals as
/// replicates indexed by time. The first `max lags` times are dropped.
pub fn ingest_detrend(
    observations: &[Observation],
    design: &SpatialDesign,
    options: &[DetrendOptions],
) -> Result<(ReplicateMatrix, Vec<RegressionFit>)> {
    let p = design.p();
    let n = design.n();
    if options.len() != p {
        return Err(Error::invalid(format!("need detrend options for each of the {p} variables")));
    }
    // panel[variable][location] : time -> value
    let mut panel: Vec<Vec<BTreeMap<i64, f64>>> = vec![vec![BTreeMap::new(); n]; p];
    for o in observations {
        if o.variable >= p {
            return Err(Error::invalid(format!("observation for variable {} but p = {p}", o.variable + 1)));
        }
        let j = design
            .location_position(o.location_id)
            .ok_or_else(|| Error::invalid(format!("unknown location id {}", o.location_id)))?;
        if !o.value.is_finite() {
            return Err(Error::invalid(format!(
                "missing value for variable {}, location {}, time {}",
                o.variable + 1,
                o.location_id,
                o.time
            )));
        }
        if panel[o.variable][j].insert(o.time, o.value).is_some() {
            return Err(Error::invalid(format!(
                "duplicate observation for variable {}, location {}, time {}",
                o.variable + 1,
                o.location_id,
                o.time
            )));
        }
    }
    let times: Vec<i64> = panel[0][0].keys().copied().collect();
    for (i, per_var) in panel.iter().enumerate() {
        for (j, series) in per_var.iter().enumerate() {
            if !series.keys().copied().eq(times.iter().copied()) {
                return Err(Error::invalid(format!(
                    "variable {} at location {} is not observed at the common set of times",
                    i + 1,
                    design.locations()[j].id
                )));
            }
        }
    }
    let max_lag = options.iter().map(|o| o.lags).max().unwrap_or(0);
    let t_count = times.len();
    if t_count <= max_lag + 1 {
        return Err(Error::invalid("too few time points for the requested lags"));
    }
    let kept = t_count - max_lag;
    let t_mean = times.iter().map(|&t| t as f64).sum::<f64>() / t_count as f64;
    let t_sd = (times.iter().map(|&t| (t as f64 - t_mean).powi(2)).sum::<f64>() / t_count as f64)
        .sqrt()
        .max(1.0);

    let mut values = vec![0.0; kept * design.dim()];
    let mut fits = Vec::with_capacity(p);
    for (i, opt) in options.iter().enumerate() {
        let series: Vec<Vec<f64>> = panel[i].iter().map(|s| s.values().copied().collect()).collect();
        let mut columns = vec!["intercept".to_string()];
        columns.extend((1..=opt.trend_degree).map(|d| if d == 1 { "t".to_string() } else { format!("t^{d}") }));
        columns.extend((1..=opt.lags).map(|m| format!("lag{m}")));
        let dim = design.locations()[0].coords.len();
        if opt.coordinates {
            columns.extend(["x", "y", "z"].iter().take(dim).map(|s| s.to_string()));
        }
        let rows = kept * n;
        let k = columns.len();
        let mut x = DMatrix::zeros(rows, k);
        let mut y = DVector::zeros(rows);
        for j in 0..n {
            for r in 0..kept {
                let t = r + max_lag;
                let row = j * kept + r;
                let ts = (times[t] as f64 - t_mean) / t_sd;
                let mut c = 0;
                for d in 0..=opt.trend_degree {
                    x[(row, c)] = ts.powi(d as i32);
                    c += 1;
                }
                for m in 1..=opt.lags {
                    x[(row, c)] = series[j][t - m];
                    c += 1;
                }
                if opt.coordinates {
                    for &v in &design.locations()[j].coords {
                        x[(row, c)] = v;
                        c += 1;
                    }
                }
                y[row] = series[j][t];
            }
        }
        let collinear = collinear_columns(&x, &columns);
        if !collinear.is_empty() {
            return Err(Error::RankDeficient(collinear));
        }
        let beta = x
            .clone()
            .svd(true, true)
            .solve(&y, 1e-14)
            .map_err(|e| Error::invalid(format!("least squares failed: {e}")))?;
        let resid = &y - &x * &beta;
        for j in 0..n {
            for r in 0..kept {
                values[r * design.dim() + design.index(i, j)] = resid[j * kept + r];
            }
        }
        let dof = (rows as f64 - k as f64).max(1.0);
        fits.push(RegressionFit {
            columns,
            coefficients: beta.iter().copied().collect(),
            residual_sd: (resid.norm_squared() / dof).sqrt(),
        });
    }
    let m = ReplicateMatrix::new(design.clone(), values)?.with_timestamps(times[max_lag..].to_vec())?;
    Ok((m, fits))
}

/// Names of columns lying (numerically) in the span of the columns before them.
fn collinear_columns(x: &DMatrix<f64>, names: &[String]) -> Vec<String> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut out = Vec::new();
    for (c, name) in names.iter().enumerate() {
        let col = x.column(c).into_owned();
        let norm = col.norm();
        let mut r = col.clone();
        for _ in 0..2 {
            for b in &basis {
                let proj = b.dot(&r);
                r -= b * proj;
            }
        }
        let rn = r.norm();
        if norm == 0.0 || rn <= 1e-9 * norm {
            out.push(name.clone());
        } else {
            basis.push(r / rn);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design(n: usize) -> SpatialDesign {
        SpatialDesign::transect(1, n).unwrap()
    }

    fn obs(series: &[Vec<f64>]) -> Vec<Observation> {
        series
            .iter()
            .enumerate()
            .flat_map(|(j, s)| {
                s.iter().enumerate().map(move |(t, &v)| Observation {
                    variable: 0,
                    location_id: j as i64 + 1,
                    time: t as i64,
                    value: v,
                })
            })
            .collect()
    }

    #[test]
    fn intercept_only_removes_the_mean() {
        let d = design(2);
        let o = obs(&[vec![1.0, 2.0, 6.0], vec![3.0, 4.0, 2.0]]);
        let (m, fits) = ingest_detrend(&o, &d, &[DetrendOptions::default()]).unwrap();
        let mean = 18.0 / 6.0;
        assert_eq!(m.n_replicates(), 3);
        assert!((m.get(2, 0, 0) - (6.0 - mean)).abs() < 1e-12);
        assert!((m.get(0, 0, 1) - (3.0 - mean)).abs() < 1e-12);
        assert!((fits[0].coefficients[0] - mean).abs() < 1e-12);
    }

    #[test]
    fn exact_ar2_gives_zero_residuals() {
        let mut s1 = vec![1.0, 0.5];
        let mut s2 = vec![-0.3, 2.0];
        for t in 2..40 {
            s1.push(0.2 + 0.6 * s1[t - 1] - 0.3 * s1[t - 2]);
            s2.push(0.2 + 0.6 * s2[t - 1] - 0.3 * s2[t - 2]);
        }
        let d = design(2);
        let opt = DetrendOptions {
            lags: 2,
            ..Default::default()
        };
        let (m, fits) = ingest_detrend(&obs(&[s1, s2]), &d, &[opt]).unwrap();
        assert_eq!(m.n_replicates(), 38);
        assert!(m.values().iter().all(|v| v.abs() < 1e-10));
        assert!((fits[0].coefficients[1] - 0.6).abs() < 1e-8);
        assert_eq!(m.timestamps().unwrap()[0], 2);
    }

    #[test]
    fn constant_coordinates_are_collinear_with_the_intercept() {
        let d = SpatialDesign::new(
            1,
            vec![
                crate::covariance::Location::new(1, vec![0.0, 5.0]),
                crate::covariance::Location::new(2, vec![1.0, 5.0]),
            ],
        )
        .unwrap();
        let o = obs(&[vec![1.0, 2.0, 0.0, 1.0], vec![3.0, 4.0, 2.0, 2.5]]);
        let opt = DetrendOptions {
            coordinates: true,
            ..Default::default()
        };
        match ingest_detrend(&o, &d, &[opt]) {
            Err(Error::RankDeficient(cols)) => assert_eq!(cols, vec!["y".to_string()]),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn incomplete_panels_are_rejected() {
        let d = design(2);
        let mut o = obs(&[vec![1.0, 2.0, 6.0], vec![3.0, 4.0, 2.0]]);
        o.pop();
        assert!(ingest_detrend(&o, &d, &[DetrendOptions::default()]).is_err());
    }
}
