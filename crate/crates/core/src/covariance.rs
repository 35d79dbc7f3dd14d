//! Spatial designs, coregionalization covariance specifications and the
//! correlation matrix of the latent Gaussian field.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal::LN_2PI;

/// Largest diagonal jitter tried before a matrix is declared not positive definite.
pub const MAX_JITTER: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub id: i64,
    pub coords: Vec<f64>,
}

impl Location {
    pub fn new(id: i64, coords: Vec<f64>) -> Self {
        Location { id, coords }
    }

    pub fn distance(&self, other: &Location) -> f64 {
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// `p` variables observed at the same ordered set of locations.
///
/// Columns of the latent field are ordered variable-major: variable `i` at
/// location `j` is coordinate `i * n + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialDesign {
    p: usize,
    locations: Vec<Location>,
}

impl SpatialDesign {
    pub fn new(p: usize, locations: Vec<Location>) -> Result<Self> {
        if p == 0 {
            return Err(Error::invalid("a design needs at least one variable"));
        }
        if locations.is_empty() {
            return Err(Error::invalid("a design needs at least one location"));
        }
        let dim = locations[0].coords.len();
        if dim == 0 {
            return Err(Error::invalid("locations need at least one coordinate"));
        }
        let mut ids: Vec<i64> = locations.iter().map(|l| l.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("location ids must be unique"));
        }
        for loc in &locations {
            if loc.coords.len() != dim {
                return Err(Error::invalid(format!("location {} has {} coordinates, expected {dim}", loc.id, loc.coords.len())));
            }
            if loc.coords.iter().any(|c| !c.is_finite()) {
                return Err(Error::invalid(format!("location {} has non-finite coordinates", loc.id)));
            }
        }
        Ok(SpatialDesign { p, locations })
    }

    /// A `side × side` regular grid on the unit square, ids `1..=side²`.
    pub fn unit_grid(p: usize, side: usize) -> Result<Self> {
        if side == 0 {
            return Err(Error::invalid("grid side must be positive"));
        }
        let step = if side > 1 { 1.0 / (side - 1) as f64 } else { 0.0 };
        let mut locations = Vec::with_capacity(side * side);
        for r in 0..side {
            for c in 0..side {
                locations.push(Location::new((r * side + c + 1) as i64, vec![c as f64 * step, r as f64 * step]));
            }
        }
        SpatialDesign::new(p, locations)
    }

    /// Integer locations `1..=n` on a line.
    pub fn transect(p: usize, n: usize) -> Result<Self> {
        let locations = (1..=n).map(|j| Location::new(j as i64, vec![j as f64])).collect();
        SpatialDesign::new(p, locations)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n(&self) -> usize {
        self.locations.len()
    }

    /// Total number of coordinates, `p * n`.
    pub fn dim(&self) -> usize {
        self.p * self.n()
    }

    pub fn locations(&self) -> &[Location] {
        &self.locations
    }

    pub fn index(&self, variable: usize, location: usize) -> usize {
        variable * self.n() + location
    }

    pub fn distance(&self, j1: usize, j2: usize) -> f64 {
        self.locations[j1].distance(&self.locations[j2])
    }

    pub fn distance_matrix(&self) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |a, b| self.distance(a, b))
    }

    pub fn location_position(&self, id: i64) -> Option<usize> {
        self.locations.iter().position(|l| l.id == id)
    }

    pub fn with_p(&self, p: usize) -> Result<Self> {
        SpatialDesign::new(p, self.locations.clone())
    }
}

/// Powered exponential correlation `exp(-theta * d^exponent)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoweredExponential {
    pub theta: f64,
    pub exponent: f64,
}

impl PoweredExponential {
    pub fn new(theta: f64, exponent: f64) -> Self {
        PoweredExponential { theta, exponent }
    }

    pub fn exponential(theta: f64) -> Self {
        PoweredExponential { theta, exponent: 1.0 }
    }

    pub fn correlation(&self, d: f64) -> f64 {
        if d == 0.0 {
            return 1.0;
        }
        (-self.theta * d.powf(self.exponent)).exp()
    }

    fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(Error::invalid(format!("theta must be positive, got {}", self.theta)));
        }
        if !(self.exponent > 0.0 && self.exponent <= 2.0) {
            return Err(Error::invalid(format!("powered-exponential exponent must be in (0, 2], got {}", self.exponent)));
        }
        Ok(())
    }
}

/// Linear model of coregionalization: `Z_i = Σ_k A[i][k] Y_k` with independent
/// unit-variance processes `Y_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSpec {
    /// p × r loading matrix; each row has unit Euclidean norm.
    pub loadings: Vec<Vec<f64>>,
    pub components: Vec<PoweredExponential>,
}

impl CovarianceSpec {
    pub fn new(loadings: Vec<Vec<f64>>, components: Vec<PoweredExponential>) -> Result<Self> {
        let spec = CovarianceSpec { loadings, components };
        spec.validate()?;
        Ok(spec)
    }

    /// `Z_i = rho_i Y_0 + sqrt(1 - rho_i²) Y_i`: one common component and one
    /// component per variable.
    pub fn coregionalization(rho: &[f64], common: PoweredExponential, specific: &[PoweredExponential]) -> Result<Self> {
        if rho.len() != specific.len() {
            return Err(Error::invalid("need one specific component per variable"));
        }
        let p = rho.len();
        let mut loadings = vec![vec![0.0; p + 1]; p];
        for (i, &r) in rho.iter().enumerate() {
            if !(r.abs() <= 1.0) {
                return Err(Error::invalid(format!("|rho_{}| must be at most 1, got {r}", i + 1)));
            }
            loadings[i][0] = r;
            loadings[i][i + 1] = (1.0 - r * r).max(0.0).sqrt();
        }
        let mut components = vec![common];
        components.extend_from_slice(specific);
        CovarianceSpec::new(loadings, components)
    }

    /// `Z_i = 2^{-1/2}(Y_0 + Y_i)` with exponential correlations: within-variable
    /// `0.5(e^{-θ_i h} + e^{-θ_0 h})`, cross-variable `0.5 e^{-θ_0 h}`.
    pub fn shared_exponential(theta0: f64, theta: &[f64]) -> Result<Self> {
        let rho = vec![std::f64::consts::FRAC_1_SQRT_2; theta.len()];
        let specific: Vec<_> = theta.iter().map(|&t| PoweredExponential::exponential(t)).collect();
        CovarianceSpec::coregionalization(&rho, PoweredExponential::exponential(theta0), &specific)
    }

    pub fn p(&self) -> usize {
        self.loadings.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.loadings.is_empty() {
            return Err(Error::invalid("covariance spec has no variables"));
        }
        let r = self.components.len();
        for (i, row) in self.loadings.iter().enumerate() {
            if row.len() != r {
                return Err(Error::invalid(format!("loading row {} has {} entries, expected {r}", i + 1, row.len())));
            }
            let norm: f64 = row.iter().map(|a| a * a).sum();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("loading row {} must have unit norm (got {norm})", i + 1)));
            }
        }
        for c in &self.components {
            c.validate()?;
        }
        Ok(())
    }

    /// Correlation between `Z_{i1}(s)` and `Z_{i2}(s')` at distance `d`.
    pub fn correlation(&self, i1: usize, i2: usize, d: f64) -> f64 {
        if i1 == i2 && d == 0.0 {
            return 1.0;
        }
        self.loadings[i1]
            .iter()
            .zip(&self.loadings[i2])
            .zip(&self.components)
            .map(|((a, b), c)| a * b * c.correlation(d))
            .sum()
    }
}

/// A symmetric positive-definite correlation matrix with its Cholesky factor
/// computed at construction.
#[derive(Debug, Clone)]
pub struct CorrelationMatrix {
    sigma: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
    log_det: f64,
}

impl CorrelationMatrix {
    pub fn new(sigma: DMatrix<f64>) -> Result<Self> {
        let m = sigma.nrows();
        if m == 0 || sigma.ncols() != m {
            return Err(Error::invalid("correlation matrix must be square and non-empty"));
        }
        for a in 0..m {
            for b in 0..a {
                if (sigma[(a, b)] - sigma[(b, a)]).abs() > 1e-12 {
                    return Err(Error::invalid(format!("matrix is not symmetric at ({a}, {b})")));
                }
            }
        }
        let mut jitter = 0.0;
        loop {
            let mut s = sigma.clone();
            for a in 0..m {
                s[(a, a)] += jitter;
            }
            if let Some(chol) = Cholesky::new(s) {
                let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
                if log_det.is_finite() {
                    return Ok(CorrelationMatrix {
                        sigma,
                        chol,
                        jitter,
                        log_det,
                    });
                }
            }
            jitter = if jitter == 0.0 { 1e-12 } else { jitter * 10.0 };
            if jitter > MAX_JITTER * (1.0 + 1e-9) {
                let min_eigenvalue = SymmetricEigen::new(sigma.clone()).eigenvalues.min();
                return Err(Error::NotPositiveDefinite { min_eigenvalue });
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// Lower-triangular factor of `Σ + jitter·I`.
    pub fn cholesky_l(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// `Σ⁻¹ v`
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(v)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    /// `xᵀ Σ⁻¹ x`
    pub fn quad_form(&self, x: &DVector<f64>) -> f64 {
        let mut y = x.clone();
        self.chol.l_dirty().solve_lower_triangular_mut(&mut y);
        y.norm_squared()
    }

    /// Multiplies by the Cholesky factor: `L z`.
    pub fn mul_l(&self, z: &DVector<f64>) -> DVector<f64> {
        self.chol.l_dirty().lower_triangle() * z
    }

    /// Appends one coordinate with covariances `cross` to the existing
    /// coordinates and variance `diag`.
    pub fn bordered(&self, cross: &[f64], diag: f64) -> Result<Self> {
        let m = self.dim();
        if cross.len() != m {
            return Err(Error::invalid("bordered extension needs one covariance per existing coordinate"));
        }
        let mut sigma = self.sigma.clone().resize(m + 1, m + 1, 0.0);
        for (a, &c) in cross.iter().enumerate() {
            sigma[(a, m)] = c;
            sigma[(m, a)] = c;
        }
        sigma[(m, m)] = diag;
        // rank-one bordering of the existing factor
        let mut l_row = DVector::from_column_slice(cross);
        self.chol.l_dirty().solve_lower_triangular_mut(&mut l_row);
        let schur = diag + self.jitter - l_row.norm_squared();
        if schur > 0.0 {
            let mut l = self.chol.l().resize(m + 1, m + 1, 0.0);
            for a in 0..m {
                l[(m, a)] = l_row[a];
            }
            l[(m, m)] = schur.sqrt();
            let log_det = self.log_det + schur.ln();
            let chol = Cholesky::pack_dirty(l);
            return Ok(CorrelationMatrix {
                sigma,
                chol,
                jitter: self.jitter,
                log_det,
            });
        }
        CorrelationMatrix::new(sigma)
    }
}

/// Correlation matrix of the latent field `Z` over all `p · n` coordinates.
pub fn build_sigma_z(design: &SpatialDesign, spec: &CovarianceSpec) -> Result<CorrelationMatrix> {
    spec.validate()?;
    if spec.p() != design.p() {
        return Err(Error::invalid(format!(
            "covariance spec has {} variables but the design has {}",
            spec.p(),
            design.p()
        )));
    }
    let n = design.n();
    let dist = design.distance_matrix();
    let m = design.dim();
    let sigma = DMatrix::from_fn(m, m, |a, b| {
        let (i1, j1) = (a / n, a % n);
        let (i2, j2) = (b / n, b % n);
        spec.correlation(i1, i2, dist[(j1, j2)])
    });
    CorrelationMatrix::new(sigma)
}

/// Multivariate normal log-density with mean zero.
pub fn mvn_logpdf(x: &[f64], sigma: &CorrelationMatrix) -> Result<f64> {
    if x.len() != sigma.dim() {
        return Err(Error::invalid(format!("point has dimension {}, matrix {}", x.len(), sigma.dim())));
    }
    let v = DVector::from_column_slice(x);
    let m = x.len() as f64;
    Ok(-0.5 * (m * LN_2PI + sigma.log_det() + sigma.quad_form(&v)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shared_exponential_entries() {
        let design = SpatialDesign::transect(2, 5).unwrap();
        let spec = CovarianceSpec::shared_exponential(0.75, &[0.10, 0.40]).unwrap();
        let s = build_sigma_z(&design, &spec).unwrap();
        let want = 0.5 * ((-0.10f64).exp() + (-0.75f64).exp());
        assert!((s.matrix()[(0, 1)] - want).abs() < 1e-15);
        assert!((s.matrix()[(0, 1)] - 0.688_602).abs() < 1e-6);
        assert!((s.matrix()[(0, 6)] - 0.5 * (-0.75f64).exp()).abs() < 1e-15);
        for a in 0..10 {
            assert_eq!(s.matrix()[(a, a)], 1.0);
        }
    }

    #[test]
    fn full_weight_cross_correlation_is_not_positive_definite() {
        // within 0.5(e^{-θ_i h} + e^{-θ_0 h}) together with cross e^{-θ_0 h}
        // makes Z_1(s) and Z_2(s) identical
        let design = SpatialDesign::transect(2, 5).unwrap();
        let (t0, t) = (0.75f64, [0.10f64, 0.40]);
        let n = 5;
        let sigma = DMatrix::from_fn(10, 10, |a, b| {
            let h = (a % n).abs_diff(b % n) as f64;
            if a / n == b / n {
                0.5 * ((-t[a / n] * h).exp() + (-t0 * h).exp())
            } else {
                (-t0 * h).exp()
            }
        });
        assert_eq!(design.dim(), 10);
        assert!(matches!(CorrelationMatrix::new(sigma), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn unit_rho_gives_common_correlation() {
        let design = SpatialDesign::unit_grid(2, 3).unwrap();
        let common = PoweredExponential::new(1.3, 1.5);
        let spec = CovarianceSpec::coregionalization(
            &[1.0, 1.0],
            common,
            &[PoweredExponential::exponential(0.2), PoweredExponential::exponential(5.0)],
        )
        .unwrap();
        let d = design.distance(0, 4);
        assert_eq!(spec.correlation(0, 1, d), common.correlation(d));
    }

    #[test]
    fn mvn_logpdf_small_cases() {
        let one = CorrelationMatrix::new(DMatrix::from_element(1, 1, 1.0)).unwrap();
        assert!((mvn_logpdf(&[0.0], &one).unwrap() + 0.5 * LN_2PI).abs() < 1e-15);
        let two = CorrelationMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0])).unwrap();
        let want = -(2.0 * std::f64::consts::PI * 0.75f64.sqrt()).ln();
        assert!((mvn_logpdf(&[0.0, 0.0], &two).unwrap() - want).abs() < 1e-12);
        assert!(mvn_logpdf(&[0.0], &two).is_err());
    }

    #[test]
    fn singular_matrix_reports_eigenvalue() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 1.5, 1.5, 1.0]);
        match CorrelationMatrix::new(s) {
            Err(Error::NotPositiveDefinite { min_eigenvalue }) => assert!((min_eigenvalue + 0.5).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bordered_matches_full_factorization() {
        let design = SpatialDesign::unit_grid(2, 2).unwrap();
        let spec = CovarianceSpec::shared_exponential(2.2, &[0.8, 1.0]).unwrap();
        let full = build_sigma_z(&design, &spec).unwrap();
        let m = full.dim();
        let sub = full.matrix().view((0, 0), (m - 1, m - 1)).into_owned();
        let sub = CorrelationMatrix::new(sub).unwrap();
        let cross: Vec<f64> = (0..m - 1).map(|a| full.matrix()[(a, m - 1)]).collect();
        let ext = sub.bordered(&cross, 1.0).unwrap();
        assert!((ext.log_det() - full.log_det()).abs() < 1e-12);
        let diff = ext.cholesky_l() - full.cholesky_l();
        assert!(diff.amax() < 1e-12);
    }
}
