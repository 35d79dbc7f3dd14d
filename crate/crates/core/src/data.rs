//! Replicate matrices and their rank transform.

use crate::covariance::SpatialDesign;
use crate::error::{Error, Result};

/// `N` replicates of the `p · n` coordinates, stored row-major with columns in
/// the design's variable-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateMatrix {
    design: SpatialDesign,
    values: Vec<f64>,
    n_rep: usize,
    timestamps: Option<Vec<i64>>,
}

impl ReplicateMatrix {
    pub fn new(design: SpatialDesign, values: Vec<f64>) -> Result<Self> {
        let m = design.dim();
        if values.len() % m != 0 {
            return Err(Error::invalid(format!("{} values do not fill rows of width {m}", values.len())));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "missing or non-finite value at replicate {}, column {}",
                pos / m,
                pos % m
            )));
        }
        let n_rep = values.len() / m;
        Ok(ReplicateMatrix {
            design,
            values,
            n_rep,
            timestamps: None,
        })
    }

    pub fn from_rows(design: SpatialDesign, rows: &[Vec<f64>]) -> Result<Self> {
        let m = design.dim();
        if let Some(k) = rows.iter().position(|r| r.len() != m) {
            return Err(Error::invalid(format!("replicate {k} has {} values, expected {m}", rows[k].len())));
        }
        ReplicateMatrix::new(design, rows.concat())
    }

    pub fn with_timestamps(mut self, timestamps: Vec<i64>) -> Result<Self> {
        if timestamps.len() != self.n_rep {
            return Err(Error::invalid("need one timestamp per replicate"));
        }
        self.timestamps = Some(timestamps);
        Ok(self)
    }

    pub fn design(&self) -> &SpatialDesign {
        &self.design
    }

    pub fn n_replicates(&self) -> usize {
        self.n_rep
    }

    pub fn n_columns(&self) -> usize {
        self.design.dim()
    }

    pub fn timestamps(&self) -> Option<&[i64]> {
        self.timestamps.as_deref()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let m = self.n_columns();
        &self.values[k * m..(k + 1) * m]
    }

    pub fn get(&self, k: usize, variable: usize, location: usize) -> f64 {
        self.values[k * self.n_columns() + self.design.index(variable, location)]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        let m = self.n_columns();
        (0..self.n_rep).map(|k| self.values[k * m + c]).collect()
    }

    /// Variables in the given order (a permutation of `0..p`).
    pub fn reorder_variables(&self, order: &[usize]) -> Result<Self> {
        let p = self.design.p();
        let mut seen = vec![false; p];
        if order.len() != p || order.iter().any(|&i| i >= p || std::mem::replace(&mut seen[i], true)) {
            return Err(Error::invalid("variable order must be a permutation"));
        }
        let n = self.design.n();
        let m = self.n_columns();
        let mut values = Vec::with_capacity(self.values.len());
        for k in 0..self.n_rep {
            let row = &self.values[k * m..(k + 1) * m];
            for &i in order {
                values.extend_from_slice(&row[i * n..(i + 1) * n]);
            }
        }
        Ok(ReplicateMatrix {
            design: self.design.clone(),
            values,
            n_rep: self.n_rep,
            timestamps: self.timestamps.clone(),
        })
    }

    /// Applies `f` to every value, keeping the layout.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        ReplicateMatrix::new(self.design.clone(), self.values.iter().map(|&v| f(v)).collect())
    }
}

/// Rank-transformed data with the same layout as a [`ReplicateMatrix`].
#[derive(Debug, Clone, PartialEq)]
pub struct UniformScores(ReplicateMatrix);

impl UniformScores {
    /// Wraps values already in (0, 1).
    pub fn from_matrix(m: ReplicateMatrix) -> Result<Self> {
        if let Some(v) = m.values().iter().find(|&&v| !(v > 0.0 && v < 1.0)) {
            return Err(Error::invalid(format!("uniform scores must lie in (0, 1), found {v}")));
        }
        Ok(UniformScores(m))
    }

    pub fn matrix(&self) -> &ReplicateMatrix {
        &self.0
    }

    pub fn design(&self) -> &SpatialDesign {
        self.0.design()
    }

    pub fn n_replicates(&self) -> usize {
        self.0.n_replicates()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        self.0.row(k)
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        self.0.column(c)
    }

    pub fn reorder_variables(&self, order: &[usize]) -> Result<Self> {
        Ok(UniformScores(self.0.reorder_variables(order)?))
    }

    /// Only the first `k` replicates.
    pub fn head(&self, k: usize) -> Result<Self> {
        let k = k.min(self.n_replicates());
        let m = self.0.n_columns();
        Ok(UniformScores(ReplicateMatrix::new(
            self.design().clone(),
            self.0.values()[..k * m].to_vec(),
        )?))
    }
}

/// Average ranks (1-based) of `x`.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && x[idx[end]] == x[idx[start]] {
            end += 1;
        }
        let avg = 0.5 * ((start + 1) + end) as f64;
        for &i in &idx[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// Columnwise `(rank − 0.5) / N` with average ranks for ties.
pub fn uniform_scores(data: &ReplicateMatrix) -> Result<UniformScores> {
    let n = data.n_replicates();
    if n < 2 {
        return Err(Error::invalid("uniform scores need at least two replicates"));
    }
    let m = data.n_columns();
    let mut values = vec![0.0; n * m];
    for c in 0..m {
        let col = data.column(c);
        if col.iter().all(|&v| v == col[0]) {
            return Err(Error::invalid(format!("column {c} is constant; ranks are undefined")));
        }
        for (k, r) in average_ranks(&col).into_iter().enumerate() {
            values[k * m + c] = (r - 0.5) / n as f64;
        }
    }
    let mut out = ReplicateMatrix::new(data.design().clone(), values)?;
    if let Some(t) = data.timestamps() {
        out = out.with_timestamps(t.to_vec())?;
    }
    Ok(UniformScores(out))
}
