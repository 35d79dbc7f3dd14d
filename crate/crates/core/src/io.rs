//! File formats.
//!
//! * locations: CSV `id,x[,y]`
//! * replicates: long CSV `replicate,variable,location_id,value` with
//!   1-based variables
//! * raw observations: CSV `variable,location_id,time,value`
//! * model parameters: JSON [`ModelParams`]
//!
//! Floats go out in `{:.16e}` so files round-trip exactly.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::covariance::{Location, SpatialDesign};
use crate::data::ReplicateMatrix;
use crate::error::{Error, Result};
use crate::fit::{CovarianceModel, LoadingMask};
use crate::ingest::Observation;
use crate::margins::FactorLoadings;

/// Loadings, covariance and (optionally) which loadings are free.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub loadings: FactorLoadings,
    pub covariance: CovarianceModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<LoadingMask>,
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn read_locations<R: Read>(reader: R) -> Result<Vec<Location>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("id") || headers.len() < 2 {
        return Err(Error::Format(format!("locations file needs a header `id,x[,y]`, found `{}`", headers.iter().collect::<Vec<_>>().join(","))));
    }
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::Format(format!("locations row {}: bad {what}", line + 1));
        let id: i64 = rec.get(0).ok_or_else(|| bad("id"))?.parse().map_err(|_| bad("id"))?;
        let coords = (1..rec.len())
            .map(|c| rec[c].parse::<f64>().map_err(|_| bad("coordinate")))
            .collect::<Result<Vec<f64>>>()?;
        out.push(Location::new(id, coords));
    }
    Ok(out)
}

pub fn load_design(path: &Path, p: usize) -> Result<SpatialDesign> {
    SpatialDesign::new(p, read_locations(File::open(path)?)?)
}

pub fn write_locations<W: Write>(writer: W, locations: &[Location]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let dim = locations.first().map_or(0, |l| l.coords.len());
    let mut header = vec!["id".to_string()];
    header.extend(["x", "y", "z"].iter().take(dim).map(|s| s.to_string()));
    w.write_record(&header)?;
    for l in locations {
        let mut rec = vec![l.id.to_string()];
        rec.extend(l.coords.iter().map(|&c| fmt_f64(c)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct LongRow {
    replicate: usize,
    variable: usize,
    location_id: i64,
    value: f64,
}

/// Reads long-format replicates. Every (replicate, variable, location) cell
/// must appear exactly once; replicates are numbered from 0 without gaps.
pub fn read_replicates<R: Read>(reader: R, design: &SpatialDesign) -> Result<ReplicateMatrix> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut rows: Vec<LongRow> = Vec::new();
    for rec in rdr.deserialize() {
        rows.push(rec?);
    }
    let n_rep = rows.iter().map(|r| r.replicate + 1).max().unwrap_or(0);
    let m = design.dim();
    let mut values = vec![f64::NAN; n_rep * m];
    let mut seen = vec![false; n_rep * m];
    for r in &rows {
        if r.variable == 0 || r.variable > design.p() {
            return Err(Error::Format(format!("variable {} outside 1..={}", r.variable, design.p())));
        }
        let j = design
            .location_position(r.location_id)
            .ok_or_else(|| Error::Format(format!("unknown location id {}", r.location_id)))?;
        let idx = r.replicate * m + design.index(r.variable - 1, j);
        if std::mem::replace(&mut seen[idx], true) {
            return Err(Error::Format(format!(
                "duplicate entry for replicate {}, variable {}, location {}",
                r.replicate, r.variable, r.location_id
            )));
        }
        values[idx] = r.value;
    }
    if let Some(pos) = seen.iter().position(|s| !s) {
        let (k, c) = (pos / m, pos % m);
        return Err(Error::Format(format!(
            "missing entry for replicate {k}, variable {}, location {}",
            c / design.n() + 1,
            design.locations()[c % design.n()].id
        )));
    }
    ReplicateMatrix::new(design.clone(), values)
}

pub fn load_replicates(path: &Path, design: &SpatialDesign) -> Result<ReplicateMatrix> {
    read_replicates(File::open(path)?, design)
}

pub fn write_replicates<W: Write>(writer: W, data: &ReplicateMatrix) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["replicate", "variable", "location_id", "value"])?;
    let design = data.design();
    for k in 0..data.n_replicates() {
        for i in 0..design.p() {
            for (j, loc) in design.locations().iter().enumerate() {
                w.write_record([
                    k.to_string(),
                    (i + 1).to_string(),
                    loc.id.to_string(),
                    fmt_f64(data.get(k, i, j)),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_replicates(path: &Path, data: &ReplicateMatrix) -> Result<()> {
    write_replicates(BufWriter::new(File::create(path)?), data)
}

#[derive(Debug, Deserialize)]
struct RawRow {
    variable: usize,
    location_id: i64,
    time: i64,
    value: f64,
}

/// Raw observations `variable,location_id,time,value` (1-based variables).
pub fn read_observations<R: Read>(reader: R) -> Result<Vec<Observation>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    rdr.deserialize()
        .map(|rec| {
            let r: RawRow = rec?;
            if r.variable == 0 {
                return Err(Error::Format("variables are numbered from 1".into()));
            }
            Ok(Observation {
                variable: r.variable - 1,
                location_id: r.location_id,
                time: r.time,
                value: r.value,
            })
        })
        .collect()
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}
