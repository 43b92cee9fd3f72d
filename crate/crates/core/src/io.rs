//! File formats: headerless dense CSV matrices, `src,dst,weight` edge lists
//! and JSON documents.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::WeightMatrix;

/// Write `m` as comma-separated rows, 17 significant digits per value.
pub fn write_dense_csv_to<W: Write>(w: W, m: &DMatrix<f64>) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for i in 0..m.nrows() {
        out.write_record(m.row(i).iter().map(|v| format!("{v:.16e}")))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_dense_csv_from<R: Read>(r: R) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(r);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .map(|field| {
                field
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("row {}: {field:?}: {e}", i + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse(format!(
                    "row {} has {} columns, expected {}",
                    i + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn write_dense_csv(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    write_dense_csv_to(BufWriter::new(File::create(path)?), m)
}

pub fn read_dense_csv(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    read_dense_csv_from(BufReader::new(File::open(path)?))
}

#[derive(Debug, Serialize, Deserialize)]
struct EdgeRecord {
    src: usize,
    dst: usize,
    weight: f64,
}

/// One `src,dst,weight` row per edge with `src < dst`.
pub fn write_edge_list_to<W: Write>(w: W, g: &WeightMatrix) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for (src, dst, weight) in g.edges() {
        out.serialize(EdgeRecord { src, dst, weight })?;
    }
    // keep the header even without edges
    if g.edge_count() == 0 {
        out.write_record(["src", "dst", "weight"])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_edge_list_from<R: Read>(r: R, n: usize) -> Result<WeightMatrix> {
    let mut reader = csv::Reader::from_reader(r);
    let mut edges = Vec::new();
    for record in reader.deserialize() {
        let e: EdgeRecord = record?;
        edges.push((e.src, e.dst, e.weight));
    }
    WeightMatrix::from_edges(n, &edges)
}

pub fn write_edge_list(path: impl AsRef<Path>, g: &WeightMatrix) -> Result<()> {
    write_edge_list_to(BufWriter::new(File::create(path)?), g)
}

pub fn read_edge_list(path: impl AsRef<Path>, n: usize) -> Result<WeightMatrix> {
    read_edge_list_from(BufReader::new(File::open(path)?), n)
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

/// Solver progress snapshot; matrices live in separate CSV files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub iteration: usize,
    pub objective_history: Vec<f64>,
    pub taus: Vec<f64>,
    pub laplacian_csv_path: String,
    pub sparse_codes_csv_path: String,
}
