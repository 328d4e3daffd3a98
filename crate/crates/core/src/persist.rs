//! CSV persistence for tensors and labeled matrices.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! write/read cycle reproduces every value bit for bit.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::tensor::DenseTensor3;

pub const TENSOR_HEADER: [&str; 4] = ["i", "j", "k", "value"];

pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Schema {
        source_name: what.into(),
        message: format!("invalid number {s:?}"),
    })
}

fn parse_usize(s: &str, what: &str) -> Result<usize> {
    s.trim().parse().map_err(|_| Error::Schema {
        source_name: what.into(),
        message: format!("invalid index {s:?}"),
    })
}

fn flush<W: Write>(wr: &mut csv::Writer<W>, what: &str) -> Result<()> {
    wr.flush().map_err(|e| Error::io(what, e))
}

/// Writes the non-zero entries of `t` as `i,j,k,value` rows in storage order.
pub fn write_tensor_csv<W: Write>(t: &DenseTensor3, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(TENSOR_HEADER)?;
    let (ni, nj, nk) = t.shape();
    for k in 0..nk {
        for j in 0..nj {
            for i in 0..ni {
                let v = t.get(i, j, k);
                if v != 0.0 {
                    wr.write_record([i.to_string(), j.to_string(), k.to_string(), fmt_f64(v)])?;
                }
            }
        }
    }
    flush(&mut wr, "<tensor>")
}

/// Reads a coordinate CSV written by [`write_tensor_csv`] into a tensor of
/// the given shape.
pub fn read_tensor_csv<R: Read>(r: R, shape: (usize, usize, usize)) -> Result<DenseTensor3> {
    let mut rd = csv::Reader::from_reader(r);
    crate::ingest::check_header(rd.headers()?, &TENSOR_HEADER, "tensor")?;
    let mut t = DenseTensor3::zeros(shape)?;
    for rec in rd.records() {
        let rec = rec?;
        if rec.len() != 4 {
            return Err(Error::Schema {
                source_name: "tensor".into(),
                message: format!("expected 4 fields, found {}", rec.len()),
            });
        }
        let (i, j, k) = (
            parse_usize(&rec[0], "tensor")?,
            parse_usize(&rec[1], "tensor")?,
            parse_usize(&rec[2], "tensor")?,
        );
        t.set(i, j, k, parse_f64(&rec[3], "tensor")?)?;
    }
    Ok(t)
}

/// Writes `m` with a leading label column: header `label_name,c1,c2,…`.
pub fn write_matrix_csv<W: Write, L: AsRef<str>>(
    m: &Matrix,
    label_name: &str,
    labels: &[L],
    column_names: &[String],
    w: W,
) -> Result<()> {
    if labels.len() != m.rows() || column_names.len() != m.cols() {
        return Err(Error::arg(format!(
            "{} labels and {} column names for a {}x{} matrix",
            labels.len(),
            column_names.len(),
            m.rows(),
            m.cols()
        )));
    }
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec![label_name.to_string()];
    header.extend(column_names.iter().cloned());
    wr.write_record(&header)?;
    for (i, l) in labels.iter().enumerate() {
        let mut row = vec![l.as_ref().to_string()];
        row.extend(m.row(i).iter().map(|v| fmt_f64(*v)));
        wr.write_record(&row)?;
    }
    flush(&mut wr, "<matrix>")
}

/// Reads a matrix written by [`write_matrix_csv`]; returns the row labels
/// and the numeric block.
pub fn read_matrix_csv<R: Read>(r: R) -> Result<(Vec<String>, Matrix)> {
    let mut rd = csv::Reader::from_reader(r);
    let cols = rd.headers()?.len().saturating_sub(1);
    let mut labels = Vec::new();
    let mut data = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        if rec.len() != cols + 1 {
            return Err(Error::Schema {
                source_name: "matrix".into(),
                message: format!("expected {} fields, found {}", cols + 1, rec.len()),
            });
        }
        labels.push(rec[0].to_string());
        for v in rec.iter().skip(1) {
            data.push(parse_f64(v, "matrix")?);
        }
    }
    let rows = labels.len();
    Ok((labels, Matrix::from_vec(rows, cols, data)?))
}

/// `comp_1 … comp_R` column names.
pub fn component_names(rank: usize) -> Vec<String> {
    (1..=rank).map(|r| format!("comp_{r}")).collect()
}
