use std::fs::File;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

use super::{DenseMatrix, EmbeddingMatrix};

/// Reads a rectangular numeric CSV. With `has_header`, a first header cell
/// equal to `name` marks the first column as row names.
pub fn read_csv(path: impl AsRef<Path>, has_header: bool) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv(file, has_header)
}

pub fn parse_csv<R: Read>(reader: R, has_header: bool) -> Result<EmbeddingMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let named = if has_header {
        let header = rdr
            .headers()
            .map_err(|e| Error::ParseFailure(e.to_string()))?;
        header
            .get(0)
            .is_some_and(|h| h.eq_ignore_ascii_case("name"))
    } else {
        false
    };

    let mut width = None;
    let mut data = Vec::new();
    let mut names = Vec::new();
    let mut rows = 0;
    for record in rdr.records() {
        let record = record.map_err(|e| Error::ParseFailure(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(Error::RaggedRows {
                line,
                expected,
                found: record.len(),
            });
        }
        let mut fields = record.iter();
        if named {
            names.push(fields.next().unwrap_or_default().to_owned());
        }
        for (col, field) in fields.enumerate() {
            let v: f32 = field.parse().map_err(|_| {
                Error::ParseFailure(format!("line {line}: {field:?} is not a number"))
            })?;
            if !v.is_finite() {
                return Err(Error::NonFiniteEntry { row: rows, col });
            }
            data.push(v);
        }
        rows += 1;
    }
    let cols = width.unwrap_or(0).saturating_sub(named as usize);
    if rows == 0 || cols == 0 {
        return Err(Error::EmptyMatrix { rows, cols });
    }
    let matrix = DenseMatrix::new(rows, cols, data)?;
    EmbeddingMatrix::new(matrix, named.then_some(names), false)
}

/// Writes a CSV with a header row (`name,c0,c1,...` when names are present,
/// `c0,c1,...` otherwise). Floats use the shortest exact representation.
pub fn write_csv(matrix: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let wrap = |e: csv::Error| Error::ParseFailure(e.to_string());
    let names = matrix.names();
    let mut header: Vec<String> = Vec::with_capacity(matrix.dim() + 1);
    if names.is_some() {
        header.push("name".into());
    }
    header.extend((0..matrix.dim()).map(|j| format!("c{j}")));
    w.write_record(&header).map_err(wrap)?;
    for i in 0..matrix.rows() {
        let mut rec: Vec<String> = Vec::with_capacity(header.len());
        if let Some(names) = names {
            rec.push(names[i].clone());
        }
        rec.extend(matrix.row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
