//! Numeric CSV tables with a header row.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use cofactor_core::population::Dataset;
use nalgebra::DMatrix;

use crate::error::{invalid, HarnessError, Result};
use crate::panel::{CovariatePanel, PERIOD_COLUMN};

/// Named columns of finite values, one observation per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub names: Vec<String>,
    pub values: DMatrix<f64>,
}

impl Table {
    pub fn new(names: Vec<String>, values: DMatrix<f64>) -> Result<Self> {
        check_names(&names)?;
        if names.len() != values.ncols() {
            invalid!("{} names for {} columns", names.len(), values.ncols());
        }
        if values.iter().any(|v| !v.is_finite()) {
            invalid!("table contains non-finite values");
        }
        Ok(Self { names, values })
    }

    /// Columns named `y0, y1, …` then `x0, x1, …`.
    pub fn from_dataset(data: &Dataset) -> Self {
        let names = default_names(data.p, data.q);
        Self { names, values: data.rows.clone() }
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    /// First `p` columns are responses, the rest covariates.
    pub fn to_dataset(&self, p: usize) -> Result<Dataset> {
        Ok(Dataset::new(self.values.clone(), p)?)
    }
}

pub fn default_names(p: usize, q: usize) -> Vec<String> {
    (0..p).map(|i| format!("y{i}")).chain((0..q).map(|j| format!("x{j}"))).collect()
}

pub(crate) fn check_names(names: &[String]) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for n in names {
        if n.trim().is_empty() {
            invalid!("empty column name");
        }
        if !seen.insert(n.as_str()) {
            invalid!("duplicate column name {n:?}");
        }
    }
    Ok(())
}

/// A parsed CSV file: a complete table, or a monthly panel when the first
/// column is `period`.
#[derive(Debug, Clone, PartialEq)]
pub enum Ingested {
    Table(Table),
    Panel(CovariatePanel),
}

pub(crate) struct RawCsv {
    pub header: Vec<String>,
    /// Cells with the 1-based line each row started on.
    pub rows: Vec<(u64, Vec<String>)>,
}

pub(crate) fn read_raw(reader: impl Read) -> Result<RawCsv> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(HarnessError::parse(1, "missing header"));
    }
    check_names(&header).map_err(|e| HarnessError::parse(1, e.to_string()))?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(HarnessError::parse(line, format!("expected {} fields, found {}", header.len(), rec.len())));
        }
        rows.push((line, rec.iter().map(|s| s.trim().to_string()).collect()));
    }
    Ok(RawCsv { header, rows })
}

pub(crate) fn parse_cell(cell: &str, line: u64, column: &str) -> Result<f64> {
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(HarnessError::parse(line, format!("column {column:?}: {cell:?} is not a finite number"))),
    }
}

fn table_from_raw(raw: RawCsv) -> Result<Table> {
    let (n, m) = (raw.rows.len(), raw.header.len());
    let mut values = DMatrix::zeros(n, m);
    for (i, (line, cells)) in raw.rows.iter().enumerate() {
        for (j, cell) in cells.iter().enumerate() {
            values[(i, j)] = parse_cell(cell, *line, &raw.header[j])?;
        }
    }
    Ok(Table { names: raw.header, values })
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| HarnessError::io(path, e))
}

/// Reads a table or a panel, depending on the first header cell.
pub fn ingest_csv(path: impl AsRef<Path>) -> Result<Ingested> {
    let raw = read_raw(open(path.as_ref())?)?;
    if raw.header[0] == PERIOD_COLUMN {
        Ok(Ingested::Panel(CovariatePanel::from_raw(raw)?))
    } else {
        Ok(Ingested::Table(table_from_raw(raw)?))
    }
}

/// Reads a complete numeric table; missing cells are errors.
pub fn read_table(path: impl AsRef<Path>) -> Result<Table> {
    table_from_raw(read_raw(open(path.as_ref())?)?)
}

pub fn read_table_from(reader: impl Read) -> Result<Table> {
    table_from_raw(read_raw(reader)?)
}

/// Values are written in shortest round-trip form, so reading the file back
/// reproduces every bit.
pub fn write_table_to(writer: impl Write, table: &Table) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(&table.names)?;
    let mut buf = Vec::with_capacity(table.names.len());
    for row in table.values.row_iter() {
        buf.clear();
        buf.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&buf)?;
    }
    w.flush().map_err(|e| HarnessError::io("<csv>", e))?;
    Ok(())
}

pub fn write_table(path: impl AsRef<Path>, table: &Table) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    write_table_to(std::io::BufWriter::new(f), table)
}
