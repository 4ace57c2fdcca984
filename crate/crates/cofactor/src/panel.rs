//! Mixed-frequency panels and quarterly averaging.

use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{invalid, HarnessError, Result};
use crate::table::{check_names, parse_cell, RawCsv, Table};

pub const PERIOD_COLUMN: &str = "period";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    pub year: i32,
    /// 1 to 12.
    pub month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            invalid!("month {month} out of range");
        }
        Ok(Self { year, month })
    }

    pub fn next(self) -> Self {
        if self.month == 12 {
            Self { year: self.year + 1, month: 1 }
        } else {
            Self { year: self.year, month: self.month + 1 }
        }
    }

    pub fn is_quarter_start(self) -> bool {
        self.month % 3 == 1
    }

    pub fn is_quarter_end(self) -> bool {
        self.month % 3 == 0
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (y, m) = s.split_once('-').ok_or_else(|| format!("{s:?} is not YYYY-MM"))?;
        let year = y.parse().map_err(|_| format!("bad year in {s:?}"))?;
        let month = m.parse().map_err(|_| format!("bad month in {s:?}"))?;
        YearMonth::new(year, month).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Frequency {
    Monthly,
    Quarterly,
}

/// Monthly grid of series. Quarterly series carry a value on the last month
/// of each quarter and nothing elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariatePanel {
    pub periods: Vec<YearMonth>,
    pub names: Vec<String>,
    pub frequency: Vec<Frequency>,
    /// One vector per series, indexed like `periods`.
    pub columns: Vec<Vec<Option<f64>>>,
}

impl CovariatePanel {
    pub fn new(
        periods: Vec<YearMonth>,
        names: Vec<String>,
        frequency: Vec<Frequency>,
        columns: Vec<Vec<Option<f64>>>,
    ) -> Result<Self> {
        check_names(&names)?;
        if frequency.len() != names.len() || columns.len() != names.len() {
            invalid!("{} names, {} frequencies, {} columns", names.len(), frequency.len(), columns.len());
        }
        for w in periods.windows(2) {
            if w[1] != w[0].next() {
                return Err(HarnessError::Alignment(format!("{} follows {}; months must be consecutive", w[1], w[0])));
            }
        }
        for ((name, freq), col) in names.iter().zip(&frequency).zip(&columns) {
            if col.len() != periods.len() {
                invalid!("series {name:?} has {} values for {} periods", col.len(), periods.len());
            }
            if col.iter().flatten().any(|v| !v.is_finite()) {
                invalid!("series {name:?} has a non-finite value");
            }
            for (t, v) in periods.iter().zip(col) {
                match (freq, v) {
                    (Frequency::Monthly, None) => invalid!("monthly series {name:?} has no value at {t}"),
                    (Frequency::Quarterly, Some(_)) if !t.is_quarter_end() => {
                        return Err(HarnessError::Alignment(format!(
                            "quarterly series {name:?} has a value at {t}, which does not end a quarter"
                        )))
                    }
                    _ => {}
                }
            }
        }
        Ok(Self { periods, names, frequency, columns })
    }

    pub fn len(&self) -> usize {
        self.periods.len()
    }

    pub fn is_empty(&self) -> bool {
        self.periods.is_empty()
    }

    /// A series with any empty cell is read as quarterly.
    pub(crate) fn from_raw(raw: RawCsv) -> Result<Self> {
        let names: Vec<String> = raw.header[1..].to_vec();
        let mut periods = Vec::with_capacity(raw.rows.len());
        let mut columns = vec![Vec::with_capacity(raw.rows.len()); names.len()];
        for (line, cells) in &raw.rows {
            periods.push(cells[0].parse::<YearMonth>().map_err(|e| HarnessError::parse(*line, e))?);
            for (j, cell) in cells[1..].iter().enumerate() {
                let v = if cell.is_empty() { None } else { Some(parse_cell(cell, *line, &names[j])?) };
                columns[j].push(v);
            }
        }
        let frequency = columns
            .iter()
            .map(|c| if c.iter().any(Option::is_none) { Frequency::Quarterly } else { Frequency::Monthly })
            .collect();
        Self::new(periods, names, frequency, columns)
    }

    pub fn write_to(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(std::iter::once(PERIOD_COLUMN).chain(self.names.iter().map(String::as_str)))?;
        let mut buf = Vec::with_capacity(self.names.len() + 1);
        for (t, period) in self.periods.iter().enumerate() {
            buf.clear();
            buf.push(period.to_string());
            buf.extend(self.columns.iter().map(|c| c[t].map_or(String::new(), |v| v.to_string())));
            w.write_record(&buf)?;
        }
        w.flush().map_err(|e| HarnessError::io("<csv>", e))?;
        Ok(())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| HarnessError::io(path, e))?;
        self.write_to(std::io::BufWriter::new(f))
    }
}

fn complete_quarters(months: usize) -> usize {
    if months % 3 != 0 {
        log::warn!("dropping {} trailing month(s) of an incomplete quarter", months % 3);
    }
    months / 3
}

/// Averages each monthly series over calendar quarters and passes quarterly
/// series through. The panel must start on the first month of a quarter.
pub fn quarterly_average(panel: &CovariatePanel) -> Result<Table> {
    if let Some(first) = panel.periods.first() {
        if !first.is_quarter_start() {
            return Err(HarnessError::Alignment(format!("panel starts at {first}, not at the start of a quarter")));
        }
    }
    let quarters = complete_quarters(panel.len());
    let mut values = DMatrix::zeros(quarters, panel.names.len());
    for (j, (col, freq)) in panel.columns.iter().zip(&panel.frequency).enumerate() {
        for qi in 0..quarters {
            let months = &col[3 * qi..3 * qi + 3];
            values[(qi, j)] = match freq {
                Frequency::Monthly => months.iter().flatten().sum::<f64>() / 3.0,
                Frequency::Quarterly => months[2].ok_or_else(|| {
                    HarnessError::Validation(format!(
                        "quarterly series {:?} has no value for the quarter ending {}",
                        panel.names[j],
                        panel.periods[3 * qi + 2]
                    ))
                })?,
            };
        }
    }
    Table::new(panel.names.clone(), values)
}

/// Averages consecutive triples of rows of an all-monthly table whose first
/// row opens a quarter.
pub fn quarterly_average_table(monthly: &Table) -> Result<Table> {
    let quarters = complete_quarters(monthly.n());
    let m = monthly.values.ncols();
    let values = DMatrix::from_fn(quarters, m, |qi, j| (0..3).map(|k| monthly.values[(3 * qi + k, j)]).sum::<f64>() / 3.0);
    Table::new(monthly.names.clone(), values)
}
