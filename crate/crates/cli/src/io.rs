//! CSV and JSON files.
//!
//! Every written file starts with `#` lines naming the format, its version,
//! the seed and a one-line config echo. Readers skip `#` lines and accept an
//! optional header row, detected as a first record with a non-numeric cell.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use lldpm_core::DataMatrix;
use serde::Serialize;

use crate::error::{usage, CliError, CliResult};

/// Version of every file layout written here.
pub const FORMAT_VERSION: u32 = 1;

/// Provenance written at the top of each output file.
#[derive(Clone, Debug)]
pub struct Header {
    pub seed: u64,
    pub config: String,
}

impl Header {
    pub fn new(seed: u64, config: impl Into<String>) -> Self {
        Self {
            seed,
            config: config.into(),
        }
    }

    fn lines(&self, format: &str) -> String {
        format!(
            "# lldpm {} format={format} version={FORMAT_VERSION}\n# seed={}\n# config={}\n",
            env!("CARGO_PKG_VERSION"),
            self.seed,
            self.config
        )
    }
}

/// Write a CSV table with the provenance header.
pub fn write_csv<I, R>(path: &Path, header: &Header, format: &str, columns: &[&str], rows: I) -> CliResult<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let io = |e| CliError::io(path, e);
    let file = File::create(path).map_err(io)?;
    let mut out = BufWriter::new(file);
    out.write_all(header.lines(format).as_bytes()).map_err(io)?;
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| CliError::Runtime(format!("{}: {e}", path.display()));
    w.write_record(columns).map_err(csv_err)?;
    for r in rows {
        w.write_record(r.into_iter().collect::<Vec<_>>()).map_err(csv_err)?;
    }
    w.flush().map_err(io)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

/// Non-comment records with their 1-based line numbers.
pub(crate) fn records(path: &Path) -> CliResult<Vec<(u64, Vec<String>)>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| usage(format!("{}: {e}", path.display())))?;
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        let line = rec.position().map_or(0, |p| p.line());
        out.push((line, rec.iter().map(str::to_owned).collect()));
    }
    Ok(out)
}

pub(crate) fn is_header(cells: &[String]) -> bool {
    cells.iter().any(|c| c.parse::<f64>().is_err())
}

pub(crate) fn parse_cell(path: &Path, line: u64, col: usize, cell: &str) -> CliResult<f64> {
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(usage(format!(
            "{}: line {line}, column {}: non-numeric cell {cell:?}",
            path.display(),
            col + 1
        ))),
    }
}

/// Rows of numbers, allowing rows of different lengths.
pub fn read_rows(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    let mut recs = records(path)?;
    if recs.first().is_some_and(|(_, c)| is_header(c)) {
        recs.remove(0);
    }
    if recs.is_empty() {
        return Err(usage(format!("{}: no data rows", path.display())));
    }
    recs.iter()
        .map(|(line, cells)| {
            cells
                .iter()
                .enumerate()
                .map(|(j, c)| parse_cell(path, *line, j, c))
                .collect()
        })
        .collect()
}

/// Wide matrix: one row per unit, one column per time.
pub fn read_wide(path: &Path) -> CliResult<DataMatrix> {
    let rows = read_rows(path)?;
    let width = rows[0].len();
    if let Some(i) = rows.iter().position(|r| r.len() != width) {
        return Err(usage(format!(
            "{}: data row {} has {} columns, expected {width}",
            path.display(),
            i + 1,
            rows[i].len()
        )));
    }
    Ok(DataMatrix::from_rows(&rows)?)
}

/// `(unit, time, value)` triples. Units and times are integer labels and are
/// ordered numerically; every pair must appear exactly once.
pub fn read_long(path: &Path) -> CliResult<DataMatrix> {
    let mut recs = records(path)?;
    if recs.first().is_some_and(|(_, c)| is_header(c)) {
        recs.remove(0);
    }
    if recs.is_empty() {
        return Err(usage(format!("{}: no data rows", path.display())));
    }
    let mut cells: BTreeMap<(i64, i64), f64> = BTreeMap::new();
    for (line, rec) in &recs {
        if rec.len() != 3 {
            return Err(usage(format!(
                "{}: line {line}: expected 3 columns (unit, time, value), found {}",
                path.display(),
                rec.len()
            )));
        }
        let label = |j: usize| {
            rec[j].parse::<i64>().map_err(|_| {
                usage(format!(
                    "{}: line {line}, column {}: expected an integer label, found {:?}",
                    path.display(),
                    j + 1,
                    rec[j]
                ))
            })
        };
        let key = (label(0)?, label(1)?);
        let v = parse_cell(path, *line, 2, &rec[2])?;
        if cells.insert(key, v).is_some() {
            return Err(usage(format!(
                "{}: line {line}: duplicate entry for unit {}, time {}",
                path.display(),
                key.0,
                key.1
            )));
        }
    }
    let mut units: Vec<i64> = cells.keys().map(|k| k.0).collect();
    units.dedup();
    let mut times: Vec<i64> = cells.keys().map(|k| k.1).collect();
    times.sort_unstable();
    times.dedup();
    if cells.len() != units.len() * times.len() {
        return Err(usage(format!(
            "{}: {} entries do not cover {} units x {} times",
            path.display(),
            cells.len(),
            units.len(),
            times.len()
        )));
    }
    let rows: Vec<Vec<f64>> = units
        .iter()
        .map(|&u| times.iter().map(|&t| cells[&(u, t)]).collect())
        .collect();
    Ok(DataMatrix::from_rows(&rows)?)
}

pub fn read_data(path: &Path, long: bool) -> CliResult<DataMatrix> {
    if long {
        read_long(path)
    } else {
        read_wide(path)
    }
}

/// Write a matrix in the wide layout with a `t1..tT` header row.
pub fn write_wide(path: &Path, header: &Header, format: &str, data: &DataMatrix) -> CliResult<()> {
    let names: Vec<String> = (1..=data.times()).map(|t| format!("t{t}")).collect();
    let cols: Vec<&str> = names.iter().map(String::as_str).collect();
    let rows = (0..data.n()).map(|i| data.row(i).into_iter().map(|v| v.to_string()));
    write_csv(path, header, format, &cols, rows)
}
