//! CSV layouts for series data, residuals and forecast tables.
//!
//! * Series data: header `date,<series...>`, one row per period.
//! * Residuals: header `<series...>`, one row per period.
//! * Forecast tables: header `series,<horizon labels...>`, one row per series.
//! * Sample ensembles: long format `replicate,series,horizon,value`.
//!
//! Numbers are written with the shortest representation that parses back to
//! the same `f64`.

use std::collections::HashMap;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::probabilistic::{EnsembleSource, SampleEnsemble};

/// Series observed over time, stored `n x T`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesData {
    pub dates: Vec<String>,
    pub names: Vec<String>,
    pub values: Matrix,
}

impl SeriesData {
    pub fn new(dates: Vec<String>, names: Vec<String>, values: Matrix) -> Result<Self> {
        if values.shape() != (names.len(), dates.len()) {
            return Err(Error::Dimension(format!(
                "data is {}x{}, expected {} series by {} periods",
                values.nrows(),
                values.ncols(),
                names.len(),
                dates.len()
            )));
        }
        Ok(Self {
            dates,
            names,
            values,
        })
    }

    pub fn n(&self) -> usize {
        self.names.len()
    }

    pub fn t(&self) -> usize {
        self.dates.len()
    }
}

fn parse_value(line: usize, field: &str) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::parse(line, format!("bad number `{field}`")))?;
    if !v.is_finite() {
        return Err(Error::NonFinite(format!("value on line {line}")));
    }
    Ok(v)
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(r)
}

type Labelled = (Vec<String>, Vec<String>, Vec<Vec<f64>>);

/// Reads a table whose first column is a label; returns
/// `(header after the label column, labels, rows)`.
fn read_labelled<R: Read>(r: R) -> Result<Labelled> {
    let mut rdr = reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.len() < 2 {
        return Err(Error::parse(
            1,
            "expected a label column and at least one value column",
        ));
    }
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        if rec.len() != header.len() {
            return Err(Error::parse(
                line,
                format!("expected {} fields", header.len()),
            ));
        }
        labels.push(rec[0].to_string());
        rows.push(
            rec.iter()
                .skip(1)
                .map(|f| parse_value(line, f))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok((header[1..].to_vec(), labels, rows))
}

pub fn read_series_csv<R: Read>(r: R) -> Result<SeriesData> {
    let (names, dates, rows) = read_labelled(r)?;
    if dates.is_empty() {
        return Err(Error::Insufficient("data file has no rows".into()));
    }
    let values = Matrix::from_fn(names.len(), dates.len(), |i, t| rows[t][i]);
    SeriesData::new(dates, names, values)
}

pub fn write_series_csv<W: Write>(data: &SeriesData, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["date".to_string()];
    header.extend(data.names.iter().cloned());
    wtr.write_record(&header)?;
    for (t, d) in data.dates.iter().enumerate() {
        let mut rec = vec![d.clone()];
        rec.extend(data.values.column(t).iter().map(|v| v.to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Residuals as `(names, n x T matrix)`.
pub fn read_residuals_csv<R: Read>(r: R) -> Result<(Vec<String>, Matrix)> {
    let mut rdr = reader(r);
    let names: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != names.len() {
            return Err(Error::parse(
                k + 2,
                format!("expected {} fields", names.len()),
            ));
        }
        rows.push(
            rec.iter()
                .map(|f| parse_value(k + 2, f))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    let e = Matrix::from_fn(names.len(), rows.len(), |i, t| rows[t][i]);
    Ok((names, e))
}

pub fn write_residuals_csv<W: Write>(names: &[String], e: &Matrix, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(names)?;
    for t in 0..e.ncols() {
        wtr.write_record(e.column(t).iter().map(|v| v.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Series-by-horizon table.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastTable {
    pub names: Vec<String>,
    pub horizons: Vec<String>,
    pub values: Matrix,
}

pub fn read_forecast_csv<R: Read>(r: R) -> Result<ForecastTable> {
    let (horizons, names, rows) = read_labelled(r)?;
    if names.is_empty() {
        return Err(Error::Insufficient("forecast file has no rows".into()));
    }
    let values = Matrix::from_fn(names.len(), horizons.len(), |i, h| rows[i][h]);
    Ok(ForecastTable {
        names,
        horizons,
        values,
    })
}

pub fn write_forecast_csv<W: Write>(t: &ForecastTable, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["series".to_string()];
    header.extend(t.horizons.iter().cloned());
    wtr.write_record(&header)?;
    for (i, name) in t.names.iter().enumerate() {
        let mut rec = vec![name.clone()];
        rec.extend(t.values.row(i).iter().map(|v| v.to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes an ensemble whose rows are labelled by `names`; horizons are
/// numbered from 1.
pub fn write_ensemble_csv<W: Write>(ens: &SampleEnsemble, names: &[String], w: W) -> Result<()> {
    if names.len() != ens.n() {
        return Err(Error::Dimension(format!(
            "{} names for {} ensemble series",
            names.len(),
            ens.n()
        )));
    }
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["replicate", "series", "horizon", "value"])?;
    for (l, s) in ens.samples.iter().enumerate() {
        for (i, name) in names.iter().enumerate() {
            for h in 0..s.ncols() {
                wtr.write_record([
                    (l + 1).to_string(),
                    name.clone(),
                    (h + 1).to_string(),
                    s[(i, h)].to_string(),
                ])?;
            }
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a long-format ensemble. Series keep their order of first
/// appearance; every (replicate, series, horizon) cell must be present once.
pub fn read_ensemble_csv<R: Read>(
    r: R,
    source: EnsembleSource,
) -> Result<(Vec<String>, SampleEnsemble)> {
    let mut rdr = reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != ["replicate", "series", "horizon", "value"] {
        return Err(Error::parse(
            1,
            "expected header `replicate,series,horizon,value`",
        ));
    }
    let mut names: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut cells: Vec<(usize, usize, usize, f64)> = Vec::new();
    let (mut max_l, mut max_h) = (0, 0);
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        if rec.len() != 4 {
            return Err(Error::parse(line, "expected 4 fields"));
        }
        let int = |f: &str| -> Result<usize> {
            match f.parse::<usize>() {
                Ok(v) if v >= 1 => Ok(v),
                _ => Err(Error::parse(line, format!("bad index `{f}`"))),
            }
        };
        let l = int(&rec[0])?;
        let h = int(&rec[2])?;
        let i = match index.get(&rec[1]) {
            Some(&i) => i,
            None => {
                index.insert(rec[1].to_string(), names.len());
                names.push(rec[1].to_string());
                names.len() - 1
            }
        };
        cells.push((l - 1, i, h - 1, parse_value(line, &rec[3])?));
        max_l = max_l.max(l);
        max_h = max_h.max(h);
    }
    if cells.is_empty() {
        return Err(Error::Insufficient("ensemble file has no rows".into()));
    }
    let n = names.len();
    if cells.len() != max_l * n * max_h {
        return Err(Error::Invalid(format!(
            "ensemble file has {} cells, expected {max_l} x {n} x {max_h}",
            cells.len()
        )));
    }
    let mut samples = vec![Matrix::from_element(n, max_h, f64::NAN); max_l];
    for (l, i, h, v) in cells {
        if !samples[l][(i, h)].is_nan() {
            return Err(Error::Invalid(format!(
                "duplicate ensemble cell (replicate {}, series {}, horizon {})",
                l + 1,
                names[i],
                h + 1
            )));
        }
        samples[l][(i, h)] = v;
    }
    Ok((names, SampleEnsemble::new(samples, source, None)?))
}
