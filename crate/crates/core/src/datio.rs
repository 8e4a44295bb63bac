//! Long-format CSV datasets, standardization and train/validation splits.
//!
//! ```text
//! sample_id,time_index,f0,f1
//! 0,0,0.5,1.25
//! 0,1,0.75,-2
//! ...
//! ```
//!
//! Written sample files may carry a trailing `provenance` column, which the
//! loader accepts and ignores.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::series::TimeSeries;
use crate::stochastic::Rng;

const SPLIT_STREAM: u64 = 0x6473;

#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub series: Vec<TimeSeries>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, series: Vec<TimeSeries>) -> Result<Self> {
        if let Some(first) = series.first() {
            let shape = first.shape();
            if let Some(i) = series.iter().position(|s| s.shape() != shape) {
                return Err(Error::Shape(format!(
                    "sample {i} has shape {:?}, expected {shape:?}",
                    series[i].shape()
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            series,
        })
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn shape(&self) -> Option<(usize, usize)> {
        self.series.first().map(|s| s.shape())
    }
}

/// Sample identifiers sort numerically when they are all integers.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum SampleKey {
    Int(i64),
    Text(String),
}

fn parse_number(cell: &str, row: usize, column: &str) -> Result<f64> {
    let trimmed = cell.trim();
    if trimmed.is_empty() {
        return Err(Error::Data(format!("row {row}, column '{column}': missing value")));
    }
    let v: f64 = trimmed
        .parse()
        .map_err(|_| Error::Data(format!("row {row}, column '{column}': cannot parse '{trimmed}' as a number")))?;
    if !v.is_finite() {
        return Err(Error::Data(format!("row {row}, column '{column}': non-finite value '{trimmed}'")));
    }
    Ok(v)
}

/// Parses a long-format CSV document.
pub fn parse_csv(text: &str, name: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r?,
        None => return Err(Error::Data("missing header: file is empty".into())),
    };
    let cols: Vec<String> = header.iter().map(str::to_string).collect();
    let has_provenance = cols.last().is_some_and(|c| c == "provenance");
    let n_features = cols.len().saturating_sub(2 + has_provenance as usize);
    let header_ok = cols.len() >= 3
        && cols[0] == "sample_id"
        && cols[1] == "time_index"
        && n_features >= 1
        && (0..n_features).all(|j| cols[2 + j] == format!("f{j}"));
    if !header_ok {
        return Err(Error::Data(format!(
            "missing header: expected 'sample_id,time_index,f0,...', found '{}'",
            cols.join(",")
        )));
    }

    let mut samples: BTreeMap<SampleKey, (String, BTreeMap<usize, Vec<f64>>)> = BTreeMap::new();
    for (i, record) in records.enumerate() {
        let row = i + 2;
        let record = record?;
        if record.len() != cols.len() {
            return Err(Error::Data(format!(
                "row {row}: expected {} fields, found {}",
                cols.len(),
                record.len()
            )));
        }
        let id = record[0].to_string();
        if id.is_empty() {
            return Err(Error::Data(format!("row {row}, column 'sample_id': missing value")));
        }
        let time: usize = record[1]
            .parse()
            .map_err(|_| Error::Data(format!("row {row}, column 'time_index': cannot parse '{}' as an index", &record[1])))?;
        let values = (0..n_features)
            .map(|j| parse_number(&record[2 + j], row, &cols[2 + j]))
            .collect::<Result<Vec<f64>>>()?;
        let key = id.parse::<i64>().map(SampleKey::Int).unwrap_or_else(|_| SampleKey::Text(id.clone()));
        let entry = samples.entry(key).or_insert_with(|| (id.clone(), BTreeMap::new()));
        if entry.1.insert(time, values).is_some() {
            return Err(Error::Data(format!(
                "duplicate entry for sample_id '{id}', time_index {time} (row {row})"
            )));
        }
    }
    if samples.is_empty() {
        return Err(Error::Data("no samples after the header".into()));
    }
    let n = samples
        .values()
        .flat_map(|(_, rows)| rows.keys().next_back())
        .max()
        .map(|&t| t + 1)
        .expect("nonempty");
    let mut ragged = Vec::new();
    for (id, rows) in samples.values() {
        if rows.len() != n {
            let present: BTreeSet<usize> = rows.keys().copied().collect();
            let missing: Vec<usize> = (0..n).filter(|t| !present.contains(t)).collect();
            ragged.push(format!("'{id}' (missing time indices {missing:?})"));
        }
    }
    if !ragged.is_empty() {
        return Err(Error::Data(format!(
            "ragged samples, expected time indices 0..{}: {}",
            n - 1,
            ragged.join(", ")
        )));
    }
    let series = samples
        .into_values()
        .map(|(_, rows)| {
            let flat: Vec<f64> = rows.into_values().flatten().collect();
            TimeSeries::from_flat(n, n_features, flat)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(name, series)
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(e).context(format!("reading {}", path.display())))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_csv(&text, &name).map_err(|e| e.context(path.display().to_string()))
}

/// Serializes series with ids `0..`, optionally tagging every row with a
/// provenance label. Values use the shortest exact decimal form.
pub fn write_csv<W: std::io::Write>(w: W, series: &[TimeSeries], provenance: Option<&str>) -> Result<()> {
    let m = series.first().map_or(1, |s| s.n_features());
    let mut writer = csv::Writer::from_writer(w);
    let mut header = vec!["sample_id".to_string(), "time_index".to_string()];
    header.extend((0..m).map(|j| format!("f{j}")));
    if provenance.is_some() {
        header.push("provenance".into());
    }
    writer.write_record(&header)?;
    for (id, s) in series.iter().enumerate() {
        if s.n_features() != m {
            return Err(Error::Shape(format!("sample {id} has {} features, expected {m}", s.n_features())));
        }
        for (t, row) in s.values().outer_iter().enumerate() {
            let mut fields = vec![id.to_string(), t.to_string()];
            fields.extend(row.iter().map(|v| v.to_string()));
            if let Some(p) = provenance {
                fields.push(p.to_string());
            }
            writer.write_record(&fields)?;
        }
    }
    writer.flush()?;
    Ok(())
}

pub fn save_csv(path: impl AsRef<Path>, series: &[TimeSeries], provenance: Option<&str>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path)
        .map_err(|e| Error::Io(e).context(format!("writing {}", path.display())))?;
    write_csv(std::io::BufWriter::new(file), series, provenance)
}

/// Per-feature affine statistics, pooled over samples and time steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardization {
    pub fn fit(series: &[TimeSeries]) -> Result<Self> {
        let Some(first) = series.first() else {
            return Err(Error::Data("cannot standardize an empty dataset".into()));
        };
        let m = first.n_features();
        let count = (series.len() * first.len()) as f64;
        let mut mean = vec![0.0; m];
        for s in series {
            for row in s.values().outer_iter() {
                for (acc, v) in mean.iter_mut().zip(row) {
                    *acc += v;
                }
            }
        }
        mean.iter_mut().for_each(|v| *v /= count);
        let mut var = vec![0.0; m];
        for s in series {
            for row in s.values().outer_iter() {
                for j in 0..m {
                    var[j] += (row[j] - mean[j]).powi(2);
                }
            }
        }
        let std: Vec<f64> = var.iter().map(|v| (v / count).sqrt()).collect();
        if let Some(j) = (0..m).find(|&j| !(std[j] > 1e-12 * (1.0 + mean[j].abs()))) {
            return Err(Error::Data(format!("feature f{j} has zero variance")));
        }
        Ok(Self { mean, std })
    }

    pub fn apply(&self, series: &[TimeSeries]) -> Result<Vec<TimeSeries>> {
        self.map(series, |v, mu, sd| (v - mu) / sd)
    }

    pub fn inverse(&self, series: &[TimeSeries]) -> Result<Vec<TimeSeries>> {
        self.map(series, |v, mu, sd| v * sd + mu)
    }

    fn map(&self, series: &[TimeSeries], f: impl Fn(f64, f64, f64) -> f64) -> Result<Vec<TimeSeries>> {
        series
            .iter()
            .map(|s| {
                if s.n_features() != self.mean.len() {
                    return Err(Error::Shape(format!(
                        "statistics for {} features applied to {}",
                        self.mean.len(),
                        s.n_features()
                    )));
                }
                let values: Array2<f64> =
                    Array2::from_shape_fn(s.shape(), |(t, j)| f(s.values()[[t, j]], self.mean[j], self.std[j]));
                TimeSeries::new(values)
            })
            .collect()
    }
}

/// Fits statistics on `ds` and returns the standardized copy.
pub fn standardize(ds: &Dataset) -> Result<(Dataset, Standardization)> {
    let stats = Standardization::fit(&ds.series)?;
    let series = stats.apply(&ds.series)?;
    Ok((Dataset::new(ds.name.clone(), series)?, stats))
}

/// Shuffled disjoint split with `round(len * val_fraction)` validation samples.
pub fn split(ds: &Dataset, val_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::Value(format!("val_fraction must lie in (0, 1), got {val_fraction}")));
    }
    let n_val = (ds.len() as f64 * val_fraction).round() as usize;
    if n_val == 0 || n_val == ds.len() {
        return Err(Error::Data(format!(
            "{} samples cannot be split with val_fraction {val_fraction}",
            ds.len()
        )));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    Rng::new(seed, SPLIT_STREAM).shuffle(&mut order);
    let pick = |idx: &[usize]| idx.iter().map(|&i| ds.series[i].clone()).collect::<Vec<_>>();
    let val = pick(&order[..n_val]);
    let train = pick(&order[n_val..]);
    Ok((
        Dataset::new(format!("{}-train", ds.name), train)?,
        Dataset::new(format!("{}-val", ds.name), val)?,
    ))
}

/// Splits, then standardizes both parts with training-split statistics.
pub fn prepare(ds: &Dataset, val_fraction: f64, seed: u64) -> Result<(Dataset, Dataset, Standardization)> {
    let (train, val) = split(ds, val_fraction, seed)?;
    let stats = Standardization::fit(&train.series)?;
    let train_std = Dataset::new(train.name, stats.apply(&train.series)?)?;
    let val_std = Dataset::new(val.name, stats.apply(&val.series)?)?;
    Ok((train_std, val_std, stats))
}
