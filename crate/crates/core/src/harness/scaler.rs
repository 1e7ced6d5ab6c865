//! Median/IQR feature scaling.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::harness::dataset::Dataset;

/// Quantile of sorted data, interpolating linearly between order statistics
/// at position `q * (n - 1)`.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalerParams {
    pub medians: Vec<f64>,
    /// `q75 - q25` per column.
    pub iqrs: Vec<f64>,
}

impl ScalerParams {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::invalid("cannot fit a scaler on zero rows"))?;
        let m = first.len();
        let mut medians = Vec::with_capacity(m);
        let mut iqrs = Vec::with_capacity(m);
        let mut column = Vec::with_capacity(rows.len());
        for j in 0..m {
            column.clear();
            for r in rows {
                if r.len() != m {
                    return Err(Error::DimensionMismatch {
                        expected: m,
                        found: r.len(),
                    });
                }
                column.push(r[j]);
            }
            column.sort_by(f64::total_cmp);
            medians.push(quantile(&column, 0.5));
            iqrs.push(quantile(&column, 0.75) - quantile(&column, 0.25));
        }
        Ok(Self { medians, iqrs })
    }

    pub fn dimensionality(&self) -> usize {
        self.medians.len()
    }

    /// Columns with zero spread; they scale to 0.
    pub fn degenerate_columns(&self) -> Vec<usize> {
        self.iqrs
            .iter()
            .enumerate()
            .filter(|(_, &q)| q == 0.0)
            .map(|(j, _)| j)
            .collect()
    }

    pub fn transform_point(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.medians.iter().zip(&self.iqrs))
            .map(|(v, (med, iqr))| if *iqr == 0.0 { 0.0 } else { (v - med) / iqr })
            .collect()
    }

    pub fn transform(&self, dataset: &Dataset) -> Result<Dataset> {
        if dataset.dimensionality() != self.dimensionality() {
            return Err(Error::DimensionMismatch {
                expected: self.dimensionality(),
                found: dataset.dimensionality(),
            });
        }
        Ok(Dataset {
            column_names: dataset.column_names.clone(),
            rows: dataset
                .rows
                .iter()
                .map(|r| self.transform_point(r))
                .collect(),
            labels: dataset.labels.clone(),
        })
    }

    /// `column,median,iqr` CSV.
    pub fn write_csv<W: Write>(&self, writer: W, column_names: &[String]) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["column", "median", "iqr"])?;
        for (j, (med, iqr)) in self.medians.iter().zip(&self.iqrs).enumerate() {
            let name = column_names
                .get(j)
                .cloned()
                .unwrap_or_else(|| format!("c{j}"));
            out.write_record([name, format!("{med:e}"), format!("{iqr:e}")])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut input = csv::Reader::from_reader(reader);
        let mut medians = Vec::new();
        let mut iqrs = Vec::new();
        for (i, record) in input.records().enumerate() {
            let record = record?;
            let parse = |k: usize| -> Result<f64> {
                record
                    .get(k)
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::invalid(format!("scaler row {}: bad field {k}", i + 1)))
            };
            medians.push(parse(1)?);
            iqrs.push(parse(2)?);
        }
        Ok(Self { medians, iqrs })
    }
}

/// Fits on the whole dataset and applies the fit to it.
pub fn robust_scale(dataset: &Dataset) -> Result<(Dataset, ScalerParams)> {
    let params = ScalerParams::fit(&dataset.rows)?;
    for j in params.degenerate_columns() {
        log::warn!(
            "column '{}' has zero interquartile range; scaled to 0",
            dataset.column_names.get(j).map_or("?", String::as_str)
        );
    }
    let scaled = params.transform(dataset)?;
    Ok((scaled, params))
}
