use std::io::Write;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};

/// Ordered multivariate stream with optional ground-truth labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub column_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// `true` marks an anomaly.
    pub labels: Option<Vec<bool>>,
}

impl Dataset {
    pub fn new(
        column_names: Vec<String>,
        rows: Vec<Vec<f64>>,
        labels: Option<Vec<bool>>,
    ) -> Result<Self> {
        let m = column_names.len();
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != m) {
            return Err(Error::invalid(format!(
                "row {i} has {} values, expected {m}",
                r.len()
            )));
        }
        if let Some(l) = &labels {
            if l.len() != rows.len() {
                return Err(Error::invalid(format!(
                    "{} labels for {} rows",
                    l.len(),
                    rows.len()
                )));
            }
        }
        Ok(Self {
            column_names,
            rows,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dimensionality(&self) -> usize {
        self.column_names.len()
    }

    /// Contiguous rows `start..start + len`, labels included.
    pub fn slice(&self, start: usize, len: usize) -> Dataset {
        let end = start + len;
        Dataset {
            column_names: self.column_names.clone(),
            rows: self.rows[start..end].to_vec(),
            labels: self.labels.as_ref().map(|l| l[start..end].to_vec()),
        }
    }

    /// Writes a headered CSV; labels go last under `label_column` as 0/1.
    pub fn write_csv<W: Write>(&self, writer: W, label_column: &str) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.column_names.iter().map(String::as_str).collect();
        if self.labels.is_some() {
            header.push(label_column);
        }
        out.write_record(&header)?;
        let mut fields = Vec::with_capacity(header.len());
        for (i, row) in self.rows.iter().enumerate() {
            fields.clear();
            fields.extend(row.iter().map(|v| format!("{v}")));
            if let Some(labels) = &self.labels {
                fields.push(if labels[i] { "1" } else { "0" }.to_string());
            }
            out.write_record(&fields)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Reads a headered numeric CSV, taking `label_column` (if any) as 0/1 labels.
///
/// Row numbers in errors count data rows from 1.
pub fn load_csv(path: impl AsRef<Path>, label_column: Option<&str>) -> Result<Dataset> {
    let path = path.as_ref();
    let parse_err = |row: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        message,
    };

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let label_idx = match label_column {
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| parse_err(0, format!("label column '{name}' not in header")))?,
        ),
        None => None,
    };
    let column_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != label_idx)
        .map(|(_, h)| h.to_string())
        .collect();

    let mut rows = Vec::new();
    let mut labels = label_idx.map(|_| Vec::new());
    for (i, record) in reader.records().enumerate() {
        let row_no = i + 1;
        let record = record?;
        if record.len() != headers.len() {
            return Err(parse_err(
                row_no,
                format!("{} fields, header has {}", record.len(), headers.len()),
            ));
        }
        let mut row = Vec::with_capacity(column_names.len());
        for (j, cell) in record.iter().enumerate() {
            if Some(j) == label_idx {
                let label = match cell.parse::<f64>() {
                    Ok(0.0) => false,
                    Ok(1.0) => true,
                    _ => return Err(parse_err(row_no, format!("label '{cell}' is not 0 or 1"))),
                };
                labels.as_mut().expect("label column present").push(label);
                continue;
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => row.push(v),
                _ => {
                    return Err(parse_err(
                        row_no,
                        format!("column '{}': '{cell}' is not a finite number", &headers[j]),
                    ))
                }
            }
        }
        rows.push(row);
    }
    Dataset::new(column_names, rows, labels)
}

/// Uniform start offset for a contiguous block of `b` out of `n` rows.
pub fn subset_start<R: Rng + ?Sized>(n: usize, b: usize, rng: &mut R) -> Result<usize> {
    if b > n {
        return Err(Error::invalid(format!(
            "subset size {b} exceeds dataset size {n}"
        )));
    }
    Ok(rng.random_range(0..=n - b))
}

/// Picks a uniformly placed contiguous block of `b` rows.
pub fn select_subset<R: Rng + ?Sized>(dataset: &Dataset, b: usize, rng: &mut R) -> Result<Dataset> {
    let start = subset_start(dataset.len(), b, rng)?;
    Ok(dataset.slice(start, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_six_columns() {
        let mut text = String::from("t_in,h_in,light,co2,t_soil,h_soil\n");
        for i in 0..25 {
            text.push_str(&format!("{i},{},3,4,5,6.5\n", i * 2));
        }
        let f = write_tmp(&text);
        let ds = load_csv(f.path(), None).unwrap();
        assert_eq!(ds.dimensionality(), 6);
        assert_eq!(ds.len(), 25);
        assert_eq!(ds.rows[3], vec![3.0, 6.0, 3.0, 4.0, 5.0, 6.5]);
        assert!(ds.labels.is_none());
    }

    #[test]
    fn header_only_is_empty() {
        let f = write_tmp("a,b,c\n");
        let ds = load_csv(f.path(), None).unwrap();
        assert!(ds.is_empty());
        assert_eq!(ds.column_names, vec!["a", "b", "c"]);
    }

    #[test]
    fn label_column_is_split_out() {
        let f = write_tmp("a,label,b\n1,0,2\n3,1,4\n");
        let ds = load_csv(f.path(), Some("label")).unwrap();
        assert_eq!(ds.column_names, vec!["a", "b"]);
        assert_eq!(ds.rows, vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert_eq!(ds.labels, Some(vec![false, true]));
    }

    #[test]
    fn parse_errors_name_the_row() {
        let f = write_tmp("a,b\n1,2\n3,oops\n");
        match load_csv(f.path(), None) {
            Err(Error::Parse { row, message, .. }) => {
                assert_eq!(row, 2);
                assert!(message.contains("oops"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let f = write_tmp("a,b\n1,2\n3\n");
        assert!(matches!(
            load_csv(f.path(), None),
            Err(Error::Parse { row: 2, .. })
        ));
        let f = write_tmp("a,label\n1,2\n");
        assert!(matches!(
            load_csv(f.path(), Some("label")),
            Err(Error::Parse { row: 1, .. })
        ));
        let f = write_tmp("a,b\n1,inf\n");
        assert!(matches!(
            load_csv(f.path(), None),
            Err(Error::Parse { row: 1, .. })
        ));
        let f = write_tmp("a,b\n1,2\n");
        assert!(load_csv(f.path(), Some("missing")).is_err());
        assert!(load_csv("/definitely/not/here.csv", None).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let ds = Dataset::new(
            vec!["x".into(), "y".into()],
            vec![vec![0.1, -2.5], vec![1e-9, 3.0]],
            Some(vec![true, false]),
        )
        .unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        ds.write_csv(std::fs::File::create(f.path()).unwrap(), "label")
            .unwrap();
        assert_eq!(load_csv(f.path(), Some("label")).unwrap(), ds);
    }

    #[test]
    fn subset_is_contiguous() {
        let rows: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64]).collect();
        let ds = Dataset::new(vec!["x".into()], rows, Some(vec![false; 100])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sub = select_subset(&ds, 30, &mut rng).unwrap();
        assert_eq!(sub.len(), 30);
        assert_eq!(sub.labels.as_ref().unwrap().len(), 30);
        assert!(sub.rows.windows(2).all(|w| w[1][0] == w[0][0] + 1.0));
        assert_eq!(select_subset(&ds, 100, &mut rng).unwrap(), ds);
        assert!(select_subset(&ds, 101, &mut rng).is_err());

        let a = select_subset(&ds, 10, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = select_subset(&ds, 10, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_ne!(a.rows[0], b.rows[0]);
    }

    #[test]
    fn ragged_construction_fails() {
        assert!(Dataset::new(vec!["x".into()], vec![vec![1.0, 2.0]], None).is_err());
        assert!(Dataset::new(vec!["x".into()], vec![vec![1.0]], Some(vec![])).is_err());
    }
}
