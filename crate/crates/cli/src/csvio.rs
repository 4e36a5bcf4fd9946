//! CSV ingestion and export.
//!
//! The dialect is plain: comma separated, UTF-8, one required header row,
//! '.' as the decimal point, numeric fields unquoted. The target column is
//! picked by `--target NAME` or defaults to the last column. Floats are
//! written with 17 significant digits, enough for a bit-exact round trip.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use lsq_shapley::{BatchRecord, Dataset};
use nalgebra::{DMatrix, DVector};

use crate::fsio;

/// A parsed data file: the matrix split into features and target, plus the
/// column names that came with it.
#[derive(Debug)]
pub struct LabeledData {
    pub feature_names: Vec<String>,
    pub target_name: String,
    pub data: Dataset,
}

/// Reads one train or test CSV. `target` selects the label column by exact
/// header match; `None` means the last column.
pub fn read_dataset(path: &Path, target: Option<&str>) -> Result<LabeledData> {
    let mut reader =
        csv::Reader::from_path(path).with_context(|| format!("cannot open {}", path.display()))?;
    let headers: Vec<String> = reader
        .headers()
        .with_context(|| format!("cannot read the header row of {}", path.display()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.len() < 2 {
        bail!(
            "{} has {} column(s); need at least one feature and one target",
            path.display(),
            headers.len()
        );
    }
    let target_idx = match target {
        Some(name) => {
            let hits: Vec<usize> = headers
                .iter()
                .enumerate()
                .filter(|(_, h)| h == &name)
                .map(|(i, _)| i)
                .collect();
            match hits.as_slice() {
                [] => bail!("{} has no column named {:?}", path.display(), name),
                [one] => *one,
                _ => bail!(
                    "{} has {} columns named {:?}; headers must be unique to select by name",
                    path.display(),
                    hits.len(),
                    name
                ),
            }
        }
        None => headers.len() - 1,
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record =
            record.with_context(|| format!("{}: malformed row {}", path.display(), i + 2))?;
        let mut row = Vec::with_capacity(headers.len());
        for (j, field) in record.iter().enumerate() {
            let value: f64 = field.trim().parse().with_context(|| {
                format!(
                    "{}: row {}, column {:?}: cannot parse {:?} as a number",
                    path.display(),
                    i + 2,
                    headers[j],
                    field
                )
            })?;
            row.push(value);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        bail!("{} has a header but no data rows", path.display());
    }

    let n = rows.len();
    let p = headers.len() - 1;
    let mut x = DMatrix::zeros(n, p);
    let mut y = DVector::zeros(n);
    for (i, row) in rows.iter().enumerate() {
        let mut k = 0;
        for (j, value) in row.iter().enumerate() {
            if j == target_idx {
                y[i] = *value;
            } else {
                x[(i, k)] = *value;
                k += 1;
            }
        }
    }
    let feature_names = headers
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != target_idx)
        .map(|(_, h)| h.clone())
        .collect();
    let data = Dataset::new(x, y)?;
    Ok(LabeledData {
        feature_names,
        target_name: headers[target_idx].clone(),
        data,
    })
}

/// Writes a dataset with the target as the last column. Atomic.
pub fn write_dataset(
    path: &Path,
    feature_names: &[String],
    target_name: &str,
    data: &Dataset,
) -> Result<()> {
    if feature_names.len() != data.n_features() {
        bail!(
            "{} feature names for {} feature columns",
            feature_names.len(),
            data.n_features()
        );
    }
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = feature_names.iter().map(String::as_str).collect();
    header.push(target_name);
    writer.write_record(&header)?;
    for i in 0..data.n_rows() {
        let mut record: Vec<String> = (0..data.n_features())
            .map(|j| format!("{:.16e}", data.x[(i, j)]))
            .collect();
        record.push(format!("{:.16e}", data.y[i]));
        writer.write_record(&record)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| anyhow!("cannot flush the CSV for {}: {e}", path.display()))?;
    fsio::atomic_write(path, &bytes)
}

/// Writes the convergence history: one row per merged batch with the batch
/// index, the cumulative sample count, the error estimate, and the running
/// attribution in columns S_1..S_p. Atomic.
pub fn write_history(path: &Path, records: &[BatchRecord]) -> Result<()> {
    let p = records.first().map_or(0, |rec| rec.shapley.len());
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header = vec![
        "batch_index".to_string(),
        "samples".to_string(),
        "sigma_hat".to_string(),
    ];
    header.extend((1..=p).map(|j| format!("S_{j}")));
    writer.write_record(&header)?;
    for rec in records {
        let mut row = vec![
            rec.batch_index.to_string(),
            rec.samples.to_string(),
            format!("{:.16e}", rec.sigma_hat),
        ];
        row.extend(rec.shapley.iter().map(|v| format!("{:.16e}", v)));
        writer.write_record(&row)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| anyhow!("cannot flush the CSV for {}: {e}", path.display()))?;
    fsio::atomic_write(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> (Vec<String>, Dataset) {
        let x = DMatrix::from_row_slice(
            4,
            2,
            &[
                0.1,
                -2.0,
                1.0 / 3.0,
                5.5e-13,
                std::f64::consts::PI,
                -0.0,
                9.25,
                1e150,
            ],
        );
        let y = DVector::from_vec(vec![1.5, -0.25, 2.0f64.sqrt(), 0.0]);
        let names = vec!["a".to_string(), "b".to_string()];
        (names, Dataset::new(x, y).unwrap())
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        let (names, data) = sample();
        write_dataset(&path, &names, "y", &data).unwrap();
        let back = read_dataset(&path, None).unwrap();
        assert_eq!(back.feature_names, names);
        assert_eq!(back.target_name, "y");
        for i in 0..4 {
            for j in 0..2 {
                assert_eq!(back.data.x[(i, j)].to_bits(), data.x[(i, j)].to_bits());
            }
            assert_eq!(back.data.y[i].to_bits(), data.y[i].to_bits());
        }
    }

    #[test]
    fn target_by_name_can_sit_anywhere() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        std::fs::write(&path, "y,a,b\n1.0,2.0,3.0\n4.0,5.0,6.0\n").unwrap();
        let parsed = read_dataset(&path, Some("y")).unwrap();
        assert_eq!(parsed.feature_names, ["a", "b"]);
        assert_eq!(parsed.data.y.as_slice(), [1.0, 4.0]);
        assert_eq!(parsed.data.x[(1, 0)], 5.0);
    }

    #[test]
    fn missing_target_name_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        std::fs::write(&path, "a,b\n1.0,2.0\n").unwrap();
        let err = read_dataset(&path, Some("z")).unwrap_err();
        assert!(err.to_string().contains("no column named"));
    }

    #[test]
    fn duplicate_target_name_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        std::fs::write(&path, "a,a,b\n1.0,2.0,3.0\n").unwrap();
        let err = read_dataset(&path, Some("a")).unwrap_err();
        assert!(err.to_string().contains("must be unique"));
    }

    #[test]
    fn non_numeric_cell_reports_row_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        std::fs::write(&path, "a,y\n1.0,2.0\noops,3.0\n").unwrap();
        let err = format!("{:#}", read_dataset(&path, None).unwrap_err());
        assert!(err.contains("row 3"), "{err}");
        assert!(err.contains("\"a\""), "{err}");
    }

    #[test]
    fn header_only_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        std::fs::write(&path, "a,y\n").unwrap();
        let err = read_dataset(&path, None).unwrap_err();
        assert!(err.to_string().contains("no data rows"));
    }
}
