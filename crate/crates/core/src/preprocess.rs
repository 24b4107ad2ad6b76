//! Return normalization and rolling correlation structure.
//!
//! Returns are first rescaled against a short trailing window so that slow
//! volatility regimes do not dominate, then summarized as rolling Pearson
//! correlation matrices between the ten sector series. Each matrix flattens
//! to a 45-dimensional vector of distinct sector pairs.

use std::path::Path;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::ingest::ReturnTable;
use crate::par;
use crate::sectors::{feature_names, ALL_SECTORS, FEATURE_COUNT, SECTOR_COUNT};

/// Rescale each return against its own trailing window of `n` observations:
/// subtract the window mean, divide by the window's population standard
/// deviation. Row `t` of the output uses rows `t-n+1 ..= t` of the input, so
/// the first `n - 1` rows are consumed as warm-up.
pub fn local_normalize(table: &ReturnTable, n: usize) -> Result<ReturnTable> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "normalization window must be at least 2, got {n}"
        )));
    }
    if table.dates.len() < n {
        return Err(Error::WindowTooLong {
            window: n,
            needed: n,
            got: table.dates.len(),
        });
    }
    let rows = table.dates.len() - (n - 1);
    let normalized = par::try_map_range(0..rows, |out_row| {
        let end = out_row + n - 1;
        let mut row = [0.0f64; SECTOR_COUNT];
        for (s, slot) in row.iter_mut().enumerate() {
            let window: Vec<f64> = (end + 1 - n..=end).map(|t| table.get(t, s)).collect();
            let mean = window.iter().sum::<f64>() / n as f64;
            let var = window.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            if var <= 0.0 {
                return Err(Error::ZeroVariance {
                    date: table.dates[end],
                    series: ALL_SECTORS[s].abbrev().to_string(),
                });
            }
            *slot = (table.get(end, s) - mean) / var.sqrt();
        }
        Ok(row)
    })?;
    Ok(ReturnTable {
        dates: table.dates[n - 1..].to_vec(),
        returns: normalized.into_iter().flatten().collect(),
    })
}

/// A 10x10 sector correlation matrix for one trading day (the last day of
/// its window). Exactly symmetric with a unit diagonal by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub date: NaiveDate,
    /// Row-major 10x10.
    pub values: Vec<f64>,
}

impl CorrelationMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * SECTOR_COUNT + j]
    }

    /// Smallest eigenvalue; a correlation matrix of real series is positive
    /// semi-definite up to floating-point error.
    pub fn min_eigenvalue(&self) -> f64 {
        let m = nalgebra::DMatrix::from_row_slice(SECTOR_COUNT, SECTOR_COUNT, &self.values);
        let eig = nalgebra::SymmetricEigen::new(m);
        eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Pearson correlation matrix over rows `end - tau + 1 ..= end` of `table`.
///
/// Every pair is computed once and mirrored, the diagonal is set to exactly
/// one, and round-off outside `[-1, 1]` is clamped. This is the per-window
/// kernel behind [`rolling_correlation`].
pub fn correlation_at(table: &ReturnTable, end: usize, tau: usize) -> Result<CorrelationMatrix> {
    let start = end + 1 - tau;
    let mut means = [0.0f64; SECTOR_COUNT];
    for (s, mean) in means.iter_mut().enumerate() {
        *mean = (start..=end).map(|t| table.get(t, s)).sum::<f64>() / tau as f64;
    }
    let mut centered = vec![0.0f64; tau * SECTOR_COUNT];
    for t in 0..tau {
        for s in 0..SECTOR_COUNT {
            centered[t * SECTOR_COUNT + s] = table.get(start + t, s) - means[s];
        }
    }
    let mut norms = [0.0f64; SECTOR_COUNT];
    for (s, norm) in norms.iter_mut().enumerate() {
        let ss: f64 = (0..tau).map(|t| centered[t * SECTOR_COUNT + s].powi(2)).sum();
        if ss <= 0.0 {
            return Err(Error::ZeroVariance {
                date: table.dates[end],
                series: ALL_SECTORS[s].abbrev().to_string(),
            });
        }
        *norm = ss.sqrt();
    }

    let mut values = vec![0.0f64; SECTOR_COUNT * SECTOR_COUNT];
    for i in 0..SECTOR_COUNT {
        values[i * SECTOR_COUNT + i] = 1.0;
        for j in i + 1..SECTOR_COUNT {
            let dot: f64 = (0..tau)
                .map(|t| centered[t * SECTOR_COUNT + i] * centered[t * SECTOR_COUNT + j])
                .sum();
            let r = (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0);
            values[i * SECTOR_COUNT + j] = r;
            values[j * SECTOR_COUNT + i] = r;
        }
    }
    Ok(CorrelationMatrix {
        date: table.dates[end],
        values,
    })
}

/// Rolling correlation matrices over trailing windows of `tau` rows, stride
/// one. The matrix dated `t` covers rows `t - tau + 1 ..= t`.
pub fn rolling_correlation(table: &ReturnTable, tau: usize) -> Result<Vec<CorrelationMatrix>> {
    if tau < 3 {
        return Err(Error::InvalidParameter(format!(
            "correlation window must be at least 3, got {tau}"
        )));
    }
    if table.dates.len() < tau {
        return Err(Error::WindowTooLong {
            window: tau,
            needed: tau,
            got: table.dates.len(),
        });
    }
    par::try_map_range(tau - 1..table.dates.len(), |end| correlation_at(table, end, tau))
}

/// One observation for clustering: the 45 distinct correlation pairs of a
/// single day, ordered row by row through the upper triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub date: NaiveDate,
    pub values: Vec<f64>,
}

/// Flatten the strict upper triangle into the canonical 45-entry layout.
pub fn flatten(matrix: &CorrelationMatrix) -> FeatureVector {
    let mut values = Vec::with_capacity(FEATURE_COUNT);
    for i in 0..SECTOR_COUNT {
        for j in i + 1..SECTOR_COUNT {
            values.push(matrix.get(i, j));
        }
    }
    FeatureVector {
        date: matrix.date,
        values,
    }
}

/// Rebuild the full symmetric matrix from its flattened upper triangle.
pub fn unflatten(vector: &FeatureVector) -> Result<CorrelationMatrix> {
    if vector.values.len() != FEATURE_COUNT {
        return Err(Error::DimensionMismatch {
            expected: FEATURE_COUNT,
            got: vector.values.len(),
        });
    }
    let mut values = vec![0.0f64; SECTOR_COUNT * SECTOR_COUNT];
    let mut p = 0;
    for i in 0..SECTOR_COUNT {
        values[i * SECTOR_COUNT + i] = 1.0;
        for j in i + 1..SECTOR_COUNT {
            values[i * SECTOR_COUNT + j] = vector.values[p];
            values[j * SECTOR_COUNT + i] = vector.values[p];
            p += 1;
        }
    }
    Ok(CorrelationMatrix {
        date: vector.date,
        values,
    })
}

/// Write feature vectors as CSV: `date` column plus one column per sector
/// pair, named like `E_M`.
pub fn write_features(path: &Path, vectors: &[FeatureVector]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut header = vec!["date".to_string()];
    header.extend(feature_names());
    writer.write_record(&header).map_err(|e| Error::csv(path, e))?;
    for v in vectors {
        let mut record = vec![v.date.format("%Y-%m-%d").to_string()];
        record.extend(v.values.iter().map(|x| x.to_string()));
        writer.write_record(&record).map_err(|e| Error::csv(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Read feature vectors written by [`write_features`].
pub fn load_features(path: &Path) -> Result<Vec<FeatureVector>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    {
        let headers = reader.headers().map_err(|e| Error::csv(path, e))?;
        let mut expected = vec!["date".to_string()];
        expected.extend(feature_names());
        let got: Vec<&str> = headers.iter().collect();
        if got != expected.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(Error::MalformedHeader(format!(
                "feature file {} has unexpected columns",
                path.display()
            )));
        }
    }
    let mut vectors = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let date = NaiveDate::parse_from_str(record.get(0).unwrap_or(""), "%Y-%m-%d")
            .map_err(|e| Error::Format(format!("bad date in {}: {e}", path.display())))?;
        let mut values = Vec::with_capacity(FEATURE_COUNT);
        for p in 0..FEATURE_COUNT {
            let raw = record
                .get(p + 1)
                .ok_or_else(|| Error::Format(format!("short row in {}", path.display())))?;
            values.push(
                raw.parse::<f64>()
                    .map_err(|e| Error::Format(format!("bad value {raw:?}: {e}")))?,
            );
        }
        vectors.push(FeatureVector { date, values });
    }
    Ok(vectors)
}
