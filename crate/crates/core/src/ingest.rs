//! Price-table ingestion: CSV loading, coverage filtering, gap filling,
//! sector aggregation and simple returns.

use std::path::Path;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::sectors::{SectorMap, ALL_SECTORS, SECTOR_COUNT};

/// Daily closing prices per ticker. Cells may be missing.
///
/// `prices` is row-major `dates.len() x tickers.len()`; dates are strictly
/// increasing; every present price is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceTable {
    pub dates: Vec<NaiveDate>,
    pub tickers: Vec<String>,
    pub prices: Vec<Option<f64>>,
}

impl PriceTable {
    pub fn new(dates: Vec<NaiveDate>, tickers: Vec<String>, prices: Vec<Option<f64>>) -> Self {
        debug_assert_eq!(prices.len(), dates.len() * tickers.len());
        Self {
            dates,
            tickers,
            prices,
        }
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.prices[row * self.tickers.len() + col]
    }

    fn set(&mut self, row: usize, col: usize, value: Option<f64>) {
        let w = self.tickers.len();
        self.prices[row * w + col] = value;
    }

    /// Fraction of non-missing cells for ticker column `col`.
    pub fn coverage(&self, col: usize) -> f64 {
        let present = (0..self.dates.len())
            .filter(|&r| self.get(r, col).is_some())
            .count();
        present as f64 / self.dates.len() as f64
    }

    /// Write in the same layout [`load_prices`] reads: `date` plus one
    /// column per ticker, missing cells left empty.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        let mut header = vec!["date".to_string()];
        header.extend(self.tickers.iter().cloned());
        writer.write_record(&header).map_err(|e| Error::csv(path, e))?;
        for (r, date) in self.dates.iter().enumerate() {
            let mut record = vec![date.format("%Y-%m-%d").to_string()];
            for c in 0..self.tickers.len() {
                record.push(match self.get(r, c) {
                    Some(v) => v.to_string(),
                    None => String::new(),
                });
            }
            writer.write_record(&record).map_err(|e| Error::csv(path, e))?;
        }
        writer.flush().map_err(|e| Error::io(path, e))
    }
}

/// Aggregated sector price series: one column per GICS sector, no gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorPriceTable {
    pub dates: Vec<NaiveDate>,
    /// Row-major `dates.len() x 10`, sector order per [`ALL_SECTORS`].
    pub prices: Vec<f64>,
}

impl SectorPriceTable {
    pub fn get(&self, row: usize, sector: usize) -> f64 {
        self.prices[row * SECTOR_COUNT + sector]
    }
}

/// Simple returns per sector; one fewer row than the price table.
///
/// Row `t` holds `(S_{t+1} - S_t) / S_t` and is dated by the later day, so a
/// row only uses information available on its own date.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnTable {
    pub dates: Vec<NaiveDate>,
    /// Row-major `dates.len() x 10`.
    pub returns: Vec<f64>,
}

impl ReturnTable {
    pub fn get(&self, row: usize, sector: usize) -> f64 {
        self.returns[row * SECTOR_COUNT + sector]
    }
}

/// Load a price CSV: first column `date` (ISO-8601), one column per ticker,
/// empty or unparsable cells become missing entries.
pub fn load_prices(path: &Path) -> Result<PriceTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;

    let tickers: Vec<String> = {
        let headers = reader.headers().map_err(|e| Error::csv(path, e))?;
        let cols: Vec<&str> = headers.iter().collect();
        match cols.first() {
            Some(&"date") => {}
            other => {
                return Err(Error::MalformedHeader(format!(
                    "first column must be `date`, got {other:?}"
                )))
            }
        }
        cols[1..].iter().map(|s| s.to_string()).collect()
    };
    if tickers.is_empty() {
        return Err(Error::NoTickers);
    }

    let mut rows: Vec<(NaiveDate, Vec<Option<f64>>)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let date_field = record
            .get(0)
            .ok_or_else(|| Error::Format("row without date field".into()))?;
        let date = NaiveDate::parse_from_str(date_field, "%Y-%m-%d")
            .map_err(|e| Error::Format(format!("bad date {date_field:?}: {e}")))?;
        let mut cells = Vec::with_capacity(tickers.len());
        for (idx, ticker) in tickers.iter().enumerate() {
            let raw = record.get(idx + 1).unwrap_or("").trim();
            // Empty and unparsable cells are both treated as missing.
            let value = if raw.is_empty() {
                None
            } else {
                raw.parse::<f64>().ok().filter(|v| v.is_finite())
            };
            if let Some(v) = value {
                if v <= 0.0 {
                    return Err(Error::NonPositivePrice {
                        ticker: ticker.clone(),
                        date,
                        value: v,
                    });
                }
            }
            cells.push(value);
        }
        rows.push((date, cells));
    }

    rows.sort_by_key(|(date, _)| *date);
    for pair in rows.windows(2) {
        if pair[0].0 == pair[1].0 {
            return Err(Error::DuplicateDates(pair[0].0));
        }
    }

    let dates: Vec<NaiveDate> = rows.iter().map(|(d, _)| *d).collect();
    let prices: Vec<Option<f64>> = rows.into_iter().flat_map(|(_, cells)| cells).collect();
    Ok(PriceTable::new(dates, tickers, prices))
}

/// Keep exactly the tickers whose fraction of present cells is at least
/// `min_coverage`; column order is preserved.
pub fn filter_coverage(table: &PriceTable, min_coverage: f64) -> Result<PriceTable> {
    if !(min_coverage > 0.0 && min_coverage <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "min_coverage must be in (0, 1], got {min_coverage}"
        )));
    }
    let kept: Vec<usize> = (0..table.tickers.len())
        .filter(|&c| table.coverage(c) >= min_coverage)
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyAfterFilter { min_coverage });
    }
    let tickers = kept.iter().map(|&c| table.tickers[c].clone()).collect();
    let mut prices = Vec::with_capacity(table.dates.len() * kept.len());
    for r in 0..table.dates.len() {
        for &c in &kept {
            prices.push(table.get(r, c));
        }
    }
    Ok(PriceTable::new(table.dates.clone(), tickers, prices))
}

/// Fill every gap: interior gaps linearly on the row index, leading and
/// trailing gaps with the nearest present value. Present values are left
/// bit-identical.
pub fn interpolate_missing(table: &PriceTable) -> Result<PriceTable> {
    let mut out = table.clone();
    let n_rows = table.dates.len();
    for col in 0..table.tickers.len() {
        let present: Vec<usize> = (0..n_rows).filter(|&r| table.get(r, col).is_some()).collect();
        if present.len() < 2 {
            return Err(Error::TooFewPresentValues {
                ticker: table.tickers[col].clone(),
                present: present.len(),
            });
        }
        let first = present[0];
        let last = *present.last().unwrap();
        for r in 0..first {
            out.set(r, col, table.get(first, col));
        }
        for r in last + 1..n_rows {
            out.set(r, col, table.get(last, col));
        }
        for pair in present.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if b - a <= 1 {
                continue;
            }
            let va = table.get(a, col).unwrap();
            let vb = table.get(b, col).unwrap();
            for r in a + 1..b {
                let frac = (r - a) as f64 / (b - a) as f64;
                out.set(r, col, Some(va + (vb - va) * frac));
            }
        }
    }
    Ok(out)
}

/// Sum member-ticker prices into one series per sector. The table must be
/// complete and every ticker mapped; every sector needs at least one member.
pub fn aggregate_sectors(table: &PriceTable, map: &SectorMap) -> Result<SectorPriceTable> {
    let mut sector_cols: Vec<usize> = Vec::with_capacity(table.tickers.len());
    let mut member_counts = [0usize; SECTOR_COUNT];
    for ticker in &table.tickers {
        let sector = map
            .sector_of(ticker)
            .ok_or_else(|| Error::UnmappedTicker(ticker.clone()))?;
        sector_cols.push(sector.index());
        member_counts[sector.index()] += 1;
    }
    for (s, &count) in member_counts.iter().enumerate() {
        if count == 0 {
            return Err(Error::EmptySector(ALL_SECTORS[s].abbrev().to_string()));
        }
    }

    let mut prices = vec![0.0f64; table.dates.len() * SECTOR_COUNT];
    for r in 0..table.dates.len() {
        for (c, &s) in sector_cols.iter().enumerate() {
            let value = table.get(r, c).ok_or_else(|| Error::MissingValue {
                ticker: table.tickers[c].clone(),
                date: table.dates[r],
            })?;
            prices[r * SECTOR_COUNT + s] += value;
        }
    }
    Ok(SectorPriceTable {
        dates: table.dates.clone(),
        prices,
    })
}

/// Simple returns `(S_{t+1} - S_t) / S_t` per sector.
pub fn compute_returns(table: &SectorPriceTable) -> Result<ReturnTable> {
    if table.dates.len() < 2 {
        return Err(Error::TooFewDates {
            needed: 2,
            got: table.dates.len(),
        });
    }
    let n = table.dates.len() - 1;
    let mut returns = vec![0.0f64; n * SECTOR_COUNT];
    for t in 0..n {
        for s in 0..SECTOR_COUNT {
            let prev = table.get(t, s);
            let next = table.get(t + 1, s);
            returns[t * SECTOR_COUNT + s] = (next - prev) / prev;
        }
    }
    Ok(ReturnTable {
        dates: table.dates[1..].to_vec(),
        returns,
    })
}

fn sector_header() -> Vec<String> {
    let mut header = vec!["date".to_string()];
    header.extend(ALL_SECTORS.iter().map(|s| s.abbrev().to_string()));
    header
}

fn write_dated_matrix(
    path: &Path,
    dates: &[NaiveDate],
    values: &[f64],
    width: usize,
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    writer
        .write_record(sector_header())
        .map_err(|e| Error::csv(path, e))?;
    for (r, date) in dates.iter().enumerate() {
        let mut record = vec![date.format("%Y-%m-%d").to_string()];
        for c in 0..width {
            record.push(values[r * width + c].to_string());
        }
        writer.write_record(&record).map_err(|e| Error::csv(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn read_dated_matrix(path: &Path) -> Result<(Vec<NaiveDate>, Vec<f64>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    {
        let headers = reader.headers().map_err(|e| Error::csv(path, e))?;
        let expected = sector_header();
        let got: Vec<&str> = headers.iter().collect();
        if got != expected.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(Error::MalformedHeader(format!(
                "expected {:?}, got {:?}",
                expected.join(","),
                got.join(",")
            )));
        }
    }
    let mut dates = Vec::new();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let date = NaiveDate::parse_from_str(record.get(0).unwrap_or(""), "%Y-%m-%d")
            .map_err(|e| Error::Format(format!("bad date in {}: {e}", path.display())))?;
        dates.push(date);
        for c in 0..SECTOR_COUNT {
            let raw = record
                .get(c + 1)
                .ok_or_else(|| Error::Format(format!("short row in {}", path.display())))?;
            values.push(
                raw.parse::<f64>()
                    .map_err(|e| Error::Format(format!("bad value {raw:?}: {e}")))?,
            );
        }
    }
    Ok((dates, values))
}

impl SectorPriceTable {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_dated_matrix(path, &self.dates, &self.prices, SECTOR_COUNT)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let (dates, prices) = read_dated_matrix(path)?;
        Ok(Self { dates, prices })
    }
}

impl ReturnTable {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_dated_matrix(path, &self.dates, &self.returns, SECTOR_COUNT)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let (dates, returns) = read_dated_matrix(path)?;
        Ok(Self { dates, returns })
    }
}

/// Assign tickers to sectors round-robin; test and synthetic-data helper.
pub fn round_robin_sector_map(tickers: &[String]) -> SectorMap {
    let mut map = SectorMap::new();
    for (i, ticker) in tickers.iter().enumerate() {
        map.insert(ticker.clone(), ALL_SECTORS[i % SECTOR_COUNT]);
    }
    map
}
