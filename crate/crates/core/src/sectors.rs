//! GICS sector labels and the fixed feature-index map.
//!
//! Ten sectors give a 10x10 correlation matrix whose strict upper triangle,
//! flattened row-major, is the 45-entry feature vector clustered downstream.
//! The position <-> sector-pair bijection is fixed here once and shared by
//! every module and every file format.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SECTOR_COUNT: usize = 10;
pub const FEATURE_COUNT: usize = SECTOR_COUNT * (SECTOR_COUNT - 1) / 2;

/// The ten GICS sectors, in the fixed order used by every matrix and file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sector {
    Energy,
    Materials,
    Financials,
    ConsumerStaples,
    ConsumerDiscretionary,
    Utilities,
    Telecom,
    InformationTechnology,
    Industrials,
    HealthCare,
}

pub const ALL_SECTORS: [Sector; SECTOR_COUNT] = [
    Sector::Energy,
    Sector::Materials,
    Sector::Financials,
    Sector::ConsumerStaples,
    Sector::ConsumerDiscretionary,
    Sector::Utilities,
    Sector::Telecom,
    Sector::InformationTechnology,
    Sector::Industrials,
    Sector::HealthCare,
];

impl Sector {
    /// Short label used in file headers and feature names.
    pub fn abbrev(self) -> &'static str {
        match self {
            Sector::Energy => "E",
            Sector::Materials => "M",
            Sector::Financials => "F",
            Sector::ConsumerStaples => "CS",
            Sector::ConsumerDiscretionary => "CD",
            Sector::Utilities => "U",
            Sector::Telecom => "T",
            Sector::InformationTechnology => "IT",
            Sector::Industrials => "I",
            Sector::HealthCare => "HC",
        }
    }

    /// Position of this sector in [`ALL_SECTORS`].
    pub fn index(self) -> usize {
        ALL_SECTORS.iter().position(|&s| s == self).unwrap()
    }
}

impl fmt::Display for Sector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.abbrev())
    }
}

impl FromStr for Sector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ALL_SECTORS
            .iter()
            .copied()
            .find(|sec| sec.abbrev() == s)
            .ok_or_else(|| Error::UnknownSector(s.to_string()))
    }
}

/// Index of the feature holding the correlation of sector pair `(i, j)`,
/// `i < j`, in row-major upper-triangle order.
pub fn feature_index(i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < SECTOR_COUNT);
    i * (2 * SECTOR_COUNT - i - 1) / 2 + (j - i - 1)
}

/// Sector pair `(i, j)`, `i < j`, at feature position `p`.
pub fn feature_pair(p: usize) -> (usize, usize) {
    debug_assert!(p < FEATURE_COUNT);
    let mut rem = p;
    for i in 0..SECTOR_COUNT - 1 {
        let row_len = SECTOR_COUNT - 1 - i;
        if rem < row_len {
            return (i, i + 1 + rem);
        }
        rem -= row_len;
    }
    unreachable!("feature index out of range")
}

/// Name of feature `p`, e.g. `"E_M"` for the Energy/Materials correlation.
pub fn feature_name(p: usize) -> String {
    let (i, j) = feature_pair(p);
    format!("{}_{}", ALL_SECTORS[i].abbrev(), ALL_SECTORS[j].abbrev())
}

/// All 45 feature names in index order.
pub fn feature_names() -> Vec<String> {
    (0..FEATURE_COUNT).map(feature_name).collect()
}

/// Feature index for a name like `"E_M"`.
pub fn feature_index_of_name(name: &str) -> Result<usize> {
    let (a, b) = name
        .split_once('_')
        .ok_or_else(|| Error::Format(format!("bad feature name {name:?}")))?;
    let i = Sector::from_str(a)?.index();
    let j = Sector::from_str(b)?.index();
    if i >= j {
        return Err(Error::Format(format!(
            "feature name {name:?} is not in upper-triangle order"
        )));
    }
    Ok(feature_index(i, j))
}

/// Ticker -> sector assignments.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SectorMap {
    assignments: BTreeMap<String, Sector>,
}

impl SectorMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, ticker: impl Into<String>, sector: Sector) {
        self.assignments.insert(ticker.into(), sector);
    }

    pub fn sector_of(&self, ticker: &str) -> Option<Sector> {
        self.assignments.get(ticker).copied()
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Sector)> {
        self.assignments.iter().map(|(t, &s)| (t.as_str(), s))
    }

    /// Load a two-column `ticker,sector` CSV. The sector column holds the
    /// short labels from [`Sector::abbrev`].
    pub fn load_csv(path: &std::path::Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(|e| Error::csv(path, e))?;
        {
            let headers = reader.headers().map_err(|e| Error::csv(path, e))?;
            let cols: Vec<&str> = headers.iter().collect();
            if cols.len() < 2 || cols[0] != "ticker" || cols[1] != "sector" {
                return Err(Error::MalformedHeader(format!(
                    "expected `ticker,sector`, got {:?}",
                    cols.join(",")
                )));
            }
        }
        let mut map = SectorMap::new();
        for record in reader.records() {
            let record = record.map_err(|e| Error::csv(path, e))?;
            let ticker = record
                .get(0)
                .ok_or_else(|| Error::Format("missing ticker field".into()))?;
            let sector: Sector = record
                .get(1)
                .ok_or_else(|| Error::Format(format!("missing sector for ticker {ticker}")))?
                .parse()?;
            map.insert(ticker, sector);
        }
        Ok(map)
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        writer
            .write_record(["ticker", "sector"])
            .map_err(|e| Error::csv(path, e))?;
        for (ticker, sector) in self.iter() {
            writer
                .write_record([ticker, sector.abbrev()])
                .map_err(|e| Error::csv(path, e))?;
        }
        writer.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_map_is_a_bijection() {
        let mut seen = [false; FEATURE_COUNT];
        for i in 0..SECTOR_COUNT {
            for j in (i + 1)..SECTOR_COUNT {
                let p = feature_index(i, j);
                assert!(!seen[p]);
                seen[p] = true;
                assert_eq!(feature_pair(p), (i, j));
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn first_and_last_names() {
        assert_eq!(feature_name(0), "E_M");
        assert_eq!(feature_name(1), "E_F");
        assert_eq!(feature_name(FEATURE_COUNT - 1), "I_HC");
        assert_eq!(feature_index_of_name("E_M").unwrap(), 0);
        assert_eq!(feature_index_of_name("I_HC").unwrap(), FEATURE_COUNT - 1);
    }

    #[test]
    fn unknown_sector_rejected() {
        assert!(matches!(
            "XX".parse::<Sector>(),
            Err(Error::UnknownSector(_))
        ));
        assert!(feature_index_of_name("M_E").is_err());
    }

    #[test]
    fn sector_map_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sectors.csv");
        let mut map = SectorMap::new();
        map.insert("XOM", Sector::Energy);
        map.insert("MSFT", Sector::InformationTechnology);
        map.write_csv(&path).unwrap();
        let loaded = SectorMap::load_csv(&path).unwrap();
        assert_eq!(loaded, map);
    }
}
