//! JHU-layout CSV ingestion.
//!
//! The input is the `time_series_covid19_confirmed_global.csv` layout:
//! a header `Province/State,Country/Region,Lat,Long` followed by one
//! column per calendar day (`M/D/YY`), and one row per province or
//! country with cumulative confirmed counts. Some countries are split
//! into province rows; aggregation sums them per date column.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::{Days, NaiveDate};

use crate::{Error, Result};

const DATE_FMT_PARSE: &str = "%m/%d/%y";

/// A parsed JHU table: dates in header order, rows as given.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub header_dates: Vec<NaiveDate>,
    pub rows: Vec<RawRow>,
}

/// One CSV data row.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub province: Option<String>,
    pub country: String,
    pub lat: f64,
    pub long: f64,
    pub counts: Vec<u64>,
}

/// Parse a JHU-layout CSV stream.
///
/// Quoted fields (e.g. `"Korea, South"`) are unescaped by the CSV
/// reader; count cells must be base-10 non-negative integers; header
/// dates must be strictly increasing, consecutive calendar days.
pub fn parse_jhu_csv<R: Read>(reader: R) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();

    let header = match records.next() {
        Some(rec) => rec?,
        None => return Err(Error::MalformedHeader("empty input".into())),
    };
    let expected_prefix = ["Province/State", "Country/Region", "Lat", "Long"];
    if header.len() < 5 {
        return Err(Error::MalformedHeader(format!(
            "expected at least 5 columns, found {}",
            header.len()
        )));
    }
    for (i, want) in expected_prefix.iter().enumerate() {
        if header.get(i) != Some(want) {
            return Err(Error::MalformedHeader(format!(
                "column {} is {:?}, expected {:?}",
                i,
                header.get(i).unwrap_or(""),
                want
            )));
        }
    }

    let mut header_dates = Vec::with_capacity(header.len() - 4);
    for cell in header.iter().skip(4) {
        let date = NaiveDate::parse_from_str(cell, DATE_FMT_PARSE)
            .map_err(|_| Error::MalformedHeader(format!("bad date column {cell:?}")))?;
        if let Some(&prev) = header_dates.last() {
            if prev + Days::new(1) != date {
                return Err(Error::NonMonotoneDates(prev, date));
            }
        }
        header_dates.push(date);
    }

    let ncols = 4 + header_dates.len();
    let mut rows = Vec::new();
    for (row_idx, rec) in records.enumerate() {
        let rec = rec?;
        if rec.len() != ncols {
            return Err(Error::RaggedRow {
                row: row_idx + 1,
                expected: ncols,
                found: rec.len(),
            });
        }
        let province = match &rec[0] {
            "" => None,
            p => Some(p.to_string()),
        };
        let lat = parse_coord(&rec[2], row_idx + 1)?;
        let long = parse_coord(&rec[3], row_idx + 1)?;
        let mut counts = Vec::with_capacity(header_dates.len());
        for (col, cell) in rec.iter().enumerate().skip(4) {
            let n: u64 = cell.trim().parse().map_err(|_| Error::NonNumericCount {
                row: row_idx + 1,
                col,
                cell: cell.to_string(),
            })?;
            counts.push(n);
        }
        rows.push(RawRow {
            province,
            country: rec[1].to_string(),
            lat,
            long,
            counts,
        });
    }

    Ok(RawTable { header_dates, rows })
}

fn parse_coord(cell: &str, row: usize) -> Result<f64> {
    if cell.is_empty() {
        return Ok(0.0);
    }
    cell.trim().parse().map_err(|_| Error::InvalidCoordinate {
        row,
        cell: cell.to_string(),
    })
}

/// Write a table back out in the same layout (dates as `M/D/YY`).
pub fn write_jhu_csv<W: Write>(table: &RawTable, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec![
        "Province/State".to_string(),
        "Country/Region".to_string(),
        "Lat".to_string(),
        "Long".to_string(),
    ];
    for d in &table.header_dates {
        header.push(format!("{}/{}/{}", d.format("%-m"), d.format("%-d"), d.format("%y")));
    }
    wtr.write_record(&header)?;
    for row in &table.rows {
        let mut rec = vec![
            row.province.clone().unwrap_or_default(),
            row.country.clone(),
            row.lat.to_string(),
            row.long.to_string(),
        ];
        rec.extend(row.counts.iter().map(|c| c.to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Element-wise sum of all rows whose `Country/Region` matches exactly.
pub fn aggregate_country(table: &RawTable, country: &str) -> Result<Vec<u64>> {
    let mut total = vec![0u64; table.header_dates.len()];
    let mut seen = false;
    for row in &table.rows {
        if row.country == country {
            seen = true;
            for (acc, &c) in total.iter_mut().zip(&row.counts) {
                *acc += c;
            }
        }
    }
    if !seen {
        return Err(Error::UnknownCountry(country.to_string()));
    }
    Ok(total)
}

/// Countries present in a table, in first-appearance order.
pub fn countries(table: &RawTable) -> Vec<&str> {
    let mut out: Vec<&str> = Vec::new();
    for row in &table.rows {
        if !out.contains(&row.country.as_str()) {
            out.push(&row.country);
        }
    }
    out
}

/// Data-quality flags attached to a trimmed series.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnomalyKind {
    /// Cumulative count dropped to zero after the first case; the stored
    /// value is floored to 1 so the log transform stays defined.
    InteriorZero,
    /// Cumulative count decreased (reporting correction); kept as-is.
    Decrease,
}

/// One flagged entry: the raw reported value is preserved here even
/// when the stored series value was floored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Anomaly {
    pub index: usize,
    pub date: NaiveDate,
    pub raw: u64,
    pub kind: AnomalyKind,
}

impl std::fmt::Display for Anomaly {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.kind {
            AnomalyKind::InteriorZero => {
                write!(f, "{}: count 0 after first case, floored to 1", self.date)
            }
            AnomalyKind::Decrease => {
                write!(f, "{}: cumulative count decreased to {}", self.date, self.raw)
            }
        }
    }
}

/// Dated cumulative counts for one country, trimmed to the first case.
///
/// Stored counts are all ≥ 1 (interior zeros floored for the log
/// domain); the untouched reported values sit in [`Self::anomalies`].
#[derive(Debug, Clone, PartialEq)]
pub struct CountrySeries {
    country: String,
    start_date: NaiveDate,
    counts: Vec<u64>,
    anomalies: Vec<Anomaly>,
}

impl CountrySeries {
    pub fn country(&self) -> &str {
        &self.country
    }

    pub fn start_date(&self) -> NaiveDate {
        self.start_date
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn date_at(&self, index: usize) -> NaiveDate {
        self.start_date + Days::new(index as u64)
    }

    pub fn anomalies(&self) -> &[Anomaly] {
        &self.anomalies
    }

    /// Copy of the first `len` days; panics if `len` exceeds the series.
    pub fn truncated(&self, len: usize) -> CountrySeries {
        assert!(len >= 1 && len <= self.counts.len());
        CountrySeries {
            country: self.country.clone(),
            start_date: self.start_date,
            counts: self.counts[..len].to_vec(),
            anomalies: self
                .anomalies
                .iter()
                .filter(|a| a.index < len)
                .cloned()
                .collect(),
        }
    }

    /// Build a series directly from counts that already start at the
    /// first case. Intended for tests and synthetic data.
    pub fn from_counts(country: &str, start_date: NaiveDate, counts: Vec<u64>) -> Result<Self> {
        if counts.is_empty() || counts[0] == 0 {
            return Err(Error::AllZero(country.to_string()));
        }
        let dates: Vec<NaiveDate> = (0..counts.len())
            .map(|i| start_date + Days::new(i as u64))
            .collect();
        trim_to_first_case(country, &counts, &dates)
    }
}

/// Drop the leading zero run and flag interior zeros and decreases.
///
/// Interior zeros are floored to 1 in the stored series (the raw value
/// is kept in the anomaly record); decreases are kept untouched. Both
/// produce warnings rather than errors — cumulative JHU data contains
/// reporting corrections.
pub fn trim_to_first_case(
    country: &str,
    counts: &[u64],
    dates: &[NaiveDate],
) -> Result<CountrySeries> {
    if counts.len() != dates.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} counts vs {} dates",
            counts.len(),
            dates.len()
        )));
    }
    let first = match counts.iter().position(|&c| c > 0) {
        Some(i) => i,
        None => return Err(Error::AllZero(country.to_string())),
    };

    let mut trimmed = Vec::with_capacity(counts.len() - first);
    let mut anomalies = Vec::new();
    let mut prev = 0u64;
    for (index, &raw) in counts[first..].iter().enumerate() {
        let stored = if raw == 0 {
            anomalies.push(Anomaly {
                index,
                date: dates[first + index],
                raw,
                kind: AnomalyKind::InteriorZero,
            });
            1
        } else {
            raw
        };
        if index > 0 && raw < prev && raw != 0 {
            anomalies.push(Anomaly {
                index,
                date: dates[first + index],
                raw,
                kind: AnomalyKind::Decrease,
            });
        }
        trimmed.push(stored);
        prev = raw;
    }

    Ok(CountrySeries {
        country: country.to_string(),
        start_date: dates[first],
        counts: trimmed,
        anomalies,
    })
}

/// Colloquial-name → `Country/Region` mapping.
///
/// The JHU file spells several countries differently from everyday
/// usage ("US", "Korea, South"); lookups here are exact and
/// case-sensitive after aliasing.
#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct CountryAliases {
    map: BTreeMap<String, String>,
}

impl CountryAliases {
    pub fn new(map: BTreeMap<String, String>) -> Self {
        Self { map }
    }

    /// The standard aliases shipped with the bundled data.
    pub fn builtin() -> Self {
        let mut map = BTreeMap::new();
        for (from, to) in [
            ("USA", "US"),
            ("United States", "US"),
            ("UK", "United Kingdom"),
            ("South Korea", "Korea, South"),
        ] {
            map.insert(from.to_string(), to.to_string());
        }
        Self { map }
    }

    pub fn insert(&mut self, from: &str, to: &str) {
        self.map.insert(from.to_string(), to.to_string());
    }

    /// Resolve a colloquial name to the CSV's country field.
    pub fn resolve<'a>(&'a self, name: &'a str) -> &'a str {
        self.map.get(name).map(String::as_str).unwrap_or(name)
    }

    pub fn known(&self) -> impl Iterator<Item = (&str, &str)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

/// Aggregate, alias-resolve and trim in one step.
pub fn load_country(
    table: &RawTable,
    name: &str,
    aliases: &CountryAliases,
) -> Result<CountrySeries> {
    let resolved = aliases.resolve(name);
    let counts = aggregate_country(table, resolved)?;
    trim_to_first_case(name, &counts, &table.header_dates)
}
