//! Bank-year panels: loading, validation, balanced sub-panels and treatment
//! assignment.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing column `{0}` in header")]
    MissingColumn(String),
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("duplicate observation for bank `{bank_id}` in {year}")]
    DuplicateKey { bank_id: String, year: i32 },
    #[error("panel is empty")]
    EmptyPanel,
    #[error("no bank is observed in every year")]
    EmptyResult,
    #[error("year {0} is not present in the panel")]
    YearAbsent(i32),
    #[error("quantile must lie in (0, 1), got {0}")]
    InvalidQuantile(f64),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// One bank in one year. Assets are in millions of a single currency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankRecord {
    pub bank_id: String,
    pub year: i32,
    pub total_assets: f64,
    pub country: Option<String>,
    pub name: Option<String>,
}

impl BankRecord {
    pub fn new(bank_id: impl Into<String>, year: i32, total_assets: f64) -> Self {
        Self {
            bank_id: bank_id.into(),
            year,
            total_assets,
            country: None,
            name: None,
        }
    }

    pub fn with_country(mut self, country: impl Into<String>) -> Self {
        self.country = Some(country.into());
        self
    }
}

/// Validated long-format panel. Records keep their input order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BankPanel {
    records: Vec<BankRecord>,
    years: Vec<i32>,
}

impl BankPanel {
    pub fn new(records: Vec<BankRecord>) -> Result<Self, IngestError> {
        let mut seen = HashSet::new();
        let mut years = BTreeSet::new();
        for r in &records {
            if !r.total_assets.is_finite() || r.total_assets < 0.0 {
                return Err(IngestError::InvalidRecord(format!(
                    "bank `{}` in {} has total_assets {}",
                    r.bank_id, r.year, r.total_assets
                )));
            }
            if !seen.insert((r.bank_id.clone(), r.year)) {
                return Err(IngestError::DuplicateKey {
                    bank_id: r.bank_id.clone(),
                    year: r.year,
                });
            }
            years.insert(r.year);
        }
        Ok(Self {
            records,
            years: years.into_iter().collect(),
        })
    }

    pub fn records(&self) -> &[BankRecord] {
        &self.records
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Distinct bank ids in order of first appearance.
    pub fn bank_ids(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.records
            .iter()
            .filter(|r| seen.insert(r.bank_id.as_str()))
            .map(|r| r.bank_id.clone())
            .collect()
    }

    pub fn year_records(&self, year: i32) -> impl Iterator<Item = &BankRecord> {
        self.records.iter().filter(move |r| r.year == year)
    }

    /// Bank ids and total assets observed in `year`, in record order.
    pub fn year_assets(&self, year: i32) -> Result<(Vec<String>, Vec<f64>), IngestError> {
        if !self.years.contains(&year) {
            return Err(IngestError::YearAbsent(year));
        }
        Ok(self
            .year_records(year)
            .map(|r| (r.bank_id.clone(), r.total_assets))
            .unzip())
    }

    /// Restrict to the given years (unknown years are ignored).
    pub fn select_years(&self, years: &[i32]) -> Result<Self, IngestError> {
        let keep: HashSet<i32> = years.iter().copied().collect();
        Self::new(
            self.records
                .iter()
                .filter(|r| keep.contains(&r.year))
                .cloned()
                .collect(),
        )
    }

    /// Write the panel back out in the default schema.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), IngestError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["bank_id", "year", "total_assets", "country", "name"])?;
        for r in &self.records {
            w.write_record([
                r.bank_id.as_str(),
                &r.year.to_string(),
                &r.total_assets.to_string(),
                r.country.as_deref().unwrap_or(""),
                r.name.as_deref().unwrap_or(""),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Column names used when reading a panel. Optional columns are read only if
/// the header contains them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Schema {
    pub bank_id: String,
    pub year: String,
    pub total_assets: String,
    pub country: String,
    pub name: String,
    pub delimiter: u8,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            bank_id: "bank_id".into(),
            year: "year".into(),
            total_assets: "total_assets".into(),
            country: "country".into(),
            name: "name".into(),
            delimiter: b',',
        }
    }
}

/// Parse a delimited panel. Rows with missing or invalid assets are rejected,
/// not imputed.
pub fn load_panel<R: Read>(source: R, schema: &Schema) -> Result<BankPanel, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .trim(csv::Trim::All)
        .from_reader(source);
    let header = reader.headers()?.clone();
    let find = |name: &str| header.iter().position(|h| h == name);
    let required = |name: &str| find(name).ok_or_else(|| IngestError::MissingColumn(name.into()));
    let id_col = required(&schema.bank_id)?;
    let year_col = required(&schema.year)?;
    let assets_col = required(&schema.total_assets)?;
    let country_col = find(&schema.country);
    let name_col = find(&schema.name);

    let mut records = Vec::new();
    let mut seen: HashMap<(String, i32), usize> = HashMap::new();
    for (idx, row) in reader.records().enumerate() {
        let line = idx + 2;
        let row = row?;
        let malformed = |reason: String| IngestError::MalformedRow { line, reason };
        let field = |col: usize| row.get(col).unwrap_or("");

        let bank_id = field(id_col);
        if bank_id.is_empty() {
            return Err(malformed("empty bank_id".into()));
        }
        let year: i32 = field(year_col)
            .parse()
            .map_err(|_| malformed(format!("unparseable year `{}`", field(year_col))))?;
        let raw_assets = field(assets_col);
        if raw_assets.is_empty() {
            return Err(malformed("missing total_assets".into()));
        }
        let total_assets: f64 = raw_assets
            .parse()
            .map_err(|_| malformed(format!("unparseable total_assets `{raw_assets}`")))?;
        if !total_assets.is_finite() || total_assets < 0.0 {
            return Err(malformed(format!("total_assets must be finite and >= 0, got {raw_assets}")));
        }
        let country = match country_col.map(field) {
            None | Some("") => None,
            Some(c) if c.len() == 2 && c.chars().all(|ch| ch.is_ascii_alphabetic()) => {
                Some(c.to_ascii_uppercase())
            }
            Some(c) => return Err(malformed(format!("country `{c}` is not a 2-letter code"))),
        };
        let name = name_col.map(field).filter(|s| !s.is_empty()).map(str::to_owned);

        if seen.insert((bank_id.to_owned(), year), line).is_some() {
            return Err(IngestError::DuplicateKey {
                bank_id: bank_id.to_owned(),
                year,
            });
        }
        records.push(BankRecord {
            bank_id: bank_id.to_owned(),
            year,
            total_assets,
            country,
            name,
        });
    }
    BankPanel::new(records)
}

/// Sub-panel of banks observed in every year of `panel.years()`.
pub fn balanced_panel(panel: &BankPanel) -> Result<BankPanel, IngestError> {
    if panel.is_empty() {
        return Err(IngestError::EmptyPanel);
    }
    let n_years = panel.years().len();
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for r in panel.records() {
        *counts.entry(r.bank_id.as_str()).or_default() += 1;
    }
    let records: Vec<BankRecord> = panel
        .records()
        .iter()
        .filter(|r| counts[r.bank_id.as_str()] == n_years)
        .cloned()
        .collect();
    if records.is_empty() {
        return Err(IngestError::EmptyResult);
    }
    BankPanel::new(records)
}

/// Which banks count as treated: base-year assets strictly above the
/// empirical `quantile` of base-year assets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentAssignment {
    pub treated: BTreeMap<String, bool>,
    pub quantile: f64,
    pub base_year: i32,
    /// The asset level a bank must exceed to be treated.
    pub threshold: f64,
}

impl TreatmentAssignment {
    pub fn is_treated(&self, bank_id: &str) -> Option<bool> {
        self.treated.get(bank_id).copied()
    }

    pub fn n_treated(&self) -> usize {
        self.treated.values().filter(|t| **t).count()
    }
}

pub fn assign_treatment(
    panel: &BankPanel,
    base_year: i32,
    quantile: f64,
) -> Result<TreatmentAssignment, IngestError> {
    if !(quantile > 0.0 && quantile < 1.0) {
        return Err(IngestError::InvalidQuantile(quantile));
    }
    let (ids, assets) = panel.year_assets(base_year)?;
    let threshold = util::quantile(&assets, quantile);
    let treated = ids
        .into_iter()
        .zip(assets)
        .map(|(id, a)| (id, a > threshold))
        .collect();
    Ok(TreatmentAssignment {
        treated,
        quantile,
        base_year,
        threshold,
    })
}
