use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::NaiveDate;

use super::{OutcomeKind, RawAdmission};
use crate::error::{Error, Result};

pub const COHORT_HEADER: [&str; 16] = [
    "subject_id",
    "admission_date",
    "specimen_date",
    "onset_date",
    "outcome_kind",
    "outcome_date",
    "post_discharge_death_date",
    "dose1_date",
    "dose2_date",
    "age_years",
    "sex",
    "ethnicity",
    "region",
    "imd_quintile",
    "cci_score",
    "trust_id",
];

pub(crate) mod reasons {
    pub const INCONSISTENT_DATES: &str = "inconsistent dates";
    pub const MISSING_DEMOGRAPHIC: &str = "missing demographic";
    pub const MISSING_TRUST: &str = "missing trust";
    pub const MISSING_SUBJECT: &str = "missing subject id";
    pub const MISSING_ADMISSION: &str = "missing admission date";
    pub const MISSING_OUTCOME_DATE: &str = "missing outcome date";
    pub const MALFORMED_DATE: &str = "malformed date";
    pub const MALFORMED_NUMBER: &str = "malformed number";
    pub const MALFORMED_OUTCOME: &str = "malformed outcome kind";
    pub const MALFORMED_ROW: &str = "malformed row";
    pub const NEGATIVE_VALUE: &str = "negative age or cci";
    pub const SPECIMEN_WINDOW: &str = "specimen outside community-acquired window";
    pub const MISSING_SPECIMEN_WARNING: &str = "missing specimen date (warning)";
}

/// Per-reason counts of rows rejected at ingestion, plus non-fatal warnings.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RejectionReport {
    pub rejected: BTreeMap<String, usize>,
    pub warnings: BTreeMap<String, usize>,
    pub rows_read: usize,
}

impl RejectionReport {
    pub fn is_empty(&self) -> bool {
        self.rejected.is_empty() && self.warnings.is_empty()
    }

    pub fn total_rejected(&self) -> usize {
        self.rejected.values().sum()
    }

    pub fn count(&self, reason: &str) -> usize {
        self.rejected
            .get(reason)
            .or_else(|| self.warnings.get(reason))
            .copied()
            .unwrap_or(0)
    }

    fn reject(&mut self, reason: &str) {
        *self.rejected.entry(reason.to_string()).or_default() += 1;
    }

    fn warn(&mut self, reason: &str) {
        *self.warnings.entry(reason.to_string()).or_default() += 1;
    }

    /// Merges a report from another shard of the same input.
    pub fn merge(&mut self, other: &RejectionReport) {
        for (k, v) in &other.rejected {
            *self.rejected.entry(k.clone()).or_default() += v;
        }
        for (k, v) in &other.warnings {
            *self.warnings.entry(k.clone()).or_default() += v;
        }
        self.rows_read += other.rows_read;
    }

    /// Writes `reason,count`, rejections first, each block sorted by reason.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["reason", "count"])?;
        for (reason, count) in self.rejected.iter().chain(self.warnings.iter()) {
            w.write_record([reason.as_str(), &count.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Columns([usize; 16]);

impl Columns {
    fn locate(headers: &csv::StringRecord) -> Result<Self> {
        let mut idx = [0usize; 16];
        for (slot, name) in idx.iter_mut().zip(COHORT_HEADER) {
            *slot = headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::validation(format!("input is missing column `{name}`")))?;
        }
        Ok(Columns(idx))
    }
}

type RowResult<T> = std::result::Result<T, &'static str>;

fn optional_date(field: &str) -> RowResult<Option<NaiveDate>> {
    let field = field.trim();
    if field.is_empty() {
        return Ok(None);
    }
    NaiveDate::parse_from_str(field, "%Y-%m-%d")
        .map(Some)
        .map_err(|_| reasons::MALFORMED_DATE)
}

fn parse_row(record: &csv::StringRecord, cols: &Columns) -> RowResult<RawAdmission> {
    let get = |k: usize| record.get(cols.0[k]).map(str::trim).unwrap_or("");
    let subject_id = get(0);
    if subject_id.is_empty() {
        return Err(reasons::MISSING_SUBJECT);
    }
    let admission_date = optional_date(get(1))?.ok_or(reasons::MISSING_ADMISSION)?;
    let outcome_kind: OutcomeKind = get(4).parse().map_err(|_| reasons::MALFORMED_OUTCOME)?;
    let integer = |k: usize| -> RowResult<i32> {
        let s = get(k);
        if s.is_empty() {
            return Err(reasons::MISSING_DEMOGRAPHIC);
        }
        s.parse::<i32>().map_err(|_| reasons::MALFORMED_NUMBER)
    };
    let raw = RawAdmission {
        subject_id: subject_id.to_string(),
        admission_date,
        specimen_date: optional_date(get(2))?,
        onset_date: optional_date(get(3))?,
        outcome_kind,
        outcome_date: optional_date(get(5))?,
        post_discharge_death_date: optional_date(get(6))?,
        dose1_date: optional_date(get(7))?,
        dose2_date: optional_date(get(8))?,
        age_years: integer(9)?,
        sex: get(10).to_string(),
        ethnicity: get(11).to_string(),
        region: get(12).to_string(),
        imd_quintile: get(13).to_string(),
        cci_score: integer(14)?,
        trust_id: get(15).to_string(),
    };
    raw.validate()?;
    Ok(raw)
}

/// Parses a cohort CSV. Row-level problems are counted in the report and never
/// abort the batch; a missing column or an unreadable stream is fatal.
pub fn ingest_cohort<R: Read>(reader: R) -> Result<(Vec<RawAdmission>, RejectionReport)> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(true)
        .from_reader(reader);
    let cols = Columns::locate(rdr.headers()?)?;
    let expected_len = rdr.headers()?.len();
    let mut report = RejectionReport::default();
    let mut rows = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) if e.is_io_error() => return Err(e.into()),
            Err(_) => {
                report.rows_read += 1;
                report.reject(reasons::MALFORMED_ROW);
                continue;
            }
        }
        report.rows_read += 1;
        if record.len() != expected_len {
            report.reject(reasons::MALFORMED_ROW);
            continue;
        }
        match parse_row(&record, &cols) {
            Ok(raw) => {
                if raw.specimen_date.is_none() {
                    report.warn(reasons::MISSING_SPECIMEN_WARNING);
                }
                rows.push(raw);
            }
            Err(reason) => report.reject(reason),
        }
    }
    Ok((rows, report))
}

fn date_field(d: Option<NaiveDate>) -> String {
    d.map(|d| d.format("%Y-%m-%d").to_string())
        .unwrap_or_default()
}

/// Writes admissions in the cohort CSV schema.
pub fn write_cohort<W: Write>(writer: W, rows: &[RawAdmission]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(COHORT_HEADER)?;
    for r in rows {
        w.write_record([
            r.subject_id.clone(),
            date_field(Some(r.admission_date)),
            date_field(r.specimen_date),
            date_field(r.onset_date),
            r.outcome_kind.as_str().to_string(),
            date_field(r.outcome_date),
            date_field(r.post_discharge_death_date),
            date_field(r.dose1_date),
            date_field(r.dose2_date),
            r.age_years.to_string(),
            r.sex.clone(),
            r.ethnicity.clone(),
            r.region.clone(),
            r.imd_quintile.clone(),
            r.cci_score.to_string(),
            r.trust_id.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
