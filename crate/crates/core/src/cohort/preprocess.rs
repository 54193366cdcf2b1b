use std::cmp::Ordering;
use std::io::{Read, Write};

use chrono::NaiveDate;
use rayon::prelude::*;

use super::{
    apply_censoring_with_horizon, band_covariates, compute_hospital_load,
    derive_vaccination_status, factors, month_label, reclassify_palliative, AnalysisRecord,
    EventCause, RawAdmission, TrustLoadIndex, HORIZON_DAYS,
};
use crate::error::{Error, Result};

/// Factor columns of the derived analysis table, in file order.
pub const ANALYSIS_FACTORS: [&str; 10] = [
    factors::AGE_BAND,
    factors::SEX,
    factors::ETHNICITY,
    factors::REGION,
    factors::IMD_QUINTILE,
    factors::CCI_BAND,
    factors::ADMISSION_MONTH,
    factors::VACCINATION_STATUS,
    factors::HOSPITAL_LOAD,
    factors::ONSET_MONTH,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PreprocessOptions {
    pub extraction_date: NaiveDate,
    pub horizon_days: i64,
}

impl PreprocessOptions {
    pub fn new(extraction_date: NaiveDate) -> Self {
        PreprocessOptions {
            extraction_date,
            horizon_days: HORIZON_DAYS,
        }
    }
}

fn derive_one(
    raw: &RawAdmission,
    index: &TrustLoadIndex,
    opts: &PreprocessOptions,
) -> Result<AnalysisRecord> {
    let reclassified = reclassify_palliative(raw)?;
    let mut record =
        apply_censoring_with_horizon(&reclassified, opts.extraction_date, opts.horizon_days)?;
    let mut levels = band_covariates(raw)?;
    let vaccination =
        derive_vaccination_status(raw.dose1_date, raw.dose2_date, raw.admission_date)?;
    levels.insert(
        factors::VACCINATION_STATUS.to_string(),
        vaccination.label().to_string(),
    );
    let load = compute_hospital_load(index, &raw.trust_id, raw.admission_date)?;
    levels.insert(
        factors::HOSPITAL_LOAD.to_string(),
        load.band.label().to_string(),
    );
    if let Some(onset) = raw.onset_date {
        levels.insert(factors::ONSET_MONTH.to_string(), month_label(onset));
    }
    record.covariates = levels;
    Ok(record)
}

fn canonical_order(a: &AnalysisRecord, b: &AnalysisRecord) -> Ordering {
    a.subject_id
        .cmp(&b.subject_id)
        .then(a.time_days.total_cmp(&b.time_days))
        .then(a.event.cmp(&b.event))
        .then_with(|| a.covariates.cmp(&b.covariates))
}

/// Derives one analysis record per admission against a prebuilt load index.
/// Output is sorted by subject id, so input order never matters.
pub fn derive_records(
    raws: &[RawAdmission],
    index: &TrustLoadIndex,
    opts: &PreprocessOptions,
) -> Result<Vec<AnalysisRecord>> {
    let mut out = raws
        .par_iter()
        .map(|r| derive_one(r, index, opts))
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(canonical_order);
    Ok(out)
}

/// Palliative reclassification, censoring and covariate derivation for a whole
/// cohort. The hospital-load index is built from the same admissions.
pub fn preprocess_cohort(
    raws: &[RawAdmission],
    opts: &PreprocessOptions,
) -> Result<Vec<AnalysisRecord>> {
    let index = TrustLoadIndex::from_admissions(
        raws.iter().map(|r| (r.trust_id.as_str(), r.admission_date)),
    );
    derive_records(raws, &index, opts)
}

/// Writes `subject_id,time_days,event,<factors...>` with the standard factor columns.
pub fn write_analysis_records<W: Write>(writer: W, records: &[AnalysisRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["subject_id", "time_days", "event"];
    header.extend(ANALYSIS_FACTORS);
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.subject_id.clone(),
            r.time_days.to_string(),
            r.event.code().to_string(),
        ];
        row.extend(
            ANALYSIS_FACTORS
                .iter()
                .map(|f| r.level(f).unwrap_or("").to_string()),
        );
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an analysis table. Every column other than `subject_id`, `time_days`,
/// `event` and an optional `weight` is a factor; empty cells mean "no level".
pub fn read_analysis_records<R: Read>(reader: R) -> Result<Vec<AnalysisRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let position = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::validation(format!("analysis table is missing `{name}`")))
    };
    let (id_col, time_col, event_col) = (
        position("subject_id")?,
        position("time_days")?,
        position("event")?,
    );
    let weight_col = headers.iter().position(|h| h == "weight");
    let factor_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| ![id_col, time_col, event_col].contains(i) && Some(*i) != weight_col)
        .map(|(i, h)| (i, h.to_string()))
        .collect();

    let mut out = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row?;
        let bad = |what: &str| Error::validation(format!("analysis row {}: bad {what}", line + 2));
        let time: f64 = row[time_col].trim().parse().map_err(|_| bad("time_days"))?;
        if !(time.is_finite() && time >= 0.0) {
            return Err(bad("time_days"));
        }
        let code: u8 = row[event_col].trim().parse().map_err(|_| bad("event"))?;
        let mut rec = AnalysisRecord::new(&row[id_col], time, EventCause::from_code(code)?);
        if let Some(wc) = weight_col {
            let w: f64 = row[wc].trim().parse().map_err(|_| bad("weight"))?;
            if !(w.is_finite() && w > 0.0) {
                return Err(bad("weight"));
            }
            rec.weight = w;
        }
        for (i, name) in &factor_cols {
            let v = row[*i].trim();
            if !v.is_empty() {
                rec.covariates.insert(name.clone(), v.to_string());
            }
        }
        out.push(rec);
    }
    Ok(out)
}
