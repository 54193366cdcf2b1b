use chrono::{Duration, NaiveDate};

use super::{AnalysisRecord, EventCause, OutcomeKind, RawAdmission};
use crate::error::{Error, Result};

/// Follow-up horizon, counted from the first positive specimen.
pub const HORIZON_DAYS: i64 = 90;

/// Deaths up to and including this many days after discharge are counted as
/// in-hospital deaths.
pub const PALLIATIVE_WINDOW_DAYS: i64 = 14;

/// Reclassifies a discharge followed closely by death as a death on the date
/// of death. Records that are not discharges pass through unchanged, so the
/// operation is idempotent.
pub fn reclassify_palliative(raw: &RawAdmission) -> Result<RawAdmission> {
    if raw.outcome_kind != OutcomeKind::Discharged {
        return Ok(raw.clone());
    }
    let (Some(discharge), Some(death)) = (raw.outcome_date, raw.post_discharge_death_date) else {
        return Ok(raw.clone());
    };
    if death < discharge {
        return Err(Error::validation(format!(
            "subject {}: death {death} precedes discharge {discharge}",
            raw.subject_id
        )));
    }
    let mut out = raw.clone();
    if death <= discharge + Duration::days(PALLIATIVE_WINDOW_DAYS) {
        out.outcome_kind = OutcomeKind::DiedInHospital;
        out.outcome_date = Some(death);
    }
    Ok(out)
}

pub fn apply_censoring(raw: &RawAdmission, extraction: NaiveDate) -> Result<AnalysisRecord> {
    apply_censoring_with_horizon(raw, extraction, HORIZON_DAYS)
}

/// Converts outcome dates into a follow-up time from admission, right-censoring
/// at `horizon_days` after the specimen date and at data extraction for
/// patients still in hospital.
pub fn apply_censoring_with_horizon(
    raw: &RawAdmission,
    extraction: NaiveDate,
    horizon_days: i64,
) -> Result<AnalysisRecord> {
    if extraction < raw.admission_date {
        return Err(Error::validation(format!(
            "subject {}: extraction date {extraction} precedes admission {}",
            raw.subject_id, raw.admission_date
        )));
    }
    let horizon = raw.specimen_or_admission() + Duration::days(horizon_days);
    let days_from_admission = |d: NaiveDate| ((d - raw.admission_date).num_days().max(0)) as f64;

    let (end, event) = match raw.outcome_kind {
        OutcomeKind::StillInHospital => (extraction.min(horizon), EventCause::Censored),
        kind => {
            let outcome = raw.outcome_date.ok_or_else(|| {
                Error::validation(format!("subject {}: missing outcome date", raw.subject_id))
            })?;
            if outcome > horizon {
                (horizon, EventCause::Censored)
            } else if kind == OutcomeKind::DiedInHospital {
                (outcome, EventCause::Death)
            } else {
                (outcome, EventCause::Discharge)
            }
        }
    };
    Ok(AnalysisRecord::new(
        raw.subject_id.clone(),
        days_from_admission(end),
        event,
    ))
}
