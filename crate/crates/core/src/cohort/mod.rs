//! Admission records, covariate derivation and the censoring rules that turn a
//! linked hospital cohort into estimator-ready records.

mod censoring;
mod covariates;
mod ingest;
mod load;
mod preprocess;
mod schema;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use censoring::{
    apply_censoring, apply_censoring_with_horizon, reclassify_palliative, HORIZON_DAYS,
    PALLIATIVE_WINDOW_DAYS,
};
pub use covariates::{
    age_band, band_covariates, cci_band, derive_vaccination_status, month_label, VaccinationStatus,
};
pub use ingest::{ingest_cohort, write_cohort, RejectionReport, COHORT_HEADER};
pub use load::{compute_hospital_load, HospitalLoad, LoadBand, TrustLoadIndex};
pub use preprocess::{
    derive_records, preprocess_cohort, read_analysis_records, write_analysis_records,
    PreprocessOptions, ANALYSIS_FACTORS,
};
pub use schema::{most_frequent_level, CovariateSchema, Factor, SchemaSpec, UNSTRATIFIED};

/// Factor names used in derived covariate maps.
pub mod factors {
    pub const AGE_BAND: &str = "age_band";
    pub const SEX: &str = "sex";
    pub const ETHNICITY: &str = "ethnicity";
    pub const REGION: &str = "region";
    pub const IMD_QUINTILE: &str = "imd_quintile";
    pub const CCI_BAND: &str = "cci_band";
    pub const ADMISSION_MONTH: &str = "admission_month";
    pub const VACCINATION_STATUS: &str = "vaccination_status";
    pub const HOSPITAL_LOAD: &str = "hospital_load";
    pub const ONSET_MONTH: &str = "onset_month";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OutcomeKind {
    DiedInHospital,
    Discharged,
    StillInHospital,
}

impl OutcomeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeKind::DiedInHospital => "DiedInHospital",
            OutcomeKind::Discharged => "Discharged",
            OutcomeKind::StillInHospital => "StillInHospital",
        }
    }
}

impl fmt::Display for OutcomeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OutcomeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "diedinhospital" | "died_in_hospital" | "died" | "death" => {
                Ok(OutcomeKind::DiedInHospital)
            }
            "discharged" | "discharge" => Ok(OutcomeKind::Discharged),
            "stillinhospital" | "still_in_hospital" | "in_hospital" => {
                Ok(OutcomeKind::StillInHospital)
            }
            other => Err(Error::validation(format!("unknown outcome kind `{other}`"))),
        }
    }
}

/// One linked hospital admission, before any analysis rules are applied.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawAdmission {
    pub subject_id: String,
    pub admission_date: NaiveDate,
    /// First positive specimen. When absent the admission date is used as the
    /// origin of the follow-up horizon.
    pub specimen_date: Option<NaiveDate>,
    pub onset_date: Option<NaiveDate>,
    pub outcome_kind: OutcomeKind,
    pub outcome_date: Option<NaiveDate>,
    pub post_discharge_death_date: Option<NaiveDate>,
    pub dose1_date: Option<NaiveDate>,
    pub dose2_date: Option<NaiveDate>,
    pub age_years: i32,
    pub sex: String,
    pub ethnicity: String,
    pub region: String,
    pub imd_quintile: String,
    pub cci_score: i32,
    pub trust_id: String,
}

impl RawAdmission {
    /// Earliest specimen date still counted as community acquired, relative to admission.
    pub const SPECIMEN_WINDOW_BEFORE: i64 = 14;
    pub const SPECIMEN_WINDOW_AFTER: i64 = 1;

    pub fn specimen_or_admission(&self) -> NaiveDate {
        self.specimen_date.unwrap_or(self.admission_date)
    }

    /// Checks the record invariants. Returns the rejection reason on failure.
    pub fn validate(&self) -> std::result::Result<(), &'static str> {
        if self.sex.is_empty()
            || self.ethnicity.is_empty()
            || self.region.is_empty()
            || self.imd_quintile.is_empty()
        {
            return Err(ingest::reasons::MISSING_DEMOGRAPHIC);
        }
        if self.age_years < 0 || self.cci_score < 0 {
            return Err(ingest::reasons::NEGATIVE_VALUE);
        }
        if self.trust_id.is_empty() {
            return Err(ingest::reasons::MISSING_TRUST);
        }
        if let Some(specimen) = self.specimen_date {
            let offset = (specimen - self.admission_date).num_days();
            if !(-Self::SPECIMEN_WINDOW_BEFORE..=Self::SPECIMEN_WINDOW_AFTER).contains(&offset) {
                return Err(ingest::reasons::SPECIMEN_WINDOW);
            }
        }
        match (self.outcome_kind, self.outcome_date) {
            (OutcomeKind::StillInHospital, _) => {}
            (_, None) => return Err(ingest::reasons::MISSING_OUTCOME_DATE),
            _ => {}
        }
        if let Some(outcome) = self.outcome_date {
            if outcome < self.admission_date {
                return Err(ingest::reasons::INCONSISTENT_DATES);
            }
        }
        match (self.dose1_date, self.dose2_date) {
            (None, Some(_)) => return Err(ingest::reasons::INCONSISTENT_DATES),
            (Some(d1), Some(d2)) if d2 < d1 => return Err(ingest::reasons::INCONSISTENT_DATES),
            _ => {}
        }
        if let (OutcomeKind::Discharged, Some(discharge), Some(death)) = (
            self.outcome_kind,
            self.outcome_date,
            self.post_discharge_death_date,
        ) {
            if death < discharge {
                return Err(ingest::reasons::INCONSISTENT_DATES);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum EventCause {
    Censored = 0,
    Death = 1,
    Discharge = 2,
}

impl EventCause {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(EventCause::Censored),
            1 => Ok(EventCause::Death),
            2 => Ok(EventCause::Discharge),
            other => Err(Error::validation(format!("unknown event code {other}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EventCause::Censored => "censored",
            EventCause::Death => "death",
            EventCause::Discharge => "discharge",
        }
    }
}

/// Estimator-ready record: follow-up time from admission, cause and covariate levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRecord {
    pub subject_id: String,
    pub time_days: f64,
    pub event: EventCause,
    pub covariates: BTreeMap<String, String>,
    /// Composite stratum label; empty until a schema assigns one.
    pub stratum: String,
    pub weight: f64,
}

impl AnalysisRecord {
    pub fn new(subject_id: impl Into<String>, time_days: f64, event: EventCause) -> Self {
        AnalysisRecord {
            subject_id: subject_id.into(),
            time_days,
            event,
            covariates: BTreeMap::new(),
            stratum: String::new(),
            weight: 1.0,
        }
    }

    pub fn with_covariate(mut self, factor: impl Into<String>, level: impl Into<String>) -> Self {
        self.covariates.insert(factor.into(), level.into());
        self
    }

    pub fn level(&self, factor: &str) -> Option<&str> {
        self.covariates.get(factor).map(String::as_str)
    }
}
