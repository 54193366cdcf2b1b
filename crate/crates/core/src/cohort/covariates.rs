use std::collections::BTreeMap;
use std::fmt;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use super::{factors, RawAdmission};
use crate::error::{Error, Result};

/// Vaccination status at the date of admission. Variants are ordered from
/// least to most protected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VaccinationStatus {
    Unvaccinated,
    FirstDoseUnder21d,
    FirstDose21dPlus,
    SecondDose14dPlus,
}

impl VaccinationStatus {
    pub const ALL: [VaccinationStatus; 4] = [
        VaccinationStatus::Unvaccinated,
        VaccinationStatus::FirstDoseUnder21d,
        VaccinationStatus::FirstDose21dPlus,
        VaccinationStatus::SecondDose14dPlus,
    ];

    pub fn label(self) -> &'static str {
        match self {
            VaccinationStatus::Unvaccinated => "Unvaccinated",
            VaccinationStatus::FirstDoseUnder21d => "<21 days after first dose",
            VaccinationStatus::FirstDose21dPlus => ">=21 days after first dose",
            VaccinationStatus::SecondDose14dPlus => ">=14 days after second dose",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.label() == label)
    }
}

impl fmt::Display for VaccinationStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

const SECOND_DOSE_LAG_DAYS: i64 = 14;
const FIRST_DOSE_LAG_DAYS: i64 = 21;

/// Classifies vaccination status on the admission date, most protected first.
/// A dose given on the admission day counts as received; doses after admission
/// do not.
pub fn derive_vaccination_status(
    dose1: Option<NaiveDate>,
    dose2: Option<NaiveDate>,
    admission: NaiveDate,
) -> Result<VaccinationStatus> {
    match (dose1, dose2) {
        (None, Some(_)) => {
            return Err(Error::validation(
                "second dose recorded without a first dose",
            ))
        }
        (Some(d1), Some(d2)) if d2 < d1 => {
            return Err(Error::validation("second dose precedes first dose"))
        }
        _ => {}
    }
    let since = |d: NaiveDate| (admission - d).num_days();
    if let Some(d2) = dose2 {
        if since(d2) >= SECOND_DOSE_LAG_DAYS {
            return Ok(VaccinationStatus::SecondDose14dPlus);
        }
    }
    Ok(match dose1.map(since) {
        Some(days) if days >= FIRST_DOSE_LAG_DAYS => VaccinationStatus::FirstDose21dPlus,
        Some(days) if days >= 0 => VaccinationStatus::FirstDoseUnder21d,
        _ => VaccinationStatus::Unvaccinated,
    })
}

pub fn age_band(age_years: i32) -> Result<&'static str> {
    Ok(match age_years {
        a if a < 0 => return Err(Error::validation(format!("negative age {a}"))),
        0..=14 => "0-14",
        15..=24 => "15-24",
        25..=44 => "25-44",
        45..=64 => "45-64",
        65..=74 => "65-74",
        75..=84 => "75-84",
        _ => "85+",
    })
}

pub fn cci_band(cci: i32) -> Result<&'static str> {
    Ok(match cci {
        c if c < 0 => return Err(Error::validation(format!("negative comorbidity score {c}"))),
        0 => "0",
        1..=2 => "1-2",
        3..=4 => "3-4",
        _ => "5+",
    })
}

/// `YYYY-MM` label of the calendar month containing `date`.
pub fn month_label(date: NaiveDate) -> String {
    format!("{:04}-{:02}", date.year(), date.month())
}

/// Demographic and calendar covariates that depend on the admission record alone.
pub fn band_covariates(raw: &RawAdmission) -> Result<BTreeMap<String, String>> {
    let mut levels = BTreeMap::new();
    levels.insert(
        factors::AGE_BAND.to_string(),
        age_band(raw.age_years)?.to_string(),
    );
    levels.insert(
        factors::CCI_BAND.to_string(),
        cci_band(raw.cci_score)?.to_string(),
    );
    levels.insert(factors::SEX.to_string(), raw.sex.clone());
    levels.insert(factors::ETHNICITY.to_string(), raw.ethnicity.clone());
    levels.insert(factors::REGION.to_string(), raw.region.clone());
    levels.insert(factors::IMD_QUINTILE.to_string(), raw.imd_quintile.clone());
    levels.insert(
        factors::ADMISSION_MONTH.to_string(),
        month_label(raw.admission_date),
    );
    Ok(levels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn day(offset: i64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2021, 3, 1).unwrap() + chrono::Duration::days(offset)
    }

    #[test]
    fn first_dose_fourteen_days_before_is_under_21() {
        let status = derive_vaccination_status(Some(day(-14)), None, day(0)).unwrap();
        assert_eq!(status, VaccinationStatus::FirstDoseUnder21d);
    }

    #[test]
    fn no_doses_is_unvaccinated() {
        assert_eq!(
            derive_vaccination_status(None, None, day(0)).unwrap(),
            VaccinationStatus::Unvaccinated
        );
    }

    #[test]
    fn dose_on_admission_day_counts() {
        assert_eq!(
            derive_vaccination_status(Some(day(0)), None, day(0)).unwrap(),
            VaccinationStatus::FirstDoseUnder21d
        );
        assert_eq!(
            derive_vaccination_status(Some(day(1)), None, day(0)).unwrap(),
            VaccinationStatus::Unvaccinated
        );
    }

    #[test]
    fn dose_order_is_validated() {
        assert!(derive_vaccination_status(Some(day(-5)), Some(day(-10)), day(0)).is_err());
        assert!(derive_vaccination_status(None, Some(day(-10)), day(0)).is_err());
    }

    // Hand-written decision table over every (dose1, dose2) offset in 0..=30.
    fn table(d1_ago: Option<i64>, d2_ago: Option<i64>) -> VaccinationStatus {
        use VaccinationStatus::*;
        if let Some(d2) = d2_ago {
            if d2 >= 14 {
                return SecondDose14dPlus;
            }
        }
        match d1_ago {
            None => Unvaccinated,
            Some(d) if d < 0 => Unvaccinated,
            Some(d) if d <= 20 => FirstDoseUnder21d,
            Some(_) => FirstDose21dPlus,
        }
    }

    #[test]
    fn boundary_offsets_match_decision_table() {
        assert_eq!(
            derive_vaccination_status(Some(day(-30)), Some(day(-14)), day(0)).unwrap(),
            VaccinationStatus::SecondDose14dPlus
        );
        for d1 in -2..=30i64 {
            assert_eq!(
                derive_vaccination_status(Some(day(-d1)), None, day(0)).unwrap(),
                table(Some(d1), None),
                "dose1 {d1} days before"
            );
            for d2 in -2..=d1 {
                assert_eq!(
                    derive_vaccination_status(Some(day(-d1)), Some(day(-d2)), day(0)).unwrap(),
                    table(Some(d1), Some(d2)),
                    "dose1 {d1}, dose2 {d2} days before"
                );
            }
        }
    }

    #[test]
    fn bands() {
        assert_eq!(cci_band(5).unwrap(), "5+");
        assert_eq!(cci_band(0).unwrap(), "0");
        assert_eq!(cci_band(2).unwrap(), "1-2");
        assert_eq!(cci_band(4).unwrap(), "3-4");
        assert_eq!(age_band(85).unwrap(), "85+");
        assert_eq!(age_band(84).unwrap(), "75-84");
        assert_eq!(age_band(14).unwrap(), "0-14");
        assert_eq!(age_band(15).unwrap(), "15-24");
        assert_eq!(age_band(25).unwrap(), "25-44");
        assert!(age_band(-1).is_err());
        assert!(cci_band(-1).is_err());
    }

    #[test]
    fn month_labels() {
        assert_eq!(
            month_label(NaiveDate::from_ymd_opt(2020, 3, 31).unwrap()),
            "2020-03"
        );
    }
}
