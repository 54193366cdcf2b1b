//! Refits of the onset-month regression after moving the symptom onset of
//! fatal cases back by `c` days. Only the onset date (and so the onset-month
//! covariate) moves; follow-up still runs from admission.

use std::collections::BTreeSet;
use std::io::Write;

use chrono::Duration;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::{
    derive_records, factors, reclassify_palliative, OutcomeKind, PreprocessOptions, RawAdmission,
    SchemaSpec, TrustLoadIndex,
};
use crate::error::{Error, Result};
use crate::fine_gray::{fit_fine_gray, hazard_ratios, FgModel, HazardRatioTable};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftSpec {
    pub shifts: Vec<u32>,
    pub month_factor: String,
}

impl Default for ShiftSpec {
    fn default() -> Self {
        ShiftSpec {
            shifts: vec![0, 1, 2, 3, 4],
            month_factor: factors::ONSET_MONTH.to_string(),
        }
    }
}

impl ShiftSpec {
    pub fn validate(&self) -> Result<()> {
        let distinct: BTreeSet<u32> = self.shifts.iter().copied().collect();
        if distinct.len() != self.shifts.len() {
            return Err(Error::validation("shift list has duplicates"));
        }
        if !distinct.contains(&0) {
            return Err(Error::validation("shift list must include 0"));
        }
        Ok(())
    }
}

/// Whether the admission ends in death once palliative discharges are counted.
pub fn is_fatal(raw: &RawAdmission) -> Result<bool> {
    Ok(reclassify_palliative(raw)?.outcome_kind == OutcomeKind::DiedInHospital)
}

/// Moves the onset date of every fatal admission back by `c` days. Admissions
/// without an onset date are dropped; their number is returned alongside.
pub fn apply_phase_shift(cohort: &[RawAdmission], c: u32) -> Result<(Vec<RawAdmission>, usize)> {
    let mut out = Vec::with_capacity(cohort.len());
    let mut excluded = 0;
    for raw in cohort {
        let Some(onset) = raw.onset_date else {
            excluded += 1;
            continue;
        };
        let mut shifted = raw.clone();
        if c > 0 && is_fatal(raw)? {
            shifted.onset_date = Some(onset - Duration::days(i64::from(c)));
        }
        out.push(shifted);
    }
    Ok((out, excluded))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftFit {
    pub shift: u32,
    pub model: FgModel,
    pub hazard_ratios: HazardRatioTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityResult {
    /// Admissions left out for lack of an onset date.
    pub excluded: usize,
    /// One fit per shift, ascending.
    pub fits: Vec<ShiftFit>,
}

impl SensitivityResult {
    pub fn fit(&self, shift: u32) -> Option<&ShiftFit> {
        self.fits.iter().find(|f| f.shift == shift)
    }

    /// `shift_days,characteristic,level,hazard_ratio,ci_lower,ci_upper`
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "shift_days",
            "characteristic",
            "level",
            "hazard_ratio",
            "ci_lower",
            "ci_upper",
        ])?;
        for f in &self.fits {
            for r in &f.hazard_ratios.rows {
                w.write_record([
                    f.shift.to_string(),
                    r.characteristic.clone(),
                    r.level.clone(),
                    r.hazard_ratio.to_string(),
                    r.ci_lower.to_string(),
                    r.ci_upper.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Fits `schema` once per shift on the admissions that have an onset date.
/// The load index is built from the whole cohort. The schema is rebuilt from
/// each shifted cohort, so new onset months get their own levels.
pub fn run_sensitivity(
    cohort: &[RawAdmission],
    opts: &PreprocessOptions,
    schema: &SchemaSpec,
    spec: &ShiftSpec,
) -> Result<SensitivityResult> {
    spec.validate()?;
    if !schema.main_effects.contains(&spec.month_factor) {
        return Err(Error::validation(format!(
            "`{}` is not a main effect of the sensitivity model",
            spec.month_factor
        )));
    }
    let (subset, excluded) = apply_phase_shift(cohort, 0)?;
    if subset.is_empty() {
        return Err(Error::validation(format!(
            "no admissions with an onset date ({excluded} excluded)"
        )));
    }
    if excluded > 0 {
        log::warn!("{excluded} admissions without onset date left out of the sensitivity analysis");
    }
    let index = TrustLoadIndex::from_admissions(
        cohort
            .iter()
            .map(|r| (r.trust_id.as_str(), r.admission_date)),
    );
    let mut shifts = spec.shifts.clone();
    shifts.sort_unstable();
    let fits = shifts
        .par_iter()
        .map(|&c| {
            let one = || -> Result<ShiftFit> {
                let (shifted, _) = apply_phase_shift(&subset, c)?;
                let records = derive_records(&shifted, &index, opts)?;
                let model = fit_fine_gray(&records, &schema.build(&records)?)?;
                let hazard_ratios = hazard_ratios(&model);
                Ok(ShiftFit {
                    shift: c,
                    model,
                    hazard_ratios,
                })
            };
            one().map_err(|e| Error::Shift {
                shift: c,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SensitivityResult { excluded, fits })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn raw(id: &str, kind: OutcomeKind, onset: Option<(i32, u32, u32)>) -> RawAdmission {
        let admission = NaiveDate::from_ymd_opt(2020, 3, 6).unwrap();
        RawAdmission {
            subject_id: id.into(),
            admission_date: admission,
            specimen_date: Some(admission),
            onset_date: onset.map(|(y, m, d)| NaiveDate::from_ymd_opt(y, m, d).unwrap()),
            outcome_kind: kind,
            outcome_date: match kind {
                OutcomeKind::StillInHospital => None,
                _ => Some(admission + Duration::days(5)),
            },
            post_discharge_death_date: None,
            dose1_date: None,
            dose2_date: None,
            age_years: 70,
            sex: "Male".into(),
            ethnicity: "White".into(),
            region: "London".into(),
            imd_quintile: "3".into(),
            cci_score: 1,
            trust_id: "T001".into(),
        }
    }

    #[test]
    fn shift_moves_fatal_onsets_only() {
        let cohort = vec![
            raw("a", OutcomeKind::DiedInHospital, Some((2020, 3, 2))),
            raw("b", OutcomeKind::Discharged, Some((2020, 3, 2))),
            raw("c", OutcomeKind::DiedInHospital, None),
        ];
        let (shifted, excluded) = apply_phase_shift(&cohort, 2).unwrap();
        assert_eq!(excluded, 1);
        assert_eq!(shifted[0].onset_date, NaiveDate::from_ymd_opt(2020, 2, 29));
        assert_eq!(shifted[1], cohort[1]);
        let (same, _) = apply_phase_shift(&cohort, 0).unwrap();
        assert_eq!(same, cohort[..2]);
    }

    #[test]
    fn palliative_discharge_counts_as_fatal() {
        let mut r = raw("a", OutcomeKind::Discharged, Some((2020, 3, 2)));
        r.post_discharge_death_date = r.outcome_date.map(|d| d + Duration::days(10));
        let (shifted, _) = apply_phase_shift(&[r], 1).unwrap();
        assert_eq!(shifted[0].onset_date, NaiveDate::from_ymd_opt(2020, 3, 1));
    }

    #[test]
    fn spec_validation() {
        assert!(ShiftSpec::default().validate().is_ok());
        let missing_zero = ShiftSpec {
            shifts: vec![1, 2],
            ..Default::default()
        };
        assert!(missing_zero.validate().is_err());
        let dup = ShiftSpec {
            shifts: vec![0, 1, 1],
            ..Default::default()
        };
        assert!(dup.validate().is_err());
    }
}
