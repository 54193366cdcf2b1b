//! Seeded synthetic cohorts with a known subdistribution hazard for death.
//!
//! Death has cumulative incidence `F1(t|x) = 1 - (1 - p (1 - e^{-t}))^{exp(x'b)}`
//! in unit time, so the true subdistribution log hazard ratios are exactly
//! `beta_death`. Given discharge, its time is exponential with rate
//! `exp(x'beta_discharge)`. Unit times are multiplied by `day_scale` and
//! rendered onto a calendar.
//!
//! Subject `i` draws from stream `i` of [`StreamFamily`] with the cohort
//! domain, so the output is the same however subjects are split across
//! workers.

use std::collections::BTreeMap;
use std::io::Write;

use chrono::{Duration, NaiveDate};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::{
    age_band, cci_band, factors, AnalysisRecord, EventCause, OutcomeKind, RawAdmission,
    VaccinationStatus,
};
use crate::error::{Error, Result};
use crate::rng::{Domain, StreamFamily};

/// Days between the end of the admission window and data extraction when
/// there is no administrative censoring.
pub const EXTRACTION_LAG_DAYS: i64 = 120;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSpec {
    pub label: String,
    pub probability: f64,
}

/// A categorical covariate; the first level is the reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSpec {
    pub name: String,
    pub levels: Vec<LevelSpec>,
}

/// A share of admissions concentrated around one day of the window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadPeak {
    pub center_offset_days: i64,
    pub width_days: i64,
    pub fraction: f64,
}

fn default_day_scale() -> f64 {
    10.0
}

fn default_trust_count() -> usize {
    5
}

fn default_admission_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 3, 1).unwrap()
}

fn default_admission_days() -> i64 {
    120
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub n: usize,
    pub seed: u64,
    pub p_mix: f64,
    /// One coefficient per non-reference level, factors in declared order.
    pub beta_death: Vec<f64>,
    pub beta_discharge: Vec<f64>,
    /// Upper bound of the uniform censoring time in days; 0 disables it.
    #[serde(default)]
    pub censor_max: f64,
    #[serde(default = "default_day_scale")]
    pub day_scale: f64,
    #[serde(default)]
    pub factors: Vec<FactorSpec>,
    #[serde(default = "default_trust_count")]
    pub trust_count: usize,
    #[serde(default = "default_admission_start")]
    pub admission_start: NaiveDate,
    #[serde(default = "default_admission_days")]
    pub admission_days: i64,
    #[serde(default)]
    pub load_peaks: Vec<LoadPeak>,
    /// Symptom onset this many days before admission; no onset when absent.
    #[serde(default)]
    pub onset_lag_days: Option<i64>,
}

const RENDERED_FACTORS: [&str; 7] = [
    factors::AGE_BAND,
    factors::SEX,
    factors::ETHNICITY,
    factors::REGION,
    factors::IMD_QUINTILE,
    factors::CCI_BAND,
    factors::VACCINATION_STATUS,
];

fn level_spec(label: &str, probability: f64) -> LevelSpec {
    LevelSpec {
        label: label.to_string(),
        probability,
    }
}

fn factor_spec(name: &str, levels: &[(&str, f64)]) -> FactorSpec {
    FactorSpec {
        name: name.to_string(),
        levels: levels.iter().map(|&(l, p)| level_spec(l, p)).collect(),
    }
}

impl CohortSpec {
    /// A cohort with every rendered factor, modest covariate effects and
    /// no censoring besides the follow-up horizon.
    pub fn full_schema(n: usize, seed: u64) -> Self {
        let factors = vec![
            factor_spec(
                factors::AGE_BAND,
                &[
                    ("45-64", 0.3),
                    ("0-14", 0.02),
                    ("15-24", 0.03),
                    ("25-44", 0.1),
                    ("65-74", 0.2),
                    ("75-84", 0.2),
                    ("85+", 0.15),
                ],
            ),
            factor_spec(factors::SEX, &[("Female", 0.48), ("Male", 0.52)]),
            factor_spec(
                factors::ETHNICITY,
                &[
                    ("White", 0.8),
                    ("Asian", 0.1),
                    ("Black", 0.05),
                    ("Other", 0.05),
                ],
            ),
            factor_spec(
                factors::REGION,
                &[
                    ("London", 0.2),
                    ("East of England", 0.1),
                    ("Midlands", 0.2),
                    ("North East and Yorkshire", 0.15),
                    ("North West", 0.15),
                    ("South East", 0.1),
                    ("South West", 0.1),
                ],
            ),
            factor_spec(
                factors::IMD_QUINTILE,
                &[
                    ("5", 0.16),
                    ("1", 0.24),
                    ("2", 0.22),
                    ("3", 0.2),
                    ("4", 0.18),
                ],
            ),
            factor_spec(
                factors::CCI_BAND,
                &[("0", 0.4), ("1-2", 0.3), ("3-4", 0.2), ("5+", 0.1)],
            ),
            factor_spec(
                factors::VACCINATION_STATUS,
                &[
                    (VaccinationStatus::Unvaccinated.label(), 0.7),
                    (VaccinationStatus::FirstDoseUnder21d.label(), 0.1),
                    (VaccinationStatus::FirstDose21dPlus.label(), 0.1),
                    (VaccinationStatus::SecondDose14dPlus.label(), 0.1),
                ],
            ),
        ];
        let beta_death = vec![
            -2.0, -1.5, -0.8, 0.5, 0.9, 1.2, // age
            0.3, // sex
            0.1, 0.05, 0.0, // ethnicity
            0.0, 0.05, 0.0, -0.05, 0.0, 0.0, // region
            0.2, 0.15, 0.1, 0.05, // imd
            0.2, 0.4, 0.6, // cci
            -0.1, -0.3, -0.6, // vaccination
        ];
        let beta_discharge = vec![0.0; beta_death.len()];
        CohortSpec {
            n,
            seed,
            p_mix: 0.2,
            beta_death,
            beta_discharge,
            censor_max: 0.0,
            day_scale: default_day_scale(),
            factors,
            trust_count: 20,
            admission_start: default_admission_start(),
            admission_days: 180,
            load_peaks: vec![LoadPeak {
                center_offset_days: 40,
                width_days: 20,
                fraction: 0.3,
            }],
            onset_lag_days: Some(5),
        }
    }

    /// Number of dummy columns implied by the factors.
    pub fn contrast_count(&self) -> usize {
        self.factors
            .iter()
            .map(|f| f.levels.len().saturating_sub(1))
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::validation(msg));
        if self.n == 0 {
            return bad("cohort size must be at least 1".into());
        }
        if !(self.p_mix > 0.0 && self.p_mix < 1.0) {
            return bad(format!("p_mix {} is not in (0, 1)", self.p_mix));
        }
        let q = self.contrast_count();
        if self.beta_death.len() != q || self.beta_discharge.len() != q {
            return bad(format!(
                "expected {q} coefficients per cause, got {} and {}",
                self.beta_death.len(),
                self.beta_discharge.len()
            ));
        }
        if self
            .beta_death
            .iter()
            .chain(&self.beta_discharge)
            .any(|b| !b.is_finite())
        {
            return bad("coefficients must be finite".into());
        }
        if !(self.censor_max.is_finite() && self.censor_max >= 0.0) {
            return bad(format!("invalid censor_max {}", self.censor_max));
        }
        if !(self.day_scale.is_finite() && self.day_scale > 0.0) {
            return bad(format!("invalid day_scale {}", self.day_scale));
        }
        if self.trust_count == 0 {
            return bad("trust_count must be at least 1".into());
        }
        if self.admission_days < 1 {
            return bad("admission window must span at least one day".into());
        }
        if self.onset_lag_days.is_some_and(|l| l < 0) {
            return bad("onset lag must be non-negative".into());
        }
        let mut peak_mass = 0.0;
        for p in &self.load_peaks {
            if !(0.0..=1.0).contains(&p.fraction) || p.width_days < 1 {
                return bad(format!("invalid load peak {p:?}"));
            }
            peak_mass += p.fraction;
        }
        if peak_mass > 1.0 + 1e-12 {
            return bad("load peak fractions sum above 1".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for f in &self.factors {
            if !RENDERED_FACTORS.contains(&f.name.as_str()) {
                return bad(format!(
                    "factor `{}` cannot be rendered onto an admission",
                    f.name
                ));
            }
            if !seen.insert(f.name.as_str()) {
                return bad(format!("factor `{}` declared twice", f.name));
            }
            if f.levels.is_empty() {
                return bad(format!("factor `{}` has no levels", f.name));
            }
            let total: f64 = f.levels.iter().map(|l| l.probability).sum();
            if f.levels
                .iter()
                .any(|l| l.probability.is_nan() || l.probability < 0.0)
                || (total - 1.0).abs() > 1e-9
            {
                return bad(format!("level probabilities of `{}` must sum to 1", f.name));
            }
            for l in &f.levels {
                render_check(&f.name, &l.label)?;
            }
        }
        Ok(())
    }
}

fn render_check(factor: &str, label: &str) -> Result<()> {
    let ok = match factor {
        factors::AGE_BAND => age_range(label).is_some(),
        factors::CCI_BAND => cci_range(label).is_some(),
        factors::VACCINATION_STATUS => VaccinationStatus::from_label(label).is_some(),
        _ => !label.trim().is_empty() && label.trim() == label,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::validation(format!(
            "`{label}` is not a valid level of `{factor}`"
        )))
    }
}

fn age_range(label: &str) -> Option<(i32, i32)> {
    let range = match label {
        "85+" => (85, 99),
        other => {
            let (lo, hi) = other.split_once('-')?;
            (lo.parse().ok()?, hi.parse().ok()?)
        }
    };
    (age_band(range.0).ok()? == label && age_band(range.1).ok()? == label).then_some(range)
}

fn cci_range(label: &str) -> Option<(i32, i32)> {
    let range = match label {
        "5+" => (5, 8),
        "0" => (0, 0),
        other => {
            let (lo, hi) = other.split_once('-')?;
            (lo.parse().ok()?, hi.parse().ok()?)
        }
    };
    (cci_band(range.0).ok()? == label && cci_band(range.1).ok()? == label).then_some(range)
}

/// Ground truth for one generated subject. Times are in days from admission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub subject_id: String,
    pub true_time: f64,
    pub true_cause: EventCause,
    /// `None` when the subject is not subject to uniform censoring.
    pub censor_time: Option<f64>,
    pub covariates: BTreeMap<String, String>,
    pub trust_id: String,
    pub admission_date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedCohort {
    pub admissions: Vec<RawAdmission>,
    pub truth: Vec<TruthRecord>,
    pub extraction_date: NaiveDate,
}

/// Draws `(unit time, cause)` from the mixture given the two linear predictors.
pub fn draw_event<R: Rng>(
    rng: &mut R,
    eta_death: f64,
    eta_discharge: f64,
    p_mix: f64,
) -> (f64, EventCause) {
    let hr = eta_death.exp();
    let p1 = -(hr * (-p_mix).ln_1p()).exp_m1();
    let u: f64 = rng.gen();
    let v: f64 = rng.gen();
    if u < p1 {
        let inner = (-v * p1).ln_1p() / hr;
        let q = -inner.exp_m1() / p_mix;
        (-(-q).ln_1p(), EventCause::Death)
    } else {
        (-(-v).ln_1p() / eta_discharge.exp(), EventCause::Discharge)
    }
}

/// Draws an event for the dummy-coded covariate vector `x`.
pub fn sample_competing_event<R: Rng>(
    rng: &mut R,
    x: &[f64],
    spec: &CohortSpec,
) -> (f64, EventCause) {
    let dot = |b: &[f64]| x.iter().zip(b).map(|(x, b)| x * b).sum::<f64>();
    let (t, cause) = draw_event(
        rng,
        dot(&spec.beta_death),
        dot(&spec.beta_discharge),
        spec.p_mix,
    );
    (t * spec.day_scale, cause)
}

/// Closed-form death CIF `F1(t | x)` at unit time `t` for linear predictor `eta`.
pub fn death_cif(t: f64, eta: f64, p_mix: f64) -> f64 {
    let inner = (-p_mix * -(-t).exp_m1()).ln_1p();
    -(eta.exp() * inner).exp_m1()
}

/// Unit time at which the baseline death CIF reaches `level < p_mix`.
pub fn death_cif_inverse(level: f64, p_mix: f64) -> f64 {
    let q = level / p_mix;
    -(-q).ln_1p()
}

fn pick<'a, R: Rng>(rng: &mut R, levels: &'a [LevelSpec]) -> (usize, &'a str) {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (k, l) in levels.iter().enumerate() {
        acc += l.probability;
        if u < acc {
            return (k, &l.label);
        }
    }
    let k = levels
        .iter()
        .rposition(|l| l.probability > 0.0)
        .unwrap_or(0);
    (k, &levels[k].label)
}

fn days(n: i64) -> Duration {
    Duration::days(n)
}

struct Subject {
    admission: RawAdmission,
    truth: TruthRecord,
}

fn admission_offset<R: Rng>(rng: &mut R, spec: &CohortSpec) -> i64 {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for p in &spec.load_peaks {
        acc += p.fraction;
        if u < acc {
            let lo = p.center_offset_days - p.width_days / 2;
            let offset = lo + rng.gen_range(0..p.width_days);
            return offset.clamp(0, spec.admission_days - 1);
        }
    }
    rng.gen_range(0..spec.admission_days)
}

fn vaccination_doses<R: Rng>(
    rng: &mut R,
    status: VaccinationStatus,
    admission: NaiveDate,
) -> (Option<NaiveDate>, Option<NaiveDate>) {
    match status {
        VaccinationStatus::Unvaccinated => (None, None),
        VaccinationStatus::FirstDoseUnder21d => {
            (Some(admission - days(rng.gen_range(0..21))), None)
        }
        VaccinationStatus::FirstDose21dPlus => {
            (Some(admission - days(rng.gen_range(21..90))), None)
        }
        VaccinationStatus::SecondDose14dPlus => {
            let second = rng.gen_range(14..120);
            let first = second + rng.gen_range(21..84);
            (
                Some(admission - days(first)),
                Some(admission - days(second)),
            )
        }
    }
}

fn generate_subject(
    spec: &CohortSpec,
    family: &StreamFamily,
    i: usize,
    extraction: NaiveDate,
) -> Subject {
    let mut rng = family.stream(i as u64);
    let mut x = Vec::with_capacity(spec.contrast_count());
    let mut covariates = BTreeMap::new();
    for f in &spec.factors {
        let (k, label) = pick(&mut rng, &f.levels);
        x.extend((1..f.levels.len()).map(|j| if j == k { 1.0 } else { 0.0 }));
        covariates.insert(f.name.clone(), label.to_string());
    }
    let (true_time, true_cause) = sample_competing_event(&mut rng, &x, spec);

    let (admission_date, censor_time) = if spec.censor_max > 0.0 {
        let c: f64 = rng.gen::<f64>() * spec.censor_max;
        (extraction - days(c.floor() as i64), Some(c))
    } else {
        (
            spec.admission_start + days(admission_offset(&mut rng, spec)),
            None,
        )
    };
    let follow_up = (extraction - admission_date).num_days();
    let event_day = true_time.floor();
    let observed = censor_time.is_none_or(|c| true_time < c) && event_day <= follow_up as f64;
    let (outcome_kind, outcome_date) = if observed {
        let kind = match true_cause {
            EventCause::Death => OutcomeKind::DiedInHospital,
            _ => OutcomeKind::Discharged,
        };
        (kind, Some(admission_date + days(event_day as i64)))
    } else {
        (OutcomeKind::StillInHospital, None)
    };

    let level = |name: &str| covariates.get(name).map(String::as_str);
    let age_years = match level(factors::AGE_BAND).and_then(age_range) {
        Some((lo, hi)) => rng.gen_range(lo..=hi),
        None => 55,
    };
    let cci_score = match level(factors::CCI_BAND).and_then(cci_range) {
        Some((lo, hi)) => rng.gen_range(lo..=hi),
        None => 0,
    };
    let status = level(factors::VACCINATION_STATUS)
        .and_then(VaccinationStatus::from_label)
        .unwrap_or(VaccinationStatus::Unvaccinated);
    let (dose1_date, dose2_date) = vaccination_doses(&mut rng, status, admission_date);
    let text = |name: &str, default: &str| level(name).unwrap_or(default).to_string();

    let subject_id = format!("S{:07}", i + 1);
    let trust_id = format!("T{:03}", i % spec.trust_count + 1);
    let admission = RawAdmission {
        subject_id: subject_id.clone(),
        admission_date,
        specimen_date: Some(admission_date),
        onset_date: spec.onset_lag_days.map(|lag| admission_date - days(lag)),
        outcome_kind,
        outcome_date,
        post_discharge_death_date: None,
        dose1_date,
        dose2_date,
        age_years,
        sex: text(factors::SEX, "Female"),
        ethnicity: text(factors::ETHNICITY, "White"),
        region: text(factors::REGION, "London"),
        imd_quintile: text(factors::IMD_QUINTILE, "3"),
        cci_score,
        trust_id: trust_id.clone(),
    };
    Subject {
        admission,
        truth: TruthRecord {
            subject_id,
            true_time,
            true_cause,
            censor_time,
            covariates,
            trust_id,
            admission_date,
        },
    }
}

fn extraction_date(spec: &CohortSpec) -> NaiveDate {
    if spec.censor_max > 0.0 {
        spec.admission_start + days(spec.censor_max.ceil() as i64)
    } else {
        spec.admission_start + days(spec.admission_days + EXTRACTION_LAG_DAYS)
    }
}

/// Generates admissions and their ground truth.
///
/// With `censor_max > 0` censoring is administrative: subject `i` has censoring
/// time `C ~ U(0, censor_max)` and is admitted `floor(C)` days before the
/// common extraction date, so those with `C <= T` are still in hospital at
/// extraction. Otherwise admissions are spread over the configured window and
/// extraction falls well after the follow-up horizon. Event dates are
/// `admission + floor(T)`.
pub fn generate_cohort(spec: &CohortSpec) -> Result<GeneratedCohort> {
    spec.validate()?;
    let family = StreamFamily::new(spec.seed, Domain::Cohort);
    let extraction = extraction_date(spec);
    let subjects: Vec<Subject> = (0..spec.n)
        .into_par_iter()
        .map(|i| generate_subject(spec, &family, i, extraction))
        .collect();
    let (admissions, truth) = subjects.into_iter().map(|s| (s.admission, s.truth)).unzip();
    Ok(GeneratedCohort {
        admissions,
        truth,
        extraction_date: extraction,
    })
}

/// Continuous-time records `min(T, C, horizon)` for testing estimators without
/// calendar rounding. Covariates are the generating factor levels.
pub fn truth_to_analysis(truth: &[TruthRecord], horizon_days: f64) -> Vec<AnalysisRecord> {
    truth
        .iter()
        .map(|t| {
            let censor = t.censor_time.unwrap_or(f64::INFINITY);
            let (time, event) = if t.true_time < censor && t.true_time <= horizon_days {
                (t.true_time, t.true_cause)
            } else {
                (censor.min(horizon_days), EventCause::Censored)
            };
            let mut r = AnalysisRecord::new(t.subject_id.clone(), time, event);
            r.covariates = t.covariates.clone();
            r
        })
        .collect()
}

/// Writes `subject_id,true_time,true_cause,censor_time,<factors...>`.
pub fn write_truth<W: Write>(writer: W, spec: &CohortSpec, truth: &[TruthRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["subject_id", "true_time", "true_cause", "censor_time"];
    header.extend(spec.factors.iter().map(|f| f.name.as_str()));
    w.write_record(&header)?;
    for t in truth {
        let mut row = vec![
            t.subject_id.clone(),
            t.true_time.to_string(),
            t.true_cause.code().to_string(),
            t.censor_time.map(|c| c.to_string()).unwrap_or_default(),
        ];
        row.extend(
            spec.factors
                .iter()
                .map(|f| t.covariates.get(&f.name).cloned().unwrap_or_default()),
        );
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
