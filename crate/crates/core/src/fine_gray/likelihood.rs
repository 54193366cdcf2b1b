use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::censoring_km::CensoringKm;
use super::design::DesignMatrix;
use crate::cohort::{AnalysisRecord, CovariateSchema, EventCause};
use crate::error::{Error, Result};
use crate::nonparametric::Observation;

/// Fewest censorings for a stratum to get its own censoring distribution.
pub const MIN_STRATUM_CENSORINGS: usize = 10;

/// Records of one stratum, sorted by time, with everything the weighted
/// partial likelihood needs that does not depend on `beta`.
#[derive(Debug, Clone)]
pub(crate) struct StratumData {
    pub label: String,
    p: usize,
    /// Row-major design, `n x p`.
    x: Vec<f64>,
    /// Nonzero design entries per row (CSR layout).
    nz_start: Vec<usize>,
    nz_col: Vec<usize>,
    weight: Vec<f64>,
    /// `1 / G(T_j-)` for discharges, 0 otherwise.
    ginv: Vec<f64>,
    /// Number of death times `<= T_j`.
    deaths_upto: Vec<usize>,
    death_rows: Vec<usize>,
    pub death_times: Vec<f64>,
    /// Weighted death count at each death time.
    pub death_count: Vec<f64>,
    /// `G(t-)` at each death time.
    death_g: Vec<f64>,
    /// First row with `T >= t_k`.
    first_at_risk: Vec<usize>,
}

/// Prepared data for the Fine-Gray partial likelihood.
#[derive(Debug, Clone)]
pub struct FgData {
    pub schema: CovariateSchema,
    pub columns: Vec<String>,
    pub pruned_columns: Vec<String>,
    /// Strata without deaths, excluded from the likelihood.
    pub dropped_strata: Vec<String>,
    pub(crate) strata: Vec<StratumData>,
}

/// Log partial likelihood with its exact gradient and negated Hessian.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodEval {
    pub value: f64,
    pub score: DVector<f64>,
    pub information: DMatrix<f64>,
}

pub(crate) struct StratumEval {
    value: f64,
    score: Vec<f64>,
    information: Vec<f64>,
    /// `sum_j w_j(t_k) exp(x_j'beta)` per death time.
    pub s0: Vec<f64>,
}

impl FgData {
    pub fn new(records: &[AnalysisRecord], schema: &CovariateSchema) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::validation("no records to fit"));
        }
        for r in records {
            if !(r.time_days.is_finite() && r.time_days >= 0.0) {
                return Err(Error::validation(format!(
                    "record {} has invalid time {}",
                    r.subject_id, r.time_days
                )));
            }
            if !(r.weight.is_finite() && r.weight > 0.0) {
                return Err(Error::validation(format!(
                    "record {} has invalid weight {}",
                    r.subject_id, r.weight
                )));
            }
            schema.check_levels(r)?;
        }
        let design = DesignMatrix::build(records, schema)?;
        let obs: Vec<Observation> = records.iter().map(Observation::from).collect();
        let pooled = CensoringKm::estimate(&obs);

        let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            groups.entry(schema.stratum_label(r)?).or_default().push(i);
        }

        let mut strata = Vec::new();
        let mut dropped = Vec::new();
        for (label, mut rows) in groups {
            if !rows.iter().any(|&i| records[i].event == EventCause::Death) {
                log::warn!("stratum `{label}` has no deaths; dropped from the fit");
                dropped.push(label);
                continue;
            }
            let censorings = rows
                .iter()
                .filter(|&&i| records[i].event == EventCause::Censored)
                .count();
            let g = if censorings >= MIN_STRATUM_CENSORINGS {
                let sub: Vec<Observation> = rows.iter().map(|&i| obs[i]).collect();
                CensoringKm::estimate(&sub)
            } else {
                pooled.clone()
            };
            rows.sort_by(|&a, &b| {
                obs[a]
                    .canonical_cmp(&obs[b])
                    .then_with(|| cmp_rows(design.row(a), design.row(b)))
            });
            strata.push(StratumData::build(label, &rows, &obs, &design, &g)?);
        }
        if strata.is_empty() {
            return Err(Error::NoEventsOfCause(EventCause::Death.name()));
        }
        Ok(FgData {
            schema: schema.clone(),
            columns: design.columns.clone(),
            pruned_columns: design.pruned.clone(),
            dropped_strata: dropped,
            strata,
        })
    }

    pub fn ncols(&self) -> usize {
        self.columns.len()
    }

    pub fn stratum_labels(&self) -> impl Iterator<Item = &str> {
        self.strata.iter().map(|s| s.label.as_str())
    }

    pub(crate) fn evaluate_strata(&self, beta: &[f64]) -> Result<Vec<StratumEval>> {
        self.strata.par_iter().map(|s| s.evaluate(beta)).collect()
    }
}

fn cmp_rows(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

impl StratumData {
    fn build(
        label: String,
        rows: &[usize],
        obs: &[Observation],
        design: &DesignMatrix,
        g: &CensoringKm,
    ) -> Result<Self> {
        let p = design.ncols();
        let n = rows.len();
        let mut s = StratumData {
            label,
            p,
            x: Vec::with_capacity(n * p),
            nz_start: Vec::with_capacity(n + 1),
            nz_col: Vec::new(),
            weight: Vec::with_capacity(n),
            ginv: Vec::with_capacity(n),
            deaths_upto: Vec::with_capacity(n),
            death_rows: Vec::new(),
            death_times: Vec::new(),
            death_count: Vec::new(),
            death_g: Vec::new(),
            first_at_risk: Vec::new(),
        };
        s.nz_start.push(0);
        for (j, &i) in rows.iter().enumerate() {
            let o = obs[i];
            let row = design.row(i);
            s.x.extend_from_slice(row);
            s.nz_col.extend((0..p).filter(|&c| row[c] != 0.0));
            s.nz_start.push(s.nz_col.len());
            s.weight.push(o.weight);
            s.ginv.push(match o.event {
                EventCause::Discharge => {
                    let gl = g.left(o.time);
                    if gl <= 0.0 {
                        return Err(Error::CensoringSupportExhausted { time: o.time });
                    }
                    1.0 / gl
                }
                _ => 0.0,
            });
            if o.event == EventCause::Death {
                s.death_rows.push(j);
                if s.death_times.last() == Some(&o.time) {
                    *s.death_count.last_mut().unwrap() += o.weight;
                } else {
                    s.death_times.push(o.time);
                    s.death_count.push(o.weight);
                    s.death_g.push(g.left(o.time));
                    s.first_at_risk
                        .push(rows.partition_point(|&r| obs[r].time < o.time));
                }
            }
        }
        for &i in rows {
            let t = obs[i].time;
            s.deaths_upto
                .push(s.death_times.partition_point(|&d| d <= t));
        }
        Ok(s)
    }

    fn row(&self, j: usize) -> &[f64] {
        &self.x[j * self.p..(j + 1) * self.p]
    }

    fn nonzeros(&self, j: usize) -> &[usize] {
        &self.nz_col[self.nz_start[j]..self.nz_start[j + 1]]
    }

    fn linear_predictor(&self, j: usize, beta: &[f64]) -> f64 {
        let row = self.row(j);
        self.nonzeros(j).iter().map(|&c| row[c] * beta[c]).sum()
    }

    pub(crate) fn evaluate(&self, beta: &[f64]) -> Result<StratumEval> {
        let p = self.p;
        let n = self.weight.len();
        let k_len = self.death_times.len();
        let eta: Vec<f64> = (0..n).map(|j| self.linear_predictor(j, beta)).collect();
        let risk: Vec<f64> = (0..n).map(|j| self.weight[j] * eta[j].exp()).collect();

        let mut value = 0.0;
        let mut score = vec![0.0; p];
        for &j in &self.death_rows {
            let w = self.weight[j];
            value += w * eta[j];
            let row = self.row(j);
            for &c in self.nonzeros(j) {
                score[c] += w * row[c];
            }
        }

        // subjects still in follow-up at each death time, by a reverse sweep
        let mut a0 = vec![0.0; k_len];
        let mut a1 = vec![0.0; k_len * p];
        let (mut acc0, mut acc1) = (0.0, vec![0.0; p]);
        let mut idx = n;
        for k in (0..k_len).rev() {
            while idx > self.first_at_risk[k] {
                idx -= 1;
                acc0 += risk[idx];
                let row = self.row(idx);
                for &c in self.nonzeros(idx) {
                    acc1[c] += risk[idx] * row[c];
                }
            }
            a0[k] = acc0;
            a1[k * p..(k + 1) * p].copy_from_slice(&acc1);
        }

        // earlier discharges, carried with weight G(t-) / G(T_j-)
        let mut information = vec![0.0; p * p];
        let mut s0 = Vec::with_capacity(k_len);
        let mut coef = Vec::with_capacity(k_len);
        let (mut b0, mut b1) = (0.0, vec![0.0; p]);
        let mut s1 = vec![0.0; p];
        let mut j = 0;
        for k in 0..k_len {
            while j < self.first_at_risk[k] {
                if self.ginv[j] > 0.0 {
                    let r = risk[j] * self.ginv[j];
                    b0 += r;
                    let row = self.row(j);
                    for &c in self.nonzeros(j) {
                        b1[c] += r * row[c];
                    }
                }
                j += 1;
            }
            let g = self.death_g[k];
            let d = self.death_count[k];
            let total = a0[k] + g * b0;
            if !(total.is_finite() && total > 0.0) {
                return Err(Error::NonFinite {
                    stratum: self.label.clone(),
                    time: self.death_times[k],
                });
            }
            for c in 0..p {
                s1[c] = a1[k * p + c] + g * b1[c];
            }
            value -= d * total.ln();
            let c_k = d / total;
            for a in 0..p {
                score[a] -= c_k * s1[a];
                let scale = c_k * s1[a] / total;
                for b in 0..=a {
                    information[a * p + b] -= scale * s1[b];
                }
            }
            s0.push(total);
            coef.push(c_k);
        }

        // sum_t (d_t / S0_t) w_j(t) for every row
        let mut upto = vec![0.0; k_len + 1];
        for k in 0..k_len {
            upto[k + 1] = upto[k] + coef[k];
        }
        let mut after = vec![0.0; k_len + 1];
        for k in (0..k_len).rev() {
            after[k] = after[k + 1] + coef[k] * self.death_g[k];
        }
        if p > 0 {
            #[allow(clippy::needless_range_loop)]
            for j in 0..n {
                let m = self.deaths_upto[j];
                let kappa = upto[m] + self.ginv[j] * after[m];
                let scale = risk[j] * kappa;
                if scale == 0.0 {
                    continue;
                }
                let row = self.row(j);
                let nz = self.nonzeros(j);
                for (ia, &a) in nz.iter().enumerate() {
                    let xa = scale * row[a];
                    for &b in &nz[..=ia] {
                        information[a * p + b] += xa * row[b];
                    }
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                information[b * p + a] = information[a * p + b];
            }
        }
        if !value.is_finite() {
            return Err(Error::NonFinite {
                stratum: self.label.clone(),
                time: f64::NAN,
            });
        }
        Ok(StratumEval {
            value,
            score,
            information,
            s0,
        })
    }
}

pub(crate) fn combine(p: usize, parts: &[StratumEval]) -> LikelihoodEval {
    let mut value = 0.0;
    let mut score = DVector::zeros(p);
    let mut information = DMatrix::zeros(p, p);
    for s in parts {
        value += s.value;
        for a in 0..p {
            score[a] += s.score[a];
            for b in 0..p {
                information[(a, b)] += s.information[a * p + b];
            }
        }
    }
    LikelihoodEval {
        value,
        score,
        information,
    }
}

/// Breslow-ties log partial likelihood of the subdistribution hazard, summed
/// over strata.
pub fn fg_log_partial_likelihood(beta: &[f64], data: &FgData) -> Result<LikelihoodEval> {
    if beta.len() != data.ncols() {
        return Err(Error::validation(format!(
            "beta has {} entries for {} design columns",
            beta.len(),
            data.ncols()
        )));
    }
    let parts = data.evaluate_strata(beta)?;
    Ok(combine(data.ncols(), &parts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::Factor;

    fn unadjusted() -> CovariateSchema {
        CovariateSchema::new(vec![], vec![]).unwrap()
    }

    #[test]
    fn one_death_three_at_risk() {
        let records = vec![
            AnalysisRecord::new("a", 1.0, EventCause::Death),
            AnalysisRecord::new("b", 2.0, EventCause::Discharge),
            AnalysisRecord::new("c", 3.0, EventCause::Censored),
        ];
        let data = FgData::new(&records, &unadjusted()).unwrap();
        let ev = fg_log_partial_likelihood(&[], &data).unwrap();
        assert!((ev.value + 3.0f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn score_at_zero_is_observed_minus_expected() {
        let sex = Factor::new("sex", vec!["F".into(), "M".into()], "F").unwrap();
        let schema = CovariateSchema::new(vec![sex], vec![]).unwrap();
        let mk = |id: &str, t: f64, e: EventCause, s: &str| {
            AnalysisRecord::new(id, t, e).with_covariate("sex", s)
        };
        let records = vec![
            mk("a", 1.0, EventCause::Death, "M"),
            mk("b", 2.0, EventCause::Death, "F"),
            mk("c", 3.0, EventCause::Death, "M"),
            mk("d", 4.0, EventCause::Discharge, "F"),
        ];
        let data = FgData::new(&records, &schema).unwrap();
        let ev = fg_log_partial_likelihood(&[0.0], &data).unwrap();
        // risk sets {a,b,c,d}, {b,c,d}, {c,d}: mean x 2/4, 1/3, 1/2
        let expected = (1.0 - 0.5) + (0.0 - 1.0 / 3.0) + (1.0 - 0.5);
        assert!((ev.score[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn stratum_without_deaths_is_dropped() {
        let schema = CovariateSchema::new(vec![], vec!["region".into()]).unwrap();
        let records = vec![
            AnalysisRecord::new("a", 1.0, EventCause::Death).with_covariate("region", "N"),
            AnalysisRecord::new("b", 2.0, EventCause::Discharge).with_covariate("region", "S"),
        ];
        let data = FgData::new(&records, &schema).unwrap();
        assert_eq!(data.dropped_strata, vec!["region=S"]);
        assert_eq!(data.stratum_labels().collect::<Vec<_>>(), vec!["region=N"]);
    }

    #[test]
    fn no_deaths_is_an_error() {
        let records = vec![AnalysisRecord::new("a", 1.0, EventCause::Discharge)];
        assert!(matches!(
            FgData::new(&records, &unadjusted()),
            Err(Error::NoEventsOfCause("death"))
        ));
    }
}
