use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::design::encode_profile;
use super::likelihood::{combine, FgData, LikelihoodEval};
use crate::cohort::{AnalysisRecord, CovariateSchema, EventCause};
use crate::error::{Error, FitDiagnostics, Result};
use crate::nonparametric::CifCurve;

pub const MAX_ITERATIONS: usize = 50;
pub const MAX_STEP_HALVINGS: usize = 10;
/// Any coefficient beyond this magnitude is taken as monotone likelihood.
pub const SEPARATION_BOUND: f64 = 15.0;
pub const LOGLIK_TOLERANCE: f64 = 1e-9;
pub const SCORE_TOLERANCE: f64 = 1e-6;

/// Breslow cumulative subdistribution hazard of one stratum, stored at its
/// death times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumBaseline {
    pub label: String,
    pub times: Vec<f64>,
    pub increments: Vec<f64>,
    pub cumulative: Vec<f64>,
}

impl StratumBaseline {
    pub fn value_at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&x| x <= t);
        k.checked_sub(1).map_or(0.0, |k| self.cumulative[k])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FgModel {
    pub columns: Vec<String>,
    pub beta: Vec<f64>,
    /// Inverse observed information, row-major rows.
    pub covariance: Vec<Vec<f64>>,
    pub schema: CovariateSchema,
    pub strata: Vec<StratumBaseline>,
    pub dropped_strata: Vec<String>,
    pub pruned_columns: Vec<String>,
    pub diagnostics: FitDiagnostics,
}

fn point_curve(times: Vec<f64>, values: Vec<f64>) -> CifCurve {
    CifCurve {
        cause: EventCause::Death,
        variance: vec![0.0; values.len()],
        ci_lower: values.clone(),
        ci_upper: values.clone(),
        times,
        values,
    }
}

fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn solve(information: &DMatrix<f64>, score: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(ch) = information.clone().cholesky() {
        return Ok(ch.solve(score));
    }
    information
        .clone()
        .lu()
        .solve(score)
        .filter(|d| d.iter().all(|x| x.is_finite()))
        .ok_or(Error::SingularInformation)
}

fn invert(information: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let inv = match information.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => information
            .clone()
            .try_inverse()
            .ok_or(Error::SingularInformation)?,
    };
    let sym = (&inv + inv.transpose()) * 0.5;
    if sym.iter().any(|x| !x.is_finite()) || (0..sym.nrows()).any(|i| sym[(i, i)] < 0.0) {
        return Err(Error::SingularInformation);
    }
    Ok(sym)
}

fn check_separation(beta: &DVector<f64>, columns: &[String]) -> Result<()> {
    match beta.iter().position(|b| b.abs() > SEPARATION_BOUND) {
        Some(k) => Err(Error::Separation {
            covariate: columns[k].clone(),
            value: beta[k],
        }),
        None => Ok(()),
    }
}

/// Newton-Raphson maximiser of the partial likelihood, from `beta = 0`.
/// Returns the optimum and its evaluation.
pub(crate) fn newton_raphson(
    data: &FgData,
) -> Result<(DVector<f64>, LikelihoodEval, FitDiagnostics)> {
    let p = data.ncols();
    let eval = |b: &DVector<f64>| -> Result<LikelihoodEval> {
        Ok(combine(p, &data.evaluate_strata(b.as_slice())?))
    };
    let mut beta = DVector::zeros(p);
    let mut current = eval(&beta)?;
    let mut diag = FitDiagnostics {
        iterations: 0,
        log_likelihood: current.value,
        max_abs_score: max_abs(&current.score),
        converged: p == 0 || max_abs(&current.score) < SCORE_TOLERANCE,
    };
    while !diag.converged {
        if diag.iterations == MAX_ITERATIONS {
            return Err(Error::NonConvergence(diag));
        }
        diag.iterations += 1;
        let direction = solve(&current.information, &current.score)?;
        let floor = current.value - 1e-12 * current.value.abs();
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_STEP_HALVINGS {
            let candidate = &beta + &direction * step;
            check_separation(&candidate, &data.columns)?;
            let ev = eval(&candidate)?;
            if ev.value >= floor {
                accepted = Some((candidate, ev));
                break;
            }
            step *= 0.5;
        }
        let Some((next_beta, next)) = accepted else {
            // no ascent direction left; the current point is as good as it gets
            diag.converged = diag.max_abs_score < SCORE_TOLERANCE;
            if diag.converged {
                break;
            }
            return Err(Error::NonConvergence(diag));
        };
        let change = (next.value - current.value).abs() / current.value.abs().max(1.0);
        beta = next_beta;
        current = next;
        diag.log_likelihood = current.value;
        diag.max_abs_score = max_abs(&current.score);
        diag.converged = change < LOGLIK_TOLERANCE && diag.max_abs_score < SCORE_TOLERANCE;
    }
    log::debug!(
        "Fine-Gray fit: {} iterations, log-likelihood {}",
        diag.iterations,
        diag.log_likelihood
    );
    Ok((beta, current, diag))
}

/// Stratified Fine-Gray regression for the death cause.
pub fn fit_fine_gray(records: &[AnalysisRecord], schema: &CovariateSchema) -> Result<FgModel> {
    let data = FgData::new(records, schema)?;
    fit_prepared(&data)
}

pub fn fit_prepared(data: &FgData) -> Result<FgModel> {
    let (beta, at_optimum, diagnostics) = newton_raphson(data)?;
    let covariance = invert(&at_optimum.information)?;
    let parts = data.evaluate_strata(beta.as_slice())?;
    let strata = data
        .strata
        .iter()
        .zip(&parts)
        .map(|(s, ev)| {
            let increments: Vec<f64> = s
                .death_count
                .iter()
                .zip(&ev.s0)
                .map(|(d, s0)| d / s0)
                .collect();
            let cumulative = increments
                .iter()
                .scan(0.0, |acc, d| {
                    *acc += d;
                    Some(*acc)
                })
                .collect();
            StratumBaseline {
                label: s.label.clone(),
                times: s.death_times.clone(),
                increments,
                cumulative,
            }
        })
        .collect();
    Ok(FgModel {
        columns: data.columns.clone(),
        beta: beta.iter().copied().collect(),
        covariance: covariance
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect(),
        schema: data.schema.clone(),
        strata,
        dropped_strata: data.dropped_strata.clone(),
        pruned_columns: data.pruned_columns.clone(),
        diagnostics,
    })
}

impl FgModel {
    pub fn standard_errors(&self) -> Vec<f64> {
        (0..self.beta.len())
            .map(|k| self.covariance[k][k].sqrt())
            .collect()
    }

    pub fn coefficient(&self, column: &str) -> Option<f64> {
        self.columns
            .iter()
            .position(|c| c == column)
            .map(|k| self.beta[k])
    }

    pub fn baseline(&self, stratum: &str) -> Result<&StratumBaseline> {
        self.strata
            .iter()
            .find(|s| s.label == stratum)
            .ok_or_else(|| Error::validation(format!("stratum `{stratum}` is not in the model")))
    }

    pub fn linear_predictor(&self, levels: &BTreeMap<String, String>) -> Result<f64> {
        let x = encode_profile(&self.schema, &self.columns, levels)?;
        Ok(x.iter().zip(&self.beta).map(|(x, b)| x * b).sum())
    }

    /// Predicted death CIF `1 - prod_{s <= t} (1 - dLambda_s exp(x'beta))` for a
    /// covariate profile in a stratum. Intervals are not computed and equal the
    /// point estimate.
    pub fn predict_cif(
        &self,
        levels: &BTreeMap<String, String>,
        stratum: &str,
    ) -> Result<CifCurve> {
        let base = self.baseline(stratum)?;
        let hr = self.linear_predictor(levels)?.exp();
        let mut surv = 1.0;
        let values = base
            .increments
            .iter()
            .map(|d| {
                surv *= 1.0 - (d * hr).min(1.0);
                1.0 - surv
            })
            .collect();
        Ok(point_curve(base.times.clone(), values))
    }

    /// Predicted death CIF in the continuous-time form `1 - exp(-Lambda(t) exp(x'beta))`.
    pub fn predict_cif_exponential(
        &self,
        levels: &BTreeMap<String, String>,
        stratum: &str,
    ) -> Result<CifCurve> {
        let base = self.baseline(stratum)?;
        let hr = self.linear_predictor(levels)?.exp();
        let values = base
            .cumulative
            .iter()
            .map(|l| -(-l * hr).exp_m1())
            .collect();
        Ok(point_curve(base.times.clone(), values))
    }

    /// Profile with every factor at its reference level.
    pub fn reference_profile(&self) -> BTreeMap<String, String> {
        self.schema
            .factors
            .iter()
            .map(|f| (f.name.clone(), f.reference.clone()))
            .collect()
    }
}
