use serde::{Deserialize, Serialize};

use super::EventTable;
use crate::cohort::EventCause;
use crate::error::{Error, Result};

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959963984540054;

/// Step-function cumulative incidence of one cause, with pointwise variance
/// and 95% bounds. Values hold on `[times[j], times[j+1])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CifCurve {
    pub cause: EventCause,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub variance: Vec<f64>,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
}

impl CifCurve {
    /// Index of the last grid time `<= t`.
    pub fn index_at(&self, t: f64) -> Option<usize> {
        let k = self.times.partition_point(|&x| x <= t);
        k.checked_sub(1)
    }

    pub fn value_at(&self, t: f64) -> f64 {
        self.index_at(t).map_or(0.0, |k| self.values[k])
    }

    /// Cumulative incidence at the end of follow-up.
    pub fn total(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl SurvivalCurve {
    pub fn value_at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&x| x <= t);
        k.checked_sub(1).map_or(1.0, |k| self.values[k])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AalenJohansen {
    pub death: CifCurve,
    pub discharge: CifCurve,
    pub survival: SurvivalCurve,
}

impl AalenJohansen {
    pub fn cif(&self, cause: EventCause) -> Option<&CifCurve> {
        match cause {
            EventCause::Death => Some(&self.death),
            EventCause::Discharge => Some(&self.discharge),
            EventCause::Censored => None,
        }
    }
}

/// Overall survival just after each grid time, and cumulative incidence per
/// cause: `S_j = S_{j-1} (1 - (d1_j + d2_j) / n_j)`, `C_kj = C_k,j-1 + S_{j-1} dk_j / n_j`.
pub(crate) fn incidence_and_survival(table: &EventTable) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let len = table.len();
    let mut survival = Vec::with_capacity(len);
    let mut death = Vec::with_capacity(len);
    let mut discharge = Vec::with_capacity(len);
    let (mut s, mut c1, mut c2) = (1.0f64, 0.0f64, 0.0f64);
    for j in 0..len {
        let n = table.at_risk[j];
        let (d1, d2) = (table.deaths[j], table.discharges[j]);
        c1 += s * d1 / n;
        c2 += s * d2 / n;
        s *= 1.0 - (d1 + d2) / n;
        survival.push(s);
        death.push(c1);
        discharge.push(c2);
    }
    (survival, death, discharge)
}

/// Aalen-type variance of the cumulative incidence of one cause.
///
/// `Var C(t) = sum_j (C(t) - C_j)^2 d_j / ((n_j - 1)(n_j - d_j))
///           + sum_j S_{j-1}^2 dk_j (n_j - dk_j) / (n_j^2 (n_j - 1))
///           - 2 sum_j (C(t) - C_j) S_{j-1} dk_j (n_j - dk_j) / (n_j (n_j - d_j)(n_j - 1))`
///
/// over grid times `t_j <= t`. Terms with a vanishing denominator are dropped.
/// The squares are expanded so the whole curve costs one pass.
fn aalen_variance(
    table: &EventTable,
    cause_values: &[f64],
    survival: &[f64],
    cause: EventCause,
) -> Vec<f64> {
    let dk_all = table.events_of(cause);
    let mut out = Vec::with_capacity(table.len());
    let (mut sa, mut saf, mut saf2, mut sb, mut sc, mut scf) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    let mut s_prev = 1.0;
    for j in 0..table.len() {
        let n = table.at_risk[j];
        let d = table.deaths[j] + table.discharges[j];
        let dk = dk_all[j];
        let f = cause_values[j];
        let n1 = n - 1.0;
        let nd = n - d;
        if n1 > 0.0 && nd > 0.0 {
            let a = d / (n1 * nd);
            sa += a;
            saf += a * f;
            saf2 += a * f * f;
            let c = s_prev * dk * (n - dk) / (n * nd * n1);
            sc += c;
            scf += c * f;
        }
        if n1 > 0.0 {
            sb += s_prev * s_prev * dk * (n - dk) / (n * n * n1);
        }
        let var = f * f * sa - 2.0 * f * saf + saf2 + sb - 2.0 * (f * sc - scf);
        out.push(var.max(0.0));
        s_prev = survival[j];
    }
    out
}

/// 95% interval on the complementary log-log scale `log(-log(1 - C))`.
pub(crate) fn cloglog_interval(value: f64, variance: f64) -> (f64, f64) {
    if value <= 0.0 {
        return (0.0, 0.0);
    }
    if value >= 1.0 {
        return (1.0, 1.0);
    }
    let se = variance.sqrt();
    let neg_log = -(-value).ln_1p();
    let eta = neg_log.ln();
    let se_eta = se / ((1.0 - value) * neg_log);
    let back = |x: f64| -(-x.exp()).exp_m1();
    let lo = back(eta - Z_95 * se_eta).clamp(0.0, 1.0).min(value);
    let hi = back(eta + Z_95 * se_eta).clamp(0.0, 1.0).max(value);
    (lo, hi)
}

fn curve(table: &EventTable, cause: EventCause, values: Vec<f64>, survival: &[f64]) -> CifCurve {
    let variance = aalen_variance(table, &values, survival, cause);
    let (ci_lower, ci_upper) = values
        .iter()
        .zip(&variance)
        .map(|(&v, &var)| cloglog_interval(v, var))
        .unzip();
    CifCurve {
        cause,
        times: table.times.clone(),
        values,
        variance,
        ci_lower,
        ci_upper,
    }
}

pub fn aalen_johansen(table: &EventTable) -> AalenJohansen {
    let (survival, death, discharge) = incidence_and_survival(table);
    AalenJohansen {
        death: curve(table, EventCause::Death, death, &survival),
        discharge: curve(table, EventCause::Discharge, discharge, &survival),
        survival: SurvivalCurve {
            times: table.times.clone(),
            values: survival,
        },
    }
}

/// Cumulative incidence at a horizon with its pointwise interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskAtHorizon {
    pub horizon: f64,
    pub risk: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

impl RiskAtHorizon {
    /// `40.3% (39.4 - 41.3%)`
    pub fn display_percent(&self) -> String {
        format!(
            "{:.1}% ({:.1} - {:.1}%)",
            100.0 * self.risk,
            100.0 * self.ci_lower,
            100.0 * self.ci_upper
        )
    }
}

/// Fatality risk: step-function value of the death CIF at `horizon`.
pub fn hfr_at_horizon(cif: &CifCurve, horizon: f64) -> Result<RiskAtHorizon> {
    if !(horizon.is_finite() && horizon >= 0.0) {
        return Err(Error::validation(format!("invalid horizon {horizon}")));
    }
    Ok(match cif.index_at(horizon) {
        None => RiskAtHorizon {
            horizon,
            risk: 0.0,
            ci_lower: 0.0,
            ci_upper: 0.0,
        },
        Some(k) => RiskAtHorizon {
            horizon,
            risk: cif.values[k],
            ci_lower: cif.ci_lower[k],
            ci_upper: cif.ci_upper[k],
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonparametric::Observation;
    use EventCause::*;

    fn fit(obs: &[(f64, EventCause)]) -> AalenJohansen {
        let obs: Vec<_> = obs.iter().map(|&(t, e)| Observation::new(t, e)).collect();
        aalen_johansen(&EventTable::from_observations(&obs).unwrap())
    }

    #[test]
    fn three_subject_hand_computation() {
        let aj = fit(&[(1.0, Death), (2.0, Discharge), (3.0, Censored)]);
        assert_eq!(aj.death.values, vec![1.0 / 3.0, 1.0 / 3.0]);
        assert!((aj.discharge.total() - 1.0 / 3.0).abs() < 1e-15);
        assert!((aj.survival.values[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn single_cause_is_km_complement() {
        let aj = fit(&[
            (1.0, Death),
            (2.0, Censored),
            (3.0, Death),
            (3.0, Death),
            (5.0, Death),
            (6.0, Censored),
        ]);
        // KM: 5/6 at 1, 4 at risk at 3 with 2 deaths, 2 at risk at 5 with 1 death
        let km = [5.0 / 6.0, 5.0 / 12.0, 5.0 / 24.0];
        for (c, s) in aj.death.values.iter().zip(km) {
            assert!((c - (1.0 - s)).abs() < 1e-15);
        }
        assert!(aj.discharge.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn no_events() {
        let aj = fit(&[(1.0, Censored), (4.0, Censored)]);
        assert!(aj.death.values.is_empty());
        assert_eq!(aj.death.value_at(10.0), 0.0);
        assert_eq!(aj.survival.value_at(10.0), 1.0);
    }

    #[test]
    fn variance_at_first_time_matches_closed_form() {
        // n = 10, one death at t1: Var = d(n-d)/(n^2 (n-1))
        let mut obs = vec![(1.0, Death)];
        obs.extend((0..9).map(|k| (2.0 + k as f64, Discharge)));
        let aj = fit(&obs);
        let expected = 1.0 * 9.0 / (100.0 * 9.0);
        assert!((aj.death.variance[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn horizon_lookup() {
        let aj = fit(&[
            (2.0, Death),
            (5.0, Death),
            (7.0, Discharge),
            (9.0, Censored),
        ]);
        let r = hfr_at_horizon(&aj.death, 1.0).unwrap();
        assert_eq!(r.risk, 0.0);
        assert_eq!(
            hfr_at_horizon(&aj.death, 6.5).unwrap().risk,
            aj.death.values[1]
        );
        assert_eq!(
            hfr_at_horizon(&aj.death, 5.0).unwrap().risk,
            aj.death.values[1]
        );
        assert!(hfr_at_horizon(&aj.death, -1.0).is_err());
    }

    #[test]
    fn percent_display() {
        let r = RiskAtHorizon {
            horizon: 90.0,
            risk: 0.40312,
            ci_lower: 0.39391,
            ci_upper: 0.41349,
        };
        assert_eq!(r.display_percent(), "40.3% (39.4 - 41.3%)");
    }

    #[test]
    fn interval_brackets_value() {
        for &(v, var) in &[(0.01, 1e-4), (0.5, 0.01), (0.99, 1e-3), (0.3, 0.0)] {
            let (lo, hi) = cloglog_interval(v, var);
            assert!(0.0 <= lo && lo <= v && v <= hi && hi <= 1.0);
        }
    }
}
