use std::collections::BTreeMap;
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Days either side of the admission day included in the load window.
const HALF_WINDOW: i64 = 3;

#[derive(Debug, Clone)]
struct TrustSeries {
    first: NaiveDate,
    // prefix[k] = admissions on days first .. first + k - 1
    prefix: Vec<u64>,
    busiest: u64,
}

impl TrustSeries {
    fn new(mut dates: Vec<NaiveDate>) -> Self {
        dates.sort_unstable();
        let first = dates[0];
        let last = *dates.last().unwrap();
        let len = (last - first).num_days() as usize + 1;
        let mut counts = vec![0u64; len];
        for d in &dates {
            counts[(*d - first).num_days() as usize] += 1;
        }
        let mut prefix = Vec::with_capacity(len + 1);
        prefix.push(0);
        for c in &counts {
            prefix.push(prefix.last().unwrap() + c);
        }
        let mut series = TrustSeries {
            first,
            prefix,
            busiest: 0,
        };
        series.busiest = (0..len as i64)
            .map(|k| series.window_at(k))
            .max()
            .unwrap_or(0);
        series
    }

    fn len(&self) -> i64 {
        self.prefix.len() as i64 - 1
    }

    // Window centred on day offset k, truncated to the observed series.
    fn window_at(&self, k: i64) -> u64 {
        let lo = (k - HALF_WINDOW).clamp(0, self.len());
        let hi = (k + HALF_WINDOW + 1).clamp(0, self.len());
        self.prefix[hi as usize] - self.prefix[lo as usize]
    }
}

/// Per-trust daily admission counts with the busiest 7-day window precomputed.
#[derive(Debug, Clone, Default)]
pub struct TrustLoadIndex {
    trusts: BTreeMap<String, TrustSeries>,
}

impl TrustLoadIndex {
    pub fn from_admissions<'a, I>(admissions: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, NaiveDate)>,
    {
        let mut by_trust: BTreeMap<String, Vec<NaiveDate>> = BTreeMap::new();
        for (trust, date) in admissions {
            by_trust.entry(trust.to_string()).or_default().push(date);
        }
        TrustLoadIndex {
            trusts: by_trust
                .into_iter()
                .map(|(k, v)| (k, TrustSeries::new(v)))
                .collect(),
        }
    }

    pub fn contains(&self, trust_id: &str) -> bool {
        self.trusts.contains_key(trust_id)
    }

    pub fn trust_count(&self) -> usize {
        self.trusts.len()
    }

    /// Admissions in the 7 days centred on `date`, or `None` for an unknown trust.
    pub fn window_total(&self, trust_id: &str, date: NaiveDate) -> Option<u64> {
        let series = self.trusts.get(trust_id)?;
        Some(series.window_at((date - series.first).num_days()))
    }

    pub fn busiest_window(&self, trust_id: &str) -> Option<u64> {
        self.trusts.get(trust_id).map(|s| s.busiest)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LoadBand {
    Upto20,
    Upto40,
    Upto60,
    Upto80,
    Upto90,
    Upto100,
}

impl LoadBand {
    pub fn label(self) -> &'static str {
        match self {
            LoadBand::Upto20 => "0-20",
            LoadBand::Upto40 => "20-40",
            LoadBand::Upto60 => "40-60",
            LoadBand::Upto80 => "60-80",
            LoadBand::Upto90 => "80-90",
            LoadBand::Upto100 => "90-100",
        }
    }

    /// Band of `numerator / denominator` in percent. The first band is closed,
    /// the rest are `(lo, hi]`. Integer comparison keeps the edges exact.
    pub fn classify(numerator: u64, denominator: u64) -> Self {
        let pct = |p: u64| numerator * 100 <= denominator * p;
        if pct(20) {
            LoadBand::Upto20
        } else if pct(40) {
            LoadBand::Upto40
        } else if pct(60) {
            LoadBand::Upto60
        } else if pct(80) {
            LoadBand::Upto80
        } else if pct(90) {
            LoadBand::Upto90
        } else {
            LoadBand::Upto100
        }
    }
}

impl fmt::Display for LoadBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HospitalLoad {
    pub fraction: f64,
    pub band: LoadBand,
}

pub fn compute_hospital_load(
    index: &TrustLoadIndex,
    trust_id: &str,
    admission: NaiveDate,
) -> Result<HospitalLoad> {
    let (window, busiest) = index
        .window_total(trust_id, admission)
        .zip(index.busiest_window(trust_id))
        .ok_or_else(|| Error::validation(format!("unknown trust `{trust_id}`")))?;
    if window == 0 {
        return Err(Error::validation(format!(
            "no admissions at trust `{trust_id}` within 3 days of {admission}"
        )));
    }
    Ok(HospitalLoad {
        fraction: window as f64 / busiest as f64,
        band: LoadBand::classify(window, busiest),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(offset: i64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 10, 1).unwrap() + chrono::Duration::days(offset)
    }

    fn index_from_counts(counts: &[u64]) -> TrustLoadIndex {
        let mut dates = Vec::new();
        for (k, &c) in counts.iter().enumerate() {
            for _ in 0..c {
                dates.push(d(k as i64));
            }
        }
        TrustLoadIndex::from_admissions(dates.iter().map(|&x| ("T1", x)))
    }

    // Brute-force sliding window with no padding at the series edges.
    fn brute_window(counts: &[u64], k: i64) -> u64 {
        (k - 3..=k + 3)
            .filter(|&j| j >= 0 && (j as usize) < counts.len())
            .map(|j| counts[j as usize])
            .sum()
    }

    #[test]
    fn crafted_series_matches_brute_force() {
        // 60-day series: busiest week sums to 100 around day 40, a 45-admission
        // week around day 10.
        let mut counts = vec![0u64; 60];
        for (k, c) in [(7, 5), (8, 5), (9, 10), (10, 5), (11, 10), (12, 5), (13, 5)] {
            counts[k] = c;
        }
        for k in 37..=43 {
            counts[k] = if k == 40 { 16 } else { 14 };
        }
        counts[2] = 1;
        counts[55] = 3;
        let busiest = (0..60).map(|k| brute_window(&counts, k)).max().unwrap();
        assert_eq!(busiest, 100);
        assert_eq!(brute_window(&counts, 10), 45);

        let index = index_from_counts(&counts);
        assert_eq!(index.busiest_window("T1"), Some(100));
        for k in 2..=55 {
            assert_eq!(
                index.window_total("T1", d(k)),
                Some(brute_window(&counts, k))
            );
        }
        let load = compute_hospital_load(&index, "T1", d(10)).unwrap();
        assert_eq!(load.fraction, 0.45);
        assert_eq!(load.band.label(), "40-60");
        let peak = compute_hospital_load(&index, "T1", d(40)).unwrap();
        assert_eq!((peak.fraction, peak.band), (1.0, LoadBand::Upto100));
    }

    #[test]
    fn single_admission_is_full_load() {
        let index = TrustLoadIndex::from_admissions([("T9", d(3))]);
        let load = compute_hospital_load(&index, "T9", d(3)).unwrap();
        assert_eq!(load.fraction, 1.0);
        assert_eq!(load.band.label(), "90-100");
    }

    #[test]
    fn unknown_trust_is_rejected() {
        let index = TrustLoadIndex::from_admissions([("T9", d(3))]);
        assert!(compute_hospital_load(&index, "T0", d(3)).is_err());
    }

    #[test]
    fn band_edges() {
        assert_eq!(LoadBand::classify(0, 10), LoadBand::Upto20);
        assert_eq!(LoadBand::classify(20, 100), LoadBand::Upto20);
        assert_eq!(LoadBand::classify(21, 100), LoadBand::Upto40);
        assert_eq!(LoadBand::classify(40, 100), LoadBand::Upto40);
        assert_eq!(LoadBand::classify(80, 100), LoadBand::Upto80);
        assert_eq!(LoadBand::classify(81, 100), LoadBand::Upto90);
        assert_eq!(LoadBand::classify(90, 100), LoadBand::Upto90);
        assert_eq!(LoadBand::classify(91, 100), LoadBand::Upto100);
    }
}
