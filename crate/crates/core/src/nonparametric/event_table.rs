use crate::cohort::{AnalysisRecord, EventCause};
use crate::error::{Error, Result};

/// A single weighted observation: follow-up time, cause, case weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub time: f64,
    pub event: EventCause,
    pub weight: f64,
}

impl Observation {
    pub fn new(time: f64, event: EventCause) -> Self {
        Observation {
            time,
            event,
            weight: 1.0,
        }
    }

    pub(crate) fn canonical_cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.event.cmp(&other.event))
            .then(self.weight.total_cmp(&other.weight))
    }
}

impl From<&AnalysisRecord> for Observation {
    fn from(r: &AnalysisRecord) -> Self {
        Observation {
            time: r.time_days,
            event: r.event,
            weight: r.weight,
        }
    }
}

/// Counts at each distinct time with at least one death or discharge.
///
/// `censored[j]` holds the censorings in `[times[j], times[j+1])` (the last
/// entry takes the tail), so `at_risk[j+1] = at_risk[j] - deaths[j] -
/// discharges[j] - censored[j]`. Censorings tied with events are at risk
/// through the event time.
#[derive(Debug, Clone, PartialEq)]
pub struct EventTable {
    pub times: Vec<f64>,
    pub at_risk: Vec<f64>,
    pub deaths: Vec<f64>,
    pub discharges: Vec<f64>,
    pub censored: Vec<f64>,
    /// Weight censored before the first event time.
    pub censored_before_first: f64,
    pub total: f64,
    /// Largest observed time, event or censoring.
    pub last_time: f64,
}

impl EventTable {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn events_of(&self, cause: EventCause) -> &[f64] {
        match cause {
            EventCause::Death => &self.deaths,
            EventCause::Discharge => &self.discharges,
            EventCause::Censored => &self.censored,
        }
    }

    /// Builds the table from observations. Order of the input is irrelevant.
    pub fn from_observations(observations: &[Observation]) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::validation("event table needs at least one record"));
        }
        for o in observations {
            if !(o.time.is_finite() && o.time >= 0.0) {
                return Err(Error::validation(format!(
                    "invalid follow-up time {}",
                    o.time
                )));
            }
            if !(o.weight.is_finite() && o.weight > 0.0) {
                return Err(Error::validation(format!(
                    "invalid case weight {}",
                    o.weight
                )));
            }
        }
        let mut sorted = observations.to_vec();
        sorted.sort_by(Observation::canonical_cmp);
        Ok(Self::from_sorted(sorted.iter().copied()))
    }

    /// Builds the table from observations already sorted by time. Weights of
    /// zero are allowed and ignored (bootstrap resamples use them).
    pub(crate) fn from_sorted<I: Iterator<Item = Observation>>(sorted: I) -> Self {
        // (time, deaths, discharges, censored) per distinct time
        let mut groups: Vec<(f64, f64, f64, f64)> = Vec::new();
        for o in sorted {
            if o.weight == 0.0 {
                continue;
            }
            match groups.last_mut() {
                Some(g) if g.0 == o.time => add(g, o),
                _ => {
                    let mut g = (o.time, 0.0, 0.0, 0.0);
                    add(&mut g, o);
                    groups.push(g);
                }
            }
        }
        // at-risk as a suffix sum so late risk sets carry no cancellation error
        let mut at_risk_by_group = vec![0.0; groups.len()];
        let mut acc = 0.0;
        for (k, g) in groups.iter().enumerate().rev() {
            acc += g.1 + g.2 + g.3;
            at_risk_by_group[k] = acc;
        }
        let total = acc;

        let mut table = EventTable {
            times: Vec::new(),
            at_risk: Vec::new(),
            deaths: Vec::new(),
            discharges: Vec::new(),
            censored: Vec::new(),
            censored_before_first: 0.0,
            total,
            last_time: groups.last().map_or(0.0, |g| g.0),
        };
        for (g, n) in groups.iter().zip(at_risk_by_group) {
            if g.1 + g.2 > 0.0 {
                table.times.push(g.0);
                table.at_risk.push(n);
                table.deaths.push(g.1);
                table.discharges.push(g.2);
                table.censored.push(g.3);
            } else if let Some(c) = table.censored.last_mut() {
                *c += g.3;
            } else {
                table.censored_before_first += g.3;
            }
        }
        table
    }
}

fn add(g: &mut (f64, f64, f64, f64), o: Observation) {
    match o.event {
        EventCause::Death => g.1 += o.weight,
        EventCause::Discharge => g.2 += o.weight,
        EventCause::Censored => g.3 += o.weight,
    }
}

pub fn build_event_table(records: &[AnalysisRecord]) -> Result<EventTable> {
    let obs: Vec<Observation> = records.iter().map(Observation::from).collect();
    EventTable::from_observations(&obs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use EventCause::*;

    fn table(obs: &[(f64, EventCause)]) -> EventTable {
        let obs: Vec<_> = obs.iter().map(|&(t, e)| Observation::new(t, e)).collect();
        EventTable::from_observations(&obs).unwrap()
    }

    #[test]
    fn hand_tabulation() {
        let t = table(&[(1.0, Death), (2.0, Discharge), (3.0, Censored)]);
        assert_eq!(t.times, vec![1.0, 2.0]);
        assert_eq!(t.at_risk, vec![3.0, 2.0]);
        assert_eq!(t.deaths, vec![1.0, 0.0]);
        assert_eq!(t.discharges, vec![0.0, 1.0]);
        assert_eq!(t.censored, vec![0.0, 1.0]);
        assert_eq!(t.censored_before_first, 0.0);
        assert_eq!(t.last_time, 3.0);
    }

    #[test]
    fn all_censored_gives_empty_grid() {
        let t = table(&[(1.0, Censored), (5.0, Censored)]);
        assert!(t.is_empty());
        assert_eq!(t.censored_before_first, 2.0);
    }

    #[test]
    fn ties_aggregate() {
        let t = table(&[(1.0, Death), (1.0, Death), (1.0, Death)]);
        assert_eq!(t.times, vec![1.0]);
        assert_eq!(t.deaths, vec![3.0]);
        assert_eq!(t.at_risk, vec![3.0]);
    }

    #[test]
    fn censoring_tied_with_event_is_at_risk() {
        let t = table(&[
            (2.0, Censored),
            (2.0, Death),
            (0.0, Discharge),
            (4.0, Death),
        ]);
        assert_eq!(t.times, vec![0.0, 2.0, 4.0]);
        assert_eq!(t.at_risk, vec![4.0, 3.0, 1.0]);
        assert_eq!(t.censored, vec![0.0, 1.0, 0.0]);
        for j in 0..t.len() - 1 {
            let next = t.at_risk[j] - t.deaths[j] - t.discharges[j] - t.censored[j];
            assert_eq!(t.at_risk[j + 1], next);
        }
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(EventTable::from_observations(&[]).is_err());
    }
}
