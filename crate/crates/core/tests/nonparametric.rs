use crivet::cohort::{AnalysisRecord, EventCause};
use crivet::nonparametric::{
    aalen_johansen, build_event_table, hfr_at_horizon, median_los, weighted_median_los,
    BootstrapConfig, EventTable, Observation,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cause(code: u8) -> EventCause {
    EventCause::from_code(code).unwrap()
}

fn observations() -> impl Strategy<Value = Vec<(u8, u8)>> {
    prop::collection::vec((0u8..40, 0u8..3), 1..120)
}

/// Product-limit survival of the all-cause event time, evaluated at `t`.
fn kaplan_meier(obs: &[(f64, EventCause)], t: f64) -> f64 {
    let mut times: Vec<f64> = obs
        .iter()
        .filter(|o| o.1 != EventCause::Censored && o.0 <= t)
        .map(|o| o.0)
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
        .iter()
        .map(|&s| {
            let at_risk = obs.iter().filter(|o| o.0 >= s).count() as f64;
            let events = obs
                .iter()
                .filter(|o| o.0 == s && o.1 != EventCause::Censored)
                .count() as f64;
            1.0 - events / at_risk
        })
        .product()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn incidence_and_survival_sum_to_one(raw in observations()) {
        let obs: Vec<Observation> = raw.iter().map(|&(t, c)| Observation::new(t as f64, cause(c))).collect();
        let aj = aalen_johansen(&EventTable::from_observations(&obs).unwrap());
        for j in 0..aj.survival.times.len() {
            let total = aj.death.values[j] + aj.discharge.values[j] + aj.survival.values[j];
            prop_assert!((total - 1.0).abs() < 1e-12, "{total}");
        }
    }

    #[test]
    fn single_cause_is_one_minus_kaplan_meier(raw in observations()) {
        let obs: Vec<(f64, EventCause)> = raw
            .iter()
            .map(|&(t, c)| (t as f64, if c == 0 { EventCause::Censored } else { EventCause::Death }))
            .collect();
        let input: Vec<Observation> = obs.iter().map(|&(t, c)| Observation::new(t, c)).collect();
        let aj = aalen_johansen(&EventTable::from_observations(&input).unwrap());
        for t in 0..41 {
            let t = t as f64;
            let diff = (aj.death.value_at(t) - (1.0 - kaplan_meier(&obs, t))).abs();
            prop_assert!(diff < 1e-12, "t = {t}: {diff}");
        }
        prop_assert!(aj.discharge.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn curves_are_monotone_and_bracketed(raw in observations()) {
        let obs: Vec<Observation> = raw.iter().map(|&(t, c)| Observation::new(t as f64, cause(c))).collect();
        let aj = aalen_johansen(&EventTable::from_observations(&obs).unwrap());
        for curve in [&aj.death, &aj.discharge] {
            for j in 0..curve.values.len() {
                if j > 0 {
                    prop_assert!(curve.values[j] >= curve.values[j - 1]);
                }
                prop_assert!((0.0..=1.0).contains(&curve.values[j]));
                prop_assert!(curve.variance[j] >= 0.0);
                prop_assert!(curve.ci_lower[j] <= curve.values[j] + 1e-15);
                prop_assert!(curve.ci_upper[j] >= curve.values[j] - 1e-15);
            }
        }
    }

    #[test]
    fn fatality_risk_is_a_step_lookup(raw in observations(), horizon in 0u8..45) {
        let obs: Vec<Observation> = raw.iter().map(|&(t, c)| Observation::new(t as f64, cause(c))).collect();
        let aj = aalen_johansen(&EventTable::from_observations(&obs).unwrap());
        let h = horizon as f64 + 0.5;
        let hfr = hfr_at_horizon(&aj.death, h).unwrap();
        let expect = aj.death.times.iter().zip(&aj.death.values).rfind(|(t, _)| **t <= h);
        prop_assert_eq!(hfr.risk, expect.map_or(0.0, |p| *p.1));
    }

    #[test]
    fn uncensored_median_is_the_sample_median(times in prop::collection::vec(1u8..60, 1..80)) {
        let records: Vec<AnalysisRecord> = times
            .iter()
            .enumerate()
            .map(|(i, &t)| AnalysisRecord::new(format!("s{i}"), t as f64, EventCause::Discharge))
            .collect();
        let aj = aalen_johansen(&build_event_table(&records).unwrap());
        let mut sorted: Vec<f64> = times.iter().map(|&t| t as f64).collect();
        sorted.sort_by(f64::total_cmp);
        let m = sorted.len();
        let oracle = if m % 2 == 1 {
            sorted[m / 2]
        } else {
            0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
        };
        prop_assert_eq!(weighted_median_los(&aj.discharge).unwrap(), oracle);
    }
}

fn random_records(seed: u64, n: usize) -> Vec<AnalysisRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let t = rng.gen_range(0..60) as f64;
            AnalysisRecord::new(format!("s{i}"), t, cause(rng.gen_range(0..3)))
        })
        .collect()
}

#[test]
fn bootstrap_does_not_depend_on_thread_count() {
    let records = random_records(5, 400);
    let cfg = BootstrapConfig {
        replicates: 200,
        seed: 11,
    };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| median_los(&records, &cfg).unwrap())
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn weighted_records_match_replicated_records() {
    let base = random_records(8, 60);
    let mut weighted = base.clone();
    let mut replicated = Vec::new();
    for (i, r) in weighted.iter_mut().enumerate() {
        let copies = 1 + i % 3;
        r.weight = copies as f64;
        for k in 0..copies {
            let mut c = r.clone();
            c.subject_id = format!("{}-{k}", r.subject_id);
            c.weight = 1.0;
            replicated.push(c);
        }
    }
    let a = aalen_johansen(&build_event_table(&weighted).unwrap());
    let b = aalen_johansen(&build_event_table(&replicated).unwrap());
    assert_eq!(a.death.times, b.death.times);
    for (x, y) in a.death.values.iter().zip(&b.death.values) {
        assert!((x - y).abs() < 1e-14);
    }
}
