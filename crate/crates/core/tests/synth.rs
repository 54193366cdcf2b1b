use crivet::cohort::{
    ingest_cohort, preprocess_cohort, write_cohort, EventCause, PreprocessOptions,
};
use crivet::synth::{
    death_cif, death_cif_inverse, draw_event, generate_cohort, truth_to_analysis, CohortSpec,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn draws(seed: u64, n: usize, eta: f64, p: f64) -> Vec<(f64, EventCause)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| draw_event(&mut rng, eta, 0.0, p)).collect()
}

#[test]
fn cause_one_fraction_matches_mixture_weight() {
    let d = draws(1, 100_000, 0.0, 0.3);
    let frac = d.iter().filter(|x| x.1 == EventCause::Death).count() as f64 / d.len() as f64;
    assert!((frac - 0.3).abs() < 0.01, "{frac}");
}

#[test]
fn cause_one_fraction_under_covariate_effect() {
    let (eta, p) = (0.5f64, 0.3f64);
    let closed = 1.0 - (1.0 - p).powf(eta.exp());
    let d = draws(2, 100_000, eta, p);
    let frac = d.iter().filter(|x| x.1 == EventCause::Death).count() as f64 / d.len() as f64;
    assert!((frac - closed).abs() < 0.01, "{frac} vs {closed}");
}

#[test]
fn cif_at_quantile_matches_closed_form() {
    let p = 0.4;
    let t = death_cif_inverse(0.2, p);
    let d = draws(3, 50_000, 0.0, p);
    let hit = d
        .iter()
        .filter(|x| x.1 == EventCause::Death && x.0 <= t)
        .count() as f64
        / d.len() as f64;
    assert!((hit - 0.2).abs() < 0.02, "{hit}");
}

#[test]
fn death_times_pass_kolmogorov_smirnov() {
    let (eta, p) = (-0.4f64, 0.35f64);
    let total = death_cif(f64::INFINITY, eta, p);
    let mut times: Vec<f64> = draws(4, 60_000, eta, p)
        .into_iter()
        .filter(|x| x.1 == EventCause::Death)
        .map(|x| x.0)
        .collect();
    times.sort_by(f64::total_cmp);
    let m = times.len() as f64;
    let ks = times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let f = death_cif(t, eta, p) / total;
            (f - i as f64 / m).abs().max((f - (i + 1) as f64 / m).abs())
        })
        .fold(0.0, f64::max);
    assert!(ks < 0.02, "{ks}");
}

#[test]
fn emitted_rows_ingest_without_rejections() {
    for spec in [CohortSpec::full_schema(3000, 1), {
        let mut s = CohortSpec::full_schema(3000, 2);
        s.censor_max = 40.0;
        s
    }] {
        let cohort = generate_cohort(&spec).unwrap();
        let mut buf = Vec::new();
        write_cohort(&mut buf, &cohort.admissions).unwrap();
        let (rows, report) = ingest_cohort(buf.as_slice()).unwrap();
        assert_eq!(report.total_rejected(), 0, "{:?}", report.rejected);
        assert_eq!(rows, cohort.admissions);
    }
}

#[test]
fn generation_is_shard_invariant() {
    let spec = CohortSpec::full_schema(2000, 5);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| generate_cohort(&spec).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(4));
    let mut smaller = spec.clone();
    smaller.n = 700;
    let prefix = generate_cohort(&smaller).unwrap();
    assert_eq!(prefix.truth[..], one.truth[..700]);
}

#[test]
fn preprocessing_recovers_truth_up_to_day_rounding() {
    let mut spec = CohortSpec::full_schema(4000, 6);
    spec.censor_max = 50.0;
    let cohort = generate_cohort(&spec).unwrap();
    let records = preprocess_cohort(
        &cohort.admissions,
        &PreprocessOptions::new(cohort.extraction_date),
    )
    .unwrap();
    let exact = truth_to_analysis(&cohort.truth, 90.0);
    for (r, t) in records.iter().zip(&exact) {
        assert_eq!(r.subject_id, t.subject_id);
        if t.event != EventCause::Censored {
            assert_eq!(r.event, t.event);
            assert_eq!(r.time_days, t.time_days.floor());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn inverse_is_a_right_inverse(level in 0.001f64..0.299, p in 0.3f64..0.9) {
        let t = death_cif_inverse(level, p);
        prop_assert!((death_cif(t, 0.0, p) - level).abs() < 1e-12);
    }

    #[test]
    fn cif_is_monotone_in_time_and_predictor(t in 0.0f64..20.0, dt in 0.0f64..5.0, eta in -3.0f64..3.0, p in 0.05f64..0.95) {
        prop_assert!(death_cif(t + dt, eta, p) >= death_cif(t, eta, p));
        prop_assert!(death_cif(t, eta + 0.1, p) >= death_cif(t, eta, p));
        prop_assert!(death_cif(t, eta, p) <= death_cif(f64::INFINITY, eta, p));
    }
}
