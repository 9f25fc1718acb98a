use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ttdrl::harness::{
    convergence_sd, load_summary, moving_average, parse_csv, records_to_csv, run_experiment, utility_score,
    ExperimentConfig, MetricRecord, SchemeId, UtilityAttributes, CSV_HEADER,
};

fn prefix_ma(series: &[f64], w: usize) -> Vec<f64> {
    let mut prefix = vec![0.0];
    for x in series {
        prefix.push(prefix.last().unwrap() + x);
    }
    (0..series.len())
        .map(|n| {
            let lo = (n + 1).saturating_sub(w);
            (prefix[n + 1] - prefix[lo]) / (n + 1 - lo) as f64
        })
        .collect()
}

fn two_pass_sd(xs: &[f64]) -> f64 {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

fn ranking(xs: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]).then(a.cmp(&b)));
    idx
}

fn attrs() -> impl Strategy<Value = Vec<UtilityAttributes>> {
    prop::collection::vec((0.0f64..1e7, 1.0f64..5.0, 1.0f64..1e5), 2..9).prop_map(|v| {
        v.into_iter()
            .map(|(a, b, c)| UtilityAttributes {
                satisfactory_error: a,
                rb_groups: b,
                complexity: c,
            })
            .collect()
    })
}

fn record(rng: &mut ChaCha8Rng, slot: u64) -> MetricRecord {
    MetricRecord {
        slot,
        episode: slot / 7,
        reward_high: rng.random_range(0.0..1e8),
        reward_low: rng.random_range(-1e7..1e8),
        throughput: rng.random_range(0.0..1e9),
        demand: 1e7 * rng.random_range(0..6) as f64,
        rb_groups: rng.random_range(0..6),
        satisfactory_error: rng.random_range(0.0..5e7),
        elevation: rng.random_range(0.5..1.6),
    }
}

proptest! {
    #[test]
    fn moving_average_matches_prefix_sums(series in prop::collection::vec(-1.0f64..1.0, 0..9000), w in 1usize..12000) {
        let got = moving_average(&series, w).unwrap();
        let want = prefix_ma(&series, w);
        prop_assert_eq!(got.len(), series.len());
        for (a, b) in got.iter().zip(&want) {
            prop_assert!((a - b).abs() <= 1e-10, "{} vs {}", a, b);
        }
    }

    #[test]
    fn convergence_sd_matches_two_pass(series in prop::collection::vec(-1e3f64..1e3, 1..500), frac in 0.01f64..1.0) {
        let w = ((series.len() as f64 * frac).ceil() as usize).clamp(1, series.len());
        let got = convergence_sd(&series, w).unwrap();
        prop_assert!((got - two_pass_sd(&series[series.len() - w..])).abs() < 1e-10);
    }

    #[test]
    fn utility_ranking_is_affine_invariant(schemes in attrs(), scale in 0.01f64..100.0, shift in -1e3f64..1e3, which in 0usize..3) {
        let w = [0.5, 0.3, 0.2];
        let before = utility_score(&schemes, w).unwrap();
        let moved: Vec<UtilityAttributes> = schemes
            .iter()
            .map(|s| {
                let mut s = *s;
                let f = |x: f64| scale * x + shift;
                match which {
                    0 => s.satisfactory_error = f(s.satisfactory_error),
                    1 => s.rb_groups = f(s.rb_groups),
                    _ => s.complexity = f(s.complexity),
                }
                s
            })
            .collect();
        let after = utility_score(&moved, w).unwrap();
        for (a, b) in before.iter().zip(&after) {
            prop_assert!((a - b).abs() < 1e-9);
        }
        prop_assert_eq!(ranking(&before), ranking(&after));
    }

    #[test]
    fn single_weight_reproduces_error_ranking(schemes in attrs()) {
        let scores = utility_score(&schemes, [1.0, 0.0, 0.0]).unwrap();
        let errors: Vec<f64> = schemes.iter().map(|s| s.satisfactory_error).collect();
        prop_assert_eq!(ranking(&scores), ranking(&errors));
    }

    #[test]
    fn csv_round_trips_to_nine_digits(seed in 0u64..10_000, n in 0usize..50) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let recs: Vec<MetricRecord> = (0..n as u64).map(|s| record(&mut rng, s)).collect();
        let text = records_to_csv(&recs);
        prop_assert_eq!(text.lines().next(), Some(CSV_HEADER));
        prop_assert_eq!(text.lines().count(), n + 1);
        let back = parse_csv(&text).unwrap();
        prop_assert_eq!(back.len(), n);
        for (a, b) in recs.iter().zip(&back) {
            prop_assert_eq!((a.slot, a.episode, a.rb_groups), (b.slot, b.episode, b.rb_groups));
            for (x, y) in [
                (a.reward_high, b.reward_high),
                (a.reward_low, b.reward_low),
                (a.throughput, b.throughput),
                (a.demand, b.demand),
                (a.satisfactory_error, b.satisfactory_error),
                (a.elevation, b.elevation),
            ] {
                prop_assert!((x - y).abs() <= 5e-9 * x.abs());
            }
        }
        prop_assert_eq!(records_to_csv(&back), text);
    }
}

#[test]
fn metric_reference_cases() {
    assert_eq!(moving_average(&[3.0; 20], 7).unwrap(), vec![3.0; 20]);
    let xs = [1.0, -2.0, 5.5, 0.25];
    assert_eq!(moving_average(&xs, 1).unwrap(), xs.to_vec());
    assert!(moving_average(&xs, 0).is_err());
    assert_eq!(convergence_sd(&[4.0; 9], 9).unwrap(), 0.0);
    assert_eq!(convergence_sd(&[0.0, 2.0], 2).unwrap(), 1.0);
    assert!(convergence_sd(&xs, 5).is_err());
}

#[test]
fn utility_reference_cases() {
    let same = UtilityAttributes {
        satisfactory_error: 3.0,
        rb_groups: 2.0,
        complexity: 9.0,
    };
    assert_eq!(utility_score(&[same; 4], [0.2, 0.3, 0.5]).unwrap(), vec![0.0; 4]);
    // Anchors at 0 and 1 make the middle scheme's normalized attributes (0.2, 0.3, 0.1).
    let lo = UtilityAttributes {
        satisfactory_error: 0.0,
        rb_groups: 0.0,
        complexity: 0.0,
    };
    let hi = UtilityAttributes {
        satisfactory_error: 1.0,
        rb_groups: 1.0,
        complexity: 1.0,
    };
    let mid = UtilityAttributes {
        satisfactory_error: 0.2,
        rb_groups: 0.3,
        complexity: 0.1,
    };
    let third = 1.0 / 3.0;
    let s = utility_score(&[lo, mid, hi], [third, third, third]).unwrap();
    assert!((s[1] - 0.2).abs() < 1e-12);
    assert!(utility_score(&[lo, hi], [0.5, 0.5, 0.5]).is_err());
    assert!(utility_score(&[lo, hi], [1.2, -0.2, 0.0]).is_err());
}

fn small(scheme: SchemeId, slots: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::desk();
    cfg.scheme = scheme;
    cfg.seed = 4;
    cfg.slots = slots;
    cfg
}

#[test]
fn empty_run_writes_a_valid_summary() {
    let dir = tempfile::tempdir().unwrap();
    let (result, files) = run_experiment(&small(SchemeId::PbuGreedy, 0), dir.path()).unwrap();
    assert!(result.records.is_empty());
    assert_eq!(std::fs::read_to_string(&files.csv).unwrap(), format!("{CSV_HEADER}\n"));
    let s = load_summary(&files.summary).unwrap();
    assert_eq!(s.slots, 0);
    assert_eq!(s.final_ma_reward, None);
    assert_eq!(s, result.summary);
}

#[test]
fn outputs_are_deterministic_and_consistent() {
    for scheme in [SchemeId::Proposed, SchemeId::BfsMab] {
        let cfg = small(scheme, 150);
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let (res, fa) = run_experiment(&cfg, a.path()).unwrap();
        let (_, fb) = run_experiment(&cfg, b.path()).unwrap();
        let csv = std::fs::read(&fa.csv).unwrap();
        assert_eq!(csv, std::fs::read(&fb.csv).unwrap());
        assert_eq!(std::fs::read(&fa.summary).unwrap(), std::fs::read(&fb.summary).unwrap());

        let rows = parse_csv(std::str::from_utf8(&csv).unwrap()).unwrap();
        assert_eq!(rows.len() as u64, cfg.slots);
        let mean = rows.iter().map(|r| r.throughput).sum::<f64>() / rows.len() as f64;
        let reported = res.summary.mean_throughput.unwrap();
        assert!((mean - reported).abs() <= 1e-8 * reported.abs(), "{mean} vs {reported}");
    }
}

#[test]
fn scheme_names_parse() {
    for id in SchemeId::ALL {
        assert_eq!(id.name().parse::<SchemeId>().unwrap(), id);
    }
    assert!("bfs_magic".parse::<SchemeId>().is_err());
}
