//! Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any fail.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ttdrl::baselines::{BaselineConfig, BaselineGroup, BeamScheme, RbScheme};
use ttdrl::channel::{
    channel_matrix, rate, snr, steering_vector, MultipathChannel, NoiseModel, PathDescriptor, ScatterConfig, UpaConfig,
};
use ttdrl::drl::{DrlConfig, Trainer};
use ttdrl::environment::EnvConfig;
use ttdrl::geometry::Direction;
use ttdrl::harness::{
    convergence_sd, moving_average, run_experiment, run_sweep, utility_score, CellSummary, ExperimentConfig, SchemeId,
    SweepConfig, UtilityAttributes,
};
use ttdrl::neural::{NetworkSpec, PolicyParameters};
use ttdrl::tabular::suite::{convergence_suite, lemma_suite, prop1_suite};
use ttdrl::tabular::SuiteConfig;

const DESK_SLOTS: u64 = 200_000;
const DESK_SEEDS: [u64; 3] = [0, 1, 2];

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, id: &str, pass: bool, detail: String) {
        if !pass {
            self.failures += 1;
        }
        println!("[{}] {id}: {detail}", if pass { "PASS" } else { "FAIL" });
    }
}

fn output_dir(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name);
    if dir.exists() {
        std::fs::remove_dir_all(&dir).unwrap();
    }
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn tabular(report: &mut Report) {
    let cfg = SuiteConfig::default();
    let start = Instant::now();
    let conv = convergence_suite(&cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let n = conv.seeds.len();
    let enough = conv.passing_seeds * 100 >= 95 * n;
    let matched = conv.passing_with_policy_match == conv.passing_seeds;
    report.line(
        "1 convergence",
        enough && matched && secs < 120.0,
        format!(
            "{}/{n} seeds within both bounds, {}/{} with settled greedy policies, {secs:.1}s",
            conv.passing_seeds, conv.passing_with_policy_match, conv.passing_seeds
        ),
    );

    let lemma = lemma_suite(&cfg).unwrap();
    let violations = lemma.iter().filter(|r| !r.holds()).count();
    report.line(
        "2 lemma",
        violations == 0 && lemma.len() == cfg.lemma_instances as usize * cfg.lemma_pairs,
        format!("{violations} violations over {} coupled updates", lemma.len()),
    );

    let prop = prop1_suite(&cfg).unwrap();
    let monotone = prop.iter().filter(|r| r.monotone).count();
    let optimal = prop.iter().filter(|r| r.optimal).count();
    let worst_gap = prop.iter().map(|r| r.final_gap_high.max(r.final_gap_low)).fold(0.0, f64::max);
    report.line(
        "3 sequential updating",
        monotone == prop.len() && optimal == prop.len(),
        format!(
            "{monotone}/{} monotone, {optimal}/{} optimal, worst final gap {worst_gap:.3e}",
            prop.len(),
            prop.len()
        ),
    );
}

/// Smooth nonlinear loss of the outputs and its derivative.
fn fd_loss(coef: &[f64], out: &[f64]) -> (f64, Vec<f64>) {
    let l = out.iter().zip(coef).map(|(o, c)| c * o + 0.5 * o * o * o.sin()).sum();
    let d = out.iter().zip(coef).map(|(o, c)| c + o * o.sin() + 0.5 * o * o * o.cos()).collect();
    (l, d)
}

fn worst_fd_error() -> f64 {
    let spec = NetworkSpec::actor(9, &[12], &[6], 14, 5);
    let mut worst = 0.0f64;
    for seed in 0..5 {
        let mut net = PolicyParameters::init(spec.clone(), seed, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 7);
        let mut vec = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
        let inputs: Vec<Vec<f64>> = (0..4).map(|_| vec(spec.input)).collect();
        let coef = vec(spec.outputs());
        let total = |net: &PolicyParameters| -> f64 { inputs.iter().map(|x| fd_loss(&coef, &net.predict(x).unwrap()).0).sum() };
        let (_, grad) = net.gradient(&inputs, |_, out| fd_loss(&coef, out)).unwrap();
        let h = 1e-5;
        for _ in 0..10 {
            let k = rng.random_range(0..net.params.len());
            let orig = net.params[k];
            net.params[k] = orig + h;
            let up = total(&net);
            net.params[k] = orig - h;
            let down = total(&net);
            net.params[k] = orig;
            let fd = (up - down) / (2.0 * h);
            worst = worst.max((grad[k] - fd).abs() / grad[k].abs().max(fd.abs()).max(1e-300));
        }
    }
    worst
}

fn worst_steering_error() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for nx in 1..=16 {
        for ny in 1..=16 {
            let upa = UpaConfig::half_wavelength(nx, ny, 4e9);
            for _ in 0..20 {
                let dir = Direction {
                    azimuth: rng.random_range(0.0..std::f64::consts::PI),
                    elevation: rng.random_range(0.0..std::f64::consts::PI),
                };
                let a = steering_vector(&upa, dir);
                let norm = a.entries.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                worst = worst.max((norm - 1.0).abs());
            }
        }
    }
    worst
}

/// Largest relative SNR or rate error against a direct nalgebra recomputation.
fn worst_snr_error() -> f64 {
    const TS: f64 = 1.0 / 15e3;
    let (tx, rx) = (UpaConfig::half_wavelength(4, 4, 4e9), UpaConfig::half_wavelength(2, 2, 4e9));
    let col = |b: &ttdrl::channel::ComplexBeamVector| DVector::from_vec(b.entries.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let mut angle = || Direction {
            azimuth: rng.random_range(0.0..std::f64::consts::PI),
            elevation: rng.random_range(0.0..std::f64::consts::PI),
        };
        let (wt, wr) = (steering_vector(&tx, angle()), steering_vector(&rx, angle()));
        let paths = (0..3)
            .map(|_| PathDescriptor {
                alpha: Complex64::new(rng.random_range(-0.75..0.75), rng.random_range(-0.75..0.75)),
                doppler: rng.random_range(0.0..1e5),
                delay: 2e-3 + rng.random_range(0.0..3e-7),
                aod: Direction {
                    azimuth: rng.random_range(0.0..3.1),
                    elevation: rng.random_range(0.0..3.1),
                },
                aoa: Direction {
                    azimuth: rng.random_range(0.0..3.1),
                    elevation: rng.random_range(0.0..3.1),
                },
            })
            .collect();
        let ch = MultipathChannel { paths };
        let slot = rng.random_range(0..50_000u64);
        let rb = rng.random_range(0..20usize);
        let (t, f) = (slot as f64 * TS, rb as f64 / TS);
        let mut h = DMatrix::<Complex64>::zeros(rx.len(), tx.len());
        for p in &ch.paths {
            let cycles = (t * p.doppler).rem_euclid(1.0) - (f * p.delay).rem_euclid(1.0);
            let c = p.alpha * Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * cycles);
            h += col(&steering_vector(&rx, p.aoa)) * col(&steering_vector(&tx, p.aod)).adjoint() * c;
        }
        let gain = (col(&wr).adjoint() * &h * col(&wt))[(0, 0)].norm_sqr();
        let (pt, ls) = (10.0, 3e-16);
        let want_snr = pt * ls * gain / (rx.len() as f64 * 1.380649e-23 * 290.0 * 180e3);
        let want_rate = 180e3 * (1.0 + want_snr).log2();
        let noise = NoiseModel::default();
        let got = snr(&wr, &wt, &channel_matrix(&ch, &tx, &rx, slot, rb, TS), pt, ls, &noise).unwrap();
        worst = worst
            .max((got - want_snr).abs() / want_snr.max(1e-12))
            .max((rate(got, noise.rb_bandwidth) - want_rate).abs() / want_rate.max(1.0));
    }
    worst
}

fn numerics(report: &mut Report) {
    let fd = worst_fd_error();
    let steer = worst_steering_error();
    let link = worst_snr_error();
    report.line(
        "4 numerics",
        fd < 1e-4 && steer <= 1e-12 && link <= 1e-10,
        format!("FD rel err {fd:.2e}, steering norm err {steer:.2e} over 16x16 shapes, SNR/rate rel err {link:.2e}"),
    );
}

fn overhead(report: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut mismatches = Vec::new();
    for _ in 0..20 {
        let t = rng.random_range(1..=12usize);
        let m = 5 * rng.random_range(1..=8usize);
        let n_bar = rng.random_range(0..=8usize);
        let env = EnvConfig {
            cycle_len: t,
            total_rbs: m,
            ..EnvConfig::desk()
        };
        let cfg = DrlConfig {
            n_bar,
            ..DrlConfig::default()
        };
        let mut trainer = Trainer::new(env, cfg, 3).unwrap();
        trainer.run(2 * t as u64 + 1).unwrap();
        let want = 6 + t + m + (2 + m) * n_bar * t;
        if trainer.messages.is_empty() || trainer.messages.iter().any(|msg| msg.total_elements() != want) {
            mismatches.push((t, m, n_bar));
        }
    }
    report.line(
        "8 overhead",
        mismatches.is_empty(),
        format!("20 random (T, M, n̄) triples, mismatches {mismatches:?}"),
    );
}

fn metrics(report: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut ma_err, mut sd_err, mut util_err) = (0.0f64, 0.0f64, 0.0f64);
    let mut ranking_ok = true;
    for _ in 0..50 {
        let len = rng.random_range(1..5000usize);
        let series: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w = rng.random_range(1..6000usize);
        let got = moving_average(&series, w).unwrap();
        for (n, g) in got.iter().enumerate() {
            let lo = (n + 1).saturating_sub(w);
            let want = series[lo..=n].iter().sum::<f64>() / (n + 1 - lo) as f64;
            ma_err = ma_err.max((g - want).abs());
        }
        let sw = rng.random_range(1..=len);
        let tail = &series[len - sw..];
        let mean = tail.iter().sum::<f64>() / sw as f64;
        let want = (tail.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / sw as f64).sqrt();
        sd_err = sd_err.max((convergence_sd(&series, sw).unwrap() - want).abs());

        let schemes: Vec<UtilityAttributes> = (0..rng.random_range(2..9))
            .map(|_| UtilityAttributes {
                satisfactory_error: rng.random_range(0.0..1e7),
                rb_groups: rng.random_range(1.0..5.0),
                complexity: rng.random_range(1.0..1e5),
            })
            .collect();
        let a: f64 = rng.random();
        let b: f64 = rng.random_range(0.0..1.0 - a);
        let weights = [a, b, 1.0 - a - b];
        let cols: Vec<Vec<f64>> = vec![
            schemes.iter().map(|s| s.satisfactory_error).collect(),
            schemes.iter().map(|s| s.rb_groups).collect(),
            schemes.iter().map(|s| s.complexity).collect(),
        ];
        let got = utility_score(&schemes, weights).unwrap();
        for (i, g) in got.iter().enumerate() {
            let want: f64 = cols
                .iter()
                .zip(weights)
                .map(|(c, wk)| {
                    let (lo, hi) = c.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| (l.min(*x), h.max(*x)));
                    if hi > lo {
                        wk * (c[i] - lo) / (hi - lo)
                    } else {
                        0.0
                    }
                })
                .sum();
            util_err = util_err.max((g - want).abs());
        }
        let only_error = utility_score(&schemes, [1.0, 0.0, 0.0]).unwrap();
        let order = |xs: &[f64]| {
            let mut idx: Vec<usize> = (0..xs.len()).collect();
            idx.sort_by(|&p, &q| xs[p].total_cmp(&xs[q]).then(p.cmp(&q)));
            idx
        };
        ranking_ok &= order(&only_error) == order(&cols[0]);
    }
    report.line(
        "9 metrics",
        ma_err <= 1e-10 && sd_err <= 1e-10 && util_err <= 1e-10 && ranking_ok,
        format!("MA err {ma_err:.1e}, SD err {sd_err:.1e}, utility err {util_err:.1e}, error-only ranking {ranking_ok}"),
    );
}

fn determinism(report: &mut Report) {
    let schemes = [
        SchemeId::Proposed,
        SchemeId::SingleEstimation,
        SchemeId::Independent,
        SchemeId::BfsGreedy,
        SchemeId::PbuMab,
    ];
    let mut differing = Vec::new();
    for scheme in schemes {
        let mut cfg = ExperimentConfig::desk();
        cfg.scheme = scheme;
        cfg.seed = 12;
        cfg.slots = 2000;
        let (a, b) = (output_dir("determinism_a"), output_dir("determinism_b"));
        let (_, fa) = run_experiment(&cfg, &a).unwrap();
        let (_, fb) = run_experiment(&cfg, &b).unwrap();
        let same = |x: &Path, y: &Path| std::fs::read(x).unwrap() == std::fs::read(y).unwrap();
        if !same(&fa.csv, &fb.csv) || !same(&fa.summary, &fb.summary) {
            differing.push(scheme.name());
        }
    }
    report.line(
        "10 determinism",
        differing.is_empty(),
        format!("CSV and summary JSON of {} schemes over two runs, differing {differing:?}", schemes.len()),
    );
}

/// LOS-dominant dominance of BFS-Greedy's per-RB rate over the other baselines.
fn bfs_greedy_dominance(report: &mut Report) {
    let cfg = EnvConfig {
        scatter: ScatterConfig {
            k_factor_db: 20.0,
            ..ScatterConfig::default()
        },
        ..EnvConfig::desk()
    };
    let rbs = [RbScheme::Greedy, RbScheme::Fixed, RbScheme::Mab];
    let size = cfg.group_size() as f64;
    let per_rb = |recs: Vec<ttdrl::harness::MetricRecord>| -> Vec<f64> {
        recs.iter()
            .map(|r| if r.rb_groups == 0 { 0.0 } else { r.throughput / (r.rb_groups as f64 * size) })
            .collect()
    };
    let (mut wins, mut total) = (0usize, 0usize);
    for seed in 0..10 {
        let mut bfs = BaselineGroup::new(cfg.clone(), BeamScheme::Bfs, &rbs, BaselineConfig::default(), seed).unwrap();
        let mut pbu = BaselineGroup::new(cfg.clone(), BeamScheme::Pbu, &rbs, BaselineConfig::default(), seed).unwrap();
        for _ in 0..200 {
            let mut rates = per_rb(bfs.step().unwrap());
            rates.extend(per_rb(pbu.step().unwrap()));
            total += 1;
            wins += rates[1..].iter().all(|x| rates[0] >= *x * (1.0 - 1e-12)) as usize;
        }
    }
    let frac = wins as f64 / total as f64;
    report.line(
        "supplementary BFS-Greedy per-RB dominance",
        frac >= 0.95,
        format!("BFS-Greedy per-RB rate ≥ all five other baselines in {frac:.3} of {total} LOS-dominant slots"),
    );
}

fn seed_values(cells: &[CellSummary], scheme: SchemeId, n_bar: Option<usize>, f: impl Fn(&CellSummary) -> Option<f64>) -> Vec<f64> {
    DESK_SEEDS
        .iter()
        .map(|&seed| {
            let cell = cells
                .iter()
                .find(|c| c.scheme == scheme && c.seed == seed && n_bar.is_none_or(|n| c.n_bar == n))
                .unwrap_or_else(|| panic!("missing cell {} seed {seed}", scheme.name()));
            f(cell).unwrap_or(f64::NAN)
        })
        .collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sci(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.4e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn desk(report: &mut Report) {
    let mut base = ExperimentConfig::desk();
    base.slots = DESK_SLOTS;
    let sweep = SweepConfig {
        base,
        schemes: SchemeId::ALL.to_vec(),
        seeds: DESK_SEEDS.to_vec(),
        extra_n_bar: vec![2],
    };
    let dir = output_dir("desk");
    let mut cells = Vec::new();
    let mut slowest = 0.0f64;
    run_sweep(&sweep, &dir, |s, secs| {
        eprintln!("  desk cell {} seed {} n̄={} done in {secs:.0}s", s.scheme.name(), s.seed, s.n_bar);
        slowest = slowest.max(secs);
        cells.push(s.clone());
    })
    .unwrap();
    println!("desk sweep outputs in {}", dir.display());

    let mut contract = (0usize, 0usize, 0usize, 0.0f64);
    for c in &cells {
        if let Some(t) = &c.training {
            contract.0 += t.trpo_updates;
            contract.1 += t.contract_violations;
            contract.2 += t.rejected_param_changes;
            contract.3 = contract.3.max(t.max_accepted_kl);
        }
    }
    let (updates, violations, changed, max_kl) = contract;
    report.line(
        "5 trust-region contract",
        updates > 0 && violations == 0 && changed == 0 && max_kl <= 0.01,
        format!("{updates} updates, {violations} contract violations, {changed} rejected steps that moved parameters, max accepted KL {max_kl:.3e}"),
    );

    let default_n_bar = DrlConfig::default().n_bar;
    let thr = |s: SchemeId| mean(&seed_values(&cells, s, s.drl_mode().map(|_| default_n_bar), |c| c.final_ma_throughput));
    let bfs_greedy = thr(SchemeId::BfsGreedy);
    let beaten_by: Vec<String> = SchemeId::ALL
        .iter()
        .filter(|&&s| s != SchemeId::BfsGreedy && thr(s) > bfs_greedy)
        .map(|&s| format!("{} {:.4e}", s.name(), thr(s)))
        .collect();
    report.line(
        "6a BFS-Greedy throughput",
        beaten_by.is_empty(),
        format!("BFS-Greedy mean final MA throughput {bfs_greedy:.4e}, exceeded by {beaten_by:?}"),
    );

    let reward = |s: SchemeId, n: usize| seed_values(&cells, s, Some(n), |c| c.final_ma_reward);
    let proposed = reward(SchemeId::Proposed, default_n_bar);
    let independent = reward(SchemeId::Independent, default_n_bar);
    let single = reward(SchemeId::SingleEstimation, default_n_bar);
    let (p, i) = (mean(&proposed), mean(&independent));
    report.line(
        "6b proposed vs independent",
        p >= i + 0.1 * i.abs(),
        format!("mean final MA reward proposed {p:.4e}, independent {i:.4e}, ratio {:.3}", p / i),
    );
    let wins = proposed.iter().zip(&single).filter(|(a, b)| a >= b).count();
    report.line(
        "6c proposed vs single-estimation",
        wins >= 2,
        format!("proposed ≥ single-estimation in {wins}/3 seeds: {} vs {}", sci(&proposed), sci(&single)),
    );
    report.line(
        "6 runtime",
        slowest < 1800.0,
        format!("slowest cell {slowest:.0}s of {} cells", cells.len()),
    );

    let shallow = reward(SchemeId::Proposed, 2);
    let wins = proposed.iter().zip(&shallow).filter(|(a, b)| a >= b).count();
    report.line(
        "7 rollout depth",
        wins >= 2,
        format!("n̄={default_n_bar} ≥ n̄=2 in {wins}/3 seeds: {} vs {}", sci(&proposed), sci(&shallow)),
    );
}

fn main() {
    let mut report = Report { failures: 0 };
    tabular(&mut report);
    numerics(&mut report);
    desk(&mut report);
    overhead(&mut report);
    metrics(&mut report);
    determinism(&mut report);
    bfs_greedy_dominance(&mut report);
    println!("acceptance: {} failing line(s)", report.failures);
    if report.failures > 0 {
        std::process::exit(1);
    }
}
