//! Experiment configuration, single-cell and sweep runners, and persistence.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::metrics::{
    bfs_complexity, convergence_sd, drl_complexity, moving_average, pbu_complexity, utility_score, MetricRecord,
    UtilityAttributes,
};
use crate::baselines::{BaselineConfig, BaselineGroup, BeamScheme, RbScheme};
use crate::drl::{comm_overhead_elements, DrlConfig, Mode, Trainer, TrainingStats};
use crate::environment::{EnvConfig, HighTierAction};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeId {
    Proposed,
    SingleEstimation,
    Independent,
    BfsGreedy,
    BfsFixed,
    BfsMab,
    PbuGreedy,
    PbuFixed,
    PbuMab,
}

impl SchemeId {
    pub const ALL: [SchemeId; 9] = [
        SchemeId::Proposed,
        SchemeId::SingleEstimation,
        SchemeId::Independent,
        SchemeId::BfsGreedy,
        SchemeId::BfsFixed,
        SchemeId::BfsMab,
        SchemeId::PbuGreedy,
        SchemeId::PbuFixed,
        SchemeId::PbuMab,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeId::Proposed => "proposed",
            SchemeId::SingleEstimation => "single_estimation",
            SchemeId::Independent => "independent",
            SchemeId::BfsGreedy => "bfs_greedy",
            SchemeId::BfsFixed => "bfs_fixed",
            SchemeId::BfsMab => "bfs_mab",
            SchemeId::PbuGreedy => "pbu_greedy",
            SchemeId::PbuFixed => "pbu_fixed",
            SchemeId::PbuMab => "pbu_mab",
        }
    }

    pub fn drl_mode(self) -> Option<Mode> {
        match self {
            SchemeId::Proposed => Some(Mode::Proposed),
            SchemeId::SingleEstimation => Some(Mode::SingleEstimation),
            SchemeId::Independent => Some(Mode::Independent),
            _ => None,
        }
    }

    pub fn baseline(self) -> Option<(BeamScheme, RbScheme)> {
        match self {
            SchemeId::BfsGreedy => Some((BeamScheme::Bfs, RbScheme::Greedy)),
            SchemeId::BfsFixed => Some((BeamScheme::Bfs, RbScheme::Fixed)),
            SchemeId::BfsMab => Some((BeamScheme::Bfs, RbScheme::Mab)),
            SchemeId::PbuGreedy => Some((BeamScheme::Pbu, RbScheme::Greedy)),
            SchemeId::PbuFixed => Some((BeamScheme::Pbu, RbScheme::Fixed)),
            SchemeId::PbuMab => Some((BeamScheme::Pbu, RbScheme::Mab)),
            _ => None,
        }
    }

    /// Analytic per-slot search complexity.
    pub fn complexity(self, cfg: &ExperimentConfig) -> f64 {
        match self.baseline() {
            Some((BeamScheme::Bfs, _)) => bfs_complexity(cfg.baseline.grid_points),
            Some((BeamScheme::Pbu, _)) => pbu_complexity(),
            None => drl_complexity(cfg.env.cycle_len, HighTierAction::count(cfg.env.groups), cfg.drl.n_bar),
        }
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheme `{s}`")))
    }
}

/// Moving-average and convergence windows in slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricWindows {
    pub reward: usize,
    pub throughput: usize,
    pub sd: usize,
}

impl Default for MetricWindows {
    fn default() -> Self {
        Self {
            reward: 10_000,
            throughput: 10,
            sd: 7_000,
        }
    }
}

/// Everything that determines one (scheme, seed) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub scheme: SchemeId,
    pub seed: u64,
    pub slots: u64,
    pub env: EnvConfig,
    pub drl: DrlConfig,
    pub baseline: BaselineConfig,
    pub windows: MetricWindows,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scheme: SchemeId::Proposed,
            seed: 0,
            slots: 200_000,
            env: EnvConfig::default(),
            drl: DrlConfig::default(),
            baseline: BaselineConfig::default(),
            windows: MetricWindows::default(),
        }
    }
}

impl ExperimentConfig {
    /// Reduced arrays and RB pool (`N_t = 4²`, `N_r = 2²`, `M = 20`).
    pub fn desk() -> Self {
        Self {
            env: EnvConfig::desk(),
            ..Self::default()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.drl.validate()?;
        let w = &self.windows;
        if w.reward == 0 || w.throughput == 0 || w.sd == 0 {
            return Err(Error::Config("metric windows must be ≥ 1".into()));
        }
        Ok(())
    }

    /// File stem shared by the cell's CSV, summary and timing files.
    pub fn cell_name(&self) -> String {
        let mut name = format!("{}_seed{}", self.scheme, self.seed);
        if self.scheme.drl_mode().is_some() && self.drl.n_bar != DrlConfig::default().n_bar {
            name.push_str(&format!("_nbar{}", self.drl.n_bar));
        }
        name
    }
}

pub const CSV_HEADER: &str = "slot,episode,reward_high,reward_low,throughput,demand,rb_groups,satisfactory_error,elevation";
pub const CSV_SCHEMA_VERSION: u32 = 1;

/// `%.9g`-style formatting: 9 significant digits, trailing zeros trimmed.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.8e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let s = format!("{:.*}", decimals, x);
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let m = if mantissa.contains('.') {
            mantissa.trim_end_matches('0').trim_end_matches('.')
        } else {
            mantissa
        };
        format!("{m}e{exp}")
    }
}

pub fn records_to_csv(records: &[MetricRecord]) -> String {
    let mut out = String::with_capacity(records.len() * 96 + CSV_HEADER.len() + 1);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.slot,
            r.episode,
            format_sig9(r.reward_high),
            format_sig9(r.reward_low),
            format_sig9(r.throughput),
            format_sig9(r.demand),
            r.rb_groups,
            format_sig9(r.satisfactory_error),
            format_sig9(r.elevation)
        ));
    }
    out
}

/// Parses a metrics CSV written by [`records_to_csv`].
pub fn parse_csv(text: &str) -> Result<Vec<MetricRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Config("metrics CSV header mismatch".into()));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad = || Error::Config(format!("malformed metrics CSV row {}", i + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 9 {
                return Err(bad());
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            Ok(MetricRecord {
                slot: f[0].parse().map_err(|_| bad())?,
                episode: f[1].parse().map_err(|_| bad())?,
                reward_high: num(f[2])?,
                reward_low: num(f[3])?,
                throughput: num(f[4])?,
                demand: num(f[5])?,
                rb_groups: f[6].parse().map_err(|_| bad())?,
                satisfactory_error: num(f[7])?,
                elevation: num(f[8])?,
            })
        })
        .collect()
}

/// Deterministic per-cell summary; wall time lives in the timing sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub scheme: SchemeId,
    pub seed: u64,
    pub n_bar: usize,
    pub slots: u64,
    pub episodes: u64,
    pub csv_schema_version: u32,
    /// Final moving average of `R_L` over the reward window.
    pub final_ma_reward: Option<f64>,
    pub final_ma_reward_high: Option<f64>,
    /// Final moving average of `Σ b c` over the throughput window.
    pub final_ma_throughput: Option<f64>,
    /// Population SD of `R_L` over the trailing SD window (or all slots if fewer).
    pub reward_sd: Option<f64>,
    pub mean_reward: Option<f64>,
    pub mean_throughput: Option<f64>,
    /// Mean of `min(Σ b c, D)`: throughput that actually serves demand.
    pub mean_served_throughput: Option<f64>,
    pub demand_met_fraction: Option<f64>,
    pub utility: UtilityAttributes,
    /// `6 + T + M + (2 + M)·n̄·T` for exchanging schemes, else 0.
    pub overhead_elements_per_cycle: usize,
    /// Mean exchanged elements over the cycles actually run.
    pub measured_elements_per_cycle: Option<f64>,
    pub training: Option<TrainingStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTiming {
    pub scheme: SchemeId,
    pub seed: u64,
    pub wall_seconds: f64,
}

fn mean(xs: impl ExactSizeIterator<Item = f64>) -> Option<f64> {
    let n = xs.len();
    (n > 0).then(|| xs.sum::<f64>() / n as f64)
}

/// Builds the summary from a cell's records.
pub fn summarize(
    cfg: &ExperimentConfig,
    records: &[MetricRecord],
    training: Option<TrainingStats>,
    measured_elements_per_cycle: Option<f64>,
) -> Result<CellSummary> {
    let reward: Vec<f64> = records.iter().map(|r| r.reward_low).collect();
    let reward_high: Vec<f64> = records.iter().map(|r| r.reward_high).collect();
    let thr: Vec<f64> = records.iter().map(|r| r.throughput).collect();
    let last = |series: &[f64], w: usize| -> Result<Option<f64>> { Ok(moving_average(series, w)?.last().copied()) };
    let sd = if reward.is_empty() {
        None
    } else {
        Some(convergence_sd(&reward, cfg.windows.sd.min(reward.len()))?)
    };
    let exchanges = cfg.scheme.drl_mode().is_some_and(Mode::exchanges_messages);
    let utility = UtilityAttributes {
        satisfactory_error: mean(records.iter().map(|r| r.satisfactory_error)).unwrap_or(0.0),
        rb_groups: mean(records.iter().map(|r| r.rb_groups as f64)).unwrap_or(0.0),
        complexity: cfg.scheme.complexity(cfg),
    };
    Ok(CellSummary {
        scheme: cfg.scheme,
        seed: cfg.seed,
        n_bar: cfg.drl.n_bar,
        slots: records.len() as u64,
        episodes: records.last().map_or(0, |r| r.episode + 1),
        csv_schema_version: CSV_SCHEMA_VERSION,
        final_ma_reward: last(&reward, cfg.windows.reward)?,
        final_ma_reward_high: last(&reward_high, cfg.windows.reward)?,
        final_ma_throughput: last(&thr, cfg.windows.throughput)?,
        reward_sd: sd,
        mean_reward: mean(reward.iter().copied()),
        mean_throughput: mean(thr.iter().copied()),
        mean_served_throughput: mean(records.iter().map(|r| r.throughput.min(r.demand))),
        demand_met_fraction: mean(records.iter().map(|r| f64::from(u8::from(r.satisfactory_error == 0.0)))),
        utility,
        overhead_elements_per_cycle: if exchanges {
            comm_overhead_elements(cfg.env.cycle_len, cfg.env.total_rbs, cfg.drl.n_bar)
        } else {
            0
        },
        measured_elements_per_cycle,
        training,
    })
}

/// Records and summary of one simulated cell.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub records: Vec<MetricRecord>,
    pub summary: CellSummary,
    pub wall_seconds: f64,
}

/// Simulates one cell in memory.
pub fn simulate_cell(cfg: &ExperimentConfig) -> Result<CellResult> {
    cfg.validate()?;
    let start = Instant::now();
    let (records, training, measured) = if let Some(mode) = cfg.scheme.drl_mode() {
        let drl = DrlConfig { mode, ..cfg.drl.clone() };
        let mut trainer = Trainer::new(cfg.env.clone(), drl, cfg.seed)?;
        let records = trainer.run(cfg.slots)?;
        let measured = mean(trainer.messages.iter().map(|m| m.total_elements() as f64));
        (records, Some(trainer.stats.clone()), measured)
    } else {
        let (beam, rb) = cfg.scheme.baseline().expect("non-DRL schemes are baselines");
        let mut group = BaselineGroup::new(cfg.env.clone(), beam, &[rb], cfg.baseline.clone(), cfg.seed)?;
        let mut records = Vec::with_capacity(cfg.slots as usize);
        for _ in 0..cfg.slots {
            records.push(group.step()?.remove(0));
        }
        (records, None, None)
    };
    let summary = summarize(cfg, &records, training, measured)?;
    Ok(CellResult {
        records,
        summary,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Simulates several baseline cells that share a beam scheme and seed in
/// lockstep, so the beam search runs once per slot. Results match running
/// each cell alone.
pub fn simulate_baseline_group(cfgs: &[ExperimentConfig]) -> Result<Vec<CellResult>> {
    let first = cfgs.first().ok_or_else(|| Error::InvalidArgument("empty baseline group".into()))?;
    let (beam, _) = first
        .scheme
        .baseline()
        .ok_or_else(|| Error::InvalidArgument(format!("{} is not a baseline", first.scheme)))?;
    let mut rbs = Vec::new();
    for c in cfgs {
        c.validate()?;
        match c.scheme.baseline() {
            Some((b, rb)) if b == beam && c.seed == first.seed && c.slots == first.slots && c.env == first.env && c.baseline == first.baseline => {
                rbs.push(rb)
            }
            _ => return Err(Error::InvalidArgument("baseline group cells must share beam scheme, seed, budget and environment".into())),
        }
    }
    let start = Instant::now();
    let mut group = BaselineGroup::new(first.env.clone(), beam, &rbs, first.baseline.clone(), first.seed)?;
    let mut per_cell: Vec<Vec<MetricRecord>> = vec![Vec::with_capacity(first.slots as usize); cfgs.len()];
    for _ in 0..first.slots {
        for (out, rec) in per_cell.iter_mut().zip(group.step()?) {
            out.push(rec);
        }
    }
    let wall = start.elapsed().as_secs_f64() / cfgs.len() as f64;
    cfgs.iter()
        .zip(per_cell)
        .map(|(c, records)| {
            Ok(CellResult {
                summary: summarize(c, &records, None, None)?,
                records,
                wall_seconds: wall,
            })
        })
        .collect()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))
}

/// Paths written for one cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellFiles {
    pub csv: PathBuf,
    pub summary: PathBuf,
    pub timing: PathBuf,
}

/// Writes `<stem>.csv`, `<stem>.json` and `<stem>.timing.json` under `dir`.
pub fn write_cell(dir: &Path, cfg: &ExperimentConfig, result: &CellResult) -> Result<CellFiles> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let stem = cfg.cell_name();
    let files = CellFiles {
        csv: dir.join(format!("{stem}.csv")),
        summary: dir.join(format!("{stem}.json")),
        timing: dir.join(format!("{stem}.timing.json")),
    };
    write_file(&files.csv, records_to_csv(&result.records).as_bytes())?;
    write_file(&files.summary, to_json(&result.summary)?.as_bytes())?;
    let timing = CellTiming {
        scheme: cfg.scheme,
        seed: cfg.seed,
        wall_seconds: result.wall_seconds,
    };
    write_file(&files.timing, to_json(&timing)?.as_bytes())?;
    Ok(files)
}

/// Simulates one cell and writes its files under `dir`.
pub fn run_experiment(cfg: &ExperimentConfig, dir: &Path) -> Result<(CellResult, CellFiles)> {
    let result = simulate_cell(cfg)?;
    let files = write_cell(dir, cfg, &result)?;
    Ok((result, files))
}

pub fn load_summary(path: &Path) -> Result<CellSummary> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Scheme × seed grid sharing one base configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub base: ExperimentConfig,
    pub schemes: Vec<SchemeId>,
    pub seeds: Vec<u64>,
    /// Extra DRL rollout depths run for the proposed scheme only.
    pub extra_n_bar: Vec<usize>,
}

/// The four weight combinations of the utility table.
pub const UTILITY_WEIGHTS: [[f64; 3]; 4] = [
    [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
    [0.5, 0.25, 0.25],
    [0.25, 0.5, 0.25],
    [0.25, 0.25, 0.5],
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeAggregate {
    pub scheme: SchemeId,
    pub n_bar: usize,
    pub seeds: Vec<u64>,
    pub final_ma_reward: Vec<Option<f64>>,
    pub final_ma_throughput: Vec<Option<f64>>,
    pub mean_final_ma_reward: Option<f64>,
    pub mean_final_ma_throughput: Option<f64>,
    pub utility: UtilityAttributes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityTable {
    pub schemes: Vec<String>,
    pub weights: Vec<[f64; 3]>,
    /// `scores[w][s]`; lower is better.
    pub scores: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAggregate {
    pub schemes: Vec<SchemeAggregate>,
    pub utility: UtilityTable,
}

fn mean_opt(xs: &[Option<f64>]) -> Option<f64> {
    let v: Vec<f64> = xs.iter().flatten().copied().collect();
    mean(v.iter().copied())
}

/// Groups summaries by (scheme, n̄), averages across seeds and scores utility.
pub fn aggregate(summaries: &[CellSummary]) -> Result<SweepAggregate> {
    let mut keys: Vec<(SchemeId, usize)> = summaries.iter().map(|s| (s.scheme, s.n_bar)).collect();
    keys.sort();
    keys.dedup();
    let schemes: Vec<SchemeAggregate> = keys
        .iter()
        .map(|&(scheme, n_bar)| {
            let mut cells: Vec<&CellSummary> = summaries.iter().filter(|s| s.scheme == scheme && s.n_bar == n_bar).collect();
            cells.sort_by_key(|s| s.seed);
            let fr: Vec<Option<f64>> = cells.iter().map(|s| s.final_ma_reward).collect();
            let ft: Vec<Option<f64>> = cells.iter().map(|s| s.final_ma_throughput).collect();
            let k = cells.len() as f64;
            SchemeAggregate {
                scheme,
                n_bar,
                seeds: cells.iter().map(|s| s.seed).collect(),
                mean_final_ma_reward: mean_opt(&fr),
                mean_final_ma_throughput: mean_opt(&ft),
                final_ma_reward: fr,
                final_ma_throughput: ft,
                utility: UtilityAttributes {
                    satisfactory_error: cells.iter().map(|s| s.utility.satisfactory_error).sum::<f64>() / k,
                    rb_groups: cells.iter().map(|s| s.utility.rb_groups).sum::<f64>() / k,
                    complexity: cells.iter().map(|s| s.utility.complexity).sum::<f64>() / k,
                },
            }
        })
        .collect();
    let utility = utility_table(&schemes, &UTILITY_WEIGHTS)?;
    Ok(SweepAggregate { schemes, utility })
}

fn label(a: &SchemeAggregate) -> String {
    if a.scheme.drl_mode().is_some() && a.n_bar != DrlConfig::default().n_bar {
        format!("{}_nbar{}", a.scheme, a.n_bar)
    } else {
        a.scheme.to_string()
    }
}

pub fn utility_table(schemes: &[SchemeAggregate], weights: &[[f64; 3]]) -> Result<UtilityTable> {
    let attrs: Vec<UtilityAttributes> = schemes.iter().map(|s| s.utility).collect();
    Ok(UtilityTable {
        schemes: schemes.iter().map(label).collect(),
        weights: weights.to_vec(),
        scores: weights.iter().map(|w| utility_score(&attrs, *w)).collect::<Result<_>>()?,
    })
}

/// Every cell of a sweep, in run order.
pub fn sweep_cells(sweep: &SweepConfig) -> Vec<ExperimentConfig> {
    let mut cells = Vec::new();
    for &seed in &sweep.seeds {
        for &scheme in &sweep.schemes {
            cells.push(ExperimentConfig {
                scheme,
                seed,
                ..sweep.base.clone()
            });
        }
        if sweep.schemes.contains(&SchemeId::Proposed) {
            for &n_bar in &sweep.extra_n_bar {
                let mut c = ExperimentConfig {
                    scheme: SchemeId::Proposed,
                    seed,
                    ..sweep.base.clone()
                };
                c.drl.n_bar = n_bar;
                cells.push(c);
            }
        }
    }
    cells
}

/// Runs every cell (baselines sharing a beam scheme in lockstep), writes
/// per-cell files and `aggregate.json`, and returns the aggregate.
pub fn run_sweep(sweep: &SweepConfig, dir: &Path, mut progress: impl FnMut(&CellSummary, f64)) -> Result<SweepAggregate> {
    let cells = sweep_cells(sweep);
    let mut summaries = Vec::with_capacity(cells.len());
    let mut done = vec![false; cells.len()];
    for i in 0..cells.len() {
        if done[i] {
            continue;
        }
        let group: Vec<usize> = match cells[i].scheme.baseline() {
            Some((beam, _)) => (i..cells.len())
                .filter(|&j| !done[j] && cells[j].seed == cells[i].seed && cells[j].scheme.baseline().is_some_and(|(b, _)| b == beam))
                .collect(),
            None => vec![i],
        };
        let results = if group.len() > 1 || cells[i].scheme.baseline().is_some() {
            let cfgs: Vec<ExperimentConfig> = group.iter().map(|&j| cells[j].clone()).collect();
            simulate_baseline_group(&cfgs)?
        } else {
            vec![simulate_cell(&cells[i])?]
        };
        for (&j, result) in group.iter().zip(results) {
            write_cell(dir, &cells[j], &result)?;
            progress(&result.summary, result.wall_seconds);
            summaries.push(result.summary);
            done[j] = true;
        }
    }
    let agg = aggregate(&summaries)?;
    let path = dir.join("aggregate.json");
    write_file(&path, to_json(&agg)?.as_bytes())?;
    Ok(agg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig9_formatting() {
        assert_eq!(format_sig9(0.0), "0");
        assert_eq!(format_sig9(1.5), "1.5");
        assert_eq!(format_sig9(123456789.0), "123456789");
        assert_eq!(format_sig9(1234567891.0), "1.23456789e9");
        assert_eq!(format_sig9(-0.000123456789123), "-0.000123456789");
        assert_eq!(format_sig9(1e-7), "1e-7");
    }

    #[test]
    fn scheme_names_round_trip() {
        for id in SchemeId::ALL {
            assert_eq!(id.name().parse::<SchemeId>().unwrap(), id);
        }
        assert!("bfs".parse::<SchemeId>().is_err());
    }

    #[test]
    fn config_toml_round_trip() {
        let cfg = ExperimentConfig::desk();
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let cfg = ExperimentConfig::from_toml_str("scheme = \"bfs_mab\"\nseed = 4\n[env]\ncycle_len = 5\n").unwrap();
        assert_eq!(cfg.scheme, SchemeId::BfsMab);
        assert_eq!(cfg.env.cycle_len, 5);
        assert_eq!(cfg.env.total_rbs, 100);
        assert_eq!(cfg.drl.n_bar, 8);
    }
}
