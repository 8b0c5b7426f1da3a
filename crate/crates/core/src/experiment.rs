//! Figure presets, parameter sweeps and the CSV result schema.

use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::correlation_from_spacing;
use crate::config::{FadingModel, Override, ScenarioConfig};
use crate::engine::{Estimate, Execution, MetricsSeries, Simulation};
use crate::error::{Error, Result};
use crate::reward::RewardKind;
use crate::strategy::StrategyKind;

/// Shadowing decay constant the fig5 spacing grid is laid out for.
const FIG5_REFERENCE_A: f64 = 0.12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    /// Average normalised throughput at the final slot.
    AvgThroughput,
    /// Average normalised throughput over the last `tail_slots` slots.
    TailThroughput,
    SpectralEfficiency,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::AvgThroughput => "avg_throughput",
            Metric::TailThroughput => "tail_throughput",
            Metric::SpectralEfficiency => "spectral_efficiency",
        }
    }

    fn estimate(self, series: &MetricsSeries) -> Estimate {
        match self {
            Metric::AvgThroughput => series.final_throughput(),
            Metric::TailThroughput => series.tail_throughput,
            Metric::SpectralEfficiency => series.spectral_efficiency,
        }
    }
}

/// A one-parameter sweep. `apply` edits the configuration for a grid value
/// and returns the value reported in the CSV.
#[derive(Debug, Clone)]
pub struct Sweep {
    pub var: &'static str,
    pub points: Vec<f64>,
    pub apply: fn(&mut ScenarioConfig, f64) -> f64,
}

#[derive(Debug, Clone)]
pub struct Preset {
    pub name: &'static str,
    pub base: ScenarioConfig,
    /// `None` reports the per-slot throughput series instead of a sweep.
    pub sweep: Option<Sweep>,
    pub strategies: Vec<StrategyKind>,
    pub metrics: Vec<Metric>,
}

pub const PRESET_NAMES: [&str; 5] = ["fig3", "fig5", "fig6", "fig7", "fig8"];

/// Fading is held for 20 slots except in the time-series preset, which
/// redraws it every slot.
fn network(su_pairs: usize, channels: usize, horizon: usize) -> ScenarioConfig {
    let mut c = ScenarioConfig {
        su_pairs,
        channels,
        horizon,
        replications: 200,
        seed: 2011,
        ..ScenarioConfig::default()
    };
    c.fading.coherence_slots = 20;
    c
}

fn apply_fig5(c: &mut ScenarioConfig, rho: f64) -> f64 {
    let d = if rho > 0.0 { -rho.ln() / FIG5_REFERENCE_A } else { f64::INFINITY };
    let a = c.fading.a.unwrap_or(FIG5_REFERENCE_A);
    c.fading.rho = None;
    c.fading.a = Some(a);
    c.fading.d = Some(d);
    correlation_from_spacing(a, d)
}

fn apply_fig6(c: &mut ScenarioConfig, snr_db: f64) -> f64 {
    c.fading.mean_snr_db = snr_db;
    snr_db
}

fn apply_fig7(c: &mut ScenarioConfig, nmse: f64) -> f64 {
    c.mismatch.nmse = nmse;
    nmse
}

/// Grid value 0 runs with error-free sensing as the reference point.
fn apply_fig8(c: &mut ScenarioConfig, target_pm: f64) -> f64 {
    c.detector.enabled = target_pm > 0.0;
    if target_pm > 0.0 {
        c.detector.target_pm = target_pm;
    }
    target_pm
}

impl Preset {
    pub fn by_name(name: &str) -> Result<Self> {
        let throughput = vec![Metric::AvgThroughput];
        let preset = match name {
            "fig3" => {
                let mut base = network(20, 40, 2000);
                base.fading.coherence_slots = 1;
                base.metrics.tail_slots = Some(500);
                Preset {
                    name: "fig3",
                    base,
                    sweep: None,
                    strategies: StrategyKind::ALL.to_vec(),
                    metrics: vec![Metric::AvgThroughput, Metric::TailThroughput],
                }
            }
            "fig5" => {
                let mut base = network(20, 40, 20);
                base.fading.model = FadingModel::LognormalCorr;
                base.fading.mean_snr_db = 10.0;
                base.fading.sigma_db = 5.0;
                base.fading.a = Some(FIG5_REFERENCE_A);
                base.fading.d = Some(f64::INFINITY);
                Preset {
                    name: "fig5",
                    base,
                    sweep: Some(Sweep {
                        var: "rho",
                        points: vec![0.0, 0.3, 0.6, 0.9, 0.99],
                        apply: apply_fig5,
                    }),
                    strategies: vec![StrategyKind::Random, StrategyKind::Myopic, StrategyKind::CsiAided],
                    metrics: throughput,
                }
            }
            "fig6" => {
                let mut base = network(20, 40, 20);
                base.reward.kind = RewardKind::AdaptiveModulation;
                base.reward.ber_target = 1e-3;
                Preset {
                    name: "fig6",
                    base,
                    sweep: Some(Sweep {
                        var: "mean_snr_db",
                        points: (0..=15).map(|i| 2.0 * i as f64).collect(),
                        apply: apply_fig6,
                    }),
                    strategies: vec![StrategyKind::Myopic, StrategyKind::MyopicCa, StrategyKind::CsiAided],
                    metrics: throughput,
                }
            }
            "fig7" => Preset {
                name: "fig7",
                base: network(3, 10, 20),
                sweep: Some(Sweep {
                    var: "nmse",
                    points: vec![0.0, 1e-3, 1e-2, 0.1, 0.5, 1.0],
                    apply: apply_fig7,
                }),
                strategies: vec![StrategyKind::Myopic, StrategyKind::CsiAided],
                metrics: throughput,
            },
            "fig8" => {
                let mut base = network(20, 40, 20);
                base.detector.enabled = true;
                base.detector.nu = 5;
                base.detector.pu_mean_snr_db = 10.0;
                Preset {
                    name: "fig8",
                    base,
                    sweep: Some(Sweep {
                        var: "target_pm",
                        points: vec![0.0, 0.01, 0.05, 0.1, 0.2, 0.4],
                        apply: apply_fig8,
                    }),
                    strategies: vec![StrategyKind::Myopic, StrategyKind::CsiAided],
                    metrics: vec![Metric::AvgThroughput, Metric::SpectralEfficiency],
                }
            }
            other => {
                return Err(Error::Usage(format!(
                    "unknown preset '{other}' (expected one of {})",
                    PRESET_NAMES.join(", ")
                )))
            }
        };
        Ok(preset)
    }
}

/// Per-run knobs layered over a preset or configuration file.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub overrides: Vec<Override>,
    pub seed: Option<u64>,
    pub replications: Option<usize>,
    pub execution: Execution,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            overrides: Vec::new(),
            seed: None,
            replications: None,
            execution: Execution::from_env(),
        }
    }
}

impl RunOptions {
    fn configure(&self, base: &ScenarioConfig) -> Result<ScenarioConfig> {
        let mut c = base.with_overrides(&self.overrides)?;
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(r) = self.replications {
            c.replications = r;
        }
        Ok(c)
    }
}

/// One line of the result CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub sweep_var: String,
    pub sweep_value: f64,
    pub strategy: String,
    pub metric: String,
    pub mean: f64,
    pub stderr: f64,
    pub slots: usize,
    pub replications: usize,
    pub seed: u64,
}

pub const CSV_HEADER: [&str; 9] = [
    "sweep_var",
    "sweep_value",
    "strategy",
    "metric",
    "mean",
    "stderr",
    "slots",
    "replications",
    "seed",
];

fn row(c: &ScenarioConfig, var: &str, value: f64, metric: Metric, e: Estimate) -> CsvRow {
    CsvRow {
        sweep_var: var.to_string(),
        sweep_value: value,
        strategy: c.strategy.kind.to_string(),
        metric: metric.as_str().to_string(),
        mean: e.mean,
        stderr: e.stderr,
        slots: c.horizon,
        replications: c.replications,
        seed: c.seed,
    }
}

/// Rows describing one Monte Carlo run over time: the throughput at every slot
/// plus the tail average.
fn time_series_rows(c: &ScenarioConfig, series: &MetricsSeries) -> Vec<CsvRow> {
    let mut rows: Vec<CsvRow> = series
        .throughput
        .iter()
        .enumerate()
        .map(|(i, e)| row(c, "slot", (i + 1) as f64, Metric::AvgThroughput, *e))
        .collect();
    rows.push(row(
        c,
        "tail_slots",
        series.tail_slots as f64,
        Metric::TailThroughput,
        series.tail_throughput,
    ));
    rows
}

fn simulate(c: &ScenarioConfig, execution: Execution) -> Result<MetricsSeries> {
    Simulation::new(c)?.run_monte_carlo(execution)
}

/// Runs every strategy of the preset at every sweep point.
pub fn run_preset(preset: &Preset, opts: &RunOptions) -> Result<Vec<CsvRow>> {
    let base = opts.configure(&preset.base)?;
    base.validate()?;
    let mut rows = Vec::new();
    match &preset.sweep {
        None => {
            for &kind in &preset.strategies {
                let mut c = base.clone();
                c.strategy.kind = kind;
                rows.extend(time_series_rows(&c, &simulate(&c, opts.execution)?));
            }
        }
        Some(sweep) => {
            for &point in &sweep.points {
                let mut at_point = base.clone();
                let reported = (sweep.apply)(&mut at_point, point);
                for &kind in &preset.strategies {
                    let mut c = at_point.clone();
                    c.strategy.kind = kind;
                    let series = simulate(&c, opts.execution)?;
                    for &m in &preset.metrics {
                        rows.push(row(&c, sweep.var, reported, m, m.estimate(&series)));
                    }
                }
            }
        }
    }
    Ok(rows)
}

/// Runs a single configured scenario and reports its time series.
pub fn run_scenario(config: &ScenarioConfig, opts: &RunOptions) -> Result<Vec<CsvRow>> {
    let c = opts.configure(config)?;
    c.validate()?;
    let series = simulate(&c, opts.execution)?;
    let mut rows = time_series_rows(&c, &series);
    rows.push(row(&c, "horizon", c.horizon as f64, Metric::SpectralEfficiency, series.spectral_efficiency));
    Ok(rows)
}

pub fn write_csv<W: Write>(rows: &[CsvRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    if rows.is_empty() {
        w.write_record(CSV_HEADER)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(Error::Contract(format!("unexpected CSV header {header:?}")));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Looks up the estimate for `(strategy, metric)` at `sweep_value`.
pub fn lookup<'a>(rows: &'a [CsvRow], strategy: StrategyKind, metric: Metric, sweep_value: f64) -> Option<&'a CsvRow> {
    rows.iter()
        .find(|r| r.strategy == strategy.as_str() && r.metric == metric.as_str() && r.sweep_value == sweep_value)
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Metric::AvgThroughput, Metric::TailThroughput, Metric::SpectralEfficiency]
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Usage(format!("unknown metric '{s}'")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pu_traffic::TransitionMatrix;

    #[test]
    fn preset_parameters() {
        let f3 = Preset::by_name("fig3").unwrap();
        assert_eq!((f3.base.su_pairs, f3.base.channels), (20, 40));
        assert_eq!(f3.base.bandwidths(), vec![1.0; 40]);
        assert_eq!(f3.base.pu, TransitionMatrix::new(0.8, 0.2, 0.2, 0.8).unwrap());
        assert_eq!(f3.base.fading.model, FadingModel::RayleighIid);
        assert_eq!(f3.base.fading.mean_snr_db, 10.0);
        assert_eq!(f3.base.horizon, 2000);
        assert_eq!(f3.base.fading.coherence_slots, 1);
        assert_eq!(f3.strategies.len(), 5);

        let f5 = Preset::by_name("fig5").unwrap();
        assert_eq!(f5.base.fading.model, FadingModel::LognormalCorr);
        assert_eq!(f5.base.fading.sigma_db, 5.0);

        let f6 = Preset::by_name("fig6").unwrap();
        assert_eq!(f6.base.reward.kind, RewardKind::AdaptiveModulation);
        assert_eq!(f6.base.reward.ber_target, 1e-3);
        assert_eq!(f6.sweep.as_ref().unwrap().points.last(), Some(&30.0));

        let f7 = Preset::by_name("fig7").unwrap();
        assert_eq!((f7.base.su_pairs, f7.base.channels), (3, 10));

        let f8 = Preset::by_name("fig8").unwrap();
        assert_eq!(f8.base.detector.nu, 5);
        assert_eq!(f8.base.detector.pu_mean_snr_db, 10.0);

        for name in PRESET_NAMES {
            let p = Preset::by_name(name).unwrap();
            assert_eq!(p.base.replications, 200);
            assert!(p.base.validate().is_ok(), "{name}");
            if name != "fig3" {
                assert_eq!(p.base.horizon, 20);
                assert_eq!(p.base.fading.coherence_slots, 20);
            }
        }
        assert!(matches!(Preset::by_name("fig4"), Err(Error::Usage(_))));
    }

    #[test]
    fn fig5_grid_follows_decay_constant() {
        let p = Preset::by_name("fig5").unwrap();
        let sweep = p.sweep.unwrap();
        let reported: Vec<f64> = sweep
            .points
            .iter()
            .map(|&v| {
                let mut c = p.base.clone();
                (sweep.apply)(&mut c, v)
            })
            .collect();
        for (r, v) in reported.iter().zip(&sweep.points) {
            assert!((r - v).abs() < 1e-12);
        }
        let doubled = p.base.with_overrides(&[Override::parse("fading.a=0.24").unwrap()]).unwrap();
        let mut c = doubled.clone();
        let r = (sweep.apply)(&mut c, 0.6);
        assert!((r - 0.36).abs() < 1e-12);
        assert!((c.shadowing_rho() - 0.36).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![
            CsvRow {
                sweep_var: "nmse".into(),
                sweep_value: 1e-3,
                strategy: "csi_aided".into(),
                metric: "avg_throughput".into(),
                mean: 2.123_456_789_012_345,
                stderr: 0.1 + 0.2,
                slots: 20,
                replications: 200,
                seed: u64::MAX,
            },
            CsvRow {
                sweep_var: "slot".into(),
                sweep_value: 3.0,
                strategy: "random".into(),
                metric: "tail_throughput".into(),
                mean: 0.0,
                stderr: 0.0,
                slots: 2000,
                replications: 1,
                seed: 0,
            },
        ];
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("sweep_var,sweep_value,strategy,metric,mean,stderr,slots,replications,seed\n"));
        assert!(!text.contains('\r'));
        assert_eq!(read_csv(&buf[..]).unwrap(), rows);

        let mut empty = Vec::new();
        write_csv(&[], &mut empty).unwrap();
        assert!(read_csv(&empty[..]).unwrap().is_empty());
        assert!(read_csv("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn small_sweep_produces_every_row() {
        let mut preset = Preset::by_name("fig8").unwrap();
        preset.base.su_pairs = 4;
        preset.base.channels = 6;
        preset.base.horizon = 5;
        let opts = RunOptions {
            replications: Some(3),
            execution: Execution::Sequential,
            ..RunOptions::default()
        };
        let rows = run_preset(&preset, &opts).unwrap();
        assert_eq!(rows.len(), 6 * 2 * 2);
        assert!(rows.iter().all(|r| r.replications == 3 && r.slots == 5 && r.sweep_var == "target_pm"));
        assert!(lookup(&rows, StrategyKind::CsiAided, Metric::SpectralEfficiency, 0.4).is_some());
    }

    #[test]
    fn scenario_rows_cover_the_horizon() {
        let c = ScenarioConfig {
            su_pairs: 2,
            channels: 3,
            horizon: 7,
            replications: 2,
            ..ScenarioConfig::default()
        };
        let rows = run_scenario(&c, &RunOptions { execution: Execution::Sequential, ..RunOptions::default() }).unwrap();
        assert_eq!(rows.len(), 7 + 2);
        assert_eq!(rows[6].sweep_value, 7.0);
    }
}
