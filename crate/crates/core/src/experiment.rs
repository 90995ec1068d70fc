//! Experiment orchestration: single runs, BS-power and element-count sweeps,
//! and their CSV/JSON artifacts.
//!
//! Every run is a pure function of `(config, scheme, seed)`. Sweep cells run
//! on the worker pool and merge in grid order, so output files are
//! byte-identical across reruns and execution modes.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{greedy_optimize, passive_ris_config, random_search, BaselineResult};
use crate::comms::PrecoderPair;
use crate::config::{ExperimentConfig, LinearUnits};
use crate::ddpg::{train, DdpgAgent};
use crate::env::IsacEnv;
use crate::error::{Error, Result};
use crate::par::{map_indexed, Exec};
use crate::scenario::Scenario;

/// Seed stream of the agent, kept apart from the channel stream.
const AGENT_STREAM: u64 = 0x0061_6765_6e74;

/// Optimization scheme run by an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// DDPG agent on the hybrid surface.
    Ddpg,
    /// Best of `baselines.random_samples` projected random pairs.
    Random,
    /// Greedy coordinate search.
    Greedy,
    /// DDPG agent on the same surface with every element passive.
    PassiveRis,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [
        Scheme::Ddpg,
        Scheme::Random,
        Scheme::Greedy,
        Scheme::PassiveRis,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Ddpg => "ddpg",
            Scheme::Random => "random",
            Scheme::Greedy => "greedy",
            Scheme::PassiveRis => "passive-ris",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown scheme '{s}' (expected ddpg, random, greedy or passive-ris)"
                ))
            })
    }
}

/// Headline numbers of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub best_reward: f64,
    /// DDPG: mean reward over the last quarter of steps. Baselines: the
    /// reward of the returned pair.
    pub final_mean_reward: f64,
    /// Sum rate of the best-reward pair.
    pub best_sum_rate: f64,
    /// Scalar CRB of the best-reward pair.
    pub best_crb: f64,
    pub steps: usize,
}

/// One telemetry line. Baseline rows leave the per-step metrics empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRow {
    pub config_hash: String,
    pub seed: u64,
    pub scheme: Scheme,
    pub episode: usize,
    pub step: usize,
    pub reward: f64,
    pub best_reward: f64,
    pub sum_rate: Option<f64>,
    pub crb: Option<f64>,
    pub penalty: Option<f64>,
    pub feasible: Option<bool>,
    pub critic_loss: Option<f64>,
    pub mean_q: Option<f64>,
    pub noise_scale: Option<f64>,
}

/// Result of [`run_scheme`].
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub telemetry: Vec<TelemetryRow>,
    pub pair: PrecoderPair,
}

/// Manifest written next to a run's telemetry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub seed: u64,
    pub scheme: Scheme,
    pub telemetry_path: PathBuf,
    pub summary: RunSummary,
    /// Budgets and noise powers after unit conversion.
    pub linear_units: LinearUnits,
}

fn baseline_output(hash: &str, seed: u64, scheme: Scheme, res: BaselineResult) -> RunOutput {
    let telemetry = res
        .history
        .iter()
        .enumerate()
        .map(|(i, &r)| TelemetryRow {
            config_hash: hash.to_owned(),
            seed,
            scheme,
            episode: 0,
            step: i,
            reward: r,
            best_reward: r,
            sum_rate: None,
            crb: None,
            penalty: None,
            feasible: None,
            critic_loss: None,
            mean_q: None,
            noise_scale: None,
        })
        .collect();
    RunOutput {
        summary: RunSummary {
            best_reward: res.eval.reward,
            final_mean_reward: res.eval.reward,
            best_sum_rate: res.eval.sum_rate,
            best_crb: res.eval.crb,
            steps: res.history.len(),
        },
        telemetry,
        pair: res.pair,
    }
}

fn ddpg_output(cfg: &ExperimentConfig, hash: &str, seed: u64, scheme: Scheme) -> Result<RunOutput> {
    let mut env = IsacEnv::new(cfg, seed)?;
    let mut agent = DdpgAgent::new(
        env.state_dim(),
        env.action_dim(),
        &cfg.agent,
        seed ^ AGENT_STREAM,
    )?;
    let res = train(&mut env, &mut agent, cfg.agent.episodes)?;
    let mut best = f64::NEG_INFINITY;
    let telemetry = res
        .log
        .iter()
        .map(|l| {
            best = best.max(l.reward);
            TelemetryRow {
                config_hash: hash.to_owned(),
                seed,
                scheme,
                episode: l.episode,
                step: l.step,
                reward: l.reward,
                best_reward: best,
                sum_rate: Some(l.sum_rate),
                crb: Some(l.crb),
                penalty: Some(l.penalty),
                feasible: Some(l.feasible),
                critic_loss: l.loss_critic.is_finite().then_some(l.loss_critic),
                mean_q: l.mean_q.is_finite().then_some(l.mean_q),
                noise_scale: Some(l.noise_scale),
            }
        })
        .collect();
    Ok(RunOutput {
        summary: RunSummary {
            best_reward: res.best_reward,
            final_mean_reward: res.final_quartile_mean(),
            best_sum_rate: res.best_sum_rate,
            best_crb: res.best_crb,
            steps: res.log.len(),
        },
        telemetry,
        pair: res.best_pair,
    })
}

/// Runs one scheme on the channels of `seed`.
pub fn run_scheme(cfg: &ExperimentConfig, scheme: Scheme, seed: u64) -> Result<RunOutput> {
    cfg.validate()?;
    let hash = cfg.hash();
    match scheme {
        Scheme::Ddpg => ddpg_output(cfg, &hash, seed, scheme),
        Scheme::PassiveRis => ddpg_output(&passive_ris_config(cfg), &hash, seed, scheme),
        Scheme::Random => {
            let s = Scenario::build(cfg, seed)?;
            let res = random_search(&s, cfg.baselines.random_samples, seed, cfg.run.exec)?;
            Ok(baseline_output(&hash, seed, scheme, res))
        }
        Scheme::Greedy => {
            let s = Scenario::build(cfg, seed)?;
            let res = greedy_optimize(&s, &cfg.baselines)?;
            Ok(baseline_output(&hash, seed, scheme, res))
        }
    }
}

/// Fails with a usage error when any of `paths` exists and `force` is off.
pub fn guard_outputs(paths: &[&Path], force: bool) -> Result<()> {
    if force {
        return Ok(());
    }
    match paths.iter().find(|p| p.exists()) {
        Some(p) => Err(Error::Usage(format!(
            "{} exists; pass --force to overwrite",
            p.display()
        ))),
        None => Ok(()),
    }
}

/// Writes serializable rows as a CSV with a header row.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Csv(e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::Csv(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Runs one scheme and writes `telemetry.csv`, `summary.json` and the
/// resolved `config.toml` into `out_dir`.
pub fn cmd_train(
    cfg: &ExperimentConfig,
    scheme: Scheme,
    seed: u64,
    out_dir: &Path,
    force: bool,
) -> Result<RunRecord> {
    let telemetry_path = out_dir.join("telemetry.csv");
    let summary_path = out_dir.join("summary.json");
    let config_path = out_dir.join("config.toml");
    guard_outputs(&[&telemetry_path, &summary_path, &config_path], force)?;
    let out = run_scheme(cfg, scheme, seed)?;
    write_csv(&telemetry_path, &out.telemetry)?;
    let record = RunRecord {
        config_hash: cfg.hash(),
        seed,
        scheme,
        telemetry_path,
        summary: out.summary,
        linear_units: cfg.linear(),
    };
    let json = serde_json::to_string_pretty(&record).map_err(|e| Error::Csv(e.to_string()))?;
    std::fs::write(&summary_path, json + "\n")?;
    std::fs::write(&config_path, cfg.to_toml_string())?;
    Ok(record)
}

/// Status column value of a successful cell.
pub const STATUS_OK: &str = "ok";

/// One (power, scheme, seed) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub config_hash: String,
    pub seed: u64,
    pub scheme: Scheme,
    pub power_dbm: f64,
    pub best_reward: f64,
    pub final_mean_reward: f64,
    pub sum_rate: f64,
    pub crb: f64,
    pub status: String,
}

/// One (N, surface, scheme, seed) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementsRow {
    pub config_hash: String,
    pub seed: u64,
    pub scheme: Scheme,
    /// `hris` or `passive`.
    pub surface: String,
    pub n: usize,
    pub q: usize,
    pub a_max: f64,
    pub best_reward: f64,
    pub final_mean_reward: f64,
    pub sum_rate: f64,
    pub crb: f64,
    pub status: String,
}

/// Mean over the successful seeds of one series point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanRow {
    pub series: String,
    pub x: f64,
    pub mean_sum_rate: f64,
    pub mean_best_reward: f64,
    pub seeds_ok: usize,
    pub seeds_failed: usize,
}

fn cell_metrics(res: &Result<RunOutput>) -> (f64, f64, f64, f64, String) {
    match res {
        Ok(o) => {
            let s = &o.summary;
            (
                s.best_reward,
                s.final_mean_reward,
                s.best_sum_rate,
                s.best_crb,
                STATUS_OK.to_owned(),
            )
        }
        Err(e) => (
            f64::NAN,
            f64::NAN,
            f64::NAN,
            f64::NAN,
            format!("error: {e}"),
        ),
    }
}

/// Runs every (power, scheme, seed) cell, keeping failed cells as rows.
pub fn sweep_power(
    cfg: &ExperimentConfig,
    powers: &[f64],
    schemes: &[Scheme],
    seeds: &[u64],
    exec: Exec,
) -> Vec<PowerRow> {
    let mut grid = Vec::new();
    for &p in powers {
        for &scheme in schemes {
            for &seed in seeds {
                grid.push((p, scheme, seed));
            }
        }
    }
    map_indexed(exec, grid.len(), |i| {
        let (p, scheme, seed) = grid[i];
        let mut c = cfg.clone();
        c.budgets.p_bs_max_dbm = p;
        let (best_reward, final_mean_reward, sum_rate, crb, status) =
            cell_metrics(&run_scheme(&c, scheme, seed));
        PowerRow {
            config_hash: c.hash(),
            seed,
            scheme,
            power_dbm: p,
            best_reward,
            final_mean_reward,
            sum_rate,
            crb,
            status,
        }
    })
}

/// Active elements used at `n` surface elements: a quarter, rounded up.
pub fn active_for(n: usize) -> usize {
    n.div_ceil(4)
}

/// Runs every (N, surface, scheme, seed) cell. Each scheme is run on the
/// hybrid surface once per `a_max` and once on the passive surface;
/// `passive-ris` runs only on the passive surface.
pub fn sweep_elements(
    cfg: &ExperimentConfig,
    elements: &[usize],
    amax: &[f64],
    schemes: &[Scheme],
    seeds: &[u64],
    exec: Exec,
) -> Vec<ElementsRow> {
    let mut grid: Vec<(usize, Scheme, Option<f64>, u64)> = Vec::new();
    for &n in elements {
        for &scheme in schemes {
            let mut surfaces: Vec<Option<f64>> = Vec::new();
            if scheme != Scheme::PassiveRis {
                surfaces.extend(amax.iter().map(|&a| Some(a)));
            }
            surfaces.push(None);
            for a in surfaces {
                for &seed in seeds {
                    grid.push((n, scheme, a, seed));
                }
            }
        }
    }
    map_indexed(exec, grid.len(), |i| {
        let (n, scheme, a, seed) = grid[i];
        let mut c = cfg.clone();
        c.system.ris_elements = n;
        c.system.active_elements = active_for(n);
        let (surface, run_scheme_as) = match a {
            Some(a) => {
                c.budgets.a_max = a;
                ("hris", scheme)
            }
            None => {
                c = passive_ris_config(&c);
                (
                    "passive",
                    if scheme == Scheme::PassiveRis {
                        Scheme::Ddpg
                    } else {
                        scheme
                    },
                )
            }
        };
        let (best_reward, final_mean_reward, sum_rate, crb, status) =
            cell_metrics(&run_scheme(&c, run_scheme_as, seed));
        ElementsRow {
            config_hash: c.hash(),
            seed,
            scheme,
            surface: surface.to_owned(),
            n,
            q: c.system.active_elements,
            a_max: c.budgets.a_max,
            best_reward,
            final_mean_reward,
            sum_rate,
            crb,
            status,
        }
    })
}

/// Running sums for one (series, x) group.
#[derive(Default)]
struct Tally {
    x: f64,
    rate: f64,
    reward: f64,
    ok: usize,
    failed: usize,
}

fn aggregate<'a>(points: impl Iterator<Item = (String, f64, f64, f64, &'a str)>) -> Vec<MeanRow> {
    let mut acc: BTreeMap<(String, u64), Tally> = BTreeMap::new();
    for (series, x, rate, reward, status) in points {
        let e = acc.entry((series, x.to_bits())).or_insert_with(|| Tally {
            x,
            ..Tally::default()
        });
        if status == STATUS_OK {
            e.rate += rate;
            e.reward += reward;
            e.ok += 1;
        } else {
            e.failed += 1;
        }
    }
    let mean = |sum: f64, n: usize| if n > 0 { sum / n as f64 } else { f64::NAN };
    let mut rows: Vec<MeanRow> = acc
        .into_iter()
        .map(|((series, _), t)| MeanRow {
            series,
            x: t.x,
            mean_sum_rate: mean(t.rate, t.ok),
            mean_best_reward: mean(t.reward, t.ok),
            seeds_ok: t.ok,
            seeds_failed: t.failed,
        })
        .collect();
    rows.sort_by(|a, b| a.series.cmp(&b.series).then(a.x.total_cmp(&b.x)));
    rows
}

/// Seed-averaged table of a power sweep, one series per scheme.
pub fn power_means(rows: &[PowerRow]) -> Vec<MeanRow> {
    aggregate(rows.iter().map(|r| {
        (
            r.scheme.to_string(),
            r.power_dbm,
            r.sum_rate,
            r.best_reward,
            r.status.as_str(),
        )
    }))
}

/// Label of an elements-sweep series.
pub fn elements_series(r: &ElementsRow) -> String {
    match r.surface.as_str() {
        "hris" => format!("{}/hris/amax={}", r.scheme, r.a_max),
        _ => format!("{}/passive", r.scheme),
    }
}

/// Seed-averaged table of an elements sweep, one series per scheme and surface.
pub fn elements_means(rows: &[ElementsRow]) -> Vec<MeanRow> {
    aggregate(rows.iter().map(|r| {
        (
            elements_series(r),
            r.n as f64,
            r.sum_rate,
            r.best_reward,
            r.status.as_str(),
        )
    }))
}

/// Files written by a sweep and how many cells failed.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub rows_path: PathBuf,
    pub means_path: PathBuf,
    pub cells: usize,
    pub failures: usize,
}

impl SweepOutcome {
    /// Error naming the failed cells, if any; the files are written first.
    pub fn into_result(self) -> Result<Self> {
        if self.failures == 0 {
            Ok(self)
        } else {
            Err(Error::Usage(format!(
                "{} of {} sweep cells failed; partial results kept in {}",
                self.failures,
                self.cells,
                self.rows_path.display()
            )))
        }
    }
}

/// Power sweep over the grid in `cfg.sweep`, written to `power_sweep.csv`
/// and `power_means.csv`.
pub fn cmd_sweep_power(
    cfg: &ExperimentConfig,
    seeds: &[u64],
    schemes: &[Scheme],
    out_dir: &Path,
    force: bool,
) -> Result<SweepOutcome> {
    cfg.validate()?;
    let rows_path = out_dir.join("power_sweep.csv");
    let means_path = out_dir.join("power_means.csv");
    guard_outputs(&[&rows_path, &means_path], force)?;
    let rows = sweep_power(cfg, &cfg.sweep.powers_dbm, schemes, seeds, cfg.run.exec);
    write_csv(&rows_path, &rows)?;
    write_csv(&means_path, &power_means(&rows))?;
    let failures = rows.iter().filter(|r| r.status != STATUS_OK).count();
    Ok(SweepOutcome {
        rows_path,
        means_path,
        cells: rows.len(),
        failures,
    })
}

/// Element-count sweep over the grid in `cfg.sweep`, written to
/// `elements_sweep.csv` and `elements_means.csv`.
pub fn cmd_sweep_elements(
    cfg: &ExperimentConfig,
    seeds: &[u64],
    schemes: &[Scheme],
    out_dir: &Path,
    force: bool,
) -> Result<SweepOutcome> {
    cfg.validate()?;
    let rows_path = out_dir.join("elements_sweep.csv");
    let means_path = out_dir.join("elements_means.csv");
    guard_outputs(&[&rows_path, &means_path], force)?;
    let rows = sweep_elements(
        cfg,
        &cfg.sweep.elements,
        &cfg.sweep.amax_values,
        schemes,
        seeds,
        cfg.run.exec,
    );
    write_csv(&rows_path, &rows)?;
    write_csv(&means_path, &elements_means(&rows))?;
    let failures = rows.iter().filter(|r| r.status != STATUS_OK).count();
    Ok(SweepOutcome {
        rows_path,
        means_path,
        cells: rows.len(),
        failures,
    })
}
