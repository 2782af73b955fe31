//! Monte Carlo drops, per-user SE samples, summaries, sweeps and report
//! files.
//!
//! Every drop is a pure function of `(config, drop index)`. All approaches
//! in a drop share its topology and shadowing, and sweep points reuse the
//! same seeds, so comparisons use common random numbers.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{drop_topology, SystemConfig, Topology};
use crate::error::{Error, Result};
use crate::estimation::EstimationStats;
use crate::propagation::{large_scale_matrix, LargeScaleMatrix};
use crate::rng::{self, Purpose};
use crate::selection::SelectionPlan;
use crate::sinr::{self, full_power_allocation, spectral_efficiency, Approach, Direction, OasVariant, SinrInputs};
use crate::stats::{self, Summary, PERCENTILE_METHOD};

/// A reported curve: an approach, plus MU-OAS with non-coherent downlink
/// detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Scheme {
    #[serde(rename = "cf")]
    Cf,
    #[serde(rename = "uc")]
    Uc,
    #[serde(rename = "su-oas")]
    SuOas,
    #[serde(rename = "mu-oas")]
    MuOas,
    #[serde(rename = "mu-oas-nc")]
    MuOasNoncoherent,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Cf => "cf",
            Scheme::Uc => "uc",
            Scheme::SuOas => "su-oas",
            Scheme::MuOas => "mu-oas",
            Scheme::MuOasNoncoherent => "mu-oas-nc",
        }
    }

    pub fn approach(self) -> Approach {
        match self {
            Scheme::Cf => Approach::Cf,
            Scheme::Uc => Approach::Uc,
            Scheme::SuOas => Approach::SuOas,
            Scheme::MuOas | Scheme::MuOasNoncoherent => Approach::MuOas,
        }
    }
}

impl From<Approach> for Scheme {
    fn from(a: Approach) -> Self {
        match a {
            Approach::Cf => Scheme::Cf,
            Approach::Uc => Scheme::Uc,
            Approach::SuOas => Scheme::SuOas,
            Approach::MuOas => Scheme::MuOas,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One row of `samples.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleRow {
    pub drop: u64,
    pub user: usize,
    #[serde(rename = "approach")]
    pub scheme: Scheme,
    pub direction: Direction,
    pub sinr: f64,
    pub se_bps_hz: f64,
}

/// Geometry, gains and associations of one drop.
#[derive(Debug, Clone)]
pub struct DropScenario {
    pub topology: Topology,
    pub lsm: LargeScaleMatrix,
    pub est: EstimationStats,
    pub plan: SelectionPlan,
}

pub fn drop_scenario(config: &SystemConfig, drop_index: u64) -> Result<DropScenario> {
    let topology = drop_topology(config, drop_index);
    let lsm = large_scale_matrix(
        &topology,
        config,
        &mut rng::stream(config.seed, drop_index, Purpose::Shadowing),
    );
    let est = EstimationStats::from_large_scale(&lsm, config.p_u, config.p_d, config.noise_power());
    let plan = SelectionPlan::build(&lsm.beta, config)?;
    Ok(DropScenario {
        topology,
        lsm,
        est,
        plan,
    })
}

/// Closed-form SINR and SE of every user for the requested approaches in
/// drop `drop_index`. MU-OAS also yields its non-coherent downlink variant.
///
/// Only second-order statistics enter the closed forms, so no small-scale
/// channel is drawn here.
pub fn run_drop(config: &SystemConfig, drop_index: u64, approaches: &[Approach]) -> Result<Vec<SampleRow>> {
    let DropScenario { lsm, est, plan, .. } = drop_scenario(config, drop_index)?;
    let sigma2 = est.sigma2;
    let k_total = config.num_users;

    let mut rows = Vec::new();
    let mut push = |scheme: Scheme, direction: Direction, user: usize, gamma: f64| {
        rows.push(SampleRow {
            drop: drop_index,
            user,
            scheme,
            direction,
            sinr: gamma,
            se_bps_hz: spectral_efficiency(gamma),
        })
    };
    for &approach in approaches {
        let power = full_power_allocation(approach, &plan, &est.alpha);
        let inputs = SinrInputs {
            beta: &lsm.beta,
            alpha: &est.alpha,
            psi: &est.psi,
            power: &power,
            sets: &plan,
            noise_over_pu: sigma2 / config.p_u,
            noise_over_pd: sigma2 / config.p_d,
        };
        for direction in [Direction::Uplink, Direction::Downlink] {
            for k in 0..k_total {
                push(approach.into(), direction, k, sinr::sinr(approach, direction, k, &inputs));
            }
        }
        if approach == Approach::MuOas {
            for k in 0..k_total {
                let g = sinr::downlink_sinr_oas(OasVariant::MuNoncoherent, k, &inputs);
                push(Scheme::MuOasNoncoherent, Direction::Downlink, k, g);
            }
        }
    }
    Ok(rows)
}

/// Summary entry of one (scheme, direction) series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesSummary {
    pub approach: Scheme,
    pub direction: Direction,
    #[serde(flatten)]
    pub summary: Summary,
}

/// All samples of an experiment plus their per-series summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct SeReport {
    pub config: SystemConfig,
    pub rows: Vec<SampleRow>,
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    seed: u64,
    drops: usize,
    samples_per_series: usize,
    percentile_method: &'static str,
    series: Vec<SeriesSummary>,
    config: &'a SystemConfig,
}

#[derive(Serialize)]
struct CdfRow {
    approach: Scheme,
    direction: Direction,
    se: f64,
    cum_prob: f64,
}

impl SeReport {
    /// SE samples of one series in (drop, user) order.
    pub fn samples(&self, scheme: Scheme, direction: Direction) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.scheme == scheme && r.direction == direction)
            .map(|r| r.se_bps_hz)
            .collect()
    }

    pub fn series(&self) -> Vec<(Scheme, Direction)> {
        let mut keys: Vec<_> = self.rows.iter().map(|r| (r.scheme, r.direction)).collect();
        keys.sort();
        keys.dedup();
        keys
    }

    pub fn summary(&self, scheme: Scheme, direction: Direction) -> Option<Summary> {
        Summary::of(&self.samples(scheme, direction))
    }

    pub fn percentile(&self, scheme: Scheme, direction: Direction, q: f64) -> Option<f64> {
        stats::percentile(&self.samples(scheme, direction), q)
    }

    pub fn summaries(&self) -> Vec<SeriesSummary> {
        self.series()
            .into_iter()
            .filter_map(|(scheme, direction)| {
                Some(SeriesSummary {
                    approach: scheme,
                    direction,
                    summary: self.summary(scheme, direction)?,
                })
            })
            .collect()
    }

    pub fn summary_json(&self) -> Result<String> {
        let series = self.summaries();
        let file = SummaryFile {
            seed: self.config.seed,
            drops: self.config.drops,
            samples_per_series: series.first().map_or(0, |s| s.summary.count),
            percentile_method: PERCENTILE_METHOD,
            series,
            config: &self.config,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    /// Writes `samples.csv`, `summary.json` and `cdf.csv` into `dir`.
    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("samples.csv"))?;
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;

        fs::write(dir.join("summary.json"), self.summary_json()? + "\n")?;

        let mut w = csv::Writer::from_path(dir.join("cdf.csv"))?;
        for (scheme, direction) in self.series() {
            for (se, cum_prob) in stats::empirical_cdf(&self.samples(scheme, direction)) {
                w.serialize(CdfRow {
                    approach: scheme,
                    direction,
                    se,
                    cum_prob,
                })?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs `config.drops` drops in parallel. Rows come out in drop order no
/// matter how many worker threads run.
pub fn run_experiment(config: &SystemConfig, approaches: &[Approach]) -> Result<SeReport> {
    config.validate()?;
    let per_drop = (0..config.drops as u64)
        .into_par_iter()
        .map(|d| run_drop(config, d, approaches))
        .collect::<Result<Vec<_>>>()?;
    Ok(SeReport {
        config: config.clone(),
        rows: per_drop.into_iter().flatten().collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SweepAxis {
    /// Users per RB.
    #[serde(rename = "nu")]
    UsersPerRb,
    /// Near APs per user.
    #[serde(rename = "ms")]
    ApsPerUser,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::UsersPerRb => "nu",
            SweepAxis::ApsPerUser => "ms",
        }
    }

    fn apply(self, config: &SystemConfig, value: usize) -> SystemConfig {
        let mut c = config.clone();
        match self {
            SweepAxis::UsersPerRb => c.users_per_rb = value,
            SweepAxis::ApsPerUser => c.aps_per_user = value,
        }
        c
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nu" => Ok(SweepAxis::UsersPerRb),
            "ms" => Ok(SweepAxis::ApsPerUser),
            _ => Err(Error::invalid(format!("unknown sweep axis '{s}' (nu, ms)"))),
        }
    }
}

/// One 5th-percentile curve along the sweep axis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCurve {
    pub approach: Scheme,
    pub direction: Direction,
    pub p5: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub values: Vec<usize>,
    pub curves: Vec<SweepCurve>,
}

#[derive(Serialize)]
struct SweepRow {
    axis: &'static str,
    value: usize,
    approach: Scheme,
    direction: Direction,
    p5_se_bps_hz: f64,
}

impl SweepResult {
    pub fn curve(&self, scheme: Scheme, direction: Direction) -> Option<&[f64]> {
        self.curves
            .iter()
            .find(|c| c.approach == scheme && c.direction == direction)
            .map(|c| c.p5.as_slice())
    }

    /// Writes `sweep.csv` and `sweep.json` into `dir`.
    pub fn write_outputs(&self, dir: &Path, config: &SystemConfig) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("sweep.csv"))?;
        for curve in &self.curves {
            for (&value, &p5) in self.values.iter().zip(&curve.p5) {
                w.serialize(SweepRow {
                    axis: self.axis.name(),
                    value,
                    approach: curve.approach,
                    direction: curve.direction,
                    p5_se_bps_hz: p5,
                })?;
            }
        }
        w.flush()?;
        #[derive(Serialize)]
        struct File<'a> {
            sweep: &'a SweepResult,
            percentile_method: &'static str,
            config: &'a SystemConfig,
        }
        let json = serde_json::to_string_pretty(&File {
            sweep: self,
            percentile_method: PERCENTILE_METHOD,
            config,
        })?;
        fs::write(dir.join("sweep.json"), json + "\n")?;
        Ok(())
    }
}

/// Runs one experiment per axis value with the same seed and collects the
/// 5th-percentile SE of every series.
pub fn sweep(config: &SystemConfig, axis: SweepAxis, values: &[usize], approaches: &[Approach]) -> Result<SweepResult> {
    if values.is_empty() {
        return Err(Error::invalid("sweep needs at least one value"));
    }
    let mut curves: BTreeMap<(Scheme, Direction), Vec<f64>> = BTreeMap::new();
    for &v in values {
        let cfg = axis.apply(config, v);
        cfg.validate()?;
        let report = run_experiment(&cfg, approaches)?;
        for (scheme, direction) in report.series() {
            let p5 = report.percentile(scheme, direction, 5.0).expect("nonempty series");
            curves.entry((scheme, direction)).or_default().push(p5);
        }
    }
    Ok(SweepResult {
        axis,
        values: values.to_vec(),
        curves: curves
            .into_iter()
            .map(|((approach, direction), p5)| SweepCurve { approach, direction, p5 })
            .collect(),
    })
}
