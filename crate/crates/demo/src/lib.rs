//! Browser bindings for the `cellfree` simulator.
//!
//! Every entry point takes a JSON object of configuration overrides (keys of
//! `SystemConfig`; missing keys keep their defaults) and returns a JSON
//! string. The plain-Rust versions are exported for native tests.

use cellfree::config::SystemConfig;
use cellfree::experiment::{drop_scenario, run_experiment};
use cellfree::propagation::path_loss_with_branch;
use cellfree::sinr::Approach;
use cellfree::stats::empirical_cdf;
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Points kept per CDF curve.
const CDF_POINTS: usize = 200;
/// Drop cap for the in-browser run.
const MAX_DROPS: usize = 400;

fn parse_config(overrides: &str) -> Result<SystemConfig, String> {
    let cfg: SystemConfig = if overrides.trim().is_empty() {
        SystemConfig::default()
    } else {
        serde_json::from_str(overrides).map_err(|e| format!("bad config: {e}"))?
    };
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct PathLossPoint {
    d_km: f64,
    gain_db: f64,
    branch: &'static str,
}

#[derive(Serialize)]
struct PathLossCurve {
    d0: f64,
    d1: f64,
    points: Vec<PathLossPoint>,
}

/// Path gain on a log-spaced grid from 1 m to `max_km`.
pub fn path_loss_curve_json(overrides: &str, max_km: f64, points: usize) -> Result<String, String> {
    let cfg = parse_config(overrides)?;
    if !(max_km > 0.001) || points < 2 {
        return Err("need max_km > 0.001 and at least 2 points".into());
    }
    let (lo, hi) = (0.001f64.log10(), max_km.log10());
    let points = (0..points)
        .map(|i| {
            let d = 10f64.powf(lo + (hi - lo) * i as f64 / (points - 1) as f64);
            let (gain_db, branch) = path_loss_with_branch(d, &cfg);
            PathLossPoint {
                d_km: d,
                gain_db,
                branch: branch.name(),
            }
        })
        .collect();
    to_json(&PathLossCurve {
        d0: cfg.d0,
        d1: cfg.d1,
        points,
    })
}

#[derive(Serialize)]
struct Group {
    users: Vec<usize>,
    aps: Vec<usize>,
}

#[derive(Serialize)]
struct DropView {
    radius: f64,
    aps: Vec<[f64; 2]>,
    users: Vec<[f64; 2]>,
    /// Near APs of each user (SU-OAS), strongest first.
    near_aps: Vec<Vec<usize>>,
    /// UC serving sets.
    uc_aps: Vec<Vec<usize>>,
    /// MU-OAS groups with their activated APs.
    groups: Vec<Group>,
}

/// Positions and AP selections of one drop.
pub fn drop_view_json(overrides: &str, drop: u32) -> Result<String, String> {
    let cfg = parse_config(overrides)?;
    let s = drop_scenario(&cfg, u64::from(drop)).map_err(|e| e.to_string())?;
    let groups = s
        .plan
        .rb_users
        .iter()
        .zip(&s.plan.rb_aps)
        .map(|(u, a)| Group {
            users: u.clone(),
            aps: a.clone(),
        })
        .collect();
    to_json(&DropView {
        radius: cfg.radius,
        aps: s.topology.ap_positions,
        users: s.topology.user_positions,
        near_aps: s.plan.per_user_aps,
        uc_aps: s.plan.uc_ap_sets,
        groups,
    })
}

#[derive(Serialize)]
struct Series {
    approach: &'static str,
    direction: &'static str,
    p5: f64,
    median: f64,
    cdf: Vec<[f64; 2]>,
}

/// SE CDFs of every approach and direction over `cfg.drops` drops (capped).
pub fn se_cdfs_json(overrides: &str) -> Result<String, String> {
    let mut cfg = parse_config(overrides)?;
    cfg.drops = cfg.drops.min(MAX_DROPS);
    let report = run_experiment(&cfg, &Approach::ALL).map_err(|e| e.to_string())?;
    let series: Vec<Series> = report
        .summaries()
        .into_iter()
        .map(|s| {
            let cdf = empirical_cdf(&report.samples(s.approach, s.direction));
            let step = cdf.len().div_ceil(CDF_POINTS).max(1);
            let mut pts: Vec<[f64; 2]> = cdf.iter().step_by(step).map(|&(x, p)| [x, p]).collect();
            if let Some(&(x, p)) = cdf.last() {
                if pts.last() != Some(&[x, p]) {
                    pts.push([x, p]);
                }
            }
            Series {
                approach: s.approach.name(),
                direction: s.direction.name(),
                p5: s.summary.p5,
                median: s.summary.median,
                cdf: pts,
            }
        })
        .collect();
    to_json(&series)
}

fn js<T>(r: Result<T, String>) -> Result<T, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = pathLossCurve)]
pub fn path_loss_curve(overrides: &str, max_km: f64, points: usize) -> Result<String, JsError> {
    js(path_loss_curve_json(overrides, max_km, points))
}

#[wasm_bindgen(js_name = dropView)]
pub fn drop_view(overrides: &str, drop: u32) -> Result<String, JsError> {
    js(drop_view_json(overrides, drop))
}

#[wasm_bindgen(js_name = seCdfs)]
pub fn se_cdfs(overrides: &str) -> Result<String, JsError> {
    js(se_cdfs_json(overrides))
}

#[wasm_bindgen(js_name = defaultConfig)]
pub fn default_config() -> String {
    serde_json::to_string(&SystemConfig::default()).expect("config serializes")
}
