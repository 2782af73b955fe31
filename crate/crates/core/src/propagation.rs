//! Large-scale fading from the three-slope COST-Hata model with log-normal
//! shadowing.
//!
//! Inside the model formulas distances are in km and the carrier frequency in
//! MHz; the reference-loss constants are only calibrated for those units.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::config::{SystemConfig, Topology};

/// Path loss at the reference distance, dB (positive).
pub fn reference_loss(f_c_mhz: f64, h_ap: f64, h_ue: f64) -> f64 {
    let lf = f_c_mhz.log10();
    46.3 + 33.9 * lf - 13.82 * h_ap.log10() - (1.1 * lf - 0.7) * h_ue + 1.56 * lf - 0.8
}

/// Which segment of the three-slope model applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathLossBranch {
    /// `d <= d0`: constant.
    Flat,
    /// `d0 < d <= d1`: 20 dB/decade.
    TwoSlope,
    /// `d > d1`: 35 dB/decade.
    Far,
}

impl PathLossBranch {
    pub fn name(self) -> &'static str {
        match self {
            PathLossBranch::Flat => "flat (d <= d0)",
            PathLossBranch::TwoSlope => "20 dB/decade (d0 < d <= d1)",
            PathLossBranch::Far => "35 dB/decade (d > d1)",
        }
    }
}

/// Path gain in dB (a negative number) at distance `d` km, together with the
/// branch that produced it.
pub fn path_loss_with_branch(d: f64, config: &SystemConfig) -> (f64, PathLossBranch) {
    let l0 = reference_loss(config.f_c, config.h_ap, config.h_ue);
    let (d0, d1) = (config.d0, config.d1);
    if d > d1 {
        (-l0 - 35.0 * d.log10(), PathLossBranch::Far)
    } else if d > d0 {
        (-l0 - 15.0 * d1.log10() - 20.0 * d.log10(), PathLossBranch::TwoSlope)
    } else {
        (-l0 - 15.0 * d1.log10() - 20.0 * d0.log10(), PathLossBranch::Flat)
    }
}

pub fn path_loss(d: f64, config: &SystemConfig) -> f64 {
    path_loss_with_branch(d, config).0
}

/// Per (AP, user) large-scale quantities. Rows are APs, columns are users.
#[derive(Debug, Clone, PartialEq)]
pub struct LargeScaleMatrix {
    /// Linear power gain.
    pub beta: Array2<f64>,
    pub pathloss_db: Array2<f64>,
    pub shadow_db: Array2<f64>,
}

impl LargeScaleMatrix {
    /// Builds the matrix from dB components.
    pub fn from_db(pathloss_db: Array2<f64>, shadow_db: Array2<f64>) -> Self {
        let beta = ndarray::Zip::from(&pathloss_db)
            .and(&shadow_db)
            .map_collect(|&l, &s| 10f64.powf((l + s) / 10.0));
        LargeScaleMatrix {
            beta,
            pathloss_db,
            shadow_db,
        }
    }

    pub fn num_aps(&self) -> usize {
        self.beta.nrows()
    }

    pub fn num_users(&self) -> usize {
        self.beta.ncols()
    }
}

/// Path loss for every AP-user pair plus i.i.d. N(0, shadow_std^2) dB shadowing.
pub fn large_scale_matrix<R: Rng + ?Sized>(
    topology: &Topology,
    config: &SystemConfig,
    rng: &mut R,
) -> LargeScaleMatrix {
    let m = topology.ap_positions.len();
    let k = topology.user_positions.len();
    let pathloss_db =
        Array2::from_shape_fn((m, k), |(ap, ue)| path_loss(topology.distance(ap, ue), config));
    let shadow_db = if config.shadow_std > 0.0 {
        let normal = Normal::new(0.0, config.shadow_std).expect("shadow_std validated");
        Array2::from_shape_simple_fn((m, k), || normal.sample(rng))
    } else {
        Array2::zeros((m, k))
    };
    LargeScaleMatrix::from_db(pathloss_db, shadow_db)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::drop_topology;
    use crate::rng::{stream, Purpose};
    use approx::assert_abs_diff_eq;

    #[test]
    fn reference_loss_default() {
        assert_abs_diff_eq!(reference_loss(2000.0, 12.0, 1.7), 142.657_312_733_975, epsilon = 1e-9);
    }

    #[test]
    fn reference_loss_unit_frequency() {
        for h_ue in [0.0, 1.0, 1.7, 3.2] {
            assert_abs_diff_eq!(reference_loss(1.0, 1.0, h_ue), 45.5 + 0.7 * h_ue, epsilon = 1e-12);
        }
    }

    #[test]
    fn reference_loss_classic_setting() {
        // 1900 MHz, 15 m, 1.65 m: the commonly quoted 140.7 dB.
        assert_abs_diff_eq!(reference_loss(1900.0, 15.0, 1.65), 140.7, epsilon = 0.05);
    }

    #[test]
    fn path_loss_branches() {
        let cfg = SystemConfig::default();
        let l0 = reference_loss(cfg.f_c, cfg.h_ap, cfg.h_ue);
        assert_abs_diff_eq!(path_loss(1.0, &cfg), -l0, epsilon = 1e-12);
        assert_eq!(path_loss(0.005, &cfg), path_loss(0.01, &cfg));
        assert_eq!(path_loss(0.0, &cfg), path_loss(0.01, &cfg));
        assert_eq!(path_loss_with_branch(0.03, &cfg).1, PathLossBranch::TwoSlope);
        assert_eq!(path_loss_with_branch(0.3, &cfg).1, PathLossBranch::Far);
    }

    #[test]
    fn path_loss_continuous_at_breakpoints() {
        let cfg = SystemConfig::default();
        for b in [cfg.d0, cfg.d1] {
            let left = path_loss(b, &cfg);
            let right = path_loss(b * (1.0 + 1e-15), &cfg);
            assert!((left - right).abs() < 1e-12, "jump {} at {b}", left - right);
        }
    }

    #[test]
    fn path_loss_non_increasing() {
        let cfg = SystemConfig::default();
        let mut prev = f64::INFINITY;
        for i in 0..=20_000 {
            let d = i as f64 * 1e-4;
            let v = path_loss(d, &cfg);
            assert!(v <= prev + 1e-12);
            prev = v;
        }
    }

    #[test]
    fn no_shadowing_gives_pure_path_loss() {
        let cfg = SystemConfig {
            num_aps: 20,
            num_users: 4,
            shadow_std: 0.0,
            ..SystemConfig::default()
        };
        let topo = drop_topology(&cfg, 0);
        let lsm = large_scale_matrix(&topo, &cfg, &mut stream(1, 0, Purpose::Shadowing));
        for ((ap, ue), &b) in lsm.beta.indexed_iter() {
            assert_eq!(b, 10f64.powf(path_loss(topo.distance(ap, ue), &cfg) / 10.0));
            assert!(b > 0.0 && b.is_finite());
        }
        // Farther AP, weaker gain (both beyond d1).
        for ue in 0..4 {
            for a in 0..20 {
                for b in 0..20 {
                    let (da, db) = (topo.distance(a, ue), topo.distance(b, ue));
                    if da > cfg.d1 && db > cfg.d1 && da < db {
                        assert!(lsm.beta[[a, ue]] > lsm.beta[[b, ue]]);
                    }
                }
            }
        }
    }

    #[test]
    fn shadowing_std() {
        let cfg = SystemConfig {
            num_aps: 1000,
            num_users: 100,
            ..SystemConfig::default()
        };
        let topo = drop_topology(&cfg, 0);
        let lsm = large_scale_matrix(&topo, &cfg, &mut stream(3, 0, Purpose::Shadowing));
        let n = lsm.shadow_db.len() as f64;
        let mean = lsm.shadow_db.sum() / n;
        let std = (lsm.shadow_db.mapv(|s| (s - mean).powi(2)).sum() / (n - 1.0)).sqrt();
        assert!((std / 8.0 - 1.0).abs() < 0.01, "std {std}");
        assert!(lsm.beta.iter().all(|&b| b > 0.0 && b.is_finite()));
    }
}
