//! Simulation parameters and random network geometry.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

/// How the near-AP set of a user is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMode {
    /// The `aps_per_user` strongest APs.
    #[default]
    Fixed,
    /// Every AP whose gain reaches `threshold_coeff` times the user's mean gain.
    Threshold,
}

/// How user-centric serving sets are built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum UcMode {
    /// Each user is served by its own near-AP set.
    #[default]
    NearestAps,
    /// Each AP serves its `uc_users_per_ap` strongest users; a user's serving
    /// set is every AP that picked it (possibly none).
    TopUsers,
}

/// All physical and experiment parameters.
///
/// Units follow the COST-Hata convention used by [`crate::propagation`]:
/// distances in km, carrier frequency in MHz, antenna heights in m.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub num_aps: usize,
    pub num_users: usize,
    /// Disc radius, km.
    pub radius: f64,
    /// AP transmit power, W.
    pub p_d: f64,
    /// User transmit power, W.
    pub p_u: f64,
    /// dBm/Hz.
    pub noise_density: f64,
    /// dB.
    pub noise_figure: f64,
    /// Hz.
    pub bandwidth: f64,
    /// Shadowing standard deviation, dB.
    pub shadow_std: f64,
    /// Carrier frequency, MHz.
    pub f_c: f64,
    /// m.
    pub h_ap: f64,
    /// m.
    pub h_ue: f64,
    /// First path-loss breakpoint, km.
    pub d0: f64,
    /// Second path-loss breakpoint, km.
    pub d1: f64,
    /// Users sharing one resource block under MU-OAS.
    pub users_per_rb: usize,
    /// Near APs per user (fixed-number selection).
    pub aps_per_user: usize,
    /// Threshold coefficient for threshold-based selection.
    pub threshold_coeff: f64,
    pub selection: SelectionMode,
    /// Overrides the MU-OAS activated-AP budget (default `users_per_rb * aps_per_user`).
    pub mu_ap_budget: Option<usize>,
    pub uc_mode: UcMode,
    /// Users per AP under [`UcMode::TopUsers`] (default `ceil(K * M_s / M)`).
    pub uc_users_per_ap: Option<usize>,
    pub drops: usize,
    pub seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            num_aps: 256,
            num_users: 16,
            radius: 1.0,
            p_d: 0.2,
            p_u: 0.2,
            noise_density: -174.0,
            noise_figure: 9.0,
            bandwidth: 5e6,
            shadow_std: 8.0,
            f_c: 2000.0,
            h_ap: 12.0,
            h_ue: 1.7,
            d0: 0.01,
            d1: 0.05,
            users_per_rb: 4,
            aps_per_user: 5,
            threshold_coeff: 1.0,
            selection: SelectionMode::Fixed,
            mu_ap_budget: None,
            uc_mode: UcMode::NearestAps,
            uc_users_per_ap: None,
            drops: 300,
            seed: 1,
        }
    }
}

impl SystemConfig {
    /// Parses a flat TOML document. Missing keys take their default values.
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: SystemConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.num_users == 0 {
            return bad("num_users must be at least 1".into());
        }
        if self.num_aps < self.num_users {
            return bad(format!(
                "num_aps ({}) must be >= num_users ({})",
                self.num_aps, self.num_users
            ));
        }
        if self.aps_per_user == 0 || self.aps_per_user > self.num_aps {
            return bad(format!("aps_per_user must be in 1..={}", self.num_aps));
        }
        if self.users_per_rb == 0 {
            return bad("users_per_rb must be at least 1".into());
        }
        if !(self.d0 > 0.0 && self.d0 < self.d1 && self.d1 < self.radius) {
            return bad("breakpoints must satisfy 0 < d0 < d1 < radius".into());
        }
        for (name, v) in [
            ("p_d", self.p_d),
            ("p_u", self.p_u),
            ("bandwidth", self.bandwidth),
            ("f_c", self.f_c),
            ("h_ap", self.h_ap),
            ("h_ue", self.h_ue),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive"));
            }
        }
        if !(self.shadow_std >= 0.0) {
            return bad("shadow_std must be non-negative".into());
        }
        if !(self.threshold_coeff >= 0.0) {
            return bad("threshold_coeff must be non-negative".into());
        }
        if let Some(n) = self.mu_ap_budget {
            if n == 0 || n > self.num_aps {
                return bad(format!("mu_ap_budget must be in 1..={}", self.num_aps));
            }
        }
        if let Some(n) = self.uc_users_per_ap {
            if n == 0 || n > self.num_users {
                return bad(format!("uc_users_per_ap must be in 1..={}", self.num_users));
            }
        }
        if self.drops == 0 {
            return bad("drops must be at least 1".into());
        }
        Ok(())
    }

    /// MU-OAS group size, clamped to the number of users.
    pub fn effective_users_per_rb(&self) -> usize {
        self.users_per_rb.clamp(1, self.num_users.max(1))
    }

    /// MU-OAS activated-AP budget for a group of `group_size` users.
    pub fn mu_budget(&self, group_size: usize) -> usize {
        self.mu_ap_budget
            .unwrap_or(group_size * self.aps_per_user)
            .min(self.num_aps)
    }

    pub fn effective_uc_users_per_ap(&self) -> usize {
        self.uc_users_per_ap
            .unwrap_or_else(|| (self.num_users * self.aps_per_user).div_ceil(self.num_aps))
            .clamp(1, self.num_users)
    }

    /// Receiver noise power in dBm: density + 10 lg(bandwidth) + noise figure.
    pub fn noise_power_dbm(&self) -> f64 {
        self.noise_density + 10.0 * self.bandwidth.log10() + self.noise_figure
    }

    /// Receiver noise power in W.
    pub fn noise_power(&self) -> f64 {
        dbm_to_watts(self.noise_power_dbm())
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Free function form of [`SystemConfig::noise_power`].
pub fn noise_power(config: &SystemConfig) -> f64 {
    config.noise_power()
}

/// Positions in km, one `[x, y]` per AP and per user.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Topology {
    pub ap_positions: Vec<[f64; 2]>,
    pub user_positions: Vec<[f64; 2]>,
}

impl Topology {
    pub fn distance(&self, ap: usize, user: usize) -> f64 {
        let [ax, ay] = self.ap_positions[ap];
        let [ux, uy] = self.user_positions[user];
        (ax - ux).hypot(ay - uy)
    }
}

/// A point uniform over the disc of the given radius (r = R sqrt(u)).
pub fn uniform_in_disc<R: Rng + ?Sized>(rng: &mut R, radius: f64) -> [f64; 2] {
    let r = radius * rng.random::<f64>().sqrt();
    let theta = std::f64::consts::TAU * rng.random::<f64>();
    [r * theta.cos(), r * theta.sin()]
}

/// AP and user positions of drop `drop_index`; a pure function of
/// `(config.seed, drop_index)`.
pub fn drop_topology(config: &SystemConfig, drop_index: u64) -> Topology {
    let mut rng = rng::stream(config.seed, drop_index, Purpose::Topology);
    let ap_positions = (0..config.num_aps)
        .map(|_| uniform_in_disc(&mut rng, config.radius))
        .collect();
    let user_positions = (0..config.num_users)
        .map(|_| uniform_in_disc(&mut rng, config.radius))
        .collect();
    Topology {
        ap_positions,
        user_positions,
    }
}
