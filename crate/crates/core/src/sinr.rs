//! Closed-form effective SINRs for CF, UC, SU-OAS and MU-OAS, and the
//! full-power allocation rules.
//!
//! Each approach is a choice of serving APs `A` and co-scheduled users `U`
//! for user `k`:
//!
//! | approach | `A`            | `U`          |
//! |----------|----------------|--------------|
//! | CF       | all APs        | all users    |
//! | UC       | `UC_k`         | all users    |
//! | SU-OAS   | `M_k`          | `{k}`        |
//! | MU-OAS   | `M_b`          | `K_b`        |
//!
//! The `*_sets` functions take `A` and `U` explicitly; the others look them
//! up in a [`SelectionPlan`].

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::selection::SelectionPlan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Approach {
    Cf,
    Uc,
    SuOas,
    MuOas,
}

impl Approach {
    pub const ALL: [Approach; 4] = [Approach::Cf, Approach::Uc, Approach::SuOas, Approach::MuOas];

    pub fn name(self) -> &'static str {
        match self {
            Approach::Cf => "cf",
            Approach::Uc => "uc",
            Approach::SuOas => "su-oas",
            Approach::MuOas => "mu-oas",
        }
    }
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Approach {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Approach::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown approach '{s}' (cf, uc, su-oas, mu-oas)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "ul")]
    Uplink,
    #[serde(rename = "dl")]
    Downlink,
}

impl Direction {
    pub fn name(self) -> &'static str {
        match self {
            Direction::Uplink => "ul",
            Direction::Downlink => "dl",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Downlink detector for the OAS approaches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OasVariant {
    /// MU-OAS with user-side channel estimates from downlink pilots.
    MuCoherent,
    /// MU-OAS detecting with channel statistics only.
    MuNoncoherent,
    /// SU-OAS (single user per RB).
    Su,
}

/// Power-control coefficients. `eta_ul[k]` is the uplink coefficient of user
/// `k`; `eta_dl[[m, k]]` is the share AP `m` spends on user `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    pub eta_ul: Vec<f64>,
    pub eta_dl: Array2<f64>,
}

/// Everything the closed forms read. `noise_over_pu = sigma2 / p_u`,
/// `noise_over_pd = sigma2 / p_d`.
#[derive(Debug, Clone, Copy)]
pub struct SinrInputs<'a> {
    pub beta: &'a Array2<f64>,
    pub alpha: &'a Array2<f64>,
    pub psi: &'a Array2<f64>,
    pub power: &'a PowerAllocation,
    pub sets: &'a SelectionPlan,
    pub noise_over_pu: f64,
    pub noise_over_pd: f64,
}

impl SinrInputs<'_> {
    pub fn num_aps(&self) -> usize {
        self.beta.nrows()
    }

    pub fn num_users(&self) -> usize {
        self.beta.ncols()
    }
}

/// Serving APs and co-scheduled users of user `k`, or `None` if the approach
/// does not schedule `k` at all.
pub fn serving_sets(approach: Approach, k: usize, sets: &SelectionPlan, num_aps: usize) -> Option<(Vec<usize>, Vec<usize>)> {
    let num_users = sets.num_users();
    match approach {
        Approach::Cf => Some(((0..num_aps).collect(), (0..num_users).collect())),
        Approach::Uc => Some((sets.uc_ap_sets[k].clone(), (0..num_users).collect())),
        Approach::SuOas => Some((sets.per_user_aps[k].clone(), vec![k])),
        Approach::MuOas => sets
            .group_of(k)
            .map(|b| (sets.rb_aps[b].clone(), sets.rb_users[b].clone())),
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if num <= 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Uplink SINR of user `k` combined over `aps` with co-transmitting `users`:
///
/// `eta_k (sum_A alpha_mk)^2 / (sum_A alpha_mk sum_U eta_k' beta_mk' + sigma2/p_u sum_A alpha_mk)`.
pub fn uplink_sinr_sets(k: usize, aps: &[usize], users: &[usize], inputs: &SinrInputs) -> f64 {
    let (alpha, beta, eta) = (inputs.alpha, inputs.beta, &inputs.power.eta_ul);
    let sum_alpha: f64 = aps.iter().map(|&m| alpha[[m, k]]).sum();
    let interference: f64 = aps
        .iter()
        .map(|&m| alpha[[m, k]] * users.iter().map(|&j| eta[j] * beta[[m, j]]).sum::<f64>())
        .sum();
    ratio(
        eta[k] * sum_alpha * sum_alpha,
        interference + inputs.noise_over_pu * sum_alpha,
    )
}

pub fn uplink_sinr(approach: Approach, k: usize, inputs: &SinrInputs) -> f64 {
    match serving_sets(approach, k, inputs.sets, inputs.num_aps()) {
        Some((aps, users)) => uplink_sinr_sets(k, &aps, &users, inputs),
        None => 0.0,
    }
}

/// `sum_A beta_mk sum_U eta_mk' alpha_mk'`.
fn dl_multiuser_term(k: usize, aps: &[usize], users: &[usize], inputs: &SinrInputs) -> f64 {
    let (alpha, beta, eta) = (inputs.alpha, inputs.beta, &inputs.power.eta_dl);
    aps.iter()
        .map(|&m| beta[[m, k]] * users.iter().map(|&j| eta[[m, j]] * alpha[[m, j]]).sum::<f64>())
        .sum()
}

/// OAS downlink SINR of user `k` served by `aps` together with `users`.
///
/// Numerator `(sum_A sqrt(eta_mk) psi_mk)^2`. Denominators:
///
/// - coherent: `sum_A beta_mk sum_U eta_mk' alpha_mk' + sum_A eta_mk (psi^2 - 2 psi alpha) + sigma2/p_d`
/// - non-coherent: as coherent with `2 eta_mk (psi^2 - psi alpha)` in the middle sum
/// - SU: `sum_A eta_mk (beta - alpha) alpha + sum_A eta_mk (psi - alpha)^2 + sigma2/p_d` (`users` ignored)
pub fn downlink_sinr_oas_sets(variant: OasVariant, k: usize, aps: &[usize], users: &[usize], inputs: &SinrInputs) -> f64 {
    let (alpha, beta, psi, eta) = (inputs.alpha, inputs.beta, inputs.psi, &inputs.power.eta_dl);
    let s: f64 = aps.iter().map(|&m| eta[[m, k]].sqrt() * psi[[m, k]]).sum();
    let per_ap = |f: &dyn Fn(f64, f64, f64) -> f64| -> f64 {
        aps.iter()
            .map(|&m| eta[[m, k]] * f(beta[[m, k]], alpha[[m, k]], psi[[m, k]]))
            .sum()
    };
    let den = match variant {
        OasVariant::MuCoherent => {
            dl_multiuser_term(k, aps, users, inputs) + per_ap(&|_, a, p| p * p - 2.0 * p * a) + inputs.noise_over_pd
        }
        OasVariant::MuNoncoherent => {
            dl_multiuser_term(k, aps, users, inputs) + per_ap(&|_, a, p| 2.0 * (p * p - p * a)) + inputs.noise_over_pd
        }
        OasVariant::Su => per_ap(&|b, a, _| (b - a) * a) + per_ap(&|_, a, p| (p - a) * (p - a)) + inputs.noise_over_pd,
    };
    ratio(s * s, den)
}

pub fn downlink_sinr_oas(variant: OasVariant, k: usize, inputs: &SinrInputs) -> f64 {
    let approach = match variant {
        OasVariant::Su => Approach::SuOas,
        _ => Approach::MuOas,
    };
    match serving_sets(approach, k, inputs.sets, inputs.num_aps()) {
        Some((aps, users)) => downlink_sinr_oas_sets(variant, k, &aps, &users, inputs),
        None => 0.0,
    }
}

/// CF/UC downlink SINR with statistical detection over `aps`:
///
/// `(sum_A sqrt(eta_mk) alpha_mk)^2 / (sum_A beta_mk sum_all eta_mk' alpha_mk' + sigma2/p_d)`.
pub fn downlink_sinr_benchmark_sets(k: usize, aps: &[usize], inputs: &SinrInputs) -> f64 {
    let (alpha, eta) = (inputs.alpha, &inputs.power.eta_dl);
    let s: f64 = aps.iter().map(|&m| eta[[m, k]].sqrt() * alpha[[m, k]]).sum();
    let all: Vec<usize> = (0..inputs.num_users()).collect();
    ratio(s * s, dl_multiuser_term(k, aps, &all, inputs) + inputs.noise_over_pd)
}

/// `approach` must be CF or UC.
pub fn downlink_sinr_benchmark(approach: Approach, k: usize, inputs: &SinrInputs) -> Result<f64> {
    match approach {
        Approach::Cf | Approach::Uc => {
            let (aps, _) = serving_sets(approach, k, inputs.sets, inputs.num_aps()).expect("always scheduled");
            Ok(downlink_sinr_benchmark_sets(k, &aps, inputs))
        }
        _ => Err(Error::invalid(format!("{approach} is not a benchmark approach"))),
    }
}

/// UC downlink SINR counting interference from every transmitting AP, not
/// only those in `UC_k`. With UC power coefficients this is the CF
/// expression over all APs.
pub fn downlink_sinr_uc_all_interferers(k: usize, inputs: &SinrInputs) -> f64 {
    let all: Vec<usize> = (0..inputs.num_aps()).collect();
    downlink_sinr_benchmark_sets(k, &all, inputs)
}

/// Default closed form for each (approach, direction): MU-OAS downlink uses
/// coherent detection.
pub fn sinr(approach: Approach, direction: Direction, k: usize, inputs: &SinrInputs) -> f64 {
    match (direction, approach) {
        (Direction::Uplink, a) => uplink_sinr(a, k, inputs),
        (Direction::Downlink, Approach::Cf | Approach::Uc) => {
            downlink_sinr_benchmark(approach, k, inputs).expect("benchmark approach")
        }
        (Direction::Downlink, Approach::SuOas) => downlink_sinr_oas(OasVariant::Su, k, inputs),
        (Direction::Downlink, Approach::MuOas) => downlink_sinr_oas(OasVariant::MuCoherent, k, inputs),
    }
}

/// `log2(1 + gamma)` in bps/Hz.
pub fn spectral_efficiency(gamma: f64) -> f64 {
    (1.0 + gamma).log2()
}

/// Full-power coefficients: `eta_k = 1`, and every active AP spends its
/// whole budget, `eta_mk = 1 / sum_{k' served by m} alpha_mk'`.
///
/// Under SU-OAS each user sits on its own RB, so the budget is per user:
/// `eta_mk = 1 / alpha_mk` for `m in M_k`.
pub fn full_power_allocation(approach: Approach, sets: &SelectionPlan, alpha: &Array2<f64>) -> PowerAllocation {
    let (m, k) = alpha.dim();
    let mut eta_dl = Array2::zeros((m, k));
    let mut fill = |aps: &[usize], users: &[usize]| {
        for &ap in aps {
            let load: f64 = users.iter().map(|&u| alpha[[ap, u]]).sum();
            if load > 0.0 {
                for &u in users {
                    eta_dl[[ap, u]] = 1.0 / load;
                }
            }
        }
    };
    match approach {
        Approach::Cf => {
            let all_users: Vec<usize> = (0..k).collect();
            let all_aps: Vec<usize> = (0..m).collect();
            fill(&all_aps, &all_users);
        }
        Approach::Uc => {
            for (ap, users) in sets.uc_user_sets.iter().enumerate() {
                fill(&[ap], users);
            }
        }
        Approach::SuOas => {
            for (u, aps) in sets.per_user_aps.iter().enumerate() {
                fill(aps, &[u]);
            }
        }
        Approach::MuOas => {
            for (aps, users) in sets.rb_aps.iter().zip(&sets.rb_users) {
                fill(aps, users);
            }
        }
    }
    PowerAllocation {
        eta_ul: vec![1.0; k],
        eta_dl,
    }
}

/// `sum_{k in users} eta_mk alpha_mk` for each AP: the fraction of the
/// transmit budget AP `m` spends on that user set.
pub fn ap_load(power: &PowerAllocation, alpha: &Array2<f64>, users: &[usize]) -> Vec<f64> {
    (0..alpha.nrows())
        .map(|m| users.iter().map(|&u| power.eta_dl[[m, u]] * alpha[[m, u]]).sum())
        .collect()
}
