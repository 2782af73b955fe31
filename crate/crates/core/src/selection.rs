//! Resource-block user assignment and AP selection.
//!
//! Notation used in the doc comments: `M_k` is the near-AP set of user `k`,
//! `K_b` and `M_b` are the users and activated APs of RB group `b`, and
//! `K_m` / `UC_k` are the user-centric sets (users served by AP `m`, APs
//! serving user `k`).

use ndarray::{Array2, ArrayView1};
use serde::Serialize;

use crate::config::{SelectionMode, SystemConfig, UcMode};
use crate::error::{Error, Result};

/// AP indices sorted by descending gain, lowest index first among ties.
fn ranked(beta_col: ArrayView1<f64>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..beta_col.len()).collect();
    idx.sort_by(|&a, &b| beta_col[b].total_cmp(&beta_col[a]).then(a.cmp(&b)));
    idx
}

/// The `m_s` strongest APs, strongest first.
pub fn nearest_aps_fixed(beta_col: ArrayView1<f64>, m_s: usize) -> Result<Vec<usize>> {
    if m_s > beta_col.len() {
        return Err(Error::invalid(format!(
            "cannot select {m_s} APs out of {}",
            beta_col.len()
        )));
    }
    let mut idx = ranked(beta_col);
    idx.truncate(m_s);
    Ok(idx)
}

/// Every AP with `beta >= epsilon * mean(beta)`, strongest first.
pub fn nearest_aps_threshold(beta_col: ArrayView1<f64>, epsilon: f64) -> Vec<usize> {
    if beta_col.is_empty() {
        return Vec::new();
    }
    let level = epsilon * beta_col.sum() / beta_col.len() as f64;
    ranked(beta_col)
        .into_iter()
        .filter(|&m| beta_col[m] >= level)
        .collect()
}

/// One user per RB, users taken cyclically. RB `b` carries user `b mod K`.
pub fn assign_users_single(num_users: usize, num_rbs: usize) -> Vec<Vec<usize>> {
    if num_users == 0 {
        return Vec::new();
    }
    (0..num_rbs).map(|b| vec![b % num_users]).collect()
}

/// Consecutive groups of `users_per_rb` users; the last group may be smaller.
pub fn assign_users_multi(num_users: usize, users_per_rb: usize) -> Vec<Vec<usize>> {
    if num_users == 0 {
        return Vec::new();
    }
    let n = users_per_rb.clamp(1, num_users);
    (0..num_users)
        .collect::<Vec<_>>()
        .chunks(n)
        .map(<[usize]>::to_vec)
        .collect()
}

/// Round-robin AP activation for one RB group.
///
/// Users take turns in the given order; on its turn a user picks its
/// strongest AP among those it has not picked itself. An AP picked by two
/// users counts once. Stops at `n_ap` distinct APs or when every user has
/// picked every AP. Returned in first-pick order.
pub fn round_robin_aps(beta: &Array2<f64>, users: &[usize], n_ap: usize) -> Vec<usize> {
    let m = beta.nrows();
    let target = n_ap.min(m);
    let lists: Vec<Vec<usize>> = users.iter().map(|&k| ranked(beta.column(k))).collect();
    let mut taken = vec![false; m];
    let mut out = Vec::with_capacity(target);
    'rounds: for round in 0..m {
        for list in &lists {
            if out.len() >= target {
                break 'rounds;
            }
            let ap = list[round];
            if !taken[ap] {
                taken[ap] = true;
                out.push(ap);
            }
        }
    }
    out
}

/// `(K_m per AP, UC_k per user)`.
pub type UcSets = (Vec<Vec<usize>>, Vec<Vec<usize>>);

/// AP-side user-centric association: AP `m` serves its `users_per_ap`
/// strongest users (`K_m`); `UC_k = {m | k in K_m}` in ascending AP order.
pub fn uc_association(beta: &Array2<f64>, users_per_ap: usize) -> Result<UcSets> {
    let k = beta.ncols();
    if users_per_ap == 0 || users_per_ap > k {
        return Err(Error::invalid(format!("users_per_ap must be in 1..={k}")));
    }
    let user_sets: Vec<Vec<usize>> = beta
        .rows()
        .into_iter()
        .map(|row| {
            let mut r = ranked(row);
            r.truncate(users_per_ap);
            r
        })
        .collect();
    let ap_sets = ap_sets_from_user_sets(&user_sets, k);
    Ok((user_sets, ap_sets))
}

/// `UC_k = {m | k in K_m}`.
pub fn ap_sets_from_user_sets(user_sets: &[Vec<usize>], num_users: usize) -> Vec<Vec<usize>> {
    let mut ap_sets = vec![Vec::new(); num_users];
    for (m, users) in user_sets.iter().enumerate() {
        for &k in users {
            ap_sets[k].push(m);
        }
    }
    ap_sets
}

/// `K_m = {k | m in UC_k}`, users ascending.
pub fn user_sets_from_ap_sets(ap_sets: &[Vec<usize>], num_aps: usize) -> Vec<Vec<usize>> {
    let mut user_sets = vec![Vec::new(); num_aps];
    for (k, aps) in ap_sets.iter().enumerate() {
        for &m in aps {
            user_sets[m].push(k);
        }
    }
    user_sets
}

/// Every association structure of one drop.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionPlan {
    /// `M_k`: near APs of each user, strongest first.
    pub per_user_aps: Vec<Vec<usize>>,
    /// `K_b`: MU-OAS user groups.
    pub rb_users: Vec<Vec<usize>>,
    /// `M_b`: activated APs per MU-OAS group.
    pub rb_aps: Vec<Vec<usize>>,
    /// `K_m`: users served by each AP under UC.
    pub uc_user_sets: Vec<Vec<usize>>,
    /// `UC_k`: APs serving each user under UC.
    pub uc_ap_sets: Vec<Vec<usize>>,
}

impl SelectionPlan {
    /// Builds all structures for one drop.
    pub fn build(beta: &Array2<f64>, config: &SystemConfig) -> Result<Self> {
        let (m, k) = beta.dim();
        let per_user_aps = (0..k)
            .map(|u| match config.selection {
                SelectionMode::Fixed => nearest_aps_fixed(beta.column(u), config.aps_per_user),
                SelectionMode::Threshold => Ok(nearest_aps_threshold(beta.column(u), config.threshold_coeff)),
            })
            .collect::<Result<Vec<_>>>()?;
        let rb_users = assign_users_multi(k, config.effective_users_per_rb());
        let rb_aps = rb_users
            .iter()
            .map(|group| {
                let budget = match config.selection {
                    SelectionMode::Fixed => config.mu_budget(group.len()),
                    SelectionMode::Threshold => config
                        .mu_ap_budget
                        .unwrap_or_else(|| group.iter().map(|&u| per_user_aps[u].len()).sum()),
                };
                round_robin_aps(beta, group, budget)
            })
            .collect();
        let (uc_user_sets, uc_ap_sets) = match config.uc_mode {
            UcMode::NearestAps => {
                let ap_sets = per_user_aps.clone();
                (user_sets_from_ap_sets(&ap_sets, m), ap_sets)
            }
            UcMode::TopUsers => uc_association(beta, config.effective_uc_users_per_ap())?,
        };
        Ok(SelectionPlan {
            per_user_aps,
            rb_users,
            rb_aps,
            uc_user_sets,
            uc_ap_sets,
        })
    }

    pub fn num_users(&self) -> usize {
        self.per_user_aps.len()
    }

    /// Index of the MU-OAS group containing user `k`.
    pub fn group_of(&self, k: usize) -> Option<usize> {
        self.rb_users.iter().position(|g| g.contains(&k))
    }
}
