//! Link-level Monte Carlo for one resource block.
//!
//! Channels, pilots, MMSE estimates, data symbols and noise are simulated
//! explicitly; the effective SINR is then measured with the use-and-forget
//! convention: desired power is the squared mean of the detection
//! coefficient, everything else in the detector output counts as
//! interference plus noise. The result is compared against the closed forms
//! in [`crate::sinr`].
//!
//! Powers are normalised to 1 per direction with noise variance
//! `sigma2 / p`, which leaves every SINR unchanged.
//!
//! Realisations are split into fixed-size chunks, each with its own random
//! stream, and merged in chunk order, so results do not depend on the
//! number of worker threads.

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::estimation::{estimate_variance, mmse_estimate, DlEstimateModel, EstimationStats};
use crate::ofdm::{add_cp, complex_normal, convolve_truncated, Dft, FreqBlock, TapChannel};
use crate::rng::{self, Purpose};
use crate::selection::SelectionPlan;
use crate::sinr::{self, full_power_allocation, serving_sets, Approach, OasVariant, PowerAllocation, SinrInputs};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// A small self-contained scenario: gains, estimate statistics and the
/// association structures of every approach.
#[derive(Debug, Clone)]
pub struct Instance {
    pub beta: Array2<f64>,
    pub est: EstimationStats,
    pub sets: SelectionPlan,
    pub noise_over_pu: f64,
    pub noise_over_pd: f64,
}

impl Instance {
    /// Builds the association structures with fixed-number selection of
    /// `aps_per_user` APs and groups of `users_per_rb` users.
    pub fn new(
        beta: Array2<f64>,
        users_per_rb: usize,
        aps_per_user: usize,
        noise_over_pu: f64,
        noise_over_pd: f64,
    ) -> Result<Self> {
        if !(noise_over_pu > 0.0 && noise_over_pd > 0.0) {
            return Err(Error::invalid("noise-to-power ratios must be positive"));
        }
        let (m, k) = beta.dim();
        let config = SystemConfig {
            num_aps: m,
            num_users: k,
            users_per_rb,
            aps_per_user,
            ..SystemConfig::default()
        };
        let sets = SelectionPlan::build(&beta, &config)?;
        let est = EstimationStats::new(&beta, 1.0 / noise_over_pu, 1.0 / noise_over_pd, 1.0);
        Ok(Instance {
            beta,
            est,
            sets,
            noise_over_pu,
            noise_over_pd,
        })
    }

    /// Gains drawn log-uniformly over `[beta_min, 1]`.
    pub fn random<R: Rng + ?Sized>(
        m: usize,
        k: usize,
        users_per_rb: usize,
        aps_per_user: usize,
        noise_over_p: f64,
        beta_min: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let lo = beta_min.ln();
        let beta = Array2::from_shape_simple_fn((m, k), || (lo * rng.random::<f64>()).exp());
        Self::new(beta, users_per_rb, aps_per_user, noise_over_p, noise_over_p)
    }

    pub fn full_power(&self, approach: Approach) -> PowerAllocation {
        full_power_allocation(approach, &self.sets, &self.est.alpha)
    }

    pub fn inputs<'a>(&'a self, power: &'a PowerAllocation) -> SinrInputs<'a> {
        SinrInputs {
            beta: &self.beta,
            alpha: &self.est.alpha,
            psi: &self.est.psi,
            power,
            sets: &self.sets,
            noise_over_pu: self.noise_over_pu,
            noise_over_pd: self.noise_over_pd,
        }
    }
}

/// Monte Carlo budget and seeding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleParams {
    /// Independent channel realisations.
    pub realizations: usize,
    /// Data symbols per realisation.
    pub symbols: usize,
    pub seed: u64,
    pub dl_model: DlEstimateModel,
    /// Realisations per random stream.
    pub chunk: usize,
}

impl Default for OracleParams {
    fn default() -> Self {
        OracleParams {
            realizations: 100_000,
            symbols: 4,
            seed: 1,
            dl_model: DlEstimateModel::Independent,
            chunk: 1000,
        }
    }
}

impl OracleParams {
    pub fn num_symbols(&self) -> usize {
        self.realizations * self.symbols
    }
}

/// Measured vs closed-form second moment of one term of the detector output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TermProbe {
    pub user: usize,
    pub term: &'static str,
    pub empirical: f64,
    pub formula: f64,
}

impl TermProbe {
    /// Relative error, or absolute error when the formula is zero.
    pub fn error(&self) -> f64 {
        if self.formula == 0.0 {
            self.empirical.abs()
        } else {
            (self.empirical - self.formula).abs() / self.formula.abs()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub users: Vec<usize>,
    pub empirical_sinr: Vec<f64>,
    pub closed_form_sinr: Vec<f64>,
    /// `|empirical - closed form| / closed form`; NaN where the closed form is 0.
    pub rel_error: Vec<f64>,
    pub num_symbols: usize,
    pub terms: Vec<TermProbe>,
}

impl OracleReport {
    fn new(users: Vec<usize>, empirical: Vec<f64>, closed: Vec<f64>, num_symbols: usize, terms: Vec<TermProbe>) -> Self {
        let rel_error = empirical
            .iter()
            .zip(&closed)
            .map(|(&e, &c)| if c > 0.0 { (e - c).abs() / c } else { f64::NAN })
            .collect();
        OracleReport {
            users,
            empirical_sinr: empirical,
            closed_form_sinr: closed,
            rel_error,
            num_symbols,
            terms,
        }
    }

    /// Largest relative error over users with a positive closed form.
    pub fn max_rel_error(&self) -> f64 {
        self.rel_error.iter().copied().filter(|e| !e.is_nan()).fold(0.0, f64::max)
    }

    pub fn max_term_error(&self) -> f64 {
        self.terms.iter().map(TermProbe::error).fold(0.0, f64::max)
    }
}

/// Downlink detector/serving model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DlVariant {
    MuCoherent,
    MuNoncoherent,
    Su,
    Cf,
    /// UC as in its closed form: only the APs of `UC_k` reach user `k`.
    Uc,
    /// UC with every transmitting AP reaching user `k`.
    UcAllInterferers,
}

impl DlVariant {
    pub const ALL: [DlVariant; 6] = [
        DlVariant::MuCoherent,
        DlVariant::MuNoncoherent,
        DlVariant::Su,
        DlVariant::Cf,
        DlVariant::Uc,
        DlVariant::UcAllInterferers,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DlVariant::MuCoherent => "mu-oas-coherent",
            DlVariant::MuNoncoherent => "mu-oas-noncoherent",
            DlVariant::Su => "su-oas",
            DlVariant::Cf => "cf",
            DlVariant::Uc => "uc",
            DlVariant::UcAllInterferers => "uc-all-interferers",
        }
    }

    fn approach(self) -> Approach {
        match self {
            DlVariant::MuCoherent | DlVariant::MuNoncoherent => Approach::MuOas,
            DlVariant::Su => Approach::SuOas,
            DlVariant::Cf => Approach::Cf,
            DlVariant::Uc | DlVariant::UcAllInterferers => Approach::Uc,
        }
    }

    fn detection(self) -> Detection {
        match self {
            DlVariant::MuCoherent | DlVariant::Su => Detection::Coherent,
            DlVariant::MuNoncoherent => Detection::DlStatistics,
            _ => Detection::UlStatistics,
        }
    }

    /// The closed form this variant is checked against.
    pub fn closed_form(self, k: usize, inputs: &SinrInputs) -> f64 {
        match self {
            DlVariant::MuCoherent => sinr::downlink_sinr_oas(OasVariant::MuCoherent, k, inputs),
            DlVariant::MuNoncoherent => sinr::downlink_sinr_oas(OasVariant::MuNoncoherent, k, inputs),
            DlVariant::Su => sinr::downlink_sinr_oas(OasVariant::Su, k, inputs),
            DlVariant::Cf => sinr::downlink_sinr_benchmark(Approach::Cf, k, inputs).expect("cf"),
            DlVariant::Uc => sinr::downlink_sinr_benchmark(Approach::Uc, k, inputs).expect("uc"),
            DlVariant::UcAllInterferers => sinr::downlink_sinr_uc_all_interferers(k, inputs),
        }
    }
}

/// What the user scales its received sample by.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Detection {
    /// Instantaneous `sum sqrt(eta) |g_frak|^2` from downlink pilots.
    Coherent,
    /// Mean of `sum sqrt(eta) |g_frak|^2`.
    DlStatistics,
    /// Mean of the effective gain `sum sqrt(eta) g g_hat*`.
    UlStatistics,
}

/// User `k` with its serving APs and co-scheduled users.
#[derive(Debug, Clone)]
struct Job {
    k: usize,
    aps: Vec<usize>,
    users: Vec<usize>,
}

/// One realisation of every AP-user channel with both estimates.
struct Draw {
    g: Array2<Complex64>,
    gh: Array2<Complex64>,
    gd: Array2<Complex64>,
}

fn pilot_estimate<R: Rng + ?Sized>(g: Complex64, beta: f64, s2: f64, rng: &mut R) -> Complex64 {
    let z = if s2 > 0.0 { complex_normal(rng, s2) } else { ZERO };
    mmse_estimate(g + z, ONE, beta, 1.0, s2)
}

fn draw<R: Rng + ?Sized>(beta: &Array2<f64>, s2u: f64, s2d: f64, model: DlEstimateModel, rng: &mut R) -> Draw {
    let dim = beta.dim();
    let mut g = Array2::zeros(dim);
    let mut gh = Array2::zeros(dim);
    let mut gd = Array2::zeros(dim);
    for (idx, &b) in beta.indexed_iter() {
        let gi = complex_normal(rng, b);
        let h = pilot_estimate(gi, b, s2u, rng);
        g[idx] = gi;
        gh[idx] = h;
        gd[idx] = match model {
            DlEstimateModel::Independent => pilot_estimate(gi, b, s2d, rng),
            DlEstimateModel::Reciprocal => h,
        };
    }
    Draw { g, gh, gd }
}

/// Sufficient statistics of one user, merged by summation.
#[derive(Debug, Clone)]
struct Acc {
    n: f64,
    /// Sum of |y|^2.
    syy: f64,
    /// Sum of y conj(s).
    sys: Complex64,
    /// Sum of |s|^2.
    sss: f64,
    /// Sum of the detection coefficient (or of the statistic it is the mean of).
    sum_a: Complex64,
    /// Sum of |y - a s|^2 with the instantaneous coefficient.
    s_int: f64,
    terms: Vec<f64>,
}

impl Acc {
    fn new(n_terms: usize) -> Self {
        Acc {
            n: 0.0,
            syy: 0.0,
            sys: ZERO,
            sss: 0.0,
            sum_a: ZERO,
            s_int: 0.0,
            terms: vec![0.0; n_terms],
        }
    }

    fn merge(&mut self, o: &Acc) {
        self.n += o.n;
        self.syy += o.syy;
        self.sys += o.sys;
        self.sss += o.sss;
        self.sum_a += o.sum_a;
        self.s_int += o.s_int;
        for (a, b) in self.terms.iter_mut().zip(&o.terms) {
            *a += b;
        }
    }

    /// Records one detector output `y` for symbol `s` with coefficient or statistic `a`.
    fn push(&mut self, y: Complex64, s: Complex64, a: Complex64) {
        self.n += 1.0;
        self.syy += y.norm_sqr();
        self.sys += y * s.conj();
        self.sss += s.norm_sqr();
        self.sum_a += a;
        self.s_int += (y - a * s).norm_sqr();
    }

    /// Effective SINR with the mean coefficient as desired gain.
    fn sinr_mean_coefficient(&self) -> f64 {
        let n = self.n;
        let a = self.sum_a / n;
        let interference = self.syy / n - 2.0 * (a.conj() * self.sys / n).re + a.norm_sqr() * self.sss / n;
        a.norm_sqr() / interference
    }

    /// Effective SINR when the receiver knows the instantaneous coefficient.
    fn sinr_known_coefficient(&self) -> f64 {
        let a = self.sum_a / self.n;
        a.norm_sqr() / (self.s_int / self.n)
    }

    fn term_means(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t / self.n).collect()
    }
}

/// Runs `per_realization` over all chunks and merges per-job accumulators.
fn run_chunks<F>(params: &OracleParams, n_jobs: usize, n_terms: usize, per_realization: F) -> Vec<Acc>
where
    F: Fn(&mut ChaCha8Rng, &mut [Acc]) + Sync,
{
    let chunk = params.chunk.max(1);
    let n_chunks = params.realizations.div_ceil(chunk);
    let parts: Vec<Vec<Acc>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng::stream(params.seed, c as u64, Purpose::Oracle);
            let mut accs = vec![Acc::new(n_terms); n_jobs];
            let count = chunk.min(params.realizations - c * chunk);
            for _ in 0..count {
                per_realization(&mut rng, &mut accs);
            }
            accs
        })
        .collect();
    let mut total = vec![Acc::new(n_terms); n_jobs];
    for part in &parts {
        for (t, p) in total.iter_mut().zip(part) {
            t.merge(p);
        }
    }
    total
}

fn check_params(params: &OracleParams, inputs: &SinrInputs) -> Result<()> {
    if params.realizations == 0 || params.symbols == 0 {
        return Err(Error::invalid("oracle needs at least one realisation and one symbol"));
    }
    if params.dl_model == DlEstimateModel::Reciprocal && inputs.noise_over_pu != inputs.noise_over_pd {
        return Err(Error::invalid("reciprocal downlink estimates require p_d == p_u"));
    }
    Ok(())
}

fn jobs_for(approach: Approach, inputs: &SinrInputs) -> Vec<Job> {
    (0..inputs.num_users())
        .filter_map(|k| {
            serving_sets(approach, k, inputs.sets, inputs.num_aps()).map(|(aps, users)| Job { k, aps, users })
        })
        .collect()
}

pub const UPLINK_TERMS: [&str; 4] = ["I1", "I2", "I3", "I4"];

/// Uplink: users in the co-scheduled set transmit, the CPU combines
/// `sum_m conj(g_hat_mk) r_m` over the serving APs.
pub fn simulate_uplink_rb(inputs: &SinrInputs, approach: Approach, params: &OracleParams) -> Result<OracleReport> {
    check_params(params, inputs)?;
    let jobs = jobs_for(approach, inputs);
    let (beta, alpha, eta) = (inputs.beta, inputs.alpha, &inputs.power.eta_ul);
    let (s2u, s2d) = (inputs.noise_over_pu, inputs.noise_over_pd);
    let (m_total, k_total) = beta.dim();
    let accs = run_chunks(params, jobs.len(), UPLINK_TERMS.len(), |rng, accs| {
        let ch = draw(beta, s2u, s2d, params.dl_model, rng);
        for _ in 0..params.symbols {
            let sym: Vec<Complex64> = (0..k_total).map(|_| complex_normal(rng, 1.0)).collect();
            let noise: Vec<Complex64> = (0..m_total)
                .map(|_| if s2u > 0.0 { complex_normal(rng, s2u) } else { ZERO })
                .collect();
            for (job, acc) in jobs.iter().zip(accs.iter_mut()) {
                let k = job.k;
                let sk = eta[k].sqrt();
                let (mut y, mut gain) = (ZERO, ZERO);
                let mut t = [ZERO; 4];
                for &m in &job.aps {
                    let h = ch.gh[[m, k]].conj();
                    let own = ch.g[[m, k]];
                    let other: Complex64 = job
                        .users
                        .iter()
                        .filter(|&&j| j != k)
                        .map(|&j| ch.g[[m, j]] * eta[j].sqrt() * sym[j])
                        .sum();
                    y += h * (own * sk * sym[k] + other + noise[m]);
                    gain += h * own * sk;
                    t[0] += h * (own - ch.gh[[m, k]]) * sk * sym[k];
                    t[1] += (ch.gh[[m, k]].norm_sqr() - alpha[[m, k]]) * sk * sym[k];
                    t[2] += h * other;
                    t[3] += h * noise[m];
                }
                acc.push(y, sym[k], gain);
                for (dst, v) in acc.terms.iter_mut().zip(t) {
                    *dst += v.norm_sqr();
                }
            }
        }
    });

    let mut terms = Vec::new();
    let (mut emp, mut closed, mut users) = (Vec::new(), Vec::new(), Vec::new());
    for (job, acc) in jobs.iter().zip(&accs) {
        let k = job.k;
        users.push(k);
        emp.push(if job.aps.is_empty() { 0.0 } else { acc.sinr_mean_coefficient() });
        closed.push(sinr::uplink_sinr(approach, k, inputs));
        let sum_a = |f: &dyn Fn(usize) -> f64| job.aps.iter().map(|&m| f(m)).sum::<f64>();
        let formulas = [
            eta[k] * sum_a(&|m| alpha[[m, k]] * (beta[[m, k]] - alpha[[m, k]])),
            eta[k] * sum_a(&|m| alpha[[m, k]] * alpha[[m, k]]),
            sum_a(&|m| {
                alpha[[m, k]] * job.users.iter().filter(|&&j| j != k).map(|&j| eta[j] * beta[[m, j]]).sum::<f64>()
            }),
            s2u * sum_a(&|m| alpha[[m, k]]),
        ];
        for ((name, e), f) in UPLINK_TERMS.iter().zip(acc.term_means()).zip(formulas) {
            terms.push(TermProbe { user: k, term: name, empirical: e, formula: f });
        }
    }
    Ok(OracleReport::new(users, emp, closed, params.num_symbols(), terms))
}

/// Term names reported for a downlink variant.
pub fn downlink_terms(variant: DlVariant) -> &'static [&'static str] {
    match variant.detection() {
        Detection::Coherent => &["I1", "I3", "I4", "I5"],
        Detection::DlStatistics => &["I1", "I2", "I3", "I4", "I5"],
        Detection::UlStatistics => &["J1", "J2", "J3", "J4"],
    }
}

fn dl_jobs(variant: DlVariant, inputs: &SinrInputs) -> Vec<Job> {
    let mut jobs = jobs_for(variant.approach(), inputs);
    if variant == DlVariant::UcAllInterferers {
        for j in &mut jobs {
            j.aps = (0..inputs.num_aps()).collect();
        }
    }
    jobs
}

/// Downlink: the serving APs precode with `conj(g_hat)` to the co-scheduled
/// users; user `k` detects according to the variant.
pub fn simulate_downlink_rb(inputs: &SinrInputs, variant: DlVariant, params: &OracleParams) -> Result<OracleReport> {
    check_params(params, inputs)?;
    let jobs = dl_jobs(variant, inputs);
    let (beta, alpha, psi, eta) = (inputs.beta, inputs.alpha, inputs.psi, &inputs.power.eta_dl);
    let (s2u, s2d) = (inputs.noise_over_pu, inputs.noise_over_pd);
    let k_total = beta.ncols();
    let detection = variant.detection();
    let names = downlink_terms(variant);
    let accs = run_chunks(params, jobs.len(), names.len(), |rng, accs| {
        let ch = draw(beta, s2u, s2d, params.dl_model, rng);
        for _ in 0..params.symbols {
            let sym: Vec<Complex64> = (0..k_total).map(|_| complex_normal(rng, 1.0)).collect();
            for (job, acc) in jobs.iter().zip(accs.iter_mut()) {
                let k = job.k;
                let z = if s2d > 0.0 { complex_normal(rng, s2d) } else { ZERO };
                let mut y = z;
                let (mut coh, mut gain) = (0.0, ZERO);
                let mut t = [ZERO; 5];
                for &m in &job.aps {
                    let sq = eta[[m, k]].sqrt();
                    let g = ch.g[[m, k]];
                    let gh = ch.gh[[m, k]];
                    let gd2 = ch.gd[[m, k]].norm_sqr();
                    let own = sq * gh.conj() * sym[k];
                    let others: Complex64 = job
                        .users
                        .iter()
                        .filter(|&&j| j != k)
                        .map(|&j| eta[[m, j]].sqrt() * ch.gh[[m, j]].conj() * sym[j])
                        .sum();
                    y += g * (own + others);
                    coh += sq * gd2;
                    gain += g * sq * gh.conj();
                    let xi = g - gh;
                    match detection {
                        Detection::Coherent | Detection::DlStatistics => {
                            t[0] += sq * xi * gh.conj() * sym[k];
                            t[1] += sq * (gd2 - psi[[m, k]]) * sym[k];
                            t[2] += g * others;
                            t[4] += sq * (gh.norm_sqr() - gd2) * sym[k];
                        }
                        Detection::UlStatistics => {
                            t[0] += sq * (gh.norm_sqr() - alpha[[m, k]]) * sym[k];
                            t[1] += gh * others;
                            t[2] += xi * (own + others);
                        }
                    }
                }
                let a = match detection {
                    Detection::Coherent | Detection::DlStatistics => Complex64::new(coh, 0.0),
                    Detection::UlStatistics => gain,
                };
                acc.push(y, sym[k], a);
                let picked: Vec<Complex64> = match detection {
                    Detection::Coherent => vec![t[0], t[2], z, t[4]],
                    Detection::DlStatistics => vec![t[0], t[1], t[2], z, t[4]],
                    Detection::UlStatistics => vec![t[0], t[1], t[2], z],
                };
                for (dst, v) in acc.terms.iter_mut().zip(picked) {
                    *dst += v.norm_sqr();
                }
            }
        }
    });

    let mut terms = Vec::new();
    let (mut emp, mut closed, mut users) = (Vec::new(), Vec::new(), Vec::new());
    for (job, acc) in jobs.iter().zip(&accs) {
        let k = job.k;
        users.push(k);
        let e = if job.aps.is_empty() {
            0.0
        } else {
            match detection {
                Detection::Coherent => acc.sinr_known_coefficient(),
                _ => acc.sinr_mean_coefficient(),
            }
        };
        emp.push(if e.is_nan() { 0.0 } else { e });
        closed.push(variant.closed_form(k, inputs));
        let per_ap = |f: &dyn Fn(usize) -> f64| job.aps.iter().map(|&m| f(m)).sum::<f64>();
        let others = |m: usize| -> f64 {
            job.users.iter().filter(|&&j| j != k).map(|&j| eta[[m, j]] * alpha[[m, j]]).sum()
        };
        let all = |m: usize| -> f64 { job.users.iter().map(|&j| eta[[m, j]] * alpha[[m, j]]).sum() };
        let e_ = |m: usize| eta[[m, k]];
        let (a_, b_, p_) = (|m: usize| alpha[[m, k]], |m: usize| beta[[m, k]], |m: usize| psi[[m, k]]);
        let i1 = per_ap(&|m| e_(m) * a_(m) * (b_(m) - a_(m)));
        let i2 = per_ap(&|m| e_(m) * p_(m) * p_(m));
        let i3 = per_ap(&|m| b_(m) * others(m));
        let i5 = per_ap(&|m| e_(m) * (p_(m) - a_(m)).powi(2));
        let formulas: Vec<f64> = match detection {
            Detection::Coherent => vec![i1, i3, s2d, i5],
            Detection::DlStatistics => vec![i1, i2, i3, s2d, i5],
            Detection::UlStatistics => vec![
                per_ap(&|m| e_(m) * a_(m) * a_(m)),
                per_ap(&|m| a_(m) * others(m)),
                per_ap(&|m| (b_(m) - a_(m)) * all(m)),
                s2d,
            ],
        };
        for ((name, e), f) in names.iter().zip(acc.term_means()).zip(formulas) {
            terms.push(TermProbe { user: k, term: name, empirical: e, formula: f });
        }
    }
    Ok(OracleReport::new(users, emp, closed, params.num_symbols(), terms))
}

/// OFDM numerology for the waveform oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OfdmParams {
    /// Subcarriers per block.
    pub n: usize,
    pub l_cp: usize,
    /// Channel taps per AP-user pair (uniform power-delay profile).
    pub taps: usize,
    /// Simulate even when `taps > l_cp + 1`, letting inter-symbol
    /// interference through instead of rejecting the configuration.
    pub allow_isi: bool,
}

/// Passes consecutive frequency-domain blocks from several APs through the
/// time-domain chain (IDFT, CP, multipath, noise, CP removal, DFT) and
/// returns the received blocks. `tx[m][t]` is block `t` of AP `m`;
/// `channels[m]` is the AP-to-user filter. `noise_var` is the per-sample
/// time-domain noise variance.
pub fn waveform_receive<R: Rng + ?Sized>(
    tx: &[Vec<FreqBlock>],
    channels: &[TapChannel],
    l_cp: usize,
    noise_var: f64,
    dft: &Dft,
    rng: &mut R,
) -> Result<Vec<FreqBlock>> {
    let n = dft.len();
    let n_blocks = tx.first().map_or(0, Vec::len);
    let sym_len = n + l_cp;
    let mut rx = vec![ZERO; n_blocks * sym_len];
    for (blocks, ch) in tx.iter().zip(channels) {
        let mut stream = Vec::with_capacity(n_blocks * sym_len);
        for b in blocks {
            if b.len() != n {
                return Err(Error::invalid("block length does not match DFT size"));
            }
            stream.extend(add_cp(&dft.modulate(b), l_cp)?);
        }
        for (r, v) in rx.iter_mut().zip(convolve_truncated(&stream, &ch.gains())) {
            *r += v;
        }
    }
    if noise_var > 0.0 {
        rx.iter_mut().for_each(|v| *v += complex_normal(rng, noise_var));
    }
    Ok(rx
        .chunks(sym_len)
        .map(|sym| dft.demodulate(&sym[l_cp..]))
        .collect())
}

/// Downlink over frequency-selective channels through the full OFDM chain.
/// Each subcarrier of the last of two consecutive blocks is one sample; the
/// first block supplies the preceding symbol for inter-symbol interference.
///
/// Supports the variants whose serving APs are fixed per RB
/// (`MuCoherent`, `MuNoncoherent`, `Su`, `Cf`).
pub fn simulate_waveform_rb(
    inputs: &SinrInputs,
    variant: DlVariant,
    ofdm: OfdmParams,
    params: &OracleParams,
) -> Result<OracleReport> {
    check_params(params, inputs)?;
    if ofdm.taps == 0 || ofdm.l_cp > ofdm.n || ofdm.taps > ofdm.n {
        return Err(Error::invalid("need 1 <= taps <= n and l_cp <= n"));
    }
    if !ofdm.allow_isi && ofdm.taps > ofdm.l_cp + 1 {
        return Err(Error::invalid(format!(
            "cyclic prefix {} too short for {} taps",
            ofdm.l_cp, ofdm.taps
        )));
    }
    if matches!(variant, DlVariant::Uc | DlVariant::UcAllInterferers) {
        return Err(Error::invalid("waveform oracle supports mu, su and cf variants"));
    }
    let jobs = dl_jobs(variant, inputs);
    let (beta, eta) = (inputs.beta, &inputs.power.eta_dl);
    let (s2u, s2d) = (inputs.noise_over_pu, inputs.noise_over_pd);
    let detection = variant.detection();
    let dft = Dft::new(ofdm.n);
    let n = ofdm.n;
    let accs = run_chunks(params, jobs.len(), 0, |rng, accs| {
        for (job, acc) in jobs.iter().zip(accs.iter_mut()) {
            let k = job.k;
            // Per pair: taps and per-subcarrier gain and estimates.
            let mut g_f = Vec::with_capacity(job.aps.len());
            let mut taps = Vec::with_capacity(job.aps.len());
            let mut gh_f = Vec::with_capacity(job.aps.len());
            let mut gd_f = Vec::with_capacity(job.aps.len());
            for &m in &job.aps {
                let mut per_user_g = Vec::with_capacity(job.users.len());
                let mut per_user_h = Vec::with_capacity(job.users.len());
                let mut per_user_d = Vec::with_capacity(job.users.len());
                let mut own_taps = None;
                for &j in &job.users {
                    let b = beta[[m, j]];
                    let ch = TapChannel::rayleigh(ofdm.taps, b, rng);
                    let mut freq = ch.gains();
                    freq.resize(n, ZERO);
                    dft.forward(&mut freq);
                    let h: Vec<Complex64> = freq.iter().map(|&g| pilot_estimate(g, b, s2u, rng)).collect();
                    let d: Vec<Complex64> = match params.dl_model {
                        DlEstimateModel::Independent => freq.iter().map(|&g| pilot_estimate(g, b, s2d, rng)).collect(),
                        DlEstimateModel::Reciprocal => h.clone(),
                    };
                    if j == k {
                        own_taps = Some(ch);
                    }
                    per_user_g.push(freq);
                    per_user_h.push(h);
                    per_user_d.push(d);
                }
                let own_taps = match own_taps {
                    Some(t) => t,
                    None => TapChannel::rayleigh(ofdm.taps, beta[[m, k]], rng),
                };
                taps.push(own_taps);
                g_f.push(per_user_g);
                gh_f.push(per_user_h);
                gd_f.push(per_user_d);
            }
            let own_idx = job.users.iter().position(|&j| j == k);
            for _ in 0..params.symbols {
                let sym: Vec<Vec<FreqBlock>> = (0..2)
                    .map(|_| {
                        job.users
                            .iter()
                            .map(|_| FreqBlock((0..n).map(|_| complex_normal(rng, 1.0)).collect()))
                            .collect()
                    })
                    .collect();
                let tx: Vec<Vec<FreqBlock>> = job
                    .aps
                    .iter()
                    .enumerate()
                    .map(|(ai, &m)| {
                        sym.iter()
                            .map(|blk| {
                                FreqBlock(
                                    (0..n)
                                        .map(|sc| {
                                            job.users
                                                .iter()
                                                .enumerate()
                                                .map(|(ui, &j)| {
                                                    eta[[m, j]].sqrt() * gh_f[ai][ui][sc].conj() * blk[ui].0[sc]
                                                })
                                                .sum()
                                        })
                                        .collect(),
                                )
                            })
                            .collect()
                    })
                    .collect();
                let rx = waveform_receive(&tx, &taps, ofdm.l_cp, s2d / n as f64, &dft, rng)
                    .expect("block lengths match the DFT");
                let Some(ui) = own_idx else { continue };
                let last = &rx[1];
                for sc in 0..n {
                    let mut a = ZERO;
                    for (ai, &m) in job.aps.iter().enumerate() {
                        let sq = eta[[m, k]].sqrt();
                        a += match detection {
                            Detection::Coherent | Detection::DlStatistics => {
                                Complex64::new(sq * gd_f[ai][ui][sc].norm_sqr(), 0.0)
                            }
                            Detection::UlStatistics => sq * g_f[ai][ui][sc] * gh_f[ai][ui][sc].conj(),
                        };
                    }
                    acc.push(last.0[sc], sym[1][ui].0[sc], a);
                }
            }
        }
    });
    let mut emp = Vec::new();
    let mut closed = Vec::new();
    let mut users = Vec::new();
    for (job, acc) in jobs.iter().zip(&accs) {
        users.push(job.k);
        let e = if acc.n == 0.0 {
            0.0
        } else {
            match detection {
                Detection::Coherent => acc.sinr_known_coefficient(),
                _ => acc.sinr_mean_coefficient(),
            }
        };
        emp.push(e);
        closed.push(variant.closed_form(job.k, inputs));
    }
    Ok(OracleReport::new(
        users,
        emp,
        closed,
        params.num_symbols() * n,
        Vec::new(),
    ))
}

/// `E|g_hat|^4 / alpha^2` over `draws` pilot-based estimates of one
/// channel (2 for a complex Gaussian estimate).
pub fn fourth_moment_ratio<R: Rng + ?Sized>(beta: f64, p: f64, sigma2: f64, draws: usize, rng: &mut R) -> f64 {
    let s2 = sigma2 / p;
    let a = estimate_variance(beta, 1.0, s2);
    let mut sum = 0.0;
    for _ in 0..draws {
        let g = complex_normal(rng, beta);
        sum += pilot_estimate(g, beta, s2, rng).norm_sqr().powi(2);
    }
    sum / draws as f64 / (a * a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn small() -> Instance {
        let mut rng = stream(9, 0, Purpose::Topology);
        Instance::random(5, 3, 2, 2, 0.5, 0.1, &mut rng).unwrap()
    }

    fn quick(model: DlEstimateModel) -> OracleParams {
        OracleParams {
            realizations: 20_000,
            symbols: 2,
            seed: 3,
            dl_model: model,
            chunk: 500,
        }
    }

    #[test]
    fn single_link_high_snr_approaches_unit_sinr() {
        let inst = Instance::new(Array2::from_elem((1, 1), 1.0), 1, 1, 1e-6, 1e-6).unwrap();
        let power = inst.full_power(Approach::Cf);
        let r = simulate_uplink_rb(&inst.inputs(&power), Approach::Cf, &quick(DlEstimateModel::Reciprocal)).unwrap();
        assert!((r.closed_form_sinr[0] - 1.0).abs() < 1e-5);
        assert!(r.max_rel_error() < 0.05, "{r:?}");
    }

    #[test]
    fn zero_power_gives_zero_sinr() {
        let inst = small();
        let mut power = inst.full_power(Approach::Cf);
        power.eta_dl.fill(0.0);
        let r = simulate_downlink_rb(&inst.inputs(&power), DlVariant::Cf, &quick(DlEstimateModel::Reciprocal)).unwrap();
        assert!(r.empirical_sinr.iter().all(|&s| s == 0.0), "{:?}", r.empirical_sinr);
        assert!(r.closed_form_sinr.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn reciprocal_model_matches_closed_forms() {
        let inst = small();
        let params = quick(DlEstimateModel::Reciprocal);
        for v in [DlVariant::MuCoherent, DlVariant::MuNoncoherent, DlVariant::Su, DlVariant::Cf] {
            let power = inst.full_power(match v {
                DlVariant::Su => Approach::SuOas,
                DlVariant::Cf => Approach::Cf,
                _ => Approach::MuOas,
            });
            let r = simulate_downlink_rb(&inst.inputs(&power), v, &params).unwrap();
            assert!(r.max_rel_error() < 0.05, "{} {:?}", v.name(), r.rel_error);
        }
    }

    #[test]
    fn single_tap_waveform_equals_flat_model() {
        let mut rng = stream(4, 0, Purpose::Oracle);
        let dft = Dft::new(16);
        let blocks: Vec<Vec<FreqBlock>> = (0..2)
            .map(|_| {
                (0..2)
                    .map(|_| FreqBlock((0..16).map(|_| complex_normal(&mut rng, 1.0)).collect()))
                    .collect()
            })
            .collect();
        let chans: Vec<TapChannel> = (0..2).map(|_| TapChannel::rayleigh(1, 1.0, &mut rng)).collect();
        let rx = waveform_receive(&blocks, &chans, 0, 0.0, &dft, &mut rng).unwrap();
        for t in 0..2 {
            for n in 0..16 {
                let flat = chans[0].gains()[0] * blocks[0][t].0[n] + chans[1].gains()[0] * blocks[1][t].0[n];
                assert!((rx[t].0[n] - flat).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn short_prefix_is_rejected_unless_allowed() {
        let inst = small();
        let power = inst.full_power(Approach::MuOas);
        let mut ofdm = OfdmParams {
            n: 16,
            l_cp: 1,
            taps: 4,
            allow_isi: false,
        };
        let params = OracleParams {
            realizations: 200,
            ..quick(DlEstimateModel::Reciprocal)
        };
        assert!(simulate_waveform_rb(&inst.inputs(&power), DlVariant::MuCoherent, ofdm, &params).is_err());
        ofdm.allow_isi = true;
        assert!(simulate_waveform_rb(&inst.inputs(&power), DlVariant::MuCoherent, ofdm, &params).is_ok());
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let inst = small();
        let power = inst.full_power(Approach::MuOas);
        let params = OracleParams {
            realizations: 3000,
            ..quick(DlEstimateModel::Independent)
        };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| simulate_downlink_rb(&inst.inputs(&power), DlVariant::MuCoherent, &params).unwrap())
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a.empirical_sinr, b.empirical_sinr);
        assert_eq!(a.terms, b.terms);
    }

    #[test]
    fn fourth_moment_is_two() {
        let mut rng = stream(5, 0, Purpose::Oracle);
        let r = fourth_moment_ratio(0.5, 2.0, 0.3, 100_000, &mut rng);
        assert!((r - 2.0).abs() < 0.05, "{r}");
    }
}
