//! The `validate` suite: OFDM chain identities, estimator moments, every
//! closed form against the link-level oracle, the waveform oracle, and the
//! SINR orderings.
//!
//! A check is `PASS`, `FAIL`, or `NOTE`. Notes quantify known modelling gaps
//! (for instance the coherent downlink forms under independent downlink
//! pilot noise) and never fail the suite.

use std::fmt;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use serde::Serialize;

use crate::error::Result;
use crate::estimation::{draw_rb_channel, DlEstimateModel, EstimationStats};
use crate::ofdm::{complex_normal, decomposition_residual, dft_by_matrix, Dft, FreqBlock, TapChannel};
use crate::oracle::{
    simulate_downlink_rb, simulate_uplink_rb, simulate_waveform_rb, DlVariant, Instance, OfdmParams, OracleParams,
    TermProbe,
};
use crate::rng::{stream, Purpose};
use crate::sinr::{downlink_sinr_oas_sets, uplink_sinr_sets, Approach, OasVariant, PowerAllocation, SinrInputs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Status {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "FAIL")]
    Fail,
    #[serde(rename = "NOTE")]
    Note,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Note => "NOTE",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub value: f64,
    pub limit: f64,
    pub detail: String,
}

impl Check {
    /// Passes when `value <= limit`.
    pub fn at_most(name: impl Into<String>, value: f64, limit: f64, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            status: if value <= limit { Status::Pass } else { Status::Fail },
            value,
            limit,
            detail: detail.into(),
        }
    }

    /// Passes when `value >= limit`.
    pub fn at_least(name: impl Into<String>, value: f64, limit: f64, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            status: if value >= limit { Status::Pass } else { Status::Fail },
            value,
            limit,
            detail: detail.into(),
        }
    }

    pub fn note(name: impl Into<String>, value: f64, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            status: Status::Note,
            value,
            limit: f64::NAN,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {:<44} value={:<12.5e}", self.status, self.name, self.value)?;
        if !self.limit.is_nan() {
            write!(f, " limit={:<10.3e}", self.limit)?;
        }
        if !self.detail.is_empty() {
            write!(f, " {}", self.detail)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationOptions {
    pub realizations: usize,
    pub symbols: usize,
    pub seed: u64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        ValidationOptions {
            realizations: 100_000,
            symbols: 4,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TermRow {
    pub expression: String,
    pub user: usize,
    pub term: &'static str,
    pub empirical: f64,
    pub formula: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    pub terms: Vec<TermRow>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != Status::Fail)
    }

    /// Writes `checks.csv` and `terms.csv`.
    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("checks.csv"))?;
        for c in &self.checks {
            w.serialize(c)?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join("terms.csv"))?;
        for t in &self.terms {
            w.serialize(t)?;
        }
        w.flush()?;
        Ok(())
    }

    fn add_terms(&mut self, expression: &str, probes: &[TermProbe]) {
        for p in probes {
            self.terms.push(TermRow {
                expression: expression.to_string(),
                user: p.user,
                term: p.term,
                empirical: p.empirical,
                formula: p.formula,
                error: p.error(),
            });
        }
    }
}

/// Oracle tolerance on SINRs and term variances.
pub const ORACLE_TOLERANCE: f64 = 0.05;

/// The 8-AP, 4-user instance the oracle checks run on.
pub fn oracle_instance(seed: u64) -> Instance {
    let mut rng = stream(seed, 0, Purpose::Topology);
    Instance::random(8, 4, 2, 3, 0.3, 0.05, &mut rng).expect("valid instance")
}

fn ofdm_checks(report: &mut ValidationReport, seed: u64) -> Result<()> {
    let mut rng = stream(seed, 1, Purpose::Oracle);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let n = [16, 64, 100, 128][i % 4];
        let l_cp = 1 + i % 16;
        let taps = 1 + rng.random_range(0..l_cp);
        let block = FreqBlock((0..n).map(|_| complex_normal(&mut rng, 1.0)).collect());
        let ch = TapChannel::rayleigh(taps, 1.0, &mut rng);
        worst = worst.max(decomposition_residual(&block, &ch, n, l_cp)?);
    }
    report
        .checks
        .push(Check::at_most("ofdm decomposition, L <= L_cp (100 cases)", worst, 1e-9, "max |y - g x|"));

    let block = FreqBlock((0..64).map(|_| complex_normal(&mut rng, 1.0)).collect());
    let ch = TapChannel::rayleigh(3, 1.0, &mut rng);
    let r = decomposition_residual(&block, &ch, 64, 0)?;
    report
        .checks
        .push(Check::at_least("ofdm decomposition, no CP, L = 3", r, 1e-6, "ISI must show"));

    let mut worst: f64 = 0.0;
    for n in [8, 12, 64, 100, 256] {
        let x: Vec<_> = (0..n).map(|_| complex_normal(&mut rng, 1.0)).collect();
        let mut fast = x.clone();
        Dft::new(n).forward(&mut fast);
        let slow = dft_by_matrix(&x);
        worst = worst.max(fast.iter().zip(&slow).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max));
        let dft = Dft::new(n);
        let back = dft.demodulate(&dft.modulate(&FreqBlock(x.clone())));
        worst = worst.max(back.0.iter().zip(&x).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max));
    }
    report
        .checks
        .push(Check::at_most("fft vs matrix dft, round trip", worst, 1e-10, ""));
    Ok(())
}

fn estimation_checks(report: &mut ValidationReport, seed: u64) -> Result<()> {
    let n = 100_000;
    let beta = Array2::from_elem((1, n), 0.7);
    let stats = EstimationStats::new(&beta, 0.2, 0.2, 0.05);
    let a = stats.alpha[[0, 0]];
    let ch = draw_rb_channel(&beta, &stats, DlEstimateModel::Independent, &mut stream(seed, 2, Purpose::Oracle))?;
    let nf = n as f64;
    let var = ch.g_hat_ul.iter().map(|v| v.norm_sqr()).sum::<f64>() / nf;
    report
        .checks
        .push(Check::at_most("estimate variance / alpha - 1", (var / a - 1.0).abs(), 0.02, "1e5 draws"));
    let m4 = ch.g_hat_ul.iter().map(|v| v.norm_sqr().powi(2)).sum::<f64>() / nf / (a * a);
    report
        .checks
        .push(Check::at_most("fourth moment E|g_hat|^4/alpha^2 - 2", (m4 - 2.0).abs(), 0.04, "1e5 draws"));
    let mse = ch.g.iter().zip(&ch.g_hat_ul).map(|(g, h)| (g - h).norm_sqr()).sum::<f64>() / nf;
    report.checks.push(Check::at_most(
        "error variance / (beta - alpha) - 1",
        (mse / (0.7 - a) - 1.0).abs(),
        0.02,
        "1e5 draws",
    ));
    Ok(())
}

fn dl_power(variant: DlVariant, inst: &Instance) -> PowerAllocation {
    inst.full_power(match variant {
        DlVariant::MuCoherent | DlVariant::MuNoncoherent => Approach::MuOas,
        DlVariant::Su => Approach::SuOas,
        DlVariant::Cf => Approach::Cf,
        DlVariant::Uc | DlVariant::UcAllInterferers => Approach::Uc,
    })
}

fn oracle_checks(report: &mut ValidationReport, opts: &ValidationOptions) -> Result<()> {
    let inst = oracle_instance(opts.seed);
    let params = OracleParams {
        realizations: opts.realizations,
        symbols: opts.symbols,
        seed: opts.seed,
        dl_model: DlEstimateModel::Reciprocal,
        ..OracleParams::default()
    };
    for approach in Approach::ALL {
        let power = inst.full_power(approach);
        let r = simulate_uplink_rb(&inst.inputs(&power), approach, &params)?;
        let name = format!("ul {approach}");
        report
            .checks
            .push(Check::at_most(format!("oracle {name} sinr"), r.max_rel_error(), ORACLE_TOLERANCE, "max rel err"));
        report
            .checks
            .push(Check::at_most(format!("oracle {name} terms"), r.max_term_error(), ORACLE_TOLERANCE, "S0 I1-I4"));
        report.add_terms(&name, &r.terms);
    }
    for variant in [
        DlVariant::MuCoherent,
        DlVariant::MuNoncoherent,
        DlVariant::Su,
        DlVariant::Cf,
        DlVariant::Uc,
    ] {
        let power = dl_power(variant, &inst);
        let r = simulate_downlink_rb(&inst.inputs(&power), variant, &params)?;
        let name = format!("dl {}", variant.name());
        report
            .checks
            .push(Check::at_most(format!("oracle {name} sinr"), r.max_rel_error(), ORACLE_TOLERANCE, "max rel err"));
        report
            .checks
            .push(Check::at_most(format!("oracle {name} terms"), r.max_term_error(), ORACLE_TOLERANCE, ""));
        report.add_terms(&name, &r.terms);
    }

    // Known gaps, reported rather than asserted.
    let independent = OracleParams {
        dl_model: DlEstimateModel::Independent,
        ..params
    };
    for variant in [DlVariant::MuCoherent, DlVariant::Su] {
        let power = dl_power(variant, &inst);
        let r = simulate_downlink_rb(&inst.inputs(&power), variant, &independent)?;
        let i5 = r.terms.iter().filter(|t| t.term == "I5").map(|t| t.empirical).fold(0.0, f64::max);
        report.checks.push(Check::note(
            format!("dl {} with independent dl pilots", variant.name()),
            r.max_rel_error(),
            format!("closed form takes E|I5|^2 = 0 at psi = alpha; measured up to {i5:.3}"),
        ));
        report.add_terms(&format!("dl {} independent", variant.name()), &r.terms);
    }
    let power = dl_power(DlVariant::UcAllInterferers, &inst);
    let r = simulate_downlink_rb(&inst.inputs(&power), DlVariant::UcAllInterferers, &params)?;
    report.checks.push(Check::at_most(
        "oracle dl uc, all APs interfering",
        r.max_rel_error(),
        ORACLE_TOLERANCE,
        "vs CF form with UC coefficients",
    ));
    let gap = r
        .closed_form_sinr
        .iter()
        .zip(&uc_serving_set_sinrs(&inst, &power))
        .map(|(full, partial)| (partial - full) / full)
        .fold(0.0, f64::max);
    report.checks.push(Check::note(
        "dl uc serving-set form vs all-interferer sinr",
        gap,
        "relative overestimate from ignoring APs outside the serving set",
    ));
    Ok(())
}

fn waveform_checks(report: &mut ValidationReport, opts: &ValidationOptions) -> Result<()> {
    let inst = oracle_instance(opts.seed);
    let params = OracleParams {
        realizations: (opts.realizations / 5).max(1),
        symbols: 1,
        seed: opts.seed ^ 0x5a5a,
        dl_model: DlEstimateModel::Reciprocal,
        chunk: 200,
    };
    let power = inst.full_power(Approach::MuOas);
    let inputs = inst.inputs(&power);
    let ok = OfdmParams {
        n: 32,
        l_cp: 4,
        taps: 4,
        allow_isi: false,
    };
    let r = simulate_waveform_rb(&inputs, DlVariant::MuCoherent, ok, &params)?;
    report.checks.push(Check::at_most(
        "waveform mu coherent, 4 taps, cp 4",
        r.max_rel_error(),
        ORACLE_TOLERANCE,
        "vs flat closed form",
    ));
    let isi = OfdmParams {
        l_cp: 1,
        taps: 6,
        allow_isi: true,
        ..ok
    };
    let r_isi = simulate_waveform_rb(&inputs, DlVariant::MuCoherent, isi, &params)?;
    let drop = r
        .empirical_sinr
        .iter()
        .zip(&r_isi.empirical_sinr)
        .map(|(a, b)| (a - b) / a)
        .fold(f64::INFINITY, f64::min);
    report
        .checks
        .push(Check::at_least("waveform sinr loss, 6 taps, cp 1", drop, 0.0, "min relative loss"));
    Ok(())
}

/// Random instances for the ordering checks: `(beta, alpha, eta_ul)`.
fn random_ul_case<R: Rng>(rng: &mut R, m: usize, k: usize) -> (Array2<f64>, Array2<f64>, Vec<f64>, f64) {
    let beta = Array2::from_shape_simple_fn((m, k), || (rng.random::<f64>() * -6.0).exp());
    let noise = (rng.random::<f64>() * 8.0 - 6.0).exp();
    let alpha = beta.mapv(|b| b * b / (b + noise));
    let eta = (0..k).map(|_| 0.05 + 0.95 * rng.random::<f64>()).collect();
    (beta, alpha, eta, noise)
}

fn ordering_checks(report: &mut ValidationReport, seed: u64) {
    let mut rng = stream(seed, 3, Purpose::Oracle);
    let (mut th1, mut th2, mut coh) = (0, 0, 0);
    let cases = 1000;
    for _ in 0..cases {
        let m = rng.random_range(2..10);
        let k = rng.random_range(3..8);
        let (beta, alpha, eta, noise) = random_ul_case(&mut rng, m, k);
        let aps: Vec<usize> = (0..rng.random_range(1..=m)).collect();
        let n_u = rng.random_range(2..k);
        let group: Vec<usize> = (0..n_u).collect();
        let all: Vec<usize> = (0..k).collect();
        let power = PowerAllocation {
            eta_ul: eta,
            eta_dl: Array2::from_shape_simple_fn((m, k), || rng.random::<f64>()),
        };
        let sets = crate::selection::SelectionPlan {
            per_user_aps: vec![aps.clone(); k],
            rb_users: vec![group.clone()],
            rb_aps: vec![aps.clone()],
            uc_user_sets: vec![all.clone(); m],
            uc_ap_sets: vec![aps.clone(); k],
        };
        let psi = alpha.clone();
        let inputs = SinrInputs {
            beta: &beta,
            alpha: &alpha,
            psi: &psi,
            power: &power,
            sets: &sets,
            noise_over_pu: noise,
            noise_over_pd: noise,
        };
        let su = uplink_sinr_sets(0, &aps, &[0], &inputs);
        let mu = uplink_sinr_sets(0, &aps, &group, &inputs);
        let uc = uplink_sinr_sets(0, &aps, &all, &inputs);
        th1 += usize::from(su <= mu);
        th2 += usize::from(mu <= uc);
        let c = downlink_sinr_oas_sets(OasVariant::MuCoherent, 0, &aps, &group, &inputs);
        let nc = downlink_sinr_oas_sets(OasVariant::MuNoncoherent, 0, &aps, &group, &inputs);
        coh += usize::from(c < nc);
    }
    report
        .checks
        .push(Check::at_most("su > mu uplink, violations", th1 as f64, 0.0, "1000 random cases"));
    report
        .checks
        .push(Check::at_most("mu > uc uplink, violations", th2 as f64, 0.0, "1000 random cases"));
    report
        .checks
        .push(Check::at_most("coherent >= non-coherent dl, violations", coh as f64, 0.0, "1000 random cases"));
}

pub fn run_validation(opts: &ValidationOptions) -> Result<ValidationReport> {
    let mut report = ValidationReport::default();
    ofdm_checks(&mut report, opts.seed)?;
    estimation_checks(&mut report, opts.seed)?;
    oracle_checks(&mut report, opts)?;
    waveform_checks(&mut report, opts)?;
    ordering_checks(&mut report, opts.seed);
    Ok(report)
}

/// UC downlink SINR of every user counting only serving-AP interference.
fn uc_serving_set_sinrs(inst: &Instance, power: &PowerAllocation) -> Vec<f64> {
    let inputs = inst.inputs(power);
    (0..inst.beta.ncols())
        .map(|k| crate::sinr::downlink_sinr_benchmark(Approach::Uc, k, &inputs).expect("uc"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn check_status() {
        assert_eq!(Check::at_most("a", 1.0, 2.0, "").status, Status::Pass);
        assert_eq!(Check::at_most("a", 3.0, 2.0, "").status, Status::Fail);
        assert_eq!(Check::at_least("a", 3.0, 2.0, "").status, Status::Pass);
        assert_eq!(Check::at_least("a", f64::NAN, 2.0, "").status, Status::Fail);
        let mut r = ValidationReport::default();
        r.checks.push(Check::note("n", 0.4, "gap"));
        assert!(r.all_passed());
        r.checks.push(Check::at_most("b", 1.0, 0.0, ""));
        assert!(!r.all_passed());
        assert!(r.checks[1].to_string().starts_with("FAIL b"));
    }

    #[test]
    fn ordering_checks_find_no_violations() {
        let mut r = ValidationReport::default();
        ordering_checks(&mut r, 11);
        assert_eq!(r.checks.len(), 3);
        assert!(r.all_passed(), "{:?}", r.checks);
    }
}
