//! The validation suite: machine-checkable replays of every acceptance
//! check at pinned seeds and parameters. Each check returns a measured
//! value, its target and tolerance, and a pass flag; failures are report
//! entries, never panics.
//!
//! The heavyweight growth ensembles are computed once per process and
//! shared across checks.

use std::sync::OnceLock;
use std::time::Instant;

use rayon::prelude::*;

use crate::clock;
use crate::constants::{TEN_BILLION_LIGHT_YEARS_M, TEN_BILLION_YEARS_S};
use crate::cosmo::{
    self, mean_n_analytic, CosmoAnalytic, EnsembleStats, SimOptions, TrajectoryRecord,
};
use crate::exact::{self, H0InitialState, SeparationParams};
use crate::fock::{FockVector, ModelParams};
use crate::harness::config::ExperimentConfig;
use crate::harness::run::{self, run_ensemble};
use crate::noise::{NoisePath, Scheme, StreamLabel};
use crate::stats::{self, KS_LEVEL, SIGMA_BAND};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    H0,
    Cosmo,
    Clock,
    All,
}

impl std::str::FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "h0" => Ok(Suite::H0),
            "cosmo" => Ok(Suite::Cosmo),
            "clock" => Ok(Suite::Clock),
            "all" => Ok(Suite::All),
            other => Err(Error::Parse(format!("unknown suite '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub id: &'static str,
    pub description: &'static str,
    pub measured: f64,
    pub target: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
    pub runtime_s: f64,
}

impl CheckResult {
    pub fn line(&self) -> String {
        format!(
            "{:5} {:24} measured {:>12.4e}  target {:>12.4e}  tol {:>10.3e}  [{:6.1}s]  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.measured,
            self.target,
            self.tolerance,
            self.runtime_s,
            self.detail
        )
    }
}

#[allow(clippy::too_many_arguments)]
fn finish(
    id: &'static str,
    description: &'static str,
    start: Instant,
    measured: f64,
    target: f64,
    tolerance: f64,
    passed: bool,
    detail: String,
) -> CheckResult {
    CheckResult {
        id,
        description,
        measured,
        target,
        tolerance,
        passed,
        detail,
        runtime_s: start.elapsed().as_secs_f64(),
    }
}

/// Run a suite; failures are entries in the report, not errors.
pub fn validate(suite: Suite) -> Vec<CheckResult> {
    run::init_thread_pool();
    let mut out = Vec::new();
    if matches!(suite, Suite::H0 | Suite::All) {
        out.push(checks::uniform_instants());
        out.push(checks::born_rule());
        out.push(checks::b_distribution());
        out.push(checks::sampler_equivalence());
        out.push(checks::sampler_equivalence_lt1());
        out.push(checks::sampler_equivalence_physical());
        out.push(checks::hopping());
    }
    if matches!(suite, Suite::Cosmo | Suite::All) {
        out.push(checks::mean_growth());
        out.push(checks::no_collapse_limits());
        out.push(checks::second_moment_ratio());
        out.push(checks::spread_scaling());
        out.push(checks::inequality_chain());
        out.push(checks::convergence_determinism());
    }
    if matches!(suite, Suite::Clock | Suite::All) {
        out.push(checks::clock_sector());
        out.push(checks::clock_oscillation());
    }
    out
}

/// Ordered check ids per suite (the dispatch table of [`validate`]).
pub fn suite_ids(suite: Suite) -> Vec<&'static str> {
    let mut out = Vec::new();
    if matches!(suite, Suite::H0 | Suite::All) {
        out.extend([
            "uniform-instants",
            "born-rule",
            "b-distribution",
            "sampler-equivalence",
            "sampler-equiv-lt1",
            "sampler-equiv-physical",
            "hopping",
        ]);
    }
    if matches!(suite, Suite::Cosmo | Suite::All) {
        out.extend([
            "mean-growth",
            "no-collapse-limits",
            "second-moment-ratio",
            "spread-scaling",
            "inequality-chain",
            "convergence-determinism",
        ]);
    }
    if matches!(suite, Suite::Clock | Suite::All) {
        out.extend(["clock-sector", "clock-oscillation"]);
    }
    out
}

/// Pinned growth-law runs; dt per set comes from the bias calibration so
/// the splitting error sits well inside the statistical bands at 2e4
/// trajectories.
#[derive(Debug, Clone, Copy)]
pub struct GrowthSpec {
    pub epsilon: f64,
    pub g: f64,
    pub lambda: f64,
    pub t_final: f64,
    pub dt: f64,
    pub steps: usize,
    pub stride: usize,
    pub n_max: usize,
    pub n_traj: usize,
    pub seed: u64,
}

pub const GROWTH_SETS: [GrowthSpec; 3] = [
    GrowthSpec {
        epsilon: 1.0,
        g: 0.5,
        lambda: 2.0,
        t_final: 25.0,
        dt: 0.005,
        steps: 5000,
        stride: 250,
        n_max: 96,
        n_traj: 20_000,
        seed: 710,
    },
    GrowthSpec {
        epsilon: 0.5,
        g: 0.3,
        lambda: 1.0,
        t_final: 50.0,
        dt: 0.02,
        steps: 2500,
        stride: 125,
        n_max: 128,
        n_traj: 20_000,
        seed: 711,
    },
    GrowthSpec {
        epsilon: 2.0,
        g: 0.5,
        lambda: 0.5,
        t_final: 100.0,
        dt: 0.005,
        steps: 20_000,
        stride: 1000,
        n_max: 64,
        n_traj: 20_000,
        seed: 712,
    },
];

fn growth_stats(i: usize) -> std::result::Result<&'static EnsembleStats, String> {
    static CACHE: [OnceLock<std::result::Result<EnsembleStats, String>>; 3] =
        [OnceLock::new(), OnceLock::new(), OnceLock::new()];
    CACHE[i]
        .get_or_init(|| {
            let s = &GROWTH_SETS[i];
            let p = ModelParams::new(s.epsilon, s.g, s.lambda, 8, s.n_max)
                .map_err(|e| e.to_string())?;
            let template =
                SimOptions::new(s.steps, s.dt, Scheme::Physical, s.seed).with_stride(s.stride);
            let run = run_ensemble(&p, &template, s.n_traj).map_err(|e| e.to_string())?;
            cosmo::ensemble_spread(&run.records, Scheme::Physical).map_err(|e| e.to_string())
        })
        .as_ref()
        .map_err(|e| e.clone())
}

/// B(t) and the log path weight of an H = 0 ensemble at the final time.
struct H0Sample {
    b: Vec<f64>,
    log_w: Vec<f64>,
}

fn h0_ensemble(
    init: &H0InitialState,
    lambda: f64,
    steps: usize,
    dt: f64,
    scheme: Scheme,
    n_traj: usize,
    seed: u64,
) -> Result<H0Sample> {
    // One empty headroom slot so the top-occupancy diagnostic measures
    // genuine truncation pressure (the support is static when H = 0).
    let n_max = init.max_n() + 1;
    let p = ModelParams::new(0.0, 0.0, lambda, 8, n_max)?;
    let rows: Vec<Result<(f64, f64)>> = (0..n_traj)
        .into_par_iter()
        .map(|i| {
            let opts = SimOptions::new(steps, dt, scheme, seed)
                .with_stride(steps)
                .with_trajectory(i as u64)
                .with_initial(init.clone());
            let rec = cosmo::simulate_trajectory(&p, &opts)?;
            Ok((*rec.brownian.last().unwrap(), *rec.log_norm2.last().unwrap()))
        })
        .collect();
    let mut b = Vec::with_capacity(n_traj);
    let mut log_w = Vec::with_capacity(n_traj);
    for row in rows {
        let (bi, li) = row?;
        b.push(bi);
        log_w.push(li);
    }
    Ok(H0Sample { b, log_w })
}

fn raw_weights(log_w: &[f64]) -> Vec<f64> {
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    log_w.iter().map(|l| (l - max).exp()).collect()
}

fn err_check(id: &'static str, description: &'static str, start: Instant, e: String) -> CheckResult {
    finish(id, description, start, f64::NAN, 0.0, 0.0, false, format!("error: {e}"))
}

pub mod checks {
    use super::*;

    /// Criterion 1: with no collapse the squared norms of all K instants
    /// are exactly uniform.
    pub fn uniform_instants() -> CheckResult {
        let start = Instant::now();
        let id = "uniform-instants";
        let desc = "all K instant norms equal 1/K without collapse";
        let run = || -> Result<f64> {
            let p = ModelParams::new(1.0, 0.5, 0.0, 8, 16)?;
            let path = NoisePath {
                dt: 1.0,
                values: vec![0.0; 7],
                seed: 0,
                scheme: Scheme::Raw,
            };
            let table = exact::build_instants(&p, &path, &FockVector::vacuum(16))?;
            let mut worst = 0.0f64;
            for m in 0..8 {
                worst = worst.max((table.norm2(m) - 0.125).abs());
            }
            Ok(worst)
        };
        match run() {
            Ok(worst) => {
                let detail = format!("max |norm² - 1/8| = {worst:.3e} over K = 8 instants");
                finish(id, desc, start, worst, 0.0, 1e-12, worst <= 1e-12, detail)
            }
            Err(e) => err_check(id, desc, start, e.to_string()),
        }
    }

    /// Criterion 2: window-classified record frequencies reproduce the Born
    /// weights (0.3, 0.7) within 3 binomial standard errors.
    pub fn born_rule() -> CheckResult {
        let start = Instant::now();
        let id = "born-rule";
        let desc = "window frequencies match Born weights at λt = 25";
        let (lambda, t, dt, m) = (1.0f64, 25.0f64, 0.002f64, 10_000usize);
        let steps = (t / dt).round() as usize;
        let run = || -> Result<(f64, f64, f64)> {
            let init = H0InitialState::two_level(1, 0.3, 4, 0.7)?;
            let sample = h0_ensemble(&init, lambda, steps, dt, Scheme::Physical, m, 700)?;
            let sep = SeparationParams::default();
            let (mut c1, mut c4, mut unc) = (0usize, 0usize, 0usize);
            for &b in &sample.b {
                match exact::classify_b(b, lambda, t, &[1, 4], sep) {
                    Some(0) => c1 += 1,
                    Some(1) => c4 += 1,
                    _ => unc += 1,
                }
            }
            Ok((
                c1 as f64 / m as f64,
                c4 as f64 / m as f64,
                unc as f64 / m as f64,
            ))
        };
        match run() {
            Ok((f1, f4, unclassified)) => {
                let se = (0.3f64 * 0.7 / m as f64).sqrt();
                let z1 = (f1 - 0.3).abs() / se;
                let z4 = (f4 - 0.7).abs() / se;
                let z = z1.max(z4);
                let passed = z <= SIGMA_BAND && unclassified < 1e-3;
                let detail = format!(
                    "f(n=1) = {f1:.4} vs 0.3, f(n=4) = {f4:.4} vs 0.7 (max {z:.2}σ), unclassified {unclassified:.1e}"
                );
                finish(id, desc, start, z, 0.0, SIGMA_BAND, passed, detail)
            }
            Err(e) => err_check(id, desc, start, e.to_string()),
        }
    }

    /// Criterion 3: sampled B(t) passes the weighted KS test against the
    /// Gaussian-mixture CDF at the 1% level for λt ∈ {1, 10, 100}
    /// (physical-scheme samples; the raw-weighted variant runs where its
    /// importance weights are statistically sound, λt = 1).
    pub fn b_distribution() -> CheckResult {
        let start = Instant::now();
        let id = "b-distribution";
        let desc = "B(t) matches the mixture CDF (KS 1%) at λt ∈ {1,10,100}";
        let lambda = 1.0;
        let dt = 0.01;
        let m = 10_000usize;
        let run = || -> Result<(f64, String)> {
            let init = H0InitialState::two_level(0, 0.5, 1, 0.5)?;
            let mut worst: f64 = 0.0;
            let mut parts = Vec::new();
            for (k, &t) in [1.0f64, 10.0, 100.0].iter().enumerate() {
                let steps = (t / dt).round() as usize;
                let sample =
                    h0_ensemble(&init, lambda, steps, dt, Scheme::Physical, m, 701 + k as u64)?;
                let w = vec![1.0; m];
                let ks = stats::ks_weighted_one_sample(
                    &sample.b,
                    &w,
                    |b| exact::cdf_b(&init, lambda, t, b),
                    KS_LEVEL,
                );
                worst = worst.max(ks.statistic / ks.critical);
                parts.push(format!("λt={t}: D={:.4} stat={:.2}", ks.d, ks.statistic));
            }
            // Raw-weighted companion at λt = 1 (sound importance regime).
            let sample = h0_ensemble(&init, lambda, 100, dt, Scheme::Raw, m, 704)?;
            let w = raw_weights(&sample.log_w);
            let ks = stats::ks_weighted_one_sample(
                &sample.b,
                &w,
                |b| exact::cdf_b(&init, lambda, 1.0, b),
                KS_LEVEL,
            );
            worst = worst.max(ks.statistic / ks.critical);
            parts.push(format!(
                "raw λt=1: D={:.4} stat={:.2} ESS={:.0}",
                ks.d, ks.statistic, ks.n_eff
            ));
            Ok((worst, parts.join("; ")))
        };
        match run() {
            Ok((worst, detail)) => finish(id, desc, start, worst, 0.0, 1.0, worst < 1.0, detail),
            Err(e) => err_check(id, desc, start, e.to_string()),
        }
    }

    /// Criterion 4, exactly as stated: two-sample weighted KS between
    /// raw-weighted and physical-unweighted B(t) at λt = 5, dt = 0.01.
    ///
    /// This check fails and is expected to: the Radon–Nikodym weights of
    /// the raw scheme have relative second moment ≈ e^{4λt}/4 ≈ 1.2e8 at
    /// λt = 5, so 10⁴ mean-zero Gaussian paths cannot represent the
    /// drifted mixture component (4.5σ outside the proposal). The distance
    /// is systematic — the unreachable component's mass — not an
    /// implementation defect; the two companion checks verify the same
    /// equivalence content where it is statistically verifiable.
    pub fn sampler_equivalence() -> CheckResult {
        let start = Instant::now();
        let id = "sampler-equivalence";
        let desc = "raw-weighted vs physical B(t), two-sample KS at λt = 5";
        let (lambda, t, dt, m) = (1.0f64, 5.0f64, 0.01f64, 10_000usize);
        let steps = (t / dt).round() as usize;
        let run = || -> Result<(f64, String)> {
            let init = H0InitialState::two_level(0, 0.5, 1, 0.5)?;
            let raw = h0_ensemble(&init, lambda, steps, dt, Scheme::Raw, m, 705)?;
            let phys = h0_ensemble(&init, lambda, steps, dt, Scheme::Physical, m, 706)?;
            let wx = raw_weights(&raw.log_w);
            let wy = vec![1.0; m];
            let ks = stats::ks_weighted_two_sample(&raw.b, &wx, &phys.b, &wy, KS_LEVEL);
            let detail = format!(
                "D={:.4}, realized ESS={:.0}, stat={:.2} vs crit {:.3}; raw importance weights are degenerate at λt=5 (relative weight variance e^(4λt)/4 ≈ 1.2e8) so the drifted component is unreachable by mean-zero proposals — statistical impossibility, not an implementation defect; see the two companion checks",
                ks.d, ks.n_eff, ks.statistic, ks.critical
            );
            Ok((ks.statistic / ks.critical, detail))
        };
        match run() {
            Ok((ratio, detail)) => finish(id, desc, start, ratio, 0.0, 1.0, ratio < 1.0, detail),
            Err(e) => err_check(id, desc, start, e.to_string()),
        }
    }

    /// Companion: the identical two-sample test at λt = 1, where the raw
    /// weights are sound (theoretical ESS ≈ 7% of the paths).
    pub fn sampler_equivalence_lt1() -> CheckResult {
        let start = Instant::now();
        let id = "sampler-equiv-lt1";
        let desc = "raw-weighted vs physical B(t), two-sample KS at λt = 1";
        let (lambda, t, dt, m) = (1.0f64, 1.0f64, 0.01f64, 10_000usize);
        let steps = (t / dt).round() as usize;
        let run = || -> Result<(f64, String)> {
            let init = H0InitialState::two_level(0, 0.5, 1, 0.5)?;
            let raw = h0_ensemble(&init, lambda, steps, dt, Scheme::Raw, m, 708)?;
            let phys = h0_ensemble(&init, lambda, steps, dt, Scheme::Physical, m, 709)?;
            let wx = raw_weights(&raw.log_w);
            let wy = vec![1.0; m];
            let ks = stats::ks_weighted_two_sample(&raw.b, &wx, &phys.b, &wy, KS_LEVEL);
            let detail = format!(
                "D={:.4}, ESS={:.0}, stat={:.2} vs crit {:.3}",
                ks.d, ks.n_eff, ks.statistic, ks.critical
            );
            Ok((ks.statistic / ks.critical, detail))
        };
        match run() {
            Ok((ratio, detail)) => finish(id, desc, start, ratio, 0.0, 1.0, ratio < 1.0, detail),
            Err(e) => err_check(id, desc, start, e.to_string()),
        }
    }

    /// Companion: physical-unweighted B(t) against the exact mixture CDF at
    /// λt = 5 — pins the O(dt) bias of the physical sampler at the
    /// criterion's step size.
    pub fn sampler_equivalence_physical() -> CheckResult {
        let start = Instant::now();
        let id = "sampler-equiv-physical";
        let desc = "physical B(t) vs exact mixture CDF at λt = 5";
        let (lambda, t, dt, m) = (1.0f64, 5.0f64, 0.01f64, 10_000usize);
        let steps = (t / dt).round() as usize;
        let run = || -> Result<(f64, String)> {
            let init = H0InitialState::two_level(0, 0.5, 1, 0.5)?;
            let phys = h0_ensemble(&init, lambda, steps, dt, Scheme::Physical, m, 706)?;
            let w = vec![1.0; m];
            let ks = stats::ks_weighted_one_sample(
                &phys.b,
                &w,
                |b| exact::cdf_b(&init, lambda, t, b),
                KS_LEVEL,
            );
            Ok((
                ks.statistic / ks.critical,
                format!(
                    "D={:.4}, stat={:.2} vs crit {:.3}",
                    ks.d, ks.statistic, ks.critical
                ),
            ))
        };
        match run() {
            Ok((ratio, detail)) => finish(id, desc, start, ratio, 0.0, 1.0, ratio < 1.0, detail),
            Err(e) => err_check(id, desc, start, e.to_string()),
        }
    }

    /// Criterion 5: hop suppression. The Monte Carlo hop frequency stays
    /// under max(3× the window quadrature, 3/M), and the peak-density
    /// bound holds at scattered parameter points.
    pub fn hopping() -> CheckResult {
        let start = Instant::now();
        let id = "hopping";
        let desc = "hops between separated records are suppressed";
        let (lambda, t1, t2) = (1.0, 25.0, 2500.0);
        let (n1, n2) = (0usize, 1usize);
        let m_total = 100_000usize;
        let dt = 0.5;
        let run = || -> Result<(f64, f64, bool, String)> {
            let init = H0InitialState::two_level(n1, 0.5, n2, 0.5)?;
            let sep = SeparationParams::default();
            let hop = exact::hop_probability(&init, lambda, t1, t2, n1, n2, sep)?;

            // Monte Carlo in batches to bound memory; the record grid must
            // contain both t1 and t = t1 + t2.
            let t = t1 + t2;
            let steps = (t / dt).round() as usize;
            let stride = (t1 / dt).round() as usize;
            let p = ModelParams::new(0.0, 0.0, lambda, 8, n1.max(n2) + 1)?;
            let j1 = 1usize; // record index of t1
            let r = sep.r();
            let (c1, half1) = (2.0 * lambda * t1 * n1 as f64, r * (lambda * t1).sqrt());
            let (c2, half2) = (2.0 * lambda * t * n2 as f64, r * (lambda * t2).sqrt());
            let mut hops = 0usize;
            let batch = 5000usize;
            for lo in (0..m_total).step_by(batch) {
                let hi = (lo + batch).min(m_total);
                let counts: Vec<Result<u32>> = (lo..hi)
                    .into_par_iter()
                    .map(|i| {
                        let opts = SimOptions::new(steps, dt, Scheme::Physical, 707)
                            .with_stride(stride)
                            .with_trajectory(i as u64)
                            .with_initial(init.clone());
                        let rec = cosmo::simulate_trajectory(&p, &opts)?;
                        let b1 = rec.brownian[j1];
                        let b = *rec.brownian.last().unwrap();
                        Ok(u32::from(
                            (b1 - c1).abs() <= half1 && (b - c2).abs() <= half2,
                        ))
                    })
                    .collect();
                for c in counts {
                    hops += c? as usize;
                }
            }
            let freq = hops as f64 / m_total as f64;
            let bound = (3.0 * hop.quadrature).max(3.0 / m_total as f64);

            // Peak-density bound at scattered parameter points.
            let mut bound_ok = true;
            for i in 0..10 {
                let lam = 0.3 + 0.2 * i as f64;
                let tt1 = 1.0 + 0.7 * i as f64;
                let tt2 = tt1 * (1.5 + i as f64);
                let w1 = 0.2 + 0.05 * i as f64;
                let dn = 1 + (i % 3);
                let two = H0InitialState::two_level(0, w1, dn, 1.0 - w1)?;
                let (peak, pbound) = exact::hop_peak_density(&two, lam, tt1, tt2, 0, dn)?;
                bound_ok &= peak < pbound;
            }
            let detail = format!(
                "MC {hops}/{m_total} hops (freq {freq:.1e}) vs bound {bound:.1e}; quadrature {:.3e}, sinh branch {:.3e}; peak bound held at 10 points: {bound_ok}",
                hop.quadrature, hop.sinh_approx
            );
            Ok((freq, bound, bound_ok, detail))
        };
        match run() {
            Ok((freq, bound, bound_ok, detail)) => {
                let passed = freq <= bound && bound_ok;
                finish(id, desc, start, freq, 0.0, bound, passed, detail)
            }
            Err(e) => err_check(id, desc, start, e.to_string()),
        }
    }

    /// Criterion 6 core, parameterized over the analytic curve so a
    /// tampered constant is caught by the suite (mutation fixture).
    pub fn mean_growth_with<F>(analytic: F) -> CheckResult
    where
        F: Fn(&CosmoAnalytic, f64) -> Result<f64>,
    {
        let start = Instant::now();
        let id = "mean-growth";
        let desc = "ensemble mean size follows the closed-form curve to λt = 50";
        let mut worst_z = 0.0f64;
        let mut worst_rel_late = 0.0f64;
        let mut parts = Vec::new();
        for (i, spec) in GROWTH_SETS.iter().enumerate() {
            let stats = match growth_stats(i) {
                Ok(s) => s,
                Err(e) => return err_check(id, desc, start, e),
            };
            let a = CosmoAnalytic::new(spec.epsilon, spec.g, spec.lambda);
            let n_points = stats.times.len(); // 21 including t = 0
            let mut set_worst = 0.0f64;
            for j in (2..n_points).step_by(2) {
                let t = stats.times[j];
                let expect = match analytic(&a, t) {
                    Ok(v) => v,
                    Err(e) => return err_check(id, desc, start, e.to_string()),
                };
                let z = (stats.mean_n_bar[j] - expect).abs() / stats.mean_n_stderr[j];
                set_worst = set_worst.max(z);
                if j >= n_points - 6 {
                    let rel = (stats.mean_n_bar[j] - expect).abs() / expect;
                    worst_rel_late = worst_rel_late.max(rel);
                }
            }
            worst_z = worst_z.max(set_worst);
            parts.push(format!(
                "(ε={}, g={}, λ={}): max {:.2}σ",
                spec.epsilon, spec.g, spec.lambda, set_worst
            ));
        }
        let passed = worst_z <= SIGMA_BAND && worst_rel_late <= 0.05;
        let detail = format!(
            "{}; late-time worst rel dev {:.2}%",
            parts.join("; "),
            100.0 * worst_rel_late
        );
        finish(id, desc, start, worst_z, 0.0, SIGMA_BAND, passed, detail)
    }

    /// Criterion 6 with the production curve.
    pub fn mean_growth() -> CheckResult {
        mean_growth_with(mean_n_analytic)
    }

    /// Criterion 7: the no-collapse corners reproduce their closed forms to
    /// 1e-8: the oscillation (2g/ε)² sin²(εt/2) and the translation (gt)².
    pub fn no_collapse_limits() -> CheckResult {
        let start = Instant::now();
        let id = "no-collapse-limits";
        let desc = "λ = 0 reduces to the coherent closed forms";
        let run = || -> Result<f64> {
            let mut worst = 0.0f64;
            let p = ModelParams::new(1.0, 0.2, 0.0, 8, 16)?;
            let opts = SimOptions::new(400, 0.05, Scheme::Physical, 730).with_stride(20);
            let rec = cosmo::simulate_trajectory(&p, &opts)?;
            for j in 0..rec.len() {
                let t = rec.times[j];
                let expect = 0.4f64.powi(2) * (0.5 * t).sin().powi(2);
                worst = worst.max((rec.mean_n[j] - expect).abs());
            }
            let p = ModelParams::new(0.0, 0.2, 0.0, 8, 28)?;
            let opts = SimOptions::new(200, 0.05, Scheme::Physical, 731).with_stride(20);
            let rec = cosmo::simulate_trajectory(&p, &opts)?;
            for j in 0..rec.len() {
                let gt = 0.2 * rec.times[j];
                worst = worst.max((rec.mean_n[j] - gt * gt).abs());
            }
            Ok(worst)
        };
        match run() {
            Ok(worst) => finish(
                id,
                desc,
                start,
                worst,
                0.0,
                1e-8,
                worst <= 1e-8,
                format!("max |meanN - closed form| = {worst:.2e}"),
            ),
            Err(e) => err_check(id, desc, start, e.to_string()),
        }
    }

    /// Criterion 8: the ensemble second moment approaches twice the squared
    /// mean: ⟨N²⟩-bar / (2⟨N⟩-bar²) ∈ [0.9, 1.1] at λt = 50.
    pub fn second_moment_ratio() -> CheckResult {
        let start = Instant::now();
        let id = "second-moment-ratio";
        let desc = "⟨N²⟩-bar / 2⟨N⟩-bar² at λt = 50";
        let stats = match growth_stats(0) {
            Ok(s) => s,
            Err(e) => return err_check(id, desc, start, e),
        };
        let j = stats.times.len() - 1;
        let ratio = stats.mean_n2_bar[j] / (2.0 * stats.mean_n_bar[j] * stats.mean_n_bar[j]);
        let passed = (0.9..=1.1).contains(&ratio);
        finish(
            id,
            desc,
            start,
            ratio,
            1.0,
            0.1,
            passed,
            format!("ratio = {ratio:.4} at t = {}", stats.times[j]),
        )
    }

    /// Criterion 9: the relative spread decays (≤ half its value from
    /// λt = 12.5 to λt = 50) and the direct ratio term agrees with the
    /// Gaussian-approximation oracle σ² + ⟨N⟩-bar² within 15%.
    pub fn spread_scaling() -> CheckResult {
        let start = Instant::now();
        let id = "spread-scaling";
        let desc = "σ̄²/⟨N⟩-bar² decays; ratio term matches the oracle";
        let spec = &GROWTH_SETS[0];
        let stats = match growth_stats(0) {
            Ok(s) => s,
            Err(e) => return err_check(id, desc, start, e),
        };
        let a = CosmoAnalytic::new(spec.epsilon, spec.g, spec.lambda);
        let find = |t: f64| stats.times.iter().position(|&x| (x - t).abs() < 1e-9);
        let (Some(j_early), Some(j_late)) = (find(6.25), find(25.0)) else {
            return err_check(id, desc, start, "pinned times missing from grid".into());
        };
        let rel = |j: usize| stats.sigma2_bar[j] / (stats.mean_n_bar[j] * stats.mean_n_bar[j]);
        let decay = rel(j_late) / rel(j_early);
        let sigma2_of_mean =
            stats.mean_n2_bar[j_late] - stats.mean_n_bar[j_late] * stats.mean_n_bar[j_late];
        let oracle = match cosmo::appendix_a_oracle(&a, 25.0, sigma2_of_mean) {
            Ok(v) => v,
            Err(e) => return err_check(id, desc, start, e.to_string()),
        };
        let oracle_rel = (stats.ratio_term[j_late] - oracle).abs() / stats.ratio_term[j_late];
        let passed = decay <= 0.5 && oracle_rel <= 0.15;
        let detail = format!(
            "σ̄²/mean²: {:.4} (λt=12.5) → {:.4} (λt=50), decay ×{decay:.3}; ratio term {:.3} vs oracle {:.3} ({:.1}% off)",
            rel(j_early),
            rel(j_late),
            stats.ratio_term[j_late],
            oracle,
            100.0 * oracle_rel
        );
        finish(id, desc, start, oracle_rel, 0.0, 0.15, passed, detail)
    }

    /// Criterion 10: the moment inequality chain holds at every recorded
    /// time in every growth ensemble.
    pub fn inequality_chain() -> CheckResult {
        let start = Instant::now();
        let id = "inequality-chain";
        let desc = "⟨N²⟩-bar ≥ ratio term ≥ ⟨N⟩-bar² everywhere";
        let mut violations = 0usize;
        for i in 0..3 {
            match growth_stats(i) {
                Ok(s) => {
                    if !s.inequality_chain_ok() {
                        violations += 1;
                    }
                }
                Err(e) => return err_check(id, desc, start, e),
            }
        }
        finish(
            id,
            desc,
            start,
            violations as f64,
            0.0,
            0.0,
            violations == 0,
            format!("{violations} ensemble(s) with violations across 3 parameter sets"),
        )
    }

    /// Criterion 11: the clock sector factorizes from space, follows its
    /// primed growth curve, and the dimensionful uncertainty estimates land
    /// on the order-of-magnitude anchors.
    pub fn clock_sector() -> CheckResult {
        let start = Instant::now();
        let id = "clock-sector";
        let desc = "clock factorizes, tracks the primed curve, anchors hold";
        let m = 2000usize;
        let (steps, dt, stride) = (5000usize, 0.005, 250usize);
        let run = || -> Result<(bool, String)> {
            let space_p = ModelParams::new(1.0, 0.5, 2.0, 8, 96)?;
            let clock_p = ModelParams::new(1.0, 0.5, 2.0, 8, 96)?;
            let template = SimOptions::new(steps, dt, Scheme::Physical, 720).with_stride(stride);
            let space_run =
                run_ensemble(&space_p, &template.clone().with_label(StreamLabel::Space), m)?;
            let clock_run =
                run_ensemble(&clock_p, &template.clone().with_label(StreamLabel::Clock), m)?;
            let records: Vec<clock::JointRecord> = space_run
                .records
                .into_iter()
                .zip(clock_run.records)
                .map(|(space, clock)| clock::JointRecord { space, clock })
                .collect();

            let (corr_n, se) = clock::factorization_correlation(&records, |r, j| r.mean_n[j]);
            let (corr_n2, _) = clock::factorization_correlation(&records, |r, j| r.mean_n2[j]);
            let corr_worst = corr_n.abs().max(corr_n2.abs());

            let clock_recs: Vec<TrajectoryRecord> =
                records.iter().map(|r| r.clock.clone()).collect();
            let cstats = cosmo::ensemble_spread(&clock_recs, Scheme::Physical)?;
            let a = CosmoAnalytic::new(1.0, 0.5, 2.0);
            // Fit both the measured and the analytic curve over λ't ≥ 20 and
            // compare slopes.
            let mut ts = Vec::new();
            let mut measured = Vec::new();
            let mut expected = Vec::new();
            for j in 0..cstats.times.len() {
                if 2.0 * cstats.times[j] >= 20.0 {
                    ts.push(cstats.times[j]);
                    measured.push(cstats.mean_n_bar[j]);
                    expected.push(mean_n_analytic(&a, cstats.times[j])?);
                }
            }
            let fit_measured = stats::linear_fit(&ts, &measured)?;
            let fit_expected = stats::linear_fit(&ts, &expected)?;
            let slope_dev = (fit_measured.slope - fit_expected.slope).abs();
            let slope_band = SIGMA_BAND * fit_measured.slope_stderr;

            let dt_estimate = clock::delta_t_estimate(1.0, TEN_BILLION_YEARS_S);
            let dr_estimate = cosmo::delta_r_estimate(1.0, TEN_BILLION_LIGHT_YEARS_M);
            let dt_ok = (0.5e-13..=2.0e-13).contains(&dt_estimate);
            let dr_ok = (2.0e-5..=8.0e-5).contains(&dr_estimate);

            let fit = clock::clock_calibration(&cstats, 2.0)?;
            let chain_ok = cstats.inequality_chain_ok();
            let passed = corr_worst < SIGMA_BAND * se
                && slope_dev <= slope_band
                && dt_ok
                && dr_ok
                && chain_ok;
            let detail = format!(
                "corr {corr_n:+.4}/{corr_n2:+.4} (3σ band ±{:.4}); slope {:.4} vs {:.4} (band {:.4}); ΔT' = {dt_estimate:.3e} s, ΔR = {dr_estimate:.3e} m; C' = {:.3} (residual {:.2})",
                SIGMA_BAND * se,
                fit_measured.slope,
                fit_expected.slope,
                slope_band,
                fit.c,
                fit.rel_residual
            );
            Ok((passed, detail))
        };
        match run() {
            Ok((passed, detail)) => finish(
                id,
                desc,
                start,
                if passed { 1.0 } else { 0.0 },
                1.0,
                0.0,
                passed,
                detail,
            ),
            Err(e) => err_check(id, desc, start, e.to_string()),
        }
    }

    /// Clock invariant: the ensemble prime-instant mean oscillates at the
    /// primed frequency (spectral peak within one bin of ε').
    pub fn clock_oscillation() -> CheckResult {
        let start = Instant::now();
        let id = "clock-oscillation";
        let desc = "clock mean oscillates at frequency ε'";
        let (eps_p, g_p, lambda_p) = (1.0, 0.4, 0.1);
        let m = 2000usize;
        let run = || -> Result<(f64, f64)> {
            let p = ModelParams::new(eps_p, g_p, lambda_p, 8, 24)?;
            let template = SimOptions::new(1000, 0.05, Scheme::Physical, 721)
                .with_stride(10)
                .with_label(StreamLabel::Clock);
            let run = run_ensemble(&p, &template, m)?;
            let stats_m = cosmo::ensemble_spread(&run.records, Scheme::Physical)?;
            let peak = stats::dominant_frequency(&stats_m.times[1..], &stats_m.mean_n_bar[1..]);
            let bin = 2.0 * std::f64::consts::PI
                / (stats_m.times[stats_m.times.len() - 1] - stats_m.times[1]);
            Ok((peak, bin))
        };
        match run() {
            Ok((peak, bin)) => finish(
                id,
                desc,
                start,
                peak,
                1.0,
                bin,
                (peak - 1.0).abs() <= bin,
                format!("spectral peak at ω = {peak:.4} (bin width {bin:.4})"),
            ),
            Err(e) => err_check(id, desc, start, e.to_string()),
        }
    }

    /// Criterion 12: split-step order of convergence on bridge-refined
    /// records, byte-identical reruns, worker-count independence, and
    /// compensated-merge associativity.
    pub fn convergence_determinism() -> CheckResult {
        let start = Instant::now();
        let id = "convergence-determinism";
        let desc = "O(dt) split-step convergence and deterministic merges";
        let run = || -> Result<(f64, String)> {
            // (a) Order of convergence on a fixed Brownian record.
            let p = ModelParams::new(1.0, 0.5, 2.0, 8, 48)?;
            let lambda = 2.0;
            let n_paths = 64usize;
            let rows: Vec<Result<(f64, f64)>> = (0..n_paths)
                .into_par_iter()
                .map(|i| {
                    let opts = SimOptions::new(125, 0.08, Scheme::Physical, 740)
                        .with_stride(125)
                        .with_trajectory(i as u64);
                    let (rec0, path0) = cosmo::simulate_trajectory_capturing(&p, &opts)?;
                    let r0 = *rec0.mean_n.last().unwrap();
                    let path1 = path0.refine(lambda, 741 + i as u64);
                    let opts1 = SimOptions::new(250, 0.04, Scheme::Physical, 0).with_stride(250);
                    let rec1 = cosmo::replay_trajectory(&p, &opts1, &path1)?;
                    let r1 = *rec1.mean_n.last().unwrap();
                    let path2 = path1.refine(lambda, 742 + i as u64);
                    let opts2 = SimOptions::new(500, 0.02, Scheme::Physical, 0).with_stride(500);
                    let rec2 = cosmo::replay_trajectory(&p, &opts2, &path2)?;
                    let r2 = *rec2.mean_n.last().unwrap();
                    Ok(((r0 - r1).abs(), (r1 - r2).abs()))
                })
                .collect();
            let mut d1 = 0.0;
            let mut d2 = 0.0;
            for row in rows {
                let (a, b) = row?;
                d1 += a;
                d2 += b;
            }
            let ratio = d1 / d2;
            let order_ok = (1.5..=2.5).contains(&ratio);

            // (b) Determinism: byte-identical summary on rerun; identical
            // numbers regardless of worker count.
            let dir_a = scratch_dir()?;
            let dir_b = scratch_dir()?;
            let mut cfg = ExperimentConfig::default();
            cfg.model.n_max = Some(24);
            cfg.run.n_trajectories = 100;
            cfg.run.steps = 100;
            cfg.run.dt = 0.02;
            cfg.run.seed = 4321;
            cfg.run.record_stride = 20;
            cfg.run.out_dir = dir_a.clone();
            let a = run::run_experiment(&cfg)?;
            cfg.run.out_dir = dir_b.clone();
            let b = run::run_experiment(&cfg)?;
            let bytes_equal = std::fs::read(&a.summary_path)? == std::fs::read(&b.summary_path)?;
            let _ = std::fs::remove_dir_all(&dir_a);
            let _ = std::fs::remove_dir_all(&dir_b);

            let p_small = ModelParams::new(1.0, 0.5, 2.0, 8, 24)?;
            let template = SimOptions::new(50, 0.02, Scheme::Physical, 7).with_stride(10);
            let pool1 = rayon::ThreadPoolBuilder::new()
                .num_threads(1)
                .build()
                .expect("pool");
            let run1 = pool1.install(|| run_ensemble(&p_small, &template, 32))?;
            let pool2 = rayon::ThreadPoolBuilder::new()
                .num_threads(2)
                .build()
                .expect("pool");
            let run2 = pool2.install(|| run_ensemble(&p_small, &template, 32))?;
            let workers_equal = run1
                .records
                .iter()
                .zip(&run2.records)
                .all(|(x, y)| x.mean_n == y.mean_n && x.log_norm2 == y.log_norm2);

            // (c) Compensated-merge associativity on awkwardly scaled data.
            let mut vals = Vec::new();
            let mut state = 0x9e37_79b9_7f4a_7c15u64;
            for _ in 0..5000 {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
                vals.push(((state >> 11) as f64 / (1u64 << 53) as f64) * 1e6 - 5e5);
            }
            let weights: Vec<f64> = vals.iter().map(|v| v.abs() / 1e6 + 1e-3).collect();
            let direct = stats::weighted_mean(&vals, &weights);
            let mut merge_ok = true;
            for chunk in [1usize, 13, 640] {
                let mut total = stats::PartialMoments::default();
                for block in vals.chunks(chunk).zip(weights.chunks(chunk)) {
                    let mut part = stats::PartialMoments::default();
                    for (v, w) in block.0.iter().zip(block.1) {
                        part.push(*v, *w);
                    }
                    total.merge(&part);
                }
                merge_ok &= (total.mean() - direct).abs() <= 1e-12 * direct.abs().max(1.0);
            }

            let detail = format!(
                "convergence ratio {ratio:.3} (target 2); byte-identical rerun: {bytes_equal}; worker-count independent: {workers_equal}; merge associativity ≤1e-12: {merge_ok}"
            );
            if order_ok && bytes_equal && workers_equal && merge_ok {
                Ok((ratio, detail))
            } else {
                Ok((if order_ok { -1.0 } else { ratio }, detail))
            }
        };
        match run() {
            Ok((ratio, detail)) => finish(
                id,
                desc,
                start,
                ratio,
                2.0,
                0.5,
                (1.5..=2.5).contains(&ratio),
                detail,
            ),
            Err(e) => err_check(id, desc, start, e.to_string()),
        }
    }

    fn scratch_dir() -> Result<std::path::PathBuf> {
        let base = std::env::temp_dir().join(format!(
            "cosmogen-validate-{}-{:x}",
            std::process::id(),
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .unwrap()
                .as_nanos()
        ));
        std::fs::create_dir_all(&base)?;
        Ok(base)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tampered_growth_constant_is_rejected() {
        // Mutation fixture: a wrong prefactor in the growth curve must trip
        // the comparison logic. Runs on a small dedicated ensemble so the
        // unit test stays fast; the suite itself applies the same z-score
        // logic to the pinned runs.
        let tampered =
            |a: &CosmoAnalytic, t: f64| -> Result<f64> { Ok(mean_n_analytic(a, t)? * 1.3) };
        let p = ModelParams::new(1.0, 0.5, 2.0, 8, 48).unwrap();
        let template = SimOptions::new(500, 0.01, Scheme::Physical, 55).with_stride(250);
        let run = run_ensemble(&p, &template, 800).unwrap();
        let stats_small = cosmo::ensemble_spread(&run.records, Scheme::Physical).unwrap();
        let a = CosmoAnalytic::new(1.0, 0.5, 2.0);
        let j = stats_small.times.len() - 1;
        let t = stats_small.times[j];
        let good = mean_n_analytic(&a, t).unwrap();
        let bad = tampered(&a, t).unwrap();
        let z_good = (stats_small.mean_n_bar[j] - good).abs() / stats_small.mean_n_stderr[j];
        let z_bad = (stats_small.mean_n_bar[j] - bad).abs() / stats_small.mean_n_stderr[j];
        assert!(z_good <= 4.0, "true curve rejected: {z_good:.1}σ");
        assert!(z_bad > 4.0, "tampered curve accepted: {z_bad:.1}σ");
    }

    #[test]
    fn suite_dispatch_is_isolated() {
        // The h0 suite has a fixed id set and references no growth
        // ensembles; `all` is the concatenation of the three suites.
        assert_eq!(
            suite_ids(Suite::H0),
            vec![
                "uniform-instants",
                "born-rule",
                "b-distribution",
                "sampler-equivalence",
                "sampler-equiv-lt1",
                "sampler-equiv-physical",
                "hopping"
            ]
        );
        let mut concat = suite_ids(Suite::H0);
        concat.extend(suite_ids(Suite::Cosmo));
        concat.extend(suite_ids(Suite::Clock));
        assert_eq!(suite_ids(Suite::All), concat);
    }

    #[test]
    fn uniform_instants_is_fast_and_green() {
        let r = checks::uniform_instants();
        assert!(r.passed, "{}", r.line());
        assert!(r.runtime_s < 1.0);
    }
}
