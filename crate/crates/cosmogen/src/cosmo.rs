//! Monte Carlo trajectory simulation of the collapse-driven growth model
//! and its analytic companions: the closed-form mean growth curve, the
//! second-moment asymptotics, the no-collapse coherent oracle, the ensemble
//! spread statistics and the dimensionful uncertainty estimate.

use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::constants::{LEAKAGE_THRESHOLD, PLANCK_LENGTH_M};
use crate::exact::H0InitialState;
use crate::fock::{collapse_exponent, FockVector, ModelParams, Propagator, RESCALE_MAX, RESCALE_MIN};
use crate::noise::{trajectory_rng, NoisePath, Scheme, StreamLabel};
use crate::stats::{self, BATCH_COUNT, MIN_ESS, SIGMA_BAND};
use crate::{Error, Result};

/// Everything recorded along one trajectory, on the record grid.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    /// Log statistical weight of the path: the squared state norm relative
    /// to the Gaussian reference density of the noise (Radon–Nikodym
    /// factor). Uniformly ≈ 0 under the physical scheme.
    pub log_norm2: Vec<f64>,
    /// ⟨N⟩ of the normalized state.
    pub mean_n: Vec<f64>,
    /// ⟨N²⟩ of the normalized state.
    pub mean_n2: Vec<f64>,
    /// Per-record spread ⟨N²⟩ - ⟨N⟩².
    pub sigma2: Vec<f64>,
    /// Brownian record B(t) of the realized noise.
    pub brownian: Vec<f64>,
    /// Largest top-slot norm fraction seen along the trajectory.
    pub leakage: f64,
    /// Stream id of the generator that produced the noise.
    pub seed: u64,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// CSV dump, columns `t,log_norm2,meanN,meanN2,sigma2`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,log_norm2,meanN,meanN2,sigma2")?;
        for j in 0..self.len() {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.times[j], self.log_norm2[j], self.mean_n[j], self.mean_n2[j], self.sigma2[j]
            )?;
        }
        Ok(())
    }
}

/// Options of a single trajectory run.
#[derive(Debug, Clone)]
pub struct SimOptions {
    pub steps: usize,
    pub dt: f64,
    pub scheme: Scheme,
    /// Record every this many steps (must divide steps).
    pub record_stride: usize,
    pub master_seed: u64,
    pub trajectory: u64,
    pub label: StreamLabel,
    /// Initial state; vacuum when absent.
    pub initial: Option<H0InitialState>,
    pub leakage_threshold: f64,
    /// Fail the trajectory when the leakage threshold is exceeded.
    pub enforce_leakage: bool,
}

impl SimOptions {
    pub fn new(steps: usize, dt: f64, scheme: Scheme, master_seed: u64) -> Self {
        SimOptions {
            steps,
            dt,
            scheme,
            record_stride: 1,
            master_seed,
            trajectory: 0,
            label: StreamLabel::Space,
            initial: None,
            leakage_threshold: LEAKAGE_THRESHOLD,
            enforce_leakage: true,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride;
        self
    }

    pub fn with_trajectory(mut self, trajectory: u64) -> Self {
        self.trajectory = trajectory;
        self
    }

    pub fn with_initial(mut self, init: H0InitialState) -> Self {
        self.initial = Some(init);
        self
    }

    pub fn with_label(mut self, label: StreamLabel) -> Self {
        self.label = label;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidParams("steps must be >= 1".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::InvalidParams("dt must be > 0".into()));
        }
        if self.record_stride == 0 || self.steps % self.record_stride != 0 {
            return Err(Error::InvalidParams(format!(
                "record stride {} must divide steps {}",
                self.record_stride, self.steps
            )));
        }
        Ok(())
    }
}

enum NoiseDriver<'a> {
    Raw,
    Physical,
    Replay(&'a [f64]),
}

/// One split-step trajectory from the configured initial state: per instant
/// the exact unitary factor acts first, then the diagonal collapse factor
/// with the drawn (or replayed) noise value. λ = 0 skips collapse and
/// reduces to pure Schrödinger evolution.
pub fn simulate_trajectory(p: &ModelParams, opts: &SimOptions) -> Result<TrajectoryRecord> {
    opts.validate()?;
    p.validate()?;
    let driver = match opts.scheme {
        Scheme::Raw => NoiseDriver::Raw,
        Scheme::Physical => NoiseDriver::Physical,
    };
    run_split_step(p, opts, driver)
}

/// Like [`simulate_trajectory`], additionally returning the realized noise
/// record so the run can be replayed on a bridge-refined grid.
pub fn simulate_trajectory_capturing(
    p: &ModelParams,
    opts: &SimOptions,
) -> Result<(TrajectoryRecord, NoisePath)> {
    opts.validate()?;
    p.validate()?;
    let driver = match opts.scheme {
        Scheme::Raw => NoiseDriver::Raw,
        Scheme::Physical => NoiseDriver::Physical,
    };
    let mut captured = Vec::with_capacity(opts.steps);
    let rec = run_split_step_inner(p, opts, driver, Some(&mut captured))?;
    let path = NoisePath {
        dt: opts.dt,
        values: captured,
        seed: rec.seed,
        scheme: opts.scheme,
    };
    Ok((rec, path))
}

/// Re-run the split-step evolution under a fixed noise record (any scheme);
/// used for convergence studies against bridge-refined records.
pub fn replay_trajectory(
    p: &ModelParams,
    opts: &SimOptions,
    path: &NoisePath,
) -> Result<TrajectoryRecord> {
    opts.validate()?;
    p.validate()?;
    if path.steps() < opts.steps {
        return Err(Error::Domain(format!(
            "replay path has {} steps, need {}",
            path.steps(),
            opts.steps
        )));
    }
    if (path.dt - opts.dt).abs() > 1e-15 * opts.dt {
        return Err(Error::Domain("replay path dt mismatch".into()));
    }
    run_split_step(p, opts, NoiseDriver::Replay(&path.values))
}

fn run_split_step(
    p: &ModelParams,
    opts: &SimOptions,
    driver: NoiseDriver<'_>,
) -> Result<TrajectoryRecord> {
    run_split_step_inner(p, opts, driver, None)
}

fn run_split_step_inner(
    p: &ModelParams,
    opts: &SimOptions,
    driver: NoiseDriver<'_>,
    mut capture: Option<&mut Vec<f64>>,
) -> Result<TrajectoryRecord> {
    let dim = p.dim();
    let init = match &opts.initial {
        Some(h0) => h0.to_fock(p.n_max)?,
        None => FockVector::vacuum(p.n_max),
    };
    let prop = if p.epsilon != 0.0 || p.g != 0.0 {
        Some(Propagator::cached(p, opts.dt)?)
    } else {
        None
    };

    let mut amps: Vec<Complex64> = init.amplitudes().to_vec();
    let mut scratch = vec![Complex64::ZERO; dim];
    let mut log_scale = init.log_scale();
    let mut hi = top_index(&amps);

    let stream = (opts.trajectory << 1) | opts.label as u64;
    let mut rng = trajectory_rng(opts.master_seed, opts.trajectory, opts.label);
    let sd = if p.lambda > 0.0 {
        (p.lambda / opts.dt).sqrt()
    } else {
        0.0
    };

    let n_records = opts.steps / opts.record_stride + 1;
    let mut rec = TrajectoryRecord {
        times: Vec::with_capacity(n_records),
        log_norm2: Vec::with_capacity(n_records),
        mean_n: Vec::with_capacity(n_records),
        mean_n2: Vec::with_capacity(n_records),
        sigma2: Vec::with_capacity(n_records),
        brownian: Vec::with_capacity(n_records),
        leakage: 0.0,
        seed: stream,
    };

    let log_norm0 = init.log_norm2();
    let mut b = 0.0f64;
    let mut gauss_corr = 0.0f64;
    let mut max_leak = 0.0f64;
    record_point(&mut rec, 0.0, &amps, hi, log_scale, log_norm0, gauss_corr, b);

    for step in 1..=opts.steps {
        if let Some(prop) = &prop {
            hi = prop.apply_windowed(&amps, hi, &mut scratch);
            std::mem::swap(&mut amps, &mut scratch);
        }

        let (norm2, mean_n) = window_moments1(&amps, hi);
        if !(norm2 > 0.0) || !norm2.is_finite() {
            return Err(Error::DegenerateNorm);
        }

        if p.lambda > 0.0 {
            let w = match &driver {
                NoiseDriver::Raw => sd * rng.sample::<f64, _>(StandardNormal),
                NoiseDriver::Physical => {
                    2.0 * p.lambda * mean_n + sd * rng.sample::<f64, _>(StandardNormal)
                }
                NoiseDriver::Replay(values) => values[step - 1],
            };
            if let Some(buf) = capture.as_deref_mut() {
                buf.push(w);
            }
            // Diagonal collapse factor with the max moved into log_scale.
            let n_star = (w / (2.0 * p.lambda)).clamp(0.0, hi as f64);
            let lo_n = n_star.floor() as usize;
            let hi_n = (lo_n + 1).min(hi);
            let e_max = collapse_exponent(w, p.lambda, opts.dt, lo_n)
                .max(collapse_exponent(w, p.lambda, opts.dt, hi_n));
            for (n, a) in amps.iter_mut().enumerate().take(hi + 1) {
                if *a == Complex64::ZERO {
                    continue;
                }
                *a *= (collapse_exponent(w, p.lambda, opts.dt, n) - e_max).exp();
            }
            log_scale += e_max;
            b += opts.dt * w;
            gauss_corr += opts.dt * w * w / (2.0 * p.lambda);
        }

        // Rescale into the stored-amplitude window; slots above hi are zero.
        let max_amp2 = amps[..=hi].iter().map(|a| a.norm_sqr()).fold(0.0, f64::max);
        let max_amp = max_amp2.sqrt();
        if max_amp > 0.0 && !(RESCALE_MIN..=RESCALE_MAX).contains(&max_amp) {
            let inv = max_amp.recip();
            for a in &mut amps[..=hi] {
                *a *= inv;
            }
            log_scale += max_amp.ln();
        }

        if hi == p.n_max {
            let leak = amps[p.n_max].norm_sqr()
                / amps[..=hi].iter().map(|a| a.norm_sqr()).sum::<f64>();
            max_leak = max_leak.max(leak);
        }

        if step % opts.record_stride == 0 {
            let t = step as f64 * opts.dt;
            record_point(&mut rec, t, &amps, hi, log_scale, log_norm0, gauss_corr, b);
        }
    }

    rec.leakage = max_leak;
    if opts.enforce_leakage && max_leak > opts.leakage_threshold {
        return Err(Error::Leakage {
            leakage: max_leak,
            threshold: opts.leakage_threshold,
            n_max: p.n_max,
        });
    }
    Ok(rec)
}

fn top_index(amps: &[Complex64]) -> usize {
    amps.iter()
        .rposition(|a| *a != Complex64::ZERO)
        .unwrap_or(0)
}

fn window_moments1(amps: &[Complex64], hi: usize) -> (f64, f64) {
    let mut norm2 = 0.0;
    let mut num = 0.0;
    for (n, a) in amps.iter().enumerate().take(hi + 1) {
        let p = a.norm_sqr();
        norm2 += p;
        num += n as f64 * p;
    }
    (norm2, num / norm2)
}

#[allow(clippy::too_many_arguments)]
fn record_point(
    rec: &mut TrajectoryRecord,
    t: f64,
    amps: &[Complex64],
    hi: usize,
    log_scale: f64,
    log_norm0: f64,
    gauss_corr: f64,
    b: f64,
) {
    let mut norm2 = 0.0;
    let mut m1 = 0.0;
    let mut m2 = 0.0;
    for (n, a) in amps.iter().enumerate().take(hi + 1) {
        let p = a.norm_sqr();
        let nf = n as f64;
        norm2 += p;
        m1 += nf * p;
        m2 += nf * nf * p;
    }
    let mean_n = m1 / norm2;
    let mean_n2 = m2 / norm2;
    let log_norm2 = norm2.ln() + 2.0 * log_scale - log_norm0 + gauss_corr;
    rec.times.push(t);
    rec.log_norm2.push(log_norm2);
    rec.mean_n.push(mean_n);
    rec.mean_n2.push(mean_n2);
    rec.sigma2.push(mean_n2 - mean_n * mean_n);
    rec.brownian.push(b);
}

/// Constants of the closed-form growth analytics; tan φ = 2ε/λ.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CosmoAnalytic {
    pub epsilon: f64,
    pub g: f64,
    pub lambda: f64,
    pub phi: f64,
}

impl CosmoAnalytic {
    pub fn new(epsilon: f64, g: f64, lambda: f64) -> Self {
        CosmoAnalytic {
            epsilon,
            g,
            lambda,
            phi: f64::atan2(2.0 * epsilon, lambda),
        }
    }

    pub fn from_params(p: &ModelParams) -> Self {
        Self::new(p.epsilon, p.g, p.lambda)
    }

    /// Late-time linear growth rate g²λ/(ε² + (λ/2)²); the watched-pot
    /// suppression makes it vanish as λ → ∞.
    pub fn asymptotic_slope(&self) -> f64 {
        self.g * self.g * self.lambda
            / (self.epsilon * self.epsilon + 0.25 * self.lambda * self.lambda)
    }
}

/// Closed-form ensemble mean size
/// (g²/(ε²+(λ/2)²))[λt + 2e^{-λt/2}cos(εt+2φ) - 2cos 2φ], with the λ = 0
/// corners dispatched to their oscillation limits.
pub fn mean_n_analytic(a: &CosmoAnalytic, t: f64) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::Domain("negative time".into()));
    }
    if a.lambda == 0.0 {
        if a.epsilon == 0.0 {
            let gt = a.g * t;
            return Ok(gt * gt);
        }
        let s = (0.5 * a.epsilon * t).sin();
        let amp = 2.0 * a.g / a.epsilon;
        return Ok(amp * amp * s * s);
    }
    let pref = a.g * a.g / (a.epsilon * a.epsilon + 0.25 * a.lambda * a.lambda);
    let bracket = a.lambda * t
        + 2.0 * (-0.5 * a.lambda * t).exp() * (a.epsilon * t + 2.0 * a.phi).cos()
        - 2.0 * (2.0 * a.phi).cos();
    let value = pref * bracket;
    if value < -1e-12 {
        // The bracket is non-negative for every λt ≥ 0; anything more
        // negative than rounding means the formula was transcribed wrong.
        return Err(Error::Domain(format!(
            "mean size formula went negative ({value:.3e}) — transcription bug"
        )));
    }
    Ok(value.max(0.0))
}

/// Leading-order second moment 2 [g²λt/(ε²+(λ/2)²)]², valid for λt ≫ 1.
pub fn mean_n2_asymptotic(a: &CosmoAnalytic, t: f64) -> f64 {
    let m = a.asymptotic_slope() * t;
    2.0 * m * m
}

/// Coherent-state trajectory of the no-collapse model (the noise-free limit
/// of the displaced-oscillator evolution): α(t) and the accumulated phase
/// γ(t); |α(t)|² is the normalized mean size.
#[derive(Debug, Clone)]
pub struct CoherentOracle {
    pub times: Vec<f64>,
    pub alpha: Vec<Complex64>,
    pub gamma: Vec<Complex64>,
}

pub fn coherent_oracle(epsilon: f64, g: f64, times: &[f64]) -> CoherentOracle {
    let mut alpha = Vec::with_capacity(times.len());
    let mut gamma = Vec::with_capacity(times.len());
    for &t in times {
        if epsilon == 0.0 {
            alpha.push(Complex64::new(0.0, -g * t));
            gamma.push(Complex64::new(-0.5 * g * g * t * t, 0.0));
        } else {
            let rot = Complex64::from_polar(1.0, -epsilon * t);
            let one_minus = Complex64::ONE - rot;
            alpha.push(-(g / epsilon) * one_minus);
            gamma.push(
                Complex64::new(0.0, g * g / epsilon * t)
                    - (g * g / (epsilon * epsilon)) * one_minus,
            );
        }
    }
    CoherentOracle {
        times: times.to_vec(),
        alpha,
        gamma,
    }
}

/// Weighted ensemble statistics per recorded time: first and second
/// moments, the ratio term, their difference (the ensemble spread) and
/// batch-means standard errors.
#[derive(Debug, Clone, Serialize)]
pub struct EnsembleStats {
    pub scheme: Scheme,
    pub n_traj: usize,
    pub times: Vec<f64>,
    pub mean_n_bar: Vec<f64>,
    pub mean_n_stderr: Vec<f64>,
    pub mean_n2_bar: Vec<f64>,
    pub mean_n2_stderr: Vec<f64>,
    /// overline[⟨N⟩²/⟨1⟩]: the weighted average of the squared normalized
    /// first moment.
    pub ratio_term: Vec<f64>,
    pub ratio_stderr: Vec<f64>,
    pub sigma2_bar: Vec<f64>,
    pub sigma2_stderr: Vec<f64>,
    pub ess: Vec<f64>,
    pub warnings: Vec<String>,
}

impl EnsembleStats {
    /// Second moment ≥ ratio term ≥ squared first moment at every recorded
    /// time, within the statistical bands.
    pub fn inequality_chain_ok(&self) -> bool {
        !self
            .warnings
            .iter()
            .any(|w| w.starts_with("moment inequality"))
    }
}

/// Aggregate per-trajectory records into weighted ensemble statistics.
/// Raw-scheme records are weighted by their squared-norm importance factor
/// exp(log_norm2); physical records carry uniform weight, and the ratio
/// term reduces to the plain average of ⟨N⟩² since the weight is already
/// the measure.
pub fn ensemble_spread(records: &[TrajectoryRecord], scheme: Scheme) -> Result<EnsembleStats> {
    if records.len() < 100 {
        return Err(Error::Domain(format!(
            "ensemble statistics need at least 100 records, got {}",
            records.len()
        )));
    }
    aggregate_records(records, scheme)
}

/// Same aggregation without the 100-record floor; the harness accepts any
/// ensemble size (a single trajectory's statistics are its own record) and
/// lets the standard errors degrade gracefully.
pub fn aggregate_records(
    records: &[TrajectoryRecord],
    scheme: Scheme,
) -> Result<EnsembleStats> {
    if records.is_empty() {
        return Err(Error::Domain("empty ensemble".into()));
    }
    let times = records[0].times.clone();
    for r in records {
        if r.times != times {
            return Err(Error::Domain("inconsistent time grids".into()));
        }
    }
    let n_traj = records.len();
    let n_times = times.len();
    let mut out = EnsembleStats {
        scheme,
        n_traj,
        times,
        mean_n_bar: Vec::with_capacity(n_times),
        mean_n_stderr: Vec::with_capacity(n_times),
        mean_n2_bar: Vec::with_capacity(n_times),
        mean_n2_stderr: Vec::with_capacity(n_times),
        ratio_term: Vec::with_capacity(n_times),
        ratio_stderr: Vec::with_capacity(n_times),
        sigma2_bar: Vec::with_capacity(n_times),
        sigma2_stderr: Vec::with_capacity(n_times),
        ess: Vec::with_capacity(n_times),
        warnings: Vec::new(),
    };

    let mut weights = vec![1.0f64; n_traj];
    let mut mean_n = vec![0.0f64; n_traj];
    let mut mean_n2 = vec![0.0f64; n_traj];
    let mut mean_n_sq = vec![0.0f64; n_traj];

    for j in 0..n_times {
        match scheme {
            Scheme::Raw => {
                let max_log = records
                    .iter()
                    .map(|r| r.log_norm2[j])
                    .fold(f64::NEG_INFINITY, f64::max);
                for (i, r) in records.iter().enumerate() {
                    weights[i] = (r.log_norm2[j] - max_log).exp();
                }
            }
            Scheme::Physical => weights.fill(1.0),
        }
        for (i, r) in records.iter().enumerate() {
            mean_n[i] = r.mean_n[j];
            mean_n2[i] = r.mean_n2[j];
            mean_n_sq[i] = r.mean_n[j] * r.mean_n[j];
        }

        let est_n = stats::batch_weighted_mean(&mean_n, &weights, BATCH_COUNT);
        let est_n2 = stats::batch_weighted_mean(&mean_n2, &weights, BATCH_COUNT);
        let est_ratio = stats::batch_weighted_mean(&mean_n_sq, &weights, BATCH_COUNT);

        // The spread is a difference of correlated estimates, so its error
        // comes from batching the difference itself (conservative sum of the
        // component errors when there are too few records to batch).
        let sigma2 = est_n2.mean - est_ratio.mean;
        let sigma2_stderr = if n_traj < 2 * BATCH_COUNT {
            est_n2.stderr + est_ratio.stderr
        } else {
            let mut batch_vals = Vec::with_capacity(BATCH_COUNT);
            for bidx in 0..BATCH_COUNT {
                let lo = bidx * n_traj / BATCH_COUNT;
                let hi = (bidx + 1) * n_traj / BATCH_COUNT;
                let m2 = stats::weighted_mean(&mean_n2[lo..hi], &weights[lo..hi]);
                let mr = stats::weighted_mean(&mean_n_sq[lo..hi], &weights[lo..hi]);
                batch_vals.push(m2 - mr);
            }
            let bm = batch_vals.iter().sum::<f64>() / BATCH_COUNT as f64;
            let var = batch_vals.iter().map(|v| (v - bm) * (v - bm)).sum::<f64>()
                / (BATCH_COUNT as f64 - 1.0);
            (var / BATCH_COUNT as f64).sqrt()
        };

        let ess = stats::ess(&weights);
        if ess < MIN_ESS {
            out.warnings.push(format!(
                "ESS {:.1} below {} at t = {} (raw-scheme weight collapse)",
                ess, MIN_ESS, out.times[j]
            ));
        }

        // Moment inequality chain within the statistical bands (plus a
        // rounding allowance for the degenerate zero-stderr case).
        let slack = 1e-12 * est_n2.mean.abs().max(1.0);
        let band_a = SIGMA_BAND * (est_n2.stderr + est_ratio.stderr) + slack;
        if est_n2.mean + band_a < est_ratio.mean {
            out.warnings.push(format!(
                "moment inequality ⟨N²⟩-bar ≥ ratio term violated at t = {}",
                out.times[j]
            ));
        }
        let band_b =
            SIGMA_BAND * (est_ratio.stderr + 2.0 * est_n.mean.abs() * est_n.stderr) + slack;
        if est_ratio.mean + band_b < est_n.mean * est_n.mean {
            out.warnings.push(format!(
                "moment inequality ratio term ≥ (⟨N⟩-bar)² violated at t = {}",
                out.times[j]
            ));
        }

        out.mean_n_bar.push(est_n.mean);
        out.mean_n_stderr.push(est_n.stderr);
        out.mean_n2_bar.push(est_n2.mean);
        out.mean_n2_stderr.push(est_n2.stderr);
        out.ratio_term.push(est_ratio.mean);
        out.ratio_stderr.push(est_ratio.stderr);
        out.sigma2_bar.push(sigma2);
        out.sigma2_stderr.push(sigma2_stderr);
        out.ess.push(ess);
    }
    Ok(out)
}

/// The Gaussian-approximation prediction for the ratio term,
/// σ² + ⟨N⟩-bar², with σ² the variance of the ensemble mean and ⟨N⟩-bar
/// from the closed form. Equals ⟨N²⟩-bar when the approximation chain is
/// exact.
pub fn appendix_a_oracle(a: &CosmoAnalytic, t: f64, sigma2_of_ensemble_mean: f64) -> Result<f64> {
    let mean = mean_n_analytic(a, t)?;
    Ok(sigma2_of_ensemble_mean + mean * mean)
}

#[derive(Debug, Clone, Copy)]
pub struct FitC {
    pub c: f64,
    pub rel_residual: f64,
    pub poor_fit: bool,
}

/// Late-time spread coefficient: least-squares slope of σ̄² against ⟨N⟩-bar
/// over the window λt ≥ 20 (σ̄² = C ⟨N⟩-bar when both grow linearly).
pub fn fit_c(stats: &EnsembleStats, lambda: f64) -> Result<FitC> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for j in 0..stats.times.len() {
        if lambda * stats.times[j] >= 20.0 {
            xs.push(stats.mean_n_bar[j]);
            ys.push(stats.sigma2_bar[j]);
        }
    }
    if xs.len() < 5 {
        return Err(Error::Domain(format!(
            "late-time fit needs >= 5 points with λt >= 20, got {}",
            xs.len()
        )));
    }
    let (c, rel_residual) = stats::slope_through_origin(&xs, &ys)?;
    Ok(FitC {
        c,
        rel_residual,
        poor_fit: rel_residual > 0.2,
    })
}

/// Dimensionful size-uncertainty estimate ΔR = C^{1/6} √(R ℓ).
pub fn delta_r_estimate(c: f64, r_universe_m: f64) -> f64 {
    assert!(c >= 0.0 && r_universe_m > 0.0);
    c.powf(1.0 / 6.0) * (r_universe_m * PLANCK_LENGTH_M).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::TEN_BILLION_LIGHT_YEARS_M;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn no_collapse_oscillation_matches_oracle() {
        // λ = 0, ε = 1, g = 0.2: the mean size oscillates as
        // (2g/ε)² sin²(εt/2); the simulated trajectory and the coherent
        // oracle agree to 1e-8.
        let p = ModelParams::new(1.0, 0.2, 0.0, 8, 16).unwrap();
        let opts = SimOptions::new(200, 0.05, Scheme::Physical, 1).with_stride(10);
        let rec = simulate_trajectory(&p, &opts).unwrap();
        let oracle = coherent_oracle(1.0, 0.2, &rec.times);
        let a = CosmoAnalytic::new(1.0, 0.2, 0.0);
        for j in 0..rec.len() {
            let t = rec.times[j];
            let expect = 0.4f64.powi(2) * (0.5 * t).sin().powi(2);
            assert_abs_diff_eq!(rec.mean_n[j], expect, epsilon = 1e-8);
            assert_abs_diff_eq!(rec.mean_n[j], oracle.alpha[j].norm_sqr(), epsilon = 1e-8);
            assert_abs_diff_eq!(mean_n_analytic(&a, t).unwrap(), expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn no_collapse_translation_growth() {
        // λ = 0, ε = 0: pure momentum-translation growth (gt)².
        let p = ModelParams::new(0.0, 0.2, 0.0, 8, 24).unwrap();
        let opts = SimOptions::new(100, 0.05, Scheme::Physical, 2).with_stride(20);
        let rec = simulate_trajectory(&p, &opts).unwrap();
        for j in 0..rec.len() {
            let gt = 0.2 * rec.times[j];
            assert_abs_diff_eq!(rec.mean_n[j], gt * gt, epsilon = 1e-8);
        }
        // Norm conserved without collapse.
        for &l in &rec.log_norm2 {
            assert_abs_diff_eq!(l, 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn vacuum_is_stationary_without_drive() {
        // g = 0: the vacuum is a collapse fixed point; all moments stay 0.
        let p = ModelParams::new(1.0, 0.0, 1.0, 8, 4).unwrap();
        let opts = SimOptions::new(200, 0.5, Scheme::Physical, 3).with_stride(50);
        let rec = simulate_trajectory(&p, &opts).unwrap();
        for j in 0..rec.len() {
            assert_abs_diff_eq!(rec.mean_n[j], 0.0, epsilon = 1e-14);
            assert_abs_diff_eq!(rec.mean_n2[j], 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn analytic_mean_anchors() {
        let a = CosmoAnalytic::new(1.0, 0.5, 2.0);
        // Vanishes at t = 0 (the bracket cancels exactly).
        assert_abs_diff_eq!(mean_n_analytic(&a, 0.0).unwrap(), 0.0, epsilon = 1e-14);
        // Large-t slope approaches g²λ/(ε²+(λ/2)²).
        let slope =
            (mean_n_analytic(&a, 1000.0).unwrap() - mean_n_analytic(&a, 990.0).unwrap()) / 10.0;
        assert_relative_eq!(slope, a.asymptotic_slope(), max_relative = 1e-6);
        // The λ → 0 dispatch matches the λ ↓ 0 limit of the full formula.
        let small = CosmoAnalytic::new(1.0, 0.5, 1e-7);
        let zero = CosmoAnalytic::new(1.0, 0.5, 0.0);
        for &t in &[0.7f64, 3.0, 11.0] {
            assert_relative_eq!(
                mean_n_analytic(&small, t).unwrap(),
                mean_n_analytic(&zero, t).unwrap(),
                max_relative = 1e-5
            );
        }
    }

    #[test]
    fn second_moment_asymptotic_definition() {
        let a = CosmoAnalytic::new(1.0, 0.5, 2.0);
        let t = 25.0;
        let m = a.asymptotic_slope() * t;
        assert_relative_eq!(mean_n2_asymptotic(&a, t) / (2.0 * m * m), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn zeno_suppression() {
        // The growth rate vanishes as the collapse rate diverges.
        let slow = CosmoAnalytic::new(1.0, 0.5, 2.0).asymptotic_slope();
        let watched = CosmoAnalytic::new(1.0, 0.5, 1e6).asymptotic_slope();
        assert!(watched < 1e-5 * slow);
        assert!(watched < 1e-6);
    }

    #[test]
    fn ensemble_of_identical_records() {
        let p = ModelParams::new(0.0, 0.0, 1.0, 8, 4).unwrap();
        let init = H0InitialState::two_level(0, 0.5, 1, 0.5).unwrap();
        let opts = SimOptions::new(20, 0.1, Scheme::Physical, 7)
            .with_stride(10)
            .with_initial(init);
        let rec = simulate_trajectory(&p, &opts).unwrap();
        let records = vec![rec.clone(); 120];
        let stats = ensemble_spread(&records, Scheme::Physical).unwrap();
        for j in 0..stats.times.len() {
            assert_abs_diff_eq!(stats.mean_n_bar[j], rec.mean_n[j], epsilon = 1e-14);
            assert_abs_diff_eq!(stats.sigma2_bar[j], rec.sigma2[j], epsilon = 1e-12);
            assert_abs_diff_eq!(stats.mean_n_stderr[j], 0.0, epsilon = 1e-14);
            assert_abs_diff_eq!(stats.ess[j], 120.0, epsilon = 1e-9);
        }
        assert!(stats.inequality_chain_ok());
    }

    #[test]
    fn ensemble_matches_h0_spread_oracle() {
        // Fully collapsed two-component state at λt = 100: the ensemble
        // spread agrees with the closed-form oracle (both ≈ 0).
        let lambda = 1.0;
        let p = ModelParams::new(0.0, 0.0, lambda, 8, 2).unwrap();
        let init = H0InitialState::two_level(0, 0.5, 1, 0.5).unwrap();
        let n_traj = 400usize;
        let records: Vec<TrajectoryRecord> = (0..n_traj)
            .map(|i| {
                let opts = SimOptions::new(400, 0.25, Scheme::Physical, 99)
                    .with_stride(400)
                    .with_trajectory(i as u64)
                    .with_initial(init.clone());
                simulate_trajectory(&p, &opts).unwrap()
            })
            .collect();
        let stats = ensemble_spread(&records, Scheme::Physical).unwrap();
        let t = 100.0;
        let oracle = crate::exact::spread_h0(&init, lambda, t);
        let j = stats.times.len() - 1;
        let band = 3.0 * stats.sigma2_stderr[j] + 1e-6;
        assert!(
            (stats.sigma2_bar[j] - oracle.sigma2_bar).abs() <= band,
            "sigma2_bar = {}, oracle = {}",
            stats.sigma2_bar[j],
            oracle.sigma2_bar
        );
        assert!(stats.inequality_chain_ok());
    }

    #[test]
    fn fit_c_exact_synthetic() {
        let times: Vec<f64> = (0..12).map(|i| 10.0 + 2.0 * i as f64).collect();
        let mean_n_bar: Vec<f64> = times.iter().map(|t| 0.3 * t).collect();
        let sigma2_bar: Vec<f64> = mean_n_bar.iter().map(|m| 0.7 * m).collect();
        let n = times.len();
        let stats = EnsembleStats {
            scheme: Scheme::Physical,
            n_traj: 1000,
            times,
            mean_n_bar,
            mean_n_stderr: vec![0.0; n],
            mean_n2_bar: vec![0.0; n],
            mean_n2_stderr: vec![0.0; n],
            ratio_term: vec![0.0; n],
            ratio_stderr: vec![0.0; n],
            sigma2_bar,
            sigma2_stderr: vec![0.0; n],
            ess: vec![1000.0; n],
            warnings: Vec::new(),
        };
        let fit = fit_c(&stats, 1.0).unwrap();
        assert_abs_diff_eq!(fit.c, 0.7, epsilon = 1e-12);
        assert!(!fit.poor_fit);
    }

    #[test]
    fn fit_c_needs_late_window() {
        let times: Vec<f64> = (0..5).map(|i| i as f64).collect();
        let n = times.len();
        let stats = EnsembleStats {
            scheme: Scheme::Physical,
            n_traj: 1000,
            times,
            mean_n_bar: vec![1.0; n],
            mean_n_stderr: vec![0.0; n],
            mean_n2_bar: vec![0.0; n],
            mean_n2_stderr: vec![0.0; n],
            ratio_term: vec![0.0; n],
            ratio_stderr: vec![0.0; n],
            sigma2_bar: vec![0.5; n],
            sigma2_stderr: vec![0.0; n],
            ess: vec![1000.0; n],
            warnings: Vec::new(),
        };
        assert!(fit_c(&stats, 1.0).is_err());
    }

    #[test]
    fn delta_r_anchors() {
        // C = 1 for a 10-billion-light-year universe lands near 4e-5 m
        // (order-of-magnitude figure, within a factor 2).
        let dr = delta_r_estimate(1.0, TEN_BILLION_LIGHT_YEARS_M);
        assert!(dr > 2e-5 && dr < 8e-5, "ΔR = {dr}");
        assert_eq!(delta_r_estimate(0.0, 1.0), 0.0);
        // Sixth-root scaling: 64× the coefficient doubles the estimate.
        assert_relative_eq!(
            delta_r_estimate(64.0, TEN_BILLION_LIGHT_YEARS_M) / dr,
            2.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn replay_is_deterministic() {
        let lambda = 1.0;
        let p = ModelParams::new(1.0, 0.5, lambda, 8, 32).unwrap();
        let path = crate::noise::sample_raw(100, 0.05, lambda, 77);
        let opts = SimOptions::new(100, 0.05, Scheme::Raw, 77).with_stride(25);
        let direct = {
            let mut o = opts.clone();
            o.master_seed = 123; // replay ignores the generator entirely
            replay_trajectory(&p, &o, &path).unwrap()
        };
        let again = replay_trajectory(&p, &opts, &path).unwrap();
        assert_eq!(direct.mean_n, again.mean_n);
        assert_eq!(direct.log_norm2, again.log_norm2);
    }

    #[test]
    fn bad_record_stride_rejected() {
        let p = ModelParams::new(0.0, 0.0, 1.0, 8, 4).unwrap();
        let mut opts = SimOptions::new(10, 0.1, Scheme::Physical, 1);
        opts.record_stride = 3; // does not divide 10
        assert!(matches!(
            simulate_trajectory(&p, &opts),
            Err(Error::InvalidParams(_))
        ));
    }

    #[test]
    fn sigma2_never_meaningfully_negative() {
        let p = ModelParams::new(1.0, 0.5, 2.0, 8, 48).unwrap();
        for traj in 0..8u64 {
            let opts = SimOptions::new(250, 0.02, Scheme::Physical, 5)
                .with_stride(50)
                .with_trajectory(traj);
            let rec = simulate_trajectory(&p, &opts).unwrap();
            for (&s, &m2) in rec.sigma2.iter().zip(&rec.mean_n2) {
                assert!(s >= -1e-12 * m2.max(1.0), "sigma2 = {s}");
            }
        }
    }

    #[test]
    fn trajectory_csv_format() {
        let p = ModelParams::new(0.0, 0.0, 1.0, 8, 4).unwrap();
        let init = H0InitialState::two_level(0, 0.5, 1, 0.5).unwrap();
        let opts = SimOptions::new(10, 0.5, Scheme::Physical, 4)
            .with_stride(5)
            .with_initial(init);
        let rec = simulate_trajectory(&p, &opts).unwrap();
        let mut buf = Vec::new();
        rec.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,log_norm2,meanN,meanN2,sigma2"));
        assert_eq!(lines.count(), 3); // t = 0, 2.5, 5.0
    }
}
