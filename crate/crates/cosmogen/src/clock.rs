//! The prime-time clock extension: an independent second collapse sector
//! (primed constants, its own noise record) evolved jointly with space.
//! The joint state factorizes exactly — there is no coupling term — so the
//! clock reuses the growth machinery wholesale and the interesting questions
//! are statistical: factorization checks, the size-age correlation, and the
//! clock-uncertainty estimate.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::constants::PLANCK_TIME_S;
use crate::cosmo::{self, EnsembleStats, FitC, SimOptions, TrajectoryRecord};
use crate::fock::ModelParams;
use crate::noise::StreamLabel;
use crate::stats;
use crate::{Error, Result};

/// Primed constants of the clock sector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClockParams {
    pub epsilon_p: f64,
    pub g_p: f64,
    pub lambda_p: f64,
}

impl ClockParams {
    pub fn new(epsilon_p: f64, g_p: f64, lambda_p: f64) -> Result<Self> {
        let c = ClockParams {
            epsilon_p,
            g_p,
            lambda_p,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.epsilon_p.is_finite() || !self.g_p.is_finite() || !self.lambda_p.is_finite() {
            return Err(Error::InvalidParams("non-finite clock constant".into()));
        }
        if self.lambda_p < 0.0 {
            return Err(Error::InvalidParams("lambda' must be >= 0".into()));
        }
        Ok(())
    }

    /// The clock sector as ordinary model constants with its own truncation.
    pub fn to_model_params(&self, k_max: usize, n_max: usize) -> Result<ModelParams> {
        ModelParams::new(self.epsilon_p, self.g_p, self.lambda_p, k_max, n_max)
    }
}

/// One joint trajectory: the space record and the clock record (mean_n
/// reinterpreted as the mean prime-instant M'), generated from independent
/// noise streams of the same master seed.
#[derive(Debug, Clone)]
pub struct JointRecord {
    pub space: TrajectoryRecord,
    pub clock: TrajectoryRecord,
}

/// Run the two uncoupled sectors with independent derived streams; the
/// joint probability factorizes exactly.
pub fn simulate_joint(
    space: &ModelParams,
    clock: &ModelParams,
    opts: &SimOptions,
) -> Result<JointRecord> {
    let space_opts = opts.clone().with_label(StreamLabel::Space);
    let mut clock_opts = opts.clone().with_label(StreamLabel::Clock);
    clock_opts.initial = None; // the clock always starts at |0⟩
    Ok(JointRecord {
        space: cosmo::simulate_trajectory(space, &space_opts)?,
        clock: cosmo::simulate_trajectory(clock, &clock_opts)?,
    })
}

/// Late-time spread coefficient of the clock sector, σ̄²_{M'} = C' ⟨M'⟩-bar.
pub fn clock_calibration(stats: &EnsembleStats, lambda_p: f64) -> Result<FitC> {
    cosmo::fit_c(stats, lambda_p)
}

/// Clock-uncertainty estimate ΔT' = C'^{1/2} √(T' τ) with τ the Planck time.
pub fn delta_t_estimate(c_prime: f64, t_age_s: f64) -> f64 {
    assert!(c_prime >= 0.0 && t_age_s > 0.0);
    c_prime.sqrt() * (t_age_s * PLANCK_TIME_S).sqrt()
}

/// Per-time-slice size-age pairs with the fitted linear relation between
/// universe size and clock reading and scatter bands from each sector's
/// spread.
#[derive(Debug, Clone)]
pub struct CorrelationReport {
    pub times: Vec<f64>,
    pub mean_n_bar: Vec<f64>,
    pub mean_mp_bar: Vec<f64>,
    /// √σ̄² of each sector at each slice.
    pub band_space: Vec<f64>,
    pub band_clock: Vec<f64>,
    /// Size against clock reading, y = intercept + slope · x.
    pub slope: f64,
    pub slope_err: f64,
    pub intercept: f64,
    pub intercept_err: f64,
}

impl CorrelationReport {
    /// CSV rows `t,meanN_bar,meanMp_bar,slope,slope_err` (the fit columns
    /// repeat the global values).
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,meanN_bar,meanMp_bar,slope,slope_err")?;
        for j in 0..self.times.len() {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.times[j], self.mean_n_bar[j], self.mean_mp_bar[j], self.slope, self.slope_err
            )?;
        }
        Ok(())
    }
}

/// Regress the ensemble mean size against the ensemble mean clock reading
/// over the late-time window λ't ≥ 20 (both sectors asymptotically linear
/// in t there, so the relation is linear with intercept consistent with 0).
pub fn size_age_correlation(
    space: &EnsembleStats,
    clock: &EnsembleStats,
    lambda_p: f64,
) -> Result<CorrelationReport> {
    if space.times != clock.times {
        return Err(Error::Domain("sector time grids differ".into()));
    }
    let mut times = Vec::new();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut band_space = Vec::new();
    let mut band_clock = Vec::new();
    for j in 0..space.times.len() {
        if lambda_p * space.times[j] >= 20.0 {
            times.push(space.times[j]);
            ys.push(space.mean_n_bar[j]);
            xs.push(clock.mean_n_bar[j]);
            band_space.push(space.sigma2_bar[j].max(0.0).sqrt());
            band_clock.push(clock.sigma2_bar[j].max(0.0).sqrt());
        }
    }
    if xs.len() < 3 {
        return Err(Error::Domain(
            "size-age regression needs >= 3 late-time slices".into(),
        ));
    }
    let fit = stats::linear_fit(&xs, &ys)?;
    Ok(CorrelationReport {
        times,
        mean_n_bar: ys,
        mean_mp_bar: xs,
        band_space,
        band_clock,
        slope: fit.slope,
        slope_err: fit.slope_stderr,
        intercept: fit.intercept,
        intercept_err: fit.intercept_stderr,
    })
}

/// Ensemble correlation between a space moment and a clock moment at the
/// final recorded time, with its ~1/√M null standard error. Independent
/// noise streams make the joint measure factorize, so this should vanish.
pub fn factorization_correlation(
    records: &[JointRecord],
    moment: fn(&TrajectoryRecord, usize) -> f64,
) -> (f64, f64) {
    let m = records.len();
    assert!(m >= 3);
    let j = records[0].space.times.len() - 1;
    let xs: Vec<f64> = records.iter().map(|r| moment(&r.space, j)).collect();
    let ys: Vec<f64> = records.iter().map(|r| moment(&r.clock, j)).collect();
    let corr = stats::correlation(&xs, &ys);
    (corr, 1.0 / (m as f64).sqrt())
}
